//! The three censor estimators (adversarial classifier, density-ratio MI
//! estimator, Wasserstein-1 critic) and the three censoring modes.
//!
//! Sign convention, unified across methods: the task model always minimizes
//! `lambda * penalty` to enforce independence, and the censor's own update
//! always improves its estimate.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::nn::{
    one_hot, softmax_cross_entropy, spectral_backward, spectral_normalize, AdamWState, Activation,
    Layer, LayerGrads, NetGrads, Network, RealMatrix, RngStream, SpectralNormCache,
    SpectralNormState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CensorMode {
    /// Enforce Z independent of S.
    Marginal,
    /// Enforce Z independent of S given Y.
    Conditional,
    /// Enforce Z independent of S while maximizing dependence of W on S.
    Complementary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CensorMethod {
    Adversarial,
    DensityRatio,
    Wasserstein,
}

/// Uniform random permutation of the nuisance labels within a batch; the
/// permuted pairing approximates samples from the product of marginals.
pub fn permute_nuisance(s: &[usize], rng: &mut RngStream) -> Result<Vec<usize>, Error> {
    if s.len() < 2 {
        return Err(Error::Config(
            "product-of-marginals permutation needs a batch of >= 2".into(),
        ));
    }
    let idx = rng.permutation(s.len());
    Ok(idx.into_iter().map(|i| s[i]).collect())
}

/// Complementary objective: the task model minimizes
/// `lambda * (penalty_z - penalty_w)`, driving Z away from S and W toward S.
pub fn complementary_combine(penalty_z: f64, penalty_w: f64) -> f64 {
    penalty_z - penalty_w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensorSpec {
    pub mode: CensorMode,
    pub method: CensorMethod,
    /// Feature columns fed to the censor (K, or K/2 in complementary mode).
    pub feature_dim: usize,
    pub n_nuisance: usize,
    pub n_classes: usize,
    pub hidden: Vec<usize>,
    /// Power iterations per normalization (Wasserstein only).
    pub power_iterations: usize,
}

impl CensorSpec {
    pub fn new(
        mode: CensorMode,
        method: CensorMethod,
        feature_dim: usize,
        n_nuisance: usize,
        n_classes: usize,
    ) -> Self {
        CensorSpec {
            mode,
            method,
            feature_dim,
            n_nuisance,
            n_classes,
            hidden: vec![128, 128],
            power_iterations: 1,
        }
    }

    fn takes_label_input(&self) -> bool {
        self.mode == CensorMode::Conditional
    }

    fn input_dim(&self) -> usize {
        let label = if self.takes_label_input() {
            self.n_classes
        } else {
            0
        };
        match self.method {
            // q(S | Z [, Y]): features plus optional one-hot label.
            CensorMethod::Adversarial => self.feature_dim + label,
            // Scalar J(Z [, Y], S): features, optional label, one-hot
            // nuisance.
            CensorMethod::DensityRatio | CensorMethod::Wasserstein => {
                self.feature_dim + label + self.n_nuisance
            }
        }
    }

    fn output_dim(&self) -> usize {
        match self.method {
            CensorMethod::Adversarial => self.n_nuisance,
            CensorMethod::DensityRatio | CensorMethod::Wasserstein => 1,
        }
    }
}

/// The secondary network J whose role (adversary / ratio estimator / critic)
/// depends on the configured method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensorModel {
    pub spec: CensorSpec,
    pub net: Network,
    /// One state per dense layer; present only for the Wasserstein critic.
    pub spectral: Option<Vec<SpectralNormState>>,
}

impl CensorModel {
    pub fn new(spec: CensorSpec, rng: &mut RngStream) -> Result<Self, Error> {
        if spec.n_nuisance < 2 {
            return Err(Error::Config("censoring needs >= 2 nuisance values".into()));
        }
        if spec.mode == CensorMode::Conditional && spec.n_classes < 2 {
            return Err(Error::Config(
                "conditional censoring needs task labels".into(),
            ));
        }
        let mut dims = vec![spec.input_dim()];
        dims.extend(&spec.hidden);
        dims.push(spec.output_dim());
        let net = Network::mlp(&dims, Activation::Identity, rng);
        let spectral = if spec.method == CensorMethod::Wasserstein {
            let states = net
                .layers
                .iter()
                .map(|l| match l {
                    Layer::Dense(d) => {
                        Ok(SpectralNormState::new(d.out_dim(), spec.power_iterations, rng))
                    }
                    _ => Err(Error::Config("critic must be an MLP".into())),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Some(states)
        } else {
            None
        };
        Ok(CensorModel {
            spec,
            net,
            spectral,
        })
    }

    fn check_labels(&self, y: Option<&[usize]>, n_rows: usize) -> Result<(), Error> {
        match (self.spec.takes_label_input(), y) {
            (true, None) => Err(Error::Config(
                "conditional censoring requires task labels at the censor input".into(),
            )),
            (false, Some(_)) => Err(Error::Config(
                "task labels passed to a non-conditional censor".into(),
            )),
            (true, Some(labels)) if labels.len() != n_rows => Err(Error::Shape(format!(
                "{} labels for batch of {}",
                labels.len(),
                n_rows
            ))),
            _ => Ok(()),
        }
    }

    /// `[features | one-hot y (conditional) | one-hot s (scalar methods)]`.
    fn assemble(
        &self,
        features: &RealMatrix,
        y: Option<&[usize]>,
        s: Option<&[usize]>,
    ) -> Result<RealMatrix, Error> {
        if features.cols() != self.spec.feature_dim {
            return Err(Error::Shape(format!(
                "censor expects {} feature cols, got {}",
                self.spec.feature_dim,
                features.cols()
            )));
        }
        let mut parts: Vec<RealMatrix> = vec![features.clone()];
        if let Some(labels) = y {
            parts.push(one_hot(labels, self.spec.n_classes)?);
        }
        if let Some(nuisance) = s {
            parts.push(one_hot(nuisance, self.spec.n_nuisance)?);
        }
        let refs: Vec<&RealMatrix> = parts.iter().collect();
        RealMatrix::hconcat(&refs)
    }

    fn require_method(&self, method: CensorMethod) -> Result<(), Error> {
        if self.spec.method != method {
            return Err(Error::Config(format!(
                "operation requires {:?} method, censor is configured as {:?}",
                method, self.spec.method
            )));
        }
        Ok(())
    }

    // ----- adversarial classifier -----

    /// Penalty for the task update: minus the adversary's mean CE. The task
    /// model minimizing `lambda * penalty` maximizes the adversary's CE.
    /// Also returns d(penalty)/d(features).
    pub fn adv_censor_penalty(
        &self,
        features: &RealMatrix,
        s: &[usize],
        y: Option<&[usize]>,
    ) -> Result<(f64, RealMatrix), Error> {
        self.require_method(CensorMethod::Adversarial)?;
        self.check_labels(y, features.rows())?;
        let input = self.assemble(features, y, None)?;
        let (logits, cache) = self.net.forward(&input)?;
        let (ce, dlogits) = softmax_cross_entropy(&logits, s)?;
        let (_, mut dinput) = self.net.backward(&cache, &dlogits)?;
        dinput.scale(-1.0);
        Ok((-ce, dinput.col_slice(0, self.spec.feature_dim)))
    }

    /// The adversary's own training loss (mean CE; it learns to predict s)
    /// with gradients for its parameters. Features are treated as constant.
    pub fn adv_train_loss(
        &self,
        features: &RealMatrix,
        s: &[usize],
        y: Option<&[usize]>,
    ) -> Result<(f64, NetGrads), Error> {
        self.require_method(CensorMethod::Adversarial)?;
        self.check_labels(y, features.rows())?;
        let input = self.assemble(features, y, None)?;
        let (logits, cache) = self.net.forward(&input)?;
        let (ce, dlogits) = softmax_cross_entropy(&logits, s)?;
        let (grads, _) = self.net.backward(&cache, &dlogits)?;
        Ok((ce, grads))
    }

    // ----- density-ratio estimator -----

    /// Training loss for the ratio estimator: mean softplus(-J) over joint
    /// pairs plus mean softplus(J) over permuted pairs.
    pub fn dre_train_loss(
        &self,
        features: &RealMatrix,
        s: &[usize],
        s_perm: &[usize],
        y: Option<&[usize]>,
    ) -> Result<(f64, NetGrads), Error> {
        self.require_method(CensorMethod::DensityRatio)?;
        self.check_labels(y, features.rows())?;
        if s_perm.len() != s.len() {
            return Err(Error::Shape(format!(
                "{} permuted labels for batch of {}",
                s_perm.len(),
                s.len()
            )));
        }
        let n = features.rows() as f64;
        let mut total = 0.0;
        let mut grads: Option<NetGrads> = None;
        for (labels, sign) in [(s, 1.0), (s_perm, -1.0)] {
            let input = self.assemble(features, y, Some(labels))?;
            let (out, cache) = self.net.forward(&input)?;
            let logits: Vec<f64> = (0..out.rows()).map(|r| out.get(r, 0)).collect();
            let signs = vec![sign; logits.len()];
            let (loss, dlogit) = crate::nn::logistic_terms(&logits, &signs)?;
            total += loss;
            let mut dout = RealMatrix::zeros(out.rows(), 1);
            for (r, g) in dlogit.iter().enumerate() {
                dout.set(r, 0, *g);
            }
            let (g, _) = self.net.backward(&cache, &dout)?;
            match &mut grads {
                None => grads = Some(g),
                Some(acc) => acc.add_assign(&g)?,
            }
        }
        let _ = n;
        Ok((total, grads.unwrap()))
    }

    /// MI estimate used as the task penalty: mean of J over joint pairs,
    /// with d(penalty)/d(features).
    pub fn dre_censor_penalty(
        &self,
        features: &RealMatrix,
        s: &[usize],
        y: Option<&[usize]>,
    ) -> Result<(f64, RealMatrix), Error> {
        self.require_method(CensorMethod::DensityRatio)?;
        self.check_labels(y, features.rows())?;
        let input = self.assemble(features, y, Some(s))?;
        let (out, cache) = self.net.forward(&input)?;
        let n = out.rows() as f64;
        let estimate = (0..out.rows()).map(|r| out.get(r, 0)).sum::<f64>() / n;
        let mut dout = RealMatrix::zeros(out.rows(), 1);
        for r in 0..out.rows() {
            dout.set(r, 0, 1.0 / n);
        }
        let (_, dinput) = self.net.backward(&cache, &dout)?;
        Ok((estimate, dinput.col_slice(0, self.spec.feature_dim)))
    }

    // ----- Wasserstein critic -----

    fn require_spectral(&self) -> Result<(), Error> {
        if self.spectral.is_none() {
            return Err(Error::Config(
                "Wasserstein critic without spectral normalization state".into(),
            ));
        }
        Ok(())
    }

    /// Clone of the critic with every dense weight spectrally normalized;
    /// persistent power-iteration vectors advance in place.
    fn normalized_net(&mut self) -> Result<(Network, Vec<SpectralNormCache>), Error> {
        self.require_spectral()?;
        let states = self.spectral.as_mut().unwrap();
        let mut layers = Vec::with_capacity(self.net.layers.len());
        let mut caches = Vec::with_capacity(states.len());
        for (layer, state) in self.net.layers.iter().zip(states.iter_mut()) {
            match layer {
                Layer::Dense(d) => {
                    let (normalized, cache) = spectral_normalize(&d.weights, state)?;
                    let mut nd = d.clone();
                    nd.weights = normalized;
                    layers.push(Layer::Dense(nd));
                    caches.push(cache);
                }
                other => layers.push(other.clone()),
            }
        }
        Ok((Network::new(layers), caches))
    }

    fn map_grads_to_raw(
        normalized: &Network,
        grads: NetGrads,
        caches: &[SpectralNormCache],
    ) -> NetGrads {
        let mut out = grads;
        let mut ci = 0;
        for (lg, layer) in out.layers.iter_mut().zip(&normalized.layers) {
            if let (LayerGrads::Dense { dw, .. }, Layer::Dense(d)) = (lg, layer) {
                *dw = spectral_backward(dw, &d.weights, &caches[ci]);
                ci += 1;
            }
        }
        out
    }

    /// Dual estimate `mean J(joint) - mean J(permuted)` with feature
    /// gradients; every critic layer is normalized before the forward pass.
    pub fn wasserstein_censor_penalty(
        &mut self,
        features: &RealMatrix,
        s: &[usize],
        s_perm: &[usize],
        y: Option<&[usize]>,
    ) -> Result<(f64, RealMatrix), Error> {
        self.require_method(CensorMethod::Wasserstein)?;
        self.check_labels(y, features.rows())?;
        let (net, _caches) = self.normalized_net()?;
        let n = features.rows() as f64;
        let mut penalty = 0.0;
        let mut dfeat = RealMatrix::zeros(features.rows(), self.spec.feature_dim);
        for (labels, sign) in [(s, 1.0), (s_perm, -1.0)] {
            let input = self.assemble(features, y, Some(labels))?;
            let (out, cache) = net.forward(&input)?;
            penalty += sign * (0..out.rows()).map(|r| out.get(r, 0)).sum::<f64>() / n;
            let mut dout = RealMatrix::zeros(out.rows(), 1);
            for r in 0..out.rows() {
                dout.set(r, 0, sign / n);
            }
            let (_, dinput) = net.backward(&cache, &dout)?;
            dfeat.add_assign(&dinput.col_slice(0, self.spec.feature_dim))?;
        }
        Ok((penalty, dfeat))
    }

    /// Critic training loss: the dual estimate with the sign flipped, with
    /// gradients mapped back to the raw (unnormalized) weights.
    pub fn wasserstein_train_loss(
        &mut self,
        features: &RealMatrix,
        s: &[usize],
        s_perm: &[usize],
        y: Option<&[usize]>,
    ) -> Result<(f64, NetGrads), Error> {
        self.require_method(CensorMethod::Wasserstein)?;
        self.check_labels(y, features.rows())?;
        let (net, caches) = self.normalized_net()?;
        let n = features.rows() as f64;
        let mut loss = 0.0;
        let mut grads: Option<NetGrads> = None;
        // loss = -(mean joint - mean permuted)
        for (labels, sign) in [(s, -1.0), (s_perm, 1.0)] {
            let input = self.assemble(features, y, Some(labels))?;
            let (out, cache) = net.forward(&input)?;
            loss += sign * (0..out.rows()).map(|r| out.get(r, 0)).sum::<f64>() / n;
            let mut dout = RealMatrix::zeros(out.rows(), 1);
            for r in 0..out.rows() {
                dout.set(r, 0, sign / n);
            }
            let (g, _) = net.backward(&cache, &dout)?;
            match &mut grads {
                None => grads = Some(g),
                Some(acc) => acc.add_assign(&g)?,
            }
        }
        let grads = Self::map_grads_to_raw(&net, grads.unwrap(), &caches);
        Ok((loss, grads))
    }

    // ----- unified dispatch used by the trainer -----

    /// One censor update on its own objective; returns the train loss.
    /// Features are treated as constant.
    pub fn train_step(
        &mut self,
        features: &RealMatrix,
        s: &[usize],
        y: Option<&[usize]>,
        optimizer: &mut AdamWState,
        rng: &mut RngStream,
    ) -> Result<f64, Error> {
        let (loss, grads) = match self.spec.method {
            CensorMethod::Adversarial => self.adv_train_loss(features, s, y)?,
            CensorMethod::DensityRatio => {
                let s_perm = permute_nuisance(s, rng)?;
                self.dre_train_loss(features, s, &s_perm, y)?
            }
            CensorMethod::Wasserstein => {
                let s_perm = permute_nuisance(s, rng)?;
                self.wasserstein_train_loss(features, s, &s_perm, y)?
            }
        };
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("censor train loss {}", loss)));
        }
        let grad_slices = Network::grad_slices(&grads);
        let mut params = self.net.param_slices_mut();
        optimizer.step(&mut params, &grad_slices)?;
        Ok(loss)
    }

    /// Penalty and feature gradient for the task update; censor parameters
    /// are frozen.
    pub fn penalty(
        &mut self,
        features: &RealMatrix,
        s: &[usize],
        y: Option<&[usize]>,
        rng: &mut RngStream,
    ) -> Result<(f64, RealMatrix), Error> {
        match self.spec.method {
            CensorMethod::Adversarial => self.adv_censor_penalty(features, s, y),
            CensorMethod::DensityRatio => self.dre_censor_penalty(features, s, y),
            CensorMethod::Wasserstein => {
                let s_perm = permute_nuisance(s, rng)?;
                self.wasserstein_censor_penalty(features, s, &s_perm, y)
            }
        }
    }
}

/// Density-ratio MI estimator over paired continuous samples. The scalar
/// network J reads `[a | b]` rows; training discriminates joint pairings
/// from permuted ones, and at the optimum `mean J(joint)` is the mutual
/// information in nats. This is the same objective `CensorModel` uses with a
/// discrete nuisance, generalized to an arbitrary second variable.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRatioEstimator {
    pub net: Network,
    dim_a: usize,
    dim_b: usize,
}

impl PairRatioEstimator {
    pub fn new(dim_a: usize, dim_b: usize, hidden: &[usize], rng: &mut RngStream) -> Self {
        let mut dims = vec![dim_a + dim_b];
        dims.extend_from_slice(hidden);
        dims.push(1);
        PairRatioEstimator {
            net: Network::mlp(&dims, Activation::Identity, rng),
            dim_a,
            dim_b,
        }
    }

    fn check_pair(&self, a: &RealMatrix, b: &RealMatrix) -> Result<(), Error> {
        if a.rows() != b.rows() || a.cols() != self.dim_a || b.cols() != self.dim_b {
            return Err(Error::Shape(format!(
                "pair batch {}x{} / {}x{} vs estimator dims {} + {}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols(),
                self.dim_a,
                self.dim_b
            )));
        }
        Ok(())
    }

    fn scalar_logits(out: &RealMatrix) -> Vec<f64> {
        (0..out.rows()).map(|r| out.get(r, 0)).collect()
    }

    /// One update on `mean softplus(-J(joint)) + mean softplus(J(permuted))`;
    /// the permutation of `b` rows is drawn from `rng`. Returns the loss.
    pub fn train_step(
        &mut self,
        a: &RealMatrix,
        b: &RealMatrix,
        optimizer: &mut AdamWState,
        rng: &mut RngStream,
    ) -> Result<f64, Error> {
        self.check_pair(a, b)?;
        if a.rows() < 2 {
            return Err(Error::Config(
                "product-of-marginals permutation needs a batch of >= 2".into(),
            ));
        }
        let perm = rng.permutation(a.rows());
        let b_perm = b.select_rows(&perm);
        let mut total = 0.0;
        let mut grads: Option<NetGrads> = None;
        for (rhs, sign) in [(b, 1.0), (&b_perm, -1.0)] {
            let input = RealMatrix::hconcat(&[a, rhs])?;
            let (out, cache) = self.net.forward(&input)?;
            let logits = Self::scalar_logits(&out);
            let signs = vec![sign; logits.len()];
            let (loss, dlogit) = crate::nn::logistic_terms(&logits, &signs)?;
            total += loss;
            let mut dout = RealMatrix::zeros(out.rows(), 1);
            for (r, g) in dlogit.iter().enumerate() {
                dout.set(r, 0, *g);
            }
            let (g, _) = self.net.backward(&cache, &dout)?;
            match &mut grads {
                None => grads = Some(g),
                Some(acc) => acc.add_assign(&g)?,
            }
        }
        if !total.is_finite() {
            return Err(Error::NonFinite(format!("ratio estimator loss {}", total)));
        }
        let grads = grads.unwrap();
        let grad_slices = Network::grad_slices(&grads);
        let mut params = self.net.param_slices_mut();
        optimizer.step(&mut params, &grad_slices)?;
        Ok(total)
    }

    /// MI estimate: mean of J over jointly paired rows.
    pub fn estimate(&self, a: &RealMatrix, b: &RealMatrix) -> Result<f64, Error> {
        self.check_pair(a, b)?;
        let input = RealMatrix::hconcat(&[a, b])?;
        let (out, _) = self.net.forward(&input)?;
        let n = out.rows() as f64;
        Ok(Self::scalar_logits(&out).iter().sum::<f64>() / n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{AdamWConfig, DenseLayer};

    fn zero_net(in_dim: usize, out_dim: usize, bias: Vec<f64>) -> Network {
        Network::new(vec![Layer::Dense(DenseLayer {
            weights: RealMatrix::zeros(out_dim, in_dim),
            bias,
            activation: Activation::Identity,
        })])
    }

    fn adv_model(feature_dim: usize, n_nuisance: usize, bias: Vec<f64>) -> CensorModel {
        let spec = CensorSpec::new(
            CensorMode::Marginal,
            CensorMethod::Adversarial,
            feature_dim,
            n_nuisance,
            2,
        );
        CensorModel {
            net: zero_net(spec.input_dim(), spec.output_dim(), bias),
            spec,
            spectral: None,
        }
    }

    fn dre_model(feature_dim: usize, n_nuisance: usize, net: Network) -> CensorModel {
        let spec = CensorSpec::new(
            CensorMode::Marginal,
            CensorMethod::DensityRatio,
            feature_dim,
            n_nuisance,
            2,
        );
        CensorModel {
            spec,
            net,
            spectral: None,
        }
    }

    #[test]
    fn permute_preserves_multiset_and_rejects_singleton() {
        let mut rng = RngStream::new(0, 0);
        let s = vec![0, 1, 1, 2, 3, 3, 3];
        let p = permute_nuisance(&s, &mut rng).unwrap();
        let mut a = s.clone();
        let mut b = p.clone();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
        assert!(permute_nuisance(&[0], &mut rng).is_err());
    }

    #[test]
    fn permute_fixed_point_rate_matches_uniform() {
        let mut rng = RngStream::new(5, 0);
        let batch: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let mut hits = 0usize;
        let mut total = 0usize;
        for _ in 0..1000 {
            let p = permute_nuisance(&batch, &mut rng).unwrap();
            hits += p.iter().zip(&batch).filter(|(a, b)| a == b).count();
            total += batch.len();
        }
        let rate = hits as f64 / total as f64;
        assert!((rate - 0.25).abs() < 0.01, "{rate}");
    }

    #[test]
    fn adversarial_uniform_prediction_penalty() {
        let model = adv_model(2, 4, vec![0.0; 4]);
        let features = RealMatrix::zeros(8, 2);
        let s = vec![0, 1, 2, 3, 0, 1, 2, 3];
        let (penalty, _) = model.adv_censor_penalty(&features, &s, None).unwrap();
        assert!((penalty + 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn adversarial_confident_prediction_penalty_near_zero() {
        let model = adv_model(1, 4, vec![1000.0, 0.0, 0.0, 0.0]);
        let features = RealMatrix::zeros(5, 1);
        let s = vec![0; 5];
        let (penalty, _) = model.adv_censor_penalty(&features, &s, None).unwrap();
        assert!(penalty.abs() < 1e-12);
    }

    #[test]
    fn adversarial_fixed_probability_penalty() {
        // softmax(ln p) = p when p sums to one
        let bias: Vec<f64> = [0.7, 0.1, 0.1, 0.1].iter().map(|p: &f64| p.ln()).collect();
        let model = adv_model(1, 4, bias);
        let features = RealMatrix::zeros(6, 1);
        let s = vec![0; 6];
        let (penalty, _) = model.adv_censor_penalty(&features, &s, None).unwrap();
        assert!((penalty - 0.7f64.ln()).abs() < 1e-12);
        assert!((penalty + 0.356675).abs() < 1e-6);
    }

    #[test]
    fn adversarial_uniform_train_loss_is_ln_card() {
        let model = adv_model(1, 4, vec![0.0; 4]);
        let features = RealMatrix::zeros(4, 1);
        let s = vec![0, 1, 2, 3];
        let (loss, _) = model.adv_train_loss(&features, &s, None).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mode_method_mismatch_is_config_error() {
        let model = adv_model(1, 4, vec![0.0; 4]);
        let features = RealMatrix::zeros(4, 1);
        let s = vec![0, 1, 2, 3];
        let perm = vec![1, 0, 3, 2];
        assert!(model.dre_censor_penalty(&features, &s, None).is_err());
        assert!(model
            .adv_censor_penalty(&features, &s, Some(&s.clone()))
            .is_err());
        let mut m = model;
        assert!(m
            .wasserstein_censor_penalty(&features, &s, &perm, None)
            .is_err());
    }

    #[test]
    fn dre_zero_net_loss_and_penalty() {
        let spec_dim = 1 + 2; // feature + one-hot s
        let model = dre_model(1, 2, zero_net(spec_dim, 1, vec![0.0]));
        let features = RealMatrix::zeros(4, 1);
        let s = vec![0, 1, 0, 1];
        let perm = vec![1, 0, 1, 0];
        let (loss, _) = model.dre_train_loss(&features, &s, &perm, None).unwrap();
        assert!((loss - 2.0 * 2f64.ln()).abs() < 1e-12);
        let (penalty, _) = model.dre_censor_penalty(&features, &s, None).unwrap();
        assert!(penalty.abs() < 1e-12);
    }

    /// Exact log-ratio discriminator for the deterministic binary case
    /// z = s with uniform s: J(z, s) = ln 2 on matched pairs, -m on
    /// mismatched pairs. The match indicator is |z - s1|, built from two
    /// relu units (a plain linear map cannot express it).
    fn exact_ratio_net(m: f64) -> Network {
        let c = 2f64.ln();
        let drop = -(m + c);
        Network::new(vec![
            Layer::Dense(DenseLayer {
                // inputs [z, s0, s1]: h = (relu(z - s1), relu(s1 - z))
                weights: RealMatrix::from_rows(&[vec![1.0, 0.0, -1.0], vec![-1.0, 0.0, 1.0]])
                    .unwrap(),
                bias: vec![0.0, 0.0],
                activation: Activation::Relu,
            }),
            Layer::Dense(DenseLayer {
                weights: RealMatrix::from_rows(&[vec![drop, drop]]).unwrap(),
                bias: vec![c],
                activation: Activation::Identity,
            }),
        ])
    }

    #[test]
    fn dre_exact_ratio_penalty_equals_true_mi() {
        let model = dre_model(1, 2, exact_ratio_net(30.0));
        let n = 64;
        let s: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let mut features = RealMatrix::zeros(n, 1);
        for (i, &si) in s.iter().enumerate() {
            features.set(i, 0, si as f64);
        }
        let (penalty, _) = model.dre_censor_penalty(&features, &s, None).unwrap();
        // true MI of the deterministic uniform binary pair is ln 2
        assert!((penalty - 2f64.ln()).abs() < 1e-9, "{penalty}");
    }

    #[test]
    fn dre_exact_ratio_train_loss_matches_enumeration() {
        let m = 30.0;
        let model = dre_model(1, 2, exact_ratio_net(m));
        // Batch realizing the exact joint and an exact product pairing.
        let s = vec![0, 0, 1, 1];
        let z = vec![0.0, 0.0, 1.0, 1.0];
        let perm = vec![0, 1, 0, 1]; // half matched, half mismatched
        let mut features = RealMatrix::zeros(4, 1);
        for (i, &zi) in z.iter().enumerate() {
            features.set(i, 0, zi);
        }
        let (loss, _) = model.dre_train_loss(&features, &s, &perm, None).unwrap();
        let sp = |x: f64| crate::nn::softplus(x);
        let expected = sp(-(2f64.ln())) // joint pairs all matched
            + 0.5 * sp(2f64.ln()) // product matched half
            + 0.5 * sp(-m); // product mismatched half
        assert!((loss - expected).abs() < 1e-9, "{loss} vs {expected}");
    }

    #[test]
    fn dre_loss_invariant_to_batch_order() {
        let mut rng = RngStream::new(3, 0);
        let spec = CensorSpec::new(CensorMode::Marginal, CensorMethod::DensityRatio, 2, 3, 2);
        let model = CensorModel::new(spec, &mut rng).unwrap();
        let mut features = RealMatrix::zeros(6, 2);
        for v in features.data_mut() {
            *v = rng.normal();
        }
        let s = vec![0, 1, 2, 0, 1, 2];
        let perm = vec![2, 0, 1, 1, 2, 0];
        let (a, _) = model.dre_train_loss(&features, &s, &perm, None).unwrap();
        let order = vec![5, 3, 1, 0, 2, 4];
        let features2 = features.select_rows(&order);
        let s2: Vec<usize> = order.iter().map(|&i| s[i]).collect();
        let perm2: Vec<usize> = order.iter().map(|&i| perm[i]).collect();
        let (b, _) = model.dre_train_loss(&features2, &s2, &perm2, None).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_identity_permutation_gives_zero() {
        let mut rng = RngStream::new(7, 0);
        let mut spec = CensorSpec::new(CensorMode::Marginal, CensorMethod::Wasserstein, 2, 2, 2);
        spec.hidden = vec![16, 16];
        let mut model = CensorModel::new(spec, &mut rng).unwrap();
        let mut features = RealMatrix::zeros(8, 2);
        for v in features.data_mut() {
            *v = rng.normal();
        }
        let s = vec![0, 1, 0, 1, 0, 1, 0, 1];
        let (penalty, _) = model
            .wasserstein_censor_penalty(&features, &s, &s.clone(), None)
            .unwrap();
        assert!(penalty.abs() < 1e-12);
    }

    #[test]
    fn wasserstein_constant_critic_gives_zero() {
        // Large negative first-layer weights with relu kill every input, so
        // the critic output is the constant final bias.
        let mut rng = RngStream::new(7, 1);
        let mut spec = CensorSpec::new(CensorMode::Marginal, CensorMethod::Wasserstein, 1, 2, 2);
        spec.hidden = vec![4];
        let mut model = CensorModel::new(spec, &mut rng).unwrap();
        if let Layer::Dense(d) = &mut model.net.layers[0] {
            for v in d.weights.data_mut() {
                *v = -5.0;
            }
            d.activation = Activation::Relu;
        }
        if let Layer::Dense(d) = &mut model.net.layers[1] {
            d.bias = vec![3.0];
        }
        let mut features = RealMatrix::zeros(6, 1);
        for (i, v) in features.data_mut().iter_mut().enumerate() {
            *v = i as f64 * 0.1 + 0.05;
        }
        let s = vec![0, 1, 0, 1, 0, 1];
        let perm = vec![1, 0, 1, 0, 1, 0];
        let (penalty, _) = model
            .wasserstein_censor_penalty(&features, &s, &perm, None)
            .unwrap();
        assert!(penalty.abs() < 1e-12, "{penalty}");
    }

    #[test]
    fn wasserstein_without_spectral_state_rejected() {
        let mut rng = RngStream::new(7, 2);
        let spec = CensorSpec::new(CensorMode::Marginal, CensorMethod::Wasserstein, 1, 2, 2);
        let mut model = CensorModel::new(spec, &mut rng).unwrap();
        model.spectral = None;
        let features = RealMatrix::zeros(2, 1);
        assert!(model
            .wasserstein_censor_penalty(&features, &[0, 1], &[1, 0], None)
            .is_err());
    }

    #[test]
    fn complementary_combine_arithmetic() {
        assert_eq!(complementary_combine(0.3, 0.3), 0.0);
        assert!((complementary_combine(0.7, 0.1) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn adversary_trains_toward_entropy_floor() {
        // Separable case: features are one-hot of s, so CE can approach 0.
        let mut rng = RngStream::new(11, 0);
        let mut spec = CensorSpec::new(CensorMode::Marginal, CensorMethod::Adversarial, 4, 4, 2);
        spec.hidden = vec![16];
        let mut model = CensorModel::new(spec, &mut rng).unwrap();
        let n = 64;
        let s: Vec<usize> = (0..n).map(|i| i % 4).collect();
        let features = one_hot(&s, 4).unwrap();
        let mut opt = AdamWState::for_params(
            AdamWConfig {
                lr: 0.05,
                ..Default::default()
            },
            &model.net.param_slices(),
        );
        let mut last = f64::INFINITY;
        for _ in 0..300 {
            last = model
                .train_step(&features, &s, None, &mut opt, &mut rng)
                .unwrap();
        }
        assert!(last < 0.05, "adversary CE stuck at {last}");
    }

    #[test]
    fn pair_ratio_zero_net_estimates_zero_and_loss_is_2ln2() {
        let mut est = PairRatioEstimator {
            net: zero_net(2, 1, vec![0.0]),
            dim_a: 1,
            dim_b: 1,
        };
        let mut rng = RngStream::new(0, 0);
        let a = RealMatrix::from_rows(&[vec![0.1], vec![0.2], vec![0.3], vec![0.4]]).unwrap();
        let b = RealMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]).unwrap();
        assert!(est.estimate(&a, &b).unwrap().abs() < 1e-15);
        let mut opt = AdamWState::for_params(AdamWConfig::default(), &est.net.param_slices());
        let loss = est.train_step(&a, &b, &mut opt, &mut rng).unwrap();
        assert!((loss - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn pair_ratio_shape_mismatch_rejected() {
        let mut rng = RngStream::new(1, 0);
        let est = PairRatioEstimator::new(2, 1, &[4], &mut rng);
        let a = RealMatrix::zeros(3, 1); // wrong width
        let b = RealMatrix::zeros(3, 1);
        assert!(est.estimate(&a, &b).is_err());
    }

    #[test]
    fn pair_ratio_independent_data_stays_near_zero() {
        let mut rng = RngStream::new(2, 0);
        let mut est = PairRatioEstimator::new(1, 1, &[16], &mut rng);
        let n = 512;
        let mut a = RealMatrix::zeros(n, 1);
        let mut b = RealMatrix::zeros(n, 1);
        for i in 0..n {
            a.set(i, 0, rng.normal());
            b.set(i, 0, rng.normal());
        }
        let mut opt = AdamWState::for_params(
            AdamWConfig {
                lr: 1e-3,
                ..Default::default()
            },
            &est.net.param_slices(),
        );
        for _ in 0..200 {
            est.train_step(&a, &b, &mut opt, &mut rng).unwrap();
        }
        let mi = est.estimate(&a, &b).unwrap();
        assert!(mi.abs() < 0.05, "estimate {mi} on independent data");
    }
}
