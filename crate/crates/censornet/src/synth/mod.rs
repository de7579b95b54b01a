//! Samplers for the three generative models used to validate the censor
//! estimators, plus divergence ground truths: closed-form Gaussian MI, exact
//! discrete MI, and a brute-force Wasserstein-1 oracle.

pub mod transport;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::nn::matrix::RealMatrix;
use crate::nn::rng::RngStream;

pub use transport::brute_force_w1;

/// Shape of one trial's signal payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputKind {
    Vector { dim: usize },
    Epoched { channels: usize, samples: usize },
}

impl InputKind {
    pub fn flat_dim(&self) -> usize {
        match self {
            InputKind::Vector { dim } => *dim,
            InputKind::Epoched { channels, samples } => channels * samples,
        }
    }
}

/// A batch of (x, y, s) tuples: signal data, task label, nuisance label.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialBatch {
    pub x: RealMatrix,
    pub input: InputKind,
    pub y: Vec<usize>,
    pub s: Vec<usize>,
    pub n_classes: usize,
    pub n_nuisance: usize,
}

impl TrialBatch {
    pub fn new(
        x: RealMatrix,
        input: InputKind,
        y: Vec<usize>,
        s: Vec<usize>,
        n_classes: usize,
        n_nuisance: usize,
    ) -> Result<Self, Error> {
        if x.rows() != y.len() || x.rows() != s.len() {
            return Err(Error::Shape(format!(
                "batch lengths differ: x {}, y {}, s {}",
                x.rows(),
                y.len(),
                s.len()
            )));
        }
        if x.cols() != input.flat_dim() {
            return Err(Error::Shape(format!(
                "x has {} cols but input kind implies {}",
                x.cols(),
                input.flat_dim()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&v| v >= n_classes) {
            return Err(Error::Label(format!(
                "task label {} out of range [0,{})",
                bad, n_classes
            )));
        }
        if let Some(&bad) = s.iter().find(|&&v| v >= n_nuisance) {
            return Err(Error::Label(format!(
                "nuisance label {} out of range [0,{})",
                bad, n_nuisance
            )));
        }
        Ok(TrialBatch {
            x,
            input,
            y,
            s,
            n_classes,
            n_nuisance,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> TrialBatch {
        TrialBatch {
            x: self.x.select_rows(idx),
            input: self.input,
            y: idx.iter().map(|&i| self.y[i]).collect(),
            s: idx.iter().map(|&i| self.s[i]).collect(),
            n_classes: self.n_classes,
            n_nuisance: self.n_nuisance,
        }
    }
}

/// Which graphical model to sample from.
///
/// A: `p(S) p(Y) p(Z|Y) p(X|S,Z)` (marginal independence `Z` vs `S`);
/// B: same but `Y ~ p(Y|S)`;
/// C: second latent `W|S ~ N(nu_s, I)` and `X = A Z + B W + noise`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GenVariant {
    A,
    B,
    C,
}

/// Compact, config-expressible description of a generative model. The
/// concrete class means, subject mixings and offsets are realized
/// deterministically from an [`RngStream`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenModelSpec {
    pub variant: GenVariant,
    pub n_classes: usize,
    pub n_subjects: usize,
    #[serde(default = "default_one")]
    pub n_sessions: usize,
    pub latent_dim: usize,
    pub x_dim: usize,
    /// Separation of class means in latent space.
    pub class_sep: f64,
    /// Scale of the per-nuisance offset delta_s (variants A and B).
    pub subject_offset_scale: f64,
    /// Use a random orthogonal mixing per nuisance value (variants A and B);
    /// otherwise all share the identity embedding.
    #[serde(default)]
    pub subject_rotation: bool,
    /// Extra offset perturbation distinguishing sessions of one subject.
    #[serde(default)]
    pub session_perturbation: f64,
    /// Observation noise sigma_x.
    pub noise: f64,
    /// p(Y|S) rows, required for variant B; defaults to uniform otherwise.
    #[serde(default)]
    pub label_table: Option<Vec<Vec<f64>>>,
    /// Separation of the per-nuisance means nu_s of W (variant C).
    #[serde(default)]
    pub w_sep: f64,
}

fn default_one() -> usize {
    1
}

impl GenModelSpec {
    pub fn n_nuisance(&self) -> usize {
        self.n_subjects * self.n_sessions
    }

    pub fn subject_of(&self, s: usize) -> usize {
        s / self.n_sessions
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.n_classes < 2 || self.n_subjects < 1 || self.n_sessions < 1 {
            return Err(Error::Config("need >= 2 classes and >= 1 nuisance".into()));
        }
        if self.latent_dim == 0 || self.x_dim == 0 {
            return Err(Error::Config("zero latent or data dimension".into()));
        }
        if self.x_dim < self.latent_dim {
            return Err(Error::Config(format!(
                "x_dim {} must be >= latent_dim {}",
                self.x_dim, self.latent_dim
            )));
        }
        if self.noise < 0.0 {
            return Err(Error::Config("negative noise scale".into()));
        }
        if let Some(table) = &self.label_table {
            if table.len() != self.n_nuisance() {
                return Err(Error::Config(format!(
                    "label table has {} rows for {} nuisance values",
                    table.len(),
                    self.n_nuisance()
                )));
            }
            for row in table {
                if row.len() != self.n_classes {
                    return Err(Error::Config("label table row width mismatch".into()));
                }
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::Config("label table row is not a distribution".into()));
                }
            }
        } else if self.variant == GenVariant::B {
            return Err(Error::Config("variant B requires a label table".into()));
        }
        Ok(())
    }
}

/// Realized generative model: concrete means, mixings and offsets.
#[derive(Debug, Clone)]
pub struct GenModel {
    pub spec: GenModelSpec,
    class_means: Vec<Vec<f64>>,
    /// Per-nuisance mixing (x_dim x latent_dim), variants A/B.
    mixing: Vec<RealMatrix>,
    /// Per-nuisance offset, variants A/B.
    offsets: Vec<Vec<f64>>,
    /// Variant C: shared mixings for z and w, and per-nuisance w means.
    mix_z: RealMatrix,
    mix_w: RealMatrix,
    w_means: Vec<Vec<f64>>,
}

/// Ground-truth latents for a sampled batch.
#[derive(Debug, Clone)]
pub struct LatentTruth {
    pub z: RealMatrix,
    pub w: Option<RealMatrix>,
}

fn random_unit(dim: usize, rng: &mut RngStream) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Random matrix with orthonormal columns via Gram-Schmidt.
fn random_orthogonal(rows: usize, cols: usize, rng: &mut RngStream) -> RealMatrix {
    assert!(rows >= cols);
    let mut cols_v: Vec<Vec<f64>> = Vec::with_capacity(cols);
    while cols_v.len() < cols {
        let mut v: Vec<f64> = (0..rows).map(|_| rng.normal()).collect();
        for u in &cols_v {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (x, ui) in v.iter_mut().zip(u) {
                *x -= dot * ui;
            }
        }
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            cols_v.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    let mut m = RealMatrix::zeros(rows, cols);
    for (j, col) in cols_v.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            m.set(i, j, v);
        }
    }
    m
}

fn identity_embedding(rows: usize, cols: usize) -> RealMatrix {
    let mut m = RealMatrix::zeros(rows, cols);
    for j in 0..cols.min(rows) {
        m.set(j, j, 1.0);
    }
    m
}

impl GenModel {
    /// Realize concrete model parameters; everything is a deterministic
    /// function of (spec, rng).
    pub fn realize(spec: &GenModelSpec, rng: &mut RngStream) -> Result<GenModel, Error> {
        spec.validate()?;
        let n_nuis = spec.n_nuisance();
        let class_means: Vec<Vec<f64>> = (0..spec.n_classes)
            .map(|_| {
                random_unit(spec.latent_dim, rng)
                    .into_iter()
                    .map(|v| v * spec.class_sep)
                    .collect()
            })
            .collect();
        let mut mixing = Vec::with_capacity(n_nuis);
        let mut offsets = Vec::with_capacity(n_nuis);
        for subj in 0..spec.n_subjects {
            let subj_mix = if spec.subject_rotation {
                random_orthogonal(spec.x_dim, spec.latent_dim, rng)
            } else {
                identity_embedding(spec.x_dim, spec.latent_dim)
            };
            let subj_off: Vec<f64> = random_unit(spec.x_dim, rng)
                .into_iter()
                .map(|v| v * spec.subject_offset_scale)
                .collect();
            let _ = subj;
            for _session in 0..spec.n_sessions {
                let mut off = subj_off.clone();
                if spec.session_perturbation > 0.0 {
                    for (o, p) in off.iter_mut().zip(random_unit(spec.x_dim, rng)) {
                        *o += spec.session_perturbation * p;
                    }
                }
                mixing.push(subj_mix.clone());
                offsets.push(off);
            }
        }
        let mix_z = random_orthogonal(spec.x_dim, spec.latent_dim, rng);
        let mix_w = random_orthogonal(spec.x_dim, spec.latent_dim, rng);
        let w_means: Vec<Vec<f64>> = (0..n_nuis)
            .map(|_| {
                random_unit(spec.latent_dim, rng)
                    .into_iter()
                    .map(|v| v * spec.w_sep)
                    .collect()
            })
            .collect();
        Ok(GenModel {
            spec: spec.clone(),
            class_means,
            mixing,
            offsets,
            mix_z,
            mix_w,
            w_means,
        })
    }

    /// Sample `n` trials following the variant's factorization exactly.
    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Result<(TrialBatch, LatentTruth), Error> {
        if n == 0 {
            return Err(Error::Config("cannot sample an empty batch".into()));
        }
        let spec = &self.spec;
        let n_nuis = spec.n_nuisance();
        let d = spec.latent_dim;
        let mut x = RealMatrix::zeros(n, spec.x_dim);
        let mut z_true = RealMatrix::zeros(n, d);
        let mut w_true = if spec.variant == GenVariant::C {
            Some(RealMatrix::zeros(n, d))
        } else {
            None
        };
        let mut y = Vec::with_capacity(n);
        let mut s = Vec::with_capacity(n);
        for i in 0..n {
            let si = rng.index(n_nuis);
            let yi = match (&spec.label_table, spec.variant) {
                (Some(table), GenVariant::B) => sample_categorical(&table[si], rng),
                _ => rng.index(spec.n_classes),
            };
            s.push(si);
            y.push(yi);
            let z: Vec<f64> = self.class_means[yi]
                .iter()
                .map(|&m| m + rng.normal())
                .collect();
            z_true.row_mut(i).copy_from_slice(&z);
            let xrow = x.row_mut(i);
            match spec.variant {
                GenVariant::A | GenVariant::B => {
                    let mix = &self.mixing[si];
                    for r in 0..spec.x_dim {
                        let mut acc = self.offsets[si][r];
                        for (c, &zc) in z.iter().enumerate() {
                            acc += mix.get(r, c) * zc;
                        }
                        xrow[r] = acc;
                    }
                }
                GenVariant::C => {
                    let w: Vec<f64> = self.w_means[si].iter().map(|&m| m + rng.normal()).collect();
                    for r in 0..spec.x_dim {
                        let mut acc = 0.0;
                        for c in 0..d {
                            acc += self.mix_z.get(r, c) * z[c] + self.mix_w.get(r, c) * w[c];
                        }
                        xrow[r] = acc;
                    }
                    w_true.as_mut().unwrap().row_mut(i).copy_from_slice(&w);
                }
            }
            if spec.noise > 0.0 {
                for v in xrow.iter_mut() {
                    *v += spec.noise * rng.normal();
                }
            }
        }
        let batch = TrialBatch::new(
            x,
            InputKind::Vector { dim: spec.x_dim },
            y,
            s,
            spec.n_classes,
            n_nuis,
        )?;
        Ok((batch, LatentTruth { z: z_true, w: w_true }))
    }
}

fn sample_categorical(probs: &[f64], rng: &mut RngStream) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Standard bivariate normal pair with correlation `rho`.
pub fn gaussian_pair(rho: f64, n: usize, rng: &mut RngStream) -> Result<(Vec<f64>, Vec<f64>), Error> {
    if rho.abs() >= 1.0 {
        return Err(Error::Config(format!("|rho| must be < 1, got {}", rho)));
    }
    let c = (1.0 - rho * rho).sqrt();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.normal();
        let v = rng.normal();
        a.push(u);
        b.push(rho * u + c * v);
    }
    Ok((a, b))
}

/// `-0.5 ln(1 - rho^2)` nats.
pub fn closed_form_gaussian_mi(rho: f64) -> Result<f64, Error> {
    if rho.abs() >= 1.0 {
        return Err(Error::Config(format!("|rho| must be < 1, got {}", rho)));
    }
    Ok(-0.5 * (1.0 - rho * rho).ln())
}

/// Exact MI of a discrete joint table in nats, with `0 ln 0 := 0`.
pub fn exact_discrete_mi(joint: &[Vec<f64>]) -> Result<f64, Error> {
    let rows = joint.len();
    let cols = joint.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 || joint.iter().any(|r| r.len() != cols) {
        return Err(Error::Config("joint table must be rectangular".into()));
    }
    let mut total = 0.0;
    for row in joint {
        for &p in row {
            if p < 0.0 {
                return Err(Error::Config("negative probability in joint table".into()));
            }
            total += p;
        }
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "joint table sums to {}, expected 1",
            total
        )));
    }
    let pa: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let mut pb = vec![0.0; cols];
    for row in joint {
        for (j, &p) in row.iter().enumerate() {
            pb[j] += p;
        }
    }
    let mut mi = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (pa[i] * pb[j])).ln();
            }
        }
    }
    Ok(mi)
}

/// Draw index pairs from a discrete joint table.
pub fn sample_discrete_joint(
    joint: &[Vec<f64>],
    n: usize,
    rng: &mut RngStream,
) -> (Vec<usize>, Vec<usize>) {
    let cols = joint[0].len();
    let flat: Vec<f64> = joint.iter().flatten().copied().collect();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        let k = sample_categorical(&flat, rng);
        a.push(k / cols);
        b.push(k % cols);
    }
    (a, b)
}

/// Equal-width binned plug-in MI estimate for continuous pairs; a coarse
/// independent check on generators and closed forms, not an estimator used
/// by any training path.
pub fn binned_mi(a: &[f64], b: &[f64], bins: usize) -> Result<f64, Error> {
    if a.len() != b.len() || a.is_empty() || bins < 2 {
        return Err(Error::Config("binned_mi needs paired samples and >= 2 bins".into()));
    }
    let bin_of = |xs: &[f64]| -> Vec<usize> {
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo).max(1e-300);
        xs.iter()
            .map(|&x| (((x - lo) / width) * bins as f64).min(bins as f64 - 1.0) as usize)
            .collect()
    };
    let ia = bin_of(a);
    let ib = bin_of(b);
    let mut joint = vec![vec![0.0; bins]; bins];
    let n = a.len() as f64;
    for (&i, &j) in ia.iter().zip(&ib) {
        joint[i][j] += 1.0 / n;
    }
    exact_discrete_mi(&joint)
}

/// Plug-in MI between a continuous (binned) variable and a discrete label.
pub fn binned_mi_discrete(a: &[f64], labels: &[usize], bins: usize, card: usize) -> Result<f64, Error> {
    if a.len() != labels.len() || a.is_empty() {
        return Err(Error::Config("binned_mi_discrete needs paired samples".into()));
    }
    let lo = a.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo).max(1e-300);
    let mut joint = vec![vec![0.0; card]; bins];
    let n = a.len() as f64;
    for (&x, &l) in a.iter().zip(labels) {
        let i = (((x - lo) / width) * bins as f64).min(bins as f64 - 1.0) as usize;
        joint[i][l] += 1.0 / n;
    }
    exact_discrete_mi(&joint)
}

/// Warning emitted when a nuisance group has too few non-targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsampleWarning {
    pub nuisance: usize,
    pub wanted: usize,
    pub available: usize,
}

/// Keep all target trials (class 1) and a per-nuisance uniform subset of
/// non-targets (class 0) at `ratio` non-targets per target; output order is
/// shuffled.
pub fn subsample_nontargets(
    batch: &TrialBatch,
    ratio: usize,
    rng: &mut RngStream,
) -> Result<(TrialBatch, Vec<SubsampleWarning>), Error> {
    if batch.n_classes != 2 {
        return Err(Error::Config(format!(
            "non-target subsampling needs binary labels, got {} classes",
            batch.n_classes
        )));
    }
    if ratio < 1 {
        return Err(Error::Config("subsample ratio must be >= 1".into()));
    }
    let mut keep: Vec<usize> = Vec::new();
    let mut warnings = Vec::new();
    for nuis in 0..batch.n_nuisance {
        let targets: Vec<usize> = (0..batch.len())
            .filter(|&i| batch.s[i] == nuis && batch.y[i] == 1)
            .collect();
        let mut nontargets: Vec<usize> = (0..batch.len())
            .filter(|&i| batch.s[i] == nuis && batch.y[i] == 0)
            .collect();
        let wanted = targets.len() * ratio;
        if nontargets.len() > wanted {
            rng.shuffle(&mut nontargets);
            nontargets.truncate(wanted);
        } else if nontargets.len() < wanted {
            warnings.push(SubsampleWarning {
                nuisance: nuis,
                wanted,
                available: nontargets.len(),
            });
        }
        keep.extend(targets);
        keep.extend(nontargets);
    }
    rng.shuffle(&mut keep);
    Ok((batch.select(&keep), warnings))
}

/// Disjoint train/val/test subject sets, deterministic in (rng seed, fold).
pub fn subject_split(
    subjects: &[usize],
    n_train: usize,
    n_val: usize,
    n_test: usize,
    fold_id: u64,
    rng: &RngStream,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>), Error> {
    if n_train + n_val + n_test > subjects.len() {
        return Err(Error::Config(format!(
            "split {}+{}+{} exceeds {} subjects",
            n_train,
            n_val,
            n_test,
            subjects.len()
        )));
    }
    let mut pool = subjects.to_vec();
    pool.sort_unstable();
    let mut fold_rng = rng.derive(fold_id);
    fold_rng.shuffle(&mut pool);
    let train = pool[..n_train].to_vec();
    let val = pool[n_train..n_train + n_val].to_vec();
    let test = pool[n_train + n_val..n_train + n_val + n_test].to_vec();
    Ok((train, val, test))
}
