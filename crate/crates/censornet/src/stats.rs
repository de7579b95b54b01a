//! Evaluation metrics: balanced accuracy, overfitting ratio, paired t-tests
//! with significance tiers, subject-probe diagnostics, and quantile summaries.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::nn::{
    softmax_cross_entropy, Activation, AdamWConfig, AdamWState, Network, RealMatrix,
    RngStream,
};

/// C x C counts, rows indexed by true class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionCounts {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionCounts {
    pub fn new(n_classes: usize) -> Self {
        ConfusionCounts {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn from_labels(truth: &[usize], pred: &[usize], n_classes: usize) -> Result<Self, Error> {
        if truth.len() != pred.len() {
            return Err(Error::Shape(format!(
                "{} true labels vs {} predictions",
                truth.len(),
                pred.len()
            )));
        }
        let mut c = ConfusionCounts::new(n_classes);
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= n_classes || p >= n_classes {
                return Err(Error::Label(format!(
                    "label pair ({}, {}) outside {} classes",
                    t, p, n_classes
                )));
            }
            c.counts[t * n_classes + p] += 1;
        }
        Ok(c)
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n_classes + pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize, n: u64) {
        self.counts[truth * self.n_classes + pred] += n;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Mean per-class recall. A class with no true instances has undefined
/// recall, so it is an error rather than a silent skip.
pub fn balanced_accuracy(confusion: &ConfusionCounts) -> Result<f64, Error> {
    let c = confusion.n_classes;
    let mut acc = 0.0;
    for t in 0..c {
        let row_total: u64 = (0..c).map(|p| confusion.get(t, p)).sum();
        if row_total == 0 {
            return Err(Error::Config(format!(
                "class {} has no true instances; recall undefined",
                t
            )));
        }
        acc += confusion.get(t, t) as f64 / row_total as f64;
    }
    Ok(acc / c as f64)
}

pub fn overfit_ratio(train_ba: f64, test_ba: f64) -> Result<f64, Error> {
    if train_ba <= 0.0 {
        return Err(Error::Numeric(format!(
            "overfit ratio undefined for train accuracy {}",
            train_ba
        )));
    }
    Ok(test_ba / train_ba)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SigTier {
    /// p > 0.05, or a non-positive t (only improvements are annotated).
    None,
    /// p <= 0.05
    Star,
    /// p <= 0.01
    Dagger,
    /// p <= 0.001
    DoubleDagger,
}

impl SigTier {
    pub fn symbol(&self) -> &'static str {
        match self {
            SigTier::None => "-",
            SigTier::Star => "*",
            SigTier::Dagger => "\u{2020}",
            SigTier::DoubleDagger => "\u{2021}",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTestResult {
    pub t: f64,
    pub df: usize,
    pub p: f64,
    pub tier: SigTier,
}

/// Two-sided paired t-test of a against b; positive t means a > b.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTestResult, Error> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "paired samples of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Config("paired t-test needs n >= 2".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Err(Error::Numeric(
            "zero-variance differences; t-statistic degenerate".into(),
        ));
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let df = n - 1;
    let p = student_t_two_sided_p(t, df);
    let tier = if t <= 0.0 {
        SigTier::None
    } else if p <= 0.001 {
        SigTier::DoubleDagger
    } else if p <= 0.01 {
        SigTier::Dagger
    } else if p <= 0.05 {
        SigTier::Star
    } else {
        SigTier::None
    };
    Ok(PairedTestResult { t, df, p, tier })
}

/// Two-sided p = I_x(df/2, 1/2) with x = df / (df + t^2).
pub fn student_t_two_sided_p(t: f64, df: usize) -> f64 {
    let dff = df as f64;
    let x = dff / (dff + t * t);
    regularized_incomplete_beta(0.5 * dff, 0.5, x)
}

/// Lanczos approximation (g = 7, 9 coefficients), |error| < 1e-13 on x > 0.
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued-fraction evaluation of the regularized incomplete beta I_x(a,b)
/// (modified Lentz), accurate to ~1e-14.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // the continued fraction converges fastest for small x; the inclusive
    // comparison keeps x exactly at the switchover from recursing forever
    if x <= (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - regularized_incomplete_beta(b, a, 1.0 - x)
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Held-out balanced accuracy of a fresh linear softmax probe predicting the
/// nuisance label from frozen features. The split is stratified per label so
/// every label appears on both sides. Nothing backpropagates into the model
/// that produced the features.
pub fn probe_subject_accuracy(
    z: &RealMatrix,
    s: &[usize],
    rng: &mut RngStream,
) -> Result<f64, Error> {
    if z.rows() != s.len() {
        return Err(Error::Shape(format!(
            "{} feature rows vs {} labels",
            z.rows(),
            s.len()
        )));
    }
    let n_subjects = s.iter().copied().max().map_or(0, |m| m + 1);
    if n_subjects < 2 {
        return Err(Error::Config("probe needs >= 2 subjects".into()));
    }
    let mut by_subject: Vec<Vec<usize>> = vec![Vec::new(); n_subjects];
    for (i, &si) in s.iter().enumerate() {
        by_subject[si].push(i);
    }
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for idx in &mut by_subject {
        if idx.len() < 10 {
            return Err(Error::Config(format!(
                "probe needs >= 10 trials per subject, found {}",
                idx.len()
            )));
        }
        rng.shuffle(idx);
        let n_train = (idx.len() * 4) / 5;
        train_idx.extend_from_slice(&idx[..n_train]);
        test_idx.extend_from_slice(&idx[n_train..]);
    }
    let z_train = z.select_rows(&train_idx);
    let s_train: Vec<usize> = train_idx.iter().map(|&i| s[i]).collect();
    let z_test = z.select_rows(&test_idx);
    let s_test: Vec<usize> = test_idx.iter().map(|&i| s[i]).collect();

    let probe = Network::mlp(&[z.cols(), n_subjects], Activation::Identity, rng);
    let mut probe = probe;
    let mut opt = AdamWState::for_params(
        AdamWConfig {
            lr: 0.05,
            ..Default::default()
        },
        &probe.param_slices(),
    );
    for _ in 0..300 {
        let (logits, cache) = probe.forward(&z_train)?;
        let (_, dlogits) = softmax_cross_entropy(&logits, &s_train)?;
        let (grads, _) = probe.backward(&cache, &dlogits)?;
        let grad_slices = Network::grad_slices(&grads);
        let mut params = probe.param_slices_mut();
        opt.step(&mut params, &grad_slices)?;
    }
    let (logits, _) = probe.forward(&z_test)?;
    let pred: Vec<usize> = (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap()
        })
        .collect();
    let confusion = ConfusionCounts::from_labels(&s_test, &pred, n_subjects)?;
    balanced_accuracy(&confusion)
}

/// Five-number summary plus mean; quantiles by linear interpolation between
/// order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn quantile_linear(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Result<Summary, Error> {
    if values.is_empty() {
        return Err(Error::Config("summary of an empty sample".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("summary over non-finite values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(Summary {
        n: sorted.len(),
        min: sorted[0],
        q1: quantile_linear(&sorted, 0.25),
        median: quantile_linear(&sorted, 0.5),
        q3: quantile_linear(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
        mean: values.iter().sum::<f64>() / values.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::one_hot;

    #[test]
    fn balanced_accuracy_perfect_diagonal() {
        let c = ConfusionCounts::from_labels(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(balanced_accuracy(&c).unwrap(), 1.0);
    }

    #[test]
    fn balanced_accuracy_majority_predictor_is_chance() {
        let mut c = ConfusionCounts::new(2);
        c.add(0, 0, 90);
        c.add(1, 0, 10);
        assert!((balanced_accuracy(&c).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn balanced_accuracy_mixed_recall() {
        let mut c = ConfusionCounts::new(2);
        // non-target: 81/90 correct; target: 8/10 correct
        c.add(0, 0, 81);
        c.add(0, 1, 9);
        c.add(1, 1, 8);
        c.add(1, 0, 2);
        assert!((balanced_accuracy(&c).unwrap() - 0.85).abs() < 1e-15);
    }

    #[test]
    fn balanced_accuracy_empty_class_is_error() {
        let mut c = ConfusionCounts::new(3);
        c.add(0, 0, 5);
        c.add(1, 1, 5);
        assert!(balanced_accuracy(&c).is_err());
    }

    #[test]
    fn balanced_accuracy_invariant_to_row_scaling() {
        let mut c = ConfusionCounts::new(2);
        c.add(0, 0, 7);
        c.add(0, 1, 3);
        c.add(1, 1, 4);
        c.add(1, 0, 1);
        let a = balanced_accuracy(&c).unwrap();
        let mut doubled = ConfusionCounts::new(2);
        doubled.add(0, 0, 14);
        doubled.add(0, 1, 6);
        doubled.add(1, 1, 4);
        doubled.add(1, 0, 1);
        assert!((a - balanced_accuracy(&doubled).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn overfit_ratio_examples() {
        assert!((overfit_ratio(0.8, 0.8).unwrap() - 1.0).abs() < 1e-15);
        assert!((overfit_ratio(0.90, 0.72).unwrap() - 0.8).abs() < 1e-12);
        assert!(overfit_ratio(0.5, 0.6).unwrap() > 1.0); // no clamping
        assert!(overfit_ratio(0.0, 0.5).is_err());
    }

    #[test]
    fn t_test_hand_computed_example() {
        let a = vec![0.5, 0.6, 0.7];
        let b = vec![0.4, 0.4, 0.4];
        let r = paired_t_test(&a, &b).unwrap();
        assert_eq!(r.df, 2);
        assert!((r.t - 3.4641016151).abs() < 1e-9, "{}", r.t);
        // closed-form CDF for df = 2: F(t) = 1/2 (1 + t / sqrt(2 + t^2))
        let t = r.t;
        let expected_p = 2.0 * (1.0 - 0.5 * (1.0 + t / (2.0 + t * t).sqrt()));
        assert!((r.p - expected_p).abs() < 1e-8, "{} vs {}", r.p, expected_p);
        assert_eq!(r.tier, SigTier::None); // p ~ 0.074
    }

    #[test]
    fn t_test_identical_samples_is_error() {
        let a = vec![0.3, 0.4, 0.5];
        assert!(paired_t_test(&a, &a).is_err());
    }

    #[test]
    fn t_test_antisymmetric_and_negative_t_unannotated() {
        let a = vec![0.9, 0.8, 0.85, 0.95];
        let b = vec![0.5, 0.55, 0.5, 0.6];
        let ab = paired_t_test(&a, &b).unwrap();
        let ba = paired_t_test(&b, &a).unwrap();
        assert!((ab.t + ba.t).abs() < 1e-12);
        assert!((ab.p - ba.p).abs() < 1e-12);
        assert!(ab.t > 0.0 && ab.tier != SigTier::None);
        assert_eq!(ba.tier, SigTier::None);
    }

    #[test]
    fn t_test_strong_effect_reaches_top_tier() {
        let mut rng = RngStream::new(17, 0);
        let base: Vec<f64> = (0..30).map(|_| 0.5 + 0.01 * rng.normal()).collect();
        let improved: Vec<f64> = base.iter().map(|v| v + 0.05 + 0.01 * rng.normal()).collect();
        let r = paired_t_test(&improved, &base).unwrap();
        assert_eq!(r.tier, SigTier::DoubleDagger, "p = {}", r.p);
    }

    #[test]
    fn p_value_against_cauchy_closed_form() {
        // df = 1 is a Cauchy distribution: F(t) = 1/2 + atan(t)/pi
        for &t in &[0.5, 1.0, 2.0, 12.7062] {
            let p = student_t_two_sided_p(t, 1);
            let expected = 2.0 * (1.0 - (0.5 + t.atan() / std::f64::consts::PI));
            assert!((p - expected).abs() < 1e-8, "t={t}: {p} vs {expected}");
        }
        // classic critical value: t = 12.7062, df = 1 -> p = 0.05
        assert!((student_t_two_sided_p(12.7062, 1) - 0.05).abs() < 1e-5);
    }

    #[test]
    fn probe_separable_features_reach_perfect_accuracy() {
        let mut rng = RngStream::new(23, 0);
        let s: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let z = one_hot(&s, 3).unwrap();
        let acc = probe_subject_accuracy(&z, &s, &mut rng).unwrap();
        assert!((acc - 1.0).abs() < 1e-12, "{acc}");
    }

    #[test]
    fn probe_independent_features_stay_at_chance() {
        let mut rng = RngStream::new(23, 1);
        let n_per = 400;
        let s: Vec<usize> = (0..4 * n_per).map(|i| i % 4).collect();
        let mut z = RealMatrix::zeros(s.len(), 6);
        for v in z.data_mut() {
            *v = rng.normal();
        }
        let acc = probe_subject_accuracy(&z, &s, &mut rng).unwrap();
        assert!((acc - 0.25).abs() < 0.05, "{acc}");
    }

    #[test]
    fn probe_is_deterministic_and_validates_input() {
        let mut rng1 = RngStream::new(9, 0);
        let mut rng2 = RngStream::new(9, 0);
        let s: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let mut z = RealMatrix::zeros(40, 3);
        for v in z.data_mut() {
            *v = rng1.normal();
        }
        let mut z2 = z.clone();
        let _ = &mut z2;
        for _ in 0..z.rows() * z.cols() {
            rng2.normal();
        }
        let a = probe_subject_accuracy(&z, &s, &mut rng1).unwrap();
        let b = probe_subject_accuracy(&z, &s, &mut rng2).unwrap();
        assert_eq!(a, b);
        // a subject with < 10 trials is rejected
        let s_small: Vec<usize> = (0..12).map(|i| if i < 11 { 0 } else { 1 }).collect();
        let z_small = RealMatrix::zeros(12, 3);
        assert!(probe_subject_accuracy(&z_small, &s_small, &mut rng1).is_err());
    }

    #[test]
    fn summary_quantiles_hand_checked() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.min, 1.0);
        assert_eq!(s.q1, 2.0);
        assert_eq!(s.median, 3.0);
        assert_eq!(s.q3, 4.0);
        assert_eq!(s.max, 5.0);
        assert_eq!(s.mean, 3.0);
        let single = summarize(&[0.7]).unwrap();
        assert_eq!(single.q1, 0.7);
        assert_eq!(single.median, 0.7);
        assert_eq!(single.q3, 0.7);
        // interpolated case: [1,2,3,4] -> q1 = 1.75
        let s4 = summarize(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert!((s4.q1 - 1.75).abs() < 1e-15);
        assert!((s4.median - 2.5).abs() < 1e-15);
        assert!(summarize(&[]).is_err());
    }
}
