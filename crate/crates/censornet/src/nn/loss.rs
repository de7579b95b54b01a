use crate::error::Error;
use crate::nn::matrix::RealMatrix;

/// Row-wise softmax with max-shift.
pub fn softmax(logits: &RealMatrix) -> RealMatrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean negative log-likelihood of integer labels under softmax(logits),
/// and its gradient `(softmax - one_hot) / batch`.
pub fn softmax_cross_entropy(
    logits: &RealMatrix,
    labels: &[usize],
) -> Result<(f64, RealMatrix), Error> {
    let n = logits.rows();
    let c = logits.cols();
    if n == 0 {
        return Err(Error::Shape("empty logits batch".into()));
    }
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for batch of {}",
            labels.len(),
            n
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Label(format!("label {} out of range [0,{})", bad, c)));
    }
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[label];
    }
    loss /= n as f64;
    for (r, &label) in labels.iter().enumerate() {
        let row = grad.row_mut(r);
        row[label] -= 1.0;
        for v in row.iter_mut() {
            *v /= n as f64;
        }
    }
    Ok((loss, grad))
}

/// Numerically stable softplus, `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean of `softplus(-sign * logit)`, the stable form of
/// `-log sigma(sign * logit)`, plus the gradient with respect to the logits.
pub fn logistic_terms(logits: &[f64], signs: &[f64]) -> Result<(f64, Vec<f64>), Error> {
    if logits.len() != signs.len() {
        return Err(Error::Shape(format!(
            "{} logits vs {} signs",
            logits.len(),
            signs.len()
        )));
    }
    if logits.is_empty() {
        return Err(Error::Shape("empty logit batch".into()));
    }
    if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("logistic input {}", bad)));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for (i, (&x, &s)) in logits.iter().zip(signs).enumerate() {
        debug_assert!(s == 1.0 || s == -1.0);
        loss += softplus(-s * x);
        // d/dx softplus(-s x) = -s * sigma(-s x)
        grad[i] = -s * sigmoid(-s * x) / n;
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_c() {
        let logits = RealMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
        assert!((grad.get(0, 0) - (-0.5)).abs() < 1e-12);
        assert!((grad.get(0, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn saturated_logits_stable() {
        let logits = RealMatrix::from_rows(&[vec![1000.0, 0.0]]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!(loss.is_finite());
        assert!(loss < 1e-12);
    }

    #[test]
    fn three_class_hand_value() {
        let logits = RealMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[2]).unwrap();
        let expected = (1f64.exp() + 2f64.exp() + 3f64.exp()).ln() - 3.0;
        assert!((loss - expected).abs() < 1e-12);
        assert!((loss - 0.407606).abs() < 1e-6);
    }

    #[test]
    fn label_out_of_range_rejected() {
        let logits = RealMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(softmax_cross_entropy(&logits, &[2]).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = RealMatrix::from_rows(&[vec![3.0, -2.0, 0.7], vec![100.0, 99.0, -50.0]]).unwrap();
        let p = softmax(&logits);
        for r in 0..p.rows() {
            let s: f64 = p.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn logistic_zero_logit_is_ln2() {
        let (loss, _) = logistic_terms(&[0.0], &[1.0]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn logistic_saturation_no_underflow() {
        let (loss, _) = logistic_terms(&[40.0], &[1.0]).unwrap();
        assert!(loss >= 0.0 && loss < 1e-12);
    }

    #[test]
    fn logistic_negative_sign_hand_value() {
        let (loss, _) = logistic_terms(&[1.0], &[-1.0]).unwrap();
        assert!((loss - 1f64.exp().ln_1p()).abs() < 1e-12);
        assert!((loss - 1.313262).abs() < 1e-6);
    }

    #[test]
    fn logistic_rejects_non_finite() {
        assert!(logistic_terms(&[f64::NAN], &[1.0]).is_err());
    }
}
