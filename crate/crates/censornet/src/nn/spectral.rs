use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::nn::matrix::RealMatrix;
use crate::nn::rng::RngStream;

/// Power-iteration state for spectral normalization of one weight matrix.
/// The left singular-vector estimate `u` persists across training steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralNormState {
    pub u: Vec<f64>,
    pub n_power_iterations: usize,
}

/// Byproducts of one normalization; needed to push gradients through
/// `W / sigma` with `u`, `v` held constant.
#[derive(Debug, Clone)]
pub struct SpectralNormCache {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub sigma: f64,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl SpectralNormState {
    pub fn new(rows: usize, n_power_iterations: usize, rng: &mut RngStream) -> Self {
        let mut u: Vec<f64> = (0..rows).map(|_| rng.normal()).collect();
        let n = norm2(&u);
        for x in &mut u {
            *x /= n;
        }
        SpectralNormState {
            u,
            n_power_iterations,
        }
    }
}

/// Estimate the largest singular value of `weights` by power iteration,
/// update `state.u` in place, and return `weights / sigma` with the cache.
pub fn spectral_normalize(
    weights: &RealMatrix,
    state: &mut SpectralNormState,
) -> Result<(RealMatrix, SpectralNormCache), Error> {
    if weights.rows() != state.u.len() {
        return Err(Error::Shape(format!(
            "spectral state for {} rows applied to {}x{} matrix",
            state.u.len(),
            weights.rows(),
            weights.cols()
        )));
    }
    if weights.data().iter().all(|&x| x == 0.0) {
        return Err(Error::Numeric(
            "spectral normalization of zero matrix".into(),
        ));
    }
    let (rows, cols) = (weights.rows(), weights.cols());
    let mut u = state.u.clone();
    let mut v = vec![0.0; cols];
    for _ in 0..state.n_power_iterations.max(1) {
        // v = W^T u / |.|
        for j in 0..cols {
            v[j] = 0.0;
        }
        for i in 0..rows {
            let row = weights.row(i);
            let ui = u[i];
            for j in 0..cols {
                v[j] += ui * row[j];
            }
        }
        let nv = norm2(&v);
        if nv == 0.0 {
            return Err(Error::Numeric(
                "power iteration collapsed to zero vector".into(),
            ));
        }
        for x in &mut v {
            *x /= nv;
        }
        // u = W v / |.|
        for (i, ui) in u.iter_mut().enumerate() {
            let row = weights.row(i);
            *ui = row.iter().zip(&v).map(|(w, vj)| w * vj).sum();
        }
        let nu = norm2(&u);
        if nu == 0.0 {
            return Err(Error::Numeric(
                "power iteration collapsed to zero vector".into(),
            ));
        }
        for x in &mut u {
            *x /= nu;
        }
    }
    let mut sigma = 0.0;
    for i in 0..rows {
        let row = weights.row(i);
        sigma += u[i] * row.iter().zip(&v).map(|(w, vj)| w * vj).sum::<f64>();
    }
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::Numeric(format!(
            "degenerate spectral estimate {}",
            sigma
        )));
    }
    let mut normalized = weights.clone();
    normalized.scale(1.0 / sigma);
    state.u = u.clone();
    Ok((normalized, SpectralNormCache { u, v, sigma }))
}

/// Map a gradient taken with respect to the normalized matrix back to the
/// raw weights, treating `u`, `v` as constants: with `sigma = u^T W v`,
/// `dW = (dWbar - <dWbar, Wbar> u v^T) / sigma`.
pub fn spectral_backward(
    grad_normalized: &RealMatrix,
    normalized: &RealMatrix,
    cache: &SpectralNormCache,
) -> RealMatrix {
    let mut inner = 0.0;
    for (a, b) in grad_normalized.data().iter().zip(normalized.data()) {
        inner += a * b;
    }
    let mut out = grad_normalized.clone();
    for i in 0..out.rows() {
        let ui = cache.u[i];
        let row = out.row_mut(i);
        for (j, g) in row.iter_mut().enumerate() {
            *g = (*g - inner * ui * cache.v[j]) / cache.sigma;
        }
    }
    out
}
