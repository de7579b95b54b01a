use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// AdamW with bias correction and decoupled weight decay. Moment buffers are
/// kept per parameter tensor, in the order the owning network reports them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamWState {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamWState {
    pub fn new(config: AdamWConfig, tensor_sizes: &[usize]) -> Self {
        AdamWState {
            config,
            step: 0,
            m: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_params(config: AdamWConfig, params: &[&[f64]]) -> Self {
        let sizes: Vec<usize> = params.iter().map(|p| p.len()).collect();
        AdamWState::new(config, &sizes)
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<(), Error> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adamw: {} params / {} grads vs {} state tensors",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::Shape(format!(
                    "adamw tensor size mismatch: param {}, grad {}, state {}",
                    p.len(),
                    g.len(),
                    m.len()
                )));
            }
            for i in 0..p.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= c.lr * (m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * p[i]);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_one(w: f64, g: f64, config: AdamWConfig) -> f64 {
        let mut state = AdamWState::new(config, &[1]);
        let mut p = vec![w];
        let grads = vec![g];
        {
            let mut refs: Vec<&mut [f64]> = vec![p.as_mut_slice()];
            state.step(&mut refs, &[grads.as_slice()]).unwrap();
        }
        p[0]
    }

    #[test]
    fn zero_gradient_zero_decay_is_identity() {
        let config = AdamWConfig {
            lr: 0.1,
            ..Default::default()
        };
        assert_eq!(run_one(1.0, 0.0, config), 1.0);
    }

    #[test]
    fn first_step_matches_hand_recurrence() {
        // m_hat = 1, v_hat = 1 => update = lr / (1 + eps)
        let config = AdamWConfig {
            lr: 0.1,
            ..Default::default()
        };
        let w = run_one(1.0, 1.0, config);
        assert!((w - 0.9).abs() < 1e-6, "{w}");
    }

    #[test]
    fn decoupled_decay_definition() {
        let config = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.1,
            ..Default::default()
        };
        let w = run_one(1.0, 0.0, config);
        assert!((w - 0.99).abs() < 1e-12, "{w}");
    }

    #[test]
    fn tensor_count_mismatch_rejected() {
        let mut state = AdamWState::new(AdamWConfig::default(), &[2]);
        let mut p = vec![0.0; 2];
        let g1 = vec![0.0; 2];
        let g2 = vec![0.0; 2];
        let mut refs: Vec<&mut [f64]> = vec![p.as_mut_slice()];
        assert!(state.step(&mut refs, &[g1.as_slice(), g2.as_slice()]).is_err());
    }
}
