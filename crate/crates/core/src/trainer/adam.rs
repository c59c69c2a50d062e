use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |b: f64| b > 0.0 && b < 1.0;
        if !open(self.beta1) || !open(self.beta2) || !(self.eps > 0.0) {
            return Err(Error::config(format!(
                "Adam needs 0 < beta1, beta2 < 1 and eps > 0 (got {}, {}, {})",
                self.beta1, self.beta2, self.eps
            )));
        }
        Ok(())
    }
}

/// Update rule for the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    /// Plain gradient descent `θ ← θ − lr·g`.
    Sgd,
}

/// First and second moment estimates with their step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    /// One bias-corrected Adam update in place.
    pub fn step(&mut self, cfg: &AdamConfig, lr: f64, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}

/// `θ ← θ − lr·g`.
pub fn sgd_step(lr: f64, params: &mut [f64], grad: &[f64]) {
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= lr * g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_magnitude() {
        let cfg = AdamConfig::default();
        let mut s = AdamState::new(3);
        let mut p = vec![1.0, 1.0, 1.0];
        let g = [0.5, -2.0, 1e-9];
        s.step(&cfg, 0.01, &mut p, &g);
        for i in 0..3 {
            let expected = 0.01 / (1.0 + cfg.eps / g[i].abs());
            assert!(((1.0 - p[i]).abs() - expected).abs() < 1e-15, "{i}");
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = AdamState::new(2);
        let mut p = vec![0.3, -0.7];
        s.step(&AdamConfig::default(), 0.1, &mut p, &[0.0, 0.0]);
        assert_eq!(p, vec![0.3, -0.7]);
    }

    #[test]
    fn invalid_config() {
        assert!(AdamConfig { beta1: 1.0, ..Default::default() }.validate().is_err());
        assert!(AdamConfig { eps: 0.0, ..Default::default() }.validate().is_err());
    }
}
