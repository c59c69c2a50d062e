use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distribution `ν` of the jump mark `E`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NuSpec {
    /// `N(mean, cov)`, covariance row-major.
    Gaussian { mean: Vec<f64>, cov: Vec<f64> },
    /// `E_i = μ + σ(√ρ Z₀ + √(1−ρ) Z_i)` with independent standard normals.
    CorrelatedLogNormal { dim: usize, mu: f64, sigma: f64, rho: f64 },
    /// Exactly one coordinate jumps. Coordinate `i` is picked with
    /// probability `rates[i] / Σ rates` and receives `N(mean[i], std[i]²)`;
    /// every other coordinate of the mark is zero.
    SingleAsset { rates: Vec<f64>, mean: Vec<f64>, std: Vec<f64> },
}

/// A validated [`NuSpec`] ready for sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpLaw {
    spec: NuSpec,
    dim: usize,
    // Gaussian: lower factor F (row-major) with F Fᵀ = cov
    factor: Vec<f64>,
    // SingleAsset: cumulative selection probabilities
    cumulative: Vec<f64>,
}

const PSD_TOL: f64 = 1e-12;

impl JumpLaw {
    pub fn new(spec: NuSpec) -> Result<Self> {
        match &spec {
            NuSpec::Gaussian { mean, cov } => {
                let d = mean.len();
                if d == 0 || cov.len() != d * d {
                    return Err(Error::config(format!(
                        "gaussian jump law needs a {d}x{d} covariance, got {} entries",
                        cov.len()
                    )));
                }
                let m = DMatrix::from_row_slice(d, d, cov);
                let asym = (&m - m.transpose()).abs().max();
                if asym > PSD_TOL * (1.0 + m.abs().max()) || cov.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config("jump covariance is not symmetric"));
                }
                let eig = SymmetricEigen::new(m.clone());
                let scale = 1.0 + m.abs().max();
                if eig.eigenvalues.iter().any(|&l| l < -PSD_TOL * scale) {
                    return Err(Error::config(format!(
                        "jump covariance is not positive semidefinite (min eigenvalue {:.3e})",
                        eig.eigenvalues.min()
                    )));
                }
                let sqrt_l = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
                let f = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_l);
                let mut factor = Vec::with_capacity(d * d);
                for i in 0..d {
                    for j in 0..d {
                        factor.push(f[(i, j)]);
                    }
                }
                Ok(JumpLaw { dim: d, factor, cumulative: Vec::new(), spec })
            }
            NuSpec::CorrelatedLogNormal { dim, sigma, rho, mu } => {
                if *dim == 0 || !(0.0..=1.0).contains(rho) || *sigma < 0.0 || !mu.is_finite() {
                    return Err(Error::config(format!(
                        "correlated log-normal jump law needs dim >= 1, sigma >= 0, rho in [0,1] (got dim={dim}, sigma={sigma}, rho={rho})"
                    )));
                }
                Ok(JumpLaw { dim: *dim, factor: Vec::new(), cumulative: Vec::new(), spec })
            }
            NuSpec::SingleAsset { rates, mean, std } => {
                let d = rates.len();
                if d == 0 || mean.len() != d || std.len() != d {
                    return Err(Error::config("single-asset jump law needs equal-length rates, mean, std"));
                }
                if rates.iter().any(|&r| !(r >= 0.0)) || std.iter().any(|&s| !(s >= 0.0)) {
                    return Err(Error::config("single-asset rates and std must be nonnegative"));
                }
                // all-zero rates: the law is never sampled with positive
                // intensity, so any selection rule is fine; use uniform
                let total: f64 = rates.iter().sum();
                let mut acc = 0.0;
                let cumulative = rates
                    .iter()
                    .map(|r| {
                        acc += if total > 0.0 { r / total } else { 1.0 / d as f64 };
                        acc
                    })
                    .collect();
                Ok(JumpLaw { dim: d, factor: Vec::new(), cumulative, spec })
            }
        }
    }

    pub fn spec(&self) -> &NuSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Draws one mark into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        self.sample_with(rng, out, 1.0)
    }

    /// Draws one mark with every standard normal multiplied by `sign`
    /// (`±1`); used for antithetic pairs.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64], sign: f64) {
        debug_assert_eq!(out.len(), self.dim);
        match &self.spec {
            NuSpec::Gaussian { mean, .. } => {
                let d = self.dim;
                let z: Vec<f64> = (0..d).map(|_| sign * rng.sample::<f64, _>(StandardNormal)).collect();
                for i in 0..d {
                    let row = &self.factor[i * d..(i + 1) * d];
                    out[i] = mean[i] + row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            NuSpec::CorrelatedLogNormal { mu, sigma, rho, .. } => {
                let a = rho.sqrt();
                let b = (1.0 - rho).sqrt();
                let z0: f64 = sign * rng.sample::<f64, _>(StandardNormal);
                for o in out.iter_mut() {
                    let zi: f64 = sign * rng.sample::<f64, _>(StandardNormal);
                    *o = mu + sigma * (a * z0 + b * zi);
                }
            }
            NuSpec::SingleAsset { mean, std, .. } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                let u: f64 = rng.random();
                let i = self.cumulative.iter().position(|&c| u < c).unwrap_or(self.dim - 1);
                let z: f64 = sign * rng.sample::<f64, _>(StandardNormal);
                out[i] = mean[i] + std[i] * z;
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.sample_into(rng, &mut out);
        out
    }

    /// `E[E]`.
    pub fn mean(&self) -> Vec<f64> {
        match &self.spec {
            NuSpec::Gaussian { mean, .. } => mean.clone(),
            NuSpec::CorrelatedLogNormal { dim, mu, .. } => vec![*mu; *dim],
            NuSpec::SingleAsset { mean, .. } => {
                let mut prev = 0.0;
                self.cumulative
                    .iter()
                    .zip(mean)
                    .map(|(&c, m)| {
                        let p = c - prev;
                        prev = c;
                        p * m
                    })
                    .collect()
            }
        }
    }

    /// Trace of the mark covariance for the Gaussian law.
    pub fn gaussian_trace(&self) -> Option<f64> {
        match &self.spec {
            NuSpec::Gaussian { cov, .. } => Some((0..self.dim).map(|i| cov[i * self.dim + i]).sum()),
            _ => None,
        }
    }
}
