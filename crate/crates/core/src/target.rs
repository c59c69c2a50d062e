//! The single-jump regression target
//!
//! ```text
//! G_ξ(t, x, e; u) = u + ξ [∂_t u + 𝓕 + f + λ ℓ(u(t, x + γ(t, x, e)) − u)]
//! ```
//!
//! and the Monte Carlo helpers used to check its conditional mean and
//! variance.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, SpaceTimePoint};
use crate::network::{hjb_terms, local_terms, EXP_GUARD};
use crate::problems::{JumpLaw, JumpTransform, LocalOperatorKind, PideProblem};

/// Step size `ξ` of the target, optionally derived as `h/(n − 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiParam {
    pub xi: f64,
    pub derivation: Option<XiDerivation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiDerivation {
    pub h: f64,
    pub n: usize,
}

impl XiParam {
    pub fn new(xi: f64) -> Result<Self> {
        if xi == 0.0 || !xi.is_finite() {
            return Err(Error::config(format!("xi must be finite and nonzero (got {xi})")));
        }
        Ok(XiParam { xi, derivation: None })
    }

    /// `ξ = h/(n − 1)`.
    pub fn from_scale(h: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::config(format!("inner steps n must be >= 2 (got {n})")));
        }
        let mut p = XiParam::new(h / (n - 1) as f64)?;
        p.derivation = Some(XiDerivation { h, n });
        Ok(p)
    }
}

/// A collocation point with its jump mark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSample {
    pub point: SpaceTimePoint,
    pub jump: Vec<f64>,
}

pub fn sample_jump<R: Rng + ?Sized>(nu: &JumpLaw, rng: &mut R) -> Vec<f64> {
    nu.sample(rng)
}

/// `(u, ∂_t u + 𝓕 + f)` at `(t, x)` using the problem's registered
/// evaluator.
pub fn local_part<F: Field + ?Sized>(field: &F, problem: &PideProblem, t: f64, x: &[f64]) -> Result<(f64, f64)> {
    let (u, op) = match problem.operator {
        LocalOperatorKind::Directional => {
            let drift = problem.drift.eval(t, x);
            let cols = problem.diffusion.columns(t, x);
            local_terms(field, t, x, &drift, &cols)?
        }
        LocalOperatorKind::LogTransform { eta } => hjb_terms(field, t, x, eta)?,
    };
    Ok((u, op - problem.discount.rate(u) * u + problem.source.eval(t, x)))
}

/// `ℓ(z)` with the overflow guard for the exponential transform.
fn transform(problem: &PideProblem, z: f64) -> Result<f64> {
    if let JumpTransform::Exponential { eta } = problem.jump_transform {
        if (eta * z).abs() > EXP_GUARD {
            return Err(Error::Overflow(format!(
                "exp(-eta*z) out of range for jump increment z = {z:.6e}, eta = {eta}; rescale the problem"
            )));
        }
    }
    Ok(problem.jump_transform.apply(z))
}

/// `λ ℓ(u(t, x + γ(t, x, e)) − u)` given `u = u(t, x)`.
pub fn jump_term<F: Field + ?Sized>(
    field: &F,
    problem: &PideProblem,
    t: f64,
    x: &[f64],
    u: f64,
    jump: &[f64],
) -> Result<f64> {
    let lambda = problem.intensity_at(t, x);
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let y = problem.jump_map.apply(x, jump);
    Ok(lambda * transform(problem, field.value(t, &y) - u)?)
}

/// `G_ξ` at `(t, x, e)` for the frozen field `u`.
pub fn g_xi_at<F: Field + ?Sized>(
    field: &F,
    problem: &PideProblem,
    xi: XiParam,
    t: f64,
    x: &[f64],
    jump: &[f64],
) -> Result<f64> {
    let (u, local) = local_part(field, problem, t, x)?;
    let nonlocal = jump_term(field, problem, t, x, u, jump)?;
    Ok(u + xi.xi * (local + nonlocal))
}

pub fn g_xi<F: Field + ?Sized>(field: &F, problem: &PideProblem, xi: XiParam, sample: &TargetSample) -> Result<f64> {
    g_xi_at(field, problem, xi, sample.point.t, &sample.point.x, &sample.jump)
}

/// `λ (1/m) Σⱼ ℓ(u(t, x + γ(t, x, Eⱼ)) − u(t, x))`.
pub fn nonlocal_mc<F: Field + ?Sized, R: Rng + ?Sized>(
    field: &F,
    point: &SpaceTimePoint,
    problem: &PideProblem,
    m: usize,
    rng: &mut R,
) -> Result<f64> {
    if m == 0 {
        return Err(Error::config("nonlocal_mc needs m >= 1"));
    }
    let u = field.value(point.t, &point.x);
    let mut e = vec![0.0; problem.jumps.dim()];
    let mut acc = 0.0;
    for _ in 0..m {
        problem.jumps.sample_into(rng, &mut e);
        acc += jump_term(field, problem, point.t, &point.x, u, &e)?;
    }
    Ok(acc / m as f64)
}

fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// `Var(G_ξ) / Var(m-sample nonlocal estimator)` over `trials` independent
/// draws of each; its expected value is `ξ² m`.
pub fn variance_ratio<F: Field + ?Sized, R: Rng + ?Sized>(
    point: &SpaceTimePoint,
    field: &F,
    problem: &PideProblem,
    xi: XiParam,
    m: usize,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    if trials < 2 {
        return Err(Error::config("variance_ratio needs at least two trials"));
    }
    let (t, x) = (point.t, &point.x);
    let (u, local) = local_part(field, problem, t, x)?;
    let mut e = vec![0.0; problem.jumps.dim()];
    let mut targets = Vec::with_capacity(trials);
    for _ in 0..trials {
        problem.jumps.sample_into(rng, &mut e);
        targets.push(u + xi.xi * (local + jump_term(field, problem, t, x, u, &e)?));
    }
    let mut estimates = Vec::with_capacity(trials);
    for _ in 0..trials {
        estimates.push(nonlocal_mc(field, point, problem, m, rng)?);
    }
    let denom = sample_variance(&estimates);
    if !(denom > 0.0) {
        return Err(Error::DegenerateVariance(format!(
            "the jump integrand has zero variance at t = {t}; the ratio is undefined"
        )));
    }
    Ok(sample_variance(&targets) / denom)
}
