use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{
    Diffusion, Discount, Drift, IntensityParams, JumpLaw, JumpMap, JumpTransform, LocalOperatorKind, NuSpec,
    PideProblem, SamplingBox, Source, Terminal,
};
use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::field::{RealField, SpaceTimePoint};

fn identity(d: usize, scale: f64) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = scale;
    }
    m
}

fn trace(m: &[f64], d: usize) -> f64 {
    (0..d).map(|i| m[i * d + i]).sum()
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::config(format!("{name} has non-finite entries")))
    }
}

/// Linear PIDE with quadratic terminal condition and Gaussian additive jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearQuadraticParams {
    pub d: usize,
    pub q: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub b: f64,
    pub c: f64,
    /// `d × q`, row-major.
    pub sigma: Vec<f64>,
    pub lambda: f64,
    /// `d × d`, row-major.
    pub sigma_j: Vec<f64>,
}

impl LinearQuadraticParams {
    /// `T = 0.5`, `b = 1`, `c = 2`, `Σ = 0.28·1`, `λ = 0.25`, `Σ_J = 0.4·I`.
    pub fn standard(d: usize, q: usize) -> Self {
        LinearQuadraticParams {
            d,
            q,
            horizon: 0.5,
            b: 1.0,
            c: 2.0,
            sigma: vec![0.28; d * q],
            lambda: 0.25,
            sigma_j: identity(d, 0.4),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.q == 0 {
            return Err(Error::config("linear-quadratic problem needs d, q >= 1"));
        }
        if self.sigma.len() != self.d * self.q || self.sigma_j.len() != self.d * self.d {
            return Err(Error::config(format!(
                "linear-quadratic matrices must be {}x{} and {}x{}",
                self.d, self.q, self.d, self.d
            )));
        }
        check_finite("sigma", &self.sigma)?;
        check_finite("sigma_j", &self.sigma_j)?;
        if !(self.horizon > 0.0) || !self.b.is_finite() || !self.c.is_finite() || !(self.lambda >= 0.0) {
            return Err(Error::config("linear-quadratic problem needs T > 0, finite b, c and λ >= 0"));
        }
        Ok(())
    }

    /// `Tr[ΣΣᵀ] + λ Tr[Σ_J]`.
    fn constant_rate(&self) -> f64 {
        let tr_sst: f64 = self.sigma.iter().map(|s| s * s).sum();
        tr_sst + self.lambda * trace(&self.sigma_j, self.d)
    }
}

pub fn linear_quadratic_problem(params: &LinearQuadraticParams) -> Result<PideProblem> {
    params.validate()?;
    let d = params.d;
    Ok(PideProblem {
        name: "linear_quadratic".into(),
        horizon: params.horizon,
        dim: d,
        drift: Drift::Linear { rate: params.b },
        diffusion: Diffusion::Constant { q: params.q, matrix: params.sigma.clone() },
        operator: LocalOperatorKind::Directional,
        discount: Discount::Constant(params.c),
        source: Source::Zero,
        intensity: params.lambda,
        jump_map: JumpMap::Additive,
        jump_transform: JumpTransform::Identity,
        jumps: JumpLaw::new(NuSpec::Gaussian { mean: vec![0.0; d], cov: params.sigma_j.clone() })?,
        terminal: Terminal::SquaredNorm,
        sampling_box: SamplingBox::cube(params.horizon, d, -1.5, 1.5),
        contraction_floor: (params.c > 0.0).then_some(params.c),
        reference_start: None,
    })
}

/// Closed-form solution of the linear-quadratic problem,
/// `e^{(2b−c)τ}‖x‖² + e^{−cτ} k (e^{2bτ} − 1)/(2b)` with `τ = T − t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearQuadraticSolution {
    pub horizon: f64,
    pub b: f64,
    pub c: f64,
    pub d: usize,
    /// `Tr[ΣΣᵀ] + λ Tr[Σ_J]`.
    pub rate: f64,
}

impl LinearQuadraticSolution {
    pub fn new(params: &LinearQuadraticParams) -> Self {
        LinearQuadraticSolution {
            horizon: params.horizon,
            b: params.b,
            c: params.c,
            d: params.d,
            rate: params.constant_rate(),
        }
    }

    /// Coefficient of `‖x‖²` at time `t`.
    pub fn quadratic_coeff(&self, t: f64) -> f64 {
        ((2.0 * self.b - self.c) * (self.horizon - t)).exp()
    }
}

impl RealField for LinearQuadraticSolution {
    fn dim(&self) -> usize {
        self.d
    }

    fn eval<S: Real>(&self, t: S, x: &[S]) -> S {
        let tau = (-t).add_const(self.horizon);
        let norm2 = x.iter().fold(t.lift(0.0), |acc, &v| acc + v * v);
        let growth = if self.b == 0.0 {
            tau
        } else {
            tau.scale(2.0 * self.b).exp().add_const(-1.0).scale(0.5 / self.b)
        };
        tau.scale(2.0 * self.b - self.c).exp() * norm2 + tau.scale(-self.c).exp() * growth.scale(self.rate)
    }
}

pub fn linear_quadratic_solution(point: &SpaceTimePoint, params: &LinearQuadraticParams) -> f64 {
    LinearQuadraticSolution::new(params).eval(point.t, &point.x)
}

/// HJB PIDE with exponential jump transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HjbParams {
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub eta: f64,
    pub lambda: f64,
    pub mu_j: Vec<f64>,
    /// `d × d`, row-major.
    pub sigma_j: Vec<f64>,
    /// Constant source `f`.
    pub f: f64,
}

impl HjbParams {
    /// `T = 1`, `η = 1`, `f = 2`, `λ = 0.5`, `μ_J = 0`, `Σ_J = 0.2·I`.
    pub fn standard(d: usize) -> Self {
        HjbParams {
            d,
            horizon: 1.0,
            eta: 1.0,
            lambda: 0.5,
            mu_j: vec![0.0; d],
            sigma_j: identity(d, 0.2),
            f: 2.0,
        }
    }
}

pub fn hjb_problem(params: &HjbParams) -> Result<PideProblem> {
    let d = params.d;
    if d == 0 || params.mu_j.len() != d || params.sigma_j.len() != d * d {
        return Err(Error::config("HJB problem needs d >= 1 with matching jump mean and covariance"));
    }
    if !(params.eta > 0.0) || !params.eta.is_finite() {
        return Err(Error::config(format!("HJB problem needs eta > 0 (got {})", params.eta)));
    }
    if !(params.horizon > 0.0) || !(params.lambda >= 0.0) || !params.f.is_finite() {
        return Err(Error::config("HJB problem needs T > 0, λ >= 0, finite f"));
    }
    Ok(PideProblem {
        name: "hjb".into(),
        horizon: params.horizon,
        dim: d,
        drift: Drift::Zero,
        diffusion: Diffusion::ScaledIdentity { scale: std::f64::consts::SQRT_2 },
        operator: LocalOperatorKind::LogTransform { eta: params.eta },
        discount: Discount::Zero,
        source: Source::Constant(params.f),
        intensity: params.lambda,
        jump_map: JumpMap::Additive,
        jump_transform: JumpTransform::Exponential { eta: params.eta },
        jumps: JumpLaw::new(NuSpec::Gaussian { mean: params.mu_j.clone(), cov: params.sigma_j.clone() })?,
        terminal: Terminal::SquaredNorm,
        sampling_box: SamplingBox::cube(params.horizon, d, -1.5, 1.5),
        contraction_floor: None,
        reference_start: None,
    })
}

/// `Q(y)`: `γʰ` below `vʰ`, `γˡ` from `vˡ` on, linear in between.
pub fn intensity_q(y: f64, v_high: f64, v_low: f64, gamma_high: f64, gamma_low: f64) -> f64 {
    if y < v_high {
        gamma_high
    } else if y >= v_low {
        gamma_low
    } else {
        (gamma_high - gamma_low) / (v_high - v_low) * (y - v_high) + gamma_high
    }
}

impl IntensityParams {
    /// `vʰ = 50`, `vˡ = 70`, `γʰ = 0.2`, `γˡ = 0.02`.
    pub fn standard() -> Self {
        IntensityParams { v_high: 50.0, v_low: 70.0, gamma_high: 0.2, gamma_low: 0.02 }
    }

    pub fn eval(&self, y: f64) -> f64 {
        intensity_q(y, self.v_high, self.v_low, self.gamma_high, self.gamma_low)
    }
}

/// Nonlinear Black–Scholes PIDE with default risk and correlated
/// multiplicative jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultRiskParams {
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub mu_bar: f64,
    pub sigma: f64,
    pub delta: f64,
    pub r: f64,
    pub lambda: f64,
    pub mu_j: f64,
    pub sigma_j: f64,
    pub rho_j: f64,
    pub intensity: IntensityParams,
    /// Every coordinate of the start point.
    pub x0: f64,
    pub box_lower: f64,
    pub box_upper: f64,
}

impl DefaultRiskParams {
    pub fn standard(d: usize) -> Self {
        DefaultRiskParams {
            d,
            horizon: 1.0,
            mu_bar: 0.02,
            sigma: 0.2,
            delta: 2.0 / 3.0,
            r: 0.02,
            lambda: 0.1,
            mu_j: -0.2,
            sigma_j: 0.15,
            rho_j: 0.5,
            intensity: IntensityParams::standard(),
            x0: 100.0,
            box_lower: 50.0,
            box_upper: 150.0,
        }
    }
}

pub fn default_risk_problem(params: &DefaultRiskParams) -> Result<PideProblem> {
    let p = params;
    if p.d == 0 || !(p.horizon > 0.0) {
        return Err(Error::config("default-risk problem needs d >= 1 and T > 0"));
    }
    if !(0.0..=1.0).contains(&p.delta) {
        return Err(Error::config(format!("recovery δ must lie in [0,1] (got {})", p.delta)));
    }
    let q = p.intensity;
    if !(q.v_high < q.v_low) || !(q.gamma_high > q.gamma_low) {
        return Err(Error::config("default intensity needs vʰ < vˡ and γʰ > γˡ"));
    }
    if !(p.box_lower > 0.0 && p.box_lower < p.box_upper) || !(p.x0 > 0.0) {
        return Err(Error::config("default-risk box and start point must be positive"));
    }
    Ok(PideProblem {
        name: "default_risk".into(),
        horizon: p.horizon,
        dim: p.d,
        drift: Drift::Linear { rate: p.mu_bar },
        diffusion: Diffusion::StateProportional { vols: vec![p.sigma; p.d], factor: None },
        operator: LocalOperatorKind::Directional,
        discount: Discount::DefaultRisk { recovery: p.delta, rate: p.r, intensity: p.intensity },
        source: Source::Zero,
        intensity: p.lambda,
        jump_map: JumpMap::Multiplicative,
        jump_transform: JumpTransform::Identity,
        jumps: JumpLaw::new(NuSpec::CorrelatedLogNormal { dim: p.d, mu: p.mu_j, sigma: p.sigma_j, rho: p.rho_j })?,
        terminal: Terminal::MinCoordinate,
        sampling_box: SamplingBox::cube(p.horizon, p.d, p.box_lower, p.box_upper),
        contraction_floor: None,
        reference_start: Some(vec![p.x0; p.d]),
    })
}

/// Linear basket Black–Scholes PIDE with independent per-asset jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBsParams {
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub r: f64,
    pub strike: f64,
    pub vol: f64,
    /// Per-asset jump intensity.
    pub lambda: f64,
    pub mu_j: f64,
    pub sigma_j: f64,
    /// Off-diagonal correlation; the diagonal is 1.
    pub correlation: f64,
    /// Basket weights; `1/d` each when absent.
    pub weights: Option<Vec<f64>>,
    pub box_upper: f64,
}

impl LinearBsParams {
    pub fn standard(d: usize) -> Self {
        LinearBsParams {
            d,
            horizon: 1.0,
            r: 0.05,
            strike: 30.0,
            vol: 0.15,
            lambda: 0.5,
            mu_j: 0.2,
            sigma_j: 0.3,
            correlation: 0.1,
            weights: None,
            box_upper: 100.0,
        }
    }

    /// `κ = E[e^E − 1] = exp(μ_J + σ_J²/2) − 1`.
    pub fn compensator(&self) -> f64 {
        (self.mu_j + 0.5 * self.sigma_j * self.sigma_j).exp_m1()
    }

    pub fn basket_weights(&self) -> Vec<f64> {
        self.weights.clone().unwrap_or_else(|| vec![1.0 / self.d as f64; self.d])
    }
}

pub fn linear_bs_problem(params: &LinearBsParams) -> Result<PideProblem> {
    let p = params;
    let d = p.d;
    if d == 0 || !(p.horizon > 0.0) || !(p.box_upper > 0.0) {
        return Err(Error::config("linear Black–Scholes problem needs d >= 1, T > 0, positive box"));
    }
    let w = p.basket_weights();
    if w.len() != d || w.iter().any(|&v| !(v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::config("basket weights must be nonnegative and sum to 1"));
    }
    let mut corr = DMatrix::from_element(d, d, p.correlation);
    corr.fill_diagonal(1.0);
    let chol = corr
        .cholesky()
        .ok_or_else(|| Error::config(format!("correlation {} gives a non-positive-definite matrix", p.correlation)))?;
    let l = chol.l();
    let factor = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| l[(i, j)]).collect();
    let kappa = p.compensator();
    Ok(PideProblem {
        name: "linear_bs".into(),
        horizon: p.horizon,
        dim: d,
        drift: Drift::Diagonal { rates: vec![p.r - kappa * p.lambda; d] },
        diffusion: Diffusion::StateProportional { vols: vec![p.vol; d], factor: Some(factor) },
        operator: LocalOperatorKind::Directional,
        discount: Discount::Constant(p.r),
        source: Source::Zero,
        intensity: p.lambda * d as f64,
        jump_map: JumpMap::Multiplicative,
        jump_transform: JumpTransform::Identity,
        jumps: JumpLaw::new(NuSpec::SingleAsset {
            rates: vec![p.lambda; d],
            mean: vec![p.mu_j; d],
            std: vec![p.sigma_j; d],
        })?,
        terminal: Terminal::BasketCall { weights: w, strike: p.strike },
        sampling_box: SamplingBox::cube(p.horizon, d, 0.0, p.box_upper),
        contraction_floor: (p.r > 0.0).then_some(p.r),
        reference_start: Some(vec![p.strike; d]),
    })
}

/// Serializable problem block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemConfig {
    LinearQuadratic(LinearQuadraticParams),
    Hjb(HjbParams),
    DefaultRisk(DefaultRiskParams),
    LinearBs(LinearBsParams),
}

impl ProblemConfig {
    pub fn build(&self) -> Result<PideProblem> {
        match self {
            ProblemConfig::LinearQuadratic(p) => linear_quadratic_problem(p),
            ProblemConfig::Hjb(p) => hjb_problem(p),
            ProblemConfig::DefaultRisk(p) => default_risk_problem(p),
            ProblemConfig::LinearBs(p) => linear_bs_problem(p),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ProblemConfig::LinearQuadratic(p) => p.d,
            ProblemConfig::Hjb(p) => p.d,
            ProblemConfig::DefaultRisk(p) => p.d,
            ProblemConfig::LinearBs(p) => p.d,
        }
    }

    /// Closed-form solution, when one exists.
    pub fn closed_form(&self) -> Option<LinearQuadraticSolution> {
        match self {
            ProblemConfig::LinearQuadratic(p) => Some(LinearQuadraticSolution::new(p)),
            _ => None,
        }
    }
}
