//! PIDE definitions and the four benchmark instances.
//!
//! A [`PideProblem`] describes
//!
//! ```text
//! ∂_t u + 𝓕(t, x, u, ∇u, ∇²u) + λ E_ν[ℓ(u(t, x + γ(t, x, E)) − u(t, x))] + f = 0,   u(T, ·) = φ
//! ```
//!
//! restricted to the shapes the solver can evaluate cheaply: `∂_t u + 𝓕` is
//! either a directional second-order operator with drift `b` and diffusion
//! `σ` minus a discount `c(u)·u`, or the log-transformed HJB operator
//! `∂_t u + Δu − η‖∇u‖²`.

mod benchmarks;
mod jumps;

use serde::{Deserialize, Serialize};

pub use benchmarks::{
    default_risk_problem, hjb_problem, intensity_q, linear_bs_problem, linear_quadratic_problem,
    linear_quadratic_solution, DefaultRiskParams, HjbParams, LinearBsParams,
    LinearQuadraticParams, LinearQuadraticSolution, ProblemConfig,
};
pub use jumps::{JumpLaw, NuSpec};

use crate::autodiff::Real;

/// Drift `b(t, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Drift {
    Zero,
    Constant(Vec<f64>),
    /// `rate · x`.
    Linear { rate: f64 },
    /// `rates ⊙ x`.
    Diagonal { rates: Vec<f64> },
}

impl Drift {
    pub fn eval_into(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        match self {
            Drift::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Drift::Constant(b) => out.copy_from_slice(b),
            Drift::Linear { rate } => out.iter_mut().zip(x).for_each(|(o, &xi)| *o = rate * xi),
            Drift::Diagonal { rates } => {
                for i in 0..out.len() {
                    out[i] = rates[i] * x[i];
                }
            }
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.eval_into(t, x, &mut out);
        out
    }
}

/// Diffusion matrix `σ(t, x) ∈ ℝ^{d×q}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Diffusion {
    Zero,
    /// Constant matrix, row-major `d × q`.
    Constant { q: usize, matrix: Vec<f64> },
    /// `scale · I_d`.
    ScaledIdentity { scale: f64 },
    /// `diag(vols ⊙ x) · L`, with `L` a row-major `d × d` correlation
    /// factor (`L Lᵀ = ρ`) or the identity when absent.
    StateProportional { vols: Vec<f64>, factor: Option<Vec<f64>> },
}

impl Diffusion {
    /// Number of Brownian factors `q` (at least one).
    pub fn factors(&self, d: usize) -> usize {
        match self {
            Diffusion::Zero => 1,
            Diffusion::Constant { q, .. } => (*q).max(1),
            Diffusion::ScaledIdentity { .. } | Diffusion::StateProportional { .. } => d,
        }
    }

    /// Columns `σ_{·,j}` for `j = 0..q`, each of length `d`.
    pub fn columns(&self, _t: f64, x: &[f64]) -> Vec<Vec<f64>> {
        let d = x.len();
        match self {
            Diffusion::Zero => vec![vec![0.0; d]],
            Diffusion::Constant { q, matrix } => {
                (0..*q).map(|j| (0..d).map(|i| matrix[i * q + j]).collect()).collect()
            }
            Diffusion::ScaledIdentity { scale } => (0..d)
                .map(|j| {
                    let mut c = vec![0.0; d];
                    c[j] = *scale;
                    c
                })
                .collect(),
            Diffusion::StateProportional { vols, factor } => (0..d)
                .map(|j| {
                    (0..d)
                        .map(|i| {
                            let l = match factor {
                                Some(f) => f[i * d + j],
                                None => f64::from(u8::from(i == j)),
                            };
                            vols[i] * x[i] * l
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// `σ(t, x) · z` for a vector of `q` Brownian increments.
    pub fn apply(&self, _t: f64, x: &[f64], z: &[f64], out: &mut [f64]) {
        let d = x.len();
        match self {
            Diffusion::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Diffusion::Constant { q, matrix } => {
                for i in 0..d {
                    out[i] = (0..*q).map(|j| matrix[i * q + j] * z[j]).sum();
                }
            }
            Diffusion::ScaledIdentity { scale } => {
                for i in 0..d {
                    out[i] = scale * z[i];
                }
            }
            Diffusion::StateProportional { vols, factor } => {
                for i in 0..d {
                    let lz = match factor {
                        Some(f) => (0..d).map(|j| f[i * d + j] * z[j]).sum(),
                        None => z[i],
                    };
                    out[i] = vols[i] * x[i] * lz;
                }
            }
        }
    }
}

/// Breakpoints and levels of the piecewise-linear default intensity `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityParams {
    pub v_high: f64,
    pub v_low: f64,
    pub gamma_high: f64,
    pub gamma_low: f64,
}

/// Zeroth-order discount `c(t, x, u)` entering as `−c·u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Discount {
    Zero,
    Constant(f64),
    /// `(1 − δ) Q(u) + R`.
    DefaultRisk { recovery: f64, rate: f64, intensity: IntensityParams },
}

impl Discount {
    pub fn rate(&self, u: f64) -> f64 {
        match self {
            Discount::Zero => 0.0,
            Discount::Constant(c) => *c,
            Discount::DefaultRisk { recovery, rate, intensity: q } => {
                (1.0 - recovery) * intensity_q(u, q.v_high, q.v_low, q.gamma_high, q.gamma_low) + rate
            }
        }
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self, Discount::DefaultRisk { .. })
    }
}

/// Source term `f(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Source {
    Zero,
    Constant(f64),
}

impl Source {
    pub fn eval(&self, _t: f64, _x: &[f64]) -> f64 {
        match self {
            Source::Zero => 0.0,
            Source::Constant(f) => *f,
        }
    }
}

/// Jump map `γ(t, x, e)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JumpMap {
    /// `γ = e`.
    Additive,
    /// `γ = x ⊙ (eᵉ − 1)`, so the post-jump state is `x ⊙ eᵉ`.
    Multiplicative,
}

impl JumpMap {
    /// Post-jump state `x + γ(t, x, e)`.
    pub fn apply_into(&self, x: &[f64], e: &[f64], out: &mut [f64]) {
        match self {
            JumpMap::Additive => {
                for i in 0..x.len() {
                    out[i] = x[i] + e[i];
                }
            }
            JumpMap::Multiplicative => {
                for i in 0..x.len() {
                    out[i] = if e[i] == 0.0 { x[i] } else { x[i] * e[i].exp() };
                }
            }
        }
    }

    pub fn apply(&self, x: &[f64], e: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, e, &mut out);
        out
    }
}

/// Jump transform `ℓ(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum JumpTransform {
    Identity,
    /// `ℓ(z) = −(1/η)(e^{−ηz} − 1)`.
    Exponential { eta: f64 },
}

impl JumpTransform {
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            JumpTransform::Identity => z,
            JumpTransform::Exponential { eta } => -(-eta * z).exp_m1() / eta,
        }
    }
}

/// Terminal condition `φ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Terminal {
    SquaredNorm,
    MinCoordinate,
    /// `(Σ wᵢxᵢ − K)₊`.
    BasketCall { weights: Vec<f64>, strike: f64 },
    Constant(f64),
}

impl Terminal {
    pub fn eval<S: Real>(&self, x: &[S]) -> S {
        let zero = x[0].lift(0.0);
        match self {
            Terminal::SquaredNorm => x.iter().fold(zero, |acc, &v| acc + v * v),
            // min(a, b) = a − max(a − b, 0)
            Terminal::MinCoordinate => x[1..].iter().fold(x[0], |acc, &v| acc - (acc - v).max_const(0.0)),
            Terminal::BasketCall { weights, strike } => x
                .iter()
                .zip(weights)
                .fold(zero, |acc, (&v, &w)| acc + v.scale(w))
                .add_const(-strike)
                .max_const(0.0),
            Terminal::Constant(c) => zero.add_const(*c),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
}

/// Which evaluator computes `∂_t u + 𝓕`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LocalOperatorKind {
    /// `∂_t u + b·∇u + ½Tr[σσᵀ∇²u] − c(u)·u`.
    Directional,
    /// `∂_t u + Δu − η‖∇u‖²`.
    LogTransform { eta: f64 },
}

/// Per-coordinate training/test box over `[0, T] × Π [lowerᵢ, upperᵢ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingBox {
    pub horizon: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SamplingBox {
    pub fn cube(horizon: f64, d: usize, lo: f64, hi: f64) -> Self {
        SamplingBox { horizon, lower: vec![lo; d], upper: vec![hi; d] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, t: f64, x: &[f64]) -> bool {
        (0.0..self.horizon).contains(&t)
            && x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(&v, (&lo, &hi))| lo <= v && v <= hi)
    }

    pub fn is_subset_of(&self, other: &SamplingBox) -> bool {
        self.dim() == other.dim()
            && self.horizon <= other.horizon
            && self.lower.iter().zip(&other.lower).all(|(a, b)| a >= b)
            && self.upper.iter().zip(&other.upper).all(|(a, b)| a <= b)
    }
}

/// A PIDE instance.
#[derive(Debug, Clone)]
pub struct PideProblem {
    pub name: String,
    pub horizon: f64,
    pub dim: usize,
    pub drift: Drift,
    pub diffusion: Diffusion,
    pub operator: LocalOperatorKind,
    pub discount: Discount,
    pub source: Source,
    /// Jump intensity `λ` (state-independent for every benchmark).
    pub intensity: f64,
    pub jump_map: JumpMap,
    pub jump_transform: JumpTransform,
    pub jumps: JumpLaw,
    pub terminal: Terminal,
    pub sampling_box: SamplingBox,
    /// `c₀` when the problem is linear with `c ≥ c₀ > 0`.
    pub contraction_floor: Option<f64>,
    /// Start point for path-based sampling and point references.
    pub reference_start: Option<Vec<f64>>,
}

impl PideProblem {
    pub fn intensity_at(&self, _t: f64, _x: &[f64]) -> f64 {
        self.intensity
    }

    /// `ℓ` is the identity and `𝓕` is affine in `u`.
    pub fn is_linear(&self) -> bool {
        matches!(self.jump_transform, JumpTransform::Identity)
            && matches!(self.operator, LocalOperatorKind::Directional)
            && self.discount.is_linear()
    }

    pub fn is_linear_contractive(&self) -> bool {
        self.contraction_floor.is_some_and(|c| c > 0.0)
    }

    /// Hard-constraint wrapper `A = φ`, `B = (T − t)/T`.
    pub fn hard_constraint(&self) -> crate::network::HardConstraint {
        crate::network::HardConstraint::time_to_horizon(self.terminal.clone(), self.horizon)
    }
}

#[cfg(test)]
mod tests;
