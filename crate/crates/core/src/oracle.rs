//! Reference solvers: Euler simulation of the jump diffusion, Feynman–Kac
//! Monte Carlo for linear problems and the log-transform estimator for the
//! exponential-jump HJB problem.
//!
//! Path `i` of an estimate always draws from `rng::stream(seed, i)`; paths
//! are evaluated in parallel and reduced in index order.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpaceTimePoint;
use crate::problems::{JumpTransform, LocalOperatorKind, PideProblem};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    /// Independent samples; antithetic pairs count once.
    pub paths: usize,
    /// Euler intervals between the start time and the horizon.
    pub steps: usize,
    #[serde(default)]
    pub antithetic: bool,
    pub seed: u64,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 || self.steps == 0 {
            return Err(Error::config(format!(
                "Monte Carlo needs paths, steps >= 1 (got {}, {})",
                self.paths, self.steps
            )));
        }
        Ok(())
    }

    /// Same settings with a different seed.
    pub fn with_seed(self, seed: u64) -> Self {
        McConfig { seed, ..self }
    }
}

/// One simulated path on the Euler grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `∫ c ds`.
    pub discount_integral: f64,
    /// `∫ e^{−∫c} f ds`.
    pub source_integral: f64,
    pub jump_count: u64,
}

/// Endpoint data of a path, without the trajectory.
#[derive(Debug, Clone, PartialEq)]
struct PathEnd {
    x: Vec<f64>,
    discount_integral: f64,
    source_integral: f64,
    /// `∫ f ds`, undiscounted.
    raw_source: f64,
    jump_count: u64,
}

/// Euler stepper shared by every estimator. Normals (Brownian and mark)
/// are multiplied by `sign`; the Poisson counts and uniforms are not, so a
/// `±1` pair run from cloned generators is antithetic.
fn simulate<R: Rng + ?Sized>(
    problem: &PideProblem,
    t0: f64,
    x0: &[f64],
    t_end: f64,
    steps: usize,
    sign: f64,
    rng: &mut R,
    mut record: Option<&mut PathSample>,
) -> PathEnd {
    let d = x0.len();
    let q = problem.diffusion.factors(d);
    let dt = (t_end - t0) / steps as f64;
    let sq = dt.sqrt();
    let mut x = x0.to_vec();
    let mut drift = vec![0.0; d];
    let mut z = vec![0.0; q];
    let mut dx = vec![0.0; d];
    let mut mark = vec![0.0; problem.jumps.dim()];
    let mut after = vec![0.0; d];
    let (mut disc, mut src, mut raw, mut jumps) = (0.0f64, 0.0f64, 0.0f64, 0u64);
    // linear problems only: c does not depend on u
    let c = problem.discount.rate(0.0);
    for i in 0..steps {
        let t = t0 + i as f64 * dt;
        let f = problem.source.eval(t, &x);
        src += (-disc).exp() * f * dt;
        raw += f * dt;
        disc += c * dt;

        problem.drift.eval_into(t, &x, &mut drift);
        for zj in z.iter_mut() {
            *zj = sign * sq * rng.sample::<f64, _>(StandardNormal);
        }
        problem.diffusion.apply(t, &x, &z, &mut dx);

        let rate = problem.intensity_at(t, &x) * dt;
        let count = if rate > 0.0 {
            Poisson::new(rate).expect("positive finite rate").sample(rng) as u64
        } else {
            0
        };
        // jumps read the left-point state and are applied at the step end
        let left = x.clone();
        for k in 0..d {
            x[k] += drift[k] * dt + dx[k];
        }
        for _ in 0..count {
            problem.jumps.sample_with(rng, &mut mark, sign);
            problem.jump_map.apply_into(&left, &mark, &mut after);
            for k in 0..d {
                x[k] += after[k] - left[k];
            }
        }
        jumps += count;
        if let Some(rec) = record.as_deref_mut() {
            rec.times.push(t + dt);
            rec.states.push(x.clone());
        }
    }
    PathEnd { x, discount_integral: disc, source_integral: src, raw_source: raw, jump_count: jumps }
}

/// Euler–Maruyama path from `start` to the horizon.
pub fn simulate_jump_diffusion<R: Rng + ?Sized>(
    problem: &PideProblem,
    start: &SpaceTimePoint,
    mc: &McConfig,
    rng: &mut R,
) -> Result<PathSample> {
    mc.validate()?;
    check_start(problem, start)?;
    let mut rec = PathSample {
        times: vec![start.t],
        states: vec![start.x.clone()],
        discount_integral: 0.0,
        source_integral: 0.0,
        jump_count: 0,
    };
    let end = simulate(problem, start.t, &start.x, problem.horizon, mc.steps, 1.0, rng, Some(&mut rec));
    rec.discount_integral = end.discount_integral;
    rec.source_integral = end.source_integral;
    rec.jump_count = end.jump_count;
    Ok(rec)
}

fn check_start(problem: &PideProblem, start: &SpaceTimePoint) -> Result<()> {
    if start.dim() != problem.dim {
        return Err(Error::DimensionMismatch { expected: problem.dim, got: start.dim() });
    }
    if !(start.t < problem.horizon) {
        return Err(Error::config(format!(
            "start time {} must be before the horizon {}",
            start.t, problem.horizon
        )));
    }
    Ok(())
}

/// Mean and standard error over `mc.paths` samples. With `antithetic` each
/// sample is the average of a `±` pair, so `2·paths` paths are simulated.
fn estimate<F>(mc: &McConfig, payoff: F) -> (f64, f64)
where
    F: Fn(&mut rng::SolverRng, f64) -> f64 + Sync,
{
    let values: Vec<f64> = (0..mc.paths)
        .into_par_iter()
        .with_min_len(64)
        .map(|i| {
            let mut r = rng::stream(mc.seed, i as u64);
            if mc.antithetic {
                let mut r2 = r.clone();
                0.5 * (payoff(&mut r, 1.0) + payoff(&mut r2, -1.0))
            } else {
                payoff(&mut r, 1.0)
            }
        })
        .collect();
    mean_se(&values)
}

/// Sample mean and standard error `s/√n` (zero for a single sample).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn require_linear(problem: &PideProblem) -> Result<()> {
    let linear = problem.discount.is_linear()
        && matches!(problem.jump_transform, JumpTransform::Identity)
        && matches!(problem.operator, LocalOperatorKind::Directional);
    if linear {
        Ok(())
    } else {
        Err(Error::NonLinearProblem(problem.name.clone()))
    }
}

/// Feynman–Kac estimate `E[∫e^{−∫c}f ds + e^{−∫c} φ(X_T)]` of `u(point)`
/// with its standard error.
pub fn fk_estimate(problem: &PideProblem, point: &SpaceTimePoint, mc: &McConfig) -> Result<(f64, f64)> {
    require_linear(problem)?;
    mc.validate()?;
    check_start(problem, point)?;
    Ok(estimate(mc, |r, sign| {
        let end = simulate(problem, point.t, &point.x, problem.horizon, mc.steps, sign, r, None);
        end.source_integral + (-end.discount_integral).exp() * problem.terminal.value(&end.x)
    }))
}

/// `u(point) = −(1/η) log E[exp(−η∫f ds − ηφ(X_T))]` for the HJB problem,
/// with the delta-method standard error `SE_mean/(η·mean)`.
pub fn hjb_log_mc(point: &SpaceTimePoint, problem: &PideProblem, mc: &McConfig) -> Result<(f64, f64)> {
    let eta = match problem.operator {
        LocalOperatorKind::LogTransform { eta } if eta > 0.0 => eta,
        _ => {
            return Err(Error::config(format!(
                "problem `{}` is not a log-transform HJB problem with eta > 0",
                problem.name
            )))
        }
    };
    mc.validate()?;
    check_start(problem, point)?;
    let (mean, se) = estimate(mc, |r, sign| {
        let end = simulate(problem, point.t, &point.x, problem.horizon, mc.steps, sign, r, None);
        (-eta * end.raw_source - eta * problem.terminal.value(&end.x)).exp()
    });
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::NonPositiveMean { mean });
    }
    Ok((-mean.ln() / eta, se / (eta * mean)))
}

/// Estimate of `(𝒮_h Ψ₁ − 𝒮_h Ψ₂)(point)` with common paths, where
/// `𝒮_h Ψ(t, x) = E[∫_t^{t+h} e^{−∫c} f ds + e^{−∫c} Ψ(t+h, X_{t+h})]`.
/// The source contributions cancel, leaving the discounted difference.
pub fn semigroup_difference<A, B>(
    problem: &PideProblem,
    point: &SpaceTimePoint,
    h: f64,
    psi1: A,
    psi2: B,
    mc: &McConfig,
) -> Result<(f64, f64)>
where
    A: Fn(f64, &[f64]) -> f64 + Sync,
    B: Fn(f64, &[f64]) -> f64 + Sync,
{
    require_linear(problem)?;
    mc.validate()?;
    if !(h > 0.0) {
        return Err(Error::config(format!("semigroup step h must be positive (got {h})")));
    }
    if point.dim() != problem.dim {
        return Err(Error::DimensionMismatch { expected: problem.dim, got: point.dim() });
    }
    let t1 = point.t + h;
    Ok(estimate(mc, |r, sign| {
        let end = simulate(problem, point.t, &point.x, t1, mc.steps, sign, r, None);
        (-end.discount_integral).exp() * (psi1(t1, &end.x) - psi2(t1, &end.x))
    }))
}

/// Published reference values for the default-risk benchmark at `d = 100`.
pub fn reference_value(tag: &str) -> Result<f64> {
    match tag {
        "default_risk_nojump_d100" => Ok(57.300),
        "default_risk_jump_d100" => Ok(55.810),
        other => Err(Error::UnknownTag(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{
        hjb_problem, linear_quadratic_problem, linear_quadratic_solution, Diffusion, Discount, Drift, HjbParams,
        LinearQuadraticParams, Source, Terminal,
    };

    fn lq(d: usize) -> (LinearQuadraticParams, PideProblem) {
        let p = LinearQuadraticParams::standard(d, d);
        let prob = linear_quadratic_problem(&p).unwrap();
        (p, prob)
    }

    fn quiet(d: usize) -> PideProblem {
        let (_, mut p) = lq(d);
        p.drift = Drift::Zero;
        p.diffusion = Diffusion::Zero;
        p.intensity = 0.0;
        p.discount = Discount::Zero;
        p
    }

    fn mc(paths: usize, steps: usize) -> McConfig {
        McConfig { paths, steps, antithetic: false, seed: 5 }
    }

    #[test]
    fn constant_path_without_dynamics() {
        let p = quiet(3);
        let s = SpaceTimePoint::new(0.1, vec![0.3, -0.2, 1.0]);
        let path = simulate_jump_diffusion(&p, &s, &mc(1, 10), &mut rng::seeded(0)).unwrap();
        assert_eq!(path.times.len(), 11);
        assert_eq!(path.states.len(), 11);
        assert!(path.times.windows(2).all(|w| w[1] > w[0]));
        assert!(path.states.iter().all(|x| *x == s.x));
    }

    #[test]
    fn constant_drift_is_exact() {
        let mut p = quiet(2);
        p.drift = Drift::Constant(vec![1.0, -2.0]);
        let s = SpaceTimePoint::new(0.0, vec![0.5, 0.5]);
        let path = simulate_jump_diffusion(&p, &s, &mc(1, 7), &mut rng::seeded(0)).unwrap();
        let end = path.states.last().unwrap();
        assert!((end[0] - 1.0).abs() < 1e-14 && (end[1] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn poisson_mean_jump_count() {
        let (_, p) = lq(2);
        let s = SpaceTimePoint::new(0.0, vec![0.0; 2]);
        let n = 100_000;
        let counts: Vec<f64> = (0..n)
            .map(|i| {
                let mut r = rng::stream(9, i);
                simulate_jump_diffusion(&p, &s, &mc(1, 20), &mut r).unwrap().jump_count as f64
            })
            .collect();
        let (m, se) = mean_se(&counts);
        assert!((m - 0.25 * 0.5).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn trivial_fk_values() {
        let mut p = quiet(2);
        p.terminal = Terminal::Constant(1.0);
        let s = SpaceTimePoint::new(0.1, vec![0.0; 2]);
        let (v, se) = fk_estimate(&p, &s, &mc(50, 10)).unwrap();
        assert_eq!((v, se), (1.0, 0.0));

        p.terminal = Terminal::Constant(0.0);
        p.source = Source::Constant(1.0);
        let (v, _) = fk_estimate(&p, &s, &mc(10, 13)).unwrap();
        assert!((v - 0.4).abs() <= 0.4 / 13.0);
    }

    #[test]
    fn fk_rejects_nonlinear() {
        let p = hjb_problem(&HjbParams::standard(2)).unwrap();
        let s = SpaceTimePoint::new(0.0, vec![0.0; 2]);
        assert!(matches!(fk_estimate(&p, &s, &mc(10, 10)), Err(Error::NonLinearProblem(_))));
    }

    #[test]
    fn fk_matches_closed_form_small() {
        let (params, p) = lq(3);
        let s = SpaceTimePoint::new(0.1, vec![0.4, -0.3, 0.8]);
        let (v, se) = fk_estimate(&p, &s, &McConfig { paths: 20_000, steps: 100, antithetic: true, seed: 2 }).unwrap();
        let exact = linear_quadratic_solution(&s, &params);
        assert!((v - exact).abs() < (3.0 * se).max(0.02 * exact.abs()), "{v} ± {se} vs {exact}");
    }

    #[test]
    fn antithetic_does_not_increase_se() {
        let (_, p) = lq(3);
        let s = SpaceTimePoint::new(0.0, vec![0.2; 3]);
        let plain = fk_estimate(&p, &s, &mc(4000, 20)).unwrap().1;
        let anti = fk_estimate(&p, &s, &McConfig { antithetic: true, ..mc(4000, 20) }).unwrap().1;
        assert!(anti <= plain, "{anti} > {plain}");
    }

    #[test]
    fn hjb_trivial_values() {
        let mut hp = HjbParams::standard(2);
        hp.lambda = 0.0;
        hp.f = 0.0;
        let mut p = hjb_problem(&hp).unwrap();
        p.terminal = Terminal::Constant(0.0);
        let s = SpaceTimePoint::new(0.25, vec![0.1, 0.2]);
        let (v, se) = hjb_log_mc(&s, &p, &mc(20, 5)).unwrap();
        assert_eq!((v, se), (0.0, 0.0));

        hp.f = 2.0;
        let mut p = hjb_problem(&hp).unwrap();
        p.terminal = Terminal::Constant(0.0);
        let (v, _) = hjb_log_mc(&s, &p, &mc(20, 8)).unwrap();
        assert!((v - 1.5).abs() < 1e-12, "{v}");
    }

    #[test]
    fn hjb_no_jump_closed_form() {
        // λ = 0, φ = |x|²: E[exp(−η|x + √2 W_τ|²)] is Gaussian, so
        // u = f τ + |x|²/(1+4ητ) + (d/2η) ln(1+4ητ)
        let mut hp = HjbParams::standard(3);
        hp.lambda = 0.0;
        let p = hjb_problem(&hp).unwrap();
        let s = SpaceTimePoint::new(0.0, vec![0.3, -0.5, 0.2]);
        let tau = 1.0;
        let r2: f64 = s.x.iter().map(|v| v * v).sum();
        let exact = 2.0 * tau + r2 / (1.0 + 4.0 * tau) + 1.5 * (1.0 + 4.0 * tau).ln();
        let (v, se) = hjb_log_mc(&s, &p, &McConfig { paths: 40_000, steps: 1, antithetic: false, seed: 1 }).unwrap();
        assert!((v - exact).abs() < 3.5 * se, "{v} ± {se} vs {exact}");
    }

    #[test]
    fn hjb_self_consistent_across_streams() {
        let p = hjb_problem(&HjbParams::standard(3)).unwrap();
        let s = SpaceTimePoint::new(0.0, vec![0.0; 3]);
        let a = hjb_log_mc(&s, &p, &McConfig { paths: 20_000, steps: 4, antithetic: false, seed: 1 }).unwrap();
        let b = hjb_log_mc(&s, &p, &McConfig { paths: 20_000, steps: 4, antithetic: true, seed: 77 }).unwrap();
        assert!((a.0 - b.0).abs() < 3.0 * (a.1 * a.1 + b.1 * b.1).sqrt(), "{a:?} vs {b:?}");
    }

    #[test]
    fn semigroup_difference_of_constants() {
        let (_, p) = lq(2);
        let s = SpaceTimePoint::new(0.0, vec![0.1, 0.1]);
        let (v, se) = semigroup_difference(&p, &s, 0.25, |_, _| 1.0, |_, _| 0.0, &mc(100, 5)).unwrap();
        assert!((v - (-2.0f64 * 0.25).exp()).abs() < 1e-12);
        assert!(se < 1e-15);
    }

    #[test]
    fn reference_values() {
        assert_eq!(reference_value("default_risk_nojump_d100").unwrap(), 57.300);
        assert_eq!(reference_value("default_risk_jump_d100").unwrap(), 55.810);
        assert!(matches!(reference_value("nope"), Err(Error::UnknownTag(_))));
    }

    #[test]
    fn estimates_independent_of_thread_count() {
        let (_, p) = lq(2);
        let s = SpaceTimePoint::new(0.0, vec![0.2, -0.1]);
        let run = |n| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap()
                .install(|| fk_estimate(&p, &s, &mc(3000, 10)).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
