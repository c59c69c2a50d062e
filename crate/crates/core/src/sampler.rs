//! Collocation sampling: uniform over the box, residual-adaptive (RAD)
//! resampling of a uniform pool, and geometric Brownian motion paths
//! blended with RAD.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpaceTimePoint;
use crate::problems::{PideProblem, SamplingBox};

/// RAD weights `ε^k / mean(ε^k) + c` on a pool of `pool_size` candidates
/// (`20·M` when absent), rebuilt every `refresh_every` inner steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadParams {
    pub pool_size: Option<usize>,
    pub k: f64,
    pub c: f64,
    pub refresh_every: usize,
}

impl Default for RadParams {
    fn default() -> Self {
        RadParams { pool_size: None, k: 1.0, c: 1.0, refresh_every: 1 }
    }
}

impl RadParams {
    pub fn pool_size_for(&self, batch: usize) -> usize {
        self.pool_size.unwrap_or(20 * batch)
    }

    pub fn validate(&self, batch: usize) -> Result<()> {
        if self.pool_size_for(batch) < batch {
            return Err(Error::config(format!(
                "RAD pool size {} is smaller than the batch size {batch}",
                self.pool_size_for(batch)
            )));
        }
        if !(self.k >= 0.0) || !(self.c >= 0.0) || self.refresh_every == 0 {
            return Err(Error::config("RAD needs k >= 0, c >= 0 and refresh_every >= 1"));
        }
        Ok(())
    }
}

/// Geometric Brownian motion collocation paths started at the problem's
/// reference point, blended with RAD: a fraction `mix` of every batch comes
/// from RAD, the rest from path points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub paths: usize,
    pub steps: usize,
    pub mix: f64,
    /// GBM drift per unit time.
    pub drift: f64,
    /// GBM volatility.
    pub vol: f64,
    #[serde(default)]
    pub rad: RadParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerSpec {
    Uniform,
    Rad(RadParams),
    Path(PathParams),
}

impl SamplerSpec {
    pub fn validate(&self, batch: usize) -> Result<()> {
        match self {
            SamplerSpec::Uniform => Ok(()),
            SamplerSpec::Rad(r) => r.validate(batch),
            SamplerSpec::Path(p) => {
                if !(0.0..=1.0).contains(&p.mix) || p.paths == 0 || p.steps == 0 {
                    return Err(Error::config("path sampling needs mix in [0,1], paths >= 1, steps >= 1"));
                }
                p.rad.validate(batch)
            }
        }
    }
}

fn uniform_point<R: Rng + ?Sized>(bx: &SamplingBox, rng: &mut R) -> SpaceTimePoint {
    let mut t = rng.random::<f64>() * bx.horizon;
    while t >= bx.horizon {
        t = rng.random::<f64>() * bx.horizon;
    }
    let x = bx
        .lower
        .iter()
        .zip(&bx.upper)
        .map(|(&lo, &hi)| if lo == hi { lo } else { lo + (hi - lo) * rng.random::<f64>() })
        .collect();
    SpaceTimePoint { t, x }
}

/// `m` i.i.d. uniform points of `[0, T) × box`.
pub fn sample_uniform<R: Rng + ?Sized>(bx: &SamplingBox, m: usize, rng: &mut R) -> Vec<SpaceTimePoint> {
    (0..m).map(|_| uniform_point(bx, rng)).collect()
}

/// `ε^k / mean(ε^k) + c` with `ε = |r|`; `None` when every weight is zero
/// or not finite (the caller then selects uniformly).
pub fn rad_weights(residuals: &[f64], k: f64, c: f64) -> Option<Vec<f64>> {
    let powered: Vec<f64> = residuals.iter().map(|r| r.abs().powf(k)).collect();
    let mean = powered.iter().sum::<f64>() / powered.len() as f64;
    let w: Vec<f64> = if mean > 0.0 && mean.is_finite() {
        powered.iter().map(|p| p / mean + c).collect()
    } else {
        vec![c; powered.len()]
    };
    (w.iter().all(|v| v.is_finite()) && w.iter().any(|&v| v > 0.0)).then_some(w)
}

/// A RAD candidate pool with its selection law.
#[derive(Debug, Clone)]
pub struct RadPool {
    pub points: Vec<SpaceTimePoint>,
    selector: Option<WeightedIndex<f64>>,
}

impl RadPool {
    /// Draws `pool_size` uniform candidates and weights them by the
    /// residuals returned for the whole pool.
    pub fn build<R, F>(bx: &SamplingBox, pool_size: usize, k: f64, c: f64, residuals: F, rng: &mut R) -> Result<Self>
    where
        R: Rng + ?Sized,
        F: FnOnce(&[SpaceTimePoint], &mut R) -> Result<Vec<f64>>,
    {
        let points = sample_uniform(bx, pool_size, rng);
        let res = residuals(&points, rng)?;
        if res.len() != points.len() {
            return Err(Error::DimensionMismatch { expected: points.len(), got: res.len() });
        }
        Ok(RadPool::from_weights(points, rad_weights(&res, k, c)))
    }

    pub fn from_weights(points: Vec<SpaceTimePoint>, weights: Option<Vec<f64>>) -> Self {
        let selector = weights.and_then(|w| WeightedIndex::new(w).ok());
        RadPool { points, selector }
    }

    pub fn draw_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match &self.selector {
            Some(s) => s.sample(rng),
            None => rng.random_range(0..self.points.len()),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<SpaceTimePoint> {
        (0..m).map(|_| self.points[self.draw_index(rng)].clone()).collect()
    }
}

/// `m` points resampled from a fresh uniform pool with probability
/// proportional to the RAD weights of `residual_fn`.
pub fn sample_rad<R, F>(residual_fn: F, bx: &SamplingBox, m: usize, params: &RadParams, rng: &mut R) -> Result<Vec<SpaceTimePoint>>
where
    R: Rng + ?Sized,
    F: Fn(&SpaceTimePoint) -> f64,
{
    params.validate(m)?;
    let pool = RadPool::build(
        bx,
        params.pool_size_for(m),
        params.k,
        params.c,
        |pts, _| Ok(pts.iter().map(&residual_fn).collect()),
        rng,
    )?;
    Ok(pool.draw(m, rng))
}

/// Points `(tᵢ, Xᵢ)` along `paths` GBM trajectories on `steps` uniform
/// times in `[0, T)`, clamped to the sampling box.
pub fn simulate_gbm_points<R: Rng + ?Sized>(
    problem: &PideProblem,
    params: &PathParams,
    rng: &mut R,
) -> Result<Vec<SpaceTimePoint>> {
    let start = problem
        .reference_start
        .clone()
        .ok_or_else(|| Error::config(format!("problem `{}` has no reference start point", problem.name)))?;
    if start.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::config("path sampling needs a positive start point"));
    }
    let bx = &problem.sampling_box;
    let dt = problem.horizon / params.steps as f64;
    let drift = (params.drift - 0.5 * params.vol * params.vol) * dt;
    let diff = params.vol * dt.sqrt();
    let mut out = Vec::with_capacity(params.paths * params.steps);
    for _ in 0..params.paths {
        let mut x = start.clone();
        for i in 0..params.steps {
            let clamped = x
                .iter()
                .zip(bx.lower.iter().zip(&bx.upper))
                .map(|(&v, (&lo, &hi))| v.clamp(lo, hi))
                .collect();
            out.push(SpaceTimePoint::new(i as f64 * dt, clamped));
            for v in x.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v *= (drift + diff * z).exp();
            }
        }
    }
    Ok(out)
}

/// Batch of `m` points: `round(mix·m)` from RAD, the rest drawn uniformly
/// from fresh GBM path points.
pub fn sample_paths<R, F>(
    problem: &PideProblem,
    m: usize,
    params: &PathParams,
    residual_fn: F,
    rng: &mut R,
) -> Result<Vec<SpaceTimePoint>>
where
    R: Rng + ?Sized,
    F: Fn(&SpaceTimePoint) -> f64,
{
    let n_rad = (params.mix * m as f64).round() as usize;
    let mut out = if n_rad > 0 {
        sample_rad(residual_fn, &problem.sampling_box, n_rad, &params.rad, rng)?
    } else {
        Vec::new()
    };
    if n_rad < m {
        let pts = simulate_gbm_points(problem, params, rng)?;
        out.extend((0..m - n_rad).map(|_| pts[rng.random_range(0..pts.len())].clone()));
    }
    Ok(out)
}

/// Stateful batch source used by the trainer: pools are rebuilt by
/// [`refresh`](Self::refresh) and batches drawn from the current pools.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    spec: SamplerSpec,
    batch: usize,
    rad: Option<RadPool>,
    paths: Vec<SpaceTimePoint>,
}

impl BatchSampler {
    pub fn new(spec: SamplerSpec, batch: usize) -> Result<Self> {
        spec.validate(batch)?;
        Ok(BatchSampler { spec, batch, rad: None, paths: Vec::new() })
    }

    pub fn spec(&self) -> &SamplerSpec {
        &self.spec
    }

    /// Whether the pools must be rebuilt before inner step `inner_index`
    /// (counted over the whole run).
    pub fn needs_refresh(&self, inner_index: usize) -> bool {
        match &self.spec {
            SamplerSpec::Uniform => false,
            SamplerSpec::Rad(r) => self.rad.is_none() || inner_index % r.refresh_every == 0,
            SamplerSpec::Path(p) => self.rad.is_none() || inner_index % p.rad.refresh_every == 0,
        }
    }

    pub fn uses_residuals(&self) -> bool {
        !matches!(self.spec, SamplerSpec::Uniform)
    }

    pub fn refresh<R, F>(&mut self, problem: &PideProblem, residuals: F, rng: &mut R) -> Result<()>
    where
        R: Rng + ?Sized,
        F: FnOnce(&[SpaceTimePoint], &mut R) -> Result<Vec<f64>>,
    {
        let rad = match &self.spec {
            SamplerSpec::Uniform => return Ok(()),
            SamplerSpec::Rad(r) => *r,
            SamplerSpec::Path(p) => p.rad,
        };
        let pool_size = rad.pool_size_for(self.batch);
        self.rad = Some(RadPool::build(&problem.sampling_box, pool_size, rad.k, rad.c, residuals, rng)?);
        if let SamplerSpec::Path(p) = &self.spec {
            if p.mix < 1.0 {
                self.paths = simulate_gbm_points(problem, p, rng)?;
            }
        }
        Ok(())
    }

    pub fn draw<R: Rng + ?Sized>(&self, problem: &PideProblem, m: usize, rng: &mut R) -> Vec<SpaceTimePoint> {
        match (&self.spec, &self.rad) {
            (SamplerSpec::Uniform, _) | (_, None) => sample_uniform(&problem.sampling_box, m, rng),
            (SamplerSpec::Rad(_), Some(pool)) => pool.draw(m, rng),
            (SamplerSpec::Path(p), Some(pool)) => {
                let n_rad = (p.mix * m as f64).round() as usize;
                let mut out = pool.draw(n_rad, rng);
                if !self.paths.is_empty() {
                    out.extend((n_rad..m).map(|_| self.paths[rng.random_range(0..self.paths.len())].clone()));
                } else {
                    out.extend(pool.draw(m - n_rad, rng));
                }
                out
            }
        }
    }
}
