//! The training loop: inner recursion against frozen single-jump targets,
//! per-epoch candidate snapshots and Polyak block distillation.
//!
//! Each epoch starts from the live parameters, runs `n − 1` inner steps of
//! `N` optimizer updates (targets always from the parameters frozen at the
//! start of the inner step) and records the result as the epoch candidate.
//! Every `K` epochs a student initialised at the last candidate is regressed
//! onto the Polyak blend of the block-start field and the block candidates.

mod adam;
mod block;

use std::hash::{DefaultHasher, Hasher};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{sgd_step, AdamConfig, AdamState, OptimizerKind};
pub use block::{block_target_eval, block_weights};

use crate::error::{Error, Result};
use crate::field::{Field, SpaceTimePoint};
use crate::network::{DgmConfig, DgmNetwork, DgmTrace, HardConstraint, HpinnField, ParamVector};
use crate::problems::PideProblem;
use crate::rng::{self, SolverRng};
use crate::sampler::{BatchSampler, SamplerSpec};
use crate::target::{g_xi_at, TargetSample, XiParam};

/// Samples per parallel work unit. Partial sums are reduced in chunk order,
/// so results do not depend on the number of threads.
pub const CHUNK: usize = 16;

fn default_distill_steps() -> usize {
    200
}

fn default_distill_lr() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Learning rate of the main optimizer.
    pub eta: f64,
    pub alpha: f64,
    pub h: f64,
    /// Inner steps; the recursion runs `n − 1` frozen phases.
    pub n: usize,
    /// Gradient steps per frozen phase.
    #[serde(rename = "N")]
    pub grad_steps: usize,
    #[serde(rename = "M")]
    pub batch: usize,
    #[serde(rename = "K")]
    pub block: usize,
    pub k_star: usize,
    #[serde(default = "default_distill_steps")]
    pub distill_steps: usize,
    #[serde(default = "default_distill_lr")]
    pub distill_lr: f64,
    pub seed: u64,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub optimizer: OptimizerKind,
}

impl TrainConfig {
    /// `M = 1024`, `n = 20`, `N = 32`, `k* = 1000`, `K = 10`, `α = 0.4`,
    /// `h = 0.5`, `η = 5e-4`.
    pub fn standard() -> Self {
        TrainConfig {
            eta: 5e-4,
            alpha: 0.4,
            h: 0.5,
            n: 20,
            grad_steps: 32,
            batch: 1024,
            block: 10,
            k_star: 1000,
            distill_steps: 200,
            distill_lr: 1e-3,
            seed: 0,
            adam: AdamConfig::default(),
            optimizer: OptimizerKind::Adam,
        }
    }

    pub fn xi(&self) -> Result<XiParam> {
        XiParam::from_scale(self.h, self.n)
    }

    /// Optimizer updates per epoch, `(n − 1)·N`.
    pub fn updates_per_epoch(&self) -> usize {
        (self.n - 1) * self.grad_steps
    }

    /// Checks the configuration against `problem`. Violating the
    /// contraction range is an error for linear contractive problems and a
    /// logged warning otherwise; the warnings are also returned.
    pub fn validate(&self, problem: &PideProblem) -> Result<Vec<String>> {
        if self.n < 2 {
            return Err(Error::config(format!("n must be >= 2 (got {})", self.n)));
        }
        if self.batch == 0 || self.block == 0 {
            return Err(Error::config("M and K must be >= 1"));
        }
        if !(self.h > 0.0) || !(self.alpha > 0.0) || !(self.eta > 0.0) || !(self.distill_lr > 0.0) {
            return Err(Error::config("h, alpha, eta and distill_lr must be positive"));
        }
        self.adam.validate()?;
        let mut warnings = Vec::new();
        match problem.contraction_floor.filter(|c| *c > 0.0) {
            Some(c0) => {
                let bound = 2.0 * self.h / (1.0 + (-c0 * self.h).exp());
                if self.alpha >= bound {
                    return Err(Error::config(format!(
                        "alpha = {} is outside the contraction range (0, {bound:.6}) for c0 = {c0}",
                        self.alpha
                    )));
                }
            }
            None => {
                // c₀ unknown: the bound degrades to h as c₀ → 0
                if self.alpha > self.h {
                    let msg = format!(
                        "alpha = {} exceeds h = {} on a problem without a known discount floor; the relaxed update may not contract",
                        self.alpha, self.h
                    );
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
            }
        }
        Ok(warnings)
    }
}

/// Outer-epoch state.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub live: ParamVector,
    pub frozen: ParamVector,
    /// Live parameters at the start of the current distillation block.
    pub block_start: ParamVector,
    pub block_snapshots: Vec<ParamVector>,
    pub adam: AdamState,
    pub step_count: u64,
    pub epoch: usize,
    /// Inner steps completed over the whole run.
    pub inner_index: usize,
    pub rng: SolverRng,
}

impl TrainState {
    pub fn new(initial: ParamVector, seed: u64) -> Self {
        let len = initial.len();
        TrainState {
            frozen: initial.clone(),
            block_start: initial.clone(),
            live: initial,
            block_snapshots: Vec::new(),
            adam: AdamState::new(len),
            step_count: 0,
            epoch: 0,
            inner_index: 0,
            rng: rng::stream(seed, 0x7241),
        }
    }
}

/// Order-sensitive fingerprint of a parameter vector.
pub fn fingerprint(params: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    for v in params {
        h.write_u64(v.to_bits());
    }
    h.finish()
}

/// One row of the metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub epoch: usize,
    pub inner_step: Option<usize>,
    pub loss: Option<f64>,
    pub test_mae: Option<f64>,
    pub wall_seconds: f64,
}

/// Gradient-step report passed to [`TrainCallbacks::on_gradient_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub epoch: usize,
    pub inner_step: usize,
    pub step: usize,
    pub loss: f64,
    pub frozen_fingerprint: u64,
}

pub trait TrainCallbacks {
    /// Test error of the hard-constrained field with these parameters.
    fn evaluate(&mut self, _params: &[f64]) -> Result<Option<f64>> {
        Ok(None)
    }
    fn on_row(&mut self, _row: &MetricRow) -> Result<()> {
        Ok(())
    }
    fn on_gradient_step(&mut self, _info: &StepInfo) {}
    /// Called after every distillation with the new live parameters.
    fn on_block_end(&mut self, _epoch: usize, _params: &[f64]) -> Result<()> {
        Ok(())
    }
}

/// Callbacks that do nothing.
pub struct NoCallbacks;
impl TrainCallbacks for NoCallbacks {}

/// Result of [`Trainer::train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: DgmNetwork,
    pub rows: Vec<MetricRow>,
    pub state: TrainState,
}

/// Mean squared error `(1/M) Σ (u_live − target)²` and its gradient.
///
/// `u = A + B·v`, so the per-sample upstream gradient on `v` is
/// `2(u − target)·B/M`.
pub fn loss_and_grad(
    config: &DgmConfig,
    hc: &HardConstraint,
    params: &[f64],
    points: &[SpaceTimePoint],
    targets: &[f64],
) -> (f64, Vec<f64>) {
    let m = points.len() as f64;
    let parts: Vec<(f64, Vec<f64>)> = points
        .par_chunks(CHUNK)
        .zip(targets.par_chunks(CHUNK))
        .map(|(pts, tgs)| {
            let mut trace = DgmTrace::new(config);
            let mut grad = vec![0.0; params.len()];
            let mut sq = 0.0;
            for (p, &g) in pts.iter().zip(tgs) {
                let v = trace.forward(params, p.t, &p.x);
                let b = hc.b(p.t);
                let r = hc.a(p.t, &p.x) + b * v - g;
                sq += r * r;
                trace.backward(params, 2.0 * r * b / m, &mut grad);
            }
            (sq, grad)
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.len()];
    for (sq, g) in parts {
        loss += sq;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    (loss / m, grad)
}

/// Stateless pieces of the loop bound to one problem and architecture.
pub struct Trainer<'p> {
    pub problem: &'p PideProblem,
    pub net: DgmConfig,
    pub hc: HardConstraint,
    pub config: TrainConfig,
    pub xi: XiParam,
    pub sampler: BatchSampler,
}

impl<'p> Trainer<'p> {
    pub fn new(problem: &'p PideProblem, net: DgmConfig, config: TrainConfig, sampler: SamplerSpec) -> Result<Self> {
        net.validate()?;
        if net.d != problem.dim {
            return Err(Error::DimensionMismatch { expected: problem.dim, got: net.d });
        }
        config.validate(problem)?;
        Ok(Trainer {
            problem,
            net,
            hc: problem.hard_constraint(),
            xi: config.xi()?,
            sampler: BatchSampler::new(sampler, config.batch)?,
            config,
        })
    }

    pub fn field<'a>(&'a self, params: &'a [f64]) -> HpinnField<'a> {
        HpinnField::new(self.net, params, &self.hc)
    }

    pub fn initial_state(&self) -> TrainState {
        let theta = crate::network::init_params(&self.net, self.config.seed);
        TrainState::new(theta, self.config.seed)
    }

    /// Targets `G_ξ` of the frozen field for a batch, in parallel.
    pub fn targets(&self, frozen: &[f64], batch: &[TargetSample]) -> Result<Vec<f64>> {
        let field = self.field(frozen);
        let chunks: Vec<Result<Vec<f64>>> = batch
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(c, samples)| {
                samples
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let g = g_xi_at(&field, self.problem, self.xi, s.point.t, &s.point.x, &s.jump)?;
                        if g.is_finite() {
                            Ok(g)
                        } else {
                            Err(Error::NonFiniteTarget { sample: c * CHUNK + i })
                        }
                    })
                    .collect()
            })
            .collect();
        let mut out = Vec::with_capacity(batch.len());
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }

    /// `(1/M) Σ (u_live(y_m) − G_ξ(y_m, e_m; u_frozen))²`.
    pub fn empirical_loss(&self, live: &[f64], frozen: &[f64], batch: &[TargetSample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::config("empirical loss needs a nonempty batch"));
        }
        let targets = self.targets(frozen, batch)?;
        let field = self.field(live);
        let parts: Vec<f64> = batch
            .par_chunks(CHUNK)
            .zip(targets.par_chunks(CHUNK))
            .map(|(s, g)| {
                s.iter()
                    .zip(g)
                    .map(|(s, g)| {
                        let r = field.value(s.point.t, &s.point.x) - g;
                        r * r
                    })
                    .sum::<f64>()
            })
            .collect();
        Ok(parts.iter().sum::<f64>() / batch.len() as f64)
    }

    fn draw_batch(&self, rng: &mut SolverRng) -> Vec<TargetSample> {
        let points = self.sampler.draw(self.problem, self.config.batch, rng);
        points
            .into_iter()
            .map(|point| TargetSample { point, jump: self.problem.jumps.sample(rng) })
            .collect()
    }

    fn apply_update(&self, state: &mut TrainState, grad: &[f64]) {
        match self.config.optimizer {
            OptimizerKind::Adam => state.adam.step(&self.config.adam, self.config.eta, &mut state.live, grad),
            OptimizerKind::Sgd => sgd_step(self.config.eta, &mut state.live, grad),
        }
        state.step_count += 1;
    }

    /// One optimizer update of the live parameters on `batch`; returns the
    /// pre-update loss.
    pub fn gradient_step(&self, state: &mut TrainState, batch: &[TargetSample]) -> Result<f64> {
        let targets = self.targets(&state.frozen, batch)?;
        let points: Vec<SpaceTimePoint> = batch.iter().map(|s| s.point.clone()).collect();
        let (loss, grad) = loss_and_grad(&self.net, &self.hc, &state.live, &points, &targets);
        self.apply_update(state, &grad);
        Ok(loss)
    }

    /// Rebuilds the RAD pool with residuals `|u_live − G_ξ(u_frozen)|`,
    /// one jump per pool point.
    fn refresh_sampler(&mut self, state: &mut TrainState) -> Result<()> {
        if !self.sampler.needs_refresh(state.inner_index) {
            return Ok(());
        }
        let mut sampler = self.sampler.clone();
        let live = state.live.clone();
        let frozen = state.frozen.clone();
        sampler.refresh(
            self.problem,
            |pool, rng| {
                let batch: Vec<TargetSample> = pool
                    .iter()
                    .map(|p| TargetSample { point: p.clone(), jump: self.problem.jumps.sample(rng) })
                    .collect();
                let targets = self.targets(&frozen, &batch)?;
                let field = self.field(&live);
                Ok(batch.iter().zip(&targets).map(|(s, g)| (field.value(s.point.t, &s.point.x) - g).abs()).collect())
            },
            &mut state.rng,
        )?;
        self.sampler = sampler;
        Ok(())
    }

    /// `n − 1` frozen phases of `N` updates each; returns the candidate and
    /// the mean loss of every phase.
    pub fn inner_recursion<C: TrainCallbacks + ?Sized>(
        &mut self,
        state: &mut TrainState,
        callbacks: &mut C,
    ) -> Result<(ParamVector, Vec<f64>)> {
        state.frozen = state.live.clone();
        let mut losses = Vec::with_capacity(self.config.n - 1);
        for i in 0..self.config.n - 1 {
            self.refresh_sampler(state)?;
            let fp = fingerprint(&state.frozen);
            let mut acc = 0.0;
            for j in 0..self.config.grad_steps {
                let batch = self.draw_batch(&mut state.rng);
                let loss = self.gradient_step(state, &batch)?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch: state.epoch, inner_step: i, loss });
                }
                acc += loss;
                callbacks.on_gradient_step(&StepInfo {
                    epoch: state.epoch,
                    inner_step: i,
                    step: j,
                    loss,
                    frozen_fingerprint: fp,
                });
            }
            debug_assert_eq!(fp, fingerprint(&state.frozen), "frozen target changed within an inner step");
            losses.push(if self.config.grad_steps > 0 { acc / self.config.grad_steps as f64 } else { f64::NAN });
            state.frozen = state.live.clone();
            state.inner_index += 1;
        }
        Ok((state.live.clone(), losses))
    }

    /// Regresses a student, initialised at the last snapshot, onto the
    /// Polyak blend of the block start and the block snapshots with fresh
    /// Adam moments. Clears the snapshots and returns the student.
    pub fn distill(&self, state: &mut TrainState) -> Result<ParamVector> {
        let last = match state.block_snapshots.last() {
            Some(s) => s.clone(),
            None => return Ok(state.live.clone()),
        };
        let weights = block_weights(self.config.alpha, self.config.h, state.block_snapshots.len());
        let mut student = last;
        let mut adam = AdamState::new(student.len());
        for _ in 0..self.config.distill_steps {
            let points = self.sampler.draw(self.problem, self.config.batch, &mut state.rng);
            let targets = self.block_targets(&state.block_start, &state.block_snapshots, &weights, &points);
            let (_, grad) = loss_and_grad(&self.net, &self.hc, &student, &points, &targets);
            adam.step(&self.config.adam, self.config.distill_lr, &mut student, &grad);
        }
        state.block_snapshots.clear();
        Ok(student)
    }

    fn block_targets(
        &self,
        start: &[f64],
        snapshots: &[ParamVector],
        weights: &[f64],
        points: &[SpaceTimePoint],
    ) -> Vec<f64> {
        let fields: Vec<HpinnField> =
            std::iter::once(start).chain(snapshots.iter().map(|s| &s[..])).map(|p| self.field(p)).collect();
        let parts: Vec<Vec<f64>> = points
            .par_chunks(CHUNK)
            .map(|pts| {
                pts.iter()
                    .map(|p| {
                        weights
                            .iter()
                            .zip(&fields)
                            .filter(|(w, _)| **w != 0.0)
                            .map(|(w, f)| w * f.value(p.t, &p.x))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        parts.concat()
    }

    /// Runs `k_star` epochs from `state`.
    pub fn run<C: TrainCallbacks + ?Sized>(&mut self, mut state: TrainState, callbacks: &mut C) -> Result<TrainOutcome> {
        let clock = Instant::now();
        let mut rows = Vec::new();
        let mut emit = |row: MetricRow, callbacks: &mut C| -> Result<()> {
            callbacks.on_row(&row)?;
            rows.push(row);
            Ok(())
        };
        let initial_mae = callbacks.evaluate(&state.live)?;
        emit(
            MetricRow { epoch: 0, inner_step: None, loss: None, test_mae: initial_mae, wall_seconds: clock.elapsed().as_secs_f64() },
            callbacks,
        )?;
        for epoch in 1..=self.config.k_star {
            state.epoch = epoch;
            let (candidate, losses) = self.inner_recursion(&mut state, callbacks)?;
            state.block_snapshots.push(candidate);
            let block_end = state.block_snapshots.len() == self.config.block || epoch == self.config.k_star;
            if block_end {
                let student = self.distill(&mut state)?;
                state.live = student;
                state.block_start = state.live.clone();
                callbacks.on_block_end(epoch, &state.live)?;
            }
            let mae = callbacks.evaluate(&state.live)?;
            let last = losses.len().saturating_sub(1);
            for (i, loss) in losses.into_iter().enumerate() {
                emit(
                    MetricRow {
                        epoch,
                        inner_step: Some(i),
                        loss: Some(loss),
                        test_mae: if i == last { mae } else { None },
                        wall_seconds: clock.elapsed().as_secs_f64(),
                    },
                    callbacks,
                )?;
            }
        }
        let network = DgmNetwork::new(self.net, state.live.clone())?;
        Ok(TrainOutcome { network, rows, state })
    }

    /// Runs the full loop from freshly initialised parameters.
    pub fn train<C: TrainCallbacks + ?Sized>(&mut self, callbacks: &mut C) -> Result<TrainOutcome> {
        let state = self.initial_state();
        self.run(state, callbacks)
    }
}

/// Convenience wrapper around [`Trainer::train`].
pub fn train<C: TrainCallbacks + ?Sized>(
    problem: &PideProblem,
    net: DgmConfig,
    config: TrainConfig,
    sampler: SamplerSpec,
    callbacks: &mut C,
) -> Result<TrainOutcome> {
    Trainer::new(problem, net, config, sampler)?.train(callbacks)
}
