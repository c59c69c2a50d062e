//! Multi-seed training runs scored against a cached test set.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use pide_core::network::{write_checkpoint, DgmConfig, DgmNetwork, HardConstraint, HpinnField, ParamVector};
use pide_core::problems::ProblemConfig;
use pide_core::sampler::SamplerSpec;
use pide_core::trainer::{MetricRow, TrainCallbacks, TrainConfig, Trainer};
use serde::{Deserialize, Serialize};

use crate::output::{num, opt_num};
use crate::testset::{file_sha256, load_or_build_test_set, mae, OracleSpec, TestSet, TestSetSpec};

fn default_sampler() -> SamplerSpec {
    SamplerSpec::Uniform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub problem: ProblemConfig,
    pub network: DgmConfig,
    pub trainer: TrainConfig,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerSpec,
    pub oracle: OracleSpec,
    pub test_set: TestSetSpec,
    /// Trainer seeds; defaults to the trainer block's seed.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| vec![self.trainer.seed])
    }

    pub fn validate(&self) -> Result<()> {
        let problem = self.problem.build()?;
        self.network.validate()?;
        ensure!(
            self.network.d == problem.dim,
            "network input dimension {} does not match the problem dimension {}",
            self.network.d,
            problem.dim
        );
        if let Some(b) = &self.test_set.bounds {
            ensure!(b.is_subset_of(&problem.sampling_box), "test box must lie inside the sampling box");
        }
        self.trainer.validate(&problem)?;
        self.sampler.validate(self.trainer.batch)?;
        ensure!(!self.seeds().is_empty(), "at least one seed is required");
        Ok(())
    }
}

/// Overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seeds: Option<Vec<u64>>,
    pub out_dir: Option<PathBuf>,
    /// Directory holding cached test sets; defaults to the output directory.
    pub testset_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub initial_mae: f64,
    pub final_mae: f64,
    pub epochs: usize,
    pub runtime_seconds: f64,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub runs: Vec<SeedSummary>,
    pub mean_mae: f64,
    /// Sample standard deviation over seeds; absent for a single seed.
    pub std_mae: Option<f64>,
    /// Mean standard error of Monte Carlo references.
    pub mean_oracle_se: Option<f64>,
    pub runtime_seconds: f64,
    pub test_set: PathBuf,
    pub test_set_sha256: String,
}

/// Column order of `metrics.csv`.
pub const METRIC_HEADER: [&str; 6] = ["seed", "epoch", "inner_step", "train_loss", "test_mae", "wall_seconds"];

struct Recorder<'a> {
    seed: u64,
    net: DgmConfig,
    hc: &'a HardConstraint,
    set: &'a TestSet,
    csv: &'a mut csv::Writer<File>,
    ckpt_dir: PathBuf,
}

impl TrainCallbacks for Recorder<'_> {
    fn evaluate(&mut self, params: &[f64]) -> pide_core::error::Result<Option<f64>> {
        Ok(Some(mae(&HpinnField::new(self.net, params, self.hc), self.set)))
    }

    fn on_row(&mut self, row: &MetricRow) -> pide_core::error::Result<()> {
        let rec = [
            self.seed.to_string(),
            row.epoch.to_string(),
            row.inner_step.map(|i| i.to_string()).unwrap_or_default(),
            opt_num(row.loss),
            opt_num(row.test_mae),
            num(row.wall_seconds),
        ];
        let io = |e: csv::Error| pide_core::error::Error::Io(std::io::Error::other(e));
        self.csv.write_record(&rec).map_err(io)?;
        // flushed per row so an aborted run leaves a usable log
        self.csv.flush()?;
        Ok(())
    }

    fn on_block_end(&mut self, epoch: usize, params: &[f64]) -> pide_core::error::Result<()> {
        let net = DgmNetwork::new(self.net, ParamVector(params.to_vec()))?;
        write_checkpoint(&self.ckpt_dir.join(format!("epoch{epoch:05}.ckpt")), &net)
    }
}

/// Trains one network per seed, logging to `metrics.csv` and writing
/// `summary.json` and checkpoints under the output directory.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Summary> {
    cfg.validate()?;
    let clock = Instant::now();
    let out = opts
        .out_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .context("no output directory: set output_dir in the config or pass --out-dir")?;
    fs::create_dir_all(&out)?;
    let cache = opts.testset_dir.clone().unwrap_or_else(|| out.clone());
    let (set, set_path) = load_or_build_test_set(&cache, &cfg.problem, &cfg.oracle, &cfg.test_set)?;
    let problem = cfg.problem.build()?;

    let mut csv = csv::Writer::from_path(out.join("metrics.csv"))?;
    csv.write_record(METRIC_HEADER)?;
    let seeds = opts.seeds.clone().unwrap_or_else(|| cfg.seeds());
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        let started = Instant::now();
        let ckpt_dir = out.join("checkpoints").join(format!("seed{seed}"));
        fs::create_dir_all(&ckpt_dir)?;
        let mut tc = cfg.trainer.clone();
        tc.seed = seed;
        let mut trainer = Trainer::new(&problem, cfg.network, tc, cfg.sampler)?;
        let hc = trainer.hc.clone();
        let mut rec = Recorder { seed, net: cfg.network, hc: &hc, set: &set, csv: &mut csv, ckpt_dir: ckpt_dir.clone() };
        let outcome = trainer.train(&mut rec)?;
        let final_ckpt = ckpt_dir.join("final.ckpt");
        write_checkpoint(&final_ckpt, &outcome.network)?;
        let final_mae = mae(&HpinnField::new(cfg.network, &outcome.network.theta, &hc), &set);
        let initial_mae = outcome.rows.first().and_then(|r| r.test_mae).unwrap_or(final_mae);
        log::info!("seed {seed}: final MAE {final_mae:.6e}");
        runs.push(SeedSummary {
            seed,
            initial_mae,
            final_mae,
            epochs: cfg.trainer.k_star,
            runtime_seconds: started.elapsed().as_secs_f64(),
            checkpoint: final_ckpt,
        });
    }
    csv.flush()?;

    let maes: Vec<f64> = runs.iter().map(|r| r.final_mae).collect();
    let mean = maes.iter().sum::<f64>() / maes.len() as f64;
    let std = (maes.len() > 1).then(|| {
        let v = maes.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (maes.len() - 1) as f64;
        v.sqrt()
    });
    let summary = Summary {
        name: cfg.name.clone(),
        runs,
        mean_mae: mean,
        std_mae: std,
        mean_oracle_se: set.mean_se(),
        runtime_seconds: clock.elapsed().as_secs_f64(),
        test_set_sha256: file_sha256(&set_path)?,
        test_set: set_path,
    };
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// `metrics.csv` with the wall-clock column dropped, for reproducibility
/// comparisons.
pub fn metrics_without_wall_time(path: &Path) -> Result<String> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let keep: Vec<usize> = (0..header.len()).filter(|&i| &header[i] != "wall_seconds").collect();
    let mut out = String::new();
    let join = |rec: &csv::StringRecord| keep.iter().map(|&i| rec[i].to_string()).collect::<Vec<_>>().join(",");
    out.push_str(&join(&header));
    out.push('\n');
    for rec in r.records() {
        out.push_str(&join(&rec?));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn tiny(out: &Path) -> ExperimentConfig {
        let mut cfg = presets::desk_linear_quadratic();
        cfg.problem = ProblemConfig::LinearQuadratic(pide_core::problems::LinearQuadraticParams::standard(2, 2));
        cfg.network = DgmConfig::new(2, 1, 4).unwrap();
        cfg.trainer.batch = 16;
        cfg.trainer.n = 3;
        cfg.trainer.grad_steps = 2;
        cfg.trainer.k_star = 3;
        cfg.trainer.block = 2;
        cfg.trainer.distill_steps = 2;
        cfg.test_set.size = 30;
        cfg.output_dir = Some(out.to_path_buf());
        cfg
    }

    #[test]
    fn summary_matches_checkpoint_and_logs_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.seeds = Some(vec![0, 1, 2]);
        let s = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(s.runs.len(), 3);
        assert!(s.std_mae.is_some());

        let set = TestSet::read_csv(&s.test_set).unwrap();
        let ck = pide_core::network::read_checkpoint(&s.runs[1].checkpoint).unwrap();
        let hc = cfg.problem.build().unwrap().hard_constraint();
        let again = mae(&HpinnField::new(ck.network.config, &ck.network.theta, &hc), &set);
        assert!((again - s.runs[1].final_mae).abs() < 1e-12);
        assert!(dir.path().join("checkpoints/seed0/epoch00002.ckpt").exists());
        assert!(dir.path().join("checkpoints/seed0/epoch00003.ckpt").exists());

        let first = metrics_without_wall_time(&dir.path().join("metrics.csv")).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        cfg.output_dir = Some(dir2.path().to_path_buf());
        let s2 = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(first, metrics_without_wall_time(&dir2.path().join("metrics.csv")).unwrap());
        assert_eq!(s.test_set_sha256, s2.test_set_sha256);
    }

    #[test]
    fn trainer_seed_does_not_change_the_test_set() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let a = run_experiment(&cfg, &RunOptions { seeds: Some(vec![5]), ..Default::default() }).unwrap();
        let b = run_experiment(&cfg, &RunOptions { seeds: Some(vec![6]), ..Default::default() }).unwrap();
        assert_eq!(a.test_set_sha256, b.test_set_sha256);
        assert!(a.std_mae.is_none());
    }

    #[test]
    fn zero_epochs_report_the_initial_field() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.trainer.k_star = 0;
        let s = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(s.runs[0].initial_mae, s.runs[0].final_mae);
        let text = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(text.lines().count(), 1 + s.runs.len());
    }

    #[test]
    fn mismatched_network_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.network = DgmConfig::new(3, 1, 4).unwrap();
        assert!(run_experiment(&cfg, &RunOptions::default()).is_err());
    }
}
