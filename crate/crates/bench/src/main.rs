use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use clap::{Parser, Subcommand};
use pide_bench::experiment::{run_experiment, ExperimentConfig, RunOptions};
use pide_bench::output::{num, opt_num, parse_opt};
use pide_bench::slice::{emit_slice, parse_range, write_slice_csv, Axis, AxisSpec};
use pide_bench::testset::{file_sha256, load_or_build_test_set, reference_at, OracleSpec};
use pide_core::field::SpaceTimePoint;
use pide_core::network::{read_checkpoint, HpinnField};

#[derive(Parser)]
#[command(name = "pide-bench", about = "Train and score the iterative PIDE solver")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Trainer seed for `run`, Monte Carlo seed for `oracle` and `slice`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (1 gives the reference single-threaded mode).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train every seed and write metrics.csv, summary.json and checkpoints.
    Run { config: PathBuf },
    /// Build (or load) the cached test set.
    Testset { config: PathBuf },
    /// Field values along one axis, with oracle values when available.
    Slice {
        checkpoint: PathBuf,
        /// `t` or `x<j>`.
        axis: String,
        /// `lo:hi`.
        #[arg(allow_hyphen_values = true)]
        range: String,
        resolution: usize,
        /// Experiment config supplying the problem and oracle.
        #[arg(long)]
        config: PathBuf,
        /// Base point `t,x1,…,xd`; defaults to the origin at t = 0.
        #[arg(long, allow_hyphen_values = true)]
        at: Option<String>,
    },
    /// Reference values at the points of a CSV with columns t,x1,…,xd.
    Oracle { config: PathBuf, points: PathBuf },
}

fn output(out_dir: &Option<PathBuf>, name: &str) -> Result<Box<dyn Write>> {
    Ok(match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Box::new(File::create(dir.join(name))?)
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn with_seed(oracle: &OracleSpec, seed: Option<u64>) -> OracleSpec {
    match (oracle, seed) {
        (OracleSpec::MonteCarlo { mc, se_cap }, Some(s)) => OracleSpec::MonteCarlo { mc: mc.with_seed(s), se_cap: *se_cap },
        _ => oracle.clone(),
    }
}

fn read_points(path: &Path, d: usize) -> Result<Vec<SpaceTimePoint>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut pts = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        ensure!(rec.len() >= d + 1, "each point needs t and {d} coordinates");
        let v = (0..=d)
            .map(|i| parse_opt(&rec[i])?.context("empty coordinate"))
            .collect::<Result<Vec<f64>>>()?;
        pts.push(SpaceTimePoint::new(v[0], v[1..].to_vec()));
    }
    Ok(pts)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.cmd {
        Cmd::Run { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let opts = RunOptions { seeds: cli.seed.map(|s| vec![s]), out_dir: cli.out_dir, testset_dir: None };
            let summary = run_experiment(&cfg, &opts)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Cmd::Testset { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let dir = cli.out_dir.or(cfg.output_dir.clone()).context("pass --out-dir or set output_dir")?;
            let oracle = with_seed(&cfg.oracle, cli.seed);
            let (set, path) = load_or_build_test_set(&dir, &cfg.problem, &oracle, &cfg.test_set)?;
            println!("{} points -> {}", set.len(), path.display());
            println!("sha256 {}", file_sha256(&path)?);
            if let Some(se) = set.mean_se() {
                println!("mean oracle SE {}", num(se));
            }
        }
        Cmd::Slice { checkpoint, axis, range, resolution, config, at } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let problem = cfg.problem.build()?;
            let ck = read_checkpoint(&checkpoint)?;
            ensure!(ck.network.config.d == problem.dim, "checkpoint dimension does not match the problem");
            let base = match at {
                Some(s) => {
                    let v = s.split(',').map(|f| f.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>()?;
                    ensure!(v.len() == problem.dim + 1, "--at needs t and {} coordinates", problem.dim);
                    SpaceTimePoint::new(v[0], v[1..].to_vec())
                }
                None => SpaceTimePoint::new(0.0, vec![0.0; problem.dim]),
            };
            let axis: Axis = axis.parse()?;
            let (lo, hi) = parse_range(&range)?;
            let hc = problem.hard_constraint();
            let field = HpinnField::new(ck.network.config, &ck.network.theta, &hc);
            let oracle = with_seed(&cfg.oracle, cli.seed);
            let eval = |p: &SpaceTimePoint| reference_at(&problem, &oracle, &cfg.problem, p, 0);
            let rows = emit_slice(&field, &AxisSpec { axis, lo, hi, base }, resolution, Some(eval))?;
            write_slice_csv(output(&cli.out_dir, &format!("slice_{}.csv", axis.label()))?, axis, &rows)?;
        }
        Cmd::Oracle { config, points } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let problem = cfg.problem.build()?;
            let pts = read_points(&points, problem.dim)?;
            let oracle = with_seed(&cfg.oracle, cli.seed);
            let mut w = csv::Writer::from_writer(output(&cli.out_dir, "oracle.csv")?);
            let mut header = vec!["t".to_string()];
            header.extend((1..=problem.dim).map(|i| format!("x{i}")));
            header.extend(["value".to_string(), "se".to_string()]);
            w.write_record(&header)?;
            for (i, p) in pts.iter().enumerate() {
                let (v, se) = reference_at(&problem, &oracle, &cfg.problem, p, i as u64)?;
                let mut row = vec![num(p.t)];
                row.extend(p.x.iter().map(|&c| num(c)));
                row.extend([num(v), opt_num(se)]);
                w.write_record(&row)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
