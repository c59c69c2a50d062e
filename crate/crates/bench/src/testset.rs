//! Fixed scoring sets: uniform points with oracle references, cached on
//! disk under a name derived from everything that determines them.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use pide_core::field::{Field, SpaceTimePoint};
use pide_core::oracle::{fk_estimate, hjb_log_mc, McConfig};
use pide_core::problems::{LocalOperatorKind, PideProblem, ProblemConfig, SamplingBox};
use pide_core::rng;
use pide_core::sampler::sample_uniform;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::output::{num, parse_opt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSetSpec {
    pub size: usize,
    /// Defaults to the problem's sampling box.
    #[serde(default, rename = "box")]
    pub bounds: Option<SamplingBox>,
    pub seed: u64,
}

/// Where reference values come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleSpec {
    ClosedForm,
    /// Feynman–Kac for linear problems, the log-transform estimator for
    /// the HJB problem. Point `i` uses seed `mix(mc.seed, i)`.
    MonteCarlo {
        mc: McConfig,
        #[serde(default)]
        se_cap: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub points: Vec<SpaceTimePoint>,
    pub values: Vec<f64>,
    /// Per-point standard errors of Monte Carlo references.
    pub se: Option<Vec<f64>>,
}

impl TestSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean_se(&self) -> Option<f64> {
        self.se.as_ref().map(|s| s.iter().sum::<f64>() / s.len() as f64)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let d = self.points.first().map_or(0, |p| p.dim());
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("x{i}")));
        header.push("value".into());
        if self.se.is_some() {
            header.push("se".into());
        }
        w.write_record(&header)?;
        for (i, p) in self.points.iter().enumerate() {
            let mut row = vec![num(p.t)];
            row.extend(p.x.iter().map(|&v| num(v)));
            row.push(num(self.values[i]));
            if let Some(se) = &self.se {
                row.push(num(se[i]));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
        let header = r.headers()?.clone();
        let has_se = header.iter().last() == Some("se");
        let d = header.len() - 2 - has_se as usize;
        ensure!(header.get(0) == Some("t") && header.get(d + 1) == Some("value"), "unexpected test-set header");
        let mut set = TestSet { points: vec![], values: vec![], se: has_se.then(Vec::new) };
        for rec in r.records() {
            let rec = rec?;
            let f = |i: usize| -> Result<f64> { parse_opt(&rec[i])?.context("empty test-set field") };
            let x = (1..=d).map(f).collect::<Result<Vec<_>>>()?;
            set.points.push(SpaceTimePoint::new(f(0)?, x));
            set.values.push(f(d + 1)?);
            if let Some(se) = &mut set.se {
                se.push(f(d + 2)?);
            }
        }
        Ok(set)
    }
}

/// Reference value and standard error (`None` for exact references).
pub fn reference_at(problem: &PideProblem, oracle: &OracleSpec, cfg: &ProblemConfig, point: &SpaceTimePoint, index: u64) -> Result<(f64, Option<f64>)> {
    match oracle {
        OracleSpec::ClosedForm => {
            let sol = cfg.closed_form().context("problem has no closed-form solution; use a monte_carlo oracle")?;
            Ok((sol.value(point.t, &point.x), None))
        }
        OracleSpec::MonteCarlo { mc, .. } => {
            let mc = mc.with_seed(rng::mix(mc.seed, index));
            let (v, se) = match problem.operator {
                LocalOperatorKind::LogTransform { .. } => hjb_log_mc(point, problem, &mc)?,
                LocalOperatorKind::Directional => fk_estimate(problem, point, &mc)?,
            };
            Ok((v, Some(se)))
        }
    }
}

/// `size` uniform points over the test box with oracle references.
pub fn build_test_set(cfg: &ProblemConfig, oracle: &OracleSpec, spec: &TestSetSpec) -> Result<TestSet> {
    ensure!(spec.size >= 1, "test set needs at least one point");
    let problem = cfg.build()?;
    let bx = match &spec.bounds {
        Some(b) => {
            ensure!(
                b.is_subset_of(&problem.sampling_box),
                "test box must lie inside the problem's sampling box"
            );
            b.clone()
        }
        None => problem.sampling_box.clone(),
    };
    let points = sample_uniform(&bx, spec.size, &mut rng::stream(spec.seed, 0x7e57));
    let refs = points
        .iter()
        .enumerate()
        .map(|(i, p)| reference_at(&problem, oracle, cfg, p, i as u64))
        .collect::<Result<Vec<_>>>()?;
    if let OracleSpec::MonteCarlo { se_cap: Some(cap), .. } = oracle {
        if let Some((i, (_, se))) = refs.iter().enumerate().find(|(_, (_, se))| se.unwrap_or(0.0) > *cap) {
            bail!(
                "oracle standard error {:.3e} exceeds the cap {cap:.3e} at point {i} (t = {}, x = {:?}); raise paths",
                se.unwrap_or(0.0),
                points[i].t,
                points[i].x
            );
        }
    }
    let values = refs.iter().map(|r| r.0).collect();
    let se = match oracle {
        OracleSpec::ClosedForm => None,
        OracleSpec::MonteCarlo { .. } => Some(refs.iter().map(|r| r.1.unwrap_or(0.0)).collect()),
    };
    Ok(TestSet { points, values, se })
}

/// Cache file name: a digest of the problem, oracle and test-set blocks.
/// Trainer settings do not enter, so every method and seed shares a file.
pub fn cache_name(cfg: &ProblemConfig, oracle: &OracleSpec, spec: &TestSetSpec) -> Result<String> {
    let key = serde_json::to_string(&(cfg, oracle, spec))?;
    let digest = Sha256::digest(key.as_bytes());
    Ok(format!("testset-{}.csv", &hex::encode(digest)[..16]))
}

/// Loads the cached test set from `dir`, building and writing it first if
/// absent.
pub fn load_or_build_test_set(
    dir: &Path,
    cfg: &ProblemConfig,
    oracle: &OracleSpec,
    spec: &TestSetSpec,
) -> Result<(TestSet, PathBuf)> {
    fs::create_dir_all(dir)?;
    let path = dir.join(cache_name(cfg, oracle, spec)?);
    if path.exists() {
        let set = TestSet::read_csv(&path)?;
        ensure!(set.len() == spec.size, "cached test set {} has the wrong size", path.display());
        return Ok((set, path));
    }
    let set = build_test_set(cfg, oracle, spec)?;
    let tmp = path.with_extension("csv.partial");
    set.write_csv(&tmp)?;
    fs::rename(&tmp, &path)?;
    Ok((set, path))
}

/// `(1/𝓜) Σ |u(tᵢ, xᵢ) − refᵢ|`.
pub fn mae<F: Field + ?Sized>(field: &F, set: &TestSet) -> f64 {
    assert!(!set.is_empty(), "MAE of an empty test set");
    let parts: Vec<f64> = set
        .points
        .par_chunks(64)
        .zip(set.values.par_chunks(64))
        .map(|(p, v)| p.iter().zip(v).map(|(p, v)| (field.value(p.t, &p.x) - v).abs()).sum::<f64>())
        .collect();
    parts.iter().sum::<f64>() / set.len() as f64
}

/// SHA-256 of a file, hex encoded.
pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use pide_core::problems::{HjbParams, LinearQuadraticParams};

    fn lq() -> ProblemConfig {
        ProblemConfig::LinearQuadratic(LinearQuadraticParams::standard(2, 2))
    }

    fn spec(size: usize) -> TestSetSpec {
        TestSetSpec { size, bounds: None, seed: 3 }
    }

    #[test]
    fn closed_form_references_are_exact() {
        let set = build_test_set(&lq(), &OracleSpec::ClosedForm, &spec(50)).unwrap();
        assert!(set.se.is_none());
        let sol = lq().closed_form().unwrap();
        assert_eq!(mae(&sol, &set), 0.0);
        assert!(set.points.iter().all(|p| p.t < 0.5 && p.x.iter().all(|v| v.abs() <= 1.5)));
    }

    struct Shifted(pide_core::problems::LinearQuadraticSolution);
    impl Field for Shifted {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, t: f64, x: &[f64]) -> f64 {
            self.0.value(t, x) + 0.1
        }
        fn jet(&self, _t: pide_core::autodiff::Jet2, _x: &[pide_core::autodiff::Jet2]) -> pide_core::error::Result<pide_core::autodiff::Jet2> {
            unimplemented!()
        }
    }

    #[test]
    fn shifted_field_has_mae_of_the_shift() {
        let set = build_test_set(&lq(), &OracleSpec::ClosedForm, &spec(100)).unwrap();
        let m = mae(&Shifted(lq().closed_form().unwrap()), &set);
        assert!((m - 0.1).abs() < 1e-12);
    }

    #[test]
    fn cache_round_trip_and_stable_hash() {
        let dir = tempfile::tempdir().unwrap();
        let (a, pa) = load_or_build_test_set(dir.path(), &lq(), &OracleSpec::ClosedForm, &spec(20)).unwrap();
        let h1 = file_sha256(&pa).unwrap();
        let (b, _) = load_or_build_test_set(dir.path(), &lq(), &OracleSpec::ClosedForm, &spec(20)).unwrap();
        assert_eq!(a, b);
        let other = tempfile::tempdir().unwrap();
        let (_, pc) = load_or_build_test_set(other.path(), &lq(), &OracleSpec::ClosedForm, &spec(20)).unwrap();
        assert_eq!(h1, file_sha256(&pc).unwrap());
    }

    #[test]
    fn monte_carlo_references_and_se_cap() {
        let cfg = ProblemConfig::Hjb(HjbParams::standard(2));
        let mc = McConfig { paths: 200, steps: 2, antithetic: false, seed: 1 };
        let oracle = OracleSpec::MonteCarlo { mc, se_cap: None };
        let set = build_test_set(&cfg, &oracle, &spec(4)).unwrap();
        assert_eq!(set.se.as_ref().unwrap().len(), 4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        set.write_csv(&path).unwrap();
        assert_eq!(TestSet::read_csv(&path).unwrap(), set);

        let capped = OracleSpec::MonteCarlo { mc, se_cap: Some(1e-9) };
        let err = build_test_set(&cfg, &capped, &spec(4)).unwrap_err().to_string();
        assert!(err.contains("point 0"), "{err}");
    }

    #[test]
    fn closed_form_missing_is_an_error() {
        let cfg = ProblemConfig::Hjb(HjbParams::standard(2));
        assert!(build_test_set(&cfg, &OracleSpec::ClosedForm, &spec(3)).is_err());
    }
}
