//! Desk-scale configurations used by the acceptance suite and shipped as
//! JSON under `configs/`.

use pide_core::network::DgmConfig;
use pide_core::oracle::McConfig;
use pide_core::problems::{HjbParams, LinearQuadraticParams, ProblemConfig};
use pide_core::sampler::SamplerSpec;
use pide_core::trainer::TrainConfig;

use crate::experiment::ExperimentConfig;
use crate::testset::{OracleSpec, TestSetSpec};

/// `M = 256, n = 5, N = 16, k* = 150, K = 10, α = 0.4, h = 0.5, η = 5e-4`.
pub fn desk_trainer() -> TrainConfig {
    TrainConfig { batch: 256, n: 5, grad_steps: 16, k_star: 150, block: 10, ..TrainConfig::standard() }
}

/// Linear-quadratic problem, `d = q = 5`, scored against the closed form.
pub fn desk_linear_quadratic() -> ExperimentConfig {
    ExperimentConfig {
        name: "linear_quadratic_d5".into(),
        problem: ProblemConfig::LinearQuadratic(LinearQuadraticParams::standard(5, 5)),
        network: DgmConfig { d: 5, layers: 2, hidden: 32 },
        trainer: desk_trainer(),
        sampler: SamplerSpec::Uniform,
        oracle: OracleSpec::ClosedForm,
        test_set: TestSetSpec { size: 2000, bounds: None, seed: 2024 },
        seeds: Some(vec![0, 1, 2]),
        output_dir: None,
    }
}

/// Exponential-jump HJB problem, `d = 3`, `λ = 0.5`, scored against
/// log-transform Monte Carlo with `10⁴` paths per point.
pub fn desk_hjb() -> ExperimentConfig {
    ExperimentConfig {
        name: "hjb_d3".into(),
        problem: ProblemConfig::Hjb(HjbParams::standard(3)),
        network: DgmConfig { d: 3, layers: 2, hidden: 32 },
        trainer: desk_trainer(),
        sampler: SamplerSpec::Uniform,
        oracle: OracleSpec::MonteCarlo {
            mc: McConfig { paths: 10_000, steps: 4, antithetic: false, seed: 77 },
            se_cap: Some(0.05),
        },
        test_set: TestSetSpec { size: 2000, bounds: None, seed: 2025 },
        seeds: Some(vec![0, 1, 2]),
        output_dir: None,
    }
}
