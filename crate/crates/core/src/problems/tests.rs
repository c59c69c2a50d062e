use super::*;
use crate::field::{Field, RealField, SpaceTimePoint};
use crate::network::local_terms;
use crate::rng;
use rand::Rng;

#[test]
fn linear_quadratic_defaults() {
    let p = LinearQuadraticParams::standard(10, 10);
    assert_eq!((p.horizon, p.b, p.c, p.lambda), (0.5, 1.0, 2.0, 0.25));
    assert!(p.sigma.iter().all(|&s| s == 0.28));
    let prob = linear_quadratic_problem(&p).unwrap();
    assert!(prob.is_linear_contractive());
    assert_eq!(prob.contraction_floor, Some(2.0));
    assert_eq!(prob.sampling_box, SamplingBox::cube(0.5, 10, -1.5, 1.5));
}

#[test]
fn linear_quadratic_degenerate_instance() {
    let mut p = LinearQuadraticParams::standard(1, 1);
    p.sigma = vec![0.0];
    p.lambda = 0.0;
    let prob = linear_quadratic_problem(&p).unwrap();
    assert_eq!(prob.diffusion.columns(0.0, &[1.0]), vec![vec![0.0]]);
}

#[test]
fn solution_terminal_and_origin_value() {
    let p = LinearQuadraticParams::standard(10, 10);
    let x: Vec<f64> = (0..10).map(|i| 0.1 * i as f64 - 0.4).collect();
    let norm2: f64 = x.iter().map(|v| v * v).sum();
    let at_t = linear_quadratic_solution(&SpaceTimePoint::new(0.5, x), &p);
    assert!((at_t - norm2).abs() < 1e-15);

    // Tr[ΣΣᵀ] = 0.0784·100, λTr[Σ_J] = 1, (2b−c) = 0, τ = 0.5
    let k = 7.84 + 1.0;
    let expected = (-1.0f64).exp() * k * (1.0f64.exp() - 1.0) / 2.0;
    let at_origin = linear_quadratic_solution(&SpaceTimePoint::new(0.0, vec![0.0; 10]), &p);
    assert!((at_origin - expected).abs() < 1e-13);
    assert!((at_origin - 2.79397).abs() < 1e-5, "{at_origin}");
}

#[test]
fn solution_pure_drift_scaling() {
    let mut p = LinearQuadraticParams::standard(2, 2);
    p.lambda = 0.0;
    p.sigma = vec![0.0; 4];
    p.c = 0.0;
    let pt = SpaceTimePoint::new(0.1, vec![0.7, -0.3]);
    let u = linear_quadratic_solution(&pt, &p);
    assert!((u - (2.0f64 * 0.4).exp() * 0.58).abs() < 1e-14);
}

#[test]
fn solution_zero_drift_limit() {
    let mut p = LinearQuadraticParams::standard(2, 1);
    let pt = SpaceTimePoint::new(0.1, vec![0.3, 0.2]);
    p.b = 0.0;
    let at_zero = linear_quadratic_solution(&pt, &p);
    p.b = 1e-9;
    let near_zero = linear_quadratic_solution(&pt, &p);
    assert!((at_zero - near_zero).abs() < 1e-7);
}

/// `∂_t u + 𝓕 + λ(E‖x+E‖² − ‖x‖²)·a(t)` vanishes for the closed form.
#[test]
fn closed_form_has_zero_residual() {
    let p = LinearQuadraticParams::standard(5, 3);
    let prob = linear_quadratic_problem(&p).unwrap();
    let sol = LinearQuadraticSolution::new(&p);
    let tr_j = prob.jumps.gaussian_trace().unwrap();
    let mut r = rng::seeded(42);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let t = r.random_range(0.0..0.5);
        let x: Vec<f64> = (0..5).map(|_| r.random_range(-1.5..1.5)).collect();
        let b = prob.drift.eval(t, &x);
        let cols = prob.diffusion.columns(t, &x);
        let (u, op) = local_terms(&sol, t, &x, &b, &cols).unwrap();
        let jump = p.lambda * sol.quadratic_coeff(t) * tr_j;
        let residual = op - prob.discount.rate(u) * u + jump;
        worst = worst.max(residual.abs());
    }
    assert!(worst <= 1e-8, "{worst}");
}

#[test]
fn hjb_defaults_and_transform() {
    let p = HjbParams::standard(4);
    assert_eq!((p.horizon, p.eta, p.f, p.lambda), (1.0, 1.0, 2.0, 0.5));
    let prob = hjb_problem(&p).unwrap();
    assert_eq!(prob.jump_transform.apply(0.0), 0.0);
    assert!(!prob.is_linear());
    let small = JumpTransform::Exponential { eta: 1e-6 };
    assert!((small.apply(0.1) - 0.1).abs() < 1e-7);
    assert!(hjb_problem(&HjbParams { eta: 0.0, ..HjbParams::standard(2) }).is_err());
}

#[test]
fn intensity_breakpoints() {
    let q = IntensityParams::standard();
    assert_eq!(q.eval(40.0), 0.2);
    assert_eq!(q.eval(70.0), 0.02);
    assert!((q.eval(60.0) - 0.11).abs() < 1e-15);
    assert_eq!(q.eval(50.0), 0.2);
}

#[test]
fn intensity_continuous_and_nonincreasing() {
    let q = IntensityParams::standard();
    let mut prev = q.eval(0.0);
    let mut y = 0.0;
    while y < 120.0 {
        y += 0.01;
        let v = q.eval(y);
        assert!(v <= prev + 1e-15);
        assert!((prev - v).abs() < 1e-3);
        prev = v;
    }
}

#[test]
fn default_risk_defaults() {
    let p = DefaultRiskParams::standard(100);
    assert_eq!((p.mu_bar, p.sigma, p.r, p.lambda), (0.02, 0.2, 0.02, 0.1));
    assert_eq!((p.mu_j, p.sigma_j, p.rho_j), (-0.2, 0.15, 0.5));
    let prob = default_risk_problem(&p).unwrap();
    assert_eq!(prob.terminal.value(&[100.0; 100]), 100.0);
    assert_eq!(prob.terminal.value(&[3.0, 1.0, 2.0]), 1.0);
    assert_eq!(prob.reference_start.as_deref(), Some(&[100.0; 100][..]));
    assert!(!prob.is_linear());
    let bad = DefaultRiskParams { delta: 1.5, ..DefaultRiskParams::standard(2) };
    assert!(default_risk_problem(&bad).is_err());
}

#[test]
fn default_risk_discount() {
    let prob = default_risk_problem(&DefaultRiskParams::standard(2)).unwrap();
    assert!((prob.discount.rate(40.0) - (0.2 / 3.0 + 0.02)).abs() < 1e-15);
    assert!((prob.discount.rate(80.0) - (0.02 / 3.0 + 0.02)).abs() < 1e-15);
}

#[test]
fn multiplicative_jump_keeps_positivity() {
    let x = [1.0, 50.0];
    let y = JumpMap::Multiplicative.apply(&x, &[-3.0, 0.5]);
    assert!(y.iter().all(|&v| v > 0.0));
    assert!((y[1] - 50.0 * 0.5f64.exp()).abs() < 1e-12);
}

#[test]
fn linear_bs_compensator() {
    let p = LinearBsParams::standard(5);
    assert!((p.compensator() - 0.27762).abs() < 1e-5, "{}", p.compensator());
    let prob = linear_bs_problem(&p).unwrap();
    assert!((prob.intensity - 2.5).abs() < 1e-15);
    let n = 1_000_000;
    let mut r = rng::seeded(17);
    let (mut s, mut s2) = (0.0, 0.0);
    let mut e = vec![0.0; 5];
    let mut count = 0usize;
    while count < n {
        prob.jumps.sample_into(&mut r, &mut e);
        let v = e.iter().map(|&v| v.exp_m1()).sum::<f64>();
        s += v;
        s2 += v * v;
        count += 1;
    }
    let mean = s / n as f64;
    let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - p.compensator()).abs() < 3.0 * se, "{mean} ± {se}");
}

#[test]
fn linear_bs_at_the_money_payoff() {
    let p = LinearBsParams::standard(4);
    let prob = linear_bs_problem(&p).unwrap();
    assert_eq!(prob.terminal.value(&[30.0; 4]), 0.0);
    assert!((prob.terminal.value(&[40.0; 4]) - 10.0).abs() < 1e-12);
    let bad = LinearBsParams { weights: Some(vec![0.5; 4]), ..p };
    assert!(linear_bs_problem(&bad).is_err());
}

#[test]
fn linear_bs_diffusion_covariance() {
    let p = LinearBsParams::standard(3);
    let prob = linear_bs_problem(&p).unwrap();
    let x = [10.0, 20.0, 30.0];
    let cols = prob.diffusion.columns(0.0, &x);
    for i in 0..3 {
        for j in 0..3 {
            let cov: f64 = cols.iter().map(|c| c[i] * c[j]).sum();
            let rho = if i == j { 1.0 } else { 0.1 };
            assert!((cov - 0.15 * 0.15 * x[i] * x[j] * rho).abs() < 1e-12);
        }
    }
}

/// With no rate, volatility or jumps the price never moves.
#[test]
fn linear_bs_frozen_dynamics() {
    let p = LinearBsParams { r: 0.0, lambda: 0.0, vol: 0.0, ..LinearBsParams::standard(2) };
    let prob = linear_bs_problem(&p).unwrap();
    let phi = |t: f64, x: &[f64]| {
        let _ = t;
        prob.terminal.value(x)
    };
    struct Frozen<'a>(&'a Terminal);
    impl RealField for Frozen<'_> {
        fn dim(&self) -> usize {
            2
        }
        fn eval<S: crate::autodiff::Real>(&self, _t: S, x: &[S]) -> S {
            self.0.eval(x)
        }
    }
    let f = Frozen(&prob.terminal);
    let x = [45.0, 20.0];
    let (u, op) = local_terms(&f, 0.3, &x, &prob.drift.eval(0.3, &x), &prob.diffusion.columns(0.3, &x)).unwrap();
    assert_eq!(u, phi(0.3, &x));
    assert_eq!(op - prob.discount.rate(u) * u, 0.0);
    assert_eq!(prob.intensity, 0.0);
    assert_eq!(f.value(0.0, &x), f.value(1.0, &x));
}

#[test]
fn problem_config_round_trip() {
    let cfgs = [
        ProblemConfig::LinearQuadratic(LinearQuadraticParams::standard(3, 2)),
        ProblemConfig::Hjb(HjbParams::standard(3)),
        ProblemConfig::DefaultRisk(DefaultRiskParams::standard(3)),
        ProblemConfig::LinearBs(LinearBsParams::standard(3)),
    ];
    for c in cfgs {
        let s = serde_json::to_string(&c).unwrap();
        let back: ProblemConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.build().unwrap().dim, 3);
    }
    let raw = r#"{"kind":"linear_quadratic","d":1,"q":1,"T":0.5,"b":1.0,"c":2.0,"sigma":[0.28],"lambda":0.25,"sigma_j":[0.4]}"#;
    let parsed: ProblemConfig = serde_json::from_str(raw).unwrap();
    assert_eq!(parsed, ProblemConfig::LinearQuadratic(LinearQuadraticParams::standard(1, 1)));
}
