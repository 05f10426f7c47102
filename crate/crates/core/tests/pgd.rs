mod common;

use surrogate_pgd::data::Dataset;
use surrogate_pgd::gradest::{EstimatorKind, PerturbationConfig};
use surrogate_pgd::metrics::{synthetic_metric, AffineMetric, MetricSpec, Psi, Slack, SyntheticMetric};
use surrogate_pgd::optimizer::{stationarity_diagnostic, surrogate_pgd, PgdConfig, PgdResult};
use surrogate_pgd::surrogates::{Profiler, SurrogateMap, SurrogateSpec};

fn hinge_specs() -> Vec<SurrogateSpec> {
    ["hinge:positives", "hinge:negatives", "hinge:all"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect()
}

fn linear_benchmark() -> SyntheticMetric {
    synthetic_metric(Psi::linear(vec![1.0, 2.0, 0.5]).unwrap(), hinge_specs(), Slack::None)
}

fn interp_config(iterations: usize, seed: u64) -> PgdConfig {
    let mut cfg = PgdConfig::new(0.1, EstimatorKind::Interpolation, PerturbationConfig::new(100, 0.5, seed));
    cfg.iterations = iterations;
    cfg
}

fn psi_at(ds: &Dataset, res: &PgdResult) -> f64 {
    let u = Profiler::new(&hinge_specs(), ds).unwrap().profile_of(&res.params).unwrap();
    Psi::linear(vec![1.0, 2.0, 0.5]).unwrap().value(u.values())
}

#[test]
fn descends_on_linear_benchmark() {
    for seed in 0..5 {
        let ds = common::separable(50, seed);
        let res = surrogate_pgd(&linear_benchmark(), &hinge_specs(), &ds, None, &interp_config(50, seed)).unwrap();
        let start = Psi::linear(vec![1.0, 2.0, 0.5]).unwrap().value(&res.initial_profile);
        let end = psi_at(&ds, &res);
        assert!(end <= start - 0.1, "seed {seed}: {start} -> {end}");
    }
}

#[test]
fn constant_metric_is_a_fixed_point() {
    let ds = common::separable(30, 1);
    let constant = AffineMetric {
        inner: MetricSpec::ErrorRate,
        scale: 0.0,
        offset: 0.3,
    };
    let res = surrogate_pgd(&constant, &hinge_specs(), &ds, None, &interp_config(5, 2)).unwrap();
    for r in &res.trace.records {
        assert!(r.g_hat.g.iter().all(|g| *g == 0.0), "{:?}", r.g_hat.g);
        assert_eq!(r.proj_objective, 0.0);
        assert_eq!(r.theta, vec![0.0; 3]);
    }
}

#[test]
fn iterates_stay_realizable() {
    let ds = common::separable(30, 3);
    let res = surrogate_pgd(&linear_benchmark(), &hinge_specs(), &ds, None, &interp_config(20, 3)).unwrap();
    let prof = Profiler::new(&hinge_specs(), &ds).unwrap();
    assert_eq!(res.trace.records[0].u, res.initial_profile);
    for (i, r) in res.trace.records.iter().enumerate() {
        assert_eq!(r.u_next, prof.profile(&r.theta).unwrap());
        assert!(r.u_next.iter().all(|v| *v >= 0.0));
        if let Some(next) = res.trace.records.get(i + 1) {
            assert_eq!(next.u, r.u_next);
        }
    }
}

#[test]
fn monotone_transform_rescales_fd_gradients() {
    let ds = common::separable(30, 4);
    let specs: Vec<SurrogateSpec> = hinge_specs()[..2].to_vec();
    let metric = synthetic_metric(Psi::GeometricMean, specs.clone(), Slack::None);
    let transformed = AffineMetric {
        inner: metric.clone(),
        scale: 0.5,
        offset: 0.1,
    };
    let mut cfg = PgdConfig::new(0.05, EstimatorKind::FiniteDifference, PerturbationConfig::new(200, 0.1, 6));
    cfg.iterations = 15;
    let base = surrogate_pgd(&metric, &specs, &ds, None, &cfg).unwrap();
    cfg.eta *= 2.0;
    let scaled = surrogate_pgd(&transformed, &specs, &ds, None, &cfg).unwrap();
    for (a, b) in base.trace.records.iter().zip(&scaled.trace.records) {
        for (x, y) in a.u.iter().zip(&b.u) {
            assert!((x - y).abs() <= 1e-9, "iteration {}: {:?} vs {:?}", a.t, a.u, b.u);
        }
        for (x, y) in a.g_hat.g.iter().zip(&b.g_hat.g) {
            assert!((0.5 * x - y).abs() <= 1e-9 * x.abs().max(1.0), "iteration {}", a.t);
        }
    }
}

#[test]
fn longer_runs_reach_smaller_gradient_mapping() {
    let mean_min = |iters: usize| {
        (0..5)
            .map(|seed| {
                let ds = common::separable(50, seed);
                let res = surrogate_pgd(&linear_benchmark(), &hinge_specs(), &ds, None, &interp_config(iters, seed)).unwrap();
                stationarity_diagnostic(&res.trace, 0.1)
                    .unwrap()
                    .into_iter()
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / 5.0
    };
    let (short, long) = (mean_min(50), mean_min(250));
    assert!(long <= short, "T=50: {short}, T=250: {long}");
}

#[test]
fn runs_are_deterministic() {
    let ds = common::separable(30, 5);
    let a = surrogate_pgd(&linear_benchmark(), &hinge_specs(), &ds, None, &interp_config(10, 8)).unwrap();
    let b = surrogate_pgd(&linear_benchmark(), &hinge_specs(), &ds, None, &interp_config(10, 8)).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.trace.records.len(), b.trace.records.len());
    for (x, y) in a.trace.records.iter().zip(&b.trace.records) {
        assert_eq!(x.u_next, y.u_next);
        assert_eq!(x.g_hat, y.g_hat);
    }
}

#[test]
fn validation_set_needs_interpolation() {
    let ds = common::separable(20, 6);
    let specs: Vec<SurrogateSpec> = hinge_specs()[..2].to_vec();
    let metric = synthetic_metric(Psi::GeometricMean, specs.clone(), Slack::None);
    let mut cfg = PgdConfig::new(0.1, EstimatorKind::FiniteDifference, PerturbationConfig::new(20, 0.1, 0));
    cfg.iterations = 2;
    assert!(surrogate_pgd(&metric, &specs, &ds, Some(&ds), &cfg).is_err());
}
