mod common;

use proptest::prelude::*;
use surrogate_pgd::metrics::confusion_rates;
use surrogate_pgd::model::{score, ModelParams};
use surrogate_pgd::surrogates::{Profiler, Subset, SurrogateKind, SurrogateSpec};

fn specs() -> Vec<SurrogateSpec> {
    [
        "hinge:positives",
        "hinge:negatives",
        "logistic:all",
        "hinge:group0_positives",
        "logistic:group1_negatives",
        "precision_at_recall:all:0.5",
        "sigmoid:positives",
    ]
    .iter()
    .map(|s| s.parse().unwrap())
    .collect()
}

fn params() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn profiles_are_nonnegative(theta in params()) {
        let ds = common::noisy_grouped(45, 3, 2);
        let prof = Profiler::new(&specs(), &ds).unwrap();
        let u = prof.profile_of(&ModelParams::from_flat(&theta).unwrap()).unwrap();
        prop_assert!(u.values().iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn convex_surrogates_are_convex_along_segments(a in params(), b in params(), lam in 0.0f64..=1.0) {
        let ds = common::noisy_grouped(45, 3, 2);
        let convex: Vec<SurrogateSpec> = specs()
            .into_iter()
            .filter(|s| matches!(s.kind, SurrogateKind::Hinge | SurrogateKind::Logistic))
            .collect();
        let prof = Profiler::new(&convex, &ds).unwrap();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| lam * x + (1.0 - lam) * y).collect();
        let at = |t: &[f64]| prof.profile_of(&ModelParams::from_flat(t).unwrap()).unwrap().0;
        let (ua, ub, um) = (at(&a), at(&b), at(&mid));
        for k in 0..convex.len() {
            prop_assert!(um[k] <= lam * ua[k] + (1.0 - lam) * ub[k] + 1e-12);
        }
    }

    #[test]
    fn positive_hinge_bounds_false_negative_rate(theta in params()) {
        let ds = common::noisy_grouped(45, 3, 2);
        let p = ModelParams::from_flat(&theta).unwrap();
        let hinge = Profiler::new(&[SurrogateSpec::hinge(Subset::Positives)], &ds).unwrap().profile_of(&p).unwrap().0[0];
        let tpr = confusion_rates(&score(&p, ds.features()).unwrap(), &ds).unwrap().overall.tpr;
        prop_assert!(hinge >= 1.0 - tpr);
    }

    #[test]
    fn disjoint_shift_moves_only_its_surrogate(theta in params(), k in 0usize..2, delta in -2.0f64..2.0) {
        let ds = common::noisy_grouped(45, 3, 2);
        let specs = [SurrogateSpec::hinge(Subset::Positives), SurrogateSpec::hinge(Subset::Negatives)];
        let prof = Profiler::new(&specs, &ds).unwrap();
        let scores = score(&ModelParams::from_flat(&theta).unwrap(), ds.features()).unwrap();
        let mut shifted = scores.0.clone();
        for &i in prof.members(k) {
            shifted[i] += f64::from(ds.labels()[i]) * delta;
        }
        let before = prof.profile_from_scores(&scores).unwrap().0;
        let after = prof.profile_from_scores(&surrogate_pgd::model::ScoreVector(shifted.clone())).unwrap().0;
        prop_assert_eq!(before[1 - k], after[1 - k]);
        prop_assert!((after[k] - prof.shifted_value(k, &scores, delta)).abs() <= 1e-12);
    }
}
