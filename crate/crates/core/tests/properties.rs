use fastgate::*;
use proptest::prelude::*;

fn model(chi: f64, counting: PairCounting) -> CostModel {
    let modes = modes_from_chi(chi, 2.0 * std::f64::consts::PI * 1.2e6).unwrap();
    CostModel::for_pair(&modes, 0.16, 0.0).unwrap().with_counting(counting)
}

fn groups() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-20.0f64..20.0, 0.0f64..1e-6), 2..9).prop_filter("distinct times", |g| {
        let mut t: Vec<f64> = g.iter().map(|x| x.1).collect();
        t.sort_by(f64::total_cmp);
        t.windows(2).all(|w| w[1] - w[0] > 1e-12)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cost_is_translation_invariant(g in groups(), shift in -1e-6f64..1e-6, chi in 1e-4f64..1.0) {
        let m = model(chi, PairCounting::Once);
        let moved: Vec<(f64, f64)> = g.iter().map(|&(z, t)| (z, t + shift)).collect();
        let (a, b) = (m.breakdown(&g), m.breakdown(&moved));
        prop_assert!((a.total - b.total).abs() <= 1e-9 * a.total.max(1e-12));
    }

    #[test]
    fn sign_flip_keeps_the_cost(g in groups(), chi in 1e-4f64..1.0) {
        // Δφ is even in z and every displacement only changes sign
        let m = model(chi, PairCounting::Twice);
        let flipped: Vec<(f64, f64)> = g.iter().map(|&(z, t)| (-z, t)).collect();
        let (a, b) = (m.cost(&g), m.cost(&flipped));
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1e-12));
    }

    #[test]
    fn gradient_matches_central_differences(g in groups(), chi in 1e-3f64..1.0) {
        let m = model(chi, PairCounting::Once);
        let mut grad = vec![0.0; g.len()];
        let value = m.cost_and_gradient(&g, &mut grad);
        prop_assert!((value - m.cost(&g)).abs() <= 1e-12 * value.max(1.0));
        for k in 0..g.len() {
            let h = 1e-5 * g[k].0.abs().max(1.0);
            let mut p = g.clone();
            let mut q = g.clone();
            p[k].0 += h;
            q[k].0 -= h;
            let fd = (m.cost(&p) - m.cost(&q)) / (2.0 * h);
            prop_assert!((grad[k] - fd).abs() <= 1e-6 * grad[k].abs().max(1e-3 * value.max(1e-12)), "k {}: {} vs {}", k, grad[k], fd);
        }
    }

    #[test]
    fn degraded_fidelity_never_exceeds_ideal(n in 1u64..5000, eps in 0.0f64..1e-3, f0 in 0.0f64..=1.0) {
        let spec = PulseErrorSpec::new(eps, n, f0).unwrap();
        prop_assume!(spec.load() <= DEFAULT_REGIME_CUTOFF);
        prop_assert!(degraded_fidelity(&spec) <= f0 + 1e-15);
    }
}
