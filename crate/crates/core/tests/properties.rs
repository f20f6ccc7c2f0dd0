use apxlab_core::adaptive::{eval_distance, fit_rate, BudgetCurve, CurveSample, DistanceFunction};
use apxlab_core::catalog::{fe_native, lshape_corner, smooth_sine};
use apxlab_core::checks::random_partition;
use apxlab_core::elliptic::dorfler_mark;
use apxlab_core::fe::FeSpace;
use apxlab_core::mesh::{l_shape, unit_square, Gamma, Partition, Rule};
use apxlab_core::quasi::q_interp;
use apxlab_core::smoothness::{multilevel_seminorm, UniformChain};
use apxlab_core::ScalarField;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn rule(red: bool) -> Rule {
    if red {
        Rule::Red
    } else {
        Rule::Nvb
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn areas_sum_to_domain(seed in 0u64..10_000, red: bool, rounds in 1usize..5) {
        let p0 = Partition::initial(l_shape(rule(red)));
        let p = random_partition(&p0, rounds, 0.35, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!((p.total_area() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn overlay_commutes_and_refines(seed in 0u64..10_000, red: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p0 = Partition::initial(unit_square(rule(red)));
        let a = random_partition(&p0, 3, 0.3, &mut rng);
        let b = random_partition(&p0, 3, 0.3, &mut rng);
        let ab = a.overlay(&b).unwrap();
        prop_assert_eq!(&ab, &b.overlay(&a).unwrap());
        prop_assert!(ab.len() <= a.len() + b.len());
        prop_assert!(ab.len() >= a.len().max(b.len()));
        prop_assert_eq!(&a.overlay(&ab).unwrap(), &ab);
    }

    #[test]
    fn nvb_completion_conforms(seed in 0u64..10_000) {
        let p0 = Partition::initial(l_shape(Rule::Nvb));
        let p = random_partition(&p0, 4, 0.25, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(p.conformity_audit());
    }

    #[test]
    fn distances_are_homogeneous(c in -4.0f64..4.0, seed in 0u64..1000) {
        let p0 = Partition::initial(unit_square(Rule::Nvb));
        let v = fe_native(&p0, 2, 1, seed);
        let u = smooth_sine();
        let cu = u.scaled(c);
        for rho in [DistanceFunction::Energy, DistanceFunction::Lp(2.0), DistanceFunction::WeightedLp { p: 1.5, theta: 1.0 }] {
            let a = eval_distance(&rho, &u, &v).unwrap();
            let b = eval_distance(&rho, &cu, &v.scaled(c)).unwrap();
            prop_assert!((b - c.abs() * a).abs() <= 1e-10 * (1.0 + a));
        }
    }

    #[test]
    fn quasi_interpolant_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let p = Partition::initial(l_shape(Rule::Red)).uniform(1);
        let p = p.refine(&[p.active()[2]]).unwrap();
        let v = Arc::new(FeSpace::continuous(&p, 2, Gamma::None));
        let f = smooth_sine();
        let g = lshape_corner();
        let comb = ScalarField::from_fn("comb", move |x| a * f.value(x) + b * g.value(x));
        let qc = q_interp(&v, &comb).unwrap();
        let qf = q_interp(&v, &smooth_sine()).unwrap();
        let qg = q_interp(&v, &lshape_corner()).unwrap();
        for i in 0..v.ndofs {
            let lin = a * qf.coeffs[i] + b * qg.coeffs[i];
            prop_assert!((qc.coeffs[i] - lin).abs() < 1e-9);
        }
    }

    #[test]
    fn multilevel_seminorm_homogeneous(c in 0.1f64..5.0) {
        let p0 = Partition::initial(unit_square(Rule::Red));
        let chain = UniformChain::new(&p0, 1, 3);
        let u = smooth_sine();
        let a = multilevel_seminorm(&u, 1.5, 2.0, 2.0, &chain, None).unwrap().value;
        let b = multilevel_seminorm(&u.scaled(c), 1.5, 2.0, 2.0, &chain, None).unwrap().value;
        prop_assert!((b - c * a).abs() <= 1e-10 * c * a);
    }

    #[test]
    fn rate_ignores_constant_factor(s in 0.05f64..2.0, k in 0.01f64..100.0) {
        let mk = |scale: f64| BudgetCurve {
            samples: (0..7).map(|i| {
                let n = 8usize << i;
                CurveSample { n, error: scale * (n as f64).powf(-s), epsilon: 1.0, surrogate: false }
            }).collect(),
            backend: "synthetic".into(),
            ledgers: vec![],
            truncated: false,
        };
        let a = fit_rate(&mk(1.0), None).unwrap().s;
        let b = fit_rate(&mk(k), None).unwrap().s;
        prop_assert!((a - s).abs() < 1e-10);
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn envelope_is_nonincreasing(v in prop::collection::vec((1usize..10_000, 0.0f64..10.0), 1..40)) {
        let c = BudgetCurve {
            samples: v.iter().map(|&(n, error)| CurveSample { n, error, epsilon: 1.0, surrogate: false }).collect(),
            backend: "random".into(),
            ledgers: vec![],
            truncated: false,
        };
        let env = c.envelope();
        for w in env.windows(2) {
            prop_assert!(w[0].0 < w[1].0);
            prop_assert!(w[1].1 <= w[0].1);
        }
    }

    #[test]
    fn dorfler_set_is_minimal(v in prop::collection::vec(0.0f64..1.0, 1..60), theta in 0.05f64..0.95) {
        let ids: Vec<u32> = (0..v.len() as u32).collect();
        let marked = dorfler_mark(&v, &ids, theta);
        let total: f64 = v.iter().sum();
        let share: f64 = marked.iter().map(|&i| v[i]).sum();
        prop_assert!(share >= theta * total - 1e-12);
        if let Some(&last) = marked.last() {
            prop_assert!(share - v[last] < theta * total);
        }
    }
}
