use proptest::prelude::*;

use jmsel::numeric::GaussLegendre;
use jmsel::prior_calculus::{block_means, enumerate_masks, pi_mean, pi_variance, DirichletWeights, WeightScaling};
use jmsel::simgen::{Scenario, ScenarioSpec};
use jmsel::survival::{SplineBasis, SubjectPath};

fn ordered(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..10.0, n).prop_filter_map("strict order", |mut v| {
        v.sort_by(|a, b| b.total_cmp(a));
        v.windows(2).all(|w| w[0] > w[1]).then_some(v)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn block_means_form_a_distribution(a in (1usize..=8).prop_flat_map(ordered), binomial in any::<bool>()) {
        let scaling = if binomial { WeightScaling::BinomialScaled } else { WeightScaling::Plain };
        let w = DirichletWeights::new(a, scaling).unwrap();
        let m = block_means(&w);
        prop_assert!(m.iter().all(|&p| p > 0.0));
        prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expected_inclusion_matches_expected_cardinality(a in (1usize..=8).prop_flat_map(ordered)) {
        let j = a.len();
        let w = DirichletWeights::new(a, WeightScaling::Plain).unwrap();
        let cardinality: f64 = block_means(&w).iter().enumerate().map(|(k, p)| (k + 1) as f64 * p).sum();
        prop_assert!((j as f64 * pi_mean(&w) - cardinality).abs() < 1e-10);
        let v = pi_variance(&w, 0, j).unwrap();
        let m = pi_mean(&w);
        prop_assert!(v >= 0.0 && v <= m * (1.0 - m) + 1e-15);
    }

    #[test]
    fn catalog_blocks_have_binomial_sizes(n in 1usize..=10) {
        let cat = enumerate_masks(n).unwrap();
        prop_assert_eq!(cat.len(), (1usize << n) - 1);
        for k in 1..=n {
            let block = cat.block(k);
            let size: usize = (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1));
            prop_assert_eq!(block.len(), size);
            prop_assert!(block.clone().all(|c| cat.get(c).cardinality() == k));
        }
    }

    #[test]
    fn spline_basis_is_a_partition_of_unity(
        mut knots in prop::collection::vec(0.1f64..9.9, 0..6),
        degree in 0usize..=3,
        t in 0.0f64..=10.0,
    ) {
        knots.sort_by(f64::total_cmp);
        knots.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        let basis = SplineBasis::new(0.0, 10.0, knots, degree).unwrap();
        let mut row = vec![0.0; basis.n_basis()];
        basis.eval_into(t, &mut row);
        prop_assert!(row.iter().all(|&b| b >= -1e-14));
        prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cumulative_hazard_is_monotone(
        seed in 0u64..1000,
        t1 in 0.0f64..15.0,
        dt in 0.0f64..5.0,
        coefs in prop::collection::vec(-1.5f64..1.5, 9),
        race in 0u8..=1,
    ) {
        let sc = Scenario::ALL[(seed % 4) as usize];
        let spec = ScenarioSpec::new(sc, 10, seed).unwrap();
        let mut model = spec.hazard_model().unwrap();
        model.hazard_rule = GaussLegendre::new(15);
        let cov = [race as f64];
        let path = SubjectPath { entry_age: 2.0, covariates: &cov, coefs: &coefs };
        let t2 = (t1 + dt).min(spec.design.a_max - 2.0);
        let h1 = model.cumulative_hazard(&path, t1).unwrap();
        let h2 = model.cumulative_hazard(&path, t2).unwrap();
        prop_assert!(h1 >= 0.0);
        prop_assert!(h2 >= h1 * (1.0 - 1e-12));
    }
}
