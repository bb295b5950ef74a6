use jmsel::simgen::{calibrate_censoring, generate, generate_trajectories, Scenario, ScenarioSpec};

#[test]
fn random_effect_covariance_matches_truth() {
    let spec = ScenarioSpec::new(Scenario::I, 10_000, 77).unwrap();
    let subjects = generate_trajectories(&spec).unwrap();
    let blocks = spec.longitudinal.blocks();
    let (g_n, dim) = (3, blocks.len());
    let n = subjects.len() as f64;
    for (k, d) in blocks.iter().enumerate() {
        let col = |g: usize| -> Vec<f64> { subjects.iter().map(|s| s.truth.random_effects[g * dim + k]).collect() };
        let cols: Vec<Vec<f64>> = (0..g_n).map(col).collect();
        let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n).collect();
        for a in 0..g_n {
            for b in 0..g_n {
                let s = cols[a]
                    .iter()
                    .zip(&cols[b])
                    .map(|(x, y)| (x - means[a]) * (y - means[b]))
                    .sum::<f64>()
                    / (n - 1.0);
                // relative to the entry's scale sqrt(D_aa D_bb)
                let scale = (d[(a, a)] * d[(b, b)]).sqrt();
                assert!(
                    (s - d[(a, b)]).abs() <= 0.05 * scale,
                    "block {k} entry ({a},{b}): {s} vs {}",
                    d[(a, b)]
                );
            }
        }
    }
}

#[test]
fn calibrated_rate_reproduces_target_on_fresh_draw() {
    let mut spec = ScenarioSpec::new(Scenario::II, 4000, 2024).unwrap();
    let rate = calibrate_censoring(&spec, 2000).unwrap();
    spec.censoring_rate = Some(rate);
    let g = generate(&spec).unwrap();
    assert!(
        (g.realized_censoring - 0.30).abs() <= 0.03,
        "realized {} at rate {rate}",
        g.realized_censoring
    );
}

#[test]
fn every_scenario_hits_its_censoring_target() {
    for sc in Scenario::ALL {
        let g = generate(&ScenarioSpec::new(sc, 1500, 5).unwrap()).unwrap();
        assert!(
            (g.realized_censoring - 0.30).abs() <= 0.03,
            "{sc}: {}",
            g.realized_censoring
        );
    }
}
