use std::fs;

use jmsel::harness::{compare_priors, run_study, write_outputs, DataSource, RunConfig};
use jmsel::simgen::Scenario;
use jmsel::spec::{ChainSettings, PriorKind};

fn config(dir: &std::path::Path, threads: usize) -> RunConfig {
    RunConfig {
        priors: vec![PriorKind::BsgsD, PriorKind::Ss],
        replicates: 3,
        seed: 42,
        output_dir: dir.to_path_buf(),
        threads: Some(threads),
        data: DataSource::Scenario {
            scenario: Scenario::I,
            n: 40,
            censoring_target: None,
        },
        chain: ChainSettings {
            pilot_iterations: 40,
            pilot_burn_in: 10,
            iterations: 60,
            burn_in: 20,
            thin: 1,
            adapt: true,
        },
        ..RunConfig::default()
    }
}

#[test]
fn study_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 1);
    let a = run_study(&cfg).unwrap();
    let b = run_study(&cfg).unwrap();
    assert_eq!(a, b);
    let (da, db) = (dir.path().join("a"), dir.path().join("b"));
    write_outputs(&a, &da).unwrap();
    write_outputs(&b, &db).unwrap();
    for name in [
        "replicates.json",
        "summary.json",
        "selection.txt",
        "selection.csv",
        "estimates.csv",
    ] {
        assert_eq!(
            fs::read(da.join(name)).unwrap(),
            fs::read(db.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let one = run_study(&config(dir.path(), 1)).unwrap();
    let three = run_study(&config(dir.path(), 3)).unwrap();
    assert_eq!(one.results, three.results);
    let order: Vec<(usize, PriorKind)> = three.results.iter().map(|r| (r.replicate, r.prior)).collect();
    assert_eq!(
        order,
        vec![
            (1, PriorKind::BsgsD),
            (1, PriorKind::Ss),
            (2, PriorKind::BsgsD),
            (2, PriorKind::Ss),
            (3, PriorKind::BsgsD),
            (3, PriorKind::Ss),
        ]
    );
    assert_eq!(three.results[2].seed, 43);
}

#[test]
fn comparison_requires_matching_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_study(&config(dir.path(), 1)).unwrap();
    let cmp = compare_priors(std::slice::from_ref(&a)).unwrap();
    assert!(!cmp.is_empty());
    let mut other = config(dir.path(), 1);
    other.seed = 1000;
    other.priors = vec![PriorKind::Bsgs];
    let b = run_study(&other).unwrap();
    assert!(compare_priors(&[a, b]).is_err());
}
