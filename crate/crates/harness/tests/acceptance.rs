//! Acceptance suite: criteria 1 to 8 at full size, criterion 9 on reduced configs.
//!
//! Runs without the libtest harness so the PASS/FAIL lines always reach stdout.

use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use fspde_harness::config::{parse_config, ExperimentConfig, Kind};
use fspde_harness::{run_experiment, CriterionResult};

const SEED: u64 = 1;

fn full_run(kind: Kind) -> (Vec<CriterionResult>, f64) {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::new(kind, SEED);
    let started = Instant::now();
    let manifest = run_experiment(&config, dir.path()).unwrap_or_else(|e| panic!("{kind}: {e:#}"));
    (manifest.criteria, started.elapsed().as_secs_f64())
}

fn reduced(kind: Kind) -> ExperimentConfig {
    let section = match kind {
        Kind::Validate => "samples = 200",
        Kind::FbmStats => "paths = 200\npoints = 8",
        Kind::StieltjesOracle => "points = 257\npairs = 8\npair_points = 129",
        Kind::MollifyRate => {
            "samples = 4\nslope_points = 513\nns = [4, 8, 16]\nlevels = [1.0, 2.0]\nlevel_points = 257"
        }
        Kind::MildSolve => {
            "paths = 64\nou_dt = 0.00390625\nfbm_dt = 0.0078125\nhalving_dt = 0.015625\nhalving_paths = 4"
        }
        Kind::FrozenMixing => {
            "couples = 64\ndecorrelation_horizon = 20.0\ndrift_horizon = 200.0\ndrift_batches = 10\ndrift_rel_tolerance = 1.0"
        }
        Kind::AveragingStudy => "eps = [0.1, 0.05, 0.02]\nreplicates = 8\nslow_dt = 0.03125",
    };
    let text = format!("kind = \"{kind}\"\nseed = 11\n[{}]\n{section}\n", kind.section());
    parse_config(&text).unwrap()
}

/// Every CSV written by one run, keyed by file name.
fn csv_bytes(config: &ExperimentConfig, threads: usize) -> BTreeMap<String, Vec<u8>> {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        threads: Some(threads),
        ..config.clone()
    };
    let manifest = run_experiment(&config, dir.path()).unwrap();
    assert_eq!(manifest.threads, threads);
    manifest
        .files
        .iter()
        .map(|f| (f.clone(), fs::read(dir.path().join(f)).unwrap()))
        .collect()
}

fn determinism() -> CriterionResult {
    let mut mismatches = Vec::new();
    let mut files = 0;
    for kind in Kind::ALL {
        let config = reduced(kind);
        let reference = csv_bytes(&config, 1);
        files += reference.len();
        for threads in [1, 4, 8] {
            if csv_bytes(&config, threads) != reference {
                mismatches.push(format!("{kind} at {threads} threads"));
            }
        }
    }
    CriterionResult {
        id: "criterion-9".into(),
        pass: mismatches.is_empty(),
        detail: if mismatches.is_empty() {
            format!("{files} CSV files from all 7 kinds are byte-identical at 1, 4 and 8 threads and on rerun")
        } else {
            format!("outputs differ: {}", mismatches.join(", "))
        },
    }
}

fn main() -> ExitCode {
    // per-kind wall-clock limits in seconds on one core
    let kinds = [
        (Kind::FbmStats, 10.0),
        (Kind::StieltjesOracle, 30.0),
        (Kind::MollifyRate, 120.0),
        (Kind::MildSolve, 120.0),
        (Kind::FrozenMixing, 120.0),
        (Kind::AveragingStudy, 900.0),
        (Kind::Validate, 1.0),
    ];
    let mut results = Vec::new();
    let mut timing = Vec::new();
    for (kind, limit) in kinds {
        let (criteria, secs) = full_run(kind);
        timing.push(format!("{kind}: {secs:.1} s (limit {limit} s)"));
        results.extend(criteria.into_iter().filter(|c| c.id.starts_with("criterion-")));
    }
    results.push(determinism());
    results.sort_by_key(|c| c.id.trim_start_matches("criterion-").parse::<u32>().unwrap());

    for r in &results {
        println!("{}", r.line());
    }
    for t in &timing {
        println!("timing {t}");
    }
    let expected: Vec<String> = (1..=9).map(|i| format!("criterion-{i}")).collect();
    let ids: Vec<&str> = results.iter().map(|r| r.id.as_str()).collect();
    if ids != expected || results.iter().any(|r| !r.pass) {
        println!("acceptance: FAILED");
        return ExitCode::FAILURE;
    }
    println!("acceptance: all 9 criteria PASS");
    ExitCode::SUCCESS
}
