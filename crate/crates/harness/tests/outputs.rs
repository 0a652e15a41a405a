use fspde_harness::config::{parse_config, Kind};
use fspde_harness::output::read_csv;
use fspde_harness::run_experiment;

#[test]
fn default_configs_hash_differently() {
    let hashes: Vec<String> = Kind::ALL
        .iter()
        .map(|&k| parse_config(&format!("kind = \"{k}\"\nseed = 2\n")).unwrap().hash())
        .collect();
    for (i, a) in hashes.iter().enumerate() {
        for b in &hashes[i + 1..] {
            assert_ne!(a, b);
        }
    }
}

#[test]
fn csv_files_carry_the_config_hash() {
    let config = parse_config("kind = \"stieltjes-oracle\"\nseed = 4\n[stieltjes_oracle]\npairs = 3\npair_points = 65\n").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = run_experiment(&config, dir.path()).unwrap();
    assert!(dir.path().join("manifest.json").exists());
    assert_eq!(manifest.files, ["stieltjes_oracle.csv", "stieltjes_pairs.csv"]);
    for f in &manifest.files {
        let back = read_csv(&dir.path().join(f)).unwrap();
        assert_eq!(back.config_hash.as_deref(), Some(config.hash().as_str()));
    }
    let pairs = read_csv(&dir.path().join("stieltjes_pairs.csv")).unwrap();
    assert_eq!(pairs.header, ["pair", "integral", "bound", "ratio"]);
    assert_eq!(pairs.rows.len(), 3);
}

#[test]
fn averaging_study_table_has_the_documented_columns() {
    let config = parse_config(
        "kind = \"averaging-study\"\nseed = 3\n[averaging_study]\neps = [0.1, 0.05, 0.02]\nreplicates = 4\nslow_dt = 0.0625\ncontrol = false\n",
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&config, dir.path()).unwrap();
    let t = read_csv(&dir.path().join("averaging_study.csv")).unwrap();
    assert_eq!(t.header, ["eps", "delta", "error", "stderr", "n_rep", "seed"]);
    assert_eq!(t.rows.len(), 3);
    assert!(t.rows.iter().all(|r| r[4] == 4.0 && r[5] == 3.0));
    let path = std::fs::read_to_string(dir.path().join("slow_path_eps.csv")).unwrap();
    assert!(path.lines().nth(1).unwrap().starts_with("t,v0,"));
}
