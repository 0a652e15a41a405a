use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fspde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fspde"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = "kind = \"fbm-stats\"\nseed = 5\n[fbm_stats]\npaths = 100\npoints = 4\nmax_z = 10.0\n";

fn run(dir: &Path, kind: &str, text: &str, extra: &[&str]) -> Output {
    let cfg = write_config(dir, text);
    let out = dir.join("out");
    let mut args = vec![kind, "--config", &cfg, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    fspde(&args)
}

#[test]
fn passing_run_exits_zero_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "fbm-stats", SMALL, &["--threads", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PASS criterion-1"), "{stdout}");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["threads"], 2);
    assert_eq!(manifest["seed"], 5);
    let csv = fs::read_to_string(dir.path().join("out/fbm_covariance.csv")).unwrap();
    assert!(csv.starts_with("# config_hash: "));
    assert!(csv.lines().nth(1).unwrap().starts_with("hurst,s,t,"));
}

#[test]
fn failing_criterion_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("max_z = 10.0", "max_z = 1e-9");
    let o = run(dir.path(), "fbm-stats", &text, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL criterion-1"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("fbm-stats", SMALL.replace("paths = 100", "paths = 100\nbogus = 1")),
        ("fbm-stats", SMALL.replace("max_z", "hursts = [0.3]\nmax_z")),
        ("mild-solve", SMALL.to_string()),
        ("fbm-stats", "kind = \"fbm-stats\"\n".to_string()),
        ("fbm-stats", "this is not toml".to_string()),
    ];
    for (kind, text) in cases {
        let o = run(dir.path(), kind, &text, &[]);
        assert_eq!(o.status.code(), Some(2), "{kind}: {text}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(fspde(&["frobnicate", "--config", "x", "--out", "y"]).status.code(), Some(2));
    assert_eq!(fspde(&["validate", "--out", "y"]).status.code(), Some(2));
    let o = fspde(&["validate", "--config", "/nonexistent/cfg.toml", "--out", "y"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(dir.path(), "fbm-stats", SMALL, &["--threads", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let hash = |extra: &[&str]| {
        let o = run(dir.path(), "fbm-stats", SMALL, extra);
        assert_eq!(o.status.code(), Some(0));
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
        (m["seed"].as_u64().unwrap(), m["config_hash"].as_str().unwrap().to_string())
    };
    let (s0, h0) = hash(&[]);
    let (s1, h1) = hash(&["--seed", "99"]);
    let (_, h2) = hash(&["--threads", "3"]);
    assert_eq!((s0, s1), (5, 99));
    assert_ne!(h0, h1);
    assert_eq!(h0, h2);
}
