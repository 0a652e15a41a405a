//! Runs one configured experiment and writes its files.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};

use crate::config::ExperimentConfig;
use crate::experiments;
use crate::output::{write_csv, RunManifest};

/// Runs `config` on a pool of `config.threads` workers (all cores when unset) and
/// writes every table, sample path and `manifest.json` into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("building the worker pool")?;
    let threads = pool.current_num_threads();
    let outcome = pool.install(|| experiments::execute(config))?;

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let hash = config.hash();
    let mut files = Vec::new();
    for table in &outcome.tables {
        let name = format!("{}.csv", table.name);
        let path = out_dir.join(&name);
        write_csv(&path, table, &hash).with_context(|| format!("writing {}", path.display()))?;
        files.push(name);
    }
    for (stem, path) in &outcome.paths {
        let name = format!("{stem}.csv");
        let target = out_dir.join(&name);
        fs::write(&target, path.to_csv(&[format!("config_hash: {hash}")]))
            .with_context(|| format!("writing {}", target.display()))?;
        files.push(name);
    }
    let manifest = RunManifest {
        kind: config.kind.name().to_string(),
        config_hash: hash,
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        threads,
        wall_time_s: started.elapsed().as_secs_f64(),
        criteria: outcome.checks,
        files,
    };
    let target = out_dir.join("manifest.json");
    fs::write(&target, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", target.display()))?;
    Ok(manifest)
}
