use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use fspde_harness::config::{parse_value, Kind};
use fspde_harness::run_experiment;

#[derive(Parser)]
#[command(name = "fspde", version, about = "Run a fast-slow SPDE experiment")]
struct Cli {
    /// Experiment kind; must match `kind` in the config file.
    kind: Kind,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => return usage(format!("reading {}: {e}", cli.config.display())),
    };
    let mut value: toml::Value = match toml::from_str(&text) {
        Ok(v) => v,
        Err(e) => return usage(format!("config syntax: {e}")),
    };
    if let (Some(seed), Some(table)) = (cli.seed, value.as_table_mut()) {
        let Ok(seed) = i64::try_from(seed) else {
            return usage("--seed must fit in a signed 64-bit integer");
        };
        table.insert("seed".into(), toml::Value::Integer(seed));
    }
    let mut config = match parse_value(value) {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    if config.kind != cli.kind {
        return usage(format!(
            "config describes a {} experiment, not {}",
            config.kind, cli.kind
        ));
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return usage("--threads must be at least 1");
        }
        config.threads = Some(n);
    }
    match run_experiment(&config, &cli.out) {
        Ok(manifest) => {
            for c in &manifest.criteria {
                println!("{}", c.line());
            }
            println!("outputs written to {}", cli.out.display());
            if manifest.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
