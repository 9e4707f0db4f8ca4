use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use levygreen_cli::{run_experiment, CliError, ExperimentConfig, Kind, RunOptions};

#[derive(Parser)]
#[command(name = "levygreen", version, about = "Reproducible experiments on killed Lévy processes and drift perturbations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts under the output root.
    Run(RunArgs),
    /// Print the resolved config and its hash without running anything.
    Resolve(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    kind: Kind,
    /// JSON config; every field is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo shards (results do not depend on it).
    #[arg(long, default_value_t = 1)]
    shards: usize,
    /// Output root; the run directory is named after the config hash.
    #[arg(long, env = "LEVYGREEN_OUT", default_value = "runs")]
    out: PathBuf,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    eps_b: Option<f64>,
    #[arg(long)]
    engine: Option<String>,
    /// Any other knob, as `name=value` (value parsed as JSON when possible).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                ExperimentConfig::from_json(&text)?
            }
            None => ExperimentConfig::default(),
        };
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        let k = &mut cfg.knobs;
        k.n = self.n.or(k.n);
        k.dt = self.dt.or(k.dt);
        k.h = self.h.or(k.h);
        k.n_max = self.n_max.or(k.n_max);
        k.tol = self.tol.or(k.tol);
        k.eps_b = self.eps_b.or(k.eps_b);
        k.engine = self.engine.clone().or(k.engine.take());
        for kv in &self.set {
            let (key, value) = kv.split_once('=').ok_or_else(|| CliError::Usage(format!("--set {kv}: expected KEY=VALUE")))?;
            cfg.set_knob(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }
}

fn fail(e: &CliError) -> ExitCode {
    let reason = serde_json::json!({ "reason": e.reason(), "message": e.to_string() });
    eprintln!("{reason}");
    ExitCode::from(if matches!(e, CliError::Usage(_)) { 2 } else { 3 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Resolve(args) => {
            match args.config().and_then(|c| c.resolve(args.kind)) {
                Ok(c) => {
                    println!("{}", serde_json::to_string_pretty(&c).expect("config serializes"));
                    println!("hash {}", c.hash());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Run(args) => {
            let cfg = match args.config() {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            match run_experiment(cfg, args.kind, &args.out, RunOptions { shards: args.shards.max(1) }) {
                Ok(out) => {
                    println!("{}", out.dir.display());
                    for c in out.summary["checks"].as_array().into_iter().flatten() {
                        println!(
                            "  {} {}{}",
                            if c["pass"].as_bool() == Some(true) { "pass" } else { "FAIL" },
                            c["name"].as_str().unwrap_or("?"),
                            if c["hard"].as_bool() == Some(true) { "" } else { " (soft)" }
                        );
                    }
                    match out.failure {
                        Some(e) => fail(&e),
                        None if out.passed => ExitCode::SUCCESS,
                        None => ExitCode::from(1),
                    }
                }
                Err(e) => fail(&e),
            }
        }
    }
}
