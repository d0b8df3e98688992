//! `iprw`: declarative scenario runner for simulation and verification of
//! iterated perturbed random walks on branching trees.
//!
//! Exit codes: 0 all verdicts pass, 1 verdict failures, 2 config/schema
//! errors, 3 computation guards.

mod config;
mod emit;
mod runner;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, ScenarioConfig, Task};
use runner::{run, run_single_theorem, RunError, RunManifest};

#[derive(Parser)]
#[command(
    name = "iprw",
    version,
    about = "Simulate iterated perturbed random walks and verify their renewal-theoretic laws"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario configuration (JSON; see schema/scenario-config.v1.json)
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replicate-level parallelism (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (overrides the config's out_dir)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute renewal grids (U, V, convolution powers) and bound audits
    Renewal(RunArgs),
    /// Simulate generation counts and dump raw paths
    Simulate(RunArgs),
    /// Verify one theorem (elementary|rate|blackwell|key-renewal|variance|
    /// slln|clt|support) or `all`
    Verify {
        theorem_id: String,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Sample normalized count paths and check the limit covariances
    Flt(RunArgs),
    /// Render the text summary of a finished run directory
    Report {
        /// Run directory containing manifest.json
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(code) => ExitCode::from(code),
    }
}

fn fail(code: i32, msg: impl std::fmt::Display) -> u8 {
    eprintln!("error: {msg}");
    code as u8
}

fn real_main() -> Result<bool, u8> {
    let cli = Cli::parse();
    match cli.command {
        Command::Renewal(args) => execute(args, Task::Renewal, None),
        Command::Simulate(args) => execute(args, Task::Simulate, None),
        Command::Flt(args) => execute(args, Task::Flt, None),
        Command::Verify { theorem_id, args } => match theorem_id.as_str() {
            "all" => execute(args, Task::VerifyAll, None),
            "variance" => execute(args, Task::Variance, Some("variance")),
            "slln" => execute(args, Task::Slln, Some("slln")),
            "clt" => execute(args, Task::Clt, Some("clt")),
            id @ ("elementary" | "rate" | "blackwell" | "key-renewal" | "support") => {
                execute(args, Task::VerifyAll, Some(id))
            }
            other => Err(fail(
                2,
                format!(
                    "unknown theorem id {other:?}; expected one of elementary, rate, \
                     blackwell, key-renewal, variance, slln, clt, support, all"
                ),
            )),
        },
        Command::Report { out } => report(&out),
    }
}

/// Load the config, check task compatibility, run, and print the verdict
/// summary.
fn execute(args: RunArgs, expected: Task, theorem: Option<&str>) -> Result<bool, u8> {
    let bytes = std::fs::read(&args.config).map_err(|e| {
        fail(2, ConfigError::Io { path: args.config.display().to_string(), source: e })
    })?;
    let cfg = ScenarioConfig::from_bytes(&bytes).map_err(|e| fail(2, e))?;

    let compatible = cfg.task == expected || (theorem.is_some() && cfg.task == Task::VerifyAll);
    if !compatible {
        return Err(fail(
            2,
            format!(
                "config task {:?} does not match the requested command ({})",
                cfg.task.name(),
                expected.name()
            ),
        ));
    }

    let seed = args.seed.unwrap_or(cfg.seed);
    let workers = args.workers.or(cfg.workers);
    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| fail(2, "no output directory: set out_dir in the config or pass --out"))?;

    let outcome = match theorem {
        Some(id) if cfg.task == Task::VerifyAll && id != "all" => {
            run_single_theorem(&cfg, &bytes, id, seed, workers, &out_dir)
        }
        _ => run(&cfg, &bytes, seed, workers, &out_dir),
    }
    .map_err(|e: RunError| fail(e.exit_code(), e))?;

    print_manifest(&outcome.manifest, &out_dir);
    Ok(outcome.all_pass)
}

fn print_manifest(manifest: &RunManifest, out_dir: &Path) {
    println!("run: {}", out_dir.display());
    println!("config: {}", manifest.config_hash);
    println!("seed: {}", manifest.seed);
    for (name, verdict) in &manifest.verdicts {
        println!("  {name}: {verdict}");
    }
    println!(
        "{} artifacts in {:.2}s",
        manifest.artifacts.len(),
        manifest.wall_time_secs
    );
}

fn report(out_dir: &Path) -> Result<bool, u8> {
    let manifest_path = out_dir.join("manifest.json");
    let bytes = std::fs::read(&manifest_path)
        .map_err(|e| fail(2, format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: RunManifest =
        serde_json::from_slice(&bytes).map_err(|e| fail(2, format!("bad manifest: {e}")))?;
    print_manifest(&manifest, out_dir);
    for name in &manifest.artifacts {
        if name.ends_with(".txt") {
            if let Ok(text) = std::fs::read_to_string(out_dir.join(name)) {
                println!("--- {name} ---\n{text}");
            }
        }
    }
    Ok(manifest
        .verdicts
        .values()
        .all(|v| v == "pass" || v.starts_with("skipped")))
}
