use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use muwsa_cli::{geometry_table, run, ExperimentSpec, Overrides};

#[derive(Parser)]
#[command(
    name = "muwsa",
    version,
    about = "Multi-user widely-spaced array experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Master seed, overriding the spec.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for the CSV output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte-Carlo drops per sweep point, overriding the spec.
    #[arg(long, global = true)]
    drops: Option<usize>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSV files.
    Run { spec: PathBuf },
    /// List every problem with a spec; exits nonzero if there is one.
    Validate { spec: PathBuf },
    /// Print (or write to --out) the antenna positions of the spec's array.
    Geometry { spec: PathBuf },
}

fn load(path: &Path, cli: &Cli) -> anyhow::Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::load(path)?;
    Overrides {
        seed: cli.seed,
        drops: cli.drops,
        out_dir: cli.out.clone(),
    }
    .apply(&mut spec);
    Ok(spec)
}

fn main_inner(cli: &Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("threads: cannot start the worker pool")?;
    }
    match &cli.command {
        Command::Run { spec } => {
            let spec = load(spec, cli)?;
            let mut stdout = std::io::stdout();
            let outcome = run(&spec, &mut stdout)?;
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.failed_drops > 0 {
                println!(
                    "{} drops failed; see the failed_drops column",
                    outcome.failed_drops
                );
            }
        }
        Command::Validate { spec } => {
            let spec = load(spec, cli)?;
            let findings = spec.validate();
            if findings.is_empty() {
                println!("ok");
            } else {
                anyhow::bail!("invalid spec:\n  {}", findings.join("\n  "));
            }
        }
        Command::Geometry { spec } => {
            let spec = load(spec, cli)?;
            let table = geometry_table(&spec)?;
            match &cli.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir).with_context(|| {
                        format!("output: cannot create directory {}", dir.display())
                    })?;
                    let path = dir.join("geometry.csv");
                    std::fs::write(&path, table)
                        .with_context(|| format!("output: cannot write {}", path.display()))?;
                    println!("wrote {}", path.display());
                }
                None => print!("{table}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
