//! `nedm` binary. Exit codes: 0 success, 2 usage or configuration error,
//! 3 I/O error, 4 non-convergence. `NEDM_THREADS` sets the worker count.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nedm_cli::commands::campaign::CampaignArgs;
use nedm_cli::commands::inference::{resolve_bound, resolve_fit, DatasetArgs, SearchArgs};
use nedm_cli::commands::point::{ContrastArgs, ScanArgs, TransitionArgs};
use nedm_cli::commands::{execute, Context, Invocation};
use nedm_cli::error::{CliError, CliResult, EXIT_USAGE};
use nedm_cli::manifest::Manifest;

const THREADS_ENV: &str = "NEDM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "nedm", version, about = "Neutron EDM flip-probability, campaign and inference tools")]
struct Cli {
    /// Worker threads; overrides NEDM_THREADS. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ManifestArg {
    /// Also write a manifest that `nedm replay` can rerun.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Flip probability for one state and kick.
    Transition {
        #[command(flatten)]
        args: TransitionArgs,
        #[command(flatten)]
        m: ManifestArg,
    },
    /// Quantum vs definite-value Monte Carlo for one state.
    Contrast {
        #[command(flatten)]
        args: ContrastArgs,
        #[command(flatten)]
        m: ManifestArg,
    },
    /// Closed form and quadrature over a range of ξ.
    Scan {
        #[command(flatten)]
        args: ScanArgs,
        #[command(flatten)]
        m: ManifestArg,
    },
    /// Simulate a multi-ξ flip-count dataset.
    Dataset {
        #[command(flatten)]
        args: DatasetArgs,
        #[command(flatten)]
        m: ManifestArg,
    },
    /// Comagnetometer campaign and EDM estimate.
    Campaign {
        #[command(flatten)]
        args: CampaignArgs,
        #[command(flatten)]
        m: ManifestArg,
    },
    /// Joint maximum-likelihood fit of (d_n, Δ).
    Fit {
        #[command(flatten)]
        args: SearchArgs,
        #[command(flatten)]
        m: ManifestArg,
    },
    /// Profile-likelihood upper bound on d_n.
    Bound {
        #[command(flatten)]
        args: SearchArgs,
        #[command(flatten)]
        m: ManifestArg,
    },
    /// Rerun a command from its manifest.
    Replay {
        manifest: PathBuf,
        /// Write outputs into this directory instead of the recorded ones.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn configure_threads(flag: Option<usize>) -> CliResult<()> {
    let threads = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Usage(format!("{THREADS_ENV}={v} is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<i32> {
    configure_threads(cli.threads)?;
    let (manifest, manifest_path, ctx) = match cli.command {
        Command::Replay {
            manifest,
            output_dir,
        } => (
            Manifest::load(&manifest)?,
            None,
            Context { redirect: output_dir },
        ),
        command => {
            let (invocation, path) = match command {
                Command::Transition { args, m } => (Invocation::Transition(args.resolve()?), m.manifest),
                Command::Contrast { args, m } => (Invocation::Contrast(args.resolve()?), m.manifest),
                Command::Scan { args, m } => (Invocation::Scan(args.resolve()?), m.manifest),
                Command::Dataset { args, m } => (Invocation::Dataset(args.resolve()?), m.manifest),
                Command::Campaign { args, m } => (Invocation::Campaign(args.resolve()?), m.manifest),
                Command::Fit { args, m } => (Invocation::Fit(resolve_fit(&args)?), m.manifest),
                Command::Bound { args, m } => (Invocation::Bound(resolve_bound(&args)?), m.manifest),
                Command::Replay { .. } => unreachable!("handled above"),
            };
            (Manifest::new(invocation), path, Context::default())
        }
    };
    if let Some(path) = &manifest_path {
        manifest.write(path)?;
    }
    let outcome = execute(&manifest, &ctx)?;
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(outcome.stdout.as_bytes())
        .and_then(|_| stdout.flush())
        .map_err(|e| CliError::io("<stdout>", e))?;
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("nedm: {e}");
            let code = e.exit_code();
            debug_assert!(code >= EXIT_USAGE);
            ExitCode::from(code as u8)
        }
    }
}
