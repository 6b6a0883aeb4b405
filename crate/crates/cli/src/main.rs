use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use plaplab_cli::{parse_config, run, Kind, RunManifest};

#[derive(Parser)]
#[command(name = "plaplab", version, about = "Experiments for the weighted anisotropic p-Laplace equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward Dirichlet solve.
    Solve(RunArgs),
    /// Dirichlet-to-Neumann pairing table over a dictionary.
    Dn(RunArgs),
    /// Monotonicity triples for two ordered conductivities.
    Mono(RunArgs),
    /// Estimate the set where a hidden conductivity exceeds the reference.
    Detect(RunArgs),
    /// Gradient stability under coefficient perturbations.
    Perturb(RunArgs),
    /// Complex-gradient, stream-function and plateau diagnostics.
    Ucp(RunArgs),
    /// Empirical size of the nonvanishing-gradient neighbourhood.
    CalibrateEps(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized suites (overrides the config's `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn execute(kind: Kind, args: RunArgs) -> anyhow::Result<RunManifest> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg = parse_config(&text).with_context(|| format!("in {}", args.config.display()))?;
    match cfg.kind {
        Some(k) if k != kind => bail!("config is for '{}', not '{}'", k.name(), kind.name()),
        _ => cfg.kind = Some(kind),
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let base = args.config.parent().map(PathBuf::from).unwrap_or_default();
    let out = match (args.out, &cfg.output) {
        (Some(o), _) => o,
        (None, Some(o)) => base.join(o),
        (None, None) => bail!("no output directory: pass --out or set 'output' in the config"),
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    Ok(pool.install(|| run(&cfg, &base, &out))?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Solve(a) => (Kind::Solve, a),
        Command::Dn(a) => (Kind::Dn, a),
        Command::Mono(a) => (Kind::Mono, a),
        Command::Detect(a) => (Kind::Detect, a),
        Command::Perturb(a) => (Kind::Perturb, a),
        Command::Ucp(a) => (Kind::Ucp, a),
        Command::CalibrateEps(a) => (Kind::CalibrateEps, a),
    };
    match execute(kind, args) {
        Ok(m) => {
            for (name, ok) in &m.verdicts {
                println!("{} {name}", if *ok { "PASS" } else { "FAIL" });
            }
            for f in &m.failures {
                eprintln!("failure in {}: {}", f.entry, f.message);
            }
            if m.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
