use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mimax_cli::{run_experiment, ExperimentKind, RunOptions};

#[derive(Parser)]
#[command(name = "mimax", version, about = "Mimetic Maxwell cavity with impedance feedback")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Structural checks: exactness, summation by parts, dissipativity, Helmholtz.
    Verify(Common),
    /// Eigenvalues of the generator on the dynamic space.
    Spectrum(Common),
    /// Smallest singular value of iω − A over a frequency grid.
    Resolvent(Common),
    /// One trajectory with energy and constraint monitoring.
    Simulate(Common),
    /// Seeded ensemble of trajectories and their decay envelope.
    DecayStudy(Common),
    /// Split fields into equilibrium and dynamic parts.
    Decompose(Common),
    /// Harmonic fields of the boundary partition.
    Cohomology(Common),
    /// Unique-continuation singular value test.
    Ucp(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides `[experiment] seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.verb {
        Verb::Verify(a) => (ExperimentKind::Verify, a),
        Verb::Spectrum(a) => (ExperimentKind::Spectrum, a),
        Verb::Resolvent(a) => (ExperimentKind::Resolvent, a),
        Verb::Simulate(a) => (ExperimentKind::Simulate, a),
        Verb::DecayStudy(a) => (ExperimentKind::DecayStudy, a),
        Verb::Decompose(a) => (ExperimentKind::Decompose, a),
        Verb::Cohomology(a) => (ExperimentKind::Cohomology, a),
        Verb::Ucp(a) => (ExperimentKind::Ucp, a),
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("mimax: {e}");
            return ExitCode::from(2);
        }
    }
    let opts = RunOptions {
        output: args.output,
        seed: args.seed,
        threads: args.threads,
    };
    let outcome = run_experiment(kind, &args.scenario, &opts);
    match &outcome.error {
        None => {
            println!("{} ok: {} artifacts in {}", kind.name(), outcome.manifest.artifacts.len(), outcome.dir.display());
            ExitCode::SUCCESS
        }
        Some(e) => {
            eprintln!("mimax {}: {e}", kind.name());
            ExitCode::from(outcome.exit_code() as u8)
        }
    }
}
