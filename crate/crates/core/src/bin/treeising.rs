use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};

use treeising::experiments::{self, BetaGrid, ExperimentConfig, ExperimentId};

#[derive(Parser)]
#[command(
    name = "treeising",
    version,
    about = "Seeded desk-scale experiments for Ising measures on locally tree-like graphs"
)]
enum Cli {
    /// Run one experiment and write results.csv, meta.json and plotdata/
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// theorem-free | theorem-plus | lemma-recursion | capacity | expander | u-curve
    experiment: String,
    /// Offspring law: P3, P34, inline JSON, or a path to a law JSON file
    #[arg(long)]
    law: Option<String>,
    /// Graph file (header `n m [typed]`, one edge per line) instead of sampling
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Inverse temperature grid a:b:step, or a single value
    #[arg(long, default_value = "1.0")]
    beta: String,
    /// Smaller inverse temperature for the dominating warm start
    #[arg(long)]
    beta0: Option<f64>,
    /// Uniform external field
    #[arg(long = "B", default_value_t = 0.0)]
    b: f64,
    /// Graph size for sampled ensembles
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Depth: ball radius, tree truncation, or generation cap, by experiment
    #[arg(long)]
    depth: Option<usize>,
    /// Monte Carlo budget: sweeps, trees, or graphs, by experiment
    #[arg(long)]
    samples: Option<usize>,
    /// Particle count for population dynamics
    #[arg(long, default_value_t = 100_000)]
    pool: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Exit nonzero if any acceptance threshold is breached
    #[arg(long, default_value_t = false)]
    assert: bool,
}

fn default_depth(id: ExperimentId) -> usize {
    match id {
        ExperimentId::TheoremFree | ExperimentId::TheoremPlus => 1,
        ExperimentId::LemmaRecursion => 200,
        ExperimentId::Capacity => 6,
        ExperimentId::Expander => 1,
        ExperimentId::UCurve => 10,
    }
}

fn default_samples(id: ExperimentId) -> usize {
    match id {
        ExperimentId::TheoremFree | ExperimentId::TheoremPlus => 20_000,
        ExperimentId::LemmaRecursion => 0,
        ExperimentId::Capacity => 50,
        ExperimentId::Expander => 40,
        ExperimentId::UCurve => 200,
    }
}

fn main() -> ExitCode {
    experiments::init_threads();
    let Cli::Run(args) = Cli::parse();

    let experiment: ExperimentId = match args.experiment.parse() {
        Ok(id) => id,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let beta: BetaGrid = match args.beta.parse() {
        Ok(g) => g,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let config = ExperimentConfig {
        experiment,
        law: args.law,
        graph: args.graph,
        beta,
        beta0: args.beta0,
        b_field: args.b,
        n: args.n,
        depth: args.depth.unwrap_or_else(|| default_depth(experiment)),
        samples: args.samples.unwrap_or_else(|| default_samples(experiment)),
        pool: args.pool,
        seed: args.seed,
        out: args.out,
        assert_thresholds: args.assert,
    };

    match experiments::run(&config) {
        Ok(outcome) => {
            println!(
                "{}: {} rows -> {} ({:.1}s)",
                experiment.name(),
                outcome.rows,
                outcome.results_csv.display(),
                outcome.runtime_secs
            );
            for b in &outcome.breaches {
                eprintln!("threshold breach: {b}");
            }
            if config.assert_thresholds && !outcome.breaches.is_empty() {
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
