use std::path::PathBuf;
use std::process::ExitCode;

use bsde_core::experiments::{run, ExperimentConfig, Pipeline, ProblemConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bsdelab", version, about = "Regularize, solve and audit one-dimensional BSDEs on binomial lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and compare with a closed form when available.
    Solve(Common),
    /// Tabulate the convolved driver over a z-grid and check its bounds.
    Regularize(Common),
    /// Squeeze maximal and minimal solutions of a quadratic problem.
    Uniqueness(Common),
    /// Same squeeze for drivers of linear growth.
    LinearUniqueness(Common),
    /// Distances along the approximating sequence for several lattice sizes.
    Converge(Common),
    /// Check solution and gradient bounds node by node.
    Bounds(Common),
    /// Verify the comparison identity between two problems.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write nodes.csv.
    #[arg(long)]
    dump_nodes: bool,
    /// Driver expression, used when no config is given or to override it.
    #[arg(long)]
    generator: Option<String>,
    /// Terminal expression such as `sin@T`.
    #[arg(long)]
    terminal: Option<String>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Lattice steps.
    #[arg(long)]
    steps: Option<usize>,
}

impl Command {
    fn split(self) -> (Pipeline, Common) {
        match self {
            Command::Solve(c) => (Pipeline::Solve, c),
            Command::Regularize(c) => (Pipeline::Regularize, c),
            Command::Uniqueness(c) => (Pipeline::QuadraticUniqueness, c),
            Command::LinearUniqueness(c) => (Pipeline::LinearUniqueness, c),
            Command::Converge(c) => (Pipeline::Convergence, c),
            Command::Bounds(c) => (Pipeline::BoundsAudit, c),
            Command::Compare(c) => (Pipeline::Comparison, c),
        }
    }
}

fn configure(pipeline: Pipeline, args: &Common) -> bsde_core::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let (Some(g), Some(xi)) = (&args.generator, &args.terminal) else {
                return Err(bsde_core::Error::Config(
                    "either --config or both --generator and --terminal are required".into(),
                ));
            };
            ExperimentConfig::new(pipeline, ProblemConfig::new(g, xi, 1.0))
        }
    };
    cfg.pipeline = pipeline;
    if let Some(g) = &args.generator {
        cfg.problem.generator = g.clone();
    }
    if let Some(xi) = &args.terminal {
        cfg.problem.terminal = xi.clone();
    }
    if let Some(h) = args.horizon {
        cfg.problem.horizon = h;
    }
    if let Some(n) = args.steps {
        cfg.lattice.steps = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let (pipeline, args) = Cli::parse().command.split();
    let result = configure(pipeline, &args).and_then(|cfg| {
        let verdict = run(&cfg, args.dump_nodes)?;
        println!("{verdict}: outputs in {}", cfg.output_dir.display());
        Ok(verdict)
    });
    match result {
        Ok(v) if v.passed() => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
