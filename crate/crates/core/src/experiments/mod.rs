//! Experiment pipelines driven by a TOML configuration.
//!
//! Each pipeline returns a typed report. [`Outputs`] turns reports into
//! `report.csv`, `summary.txt` and optionally `nodes.csv`; wall-clock
//! timings go to a separate `timing.csv` so the other files are identical
//! across runs with the same configuration.

mod audit;
mod config;
mod convergence;
mod output;
mod uniqueness;

pub use audit::{
    default_problems, run_bounds_audit, run_comparison, run_regularize, run_solve, BoundsAuditReport, RegularizeReport,
    RegularizeRow, SolveReport,
};
pub use config::{
    AuditConfig, ExperimentConfig, LatticeConfig, Pipeline, ProblemConfig, RegularizeConfig, ScheduleConfig, Tolerances,
};
pub use convergence::{run_convergence_study, ConvergenceRow, ConvergenceTable};
pub use output::{Outputs, Summary};
pub use uniqueness::{run_linear_uniqueness, run_quadratic_uniqueness, RowStatus, UniquenessReport, UniquenessRow};

use crate::error::Result;
use crate::generators::Generator;
use crate::solver::{solve_backward, solve_backward_tree, BsdeSolution, Lattice, SolverConfig};
use crate::terminal::TerminalCondition;

/// Overall outcome of a pipeline; maps to the CLI exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        })
    }
}

/// A parsed problem: driver, terminal condition and the constants that
/// certify it.
#[derive(Debug, Clone)]
pub struct Problem {
    pub generator: Generator,
    pub terminal: TerminalCondition,
    pub generator_expr: String,
}

impl Problem {
    /// `max(L_gen, L_xi)`, where `L_xi` covers both `sup |xi|` (when
    /// declared) and the derivative bound.
    pub fn combined_constant(&self) -> f64 {
        let xi = self.terminal.sup_bound().unwrap_or(0.0).max(self.terminal.malliavin_bound());
        self.generator.lipschitz().max(xi)
    }

    pub fn horizon(&self) -> f64 {
        self.terminal.horizon()
    }

    /// Recombining lattice for Markovian terminals, full tree otherwise.
    pub fn solve(&self, g: &Generator, steps: usize, cfg: &SolverConfig) -> Result<BsdeSolution> {
        if self.terminal.is_markovian() {
            solve_backward(g, &self.terminal, Lattice::new(self.horizon(), steps)?, cfg)
        } else {
            solve_backward_tree(g, &self.terminal, steps, cfg)
        }
    }
}

/// Dispatches on `cfg.pipeline`; returns the verdict after writing outputs.
pub fn run(cfg: &ExperimentConfig, dump_nodes: bool) -> Result<Verdict> {
    let out = Outputs::create(&cfg.output_dir)?;
    match cfg.pipeline {
        Pipeline::Solve => run_solve(cfg)?.emit(&out, dump_nodes),
        Pipeline::Regularize => run_regularize(cfg)?.emit(&out),
        Pipeline::QuadraticUniqueness => run_quadratic_uniqueness(cfg)?.emit(&out, dump_nodes),
        Pipeline::LinearUniqueness => run_linear_uniqueness(cfg)?.emit(&out, dump_nodes),
        Pipeline::Convergence => run_convergence_study(cfg)?.emit(&out),
        Pipeline::BoundsAudit => run_bounds_audit(cfg)?.emit(&out, dump_nodes),
        Pipeline::Comparison => {
            let (report, verdict) = run_comparison(cfg)?;
            audit::emit_comparison(&report, verdict, cfg, &out)?;
            Ok(verdict)
        }
    }
}
