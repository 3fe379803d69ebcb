//! Backward induction on binomial random walks.
//!
//! Brownian increments are `±sqrt(dt)` with probability 1/2. The recombining
//! lattice serves Markovian terminal conditions; the full binary tree serves
//! path-dependent ones. Both share [`BsdeSolution`] through a [`Layout`].

mod backward;
mod comparison;
mod diagnostics;
mod export;
mod oracle;

pub use backward::{solve_backward, solve_backward_tree, MAX_TREE_STEPS};
pub use comparison::{verify_comparison, ComparisonReport};
pub use diagnostics::{bmo_estimate, bound_offenders, check_solution_bounds, y_bound, z_bound, BoundOffender};
pub use export::{write_nodes_csv, NodeRow};
pub use oracle::{cole_hopf_y0, gauss_hermite, gaussian_expectation, solve_linear_closed_form};

use crate::error::{Error, Result};

/// Fixed-point settings for the implicit step.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub fp_tol: f64,
    pub fp_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            fp_tol: 1e-12,
            fp_max_iter: 200,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fp_tol.is_finite() && self.fp_tol > 0.0) {
            return Err(Error::invalid("fp_tol", format!("must be finite and > 0, got {}", self.fp_tol)));
        }
        if self.fp_max_iter == 0 {
            return Err(Error::invalid("fp_max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

/// Uniform time grid `t_i = i T / N`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Lattice {
    horizon: f64,
    steps: usize,
}

impl Lattice {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid("T", format!("must be finite and > 0, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::invalid("N", "need at least one step"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn sqrt_dt(&self) -> f64 {
        self.dt().sqrt()
    }

    pub fn time(&self, step: usize) -> f64 {
        self.horizon * step as f64 / self.steps as f64
    }

    /// Rejects `L dt >= 1`, where the implicit step stops being a contraction.
    pub fn check_contraction(&self, lipschitz: f64) -> Result<()> {
        let factor = lipschitz * self.dt();
        if factor >= 1.0 {
            return Err(Error::Precondition(format!(
                "L dt = {lipschitz} * {} = {factor} must be < 1; increase N",
                self.dt()
            )));
        }
        Ok(())
    }

    /// Step index of an observation time, which must sit on the grid.
    pub fn step_of(&self, t: f64) -> Result<usize> {
        let x = t / self.dt();
        let s = x.round();
        if (x - s).abs() > 1e-9 * x.max(1.0) || s < 0.0 || s as usize > self.steps {
            return Err(Error::Precondition(format!(
                "observation time {t} is not a multiple of dt = {} (N = {})",
                self.dt(),
                self.steps
            )));
        }
        Ok(s as usize)
    }
}

/// How nodes at step `i` are indexed and linked to step `i + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Layout {
    /// `i + 1` nodes, index `k` has `W = (2k - i) sqrt(dt)`; children `k`, `k + 1`.
    Recombining,
    /// `2^i` nodes, bit `r` of `k` (from the top) is the `r`-th move; children `2k`, `2k + 1`.
    Tree,
}

impl Layout {
    #[inline]
    pub fn width(self, step: usize) -> usize {
        match self {
            Layout::Recombining => step + 1,
            Layout::Tree => 1 << step,
        }
    }

    /// `(down, up)` successors.
    #[inline]
    pub fn children(self, k: usize) -> (usize, usize) {
        match self {
            Layout::Recombining => (k, k + 1),
            Layout::Tree => (2 * k, 2 * k + 1),
        }
    }

    /// Signed number of net up-moves: `W = state * sqrt(dt)`.
    #[inline]
    pub fn state(self, step: usize, k: usize) -> i64 {
        let ups = match self {
            Layout::Recombining => k as i64,
            Layout::Tree => k.count_ones() as i64,
        };
        2 * ups - step as i64
    }
}

/// Node values of `(Y, Z)`. `y[i]` has [`Layout::width`]`(i)` entries for
/// `i = 0..=N`; `z[i]` exists for `i < N`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BsdeSolution {
    pub lattice: Lattice,
    pub layout: Layout,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub y0: f64,
    pub y_sup: f64,
    pub z_sup: f64,
    pub bmo_estimate: f64,
}

impl BsdeSolution {
    pub(crate) fn assemble(lattice: Lattice, layout: Layout, y: Vec<Vec<f64>>, z: Vec<Vec<f64>>) -> Self {
        let sup = |v: &Vec<Vec<f64>>| v.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()));
        let mut sol = Self {
            lattice,
            layout,
            y0: y[0][0],
            y_sup: sup(&y),
            z_sup: sup(&z),
            y,
            z,
            bmo_estimate: 0.0,
        };
        sol.bmo_estimate = bmo_estimate(&sol);
        sol
    }

    /// Brownian value at a node.
    pub fn w(&self, step: usize, k: usize) -> f64 {
        self.layout.state(step, k) as f64 * self.lattice.sqrt_dt()
    }

    /// Largest `|Z|` over steps `>= step`.
    pub fn z_sup_from(&self, step: usize) -> f64 {
        self.z[step.min(self.z.len())..]
            .iter()
            .flatten()
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// `Z_i` and the conditional mean `E_i[Y_{i+1}]` at a node.
    pub fn one_step(&self, step: usize, k: usize) -> (f64, f64) {
        let (d, u) = self.layout.children(k);
        let next = &self.y[step + 1];
        ((next[u] - next[d]) * (0.5 / self.lattice.sqrt_dt()), 0.5 * (next[u] + next[d]))
    }

    pub fn node_count(&self) -> usize {
        self.y.iter().map(Vec::len).sum()
    }
}
