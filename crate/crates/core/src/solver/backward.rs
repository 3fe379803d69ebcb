use rayon::prelude::*;

use super::{BsdeSolution, Lattice, Layout, SolverConfig};
use crate::error::{Error, Result};
use crate::generators::Generator;
use crate::terminal::TerminalCondition;

/// Largest step count accepted by [`solve_backward_tree`] (`2^N` leaves).
pub const MAX_TREE_STEPS: usize = 18;

/// Solves `Y = m + dt f(t, Y, z)` by fixed-point iteration.
fn implicit_step(g: &Generator, t: f64, m: f64, z: f64, dt: f64, cfg: &SolverConfig, step: usize, state: usize) -> Result<f64> {
    let mut y = m;
    let mut change = f64::INFINITY;
    for _ in 0..cfg.fp_max_iter {
        let f = g.eval(t, y, z);
        if !f.is_finite() {
            return Err(Error::NonFinite { step, state, y, z });
        }
        let next = m + dt * f;
        change = (next - y).abs();
        y = next;
        if change <= cfg.fp_tol * y.abs().max(1.0) {
            return Ok(y);
        }
    }
    Err(Error::FixedPointNotConverged {
        step,
        state,
        iterations: cfg.fp_max_iter,
        last_change: change,
    })
}

fn induct(g: &Generator, lat: Lattice, layout: Layout, terminal: Vec<f64>, cfg: &SolverConfig) -> Result<BsdeSolution> {
    cfg.validate()?;
    lat.check_contraction(g.lipschitz())?;
    let n = lat.steps();
    let dt = lat.dt();
    let half_inv = 0.5 / lat.sqrt_dt();

    let mut y = vec![Vec::new(); n + 1];
    let mut z = vec![Vec::new(); n];
    y[n] = terminal;
    for i in (0..n).rev() {
        let t = lat.time(i);
        let next = &y[i + 1];
        let layer: Vec<(f64, f64)> = (0..layout.width(i))
            .into_par_iter()
            .map(|k| {
                let (d, u) = layout.children(k);
                let zk = (next[u] - next[d]) * half_inv;
                let m = 0.5 * (next[u] + next[d]);
                implicit_step(g, t, m, zk, dt, cfg, i, k).map(|yk| (yk, zk))
            })
            .collect::<Result<_>>()?;
        let (yi, zi) = layer.into_iter().unzip();
        y[i] = yi;
        z[i] = zi;
    }
    Ok(BsdeSolution::assemble(lat, layout, y, z))
}

/// Backward induction on the recombining lattice for a terminal condition
/// that depends on `W_T` only.
pub fn solve_backward(g: &Generator, tc: &TerminalCondition, lat: Lattice, cfg: &SolverConfig) -> Result<BsdeSolution> {
    if !tc.is_markovian() {
        return Err(Error::Precondition(format!(
            "terminal condition `{tc}` is path-dependent; the recombining lattice needs a single observation at T (use the tree solver)"
        )));
    }
    if (tc.horizon() - lat.horizon()).abs() > 1e-12 * lat.horizon() {
        return Err(Error::Precondition(format!(
            "terminal horizon {} differs from lattice horizon {}",
            tc.horizon(),
            lat.horizon()
        )));
    }
    let n = lat.steps();
    let sq = lat.sqrt_dt();
    let terminal = (0..=n)
        .map(|k| tc.value_scalar(Layout::Recombining.state(n, k) as f64 * sq))
        .collect();
    induct(g, lat, Layout::Recombining, terminal, cfg)
}

/// Backward induction over all `2^N` paths. Observation times must be
/// multiples of `dt`.
pub fn solve_backward_tree(g: &Generator, tc: &TerminalCondition, steps: usize, cfg: &SolverConfig) -> Result<BsdeSolution> {
    if steps > MAX_TREE_STEPS {
        return Err(Error::Precondition(format!(
            "tree solver is limited to N <= {MAX_TREE_STEPS} steps (2^N paths), got N = {steps}"
        )));
    }
    if tc.dimension() > crate::terminal::MAX_GRID_DIMENSION {
        return Err(Error::Precondition(format!(
            "tree solver supports at most {} observation times, got {}",
            crate::terminal::MAX_GRID_DIMENSION,
            tc.dimension()
        )));
    }
    let lat = Lattice::new(tc.horizon(), steps)?;
    let obs: Vec<usize> = tc.obs_times().iter().map(|&t| lat.step_of(t)).collect::<Result<_>>()?;
    let sq = lat.sqrt_dt();
    let mut w = vec![0.0; obs.len()];
    let terminal = (0..1usize << steps)
        .map(|leaf| {
            for (wi, &s) in w.iter_mut().zip(&obs) {
                let prefix = leaf >> (steps - s);
                *wi = Layout::Tree.state(s, prefix) as f64 * sq;
            }
            tc.value_unchecked(&w)
        })
        .collect();
    induct(g, lat, Layout::Tree, terminal, cfg)
}
