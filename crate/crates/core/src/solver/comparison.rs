use super::{solve_backward, Lattice, SolverConfig};
use crate::error::Result;
use crate::generators::Generator;
use crate::terminal::TerminalCondition;

/// Differences below this (relative to `max(1, |u|, |v|)`) count as zero
/// when forming difference quotients.
const ZERO_DIFFERENCE: f64 = 1e-9;

/// Outcome of the linearized comparison check between two problems.
/// Hypothesis failures are reported here rather than raised.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ComparisonReport {
    /// Worst node value of `|dY_i - V_i|`, where `V_i` is the adjoint-weighted
    /// conditional expectation of the terminal and driver differences
    /// (adjoint normalized to 1 at the node).
    pub max_residual: f64,
    /// Smallest adjoint value reachable along any path.
    pub gamma_min: f64,
    pub delta_y_min: f64,
    pub delta_y0: f64,
    /// `min (xi - xi')` over terminal nodes.
    pub terminal_gap_min: f64,
    /// `min (f - f')` along the primed solution.
    pub driver_gap_min: f64,
    pub a_sup: f64,
    pub b_sup: f64,
    /// `b_sup sqrt(dt) + a_sup dt < 1`, which forces every adjoint factor positive.
    pub positivity_condition: bool,
    pub steps: usize,
}

impl ComparisonReport {
    pub fn hypotheses_hold(&self) -> bool {
        self.terminal_gap_min >= 0.0 && self.driver_gap_min >= 0.0
    }
}

#[inline]
fn quotient(num: f64, u: f64, v: f64) -> f64 {
    let d = u - v;
    if d.abs() <= ZERO_DIFFERENCE * u.abs().max(v.abs()).max(1.0) {
        0.0
    } else {
        num / d
    }
}

/// Solves both problems on `lat` and checks the discrete form of
/// `Gamma_i dY_i = E_i[Gamma_N dxi + sum_{r >= i} Gamma_r df_r dt]` with
/// `Gamma_{r+1} = Gamma_r (1 + a_r dt + b_r dW_r)`.
pub fn verify_comparison(
    g: &Generator,
    g_prime: &Generator,
    tc: &TerminalCondition,
    tc_prime: &TerminalCondition,
    lat: Lattice,
    cfg: &SolverConfig,
) -> Result<ComparisonReport> {
    let s = solve_backward(g, tc, lat, cfg)?;
    let p = solve_backward(g_prime, tc_prime, lat, cfg)?;
    let n = lat.steps();
    let dt = lat.dt();
    let sq = lat.sqrt_dt();

    let mut a = vec![Vec::new(); n];
    let mut b = vec![Vec::new(); n];
    let mut df = vec![Vec::new(); n];
    for i in 0..n {
        let t = lat.time(i);
        for k in 0..=i {
            let (y, yp) = (s.y[i][k], p.y[i][k]);
            let (z, zp) = (s.z[i][k], p.z[i][k]);
            let f_yz = g.eval(t, y, z);
            let f_ypz = g.eval(t, yp, z);
            let f_ypzp = g.eval(t, yp, zp);
            a[i].push(quotient(f_yz - f_ypz, y, yp));
            b[i].push(quotient(f_ypz - f_ypzp, z, zp));
            df[i].push(f_ypzp - g_prime.eval(t, yp, zp));
        }
    }

    let terminal_gap_min = s.y[n].iter().zip(&p.y[n]).map(|(x, xp)| x - xp).fold(f64::INFINITY, f64::min);
    let driver_gap_min = df.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let a_sup = a.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()));
    let b_sup = b.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()));

    // backward aggregation of V, starting from the terminal difference
    let mut v: Vec<f64> = s.y[n].iter().zip(&p.y[n]).map(|(x, xp)| x - xp).collect();
    let mut max_residual = 0.0_f64;
    let mut delta_y_min = v.iter().copied().fold(f64::INFINITY, f64::min);
    for i in (0..n).rev() {
        let cur: Vec<f64> = (0..=i)
            .map(|k| {
                let (d, u) = (v[k], v[k + 1]);
                df[i][k] * dt + (1.0 + a[i][k] * dt) * 0.5 * (u + d) + b[i][k] * sq * 0.5 * (u - d)
            })
            .collect();
        for k in 0..=i {
            let dy = s.y[i][k] - p.y[i][k];
            delta_y_min = delta_y_min.min(dy);
            let r = (dy - cur[k]).abs();
            max_residual = if r.is_nan() { f64::INFINITY } else { max_residual.max(r) };
        }
        v = cur;
    }

    // forward range of the adjoint over all paths reaching each node
    let mut lo = vec![1.0];
    let mut hi = vec![1.0];
    let mut gamma_min = 1.0_f64;
    for i in 0..n {
        let mut nlo = vec![f64::INFINITY; i + 2];
        let mut nhi = vec![f64::NEG_INFINITY; i + 2];
        for k in 0..=i {
            let base = 1.0 + a[i][k] * dt;
            for (child, factor) in [(k, base - b[i][k] * sq), (k + 1, base + b[i][k] * sq)] {
                let (x1, x2) = (lo[k] * factor, hi[k] * factor);
                nlo[child] = nlo[child].min(x1.min(x2));
                nhi[child] = nhi[child].max(x1.max(x2));
            }
        }
        gamma_min = nlo.iter().copied().fold(gamma_min, f64::min);
        lo = nlo;
        hi = nhi;
    }

    Ok(ComparisonReport {
        max_residual,
        gamma_min,
        delta_y_min,
        delta_y0: s.y0 - p.y0,
        terminal_gap_min,
        driver_gap_min,
        a_sup,
        b_sup,
        positivity_condition: b_sup * sq + a_sup * dt < 1.0,
        steps: n,
    })
}
