//! Gaussian expectations and the closed-form `Y_0` values used as oracles.

use crate::error::{Error, Result};
use crate::terminal::TerminalCondition;

const DOUBLING_TOL: f64 = 1e-10;

/// `(psi_n(z), psi_{n-1}(z))` for the normalized Hermite functions
/// `psi_j = e^{-z^2/2} H_j / sqrt(2^j j! sqrt(pi))`, which stay bounded
/// where the polynomials themselves overflow.
fn hermite_functions(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = std::f64::consts::PI.powf(-0.25) * (-0.5 * z * z).exp();
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, p2)
}

/// Gauss-Hermite nodes (descending) and weights for the weight `e^{-x^2}`.
///
/// Non-negative roots of `psi_n` are bracketed by a sign scan on a grid
/// finer than the smallest root spacing, then polished by safeguarded
/// Newton steps.
pub fn gauss_hermite(points: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if points == 0 {
        return Err(Error::invalid("quad_points", "need at least one point"));
    }
    let n = points;
    let nf = n as f64;
    let fail = || Error::Quadrature {
        points,
        relative_change: f64::NAN,
    };
    let f = |z: f64| {
        let (p, q) = hermite_functions(n, z);
        (p, (2.0 * nf).sqrt() * q - z * p)
    };
    let mut roots = Vec::with_capacity(n.div_ceil(2));
    let h = 0.1 * std::f64::consts::PI / (2.0 * nf + 1.0).sqrt();
    let upper = (2.0 * nf + 1.0).sqrt() + 1.0;
    let mut a = 0.0;
    if n % 2 == 1 {
        roots.push(0.0);
        a = 0.5 * h;
    }
    let mut fa = f(a).0;
    while a < upper {
        let b = a + h;
        let fb = f(b).0;
        if fa == 0.0 || fa.signum() != fb.signum() {
            let (mut lo, mut hi) = (a, b);
            let mut z = 0.5 * (lo + hi);
            let mut done = false;
            for _ in 0..200 {
                let (v, dv) = f(z);
                if v == 0.0 {
                    done = true;
                    break;
                }
                if v.signum() == f(lo).0.signum() {
                    lo = z;
                } else {
                    hi = z;
                }
                let mut next = z - v / dv;
                if !(next > lo && next < hi) {
                    next = 0.5 * (lo + hi);
                }
                let step = (next - z).abs();
                z = next;
                if step <= 3e-14 * z.abs().max(1.0) {
                    done = true;
                    break;
                }
            }
            if !done {
                return Err(fail());
            }
            roots.push(z);
        }
        a = b;
        fa = fb;
    }
    if roots.len() != n.div_ceil(2) {
        return Err(fail());
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for (i, &z) in roots.iter().rev().enumerate() {
        let (_, q) = hermite_functions(n, z);
        // 2 / (2n p_{n-1}^2) with p_{n-1} = psi_{n-1} e^{z^2/2}
        let weight = (-z * z).exp() / (nf * q * q);
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = weight;
        w[n - 1 - i] = weight;
    }
    if x.windows(2).any(|p| !(p[0] > p[1])) || w.iter().any(|v| !v.is_finite()) {
        return Err(fail());
    }
    Ok((x, w))
}

fn expectation_with(points: usize, g: &impl Fn(f64) -> f64) -> Result<f64> {
    let (x, w) = gauss_hermite(points)?;
    let norm = std::f64::consts::PI.sqrt().recip();
    let sqrt2 = std::f64::consts::SQRT_2;
    Ok(x.iter().zip(&w).map(|(&xi, &wi)| wi * g(sqrt2 * xi)).sum::<f64>() * norm)
}

/// `E[g(G)]` for standard normal `G`, using `points` nodes and checked
/// against `2 * points` nodes. Returns the finer value.
pub fn gaussian_expectation(g: impl Fn(f64) -> f64, points: usize) -> Result<f64> {
    let coarse = expectation_with(points, &g)?;
    let fine = expectation_with(2 * points, &g)?;
    let change = (fine - coarse).abs() / fine.abs().max(1.0);
    if !(change <= DOUBLING_TOL) {
        return Err(Error::Quadrature {
            points,
            relative_change: change,
        });
    }
    Ok(fine)
}

fn markovian(tc: &TerminalCondition) -> Result<()> {
    if !tc.is_markovian() {
        return Err(Error::Precondition(format!(
            "closed forms need a terminal condition of W_T alone, got `{tc}`"
        )));
    }
    Ok(())
}

/// `Y_0` for the driver `a y + b z + c`:
/// `E[G_T xi] + c int_0^T E[G_s] ds` with `G_t = exp((a - b^2/2) t + b W_t)`,
/// so `E[G_s] = e^{a s}`.
pub fn solve_linear_closed_form(a: f64, b: f64, c: f64, tc: &TerminalCondition, quad_points: usize) -> Result<f64> {
    markovian(tc)?;
    let t = tc.horizon();
    let sq = t.sqrt();
    let weighted = gaussian_expectation(
        |g| {
            let w = sq * g;
            ((a - 0.5 * b * b) * t + b * w).exp() * tc.value_scalar(w)
        },
        quad_points,
    )?;
    let drift = if a.abs() < 1e-12 { t * (1.0 + 0.5 * a * t) } else { (a * t).exp_m1() / a };
    Ok(weighted + c * drift)
}

/// `Y_0 = (1/gamma) log E[exp(gamma xi)]` for the driver `(gamma/2) z^2`.
pub fn cole_hopf_y0(gamma: f64, tc: &TerminalCondition, quad_points: usize) -> Result<f64> {
    markovian(tc)?;
    if !(gamma.is_finite() && gamma != 0.0) {
        return Err(Error::invalid("gamma", format!("must be finite and nonzero, got {gamma}")));
    }
    let sq = tc.horizon().sqrt();
    let m = gaussian_expectation(|g| (gamma * tc.value_scalar(sq * g)).exp(), quad_points)?;
    Ok(m.ln() / gamma)
}
