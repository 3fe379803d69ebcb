//! Sampled checks of the properties of convolved generators: growth bound,
//! monotonicity in `n`, pointwise convergence, joint Lipschitz estimate,
//! ordering around `f`, and the fixed-point property of the linear penalty.

use super::{convolve, Direction, OptimizerConfig, Penalty, PenaltySpec};
use crate::error::{Error, Result};
use crate::generators::{excess, Domain, Generator, Property, SamplePlan, ValidationReport, ViolationTracker, Witness};

/// Worst violation of the convolved growth bound, `L(1+|y|+2|z|^2)` for the
/// quadratic penalty and `L(1+|y|+|z|)` for the linear one, inflated by
/// `opt.tol`.
pub fn verify_lemma_bounds(
    g: &Generator,
    spec: PenaltySpec,
    opt: OptimizerConfig,
    domain: &Domain,
    samples: usize,
    seed: u64,
) -> Result<ValidationReport> {
    let fnn = convolve(g, spec, opt)?;
    let plan = SamplePlan::new(*domain, samples, seed)?;
    let mut tracker = ViolationTracker::new(Property::RegularizedGrowth);
    for (t, y, z) in plan.points() {
        let v = fnn.eval(t, y, z);
        let bound = fnn.growth_bound(y, z) + opt.tol_at(v);
        tracker.record(excess(v.abs(), bound, 0.0), || Witness::point(t, y, z).with_n(spec.n));
    }
    Ok(tracker.finish())
}

fn check_ascending(n_list: &[f64]) -> Result<()> {
    if n_list.is_empty() {
        return Err(Error::Precondition("index list is empty".into()));
    }
    if n_list.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Precondition(format!("index list must be strictly ascending: {n_list:?}")));
    }
    Ok(())
}

/// Worst monotonicity defect across consecutive indices beyond `2 opt.tol`:
/// sup-convolutions must not increase with `n`, inf-convolutions must not
/// decrease.
pub fn verify_monotone_in_n(
    g: &Generator,
    direction: Direction,
    penalty: Penalty,
    n_list: &[f64],
    opt: OptimizerConfig,
    points: &[(f64, f64, f64)],
) -> Result<ValidationReport> {
    check_ascending(n_list)?;
    let family = n_list
        .iter()
        .map(|&n| convolve(g, PenaltySpec::new(direction, penalty, n), opt))
        .collect::<Result<Vec<_>>>()?;
    let mut tracker = ViolationTracker::new(Property::MonotoneInN);
    for &(t, y, z) in points {
        let values: Vec<f64> = family.iter().map(|f| f.eval(t, y, z)).collect();
        for (i, w) in values.windows(2).enumerate() {
            let (prev, next) = (w[0], w[1]);
            let (larger, smaller) = match direction {
                Direction::Sup => (next, prev),
                Direction::Inf => (prev, next),
            };
            let slack = 2.0 * opt.tol_at(prev.abs().max(next.abs()));
            tracker.record(excess(larger, smaller + slack, 0.0), || {
                Witness::point(t, y, z).with_n(n_list[i + 1])
            });
        }
    }
    Ok(tracker.finish())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// `(n, z_n, |f_n(t, y, z_n) - f(t, y, z)|)` in schedule order.
    pub gaps: Vec<(f64, f64, f64)>,
    /// Violation is `(final gap - tolerance)^+`.
    pub report: ValidationReport,
}

impl ConvergenceReport {
    pub fn final_gap(&self) -> f64 {
        self.gaps.last().map_or(f64::NAN, |g| g.2)
    }
}

/// Tabulates `|f_n(t, y, z_n) - f(t, y, z)|` along `n_list` with
/// `z_n = z_of_n(n)`; fails when the last gap exceeds `tail_tol`.
#[allow(clippy::too_many_arguments)]
pub fn verify_pointwise_convergence(
    g: &Generator,
    direction: Direction,
    penalty: Penalty,
    n_list: &[f64],
    opt: OptimizerConfig,
    (t, y, z): (f64, f64, f64),
    z_of_n: impl Fn(f64) -> f64,
    tail_tol: f64,
) -> Result<ConvergenceReport> {
    check_ascending(n_list)?;
    let target = g.eval(t, y, z);
    let mut gaps = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let fnn = convolve(g, PenaltySpec::new(direction, penalty, n), opt)?;
        let zn = z_of_n(n);
        gaps.push((n, zn, (fnn.eval(t, y, zn) - target).abs()));
    }
    let mut tracker = ViolationTracker::new(Property::PointwiseConvergence);
    let &(n_last, zn_last, gap_last) = gaps.last().expect("non-empty schedule");
    tracker.record(gap_last - tail_tol, || Witness::point(t, y, zn_last).with_n(n_last));
    Ok(ConvergenceReport {
        gaps,
        report: tracker.finish(),
    })
}

/// Worst violation of the joint estimate
/// `|f_n(y1,z1) - f_n(y2,z2)| <= L|y1-y2| + n(1+|z1|+|z2|)|z1-z2|` (quadratic
/// penalty) or `<= L|y1-y2| + n|z1-z2|` (linear penalty), inflated by
/// `2 opt.tol`.
///
/// For the quadratic penalty only `n >= 2L + 1` is accepted.
pub fn verify_local_lipschitz(
    g: &Generator,
    spec: PenaltySpec,
    opt: OptimizerConfig,
    domain: &Domain,
    pairs: usize,
    seed: u64,
) -> Result<ValidationReport> {
    let l = g.lipschitz();
    if spec.penalty == Penalty::QuadraticPenalty && spec.n < 2.0 * l + 1.0 {
        return Err(Error::Precondition(format!(
            "the quadratic-penalty Lipschitz estimate is only tested for n >= 2L + 1 = {}, got {}",
            2.0 * l + 1.0,
            spec.n
        )));
    }
    let fnn = convolve(g, spec, opt)?;
    let plan = SamplePlan::new(*domain, pairs, seed)?;
    let y_partners = plan.pairs(domain.y, |p| p.1);
    let z_partners = SamplePlan::new(*domain, pairs, seed.wrapping_add(1))?.pairs(domain.z, |p| p.2);
    let mut tracker = ViolationTracker::new(Property::RegularizedLipschitz);
    for (((t, y1, z1), y2), (_, z2_raw)) in y_partners.into_iter().zip(z_partners) {
        // shift the z-partner so that it is anchored at z1
        let z2 = (z1 + (z2_raw - z1).clamp(-1.0, 1.0)).clamp(domain.z.0, domain.z.1);
        let a = fnn.eval(t, y1, z1);
        let b = fnn.eval(t, y2, z2);
        let dz = (z1 - z2).abs();
        let z_term = match spec.penalty {
            Penalty::QuadraticPenalty => spec.n * (1.0 + z1.abs() + z2.abs()) * dz,
            Penalty::LinearPenalty => spec.n * dz,
        };
        let bound = l * (y1 - y2).abs() + z_term + 2.0 * opt.tol_at(a.abs().max(b.abs()));
        tracker.record(excess((a - b).abs(), bound, a.abs().max(b.abs())), || {
            Witness::pair(t, y1, z1, y2, z2).with_n(spec.n)
        });
    }
    Ok(tracker.finish())
}

/// Worst violation of `sup-convolution >= f >= inf-convolution` (same
/// penalty and index), allowing `2 opt.tol`.
pub fn verify_ordering(
    g: &Generator,
    penalty: Penalty,
    n: f64,
    opt: OptimizerConfig,
    domain: &Domain,
    samples: usize,
    seed: u64,
) -> Result<ValidationReport> {
    let sup = convolve(g, PenaltySpec::new(Direction::Sup, penalty, n), opt)?;
    let inf = convolve(g, PenaltySpec::new(Direction::Inf, penalty, n), opt)?;
    let mut tracker = ViolationTracker::new(Property::Ordering);
    for (t, y, z) in SamplePlan::new(*domain, samples, seed)?.points() {
        let f = g.eval(t, y, z);
        let (hi, lo) = (sup.eval(t, y, z), inf.eval(t, y, z));
        let slack = 2.0 * opt.tol_at(f);
        let worst = excess(f, hi + slack, 0.0).max(excess(lo, f + slack, 0.0));
        tracker.record(worst, || Witness::point(t, y, z).with_n(n));
    }
    Ok(tracker.finish())
}

/// Worst `|conv(f) - f| - opt.tol` over both linear-penalty directions. For
/// a driver that is `L'`-Lipschitz in `z` with `L' <= n` both convolutions
/// reproduce `f`.
pub fn verify_fixed_point(
    g: &Generator,
    n: f64,
    opt: OptimizerConfig,
    domain: &Domain,
    samples: usize,
    seed: u64,
) -> Result<ValidationReport> {
    let family = [Direction::Sup, Direction::Inf]
        .into_iter()
        .map(|d| convolve(g, PenaltySpec::new(d, Penalty::LinearPenalty, n), opt))
        .collect::<Result<Vec<_>>>()?;
    let mut tracker = ViolationTracker::new(Property::FixedPoint);
    for (t, y, z) in SamplePlan::new(*domain, samples, seed)?.points() {
        let f = g.eval(t, y, z);
        for conv in &family {
            let v = conv.eval(t, y, z);
            tracker.record(excess((v - f).abs(), opt.tol_at(f), 0.0), || Witness::point(t, y, z).with_n(n));
        }
    }
    Ok(tracker.finish())
}
