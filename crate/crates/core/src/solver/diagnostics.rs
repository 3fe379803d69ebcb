use super::BsdeSolution;
use crate::generators::{Property, ValidationReport, ViolationTracker, Witness};

/// `(L + 1) e^{L(T - t)} - 1`
pub fn y_bound(lipschitz: f64, remaining: f64) -> f64 {
    (lipschitz + 1.0) * (lipschitz * remaining).exp() - 1.0
}

/// `L e^{L(T - t)}`
pub fn z_bound(lipschitz: f64, remaining: f64) -> f64 {
    lipschitz * (lipschitz * remaining).exp()
}

/// Discretization allowance `5 L e^{LT} sqrt(dt)`.
fn slack(sol: &BsdeSolution, lipschitz: f64) -> f64 {
    5.0 * lipschitz * (lipschitz * sol.lattice.horizon()).exp() * sol.lattice.sqrt_dt()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BoundOffender {
    pub step: usize,
    pub state_index: usize,
    pub t: f64,
    pub w: f64,
    /// `"Y"` or `"Z"`
    pub quantity: &'static str,
    pub value: f64,
    /// Bound including slack.
    pub bound: f64,
    /// `|value| - bound`; positive means violated.
    pub excess: f64,
}

fn for_each_check(sol: &BsdeSolution, lipschitz: f64, mut visit: impl FnMut(BoundOffender)) {
    let lat = sol.lattice;
    let s = slack(sol, lipschitz);
    for (i, layer) in sol.y.iter().enumerate() {
        let t = lat.time(i);
        let rem = lat.horizon() - t;
        let yb = y_bound(lipschitz, rem) + s;
        let zb = z_bound(lipschitz, rem) + s;
        for (k, &y) in layer.iter().enumerate() {
            let w = sol.w(i, k);
            let node = |quantity, value: f64, bound: f64| BoundOffender {
                step: i,
                state_index: k,
                t,
                w,
                quantity,
                value,
                bound,
                excess: if value.is_nan() { f64::INFINITY } else { value.abs() - bound },
            };
            visit(node("Y", y, yb));
            if let Some(&z) = sol.z.get(i).and_then(|zi| zi.get(k)) {
                visit(node("Z", z, zb));
            }
        }
    }
}

/// Worst violation of `|Y| <= (L+1)e^{L(T-t)} - 1` and `|Z| <= L e^{L(T-t)}`
/// over all nodes, each with slack `5 L e^{LT} sqrt(dt)`.
pub fn check_solution_bounds(sol: &BsdeSolution, lipschitz: f64) -> ValidationReport {
    let mut tracker = ViolationTracker::new(Property::SolutionBounds);
    for_each_check(sol, lipschitz, |o| {
        let z = if o.quantity == "Z" { o.value } else { sol.z.get(o.step).map_or(0.0, |zi| zi[o.state_index]) };
        let y = sol.y[o.step][o.state_index];
        tracker.record(o.excess, || Witness::point(o.t, y, z));
    });
    tracker.finish()
}

/// The `count` nodes with the largest excess (violated or closest to it),
/// ordered by decreasing excess, ties by position.
pub fn bound_offenders(sol: &BsdeSolution, lipschitz: f64, count: usize) -> Vec<BoundOffender> {
    let mut all = Vec::with_capacity(2 * sol.node_count());
    for_each_check(sol, lipschitz, |o| all.push(o));
    all.sort_by(|a, b| {
        b.excess
            .total_cmp(&a.excess)
            .then(a.step.cmp(&b.step))
            .then(a.state_index.cmp(&b.state_index))
            .then(a.quantity.cmp(b.quantity))
    });
    all.truncate(count);
    all
}

/// `max` over nodes of `E_i[sum_{r >= i} Z_r^2 dt]`, computed backward as
/// `B_i = Z_i^2 dt + E_i[B_{i+1}]`.
pub fn bmo_estimate(sol: &BsdeSolution) -> f64 {
    let n = sol.lattice.steps();
    let dt = sol.lattice.dt();
    let mut next = vec![0.0; sol.layout.width(n)];
    let mut worst = 0.0_f64;
    for i in (0..n).rev() {
        let cur: Vec<f64> = sol.z[i]
            .iter()
            .enumerate()
            .map(|(k, &z)| {
                let (d, u) = sol.layout.children(k);
                z * z * dt + 0.5 * (next[u] + next[d])
            })
            .collect();
        worst = cur.iter().fold(worst, |m, &b| m.max(b));
        next = cur;
    }
    worst
}
