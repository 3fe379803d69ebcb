use std::time::Instant;

use rayon::prelude::*;

use super::audit::oracle_y0;
use super::{ExperimentConfig, Outputs, Summary, Verdict};
use crate::error::{Error, Result};
use crate::generators::GrowthClass;
use crate::regularization::{convolve, Direction, Penalty, PenaltySpec};
use crate::solver::BsdeSolution;

/// `n` is empty for the unregularized driver. Distances compare with the
/// previous solved index at the same `N`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConvergenceRow {
    pub n: Option<f64>,
    pub steps: usize,
    pub status: super::RowStatus,
    pub y0: Option<f64>,
    pub z_sup: Option<f64>,
    pub oracle_error: Option<f64>,
    /// `max_nodes |Y^n - Y^{n_prev}|`
    pub y_distance: Option<f64>,
    /// `sqrt(sum_i E[(Z^n_i - Z^{n_prev}_i)^2] dt)`
    pub z_distance: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TimingRow {
    pub n: Option<f64>,
    pub steps: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub timing: Vec<TimingRow>,
    pub verdict: Verdict,
    pub summary: Summary,
}

impl ConvergenceTable {
    pub fn emit(&self, out: &Outputs) -> Result<Verdict> {
        out.write_csv("report.csv", &self.rows)?;
        out.write_csv("timing.csv", &self.timing)?;
        out.write_summary(&self.summary)?;
        Ok(self.verdict)
    }

    /// Rows of the regularized runs at step count `steps`, in schedule order.
    pub fn at_steps(&self, steps: usize) -> impl Iterator<Item = &ConvergenceRow> {
        self.rows.iter().filter(move |r| r.steps == steps && r.n.is_some())
    }
}

/// Node-wise distances between two solutions on the same layout.
fn distances(a: &BsdeSolution, b: &BsdeSolution) -> (f64, f64) {
    let y = a
        .y
        .iter()
        .flatten()
        .zip(b.y.iter().flatten())
        .fold(0.0_f64, |m, (u, v)| m.max((u - v).abs()));
    let dt = a.lattice.dt();
    let mut prob = vec![1.0];
    let mut total = 0.0;
    for (za, zb) in a.z.iter().zip(&b.z) {
        total += za.iter().zip(zb).zip(&prob).map(|((u, v), p)| p * (u - v).powi(2)).sum::<f64>() * dt;
        prob = next_layer_probabilities(&prob, a.layout);
    }
    (y, total.sqrt())
}

fn next_layer_probabilities(prob: &[f64], layout: crate::solver::Layout) -> Vec<f64> {
    let mut next = vec![0.0; layout.width(layout_step(prob.len(), layout) + 1)];
    for (k, &p) in prob.iter().enumerate() {
        let (d, u) = layout.children(k);
        next[d] += 0.5 * p;
        next[u] += 0.5 * p;
    }
    next
}

fn layout_step(width: usize, layout: crate::solver::Layout) -> usize {
    match layout {
        crate::solver::Layout::Recombining => width - 1,
        crate::solver::Layout::Tree => width.trailing_zeros() as usize,
    }
}

/// Maximal-side approximations over the `n`-schedule for every `N` in the
/// step schedule, plus the unregularized driver at each `N`.
pub fn run_convergence_study(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let problem = cfg.problem.build()?;
    let g = &problem.generator;
    let penalty = match g.growth_class() {
        GrowthClass::Quadratic => Penalty::QuadraticPenalty,
        GrowthClass::Linear => Penalty::LinearPenalty,
    };
    let oracle = oracle_y0(&problem, 64);

    let mut jobs: Vec<(usize, Option<f64>)> = Vec::new();
    for &steps in &cfg.lattice.steps_schedule {
        jobs.push((steps, None));
        for &n in &cfg.schedule.n {
            jobs.push((steps, Some(n)));
        }
    }
    type Outcome = (std::result::Result<BsdeSolution, String>, f64);
    let results: Vec<Outcome> = jobs
        .par_iter()
        .map(|&(steps, n)| {
            let start = Instant::now();
            let driver = match n {
                None => Ok(g.clone()),
                Some(n) => convolve(g, PenaltySpec::new(Direction::Sup, penalty, n), cfg.optimizer),
            };
            let sol = driver.and_then(|d| problem.solve(&d, steps, &cfg.solver));
            let sol = match sol {
                Ok(s) => Ok(s),
                Err(e @ (Error::Precondition(_) | Error::InvalidParameter { .. })) => Err(e.to_string()),
                Err(e) => return Err(e),
            };
            Ok((sol, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(jobs.len());
    let mut timing = Vec::with_capacity(jobs.len());
    let mut monotone = true;
    let slack = cfg.monotonicity_slack();
    let mut prev: Option<(usize, &BsdeSolution, Option<(f64, f64)>)> = None;
    for (&(steps, n), (sol, secs)) in jobs.iter().zip(&results) {
        timing.push(TimingRow { n, steps, wall_time: *secs });
        if prev.is_some_and(|(s, _, _)| s != steps) || n.is_none() {
            prev = None;
        }
        match sol {
            Ok(s) => {
                let mut row = ConvergenceRow {
                    n,
                    steps,
                    status: super::RowStatus::Solved,
                    y0: Some(s.y0),
                    z_sup: Some(s.z_sup),
                    oracle_error: None,
                    y_distance: None,
                    z_distance: None,
                    note: String::new(),
                };
                if n.is_none() {
                    row.oracle_error = oracle.map(|(_, v)| (s.y0 - v).abs());
                    rows.push(row);
                    continue;
                }
                let mut dist = None;
                if let Some((_, p, last)) = prev {
                    let d = distances(s, p);
                    row.y_distance = Some(d.0);
                    row.z_distance = Some(d.1);
                    if let Some((ly, lz)) = last {
                        monotone &= d.0 <= ly + slack && d.1 <= lz + slack;
                    }
                    dist = Some(d);
                }
                rows.push(row);
                prev = Some((steps, s, dist));
            }
            Err(msg) => rows.push(ConvergenceRow {
                n,
                steps,
                status: super::RowStatus::Skipped,
                y0: None,
                z_sup: None,
                oracle_error: None,
                y_distance: None,
                z_distance: None,
                note: msg.clone(),
            }),
        }
    }

    let mut summary = Summary::new();
    summary.push("pipeline", "converge");
    summary.push("generator", &problem.generator_expr);
    summary.push("terminal", problem.terminal.label());
    summary.push("horizon", problem.horizon());
    summary.push("penalty", penalty);
    summary.push("direction", Direction::Sup);
    summary.push("seed", cfg.seed);
    if let Some((name, v)) = oracle {
        summary.push("oracle", name);
        summary.push("oracle_y0", v);
        let errs: Vec<(usize, f64)> = rows
            .iter()
            .filter(|r| r.n.is_none())
            .filter_map(|r| r.oracle_error.map(|e| (r.steps, e)))
            .collect();
        for w in errs.windows(2) {
            summary.push(format!("error_ratio_{}_{}", w[0].0, w[1].0), w[0].1 / w[1].1);
        }
    }
    summary.push("distances_non_increasing", monotone);
    let verdict = Verdict::from_bool(monotone);
    summary.push("verdict", verdict);
    Ok(ConvergenceTable {
        rows,
        timing,
        verdict,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{Pipeline, ProblemConfig};

    #[test]
    fn zero_driver_has_zero_distances() {
        let mut c = ExperimentConfig::new(Pipeline::Convergence, ProblemConfig::new("zero", "sin@T", 1.0));
        c.schedule.n = vec![4.0, 8.0, 16.0];
        c.lattice.steps_schedule = vec![20, 40];
        let t = run_convergence_study(&c).unwrap();
        assert_eq!(t.rows.len(), 2 * 4);
        assert_eq!(t.timing.len(), 8);
        for r in t.rows.iter().filter(|r| r.y_distance.is_some()) {
            assert_eq!(r.y_distance, Some(0.0));
            assert_eq!(r.z_distance, Some(0.0));
        }
        assert_eq!(t.at_steps(40).count(), 3);
        assert!(t.verdict.passed());
    }

    #[test]
    fn probabilities_sum_to_one() {
        use crate::solver::Layout;
        for layout in [Layout::Recombining, Layout::Tree] {
            let mut p = vec![1.0];
            for _ in 0..6 {
                p = next_layer_probabilities(&p, layout);
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
            assert_eq!(p.len(), layout.width(6));
        }
    }

    #[test]
    fn linear_driver_errors_halve() {
        let mut c = ExperimentConfig::new(
            Pipeline::Convergence,
            ProblemConfig::new("linear(1, 0.5, 0.2)", "sin@T", 1.0),
        );
        c.schedule.n = vec![2.0];
        c.lattice.steps_schedule = vec![50, 100, 200];
        let t = run_convergence_study(&c).unwrap();
        let r: f64 = t.summary.get("error_ratio_100_200").unwrap().parse().unwrap();
        assert!((1.7..=2.3).contains(&r));
        // the linear penalty leaves a Lipschitz driver unchanged
        for steps in [50, 100, 200] {
            let raw = t.rows.iter().find(|r| r.steps == steps && r.n.is_none()).unwrap().y0.unwrap();
            let reg = t.at_steps(steps).next().unwrap().y0.unwrap();
            assert!((raw - reg).abs() < 1e-9);
        }
    }
}
