use super::audit::{certify_terminal, oracle_y0, validate_assumptions};
use super::{ExperimentConfig, Outputs, Summary, Verdict};
use crate::error::{Error, Result};
use crate::generators::{Generator, GrowthClass};
use crate::regularization::{convolve, Direction, Penalty, PenaltySpec};
use crate::solver::{z_bound, BsdeSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Solved,
    Skipped,
}

/// One scheduled index. Numeric fields are empty for skipped rows.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct UniquenessRow {
    pub n: f64,
    pub status: RowStatus,
    pub y0_max: Option<f64>,
    pub y0_min: Option<f64>,
    pub gap: Option<f64>,
    pub z_sup_max: Option<f64>,
    pub z_sup_min: Option<f64>,
    /// Analytic bound on the z-modulus over the reference range.
    pub modulus_bound: f64,
    /// Largest sampled difference quotient in `z` over the same range.
    pub modulus_sampled: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    pub penalty: Penalty,
    pub rows: Vec<UniquenessRow>,
    /// Worst increase of the maximal-side `Y_0` along the schedule.
    pub monotonicity_defect_max: f64,
    /// Worst decrease of the minimal-side `Y_0` along the schedule.
    pub monotonicity_defect_min: f64,
    pub final_n: Option<f64>,
    pub final_gap: Option<f64>,
    pub gap_strictly_decreasing: bool,
    pub min_gap: Option<f64>,
    pub localization_radius: Option<f64>,
    pub y0_localized: Option<f64>,
    pub localization_error: Option<f64>,
    /// Linear pipeline only: worst excess of `|Z|` over `L e^{L(T-t)}` plus slack.
    pub z_bound_violation: Option<f64>,
    pub uniqueness_tol: f64,
    pub monotonicity_slack: f64,
    pub solver_tolerance: f64,
    pub verdict: Verdict,
    pub summary: Summary,
    max_solution: Option<BsdeSolution>,
}

impl UniquenessReport {
    pub fn solved(&self) -> impl Iterator<Item = &UniquenessRow> {
        self.rows.iter().filter(|r| r.status == RowStatus::Solved)
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.solved().filter_map(|r| r.gap).collect()
    }

    /// Maximal-side solution at the largest solved index.
    pub fn max_solution(&self) -> Option<&BsdeSolution> {
        self.max_solution.as_ref()
    }

    pub fn emit(&self, out: &Outputs, dump_nodes: bool) -> Result<Verdict> {
        out.write_csv("report.csv", &self.rows)?;
        out.write_summary(&self.summary)?;
        if dump_nodes {
            if let Some(sol) = &self.max_solution {
                out.write_nodes(sol)?;
            }
        }
        Ok(self.verdict)
    }
}

/// Largest `|f(z_{j+1}) - f(z_j)| / (z_{j+1} - z_j)` over a 17-point grid on
/// `[-z_ref, z_ref]`, for `t in {0, T}` and `y in {-y_ref, 0, y_ref}`.
fn sampled_modulus(gens: [&Generator; 2], horizon: f64, y_ref: f64, z_ref: f64) -> f64 {
    const POINTS: usize = 17;
    let h = 2.0 * z_ref / (POINTS - 1) as f64;
    let mut worst = 0.0_f64;
    for g in gens {
        for t in [0.0, horizon] {
            for y in [-y_ref, 0.0, y_ref] {
                let vals: Vec<f64> = (0..POINTS).map(|j| g.eval(t, y, -z_ref + h * j as f64)).collect();
                for w in vals.windows(2) {
                    worst = worst.max((w[1] - w[0]).abs() / h);
                }
            }
        }
    }
    worst
}

fn skipped(n: f64, modulus_bound: f64, modulus_sampled: Option<f64>, note: String) -> UniquenessRow {
    UniquenessRow {
        n,
        status: RowStatus::Skipped,
        y0_max: None,
        y0_min: None,
        gap: None,
        z_sup_max: None,
        z_sup_min: None,
        modulus_bound,
        modulus_sampled,
        note,
    }
}

fn worst_z_excess(sol: &BsdeSolution, lipschitz: f64) -> f64 {
    let lat = sol.lattice;
    let slack = 5.0 * lipschitz * (lipschitz * lat.horizon()).exp() * lat.sqrt_dt();
    let mut worst = f64::NEG_INFINITY;
    for (i, layer) in sol.z.iter().enumerate() {
        let b = z_bound(lipschitz, lat.horizon() - lat.time(i)) + slack;
        for &z in layer {
            worst = worst.max(z.abs() - b);
        }
    }
    worst
}

fn run_pipeline(cfg: &ExperimentConfig, penalty: Penalty) -> Result<UniquenessReport> {
    cfg.validate()?;
    let mut problem = cfg.problem.build()?;
    let mut summary = Summary::new();
    let label = match penalty {
        Penalty::QuadraticPenalty => "quadratic-uniqueness",
        Penalty::LinearPenalty => "linear-uniqueness",
    };
    summary.push("pipeline", label);
    summary.push("generator", &problem.generator_expr);
    summary.push("terminal", problem.terminal.label());
    summary.push("horizon", problem.horizon());
    summary.push("steps", cfg.lattice.steps);
    summary.push("seed", cfg.seed);

    match (penalty, problem.generator.growth_class()) {
        (Penalty::QuadraticPenalty, GrowthClass::Linear) => {
            problem.generator = problem.generator.as_quadratic();
            summary.push("note", "linear-growth generator re-declared as quadratic with constant 1.5 L");
        }
        (Penalty::LinearPenalty, GrowthClass::Quadratic) => {
            return Err(Error::Precondition(format!(
                "generator `{}` declares quadratic growth; the linear pipeline needs linear growth",
                problem.generator_expr
            )));
        }
        _ => {}
    }
    if penalty == Penalty::QuadraticPenalty && problem.terminal.sup_bound().is_none() {
        return Err(Error::Precondition(format!(
            "terminal condition `{}` has no bound on |xi|; the quadratic pipeline needs a bounded terminal value",
            problem.terminal
        )));
    }
    if penalty == Penalty::LinearPenalty && problem.terminal.sup_bound().is_none() {
        summary.push("note", "unbounded terminal value accepted in the linear pipeline");
    }

    let terminal_ok = certify_terminal(&problem, cfg, &mut summary)?;
    validate_assumptions(&problem, cfg, &mut summary)?;
    summary.push("terminal_certified", terminal_ok);

    let g = &problem.generator;
    let horizon = problem.horizon();
    let steps = cfg.lattice.steps;
    let dt = horizon / steps as f64;
    let l_all = problem.combined_constant();
    let l_z = g.lipschitz().max(problem.terminal.malliavin_bound());
    let y_ref = crate::solver::y_bound(l_all, horizon);
    let mut z_ref = z_bound(l_all, horizon);
    let solver_tol = cfg.solver.fp_tol + horizon * cfg.optimizer.tol;
    let slack = cfg.monotonicity_slack();
    let threshold = cfg.tolerances.stability_threshold;

    let mut rows = Vec::with_capacity(cfg.schedule.n.len());
    let mut last_pair: Option<(BsdeSolution, BsdeSolution)> = None;
    let mut z_violation = f64::NEG_INFINITY;
    for &n in &cfg.schedule.n {
        let modulus_bound = match penalty {
            Penalty::QuadraticPenalty => n * (1.0 + 2.0 * z_ref),
            Penalty::LinearPenalty => n,
        };
        let up_spec = PenaltySpec::new(Direction::Sup, penalty, n);
        if let Err(e) = up_spec.check_against(g) {
            rows.push(skipped(n, modulus_bound, None, format!("inadmissible index: {e}")));
            continue;
        }
        let up = convolve(g, up_spec, cfg.optimizer)?;
        let lo = convolve(g, PenaltySpec::new(Direction::Inf, penalty, n), cfg.optimizer)?;
        let modulus = sampled_modulus([&up, &lo], horizon, y_ref, z_ref);
        if modulus * dt >= threshold {
            rows.push(skipped(
                n,
                modulus_bound,
                Some(modulus),
                format!("unstable: sampled modulus * dt = {} >= {threshold}", modulus * dt),
            ));
            continue;
        }
        let (a, b) = rayon::join(|| problem.solve(&up, steps, &cfg.solver), || problem.solve(&lo, steps, &cfg.solver));
        let (s_max, s_min) = match (a, b) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e @ Error::Precondition(_)), _) | (_, Err(e @ Error::Precondition(_))) => {
                rows.push(skipped(n, modulus_bound, Some(modulus), format!("refused: {e}")));
                continue;
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        if penalty == Penalty::LinearPenalty {
            z_violation = z_violation.max(worst_z_excess(&s_max, l_z)).max(worst_z_excess(&s_min, l_z));
        }
        rows.push(UniquenessRow {
            n,
            status: RowStatus::Solved,
            y0_max: Some(s_max.y0),
            y0_min: Some(s_min.y0),
            gap: Some(s_max.y0 - s_min.y0),
            z_sup_max: Some(s_max.z_sup),
            z_sup_min: Some(s_min.z_sup),
            modulus_bound,
            modulus_sampled: Some(modulus),
            note: String::new(),
        });
        z_ref = s_max.z_sup.max(s_min.z_sup);
        last_pair = Some((s_max, s_min));
    }

    let solved: Vec<&UniquenessRow> = rows.iter().filter(|r| r.status == RowStatus::Solved).collect();
    let mut defect_max = 0.0_f64;
    let mut defect_min = 0.0_f64;
    let mut strictly = solved.len() >= 2;
    for w in solved.windows(2) {
        defect_max = defect_max.max(w[1].y0_max.unwrap() - w[0].y0_max.unwrap());
        defect_min = defect_min.max(w[0].y0_min.unwrap() - w[1].y0_min.unwrap());
        strictly &= w[1].gap.unwrap() < w[0].gap.unwrap();
    }
    let final_row = solved.last();
    let final_gap = final_row.and_then(|r| r.gap);
    let min_gap = solved.iter().filter_map(|r| r.gap).reduce(f64::min);

    let (mut radius, mut y0_loc, mut loc_err) = (None, None, None);
    if let Some((s_max, s_min)) = &last_pair {
        let m = s_max.z_sup.max(s_min.z_sup);
        radius = Some(m);
        if m > 0.0 {
            match problem.solve(&g.localize(m)?, steps, &cfg.solver) {
                Ok(sol) => {
                    y0_loc = Some(sol.y0);
                    loc_err = Some((sol.y0 - s_max.y0).abs());
                }
                Err(e) => {
                    summary.push("localization_error_message", e);
                }
            }
        }
    }
    let z_bound_violation = (penalty == Penalty::LinearPenalty && z_violation.is_finite()).then(|| z_violation.max(0.0));

    let gaps_ordered = min_gap.is_some_and(|m| m >= -2.0 * solver_tol);
    let mut ok = final_gap.is_some_and(|g| g <= cfg.tolerances.uniqueness_tol)
        && defect_max <= slack
        && defect_min <= slack
        && gaps_ordered;
    if let Some(v) = z_bound_violation {
        ok &= v == 0.0;
    }
    let verdict = Verdict::from_bool(ok);

    summary.push("uniqueness_tol", cfg.tolerances.uniqueness_tol);
    summary.push("monotonicity_slack", slack);
    summary.push("solver_tolerance", solver_tol);
    summary.push("stability_threshold", threshold);
    summary.push("scheduled", rows.len());
    summary.push("solved", solved.len());
    summary.push("monotonicity_defect_max", defect_max);
    summary.push("monotonicity_defect_min", defect_min);
    summary.push_opt("final_n", final_row.map(|r| r.n));
    summary.push_opt("final_gap", final_gap);
    summary.push_opt("min_gap", min_gap);
    summary.push("gap_strictly_decreasing", strictly);
    summary.push_opt("localization_radius", radius);
    summary.push_opt("y0_localized", y0_loc);
    summary.push_opt("localization_error", loc_err);
    if penalty == Penalty::LinearPenalty {
        summary.push("z_bound_constant", l_z);
        summary.push_opt("z_bound_violation", z_bound_violation);
    }
    if let Some((name, value)) = oracle_y0(&problem, 64) {
        summary.push("oracle", name);
        summary.push("oracle_y0", value);
        if let Some(r) = final_row {
            summary.push("oracle_error_max", (r.y0_max.unwrap() - value).abs());
            summary.push("oracle_error_min", (r.y0_min.unwrap() - value).abs());
        }
    }
    summary.push("verdict", verdict);

    Ok(UniquenessReport {
        penalty,
        monotonicity_defect_max: defect_max,
        monotonicity_defect_min: defect_min,
        final_n: final_row.map(|r| r.n),
        final_gap,
        gap_strictly_decreasing: strictly,
        min_gap,
        localization_radius: radius,
        y0_localized: y0_loc,
        localization_error: loc_err,
        z_bound_violation,
        uniqueness_tol: cfg.tolerances.uniqueness_tol,
        monotonicity_slack: slack,
        solver_tolerance: solver_tol,
        verdict,
        summary,
        max_solution: last_pair.map(|(a, _)| a),
        rows,
    })
}

/// Sup/inf-convolution with the quadratic penalty for every scheduled index,
/// then the localized re-solve at the observed `Z` radius.
pub fn run_quadratic_uniqueness(cfg: &ExperimentConfig) -> Result<UniquenessReport> {
    run_pipeline(cfg, Penalty::QuadraticPenalty)
}

/// The same pipeline with the linear penalty, plus the uniform `Z` bound.
pub fn run_linear_uniqueness(cfg: &ExperimentConfig) -> Result<UniquenessReport> {
    run_pipeline(cfg, Penalty::LinearPenalty)
}
