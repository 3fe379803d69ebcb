//! Single-problem pipelines: solve, regularize, bounds audit, comparison.

use super::{ExperimentConfig, Outputs, Problem, ProblemConfig, Summary, Verdict};
use crate::error::{Error, Result};
use crate::generators::{
    parse_call, validate_growth, validate_local_z_lipschitz, validate_y_lipschitz, Domain, GrowthClass,
    ValidationReport,
};
use crate::regularization::{
    convolve_at, verify_lemma_bounds, verify_local_lipschitz, verify_monotone_in_n, verify_ordering,
    Direction, Penalty, PenaltySpec,
};
use crate::solver::{
    bound_offenders, check_solution_bounds, cole_hopf_y0, solve_linear_closed_form, verify_comparison,
    BoundOffender, BsdeSolution, ComparisonReport, Lattice,
};

#[derive(serde::Serialize)]
struct KeyValue<'a> {
    key: &'a str,
    value: &'a str,
}

fn write_key_values(out: &Outputs, summary: &Summary) -> Result<()> {
    out.write_csv("report.csv", summary.rows().map(|(key, value)| KeyValue { key, value }))
}

/// Curated problems: each pipeline has an instance pinned by an oracle
/// (closed form for linear drivers, Cole-Hopf for pure quadratic ones, the
/// fixed-point property for Lipschitz ones).
pub fn default_problems() -> Vec<ProblemConfig> {
    [
        ("zero", "sin@T"),
        ("quad(1)", "sin@T"),
        ("quad(1, 0.1, 0)", "sin@T"),
        ("linear(1, 0.5, 0.2)", "sin@T"),
        ("abs", "sin@T"),
        ("trig(1, 0)", "sin@T"),
        ("softabs", "sin@T"),
        ("pow(1.5, 1)", "sin@T"),
        ("quad(1)", "tanh(0.5)@T"),
    ]
    .into_iter()
    .map(|(g, xi)| ProblemConfig::new(g, xi, 1.0))
    .collect()
}

/// Closed-form `Y_0` when the driver expression has one.
pub(crate) fn oracle_y0(problem: &Problem, quad_points: usize) -> Option<(&'static str, f64)> {
    if !problem.terminal.is_markovian() {
        return None;
    }
    let (name, p) = parse_call(&problem.generator_expr).ok()?;
    let tc = &problem.terminal;
    let linear = |a, b, c| solve_linear_closed_form(a, b, c, tc, quad_points).ok();
    match (name.as_str(), p.as_slice()) {
        ("zero", []) => linear(0.0, 0.0, 0.0).map(|v| ("linear-closed-form", v)),
        ("const", [c]) => linear(0.0, 0.0, *c).map(|v| ("linear-closed-form", v)),
        ("linear", [a, b, c]) => linear(*a, *b, *c).map(|v| ("linear-closed-form", v)),
        ("quad", [g, rest @ ..]) if *g != 0.0 && rest.iter().all(|&x| x == 0.0) => {
            cole_hopf_y0(*g, tc, quad_points).ok().map(|v| ("cole-hopf", v))
        }
        _ => None,
    }
}

/// Grid certification of the declared terminal bounds; `false` when the
/// grid contradicts them or cannot be built (`k > 3`).
pub(crate) fn certify_terminal(problem: &Problem, cfg: &ExperimentConfig, summary: &mut Summary) -> Result<bool> {
    let tc = &problem.terminal;
    let k = tc.dimension();
    summary.push_opt("terminal_sup_bound", tc.sup_bound());
    summary.push("terminal_malliavin_bound", tc.malliavin_bound());
    let points = match k {
        1 => cfg.audit.grid_points,
        2 => cfg.audit.grid_points.min(201),
        _ => cfg.audit.grid_points.min(41),
    };
    let est = match tc.estimate_bounds(cfg.audit.grid_radius, points) {
        Ok(e) => e,
        Err(e) => {
            summary.push("terminal_certification", e);
            return Ok(false);
        }
    };
    summary.push("terminal_sup_estimate", est.sup_estimate);
    summary.push("terminal_malliavin_estimate", est.malliavin_estimate);
    summary.push("terminal_grid_spacing", est.grid_spacing);
    summary.push("terminal_sup_grows_with_radius", est.sup_grows_with_radius);
    let grid_tol = est.grid_spacing * k as f64 * tc.malliavin_bound().max(1.0);
    match tc.certify(&est, grid_tol) {
        Ok(()) => Ok(true),
        Err(e) => {
            summary.push("terminal_certification", e);
            Ok(false)
        }
    }
}

/// Sampled growth and Lipschitz checks of the declared generator constants.
pub(crate) fn validate_assumptions(problem: &Problem, cfg: &ExperimentConfig, summary: &mut Summary) -> Result<bool> {
    let g = &problem.generator;
    let domain = Domain::symmetric(problem.horizon(), 3.0, 3.0)?;
    let mut reports: Vec<ValidationReport> = vec![
        validate_growth(g, &domain, 1000, cfg.seed)?,
        validate_y_lipschitz(g, &domain, 500, cfg.seed)?,
    ];
    if g.local_z_lipschitz().is_some() {
        reports.push(validate_local_z_lipschitz(g, &domain, 500, cfg.seed)?);
    }
    summary.push("generator_class", g.growth_class());
    summary.push("generator_constant", g.lipschitz());
    summary.push_opt("generator_z_constant", g.local_z_lipschitz());
    let mut ok = true;
    for r in &reports {
        summary.push(format!("check_{}", r.assumption), r);
        ok &= r.passed();
    }
    Ok(ok)
}

fn describe(problem: &Problem, cfg: &ExperimentConfig, pipeline: &str) -> Summary {
    let mut s = Summary::new();
    s.push("pipeline", pipeline);
    s.push("generator", &problem.generator_expr);
    s.push("terminal", problem.terminal.label());
    s.push("horizon", problem.horizon());
    s.push("steps", cfg.lattice.steps);
    s.push("seed", cfg.seed);
    s
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: BsdeSolution,
    pub oracle: Option<(&'static str, f64)>,
    pub summary: Summary,
}

impl SolveReport {
    pub fn emit(&self, out: &Outputs, dump_nodes: bool) -> Result<Verdict> {
        write_key_values(out, &self.summary)?;
        out.write_summary(&self.summary)?;
        if dump_nodes {
            out.write_nodes(&self.solution)?;
        }
        Ok(Verdict::Pass)
    }
}

/// Solves the configured problem with its unregularized driver.
pub fn run_solve(cfg: &ExperimentConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let problem = cfg.problem.build()?;
    let sol = problem.solve(&problem.generator, cfg.lattice.steps, &cfg.solver)?;
    let mut summary = describe(&problem, cfg, "solve");
    summary.push("layout", format!("{:?}", sol.layout).to_lowercase());
    summary.push("y0", sol.y0);
    summary.push("y_sup", sol.y_sup);
    summary.push("z_sup", sol.z_sup);
    summary.push("bmo_estimate", sol.bmo_estimate);
    let oracle = oracle_y0(&problem, 64);
    if let Some((name, v)) = oracle {
        summary.push("oracle", name);
        summary.push("oracle_y0", v);
        summary.push("oracle_error", (sol.y0 - v).abs());
    }
    Ok(SolveReport {
        solution: sol,
        oracle,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RegularizeRow {
    pub n: f64,
    pub direction: Direction,
    pub penalty: Penalty,
    pub t: f64,
    pub y: f64,
    pub z: f64,
    pub f: f64,
    pub f_n: f64,
    pub optimizer: f64,
}

#[derive(Debug, Clone)]
pub struct RegularizeReport {
    pub rows: Vec<RegularizeRow>,
    pub checks: Vec<(f64, ValidationReport)>,
    pub verdict: Verdict,
    pub summary: Summary,
}

impl RegularizeReport {
    pub fn emit(&self, out: &Outputs) -> Result<Verdict> {
        out.write_csv("report.csv", &self.rows)?;
        out.write_summary(&self.summary)?;
        Ok(self.verdict)
    }
}

/// Tabulates both convolutions over a `z`-grid for every admissible index
/// and runs the sampled property checks.
pub fn run_regularize(cfg: &ExperimentConfig) -> Result<RegularizeReport> {
    cfg.validate()?;
    let problem = cfg.problem.build()?;
    let g = &problem.generator;
    let penalty = match g.growth_class() {
        GrowthClass::Quadratic => Penalty::QuadraticPenalty,
        GrowthClass::Linear => Penalty::LinearPenalty,
    };
    let r = &cfg.regularize;
    let mut summary = describe(&problem, cfg, "regularize");
    summary.push("penalty", penalty);
    let admissible: Vec<f64> = cfg
        .schedule
        .n
        .iter()
        .copied()
        .filter(|&n| PenaltySpec::new(Direction::Sup, penalty, n).check_against(g).is_ok())
        .collect();
    for &n in &cfg.schedule.n {
        if !admissible.contains(&n) {
            summary.push(format!("n={n}"), "skipped: inadmissible index");
        }
    }

    let mut rows = Vec::new();
    for &n in &admissible {
        for direction in [Direction::Sup, Direction::Inf] {
            let spec = PenaltySpec::new(direction, penalty, n);
            for j in 0..r.points {
                let z = r.z_min + (r.z_max - r.z_min) * j as f64 / (r.points - 1) as f64;
                let m = convolve_at(g, &spec, &cfg.optimizer, r.t, r.y, z);
                rows.push(RegularizeRow {
                    n,
                    direction,
                    penalty,
                    t: r.t,
                    y: r.y,
                    z,
                    f: g.eval(r.t, r.y, z),
                    f_n: m.value,
                    optimizer: m.argmax,
                });
            }
        }
    }

    let z_radius = r.z_min.abs().max(r.z_max.abs());
    let domain = Domain::symmetric(problem.horizon(), 2.0, z_radius)?;
    let mut checks = Vec::new();
    for &n in &admissible {
        for direction in [Direction::Sup, Direction::Inf] {
            let spec = PenaltySpec::new(direction, penalty, n);
            checks.push((n, verify_lemma_bounds(g, spec, cfg.optimizer, &domain, r.samples, cfg.seed)?));
            let lip_ok = penalty == Penalty::LinearPenalty || n >= 2.0 * g.lipschitz() + 1.0;
            if lip_ok {
                checks.push((n, verify_local_lipschitz(g, spec, cfg.optimizer, &domain, r.samples, cfg.seed)?));
            }
        }
        checks.push((n, verify_ordering(g, penalty, n, cfg.optimizer, &domain, r.samples, cfg.seed)?));
    }
    if admissible.len() >= 2 {
        let line: Vec<(f64, f64, f64)> = (0..r.points)
            .map(|j| (r.t, r.y, r.z_min + (r.z_max - r.z_min) * j as f64 / (r.points - 1) as f64))
            .collect();
        for direction in [Direction::Sup, Direction::Inf] {
            let n_last = *admissible.last().unwrap();
            checks.push((n_last, verify_monotone_in_n(g, direction, penalty, &admissible, cfg.optimizer, &line)?));
        }
    }
    let ok = !admissible.is_empty() && checks.iter().all(|(_, c)| c.passed());
    for (n, c) in &checks {
        summary.push(format!("n={n} {}", c.assumption), c);
    }
    let verdict = Verdict::from_bool(ok);
    summary.push("verdict", verdict);
    Ok(RegularizeReport {
        rows,
        checks,
        verdict,
        summary,
    })
}

#[derive(Debug, Clone)]
pub struct BoundsAuditReport {
    pub lipschitz: f64,
    pub report: ValidationReport,
    pub offenders: Vec<BoundOffender>,
    pub solution: BsdeSolution,
    pub verdict: Verdict,
    pub summary: Summary,
}

impl BoundsAuditReport {
    pub fn emit(&self, out: &Outputs, dump_nodes: bool) -> Result<Verdict> {
        out.write_csv("report.csv", &self.offenders)?;
        out.write_summary(&self.summary)?;
        if dump_nodes {
            out.write_nodes(&self.solution)?;
        }
        Ok(self.verdict)
    }
}

/// Solves the configured problem and checks `|Y|` and `|Z|` against their
/// exponential bounds with `L = max(L_gen, L_xi)` (or `audit.declared_l`).
pub fn run_bounds_audit(cfg: &ExperimentConfig) -> Result<BoundsAuditReport> {
    cfg.validate()?;
    let problem = cfg.problem.build()?;
    let sol = problem.solve(&problem.generator, cfg.lattice.steps, &cfg.solver)?;
    let lipschitz = cfg.audit.declared_l.unwrap_or_else(|| problem.combined_constant());
    let report = check_solution_bounds(&sol, lipschitz);
    let offenders = bound_offenders(&sol, lipschitz, cfg.audit.offenders);
    let verdict = Verdict::from_bool(report.passed());
    let mut summary = describe(&problem, cfg, "bounds");
    summary.push("lipschitz", lipschitz);
    summary.push("declared", cfg.audit.declared_l.is_some());
    summary.push(
        "slack",
        5.0 * lipschitz * (lipschitz * problem.horizon()).exp() * sol.lattice.sqrt_dt(),
    );
    summary.push("y_sup", sol.y_sup);
    summary.push("z_sup", sol.z_sup);
    summary.push("nodes", sol.node_count());
    summary.push("worst_violation", report.worst_violation);
    summary.push_opt("witness", report.witness);
    summary.push("verdict", verdict);
    Ok(BoundsAuditReport {
        lipschitz,
        report,
        offenders,
        solution: sol,
        verdict,
        summary,
    })
}

/// Compares the `[problem]` and `[comparison]` problems on one lattice.
/// The verdict passes when the hypotheses hold and the conclusion
/// (`dY >= 0`, positive adjoint) is observed.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<(ComparisonReport, Verdict)> {
    cfg.validate()?;
    let first = cfg.problem.build()?;
    let second = cfg
        .comparison
        .as_ref()
        .ok_or_else(|| Error::Config("comparison runs need a [comparison] section".into()))?
        .build()?;
    let lat = Lattice::new(first.horizon(), cfg.lattice.steps)?;
    let report = verify_comparison(
        &first.generator,
        &second.generator,
        &first.terminal,
        &second.terminal,
        lat,
        &cfg.solver,
    )?;
    let ok = report.hypotheses_hold() && report.delta_y_min >= -1e-10 && report.gamma_min > 0.0;
    Ok((report, Verdict::from_bool(ok)))
}

pub(crate) fn emit_comparison(report: &ComparisonReport, verdict: Verdict, cfg: &ExperimentConfig, out: &Outputs) -> Result<()> {
    let mut s = Summary::new();
    s.push("pipeline", "compare");
    s.push("generator", &cfg.problem.generator);
    s.push("terminal", &cfg.problem.terminal);
    if let Some(c) = &cfg.comparison {
        s.push("generator_prime", &c.generator);
        s.push("terminal_prime", &c.terminal);
    }
    s.push("horizon", cfg.problem.horizon);
    s.push("steps", report.steps);
    s.push("max_residual", report.max_residual);
    s.push("gamma_min", report.gamma_min);
    s.push("delta_y_min", report.delta_y_min);
    s.push("delta_y0", report.delta_y0);
    s.push("terminal_gap_min", report.terminal_gap_min);
    s.push("driver_gap_min", report.driver_gap_min);
    s.push("a_sup", report.a_sup);
    s.push("b_sup", report.b_sup);
    s.push("positivity_condition", report.positivity_condition);
    s.push("hypotheses_hold", report.hypotheses_hold());
    s.push("verdict", verdict);
    write_key_values(out, &s)?;
    out.write_summary(&s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::Pipeline;

    fn cfg(pipeline: Pipeline, g: &str, xi: &str) -> ExperimentConfig {
        ExperimentConfig::new(pipeline, ProblemConfig::new(g, xi, 1.0))
    }

    #[test]
    fn oracles_are_matched_by_expression() {
        let p = ProblemConfig::new("quad(1)", "sin@T", 1.0).build().unwrap();
        assert_eq!(oracle_y0(&p, 64).unwrap().0, "cole-hopf");
        let p = ProblemConfig::new("linear(1, 0.5, 0.2)", "sin@T", 1.0).build().unwrap();
        assert_eq!(oracle_y0(&p, 64).unwrap().0, "linear-closed-form");
        let p = ProblemConfig::new("quad(1, 0.1)", "sin@T", 1.0).build().unwrap();
        assert!(oracle_y0(&p, 64).is_none());
        let p = ProblemConfig::new("zero", "tanh@[T/2,T]", 1.0).build().unwrap();
        assert!(oracle_y0(&p, 64).is_none());
    }

    #[test]
    fn audit_examples() {
        let mut c = cfg(Pipeline::BoundsAudit, "quad(1)", "sin@T");
        let r = run_bounds_audit(&c).unwrap();
        assert!(r.verdict.passed());
        assert_eq!(r.lipschitz, 1.0);
        assert_eq!(r.offenders.len(), 10);
        assert!(r.offenders[0].excess <= 0.0);

        c.audit.declared_l = Some(0.1);
        let r = run_bounds_audit(&c).unwrap();
        assert!(!r.verdict.passed());
        assert!(r.report.witness.is_some());
        assert!(r.offenders[0].excess > 0.0);

        let r = run_bounds_audit(&cfg(Pipeline::BoundsAudit, "zero", "sin@T")).unwrap();
        assert!(r.verdict.passed());
        assert!(r.offenders[0].excess < -0.1);
    }

    #[test]
    fn comparison_needs_second_problem() {
        let c = cfg(Pipeline::Comparison, "quad(1)", "sin@T");
        assert!(matches!(run_comparison(&c), Err(Error::Config(_))));
        let mut c = c;
        c.comparison = Some(ProblemConfig::new("quad(1, 0, -1)", "sin@T", 1.0));
        let (r, v) = run_comparison(&c).unwrap();
        assert!(v.passed());
        assert!((r.delta_y0 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn regularize_table_and_checks() {
        let mut c = cfg(Pipeline::Regularize, "quad(2)", "sin@T");
        c.schedule.n = vec![1.0, 4.0, 8.0];
        c.regularize.points = 5;
        c.regularize.samples = 100;
        let r = run_regularize(&c).unwrap();
        assert_eq!(r.rows.len(), 2 * 2 * 5);
        assert!(r.verdict.passed(), "{}", r.summary.render());
        assert_eq!(r.summary.get("n=1"), Some("skipped: inadmissible index"));
        // z^2 convolved at n = 4: 4z^2/3 and 4z^2/5
        let sup_at_3 = r.rows.iter().find(|row| row.n == 4.0 && row.direction == Direction::Sup && row.z == 3.0).unwrap();
        assert!((sup_at_3.f_n - 12.0).abs() < 1e-7);
        let inf_at_3 = r.rows.iter().find(|row| row.n == 4.0 && row.direction == Direction::Inf && row.z == 3.0).unwrap();
        assert!((inf_at_3.f_n - 36.0 / 5.0).abs() < 1e-7);
    }

    #[test]
    fn solve_reports_oracle_error() {
        let mut c = cfg(Pipeline::Solve, "linear(1, 0.5, 0.2)", "sin@T");
        c.lattice.steps = 100;
        let r = run_solve(&c).unwrap();
        let err: f64 = r.summary.get("oracle_error").unwrap().parse().unwrap();
        assert!(err < 2e-2 && err > 1e-4);
    }
}
