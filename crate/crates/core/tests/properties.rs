use proptest::prelude::*;

use bsde_core::generators::{parse_generator, validate_growth, Domain, SamplePlan};
use bsde_core::regularization::{convolve, convolve_at, Direction, OptimizerConfig, Penalty, PenaltySpec};
use bsde_core::solver::{
    check_solution_bounds, gauss_hermite, solve_backward, solve_backward_tree, verify_comparison, Lattice, SolverConfig,
};
use bsde_core::terminal::TerminalCondition;

fn opt() -> OptimizerConfig {
    OptimizerConfig::default()
}

fn sin_at(horizon: f64) -> TerminalCondition {
    TerminalCondition::parse("sin@T", horizon).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn localization_is_exact_inside_and_radial_outside(
        m in 0.1f64..5.0, z in -10.0f64..10.0, y in -3.0f64..3.0, lambda in 1.0f64..20.0,
    ) {
        let g = parse_generator("quad(1, 0.3, 0.1)").unwrap();
        let loc = g.localize(m).unwrap();
        if z.abs() <= m {
            prop_assert_eq!(loc.eval(0.2, y, z).to_bits(), g.eval(0.2, y, z).to_bits());
        }
        let edge = m.copysign(z);
        prop_assert_eq!(loc.eval(0.2, y, lambda * edge), g.eval(0.2, y, edge));
    }

    #[test]
    fn validation_is_deterministic(seed in any::<u64>()) {
        let g = parse_generator("softabs").unwrap();
        let d = Domain::symmetric(1.0, 2.0, 4.0).unwrap();
        let a = validate_growth(&g, &d, 200, seed).unwrap();
        let b = validate_growth(&g, &d, 200, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.worst_violation, 0.0);
        prop_assert!(a.witness.is_none());
        prop_assert_eq!(SamplePlan::new(d, 50, seed).unwrap().points(), SamplePlan::new(d, 50, seed).unwrap().points());
    }

    #[test]
    fn ordering_around_the_driver(
        z in -4.0f64..4.0, y in -2.0f64..2.0, n in 2.1f64..40.0, expr in prop::sample::select(vec!["quad(1)", "quad(2)", "pow(1.5, 1)"]),
    ) {
        let g = parse_generator(expr).unwrap();
        let f = g.eval(0.0, y, z);
        let o = opt();
        let up = convolve_at(&g, &PenaltySpec::new(Direction::Sup, Penalty::QuadraticPenalty, n), &o, 0.0, y, z).value;
        let down = convolve_at(&g, &PenaltySpec::new(Direction::Inf, Penalty::QuadraticPenalty, n), &o, 0.0, y, z).value;
        let slack = 2.0 * o.tol * f.abs().max(1.0);
        prop_assert!(up >= f - slack, "{up} < {f}");
        prop_assert!(down <= f + slack, "{down} > {f}");
    }

    #[test]
    fn sup_convolution_decreases_in_n(z in -3.0f64..3.0, n in 2.5f64..20.0, factor in 1.01f64..4.0) {
        let g = parse_generator("quad(2)").unwrap();
        let o = opt();
        let a = convolve_at(&g, &PenaltySpec::new(Direction::Sup, Penalty::QuadraticPenalty, n), &o, 0.0, 0.0, z).value;
        let b = convolve_at(&g, &PenaltySpec::new(Direction::Sup, Penalty::QuadraticPenalty, n * factor), &o, 0.0, 0.0, z).value;
        prop_assert!(b <= a + 2.0 * o.tol * a.abs().max(1.0));
        // closed form for the square
        prop_assert!((a - n * z * z / (n - 1.0)).abs() <= 1e-8 * a.abs().max(1.0));
    }

    #[test]
    fn linear_penalty_fixes_lipschitz_drivers(
        z in -5.0f64..5.0, y in -2.0f64..2.0, n in 1.01f64..30.0,
        expr in prop::sample::select(vec!["abs", "trig(1, 0.5)", "softabs", "linear(0.2, -1, 0.3)"]),
    ) {
        let g = parse_generator(expr).unwrap();
        for dir in [Direction::Sup, Direction::Inf] {
            let v = convolve_at(&g, &PenaltySpec::new(dir, Penalty::LinearPenalty, n), &opt(), 0.0, y, z).value;
            let f = g.eval(0.0, y, z);
            prop_assert!((v - f).abs() <= opt().tol * f.abs().max(1.0), "{expr} {dir}: {v} vs {f}");
        }
    }

    #[test]
    fn widening_the_search_interval_is_harmless(z in -3.0f64..3.0, n in 2.2f64..16.0) {
        let g = parse_generator("pow(1.5, 1)").unwrap();
        let base = opt();
        let wide = OptimizerConfig { radius_scale: 2.5, coarse_points: 641, ..base };
        for dir in [Direction::Sup, Direction::Inf] {
            let spec = PenaltySpec::new(dir, Penalty::QuadraticPenalty, n);
            let a = convolve_at(&g, &spec, &base, 0.0, 0.0, z).value;
            let b = convolve_at(&g, &spec, &wide, 0.0, 0.0, z).value;
            prop_assert!((a - b).abs() <= base.tol * a.abs().max(1.0));
        }
    }

    #[test]
    fn malliavin_derivative_counts_later_observations(
        t in 0.0f64..1.0, w in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let tc = TerminalCondition::parse("tanh@[T/3,2T/3,T]", 1.0).unwrap();
        let d = tc.malliavin_derivative(&w, t).unwrap();
        let s: f64 = w.iter().sum();
        let count = tc.obs_times().iter().filter(|&&ti| t <= ti).count() as f64;
        let slope = 1.0 - s.tanh().powi(2);
        prop_assert!((d - count * slope).abs() < 1e-12);
        prop_assert!(d.abs() <= tc.malliavin_bound() + 1e-12);
        prop_assert_eq!(tc.malliavin_derivative(&w, 1.5).unwrap(), 0.0);
    }

    #[test]
    fn constant_driver_shifts_the_expectation(c in -2.0f64..2.0, steps in 4usize..60) {
        let tc = sin_at(1.0);
        let cfg = SolverConfig::default();
        let lat = Lattice::new(1.0, steps).unwrap();
        let base = solve_backward(&parse_generator("zero").unwrap(), &tc, lat, &cfg).unwrap();
        let shifted = solve_backward(&parse_generator(&format!("const({c})")).unwrap(), &tc, lat, &cfg).unwrap();
        prop_assert!((shifted.y0 - base.y0 - c).abs() < 1e-12);
        for (za, zb) in base.z.iter().flatten().zip(shifted.z.iter().flatten()) {
            prop_assert!((za - zb).abs() < 1e-10);
        }
    }

    #[test]
    fn discrete_dynamics_hold(steps in 4usize..40, a in -1.0f64..1.0, gamma in -1.0f64..1.0) {
        let g = parse_generator(&format!("quad({gamma}, {a}, 0.1)")).unwrap();
        let tc = sin_at(1.0);
        let cfg = SolverConfig::default();
        let lat = Lattice::new(1.0, steps).unwrap();
        let sol = solve_backward(&g, &tc, lat, &cfg).unwrap();
        let dt = lat.dt();
        for i in 0..steps {
            for k in 0..=i {
                let (z, mean) = sol.one_step(i, k);
                let y = sol.y[i][k];
                prop_assert!((sol.z[i][k] - z).abs() < 1e-12);
                let rebuilt = mean + dt * g.eval(lat.time(i), y, z);
                prop_assert!((rebuilt - y).abs() <= 10.0 * cfg.fp_tol * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn tree_and_lattice_agree_on_markovian_terminals(steps in 2usize..12, gamma in -1.0f64..1.0) {
        let g = parse_generator(&format!("quad({gamma}, 0.2, 0)")).unwrap();
        let tc = sin_at(1.0);
        let cfg = SolverConfig::default();
        let lat = solve_backward(&g, &tc, Lattice::new(1.0, steps).unwrap(), &cfg).unwrap();
        let tree = solve_backward_tree(&g, &tc, steps, &cfg).unwrap();
        prop_assert!((lat.y0 - tree.y0).abs() < 1e-12);
        prop_assert!((lat.z_sup - tree.z_sup).abs() < 1e-12);
    }

    #[test]
    fn larger_driver_gives_larger_solution(shift in 0.0f64..2.0, steps in 10usize..80) {
        let tc = sin_at(1.0);
        let g = parse_generator("quad(1, 0.3, 0)").unwrap();
        let gp = parse_generator(&format!("quad(1, 0.3, {})", -shift)).unwrap();
        let r = verify_comparison(&g, &gp, &tc, &tc, Lattice::new(1.0, steps).unwrap(), &SolverConfig::default()).unwrap();
        prop_assert!(r.hypotheses_hold());
        prop_assert!(r.delta_y_min >= -1e-10);
        prop_assert!(r.gamma_min > 0.0);
    }

    #[test]
    fn lattice_bounds_hold_for_lipschitz_drivers(a in -1.0f64..1.0, b in -1.0f64..1.0, steps in 50usize..200) {
        let g = parse_generator(&format!("linear({a}, {b}, 0)")).unwrap();
        let tc = sin_at(1.0);
        let sol = solve_backward(&g, &tc, Lattice::new(1.0, steps).unwrap(), &SolverConfig::default()).unwrap();
        let l = g.lipschitz().max(tc.malliavin_bound()).max(tc.sup_bound().unwrap());
        prop_assert!(check_solution_bounds(&sol, l).passed());
    }

    #[test]
    fn hermite_rule_integrates_polynomials(points in 4usize..300, degree in 0u32..4) {
        let (x, w) = gauss_hermite(points).unwrap();
        let k = 2 * degree;
        // int x^{2m} e^{-x^2} dx = Gamma(m + 1/2)
        let exact: f64 = std::f64::consts::PI.sqrt() * (1..=degree).map(|j| (2 * j - 1) as f64 / 2.0).product::<f64>();
        let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k as i32)).sum();
        prop_assert!((got - exact).abs() < 1e-11 * exact.max(1.0), "{points} {k}: {got} vs {exact}");
    }
}

#[test]
fn convolved_generators_are_pure() {
    let g = parse_generator("quad(1)").unwrap();
    let c = convolve(&g, PenaltySpec::new(Direction::Sup, Penalty::QuadraticPenalty, 5.0), opt()).unwrap();
    let first: Vec<u64> = (0..50).map(|i| c.eval(0.0, 0.1, i as f64 * 0.1 - 2.5).to_bits()).collect();
    let again: Vec<u64> = (0..50).map(|i| c.eval(0.0, 0.1, i as f64 * 0.1 - 2.5).to_bits()).collect();
    assert_eq!(first, again);
}
