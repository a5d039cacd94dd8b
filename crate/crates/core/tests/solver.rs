use carnot_homog::environment::{EnvConfig, Environment, ModelParams};
use carnot_homog::solver::{check_continuity_estimates, l_eps, mu_q, ActionProblem, SolverConfig};
use carnot_homog::verify::{continuity_cases, rescaling_identity};
use carnot_homog::{Error, GroupSpec};

fn free_env(g: &GroupSpec, v0: f64) -> Environment {
    Environment::new(g, &EnvConfig::constant(1.0, v0)).unwrap()
}

fn quadratic() -> ModelParams {
    ModelParams::new(2.0).unwrap()
}

#[test]
fn straight_lines_are_optimal_in_a_free_environment() {
    for g in [GroupSpec::heisenberg1(), GroupSpec::engel()] {
        for &(eps, v0) in &[(1.0, 0.0), (0.25, 0.0), (0.5, 0.3)] {
            let env = free_env(&g, v0);
            let q = [0.8, -0.4];
            let t = 1.5;
            let x = g.point(&vec![0.2; g.dim()]).unwrap();
            let y = g.compose(&x, &g.x_line_e(&q, t));
            let mut p = ActionProblem::new(&env, &quadratic(), eps, x, y, t);
            p.n_pieces = 6;
            let r = l_eps(&p, &SolverConfig::default()).unwrap();
            let expected = t * 0.5 * (0.64 + 0.16) - v0 * t;
            assert!((r.value - expected).abs() < 1e-7, "{}: eps {eps}: {} vs {expected}", g.name(), r.value);
            assert!(r.diagnostics_pass());
        }
    }
}

#[test]
fn vertical_target_costs_a_regular_polygon() {
    let g = GroupSpec::heisenberg1();
    let env = free_env(&g, 0.0);
    let z = 0.5;
    for n in [6usize, 12] {
        let mut p = ActionProblem::new(&env, &quadratic(), 1.0, g.identity(), g.point(&[0.0, 0.0, z]).unwrap(), 1.0);
        p.n_pieces = n;
        let cfg = SolverConfig { multi_starts: 8, ..SolverConfig::default() };
        let r = l_eps(&p, &cfg).unwrap();
        let nf = n as f64;
        let expected = 2.0 * nf * (std::f64::consts::PI / nf).tan() * z;
        assert!((r.value - expected).abs() < 1e-5 * expected, "n={n}: {} vs {expected}", r.value);
        // The smooth optimum 2π|z| is a lower bound for every discretization.
        assert!(r.value >= 2.0 * std::f64::consts::PI * z);
    }
}

#[test]
fn x_line_action_matches_rescaled_problem() {
    let g = GroupSpec::heisenberg1();
    let env = Environment::new(&g, &EnvConfig::product(0.5).with_seed(4)).unwrap();
    let recs = rescaling_identity(&env, &quadratic(), 4, 9, &SolverConfig::default()).unwrap();
    for r in &recs {
        assert!(r.rel <= 1e-9, "{r:?}");
    }
}

#[test]
fn mu_is_additive_lower_bound_on_splits() {
    // μ over [0, 2] is at most the sum over [0, 1] and [1, 2]: concatenating
    // the two witnesses is admissible for the long problem.
    let g = GroupSpec::heisenberg1();
    let env = Environment::new(&g, &EnvConfig::product(0.5).with_seed(2)).unwrap();
    let m = quadratic();
    let q = [0.6, 0.3];
    let cfg = SolverConfig::default();
    let a = mu_q(&env, &m, &q, 0.0, 1.0, 4, &cfg, &[], 1).unwrap();
    let b = mu_q(&env, &m, &q, 1.0, 2.0, 4, &cfg, &[], 2).unwrap();
    let whole = mu_q(&env, &m, &q, 0.0, 2.0, 8, &cfg, &[a.control.concat(&b.control)], 3).unwrap();
    assert!(whole.value <= a.value + b.value + 1e-9, "{} > {} + {}", whole.value, a.value, b.value);
}

#[test]
fn continuity_inequalities_hold_on_a_small_batch() {
    let g = GroupSpec::heisenberg1();
    let env = Environment::new(&g, &EnvConfig::product(0.5).with_seed(1)).unwrap();
    let cases = continuity_cases(&g, 2, &[1.0, 0.5], 17);
    let rep = check_continuity_estimates(&env, &quadratic(), &cases, &[0.05, 0.1], 8, &SolverConfig::default()).unwrap();
    assert_eq!(rep.violations, 0, "{:?}", rep.records.iter().filter(|r| !r.pass).collect::<Vec<_>>());
    assert!(!rep.records.is_empty());
}

#[test]
fn solves_are_deterministic() {
    let g = GroupSpec::engel();
    let env = Environment::new(&g, &EnvConfig::cells(0.4).with_seed(8)).unwrap();
    let x = g.point(&[0.1, 0.2, -0.1, 0.3]).unwrap();
    let y = g.point(&[0.5, -0.3, 0.2, 0.0]).unwrap();
    let mut p = ActionProblem::new(&env, &ModelParams::new(3.0).unwrap(), 0.5, x, y, 1.0);
    p.n_pieces = 6;
    p.seed = 99;
    let cfg = SolverConfig::default();
    let a = l_eps(&p, &cfg).unwrap();
    let b = l_eps(&p, &cfg).unwrap();
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.control, b.control);
}

#[test]
fn bad_problems_are_input_errors() {
    let g = GroupSpec::heisenberg1();
    let env = free_env(&g, 0.0);
    let e = g.identity();
    for (eps, t) in [(0.0, 1.0), (1.0, 0.0), (f64::NAN, 1.0), (1.0, -2.0)] {
        let p = ActionProblem::new(&env, &quadratic(), eps, e, e, t);
        assert!(matches!(l_eps(&p, &SolverConfig::default()), Err(Error::Input(_))), "eps {eps} t {t}");
    }
    let cfg = SolverConfig { substeps: 0, ..SolverConfig::default() };
    assert!(cfg.validate().is_err());
    assert!(mu_q(&env, &quadratic(), &[1.0], 0.0, 1.0, 4, &SolverConfig::default(), &[], 0).is_err());
    assert!(mu_q(&env, &quadratic(), &[1.0, 0.0], 1.0, 1.0, 4, &SolverConfig::default(), &[], 0).is_err());
}
