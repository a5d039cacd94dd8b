//! Invariant suites with fixed seeds, grouped by scope.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::environment::{certify_growth, check_l6, lagrangian, EnvConfig, Environment, ModelParams};
use crate::error::{Error, Result};
use crate::group::{GroupPoint, GroupSpec};
use crate::homog::{
    alternating_path, check_midpoint_convexity, duality_round_trip, estimate_lbar, family_member, hamiltonian_of, LbarConfig,
};
use crate::legendre::{convexify_with, slope_grid, Grid, GridFunction};
use crate::paths::{cc_bracket, integrate, norm, CcBudget, Control};
use crate::rng::Stream;
use crate::solver::{
    check_continuity_estimates, l_eps, mu_q, problem_seed, ActionProblem, ContinuityCase, SolverConfig,
};
use crate::stats::{ks_critical_1pct, ks_statistic};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Group,
    Paths,
    Env,
    Solver,
    Homog,
    All,
}

impl Scope {
    pub const ALL: [Scope; 6] = [Scope::Group, Scope::Paths, Scope::Env, Scope::Solver, Scope::Homog, Scope::All];

    fn name(self) -> &'static str {
        match self {
            Scope::Group => "group",
            Scope::Paths => "paths",
            Scope::Env => "env",
            Scope::Solver => "solver",
            Scope::Homog => "homog",
            Scope::All => "all",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scope::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown scope `{s}`; expected group, paths, env, solver, homog or all")))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub scope: String,
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn push(&mut self, scope: Scope, name: &str, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check { scope: scope.to_string(), name: name.into(), pass, detail: detail.into() });
    }

    fn push_result(&mut self, scope: Scope, name: &str, r: Result<(bool, String)>) {
        match r {
            Ok((pass, detail)) => self.push(scope, name, pass, detail),
            Err(e) => self.push(scope, name, false, format!("error: {e}")),
        }
    }
}

/// `|a − b| ≤ tol · max(1, |a|, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

fn points_close(a: &GroupPoint, b: &GroupPoint, tol: f64) -> bool {
    a.coords().iter().zip(b.coords()).all(|(x, y)| close(*x, *y, tol))
}

/// Failure counts for the algebraic identities of a group.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ExactnessReport {
    pub cases: usize,
    pub associativity: usize,
    pub identity: usize,
    pub inverse: usize,
    pub dilation: usize,
    pub homogeneity: usize,
}

impl ExactnessReport {
    pub fn failures(&self) -> usize {
        self.associativity + self.identity + self.inverse + self.dilation + self.homogeneity
    }
}

/// Group axioms, dilation automorphism and norm homogeneity on random points.
pub fn group_exactness(g: &GroupSpec, cases: usize, seed: u64, tol: f64) -> ExactnessReport {
    let mut rng = Stream::new(seed, "group-exactness", 0);
    let e = g.identity();
    let mut r = ExactnessReport { cases, ..Default::default() };
    for _ in 0..cases {
        let x = g.random_point(&mut rng, 1.5);
        let y = g.random_point(&mut rng, 1.5);
        let z = g.random_point(&mut rng, 1.5);
        let lam = rng.range(0.2, 5.0);
        if !points_close(&g.compose(&g.compose(&x, &y), &z), &g.compose(&x, &g.compose(&y, &z)), tol) {
            r.associativity += 1;
        }
        if !points_close(&g.compose(&x, &e), &x, tol) || !points_close(&g.compose(&e, &x), &x, tol) {
            r.identity += 1;
        }
        let xi = g.inverse(&x);
        if !points_close(&g.compose(&x, &xi), &e, tol) || !points_close(&g.compose(&xi, &x), &e, tol) {
            r.inverse += 1;
        }
        let d = |p: &GroupPoint| g.dilate(lam, p).expect("positive factor");
        if !points_close(&d(&g.compose(&x, &y)), &g.compose(&d(&x), &d(&y)), tol) {
            r.dilation += 1;
        }
        if !close(g.hnorm(&d(&x)), lam * g.hnorm(&x), tol) {
            r.homogeneity += 1;
        }
    }
    r
}

/// `l_q(Ct) = δ_C l_q(t)` on random `(q, C, t)`; returns failures and worst relative error.
pub fn x_line_scaling(g: &GroupSpec, cases: usize, seed: u64, tol: f64) -> (usize, f64) {
    let mut rng = Stream::new(seed, "x-line-scaling", 0);
    let mut fails = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let q: Vec<f64> = (0..g.rank()).map(|_| rng.range(-2.0, 2.0)).collect();
        let c = rng.range(0.1, 4.0);
        let t = rng.range(0.05, 2.0);
        let a = g.x_line_e(&q, c * t);
        let b = g.dilate(c, &g.x_line_e(&q, t)).expect("positive factor");
        for (x, y) in a.coords().iter().zip(b.coords()) {
            worst = worst.max((x - y).abs() / 1f64.max(x.abs()).max(y.abs()));
        }
        if !points_close(&a, &b, tol) {
            fails += 1;
        }
    }
    (fails, worst)
}

/// One comparison `L^ε(y, e, t)` against `ε μ_q([0, t/ε))`.
#[derive(Clone, Debug, Serialize)]
pub struct RescalingRecord {
    pub epsilon: f64,
    pub t: f64,
    pub q: Vec<f64>,
    pub l_eps: f64,
    pub scaled_mu: f64,
    pub rel: f64,
}

/// Random instances of the rescaling identity with matched discretizations.
pub fn rescaling_identity(env: &Environment, model: &ModelParams, cases: usize, seed: u64, cfg: &SolverConfig) -> Result<Vec<RescalingRecord>> {
    let g = env.group();
    let mut rng = Stream::new(seed, "rescaling-identity", 0);
    let ladder = [1.0, 0.5, 0.25];
    let mut out = Vec::with_capacity(cases);
    for k in 0..cases {
        let q: Vec<f64> = (0..g.rank()).map(|_| rng.range(-1.5, 1.5)).collect();
        let t = rng.range(0.5, 1.5);
        let eps = ladder[(rng.next_u64() % 3) as usize];
        let y = g.x_line_e(&q, t);
        let n = 8;
        let pseed = problem_seed(seed, &[k as u64]);
        let mut p = ActionProblem::new(env, model, eps, g.identity(), y, t);
        p.n_pieces = n;
        p.seed = pseed;
        let a = l_eps(&p, cfg)?.value;
        let b = eps * mu_q(env, model, &q, 0.0, t / eps, n, cfg, &[], pseed)?.value;
        let rel = (a - b).abs() / 1f64.max(a.abs()).max(b.abs());
        out.push(RescalingRecord { epsilon: eps, t, q, l_eps: a, scaled_mu: b, rel });
    }
    Ok(out)
}

/// Random base problems for the continuity suite.
pub fn continuity_cases(g: &GroupSpec, per_epsilon: usize, epsilons: &[f64], seed: u64) -> Vec<ContinuityCase> {
    let mut rng = Stream::new(seed, "continuity-cases", 0);
    let mut out = Vec::new();
    for &epsilon in epsilons {
        for _ in 0..per_epsilon {
            out.push(ContinuityCase {
                epsilon,
                x: g.random_point(&mut rng, 0.8),
                y: g.random_point(&mut rng, 0.8),
                t: rng.range(0.5, 1.2),
                v: g.random_point(&mut rng, 0.3),
                z: g.random_point(&mut rng, 0.8),
                s: rng.range(0.3, 0.8),
            });
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct KsRecord {
    pub x: GroupPoint,
    pub v: GroupPoint,
    pub statistic: f64,
    pub critical: f64,
    pub pass: bool,
}

/// Two-sample KS test of `V(x)` against `V(x∘v)` across family members.
pub fn stationarity_ks(g: &GroupSpec, base: &EnvConfig, n_seeds: usize, pairs: usize, seed: u64) -> Result<Vec<KsRecord>> {
    let mut rng = Stream::new(seed, "stationarity-pairs", 0);
    let envs: Vec<Environment> = (0..n_seeds).map(|s| Environment::new(g, &family_member(base, s))).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let x = g.random_point(&mut rng, 3.0);
        let v = g.random_point(&mut rng, 3.0);
        let xv = g.compose(&x, &v);
        let a: Vec<f64> = envs.iter().map(|e| e.sample_v(&x)).collect();
        let b: Vec<f64> = envs.iter().map(|e| e.sample_v(&xv)).collect();
        let statistic = ks_statistic(&a, &b);
        let critical = ks_critical_1pct(a.len(), b.len());
        out.push(KsRecord { x, v, statistic, critical, pass: statistic < critical });
    }
    Ok(out)
}

fn group_suite(g: &GroupSpec, seed: u64, r: &mut VerifyReport) {
    let s = Scope::Group;
    for name in crate::group::BUILTIN_GROUPS {
        let b = GroupSpec::by_name(name).expect("built-in group");
        let fails = b.check_law(200, seed);
        r.push(s, &format!("{name}: structure"), fails.is_empty(), fails.join("; "));
    }
    let e = group_exactness(g, 1000, seed, 1e-12);
    r.push(s, "axioms, dilation and norm homogeneity", e.failures() == 0, format!("{e:?}"));
    let (fails, worst) = x_line_scaling(g, 500, seed, 1e-10);
    r.push(s, "x-line scaling", fails == 0, format!("{fails} failures, worst relative error {worst:.2e}"));
    let mut rng = Stream::new(seed, "verify-quasi-triangle", 0);
    let mut ratio: f64 = 0.0;
    for _ in 0..500 {
        let x = g.random_point(&mut rng, 1.0);
        let y = g.random_point(&mut rng, 1.0);
        let rhs = g.hnorm(&x) + g.hnorm(&y);
        if rhs > 0.0 {
            ratio = ratio.max(g.hnorm(&g.compose(&x, &y)) / rhs);
        }
    }
    r.push(s, "quasi-triangle inequality", ratio.is_finite() && ratio < 4.0, format!("fitted constant {ratio:.4}"));
}

fn paths_suite(g: &GroupSpec, seed: u64, r: &mut VerifyReport) {
    let s = Scope::Paths;
    let mut rng = Stream::new(seed, "verify-paths", 0);
    let m = g.rank();
    let vels: Vec<f64> = (0..6 * m).map(|_| rng.normal()).collect();
    let c = Control::uniform(&vels, m, 1.5);
    let start = g.random_point(&mut rng, 1.0);
    let res = integrate(g, &start, &c, 8);
    r.push_result(
        s,
        "integration matches exact increments",
        res.map(|p| {
            let exact = c.endpoint(g, &start);
            (points_close(&p.end(), &exact, 1e-10), format!("integration error estimate {:.2e}", p.integration_error))
        }),
    );
    let z = g.random_point(&mut rng, 1.0);
    let moved = c.endpoint(g, &g.compose(&z, &start));
    r.push(
        s,
        "left-translation invariance",
        points_close(&moved, &g.compose(&z, &c.endpoint(g, &start)), 1e-11),
        "",
    );
    let lam = 1.7;
    let dil = c.dilate(lam);
    let ok = points_close(
        &dil.endpoint(g, &g.identity()),
        &g.dilate(lam, &c.endpoint(g, &g.identity())).expect("positive"),
        1e-10,
    ) && close(dil.length(), lam * c.length(), 1e-12);
    r.push(s, "dilation of controls", ok, "");
    let ok = c.time_rescale(2.5).map(|t| close(t.length(), c.length(), 1e-12) && points_close(&t.endpoint(g, &start), &c.endpoint(g, &start), 1e-11));
    r.push(s, "time rescaling keeps length and endpoint", ok.unwrap_or(false), "");
    let mut worst = 0.0f64;
    let mut bad = 0;
    for _ in 0..30 {
        let x = g.random_point(&mut rng, 1.5);
        let y = g.random_point(&mut rng, 1.5);
        match cc_bracket(g, &x, &y, CcBudget::NONE) {
            Ok(b) => {
                let end = b.witness.endpoint(g, &y);
                worst = worst.max(end.max_abs_diff(&x));
                if !(b.lower <= b.upper + 1e-12 && end.max_abs_diff(&x) < 1e-9) {
                    bad += 1;
                }
            }
            Err(_) => bad += 1,
        }
    }
    r.push(s, "connector witnesses reach the target", bad == 0, format!("{bad} failures, worst endpoint gap {worst:.2e}"));
}

fn env_suite(g: &GroupSpec, seed: u64, r: &mut VerifyReport) {
    let s = Scope::Env;
    let model = ModelParams { beta: 2.0 };
    for cfg in [EnvConfig::product(0.5), EnvConfig::cells(0.5)] {
        let kind = format!("{:?}", cfg.kind).to_lowercase();
        let env = match Environment::new(g, &cfg.with_seed(seed)) {
            Ok(e) => e,
            Err(e) => {
                r.push(s, &format!("{kind}: construction"), false, e.to_string());
                continue;
            }
        };
        let twin = Environment::new(g, &cfg.with_seed(seed)).expect("same config");
        let mut rng = Stream::new(seed, "verify-env", 0);
        let b = env.bounds();
        let mut pure = true;
        let mut bounded = true;
        for _ in 0..500 {
            let x = g.random_point(&mut rng, 3.0);
            let (v, a) = (env.sample_v(&x), env.sample_a(&x));
            pure &= v.to_bits() == twin.sample_v(&x).to_bits() && a.to_bits() == twin.sample_a(&x).to_bits();
            bounded &= v.abs() <= b.v_max && a >= b.a_min && a <= b.a_max;
        }
        r.push(s, &format!("{kind}: samples are pure functions of (seed, x)"), pure, "");
        r.push(s, &format!("{kind}: samples respect declared bounds"), bounded, format!("{b:?}"));
        r.push_result(
            s,
            &format!("{kind}: growth certificate"),
            certify_growth(&env, &model, 2000).map(|c| (true, format!("C1={} offset={}", c.c1, c.offset))),
        );
        let radius = 2.0;
        let lip = env.lipschitz_h(radius);
        let mut worst: f64 = 0.0;
        for _ in 0..500 {
            let mut x = g.random_point(&mut rng, 1.5);
            let h = norm(&x.coords()[..g.rank()]);
            if h > radius {
                for v in x.coords_mut().iter_mut().take(g.rank()) {
                    *v *= radius / h;
                }
            }
            let sc = rng.range(1e-3, 0.3);
            let w = g.random_point(&mut rng, sc);
            let y = g.compose(&x, &w);
            let d = g.hdist(&y, &x);
            if d > 0.0 && d <= 1.0 {
                worst = worst.max((env.sample_v(&y) - env.sample_v(&x)).abs() / d);
            }
        }
        r.push(s, &format!("{kind}: Lipschitz bound"), worst <= lip, format!("observed {worst:.3} bound {lip:.3}"));
    }
    let env = Environment::new(g, &EnvConfig::product(0.5).with_seed(seed)).expect("valid");
    let l6 = check_l6(&env, &model, 300, seed);
    r.push(s, "Lagrangian homogeneity estimate", l6.violations.is_empty(), format!("fitted C={:.3}", l6.fitted_c));
    let x = g.identity();
    let q = vec![0.5; g.rank()];
    let l = lagrangian(&env, &model, &x, &q);
    r.push(s, "Lagrangian is finite", l.is_finite(), format!("L(e, q)={l}"));
    r.push_result(
        s,
        "stationarity of the product field",
        stationarity_ks(g, &EnvConfig::product(0.5), 400, 3, seed).map(|recs| {
            let pass = recs.iter().all(|k| k.pass);
            let worst = recs.iter().map(|k| k.statistic / k.critical).fold(0.0, f64::max);
            (pass, format!("worst statistic/critical {worst:.3}"))
        }),
    );
}

fn solver_suite(g: &GroupSpec, seed: u64, r: &mut VerifyReport) {
    let s = Scope::Solver;
    let model = ModelParams { beta: 2.0 };
    let cfg = SolverConfig { master_seed: seed, ..SolverConfig::default() };
    let env = Environment::new(g, &EnvConfig::product(0.5).with_seed(seed)).expect("valid");
    let cases = continuity_cases(g, 2, &[1.0, 0.5], seed);
    r.push_result(
        s,
        "continuity and triangle inequalities",
        check_continuity_estimates(&env, &model, &cases, &[0.1, 0.2], 8, &cfg).map(|rep| {
            let bad: Vec<String> = rep.records.iter().filter(|x| !x.pass).map(|x| format!("{}#{}", x.name, x.case)).collect();
            (rep.violations == 0, format!("{} records; violations: {}", rep.records.len(), bad.join(", ")))
        }),
    );
    r.push_result(
        s,
        "rescaling identity",
        rescaling_identity(&env, &model, 3, seed, &cfg).map(|recs| {
            let worst = recs.iter().map(|x| x.rel).fold(0.0, f64::max);
            (worst <= 1e-9, format!("worst relative gap {worst:.2e}"))
        }),
    );
    let x = g.random_point(&mut Stream::new(seed, "verify-solver", 0), 0.8);
    let mut p = ActionProblem::new(&env, &model, 0.5, g.identity(), x, 1.0);
    p.n_pieces = 8;
    let run = |p: &ActionProblem| l_eps(p, &cfg);
    r.push_result(
        s,
        "determinism",
        (|| {
            let a = run(&p)?;
            let b = run(&p)?;
            Ok((a.value.to_bits() == b.value.to_bits(), format!("value {}", a.value)))
        })(),
    );
    r.push_result(
        s,
        "witness re-evaluation on a finer grid",
        (|| {
            let a = run(&p)?;
            let fine_cfg = SolverConfig { substeps: 4 * cfg.substeps, ..cfg.clone() };
            let mut q = p.clone();
            q.n_pieces = a.control.len();
            let b = crate::solver::l_eps_evaluate(&q, &fine_cfg, &a.control)?;
            let tol = 1e-3 * (1.0 + a.value.abs());
            Ok(((b - a.value).abs() <= tol, format!("coarse {} fine {b}", a.value)))
        })(),
    );
    r.push_result(
        s,
        "refinement does not increase the value",
        (|| {
            let a = run(&p)?;
            let mut q = p.clone();
            q.n_pieces = 2 * p.n_pieces;
            let b = crate::solver::l_eps_seeded(&q, &cfg, &[a.control.clone()])?;
            Ok((b.value <= a.value + cfg.slack * (1.0 + a.value.abs()), format!("{} -> {}", a.value, b.value)))
        })(),
    );
}

fn homog_suite(g: &GroupSpec, seed: u64, r: &mut VerifyReport) {
    let s = Scope::Homog;
    let model = ModelParams { beta: 2.0 };
    let cfg = SolverConfig { master_seed: seed, multi_starts: 1, ..SolverConfig::default() };
    let lcfg = LbarConfig { q_nodes: 5, n_seeds: 2, t_ladder: vec![1.0, 2.0], ..LbarConfig::default() };
    r.push_result(
        s,
        "constant environment gives the closed form",
        estimate_lbar(g, &EnvConfig::constant(1.0, 0.0), &model, &lcfg, &cfg).map(|t| {
            let worst = (0..t.q_grid.len())
                .map(|k| (t.values[k] - 0.5 * norm(&t.q_grid.node(k)).powi(2)).abs())
                .fold(0.0, f64::max);
            (worst <= 1e-6, format!("worst error {worst:.2e}"))
        }),
    );
    let small = LbarConfig { q_nodes: 3, n_seeds: 2, t_ladder: vec![1.0, 2.0], ..LbarConfig::default() };
    r.push_result(
        s,
        "superlinearity of a small random table",
        estimate_lbar(g, &EnvConfig::product(0.5).with_seed(seed), &model, &small, &cfg).map(|t| {
            let v = t.superlinearity_violations(1e-9);
            (v.is_empty(), format!("violating nodes {v:?}"))
        }),
    );
    let quad = GridFunction::sample(Grid::cube(2, 2.0, 9).expect("valid"), |q| 0.5 * (q[0] * q[0] + q[1] * q[1]));
    let rt = duality_round_trip(&quad, 65);
    r.push(s, "duality round trip", rt.pass, format!("error {:.2e} bound {:.2e}", rt.max_error, rt.bound));
    let mut bumped = quad.clone();
    bumped.values[40] += 0.4;
    let dual = slope_grid(&bumped, 65);
    let c1 = convexify_with(&bumped, &dual);
    let c2 = convexify_with(&c1, &dual);
    let gap = c1.values.iter().zip(&c2.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let below = c1.values.iter().zip(&bumped.values).all(|(a, b)| a <= b);
    r.push(s, "convexification is idempotent and below the data", gap < 1e-12 && below, format!("gap {gap:.2e}"));
    r.push_result(
        s,
        "effective Hamiltonian of the quadratic",
        hamiltonian_of(&GridFunction::sample(Grid::cube(2, 3.0, 61).expect("valid"), |q| 0.5 * (q[0] * q[0] + q[1] * q[1])), 9)
            .map(|h| {
                let worst = (0..h.dual.grid.len())
                    .map(|k| {
                        let p = h.dual.grid.node(k);
                        (h.dual.values[k] - 0.5 * (p[0] * p[0] + p[1] * p[1])).abs()
                    })
                    .fold(0.0, f64::max);
                (worst <= 2.5e-3 + 1e-12, format!("worst error {worst:.2e}"))
            }),
    );
    let mut rng = Stream::new(seed, "verify-alternating", 0);
    let p: Vec<f64> = (0..g.rank()).map(|_| rng.range(-2.0, 2.0)).collect();
    let q: Vec<f64> = (0..g.rank()).map(|_| rng.range(-2.0, 2.0)).collect();
    let a = alternating_path(g, &p, &q, &[4, 8, 16]);
    r.push(s, "alternating path reaches the midpoint line at first order", a.pass, format!("fitted exponent {:.3}", a.slope));
    r.push_result(
        s,
        "midpoint convexity in a constant environment",
        estimate_lbar(g, &EnvConfig::constant(1.0, 0.0), &model, &lcfg, &cfg).map(|t| {
            let rep = check_midpoint_convexity(g, &t, 20, seed, 1e-9);
            (rep.violations == 0, format!("{} violations", rep.violations))
        }),
    );
}

/// Run the suites selected by `scope` on `g`.
pub fn verify(g: &GroupSpec, scope: Scope, seed: u64) -> VerifyReport {
    let mut r = VerifyReport::default();
    let want = |s: Scope| scope == Scope::All || scope == s;
    if want(Scope::Group) {
        group_suite(g, seed, &mut r);
    }
    if want(Scope::Paths) {
        paths_suite(g, seed, &mut r);
    }
    if want(Scope::Env) {
        env_suite(g, seed, &mut r);
    }
    if want(Scope::Solver) {
        solver_suite(g, seed, &mut r);
    }
    if want(Scope::Homog) {
        homog_suite(g, seed, &mut r);
    }
    r
}
