//! Action minimization over piecewise-constant horizontal controls.
//!
//! Problems are solved in canonical form: with `η(τ) = δ_{1/ε}ξ(ετ)` the
//! rescaled action `∫₀ᵗ L(δ_{1/ε}ξ, α) ds` equals `ε ∫₀^{t/ε} L(η, α) dτ`,
//! so every problem reduces to an `ε = 1` problem on a longer horizon.

mod checks;
mod hopf_lax;
pub(crate) mod optimize;

use serde::{Deserialize, Serialize};

pub use checks::{check_continuity_estimates, ContinuityCase, ContinuityReport, InequalityRecord, ModulusRecord};
pub use hopf_lax::{ball_radius, hopf_lax, u_eps, Datum, HopfLaxResult, YGridConfig};

use crate::environment::{certify_growth, Environment, GrowthCertificate, Lagrangian, ModelLagrangian, ModelParams};
use crate::error::{input, Error, Result};
use crate::group::{GroupPoint, GroupSpec};
use crate::paths::{cc_lower, raw_connector, CcBudget, Control};
use crate::rng::{hash_words, Stream};
use optimize::{Anchor, Candidate, Evaluated, OptSettings, Problem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub n_pieces: usize,
    /// Quadrature substeps per control piece.
    pub substeps: usize,
    /// Optimized starts per problem.
    pub multi_starts: usize,
    pub max_iters: usize,
    /// Accepted endpoint residual in `hdist`.
    pub constraint_tol: f64,
    pub rel_tol: f64,
    pub fd_step: f64,
    /// Fixed cap on `|α|`; derived from the growth certificate when absent.
    pub control_cap: Option<f64>,
    /// Factor in the derived cap `κ(1 + ℓ/t)`; defaults to `2·C1`.
    pub kappa: Option<f64>,
    /// Relative size of random perturbation starts.
    pub perturbation: f64,
    pub master_seed: u64,
    /// Relative slack allowed in diagnostic inequalities.
    pub slack: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_pieces: 16,
            substeps: 4,
            multi_starts: 4,
            max_iters: 200,
            constraint_tol: 1e-6,
            rel_tol: 1e-10,
            fd_step: 1e-7,
            control_cap: None,
            kappa: None,
            perturbation: 0.3,
            master_seed: 0,
            slack: 1e-7,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pieces == 0 || self.substeps == 0 || self.multi_starts == 0 {
            return input("n_pieces, substeps and multi_starts must be positive");
        }
        if !(self.constraint_tol > 0.0 && self.rel_tol >= 0.0 && self.fd_step > 0.0) {
            return input("tolerances must be positive");
        }
        if let Some(c) = self.control_cap {
            if !(c > 0.0) {
                return input("control_cap must be positive");
            }
        }
        Ok(())
    }
}

/// Minimize the rescaled action from `start` to `target` over time `horizon`.
#[derive(Clone, Debug)]
pub struct ActionProblem {
    pub env: Environment,
    pub model: ModelParams,
    pub epsilon: f64,
    pub start: GroupPoint,
    pub target: GroupPoint,
    pub horizon: f64,
    pub n_pieces: usize,
    pub control_cap: Option<f64>,
    pub seed: u64,
}

impl ActionProblem {
    pub fn new(env: &Environment, model: &ModelParams, epsilon: f64, start: GroupPoint, target: GroupPoint, horizon: f64) -> Self {
        Self {
            env: env.clone(),
            model: *model,
            epsilon,
            start,
            target,
            horizon,
            n_pieces: 16,
            control_cap: None,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        let g = self.env.group();
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return input("epsilon must be positive");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return input("horizon must be positive");
        }
        if self.n_pieces == 0 {
            return input("n_pieces must be at least 1");
        }
        if let Some(c) = self.control_cap {
            if !(c > 0.0) {
                return input("control_cap must be positive");
            }
        }
        g.point(self.start.coords())?;
        g.point(self.target.coords())?;
        Ok(())
    }
}

/// One checked inequality `lhs ≤ rhs + slack`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BoundCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
}

impl BoundCheck {
    pub fn new(name: &str, lhs: f64, rhs: f64, slack: f64) -> Self {
        Self { name: name.to_string(), lhs, rhs, slack, pass: lhs <= rhs + slack }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ActionResult {
    /// Upper bound on the infimum: the action of `control`.
    pub value: f64,
    /// Witness in original time.
    pub control: Control,
    pub endpoint_residual: f64,
    pub control_cap: f64,
    /// Every witness velocity is strictly below the cap.
    pub interior: bool,
    pub cc_lower: f64,
    /// Length of the connector witness, an upper bound on `d_CC`.
    pub connector_length: f64,
    pub certificate: GrowthCertificate,
    pub diagnostics: Vec<BoundCheck>,
    pub starts_accepted: usize,
}

impl ActionResult {
    pub fn diagnostics_pass(&self) -> bool {
        self.diagnostics.iter().all(|d| d.pass)
    }
}

/// Problem data independent of the cost.
pub(crate) struct Constrained<'a> {
    pub g: &'a GroupSpec,
    pub lag: &'a dyn Lagrangian,
    pub cert: GrowthCertificate,
    pub epsilon: f64,
    pub start: GroupPoint,
    pub target: GroupPoint,
    pub horizon: f64,
    pub n_pieces: usize,
    pub cap: Option<f64>,
    pub seed: u64,
    pub cfg: &'a SolverConfig,
    /// Warm starts in original time.
    pub seeds: &'a [Control],
}

/// Smallest residual distinguishable from rounding at these coordinates.
pub(crate) fn residual_floor(g: &GroupSpec, pts: &[&GroupPoint]) -> f64 {
    let mut v = g.identity();
    for (i, c) in v.coords_mut().iter_mut().enumerate() {
        let s = pts.iter().map(|p| p[i].abs()).fold(0.0, f64::max);
        *c = 1e-14 * (1.0 + s);
    }
    g.hnorm(&v)
}

pub(crate) fn derived_cap(cfg: &SolverConfig, cap: Option<f64>, cert: &GrowthCertificate, ell: f64, t: f64) -> f64 {
    if let Some(c) = cap.or(cfg.control_cap) {
        return c;
    }
    let kappa = cfg.kappa.unwrap_or(2.0 * cert.c1);
    kappa * (1.0 + ell / t)
}

fn push_unique(list: &mut Vec<Candidate>, c: Candidate) {
    if !list.iter().any(|x| x == &c) {
        list.push(c);
    }
}

pub(crate) fn perturb(c: &Candidate, m: usize, scale: f64, seed: u64, index: u64) -> Candidate {
    let mut rng = Stream::new(seed, "perturbation", index);
    let t = c.total_time();
    let mean_speed: f64 = c
        .durations
        .iter()
        .enumerate()
        .map(|(k, d)| d * crate::paths::norm(&c.alpha[k * m..(k + 1) * m]))
        .sum::<f64>()
        / t;
    let sigma = scale * (1.0 + mean_speed);
    let mut out = c.clone();
    for a in out.alpha.iter_mut() {
        *a += sigma * rng.normal();
    }
    out
}

pub(crate) fn solve_constrained(p: &Constrained<'_>) -> Result<ActionResult> {
    let g = p.g;
    let m = g.rank();
    let cfg = p.cfg;
    let eps = p.epsilon;
    let inv = 1.0 / eps;
    let y = g.scale(inv, &p.start);
    let x = g.scale(inv, &p.target);
    let big_t = p.horizon * inv;
    let n = p.n_pieces;

    let z = g.compose(&g.inverse(&y), &x);
    let conn = raw_connector(g, &z)?.constant_speed(big_t);
    let ell = conn.length();
    let cap = derived_cap(cfg, p.cap, &p.cert, ell, big_t);
    if conn.max_speed() > cap * (1.0 + 1e-12) {
        return Err(Error::Infeasible(format!(
            "no connector within control_cap {cap:.6} (connector speed {:.6}); optimal controls are bounded \
             in terms of the distance and horizon, so raise control_cap or kappa",
            conn.max_speed()
        )));
    }

    let floor = residual_floor(g, &[&y, &x]);
    let accept_tol = (cfg.constraint_tol * inv).max(10.0 * floor);
    let settings = OptSettings {
        max_iters: cfg.max_iters,
        rel_tol: cfg.rel_tol,
        fd_step: cfg.fd_step,
        restore_tol: floor,
        accept_tol,
    };
    let problem = Problem {
        g,
        lag: p.lag,
        sub: cfg.substeps,
        anchor: Anchor::Fixed { start: y, target: x },
        weight: 1.0,
        cap,
    };

    let seeds: Vec<Candidate> = p
        .seeds
        .iter()
        .filter(|s| !s.is_empty() && s.rank() == m)
        .map(|s| {
            // Canonical time stretches by 1/ε; velocities are unchanged.
            let mut c = Candidate::from_control(s);
            for d in c.durations.iter_mut() {
                *d *= inv;
            }
            c
        })
        .collect();

    let mut raw: Vec<Candidate> = Vec::new();
    push_unique(&mut raw, Candidate::from_control(&conn));
    for s in &seeds {
        push_unique(&mut raw, s.clone());
    }
    let mut starts: Vec<Candidate> = Vec::new();
    for s in &seeds {
        push_unique(&mut starts, s.clone());
    }
    for s in &seeds {
        let c = s.to_control(m, 1.0).resample_uniform(n);
        push_unique(&mut starts, Candidate::from_control(&c));
    }
    push_unique(&mut starts, Candidate::from_control(&conn.resample_uniform(n)));

    let mut best: Option<(Candidate, Evaluated)> = None;
    let mut accepted = 0usize;
    let mut consider = |c: Candidate, e: Evaluated, best: &mut Option<(Candidate, Evaluated)>| {
        if e.residual <= accept_tol && e.objective.is_finite() {
            accepted += 1;
            if best.as_ref().map_or(true, |b| e.objective < b.1.objective) {
                *best = Some((c, e));
            }
        }
    };
    for mut c in raw {
        let mut e = problem.evaluate(&c);
        if e.residual > accept_tol {
            problem.restore(&mut c, settings.restore_tol);
            e = problem.evaluate(&c);
        }
        consider(c, e, &mut best);
    }
    let n_deterministic = starts.len();
    for c in starts {
        if let Some((c, e)) = problem.optimize(c, &settings) {
            consider(c, e, &mut best);
        }
    }
    for k in 0..cfg.multi_starts.saturating_sub(n_deterministic) as u64 {
        let Some((b, _)) = best.as_ref() else { break };
        let c = perturb(b, m, cfg.perturbation, p.seed, k);
        if let Some((c, e)) = problem.optimize(c, &settings) {
            consider(c, e, &mut best);
        }
    }
    let Some((cand, ev)) = best else {
        return Err(Error::Infeasible(format!(
            "no start reached the target within tolerance {:.3e}",
            accept_tol * eps
        )));
    };

    let control = cand.to_control(m, eps);
    let value = eps * ev.action;
    let residual = eps * ev.residual;
    let lower = cc_lower(g, &p.target, &p.start);
    let ell_orig = eps * ell;
    let t = p.horizon;
    let cert = p.cert;
    let slack = cfg.slack * (1.0 + value.abs());
    let lam = cert.lambda;
    let lower_slack = slack + lam * (lower + residual).powf(lam - 1.0) * residual * t.powf(1.0 - lam) / cert.c1;
    let diagnostics = vec![
        BoundCheck::new("lower-bound", cert.action_lower_bound(lower, t), value, lower_slack),
        BoundCheck::new("upper-bound", value, cert.action_upper_bound(ell_orig, t), slack),
        BoundCheck::new("control-norm", control.power_integral(lam), cert.control_norm_bound(ell_orig, t), slack),
    ];
    Ok(ActionResult {
        value,
        interior: control.max_speed() < cap * (1.0 - 1e-9),
        control,
        endpoint_residual: residual,
        control_cap: cap,
        cc_lower: lower,
        connector_length: ell_orig,
        certificate: cert,
        diagnostics,
        starts_accepted: accepted,
    })
}

/// Certificate sample size used by the solver entry points.
const CERT_SAMPLES: usize = 256;

fn model_parts(env: &Environment, model: &ModelParams) -> Result<(ModelLagrangian, GrowthCertificate)> {
    let cert = certify_growth(env, model, CERT_SAMPLES)?;
    Ok((ModelLagrangian { env: env.clone(), model: *model }, cert))
}

/// Rescaled action `L^ε(x, y, t)` with `x = target`, `y = start`.
pub fn l_eps(problem: &ActionProblem, cfg: &SolverConfig) -> Result<ActionResult> {
    l_eps_seeded(problem, cfg, &[])
}

/// As [`l_eps`], with extra warm starts (original time) that are also
/// evaluated as-is, so the result never exceeds any of their actions.
pub fn l_eps_seeded(problem: &ActionProblem, cfg: &SolverConfig, seeds: &[Control]) -> Result<ActionResult> {
    problem.validate()?;
    cfg.validate()?;
    let (lag, cert) = model_parts(&problem.env, &problem.model)?;
    solve_constrained(&Constrained {
        g: problem.env.group(),
        lag: &lag,
        cert,
        epsilon: problem.epsilon,
        start: problem.start,
        target: problem.target,
        horizon: problem.horizon,
        n_pieces: problem.n_pieces,
        cap: problem.control_cap,
        seed: problem.seed,
        cfg,
        seeds,
    })
}

/// Rescaled action of a given control (original time) from `problem.start`,
/// with the quadrature of `cfg`; the endpoint is not checked.
pub fn l_eps_evaluate(problem: &ActionProblem, cfg: &SolverConfig, control: &Control) -> Result<f64> {
    problem.validate()?;
    cfg.validate()?;
    let (lag, _) = model_parts(&problem.env, &problem.model)?;
    let g = problem.env.group();
    if control.rank() != g.rank() {
        return input("control rank does not match the group");
    }
    let inv = 1.0 / problem.epsilon;
    let mut c = Candidate::from_control(control);
    for d in c.durations.iter_mut() {
        *d *= inv;
    }
    let p = Problem {
        g,
        lag: &lag,
        sub: cfg.substeps,
        anchor: Anchor::Fixed { start: g.scale(inv, &problem.start), target: g.scale(inv, &problem.target) },
        weight: 1.0,
        cap: f64::INFINITY,
    };
    Ok(problem.epsilon * p.evaluate(&c).action)
}

/// Constrained process `μ_q([a, b))` between points of the X-line through the identity.
#[allow(clippy::too_many_arguments)]
pub fn mu_q(
    env: &Environment,
    model: &ModelParams,
    q: &[f64],
    a: f64,
    b: f64,
    n_pieces: usize,
    cfg: &SolverConfig,
    seeds: &[Control],
    seed: u64,
) -> Result<ActionResult> {
    let g = env.group();
    if q.len() != g.rank() || q.iter().any(|v| !v.is_finite()) {
        return input(format!("q must be a finite vector of length {}", g.rank()));
    }
    if !(b > a) {
        return input("interval must satisfy b > a");
    }
    if n_pieces == 0 {
        return input("n_pieces must be at least 1");
    }
    cfg.validate()?;
    let (lag, cert) = model_parts(env, model)?;
    solve_constrained(&Constrained {
        g,
        lag: &lag,
        cert,
        epsilon: 1.0,
        start: g.x_line_e(q, a),
        target: g.x_line_e(q, b),
        horizon: b - a,
        n_pieces,
        cap: None,
        seed,
        cfg,
        seeds,
    })
}

/// Fixed-endpoint action for an arbitrary cost at `ε = 1`.
#[allow(clippy::too_many_arguments)]
pub fn action_with(
    g: &GroupSpec,
    lag: &dyn Lagrangian,
    cert: GrowthCertificate,
    start: &GroupPoint,
    target: &GroupPoint,
    horizon: f64,
    n_pieces: usize,
    cfg: &SolverConfig,
    seeds: &[Control],
    seed: u64,
) -> Result<ActionResult> {
    if !(horizon > 0.0 && horizon.is_finite()) || n_pieces == 0 {
        return input("horizon and n_pieces must be positive");
    }
    g.point(start.coords())?;
    g.point(target.coords())?;
    cfg.validate()?;
    solve_constrained(&Constrained {
        g,
        lag,
        cert,
        epsilon: 1.0,
        start: *start,
        target: *target,
        horizon,
        n_pieces,
        cap: None,
        seed,
        cfg,
        seeds,
    })
}

/// Connector for groups without a closed-form loop constructor.
pub(crate) fn numeric_connector(g: &GroupSpec, rem: &GroupPoint) -> Result<Control> {
    let lag = crate::environment::ModelLagrangian {
        env: Environment::new(g, &crate::environment::EnvConfig::constant(1.0, 0.0))?,
        model: ModelParams { beta: 2.0 },
    };
    let pieces = 2 * g.dim() + 2;
    let target = *rem;
    let problem = Problem {
        g,
        lag: &lag,
        sub: 1,
        anchor: Anchor::Fixed { start: g.identity(), target },
        weight: 1.0,
        cap: f64::INFINITY,
    };
    let scale = g.hnorm(rem).max(1e-12);
    let floor = residual_floor(g, &[rem]);
    for attempt in 0..16u64 {
        let mut rng = Stream::new(hash_words(&[attempt]), "numeric-connector", 0);
        let mut c = Candidate {
            durations: vec![1.0 / pieces as f64; pieces],
            alpha: (0..pieces * g.rank()).map(|_| scale * 4.0 * rng.normal()).collect(),
        };
        if problem.restore(&mut c, floor) <= 1e3 * floor.max(1e-12) {
            return Ok(c.to_control(g.rank(), 1.0));
        }
    }
    Err(Error::Budget("numeric connector search failed".into()))
}

/// Shorten a connector by minimizing energy on a uniform grid.
pub(crate) fn polish_connector(g: &GroupSpec, z: &GroupPoint, witness: &Control, budget: CcBudget) -> Option<Control> {
    let lag = EnergyLagrangian;
    let problem = Problem {
        g,
        lag: &lag,
        sub: 1,
        anchor: Anchor::Fixed { start: g.identity(), target: *z },
        weight: 1.0,
        cap: f64::INFINITY,
    };
    let floor = residual_floor(g, &[z]);
    let settings = OptSettings {
        max_iters: budget.iterations,
        rel_tol: 1e-10,
        fd_step: 1e-7,
        restore_tol: floor,
        accept_tol: (1e-9 * (1.0 + g.hnorm(z))).max(10.0 * floor),
    };
    let start = Candidate::from_control(&witness.time_rescale(witness.total_time()).ok()?.resample_uniform(budget.pieces));
    let (c, e) = problem.optimize(start, &settings)?;
    (e.residual <= settings.accept_tol).then(|| c.to_control(g.rank(), 1.0))
}

struct EnergyLagrangian;

impl Lagrangian for EnergyLagrangian {
    fn eval(&self, _x: &GroupPoint, q: &[f64]) -> f64 {
        0.5 * q.iter().map(|v| v * v).sum::<f64>()
    }
    fn position_free(&self) -> bool {
        true
    }
}

/// Stable per-problem seed from a master seed and integer keys.
pub fn problem_seed(master: u64, keys: &[u64]) -> u64 {
    let mut w = vec![master];
    w.extend_from_slice(keys);
    hash_words(&w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::EnvConfig;

    fn setup(cfg: EnvConfig) -> (Environment, ModelParams) {
        let g = GroupSpec::heisenberg1();
        (Environment::new(&g, &cfg).unwrap(), ModelParams::new(2.0).unwrap())
    }

    #[test]
    fn straight_line_in_constant_env() {
        let (env, model) = setup(EnvConfig::constant(1.0, 0.0));
        let g = env.group().clone();
        let p = ActionProblem::new(&env, &model, 1.0, g.identity(), g.point(&[1.0, 0.0, 0.0]).unwrap(), 1.0);
        let r = l_eps(&p, &SolverConfig::default()).unwrap();
        assert!((r.value - 0.5).abs() < 1e-9, "{}", r.value);
        assert!(r.diagnostics_pass());
    }

    #[test]
    fn mu_constant_env() {
        let (env, model) = setup(EnvConfig::constant(1.0, 0.0));
        let r = mu_q(&env, &model, &[1.0, 0.0], 0.0, 4.0, 8, &SolverConfig::default(), &[], 0).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9);
        let r = mu_q(&env, &model, &[0.0, 0.0], 0.0, 4.0, 8, &SolverConfig::default(), &[], 0).unwrap();
        assert!(r.value.abs() < 1e-12);
    }

    #[test]
    fn vertical_target_is_reached() {
        let (env, model) = setup(EnvConfig::product(0.5).with_seed(3));
        let g = env.group().clone();
        let p = ActionProblem::new(&env, &model, 0.5, g.identity(), g.point(&[0.2, -0.1, 0.3]).unwrap(), 1.0);
        let r = l_eps(&p, &SolverConfig::default()).unwrap();
        assert!(r.endpoint_residual <= 1e-6);
        assert!(r.diagnostics_pass(), "{:?}", r.diagnostics);
    }

    #[test]
    fn tiny_cap_is_infeasible() {
        let (env, model) = setup(EnvConfig::constant(1.0, 0.0));
        let g = env.group().clone();
        let mut p = ActionProblem::new(&env, &model, 1.0, g.identity(), g.point(&[3.0, 0.0, 0.0]).unwrap(), 1.0);
        p.control_cap = Some(0.5);
        assert!(matches!(l_eps(&p, &SolverConfig::default()), Err(Error::Infeasible(_))));
    }
}
