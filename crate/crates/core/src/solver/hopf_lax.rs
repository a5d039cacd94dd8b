//! Outer infimum `inf_y g(y) + L^ε(x, y, t)`.

use serde::{Deserialize, Serialize};

use super::optimize::{Anchor, Candidate, OptSettings, Problem};
use super::{derived_cap, model_parts, perturb, residual_floor, SolverConfig};
use crate::environment::{Environment, GrowthCertificate, Lagrangian, ModelParams};
use crate::error::{input, Error, Result};
use crate::group::{GroupPoint, GroupSpec};
use crate::paths::{norm, raw_connector, Control};

/// Bounded Lipschitz initial data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Datum {
    Constant { value: f64 },
    /// `min(|π_m(y)|, cap)`.
    ClippedHorizontalNorm { cap: f64 },
}

impl Datum {
    pub fn eval(&self, g: &GroupSpec, y: &GroupPoint) -> f64 {
        match self {
            Datum::Constant { value } => *value,
            Datum::ClippedHorizontalNorm { cap } => norm(&y.coords()[..g.rank()]).min(*cap),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            Datum::Constant { value } => value.abs(),
            Datum::ClippedHorizontalNorm { cap } => cap.abs(),
        }
    }

    /// Lipschitz constant with respect to the Euclidean norm of `π_m`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Datum::Constant { .. } => 0.0,
            Datum::ClippedHorizontalNorm { .. } => 1.0,
        }
    }

    /// Whether `g(x) ≥ g(π_m(x))` holds (here with equality).
    pub fn projection_dominated(&self) -> bool {
        true
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Datum::Constant { value } => value.is_finite(),
            Datum::ClippedHorizontalNorm { cap } => cap.is_finite() && *cap > 0.0,
        };
        if ok {
            Ok(())
        } else {
            input("datum parameters must be finite (and cap positive)")
        }
    }
}

/// Screening grid and refinement effort for the outer infimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct YGridConfig {
    /// Nodes per horizontal axis (odd keeps `y = x` on the grid).
    pub horizontal: usize,
    /// Nodes per vertical axis.
    pub vertical: usize,
    /// Best screened points refined by local descent.
    pub refine: usize,
    /// Control pieces per unit of canonical time.
    pub pieces_per_unit: f64,
    pub min_pieces: usize,
}

impl Default for YGridConfig {
    fn default() -> Self {
        Self { horizontal: 9, vertical: 5, refine: 2, pieces_per_unit: 2.0, min_pieces: 4 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HopfLaxResult {
    pub value: f64,
    /// Minimizing initial point.
    pub y_star: GroupPoint,
    /// Witness from `y_star` to `x` in original time.
    pub control: Control,
    /// Radius of the ball searched for `y`.
    pub ball_radius: f64,
    pub screened: usize,
}

/// `d_CC(x, y)` bound for minimizers with bounded data.
pub fn ball_radius(cert: &GrowthCertificate, sup_g: f64, t: f64) -> f64 {
    let c = cert.c1;
    let l = cert.lambda;
    (c * t.powf(l - 1.0) * (2.0 * sup_g + (c + 1.0 / c) * t)).powf(1.0 / l)
}

#[allow(clippy::too_many_arguments)]
pub fn hopf_lax(
    g: &GroupSpec,
    lag: &dyn Lagrangian,
    cert: &GrowthCertificate,
    epsilon: f64,
    t: f64,
    x: &GroupPoint,
    datum: &Datum,
    ycfg: &YGridConfig,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<HopfLaxResult> {
    if !(epsilon > 0.0 && t > 0.0 && epsilon.is_finite() && t.is_finite()) {
        return input("epsilon and t must be positive");
    }
    g.point(x.coords())?;
    datum.validate()?;
    if ycfg.horizontal == 0 || ycfg.vertical == 0 || ycfg.refine == 0 {
        return input("y-grid sizes must be positive");
    }
    let (n_dim, m) = (g.dim(), g.rank());
    let inv = 1.0 / epsilon;
    let xt = g.scale(inv, x);
    let big_t = t * inv;
    // Only position-dependent costs need resolution on the ε scale.
    let resolution = if lag.position_free() { t } else { big_t };
    let n = ((ycfg.pieces_per_unit * resolution).ceil() as usize).max(ycfg.min_pieces).max(1);
    let radius = ball_radius(cert, datum.sup_norm(), t);
    let cap = derived_cap(cfg, None, cert, radius, t);
    let c_eq = g.cc_equivalence();

    let axis = |k: usize, half: f64| -> Vec<f64> {
        if k == 1 {
            vec![0.0]
        } else {
            (0..k).map(|i| -half + 2.0 * half * i as f64 / (k - 1) as f64).collect()
        }
    };
    let mut axes = Vec::with_capacity(n_dim);
    for i in 0..n_dim {
        if i < m {
            axes.push(axis(ycfg.horizontal, radius));
        } else {
            axes.push(axis(ycfg.vertical, (c_eq * radius).powi(g.weights()[i] as i32)));
        }
    }
    let total: usize = axes.iter().map(|a| a.len()).product();
    let screen_problem = |start: GroupPoint| Problem {
        g,
        lag,
        sub: cfg.substeps,
        anchor: Anchor::Fixed { start, target: xt },
        weight: 1.0,
        cap,
    };
    let mut screened: Vec<(f64, usize, Candidate)> = Vec::new();
    for flat in 0..total {
        let mut v = g.identity();
        let mut rem = flat;
        for (i, a) in axes.iter().enumerate() {
            v.coords_mut()[i] = a[rem % a.len()];
            rem /= a.len();
        }
        if g.hnorm(&v) > c_eq * radius * (1.0 + 1e-12) {
            continue;
        }
        let y = g.compose(x, &v);
        let yt = g.scale(inv, &y);
        let z = g.compose(&g.inverse(&yt), &xt);
        let conn = raw_connector(g, &z)?.constant_speed(big_t);
        if conn.max_speed() > cap {
            continue;
        }
        let cand = Candidate::from_control(&conn);
        let ev = screen_problem(yt).evaluate(&cand);
        let value = datum.eval(g, &y) + epsilon * ev.action;
        screened.push((value, flat, cand));
    }
    if screened.is_empty() {
        return Err(Error::Infeasible("no screening point reachable within the control cap".into()));
    }
    screened.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let n_screened = screened.len();

    let cost = |p: &GroupPoint| datum.eval(g, &g.scale(epsilon, p));
    let free = Problem {
        g,
        lag,
        sub: cfg.substeps,
        anchor: Anchor::FreeStart { end: xt, cost: &cost },
        weight: epsilon,
        cap,
    };
    let floor = residual_floor(g, &[&xt]);
    let settings = OptSettings {
        max_iters: cfg.max_iters,
        rel_tol: cfg.rel_tol,
        fd_step: cfg.fd_step,
        restore_tol: floor,
        accept_tol: f64::INFINITY,
    };
    let mut best: Option<(f64, Candidate, GroupPoint)> = None;
    let consider = |c: Candidate, best: &mut Option<(f64, Candidate, GroupPoint)>| {
        let e = free.evaluate(&c);
        if e.objective.is_finite() && best.as_ref().map_or(true, |b| e.objective < b.0) {
            *best = Some((e.objective, c, e.start));
        }
    };
    // The constant curve at x.
    consider(Candidate { durations: vec![big_t], alpha: vec![0.0; m] }, &mut best);
    let top: Vec<Candidate> = screened.iter().take(ycfg.refine).map(|s| s.2.clone()).collect();
    for c in &top {
        consider(c.clone(), &mut best);
    }
    let mut n_opt = 0;
    for c in &top {
        let start = Candidate::from_control(&c.to_control(m, 1.0).resample_uniform(n));
        if let Some((c, _)) = free.optimize(start, &settings) {
            consider(c, &mut best);
        }
        n_opt += 1;
    }
    for k in 0..cfg.multi_starts.saturating_sub(n_opt) as u64 {
        let Some((_, b, _)) = best.as_ref() else { break };
        let c = if b.durations.len() == n { b.clone() } else { Candidate::from_control(&b.to_control(m, 1.0).resample_uniform(n)) };
        if let Some((c, _)) = free.optimize(perturb(&c, m, cfg.perturbation, seed, k), &settings) {
            consider(c, &mut best);
        }
    }
    let (value, cand, start) = best.expect("constant curve is always a candidate");
    Ok(HopfLaxResult {
        value,
        y_star: g.scale(epsilon, &start),
        control: cand.to_control(m, epsilon),
        ball_radius: radius,
        screened: n_screened,
    })
}

/// `u^ε(t, x) = inf_y g(y) + L^ε(x, y, t)` for the model in `env`.
#[allow(clippy::too_many_arguments)]
pub fn u_eps(
    env: &Environment,
    model: &ModelParams,
    epsilon: f64,
    t: f64,
    x: &GroupPoint,
    datum: &Datum,
    ycfg: &YGridConfig,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<HopfLaxResult> {
    cfg.validate()?;
    let (lag, cert) = model_parts(env, model)?;
    hopf_lax(env.group(), &lag, &cert, epsilon, t, x, datum, ycfg, cfg, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::EnvConfig;

    #[test]
    fn constant_datum_in_potential_free_env() {
        let g = GroupSpec::heisenberg1();
        let env = Environment::new(&g, &EnvConfig::constant(1.0, 0.0)).unwrap();
        let m = ModelParams::new(2.0).unwrap();
        let x = g.point(&[0.4, -0.2, 0.1]).unwrap();
        let r = u_eps(&env, &m, 0.5, 1.0, &x, &Datum::Constant { value: 0.7 }, &YGridConfig::default(), &SolverConfig::default(), 0)
            .unwrap();
        assert!((r.value - 0.7).abs() < 1e-12);
    }

    #[test]
    fn clipped_norm_at_identity() {
        let g = GroupSpec::heisenberg1();
        let env = Environment::new(&g, &EnvConfig::constant(1.0, 0.0)).unwrap();
        let m = ModelParams::new(2.0).unwrap();
        let d = Datum::ClippedHorizontalNorm { cap: 1.0 };
        let r = u_eps(&env, &m, 1.0, 1.0, &g.identity(), &d, &YGridConfig::default(), &SolverConfig::default(), 0).unwrap();
        assert!(r.value.abs() < 1e-12);
    }

    #[test]
    fn epsilon_independent_for_constant_env() {
        let g = GroupSpec::heisenberg1();
        let env = Environment::new(&g, &EnvConfig::constant(1.0, 0.0)).unwrap();
        let m = ModelParams::new(2.0).unwrap();
        let d = Datum::ClippedHorizontalNorm { cap: 1.0 };
        let x = g.point(&[0.75, -0.25, 0.5]).unwrap();
        let vals: Vec<f64> = [1.0, 0.5, 0.25]
            .iter()
            .map(|&e| u_eps(&env, &m, e, 1.0, &x, &d, &YGridConfig::default(), &SolverConfig::default(), 0).unwrap().value)
            .collect();
        assert!((vals[0] - vals[1]).abs() < 1e-6 && (vals[0] - vals[2]).abs() < 1e-6, "{vals:?}");
    }
}
