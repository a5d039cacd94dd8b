//! Inequalities relating solved action problems to each other.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{l_eps, l_eps_seeded, problem_seed, ActionProblem, ActionResult, SolverConfig};
use crate::environment::{Environment, ModelParams};
use crate::error::Result;
use crate::group::GroupPoint;
use crate::paths::{cc_bracket, CcBudget};

/// One base problem `L^ε(x, y, t)` plus the data for derived problems.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContinuityCase {
    pub epsilon: f64,
    pub x: GroupPoint,
    pub y: GroupPoint,
    pub t: f64,
    /// Right translation applied to `x`.
    pub v: GroupPoint,
    /// Third point and horizon for the triangle inequality.
    pub z: GroupPoint,
    pub s: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct InequalityRecord {
    pub case: usize,
    pub epsilon: f64,
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModulusRecord {
    pub epsilon: f64,
    /// `max (L(t+h) − L(t)) / h`.
    pub time: f64,
    /// `max (L(x∘v, y, t+ℓ) − L(x, y, t)) / ℓ`.
    pub translation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuityReport {
    pub records: Vec<InequalityRecord>,
    pub violations: usize,
    pub moduli: Vec<ModulusRecord>,
}

struct CaseOutcome {
    records: Vec<InequalityRecord>,
    time_mod: f64,
    trans_mod: f64,
}

fn rec(case: usize, eps: f64, name: &str, lhs: f64, rhs: f64, slack: f64) -> InequalityRecord {
    InequalityRecord { case, epsilon: eps, name: name.into(), lhs, rhs, slack, pass: lhs <= rhs + slack }
}

fn run_case(
    idx: usize,
    c: &ContinuityCase,
    env: &Environment,
    model: &ModelParams,
    hs: &[f64],
    n_pieces: usize,
    cfg: &SolverConfig,
) -> Result<CaseOutcome> {
    let g = env.group();
    let make = |start: GroupPoint, target: GroupPoint, t: f64, key: u64| {
        let mut p = ActionProblem::new(env, model, c.epsilon, start, target, t);
        p.n_pieces = n_pieces;
        p.seed = problem_seed(cfg.master_seed, &[idx as u64, key]);
        p
    };
    let slack_of = |a: f64, b: f64| cfg.slack * (1.0 + a.abs() + b.abs());
    let base = l_eps(&make(c.y, c.x, c.t, 0), cfg)?;
    let mut records = Vec::new();
    let push_diag = |r: &ActionResult, records: &mut Vec<InequalityRecord>, tag: &str| {
        for d in &r.diagnostics {
            records.push(rec(idx, c.epsilon, &format!("{tag}{}", d.name), d.lhs, d.rhs, d.slack));
        }
    };
    push_diag(&base, &mut records, "");
    let cert = base.certificate;
    let rate = cert.c1 - cert.offset;

    let mut time_mod: f64 = 0.0;
    for (k, &h) in hs.iter().enumerate() {
        let seed = base.control.with_rest(h, g.rank());
        let r = l_eps_seeded(&make(c.y, c.x, c.t + h, 1 + k as u64), cfg, &[seed])?;
        push_diag(&r, &mut records, "extended:");
        records.push(rec(idx, c.epsilon, "time-extension", r.value, base.value + rate * h, slack_of(r.value, base.value)));
        time_mod = time_mod.max((r.value - base.value) / h);
    }

    let xv = g.compose(&c.x, &c.v);
    let bracket = cc_bracket(g, &xv, &c.x, CcBudget::default())?;
    let ell = bracket.upper;
    let mut trans_mod = 0.0;
    if ell > 0.0 {
        let unit = bracket.witness.time_rescale(bracket.witness.total_time() / ell)?;
        let seed = base.control.concat(&unit);
        let r = l_eps_seeded(&make(c.y, xv, c.t + ell, 100), cfg, &[seed])?;
        push_diag(&r, &mut records, "translated:");
        let rhs = base.value + (2.0 * cert.c1 - cert.offset) * ell;
        records.push(rec(idx, c.epsilon, "translation", r.value, rhs, slack_of(r.value, base.value)));
        trans_mod = (r.value - base.value) / ell;
    }

    let second = l_eps(&make(c.z, c.y, c.s, 200), cfg)?;
    push_diag(&second, &mut records, "second:");
    let seed = second.control.concat(&base.control);
    let joined = l_eps_seeded(&make(c.z, c.x, c.t + c.s, 201), cfg, &[seed])?;
    push_diag(&joined, &mut records, "joined:");
    records.push(rec(
        idx,
        c.epsilon,
        "triangle",
        joined.value,
        base.value + second.value,
        slack_of(joined.value, base.value + second.value.abs()),
    ));
    Ok(CaseOutcome { records, time_mod, trans_mod })
}

/// Evaluate the continuity and dynamic-programming inequalities on a batch.
pub fn check_continuity_estimates(
    env: &Environment,
    model: &ModelParams,
    cases: &[ContinuityCase],
    hs: &[f64],
    n_pieces: usize,
    cfg: &SolverConfig,
) -> Result<ContinuityReport> {
    let outcomes: Vec<Result<CaseOutcome>> = cases
        .par_iter()
        .enumerate()
        .map(|(i, c)| run_case(i, c, env, model, hs, n_pieces, cfg))
        .collect();
    let mut records = Vec::new();
    let mut moduli: Vec<ModulusRecord> = Vec::new();
    for (c, o) in cases.iter().zip(outcomes) {
        let o = o?;
        records.extend(o.records);
        match moduli.iter_mut().find(|m| m.epsilon == c.epsilon) {
            Some(m) => {
                m.time = m.time.max(o.time_mod);
                m.translation = m.translation.max(o.trans_mod);
            }
            None => moduli.push(ModulusRecord { epsilon: c.epsilon, time: o.time_mod, translation: o.trans_mod }),
        }
    }
    let violations = records.iter().filter(|r| !r.pass).count();
    Ok(ContinuityReport { records, violations, moduli })
}
