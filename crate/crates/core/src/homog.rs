//! Effective Lagrangian estimation, its Legendre dual and the limit problem.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::environment::{certify_growth, EnvConfig, Environment, GrowthCertificate, Lagrangian, ModelParams};
use crate::error::{input, Error, Result};
use crate::group::{GroupPoint, GroupSpec};
use crate::legendre::{conjugate_on, convexify_with, round_trip_bound, slope_grid, Grid, GridFunction};
use crate::paths::{norm, Control, Piece};
use crate::rng::{hash_words, Stream};
use crate::solver::{action_with, hopf_lax, mu_q, problem_seed, u_eps, Datum, SolverConfig, YGridConfig};
use crate::stats::{linear_fit, mean, stderr};

pub const TABLE_VERSION: u32 = 1;

/// Sizes for the effective Lagrangian table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LbarConfig {
    /// Half-width of the cube of slopes `q`.
    pub q_radius: f64,
    /// Nodes per axis.
    pub q_nodes: usize,
    /// Horizons; each one divides the next.
    pub t_ladder: Vec<f64>,
    pub n_seeds: usize,
    /// Control pieces per unit time in each solve.
    pub pieces_per_unit: f64,
    /// Nodes per axis of the slope grid used by the double transform.
    pub dual_nodes: usize,
}

impl Default for LbarConfig {
    fn default() -> Self {
        Self {
            q_radius: 2.0,
            q_nodes: 9,
            t_ladder: vec![4.0, 8.0, 16.0],
            n_seeds: 20,
            pieces_per_unit: 2.0,
            dual_nodes: 33,
        }
    }
}

impl LbarConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q_radius > 0.0 && self.q_radius.is_finite()) || self.q_nodes < 2 || self.dual_nodes < 2 {
            return input("q_radius must be positive and grids need at least 2 nodes per axis");
        }
        if self.n_seeds < 2 {
            return input("n_seeds must be at least 2");
        }
        if !(self.pieces_per_unit > 0.0) {
            return input("pieces_per_unit must be positive");
        }
        let l = &self.t_ladder;
        if l.is_empty() || l.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return input("t_ladder must hold positive horizons");
        }
        for w in l.windows(2) {
            let r = w[1] / w[0];
            if !(w[1] > w[0]) || (r - r.round()).abs() > 1e-9 {
                return input("t_ladder must be increasing with each horizon a multiple of the previous");
            }
        }
        Ok(())
    }
}

/// Member `index` of the family generated by `base`.
pub fn family_member(base: &EnvConfig, index: usize) -> EnvConfig {
    base.with_seed(hash_words(&[base.seed, index as u64]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub group: String,
    pub env: EnvConfig,
    pub model: ModelParams,
    pub solver: SolverConfig,
    pub lbar: LbarConfig,
    /// SHA-256 of the four blocks above.
    pub hash: String,
}

/// Sampled `L̄` with its uncertainty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveLagrangianTable {
    pub version: u32,
    pub q_grid: Grid,
    /// Seed mean of `T⁻¹μ_q([0, T))` at the largest horizon.
    pub values: Vec<f64>,
    /// Lower convex envelope of `values`.
    pub convexified: Vec<f64>,
    pub stderr: Vec<f64>,
    pub t_ladder: Vec<f64>,
    /// Per node, seed means at each horizon of the ladder.
    pub ladder_means: Vec<Vec<f64>>,
    /// Per node, values at the largest horizon for each seed.
    pub per_seed: Vec<Vec<f64>>,
    /// `|T_max⁻¹μ(T_max) − T_prev⁻¹μ(T_prev)|` per node.
    pub gap: Vec<f64>,
    pub certificate: GrowthCertificate,
    pub meta: TableMeta,
}

/// Hex SHA-256 of the JSON form of `value`.
pub fn content_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable value");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn ladder_solve(
    env: &Environment,
    model: &ModelParams,
    q: &[f64],
    lcfg: &LbarConfig,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let ladder = &lcfg.t_ladder;
    let t_max = *ladder.last().expect("validated ladder");
    let mut prev: Vec<Control> = Vec::new();
    let mut out = Vec::with_capacity(ladder.len());
    for (lvl, &t) in ladder.iter().enumerate() {
        let blocks = (t_max / t).round() as usize;
        let ratio = if lvl == 0 { 0 } else { (t / ladder[lvl - 1]).round() as usize };
        let n_pieces = ((lcfg.pieces_per_unit * t).ceil() as usize).max(1);
        let mut cur = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let a = b as f64 * t;
            let mut seeds = Vec::new();
            if ratio > 0 {
                let mut c = prev[b * ratio].clone();
                for child in &prev[b * ratio + 1..(b + 1) * ratio] {
                    c = c.concat(child);
                }
                seeds.push(c);
            }
            let r = mu_q(env, model, q, a, a + t, n_pieces, cfg, &seeds, problem_seed(seed, &[lvl as u64, b as u64]))?;
            if b == 0 {
                out.push(r.value / t);
            }
            cur.push(r.control);
        }
        prev = cur;
    }
    Ok(out)
}

/// Monte-Carlo estimate of `L̄` on a cube of slopes.
pub fn estimate_lbar(
    g: &GroupSpec,
    env_cfg: &EnvConfig,
    model: &ModelParams,
    lcfg: &LbarConfig,
    cfg: &SolverConfig,
) -> Result<EffectiveLagrangianTable> {
    lcfg.validate()?;
    cfg.validate()?;
    let grid = Grid::cube(g.rank(), lcfg.q_radius, lcfg.q_nodes)?;
    let envs: Vec<Environment> =
        (0..lcfg.n_seeds).map(|s| Environment::new(g, &family_member(env_cfg, s))).collect::<Result<_>>()?;
    let certificate = certify_growth(&envs[0], model, 1024)?;
    let tasks: Vec<(usize, usize)> = (0..grid.len()).flat_map(|k| (0..lcfg.n_seeds).map(move |s| (k, s))).collect();
    let solved: Vec<Result<Vec<f64>>> = tasks
        .par_iter()
        .map(|&(k, s)| {
            let q = grid.node(k);
            let seed = problem_seed(cfg.master_seed, &[k as u64, s as u64]);
            ladder_solve(&envs[s], model, &q, lcfg, cfg, seed).map_err(|e| e.context(&format!("node {k} q={q:?} seed {s}")))
        })
        .collect();
    let mut per_task = Vec::with_capacity(solved.len());
    for r in solved {
        per_task.push(r?);
    }

    let levels = lcfg.t_ladder.len();
    let mut values = Vec::with_capacity(grid.len());
    let mut errs = Vec::with_capacity(grid.len());
    let mut ladder_means = Vec::with_capacity(grid.len());
    let mut per_seed = Vec::with_capacity(grid.len());
    let mut gap = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let rows = &per_task[k * lcfg.n_seeds..(k + 1) * lcfg.n_seeds];
        let means: Vec<f64> = (0..levels).map(|l| mean(&rows.iter().map(|r| r[l]).collect::<Vec<_>>())).collect();
        let last: Vec<f64> = rows.iter().map(|r| r[levels - 1]).collect();
        values.push(means[levels - 1]);
        errs.push(stderr(&last));
        gap.push(if levels > 1 { (means[levels - 1] - means[levels - 2]).abs() } else { 0.0 });
        ladder_means.push(means);
        per_seed.push(last);
    }
    let raw = GridFunction::new(grid.clone(), values.clone())?;
    let convexified = convexify_with(&raw, &slope_grid(&raw, lcfg.dual_nodes)).values;
    let mut meta = TableMeta {
        group: g.name().to_string(),
        env: env_cfg.clone(),
        model: *model,
        solver: cfg.clone(),
        lbar: lcfg.clone(),
        hash: String::new(),
    };
    meta.hash = content_hash(&(&meta.group, &meta.env, &meta.model, &meta.solver, &meta.lbar));
    Ok(EffectiveLagrangianTable {
        version: TABLE_VERSION,
        q_grid: grid,
        values,
        convexified,
        stderr: errs,
        t_ladder: lcfg.t_ladder.clone(),
        ladder_means,
        per_seed,
        gap,
        certificate,
        meta,
    })
}

impl EffectiveLagrangianTable {
    pub fn raw(&self) -> GridFunction {
        GridFunction { grid: self.q_grid.clone(), values: self.values.clone() }
    }

    pub fn convex(&self) -> GridFunction {
        GridFunction { grid: self.q_grid.clone(), values: self.convexified.clone() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable table")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let t: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Schema { path: e.path().to_string(), message: e.inner().to_string() })?;
        if t.version != TABLE_VERSION {
            return Err(Error::Schema { path: "version".into(), message: format!("unsupported table version {}", t.version) });
        }
        let n = t.q_grid.len();
        if t.values.len() != n || t.convexified.len() != n || t.stderr.len() != n {
            return Err(Error::Schema { path: "values".into(), message: format!("expected {n} entries") });
        }
        if t.values.iter().chain(&t.convexified).any(|v| !v.is_finite()) || t.stderr.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Schema { path: "values".into(), message: "values must be finite and stderr non-negative".into() });
        }
        Ok(t)
    }

    /// Nodes where `L̄(q) < C1⁻¹(|q|^λ − 1) − offset`.
    pub fn superlinearity_violations(&self, slack: f64) -> Vec<usize> {
        let c = &self.certificate;
        (0..self.q_grid.len())
            .filter(|&k| {
                let q = self.q_grid.node(k);
                let lower = (norm(&q).powf(c.lambda) - 1.0) / c.c1 - c.offset;
                self.values[k] < lower - slack
            })
            .collect()
    }

    /// Nodes where the per-interval averages increase along the ladder.
    pub fn ladder_increases(&self, slack: f64) -> Vec<usize> {
        (0..self.q_grid.len())
            .filter(|&k| self.ladder_means[k].windows(2).any(|w| w[1] > w[0] + slack * (1.0 + w[0].abs())))
            .collect()
    }
}

/// Interpolated, convexified `L̄` as a position-free cost.
///
/// Inside the grid: piecewise linear on the Kuhn triangulation. Outside:
/// the max-affine extension `sup_p p·q − H̄(p)` over the slope grid.
#[derive(Clone, Debug)]
pub struct EffectiveLagrangian {
    table: GridFunction,
    dual: GridFunction,
}

impl EffectiveLagrangian {
    pub fn new(convex: GridFunction, dual_nodes: usize) -> Self {
        let dual_grid = slope_grid(&convex, dual_nodes);
        let (dual, _) = conjugate_on(&convex, &dual_grid);
        Self { table: convex, dual }
    }

    pub fn from_table(t: &EffectiveLagrangianTable) -> Self {
        Self::new(t.convex(), t.meta.lbar.dual_nodes)
    }

    pub fn grid_function(&self) -> &GridFunction {
        &self.table
    }

    pub fn value(&self, q: &[f64]) -> f64 {
        if self.table.grid.contains(q) {
            return self.table.interpolate(q);
        }
        let g = &self.dual.grid;
        let mut best = f64::NEG_INFINITY;
        for k in 0..g.len() {
            let p = g.node(k);
            let v = p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() - self.dual.values[k];
            best = best.max(v);
        }
        best
    }
}

impl Lagrangian for EffectiveLagrangian {
    fn eval(&self, _x: &GroupPoint, q: &[f64]) -> f64 {
        self.value(q)
    }

    fn position_free(&self) -> bool {
        true
    }
}

/// `H̄` sampled on a slope cube small enough that every maximizer is interior.
#[derive(Clone, Debug, Serialize)]
pub struct HamiltonianSample {
    pub dual: GridFunction,
    /// Half-width of the slope cube.
    pub radius: f64,
}

/// Discrete conjugate of the convexified table.
pub fn effective_hamiltonian(table: &EffectiveLagrangianTable, per_axis: usize) -> Result<HamiltonianSample> {
    hamiltonian_of(&table.convex(), per_axis)
}

pub fn hamiltonian_of(f: &GridFunction, per_axis: usize) -> Result<HamiltonianSample> {
    if per_axis < 2 {
        return input("per_axis must be at least 2");
    }
    let g = &f.grid;
    // Smallest outward boundary slope: beyond it the boundary node wins.
    let mut r0 = f64::INFINITY;
    for k in 0..g.len() {
        let idx = g.index(k);
        for axis in 0..g.dim() {
            let h = g.spacing(axis);
            if idx[axis] + 1 == g.n[axis] {
                let mut j = idx.clone();
                j[axis] -= 1;
                r0 = r0.min((f.values[k] - f.values[g.flat(&j)]) / h);
            }
            if idx[axis] == 0 {
                let mut j = idx.clone();
                j[axis] += 1;
                r0 = r0.min((f.values[k] - f.values[g.flat(&j)]) / h);
            }
        }
    }
    if !(r0 > 0.0) {
        return Err(Error::Range(format!(
            "the table does not grow towards its boundary (smallest outward slope {r0:.3e}); enlarge the q-grid"
        )));
    }
    for k in 1..20 {
        let radius = r0 * (1.0 - 0.05 * k as f64);
        let dual = Grid::cube(g.dim(), radius, per_axis)?;
        let (h, flags) = conjugate_on(f, &dual);
        if !flags.iter().any(|&b| b) {
            return Ok(HamiltonianSample { dual: h, radius });
        }
    }
    Err(Error::Range("no slope cube with interior maximizers; enlarge the q-grid".into()))
}

#[derive(Clone, Debug, Serialize)]
pub struct RoundTrip {
    pub max_error: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Convexified table versus its double discrete transform.
pub fn duality_round_trip(convex: &GridFunction, per_axis: usize) -> RoundTrip {
    let dual = slope_grid(convex, per_axis);
    let (h, _) = conjugate_on(convex, &dual);
    let (back, _) = conjugate_on(&h, &convex.grid);
    let max_error = back.values.iter().zip(&convex.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let bound = round_trip_bound(&convex.grid, &dual);
    RoundTrip { max_error, bound, pass: max_error <= bound + 1e-12 }
}

#[derive(Clone, Debug, Serialize)]
pub struct MidpointRecord {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub violation: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlternatingRecord {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// `(n, |ξ_n(1) − l_{(p+q)/2}(1)|)`.
    pub errors: Vec<(usize, f64)>,
    /// Fitted exponent of the decay in `n`.
    pub slope: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvexityReport {
    pub pairs: Vec<MidpointRecord>,
    pub violations: usize,
    pub alternating: Vec<AlternatingRecord>,
}

impl ConvexityReport {
    pub fn alternating_pass(&self) -> bool {
        self.alternating.iter().all(|a| a.pass)
    }
}

/// Endpoint error of the path alternating `p` and `q` on `2n` subintervals of `[0, 1]`.
pub fn alternating_path(g: &GroupSpec, p: &[f64], q: &[f64], ns: &[usize]) -> AlternatingRecord {
    let mid: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let target = g.x_line_e(&mid, 1.0);
    let errors: Vec<(usize, f64)> = ns
        .iter()
        .map(|&n| {
            let d = 1.0 / (2 * n) as f64;
            let pieces: Vec<Piece> = (0..2 * n)
                .map(|k| Piece { duration: d, velocity: if k % 2 == 0 { p.to_vec() } else { q.to_vec() } })
                .collect();
            let c = Control::from_pieces_unchecked(pieces);
            (n, c.endpoint(g, &g.identity()).euclid_dist(&target))
        })
        .collect();
    let scale = 1.0 + norm(p) + norm(q);
    let tiny = errors.iter().all(|(_, e)| *e <= 1e-12 * scale.powi(g.step() as i32));
    let (slope, pass) = if tiny {
        (f64::NAN, true)
    } else {
        let x: Vec<f64> = errors.iter().map(|(n, _)| (*n as f64).ln()).collect();
        let y: Vec<f64> = errors.iter().map(|(_, e)| e.max(1e-300).ln()).collect();
        let (s, _) = linear_fit(&x, &y);
        (s, s <= -0.9)
    };
    AlternatingRecord { p: p.to_vec(), q: q.to_vec(), errors, slope, pass }
}

/// Midpoint convexity of the raw estimates on random node pairs with a node midpoint.
pub fn check_midpoint_convexity(
    g: &GroupSpec,
    table: &EffectiveLagrangianTable,
    n_pairs: usize,
    seed: u64,
    slack: f64,
) -> ConvexityReport {
    let grid = &table.q_grid;
    let mut rng = Stream::new(seed, "midpoint-pairs", 0);
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut alternating = Vec::new();
    for k in 0..n_pairs {
        let i: Vec<usize> = grid.n.iter().map(|&n| (rng.next_u64() % n as u64) as usize).collect();
        let j: Vec<usize> = i
            .iter()
            .zip(&grid.n)
            .map(|(&a, &n)| {
                // Same parity as `a` keeps the midpoint on the grid.
                let choices = (n - (a % 2)).div_ceil(2);
                a % 2 + 2 * (rng.next_u64() % choices as u64) as usize
            })
            .collect();
        let mid: Vec<usize> = i.iter().zip(&j).map(|(a, b)| (a + b) / 2).collect();
        let (ki, kj, km) = (grid.flat(&i), grid.flat(&j), grid.flat(&mid));
        let lhs = table.values[km];
        let rhs = 0.5 * (table.values[ki] + table.values[kj]);
        let se = (table.stderr[km].powi(2) + 0.25 * table.stderr[ki].powi(2) + 0.25 * table.stderr[kj].powi(2)).sqrt();
        let tolerance = 3.0 * se + slack * (1.0 + rhs.abs());
        let (p, q) = (grid.node(ki), grid.node(kj));
        if k < 5 {
            alternating.push(alternating_path(g, &p, &q, &[4, 8, 16]));
        }
        pairs.push(MidpointRecord { p, q, lhs, rhs, tolerance, violation: lhs > rhs + tolerance });
    }
    let violations = pairs.iter().filter(|r| r.violation).count();
    ConvexityReport { pairs, violations, alternating }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub t: f64,
    pub x: GroupPoint,
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitPoint {
    pub t: f64,
    pub x: GroupPoint,
    pub value: f64,
    pub y_star: GroupPoint,
    pub control: Control,
    /// Infimum over `y ∈ V_x` of `g(y) + t L̄(π_m(y⁻¹∘x)/t)`.
    pub constrained: f64,
    pub constrained_q: Vec<f64>,
    /// Solver value along the constrained minimizer's endpoints.
    pub inner_solver: f64,
    /// `t L̄(q)` at the constrained minimizer.
    pub inner_closed_form: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitSolution {
    pub points: Vec<LimitPoint>,
    /// Whether the datum satisfies `g(x) ≥ g(π_m(x))`.
    pub projection_dominated: bool,
}

/// `inf_q g(x ∘ l_q(t)⁻¹) + t L̄(q)` by grid scan and pattern search.
fn constrained_limit(g: &GroupSpec, lbar: &EffectiveLagrangian, datum: &Datum, t: f64, x: &GroupPoint, radius: f64) -> (f64, Vec<f64>) {
    let m = g.rank();
    let f = |q: &[f64]| {
        let y = g.compose(x, &g.inverse(&g.x_line_e(q, t)));
        datum.eval(g, &y) + t * lbar.value(q)
    };
    let r = radius / t;
    let n = 9usize;
    let mut best = (f(&vec![0.0; m]), vec![0.0; m]);
    let total = n.pow(m as u32);
    for k in 0..total {
        let mut q = vec![0.0; m];
        let mut rest = k;
        for v in q.iter_mut() {
            *v = -r + 2.0 * r * (rest % n) as f64 / (n - 1) as f64;
            rest /= n;
        }
        let v = f(&q);
        if v < best.0 {
            best = (v, q);
        }
    }
    let mut step = 2.0 * r / (n - 1) as f64;
    while step > 1e-10 {
        let mut improved = false;
        for i in 0..m {
            for s in [-1.0, 1.0] {
                let mut q = best.1.clone();
                q[i] += s * step;
                let v = f(&q);
                if v < best.0 {
                    best = (v, q);
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best
}

/// Homogenized solution `ū(t, x)` at each evaluation point.
#[allow(clippy::too_many_arguments)]
pub fn solve_limit(
    g: &GroupSpec,
    lbar: &EffectiveLagrangian,
    cert: &GrowthCertificate,
    datum: &Datum,
    points: &[EvalPoint],
    ycfg: &YGridConfig,
    cfg: &SolverConfig,
) -> Result<LimitSolution> {
    let solved: Vec<Result<LimitPoint>> = points
        .par_iter()
        .enumerate()
        .map(|(k, pt)| {
            let seed = problem_seed(cfg.master_seed, &[tag_limit(), k as u64]);
            let hl = hopf_lax(g, lbar, cert, 1.0, pt.t, &pt.x, datum, ycfg, cfg, seed)?;
            let (constrained, q) = constrained_limit(g, lbar, datum, pt.t, &pt.x, hl.ball_radius);
            let y = g.compose(&pt.x, &g.inverse(&g.x_line_e(&q, pt.t)));
            let n = ((ycfg.pieces_per_unit * pt.t).ceil() as usize).max(ycfg.min_pieces);
            let inner = action_with(g, lbar, *cert, &y, &pt.x, pt.t, n, cfg, &[], seed)?;
            Ok(LimitPoint {
                t: pt.t,
                x: pt.x,
                value: hl.value,
                y_star: hl.y_star,
                control: hl.control,
                constrained,
                constrained_q: q.clone(),
                inner_solver: inner.value,
                inner_closed_form: pt.t * lbar.value(&q),
            })
        })
        .collect();
    let points = solved.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(LimitSolution { points, projection_dominated: datum.projection_dominated() })
}

fn tag_limit() -> u64 {
    crate::rng::tag("limit")
}

/// One `u^ε` evaluation in a convergence study.
#[derive(Clone, Debug, Serialize)]
pub struct StudyRow {
    pub seed: usize,
    pub epsilon: f64,
    pub t: f64,
    pub x: GroupPoint,
    pub u_eps: f64,
    pub u_bar: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StudyReport {
    pub epsilons: Vec<f64>,
    /// Seed mean of `max_points |u^ε − ū|`.
    pub d: Vec<f64>,
    pub d_stderr: Vec<f64>,
    pub rows: Vec<StudyRow>,
    pub limit: LimitSolution,
    /// `D` non-increasing along the ladder within the relative slack.
    pub non_increasing: bool,
    pub slack: f64,
}

/// `D(ε)` along a decreasing ladder for a seeded environment family.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    g: &GroupSpec,
    env_cfg: &EnvConfig,
    model: &ModelParams,
    datum: &Datum,
    epsilons: &[f64],
    points: &[EvalPoint],
    n_seeds: usize,
    lbar: &EffectiveLagrangian,
    ycfg: &YGridConfig,
    cfg: &SolverConfig,
) -> Result<StudyReport> {
    if epsilons.is_empty() || epsilons.windows(2).any(|w| !(w[1] < w[0])) || epsilons.iter().any(|e| !(*e > 0.0)) {
        return input("epsilon ladder must be positive and decreasing");
    }
    if n_seeds == 0 || points.is_empty() {
        return input("need at least one seed and one evaluation point");
    }
    let envs: Vec<Environment> = (0..n_seeds).map(|s| Environment::new(g, &family_member(env_cfg, s))).collect::<Result<_>>()?;
    let cert = certify_growth(&envs[0], model, 1024)?;
    let limit = solve_limit(g, lbar, &cert, datum, points, ycfg, cfg)?;

    let tasks: Vec<(usize, usize, usize)> = (0..n_seeds)
        .flat_map(|s| (0..epsilons.len()).flat_map(move |e| (0..points.len()).map(move |p| (s, e, p))))
        .collect();
    let solved: Vec<Result<f64>> = tasks
        .par_iter()
        .map(|&(s, e, p)| {
            let pt = &points[p];
            let seed = problem_seed(cfg.master_seed, &[s as u64, e as u64, p as u64]);
            u_eps(&envs[s], model, epsilons[e], pt.t, &pt.x, datum, ycfg, cfg, seed)
                .map(|r| r.value)
                .map_err(|err| err.context(&format!("seed {s} epsilon {} point {p}", epsilons[e])))
        })
        .collect();
    let mut rows = Vec::with_capacity(tasks.len());
    for (&(s, e, p), r) in tasks.iter().zip(solved) {
        rows.push(StudyRow {
            seed: s,
            epsilon: epsilons[e],
            t: points[p].t,
            x: points[p].x,
            u_eps: r?,
            u_bar: limit.points[p].value,
        });
    }
    let per_point = points.len();
    let mut d = Vec::with_capacity(epsilons.len());
    let mut d_stderr = Vec::with_capacity(epsilons.len());
    for e in 0..epsilons.len() {
        let maxima: Vec<f64> = (0..n_seeds)
            .map(|s| {
                let base = (s * epsilons.len() + e) * per_point;
                rows[base..base + per_point].iter().map(|r| (r.u_eps - r.u_bar).abs()).fold(0.0, f64::max)
            })
            .collect();
        d.push(mean(&maxima));
        d_stderr.push(stderr(&maxima));
    }
    let slack = 0.1;
    let non_increasing = d.windows(2).all(|w| w[1] <= (1.0 + slack) * w[0] + 1e-12);
    Ok(StudyReport { epsilons: epsilons.to_vec(), d, d_stderr, rows, limit, non_increasing, slack })
}

/// Default evaluation grid: five space points at two times.
pub fn default_eval_points(g: &GroupSpec) -> Vec<EvalPoint> {
    let mut out = Vec::new();
    for t in [0.5, 1.0] {
        for k in 0..5 {
            let mut c = vec![0.0; g.dim()];
            if k > 0 {
                let th = std::f64::consts::FRAC_PI_2 * (k - 1) as f64 + 0.3;
                c[0] = 0.6 * th.cos();
                c[1] = 0.6 * th.sin();
                c[g.dim() - 1] = 0.1 * (k as f64 - 2.5);
            }
            out.push(EvalPoint { t, x: GroupPoint::from_slice(&c) });
        }
    }
    out
}
