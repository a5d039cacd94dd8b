//! Config-driven experiment runner behind the command-line tool.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

pub use config::{ExperimentConfig, OutputConfig, TaskConfig, TaskKind};
pub use output::{line_plot, Manifest, Series, Stamp, Table};

use crate::environment::{certify_growth, Environment, ModelParams};
use crate::error::{Error, Result};
use crate::group::GroupSpec;
use crate::homog::{
    check_midpoint_convexity, convergence_study, default_eval_points, duality_round_trip, effective_hamiltonian, estimate_lbar,
    solve_limit, EffectiveLagrangian, EffectiveLagrangianTable, LbarConfig, LimitSolution,
};
use crate::paths::{integrate, Control};
use crate::solver::{l_eps, mu_q, problem_seed, ActionProblem, ActionResult};
use crate::verify::verify;
use output::{coords, num, write_file};

/// Command-line overrides of the configuration file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    /// Number of environment seeds for Monte-Carlo tasks.
    pub seeds: Option<usize>,
    pub master_seed: Option<u64>,
    pub plot: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub manifest: Manifest,
    /// False when a verification task found failing invariants.
    pub success: bool,
}

/// Apply overrides and fill in the task block.
pub fn resolve(kind: TaskKind, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentConfig> {
    let mut cfg = cfg.clone();
    if let Some(s) = opts.master_seed {
        cfg.solver.master_seed = s;
    }
    let task = match cfg.task.take() {
        Some(t) if t.kind() != kind => {
            return Err(Error::Schema {
                path: "task.type".into(),
                message: format!("config describes task `{}` but `{}` was requested", t.kind().name(), kind.name()),
            })
        }
        Some(t) => t,
        None => TaskConfig::default_for(kind)
            .ok_or_else(|| Error::Schema { path: "task".into(), message: format!("task `{}` needs a task block", kind.name()) })?,
    };
    let task = match (task, opts.seeds) {
        (TaskConfig::EffectiveLagrangian { mut lbar }, Some(k)) => {
            lbar.n_seeds = k;
            TaskConfig::EffectiveLagrangian { lbar }
        }
        (TaskConfig::LimitSolve { mut lbar, table, datum, points, ygrid }, Some(k)) => {
            lbar.n_seeds = k;
            TaskConfig::LimitSolve { lbar, table, datum, points, ygrid }
        }
        (TaskConfig::Converge { mut lbar, table, datum, points, epsilons, ygrid, .. }, Some(k)) => {
            lbar.n_seeds = k;
            TaskConfig::Converge { lbar, table, datum, points, epsilons, n_seeds: k, ygrid }
        }
        (t, _) => t,
    };
    cfg.task = Some(task);
    if let Some(d) = &opts.out_dir {
        cfg.output.dir = d.clone();
    }
    cfg.output.plot |= opts.plot;
    cfg.validate()?;
    Ok(cfg)
}

/// Execute one task and write its artifacts.
pub fn run(kind: TaskKind, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let cfg = resolve(kind, cfg, opts)?;
    let workers = opts.workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Input(format!("cannot start {workers} workers: {e}")))?;
    let started = Instant::now();
    let stamp = Stamp { config_hash: cfg.hash(), master_seed: cfg.solver.master_seed, task: kind.name().into() };
    let produced = pool.install(|| execute(&cfg))?;
    let dir = cfg.output.dir.clone();
    let mut files = Vec::new();
    for t in &produced.tables {
        files.push(write_file(&dir, &format!("{}.csv", t.name), &t.render(&stamp))?);
    }
    for (name, text) in &produced.extra {
        files.push(write_file(&dir, name, text)?);
    }
    if cfg.output.plot {
        for (name, svg) in &produced.plots {
            files.push(write_file(&dir, name, &svg_with_stamp(svg, &stamp))?);
        }
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        task: kind.name().into(),
        config: serde_json::from_str(&cfg.resolved_json()).expect("valid JSON"),
        config_hash: stamp.config_hash.clone(),
        master_seed: stamp.master_seed,
        workers,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        files: files.iter().map(|p| file_name(p)).collect(),
        summary: produced.summary,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("serializable manifest");
    files.push(write_file(&dir, "manifest.json", &text)?);
    Ok(RunOutcome { files, manifest, success: produced.success })
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn svg_with_stamp(svg: &str, stamp: &Stamp) -> String {
    let comment = format!("<!-- config_hash={} master_seed={} task={} -->\n", stamp.config_hash, stamp.master_seed, stamp.task);
    match svg.find('>') {
        Some(i) => format!("{}{}{}", &svg[..=i], "\n", comment) + &svg[i + 2..],
        None => svg.to_string(),
    }
}

struct Produced {
    tables: Vec<Table>,
    /// Non-CSV files: name and contents.
    extra: Vec<(String, String)>,
    plots: Vec<(String, String)>,
    summary: serde_json::Value,
    success: bool,
}

impl Produced {
    fn new(summary: serde_json::Value) -> Self {
        Self { tables: Vec::new(), extra: Vec::new(), plots: Vec::new(), summary, success: true }
    }
}

fn execute(cfg: &ExperimentConfig) -> Result<Produced> {
    let g = GroupSpec::by_name(&cfg.group)?;
    let model = ModelParams::new(cfg.model.beta)?;
    let task = cfg.task.as_ref().expect("resolved task");
    match task {
        TaskConfig::Action { epsilon, start, target, horizon, n_pieces } => {
            let env = Environment::new(&g, &cfg.environment)?;
            let start = g.point(start).map_err(|e| e.context("task.start"))?;
            let target = g.point(target).map_err(|e| e.context("task.target"))?;
            let mut p = ActionProblem::new(&env, &model, *epsilon, start, target, *horizon);
            p.n_pieces = *n_pieces;
            p.seed = problem_seed(cfg.solver.master_seed, &[0]);
            let r = l_eps(&p, &cfg.solver)?;
            action_outputs("action", &g, &p.start, &r)
        }
        TaskConfig::Mu { q, a, b, n_pieces } => {
            let env = Environment::new(&g, &cfg.environment)?;
            let seed = problem_seed(cfg.solver.master_seed, &[0]);
            if q.len() != g.rank() {
                return Err(Error::Input(format!("task.q: {} expects {} slope components, got {}", g.name(), g.rank(), q.len())));
            }
            let r = mu_q(&env, &model, q, *a, *b, *n_pieces, &cfg.solver, &[], seed)?;
            action_outputs("mu", &g, &g.x_line_e(q, *a), &r)
        }
        TaskConfig::EffectiveLagrangian { lbar } => {
            let table = estimate_lbar(&g, &cfg.environment, &model, lbar, &cfg.solver)?;
            let mut out = Produced::new(json!({}));
            table_outputs(&g, &table, &mut out, cfg.solver.master_seed)?;
            Ok(out)
        }
        TaskConfig::LimitSolve { lbar, table, datum, points, ygrid } => {
            let t = load_or_estimate(&g, cfg, &model, lbar, table.as_deref())?;
            let lb = EffectiveLagrangian::from_table(&t);
            let pts = points.clone().unwrap_or_else(|| default_eval_points(&g));
            for (k, p) in pts.iter().enumerate() {
                g.point(p.x.coords()).map_err(|e| e.context(&format!("task.points[{k}].x")))?;
            }
            let env = Environment::new(&g, &cfg.environment)?;
            let cert = certify_growth(&env, &model, 1024)?;
            let sol = solve_limit(&g, &lb, &cert, datum, &pts, ygrid, &cfg.solver)?;
            let mut out = Produced::new(json!({ "projection_dominated": sol.projection_dominated }));
            out.tables.push(limit_table(&sol));
            Ok(out)
        }
        TaskConfig::Converge { lbar, table, datum, points, epsilons, n_seeds, ygrid } => {
            let t = load_or_estimate(&g, cfg, &model, lbar, table.as_deref())?;
            let lb = EffectiveLagrangian::from_table(&t);
            let pts = points.clone().unwrap_or_else(|| default_eval_points(&g));
            for (k, p) in pts.iter().enumerate() {
                g.point(p.x.coords()).map_err(|e| e.context(&format!("task.points[{k}].x")))?;
            }
            let rep = convergence_study(&g, &cfg.environment, &model, datum, epsilons, &pts, *n_seeds, &lb, ygrid, &cfg.solver)?;
            let mut out = Produced::new(json!({
                "epsilons": rep.epsilons,
                "d": rep.d,
                "d_stderr": rep.d_stderr,
                "non_increasing": rep.non_increasing,
                "slack": rep.slack,
            }));
            let mut ladder = Table::new("convergence", &["epsilon", "d", "d_stderr"]);
            for i in 0..rep.epsilons.len() {
                ladder.push(vec![num(rep.epsilons[i]), num(rep.d[i]), num(rep.d_stderr[i])]);
            }
            let mut rows = Table::new("convergence_points", &["seed", "epsilon", "t", "x", "u_eps", "u_bar"]);
            for r in &rep.rows {
                rows.push(vec![r.seed.to_string(), num(r.epsilon), num(r.t), coords(r.x.coords()), num(r.u_eps), num(r.u_bar)]);
            }
            out.tables.push(ladder);
            out.tables.push(rows);
            out.tables.push(limit_table(&rep.limit));
            out.plots.push((
                "convergence.svg".into(),
                line_plot(
                    "seed-averaged D(epsilon)",
                    "log2 epsilon",
                    "D",
                    &[Series {
                        label: "D".into(),
                        points: rep.epsilons.iter().zip(&rep.d).map(|(e, d)| (e.log2(), *d)).collect(),
                    }],
                ),
            ));
            Ok(out)
        }
        TaskConfig::Verify { scope } => {
            let rep = verify(&g, *scope, cfg.solver.master_seed);
            let mut t = Table::new("verify", &["scope", "name", "pass", "detail"]);
            for c in &rep.checks {
                t.push(vec![c.scope.clone(), c.name.clone(), c.pass.to_string(), c.detail.clone()]);
            }
            let failed: Vec<&str> = rep.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
            let mut out = Produced::new(json!({ "checks": rep.checks.len(), "failed": failed }));
            out.success = rep.all_pass();
            out.tables.push(t);
            out.extra.push(("verify.json".into(), serde_json::to_string_pretty(&rep).expect("serializable")));
            Ok(out)
        }
    }
}

fn load_or_estimate(
    g: &GroupSpec,
    cfg: &ExperimentConfig,
    model: &ModelParams,
    lbar: &LbarConfig,
    path: Option<&Path>,
) -> Result<EffectiveLagrangianTable> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display()))))?;
            let t = EffectiveLagrangianTable::from_json(&text)?;
            if t.meta.group != g.name() {
                return Err(Error::Schema {
                    path: "task.table".into(),
                    message: format!("table was estimated on `{}`, not `{}`", t.meta.group, g.name()),
                });
            }
            Ok(t)
        }
        None => estimate_lbar(g, &cfg.environment, model, lbar, &cfg.solver),
    }
}

fn action_outputs(name: &str, g: &GroupSpec, start: &crate::group::GroupPoint, r: &ActionResult) -> Result<Produced> {
    let mut out = Produced::new(json!({
        "value": r.value,
        "endpoint_residual": r.endpoint_residual,
        "interior": r.interior,
        "diagnostics_pass": r.diagnostics_pass(),
    }));
    let mut t = Table::new(
        name,
        &["value", "endpoint_residual", "control_cap", "interior", "cc_lower", "connector_length", "diagnostics_pass"],
    );
    t.push(vec![
        num(r.value),
        num(r.endpoint_residual),
        num(r.control_cap),
        r.interior.to_string(),
        num(r.cc_lower),
        num(r.connector_length),
        r.diagnostics_pass().to_string(),
    ]);
    out.tables.push(t);
    let mut d = Table::new(&format!("{name}_diagnostics"), &["name", "lhs", "rhs", "slack", "pass"]);
    for b in &r.diagnostics {
        d.push(vec![b.name.clone(), num(b.lhs), num(b.rhs), num(b.slack), b.pass.to_string()]);
    }
    out.tables.push(d);
    out.tables.push(control_table(&format!("{name}_control"), &r.control));
    let path = integrate(g, start, &r.control, 8)?;
    let mut p = Table::new(&format!("{name}_path"), &["s", "point"]);
    for (s, x) in &path.samples {
        p.push(vec![num(*s), coords(x.coords())]);
    }
    out.tables.push(p);
    out.plots.push((
        format!("{name}_path.svg"),
        line_plot(
            "horizontal projection of the witness path",
            "x1",
            "x2",
            &[Series { label: "path".into(), points: path.samples.iter().map(|(_, x)| (x[0], x[1])).collect() }],
        ),
    ));
    Ok(out)
}

fn control_table(name: &str, c: &Control) -> Table {
    let mut t = Table::new(name, &["duration", "velocity"]);
    for p in c.pieces() {
        t.push(vec![num(p.duration), coords(&p.velocity)]);
    }
    t
}

fn limit_table(sol: &LimitSolution) -> Table {
    let mut t = Table::new(
        "limit",
        &["t", "x", "u_bar", "y_star", "constrained", "constrained_q", "inner_solver", "inner_closed_form"],
    );
    for p in &sol.points {
        t.push(vec![
            num(p.t),
            coords(p.x.coords()),
            num(p.value),
            coords(p.y_star.coords()),
            num(p.constrained),
            coords(&p.constrained_q),
            num(p.inner_solver),
            num(p.inner_closed_form),
        ]);
    }
    t
}

fn table_outputs(g: &GroupSpec, table: &EffectiveLagrangianTable, out: &mut Produced, seed: u64) -> Result<()> {
    let mut t = Table::new("lbar", &["q", "value", "convexified", "stderr", "gap", "ladder_means"]);
    for k in 0..table.q_grid.len() {
        t.push(vec![
            coords(&table.q_grid.node(k)),
            num(table.values[k]),
            num(table.convexified[k]),
            num(table.stderr[k]),
            num(table.gap[k]),
            coords(&table.ladder_means[k]),
        ]);
    }
    out.tables.push(t);
    let superlinear = table.superlinearity_violations(1e-9);
    let round_trip = duality_round_trip(&table.convex(), table.meta.lbar.dual_nodes);
    let convexity = check_midpoint_convexity(g, table, 30, seed, 1e-7);
    let ladder = table.ladder_increases(1e-7);
    let hamiltonian = effective_hamiltonian(table, 17);
    match &hamiltonian {
        Ok(h) => {
            let mut ht = Table::new("hamiltonian", &["p", "value"]);
            for k in 0..h.dual.grid.len() {
                ht.push(vec![coords(&h.dual.grid.node(k)), num(h.dual.values[k])]);
            }
            out.tables.push(ht);
        }
        Err(Error::Range(_)) => {}
        Err(e) => return Err(Error::Input(e.to_string())),
    }
    out.summary = json!({
        "superlinearity_violations": superlinear,
        "round_trip": round_trip,
        "midpoint_violations": convexity.violations,
        "alternating_path_pass": convexity.alternating_pass(),
        "ladder_increases": ladder,
        "hamiltonian_radius": hamiltonian.as_ref().ok().map(|h| h.radius),
        "hamiltonian_error": hamiltonian.as_ref().err().map(|e| e.to_string()),
        "table_hash": table.meta.hash,
    });
    out.extra.push(("lbar_table.json".into(), table.to_json()));
    // Sections through the origin along each axis.
    let grid = &table.q_grid;
    let mut series = Vec::new();
    for axis in 0..grid.dim() {
        let centre = grid.n.iter().map(|n| n / 2).collect::<Vec<_>>();
        let mut raw = Vec::new();
        let mut conv = Vec::new();
        for i in 0..grid.n[axis] {
            let mut idx = centre.clone();
            idx[axis] = i;
            let k = grid.flat(&idx);
            let q = grid.node(k)[axis];
            raw.push((q, table.values[k]));
            conv.push((q, table.convexified[k]));
        }
        series.push(Series { label: format!("raw, axis {}", axis + 1), points: raw });
        series.push(Series { label: format!("convex, axis {}", axis + 1), points: conv });
    }
    out.plots.push(("lbar_sections.svg".into(), line_plot("effective Lagrangian sections", "q", "L", &series)));
    Ok(())
}
