//! C interface to the homogenization laboratory.
//!
//! Every function returns a [`CarnotStatus`]. On failure a message is kept
//! per thread and can be read with [`carnot_last_error`]. Objects are
//! opaque handles created by `*_new` functions and released by the
//! matching `*_free`. Coordinates are passed as pointer plus length; the
//! length must equal the group dimension (or rank for slopes).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use carnot_homog::environment::{EnvConfig, Environment, ModelParams};
use carnot_homog::harness::{run, ExperimentConfig, RunOptions, TaskKind};
use carnot_homog::homog::{EffectiveLagrangian, EffectiveLagrangianTable};
use carnot_homog::solver::{l_eps, mu_q, ActionProblem, SolverConfig};
use carnot_homog::{Error, GroupPoint, GroupSpec};

/// Result codes shared by all entry points.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CarnotStatus {
    Ok = 0,
    /// Null pointer, bad length or invalid UTF-8.
    InvalidArgument = 1,
    Input = 2,
    Range = 3,
    Infeasible = 4,
    Budget = 5,
    Schema = 6,
    Io = 7,
    /// A verification run completed with failing checks.
    VerifyFailed = 8,
    /// Internal panic; the handle involved should be discarded.
    Panic = 9,
}

/// A built-in Carnot group.
pub struct CarnotGroup {
    inner: GroupSpec,
}

/// One seeded environment on a group.
pub struct CarnotEnv {
    inner: Environment,
}

/// An effective Lagrangian loaded from a saved table.
pub struct CarnotLbar {
    inner: EffectiveLagrangian,
    rank: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> CarnotStatus {
    match e {
        Error::Input(_) => CarnotStatus::Input,
        Error::Range(_) => CarnotStatus::Range,
        Error::Infeasible(_) => CarnotStatus::Infeasible,
        Error::Budget(_) => CarnotStatus::Budget,
        Error::Schema { .. } => CarnotStatus::Schema,
        Error::Io(_) => CarnotStatus::Io,
    }
}

struct Fail(CarnotStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn bad(msg: impl Into<String>) -> Fail {
    Fail(CarnotStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CarnotStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CarnotStatus::Ok,
        Ok(Err(Fail(s, m))) => {
            set_error(&m);
            s
        }
        Err(_) => {
            set_error("internal panic");
            CarnotStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(bad(format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| bad(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, want: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(bad(format!("{what} is null")));
    }
    if len != want {
        return Err(bad(format!("{what} has length {len}, expected {want}")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, want: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(bad(format!("{what} is null")));
    }
    if len != want {
        return Err(bad(format!("{what} has length {len}, expected {want}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| bad(format!("{what} is null")))
}

unsafe fn write<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(bad(format!("{what} is null")));
    }
    *out = v;
    Ok(())
}

unsafe fn point(g: &GroupSpec, p: *const f64, len: usize, what: &str) -> Result<GroupPoint, Fail> {
    Ok(g.point(slice_arg(p, len, g.dim(), what)?)?)
}

unsafe fn solver_config(json: *const c_char) -> Result<SolverConfig, Fail> {
    if json.is_null() {
        return Ok(SolverConfig::default());
    }
    let text = str_arg(json, "solver_json")?;
    let cfg: SolverConfig = serde_json::from_str(text)
        .map_err(|e| Fail(CarnotStatus::Schema, format!("solver_json: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Message of the last failure on this thread; empty when none.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn carnot_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn carnot_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Create a built-in group by name (`heisenberg1` or `engel`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn carnot_group_new(name: *const c_char, out: *mut *mut CarnotGroup) -> CarnotStatus {
    guard(|| {
        let g = GroupSpec::by_name(str_arg(name, "name")?)?;
        write(out, Box::into_raw(Box::new(CarnotGroup { inner: g })), "out")
    })
}

/// # Safety
/// `g` must come from [`carnot_group_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn carnot_group_free(g: *mut CarnotGroup) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Topological dimension; 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live group handle.
#[no_mangle]
pub unsafe extern "C" fn carnot_group_dim(g: *const CarnotGroup) -> usize {
    g.as_ref().map_or(0, |g| g.inner.dim())
}

/// Dimension of the horizontal layer; 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live group handle.
#[no_mangle]
pub unsafe extern "C" fn carnot_group_rank(g: *const CarnotGroup) -> usize {
    g.as_ref().map_or(0, |g| g.inner.rank())
}

/// `out = x ∘ y`.
///
/// # Safety
/// Pointers must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn carnot_group_compose(
    g: *const CarnotGroup,
    x: *const f64,
    y: *const f64,
    out: *mut f64,
    len: usize,
) -> CarnotStatus {
    guard(|| {
        let g = &handle(g, "group")?.inner;
        let z = g.try_compose(&point(g, x, len, "x")?, &point(g, y, len, "y")?)?;
        out_slice(out, len, g.dim(), "out")?.copy_from_slice(z.coords());
        Ok(())
    })
}

/// `out = x⁻¹`.
///
/// # Safety
/// Pointers must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn carnot_group_inverse(g: *const CarnotGroup, x: *const f64, out: *mut f64, len: usize) -> CarnotStatus {
    guard(|| {
        let g = &handle(g, "group")?.inner;
        let z = g.try_inverse(&point(g, x, len, "x")?)?;
        out_slice(out, len, g.dim(), "out")?.copy_from_slice(z.coords());
        Ok(())
    })
}

/// `out = δ_λ(x)`.
///
/// # Safety
/// Pointers must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn carnot_group_dilate(
    g: *const CarnotGroup,
    lambda: f64,
    x: *const f64,
    out: *mut f64,
    len: usize,
) -> CarnotStatus {
    guard(|| {
        let g = &handle(g, "group")?.inner;
        let z = g.dilate(lambda, &point(g, x, len, "x")?)?;
        out_slice(out, len, g.dim(), "out")?.copy_from_slice(z.coords());
        Ok(())
    })
}

/// Homogeneous norm of `x`.
///
/// # Safety
/// `x` must be valid for `len` doubles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn carnot_group_hnorm(g: *const CarnotGroup, x: *const f64, len: usize, out: *mut f64) -> CarnotStatus {
    guard(|| {
        let g = &handle(g, "group")?.inner;
        let n = g.hnorm(&point(g, x, len, "x")?);
        write(out, n, "out")
    })
}

/// Build an environment from a JSON environment block, for example
/// `{"kind": "product", "seed": 3, "v_amplitude": 0.5}`.
///
/// # Safety
/// `g` must be a live group, `config_json` NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn carnot_env_new(
    g: *const CarnotGroup,
    config_json: *const c_char,
    out: *mut *mut CarnotEnv,
) -> CarnotStatus {
    guard(|| {
        let g = &handle(g, "group")?.inner;
        let text = str_arg(config_json, "config_json")?;
        let cfg: EnvConfig =
            serde_json::from_str(text).map_err(|e| Fail(CarnotStatus::Schema, format!("config_json: {e}")))?;
        let env = Environment::new(g, &cfg)?;
        write(out, Box::into_raw(Box::new(CarnotEnv { inner: env })), "out")
    })
}

/// # Safety
/// `env` must come from [`carnot_env_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn carnot_env_free(env: *mut CarnotEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Coefficients `a(x)` and `V(x)`.
///
/// # Safety
/// `x` must be valid for `len` doubles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn carnot_env_sample(
    env: *const CarnotEnv,
    x: *const f64,
    len: usize,
    a_out: *mut f64,
    v_out: *mut f64,
) -> CarnotStatus {
    guard(|| {
        let env = &handle(env, "env")?.inner;
        let x = point(env.group(), x, len, "x")?;
        write(a_out, env.sample_a(&x), "a_out")?;
        write(v_out, env.sample_v(&x), "v_out")
    })
}

/// Minimal action from `start` to `target` over `[0, horizon]` at scale
/// `epsilon`. `solver_json` may be null for default settings.
///
/// # Safety
/// Points must be valid for `len` doubles; strings NUL-terminated or null;
/// outputs writable (`residual_out` may be null).
#[no_mangle]
pub unsafe extern "C" fn carnot_action(
    env: *const CarnotEnv,
    beta: f64,
    epsilon: f64,
    start: *const f64,
    target: *const f64,
    len: usize,
    horizon: f64,
    n_pieces: usize,
    solver_json: *const c_char,
    value_out: *mut f64,
    residual_out: *mut f64,
) -> CarnotStatus {
    guard(|| {
        let env = &handle(env, "env")?.inner;
        let g = env.group();
        let model = ModelParams::new(beta)?;
        let cfg = solver_config(solver_json)?;
        let mut p = ActionProblem::new(env, &model, epsilon, point(g, start, len, "start")?, point(g, target, len, "target")?, horizon);
        p.n_pieces = n_pieces;
        p.seed = cfg.master_seed;
        let r = l_eps(&p, &cfg)?;
        write(value_out, r.value, "value_out")?;
        if !residual_out.is_null() {
            *residual_out = r.endpoint_residual;
        }
        Ok(())
    })
}

/// Minimal action along the X-line of slope `q` between times `a` and `b`.
///
/// # Safety
/// `q` must be valid for `rank` doubles; `solver_json` NUL-terminated or
/// null; `value_out` writable.
#[no_mangle]
pub unsafe extern "C" fn carnot_mu(
    env: *const CarnotEnv,
    beta: f64,
    q: *const f64,
    rank: usize,
    a: f64,
    b: f64,
    n_pieces: usize,
    solver_json: *const c_char,
    value_out: *mut f64,
) -> CarnotStatus {
    guard(|| {
        let env = &handle(env, "env")?.inner;
        let q = slice_arg(q, rank, env.group().rank(), "q")?;
        let model = ModelParams::new(beta)?;
        let cfg = solver_config(solver_json)?;
        let r = mu_q(env, &model, q, a, b, n_pieces, &cfg, &[], cfg.master_seed)?;
        write(value_out, r.value, "value_out")
    })
}

/// Load an effective Lagrangian table saved by the command-line tool.
///
/// # Safety
/// `table_json` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn carnot_lbar_from_json(table_json: *const c_char, out: *mut *mut CarnotLbar) -> CarnotStatus {
    guard(|| {
        let table = EffectiveLagrangianTable::from_json(str_arg(table_json, "table_json")?)?;
        let rank = table.q_grid.dim();
        let lbar = EffectiveLagrangian::from_table(&table);
        write(out, Box::into_raw(Box::new(CarnotLbar { inner: lbar, rank })), "out")
    })
}

/// # Safety
/// `lbar` must come from [`carnot_lbar_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn carnot_lbar_free(lbar: *mut CarnotLbar) {
    if !lbar.is_null() {
        drop(Box::from_raw(lbar));
    }
}

/// Value of the convexified effective Lagrangian at slope `q`.
///
/// # Safety
/// `q` must be valid for `rank` doubles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn carnot_lbar_eval(lbar: *const CarnotLbar, q: *const f64, rank: usize, out: *mut f64) -> CarnotStatus {
    guard(|| {
        let l = handle(lbar, "lbar")?;
        let q = slice_arg(q, rank, l.rank, "q")?;
        write(out, l.inner.value(q), "out")
    })
}

/// Run a task (`action`, `mu`, `effective-lagrangian`, `limit-solve`,
/// `converge` or `verify`) from a JSON config file, as the command-line
/// tool does. `out_dir` may be null to use the config's directory; a
/// `workers` of 0 uses all cores.
///
/// # Safety
/// Strings must be NUL-terminated (`out_dir` may be null).
#[no_mangle]
pub unsafe extern "C" fn carnot_run(
    task: *const c_char,
    config_path: *const c_char,
    out_dir: *const c_char,
    workers: usize,
) -> CarnotStatus {
    guard(|| {
        let kind: TaskKind = serde_json::from_value(serde_json::Value::String(str_arg(task, "task")?.to_string()))
            .map_err(|_| bad("unknown task name"))?;
        let cfg = ExperimentConfig::from_file(std::path::Path::new(str_arg(config_path, "config_path")?))?;
        let opts = RunOptions {
            out_dir: if out_dir.is_null() { None } else { Some(PathBuf::from(str_arg(out_dir, "out_dir")?)) },
            workers: (workers > 0).then_some(workers),
            ..RunOptions::default()
        };
        let outcome = run(kind, &cfg, &opts)?;
        if outcome.success {
            Ok(())
        } else {
            Err(Fail(CarnotStatus::VerifyFailed, format!("verification failed: {}", outcome.manifest.summary)))
        }
    })
}
