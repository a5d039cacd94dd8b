//! Descent over piecewise-constant controls.
//!
//! Endpoint constraints are kept by a minimum-norm Gauss-Newton restoration
//! after every step; the search direction is the gradient projected onto
//! the tangent space of the constraint.

use crate::environment::Lagrangian;
use crate::group::{GroupPoint, GroupSpec, MAX_DIM, MAX_RANK};
use crate::paths::{norm, Control, Piece};

/// Flat control: velocities `alpha[k*m..(k+1)*m]` held for `durations[k]`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Candidate {
    pub durations: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl Candidate {
    pub fn from_control(c: &Control) -> Self {
        Self {
            durations: c.pieces().iter().map(|p| p.duration).collect(),
            alpha: c.pieces().iter().flat_map(|p| p.velocity.iter().copied()).collect(),
        }
    }

    pub fn to_control(&self, m: usize, time_scale: f64) -> Control {
        Control::from_pieces_unchecked(
            self.durations
                .iter()
                .enumerate()
                .map(|(k, d)| Piece { duration: d * time_scale, velocity: self.alpha[k * m..(k + 1) * m].to_vec() })
                .collect(),
        )
    }

    pub fn total_time(&self) -> f64 {
        self.durations.iter().sum()
    }
}

pub(crate) enum Anchor<'a> {
    /// Start fixed, endpoint constrained to `target`.
    Fixed { start: GroupPoint, target: GroupPoint },
    /// End fixed, start free with a terminal cost on it.
    FreeStart { end: GroupPoint, cost: &'a (dyn Fn(&GroupPoint) -> f64 + Sync) },
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct OptSettings {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub fd_step: f64,
    /// Restoration stops once the residual is below this.
    pub restore_tol: f64,
    /// Residual accepted as feasible.
    pub accept_tol: f64,
}

pub(crate) struct Problem<'a> {
    pub g: &'a GroupSpec,
    pub lag: &'a dyn Lagrangian,
    pub sub: usize,
    pub anchor: Anchor<'a>,
    /// Multiplier on the action.
    pub weight: f64,
    pub cap: f64,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Evaluated {
    pub objective: f64,
    pub action: f64,
    pub residual: f64,
    pub start: GroupPoint,
}

impl<'a> Problem<'a> {
    fn m(&self) -> usize {
        self.g.rank()
    }

    fn increment(&self, a: &[f64], d: f64) -> GroupPoint {
        self.g.x_line_e(a, d)
    }

    /// Action of one piece started at `p0`.
    fn piece_action(&self, p0: &GroupPoint, a: &[f64], d: f64) -> f64 {
        let h = d / self.sub as f64;
        if self.lag.position_free() {
            return d * self.lag.eval(p0, a);
        }
        let mut s = 0.0;
        for j in 0..self.sub {
            let p = self.g.compose(p0, &self.increment(a, (j as f64 + 0.5) * h));
            s += self.lag.eval(&p, a);
        }
        s * h
    }

    /// Start points of every piece plus the final point.
    fn nodes(&self, c: &Candidate) -> Vec<GroupPoint> {
        let m = self.m();
        let n = c.durations.len();
        let mut pts = vec![self.g.identity(); n + 1];
        match &self.anchor {
            Anchor::Fixed { start, .. } => {
                pts[0] = *start;
                for k in 0..n {
                    pts[k + 1] = self.g.compose(&pts[k], &self.increment(&c.alpha[k * m..(k + 1) * m], c.durations[k]));
                }
            }
            Anchor::FreeStart { end, .. } => {
                pts[n] = *end;
                for k in (0..n).rev() {
                    let inc = self.increment(&c.alpha[k * m..(k + 1) * m], c.durations[k]);
                    pts[k] = self.g.compose(&pts[k + 1], &self.g.inverse(&inc));
                }
            }
        }
        pts
    }

    pub fn residual_of(&self, end: &GroupPoint) -> f64 {
        match &self.anchor {
            Anchor::Fixed { target, .. } => self.g.hdist(end, target),
            Anchor::FreeStart { .. } => 0.0,
        }
    }

    pub fn evaluate(&self, c: &Candidate) -> Evaluated {
        let m = self.m();
        let pts = self.nodes(c);
        let mut action = 0.0;
        for k in 0..c.durations.len() {
            action += self.piece_action(&pts[k], &c.alpha[k * m..(k + 1) * m], c.durations[k]);
        }
        let n = c.durations.len();
        let (terminal, residual) = match &self.anchor {
            Anchor::Fixed { .. } => (0.0, self.residual_of(&pts[n])),
            Anchor::FreeStart { cost, .. } => (cost(&pts[0]), 0.0),
        };
        Evaluated { objective: self.weight * action + terminal, action, residual, start: pts[0] }
    }

    /// Objective gradient in the velocities by a costate sweep: spatial
    /// derivatives of the cost come from forward differences at each sample,
    /// derivatives of the group law from central differences.
    fn gradient(&self, c: &Candidate, fd_step: f64) -> Vec<f64> {
        let g = self.g;
        let (m, nn, n) = (self.m(), g.dim(), c.durations.len());
        let pts = self.nodes(c);
        let free = self.lag.position_free();
        let sub = if free { 1 } else { self.sub };
        let fixed = matches!(self.anchor, Anchor::Fixed { .. });
        // Pieces hang off `base`: the start node when the start is fixed, the
        // end node when it is free. `step` maps base to the neighbouring node.
        let offset = |a: &[f64], d: f64, tau: f64| -> GroupPoint {
            if fixed {
                g.x_line_e(a, tau)
            } else {
                g.compose(&g.inverse(&g.x_line_e(a, d)), &g.x_line_e(a, tau))
            }
        };
        let step = |a: &[f64], d: f64| -> GroupPoint {
            let e = g.x_line_e(a, d);
            if fixed {
                e
            } else {
                g.inverse(&e)
            }
        };
        let mut lam = [0.0; MAX_DIM];
        if let Anchor::FreeStart { cost, .. } = &self.anchor {
            let p0 = pts[0];
            let c0 = cost(&p0);
            for i in 0..nn {
                let mut p = p0;
                let h = fd_step * (1.0 + p0[i].abs());
                p.coords_mut()[i] += h;
                lam[i] = (cost(&p) - c0) / h;
            }
        }
        let mut grad = vec![0.0; n * m];
        let order: Vec<usize> = if fixed { (0..n).rev().collect() } else { (0..n).collect() };
        let mut a = [0.0; MAX_RANK];
        let mut gq = [0.0; MAX_RANK];
        for k in order {
            a[..m].copy_from_slice(&c.alpha[k * m..(k + 1) * m]);
            let d = c.durations[k];
            let h = d / sub as f64;
            let base = if fixed { pts[k] } else { pts[k + 1] };
            let mut ga = [0.0; MAX_RANK];
            let mut next = [0.0; MAX_DIM];
            // Costate carried through the node map.
            let st = step(&a[..m], d);
            vjp_left(g, &base, &st, &lam[..nn], &mut next[..nn]);
            vjp_control(g, &base, &mut a, m, &lam[..nn], &mut ga, |v| step(v, d));
            for j in 0..sub {
                let tau = (j as f64 + 0.5) * h;
                let off = offset(&a[..m], d, tau);
                let x = g.compose(&base, &off);
                let l0 = self.lag.eval_grad_q(&x, &a[..m], &mut gq[..m]);
                for i in 0..m {
                    ga[i] += self.weight * h * gq[i];
                }
                if free {
                    continue;
                }
                let mut gx = [0.0; MAX_DIM];
                for i in 0..nn {
                    let mut xp = x;
                    let dx = fd_step * (1.0 + x[i].abs());
                    xp.coords_mut()[i] += dx;
                    gx[i] = self.weight * h * (self.lag.eval(&xp, &a[..m]) - l0) / dx;
                }
                vjp_left(g, &base, &off, &gx[..nn], &mut next[..nn]);
                vjp_control(g, &base, &mut a, m, &gx[..nn], &mut ga, |v| offset(v, d, tau));
            }
            grad[k * m..(k + 1) * m].copy_from_slice(&ga[..m]);
            lam = next;
        }
        grad
    }

    /// Brute-force forward-difference gradient, kept as a test oracle.
    #[cfg(test)]
    fn gradient_fd(&self, c: &Candidate, fd_step: f64) -> Vec<f64> {
        let base = self.evaluate(c).objective;
        let mut grad = vec![0.0; c.alpha.len()];
        let mut t = c.clone();
        for i in 0..c.alpha.len() {
            let h = fd_step * (1.0 + c.alpha[i].abs());
            t.alpha[i] = c.alpha[i] + h;
            grad[i] = (self.evaluate(&t).objective - base) / h;
            t.alpha[i] = c.alpha[i];
        }
        grad
    }

    /// Residual coordinates `target⁻¹ ∘ end`.
    fn residual_vec(&self, c: &Candidate) -> Vec<f64> {
        match &self.anchor {
            Anchor::Fixed { start, target } => {
                let end = c_endpoint(self.g, start, c);
                self.g.compose(&self.g.inverse(target), &end).to_vec()
            }
            Anchor::FreeStart { .. } => Vec::new(),
        }
    }

    /// Jacobian of the residual, `N × (n·m)` row-major, by central differences.
    fn jacobian(&self, c: &Candidate) -> Vec<f64> {
        let (g, m) = (self.g, self.m());
        let nn = g.dim();
        let n = c.durations.len();
        let (start, target) = match &self.anchor {
            Anchor::Fixed { start, target } => (*start, *target),
            Anchor::FreeStart { .. } => return Vec::new(),
        };
        let tinv = g.inverse(&target);
        let incs: Vec<GroupPoint> = (0..n).map(|k| self.increment(&c.alpha[k * m..(k + 1) * m], c.durations[k])).collect();
        let mut prefix = vec![start; n + 1];
        for k in 0..n {
            prefix[k + 1] = g.compose(&prefix[k], &incs[k]);
        }
        let mut suffix = vec![g.identity(); n + 1];
        for k in (0..n).rev() {
            suffix[k] = g.compose(&incs[k], &suffix[k + 1]);
        }
        let cols = n * m;
        let mut jac = vec![0.0; nn * cols];
        let mut a = [0.0; crate::group::MAX_RANK];
        for k in 0..n {
            let left = g.compose(&tinv, &prefix[k]);
            for j in 0..m {
                a[..m].copy_from_slice(&c.alpha[k * m..(k + 1) * m]);
                let h = 1e-6 * (1.0 + a[j].abs());
                a[j] += h;
                let plus = g.compose(&g.compose(&left, &self.increment(&a[..m], c.durations[k])), &suffix[k + 1]);
                a[j] -= 2.0 * h;
                let minus = g.compose(&g.compose(&left, &self.increment(&a[..m], c.durations[k])), &suffix[k + 1]);
                for i in 0..nn {
                    jac[i * cols + k * m + j] = (plus[i] - minus[i]) / (2.0 * h);
                }
            }
        }
        jac
    }

    fn clip(&self, c: &mut Candidate) {
        let m = self.m();
        for v in c.alpha.chunks_mut(m) {
            let s = norm(v);
            if s > self.cap {
                for x in v.iter_mut() {
                    *x *= self.cap / s;
                }
            }
        }
    }

    /// Project the endpoint back onto the target. Returns the final residual.
    pub fn restore(&self, c: &mut Candidate, tol: f64) -> f64 {
        if !matches!(self.anchor, Anchor::Fixed { .. }) {
            return 0.0;
        }
        let mut res = self.residual_of(&endpoint_of(self, c));
        let m = self.m();
        for _ in 0..40 {
            if res <= tol || !res.is_finite() {
                break;
            }
            let r = self.residual_vec(c);
            let jac = self.jacobian(c);
            let w: Vec<f64> = c.durations.iter().flat_map(|d| std::iter::repeat(1.0 / d).take(m)).collect();
            let step = min_norm_step(&jac, &w, &r);
            let Some(step) = step else { break };
            let mut lambda = 1.0;
            let mut improved = false;
            for _ in 0..12 {
                let mut trial = c.clone();
                for (a, s) in trial.alpha.iter_mut().zip(&step) {
                    *a -= lambda * s;
                }
                let tr = self.residual_of(&endpoint_of(self, &trial));
                if tr < res {
                    *c = trial;
                    res = tr;
                    improved = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !improved {
                break;
            }
        }
        res
    }

    /// Local descent from `c`; `None` if it cannot be made feasible.
    pub fn optimize(&self, mut c: Candidate, s: &OptSettings) -> Option<(Candidate, Evaluated)> {
        self.clip(&mut c);
        let res = self.restore(&mut c, s.restore_tol);
        if res > s.accept_tol {
            return None;
        }
        let m = self.m();
        let constrained = matches!(self.anchor, Anchor::Fixed { .. });
        let mut ev = self.evaluate(&c);
        let w: Vec<f64> = c.durations.iter().flat_map(|d| std::iter::repeat(1.0 / d).take(m)).collect();
        let total_t = c.total_time();
        let mut step = 1.0;
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut stall = 0;
        for _ in 0..s.max_iters {
            let grad = self.gradient(&c, s.fd_step);
            let mut dir: Vec<f64> = grad.iter().zip(&w).map(|(g, w)| -g * w).collect();
            if constrained {
                let jac = self.jacobian(&c);
                let jd = mat_vec(&jac, &dir);
                if let Some(corr) = min_norm_step(&jac, &w, &jd) {
                    for (d, k) in dir.iter_mut().zip(&corr) {
                        *d -= k;
                    }
                }
            }
            // Projected gradient in the dual metric. Differencing it rather
            // than the raw gradient picks up the curvature of the constraint.
            let pgrad: Vec<f64> = dir.iter().zip(&w).map(|(d, w)| -d / w).collect();
            if let Some((pa, pg)) = &prev {
                let mut sy = 0.0;
                let mut ss = 0.0;
                for i in 0..pgrad.len() {
                    let da = c.alpha[i] - pa[i];
                    sy += da * (pgrad[i] - pg[i]);
                    ss += da * da / w[i];
                }
                step = if sy > 0.0 { (ss / sy).clamp(1e-8, 1e4) } else { (step * 2.0).min(1e4) };
            }
            let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
            if !(slope < 0.0) || (-slope / total_t).sqrt() < 1e-12 * (1.0 + ev.objective.abs()) {
                break;
            }
            let mut accepted = None;
            let mut t = step;
            for _ in 0..30 {
                let mut trial = c.clone();
                for (a, d) in trial.alpha.iter_mut().zip(&dir) {
                    *a += t * d;
                }
                self.clip(&mut trial);
                let r = self.restore(&mut trial, s.restore_tol);
                if r <= s.accept_tol {
                    let te = self.evaluate(&trial);
                    if te.objective <= ev.objective + 1e-4 * t * slope {
                        accepted = Some((trial, te));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((nc, ne)) = accepted else { break };
            let gain = ev.objective - ne.objective;
            prev = Some((c.alpha.clone(), pgrad));
            c = nc;
            ev = ne;
            step = t;
            if gain <= s.rel_tol * (1.0 + ev.objective.abs()) {
                stall += 1;
                if stall >= 3 {
                    break;
                }
            } else {
                stall = 0;
            }
        }
        Some((c, ev))
    }
}

/// Adds `vᵀ ∂(p ∘ q)/∂p` at `p = base` to `out`.
fn vjp_left(g: &GroupSpec, base: &GroupPoint, q: &GroupPoint, v: &[f64], out: &mut [f64]) {
    if v.iter().all(|x| *x == 0.0) {
        return;
    }
    for i in 0..v.len() {
        let h = 1e-5 * (1.0 + base[i].abs());
        let mut p = *base;
        p.coords_mut()[i] += h;
        let plus = g.compose(&p, q);
        p.coords_mut()[i] -= 2.0 * h;
        let minus = g.compose(&p, q);
        out[i] += (0..v.len()).map(|r| v[r] * (plus[r] - minus[r])).sum::<f64>() / (2.0 * h);
    }
}

/// Adds `vᵀ ∂(base ∘ f(a))/∂a` to `out`.
fn vjp_control(
    g: &GroupSpec,
    base: &GroupPoint,
    a: &mut [f64; MAX_RANK],
    m: usize,
    v: &[f64],
    out: &mut [f64; MAX_RANK],
    f: impl Fn(&[f64]) -> GroupPoint,
) {
    if v.iter().all(|x| *x == 0.0) {
        return;
    }
    for i in 0..m {
        let orig = a[i];
        let h = 1e-6 * (1.0 + orig.abs());
        a[i] = orig + h;
        let plus = g.compose(base, &f(&a[..m]));
        a[i] = orig - h;
        let minus = g.compose(base, &f(&a[..m]));
        a[i] = orig;
        out[i] += (0..v.len()).map(|r| v[r] * (plus[r] - minus[r])).sum::<f64>() / (2.0 * h);
    }
}

pub(crate) fn c_endpoint(g: &GroupSpec, start: &GroupPoint, c: &Candidate) -> GroupPoint {
    let m = g.rank();
    let mut p = *start;
    for k in 0..c.durations.len() {
        p = g.compose(&p, &g.x_line_e(&c.alpha[k * m..(k + 1) * m], c.durations[k]));
    }
    p
}

fn endpoint_of(p: &Problem<'_>, c: &Candidate) -> GroupPoint {
    match &p.anchor {
        Anchor::Fixed { start, .. } => c_endpoint(p.g, start, c),
        Anchor::FreeStart { end, .. } => *end,
    }
}

fn mat_vec(a: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    if cols == 0 {
        return Vec::new();
    }
    a.chunks(cols).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// `W Jᵀ (J W Jᵀ)⁻¹ r`: the smallest `W⁻¹`-weighted step with `J·step = r`.
fn min_norm_step(jac: &[f64], w: &[f64], r: &[f64]) -> Option<Vec<f64>> {
    let rows = r.len();
    let cols = w.len();
    if rows == 0 {
        return Some(vec![0.0; cols]);
    }
    let mut mtx = vec![0.0; rows * rows];
    for i in 0..rows {
        for j in 0..=i {
            let mut s = 0.0;
            for k in 0..cols {
                s += jac[i * cols + k] * w[k] * jac[j * cols + k];
            }
            mtx[i * rows + j] = s;
            mtx[j * rows + i] = s;
        }
    }
    let trace: f64 = (0..rows).map(|i| mtx[i * rows + i]).sum();
    for i in 0..rows {
        mtx[i * rows + i] += 1e-14 * trace + 1e-300;
    }
    let y = solve_dense(&mut mtx, r.to_vec())?;
    Some(
        (0..cols)
            .map(|k| w[k] * (0..rows).map(|i| jac[i * cols + k] * y[i]).sum::<f64>())
            .collect(),
    )
}

/// Gaussian elimination with partial pivoting.
pub(crate) fn solve_dense(a: &mut [f64], mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap())?;
        if a[piv * n + col].abs() < 1e-300 || !a[piv * n + col].is_finite() {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        for i in col + 1..n {
            let f = a[i * n + col] / a[col * n + col];
            for k in col..n {
                a[i * n + k] -= f * a[col * n + k];
            }
            b[i] -= f * b[col];
        }
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Some(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EnvConfig, Environment, ModelLagrangian, ModelParams};

    fn lag(g: &GroupSpec) -> ModelLagrangian {
        let env = Environment::new(g, &EnvConfig::product(0.5).with_seed(11)).unwrap();
        ModelLagrangian { env, model: ModelParams::new(2.0).unwrap() }
    }

    fn candidate(m: usize) -> Candidate {
        let mut rng = crate::rng::Stream::new(4, "grad-test", 0);
        Candidate { durations: vec![0.25, 0.5, 0.3, 0.45, 0.5], alpha: (0..5 * m).map(|_| rng.normal()).collect() }
    }

    #[test]
    fn costate_gradient_matches_brute_force() {
        for g in [GroupSpec::heisenberg1(), GroupSpec::engel()] {
            let l = lag(&g);
            let start = g.point(&vec![0.3; g.dim()]).unwrap();
            let cost = |p: &GroupPoint| p.coords().iter().map(|v| v.sin()).sum::<f64>();
            let anchors = [
                Anchor::Fixed { start, target: start },
                Anchor::FreeStart { end: start, cost: &cost },
            ];
            for anchor in anchors {
                let p = Problem { g: &g, lag: &l, sub: 3, anchor, weight: 0.7, cap: f64::INFINITY };
                let c = candidate(g.rank());
                let a = p.gradient(&c, 1e-7);
                let b = p.gradient_fd(&c, 1e-7);
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() < 1e-4 * (1.0 + y.abs()), "{} {a:?} {b:?}", g.name());
                }
            }
        }
    }
}
