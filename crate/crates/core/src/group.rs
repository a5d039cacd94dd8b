//! Carnot groups in exponential coordinates.

use std::fmt;
use std::ops::Index;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{input, Error, Result};
use crate::rng::Stream;

pub const MAX_DIM: usize = 8;
pub const MAX_RANK: usize = 4;

/// A point of the group, stored inline.
#[derive(Clone, Copy, PartialEq)]
pub struct GroupPoint {
    c: [f64; MAX_DIM],
    n: u8,
}

impl GroupPoint {
    pub fn new(coords: &[f64]) -> Result<Self> {
        if coords.is_empty() || coords.len() > MAX_DIM {
            return input(format!("point dimension {} outside 1..={MAX_DIM}", coords.len()));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return input("point has non-finite coordinates");
        }
        Ok(Self::from_slice(coords))
    }

    pub(crate) fn from_slice(coords: &[f64]) -> Self {
        let mut c = [0.0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Self { c, n: coords.len() as u8 }
    }

    pub fn zeros(n: usize) -> Self {
        Self { c: [0.0; MAX_DIM], n: n as u8 }
    }

    pub fn dim(&self) -> usize {
        self.n as usize
    }

    pub fn coords(&self) -> &[f64] {
        &self.c[..self.n as usize]
    }

    pub(crate) fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.c[..self.n as usize]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.coords().to_vec()
    }

    pub fn is_finite(&self) -> bool {
        self.coords().iter().all(|v| v.is_finite())
    }

    /// Largest absolute coordinate difference.
    pub fn max_abs_diff(&self, other: &GroupPoint) -> f64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn euclid_dist(&self, other: &GroupPoint) -> f64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl Index<usize> for GroupPoint {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.coords()[i]
    }
}

impl fmt::Debug for GroupPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.coords()).finish()
    }
}

impl Serialize for GroupPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for GroupPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        GroupPoint::new(&v).map_err(serde::de::Error::custom)
    }
}

/// Closed-form data of a group law in exponential coordinates.
///
/// `compose` and `a_matrix` are required. The remaining methods have generic
/// defaults; built-in groups override them with exact formulas.
pub trait GroupLaw: Send + Sync + fmt::Debug {
    fn compose(&self, x: &[f64], y: &[f64], out: &mut [f64]);

    /// Block `A` of the vector-field matrix, row-major `m × (N−m)`, as a
    /// function of the horizontal coordinates only.
    fn a_matrix(&self, horizontal: &[f64], out: &mut [f64]);

    fn inverse(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = -v;
        }
    }

    /// Endpoint of the constant-velocity flow from the identity, if known in
    /// closed form.
    fn x_line(&self, _q: &[f64], _t: f64, _out: &mut [f64]) -> bool {
        false
    }

    /// Homogeneous norm override.
    fn hnorm(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Per-coordinate bound on `|(y∘w)_i − y_i| / ‖w‖_h` for `|π(y)| ≤ radius`
    /// and `‖w‖_h ≤ 1`.
    fn translation_sensitivity(&self, _radius: f64) -> Option<Vec<f64>> {
        None
    }

    /// Spacing of a discrete translation subgroup `Γ = Π spacing_i·Z` on
    /// which vertical elements act additively from the left.
    fn lattice(&self) -> Option<Vec<f64>> {
        None
    }

    /// Vertical connector: pieces `(duration, velocity)` from the identity to
    /// a point with zero horizontal part.
    fn vertical_connector(&self, _v: &[f64]) -> Option<Vec<(f64, Vec<f64>)>> {
        None
    }
}

#[derive(Debug)]
struct Heisenberg1;

impl GroupLaw for Heisenberg1 {
    fn compose(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        out[0] = x[0] + y[0];
        out[1] = x[1] + y[1];
        out[2] = x[2] + y[2] + 0.5 * (x[0] * y[1] - x[1] * y[0]);
    }

    fn a_matrix(&self, h: &[f64], out: &mut [f64]) {
        out[0] = -0.5 * h[1];
        out[1] = 0.5 * h[0];
    }

    fn x_line(&self, q: &[f64], t: f64, out: &mut [f64]) -> bool {
        out[0] = q[0] * t;
        out[1] = q[1] * t;
        out[2] = 0.0;
        true
    }

    fn hnorm(&self, x: &[f64]) -> Option<f64> {
        let r2 = x[0] * x[0] + x[1] * x[1];
        Some((r2 * r2 + x[2] * x[2]).sqrt().sqrt())
    }

    fn translation_sensitivity(&self, radius: f64) -> Option<Vec<f64>> {
        Some(vec![1.0, 1.0, 1.0 + radius])
    }

    fn lattice(&self) -> Option<Vec<f64>> {
        Some(vec![1.0, 1.0, 0.5])
    }

    fn vertical_connector(&self, v: &[f64]) -> Option<Vec<(f64, Vec<f64>)>> {
        let c = v[2];
        if c == 0.0 {
            return Some(Vec::new());
        }
        let s = c.abs().sqrt();
        let sides: [[f64; 2]; 4] = if c > 0.0 {
            [[s, 0.0], [0.0, s], [-s, 0.0], [0.0, -s]]
        } else {
            [[0.0, s], [s, 0.0], [0.0, -s], [-s, 0.0]]
        };
        Some(sides.iter().map(|v| (1.0, v.to_vec())).collect())
    }
}

/// Engel group with `X1 = ∂1`, `X2 = ∂2 + x1∂3 + (x1²/2)∂4`.
#[derive(Debug)]
struct Engel;

impl GroupLaw for Engel {
    fn compose(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        out[0] = x[0] + y[0];
        out[1] = x[1] + y[1];
        out[2] = x[2] + y[2] + x[0] * y[1];
        out[3] = x[3] + y[3] + x[0] * y[2] + 0.5 * x[0] * x[0] * y[1];
    }

    fn a_matrix(&self, h: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
        out[1] = 0.0;
        out[2] = h[0];
        out[3] = 0.5 * h[0] * h[0];
    }

    fn inverse(&self, x: &[f64], out: &mut [f64]) {
        out[0] = -x[0];
        out[1] = -x[1];
        out[2] = -x[2] + x[0] * x[1];
        out[3] = -x[3] + x[0] * x[2] - 0.5 * x[0] * x[0] * x[1];
    }

    fn x_line(&self, q: &[f64], t: f64, out: &mut [f64]) -> bool {
        out[0] = q[0] * t;
        out[1] = q[1] * t;
        out[2] = 0.5 * q[0] * q[1] * t * t;
        out[3] = q[0] * q[0] * q[1] * t * t * t / 6.0;
        true
    }

    fn translation_sensitivity(&self, radius: f64) -> Option<Vec<f64>> {
        Some(vec![1.0, 1.0, 1.0 + radius, 1.0 + radius + 0.5 * radius * radius])
    }

    fn lattice(&self) -> Option<Vec<f64>> {
        Some(vec![1.0, 1.0, 1.0, 0.5])
    }

    fn vertical_connector(&self, v: &[f64]) -> Option<Vec<(f64, Vec<f64>)>> {
        // A loop [X1 a, X2 b, X1 −a, X2 −b] yields (0, 0, ab, a²b/2); a pair of
        // loops with opposite `a` yields (0, 0, 0, a²b).
        let mut pieces = Vec::new();
        let loop_pieces = |a: f64, b: f64, out: &mut Vec<(f64, Vec<f64>)>| {
            out.push((1.0, vec![a, 0.0]));
            out.push((1.0, vec![0.0, b]));
            out.push((1.0, vec![-a, 0.0]));
            out.push((1.0, vec![0.0, -b]));
        };
        let c = v[2];
        let mut d = v[3];
        if c != 0.0 {
            let a = c.abs().sqrt();
            let b = c.signum() * a;
            loop_pieces(a, b, &mut pieces);
            d -= 0.5 * a * a * b;
        }
        if d != 0.0 {
            let a = d.abs().cbrt();
            let b = d.signum() * a;
            loop_pieces(a, b, &mut pieces);
            loop_pieces(-a, b, &mut pieces);
        }
        Some(pieces)
    }
}

struct Inner {
    name: String,
    dim: usize,
    rank: usize,
    weights: Vec<u32>,
    step: u32,
    norm_exp: f64,
    cc_equivalence: f64,
    law: Box<dyn GroupLaw>,
}

/// A Carnot group: dimensions, dilation weights and a group law.
#[derive(Clone)]
pub struct GroupSpec {
    inner: Arc<Inner>,
}

impl fmt::Debug for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupSpec")
            .field("name", &self.inner.name)
            .field("dim", &self.inner.dim)
            .field("rank", &self.inner.rank)
            .field("weights", &self.inner.weights)
            .finish()
    }
}

pub const BUILTIN_GROUPS: [&str; 2] = ["heisenberg1", "engel"];

impl GroupSpec {
    pub fn heisenberg1() -> Self {
        Self::build("heisenberg1", 2, vec![1, 1, 2], 1.01, Box::new(Heisenberg1))
    }

    pub fn engel() -> Self {
        Self::build("engel", 2, vec![1, 1, 2, 3], 1.01, Box::new(Engel))
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "heisenberg1" => Ok(Self::heisenberg1()),
            "engel" => Ok(Self::engel()),
            other => input(format!("unknown group `{other}` (expected one of {BUILTIN_GROUPS:?})")),
        }
    }

    fn build(name: &str, rank: usize, weights: Vec<u32>, cc: f64, law: Box<dyn GroupLaw>) -> Self {
        let step = *weights.iter().max().unwrap_or(&1);
        let fact: u32 = (1..=step).product();
        Self {
            inner: Arc::new(Inner {
                name: name.to_string(),
                dim: weights.len(),
                rank,
                weights,
                step,
                norm_exp: 2.0 * fact as f64,
                cc_equivalence: cc,
                law,
            }),
        }
    }

    /// Register a user-supplied law after running the structural checks.
    ///
    /// `cc_equivalence` is the constant `c` with `d_CC ≥ ‖·‖_h / c`.
    pub fn register(
        name: &str,
        rank: usize,
        weights: Vec<u32>,
        cc_equivalence: f64,
        law: impl GroupLaw + 'static,
    ) -> Result<Self> {
        let n = weights.len();
        if n == 0 || n > MAX_DIM {
            return input(format!("dimension {n} outside 1..={MAX_DIM}"));
        }
        if rank == 0 || rank > n || rank > MAX_RANK {
            return input(format!("rank {rank} invalid for dimension {n}"));
        }
        if weights[..rank].iter().any(|&w| w != 1) || weights.iter().any(|&w| w == 0) {
            return input("horizontal weights must be 1 and all weights positive");
        }
        if !(cc_equivalence.is_finite() && cc_equivalence > 0.0) {
            return input("cc_equivalence must be positive");
        }
        let g = Self::build(name, rank, weights, cc_equivalence, Box::new(law));
        let failures = g.check_law(200, 0x5eed);
        if failures.is_empty() {
            Ok(g)
        } else {
            input(format!("group `{name}` failed registration: {}", failures.join("; ")))
        }
    }

    /// Structural checks on random samples; returns failure descriptions.
    pub fn check_law(&self, samples: usize, seed: u64) -> Vec<String> {
        let mut fails = Vec::new();
        let mut rng = Stream::new(seed, "group-check", 0);
        let n = self.dim();
        let m = self.rank();
        let e = self.identity();
        for k in 0..samples {
            let x = self.random_point(&mut rng, 1.5);
            let y = self.random_point(&mut rng, 1.5);
            let z = self.random_point(&mut rng, 1.5);
            let tol = 1e-9;
            let lhs = self.compose(&self.compose(&x, &y), &z);
            let rhs = self.compose(&x, &self.compose(&y, &z));
            if lhs.max_abs_diff(&rhs) > tol {
                fails.push(format!("associativity sample {k}"));
            }
            if self.compose(&x, &e).max_abs_diff(&x) > tol || self.compose(&e, &x).max_abs_diff(&x) > tol {
                fails.push(format!("identity sample {k}"));
            }
            if self.compose(&x, &self.inverse(&x)).max_abs_diff(&e) > tol
                || self.compose(&self.inverse(&x), &x).max_abs_diff(&e) > tol
            {
                fails.push(format!("inverse sample {k}"));
            }
            let lam = rng.range(0.3, 3.0);
            let d1 = self.scale(lam, &self.compose(&x, &y));
            let d2 = self.compose(&self.scale(lam, &x), &self.scale(lam, &y));
            if d1.max_abs_diff(&d2) > tol * (1.0 + lam.powi(self.step() as i32) * 10.0) {
                fails.push(format!("dilation automorphism sample {k}"));
            }
            // σ rows against finite differences of right multiplication.
            let sig = self.sigma_matrix(&x);
            let h = 1e-6;
            for (j, row) in sig.iter().enumerate() {
                let mut ep = vec![0.0; n];
                ep[j] = h;
                let mut em = vec![0.0; n];
                em[j] = -h;
                let xp = self.compose(&x, &GroupPoint::from_slice(&ep));
                let xm = self.compose(&x, &GroupPoint::from_slice(&em));
                for i in 0..n {
                    let fd = (xp[i] - xm[i]) / (2.0 * h);
                    if (fd - row[i]).abs() > 1e-5 * (1.0 + row[i].abs()) {
                        fails.push(format!("vector field {j} coordinate {i} sample {k}"));
                    }
                }
            }
            let a0 = self.a_block(&x);
            let a1 = self.a_block(&self.scale(lam, &x));
            for j in 0..m {
                for i in 0..n - m {
                    let p = lam.powi(self.weights()[m + i] as i32 - 1);
                    let idx = j * (n - m) + i;
                    if (a1[idx] - p * a0[idx]).abs() > 1e-9 * (1.0 + a1[idx].abs()) {
                        fails.push(format!("A homogeneity entry ({j},{i}) sample {k}"));
                    }
                }
            }
        }
        fails.truncate(20);
        fails
    }

    pub fn name(&self) -> &str {
        &self.inner.name
    }
    pub fn dim(&self) -> usize {
        self.inner.dim
    }
    pub fn rank(&self) -> usize {
        self.inner.rank
    }
    pub fn weights(&self) -> &[u32] {
        &self.inner.weights
    }
    pub fn step(&self) -> u32 {
        self.inner.step
    }
    pub fn cc_equivalence(&self) -> f64 {
        self.inner.cc_equivalence
    }

    pub fn identity(&self) -> GroupPoint {
        GroupPoint::zeros(self.dim())
    }

    pub fn point(&self, coords: &[f64]) -> Result<GroupPoint> {
        if coords.len() != self.dim() {
            return input(format!(
                "{} expects {} coordinates, got {}",
                self.name(),
                self.dim(),
                coords.len()
            ));
        }
        GroupPoint::new(coords)
    }

    fn check_dim(&self, x: &GroupPoint) -> Result<()> {
        if x.dim() != self.dim() {
            return input(format!("point of dimension {} for group of dimension {}", x.dim(), self.dim()));
        }
        Ok(())
    }

    /// Group product `x∘y`. Panics on dimension mismatch; see [`Self::try_compose`].
    pub fn compose(&self, x: &GroupPoint, y: &GroupPoint) -> GroupPoint {
        assert!(x.dim() == self.dim() && y.dim() == self.dim(), "dimension mismatch");
        let mut out = GroupPoint::zeros(self.dim());
        self.inner.law.compose(x.coords(), y.coords(), out.coords_mut());
        out
    }

    pub fn try_compose(&self, x: &GroupPoint, y: &GroupPoint) -> Result<GroupPoint> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        Ok(self.compose(x, y))
    }

    pub fn inverse(&self, x: &GroupPoint) -> GroupPoint {
        assert!(x.dim() == self.dim(), "dimension mismatch");
        let mut out = GroupPoint::zeros(self.dim());
        self.inner.law.inverse(x.coords(), out.coords_mut());
        out
    }

    pub fn try_inverse(&self, x: &GroupPoint) -> Result<GroupPoint> {
        self.check_dim(x)?;
        Ok(self.inverse(x))
    }

    pub fn dilate(&self, lambda: f64, x: &GroupPoint) -> Result<GroupPoint> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return input(format!("dilation factor must be positive, got {lambda}"));
        }
        self.check_dim(x)?;
        Ok(self.scale(lambda, x))
    }

    /// Dilation without argument checks.
    pub(crate) fn scale(&self, lambda: f64, x: &GroupPoint) -> GroupPoint {
        let mut out = *x;
        for (v, &w) in out.coords_mut().iter_mut().zip(self.weights()) {
            *v *= lambda.powi(w as i32);
        }
        out
    }

    fn raw_norm(&self, x: &[f64]) -> f64 {
        let s = x
            .iter()
            .zip(self.weights())
            .map(|(v, &w)| v.abs().powf(1.0 / w as f64))
            .fold(0.0, f64::max);
        if s == 0.0 {
            return 0.0;
        }
        let p = self.inner.norm_exp;
        let sum: f64 = x
            .iter()
            .zip(self.weights())
            .map(|(v, &w)| (v.abs().powf(1.0 / w as f64) / s).powf(p))
            .sum();
        s * sum.powf(1.0 / p)
    }

    /// Homogeneous norm. Symmetrized with the inverse for the generic formula.
    pub fn hnorm(&self, x: &GroupPoint) -> f64 {
        if let Some(v) = self.inner.law.hnorm(x.coords()) {
            return v;
        }
        let xi = self.inverse(x);
        self.raw_norm(x.coords()).max(self.raw_norm(xi.coords()))
    }

    /// `‖y⁻¹∘x‖_h`.
    pub fn hdist(&self, x: &GroupPoint, y: &GroupPoint) -> f64 {
        self.hnorm(&self.compose(&self.inverse(y), x))
    }

    pub(crate) fn a_block(&self, x: &GroupPoint) -> Vec<f64> {
        let m = self.rank();
        let mut a = vec![0.0; m * (self.dim() - m)];
        self.inner.law.a_matrix(&x.coords()[..m], &mut a);
        a
    }

    /// Rows are the horizontal vector fields at `x`.
    pub fn sigma_matrix(&self, x: &GroupPoint) -> Vec<Vec<f64>> {
        let (n, m) = (self.dim(), self.rank());
        let a = self.a_block(x);
        (0..m)
            .map(|j| {
                let mut row = vec![0.0; n];
                row[j] = 1.0;
                row[m..].copy_from_slice(&a[j * (n - m)..(j + 1) * (n - m)]);
                row
            })
            .collect()
    }

    pub fn pi_m(&self, x: &GroupPoint) -> Vec<f64> {
        x.coords()[..self.rank()].to_vec()
    }

    /// Endpoint at time `t` of the constant-velocity flow from the identity.
    ///
    /// Horizontal coordinates move linearly and `A` depends only on them, so
    /// the vertical part is a polynomial integral evaluated exactly by
    /// Gauss-Legendre quadrature when no closed form is supplied.
    pub fn x_line_e(&self, q: &[f64], t: f64) -> GroupPoint {
        let (n, m) = (self.dim(), self.rank());
        let mut out = GroupPoint::zeros(n);
        if self.inner.law.x_line(q, t, out.coords_mut()) {
            return out;
        }
        let c = out.coords_mut();
        for j in 0..m {
            c[j] = q[j] * t;
        }
        let mut a = vec![0.0; m * (n - m)];
        let mut h = [0.0; MAX_RANK];
        for (node, weight) in GAUSS8 {
            let s = 0.5 * t * (1.0 + node);
            for j in 0..m {
                h[j] = q[j] * s;
            }
            self.inner.law.a_matrix(&h[..m], &mut a);
            for i in 0..n - m {
                let mut v = 0.0;
                for j in 0..m {
                    v += q[j] * a[j * (n - m) + i];
                }
                c[m + i] += 0.5 * t * weight * v;
            }
        }
        out
    }

    /// `start ∘ x_line_e(q, t)`.
    pub fn x_line(&self, start: &GroupPoint, q: &[f64], t: f64) -> GroupPoint {
        self.compose(start, &self.x_line_e(q, t))
    }

    /// Point of the X-plane of `x` reached with velocity `q` in unit time.
    pub fn x_plane_target(&self, x: &GroupPoint, q: &[f64]) -> GroupPoint {
        self.x_line(x, q, 1.0)
    }

    pub fn translation_sensitivity(&self, radius: f64) -> Vec<f64> {
        self.inner
            .law
            .translation_sensitivity(radius)
            .unwrap_or_else(|| {
                // Crude polynomial bound for custom laws.
                self.weights()
                    .iter()
                    .map(|&w| (1.0 + radius).powi(w as i32))
                    .collect()
            })
    }

    pub fn lattice(&self) -> Option<Vec<f64>> {
        self.inner.law.lattice()
    }

    pub(crate) fn vertical_connector(&self, v: &GroupPoint) -> Option<Vec<(f64, Vec<f64>)>> {
        self.inner.law.vertical_connector(v.coords())
    }

    /// Point with coordinates of homogeneous size about `scale`.
    pub fn random_point(&self, rng: &mut Stream, scale: f64) -> GroupPoint {
        let mut p = GroupPoint::zeros(self.dim());
        for (v, &w) in p.coords_mut().iter_mut().zip(self.weights()) {
            *v = rng.range(-1.0, 1.0) * scale.powi(w as i32);
        }
        p
    }
}

impl PartialEq for GroupSpec {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.inner.name == other.inner.name
    }
}

impl Serialize for GroupSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for GroupSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        GroupSpec::by_name(&name).map_err(|e: Error| serde::de::Error::custom(e.to_string()))
    }
}

const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];
