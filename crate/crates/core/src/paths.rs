//! Piecewise-constant horizontal controls and the curves they generate.

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::group::{GroupPoint, GroupSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub duration: f64,
    pub velocity: Vec<f64>,
}

/// Horizontal velocity, constant on each piece.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Piece>", into = "Vec<Piece>")]
pub struct Control {
    pieces: Vec<Piece>,
}

impl TryFrom<Vec<Piece>> for Control {
    type Error = Error;
    fn try_from(p: Vec<Piece>) -> Result<Self> {
        Control::new(p)
    }
}

impl From<Control> for Vec<Piece> {
    fn from(c: Control) -> Self {
        c.pieces
    }
}

impl Control {
    pub fn new(pieces: Vec<Piece>) -> Result<Self> {
        let m = pieces.first().map(|p| p.velocity.len()).unwrap_or(0);
        for (k, p) in pieces.iter().enumerate() {
            if !(p.duration > 0.0 && p.duration.is_finite()) {
                return input(format!("piece {k}: duration must be positive, got {}", p.duration));
            }
            if p.velocity.len() != m || p.velocity.iter().any(|v| !v.is_finite()) {
                return input(format!("piece {k}: velocity must be finite with length {m}"));
            }
        }
        Ok(Self { pieces })
    }

    pub(crate) fn from_pieces_unchecked(pieces: Vec<Piece>) -> Self {
        Self { pieces }
    }

    /// `n` equal pieces of velocity `q` covering `[0, t)`.
    pub fn constant(q: &[f64], t: f64, n: usize) -> Self {
        let d = t / n as f64;
        Self {
            pieces: (0..n).map(|_| Piece { duration: d, velocity: q.to_vec() }).collect(),
        }
    }

    /// Uniform grid with the given velocities.
    pub fn uniform(velocities: &[f64], rank: usize, t: f64) -> Self {
        let n = velocities.len() / rank;
        let d = t / n as f64;
        Self {
            pieces: velocities
                .chunks(rank)
                .map(|v| Piece { duration: d, velocity: v.to_vec() })
                .collect(),
        }
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn rank(&self) -> usize {
        self.pieces.first().map(|p| p.velocity.len()).unwrap_or(0)
    }

    pub fn total_time(&self) -> f64 {
        self.pieces.iter().map(|p| p.duration).sum()
    }

    /// `∫|α|`.
    pub fn length(&self) -> f64 {
        self.pieces.iter().map(|p| p.duration * norm(&p.velocity)).sum()
    }

    /// `∫|α|^λ`.
    pub fn power_integral(&self, lambda: f64) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.duration * norm(&p.velocity).powf(lambda))
            .sum()
    }

    pub fn max_speed(&self) -> f64 {
        self.pieces.iter().map(|p| norm(&p.velocity)).fold(0.0, f64::max)
    }

    pub fn concat(&self, other: &Control) -> Control {
        let mut pieces = self.pieces.clone();
        pieces.extend(other.pieces.iter().cloned());
        Control { pieces }
    }

    /// Append a rest piece of zero velocity.
    pub fn with_rest(&self, h: f64, rank: usize) -> Control {
        let mut pieces = self.pieces.clone();
        if h > 0.0 {
            pieces.push(Piece { duration: h, velocity: vec![0.0; rank] });
        }
        Control { pieces }
    }

    /// `α(s) ↦ Cα(Cs)`: total time divides by `C`, endpoint unchanged.
    pub fn time_rescale(&self, c: f64) -> Result<Control> {
        if !(c > 0.0 && c.is_finite()) {
            return input("time rescale factor must be positive");
        }
        Ok(Control {
            pieces: self
                .pieces
                .iter()
                .map(|p| Piece {
                    duration: p.duration / c,
                    velocity: p.velocity.iter().map(|v| v * c).collect(),
                })
                .collect(),
        })
    }

    /// `α ↦ λα`.
    pub fn dilate(&self, lambda: f64) -> Control {
        Control {
            pieces: self
                .pieces
                .iter()
                .map(|p| Piece {
                    duration: p.duration,
                    velocity: p.velocity.iter().map(|v| v * lambda).collect(),
                })
                .collect(),
        }
    }

    /// Same path traversed at constant speed over total time `t`.
    pub fn constant_speed(&self, t: f64) -> Control {
        let len = self.length();
        let rank = self.rank();
        if len == 0.0 {
            return Control::constant(&vec![0.0; rank], t, 1);
        }
        let pieces = self
            .pieces
            .iter()
            .filter(|p| norm(&p.velocity) > 0.0)
            .map(|p| {
                let l = p.duration * norm(&p.velocity);
                let d = t * l / len;
                Piece {
                    duration: d,
                    velocity: p.velocity.iter().map(|v| v * p.duration / d).collect(),
                }
            })
            .collect();
        Control { pieces }
    }

    /// Time averages of the velocity over `n` equal cells of `[0, T)`.
    pub fn resample_uniform(&self, n: usize) -> Control {
        let rank = self.rank();
        let t = self.total_time();
        let h = t / n as f64;
        let mut out = vec![0.0; n * rank];
        let mut s0 = 0.0;
        for p in &self.pieces {
            let s1 = s0 + p.duration;
            let k0 = ((s0 / h).floor() as usize).min(n - 1);
            let k1 = ((s1 / h).ceil() as usize).min(n);
            for k in k0..k1 {
                let a = s0.max(k as f64 * h);
                let b = s1.min((k + 1) as f64 * h);
                if b > a {
                    for j in 0..rank {
                        out[k * rank + j] += (b - a) / h * p.velocity[j];
                    }
                }
            }
            s0 = s1;
        }
        Control::uniform(&out, rank, t)
    }

    pub fn velocity_at(&self, s: f64) -> &[f64] {
        let mut acc = 0.0;
        for p in &self.pieces {
            acc += p.duration;
            if s < acc {
                return &p.velocity;
            }
        }
        &self.pieces.last().expect("empty control").velocity
    }

    /// `∫|α − β|` over the common horizon.
    pub fn l1_distance(&self, other: &Control) -> f64 {
        let mut cuts: Vec<f64> = Vec::new();
        let mut acc = 0.0;
        for p in &self.pieces {
            acc += p.duration;
            cuts.push(acc);
        }
        acc = 0.0;
        for p in &other.pieces {
            acc += p.duration;
            cuts.push(acc);
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let end = self.total_time().min(other.total_time());
        let mut prev = 0.0;
        let mut sum = 0.0;
        for c in cuts {
            let c = c.min(end);
            if c > prev {
                let mid = 0.5 * (prev + c);
                let a = self.velocity_at(mid);
                let b = other.velocity_at(mid);
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                sum += d * (c - prev);
                prev = c;
            }
        }
        sum
    }

    /// Endpoint of the curve from `start`.
    pub fn endpoint(&self, g: &GroupSpec, start: &GroupPoint) -> GroupPoint {
        let mut x = *start;
        for p in &self.pieces {
            x = g.compose(&x, &g.x_line_e(&p.velocity, p.duration));
        }
        x
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A control together with the integrated curve.
#[derive(Clone, Debug, Serialize)]
pub struct HorizontalPath {
    pub start: GroupPoint,
    pub control: Control,
    pub samples: Vec<(f64, GroupPoint)>,
    /// Endpoint difference against integration at doubled resolution.
    pub integration_error: f64,
}

/// Integrate `ξ' = Σ αᵢ Xᵢ(ξ)` piece by piece with exact X-line increments.
pub fn integrate(
    g: &GroupSpec,
    start: &GroupPoint,
    control: &Control,
    steps_per_piece: usize,
) -> Result<HorizontalPath> {
    if steps_per_piece == 0 {
        return input("steps_per_piece must be at least 1");
    }
    if start.dim() != g.dim() {
        return input("start point dimension does not match the group");
    }
    if !control.is_empty() && control.rank() != g.rank() {
        return input(format!("control rank {} but group rank {}", control.rank(), g.rank()));
    }
    let walk = |steps: usize, record: bool| {
        let mut x = *start;
        let mut t = 0.0;
        let mut samples = Vec::new();
        if record {
            samples.push((0.0, x));
        }
        for p in control.pieces() {
            let h = p.duration / steps as f64;
            let inc = g.x_line_e(&p.velocity, h);
            let base = x;
            for k in 1..=steps {
                // Re-anchor at the piece start each substep to avoid drift.
                x = if k == steps {
                    g.compose(&base, &g.x_line_e(&p.velocity, p.duration))
                } else {
                    g.compose(&x, &inc)
                };
                if record {
                    samples.push((t + k as f64 * h, x));
                }
            }
            t += p.duration;
        }
        (x, samples)
    };
    let (end, samples) = walk(steps_per_piece, true);
    let (end2, _) = walk(2 * steps_per_piece, false);
    Ok(HorizontalPath {
        start: *start,
        control: control.clone(),
        samples,
        integration_error: end.max_abs_diff(&end2),
    })
}

impl HorizontalPath {
    pub fn end(&self) -> GroupPoint {
        self.samples.last().map(|s| s.1).unwrap_or(self.start)
    }

    pub fn total_time(&self) -> f64 {
        self.control.total_time()
    }

    /// Left translation by `z`; the control is unchanged.
    pub fn left_translate(&self, g: &GroupSpec, z: &GroupPoint) -> HorizontalPath {
        HorizontalPath {
            start: g.compose(z, &self.start),
            control: self.control.clone(),
            samples: self.samples.iter().map(|(t, p)| (*t, g.compose(z, p))).collect(),
            integration_error: self.integration_error,
        }
    }

    /// Reparametrize `s ↦ Cs`: total time divides by `C`.
    pub fn time_rescale(&self, c: f64) -> Result<HorizontalPath> {
        let control = self.control.time_rescale(c)?;
        Ok(HorizontalPath {
            start: self.start,
            control,
            samples: self.samples.iter().map(|(t, p)| (t / c, *p)).collect(),
            integration_error: self.integration_error,
        })
    }

    /// Dilation by `λ`, re-integrated from `δ_λ(start)`.
    pub fn dilate(&self, g: &GroupSpec, lambda: f64, steps_per_piece: usize) -> Result<HorizontalPath> {
        let start = g.dilate(lambda, &self.start)?;
        integrate(g, &start, &self.control.dilate(lambda), steps_per_piece)
    }

    /// CSV with header `time,x1,...,xN`.
    pub fn to_csv(&self) -> String {
        let n = self.start.dim();
        let mut s = String::from("time");
        for i in 1..=n {
            s.push_str(&format!(",x{i}"));
        }
        s.push('\n');
        for (t, p) in &self.samples {
            s.push_str(&t.to_string());
            for v in p.coords() {
                s.push(',');
                s.push_str(&v.to_string());
            }
            s.push('\n');
        }
        s
    }
}

pub fn left_translate_path(g: &GroupSpec, path: &HorizontalPath, z: &GroupPoint) -> HorizontalPath {
    path.left_translate(g, z)
}

pub fn time_rescale_path(path: &HorizontalPath, c: f64) -> Result<HorizontalPath> {
    path.time_rescale(c)
}

pub fn dilate_path(g: &GroupSpec, path: &HorizontalPath, lambda: f64, steps_per_piece: usize) -> Result<HorizontalPath> {
    path.dilate(g, lambda, steps_per_piece)
}

/// Two-sided bracket on the Carnot-Carathéodory distance.
#[derive(Clone, Debug, Serialize)]
pub struct CcBracket {
    pub lower: f64,
    pub upper: f64,
    /// Control driving `y` to `x` with length `upper`.
    pub witness: Control,
}

/// Effort spent polishing the connector witness.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CcBudget {
    /// Uniform pieces used when polishing; 0 disables polishing.
    pub pieces: usize,
    pub iterations: usize,
}

impl Default for CcBudget {
    fn default() -> Self {
        Self { pieces: 12, iterations: 60 }
    }
}

impl CcBudget {
    pub const NONE: CcBudget = CcBudget { pieces: 0, iterations: 0 };
}

/// Lower bound on `d_CC(x, y)`.
pub fn cc_lower(g: &GroupSpec, x: &GroupPoint, y: &GroupPoint) -> f64 {
    let z = g.compose(&g.inverse(y), x);
    norm(&g.pi_m(&z)).max(g.hnorm(&z) / g.cc_equivalence())
}

/// Horizontal segment followed by layer-wise loops, from the identity to `z`.
pub fn raw_connector(g: &GroupSpec, z: &GroupPoint) -> Result<Control> {
    let m = g.rank();
    let h = g.pi_m(z);
    let mut pieces = Vec::new();
    if norm(&h) > 0.0 {
        pieces.push(Piece { duration: 1.0, velocity: h.clone() });
    }
    let seg = g.x_line_e(&h, 1.0);
    let rem = g.compose(&g.inverse(&seg), z);
    let scale = 1.0 + z.coords().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let negligible = rem.coords().iter().all(|v| v.abs() <= 1e-13 * scale);
    if !negligible {
        match g.vertical_connector(&rem) {
            Some(extra) => {
                for (d, v) in extra {
                    pieces.push(Piece { duration: d, velocity: v });
                }
            }
            None => {
                let c = crate::solver::numeric_connector(g, &rem)?;
                pieces.extend(c.pieces().iter().cloned());
            }
        }
    }
    if pieces.is_empty() {
        pieces.push(Piece { duration: 1.0, velocity: vec![0.0; m] });
    }
    Ok(Control { pieces })
}

/// Bracket `d_CC(x, y)`; the witness drives `y` to `x`.
pub fn cc_bracket(g: &GroupSpec, x: &GroupPoint, y: &GroupPoint, budget: CcBudget) -> Result<CcBracket> {
    if x.dim() != g.dim() || y.dim() != g.dim() {
        return input("point dimension does not match the group");
    }
    let lower = cc_lower(g, x, y);
    let z = g.compose(&g.inverse(y), x);
    let raw = raw_connector(g, &z)?;
    let mut witness = raw.constant_speed(1.0);
    if budget.pieces > 0 && budget.iterations > 0 && lower > 0.0 {
        if let Some(better) = crate::solver::polish_connector(g, &z, &witness, budget) {
            if better.length() < witness.length() {
                witness = better;
            }
        }
    }
    let mut upper = witness.length();
    if lower == 0.0 {
        upper = 0.0;
        witness = Control::constant(&vec![0.0; g.rank()], 1.0, 1);
    }
    Ok(CcBracket { lower, upper: upper.max(lower), witness })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heisenberg_integration_examples() {
        let g = GroupSpec::heisenberg1();
        let e = g.identity();
        let c = Control::constant(&[1.0, 0.0], 1.0, 1);
        assert_eq!(integrate(&g, &e, &c, 4).unwrap().end().coords(), &[1.0, 0.0, 0.0]);
        let s = g.point(&[1.0, 0.0, 0.0]).unwrap();
        let c = Control::constant(&[0.0, 1.0], 1.0, 1);
        let end = integrate(&g, &s, &c, 8).unwrap().end();
        assert!(end.max_abs_diff(&g.point(&[1.0, 1.0, 0.5]).unwrap()) < 1e-15);
        let square = Control::new(
            [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
                .iter()
                .map(|v| Piece { duration: 1.0, velocity: v.to_vec() })
                .collect(),
        )
        .unwrap();
        let end = integrate(&g, &e, &square, 3).unwrap().end();
        assert!(end.max_abs_diff(&g.point(&[0.0, 0.0, 1.0]).unwrap()) < 1e-15);
    }

    #[test]
    fn bracket_examples() {
        let g = GroupSpec::heisenberg1();
        let e = g.identity();
        let b = cc_bracket(&g, &e, &g.point(&[1.0, 0.0, 0.0]).unwrap(), CcBudget::default()).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-12 && (b.upper - 1.0).abs() < 1e-9);
        let b = cc_bracket(&g, &g.point(&[0.0, 0.0, 1.0]).unwrap(), &e, CcBudget::NONE).unwrap();
        assert!(b.upper <= 4.0 + 1e-12 && b.lower <= b.upper);
        let x = g.point(&[0.3, 0.2, 0.1]).unwrap();
        let b = cc_bracket(&g, &x, &x, CcBudget::default()).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
    }

    #[test]
    fn connector_reaches_target() {
        for g in [GroupSpec::heisenberg1(), GroupSpec::engel()] {
            let mut rng = crate::rng::Stream::new(5, "conn", 0);
            for _ in 0..50 {
                let x = g.random_point(&mut rng, 2.0);
                let y = g.random_point(&mut rng, 2.0);
                let b = cc_bracket(&g, &x, &y, CcBudget::NONE).unwrap();
                let end = b.witness.endpoint(&g, &y);
                assert!(end.max_abs_diff(&x) < 1e-10, "{:?} {:?} {:?}", g.name(), end, x);
                assert!(b.lower <= b.upper + 1e-12);
            }
        }
    }

    #[test]
    fn resample_preserves_uniform_controls() {
        let c = Control::uniform(&[1.0, 2.0, 3.0, 4.0], 2, 2.0);
        let r = c.resample_uniform(4);
        assert_eq!(r.len(), 4);
        assert_eq!(r.pieces()[3].velocity, vec![3.0, 4.0]);
        assert!((r.total_time() - 2.0).abs() < 1e-15);
    }
}
