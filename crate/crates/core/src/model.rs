//! Physical problem data: delta wells, the PT-symmetric double-delta trap and
//! the smooth background potentials that live between the deltas.
//!
//! Delta terms never appear as values of a potential. They are carried
//! symbolically by [`TrapSpec::deltas`] and enter the dynamics only through
//! the derivative-jump rule applied by the integrator.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::susy::TanhPiece;

/// Default well separation, calibrated so that the Hermitian ground state has
/// |E0| = 0.3920 (see [`crate::oracle::calibrate_separation`]).
pub const DEFAULT_SEPARATION: f64 = 2.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaWell {
    pub position: f64,
    pub strength: Complex64,
}

impl DeltaWell {
    pub fn new(position: f64, strength: Complex64) -> Result<Self> {
        if !position.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "delta position must be finite, got {position}"
            )));
        }
        if !(strength.re.is_finite() && strength.im.is_finite()) || strength.norm() == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "delta strength must be finite and nonzero, got {strength}"
            )));
        }
        Ok(Self { position, strength })
    }
}

/// The double-delta trap `nu delta(x - a/2) + nu* delta(x + a/2)` with
/// `nu = -1 + i gamma`, an optional contact nonlinearity `g |phi|^2` and the
/// constant energy shift used for exact SUSY.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrapSpec {
    pub separation: f64,
    pub gamma: f64,
    pub nonlinearity: f64,
    pub energy_shift: Complex64,
    /// Sorted by strictly increasing position.
    pub deltas: Vec<DeltaWell>,
}

impl TrapSpec {
    /// Strength of the delta at `+a/2` of the PT trap.
    pub fn nu(&self) -> Complex64 {
        Complex64::new(-1.0, self.gamma)
    }

    pub fn half_width(&self) -> f64 {
        self.deltas
            .iter()
            .map(|d| d.position.abs())
            .fold(0.0, f64::max)
    }

    /// Number of the region containing `x`: the count of deltas strictly to
    /// the left of `x`. A point sitting on a delta belongs to the region on
    /// its left.
    pub fn region_of(&self, x: f64) -> usize {
        self.deltas.iter().filter(|d| d.position < x).count()
    }

    pub fn region_count(&self) -> usize {
        self.deltas.len() + 1
    }

    /// The same trap with every delta strength negated, no self-interaction
    /// and the given constant shift. This is the delta content of the
    /// fermionic partner.
    pub fn flipped(&self, shift: Complex64) -> TrapSpec {
        TrapSpec {
            separation: self.separation,
            gamma: self.gamma,
            nonlinearity: 0.0,
            energy_shift: shift,
            deltas: self
                .deltas
                .iter()
                .map(|d| DeltaWell {
                    position: d.position,
                    strength: -d.strength,
                })
                .collect(),
        }
    }

    pub fn with_shift(&self, shift: Complex64) -> TrapSpec {
        TrapSpec {
            energy_shift: shift,
            ..self.clone()
        }
    }

    pub fn with_nonlinearity(&self, g: f64) -> TrapSpec {
        TrapSpec {
            nonlinearity: g,
            ..self.clone()
        }
    }
}

pub fn make_pt_trap(gamma: f64, a: f64, g: f64, shift: Complex64) -> Result<TrapSpec> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "separation must be positive, got {a}"
        )));
    }
    if !(g.is_finite() && g >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "nonlinearity must be non-negative, got {g}"
        )));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be non-negative, got {gamma}"
        )));
    }
    if !(shift.re.is_finite() && shift.im.is_finite()) {
        return Err(Error::InvalidParameter("energy shift must be finite".into()));
    }
    let nu = Complex64::new(-1.0, gamma);
    Ok(TrapSpec {
        separation: a,
        gamma,
        nonlinearity: g,
        energy_shift: shift,
        deltas: vec![
            DeltaWell::new(-a / 2.0, nu.conj())?,
            DeltaWell::new(a / 2.0, nu)?,
        ],
    })
}

/// Uniformly sampled complex function on a closed interval. End samples are
/// one-sided limits when the interval is bounded by deltas.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    pub x_start: f64,
    pub h: f64,
    pub values: Vec<Complex64>,
}

impl Segment {
    pub fn x_end(&self) -> f64 {
        self.x_start + self.h * (self.values.len().saturating_sub(1)) as f64
    }

    pub fn x_at(&self, i: usize) -> f64 {
        self.x_start + self.h * i as f64
    }

    /// Cubic Lagrange interpolation on the four nearest samples, shifted to
    /// stay inside the segment. Exact at nodes.
    pub fn eval(&self, x: f64) -> Complex64 {
        let n = self.values.len();
        if n == 1 {
            return self.values[0];
        }
        let t = (x - self.x_start) / self.h;
        let nearest = t.round();
        if (t - nearest).abs() < 1e-9 && nearest >= 0.0 && (nearest as usize) < n {
            return self.values[nearest as usize];
        }
        let order = n.min(4);
        let base = (t.floor() as isize - (order as isize / 2 - 1))
            .clamp(0, (n - order) as isize) as usize;
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..order {
            let mut w = 1.0;
            for k in 0..order {
                if k != j {
                    w *= (t - (base + k) as f64) / (j as f64 - k as f64);
                }
            }
            acc += self.values[base + j] * w;
        }
        acc
    }

    /// Fourth-order finite-difference derivative at every sample: centered
    /// five-point stencil inside, one-sided five-point stencils at the ends.
    /// Shorter segments fall back to lower-order formulas.
    pub fn derivative(&self) -> Vec<Complex64> {
        let v = &self.values;
        let n = v.len();
        let h = self.h;
        match n {
            0 => Vec::new(),
            1 => vec![Complex64::new(0.0, 0.0)],
            2 => {
                let d = (v[1] - v[0]) / h;
                vec![d, d]
            }
            3 | 4 => (0..n)
                .map(|i| {
                    if i == 0 {
                        (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
                    } else if i == n - 1 {
                        (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h)
                    } else {
                        (v[i + 1] - v[i - 1]) / (2.0 * h)
                    }
                })
                .collect(),
            _ => (0..n)
                .map(|i| {
                    if i >= 2 && i + 2 < n {
                        (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * h)
                    } else if i < 2 {
                        let s = i;
                        forward5(&v[i - s..i - s + 5], s) / h
                    } else {
                        let s = 4 - (n - 1 - i);
                        forward5(&v[n - 5..n], s) / h
                    }
                })
                .collect(),
        }
    }
}

/// First derivative at stencil position `at` (0..5) from five equispaced
/// samples, unit spacing.
fn forward5(v: &[Complex64], at: usize) -> Complex64 {
    const C: [[f64; 5]; 5] = [
        [-25.0, 48.0, -36.0, 16.0, -3.0],
        [-3.0, -10.0, 18.0, -6.0, 1.0],
        [1.0, -8.0, 0.0, 8.0, -1.0],
        [-1.0, 6.0, -18.0, 10.0, 3.0],
        [3.0, -16.0, 36.0, -48.0, 25.0],
    ];
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..5 {
        acc += v[k] * C[at][k];
    }
    acc / 12.0
}

/// A smooth function given region by region as sampled segments, with
/// constant continuation beyond the sampled range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledProfile {
    /// One segment per region, left to right.
    pub segments: Vec<Segment>,
    pub below: Complex64,
    pub above: Complex64,
}

impl SampledProfile {
    pub fn eval(&self, region: usize, x: f64) -> Complex64 {
        let seg = &self.segments[region.min(self.segments.len() - 1)];
        let tol = 1e-9 * seg.h;
        if x < seg.x_start - tol {
            self.below
        } else if x > seg.x_end() + tol {
            self.above
        } else {
            seg.eval(x)
        }
    }

    pub fn x_range(&self) -> (f64, f64) {
        (
            self.segments.first().map_or(0.0, |s| s.x_start),
            self.segments.last().map_or(0.0, |s| s.x_end()),
        )
    }

    pub fn map(&self, f: impl Fn(f64, Complex64) -> Complex64) -> SampledProfile {
        SampledProfile {
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    x_start: s.x_start,
                    h: s.h,
                    values: s
                        .values
                        .iter()
                        .enumerate()
                        .map(|(i, &v)| f(s.x_at(i), v))
                        .collect(),
                })
                .collect(),
            below: f(f64::NEG_INFINITY, self.below),
            above: f(f64::INFINITY, self.above),
        }
    }

    /// Outermost |x| at which the profile still differs from its tails by
    /// more than `tol` (relative to the tail magnitude).
    pub fn flat_radius(&self, tol: f64) -> f64 {
        let mut radius: f64 = 0.0;
        if let Some(first) = self.segments.first() {
            let scale = tol * self.below.norm().max(1.0);
            if let Some(i) = first
                .values
                .iter()
                .position(|v| (v - self.below).norm() > scale)
            {
                radius = radius.max(first.x_at(i).abs());
            }
        }
        if let Some(last) = self.segments.last() {
            let scale = tol * self.above.norm().max(1.0);
            if let Some(i) = last
                .values
                .iter()
                .rposition(|v| (v - self.above).norm() > scale)
            {
                radius = radius.max(last.x_at(i).abs());
            }
        }
        radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    Original,
    Partner,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SmoothPart {
    /// One constant per region.
    PerRegion(Vec<Complex64>),
    /// `W^2 + W'` of a piecewise tanh superpotential, one piece per region.
    Tanh(Vec<TanhPiece>),
    Sampled(SampledProfile),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialField {
    pub trap: TrapSpec,
    pub smooth: SmoothPart,
    pub kind: PotentialKind,
    /// Positions where the smooth part is singular.
    pub poles: Vec<f64>,
}

impl PotentialField {
    /// `V1`: the deltas of `trap` on top of its constant energy shift.
    pub fn original(trap: TrapSpec) -> Self {
        let smooth = SmoothPart::PerRegion(vec![trap.energy_shift; trap.region_count()]);
        Self {
            trap,
            smooth,
            kind: PotentialKind::Original,
            poles: Vec::new(),
        }
    }

    pub fn nonlinearity(&self) -> f64 {
        self.trap.nonlinearity
    }

    pub fn region_of(&self, x: f64) -> usize {
        self.trap.region_of(x)
    }

    /// Smooth part inside `region`, as a one-sided limit when `x` is on the
    /// region boundary.
    pub fn smooth_in_region(&self, region: usize, x: f64) -> Result<Complex64> {
        if self.poles.iter().any(|p| (x - p).abs() < 1e-10) {
            return Err(Error::Pole { x });
        }
        let v = match &self.smooth {
            SmoothPart::PerRegion(c) => c[region.min(c.len() - 1)],
            SmoothPart::Tanh(pieces) => pieces[region.min(pieces.len() - 1)].partner_value(x),
            SmoothPart::Sampled(p) => p.eval(region, x),
        };
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(Error::Pole { x })
        }
    }

    /// Limits of the smooth part for `x -> -inf` and `x -> +inf`.
    pub fn asymptotes(&self) -> (Complex64, Complex64) {
        match &self.smooth {
            SmoothPart::PerRegion(c) => (c[0], c[c.len() - 1]),
            SmoothPart::Tanh(pieces) => (
                pieces[0].partner_limit(),
                pieces[pieces.len() - 1].partner_limit(),
            ),
            SmoothPart::Sampled(p) => (p.below, p.above),
        }
    }

    /// |x| beyond which the smooth part equals its asymptote to round-off.
    pub fn flat_radius(&self) -> f64 {
        let inner = self.trap.half_width();
        match &self.smooth {
            SmoothPart::PerRegion(_) => inner,
            SmoothPart::Tanh(pieces) => {
                let outer = [&pieces[0], &pieces[pieces.len() - 1]];
                outer
                    .iter()
                    .map(|p| p.flat_radius())
                    .fold(inner, f64::max)
            }
            SmoothPart::Sampled(p) => p.flat_radius(1e-12).max(inner),
        }
    }
}

/// Smooth part plus `g * density` at a point off the deltas.
pub fn evaluate_smooth(field: &PotentialField, x: f64, density: f64) -> Result<Complex64> {
    if field
        .trap
        .deltas
        .iter()
        .any(|d| (d.position - x).abs() < 1e-12)
    {
        return Err(Error::AtDelta { x });
    }
    let region = field.region_of(x);
    Ok(field.smooth_in_region(region, x)? + field.nonlinearity() * density)
}
