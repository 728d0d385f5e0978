//! Superpotentials, partner potentials and the ladder operator `B- = W + d/dx`.
//!
//! On every region between deltas a superpotential of the linear trap solves
//! the Riccati equation `W' = W^2 - kappa^2`, so it is
//! `W = -kappa tanh(kappa (x - xi))` with one complex constant `xi` per
//! region, or one of the constant branches `W = -kappa` (`xi -> -inf`) and
//! `W = +kappa` (`xi -> +inf`). At a delta of strength `s` the relation
//! `V1 = W^2 - W'` forces the jump `W(p+) - W(p-) = -s`.
//!
//! The partner smooth part is `V2 = W^2 + W'`. On a tanh piece this is
//! `kappa^2 (2 tanh^2 - 1)`, which tends to `kappa^2` away from the deltas.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{PotentialField, PotentialKind, SampledProfile, Segment, SmoothPart, TrapSpec};
use crate::oracle::char_fn;
use crate::shooting::EigenSolution;

/// Relative distance to `+-kappa` below which a jump lands on a constant
/// branch.
const BRANCH_SNAP: f64 = 1e-8;
/// Minimum |phi| on the grid for `-phi'/phi` to be trusted.
pub const NODE_THRESHOLD: f64 = 1e-8;
/// Accepted |char_fn| for the standard construction.
const EIGEN_CHECK: f64 = 1e-6;

fn c0() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// `tanh` without overflow for large |Re z|.
pub fn ctanh(z: Complex64) -> Complex64 {
    if z.re < 0.0 {
        return -ctanh(-z);
    }
    let e = (-2.0 * z).exp();
    (1.0 - e) / (1.0 + e)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum XiConstant {
    Finite(Complex64),
    /// `W = -kappa` on the whole region.
    NegInfinity,
    /// `W = +kappa` on the whole region.
    PosInfinity,
}

impl XiConstant {
    pub fn finite(self) -> Option<Complex64> {
        match self {
            XiConstant::Finite(xi) => Some(xi),
            _ => None,
        }
    }
}

/// Representative of `xi` modulo the period `i pi / kappa` with
/// `Im(kappa xi)` in `(-pi/2, pi/2]`.
pub fn canonical_xi(xi: Complex64, kappa: Complex64) -> Complex64 {
    let z = kappa * xi;
    let period = std::f64::consts::PI;
    let shift = ((z.im + 0.5 * period) / period).ceil() - 1.0;
    (z - Complex64::new(0.0, shift * period)) / kappa
}

/// `W = -kappa tanh(kappa (x - xi))` on `[x_lo, x_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TanhPiece {
    pub x_lo: f64,
    pub x_hi: f64,
    pub kappa: Complex64,
    pub xi: XiConstant,
}

impl TanhPiece {
    fn t(&self, x: f64) -> Complex64 {
        match self.xi {
            XiConstant::Finite(xi) => ctanh(self.kappa * (x - xi)),
            XiConstant::NegInfinity => Complex64::new(1.0, 0.0),
            XiConstant::PosInfinity => Complex64::new(-1.0, 0.0),
        }
    }

    pub fn w(&self, x: f64) -> Complex64 {
        -self.kappa * self.t(x)
    }

    pub fn dw(&self, x: f64) -> Complex64 {
        let t = self.t(x);
        -self.kappa * self.kappa * (1.0 - t * t)
    }

    /// `W^2 + W'`.
    pub fn partner_value(&self, x: f64) -> Complex64 {
        let t = self.t(x);
        self.kappa * self.kappa * (2.0 * t * t - 1.0)
    }

    /// Limit of [`Self::partner_value`] far from the centre.
    pub fn partner_limit(&self) -> Complex64 {
        self.kappa * self.kappa
    }

    /// |x| beyond which `partner_value` equals `kappa^2` to about 1e-10
    /// relative.
    pub fn flat_radius(&self) -> f64 {
        match self.xi {
            XiConstant::Finite(xi) if self.kappa.re > 0.0 => {
                let centre = (self.kappa * xi).re / self.kappa.re;
                let width = ((8.0 * self.kappa.norm_sqr()).ln().max(0.0) + 24.0) / (2.0 * self.kappa.re);
                centre.abs() + width
            }
            _ => 0.0,
        }
    }

    /// Real-axis zeros of `cosh(kappa (x - xi))` inside the piece.
    pub fn poles(&self) -> Vec<f64> {
        let XiConstant::Finite(xi) = self.xi else {
            return Vec::new();
        };
        if self.kappa.norm() == 0.0 {
            return Vec::new();
        }
        // x_n = xi + i pi (n + 1/2) / kappa
        let step = Complex64::new(0.0, std::f64::consts::PI) / self.kappa;
        let mut out = Vec::new();
        if step.im.abs() < 1e-300 {
            return out;
        }
        let n_star = -xi.im / step.im - 0.5;
        for n in [n_star.floor(), n_star.ceil()] {
            let z = xi + step * (n + 0.5);
            let tol = 1e-8 * (1.0 + xi.norm());
            if z.im.abs() < tol && z.re >= self.x_lo - tol && z.re <= self.x_hi + tol && !out.contains(&z.re) {
                out.push(z.re);
            }
        }
        out
    }

    /// The constant giving `W(x) = w` on this piece.
    fn matched(x: f64, w: Complex64, kappa: Complex64) -> Result<XiConstant> {
        let r = w / kappa;
        if (r - 1.0).norm() < BRANCH_SNAP {
            return Ok(XiConstant::PosInfinity);
        }
        if (r + 1.0).norm() < BRANCH_SNAP {
            return Ok(XiConstant::NegInfinity);
        }
        let xi = x + r.atanh() / kappa;
        if !(xi.re.is_finite() && xi.im.is_finite()) {
            return Err(Error::DegenerateJump { position: x });
        }
        Ok(XiConstant::Finite(canonical_xi(xi, kappa)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WJump {
    pub position: f64,
    /// `W(p+) - W(p-)`.
    pub delta: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum WRepr {
    /// One tanh piece per region.
    Pieces(Vec<TanhPiece>),
    /// Region-wise samples of `W` and `W'`.
    Sampled { w: SampledProfile, dw: SampledProfile },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Superpotential {
    pub repr: WRepr,
    pub jumps: Vec<WJump>,
    pub source_kappa: Complex64,
    /// Real-axis singularities of `W`.
    pub poles: Vec<f64>,
    /// Disagreement of the two halves of an inward Riccati integration at
    /// the junction; zero for other constructions.
    pub junction_mismatch: f64,
}

impl Superpotential {
    fn boundaries(&self) -> Vec<f64> {
        self.jumps.iter().map(|j| j.position).collect()
    }

    pub fn region_of(&self, x: f64) -> usize {
        self.jumps.iter().filter(|j| j.position < x).count()
    }

    pub fn value_in_region(&self, region: usize, x: f64) -> Complex64 {
        match &self.repr {
            WRepr::Pieces(p) => p[region.min(p.len() - 1)].w(x),
            WRepr::Sampled { w, .. } => w.eval(region, x),
        }
    }

    pub fn derivative_in_region(&self, region: usize, x: f64) -> Complex64 {
        match &self.repr {
            WRepr::Pieces(p) => p[region.min(p.len() - 1)].dw(x),
            WRepr::Sampled { dw, .. } => dw.eval(region, x),
        }
    }

    pub fn value(&self, x: f64) -> Complex64 {
        self.value_in_region(self.region_of(x), x)
    }

    pub fn derivative(&self, x: f64) -> Complex64 {
        self.derivative_in_region(self.region_of(x), x)
    }

    pub fn pieces(&self) -> Option<&[TanhPiece]> {
        match &self.repr {
            WRepr::Pieces(p) => Some(p),
            WRepr::Sampled { .. } => None,
        }
    }

    /// The integration constants of a piecewise form, left to right.
    pub fn xi_constants(&self) -> Option<Vec<XiConstant>> {
        self.pieces().map(|p| p.iter().map(|q| q.xi).collect())
    }

    /// Samples of `W` on `[x_min, x_max]` with spacing close to `h`, region
    /// by region (one-sided values at the deltas).
    pub fn sample(&self, x_min: f64, x_max: f64, h: f64) -> Vec<(f64, Complex64)> {
        let mut cuts = vec![x_min];
        cuts.extend(self.boundaries().into_iter().filter(|&p| p > x_min && p < x_max));
        cuts.push(x_max);
        let mut out = Vec::new();
        for w in cuts.windows(2) {
            let region = self.region_of(0.5 * (w[0] + w[1]));
            let n = ((w[1] - w[0]) / h).ceil().max(1.0) as usize;
            for i in 0..=n {
                let x = w[0] + (w[1] - w[0]) * i as f64 / n as f64;
                out.push((x, self.value_in_region(region, x)));
            }
        }
        out
    }
}

fn pieces_from_chain(kappa: Complex64, positions: &[f64], strengths: &[Complex64], first: XiConstant) -> Result<(Vec<TanhPiece>, Vec<WJump>)> {
    let mut bounds = vec![f64::NEG_INFINITY];
    bounds.extend_from_slice(positions);
    bounds.push(f64::INFINITY);
    let mut pieces = vec![TanhPiece {
        x_lo: bounds[0],
        x_hi: bounds[1],
        kappa,
        xi: first,
    }];
    let mut jumps = Vec::new();
    for (k, (&p, &s)) in positions.iter().zip(strengths).enumerate() {
        let before = pieces[k].w(p);
        let after = before - s;
        let xi = TanhPiece::matched(p, after, kappa)?;
        let piece = TanhPiece {
            x_lo: bounds[k + 1],
            x_hi: bounds[k + 2],
            kappa,
            xi,
        };
        jumps.push(WJump {
            position: p,
            delta: piece.w(p) - before,
        });
        pieces.push(piece);
    }
    Ok((pieces, jumps))
}

fn pt_positions(gamma: f64, a: f64) -> ([f64; 2], [Complex64; 2]) {
    let nu = Complex64::new(-1.0, gamma);
    ([-0.5 * a, 0.5 * a], [nu.conj(), nu])
}

/// The superpotential `-phi'/phi` of the bound state with eigenvalue
/// `kappa`: constant `-kappa` on the left, a tanh piece between the deltas
/// and `+kappa` on the right.
pub fn superpotential_standard(kappa: Complex64, gamma: f64, a: f64) -> Result<Superpotential> {
    let residual = char_fn(kappa, gamma, a).norm();
    if !(residual < EIGEN_CHECK) || kappa.re <= 0.0 {
        return Err(Error::NotAnEigenvalue { kappa, residual });
    }
    let (pos, strengths) = pt_positions(gamma, a);
    let (mut pieces, mut jumps) = pieces_from_chain(kappa, &pos[..1], &strengths[..1], XiConstant::NegInfinity)?;
    let before = pieces[1].w(pos[1]);
    pieces.push(TanhPiece {
        x_lo: pos[1],
        x_hi: f64::INFINITY,
        kappa,
        xi: XiConstant::PosInfinity,
    });
    jumps.push(WJump {
        position: pos[1],
        delta: kappa - before,
    });
    let mut inner_pieces = pieces.clone();
    inner_pieces[1].x_lo = pos[0];
    inner_pieces[1].x_hi = pos[1];
    if let Some(&x) = inner_pieces[1].poles().first() {
        // a pole of W is a node of the state it was built from
        return Err(Error::NodalState {
            position: x,
            magnitude: 0.0,
        });
    }
    pieces[1] = inner_pieces[1];
    Ok(Superpotential {
        repr: WRepr::Pieces(pieces),
        jumps,
        source_kappa: kappa,
        poles: Vec::new(),
        junction_mismatch: 0.0,
    })
}

/// The one-parameter family of superpotentials for eigenvalue `kappa`: the
/// left constant is free and the jumps fix the other two.
pub fn superpotential_family(kappa: Complex64, gamma: f64, a: f64, xi_left: XiConstant) -> Result<Superpotential> {
    if !(kappa.re > 0.0) {
        return Err(Error::InvalidParameter(format!("kappa needs Re > 0, got {kappa}")));
    }
    let (pos, strengths) = pt_positions(gamma, a);
    let (pieces, jumps) = pieces_from_chain(kappa, &pos, &strengths, xi_left)?;
    if let Some(&x) = pieces.iter().flat_map(|p| p.poles()).collect::<Vec<_>>().first() {
        return Err(Error::Pole { x });
    }
    Ok(Superpotential {
        repr: WRepr::Pieces(pieces),
        jumps,
        source_kappa: kappa,
        poles: Vec::new(),
        junction_mismatch: 0.0,
    })
}

/// `W = -phi'/phi` sampled on the solution grid, with fourth-order
/// finite-difference `W'`.
pub fn superpotential_from_state(solution: &EigenSolution) -> Result<Superpotential> {
    let (phi, dphi) = solution.region_segments();
    let mut w_segs = Vec::with_capacity(phi.len());
    for (p, d) in phi.iter().zip(&dphi) {
        let mut values = Vec::with_capacity(p.values.len());
        for (i, (&f, &df)) in p.values.iter().zip(&d.values).enumerate() {
            if f.norm() < NODE_THRESHOLD {
                return Err(Error::NodalState {
                    position: p.x_at(i),
                    magnitude: f.norm(),
                });
            }
            values.push(-df / f);
        }
        w_segs.push(Segment {
            x_start: p.x_start,
            h: p.h,
            values,
        });
    }
    let (lam_l, lam_r) = solution.decay_rates();
    let w = SampledProfile {
        segments: w_segs,
        below: -lam_l,
        above: lam_r,
    };
    let dw = SampledProfile {
        segments: w
            .segments
            .iter()
            .map(|s| Segment {
                x_start: s.x_start,
                h: s.h,
                values: s.derivative(),
            })
            .collect(),
        below: c0(),
        above: c0(),
    };
    let jumps = sampled_jumps(&w);
    Ok(Superpotential {
        repr: WRepr::Sampled { w, dw },
        jumps,
        source_kappa: solution.kappa,
        poles: Vec::new(),
        junction_mismatch: 0.0,
    })
}

fn sampled_jumps(w: &SampledProfile) -> Vec<WJump> {
    w.segments
        .windows(2)
        .map(|s| WJump {
            position: s[0].x_end(),
            delta: s[1].values[0] - s[0].values[s[0].values.len() - 1],
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartnerPotential {
    /// Smooth part `W^2 + W'`, deltas of opposite strength.
    pub field: PotentialField,
    pub source_kappa: Complex64,
}

impl PartnerPotential {
    /// `V2` off the deltas, one-sided at region boundaries.
    pub fn value(&self, x: f64) -> Result<Complex64> {
        self.field.smooth_in_region(self.field.region_of(x), x)
    }
}

/// `V2 = W^2 + W'` with the deltas of `trap` negated.
pub fn partner_potential(w: &Superpotential, trap: &TrapSpec) -> Result<PartnerPotential> {
    if w.jumps.len() != trap.deltas.len()
        || w.jumps.iter().zip(&trap.deltas).any(|(j, d)| (j.position - d.position).abs() > 1e-9)
    {
        return Err(Error::GridMismatch(
            "superpotential jumps do not sit on the trap deltas".into(),
        ));
    }
    let smooth = match &w.repr {
        WRepr::Pieces(p) => SmoothPart::Tanh(p.clone()),
        WRepr::Sampled { w: ws, dw } => {
            let segments = ws
                .segments
                .iter()
                .zip(&dw.segments)
                .map(|(a, b)| Segment {
                    x_start: a.x_start,
                    h: a.h,
                    values: a.values.iter().zip(&b.values).map(|(&v, &d)| v * v + d).collect(),
                })
                .collect();
            SmoothPart::Sampled(SampledProfile {
                segments,
                below: ws.below * ws.below,
                above: ws.above * ws.above,
            })
        }
    };
    let k = w.source_kappa;
    Ok(PartnerPotential {
        field: PotentialField {
            trap: trap.flipped(k * k),
            smooth,
            kind: PotentialKind::Partner,
            poles: w.poles.clone(),
        },
        source_kappa: k,
    })
}

/// `(W + d/dx) phi` region by region on the grid of `solution`.
pub fn apply_annihilator(w: &Superpotential, solution: &EigenSolution) -> Result<SampledProfile> {
    let (phi, dphi) = solution.region_segments();
    if phi.len() != w.jumps.len() + 1 {
        return Err(Error::GridMismatch(format!(
            "solution has {} regions, superpotential {}",
            phi.len(),
            w.jumps.len() + 1
        )));
    }
    if let WRepr::Sampled { w: ws, .. } = &w.repr {
        let (lo, hi) = ws.x_range();
        let (slo, shi) = (phi[0].x_start, phi[phi.len() - 1].x_end());
        let same_step = ws.segments.iter().zip(&phi).all(|(a, b)| (a.h - b.h).abs() < 1e-12);
        if !same_step || slo < lo - 1e-9 || shi > hi + 1e-9 {
            return Err(Error::GridMismatch(
                "sampled superpotential does not cover the solution grid".into(),
            ));
        }
    }
    let segments = phi
        .iter()
        .zip(&dphi)
        .enumerate()
        .map(|(r, (p, d))| Segment {
            x_start: p.x_start,
            h: p.h,
            values: p
                .values
                .iter()
                .zip(&d.values)
                .enumerate()
                .map(|(i, (&f, &df))| w.value_in_region(r, p.x_at(i)) * f + df)
                .collect(),
        })
        .collect();
    Ok(SampledProfile {
        segments,
        below: c0(),
        above: c0(),
    })
}

/// Uniform grid for the Riccati integration. `x_min`, `x_max` and every
/// delta must be nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RiccatiMode {
    /// Left to right from `start_w` at `x_min`.
    Forward,
    /// Left half forward from `start_w`, right half backward from `end_w`
    /// at `x_max`, joined at `x = 0`. Both halves then run in their stable
    /// direction for the standard branch `W -> -+kappa`.
    Inward { end_w: Complex64 },
}

const POLE_BOUND: f64 = 1e8;

struct RiccatiRun {
    xs: Vec<f64>,
    /// (one-sided value towards the start, one-sided value away from it)
    values: Vec<(Complex64, Complex64)>,
    poles: Vec<f64>,
}

fn riccati_run(v1: &PotentialField, start: Complex64, x_from: f64, n: usize, step: f64) -> Result<RiccatiRun> {
    let dir = step.signum();
    let rhs = |x: f64, region: usize, w: Complex64| -> Result<Complex64> {
        Ok(w * w - v1.smooth_in_region(region, x)?)
    };
    let jump_at = |x: f64| {
        v1.trap
            .deltas
            .iter()
            .find(|d| (d.position - x).abs() < 1e-6 * step.abs())
            .map(|d| d.strength)
    };
    let mut xs = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    let mut poles = Vec::new();
    let mut w = start;
    xs.push(x_from);
    values.push((w, w));
    let mut i = 0;
    while i < n {
        let x = x_from + step * i as f64;
        let region = v1.region_of(x + 0.5 * step);
        let k1 = rhs(x, region, w)?;
        let k2 = rhs(x + 0.5 * step, region, w + 0.5 * step * k1)?;
        let k3 = rhs(x + 0.5 * step, region, w + 0.5 * step * k2)?;
        let k4 = rhs(x + step, region, w + step * k3)?;
        let next = w + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let x_next = x + step;
        if !(next.norm() < POLE_BOUND) {
            // near a pole W ~ -1/(x - x_p)
            let x_p = x + (1.0 / w).re;
            let x_p = if dir * (x_p - x) > 0.0 && (x_p - x).abs() <= 2.0 * step.abs() { x_p } else { x_next };
            poles.push(x_p);
            let mut j = i + 1;
            loop {
                let xj = x_from + step * j as f64;
                let wj = Complex64::new(-1.0 / (xj - x_p), 0.0);
                xs.push(xj);
                values.push((wj, wj));
                w = wj;
                j += 1;
                if dir * (xj - x_p) > 0.5 * step.abs() || j > n {
                    break;
                }
            }
            i = j - 1;
            continue;
        }
        w = next;
        let incoming = w;
        if let Some(s) = jump_at(x_next) {
            // W(p+) - W(p-) = -s
            w -= dir * s;
        }
        xs.push(x_next);
        values.push((incoming, w));
        i += 1;
    }
    Ok(RiccatiRun { xs, values, poles })
}

/// Integrates `W' = W^2 - V1` with RK4 on `grid`, applying the jump `-s` at
/// every delta of strength `s` of `v1`. Blow-ups beyond 1e8 are recorded as
/// poles and the integration restarts past them on the `-1/(x - x_p)`
/// branch.
pub fn riccati_superpotential(v1: &PotentialField, start_w: Complex64, grid: &Grid, mode: RiccatiMode) -> Result<Superpotential> {
    let h = grid.h;
    if !(h > 0.0 && grid.x_max > grid.x_min) {
        return Err(Error::InvalidParameter("empty Riccati grid".into()));
    }
    let n_total = ((grid.x_max - grid.x_min) / h).round() as usize;
    if ((grid.x_min + n_total as f64 * h) - grid.x_max).abs() > 1e-9 * h.max(1.0) {
        return Err(Error::GridMismatch("grid end is not a node".into()));
    }
    for d in &v1.trap.deltas {
        let t = (d.position - grid.x_min) / h;
        if (t - t.round()).abs() > 1e-6 {
            return Err(Error::GridMisaligned { position: d.position });
        }
    }
    // nodes as (x, left limit, right limit)
    let mut nodes: Vec<(f64, Complex64, Complex64)> = Vec::with_capacity(n_total + 1);
    let mut poles;
    let mut mismatch = 0.0;
    match mode {
        RiccatiMode::Forward => {
            let run = riccati_run(v1, start_w, grid.x_min, n_total, h)?;
            poles = run.poles;
            for (x, (l, r)) in run.xs.into_iter().zip(run.values) {
                nodes.push((x, l, r));
            }
        }
        RiccatiMode::Inward { end_w } => {
            let n_left = (-grid.x_min / h).round() as usize;
            if grid.x_min >= 0.0 || grid.x_max <= 0.0 || ((grid.x_min + n_left as f64 * h).abs() > 1e-9) {
                return Err(Error::GridMismatch("inward mode needs x = 0 as an interior node".into()));
            }
            let left = riccati_run(v1, start_w, grid.x_min, n_left, h)?;
            let right = riccati_run(v1, end_w, grid.x_max, n_total - n_left, -h)?;
            poles = left.poles;
            poles.extend(right.poles);
            let wl = left.values[left.values.len() - 1].1;
            let wr = right.values[right.values.len() - 1].1;
            mismatch = (wl - wr).norm();
            let join = 0.5 * (wl + wr);
            for (k, (x, (l, r))) in left.xs.into_iter().zip(left.values).enumerate() {
                if k == n_left {
                    break;
                }
                nodes.push((x, l, r));
            }
            nodes.push((0.0, join, join));
            let mut rnodes: Vec<_> = right.xs.into_iter().zip(right.values).collect();
            rnodes.pop();
            for (x, (towards_start, away)) in rnodes.into_iter().rev() {
                // the backward run sees the right limit first
                nodes.push((x, away, towards_start));
            }
        }
    }
    let window = v1.trap.half_width();
    if let Some(&x) = poles.iter().find(|p| p.abs() <= window) {
        return Err(Error::Pole { x });
    }

    let is_delta = |x: f64| v1.trap.deltas.iter().any(|d| (d.position - x).abs() < 1e-6 * h);
    let mut w_segs = Vec::new();
    let mut current = Segment {
        x_start: nodes[0].0,
        h,
        values: Vec::new(),
    };
    for &(x, l, r) in &nodes {
        current.values.push(l);
        if is_delta(x) && current.values.len() > 1 {
            let done = std::mem::replace(
                &mut current,
                Segment {
                    x_start: x,
                    h,
                    values: vec![r],
                },
            );
            w_segs.push(done);
        }
    }
    w_segs.push(current);

    let mut dw_segs = Vec::with_capacity(w_segs.len());
    for (region, s) in w_segs.iter().enumerate() {
        let mut values = Vec::with_capacity(s.values.len());
        for (i, &w) in s.values.iter().enumerate() {
            let x = s.x_at(i);
            values.push(if w.norm().is_finite() {
                w * w - v1.smooth_in_region(region, x)?
            } else {
                w
            });
        }
        dw_segs.push(Segment {
            x_start: s.x_start,
            h,
            values,
        });
    }
    let first = nodes[0].1;
    let last = nodes[nodes.len() - 1].2;
    let w = SampledProfile {
        segments: w_segs,
        below: first,
        above: last,
    };
    let jumps = sampled_jumps(&w);
    let dw = SampledProfile {
        segments: dw_segs,
        below: c0(),
        above: c0(),
    };
    let source_kappa = match mode {
        RiccatiMode::Inward { end_w } => end_w,
        RiccatiMode::Forward => -start_w,
    };
    Ok(Superpotential {
        repr: WRepr::Sampled { w, dw },
        jumps,
        source_kappa,
        poles,
        junction_mismatch: mismatch,
    })
}

/// Largest violation of `W^2 - W' = V1` off the deltas, together with the
/// jump conditions `W(p+) - W(p-) = -s` measured on the values of `W`.
pub fn verify_factorization(w: &Superpotential, v1: &PotentialField) -> f64 {
    let mut worst: f64 = 0.0;
    let mut check = |region: usize, x: f64| {
        if w.poles.iter().any(|p| (p - x).abs() < 1e-6) {
            return;
        }
        let wv = w.value_in_region(region, x);
        let dv = w.derivative_in_region(region, x);
        match v1.smooth_in_region(region, x) {
            Ok(v) => worst = worst.max((wv * wv - dv - v).norm()),
            Err(_) => worst = f64::INFINITY,
        }
    };
    match &w.repr {
        WRepr::Pieces(pieces) => {
            let reach = v1.trap.half_width() + 10.0;
            for (r, p) in pieces.iter().enumerate() {
                let lo = if p.x_lo.is_finite() { p.x_lo } else { -reach };
                let hi = if p.x_hi.is_finite() { p.x_hi } else { reach };
                for i in 0..=400 {
                    check(r, lo + (hi - lo) * i as f64 / 400.0);
                }
            }
        }
        WRepr::Sampled { w: ws, .. } => {
            for (r, s) in ws.segments.iter().enumerate() {
                for i in 0..s.values.len() {
                    check(r, s.x_at(i));
                }
            }
        }
    }
    if w.jumps.len() != v1.trap.deltas.len() {
        return f64::INFINITY;
    }
    for (k, (j, d)) in w.jumps.iter().zip(&v1.trap.deltas).enumerate() {
        let actual = w.value_in_region(k + 1, d.position) - w.value_in_region(k, d.position);
        worst = worst.max((actual + d.strength).norm());
        worst = worst.max((j.delta - actual).norm());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_pt_trap;
    use crate::oracle::{hermitian_even_root, oracle_eigenvalues};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn v1(kappa: Complex64, gamma: f64) -> PotentialField {
        PotentialField::original(make_pt_trap(gamma, 2.2, 0.0, kappa * kappa).unwrap())
    }

    #[test]
    fn stable_tanh() {
        assert!((ctanh(c(800.0, 0.3)) - 1.0).norm() < 1e-15);
        assert!((ctanh(c(-800.0, 0.3)) + 1.0).norm() < 1e-15);
        let z = c(0.3, -0.7);
        assert!((ctanh(z) - z.tanh()).norm() < 1e-14);
    }

    #[test]
    fn canonical_xi_reduces_by_the_period() {
        let k = c(0.6, 0.1);
        let xi = c(0.4, 1.0);
        let shifted = xi + 3.0 * c(0.0, std::f64::consts::PI) / k;
        assert!((canonical_xi(shifted, k) - canonical_xi(xi, k)).norm() < 1e-12);
        let z = k * canonical_xi(xi, k);
        assert!(z.im.abs() <= 0.5 * std::f64::consts::PI + 1e-12);
    }

    #[test]
    fn piece_identities() {
        let p = TanhPiece {
            x_lo: -1.0,
            x_hi: 1.0,
            kappa: c(0.5, 0.1),
            xi: XiConstant::Finite(c(0.2, 0.4)),
        };
        for x in [-0.9, 0.0, 0.7] {
            let (w, dw) = (p.w(x), p.dw(x));
            assert!((w * w - dw - p.kappa * p.kappa).norm() < 1e-14);
            assert!((w * w + dw - p.partner_value(x)).norm() < 1e-14);
            let h = 1e-5;
            assert!(((p.w(x + h) - p.w(x - h)) / (2.0 * h) - dw).norm() < 1e-8);
        }
    }

    #[test]
    fn even_ground_state_gives_odd_w() {
        let k = c(hermitian_even_root(2.2).unwrap(), 0.0);
        let w = superpotential_standard(k, 0.0, 2.2).unwrap();
        assert!(w.value(0.0).norm() < 1e-12);
        assert!((w.value(-5.0) + k).norm() < 1e-15);
        assert!((w.value(5.0) - k).norm() < 1e-15);
        assert!((w.value(0.4) + w.value(-0.4)).norm() < 1e-12);
    }

    #[test]
    fn standard_jumps_are_minus_nu() {
        let r = oracle_eigenvalues(0.3, 2.2).unwrap();
        let w = superpotential_standard(r.kappa0, 0.3, 2.2).unwrap();
        assert!((w.jumps[1].delta - c(1.0, -0.3)).norm() < 1e-10);
        assert!((w.jumps[0].delta - c(1.0, 0.3)).norm() < 1e-10);
    }

    #[test]
    fn inner_piece_matches_ratio_form() {
        // -phi'/phi for phi = A e^{kx} + B e^{-kx}, A = (2k + nu*)/(2k),
        // B = -nu* e^{-ka} / (2k)
        let gamma = 0.2;
        let a = 2.2;
        let k = oracle_eigenvalues(gamma, a).unwrap().kappa0;
        let nus = c(-1.0, -gamma);
        let big_a = (2.0 * k + nus) / (2.0 * k);
        let big_b = -nus * (-k * a).exp() / (2.0 * k);
        let w = superpotential_standard(k, gamma, a).unwrap();
        for x in [-1.0, -0.3, 0.0, 0.5, 1.05] {
            let phi = big_a * (k * x).exp() + big_b * (-k * x).exp();
            let dphi = k * (big_a * (k * x).exp() - big_b * (-k * x).exp());
            assert!((w.value(x) + dphi / phi).norm() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn rejects_non_eigenvalues() {
        assert!(matches!(
            superpotential_standard(c(0.5, 0.0), 0.0, 2.2),
            Err(Error::NotAnEigenvalue { .. })
        ));
    }

    #[test]
    fn hermitian_excited_state_has_a_node() {
        let k = oracle_eigenvalues(0.0, 2.2).unwrap().kappa1;
        match superpotential_standard(k, 0.0, 2.2) {
            Err(Error::NodalState { position, .. }) => assert!(position.abs() < 1e-8),
            other => panic!("expected a node, got {other:?}"),
        }
    }

    #[test]
    fn partner_outside_equals_kappa_squared() {
        let r = oracle_eigenvalues(0.2, 2.2).unwrap();
        let w = superpotential_standard(r.kappa0, 0.2, 2.2).unwrap();
        let trap = make_pt_trap(0.2, 2.2, 0.0, c(0.0, 0.0)).unwrap();
        let p = partner_potential(&w, &trap).unwrap();
        let k2 = r.kappa0 * r.kappa0;
        for x in [-30.0, -1.2, 1.2, 7.0] {
            assert_eq!(p.value(x).unwrap(), k2);
        }
        for (d, q) in trap.deltas.iter().zip(&p.field.trap.deltas) {
            assert_eq!(q.strength, -d.strength);
        }
    }

    #[test]
    fn hermitian_ground_removal_inner_well() {
        let k = c(hermitian_even_root(2.2).unwrap(), 0.0);
        let w = superpotential_standard(k, 0.0, 2.2).unwrap();
        let trap = make_pt_trap(0.0, 2.2, 0.0, c(0.0, 0.0)).unwrap();
        let p = partner_potential(&w, &trap).unwrap();
        assert!((p.value(0.0).unwrap() + k * k).norm() < 1e-12);
        assert!((p.value(0.0).unwrap().re + 0.392).abs() < 5e-4);
    }

    #[test]
    fn factorization_of_analytic_forms() {
        let r = oracle_eigenvalues(0.3, 2.2).unwrap();
        let w = superpotential_standard(r.kappa0, 0.3, 2.2).unwrap();
        assert!(verify_factorization(&w, &v1(r.kappa0, 0.3)) < 1e-8);
        let wf = superpotential_family(r.kappa0, 0.3, 2.2, XiConstant::Finite(c(-1.0, 1.5))).unwrap();
        assert!(verify_factorization(&wf, &v1(r.kappa0, 0.3)) < 1e-8);
    }

    #[test]
    fn perturbed_constant_breaks_factorization() {
        let r = oracle_eigenvalues(0.3, 2.2).unwrap();
        let mut w = superpotential_standard(r.kappa0, 0.3, 2.2).unwrap();
        if let WRepr::Pieces(p) = &mut w.repr {
            if let XiConstant::Finite(xi) = p[1].xi {
                p[1].xi = XiConstant::Finite(xi + 1e-3);
            }
        }
        assert!(verify_factorization(&w, &v1(r.kappa0, 0.3)) > 1e-4);
    }

    #[test]
    fn family_limit_is_standard() {
        let r = oracle_eigenvalues(0.25, 2.2).unwrap();
        let s = superpotential_standard(r.kappa0, 0.25, 2.2).unwrap();
        let f = superpotential_family(r.kappa0, 0.25, 2.2, XiConstant::NegInfinity).unwrap();
        for x in [-3.0, -1.0, 0.2, 1.0, 4.0] {
            assert!((s.value(x) - f.value(x)).norm() < 1e-9);
        }
        assert_eq!(f.xi_constants().unwrap()[2], XiConstant::PosInfinity);
    }

    #[test]
    fn riccati_reproduces_the_standard_form() {
        let r = oracle_eigenvalues(0.3, 2.2).unwrap();
        let k = r.kappa0;
        let field = v1(k, 0.3);
        let h = 1.1 / 1100.0;
        let grid = Grid {
            x_min: -2200.0 * h,
            x_max: 2200.0 * h,
            h,
        };
        let s = superpotential_standard(k, 0.3, 2.2).unwrap();
        for mode in [RiccatiMode::Forward, RiccatiMode::Inward { end_w: k }] {
            let w = riccati_superpotential(&field, -k, &grid, mode).unwrap();
            for x in [-2.0, -0.5, 0.0, 0.9] {
                assert!((w.value(x) - s.value(x)).norm() < 1e-6, "{mode:?} x = {x}");
            }
            assert!((w.jumps[1].delta - c(1.0, -0.3)).norm() < 1e-10);
        }
    }

    #[test]
    fn riccati_records_poles() {
        // W' = W^2 with W(0) = 1 blows up at x = 1
        let mut trap = make_pt_trap(0.0, 2.2, 0.0, c(0.0, 0.0)).unwrap();
        trap.deltas.clear();
        let field = PotentialField::original(trap);
        let grid = Grid {
            x_min: 0.0,
            x_max: 3.0,
            h: 1e-3,
        };
        let w = riccati_superpotential(&field, c(1.0, 0.0), &grid, RiccatiMode::Forward).unwrap();
        assert_eq!(w.poles.len(), 1);
        assert!((w.poles[0] - 1.0).abs() < 1e-3, "{:?}", w.poles);
        assert!((w.value(2.0) - c(-1.0, 0.0)).norm() < 1e-3);
    }
}
