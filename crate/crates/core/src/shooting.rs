//! Shooting solver: integrate outward from `x = 0` in both directions and
//! drive five real conditions to zero (complex decay matching on each side
//! plus unit norm) by Newton iteration over the initial data and the
//! complex decay rate.
//!
//! The unknown `kappa` is the decay rate `lambda` of the tail on the right.
//! The energy is `E = V_inf - lambda^2` with `V_inf` the limit of the smooth
//! potential, so `E = -kappa^2` for the unshifted trap.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{newton_root, norm_with_tails, propagate, StatePair, Trajectory};
use crate::model::{PotentialField, Segment, SmoothPart};
use crate::oracle::{hermitian_even_root, hermitian_odd_root};

/// Which component of the initial data carries the global phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Gauge {
    /// `Im phi(0) = 0`.
    PhiReal,
    /// `Im phi'(0) = 0`; used when `phi(0)` is close to a node.
    DerivativeReal,
}

/// Initial data at `x = 0` and the complex decay rate. Under
/// [`Gauge::PhiReal`] `im_phi0` is pinned to zero, under
/// [`Gauge::DerivativeReal`] `im_dphi0` is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShootingUnknowns {
    pub re_phi0: f64,
    pub im_phi0: f64,
    pub re_dphi0: f64,
    pub im_dphi0: f64,
    pub re_kappa: f64,
    pub im_kappa: f64,
    pub gauge: Gauge,
}

impl ShootingUnknowns {
    /// Initial data with the global phase removed according to `gauge`.
    pub fn from_state(state: StatePair, kappa: Complex64, gauge: Gauge) -> Self {
        let phase = match gauge {
            Gauge::PhiReal => phase_of(state.phi),
            Gauge::DerivativeReal => phase_of(state.dphi),
        };
        let s = state.scale(phase.conj());
        let mut u = Self {
            re_phi0: s.phi.re,
            im_phi0: s.phi.im,
            re_dphi0: s.dphi.re,
            im_dphi0: s.dphi.im,
            re_kappa: kappa.re,
            im_kappa: kappa.im,
            gauge,
        };
        match gauge {
            Gauge::PhiReal => u.im_phi0 = 0.0,
            Gauge::DerivativeReal => u.im_dphi0 = 0.0,
        }
        u
    }

    /// Picks the gauge that keeps the pinned component away from zero.
    pub fn auto(state: StatePair, kappa: Complex64) -> Self {
        let gauge = if state.phi.norm() < 1e-3 * state.dphi.norm() {
            Gauge::DerivativeReal
        } else {
            Gauge::PhiReal
        };
        Self::from_state(state, kappa, gauge)
    }

    pub fn state(&self) -> StatePair {
        StatePair::new(
            Complex64::new(self.re_phi0, self.im_phi0),
            Complex64::new(self.re_dphi0, self.im_dphi0),
        )
    }

    pub fn kappa(&self) -> Complex64 {
        Complex64::new(self.re_kappa, self.im_kappa)
    }

    pub fn conj(&self) -> Self {
        Self::from_state(
            StatePair::new(self.state().phi.conj(), self.state().dphi.conj()),
            self.kappa().conj(),
            self.gauge,
        )
    }

    fn to_vec(self) -> Vec<f64> {
        let third = match self.gauge {
            Gauge::PhiReal => self.im_dphi0,
            Gauge::DerivativeReal => self.im_phi0,
        };
        vec![self.re_phi0, self.re_dphi0, third, self.re_kappa, self.im_kappa]
    }

    fn from_vec(v: &[f64], gauge: Gauge) -> Self {
        let (im_phi0, im_dphi0) = match gauge {
            Gauge::PhiReal => (0.0, v[2]),
            Gauge::DerivativeReal => (v[2], 0.0),
        };
        Self {
            re_phi0: v[0],
            im_phi0,
            re_dphi0: v[1],
            im_dphi0,
            re_kappa: v[3],
            im_kappa: v[4],
            gauge,
        }
    }

    /// Linear interpolation or extrapolation `self + t (other - self)`.
    pub fn lerp(&self, other: &Self, t: f64) -> Self {
        let a = self.state();
        let b = other.state().scale(phase_alignment(other.state(), a));
        let mix = |x: Complex64, y: Complex64| x + (y - x) * t;
        Self::from_state(
            StatePair::new(mix(a.phi, b.phi), mix(a.dphi, b.dphi)),
            mix(self.kappa(), other.kappa()),
            self.gauge,
        )
    }
}

fn phase_of(z: Complex64) -> Complex64 {
    if z.norm() > 0.0 {
        z / z.norm()
    } else {
        Complex64::new(1.0, 0.0)
    }
}

/// Unit factor rotating `b` onto `a` in the least-squares sense.
fn phase_alignment(b: StatePair, a: StatePair) -> Complex64 {
    phase_of(b.phi.conj() * a.phi + b.dphi.conj() * a.dphi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShootingConfig {
    /// Requested integration step; shrunk so the deltas fall on nodes.
    pub step: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Matching radius override.
    pub boundary: Option<f64>,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            tol: 1e-10,
            max_iter: 60,
            boundary: None,
        }
    }
}

impl ShootingConfig {
    fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::InvalidParameter(format!("step must be positive, got {}", self.step)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Step no larger than `h` that puts every delta on a node.
pub fn grid_step(field: &PotentialField, h: f64) -> f64 {
    let half = field.trap.half_width();
    if half == 0.0 {
        return h;
    }
    half / (half / h - 1e-9).ceil()
}

/// Matching radius for a decay-rate estimate `lambda`, rounded to a node.
pub fn matching_radius(field: &PotentialField, lambda: Complex64, h: f64, config: &ShootingConfig) -> f64 {
    let half = field.trap.half_width();
    let mut xb = match &field.smooth {
        SmoothPart::PerRegion(_) => half + h,
        SmoothPart::Tanh(_) => field.flat_radius().max(half + h),
        SmoothPart::Sampled(p) => {
            let (lo, hi) = p.x_range();
            let reach = (-lo).min(hi);
            field.flat_radius().max(half + h).min(reach)
        }
    };
    if field.nonlinearity() > 0.0 {
        let decay = lambda.re.max(1e-3);
        let tail = (8.0 / decay).max(15.0);
        xb = xb.max(half + tail);
    }
    if let Some(b) = config.boundary {
        xb = b;
    }
    let nodes = (xb / h - 1e-9).ceil();
    if let SmoothPart::Sampled(p) = &field.smooth {
        let (lo, hi) = p.x_range();
        let reach = (-lo).min(hi);
        return (nodes * h).min((reach / h + 1e-9).floor() * h);
    }
    nodes * h
}

struct Shot {
    left: Trajectory,
    right: Trajectory,
    lambda_left: Complex64,
    lambda: Complex64,
}

fn decay_rates(field: &PotentialField, lambda: Complex64) -> (Complex64, Complex64) {
    let (lo, hi) = field.asymptotes();
    let energy = hi - lambda * lambda;
    ((lo - energy).sqrt(), lambda)
}

fn shoot(field: &PotentialField, u: &ShootingUnknowns, h: f64, xb: f64) -> Result<Shot> {
    let lambda = u.kappa();
    let (lambda_left, _) = decay_rates(field, lambda);
    let energy = field.asymptotes().1 - lambda * lambda;
    let start = u.state();
    let left = propagate(field, energy, start, 0.0, -xb, h)?;
    let right = propagate(field, energy, start, 0.0, xb, h)?;
    Ok(Shot {
        left,
        right,
        lambda_left,
        lambda,
    })
}

fn residual_vector(field: &PotentialField, u: &ShootingUnknowns, h: f64, xb: f64) -> Result<Vec<f64>> {
    if !(u.re_kappa > 0.0) {
        return Err(Error::InvalidParameter("decay rate left the half plane Re > 0".into()));
    }
    let shot = shoot(field, u, h, xb)?;
    let r = shot.right.last();
    let l = shot.left.last();
    let rp = r.dphi + shot.lambda * r.phi;
    let rm = l.dphi - shot.lambda_left * l.phi;
    let norm = norm_with_tails(&shot.left, &shot.right, shot.lambda)?;
    Ok(vec![rp.re, rp.im, rm.re, rm.im, norm - 1.0])
}

/// The five shooting residuals at the default grid and matching radius.
pub fn residuals(u: &ShootingUnknowns, field: &PotentialField, config: &ShootingConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let h = grid_step(field, config.step);
    let xb = matching_radius(field, u.kappa(), h, config);
    residual_vector(field, u, h, xb)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenSolution {
    /// Decay rate of the right tail.
    pub kappa: Complex64,
    /// Limit of the smooth potential at `x -> +inf`.
    pub asymptote: Complex64,
    pub left: Trajectory,
    pub right: Trajectory,
    pub norm: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub lambda_left: Complex64,
}

impl EigenSolution {
    pub fn energy(&self) -> Complex64 {
        self.asymptote - self.kappa * self.kappa
    }

    pub fn step(&self) -> f64 {
        self.right.step
    }

    pub fn boundary(&self) -> f64 {
        self.right.x_end()
    }

    pub fn decay_rates(&self) -> (Complex64, Complex64) {
        (self.lambda_left, self.kappa)
    }

    pub fn initial(&self) -> StatePair {
        self.right.states[0]
    }

    pub fn unknowns(&self) -> ShootingUnknowns {
        ShootingUnknowns::auto(self.initial(), self.kappa)
    }

    /// `(x, phi)` on the full grid, increasing x.
    pub fn samples(&self) -> Vec<(f64, Complex64)> {
        let mut out: Vec<(f64, Complex64)> = (1..self.left.states.len())
            .rev()
            .map(|i| (self.left.x_at(i), self.left.states[i].phi))
            .collect();
        out.extend(
            self.right
                .states
                .iter()
                .enumerate()
                .map(|(i, s)| (self.right.x_at(i), s.phi)),
        );
        out
    }

    /// `max_i |phi(-x_i) - conj(phi(x_i))|`.
    pub fn pt_deviation(&self) -> f64 {
        self.left
            .states
            .iter()
            .zip(&self.right.states)
            .map(|(l, r)| (l.phi - r.phi.conj()).norm())
            .fold(0.0, f64::max)
    }

    /// `phi` and `phi'` split into one segment per region, with one-sided
    /// values at the deltas.
    pub fn region_segments(&self) -> (Vec<Segment>, Vec<Segment>) {
        // (x, left limit, right limit, kink)
        let mut nodes: Vec<(f64, StatePair, StatePair, bool)> = Vec::new();
        for i in (1..self.left.states.len()).rev() {
            let s = self.left.states[i];
            match self.left.jump_events.iter().find(|j| j.index == i) {
                Some(j) => nodes.push((self.left.x_at(i), j.after, s, true)),
                None => nodes.push((self.left.x_at(i), s, s, false)),
            }
        }
        for (i, &s) in self.right.states.iter().enumerate() {
            match self.right.jump_events.iter().find(|j| j.index == i) {
                Some(j) => nodes.push((self.right.x_at(i), s, j.after, true)),
                None => nodes.push((self.right.x_at(i), s, s, false)),
            }
        }
        let h = self.step().abs();
        let mut phi = Vec::new();
        let mut dphi = Vec::new();
        let mut cur_p = Segment { x_start: nodes[0].0, h, values: Vec::new() };
        let mut cur_d = cur_p.clone();
        for (x, lo, hi, kink) in nodes {
            cur_p.values.push(lo.phi);
            cur_d.values.push(lo.dphi);
            if kink {
                phi.push(std::mem::replace(&mut cur_p, Segment { x_start: x, h, values: vec![hi.phi] }));
                dphi.push(std::mem::replace(&mut cur_d, Segment { x_start: x, h, values: vec![hi.dphi] }));
            }
        }
        phi.push(cur_p);
        dphi.push(cur_d);
        (phi, dphi)
    }

    /// `phi` at a grid node (nearest node to `x`).
    pub fn phi_at(&self, x: f64) -> Complex64 {
        let h = self.step().abs();
        let i = (x.abs() / h).round() as usize;
        let traj = if x < 0.0 { &self.left } else { &self.right };
        traj.states[i.min(traj.states.len() - 1)].phi
    }
}

/// Newton solve of the shooting problem from `guess`.
pub fn solve_state(field: &PotentialField, guess: &ShootingUnknowns, config: &ShootingConfig) -> Result<EigenSolution> {
    config.validate()?;
    let s0 = guess.state();
    if s0.phi.norm() == 0.0 && s0.dphi.norm() == 0.0 {
        return Err(Error::DegenerateGuess);
    }
    let guess = ShootingUnknowns::auto(s0, guess.kappa());
    let gauge = guess.gauge;
    let h = grid_step(field, config.step);
    let xb = matching_radius(field, guess.kappa(), h, config);
    // with g > 0 the far boundary amplifies every error by e^{lambda x_b};
    // walk the boundary out so each Newton start is already close
    let mut start = guess.to_vec();
    if field.nonlinearity() > 0.0 && config.boundary.is_none() {
        let half = field.trap.half_width();
        let mut extra = 2.0;
        while half + extra < xb {
            let xi = ((half + extra) / h).ceil() * h;
            extra *= 2.0;
            {
                let partial = newton_root(
                    |v| residual_vector(field, &ShootingUnknowns::from_vec(v, gauge), h, xi),
                    &start,
                    config.tol,
                    config.max_iter,
                )?;
                start = partial.root;
            }
        }
    }
    let outcome = newton_root(
        |v| residual_vector(field, &ShootingUnknowns::from_vec(v, gauge), h, xb),
        &start,
        config.tol,
        config.max_iter,
    )?;
    let u = ShootingUnknowns::from_vec(&outcome.root, gauge);
    let mut shot = shoot(field, &u, h, xb)?;

    // reproducible phase: phi(0) real positive, or i phi'(0) real negative
    // at a node so that PT-symmetric states satisfy phi(-x) = conj phi(x)
    let s = shot.right.states[0];
    let mut factor = if s.phi.norm() > 1e-12 {
        phase_of(s.phi).conj()
    } else {
        Complex64::new(0.0, 1.0) * phase_of(s.dphi).conj()
    };
    if field.nonlinearity() == 0.0 {
        let n = norm_with_tails(&shot.left, &shot.right, shot.lambda)?;
        factor /= n.sqrt();
    }
    shot.left.scale(factor);
    shot.right.scale(factor);
    let norm = norm_with_tails(&shot.left, &shot.right, shot.lambda)?;
    Ok(EigenSolution {
        kappa: shot.lambda,
        asymptote: field.asymptotes().1,
        left: shot.left,
        right: shot.right,
        norm,
        residual_norm: outcome.residual_norm,
        iterations: outcome.iterations,
        lambda_left: shot.lambda_left,
    })
}

/// [`solve_state`] for a field carrying the self-interaction `g |phi|^2`.
/// The density is taken from the running solution along each shot.
pub fn solve_nonlinear_state(field: &PotentialField, guess: &ShootingUnknowns, config: &ShootingConfig) -> Result<EigenSolution> {
    let g = field.nonlinearity();
    if !(g.is_finite() && g >= 0.0) {
        return Err(Error::InvalidParameter(format!("nonlinearity must be non-negative, got {g}")));
    }
    solve_state(field, guess, config)
}

/// Initial data of the closed-form Hermitian state (`index` 0 even, 1 odd)
/// for the unshifted trap of separation `a`, roughly normalized.
pub fn hermitian_seed(a: f64, index: usize) -> Result<ShootingUnknowns> {
    match index {
        0 => {
            let k = hermitian_even_root(a)?;
            // inner cosh(kx), outer tails
            let n = 0.5 * a + (k * a).sinh() / (2.0 * k) + (0.5 * k * a).cosh().powi(2) / k;
            let amp = 1.0 / n.sqrt();
            Ok(ShootingUnknowns::from_state(
                StatePair::new(Complex64::new(amp, 0.0), Complex64::new(0.0, 0.0)),
                Complex64::new(k, 0.0),
                Gauge::PhiReal,
            ))
        }
        1 => {
            let k = hermitian_odd_root(a)?;
            let n = (k * a).sinh() / (2.0 * k) - 0.5 * a + (0.5 * k * a).sinh().powi(2) / k;
            let amp = 1.0 / n.sqrt();
            Ok(ShootingUnknowns::from_state(
                StatePair::new(Complex64::new(0.0, 0.0), Complex64::new(k * amp, 0.0)),
                Complex64::new(k, 0.0),
                Gauge::DerivativeReal,
            ))
        }
        _ => Err(Error::InvalidParameter(format!("state index must be 0 or 1, got {index}"))),
    }
}

/// Initial data at `x = 0` of the solution that decays as `e^{kappa x}` on
/// the left of the unshifted double-delta trap, for a trial `kappa`.
pub fn seed_from_kappa(field: &PotentialField, kappa: Complex64) -> Result<ShootingUnknowns> {
    let trap = &field.trap;
    if trap.deltas.len() != 2 {
        return Err(Error::InvalidParameter("seed_from_kappa needs a two-delta trap".into()));
    }
    let (p0, s0) = (trap.deltas[0].position, trap.deltas[0].strength);
    let p1 = trap.deltas[1].position;
    if !(p0 < 0.0 && p1 > 0.0) {
        return Err(Error::InvalidParameter("deltas must straddle the origin".into()));
    }
    // e^{kx} left of p0; A e^{kx} + B e^{-kx} between the deltas
    let e = (kappa * p0).exp();
    let big_a = (2.0 * kappa + s0) / (2.0 * kappa);
    let big_b = -s0 * e * e / (2.0 * kappa);
    let state = StatePair::new(big_a + big_b, kappa * (big_a - big_b));
    normalized_seed(field, state, kappa, &ShootingConfig::default())
}

/// Rescales trial initial data so that the trial shot has unit norm.
pub fn normalized_seed(field: &PotentialField, state: StatePair, kappa: Complex64, config: &ShootingConfig) -> Result<ShootingUnknowns> {
    if state.phi.norm() == 0.0 && state.dphi.norm() == 0.0 {
        return Err(Error::DegenerateGuess);
    }
    let u = ShootingUnknowns::auto(state, kappa);
    let h = grid_step(field, config.step);
    let xb = matching_radius(field, kappa, h, config);
    let shot = shoot(field, &u, h, xb)?;
    let n = norm_with_tails(&shot.left, &shot.right, kappa)?;
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::DegenerateGuess);
    }
    Ok(ShootingUnknowns::auto(state.scale(Complex64::new(1.0 / n.sqrt(), 0.0)), kappa))
}

/// Largest accepted change of `kappa` between neighbouring continuation
/// points.
const MAX_KAPPA_JUMP: f64 = 0.1;
const MAX_BISECTIONS: usize = 6;

/// Follows one eigenstate along `grid`, seeding every point from the
/// previous ones (secant predictor). A failed step is halved up to six
/// times before the gap is reported.
pub fn continue_in_parameter<F>(family: F, grid: &[f64], seed: &ShootingUnknowns, config: &ShootingConfig) -> Result<Vec<EigenSolution>>
where
    F: Fn(f64) -> Result<PotentialField>,
{
    if grid.windows(2).any(|w| !(w[1] > w[0]) && !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("parameter grid must be strictly monotone".into()));
    }
    let Some(&p0) = grid.first() else {
        return Ok(Vec::new());
    };
    let first = solve_state(&family(p0)?, seed, config).map_err(|_| Error::ContinuationGap { parameter: p0 })?;
    let mut out = vec![first];
    // (parameter, unknowns) of the last two accepted points, fine steps included
    let mut history: Vec<(f64, ShootingUnknowns)> = vec![(p0, out[0].unknowns())];
    for &target in &grid[1..] {
        let mut depth = 0;
        let mut reached = history.last().unwrap().0;
        while reached != target {
            let span = target - reached;
            let next = if depth == 0 { target } else { reached + span / f64::powi(2.0, depth as i32).max(1.0) };
            let next = if (next - target).abs() < 1e-15 { target } else { next };
            let predicted = predict(&history, next);
            let prev_kappa = history.last().unwrap().1.kappa();
            let attempt = family(next).and_then(|f| solve_state(&f, &predicted, config));
            match attempt {
                Ok(sol) if (sol.kappa - prev_kappa).norm() <= MAX_KAPPA_JUMP => {
                    history.push((next, sol.unknowns()));
                    if history.len() > 2 {
                        history.remove(0);
                    }
                    reached = next;
                    if next == target {
                        out.push(sol);
                    }
                }
                _ => {
                    depth += 1;
                    if depth > MAX_BISECTIONS {
                        return Err(Error::ContinuationGap { parameter: next });
                    }
                }
            }
        }
    }
    Ok(out)
}

fn predict(history: &[(f64, ShootingUnknowns)], at: f64) -> ShootingUnknowns {
    match history {
        [.., (pa, ua), (pb, ub)] if pb != pa => ua.lerp(ub, (at - pa) / (pb - pa)),
        [.., (_, u)] => *u,
        [] => unreachable!("history always holds the seed"),
    }
}

/// Continuation along a gamma grid; see [`continue_in_parameter`].
pub fn continue_in_gamma<F>(field_family: F, gamma_grid: &[f64], seed: &ShootingUnknowns, config: &ShootingConfig) -> Result<Vec<EigenSolution>>
where
    F: Fn(f64) -> Result<PotentialField>,
{
    continue_in_parameter(field_family, gamma_grid, seed, config)
}

/// Distinct eigenstates reached from a spread of seeds: even and odd initial
/// data crossed with real decay rates between `lambda_min` and `lambda_max`.
pub fn find_bound_states(field: &PotentialField, lambda_min: f64, lambda_max: f64, count: usize, config: &ShootingConfig) -> Vec<EigenSolution> {
    let mut found: Vec<EigenSolution> = Vec::new();
    let starts = [
        StatePair::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
        StatePair::new(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)),
        StatePair::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.5)),
    ];
    for k in 0..count.max(1) {
        let t = if count > 1 { k as f64 / (count - 1) as f64 } else { 0.5 };
        let lambda = Complex64::new(lambda_min + (lambda_max - lambda_min) * t, 0.0);
        for &s in &starts {
            let Ok(seed) = normalized_seed(field, s, lambda, config) else {
                continue;
            };
            if let Ok(sol) = solve_state(field, &seed, config) {
                let duplicate = found.iter().any(|f| (f.kappa - sol.kappa).norm() < 1e-6);
                if !duplicate && sol.kappa.re > 1e-6 {
                    found.push(sol);
                }
            }
        }
    }
    found.sort_by(|a, b| b.kappa.re.partial_cmp(&a.kappa.re).unwrap());
    found
}
