//! Fixed-step complex propagation with exact delta jumps, quadrature with
//! analytic exponential tails, and a damped Newton solver in R^n.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::PotentialField;

/// Propagation aborts once |phi| exceeds this bound.
pub const OVERFLOW_GUARD: f64 = 1e150;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatePair {
    pub phi: Complex64,
    pub dphi: Complex64,
}

impl StatePair {
    pub fn new(phi: Complex64, dphi: Complex64) -> Self {
        Self { phi, dphi }
    }

    pub fn scale(self, factor: Complex64) -> Self {
        Self {
            phi: self.phi * factor,
            dphi: self.dphi * factor,
        }
    }

    fn axpy(self, k: StatePair, t: f64) -> Self {
        Self {
            phi: self.phi + k.phi * t,
            dphi: self.dphi + k.dphi * t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpEvent {
    /// Grid index of the delta node.
    pub index: usize,
    pub position: f64,
    pub strength: Complex64,
    /// State on the far side of the delta, in the direction of propagation.
    pub after: StatePair,
}

/// Samples of a propagated solution on the nodes `x_from + i * step`.
///
/// At a delta node `states[i]` holds the incoming one-sided state; the
/// outgoing one is stored in the matching [`JumpEvent`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub x_from: f64,
    /// Signed step: negative for propagation towards smaller x.
    pub step: f64,
    pub states: Vec<StatePair>,
    pub jump_events: Vec<JumpEvent>,
}

impl Trajectory {
    pub fn x_at(&self, i: usize) -> f64 {
        self.x_from + self.step * i as f64
    }

    pub fn last(&self) -> StatePair {
        let n = self.states.len() - 1;
        match self.jump_events.iter().find(|j| j.index == n) {
            Some(j) => j.after,
            None => self.states[n],
        }
    }

    pub fn x_end(&self) -> f64 {
        self.x_at(self.states.len() - 1)
    }

    pub fn scale(&mut self, factor: Complex64) {
        for s in &mut self.states {
            *s = s.scale(factor);
        }
        for j in &mut self.jump_events {
            j.after = j.after.scale(factor);
        }
    }
}

/// Integrates `phi'' = (V(x) + g |phi|^2 - energy) phi` from `x_from` to
/// `x_to` with classical RK4 steps of size `h`. Every delta of strength `s`
/// met on a node changes the derivative by `s * phi` (in the direction of
/// increasing x) while `phi` stays continuous.
pub fn propagate(
    field: &PotentialField,
    energy: Complex64,
    start: StatePair,
    x_from: f64,
    x_to: f64,
    h: f64,
) -> Result<Trajectory> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {h}")));
    }
    let span = x_to - x_from;
    let n_float = (span.abs() / h).round();
    if (n_float * h - span.abs()).abs() > 1e-9 * h.max(span.abs()) {
        return Err(Error::GridMismatch(format!(
            "interval [{x_from}, {x_to}] is not a multiple of h = {h}"
        )));
    }
    let n = n_float as usize;
    let dir = if span < 0.0 { -1.0 } else { 1.0 };
    let step = dir * h;

    // delta nodes along the path
    let mut jumps: Vec<(usize, f64, Complex64)> = Vec::new();
    for d in &field.trap.deltas {
        let t = (d.position - x_from) / step;
        if t < -1e-9 || t > n as f64 + 1e-9 {
            continue;
        }
        let idx = t.round();
        if (t - idx).abs() > 1e-6 {
            return Err(Error::GridMisaligned { position: d.position });
        }
        if idx as usize == 0 {
            // the start state is taken as given on the outgoing side
            continue;
        }
        jumps.push((idx as usize, d.position, d.strength));
    }
    jumps.sort_by_key(|j| j.0);

    let g = field.nonlinearity();
    let deriv = |x: f64, region: usize, y: StatePair| -> Result<StatePair> {
        let v = field.smooth_in_region(region, x)? + g * y.phi.norm_sqr();
        Ok(StatePair {
            phi: y.dphi,
            dphi: (v - energy) * y.phi,
        })
    };

    let mut states = Vec::with_capacity(n + 1);
    let mut jump_events = Vec::with_capacity(jumps.len());
    let mut y = start;
    states.push(y);
    let mut next_jump = 0;
    for i in 0..n {
        let x = x_from + step * i as f64;
        let region = field.region_of(x + 0.5 * step);
        let k1 = deriv(x, region, y)?;
        let k2 = deriv(x + 0.5 * step, region, y.axpy(k1, 0.5 * step))?;
        let k3 = deriv(x + 0.5 * step, region, y.axpy(k2, 0.5 * step))?;
        let k4 = deriv(x + step, region, y.axpy(k3, step))?;
        y = StatePair {
            phi: y.phi + (k1.phi + 2.0 * k2.phi + 2.0 * k3.phi + k4.phi) * (step / 6.0),
            dphi: y.dphi + (k1.dphi + 2.0 * k2.dphi + 2.0 * k3.dphi + k4.dphi) * (step / 6.0),
        };
        let mag = y.phi.norm().max(y.dphi.norm());
        if !(mag.is_finite() && mag < OVERFLOW_GUARD) {
            return Err(Error::Divergence { x: x + step });
        }
        states.push(y);
        if next_jump < jumps.len() && jumps[next_jump].0 == i + 1 {
            let (index, position, strength) = jumps[next_jump];
            y.dphi += dir * strength * y.phi;
            jump_events.push(JumpEvent {
                index,
                position,
                strength,
                after: y,
            });
            next_jump += 1;
        }
    }
    Ok(Trajectory {
        x_from,
        step,
        states,
        jump_events,
    })
}

/// Composite quadrature for uniformly spaced samples: Simpson's rule, with a
/// closing 3/8 panel for an odd interval count and the trapezoid for a
/// single interval.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len().saturating_sub(1);
    match n {
        0 => 0.0,
        1 => 0.5 * h * (values[0] + values[1]),
        _ if n % 2 == 0 => {
            let mut s = values[0] + values[n];
            for (i, v) in values.iter().enumerate().take(n).skip(1) {
                s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            s * h / 3.0
        }
        _ => {
            let m = n - 3;
            let head = if m > 0 { simpson(&values[..=m], h) } else { 0.0 };
            head + 3.0 * h / 8.0
                * (values[m] + 3.0 * values[m + 1] + 3.0 * values[m + 2] + values[m + 3])
        }
    }
}

/// Integral of |phi|^2 along one trajectory, split at the kinks so every
/// quadrature panel sees a smooth integrand.
fn density_integral(traj: &Trajectory) -> f64 {
    let h = traj.step.abs();
    let mut cuts: Vec<usize> = traj.jump_events.iter().map(|j| j.index).collect();
    cuts.push(traj.states.len() - 1);
    let mut total = 0.0;
    let mut lo = 0;
    for hi in cuts {
        if hi > lo {
            let vals: Vec<f64> = traj.states[lo..=hi].iter().map(|s| s.phi.norm_sqr()).collect();
            total += simpson(&vals, h);
        }
        lo = hi;
    }
    total
}

/// `int |phi|^2 dx` over both trajectories plus the analytic contribution of
/// exponential tails `|phi(x_end)|^2 / (2 Re decay_rate)` beyond each end.
pub fn norm_with_tails(
    traj_left: &Trajectory,
    traj_right: &Trajectory,
    decay_rate: Complex64,
) -> Result<f64> {
    if !(decay_rate.re > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "decay rate needs a positive real part, got {decay_rate}"
        )));
    }
    if (traj_left.states[0].phi - traj_right.states[0].phi).norm() > 1e-12 * traj_left.states[0].phi.norm().max(1.0)
        || traj_left.x_from != traj_right.x_from
    {
        return Err(Error::GridMismatch(
            "trajectories do not share their first sample".into(),
        ));
    }
    let tails =
        (traj_left.last().phi.norm_sqr() + traj_right.last().phi.norm_sqr()) / (2.0 * decay_rate.re);
    Ok(density_integral(traj_left) + density_integral(traj_right) + tails)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub root: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn two_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Newton iteration for `F(u) = 0` with a forward-difference Jacobian
/// (relative step 1e-7, absolute floor 1e-9). Steps are halved until the
/// residual norm decreases. Converged when `max_i |F_i| < tol`.
pub fn newton_root<F>(mut residual_fn: F, u0: &[f64], tol: f64, max_iter: usize) -> Result<NewtonOutcome>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    const REL_STEP: f64 = 1e-7;
    const ABS_STEP: f64 = 1e-9;
    const MAX_HALVINGS: usize = 40;
    const PIVOT_RATIO: f64 = 1e-14;

    let n = u0.len();
    let mut u = u0.to_vec();
    let mut f = residual_fn(&u)?;
    if f.len() != n {
        return Err(Error::InvalidParameter(format!(
            "residual has {} components for {} unknowns",
            f.len(),
            n
        )));
    }
    for iteration in 0..=max_iter {
        let res = inf_norm(&f);
        if res < tol {
            return Ok(NewtonOutcome {
                root: u,
                residual_norm: res,
                iterations: iteration,
            });
        }
        if iteration == max_iter {
            break;
        }

        let mut jac = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let du = (REL_STEP * u[j].abs()).max(ABS_STEP);
            let mut probe = u.clone();
            probe[j] += du;
            let fp = residual_fn(&probe)?;
            for i in 0..n {
                jac[(i, j)] = (fp[i] - f[i]) / du;
            }
        }

        let lu = jac.lu();
        let diag = lu.u().diagonal();
        let max_pivot = diag.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
        let min_pivot = diag.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
        if !(max_pivot > 0.0) || min_pivot < PIVOT_RATIO * max_pivot {
            return Err(Error::SingularJacobian { iteration });
        }
        let rhs = DVector::from_iterator(n, f.iter().map(|x| -x));
        let delta = lu.solve(&rhs).ok_or(Error::SingularJacobian { iteration })?;

        let base = two_norm(&f);
        let mut damping = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = u.iter().zip(delta.iter()).map(|(a, d)| a + damping * d).collect();
            if let Ok(ft) = residual_fn(&trial) {
                if ft.iter().all(|x| x.is_finite()) && two_norm(&ft) < base {
                    u = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            damping *= 0.5;
        }
        if !accepted {
            return Err(Error::LineSearchFailed { residual: res });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: inf_norm(&f),
    })
}
