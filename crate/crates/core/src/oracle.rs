//! Closed-form ground truth for the linear double-delta trap.
//!
//! Matching `e^{kx}` (left), `A e^{kx} + B e^{-kx}` (middle) and `C e^{-kx}`
//! (right) across the deltas with continuity and the derivative jumps gives
//! the characteristic function
//!
//! ```text
//! D(k) = (2k + nu)(2k + nu*) - nu nu* exp(-2 k a),   nu = -1 + i gamma
//! ```
//!
//! whose zeros with `Re k > 0` are the bound states, `E = -k^2`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::newton_root;

fn nu(gamma: f64) -> Complex64 {
    Complex64::new(-1.0, gamma)
}

pub fn char_fn(kappa: Complex64, gamma: f64, a: f64) -> Complex64 {
    let nu = nu(gamma);
    (2.0 * kappa + nu) * (2.0 * kappa + nu.conj()) - nu * nu.conj() * (-2.0 * kappa * a).exp()
}

pub fn char_fn_dkappa(kappa: Complex64, gamma: f64, a: f64) -> Complex64 {
    8.0 * kappa - 4.0 + 2.0 * a * (1.0 + gamma * gamma) * (-2.0 * kappa * a).exp()
}

/// Restriction of [`char_fn`] to real `kappa`, where it is real.
fn char_real(kappa: f64, gamma: f64, a: f64) -> f64 {
    (2.0 * kappa - 1.0).powi(2) + gamma * gamma - (1.0 + gamma * gamma) * (-2.0 * kappa * a).exp()
}

fn char_real_dkappa(kappa: f64, gamma: f64, a: f64) -> f64 {
    8.0 * kappa - 4.0 + 2.0 * a * (1.0 + gamma * gamma) * (-2.0 * kappa * a).exp()
}

fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Even Hermitian state: root of `k (1 + tanh(k a / 2)) = 1` in `(1/2, 1)`.
pub fn hermitian_even_root(a: f64) -> Result<f64> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidParameter(format!("separation must be positive, got {a}")));
    }
    Ok(bisect(|k| k * (1.0 + (0.5 * k * a).tanh()) - 1.0, 0.5, 1.0))
}

/// Odd Hermitian state: root of `k (1 + coth(k a / 2)) = 1`. Exists only for
/// `a > 2`.
pub fn hermitian_odd_root(a: f64) -> Result<f64> {
    if !(a.is_finite() && a > 2.0) {
        return Err(Error::InvalidParameter(format!(
            "the odd state is bound only for a > 2, got a = {a}"
        )));
    }
    // k (1 + coth) - 1 is positive as k -> 0+ and at k = 1/2
    let g = |k: f64| k * (1.0 + 1.0 / (0.5 * k * a).tanh()) - 1.0;
    // 2k - 1 + e^{-ka} has its minimum at ln(a/2)/a, where it is negative
    let k_min = (0.5 * a).ln() / a;
    Ok(bisect(|k| -g(k), k_min, 0.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleRoots {
    pub kappa0: Complex64,
    pub kappa1: Complex64,
    pub gamma: f64,
    pub a: f64,
    /// Set when the two roots coincide to 1e-12: the exceptional point.
    pub degenerate: bool,
}

impl OracleRoots {
    pub fn energies(&self) -> (Complex64, Complex64) {
        (-self.kappa0 * self.kappa0, -self.kappa1 * self.kappa1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExceptionalPoint {
    pub gamma_crit: f64,
    pub kappa_ep: Complex64,
    pub a: f64,
}

fn polish(mut k: Complex64, gamma: f64, a: f64) -> Complex64 {
    for _ in 0..50 {
        let f = char_fn(k, gamma, a);
        let d = char_fn_dkappa(k, gamma, a);
        if d.norm() == 0.0 {
            break;
        }
        let step = f / d;
        k -= step;
        if step.norm() < 1e-16 * k.norm().max(1.0) {
            break;
        }
    }
    k
}

/// Real positive roots of the characteristic function, largest first.
fn real_roots(gamma: f64, a: f64) -> Vec<f64> {
    let k_max = 0.5 * (1.0 + (1.0 + gamma * gamma).sqrt()) + 0.05;
    let n = 4000;
    let mut roots = Vec::new();
    let mut prev_k = 1e-7;
    let mut prev_f = char_real(prev_k, gamma, a);
    for i in 1..=n {
        let k = 1e-7 + (k_max - 1e-7) * i as f64 / n as f64;
        let f = char_real(k, gamma, a);
        if f == 0.0 || (f < 0.0) != (prev_f < 0.0) {
            let r = bisect(|x| char_real(x, gamma, a), prev_k, k);
            roots.push(polish(Complex64::new(r, 0.0), gamma, a).re);
        }
        prev_k = k;
        prev_f = f;
    }
    roots.sort_by(|x, y| y.partial_cmp(x).unwrap());
    roots.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    roots
}

/// Coalescence of the two bound states: simultaneous zero of the
/// characteristic function and its `kappa` derivative, solved by a 2-D
/// Newton iteration over real `(kappa, gamma)`.
pub fn find_exceptional_point(a: f64) -> Result<ExceptionalPoint> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidParameter(format!("separation must be positive, got {a}")));
    }
    // bracket the disappearance of the real pair on a coarse gamma scan
    let mut seed = None;
    let mut had_pair = false;
    let mut last_pair_gamma = 0.0;
    let mut gamma = 0.0;
    while gamma <= 10.0 {
        let roots = real_roots(gamma, a);
        if roots.len() >= 2 {
            had_pair = true;
            last_pair_gamma = gamma;
            // the minimum of the real characteristic function between the roots
            let k = bisect(|k| char_real_dkappa(k, gamma, a), roots[1], roots[0]);
            seed = Some((k, gamma));
        } else if had_pair {
            break;
        }
        gamma += 0.01;
    }
    let (k0, g0) = seed.ok_or_else(|| Error::ExceptionalPoint(format!("no bound pair for a = {a}")))?;
    let _ = last_pair_gamma;

    let out = newton_root(
        |u| Ok(vec![char_real(u[0], u[1], a), char_real_dkappa(u[0], u[1], a)]),
        &[k0, g0 + 0.005],
        1e-14,
        100,
    )
    .map_err(|e| Error::ExceptionalPoint(e.to_string()))?;
    let (kappa, gamma_crit) = (out.root[0], out.root[1]);
    if !(kappa > 0.0 && gamma_crit > 0.0) {
        return Err(Error::ExceptionalPoint(format!(
            "Newton left the physical domain (kappa = {kappa}, gamma = {gamma_crit})"
        )));
    }
    Ok(ExceptionalPoint {
        gamma_crit,
        kappa_ep: Complex64::new(kappa, 0.0),
        a,
    })
}

/// Both bound-state roots at `gamma`. Below the exceptional point they are
/// real and ordered by decreasing `kappa`; above it they form a conjugate
/// pair and `kappa0` is the root with `Im E > 0`, i.e. `Im kappa < 0`.
pub fn oracle_eigenvalues(gamma: f64, a: f64) -> Result<OracleRoots> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidParameter(format!("separation must be positive, got {a}")));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be non-negative, got {gamma}")));
    }
    let roots = real_roots(gamma, a);
    let make = |k0: Complex64, k1: Complex64| OracleRoots {
        kappa0: k0,
        kappa1: k1,
        gamma,
        a,
        degenerate: (k0 - k1).norm() < 1e-12,
    };
    if roots.len() >= 2 {
        return Ok(make(Complex64::new(roots[0], 0.0), Complex64::new(roots[1], 0.0)));
    }

    let ep = find_exceptional_point(a)?;
    let dg = gamma - ep.gamma_crit;
    if dg.abs() < 1e-9 {
        return Ok(make(ep.kappa_ep, ep.kappa_ep));
    }
    if dg < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "only {} bound state(s) at gamma = {gamma}, a = {a}",
            roots.len()
        )));
    }
    // square-root branch: D_kk dk^2 / 2 + D_g dgamma = 0
    let k_ep = ep.kappa_ep.re;
    let g_ep = ep.gamma_crit;
    let d_g = 2.0 * g_ep * (1.0 - (-2.0 * k_ep * a).exp());
    let d_kk = 8.0 - 4.0 * a * a * (1.0 + g_ep * g_ep) * (-2.0 * k_ep * a).exp();
    let slope = (2.0 * d_g / d_kk).sqrt();
    let s_target = dg.sqrt();
    let steps = ((s_target / 0.01).ceil() as usize).max(1);
    let mut k = Complex64::new(k_ep, -slope * s_target / steps as f64);
    for i in 1..=steps {
        let s = s_target * i as f64 / steps as f64;
        let g = g_ep + s * s;
        if i > 1 {
            k += Complex64::new(0.0, -slope * s_target / steps as f64);
        }
        k = polish(k, g, a);
    }
    if k.im > 0.0 {
        k = k.conj();
    }
    if char_fn(k, gamma, a).norm() > 1e-12 || k.re <= 0.0 {
        return Err(Error::NoConvergence {
            iterations: steps,
            residual: char_fn(k, gamma, a).norm(),
        });
    }
    Ok(make(k, k.conj()))
}

/// Separation for which the Hermitian ground state has `|E0| = target`.
pub fn calibrate_separation(target_e0_abs: f64) -> Result<f64> {
    if !(target_e0_abs > 0.0 && target_e0_abs < 1.0) {
        return Err(Error::TargetOutOfRange(target_e0_abs));
    }
    // the even root falls from 1 (a -> 0) to 1/2 (a -> inf)
    let kappa = target_e0_abs.sqrt();
    if kappa <= 0.5 {
        return Err(Error::TargetOutOfRange(target_e0_abs));
    }
    let residual = |a: f64| hermitian_even_root(a).map(|k| k * k - target_e0_abs).unwrap_or(f64::NAN);
    let mut lo = 1e-9;
    let mut hi = 1.0;
    while residual(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::TargetOutOfRange(target_e0_abs));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn hermitian_limit_reduces_to_square() {
        for k in [0.1, 0.4, 0.9] {
            let lhs = char_fn(c(k, 0.0), 0.0, 2.2);
            let rhs = (2.0 * k - 1.0_f64).powi(2) - (-2.0 * k * 2.2_f64).exp();
            assert!((lhs.re - rhs).abs() < 1e-15 && lhs.im.abs() < 1e-15);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let k = c(0.4, 0.07);
        let h = 1e-6;
        let fd = (char_fn(k + h, 0.3, 2.2) - char_fn(k - h, 0.3, 2.2)) / (2.0 * h);
        assert!((fd - char_fn_dkappa(k, 0.3, 2.2)).norm() < 1e-8);
    }

    #[test]
    fn hermitian_roots_at_default_separation() {
        let k0 = hermitian_even_root(2.2).unwrap();
        let k1 = hermitian_odd_root(2.2).unwrap();
        assert!((k0 - 0.6261).abs() < 1e-4);
        assert!((k0 * k0 - 0.3920).abs() < 5e-4);
        assert!((k1 - 0.0880).abs() < 1e-4);
        assert!((k1 * k1 - 0.0077).abs() < 1e-4);
        // even and odd matching equations
        assert!((2.0 * k0 - 1.0 - (-k0 * 2.2).exp()).abs() < 1e-12);
        assert!((2.0 * k1 - 1.0 + (-k1 * 2.2).exp()).abs() < 1e-12);
        assert!(hermitian_odd_root(1.9).is_err());
    }

    #[test]
    fn roots_at_zero_gamma() {
        let r = oracle_eigenvalues(0.0, 2.2).unwrap();
        assert!((r.kappa0.re - hermitian_even_root(2.2).unwrap()).abs() < 1e-12);
        assert!((r.kappa1.re - hermitian_odd_root(2.2).unwrap()).abs() < 1e-12);
        assert!(char_fn(r.kappa0, 0.0, 2.2).norm() < 1e-12);
        assert!(char_fn(r.kappa1, 0.0, 2.2).norm() < 1e-12);
    }

    #[test]
    fn real_pair_below_and_conjugate_pair_above() {
        let r = oracle_eigenvalues(0.3, 2.2).unwrap();
        assert!(r.kappa0.im.abs() < 1e-10 && r.kappa1.im.abs() < 1e-10);
        assert!(r.kappa0.re > r.kappa1.re + 0.1);
        let r = oracle_eigenvalues(0.5, 2.2).unwrap();
        assert!((r.kappa0 - r.kappa1.conj()).norm() < 1e-12);
        let (e0, e1) = r.energies();
        assert!(e0.im > 0.0 && e1.im < 0.0);
        assert!(char_fn(r.kappa0, 0.5, 2.2).norm() < 1e-12);
    }

    #[test]
    fn exceptional_point_at_default_separation() {
        let ep = find_exceptional_point(2.2).unwrap();
        assert!((ep.gamma_crit - 0.4005).abs() < 1e-3, "gamma_crit {}", ep.gamma_crit);
        let r = oracle_eigenvalues(ep.gamma_crit, 2.2).unwrap();
        assert!((r.kappa0 - r.kappa1).norm() < 1e-6);
    }

    #[test]
    fn exceptional_point_moves_down_with_separation() {
        let gs: Vec<f64> = [1.5, 2.0, 2.5, 3.0]
            .iter()
            .map(|&a| find_exceptional_point(a).unwrap().gamma_crit)
            .collect();
        for w in gs.windows(2) {
            assert!(w[1] < w[0], "{gs:?}");
        }
    }

    #[test]
    fn calibration_round_trip() {
        let a = calibrate_separation(0.3920).unwrap();
        assert!((a - 2.2).abs() < 1e-3, "a = {a}");
        // closed form of the even equation: 2k - 1 = e^{-ka}
        let k = 0.392_f64.sqrt();
        assert!((a - (-(2.0 * k - 1.0).ln() / k)).abs() < 1e-9);
        let k0 = hermitian_even_root(a).unwrap();
        assert!((k0 * k0 - 0.3920).abs() < 1e-6);
        let k1 = hermitian_odd_root(a).unwrap();
        assert!((k1 * k1 - 0.0077).abs() < 5e-4);
    }

    #[test]
    fn calibration_rejects_unreachable_targets() {
        // kappa0 = 1/2 is only reached for infinite separation
        assert!(matches!(calibrate_separation(0.25), Err(Error::TargetOutOfRange(_))));
        assert!(calibrate_separation(1.2).is_err());
        assert!(calibrate_separation(0.0).is_err());
    }

    #[test]
    fn char_fn_conjugation_symmetry() {
        for (k, g) in [(c(0.3, 0.2), 0.1), (c(1.2, -0.7), 0.45), (c(0.05, 0.01), 0.9)] {
            let lhs = char_fn(k.conj(), g, 2.2);
            let rhs = char_fn(k, g, 2.2).conj();
            assert!((lhs - rhs).norm() < 1e-14);
        }
    }
}
