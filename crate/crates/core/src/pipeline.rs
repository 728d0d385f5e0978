//! Experiments on top of the solvers: gamma sweeps of both sectors, state
//! removal, the exceptional-point study and the weak-nonlinearity
//! comparison.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::StatePair;
use crate::model::{evaluate_smooth, make_pt_trap, PotentialField, SampledProfile, Segment, SmoothPart};
use crate::oracle::find_exceptional_point;
use crate::shooting::{
    continue_in_parameter, find_bound_states, hermitian_seed, normalized_seed, seed_from_kappa, solve_nonlinear_state,
    solve_state, EigenSolution, ShootingConfig, ShootingUnknowns,
};
use crate::susy::{
    partner_potential, riccati_superpotential, superpotential_family, superpotential_standard, verify_factorization, Grid,
    PartnerPotential, RiccatiMode, Superpotential, XiConstant,
};

/// Largest step of the continuation variable `sqrt|gamma - gamma_crit|`.
const PATH_STEP: f64 = 0.05;
/// Distance from the exceptional point treated as sitting on it.
const EP_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub shooting: ShootingConfig,
    /// Worker threads for independent partner solves.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            shooting: ShootingConfig::default(),
            jobs: 1,
        }
    }
}

fn linear_field(gamma: f64, a: f64) -> Result<PotentialField> {
    Ok(PotentialField::original(make_pt_trap(gamma.max(0.0), a, 0.0, Complex64::new(0.0, 0.0))?))
}

/// Maps `f` over `items` on up to `jobs` threads; output keeps input order.
pub fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                scope.spawn(move || part.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Both bound states of the linear trap at one gamma. `state0` is the ground
/// state below the exceptional point and the state with `Im E > 0` above it.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPoint {
    pub gamma: f64,
    pub state0: EigenSolution,
    pub state1: EigenSolution,
}

/// Inserts points so that consecutive entries differ by at most `step`.
fn densify(points: &[f64], step: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &p in points {
        if let Some(&last) = out.last() {
            let n = ((p - last).abs() / step).ceil() as usize;
            for k in 1..n {
                out.push(last + (p - last) * k as f64 / n as f64);
            }
        }
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    out
}

fn pick<'a>(path: &[f64], sols: &'a [EigenSolution], s: f64) -> &'a EigenSolution {
    let i = path.iter().position(|&p| p == s).expect("target lies on the path");
    &sols[i]
}

/// Follows both linear bound states from the closed-form Hermitian seeds to
/// every gamma in `gammas` (ascending). Below the exceptional point the path
/// is uniform in `s = sqrt(gamma_crit - gamma)`, where both branches are
/// smooth. Above it the pair is restarted from the square-root expansion
/// fitted to the last two points below and followed in
/// `sqrt(gamma - gamma_crit)`.
pub fn track_pair(a: f64, gammas: &[f64], config: &ShootingConfig) -> Result<Vec<PairPoint>> {
    if gammas.is_empty() {
        return Ok(Vec::new());
    }
    if gammas.windows(2).any(|w| w[1] < w[0]) || gammas[0] < 0.0 {
        return Err(Error::InvalidParameter("gamma values must be non-negative and ascending".into()));
    }
    let gc = find_exceptional_point(a)?.gamma_crit;
    let below: Vec<f64> = gammas.iter().copied().filter(|&g| g < gc - EP_SNAP).collect();
    let needs_ep = gammas.iter().any(|&g| g >= gc - EP_SNAP);

    let s_of = |g: f64| (gc - g).max(0.0).sqrt();
    let mut anchors = vec![gc.sqrt()];
    anchors.extend(below.iter().map(|&g| s_of(g)));
    if needs_ep {
        anchors.extend([0.02, 0.01]);
    }
    anchors.sort_by(|x, y| y.partial_cmp(x).unwrap());
    anchors.dedup();
    let path = densify(&anchors, PATH_STEP);
    let gamma_at = |s: f64| -> f64 {
        below
            .iter()
            .copied()
            .find(|&g| s_of(g) == s)
            .unwrap_or_else(|| (gc - s * s).max(0.0))
    };
    let family = |s: f64| linear_field(gamma_at(s), a);
    let lower0 = continue_in_parameter(family, &path, &hermitian_seed(a, 0)?, config)?;
    let lower1 = continue_in_parameter(family, &path, &hermitian_seed(a, 1)?, config)?;

    let mut out = Vec::with_capacity(gammas.len());
    for &g in &below {
        let s = s_of(g);
        out.push(PairPoint {
            gamma: g,
            state0: pick(&path, &lower0, s).clone(),
            state1: pick(&path, &lower1, s).clone(),
        });
    }
    if !needs_ep {
        return Ok(out);
    }

    // kappa_+-(s) = kappa_ep +- c s + O(s^2) from the two innermost points
    let n = path.len();
    let (sa, sb) = (path[n - 2], path[n - 1]);
    let mean = |i: usize| 0.5 * (lower0[i].kappa + lower1[i].kappa);
    let kappa_ep = (sa * sa * mean(n - 1) - sb * sb * mean(n - 2)) / (sa * sa - sb * sb);
    let c = (0.5 * (lower0[n - 1].kappa - lower1[n - 1].kappa) / sb).re;

    let above: Vec<f64> = gammas.iter().copied().filter(|&g| g >= gc - EP_SNAP).collect();
    let at_ep: Vec<f64> = above.iter().copied().filter(|&g| (g - gc).abs() < EP_SNAP).collect();
    for &g in &at_ep {
        let field = linear_field(g, a)?;
        let sol = solve_state(&field, &seed_from_kappa(&field, kappa_ep)?, config)
            .map_err(|e| Error::ExceptionalPoint(format!("no state at gamma_crit: {e}")))?;
        out.push(PairPoint {
            gamma: g,
            state0: sol.clone(),
            state1: sol,
        });
    }
    let broken: Vec<f64> = above.iter().copied().filter(|&g| g >= gc + EP_SNAP).collect();
    if broken.is_empty() {
        return Ok(out);
    }
    let t_of = |g: f64| (g - gc).sqrt();
    let mut anchors: Vec<f64> = broken.iter().map(|&g| t_of(g)).collect();
    let first = anchors[0].min(0.02);
    anchors.insert(0, first);
    anchors.dedup();
    let path = densify(&anchors, PATH_STEP);
    let gamma_up = |t: f64| -> f64 {
        broken
            .iter()
            .copied()
            .find(|&g| t_of(g) == t)
            .unwrap_or(gc + t * t)
    };
    let family = |t: f64| linear_field(gamma_up(t), a);
    let field0 = family(path[0])?;
    let i = Complex64::new(0.0, 1.0);
    let seed0 = seed_from_kappa(&field0, kappa_ep - i * c * path[0])?;
    let seed1 = seed_from_kappa(&field0, kappa_ep + i * c * path[0])?;
    let upper0 = continue_in_parameter(family, &path, &seed0, config)?;
    let upper1 = continue_in_parameter(family, &path, &seed1, config)?;
    for &g in &broken {
        let t = t_of(g);
        out.push(PairPoint {
            gamma: g,
            state0: pick(&path, &upper0, t).clone(),
            state1: pick(&path, &upper1, t).clone(),
        });
    }
    Ok(out)
}

/// Trial partner state `B- phi_other = W phi + phi'` built from the initial
/// data of `other`, with decay rate `other.kappa`.
pub fn partner_seed(
    w: &Superpotential,
    partner: &PartnerPotential,
    original: &PotentialField,
    other: &EigenSolution,
    config: &ShootingConfig,
) -> Result<ShootingUnknowns> {
    let s = other.initial();
    let region = w.region_of(0.0);
    let (w0, dw0) = (w.value_in_region(region, 0.0), w.derivative_in_region(region, 0.0));
    let v = evaluate_smooth(original, 0.0, s.phi.norm_sqr())?;
    let d2 = (v - other.energy()) * s.phi;
    let psi = StatePair::new(w0 * s.phi + s.dphi, dw0 * s.phi + w0 * s.dphi + d2);
    normalized_seed(&partner.field, psi, other.kappa, config)
}

fn partner_from(
    w: &Superpotential,
    trap_field: &PotentialField,
    other: &EigenSolution,
    config: &ShootingConfig,
) -> Result<(PartnerPotential, EigenSolution)> {
    let partner = partner_potential(w, &trap_field.trap)?;
    let seed = partner_seed(w, &partner, trap_field, other, config)?;
    let sol = solve_state(&partner.field, &seed, config)?;
    Ok((partner, sol))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub gamma: f64,
    pub e0_1: Complex64,
    pub e1_1: Complex64,
    pub e0_2: Complex64,
    /// Set at and above the exceptional point.
    pub gamma_crit_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumTable {
    pub a: f64,
    pub removed_index: usize,
    pub gamma_crit: f64,
    pub rows: Vec<SpectrumRow>,
}

/// Gamma grid from `from` to `to` in steps of `step`, refined to a tenth of
/// the step within 0.01 of `gamma_crit`.
pub fn refined_grid(from: f64, to: f64, step: f64, gamma_crit: Option<f64>) -> Vec<f64> {
    if !(step > 0.0) || to < from {
        return Vec::new();
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    let mut g: Vec<f64> = (0..=n).map(|i| from + step * i as f64).collect();
    if let Some(gc) = gamma_crit {
        let fine = step / 10.0;
        let lo = (gc - 0.01).max(from);
        let hi = (gc + 0.01).min(to);
        let m = ((hi - lo) / fine).floor() as isize;
        for i in 0..=m.max(-1) {
            g.push(lo + fine * i as f64);
        }
        g.sort_by(|x, y| x.partial_cmp(y).unwrap());
        g.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    }
    g
}

/// Original pair and the partner state for `removed_index` at every gamma.
pub fn sweep_spectrum(a: f64, gamma_grid: &[f64], removed_index: usize, config: &PipelineConfig) -> Result<SpectrumTable> {
    if removed_index > 1 {
        return Err(Error::InvalidParameter(format!("state index must be 0 or 1, got {removed_index}")));
    }
    let gc = find_exceptional_point(a)?.gamma_crit;
    let pairs = track_pair(a, gamma_grid, &config.shooting)?;
    let rows = parallel_map(&pairs, config.jobs, |p| -> Result<SpectrumRow> {
        let partner_energy = partner_energy_at(p, a, removed_index, &config.shooting)?;
        Ok(SpectrumRow {
            gamma: p.gamma,
            e0_1: p.state0.energy(),
            e1_1: p.state1.energy(),
            e0_2: partner_energy,
            gamma_crit_flag: p.gamma >= gc - EP_SNAP,
        })
    });
    Ok(SpectrumTable {
        a,
        removed_index,
        gamma_crit: gc,
        rows: rows.into_iter().collect::<Result<Vec<_>>>()?,
    })
}

fn partner_energy_at(p: &PairPoint, a: f64, removed_index: usize, config: &ShootingConfig) -> Result<Complex64> {
    let gc = find_exceptional_point(a)?.gamma_crit;
    if (p.gamma - gc).abs() < EP_SNAP {
        return Ok(survivor_partner(a, removed_index, config)?.2.energy());
    }
    let (removed, other) = if removed_index == 0 { (&p.state0, &p.state1) } else { (&p.state1, &p.state0) };
    let w = superpotential_standard(removed.kappa, p.gamma, a)?;
    let (_, sol) = partner_from(&w, &linear_field(p.gamma, a)?, other, config)?;
    Ok(sol.energy())
}

/// Partner state at the exceptional point, reached by following the partner
/// state of `gamma_crit - s^2` as `s -> 0`. Returns the superpotential, the
/// partner potential and the state.
pub fn survivor_partner(a: f64, removed_index: usize, config: &ShootingConfig) -> Result<(Superpotential, PartnerPotential, EigenSolution)> {
    let gc = find_exceptional_point(a)?.gamma_crit;
    let ladder = [0.02, 0.01, 0.005, 0.0025, 0.00125, 0.0];
    let gammas: Vec<f64> = ladder.iter().map(|s| if *s == 0.0 { gc } else { gc - s * s }).collect();
    let pairs = track_pair(a, &gammas, config)?;
    let mut prev: Vec<(f64, ShootingUnknowns)> = Vec::new();
    let mut last = None;
    for (s, p) in ladder.iter().zip(&pairs) {
        let (removed, other) = if removed_index == 0 { (&p.state0, &p.state1) } else { (&p.state1, &p.state0) };
        let field = linear_field(p.gamma, a)?;
        let w = superpotential_standard(removed.kappa, p.gamma, a)?;
        let partner = partner_potential(&w, &field.trap)?;
        let seed = match prev.as_slice() {
            [] => partner_seed(&w, &partner, &field, other, config)?,
            [(_, u)] => *u,
            [.., (sa, ua), (sb, ub)] => ua.lerp(ub, (s - sa) / (sb - sa)),
        };
        let sol = solve_state(&partner.field, &seed, config).map_err(|_| Error::ContinuationGap { parameter: p.gamma })?;
        prev.push((*s, sol.unknowns()));
        last = Some((w, partner, sol));
    }
    last.ok_or(Error::ContinuationGap { parameter: gc })
}

/// One removal experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemovalReport {
    pub removed_index: usize,
    pub gamma: f64,
    pub a: f64,
    pub g: f64,
    /// `None` for the standard superpotential.
    pub xi_left: Option<Complex64>,
    pub xi_constants: Option<Vec<XiConstant>>,
    pub original_energies: [Complex64; 2],
    pub partner_energy: Complex64,
    /// `E_other - E_removed`.
    pub ideal_energy: Complex64,
    /// Partner eigenvalues not reached by `B-`: the zero mode `exp(int W)`
    /// of a superpotential with finite outer constants.
    pub extra_states: Vec<Complex64>,
    pub v2_at_origin: Complex64,
    pub factorization_residual: f64,
    pub poles: Vec<f64>,
    #[serde(skip)]
    pub superpotential: Superpotential,
    #[serde(skip)]
    pub partner: PartnerPotential,
    #[serde(skip)]
    pub partner_state: EigenSolution,
}

impl RemovalReport {
    /// `(x, W)` on `[-extent, extent]`.
    pub fn w_samples(&self, extent: f64, h: f64) -> Vec<(f64, Complex64)> {
        self.superpotential.sample(-extent, extent, h)
    }

    /// `(x, V2)` on `[-extent, extent]`, one-sided at the deltas.
    pub fn v2_samples(&self, extent: f64, h: f64) -> Vec<(f64, Complex64)> {
        let field = &self.partner.field;
        let mut cuts = vec![-extent];
        cuts.extend(field.trap.deltas.iter().map(|d| d.position).filter(|&p| p.abs() < extent));
        cuts.push(extent);
        let mut out = Vec::new();
        for w in cuts.windows(2) {
            let region = field.region_of(0.5 * (w[0] + w[1]));
            let n = ((w[1] - w[0]) / h).ceil().max(1.0) as usize;
            for i in 0..=n {
                let x = w[0] + (w[1] - w[0]) * i as f64 / n as f64;
                if let Ok(v) = field.smooth_in_region(region, x) {
                    out.push((x, v));
                }
            }
        }
        out
    }

    pub fn pt_asymmetry(&self, extent: f64) -> f64 {
        let field = &self.partner.field;
        (0..=400)
            .map(|i| extent * (i as f64 + 0.5) / 401.0)
            .filter(|x| field.trap.deltas.iter().all(|d| (d.position.abs() - x).abs() > 1e-9))
            .filter_map(|x| Some((self.partner.value(-x).ok()? - self.partner.value(x).ok()?.conj()).norm()))
            .fold(0.0, f64::max)
    }
}

/// Sampled `V1 = lambda0^2 + g |phi0|^2` of a solved ground state, with the
/// deltas of the original trap.
pub fn sampled_v1(original: &PotentialField, ground: &EigenSolution) -> PotentialField {
    let g = original.nonlinearity();
    let shift = -ground.energy();
    let (phi, _) = ground.region_segments();
    let segments = phi
        .iter()
        .map(|s| Segment {
            x_start: s.x_start,
            h: s.h,
            values: s.values.iter().map(|f| shift + g * f.norm_sqr()).collect(),
        })
        .collect();
    let mut trap = original.trap.with_shift(shift);
    trap.nonlinearity = 0.0;
    PotentialField {
        trap,
        smooth: SmoothPart::Sampled(SampledProfile {
            segments,
            below: shift,
            above: shift,
        }),
        kind: original.kind,
        poles: Vec::new(),
    }
}

/// Both original states with self-interaction `g`, continued in `g` from
/// the linear pair.
pub fn nonlinear_pair(pair: &PairPoint, a: f64, g: f64, config: &ShootingConfig) -> Result<(EigenSolution, EigenSolution)> {
    if g == 0.0 {
        return Ok((pair.state0.clone(), pair.state1.clone()));
    }
    let family = |gg: f64| Ok(PotentialField::original(make_pt_trap(pair.gamma, a, gg, Complex64::new(0.0, 0.0))?));
    let grid = [0.0, g];
    let s0 = continue_in_parameter(family, &grid, &pair.state0.unknowns(), config)?;
    let s1 = continue_in_parameter(family, &grid, &pair.state1.unknowns(), config)?;
    Ok((s0[1].clone(), s1[1].clone()))
}

/// Riccati superpotential of a solved state: integrated inward from the
/// asymptotic values `-+lambda`, or forward from the tanh value for a finite
/// left constant.
pub fn riccati_from_state(v1: &PotentialField, state: &EigenSolution, xi_left: Option<Complex64>) -> Result<Superpotential> {
    let h = state.step().abs();
    let xb = state.boundary();
    let grid = Grid {
        x_min: -xb,
        x_max: xb,
        h,
    };
    let (lam_l, lam_r) = state.decay_rates();
    match xi_left {
        None => riccati_superpotential(v1, -lam_l, &grid, RiccatiMode::Inward { end_w: lam_r }),
        Some(xi) => {
            let start = -lam_l * crate::susy::ctanh(lam_l * (-xb - xi));
            riccati_superpotential(v1, start, &grid, RiccatiMode::Forward)
        }
    }
}

/// Builds the partner of state `removed_index` at `gamma` and solves it.
pub fn remove_state(gamma: f64, a: f64, removed_index: usize, xi_left: Option<Complex64>, g: f64, config: &PipelineConfig) -> Result<RemovalReport> {
    if removed_index > 1 {
        return Err(Error::InvalidParameter(format!("state index must be 0 or 1, got {removed_index}")));
    }
    let cfg = &config.shooting;
    let pair = track_pair(a, &[gamma], cfg)?.remove(0);
    let gc = find_exceptional_point(a)?.gamma_crit;
    let field = linear_field(gamma, a)?;

    if g == 0.0 && xi_left.is_none() && (gamma - gc).abs() < EP_SNAP {
        let (w, partner, sol) = survivor_partner(a, removed_index, cfg)?;
        return Ok(report(removed_index, gamma, a, g, None, &pair.state0, &pair.state1, w, partner, sol, &field, Vec::new()));
    }

    if g == 0.0 {
        let (removed, other) = if removed_index == 0 { (&pair.state0, &pair.state1) } else { (&pair.state1, &pair.state0) };
        let w = match xi_left {
            None => superpotential_standard(removed.kappa, gamma, a)?,
            Some(xi) => superpotential_family(removed.kappa, gamma, a, XiConstant::Finite(xi))?,
        };
        let (partner, sol) = partner_from(&w, &field, other, cfg)?;
        // exp(int W) is annihilated by B+ and normalizable once both outer
        // constants are finite: the removed level survives at E = 0
        let outer_finite = w
            .xi_constants()
            .is_some_and(|c| c.first().and_then(|x| x.finite()).is_some() && c.last().and_then(|x| x.finite()).is_some());
        let extra = if outer_finite { vec![Complex64::new(0.0, 0.0)] } else { Vec::new() };
        let v1 = PotentialField::original(field.trap.with_shift(removed.kappa * removed.kappa));
        let (e0, e1) = (pair.state0.clone(), pair.state1.clone());
        let mut r = report(removed_index, gamma, a, g, xi_left, &e0, &e1, w, partner, sol, &v1, extra);
        r.xi_left = xi_left;
        return Ok(r);
    }

    let nl_field = PotentialField::original(make_pt_trap(gamma, a, g, Complex64::new(0.0, 0.0))?);
    let (s0, s1) = nonlinear_pair(&pair, a, g, cfg)?;
    let (removed, other) = if removed_index == 0 { (&s0, &s1) } else { (&s1, &s0) };
    let v1 = sampled_v1(&nl_field, removed);
    let w = riccati_from_state(&v1, removed, xi_left)?;
    if let Some(&x) = w.poles.first() {
        return Err(Error::Pole { x });
    }
    let partner = partner_potential(&w, &v1.trap)?;
    let seed = partner_seed(&w, &partner, &nl_field, other, cfg)?;
    let sol = solve_state(&partner.field, &seed, cfg)?;
    Ok(report(removed_index, gamma, a, g, xi_left, &s0, &s1, w, partner, sol, &v1, Vec::new()))
}

#[allow(clippy::too_many_arguments)]
fn report(
    removed_index: usize,
    gamma: f64,
    a: f64,
    g: f64,
    xi_left: Option<Complex64>,
    s0: &EigenSolution,
    s1: &EigenSolution,
    w: Superpotential,
    partner: PartnerPotential,
    sol: EigenSolution,
    v1: &PotentialField,
    extra_states: Vec<Complex64>,
) -> RemovalReport {
    let (e0, e1) = (s0.energy(), s1.energy());
    let ideal = if removed_index == 0 { e1 - e0 } else { e0 - e1 };
    let v2_at_origin = partner.value(0.0).unwrap_or(Complex64::new(f64::NAN, f64::NAN));
    RemovalReport {
        removed_index,
        gamma,
        a,
        g,
        xi_left,
        xi_constants: w.xi_constants(),
        original_energies: [e0, e1],
        partner_energy: sol.energy(),
        ideal_energy: ideal,
        extra_states,
        v2_at_origin,
        factorization_residual: verify_factorization(&w, v1),
        poles: w.poles.clone(),
        superpotential: w,
        partner,
        partner_state: sol,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonlinearRow {
    pub g: f64,
    pub gamma: f64,
    pub e0_2: Option<Complex64>,
    pub e_id: Option<Complex64>,
    /// `|E0_2 - E_id|`.
    pub deviation: Option<f64>,
    pub error: Option<String>,
}

/// Ground-removal partner energy against `E_id = E1 - E0` of the nonlinear
/// originals, for every `(g, gamma)`. Failed points carry their error.
pub fn nonlinear_comparison(g_values: &[f64], a: f64, gamma_grid: &[f64], config: &PipelineConfig) -> Result<Vec<NonlinearRow>> {
    if let Some(&g) = g_values.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(Error::InvalidParameter(format!("nonlinearity must be non-negative, got {g}")));
    }
    let pairs = track_pair(a, gamma_grid, &config.shooting)?;
    let tasks: Vec<(f64, &PairPoint)> = g_values.iter().flat_map(|&g| pairs.iter().map(move |p| (g, p))).collect();
    let rows = parallel_map(&tasks, config.jobs, |&(g, p)| match nonlinear_point(p, a, g, &config.shooting) {
        Ok((e2, eid)) => NonlinearRow {
            g,
            gamma: p.gamma,
            e0_2: Some(e2),
            e_id: Some(eid),
            deviation: Some((e2 - eid).norm()),
            error: None,
        },
        Err(e) => NonlinearRow {
            g,
            gamma: p.gamma,
            e0_2: None,
            e_id: None,
            deviation: None,
            error: Some(e.to_string()),
        },
    });
    Ok(rows)
}

fn nonlinear_point(pair: &PairPoint, a: f64, g: f64, config: &ShootingConfig) -> Result<(Complex64, Complex64)> {
    let nl_field = PotentialField::original(make_pt_trap(pair.gamma, a, g, Complex64::new(0.0, 0.0))?);
    let (s0, s1) = nonlinear_pair(pair, a, g, config)?;
    let v1 = sampled_v1(&nl_field, &s0);
    let w = riccati_from_state(&v1, &s0, None)?;
    if let Some(&x) = w.poles.first() {
        return Err(Error::Pole { x });
    }
    let partner = partner_potential(&w, &v1.trap)?;
    let seed = partner_seed(&w, &partner, &nl_field, &s1, config)?;
    let sol = solve_nonlinear_state(&partner.field, &seed, config)?;
    Ok((sol.energy(), s1.energy() - s0.energy()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpReport {
    pub a: f64,
    pub gamma_crit_oracle: f64,
    pub kappa_ep_oracle: Complex64,
    pub gamma_crit_shooting: f64,
    pub survivor_energy: Complex64,
    pub survivor_pt_deviation: f64,
    /// Distinct partner states found by a multi-seed search at the EP.
    pub partner_state_count: usize,
    #[serde(skip)]
    pub survivor: EigenSolution,
}

/// Gamma at which shooting continuation stops finding two distinct real
/// states: coarse continuation in gamma, then bisection down to 1e-7.
pub fn shooting_gamma_crit(a: f64, config: &ShootingConfig) -> Result<f64> {
    let distinct_real = |g: f64, u0: &ShootingUnknowns, u1: &ShootingUnknowns| -> Option<(ShootingUnknowns, ShootingUnknowns)> {
        let field = linear_field(g, a).ok()?;
        let s0 = solve_state(&field, u0, config).ok()?;
        let s1 = solve_state(&field, u1, config).ok()?;
        let real = s0.kappa.im.abs() < 1e-9 && s1.kappa.im.abs() < 1e-9;
        (real && (s0.kappa.re - s1.kappa.re).abs() > 1e-4).then(|| (s0.unknowns(), s1.unknowns()))
    };
    let mut seeds = (hermitian_seed(a, 0)?, hermitian_seed(a, 1)?);
    let mut lo = 0.0;
    let mut hi = None;
    let step = 0.02;
    for k in 1..=200 {
        let g = step * k as f64;
        match distinct_real(g, &seeds.0, &seeds.1) {
            Some(next) => {
                seeds = next;
                lo = g;
            }
            None => {
                hi = Some(g);
                break;
            }
        }
    }
    let mut hi = hi.ok_or_else(|| Error::ExceptionalPoint("real pair persists up to gamma = 4".into()))?;
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        match distinct_real(mid, &seeds.0, &seeds.1) {
            Some(next) => {
                seeds = next;
                lo = mid;
            }
            None => hi = mid,
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Oracle and shooting estimates of `gamma_crit` and the partner state that
/// survives at the exceptional point.
pub fn ep_study(a: f64, config: &PipelineConfig) -> Result<EpReport> {
    let cfg = &config.shooting;
    let ep = find_exceptional_point(a)?;
    let shooting = shooting_gamma_crit(a, cfg)?;
    if (shooting - ep.gamma_crit).abs() > 1e-3 {
        return Err(Error::EpDisagreement {
            oracle: ep.gamma_crit,
            shooting,
        });
    }
    let (_, partner, survivor) = survivor_partner(a, 0, cfg)?;
    let states = find_bound_states(&partner.field, 0.05, 1.2, 12, cfg);
    Ok(EpReport {
        a,
        gamma_crit_oracle: ep.gamma_crit,
        kappa_ep_oracle: ep.kappa_ep,
        gamma_crit_shooting: shooting,
        survivor_energy: survivor.energy(),
        survivor_pt_deviation: survivor.pt_deviation(),
        partner_state_count: states.len(),
        survivor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::oracle_eigenvalues;

    #[test]
    fn densify_limits_the_step() {
        let d = densify(&[0.6, 0.45, 0.02, 0.01], 0.05);
        for w in d.windows(2) {
            assert!((w[0] - w[1]).abs() <= 0.05 + 1e-12);
        }
        assert_eq!(d[0], 0.6);
        assert_eq!(*d.last().unwrap(), 0.01);
        assert!(d.contains(&0.45) && d.contains(&0.02));
    }

    #[test]
    fn parallel_map_keeps_order() {
        let v: Vec<usize> = (0..37).collect();
        assert_eq!(parallel_map(&v, 4, |x| x * 2), parallel_map(&v, 1, |x| x * 2));
    }

    #[test]
    fn refined_grid_is_sorted_and_dense_near_ep() {
        let g = refined_grid(0.0, 0.6, 0.005, Some(0.4005));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(g.iter().filter(|&&x| (x - 0.4005).abs() < 0.01).count() > 30);
        assert!(refined_grid(0.3, 0.2, 0.01, None).is_empty());
    }

    #[test]
    fn tracked_pair_follows_the_oracle_through_the_ep() {
        let cfg = ShootingConfig::default();
        let gammas = [0.0, 0.2, 0.39, 0.45, 0.6];
        let pairs = track_pair(2.2, &gammas, &cfg).unwrap();
        for p in &pairs {
            let r = oracle_eigenvalues(p.gamma, 2.2).unwrap();
            assert!((p.state0.kappa - r.kappa0).norm() < 1e-8, "gamma {}", p.gamma);
            assert!((p.state1.kappa - r.kappa1).norm() < 1e-8, "gamma {}", p.gamma);
        }
    }

    #[test]
    fn hermitian_ground_removal() {
        let r = remove_state(0.0, 2.2, 0, None, 0.0, &PipelineConfig::default()).unwrap();
        assert!((r.partner_energy - r.ideal_energy).norm() < 1e-6);
        assert!((r.partner_energy.re - 0.3843).abs() < 5e-4);
        assert!(r.partner_energy.im.abs() < 1e-8);
    }
}
