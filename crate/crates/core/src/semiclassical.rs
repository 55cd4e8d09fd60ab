//! Sequential Landau–Zener pathway model.
//!
//! A classical trajectory starts at rest on the upper adiabatic surface and
//! moves along `x` with `y` and `z` frozen. Two routes end on the upper
//! surface after the intersection:
//!
//! * emission at the left resonance (probability `P_L`), motion on the lower
//!   surface to the intersection and a diabatic passage there (`P_CI`);
//! * no emission on the left, diabatic passage through the intersection, and
//!   absorption at the right resonance (`P_R`).
//!
//! `P_E = P_L·P_CI + (1 − P_L)·P_R`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::{FieldKind, FieldSpec, ModelParams, Surface};
use crate::lattice::{X, Y};
use crate::units::{mass_ev, HBAR};

/// Integrator step in fs.
pub const TRAJECTORY_DT: f64 = 0.01;

/// Bisection tolerance for resonance positions, Å.
pub const RESONANCE_TOL: f64 = 1e-6;

/// Default number of Monte-Carlo samples per photon energy.
pub const DEFAULT_SAMPLES: usize = 2000;

/// Classical path along `x` on one surface at fixed `y`, `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub surface: Surface,
    pub y: f64,
    pub z: f64,
    /// Conserved energy, eV.
    pub energy: f64,
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl Trajectory {
    /// Speed from energy conservation at `x`, Å/fs.
    pub fn speed_at(&self, params: &ModelParams, x: f64) -> Result<f64> {
        speed_on(params, self.surface, self.energy, x, self.y, self.z)
    }

    /// First time the path reaches `target`, linearly interpolated.
    pub fn time_at(&self, target: f64) -> Option<f64> {
        self.crossing(target).map(|(t, _)| t)
    }

    /// Time and velocity where the path first reaches `target`, linearly
    /// interpolated between integrator samples.
    pub fn crossing(&self, target: f64) -> Option<(f64, f64)> {
        if self.x.first() == Some(&target) {
            return Some((self.times[0], self.v[0]));
        }
        (1..self.x.len()).find_map(|k| {
            let (a, b) = (self.x[k - 1] - target, self.x[k] - target);
            if (a < 0.0) != (b < 0.0) || b == 0.0 {
                let f = a / (a - b);
                let lerp = |p: &[f64]| p[k - 1] + (p[k] - p[k - 1]) * f;
                Some((lerp(&self.times), lerp(&self.v)))
            } else {
                None
            }
        })
    }

    pub fn end_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Largest deviation of `V(x) + ½mv²` from the initial energy.
    pub fn energy_drift(&self, params: &ModelParams) -> f64 {
        let m = mass_ev(params.mass);
        self.x
            .iter()
            .zip(&self.v)
            .map(|(&x, &v)| {
                (params.potential(self.surface, x, self.y, self.z) + 0.5 * m * v * v - self.energy)
                    .abs()
            })
            .fold(0.0, f64::max)
    }
}

/// `√(2(E − V)/m)` or a domain error where the point is classically forbidden.
pub fn speed_on(
    params: &ModelParams,
    surface: Surface,
    energy: f64,
    x: f64,
    y: f64,
    z: f64,
) -> Result<f64> {
    let kinetic = energy - params.potential(surface, x, y, z);
    if kinetic < 0.0 {
        return Err(Error::Domain(format!(
            "x = {x} Å is classically forbidden on {surface:?} at E = {energy} eV"
        )));
    }
    Ok((2.0 * kinetic / mass_ev(params.mass)).sqrt())
}

/// When to stop integrating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stop {
    /// After this much time.
    Duration(f64),
    /// When `x` reaches the target, or after the duration, whichever is first.
    ReachX { target: f64, max_duration: f64 },
}

/// Integrates `ẍ = −(1/m)·∂V/∂x` with classical RK4 at [`TRAJECTORY_DT`].
pub fn classical_trajectory(
    params: &ModelParams,
    surface: Surface,
    x_start: f64,
    v_start: f64,
    y: f64,
    z: f64,
    stop: Stop,
) -> Trajectory {
    let m = mass_ev(params.mass);
    let energy = params.potential(surface, x_start, y, z) + 0.5 * m * v_start * v_start;
    let accel = |x: f64| -params.potential_slope_x(surface, x, y, z) / m;
    let (duration, target) = match stop {
        Stop::Duration(d) => (d, None),
        Stop::ReachX {
            target,
            max_duration,
        } => (max_duration, Some(target)),
    };
    let n_steps = (duration / TRAJECTORY_DT).ceil().max(0.0) as usize;
    let mut times = Vec::with_capacity(n_steps.min(1 << 16) + 1);
    let mut xs = Vec::with_capacity(times.capacity());
    let mut vs = Vec::with_capacity(times.capacity());
    let (mut x, mut v) = (x_start, v_start);
    times.push(0.0);
    xs.push(x);
    vs.push(v);
    let h = TRAJECTORY_DT;
    let start_side = target.map(|t| x_start < t);
    let rk4 = |x: f64, v: f64, h: f64| {
        let k1x = v;
        let k1v = accel(x);
        let k2x = v + 0.5 * h * k1v;
        let k2v = accel(x + 0.5 * h * k1x);
        let k3x = v + 0.5 * h * k2v;
        let k3v = accel(x + 0.5 * h * k2x);
        let k4x = v + h * k3v;
        let k4v = accel(x + h * k3x);
        (
            x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
            v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
        )
    };
    for k in 1..=n_steps {
        let (xn, vn) = rk4(x, v, h);
        if let (Some(t), Some(below)) = (target, start_side) {
            if (xn < t) != below || xn == t {
                // Shorten the last step so it ends on the target; the force
                // is then never sampled past it (surfaces may kink there).
                let (mut lo, mut hi) = (0.0, h);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    let (xm, _) = rk4(x, v, mid);
                    if (xm < t) == below && xm != t {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let (xe, ve) = rk4(x, v, hi);
                times.push((k - 1) as f64 * h + hi);
                xs.push(xe);
                vs.push(ve);
                break;
            }
        }
        x = xn;
        v = vn;
        times.push(k as f64 * h);
        xs.push(x);
        vs.push(v);
    }
    Trajectory {
        surface,
        y,
        z,
        energy,
        times,
        x: xs,
        v: vs,
    }
}

/// Positions where the adiabatic gap equals the photon energy on a fixed
/// `(y, z)` slice.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Resonances {
    /// Ascending.
    pub left: Vec<f64>,
    /// Ascending.
    pub right: Vec<f64>,
}

/// Range searched by [`find_resonances`], Å.
pub const RESONANCE_SEARCH: (f64, f64) = (-4.0, 4.0);
const RESONANCE_SCAN_STEP: f64 = 1e-2;

pub fn find_resonances(params: &ModelParams, photon_energy: f64, y: f64, z: f64) -> Resonances {
    let mut out = Resonances::default();
    if !(photon_energy > 0.0) {
        return out;
    }
    let f = |x: f64| params.gap(x, y, z) - photon_energy;
    let (lo, hi) = RESONANCE_SEARCH;
    let n = ((hi - lo) / RESONANCE_SCAN_STEP).round() as usize;
    let mut a = lo;
    let mut fa = f(a);
    for i in 1..=n {
        let b = lo + i as f64 * RESONANCE_SCAN_STEP;
        let fb = f(b);
        let root = if fa == 0.0 {
            Some(a)
        } else if (fa < 0.0) != (fb < 0.0) {
            Some(bisect(&f, a, b, fa))
        } else {
            None
        };
        if let Some(r) = root {
            if r < 0.0 {
                out.left.push(r);
            } else {
                out.right.push(r);
            }
        }
        a = b;
        fa = fb;
    }
    out.left.dedup();
    out.right.dedup();
    out
}

fn bisect<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    while b - a > RESONANCE_TOL {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fa < 0.0) != (fm < 0.0) {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

/// Landau–Zener probability of staying diabatic through the intersection.
pub fn p_ci(params: &ModelParams, v_ci: f64, y: f64) -> f64 {
    let coupling = params.coupling(y);
    if coupling == 0.0 {
        return 1.0;
    }
    if !(v_ci > 0.0) {
        return 0.0;
    }
    let exponent = 2.0 * PI * coupling * coupling / (HBAR * v_ci * params.ci_slope_difference());
    (-exponent).exp()
}

/// Rabi frequency `μF/ħ` in fs⁻¹ for the field's peak amplitude.
pub fn rabi_frequency(params: &ModelParams, field: &FieldSpec) -> f64 {
    match field.kind {
        FieldKind::Off => 0.0,
        _ => params.mu * field.amplitude / HBAR,
    }
}

/// Adiabatic-passage probability for crossing a one-photon resonance at
/// speed `v` where the gap changes at `gap_slope` eV/Å.
pub fn p_laser(params: &ModelParams, field: &FieldSpec, v: f64, gap_slope: f64) -> Result<f64> {
    if gap_slope == 0.0 || !gap_slope.is_finite() {
        return Err(Error::Domain("degenerate resonance: zero gap slope".into()));
    }
    let rabi = rabi_frequency(params, field);
    if rabi == 0.0 {
        return Ok(0.0);
    }
    if !(v > 0.0) {
        return Ok(1.0);
    }
    let exponent = PI * rabi * rabi * HBAR / (2.0 * v * gap_slope.abs());
    Ok(-(-exponent).exp_m1())
}

/// `Ω̄/Ω` at the intersection with the detuning entering in quadrature.
pub fn validity_ratio(params: &ModelParams, field: &FieldSpec, photon_energy: f64) -> f64 {
    let rabi = rabi_frequency(params, field);
    if rabi == 0.0 {
        return 0.0;
    }
    let omega = photon_energy / HBAR;
    rabi / rabi.hypot(omega)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathwayResult {
    pub photon_energy: f64,
    pub p_l: f64,
    pub p_ci: f64,
    pub p_r: f64,
    pub p_e: f64,
    /// Monte-Carlo standard error of `p_e`; zero for a single trajectory.
    pub stderr: f64,
    pub validity_ratio: f64,
}

/// Settings shared by every trajectory of a pathway evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathwayConfig {
    /// Probe time; routes that have not completed by then do not count.
    pub horizon: f64,
}

impl Default for PathwayConfig {
    fn default() -> Self {
        Self { horizon: 30.0 }
    }
}

/// Pathway probabilities for one trajectory starting at rest at `sample`.
pub fn pathway_total(
    params: &ModelParams,
    field: &FieldSpec,
    photon_energy: f64,
    sample: SamplePoint,
    config: &PathwayConfig,
) -> Result<PathwayResult> {
    let (y, z) = (sample.y, 0.0);
    let e0 = params.potential(Surface::Upper, sample.x, y, z);
    let res = find_resonances(params, photon_energy, y, z);

    // Left resonance: the first one between the start and the intersection.
    let left = res.left.iter().copied().find(|&x| x >= sample.x && x < 0.0);
    let mut p_l = 0.0;
    let mut p_ci_left = 0.0;
    if let Some(x_l) = left {
        let upper = classical_trajectory(
            params,
            Surface::Upper,
            sample.x,
            0.0,
            y,
            z,
            Stop::ReachX {
                target: x_l,
                max_duration: config.horizon,
            },
        );
        if let Some(t_l) = upper.time_at(x_l) {
            let v_l = speed_on(params, Surface::Upper, e0, x_l, y, z).unwrap_or(0.0);
            p_l = p_laser(params, field, v_l, params.gap_slope_x(x_l, y, z))?;
            // after emission: lower surface, same position and speed
            let e_low = e0 - photon_energy;
            if let Ok(v_ci) = speed_on(params, Surface::Lower, e_low, 0.0, y, z) {
                let lower = classical_trajectory(
                    params,
                    Surface::Lower,
                    x_l,
                    v_l,
                    y,
                    z,
                    Stop::ReachX {
                        target: 0.0,
                        max_duration: (config.horizon - t_l).max(0.0),
                    },
                );
                if lower.time_at(0.0).is_some() {
                    p_ci_left = p_ci(params, v_ci, y);
                }
            }
        }
    }

    // Right resonance: diabatic passage keeps the packet on diabat 2, which
    // is the lower surface for x > 0.
    let mut p_r = 0.0;
    if let Some(&x_r) = res.right.first() {
        if let Ok(v_r) = speed_on(params, Surface::Lower, e0, x_r, y, z) {
            let passage = classical_trajectory(
                params,
                Surface::Diabat2,
                sample.x,
                0.0,
                y,
                z,
                Stop::ReachX {
                    target: x_r,
                    max_duration: config.horizon,
                },
            );
            if passage.time_at(x_r).is_some() {
                p_r = p_laser(params, field, v_r, params.gap_slope_x(x_r, y, z))?;
            }
        }
    }

    let p_e = p_l * p_ci_left + (1.0 - p_l) * p_r;
    Ok(PathwayResult {
        photon_energy,
        p_l,
        p_ci: p_ci_left,
        p_r,
        p_e,
        stderr: 0.0,
        validity_ratio: validity_ratio(params, field, photon_energy),
    })
}

/// Averages [`pathway_total`] over the given starting points.
pub fn ensemble_over(
    params: &ModelParams,
    field: &FieldSpec,
    photon_energy: f64,
    samples: &[SamplePoint],
    config: &PathwayConfig,
) -> Result<PathwayResult> {
    if samples.is_empty() {
        return Err(Error::Config(
            "semiclassical.samples must be at least 1".into(),
        ));
    }
    let results: Vec<PathwayResult> = samples
        .par_iter()
        .map(|s| pathway_total(params, field, photon_energy, *s, config))
        .collect::<Result<_>>()?;
    let n = results.len() as f64;
    let mean = |f: fn(&PathwayResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    let p_e = mean(|r| r.p_e);
    let stderr = if results.len() > 1 {
        let var = results.iter().map(|r| (r.p_e - p_e).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(PathwayResult {
        photon_energy,
        p_l: mean(|r| r.p_l),
        p_ci: mean(|r| r.p_ci),
        p_r: mean(|r| r.p_r),
        p_e,
        stderr,
        validity_ratio: validity_ratio(params, field, photon_energy),
    })
}

/// Starting points drawn from `|ψ₀|²` of the initial coherent state with `z = 0`.
pub fn sample_initial_points(params: &ModelParams, n: usize, seed: u64) -> Vec<SamplePoint> {
    let sigma = params.coherent_widths();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dx = Normal::new(params.x0, sigma[X]).expect("finite width");
    let dy = Normal::new(0.0, sigma[Y]).expect("finite width");
    (0..n)
        .map(|_| SamplePoint {
            x: dx.sample(&mut rng),
            y: dy.sample(&mut rng),
        })
        .collect()
}

/// Trajectory-averaged pathway probabilities with a seeded sample.
pub fn ensemble_average(
    params: &ModelParams,
    field: &FieldSpec,
    photon_energy: f64,
    n_samples: usize,
    seed: u64,
    config: &PathwayConfig,
) -> Result<PathwayResult> {
    let samples = sample_initial_points(params, n_samples, seed);
    ensemble_over(params, field, photon_energy, &samples, config)
}
