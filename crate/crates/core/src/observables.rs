//! Quantities extracted from states: adiabatic populations, the excited-state
//! `y` density, energies, asymmetries and delay-scan maps.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::ModelParams;
use crate::lattice::{Lattice, WavepacketState, Y};
use crate::units::{mass_ev, HBAR};

mod oscillation;
pub use oscillation::{ChirpedFit, FitBounds, OscillationSummary};

/// Adiabatic populations sampled during a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopulationTrace {
    pub times: Vec<f64>,
    pub p_ground: Vec<f64>,
    pub p_excited: Vec<f64>,
}

impl PopulationTrace {
    pub fn push(&mut self, t: f64, (ground, excited): (f64, f64)) {
        self.times.push(t);
        self.p_ground.push(ground);
        self.p_excited.push(excited);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Excited population at the snapshot nearest `t_probe`.
    pub fn excited_yield_at(&self, t_probe: f64) -> Result<f64> {
        let last = *self
            .times
            .last()
            .ok_or_else(|| Error::Range("empty population trace".into()))?;
        if t_probe > last + 1e-9 {
            return Err(Error::Range(format!(
                "probe time {t_probe} fs lies beyond the run end {last} fs"
            )));
        }
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t_probe).abs().total_cmp(&(b.1 - t_probe).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        Ok(self.p_excited[i])
    }

    /// Largest `|Δp_excited|` against another trace on the same time mesh.
    pub fn max_deviation(&self, other: &PopulationTrace) -> f64 {
        self.p_excited
            .iter()
            .zip(&other.p_excited)
            .chain(self.p_ground.iter().zip(&other.p_ground))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-point adiabatic amplitudes `(lower, upper)`.
fn adiabatic_amplitudes(
    params: &ModelParams,
    point: [f64; 3],
    d1: Complex64,
    d2: Complex64,
) -> (Complex64, Complex64) {
    let [x, y, z] = point;
    let (s, c) = params.adiabatic_frame(x, y, z).theta.sin_cos();
    (d1 * s - d2 * c, d1 * c + d2 * s)
}

/// `(p_ground, p_excited)`: norms of the lower and upper adiabatic components.
pub fn adiabatic_populations(
    lattice: &Lattice,
    params: &ModelParams,
    state: &WavepacketState,
) -> (f64, f64) {
    let slab = lattice.slab_len();
    let partials: Vec<(f64, f64)> = state
        .psi1
        .par_chunks(slab)
        .zip(state.psi2.par_chunks(slab))
        .enumerate()
        .map(|(ix, (p1, p2))| {
            let base = ix * slab;
            let mut acc = (0.0, 0.0);
            for (j, (a, b)) in p1.iter().zip(p2).enumerate() {
                let (lo, up) = adiabatic_amplitudes(params, lattice.point(base + j), *a, *b);
                acc.0 += lo.norm_sqr();
                acc.1 += up.norm_sqr();
            }
            acc
        })
        .collect();
    let (g, e) = partials
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    (g * lattice.dv(), e * lattice.dv())
}

/// Upper adiabatic component of a state as a field on the lattice.
pub fn excited_component(
    lattice: &Lattice,
    params: &ModelParams,
    state: &WavepacketState,
) -> Vec<Complex64> {
    (0..lattice.len())
        .into_par_iter()
        .map(|i| adiabatic_amplitudes(params, lattice.point(i), state.psi1[i], state.psi2[i]).1)
        .collect()
}

/// `ρ(y)` of the upper adiabatic component.
pub fn excited_y_marginal(
    lattice: &Lattice,
    params: &ModelParams,
    state: &WavepacketState,
) -> Vec<f64> {
    lattice.y_marginal(&excited_component(lattice, params, state))
}

/// `⟨T⟩ + ⟨W⟩` in eV, without the field.
pub fn energy(lattice: &Lattice, params: &ModelParams, state: &WavepacketState) -> (f64, f64) {
    let m = mass_ev(params.mass);
    let mut kinetic = 0.0;
    for field in [&state.psi1, &state.psi2] {
        let mut k = field.clone();
        lattice.fft_forward(&mut k).expect("state matches lattice");
        let partials: Vec<f64> = k
            .par_chunks(lattice.slab_len())
            .enumerate()
            .map(|(ix, chunk)| {
                let base = ix * lattice.slab_len();
                chunk
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c.norm_sqr() * lattice.k_squared(base + j))
                    .sum::<f64>()
            })
            .collect();
        kinetic += partials.iter().sum::<f64>() * HBAR * HBAR / (2.0 * m);
    }
    let slab = lattice.slab_len();
    let partials: Vec<f64> = (0..lattice.shape()[0])
        .into_par_iter()
        .map(|ix| {
            (ix * slab..(ix + 1) * slab)
                .map(|i| {
                    let [x, y, z] = lattice.point(i);
                    let (a, b) = (state.psi1[i], state.psi2[i]);
                    params.w11(x, y, z) * a.norm_sqr()
                        + params.w22(x, y, z) * b.norm_sqr()
                        + 2.0 * params.coupling(y) * (a.conj() * b).re
                })
                .sum::<f64>()
        })
        .collect();
    let potential = partials.iter().sum::<f64>() * lattice.dv();
    (kinetic * lattice.dv(), potential)
}

/// `∫_{y>0}ρ dy − ∫_{y<0}ρ dy` on the lattice's `y` mesh.
pub fn asymmetry(lattice: &Lattice, rho: &[f64]) -> f64 {
    let dy = lattice.spacing(Y);
    lattice
        .positions(Y)
        .iter()
        .zip(rho)
        .map(|(&y, &r)| {
            if y > 0.0 {
                r
            } else if y < 0.0 {
                -r
            } else {
                0.0
            }
        })
        .sum::<f64>()
        * dy
}

/// A `y` density with its asymmetry and lineouts.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymmetryRecord {
    pub rho_y: Vec<f64>,
    pub asymmetry: f64,
    /// Integral of `ρ` over `y`.
    pub total: f64,
    /// `(requested y, ρ at the nearest mesh point)`.
    pub lineouts: Vec<(f64, f64)>,
}

impl AsymmetryRecord {
    pub fn new(lattice: &Lattice, rho_y: Vec<f64>, lineout_ys: &[f64]) -> Self {
        let asymmetry = asymmetry(lattice, &rho_y);
        let total = rho_y.iter().sum::<f64>() * lattice.spacing(Y);
        let lineouts = lineout_ys
            .iter()
            .map(|&y| (y, rho_y[lattice.nearest_y(y)]))
            .collect();
        Self {
            rho_y,
            asymmetry,
            total,
            lineouts,
        }
    }
}

/// Delay-resolved densities with one row subtracted from all rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceMap {
    pub delays: Vec<f64>,
    pub reference_delay: f64,
    /// `rows[i][j] = ρ(y_j; delays[i]) − ρ(y_j; reference)`.
    pub rows: Vec<Vec<f64>>,
}

impl DifferenceMap {
    /// Series over delay at the mesh point nearest `y`.
    pub fn lineout(&self, lattice: &Lattice, y: f64) -> Vec<f64> {
        let j = lattice.nearest_y(y);
        self.rows.iter().map(|row| row[j]).collect()
    }
}

/// Tolerance for matching the reference delay against recorded delays.
const DELAY_MATCH: f64 = 1e-9;

pub fn delay_scan_difference(
    records: &[(f64, Vec<f64>)],
    reference_delay: f64,
) -> Result<DifferenceMap> {
    let reference = records
        .iter()
        .find(|(d, _)| (d - reference_delay).abs() < DELAY_MATCH)
        .map(|(_, rho)| rho)
        .ok_or_else(|| {
            Error::Config(format!(
                "reference delay {reference_delay} fs is not among the scanned delays"
            ))
        })?;
    let rows = records
        .iter()
        .map(|(_, rho)| rho.iter().zip(reference).map(|(a, b)| a - b).collect())
        .collect();
    Ok(DifferenceMap {
        delays: records.iter().map(|(d, _)| *d).collect(),
        reference_delay,
        rows,
    })
}

/// Linearly interpolated sign changes; exact zeros count once.
pub fn zero_crossings(t: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for (&ti, &vi) in t.iter().zip(v) {
        if vi == 0.0 {
            continue;
        }
        if let Some((tp, vp)) = prev {
            if (vp < 0.0) != (vi < 0.0) {
                out.push(tp + (ti - tp) * vp / (vp - vi));
            }
        }
        prev = Some((ti, vi));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::initial_coherent_state;
    use crate::lattice::GridSpec;

    fn lattice() -> Lattice {
        Lattice::new(GridSpec {
            n: [64, 32, 8],
            ..GridSpec::ci_tier()
        })
        .unwrap()
    }

    #[test]
    fn initial_state_is_excited() {
        let l = lattice();
        let p = ModelParams::default();
        let s = initial_coherent_state(&p, &l).unwrap();
        let (g, e) = adiabatic_populations(&l, &p, &s);
        assert!((e - 1.0).abs() < 0.02, "p_excited = {e}");
        assert!((g + e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lower_branch_state() {
        let l = lattice();
        let p = ModelParams::default();
        let mut s = initial_coherent_state(&p, &l).unwrap();
        // put every point's amplitude on the lower eigenvector
        for i in 0..l.len() {
            let [x, y, z] = l.point(i);
            let (sn, c) = p.adiabatic_frame(x, y, z).theta.sin_cos();
            let amp = s.psi2[i];
            s.psi1[i] = amp * sn;
            s.psi2[i] = -amp * c;
        }
        let (g, e) = adiabatic_populations(&l, &p, &s);
        assert!((g - l.norm(&s)).abs() < 1e-12);
        assert!(e < 1e-24);
    }

    #[test]
    fn populations_sum_to_norm() {
        let l = lattice();
        let p = ModelParams::default();
        let mut s = WavepacketState::zeros(&l);
        for i in 0..l.len() {
            let a = (i as f64 * 0.37).sin();
            s.psi1[i] = Complex64::new(a, (i as f64 * 0.11).cos());
            s.psi2[i] = Complex64::new((i as f64 * 0.05).cos(), -a);
        }
        let (g, e) = adiabatic_populations(&l, &p, &s);
        let n = l.norm(&s);
        assert!((g + e - n).abs() < 1e-12 * n);
    }

    #[test]
    fn trace_probe() {
        let mut tr = PopulationTrace::default();
        for k in 0..=300 {
            let t = k as f64 * 0.1;
            tr.push(t, (t / 30.0, 1.0 - t / 30.0));
        }
        assert!((tr.excited_yield_at(30.0).unwrap()).abs() < 1e-12);
        assert!((tr.excited_yield_at(15.0).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(tr.excited_yield_at(31.0), Err(Error::Range(_))));
    }

    #[test]
    fn reference_minus_itself() {
        let rec = vec![(24.0, vec![1.0, 2.0]), (41.0, vec![0.5, 0.25])];
        let map = delay_scan_difference(&rec, 41.0).unwrap();
        assert_eq!(map.rows[1], vec![0.0, 0.0]);
        assert_eq!(map.rows[0], vec![0.5, 1.75]);
        assert!(matches!(
            delay_scan_difference(&rec, 30.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn asymmetry_bounded_by_total() {
        let l = lattice();
        let rho: Vec<f64> = l
            .positions(Y)
            .iter()
            .map(|y| (-(y - 0.3) * (y - 0.3)).exp())
            .collect();
        let rec = AsymmetryRecord::new(&l, rho, &[0.18, -0.18]);
        assert!(rec.asymmetry > 0.0 && rec.asymmetry <= rec.total);
        assert_eq!(rec.lineouts.len(), 2);
    }

    #[test]
    fn zero_crossings_linear_interp() {
        let c = zero_crossings(&[0.0, 1.0, 2.0, 3.0], &[1.0, -1.0, -1.0, 3.0]);
        assert_eq!(c, vec![0.5, 2.25]);
    }
}
