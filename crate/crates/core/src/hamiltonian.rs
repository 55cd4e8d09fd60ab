//! Linear vibronic coupling model: diabatic potential matrix, its adiabatic
//! rotation, the control field and the initial coherent state.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, WavepacketState, X, Y, Z};
use crate::units::{mass_ev, HBAR, V_PER_M_IN_V_PER_A};

/// Largest tolerated fraction of the initial Gaussian's norm lying outside the grid.
pub const MAX_INITIAL_LOSS: f64 = 1e-6;

/// Model constants. Positions in Å, curvatures in eV/Å², energies in eV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Minimum of diabat 2 along `x`.
    pub x2: f64,
    /// Minimum of diabat 1 along `x`.
    pub x1: f64,
    /// Initial wavepacket centre.
    pub x0: f64,
    pub kappa_x1: f64,
    pub kappa_x2: f64,
    pub kappa_y1: f64,
    pub kappa_y2: f64,
    pub kappa_z1: f64,
    pub kappa_z2: f64,
    /// Linear coupling slope along `y`, eV/Å.
    pub lambda: f64,
    /// Energy offset subtracted from both diabats.
    pub e_offset: f64,
    /// Nuclear mass in amu.
    pub mass: f64,
    /// Transition dipole magnitude in e·Å.
    pub mu: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        let x2 = 0.944;
        let x1 = -1.118 * x2;
        let kappa_x2 = 0.25;
        let kappa_x1 = 0.8 * kappa_x2;
        let kappa_t = 0.4 * kappa_x2;
        Self {
            x2,
            x1,
            x0: -1.32 * x2,
            kappa_x1,
            kappa_x2,
            kappa_y1: kappa_t,
            kappa_y2: kappa_t,
            kappa_z1: kappa_t,
            kappa_z2: kappa_t,
            lambda: 0.0424 * kappa_x2 / x2,
            e_offset: kappa_x1 * x1 * x1,
            mass: 1.0,
            mu: 0.5,
        }
    }
}

/// Which electronic surface a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Diabat1,
    Diabat2,
    Lower,
    Upper,
}

/// Result of diagonalizing the diabatic matrix at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdiabaticFrame {
    /// Rotation angle, `½·atan2(2λy, W11 − W22)`.
    pub theta: f64,
    pub lower: f64,
    pub upper: f64,
}

impl AdiabaticFrame {
    /// Orthogonal matrix whose columns are the lower and upper eigenvectors
    /// in the diabatic basis: lower = (sin θ, −cos θ), upper = (cos θ, sin θ).
    pub fn rotation(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.theta.sin_cos();
        [[s, c], [-c, s]]
    }

    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let kappas = [
            ("kappa_x1", self.kappa_x1),
            ("kappa_x2", self.kappa_x2),
            ("kappa_y1", self.kappa_y1),
            ("kappa_y2", self.kappa_y2),
            ("kappa_z1", self.kappa_z1),
            ("kappa_z2", self.kappa_z2),
        ];
        for (name, k) in kappas {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::Config(format!("model.{name} must be positive")));
            }
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::Config("model.mass must be positive".into()));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::Config("model.mu must be non-negative".into()));
        }
        for (name, v) in [
            ("x0", self.x0),
            ("x1", self.x1),
            ("x2", self.x2),
            ("lambda", self.lambda),
            ("e_offset", self.e_offset),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("model.{name} must be finite")));
            }
        }
        Ok(())
    }

    pub fn w11(&self, x: f64, y: f64, z: f64) -> f64 {
        let dx = x - self.x1;
        self.kappa_x1 * dx * dx + self.kappa_y1 * y * y + self.kappa_z1 * z * z - self.e_offset
    }

    pub fn w22(&self, x: f64, y: f64, z: f64) -> f64 {
        let dx = x - self.x2;
        self.kappa_x2 * dx * dx + self.kappa_y2 * y * y + self.kappa_z2 * z * z - self.e_offset
    }

    pub fn coupling(&self, y: f64) -> f64 {
        self.lambda * y
    }

    /// `[[W11, λy], [λy, W22]]` in eV.
    pub fn diabatic_matrix(&self, x: f64, y: f64, z: f64) -> [[f64; 2]; 2] {
        let v = self.coupling(y);
        [[self.w11(x, y, z), v], [v, self.w22(x, y, z)]]
    }

    /// Rotation and eigenvalues without the degeneracy check; used on grids
    /// that already exclude the intersection.
    pub fn adiabatic_frame(&self, x: f64, y: f64, z: f64) -> AdiabaticFrame {
        let w11 = self.w11(x, y, z);
        let w22 = self.w22(x, y, z);
        let v = self.coupling(y);
        let mean = 0.5 * (w11 + w22);
        let half_gap = 0.5 * (w11 - w22).hypot(2.0 * v);
        AdiabaticFrame {
            theta: 0.5 * (2.0 * v).atan2(w11 - w22),
            lower: mean - half_gap,
            upper: mean + half_gap,
        }
    }

    /// Adiabatic rotation at a point; fails exactly on the degeneracy where
    /// the eigenvectors are undefined.
    pub fn adiabatic_transform(&self, x: f64, y: f64, z: f64) -> Result<AdiabaticFrame> {
        let v = self.coupling(y);
        let d = self.w11(x, y, z) - self.w22(x, y, z);
        if v == 0.0 && d == 0.0 {
            return Err(Error::Domain(format!(
                "adiabatic rotation undefined at the degeneracy ({x}, {y}, {z})"
            )));
        }
        Ok(self.adiabatic_frame(x, y, z))
    }

    /// `(V_lower, V_upper)` in eV.
    pub fn adiabatic_eigenvalues(&self, x: f64, y: f64, z: f64) -> (f64, f64) {
        let f = self.adiabatic_frame(x, y, z);
        (f.lower, f.upper)
    }

    pub fn potential(&self, surface: Surface, x: f64, y: f64, z: f64) -> f64 {
        match surface {
            Surface::Diabat1 => self.w11(x, y, z),
            Surface::Diabat2 => self.w22(x, y, z),
            Surface::Lower => self.adiabatic_frame(x, y, z).lower,
            Surface::Upper => self.adiabatic_frame(x, y, z).upper,
        }
    }

    /// `∂V/∂x` on a surface at fixed `y`, `z`.
    pub fn potential_slope_x(&self, surface: Surface, x: f64, y: f64, z: f64) -> f64 {
        let d1 = 2.0 * self.kappa_x1 * (x - self.x1);
        let d2 = 2.0 * self.kappa_x2 * (x - self.x2);
        match surface {
            Surface::Diabat1 => d1,
            Surface::Diabat2 => d2,
            Surface::Lower | Surface::Upper => {
                let diff = self.w11(x, y, z) - self.w22(x, y, z);
                let root = diff.hypot(2.0 * self.coupling(y));
                let mean = 0.5 * (d1 + d2);
                let half = if root > 0.0 {
                    0.5 * diff * (d1 - d2) / root
                } else {
                    0.5 * (d1 - d2).abs()
                };
                if surface == Surface::Lower {
                    mean - half
                } else {
                    mean + half
                }
            }
        }
    }

    /// Adiabatic gap `V_upper − V_lower`.
    pub fn gap(&self, x: f64, y: f64, z: f64) -> f64 {
        self.adiabatic_frame(x, y, z).gap()
    }

    /// `∂(gap)/∂x` at fixed `y`, `z`.
    pub fn gap_slope_x(&self, x: f64, y: f64, z: f64) -> f64 {
        self.potential_slope_x(Surface::Upper, x, y, z)
            - self.potential_slope_x(Surface::Lower, x, y, z)
    }

    /// `|∂(W11 − W22)/∂x|` at `x = 0`, the diabatic slope difference at the
    /// intersection.
    pub fn ci_slope_difference(&self) -> f64 {
        (2.0 * self.kappa_x2 * self.x2 - 2.0 * self.kappa_x1 * self.x1).abs()
    }

    /// Harmonic angular frequency (fs⁻¹) of a diabat along one axis.
    pub fn harmonic_frequency(&self, surface: Surface, axis: usize) -> f64 {
        let kappa = match (surface, axis) {
            (Surface::Diabat1, X) => self.kappa_x1,
            (Surface::Diabat1, Y) => self.kappa_y1,
            (Surface::Diabat1, _) => self.kappa_z1,
            (_, X) => self.kappa_x2,
            (_, Y) => self.kappa_y2,
            (_, _) => self.kappa_z2,
        };
        (2.0 * kappa / mass_ev(self.mass)).sqrt()
    }

    /// Position-space standard deviations of `|ψ|²` for the coherent state
    /// of diabat 2: `σ_q² = ħ/(2mω_q)`.
    pub fn coherent_widths(&self) -> [f64; 3] {
        let m = mass_ev(self.mass);
        [X, Y, Z].map(|axis| {
            let omega = self.harmonic_frequency(Surface::Diabat2, axis);
            (HBAR / (2.0 * m * omega)).sqrt()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FieldKind {
    #[default]
    Off,
    Continuous,
    Pulsed,
}

/// Control field. Amplitude in V/Å, photon energy in eV, times in fs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSpec {
    pub kind: FieldKind,
    pub amplitude: f64,
    pub photon_energy: f64,
    pub cep: f64,
    /// Full length of the sine-squared envelope.
    pub duration: f64,
    /// Envelope start time.
    pub delay: f64,
}

impl Default for FieldSpec {
    fn default() -> Self {
        Self::off()
    }
}

impl FieldSpec {
    pub fn off() -> Self {
        Self {
            kind: FieldKind::Off,
            amplitude: 0.0,
            photon_energy: 0.0,
            cep: 0.0,
            duration: 0.0,
            delay: 0.0,
        }
    }

    /// Field of 10⁹ V/m.
    pub const GIGAVOLT_PER_METRE: f64 = 1e9 * V_PER_M_IN_V_PER_A;

    pub fn continuous(amplitude: f64, photon_energy: f64) -> Self {
        Self {
            kind: FieldKind::Continuous,
            amplitude,
            photon_energy,
            ..Self::off()
        }
    }

    pub fn pulsed(amplitude: f64, photon_energy: f64, cep: f64, duration: f64, delay: f64) -> Self {
        Self {
            kind: FieldKind::Pulsed,
            amplitude,
            photon_energy,
            cep,
            duration,
            delay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::Config(
                "field.amplitude_V_per_A must be non-negative".into(),
            ));
        }
        if !(self.photon_energy >= 0.0 && self.photon_energy.is_finite()) {
            return Err(Error::Config(
                "field.photon_energy_eV must be non-negative".into(),
            ));
        }
        if !self.cep.is_finite() || !self.delay.is_finite() {
            return Err(Error::Config(
                "field.cep_rad and field.delay_fs must be finite".into(),
            ));
        }
        if self.kind == FieldKind::Pulsed && !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Config(
                "field.duration_fs must be positive for a pulse".into(),
            ));
        }
        Ok(())
    }

    /// Carrier angular frequency in fs⁻¹.
    pub fn omega(&self) -> f64 {
        self.photon_energy / HBAR
    }

    /// Instantaneous field in V/Å.
    pub fn amplitude_at(&self, t: f64) -> f64 {
        match self.kind {
            FieldKind::Off => 0.0,
            FieldKind::Continuous => self.amplitude * (self.omega() * t + self.cep).cos(),
            FieldKind::Pulsed => {
                let s = t - self.delay;
                if s < 0.0 || s > self.duration {
                    return 0.0;
                }
                let env = (PI * s / self.duration).sin();
                self.amplitude * env * env * (self.omega() * s + self.cep).cos()
            }
        }
    }

    /// Whether the field can be non-zero anywhere in `[t0, t1]`.
    pub fn active_within(&self, t0: f64, t1: f64) -> bool {
        match self.kind {
            FieldKind::Off => false,
            FieldKind::Continuous => self.amplitude > 0.0,
            FieldKind::Pulsed => {
                self.amplitude > 0.0 && t1 >= self.delay && t0 <= self.delay + self.duration
            }
        }
    }
}

/// Adiabatic-picture dipole matrix `[[0, μF(t)], [μF(t), 0]]` in eV.
pub fn dipole_matrix(params: &ModelParams, field: &FieldSpec, t: f64) -> [[f64; 2]; 2] {
    let d = dipole_coupling(params, field, t);
    [[0.0, d], [d, 0.0]]
}

/// Off-diagonal dipole element `μF(t)` in eV.
pub fn dipole_coupling(params: &ModelParams, field: &FieldSpec, t: f64) -> f64 {
    params.mu * field.amplitude_at(t)
}

/// Displaced ground state of diabat 2's parabola, entirely on diabat 2,
/// normalized on the lattice.
pub fn initial_coherent_state(params: &ModelParams, lattice: &Lattice) -> Result<WavepacketState> {
    params.validate()?;
    let sigma = params.coherent_widths();
    let centre = [params.x0, 0.0, 0.0];

    // The analytic norm on an infinite line is 1 for this prefactor; the
    // lattice sum tells how much of the packet the box misses.
    let prefactor = sigma
        .iter()
        .map(|s| (2.0 * PI * s * s).powf(-0.25))
        .product::<f64>();
    let profile = [X, Y, Z].map(|axis| {
        lattice
            .positions(axis)
            .iter()
            .map(|&q| {
                let d = q - centre[axis];
                (-d * d / (4.0 * sigma[axis] * sigma[axis])).exp()
            })
            .collect::<Vec<f64>>()
    });

    let mut state = WavepacketState::zeros(lattice);
    let slab = lattice.slab_len();
    let nz = lattice.shape()[Z];
    state
        .psi2
        .par_chunks_mut(slab)
        .enumerate()
        .for_each(|(ix, chunk)| {
            for (j, c) in chunk.iter_mut().enumerate() {
                let (iy, iz) = (j / nz, j % nz);
                *c = Complex64::new(
                    prefactor * profile[X][ix] * profile[Y][iy] * profile[Z][iz],
                    0.0,
                );
            }
        });

    let captured = lattice.norm(&state);
    if !(captured.is_finite() && captured > 0.0) || 1.0 - captured > MAX_INITIAL_LOSS {
        return Err(Error::Config(format!(
            "grid misses {:.3e} of the initial wavepacket norm (limit {MAX_INITIAL_LOSS:e})",
            1.0 - captured
        )));
    }
    state.scale(1.0 / captured.sqrt());
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::GridSpec;

    #[test]
    fn table_defaults() {
        let p = ModelParams::default();
        assert!((p.x1 + 1.055_392).abs() < 1e-6);
        assert!((p.x0 + 1.246_08).abs() < 1e-5);
        assert!((p.kappa_x1 - 0.2).abs() < 1e-15);
        assert!((p.kappa_y1 - 0.1).abs() < 1e-15);
        assert!((p.lambda - 0.011_228_8).abs() < 1e-6);
        assert!((p.e_offset - 0.222_770).abs() < 1e-5);
    }

    #[test]
    fn intersection_sits_at_origin() {
        let p = ModelParams::default();
        let w = p.diabatic_matrix(0.0, 0.0, 0.0);
        assert!(w[0][0].abs() < 1e-3 && w[1][1].abs() < 1e-3);
        assert_eq!(w[0][1], 0.0);
        // κ_{x,1}·x1² and κ_{x,2}·x2² both ≈ 0.2228 eV
        assert!((p.kappa_x1 * p.x1 * p.x1 - 0.2228).abs() < 1e-4);
        assert!((p.kappa_x2 * p.x2 * p.x2 - 0.2228).abs() < 1e-4);
    }

    #[test]
    fn energies_at_start() {
        let p = ModelParams::default();
        let w = p.diabatic_matrix(p.x0, 0.0, 0.0);
        assert!((w[1][1] - 0.977).abs() < 1e-3, "W22 = {}", w[1][1]);
        assert!((w[0][0] + 0.216).abs() < 1e-3, "W11 = {}", w[0][0]);
        assert!((w[1][1] - w[0][0] - 1.19).abs() < 5e-3);
    }

    #[test]
    fn coupling_is_odd_in_y() {
        let p = ModelParams::default();
        let a = p.diabatic_matrix(0.3, 0.2, -0.1);
        let b = p.diabatic_matrix(0.3, -0.2, -0.1);
        assert_eq!(a[0][0], b[0][0]);
        assert_eq!(a[1][1], b[1][1]);
        assert_eq!(a[0][1], -b[0][1]);
    }

    #[test]
    fn pure_diabatic_labels_on_axis() {
        let p = ModelParams::default();
        let f = p.adiabatic_transform(-0.5, 0.0, 0.0).unwrap();
        assert!((f.theta.abs() - PI / 2.0).abs() < 1e-15);
        let w = p.diabatic_matrix(-0.5, 0.0, 0.0);
        assert!((f.gap() - (w[1][1] - w[0][0])).abs() < 1e-14);
        let f = p.adiabatic_transform(0.5, 0.0, 0.0).unwrap();
        assert_eq!(f.theta, 0.0);
    }

    #[test]
    fn equal_diagonal_gives_quarter_turn() {
        let mut p = ModelParams::default();
        p.x1 = -p.x2;
        p.kappa_x1 = p.kappa_x2;
        let y = 0.3;
        let f = p.adiabatic_transform(0.0, y, 0.0).unwrap();
        assert!((f.theta.abs() - PI / 4.0).abs() < 1e-14);
        assert!((f.gap() - 2.0 * p.lambda * y).abs() < 1e-15);
    }

    #[test]
    fn degeneracy_is_a_domain_error() {
        let mut p = ModelParams::default();
        p.e_offset = 0.0;
        p.x1 = -p.x2;
        p.kappa_x1 = p.kappa_x2;
        assert!(matches!(
            p.adiabatic_transform(0.0, 0.0, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn gap_on_seam_axis() {
        let p = ModelParams::default();
        for y in [1e-3, 0.05, -0.4, 1.2] {
            let gap = p.gap(0.0, y, 0.0);
            // W11(0)-W22(0) ≈ -7e-6 eV contributes in quadrature only
            let w = p.diabatic_matrix(0.0, y, 0.0);
            let exact = (w[0][0] - w[1][1]).hypot(2.0 * p.lambda * y);
            assert!((gap - exact).abs() < 1e-15);
        }
        let mut sym = p;
        sym.x1 = -sym.x2;
        sym.kappa_x1 = sym.kappa_x2;
        sym.e_offset = sym.kappa_x2 * sym.x2 * sym.x2;
        for y in [1e-3, 0.05, -0.4] {
            assert!((sym.gap(0.0, y, 0.0) - 2.0 * sym.lambda * y.abs()).abs() < 1e-15);
        }
    }

    #[test]
    fn slopes_match_finite_differences() {
        let p = ModelParams::default();
        let h = 1e-6;
        for &(x, y) in &[(-0.7, 0.1), (0.4, -0.2), (1.3, 0.05), (-1.1, 0.3)] {
            for s in [
                Surface::Diabat1,
                Surface::Diabat2,
                Surface::Lower,
                Surface::Upper,
            ] {
                let fd =
                    (p.potential(s, x + h, y, 0.0) - p.potential(s, x - h, y, 0.0)) / (2.0 * h);
                assert!(
                    (fd - p.potential_slope_x(s, x, y, 0.0)).abs() < 1e-7,
                    "{s:?} at {x}"
                );
            }
        }
    }

    #[test]
    fn ci_slope_difference_value() {
        let p = ModelParams::default();
        assert!((p.ci_slope_difference() - 0.894).abs() < 1e-3);
    }

    #[test]
    fn dipole_examples() {
        let p = ModelParams {
            mu: 1.0,
            ..ModelParams::default()
        };
        let off = FieldSpec::off();
        assert_eq!(dipole_matrix(&p, &off, 3.0), [[0.0; 2]; 2]);
        let cw = FieldSpec::continuous(0.1, 0.5);
        let d = dipole_matrix(&p, &cw, 0.0);
        assert!((d[0][1] - 0.1).abs() < 1e-15 && d[0][0] == 0.0 && d[1][1] == 0.0);
        let pulse = FieldSpec::pulsed(0.1, 1.0, 0.0, 6.0, 24.0);
        assert_eq!(dipole_matrix(&p, &pulse, 23.9), [[0.0; 2]; 2]);
        assert_eq!(dipole_matrix(&p, &pulse, 30.1), [[0.0; 2]; 2]);
        assert!(dipole_coupling(&p, &pulse, 27.0).abs() > 0.0);
    }

    #[test]
    fn static_field_is_constant() {
        let f = FieldSpec::continuous(0.1, 0.0);
        for t in [0.0, 7.3, 29.9] {
            assert_eq!(f.amplitude_at(t), 0.1);
        }
    }

    #[test]
    fn gigavolt_per_metre() {
        assert!((FieldSpec::GIGAVOLT_PER_METRE - 0.1).abs() < 1e-16);
    }

    #[test]
    fn coherent_width_default() {
        let p = ModelParams::default();
        let omega = p.harmonic_frequency(Surface::Diabat2, X);
        assert!((omega - 0.0695).abs() < 1e-4, "omega = {omega}");
        let sigma = p.coherent_widths();
        assert!((sigma[X] - 0.214).abs() < 1e-3, "sigma_x = {}", sigma[X]);
    }

    #[test]
    fn initial_state_norm_and_centre() {
        let p = ModelParams::default();
        let l = Lattice::new(GridSpec {
            n: [64, 32, 16],
            ..GridSpec::ci_tier()
        })
        .unwrap();
        let s = initial_coherent_state(&p, &l).unwrap();
        assert!((l.norm(&s) - 1.0).abs() < 1e-12);
        let (n1, n2) = l.component_norms(&s);
        assert_eq!(n1, 0.0);
        assert!((n2 - 1.0).abs() < 1e-12);
        let mean = l.mean_position(&s);
        assert!((mean[X] - p.x0).abs() < l.spacing(X));
        assert!(mean[Y].abs() < l.spacing(Y));
        assert!(mean[Z].abs() < l.spacing(Z));
        assert_eq!(s.t, 0.0);
    }

    #[test]
    fn initial_state_clipped_by_box() {
        let p = ModelParams::default();
        let l = Lattice::new(GridSpec {
            n: [32, 16, 8],
            lo: [-1.0, -1.5, -1.5],
            hi: [2.0, 1.5, 1.5],
            offset_y: true,
        })
        .unwrap();
        assert!(matches!(
            initial_coherent_state(&p, &l),
            Err(Error::Config(_))
        ));
    }
}
