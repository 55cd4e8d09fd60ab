//! Unit system: lengths in Å, energies in eV, times in fs, masses in amu,
//! field strengths in V/Å and dipoles in e·Å.

/// Reduced Planck constant in eV·fs.
pub const HBAR: f64 = 0.658_211_956_9;

/// One amu·Å²/fs² expressed in eV. Multiplying a mass in amu by this gives
/// the mass in eV·fs²/Å², so `p²/2m` comes out directly in eV.
pub const AMU_A2_PER_FS2_IN_EV: f64 = 103.642_697_5;

/// `ħ² / (1 amu · 1 Å²)` in eV.
pub const HBAR2_PER_AMU_A2: f64 = HBAR * HBAR / AMU_A2_PER_FS2_IN_EV;

/// 1 V/m in V/Å.
pub const V_PER_M_IN_V_PER_A: f64 = 1e-10;

/// Mass in amu converted to eV·fs²/Å².
#[inline]
pub fn mass_ev(mass_amu: f64) -> f64 {
    mass_amu * AMU_A2_PER_FS2_IN_EV
}
