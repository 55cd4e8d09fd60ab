//! Wavepacket dynamics of a two-state linear vibronic coupling model driven
//! by a laser field near a conical intersection.
//!
//! * [`lattice`]: grid, field storage, Fourier transforms and reductions.
//! * [`hamiltonian`]: model potential, adiabatic rotation, control field and
//!   initial state.
//! * [`propagator`]: split-operator stepping and Δt convergence checks.
//! * [`observables`]: populations, `y` densities, asymmetries, delay maps.
//! * [`semiclassical`]: Landau–Zener pathway model with classical trajectories.

// Range checks are written `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod hamiltonian;
pub mod lattice;
pub mod observables;
pub mod propagator;
pub mod semiclassical;
pub mod units;

pub use error::{Error, Result};
pub use hamiltonian::{FieldKind, FieldSpec, ModelParams, Surface};
pub use lattice::{GridSpec, Lattice, WavepacketState};
pub use num_complex::Complex64;
pub use propagator::{Propagator, PropagatorConfig};
