//! Split-operator time stepping in the diabatic picture with the dipole kick
//! applied in the adiabatic picture.
//!
//! One Lie step is
//!
//! ```text
//! ψ ← U_A · exp(−i D(t) Δt/ħ) · U_Aᵀ · exp(−i W Δt/ħ) · F⁻¹ · exp(−i T Δt/ħ) · F · ψ
//! ```
//!
//! The potential factor and the rotation pair share one per-point rotation:
//! `exp(−iWΔt/ħ) = U_A · diag(e^{−iV₋Δt/ħ}, e^{−iV₊Δt/ħ}) · U_Aᵀ`, so the step
//! rotates into the adiabatic basis once, applies the eigenphases and the kick
//! there, and rotates back.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::{dipole_coupling, AdiabaticFrame, FieldSpec, ModelParams};
use crate::lattice::{Lattice, WavepacketState};
use crate::observables::adiabatic_populations;
use crate::units::{mass_ev, HBAR};

/// Steps between non-finite checks during [`Propagator::run`].
pub const NAN_CHECK_STRIDE: usize = 50;

/// Operator splitting. `Lie` is the production scheme; `Strang` exists to
/// validate it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Splitting {
    #[default]
    Lie,
    Strang,
}

/// Time at which the field is sampled within a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FieldSampling {
    #[default]
    StepStart,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorConfig {
    /// Time step in fs.
    pub dt: f64,
    /// Final time in fs.
    pub t_end: f64,
    /// Steps between observer calls.
    pub observer_stride: usize,
    pub splitting: Splitting,
    pub field_sampling: FieldSampling,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            t_end: 30.0,
            observer_stride: 1,
            splitting: Splitting::Lie,
            field_sampling: FieldSampling::StepStart,
        }
    }
}

impl PropagatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config("propagation.dt_fs must be positive".into()));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(
                "propagation.t_end_fs must be non-negative".into(),
            ));
        }
        if self.observer_stride == 0 {
            return Err(Error::Config(
                "propagation.observer_stride must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Number of steps needed to go from `t_start` to `t_end`.
    pub fn steps_from(&self, t_start: f64) -> usize {
        ((self.t_end - t_start) / self.dt).round().max(0.0) as usize
    }
}

/// Per-point rotation and eigenphases of the potential factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointOperator {
    pub cos: f64,
    pub sin: f64,
    /// `exp(−iV₋Δt/ħ)`, `exp(−iV₊Δt/ħ)`.
    pub phases: [Complex64; 2],
}

impl PointOperator {
    pub fn new(frame: &AdiabaticFrame, dt: f64) -> Self {
        let (sin, cos) = frame.theta.sin_cos();
        Self {
            cos,
            sin,
            phases: [
                Complex64::from_polar(1.0, -frame.lower * dt / HBAR),
                Complex64::from_polar(1.0, -frame.upper * dt / HBAR),
            ],
        }
    }

    /// `exp(−iWΔt/ħ)` as a dense diabatic matrix.
    pub fn diabatic_step_matrix(&self) -> [[Complex64; 2]; 2] {
        // columns: lower = (s, −c), upper = (c, s)
        let (s, c) = (self.sin, self.cos);
        let [pl, pu] = self.phases;
        [
            [pl * s * s + pu * c * c, (pu - pl) * s * c],
            [(pu - pl) * s * c, pl * c * c + pu * s * s],
        ]
    }

    /// Diabatic amplitudes to (lower, upper) adiabatic amplitudes.
    #[inline]
    pub fn to_adiabatic(&self, d1: Complex64, d2: Complex64) -> (Complex64, Complex64) {
        (d1 * self.sin - d2 * self.cos, d1 * self.cos + d2 * self.sin)
    }

    #[inline]
    pub fn to_diabatic(&self, lower: Complex64, upper: Complex64) -> (Complex64, Complex64) {
        (
            lower * self.sin + upper * self.cos,
            upper * self.sin - lower * self.cos,
        )
    }
}

/// Time-independent factors of the propagator for one lattice and time step.
#[derive(Debug, Clone)]
pub struct PrecomputedOperators {
    /// Kinetic phase per momentum point, unit magnitude, for the kinetic
    /// sub-step length of the chosen splitting.
    pub kinetic: Vec<Complex64>,
    pub points: Vec<PointOperator>,
    pub dt: f64,
    pub splitting: Splitting,
}

impl PrecomputedOperators {
    /// Builds the operators for the model Hamiltonian.
    pub fn precompute(
        params: &ModelParams,
        lattice: &Lattice,
        config: &PropagatorConfig,
    ) -> Result<Self> {
        params.validate()?;
        let degenerate = (0..lattice.len()).into_par_iter().find_any(|&i| {
            let [x, y, z] = lattice.point(i);
            params.coupling(y) == 0.0 && params.w11(x, y, z) == params.w22(x, y, z)
        });
        if let Some(i) = degenerate {
            return Err(Error::Config(format!(
                "grid point {:?} sits on the intersection; shift the y mesh",
                lattice.point(i)
            )));
        }
        Self::with_potential(lattice, config, params.mass, |x, y, z| {
            params.adiabatic_frame(x, y, z)
        })
    }

    /// Builds the operators for an arbitrary per-point diagonalized potential.
    pub fn with_potential<F>(
        lattice: &Lattice,
        config: &PropagatorConfig,
        mass_amu: f64,
        frame: F,
    ) -> Result<Self>
    where
        F: Fn(f64, f64, f64) -> AdiabaticFrame + Sync,
    {
        config.validate()?;
        let m = mass_ev(mass_amu);
        let tau = match config.splitting {
            Splitting::Lie => config.dt,
            Splitting::Strang => 0.5 * config.dt,
        };
        let kinetic = (0..lattice.len())
            .into_par_iter()
            .map(|i| {
                let energy = HBAR * HBAR * lattice.k_squared(i) / (2.0 * m);
                Complex64::from_polar(1.0, -energy * tau / HBAR)
            })
            .collect();
        let points = (0..lattice.len())
            .into_par_iter()
            .map(|i| {
                let [x, y, z] = lattice.point(i);
                PointOperator::new(&frame(x, y, z), config.dt)
            })
            .collect();
        Ok(Self {
            kinetic,
            points,
            dt: config.dt,
            splitting: config.splitting,
        })
    }
}

/// Advances states for one model, field and lattice.
#[derive(Debug, Clone)]
pub struct Propagator<'a> {
    lattice: &'a Lattice,
    ops: Arc<PrecomputedOperators>,
    params: ModelParams,
    field: FieldSpec,
    config: PropagatorConfig,
}

impl<'a> Propagator<'a> {
    pub fn new(
        lattice: &'a Lattice,
        params: &ModelParams,
        field: &FieldSpec,
        config: &PropagatorConfig,
    ) -> Result<Self> {
        field.validate()?;
        let ops = PrecomputedOperators::precompute(params, lattice, config)?;
        Ok(Self::from_parts(lattice, ops, params, field, config))
    }

    /// Reuses operators built earlier for the same lattice, model and step.
    /// Clones of the propagator share one operator set.
    pub fn from_parts(
        lattice: &'a Lattice,
        ops: impl Into<Arc<PrecomputedOperators>>,
        params: &ModelParams,
        field: &FieldSpec,
        config: &PropagatorConfig,
    ) -> Self {
        Self {
            lattice,
            ops: ops.into(),
            params: *params,
            field: *field,
            config: *config,
        }
    }

    pub fn lattice(&self) -> &Lattice {
        self.lattice
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn field(&self) -> &FieldSpec {
        &self.field
    }

    pub fn config(&self) -> &PropagatorConfig {
        &self.config
    }

    pub fn operators(&self) -> &PrecomputedOperators {
        &self.ops
    }

    pub fn shared_operators(&self) -> Arc<PrecomputedOperators> {
        Arc::clone(&self.ops)
    }

    /// Swaps the field, keeping the precomputed operators.
    pub fn with_field(mut self, field: &FieldSpec) -> Self {
        self.field = *field;
        self
    }

    /// One time step; the caller checks for non-finite values.
    pub fn step(&self, state: &mut WavepacketState) {
        let dt = self.ops.dt;
        let t = state.t;
        let t_field = match self.config.field_sampling {
            FieldSampling::StepStart => t,
            FieldSampling::Midpoint => t + 0.5 * dt,
        };
        let alpha = dipole_coupling(&self.params, &self.field, t_field) * dt / HBAR;
        match self.ops.splitting {
            Splitting::Lie => {
                self.kinetic(state);
                self.potential_and_kick(state, alpha);
            }
            Splitting::Strang => {
                self.kinetic(state);
                self.potential_and_kick(state, alpha);
                self.kinetic(state);
            }
        }
        state.t = t + dt;
    }

    fn kinetic(&self, state: &mut WavepacketState) {
        let inv_n = 1.0 / self.lattice.len() as f64;
        for field in [&mut state.psi1, &mut state.psi2] {
            self.lattice.fft_forward_unscaled(field);
            field
                .par_chunks_mut(self.lattice.slab_len())
                .zip(self.ops.kinetic.par_chunks(self.lattice.slab_len()))
                .for_each(|(f, k)| {
                    for (a, b) in f.iter_mut().zip(k) {
                        *a *= b * inv_n;
                    }
                });
            self.lattice.fft_backward_unscaled(field);
        }
    }

    /// The state shifted by half a kinetic step, `e^{−iT dt/2}ψ`, for Lie
    /// splitting; a plain copy for Strang.
    ///
    /// Lie iterates shifted this way are exactly the Strang iterates, so
    /// diagnostics such as the energy should be read from the shifted state.
    pub fn synchronized(&self, state: &WavepacketState) -> WavepacketState {
        let mut out = state.clone();
        if self.ops.splitting == Splitting::Strang {
            return out;
        }
        let m = mass_ev(self.params.mass);
        let half = 0.5 * self.ops.dt / HBAR;
        let slab = self.lattice.slab_len();
        let inv_n = 1.0 / self.lattice.len() as f64;
        for field in [&mut out.psi1, &mut out.psi2] {
            self.lattice.fft_forward_unscaled(field);
            field.par_chunks_mut(slab).enumerate().for_each(|(c, f)| {
                for (j, a) in f.iter_mut().enumerate() {
                    let e = HBAR * HBAR * self.lattice.k_squared(c * slab + j) / (2.0 * m);
                    *a *= Complex64::from_polar(inv_n, -e * half);
                }
            });
            self.lattice.fft_backward_unscaled(field);
        }
        out
    }

    fn potential_and_kick(&self, state: &mut WavepacketState, alpha: f64) {
        let (sin_a, cos_a) = alpha.sin_cos();
        let kick = alpha != 0.0;
        let minus_i_sin = Complex64::new(0.0, -sin_a);
        let slab = self.lattice.slab_len();
        state
            .psi1
            .par_chunks_mut(slab)
            .zip(state.psi2.par_chunks_mut(slab))
            .zip(self.ops.points.par_chunks(slab))
            .for_each(|((p1, p2), ops)| {
                for ((a, b), op) in p1.iter_mut().zip(p2.iter_mut()).zip(ops) {
                    let (mut lo, mut up) = op.to_adiabatic(*a, *b);
                    lo *= op.phases[0];
                    up *= op.phases[1];
                    if kick {
                        let l = lo * cos_a + up * minus_i_sin;
                        let u = lo * minus_i_sin + up * cos_a;
                        lo = l;
                        up = u;
                    }
                    let (d1, d2) = op.to_diabatic(lo, up);
                    *a = d1;
                    *b = d2;
                }
            });
    }

    /// Steps from `state.t` to `config.t_end`, calling `observer` on the
    /// initial state, every `observer_stride` steps and on the final state.
    pub fn run<O>(&self, state: &mut WavepacketState, mut observer: O) -> Result<()>
    where
        O: FnMut(&WavepacketState),
    {
        state.check_shape(self.lattice)?;
        let t_start = state.t;
        let n_steps = self.config.steps_from(t_start);
        let stride = self.config.observer_stride;
        observer(state);
        for k in 1..=n_steps {
            self.step(state);
            state.t = t_start + k as f64 * self.ops.dt;
            if k % NAN_CHECK_STRIDE == 0 || k == n_steps {
                check_finite(state, k)?;
            }
            if k % stride == 0 || k == n_steps {
                observer(state);
            }
        }
        Ok(())
    }
}

fn check_finite(state: &WavepacketState, step: usize) -> Result<()> {
    match state.find_non_finite() {
        Some(i) => Err(Error::Numerical {
            step,
            what: format!("non-finite amplitude at flat index {i}"),
        }),
        None => Ok(()),
    }
}

/// Final-time observables of one run at one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceSample {
    pub dt: f64,
    pub p_ground: f64,
    pub p_excited: f64,
    pub norm: f64,
}

/// Self-convergence of the final populations under repeated halving of Δt.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub samples: Vec<ConvergenceSample>,
    /// Largest observable deviation between consecutive levels.
    pub deviations: Vec<f64>,
}

impl ConvergenceReport {
    /// Ratios of consecutive deviations; ≈ 2 for a first-order scheme.
    pub fn ratios(&self) -> Vec<f64> {
        self.deviations.windows(2).map(|w| w[0] / w[1]).collect()
    }
}

/// Runs the same scenario at `dt, dt/2, …` (`levels` runs in total).
pub fn convergence_check(
    lattice: &Lattice,
    params: &ModelParams,
    field: &FieldSpec,
    config: &PropagatorConfig,
    initial: &WavepacketState,
    levels: usize,
) -> Result<ConvergenceReport> {
    let mut samples = Vec::with_capacity(levels);
    let mut dt = config.dt;
    for _ in 0..levels {
        let cfg = PropagatorConfig {
            dt,
            observer_stride: usize::MAX,
            ..*config
        };
        let prop = Propagator::new(lattice, params, field, &cfg)?;
        let mut state = initial.clone();
        prop.run(&mut state, |_| {})?;
        let (p_ground, p_excited) = adiabatic_populations(lattice, params, &state);
        log::debug!("convergence level dt = {dt} fs: p_excited = {p_excited:.6e}");
        samples.push(ConvergenceSample {
            dt,
            p_ground,
            p_excited,
            norm: lattice.norm(&state),
        });
        dt *= 0.5;
    }
    let deviations = samples
        .windows(2)
        .map(|w| {
            (w[0].p_excited - w[1].p_excited)
                .abs()
                .max((w[0].p_ground - w[1].p_ground).abs())
        })
        .collect();
    Ok(ConvergenceReport {
        samples,
        deviations,
    })
}
