//! Three-dimensional Cartesian grid, two-component field storage and the
//! position/momentum Fourier contract.
//!
//! Fields are stored flat in row-major order with `z` fastest:
//! `index = (ix * n_y + iy) * n_z + iz`. All reductions sum per `x` slab and
//! then combine the slab partials in slab order, so results do not depend on
//! how many worker threads rayon uses.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Axis labels, used to index per-axis arrays.
pub const X: usize = 0;
pub const Y: usize = 1;
pub const Z: usize = 2;

/// Lines gathered per batch when transforming along a strided axis.
const LINE_BATCH: usize = 32;

/// Width (in cells) of the boundary layer watched by [`Lattice::boundary_fraction`].
pub const BOUNDARY_CELLS: usize = 3;

/// Boundary-layer probability above which a run is reported as leaking.
pub const BOUNDARY_WARN_FRACTION: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub n: [usize; 3],
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    /// Shift the `y` mesh by half a cell so that `y = 0` is never a grid point.
    pub offset_y: bool,
}

impl GridSpec {
    /// The reduced grid used for routine runs and tests.
    ///
    /// The `z` motion is a common harmonic mode on both surfaces, so a coarse
    /// `z` axis still resolves its ground state.
    pub fn ci_tier() -> Self {
        Self {
            n: [128, 64, 16],
            lo: [-2.6, -1.5, -2.0],
            hi: [4.2, 1.5, 2.0],
            offset_y: true,
        }
    }

    /// Fine grid with the same `y`/`z` box at 128 points per axis.
    pub fn paper_tier() -> Self {
        Self {
            n: [256, 128, 128],
            ..Self::ci_tier()
        }
    }

    pub fn total_points(&self) -> usize {
        self.n.iter().product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.n[axis] as f64
    }

    pub fn validate(&self) -> Result<()> {
        for (axis, name) in ["x", "y", "z"].iter().enumerate() {
            if self.n[axis] == 0 {
                return Err(Error::Config(format!("grid.n_{name} must be positive")));
            }
            if !(self.lo[axis].is_finite() && self.hi[axis].is_finite()) {
                return Err(Error::Config(format!(
                    "grid.{name}_min and grid.{name}_max must be finite"
                )));
            }
            if self.hi[axis] <= self.lo[axis] {
                return Err(Error::Config(format!(
                    "grid.{name}_max ({}) must exceed grid.{name}_min ({})",
                    self.hi[axis], self.lo[axis]
                )));
            }
        }
        Ok(())
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::ci_tier()
    }
}

/// In-place 3D FFT built from 1D plans along each axis.
#[derive(Clone)]
struct Fft3 {
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    fn new(n: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = n.map(|len| planner.plan_fft_forward(len));
        let inverse = n.map(|len| planner.plan_fft_inverse(len));
        Self { forward, inverse }
    }

    fn apply(&self, n: [usize; 3], data: &mut [Complex64], inverse: bool) {
        let plans = if inverse {
            &self.inverse
        } else {
            &self.forward
        };
        let [nx, ny, nz] = n;

        // z: contiguous lines
        if nz > 1 {
            let plan = &plans[Z];
            data.par_chunks_mut(ny * nz).for_each(|slab| {
                let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
                plan.process_with_scratch(slab, &mut scratch);
            });
        }
        // y: stride nz within each x slab
        if ny > 1 {
            let plan = &plans[Y];
            data.par_chunks_mut(ny * nz).for_each(|slab| {
                transform_strided(slab, ny, nz, nz, plan.as_ref());
            });
        }
        // x: stride ny * nz across the whole array
        if nx > 1 {
            transform_strided(data, nx, ny * nz, ny * nz, plans[X].as_ref());
        }
    }
}

/// Transforms `lines` interleaved lines of length `len`, where element `i` of
/// line `m` sits at `i * stride + m`.
fn transform_strided(
    data: &mut [Complex64],
    len: usize,
    stride: usize,
    lines: usize,
    plan: &dyn Fft<f64>,
) {
    let batch = LINE_BATCH.min(lines);
    let mut buf = vec![Complex64::default(); batch * len];
    let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
    let mut m0 = 0;
    while m0 < lines {
        let width = batch.min(lines - m0);
        let buf = &mut buf[..width * len];
        for i in 0..len {
            let row = &data[i * stride + m0..i * stride + m0 + width];
            for (b, v) in row.iter().enumerate() {
                buf[b * len + i] = *v;
            }
        }
        plan.process_with_scratch(buf, &mut scratch);
        for i in 0..len {
            let row = &mut data[i * stride + m0..i * stride + m0 + width];
            for (b, v) in row.iter_mut().enumerate() {
                *v = buf[b * len + i];
            }
        }
        m0 += width;
    }
}

/// Position and momentum meshes for one [`GridSpec`]. Immutable once built.
#[derive(Clone)]
pub struct Lattice {
    spec: GridSpec,
    spacing: [f64; 3],
    positions: [Vec<f64>; 3],
    momenta: [Vec<f64>; 3],
    dv: f64,
    fft: Fft3,
}

impl fmt::Debug for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Lattice")
            .field("spec", &self.spec)
            .field("spacing", &self.spacing)
            .field("dv", &self.dv)
            .finish()
    }
}

impl Lattice {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let spacing = [0, 1, 2].map(|axis| spec.spacing(axis));
        let positions = [0, 1, 2].map(|axis| {
            let shift = if axis == Y && spec.offset_y { 0.5 } else { 0.0 };
            (0..spec.n[axis])
                .map(|i| spec.lo[axis] + (i as f64 + shift) * spacing[axis])
                .collect::<Vec<_>>()
        });
        let momenta = [0, 1, 2].map(|axis| fft_frequencies(spec.n[axis], spacing[axis]));
        let dv = spacing.iter().product();
        let fft = Fft3::new(spec.n);
        Ok(Self {
            spec,
            spacing,
            positions,
            momenta,
            dv,
            fft,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn shape(&self) -> [usize; 3] {
        self.spec.n
    }

    pub fn len(&self) -> usize {
        self.spec.total_points()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    /// Volume element `dx·dy·dz`.
    pub fn dv(&self) -> f64 {
        self.dv
    }

    pub fn positions(&self, axis: usize) -> &[f64] {
        &self.positions[axis]
    }

    /// Angular wavenumbers in FFT order, Å⁻¹.
    pub fn momenta(&self, axis: usize) -> &[f64] {
        &self.momenta[axis]
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.spec.n[Y] + iy) * self.spec.n[Z] + iz
    }

    #[inline]
    pub fn unravel(&self, index: usize) -> [usize; 3] {
        let nz = self.spec.n[Z];
        let ny = self.spec.n[Y];
        [index / (ny * nz), (index / nz) % ny, index % nz]
    }

    /// Points per `x` slab; the unit of parallel work.
    pub fn slab_len(&self) -> usize {
        self.spec.n[Y] * self.spec.n[Z]
    }

    pub fn point(&self, index: usize) -> [f64; 3] {
        let [ix, iy, iz] = self.unravel(index);
        [
            self.positions[X][ix],
            self.positions[Y][iy],
            self.positions[Z][iz],
        ]
    }

    /// `|k|²` at a flat index of the momentum mesh.
    pub fn k_squared(&self, index: usize) -> f64 {
        let [ix, iy, iz] = self.unravel(index);
        let (kx, ky, kz) = (
            self.momenta[X][ix],
            self.momenta[Y][iy],
            self.momenta[Z][iz],
        );
        kx * kx + ky * ky + kz * kz
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        vec![Complex64::default(); self.len()]
    }

    pub fn check_shape(&self, field: &[Complex64]) -> Result<()> {
        if field.len() != self.len() {
            return Err(Error::Shape {
                expected: self.len(),
                got: field.len(),
            });
        }
        Ok(())
    }

    /// Unitary forward transform, position → momentum, in place.
    pub fn fft_forward(&self, field: &mut [Complex64]) -> Result<()> {
        self.check_shape(field)?;
        self.fft_forward_unscaled(field);
        scale(field, 1.0 / (self.len() as f64).sqrt());
        Ok(())
    }

    /// Unitary inverse transform, momentum → position, in place.
    pub fn fft_backward(&self, field: &mut [Complex64]) -> Result<()> {
        self.check_shape(field)?;
        self.fft_backward_unscaled(field);
        scale(field, 1.0 / (self.len() as f64).sqrt());
        Ok(())
    }

    /// Forward transform without the `1/√N` factor. Callers that fold the
    /// normalization into another multiply use this pair; the round trip
    /// `backward_unscaled(forward_unscaled(f))` equals `N·f`.
    pub(crate) fn fft_forward_unscaled(&self, field: &mut [Complex64]) {
        debug_assert_eq!(field.len(), self.len());
        self.fft.apply(self.spec.n, field, false);
    }

    pub(crate) fn fft_backward_unscaled(&self, field: &mut [Complex64]) {
        debug_assert_eq!(field.len(), self.len());
        self.fft.apply(self.spec.n, field, true);
    }

    /// `Σ|f|²·dV`.
    pub fn field_norm(&self, field: &[Complex64]) -> f64 {
        let partials: Vec<f64> = field
            .par_chunks(self.slab_len())
            .map(|slab| slab.iter().map(|c| c.norm_sqr()).sum::<f64>())
            .collect();
        partials.iter().sum::<f64>() * self.dv
    }

    pub fn norm(&self, state: &WavepacketState) -> f64 {
        let (a, b) = self.component_norms(state);
        a + b
    }

    pub fn component_norms(&self, state: &WavepacketState) -> (f64, f64) {
        (self.field_norm(&state.psi1), self.field_norm(&state.psi2))
    }

    /// `ρ(y_j) = Σ_{i,k} |f(i,j,k)|² dx dz`.
    pub fn y_marginal(&self, field: &[Complex64]) -> Vec<f64> {
        self.y_marginal_of(field.len(), |i| field[i].norm_sqr())
    }

    /// Same reduction as [`Lattice::y_marginal`] over an arbitrary density
    /// evaluated per flat index.
    pub fn y_marginal_of<F>(&self, len: usize, density: F) -> Vec<f64>
    where
        F: Fn(usize) -> f64 + Sync,
    {
        assert_eq!(len, self.len(), "density length does not match lattice");
        let [nx, ny, nz] = self.spec.n;
        let slab = self.slab_len();
        let partials: Vec<Vec<f64>> = (0..nx)
            .into_par_iter()
            .map(|ix| {
                let base = ix * slab;
                (0..ny)
                    .map(|iy| {
                        let row = base + iy * nz;
                        (row..row + nz).map(&density).sum::<f64>()
                    })
                    .collect()
            })
            .collect();
        let weight = self.spacing[X] * self.spacing[Z];
        let mut rho = vec![0.0; ny];
        for part in &partials {
            for (r, p) in rho.iter_mut().zip(part) {
                *r += p;
            }
        }
        rho.iter_mut().for_each(|r| *r *= weight);
        rho
    }

    /// `⟨q⟩` for each axis over both components, normalized by the total norm.
    pub fn mean_position(&self, state: &WavepacketState) -> [f64; 3] {
        let [nx, ny, nz] = self.spec.n;
        let slab = self.slab_len();
        let partials: Vec<[f64; 4]> = (0..nx)
            .into_par_iter()
            .map(|ix| {
                let mut acc = [0.0; 4];
                for iy in 0..ny {
                    for iz in 0..nz {
                        let i = ix * slab + iy * nz + iz;
                        let w = state.psi1[i].norm_sqr() + state.psi2[i].norm_sqr();
                        acc[0] += w * self.positions[X][ix];
                        acc[1] += w * self.positions[Y][iy];
                        acc[2] += w * self.positions[Z][iz];
                        acc[3] += w;
                    }
                }
                acc
            })
            .collect();
        let mut total = [0.0; 4];
        for p in &partials {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        [
            total[0] / total[3],
            total[1] / total[3],
            total[2] / total[3],
        ]
    }

    /// Fraction of the state's norm sitting in the outer [`BOUNDARY_CELLS`]
    /// cells of any axis.
    pub fn boundary_fraction(&self, state: &WavepacketState) -> f64 {
        let n = self.spec.n;
        let near = |i: usize, len: usize| {
            len > 2 * BOUNDARY_CELLS && (i < BOUNDARY_CELLS || i >= len - BOUNDARY_CELLS)
        };
        let slab = self.slab_len();
        let partials: Vec<f64> = (0..n[X])
            .into_par_iter()
            .map(|ix| {
                let edge_x = near(ix, n[X]);
                let mut acc = 0.0;
                for iy in 0..n[Y] {
                    for iz in 0..n[Z] {
                        if edge_x || near(iy, n[Y]) || near(iz, n[Z]) {
                            let i = ix * slab + iy * n[Z] + iz;
                            acc += state.psi1[i].norm_sqr() + state.psi2[i].norm_sqr();
                        }
                    }
                }
                acc
            })
            .collect();
        let edge = partials.iter().sum::<f64>() * self.dv;
        let total = self.norm(state);
        if total > 0.0 {
            edge / total
        } else {
            0.0
        }
    }

    /// Linear interpolation of a `y`-marginal at an arbitrary `y`; values
    /// outside the mesh clamp to the end samples.
    pub fn interpolate_y(&self, rho: &[f64], y: f64) -> f64 {
        let ys = &self.positions[Y];
        assert_eq!(rho.len(), ys.len());
        if ys.len() == 1 || y <= ys[0] {
            return rho[0];
        }
        let last = ys.len() - 1;
        if y >= ys[last] {
            return rho[last];
        }
        let d = self.spacing[Y];
        let s = (y - ys[0]) / d;
        let j = (s.floor() as usize).min(last - 1);
        let frac = s - j as f64;
        rho[j] * (1.0 - frac) + rho[j + 1] * frac
    }

    /// Largest `|ρ(y_j) − ρ(−y_j)|` with the mirror value interpolated.
    pub fn mirror_deviation(&self, rho: &[f64]) -> f64 {
        self.positions[Y]
            .iter()
            .zip(rho)
            .map(|(&y, &r)| (r - self.interpolate_y(rho, -y)).abs())
            .fold(0.0, f64::max)
    }

    /// Index of the mesh point nearest to `y`.
    pub fn nearest_y(&self, y: f64) -> usize {
        let ys = &self.positions[Y];
        let s = ((y - ys[0]) / self.spacing[Y]).round();
        s.clamp(0.0, (ys.len() - 1) as f64) as usize
    }
}

/// Angular DFT frequencies `2π m/(n d)` in FFT order.
pub fn fft_frequencies(n: usize, d: f64) -> Vec<f64> {
    let unit = 2.0 * PI / (n as f64 * d);
    (0..n)
        .map(|m| {
            let signed = if m < n.div_ceil(2) {
                m as isize
            } else {
                m as isize - n as isize
            };
            signed as f64 * unit
        })
        .collect()
}

fn scale(field: &mut [Complex64], factor: f64) {
    field
        .par_chunks_mut(4096)
        .for_each(|chunk| chunk.iter_mut().for_each(|c| *c *= factor));
}

/// Two diabatic components of the nuclear wavefunction and the current time.
#[derive(Debug, Clone, PartialEq)]
pub struct WavepacketState {
    pub psi1: Vec<Complex64>,
    pub psi2: Vec<Complex64>,
    /// Time in fs.
    pub t: f64,
}

impl WavepacketState {
    pub fn zeros(lattice: &Lattice) -> Self {
        Self {
            psi1: lattice.zeros(),
            psi2: lattice.zeros(),
            t: 0.0,
        }
    }

    pub fn check_shape(&self, lattice: &Lattice) -> Result<()> {
        lattice.check_shape(&self.psi1)?;
        lattice.check_shape(&self.psi2)
    }

    pub fn scale(&mut self, factor: f64) {
        scale(&mut self.psi1, factor);
        scale(&mut self.psi2, factor);
    }

    /// First non-finite value, if any.
    pub fn find_non_finite(&self) -> Option<usize> {
        self.psi1
            .iter()
            .chain(&self.psi2)
            .position(|c| !(c.re.is_finite() && c.im.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: [usize; 3], offset_y: bool) -> Lattice {
        Lattice::new(GridSpec {
            n,
            lo: [0.0, -1.0, -1.0],
            hi: [4.0, 1.0, 1.0],
            offset_y,
        })
        .unwrap()
    }

    #[test]
    fn three_angstrom_axis_spacing() {
        let spec = GridSpec {
            n: [128, 128, 128],
            lo: [-1.9, -1.5, -1.5],
            hi: [1.1, 1.5, 1.5],
            offset_y: true,
        };
        let lattice = Lattice::new(spec).unwrap();
        assert!((lattice.spacing(X) - 3.0 / 128.0).abs() < 1e-15);
        assert!((lattice.spacing(X) - 0.0234).abs() < 1e-4);
        let min_abs_y = lattice
            .positions(Y)
            .iter()
            .map(|y| y.abs())
            .fold(f64::MAX, f64::min);
        assert!((min_abs_y - lattice.spacing(Y) / 2.0).abs() < 1e-12);
        assert!((min_abs_y - 0.0117).abs() < 1e-4);
        assert!(lattice.positions(Y).iter().all(|&y| y != 0.0));
    }

    #[test]
    fn momentum_mesh_fft_order() {
        let k = fft_frequencies(4, 1.0);
        let unit = 2.0 * PI / 4.0;
        let expect = [0.0, 1.0, -2.0, -1.0];
        for (a, b) in k.iter().zip(expect) {
            assert!((a / unit - b).abs() < 1e-14);
        }
        let l = small([4, 2, 2], false);
        assert_eq!(l.momenta(X), &k[..]);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = GridSpec::ci_tier();
        spec.n[1] = 0;
        assert!(matches!(Lattice::new(spec), Err(Error::Config(_))));
        let mut spec = GridSpec::ci_tier();
        spec.lo[0] = 5.0;
        assert!(matches!(Lattice::new(spec), Err(Error::Config(_))));
    }

    #[test]
    fn delta_transforms_to_flat_magnitude() {
        let l = small([8, 8, 8], false);
        let mut f = l.zeros();
        f[0] = Complex64::new(1.0, 0.0);
        l.fft_forward(&mut f).unwrap();
        let expect = 1.0 / (l.len() as f64).sqrt();
        for c in &f {
            assert!((c.norm() - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let l = small([4, 4, 4], false);
        let mut f = vec![Complex64::default(); 10];
        assert_eq!(
            l.fft_forward(&mut f),
            Err(Error::Shape {
                expected: 64,
                got: 10
            })
        );
    }

    #[test]
    fn index_round_trip() {
        let l = small([5, 3, 4], true);
        for i in 0..l.len() {
            let [a, b, c] = l.unravel(i);
            assert_eq!(l.index(a, b, c), i);
        }
    }

    #[test]
    fn component_norms_and_scaling() {
        let l = small([4, 4, 4], true);
        let mut s = WavepacketState::zeros(&l);
        for (i, c) in s.psi1.iter_mut().enumerate() {
            *c = Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos());
        }
        let n = l.norm(&s);
        assert_eq!(l.component_norms(&s), (n, 0.0));
        s.scale(2.0);
        assert!((l.norm(&s) - 4.0 * n).abs() < 1e-12 * n);
    }

    #[test]
    fn zero_field_marginal() {
        let l = small([4, 6, 4], true);
        assert!(l.y_marginal(&l.zeros()).iter().all(|&r| r == 0.0));
    }

    #[test]
    fn boundary_fraction_of_edge_state() {
        let l = small([16, 16, 16], true);
        let mut s = WavepacketState::zeros(&l);
        s.psi2[l.index(8, 8, 8)] = Complex64::new(1.0, 0.0);
        assert_eq!(l.boundary_fraction(&s), 0.0);
        s.psi1[l.index(0, 8, 8)] = Complex64::new(1.0, 0.0);
        assert!((l.boundary_fraction(&s) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn nearest_and_interpolate() {
        let l = small([2, 8, 2], true);
        let ys = l.positions(Y).to_vec();
        assert_eq!(l.nearest_y(ys[3] + 0.01), 3);
        let rho: Vec<f64> = ys.iter().map(|y| 2.0 * y + 1.0).collect();
        let mid = 0.5 * (ys[2] + ys[3]);
        assert!((l.interpolate_y(&rho, mid) - (2.0 * mid + 1.0)).abs() < 1e-14);
    }
}
