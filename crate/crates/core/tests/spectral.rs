use std::f64::consts::PI;

use conical_core::lattice::{GridSpec, Lattice, X, Y, Z};
use num_complex::Complex64;
use proptest::prelude::*;

fn small(n: [usize; 3]) -> Lattice {
    Lattice::new(GridSpec {
        n,
        lo: [-1.0, -0.8, -0.6],
        hi: [1.2, 0.8, 0.6],
        offset_y: true,
    })
    .unwrap()
}

/// Unitary DFT by direct summation over all lattice points.
fn direct_dft(l: &Lattice, f: &[Complex64]) -> Vec<Complex64> {
    let [nx, ny, nz] = l.shape();
    let norm = 1.0 / (l.len() as f64).sqrt();
    (0..l.len())
        .map(|k| {
            let [kx, ky, kz] = l.unravel(k);
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, v) in f.iter().enumerate() {
                let [jx, jy, jz] = l.unravel(j);
                let phase = -2.0
                    * PI
                    * ((kx * jx) as f64 / nx as f64
                        + (ky * jy) as f64 / ny as f64
                        + (kz * jz) as f64 / nz as f64);
                acc += v * Complex64::from_polar(1.0, phase);
            }
            acc * norm
        })
        .collect()
}

#[test]
fn gaussian_transform_matches_direct_sum() {
    let l = small([8, 8, 8]);
    let mut f: Vec<Complex64> = (0..l.len())
        .map(|i| {
            let [x, y, z] = l.point(i);
            let r2 = (x - 0.1).powi(2) + y * y / 0.5 + z * z;
            Complex64::from_polar((-r2 / 0.3).exp(), 3.0 * x)
        })
        .collect();
    let expected = direct_dft(&l, &f);
    l.fft_forward(&mut f).unwrap();
    let err = f
        .iter()
        .zip(&expected)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(err < 1e-12, "max deviation {err:e}");
}

#[test]
fn non_cubic_shape_matches_direct_sum() {
    let l = small([6, 4, 10]);
    let mut f: Vec<Complex64> = (0..l.len())
        .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()))
        .collect();
    let expected = direct_dft(&l, &f);
    l.fft_forward(&mut f).unwrap();
    for (a, b) in f.iter().zip(&expected) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn plane_wave_lands_on_its_momentum() {
    let l = small([16, 8, 4]);
    let (mx, my) = (3, 6);
    let (kx, ky) = (l.momenta(X)[mx], l.momenta(Y)[my]);
    let mut f: Vec<Complex64> = (0..l.len())
        .map(|i| {
            let [x, y, _] = l.point(i);
            Complex64::from_polar(1.0, kx * x + ky * y)
        })
        .collect();
    l.fft_forward(&mut f).unwrap();
    let peak = l.index(mx, my, 0);
    let total: f64 = f.iter().map(|c| c.norm_sqr()).sum();
    assert!((f[peak].norm_sqr() / total - 1.0).abs() < 1e-12);
    assert_eq!(l.momenta(Z)[0], 0.0);
}

fn field_strategy(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
        .prop_map(|v| v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval(f in field_strategy(8 * 4 * 6)) {
        let l = small([8, 4, 6]);
        let mut g = f.clone();
        let before: f64 = f.iter().map(|c| c.norm_sqr()).sum();
        l.fft_forward(&mut g).unwrap();
        let after: f64 = g.iter().map(|c| c.norm_sqr()).sum();
        prop_assert!(((before - after) / before).abs() < 1e-12);
    }

    #[test]
    fn round_trip(f in field_strategy(8 * 4 * 6)) {
        let l = small([8, 4, 6]);
        let mut g = f.clone();
        l.fft_forward(&mut g).unwrap();
        l.fft_backward(&mut g).unwrap();
        for (a, b) in f.iter().zip(&g) {
            prop_assert!((a - b).norm() < 1e-13);
        }
    }
}
