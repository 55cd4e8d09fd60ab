use conical_core::hamiltonian::{FieldSpec, ModelParams};
use conical_core::lattice::{GridSpec, Lattice, WavepacketState};
use conical_core::observables::adiabatic_populations;
use conical_core::propagator::PointOperator;
use conical_core::units::HBAR;
use num_complex::Complex64;
use proptest::prelude::*;

type M2 = [[Complex64; 2]; 2];

fn mul(a: &M2, b: &M2) -> M2 {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// `exp(−iWΔt/ħ)` by Taylor series with scaling and squaring.
fn series_exponential(w: [[f64; 2]; 2], dt: f64) -> M2 {
    let norm = w.iter().flatten().map(|v| v.abs()).sum::<f64>() * dt / HBAR;
    let squarings = norm.log2().ceil().max(0.0) as i32 + 4;
    let scale = dt / HBAR / 2f64.powi(squarings);
    let a: M2 = w.map(|row| row.map(|v| Complex64::new(0.0, -v * scale)));
    let mut term: M2 = [
        [Complex64::new(1.0, 0.0), 0.0.into()],
        [0.0.into(), 1.0.into()],
    ];
    let mut sum = term;
    for k in 1..30 {
        term = mul(&term, &a);
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v /= k as f64;
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                sum[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        sum = mul(&sum, &sum);
    }
    sum
}

fn coord() -> impl Strategy<Value = (f64, f64, f64)> {
    (-2.5f64..4.0, -1.5f64..1.5, -1.5f64..1.5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn eigenpairs_rebuild_the_matrix((x, y, z) in coord(), lambda_scale in 0.0f64..20.0) {
        let p = ModelParams { lambda: ModelParams::default().lambda * lambda_scale, ..Default::default() };
        let w = p.diabatic_matrix(x, y, z);
        let f = p.adiabatic_frame(x, y, z);
        let r = f.rotation();
        let ev = [f.lower, f.upper];
        for i in 0..2 {
            for j in 0..2 {
                let rebuilt: f64 = (0..2).map(|k| r[i][k] * ev[k] * r[j][k]).sum();
                prop_assert!((rebuilt - w[i][j]).abs() < 1e-12 * (1.0 + w[i][j].abs()));
            }
        }
        prop_assert!(f.lower <= f.upper);
    }

    #[test]
    fn step_matrix_matches_series((x, y, z) in coord(), dt in 0.01f64..0.5) {
        let p = ModelParams::default();
        let op = PointOperator::new(&p.adiabatic_frame(x, y, z), dt);
        let fast = op.diabatic_step_matrix();
        let oracle = series_exponential(p.diabatic_matrix(x, y, z), dt);
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((fast[i][j] - oracle[i][j]).norm() < 1e-10,
                    "({i},{j}) {} vs {}", fast[i][j], oracle[i][j]);
            }
        }
    }

    #[test]
    fn rotation_preserves_amplitude((x, y, z) in coord(), re in -1.0f64..1.0, im in -1.0f64..1.0) {
        let p = ModelParams::default();
        let op = PointOperator::new(&p.adiabatic_frame(x, y, z), 0.1);
        let (a, b) = (Complex64::new(re, im), Complex64::new(im, -0.3));
        let (lo, up) = op.to_adiabatic(a, b);
        prop_assert!((lo.norm_sqr() + up.norm_sqr() - a.norm_sqr() - b.norm_sqr()).abs() < 1e-14);
        let (a2, b2) = op.to_diabatic(lo, up);
        prop_assert!((a2 - a).norm() < 1e-14 && (b2 - b).norm() < 1e-14);
    }

    #[test]
    fn field_envelope_is_bounded(t in -10.0f64..60.0, cep in 0.0f64..6.3, delay in 0.0f64..40.0) {
        let f = FieldSpec::pulsed(0.1, 1.0, cep, 6.0, delay);
        let a = f.amplitude_at(t);
        prop_assert!(a.abs() <= 0.1 + 1e-15);
        if t < delay || t > delay + 6.0 {
            prop_assert_eq!(a, 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn populations_sum_to_norm(seed in 0u64..1000) {
        let l = Lattice::new(GridSpec { n: [16, 8, 4], ..GridSpec::ci_tier() }).unwrap();
        let p = ModelParams::default();
        let mut s = WavepacketState::zeros(&l);
        let mut v = seed as f64 + 0.5;
        for i in 0..l.len() {
            // cheap deterministic scramble
            v = (v * 12.9898).sin() * 437.585;
            let f = v.fract();
            s.psi1[i] = Complex64::new(f, (f * 7.0).cos());
            s.psi2[i] = Complex64::new((f * 3.0).sin(), -f);
        }
        let (g, e) = adiabatic_populations(&l, &p, &s);
        let n = l.norm(&s);
        prop_assert!(g >= 0.0 && e >= 0.0);
        prop_assert!((g + e - n).abs() < 1e-12 * n);
    }
}
