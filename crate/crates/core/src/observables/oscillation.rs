//! Damped, chirped sinusoid fits for delay-scan lineouts.
//!
//! The model is
//! `v(t) ≈ e^{−γs}(a cos θ + b sin θ) + c0 + c1·s` with `s = t − t0` and
//! `θ = ω s + β s²/2`. For fixed `(γ, ω, β)` the remaining coefficients are
//! linear, so they are solved exactly and only the three nonlinear
//! parameters are searched (coarse grid, then pattern refinement).

use rayon::prelude::*;

use super::zero_crossings;
use crate::error::{Error, Result};

/// Search box for the nonlinear fit parameters (units of the abscissa).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitBounds {
    pub gamma: (f64, f64),
    pub omega: (f64, f64),
    pub beta: (f64, f64),
    /// Coarse grid steps for `(γ, ω, β)`.
    pub steps: (f64, f64, f64),
}

impl Default for FitBounds {
    fn default() -> Self {
        Self {
            gamma: (0.0, 2.0),
            omega: (0.2, 8.0),
            beta: (-0.6, 0.6),
            steps: (0.05, 0.1, 0.05),
        }
    }
}

/// Least-squares damped chirped sinusoid on a linear baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChirpedFit {
    pub t0: f64,
    pub gamma: f64,
    pub omega: f64,
    pub beta: f64,
    /// Coefficients of `cos θ` and `sin θ`.
    pub quadrature: [f64; 2],
    /// `c0 + c1·s`.
    pub baseline: [f64; 2],
    /// Coefficient of determination against the input series.
    pub r_squared: f64,
}

const REFINE_ROUNDS: usize = 200;
const REFINE_FLOOR: f64 = 1e-7;

impl ChirpedFit {
    pub fn fit(t: &[f64], v: &[f64], bounds: &FitBounds) -> Result<Self> {
        if t.len() != v.len() {
            return Err(Error::Shape {
                expected: t.len(),
                got: v.len(),
            });
        }
        if t.len() < 8 {
            return Err(Error::Domain(format!(
                "an oscillation fit needs at least 8 samples, got {}",
                t.len()
            )));
        }
        if t.iter().chain(v).any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite sample in oscillation fit".into()));
        }
        let t0 = t[0];
        let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if scale == 0.0 {
            return Err(Error::Domain(
                "cannot fit an identically zero series".into(),
            ));
        }
        let s: Vec<f64> = t.iter().map(|ti| ti - t0).collect();
        let y: Vec<f64> = v.iter().map(|vi| vi / scale).collect();

        let grid = |(lo, hi): (f64, f64), step: f64| -> Vec<f64> {
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            (0..=n).map(|k| lo + step * k as f64).collect()
        };
        let gammas = grid(bounds.gamma, bounds.steps.0);
        let omegas = grid(bounds.omega, bounds.steps.1);
        let betas = grid(bounds.beta, bounds.steps.2);

        let (mut best_rss, mut p) = gammas
            .par_iter()
            .map(|&g| {
                let mut best = (f64::INFINITY, [g, omegas[0], betas[0]]);
                for &w in &omegas {
                    for &b in &betas {
                        let rss = solve_linear(&s, &y, [g, w, b]).0;
                        if rss < best.0 {
                            best = (rss, [g, w, b]);
                        }
                    }
                }
                best
            })
            .reduce(
                || (f64::INFINITY, [0.0; 3]),
                |a, b| if b.0 < a.0 { b } else { a },
            );

        // compass search from the grid optimum
        let mut step = [
            bounds.steps.0 / 2.0,
            bounds.steps.1 / 2.0,
            bounds.steps.2 / 2.0,
        ];
        for _ in 0..REFINE_ROUNDS {
            let mut moved = false;
            for axis in 0..3 {
                for dir in [-1.0, 1.0] {
                    let mut q = p;
                    q[axis] += dir * step[axis];
                    let rss = solve_linear(&s, &y, q).0;
                    if rss < best_rss {
                        best_rss = rss;
                        p = q;
                        moved = true;
                    }
                }
            }
            if !moved {
                step.iter_mut().for_each(|h| *h /= 2.0);
                if step.iter().all(|h| *h < REFINE_FLOOR) {
                    break;
                }
            }
        }

        let (rss, c) = solve_linear(&s, &y, p);
        log::debug!(
            "oscillation fit γ = {:.4}, ω = {:.4}, β = {:.4}",
            p[0],
            p[1],
            p[2]
        );
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let tss: f64 = y.iter().map(|yi| (yi - mean).powi(2)).sum();
        Ok(Self {
            t0,
            gamma: p[0],
            omega: p[1],
            beta: p[2],
            quadrature: [c[0] * scale, c[1] * scale],
            baseline: [c[2] * scale, c[3] * scale],
            r_squared: if tss > 0.0 { 1.0 - rss / tss } else { 1.0 },
        })
    }

    pub fn oscillation(&self, t: f64) -> f64 {
        let s = t - self.t0;
        let th = self.omega * s + 0.5 * self.beta * s * s;
        (-self.gamma * s).exp() * (self.quadrature[0] * th.cos() + self.quadrature[1] * th.sin())
    }

    pub fn baseline_at(&self, t: f64) -> f64 {
        self.baseline[0] + self.baseline[1] * (t - self.t0)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.oscillation(t) + self.baseline_at(t)
    }

    /// Sign changes of the fitted oscillation inside `[lo, hi]`, located by
    /// dense sampling and bisection.
    pub fn crossings(&self, lo: f64, hi: f64) -> Vec<f64> {
        // the instantaneous rate bounds how finely to sample
        let rate = self
            .omega
            .abs()
            .max((self.omega + self.beta * (hi - self.t0)).abs());
        let n = (((hi - lo) * rate.max(1e-3)).ceil() as usize * 40).clamp(200, 2_000_000);
        let h = (hi - lo) / n as f64;
        let mut out = Vec::new();
        let mut prev = (lo, self.oscillation(lo));
        for k in 1..=n {
            let t = lo + h * k as f64;
            let f = self.oscillation(t);
            if prev.1 != 0.0 && f != 0.0 && (prev.1 < 0.0) != (f < 0.0) {
                let (mut a, mut b, fa) = (prev.0, t, prev.1);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if (self.oscillation(m) < 0.0) == (fa < 0.0) {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                out.push(0.5 * (a + b));
            } else if f == 0.0 {
                out.push(t);
            }
            prev = (t, f);
        }
        out
    }
}

/// Residual sum of squares and `[a, b, c0, c1]` for fixed `(γ, ω, β)`.
fn solve_linear(s: &[f64], y: &[f64], [g, w, b]: [f64; 3]) -> (f64, [f64; 4]) {
    let span = s.last().copied().unwrap_or(1.0).max(1e-12);
    let mut ata = [[0.0; 4]; 4];
    let mut aty = [0.0; 4];
    let basis = |si: f64| {
        let th = w * si + 0.5 * b * si * si;
        let e = (-g * si).exp();
        [e * th.cos(), e * th.sin(), 1.0, si / span]
    };
    for (&si, &yi) in s.iter().zip(y) {
        let row = basis(si);
        for i in 0..4 {
            aty[i] += row[i] * yi;
            for j in 0..4 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let Some(mut c) = gauss_solve(ata, aty) else {
        return (f64::INFINITY, [0.0; 4]);
    };
    let rss = s
        .iter()
        .zip(y)
        .map(|(&si, &yi)| {
            let row = basis(si);
            let f: f64 = row.iter().zip(&c).map(|(r, ci)| r * ci).sum();
            (yi - f).powi(2)
        })
        .sum();
    c[3] /= span;
    (rss, c)
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn gauss_solve(mut a: [[f64; 4]; 4], mut y: [f64; 4]) -> Option<[f64; 4]> {
    let norm = a.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()));
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-13 * norm {
            return None;
        }
        a.swap(col, piv);
        y.swap(col, piv);
        let pivot_row = a[col];
        for r in col + 1..4 {
            let f = a[r][col] / pivot_row[col];
            for (v, p) in a[r][col..].iter_mut().zip(&pivot_row[col..]) {
                *v -= f * p;
            }
            y[r] -= f * y[col];
        }
    }
    let mut x = [0.0; 4];
    for r in (0..4).rev() {
        let tail: f64 = (r + 1..4).map(|k| a[r][k] * x[k]).sum();
        x[r] = (y[r] - tail) / a[r][r];
    }
    Some(x)
}

/// Crossing pattern of a delay lineout.
///
/// Crossings and spacings come from the fitted oscillation. Lobe peaks are
/// read from the data with the fitted baseline removed, so the envelope test
/// does not depend on the fitted damping.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillationSummary {
    pub fit: ChirpedFit,
    pub crossings: Vec<f64>,
    /// Differences between consecutive crossings (half periods).
    pub spacings: Vec<f64>,
    /// Largest `|residual|` in each complete lobe of the baseline-free data.
    pub lobe_peaks: Vec<f64>,
}

impl OscillationSummary {
    pub fn analyze(t: &[f64], signal: &[f64], bounds: &FitBounds) -> Result<Self> {
        let fit = ChirpedFit::fit(t, signal, bounds)?;
        let crossings = fit.crossings(t[0], t[t.len() - 1]);
        let spacings = crossings.windows(2).map(|w| w[1] - w[0]).collect();
        let residual: Vec<f64> = t
            .iter()
            .zip(signal)
            .map(|(&ti, &vi)| vi - fit.baseline_at(ti))
            .collect();
        let raw = zero_crossings(t, &residual);
        let lobe_peaks = raw
            .windows(2)
            .map(|w| {
                t.iter()
                    .zip(&residual)
                    .filter(|(ti, _)| **ti > w[0] && **ti < w[1])
                    .map(|(_, v)| v.abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        Ok(Self {
            fit,
            crossings,
            spacings,
            lobe_peaks,
        })
    }

    pub fn spacings_strictly_decreasing(&self) -> bool {
        self.spacings.windows(2).all(|w| w[1] < w[0])
    }

    /// Lobe peaks non-increasing after a three-lobe moving average over full
    /// windows only; fewer than four lobes are compared unsmoothed.
    pub fn envelope_decreasing(&self) -> bool {
        let p = &self.lobe_peaks;
        let smooth: Vec<f64> = if p.len() >= 4 {
            p.windows(3).map(|w| w.iter().sum::<f64>() / 3.0).collect()
        } else {
            p.clone()
        };
        smooth.len() >= 2 && smooth.windows(2).all(|w| w[1] <= w[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chirped(t: &[f64], g: f64, w: f64, b: f64, phase: f64) -> Vec<f64> {
        t.iter()
            .map(|&s| {
                let u = s - t[0];
                (-g * u).exp() * (phase + w * u + 0.5 * b * u * u).cos() + 0.3 - 0.02 * u
            })
            .collect()
    }

    #[test]
    fn recovers_parameters() {
        let t: Vec<f64> = (0..69).map(|k| 24.0 + 0.25 * k as f64).collect();
        let v = chirped(&t, 0.3, 1.7, 0.12, 0.4);
        let fit = ChirpedFit::fit(&t, &v, &FitBounds::default()).unwrap();
        assert!((fit.gamma - 0.3).abs() < 1e-5, "{fit:?}");
        assert!((fit.omega - 1.7).abs() < 1e-5);
        assert!((fit.beta - 0.12).abs() < 1e-5);
        assert!((fit.baseline[0] - 0.3).abs() < 1e-5);
        assert!((fit.baseline[1] + 0.02).abs() < 1e-6);
        assert!(fit.r_squared > 1.0 - 1e-9);
    }

    #[test]
    fn accelerating_decay_summary() {
        let t: Vec<f64> = (0..69).map(|k| 24.0 + 0.25 * k as f64).collect();
        let s = OscillationSummary::analyze(
            &t,
            &chirped(&t, 0.1, 1.5, 0.1, 0.0),
            &FitBounds::default(),
        )
        .unwrap();
        assert!(s.crossings.len() >= 3);
        assert!(s.spacings_strictly_decreasing());
        assert!(s.envelope_decreasing());
    }

    #[test]
    fn slowing_oscillation_is_not_accelerating() {
        let t: Vec<f64> = (0..69).map(|k| 24.0 + 0.25 * k as f64).collect();
        let s = OscillationSummary::analyze(
            &t,
            &chirped(&t, 0.05, 3.0, -0.15, 1.0),
            &FitBounds::default(),
        )
        .unwrap();
        assert!(s.crossings.len() >= 3);
        assert!(!s.spacings_strictly_decreasing());
    }

    #[test]
    fn growing_envelope_detected() {
        let t: Vec<f64> = (0..69).map(|k| 24.0 + 0.25 * k as f64).collect();
        let v: Vec<f64> = t
            .iter()
            .map(|&x| (0.1 * (x - 24.0)).exp() * (2.0 * (x - 24.0)).sin())
            .collect();
        let s = OscillationSummary::analyze(&t, &v, &FitBounds::default()).unwrap();
        assert!(!s.envelope_decreasing());
    }

    #[test]
    fn rejects_short_and_flat_series() {
        let b = FitBounds::default();
        assert!(matches!(
            ChirpedFit::fit(&[0.0; 3], &[1.0; 3], &b),
            Err(Error::Domain(_))
        ));
        let t: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(matches!(
            ChirpedFit::fit(&t, &[0.0; 10], &b),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            ChirpedFit::fit(&t, &[0.0; 9], &b),
            Err(Error::Shape { .. })
        ));
    }
}
