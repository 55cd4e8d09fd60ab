//! Scenario runners. Each returns a typed result for programmatic checks and
//! converts it into tables for output.

use std::sync::Arc;

use conical_core::hamiltonian::{initial_coherent_state, FieldKind, FieldSpec, ModelParams};
use conical_core::lattice::{Lattice, WavepacketState, BOUNDARY_WARN_FRACTION, Y};
use conical_core::observables::{
    adiabatic_populations, asymmetry, delay_scan_difference, excited_y_marginal, DifferenceMap,
    FitBounds, OscillationSummary, PopulationTrace,
};
use conical_core::propagator::{
    convergence_check, ConvergenceReport, PrecomputedOperators, Propagator, PropagatorConfig,
};
use conical_core::semiclassical::{ensemble_average, PathwayResult};
use rayon::prelude::*;

use crate::config::{Observe, Scenario, ScenarioConfig};
use crate::error::Result;
use crate::output::{Diagnostics, Outcome, Table};

/// Populations and health of one quantum run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub trace: PopulationTrace,
    pub norms: Vec<f64>,
    pub diagnostics: Diagnostics,
    pub final_state: WavepacketState,
}

/// Runs `prop` from `state`, sampling populations at every observer call.
pub fn run_quantum(
    prop: &Propagator<'_>,
    mut state: WavepacketState,
) -> conical_core::Result<RunRecord> {
    let lattice = prop.lattice();
    let params = *prop.params();
    let n0 = lattice.norm(&state);
    let mut trace = PopulationTrace::default();
    let mut norms = Vec::new();
    let mut diag = Diagnostics::default();
    prop.run(&mut state, |s| {
        trace.push(s.t, adiabatic_populations(lattice, &params, s));
        let n = lattice.norm(s);
        norms.push(n);
        diag.norm_drift_max = diag.norm_drift_max.max((n - n0).abs());
        diag.boundary_leak_max = diag.boundary_leak_max.max(lattice.boundary_fraction(s));
    })?;
    Ok(RunRecord {
        trace,
        norms,
        diagnostics: diag,
        final_state: state,
    })
}

fn lattice_for(cfg: &ScenarioConfig) -> Result<Lattice> {
    Ok(Lattice::new(cfg.grid.clone())?)
}

fn operators(
    cfg: &ScenarioConfig,
    model: &ModelParams,
    lattice: &Lattice,
) -> Result<Arc<PrecomputedOperators>> {
    Ok(Arc::new(PrecomputedOperators::precompute(
        model,
        lattice,
        &cfg.propagation,
    )?))
}

#[derive(Debug, Clone)]
pub struct SingleRunResult {
    pub y: Vec<f64>,
    pub record: RunRecord,
    pub rho_excited: Vec<f64>,
}

pub fn single_run(cfg: &ScenarioConfig) -> Result<SingleRunResult> {
    let lattice = lattice_for(cfg)?;
    let model = cfg.effective_model();
    let prop = Propagator::new(&lattice, &model, &cfg.field, &cfg.propagation)?;
    let record = run_quantum(&prop, initial_coherent_state(&model, &lattice)?)?;
    let rho_excited = excited_y_marginal(&lattice, &model, &record.final_state);
    Ok(SingleRunResult {
        y: lattice.positions(Y).to_vec(),
        record,
        rho_excited,
    })
}

impl SingleRunResult {
    pub fn outcome(&self) -> Outcome {
        let mut trace = Table::new("single-run", &["t_fs", "p_ground", "p_excited", "norm"]);
        let tr = &self.record.trace;
        for i in 0..tr.len() {
            trace.push(vec![
                tr.times[i],
                tr.p_ground[i],
                tr.p_excited[i],
                self.record.norms[i],
            ]);
        }
        let mut rho = Table::new("single-run-rho-y", &["y_A", "rho_excited"]);
        for (y, r) in self.y.iter().zip(&self.rho_excited) {
            rho.push(vec![*y, *r]);
        }
        let last = tr.len() - 1;
        Outcome {
            tables: vec![trace, rho],
            diagnostics: self.record.diagnostics,
            results: vec![
                (
                    "p_excited_final".into(),
                    format!("{:e}", tr.p_excited[last]),
                ),
                ("t_final_fs".into(), tr.times[last].to_string()),
            ],
            failures: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct KineticPoint {
    pub photon_energy: f64,
    pub amplitude: f64,
    pub x0: f64,
    /// Excited adiabatic population at the end of the run.
    pub excited_yield: f64,
    pub diagnostics: Diagnostics,
    pub trace: PopulationTrace,
    pub semiclassical: Option<PathwayResult>,
}

#[derive(Debug, Clone)]
pub struct KineticScanResult {
    pub points: Vec<KineticPoint>,
    pub failures: Vec<String>,
    pub overlay: bool,
}

pub fn kinetic_scan(cfg: &ScenarioConfig) -> Result<KineticScanResult> {
    let lattice = lattice_for(cfg)?;
    let model = cfg.effective_model();
    let ops = operators(cfg, &model, &lattice)?;
    let k = &cfg.kinetic;
    let mut grid = Vec::new();
    for &x0 in &k.x0s {
        for &amplitude in &k.amplitudes {
            for &hw in &k.photon_energies {
                grid.push((x0, amplitude, hw));
            }
        }
    }
    let results: Vec<std::result::Result<KineticPoint, String>> = grid
        .par_iter()
        .map(|&(x0, amplitude, hw)| {
            let label = format!("hw = {hw} eV, F = {amplitude} V/A, x0 = {x0} A");
            let m = ModelParams { x0, ..model };
            let field = FieldSpec {
                amplitude,
                photon_energy: hw,
                ..cfg.field
            };
            let point = || -> conical_core::Result<KineticPoint> {
                field.validate()?;
                let prop = Propagator::from_parts(
                    &lattice,
                    Arc::clone(&ops),
                    &m,
                    &field,
                    &cfg.propagation,
                );
                let rec = run_quantum(&prop, initial_coherent_state(&m, &lattice)?)?;
                let semiclassical = if k.semiclassical_overlay && hw > 0.0 {
                    Some(ensemble_average(
                        &m,
                        &field,
                        hw,
                        cfg.semiclassical.samples,
                        cfg.semiclassical.seed,
                        &cfg.semiclassical.pathway,
                    )?)
                } else {
                    None
                };
                Ok(KineticPoint {
                    photon_energy: hw,
                    amplitude,
                    x0,
                    excited_yield: *rec
                        .trace
                        .p_excited
                        .last()
                        .expect("observer saw the final state"),
                    diagnostics: rec.diagnostics,
                    trace: rec.trace,
                    semiclassical,
                })
            };
            let out = point().map_err(|e| format!("{label}: {e}"));
            match &out {
                Ok(p) => log::info!("{label}: yield {:.6}", p.excited_yield),
                Err(e) => log::warn!("{e}"),
            }
            out
        })
        .collect();
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(p) => points.push(p),
            Err(e) => failures.push(e),
        }
    }
    Ok(KineticScanResult {
        points,
        failures,
        overlay: k.semiclassical_overlay,
    })
}

impl KineticScanResult {
    /// Points sharing one field amplitude and starting position, in scan order.
    pub fn series(&self, amplitude: f64, x0: f64) -> Vec<&KineticPoint> {
        self.points
            .iter()
            .filter(|p| p.amplitude == amplitude && p.x0 == x0)
            .collect()
    }

    /// Photon energy of the largest yield in a series; the first wins ties.
    pub fn argmax(&self, amplitude: f64, x0: f64) -> Option<f64> {
        self.series(amplitude, x0)
            .into_iter()
            .fold(None::<&KineticPoint>, |best, p| match best {
                Some(b) if b.excited_yield >= p.excited_yield => Some(b),
                _ => Some(p),
            })
            .map(|p| p.photon_energy)
    }

    pub fn outcome(&self) -> Outcome {
        let mut header = vec![
            "hw_eV",
            "F_V_per_A",
            "x0_A",
            "yield",
            "norm_drift",
            "boundary_leak",
        ];
        if self.overlay {
            header.extend(["p_e_lz", "p_e_lz_stderr"]);
        }
        let mut table = Table::new("kinetic-scan", &header);
        let mut traces = Table::new(
            "kinetic-scan-traces",
            &[
                "hw_eV",
                "F_V_per_A",
                "x0_A",
                "t_fs",
                "p_ground",
                "p_excited",
            ],
        );
        let mut diag = Diagnostics::default();
        for p in &self.points {
            let mut row = vec![
                p.photon_energy,
                p.amplitude,
                p.x0,
                p.excited_yield,
                p.diagnostics.norm_drift_max,
                p.diagnostics.boundary_leak_max,
            ];
            if self.overlay {
                let (pe, se) = p
                    .semiclassical
                    .map_or((f64::NAN, f64::NAN), |s| (s.p_e, s.stderr));
                row.extend([pe, se]);
            }
            table.push(row);
            for i in 0..p.trace.len() {
                traces.push(vec![
                    p.photon_energy,
                    p.amplitude,
                    p.x0,
                    p.trace.times[i],
                    p.trace.p_ground[i],
                    p.trace.p_excited[i],
                ]);
            }
            diag.merge(p.diagnostics);
        }
        let mut results = Vec::new();
        let mut seen = Vec::new();
        for p in &self.points {
            if seen.contains(&(p.amplitude, p.x0)) {
                continue;
            }
            seen.push((p.amplitude, p.x0));
            if let Some(hw) = self.argmax(p.amplitude, p.x0) {
                results.push((
                    format!("argmax.{}", seen.len() - 1),
                    format!("F_V_per_A {} x0_A {} hw_eV {hw}", p.amplitude, p.x0),
                ));
            }
        }
        Outcome {
            tables: vec![table, traces],
            diagnostics: diag,
            results,
            failures: self.failures.clone(),
        }
    }
}

/// Column label for a CEP: `0`, `halfpi` and `pi` by name, others in radians.
pub fn cep_label(cep: f64) -> String {
    use std::f64::consts::{FRAC_PI_2, PI};
    let named = [
        (0.0, "0"),
        (FRAC_PI_2, "halfpi"),
        (PI, "pi"),
        (1.5 * PI, "threehalfpi"),
    ];
    match named.iter().find(|(v, _)| (cep - v).abs() < 1e-9) {
        Some((_, name)) => name.to_string(),
        None => format!("{cep:.6}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CepCurve {
    /// `None` for the field-free reference.
    pub cep: Option<f64>,
    pub rho: Vec<f64>,
    pub asymmetry: f64,
    pub p_excited: f64,
}

#[derive(Debug, Clone)]
pub struct CepResult {
    pub y: Vec<f64>,
    pub field_free: CepCurve,
    pub curves: Vec<CepCurve>,
    pub diagnostics: Diagnostics,
}

pub fn geometric_cep(cfg: &ScenarioConfig) -> Result<CepResult> {
    let lattice = lattice_for(cfg)?;
    let model = cfg.effective_model();
    let ops = operators(cfg, &model, &lattice)?;
    let initial = initial_coherent_state(&model, &lattice)?;
    let mut fields = vec![None];
    fields.extend(cfg.geometric.ceps.iter().map(|c| Some(*c)));
    let curves: Vec<(CepCurve, Diagnostics)> = fields
        .par_iter()
        .map(|cep| -> Result<(CepCurve, Diagnostics)> {
            let field = match cep {
                None => FieldSpec::off(),
                Some(c) => FieldSpec {
                    cep: *c,
                    ..cfg.field
                },
            };
            let prop = Propagator::from_parts(
                &lattice,
                Arc::clone(&ops),
                &model,
                &field,
                &cfg.propagation,
            );
            let rec = run_quantum(&prop, initial.clone())?;
            let rho = excited_y_marginal(&lattice, &model, &rec.final_state);
            let curve = CepCurve {
                cep: *cep,
                asymmetry: asymmetry(&lattice, &rho),
                p_excited: *rec.trace.p_excited.last().expect("final sample"),
                rho,
            };
            log::info!("cep {:?}: asymmetry {:.6e}", cep, curve.asymmetry);
            Ok((curve, rec.diagnostics))
        })
        .collect::<Result<_>>()?;
    let mut diagnostics = Diagnostics::default();
    let mut it = curves.into_iter().map(|(c, d)| {
        diagnostics.merge(d);
        c
    });
    let field_free = it.next().expect("field-free run first");
    let curves = it.collect();
    Ok(CepResult {
        y: lattice.positions(Y).to_vec(),
        field_free,
        curves,
        diagnostics,
    })
}

impl CepResult {
    pub fn curve(&self, cep: f64) -> Option<&CepCurve> {
        self.curves
            .iter()
            .find(|c| c.cep.is_some_and(|v| (v - cep).abs() < 1e-9))
    }

    pub fn outcome(&self) -> Outcome {
        let mut header = vec!["y_A".to_string(), "rho_fieldfree".to_string()];
        header.extend(
            self.curves
                .iter()
                .map(|c| format!("rho_cep_{}", cep_label(c.cep.unwrap_or(0.0)))),
        );
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut table = Table::new("geometric-cep", &refs);
        for (j, y) in self.y.iter().enumerate() {
            let mut row = vec![*y, self.field_free.rho[j]];
            row.extend(self.curves.iter().map(|c| c.rho[j]));
            table.push(row);
        }
        let mut summary = Table::new(
            "geometric-cep-summary",
            &["field_on", "cep_rad", "asymmetry", "p_excited"],
        );
        for c in std::iter::once(&self.field_free).chain(&self.curves) {
            summary.push(vec![
                f64::from(u8::from(c.cep.is_some())),
                c.cep.unwrap_or(0.0),
                c.asymmetry,
                c.p_excited,
            ]);
        }
        let mut results = vec![(
            "asymmetry_fieldfree".into(),
            format!("{:e}", self.field_free.asymmetry),
        )];
        for c in &self.curves {
            results.push((
                format!("asymmetry_cep_{}", cep_label(c.cep.unwrap_or(0.0))),
                format!("{:e}", c.asymmetry),
            ));
        }
        Outcome {
            tables: vec![table, summary],
            diagnostics: self.diagnostics,
            results,
            failures: Vec::new(),
        }
    }
}

/// Delay-scan lineout at one requested `y`.
#[derive(Debug, Clone)]
pub struct Lineout {
    pub y: f64,
    /// Reference-subtracted density at the nearest mesh point.
    pub values: Vec<f64>,
    /// Odd part `½[Δρ(y) − Δρ(−y)]`: the interference term, since the
    /// non-interfering density is even in `y`.
    pub interference: Vec<f64>,
    pub oscillation: std::result::Result<OscillationSummary, String>,
}

#[derive(Debug, Clone)]
pub struct DelayResult {
    pub y: Vec<f64>,
    pub delays: Vec<f64>,
    pub observe_times: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
    pub map: DifferenceMap,
    pub lineouts: Vec<Lineout>,
    pub diagnostics: Diagnostics,
}

/// Delay scan from one field-free trunk run.
///
/// The field vanishes before each pulse starts, so every row branches off
/// the shared field-free trajectory at its pulse start instead of
/// re-propagating from `t = 0`.
pub fn geometric_delay(cfg: &ScenarioConfig) -> Result<DelayResult> {
    let lattice = lattice_for(cfg)?;
    let model = cfg.effective_model();
    let ops = operators(cfg, &model, &lattice)?;
    let dt = cfg.propagation.dt;
    let trunk = Propagator::from_parts(
        &lattice,
        Arc::clone(&ops),
        &model,
        &FieldSpec::off(),
        &cfg.propagation,
    );
    let mut state = initial_coherent_state(&model, &lattice)?;
    let n0 = lattice.norm(&state);
    let mut diagnostics = Diagnostics::default();
    let mut k = 0usize;
    let mut rows = Vec::with_capacity(cfg.geometric.delays.len());
    let mut observe_times = Vec::new();
    for &delay in &cfg.geometric.delays {
        let branch_at = (delay / dt + 1e-9).floor() as usize;
        while k < branch_at {
            trunk.step(&mut state);
            k += 1;
            state.t = k as f64 * dt;
        }
        if let Some(i) = state.find_non_finite() {
            return Err(conical_core::Error::Numerical {
                step: k,
                what: format!("non-finite amplitude at flat index {i} on the field-free trunk"),
            }
            .into());
        }
        let t_obs = match cfg.geometric.observe {
            Observe::PulseEnd => delay + cfg.field.duration,
            Observe::At(t) => t,
        };
        let field = FieldSpec {
            kind: FieldKind::Pulsed,
            delay,
            ..cfg.field
        };
        let pcfg = PropagatorConfig {
            t_end: t_obs,
            observer_stride: usize::MAX,
            ..cfg.propagation
        };
        let branch = Propagator::from_parts(&lattice, Arc::clone(&ops), &model, &field, &pcfg);
        let mut s = state.clone();
        branch.run(&mut s, |_| {})?;
        diagnostics.merge(Diagnostics {
            norm_drift_max: (lattice.norm(&s) - n0).abs(),
            boundary_leak_max: lattice.boundary_fraction(&s),
        });
        log::info!("delay {delay} fs observed at {t_obs} fs");
        rows.push((delay, excited_y_marginal(&lattice, &model, &s)));
        observe_times.push(t_obs);
    }
    let map = delay_scan_difference(&rows, cfg.geometric.reference_delay)?;
    let lineouts = cfg
        .geometric
        .lineouts
        .iter()
        .map(|&y| {
            let values = map.lineout(&lattice, y);
            let mirror = map.lineout(&lattice, -y);
            let interference: Vec<f64> = values
                .iter()
                .zip(&mirror)
                .map(|(a, b)| 0.5 * (a - b))
                .collect();
            let oscillation =
                OscillationSummary::analyze(&map.delays, &interference, &FitBounds::default())
                    .map_err(|e| e.to_string());
            Lineout {
                y,
                values,
                interference,
                oscillation,
            }
        })
        .collect();
    Ok(DelayResult {
        y: lattice.positions(Y).to_vec(),
        delays: cfg.geometric.delays.clone(),
        observe_times,
        rho: rows.into_iter().map(|(_, r)| r).collect(),
        map,
        lineouts,
        diagnostics,
    })
}

impl DelayResult {
    pub fn outcome(&self) -> Outcome {
        let mut map = Table::new(
            "geometric-delay",
            &["delay_fs", "observe_fs", "y_A", "rho", "rho_diff"],
        );
        for (i, d) in self.delays.iter().enumerate() {
            for (j, y) in self.y.iter().enumerate() {
                map.push(vec![
                    *d,
                    self.observe_times[i],
                    *y,
                    self.rho[i][j],
                    self.map.rows[i][j],
                ]);
            }
        }
        let mut header = vec!["delay_fs".to_string()];
        for l in &self.lineouts {
            header.push(format!("rho_diff_at_{:+.3}", l.y));
            header.push(format!("interference_at_{:+.3}", l.y));
            header.push(format!("fit_at_{:+.3}", l.y));
        }
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut lines = Table::new("geometric-delay-lineouts", &refs);
        for (i, d) in self.delays.iter().enumerate() {
            let mut row = vec![*d];
            for l in &self.lineouts {
                let fit = l.oscillation.as_ref().map_or(f64::NAN, |o| o.fit.value(*d));
                row.extend([l.values[i], l.interference[i], fit]);
            }
            lines.push(row);
        }
        let mut crossings = Table::new("geometric-delay-crossings", &["lineout_A", "crossing_fs"]);
        let mut results = Vec::new();
        for (n, l) in self.lineouts.iter().enumerate() {
            match &l.oscillation {
                Ok(o) => {
                    for c in &o.crossings {
                        crossings.push(vec![l.y, *c]);
                    }
                    let f = &o.fit;
                    results.push((
                        format!("lineout.{n}"),
                        format!(
                            "y_A {} gamma {} omega {} beta {} r_squared {} crossings {} \
                             spacing_decreasing {} envelope_decreasing {}",
                            l.y,
                            f.gamma,
                            f.omega,
                            f.beta,
                            f.r_squared,
                            o.crossings.len(),
                            o.spacings_strictly_decreasing(),
                            o.envelope_decreasing()
                        ),
                    ));
                }
                Err(e) => results.push((
                    format!("lineout.{n}"),
                    format!("y_A {} fit failed: {e}", l.y),
                )),
            }
        }
        Outcome {
            tables: vec![map, lines, crossings],
            diagnostics: self.diagnostics,
            results,
            failures: Vec::new(),
        }
    }
}

pub fn semiclassical_scan(cfg: &ScenarioConfig) -> Result<Vec<PathwayResult>> {
    let model = cfg.effective_model();
    let field = FieldSpec {
        kind: FieldKind::Continuous,
        ..cfg.field
    };
    cfg.semiclassical
        .photon_energies
        .iter()
        .map(|&hw| {
            let f = FieldSpec {
                photon_energy: hw,
                ..field
            };
            let s = &cfg.semiclassical;
            Ok(ensemble_average(
                &model, &f, hw, s.samples, s.seed, &s.pathway,
            )?)
        })
        .collect()
}

pub fn semiclassical_outcome(results: &[PathwayResult]) -> Outcome {
    let mut t = Table::new(
        "semiclassical-scan",
        &[
            "hw_eV",
            "P_L",
            "P_CI_mean",
            "P_R",
            "P_E",
            "stderr",
            "validity_ratio",
        ],
    );
    for r in results {
        t.push(vec![
            r.photon_energy,
            r.p_l,
            r.p_ci,
            r.p_r,
            r.p_e,
            r.stderr,
            r.validity_ratio,
        ]);
    }
    Outcome {
        tables: vec![t],
        ..Outcome::default()
    }
}

pub fn convergence(cfg: &ScenarioConfig) -> Result<ConvergenceReport> {
    let lattice = lattice_for(cfg)?;
    let model = cfg.effective_model();
    let initial = initial_coherent_state(&model, &lattice)?;
    Ok(convergence_check(
        &lattice,
        &model,
        &cfg.field,
        &cfg.propagation,
        &initial,
        cfg.convergence_levels,
    )?)
}

pub fn convergence_outcome(report: &ConvergenceReport) -> Outcome {
    let mut t = Table::new("convergence", &["dt_fs", "p_ground", "p_excited", "norm"]);
    for s in &report.samples {
        t.push(vec![s.dt, s.p_ground, s.p_excited, s.norm]);
    }
    let join = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:e}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let norm_drift_max = report
        .samples
        .iter()
        .map(|s| (s.norm - 1.0).abs())
        .fold(0.0, f64::max);
    Outcome {
        tables: vec![t],
        diagnostics: Diagnostics {
            norm_drift_max,
            boundary_leak_max: 0.0,
        },
        results: vec![
            ("deviations".into(), join(&report.deviations)),
            ("ratios".into(), join(&report.ratios())),
        ],
        failures: Vec::new(),
    }
}

/// Runs the configured scenario in the current rayon pool.
pub fn run(cfg: &ScenarioConfig) -> Result<Outcome> {
    let outcome = match cfg.scenario {
        Scenario::SingleRun => single_run(cfg)?.outcome(),
        Scenario::KineticScan => kinetic_scan(cfg)?.outcome(),
        Scenario::GeometricCep => geometric_cep(cfg)?.outcome(),
        Scenario::GeometricDelay => geometric_delay(cfg)?.outcome(),
        Scenario::SemiclassicalScan => semiclassical_outcome(&semiclassical_scan(cfg)?),
        Scenario::Convergence => convergence_outcome(&convergence(cfg)?),
    };
    let leak = outcome.diagnostics.boundary_leak_max;
    if leak > BOUNDARY_WARN_FRACTION {
        log::warn!(
            "{leak:.2e} of the density reached the outer grid cells; \
             widen the grid or shorten the run"
        );
    }
    Ok(outcome)
}
