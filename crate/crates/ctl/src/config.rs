//! `config.kv` parsing and scenario configuration.
//!
//! The format is line oriented:
//!
//! ```text
//! # comment
//! scenario = kinetic-scan
//! [field]
//! photon_energy_eV = 0.55
//! model.mu = 0.5            # dotted keys work outside sections too
//! [kinetic]
//! photon_energies_eV = 0.1:1.2:0.05, 1.5
//! ```
//!
//! Lists are comma separated and may mix numbers with inclusive
//! `start:stop:step` ranges. Angles accept `pi` multiples (`pi/2`, `-3pi/4`).
//! Keys under `manifest.` are ignored so that a written manifest can be fed
//! back in as a config.

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use conical_core::hamiltonian::{FieldKind, FieldSpec, ModelParams};
use conical_core::lattice::GridSpec;
use conical_core::propagator::{FieldSampling, PropagatorConfig, Splitting};
use conical_core::semiclassical::{PathwayConfig, DEFAULT_SAMPLES};

use crate::error::{CtlError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum Scenario {
    SingleRun,
    KineticScan,
    GeometricCep,
    GeometricDelay,
    SemiclassicalScan,
    Convergence,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::SingleRun,
        Scenario::KineticScan,
        Scenario::GeometricCep,
        Scenario::GeometricDelay,
        Scenario::SemiclassicalScan,
        Scenario::Convergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::SingleRun => "single-run",
            Scenario::KineticScan => "kinetic-scan",
            Scenario::GeometricCep => "geometric-cep",
            Scenario::GeometricDelay => "geometric-delay",
            Scenario::SemiclassicalScan => "semiclassical-scan",
            Scenario::Convergence => "convergence",
        }
    }

    fn is_geometric(self) -> bool {
        matches!(self, Scenario::GeometricCep | Scenario::GeometricDelay)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Fidelity {
    Ci,
    Paper,
}

impl Fidelity {
    pub fn grid(self) -> GridSpec {
        match self {
            Fidelity::Ci => GridSpec::ci_tier(),
            Fidelity::Paper => GridSpec::paper_tier(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Fidelity::Ci => "ci",
            Fidelity::Paper => "paper",
        }
    }
}

/// When each delay-scan row is read out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observe {
    /// At the end of that row's pulse.
    PulseEnd,
    /// At one fixed time for every row, in fs.
    At(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KineticSettings {
    pub photon_energies: Vec<f64>,
    /// Peak field amplitudes in V/Å.
    pub amplitudes: Vec<f64>,
    /// Initial packet centres in Å.
    pub x0s: Vec<f64>,
    pub semiclassical_overlay: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricSettings {
    /// Multiplier applied to `model.lambda` in the geometric scenarios.
    pub lambda_scale: f64,
    pub ceps: Vec<f64>,
    pub delays: Vec<f64>,
    pub reference_delay: f64,
    pub lineouts: Vec<f64>,
    pub observe: Observe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemiclassicalSettings {
    pub photon_energies: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub pathway: PathwayConfig,
}

/// Fully resolved scenario configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub model: ModelParams,
    pub fidelity: Fidelity,
    pub grid: GridSpec,
    pub field: FieldSpec,
    pub propagation: PropagatorConfig,
    pub kinetic: KineticSettings,
    pub geometric: GeometricSettings,
    pub semiclassical: SemiclassicalSettings,
    pub convergence_levels: usize,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

/// One `key = value` line.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
    /// 1-based column of the value's first character.
    pub column: usize,
}

/// Parsed but uninterpreted key/value pairs with their locations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    pub origin: String,
    pub entries: BTreeMap<String, Entry>,
}

const KEYS: &[&str] = &[
    "scenario",
    "model.x2",
    "model.x1",
    "model.x0",
    "model.kappa_x1",
    "model.kappa_x2",
    "model.kappa_y1",
    "model.kappa_y2",
    "model.kappa_z1",
    "model.kappa_z2",
    "model.lambda",
    "model.e_offset",
    "model.mass",
    "model.mu",
    "grid.fidelity",
    "grid.n_x",
    "grid.n_y",
    "grid.n_z",
    "grid.x_min",
    "grid.x_max",
    "grid.y_min",
    "grid.y_max",
    "grid.z_min",
    "grid.z_max",
    "grid.offset_y",
    "field.kind",
    "field.amplitude_V_per_A",
    "field.photon_energy_eV",
    "field.cep_rad",
    "field.duration_fs",
    "field.delay_fs",
    "propagation.dt_fs",
    "propagation.t_end_fs",
    "propagation.observer_stride",
    "propagation.splitting",
    "propagation.field_sampling",
    "kinetic.photon_energies_eV",
    "kinetic.amplitudes_V_per_A",
    "kinetic.x0_A",
    "kinetic.semiclassical_overlay",
    "geometric.lambda_scale",
    "geometric.ceps_rad",
    "geometric.delays_fs",
    "geometric.reference_delay_fs",
    "geometric.lineouts_A",
    "geometric.observe_fs",
    "semiclassical.photon_energies_eV",
    "semiclassical.samples",
    "semiclassical.seed",
    "semiclassical.horizon_fs",
    "convergence.levels",
    "run.threads",
    "run.out_dir",
];

/// Decimal places kept when generating range values, so that `0.1:1.2:0.05`
/// yields the same doubles as typing the numbers out.
const RANGE_DIGITS: f64 = 1e12;

impl Document {
    pub fn parse(origin: &str, text: &str) -> Result<Self> {
        let mut doc = Document {
            origin: origin.to_string(),
            entries: BTreeMap::new(),
        };
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("");
            let trimmed = content.trim();
            if trimmed.is_empty() {
                continue;
            }
            let indent = content.len() - content.trim_start().len();
            if let Some(rest) = trimmed.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| {
                    doc.error_at(line, indent + 1, "section header is missing `]`")
                })?;
                let name = name.trim();
                if name.is_empty() || !name.chars().all(is_key_char) {
                    return Err(doc.error_at(line, indent + 2, "invalid section name"));
                }
                section = name.to_string();
                continue;
            }
            let eq = content
                .find('=')
                .ok_or_else(|| doc.error_at(line, indent + 1, "expected `key = value`"))?;
            let key = content[..eq].trim();
            if key.is_empty() || !key.chars().all(is_key_char) {
                return Err(doc.error_at(line, indent + 1, "invalid key"));
            }
            let after = &content[eq + 1..];
            let value = after.trim();
            let column = eq + 2 + (after.len() - after.trim_start().len());
            if value.is_empty() {
                return Err(doc.error_at(line, column, &format!("`{key}` has no value")));
            }
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            if let Some(prev) = doc.entries.get(&full) {
                return Err(doc.error_at(
                    line,
                    indent + 1,
                    &format!("`{full}` repeats line {}", prev.line),
                ));
            }
            doc.entries.insert(
                full,
                Entry {
                    value: value.to_string(),
                    line,
                    column,
                },
            );
        }
        Ok(doc)
    }

    fn error_at(&self, line: usize, column: usize, message: &str) -> CtlError {
        if line == 0 {
            // injected by a command-line override
            return CtlError::Config(format!("command line: {message}"));
        }
        CtlError::Config(format!("{}:{line}:{column}: {message}", self.origin))
    }

    fn value_error(&self, key: &str, entry: &Entry, message: &str) -> CtlError {
        self.error_at(entry.line, entry.column, &format!("{key}: {message}"))
    }
}

fn is_key_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-'
}

/// Closest known key to an unknown one, if any is reasonably close.
pub fn suggest(key: &str) -> Option<&'static str> {
    KEYS.iter()
        .map(|k| {
            // also compare against the key without its section
            let tail = k.rsplit('.').next().unwrap_or(k);
            let d = strsim::levenshtein(key, k).min(strsim::levenshtein(key, tail) + 1);
            (d, *k)
        })
        .min()
        .filter(|(d, _)| *d <= 3.max(key.len() / 4))
        .map(|(_, k)| k)
}

fn parse_number(token: &str) -> std::result::Result<f64, String> {
    let t = token.trim();
    if let Some(pos) = t.find("pi") {
        let coeff = match t[..pos].trim() {
            "" | "+" => 1.0,
            "-" => -1.0,
            c => c
                .parse::<f64>()
                .map_err(|_| format!("`{t}` is not a number"))?,
        };
        let rest = t[pos + 2..].trim();
        let div = if rest.is_empty() {
            1.0
        } else {
            rest.strip_prefix('/')
                .and_then(|d| d.trim().parse::<f64>().ok())
                .filter(|d| *d != 0.0)
                .ok_or_else(|| format!("`{t}` is not a number"))?
        };
        return Ok(coeff * std::f64::consts::PI / div);
    }
    let v = t
        .parse::<f64>()
        .map_err(|_| format!("`{t}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{t}` is not finite"))
    }
}

fn parse_list(value: &str) -> std::result::Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for item in value.split(',') {
        let item = item.trim();
        if item.is_empty() {
            return Err("empty list item".into());
        }
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [single] => out.push(parse_number(single)?),
            [a, b, step] => {
                let (a, b, step) = (parse_number(a)?, parse_number(b)?, parse_number(step)?);
                if !(step > 0.0) || b < a {
                    return Err(format!(
                        "range `{item}` needs start ≤ stop and a positive step"
                    ));
                }
                let n = ((b - a) / step + 1e-9).floor() as usize;
                if n > 1_000_000 {
                    return Err(format!("range `{item}` has too many points"));
                }
                out.extend(
                    (0..=n)
                        .map(|k| (((a + step * k as f64) * RANGE_DIGITS).round()) / RANGE_DIGITS),
                );
            }
            _ => return Err(format!("`{item}` is neither a number nor start:stop:step")),
        }
    }
    Ok(out)
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        _ => Err(format!("`{value}` is not true/false")),
    }
}

fn parse_count(value: &str) -> std::result::Result<usize, String> {
    value
        .parse::<usize>()
        .map_err(|_| format!("`{value}` is not a non-negative integer"))
}

fn parse_scenario(value: &str) -> std::result::Result<Scenario, String> {
    Scenario::ALL
        .into_iter()
        .find(|s| s.name() == value)
        .ok_or_else(|| {
            let names: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
            format!(
                "unknown scenario `{value}` (expected one of {})",
                names.join(", ")
            )
        })
}

impl ScenarioConfig {
    /// Defaults for a scenario before any keys are applied.
    pub fn defaults(scenario: Scenario) -> Self {
        let model = ModelParams::default();
        let photon_energies = parse_list("0.1:1.2:0.05").expect("valid literal");
        let field = if scenario.is_geometric() {
            FieldSpec::pulsed(FieldSpec::GIGAVOLT_PER_METRE, 1.0, 0.0, 6.0, 24.0)
        } else {
            FieldSpec::continuous(FieldSpec::GIGAVOLT_PER_METRE, 0.55)
        };
        Self {
            scenario,
            model,
            fidelity: Fidelity::Ci,
            grid: Fidelity::Ci.grid(),
            field,
            propagation: PropagatorConfig {
                observer_stride: 10,
                ..PropagatorConfig::default()
            },
            kinetic: KineticSettings {
                photon_energies: photon_energies.clone(),
                amplitudes: vec![FieldSpec::GIGAVOLT_PER_METRE],
                x0s: vec![model.x0],
                semiclassical_overlay: false,
            },
            geometric: GeometricSettings {
                lambda_scale: 10.0,
                ceps: vec![0.0, std::f64::consts::FRAC_PI_2, std::f64::consts::PI],
                delays: parse_list("24:41:0.25").expect("valid literal"),
                reference_delay: 41.0,
                lineouts: vec![0.18, -0.18],
                observe: Observe::PulseEnd,
            },
            semiclassical: SemiclassicalSettings {
                photon_energies,
                samples: DEFAULT_SAMPLES,
                seed: 1,
                pathway: PathwayConfig::default(),
            },
            convergence_levels: 3,
            threads: None,
            out_dir: None,
        }
    }

    /// Reads and resolves a config file.
    pub fn load(path: &Path, scenario: Option<Scenario>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CtlError::io(path, e))?;
        let doc = Document::parse(&path.display().to_string(), &text)?;
        Self::from_document(&doc, scenario, &[])
    }

    /// Resolves a document. `overrides` are applied as if they were extra
    /// lines of the file (they replace keys of the same name).
    pub fn from_document(
        doc: &Document,
        scenario: Option<Scenario>,
        overrides: &[(&str, String)],
    ) -> Result<Self> {
        let mut doc = doc.clone();
        for (key, value) in overrides {
            doc.entries.insert(
                key.to_string(),
                Entry {
                    value: value.clone(),
                    line: 0,
                    column: 0,
                },
            );
        }
        for (key, entry) in &doc.entries {
            if key.starts_with("manifest.") || KEYS.contains(&key.as_str()) {
                continue;
            }
            let hint = suggest(key)
                .map(|k| format!("; did you mean `{k}`?"))
                .unwrap_or_default();
            return Err(doc.error_at(entry.line, 1, &format!("unknown key `{key}`{hint}")));
        }

        let from_file = match doc.entries.get("scenario") {
            Some(e) => {
                Some(parse_scenario(&e.value).map_err(|m| doc.value_error("scenario", e, &m))?)
            }
            None => None,
        };
        let scenario = match (scenario, from_file) {
            (Some(cli), Some(file)) if cli != file => {
                return Err(CtlError::Config(format!(
                    "scenario: the command line asks for `{cli}` but {} says `{file}`",
                    doc.origin
                )))
            }
            (Some(s), _) | (None, Some(s)) => s,
            (None, None) => Scenario::SingleRun,
        };

        let mut cfg = Self::defaults(scenario);
        if let Some(e) = doc.entries.get("grid.fidelity") {
            cfg.fidelity = match e.value.as_str() {
                "ci" => Fidelity::Ci,
                "paper" => Fidelity::Paper,
                v => {
                    return Err(doc.value_error(
                        "grid.fidelity",
                        e,
                        &format!("`{v}` is not ci or paper"),
                    ))
                }
            };
            cfg.grid = cfg.fidelity.grid();
        }
        // model keys first so that defaults derived from the model see them
        let mut ordered: Vec<(&String, &Entry)> = doc.entries.iter().collect();
        ordered.sort_by_key(|(k, e)| (!k.starts_with("model."), e.line));
        let mut set = HashSet::new();
        for (key, entry) in ordered {
            if key == "scenario" || key == "grid.fidelity" || key.starts_with("manifest.") {
                continue;
            }
            cfg.apply(key, &entry.value)
                .map_err(|m| doc.value_error(key, entry, &m))?;
            set.insert(key.as_str());
        }
        if !set.contains("kinetic.x0_A") {
            cfg.kinetic.x0s = vec![cfg.model.x0];
        }
        if !set.contains("semiclassical.photon_energies_eV") {
            // a static-field point has no resonance to pass through
            cfg.semiclassical.photon_energies = cfg
                .kinetic
                .photon_energies
                .iter()
                .copied()
                .filter(|e| *e > 0.0)
                .collect();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let num = || parse_number(v);
        let list = || parse_list(v);
        match key {
            "model.x2" => self.model.x2 = num()?,
            "model.x1" => self.model.x1 = num()?,
            "model.x0" => self.model.x0 = num()?,
            "model.kappa_x1" => self.model.kappa_x1 = num()?,
            "model.kappa_x2" => self.model.kappa_x2 = num()?,
            "model.kappa_y1" => self.model.kappa_y1 = num()?,
            "model.kappa_y2" => self.model.kappa_y2 = num()?,
            "model.kappa_z1" => self.model.kappa_z1 = num()?,
            "model.kappa_z2" => self.model.kappa_z2 = num()?,
            "model.lambda" => self.model.lambda = num()?,
            "model.e_offset" => self.model.e_offset = num()?,
            "model.mass" => self.model.mass = num()?,
            "model.mu" => self.model.mu = num()?,
            "grid.n_x" => self.grid.n[0] = parse_count(v)?,
            "grid.n_y" => self.grid.n[1] = parse_count(v)?,
            "grid.n_z" => self.grid.n[2] = parse_count(v)?,
            "grid.x_min" => self.grid.lo[0] = num()?,
            "grid.x_max" => self.grid.hi[0] = num()?,
            "grid.y_min" => self.grid.lo[1] = num()?,
            "grid.y_max" => self.grid.hi[1] = num()?,
            "grid.z_min" => self.grid.lo[2] = num()?,
            "grid.z_max" => self.grid.hi[2] = num()?,
            "grid.offset_y" => self.grid.offset_y = parse_bool(v)?,
            "field.kind" => {
                self.field.kind = match v {
                    "off" => FieldKind::Off,
                    "continuous" => FieldKind::Continuous,
                    "pulsed" => FieldKind::Pulsed,
                    _ => return Err(format!("`{v}` is not off, continuous or pulsed")),
                }
            }
            "field.amplitude_V_per_A" => self.field.amplitude = num()?,
            "field.photon_energy_eV" => self.field.photon_energy = num()?,
            "field.cep_rad" => self.field.cep = num()?,
            "field.duration_fs" => self.field.duration = num()?,
            "field.delay_fs" => self.field.delay = num()?,
            "propagation.dt_fs" => self.propagation.dt = num()?,
            "propagation.t_end_fs" => self.propagation.t_end = num()?,
            "propagation.observer_stride" => self.propagation.observer_stride = parse_count(v)?,
            "propagation.splitting" => {
                self.propagation.splitting = match v {
                    "lie" => Splitting::Lie,
                    "strang" => Splitting::Strang,
                    _ => return Err(format!("`{v}` is not lie or strang")),
                }
            }
            "propagation.field_sampling" => {
                self.propagation.field_sampling = match v {
                    "step-start" => FieldSampling::StepStart,
                    "midpoint" => FieldSampling::Midpoint,
                    _ => return Err(format!("`{v}` is not step-start or midpoint")),
                }
            }
            "kinetic.photon_energies_eV" => self.kinetic.photon_energies = list()?,
            "kinetic.amplitudes_V_per_A" => self.kinetic.amplitudes = list()?,
            "kinetic.x0_A" => self.kinetic.x0s = list()?,
            "kinetic.semiclassical_overlay" => self.kinetic.semiclassical_overlay = parse_bool(v)?,
            "geometric.lambda_scale" => self.geometric.lambda_scale = num()?,
            "geometric.ceps_rad" => self.geometric.ceps = list()?,
            "geometric.delays_fs" => self.geometric.delays = list()?,
            "geometric.reference_delay_fs" => self.geometric.reference_delay = num()?,
            "geometric.lineouts_A" => self.geometric.lineouts = list()?,
            "geometric.observe_fs" => {
                self.geometric.observe = match v {
                    "pulse-end" => Observe::PulseEnd,
                    _ => Observe::At(num()?),
                }
            }
            "semiclassical.photon_energies_eV" => self.semiclassical.photon_energies = list()?,
            "semiclassical.samples" => self.semiclassical.samples = parse_count(v)?,
            "semiclassical.seed" => {
                self.semiclassical.seed = v
                    .parse()
                    .map_err(|_| format!("`{v}` is not a non-negative integer"))?
            }
            "semiclassical.horizon_fs" => self.semiclassical.pathway.horizon = num()?,
            "convergence.levels" => self.convergence_levels = parse_count(v)?,
            "run.threads" => self.threads = Some(parse_count(v)?),
            "run.out_dir" => self.out_dir = Some(PathBuf::from(v)),
            _ => unreachable!("key list and match arms disagree on `{key}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(CtlError::Config(format!("{key}: {msg}")));
        self.model.validate()?;
        self.grid.validate()?;
        self.field.validate()?;
        self.propagation.validate()?;
        let positive = |xs: &[f64]| xs.iter().all(|x| *x > 0.0);
        let non_negative = |xs: &[f64]| xs.iter().all(|x| *x >= 0.0);
        if self.kinetic.photon_energies.is_empty() || !non_negative(&self.kinetic.photon_energies) {
            return bad(
                "kinetic.photon_energies_eV",
                "needs at least one non-negative value",
            );
        }
        if self.kinetic.amplitudes.is_empty() || !non_negative(&self.kinetic.amplitudes) {
            return bad(
                "kinetic.amplitudes_V_per_A",
                "needs at least one non-negative value",
            );
        }
        if self.kinetic.x0s.is_empty() {
            return bad("kinetic.x0_A", "needs at least one value");
        }
        if !(self.geometric.lambda_scale.is_finite() && self.geometric.lambda_scale >= 0.0) {
            return bad("geometric.lambda_scale", "must be non-negative");
        }
        if self.geometric.ceps.is_empty() {
            return bad("geometric.ceps_rad", "needs at least one value");
        }
        if self.geometric.delays.is_empty() || !non_negative(&self.geometric.delays) {
            return bad(
                "geometric.delays_fs",
                "needs at least one non-negative value",
            );
        }
        if self.geometric.delays.windows(2).any(|w| w[1] <= w[0]) {
            return bad("geometric.delays_fs", "must be strictly increasing");
        }
        if !self
            .geometric
            .delays
            .iter()
            .any(|d| (d - self.geometric.reference_delay).abs() < 1e-9)
        {
            return bad(
                "geometric.reference_delay_fs",
                "must be one of geometric.delays_fs",
            );
        }
        let (ylo, yhi) = (self.grid.lo[1], self.grid.hi[1]);
        if self.geometric.lineouts.iter().any(|y| *y < ylo || *y > yhi) {
            return bad(
                "geometric.lineouts_A",
                "values must lie inside the y range of the grid",
            );
        }
        if let Observe::At(t) = self.geometric.observe {
            let last = self.geometric.delays.last().copied().unwrap_or(0.0);
            if self.scenario == Scenario::GeometricDelay && t < last + self.field.duration {
                return bad(
                    "geometric.observe_fs",
                    "must not precede the end of the last delayed pulse",
                );
            }
        }
        if self.semiclassical.photon_energies.is_empty()
            || !positive(&self.semiclassical.photon_energies)
        {
            return bad(
                "semiclassical.photon_energies_eV",
                "needs at least one positive value",
            );
        }
        if self.semiclassical.samples == 0 {
            return bad("semiclassical.samples", "must be at least 1");
        }
        if !(self.semiclassical.pathway.horizon > 0.0) {
            return bad("semiclassical.horizon_fs", "must be positive");
        }
        if self.convergence_levels < 2 {
            return bad("convergence.levels", "must be at least 2");
        }
        if self.threads == Some(0) {
            return bad("run.threads", "must be at least 1");
        }
        if self.scenario.is_geometric() && self.field.kind != FieldKind::Pulsed {
            return bad("field.kind", "the geometric scenarios need a pulsed field");
        }
        Ok(())
    }

    /// Model used by the runs of this scenario, with the geometric coupling
    /// override applied.
    pub fn effective_model(&self) -> ModelParams {
        let mut m = self.model;
        if self.scenario.is_geometric() {
            m.lambda *= self.geometric.lambda_scale;
        }
        m
    }

    /// Every resolved key in config syntax, grouped by section.
    pub fn to_kv(&self) -> String {
        let list = |xs: &[f64]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let m = &self.model;
        let g = &self.grid;
        let f = &self.field;
        let p = &self.propagation;
        let mut out = String::new();
        let _ = writeln!(out, "scenario = {}", self.scenario);
        let sections: Vec<(&str, Vec<(&str, String)>)> = vec![
            (
                "model",
                vec![
                    ("x2", m.x2.to_string()),
                    ("x1", m.x1.to_string()),
                    ("x0", m.x0.to_string()),
                    ("kappa_x1", m.kappa_x1.to_string()),
                    ("kappa_x2", m.kappa_x2.to_string()),
                    ("kappa_y1", m.kappa_y1.to_string()),
                    ("kappa_y2", m.kappa_y2.to_string()),
                    ("kappa_z1", m.kappa_z1.to_string()),
                    ("kappa_z2", m.kappa_z2.to_string()),
                    ("lambda", m.lambda.to_string()),
                    ("e_offset", m.e_offset.to_string()),
                    ("mass", m.mass.to_string()),
                    ("mu", m.mu.to_string()),
                ],
            ),
            (
                "grid",
                vec![
                    ("fidelity", self.fidelity.name().to_string()),
                    ("n_x", g.n[0].to_string()),
                    ("n_y", g.n[1].to_string()),
                    ("n_z", g.n[2].to_string()),
                    ("x_min", g.lo[0].to_string()),
                    ("x_max", g.hi[0].to_string()),
                    ("y_min", g.lo[1].to_string()),
                    ("y_max", g.hi[1].to_string()),
                    ("z_min", g.lo[2].to_string()),
                    ("z_max", g.hi[2].to_string()),
                    ("offset_y", g.offset_y.to_string()),
                ],
            ),
            (
                "field",
                vec![
                    (
                        "kind",
                        match f.kind {
                            FieldKind::Off => "off",
                            FieldKind::Continuous => "continuous",
                            FieldKind::Pulsed => "pulsed",
                        }
                        .to_string(),
                    ),
                    ("amplitude_V_per_A", f.amplitude.to_string()),
                    ("photon_energy_eV", f.photon_energy.to_string()),
                    ("cep_rad", f.cep.to_string()),
                    ("duration_fs", f.duration.to_string()),
                    ("delay_fs", f.delay.to_string()),
                ],
            ),
            (
                "propagation",
                vec![
                    ("dt_fs", p.dt.to_string()),
                    ("t_end_fs", p.t_end.to_string()),
                    ("observer_stride", p.observer_stride.to_string()),
                    (
                        "splitting",
                        match p.splitting {
                            Splitting::Lie => "lie",
                            Splitting::Strang => "strang",
                        }
                        .to_string(),
                    ),
                    (
                        "field_sampling",
                        match p.field_sampling {
                            FieldSampling::StepStart => "step-start",
                            FieldSampling::Midpoint => "midpoint",
                        }
                        .to_string(),
                    ),
                ],
            ),
            (
                "kinetic",
                vec![
                    ("photon_energies_eV", list(&self.kinetic.photon_energies)),
                    ("amplitudes_V_per_A", list(&self.kinetic.amplitudes)),
                    ("x0_A", list(&self.kinetic.x0s)),
                    (
                        "semiclassical_overlay",
                        self.kinetic.semiclassical_overlay.to_string(),
                    ),
                ],
            ),
            (
                "geometric",
                vec![
                    ("lambda_scale", self.geometric.lambda_scale.to_string()),
                    ("ceps_rad", list(&self.geometric.ceps)),
                    ("delays_fs", list(&self.geometric.delays)),
                    (
                        "reference_delay_fs",
                        self.geometric.reference_delay.to_string(),
                    ),
                    ("lineouts_A", list(&self.geometric.lineouts)),
                    (
                        "observe_fs",
                        match self.geometric.observe {
                            Observe::PulseEnd => "pulse-end".to_string(),
                            Observe::At(t) => t.to_string(),
                        },
                    ),
                ],
            ),
            (
                "semiclassical",
                vec![
                    (
                        "photon_energies_eV",
                        list(&self.semiclassical.photon_energies),
                    ),
                    ("samples", self.semiclassical.samples.to_string()),
                    ("seed", self.semiclassical.seed.to_string()),
                    ("horizon_fs", self.semiclassical.pathway.horizon.to_string()),
                ],
            ),
            (
                "convergence",
                vec![("levels", self.convergence_levels.to_string())],
            ),
        ];
        for (name, keys) in sections {
            let _ = writeln!(out, "\n[{name}]");
            for (k, v) in keys {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        let mut run = Vec::new();
        if let Some(t) = self.threads {
            run.push(format!("threads = {t}"));
        }
        if let Some(d) = &self.out_dir {
            run.push(format!("out_dir = {}", d.display()));
        }
        if !run.is_empty() {
            let _ = writeln!(out, "\n[run]\n{}", run.join("\n"));
        }
        out
    }
}
