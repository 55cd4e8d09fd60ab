use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;
use conical_ctl::config::{Document, Fidelity, Scenario, ScenarioConfig};
use conical_ctl::error::{CtlError, EXIT_PARTIAL};
use conical_ctl::{output, scenario};

/// Wavepacket control near a conical intersection.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    scenario: Scenario,
    /// Key-value config file; `manifest.kv` from an earlier run also works.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `run.out_dir` or `out/<scenario>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    fidelity: Option<Fidelity>,
    /// Worker threads; defaults to `run.threads`, then all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn load(cli: &Cli) -> conical_ctl::Result<ScenarioConfig> {
    let origin = cli.config.display().to_string();
    let text = std::fs::read_to_string(&cli.config).map_err(|e| CtlError::Io {
        path: cli.config.clone(),
        source: e,
    })?;
    let doc = Document::parse(&origin, &text)?;
    let mut overrides = Vec::new();
    if let Some(f) = cli.fidelity {
        overrides.push(("grid.fidelity", f.name().to_string()));
    }
    if let Some(n) = cli.threads {
        overrides.push(("run.threads", n.to_string()));
    }
    if let Some(dir) = &cli.out {
        overrides.push(("run.out_dir", dir.display().to_string()));
    }
    ScenarioConfig::from_document(&doc, Some(cli.scenario), &overrides)
}

fn execute(cli: &Cli) -> conical_ctl::Result<usize> {
    let cfg = load(cli)?;
    let dir = cfg
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.scenario.name()));
    output::prepare_dir(&dir)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CtlError::Config(format!("run.threads: {e}")))?;
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    log::info!(
        "{} on a {:?} grid with {} threads",
        cfg.scenario,
        cfg.grid.n,
        pool.current_num_threads()
    );
    let outcome = pool.install(|| scenario::run(&cfg))?;
    let written = output::emit(&dir, &cfg, &outcome, clock.elapsed().as_secs_f64(), started)?;
    for path in written {
        println!("{}", path.display());
    }
    for f in &outcome.failures {
        eprintln!("failed point: {f}");
    }
    Ok(outcome.failures.len())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(EXIT_PARTIAL as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
