use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use conical_ctl::config::{Scenario, ScenarioConfig};

const TINY: &str = "\
[grid]
n_x = 32
n_y = 16
n_z = 8

[propagation]
dt_fs = 0.1
t_end_fs = 3
";

fn ctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conical-ctl"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(scenario: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        scenario,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    ctl(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

/// Manifest lines without the timing fields.
fn stable_manifest(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| {
            !["started_unix_s", "wall_clock_s", "out_dir"]
                .iter()
                .any(|k| l.starts_with(k))
        })
        .map(String::from)
        .collect()
}

#[test]
fn single_run_writes_trace_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.kv", TINY);
    let out = dir.path().join("out");
    let o = run("single-run", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("single-run.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("t_fs,p_ground,p_excited,norm"));
    let rows = read_csv(&out.join("single-run.csv"));
    assert!((rows.last().unwrap()[0] - 3.0).abs() < 1e-9);
    for r in &rows {
        assert!((r[1] + r[2] - r[3]).abs() < 1e-9);
    }
    let manifest = fs::read_to_string(out.join("manifest.kv")).unwrap();
    for key in [
        "\nmu = ",
        "\nlambda = ",
        "\nwall_clock_s = ",
        "\nnorm_drift_max = ",
    ] {
        assert!(manifest.contains(key), "manifest lacks {key}");
    }
}

#[test]
fn identical_configs_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.kv",
        &format!("{TINY}\n[kinetic]\nphoton_energies_eV = 0.3, 0.6\nsemiclassical_overlay = true\n[semiclassical]\nsamples = 50\n"),
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run("kinetic-scan", &cfg, &a, &[]).status.success());
    assert!(run("kinetic-scan", &cfg, &b, &[]).status.success());
    for name in ["kinetic-scan.csv", "kinetic-scan-traces.csv"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    assert_eq!(
        stable_manifest(&a.join("manifest.kv")),
        stable_manifest(&b.join("manifest.kv"))
    );
}

#[test]
fn scan_points_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.kv",
        &format!(
            "{TINY}\n[kinetic]\nphoton_energies_eV = 0.2:0.8:0.2\namplitudes_V_per_A = 0.1, 0.2\n"
        ),
    );
    let (serial, parallel) = (dir.path().join("serial"), dir.path().join("parallel"));
    assert!(run("kinetic-scan", &cfg, &serial, &["--threads", "1"])
        .status
        .success());
    assert!(run("kinetic-scan", &cfg, &parallel, &["--threads", "3"])
        .status
        .success());
    let rows = read_csv(&serial.join("kinetic-scan.csv"));
    assert_eq!(rows.len(), 8);
    assert_eq!(
        fs::read(serial.join("kinetic-scan.csv")).unwrap(),
        fs::read(parallel.join("kinetic-scan.csv")).unwrap()
    );
}

#[test]
fn manifest_reloads_to_the_same_config_and_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.kv",
        &format!("{TINY}\n[model]\nmu = 0.7\n[field]\nphoton_energy_eV = 0.4\n"),
    );
    let first = dir.path().join("first");
    assert!(run("single-run", &cfg, &first, &[]).status.success());
    let manifest = first.join("manifest.kv");
    let second = dir.path().join("second");
    let o = run("single-run", &manifest, &second, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(first.join("single-run.csv")).unwrap(),
        fs::read(second.join("single-run.csv")).unwrap()
    );
    let a = ScenarioConfig::load(&manifest, Some(Scenario::SingleRun)).unwrap();
    let b = ScenarioConfig::load(&second.join("manifest.kv"), Some(Scenario::SingleRun)).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.field, b.field);
    assert_eq!(a.grid, b.grid);
    assert_eq!(a.model.mu, 0.7);
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let typo = write_config(dir.path(), "typo.kv", "field.photon_energy_ev = 0.5\n");
    let o = run("single-run", &typo, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("field.photon_energy_eV"),
        "{}",
        stderr(&o)
    );

    let negative = write_config(dir.path(), "neg.kv", "field.photon_energy_eV = -1\n");
    let o = run("single-run", &negative, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("photon_energy_eV"), "{}", stderr(&o));

    let garbled = write_config(dir.path(), "bad.kv", "[grid]\nn_x 32\n");
    let o = run("single-run", &garbled, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.kv:2:"), "{}", stderr(&o));

    let o = run("single-run", &dir.path().join("missing.kv"), &out, &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.kv", TINY);
    let blocker = write_config(dir.path(), "file", "");
    let o = run("single-run", &cfg, &blocker.join("sub"), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn failed_points_are_reported_and_the_rest_written() {
    let dir = tempfile::tempdir().unwrap();
    // The second starting point lies far outside the grid.
    let cfg = write_config(
        dir.path(),
        "c.kv",
        &format!("{TINY}\n[kinetic]\nphoton_energies_eV = 0.5\nx0_A = -1.2, -40\n"),
    );
    let out = dir.path().join("out");
    let o = run("kinetic-scan", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let rows = read_csv(&out.join("kinetic-scan.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][2], -1.2);
    let manifest = fs::read_to_string(out.join("manifest.kv")).unwrap();
    assert!(manifest.contains("failure.0 = "), "{manifest}");
}

#[test]
fn semiclassical_scan_columns_are_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.kv",
        "[semiclassical]\nphoton_energies_eV = 0.2:1.2:0.2\nsamples = 200\n",
    );
    let out = dir.path().join("out");
    let o = run("semiclassical-scan", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&out.join("semiclassical-scan.csv"));
    assert_eq!(rows.len(), 6);
    for r in &rows {
        for p in &r[1..5] {
            assert!((0.0..=1.0).contains(p), "{r:?}");
        }
    }
    assert!(rows.windows(2).all(|w| w[1][6] < w[0][6]));
}

#[test]
fn delay_map_vanishes_at_the_reference() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.kv",
        &format!(
            "{TINY}\n[geometric]\ndelays_fs = 1:2:0.5\nreference_delay_fs = 2\nobserve_fs = 9\n"
        ),
    );
    let out = dir.path().join("out");
    let o = run("geometric-delay", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&out.join("geometric-delay.csv"));
    let reference: Vec<_> = rows.iter().filter(|r| r[0] == 2.0).collect();
    assert_eq!(reference.len(), 16);
    assert!(reference.iter().all(|r| r[4] == 0.0));
    assert!(rows.iter().all(|r| r[1] == 9.0));
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "kv") {
            let cfg = ScenarioConfig::load(&path, None)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let stem = path.file_stem().unwrap().to_str().unwrap();
            assert_eq!(cfg.scenario.name(), stem);
            seen += 1;
        }
    }
    assert_eq!(seen, Scenario::ALL.len() - 1);
}
