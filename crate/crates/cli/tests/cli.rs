//! End-to-end tests of the `rydex` binary: exit codes, artifact layout,
//! provenance stamping, quarantine routing, and input-format handling.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const HC_EV_NM: f64 = 1239.8419843320026;

fn rydex(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rydex"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Reads `name,value,...` rows from an artifact table, skipping headers.
fn value_of(path: &Path, name: &str) -> f64 {
    let text = fs::read_to_string(path).unwrap_or_else(|_| panic!("readable {path:?}"));
    for line in text.lines().filter(|l| !l.starts_with('#')) {
        let mut cells = line.split(',');
        if cells.next() == Some(name) {
            let raw = cells.next().unwrap_or_else(|| panic!("row '{name}' has a value"));
            return raw.parse().unwrap_or_else(|_| panic!("numeric '{raw}' for '{name}'"));
        }
    }
    panic!("row '{name}' not found in {path:?}");
}

fn write_two_peak_model(dir: &Path) -> String {
    let body = "name,value\n\
                center_1,2.03\nwidth_1,0.005\namp_1,0.8\nq_1,0\n\
                center_2,2.07\nwidth_2,0.005\namp_2,0.5\nq_2,0\n";
    fs::write(dir.join("model.csv"), body).unwrap();
    "model.csv".to_string()
}

fn simulate_two_peaks(dir: &Path, out: &str, noise: &str) {
    let model = write_two_peak_model(dir);
    let run = rydex(
        dir,
        &[
            "simulate", "--out-dir", out, "--seed", "9",
            "--set", "model=file",
            "--set", &format!("model_file={model}"),
            "--set", "grid_min_ev=2.0", "--set", "grid_max_ev=2.1",
            "--set", "grid_points=201",
            "--set", &format!("noise={noise}"),
        ],
    );
    assert_eq!(code(&run), 0, "simulate failed: {}", stderr(&run));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = rydex(dir.path(), &["frobnicate"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn help_and_version_succeed() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&rydex(dir.path(), &["--help"])), 0);
    assert_eq!(code(&rydex(dir.path(), &["--version"])), 0);
}

#[test]
fn unknown_config_keys_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = rydex(dir.path(), &["simulate", "--set", "nope=1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unknown key 'nope'"), "got: {}", stderr(&out));
}

#[test]
fn malformed_set_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = rydex(dir.path(), &["simulate", "--set", "grid_points"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("KEY=VALUE"), "got: {}", stderr(&out));
}

#[test]
fn missing_input_files_are_data_errors_with_a_quarantine_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = rydex(dir.path(), &["fit", "--input", "absent.csv", "--out-dir", "run"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("absent.csv"), "got: {}", stderr(&out));
    let record = dir.path().join("run/quarantine/provenance.txt");
    let text = fs::read_to_string(&record).expect("failed run leaves a record");
    assert!(text.contains("error:"), "got: {text}");
    assert!(!dir.path().join("run/params.csv").exists());
}

#[test]
fn spectrum_parse_errors_carry_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.csv"),
        "# units: energy_eV\n2.0,1.0\n2.1,2.0\n2.2,not_a_number\n",
    )
    .unwrap();
    let out = rydex(dir.path(), &["fit", "--input", "bad.csv"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("bad.csv:4"), "got: {}", stderr(&out));
}

#[test]
fn missing_units_header_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("nounits.csv"), "2.0,1.0\n2.1,2.0\n").unwrap();
    let out = rydex(dir.path(), &["fit", "--input", "nounits.csv"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("units"), "got: {}", stderr(&out));
}

#[test]
fn non_convergence_exits_4_but_keeps_artifacts_out_of_quarantine() {
    let dir = tempfile::tempdir().unwrap();
    simulate_two_peaks(dir.path(), "sim", "0.5");
    let out = rydex(
        dir.path(),
        &[
            "fit", "--input", "sim/spectrum.csv", "--out-dir", "run",
            "--set", "peaks=2", "--set", "mode=free",
            "--set", "max_iterations=1",
        ],
    );
    assert_eq!(code(&out), 4, "got: {}", stderr(&out));
    assert!(stderr(&out).contains("did not converge"), "got: {}", stderr(&out));
    assert!(dir.path().join("run/params.csv").exists());
    assert!(dir.path().join("run/curve.csv").exists());
    assert!(!dir.path().join("run/quarantine").exists());
}

#[test]
fn free_fit_recovers_a_synthetic_two_peak_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    simulate_two_peaks(dir.path(), "sim", "0.5");
    let out = rydex(
        dir.path(),
        &[
            "fit", "--input", "sim/spectrum.csv", "--out-dir", "run",
            "--set", "peaks=2", "--set", "mode=free",
        ],
    );
    assert_eq!(code(&out), 0, "got: {}", stderr(&out));
    let params = dir.path().join("run/params.csv");
    assert!((value_of(&params, "center_1") - 2.03).abs() < 1e-3);
    assert!((value_of(&params, "center_2") - 2.07).abs() < 1e-3);
    assert!((value_of(&params, "amp_1") - 0.8).abs() < 0.05);
}

#[test]
fn config_file_is_applied_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_two_peak_model(dir.path());
    fs::write(
        dir.path().join("run.conf"),
        format!(
            "# spectrum synthesis settings\n\
             seed = 1\n\
             model = file\n\
             model_file = {model}  # inline comment\n\
             grid_points = 101\n\
             grid_min_ev = 2.0\n\
             grid_max_ev = 2.1\n"
        ),
    )
    .unwrap();
    let out = rydex(
        dir.path(),
        &["simulate", "--config", "run.conf", "--out-dir", "sim", "--seed", "2"],
    );
    assert_eq!(code(&out), 0, "got: {}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("sim/spectrum.csv")).unwrap();
    // The dedicated flag wins over the config file.
    assert!(text.contains("# seed: 2"), "got headers: {text:.400}");
    assert!(text.contains("# config: grid_points = 101"));
}

#[test]
fn set_flags_lose_to_dedicated_flags() {
    let dir = tempfile::tempdir().unwrap();
    simulate_two_peaks(dir.path(), "sim", "0");
    let out = rydex(
        dir.path(),
        &["simulate", "--out-dir", "sim2", "--set", "seed=3", "--seed", "4"],
    );
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(dir.path().join("sim2/spectrum.csv")).unwrap();
    assert!(text.contains("# seed: 4"), "got: {text:.400}");
}

#[test]
fn duplicate_config_keys_are_rejected_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("dup.conf"), "seed = 1\nseed = 2\n").unwrap();
    let out = rydex(dir.path(), &["simulate", "--config", "dup.conf"]);
    assert_eq!(code(&out), 2);
    let msg = stderr(&out);
    assert!(msg.contains("dup.conf:2") && msg.contains("line 1"), "got: {msg}");
}

#[test]
fn artifacts_carry_provenance_headers() {
    let dir = tempfile::tempdir().unwrap();
    simulate_two_peaks(dir.path(), "sim", "0");
    let text = fs::read_to_string(dir.path().join("sim/spectrum.csv")).unwrap();
    assert!(text.starts_with("# generated_by: rydex "));
    assert!(text.contains("# task: simulate"));
    assert!(text.contains("# seed: 9"));
    assert!(text.contains("# config_hash: fnv1a64:"));
    assert!(text.contains("# units: energy_eV"));
    // Config echo lines are sorted by key.
    let keys: Vec<&str> = text
        .lines()
        .filter_map(|l| l.strip_prefix("# config: "))
        .map(|l| l.split(" = ").next().unwrap())
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_unstable();
    assert!(!keys.is_empty() && keys == sorted, "unsorted config echo: {keys:?}");
}

#[test]
fn reruns_with_identical_config_and_seed_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    simulate_two_peaks(dir.path(), "a", "0.5");
    simulate_two_peaks(dir.path(), "b", "0.5");
    for name in ["spectrum.csv", "clean.csv", "truth.csv"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical reruns");
    }
}

#[test]
fn wavelength_input_is_converted_and_noted_in_provenance() {
    let dir = tempfile::tempdir().unwrap();
    // Symmetric resonance sampled on a uniform energy grid, written as an
    // ascending-wavelength (descending-energy), tab-separated file.
    let (center, width, amp) = (2.05_f64, 0.01_f64, 0.5_f64);
    let mut rows = Vec::new();
    for i in 0..201 {
        let e = 2.0 + 0.1 * i as f64 / 200.0;
        let x = e - center;
        let v = amp * (width / 2.0) / ((width / 2.0).powi(2) + x * x);
        rows.push((HC_EV_NM / e, v));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut text = String::from("# units: wavelength_nm\n");
    for (w, v) in rows {
        text.push_str(&format!("{w}\t{v}\n"));
    }
    fs::write(dir.path().join("wl.tsv"), text).unwrap();

    let out = rydex(
        dir.path(),
        &[
            "fit", "--input", "wl.tsv", "--out-dir", "run",
            "--set", "peaks=1", "--set", "mode=free", "--set", "background=false",
        ],
    );
    assert_eq!(code(&out), 0, "got: {}", stderr(&out));
    let params = dir.path().join("run/params.csv");
    assert!((value_of(&params, "center_1") - center).abs() < 1e-6);
    assert!((value_of(&params, "width_1") - width).abs() < 1e-6);
    let log = fs::read_to_string(dir.path().join("run/provenance.txt")).unwrap();
    assert!(log.contains("reversed to ascending energy"), "got: {log}");
}

#[test]
fn select_model_emits_selection_curves_and_posterior() {
    let dir = tempfile::tempdir().unwrap();
    simulate_two_peaks(dir.path(), "sim", "8");
    let out = rydex(
        dir.path(),
        &[
            "select-model", "--input", "sim/spectrum.csv", "--out-dir", "run",
            "--seed", "5",
            "--set", "candidates=2", "--set", "burn_in=100", "--set", "samples=200",
        ],
    );
    assert_eq!(code(&out), 0, "got: {}", stderr(&out));
    assert!(dir.path().join("run/selection.csv").exists());
    assert!(dir.path().join("run/fcurve_2.csv").exists());
    assert!(dir.path().join("run/posterior_2.csv").exists());
    let selection = fs::read_to_string(dir.path().join("run/selection.csv")).unwrap();
    let row = selection.lines().find(|l| l.starts_with("2,")).expect("candidate row");
    assert!(row.ends_with(",1"), "sole candidate must be selected: {row}");
}

#[test]
fn simulated_center_tables_cover_levels_and_temperatures() {
    let dir = tempfile::tempdir().unwrap();
    let out = rydex(
        dir.path(),
        &[
            "simulate", "--out-dir", "cent",
            "--set", "kind=centers", "--set", "levels=2,3,4",
            "--set", "temp_min_k=10", "--set", "temp_max_k=100", "--set", "temp_step_k=10",
        ],
    );
    assert_eq!(code(&out), 0, "got: {}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("cent/centers.csv")).unwrap();
    let data_rows =
        text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("n,")).count();
    assert_eq!(data_rows, 3 * 10);
}

#[test]
fn elliott_round_trip_through_files_recovers_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    let sim = rydex(
        dir.path(),
        &["simulate", "--out-dir", "cent", "--set", "kind=centers", "--set", "levels=2,3,4"],
    );
    assert_eq!(code(&sim), 0);
    let out = rydex(
        dir.path(),
        &["elliott", "--input", "cent/centers.csv", "--out-dir", "run"],
    );
    assert_eq!(code(&out), 0, "got: {}", stderr(&out));
    let params = dir.path().join("run/params.csv");
    assert!((value_of(&params, "bandgap_zero") - 2171.7).abs() < 1e-6);
    assert!((value_of(&params, "bandgap_coupling") + 29.5).abs() < 1e-6);
    assert!((value_of(&params, "rydberg_zero") - 96.8).abs() < 1e-6);
    assert!((value_of(&params, "rydberg_coupling") + 20.9).abs() < 1e-6);
}

#[test]
fn trends_fits_a_power_law_from_an_input_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("x,y\n");
    for n in 1..=8u32 {
        let x = n as f64;
        text.push_str(&format!("{x},{}\n", 3.0 * x.powf(-2.0)));
    }
    fs::write(dir.path().join("law.csv"), text).unwrap();
    let out = rydex(dir.path(), &["trends", "--input", "law.csv", "--out-dir", "run"]);
    assert_eq!(code(&out), 0, "got: {}", stderr(&out));
    let params = dir.path().join("run/trend.csv");
    assert!((value_of(&params, "exponent") + 2.0).abs() < 1e-10);
    assert!((value_of(&params, "prefactor") - 3.0).abs() < 1e-10);
}

#[test]
fn invert_temp_requires_an_energy() {
    let dir = tempfile::tempdir().unwrap();
    let out = rydex(dir.path(), &["invert-temp", "--out-dir", "run"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("energy_mev"), "got: {}", stderr(&out));
}

#[test]
fn invert_temp_finds_the_generating_temperature() {
    let dir = tempfile::tempdir().unwrap();
    // Level-2 energy at 150 K under the default thermal coefficients.
    let out = rydex(
        dir.path(),
        &[
            "invert-temp", "--out-dir", "run",
            "--set", "energy_mev=2121.4508100318493", "--set", "n=2",
        ],
    );
    assert_eq!(code(&out), 0, "got: {}", stderr(&out));
    let t = value_of(&dir.path().join("run/temperature.csv"), "temperature_K");
    assert!((t - 150.0).abs() < 1e-6, "got T = {t}");
}
