//! Run configuration: per-task key=value settings with recorded defaults.
//!
//! Every task runs from a flat set of string-valued keys. Defaults are
//! declared per task, a `--config` file may override them, and command-line
//! flags override the file. The full effective configuration is echoed into
//! every artifact together with a stable hash of it, so a report is always
//! traceable to the exact settings that produced it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// One task's key schema: `(key, default, meaning)`.
type KeySchema = &'static [(&'static str, &'static str, &'static str)];

/// Keys shared by every task.
const COMMON_KEYS: KeySchema = &[
    ("seed", "0", "master seed for every random stream"),
    ("out_dir", ".", "directory that receives the artifact files"),
    ("input", "", "input data file (task-dependent format)"),
];

const SIMULATE_KEYS: KeySchema = &[
    ("kind", "spectrum", "what to synthesize: spectrum | centers"),
    ("model", "reference", "generating model: reference | file"),
    ("model_file", "", "model parameter table when model = file"),
    ("sigma_instr_ev", "0", "instrumental Gaussian sigma (eV)"),
    ("grid_min_ev", "2.14", "lowest grid energy (eV)"),
    ("grid_max_ev", "2.18", "highest grid energy (eV)"),
    ("grid_points", "2001", "number of uniform grid points"),
    ("noise", "0", "absolute noise sigma (spectrum units)"),
    ("noise_frac", "", "noise sigma as a fraction of the clean maximum"),
    ("temperature_k", "", "temperature metadata echoed into the spectrum"),
    ("power_uw", "", "excitation-power metadata echoed into the spectrum"),
    // kind = centers:
    ("levels", "2,3,4", "principal quantum numbers of the center table"),
    ("defects", "", "per-level quantum defects (default: all zero)"),
    ("temp_min_k", "5", "first table temperature (K)"),
    ("temp_max_k", "150", "last table temperature (K)"),
    ("temp_step_k", "5", "table temperature step (K)"),
    ("noise_mev", "0", "Gaussian scatter added to the centers (meV)"),
    ("bandgap_zero_mev", "2171.7", "zero-temperature band gap (meV)"),
    ("bandgap_coupling_mev", "-29.5", "band-gap phonon coupling (meV)"),
    ("rydberg_zero_mev", "96.8", "zero-temperature binding scale (meV)"),
    ("rydberg_coupling_mev", "-20.9", "binding-scale phonon coupling (meV)"),
];

const FIT_KEYS: KeySchema = &[
    ("peaks", "10", "number of resonances in the model"),
    ("mode", "tied", "center parameterization: tied | free"),
    ("n_start", "2", "first principal quantum number (tied mode)"),
    ("background", "true", "include the exponential sub-gap tail"),
    ("fit_sigma", "false", "fit the instrumental sigma as a parameter"),
    ("sigma_instr_ev", "0", "fixed instrumental sigma when not fitted (eV)"),
    ("fix_bandgap_ev", "", "pin the band gap at this value (eV)"),
    ("fix_rydberg_ev", "", "pin the binding scale at this value (eV)"),
    ("step_tolerance", "1e-10", "solver relative step threshold"),
    ("gradient_tolerance", "1e-10", "solver gradient-norm threshold"),
    ("max_iterations", "10000", "solver iteration cap"),
];

const SELECT_MODEL_KEYS: KeySchema = &[
    ("candidates", "3,4,5", "peak counts to compare"),
    ("mode", "free", "center parameterization: tied | free"),
    ("n_start", "2", "first principal quantum number (tied mode)"),
    ("background", "true", "include the exponential sub-gap tail"),
    ("ladder", "", "explicit noise ladder, descending sigmas"),
    ("ladder_max_frac", "0.3", "top ladder sigma / data maximum"),
    ("ladder_min_frac", "0.015", "bottom ladder sigma / data maximum"),
    ("ladder_levels", "6", "geometric ladder size when ladder is empty"),
    ("burn_in", "1000", "discarded adaptation sweeps per level"),
    ("samples", "2000", "recorded sweeps per level"),
    ("thin", "5", "sweeps per recorded parameter sample"),
    ("exchange_interval", "10", "sweeps between replica-exchange passes"),
    ("adapt_interval", "50", "burn-in sweeps between step-size updates"),
    ("bridge_ratio", "1.6", "geometric spacing of automatic bridge levels"),
    ("target_acceptance", "0.25", "proposal acceptance aimed for by adaptation"),
];

const ELLIOTT_KEYS: KeySchema = &[
    ("free_defects", "false", "fit one quantum defect per level"),
    ("curve_points", "151", "temperature samples of the emitted fit curves"),
    ("step_tolerance", "1e-10", "solver relative step threshold"),
    ("gradient_tolerance", "1e-10", "solver gradient-norm threshold"),
    ("max_iterations", "10000", "solver iteration cap"),
];

const TRENDS_KEYS: KeySchema = &[
    ("trend", "power_law", "law to fit: power_law | linewidth"),
    ("table", "", "built-in input: strengths | widths_nm (overrides input)"),
    ("fixed_exponent", "", "hold the power-law exponent at this value"),
    ("step_tolerance", "1e-10", "solver relative step threshold"),
    ("gradient_tolerance", "1e-10", "solver gradient-norm threshold"),
    ("max_iterations", "10000", "solver iteration cap"),
];

const INVERT_TEMP_KEYS: KeySchema = &[
    ("energy_mev", "", "measured resonance energy (meV, required)"),
    ("n", "2", "principal quantum number of the resonance"),
    ("defect", "0", "quantum defect of the resonance"),
    ("bracket_lo_k", "0", "lower temperature bracket (K)"),
    ("bracket_hi_k", "400", "upper temperature bracket (K)"),
    ("bandgap_zero_mev", "2171.7", "zero-temperature band gap (meV)"),
    ("bandgap_coupling_mev", "-29.5", "band-gap phonon coupling (meV)"),
    ("rydberg_zero_mev", "96.8", "zero-temperature binding scale (meV)"),
    ("rydberg_coupling_mev", "-20.9", "binding-scale phonon coupling (meV)"),
];

/// Schema for `task`, or `None` for an unknown task name.
fn schema(task: &str) -> Option<KeySchema> {
    Some(match task {
        "simulate" => SIMULATE_KEYS,
        "fit" => FIT_KEYS,
        "select-model" => SELECT_MODEL_KEYS,
        "elliott" => ELLIOTT_KEYS,
        "trends" => TRENDS_KEYS,
        "invert-temp" => INVERT_TEMP_KEYS,
        _ => return None,
    })
}

/// The effective settings of one task invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    task: String,
    entries: BTreeMap<String, String>,
}

impl RunConfig {
    /// Assembles the effective configuration: task defaults, overlaid with
    /// the `--config` file, overlaid with explicit flag overrides.
    pub fn build(
        task: &str,
        config_path: Option<&Path>,
        overrides: &[(String, String)],
    ) -> Result<Self, CliError> {
        let schema = schema(task)
            .ok_or_else(|| CliError::Usage(format!("unknown task '{task}'")))?;
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for &(key, default, _) in COMMON_KEYS.iter().chain(schema) {
            entries.insert(key.to_string(), default.to_string());
        }
        let mut config = RunConfig { task: task.to_string(), entries };

        if let Some(path) = config_path {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let mut seen: BTreeMap<String, usize> = BTreeMap::new();
            for (lineno, raw) in text.lines().enumerate() {
                let lineno = lineno + 1;
                let line = match raw.find('#') {
                    Some(i) => &raw[..i],
                    None => raw,
                };
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    CliError::Usage(format!(
                        "{}:{lineno}: expected 'key = value', got '{line}'",
                        path.display()
                    ))
                })?;
                let (key, value) = (key.trim(), value.trim());
                if let Some(first) = seen.insert(key.to_string(), lineno) {
                    return Err(CliError::Usage(format!(
                        "{}:{lineno}: key '{key}' already set on line {first}",
                        path.display()
                    )));
                }
                config.set(key, value).map_err(|e| match e {
                    CliError::Usage(msg) => {
                        CliError::Usage(format!("{}:{lineno}: {msg}", path.display()))
                    }
                    other => other,
                })?;
            }
        }
        for (key, value) in overrides {
            config.set(key, value)?;
        }
        Ok(config)
    }

    /// Sets one key, rejecting names outside the task's schema.
    fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if !self.entries.contains_key(key) {
            let mut allowed: Vec<&str> = self.entries.keys().map(String::as_str).collect();
            allowed.sort_unstable();
            return Err(CliError::Usage(format!(
                "unknown key '{key}' for task '{}'; allowed keys: {}",
                self.task,
                allowed.join(", ")
            )));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    /// Raw string value of `key` (keys outside the schema cannot exist).
    pub fn str(&self, key: &str) -> &str {
        self.entries
            .get(key)
            .unwrap_or_else(|| panic!("key '{key}' missing from task schema"))
            .as_str()
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, kind: &str) -> Result<T, CliError> {
        let raw = self.str(key);
        raw.parse().map_err(|_| {
            CliError::Usage(format!("key '{key}': expected {kind}, got '{raw}'"))
        })
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        let v: f64 = self.parse(key, "a number")?;
        if !v.is_finite() {
            return Err(CliError::Usage(format!("key '{key}': '{v}' is not finite")));
        }
        Ok(v)
    }

    pub fn u64(&self, key: &str) -> Result<u64, CliError> {
        self.parse(key, "a non-negative integer")
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        self.parse(key, "a non-negative integer")
    }

    pub fn u32(&self, key: &str) -> Result<u32, CliError> {
        self.parse(key, "a non-negative integer")
    }

    pub fn bool(&self, key: &str) -> Result<bool, CliError> {
        match self.str(key) {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(CliError::Usage(format!(
                "key '{key}': expected true or false, got '{other}'"
            ))),
        }
    }

    /// `None` when the value is the empty string.
    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        if self.str(key).is_empty() {
            return Ok(None);
        }
        self.f64(key).map(Some)
    }

    /// Comma-separated numbers; the empty string is an empty list.
    pub fn list_f64(&self, key: &str) -> Result<Vec<f64>, CliError> {
        let raw = self.str(key);
        if raw.trim().is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    CliError::Usage(format!(
                        "key '{key}': expected comma-separated numbers, got '{raw}'"
                    ))
                })
            })
            .collect()
    }

    /// Comma-separated integers; the empty string is an empty list.
    pub fn list_u32(&self, key: &str) -> Result<Vec<u32>, CliError> {
        let raw = self.str(key);
        if raw.trim().is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    CliError::Usage(format!(
                        "key '{key}': expected comma-separated integers, got '{raw}'"
                    ))
                })
            })
            .collect()
    }

    /// The input path; errors when the task received none.
    pub fn required_input(&self) -> Result<PathBuf, CliError> {
        let raw = self.str("input");
        if raw.is_empty() {
            return Err(CliError::Usage(format!(
                "task '{}' needs an input file (--input or input = ... in the config)",
                self.task
            )));
        }
        Ok(PathBuf::from(raw))
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.str("out_dir"))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.u64("seed")
    }

    /// The effective configuration as sorted `key = value` lines. The
    /// output directory is the one setting that never alters results, so
    /// it is left out: reruns into different directories stay
    /// byte-identical, hash included.
    pub fn echo_lines(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|(k, _)| k.as_str() != "out_dir")
            .map(|(k, v)| format!("{k} = {v}"))
            .collect()
    }

    /// Stable hash of the task name and the effective configuration.
    pub fn hash(&self) -> String {
        let mut text = self.task.clone();
        for line in self.echo_lines() {
            text.push('\n');
            text.push_str(&line);
        }
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in text.as_bytes() {
            h ^= u64::from(*byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        let mut out = String::with_capacity(24);
        write!(out, "fnv1a64:{h:016x}").expect("writing to a String cannot fail");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn defaults_cover_every_key_and_flags_override_the_file() {
        let f = write_config("seed = 7\ngrid_points = 501 # inline note\n");
        let cfg = RunConfig::build(
            "simulate",
            Some(f.path()),
            &[("seed".into(), "9".into())],
        )
        .unwrap();
        assert_eq!(cfg.seed().unwrap(), 9, "flag wins over file");
        assert_eq!(cfg.usize("grid_points").unwrap(), 501);
        assert_eq!(cfg.str("model"), "reference", "untouched keys keep defaults");
    }

    #[test]
    fn unknown_and_duplicate_keys_are_usage_errors() {
        let f = write_config("no_such_key = 1\n");
        let err = RunConfig::build("fit", Some(f.path()), &[]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("no_such_key"), "{err}");

        let f = write_config("peaks = 3\npeaks = 4\n");
        let err = RunConfig::build("fit", Some(f.path()), &[]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("already set on line 1"), "{err}");
    }

    #[test]
    fn malformed_lines_name_their_line_number() {
        let f = write_config("# fine\npeaks 4\n");
        let err = RunConfig::build("fit", Some(f.path()), &[]).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn typed_getters_reject_bad_values_with_the_key_name() {
        let cfg =
            RunConfig::build("fit", None, &[("peaks".into(), "many".into())]).unwrap();
        let err = cfg.usize("peaks").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("peaks"), "{err}");
    }

    #[test]
    fn hash_tracks_content_not_declaration_order() {
        let a = RunConfig::build(
            "fit",
            None,
            &[("peaks".into(), "4".into()), ("mode".into(), "free".into())],
        )
        .unwrap();
        let b = RunConfig::build(
            "fit",
            None,
            &[("mode".into(), "free".into()), ("peaks".into(), "4".into())],
        )
        .unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::build("fit", None, &[("peaks".into(), "5".into())]).unwrap();
        assert_ne!(a.hash(), c.hash());
        assert!(a.hash().starts_with("fnv1a64:"));
    }

    #[test]
    fn echo_lines_are_sorted_and_complete() {
        let cfg = RunConfig::build("invert-temp", None, &[]).unwrap();
        let lines = cfg.echo_lines();
        let mut sorted = lines.clone();
        sorted.sort();
        assert_eq!(lines, sorted);
        assert!(lines.iter().any(|l| l == "bracket_hi_k = 400"));
        assert!(lines.iter().any(|l| l == "seed = 0"));
    }
}
