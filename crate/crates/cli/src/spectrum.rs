//! The delimited spectrum file format.
//!
//! A spectrum file is `#`-prefixed `key: value` header lines followed by
//! two numeric columns (abscissa, intensity), comma- or tab-delimited.
//! Exactly one header must declare the abscissa unit:
//!
//! ```text
//! # units: energy_eV        (or wavelength_nm)
//! # temperature_K: 4.2      (optional metadata)
//! 2.14,0.031
//! 2.1405,0.033
//! ```
//!
//! Parsing always yields energies in eV, ascending. Wavelengths are
//! converted with `E = 1239.84…/λ`; files whose abscissa runs downhill
//! after conversion are reversed, and anything still out of order is
//! sorted with a warning recorded alongside the original row order.
//! Emission writes commas, energies in eV, and every number in the
//! shortest form that parses back to the identical bits.

use std::path::Path;

use rydex_core::model::units::wavelength_to_energy;
use rydex_core::EnergyGrid;

use crate::error::CliError;

/// Declared abscissa unit of a spectrum file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbscissaUnit {
    EnergyEv,
    WavelengthNm,
}

impl AbscissaUnit {
    fn parse(raw: &str) -> Option<Self> {
        match raw {
            "energy_eV" => Some(AbscissaUnit::EnergyEv),
            "wavelength_nm" => Some(AbscissaUnit::WavelengthNm),
            _ => None,
        }
    }
}

/// Everything read from a spectrum file beyond the grid itself.
#[derive(Debug, Clone)]
pub struct SpectrumMeta {
    /// All header entries in file order, including the unit declaration.
    pub headers: Vec<(String, String)>,
    pub units: AbscissaUnit,
    /// True when a wavelength (or otherwise descending) file was flipped.
    pub reversed: bool,
    /// True when rows had to be re-sorted into ascending energy order.
    pub sorted: bool,
    /// Original file line of each emitted row, recorded when sorting
    /// changed the order (for the provenance log).
    pub original_lines: Option<Vec<usize>>,
}

/// Reads and validates a spectrum file. See the module docs for the rules.
pub fn parse_spectrum(path: &Path) -> Result<(EnergyGrid, SpectrumMeta), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_spectrum_text(&text, &path.display().to_string())
}

/// [`parse_spectrum`] on in-memory text; `origin` names the source in errors.
pub fn parse_spectrum_text(
    text: &str,
    origin: &str,
) -> Result<(EnergyGrid, SpectrumMeta), CliError> {
    let data_err = |line: usize, msg: String| -> CliError {
        CliError::Data(format!("{origin}:{line}: {msg}"))
    };

    let mut headers: Vec<(String, String)> = Vec::new();
    let mut units: Option<(AbscissaUnit, usize)> = None;
    // (abscissa, intensity, 1-based file line)
    let mut rows: Vec<(f64, f64, usize)> = Vec::new();
    let mut delimiter: Option<char> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((key, value)) = rest.split_once(':') {
                let (key, value) = (key.trim().to_string(), value.trim().to_string());
                if key == "units" {
                    let unit = AbscissaUnit::parse(&value).ok_or_else(|| {
                        data_err(
                            lineno,
                            format!(
                                "unknown units '{value}' (expected energy_eV or wavelength_nm)"
                            ),
                        )
                    })?;
                    if let Some((_, first)) = units {
                        return Err(data_err(
                            lineno,
                            format!("units already declared on line {first}"),
                        ));
                    }
                    units = Some((unit, lineno));
                }
                headers.push((key, value));
            }
            continue;
        }

        let delim = *delimiter.get_or_insert(if line.contains('\t') { '\t' } else { ',' });
        let cells: Vec<&str> = line.split(delim).map(str::trim).collect();
        if cells.len() != 2 {
            return Err(data_err(
                lineno,
                format!("expected 2 columns, found {}", cells.len()),
            ));
        }
        let mut nums = [0.0f64; 2];
        for (i, cell) in cells.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                data_err(lineno, format!("column {} is not a number: '{cell}'", i + 1))
            })?;
            if !v.is_finite() {
                return Err(data_err(
                    lineno,
                    format!("column {} is not finite: '{cell}'", i + 1),
                ));
            }
            nums[i] = v;
        }
        rows.push((nums[0], nums[1], lineno));
    }

    let (units, _) = units.ok_or_else(|| {
        CliError::Data(format!(
            "{origin}: no '# units:' header (energy_eV or wavelength_nm)"
        ))
    })?;
    if rows.len() < 2 {
        return Err(CliError::Data(format!(
            "{origin}: a spectrum needs at least 2 data rows, found {}",
            rows.len()
        )));
    }

    if units == AbscissaUnit::WavelengthNm {
        for (x, _, lineno) in &mut rows {
            if !(*x > 0.0) {
                return Err(data_err(*lineno, format!("wavelength must be positive, got {x}")));
            }
            *x = wavelength_to_energy(*x).map_err(|e| data_err(*lineno, e.to_string()))?;
        }
    }

    let ascending = rows.windows(2).all(|w| w[1].0 > w[0].0);
    let descending = rows.windows(2).all(|w| w[1].0 < w[0].0);
    let mut reversed = false;
    let mut sorted = false;
    if !ascending && descending {
        rows.reverse();
        reversed = true;
    } else if !ascending {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        sorted = true;
    }
    for w in rows.windows(2) {
        if w[1].0 == w[0].0 {
            return Err(CliError::Data(format!(
                "{origin}: rows on lines {} and {} repeat the abscissa value {}",
                w[0].2, w[1].2, w[0].0
            )));
        }
    }

    let original_lines = sorted.then(|| rows.iter().map(|r| r.2).collect());
    let energies: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let values: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let grid = EnergyGrid::new(energies, values)
        .map_err(|e| CliError::Data(format!("{origin}: {e}")))?;
    Ok((grid, SpectrumMeta { headers, units, reversed, sorted, original_lines }))
}

/// The data rows of a spectrum file: comma-delimited, energies in eV,
/// shortest round-trip number formatting. Headers are the caller's job.
pub fn emit_rows(grid: &EnergyGrid) -> String {
    let mut out = String::new();
    for (e, v) in grid.energies().iter().zip(grid.values()) {
        out.push_str(&format!("{e},{v}\n"));
    }
    out
}
