//! Delimited numeric tables with a header row.
//!
//! Every tabular artifact (parameter tables, fit curves, free-energy
//! profiles, center tables) shares one shape: `#`-prefixed provenance
//! lines, one header row of column names, then data rows. The first
//! column may be textual (parameter names); all others are numeric.
//! Delimiters are comma or tab on input, comma on output, and numbers are
//! printed in the shortest form that parses back bit-identically.

use std::path::Path;

use crate::error::CliError;

/// An in-memory table: column names, an optional textual first column,
/// and the numeric cells of the remaining columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    /// First-column labels when the table is name-keyed.
    pub names: Option<Vec<String>>,
    /// Numeric cells; excludes the name column when `names` is set.
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    /// An empty all-numeric table.
    pub fn numeric(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            names: None,
            rows: Vec::new(),
        }
    }

    /// An empty table whose first column holds labels.
    pub fn named(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            names: Some(Vec::new()),
            rows: Vec::new(),
        }
    }

    /// Appends a numeric row (the cell count must match the columns).
    pub fn push(&mut self, row: Vec<f64>) {
        assert!(self.names.is_none(), "name-keyed tables need push_named");
        assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Appends a labeled row.
    pub fn push_named(&mut self, name: impl Into<String>, row: Vec<f64>) {
        assert_eq!(row.len() + 1, self.columns.len());
        self.names.as_mut().expect("numeric tables need push").push(name.into());
        self.rows.push(row);
    }

    /// Index of `name` among the numeric columns (the label column, when
    /// present, is not addressable this way).
    pub fn column(&self, name: &str) -> Result<usize, CliError> {
        let offset = usize::from(self.names.is_some());
        self.columns
            .iter()
            .position(|c| c == name)
            .and_then(|i| i.checked_sub(offset))
            .ok_or_else(|| {
                CliError::Data(format!(
                    "missing column '{name}' (found: {})",
                    self.columns.join(", ")
                ))
            })
    }

    /// One numeric column by name.
    pub fn column_values(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let c = self.column(name)?;
        Ok(self.rows.iter().map(|r| r[c]).collect())
    }

    /// Value in the first numeric column of the row labeled `name`.
    pub fn value_of(&self, name: &str) -> Result<f64, CliError> {
        let names = self
            .names
            .as_ref()
            .ok_or_else(|| CliError::Data("table has no label column".into()))?;
        let i = names.iter().position(|n| n == name).ok_or_else(|| {
            CliError::Data(format!("no row labeled '{name}' in the table"))
        })?;
        Ok(self.rows[i][0])
    }

    /// Header row plus data rows, comma-delimited, round-trip numbers.
    pub fn emit(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            let mut cells: Vec<String> = Vec::with_capacity(self.columns.len());
            if let Some(names) = &self.names {
                cells.push(names[i].clone());
            }
            cells.extend(row.iter().map(|v| format!("{v}")));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Reads a table file (provenance lines ignored).
    pub fn parse(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse_text(&text, &path.display().to_string())
    }

    /// [`Table::parse`] on in-memory text; `origin` names the source.
    pub fn parse_text(text: &str, origin: &str) -> Result<Self, CliError> {
        let data_err = |line: usize, msg: String| -> CliError {
            CliError::Data(format!("{origin}:{line}: {msg}"))
        };
        let mut columns: Option<Vec<String>> = None;
        let mut names: Option<Vec<String>> = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut delimiter: Option<char> = None;

        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let delim = *delimiter.get_or_insert(if line.contains('\t') { '\t' } else { ',' });
            let cells: Vec<&str> = line.split(delim).map(str::trim).collect();
            let Some(cols) = &columns else {
                if cells.iter().any(|c| c.is_empty()) {
                    return Err(data_err(lineno, "empty column name in header".into()));
                }
                columns = Some(cells.iter().map(|c| c.to_string()).collect());
                continue;
            };
            if cells.len() != cols.len() {
                return Err(data_err(
                    lineno,
                    format!("expected {} columns, found {}", cols.len(), cells.len()),
                ));
            }
            // The first data row decides whether column one is textual.
            if rows.is_empty() && names.is_none() && cells[0].parse::<f64>().is_err() {
                names = Some(Vec::new());
            }
            let start = if let Some(names) = &mut names {
                names.push(cells[0].to_string());
                1
            } else {
                0
            };
            let mut row = Vec::with_capacity(cells.len() - start);
            for cell in &cells[start..] {
                let v: f64 = cell.parse().map_err(|_| {
                    data_err(lineno, format!("not a number: '{cell}'"))
                })?;
                row.push(v);
            }
            rows.push(row);
        }

        let columns = columns
            .ok_or_else(|| CliError::Data(format!("{origin}: table has no header row")))?;
        if rows.is_empty() {
            return Err(CliError::Data(format!("{origin}: table has no data rows")));
        }
        Ok(Table { columns, names, rows })
    }

    /// The row labels, or an error for purely numeric tables.
    pub fn names(&self) -> Result<&[String], CliError> {
        self.names
            .as_deref()
            .ok_or_else(|| CliError::Data("table has no label column".into()))
    }
}

/// Casts a table cell to an integer quantum number.
pub fn cell_to_u32(value: f64, what: &str) -> Result<u32, CliError> {
    if value.fract() != 0.0 || !(0.0..=u32::MAX as f64).contains(&value) {
        return Err(CliError::Data(format!("{what} must be a small integer, got {value}")));
    }
    Ok(value as u32)
}
