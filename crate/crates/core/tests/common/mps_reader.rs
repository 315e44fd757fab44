//! Minimal fixed-format MPS reader. Data lines are cut at the standard field
//! columns (2-3, 5-12, 15-22, 25-36, 40-47, 50-61); integrality markers are
//! recognised by their quoted keywords.

use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Default, Clone)]
pub struct MpsModel {
    pub name: String,
    pub objective_row: String,
    /// Constraint rows in file order with their sense letter.
    pub rows: Vec<(char, String)>,
    /// Columns in order of first appearance.
    pub columns: Vec<String>,
    pub integer: BTreeSet<String>,
    /// `(row, column) -> coefficient`, objective entries included.
    pub coefficients: BTreeMap<(String, String), f64>,
    pub rhs: BTreeMap<String, f64>,
    pub ranges: BTreeMap<String, f64>,
    /// Column -> (lower, upper) after applying the default `[0, inf)`.
    pub bounds: BTreeMap<String, (f64, f64)>,
}

impl MpsModel {
    pub fn count_rows(&self, sense: char) -> usize {
        self.rows.iter().filter(|r| r.0 == sense).count()
    }

    /// Matrix nonzeros outside the objective row.
    pub fn matrix_nonzeros(&self) -> usize {
        self.coefficients
            .iter()
            .filter(|((r, _), v)| *r != self.objective_row && **v != 0.0)
            .count()
    }
}

fn field(line: &str, from: usize, to: usize) -> &str {
    let bytes = line.len();
    if from > bytes {
        return "";
    }
    line[from - 1..to.min(bytes)].trim()
}

fn number(s: &str, line: usize) -> Result<f64, String> {
    s.parse().map_err(|_| format!("line {line}: bad number {s:?}"))
}

pub fn parse(text: &str) -> Result<MpsModel, String> {
    let mut model = MpsModel::default();
    let mut section = String::new();
    let mut in_integer = false;
    let mut known_rows = BTreeSet::new();
    let mut seen_cols = BTreeSet::new();
    for (k, line) in text.lines().enumerate() {
        let ln = k + 1;
        if line.trim().is_empty() || line.starts_with('*') {
            continue;
        }
        if !line.starts_with(' ') {
            section = line.split_whitespace().next().unwrap_or("").to_string();
            if section == "NAME" {
                model.name = line[4..].trim().to_string();
            }
            continue;
        }
        match section.as_str() {
            "ROWS" => {
                let sense = field(line, 2, 3);
                let name = field(line, 5, 12).to_string();
                let sense = sense.chars().next().ok_or(format!("line {ln}: missing sense"))?;
                if sense == 'N' {
                    if model.objective_row.is_empty() {
                        model.objective_row = name.clone();
                    }
                } else if "GLE".contains(sense) {
                    model.rows.push((sense, name.clone()));
                } else {
                    return Err(format!("line {ln}: unknown row sense {sense}"));
                }
                known_rows.insert(name);
            }
            "COLUMNS" => {
                if line.contains("'MARKER'") {
                    if line.contains("'INTORG'") {
                        in_integer = true;
                    } else if line.contains("'INTEND'") {
                        in_integer = false;
                    } else {
                        return Err(format!("line {ln}: unknown marker"));
                    }
                    continue;
                }
                let col = field(line, 5, 12).to_string();
                if seen_cols.insert(col.clone()) {
                    model.columns.push(col.clone());
                    model.bounds.insert(col.clone(), (0.0, f64::INFINITY));
                }
                if in_integer {
                    model.integer.insert(col.clone());
                }
                for (r, v) in [(field(line, 15, 22), field(line, 25, 36)), (field(line, 40, 47), field(line, 50, 61))] {
                    if r.is_empty() {
                        continue;
                    }
                    if !known_rows.contains(r) {
                        return Err(format!("line {ln}: unknown row {r}"));
                    }
                    model.coefficients.insert((r.to_string(), col.clone()), number(v, ln)?);
                }
            }
            "RHS" | "RANGES" => {
                for (r, v) in [(field(line, 15, 22), field(line, 25, 36)), (field(line, 40, 47), field(line, 50, 61))] {
                    if r.is_empty() {
                        continue;
                    }
                    let target = if section == "RHS" { &mut model.rhs } else { &mut model.ranges };
                    target.insert(r.to_string(), number(v, ln)?);
                }
            }
            "BOUNDS" => {
                let kind = field(line, 2, 3);
                let col = field(line, 15, 22).to_string();
                let b = model
                    .bounds
                    .get_mut(&col)
                    .ok_or(format!("line {ln}: bound on unknown column {col}"))?;
                let value = || number(field(line, 25, 36), ln);
                match kind {
                    "LO" => b.0 = value()?,
                    "UP" => b.1 = value()?,
                    "FX" => {
                        let v = value()?;
                        *b = (v, v);
                    }
                    "FR" => *b = (f64::NEG_INFINITY, f64::INFINITY),
                    "MI" => b.0 = f64::NEG_INFINITY,
                    "PL" => b.1 = f64::INFINITY,
                    "BV" => *b = (0.0, 1.0),
                    _ => return Err(format!("line {ln}: unknown bound type {kind}")),
                }
            }
            "" => return Err(format!("line {ln}: data before any section")),
            _ => {}
        }
    }
    if section != "ENDATA" {
        return Err("missing ENDATA".into());
    }
    Ok(model)
}
