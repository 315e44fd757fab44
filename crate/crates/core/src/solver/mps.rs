//! Fixed-format MPS writer.
//!
//! Rows are named `R0000001`, ... in registration order (inequalities, then
//! equalities) and columns `C0000001`, ... in variable order, so the output
//! depends only on the model and is byte-stable. 0-1 columns sit between
//! `INTORG`/`INTEND` markers. The objective constant, if any, is written as
//! the negated right-hand side of the objective row.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lp::LinearProgram;
use crate::mpec::MilpModel;

const OBJ_ROW: &str = "OBJ";
const MAX_ROWS: usize = 9_999_999;

/// Model accepted by the writer.
#[derive(Debug, Clone, Copy)]
pub enum MpsSource<'a> {
    Lp(&'a LinearProgram),
    Milp(&'a MilpModel),
}

impl<'a> From<&'a LinearProgram> for MpsSource<'a> {
    fn from(lp: &'a LinearProgram) -> Self {
        MpsSource::Lp(lp)
    }
}

impl<'a> From<&'a MilpModel> for MpsSource<'a> {
    fn from(milp: &'a MilpModel) -> Self {
        MpsSource::Milp(milp)
    }
}

/// Shortest rendering of `v` that fits the 12-character value field.
fn number(v: f64) -> String {
    let plain = format!("{v}");
    if plain.len() <= 12 {
        return plain;
    }
    for digits in (0..=8).rev() {
        let s = format!("{v:.digits$e}");
        if s.len() <= 12 {
            return s;
        }
    }
    format!("{v:.0e}")
}

fn row_name(i: usize) -> String {
    format!("R{:07}", i + 1)
}

fn col_name(j: usize) -> String {
    format!("C{:07}", j + 1)
}

fn check(lp: &LinearProgram) -> Result<()> {
    lp.check()?;
    if lp.inequalities.len() + lp.equalities.len() > MAX_ROWS || lp.num_vars() > MAX_ROWS {
        return Err(Error::InvalidArgument(
            "model too large for eight-character MPS names".into(),
        ));
    }
    let finite = |v: f64| v.is_finite();
    let all_finite = lp.objective.iter().copied().all(finite)
        && lp.objective_offset.is_finite()
        && lp
            .inequalities
            .iter()
            .chain(&lp.equalities)
            .all(|c| c.rhs.is_finite() && c.row.entries().iter().all(|e| e.1.is_finite()));
    if !all_finite {
        return Err(Error::InvalidArgument("non-finite coefficient in model".into()));
    }
    Ok(())
}

/// Renders `model` as fixed-format MPS text.
pub fn to_mps_string<'a>(model: impl Into<MpsSource<'a>>, name: &str) -> Result<String> {
    let (lp, binaries): (&LinearProgram, &[usize]) = match model.into() {
        MpsSource::Lp(lp) => (lp, &[]),
        MpsSource::Milp(m) => (&m.lp, &m.binaries),
    };
    check(lp)?;
    let n = lp.num_vars();
    let mut is_binary = vec![false; n];
    for &j in binaries {
        is_binary[j] = true;
    }

    let rows: Vec<_> = lp.inequalities.iter().chain(&lp.equalities).collect();
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, c) in rows.iter().enumerate() {
        for &(j, v) in c.row.entries() {
            columns[j].push((i, v));
        }
    }

    let mut out = String::with_capacity(64 * (n + rows.len()));
    let name: String = name.chars().filter(|c| !c.is_whitespace()).take(8).collect();
    writeln!(out, "NAME          {}", if name.is_empty() { "MODEL" } else { &name }).unwrap();
    out.push_str("ROWS\n");
    writeln!(out, " N  {OBJ_ROW}").unwrap();
    for i in 0..rows.len() {
        let kind = if i < lp.inequalities.len() { 'G' } else { 'E' };
        writeln!(out, " {kind}  {}", row_name(i)).unwrap();
    }

    out.push_str("COLUMNS\n");
    let mut in_marker = false;
    let mut markers = 0usize;
    for j in 0..n {
        if is_binary[j] != in_marker {
            let tag = if is_binary[j] { "INTORG" } else { "INTEND" };
            writeln!(out, "    MARKER                 'MARKER'                 '{tag}'").unwrap();
            markers += 1;
            in_marker = is_binary[j];
        }
        let col = col_name(j);
        let mut entries: Vec<(String, f64)> = Vec::with_capacity(columns[j].len() + 1);
        if lp.objective[j] != 0.0 {
            entries.push((OBJ_ROW.to_string(), lp.objective[j]));
        }
        entries.extend(columns[j].iter().map(|&(i, v)| (row_name(i), v)));
        if entries.is_empty() {
            // keep the column declared
            entries.push((OBJ_ROW.to_string(), 0.0));
        }
        for pair in entries.chunks(2) {
            write!(out, "    {col:<8}  {:<8}  {:>12}", pair[0].0, number(pair[0].1)).unwrap();
            if let Some((r, v)) = pair.get(1) {
                write!(out, "   {r:<8}  {:>12}", number(*v)).unwrap();
            }
            out.push('\n');
        }
    }
    if in_marker {
        writeln!(out, "    MARKER                 'MARKER'                 'INTEND'").unwrap();
        markers += 1;
    }
    debug_assert_eq!(markers % 2, 0);

    out.push_str("RHS\n");
    let mut rhs: Vec<(String, f64)> = Vec::new();
    if lp.objective_offset != 0.0 {
        rhs.push((OBJ_ROW.to_string(), -lp.objective_offset));
    }
    rhs.extend(
        rows.iter()
            .enumerate()
            .filter(|(_, c)| c.rhs != 0.0)
            .map(|(i, c)| (row_name(i), c.rhs)),
    );
    for pair in rhs.chunks(2) {
        write!(out, "    {:<8}  {:<8}  {:>12}", "RHS", pair[0].0, number(pair[0].1)).unwrap();
        if let Some((r, v)) = pair.get(1) {
            write!(out, "   {r:<8}  {:>12}", number(*v)).unwrap();
        }
        out.push('\n');
    }

    out.push_str("RANGES\n");

    out.push_str("BOUNDS\n");
    for (j, var) in lp.vars.iter().enumerate() {
        let col = col_name(j);
        let mut bound = |kind: &str, value: Option<f64>| match value {
            Some(v) => writeln!(out, " {kind} BND       {col:<8}  {:>12}", number(v)).unwrap(),
            None => writeln!(out, " {kind} BND       {col}").unwrap(),
        };
        let (lo, hi) = (var.lower, var.upper);
        match (lo.is_finite(), hi.is_finite()) {
            (false, false) => bound("FR", None),
            _ if lo == hi => bound("FX", Some(lo)),
            (false, true) => {
                bound("MI", None);
                bound("UP", Some(hi));
            }
            (true, hi_finite) => {
                // integer columns default to an upper bound of one in some
                // readers, so 0-1 columns always carry both bounds
                if lo != 0.0 || is_binary[j] {
                    bound("LO", Some(lo));
                }
                if hi_finite {
                    bound("UP", Some(hi));
                } else if is_binary[j] {
                    bound("PL", None);
                }
            }
        }
    }
    out.push_str("ENDATA\n");
    Ok(out)
}

/// Writes `model` to `destination` in fixed-format MPS.
pub fn export_mps<'a>(model: impl Into<MpsSource<'a>>, destination: &Path) -> Result<()> {
    let name = destination
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("MODEL")
        .to_string();
    let text = to_mps_string(model, &name)?;
    fs::write(destination, text).map_err(|e| Error::io(destination, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{RowTag, VarRole, Variable};

    #[test]
    fn one_variable_program() {
        let mut lp = LinearProgram::new();
        lp.add_var(Variable::free("x", VarRole::Generic), 1.0);
        lp.add_ge(vec![(0, 1.0)], 0.0, RowTag::Generic);
        let text = to_mps_string(&lp, "tiny").unwrap();
        let expected = "\
NAME          tiny
ROWS
 N  OBJ
 G  R0000001
COLUMNS
    C0000001  OBJ                  1   R0000001             1
RHS
RANGES
BOUNDS
 FR BND       C0000001
ENDATA
";
        assert_eq!(text, expected);
    }

    #[test]
    fn numbers_fit_field() {
        for v in [1.0, -0.1, 1.0 / 3.0, 1e-17, -123456789.123, 6.02e23, f64::MIN_POSITIVE] {
            let s = number(v);
            assert!(s.len() <= 12, "{s}");
            let back: f64 = s.parse().unwrap();
            assert!((back - v).abs() <= 1e-7 * v.abs().max(1e-300), "{v} -> {s}");
        }
    }

    #[test]
    fn binaries_are_bracketed() {
        let mut lp = LinearProgram::new();
        lp.add_var(Variable::free("x", VarRole::Generic), 1.0);
        lp.add_var(Variable::bounded("u", 0.0, 1.0, VarRole::Selector { pair: 0 }), 0.0);
        lp.add_ge(vec![(0, 1.0), (1, -2.0)], 0.0, RowTag::Generic);
        let milp = MilpModel::new(lp, vec![1]).unwrap();
        let text = to_mps_string(&milp, "m").unwrap();
        assert_eq!(text.matches("'INTORG'").count(), 1);
        assert_eq!(text.matches("'INTEND'").count(), 1);
        assert!(text.contains(" UP BND       C0000002             1\n"));
    }

    #[test]
    fn unwritable_destination() {
        let lp = LinearProgram::new();
        let file = tempfile::NamedTempFile::new().unwrap();
        let err = export_mps(&lp, &file.path().join("x.mps")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
