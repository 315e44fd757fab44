//! Report files.
//!
//! - `divisions.csv`: capacity per party, one row per (day, scenario, party).
//! - `reductions.csv`: baseline cost, cost and percentage reduction per
//!   (day, scenario, party); parties are `disco`, `customers_1`,
//!   `customers_2` and `peak`.
//! - `profiles.csv`: feeder load per slot, original and after each scenario.
//! - `manifest.csv`: run provenance as key-value rows.
//! - `summary.json`: the full day reports.
//!
//! Nothing timing-dependent is written, so equal inputs give equal bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{customer_groups, CycleReport, ScenarioId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivisionRow {
    pub day: usize,
    pub scenario: u8,
    pub party: String,
    pub capacity_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionRow {
    pub day: usize,
    pub scenario: u8,
    pub party: String,
    pub baseline: f64,
    pub actual: f64,
    pub reduction_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub day: usize,
    pub t: usize,
    pub load_o: f64,
    pub load_d: Option<f64>,
    pub load_c: Option<f64>,
    pub load_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub notes: Vec<String>,
    pub cycle: CycleReport,
}

/// Parsed contents of a report directory.
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedReport {
    pub divisions: Vec<DivisionRow>,
    pub reductions: Vec<ReductionRow>,
    pub profiles: Vec<ProfileRow>,
    pub manifest: Vec<ManifestRow>,
    pub summary: Summary,
}

const GROUP_NOTE: &str = "customers_1 is the first ceil(N/2) customers and customers_2 the rest; \
group reductions equal those of the group average";

fn group_name(g: usize) -> String {
    format!("customers_{}", g + 1)
}

/// Rows of every table, in the order they are written.
pub fn tables(cycle: &CycleReport) -> (Vec<DivisionRow>, Vec<ReductionRow>, Vec<ProfileRow>) {
    let mut divisions = Vec::new();
    let mut reductions = Vec::new();
    let mut profiles = Vec::new();
    for day in &cycle.reports {
        for s in &day.scenarios {
            let scenario = s.scenario.number();
            divisions.push(DivisionRow {
                day: day.day,
                scenario,
                party: "disco".into(),
                capacity_kwh: s.division.s_disco,
            });
            for (n, &c) in s.division.s_customer.iter().enumerate() {
                divisions.push(DivisionRow {
                    day: day.day,
                    scenario,
                    party: format!("customer_{n}"),
                    capacity_kwh: c,
                });
            }
            let mut push = |party: String, baseline: f64, actual: f64, pct: f64| {
                reductions.push(ReductionRow {
                    day: day.day,
                    scenario,
                    party,
                    baseline,
                    actual,
                    reduction_pct: pct,
                })
            };
            push("disco".into(), day.baseline.disco, s.costs.disco, s.reductions.disco);
            for g in 0..customer_groups(s.division.s_customer.len()).len() {
                push(
                    group_name(g),
                    day.baseline.customer_groups[g],
                    s.costs.customer_groups[g],
                    s.reductions.customer_groups[g],
                );
            }
            push("peak".into(), day.baseline.peak, s.costs.peak, s.reductions.peak);
        }
        let series = |id: ScenarioId, t: usize| {
            day.scenarios.iter().find(|s| s.scenario == id).map(|s| s.net_load[t])
        };
        for (t, &load_o) in day.baseline_load.iter().enumerate() {
            profiles.push(ProfileRow {
                day: day.day,
                t,
                load_o,
                load_d: series(ScenarioId::DiscoOnly, t),
                load_c: series(ScenarioId::CustomersOnly, t),
                load_s: series(ScenarioId::Shared, t),
            });
        }
    }
    (divisions, reductions, profiles)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

/// Writes every report file into `dir`, creating it if needed.
pub fn emit_report(cycle: &CycleReport, manifest: &[(String, String)], dir: &Path) -> Result<()> {
    if cycle.reports.is_empty() {
        return Err(Error::InvalidArgument("no day reports to emit".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (divisions, reductions, profiles) = tables(cycle);
    write_csv(&dir.join("divisions.csv"), &divisions)?;
    write_csv(&dir.join("reductions.csv"), &reductions)?;
    write_csv(&dir.join("profiles.csv"), &profiles)?;

    let mut rows: Vec<ManifestRow> = manifest
        .iter()
        .map(|(k, v)| ManifestRow {
            key: k.clone(),
            value: v.clone(),
        })
        .collect();
    let mut add = |key: &str, value: String| rows.push(ManifestRow { key: key.into(), value });
    add("days", cycle.reports.len().to_string());
    add("defaults_applied", cycle.defaults_applied.join(" "));
    for f in &cycle.failures {
        add(&format!("day_{}_failure", f.day), f.message.clone());
    }
    for day in &cycle.reports {
        for s in &day.scenarios {
            let prefix = format!("day_{}_scenario_{}", day.day, s.scenario.number());
            let st = &s.stats;
            if let Some(mode) = st.mode {
                add(&format!("{prefix}_mode"), format!("{mode:?}").to_lowercase());
            }
            if let Some(status) = st.status {
                add(&format!("{prefix}_status"), format!("{status:?}"));
                add(&format!("{prefix}_nodes"), st.nodes.to_string());
            }
            if st.bigm_rounds > 0 {
                add(&format!("{prefix}_bigm_rounds"), st.bigm_rounds.to_string());
                add(&format!("{prefix}_bigm_binding"), st.bigm_binding.to_string());
            }
            if let Some(o) = st.oracle_objective {
                add(&format!("{prefix}_oracle_objective"), o.to_string());
                add(&format!("{prefix}_upper_objective"), s.upper_objective.to_string());
            }
            for (i, note) in st.notes.iter().enumerate() {
                add(&format!("{prefix}_note_{i}"), note.clone());
            }
        }
    }
    write_csv(&dir.join("manifest.csv"), &rows)?;

    let summary = Summary {
        notes: vec![GROUP_NOTE.to_string()],
        cycle: cycle.clone(),
    };
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::InvalidArgument(format!("summary serialisation: {e}")))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// Reads back a directory written by [`emit_report`].
pub fn read_report(dir: &Path) -> Result<EmittedReport> {
    let path = dir.join("summary.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let summary: Summary = serde_json::from_str(&text)
        .map_err(|e| Error::parse(&path, e.line() as u64, e.to_string()))?;
    Ok(EmittedReport {
        divisions: read_csv(&dir.join("divisions.csv"))?,
        reductions: read_csv(&dir.join("reductions.csv"))?,
        profiles: read_csv(&dir.join("profiles.csv"))?,
        manifest: read_csv(&dir.join("manifest.csv"))?,
        summary,
    })
}
