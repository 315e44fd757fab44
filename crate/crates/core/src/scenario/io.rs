//! Load and price files.
//!
//! Loads: header `t,customer_id,load_kw`, one row per (slot, customer), both
//! indices 0-based. Prices: header `t,lmp_per_kwh,tou_per_kwh`, one row per
//! slot. Row order is free; every index must appear exactly once.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Instance, LoadSet, PriceSeries, TimeGrid};

use super::config::{Config, Resolved};

#[derive(Debug, Serialize, Deserialize)]
struct LoadRow {
    t: usize,
    customer_id: usize,
    load_kw: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct PriceRow {
    t: usize,
    lmp_per_kwh: f64,
    tou_per_kwh: f64,
}

const LOAD_HEADER: [&str; 3] = ["t", "customer_id", "load_kw"];
const PRICE_HEADER: [&str; 3] = ["t", "lmp_per_kwh", "tou_per_kwh"];

fn reader(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let found: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if found != header {
        return Err(Error::parse(
            path,
            1,
            format!("expected header `{}`, found `{}`", header.join(","), found.join(",")),
        ));
    }
    Ok(rdr)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    let message = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => match err.field() {
            Some(col) => format!("column {}: {}", col + 1, err.kind()),
            None => err.kind().to_string(),
        },
        _ => e.to_string(),
    };
    Error::parse(path, line, message)
}

fn rows<T: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> Result<Vec<(u64, T)>> {
    let mut rdr = reader(path, header)?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<T>() {
        let row = rec.map_err(|e| csv_error(path, e))?;
        // header is line 1
        out.push((out.len() as u64 + 2, row));
    }
    Ok(out)
}

fn finite(path: &Path, line: u64, what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::parse(path, line, format!("{what} is not finite")))
    }
}

/// Reads `customer_load[n][t]`.
pub fn read_loads(path: &Path) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<(u64, LoadRow)> = rows(path, &LOAD_HEADER)?;
    if rows.is_empty() {
        return Err(Error::parse(path, 1, "no load rows"));
    }
    let slots = rows.iter().map(|(_, r)| r.t).max().unwrap_or(0) + 1;
    let customers = rows.iter().map(|(_, r)| r.customer_id).max().unwrap_or(0) + 1;
    let mut load = vec![vec![f64::NAN; slots]; customers];
    for (line, r) in &rows {
        let cell = &mut load[r.customer_id][r.t];
        if !cell.is_nan() {
            return Err(Error::parse(
                path,
                *line,
                format!("duplicate row for slot {} customer {}", r.t, r.customer_id),
            ));
        }
        *cell = finite(path, *line, "load_kw", r.load_kw)?;
    }
    for (n, row) in load.iter().enumerate() {
        if let Some(t) = row.iter().position(|v| v.is_nan()) {
            return Err(Error::parse(
                path,
                0,
                format!("missing row for slot {t} customer {n}"),
            ));
        }
    }
    Ok(load)
}

pub fn read_prices(path: &Path) -> Result<PriceSeries> {
    let rows: Vec<(u64, PriceRow)> = rows(path, &PRICE_HEADER)?;
    if rows.is_empty() {
        return Err(Error::parse(path, 1, "no price rows"));
    }
    let slots = rows.len();
    let mut lmp = vec![f64::NAN; slots];
    let mut tou = vec![f64::NAN; slots];
    for (line, r) in &rows {
        if r.t >= slots || !lmp[r.t].is_nan() {
            return Err(Error::parse(
                path,
                *line,
                format!("slot {} is out of range or repeated ({slots} rows)", r.t),
            ));
        }
        lmp[r.t] = finite(path, *line, "lmp_per_kwh", r.lmp_per_kwh)?;
        tou[r.t] = finite(path, *line, "tou_per_kwh", r.tou_per_kwh)?;
    }
    Ok(PriceSeries { lmp, tou })
}

pub fn write_loads(path: &Path, customer_load: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let slots = customer_load.first().map_or(0, Vec::len);
    for t in 0..slots {
        for (n, row) in customer_load.iter().enumerate() {
            w.serialize(LoadRow {
                t,
                customer_id: n,
                load_kw: row[t],
            })
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_prices(path: &Path, prices: &PriceSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for t in 0..prices.lmp.len() {
        w.serialize(PriceRow {
            t,
            lmp_per_kwh: prices.lmp[t],
            tou_per_kwh: prices.tou[t],
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Validated instance plus the settings it was built with.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub instance: Instance,
    pub settings: Resolved,
}

/// Assembles an instance from in-memory series and a configuration.
pub fn build_instance(
    customer_load: Vec<Vec<f64>>,
    prices: PriceSeries,
    config: &Config,
) -> Result<Inputs> {
    let slots = prices.lmp.len();
    let settings = config.resolve(customer_load.len(), slots)?;
    let instance = Instance::new(
        TimeGrid::new(slots, settings.slot_hours)?,
        prices,
        LoadSet::new(customer_load, settings.extra_base_load.clone()),
        settings.storage.clone(),
        settings.weights,
    )?;
    Ok(Inputs { instance, settings })
}

pub fn load_inputs(loads: &Path, prices: &Path, config: &Path) -> Result<Inputs> {
    load_inputs_with(loads, prices, &Config::load(config)?)
}

/// [`load_inputs`] with an already parsed configuration.
pub fn load_inputs_with(loads: &Path, prices: &Path, config: &Config) -> Result<Inputs> {
    let customer_load = read_loads(loads)?;
    let price_series = read_prices(prices)?;
    let slots = customer_load[0].len();
    if price_series.lmp.len() != slots {
        return Err(Error::parse(
            prices,
            0,
            format!(
                "{} price rows but the load file covers {slots} slots",
                price_series.lmp.len()
            ),
        ));
    }
    build_instance(customer_load, price_series, config)
}
