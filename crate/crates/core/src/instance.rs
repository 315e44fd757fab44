//! Problem data for one day of shared-storage operation, plus the closed-form
//! cost, peak and state-of-charge evaluations that every solver result is
//! checked against.
//!
//! Nothing in here depends on a solver. Powers are in kW, energies in kWh,
//! prices in currency per kWh.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute feasibility tolerance on kW / kWh quantities.
pub const FEAS_TOL: f64 = 1e-6;

pub const DEFAULT_SOC_LOWER: f64 = 0.1;
pub const DEFAULT_SOC_UPPER: f64 = 0.9;
pub const DEFAULT_SOC_INI: f64 = 0.5;
pub const DEFAULT_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub slot_count: usize,
    pub slot_hours: f64,
}

impl TimeGrid {
    pub fn new(slot_count: usize, slot_hours: f64) -> Result<Self> {
        let grid = TimeGrid {
            slot_count,
            slot_hours,
        };
        grid.check()?;
        Ok(grid)
    }

    /// A grid that splits 24 hours into `slot_count` equal slots.
    pub fn day(slot_count: usize) -> Result<Self> {
        if slot_count == 0 {
            return Err(Error::InvalidInstance("slot count must be positive".into()));
        }
        Self::new(slot_count, 24.0 / slot_count as f64)
    }

    fn check(&self) -> Result<()> {
        if self.slot_count < 2 {
            return Err(Error::InvalidInstance(format!(
                "need at least 2 time slots, got {}",
                self.slot_count
            )));
        }
        if !(self.slot_hours.is_finite() && self.slot_hours > 0.0) {
            return Err(Error::InvalidInstance(format!(
                "slot duration must be positive, got {}",
                self.slot_hours
            )));
        }
        Ok(())
    }

    pub fn is_full_day(&self) -> bool {
        (self.slot_count as f64 * self.slot_hours - 24.0).abs() <= 1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub lmp: Vec<f64>,
    pub tou: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSet {
    /// `customer_load[n][t]`
    pub customer_load: Vec<Vec<f64>>,
    /// Feeder load that does not take part in sharing.
    pub extra_base_load: Vec<f64>,
    /// Derived: `extra_base_load[t] + sum_n customer_load[n][t]`.
    pub system_load: Vec<f64>,
}

impl LoadSet {
    pub fn new(customer_load: Vec<Vec<f64>>, extra_base_load: Option<Vec<f64>>) -> Self {
        let slots = customer_load.first().map_or(0, Vec::len);
        let extra = extra_base_load.unwrap_or_else(|| vec![0.0; slots]);
        let mut loads = LoadSet {
            customer_load,
            extra_base_load: extra,
            system_load: Vec::new(),
        };
        loads.recompute_system_load();
        loads
    }

    fn recompute_system_load(&mut self) {
        let mut total = self.extra_base_load.clone();
        for row in &self.customer_load {
            for (acc, v) in total.iter_mut().zip(row) {
                *acc += v;
            }
        }
        self.system_load = total;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageParams {
    pub total_capacity: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    /// Power limit per kWh of allotted capacity (1/h).
    pub power_ratio: f64,
    pub soc_lower: f64,
    pub soc_upper: f64,
    pub soc_ini_customer: Vec<f64>,
    pub soc_ini_disco: f64,
}

impl StorageParams {
    /// Default SoC corridor and initial SoC for `customers` participants.
    pub fn new(total_capacity: f64, eta: f64, power_ratio: f64, customers: usize) -> Self {
        StorageParams {
            total_capacity,
            eta_ch: eta,
            eta_dis: eta,
            power_ratio,
            soc_lower: DEFAULT_SOC_LOWER,
            soc_upper: DEFAULT_SOC_UPPER,
            soc_ini_customer: vec![DEFAULT_SOC_INI; customers],
            soc_ini_disco: DEFAULT_SOC_INI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Peak-valley penalty in the customer operation model.
    pub alpha: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            lambda1: 0.8,
            lambda2: 6.69,
            lambda3: 1.0,
            alpha: DEFAULT_ALPHA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub grid: TimeGrid,
    pub prices: PriceSeries,
    pub loads: LoadSet,
    pub storage: StorageParams,
    pub weights: Weights,
}

impl Instance {
    pub fn new(
        grid: TimeGrid,
        prices: PriceSeries,
        loads: LoadSet,
        storage: StorageParams,
        weights: Weights,
    ) -> Result<Self> {
        validate_instance(Instance {
            grid,
            prices,
            loads,
            storage,
            weights,
        })
    }

    pub fn slots(&self) -> usize {
        self.grid.slot_count
    }

    pub fn customers(&self) -> usize {
        self.loads.customer_load.len()
    }

    pub fn dt(&self) -> f64 {
        self.grid.slot_hours
    }

    /// Same data with a different total storage capacity.
    pub fn with_total_capacity(&self, total: f64) -> Result<Self> {
        let mut copy = self.clone();
        copy.storage.total_capacity = total;
        validate_instance(copy)
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Dimension(format!(
            "{what} has length {got}, expected {want}"
        )));
    }
    Ok(())
}

fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInstance(format!(
            "{what}[{pos}] is not finite"
        )));
    }
    Ok(())
}

/// Checks every data invariant and recomputes the derived system load.
pub fn validate_instance(mut raw: Instance) -> Result<Instance> {
    raw.grid.check()?;
    let slots = raw.grid.slot_count;
    let customers = raw.loads.customer_load.len();
    if customers == 0 {
        return Err(Error::InvalidInstance("at least one customer required".into()));
    }

    check_len("lmp", raw.prices.lmp.len(), slots)?;
    check_len("tou", raw.prices.tou.len(), slots)?;
    check_finite("lmp", &raw.prices.lmp)?;
    check_finite("tou", &raw.prices.tou)?;
    if let Some(t) = raw.prices.tou.iter().position(|&p| p < 0.0) {
        return Err(Error::InvalidInstance(format!("tou[{t}] is negative")));
    }

    for (n, row) in raw.loads.customer_load.iter().enumerate() {
        check_len(&format!("customer_load[{n}]"), row.len(), slots)?;
        check_finite(&format!("customer_load[{n}]"), row)?;
        if let Some(t) = row.iter().position(|&l| l < 0.0) {
            return Err(Error::InvalidInstance(format!(
                "customer {n} has negative load at slot {t}"
            )));
        }
    }
    check_len("extra_base_load", raw.loads.extra_base_load.len(), slots)?;
    check_finite("extra_base_load", &raw.loads.extra_base_load)?;
    if let Some(t) = raw.loads.extra_base_load.iter().position(|&l| l < 0.0) {
        return Err(Error::InvalidInstance(format!(
            "extra base load is negative at slot {t}"
        )));
    }
    raw.loads.recompute_system_load();

    let s = &raw.storage;
    if !(s.total_capacity.is_finite() && s.total_capacity >= 0.0) {
        return Err(Error::InvalidInstance(format!(
            "total capacity must be nonnegative, got {}",
            s.total_capacity
        )));
    }
    for (name, eta) in [("eta_ch", s.eta_ch), ("eta_dis", s.eta_dis)] {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidInstance(format!(
                "{name} must lie in (0, 1], got {eta}"
            )));
        }
    }
    if !(s.power_ratio.is_finite() && s.power_ratio > 0.0) {
        return Err(Error::InvalidInstance(format!(
            "power ratio must be positive, got {}",
            s.power_ratio
        )));
    }
    if !(0.0 <= s.soc_lower && s.soc_lower <= s.soc_upper && s.soc_upper <= 1.0) {
        return Err(Error::InvalidInstance(format!(
            "SoC corridor [{}, {}] must satisfy 0 <= lower <= upper <= 1",
            s.soc_lower, s.soc_upper
        )));
    }
    check_len("soc_ini_customer", s.soc_ini_customer.len(), customers)?;
    let corridor = s.soc_lower..=s.soc_upper;
    for (n, soc) in s.soc_ini_customer.iter().enumerate() {
        if !corridor.contains(soc) {
            return Err(Error::InvalidInstance(format!(
                "initial SoC {soc} of customer {n} lies outside [{}, {}]",
                s.soc_lower, s.soc_upper
            )));
        }
    }
    if !corridor.contains(&s.soc_ini_disco) {
        return Err(Error::InvalidInstance(format!(
            "initial DisCo SoC {} lies outside [{}, {}]",
            s.soc_ini_disco, s.soc_lower, s.soc_upper
        )));
    }

    let w = &raw.weights;
    for (name, v) in [
        ("lambda1", w.lambda1),
        ("lambda2", w.lambda2),
        ("lambda3", w.lambda3),
        ("alpha", w.alpha),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidInstance(format!(
                "{name} must be nonnegative, got {v}"
            )));
        }
    }
    Ok(raw)
}

/// Capacity split decided by the storage manager.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Division {
    pub s_disco: f64,
    pub s_customer: Vec<f64>,
}

impl Division {
    pub fn zero(customers: usize) -> Self {
        Division {
            s_disco: 0.0,
            s_customer: vec![0.0; customers],
        }
    }

    pub fn total(&self) -> f64 {
        self.s_disco + self.s_customer.iter().sum::<f64>()
    }

    pub fn check(&self, total_capacity: f64) -> Result<()> {
        if self.s_disco < 0.0 || self.s_customer.iter().any(|&s| s < 0.0) {
            return Err(Error::Verification(format!(
                "negative capacity share in {self:?}"
            )));
        }
        if self.total() > total_capacity + 1e-9 {
            return Err(Error::Verification(format!(
                "shares sum to {} which exceeds the total {total_capacity}",
                self.total()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSet {
    pub customer_ch: Vec<Vec<f64>>,
    pub customer_dis: Vec<Vec<f64>>,
    pub disco_ch: Vec<f64>,
    pub disco_dis: Vec<f64>,
    pub customer_peak: Vec<f64>,
    pub customer_valley: Vec<f64>,
    pub system_peak: f64,
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

impl ScheduleSet {
    /// Do-nothing schedule; peaks and valleys are those of the original loads.
    pub fn zero(instance: &Instance) -> Self {
        let slots = instance.slots();
        let customers = instance.customers();
        let loads = &instance.loads.customer_load;
        ScheduleSet {
            customer_ch: vec![vec![0.0; slots]; customers],
            customer_dis: vec![vec![0.0; slots]; customers],
            disco_ch: vec![0.0; slots],
            disco_dis: vec![0.0; slots],
            customer_peak: loads.iter().map(|l| max_of(l)).collect(),
            customer_valley: loads.iter().map(|l| min_of(l)).collect(),
            system_peak: max_of(&instance.loads.system_load),
        }
    }

    /// Sets every peak and valley to the tightest value the flows allow.
    pub fn tighten_peaks(&mut self, instance: &Instance) -> Result<()> {
        for n in 0..instance.customers() {
            let net = customer_net_load(instance, n, self)?;
            self.customer_peak[n] = max_of(&net);
            self.customer_valley[n] = min_of(&net);
        }
        self.system_peak = system_peak(&net_system_load(instance, self)?)?;
        Ok(())
    }

    fn check_dims(&self, slots: usize, customers: usize) -> Result<()> {
        check_len("customer_ch", self.customer_ch.len(), customers)?;
        check_len("customer_dis", self.customer_dis.len(), customers)?;
        check_len("customer_peak", self.customer_peak.len(), customers)?;
        check_len("customer_valley", self.customer_valley.len(), customers)?;
        for n in 0..customers {
            check_len("customer_ch row", self.customer_ch[n].len(), slots)?;
            check_len("customer_dis row", self.customer_dis[n].len(), slots)?;
        }
        check_len("disco_ch", self.disco_ch.len(), slots)?;
        check_len("disco_dis", self.disco_dis.len(), slots)
    }
}

/// Per-slot feeder load after all storage flows (may be negative).
pub fn net_system_load(instance: &Instance, schedules: &ScheduleSet) -> Result<Vec<f64>> {
    schedules.check_dims(instance.slots(), instance.customers())?;
    let mut net = instance.loads.system_load.clone();
    for (ch, dis) in schedules.customer_ch.iter().zip(&schedules.customer_dis) {
        for t in 0..net.len() {
            net[t] += ch[t] - dis[t];
        }
    }
    for t in 0..net.len() {
        net[t] += schedules.disco_ch[t] - schedules.disco_dis[t];
    }
    Ok(net)
}

/// Net load of one customer: own load plus own storage flows.
pub fn customer_net_load(instance: &Instance, n: usize, schedules: &ScheduleSet) -> Result<Vec<f64>> {
    schedules.check_dims(instance.slots(), instance.customers())?;
    let load = instance
        .loads
        .customer_load
        .get(n)
        .ok_or_else(|| Error::Dimension(format!("customer index {n} out of range")))?;
    Ok(load
        .iter()
        .zip(&schedules.customer_ch[n])
        .zip(&schedules.customer_dis[n])
        .map(|((l, c), d)| l + c - d)
        .collect())
}

pub fn system_peak(net_load: &[f64]) -> Result<f64> {
    if net_load.is_empty() {
        return Err(Error::InvalidArgument("peak of an empty load series".into()));
    }
    Ok(max_of(net_load))
}

fn priced_energy(prices: &[f64], net: &[f64], dt: f64) -> f64 {
    prices.iter().zip(net).map(|(p, l)| p * l * dt).sum()
}

/// DisCo wholesale purchase cost over the day.
pub fn disco_cost(instance: &Instance, schedules: &ScheduleSet) -> Result<f64> {
    let net = net_system_load(instance, schedules)?;
    Ok(priced_energy(&instance.prices.lmp, &net, instance.dt()))
}

/// Retail cost of the whole feeder at TOU rates.
pub fn customer_cost_total(instance: &Instance, schedules: &ScheduleSet) -> Result<f64> {
    let net = net_system_load(instance, schedules)?;
    Ok(priced_energy(&instance.prices.tou, &net, instance.dt()))
}

/// Objective of customer `n`'s own operation problem: bill increment plus the
/// peak-valley penalty.
pub fn customer_llm_objective(instance: &Instance, n: usize, schedules: &ScheduleSet) -> Result<f64> {
    schedules.check_dims(instance.slots(), instance.customers())?;
    if n >= instance.customers() {
        return Err(Error::Dimension(format!("customer index {n} out of range")));
    }
    let dt = instance.dt();
    let energy: f64 = (0..instance.slots())
        .map(|t| {
            instance.prices.tou[t] * (schedules.customer_ch[n][t] - schedules.customer_dis[n][t]) * dt
        })
        .sum();
    Ok(energy
        + instance.weights.alpha * (schedules.customer_peak[n] - schedules.customer_valley[n]))
}

/// Objective of the DisCo operation problem: wholesale cost increment.
pub fn disco_llm_objective(instance: &Instance, schedules: &ScheduleSet) -> Result<f64> {
    schedules.check_dims(instance.slots(), instance.customers())?;
    let dt = instance.dt();
    Ok((0..instance.slots())
        .map(|t| instance.prices.lmp[t] * (schedules.disco_ch[t] - schedules.disco_dis[t]) * dt)
        .sum())
}

/// Weighted storage-manager objective. Fails when the declared system peak
/// does not cover the realised net load.
pub fn upper_objective(instance: &Instance, schedules: &ScheduleSet) -> Result<f64> {
    let net = net_system_load(instance, schedules)?;
    let actual = system_peak(&net)?;
    if schedules.system_peak < actual - FEAS_TOL {
        return Err(Error::PeakBelowNetLoad {
            declared: schedules.system_peak,
            actual,
        });
    }
    let dt = instance.dt();
    let w = &instance.weights;
    Ok(w.lambda1 * schedules.system_peak
        + w.lambda2 * priced_energy(&instance.prices.lmp, &net, dt)
        + w.lambda3 * priced_energy(&instance.prices.tou, &net, dt))
}

/// Stored energy (kWh) at the end of each slot.
pub fn soc_trajectory(
    storage: &StorageParams,
    capacity: f64,
    ch: &[f64],
    dis: &[f64],
    soc_ini: f64,
    dt: f64,
) -> Vec<f64> {
    let mut level = capacity * soc_ini;
    ch.iter()
        .zip(dis)
        .map(|(c, d)| {
            level += c * dt * storage.eta_ch - d * dt / storage.eta_dis;
            level
        })
        .collect()
}
