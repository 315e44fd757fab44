//! Generic linear programs and the two lower-level storage operation models.
//!
//! Every program is a minimisation of `c·x + offset` over
//!
//! ```text
//!   A_g x - b_g >= 0      (inequality rows, the "g" functions)
//!   A_h x - b_h  = 0      (equality rows, the "h" functions)
//!   lower <= x <= upper   (simple bounds, possibly infinite)
//! ```
//!
//! The lower-level models keep all of their variables free and express the
//! nonnegativity of charge/discharge as explicit rows, so each inequality
//! family of the operation model owns exactly one multiplier per slot.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;

/// Who operates a block of storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Owner {
    Customer(usize),
    Disco,
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Owner::Customer(n) => write!(f, "c{n}"),
            Owner::Disco => write!(f, "d"),
        }
    }
}

/// Inequality families of the operation models, in catalogue order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    SocLower,
    SocUpper,
    DischargeNonneg,
    ChargeNonneg,
    DischargeCap,
    ChargeCap,
    PeakBound,
    ValleyBound,
}

impl Family {
    pub const CUSTOMER: [Family; 8] = [
        Family::SocLower,
        Family::SocUpper,
        Family::DischargeNonneg,
        Family::ChargeNonneg,
        Family::DischargeCap,
        Family::ChargeCap,
        Family::PeakBound,
        Family::ValleyBound,
    ];
    pub const DISCO: [Family; 6] = [
        Family::SocLower,
        Family::SocUpper,
        Family::DischargeNonneg,
        Family::ChargeNonneg,
        Family::DischargeCap,
        Family::ChargeCap,
    ];

    /// 1-based catalogue number.
    pub fn number(self) -> usize {
        self as usize + 1
    }

    /// Families whose offsets scale with the allotted capacity.
    pub fn is_capacity_dependent(self) -> bool {
        matches!(
            self,
            Family::SocLower | Family::SocUpper | Family::DischargeCap | Family::ChargeCap
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VarRole {
    Charge { owner: Owner, t: usize },
    Discharge { owner: Owner, t: usize },
    OwnerPeak { owner: Owner },
    OwnerValley { owner: Owner },
    SystemPeak,
    Capacity { owner: Owner },
    IneqDual { owner: Owner, row: usize },
    EqDual { owner: Owner, row: usize },
    Selector { pair: usize },
    /// Interpolation weight of breakpoint `k` of a party's value function.
    ValueWeight { owner: Owner, k: usize },
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub role: VarRole,
}

impl Variable {
    pub fn free(name: impl Into<String>, role: VarRole) -> Self {
        Self::bounded(name, f64::NEG_INFINITY, f64::INFINITY, role)
    }

    pub fn bounded(name: impl Into<String>, lower: f64, upper: f64, role: VarRole) -> Self {
        Variable {
            name: name.into(),
            lower,
            upper,
            role,
        }
    }

    pub fn is_free(&self) -> bool {
        self.lower == f64::NEG_INFINITY && self.upper == f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RowTag {
    Family { owner: Owner, family: Family, t: usize },
    Balance { owner: Owner },
    Stationarity { owner: Owner, var: usize },
    CapacitySplit,
    PeakLink { t: usize },
    /// Finite simple bound turned into a row by the KKT transform.
    LowerBound { var: usize },
    UpperBound { var: usize },
    SelectorDual { pair: usize },
    SelectorPrimal { pair: usize },
    /// Rows tying a party's cost to the interpolant of its optimal-value
    /// function: weights sum to one, reproduce the share, and bound the cost.
    ValueWeights { owner: Owner },
    ValueShare { owner: Owner },
    ValueCut { owner: Owner },
    Generic,
}

/// Sparse row with strictly increasing column indices and no stored zeros.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseRow {
    entries: Vec<(usize, f64)>,
}

impl SparseRow {
    /// Merges duplicate columns and drops zeros.
    pub fn new(mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (j, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += v,
                _ => merged.push((j, v)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        SparseRow { entries: merged }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(j, v)| v * x[j]).sum()
    }

    pub fn coef(&self, col: usize) -> f64 {
        self.entries
            .binary_search_by_key(&col, |e| e.0)
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub(crate) fn shifted(&self, offset: usize) -> SparseRow {
        SparseRow {
            entries: self.entries.iter().map(|&(j, v)| (j + offset, v)).collect(),
        }
    }

    pub(crate) fn negated(&self) -> SparseRow {
        SparseRow {
            entries: self.entries.iter().map(|&(j, v)| (j, -v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub row: SparseRow,
    pub rhs: f64,
    pub tag: RowTag,
}

impl Constraint {
    /// Value of `A_i x - b_i`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.row.dot(x) - self.rhs
    }
}

/// Records that inequality row `row` has offset `base + per_capacity * S`
/// where `S` is the capacity passed to the builder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityMarker {
    pub row: usize,
    pub base: f64,
    pub per_capacity: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub vars: Vec<Variable>,
    pub objective: Vec<f64>,
    pub objective_offset: f64,
    pub inequalities: Vec<Constraint>,
    pub equalities: Vec<Constraint>,
    pub capacity_markers: Vec<CapacityMarker>,
    /// Capacity the offsets were instantiated with, when parametric.
    pub capacity: Option<f64>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, var: Variable, cost: f64) -> usize {
        self.vars.push(var);
        self.objective.push(cost);
        self.vars.len() - 1
    }

    /// Adds `row·x >= rhs`; returns the inequality index.
    pub fn add_ge(&mut self, entries: Vec<(usize, f64)>, rhs: f64, tag: RowTag) -> usize {
        self.inequalities.push(Constraint {
            row: SparseRow::new(entries),
            rhs,
            tag,
        });
        self.inequalities.len() - 1
    }

    /// Adds `row·x = rhs`; returns the equality index.
    pub fn add_eq(&mut self, entries: Vec<(usize, f64)>, rhs: f64, tag: RowTag) -> usize {
        self.equalities.push(Constraint {
            row: SparseRow::new(entries),
            rhs,
            tag,
        });
        self.equalities.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_offset + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Checks dimensions and that every index is in range.
    pub fn check(&self) -> Result<()> {
        let n = self.vars.len();
        if self.objective.len() != n {
            return Err(Error::Dimension(format!(
                "objective has {} entries for {n} variables",
                self.objective.len()
            )));
        }
        for c in self.inequalities.iter().chain(&self.equalities) {
            if let Some(&(j, _)) = c.row.entries().last() {
                if j >= n {
                    return Err(Error::Dimension(format!("row references column {j} of {n}")));
                }
            }
        }
        for v in &self.vars {
            if v.lower > v.upper || v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(Error::InvalidArgument(format!(
                    "variable {} has empty bounds [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
        }
        Ok(())
    }
}

/// Objective value, smallest inequality residual, largest equality residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub min_g: f64,
    pub max_abs_h: f64,
}

pub fn evaluate(lp: &LinearProgram, x: &[f64]) -> Result<Evaluation> {
    if x.len() != lp.num_vars() {
        return Err(Error::Dimension(format!(
            "point has {} entries for {} variables",
            x.len(),
            lp.num_vars()
        )));
    }
    let min_g = lp
        .inequalities
        .iter()
        .map(|c| c.residual(x))
        .fold(f64::INFINITY, f64::min);
    let max_abs_h = lp
        .equalities
        .iter()
        .map(|c| c.residual(x).abs())
        .fold(0.0, f64::max);
    Ok(Evaluation {
        objective: lp.objective_value(x),
        min_g,
        max_abs_h,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// One multiplier per inequality row (nonnegative at optimality).
    pub omega: Vec<f64>,
    /// One multiplier per equality row.
    pub v: Vec<f64>,
    /// `c - A_g^T omega - A_h^T v`, the simple-bound multipliers.
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Column layout of an operation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperationLayout {
    pub slots: usize,
    pub has_peak_valley: bool,
}

impl OperationLayout {
    pub fn ch(&self, t: usize) -> usize {
        t
    }
    pub fn dis(&self, t: usize) -> usize {
        self.slots + t
    }
    pub fn peak(&self) -> Option<usize> {
        self.has_peak_valley.then_some(2 * self.slots)
    }
    pub fn valley(&self) -> Option<usize> {
        self.has_peak_valley.then_some(2 * self.slots + 1)
    }
    pub fn num_vars(&self) -> usize {
        2 * self.slots + if self.has_peak_valley { 2 } else { 0 }
    }
    /// Index of the row of `family` at slot `t` (rows are family-major).
    pub fn row(&self, family: Family, t: usize) -> usize {
        (family.number() - 1) * self.slots + t
    }
}

struct OperationSpec<'a> {
    owner: Owner,
    prices: &'a [f64],
    soc_ini: f64,
    /// Original load, present only for customers.
    load: Option<&'a [f64]>,
    alpha: f64,
}

fn build_operation(instance: &Instance, spec: OperationSpec<'_>, capacity: f64) -> Result<LinearProgram> {
    if !(capacity.is_finite() && capacity >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "capacity must be a nonnegative number, got {capacity}"
        )));
    }
    let slots = instance.slots();
    let dt = instance.dt();
    let st = &instance.storage;
    let owner = spec.owner;
    let layout = OperationLayout {
        slots,
        has_peak_valley: spec.load.is_some(),
    };

    let mut lp = LinearProgram::new();
    for t in 0..slots {
        lp.add_var(
            Variable::free(format!("ch_{owner}_{t}"), VarRole::Charge { owner, t }),
            spec.prices[t] * dt,
        );
    }
    for t in 0..slots {
        lp.add_var(
            Variable::free(format!("dis_{owner}_{t}"), VarRole::Discharge { owner, t }),
            -spec.prices[t] * dt,
        );
    }
    if layout.has_peak_valley {
        lp.add_var(
            Variable::free(format!("peak_{owner}"), VarRole::OwnerPeak { owner }),
            spec.alpha,
        );
        lp.add_var(
            Variable::free(format!("valley_{owner}"), VarRole::OwnerValley { owner }),
            -spec.alpha,
        );
    }

    let charge_gain = dt * st.eta_ch;
    let discharge_cost = dt / st.eta_dis;
    let cumulative = |t: usize, sign: f64| -> Vec<(usize, f64)> {
        (0..=t)
            .flat_map(|tau| {
                [
                    (layout.ch(tau), sign * charge_gain),
                    (layout.dis(tau), -sign * discharge_cost),
                ]
            })
            .collect()
    };

    let families: &[Family] = if layout.has_peak_valley {
        &Family::CUSTOMER
    } else {
        &Family::DISCO
    };
    let k = st.power_ratio;
    for &family in families {
        for t in 0..slots {
            let tag = RowTag::Family { owner, family, t };
            // offsets are base + per_capacity * capacity
            let (entries, base, per_capacity) = match family {
                Family::SocLower => (cumulative(t, 1.0), 0.0, -(spec.soc_ini - st.soc_lower)),
                Family::SocUpper => (cumulative(t, -1.0), 0.0, spec.soc_ini - st.soc_upper),
                Family::DischargeNonneg => (vec![(layout.dis(t), 1.0)], 0.0, 0.0),
                Family::ChargeNonneg => (vec![(layout.ch(t), 1.0)], 0.0, 0.0),
                Family::DischargeCap => (vec![(layout.dis(t), -1.0)], 0.0, -k),
                Family::ChargeCap => (vec![(layout.ch(t), -1.0)], 0.0, -k),
                Family::PeakBound => {
                    let load = spec.load.expect("customer model")[t];
                    let peak = layout.peak().expect("customer model");
                    (
                        vec![(peak, 1.0), (layout.ch(t), -1.0), (layout.dis(t), 1.0)],
                        load,
                        0.0,
                    )
                }
                Family::ValleyBound => {
                    let load = spec.load.expect("customer model")[t];
                    let valley = layout.valley().expect("customer model");
                    (
                        vec![(layout.ch(t), 1.0), (layout.dis(t), -1.0), (valley, -1.0)],
                        -load,
                        0.0,
                    )
                }
            };
            let row = lp.add_ge(entries, base + per_capacity * capacity, tag);
            debug_assert_eq!(row, layout.row(family, t));
            if family.is_capacity_dependent() {
                lp.capacity_markers.push(CapacityMarker {
                    row,
                    base,
                    per_capacity,
                });
            }
        }
    }

    let balance: Vec<(usize, f64)> = (0..slots)
        .flat_map(|t| [(layout.ch(t), charge_gain), (layout.dis(t), -discharge_cost)])
        .collect();
    lp.add_eq(balance, 0.0, RowTag::Balance { owner });
    lp.capacity = Some(capacity);
    Ok(lp)
}

/// Operation model of customer `n` holding `capacity` kWh: TOU bill increment
/// plus `alpha` times the peak-valley spread of its net load.
pub fn build_llm_c(instance: &Instance, n: usize, capacity: f64) -> Result<LinearProgram> {
    let load = instance
        .loads
        .customer_load
        .get(n)
        .ok_or_else(|| Error::Dimension(format!("customer index {n} out of range")))?;
    build_operation(
        instance,
        OperationSpec {
            owner: Owner::Customer(n),
            prices: &instance.prices.tou,
            soc_ini: instance.storage.soc_ini_customer[n],
            load: Some(load),
            alpha: instance.weights.alpha,
        },
        capacity,
    )
}

/// Operation model of the DisCo holding `capacity` kWh: wholesale cost increment.
pub fn build_llm_d(instance: &Instance, capacity: f64) -> Result<LinearProgram> {
    build_operation(
        instance,
        OperationSpec {
            owner: Owner::Disco,
            prices: &instance.prices.lmp,
            soc_ini: instance.storage.soc_ini_disco,
            load: None,
            alpha: 0.0,
        },
        capacity,
    )
}

pub fn operation_layout(lp: &LinearProgram, slots: usize) -> OperationLayout {
    OperationLayout {
        slots,
        has_peak_valley: lp.num_vars() == 2 * slots + 2,
    }
}
