//! Solver-independent certification: exhaustive division grids, residual
//! checks of KKT candidates, and direct checks of schedule feasibility.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{
    customer_net_load, net_system_load, soc_trajectory, Division, Instance, ScheduleSet,
};
use crate::lp::{LinearProgram, LpStatus, RowTag};
use crate::mpec::KktSystem;
use crate::response::{pin_slack, respond};
use crate::solver::{solve_lp, SolveOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub division: Division,
    /// Customers in order, then the DisCo.
    pub lower_objectives: Vec<f64>,
    pub upper_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub step: f64,
    pub best_division: Division,
    pub best_objective: f64,
    pub records: Vec<GridRecord>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptions {
    pub step: f64,
    /// Refuse grids with more candidate points than this.
    pub max_points: u128,
    /// Pin the DisCo share instead of enumerating it.
    pub disco_share: Option<f64>,
    pub solve: SolveOptions,
}

impl OracleOptions {
    pub fn new(step: f64) -> Self {
        OracleOptions {
            step,
            max_points: 200_000,
            disco_share: None,
            solve: SolveOptions::default(),
        }
    }
}

/// Best optimistic division on the grid `{0, step, 2 step, ...}`.
pub fn grid_oracle(instance: &Instance, step: f64) -> Result<OracleReport> {
    grid_oracle_with(instance, &OracleOptions::new(step))
}

/// Objectives closer than this (relative) count as ties; the lexicographically
/// smaller division, i.e. the one enumerated first, is kept.
const TIE_TOL: f64 = 1e-12;

pub fn grid_oracle_with(instance: &Instance, opts: &OracleOptions) -> Result<OracleReport> {
    let step = opts.step;
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidArgument(format!("grid step must be positive, got {step}")));
    }
    let total = instance.storage.total_capacity;
    let levels = (total / step + 1e-9).floor() as usize;
    let free_dims = instance.customers() as u32 + u32::from(opts.disco_share.is_none());
    let points = (levels as u128 + 1).checked_pow(free_dims).unwrap_or(u128::MAX);
    if points > opts.max_points {
        return Err(Error::GridTooLarge {
            points,
            limit: opts.max_points,
        });
    }

    let customers = instance.customers();
    let mut records = Vec::new();
    let mut best: Option<usize> = None;
    let mut ties = 0usize;
    let mut unresolved = 0usize;
    let mut counters = vec![0usize; free_dims as usize];
    let pinned = opts.disco_share.map(|s| s.clamp(0.0, total));
    let budget = pinned.map_or(levels, |s| ((total - s) / step + 1e-9).floor() as usize);
    loop {
        let used: usize = counters.iter().sum();
        if used <= budget {
            let (s_disco, shares) = match pinned {
                Some(s) => (s, &counters[..]),
                None => (counters[0] as f64 * step, &counters[1..]),
            };
            let division = Division {
                s_disco,
                s_customer: shares.iter().map(|&i| i as f64 * step).collect(),
            };
            let response = respond(instance, &division, &opts.solve)?;
            if !response.resolved {
                unresolved += 1;
            }
            let value = response.upper_objective;
            let idx = records.len();
            records.push(GridRecord {
                division,
                lower_objectives: response.lower_objectives(),
                upper_objective: value,
            });
            match best {
                None => best = Some(idx),
                Some(b) => {
                    let incumbent = records[b].upper_objective;
                    let tol = TIE_TOL * incumbent.abs().max(1.0);
                    if value < incumbent - tol {
                        best = Some(idx);
                    } else if value <= incumbent + tol {
                        ties += 1;
                    }
                }
            }
        }
        // odometer over the free shares, last digit fastest
        let mut k = counters.len();
        loop {
            if k == 0 {
                let b = best.expect("grid has at least the origin");
                let mut notes = vec![format!(
                    "{} grid points, optimistic tie-break applied to every point",
                    records.len()
                )];
                if ties > 0 {
                    notes.push(format!("{ties} points tied with the best objective"));
                }
                if unresolved > 0 {
                    notes.push(format!(
                        "{unresolved} points kept the first lower-level optimum (tie-break LP failed)"
                    ));
                }
                debug_assert_eq!(customers, records[b].division.s_customer.len());
                return Ok(OracleReport {
                    step,
                    best_division: records[b].division.clone(),
                    best_objective: records[b].upper_objective,
                    records,
                    notes,
                });
            }
            k -= 1;
            if counters[k] < budget {
                counters[k] += 1;
                break;
            }
            counters[k] = 0;
        }
    }
}

/// Among the optimal points of `lp`, one minimising `upper_gradient · x`.
/// The original objective is pinned to its optimum within a relative `1e-9`.
pub fn optimistic_resolve(lp: &LinearProgram, upper_gradient: &[f64], opts: &SolveOptions) -> Result<Vec<f64>> {
    if upper_gradient.len() != lp.num_vars() {
        return Err(Error::Dimension(format!(
            "gradient has {} entries for {} variables",
            upper_gradient.len(),
            lp.num_vars()
        )));
    }
    let first = solve_lp(lp, opts);
    if first.status != LpStatus::Optimal {
        return Err(Error::Solver(format!("lower-level LP ended {:?}", first.status)));
    }
    let z = first.objective;
    let mut secondary = lp.clone();
    let pin: Vec<(usize, f64)> = lp.objective.iter().enumerate().map(|(j, &c)| (j, -c)).collect();
    secondary.add_ge(pin, -(z - lp.objective_offset) - pin_slack(z), RowTag::Generic);
    secondary.objective = upper_gradient.to_vec();
    secondary.objective_offset = 0.0;
    let second = solve_lp(&secondary, opts);
    if second.status != LpStatus::Optimal {
        return Err(Error::Solver(format!("tie-break LP ended {:?}", second.status)));
    }
    let achieved = lp.objective_value(&second.x);
    if achieved > z + pin_slack(z) + opts.feasibility_tol {
        return Err(Error::Verification(format!(
            "tie-break left the optimal face: {achieved} against optimum {z}"
        )));
    }
    Ok(second.x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity: f64,
    pub min_dual: f64,
    pub complementarity: f64,
    pub primal_violation: f64,
    pub pass: bool,
}

/// Residuals of a candidate `(x, omega, v)` in `kkt`.
pub fn check_kkt_residuals(kkt: &KktSystem, x: &[f64], omega: &[f64], v: &[f64], tol: f64) -> Result<KktReport> {
    let lp = &kkt.primal;
    if x.len() != lp.num_vars() || omega.len() != lp.inequalities.len() || v.len() != lp.equalities.len() {
        return Err(Error::Dimension(format!(
            "candidate sizes ({}, {}, {}) against system ({}, {}, {})",
            x.len(),
            omega.len(),
            v.len(),
            lp.num_vars(),
            lp.inequalities.len(),
            lp.equalities.len()
        )));
    }
    let stationarity = kkt
        .stationarity
        .iter()
        .map(|s| s.residual(omega, v).abs())
        .fold(0.0, f64::max);
    let min_dual = omega.iter().copied().fold(f64::INFINITY, f64::min);
    let mut complementarity = 0.0f64;
    let mut primal_violation = 0.0f64;
    for (c, &w) in lp.inequalities.iter().zip(omega) {
        let g = c.residual(x);
        complementarity = complementarity.max((w * g).abs());
        primal_violation = primal_violation.max(-g);
    }
    for c in &lp.equalities {
        primal_violation = primal_violation.max(c.residual(x).abs());
    }
    let min_dual = if min_dual.is_finite() { min_dual } else { 0.0 };
    let pass = stationarity <= tol && min_dual >= -tol && complementarity <= tol && primal_violation <= tol;
    Ok(KktReport {
        stationarity,
        min_dual,
        complementarity,
        primal_violation,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    /// Largest violation found, zero when satisfied exactly.
    pub violation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub items: Vec<CheckItem>,
    pub pass: bool,
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Itemised feasibility of a division and schedule set.
pub fn check_schedule_invariants(
    instance: &Instance,
    division: &Division,
    schedules: &ScheduleSet,
    tol: f64,
) -> ScheduleReport {
    let mut items = Vec::new();
    let mut push = |name: String, violation: f64| {
        let violation = violation.max(0.0);
        items.push(CheckItem {
            pass: violation <= tol,
            name,
            violation,
        });
    };
    let net = match (net_system_load(instance, schedules), division.s_customer.len() == instance.customers()) {
        (Ok(net), true) => net,
        _ => {
            push("dimensions".into(), f64::INFINITY);
            return ScheduleReport { items, pass: false };
        }
    };

    let st = &instance.storage;
    let shares = std::iter::once(division.s_disco).chain(division.s_customer.iter().copied());
    let negative = max_of(shares.map(|s| -s));
    push(
        "capacity split".into(),
        (division.total() - st.total_capacity).max(negative),
    );

    let dt = instance.dt();
    let k = st.power_ratio;
    let mut parties: Vec<(String, f64, &[f64], &[f64], f64)> = (0..instance.customers())
        .map(|n| {
            (
                format!("c{n}"),
                division.s_customer[n],
                schedules.customer_ch[n].as_slice(),
                schedules.customer_dis[n].as_slice(),
                st.soc_ini_customer[n],
            )
        })
        .collect();
    parties.push((
        "d".into(),
        division.s_disco,
        &schedules.disco_ch,
        &schedules.disco_dis,
        st.soc_ini_disco,
    ));
    for (name, cap, ch, dis, soc_ini) in parties {
        let flows = ch.iter().chain(dis);
        push(format!("nonnegative power {name}"), max_of(flows.clone().map(|p| -p)));
        push(format!("power cap {name}"), max_of(flows.map(|p| p - k * cap)));
        let energy = soc_trajectory(st, cap, ch, dis, soc_ini, dt);
        push(
            format!("state of charge {name}"),
            max_of(
                energy
                    .iter()
                    .map(|e| (st.soc_lower * cap - e).max(e - st.soc_upper * cap)),
            ),
        );
        let last = energy.last().copied().unwrap_or(cap * soc_ini);
        push(format!("energy balance {name}"), (last - cap * soc_ini).abs());
    }

    for n in 0..instance.customers() {
        if let Ok(own) = customer_net_load(instance, n, schedules) {
            let high = max_of(own.iter().copied());
            let low = -max_of(own.iter().map(|v| -v));
            push(
                format!("peak and valley c{n}"),
                (high - schedules.customer_peak[n]).max(schedules.customer_valley[n] - low),
            );
        }
    }
    push("system peak".into(), max_of(net.iter().copied()) - schedules.system_peak);

    let pass = items.iter().all(|i| i.pass);
    ScheduleReport { items, pass }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{LoadSet, PriceSeries, StorageParams, TimeGrid, Weights};
    use crate::lp::build_llm_d;
    use crate::mpec::derive_kkt;

    fn instance(total: f64) -> Instance {
        Instance::new(
            TimeGrid::new(4, 1.0).unwrap(),
            PriceSeries {
                lmp: vec![1.0, 1.0, 3.0, 3.0],
                tou: vec![1.0, 1.0, 2.0, 2.0],
            },
            LoadSet::new(vec![vec![4.0, 4.0, 6.0, 4.0]], None),
            StorageParams::new(total, 1.0, 1.0, 1),
            Weights::default(),
        )
        .unwrap()
    }

    #[test]
    fn zero_capacity_single_point() {
        let inst = instance(0.0);
        let r = grid_oracle(&inst, 1.0).unwrap();
        assert_eq!(r.records.len(), 1);
        let base = crate::instance::upper_objective(&inst, &ScheduleSet::zero(&inst)).unwrap();
        assert!((r.best_objective - base).abs() < 1e-9);
    }

    #[test]
    fn guard_trips() {
        let inst = instance(4.0);
        let opts = OracleOptions {
            max_points: 10,
            ..OracleOptions::new(0.1)
        };
        assert!(matches!(grid_oracle_with(&inst, &opts), Err(Error::GridTooLarge { .. })));
        assert!(grid_oracle(&inst, 0.0).is_err());
    }

    #[test]
    fn finer_grid_never_worse() {
        let inst = instance(4.0);
        let coarse = grid_oracle(&inst, 1.0).unwrap();
        let fine = grid_oracle(&inst, 0.5).unwrap();
        assert!(fine.best_objective <= coarse.best_objective + 1e-9);
        // simplex of grid points with two shares and four levels each
        assert_eq!(coarse.records.len(), 15);
    }

    #[test]
    fn baseline_passes_invariants() {
        let inst = instance(4.0);
        let r = check_schedule_invariants(&inst, &Division::zero(1), &ScheduleSet::zero(&inst), 1e-6);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn excess_discharge_fails_cap() {
        let inst = instance(4.0);
        let div = Division {
            s_disco: 0.0,
            s_customer: vec![2.0],
        };
        let mut s = ScheduleSet::zero(&inst);
        s.customer_dis[0][1] = 3.0;
        s.customer_ch[0][0] = 3.0;
        s.tighten_peaks(&inst).unwrap();
        let r = check_schedule_invariants(&inst, &div, &s, 1e-6);
        let cap = r.items.iter().find(|i| i.name == "power cap c0").unwrap();
        assert!(!cap.pass);
        assert!((cap.violation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kkt_residuals_of_simplex_optimum() {
        let inst = instance(4.0);
        let lp = build_llm_d(&inst, 2.0).unwrap();
        let sol = solve_lp(&lp, &SolveOptions::default());
        let kkt = derive_kkt(&lp);
        let (omega, v) = kkt.lift_duals(&sol);
        let r = check_kkt_residuals(&kkt, &sol.x, &omega, &v, 1e-6).unwrap();
        assert!(r.pass, "{r:?}");
        let mut bumped = omega.clone();
        bumped[0] += 1.0;
        let r = check_kkt_residuals(&kkt, &sol.x, &bumped, &v, 1e-6).unwrap();
        assert!(!r.pass);
        assert!(r.stationarity >= 1.0 - 1e-9);
    }

    #[test]
    fn zero_cost_program_accepts_zero() {
        let mut lp = LinearProgram::new();
        lp.add_var(crate::lp::Variable::free("x", crate::lp::VarRole::Generic), 0.0);
        lp.add_ge(vec![(0, 1.0)], 0.0, RowTag::Generic);
        let kkt = derive_kkt(&lp);
        assert!(check_kkt_residuals(&kkt, &[0.0], &[0.0], &[], 1e-9).unwrap().pass);
    }
}
