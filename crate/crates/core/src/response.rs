//! Lower-level reaction to a fixed division.
//!
//! Every party solves its own operation LP on its share. Among the optimal
//! schedules the storage manager then picks the combination it likes best
//! (optimistic convention). The choice has to be made jointly because the
//! system peak couples the parties, so the tie-break is one LP over all
//! schedules with each party's objective pinned to its optimum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{upper_objective, Division, Instance, ScheduleSet};
use crate::lp::{build_llm_c, build_llm_d, LinearProgram, LpStatus, Owner, RowTag, VarRole, Variable};
use crate::mpec::MpecModel;
use crate::solver::{solve_lp, SolveOptions};

/// Relative slack allowed on a pinned lower-level objective.
pub const PIN_TOL: f64 = 1e-9;

pub(crate) fn pin_slack(value: f64) -> f64 {
    PIN_TOL * value.abs().max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSolution {
    pub owner: Owner,
    pub capacity: f64,
    /// Schedule after the optimistic tie-break.
    pub x: Vec<f64>,
    /// Multipliers of the operation model; they stay optimal for `x`.
    pub omega: Vec<f64>,
    pub v: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerResponse {
    pub division: Division,
    pub schedules: ScheduleSet,
    /// Customers in order, then the DisCo.
    pub blocks: Vec<BlockSolution>,
    pub upper_objective: f64,
    /// False when the tie-break LP failed and the first optimum was kept.
    pub resolved: bool,
}

impl LowerResponse {
    pub fn lower_objectives(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.objective).collect()
    }
}

/// Operation models of every party at `division`, customers first.
pub fn operation_models(instance: &Instance, division: &Division) -> Result<Vec<(Owner, LinearProgram)>> {
    let mut out = Vec::with_capacity(instance.customers() + 1);
    for (n, &s) in division.s_customer.iter().enumerate() {
        out.push((Owner::Customer(n), build_llm_c(instance, n, s)?));
    }
    out.push((Owner::Disco, build_llm_d(instance, division.s_disco)?));
    Ok(out)
}

/// Assembles a schedule set from per-party operation vectors laid out as
/// `[ch, dis, (peak, valley)]`, customers first.
pub fn schedules_from_blocks(instance: &Instance, xs: &[&[f64]]) -> Result<ScheduleSet> {
    let slots = instance.slots();
    let customers = instance.customers();
    if xs.len() != customers + 1 {
        return Err(Error::Dimension(format!(
            "{} schedule blocks for {customers} customers",
            xs.len()
        )));
    }
    let mut s = ScheduleSet::zero(instance);
    for (n, x) in xs[..customers].iter().enumerate() {
        if x.len() != 2 * slots + 2 {
            return Err(Error::Dimension(format!("customer block {n} has {} entries", x.len())));
        }
        s.customer_ch[n] = x[..slots].to_vec();
        s.customer_dis[n] = x[slots..2 * slots].to_vec();
        s.customer_peak[n] = x[2 * slots];
        s.customer_valley[n] = x[2 * slots + 1];
    }
    let d = xs[customers];
    if d.len() != 2 * slots {
        return Err(Error::Dimension(format!("DisCo block has {} entries", d.len())));
    }
    s.disco_ch = d[..slots].to_vec();
    s.disco_dis = d[slots..].to_vec();
    let net = crate::instance::net_system_load(instance, &s)?;
    s.system_peak = crate::instance::system_peak(&net)?;
    Ok(s)
}

/// Joint tie-break over the optimal faces of all parties. Returns the
/// per-party points, or `None` if the LP did not solve cleanly.
fn joint_resolve(
    instance: &Instance,
    models: &[(Owner, LinearProgram)],
    optima: &[f64],
    opts: &SolveOptions,
) -> Option<Vec<Vec<f64>>> {
    let slots = instance.slots();
    let dt = instance.dt();
    let w = instance.weights;
    let mut lp = LinearProgram::new();
    let mut starts = Vec::with_capacity(models.len());
    for ((_, m), &z) in models.iter().zip(optima) {
        let start = lp.num_vars();
        starts.push(start);
        for v in &m.vars {
            lp.add_var(v.clone(), 0.0);
        }
        for c in &m.inequalities {
            lp.add_ge(c.row.shifted(start).entries().to_vec(), c.rhs, c.tag);
        }
        for c in &m.equalities {
            lp.add_eq(c.row.shifted(start).entries().to_vec(), c.rhs, c.tag);
        }
        let pin: Vec<(usize, f64)> = m
            .objective
            .iter()
            .enumerate()
            .map(|(j, &c)| (start + j, -c))
            .collect();
        lp.add_ge(pin, -(z - m.objective_offset) - pin_slack(z), RowTag::Generic);
    }
    let peak = lp.add_var(Variable::free("peak", VarRole::SystemPeak), w.lambda1);
    for t in 0..slots {
        let price = (w.lambda2 * instance.prices.lmp[t] + w.lambda3 * instance.prices.tou[t]) * dt;
        let mut entries = vec![(peak, 1.0)];
        for &start in &starts {
            entries.push((start + t, -1.0));
            entries.push((start + slots + t, 1.0));
            lp.objective[start + t] += price;
            lp.objective[start + slots + t] -= price;
        }
        lp.add_ge(entries, instance.loads.system_load[t], RowTag::PeakLink { t });
    }
    let sol = solve_lp(&lp, opts);
    if sol.status != LpStatus::Optimal {
        return None;
    }
    Some(
        models
            .iter()
            .zip(&starts)
            .map(|((_, m), &start)| sol.x[start..start + m.num_vars()].to_vec())
            .collect(),
    )
}

/// Optimistic lower-level reaction to `division`.
pub fn respond(instance: &Instance, division: &Division, opts: &SolveOptions) -> Result<LowerResponse> {
    division.check(instance.storage.total_capacity)?;
    if division.s_customer.len() != instance.customers() {
        return Err(Error::Dimension(format!(
            "division has {} customer shares for {} customers",
            division.s_customer.len(),
            instance.customers()
        )));
    }
    let models = operation_models(instance, division)?;
    let mut solutions = Vec::with_capacity(models.len());
    for (owner, lp) in &models {
        let sol = solve_lp(lp, opts);
        if sol.status != LpStatus::Optimal {
            return Err(Error::Solver(format!(
                "operation model of {owner} ended {:?} at capacity {}",
                sol.status,
                lp.capacity.unwrap_or(f64::NAN)
            )));
        }
        solutions.push(sol);
    }
    let optima: Vec<f64> = solutions.iter().map(|s| s.objective).collect();
    let resolved = joint_resolve(instance, &models, &optima, opts);
    let is_resolved = resolved.is_some();
    let points = resolved.unwrap_or_else(|| solutions.iter().map(|s| s.x.clone()).collect());

    let blocks: Vec<BlockSolution> = models
        .iter()
        .zip(solutions)
        .zip(points)
        .map(|(((owner, lp), sol), x)| BlockSolution {
            owner: *owner,
            capacity: lp.capacity.unwrap_or(0.0),
            objective: sol.objective,
            x,
            omega: sol.omega,
            v: sol.v,
        })
        .collect();
    let xs: Vec<&[f64]> = blocks.iter().map(|b| b.x.as_slice()).collect();
    let schedules = schedules_from_blocks(instance, &xs)?;
    let upper = upper_objective(instance, &schedules)?;
    Ok(LowerResponse {
        division: division.clone(),
        schedules,
        blocks,
        upper_objective: upper,
        resolved: is_resolved,
    })
}

impl MpecModel {
    /// MPEC point built from a lower-level response: division, schedules,
    /// multipliers of each block, and the tight system peak.
    pub fn point_from_response(&self, response: &LowerResponse) -> Vec<f64> {
        let mut x = vec![0.0; self.lp.num_vars()];
        x[self.peak_var] = response.schedules.system_peak;
        x[self.s_disco] = response.division.s_disco;
        for (&j, &s) in self.s_customer.iter().zip(&response.division.s_customer) {
            x[j] = s;
        }
        for (block, sol) in self.blocks.iter().zip(&response.blocks) {
            x[block.x_start..block.x_start + sol.x.len()].copy_from_slice(&sol.x);
            // operation models have free variables, so no bound rows were added
            debug_assert_eq!(block.kkt.bound_rows, 0);
            x[block.omega_start..block.omega_start + sol.omega.len()].copy_from_slice(&sol.omega);
            x[block.v_start..block.v_start + sol.v.len()].copy_from_slice(&sol.v);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{LoadSet, PriceSeries, StorageParams, TimeGrid, Weights};

    fn instance() -> Instance {
        Instance::new(
            TimeGrid::new(4, 1.0).unwrap(),
            PriceSeries {
                lmp: vec![1.0, 1.0, 3.0, 3.0],
                tou: vec![1.0, 1.0, 2.0, 2.0],
            },
            LoadSet::new(vec![vec![4.0, 4.0, 6.0, 4.0]], None),
            StorageParams::new(4.0, 1.0, 1.0, 1),
            Weights::default(),
        )
        .unwrap()
    }

    #[test]
    fn zero_division_gives_baseline() {
        let inst = instance();
        let r = respond(&inst, &Division::zero(1), &SolveOptions::default()).unwrap();
        let base = upper_objective(&inst, &ScheduleSet::zero(&inst)).unwrap();
        assert!((r.upper_objective - base).abs() < 1e-9);
        assert!(r.resolved);
        let lower = r.lower_objectives();
        assert!((lower[0] - inst.weights.alpha * 2.0).abs() < 1e-12);
        assert!(lower[1].abs() < 1e-12);
    }

    #[test]
    fn response_never_exceeds_baseline_by_more_than_penalties() {
        let inst = instance();
        let div = Division {
            s_disco: 2.0,
            s_customer: vec![2.0],
        };
        let r = respond(&inst, &div, &SolveOptions::default()).unwrap();
        // every party is at least as well off as doing nothing
        assert!(r.blocks[1].objective <= 1e-9);
        let zero_c = inst.weights.alpha * (6.0 - 4.0);
        assert!(r.blocks[0].objective <= zero_c + 1e-9);
    }

    #[test]
    fn over_allocation_rejected() {
        let inst = instance();
        let div = Division {
            s_disco: 3.0,
            s_customer: vec![2.0],
        };
        assert!(respond(&inst, &div, &SolveOptions::default()).is_err());
    }
}
