use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{upper_objective, Division, ScheduleSet, FEAS_TOL};
use crate::lp::Owner;
use crate::mpec::MpecModel;
use crate::oracle::check_schedule_invariants;
use crate::response::schedules_from_blocks;

use super::SolveResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualRecord {
    pub owner: Owner,
    pub omega: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedSolution {
    pub division: Division,
    pub schedules: ScheduleSet,
    pub duals: Vec<DualRecord>,
    /// Upper objective re-evaluated from the extracted quantities.
    pub objective: f64,
}

/// Shares within this distance below zero are solver noise and read as zero.
const SHARE_NOISE: f64 = 1e-9;

/// Maps a solver point of `mpec` (or of its big-M linearisation, whose extra
/// columns are ignored) back to named quantities and re-checks every
/// constraint of the division and the operation models.
pub fn extract_solution(result: &SolveResult, mpec: &MpecModel) -> Result<ExtractedSolution> {
    let x = result
        .incumbent
        .as_deref()
        .ok_or_else(|| Error::Solver(format!("no incumbent ({:?})", result.status)))?;
    if x.len() < mpec.lp.num_vars() {
        return Err(Error::Dimension(format!(
            "solution has {} entries, model needs {}",
            x.len(),
            mpec.lp.num_vars()
        )));
    }
    let instance = &mpec.instance;
    let mut division = mpec.division(x);
    let denoise = |s: &mut f64| {
        if *s < 0.0 && *s > -SHARE_NOISE {
            *s = 0.0;
        }
    };
    denoise(&mut division.s_disco);
    division.s_customer.iter_mut().for_each(denoise);
    division.check(instance.storage.total_capacity)?;

    let xs: Vec<&[f64]> = mpec.blocks.iter().map(|b| b.x(x)).collect();
    let mut schedules = schedules_from_blocks(instance, &xs)?;
    schedules.system_peak = x[mpec.peak_var];

    let report = check_schedule_invariants(instance, &division, &schedules, FEAS_TOL);
    if !report.pass {
        let failed: Vec<String> = report
            .items
            .iter()
            .filter(|i| !i.pass)
            .map(|i| format!("{} (violation {:.3e})", i.name, i.violation))
            .collect();
        return Err(Error::Verification(failed.join("; ")));
    }
    let objective = upper_objective(instance, &schedules)?;
    let duals = mpec
        .blocks
        .iter()
        .map(|b| DualRecord {
            owner: b.owner,
            omega: b.omega(x).to_vec(),
            v: b.v(x).to_vec(),
        })
        .collect();
    Ok(ExtractedSolution {
        division,
        schedules,
        duals,
        objective,
    })
}
