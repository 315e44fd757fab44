//! Scenario runs, daily cycle, data files and reports.
//!
//! Costs reported per party:
//! - DisCo: wholesale cost of the net feeder load at LMP.
//! - Customers: retail cost at TOU of their own net load plus a share of the
//!   DisCo's storage flows proportional to their load in that slot. Over all
//!   customers this adds up to the feeder retail cost when there is no extra
//!   base load.
//!
//! Customers are reported in two groups: the first `ceil(N/2)` form
//! "Customers 1", the rest "Customers 2". Group reductions are those of the
//! group total, which equal those of the group average.

pub mod config;
pub mod io;
pub mod report;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{net_system_load, Division, Instance, PriceSeries, ScheduleSet};
use crate::mpec::{assemble_mpec, BigMPolicy};
use crate::oracle::{grid_oracle_with, OracleOptions};
use crate::response::respond;
use crate::solver::{
    extract_solution, solve_bigm_with_escalation, solve_lpcc, SolveOptions, SolveStatus,
};

pub use config::{Config, Resolved};
pub use io::{build_instance, load_inputs, load_inputs_with, Inputs};
pub use report::{emit_report, read_report, EmittedReport};
pub use synth::{gen_synthetic, generate, LoadProfile, PriceShape, SyntheticDay};

/// Values below this magnitude in reported shares and flows are rounding
/// residue of the solvers and are written as exact zeros.
const SNAP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[value(name = "bigm")]
    BigM,
    #[default]
    Lpcc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    DiscoOnly = 1,
    CustomersOnly = 2,
    Shared = 3,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 3] = [ScenarioId::DiscoOnly, ScenarioId::CustomersOnly, ScenarioId::Shared];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<ScenarioId> {
        Self::ALL.into_iter().find(|s| s.number() == n)
    }

    /// Load-profile label: D, C or S.
    pub fn label(self) -> &'static str {
        match self {
            ScenarioId::DiscoOnly => "D",
            ScenarioId::CustomersOnly => "C",
            ScenarioId::Shared => "S",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub mode: Mode,
    pub solve: SolveOptions,
    pub policy: BigMPolicy,
    /// When set, the shared scenario is also checked against a grid search.
    pub grid_step: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            mode: Mode::Lpcc,
            solve: SolveOptions::default(),
            policy: BigMPolicy::default(),
            grid_step: None,
        }
    }
}

impl From<&Resolved> for RunOptions {
    fn from(r: &Resolved) -> Self {
        RunOptions {
            mode: r.mode,
            solve: r.solve.clone(),
            policy: r.policy,
            grid_step: r.grid_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartyCosts {
    pub disco: f64,
    /// One entry per customer group.
    pub customer_groups: Vec<f64>,
    pub peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reductions {
    pub disco: f64,
    pub customer_groups: Vec<f64>,
    pub peak: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveStats {
    /// `None` when only operation LPs were solved.
    pub mode: Option<Mode>,
    pub status: Option<SolveStatus>,
    pub nodes: usize,
    /// Objective reported by the bilevel solver, before re-evaluation.
    pub solver_objective: Option<f64>,
    pub best_bound: Option<f64>,
    pub bigm_rounds: usize,
    pub bigm_binding: usize,
    pub bigm_at_exact_bound: usize,
    pub oracle_objective: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: ScenarioId,
    pub division: Division,
    pub upper_objective: f64,
    pub costs: PartyCosts,
    pub reductions: Reductions,
    /// Feeder load per slot after storage flows.
    pub net_load: Vec<f64>,
    pub schedules: ScheduleSet,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayReport {
    pub day: usize,
    pub total_capacity: f64,
    pub baseline: PartyCosts,
    pub baseline_upper_objective: f64,
    pub baseline_load: Vec<f64>,
    pub scenarios: Vec<ScenarioReport>,
}

/// Index ranges of the two customer groups (the second may be empty).
pub fn customer_groups(customers: usize) -> Vec<std::ops::Range<usize>> {
    let first = customers.div_ceil(2);
    let mut groups = vec![0..first];
    if first < customers {
        groups.push(first..customers);
    }
    groups
}

/// Retail cost of each customer, including its share of the DisCo flows.
pub fn customer_costs(instance: &Instance, schedules: &ScheduleSet) -> Vec<f64> {
    let dt = instance.dt();
    let n_cust = instance.customers();
    let loads = &instance.loads;
    (0..n_cust)
        .map(|n| {
            (0..instance.slots())
                .map(|t| {
                    let share = if loads.system_load[t] > 0.0 {
                        loads.customer_load[n][t] / loads.system_load[t]
                    } else {
                        1.0 / n_cust as f64
                    };
                    let own = loads.customer_load[n][t] + schedules.customer_ch[n][t]
                        - schedules.customer_dis[n][t];
                    let disco = schedules.disco_ch[t] - schedules.disco_dis[t];
                    instance.prices.tou[t] * (own + share * disco) * dt
                })
                .sum()
        })
        .collect()
}

pub fn party_costs(instance: &Instance, schedules: &ScheduleSet) -> Result<PartyCosts> {
    let net = net_system_load(instance, schedules)?;
    let dt = instance.dt();
    let disco = instance.prices.lmp.iter().zip(&net).map(|(p, l)| p * l * dt).sum();
    let per_customer = customer_costs(instance, schedules);
    Ok(PartyCosts {
        disco,
        customer_groups: customer_groups(instance.customers())
            .into_iter()
            .map(|g| per_customer[g].iter().sum())
            .collect(),
        peak: net.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Percentage improvement over the baseline; zero when the baseline is zero.
pub fn reduction(baseline: f64, actual: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        (baseline - actual) / baseline.abs() * 100.0
    }
}

fn reductions(baseline: &PartyCosts, actual: &PartyCosts) -> Reductions {
    Reductions {
        disco: reduction(baseline.disco, actual.disco),
        customer_groups: baseline
            .customer_groups
            .iter()
            .zip(&actual.customer_groups)
            .map(|(b, a)| reduction(*b, *a))
            .collect(),
        peak: reduction(baseline.peak, actual.peak),
    }
}

fn snap(v: &mut f64) {
    if v.abs() < SNAP {
        *v = 0.0;
    }
}

fn snap_division(d: &mut Division) {
    snap(&mut d.s_disco);
    d.s_customer.iter_mut().for_each(snap);
}

fn snap_schedules(s: &mut ScheduleSet) {
    s.customer_ch.iter_mut().chain(&mut s.customer_dis).flatten().for_each(snap);
    s.disco_ch.iter_mut().chain(&mut s.disco_dis).for_each(snap);
}

/// Fits a solver division into the capacity after removing noise.
fn clean_division(mut d: Division, total: f64) -> Division {
    snap_division(&mut d);
    d.s_disco = d.s_disco.max(0.0);
    d.s_customer.iter_mut().for_each(|s| *s = s.max(0.0));
    let sum = d.total();
    if sum > total && sum > 0.0 {
        let scale = total / sum;
        d.s_disco *= scale;
        d.s_customer.iter_mut().for_each(|s| *s *= scale);
    }
    d
}

/// Bilevel solve for the shared or customers-only scenario; returns the
/// division and the statistics.
fn bilevel_division(
    instance: &Instance,
    scenario: ScenarioId,
    opts: &RunOptions,
) -> Result<(Division, SolveStats)> {
    let mut mpec = assemble_mpec(instance)?;
    if scenario == ScenarioId::CustomersOnly {
        // the customers hold the whole unit, as the DisCo does in scenario 1
        mpec.fix_disco_share(0.0);
        mpec.require_full_split();
    }
    let mut stats = SolveStats {
        mode: Some(opts.mode),
        ..SolveStats::default()
    };
    let result = match opts.mode {
        Mode::Lpcc => solve_lpcc(&mpec, &opts.solve),
        Mode::BigM => {
            let run = solve_bigm_with_escalation(&mpec, &opts.policy, &opts.solve)?;
            stats.bigm_rounds = run.dual_m.len();
            stats.bigm_binding = run.report.binding.len();
            stats.bigm_at_exact_bound = run.report.at_exact_bound.len();
            stats.notes.extend(run.milp.warnings.iter().cloned());
            if !run.report.certifies() {
                stats.notes.push(format!(
                    "{} big-M constants bind after {} rounds; result is not certified",
                    run.report.binding.len(),
                    run.dual_m.len()
                ));
            }
            run.result
        }
    };
    stats.status = Some(result.status);
    stats.nodes = result.nodes;
    stats.best_bound = result.best_bound.is_finite().then_some(result.best_bound);
    if result.status != SolveStatus::Optimal {
        stats.notes.push(format!("bilevel solve ended {:?}", result.status));
    }
    let extracted = extract_solution(&result, &mpec)?;
    stats.solver_objective = Some(result.objective);
    Ok((extracted.division, stats))
}

fn run_one(
    instance: &Instance,
    scenario: ScenarioId,
    baseline: &PartyCosts,
    opts: &RunOptions,
) -> Result<ScenarioReport> {
    let total = instance.storage.total_capacity;
    let (division, mut stats) = match scenario {
        ScenarioId::DiscoOnly => {
            let mut d = Division::zero(instance.customers());
            d.s_disco = total;
            (d, SolveStats::default())
        }
        _ => bilevel_division(instance, scenario, opts)?,
    };
    let division = clean_division(division, total);
    // schedules are always the optimistic reaction to the reported division,
    // so every scenario is evaluated the same way
    let response = respond(instance, &division, &opts.solve)?;
    if !response.resolved {
        stats.notes.push("optimistic tie-break failed; first optimum kept".into());
    }
    let mut schedules = response.schedules;
    snap_schedules(&mut schedules);
    schedules.tighten_peaks(instance)?;
    let upper = crate::instance::upper_objective(instance, &schedules)?;
    if scenario == ScenarioId::Shared {
        if let Some(step) = opts.grid_step {
            let oracle = grid_oracle_with(
                instance,
                &OracleOptions {
                    solve: opts.solve.clone(),
                    ..OracleOptions::new(step)
                },
            )?;
            stats.oracle_objective = Some(oracle.best_objective);
            if oracle.best_objective < upper - 1e-6 * upper.abs().max(1.0) {
                stats.notes.push(format!(
                    "grid search found {} below the solver's {upper}",
                    oracle.best_objective
                ));
            }
        }
    }
    let costs = party_costs(instance, &schedules)?;
    Ok(ScenarioReport {
        scenario,
        reductions: reductions(baseline, &costs),
        net_load: net_system_load(instance, &schedules)?,
        division,
        upper_objective: upper,
        costs,
        schedules,
        stats,
    })
}

/// Runs the listed scenarios on one day.
pub fn run_day(
    instance: &Instance,
    day: usize,
    scenarios: &[ScenarioId],
    opts: &RunOptions,
) -> Result<DayReport> {
    let zero = ScheduleSet::zero(instance);
    let baseline = party_costs(instance, &zero)?;
    let reports = scenarios
        .iter()
        .map(|&s| {
            run_one(instance, s, &baseline, opts)
                .map_err(|e| Error::Solver(format!("scenario {}: {e}", s.number())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DayReport {
        day,
        total_capacity: instance.storage.total_capacity,
        baseline_upper_objective: crate::instance::upper_objective(instance, &zero)?,
        baseline_load: instance.loads.system_load.clone(),
        baseline,
        scenarios: reports,
    })
}

/// Runs a single scenario; the report holds just that scenario.
pub fn run_scenario(instance: &Instance, scenario: ScenarioId, opts: &RunOptions) -> Result<DayReport> {
    run_day(instance, 0, &[scenario], opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayInputs {
    pub customer_load: Vec<Vec<f64>>,
    pub prices: PriceSeries,
}

impl From<SyntheticDay> for DayInputs {
    fn from(d: SyntheticDay) -> Self {
        DayInputs {
            customer_load: d.customer_load,
            prices: d.prices,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayFailure {
    pub day: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub reports: Vec<DayReport>,
    pub failures: Vec<DayFailure>,
    pub defaults_applied: Vec<String>,
}

/// Re-divides the storage every day. Days are independent because each
/// operation model returns its storage to the initial state of charge.
pub fn daily_cycle(days: &[DayInputs], config: &Config, opts: Option<&RunOptions>) -> Result<CycleReport> {
    if days.is_empty() {
        return Err(Error::InvalidArgument("daily cycle needs at least one day".into()));
    }
    let mut out = CycleReport {
        reports: Vec::new(),
        failures: Vec::new(),
        defaults_applied: Vec::new(),
    };
    for (day, input) in days.iter().enumerate() {
        let outcome = build_instance(input.customer_load.clone(), input.prices.clone(), config)
            .and_then(|inputs| {
                if out.defaults_applied.is_empty() {
                    out.defaults_applied = inputs.settings.defaults_applied.clone();
                }
                let run_opts = opts.cloned().unwrap_or_else(|| RunOptions::from(&inputs.settings));
                run_day(&inputs.instance, day, &ScenarioId::ALL, &run_opts)
            });
        match outcome {
            Ok(r) => out.reports.push(r),
            Err(e) => out.failures.push(DayFailure {
                day,
                message: e.to_string(),
            }),
        }
    }
    Ok(out)
}
