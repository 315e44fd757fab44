//! C interface to `ess-bilevel`.
//!
//! Every function returns an [`EssStatus`]; on failure the message is
//! available from [`ess_last_error`] on the same thread until the next call.
//! Handles are created by `*_load`/`*_synthetic`/`ess_run_day` and must be
//! released with the matching `*_free`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Duration;

use ess_bilevel::mpec::{assemble_mpec, linearize_big_m};
use ess_bilevel::oracle::{grid_oracle_with, OracleOptions};
use ess_bilevel::scenario::{
    build_instance, emit_report, generate, load_inputs, run_day, Config, CycleReport, DayReport,
    Inputs, LoadProfile, Mode, PriceShape, RunOptions, ScenarioId, ScenarioReport,
};
use ess_bilevel::solver::export_mps;
use ess_bilevel::Error;

#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EssStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    Solver = 5,
    Verification = 6,
    /// The grid search would exceed its point budget.
    TooLarge = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EssMode {
    Lpcc = 0,
    BigM = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EssLoadProfile {
    Duck = 0,
    Typical = 1,
    Mixed = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EssPriceShape {
    Conforming = 0,
    Conflicting = 1,
}

/// Solver settings for [`ess_run_day`]. Non-positive limits mean none.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssRunOptions {
    pub mode: EssMode,
    pub time_limit_secs: f64,
    pub grid_step: f64,
}

/// Percentage reductions of one scenario against the no-storage baseline.
/// `customers_2` is NaN when there is a single customer.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssReductions {
    pub disco: f64,
    pub customers_1: f64,
    pub customers_2: f64,
    pub peak: f64,
}

/// A validated instance with its resolved settings.
pub struct EssInstance {
    inputs: Inputs,
}

/// Results of scenarios 1-3 on one instance.
pub struct EssReport {
    day: DayReport,
    defaults_applied: Vec<String>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(EssStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Parse { .. } => EssStatus::Parse,
            Error::Io { .. } => EssStatus::Io,
            Error::Solver(_) => EssStatus::Solver,
            Error::Verification(_) | Error::PeakBelowNetLoad { .. } => EssStatus::Verification,
            Error::GridTooLarge { .. } => EssStatus::TooLarge,
            _ => EssStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(EssStatus::InvalidArgument, message.into())
}

fn null(what: &str) -> Failure {
    Failure(EssStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EssStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EssStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {message}"));
            EssStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn scenario_of(report: &EssReport, scenario: u8) -> Result<&ScenarioReport, Failure> {
    let id = ScenarioId::from_number(scenario).ok_or_else(|| invalid(format!("no scenario {scenario}")))?;
    report
        .day
        .scenarios
        .iter()
        .find(|s| s.scenario == id)
        .ok_or_else(|| invalid(format!("scenario {scenario} was not run")))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn ess_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ess_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Options matching the command-line defaults: LPCC, no limits.
#[no_mangle]
pub extern "C" fn ess_run_options_default() -> EssRunOptions {
    EssRunOptions {
        mode: EssMode::Lpcc,
        time_limit_secs: 0.0,
        grid_step: 0.0,
    }
}

/// Reads loads, prices and a configuration file.
///
/// # Safety
/// The paths must be NUL-terminated strings and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ess_instance_load(
    loads: *const c_char,
    prices: *const c_char,
    config: *const c_char,
    out: *mut *mut EssInstance,
) -> EssStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let inputs = load_inputs(
            &path_arg(loads, "loads")?,
            &path_arg(prices, "prices")?,
            &path_arg(config, "config")?,
        )?;
        *out = Box::into_raw(Box::new(EssInstance { inputs }));
        Ok(())
    })
}

/// Builds an instance from a seeded synthetic day and default parameters.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ess_instance_synthetic(
    customers: usize,
    slots: usize,
    profile: EssLoadProfile,
    price_shape: EssPriceShape,
    seed: u64,
    total_capacity: f64,
    out: *mut *mut EssInstance,
) -> EssStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let profile = match profile {
            EssLoadProfile::Duck => LoadProfile::Duck,
            EssLoadProfile::Typical => LoadProfile::Typical,
            EssLoadProfile::Mixed => LoadProfile::Mixed,
        };
        let shape = match price_shape {
            EssPriceShape::Conforming => PriceShape::Conforming,
            EssPriceShape::Conflicting => PriceShape::Conflicting,
        };
        let day = generate(profile, shape, customers, slots, seed)?;
        let config = Config {
            total_capacity: Some(total_capacity),
            ..Config::default()
        };
        let inputs = build_instance(day.customer_load, day.prices, &config)?;
        *out = Box::into_raw(Box::new(EssInstance { inputs }));
        Ok(())
    })
}

/// # Safety
/// `instance` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ess_instance_free(instance: *mut EssInstance) {
    if !instance.is_null() {
        drop(Box::from_raw(instance));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ess_instance_dims(
    instance: *const EssInstance,
    customers: *mut usize,
    slots: *mut usize,
) -> EssStatus {
    guard(|| {
        let inst = &handle(instance, "instance")?.inputs.instance;
        *out_arg(customers, "customers")? = inst.customers();
        *out_arg(slots, "slots")? = inst.slots();
        Ok(())
    })
}

/// Runs scenarios 1-3. With `options` NULL the instance's own settings apply.
///
/// # Safety
/// `instance` and `out` must be valid; `options` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn ess_run_day(
    instance: *const EssInstance,
    options: *const EssRunOptions,
    out: *mut *mut EssReport,
) -> EssStatus {
    guard(|| {
        let inputs = &handle(instance, "instance")?.inputs;
        let out = out_arg(out, "out")?;
        let mut opts = RunOptions::from(&inputs.settings);
        if let Some(o) = options.as_ref() {
            opts.mode = match o.mode {
                EssMode::Lpcc => Mode::Lpcc,
                EssMode::BigM => Mode::BigM,
            };
            opts.solve.time_limit = (o.time_limit_secs > 0.0)
                .then(|| Duration::try_from_secs_f64(o.time_limit_secs))
                .transpose()
                .map_err(|e| invalid(format!("time limit: {e}")))?;
            opts.grid_step = (o.grid_step > 0.0).then_some(o.grid_step);
        }
        let day = run_day(&inputs.instance, 0, &ScenarioId::ALL, &opts)?;
        *out = Box::into_raw(Box::new(EssReport {
            day,
            defaults_applied: inputs.settings.defaults_applied.clone(),
        }));
        Ok(())
    })
}

/// # Safety
/// `report` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ess_report_free(report: *mut EssReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Capacity of the DisCo and of each customer in `scenario` (1-3).
/// `customers_len` must equal the instance's customer count.
///
/// # Safety
/// `customer_shares` must point to `customers_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ess_report_division(
    report: *const EssReport,
    scenario: u8,
    disco_share: *mut f64,
    customer_shares: *mut f64,
    customers_len: usize,
) -> EssStatus {
    guard(|| {
        let s = scenario_of(handle(report, "report")?, scenario)?;
        let shares = &s.division.s_customer;
        if customers_len != shares.len() {
            return Err(invalid(format!(
                "buffer holds {customers_len} shares, the instance has {} customers",
                shares.len()
            )));
        }
        if customer_shares.is_null() && customers_len > 0 {
            return Err(null("customer_shares"));
        }
        *out_arg(disco_share, "disco_share")? = s.division.s_disco;
        if customers_len > 0 {
            std::slice::from_raw_parts_mut(customer_shares, customers_len).copy_from_slice(shares);
        }
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ess_report_reductions(
    report: *const EssReport,
    scenario: u8,
    out: *mut EssReductions,
) -> EssStatus {
    guard(|| {
        let s = scenario_of(handle(report, "report")?, scenario)?;
        let groups = &s.reductions.customer_groups;
        *out_arg(out, "out")? = EssReductions {
            disco: s.reductions.disco,
            customers_1: groups[0],
            customers_2: groups.get(1).copied().unwrap_or(f64::NAN),
            peak: s.reductions.peak,
        };
        Ok(())
    })
}

/// Upper-level objective of `scenario` and the exit code of its bilevel
/// solve (0 optimal, 2 infeasible, 3 unbounded, 4 limit; 0 for scenario 1).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ess_report_objective(
    report: *const EssReport,
    scenario: u8,
    objective: *mut f64,
    solve_code: *mut i32,
) -> EssStatus {
    guard(|| {
        let s = scenario_of(handle(report, "report")?, scenario)?;
        *out_arg(objective, "objective")? = s.upper_objective;
        *out_arg(solve_code, "solve_code")? = s.stats.status.map_or(0, |st| st.exit_code());
        Ok(())
    })
}

/// Writes the report files into `dir`, creating it if needed.
///
/// # Safety
/// `report` must be valid and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ess_report_write(report: *const EssReport, dir: *const c_char) -> EssStatus {
    guard(|| {
        let r = handle(report, "report")?;
        let cycle = CycleReport {
            reports: vec![r.day.clone()],
            failures: Vec::new(),
            defaults_applied: r.defaults_applied.clone(),
        };
        let manifest = [("source".to_string(), "c-api".to_string())];
        emit_report(&cycle, &manifest, &path_arg(dir, "dir")?)?;
        Ok(())
    })
}

/// Exports the big-M MILP of the shared scenario as MPS and reports the
/// number of 0-1 columns.
///
/// # Safety
/// `instance` and `binaries` must be valid and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ess_export_mps(
    instance: *const EssInstance,
    path: *const c_char,
    binaries: *mut usize,
) -> EssStatus {
    guard(|| {
        let inputs = &handle(instance, "instance")?.inputs;
        let binaries = out_arg(binaries, "binaries")?;
        let mpec = assemble_mpec(&inputs.instance)?;
        let milp = linearize_big_m(&mpec, &inputs.settings.policy)?;
        export_mps(&milp, &path_arg(path, "path")?)?;
        *binaries = milp.binaries.len();
        Ok(())
    })
}

/// Best division on the grid with spacing `step`.
///
/// # Safety
/// `customer_shares` must point to `customers_len` writable doubles; the
/// other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ess_grid_oracle(
    instance: *const EssInstance,
    step: f64,
    objective: *mut f64,
    disco_share: *mut f64,
    customer_shares: *mut f64,
    customers_len: usize,
) -> EssStatus {
    guard(|| {
        let inputs = &handle(instance, "instance")?.inputs;
        if customers_len != inputs.instance.customers() {
            return Err(invalid(format!(
                "buffer holds {customers_len} shares, the instance has {} customers",
                inputs.instance.customers()
            )));
        }
        if customer_shares.is_null() && customers_len > 0 {
            return Err(null("customer_shares"));
        }
        let objective = out_arg(objective, "objective")?;
        let disco_share = out_arg(disco_share, "disco_share")?;
        let report = grid_oracle_with(
            &inputs.instance,
            &OracleOptions {
                solve: inputs.settings.solve.clone(),
                ..OracleOptions::new(step)
            },
        )?;
        *objective = report.best_objective;
        *disco_share = report.best_division.s_disco;
        if customers_len > 0 {
            std::slice::from_raw_parts_mut(customer_shares, customers_len)
                .copy_from_slice(&report.best_division.s_customer);
        }
        Ok(())
    })
}
