//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::fixtures::{random_instance, Fixture, AGREEMENT, CONFLICTING_DAY, STRESS};
use common::kkt_oracle::{kkt_objective_range, kkt_residual};
use common::lp_oracle::{beale, dual_objective, primal_violation, random_lp, vertex_minimum};
use common::{close, fixtures, mps_reader, rng};
use ess_bilevel::lp::{build_llm_c, build_llm_d, LinearProgram, LpStatus};
use ess_bilevel::mpec::{assemble_mpec, derive_kkt, linearize_big_m, BigMPolicy};
use ess_bilevel::oracle::grid_oracle;
use ess_bilevel::scenario::report::tables;
use ess_bilevel::scenario::{
    emit_report, generate, read_report, run_day, CycleReport, DayReport, LoadProfile, PriceShape, RunOptions,
    ScenarioId,
};
use ess_bilevel::solver::{export_mps, solve_bigm_with_escalation, solve_lp, solve_lpcc, SolveOptions, SolveStatus};
use ess_bilevel::Instance;
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, secs: f64, what: &str) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < secs, || format!("{what} took {elapsed:.2?}, budget {secs} s"))
}

fn lp_engine() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2024);
    let opts = SolveOptions::default();
    let mut enumerated = 0;
    for case in 0..100 {
        // 40 small programs can be checked vertex by vertex; the rest go up
        // to 40 columns and 60 rows
        let lp: LinearProgram = if case < 40 {
            let vars = r.random_range(2..=6);
            let ge = r.random_range(1..=8 - vars.min(2));
            let eq = r.random_range(0..=vars.min(2));
            random_lp(&mut r, vars, ge, eq, true)
        } else {
            let vars = r.random_range(1..=40);
            let ge = r.random_range(0..=50);
            let eq = r.random_range(0..=vars.min(10));
            random_lp(&mut r, vars, ge, eq, false)
        };
        let sol = solve_lp(&lp, &opts);
        ensure(sol.status == LpStatus::Optimal, || format!("case {case}: {:?}", sol.status))?;
        ensure(primal_violation(&lp, &sol.x) <= 1e-7, || format!("case {case}: infeasible point"))?;
        let dual = dual_objective(&lp, &sol, 1e-7).map_err(|e| format!("case {case}: {e}"))?;
        ensure(close(dual, sol.objective, 1e-7), || format!("case {case}: primal {} dual {dual}", sol.objective))?;
        if lp.num_vars() <= 6 && lp.inequalities.len() + lp.equalities.len() <= 8 {
            if let Some((best, _)) = vertex_minimum(&lp) {
                ensure(close(sol.objective, best, 1e-9), || {
                    format!("case {case}: simplex {} vertices {best}", sol.objective)
                })?;
                enumerated += 1;
            }
        }
    }
    let b = solve_lp(&beale(), &opts);
    ensure(b.status == LpStatus::Optimal && (b.objective + 1.25).abs() < 1e-9, || {
        format!("Beale's example ended {:?} at {}", b.status, b.objective)
    })?;
    ensure(enumerated >= 40, || format!("only {enumerated} programs enumerated"))?;
    within(start.elapsed(), 30.0, "LP suite")?;
    Ok(format!(
        "100 LPs optimal with strong duality, {enumerated} match vertex enumeration, Beale optimum {} ({:.2?})",
        b.objective,
        start.elapsed()
    ))
}

fn random_operation_lp(seed: u64) -> LinearProgram {
    let mut r = rng(seed);
    let customers = r.random_range(1..=3);
    let slots = r.random_range(2..=4);
    let total = if r.random_bool(0.1) { 0.0 } else { r.random_range(0.5..20.0) };
    let inst = random_instance(&mut r, customers, slots, total);
    let share = total * r.random_range(0.0..=1.0);
    if r.random_bool(0.5) {
        build_llm_c(&inst, r.random_range(0..customers), share).unwrap()
    } else {
        build_llm_d(&inst, share).unwrap()
    }
}

fn kkt() -> Outcome {
    let start = Instant::now();
    let opts = SolveOptions::default();
    for seed in 0..100 {
        let lp = random_operation_lp(1000 + seed);
        let sol = solve_lp(&lp, &opts);
        ensure(sol.is_optimal(), || format!("seed {seed}: {:?}", sol.status))?;
        let kkt = derive_kkt(&lp);
        let (omega, v) = kkt.lift_duals(&sol);
        let residual = kkt_residual(&kkt, &sol.x, &omega, &v);
        ensure(residual <= 1e-6, || format!("seed {seed}: optimum violates KKT by {residual}"))?;
        let (lo, hi) = kkt_objective_range(&kkt, 1e3).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(close(lo, sol.objective, 1e-6) && close(hi, sol.objective, 1e-6), || {
            format!("seed {seed}: KKT points span [{lo}, {hi}], optimum {}", sol.objective)
        })?;
    }
    Ok(format!("100 operation models sound and complete ({:.2?})", start.elapsed()))
}

fn triple_agreement() -> Outcome {
    let start = Instant::now();
    // LPCC without the value-function rows, so it shares no code path with
    // the strengthened big-M model beyond the simplex
    let lpcc_opts = SolveOptions {
        value_cuts: false,
        ..SolveOptions::default()
    };
    let mut worst = 0.0f64;
    for f in &AGREEMENT {
        let inst = f.instance();
        let mpec = assemble_mpec(&inst).map_err(|e| e.to_string())?;
        let lpcc = solve_lpcc(&mpec, &lpcc_opts);
        let bigm = solve_bigm_with_escalation(&mpec, &BigMPolicy::default(), &SolveOptions::default())
            .map_err(|e| e.to_string())?;
        let grid = grid_oracle(&inst, f.capacity / 20.0).map_err(|e| e.to_string())?;
        ensure(lpcc.status == SolveStatus::Optimal && bigm.result.status == SolveStatus::Optimal, || {
            format!("{}: lpcc {:?}, big-M {:?}", f.label(), lpcc.status, bigm.result.status)
        })?;
        ensure(bigm.report.binding.is_empty(), || {
            format!("{}: {} big-M constants bind", f.label(), bigm.report.binding.len())
        })?;
        let g = grid.best_objective;
        for (name, v) in [("lpcc", lpcc.objective), ("big-M", bigm.result.objective)] {
            let rel = (v - g).abs() / g.abs().max(1e-12);
            worst = worst.max(rel);
            ensure(rel <= 1e-6, || format!("{}: {name} {v} vs grid {g}", f.label()))?;
        }
    }
    let suite = start.elapsed();
    within(suite, 120.0, "agreement suite")?;

    let stress_start = Instant::now();
    let mpec = assemble_mpec(&STRESS.instance()).map_err(|e| e.to_string())?;
    let res = solve_lpcc(&mpec, &SolveOptions::default());
    let stress = stress_start.elapsed();
    ensure(res.status == SolveStatus::Optimal, || format!("stress instance ended {:?}", res.status))?;
    within(stress, 60.0, "stress instance")?;
    Ok(format!(
        "{} fixtures agree (worst relative gap {worst:.1e}, no binding M) in {suite:.2?}; N=2 T=12 in {stress:.2?} ({} nodes)",
        AGREEMENT.len(),
        res.nodes
    ))
}

fn zero_capacity() -> Outcome {
    let mut checked = 0;
    for f in [AGREEMENT[3], AGREEMENT[10], CONFLICTING_DAY] {
        let inst = Fixture { capacity: 0.0, ..f }.instance();
        let day = run_day(&inst, 0, &ScenarioId::ALL, &RunOptions::default()).map_err(|e| e.to_string())?;
        for s in &day.scenarios {
            let sched = &s.schedules;
            let nonzero = sched
                .customer_ch
                .iter()
                .chain(&sched.customer_dis)
                .flatten()
                .chain(&sched.disco_ch)
                .chain(&sched.disco_dis)
                .any(|v| *v != 0.0);
            let red = &s.reductions;
            ensure(!nonzero, || format!("{} scenario {:?}: nonzero schedule", f.label(), s.scenario))?;
            ensure(red.disco == 0.0 && red.peak == 0.0 && red.customer_groups.iter().all(|r| *r == 0.0), || {
                format!("{} scenario {:?}: reductions {red:?}", f.label(), s.scenario)
            })?;
            checked += 1;
        }
    }
    Ok(format!("{checked} scenario runs with zero schedules and 0% reductions"))
}

fn monotonicity() -> Outcome {
    let mut r = rng(77);
    let opts = SolveOptions::default();
    let mut comparisons = 0;
    for pair in 0..20 {
        let customers = r.random_range(1..=3);
        let slots = r.random_range(2..=12);
        let inst = random_instance(&mut r, customers, slots, 50.0);
        let s1 = r.random_range(0.0..20.0);
        let s2 = s1 + r.random_range(0.01..20.0);
        let value = |lp: LinearProgram| solve_lp(&lp, &opts).objective;
        for n in 0..customers {
            let (v1, v2) = (value(build_llm_c(&inst, n, s1).unwrap()), value(build_llm_c(&inst, n, s2).unwrap()));
            ensure(v2 <= v1 + 1e-9, || format!("pair {pair} customer {n}: {v2} at {s2} > {v1} at {s1}"))?;
            comparisons += 1;
        }
        let (v1, v2) = (value(build_llm_d(&inst, s1).unwrap()), value(build_llm_d(&inst, s2).unwrap()));
        ensure(v2 <= v1 + 1e-9, || format!("pair {pair} disco: {v2} at {s2} > {v1} at {s1}"))?;
        comparisons += 1;
    }
    Ok(format!("20 instance pairs, {comparisons} operation values non-increasing"))
}

fn reductions_of(day: &DayReport, id: ScenarioId) -> &ess_bilevel::scenario::Reductions {
    &day.scenarios.iter().find(|s| s.scenario == id).unwrap().reductions
}

fn sign_pattern() -> Outcome {
    let inst = CONFLICTING_DAY.instance();
    let day = run_day(&inst, 0, &ScenarioId::ALL, &RunOptions::default()).map_err(|e| e.to_string())?;
    let fmt = |r: &ess_bilevel::scenario::Reductions| {
        let groups: Vec<String> = r.customer_groups.iter().map(|g| format!("{g:+.2}")).collect();
        format!("{:+.2}/{}", r.disco, groups.join("/"))
    };
    let (s1, s2, s3) = (
        reductions_of(&day, ScenarioId::DiscoOnly),
        reductions_of(&day, ScenarioId::CustomersOnly),
        reductions_of(&day, ScenarioId::Shared),
    );
    let summary = format!("scenario 1 {}, scenario 2 {}, scenario 3 {}", fmt(s1), fmt(s2), fmt(s3));
    ensure(s1.disco > 0.0 && s1.customer_groups.iter().all(|g| *g < 0.0), || format!("scenario 1: {summary}"))?;
    ensure(s2.disco < 0.0, || format!("scenario 2: {summary}"))?;
    ensure(s3.disco >= -0.5 && s3.customer_groups.iter().all(|g| *g >= -0.5), || format!("scenario 3: {summary}"))?;
    Ok(format!("{summary} (% reduction, DisCo/customer groups)"))
}

fn dominance() -> Outcome {
    let start = Instant::now();
    let all: Vec<Fixture> = AGREEMENT.iter().copied().chain([CONFLICTING_DAY, STRESS]).collect();
    for f in &all {
        let day = run_day(&f.instance(), 0, &ScenarioId::ALL, &RunOptions::default()).map_err(|e| e.to_string())?;
        let upper = |id: ScenarioId| day.scenarios.iter().find(|s| s.scenario == id).unwrap().upper_objective;
        let shared = upper(ScenarioId::Shared);
        let best = upper(ScenarioId::DiscoOnly).min(upper(ScenarioId::CustomersOnly));
        ensure(shared <= best + 1e-6, || format!("{}: shared {shared} > {best}", f.label()))?;
    }
    Ok(format!("scenario 3 <= min(scenario 1, scenario 2) on {} fixtures ({:.2?})", all.len(), start.elapsed()))
}

fn full_scale() -> Outcome {
    let inst: Instance = fixtures::full_scale();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("full.mps");
    let start = Instant::now();
    let mpec = assemble_mpec(&inst).map_err(|e| e.to_string())?;
    let milp = linearize_big_m(&mpec, &BigMPolicy::default()).map_err(|e| e.to_string())?;
    export_mps(&milp, &path).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let parsed = mps_reader::parse(&text)?;
    ensure(parsed.integer.len() == 38_688, || format!("{} binaries in the file", parsed.integer.len()))?;
    within(elapsed, 5.0, "build and export")?;
    Ok(format!(
        "{} columns, {} rows, {} binaries exported in {elapsed:.2?}",
        parsed.columns.len(),
        parsed.rows.len(),
        parsed.integer.len()
    ))
}

fn determinism() -> Outcome {
    let files = |dir: &std::path::Path| -> Result<Vec<(String, Vec<u8>)>, String> {
        let mut out = Vec::new();
        for e in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
            let e = e.map_err(|e| e.to_string())?;
            out.push((e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).map_err(|e| e.to_string())?));
        }
        out.sort();
        Ok(out)
    };
    let run = |dir: &std::path::Path| -> Result<CycleReport, String> {
        let f = Fixture {
            slots: 6,
            ..CONFLICTING_DAY
        };
        let day = run_day(&f.instance(), 0, &ScenarioId::ALL, &RunOptions::default()).map_err(|e| e.to_string())?;
        let cycle = CycleReport {
            reports: vec![day],
            failures: Vec::new(),
            defaults_applied: Vec::new(),
        };
        emit_report(&cycle, &[("seed".into(), "0".into())], dir).map_err(|e| e.to_string())?;
        Ok(cycle)
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cycle = run(a.path())?;
    run(b.path())?;
    let (fa, fb) = (files(a.path())?, files(b.path())?);
    ensure(fa == fb, || "report files differ between runs".into())?;
    let same_data = generate(LoadProfile::Duck, PriceShape::Conforming, 3, 24, 9).ok()
        == generate(LoadProfile::Duck, PriceShape::Conforming, 3, 24, 9).ok();
    ensure(same_data, || "synthetic data differs for one seed".into())?;

    let back = read_report(a.path()).map_err(|e| e.to_string())?;
    ensure(back.summary.cycle == cycle, || "summary does not re-parse to the report".into())?;
    let (divisions, reductions, profiles) = tables(&cycle);
    let near = |x: f64, y: f64| (x - y).abs() <= 1e-9 * y.abs().max(1.0);
    let rows_ok = back.divisions.len() == divisions.len()
        && back.divisions.iter().zip(&divisions).all(|(r, m)| near(r.capacity_kwh, m.capacity_kwh))
        && back.reductions.len() == reductions.len()
        && back
            .reductions
            .iter()
            .zip(&reductions)
            .all(|(r, m)| near(r.baseline, m.baseline) && near(r.actual, m.actual) && near(r.reduction_pct, m.reduction_pct))
        && back.profiles.len() == profiles.len()
        && back.profiles.iter().zip(&profiles).all(|(r, m)| {
            near(r.load_o, m.load_o)
                && [(r.load_d, m.load_d), (r.load_c, m.load_c), (r.load_s, m.load_s)]
                    .iter()
                    .all(|(x, y)| x.zip(*y).is_some_and(|(x, y)| near(x, y)))
        });
    ensure(rows_ok, || "tables do not re-parse at 1e-9".into())?;

    let mpec = assemble_mpec(&AGREEMENT[3].instance()).map_err(|e| e.to_string())?;
    let milp = linearize_big_m(&mpec, &BigMPolicy::default()).map_err(|e| e.to_string())?;
    let path = a.path().join("model.mps");
    export_mps(&milp, &path).map_err(|e| e.to_string())?;
    let first = std::fs::read(&path).map_err(|e| e.to_string())?;
    export_mps(&milp, &path).map_err(|e| e.to_string())?;
    ensure(first == std::fs::read(&path).map_err(|e| e.to_string())?, || "MPS export is not byte-stable".into())?;
    let parsed = mps_reader::parse(&String::from_utf8_lossy(&first))?;
    let lp = &milp.lp;
    let nnz: usize = lp.inequalities.iter().chain(&lp.equalities).map(|c| c.row.len()).sum();
    let counts = (parsed.count_rows('G'), parsed.count_rows('E'), parsed.columns.len(), parsed.integer.len(), parsed.matrix_nonzeros());
    let expected = (lp.inequalities.len(), lp.equalities.len(), lp.num_vars(), milp.binaries.len(), nnz);
    ensure(counts == expected, || format!("MPS counts {counts:?}, model {expected:?}"))?;
    Ok(format!(
        "{} report files byte-identical, tables re-parse at 1e-9, MPS counts (G, E, cols, bin, nnz) = {counts:?}",
        fa.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("LP engine vs vertex enumeration and duality", lp_engine),
        ("KKT soundness and completeness", kkt),
        ("bilevel triple agreement", triple_agreement),
        ("zero-capacity neutrality", zero_capacity),
        ("capacity monotonicity", monotonicity),
        ("reduction sign pattern under conflicting prices", sign_pattern),
        ("scenario dominance", dominance),
        ("full-size MILP export", full_scale),
        ("determinism and round trips", determinism),
    ];
    // failures are reported on their own line, not as panic traces
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {why}", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
