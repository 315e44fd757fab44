use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ess_bilevel::mpec::{assemble_mpec, linearize_big_m};
use ess_bilevel::oracle::{grid_oracle_with, OracleOptions};
use ess_bilevel::scenario::io::{read_loads, read_prices};
use ess_bilevel::scenario::{
    daily_cycle, emit_report, gen_synthetic, generate, load_inputs_with, read_report, run_day, Config,
    CycleReport, DayInputs, Inputs, LoadProfile, Mode, PriceShape, RunOptions, ScenarioId,
};
use ess_bilevel::solver::{export_mps, SolveStatus};

#[derive(Parser)]
#[command(name = "ess-bilevel", version, about = "Bilevel division of a shared energy storage unit")]
struct Cli {
    /// Seed for synthetic data.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Bilevel solver; overrides the config file.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Also check the shared scenario against a grid search with this step (kWh).
    #[arg(long, global = true)]
    grid_step: Option<f64>,
    /// Wall-clock limit per bilevel solve, in seconds.
    #[arg(long, global = true)]
    time_limit: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct InputArgs {
    #[arg(long)]
    loads: PathBuf,
    #[arg(long)]
    prices: PathBuf,
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args, Clone)]
struct SynthArgs {
    #[arg(long, default_value_t = 2)]
    customers: usize,
    #[arg(long, default_value_t = 24)]
    slots: usize,
    #[arg(long, value_enum, default_value_t = LoadProfile::Mixed)]
    profile: LoadProfile,
    #[arg(long, value_enum, default_value_t = PriceShape::Conflicting)]
    prices: PriceShape,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic loads.csv, prices.csv and a starter config.toml.
    GenData {
        #[command(flatten)]
        synth: SynthArgs,
        /// Storage capacity written to the config (default 8 kWh per customer).
        #[arg(long)]
        capacity: Option<f64>,
        /// Number of days; more than one writes day_000, day_001, ...
        #[arg(long, default_value_t = 1)]
        days: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the big-M MILP of the shared scenario as fixed-format MPS.
    Build {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the shared scenario with the internal solvers and print the division.
    Solve {
        #[command(flatten)]
        input: InputArgs,
        /// Write the scenario report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Brute-force grid search over divisions.
    Oracle {
        #[command(flatten)]
        input: InputArgs,
        /// Largest number of grid points to evaluate.
        #[arg(long, default_value_t = 200_000)]
        max_points: u128,
    },
    /// Run scenarios 1-3 (or a subset) on one day and write a report directory.
    Scenario {
        #[command(flatten)]
        input: InputArgs,
        /// Scenario numbers; all three by default.
        #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u8).range(1..=3))]
        scenario: Vec<u8>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-divide the storage day by day and write one combined report.
    Cycle {
        #[arg(long)]
        config: PathBuf,
        /// Directory of day_* folders, each holding loads.csv and prices.csv.
        #[arg(long, conflicts_with = "synthetic_days")]
        days_dir: Option<PathBuf>,
        /// Generate this many synthetic days (seeds seed, seed + 1, ...).
        #[arg(long)]
        synthetic_days: Option<usize>,
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the tables of a report directory.
    Report {
        #[arg(long)]
        from: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            // library errors already quote their source
            let mut message = e.to_string();
            for cause in e.chain().skip(1) {
                let cause = cause.to_string();
                if !message.contains(&cause) {
                    message = format!("{message}: {cause}");
                }
            }
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

impl Cli {
    fn apply(&self, mut config: Config) -> Result<Config> {
        if let Some(mode) = self.mode {
            config.mode = Some(mode);
        }
        if let Some(step) = self.grid_step {
            config.grid_step = Some(step);
        }
        if let Some(secs) = self.time_limit {
            if !(secs > 0.0 && secs.is_finite()) {
                bail!("--time-limit must be a positive number of seconds");
            }
            config.time_limit_secs = Some(secs);
        }
        Ok(config)
    }

    fn inputs(&self, input: &InputArgs) -> Result<Inputs> {
        let config = self.apply(Config::load(&input.config)?)?;
        Ok(load_inputs_with(&input.loads, &input.prices, &config)?)
    }

    fn manifest(&self, command: &str, extra: &[(&str, String)]) -> Vec<(String, String)> {
        let mut rows = vec![
            ("command".to_string(), command.to_string()),
            ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("seed".to_string(), self.seed.to_string()),
        ];
        rows.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
        rows
    }
}

fn input_manifest(input: &InputArgs) -> Vec<(&'static str, String)> {
    vec![
        ("loads", input.loads.display().to_string()),
        ("prices", input.prices.display().to_string()),
        ("config", input.config.display().to_string()),
    ]
}

/// Exit code of a finished run: 4 if any bilevel solve stopped at a limit.
fn cycle_code(cycle: &CycleReport) -> i32 {
    let limited = cycle
        .reports
        .iter()
        .flat_map(|d| &d.scenarios)
        .any(|s| s.stats.status == Some(SolveStatus::LimitHit));
    if limited {
        SolveStatus::LimitHit.exit_code()
    } else {
        0
    }
}

fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::GenData {
            synth,
            capacity,
            days,
            out,
        } => {
            if *days == 0 {
                bail!("--days must be at least 1");
            }
            for day in 0..*days {
                let dir = if *days == 1 {
                    out.clone()
                } else {
                    out.join(format!("day_{day:03}"))
                };
                gen_synthetic(
                    synth.profile,
                    synth.prices,
                    synth.customers,
                    synth.slots,
                    cli.seed + day as u64,
                    &dir,
                )?;
            }
            let config = Config {
                total_capacity: Some(capacity.unwrap_or(8.0 * synth.customers as f64)),
                ..Config::default()
            };
            let path = out.join("config.toml");
            std::fs::write(&path, config.to_toml_string())
                .with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {} day(s) to {}", days, out.display());
            Ok(0)
        }
        Command::Build { input, out } => {
            let inputs = cli.inputs(input)?;
            let mpec = assemble_mpec(&inputs.instance)?;
            let milp = linearize_big_m(&mpec, &inputs.settings.policy)?;
            export_mps(&milp, out)?;
            println!(
                "{}: {} columns, {} rows, {} binaries",
                out.display(),
                milp.lp.num_vars(),
                milp.lp.inequalities.len() + milp.lp.equalities.len(),
                milp.binaries.len()
            );
            Ok(0)
        }
        Command::Solve { input, json } => {
            let inputs = cli.inputs(input)?;
            let opts = RunOptions::from(&inputs.settings);
            let day = run_day(&inputs.instance, 0, &[ScenarioId::Shared], &opts)?;
            let s = &day.scenarios[0];
            let status = s.stats.status.unwrap_or(SolveStatus::Optimal);
            println!("status       {status:?}");
            println!("nodes        {}", s.stats.nodes);
            println!("objective    {}", s.upper_objective);
            if let Some(bound) = s.stats.best_bound {
                println!("best bound   {bound}");
            }
            println!("disco        {:.6}", s.division.s_disco);
            for (n, c) in s.division.s_customer.iter().enumerate() {
                println!("customer_{n:<4}{c:.6}");
            }
            for note in &s.stats.notes {
                println!("note         {note}");
            }
            if let Some(path) = json {
                let text = serde_json::to_string_pretty(s)?;
                std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(status.exit_code())
        }
        Command::Oracle { input, max_points } => {
            let inputs = cli.inputs(input)?;
            let total = inputs.instance.storage.total_capacity;
            let step = inputs.settings.grid_step.unwrap_or(total / 20.0);
            if step <= 0.0 {
                bail!("zero total capacity leaves nothing to search; use a positive capacity");
            }
            let report = grid_oracle_with(
                &inputs.instance,
                &OracleOptions {
                    max_points: *max_points,
                    solve: inputs.settings.solve.clone(),
                    ..OracleOptions::new(step)
                },
            )?;
            println!("step         {step}");
            println!("points       {}", report.records.len());
            println!("objective    {}", report.best_objective);
            println!("disco        {:.6}", report.best_division.s_disco);
            for (n, c) in report.best_division.s_customer.iter().enumerate() {
                println!("customer_{n:<4}{c:.6}");
            }
            for note in &report.notes {
                println!("note         {note}");
            }
            Ok(0)
        }
        Command::Scenario {
            input,
            scenario,
            out,
        } => {
            let inputs = cli.inputs(input)?;
            let ids: Vec<ScenarioId> = if scenario.is_empty() {
                ScenarioId::ALL.to_vec()
            } else {
                let mut ids: Vec<ScenarioId> = scenario
                    .iter()
                    .map(|&n| ScenarioId::from_number(n).expect("range checked by clap"))
                    .collect();
                ids.sort();
                ids.dedup();
                ids
            };
            let opts = RunOptions::from(&inputs.settings);
            let day = run_day(&inputs.instance, 0, &ids, &opts)?;
            let cycle = CycleReport {
                reports: vec![day],
                failures: Vec::new(),
                defaults_applied: inputs.settings.defaults_applied.clone(),
            };
            let mut extra = input_manifest(input);
            extra.push(("mode", format!("{:?}", opts.mode).to_lowercase()));
            emit_report(&cycle, &cli.manifest("scenario", &extra), out)?;
            print_tables(out)?;
            Ok(cycle_code(&cycle))
        }
        Command::Cycle {
            config,
            days_dir,
            synthetic_days,
            synth,
            out,
        } => {
            let config = cli.apply(Config::load(config)?)?;
            let (days, source) = match (days_dir, synthetic_days) {
                (Some(dir), _) => (read_days(dir)?, dir.display().to_string()),
                (None, Some(count)) => {
                    let days = (0..*count)
                        .map(|d| {
                            generate(synth.profile, synth.prices, synth.customers, synth.slots, cli.seed + d as u64)
                                .map(DayInputs::from)
                        })
                        .collect::<ess_bilevel::Result<Vec<_>>>()?;
                    (days, "synthetic".to_string())
                }
                (None, None) => bail!("pass --days-dir or --synthetic-days"),
            };
            let cycle = daily_cycle(&days, &config, None)?;
            for f in &cycle.failures {
                eprintln!("day {}: {}", f.day, f.message);
            }
            if cycle.reports.is_empty() {
                bail!("every day failed");
            }
            let extra = [("days_source", source)];
            emit_report(&cycle, &cli.manifest("cycle", &extra), out)?;
            print_tables(out)?;
            Ok(cycle_code(&cycle))
        }
        Command::Report { from } => {
            print_tables(from)?;
            Ok(0)
        }
    }
}

fn read_days(dir: &Path) -> Result<Vec<DayInputs>> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("day_")))
        .collect();
    entries.sort();
    if entries.is_empty() {
        bail!("no day_* folders in {}", dir.display());
    }
    entries
        .iter()
        .map(|d| {
            Ok(DayInputs {
                customer_load: read_loads(&d.join("loads.csv"))?,
                prices: read_prices(&d.join("prices.csv"))?,
            })
        })
        .collect()
}

fn print_tables(dir: &Path) -> Result<()> {
    let report = read_report(dir)?;
    println!("divisions (kWh)");
    for r in &report.divisions {
        println!("  day {:>3}  scenario {}  {:<14}{:>12.4}", r.day, r.scenario, r.party, r.capacity_kwh);
    }
    println!("reductions (%)");
    for r in &report.reductions {
        println!(
            "  day {:>3}  scenario {}  {:<14}{:>10.2}   ({:.4} -> {:.4})",
            r.day, r.scenario, r.party, r.reduction_pct, r.baseline, r.actual
        );
    }
    for note in &report.summary.notes {
        println!("note: {note}");
    }
    Ok(())
}
