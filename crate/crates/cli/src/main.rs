use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ppz_core::backtest::{
    counterfactual_supply, generate_synthetic_city, prefill_ledger, run_backtest, CityParams, Policy,
    Scenario, BACKTEST_TOL,
};
use ppz_core::escrow::{read_ndjson, EscrowLedger};
use ppz_core::positioning::{build_positioning_program, solve_positioning, Objective, PositioningConfig};
use ppz_core::sensitivity::{sensitivity_report, ReportRequest};
use ppz_core::spatial::{prune_active_set, vectorize_allocation, ActiveSet};
use serde::Serialize;

mod grid;

/// Driver positioning and escrow-budgeted incentives.
#[derive(Parser)]
#[command(name = "ppz", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the positioning program for a scenario.
    Solve(SolveArgs),
    /// Escrow ledger tools.
    Ledger {
        #[command(subcommand)]
        command: LedgerCommand,
    },
    /// Local multipliers, global bound checks and the marginal value curve.
    Sensitivity(SensitivityArgs),
    /// One-step back-test of policies against the null benchmark.
    Backtest(BacktestArgs),
    /// Generate a synthetic grid city scenario.
    GenCity(GenCityArgs),
    /// Rescale supply observed under a split experiment to full rollout.
    Counterfactual(CounterfactualArgs),
}

#[derive(Subcommand)]
enum LedgerCommand {
    /// Replay an event log and print the final available balances in cents.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Number of accounts; defaults to one past the largest location in the log.
        #[arg(long)]
        locations: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Bookings,
    Conversion,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    #[arg(long)]
    out: PathBuf,
    /// Write the assembled program as JSON.
    #[arg(long)]
    dump_program: Option<PathBuf>,
    /// Seed for funding the escrow accounts from the scenario's prefill;
    /// defaults to the first replication seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Use the scenario's balances as given instead of the prefill.
    #[arg(long)]
    no_prefill: bool,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Args)]
struct SensitivityArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Location whose supply the curve varies.
    #[arg(long)]
    location: usize,
    /// Supply levels as `start:step:end`.
    #[arg(long)]
    grid: String,
    #[arg(long)]
    out: PathBuf,
    /// Also write the curve as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Random perturbations for the global bound check.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BacktestArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Comma-separated: ppz-bookings, ppz-conversion, null.
    #[arg(long, value_delimiter = ',', default_value = "ppz-bookings,ppz-conversion,null")]
    policies: Vec<Policy>,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    /// Directory for metrics.csv and summary.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenCityArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    hotspots: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// JSON file with further city parameters; flags override it.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CounterfactualArgs {
    /// Supply observed in the treatment group.
    #[arg(long)]
    treat: u64,
    /// Supply observed in the control group.
    #[arg(long)]
    control: u64,
    /// Share of drivers in treatment.
    #[arg(long)]
    share: f64,
}

fn read_scenario(path: &Path) -> Result<Scenario> {
    let json = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Scenario::from_json(&json).with_context(|| format!("loading scenario {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn solve(args: SolveArgs) -> Result<()> {
    let scenario = read_scenario(&args.scenario)?;
    let mut state = scenario.state.clone();
    if !args.no_prefill && scenario.prefill.budget > 0.0 {
        let seed = args.seed.unwrap_or_else(|| scenario.replication_seeds(1)[0]);
        let ledger = prefill_ledger(&scenario, seed)?;
        state.e = ledger.available_currency();
        state.epoch = ledger.version();
    }
    let cfg = PositioningConfig {
        objective: match args.objective {
            Some(ObjectiveArg::Bookings) => Objective::Bookings,
            Some(ObjectiveArg::Conversion) => Objective::Conversion,
            None => scenario.cfg.objective,
        },
        ..scenario.cfg
    };
    let graph = &scenario.graph;
    let active = if scenario.trans.supports_pruning() {
        prune_active_set(graph, &state.d, &state.s0)?
    } else {
        ActiveSet::all(graph.n())
    };
    let index = vectorize_allocation(graph, &active);
    if let Some(path) = &args.dump_program {
        let built = build_positioning_program(&state, graph, &scenario.conv, &scenario.trans, &cfg, &active, &index)?;
        write_json(path, &built.program.dump())?;
    }
    let plan = solve_positioning(&state, graph, &scenario.conv, &scenario.trans, &cfg, &active, &index, args.tol)?;
    write_json(&args.out, &plan)?;
    println!(
        "objective {:.6}, {} allocation entries over {} active locations",
        plan.market_objective,
        plan.allocation.len(),
        active.len()
    );
    Ok(())
}

fn replay(log: &Path, locations: Option<usize>) -> Result<()> {
    let file = File::open(log).with_context(|| format!("opening {}", log.display()))?;
    let events = read_ndjson(BufReader::new(file))?;
    let inferred = events
        .iter()
        .flat_map(|e| std::iter::once(e.location).chain(e.funding.iter().map(|f| f.0)))
        .max()
        .map_or(0, |m| m + 1);
    let n = locations.unwrap_or(inferred);
    if n < inferred {
        bail!("log touches location {} but only {n} accounts were given", inferred - 1);
    }
    let ledger = EscrowLedger::replay(n, None, &events)?;
    println!("{}", serde_json::to_string(&ledger.available_balances())?);
    Ok(())
}

fn sensitivity(args: SensitivityArgs) -> Result<()> {
    let scenario = read_scenario(&args.scenario)?;
    let request = ReportRequest {
        location: args.location,
        grid: grid::parse(&args.grid)?,
        h: args.h,
        tol: args.tol,
        samples: args.samples,
        seed: args.seed,
    };
    let report = sensitivity_report(&scenario.state, &scenario.graph, &scenario.conv, &request)?;
    write_json(&args.out, &report)?;
    if let Some(path) = &args.csv {
        write_csv(path, &report.curve)?;
    }
    let failed = report.local_checks.iter().filter(|c| !c.passed).count();
    println!(
        "optimal revenue {:.6}; {failed} local checks failed; min global slack {:.3e}",
        -report.p_star_0,
        report.min_global_slack()
    );
    Ok(())
}

fn backtest(args: BacktestArgs) -> Result<ExitCode> {
    let scenario = read_scenario(&args.scenario)?;
    if args.policies.is_empty() {
        bail!("no policies given");
    }
    let table = run_backtest(&scenario, &args.policies, args.reps)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_csv(&args.out.join("metrics.csv"), &table.rows)?;
    write_json(&args.out.join("summary.json"), &table.without_rows())?;
    for s in &table.policies {
        println!(
            "{:<15} bookings gain {:+.4} [{:+.4}, {:+.4}]  conversion gain {:+.4}  failures {}",
            s.policy.name(),
            s.bookings_gain.mean,
            s.bookings_gain.ci_low,
            s.bookings_gain.ci_high,
            s.conversion_gain.mean,
            s.failures
        );
    }
    let rate = table.failure_rate();
    if rate > 0.05 {
        eprintln!("solver failures in {:.1}% of replications (tolerance {BACKTEST_TOL:e})", 100.0 * rate);
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn gen_city(args: GenCityArgs) -> Result<()> {
    let mut params = match &args.params {
        Some(path) => {
            let json = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&json).with_context(|| format!("parsing {}", path.display()))?
        }
        None => CityParams::default(),
    };
    if let Some(n) = args.n {
        params.n = n;
    }
    if let Some(h) = args.hotspots {
        params.hotspots = h;
    }
    let scenario = generate_synthetic_city(&params, args.seed)?;
    write_json(&args.out, &scenario)?;
    println!("{}: {} locations", scenario.epoch_label, scenario.graph.n());
    Ok(())
}

#[derive(Serialize)]
struct Rescaled {
    all_control: f64,
    all_treatment: f64,
}

fn counterfactual(args: CounterfactualArgs) -> Result<()> {
    let (all_control, all_treatment) = counterfactual_supply(args.treat, args.control, args.share)?;
    println!("{}", serde_json::to_string(&Rescaled { all_control, all_treatment })?);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve(args) => solve(args)?,
        Command::Ledger {
            command: LedgerCommand::Replay { log, locations },
        } => replay(&log, locations)?,
        Command::Sensitivity(args) => sensitivity(args)?,
        Command::Backtest(args) => return backtest(args),
        Command::GenCity(args) => gen_city(args)?,
        Command::Counterfactual(args) => counterfactual(args)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
