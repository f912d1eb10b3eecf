//! Command line front end: market clearing, training runs, benchmarks, and
//! post-run reports.
//!
//! Exit codes: 0 success, 1 bad input or configuration, 2 infeasible
//! clearing, 3 runtime failure.

use clap::{Args, Parser, Subcommand};
use gridco::config::{self, ConfigError, RunConfig, RunMode};
use gridco::dcopf::{clear_market, ClearingError, ClearingInput};
use gridco::grid_model::{load_case, validate, CaseError, NetworkCase, Severity};
use gridco::metrics::sig15;
use gridco::{harness, report};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gridco", version, about = "Transmission planning and strategic bidding studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clear the market for one time step and print the result as CSV.
    Clear(ClearArgs),
    /// Run a co-optimization study and write its artifacts.
    Train(TrainArgs),
    /// Run the two-stage planning benchmark: expansion LP, then market
    /// training at the planned capacities.
    Benchmark(TrainArgs),
    /// Summarize one or more run directories and check the bidding rule
    /// invariants.
    Report(ReportArgs),
}

#[derive(Args)]
struct ClearArgs {
    /// Case file to clear.
    #[arg(long)]
    case: PathBuf,
    /// Time step index into the demand profile.
    #[arg(long, default_value_t = 0)]
    t: usize,
    /// Bid per generator, $/MWh (defaults to marginal costs).
    #[arg(long, value_delimiter = ',')]
    bids: Option<Vec<f64>>,
    /// File with one bid per line, $/MWh; overrides --bids.
    #[arg(long)]
    bids_file: Option<PathBuf>,
    /// Value of lost load, $/MWh; omit to forbid shedding.
    #[arg(long)]
    shed_penalty: Option<f64>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Case file to run on; falls back to the config's `case` field.
    #[arg(long)]
    case: Option<PathBuf>,
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Configuration overrides of the form key.path=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory for metrics, summaries, and checkpoints; falls back
    /// to the config's `out` field.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories, each containing a metrics.jsonl.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Directory for the report tables; defaults to <run>/report per run.
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXIT_INPUT: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn load_and_check_case(path: &PathBuf) -> Result<NetworkCase, u8> {
    let case = load_case(path).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_INPUT
    })?;
    for d in validate(&case) {
        if d.severity == Severity::Warning {
            eprintln!("warning: {}", d.message);
        }
    }
    Ok(case)
}

fn cmd_clear(args: &ClearArgs) -> Result<(), u8> {
    let case = load_and_check_case(&args.case)?;
    if args.t >= case.profile.horizon() {
        eprintln!(
            "error: time step {} out of range (horizon {})",
            args.t,
            case.profile.horizon()
        );
        return Err(EXIT_INPUT);
    }
    let bids = match &args.bids_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                eprintln!("error: cannot read bids file {}: {e}", path.display());
                EXIT_INPUT
            })?;
            let mut parsed = Vec::new();
            for tok in text.split([',', '\n', ' ', '\t']).filter(|t| !t.trim().is_empty()) {
                parsed.push(tok.trim().parse::<f64>().map_err(|_| {
                    eprintln!("error: bad bid value {tok:?} in {}", path.display());
                    EXIT_INPUT
                })?);
            }
            parsed
        }
        None => args
            .bids
            .clone()
            .unwrap_or_else(|| case.generators.iter().map(|g| g.marginal_cost).collect()),
    };
    if bids.len() != case.generators.len() {
        eprintln!(
            "error: {} bids for {} generators",
            bids.len(),
            case.generators.len()
        );
        return Err(EXIT_INPUT);
    }
    let input = ClearingInput {
        bids,
        demands: case.demand_at(args.t),
        capacities: case.lines.iter().map(|l| l.base_capacity).collect(),
        shed_penalty: args.shed_penalty,
    };
    let result = clear_market(&case, &input).map_err(|e| {
        eprintln!("error: {e}");
        match e {
            ClearingError::Infeasible => EXIT_INFEASIBLE,
            ClearingError::Dimension(_) => EXIT_INPUT,
            _ => EXIT_RUNTIME,
        }
    })?;
    let csv = clearing_csv(&result);
    match &args.out {
        Some(path) => std::fs::write(path, csv).map_err(|e| {
            eprintln!("error: cannot write {}: {e}", path.display());
            EXIT_RUNTIME
        })?,
        None => print!("{csv}"),
    }
    Ok(())
}

/// Flattens a clearing result into `quantity,index,value` rows; scalar rows
/// leave the index column empty.
fn clearing_csv(r: &gridco::dcopf::ClearingResult) -> String {
    let mut s = String::from("quantity,index,value\n");
    let mut vec_rows = |name: &str, vals: &[f64]| {
        for (i, v) in vals.iter().enumerate() {
            s.push_str(&format!("{name},{i},{}\n", sig15(*v)));
        }
    };
    vec_rows("dispatch", &r.dispatch);
    vec_rows("angle", &r.angles);
    vec_rows("flow", &r.flows);
    vec_rows("lmp", &r.lmp);
    vec_rows("gen_price", &r.gen_price);
    vec_rows("shed", &r.shed);
    s.push_str(&format!("operational_cost,,{}\n", sig15(r.operational_cost)));
    s.push_str(&format!("shed_cost,,{}\n", sig15(r.shed_cost)));
    s.push_str(&format!("bid_cost,,{}\n", sig15(r.bid_cost)));
    s
}

fn load_run_config(args: &TrainArgs) -> Result<RunConfig, u8> {
    let result = match &args.config {
        Some(path) => config::load_config(path, &args.overrides),
        None => config::parse_config("", &args.overrides),
    };
    result.map_err(|e| {
        eprintln!("error: {e}");
        match e {
            ConfigError::Io { .. }
            | ConfigError::Parse(_)
            | ConfigError::BadOverride(_)
            | ConfigError::UnknownKey(_)
            | ConfigError::TypeMismatch { .. } => EXIT_INPUT,
        }
    })
}

/// Resolves the case and output paths from the flags or, failing that, the
/// configuration file.
fn resolve_paths(args: &TrainArgs, cfg: &RunConfig) -> Result<(PathBuf, PathBuf), u8> {
    let case = args
        .case
        .clone()
        .or_else(|| cfg.case.as_ref().map(PathBuf::from))
        .ok_or_else(|| {
            eprintln!("error: no case file given (--case flag or `case` config field)");
            EXIT_INPUT
        })?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .ok_or_else(|| {
            eprintln!("error: no output directory given (--out flag or `out` config field)");
            EXIT_INPUT
        })?;
    Ok((case, out))
}

fn run_study(args: &TrainArgs, force_mode: Option<RunMode>) -> Result<(), u8> {
    let mut cfg = load_run_config(args)?;
    if let Some(mode) = force_mode {
        cfg.mode = mode;
    }
    let (case_path, out) = resolve_paths(args, &cfg)?;
    let case = load_and_check_case(&case_path)?;
    let label = case_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| case_path.display().to_string());
    let summary = harness::run(&case, &cfg, &out, &label).map_err(|e| {
        if e.downcast_ref::<ClearingError>()
            .is_some_and(|c| matches!(c, ClearingError::Infeasible))
        {
            eprintln!("error: {e}");
            EXIT_INFEASIBLE
        } else if e.downcast_ref::<CaseError>().is_some()
            || e.downcast_ref::<harness::SetupError>().is_some()
        {
            eprintln!("error: {e}");
            EXIT_INPUT
        } else {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    })?;
    println!("episodes      {}", summary.episodes);
    println!(
        "final design  [{}]",
        summary
            .final_design
            .iter()
            .map(|v| sig15(*v))
            .collect::<Vec<_>>()
            .join(", ")
    );
    println!("c_exp         {}", sig15(summary.c_exp));
    println!("mean c_oper   {}", sig15(summary.mean_c_oper));
    println!("mean g_total  {}", sig15(summary.mean_g_total));
    if let Some(planned) = summary.planned_total_cost {
        println!("planned cost  {}", sig15(planned));
        println!("realized cost {}", sig15(summary.realized_total_cost()));
    }
    println!("eval shed     {}", sig15(summary.eval_shed));
    println!("converged     {}", summary.converged);
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<(), u8> {
    run_study(args, None)
}

fn cmd_benchmark(args: &TrainArgs) -> Result<(), u8> {
    run_study(args, Some(RunMode::TwoStage))
}

fn cmd_report(args: &ReportArgs) -> Result<(), u8> {
    let mut rows = Vec::new();
    let mut worst_violations = 0usize;
    for run_dir in &args.runs {
        let run_id = run_dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| run_dir.display().to_string());
        let metrics = run_dir.join("metrics.jsonl");
        let out_dir = match &args.out {
            Some(base) if args.runs.len() > 1 => base.join(&run_id),
            Some(base) => base.clone(),
            None => run_dir.join("report"),
        };
        let outcome = report::generate(&metrics, &out_dir).map_err(|e| {
            eprintln!("error: run {run_id}: {e:#}");
            EXIT_INPUT
        })?;
        println!("run        {run_id}");
        println!("episodes   {}", outcome.episodes);
        println!("steps      {}", outcome.steps);
        println!("violations {}", outcome.violations.len());
        for v in &outcome.violations {
            eprintln!("violation: {run_id}: {v}");
        }
        worst_violations += outcome.violations.len();
        rows.push((run_id, outcome));
    }
    if rows.len() > 1 {
        let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
        if let Err(e) = std::fs::create_dir_all(&dir) {
            eprintln!("error: {e}");
            return Err(EXIT_RUNTIME);
        }
        let mut csv =
            String::from("run,episodes,steps,violations,mean_c_oper,c_exp,mean_g_total\n");
        for (id, o) in &rows {
            csv.push_str(&format!(
                "{id},{},{},{},{},{},{}\n",
                o.episodes,
                o.steps,
                o.violations.len(),
                sig15(o.mean_c_oper),
                sig15(o.c_exp),
                sig15(o.mean_g_total)
            ));
        }
        let path = dir.join("comparison.csv");
        if let Err(e) = std::fs::write(&path, csv) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return Err(EXIT_RUNTIME);
        }
    }
    if worst_violations == 0 {
        Ok(())
    } else {
        Err(EXIT_RUNTIME)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Clear(a) => cmd_clear(a),
        Command::Train(a) => cmd_train(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
