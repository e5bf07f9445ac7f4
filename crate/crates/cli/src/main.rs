//! `redistplan`: plan, analyze, and simulate 2-D block-cyclic data
//! redistribution between processor grids.
//!
//! Exit codes: 0 on success, 1 on domain failures (validation, failed
//! verification), 2 on argument errors.

use clap::{Args, Parser, Subcommand, ValueEnum};
use redistplan::analytics::{compare_reference_counts, estimate_cost, stats, sweep};
use redistplan::plandoc::{PlanDocument, SessionDocument};
use redistplan::redistribute::{dump_stores_csv, resize_session, standard_fill};
use redistplan::topology::ParseGridError;
use redistplan::{plan, BlockDesc, CostParams, GridShape, RedistProblem};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const FORMAT_ENV: &str = "REDISTPLAN_FORMAT";

#[derive(Parser)]
#[command(
    name = "redistplan",
    version,
    about = "Plan, analyze, and simulate 2-D block-cyclic data redistribution between processor grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a communication schedule and emit it as a plan document
    Plan(PlanArgs),
    /// Print the statistics of a schedule
    Stats(StatsArgs),
    /// Model the data-transfer cost of a schedule
    Cost(CostArgs),
    /// Execute a plan in the in-memory engine and verify the outcome
    Simulate(SimulateArgs),
    /// Plan many configurations and tabulate their statistics
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ProblemArgs {
    /// Source processor grid, as ROWSxCOLS
    #[arg(long, value_name = "RxC")]
    src: GridShape,
    /// Destination processor grid, as ROWSxCOLS
    #[arg(long, value_name = "RxC")]
    dst: GridShape,
    /// Block-grid side length N (the matrix is N x N blocks)
    #[arg(long, value_name = "N")]
    nblocks: usize,
    /// Block side length in elements
    #[arg(long, value_name = "NB", default_value_t = 1)]
    block_size: usize,
}

impl ProblemArgs {
    fn problem(&self) -> Result<RedistProblem, CliError> {
        let blocks = BlockDesc::from_blocks(self.nblocks, self.block_size)?;
        Ok(RedistProblem::new(self.src, self.dst, blocks)?)
    }
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Output format (json is canonical; csv emits the transfer table)
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write to a file instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Message initiation latency in seconds
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Transmission seconds per data block
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    /// Transmission seconds per byte, converted at NB^2 * 8 bytes per block
    #[arg(long, value_name = "S", conflicts_with = "tau")]
    tau_byte: Option<f64>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Source processor grid (superseded by --chain)
    #[arg(long, value_name = "RxC", required_unless_present = "chain")]
    src: Option<GridShape>,
    /// Destination processor grid (superseded by --chain)
    #[arg(long, value_name = "RxC", required_unless_present = "chain")]
    dst: Option<GridShape>,
    /// Resize through a grid sequence, e.g. "2x2,3x4,2x2"
    #[arg(long, value_name = "RxC,RxC,...")]
    chain: Option<String>,
    #[arg(long, value_name = "N")]
    nblocks: usize,
    #[arg(long, value_name = "NB", default_value_t = 1)]
    block_size: usize,
    /// Output format (text or json)
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write the final block placement as CSV for debugging
    #[arg(long, value_name = "PATH")]
    dump: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Run the built-in reference configuration table and compare counts
    #[arg(long)]
    table2: bool,
    /// Configurations to plan, e.g. "2x2:3x4,2x2:2x10"
    #[arg(long, value_name = "SRC:DST,...", required_unless_present = "table2")]
    configs: Option<String>,
    /// Block-grid side length N, shared by all configurations
    #[arg(long, value_name = "N", required_unless_present = "table2")]
    nblocks: Option<usize>,
    #[arg(long, value_name = "NB", default_value_t = 1)]
    block_size: usize,
    /// Message initiation latency in seconds
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Transmission seconds per data block
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    /// Transmission seconds per byte, converted at NB^2 * 8 bytes per block
    #[arg(long, value_name = "S", conflicts_with = "tau")]
    tau_byte: Option<f64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

enum CliError {
    Usage(String),
    Domain(String),
}

impl From<redistplan::TopologyError> for CliError {
    fn from(e: redistplan::TopologyError) -> Self {
        CliError::Domain(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Plan(args) => cmd_plan(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Cost(args) => cmd_cost(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

/// Resolves the output format: explicit flag first, then the environment
/// override, then the command default. An env value the command cannot
/// honor falls back to the default.
fn resolve_format(
    explicit: Option<Format>,
    allowed: &[Format],
    default: Format,
) -> Result<Format, CliError> {
    if let Some(f) = explicit {
        if allowed.contains(&f) {
            return Ok(f);
        }
        return Err(CliError::Usage(format!(
            "format {f:?} is not supported here"
        )));
    }
    match std::env::var(FORMAT_ENV) {
        Ok(value) => {
            let parsed = Format::from_str(&value.to_lowercase(), true)
                .map_err(|_| CliError::Usage(format!("{FORMAT_ENV}={value} is not a format")))?;
            Ok(if allowed.contains(&parsed) {
                parsed
            } else {
                default
            })
        }
        Err(_) => Ok(default),
    }
}

fn emit(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| CliError::Domain(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn effective_tau(tau: f64, tau_byte: Option<f64>, nb: usize) -> f64 {
    match tau_byte {
        Some(per_byte) => per_byte * (nb * nb * 8) as f64,
        None => tau,
    }
}

fn cmd_plan(args: PlanArgs) -> Result<(), CliError> {
    let format = resolve_format(args.format, &[Format::Json, Format::Csv], Format::Json)?;
    let problem = args.problem.problem()?;
    let pl = plan(&problem)?;
    let doc = PlanDocument::from_plan(&pl);
    let content = match format {
        Format::Csv => doc.transfer_csv(),
        _ => doc.to_json(),
    };
    emit(args.out.as_deref(), &content)
}

fn cmd_stats(args: StatsArgs) -> Result<(), CliError> {
    let format = resolve_format(args.format, &[Format::Json, Format::Csv], Format::Json)?;
    let problem = args.problem.problem()?;
    let s = stats(&plan(&problem)?);
    let content = match format {
        Format::Csv => format!(
            "steps,copies,sendrecvs,contentions,max_fan_in,message_blocks\n{},{},{},{},{},{}\n",
            s.steps, s.copies, s.sendrecvs, s.contentions, s.max_fan_in, s.message_blocks
        ),
        _ => {
            let mut json = serde_json::to_string_pretty(&s).expect("stats serialize");
            json.push('\n');
            json
        }
    };
    emit(args.out.as_deref(), &content)
}

fn cmd_cost(args: CostArgs) -> Result<(), CliError> {
    let problem = args.problem.problem()?;
    let pl = plan(&problem)?;
    let params = CostParams {
        lambda: args.lambda,
        tau: effective_tau(args.tau, args.tau_byte, args.problem.block_size),
    };
    let cost = estimate_cost(&pl, &params);
    emit(args.out.as_deref(), &format!("{cost:?}\n"))
}

fn parse_chain(text: &str) -> Result<Vec<GridShape>, CliError> {
    let grids = text
        .split(',')
        .map(|part| part.trim().parse::<GridShape>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if grids.len() < 2 {
        return Err(CliError::Usage("--chain needs at least two grids".into()));
    }
    Ok(grids)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let format = resolve_format(args.format, &[Format::Text, Format::Json], Format::Text)?;
    let grids = match &args.chain {
        Some(text) => parse_chain(text)?,
        None => match (args.src, args.dst) {
            (Some(s), Some(d)) => vec![s, d],
            _ => {
                return Err(CliError::Usage(
                    "--src and --dst (or --chain) are required".into(),
                ))
            }
        },
    };
    let desc = BlockDesc::from_blocks(args.nblocks, args.block_size)?;
    let fill = standard_fill::<f64>;
    let outcome = resize_session::<f64, _>(&grids, desc, &fill)
        .map_err(|e| CliError::Domain(e.to_string()))?;

    if let Some(path) = &args.dump {
        emit(Some(path), &dump_stores_csv(&outcome.stores))?;
    }

    let content = match format {
        Format::Json => SessionDocument::from_hops(&outcome.hops).to_json(),
        _ => {
            let mut text = String::new();
            for (i, hop) in outcome.hops.iter().enumerate() {
                writeln!(
                    text,
                    "hop {}: {} -> {} steps={} shift={} contentions={}/{} sends={} copies={} \
                     max_fan_in={} delivered={} {}",
                    i + 1,
                    hop.src,
                    hop.dst,
                    hop.steps,
                    hop.shift_case,
                    hop.contentions_before,
                    hop.contentions_after,
                    hop.run.total_sends(),
                    hop.run.total_copies(),
                    hop.run.max_fan_in(),
                    hop.run.blocks_delivered,
                    if hop.verified() { "VERIFIED" } else { "FAILED" }
                )
                .expect("writing to string");
                for mismatch in &hop.verify.mismatches {
                    writeln!(text, "  mismatch: {mismatch}").expect("writing to string");
                }
            }
            let status = if outcome.all_verified() {
                "VERIFIED"
            } else {
                "FAILED"
            };
            writeln!(text, "{} hop(s) {status}", outcome.hops.len()).expect("writing to string");
            text
        }
    };
    emit(args.out.as_deref(), &content)?;

    if outcome.all_verified() {
        Ok(())
    } else {
        Err(CliError::Domain("verification failed".into()))
    }
}

fn parse_configs(text: &str) -> Result<Vec<(GridShape, GridShape)>, CliError> {
    text.split(',')
        .map(|pair| {
            let (src, dst) = pair
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("config {pair:?} is not SRC:DST")))?;
            let src = src
                .trim()
                .parse()
                .map_err(|e: ParseGridError| CliError::Usage(e.to_string()))?;
            let dst = dst
                .trim()
                .parse()
                .map_err(|e: ParseGridError| CliError::Usage(e.to_string()))?;
            Ok((src, dst))
        })
        .collect()
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let format = resolve_format(args.format, &[Format::Csv, Format::Json], Format::Csv)?;
    let content = if args.table2 {
        render_reference_comparison(format)
    } else {
        let configs = parse_configs(args.configs.as_deref().expect("clap enforces --configs"))?;
        let nblocks = args.nblocks.expect("clap enforces --nblocks");
        let params = CostParams {
            lambda: args.lambda,
            tau: effective_tau(args.tau, args.tau_byte, args.block_size),
        };
        render_sweep(&configs, nblocks, args.block_size, &params, format)
    };
    emit(args.out.as_deref(), &content)
}

fn render_sweep(
    configs: &[(GridShape, GridShape)],
    nblocks: usize,
    nb: usize,
    params: &CostParams,
    format: Format,
) -> String {
    let rows = sweep(configs, nblocks, nb, params);
    match format {
        Format::Json => {
            let values: Vec<serde_json::Value> = rows
                .iter()
                .map(|row| match &row.outcome {
                    Ok(data) => serde_json::json!({
                        "src": row.src.to_string(),
                        "dst": row.dst.to_string(),
                        "topology": data.topology.label(),
                        "stats": data.stats,
                        "modeled_cost_s": data.cost,
                    }),
                    Err(e) => serde_json::json!({
                        "src": row.src.to_string(),
                        "dst": row.dst.to_string(),
                        "error": e.to_string(),
                    }),
                })
                .collect();
            let mut s = serde_json::to_string_pretty(&values).expect("sweep rows serialize");
            s.push('\n');
            s
        }
        _ => {
            let mut out = String::from(
                "src,dst,topology,steps,copies,sendrecvs,contentions,message_blocks,modeled_cost_s\n",
            );
            for row in rows {
                match row.outcome {
                    Ok(data) => {
                        let s = data.stats;
                        writeln!(
                            out,
                            "{},{},{},{},{},{},{},{},{:?}",
                            row.src,
                            row.dst,
                            data.topology.label(),
                            s.steps,
                            s.copies,
                            s.sendrecvs,
                            s.contentions,
                            s.message_blocks,
                            data.cost
                        )
                        .expect("writing to string");
                    }
                    Err(e) => {
                        writeln!(out, "# {}->{} skipped: {e}", row.src, row.dst)
                            .expect("writing to string");
                    }
                }
            }
            out
        }
    }
}

fn render_reference_comparison(format: Format) -> String {
    let lines = compare_reference_counts();
    match format {
        Format::Json => {
            let values: Vec<serde_json::Value> = lines
                .iter()
                .map(|l| {
                    serde_json::json!({
                        "p": l.p,
                        "q": l.q,
                        "topology": l.topology,
                        "src": l.src.to_string(),
                        "dst": l.dst.to_string(),
                        "steps": l.steps,
                        "copies": l.copies,
                        "sendrecvs": l.sendrecvs,
                        "ref_steps": l.ref_steps,
                        "ref_copies": l.ref_copies,
                        "ref_sendrecvs": l.ref_sendrecvs,
                        "result": if l.matches { "match" } else { "diverge" },
                    })
                })
                .collect();
            let mut s = serde_json::to_string_pretty(&values).expect("comparison serialize");
            s.push('\n');
            s
        }
        _ => {
            let mut out = String::from(
                "p,q,topology,src,dst,steps,copies,sendrecvs,ref_steps,ref_copies,ref_sendrecvs,result\n",
            );
            for l in lines {
                let ref_steps = l.ref_steps.map_or(String::new(), |v| v.to_string());
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    l.p,
                    l.q,
                    l.topology,
                    l.src,
                    l.dst,
                    l.steps,
                    l.copies,
                    l.sendrecvs,
                    ref_steps,
                    l.ref_copies,
                    l.ref_sendrecvs,
                    if l.matches { "match" } else { "diverge" }
                )
                .expect("writing to string");
            }
            out
        }
    }
}
