//! `swarm-planner`: plan averaging strategies, simulate training under churn,
//! tabulate group sizes and run SGD checks from the command line.
//!
//! Exit codes: 0 success, 2 input error, 3 infeasible collaboration,
//! 4 training stalled (or SGD diverged). Log level comes from `SWARM_PLANNER_LOG`.

mod error;
mod scenario;
mod sgd;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use swarm_core::groups::sweep;
use swarm_core::netsim::{simulate_averaging, simulate_training, ChurnTrace, SimSummary};
use swarm_core::strategy::{solve_strategy, Algorithm};
use swarm_core::{CollaborationSpec, StrategyAssignment};

use error::CliError;
use scenario::{read_json, Scenario, ScenarioFile};

#[derive(Parser)]
#[command(name = "swarm-planner", version, about = "Communication planning and simulation for collaborative training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum Format {
    Csv,
    #[default]
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the averaging strategy for a scenario and print the per-peer roles.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        /// Write the assignment here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Simulate training under the scenario's churn trace with every averaging algorithm.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Simulated duration; overrides the trace horizon.
        #[arg(long)]
        hours: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for `trace.csv` and `summary.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal group size and expected iterations over a grid of sizes and failure rates.
    Groups {
        /// Inclusive collaboration sizes, `a:b`.
        #[arg(long)]
        n_range: String,
        /// Failure rates `lo:hi:step`, inclusive of `hi` when it lies on the grid.
        #[arg(long)]
        p_range: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Compare fixed and varying batch SGD on a random quadratic and check the convergence bound.
    Sgd {
        /// JSON config; a scenario file with an `sgd` block also works.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for `losses.csv` and `report.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SWARM_PLANNER_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan { scenario, out, format } => cmd_plan(&scenario, out.as_deref(), format),
        Command::Simulate {
            scenario,
            hours,
            seed,
            out,
        } => cmd_simulate(&scenario, hours, seed, out.as_deref()),
        Command::Groups {
            n_range,
            p_range,
            out,
            format,
        } => cmd_groups(&n_range, &p_range, out.as_deref(), format),
        Command::Sgd { config, seed, out } => cmd_sgd(config.as_deref(), seed, out.as_deref()),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.into(), source })?;
    }
    fs::write(path, bytes).map_err(|source| CliError::Write { path: path.into(), source })?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}

#[derive(Serialize)]
struct PeerRow {
    id: String,
    role: &'static str,
    computes: bool,
    fraction: f64,
}

#[derive(Serialize)]
struct PlanOutput<'a> {
    scenario: &'a str,
    /// Optimizer steps per second.
    xi: f64,
    relaxed_xi: f64,
    peers: Vec<PeerRow>,
    assignment: &'a StrategyAssignment,
}

fn role(computes: bool, fraction: f64) -> &'static str {
    match (computes, fraction > 1e-9) {
        (true, true) => "both",
        (true, false) => "compute",
        (false, true) => "aggregate",
        (false, false) => "idle",
    }
}

fn cmd_plan(path: &Path, out: Option<&Path>, format: Format) -> Result<String, CliError> {
    let scenario = Scenario::load(path)?;
    let spec = &scenario.spec;
    if !spec.has_computing_peer() {
        return Err(CliError::Infeasible("no computing peers".into()));
    }
    let assignment = solve_strategy(spec)?;
    let peers: Vec<PeerRow> = spec
        .peers
        .iter()
        .zip(assignment.computes.iter().zip(&assignment.fractions))
        .map(|(p, (&c, &f))| PeerRow {
            id: p.id.0.clone(),
            role: role(c, f),
            computes: c,
            fraction: f,
        })
        .collect();

    let mut table = format!("scenario {}: xi = {:.6} steps/s\n", scenario.name, assignment.throughput);
    let width = peers.iter().map(|p| p.id.len()).max().unwrap_or(4).max(4);
    let _ = writeln!(table, "{:<width$}  {:<9}  {:>10}", "peer", "role", "fraction");
    for p in &peers {
        let _ = writeln!(table, "{:<width$}  {:<9}  {:>10.6}", p.id, p.role, p.fraction);
    }

    if let Some(out) = out {
        let body = match format {
            Format::Json => to_json(&PlanOutput {
                scenario: &scenario.name,
                xi: assignment.throughput,
                relaxed_xi: assignment.relaxed_throughput,
                peers,
                assignment: &assignment,
            }),
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                for p in &peers {
                    w.serialize(p).expect("row serializes");
                }
                String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
            }
        };
        write_file(out, body.as_bytes())?;
    }
    Ok(table)
}

#[derive(Serialize)]
struct AlgorithmSummary {
    algorithm: Algorithm,
    round_seconds: f64,
    #[serde(flatten)]
    run: SimSummary,
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    scenario: &'a str,
    seed: u64,
    horizon_seconds: f64,
    /// Algorithm whose step trace is written to `trace.csv`.
    traced: Algorithm,
    strategies: Vec<AlgorithmSummary>,
    /// Steps per hour of the adaptive strategy over all-reduce.
    adaptive_over_allreduce: f64,
    /// All-reduce round time over the adaptive round time, without churn.
    round_time_speedup: f64,
}

fn cmd_simulate(path: &Path, hours: Option<f64>, seed: Option<u64>, out: Option<&Path>) -> Result<String, CliError> {
    let scenario = Scenario::load(path)?;
    if let Some(h) = hours {
        if !(h.is_finite() && h > 0.0) {
            return Err(CliError::Input(format!("--hours must be positive, got {h}")));
        }
    }
    let trace = match (&scenario.trace, hours) {
        (Some(t), _) => t.clone(),
        (None, Some(h)) => ChurnTrace::static_fleet(h * 3600.0),
        (None, None) => return Err(CliError::Input("scenario has no trace; pass --hours to simulate a static fleet".into())),
    };
    let mut config = scenario.simulate.clone();
    if let Some(h) = hours {
        config.horizon = Some(h * 3600.0);
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    let spec: &CollaborationSpec = &scenario.spec;
    if !spec.has_computing_peer() {
        return Err(CliError::Infeasible("no computing peers".into()));
    }

    let mut strategies = Vec::new();
    let mut traced_csv = Vec::new();
    for algorithm in Algorithm::ALL {
        let cfg = swarm_core::netsim::TrainingConfig { algorithm, ..config.clone() };
        let run = simulate_training(spec, &trace, &cfg)?;
        if algorithm == config.algorithm {
            run.write_csv(&mut traced_csv).map_err(|e| CliError::Input(e.to_string()))?;
        }
        strategies.push(AlgorithmSummary {
            algorithm,
            round_seconds: simulate_averaging(spec, algorithm)?,
            run: run.summary(),
        });
    }
    let pick = |a: Algorithm| strategies.iter().find(|s| s.algorithm == a).expect("every algorithm ran");
    let (ar, ad) = (pick(Algorithm::AllReduce), pick(Algorithm::Adaptive));
    let summary = SimulateOutput {
        scenario: &scenario.name,
        seed: config.seed,
        horizon_seconds: config.horizon.unwrap_or(trace.horizon),
        traced: config.algorithm,
        adaptive_over_allreduce: ad.run.steps_per_hour / ar.run.steps_per_hour,
        round_time_speedup: ar.round_seconds / ad.round_seconds,
        strategies,
    };
    let json = to_json(&summary);
    if let Some(dir) = out {
        write_file(&dir.join("trace.csv"), &traced_csv)?;
        write_file(&dir.join("summary.json"), json.as_bytes())?;
    }
    Ok(json)
}

fn parse_n_range(text: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Input(format!("--n-range expects a:b with 2 <= a <= b, got {text:?}"));
    let (a, b) = text.split_once(':').ok_or_else(bad)?;
    let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a < 2 || a > b {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

fn parse_p_range(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Input(format!("--p-range expects lo:hi:step with 0 <= lo <= hi < 1 and step > 0, got {text:?}"));
    let parts: Vec<f64> = text.split(':').map(|s| s.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let [lo, hi, step] = parts[..] else {
        return Err(bad());
    };
    if !(lo >= 0.0 && lo <= hi && hi < 1.0 && step > 0.0 && step.is_finite()) {
        return Err(bad());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    // Round to the step's decimal grid so printed values are stable.
    Ok((0..=count).map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12).collect())
}

fn cmd_groups(n_range: &str, p_range: &str, out: Option<&Path>, format: Format) -> Result<String, CliError> {
    let ns = parse_n_range(n_range)?;
    let ps = parse_p_range(p_range)?;
    let rows = sweep(&ns, &ps).map_err(|e| CliError::Input(e.to_string()))?;
    let body = match format {
        Format::Csv => {
            let mut text = String::from("n,p,m_star,expected_iterations\n");
            for r in &rows {
                let _ = writeln!(text, "{},{},{},{:.9}", r.n, r.p, r.m, r.expected_iterations);
            }
            text
        }
        Format::Json => to_json(&rows),
    };
    match out {
        Some(path) => {
            write_file(path, body.as_bytes())?;
            Ok(String::new())
        }
        None => Ok(body),
    }
}

fn cmd_sgd(config: Option<&Path>, seed: u64, out: Option<&Path>) -> Result<String, CliError> {
    let config = match config {
        None => sgd::SgdConfig::default(),
        Some(path) => {
            let value: serde_json::Value = read_json(path)?;
            let parsed = if value.get("spec").is_some() {
                serde_json::from_value::<ScenarioFile>(value).map(|s| s.sgd.unwrap_or_default())
            } else {
                serde_json::from_value(value)
            };
            parsed.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        }
    };
    let result = sgd::run(config, seed)?;
    let report = &result.report;
    let json = to_json(report);
    if let Some(dir) = out {
        write_file(&dir.join("losses.csv"), &result.csv)?;
        write_file(&dir.join("report.json"), json.as_bytes())?;
    }
    let mut text = String::new();
    let _ = writeln!(
        text,
        "gap: {:.6} ({:.3}% of initial suboptimality {:.4}); within 5%: {}",
        report.mean_gap,
        100.0 * report.gap_fraction,
        report.initial_suboptimality,
        report.gap_within_5_percent
    );
    let _ = writeln!(
        text,
        "noise variance: max {:.6} vs sigma0^2/m = {:.6}",
        report.max_noise_variance, report.noise_variance_limit
    );
    let _ = writeln!(
        text,
        "bound holds: {} (lhs {:.6}, rhs {:.6})",
        report.bound.satisfied, report.bound.lhs, report.bound.rhs
    );
    Ok(text)
}
