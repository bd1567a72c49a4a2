//! `concpp` experiment runner: missions, trace validation, metric aggregation
//! and map generation.

mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use thiserror::Error;

use concpp::kinematics::{parse_trace, validate_path_set, Clk, TimedPath};
use concpp::sim::{aggregate, run_repeats, Aggregate, MissionOutcome, MissionReport, SimError};
use concpp::workspace::{generate_random_map, parse_map};

use config::{Clock, Kind, Mode, ScenarioConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Invariant(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(name = "concpp", version, about = "Concurrent multi-robot coverage planning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run missions and write reports, traces, round logs and an aggregate.
    Run(RunArgs),
    /// Check a trace for collisions and complete coverage of a map.
    ValidateTrace { trace: PathBuf, map: PathBuf },
    /// Re-aggregate the per-run reports found under a directory.
    Stats { dir: PathBuf },
    /// Write a random map with connected free space.
    GenMap {
        #[arg(long)]
        width: u32,
        #[arg(long)]
        height: u32,
        #[arg(long, default_value_t = 0.2675)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario file, JSON or `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    robots: Option<usize>,
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_enum)]
    clock: Option<Clock>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any other config key, e.g. `--set cop_ms=2000`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl RunArgs {
    fn scenario(&self) -> Result<ScenarioConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        for s in &self.sets {
            cfg.set(s).map_err(CliError::Config)?;
        }
        if let Some(v) = &self.map {
            cfg.map = Some(v.clone());
        }
        if let Some(v) = self.robots {
            cfg.robots = v;
        }
        if let Some(v) = self.kind {
            cfg.kind = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        if let Some(v) = self.clock {
            cfg.clock = v;
        }
        if let Some(v) = self.repeats {
            cfg.repeats = v;
        }
        if let Some(v) = self.threads {
            cfg.threads = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        Ok(cfg)
    }
}

const REPORT_FILE: &str = "report.json";

fn reports_csv(reports: &[MissionReport]) -> String {
    let mut out = String::from("seed");
    if let Some(first) = reports.first() {
        for (name, _) in first.metrics() {
            out.push(',');
            out.push_str(name);
        }
    }
    out.push('\n');
    for r in reports {
        out.push_str(&r.seed.to_string());
        for (_, v) in r.metrics() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

fn aggregate_csv(agg: &Aggregate) -> String {
    let mut out = String::from("metric,runs,mean,stddev\n");
    for (name, m) in &agg.metrics {
        out.push_str(&format!("{name},{},{},{}\n", agg.runs, m.mean, m.stddev));
    }
    out
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

fn write_aggregate(dir: &Path, reports: &[MissionReport]) -> Result<Aggregate, CliError> {
    let agg = aggregate(reports);
    write(&dir.join("reports.csv"), &reports_csv(reports))?;
    write(&dir.join("aggregate.csv"), &aggregate_csv(&agg))?;
    write(&dir.join("aggregate.json"), &serde_json::to_string_pretty(&agg).expect("serializable"))?;
    Ok(agg)
}

fn write_run(dir: &Path, out: &MissionOutcome) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write(&dir.join(REPORT_FILE), &serde_json::to_string_pretty(&out.report).expect("serializable"))?;
    write(&dir.join("trace.csv"), &out.trace_csv())?;
    write(&dir.join("rounds.csv"), &out.round_log_csv())?;
    Ok(())
}

fn is_setup_error(e: &SimError) -> bool {
    matches!(e, SimError::Disconnected | SimError::TooManyRobots { .. } | SimError::Deployment(_) | SimError::ZeroTau)
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let scenario = args.scenario()?;
    if args.print_config {
        print!("{}", scenario.to_key_values());
        return Ok(());
    }
    let mission = scenario.mission()?;
    let dir = &scenario.out;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write(&dir.join("config.txt"), &scenario.to_key_values())?;
    info!("running {} mission(s) on {} thread(s)", scenario.repeats, scenario.threads);

    let results = run_repeats(&mission, scenario.repeats, scenario.threads).map_err(|e| CliError::Invariant(e.to_string()))?;
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (k, result) in results.into_iter().enumerate() {
        let seed = concpp::sim::repeat_seed(scenario.seed, k);
        let run_dir = dir.join(format!("seed-{seed}"));
        match result {
            Ok(out) => {
                write_run(&run_dir, &out)?;
                let r = &out.report;
                println!(
                    "seed {seed}: covered {}/{} collisions {} T_m {} ms T_c {} ms T_c^ol {} ms T_p {} ms rounds {}",
                    r.covered, r.free_cells, r.collisions, r.t_m_ms, r.t_c_ms, r.t_c_ol_ms, r.t_p_ms, r.rounds
                );
                if r.collisions > 0 || !r.is_complete() {
                    failures.push(format!("seed {seed}: {} collisions, covered {}/{}", r.collisions, r.covered, r.free_cells));
                }
                reports.push(out.report);
            }
            Err(e) if is_setup_error(&e) => return Err(CliError::Config(format!("seed {seed}: {e}"))),
            Err(e) => {
                fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;
                write(&run_dir.join("error.txt"), &format!("{e}\n"))?;
                failures.push(format!("seed {seed}: {e}"));
            }
        }
    }
    if !reports.is_empty() {
        write_aggregate(dir, &reports)?;
        println!("wrote {} run(s) to {}", reports.len(), dir.display());
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(failures.join("\n")))
    }
}

fn cmd_validate_trace(trace: &Path, map: &Path) -> Result<(), CliError> {
    let ws = parse_map(&fs::read_to_string(map).map_err(io_err(map))?).map_err(|e| CliError::Config(format!("{}: {e}", map.display())))?;
    let paths = parse_trace(&fs::read_to_string(trace).map_err(io_err(trace))?).map_err(|e| CliError::Config(format!("{}: {e}", trace.display())))?;
    let horizon = paths.values().map(|p| p.len() as Clk).max().unwrap_or(0);
    let timed: BTreeMap<_, _> = paths.iter().map(|(&id, p)| (id, TimedPath::new(p.clone(), 0))).collect();
    let audit = validate_path_set(&timed, &ws, horizon);
    let visited: BTreeSet<_> = paths.values().flat_map(|p| p.cells()).filter(|&c| ws.is_free(c)).collect();
    let missing = ws.free_count() - visited.len();
    for v in &audit.violations {
        let robots: Vec<String> = v.robots.iter().map(|r| r.0.to_string()).collect();
        println!("violation clk {} {:?} robots {}", v.time, v.kind, robots.join(" "));
    }
    println!("robots {} horizon {} violations {} covered {}/{}", paths.len(), horizon, audit.violations.len(), visited.len(), ws.free_count());
    match (audit.is_clean(), missing) {
        (true, 0) => Ok(()),
        (false, _) => Err(CliError::Invariant(format!("{} violations", audit.violations.len()))),
        (true, n) => Err(CliError::Invariant(format!("{n} free cells never visited"))),
    }
}

fn cmd_stats(dir: &Path) -> Result<(), CliError> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path().join(REPORT_FILE);
        if path.is_file() {
            found.push(path);
        }
    }
    found.sort();
    let mut reports: Vec<MissionReport> = Vec::new();
    for path in &found {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        reports.push(serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?);
    }
    if reports.is_empty() {
        return Err(CliError::Config(format!("no {REPORT_FILE} under {}", dir.display())));
    }
    reports.sort_by_key(|r| r.seed);
    let agg = write_aggregate(dir, &reports)?;
    print!("{}", aggregate_csv(&agg));
    Ok(())
}

fn cmd_gen_map(width: u32, height: u32, density: f64, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    let ws = generate_random_map(width, height, density, seed).map_err(|e| CliError::Config(e.to_string()))?;
    let text = ws.to_map_string();
    match out {
        Some(path) => write(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::ValidateTrace { trace, map } => cmd_validate_trace(trace, map),
        Command::Stats { dir } => cmd_stats(dir),
        Command::GenMap { width, height, density, seed, out } => cmd_gen_map(*width, *height, *density, *seed, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
