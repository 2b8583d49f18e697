//! Command-line front end: run single simulations, method-comparison
//! batteries and penetration sweeps, mine rule books from transaction
//! datasets, recompute metrics from logs, and fold mass-function files.
//!
//! Exit codes are a stable contract for scripting: 0 success, 1 runtime
//! or domain error, 2 usage/config error.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use ccsim_core::decision::Method;
use ccsim_core::evidence::{
    combine_all, pignistic, validate_mass, CauseSet, CombinationRule, EvidenceError, MassFunction,
    ALL_CAUSES,
};
use ccsim_core::metrics::{
    self, compare_methods, compute_run_metrics, penetration_sweep, summarize, MetricsError,
    RunMetrics,
};
use ccsim_core::rules::{
    apriori_frequent, generate_rules, mine_supervised, Dataset, MiningConfig, RulesError,
};
use ccsim_core::trafficsim::{load_scenario, run, EventLog, ScenarioConfig, ScenarioError};

const OUT_DIR_ENV: &str = "CCSIM_OUT_DIR";
const SCENARIO_DIR_ENV: &str = "CCSIM_SCENARIOS";

#[derive(Parser)]
#[command(
    name = "ccsim",
    about = "Cooperative congestion-cause estimation: simulator, miner and evidence tools",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its log and metrics
    Run(RunArgs),
    /// Run a (method x seed) battery and summarize it against BP
    Compare(CompareArgs),
    /// Sweep penetration rates for one method
    Sweep(SweepArgs),
    /// Mine an association rule book from a transaction dataset
    Mine(MineArgs),
    /// Combine mass functions from a file, optionally with BetP
    Combine(CombineArgs),
    /// Recompute metrics from an existing event-log CSV
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file path or bundled scenario name
    #[arg(long)]
    scenario: String,
    /// bp | vp | bf | dat | beta-dat
    #[arg(long)]
    method: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (default: $CCSIM_OUT_DIR or .)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    scenario: String,
    /// Comma-separated method list
    #[arg(long, value_delimiter = ',', required = true)]
    methods: Vec<String>,
    /// Number of seeds (0..k)
    #[arg(long)]
    seeds: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    method: String,
    /// Comma-separated penetration rates in [0,1]
    #[arg(long, value_delimiter = ',', required = true)]
    rates: Vec<f64>,
    /// Number of seeds (0..k)
    #[arg(long)]
    seeds: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MineArgs {
    /// Transaction dataset: one `I,SE|I`-style line per transaction
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    minsup: f64,
    #[arg(long, default_value_t = 0.8)]
    mincon: f64,
    /// Also mine {guess,label}->{label} correction rules (needs labels)
    #[arg(long)]
    supervised: bool,
    /// Rule book CSV path (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CombineArgs {
    /// Mass file: `subset:mass` lines, blank line between masses
    #[arg(long)]
    masses: PathBuf,
    /// conjunctive | dempster
    #[arg(long, default_value = "conjunctive")]
    rule: String,
    /// Append the pignistic transform of the result
    #[arg(long)]
    betp: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Event-log CSV produced by `run`
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Errors split by exit code.
enum CliError {
    /// Exit 2: bad flags or configuration.
    Usage(anyhow::Error),
    /// Exit 1: runtime or domain failure.
    Runtime(anyhow::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(e) | CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Usage(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        usage(e)
    }
}

impl From<RulesError> for CliError {
    fn from(e: RulesError) -> Self {
        match e {
            RulesError::Io { .. } => runtime(e),
            _ => usage(e),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::RateOutOfRange(_) => usage(e),
            _ => runtime(e),
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Mine(args) => cmd_mine(args),
        Command::Combine(args) => cmd_combine(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => {}
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

/// Resolves a scenario argument: an existing path wins; otherwise the
/// name is looked up in $CCSIM_SCENARIOS, then ./scenarios.
fn resolve_scenario(arg: &str) -> Result<ScenarioConfig, CliError> {
    let direct = Path::new(arg);
    if direct.exists() {
        return Ok(load_scenario(direct)?);
    }
    let mut candidates = Vec::new();
    if let Ok(dir) = std::env::var(SCENARIO_DIR_ENV) {
        candidates.push(PathBuf::from(dir).join(format!("{arg}.toml")));
    }
    candidates.push(PathBuf::from("scenarios").join(format!("{arg}.toml")));
    for c in &candidates {
        if c.exists() {
            return Ok(load_scenario(c)?);
        }
    }
    Err(usage(anyhow::anyhow!(
        "scenario `{arg}` not found (looked at the path and {} candidates)",
        candidates.len()
    )))
}

fn parse_method(s: &str) -> Result<Method, CliError> {
    s.parse::<Method>().map_err(usage)
}

fn out_dir(arg: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = arg
        .or_else(|| std::env::var(OUT_DIR_ENV).ok().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating output dir {}", dir.display()))
        .map_err(runtime)?;
    Ok(dir)
}

fn seeds_from_count(k: u64) -> Result<Vec<u64>, CliError> {
    if k == 0 {
        return Err(usage(anyhow::anyhow!("--seeds must be at least 1")));
    }
    Ok((0..k).collect())
}

fn write_file(
    path: &Path,
    write: impl FnOnce(&mut fs::File) -> anyhow::Result<()>,
) -> Result<(), CliError> {
    let mut f = fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(runtime)?;
    write(&mut f).map_err(runtime)
}

fn write_metrics_row_csv(path: &Path, rows: &[&RunMetrics]) -> Result<(), CliError> {
    write_file(path, |f| {
        writeln!(
            f,
            "scenario,method,seed,final-accuracy,detection-time,false-alarm-pct,gap-p85"
        )?;
        for m in rows {
            writeln!(
                f,
                "{},{},{},{},{},{},{}",
                m.scenario_id,
                m.method.name(),
                m.seed,
                m.final_accuracy,
                m.detection_time.map(|v| v.to_string()).unwrap_or_default(),
                m.false_alarm_pct,
                m.gap_p85.map(|v| v.to_string()).unwrap_or_default(),
            )?;
        }
        Ok(())
    })
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let mut cfg = resolve_scenario(&args.scenario)?;
    cfg.method.method = parse_method(&args.method)?;
    let dir = out_dir(args.out)?;
    let truth = cfg.truth();
    let log = run(&cfg, args.seed);
    let metrics = compute_run_metrics(&log, &truth, args.seed);

    let stem = format!("{}_{}_{}", cfg.id, cfg.method.method.name(), args.seed);
    write_file(&dir.join(format!("{stem}.log.csv")), |f| {
        log.write_csv(f).map_err(Into::into)
    })?;
    write_metrics_row_csv(&dir.join(format!("{stem}.metrics.csv")), &[&metrics])?;
    write_file(&dir.join(format!("{stem}.accuracy.csv")), |f| {
        metrics::write_accuracy_csv(f, std::slice::from_ref(&metrics)).map_err(Into::into)
    })?;
    println!(
        "run {}: {} records, final accuracy {:.3}, detection {}, false alarms {:.2}%",
        stem,
        log.len(),
        metrics.final_accuracy,
        metrics
            .detection_time
            .map(|t| format!("{t:.1} s"))
            .unwrap_or_else(|| "none".to_string()),
        metrics.false_alarm_pct
    );
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    let cfg = resolve_scenario(&args.scenario)?;
    let methods = args
        .methods
        .iter()
        .map(|m| parse_method(m))
        .collect::<Result<Vec<_>, _>>()?;
    let seeds = seeds_from_count(args.seeds)?;
    let dir = out_dir(args.out)?;

    let rows = compare_methods(&cfg, &methods, &seeds);
    let summaries = summarize(&rows);
    write_file(&dir.join("accuracy.csv"), |f| {
        metrics::write_accuracy_csv(f, &rows).map_err(Into::into)
    })?;
    write_file(&dir.join("summary.csv"), |f| {
        metrics::write_summary_csv(f, &summaries).map_err(Into::into)
    })?;
    for s in &summaries {
        println!(
            "{:<8} runs={} final-accuracy={:.3} (sd {:.3}) detection={} false-alarms={:.2}%{}",
            s.method.name(),
            s.runs,
            s.mean_final_accuracy,
            s.std_final_accuracy,
            s.mean_detection_time
                .map(|t| format!("{t:.0} s"))
                .unwrap_or_else(|| "none".to_string()),
            s.mean_false_alarm_pct,
            s.improvement_vs_bp_pct
                .map(|i| format!(" vs-BP {i:+.1}%"))
                .unwrap_or_default()
        );
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let cfg = resolve_scenario(&args.scenario)?;
    let method = parse_method(&args.method)?;
    let seeds = seeds_from_count(args.seeds)?;
    let dir = out_dir(args.out)?;

    let rows = penetration_sweep(&cfg, &args.rates, &seeds, method)?;
    write_file(&dir.join("sweep.csv"), |f| {
        metrics::write_sweep_csv(f, &rows).map_err(Into::into)
    })?;
    for rate in &args.rates {
        let finals: Vec<f64> = rows
            .iter()
            .filter(|r| r.rate == *rate)
            .map(|r| r.metrics.final_accuracy)
            .collect();
        let det = metrics::mean(
            rows.iter()
                .filter(|r| r.rate == *rate)
                .filter_map(|r| r.metrics.detection_time),
        );
        println!(
            "rate {:>5.2}: mean final accuracy {:.3}, mean detection {}",
            rate,
            metrics::mean(finals.iter().copied()).unwrap_or(0.0),
            det.map(|t| format!("{t:.0} s"))
                .unwrap_or_else(|| "none".to_string())
        );
    }
    Ok(())
}

fn cmd_mine(args: MineArgs) -> Result<(), CliError> {
    let dataset = Dataset::read_path(&args.dataset)?;
    let cfg = MiningConfig::new(args.minsup, args.mincon)?;
    let book = if args.supervised {
        mine_supervised(&dataset, &cfg)?
    } else {
        let frequent = apriori_frequent(&dataset, cfg.minsup)?;
        generate_rules(&frequent, &dataset, cfg.mincon)
    };
    match &args.out {
        Some(path) => write_file(path, |f| book.write_csv(f).map_err(Into::into))?,
        None => {
            let mut stdout = std::io::stdout();
            book.write_csv(&mut stdout).map_err(runtime)?;
        }
    }
    eprintln!(
        "mined {} rules from {} transactions (minsup {}, mincon {})",
        book.rules().len(),
        dataset.len(),
        cfg.minsup,
        cfg.mincon
    );
    Ok(())
}

/// Parses the mass file format: one focal element per line as
/// `subset:mass` (`We,Re:0.3`, `OMEGA:0.1`), masses separated by blank
/// lines, `#` comments allowed.
fn parse_mass_file(text: &str) -> Result<Vec<MassFunction>, CliError> {
    let mut masses = Vec::new();
    let mut current: Vec<(CauseSet, f64)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            if !current.is_empty() {
                masses.push(MassFunction::from_pairs(current.drain(..)));
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let (set, mass) = line.split_once(':').ok_or_else(|| {
            usage(anyhow::anyhow!(
                "line {}: expected `subset:mass`, got `{line}`",
                idx + 1
            ))
        })?;
        let set: CauseSet = set
            .trim()
            .parse()
            .map_err(|e: EvidenceError| usage(anyhow::anyhow!("line {}: {e}", idx + 1)))?;
        let mass: f64 = mass
            .trim()
            .parse()
            .map_err(|_| usage(anyhow::anyhow!("line {}: bad mass `{mass}`", idx + 1)))?;
        current.push((set, mass));
    }
    if !current.is_empty() {
        masses.push(MassFunction::from_pairs(current));
    }
    if masses.is_empty() {
        return Err(usage(anyhow::anyhow!("mass file holds no mass functions")));
    }
    for (i, m) in masses.iter().enumerate() {
        validate_mass(m)
            .map_err(|v| usage(anyhow::anyhow!("mass {} violates closure: {v}", i + 1)))?;
    }
    Ok(masses)
}

fn quote_csv(field: &str) -> String {
    if field.contains(',') {
        format!("\"{field}\"")
    } else {
        field.to_string()
    }
}

fn cmd_combine(args: CombineArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.masses)
        .with_context(|| format!("reading {}", args.masses.display()))
        .map_err(usage)?;
    let masses = parse_mass_file(&text)?;
    let rule: CombinationRule = args
        .rule
        .parse()
        .map_err(|_| usage(anyhow::anyhow!("--rule must be conjunctive or dempster")))?;
    let combined = combine_all(&masses, rule).map_err(|e| match e {
        EvidenceError::TotalConflict { .. } => runtime(e),
        other => usage(other),
    })?;

    let mut stdout = std::io::stdout().lock();
    let emit = |out: &mut dyn Write| -> anyhow::Result<()> {
        writeln!(out, "element,mass")?;
        for (set, mass) in combined.focal() {
            writeln!(out, "{},{}", quote_csv(&set.to_string()), mass)?;
        }
        Ok(())
    };
    emit(&mut stdout).map_err(runtime)?;
    if args.betp {
        let betp = pignistic(&combined).map_err(|e| match e {
            EvidenceError::NoSurvivingBelief => runtime(e),
            other => usage(other),
        })?;
        writeln!(stdout, "cause,betp").map_err(runtime)?;
        for c in ALL_CAUSES {
            writeln!(stdout, "{},{}", c.code(), betp.get(c)).map_err(runtime)?;
        }
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let cfg = resolve_scenario(&args.scenario)?;
    let file = fs::File::open(&args.log)
        .with_context(|| format!("opening {}", args.log.display()))
        .map_err(usage)?;
    let log = EventLog::read_csv(file).map_err(usage)?;
    let truth = cfg.truth();
    let metrics = compute_run_metrics(&log, &truth, log.seed);
    let dir = out_dir(args.out)?;
    let stem = format!(
        "{}_{}_{}",
        metrics.scenario_id,
        metrics.method.name(),
        metrics.seed
    );
    write_metrics_row_csv(&dir.join(format!("{stem}.metrics.csv")), &[&metrics])?;
    write_file(&dir.join(format!("{stem}.accuracy.csv")), |f| {
        metrics::write_accuracy_csv(f, std::slice::from_ref(&metrics)).map_err(Into::into)
    })?;
    println!(
        "report {}: final accuracy {:.3}, detection {}, false alarms {:.2}%",
        stem,
        metrics.final_accuracy,
        metrics
            .detection_time
            .map(|t| format!("{t:.1} s"))
            .unwrap_or_else(|| "none".to_string()),
        metrics.false_alarm_pct
    );
    Ok(())
}
