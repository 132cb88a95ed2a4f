//! Command-line front end. Exit codes: 0 success, 1 bad usage or
//! configuration, 2 failure while running.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{preset, ConfigError, ExperimentConfig, Preset, Scale, SweepParam, PRESET_NAMES};
use crate::export::{
    create_file, export_csv, export_jsonl, nspr_dot, open_file, psn_dot, write_json_file, write_jsonl,
};
use crate::metrics::{config_hash, spearman, to_f64, MetricsSeries};
use crate::path::MinLatencyTable;
use crate::psn::{DcType, Psn};
use crate::sim::{replay_compare, AlgoSelect, Algorithm, DecisionRecord, SimRun, Simulator};
use crate::topology::build_psn;
use crate::trace::{generate_trace, EventKind, EventTrace};

/// Largest substrate on which the exact solver runs without a time budget.
pub const EXACT_SERVER_LIMIT: usize = 64;

#[derive(Debug, Parser)]
#[command(name = "slicesim", version, about = "Online network slice placement simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Desk,
    Demo,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Scale {
        match s {
            ScaleArg::Desk => Scale::Desk,
            ScaleArg::Demo => Scale::Demo,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Exact,
    P2c,
    Both,
}

impl From<AlgoArg> for AlgoSelect {
    fn from(a: AlgoArg) -> AlgoSelect {
        match a {
            AlgoArg::Exact => AlgoSelect::Exact,
            AlgoArg::P2c => AlgoSelect::P2c,
            AlgoArg::Both => AlgoSelect::Both,
        }
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct ExperimentArgs {
    /// JSON experiment file; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in substrate when no config file is given.
    #[arg(long, value_enum, default_value = "demo")]
    pub scale: ScaleArg,
    #[arg(long, value_enum)]
    pub algo: Option<AlgoArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Arrivals per time unit.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Simulated time units.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Record zero decision times so repeated runs write identical files.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a trace and replay it with one or both algorithms.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Replay one trace with both algorithms and report where they differ.
    Compare {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a built-in parameter sweep (or `all`).
    Preset {
        name: String,
        #[arg(long, value_enum, default_value = "desk")]
        scale: ScaleArg,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        no_timing: bool,
    },
    /// Write Graphviz or CSV views of existing data.
    Export {
        #[command(subcommand)]
        what: ExportCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum ExportCommand {
    /// Substrate graph as DOT.
    PsnDot {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// One request of a trace file as DOT.
    NsprDot {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        id: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics JSONL to CSV.
    Csv {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Marks errors that map to exit code 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

impl ExperimentArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).map_err(config_error)?,
            None => match self.scale {
                ScaleArg::Desk => ExperimentConfig::desk(),
                ScaleArg::Demo => ExperimentConfig::demo(),
            },
        };
        if let Some(a) = self.algo {
            cfg.sim.algorithm = a.into();
        }
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        if let Some(r) = self.rate {
            cfg.arrival_rate = r;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if self.no_timing {
            cfg.sim.record_timing = false;
        }
        cfg.validate().map_err(config_error)?;
        Ok(cfg)
    }
}

fn config_error(e: ConfigError) -> anyhow::Error {
    match e {
        ConfigError::Read { .. } => anyhow::Error::new(e),
        other => usage(other.to_string()),
    }
}

/// Refuses the exact solver on large substrates unless it has a time budget.
pub fn check_exact_guardrail(cfg: &ExperimentConfig, psn: &Psn, algos: &[Algorithm]) -> Result<()> {
    if algos.contains(&Algorithm::Exact)
        && psn.servers().len() > EXACT_SERVER_LIMIT
        && cfg.sim.exact.time_budget_ms.is_none()
    {
        return Err(usage(format!(
            "exact solver on {} servers needs sim.exact.time_budget_ms (limit without one: {EXACT_SERVER_LIMIT})",
            psn.servers().len()
        )));
    }
    Ok(())
}

pub fn describe_substrate(psn: &Psn) -> String {
    format!(
        "{} DCs, {} servers ({} EDC, {} CDC, {} CCP), {} links",
        psn.dcs().len(),
        psn.servers().len(),
        psn.dc_count(DcType::Edc),
        psn.dc_count(DcType::Cdc),
        psn.dc_count(DcType::Ccp),
        psn.links().len()
    )
}

pub fn summarize(run: &SimRun) -> String {
    let s = &run.state;
    let ratio = if s.arrivals == 0 {
        "n/a".to_string()
    } else {
        format!("{:.4}", s.accepts as f64 / s.arrivals as f64)
    };
    format!(
        "{}: {} arrivals, {} accepted, {} rejected, acceptance {}, mean cpu util {:.4}, mean decision {:.1} us",
        run.algorithm,
        s.arrivals,
        s.accepts,
        s.rejects,
        ratio,
        run.series.mean_cpu_utilization(),
        mean_decision_us(&run.decisions)
    )
}

pub fn mean_decision_us(decisions: &[DecisionRecord]) -> f64 {
    if decisions.is_empty() {
        return 0.0;
    }
    decisions.iter().map(|d| d.decision_us as f64).sum::<f64>() / decisions.len() as f64
}

/// Everything one experiment produces.
pub struct ExperimentOutput {
    pub psn: Psn,
    pub trace: EventTrace,
    pub runs: Vec<SimRun>,
}

/// Builds the substrate and trace for `cfg` and replays it with every
/// selected algorithm (in parallel when there are two).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let psn = build_psn(&cfg.psn).context("building substrate")?;
    let algos = cfg.sim.algorithm.algorithms();
    check_exact_guardrail(cfg, &psn, &algos)?;
    let trace = generate_trace(&cfg.nspr, cfg.arrival_rate, cfg.horizon_ticks(), &psn, cfg.seed)
        .context("generating trace")?;
    let table = Arc::new(MinLatencyTable::new(&psn));
    let hash = config_hash(cfg);
    let results: Vec<Result<SimRun>> = std::thread::scope(|scope| {
        let handles: Vec<_> = algos
            .iter()
            .map(|&algo| {
                let (psn, table, trace) = (psn.clone(), table.clone(), &trace);
                scope.spawn(move || {
                    Simulator::with_table(psn, algo, &cfg.sim, table)
                        .run(trace)
                        .with_context(|| format!("{algo} replay"))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("replay thread panicked"))
            .collect()
    });
    let mut runs = Vec::new();
    for r in results {
        let mut run = r?;
        run.series.meta.seed = cfg.seed;
        run.series.meta.config_hash = hash.clone();
        runs.push(run);
    }
    Ok(ExperimentOutput { psn, trace, runs })
}

/// Writes the trace, per-algorithm metrics, decision log and final states.
pub fn write_outputs(cfg: &ExperimentConfig, out: &ExperimentOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json_file(cfg, &dir.join("config.json"))?;
    let trace_path = dir.join("trace.jsonl");
    let mut f = create_file(&trace_path)?;
    out.trace
        .write_jsonl(&mut f)
        .with_context(|| trace_path.display().to_string())?;
    f.flush().with_context(|| trace_path.display().to_string())?;
    let mut decisions: Vec<DecisionRecord> = out.runs.iter().flat_map(|r| r.decisions.clone()).collect();
    decisions.sort_by_key(|d| (d.t, d.nspr, d.algo));
    write_jsonl(&decisions, create_file(&dir.join("decisions.jsonl"))?)?;
    for run in &out.runs {
        let algo = run.algorithm.label();
        export_csv(&run.series, &dir.join(format!("metrics_{algo}.csv")))?;
        export_jsonl(&run.series, &dir.join(format!("metrics_{algo}.jsonl")))?;
        write_json_file(&run.state, &dir.join(format!("final_state_{algo}.json")))?;
    }
    Ok(())
}

pub fn cmd_run(cfg: &ExperimentConfig, dir: &Path) -> Result<String> {
    let out = run_experiment(cfg)?;
    write_outputs(cfg, &out, dir)?;
    let mut report = format!(
        "substrate: {}\ntrace: {} arrivals over {} time units\n",
        describe_substrate(&out.psn),
        out.trace.arrival_count(),
        cfg.horizon
    );
    for run in &out.runs {
        let _ = writeln!(report, "{}", summarize(run));
    }
    let _ = writeln!(report, "outputs in {}", dir.display());
    Ok(report)
}

/// Per-arrival agreement between the two algorithms.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Agreement {
    pub both: u64,
    pub exact_only: u64,
    pub p2c_only: u64,
    pub neither: u64,
    /// Mean of p2c cost minus exact cost where both accepted.
    pub mean_cost_gap: Option<f64>,
}

pub fn agreement(exact: &[DecisionRecord], p2c: &[DecisionRecord]) -> Agreement {
    let mut a = Agreement::default();
    let mut gaps = Vec::new();
    for (e, p) in exact.iter().zip(p2c) {
        debug_assert_eq!(e.nspr, p.nspr);
        match (e.cost, p.cost) {
            (Some(ce), Some(cp)) => {
                a.both += 1;
                gaps.push(cp as f64 - ce as f64);
            }
            (Some(_), None) => a.exact_only += 1,
            (None, Some(_)) => a.p2c_only += 1,
            (None, None) => a.neither += 1,
        }
    }
    if !gaps.is_empty() {
        a.mean_cost_gap = Some(gaps.iter().sum::<f64>() / gaps.len() as f64);
    }
    a
}

pub fn cmd_compare(cfg: &ExperimentConfig, dir: &Path) -> Result<String> {
    let mut cfg = cfg.clone();
    cfg.sim.algorithm = AlgoSelect::Both;
    let psn = build_psn(&cfg.psn).context("building substrate")?;
    check_exact_guardrail(&cfg, &psn, &[Algorithm::Exact])?;
    let trace = generate_trace(&cfg.nspr, cfg.arrival_rate, cfg.horizon_ticks(), &psn, cfg.seed)
        .context("generating trace")?;
    let cmp = replay_compare(&psn, &trace, &cfg.sim)?;
    let agree = agreement(&cmp.exact.decisions, &cmp.p2c.decisions);
    let hash = config_hash(&cfg);
    let mut out = ExperimentOutput {
        psn,
        trace,
        runs: vec![cmp.exact, cmp.p2c],
    };
    for run in &mut out.runs {
        run.series.meta.seed = cfg.seed;
        run.series.meta.config_hash = hash.clone();
    }
    write_outputs(&cfg, &out, dir)?;
    for run in &out.runs {
        let path = dir.join(format!("placements_{}.jsonl", run.algorithm));
        write_jsonl(&run.placements, create_file(&path)?)?;
    }
    write_json_file(&agree, &dir.join("agreement.json"))?;
    let gap = agree
        .mean_cost_gap
        .map_or("n/a".to_string(), |g| format!("{g:.3}"));
    Ok(format!(
        "substrate: {}\n{}\n{}\nboth accepted {}, exact only {}, p2c only {}, neither {}; mean cost gap (p2c - exact) {}\n",
        describe_substrate(&out.psn),
        summarize(&out.runs[0]),
        summarize(&out.runs[1]),
        agree.both,
        agree.exact_only,
        agree.p2c_only,
        agree.neither,
        gap
    ))
}

/// Seed-averaged results of one sweep value.
#[derive(Clone, Debug, PartialEq)]
pub struct PresetPoint {
    pub value: f64,
    /// Per algorithm: (acceptance ratio, mean cpu utilization, mean decision us).
    pub p2c: Option<(f64, f64, f64)>,
    pub exact: Option<(f64, f64, f64)>,
}

/// One (value, seed, algorithm) run of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct PresetRun {
    pub value: f64,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub acceptance: f64,
    pub mean_util: f64,
    pub mean_decision_us: f64,
}

pub struct PresetReport {
    pub preset: Preset,
    pub points: Vec<PresetPoint>,
    pub runs: Vec<PresetRun>,
}

impl PresetReport {
    /// Rank correlation between the swept value and p2c acceptance.
    pub fn p2c_trend(&self) -> Option<f64> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .points
            .iter()
            .filter_map(|p| p.p2c.map(|(acc, _, _)| (p.value, acc)))
            .unzip();
        spearman(&xs, &ys)
    }
}

fn final_ratio(series: &MetricsSeries) -> f64 {
    series
        .last()
        .and_then(|s| s.acceptance_ratio)
        .map_or(0.0, to_f64)
}

fn value_label(v: f64) -> String {
    v.to_string().replace('.', "_")
}

pub fn run_preset(p: &Preset, dir: &Path, record_timing: bool) -> Result<PresetReport> {
    let jobs: Vec<(usize, u64)> = (0..p.sweep.values.len())
        .flat_map(|i| p.sweep.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results: Vec<Result<(usize, u64, ExperimentOutput)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(i, seed)| {
                scope.spawn(move || {
                    let mut cfg = p.base.with_param(p.sweep.param, p.sweep.values[i]);
                    cfg.set_seed(seed);
                    cfg.sim.record_timing = record_timing;
                    cfg.validate().map_err(config_error)?;
                    Ok((i, seed, run_experiment(&cfg)?))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("preset thread panicked"))
            .collect()
    });
    let pdir = dir.join(p.name);
    std::fs::create_dir_all(&pdir).with_context(|| format!("creating {}", pdir.display()))?;
    let mut acc: Vec<[Vec<(f64, f64, f64)>; 2]> = vec![[Vec::new(), Vec::new()]; p.sweep.values.len()];
    let mut runs = Vec::new();
    for r in results {
        let (i, seed, out) = r?;
        for run in &out.runs {
            let name = format!(
                "value_{}_seed_{seed}_{}.csv",
                value_label(p.sweep.values[i]),
                run.algorithm
            );
            export_csv(&run.series, &pdir.join(name))?;
            let slot = match run.algorithm {
                Algorithm::P2c => 0,
                Algorithm::Exact => 1,
            };
            let one = PresetRun {
                value: p.sweep.values[i],
                seed,
                algorithm: run.algorithm,
                acceptance: final_ratio(&run.series),
                mean_util: run.series.mean_cpu_utilization(),
                mean_decision_us: mean_decision_us(&run.decisions),
            };
            acc[i][slot].push((one.acceptance, one.mean_util, one.mean_decision_us));
            runs.push(one);
        }
    }
    let mean = |v: &[(f64, f64, f64)]| -> Option<(f64, f64, f64)> {
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        Some((
            v.iter().map(|x| x.0).sum::<f64>() / n,
            v.iter().map(|x| x.1).sum::<f64>() / n,
            v.iter().map(|x| x.2).sum::<f64>() / n,
        ))
    };
    let points: Vec<PresetPoint> = p
        .sweep
        .values
        .iter()
        .zip(&acc)
        .map(|(&value, [p2c, exact])| PresetPoint {
            value,
            p2c: mean(p2c),
            exact: mean(exact),
        })
        .collect();
    let mut w = csv::Writer::from_path(pdir.join("summary.csv"))
        .with_context(|| format!("{}", pdir.join("summary.csv").display()))?;
    w.write_record([
        "value",
        "p2c_acceptance_ratio",
        "p2c_mean_util",
        "p2c_mean_decision_us",
        "exact_acceptance_ratio",
        "exact_mean_util",
        "exact_mean_decision_us",
    ])?;
    let cells = |m: Option<(f64, f64, f64)>| -> [String; 3] {
        match m {
            Some((a, u, d)) => [a.to_string(), u.to_string(), d.to_string()],
            None => Default::default(),
        }
    };
    for pt in &points {
        let mut rec = vec![pt.value.to_string()];
        rec.extend(cells(pt.p2c));
        rec.extend(cells(pt.exact));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(PresetReport {
        preset: p.clone(),
        points,
        runs,
    })
}

fn param_label(p: SweepParam) -> &'static str {
    match p {
        SweepParam::ArrivalRate => "arrival rate",
        SweepParam::NodeCapacity => "node capacity factor",
        SweepParam::Requirements => "requirement factor",
        SweepParam::ChainLength => "chain length",
    }
}

pub fn cmd_preset(name: &str, scale: Scale, dir: &Path, record_timing: bool) -> Result<String> {
    let names: Vec<&str> = if name == "all" {
        PRESET_NAMES.to_vec()
    } else {
        vec![name]
    };
    let mut report = String::new();
    for n in names {
        let p = preset(n, scale).ok_or_else(|| {
            usage(format!(
                "unknown preset `{n}`; choose one of {} or all",
                PRESET_NAMES.join(", ")
            ))
        })?;
        let r = run_preset(&p, dir, record_timing)?;
        let _ = writeln!(report, "{} ({}): {}", p.name, param_label(p.sweep.param), p.shows);
        for pt in &r.points {
            let fmt = |m: Option<(f64, f64, f64)>| {
                m.map_or("-".to_string(), |(a, u, d)| format!("acc {a:.3} util {u:.3} {d:.0}us"))
            };
            let _ = writeln!(
                report,
                "  {:>8}  p2c {}  exact {}",
                pt.value,
                fmt(pt.p2c),
                fmt(pt.exact)
            );
        }
        if let Some(rho) = r.p2c_trend() {
            let _ = writeln!(report, "  spearman(value, p2c acceptance) = {rho:.3}");
        }
    }
    let _ = writeln!(report, "outputs in {}", dir.display());
    Ok(report)
}

fn cmd_export(what: &ExportCommand) -> Result<String> {
    match what {
        ExportCommand::PsnDot { exp, out } => {
            let cfg = exp.resolve()?;
            let psn = build_psn(&cfg.psn)?;
            write_text(out, &psn_dot(&psn))?;
            Ok(format!("wrote {}\n", out.display()))
        }
        ExportCommand::NsprDot { trace, id, out } => {
            let t = EventTrace::read_jsonl(open_file(trace)?)
                .with_context(|| trace.display().to_string())?;
            let nspr = t
                .events
                .iter()
                .find_map(|e| match &e.kind {
                    EventKind::Arrival { nspr } if nspr.id.0 == *id => Some(nspr),
                    _ => None,
                })
                .ok_or_else(|| usage(format!("no request {id} in {}", trace.display())))?;
            write_text(out, &nspr_dot(nspr))?;
            Ok(format!("wrote {}\n", out.display()))
        }
        ExportCommand::Csv { metrics, out } => {
            let series = crate::export::parse_jsonl(metrics)?;
            export_csv(&series, out)?;
            Ok(format!("wrote {}\n", out.display()))
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create_file(path)?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.flush())
        .with_context(|| path.display().to_string())
}

pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Run { exp, out } => cmd_run(&exp.resolve()?, out),
        Command::Compare { exp, out } => cmd_compare(&exp.resolve()?, out),
        Command::Preset {
            name,
            scale,
            out,
            no_timing,
        } => cmd_preset(name, (*scale).into(), out, !no_timing),
        Command::Export { what } => cmd_export(what),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(report) => {
            print!("{report}");
            0
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                1
            } else {
                2
            }
        }
    }
}
