//! Command-line runner for the verification suites.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bcrt::analytics::{TestReport, Verdict};
use bcrt::excursion::sample_excursion;
use bcrt::fixed_point::iterate_f;
use bcrt::randomness::{replica_seed, Stream};
use bcrt::suites::{self, SuiteOutcome, Table};
use bcrt::tree::{reconstruct_reduced_tree, serialize_reduced, EXACT_EPS};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use config::{ExcursionFormat, ExperimentConfig, DEFAULT_SEED};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<bcrt::Error> for CliError {
    fn from(e: bcrt::Error) -> Self {
        match e {
            bcrt::Error::Io(msg) => CliError::Io(msg),
            other => CliError::Usage(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "bcrt-experiments", version, about = "Runs the BCRT fixed-point verification experiments")]
struct Cli {
    /// JSON experiment config; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true, env = "BCRT_OUT_DIR")]
    out: Option<PathBuf>,
    /// Worker threads. Changes wall time only.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Two-point law, one gluing step on BCRT inputs, reduced-tree density.
    FixpointVerify,
    /// Reduced trees of iterates over a base law against the exact law.
    Converge,
    /// Law of the separation depth.
    NmDepth,
    /// Weight moments and attraction of the scalar smoothing transform.
    Smoothing,
    /// Writes sampled excursions to files.
    ExcursionSample,
    /// Samples reduced trees and checks the reconstruction round trip.
    ReducedSample,
    /// Shape agreement of a coupled pair.
    CouplingCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::FixpointVerify => "fixpoint-verify",
            Command::Converge => "converge",
            Command::NmDepth => "nm-depth",
            Command::Smoothing => "smoothing",
            Command::ExcursionSample => "excursion-sample",
            Command::ReducedSample => "reduced-sample",
            Command::CouplingCheck => "coupling-check",
        }
    }
}

fn section<T: serde::Serialize>(name: &str, value: &T) -> (String, Value) {
    (name.to_string(), serde_json::to_value(value).expect("configs serialize"))
}

fn run(cmd: Command, cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<(SuiteOutcome, Vec<(String, Value)>), CliError> {
    let mut outcome = SuiteOutcome::default();
    let used = match cmd {
        Command::FixpointVerify => {
            outcome.extend(suites::two_point_law(&cfg.two_point, seed)?);
            outcome.extend(suites::one_step_invariance(&cfg.one_step, seed)?);
            outcome.extend(suites::reduced_density(&cfg.density, seed)?);
            vec![section("two_point", &cfg.two_point), section("one_step", &cfg.one_step), section("density", &cfg.density)]
        }
        Command::Converge => {
            outcome.extend(suites::tree_convergence(&cfg.converge, seed)?);
            vec![section("converge", &cfg.converge)]
        }
        Command::NmDepth => {
            outcome.extend(suites::separation_depth(&cfg.depth, seed)?);
            vec![section("depth", &cfg.depth)]
        }
        Command::Smoothing => {
            outcome.extend(suites::nu_moments(&cfg.nu, seed)?);
            outcome.extend(suites::smoothing_attraction(&cfg.smoothing, seed)?);
            vec![section("nu", &cfg.nu), section("smoothing", &cfg.smoothing)]
        }
        Command::ExcursionSample => {
            outcome.extend(excursion_sample(cfg, seed, out)?);
            vec![section("excursion_sample", &cfg.excursion_sample)]
        }
        Command::ReducedSample => {
            outcome.extend(reduced_sample(cfg, seed, out)?);
            outcome.extend(suites::reconstruction_oracle(&cfg.reconstruction, seed)?);
            vec![section("reduced_sample", &cfg.reduced_sample), section("reconstruction", &cfg.reconstruction)]
        }
        Command::CouplingCheck => {
            outcome.extend(suites::coupling_check(&cfg.coupling, seed)?);
            vec![section("coupling", &cfg.coupling)]
        }
    };
    Ok((outcome, used))
}

fn excursion_sample(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<SuiteOutcome, CliError> {
    let c = &cfg.excursion_sample;
    if c.count == 0 {
        return Err(CliError::Usage("excursion_sample.count must be positive".into()));
    }
    let mut rows = String::from("index,resolution,max,file\n");
    let mut heights = 0.0;
    for i in 0..c.count {
        let e = sample_excursion(&mut Stream::from_seed(replica_seed(seed, "excursion-sample", i as u64), "excursion"), c.resolution)?;
        let (name, bytes) = match c.format {
            ExcursionFormat::Csv => {
                let mut buf = Vec::new();
                e.write_csv(&mut buf)?;
                (format!("excursion_{i}.csv"), buf)
            }
            ExcursionFormat::Binary => {
                let mut buf = Vec::new();
                e.write_binary(&mut buf)?;
                (format!("excursion_{i}.bin"), buf)
            }
        };
        write_file(&out.join(&name), &bytes)?;
        heights += e.max();
        rows.push_str(&format!("{i},{},{:.12},{name}\n", e.resolution(), e.max()));
    }
    let mut o = SuiteOutcome::default();
    o.reports.push(
        TestReport::new("mean excursion height", heights / c.count as f64, None, bcrt::analytics::Rule::Monitor, seed)
            .size("count", c.count)
            .size("resolution", c.resolution),
    );
    o.tables.push(Table { name: "excursions".into(), csv: rows });
    Ok(o)
}

fn reduced_sample(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<SuiteOutcome, CliError> {
    let c = &cfg.reduced_sample;
    if c.count == 0 || c.m < 2 {
        return Err(CliError::Usage("reduced_sample needs count >= 1 and m >= 2".into()));
    }
    let base = std::sync::Arc::new(c.base.instantiate()?);
    let draws: Vec<Option<String>> = (0..c.count)
        .into_par_iter()
        .map(|i| {
            let t = iterate_f(base.clone(), c.depth, replica_seed(seed, "reduced-sample", i as u64));
            let r = t.resolve_samples(c.m, replica_seed(seed, "reduced-sample-query", i as u64), bcrt::fixed_point::ResolveOptions::exact())?;
            Ok(reconstruct_reduced_tree(&r.matrix, EXACT_EPS).ok().map(|t| serialize_reduced(&t)))
        })
        .collect::<bcrt::Result<_>>()?;
    let mut lines = String::new();
    for d in draws.iter().flatten() {
        lines.push_str(d);
        lines.push('\n');
    }
    write_file(&out.join("reduced_trees.jsonl"), lines.as_bytes())?;
    let degenerate = draws.iter().filter(|d| d.is_none()).count();
    let mut o = SuiteOutcome::default();
    o.reports.push(
        TestReport::new("degenerate fraction", degenerate as f64 / c.count as f64, None, bcrt::analytics::Rule::Monitor, seed)
            .size("count", c.count)
            .size("m", c.m),
    );
    Ok(o)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn report_line(experiment: &str, seed: u64, used: &[(String, Value)], r: &TestReport) -> String {
    let config: serde_json::Map<String, Value> = used.iter().cloned().collect();
    let mut v = json!({
        "experiment": experiment,
        "version": bcrt::VERSION,
        "seed": seed,
        "config": config,
    });
    let obj = v.as_object_mut().expect("object");
    if let Value::Object(fields) = serde_json::to_value(r).expect("reports serialize") {
        for (k, val) in fields {
            obj.insert(k, val);
        }
    }
    serde_json::to_string(&v).expect("json")
}

fn summary(outcome: &SuiteOutcome) -> String {
    let width = outcome.reports.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut s = format!("{:<width$}  {:>14}  {:>10}  verdict\n", "test", "statistic", "p-value");
    for r in &outcome.reports {
        let p = r.p_value.map_or(String::from("-"), |p| format!("{p:.4}"));
        let v = match r.verdict {
            Verdict::Pass => "pass",
            Verdict::Fail => "FAIL",
            Verdict::StatisticOnly => "recorded",
        };
        s.push_str(&format!("{:<width$}  {:>14.6e}  {:>10}  {v}\n", r.name, r.statistic, p));
    }
    s
}

fn execute(cli: &Cli) -> Result<bool, CliError> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let seed = cli.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("bcrt-out"));
    fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let name = cli.command.name();
    let (outcome, used) = run(cli.command, &cfg, seed, &out)?;

    let mut jsonl = String::new();
    for r in &outcome.reports {
        jsonl.push_str(&report_line(name, seed, &used, r));
        jsonl.push('\n');
    }
    write_file(&out.join(format!("{name}.jsonl")), jsonl.as_bytes())?;
    for t in &outcome.tables {
        write_file(&out.join(format!("{name}_{}.csv", t.name)), t.csv.as_bytes())?;
    }
    let mut stdout = std::io::stdout().lock();
    let _ = write!(stdout, "{}", summary(&outcome));
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("bcrt-experiments: {e}");
            ExitCode::from(2)
        }
    }
}
