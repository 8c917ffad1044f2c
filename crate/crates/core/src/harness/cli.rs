use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::config::{ExperimentConfig, OneOrMany, Settings};
use super::experiment::run_experiment;
use super::io::{read_json, read_series_csv, write_json, write_runs_csv, write_series_csv, SeriesMeta};
use super::score::score;
use crate::error::{Error, Result};
use crate::estimate::{detect, SegmentationResult};
use crate::exec::{configure_threads, Exec};
use crate::simulate::simulate_piecewise;

/// Worker-count override for the parallel build.
pub const THREADS_ENV: &str = "QMLBREAKS_THREADS";

#[derive(Debug, Parser)]
#[command(name = "qmlbreaks", version, about = "Penalized quasi-likelihood break detection for causal time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a piecewise path; writes series.csv and series.json.
    Simulate(SimulateArgs),
    /// Detect breaks in a single-column CSV; writes result.json and segments.csv.
    Detect(DetectArgs),
    /// Score a detection result against a simulation sidecar; writes score.json.
    Score(ScoreArgs),
    /// Monte Carlo experiment; writes report.json, runs.csv, runs.json and timing.json.
    Mc(McArgs),
}

#[derive(Debug, Args, Default)]
struct ModelArgs {
    /// Model family, e.g. `ar(1)`, `rar(50)`, `arch(2)`, `garch(1,1)`, `tarch(1)`.
    #[arg(long)]
    family: Option<String>,
    /// Regime parameters: coordinates separated by `,`, regimes by `;`.
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    /// Break fractions separated by `,`.
    #[arg(long)]
    tau: Option<String>,
    /// Moment order r of the contraction test.
    #[arg(long)]
    r: Option<f64>,
    /// `gaussian` or `student-t(ν)`.
    #[arg(long)]
    innovation: Option<String>,
}

#[derive(Debug, Args, Default)]
struct DetectFlags {
    /// `sqrt_n`, `bic`, `heavy`, `custom(β)`; a comma-separated list for `mc`.
    #[arg(long)]
    penalty: Option<String>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    min_len: Option<usize>,
    /// Candidate grid step Δ.
    #[arg(long)]
    grid: Option<usize>,
    /// Known-K mode.
    #[arg(long)]
    k_fixed: Option<usize>,
    /// Random restarts per segment fit.
    #[arg(long)]
    restarts: Option<usize>,
    /// Skip the unit-resolution refinement around grid breaks.
    #[arg(long)]
    no_refine: bool,
    /// Confidence level of the per-parameter intervals.
    #[arg(long)]
    level: Option<f64>,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; its values override flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Evaluate work items on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Start from X_t = 0 for t ≤ 0 instead of a burned-in past.
    #[arg(long)]
    zero_past: bool,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[command(flatten)]
    common: Common,
    /// Single-column CSV of observations.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    innovation: Option<String>,
    #[command(flatten)]
    detect: DetectFlags,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// result.json written by `detect`.
    #[arg(long)]
    result: PathBuf,
    /// series.json written by `simulate`.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct McArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    detect: DetectFlags,
    /// Sample sizes separated by `,`.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    zero_past: bool,
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Error::Config(format!("cannot parse `{t}` in --{what}"))))
        .collect()
}

impl ModelArgs {
    fn apply(&self, s: &mut Settings) -> Result<()> {
        s.family = self.family.clone();
        if let Some(t) = &self.theta {
            s.theta = Some(t.split(';').map(|r| parse_list(r, "theta")).collect::<Result<_>>()?);
        }
        if let Some(t) = &self.tau {
            s.tau = Some(parse_list(t, "tau")?);
        }
        s.r = self.r;
        s.innovation = self.innovation.clone();
        Ok(())
    }
}

impl DetectFlags {
    fn apply(&self, s: &mut Settings) {
        if let Some(p) = &self.penalty {
            s.penalty = Some(OneOrMany::Many(p.split(',').map(|t| t.trim().to_string()).collect()));
        }
        s.k_max = self.k_max;
        s.min_len = self.min_len;
        s.grid = self.grid;
        s.k_fixed = self.k_fixed;
        s.restarts = self.restarts;
        s.refine = self.no_refine.then_some(false);
        s.level = self.level;
    }
}

fn settings(flags: Settings, config: Option<&Path>) -> Result<Settings> {
    match config {
        Some(p) => Ok(flags.overlaid(&Settings::from_file(p)?)),
        None => Ok(flags),
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("cannot create {}: {e}", dir.display()))))
}

fn exec_for(common: &Common) -> Exec {
    if common.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

fn run_simulate(a: SimulateArgs) -> Result<()> {
    let mut flags = Settings { n: a.n.map(OneOrMany::One), seed: a.seed, burn_in: a.burn_in, ..Default::default() };
    flags.zero_past = a.zero_past.then_some(true);
    a.model.apply(&mut flags)?;
    let s = settings(flags, a.common.config.as_deref())?;
    let model = s.model()?;
    let ns = s.ns()?;
    if ns.len() != 1 {
        return Err(Error::Config("`simulate` takes a single `n`".into()));
    }
    let opts = s.sim_options();
    let sample = simulate_piecewise(&model, ns[0], opts, s.seed.unwrap_or(0))?;
    prepare_out(&a.common.out)?;
    write_series_csv(&a.common.out.join("series.csv"), &sample.x)?;
    write_json(&a.common.out.join("series.json"), &SeriesMeta::new(&model, &sample, opts.zero_past))?;
    Ok(())
}

fn write_segments_csv(path: &Path, res: &SegmentationResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["segment", "lo", "hi", "theta", "std_error", "ci_lower", "ci_upper", "converged", "condition_f"])?;
    for (k, s) in res.segments.iter().enumerate() {
        let join = |v: Vec<String>| v.join(";");
        let se = s
            .cov
            .as_ref()
            .map(|c| join((0..c.len()).map(|i| (c[i][i].max(0.0) / (s.hi - s.lo) as f64).sqrt().to_string()).collect()))
            .unwrap_or_default();
        let (lo, hi) = s
            .conf_int
            .as_ref()
            .map(|ci| (join(ci.iter().map(|c| c.0.to_string()).collect()), join(ci.iter().map(|c| c.1.to_string()).collect())))
            .unwrap_or_default();
        w.write_record([
            k.to_string(),
            s.lo.to_string(),
            s.hi.to_string(),
            join(s.theta.iter().map(|v| v.to_string()).collect()),
            se,
            lo,
            hi,
            s.converged.to_string(),
            s.condition_f.map(|c| c.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn run_detect(a: DetectArgs) -> Result<()> {
    let mut flags = Settings { family: a.family.clone(), r: a.r, innovation: a.innovation.clone(), ..Default::default() };
    a.detect.apply(&mut flags);
    let s = settings(flags, a.common.config.as_deref())?;
    let penalties = s.penalties()?;
    if penalties.len() != 1 {
        return Err(Error::Config("`detect` takes a single penalty".into()));
    }
    let domain = s.domain()?;
    let x = read_series_csv(&a.input)?;
    let result = detect(&x, &domain, &s.detect_options(penalties[0], exec_for(&a.common))?)?;
    prepare_out(&a.common.out)?;
    write_json(&a.common.out.join("result.json"), &result)?;
    write_segments_csv(&a.common.out.join("segments.csv"), &result)?;
    Ok(())
}

fn run_score(a: ScoreArgs) -> Result<()> {
    let result: SegmentationResult = read_json(&a.result)?;
    let meta: SeriesMeta = read_json(&a.truth)?;
    let s = score(&result, &meta.model, meta.n)?;
    prepare_out(&a.out)?;
    write_json(&a.out.join("score.json"), &s)
}

fn run_mc(a: McArgs) -> Result<()> {
    let mut flags = Settings { replications: a.replications, seed: a.seed, burn_in: a.burn_in, ..Default::default() };
    flags.zero_past = a.zero_past.then_some(true);
    if let Some(n) = &a.n {
        flags.n = Some(OneOrMany::Many(parse_list(n, "n")?));
    }
    a.model.apply(&mut flags)?;
    a.detect.apply(&mut flags);
    let s = settings(flags, a.common.config.as_deref())?;
    let cfg = ExperimentConfig::from_settings(&s)?;
    let out = run_experiment(&cfg, exec_for(&a.common))?;
    prepare_out(&a.common.out)?;
    write_json(&a.common.out.join("report.json"), &out.report)?;
    write_json(&a.common.out.join("runs.json"), &out.runs)?;
    write_runs_csv(&a.common.out.join("runs.csv"), &out.runs)?;
    write_json(&a.common.out.join("timing.json"), &out.timing)?;
    Ok(())
}

/// Exit status for an error: 2 configuration, 3 input/output, 4 numerical.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::UnknownFamily(_) | Error::InvalidParameter(_) | Error::Domain(_) => 2,
        Error::Input(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => 3,
        Error::DegenerateInformation { .. } | Error::Infeasible(_) => 4,
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit status. Diagnostics go to stderr.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(t) if t > 0 => configure_threads(t),
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got `{v}`");
                return 2;
            }
        }
    }
    let outcome = match cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Detect(a) => run_detect(a),
        Command::Score(a) => run_score(a),
        Command::Mc(a) => run_mc(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
