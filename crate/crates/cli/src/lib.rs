//! Argument parsing and command execution for the `bootbench` binary.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use bootbench::clock::MIN_CALIBRATION_REPS;
use bootbench::env::{EnvMeta, DEFAULT_CONFIG_LABEL};
use bootbench::report::{self, PlotAxis, RunDocument, ValidationRow};
use bootbench::suite::{default_suite, with_scripted_cost};
use bootbench::{
    estimate_clock, BenchmarkDef, Clock, ClockModel, ManualClock, MeasurementPlan, MonotonicClock, Registry, Runner,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Seed used when neither `--seed` nor `BOOTBENCH_SEED` is given.
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_VALIDATE_PATTERN: &str = "gemm/*";
const CALIBRATION_REPS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Reporter {
    Tabular,
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "bootbench",
    version,
    about = "Statistical microbenchmarks with bootstrap confidence intervals"
)]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Debug, Args)]
struct Opts {
    /// Samples collected per benchmark.
    #[arg(long, global = true, default_value_t = 100, value_name = "N")]
    benchmark_samples: usize,
    /// Bootstrap resamples.
    #[arg(long, global = true, default_value_t = 100_000, value_name = "N")]
    benchmark_resamples: usize,
    /// Confidence level of the bootstrap intervals.
    #[arg(long, global = true, default_value_t = 0.95, value_name = "C")]
    benchmark_confidence_interval: f64,
    /// Warmup budget per benchmark, in milliseconds.
    #[arg(long, global = true, default_value_t = 100, value_name = "MS")]
    benchmark_warmup_time: u64,
    /// File of benchmark name globs, one per line; lines starting with '#' are ignored.
    #[arg(long, global = true, value_name = "PATH")]
    input_file: Option<PathBuf>,
    #[arg(short = 'r', long, global = true, value_enum, default_value_t = Reporter::Tabular)]
    reporter: Reporter,
    /// Write the report here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Bootstrap RNG seed.
    #[arg(long, global = true, env = "BOOTBENCH_SEED", value_name = "N")]
    seed: Option<u64>,
    /// Tag recorded in the run document, e.g. the toolchain under test.
    #[arg(long, global = true, default_value = DEFAULT_CONFIG_LABEL, value_name = "LABEL")]
    config_label: String,
    /// List the selected benchmark names and exit.
    #[arg(long, global = true)]
    list: bool,
    /// Use a deterministic clock on which each kernel invocation costs a fixed nominal time.
    #[arg(long, global = true)]
    scripted_clock: bool,
    /// Largest accepted framework-vs-naive deviation for `validate`, in percent.
    #[arg(long, global = true, default_value_t = 1.0, value_name = "PCT")]
    max_deviation_pct: f64,
    /// Back-to-back invocations in the naive measurement of `validate`.
    #[arg(long, global = true, default_value_t = 100, value_name = "N")]
    validation_reps: u64,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run benchmarks and report statistics (the default).
    Run {
        /// Benchmark name globs; all benchmarks when empty.
        patterns: Vec<String>,
    },
    /// Compare framework means against a naive wall-clock loop.
    Validate { patterns: Vec<String> },
    /// Join run documents by benchmark name. The first is the baseline.
    Compare {
        #[arg(num_args = 2.., required = true, value_name = "RUN_JSON")]
        files: Vec<PathBuf>,
        /// Emit plot series grouped over this axis instead of a matrix.
        #[arg(long, value_name = "AXIS")]
        plot_axis: Option<String>,
    },
    /// Print benchmark names, one per line.
    List { patterns: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Run,
    Validate,
    Compare {
        files: Vec<PathBuf>,
        plot_axis: Option<PlotAxis>,
    },
    List,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub command: Command,
    pub plan: MeasurementPlan,
    pub patterns: Vec<String>,
    pub input_file: Option<PathBuf>,
    pub reporter: Reporter,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub config_label: String,
    pub list: bool,
    pub scripted_clock: bool,
    pub max_deviation_pct: f64,
    pub validation_reps: u64,
}

#[derive(Debug)]
pub enum UsageError {
    Clap(clap::Error),
    Invalid(String),
}

impl UsageError {
    /// Help and version requests are reported through this type too.
    pub fn is_informational(&self) -> bool {
        matches!(self, UsageError::Clap(e) if !e.use_stderr())
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_informational() {
            EXIT_OK
        } else {
            EXIT_USAGE
        }
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UsageError::Clap(e) => write!(f, "{}", e.render().to_string().trim_end()),
            UsageError::Invalid(msg) => write!(f, "error: {msg}"),
        }
    }
}

impl std::error::Error for UsageError {}

pub fn parse_args<I, T>(argv: I) -> Result<CliConfig, UsageError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(UsageError::Clap)?;
    let o = cli.opts;
    let plan = MeasurementPlan {
        samples: o.benchmark_samples,
        resamples: o.benchmark_resamples,
        confidence: o.benchmark_confidence_interval,
        warmup_time_ns: o.benchmark_warmup_time.saturating_mul(1_000_000),
        ..MeasurementPlan::default()
    };
    plan.validate().map_err(|e| UsageError::Invalid(e.to_string()))?;
    if o.max_deviation_pct.is_nan() || o.max_deviation_pct < 0.0 {
        return Err(UsageError::Invalid("--max-deviation-pct must be non-negative".into()));
    }
    if o.validation_reps == 0 {
        return Err(UsageError::Invalid("--validation-reps must be at least 1".into()));
    }
    let (command, patterns) = match cli.command {
        None => (Command::Run, Vec::new()),
        Some(Cmd::Run { patterns }) => (Command::Run, patterns),
        Some(Cmd::Validate { patterns }) => (Command::Validate, patterns),
        Some(Cmd::List { patterns }) => (Command::List, patterns),
        Some(Cmd::Compare { files, plot_axis }) => {
            let plot_axis = plot_axis
                .map(|a| a.parse::<PlotAxis>())
                .transpose()
                .map_err(|e| UsageError::Invalid(e.to_string()))?;
            (Command::Compare { files, plot_axis }, Vec::new())
        }
    };
    Ok(CliConfig {
        command,
        plan,
        patterns,
        input_file: o.input_file,
        reporter: o.reporter,
        out: o.out,
        seed: o.seed.unwrap_or(DEFAULT_SEED),
        config_label: o.config_label,
        list: o.list,
        scripted_clock: o.scripted_clock,
        max_deviation_pct: o.max_deviation_pct,
        validation_reps: o.validation_reps,
    })
}

/// Name globs from an input file: one per line, blank lines and lines
/// starting with `#` skipped.
pub fn read_patterns(path: &Path) -> io::Result<Vec<String>> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

/// A failure that ends the command with a specific exit code.
struct Exit(i32, String);

impl Exit {
    fn io(context: &str, e: impl fmt::Display) -> Self {
        Exit(EXIT_FAILURE, format!("{context}: {e}"))
    }

    fn usage(msg: impl fmt::Display) -> Self {
        Exit(EXIT_USAGE, msg.to_string())
    }
}

/// The clock, its model and the environment handed to a runner.
struct Timing {
    clock: Box<dyn Clock>,
    model: ClockModel,
    env: EnvMeta,
}

fn timing(cfg: &CliConfig, defs: Vec<BenchmarkDef>) -> Result<(Timing, Vec<BenchmarkDef>), Exit> {
    if cfg.scripted_clock {
        let clock = ManualClock::new();
        let defs = defs.into_iter().map(|d| with_scripted_cost(d, &clock)).collect();
        let model = ClockModel::new(1.0, 0.0, MIN_CALIBRATION_REPS).expect("valid scripted model");
        let env = EnvMeta::fixed(&cfg.config_label);
        return Ok((
            Timing {
                clock: Box::new(clock),
                model,
                env,
            },
            defs,
        ));
    }
    let clock = MonotonicClock::new();
    let model = estimate_clock(&clock, CALIBRATION_REPS)
        .map_err(|e| Exit(EXIT_FAILURE, format!("clock calibration failed: {e}")))?;
    Ok((
        Timing {
            clock: Box::new(clock),
            model,
            env: EnvMeta::capture(&cfg.config_label),
        },
        defs,
    ))
}

fn registry() -> Registry {
    let mut reg = Registry::new();
    for def in default_suite() {
        reg.register(def).expect("default suite names are unique");
    }
    reg
}

fn selection(cfg: &CliConfig, fallback: Option<&str>, stderr: &mut dyn Write) -> Result<Vec<BenchmarkDef>, Exit> {
    let mut patterns = cfg.patterns.clone();
    let from_file = match &cfg.input_file {
        Some(path) => {
            let lines = read_patterns(path).map_err(|e| Exit::io(&format!("cannot read {}", path.display()), e))?;
            if lines.is_empty() {
                let _ = writeln!(stderr, "warning: {} lists no benchmarks", path.display());
            }
            patterns.extend(lines);
            true
        }
        None => false,
    };
    if patterns.is_empty() && !from_file {
        patterns.extend(fallback.map(String::from));
    }
    if patterns.is_empty() && from_file {
        return Ok(Vec::new());
    }
    let defs = registry().select(&patterns).map_err(Exit::usage)?;
    if defs.is_empty() {
        let _ = writeln!(stderr, "warning: no benchmark matches {patterns:?}");
    }
    Ok(defs)
}

fn write_output(cfg: &CliConfig, text: &str, stdout: &mut dyn Write) -> Result<(), Exit> {
    match &cfg.out {
        Some(path) => fs::write(path, text).map_err(|e| Exit::io(&format!("cannot write {}", path.display()), e)),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Exit::io("cannot write report", e)),
    }
}

fn render(cfg: &CliConfig, doc: &RunDocument) -> Result<String, Exit> {
    match cfg.reporter {
        Reporter::Tabular => Ok(report::render_tabular(doc)),
        Reporter::Json => Ok(report::render_json(doc)),
        Reporter::Csv => report::render_csv(doc).map_err(|e| Exit::io("cannot render CSV", e)),
    }
}

fn list(defs: &[BenchmarkDef], stdout: &mut dyn Write) -> Result<i32, Exit> {
    for def in defs {
        writeln!(stdout, "{}", def.name).map_err(|e| Exit::io("cannot write listing", e))?;
    }
    Ok(EXIT_OK)
}

fn run(cfg: &CliConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Exit> {
    let defs = selection(cfg, None, stderr)?;
    if cfg.list {
        return list(&defs, stdout);
    }
    let (t, defs) = timing(cfg, defs)?;
    let runner = Runner::new(cfg.plan, t.clock.as_ref(), t.model, cfg.seed, t.env.clone());
    let records = runner.run(&defs).map_err(|e| Exit(EXIT_FAILURE, e.to_string()))?;
    let failed = records.iter().filter(|r| r.verification.is_failure()).count();
    let doc = RunDocument::new(t.env, cfg.plan, records);
    write_output(cfg, &render(cfg, &doc)?, stdout)?;
    if failed > 0 {
        let _ = writeln!(stderr, "{failed} benchmark(s) failed verification");
        return Ok(EXIT_CHECK_FAILED);
    }
    Ok(EXIT_OK)
}

fn validate(cfg: &CliConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Exit> {
    let defs = selection(cfg, Some(DEFAULT_VALIDATE_PATTERN), stderr)?;
    if cfg.list {
        return list(&defs, stdout);
    }
    let (t, defs) = timing(cfg, defs)?;
    let runner = Runner::new(cfg.plan, t.clock.as_ref(), t.model, cfg.seed, t.env);
    let mut rows = Vec::new();
    for def in &defs {
        let v = runner
            .validate_against_naive(def, cfg.validation_reps)
            .map_err(|e| Exit(EXIT_FAILURE, e.to_string()))?;
        rows.push(ValidationRow {
            kernel: def.name.clone(),
            framework_mean_ns: v.framework_mean_ns,
            naive_mean_ns: v.naive_mean_ns,
            percent_deviation: v.percent_deviation,
        });
    }
    let worst = rows.iter().map(|r| r.percent_deviation).fold(0.0, f64::max);
    let text = match cfg.reporter {
        Reporter::Tabular => report::render_validation(&rows),
        Reporter::Json => report::render_validation_json(&rows),
        Reporter::Csv => report::render_validation_csv(&rows).map_err(|e| Exit::io("cannot render CSV", e))?,
    };
    write_output(cfg, &text, stdout)?;
    if worst >= cfg.max_deviation_pct && !rows.is_empty() {
        let _ = writeln!(
            stderr,
            "deviation {worst:.3}% reaches the {:.3}% limit",
            cfg.max_deviation_pct
        );
        return Ok(EXIT_CHECK_FAILED);
    }
    Ok(EXIT_OK)
}

fn compare(cfg: &CliConfig, files: &[PathBuf], axis: Option<PlotAxis>, stdout: &mut dyn Write) -> Result<i32, Exit> {
    if files.len() < 2 {
        return Err(Exit::usage("compare needs at least two run documents"));
    }
    let docs = files
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Exit::io(&format!("cannot read {}", p.display()), e))?;
            report::parse_json(&text).map_err(|e| Exit::io(&format!("cannot parse {}", p.display()), e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let text = match axis {
        Some(axis) => report::emit_plot_series(&docs, axis),
        None => {
            let m = report::compare(&docs[0], &docs[1..]).map_err(|e| Exit(EXIT_FAILURE, e.to_string()))?;
            match cfg.reporter {
                Reporter::Tabular => report::render_comparison(&m),
                Reporter::Json => report::render_comparison_json(&m),
                Reporter::Csv => report::render_comparison_csv(&m).map_err(|e| Exit::io("cannot render CSV", e))?,
            }
        }
    };
    write_output(cfg, &text, stdout)?;
    Ok(EXIT_OK)
}

/// Executes `cfg`, writing the report to `stdout` (or `--out`) and
/// diagnostics to `stderr`. Returns the process exit code.
pub fn execute(cfg: &CliConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match &cfg.command {
        Command::Run => run(cfg, stdout, stderr),
        Command::Validate => validate(cfg, stdout, stderr),
        Command::List => selection(cfg, None, stderr).and_then(|defs| list(&defs, stdout)),
        Command::Compare { files, plot_axis } => compare(cfg, files, *plot_axis, stdout),
    };
    match result {
        Ok(code) => code,
        Err(Exit(code, msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            code
        }
    }
}

/// Parses `argv` and executes it.
pub fn main_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match parse_args(argv) {
        Ok(cfg) => execute(&cfg, stdout, stderr),
        Err(e) => {
            let sink: &mut dyn Write = if e.is_informational() { stdout } else { stderr };
            let _ = writeln!(sink, "{e}");
            e.exit_code()
        }
    }
}
