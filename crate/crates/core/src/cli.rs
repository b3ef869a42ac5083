//! Command-line front end.
//!
//! ```text
//! unisum density --comp 0:1 --comp 0:2 --at 0 --exact
//! unisum cdf --comp 0.5:0.5 --comp 0.5:0.5 --from 0 --to 2 --step 0.25 --csv
//! unisum pmf --m 1 --m 2
//! unisum table --comp 0:1 --comp 0:1 --from -2 --to 2 --step 1
//! unisum verify --suite coeffs --n-max 10 --k-max 6
//! ```
//!
//! A `--config` file holds the same settings, one per line: `c a` for a
//! continuous component, `m` for a discrete one, or `key value` for any other
//! setting (`command`, `mode`, `at`, `from`, `to`, `step`, `q`, `seed`, `count`,
//! `format`, `condition`, `suite`, `n-max`, `k-max`, `disc-n-max`, `m-max`,
//! `inject-fault`). `#` starts a comment. Flags on the command line override
//! the file; `--dump-config FILE` writes the resolved settings in that format.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};
use rayon::prelude::*;
use thiserror::Error;

use crate::contsum::{ContinuousComponent, ContinuousSum, EvalMode, EvalResult, Value};
use crate::discsum::{csc_coefficient, DiscreteComponent, DiscreteSum};
use crate::numeric::{
    format_decimal, format_exact, format_fraction, parse_rational, rational_from_f64, to_f64,
    Rational,
};
use crate::oracles;

/// Rows a single range may expand to.
const MAX_ROWS: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Eval(#[from] crate::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Eval(_) | CliError::Io(_) => 1,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Density,
    Cdf,
    Quantile,
    Pmf,
    Table,
    Coeffs,
    Verify,
    Sample,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Density => "density",
            Command::Cdf => "cdf",
            Command::Quantile => "quantile",
            Command::Pmf => "pmf",
            Command::Table => "table",
            Command::Coeffs => "coeffs",
            Command::Verify => "verify",
            Command::Sample => "sample",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Plain,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Suite {
    #[default]
    All,
    Continuous,
    Discrete,
    Coeffs,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Model {
    None,
    Continuous(ContinuousSum),
    Discrete(DiscreteSum),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Points {
    Default,
    At(Rational),
    Range {
        from: Rational,
        to: Rational,
        step: Rational,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VerifyOptions {
    pub suite: Suite,
    pub n_max: Option<u32>,
    pub k_max: Option<u32>,
    pub disc_n_max: Option<u32>,
    pub m_max: Option<u32>,
    pub inject_fault: bool,
}

/// A fully validated request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobSpec {
    pub command: Command,
    pub model: Model,
    pub points: Points,
    pub mode: EvalMode,
    pub q: Option<Rational>,
    pub seed: Option<u64>,
    pub count: Option<usize>,
    pub format: OutputFormat,
    pub condition: bool,
    pub verify: VerifyOptions,
}

/// A parsed command line: the job plus where its output goes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invocation {
    pub spec: JobSpec,
    pub out: Option<PathBuf>,
    pub dump_config: Option<PathBuf>,
}

#[derive(Debug, Parser)]
#[command(
    name = "unisum",
    version,
    about = "Exact densities, CDFs and PMFs for sums of uniforms with differing ranges"
)]
struct Args {
    /// What to compute.
    #[arg(value_enum)]
    command: Option<Command>,
    /// Continuous component `center:half_width` (repeatable).
    #[arg(long = "comp", value_name = "C:A", allow_hyphen_values = true)]
    comp: Vec<String>,
    /// Discrete component half-range, support `-m..=m` (repeatable).
    #[arg(long = "m", value_name = "M", allow_hyphen_values = true)]
    m: Vec<String>,
    /// Single evaluation point.
    #[arg(long, allow_hyphen_values = true)]
    at: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    from: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    to: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    step: Option<String>,
    /// Evaluate with exact rationals (default).
    #[arg(long, conflicts_with = "float")]
    exact: bool,
    /// Evaluate with doubles and compensated summation.
    #[arg(long)]
    float: bool,
    /// Probability level for `quantile`.
    #[arg(long, allow_hyphen_values = true)]
    q: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
    /// Line-oriented settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the resolved settings to FILE and exit.
    #[arg(long = "dump-config", value_name = "FILE")]
    dump_config: Option<PathBuf>,
    /// Emit CSV instead of aligned text.
    #[arg(long)]
    csv: bool,
    /// Add the condition estimate column in float mode.
    #[arg(long)]
    condition: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Verification suite to run.
    #[arg(long, value_enum)]
    suite: Option<Suite>,
    #[arg(long = "n-max")]
    n_max: Option<u32>,
    #[arg(long = "k-max")]
    k_max: Option<u32>,
    #[arg(long = "disc-n-max")]
    disc_n_max: Option<u32>,
    #[arg(long = "m-max")]
    m_max: Option<u32>,
    /// Corrupt one coefficient to check that verification notices.
    #[arg(long = "inject-fault")]
    inject_fault: bool,
}

/// Unvalidated settings, as read from a config file or the command line.
#[derive(Debug, Default, Clone)]
struct Settings {
    command: Option<Command>,
    continuous: Vec<ContinuousComponent>,
    discrete: Vec<DiscreteComponent>,
    at: Option<Rational>,
    from: Option<Rational>,
    to: Option<Rational>,
    step: Option<Rational>,
    mode: Option<EvalMode>,
    q: Option<Rational>,
    seed: Option<u64>,
    count: Option<usize>,
    format: Option<OutputFormat>,
    condition: bool,
    suite: Option<Suite>,
    n_max: Option<u32>,
    k_max: Option<u32>,
    disc_n_max: Option<u32>,
    m_max: Option<u32>,
    inject_fault: bool,
}

impl Settings {
    /// `other` wins wherever it sets something.
    fn overlay(mut self, other: Settings) -> Settings {
        if !other.continuous.is_empty() || !other.discrete.is_empty() {
            self.continuous = other.continuous;
            self.discrete = other.discrete;
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            command, at, from, to, step, mode, q, seed, count, format, suite, n_max, k_max,
            disc_n_max, m_max
        );
        self.condition |= other.condition;
        self.inject_fault |= other.inject_fault;
        self
    }
}

fn number(flag: &str, token: &str) -> Result<Rational, CliError> {
    parse_rational(token).ok_or_else(|| usage(format!("invalid number '{token}' for {flag}")))
}

fn parse_component(token: &str) -> Result<ContinuousComponent, CliError> {
    let (c, a) = token.split_once(':').ok_or_else(|| {
        usage(format!(
            "invalid component '{token}' for --comp: expected C:A"
        ))
    })?;
    let c = number("--comp", c)?;
    let a = number("--comp", a)?;
    ContinuousComponent::new(c, a)
        .map_err(|e| usage(format!("invalid component '{token}' for --comp: {e}")))
}

fn parse_half_range(flag: &str, token: &str) -> Result<DiscreteComponent, CliError> {
    token
        .trim()
        .parse::<u32>()
        .map(DiscreteComponent::new)
        .map_err(|_| {
            usage(format!(
                "invalid half-range '{token}' for {flag}: expected integer m >= 0"
            ))
        })
}

fn settings_from_args(args: &Args) -> Result<Settings, CliError> {
    let opt = |flag: &str, v: &Option<String>| v.as_deref().map(|t| number(flag, t)).transpose();
    Ok(Settings {
        command: args.command,
        continuous: args
            .comp
            .iter()
            .map(|t| parse_component(t))
            .collect::<Result<_, _>>()?,
        discrete: args
            .m
            .iter()
            .map(|t| parse_half_range("--m", t))
            .collect::<Result<_, _>>()?,
        at: opt("--at", &args.at)?,
        from: opt("--from", &args.from)?,
        to: opt("--to", &args.to)?,
        step: opt("--step", &args.step)?,
        mode: if args.exact {
            Some(EvalMode::Exact)
        } else if args.float {
            Some(EvalMode::Float)
        } else {
            None
        },
        q: opt("--q", &args.q)?,
        seed: args.seed,
        count: args.count,
        format: args.csv.then_some(OutputFormat::Csv),
        condition: args.condition,
        suite: args.suite,
        n_max: args.n_max,
        k_max: args.k_max,
        disc_n_max: args.disc_n_max,
        m_max: args.m_max,
        inject_fault: args.inject_fault,
    })
}

fn settings_from_config(text: &str) -> Result<Settings, CliError> {
    let mut s = Settings::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at_line = |msg: String| usage(format!("config line {}: {msg}", lineno + 1));
        let mut words = line.split_whitespace();
        let first = words.next().unwrap_or_default();
        let rest: Vec<&str> = words.collect();
        let single = || -> Result<&str, CliError> {
            match rest.as_slice() {
                [v] => Ok(v),
                _ => Err(at_line(format!("'{first}' takes exactly one value"))),
            }
        };
        let num = |key: &str| -> Result<Rational, CliError> {
            let v = single()?;
            parse_rational(v).ok_or_else(|| at_line(format!("invalid number '{v}' for {key}")))
        };
        let int = |key: &str| -> Result<u64, CliError> {
            let v = single()?;
            v.parse()
                .map_err(|_| at_line(format!("invalid integer '{v}' for {key}")))
        };
        let choice = |key: &str| -> Result<String, CliError> {
            let v = single()?;
            let _ = key;
            Ok(v.to_string())
        };
        match first {
            "command" => {
                let v = choice(first)?;
                s.command = Some(
                    Command::from_str(&v, false)
                        .map_err(|_| at_line(format!("unknown command '{v}'")))?,
                );
            }
            "mode" => {
                s.mode = Some(match choice(first)?.as_str() {
                    "exact" => EvalMode::Exact,
                    "float" => EvalMode::Float,
                    other => return Err(at_line(format!("unknown mode '{other}'"))),
                });
            }
            "format" => {
                let v = choice(first)?;
                s.format = Some(
                    OutputFormat::from_str(&v, false)
                        .map_err(|_| at_line(format!("unknown format '{v}'")))?,
                );
            }
            "suite" => {
                let v = choice(first)?;
                s.suite = Some(
                    Suite::from_str(&v, false)
                        .map_err(|_| at_line(format!("unknown suite '{v}'")))?,
                );
            }
            "at" => s.at = Some(num(first)?),
            "from" => s.from = Some(num(first)?),
            "to" => s.to = Some(num(first)?),
            "step" => s.step = Some(num(first)?),
            "q" => s.q = Some(num(first)?),
            "seed" => s.seed = Some(int(first)?),
            "count" => s.count = Some(int(first)? as usize),
            "n-max" => s.n_max = Some(int(first)? as u32),
            "k-max" => s.k_max = Some(int(first)? as u32),
            "disc-n-max" => s.disc_n_max = Some(int(first)? as u32),
            "m-max" => s.m_max = Some(int(first)? as u32),
            "condition" if rest.is_empty() => s.condition = true,
            "inject-fault" if rest.is_empty() => s.inject_fault = true,
            _ => match rest.as_slice() {
                [] => {
                    let m = parse_half_range("config", first).map_err(|_| {
                        at_line(format!("invalid half-range or unknown key '{first}'"))
                    })?;
                    s.discrete.push(m);
                }
                [a] => {
                    let c = parse_rational(first)
                        .ok_or_else(|| at_line(format!("invalid center '{first}'")))?;
                    let a = parse_rational(a)
                        .ok_or_else(|| at_line(format!("invalid half-width '{a}'")))?;
                    s.continuous
                        .push(ContinuousComponent::new(c, a).map_err(|e| at_line(e.to_string()))?);
                }
                _ => return Err(at_line(format!("cannot parse '{line}'"))),
            },
        }
    }
    Ok(s)
}

fn validate(s: Settings) -> Result<JobSpec, CliError> {
    let command = s.command.ok_or_else(|| usage("missing command"))?;
    let model = match (s.continuous.is_empty(), s.discrete.is_empty()) {
        (true, true) => Model::None,
        (false, true) => Model::Continuous(ContinuousSum::new(s.continuous)?),
        (true, false) => Model::Discrete(DiscreteSum::new(s.discrete)?),
        (false, false) => return Err(usage("cannot mix --comp and --m components")),
    };
    let points = match (s.at, s.from, s.to, s.step) {
        (None, None, None, None) => Points::Default,
        (Some(x), None, None, None) => Points::At(x),
        (None, Some(from), Some(to), Some(step)) => {
            if !step.is_positive() {
                return Err(usage(format!("--step must be positive, got {step}")));
            }
            let rows = if from > to {
                0
            } else {
                ((&to - &from) / &step)
                    .floor()
                    .to_integer()
                    .to_u64()
                    .unwrap_or(u64::MAX)
            };
            if rows >= MAX_ROWS {
                return Err(usage(format!("range expands to more than {MAX_ROWS} rows")));
            }
            Points::Range { from, to, step }
        }
        (Some(_), ..) => return Err(usage("--at cannot be combined with --from/--to/--step")),
        _ => return Err(usage("a range needs all of --from, --to and --step")),
    };

    let needs = |what: &str| usage(format!("'{}' needs {what}", command.name()));
    match command {
        Command::Density | Command::Cdf | Command::Quantile | Command::Table | Command::Sample => {
            if !matches!(model, Model::Continuous(_)) {
                return Err(needs("continuous components (--comp C:A)"));
            }
        }
        Command::Pmf => {
            if !matches!(model, Model::Discrete(_)) {
                return Err(needs("discrete components (--m M)"));
            }
        }
        Command::Coeffs | Command::Verify => {
            if model != Model::None {
                return Err(usage(format!("'{}' takes no components", command.name())));
            }
        }
    }
    if matches!(command, Command::Density | Command::Cdf) && points == Points::Default {
        return Err(needs("--at or --from/--to/--step"));
    }
    if command == Command::Pmf {
        let integral = |r: &Rational| r.is_integer();
        let ok = match &points {
            Points::Default => true,
            Points::At(p) => integral(p),
            Points::Range { from, to, step } => integral(from) && integral(to) && integral(step),
        };
        if !ok {
            return Err(usage("'pmf' evaluation points must be integers"));
        }
    }
    if command == Command::Quantile {
        match &s.q {
            None => return Err(needs("--q")),
            Some(q) if q.is_negative() || q > &Rational::from_integer(BigInt::from(1)) => {
                return Err(usage(format!(
                    "--q must lie in [0, 1], got {}",
                    format_exact(q)
                )))
            }
            _ => {}
        }
    }
    if s.count == Some(0) {
        return Err(usage("--count must be at least 1"));
    }
    if s.n_max == Some(0) {
        return Err(usage("--n-max must be at least 1"));
    }
    if s.disc_n_max == Some(0) {
        return Err(usage("--disc-n-max must be at least 1"));
    }
    Ok(JobSpec {
        command,
        model,
        points,
        mode: s.mode.unwrap_or_default(),
        q: s.q,
        seed: s.seed,
        count: s.count,
        format: s.format.unwrap_or_default(),
        condition: s.condition,
        verify: VerifyOptions {
            suite: s.suite.unwrap_or_default(),
            n_max: s.n_max,
            k_max: s.k_max,
            disc_n_max: s.disc_n_max,
            m_max: s.m_max,
            inject_fault: s.inject_fault,
        },
    })
}

/// Parses argv (including the program name) into a validated invocation.
pub fn parse_args<I, T>(argv: I) -> Result<Invocation, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = Args::try_parse_from(argv).map_err(|e| usage(e.to_string().trim_end()))?;
    let cli = settings_from_args(&args)?;
    let settings = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            settings_from_config(&text)?.overlay(cli)
        }
        None => cli,
    };
    Ok(Invocation {
        spec: validate(settings)?,
        out: args.out,
        dump_config: args.dump_config,
    })
}

/// Parses a config file on its own.
pub fn parse_config(text: &str) -> Result<JobSpec, CliError> {
    validate(settings_from_config(text)?)
}

/// Renders `spec` in the config format; [`parse_config`] reads it back unchanged.
pub fn dump_config(spec: &JobSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "command {}", spec.command.name());
    let _ = writeln!(
        out,
        "mode {}",
        match spec.mode {
            EvalMode::Exact => "exact",
            EvalMode::Float => "float",
        }
    );
    if spec.format == OutputFormat::Csv {
        let _ = writeln!(out, "format csv");
    }
    match &spec.points {
        Points::Default => {}
        Points::At(x) => {
            let _ = writeln!(out, "at {}", format_exact(x));
        }
        Points::Range { from, to, step } => {
            let _ = writeln!(out, "from {}", format_exact(from));
            let _ = writeln!(out, "to {}", format_exact(to));
            let _ = writeln!(out, "step {}", format_exact(step));
        }
    }
    if let Some(q) = &spec.q {
        let _ = writeln!(out, "q {}", format_exact(q));
    }
    if let Some(v) = spec.seed {
        let _ = writeln!(out, "seed {v}");
    }
    if let Some(v) = spec.count {
        let _ = writeln!(out, "count {v}");
    }
    if spec.condition {
        let _ = writeln!(out, "condition");
    }
    let v = &spec.verify;
    if v.suite != Suite::All {
        let name = v.suite.to_possible_value().expect("suite name");
        let _ = writeln!(out, "suite {}", name.get_name());
    }
    for (key, value) in [
        ("n-max", v.n_max),
        ("k-max", v.k_max),
        ("disc-n-max", v.disc_n_max),
        ("m-max", v.m_max),
    ] {
        if let Some(value) = value {
            let _ = writeln!(out, "{key} {value}");
        }
    }
    if v.inject_fault {
        let _ = writeln!(out, "inject-fault");
    }
    match &spec.model {
        Model::None => {}
        Model::Continuous(sum) => {
            for c in sum.components() {
                let _ = writeln!(
                    out,
                    "{} {}",
                    format_exact(c.center()),
                    format_exact(c.half_width())
                );
            }
        }
        Model::Discrete(dsum) => {
            for c in dsum.components() {
                let _ = writeln!(out, "{}", c.m);
            }
        }
    }
    out
}

/// Output text and whether every requested piece of work succeeded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub text: String,
    pub success: bool,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Self {
            text,
            success: true,
        }
    }
}

pub fn execute(spec: &JobSpec) -> Result<Outcome, CliError> {
    match spec.command {
        Command::Density | Command::Cdf => run_emit_csv(spec).map(Outcome::ok),
        Command::Pmf => run_emit_csv(spec).map(Outcome::ok),
        Command::Quantile => run_quantile(spec).map(Outcome::ok),
        Command::Table => run_table(spec).map(Outcome::ok),
        Command::Coeffs => Ok(Outcome::ok(run_coeffs(spec))),
        Command::Sample => run_sample(spec).map(Outcome::ok),
        Command::Verify => Ok(run_verify(spec)),
    }
}

/// Entry point shared by the binary and the tests. Returns the exit status.
pub fn main_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    if let Err(e) = Args::try_parse_from(&argv) {
        if matches!(
            e.kind(),
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
        ) {
            let _ = write!(stdout, "{e}");
            return 0;
        }
    }
    let result = parse_args(argv).and_then(|inv| {
        if let Some(path) = &inv.dump_config {
            std::fs::write(path, dump_config(&inv.spec))
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            return Ok(true);
        }
        let outcome = execute(&inv.spec)?;
        match &inv.out {
            Some(path) => std::fs::write(path, &outcome.text)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
            None => stdout
                .write_all(outcome.text.as_bytes())
                .map_err(|e| CliError::Io(e.to_string()))?,
        }
        Ok(outcome.success)
    });
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(stderr, "unisum: {e}");
            e.exit_code()
        }
    }
}

fn continuous(spec: &JobSpec) -> &ContinuousSum {
    match &spec.model {
        Model::Continuous(sum) => sum,
        _ => unreachable!("validated as continuous"),
    }
}

fn discrete(spec: &JobSpec) -> &DiscreteSum {
    match &spec.model {
        Model::Discrete(dsum) => dsum,
        _ => unreachable!("validated as discrete"),
    }
}

fn expand_points(points: &Points) -> Vec<Rational> {
    match points {
        Points::Default => Vec::new(),
        Points::At(x) => vec![x.clone()],
        Points::Range { from, to, step } => {
            let mut out = Vec::new();
            let mut x = from.clone();
            while &x <= to {
                out.push(x.clone());
                x += step;
            }
            out
        }
    }
}

fn describe_components(sum: &ContinuousSum) -> String {
    sum.components()
        .iter()
        .map(|c| {
            format!(
                "({}, {})",
                format_exact(c.center()),
                format_exact(c.half_width())
            )
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn mode_name(mode: EvalMode) -> &'static str {
    match mode {
        EvalMode::Exact => "exact",
        EvalMode::Float => "float",
    }
}

/// Density, CDF or PMF rows over the requested points.
///
/// Continuous rows are `x,value` plus `exact` (exact mode) or `condition`
/// (float mode with `--condition`); PMF rows are `p,probability,exact`.
pub fn run_emit_csv(spec: &JobSpec) -> Result<String, CliError> {
    let csv = spec.format == OutputFormat::Csv;
    let mut out = String::new();
    if spec.command == Command::Pmf {
        let dsum = discrete(spec);
        let points: Vec<i64> = match &spec.points {
            Points::Default => {
                let b = dsum.support_bound();
                (-b..=b).collect()
            }
            other => expand_points(other)
                .iter()
                .map(|p| {
                    p.to_integer()
                        .to_i64()
                        .ok_or_else(|| usage("pmf point out of range"))
                })
                .collect::<Result<_, _>>()?,
        };
        let values: Vec<Rational> = points.par_iter().map(|&p| dsum.pmf_tau(p)).collect();
        if csv {
            out.push_str("p,probability,exact\n");
        }
        for (p, v) in points.iter().zip(&values) {
            let (dec, frac) = (format_decimal(v, 6), format_fraction(v));
            if csv {
                let _ = writeln!(out, "{p},{dec},{frac}");
            } else {
                let _ = writeln!(out, "{p:>8}  {dec:>10}  {frac}");
            }
        }
        return Ok(out);
    }

    let sum = continuous(spec);
    let points = expand_points(&spec.points);
    let eval = |x: &Rational| -> crate::Result<EvalResult> {
        match (spec.command, spec.mode) {
            (Command::Cdf, EvalMode::Exact) => sum.cdf(x, EvalMode::Exact),
            (Command::Cdf, EvalMode::Float) => sum.cdf(to_f64(x), EvalMode::Float),
            (_, EvalMode::Exact) => sum.density_tau(x, EvalMode::Exact),
            (_, EvalMode::Float) => sum.density_tau(to_f64(x), EvalMode::Float),
        }
    };
    let results: Vec<EvalResult> = points.par_iter().map(eval).collect::<crate::Result<_>>()?;
    let exact = spec.mode == EvalMode::Exact;
    if csv {
        out.push_str(match (exact, spec.condition) {
            (true, _) => "x,value,exact\n",
            (false, true) => "x,value,condition\n",
            (false, false) => "x,value\n",
        });
    }
    for (x, r) in points.iter().zip(&results) {
        let xs = format_exact(x);
        let cols: Vec<String> = match &r.value {
            Value::Exact(v) => vec![xs, format_decimal(v, 6), format_fraction(v)],
            Value::Float(v) => {
                let mut cols = vec![xs, format!("{v:e}")];
                if spec.condition {
                    cols.push(format!("{:e}", r.condition_estimate.unwrap_or(f64::NAN)));
                }
                cols
            }
        };
        if csv {
            let _ = writeln!(out, "{}", cols.join(","));
        } else {
            let _ = writeln!(out, "{}", cols.join("  "));
        }
    }
    Ok(out)
}

fn run_quantile(spec: &JobSpec) -> Result<String, CliError> {
    let sum = continuous(spec);
    let q = spec.q.as_ref().expect("validated");
    let x = sum.quantile(to_f64(q))?;
    Ok(match spec.format {
        OutputFormat::Csv => format!("q,x\n{},{x:e}\n", format_exact(q)),
        OutputFormat::Plain => format!("{x:e}\n"),
    })
}

/// Five-decimal CDF table. Without an explicit range the grid is eleven
/// evenly spaced points from the bottom to the top of the support.
pub fn run_table(spec: &JobSpec) -> Result<String, CliError> {
    let sum = continuous(spec);
    let points = match &spec.points {
        Points::Default => {
            let (lo, hi) = sum.support();
            let step = (&hi - &lo) / Rational::from_integer(BigInt::from(10));
            expand_points(&Points::Range {
                from: lo,
                to: hi,
                step,
            })
        }
        other => expand_points(other),
    };
    let values: Vec<Rational> = points
        .par_iter()
        .map(|x| -> Result<Rational, CliError> {
            Ok(match spec.mode {
                EvalMode::Exact => sum
                    .cdf(x, EvalMode::Exact)?
                    .value
                    .into_exact()
                    .expect("exact"),
                EvalMode::Float => {
                    rational_from_f64(sum.cdf(to_f64(x), EvalMode::Float)?.value.to_f64())?
                }
            })
        })
        .collect::<Result<_, _>>()?;

    let mut out = String::new();
    if spec.format == OutputFormat::Csv {
        out.push_str("x,cdf\n");
        for (x, f) in points.iter().zip(&values) {
            let _ = writeln!(out, "{},{}", format_exact(x), format_decimal(f, 5));
        }
        return Ok(out);
    }
    let _ = writeln!(out, "# CDF of a sum of {} independent uniforms", sum.len());
    let _ = writeln!(
        out,
        "# components (center, half-width): {}",
        describe_components(sum)
    );
    let _ = writeln!(out, "# mode: {}", mode_name(spec.mode));
    let _ = writeln!(out, "{:>12}  {:>8}", "x", "F(x)");
    for (x, f) in points.iter().zip(&values) {
        let _ = writeln!(out, "{:>12}  {:>8}", format_exact(x), format_decimal(f, 5));
    }
    Ok(out)
}

fn run_coeffs(spec: &JobSpec) -> String {
    let n_max = spec.verify.n_max.unwrap_or(10);
    let k_max = spec.verify.k_max.unwrap_or(6);
    coefficient_table(n_max, k_max, spec.format, csc_coefficient)
}

fn coefficient_table(
    n_max: u32,
    k_max: u32,
    format: OutputFormat,
    coeff: impl Fn(u32, u32) -> Rational,
) -> String {
    let mut out = String::new();
    if format == OutputFormat::Csv {
        out.push_str("n,k,b\n");
    } else {
        let _ = writeln!(out, "{:>3} {:>3}  b_2k^(n)", "n", "k");
    }
    for n in 1..=n_max {
        for k in 0..=k_max {
            let b = format_fraction(&coeff(n, k));
            if format == OutputFormat::Csv {
                let _ = writeln!(out, "{n},{k},{b}");
            } else {
                let _ = writeln!(out, "{n:>3} {k:>3}  {b}");
            }
        }
    }
    out
}

fn run_sample(spec: &JobSpec) -> Result<String, CliError> {
    let sum = continuous(spec);
    let count = spec.count.unwrap_or(10);
    let seed = spec.seed.unwrap_or(0);
    let mut out = String::new();
    if spec.format == OutputFormat::Csv {
        out.push_str("draw\n");
    }
    for x in oracles::sample_sum(sum, count, seed) {
        let _ = writeln!(out, "{x:e}");
    }
    Ok(out)
}

/// Fixed models for the continuous verification suite.
fn continuous_panel() -> Vec<ContinuousSum> {
    let parse = |parts: &[(&str, &str)]| {
        ContinuousSum::new(
            parts
                .iter()
                .map(|(c, a)| {
                    ContinuousComponent::new(
                        parse_rational(c).expect("panel literal"),
                        parse_rational(a).expect("panel literal"),
                    )
                    .expect("panel literal")
                })
                .collect(),
        )
        .expect("panel literal")
    };
    vec![
        parse(&[("0", "1"), ("0", "2")]),
        parse(&[("0.5", "0.5"), ("0.5", "0.5")]),
        parse(&[("0", "1"), ("1", "0.5"), ("-1", "1.5")]),
        parse(&[("0.3", "0.2"), ("-1", "1"), ("2", "0.7"), ("0", "1.1")]),
    ]
}

/// Largest |closed form − grid oracle| on grid nodes more than one cell away
/// from every breakpoint.
pub fn grid_discrepancy(sum: &ContinuousSum, grid_step: f64) -> crate::Result<f64> {
    let grid = oracles::continuous_conv_oracle(sum, grid_step)?;
    let kinks = oracles::breakpoints(sum);
    let mut worst: f64 = 0.0;
    for (x, approx) in grid.points() {
        let near = kinks
            .binary_search_by(|k| k.total_cmp(&x))
            .map(|_| true)
            .unwrap_or_else(|i| {
                let left = i.checked_sub(1).map(|j| x - kinks[j]);
                let right = kinks.get(i).map(|k| k - x);
                left.into_iter().chain(right).any(|d| d <= grid_step)
            });
        if near {
            continue;
        }
        let exact = sum.density_tau(x, EvalMode::Float)?.value.to_f64();
        worst = worst.max((exact - approx).abs());
    }
    Ok(worst)
}

/// Runs the oracle cross-checks and reports one line per suite.
pub fn run_verify(spec: &JobSpec) -> Outcome {
    let v = &spec.verify;
    let mut out = String::new();
    let mut success = true;
    let mut report = |out: &mut String, name: &str, pass: bool, detail: String| {
        success &= pass;
        let _ = writeln!(
            out,
            "{} {name}: {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    };

    if matches!(v.suite, Suite::All | Suite::Coeffs) {
        let n_max = v.n_max.unwrap_or(10);
        let k_max = v.k_max.unwrap_or(6);
        let fault = v.inject_fault;
        let coeff = |n: u32, k: u32| {
            let b = csc_coefficient(n, k);
            if fault && n == n_max.min(3) && k == k_max.min(1) {
                -b
            } else {
                b
            }
        };
        if v.suite == Suite::Coeffs {
            out.push_str(&coefficient_table(n_max, k_max, spec.format, coeff));
        }
        let mut mismatches = 0;
        for n in 1..=n_max {
            let series = oracles::csc_series_oracle(n, k_max as usize);
            for (k, expected) in series.iter().enumerate() {
                if coeff(n, k as u32) != *expected {
                    mismatches += 1;
                }
            }
        }
        let total = n_max * (k_max + 1);
        report(
            &mut out,
            "coeffs",
            mismatches == 0,
            format!(
                "{} of {total} coefficients match the series expansion",
                total - mismatches
            ),
        );
    }

    if matches!(v.suite, Suite::All | Suite::Discrete) {
        let n_max = v.disc_n_max.unwrap_or(4);
        let m_max = v.m_max.unwrap_or(3);
        let mut cases = 0usize;
        let mut failures = Vec::new();
        for n in 1..=n_max as usize {
            let mut ms = vec![0u32; n];
            loop {
                let dsum = DiscreteSum::from_half_ranges(&ms).expect("small sum");
                let ok = match oracles::discrete_conv_oracle(&dsum) {
                    Ok(oracle) => {
                        dsum.pmf_full() == oracle
                            && oracle.keys().all(|&p| dsum.pmf_sign(p) == oracle[&p])
                    }
                    Err(_) => false,
                };
                cases += 1;
                if !ok {
                    failures.push(format!("{ms:?}"));
                }
                // odometer over 0..=m_max
                let Some(j) = ms.iter().rposition(|&m| m < m_max) else {
                    break;
                };
                ms[j] += 1;
                ms[j + 1..].iter_mut().for_each(|m| *m = 0);
            }
        }
        let detail = if failures.is_empty() {
            format!("{cases} sums match brute-force convolution")
        } else {
            format!(
                "{} of {cases} sums disagree, first {}",
                failures.len(),
                failures[0]
            )
        };
        report(&mut out, "discrete", failures.is_empty(), detail);
    }

    if matches!(v.suite, Suite::All | Suite::Continuous) {
        let count = spec.count.unwrap_or(100_000);
        let seed = spec.seed.unwrap_or(1);
        let critical = oracles::ks_critical_value_1pct(count);
        for (i, sum) in continuous_panel().iter().enumerate() {
            let grid = grid_discrepancy(sum, 1e-3);
            let draws: Vec<f64> = oracles::sample_sum(sum, count, seed + i as u64).collect();
            let ks = oracles::ks_statistic(draws, |x| {
                sum.cdf(x, EvalMode::Float)
                    .map(|r| r.value.to_f64())
                    .unwrap_or(f64::NAN)
            });
            match grid {
                Ok(err) => {
                    let pass = err <= 1e-3 && ks < critical;
                    report(
                        &mut out,
                        &format!("continuous[{i}]"),
                        pass,
                        format!(
                            "n={} grid max error {err:.2e} (limit 1e-3), KS {ks:.2e} (limit {critical:.2e})",
                            sum.len()
                        ),
                    );
                }
                Err(e) => report(&mut out, &format!("continuous[{i}]"), false, e.to_string()),
            }
        }
    }

    Outcome { text: out, success }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{int, rat};

    fn parse(line: &str) -> Result<Invocation, CliError> {
        parse_args(std::iter::once("unisum").chain(line.split_whitespace()))
    }

    fn spec(line: &str) -> JobSpec {
        parse(line).unwrap().spec
    }

    #[test]
    fn parses_continuous_density_job() {
        let s = spec("density --comp 0:1 --comp 0:2 --at 0 --exact");
        assert_eq!(s.command, Command::Density);
        assert_eq!(s.mode, EvalMode::Exact);
        assert_eq!(s.points, Points::At(int(0)));
        match &s.model {
            Model::Continuous(sum) => assert_eq!(sum.len(), 2),
            other => panic!("unexpected model {other:?}"),
        }
    }

    #[test]
    fn parses_discrete_pmf_job() {
        let s = spec("pmf --m 1 --m 1 --at 0");
        assert_eq!(s.command, Command::Pmf);
        assert_eq!(s.points, Points::At(int(0)));
        assert_eq!(
            s.model,
            Model::Discrete(DiscreteSum::from_half_ranges(&[1, 1]).unwrap())
        );
    }

    #[test]
    fn usage_errors_name_the_token() {
        let err = parse("density --comp 0:-1 --at 0").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("0:-1"), "{err}");

        let err = parse("density --comp 0:x --at 0").unwrap_err();
        assert!(err.to_string().contains("'x'"), "{err}");

        let err = parse("pmf --m -1").unwrap_err();
        assert!(err.to_string().contains("-1"), "{err}");

        let err = parse("density --bogus 1").unwrap_err();
        assert!(err.to_string().contains("--bogus"), "{err}");

        assert!(parse("--comp 0:1 --at 0")
            .unwrap_err()
            .to_string()
            .contains("missing command"));
        assert!(parse("pmf --comp 0:1").is_err());
        assert!(parse("density --m 1 --at 0").is_err());
        assert!(parse("density --comp 0:1").is_err());
        assert!(parse("density --comp 0:1 --m 1 --at 0").is_err());
        assert!(parse("quantile --comp 0:1").is_err());
        assert!(parse("quantile --comp 0:1 --q 1.5").is_err());
        assert!(parse("pmf --m 1 --at 0.5").is_err());
        assert!(parse("density --comp 0:1 --from 0 --to 1").is_err());
        assert!(parse("density --comp 0:1 --from 0 --to 1 --step 0").is_err());
        assert!(parse("density --comp 0:1 --at 0 --exact --float").is_err());
        assert!(parse("verify --comp 0:1").is_err());
    }

    #[test]
    fn config_roundtrip() {
        let s = spec(
            "cdf --comp 1/3:0.25 --comp -2:7 --from -1 --to 1 --step 1/8 --float --csv --condition",
        );
        let text = dump_config(&s);
        assert_eq!(parse_config(&text).unwrap(), s);

        let s =
            spec("verify --suite coeffs --n-max 4 --k-max 2 --inject-fault --seed 3 --count 10");
        assert_eq!(parse_config(&dump_config(&s)).unwrap(), s);

        let s = spec("pmf --m 2 --m 0 --m 5");
        assert_eq!(parse_config(&dump_config(&s)).unwrap(), s);
    }

    #[test]
    fn config_file_components_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        std::fs::write(
            &path,
            "# two boxes\n0 1\n0 2  # wide\ncommand density\nat 1\n",
        )
        .unwrap();
        let p = path.to_str().unwrap();
        let s = spec(&format!("--config {p}"));
        assert_eq!(s.points, Points::At(int(1)));
        let s = spec(&format!("density --config {p} --at 0"));
        assert_eq!(s.points, Points::At(int(0)));
        match s.model {
            Model::Continuous(sum) => assert_eq!(sum.len(), 2),
            other => panic!("{other:?}"),
        }

        std::fs::write(&path, "0 -1\n").unwrap();
        let err = parse(&format!("density --config {p} --at 0")).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");

        std::fs::write(&path, "frobnicate\n").unwrap();
        let err = parse(&format!("density --config {p} --at 0")).unwrap_err();
        assert!(err.to_string().contains("frobnicate"), "{err}");
    }

    #[test]
    fn table_of_triangular_cdf() {
        let s = spec("table --comp 0:1 --comp 0:1 --from -2 --to 2 --step 1");
        let text = run_table(&s).unwrap();
        let values: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .map(|l| l.split_whitespace().nth(1).unwrap())
            .collect();
        assert_eq!(
            values,
            ["0.00000", "0.12500", "0.50000", "0.87500", "1.00000"]
        );
        assert!(text.contains("# mode: exact"));
        assert!(text.contains("(0, 1) (0, 1)"));
    }

    #[test]
    fn default_table_spans_the_support() {
        let s = spec("table --comp 0.5:0.5 --comp 0:2 --comp 1:1/3 --float");
        let text = run_table(&s).unwrap();
        let rows: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .collect();
        assert_eq!(rows.len(), 11);
        assert!(rows[0].ends_with("0.00000"));
        assert!(rows[10].ends_with("1.00000"));
    }

    #[test]
    fn density_csv_over_a_range() {
        let s = spec("density --comp 0:1 --comp 0:2 --from -3 --to 3 --step 0.5 --csv");
        let text = run_emit_csv(&s).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,value,exact");
        assert_eq!(lines.len(), 14);
        assert_eq!(lines[7], "0,0.250000,1/4");
    }

    #[test]
    fn pmf_csv_rows() {
        let s = spec("pmf --m 1 --m 1 --csv");
        let text = run_emit_csv(&s).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[3], "0,0.333333,1/3");
        assert_eq!(lines[1], "-2,0.111111,1/9");
    }

    #[test]
    fn empty_range_yields_header_only() {
        let s = spec("density --comp 0:1 --from 1 --to 0 --step 0.1 --csv");
        assert_eq!(run_emit_csv(&s).unwrap(), "x,value,exact\n");
        let s = spec("cdf --comp 0:1 --from 1 --to 0 --step 0.1 --csv --float --condition");
        assert_eq!(run_emit_csv(&s).unwrap(), "x,value,condition\n");
    }

    #[test]
    fn float_csv_reports_condition() {
        let s = spec("density --comp 0:1 --comp 0:2 --at 0 --float --csv --condition");
        let text = run_emit_csv(&s).unwrap();
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[0], "0");
        assert_eq!(row[1].parse::<f64>().unwrap(), 0.25);
        assert!(row[2].parse::<f64>().unwrap() >= 1.0);
    }

    #[test]
    fn quantile_and_sample_outputs() {
        let s = spec("quantile --comp 0:1 --q 0.75");
        let x: f64 = execute(&s).unwrap().text.trim().parse().unwrap();
        assert!((x - 0.5).abs() < 1e-11);
        let s = spec("sample --comp 0:1 --count 5 --seed 9 --csv");
        let text = execute(&s).unwrap().text;
        assert_eq!(text.lines().count(), 6);
        assert_eq!(text, execute(&s).unwrap().text);
    }

    #[test]
    fn coefficient_table_lists_every_entry() {
        let s = spec("coeffs --n-max 2 --k-max 2 --csv");
        let text = execute(&s).unwrap().text;
        assert_eq!(
            text,
            "n,k,b\n1,0,1\n1,1,1/6\n1,2,7/360\n2,0,1\n2,1,1/3\n2,2,1/15\n"
        );
    }

    #[test]
    fn verify_coefficients_and_fault_injection() {
        let s = spec("verify --suite coeffs --n-max 10 --k-max 6");
        let out = run_verify(&s);
        assert!(out.success, "{}", out.text);
        assert!(out.text.contains("PASS coeffs: 70 of 70"));
        assert!(out.text.contains("7/360"));

        let s = spec("verify --suite coeffs --n-max 10 --k-max 6 --inject-fault");
        let out = run_verify(&s);
        assert!(!out.success);
        assert!(out.text.contains("FAIL coeffs"));
    }

    #[test]
    fn verify_discrete_small_scale() {
        let s = spec("verify --suite discrete --disc-n-max 3 --m-max 2");
        let out = run_verify(&s);
        assert!(out.success, "{}", out.text);
        assert!(out.text.contains("39 sums"), "{}", out.text);
    }

    #[test]
    fn expand_range_is_exact() {
        let pts = expand_points(&Points::Range {
            from: int(-3),
            to: int(3),
            step: rat(1, 2),
        });
        assert_eq!(pts.len(), 13);
        assert_eq!(pts[12], int(3));
    }
}
