//! Command-line front end.
//!
//! Every output file starts with a `# manifest: {...}` line holding the
//! subcommand, the effective arguments, the resolved configuration, the
//! output paths, the tool version and a timestamp. Rerunning the recorded
//! arguments reproduces the file byte for byte apart from the timestamp.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::analytic::{self, AnalyticInputs};
use crate::harness::{self, EntropyReport, FigureDataset, FigureId, SweepAxis, SweepParam};
use crate::model::{BreakCap, NetPrivCascade, Scenario, ScenarioConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const SEED_ENV: &str = "NETPRIV_SEED";
pub const DEFAULT_SEED: u64 = 0;

const SIMULATE_HEADER: &str = "scenario,n_users,n_exits,rho,rho_e,p_f,cap,trials,seed,h_max,h_analytic,h_paper_style,h_empirical_mean,h_empirical_ci95";

const RANGE_HELP: &str = "Numeric flags accept a value, a range start:stop:step (both ends \
included), or a comma-separated list of either.";

#[derive(Debug, Parser)]
#[command(name = "netpriv", version, about = "Sender-anonymity simulator for request cloning cascades", after_help = RANGE_HELP, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate a closed-form expression over a parameter grid.
    Analytic(AnalyticArgs),
    /// Monte Carlo entropy estimate, one row per grid point.
    Simulate(SimulateArgs),
    /// Intersection attack over repeated sessions of one sender.
    Longterm(LongtermArgs),
    /// Write the dataset behind one of the figures.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
#[command(after_help = RANGE_HELP)]
struct AnalyticArgs {
    /// max-entropy, mean-cc-length, cc-break-pmf, expected-cc-break,
    /// expected-cc-break-closed, p2priv-p2p, p2priv-cs or netpriv-cs
    #[arg(long)]
    formula: String,
    #[arg(long = "n", default_value = "1000", value_parser = parse_grid)]
    n_users: Grid,
    #[arg(long, default_value = "0.1", value_parser = parse_grid)]
    rho: Grid,
    #[arg(long = "rho-e", default_value = "0.5", value_parser = parse_grid)]
    rho_e: Grid,
    #[arg(long = "pf", default_value = "0.6666666666666666", value_parser = parse_grid)]
    p_f: Grid,
    /// Summation cap: `auto` or a positive integer.
    #[arg(long, default_value = "auto", value_parser = parse_cap)]
    cap: BreakCap,
    /// Cascade length for cc-break-pmf and expected-cc-break-closed.
    #[arg(long, default_value = "4", value_parser = parse_grid)]
    len: Grid,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    #[arg(long, default_value = "p2priv-cs", value_parser = parse_scenario)]
    scenario: Scenario,
    #[arg(long = "n", default_value = "1000", value_parser = parse_grid)]
    n_users: Grid,
    #[arg(long = "n-exits", default_value_t = 100)]
    n_exits: usize,
    #[arg(long, default_value = "0.1", value_parser = parse_grid)]
    rho: Grid,
    #[arg(long = "rho-e", default_value = "0.5", value_parser = parse_grid)]
    rho_e: Grid,
    #[arg(long = "pf", default_value = "0.6666666666666666", value_parser = parse_grid)]
    p_f: Grid,
    /// Cascade cap: `auto` or a positive integer.
    #[arg(long, default_value = "auto", value_parser = parse_cap)]
    cap: BreakCap,
    /// NetPriv cascade length: `walk` or a fixed member count.
    #[arg(long = "cc-len", default_value = "walk", value_parser = parse_cascade)]
    cc_len: NetPrivCascade,
    /// Largest per-member connection delay in ticks.
    #[arg(long)]
    jitter: Option<u64>,
    /// Colluders forward the token instead of absorbing it.
    #[arg(long)]
    passive: bool,
    /// Defaults to $NETPRIV_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat key=value file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(after_help = RANGE_HELP)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = harness::DEFAULT_TRIALS)]
    trials: u64,
    /// Also write the reports as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
#[command(after_help = RANGE_HELP)]
struct LongtermArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 50)]
    sessions: usize,
    /// Number of seeds, counting up from --seed.
    #[arg(long, default_value_t = 200)]
    seeds: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    /// fig2 .. fig9
    figure: String,
    /// Directory for `<figure>.csv` and `<figure>_overlay.csv`.
    #[arg(long = "out-dir", default_value = ".")]
    out_dir: PathBuf,
    /// Monte Carlo trials per overlay point; 0 skips the overlay.
    #[arg(long = "overlay-trials", default_value_t = 2000)]
    overlay_trials: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
struct Grid(Vec<f64>);

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<harness::HarnessError> for CliError {
    fn from(e: harness::HarnessError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// `start:stop:step`, inclusive of `stop` within a small tolerance.
pub fn parse_range(s: &str) -> Result<Vec<f64>, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("'{t}' is not a number"))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [v] => Ok(vec![num(v)?]),
        [a, b, c] => {
            let (start, stop, step) = (num(a)?, num(b)?, num(c)?);
            if step <= 0.0 {
                return Err(format!("range '{s}' needs a positive step"));
            }
            if stop < start {
                return Err(format!("range '{s}' ends before it starts"));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count)
                .map(|i| {
                    let v = start + i as f64 * step;
                    if (v - stop).abs() <= step * 1e-9 {
                        stop
                    } else {
                        v
                    }
                })
                .collect())
        }
        _ => Err(format!("'{s}' is neither a value nor start:stop:step")),
    }
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    let mut values = Vec::new();
    for part in s.split(',') {
        values.extend(parse_range(part)?);
    }
    Ok(Grid(values))
}

fn parse_cap(s: &str) -> Result<BreakCap, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(BreakCap::Auto);
    }
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(BreakCap::Fixed(k)),
        _ => Err(format!("cap must be 'auto' or a positive integer, got '{s}'")),
    }
}

fn parse_cascade(s: &str) -> Result<NetPrivCascade, String> {
    if s.eq_ignore_ascii_case("walk") {
        return Ok(NetPrivCascade::WalkLaw);
    }
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(NetPrivCascade::Fixed(k)),
        _ => Err(format!("cc-len must be 'walk' or a positive integer, got '{s}'")),
    }
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse::<Scenario>().map_err(|e| e.to_string())
}

fn whole(grid: &Grid, name: &str) -> Result<Vec<usize>, CliError> {
    grid.0
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(CliError::Usage(format!("--{name} needs whole numbers, got {v}")))
            }
        })
        .collect()
}

/// Six significant digits, always with `.` as the decimal point.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0.00000".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-5..=14).contains(&mag) {
        return format!("{x:.5e}");
    }
    let fixed = |decimals: i32| format!("{:.*}", decimals.max(0) as usize, x);
    let s = fixed(5 - mag);
    // rounding can carry into the next power of ten (9.999999 -> 10.00000)
    let rounded: f64 = s.parse().unwrap_or(x);
    if rounded.abs() >= 10f64.powi(mag + 1) {
        fixed(4 - mag)
    } else {
        s
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    args: &'a [String],
    config: serde_json::Value,
    outputs: Vec<String>,
    version: &'static str,
    timestamp: String,
}

impl RunManifest<'_> {
    fn header(&self) -> String {
        format!(
            "# manifest: {}\n",
            serde_json::to_string(self).expect("manifest serializes")
        )
    }
}

fn manifest<'a>(
    subcommand: &'a str,
    args: &'a [String],
    config: serde_json::Value,
    outputs: Vec<String>,
) -> RunManifest<'a> {
    RunManifest {
        subcommand,
        args,
        config,
        outputs,
        version: env!("CARGO_PKG_VERSION"),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display()))),
        None => out.write_all(text.as_bytes()).map_err(CliError::from),
    }
}

fn resolve_seed(flag: Option<u64>, err: &mut dyn Write) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
        Err(_) => {
            let _ = writeln!(err, "warning: no --seed or {SEED_ENV}; using seed {DEFAULT_SEED}");
            Ok(DEFAULT_SEED)
        }
    }
}

/// Read `key=value` lines into `--key value` arguments. `key=true` becomes a
/// bare `--key`, `key=false` is dropped.
fn config_args(path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut args = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "{}:{}: expected key=value",
                path.display(),
                i + 1
            )));
        };
        let key = key.trim().replace('_', "-");
        if key == "config" {
            return Err(CliError::Usage(format!("{}: config files cannot nest", path.display())));
        }
        match value.trim() {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            v => {
                args.push(format!("--{key}"));
                args.push(v.to_string());
            }
        }
    }
    Ok(args)
}

fn find_config(args: &[String]) -> Option<PathBuf> {
    let mut found = None;
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            found = it.next().map(PathBuf::from);
        } else if let Some(p) = a.strip_prefix("--config=") {
            found = Some(PathBuf::from(p));
        }
    }
    found
}

/// Splice config-file arguments right after the subcommand so that later
/// command-line flags override them.
fn expand_config(args: Vec<String>) -> Result<Vec<String>, CliError> {
    let Some(path) = find_config(&args) else {
        return Ok(args);
    };
    let extra = config_args(&path)?;
    let mut merged = Vec::with_capacity(args.len() + extra.len());
    merged.extend(args.iter().take(2).cloned());
    merged.extend(extra);
    merged.extend(args.iter().skip(2).cloned());
    Ok(merged)
}

fn one_line(e: &clap::Error) -> String {
    let rendered = e.render().to_string();
    let parts: Vec<&str> = rendered
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("Usage:") && !l.starts_with("For more information"))
        .collect();
    parts.join(" ")
}

/// Entry point behind the binary. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<String> = args
        .into_iter()
        .map(|a| a.into().to_string_lossy().into_owned())
        .collect();
    let result = expand_config(args).and_then(|args| match Cli::try_parse_from(&args) {
        Ok(cli) => dispatch(cli, &args[1..], out, err),
        Err(e) => match e.kind() {
            clap::error::ErrorKind::DisplayHelp
            | clap::error::ErrorKind::DisplayVersion
            | clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                let _ = write!(out, "{}", e.render());
                Ok(())
            }
            _ => Err(CliError::Usage(one_line(&e))),
        },
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            let msg = msg.strip_prefix("error: ").unwrap_or(&msg);
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(cli: Cli, args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Analytic(a) => cmd_analytic(a, args, out, err),
        Command::Simulate(a) => cmd_simulate(a, args, out, err),
        Command::Longterm(a) => cmd_longterm(a, args, out, err),
        Command::Reproduce(a) => cmd_reproduce(a, args, err),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Formula {
    MaxEntropy,
    MeanCcLength,
    CcBreakPmf,
    ExpectedCcBreak,
    ExpectedCcBreakClosed,
    Scenario(Scenario),
}

impl Formula {
    const NAMES: &'static str = "max-entropy, mean-cc-length, cc-break-pmf, expected-cc-break, expected-cc-break-closed, p2priv-p2p, p2priv-cs, netpriv-cs";

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "max-entropy" => Formula::MaxEntropy,
            "mean-cc-length" => Formula::MeanCcLength,
            "cc-break-pmf" => Formula::CcBreakPmf,
            "expected-cc-break" => Formula::ExpectedCcBreak,
            "expected-cc-break-closed" => Formula::ExpectedCcBreakClosed,
            other => Formula::Scenario(other.parse().ok()?),
        })
    }
}

fn cmd_analytic(a: AnalyticArgs, args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let formula = Formula::parse(&a.formula).ok_or_else(|| {
        CliError::Usage(format!("unknown formula '{}' (valid: {})", a.formula, Formula::NAMES))
    })?;
    let ns = whole(&a.n_users, "n")?;
    let lens = whole(&a.len, "len")?;

    let mut csv = String::from("formula,n_users,rho,rho_e,p_f,cap,len,value\n");
    let mut skipped = 0usize;
    for &n in &ns {
        for &rho in &a.rho.0 {
            for &rho_e in &a.rho_e.0 {
                for &p_f in &a.p_f.0 {
                    for &len in &lens {
                        let cap = a.cap.resolve(n, rho);
                        let inputs = AnalyticInputs { n_users: n, rho, rho_e, p_f, cap };
                        let value = match formula {
                            Formula::MaxEntropy => analytic::max_entropy(n, rho),
                            Formula::MeanCcLength => analytic::mean_cc_length(p_f),
                            Formula::CcBreakPmf => analytic::cc_break_pmf(len, rho, p_f),
                            Formula::ExpectedCcBreak => analytic::expected_cc_break(rho, p_f, cap),
                            Formula::ExpectedCcBreakClosed => {
                                analytic::expected_cc_break_closed_form(rho, p_f, len as u32)
                            }
                            Formula::Scenario(s) => analytic::scenario_entropy(s, &inputs),
                        };
                        // undefined points keep their row with an empty value
                        let value = match value {
                            Ok(v) => fmt_sig(v),
                            Err(e) => {
                                skipped += 1;
                                let _ = writeln!(
                                    err,
                                    "warning: n={n} rho={rho} rho_e={rho_e} p_f={p_f} len={len}: {e}"
                                );
                                String::new()
                            }
                        };
                        let _ = writeln!(
                            csv,
                            "{},{n},{},{},{},{cap},{len},{value}",
                            a.formula,
                            fmt_sig(rho),
                            fmt_sig(rho_e),
                            fmt_sig(p_f)
                        );
                    }
                }
            }
        }
    }
    if skipped > 0 {
        let _ = writeln!(err, "warning: {skipped} grid point(s) outside the model's domain");
    }
    let config = json!({
        "formula": a.formula,
        "n_users": ns,
        "rho": a.rho.0,
        "rho_e": a.rho_e.0,
        "p_f": a.p_f.0,
        "cap": a.cap,
        "len": lens,
    });
    let outputs = a.common.out.iter().map(|p| path_str(p)).collect();
    let text = manifest("analytic", args, config, outputs).header() + &csv;
    emit(out, a.common.out.as_deref(), &text)
}

/// Base config and sweep axes for the scenario flags.
fn scenario_grid(s: &ScenarioArgs, seed: u64) -> Result<(ScenarioConfig, Vec<SweepAxis>), CliError> {
    let ns = whole(&s.n_users, "n")?;
    let base = ScenarioConfig {
        n_users: ns[0],
        n_exits: s.n_exits,
        rho: s.rho.0[0],
        rho_e: s.rho_e.0[0],
        p_f: s.p_f.0[0],
        scenario: s.scenario,
        break_cap: s.cap,
        jitter_max: s.jitter,
        netpriv_cascade: s.cc_len,
        active_break: !s.passive,
        seed,
    };
    let mut axes = Vec::new();
    for (param, values) in [
        (SweepParam::NUsers, s.n_users.0.clone()),
        (SweepParam::Rho, s.rho.0.clone()),
        (SweepParam::RhoE, s.rho_e.0.clone()),
        (SweepParam::PF, s.p_f.0.clone()),
    ] {
        if values.len() > 1 {
            axes.push(SweepAxis::new(param, values));
        }
    }
    let points = harness::grid(&base, &axes)?;
    for p in &points {
        p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok((base, axes))
}

fn simulate_row(r: &EntropyReport) -> String {
    let c = &r.config;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        c.scenario,
        c.n_users,
        c.n_exits,
        fmt_sig(c.rho),
        fmt_sig(c.rho_e),
        fmt_sig(c.p_f),
        c.effective_cap(),
        r.trials,
        r.seed,
        fmt_sig(r.h_max),
        fmt_sig(r.h_analytic),
        fmt_sig(r.h_paper_style),
        fmt_sig(r.h_empirical_mean),
        fmt_sig(r.h_empirical_ci95),
    )
}

fn cmd_simulate(a: SimulateArgs, args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    if a.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let seed = resolve_seed(a.scenario.seed, err)?;
    let (base, axes) = scenario_grid(&a.scenario, seed)?;
    let reports = harness::sweep(&base, &axes, a.trials)?;

    let mut outputs: Vec<String> = a.common.out.iter().map(|p| path_str(p)).collect();
    outputs.extend(a.json.iter().map(|p| path_str(p)));
    let config = json!({ "base": base, "axes": axes, "trials": a.trials });
    let m = manifest("simulate", args, config, outputs);

    let mut csv = m.header();
    csv.push_str(SIMULATE_HEADER);
    csv.push('\n');
    for r in &reports {
        csv.push_str(&simulate_row(r));
    }
    emit(out, a.common.out.as_deref(), &csv)?;

    if let Some(path) = &a.json {
        let doc = json!({ "manifest": m, "reports": reports });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Runtime(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_longterm(a: LongtermArgs, args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    if a.sessions == 0 {
        return Err(CliError::Usage("--sessions must be at least 1".into()));
    }
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let seed = resolve_seed(a.scenario.seed, err)?;
    let (base, axes) = scenario_grid(&a.scenario, seed)?;
    if !axes.is_empty() {
        return Err(CliError::Usage("longterm takes single parameter values, not ranges".into()));
    }
    let seeds: Vec<u64> = (0..a.seeds).map(|i| seed.wrapping_add(i)).collect();
    let stats = harness::run_longterm(&base, a.sessions, &seeds)?;

    let config = json!({ "base": base, "sessions": a.sessions, "seeds": a.seeds });
    let outputs = a.common.out.iter().map(|p| path_str(p)).collect();
    let mut csv = manifest("longterm", args, config, outputs).header();
    csv.push_str("seed,session_index,intersection_size,isolated\n");
    for run in &stats.runs {
        for (i, size) in run.trajectory.iter().enumerate() {
            let index = i + 1;
            let isolated = run.isolated_at.is_some_and(|k| index >= k);
            let _ = writeln!(csv, "{},{index},{size},{isolated}", run.seed);
        }
    }
    emit(out, a.common.out.as_deref(), &csv)
}

fn figure_csv(data: &FigureDataset) -> String {
    let mut csv = String::from("figure,scenario,n_users,rho,rho_e,p_f,cap,h_max,h_analytic\n");
    for p in &data.analytic {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            data.preset.id,
            p.scenario,
            p.n_users,
            fmt_sig(p.rho),
            fmt_sig(p.rho_e),
            fmt_sig(p.p_f),
            p.cap,
            fmt_sig(p.h_max),
            fmt_sig(p.h_analytic)
        );
    }
    csv
}

fn cmd_reproduce(a: ReproduceArgs, args: &[String], err: &mut dyn Write) -> Result<(), CliError> {
    let figure: FigureId = a.figure.parse().map_err(|e: harness::HarnessError| CliError::Usage(e.to_string()))?;
    let seed = resolve_seed(a.seed, err)?;
    fs::create_dir_all(&a.out_dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", a.out_dir.display())))?;
    let data = harness::reproduce(figure, a.overlay_trials, seed)?;

    let main_path = a.out_dir.join(format!("{figure}.csv"));
    let overlay_path = a.out_dir.join(format!("{figure}_overlay.csv"));
    let mut outputs = vec![path_str(&main_path)];
    if !data.overlay.is_empty() {
        outputs.push(path_str(&overlay_path));
    }
    let preset = &data.preset;
    let config = json!({
        "figure": figure.name(),
        "title": preset.title,
        "scenario": preset.scenario,
        "n_users": preset.n_users,
        "p_f": preset.p_fs,
        "rho": preset.rhos,
        "rho_e": preset.rho_es,
        "overlay_trials": a.overlay_trials,
        "seed": seed,
    });
    let header = manifest("reproduce", args, config, outputs).header();

    emit(&mut std::io::sink(), Some(&main_path), &(header.clone() + &figure_csv(&data)))?;
    if !data.overlay.is_empty() {
        let mut csv = header;
        csv.push_str(SIMULATE_HEADER);
        csv.push('\n');
        for r in &data.overlay {
            csv.push_str(&simulate_row(r));
        }
        emit(&mut std::io::sink(), Some(&overlay_path), &csv)?;
    }
    Ok(())
}
