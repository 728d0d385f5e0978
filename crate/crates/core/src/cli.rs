//! Command-line front end: argument and config-file parsing, dispatch to
//! the pipeline, CSV/JSON writers and plot scripts.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::model::DEFAULT_SEPARATION;
use crate::oracle::{calibrate_separation, find_exceptional_point, oracle_eigenvalues};
use crate::pipeline::{
    ep_study, nonlinear_comparison, nonlinear_pair, refined_grid, remove_state, sweep_spectrum, track_pair, PipelineConfig,
    RemovalReport,
};
use crate::shooting::ShootingConfig;
use crate::susy::XiConstant;

pub const SPECTRUM_HEADER: &str = "gamma,re_E0_1,im_E0_1,re_E1_1,im_E1_1,re_E0_2,im_E0_2";
pub const WAVEFUNCTION_HEADER: &str = "x,re_phi,im_phi,abs_phi";
pub const POTENTIAL_HEADER: &str = "x,re_V,im_V";
pub const NONLINEAR_HEADER: &str = "g,gamma,re_E0_2,im_E0_2,re_Eid,im_Eid,deviation";
pub const ORACLE_HEADER: &str = "gamma,re_kappa0,im_kappa0,re_kappa1,im_kappa1,re_E0,im_E0,re_E1,im_E1";

/// Binding energy `|E0|` the separation is calibrated to by default.
pub const DEFAULT_CALIBRATION_TARGET: f64 = 0.392;
const DEFAULT_GAMMA_STEP: f64 = 0.005;
const SAMPLE_EXTENT: f64 = 6.0;
const SAMPLE_STEP: f64 = 0.01;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Args(String),
    #[error("{path}:{line}: {message}")]
    Config { path: String, line: usize, message: String },
    #[error(transparent)]
    Solver(#[from] crate::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Args(_) | CliError::Config { .. } => 2,
            CliError::Solver(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Oracle,
    Ep,
    Partner,
    Scan,
    Nonlinear,
    Calibrate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Oracle => "oracle",
            Command::Ep => "ep",
            Command::Partner => "partner",
            Command::Scan => "scan",
            Command::Nonlinear => "nonlinear",
            Command::Calibrate => "calibrate",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ptsusy", version, about = "SUSY partners of the PT-symmetric double-delta trap")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Solve the original bound states at one gamma.
    Solve(Flags),
    /// Closed-form eigenvalues at one gamma or over a range.
    Oracle(Flags),
    /// Locate the exceptional point and the surviving partner state.
    Ep(Flags),
    /// Remove one state and solve the partner potential.
    Partner(Flags),
    /// Sweep gamma: both original states and the partner state.
    Scan(Flags),
    /// Partner energies with self-interaction against the ideal value.
    Nonlinear(Flags),
    /// Separation giving a ground-state binding energy.
    Calibrate(Flags),
}

#[derive(Debug, Default, Clone, Args)]
struct Flags {
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    gamma_from: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    gamma_to: Option<f64>,
    #[arg(long)]
    gamma_step: Option<f64>,
    /// Separation of the deltas [default: 2.2]
    #[arg(long)]
    a: Option<f64>,
    /// Self-interaction; a comma-separated list for `nonlinear`
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    g: Option<Vec<f64>>,
    /// Removed (or solved) state
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
    state: Option<u8>,
    #[arg(long, allow_negative_numbers = true)]
    xi_re: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    xi_im: Option<f64>,
    /// Integration step [default: 1e-3]
    #[arg(long)]
    step: Option<f64>,
    /// Newton tolerance [default: 1e-10]
    #[arg(long)]
    tol: Option<f64>,
    /// Target |E0| for `calibrate` [default: 0.392]
    #[arg(long)]
    target: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    emit_plot: bool,
    /// Worker threads [default: 1]
    #[arg(long)]
    jobs: Option<usize>,
    /// `key=value` file; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Fully resolved parameters of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub a: f64,
    pub gamma: Option<f64>,
    pub gamma_from: Option<f64>,
    pub gamma_to: Option<f64>,
    pub gamma_step: Option<f64>,
    pub g: Vec<f64>,
    pub state: usize,
    pub xi: Option<Complex64>,
    pub step: f64,
    pub tol: f64,
    pub target: f64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub emit_plot: bool,
    pub jobs: usize,
}

impl RunConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            shooting: ShootingConfig {
                step: self.step,
                tol: self.tol,
                ..ShootingConfig::default()
            },
            jobs: self.jobs,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("invalid value '{v}' for '{key}'"))
}

/// Fills the unset fields of `flags` from a `key=value` config text.
fn merge_config(flags: &mut Flags, text: &str, path: &str) -> Result<(), CliError> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| CliError::Config {
            path: path.to_string(),
            line: i + 1,
            message,
        };
        let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, got '{line}'")))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        macro_rules! fill {
            ($field:ident) => {
                if flags.$field.is_none() {
                    flags.$field = Some(parse_value(&key, value).map_err(err)?);
                }
            };
        }
        match key.as_str() {
            "gamma" => fill!(gamma),
            "gamma-from" => fill!(gamma_from),
            "gamma-to" => fill!(gamma_to),
            "gamma-step" => fill!(gamma_step),
            "a" => fill!(a),
            "state" => {
                fill!(state);
                if flags.state.is_some_and(|s| s > 1) {
                    return Err(err("state must be 0 or 1".into()));
                }
            }
            "xi-re" => fill!(xi_re),
            "xi-im" => fill!(xi_im),
            "step" => fill!(step),
            "tol" => fill!(tol),
            "target" => fill!(target),
            "jobs" => fill!(jobs),
            "out" => fill!(out),
            "g" => {
                if flags.g.is_none() {
                    let list = value
                        .split(',')
                        .map(|v| parse_value::<f64>("g", v.trim()))
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(err)?;
                    flags.g = Some(list);
                }
            }
            "format" => {
                if flags.format.is_none() {
                    flags.format = Some(Format::from_str(value, true).map_err(|_| err(format!("unknown format '{value}'")))?);
                }
            }
            "emit-plot" => {
                let on: bool = parse_value(&key, value).map_err(err)?;
                flags.emit_plot |= on;
            }
            _ => return Err(err(format!("unknown key '{key}'"))),
        }
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Args(format!("--{name} must be positive and finite, got {v}")))
    }
}

fn finite(name: &str, v: Option<f64>) -> Result<Option<f64>, CliError> {
    match v {
        Some(x) if !x.is_finite() => Err(CliError::Args(format!("--{name} must be finite, got {x}"))),
        _ => Ok(v),
    }
}

/// Parses `argv` (program name first) and the optional config file.
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| {
        let text = e.to_string();
        CliError::Args(text.trim_start_matches("error: ").trim_end().to_string())
    })?;
    let (command, mut flags) = match cli.command {
        Sub::Solve(f) => (Command::Solve, f),
        Sub::Oracle(f) => (Command::Oracle, f),
        Sub::Ep(f) => (Command::Ep, f),
        Sub::Partner(f) => (Command::Partner, f),
        Sub::Scan(f) => (Command::Scan, f),
        Sub::Nonlinear(f) => (Command::Nonlinear, f),
        Sub::Calibrate(f) => (Command::Calibrate, f),
    };
    if let Some(path) = flags.config.clone() {
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        merge_config(&mut flags, &text, &path.display().to_string())?;
    }
    resolve(command, flags)
}

fn resolve(command: Command, f: Flags) -> Result<RunConfig, CliError> {
    let g = match f.g {
        Some(list) => list,
        None if command == Command::Nonlinear => vec![0.01, 0.1],
        None => vec![0.0],
    };
    if let Some(&bad) = g.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(CliError::Args(format!("--g must be non-negative, got {bad}")));
    }
    if command != Command::Nonlinear && g.len() != 1 {
        return Err(CliError::Args("--g takes a single value for this command".into()));
    }
    let xi = match (f.xi_re, f.xi_im) {
        (None, None) => None,
        (re, im) => Some(Complex64::new(
            finite("xi-re", re)?.unwrap_or(0.0),
            finite("xi-im", im)?.unwrap_or(0.0),
        )),
    };
    let gamma = finite("gamma", f.gamma)?;
    if gamma.is_some_and(|g| g < 0.0) {
        return Err(CliError::Args("--gamma must be non-negative".into()));
    }
    if matches!(command, Command::Solve | Command::Partner) && gamma.is_none() {
        return Err(CliError::Args(format!("{} requires --gamma", command.name())));
    }
    if let Some(s) = f.gamma_step {
        positive("gamma-step", s)?;
    }
    let jobs = f.jobs.unwrap_or(1);
    if jobs == 0 {
        return Err(CliError::Args("--jobs must be at least 1".into()));
    }
    Ok(RunConfig {
        command,
        a: positive("a", f.a.unwrap_or(DEFAULT_SEPARATION))?,
        gamma,
        gamma_from: finite("gamma-from", f.gamma_from)?,
        gamma_to: finite("gamma-to", f.gamma_to)?,
        gamma_step: f.gamma_step,
        g,
        state: f.state.unwrap_or(0) as usize,
        xi,
        step: positive("step", f.step.unwrap_or(1e-3))?,
        tol: positive("tol", f.tol.unwrap_or(1e-10))?,
        target: positive("target", f.target.unwrap_or(DEFAULT_CALIBRATION_TARGET))?,
        out: f.out,
        format: f.format.unwrap_or(Format::Csv),
        emit_plot: f.emit_plot,
        jobs,
    })
}

/// Decimal rendering with 17 significant digits, trailing zeros dropped.
pub fn fmt_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let body = if (-6..17).contains(&exp) {
        if exp < 0 {
            format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
        } else {
            let (int, frac) = digits.split_at(exp as usize + 1);
            format!("{int}.{frac}")
        }
    } else {
        let (lead, rest) = digits.split_at(1);
        let rest = rest.trim_end_matches('0');
        let m = if rest.is_empty() { lead.to_string() } else { format!("{lead}.{rest}") };
        return format!("{}{m}e{exp}", if negative { "-" } else { "" });
    };
    let body = if body.contains('.') {
        body.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        body
    };
    format!("{}{body}", if negative { "-" } else { "" })
}

fn row(values: &[f64]) -> String {
    values.iter().map(|v| fmt_float(*v)).collect::<Vec<_>>().join(",")
}

fn csv(header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&row(&r));
        s.push('\n');
    }
    s
}

fn wavefunction_csv(samples: &[(f64, Complex64)]) -> String {
    csv(WAVEFUNCTION_HEADER, samples.iter().map(|(x, p)| vec![*x, p.re, p.im, p.norm()]))
}

fn potential_csv(samples: &[(f64, Complex64)]) -> String {
    csv(POTENTIAL_HEADER, samples.iter().map(|(x, v)| vec![*x, v.re, v.im]))
}

fn cjson(z: Complex64) -> Value {
    json!({ "re": z.re, "im": z.im })
}

fn wavefunction_json(samples: &[(f64, Complex64)]) -> Value {
    Value::Array(
        samples
            .iter()
            .map(|(x, p)| json!({ "x": x, "re_phi": p.re, "im_phi": p.im, "abs_phi": p.norm() }))
            .collect(),
    )
}

fn potential_json(samples: &[(f64, Complex64)]) -> Value {
    Value::Array(samples.iter().map(|(x, v)| json!({ "x": x, "re_V": v.re, "im_V": v.im })).collect())
}

fn meta(cfg: &RunConfig, command_line: &str) -> Value {
    json!({
        "a": cfg.a,
        "h": cfg.step,
        "tol": cfg.tol,
        "version": env!("CARGO_PKG_VERSION"),
        "command_line": command_line,
    })
}

/// Writes `text` to `path`, or to stdout without a path.
fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(io_err(p)),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(io_err(Path::new("<stdout>"))),
    }
}

fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

/// Plot script for a CSV file; one curve per listed `(column, title)`.
pub fn plot_script(csv_path: &Path, xlabel: &str, columns: &[(usize, &str)]) -> String {
    let name = csv_path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set xlabel '{xlabel}'");
    let curves: Vec<String> = columns
        .iter()
        .map(|(c, t)| format!("'{name}' using 1:{c} with lines title '{t}'"))
        .collect();
    let _ = writeln!(s, "plot {}", curves.join(", \\\n     "));
    s
}

fn write_plot(cfg: &RunConfig, csv_path: Option<&Path>, xlabel: &str, columns: &[(usize, &str)]) -> Result<(), CliError> {
    if !cfg.emit_plot {
        return Ok(());
    }
    let csv_path = csv_path.ok_or_else(|| CliError::Args("--emit-plot needs --out".into()))?;
    let script = sibling(csv_path, "", "gp");
    fs::write(&script, plot_script(csv_path, xlabel, columns)).map_err(io_err(&script))
}

fn gamma_range(cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    if let (Some(g), None, None) = (cfg.gamma, cfg.gamma_from, cfg.gamma_to) {
        return Ok(vec![g]);
    }
    let from = cfg.gamma_from.unwrap_or(0.0);
    let to = cfg.gamma_to.unwrap_or(0.6);
    if from < 0.0 {
        return Err(CliError::Args("--gamma-from must be non-negative".into()));
    }
    Ok(match cfg.gamma_step {
        Some(step) => refined_grid(from, to, step, None),
        None => {
            let gc = find_exceptional_point(cfg.a)?.gamma_crit;
            refined_grid(from, to, DEFAULT_GAMMA_STEP, Some(gc))
        }
    })
}

/// Runs one resolved invocation.
pub fn execute(cfg: &RunConfig, command_line: &str) -> Result<(), CliError> {
    let out = cfg.out.as_deref();
    let pcfg = cfg.pipeline();
    match cfg.command {
        Command::Calibrate => {
            let a = calibrate_separation(cfg.target)?;
            emit(out, &format!("a={}\n", fmt_float(a)))
        }
        Command::Oracle => {
            let gammas = gamma_range(cfg)?;
            let roots = gammas
                .iter()
                .map(|&g| oracle_eigenvalues(g, cfg.a))
                .collect::<crate::Result<Vec<_>>>()?;
            let text = match cfg.format {
                Format::Csv => csv(
                    ORACLE_HEADER,
                    roots.iter().map(|r| {
                        let (e0, e1) = r.energies();
                        vec![r.gamma, r.kappa0.re, r.kappa0.im, r.kappa1.re, r.kappa1.im, e0.re, e0.im, e1.re, e1.im]
                    }),
                ),
                Format::Json => {
                    let rows: Vec<Value> = roots
                        .iter()
                        .map(|r| {
                            let (e0, e1) = r.energies();
                            json!({ "gamma": r.gamma, "kappa0": cjson(r.kappa0), "kappa1": cjson(r.kappa1),
                                    "E0": cjson(e0), "E1": cjson(e1), "degenerate": r.degenerate })
                        })
                        .collect();
                    json_text(&json!({ "meta": meta(cfg, command_line), "rows": rows }))
                }
            };
            emit(out, &text)?;
            write_plot(cfg, out, "gamma", &[(6, "Re E0"), (8, "Re E1")])
        }
        Command::Solve => {
            let gamma = cfg.gamma.expect("checked in resolve");
            let pair = track_pair(cfg.a, &[gamma], &pcfg.shooting)?.remove(0);
            let (s0, s1) = nonlinear_pair(&pair, cfg.a, cfg.g[0], &pcfg.shooting)?;
            let sol = if cfg.state == 0 { s0 } else { s1 };
            let samples = sol.samples();
            eprintln!("E={} kappa={}", fmt_complex(sol.energy()), fmt_complex(sol.kappa));
            let text = match cfg.format {
                Format::Csv => wavefunction_csv(&samples),
                Format::Json => json_text(&json!({
                    "meta": meta(cfg, command_line),
                    "gamma": gamma, "g": cfg.g[0], "state": cfg.state,
                    "kappa": cjson(sol.kappa), "energy": cjson(sol.energy()),
                    "pt_deviation": sol.pt_deviation(),
                    "wavefunction": wavefunction_json(&samples),
                })),
            };
            emit(out, &text)?;
            write_plot(cfg, out, "x", &[(4, "|phi|"), (2, "Re phi"), (3, "Im phi")])
        }
        Command::Ep => {
            let rep = ep_study(cfg.a, &pcfg)?;
            println!("gamma_crit={}", fmt_float(rep.gamma_crit_oracle));
            println!("gamma_crit_shooting={}", fmt_float(rep.gamma_crit_shooting));
            println!("survivor_energy={}", fmt_complex(rep.survivor_energy));
            println!("partner_states={}", rep.partner_state_count);
            let Some(path) = out else { return Ok(()) };
            let samples = rep.survivor.samples();
            let text = match cfg.format {
                Format::Csv => wavefunction_csv(&samples),
                Format::Json => {
                    let mut v = json!({
                        "meta": meta(cfg, command_line),
                        "gamma_crit": rep.gamma_crit_oracle,
                        "gamma_crit_shooting": rep.gamma_crit_shooting,
                        "kappa_ep": cjson(rep.kappa_ep_oracle),
                        "survivor_energy": cjson(rep.survivor_energy),
                        "survivor_pt_deviation": rep.survivor_pt_deviation,
                        "partner_state_count": rep.partner_state_count,
                    });
                    v["wavefunction"] = wavefunction_json(&samples);
                    json_text(&v)
                }
            };
            emit(Some(path), &text)?;
            write_plot(cfg, out, "x", &[(4, "|phi|")])
        }
        Command::Partner => {
            let gamma = cfg.gamma.expect("checked in resolve");
            let rep = remove_state(gamma, cfg.a, cfg.state, cfg.xi, cfg.g[0], &pcfg)?;
            eprintln!(
                "E0_2={} E_id={} V2(0)={}",
                fmt_complex(rep.partner_energy),
                fmt_complex(rep.ideal_energy),
                fmt_complex(rep.v2_at_origin)
            );
            write_partner(cfg, &rep, command_line)
        }
        Command::Scan => {
            let gammas = gamma_range(cfg)?;
            let table = sweep_spectrum(cfg.a, &gammas, cfg.state, &pcfg)?;
            let text = match cfg.format {
                Format::Csv => csv(
                    SPECTRUM_HEADER,
                    table.rows.iter().map(|r| {
                        vec![r.gamma, r.e0_1.re, r.e0_1.im, r.e1_1.re, r.e1_1.im, r.e0_2.re, r.e0_2.im]
                    }),
                ),
                Format::Json => {
                    let rows: Vec<Value> = table
                        .rows
                        .iter()
                        .map(|r| {
                            json!({ "gamma": r.gamma, "E0_1": cjson(r.e0_1), "E1_1": cjson(r.e1_1),
                                    "E0_2": cjson(r.e0_2), "gamma_crit_flag": r.gamma_crit_flag })
                        })
                        .collect();
                    json_text(&json!({ "meta": meta(cfg, command_line), "removed_index": table.removed_index,
                                       "gamma_crit": table.gamma_crit, "rows": rows }))
                }
            };
            emit(out, &text)?;
            write_plot(cfg, out, "gamma", &[(2, "Re E0_1"), (4, "Re E1_1"), (6, "Re E0_2"), (7, "Im E0_2")])
        }
        Command::Nonlinear => {
            let gammas = match (cfg.gamma, cfg.gamma_from, cfg.gamma_to) {
                (Some(g), None, None) => vec![g],
                _ => refined_grid(
                    cfg.gamma_from.unwrap_or(0.0),
                    cfg.gamma_to.unwrap_or(0.35),
                    cfg.gamma_step.unwrap_or(0.05),
                    None,
                ),
            };
            let rows = nonlinear_comparison(&cfg.g, cfg.a, &gammas, &pcfg)?;
            for r in rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("g={} gamma={}: {}", fmt_float(r.g), fmt_float(r.gamma), r.error.as_deref().unwrap_or(""));
            }
            let nan = Complex64::new(f64::NAN, f64::NAN);
            let text = match cfg.format {
                Format::Csv => csv(
                    NONLINEAR_HEADER,
                    rows.iter().map(|r| {
                        let (e2, eid) = (r.e0_2.unwrap_or(nan), r.e_id.unwrap_or(nan));
                        vec![r.g, r.gamma, e2.re, e2.im, eid.re, eid.im, r.deviation.unwrap_or(f64::NAN)]
                    }),
                ),
                Format::Json => {
                    let rows: Vec<Value> = rows
                        .iter()
                        .map(|r| {
                            json!({ "g": r.g, "gamma": r.gamma, "E0_2": r.e0_2.map(cjson), "Eid": r.e_id.map(cjson),
                                    "deviation": r.deviation, "error": r.error })
                        })
                        .collect();
                    json_text(&json!({ "meta": meta(cfg, command_line), "rows": rows }))
                }
            };
            emit(out, &text)?;
            write_plot(cfg, out, "gamma", &[(3, "Re E0_2"), (5, "Re Eid")])
        }
    }
}

fn write_partner(cfg: &RunConfig, rep: &RemovalReport, command_line: &str) -> Result<(), CliError> {
    let out = cfg.out.as_deref();
    let v2 = rep.v2_samples(SAMPLE_EXTENT, SAMPLE_STEP);
    let phi = rep.partner_state.samples();
    match cfg.format {
        Format::Json => {
            let xi_constants: Option<Vec<Value>> = rep.xi_constants.as_ref().map(|c| {
                c.iter()
                    .map(|x| match x {
                        XiConstant::Finite(z) => cjson(*z),
                        XiConstant::NegInfinity => json!("-inf"),
                        XiConstant::PosInfinity => json!("+inf"),
                    })
                    .collect()
            });
            let mut v = json!({
                "meta": meta(cfg, command_line),
                "removed_index": rep.removed_index,
                "gamma": rep.gamma,
                "g": rep.g,
                "xi_left": rep.xi_left.map(cjson),
                "xi_constants": xi_constants,
                "E0_1": cjson(rep.original_energies[0]),
                "E1_1": cjson(rep.original_energies[1]),
                "partner_energy": cjson(rep.partner_energy),
                "ideal_energy": cjson(rep.ideal_energy),
                "extra_states": rep.extra_states.iter().map(|z| cjson(*z)).collect::<Vec<_>>(),
                "V2_at_origin": cjson(rep.v2_at_origin),
                "factorization_residual": rep.factorization_residual,
                "poles": rep.poles,
            });
            v["W"] = Value::Array(
                rep.w_samples(SAMPLE_EXTENT, SAMPLE_STEP)
                    .iter()
                    .map(|(x, w)| json!({ "x": x, "re_W": w.re, "im_W": w.im }))
                    .collect(),
            );
            v["V2"] = potential_json(&v2);
            v["wavefunction"] = wavefunction_json(&phi);
            emit(out, &json_text(&v))
        }
        Format::Csv => {
            emit(out, &potential_csv(&v2))?;
            let Some(path) = out else { return Ok(()) };
            let phi_path = sibling(path, "_wavefunction", "csv");
            emit(Some(&phi_path), &wavefunction_csv(&phi))?;
            write_plot(cfg, out, "x", &[(2, "Re V2"), (3, "Im V2")])
        }
    }
}

fn fmt_complex(z: Complex64) -> String {
    format!("{}{}{}i", fmt_float(z.re), if z.im < 0.0 { "" } else { "+" }, fmt_float(z.im))
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

/// Parses and runs; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let command_line = argv.iter().map(|a| a.to_string_lossy()).collect::<Vec<_>>().join(" ");
    if let Err(e) = Cli::try_parse_from(&argv) {
        use clap::error::ErrorKind;
        if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
            let _ = e.print();
            return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 };
        }
    }
    let result = parse_args(&argv).and_then(|cfg| execute(&cfg, &command_line));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        std::iter::once("ptsusy".to_string()).chain(s.split_whitespace().map(String::from)).collect()
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_float(0.0), "0");
        assert_eq!(fmt_float(-0.0), "0");
        assert_eq!(fmt_float(0.5), "0.5");
        assert_eq!(fmt_float(-0.39201516071), "-0.39201516070999998");
        assert_eq!(fmt_float(1.0 / 3.0), "0.33333333333333331");
        assert_eq!(fmt_float(2.5e-20), "2.4999999999999999e-20");
        assert_eq!(fmt_float(-1e30), "-1e30");
        assert_eq!(fmt_float(12.0), "12");
        for x in [0.1, 1.0 / 7.0, -3.3e-9, 6.02e23, 0.3843] {
            assert_eq!(fmt_float(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn defaults() {
        let c = parse_args(args("scan")).unwrap();
        assert_eq!(c.a, DEFAULT_SEPARATION);
        assert_eq!(c.step, 1e-3);
        assert_eq!(c.tol, 1e-10);
        assert_eq!(c.jobs, 1);
        assert_eq!(c.format, Format::Csv);
        assert_eq!(c.g, vec![0.0]);
        assert_eq!(parse_args(args("nonlinear")).unwrap().g, vec![0.01, 0.1]);
    }

    #[test]
    fn argument_errors_exit_with_two() {
        for bad in ["scan --bogus 1", "partner --state 0", "solve --gamma 0.1 --state 2", "scan --a -1", "scan --jobs 0", "solve --gamma 0 --g 0.1,0.2"] {
            let e = parse_args(args(bad)).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{bad}");
        }
    }

    #[test]
    fn config_lines_and_precedence() {
        let mut f = Flags {
            gamma: Some(0.3),
            ..Flags::default()
        };
        merge_config(&mut f, "# comment\ngamma = 0.1\n\nxi_re=-2.34 # trailing\nformat=json\nemit-plot=true\n", "c").unwrap();
        assert_eq!(f.gamma, Some(0.3));
        assert_eq!(f.xi_re, Some(-2.34));
        assert_eq!(f.format, Some(Format::Json));
        assert!(f.emit_plot);

        let e = merge_config(&mut Flags::default(), "a=2.2\nnonsense\n", "c").unwrap_err();
        assert!(matches!(e, CliError::Config { line: 2, .. }));
        let e = merge_config(&mut Flags::default(), "a=2.2\n\nstep=abc\n", "c").unwrap_err();
        assert!(matches!(e, CliError::Config { line: 3, .. }));
        assert!(e.to_string().starts_with("c:3:"));
    }

    #[test]
    fn empty_range_gives_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("s.csv");
        let argv = args(&format!("scan --gamma-from 0.3 --gamma-to 0.2 --gamma-step 0.01 --out {}", out.display()));
        assert_eq!(run(argv), 0);
        assert_eq!(fs::read_to_string(out).unwrap(), format!("{SPECTRUM_HEADER}\n"));
    }

    #[test]
    fn plot_script_references_columns() {
        let s = plot_script(Path::new("/tmp/spectrum.csv"), "gamma", &[(2, "Re E0_1"), (6, "Re E0_2")]);
        assert!(s.contains("'spectrum.csv' using 1:2"));
        assert!(s.contains("using 1:6"));
        assert!(s.contains("separator ','"));
    }
}
