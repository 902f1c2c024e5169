//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure
//! (including failed validation checks), 4 statistically inconclusive.

mod mc_cmd;
mod validate;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::dyson::{spectral_measure, support_edge_with, EdgeOptions, SpectrumModel, DEFAULT_ETA_SCHEDULE};
use crate::error::{Error, Result};
use crate::profile::{load_profile_file, VarianceProfile};
use crate::ratefn::{rate_curve_csv, rate_function, RateOptions};

pub use validate::{run_suite, Check, Suite, SuiteReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_INCONCLUSIVE: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "wigner-ldp", version, about = "Spectral edge and large-deviation rates of Wigner matrices with a variance profile")]
struct Cli {
    /// Profile config file (TOML) or a built-in name: constant, wishart,
    /// two-block, block-third.
    #[arg(long, global = true)]
    profile: Option<String>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Size of the worker pool; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the payload here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Target {
    /// Positional alternative to `--profile`.
    #[arg(value_name = "PROFILE")]
    profile: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Support edges of the limiting measure.
    Edge {
        #[command(flatten)]
        target: Target,
    },
    /// Density of the limiting measure and of its block parts.
    Density {
        #[command(flatten)]
        target: Target,
        #[arg(long, allow_negative_numbers = true)]
        xmin: f64,
        #[arg(long, allow_negative_numbers = true)]
        xmax: f64,
        #[arg(long, default_value_t = 501, allow_negative_numbers = true)]
        points: i64,
        /// Comma-separated regularization schedule.
        #[arg(long, value_delimiter = ',')]
        eta: Vec<f64>,
    },
    /// Rate function at each requested point.
    Rate {
        #[command(flatten)]
        target: Target,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        x: Vec<f64>,
        #[arg(long, default_value_t = 8)]
        starts: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Run a validation suite and report each check.
    Validate {
        #[command(flatten)]
        target: Target,
        #[arg(long, value_enum)]
        suite: Suite,
    },
    /// Monte Carlo estimators with their analytic references.
    Mc {
        #[command(subcommand)]
        command: mc_cmd::McCommand,
    },
}

/// Embedded in every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub profile: String,
    pub options: BTreeMap<String, Value>,
    pub seed: u64,
    pub version: String,
}

pub(crate) struct Payload {
    pub json: Value,
    pub csv: String,
    pub exit: i32,
}

impl Payload {
    pub(crate) fn ok(json: Value, csv: String) -> Self {
        Self { json, csv, exit: EXIT_OK }
    }
}

pub(crate) struct Context {
    pub seed: u64,
    pub options: BTreeMap<String, Value>,
}

fn exit_code(e: &Error) -> i32 {
    if e.is_usage() {
        EXIT_USAGE
    } else if matches!(e, Error::Inconclusive(_)) {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_NUMERIC
    }
}

/// Resolves a profile argument: an existing file is parsed as a config,
/// anything else must be a built-in name.
pub fn resolve_profile(arg: &str) -> Result<VarianceProfile> {
    let path = Path::new(arg);
    if path.is_file() {
        return load_profile_file(path)?.into_piecewise();
    }
    VarianceProfile::named(arg).map_err(|_| {
        Error::Config(format!(
            "'{arg}' is neither a readable profile file nor one of {}",
            VarianceProfile::NAMES.join(", ")
        ))
    })
}

fn pick_profile(global: &Option<String>, target: &Target, default: Option<&str>) -> Result<VarianceProfile> {
    match target.profile.as_ref().or(global.as_ref()).map(String::as_str).or(default) {
        Some(s) => resolve_profile(s),
        None => Err(Error::Config("no profile given (use --profile or a positional name)".into())),
    }
}

fn with_footer(mut csv: String, footer: &[(String, f64)]) -> String {
    for (k, v) in footer {
        let _ = writeln!(csv, "# {k}={v:.12e}");
    }
    csv
}

fn cmd_edge(profile: &VarianceProfile) -> Result<Payload> {
    let opts = EdgeOptions::default();
    let (r, sol) = support_edge_with(profile, &opts)?;
    let tol = opts.tol_factor * (1.0 + profile.max_variance());
    let json = json!({
        "l_edge": -r,
        "r_edge": r,
        "stability_at_edge": sol.stability,
        "tolerances": {
            "bisection": tol,
            "density_threshold": opts.density_threshold,
        },
    });
    let csv = format!("l_edge,r_edge,bisection_tol\n{:.12e},{r:.12e},{tol:.3e}\n", -r);
    Ok(Payload::ok(json, csv))
}

fn cmd_density(profile: &VarianceProfile, xmin: f64, xmax: f64, points: i64, eta: &[f64]) -> Result<Payload> {
    if points < 2 {
        return Err(Error::Config(format!("points must be at least 2, got {points}")));
    }
    let schedule: Vec<f64> = if eta.is_empty() { DEFAULT_ETA_SCHEDULE.to_vec() } else { eta.to_vec() };
    let m = spectral_measure(profile, xmin, xmax, points as usize, &schedule)?;
    let w = m.quadrature_weights();
    let total: f64 = m.density.iter().zip(&w).map(|(d, w)| d * w).sum();
    let mut footer = vec![("total_mass".to_string(), total)];
    for (k, b) in m.block_densities.iter().enumerate() {
        let mass: f64 = b.iter().zip(&w).map(|(d, w)| d * w).sum();
        footer.push((format!("block_mass_{}", k + 1), mass));
    }
    let mut json = serde_json::to_value(&m).map_err(|e| Error::Config(e.to_string()))?;
    json["total_mass"] = json!(total);
    let csv = with_footer(m.to_csv(), &footer);
    Ok(Payload::ok(json, csv))
}

fn cmd_rate(profile: VarianceProfile, xs: &[f64], starts: usize, tol: f64, seed: u64) -> Result<Payload> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tol must be positive, got {tol}")));
    }
    let model = SpectrumModel::new(profile)?;
    let opts = RateOptions { starts, tol, seed, ..RateOptions::default() };
    let mut reports = Vec::with_capacity(xs.len());
    let mut notes = Vec::new();
    for &x in xs {
        let r = rate_function(&model, x, &opts)?;
        if r.rate.is_infinite() {
            notes.push(format!("x = {x} lies below the edge {}", model.r_edge()));
        }
        reports.push(r);
    }
    let json = json!({ "r_edge": model.r_edge(), "rows": reports, "notes": notes });
    let mut csv = rate_curve_csv(&reports);
    for n in &notes {
        let _ = writeln!(csv, "# note: {n}");
    }
    Ok(Payload::ok(json, csv))
}

fn dispatch(cli: &Cli, ctx: &mut Context) -> Result<(String, String, Payload)> {
    let g = &cli.profile;
    match &cli.command {
        Command::Edge { target } => {
            let p = pick_profile(g, target, None)?;
            Ok(("edge".into(), p.label().into(), cmd_edge(&p)?))
        }
        Command::Density { target, xmin, xmax, points, eta } => {
            ctx.options.insert("xmin".into(), json!(xmin));
            ctx.options.insert("xmax".into(), json!(xmax));
            ctx.options.insert("points".into(), json!(points));
            ctx.options.insert("eta".into(), json!(eta));
            let p = pick_profile(g, target, None)?;
            Ok(("density".into(), p.label().into(), cmd_density(&p, *xmin, *xmax, *points, eta)?))
        }
        Command::Rate { target, x, starts, tol } => {
            ctx.options.insert("x".into(), json!(x));
            ctx.options.insert("starts".into(), json!(starts));
            ctx.options.insert("tol".into(), json!(tol));
            let p = pick_profile(g, target, None)?;
            let label = p.label().to_string();
            Ok(("rate".into(), label, cmd_rate(p, x, *starts, *tol, ctx.seed)?))
        }
        Command::Validate { target, suite } => {
            ctx.options.insert("suite".into(), json!(suite.name()));
            let p = pick_profile(g, target, Some("constant"))?;
            let report = run_suite(*suite, &p, ctx.seed)?;
            let exit = if report.pass { EXIT_OK } else { EXIT_NUMERIC };
            let csv = report.to_csv();
            let json = serde_json::to_value(&report).map_err(|e| Error::Config(e.to_string()))?;
            Ok(("validate".into(), p.label().into(), Payload { json, csv, exit }))
        }
        Command::Mc { command } => {
            let target = command.target();
            let p = pick_profile(g, target, Some("constant"))?;
            let (name, payload) = mc_cmd::run(command, &p, ctx)?;
            Ok((format!("mc {name}"), p.label().into(), payload))
        }
    }
}

fn emit(cli: &Cli, manifest: &RunManifest, payload: &Payload, stdout: &mut dyn Write) -> Result<()> {
    let text = match cli.format {
        Format::Json => {
            let doc = json!({ "manifest": manifest, "result": payload.json });
            let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::Config(e.to_string()))?;
            s.push('\n');
            s
        }
        Format::Csv => {
            let m = serde_json::to_string(manifest).map_err(|e| Error::Config(e.to_string()))?;
            format!("# manifest: {m}\n{}", payload.csv)
        }
    };
    match &cli.out {
        Some(path) => std::fs::write(path, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Wall time goes to `stderr` only, so the
/// payload is reproducible byte for byte.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = write!(stdout, "{}", e.render());
                    return EXIT_OK;
                }
                _ => EXIT_USAGE,
            };
            let _ = write!(stderr, "{}", e.render());
            return code;
        }
    };
    let start = Instant::now();
    let mut ctx = Context { seed: cli.seed, options: BTreeMap::new() };
    let outcome = match cli.threads {
        Some(0) => Err(Error::Config("--threads must be positive".into())),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| dispatch(&cli, &mut ctx)),
            Err(e) => Err(Error::Config(format!("cannot build thread pool: {e}"))),
        },
        None => dispatch(&cli, &mut ctx),
    };
    let (command, profile, payload) = match outcome {
        Ok(v) => v,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return exit_code(&e);
        }
    };
    let manifest = RunManifest {
        command,
        profile,
        options: ctx.options,
        seed: cli.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    if let Err(e) = emit(&cli, &manifest, &payload, stdout) {
        let _ = writeln!(stderr, "error: {e}");
        return exit_code(&e);
    }
    let _ = writeln!(stderr, "wall time: {:.3} s", start.elapsed().as_secs_f64());
    payload.exit
}
