use std::fmt::Write as _;

use clap::Subcommand;
use nalgebra::{DMatrix, DVector};
use serde_json::json;

use super::{Context, Payload, Target, EXIT_INCONCLUSIVE, EXIT_OK};
use crate::dyson::SpectrumModel;
use crate::error::{Error, Result};
use crate::mc::{
    annealed_integral_mc, profile_dirichlet_check, semicircle_spike_spectrum, spherical_integral_is,
    spherical_integral_mc, tail_estimate, tilted_outlier_check, EntryDistribution,
};
use crate::oracles;
use crate::profile::VarianceProfile;
use crate::ratefn::report::format_number;
use crate::ratefn::{eval_j, eval_k, outlier_equation_z, rate_function, RateOptions};
use crate::simplex::SimplexVector;

#[derive(Debug, Subcommand)]
pub(crate) enum McCommand {
    /// Frequency of `λ₁ ≥ x` against the rate function.
    Tail {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        x: f64,
        #[arg(long = "N", alias = "n", value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value = "gaussian")]
        dist: String,
    },
    /// Spherical integral of a matrix with semicircle spectrum and one
    /// outlier, against `J`.
    Spherical {
        #[command(flatten)]
        target: Target,
        #[arg(long, allow_negative_numbers = true)]
        theta: f64,
        #[arg(long = "N", alias = "n", default_value_t = 150)]
        n: usize,
        #[arg(long, default_value_t = 3.0)]
        top: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Windowed annealed spherical integral against `K`.
    Annealed {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        theta: f64,
        #[arg(long = "N", alias = "n", default_value_t = 200)]
        n: usize,
        /// Window centre; the profile weights by default.
        #[arg(long, value_delimiter = ',')]
        phi: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Top eigenvalue of the tilted ensemble against `z(θ*) = x`.
    Tilt {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        x: f64,
        /// Tilt direction; the profile weights by default.
        #[arg(long, value_delimiter = ',')]
        psi: Vec<f64>,
        #[arg(long = "N", alias = "n", value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value = "gaussian")]
        dist: String,
    },
    /// Moments of the block profile of a uniform unit vector.
    Dirichlet {
        #[command(flatten)]
        target: Target,
        #[arg(long = "N", alias = "n")]
        n: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
}

impl McCommand {
    pub(crate) fn target(&self) -> &Target {
        match self {
            Self::Tail { target, .. }
            | Self::Spherical { target, .. }
            | Self::Annealed { target, .. }
            | Self::Tilt { target, .. }
            | Self::Dirichlet { target, .. } => target,
        }
    }
}

fn simplex_or_weights(values: &[f64], profile: &VarianceProfile) -> Result<SimplexVector> {
    if values.is_empty() {
        SimplexVector::new(profile.weights().to_vec())
    } else {
        SimplexVector::new(values.to_vec())
    }
}

fn csv_list(v: &[f64]) -> String {
    v.iter().map(|x| format_number(*x)).collect::<Vec<_>>().join(";")
}

pub(crate) fn run(cmd: &McCommand, profile: &VarianceProfile, ctx: &mut Context) -> Result<(&'static str, Payload)> {
    let seed = ctx.seed;
    match cmd {
        McCommand::Tail { x, n, samples, dist, .. } => {
            let dist: EntryDistribution = dist.parse()?;
            ctx.options.insert("x".into(), json!(x));
            ctx.options.insert("N".into(), json!(n));
            ctx.options.insert("samples".into(), json!(samples));
            ctx.options.insert("dist".into(), json!(dist.name()));
            let model = SpectrumModel::new(profile.clone())?;
            let reference = rate_function(&model, *x, &RateOptions { seed, ..RateOptions::default() })?.rate;
            let goe = if profile.blocks() == 1 && profile.sigma_at(0, 0) == 1.0 {
                oracles::goe_rate(*x).ok()
            } else {
                None
            };
            let rows = tail_estimate(profile, *x, n, *samples, dist, seed)?;
            let mut csv = String::from("N,samples,hits,p_hat,rate,rate_ci_low,rate_ci_high,one_sided,reference_I\n");
            for r in &rows {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{}",
                    r.n,
                    r.samples,
                    r.hits,
                    format_number(r.p_hat),
                    format_number(r.rate),
                    format_number(r.rate_ci_low),
                    format_number(r.rate_ci_high),
                    r.one_sided,
                    format_number(reference)
                );
            }
            let exit = if rows.iter().any(|r| r.one_sided) { EXIT_INCONCLUSIVE } else { EXIT_OK };
            let json = json!({
                "rows": rows,
                "reference_I": format_number(reference),
                "reference_goe": goe,
                "r_edge": model.r_edge(),
            });
            Ok(("tail", Payload { json, csv, exit }))
        }
        McCommand::Spherical { theta, n, top, samples, .. } => {
            ctx.options.insert("theta".into(), json!(theta));
            ctx.options.insert("N".into(), json!(n));
            ctx.options.insert("top".into(), json!(top));
            ctx.options.insert("samples".into(), json!(samples));
            if *n < 3 || !(*top > 2.0) {
                return Err(Error::Config("spherical needs N ≥ 3 and an outlier above 2".into()));
            }
            let m = DMatrix::from_diagonal(&DVector::from_vec(semicircle_spike_spectrum(*n, *top)));
            let plain = spherical_integral_mc(&m, *theta, *samples, seed)?;
            let is = spherical_integral_is(&m, *theta, *samples, seed)?;
            let sc = SpectrumModel::new(VarianceProfile::constant(1.0)?)?;
            let reference = eval_j(&sc, *top, *theta)?;
            let mut csv = String::from("estimator,theta,N,samples,estimate,std_error,reference_J\n");
            for (name, e) in [("plain", &plain), ("importance", &is)] {
                let _ = writeln!(
                    csv,
                    "{name},{},{n},{samples},{},{},{}",
                    format_number(*theta),
                    format_number(e.estimate),
                    format_number(e.std_error),
                    format_number(reference)
                );
            }
            let json = json!({ "plain": plain, "importance": is, "reference_J": reference });
            Ok(("spherical", Payload::ok(json, csv)))
        }
        McCommand::Annealed { theta, n, phi, delta, samples, .. } => {
            let phi = simplex_or_weights(phi, profile)?;
            ctx.options.insert("theta".into(), json!(theta));
            ctx.options.insert("N".into(), json!(n));
            ctx.options.insert("phi".into(), json!(phi.as_slice()));
            ctx.options.insert("delta".into(), json!(delta));
            ctx.options.insert("samples".into(), json!(samples));
            let reference = eval_k(profile, *theta, &phi)?;
            match annealed_integral_mc(profile, *theta, &phi, *delta, *n, *samples, seed) {
                Ok(e) => {
                    let csv = format!(
                        "theta,N,delta,samples,hits,estimate,std_error,reference_K\n{},{n},{},{samples},{},{},{},{}\n",
                        format_number(*theta),
                        format_number(*delta),
                        e.hits,
                        format_number(e.estimate),
                        format_number(e.std_error),
                        format_number(reference)
                    );
                    Ok(("annealed", Payload::ok(json!({ "estimate": e, "reference_K": reference }), csv)))
                }
                Err(Error::Inconclusive(msg)) => {
                    let csv = format!("theta,N,delta,samples,hits,estimate,std_error,reference_K\n{},{n},{},{samples},0,nan,nan,{}\n# note: {msg}\n", format_number(*theta), format_number(*delta), format_number(reference));
                    let json = json!({ "estimate": null, "hits": 0, "note": msg, "reference_K": reference });
                    Ok(("annealed", Payload { json, csv, exit: EXIT_INCONCLUSIVE }))
                }
                Err(e) => Err(e),
            }
        }
        McCommand::Tilt { x, psi, n, samples, dist, .. } => {
            let dist: EntryDistribution = dist.parse()?;
            let psi = simplex_or_weights(psi, profile)?;
            ctx.options.insert("x".into(), json!(x));
            ctx.options.insert("psi".into(), json!(psi.as_slice()));
            ctx.options.insert("N".into(), json!(n));
            ctx.options.insert("samples".into(), json!(samples));
            ctx.options.insert("dist".into(), json!(dist.name()));
            let model = SpectrumModel::new(profile.clone())?;
            let mut reports = Vec::with_capacity(n.len());
            let mut csv = String::from("N,samples,x,theta_star,z_theta,lambda1_mean,lambda1_std,rho_v1_mean,phi\n");
            for &size in n {
                let r = tilted_outlier_check(&model, *x, &psi, size, *samples, dist, seed)?;
                let z = outlier_equation_z(&model, r.theta, *x, &psi)?;
                let _ = writeln!(
                    csv,
                    "{size},{samples},{},{},{},{},{},{},{}",
                    format_number(*x),
                    format_number(r.theta),
                    format_number(z),
                    format_number(r.lambda1_mean),
                    format_number(r.lambda1_std),
                    csv_list(&r.rho_v1_mean),
                    csv_list(&r.phi)
                );
                reports.push(json!({ "report": r, "z_theta": z }));
            }
            Ok(("tilt", Payload::ok(json!({ "rows": reports }), csv)))
        }
        McCommand::Dirichlet { n, samples, .. } => {
            ctx.options.insert("N".into(), json!(n));
            ctx.options.insert("samples".into(), json!(samples));
            let d = profile_dirichlet_check(profile, *n, *samples, seed)?;
            let p = d.mean.len();
            let mut csv = String::from("moment,k,l,empirical,expected,abs_deviation\n");
            for k in 0..p {
                let _ = writeln!(
                    csv,
                    "mean,{},,{},{},{}",
                    k + 1,
                    format_number(d.mean[k]),
                    format_number(d.expected_mean[k]),
                    format_number((d.mean[k] - d.expected_mean[k]).abs())
                );
            }
            for k in 0..p {
                for l in 0..p {
                    let (a, b) = (d.covariance[k * p + l], d.expected_covariance[k * p + l]);
                    let _ = writeln!(
                        csv,
                        "cov,{},{},{},{},{}",
                        k + 1,
                        l + 1,
                        format_number(a),
                        format_number(b),
                        format_number((a - b).abs())
                    );
                }
            }
            let _ = writeln!(csv, "# max_abs_deviation={}", format_number(d.max_abs_deviation));
            Ok(("dirichlet", Payload::ok(serde_json::to_value(&d).map_err(|e| Error::Config(e.to_string()))?, csv)))
        }
    }
}
