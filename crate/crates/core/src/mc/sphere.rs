//! Estimators built on uniform points of the sphere: spherical and annealed
//! integrals, and the Dirichlet law of the block profile `ρ(u)`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::{rho, sample_rng, Stream};
use crate::error::{Error, Result};
use crate::profile::{sigma_form_raw, VarianceProfile};
use crate::ratefn::report::finite_or_string;
use crate::simplex::SimplexVector;

const BATCHES: usize = 10;

#[derive(Debug, Clone, Serialize)]
pub struct SphericalEstimate {
    #[serde(serialize_with = "finite_or_string")]
    pub estimate: f64,
    /// Jackknife standard error over ten sub-batches.
    #[serde(serialize_with = "finite_or_string")]
    pub std_error: f64,
    pub samples: usize,
    /// Samples contributing a nonzero term (window hits for the annealed
    /// estimator, all samples otherwise).
    pub hits: usize,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `(1/N) log mean e^{terms}` with a leave-one-batch-out jackknife error.
/// Terms must be in sample order so the result is schedule independent.
fn log_mean_with_jackknife(terms: &[f64], n: usize) -> (f64, f64) {
    let s = terms.len();
    let scale = 1.0 / n as f64;
    let full = scale * (log_sum_exp(terms) - (s as f64).ln());
    let size = s / BATCHES;
    if size == 0 {
        return (full, f64::NAN);
    }
    let batch_lse: Vec<f64> = (0..BATCHES)
        .map(|b| {
            let end = if b + 1 == BATCHES { s } else { (b + 1) * size };
            log_sum_exp(&terms[b * size..end])
        })
        .collect();
    let counts: Vec<usize> = (0..BATCHES)
        .map(|b| if b + 1 == BATCHES { s - b * size } else { size })
        .collect();
    let leave_out: Vec<f64> = (0..BATCHES)
        .map(|b| {
            let others: Vec<f64> = (0..BATCHES).filter(|&c| c != b).map(|c| batch_lse[c]).collect();
            scale * (log_sum_exp(&others) - ((s - counts[b]) as f64).ln())
        })
        .collect();
    let finite: Vec<f64> = leave_out.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < BATCHES {
        return (full, f64::INFINITY);
    }
    let mean = finite.iter().sum::<f64>() / BATCHES as f64;
    let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() * (BATCHES - 1) as f64 / BATCHES as f64;
    (full, var.sqrt())
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < 1000 {
        return Err(Error::OutOfRange(format!("need at least 1000 sphere samples, got {samples}")));
    }
    Ok(())
}

fn spectrum_of(matrix: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = matrix.nrows();
    if n < 2 || matrix.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: matrix.ncols() });
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::OutOfRange("matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::try_new(matrix.clone(), 1e-15, 0)
        .ok_or_else(|| Error::Linalg("symmetric eigensolver did not converge".into()))?;
    Ok(eig.eigenvalues.iter().copied().collect())
}

fn gaussian_vector<R: Rng>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Plain Monte Carlo for `(1/N) log ∫ e^{θN⟨u,Mu⟩} du` over the uniform
/// sphere. The point is drawn in the eigenbasis of `M`, which leaves the
/// uniform law unchanged.
pub fn spherical_integral_mc(matrix: &DMatrix<f64>, theta: f64, samples: usize, seed: u64) -> Result<SphericalEstimate> {
    check_samples(samples)?;
    let lambda = spectrum_of(matrix)?;
    let n = lambda.len();
    if theta == 0.0 || lambda.iter().all(|l| *l == 0.0) {
        return Ok(SphericalEstimate { estimate: 0.0, std_error: 0.0, samples, hits: samples });
    }
    let nf = n as f64;
    let terms: Vec<f64> = (0..samples)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |g, i| {
                let mut rng = sample_rng(seed, Stream::Sphere, n as u64, i as u64);
                gaussian_vector(&mut rng, g);
                let norm2: f64 = g.iter().map(|v| v * v).sum();
                let q: f64 = g.iter().zip(&lambda).map(|(v, l)| l * v * v).sum::<f64>() / norm2;
                theta * nf * q
            },
        )
        .collect();
    let (estimate, std_error) = log_mean_with_jackknife(&terms, n);
    Ok(SphericalEstimate { estimate, std_error, samples, hits: samples })
}

/// Importance-sampled version of [`spherical_integral_mc`].
///
/// Points are `u = g/|g|` with `g ~ N(0, diag(κ − 2θλ_i)^{-1})` in the
/// eigenbasis, an angular central Gaussian whose density relative to the
/// uniform law is `Π a_i^{1/2} (Σ a_i u_i²)^{-N/2}`. `κ` solves
/// `(1/N) Σ 1/(κ − 2θλ_i) = 1`, which matches the tilt of the integrand at
/// the saddle point. For `θ < 0` the spectrum is reflected.
pub fn spherical_integral_is(matrix: &DMatrix<f64>, theta: f64, samples: usize, seed: u64) -> Result<SphericalEstimate> {
    check_samples(samples)?;
    let mut lambda = spectrum_of(matrix)?;
    let n = lambda.len();
    if theta == 0.0 || lambda.iter().all(|l| *l == 0.0) {
        return Ok(SphericalEstimate { estimate: 0.0, std_error: 0.0, samples, hits: samples });
    }
    let t = theta.abs();
    if theta < 0.0 {
        lambda.iter_mut().for_each(|l| *l = -*l);
    }
    let nf = n as f64;
    let top = lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean_inv = |kappa: f64| lambda.iter().map(|l| 1.0 / (kappa - 2.0 * t * l)).sum::<f64>() / nf;
    // mean_inv decreases from +∞ at κ = 2tλ_max to 0
    let mut lo = 2.0 * t * top;
    let mut hi = lo + 1.0;
    while mean_inv(hi) > 1.0 {
        hi = lo + 2.0 * (hi - lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mean_inv(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let kappa = hi;
    let a: Vec<f64> = lambda.iter().map(|l| kappa - 2.0 * t * l).collect();
    let sd: Vec<f64> = a.iter().map(|v| 1.0 / v.sqrt()).collect();
    let half_log_det: f64 = 0.5 * a.iter().map(|v| v.ln()).sum::<f64>();
    let terms: Vec<f64> = (0..samples)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |g, i| {
                let mut rng = sample_rng(seed, Stream::Sphere, (n as u64) | (1 << 40), i as u64);
                gaussian_vector(&mut rng, g);
                let mut norm2 = 0.0;
                let mut quad = 0.0;
                for ((gi, s), l) in g.iter_mut().zip(&sd).zip(&lambda) {
                    *gi *= s;
                    norm2 += *gi * *gi;
                    quad += l * *gi * *gi;
                }
                let q = quad / norm2;
                // log of integrand over proposal density
                t * nf * q - half_log_det + 0.5 * nf * (kappa - 2.0 * t * q).ln()
            },
        )
        .collect();
    let (estimate, std_error) = log_mean_with_jackknife(&terms, n);
    Ok(SphericalEstimate { estimate, std_error, samples, hits: samples })
}

/// Eigenvalues of a deterministic matrix whose spectrum is the semicircle
/// quantiles at `(i − ½)/(N − 1)` plus one eigenvalue `top`.
pub fn semicircle_spike_spectrum(n: usize, top: f64) -> Vec<f64> {
    let cdf = |x: f64| 0.5 + (x * (4.0 - x * x).max(0.0).sqrt() / 4.0 + (x / 2.0).clamp(-1.0, 1.0).asin()) / std::f64::consts::PI;
    let mut out = Vec::with_capacity(n);
    for i in 0..n - 1 {
        let target = (i as f64 + 0.5) / (n - 1) as f64;
        let (mut lo, mut hi) = (-2.0f64, 2.0f64);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(0.5 * (lo + hi));
    }
    out.push(top);
    out
}

/// `(1/N) log` of the mean of `1{‖ρ(u) − φ‖∞ ≤ δ} e^{Nθ²⟨ρ(u),Sρ(u)⟩}` over
/// uniform `u`, the Gaussian-entry annealed spherical integral restricted to
/// a window around `φ`.
pub fn annealed_integral_mc(
    profile: &VarianceProfile,
    theta: f64,
    phi_target: &SimplexVector,
    delta: f64,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<SphericalEstimate> {
    check_samples(samples)?;
    let p = profile.blocks();
    if phi_target.len() != p {
        return Err(Error::DimensionMismatch { expected: p, got: phi_target.len() });
    }
    if !(delta > 0.0) {
        return Err(Error::OutOfRange(format!("window half-width must be positive, got {delta}")));
    }
    if n < 2 {
        return Err(Error::OutOfRange(format!("matrix size must be at least 2, got {n}")));
    }
    let map = profile.block_map(n);
    let nf = n as f64;
    let terms: Vec<f64> = (0..samples)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |g, i| {
                let mut rng = sample_rng(seed, Stream::Sphere, (n as u64) | (2 << 40), i as u64);
                gaussian_vector(&mut rng, g);
                let r = rho(g, &map, p);
                let inside = r.iter().zip(phi_target.as_slice()).all(|(a, b)| (a - b).abs() <= delta);
                if inside {
                    nf * theta * theta * sigma_form_raw(profile, &r, &r)
                } else {
                    f64::NEG_INFINITY
                }
            },
        )
        .collect();
    let hits = terms.iter().filter(|v| v.is_finite()).count();
    if hits == 0 {
        return Err(Error::Inconclusive(format!(
            "no sample out of {samples} hit the window of half-width {delta}"
        )));
    }
    let (estimate, std_error) = log_mean_with_jackknife(&terms, n);
    Ok(SphericalEstimate { estimate, std_error, samples, hits })
}

#[derive(Debug, Clone, Serialize)]
pub struct DirichletCheck {
    pub n: usize,
    pub samples: usize,
    pub block_sizes: Vec<usize>,
    pub mean: Vec<f64>,
    pub expected_mean: Vec<f64>,
    /// Standard errors of the empirical means.
    pub mean_std_error: Vec<f64>,
    /// Row-major `p×p`.
    pub covariance: Vec<f64>,
    pub expected_covariance: Vec<f64>,
    /// Largest absolute gap over all mean and covariance entries.
    pub max_abs_deviation: f64,
}

/// Moments of `ρ(u)` for uniform `u` against `Dirichlet(n_k/2)`.
pub fn profile_dirichlet_check(profile: &VarianceProfile, n: usize, samples: usize, seed: u64) -> Result<DirichletCheck> {
    if n < 2 || samples < 2 {
        return Err(Error::OutOfRange("need N ≥ 2 and at least two samples".into()));
    }
    let p = profile.blocks();
    let map = profile.block_map(n);
    let mut sizes = vec![0usize; p];
    for &k in &map {
        sizes[k] += 1;
    }
    let draws: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |g, i| {
                let mut rng = sample_rng(seed, Stream::Sphere, (n as u64) | (3 << 40), i as u64);
                gaussian_vector(&mut rng, g);
                rho(g, &map, p)
            },
        )
        .collect();
    let s = samples as f64;
    let mut mean = vec![0.0; p];
    for d in &draws {
        for k in 0..p {
            mean[k] += d[k] / s;
        }
    }
    let mut cov = vec![0.0; p * p];
    for d in &draws {
        for k in 0..p {
            for l in 0..p {
                cov[k * p + l] += (d[k] - mean[k]) * (d[l] - mean[l]) / (s - 1.0);
            }
        }
    }
    let a0 = n as f64 / 2.0;
    let alpha: Vec<f64> = sizes.iter().map(|&c| c as f64 / 2.0).collect();
    let expected_mean: Vec<f64> = alpha.iter().map(|a| a / a0).collect();
    let denom = a0 * a0 * (a0 + 1.0);
    let mut expected_cov = vec![0.0; p * p];
    for k in 0..p {
        for l in 0..p {
            expected_cov[k * p + l] = if k == l {
                alpha[k] * (a0 - alpha[k]) / denom
            } else {
                -alpha[k] * alpha[l] / denom
            };
        }
    }
    let mean_std_error: Vec<f64> = (0..p).map(|k| (cov[k * p + k] / s).sqrt()).collect();
    let max_abs_deviation = mean
        .iter()
        .zip(&expected_mean)
        .chain(cov.iter().zip(&expected_cov))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(DirichletCheck {
        n,
        samples,
        block_sizes: sizes,
        mean,
        expected_mean,
        mean_std_error,
        covariance: cov,
        expected_covariance: expected_cov,
        max_abs_deviation,
    })
}
