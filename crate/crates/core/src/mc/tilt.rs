//! The tilted ensemble `H̃ + 2θE` with `E_ij = Σ_ij v_i v_j`, where `v` has
//! block masses `φ(θ, x, ψ)` and uniform directions inside each block.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::{eig_top, fill_matrix, mean_std, rho, sample_rng, EntryDistribution, Stream};
use crate::dyson::SpectrumModel;
use crate::error::{Error, Result};
use crate::ratefn::{eval_phi, find_tilt_theta};
use crate::simplex::SimplexVector;

#[derive(Debug, Clone, Serialize)]
pub struct TiltReport {
    pub n: usize,
    pub samples: usize,
    pub x: f64,
    pub theta: f64,
    pub phi: Vec<f64>,
    pub lambda1_mean: f64,
    pub lambda1_std: f64,
    /// Mean of `ρ(v₁)` across samples.
    pub rho_v1_mean: Vec<f64>,
    pub r_edge: f64,
}

/// Samples the ensemble tilted by `θ*` with `z(θ*) = x`.
pub fn tilted_outlier_check(
    model: &SpectrumModel,
    x: f64,
    psi: &SimplexVector,
    n: usize,
    samples: usize,
    dist: EntryDistribution,
    seed: u64,
) -> Result<TiltReport> {
    if !(x > model.r_edge()) {
        return Err(Error::BelowEdge { x, edge: model.r_edge() });
    }
    let theta = find_tilt_theta(model, x, psi)?;
    tilted_outlier_check_at(model, theta, x, psi, n, samples, dist, seed)
}

/// As [`tilted_outlier_check`] with an explicit tilt `θ ≥ 0`.
#[allow(clippy::too_many_arguments)]
pub fn tilted_outlier_check_at(
    model: &SpectrumModel,
    theta: f64,
    x: f64,
    psi: &SimplexVector,
    n: usize,
    samples: usize,
    dist: EntryDistribution,
    seed: u64,
) -> Result<TiltReport> {
    if n < 2 || samples == 0 {
        return Err(Error::OutOfRange("tilted check needs N ≥ 2 and samples".into()));
    }
    if !(theta >= 0.0) {
        return Err(Error::OutOfRange(format!("tilt must be nonnegative, got {theta}")));
    }
    let profile = model.profile();
    let p = profile.blocks();
    let phi: Vec<f64> = if theta > 0.0 {
        eval_phi(model, theta, x, psi)?.into_inner()
    } else {
        profile.weights().to_vec()
    };
    let map = profile.block_map(n);
    let sigma = profile.sample_sigma_matrix(n);
    let results: Vec<Result<(f64, Vec<f64>)>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, Stream::Tilt, n as u64, i as u64);
            let mut h = vec![0.0; n * n];
            fill_matrix(&sigma, n, dist, &mut rng, &mut h);
            if theta > 0.0 {
                let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let mut block_norm = vec![0.0; p];
                for (vi, &k) in v.iter().zip(&map) {
                    block_norm[k] += vi * vi;
                }
                for (vi, &k) in v.iter_mut().zip(&map) {
                    *vi *= (phi[k] / block_norm[k]).sqrt();
                }
                for a in 0..n {
                    for b in 0..n {
                        h[a * n + b] += 2.0 * theta * sigma[a * n + b] * v[a] * v[b];
                    }
                }
            }
            let eig = eig_top(&nalgebra::DMatrix::from_row_slice(n, n, &h))?;
            Ok((eig.lambda1, rho(eig.v1.as_slice(), &map, p)))
        })
        .collect();
    let mut lambdas = Vec::with_capacity(samples);
    let mut rho_mean = vec![0.0; p];
    for r in results {
        let (l, r) = r?;
        lambdas.push(l);
        for k in 0..p {
            rho_mean[k] += r[k] / samples as f64;
        }
    }
    let (lambda1_mean, lambda1_std) = mean_std(&lambdas);
    Ok(TiltReport {
        n,
        samples,
        x,
        theta,
        phi,
        lambda1_mean,
        lambda1_std,
        rho_v1_mean: rho_mean,
        r_edge: model.r_edge(),
    })
}
