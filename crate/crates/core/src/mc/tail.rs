//! Direct frequency estimates of `P(λ₁ ≥ x)`.
//!
//! `λ₁(H) ≥ x` exactly when `xI − H` fails to be positive definite, so each
//! sample costs one Cholesky attempt that stops at the first bad pivot.

use rayon::prelude::*;
use serde::Serialize;

use super::{fill_matrix, sample_rng, EntryDistribution, Stream};
use crate::error::{Error, Result};
use crate::profile::VarianceProfile;
use crate::ratefn::report::finite_or_string;

/// Whether the symmetric row-major `a` has an eigenvalue `≥ x`. The buffer
/// is overwritten.
pub fn exceeds(a: &mut [f64], n: usize, x: f64) -> bool {
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = if i == j { x - a[i * n + j] } else { -a[i * n + j] };
        }
    }
    // row-wise in-place Cholesky of the lower triangle
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return true;
                }
                a[i * n + i] = s.sqrt();
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
    }
    false
}

/// Wilson score interval for `hits/trials` at normal quantile `z`.
pub fn wilson_interval(hits: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub n: usize,
    pub samples: u64,
    pub hits: u64,
    pub p_hat: f64,
    /// `−(1/N) log p̂`.
    #[serde(serialize_with = "finite_or_string")]
    pub rate: f64,
    /// 95% interval for the rate from the Wilson interval of `p`.
    pub rate_ci_low: f64,
    #[serde(serialize_with = "finite_or_string")]
    pub rate_ci_high: f64,
    /// True when no sample hit, so only the lower rate bound is informative.
    pub one_sided: bool,
}

const CHUNK: usize = 2048;

fn count_hits(sigma: &[f64], n: usize, x: f64, samples: usize, dist: EntryDistribution, seed: u64, tag: u64) -> u64 {
    let chunks = samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut buf = vec![0.0; n * n];
            let mut hits = 0u64;
            for i in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let mut rng = sample_rng(seed, Stream::Tail, tag, i as u64);
                fill_matrix(sigma, n, dist, &mut rng, &mut buf);
                if exceeds(&mut buf, n, x) {
                    hits += 1;
                }
            }
            hits
        })
        .sum()
}

/// One row per `N`: hit count, `−(1/N) log p̂` and its Wilson interval.
pub fn tail_estimate(
    profile: &VarianceProfile,
    x: f64,
    n_list: &[usize],
    samples: usize,
    dist: EntryDistribution,
    seed: u64,
) -> Result<Vec<TailRow>> {
    if samples == 0 || n_list.is_empty() {
        return Err(Error::OutOfRange("tail estimate needs samples and at least one N".into()));
    }
    n_list
        .iter()
        .map(|&n| {
            if n < 2 {
                return Err(Error::OutOfRange(format!("matrix size must be at least 2, got {n}")));
            }
            let sigma = profile.sample_sigma_matrix(n);
            let tag = n as u64 | ((dist as u64) << 48);
            let hits = count_hits(&sigma, n, x, samples, dist, seed, tag);
            let s = samples as u64;
            let (lo, hi) = wilson_interval(hits, s, 1.96);
            let nf = n as f64;
            let p_hat = hits as f64 / samples as f64;
            Ok(TailRow {
                n,
                samples: s,
                hits,
                p_hat,
                rate: -p_hat.ln() / nf,
                rate_ci_low: -hi.ln() / nf,
                rate_ci_high: -lo.ln() / nf,
                one_sided: hits == 0,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeConcentration {
    pub n: usize,
    pub samples: usize,
    pub r_edge: f64,
    pub window: f64,
    /// Fraction of samples with `|λ₁ − r| > window`.
    pub outside_fraction: f64,
}

/// Frequency of `|λ₁ − r| > window`, decided by two Cholesky tests.
pub fn edge_concentration(
    profile: &VarianceProfile,
    r_edge: f64,
    window: f64,
    n: usize,
    samples: usize,
    dist: EntryDistribution,
    seed: u64,
) -> Result<EdgeConcentration> {
    if n < 2 || samples == 0 {
        return Err(Error::OutOfRange("edge concentration needs N ≥ 2 and samples".into()));
    }
    let sigma = profile.sample_sigma_matrix(n);
    let outside: usize = (0..samples)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n * n], vec![0.0; n * n]),
            |(h, work), i| {
                let mut rng = sample_rng(seed, Stream::Matrix, (n as u64) | (7 << 48), i as u64);
                fill_matrix(&sigma, n, dist, &mut rng, h);
                work.copy_from_slice(h);
                if exceeds(work, n, r_edge + window) {
                    return 1;
                }
                work.copy_from_slice(h);
                usize::from(!exceeds(work, n, r_edge - window))
            },
        )
        .sum();
    Ok(EdgeConcentration {
        n,
        samples,
        r_edge,
        window,
        outside_fraction: outside as f64 / samples as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::{eig_top, sample_matrix};
    use nalgebra::DMatrix;

    #[test]
    fn cholesky_test_matches_eigenvalues() {
        let p = VarianceProfile::wishart(2.0).unwrap();
        for seed in 0..20 {
            let h = sample_matrix(&p, 24, EntryDistribution::Gaussian, seed).unwrap();
            let l1 = eig_top(&h).unwrap().lambda1;
            for x in [l1 - 1e-6, l1 + 1e-6, l1 - 0.3, l1 + 0.3] {
                let mut buf: Vec<f64> = DMatrix::transpose(&h).as_slice().to_vec();
                assert_eq!(exceeds(&mut buf, 24, x), l1 >= x, "seed {seed}, x {x}");
            }
        }
    }

    #[test]
    fn wilson_basics() {
        let (lo, hi) = wilson_interval(0, 100, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(50, 100, 1.96);
        assert!(lo < 0.5 && hi > 0.5 && (0.5 - lo - (hi - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn bulk_event_has_zero_rate() {
        let c = VarianceProfile::constant(1.0).unwrap();
        let rows = tail_estimate(&c, 1.0, &[20], 2000, EntryDistribution::Gaussian, 1).unwrap();
        assert_eq!(rows[0].hits, 2000);
        assert_eq!(rows[0].rate, 0.0);
        let rows = tail_estimate(&c, 50.0, &[10], 500, EntryDistribution::Rademacher, 1).unwrap();
        assert!(rows[0].one_sided && rows[0].rate.is_infinite() && rows[0].rate_ci_low > 0.0);
    }

    #[test]
    fn tail_is_thread_independent() {
        let c = VarianceProfile::constant(1.0).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| tail_estimate(&c, 2.0, &[12], 5000, EntryDistribution::Uniform, 3).unwrap()[0].hits)
        };
        assert_eq!(run(1), run(3));
    }
}
