//! Seeded Monte Carlo for Wigner matrices with a variance profile.
//!
//! Every sample draws from its own ChaCha8 stream whose seed is a hash of
//! the master seed, a stream tag and the sample index, so results do not
//! depend on how samples are scheduled across threads.

mod sphere;
mod tail;
mod tilt;

pub use sphere::{
    annealed_integral_mc, profile_dirichlet_check, semicircle_spike_spectrum, spherical_integral_is,
    spherical_integral_mc, DirichletCheck, SphericalEstimate,
};
pub use tail::{edge_concentration, exceeds, tail_estimate, wilson_interval, EdgeConcentration, TailRow};
pub use tilt::{tilted_outlier_check, tilted_outlier_check_at, TiltReport};

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::VarianceProfile;
use crate::simplex::SimplexVector;

/// Centered, unit-variance entry laws; all three are sharp sub-Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryDistribution {
    Gaussian,
    Rademacher,
    /// Uniform on `[−√3, √3]`.
    Uniform,
}

impl EntryDistribution {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian => rng.sample(StandardNormal),
            Self::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::Uniform => 3f64.sqrt() * (2.0 * rng.gen::<f64>() - 1.0),
        }
    }

    /// `log E e^{tX}` in closed form.
    pub fn log_mgf(self, t: f64) -> f64 {
        match self {
            Self::Gaussian => 0.5 * t * t,
            Self::Rademacher => {
                // log cosh t, stable for large |t|
                let a = t.abs();
                a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
            }
            Self::Uniform => {
                let s = 3f64.sqrt() * t;
                if s.abs() < 1e-4 {
                    s * s / 6.0
                } else {
                    let a = s.abs();
                    // log(sinh a / a)
                    a + (-(-2.0 * a).exp()).ln_1p() - std::f64::consts::LN_2 - a.ln()
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Rademacher => "rademacher",
            Self::Uniform => "uniform",
        }
    }
}

impl FromStr for EntryDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "rademacher" => Ok(Self::Rademacher),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::Config(format!("unknown entry distribution '{other}'"))),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Tags separating the random streams of different estimators.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Stream {
    Matrix = 1,
    Sphere = 2,
    Tilt = 3,
    Tail = 4,
}

/// The generator of sample `index` in stream `stream` under `master`.
pub(crate) fn sample_rng(master: u64, stream: Stream, tag: u64, index: u64) -> ChaCha8Rng {
    let s = splitmix64(master ^ splitmix64((stream as u64) << 56 ^ tag) ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)));
    ChaCha8Rng::seed_from_u64(s)
}

fn check_size(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::OutOfRange(format!("matrix size must be at least 2, got {n}")));
    }
    Ok(())
}

/// Fills the row-major `n×n` buffer with `H_ij = √(Σ_ij/N) ξ_ij` above the
/// diagonal (mirrored) and `H_ii = √(2Σ_ii/N) ξ_ii`.
pub(crate) fn fill_matrix<R: Rng>(sigma: &[f64], n: usize, dist: EntryDistribution, rng: &mut R, out: &mut [f64]) {
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        for j in i..n {
            let var = if i == j { 2.0 * sigma[i * n + i] } else { sigma[i * n + j] };
            let v = (var * inv_n).sqrt() * dist.sample(rng);
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
}

/// One matrix of the ensemble; deterministic in `seed`.
pub fn sample_matrix(profile: &VarianceProfile, n: usize, dist: EntryDistribution, seed: u64) -> Result<DMatrix<f64>> {
    check_size(n)?;
    let sigma = profile.sample_sigma_matrix(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![0.0; n * n];
    fill_matrix(&sigma, n, dist, &mut rng, &mut buf);
    Ok(DMatrix::from_row_slice(n, n, &buf))
}

#[derive(Debug, Clone)]
pub struct TopEigen {
    pub lambda1: f64,
    pub v1: DVector<f64>,
    /// All eigenvalues in decreasing order.
    pub spectrum: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

/// Dense symmetric eigendecomposition; `v1` has unit norm and its first
/// nonzero coordinate positive.
pub fn eig_top(matrix: &DMatrix<f64>) -> Result<TopEigen> {
    let n = matrix.nrows();
    if n == 0 || matrix.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: matrix.ncols() });
    }
    let eig = SymmetricEigen::try_new(matrix.clone(), 1e-15, 0)
        .ok_or_else(|| Error::Linalg("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let spectrum: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-14).copied() {
            if first < 0.0 {
                col.neg_mut();
            }
        }
        vectors.set_column(c, &col);
    }
    Ok(TopEigen {
        lambda1: spectrum[0],
        v1: vectors.column(0).into_owned(),
        spectrum,
        eigenvectors: vectors,
    })
}

/// Block masses `ρ(u)_k = Σ_{i ∈ I_k} u_i²` of a unit vector.
pub fn rho(u: &[f64], block_map: &[usize], p: usize) -> Vec<f64> {
    let mut r = vec![0.0; p];
    for (ui, &k) in u.iter().zip(block_map) {
        r[k] += ui * ui;
    }
    let s: f64 = r.iter().sum();
    r.iter().map(|v| v / s).collect()
}

/// A finite measure on the line given by atoms and weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub atoms: Vec<f64>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn empirical(points: &[f64]) -> Self {
        let w = 1.0 / points.len() as f64;
        Self {
            atoms: points.to_vec(),
            weights: vec![w; points.len()],
        }
    }
}

/// A measure with a density sampled on an increasing grid, plus optional
/// point masses `(position, weight)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMeasure {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    #[serde(default)]
    pub atoms: Vec<(f64, f64)>,
}

impl DensityMeasure {
    fn cdf(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.x.len()];
        for i in 1..self.x.len() {
            c[i] = c[i - 1] + 0.5 * (self.density[i] + self.density[i - 1]) * (self.x[i] - self.x[i - 1]);
        }
        c
    }

    pub fn new(x: Vec<f64>, density: Vec<f64>) -> Self {
        Self { x, density, atoms: Vec::new() }
    }

    pub fn mass(&self) -> f64 {
        *self.cdf().last().unwrap_or(&0.0) + self.atoms.iter().map(|a| a.1).sum::<f64>()
    }

    /// The same shape rescaled to total mass `mass`.
    pub fn with_mass(&self, mass: f64) -> Self {
        let f = mass / self.mass();
        Self {
            x: self.x.clone(),
            density: self.density.iter().map(|d| d * f).collect(),
            atoms: self.atoms.iter().map(|&(p, w)| (p, w * f)).collect(),
        }
    }
}

/// The projected empirical measures `μ_H(Π_k)`: atoms `λ_i` with weights
/// `⟨v_i, Π_k v_i⟩ / N`.
pub fn projected_empirical(eig: &TopEigen, profile: &VarianceProfile) -> Vec<DiscreteMeasure> {
    let n = eig.spectrum.len();
    let map = profile.block_map(n);
    let p = profile.blocks();
    let mut weights = vec![vec![0.0; n]; p];
    for i in 0..n {
        let col = eig.eigenvectors.column(i);
        for (j, &k) in map.iter().enumerate() {
            weights[k][i] += col[j] * col[j] / n as f64;
        }
    }
    weights
        .into_iter()
        .map(|w| DiscreteMeasure {
            atoms: eig.spectrum.clone(),
            weights: w,
        })
        .collect()
}

fn discrete_cdf_steps(m: &DiscreteMeasure) -> Vec<(f64, f64)> {
    let mut pairs: Vec<(f64, f64)> = m.atoms.iter().copied().zip(m.weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// `∫ |F_a − F_b|` for two discrete measures of equal mass.
pub fn wasserstein1_discrete(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    if (a.mass() - b.mass()).abs() > 1e-6 {
        return Err(Error::OutOfRange(format!("mass mismatch: {} vs {}", a.mass(), b.mass())));
    }
    let mut events: Vec<(f64, f64)> = discrete_cdf_steps(a);
    events.extend(discrete_cdf_steps(b).into_iter().map(|(x, w)| (x, -w)));
    events.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut diff = 0.0;
    let mut total = 0.0;
    for pair in events.windows(2) {
        diff += pair[0].1;
        total += diff.abs() * (pair[1].0 - pair[0].0);
    }
    Ok(total)
}

/// `∫ |F_discrete − F_density|` with the density CDF interpolated linearly
/// between grid nodes.
pub fn wasserstein1(discrete: &DiscreteMeasure, density: &DensityMeasure) -> Result<f64> {
    let cdf = density.cdf();
    let mass_c = density.mass();
    if (discrete.mass() - mass_c).abs() > 1e-6 {
        return Err(Error::OutOfRange(format!(
            "mass mismatch: {} vs {mass_c}",
            discrete.mass()
        )));
    }
    let continuous = *cdf.last().unwrap_or(&0.0);
    let steps = discrete_cdf_steps(discrete);
    let mut atoms = density.atoms.clone();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut xs: Vec<f64> = density.x.clone();
    xs.extend(steps.iter().map(|s| s.0));
    xs.extend(atoms.iter().map(|a| a.0));
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let linear = |t: f64| -> f64 {
        if t <= density.x[0] {
            return 0.0;
        }
        let last = density.x.len() - 1;
        if t >= density.x[last] {
            return continuous;
        }
        let j = density.x.partition_point(|v| *v <= t);
        let (x0, x1) = (density.x[j - 1], density.x[j]);
        cdf[j - 1] + (cdf[j] - cdf[j - 1]) * (t - x0) / (x1 - x0)
    };
    let (mut fd, mut fa) = (0.0, 0.0);
    let (mut k, mut ka) = (0, 0);
    let mut total = 0.0;
    for pair in xs.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        while k < steps.len() && steps[k].0 <= a {
            fd += steps[k].1;
            k += 1;
        }
        while ka < atoms.len() && atoms[ka].0 <= a {
            fa += atoms[ka].1;
            ka += 1;
        }
        // both CDFs are affine on (a, b); integrate the gap exactly
        let (u, v) = (fd - fa - linear(a), fd - fa - linear(b));
        let h = b - a;
        total += if u * v >= 0.0 {
            0.5 * h * (u.abs() + v.abs())
        } else {
            0.5 * h * (u * u + v * v) / (u.abs() + v.abs())
        };
    }
    Ok(total)
}

/// Results of a batch of samples at one size.
#[derive(Debug, Clone, Serialize)]
pub struct SampleBatch {
    pub n: usize,
    pub profile: String,
    pub seed: u64,
    pub dist: EntryDistribution,
    pub lambda1: Vec<f64>,
    pub rho_v1: Vec<SimplexVector>,
    #[serde(skip)]
    pub projected_measures: Vec<Vec<DiscreteMeasure>>,
}

impl SampleBatch {
    /// One row per sample: `seed_index, lambda1, rho_1..p`.
    pub fn to_csv(&self) -> String {
        let p = self.rho_v1.first().map_or(0, |r| r.len());
        let mut out = String::from("seed_index,lambda1");
        for k in 1..=p {
            let _ = write!(out, ",rho_{k}");
        }
        out.push('\n');
        for (i, (l, r)) in self.lambda1.iter().zip(&self.rho_v1).enumerate() {
            let _ = write!(out, "{i},{l:.12e}");
            for v in r.as_slice() {
                let _ = write!(out, ",{v:.12e}");
            }
            out.push('\n');
        }
        out
    }
}

/// Samples `samples` matrices and records `λ₁`, `ρ(v₁)` and optionally the
/// projected empirical measures.
/// `(λ₁, ρ(v₁), projected measures)` of one sampled matrix.
type SampleOutcome = (f64, Vec<f64>, Option<Vec<DiscreteMeasure>>);

pub fn sample_batch(
    profile: &VarianceProfile,
    n: usize,
    samples: usize,
    dist: EntryDistribution,
    seed: u64,
    keep_projected: bool,
) -> Result<SampleBatch> {
    check_size(n)?;
    let sigma = profile.sample_sigma_matrix(n);
    let map = profile.block_map(n);
    let p = profile.blocks();
    let results: Vec<Result<SampleOutcome>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, Stream::Matrix, n as u64, i as u64);
            let mut buf = vec![0.0; n * n];
            fill_matrix(&sigma, n, dist, &mut rng, &mut buf);
            let eig = eig_top(&DMatrix::from_row_slice(n, n, &buf))?;
            let r = rho(eig.v1.as_slice(), &map, p);
            let proj = keep_projected.then(|| projected_empirical(&eig, profile));
            Ok((eig.lambda1, r, proj))
        })
        .collect();
    let mut batch = SampleBatch {
        n,
        profile: profile.label().to_string(),
        seed,
        dist,
        lambda1: Vec::with_capacity(samples),
        rho_v1: Vec::with_capacity(samples),
        projected_measures: Vec::new(),
    };
    for r in results {
        let (l, rho, proj) = r?;
        batch.lambda1.push(l);
        batch.rho_v1.push(SimplexVector::from_raw(rho));
        if let Some(m) = proj {
            batch.projected_measures.push(m);
        }
    }
    Ok(batch)
}

pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_is_deterministic_and_symmetric() {
        let p = VarianceProfile::wishart(2.0).unwrap();
        let a = sample_matrix(&p, 30, EntryDistribution::Gaussian, 11).unwrap();
        let b = sample_matrix(&p, 30, EntryDistribution::Gaussian, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, a.transpose());
        // chequer structure: zero diagonal blocks
        let map = p.block_map(30);
        for i in 0..30 {
            for j in 0..30 {
                if map[i] == map[j] {
                    assert_eq!(a[(i, j)], 0.0);
                }
            }
        }
        assert!(sample_matrix(&p, 1, EntryDistribution::Gaussian, 0).is_err());
    }

    #[test]
    fn rademacher_entries_have_fixed_modulus() {
        let c = VarianceProfile::constant(1.0).unwrap();
        let n = 25;
        let h = sample_matrix(&c, n, EntryDistribution::Rademacher, 2).unwrap();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    assert!((h[(i, j)].abs() - 1.0 / (n as f64).sqrt()).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn variance_calibration() {
        let c = VarianceProfile::constant(1.0).unwrap();
        let n = 10;
        let sigma = c.sample_sigma_matrix(n);
        for dist in [EntryDistribution::Gaussian, EntryDistribution::Rademacher, EntryDistribution::Uniform] {
            let (mut off, mut off_n, mut diag, mut diag_n) = (0.0, 0usize, 0.0, 0usize);
            let mut buf = vec![0.0; n * n];
            for s in 0..10_000 {
                let mut rng = sample_rng(9, Stream::Matrix, 0, s);
                fill_matrix(&sigma, n, dist, &mut rng, &mut buf);
                for i in 0..n {
                    for j in i..n {
                        let v = buf[i * n + j] * buf[i * n + j] * n as f64;
                        if i == j {
                            diag += v;
                            diag_n += 1;
                        } else {
                            off += v;
                            off_n += 1;
                        }
                    }
                }
            }
            assert!((off / off_n as f64 - 1.0).abs() < 0.02, "{dist:?}");
            assert!((diag / diag_n as f64 - 2.0).abs() < 0.04, "{dist:?}");
        }
    }

    #[test]
    fn entries_are_sharp_sub_gaussian() {
        for dist in [EntryDistribution::Gaussian, EntryDistribution::Rademacher, EntryDistribution::Uniform] {
            for i in 0..=100 {
                let t = -5.0 + 0.1 * i as f64;
                assert!(dist.log_mgf(t) <= 0.5 * t * t + 1e-12, "{dist:?} at {t}");
            }
        }
        assert!((EntryDistribution::Rademacher.log_mgf(0.7) - 0.7f64.cosh().ln()).abs() < 1e-14);
        let s = 3f64.sqrt() * 0.7;
        assert!((EntryDistribution::Uniform.log_mgf(0.7) - (s.sinh() / s).ln()).abs() < 1e-14);
    }

    #[test]
    fn eig_top_examples() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 0.0]));
        let e = eig_top(&d).unwrap();
        assert_eq!(e.lambda1, 3.0);
        assert!((e.v1[0] - 1.0).abs() < 1e-15);
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let e = eig_top(&x).unwrap();
        assert!((e.lambda1 - 1.0).abs() < 1e-14);
        assert!((e.v1[0] - 0.5f64.sqrt()).abs() < 1e-14 && (e.v1[1] - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn projected_weights_resolve_identity() {
        let p = VarianceProfile::wishart(2.0).unwrap();
        let h = sample_matrix(&p, 30, EntryDistribution::Gaussian, 4).unwrap();
        let e = eig_top(&h).unwrap();
        let proj = projected_empirical(&e, &p);
        for i in 0..30 {
            let s: f64 = proj.iter().map(|m| m.weights[i]).sum();
            assert!((s - 1.0 / 30.0).abs() < 1e-12);
        }
        let c = VarianceProfile::constant(1.0).unwrap();
        let one = projected_empirical(&e, &c);
        assert!((one[0].mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_examples() {
        let a = DiscreteMeasure::empirical(&[0.0]);
        let b = DiscreteMeasure::empirical(&[1.0]);
        assert!((wasserstein1_discrete(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(wasserstein1_discrete(&a, &a).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
        let x: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let u = DensityMeasure::new(x.clone(), vec![1.0; x.len()]);
        let w = wasserstein1(&DiscreteMeasure::empirical(&pts), &u).unwrap();
        assert!(w < 0.02, "{w}");
        let half = DiscreteMeasure { atoms: vec![0.5], weights: vec![0.5] };
        assert!(wasserstein1(&half, &u).is_err());
        // a pure atom on both sides
        let zero = DensityMeasure { x: vec![-1.0, 1.0], density: vec![0.0, 0.0], atoms: vec![(0.0, 1.0)] };
        assert!(wasserstein1(&DiscreteMeasure::empirical(&[0.0]), &zero).unwrap() < 1e-15);
        assert!((wasserstein1(&DiscreteMeasure::empirical(&[0.5]), &zero).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn batch_is_independent_of_thread_count() {
        let p = VarianceProfile::wishart(2.0).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sample_batch(&p, 20, 12, EntryDistribution::Uniform, 5, false).unwrap().to_csv())
        };
        assert_eq!(run(1), run(4));
    }
}
