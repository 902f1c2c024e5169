//! Dyson system solvers.
//!
//! For a piecewise-constant profile the unit-mass block transforms
//! `m_k(z) = G_{μ_σ,k}(z) / w_k` solve
//!
//! ```text
//! 1/m_k = z − Σ_l σ_{kl} w_l m_l,        k = 1..p
//! ```
//!
//! On the upper half-plane the map `Φ(m)_k = 1/(z − (SWm)_k)` is a strict
//! contraction of `(H⁻)^p` for the hyperbolic metric, with factor
//! `(1 + (Im z)²/A)^{-2}` on the squared-distance proxy `D`. Iteration is
//! run to completion in that metric, with Newton steps to finish once the
//! iterates are close. Above the spectral edge the solution is real; it is
//! obtained from Newton on the real system and certified by positivity and
//! linear stability of the fixed point.

mod finite;
mod measure;
mod potential;

pub use finite::{solve_dyson_finite, FiniteDysonSolution};
pub use measure::{
    log_potential_by_density, richardson_to_zero, spectral_measure, support_edge, support_edge_with,
    EdgeOptions, SpectralMeasure, DEFAULT_ETA_SCHEDULE,
};
pub use potential::{log_potential, stieltjes_inverse, stieltjes_total, PointData, SpectrumModel};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::VarianceProfile;

#[derive(Debug, Clone, Copy)]
pub struct DysonOptions {
    /// Stop when the hyperbolic distance between successive iterates drops below this.
    pub tol: f64,
    pub max_iterations: usize,
    /// Finish with Newton steps once the iteration is close.
    pub newton: bool,
}

impl Default for DysonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iterations: 200_000,
            newton: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DysonSolution {
    pub z: Complex64,
    /// Unit-mass block transforms `m_k(z)`.
    pub m: Vec<Complex64>,
    /// `G_k(z) = w_k m_k(z)`, the transforms of the mass-`w_k` block measures.
    pub g_blocks: Vec<Complex64>,
    pub g_total: Complex64,
    pub iterations: usize,
    /// Hyperbolic distance of the last step.
    pub residual: f64,
    /// `max_k |1/m_k − (z − (SWm)_k)|`.
    pub equation_residual: f64,
}

impl DysonSolution {
    fn assemble(profile: &VarianceProfile, z: Complex64, m: Vec<Complex64>, iterations: usize, residual: f64) -> Self {
        let w = profile.weights();
        let g_blocks: Vec<Complex64> = m.iter().zip(w).map(|(mk, wk)| mk * wk).collect();
        let g_total = g_blocks.iter().sum();
        let equation_residual = equation_residual(profile, z, &m);
        Self {
            z,
            m,
            g_blocks,
            g_total,
            iterations,
            residual,
            equation_residual,
        }
    }
}

/// Squared-distance proxy `D(u,v) = |u − v|² / (Im u · Im v)`.
pub fn hyperbolic_proxy(u: Complex64, v: Complex64) -> f64 {
    (u - v).norm_sqr() / (u.im * v.im)
}

/// Hyperbolic distance on the lower half-plane, `arcosh(1 + D/2)`,
/// evaluated as `2 asinh(√D / 2)` for accuracy near zero.
pub fn hyperbolic_distance(u: Complex64, v: Complex64) -> f64 {
    let d = hyperbolic_proxy(u, v);
    if !d.is_finite() {
        return f64::INFINITY;
    }
    2.0 * (d.sqrt() / 2.0).asinh()
}

fn sup_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| hyperbolic_distance(*u, *v))
        .fold(0.0, f64::max)
}

/// `(SWm)_k = Σ_l σ_{kl} w_l m_l`.
fn sw_apply<T>(profile: &VarianceProfile, m: &[T]) -> Vec<T>
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T> + Default,
{
    let w = profile.weights();
    profile
        .sigma()
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(T::default(), |acc, (l, s)| acc + m[l] * (s * w[l]))
        })
        .collect()
}

fn phi_map(profile: &VarianceProfile, z: Complex64, m: &[Complex64]) -> Vec<Complex64> {
    sw_apply(profile, m).into_iter().map(|s| 1.0 / (z - s)).collect()
}

fn equation_residual(profile: &VarianceProfile, z: Complex64, m: &[Complex64]) -> f64 {
    sw_apply(profile, m)
        .into_iter()
        .zip(m)
        .map(|(s, mk)| (1.0 / mk - (z - s)).norm())
        .fold(0.0, f64::max)
}

fn in_lower_half_plane(m: &[Complex64]) -> bool {
    m.iter().all(|v| v.im < 0.0 && v.re.is_finite())
}

/// One Newton step on `F_k(m) = m_k (z − (SWm)_k) − 1`.
fn newton_step(profile: &VarianceProfile, z: Complex64, m: &[Complex64]) -> Option<Vec<Complex64>> {
    let p = m.len();
    let w = profile.weights();
    let s = sw_apply(profile, m);
    let mut jac = DMatrix::<Complex64>::zeros(p, p);
    let mut rhs = DVector::<Complex64>::zeros(p);
    for k in 0..p {
        rhs[k] = -(m[k] * (z - s[k]) - 1.0);
        for l in 0..p {
            let mut v = -m[k] * (profile.sigma_at(k, l) * w[l]);
            if k == l {
                v += z - s[k];
            }
            jac[(k, l)] = v;
        }
    }
    let delta = jac.lu().solve(&rhs)?;
    Some(m.iter().zip(delta.iter()).map(|(a, d)| a + d).collect())
}

/// Solves the Dyson system at `z`.
///
/// For `Im z > 0` the contraction iteration is used (optionally seeded by
/// `init`). For real `z` the caller asserts `z` lies above the spectral
/// edge, and the real branch of [`solve_real`] is returned.
pub fn solve_dyson(profile: &VarianceProfile, z: Complex64, init: Option<&[Complex64]>) -> Result<DysonSolution> {
    solve_dyson_with(profile, z, init, DysonOptions::default())
}

pub fn solve_dyson_with(
    profile: &VarianceProfile,
    z: Complex64,
    init: Option<&[Complex64]>,
    opts: DysonOptions,
) -> Result<DysonSolution> {
    if z.im < 0.0 || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::OutOfRange(format!("spectral parameter {z} must have Im z >= 0")));
    }
    if z.im == 0.0 {
        let real = solve_real(profile, z.re, None)?;
        let m = real.m.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        return Ok(DysonSolution::assemble(profile, z, m, real.iterations, 0.0));
    }
    let p = profile.blocks();
    let mut m: Vec<Complex64> = match init {
        Some(v) if v.len() == p && in_lower_half_plane(v) => v.to_vec(),
        Some(v) if v.len() != p => {
            return Err(Error::DimensionMismatch { expected: p, got: v.len() });
        }
        _ => vec![1.0 / z; p],
    };
    if opts.newton && init.is_some() {
        // a warm start is usually inside Newton's basin already
        if let Some((sol, steps, step)) = newton_polish(profile, z, &m, opts.tol) {
            return Ok(DysonSolution::assemble(profile, z, sol, steps, step));
        }
    }
    let mut damping = false;
    let mut prev = f64::INFINITY;
    let mut stalled = 0usize;
    let mut last = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let mut next = phi_map(profile, z, &m);
        if damping {
            for (n, o) in next.iter_mut().zip(&m) {
                *n = 0.5 * (*n + *o);
            }
        }
        let d = sup_distance(&m, &next);
        m = next;
        last = d;
        if d < opts.tol {
            return Ok(DysonSolution::assemble(profile, z, m, it, d));
        }
        if d > 0.999 * prev {
            stalled += 1;
            if stalled > 20 {
                damping = true;
            }
        } else {
            stalled = 0;
        }
        prev = d;
        if opts.newton && it % 16 == 0 && d < 1.0 {
            if let Some((sol, steps, step)) = newton_polish(profile, z, &m, opts.tol) {
                return Ok(DysonSolution::assemble(profile, z, sol, it + steps, step));
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        residual: last,
    })
}

/// Newton iterations from `m`; succeeds only if the iterates stay in the
/// lower half-plane and settle.
fn newton_polish(profile: &VarianceProfile, z: Complex64, m: &[Complex64], tol: f64) -> Option<(Vec<Complex64>, usize, f64)> {
    let mut cur = m.to_vec();
    let scale = |v: &[Complex64]| v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    for step in 1..=40 {
        let next = newton_step(profile, z, &cur)?;
        if !in_lower_half_plane(&next) {
            return None;
        }
        let d = sup_distance(&cur, &next);
        let euclid = cur.iter().zip(&next).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        cur = next;
        // the hyperbolic step cannot go below rounding when Im m is tiny
        if d < tol || euclid <= 4.0 * f64::EPSILON * scale(&cur) {
            return Some((cur, step, d));
        }
    }
    None
}

// ---------------------------------------------------------------------------
// real branch above the edge

/// Real solution of the Dyson system at a real point above the edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealSolution {
    pub x: f64,
    pub m: Vec<f64>,
    pub iterations: usize,
    /// Spectral radius of the linearization `diag(m²) S W`; `< 1` certifies
    /// the physical branch.
    pub stability: f64,
}

impl RealSolution {
    pub fn g_blocks(&self, profile: &VarianceProfile) -> Vec<f64> {
        self.m.iter().zip(profile.weights()).map(|(m, w)| m * w).collect()
    }

    pub fn g_total(&self, profile: &VarianceProfile) -> f64 {
        self.m.iter().zip(profile.weights()).map(|(m, w)| m * w).sum()
    }

    /// `dm/dx`, from `(I − diag(m²) S W) m' = −m²`.
    pub fn derivative(&self, profile: &VarianceProfile) -> Result<Vec<f64>> {
        let p = self.m.len();
        let w = profile.weights();
        let mut a = DMatrix::<f64>::identity(p, p);
        let mut b = DVector::<f64>::zeros(p);
        for k in 0..p {
            b[k] = -self.m[k] * self.m[k];
            for l in 0..p {
                a[(k, l)] -= self.m[k] * self.m[k] * profile.sigma_at(k, l) * w[l];
            }
        }
        let d = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Linalg("singular linearization at the edge".into()))?;
        Ok(d.iter().copied().collect())
    }

    /// `dG/dx = Σ_k w_k m_k'`.
    pub fn g_derivative(&self, profile: &VarianceProfile) -> Result<f64> {
        Ok(self
            .derivative(profile)?
            .iter()
            .zip(profile.weights())
            .map(|(d, w)| d * w)
            .sum())
    }
}

/// Largest eigenvalue of `diag(m√w) S diag(m√w)`, which is similar to
/// `diag(m²) S W`.
pub(crate) fn linear_stability(profile: &VarianceProfile, m: &[f64]) -> f64 {
    let p = m.len();
    let w = profile.weights();
    if p == 1 {
        return m[0] * m[0] * profile.sigma_at(0, 0) * w[0];
    }
    let d: Vec<f64> = (0..p).map(|k| m[k] * w[k].sqrt()).collect();
    let mat = DMatrix::<f64>::from_fn(p, p, |k, l| d[k] * profile.sigma_at(k, l) * d[l]);
    mat.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn real_newton(profile: &VarianceProfile, x: f64, seed: &[f64]) -> Option<(Vec<f64>, usize)> {
    let p = seed.len();
    let w = profile.weights();
    let mut m = seed.to_vec();
    for it in 1..=200 {
        let s = sw_apply(profile, &m);
        let mut jac = DMatrix::<f64>::zeros(p, p);
        let mut rhs = DVector::<f64>::zeros(p);
        for k in 0..p {
            rhs[k] = -(m[k] * (x - s[k]) - 1.0);
            for l in 0..p {
                let mut v = -m[k] * profile.sigma_at(k, l) * w[l];
                if k == l {
                    v += x - s[k];
                }
                jac[(k, l)] = v;
            }
        }
        let delta = jac.lu().solve(&rhs)?;
        let mut step: f64 = 0.0;
        let mut size: f64 = 0.0;
        for k in 0..p {
            m[k] += delta[k];
            step = step.max(delta[k].abs());
            size = size.max(m[k].abs());
        }
        if !size.is_finite() {
            return None;
        }
        if step <= 4.0 * f64::EPSILON * size.max(f64::MIN_POSITIVE) {
            return Some((m, it));
        }
    }
    None
}

fn certify(profile: &VarianceProfile, x: f64, m: Vec<f64>, iterations: usize) -> Option<RealSolution> {
    if m.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let s = sw_apply(profile, &m);
    if s.iter().any(|sk| !(x - sk > 0.0)) {
        return None;
    }
    let stability = linear_stability(profile, &m);
    if !(stability < 1.0) {
        return None;
    }
    Some(RealSolution {
        x,
        m,
        iterations,
        stability,
    })
}

/// Real Dyson solution at `x`, certified as the physical branch. Attempts
/// Newton from `seed`, then from `m = 0`, then from the complex solutions
/// at `x + 10⁻⁴ i` and `x + 10⁻⁶ i`.
pub fn solve_real(profile: &VarianceProfile, x: f64, seed: Option<&[f64]>) -> Result<RealSolution> {
    let p = profile.blocks();
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::BelowEdge { x, edge: f64::NAN });
    }
    if let Some(seed) = seed {
        if seed.len() == p {
            if let Some(sol) = real_newton(profile, x, seed).and_then(|(m, it)| certify(profile, x, m, it)) {
                return Ok(sol);
            }
        }
    }
    if let Some(sol) = real_newton(profile, x, &vec![0.0; p]).and_then(|(m, it)| certify(profile, x, m, it)) {
        return Ok(sol);
    }
    continuation(profile, x).ok_or(Error::BelowEdge { x, edge: f64::NAN })
}

fn continuation(profile: &VarianceProfile, x: f64) -> Option<RealSolution> {
    let mut init: Option<Vec<Complex64>> = None;
    let mut total = 0;
    for eta in [1e-4, 1e-6] {
        let sol = solve_dyson(profile, Complex64::new(x, eta), init.as_deref()).ok()?;
        total += sol.iterations;
        init = Some(sol.m);
    }
    let seed: Vec<f64> = init?.iter().map(|c| c.re).collect();
    let (m, it) = real_newton(profile, x, &seed)?;
    certify(profile, x, m, total + it)
}
