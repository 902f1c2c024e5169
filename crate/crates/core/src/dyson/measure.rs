use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{solve_dyson, solve_real, RealSolution};
use crate::error::{Error, Result};
use crate::profile::VarianceProfile;

pub const DEFAULT_ETA_SCHEDULE: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasure {
    pub x_grid: Vec<f64>,
    pub density: Vec<f64>,
    /// `block_densities[k][i]` is the density of the mass-`w_k` block measure at `x_grid[i]`.
    pub block_densities: Vec<Vec<f64>>,
    pub l_edge: f64,
    pub r_edge: f64,
    /// `|∫ density − 1|` by the trapezoid rule on `x_grid`.
    pub total_mass_error: f64,
    pub block_mass_errors: Vec<f64>,
    /// Grid indices where the η-extrapolation oscillated or went negative.
    pub flagged: Vec<usize>,
}

impl SpectralMeasure {
    /// Trapezoid weights of `x_grid`.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        trapezoid_weights(&self.x_grid)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,density");
        for k in 0..self.block_densities.len() {
            let _ = write!(out, ",density_block_{}", k + 1);
        }
        out.push('\n');
        for (i, x) in self.x_grid.iter().enumerate() {
            let _ = write!(out, "{x:.12e},{:.12e}", self.density[i]);
            for b in &self.block_densities {
                let _ = write!(out, ",{:.12e}", b[i]);
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 1..n {
        let h = 0.5 * (x[i] - x[i - 1]);
        w[i - 1] += h;
        w[i] += h;
    }
    w
}

/// Neville extrapolation of samples `f(eta_i)` to `eta = 0`.
pub fn richardson_to_zero(etas: &[f64], values: &[f64]) -> f64 {
    let mut p = values.to_vec();
    let n = p.len();
    for level in 1..n {
        for i in 0..n - level {
            let (a, b) = (etas[i], etas[i + level]);
            p[i] = (b * p[i] - a * p[i + 1]) / (b - a);
        }
    }
    p[0]
}

/// Whether successive differences change sign, which means the samples are
/// not in the asymptotic regime of the extrapolation.
fn oscillates(values: &[f64]) -> bool {
    let d: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    d.windows(2)
        .any(|w| w[0] * w[1] < 0.0 && w[0].abs().min(w[1].abs()) > 1e-9 * scale.max(1e-300))
}

fn validate_schedule(eta: &[f64]) -> Result<()> {
    if eta.is_empty() || eta.iter().any(|e| !(*e > 0.0)) || eta.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config(format!(
            "eta schedule must be a decreasing positive sequence, got {eta:?}"
        )));
    }
    Ok(())
}

/// Density of `μ_σ` and of its block parts on a uniform grid, from
/// `−Im G(x + iη)/π` extrapolated to `η = 0` over `eta_schedule`.
pub fn spectral_measure(
    profile: &VarianceProfile,
    x_min: f64,
    x_max: f64,
    points: usize,
    eta_schedule: &[f64],
) -> Result<SpectralMeasure> {
    if !(x_min < x_max) || points < 2 {
        return Err(Error::Config(format!(
            "need x_min < x_max and at least two points (got [{x_min}, {x_max}], {points})"
        )));
    }
    validate_schedule(eta_schedule)?;
    let (l_edge, r_edge) = support_edge(profile)?;
    let p = profile.blocks();
    let x_grid: Vec<f64> = (0..points)
        .map(|i| x_min + (x_max - x_min) * i as f64 / (points - 1) as f64)
        .collect();
    let mut density = Vec::with_capacity(points);
    let mut block_densities = vec![Vec::with_capacity(points); p];
    let mut flagged = Vec::new();
    // warm starts carried along the grid, one per η
    let mut warm: Vec<Option<Vec<Complex64>>> = vec![None; eta_schedule.len()];
    for (i, &x) in x_grid.iter().enumerate() {
        let mut totals = Vec::with_capacity(eta_schedule.len());
        let mut blocks = vec![Vec::with_capacity(eta_schedule.len()); p];
        let mut prev: Option<Vec<Complex64>> = None;
        for (j, &eta) in eta_schedule.iter().enumerate() {
            let init = prev.clone().or_else(|| warm[j].clone());
            let sol = solve_dyson(profile, Complex64::new(x, eta), init.as_deref())?;
            totals.push(-sol.g_total.im / std::f64::consts::PI);
            for k in 0..p {
                blocks[k].push(-sol.g_blocks[k].im / std::f64::consts::PI);
            }
            warm[j] = Some(sol.m.clone());
            prev = Some(sol.m);
        }
        let mut bad = oscillates(&totals);
        let mut d = richardson_to_zero(eta_schedule, &totals);
        if d < 0.0 {
            bad = true;
            d = 0.0;
        }
        density.push(d);
        for k in 0..p {
            let v = richardson_to_zero(eta_schedule, &blocks[k]);
            block_densities[k].push(v.max(0.0));
        }
        if bad && d > 1e-8 {
            flagged.push(i);
        }
    }
    let qw = trapezoid_weights(&x_grid);
    let integrate = |f: &[f64]| f.iter().zip(&qw).map(|(a, b)| a * b).sum::<f64>();
    let total_mass_error = (integrate(&density) - 1.0).abs();
    let block_mass_errors = block_densities
        .iter()
        .zip(profile.weights())
        .map(|(b, w)| (integrate(b) - w).abs())
        .collect();
    Ok(SpectralMeasure {
        x_grid,
        density,
        block_densities,
        l_edge,
        r_edge,
        total_mass_error,
        block_mass_errors,
        flagged,
    })
}

/// `∫ log(x − y) dμ_σ(y)` by trapezoid quadrature of a sampled density;
/// meaningful only when `x` lies to the right of the sampled grid.
pub fn log_potential_by_density(measure: &SpectralMeasure, x: f64) -> f64 {
    let qw = measure.quadrature_weights();
    measure
        .x_grid
        .iter()
        .zip(&measure.density)
        .zip(&qw)
        .map(|((y, d), w)| (x - y).ln() * d * w)
        .sum()
}

#[derive(Debug, Clone)]
pub struct EdgeOptions {
    pub density_threshold: f64,
    /// Bisection stops when the bracket is narrower than `tol_factor · (1 + A)`.
    pub tol_factor: f64,
    /// η values for the density part of the edge predicate. The predicate is
    /// evaluated next to a real solution, so these are far smaller than the
    /// grid schedule.
    pub density_etas: Vec<f64>,
    /// Number of steps in the downward scan from the operator-norm bound.
    pub scan_steps: usize,
}

impl Default for EdgeOptions {
    fn default() -> Self {
        Self {
            density_threshold: 1e-6,
            tol_factor: 1e-6,
            density_etas: vec![1e-7, 5e-8, 2.5e-8],
            scan_steps: 400,
        }
    }
}

/// The edge predicate: a certified real solution exists at `x` and the
/// extrapolated density there is below threshold.
fn outside_support(
    profile: &VarianceProfile,
    x: f64,
    seed: Option<&[f64]>,
    opts: &EdgeOptions,
) -> Option<RealSolution> {
    let real = solve_real(profile, x, seed).ok()?;
    let mut init: Vec<Complex64> = real.m.iter().map(|m| Complex64::new(*m, -1e-12)).collect();
    let mut values = Vec::with_capacity(opts.density_etas.len());
    for &eta in &opts.density_etas {
        let sol = solve_dyson(profile, Complex64::new(x, eta), Some(&init)).ok()?;
        values.push(-sol.g_total.im / std::f64::consts::PI);
        init = sol.m;
    }
    let d = richardson_to_zero(&opts.density_etas, &values);
    (d.abs() < opts.density_threshold).then_some(real)
}

/// Support edges `(l_σ, r_σ)` of `μ_σ`, with `l_σ = −r_σ`.
pub fn support_edge(profile: &VarianceProfile) -> Result<(f64, f64)> {
    support_edge_with(profile, &EdgeOptions::default()).map(|(r, _)| (-r, r))
}

/// Right edge together with the certified real solution at the returned
/// point. The returned `r` is the upper end of the final bracket, so the
/// real branch is known to exist there.
pub fn support_edge_with(profile: &VarianceProfile, opts: &EdgeOptions) -> Result<(f64, RealSolution)> {
    let a = profile.max_variance();
    let mut hi = 2.0 * a.sqrt();
    let mut hi_sol = None;
    for _ in 0..40 {
        if let Some(sol) = outside_support(profile, hi, None, opts) {
            hi_sol = Some(sol);
            break;
        }
        hi *= 1.05;
    }
    let mut hi_sol = hi_sol.ok_or_else(|| {
        Error::BracketFailure(format!("no real Dyson branch found up to x = {hi}"))
    })?;
    // Walk down from the norm bound until the predicate first fails; plain
    // bisection from 0 would be fooled by gaps and atoms inside the support.
    let step = hi / opts.scan_steps as f64;
    let mut lo = None;
    while hi - step > 0.5 * step {
        let x = hi - step;
        match outside_support(profile, x, Some(&hi_sol.m), opts) {
            Some(sol) => {
                hi = x;
                hi_sol = sol;
            }
            None => {
                lo = Some(x);
                break;
            }
        }
    }
    let mut lo = lo.ok_or_else(|| {
        Error::BracketFailure("real Dyson branch persists down to 0; degenerate profile".into())
    })?;
    let tol = opts.tol_factor * (1.0 + a);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match outside_support(profile, mid, Some(&hi_sol.m), opts) {
            Some(sol) => {
                hi = mid;
                hi_sol = sol;
            }
            None => lo = mid,
        }
    }
    Ok((hi, hi_sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;

    #[test]
    fn neville_is_exact_on_quadratics() {
        let etas = [1e-2, 5e-3, 2.5e-3];
        let f = |e: f64| 0.3 - 2.0 * e + 7.0 * e * e;
        let v: Vec<f64> = etas.iter().map(|e| f(*e)).collect();
        assert!((richardson_to_zero(&etas, &v) - 0.3).abs() < 1e-14);
        // halving steps reduce to (8 f3 − 6 f2 + f1)/3
        let direct = (8.0 * v[2] - 6.0 * v[1] + v[0]) / 3.0;
        assert!((richardson_to_zero(&etas, &v) - direct).abs() < 1e-14);
    }

    #[test]
    fn semicircle_edge_and_density() {
        let c = VarianceProfile::constant(1.0).unwrap();
        let (l, r) = support_edge(&c).unwrap();
        assert!((r - 2.0).abs() < 1e-4, "r = {r}");
        assert_eq!(l, -r);
        let m = spectral_measure(&c, -2.5, 2.5, 201, &DEFAULT_ETA_SCHEDULE).unwrap();
        for (x, d) in m.x_grid.iter().zip(&m.density) {
            if x.abs() < 1.8 {
                assert!((d - oracles::semicircle_density(*x)).abs() < 1e-4, "x = {x}");
            }
        }
        assert!(m.total_mass_error < 1e-3, "{}", m.total_mass_error);
    }

    #[test]
    fn rejects_bad_schedules() {
        let c = VarianceProfile::constant(1.0).unwrap();
        assert!(spectral_measure(&c, -1.0, 1.0, 10, &[1e-3, 1e-2]).is_err());
        assert!(spectral_measure(&c, 1.0, -1.0, 10, &DEFAULT_ETA_SCHEDULE).is_err());
    }

    #[test]
    fn block_edge_scaling() {
        let one = VarianceProfile::constant(1.0).unwrap();
        let four = VarianceProfile::constant(4.0).unwrap();
        let b = VarianceProfile::block_diagonal(0.5, &one, &four).unwrap();
        let (_, r) = support_edge(&b).unwrap();
        assert!((r - 2.0 * 2f64.sqrt()).abs() < 1e-3, "r = {r}");
    }

    #[test]
    fn wishart_edge_is_the_marchenko_pastur_push_forward() {
        let alpha = 2.0;
        let w = VarianceProfile::wishart(alpha).unwrap();
        let (_, r) = support_edge(&w).unwrap();
        assert!((r - oracles::wishart_edge(alpha)).abs() < 1e-4, "r = {r}");
    }
}
