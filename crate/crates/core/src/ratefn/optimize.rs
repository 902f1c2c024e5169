use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};
use rayon::prelude::*;

use super::{k_raw, FHat, RateEvalReport};
use crate::dyson::SpectrumModel;
use crate::error::{Error, Result};
use crate::profile::{sigma_form_raw, VarianceProfile};
use crate::simplex::{project_to_simplex, SimplexVector};

#[derive(Debug, Clone)]
pub struct RateOptions {
    /// Random Dirichlet starts on top of the deterministic ones.
    pub starts: usize,
    /// Lower bound on `⟨ψ, Sψ⟩` for admissible `ψ`.
    pub eps_floor: f64,
    /// Stopping tolerance on the projected step of the ψ-optimizer.
    pub tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            eps_floor: 1e-8,
            tol: 1e-10,
            max_iterations: 500,
            seed: 0,
        }
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizes a quasiconcave `f` on `[lo, hi]`; returns `(argmax, max)`.
/// Endpoints are compared with the interior optimum so a monotone `f` is
/// handled too.
pub fn golden_section_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for t in [lo, hi] {
        let v = f(t);
        if v > best.1 {
            best = (t, v);
        }
    }
    best
}

/// Result of one projected-gradient run.
struct LocalRun {
    psi: Vec<f64>,
    value: f64,
    iterations: usize,
}

/// Projected gradient descent with Armijo backtracking on the simplex.
/// `eval` returns the objective and its gradient, or `None` where the point
/// is inadmissible.
fn projected_descent<F>(start: Vec<f64>, tol: f64, max_iterations: usize, mut eval: F) -> Option<LocalRun>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut psi = start;
    let (mut value, mut grad) = eval(&psi)?;
    let mut step = 1.0;
    let mut iterations = 0;
    for it in 1..=max_iterations {
        iterations = it;
        let mut accepted = None;
        let mut t = step;
        for _ in 0..60 {
            let trial: Vec<f64> = project_to_simplex(
                &psi.iter().zip(&grad).map(|(p, g)| p - t * g).collect::<Vec<_>>(),
            );
            let decrease: f64 = grad.iter().zip(trial.iter().zip(&psi)).map(|(g, (a, b))| g * (a - b)).sum();
            if let Some((v, g)) = eval(&trial) {
                if v <= value + 1e-4 * decrease {
                    accepted = Some((trial, v, g));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((next, v, g)) = accepted else { break };
        let moved = next.iter().zip(&psi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let improvement = value - v;
        psi = next;
        value = v;
        grad = g;
        step = (2.0 * t).min(1e6);
        if moved < tol || improvement <= 1e-15 * value.abs().max(1e-300) {
            break;
        }
    }
    Some(LocalRun { psi, value, iterations })
}

/// Starting points: the weights, the vertices with positive diagonal
/// variance, midpoints of pairs coupled by a positive variance where the
/// vertices are degenerate, and `extra` seeded Dirichlet draws.
fn starting_points(profile: &VarianceProfile, extra: usize, seed: u64) -> Vec<Vec<f64>> {
    let p = profile.blocks();
    let mut starts = vec![profile.weights().to_vec()];
    for k in 0..p {
        if profile.sigma_at(k, k) > 0.0 {
            let mut e = vec![0.0; p];
            e[k] = 1.0;
            starts.push(e);
        } else if let Some(l) = (0..p).find(|&l| l != k && profile.sigma_at(k, l) > 0.0) {
            let mut e = vec![0.0; p];
            e[k] = 0.5;
            e[l] = 0.5;
            starts.push(e);
        }
    }
    if p >= 2 {
        let dir = Dirichlet::new(&vec![1.0; p]).expect("valid Dirichlet parameters");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..extra {
            starts.push(dir.sample(&mut rng));
        }
    }
    starts
}

/// `I_σ(x)` by multi-start minimization of `ψ ↦ sup_θ̂ F̂(θ̂, x, ψ)` over
/// `{ψ ∈ P_p : ⟨ψ,Sψ⟩ ≥ eps_floor}`.
pub fn rate_function(model: &SpectrumModel, x: f64, opts: &RateOptions) -> Result<RateEvalReport> {
    let profile = model.profile();
    let weights = SimplexVector::new(profile.weights().to_vec())?;
    if x < model.r_edge() {
        return Ok(RateEvalReport::infinite(x, weights));
    }
    if x == model.r_edge() {
        return Ok(RateEvalReport::at_edge(x, weights, model.g_at_edge() / 2.0));
    }
    let point = model.point(x)?;
    let fhat = FHat::new(profile, &point);
    let eval = |psi: &[f64]| -> Option<(f64, Vec<f64>)> {
        if sigma_form_raw(profile, psi, psi) < opts.eps_floor {
            return None;
        }
        let (t, v) = fhat.sup(x, psi)?;
        Some((v, fhat.gradient(t, psi)))
    };
    let starts = starting_points(profile, opts.starts, opts.seed);
    let runs: Vec<Option<LocalRun>> = starts
        .into_par_iter()
        .map(|s| projected_descent(s, opts.tol, opts.max_iterations, eval))
        .collect();
    let converged: Vec<LocalRun> = runs.into_iter().flatten().collect();
    if converged.is_empty() {
        return Err(Error::Infeasible(format!(
            "no starting point satisfies <psi,S psi> >= {}",
            opts.eps_floor
        )));
    }
    let best = converged
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("nonempty");
    let worst = converged.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
    let (theta_hat, value) = fhat.sup(x, &best.psi).expect("admissible optimum");
    let a_leb = sigma_form_raw(profile, profile.weights(), profile.weights());
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("g_x".into(), point.g_total);
    diagnostics.insert("a_lebesgue".into(), a_leb);
    diagnostics.insert("bound_4a".into(), x * x / (4.0 * a_leb));
    diagnostics.insert("bound_2a".into(), x * x / (2.0 * a_leb));
    diagnostics.insert("a_psi_star".into(), sigma_form_raw(profile, &best.psi, &best.psi));
    diagnostics.insert("iterations".into(), best.iterations as f64);
    diagnostics.insert("r_edge".into(), model.r_edge());
    Ok(RateEvalReport {
        x,
        rate: value.max(0.0),
        psi_star: SimplexVector::from_raw(best.psi.clone()),
        theta_star: theta_hat + point.g_total / 2.0,
        starts_used: converged.len(),
        spread: worst - best.value,
        diagnostics,
    })
}

/// `sup_ψ K(θ, φ(θ, x, ψ))` for `θ ≥ θ_x`, by projected gradient ascent;
/// concave in `ψ` when the energy is concave on the simplex.
fn sup_k(profile: &VarianceProfile, theta: f64, g_blocks: &[f64], g_x: f64) -> f64 {
    let two_theta = 2.0 * theta;
    let c = (1.0 - g_x / two_theta).max(0.0);
    let p = g_blocks.len();
    let w = profile.weights();
    let phi = |psi: &[f64]| -> Vec<f64> { (0..p).map(|k| g_blocks[k] / two_theta + c * psi[k]).collect() };
    let eval = |psi: &[f64]| -> Option<(f64, Vec<f64>)> {
        let f = phi(psi);
        let k = k_raw(profile, theta, &f);
        if !k.is_finite() {
            return None;
        }
        let grad = (0..p)
            .map(|i| {
                let s: f64 = (0..p).map(|l| profile.sigma_at(i, l) * f[l]).sum();
                -c * (2.0 * theta * theta * s + 0.5 * w[i] / f[i])
            })
            .collect();
        Some((-k, grad))
    };
    match projected_descent(w.to_vec(), 1e-13, 2000, eval) {
        Some(run) => -run.value,
        None => f64::NEG_INFINITY,
    }
}

/// `I_σ(x) = sup_θ (J(x,θ) − sup_ψ K(θ, φ(θ,x,ψ)))`, valid when
/// `ψ ↦ ⟨ψ,Sψ⟩` is concave on the simplex.
pub fn rate_function_concave(model: &SpectrumModel, x: f64) -> Result<f64> {
    let profile = model.profile();
    if !profile.energy_is_concave() {
        return Err(Error::OutOfRange(
            "the exchanged form needs <psi,S psi> concave on the simplex".into(),
        ));
    }
    if x < model.r_edge() {
        return Ok(f64::INFINITY);
    }
    if x == model.r_edge() {
        return Ok(0.0);
    }
    let point = model.point(x)?;
    let theta_x = point.g_total / 2.0;
    let a_leb = sigma_form_raw(profile, profile.weights(), profile.weights());
    let hi = theta_x + x / a_leb;
    // J(x, θ) on θ ≥ θ_x only needs the potential at x
    let l_x = model.log_potential_energy(x)?;
    let objective = |theta: f64| -> f64 {
        let j = theta * x - 0.5 - 0.5 * (2.0 * theta).ln() - 0.5 * l_x;
        j - sup_k(profile, theta, &point.g_blocks, point.g_total)
    };
    let grid = 48;
    let h = (hi - theta_x) / grid as f64;
    let (mut best_i, mut best_v) = (0, 0.0);
    for i in 1..=grid {
        let v = objective(theta_x + h * i as f64);
        if v > best_v {
            best_i = i;
            best_v = v;
        }
    }
    let lo = theta_x + h * (best_i.max(1) - 1) as f64;
    let up = (theta_x + h * (best_i + 1) as f64).min(hi);
    let (_, v) = golden_section_max(objective, lo, up, 1e-10);
    Ok(v.max(best_v).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;

    #[test]
    fn golden_section_finds_interior_and_boundary_maxima() {
        let (t, v) = golden_section_max(|t| -(t - 0.3) * (t - 0.3), 0.0, 1.0, 1e-12);
        assert!((t - 0.3).abs() < 1e-6 && v.abs() < 1e-12);
        let (t, _) = golden_section_max(|t| t, 0.0, 2.0, 1e-12);
        assert_eq!(t, 2.0);
    }

    #[test]
    fn constant_profile_gives_goe() {
        let m = SpectrumModel::new(VarianceProfile::constant(1.0).unwrap()).unwrap();
        let r = rate_function(&m, 3.0, &RateOptions::default()).unwrap();
        assert!((r.rate - oracles::goe_rate(3.0).unwrap()).abs() < 1e-6);
        assert!(rate_function(&m, 1.0, &RateOptions::default()).unwrap().rate.is_infinite());
        let c = rate_function_concave(&m, 3.0).unwrap();
        assert!((c - oracles::goe_rate(3.0).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn block_identity_at_three() {
        let one = VarianceProfile::constant(1.0).unwrap();
        let four = VarianceProfile::constant(4.0).unwrap();
        let b = VarianceProfile::block_diagonal(0.5, &one, &four).unwrap();
        let m = SpectrumModel::new(b).unwrap();
        let got = rate_function(&m, 3.0, &RateOptions::default()).unwrap();
        let want = oracles::block_rate(0.5, |y| oracles::constant_rate(1.0, y), |y| oracles::constant_rate(4.0, y), 3.0).unwrap();
        assert!((got.rate - want).abs() < 2e-3, "{} vs {want}", got.rate);
    }

    #[test]
    fn wishart_exchange() {
        let m = SpectrumModel::new(VarianceProfile::wishart(2.0).unwrap()).unwrap();
        let x = m.r_edge() + 0.3;
        let a = rate_function(&m, x, &RateOptions::default()).unwrap().rate;
        let b = rate_function_concave(&m, x).unwrap();
        assert!((a - b).abs() < 2e-3, "{a} vs {b}");
    }

    #[test]
    fn concavity_precondition() {
        let one = VarianceProfile::constant(1.0).unwrap();
        let b = VarianceProfile::block_diagonal(0.5, &one, &one).unwrap();
        let m = SpectrumModel::new(b).unwrap();
        assert!(rate_function_concave(&m, 3.0).is_err());
    }
}
