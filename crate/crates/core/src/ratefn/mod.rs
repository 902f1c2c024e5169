//! The functionals `J`, `K`, `φ(θ,x,ψ)`, `F`, `F̂` and the rate function
//! `I_σ(x) = inf_ψ sup_θ̂ F̂(θ̂, x, ψ)`, plus the outlier equation of the
//! tilted ensemble.

mod optimize;
pub(crate) mod report;
mod tilt;

pub use optimize::{golden_section_max, rate_function, rate_function_concave, RateOptions};
pub use report::{rate_curve_csv, RateEvalReport};
pub use tilt::{find_tilt_theta, nu, outlier_equation_z};

use crate::dyson::{PointData, SpectrumModel};
use crate::error::{Error, Result};
use crate::profile::{sigma_form_raw, VarianceProfile};
use crate::simplex::SimplexVector;

/// Width of the seam `|2θ − G(x)|` inside which `J` is evaluated on the
/// `2θ ≥ G(x)` side.
const SEAM: f64 = 1e-12;

fn check_dims(profile: &VarianceProfile, v: &SimplexVector) -> Result<()> {
    if v.len() != profile.blocks() {
        return Err(Error::DimensionMismatch {
            expected: profile.blocks(),
            got: v.len(),
        });
    }
    Ok(())
}

/// `J_{μ_σ}(x, θ)`.
pub fn eval_j(model: &SpectrumModel, x: f64, theta: f64) -> Result<f64> {
    if !(theta >= 0.0) {
        return Err(Error::OutOfRange(format!("theta must be >= 0, got {theta}")));
    }
    if theta == 0.0 {
        model.solve(x)?;
        return Ok(0.0);
    }
    let g = model.stieltjes(x)?;
    let two_theta = 2.0 * theta;
    let v = if two_theta >= g || (g - two_theta).abs() < SEAM {
        x
    } else {
        model.stieltjes_inverse(two_theta)?
    };
    let l = model.log_potential_energy(v)?;
    Ok(theta * v - 0.5 - 0.5 * two_theta.ln() - 0.5 * l)
}

/// The point `v = G⁻¹(2θ) ∨ x` at which the `φ⋆` part of `φ(θ,x,ψ)` is read.
fn phi_anchor(model: &SpectrumModel, x: f64, g_x: f64, theta: f64) -> Result<PointData> {
    let two_theta = 2.0 * theta;
    if two_theta >= g_x || (g_x - two_theta).abs() < SEAM {
        model.point(x)
    } else {
        model.point(model.stieltjes_inverse(two_theta)?)
    }
}

fn phi_from_anchor(anchor: &PointData, g_x: f64, theta: f64, psi: &[f64]) -> Vec<f64> {
    let two_theta = 2.0 * theta;
    let c = (1.0 - g_x / two_theta).max(0.0);
    anchor
        .g_blocks
        .iter()
        .zip(psi)
        .map(|(gk, p)| gk / two_theta + c * p)
        .collect()
}

/// `φ(θ,x,ψ)_k = G_k(v)/(2θ) + (1 − G(x)/(2θ))₊ ψ_k` with `v = G⁻¹(2θ) ∨ x`.
pub fn eval_phi(model: &SpectrumModel, theta: f64, x: f64, psi: &SimplexVector) -> Result<SimplexVector> {
    check_dims(model.profile(), psi)?;
    if !(theta > 0.0) {
        return Err(Error::OutOfRange(format!("phi needs theta > 0, got {theta}")));
    }
    let g_x = model.stieltjes(x)?;
    let anchor = phi_anchor(model, x, g_x, theta)?;
    SimplexVector::normalized(phi_from_anchor(&anchor, g_x, theta, psi.as_slice()))
}

/// `K(θ, φ) = θ² ⟨φ, Sφ⟩ + ½ Σ_k w_k log(φ_k / w_k)`; `−∞` when some
/// `φ_k ≤ 0`.
pub fn eval_k(profile: &VarianceProfile, theta: f64, phi: &SimplexVector) -> Result<f64> {
    check_dims(profile, phi)?;
    Ok(k_raw(profile, theta, phi.as_slice()))
}

pub(crate) fn k_raw(profile: &VarianceProfile, theta: f64, phi: &[f64]) -> f64 {
    if phi.iter().any(|v| !(*v > 0.0)) {
        return f64::NEG_INFINITY;
    }
    let w = profile.weights();
    let entropy: f64 = phi.iter().zip(w).map(|(f, wk)| wk * (f / wk).ln()).sum();
    theta * theta * sigma_form_raw(profile, phi, phi) + 0.5 * entropy
}

/// `F(θ, x, ψ) = J(x, θ) − K(θ, φ(θ, x, ψ))`.
pub fn eval_f(model: &SpectrumModel, theta: f64, x: f64, psi: &SimplexVector) -> Result<f64> {
    check_dims(model.profile(), psi)?;
    if !(theta >= 0.0) {
        return Err(Error::OutOfRange(format!("theta must be >= 0, got {theta}")));
    }
    if theta == 0.0 {
        // φ(0⁺) = weights, so both terms vanish
        model.solve(x)?;
        return Ok(0.0);
    }
    let j = eval_j(model, x, theta)?;
    let g_x = model.stieltjes(x)?;
    let anchor = phi_anchor(model, x, g_x, theta)?;
    let phi = phi_from_anchor(&anchor, g_x, theta, psi.as_slice());
    Ok(j - k_raw(model.profile(), theta, &phi))
}

/// Data of `F̂(·, x, ψ)` that do not depend on `θ̂`.
#[derive(Debug, Clone)]
pub(crate) struct FHat<'a> {
    profile: &'a VarianceProfile,
    /// `m_k(x)`, the block densities of `φ⋆(x) dt`.
    m: &'a [f64],
}

impl<'a> FHat<'a> {
    pub(crate) fn new(profile: &'a VarianceProfile, point: &'a PointData) -> Self {
        Self { profile, m: &point.m }
    }

    pub(crate) fn value(&self, theta_hat: f64, psi: &[f64]) -> f64 {
        if theta_hat == 0.0 {
            return 0.0;
        }
        let w = self.profile.weights();
        let a = sigma_form_raw(self.profile, psi, psi);
        let mut linear = 0.0;
        let mut log_term = 0.0;
        for k in 0..psi.len() {
            linear += psi[k] / self.m[k];
            log_term += w[k] * (2.0 * theta_hat * psi[k] / (w[k] * self.m[k])).ln_1p();
        }
        theta_hat * linear - theta_hat * theta_hat * a - 0.5 * log_term
    }

    /// `∂F̂/∂ψ_k` at fixed `θ̂`.
    pub(crate) fn gradient(&self, theta_hat: f64, psi: &[f64]) -> Vec<f64> {
        let w = self.profile.weights();
        let p = psi.len();
        (0..p)
            .map(|k| {
                let s_psi: f64 = (0..p).map(|l| self.profile.sigma_at(k, l) * psi[l]).sum();
                theta_hat / self.m[k] - 2.0 * theta_hat * theta_hat * s_psi
                    - theta_hat * w[k] / (w[k] * self.m[k] + 2.0 * theta_hat * psi[k])
            })
            .collect()
    }

    /// `sup_θ̂≥0 F̂` by golden section on `[0, x/a]`; `None` when `a = 0`
    /// (the supremum is `+∞`).
    pub(crate) fn sup(&self, x: f64, psi: &[f64]) -> Option<(f64, f64)> {
        let a = sigma_form_raw(self.profile, psi, psi);
        if !(a > 0.0) {
            return None;
        }
        Some(golden_section_max(|t| self.value(t, psi), 0.0, x / a, 1e-10))
    }
}

/// `F̂(θ̂, x, ψ) = θ̂ Σ ψ_k/m_k − θ̂² ⟨ψ,Sψ⟩ − ½ Σ w_k log(2θ̂ψ_k/(w_k m_k) + 1)`.
pub fn eval_f_hat(model: &SpectrumModel, theta_hat: f64, x: f64, psi: &SimplexVector) -> Result<f64> {
    check_dims(model.profile(), psi)?;
    if !(theta_hat >= 0.0) {
        return Err(Error::OutOfRange(format!("theta_hat must be >= 0, got {theta_hat}")));
    }
    let point = model.point(x)?;
    Ok(FHat::new(model.profile(), &point).value(theta_hat, psi.as_slice()))
}

/// Analytic `∂F̂/∂ψ` at fixed `θ̂`.
pub fn eval_f_hat_gradient(model: &SpectrumModel, theta_hat: f64, x: f64, psi: &SimplexVector) -> Result<Vec<f64>> {
    check_dims(model.profile(), psi)?;
    let point = model.point(x)?;
    Ok(FHat::new(model.profile(), &point).gradient(theta_hat, psi.as_slice()))
}

/// `(θ*, sup_θ F(θ, x, ψ))`, searched on `[θ_x, θ_x + x/⟨ψ,Sψ⟩]` with
/// `θ_x = G(x)/2`. When `⟨ψ,Sψ⟩ = 0` both entries are `+∞`.
pub fn sup_theta(model: &SpectrumModel, x: f64, psi: &SimplexVector) -> Result<(f64, f64)> {
    check_dims(model.profile(), psi)?;
    let point = model.point(x)?;
    let fhat = FHat::new(model.profile(), &point);
    Ok(match fhat.sup(x, psi.as_slice()) {
        Some((t, v)) => (t + point.g_total / 2.0, v),
        None => (f64::INFINITY, f64::INFINITY),
    })
}
