//! Outlier location of the tilted ensemble `H̃ + 2θE`.
//!
//! With `D(θ, z) = diag(m_k(z) φ(θ,x,ψ)_k)` the outlier solves
//! `det(I − 2θ S D) = 0`, i.e. `ν = 2θ λ_max(√D S √D) = 1`. The unit-mass
//! `m_k` is the convention under which `σ ≡ 1` reduces to the scalar BBP
//! condition `2θ G(z) = 1`.

use nalgebra::DMatrix;

use super::{eval_phi, phi_anchor, phi_from_anchor};
use crate::dyson::SpectrumModel;
use crate::error::{Error, Result};
use crate::profile::{sigma_form_raw, VarianceProfile};
use crate::simplex::SimplexVector;

fn lambda_max_scaled(profile: &VarianceProfile, d: &[f64]) -> f64 {
    let p = d.len();
    if p == 1 {
        return profile.sigma_at(0, 0) * d[0];
    }
    let s: Vec<f64> = d.iter().map(|v| v.max(0.0).sqrt()).collect();
    DMatrix::<f64>::from_fn(p, p, |k, l| s[k] * profile.sigma_at(k, l) * s[l])
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn nu_raw(model: &SpectrumModel, two_theta: f64, phi: &[f64], z: f64) -> Result<f64> {
    let m = model.solve(z)?.m;
    let d: Vec<f64> = m.iter().zip(phi).map(|(a, b)| a * b).collect();
    Ok(two_theta * lambda_max_scaled(model.profile(), &d))
}

fn require_energy(model: &SpectrumModel, psi: &SimplexVector) -> Result<()> {
    if psi.len() != model.profile().blocks() {
        return Err(Error::DimensionMismatch {
            expected: model.profile().blocks(),
            got: psi.len(),
        });
    }
    if !(sigma_form_raw(model.profile(), psi.as_slice(), psi.as_slice()) > 0.0) {
        return Err(Error::OutOfRange("tilt direction needs <psi,S psi> > 0".into()));
    }
    Ok(())
}

/// `ν(θ, z) = 2θ λ_max(√D S √D)` with `φ = φ(θ, x, ψ)`.
pub fn nu(model: &SpectrumModel, theta: f64, x: f64, psi: &SimplexVector, z: f64) -> Result<f64> {
    if theta == 0.0 {
        model.solve(z)?;
        return Ok(0.0);
    }
    let phi = eval_phi(model, theta, x, psi)?;
    nu_raw(model, 2.0 * theta, phi.as_slice(), z)
}

/// Largest `z > r_σ` with `ν(θ, z) = 1`, or `r_σ` when there is none.
pub fn outlier_equation_z(model: &SpectrumModel, theta: f64, x: f64, psi: &SimplexVector) -> Result<f64> {
    require_energy(model, psi)?;
    if !(theta > 0.0) {
        return Err(Error::OutOfRange(format!("outlier equation needs theta > 0, got {theta}")));
    }
    let phi = eval_phi(model, theta, x, psi)?;
    let two_theta = 2.0 * theta;
    let r = model.r_edge();
    let nu_at = |z: f64| nu_raw(model, two_theta, phi.as_slice(), z);
    if nu_at(r)? <= 1.0 {
        return Ok(r);
    }
    let mut lo = r;
    let mut hi = x.max(r + 1.0);
    let mut expansions = 0;
    while nu_at(hi)? >= 1.0 {
        hi = r + 2.0 * (hi - r);
        expansions += 1;
        if expansions > 200 {
            return Err(Error::BracketFailure("outlier equation has no upper bracket".into()));
        }
    }
    while hi - lo > 1e-14 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if nu_at(mid)? >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `θ*` with `z(θ*) = x`. On `θ ≥ θ_x` the point `x` is fixed and `ν(θ, x)`
/// increases in `θ`, equal at `θ_x` to the stability radius (`< 1`).
pub fn find_tilt_theta(model: &SpectrumModel, x: f64, psi: &SimplexVector) -> Result<f64> {
    require_energy(model, psi)?;
    let g_x = model.stieltjes(x)?;
    let anchor = phi_anchor(model, x, g_x, g_x)?;
    let nu_x = |theta: f64| -> Result<f64> {
        let phi = phi_from_anchor(&anchor, g_x, theta, psi.as_slice());
        nu_raw(model, 2.0 * theta, &phi, x)
    };
    let theta_x = g_x / 2.0;
    let mut lo = theta_x;
    let mut hi = 2.0 * theta_x;
    let mut expansions = 0;
    while nu_x(hi)? < 1.0 {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 200 {
            return Err(Error::BracketFailure("tilt strength has no upper bracket".into()));
        }
    }
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if nu_x(mid)? < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;

    fn semicircle() -> SpectrumModel {
        SpectrumModel::new(VarianceProfile::constant(1.0).unwrap()).unwrap()
    }

    #[test]
    fn scalar_bbp_reduction() {
        let m = semicircle();
        let one = SimplexVector::uniform(1);
        let theta = find_tilt_theta(&m, 3.0, &one).unwrap();
        let g3 = m.stieltjes(3.0).unwrap();
        assert!((theta - 1.0 / (2.0 * g3)).abs() < 1e-10);
        assert!((oracles::bbp_outlier(theta) - 3.0).abs() < 1e-9);
        let z = outlier_equation_z(&m, theta, 3.0, &one).unwrap();
        assert!((z - 3.0).abs() < 1e-8);
        // subcritical tilt stays at the edge
        assert_eq!(outlier_equation_z(&m, 0.4, 3.0, &one).unwrap(), m.r_edge());
        for t in [0.6, 1.0, 2.0] {
            let z = outlier_equation_z(&m, t, 3.0, &one).unwrap();
            assert!((z - oracles::bbp_outlier(t)).abs() < 1e-8, "θ = {t}: {z}");
        }
    }

    #[test]
    fn theta_star_grows_with_x() {
        let m = semicircle();
        let one = SimplexVector::uniform(1);
        let a = find_tilt_theta(&m, 2.5, &one).unwrap();
        let b = find_tilt_theta(&m, 3.5, &one).unwrap();
        assert!(b > a);
    }

    #[test]
    fn nu_limits_and_round_trip() {
        let w = SpectrumModel::new(VarianceProfile::wishart(2.0).unwrap()).unwrap();
        let x = w.r_edge() + 0.4;
        let psi = SimplexVector::new(vec![0.4, 0.6]).unwrap();
        assert_eq!(nu(&w, 0.0, x, &psi, x).unwrap(), 0.0);
        assert!(nu(&w, 1e6, x, &psi, x).unwrap() > 1e3);
        let theta = find_tilt_theta(&w, x, &psi).unwrap();
        let z = outlier_equation_z(&w, theta, x, &psi).unwrap();
        assert!((z - x).abs() < 1e-8, "{z} vs {x}");
        assert!(find_tilt_theta(&w, x, &SimplexVector::vertex(2, 1)).is_err());
    }
}
