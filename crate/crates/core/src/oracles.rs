//! Closed-form references: semicircle and GOE, Marchenko–Pastur and the
//! Wishart linearization, the scalar BBP outlier and the block-diagonal
//! composition of rate functions.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A reference value together with its inputs, for self-describing reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub name: String,
    pub inputs: BTreeMap<String, f64>,
    pub value: f64,
    pub formula_ref: String,
}

impl OracleValue {
    pub fn new(name: &str, inputs: &[(&str, f64)], value: f64, formula_ref: &str) -> Self {
        Self {
            name: name.to_string(),
            inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            value,
            formula_ref: formula_ref.to_string(),
        }
    }
}

/// Rate function of the largest eigenvalue of the GOE (edge 2):
/// `½[(x/2)√(x²−4) − 2 log((x+√(x²−4))/2)]`.
pub fn goe_rate(x: f64) -> Result<f64> {
    if !(x >= 2.0) {
        return Err(Error::OutOfRange(format!("GOE rate needs x >= 2, got {x}")));
    }
    let s = (x * x - 4.0).sqrt();
    Ok(0.5 * (0.5 * x * s - 2.0 * ((x + s) / 2.0).ln()))
}

pub fn semicircle_density(x: f64) -> f64 {
    if x.abs() >= 2.0 {
        0.0
    } else {
        (4.0 - x * x).sqrt() / (2.0 * std::f64::consts::PI)
    }
}

/// `(z − √(z−2)√(z+2))/2`, analytic off `[−2, 2]`.
pub fn semicircle_stieltjes(z: Complex64) -> Complex64 {
    (z - (z - 2.0).sqrt() * (z + 2.0).sqrt()) / 2.0
}

/// `∫ log(x − y) dμ_sc(y)` for `x ≥ 2`.
pub fn semicircle_log_potential(x: f64) -> f64 {
    let s = (x * x - 4.0).max(0.0).sqrt();
    x * x / 4.0 - x * s / 4.0 + ((x + s) / 2.0).ln() - 0.5
}

/// Edges `(1 ∓ √α)²` of the Marchenko–Pastur law of parameter `α`.
pub fn mp_edges(alpha: f64) -> (f64, f64) {
    let r = alpha.sqrt();
    ((1.0 - r).powi(2), (1.0 + r).powi(2))
}

/// Stieltjes transform of the Marchenko–Pastur law of parameter `α`,
/// `(z − α + 1 − √((z−α−1)² − 4α))/(2z)`, on the branch that decays like
/// `1/z`. The square root is taken as `√(z−a)√(z−b)`, which places the cut
/// exactly on the support.
pub fn mp_stieltjes(alpha: f64, z: Complex64) -> Result<Complex64> {
    if !(alpha > 0.0) {
        return Err(Error::OutOfRange(format!("MP parameter must be positive, got {alpha}")));
    }
    let (a, b) = mp_edges(alpha);
    if z.im == 0.0 && z.re >= a && z.re <= b {
        return Err(Error::OutOfRange(format!(
            "z = {} lies on the support [{a}, {b}]; the branch is ambiguous",
            z.re
        )));
    }
    if z == Complex64::new(0.0, 0.0) {
        return Err(Error::OutOfRange("MP transform has a pole at 0".into()));
    }
    let s = (z - a).sqrt() * (z - b).sqrt();
    Ok((z - alpha + 1.0 - s) / (2.0 * z))
}

/// The other root of the Marchenko–Pastur quadratic, for real `z` beyond
/// the right edge.
pub fn mp_stieltjes_bar(alpha: f64, z: f64) -> Result<f64> {
    let (_, b) = mp_edges(alpha);
    if !(alpha > 0.0) || !(z >= b) {
        return Err(Error::OutOfRange(format!(
            "conjugate MP branch needs z >= {b}, got {z}"
        )));
    }
    let disc = ((z - alpha - 1.0).powi(2) - 4.0 * alpha).max(0.0);
    Ok((z - alpha + 1.0 + disc.sqrt()) / (2.0 * z))
}

/// Unit-mass block transforms `(m_1, m_2)` of the Wishart profile, from
/// the two Marchenko–Pastur laws of the linearization.
pub fn wishart_block_transforms(alpha: f64, z: Complex64) -> (Complex64, Complex64) {
    let m1 = z * (1.0 + alpha) * mp_stieltjes(alpha, (1.0 + alpha) * z * z).expect("off-axis");
    let c = (1.0 + alpha) / alpha;
    let m2 = z * c * mp_stieltjes(1.0 / alpha, c * z * z).expect("off-axis");
    (m1, m2)
}

/// `G_{μ_σ}(z) = 2zG_{π_α}((1+α)z²) + (α−1)/((1+α)z)` for the Wishart profile.
pub fn wishart_stieltjes(alpha: f64, z: Complex64) -> Complex64 {
    2.0 * z * mp_stieltjes(alpha, (1.0 + alpha) * z * z).expect("off-axis")
        + (alpha - 1.0) / ((1.0 + alpha) * z)
}

/// Right edge `(1+√α)/√(1+α)` of the Wishart profile's limiting measure.
pub fn wishart_edge(alpha: f64) -> f64 {
    (1.0 + alpha.sqrt()) / (1.0 + alpha).sqrt()
}

/// Outlier `2θ + 1/(2θ)` of the semicircle perturbed by a rank-one matrix of
/// strength `2θ`; the edge 2 when subcritical.
pub fn bbp_outlier(theta_eff: f64) -> f64 {
    if theta_eff <= 0.5 {
        2.0
    } else {
        2.0 * theta_eff + 1.0 / (2.0 * theta_eff)
    }
}

/// `min{α I₁(x/√α), (1−α) I₂(x/√(1−α))}`.
pub fn block_rate<F1, F2>(alpha: f64, i1: F1, i2: F2, x: f64) -> Result<f64>
where
    F1: Fn(f64) -> Result<f64>,
    F2: Fn(f64) -> Result<f64>,
{
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::OutOfRange(format!("block fraction must lie in (0,1), got {alpha}")));
    }
    let a = alpha * i1(x / alpha.sqrt())?;
    let b = (1.0 - alpha) * i2(x / (1.0 - alpha).sqrt())?;
    Ok(a.min(b))
}

/// Rate function of a constant profile `σ ≡ c`, by scaling the GOE rate.
pub fn constant_rate(c: f64, x: f64) -> Result<f64> {
    let y = x / c.sqrt();
    if y < 2.0 {
        return Ok(f64::INFINITY);
    }
    goe_rate(y)
}
