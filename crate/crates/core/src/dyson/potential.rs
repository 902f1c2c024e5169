use serde::{Deserialize, Serialize};

use super::{measure::support_edge_with, solve_real, sw_apply, EdgeOptions, RealSolution};
use crate::error::{Error, Result};
use crate::profile::VarianceProfile;
use crate::quad;

/// Real-axis spectral data of one point above the edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointData {
    pub x: f64,
    pub m: Vec<f64>,
    pub g_blocks: Vec<f64>,
    pub g_total: f64,
}

/// A profile together with its located edge; the entry point for every
/// evaluation on `(r_σ, ∞)`.
#[derive(Debug, Clone)]
pub struct SpectrumModel {
    profile: VarianceProfile,
    r_edge: f64,
    edge: RealSolution,
    g_edge: f64,
    quad_tol: f64,
}

/// Margin above the edge required by the free-standing evaluators.
const EDGE_MARGIN: f64 = 1e-9;

impl SpectrumModel {
    pub fn new(profile: VarianceProfile) -> Result<Self> {
        let (r_edge, edge) = support_edge_with(&profile, &EdgeOptions::default())?;
        let g_edge = edge.g_total(&profile);
        Ok(Self {
            profile,
            r_edge,
            edge,
            g_edge,
            quad_tol: 1e-9,
        })
    }

    /// Absolute tolerance of the tail integral in [`Self::log_potential`].
    pub fn with_quadrature_tolerance(mut self, tol: f64) -> Self {
        self.quad_tol = tol;
        self
    }

    pub fn profile(&self) -> &VarianceProfile {
        &self.profile
    }

    pub fn r_edge(&self) -> f64 {
        self.r_edge
    }

    pub fn l_edge(&self) -> f64 {
        -self.r_edge
    }

    /// `G(r_σ⁺)`, the supremum of `G` on the real half-line above the edge.
    pub fn g_at_edge(&self) -> f64 {
        self.g_edge
    }

    pub fn solve(&self, x: f64) -> Result<RealSolution> {
        if !(x >= self.r_edge) {
            return Err(Error::BelowEdge { x, edge: self.r_edge });
        }
        if x == self.r_edge {
            return Ok(self.edge.clone());
        }
        // the edge solution seeds Newton well close to the edge but overshoots far away
        let seed = (x < 2.0 * self.r_edge + 1.0).then_some(self.edge.m.as_slice());
        solve_real(&self.profile, x, seed).map_err(|e| match e {
            Error::BelowEdge { x, .. } => Error::BelowEdge { x, edge: self.r_edge },
            other => other,
        })
    }

    pub fn point(&self, x: f64) -> Result<PointData> {
        let sol = self.solve(x)?;
        let g_blocks = sol.g_blocks(&self.profile);
        Ok(PointData {
            x,
            g_total: g_blocks.iter().sum(),
            g_blocks,
            m: sol.m,
        })
    }

    pub fn stieltjes(&self, x: f64) -> Result<f64> {
        Ok(self.solve(x)?.g_total(&self.profile))
    }

    pub fn stieltjes_derivative(&self, x: f64) -> Result<f64> {
        self.solve(x)?.g_derivative(&self.profile)
    }

    /// The unique `v ≥ r_σ` with `G(v) = g`, for `0 < g ≤ G(r_σ⁺)`.
    pub fn stieltjes_inverse(&self, g: f64) -> Result<f64> {
        if !(g > 0.0) || g > self.g_edge {
            return Err(Error::OutOfRange(format!(
                "G^-1({g}) undefined: admissible range is (0, {}]",
                self.g_edge
            )));
        }
        if g == self.g_edge {
            return Ok(self.r_edge);
        }
        // G(v) ≤ 1/(v − r_σ) brackets the root
        let mut lo = self.r_edge;
        let mut hi = self.r_edge + 1.0 / g;
        for _ in 0..200 {
            if hi - lo <= 1e-9 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.stieltjes(mid)? > g {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut v = 0.5 * (lo + hi);
        for _ in 0..50 {
            let sol = self.solve(v)?;
            let f = sol.g_total(&self.profile) - g;
            if f.abs() <= 1e-15 * g.max(1.0) {
                break;
            }
            if f > 0.0 {
                lo = v;
            } else {
                hi = v;
            }
            let d = sol.g_derivative(&self.profile)?;
            let mut next = v - f / d;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - v).abs() <= 4.0 * f64::EPSILON * v {
                v = next;
                break;
            }
            v = next;
        }
        Ok(v)
    }

    /// `∫ log(x − y) dμ_σ(y) = log x − ∫_x^∞ (G(s) − 1/s) ds`, with the
    /// tail integral mapped to `t = x/s ∈ (0, 1]`.
    pub fn log_potential(&self, x: f64) -> Result<f64> {
        if !(x >= self.r_edge) || x <= 0.0 {
            return Err(Error::BelowEdge { x, edge: self.r_edge });
        }
        let w = self.profile.weights();
        let mut failure = None;
        // G(s) − 1/s = (1/s) Σ_k w_k m_k (SWm)_k without cancellation, so the
        // t-integrand is Q(x/t)/t with Q(s) = Σ_k w_k m_k (SWm)_k.
        let integrand = |t: f64| -> f64 {
            if failure.is_some() {
                return 0.0;
            }
            let s = x / t;
            match self.solve(s) {
                Ok(sol) => {
                    let c = sw_apply(&self.profile, &sol.m);
                    let q: f64 = (0..w.len()).map(|k| w[k] * sol.m[k] * c[k]).sum();
                    q / t
                }
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        };
        let r = quad::integrate(integrand, 0.0, 1.0, self.quad_tol);
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(x.ln() - r.value)
    }

    /// The same potential in closed form,
    /// `−Σ_k w_k log m_k + ½ Σ_{kl} w_k σ_{kl} w_l m_k m_l`.
    ///
    /// Differentiating and using the Dyson equation gives `Σ_k w_k m_k = G`,
    /// and the expression tends to `log x` at infinity, so it agrees with
    /// the tail integral. It costs one Dyson solve and stays exact up to the
    /// edge.
    pub fn log_potential_energy(&self, x: f64) -> Result<f64> {
        let sol = self.solve(x)?;
        Ok(energy_from_m(&self.profile, &sol.m))
    }
}

pub(crate) fn energy_from_m(profile: &VarianceProfile, m: &[f64]) -> f64 {
    let w = profile.weights();
    let c = sw_apply(profile, m);
    (0..m.len())
        .map(|k| w[k] * (-m[k].ln() + 0.5 * m[k] * c[k]))
        .sum()
}

fn model_with_margin(profile: &VarianceProfile, x: f64) -> Result<SpectrumModel> {
    let model = SpectrumModel::new(profile.clone())?;
    if !(x > model.r_edge() + EDGE_MARGIN) {
        return Err(Error::BelowEdge { x, edge: model.r_edge() });
    }
    Ok(model)
}

/// `G_{μ_σ}(x)` for real `x > r_σ`.
pub fn stieltjes_total(profile: &VarianceProfile, x: f64) -> Result<f64> {
    model_with_margin(profile, x)?.stieltjes(x)
}

/// `G_{μ_σ}^{-1}(two_theta)`.
pub fn stieltjes_inverse(profile: &VarianceProfile, two_theta: f64) -> Result<f64> {
    SpectrumModel::new(profile.clone())?.stieltjes_inverse(two_theta)
}

/// `∫ log(x − y) dμ_σ(y)` for `x > r_σ`.
pub fn log_potential(profile: &VarianceProfile, x: f64) -> Result<f64> {
    model_with_margin(profile, x)?.log_potential(x)
}
