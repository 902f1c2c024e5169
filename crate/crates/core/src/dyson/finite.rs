use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::sup_distance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteDysonSolution {
    pub z: Complex64,
    pub m: Vec<Complex64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `1/m_i = z − (1/N) Σ_j Σ_{ij} m_j` for a row-major `N×N` variance
/// matrix `sigma`.
pub fn solve_dyson_finite(sigma: &[f64], n: usize, z: Complex64) -> Result<FiniteDysonSolution> {
    if n == 0 || sigma.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: sigma.len(),
        });
    }
    if !(z.im > 0.0) {
        return Err(Error::OutOfRange(format!("finite-N Dyson system needs Im z > 0, got {z}")));
    }
    for i in 0..n {
        for j in 0..i {
            if sigma[i * n + j] != sigma[j * n + i] {
                return Err(Error::InvalidProfile(format!("variance matrix not symmetric at ({i},{j})")));
            }
        }
    }
    if sigma.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidProfile("variance matrix has a negative entry".into()));
    }
    let scale = 1.0 / n as f64;
    let mut m = vec![1.0 / z; n];
    let mut next = vec![Complex64::default(); n];
    let mut damping = false;
    let mut prev = f64::INFINITY;
    let mut stalled = 0;
    let max_iterations = 100_000;
    let mut d = f64::INFINITY;
    for it in 1..=max_iterations {
        for (i, slot) in next.iter_mut().enumerate() {
            let row = &sigma[i * n..(i + 1) * n];
            let s: Complex64 = row.iter().zip(&m).map(|(a, b)| b * *a).sum::<Complex64>() * scale;
            let v = 1.0 / (z - s);
            *slot = if damping { 0.5 * (v + m[i]) } else { v };
        }
        d = sup_distance(&m, &next);
        std::mem::swap(&mut m, &mut next);
        if d < 1e-13 {
            return Ok(FiniteDysonSolution {
                z,
                m,
                iterations: it,
                residual: d,
            });
        }
        if d > 0.999 * prev {
            stalled += 1;
            damping |= stalled > 20;
        } else {
            stalled = 0;
        }
        prev = d;
    }
    Err(Error::NonConvergence {
        iterations: max_iterations,
        residual: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyson::solve_dyson;
    use crate::profile::VarianceProfile;

    #[test]
    fn scalar_case() {
        let sol = solve_dyson_finite(&[1.0], 1, Complex64::new(3.0, 1e-9)).unwrap();
        assert!((sol.m[0].re - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-7);
    }

    #[test]
    fn constant_profile_gives_identical_entries() {
        let p = VarianceProfile::constant(1.0).unwrap();
        let n = 37;
        let z = Complex64::new(0.4, 0.8);
        let sol = solve_dyson_finite(&p.sample_sigma_matrix(n), n, z).unwrap();
        let cont = solve_dyson(&p, z, None).unwrap();
        for m in &sol.m {
            assert!((m - cont.m[0]).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_real_z_and_bad_shape() {
        assert!(solve_dyson_finite(&[1.0], 1, Complex64::new(3.0, 0.0)).is_err());
        assert!(solve_dyson_finite(&[1.0, 2.0], 1, Complex64::new(0.0, 1.0)).is_err());
        assert!(solve_dyson_finite(&[1.0, 2.0, 3.0, 1.0], 2, Complex64::new(0.0, 1.0)).is_err());
    }
}
