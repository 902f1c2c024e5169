//! Probability vectors on the blocks of a partition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// A probability vector on `p` blocks. Entries are block masses, so the
/// density of the associated measure on block `k` is `values[k] / w_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    /// Validates nonnegativity and unit sum (within 1e-12), then renormalizes.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::OutOfRange("empty simplex vector".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::OutOfRange(format!(
                "simplex vector has a negative or non-finite entry: {values:?}"
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::OutOfRange(format!(
                "simplex vector sums to {sum}, not 1"
            )));
        }
        Ok(Self(values.into_iter().map(|v| v / sum).collect()))
    }

    /// Normalizes an arbitrary nonnegative, not identically zero vector.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let sum: f64 = values.iter().sum();
        if !(sum > 0.0) || values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "cannot normalize {values:?} onto the simplex"
            )));
        }
        Ok(Self(values.into_iter().map(|v| v / sum).collect()))
    }

    pub fn uniform(p: usize) -> Self {
        Self(vec![1.0 / p as f64; p])
    }

    pub fn vertex(p: usize, k: usize) -> Self {
        let mut v = vec![0.0; p];
        v[k] = 1.0;
        Self(v)
    }

    /// Used by optimizers whose iterates are simplex points by construction.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for SimplexVector {
    type Output = f64;

    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_to_simplex(y: &[f64]) -> Vec<f64> {
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
        }
    }
    let mut x: Vec<f64> = y.iter().map(|v| (v - tau).max(0.0)).collect();
    let s: f64 = x.iter().sum();
    for v in &mut x {
        *v /= s;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_vectors() {
        assert!(SimplexVector::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexVector::new(vec![-0.1, 1.1]).is_err());
        assert!(SimplexVector::new(vec![]).is_err());
        assert!(SimplexVector::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn projection_lands_on_simplex() {
        let x = project_to_simplex(&[0.9, 0.8, -3.0]);
        assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((x[0] - 0.55).abs() < 1e-12 && (x[1] - 0.45).abs() < 1e-12);
        assert_eq!(x[2], 0.0);
        // points already on the simplex are fixed
        let y = project_to_simplex(&[0.2, 0.3, 0.5]);
        assert!((y[0] - 0.2).abs() < 1e-15 && (y[2] - 0.5).abs() < 1e-15);
    }
}
