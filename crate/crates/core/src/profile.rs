//! Variance profiles: piecewise-constant block profiles, grid-sampled
//! continuous profiles, config loading and discretization.
//!
//! A piecewise-constant profile is a partition of `[0,1]` into `p`
//! intervals of lengths `w_k` (only the lengths matter) together with a
//! symmetric nonnegative `p × p` matrix `σ_{kl}`: the entry `(i,j)` of the
//! size-`N` matrix has variance `σ_{kl}/N` when `t_i ∈ I_k`, `t_j ∈ I_l`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::SimplexVector;

/// Tolerance on the sum of input weights before exact renormalization.
pub const WEIGHT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceProfile {
    weights: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    #[serde(default)]
    label: String,
}

impl VarianceProfile {
    pub fn new(weights: Vec<f64>, sigma: Vec<Vec<f64>>, label: impl Into<String>) -> Result<Self> {
        let p = weights.len();
        if p == 0 {
            return Err(Error::InvalidProfile("no blocks".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidProfile(format!(
                "weights must be positive: {weights:?}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidProfile(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        if sigma.len() != p || sigma.iter().any(|row| row.len() != p) {
            return Err(Error::InvalidProfile(format!(
                "sigma must be {p}x{p} to match the weights"
            )));
        }
        for k in 0..p {
            for l in 0..p {
                let s = sigma[k][l];
                if !s.is_finite() || s < 0.0 {
                    return Err(Error::InvalidProfile(format!(
                        "sigma[{k}][{l}] = {s} is not a nonnegative real"
                    )));
                }
                if s != sigma[l][k] {
                    return Err(Error::InvalidProfile(format!(
                        "sigma is not symmetric at ({k},{l}): {s} vs {}",
                        sigma[l][k]
                    )));
                }
            }
        }
        if sigma.iter().flatten().all(|s| *s == 0.0) {
            return Err(Error::InvalidProfile("sigma is identically zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self {
            weights,
            sigma,
            label: label.into(),
        })
    }

    /// `σ ≡ value` on `[0,1]²`.
    pub fn constant(value: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![vec![value]], format!("constant({value})"))
    }

    /// Linearized Wishart profile: two blocks of lengths `1/(1+α)` and
    /// `α/(1+α)` with unit variance off the diagonal blocks only.
    pub fn wishart(alpha: f64) -> Result<Self> {
        if !(alpha > 1.0) || !alpha.is_finite() {
            return Err(Error::InvalidProfile(format!(
                "wishart alpha must be > 1, got {alpha}"
            )));
        }
        let w1 = 1.0 / (1.0 + alpha);
        Self::new(
            vec![w1, 1.0 - w1],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            format!("wishart({alpha})"),
        )
    }

    /// Block-diagonal composition: `first` rescaled onto `[0,α]`, `second`
    /// onto `[α,1]`, zero variance between them.
    pub fn block_diagonal(alpha: f64, first: &Self, second: &Self) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidProfile(format!(
                "block alpha must lie in (0,1), got {alpha}"
            )));
        }
        let (p1, p2) = (first.blocks(), second.blocks());
        let p = p1 + p2;
        let mut weights = Vec::with_capacity(p);
        weights.extend(first.weights.iter().map(|w| alpha * w));
        weights.extend(second.weights.iter().map(|w| (1.0 - alpha) * w));
        let mut sigma = vec![vec![0.0; p]; p];
        for k in 0..p1 {
            for l in 0..p1 {
                sigma[k][l] = first.sigma[k][l];
            }
        }
        for k in 0..p2 {
            for l in 0..p2 {
                sigma[p1 + k][p1 + l] = second.sigma[k][l];
            }
        }
        // renormalize against rounding in alpha*w
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Self::new(
            weights,
            sigma,
            format!("block({alpha}, {}, {})", first.label, second.label),
        )
    }

    /// Built-in profiles addressable by name: `constant`, `wishart`
    /// (α = 2), `two-block` (α = ½ with σ₁ ≡ 1, σ₂ ≡ 4) and `block-third`
    /// (α = ⅓ with σ₁ ≡ 1, σ₂ ≡ 2).
    pub fn named(name: &str) -> Result<Self> {
        let block = |alpha: f64, a: f64, b: f64| {
            Self::block_diagonal(alpha, &Self::constant(a)?, &Self::constant(b)?)
        };
        let p = match name {
            "constant" => Self::constant(1.0)?,
            "wishart" => Self::wishart(2.0)?,
            "two-block" => block(0.5, 1.0, 4.0)?,
            "block-third" => block(1.0 / 3.0, 1.0, 2.0)?,
            other => return Err(Error::Config(format!("unknown profile name '{other}'"))),
        };
        Ok(p.with_label(name))
    }

    pub const NAMES: [&'static str; 4] = ["constant", "wishart", "two-block", "block-third"];

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn blocks(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sigma(&self) -> &[Vec<f64>] {
        &self.sigma
    }

    pub fn sigma_at(&self, k: usize, l: usize) -> f64 {
        self.sigma[k][l]
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `A = max σ_{kl}`.
    pub fn max_variance(&self) -> f64 {
        self.sigma.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// `⟨Leb, S Leb⟩ = Σ σ_{kl} w_k w_l`.
    pub fn lebesgue_energy(&self) -> f64 {
        bilinear(&self.sigma, &self.weights, &self.weights)
    }

    /// Block containing the matrix index `i` (0-based) of a size-`n`
    /// matrix, using the midpoint `t_i = (i + 1/2)/n`.
    pub fn block_of_index(&self, i: usize, n: usize) -> usize {
        let t = (i as f64 + 0.5) / n as f64;
        let mut acc = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if t < acc {
                return k;
            }
        }
        self.blocks() - 1
    }

    /// Block index of every row of a size-`n` matrix.
    pub fn block_map(&self, n: usize) -> Vec<usize> {
        (0..n).map(|i| self.block_of_index(i, n)).collect()
    }

    /// `Σ^N_{ij} = σ(t_i, t_j)`, row-major `n × n`.
    pub fn sample_sigma_matrix(&self, n: usize) -> Vec<f64> {
        let map = self.block_map(n);
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = self.sigma[map[i]][map[j]];
            }
        }
        out
    }

    /// Whether `ψ ↦ ⟨ψ,Sψ⟩` is concave on the simplex, i.e. `S` is negative
    /// semidefinite on `{v : Σ v_k = 0}`.
    pub fn energy_is_concave(&self) -> bool {
        let p = self.blocks();
        if p == 1 {
            return true;
        }
        // basis of the tangent space: e_k - e_p
        let q = p - 1;
        let mut m = nalgebra::DMatrix::<f64>::zeros(q, q);
        for a in 0..q {
            for b in 0..q {
                m[(a, b)] = self.sigma[a][b] - self.sigma[a][q] - self.sigma[q][b]
                    + self.sigma[q][q];
            }
        }
        let scale = 1.0 + self.max_variance();
        m.symmetric_eigenvalues().iter().all(|&e| e <= 1e-12 * scale)
    }
}

fn bilinear(sigma: &[Vec<f64>], a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (k, row) in sigma.iter().enumerate() {
        let mut r = 0.0;
        for (l, v) in row.iter().enumerate() {
            r += v * b[l];
        }
        s += a[k] * r;
    }
    s
}

/// `Σ_{k,l} σ_{kl} φ_k ψ_l`.
pub fn sigma_quadratic_form(
    profile: &VarianceProfile,
    phi: &SimplexVector,
    psi: &SimplexVector,
) -> Result<f64> {
    let p = profile.blocks();
    for v in [phi, psi] {
        if v.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: v.len(),
            });
        }
    }
    Ok(bilinear(&profile.sigma, phi.as_slice(), psi.as_slice()))
}

pub(crate) fn sigma_form_raw(profile: &VarianceProfile, a: &[f64], b: &[f64]) -> f64 {
    bilinear(&profile.sigma, a, b)
}

// ---------------------------------------------------------------------------
// continuous profiles

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousKind {
    /// A named closed form sampled on a grid.
    Named(String),
    /// Samples read from a file or supplied directly.
    Grid,
}

/// A continuous profile `σ(s,t)` represented by its samples at the cell
/// midpoints of a uniform `n × n` grid of `[0,1]²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousProfileSpec {
    pub kind: ContinuousKind,
    pub params: BTreeMap<String, f64>,
    resolution: usize,
    grid: Vec<f64>,
}

/// Outcome of a piecewise-constant approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationReport {
    pub p: usize,
    /// Sup-norm gap between the grid samples and the block values.
    pub sup_error: f64,
}

impl ContinuousProfileSpec {
    pub fn from_grid(resolution: usize, grid: Vec<f64>) -> Result<Self> {
        let n = resolution;
        if n == 0 || grid.len() != n * n {
            return Err(Error::InvalidProfile(format!(
                "grid must be {n}x{n}, got {} samples",
                grid.len()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let v = grid[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidProfile(format!(
                        "grid sample ({i},{j}) = {v} is not a nonnegative real"
                    )));
                }
                if v != grid[j * n + i] {
                    return Err(Error::InvalidProfile(format!(
                        "grid is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self {
            kind: ContinuousKind::Grid,
            params: BTreeMap::new(),
            resolution: n,
            grid,
        })
    }

    /// Samples a closed form at cell midpoints. Known names:
    /// `constant` (`value`), `sum` (`s + t`), `affine` (`c0 + c1 (s + t)`),
    /// `band` (`exp(-(s-t)²/(2 width²))`).
    pub fn named(name: &str, params: BTreeMap<String, f64>, resolution: usize) -> Result<Self> {
        let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
        let f: Box<dyn Fn(f64, f64) -> f64> = match name {
            "constant" => {
                let c = get("value", 1.0);
                Box::new(move |_, _| c)
            }
            "sum" => Box::new(|s, t| s + t),
            "affine" => {
                let (c0, c1) = (get("c0", 1.0), get("c1", 1.0));
                Box::new(move |s, t| c0 + c1 * (s + t))
            }
            "band" => {
                let width = get("width", 0.25);
                Box::new(move |s, t| (-(s - t).powi(2) / (2.0 * width * width)).exp())
            }
            other => {
                return Err(Error::Config(format!("unknown closed form {other:?}")));
            }
        };
        let mut spec = Self::from_fn(resolution, f)?;
        spec.kind = ContinuousKind::Named(name.to_string());
        spec.params = params;
        Ok(spec)
    }

    pub fn from_fn(resolution: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let n = resolution;
        let mid = |i: usize| (i as f64 + 0.5) / n as f64;
        let mut grid = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = f(mid(i), mid(j));
                grid[i * n + j] = v;
                grid[j * n + i] = v;
            }
        }
        Self::from_grid(n, grid)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn sample(&self, i: usize, j: usize) -> f64 {
        self.grid[i * self.resolution + j]
    }
}

/// Cell-average approximation on the uniform partition into `p` intervals.
pub fn discretize(
    spec: &ContinuousProfileSpec,
    p: usize,
) -> Result<(VarianceProfile, DiscretizationReport)> {
    let n = spec.resolution;
    if p == 0 {
        return Err(Error::OutOfRange("block count must be positive".into()));
    }
    if p > n {
        return Err(Error::OutOfRange(format!(
            "block count {p} exceeds grid resolution {n}"
        )));
    }
    // grid cell i has midpoint (i+1/2)/n; it lies in block floor(mid * p)
    let cell_block: Vec<usize> = (0..n)
        .map(|i| (((i as f64 + 0.5) / n as f64) * p as f64).floor().min((p - 1) as f64) as usize)
        .collect();
    let mut sums = vec![vec![0.0; p]; p];
    let mut counts = vec![vec![0usize; p]; p];
    for i in 0..n {
        for j in 0..n {
            let (k, l) = (cell_block[i], cell_block[j]);
            sums[k][l] += spec.sample(i, j);
            counts[k][l] += 1;
        }
    }
    let mut sigma = vec![vec![0.0; p]; p];
    for k in 0..p {
        for l in 0..=k {
            let v = sums[k][l] / counts[k][l] as f64;
            sigma[k][l] = v;
            sigma[l][k] = v;
        }
    }
    let mut sup_error: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let gap = (spec.sample(i, j) - sigma[cell_block[i]][cell_block[j]]).abs();
            sup_error = sup_error.max(gap);
        }
    }
    let label = match &spec.kind {
        ContinuousKind::Named(name) => format!("{name}[p={p}]"),
        ContinuousKind::Grid => format!("grid{n}[p={p}]"),
    };
    let profile = VarianceProfile::new(vec![1.0 / p as f64; p], sigma, label)?;
    Ok((profile, DiscretizationReport { p, sup_error }))
}

// ---------------------------------------------------------------------------
// config loading

/// Result of parsing a profile document.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedProfile {
    Piecewise(VarianceProfile),
    /// A continuous profile together with the requested block count.
    Continuous { spec: ContinuousProfileSpec, p: usize, label: String },
}

impl LoadedProfile {
    /// The piecewise-constant profile to compute with (grid profiles are
    /// discretized at their configured block count).
    pub fn into_piecewise(self) -> Result<VarianceProfile> {
        match self {
            LoadedProfile::Piecewise(profile) => Ok(profile),
            LoadedProfile::Continuous { spec, p, label } => {
                let (profile, _) = discretize(&spec, p)?;
                Ok(if label.is_empty() { profile } else { profile.with_label(label) })
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ProfileDoc {
    PiecewiseConstant {
        weights: Vec<f64>,
        sigma: Vec<Vec<f64>>,
        #[serde(default)]
        label: Option<String>,
    },
    Constant {
        #[serde(default)]
        value: Option<f64>,
        #[serde(default)]
        label: Option<String>,
    },
    Wishart {
        alpha: f64,
        #[serde(default)]
        label: Option<String>,
    },
    Block {
        alpha: f64,
        sigma1: Component,
        sigma2: Component,
        #[serde(default)]
        label: Option<String>,
    },
    Grid {
        file: PathBuf,
        p: usize,
        #[serde(default)]
        label: Option<String>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Component {
    Scalar(f64),
    Nested(Box<ProfileDoc>),
}

/// Parses a TOML profile document. Relative grid paths resolve against
/// `base_dir` (the current directory when `None`).
pub fn load_profile(config_text: &str, base_dir: Option<&Path>) -> Result<LoadedProfile> {
    let doc: ProfileDoc =
        toml::from_str(config_text).map_err(|e| Error::Config(e.message().to_string()))?;
    resolve(doc, base_dir)
}

pub fn load_profile_file(path: &Path) -> Result<LoadedProfile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    load_profile(&text, path.parent())
}

fn resolve(doc: ProfileDoc, base_dir: Option<&Path>) -> Result<LoadedProfile> {
    let piecewise = |p: VarianceProfile, label: Option<String>| {
        Ok(LoadedProfile::Piecewise(match label {
            Some(l) => p.with_label(l),
            None => p,
        }))
    };
    match doc {
        ProfileDoc::PiecewiseConstant { weights, sigma, label } => {
            piecewise(VarianceProfile::new(weights, sigma, "piecewise_constant")?, label)
        }
        ProfileDoc::Constant { value, label } => {
            piecewise(VarianceProfile::constant(value.unwrap_or(1.0))?, label)
        }
        ProfileDoc::Wishart { alpha, label } => piecewise(VarianceProfile::wishart(alpha)?, label),
        ProfileDoc::Block { alpha, sigma1, sigma2, label } => {
            let first = component(sigma1, base_dir)?;
            let second = component(sigma2, base_dir)?;
            piecewise(VarianceProfile::block_diagonal(alpha, &first, &second)?, label)
        }
        ProfileDoc::Grid { file, p, label } => {
            let path = match base_dir {
                Some(dir) if file.is_relative() => dir.join(&file),
                _ => file.clone(),
            };
            let spec = read_grid_file(&path)?;
            if p == 0 || p > spec.resolution() {
                return Err(Error::Config(format!(
                    "grid block count p = {p} must lie in 1..={}",
                    spec.resolution()
                )));
            }
            Ok(LoadedProfile::Continuous {
                spec,
                p,
                label: label.unwrap_or_default(),
            })
        }
    }
}

fn component(c: Component, base_dir: Option<&Path>) -> Result<VarianceProfile> {
    match c {
        Component::Scalar(v) => VarianceProfile::constant(v),
        Component::Nested(doc) => resolve(*doc, base_dir)?.into_piecewise(),
    }
}

/// Reads a whitespace-separated square matrix of samples.
pub fn read_grid_file(path: &Path) -> Result<ContinuousProfileSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read grid {}: {e}", path.display())))?;
    parse_grid(&text)
}

pub fn parse_grid(text: &str) -> Result<ContinuousProfileSpec> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|l| {
            l.split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad grid sample {tok:?}")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("grid is not square ({n} rows)")));
    }
    ContinuousProfileSpec::from_grid(n, rows.into_iter().flatten().collect())
        .map_err(|e| Error::Config(e.to_string()))
}
