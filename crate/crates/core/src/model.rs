//! Data, prior configuration, the factorized posterior state, and point estimates.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::specfun::{InvertedDirichletParams, RandomSeed};

/// `N` observations of `D` strictly positive reals, stored row-major.
///
/// The trailing coordinate `x_{n,D+1} = 1` used by the update equations is
/// implicit and never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveDataset {
    values: Array2<f64>,
}

impl PositiveDataset {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (n, d) = values.dim();
        if n == 0 || d == 0 {
            return Err(domain(format!("dataset must be non-empty, got {n}x{d}")));
        }
        for ((row, column), v) in values.indexed_iter() {
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::Cell {
                    row,
                    column,
                    message: format!("value {v} is not a finite positive real"),
                });
            }
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(domain(format!("row {bad} has {} columns, expected {d}", rows[bad].len())));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((rows.len(), d), flat).map_err(|e| domain(e.to_string()))?;
        Self::new(values)
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row(&self, n: usize) -> ArrayView1<'_, f64> {
        self.values.row(n)
    }

    /// Rows reordered by `order` (`order[i]` is the source row of row `i`).
    pub fn select_rows(&self, order: &[usize]) -> Self {
        Self { values: self.values.select(ndarray::Axis(0), order) }
    }
}

/// Truncation level, prior hyperparameters and convergence controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub truncation: usize,
    pub s0: f64,
    pub t0: f64,
    pub u0: f64,
    pub v0: f64,
    pub max_iterations: usize,
    pub elbo_rel_tolerance: f64,
    pub prune_threshold: f64,
    pub seed: RandomSeed,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            truncation: 15,
            s0: 1.0,
            t0: 0.005,
            u0: 1.0,
            v0: 0.005,
            max_iterations: 500,
            elbo_rel_tolerance: 1e-6,
            prune_threshold: 1e-5,
            seed: RandomSeed(0),
        }
    }
}

impl PriorConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed: RandomSeed(seed), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.truncation < 2 {
            return Err(Error::Config(format!("truncation must be at least 2, got {}", self.truncation)));
        }
        for (name, v) in [("s0", self.s0), ("t0", self.t0), ("u0", self.u0), ("v0", self.v0)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and positive, got {v}")));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if !(self.elbo_rel_tolerance.is_finite() && self.elbo_rel_tolerance > 0.0) {
            return Err(Error::Config(format!(
                "ELBO tolerance must be positive, got {}",
                self.elbo_rel_tolerance
            )));
        }
        if !(self.prune_threshold > 0.0 && self.prune_threshold < 1.0) {
            return Err(Error::Config(format!(
                "prune threshold must lie in (0, 1), got {}",
                self.prune_threshold
            )));
        }
        Ok(())
    }
}

/// Factorized posterior: responsibilities, Beta factors for the stick
/// proportions, Gamma factors for the stick concentrations and for every
/// inverted Dirichlet parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalPosterior {
    /// `N × M` responsibilities.
    pub r: Array2<f64>,
    pub g: Array1<f64>,
    pub h: Array1<f64>,
    pub s: Array1<f64>,
    pub t: Array1<f64>,
    /// `M × (D+1)` shapes.
    pub u: Array2<f64>,
    /// `M × (D+1)` rates.
    pub v: Array2<f64>,
}

impl VariationalPosterior {
    pub fn components(&self) -> usize {
        self.g.len()
    }

    /// `D + 1`.
    pub fn param_len(&self) -> usize {
        self.u.ncols()
    }
}

/// Pruned, renormalized point estimate of the mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureEstimate {
    pub weights: Vec<f64>,
    pub components: Vec<InvertedDirichletParams>,
    /// Index of each surviving component in the truncated posterior.
    pub source_components: Vec<usize>,
}

impl MixtureEstimate {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, InvertedDirichletParams::dim)
    }
}

/// Surrogate ELBO value after each completed update cycle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ElboTrace {
    records: Vec<(usize, f64)>,
}

impl ElboTrace {
    pub fn push(&mut self, value: f64) {
        let next = self.records.len() + 1;
        self.records.push((next, value));
    }

    pub fn records(&self) -> &[(usize, f64)] {
        &self.records
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|&(_, v)| v)
    }

    pub fn last(&self) -> Option<f64> {
        self.records.last().map(|&(_, v)| v)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Stick-breaking weights `π_m = λ_m Π_{l<m} (1 − λ_l)`.
pub fn stick_breaking_weights(lambda: &[f64]) -> Result<Vec<f64>> {
    let mut remaining = 1.0;
    lambda
        .iter()
        .map(|&l| {
            if !(l > 0.0 && l <= 1.0) {
                return Err(domain(format!("stick proportion must lie in (0, 1], got {l}")));
            }
            let w = l * remaining;
            remaining *= 1.0 - l;
            Ok(w)
        })
        .collect()
}

/// Posterior-mean weights `π̂_m = λ̄_m Π_{l<m}(1 − λ̄_l)` with `λ̄ = g/(g+h)`
/// for every stick, and concentrations `u/v`. The weights sum to less than
/// one; the remainder is the mass beyond the truncation.
pub fn posterior_point_estimates(post: &VariationalPosterior) -> (Vec<f64>, Array2<f64>) {
    let lambda: Vec<f64> = post.g.iter().zip(post.h.iter()).map(|(&g, &h)| g / (g + h)).collect();
    let weights = stick_breaking_weights(&lambda).expect("Beta means lie in (0, 1)");
    (weights, &post.u / &post.v)
}
