//! Coordinate-ascent engine for the truncated Dirichlet-process mixture of
//! inverted Dirichlet distributions.
//!
//! The intractable expectation `⟨ln Γ(Σα) / Π Γ(α)⟩` is replaced by the
//! tangent lower bound [`r_tilde`], which makes every factor update closed
//! form and turns [`surrogate_elbo`] into the objective that each cycle of
//! [`fit`] climbs.

mod elbo;
mod fit;
mod kmeans;
mod updates;

use ndarray::{Array1, Array2, Zip};

use crate::model::{PositiveDataset, VariationalPosterior};
use crate::specfun::{digamma, ln_gamma};

pub use elbo::{surrogate_elbo, ElboTerms};
pub use fit::{fit, FitResult};
pub use kmeans::{kmeans, kmeans_init};
pub use updates::{update_alpha_posterior, update_lambda_posterior, update_phi_posterior, update_responsibilities};

/// Posterior moments consumed by the updates.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationCache {
    /// `⟨ln λ_m⟩`
    pub ln_lambda: Array1<f64>,
    /// `⟨ln(1 − λ_m)⟩`
    pub ln_one_minus_lambda: Array1<f64>,
    /// `⟨φ_m⟩`
    pub phi: Array1<f64>,
    /// `⟨ln φ_m⟩`
    pub ln_phi: Array1<f64>,
    /// `⟨α_md⟩`, `M × (D+1)`
    pub alpha: Array2<f64>,
    /// `⟨ln α_md⟩`
    pub ln_alpha: Array2<f64>,
}

impl ExpectationCache {
    pub(crate) fn refresh_sticks(&mut self, g: &Array1<f64>, h: &Array1<f64>) {
        for m in 0..g.len() {
            let total = digamma(g[m] + h[m]);
            self.ln_lambda[m] = digamma(g[m]) - total;
            self.ln_one_minus_lambda[m] = digamma(h[m]) - total;
        }
    }

    pub(crate) fn refresh_concentrations(&mut self, s: &Array1<f64>, t: &Array1<f64>) {
        Zip::from(&mut self.phi).and(&mut self.ln_phi).and(s).and(t).for_each(|phi, ln_phi, &s, &t| {
            *phi = s / t;
            *ln_phi = digamma(s) - t.ln();
        });
    }

    pub(crate) fn refresh_alpha(&mut self, u: &Array2<f64>, v: &Array2<f64>) {
        Zip::from(&mut self.alpha).and(&mut self.ln_alpha).and(u).and(v).for_each(|a, ln_a, &u, &v| {
            *a = u / v;
            *ln_a = digamma(u) - v.ln();
        });
    }

    pub fn components(&self) -> usize {
        self.phi.len()
    }
}

/// `N_m = Σ_n r_nm`, accumulated row by row.
pub(crate) fn column_sums(r: &Array2<f64>) -> Array1<f64> {
    let mut acc = Array1::zeros(r.ncols());
    for row in r.outer_iter() {
        acc += &row;
    }
    acc
}

/// All moments of `post`.
pub fn compute_expectations(post: &VariationalPosterior) -> ExpectationCache {
    let m = post.components();
    let mut cache = ExpectationCache {
        ln_lambda: Array1::zeros(m),
        ln_one_minus_lambda: Array1::zeros(m),
        phi: Array1::zeros(m),
        ln_phi: Array1::zeros(m),
        alpha: Array2::zeros(post.u.dim()),
        ln_alpha: Array2::zeros(post.u.dim()),
    };
    cache.refresh_sticks(&post.g, &post.h);
    cache.refresh_concentrations(&post.s, &post.t);
    cache.refresh_alpha(&post.u, &post.v);
    cache
}

/// Lower bound on `⟨ln Γ(Σ_d α_md) − Σ_d ln Γ(α_md)⟩`, linearized in
/// `ln α` around the posterior mean `⟨α_m⟩`.
pub fn r_tilde(cache: &ExpectationCache, m: usize) -> f64 {
    let alpha = cache.alpha.row(m);
    let ln_alpha = cache.ln_alpha.row(m);
    let total: f64 = alpha.sum();
    let psi_total = digamma(total);
    let mut acc = ln_gamma(total);
    for (&a, &ln_a) in alpha.iter().zip(ln_alpha.iter()) {
        acc -= ln_gamma(a);
        acc += (psi_total - digamma(a)) * (ln_a - a.ln()) * a;
    }
    acc
}

/// Per-observation log features with the implicit `x_{n,D+1} = 1` appended.
#[derive(Debug, Clone)]
pub(crate) struct LogFeatures {
    /// `ln x_nd − ln(1 + Σ_d x_nd)` for `d ≤ D+1`, so the last column is `−ln(1 + Σ x)`.
    pub log_ratio: Array2<f64>,
    /// `Σ_{d≤D} ln x_nd`
    pub sum_ln_x: Array1<f64>,
}

impl LogFeatures {
    pub fn new(data: &PositiveDataset) -> Self {
        let (n, d) = (data.len(), data.dim());
        let mut log_ratio = Array2::zeros((n, d + 1));
        let mut sum_ln_x = Array1::zeros(n);
        for (i, row) in data.values().outer_iter().enumerate() {
            let log_total = row.sum().ln_1p();
            let mut s = 0.0;
            for (j, &x) in row.iter().enumerate() {
                let lx = x.ln();
                s += lx;
                log_ratio[[i, j]] = lx - log_total;
            }
            log_ratio[[i, d]] = -log_total;
            sum_ln_x[i] = s;
        }
        Self { log_ratio, sum_ln_x }
    }

    #[cfg(test)]
    pub fn empty(dim: usize) -> Self {
        Self { log_ratio: Array2::zeros((0, dim + 1)), sum_ln_x: Array1::zeros(0) }
    }
}
