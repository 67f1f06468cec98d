//! Closed-form factor updates. Each is the exact maximizer of the surrogate
//! ELBO in its own factor with every other factor held fixed.

use ndarray::{Array1, Array2};

use super::{column_sums, r_tilde, ExpectationCache, LogFeatures};
use crate::model::{PositiveDataset, PriorConfig};
use crate::specfun::digamma;

/// `⟨ln π_m⟩ = ⟨ln λ_m⟩ + Σ_{j<m} ⟨ln(1 − λ_j)⟩`.
pub(crate) fn expected_log_weights(cache: &ExpectationCache) -> Array1<f64> {
    let mut prefix = 0.0;
    cache
        .ln_lambda
        .iter()
        .zip(cache.ln_one_minus_lambda.iter())
        .map(|(&ll, &l1m)| {
            let w = ll + prefix;
            prefix += l1m;
            w
        })
        .collect()
}

/// Unnormalized log responsibilities `ln ρ_nm`.
pub(crate) fn log_rho(features: &LogFeatures, cache: &ExpectationCache) -> Array2<f64> {
    let m = cache.components();
    let log_w = expected_log_weights(cache);
    let offset: Array1<f64> = (0..m).map(|k| log_w[k] + r_tilde(cache, k)).collect();
    // Σ_{d≤D}(⟨α⟩−1) ln x − Σ_{d≤D+1}⟨α⟩ ln(1+Σx) = Σ_{d≤D+1} ⟨α⟩ y_nd − Σ_{d≤D} ln x_nd
    let mut out = features.log_ratio.dot(&cache.alpha.t());
    for (mut row, &s) in out.outer_iter_mut().zip(features.sum_ln_x.iter()) {
        row += &offset;
        row -= s;
    }
    out
}

/// Below this offset from the row maximum, `exp` underflows to zero.
const EXP_UNDERFLOW: f64 = -708.0;

/// Row-wise softmax of `logits` and its logarithm, subtracting each row's
/// maximum before exponentiating.
pub(crate) fn softmax_rows(mut logits: Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let mut probs = Array2::zeros(logits.dim());
    for (mut row, mut out) in logits.outer_iter_mut().zip(probs.outer_iter_mut()) {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut total = 0.0;
        for (v, p) in row.iter_mut().zip(out.iter_mut()) {
            *v -= max;
            if *v > EXP_UNDERFLOW {
                *p = v.exp();
                total += *p;
            }
        }
        out /= total;
        row -= total.ln();
    }
    (probs, logits)
}

/// `(r, ln r)`.
pub(crate) fn responsibilities(features: &LogFeatures, cache: &ExpectationCache) -> (Array2<f64>, Array2<f64>) {
    softmax_rows(log_rho(features, cache))
}

/// Responsibilities `r_nm ∝ ρ_nm`, normalized in log space.
pub fn update_responsibilities(data: &PositiveDataset, cache: &ExpectationCache) -> Array2<f64> {
    responsibilities(&LogFeatures::new(data), cache).0
}

/// Beta factors of the stick proportions:
/// `g_m = 1 + Σ_n r_nm`, `h_m = ⟨φ_m⟩ + Σ_n Σ_{j>m} r_nj`.
pub fn update_lambda_posterior(r: &Array2<f64>, cache: &ExpectationCache) -> (Array1<f64>, Array1<f64>) {
    let counts = column_sums(r);
    let m = counts.len();
    let mut h = Array1::zeros(m);
    let mut later = 0.0;
    for k in (0..m).rev() {
        h[k] = cache.phi[k] + later;
        later += counts[k];
    }
    (counts + 1.0, h)
}

/// Gamma factors of the stick concentrations: `s = 1 + s⁰`, `t = t⁰ − ⟨ln(1 − λ)⟩`.
pub fn update_phi_posterior(cache: &ExpectationCache, prior: &PriorConfig) -> (Array1<f64>, Array1<f64>) {
    let s = Array1::from_elem(cache.components(), 1.0 + prior.s0);
    let t = cache.ln_one_minus_lambda.mapv(|l| prior.t0 - l);
    (s, t)
}

pub(crate) fn alpha_posterior(
    features: &LogFeatures,
    r: &Array2<f64>,
    cache: &ExpectationCache,
    prior: &PriorConfig,
) -> (Array2<f64>, Array2<f64>) {
    let counts = column_sums(r);
    let mut u = Array2::from_elem(cache.alpha.dim(), prior.u0);
    for (k, (mut u_row, a_row)) in u.outer_iter_mut().zip(cache.alpha.outer_iter()).enumerate() {
        let psi_total = digamma(a_row.sum());
        for (u_kd, &a) in u_row.iter_mut().zip(a_row.iter()) {
            *u_kd += counts[k] * (psi_total - digamma(a)) * a;
        }
    }
    let v = r.t().dot(&features.log_ratio).mapv(|s| prior.v0 - s);
    (u, v)
}

/// Gamma factors of the component parameters, with `x_{n,D+1} = 1`:
/// `u_md = u⁰ + Σ_n r_nm [Ψ(Σ_k ⟨α_mk⟩) − Ψ(⟨α_md⟩)] ⟨α_md⟩`,
/// `v_md = v⁰ − Σ_n r_nm [ln x_nd − ln(1 + Σ_d x_nd)]`.
pub fn update_alpha_posterior(
    data: &PositiveDataset,
    r: &Array2<f64>,
    cache: &ExpectationCache,
    prior: &PriorConfig,
) -> (Array2<f64>, Array2<f64>) {
    alpha_posterior(&LogFeatures::new(data), r, cache, prior)
}
