use ndarray::{Array2, Zip};

use super::updates::expected_log_weights;
use super::{column_sums, r_tilde, ExpectationCache, LogFeatures};
use crate::model::{PositiveDataset, PriorConfig, VariationalPosterior};
use crate::specfun::ln_gamma;

/// The surrogate ELBO split by factor. Every prior normalizing constant is
/// kept, so each of the last three terms is `−KL(q ‖ p)` for its factor
/// (up to the stick/concentration coupling) and vanishes when `q = p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    /// `Σ_nm r_nm ln ρ_nm`: expected surrogate log-likelihood plus `⟨ln p(Z | λ)⟩`.
    pub assignment: f64,
    /// `−Σ_nm r_nm ln r_nm`.
    pub assignment_entropy: f64,
    /// `⟨ln p(λ | φ)⟩ − ⟨ln q(λ)⟩`.
    pub sticks: f64,
    /// `⟨ln p(φ)⟩ − ⟨ln q(φ)⟩`.
    pub concentrations: f64,
    /// `⟨ln p(Λ)⟩ − ⟨ln q(Λ)⟩`.
    pub parameters: f64,
}

impl ElboTerms {
    pub fn total(&self) -> f64 {
        self.assignment + self.assignment_entropy + self.sticks + self.concentrations + self.parameters
    }
}

fn gamma_cross(shape: f64, rate: f64, mean: f64, mean_log: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * mean_log - rate * mean
}

/// `log_r`, when given, must equal `ln post.r` entrywise.
pub(crate) fn elbo_terms(
    features: &LogFeatures,
    post: &VariationalPosterior,
    cache: &ExpectationCache,
    prior: &PriorConfig,
    log_r: Option<&Array2<f64>>,
) -> ElboTerms {
    // Σ_nm r_nm ln ρ_nm, with ln ρ linear in the features: only the
    // per-component sums Σ_n r_nm y_n and the counts are needed.
    let counts = column_sums(&post.r);
    let weighted = post.r.t().dot(&features.log_ratio);
    let log_w = expected_log_weights(cache);
    let mut assignment = -post.r.outer_iter().zip(features.sum_ln_x.iter()).map(|(row, &s)| row.sum() * s).sum::<f64>();
    for m in 0..post.components() {
        assignment += weighted.row(m).dot(&cache.alpha.row(m)) + counts[m] * (log_w[m] + r_tilde(cache, m));
    }

    let mut assignment_entropy = 0.0;
    match log_r {
        Some(log_r) => Zip::from(&post.r).and(log_r).for_each(|&r, &lr| {
            if r > 0.0 {
                assignment_entropy -= r * lr;
            }
        }),
        None => post.r.for_each(|&r| {
            if r > 0.0 {
                assignment_entropy -= r * r.ln();
            }
        }),
    }

    let mut sticks = 0.0;
    let mut concentrations = 0.0;
    for m in 0..post.components() {
        let (g, h) = (post.g[m], post.h[m]);
        let (ln_l, ln_1ml) = (cache.ln_lambda[m], cache.ln_one_minus_lambda[m]);
        let (phi, ln_phi) = (cache.phi[m], cache.ln_phi[m]);
        let log_q_lambda =
            ln_gamma(g + h) - ln_gamma(g) - ln_gamma(h) + (g - 1.0) * ln_l + (h - 1.0) * ln_1ml;
        sticks += ln_phi + (phi - 1.0) * ln_1ml - log_q_lambda;
        concentrations += gamma_cross(prior.s0, prior.t0, phi, ln_phi)
            - gamma_cross(post.s[m], post.t[m], phi, ln_phi);
    }

    let mut parameters = 0.0;
    Zip::from(&post.u).and(&post.v).and(&cache.alpha).and(&cache.ln_alpha).for_each(|&u, &v, &a, &la| {
        parameters += gamma_cross(prior.u0, prior.v0, a, la) - gamma_cross(u, v, a, la);
    });

    ElboTerms { assignment, assignment_entropy, sticks, concentrations, parameters }
}

/// Surrogate ELBO `⟨ln p̃(X, Θ)⟩ − ⟨ln q(Θ)⟩` of the current posterior.
/// `cache` must hold the moments of `post`.
pub fn surrogate_elbo(
    data: &PositiveDataset,
    post: &VariationalPosterior,
    cache: &ExpectationCache,
    prior: &PriorConfig,
) -> f64 {
    elbo_terms(&LogFeatures::new(data), post, cache, prior, None).total()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::compute_expectations;
    use crate::specfun::digamma;
    use approx::assert_abs_diff_eq;
    use ndarray::Array1;

    #[test]
    fn prior_posterior_cancel_without_data() {
        let prior = PriorConfig::default();
        let h = prior.s0 / prior.t0;
        let post = VariationalPosterior {
            r: Array2::zeros((0, 1)),
            g: Array1::from_elem(1, 1.0),
            h: Array1::from_elem(1, h),
            s: Array1::from_elem(1, prior.s0),
            t: Array1::from_elem(1, prior.t0),
            u: Array2::from_elem((1, 3), prior.u0),
            v: Array2::from_elem((1, 3), prior.v0),
        };
        let cache = compute_expectations(&post);
        let terms = elbo_terms(&LogFeatures::empty(2), &post, &cache, &prior, None);
        assert_eq!(terms.assignment, 0.0);
        assert_eq!(terms.assignment_entropy, 0.0);
        assert_abs_diff_eq!(terms.parameters, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(terms.concentrations, 0.0, epsilon = 1e-12);
        // q(λ) = Beta(1, ⟨φ⟩) against Beta(1, φ), φ ~ Gam(s0, t0): ⟨ln φ⟩ − ln⟨φ⟩.
        let expected = digamma(prior.s0) - prior.t0.ln() - h.ln();
        assert_abs_diff_eq!(terms.sticks, expected, epsilon = 1e-10);
        assert!(terms.sticks < 0.0);
    }

    #[test]
    fn hard_assignments_have_zero_entropy() {
        let data = PositiveDataset::from_rows(&[vec![1.0, 2.0], vec![0.5, 0.1]]).unwrap();
        let post = VariationalPosterior {
            r: ndarray::array![[1.0, 0.0], [0.0, 1.0]],
            g: ndarray::array![2.0, 2.0],
            h: ndarray::array![2.0, 1.0],
            s: ndarray::array![2.0, 2.0],
            t: ndarray::array![1.0, 1.0],
            u: Array2::from_elem((2, 3), 4.0),
            v: Array2::from_elem((2, 3), 1.5),
        };
        let cache = compute_expectations(&post);
        let terms = elbo_terms(&LogFeatures::new(&data), &post, &cache, &PriorConfig::default(), None);
        assert_eq!(terms.assignment_entropy, 0.0);
        assert!(terms.total().is_finite());
    }
}
