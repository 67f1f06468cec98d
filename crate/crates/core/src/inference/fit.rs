use std::cmp::Ordering;

use ndarray::{Array1, Array2, Axis};

use super::elbo::elbo_terms;
use super::kmeans::kmeans_init;
use super::updates::{
    alpha_posterior, log_rho, responsibilities, softmax_rows, update_lambda_posterior, update_phi_posterior,
};
use super::{column_sums, compute_expectations, ExpectationCache, LogFeatures};
use crate::error::{Error, Result};
use crate::model::{
    posterior_point_estimates, ElboTrace, MixtureEstimate, PositiveDataset, PriorConfig, VariationalPosterior,
};
use crate::specfun::{digamma, InvertedDirichletParams};

const STICK_SETTLE_ITERATIONS: usize = 1000;
const MAX_MOVES: usize = 64;

#[derive(Debug, Clone)]
pub struct FitResult {
    pub estimate: MixtureEstimate,
    /// Final posterior over all `M` components, responsibilities in the
    /// caller's row order.
    pub posterior: VariationalPosterior,
    pub trace: ElboTrace,
    /// Surrogate ELBO of the returned posterior.
    pub elbo_final: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Row order that sorts the observations lexicographically, so that a fit
/// does not depend on how the caller ordered the rows.
fn canonical_order(data: &PositiveDataset) -> Vec<usize> {
    let x = data.values();
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| {
        x.row(a)
            .iter()
            .zip(x.row(b).iter())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    });
    order
}

/// Component permutation putting the largest responsibility mass first (stable).
fn mass_order(r: &Array2<f64>) -> Vec<usize> {
    let counts = column_sums(r);
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].total_cmp(&counts[a]));
    order
}

/// Method-of-moments inverted Dirichlet fit to the rows weighted by `w`:
/// `α_{D+1} = 2 + mean_d μ_d(μ_d + 1)/σ²_d`, `α_d = μ_d (α_{D+1} − 1)`.
fn moment_estimate(x: &Array2<f64>, w: ndarray::ArrayView1<'_, f64>) -> Option<Vec<f64>> {
    let total = w.sum();
    if total < 2.0 {
        return None;
    }
    let mean = w.dot(x) / total;
    let mut var = Array1::<f64>::zeros(x.ncols());
    for (row, &wi) in x.outer_iter().zip(w.iter()) {
        for (d, &xi) in row.iter().enumerate() {
            var[d] += wi * (xi - mean[d]).powi(2);
        }
    }
    var /= total;
    if var.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return None;
    }
    let ratio = mean.iter().zip(var.iter()).map(|(&m, &v)| m * (m + 1.0) / v).sum::<f64>() / mean.len() as f64;
    let last = 2.0 + ratio;
    let mut alpha: Vec<f64> = mean.iter().map(|&m| m * (last - 1.0)).collect();
    alpha.push(last);
    alpha.iter().all(|a| a.is_finite() && *a > 0.0).then_some(alpha)
}

fn initial_posterior(
    data: &PositiveDataset,
    features: &LogFeatures,
    r: Array2<f64>,
    prior: &PriorConfig,
) -> VariationalPosterior {
    let m = r.ncols();
    let p = data.dim() + 1;
    let x = data.values();
    let pooled = moment_estimate(x, Array1::ones(data.len()).view()).unwrap_or_else(|| vec![1.0; p]);
    let mut alpha = Array2::zeros((m, p));
    for k in 0..m {
        let est = moment_estimate(x, r.column(k)).unwrap_or_else(|| pooled.clone());
        alpha.row_mut(k).assign(&Array1::from(est));
    }
    let phi0 = prior.s0 / prior.t0;
    let mut cache = ExpectationCache {
        ln_lambda: Array1::zeros(m),
        ln_one_minus_lambda: Array1::zeros(m),
        phi: Array1::from_elem(m, phi0),
        ln_phi: Array1::from_elem(m, digamma(prior.s0) - prior.t0.ln()),
        ln_alpha: alpha.mapv(f64::ln),
        alpha,
    };
    let (g, h) = update_lambda_posterior(&r, &cache);
    cache.refresh_sticks(&g, &h);
    let (s, t) = update_phi_posterior(&cache, prior);
    cache.refresh_concentrations(&s, &t);
    let (u, v) = alpha_posterior(features, &r, &cache, prior);
    VariationalPosterior { r, g, h, s, t, u, v }
}

fn permute_components(post: &mut VariationalPosterior, order: &[usize]) {
    post.r = post.r.select(Axis(1), order);
    post.g = post.g.select(Axis(0), order);
    post.h = post.h.select(Axis(0), order);
    post.s = post.s.select(Axis(0), order);
    post.t = post.t.select(Axis(0), order);
    post.u = post.u.select(Axis(0), order);
    post.v = post.v.select(Axis(0), order);
}

/// Alternate the stick and concentration updates (responsibilities and
/// component parameters fixed) until they stop moving.
fn settle_sticks(post: &mut VariationalPosterior, prior: &PriorConfig) -> ExpectationCache {
    let mut cache = compute_expectations(post);
    for _ in 0..STICK_SETTLE_ITERATIONS {
        let (g, h) = update_lambda_posterior(&post.r, &cache);
        cache.refresh_sticks(&g, &h);
        let (s, t) = update_phi_posterior(&cache, prior);
        cache.refresh_concentrations(&s, &t);
        let delta = (&t - &post.t).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b))
            + (&h - &post.h).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        post.g = g;
        post.h = h;
        post.s = s;
        post.t = t;
        if delta < 1e-13 {
            break;
        }
    }
    cache
}

/// Components permuted by decreasing responsibility mass, sticks re-settled.
/// `None` when already in that order.
fn reordered(features: &LogFeatures, post: &VariationalPosterior, prior: &PriorConfig) -> Option<(VariationalPosterior, f64)> {
    let order = mass_order(&post.r);
    if order.iter().enumerate().all(|(i, &k)| i == k) {
        return None;
    }
    let mut next = post.clone();
    permute_components(&mut next, &order);
    let cache = settle_sticks(&mut next, prior);
    let elbo = elbo_terms(features, &next, &cache, prior, None).total();
    Some((next, elbo))
}

/// Component `k` emptied: its responsibility is redistributed over the other
/// components in proportion to their current `ρ`, then the stick,
/// concentration and parameter factors take one update each.
fn without_component(
    features: &LogFeatures,
    post: &VariationalPosterior,
    k: usize,
    prior: &PriorConfig,
) -> (VariationalPosterior, f64) {
    let mut next = post.clone();
    let mut cache = compute_expectations(&next);
    let mut logits = log_rho(features, &cache);
    logits.column_mut(k).fill(f64::NEG_INFINITY);
    let (r, log_r) = softmax_rows(logits);
    next.r = r;

    let (g, h) = update_lambda_posterior(&next.r, &cache);
    cache.refresh_sticks(&g, &h);
    next.g = g;
    next.h = h;
    let (s, t) = update_phi_posterior(&cache, prior);
    cache.refresh_concentrations(&s, &t);
    next.s = s;
    next.t = t;
    let (u, v) = alpha_posterior(features, &next.r, &cache, prior);
    cache.refresh_alpha(&u, &v);
    next.u = u;
    next.v = v;

    let elbo = elbo_terms(features, &next, &cache, prior, Some(&log_r)).total();
    (next, elbo)
}

/// First candidate whose surrogate ELBO exceeds `floor`: the mass ordering,
/// then the removal of each occupied component from the lightest up.
fn improving_move(
    features: &LogFeatures,
    post: &VariationalPosterior,
    prior: &PriorConfig,
    floor: f64,
) -> Option<VariationalPosterior> {
    if let Some((next, elbo)) = reordered(features, post, prior) {
        if elbo > floor {
            return Some(next);
        }
    }
    let counts = column_sums(&post.r);
    let occupied = counts.iter().filter(|&&c| c > 0.0).count();
    if occupied < 2 {
        return None;
    }
    let mut order: Vec<usize> = (0..counts.len()).filter(|&k| counts[k] > 0.0).collect();
    order.sort_by(|&a, &b| counts[a].total_cmp(&counts[b]).then(a.cmp(&b)));
    order.into_iter().find_map(|k| {
        let (next, elbo) = without_component(features, post, k, prior);
        (elbo > floor).then_some(next)
    })
}

/// Prune weights at or below `threshold`, renormalize, and order by
/// decreasing weight (ties by the first concentration).
fn build_estimate(post: &VariationalPosterior, threshold: f64) -> Result<MixtureEstimate> {
    let (weights, alpha) = posterior_point_estimates(post);
    let mut keep: Vec<usize> = (0..weights.len()).filter(|&k| weights[k] > threshold).collect();
    if keep.is_empty() {
        let best = (0..weights.len()).max_by(|&a, &b| weights[a].total_cmp(&weights[b])).unwrap_or(0);
        keep.push(best);
    }
    keep.sort_by(|&a, &b| {
        weights[b].total_cmp(&weights[a]).then(alpha[[a, 0]].total_cmp(&alpha[[b, 0]]))
    });
    let total: f64 = keep.iter().map(|&k| weights[k]).sum();
    let components = keep
        .iter()
        .map(|&k| InvertedDirichletParams::new(alpha.row(k).to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(MixtureEstimate {
        weights: keep.iter().map(|&k| weights[k] / total).collect(),
        components,
        source_components: keep,
    })
}

/// Coordinate ascent from `post` for at most `budget` cycles, appending each
/// cycle's surrogate ELBO to `trace`. Returns the cycles run and whether the
/// relative-change criterion was met.
fn ascend(
    features: &LogFeatures,
    post: &mut VariationalPosterior,
    prior: &PriorConfig,
    trace: &mut ElboTrace,
    budget: usize,
) -> Result<(usize, bool)> {
    let start = trace.len();
    for cycle in 1..=budget {
        let iteration = start + cycle;
        let mut cache = compute_expectations(post);

        let (r, log_r) = responsibilities(features, &cache);
        post.r = r;

        let (g, h) = update_lambda_posterior(&post.r, &cache);
        cache.refresh_sticks(&g, &h);
        post.g = g;
        post.h = h;

        let (s, t) = update_phi_posterior(&cache, prior);
        cache.refresh_concentrations(&s, &t);
        post.s = s;
        post.t = t;

        let (u, v) = alpha_posterior(features, &post.r, &cache, prior);
        cache.refresh_alpha(&u, &v);
        post.u = u;
        post.v = v;

        let elbo = elbo_terms(features, post, &cache, prior, Some(&log_r)).total();
        if !elbo.is_finite() {
            return Err(Error::Numerical { iteration, message: format!("surrogate ELBO is {elbo}") });
        }
        let previous = trace.last();
        trace.push(elbo);
        if let Some(prev) = previous {
            if (elbo - prev).abs() <= prior.elbo_rel_tolerance * elbo.abs() {
                return Ok((cycle, true));
            }
        }
    }
    Ok((budget, false))
}

/// Runs the full variational procedure: K-means initialization, coordinate
/// ascent on the surrogate ELBO until its relative change drops below the
/// tolerance, then pruning and point estimation.
///
/// A converged ascent is followed by a search for a jump that raises the
/// surrogate ELBO: reordering the sticks by mass, or emptying one component.
/// The first such jump is taken and ascent resumes, so the recorded trace
/// never decreases. This escapes the local optima in which a component holds
/// on to a handful of outlying points.
pub fn fit(data: &PositiveDataset, prior: &PriorConfig) -> Result<FitResult> {
    prior.validate()?;
    let m = prior.truncation;
    if data.len() < m {
        return Err(Error::Config(format!(
            "{} observations cannot initialize {m} components",
            data.len()
        )));
    }

    let order = canonical_order(data);
    let sorted = data.select_rows(&order);
    let features = LogFeatures::new(&sorted);

    let r0 = kmeans_init(&sorted, m, prior.seed)?;
    let r0 = r0.select(Axis(1), &mass_order(&r0));
    let mut post = initial_posterior(&sorted, &features, r0, prior);

    let mut trace = ElboTrace::default();
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..=MAX_MOVES {
        let (cycles, done) = ascend(&features, &mut post, prior, &mut trace, prior.max_iterations)?;
        iterations += cycles;
        converged = done;
        let current = trace.last().unwrap_or(f64::NEG_INFINITY);
        let floor = current + prior.elbo_rel_tolerance * current.abs();
        match improving_move(&features, &post, prior, floor) {
            Some(next) => post = next,
            None => break,
        }
    }
    let elbo_final = trace.last().unwrap_or(f64::NEG_INFINITY);
    let estimate = build_estimate(&post, prior.prune_threshold)?;

    let mut r = Array2::zeros(post.r.dim());
    for (i, &src) in order.iter().enumerate() {
        r.row_mut(src).assign(&post.r.row(i));
    }
    post.r = r;

    Ok(FitResult { estimate, posterior: post, trace, elbo_final, iterations, converged })
}
