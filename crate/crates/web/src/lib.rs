//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function wraps a plain Rust function returning
//! `Result<_, String>`, so the logic is testable natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use invdir_mix::evalgen::{generate_labeled, kl_divergence_mc, recovery_report};
use invdir_mix::model::stick_breaking_weights;
use invdir_mix::specfun::{invdir_log_pdf, sample_beta};
use invdir_mix::{builtin_model, fit, InvertedDirichletParams, MixtureDensity, PriorConfig, RandomSeed};

const MAX_POINTS: usize = 10_000;
const MAX_SAMPLES: usize = 20_000;
const KL_SAMPLES: usize = 20_000;
/// Observations returned for plotting; the fit always uses all of them.
const PLOTTED: usize = 1500;

fn js(result: Result<impl Into<JsValue>, String>) -> Result<JsValue, JsError> {
    result.map(Into::into).map_err(|e| JsError::new(&e))
}

/// Density of a one-dimensional inverted Dirichlet with concentrations
/// `[a1, a2]` at `points` evenly spaced `x` in `(0, x_max]`.
pub fn density_curve_values(a1: f64, a2: f64, x_max: f64, points: usize) -> Result<Vec<f64>, String> {
    let params = InvertedDirichletParams::new(vec![a1, a2]).map_err(|e| e.to_string())?;
    if !(x_max.is_finite() && x_max > 0.0) {
        return Err(format!("x_max must be positive, got {x_max}"));
    }
    if points == 0 || points > MAX_POINTS {
        return Err(format!("points must lie in 1..={MAX_POINTS}, got {points}"));
    }
    (1..=points)
        .map(|i| {
            let x = x_max * i as f64 / points as f64;
            invdir_log_pdf(&[x], &params).map(f64::exp).map_err(|e| e.to_string())
        })
        .collect()
}

/// One draw of the first `truncation` stick-breaking weights with
/// `λ_m ~ Beta(1, φ)`.
pub fn stick_weight_draw(phi: f64, truncation: usize, seed: u64) -> Result<Vec<f64>, String> {
    if truncation == 0 || truncation > MAX_POINTS {
        return Err(format!("truncation must lie in 1..={MAX_POINTS}, got {truncation}"));
    }
    let mut rng = RandomSeed(seed).stream();
    let lambda = (0..truncation)
        .map(|_| sample_beta(1.0, phi, &mut rng))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    stick_breaking_weights(&lambda).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct DemoFit {
    pub model: String,
    pub dim: usize,
    pub true_weights: Vec<f64>,
    pub true_alphas: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub alphas: Vec<Vec<f64>>,
    pub k: usize,
    pub iterations: usize,
    pub elbo_trace: Vec<f64>,
    pub kl: f64,
    pub kl_std_error: f64,
    /// Estimated component paired with each true component, if any.
    pub matched_estimate: Vec<Option<usize>>,
    /// First two coordinates of the plotted observations.
    pub points: Vec<[f64; 2]>,
    /// Generating component of each plotted observation.
    pub labels: Vec<usize>,
    /// Most responsible estimated component of each plotted observation.
    pub assigned: Vec<usize>,
}

/// Draws `n` observations from a builtin model, fits the truncated mixture
/// with default settings and summarizes the outcome.
pub fn generate_and_fit_result(model: &str, n: usize, seed: u64) -> Result<DemoFit, String> {
    let truth = builtin_model(model).ok_or_else(|| format!("unknown model {model:?}"))?;
    if n == 0 || n > MAX_SAMPLES {
        return Err(format!("n must lie in 1..={MAX_SAMPLES}, got {n}"));
    }
    let (data, labels) = generate_labeled(&truth, n, RandomSeed(seed)).map_err(|e| e.to_string())?;
    let result = fit(&data, &PriorConfig::with_seed(seed)).map_err(|e| e.to_string())?;
    let est = &result.estimate;
    let report = recovery_report(&truth, est).map_err(|e| e.to_string())?;
    let kl = kl_divergence_mc(&truth, est, KL_SAMPLES, RandomSeed(seed.wrapping_add(1))).map_err(|e| e.to_string())?;

    let mut matched_estimate = vec![None; truth.k()];
    for m in &report.matches {
        matched_estimate[m.truth] = Some(m.estimate);
    }
    let surviving = &est.source_components;
    let assigned = result
        .posterior
        .r
        .outer_iter()
        .take(PLOTTED)
        .map(|row| {
            surviving
                .iter()
                .enumerate()
                .max_by(|a, b| row[*a.1].total_cmp(&row[*b.1]))
                .map_or(0, |(i, _)| i)
        })
        .collect();
    let points = data
        .values()
        .outer_iter()
        .take(PLOTTED)
        .map(|row| [row[0], if row.len() > 1 { row[1] } else { 1.0 }])
        .collect();

    Ok(DemoFit {
        model: truth.name().to_string(),
        dim: data.dim(),
        true_weights: truth.weights().to_vec(),
        true_alphas: truth.components().iter().map(|c| c.alpha().to_vec()).collect(),
        weights: est.weights.clone(),
        alphas: est.components.iter().map(|c| c.alpha().to_vec()).collect(),
        k: est.k(),
        iterations: result.iterations,
        elbo_trace: result.trace.values().collect(),
        kl: kl.estimate,
        kl_std_error: kl.std_error,
        matched_estimate,
        points,
        labels: labels.into_iter().take(PLOTTED).collect(),
        assigned,
    })
}

#[wasm_bindgen]
pub fn density_curve(a1: f64, a2: f64, x_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    density_curve_values(a1, a2, x_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn stick_weights(phi: f64, truncation: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    stick_weight_draw(phi, truncation, seed).map_err(|e| JsError::new(&e))
}

/// JSON-encoded [`DemoFit`].
#[wasm_bindgen]
pub fn generate_and_fit(model: &str, n: usize, seed: u64) -> Result<JsValue, JsError> {
    js(generate_and_fit_result(model, n, seed).and_then(|r| serde_json::to_string(&r).map_err(|e| e.to_string())))
}
