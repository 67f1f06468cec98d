//! Synthetic mixtures with known parameters, and the metrics that compare a
//! fitted estimate against them.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{domain, Result};
use crate::model::{MixtureEstimate, PositiveDataset};
use crate::specfun::{sample_invdir_into, InvertedDirichletParams, RandomSeed};

/// Largest component count for which [`recovery_report`] searches all matchings.
pub const MAX_MATCHED_COMPONENTS: usize = 8;

/// Minimum Monte-Carlo sample count accepted by [`kl_divergence_mc`].
pub const MIN_KL_SAMPLES: usize = 10_000;

/// A finite mixture of inverted Dirichlet distributions.
pub trait MixtureDensity {
    fn weights(&self) -> &[f64];
    fn components(&self) -> &[InvertedDirichletParams];

    fn dim(&self) -> usize {
        self.components().first().map_or(0, InvertedDirichletParams::dim)
    }
}

impl MixtureDensity for MixtureEstimate {
    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn components(&self) -> &[InvertedDirichletParams] {
        &self.components
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawModel {
    name: String,
    weights: Vec<f64>,
    components: Vec<InvertedDirichletParams>,
}

/// A mixture with known parameters used to generate data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct GroundTruthModel {
    name: String,
    weights: Vec<f64>,
    components: Vec<InvertedDirichletParams>,
}

impl GroundTruthModel {
    /// Weights must lie in (0, 1] and sum to 1 within 1e-9; components must share one dimension.
    pub fn new(name: impl Into<String>, weights: Vec<f64>, components: Vec<InvertedDirichletParams>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(domain(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && **w <= 1.0)) {
            return Err(domain(format!("mixture weight must lie in (0, 1], got {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(domain(format!("mixture weights sum to {total}, not 1")));
        }
        let dim = components[0].dim();
        if components.iter().any(|c| c.dim() != dim) {
            return Err(domain("mixture components differ in dimension"));
        }
        Ok(Self { name: name.into(), weights, components })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }
}

impl MixtureDensity for GroundTruthModel {
    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn components(&self) -> &[InvertedDirichletParams] {
        &self.components
    }
}

impl TryFrom<RawModel> for GroundTruthModel {
    type Error = crate::Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        Self::new(raw.name, raw.weights, raw.components)
    }
}

impl From<GroundTruthModel> for RawModel {
    fn from(m: GroundTruthModel) -> Self {
        Self { name: m.name, weights: m.weights, components: m.components }
    }
}

fn table_model(name: &str, weights: &[f64], alphas: &[&[f64]]) -> GroundTruthModel {
    let components = alphas
        .iter()
        .map(|a| InvertedDirichletParams::new(a.to_vec()).expect("table parameters are positive"))
        .collect();
    GroundTruthModel::new(name, weights.to_vec(), components).expect("table weights are valid")
}

/// The three benchmark mixtures `A` (K=2, D=3), `B` (K=4, D=5) and `C` (K=5, D=6).
pub fn builtin_models() -> Vec<GroundTruthModel> {
    vec![
        table_model("A", &[0.5, 0.5], &[&[16.0, 8.0, 6.0, 2.0], &[8.0, 12.0, 15.0, 18.0]]),
        table_model(
            "B",
            &[0.25; 4],
            &[
                &[12.0, 36.0, 14.0, 18.0, 55.0, 16.0],
                &[32.0, 48.0, 25.0, 12.0, 36.0, 48.0],
                &[25.0, 10.0, 18.0, 10.0, 36.0, 48.0],
                &[6.0, 28.0, 16.0, 32.0, 12.0, 24.0],
            ],
        ),
        table_model(
            "C",
            &[0.2; 5],
            &[
                &[12.0, 21.0, 36.0, 18.0, 32.0, 65.0, 76.0],
                &[28.0, 42.0, 21.0, 8.0, 54.0, 21.0, 48.0],
                &[32.0, 12.0, 7.0, 35.0, 13.0, 32.0, 18.0],
                &[62.0, 44.0, 31.0, 65.0, 72.0, 15.0, 44.0],
                &[53.0, 12.0, 18.0, 44.0, 65.0, 33.0, 52.0],
            ],
        ),
    ]
}

/// Model `A` with the last concentration of its first component set to 12,
/// the value its fitted estimates point to.
pub fn corrected_model_a() -> GroundTruthModel {
    table_model("corrected-A", &[0.5, 0.5], &[&[16.0, 8.0, 6.0, 12.0], &[8.0, 12.0, 15.0, 18.0]])
}

/// Looks up `A`, `B`, `C` or `corrected-A` (case-insensitive).
pub fn builtin_model(name: &str) -> Option<GroundTruthModel> {
    if name.eq_ignore_ascii_case("corrected-a") {
        return Some(corrected_model_a());
    }
    builtin_models().into_iter().find(|m| m.name.eq_ignore_ascii_case(name))
}

/// Per-component log weights and normalizers, so repeated density
/// evaluations skip the gamma functions.
struct PreparedMixture<'a> {
    log_weights: Vec<f64>,
    normalizers: Vec<f64>,
    totals: Vec<f64>,
    components: &'a [InvertedDirichletParams],
}

impl<'a> PreparedMixture<'a> {
    fn new<M: MixtureDensity + ?Sized>(model: &'a M) -> Self {
        let components = model.components();
        Self {
            log_weights: model.weights().iter().map(|w| w.ln()).collect(),
            normalizers: components.iter().map(InvertedDirichletParams::log_normalizer).collect(),
            totals: components.iter().map(|c| c.alpha().iter().sum()).collect(),
            components,
        }
    }

    fn log_pdf(&self, ln_x: &[f64], log1p_sum: f64) -> f64 {
        let mut terms = Vec::with_capacity(self.components.len());
        for (k, c) in self.components.iter().enumerate() {
            let mut acc = self.log_weights[k] + self.normalizers[k] - self.totals[k] * log1p_sum;
            for (&lx, &a) in ln_x.iter().zip(c.alpha()) {
                acc += (a - 1.0) * lx;
            }
            terms.push(acc);
        }
        log_sum_exp(&terms)
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn check_point(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(domain(format!("point has {} coordinates, mixture expects {dim}", x.len())));
    }
    if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
        return Err(domain(format!("coordinate {i} must be finite and positive, got {v}")));
    }
    Ok(())
}

fn log_features(x: &[f64]) -> (Vec<f64>, f64) {
    (x.iter().map(|v| v.ln()).collect(), x.iter().sum::<f64>().ln_1p())
}

/// `ln Σ_k π_k p(x | α_k)`, combined by log-sum-exp.
pub fn mixture_log_pdf<M: MixtureDensity + ?Sized>(model: &M, x: &[f64]) -> Result<f64> {
    check_point(x, model.dim())?;
    let (ln_x, log1p_sum) = log_features(x);
    Ok(PreparedMixture::new(model).log_pdf(&ln_x, log1p_sum))
}

/// Mean of `ln p(x_n)` over the rows of `data`.
pub fn mean_log_predictive<M: MixtureDensity + ?Sized>(model: &M, data: &PositiveDataset) -> Result<f64> {
    if data.dim() != model.dim() {
        return Err(domain(format!("data has {} columns, mixture expects {}", data.dim(), model.dim())));
    }
    let prepared = PreparedMixture::new(model);
    let total: f64 = data
        .values()
        .outer_iter()
        .map(|row| {
            let (ln_x, log1p_sum) = log_features(row.as_slice().expect("dataset rows are contiguous"));
            prepared.log_pdf(&ln_x, log1p_sum)
        })
        .sum();
    Ok(total / data.len() as f64)
}

/// `n` draws and their component labels: a categorical label, then an
/// inverted Dirichlet draw from that component.
pub fn generate_labeled<M: MixtureDensity + ?Sized>(
    model: &M,
    n: usize,
    seed: RandomSeed,
) -> Result<(PositiveDataset, Vec<usize>)> {
    if n == 0 {
        return Err(domain("sample count must be at least 1"));
    }
    let picker = WeightedIndex::new(model.weights()).map_err(|e| domain(format!("mixture weights: {e}")))?;
    let mut rng = seed.stream();
    let dim = model.dim();
    let mut values = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    let mut draw = Vec::with_capacity(dim);
    for _ in 0..n {
        let k = picker.sample(&mut rng);
        sample_invdir_into(&model.components()[k], &mut rng, &mut draw);
        values.extend_from_slice(&draw);
        labels.push(k);
    }
    let values = ndarray::Array2::from_shape_vec((n, dim), values).expect("row-major buffer matches shape");
    Ok((PositiveDataset::new(values)?, labels))
}

pub fn generate<M: MixtureDensity + ?Sized>(model: &M, n: usize, seed: RandomSeed) -> Result<PositiveDataset> {
    generate_labeled(model, n, seed).map(|(data, _)| data)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// `KL(p ‖ q)` as the sample mean of `ln p(x) − ln q(x)` over `x ~ p`.
pub fn kl_divergence_mc<P, Q>(p: &P, q: &Q, n_samples: usize, seed: RandomSeed) -> Result<McEstimate>
where
    P: MixtureDensity + ?Sized,
    Q: MixtureDensity + ?Sized,
{
    if p.dim() != q.dim() {
        return Err(domain(format!("mixtures differ in dimension ({} vs {})", p.dim(), q.dim())));
    }
    if n_samples < MIN_KL_SAMPLES {
        return Err(domain(format!("KL needs at least {MIN_KL_SAMPLES} samples, got {n_samples}")));
    }
    let draws = generate(p, n_samples, seed)?;
    let (prep_p, prep_q) = (PreparedMixture::new(p), PreparedMixture::new(q));
    let diffs: Vec<f64> = draws
        .values()
        .outer_iter()
        .map(|row| {
            let (ln_x, log1p_sum) = log_features(row.as_slice().expect("dataset rows are contiguous"));
            prep_p.log_pdf(&ln_x, log1p_sum) - prep_q.log_pdf(&ln_x, log1p_sum)
        })
        .collect();
    let s = summarize(&diffs);
    Ok(McEstimate { estimate: s.mean, std_error: s.std / (s.n as f64).sqrt() })
}

/// One matched pair of a true and an estimated component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentMatch {
    pub truth: usize,
    pub estimate: usize,
    /// `π̂ − π`.
    pub weight_error: f64,
    /// `|α̂_d − α_d| / α_d` per concentration.
    pub alpha_rel_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub true_k: usize,
    pub estimated_k: usize,
    pub count_match: bool,
    /// Ordered by true component index; covers `min(true_k, estimated_k)` pairs.
    pub matches: Vec<ComponentMatch>,
}

impl RecoveryReport {
    pub fn max_weight_error(&self) -> f64 {
        self.matches.iter().map(|m| m.weight_error.abs()).fold(0.0, f64::max)
    }

    /// Largest relative error over the first `dims` concentrations of every match.
    pub fn max_alpha_rel_error(&self, dims: usize) -> f64 {
        self.matches
            .iter()
            .flat_map(|m| m.alpha_rel_errors.iter().take(dims))
            .copied()
            .fold(0.0, f64::max)
    }
}

fn match_cost<T, E>(truth: &T, est: &E, i: usize, j: usize) -> f64
where
    T: MixtureDensity + ?Sized,
    E: MixtureDensity + ?Sized,
{
    let da: f64 = truth.components()[i]
        .alpha()
        .iter()
        .zip(est.components()[j].alpha())
        .map(|(a, b)| (a - b).abs())
        .sum();
    (truth.weights()[i] - est.weights()[j]).abs() + da
}

/// Exhaustive search over injective assignments of the smaller side into the larger.
fn best_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    fn search(
        row: usize,
        cost: &[Vec<f64>],
        used: &mut Vec<bool>,
        current: &mut Vec<usize>,
        acc: f64,
        best: &mut (f64, Vec<usize>),
    ) {
        if acc >= best.0 {
            return;
        }
        if row == cost.len() {
            *best = (acc, current.clone());
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                current.push(j);
                search(row + 1, cost, used, current, acc + cost[row][j], best);
                current.pop();
                used[j] = false;
            }
        }
    }
    let cols = cost.first().map_or(0, Vec::len);
    let mut best = (f64::INFINITY, Vec::new());
    search(0, cost, &mut vec![false; cols], &mut Vec::new(), 0.0, &mut best);
    best.1
}

/// Matches estimated components to true ones by minimal total
/// `|Δπ| + Σ_d |Δα_d|`. A differing component count is reported through
/// `count_match`; the surplus side stays unmatched.
pub fn recovery_report<T, E>(truth: &T, est: &E) -> Result<RecoveryReport>
where
    T: MixtureDensity + ?Sized,
    E: MixtureDensity + ?Sized,
{
    if truth.dim() != est.dim() && !est.components().is_empty() {
        return Err(domain(format!("mixtures differ in dimension ({} vs {})", truth.dim(), est.dim())));
    }
    let (kt, ke) = (truth.weights().len(), est.weights().len());
    if kt.min(ke) > MAX_MATCHED_COMPONENTS {
        return Err(domain(format!(
            "matching supports at most {MAX_MATCHED_COMPONENTS} components on the smaller side"
        )));
    }
    let pairs: Vec<(usize, usize)> = if kt <= ke {
        let cost: Vec<Vec<f64>> = (0..kt).map(|i| (0..ke).map(|j| match_cost(truth, est, i, j)).collect()).collect();
        best_assignment(&cost).into_iter().enumerate().collect()
    } else {
        let cost: Vec<Vec<f64>> = (0..ke).map(|j| (0..kt).map(|i| match_cost(truth, est, i, j)).collect()).collect();
        let mut pairs: Vec<(usize, usize)> = best_assignment(&cost).into_iter().enumerate().map(|(j, i)| (i, j)).collect();
        pairs.sort_unstable();
        pairs
    };
    let matches = pairs
        .into_iter()
        .map(|(i, j)| {
            let (a, b) = (truth.components()[i].alpha(), est.components()[j].alpha());
            ComponentMatch {
                truth: i,
                estimate: j,
                weight_error: est.weights()[j] - truth.weights()[i],
                alpha_rel_errors: a.iter().zip(b).map(|(t, e)| (e - t).abs() / t).collect(),
            }
        })
        .collect();
    Ok(RecoveryReport { true_k: kt, estimated_k: ke, count_match: kt == ke, matches })
}

/// Sample mean and (n − 1)-denominator standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    Summary { mean, std: var.sqrt(), n }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p_value: f64,
}

/// Two-sample Student t-test with pooled variance, testing equal means.
pub fn pooled_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(domain("t-test needs at least two values per sample"));
    }
    let (sa, sb) = (summarize(a), summarize(b));
    let (na, nb) = (sa.n as f64, sb.n as f64);
    let df = na + nb - 2.0;
    let pooled = ((na - 1.0) * sa.std.powi(2) + (nb - 1.0) * sb.std.powi(2)) / df;
    let se = (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    if !(se > 0.0) {
        return Err(domain("t-test samples have zero variance"));
    }
    let t = (sa.mean - sb.mean) / se;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| domain(e.to_string()))?;
    Ok(TTest { t, df, p_value: 2.0 * dist.sf(t.abs()) })
}
