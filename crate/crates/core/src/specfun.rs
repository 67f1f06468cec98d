//! Special functions and the densities/samplers the variational updates rely on.
//!
//! `ln_gamma` and `digamma` shift small arguments upward by recurrence and
//! then evaluate the Stirling / asymptotic series; near its roots at 1 and 2,
//! `ln_gamma` sums its Taylor series about 1 instead. Both are accurate to a
//! few ulps over `[1e-6, 1e6]`. Samplers take any `rand::Rng`; reproducible
//! streams come from [`RandomSeed::stream`].

use std::sync::OnceLock;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Arguments below this are shifted up before the Stirling series is applied.
const LN_GAMMA_SHIFT: f64 = 15.0;
const DIGAMMA_SHIFT: f64 = 10.0;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Within this distance of 1 or 2, `ln Γ` is summed from its Taylor series
/// about 1, which keeps full relative accuracy near its two roots.
const LN_GAMMA_ROOT_RADIUS: f64 = 0.25;
const LN_GAMMA_TAYLOR_TERMS: usize = 30;

/// `ζ(s)` for `s ≥ 2` by Euler–Maclaurin summation after 12 explicit terms.
fn zeta(s: f64) -> f64 {
    const HEAD: usize = 12;
    // B_2j / (2j)!
    const BERNOULLI: [f64; 6] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30_240.0,
        -1.0 / 1_209_600.0,
        1.0 / 47_900_160.0,
        -691.0 / 1_307_674_368_000.0,
    ];
    let n = HEAD as f64;
    let mut tail = n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    let mut rising = s;
    let mut power = n.powf(-s - 1.0);
    for (j, b) in BERNOULLI.iter().enumerate() {
        tail += b * rising * power;
        let k = 2.0 * j as f64;
        rising *= (s + k + 1.0) * (s + k + 2.0);
        power /= n * n;
    }
    (1..HEAD).rev().map(|k| (k as f64).powf(-s)).fold(tail, |acc, v| acc + v)
}

/// `(−1)^k ζ(k) / k` for `k = 2, 3, …`.
fn ln_gamma_taylor() -> &'static [f64; LN_GAMMA_TAYLOR_TERMS] {
    static COEFFS: OnceLock<[f64; LN_GAMMA_TAYLOR_TERMS]> = OnceLock::new();
    COEFFS.get_or_init(|| {
        std::array::from_fn(|i| {
            let k = (i + 2) as f64;
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * zeta(k) / k
        })
    })
}

/// `ln Γ(1 + ε)` for `|ε| ≤ LN_GAMMA_ROOT_RADIUS`.
fn ln_gamma_1p(eps: f64) -> f64 {
    let series = ln_gamma_taylor().iter().rev().fold(0.0, |acc, &c| acc * eps + c);
    eps * (-EULER_GAMMA + eps * series)
}

/// Seed for every random stream in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RandomSeed(pub u64);

/// Reproducible random stream. Not shared between threads; derive one per worker.
pub type SeedStream = ChaCha8Rng;

impl RandomSeed {
    pub fn stream(self) -> SeedStream {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Independent stream for a numbered sub-task (e.g. one of several replicate runs).
    pub fn substream(self, index: u64) -> SeedStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(index.wrapping_add(1));
        rng
    }
}

impl From<u64> for RandomSeed {
    fn from(seed: u64) -> Self {
        RandomSeed(seed)
    }
}

fn check_positive(name: &str, a: f64) -> Result<()> {
    if a.is_finite() && a > 0.0 {
        Ok(())
    } else {
        Err(domain(format!("{name} requires a finite positive argument, got {a}")))
    }
}

/// `ln Γ(x)` for `x > 0`. Returns NaN outside the domain.
pub fn ln_gamma(x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return f64::NAN;
    }
    if (x - 1.0).abs() <= LN_GAMMA_ROOT_RADIUS {
        return ln_gamma_1p(x - 1.0);
    }
    if (x - 2.0).abs() <= LN_GAMMA_ROOT_RADIUS {
        let eps = x - 2.0;
        return eps.ln_1p() + ln_gamma_1p(eps);
    }
    let mut z = x;
    let mut prod = 1.0;
    while z < LN_GAMMA_SHIFT {
        prod *= z;
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // Bernoulli terms B_2k / (2k(2k-1) z^(2k-1)), k = 1..7
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0
                            + inv2
                                * (-1.0 / 1680.0
                                    + inv2
                                        * (1.0 / 1188.0
                                            + inv2 * (-691.0 / 360_360.0 + inv2 * (1.0 / 156.0)))))));
    let stirling = (z - 0.5) * z.ln() - z + HALF_LN_2PI + series;
    if prod == 1.0 {
        stirling
    } else {
        stirling - prod.ln()
    }
}

/// `Ψ(x) = d/dx ln Γ(x)` for `x > 0`. Returns NaN outside the domain.
pub fn digamma(x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return f64::NAN;
    }
    // The 1/x term is subtracted last: for tiny x it dominates and must not
    // absorb the rounding of the other terms. Its own rounding error is
    // recovered exactly with an fma and folded into the small part.
    let mut z = x;
    let mut lead = 0.0;
    let mut shift = 0.0;
    if z < DIGAMMA_SHIFT {
        lead = 1.0 / z;
        shift = (-lead).mul_add(z, 1.0) / z;
        z += 1.0;
        while z < DIGAMMA_SHIFT {
            shift += 1.0 / z;
            z += 1.0;
        }
    }
    let inv2 = 1.0 / (z * z);
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32_760.0 - inv2 / 12.0))))));
    let asymptotic = z.ln() - 0.5 / z - tail;
    (asymptotic - shift) - lead
}

pub fn checked_ln_gamma(x: f64) -> Result<f64> {
    check_positive("ln_gamma", x)?;
    Ok(ln_gamma(x))
}

pub fn checked_digamma(x: f64) -> Result<f64> {
    check_positive("digamma", x)?;
    Ok(digamma(x))
}

/// Concentration vector of an inverted Dirichlet distribution over `D` positive
/// coordinates; it holds `D + 1` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct InvertedDirichletParams {
    alpha: Vec<f64>,
}

impl InvertedDirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(domain(format!(
                "inverted Dirichlet needs at least 2 concentrations, got {}",
                alpha.len()
            )));
        }
        if let Some((i, a)) = alpha.iter().enumerate().find(|(_, a)| !(a.is_finite() && **a > 0.0)) {
            return Err(domain(format!("concentration {i} must be finite and positive, got {a}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Number of observed coordinates `D`.
    pub fn dim(&self) -> usize {
        self.alpha.len() - 1
    }

    /// `ln Γ(Σα) − Σ ln Γ(α_d)`.
    pub fn log_normalizer(&self) -> f64 {
        let total: f64 = self.alpha.iter().sum();
        ln_gamma(total) - self.alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>()
    }

    /// Marginal means `α_d / (α_{D+1} − 1)`, defined only when `α_{D+1} > 1`.
    pub fn mean(&self) -> Option<Vec<f64>> {
        let last = *self.alpha.last()?;
        (last > 1.0).then(|| self.alpha[..self.dim()].iter().map(|a| a / (last - 1.0)).collect())
    }

    /// Log density without validating `x`.
    pub(crate) fn log_pdf_unchecked(&self, x: &[f64]) -> f64 {
        let total: f64 = self.alpha.iter().sum();
        let mut acc = self.log_normalizer();
        let mut sum_x = 0.0;
        for (&xd, &ad) in x.iter().zip(&self.alpha) {
            acc += (ad - 1.0) * xd.ln();
            sum_x += xd;
        }
        acc - total * sum_x.ln_1p()
    }
}

impl TryFrom<Vec<f64>> for InvertedDirichletParams {
    type Error = crate::Error;

    fn try_from(alpha: Vec<f64>) -> Result<Self> {
        Self::new(alpha)
    }
}

impl From<InvertedDirichletParams> for Vec<f64> {
    fn from(p: InvertedDirichletParams) -> Self {
        p.alpha
    }
}

/// Log density of the inverted Dirichlet distribution at `x`.
pub fn invdir_log_pdf(x: &[f64], params: &InvertedDirichletParams) -> Result<f64> {
    if x.len() != params.dim() {
        return Err(domain(format!(
            "point has {} coordinates, parameters expect {}",
            x.len(),
            params.dim()
        )));
    }
    if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
        return Err(domain(format!("coordinate {i} must be finite and positive, got {v}")));
    }
    Ok(params.log_pdf_unchecked(x))
}

/// `ln Gam(x; shape, rate)`.
pub fn gamma_log_pdf(x: f64, shape: f64, rate: f64) -> Result<f64> {
    check_positive("gamma shape", shape)?;
    check_positive("gamma rate", rate)?;
    check_positive("gamma argument", x)?;
    Ok(shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x)
}

/// `ln Beta(x; a, b)`.
pub fn beta_log_pdf(x: f64, a: f64, b: f64) -> Result<f64> {
    check_positive("beta a", a)?;
    check_positive("beta b", b)?;
    if !(x > 0.0 && x < 1.0) {
        return Err(domain(format!("beta argument must lie in (0, 1), got {x}")));
    }
    Ok(ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p())
}

/// Marsaglia–Tsang squeeze for unit rate; shapes below one are boosted by `U^(1/shape)`.
pub(crate) fn gamma_unit<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let u: f64 = rng.sample(Open01);
        return gamma_unit(shape + 1.0, rng) * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let t = 1.0 + c * z;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u: f64 = rng.sample(Open01);
        let z2 = z * z;
        if u < 1.0 - 0.0331 * z2 * z2 {
            return d * v;
        }
        if u.ln() < 0.5 * z2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// One draw from `Gam(shape, rate)` (density `rate^shape / Γ(shape) · x^(shape−1) e^(−rate·x)`).
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    check_positive("gamma shape", shape)?;
    check_positive("gamma rate", rate)?;
    Ok(gamma_unit(shape, rng) / rate)
}

pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    check_positive("beta a", a)?;
    check_positive("beta b", b)?;
    let x = gamma_unit(a, rng);
    let y = gamma_unit(b, rng);
    Ok(x / (x + y))
}

/// Draw from the inverted Dirichlet as ratios `y_d / y_{D+1}` of independent unit gammas.
pub fn sample_invdir<R: Rng + ?Sized>(params: &InvertedDirichletParams, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.dim());
    sample_invdir_into(params, rng, &mut out);
    out
}

pub(crate) fn sample_invdir_into<R: Rng + ?Sized>(
    params: &InvertedDirichletParams,
    rng: &mut R,
    out: &mut Vec<f64>,
) {
    out.clear();
    let alpha = params.alpha();
    let d = params.dim();
    for &a in &alpha[..d] {
        out.push(gamma_unit(a, rng));
    }
    let denom = gamma_unit(alpha[d], rng);
    for v in out.iter_mut() {
        *v /= denom;
        // Ratios of extreme gammas can underflow; the support is open.
        if *v <= 0.0 {
            *v = f64::MIN_POSITIVE;
        }
    }
}
