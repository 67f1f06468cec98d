//! Brute-force reference implementations shared by the integration tests.
//! Everything here is written with plain loops over `Vec`s and takes its
//! special functions from `statrs`, so it shares no code with the crate.

#![allow(dead_code)]

use invdir_mix::{PositiveDataset, PriorConfig, VariationalPosterior};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::{digamma, ln_gamma};

/// A random small problem: data, responsibilities and every factor's parameters.
#[derive(Debug, Clone)]
pub struct Instance {
    pub x: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Instance {
    pub fn random(seed: u64, max_n: usize, max_m: usize, max_d: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=max_n);
        let m = rng.random_range(2..=max_m);
        let d = rng.random_range(1..=max_d);
        let x = (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0f64..3.0).exp()).collect()).collect();
        let r = (0..n)
            .map(|_| {
                let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..1.0)).collect();
                let total: f64 = w.iter().sum();
                w.iter().map(|v| v / total).collect()
            })
            .collect();
        let mut vec = |lo: f64, hi: f64, len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(lo..hi)).collect() };
        let g = vec(0.5, 20.0, m);
        let h = vec(0.5, 20.0, m);
        let s = vec(1.0, 5.0, m);
        let t = vec(0.01, 5.0, m);
        let u = (0..m).map(|_| vec(0.5, 50.0, d + 1)).collect();
        let v = (0..m).map(|_| vec(0.1, 10.0, d + 1)).collect();
        Self { x, r, g, h, s, t, u, v }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn m(&self) -> usize {
        self.g.len()
    }

    pub fn d(&self) -> usize {
        self.x[0].len()
    }

    pub fn dataset(&self) -> PositiveDataset {
        PositiveDataset::from_rows(&self.x).unwrap()
    }

    pub fn posterior(&self) -> VariationalPosterior {
        let mat = |rows: &Vec<Vec<f64>>| {
            Array2::from_shape_vec((rows.len(), rows[0].len()), rows.iter().flatten().copied().collect()).unwrap()
        };
        VariationalPosterior {
            r: mat(&self.r),
            g: Array1::from(self.g.clone()),
            h: Array1::from(self.h.clone()),
            s: Array1::from(self.s.clone()),
            t: Array1::from(self.t.clone()),
            u: mat(&self.u),
            v: mat(&self.v),
        }
    }

    pub fn mean_phi(&self, m: usize) -> f64 {
        self.s[m] / self.t[m]
    }

    pub fn mean_ln_phi(&self, m: usize) -> f64 {
        digamma(self.s[m]) - self.t[m].ln()
    }

    pub fn mean_ln_lambda(&self, m: usize) -> f64 {
        digamma(self.g[m]) - digamma(self.g[m] + self.h[m])
    }

    pub fn mean_ln_one_minus_lambda(&self, m: usize) -> f64 {
        digamma(self.h[m]) - digamma(self.g[m] + self.h[m])
    }

    pub fn mean_alpha(&self, m: usize, d: usize) -> f64 {
        self.u[m][d] / self.v[m][d]
    }

    pub fn mean_ln_alpha(&self, m: usize, d: usize) -> f64 {
        digamma(self.u[m][d]) - self.v[m][d].ln()
    }

    /// `x` with the trailing `1` appended.
    fn extended(&self, n: usize) -> Vec<f64> {
        let mut row = self.x[n].clone();
        row.push(1.0);
        row
    }

    pub fn r_tilde(&self, m: usize) -> f64 {
        let k = self.d() + 1;
        let means: Vec<f64> = (0..k).map(|d| self.mean_alpha(m, d)).collect();
        let total: f64 = means.iter().sum();
        let mut out = ln_gamma(total);
        for d in 0..k {
            out -= ln_gamma(means[d]);
            out += (digamma(total) - digamma(means[d])) * (self.mean_ln_alpha(m, d) - means[d].ln()) * means[d];
        }
        out
    }

    pub fn ln_rho(&self, n: usize, m: usize) -> f64 {
        let mut out = self.mean_ln_lambda(m) + self.r_tilde(m);
        for j in 0..m {
            out += self.mean_ln_one_minus_lambda(j);
        }
        let total_x: f64 = self.x[n].iter().sum();
        let mut alpha_total = 0.0;
        for d in 0..=self.d() {
            alpha_total += self.mean_alpha(m, d);
        }
        for d in 0..self.d() {
            out += (self.mean_alpha(m, d) - 1.0) * self.x[n][d].ln();
        }
        out - alpha_total * (1.0 + total_x).ln()
    }
}

pub fn brute_responsibilities(inst: &Instance) -> Vec<Vec<f64>> {
    (0..inst.n())
        .map(|n| {
            let logs: Vec<f64> = (0..inst.m()).map(|m| inst.ln_rho(n, m)).collect();
            let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
            let total: f64 = w.iter().sum();
            w.iter().map(|v| v / total).collect()
        })
        .collect()
}

pub fn brute_lambda(inst: &Instance) -> (Vec<f64>, Vec<f64>) {
    let mut g = vec![0.0; inst.m()];
    let mut h = vec![0.0; inst.m()];
    for m in 0..inst.m() {
        g[m] = 1.0;
        h[m] = inst.mean_phi(m);
        for n in 0..inst.n() {
            g[m] += inst.r[n][m];
            for j in m + 1..inst.m() {
                h[m] += inst.r[n][j];
            }
        }
    }
    (g, h)
}

pub fn brute_phi(inst: &Instance, prior: &PriorConfig) -> (Vec<f64>, Vec<f64>) {
    let s = (0..inst.m()).map(|_| prior.s0 + 1.0).collect();
    let t = (0..inst.m()).map(|m| prior.t0 - inst.mean_ln_one_minus_lambda(m)).collect();
    (s, t)
}

pub fn brute_alpha(inst: &Instance, prior: &PriorConfig) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let k = inst.d() + 1;
    let mut u = vec![vec![prior.u0; k]; inst.m()];
    let mut v = vec![vec![prior.v0; k]; inst.m()];
    for m in 0..inst.m() {
        let total: f64 = (0..k).map(|d| inst.mean_alpha(m, d)).sum();
        for n in 0..inst.n() {
            let row = inst.extended(n);
            let denom = (1.0 + inst.x[n].iter().sum::<f64>()).ln();
            for d in 0..k {
                let a = inst.mean_alpha(m, d);
                u[m][d] += inst.r[n][m] * (digamma(total) - digamma(a)) * a;
                v[m][d] -= inst.r[n][m] * (row[d].ln() - denom);
            }
        }
    }
    (u, v)
}

/// `E[ln Gam(y | a, b)]` for `y` with mean `mean` and log-mean `mean_log`.
fn gamma_cross(a: f64, b: f64, mean: f64, mean_log: f64) -> f64 {
    a * b.ln() - ln_gamma(a) + (a - 1.0) * mean_log - b * mean
}

/// Surrogate ELBO with every expectation written out term by term.
pub fn brute_elbo(inst: &Instance, prior: &PriorConfig) -> f64 {
    let mut total = 0.0;
    for n in 0..inst.n() {
        for m in 0..inst.m() {
            let r = inst.r[n][m];
            if r > 0.0 {
                total += r * inst.ln_rho(n, m) - r * r.ln();
            }
        }
    }
    for m in 0..inst.m() {
        let (g, h) = (inst.g[m], inst.h[m]);
        let (ll, l1m) = (inst.mean_ln_lambda(m), inst.mean_ln_one_minus_lambda(m));
        // ln Beta(λ | 1, φ) = ln φ + (φ − 1) ln(1 − λ)
        total += inst.mean_ln_phi(m) + (inst.mean_phi(m) - 1.0) * l1m;
        total -= ln_gamma(g + h) - ln_gamma(g) - ln_gamma(h) + (g - 1.0) * ll + (h - 1.0) * l1m;
        total += gamma_cross(prior.s0, prior.t0, inst.mean_phi(m), inst.mean_ln_phi(m));
        total -= gamma_cross(inst.s[m], inst.t[m], inst.mean_phi(m), inst.mean_ln_phi(m));
        for d in 0..=inst.d() {
            let (a, la) = (inst.mean_alpha(m, d), inst.mean_ln_alpha(m, d));
            total += gamma_cross(prior.u0, prior.v0, a, la) - gamma_cross(inst.u[m][d], inst.v[m][d], a, la);
        }
    }
    total
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn max_rel_err<'a>(a: impl IntoIterator<Item = &'a f64>, b: impl IntoIterator<Item = &'a f64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| rel_err(*x, *y)).fold(0.0, f64::max)
}

/// Largest relative deviation of the crate's four closed-form updates from
/// the brute-force versions on one instance.
pub fn update_discrepancy(inst: &Instance, prior: &PriorConfig) -> f64 {
    use invdir_mix::inference::{
        compute_expectations, update_alpha_posterior, update_lambda_posterior, update_phi_posterior,
    };
    let post = inst.posterior();
    let cache = compute_expectations(&post);
    let (g, h) = update_lambda_posterior(&post.r, &cache);
    let (s, t) = update_phi_posterior(&cache, prior);
    let (u, v) = update_alpha_posterior(&inst.dataset(), &post.r, &cache, prior);
    let (bg, bh) = brute_lambda(inst);
    let (bs, bt) = brute_phi(inst, prior);
    let (bu, bv) = brute_alpha(inst, prior);
    [
        max_rel_err(g.iter(), bg.iter()),
        max_rel_err(h.iter(), bh.iter()),
        max_rel_err(s.iter(), bs.iter()),
        max_rel_err(t.iter(), bt.iter()),
        max_rel_err(u.iter(), bu.iter().flatten()),
        max_rel_err(v.iter(), bv.iter().flatten()),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Inverted Dirichlet density written straight from its definition.
pub fn invdir_pdf(alpha: &[f64], x: &[f64]) -> f64 {
    let total: f64 = alpha.iter().sum();
    let mut log = ln_gamma(total) - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>();
    for (a, xi) in alpha.iter().zip(x) {
        log += (a - 1.0) * xi.ln();
    }
    log -= total * (1.0 + x.iter().sum::<f64>()).ln();
    log.exp()
}

/// Composite Simpson weights for `2k` panels on `[lo, hi]`.
pub fn simpson(lo: f64, hi: f64, panels: usize) -> Vec<(f64, f64)> {
    assert!(panels % 2 == 0);
    let step = (hi - lo) / panels as f64;
    (0..=panels)
        .map(|i| {
            let w = if i == 0 || i == panels { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            (lo + i as f64 * step, w * step / 3.0)
        })
        .collect()
}

/// CDF of a one-dimensional inverted Dirichlet on a grid, by Simpson
/// quadrature in `t = x / (1 + x)`. Returns `(t_k, F(t_k))` for uniform `t_k`.
pub struct QuadratureCdf {
    step: f64,
    values: Vec<f64>,
}

impl QuadratureCdf {
    pub fn new(alpha: [f64; 2], cells: usize) -> Self {
        let step = 1.0 / cells as f64;
        let integrand = |t: f64| {
            if t <= 0.0 || t >= 1.0 {
                return 0.0;
            }
            let x = t / (1.0 - t);
            invdir_pdf(&alpha, &[x]) / ((1.0 - t) * (1.0 - t))
        };
        let mut values = vec![0.0];
        let mut acc = 0.0;
        for k in 0..cells {
            let lo = k as f64 * step;
            acc += simpson(lo, lo + step, 8).into_iter().map(|(t, w)| w * integrand(t)).sum::<f64>();
            values.push(acc);
        }
        Self { step, values }
    }

    pub fn total(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Linear interpolation between grid points.
    pub fn cdf(&self, x: f64) -> f64 {
        let t = x / (1.0 + x);
        let pos = t / self.step;
        let k = (pos.floor() as usize).min(self.values.len() - 2);
        let frac = pos - k as f64;
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }
}

/// Two-sided Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// `ln Γ(1 + ε)` from the Weierstrass product,
/// `−γε + Σ_n [ε/n − ln(1 + ε/n)]`, with compensated summation.
pub fn ln_gamma_1p_product(eps: f64) -> f64 {
    const TERMS: usize = 2_000_000;
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for n in (1..=TERMS).rev() {
        let y = eps / n as f64;
        let term = if y.abs() < 0.05 {
            // y − ln(1 + y) = y²/2 − y³/3 + …
            let (mut acc, mut power, mut k, mut sign) = (0.0, y * y, 2.0, 1.0);
            while power.abs() > 1e-20 * y * y {
                acc += sign * power / k;
                power *= y;
                k += 1.0;
                sign = -sign;
            }
            acc
        } else {
            y - y.ln_1p()
        };
        let t = sum + term;
        comp += if sum.abs() >= term.abs() { (sum - t) + term } else { (term - t) + sum };
        sum = t;
    }
    let n = TERMS as f64;
    let tail = eps * eps / 2.0 * (1.0 / n - 0.5 / (n * n));
    -0.577_215_664_901_532_9 * eps + (sum + comp + tail)
}

/// Reference `ln Γ(x)`: the product form near the roots at 1 and 2, `statrs` elsewhere.
pub fn ln_gamma_reference(x: f64) -> f64 {
    if (x - 1.0).abs() < 0.3 {
        ln_gamma_1p_product(x - 1.0)
    } else if (x - 2.0).abs() < 0.3 {
        (x - 2.0).ln_1p() + ln_gamma_1p_product(x - 2.0)
    } else {
        ln_gamma(x)
    }
}

/// Error of `value` as an approximation of `Ψ(x)`. Below 1 the reference is
/// `Ψ(x + 1) − 1/x` with the reciprocal's rounding error recovered by an fma,
/// so the comparison is not limited by the spacing of doubles near `−1/x`.
pub fn digamma_error(value: f64, x: f64) -> f64 {
    if x >= 1.0 {
        return (value - digamma(x)).abs();
    }
    let inv = 1.0 / x;
    let residual = (-inv).mul_add(x, 1.0) / x;
    // For small x, value + inv cancels exactly; elsewhere its rounding is far below 1e-10.
    ((value + inv) - (digamma(x + 1.0) - residual)).abs()
}
