use std::cmp::Ordering;

use ndarray::{Array2, ArrayView1};
use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::model::PositiveDataset;
use crate::specfun::RandomSeed;

const MAX_LLOYD_ITERATIONS: usize = 100;

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn lex_cmp(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Nearest center, ties to the lowest index.
fn nearest(x: ArrayView1<'_, f64>, centers: &Array2<f64>) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centers.outer_iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Lloyd's algorithm on the raw coordinates. Returns the final labels and
/// centers, with centers relabelled in lexicographic order.
pub fn kmeans(data: &PositiveDataset, k: usize, seed: RandomSeed) -> Result<(Vec<usize>, Array2<f64>)> {
    let n = data.len();
    if k == 0 || n < k {
        return Err(Error::Config(format!(
            "K-means needs at least as many observations as centers ({n} < {k})"
        )));
    }
    let x = data.values();
    let mut rng = seed.stream();
    let mut picks = sample(&mut rng, n, k).into_vec();
    picks.sort_unstable();
    let mut centers = x.select(ndarray::Axis(0), &picks);

    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for (i, row) in x.outer_iter().enumerate() {
            let l = nearest(row, &centers);
            if labels[i] != l {
                labels[i] = l;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros(centers.dim());
        let mut counts = vec![0usize; k];
        for (row, &l) in x.outer_iter().zip(&labels) {
            let mut s = sums.row_mut(l);
            s += &row;
            counts[l] += 1;
        }
        for (l, &c) in counts.iter().enumerate() {
            // Empty clusters keep their previous center.
            if c > 0 {
                let mean = &sums.row(l) / c as f64;
                centers.row_mut(l).assign(&mean);
            }
        }
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| lex_cmp(centers.row(a), centers.row(b)).then(a.cmp(&b)));
    let mut relabel = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    let centers = centers.select(ndarray::Axis(0), &order);
    let labels = labels.into_iter().map(|l| relabel[l]).collect();
    Ok((labels, centers))
}

/// One-hot responsibilities from a seeded K-means run with `m` centers.
pub fn kmeans_init(data: &PositiveDataset, m: usize, seed: RandomSeed) -> Result<Array2<f64>> {
    let (labels, _) = kmeans(data, m, seed)?;
    let mut r = Array2::zeros((data.len(), m));
    for (i, l) in labels.into_iter().enumerate() {
        r[[i, l]] = 1.0;
    }
    Ok(r)
}
