#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.random_range(-1.5..1.5))
}

pub fn positive(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.1..3.0)).collect()
}

/// Element-by-element weighted cross-covariance, written from the formula
/// with no matrix products.
pub fn loop_cov(u: &Array2<f64>, v: &Array2<f64>, w: &[f64]) -> Array2<f64> {
    let n = u.nrows();
    let mut out = Array2::zeros((u.ncols(), v.ncols()));
    for a in 0..u.ncols() {
        for b in 0..v.ncols() {
            let mut mu = 0.0;
            let mut mv = 0.0;
            for i in 0..n {
                mu += w[i] * u[[i, a]];
                mv += w[i] * v[[i, b]];
            }
            mu /= n as f64;
            mv /= n as f64;
            let mut acc = 0.0;
            for i in 0..n {
                acc += (w[i] * u[[i, a]] - mu) * (w[i] * v[[i, b]] - mv);
            }
            out[[a, b]] = acc / (n as f64 - 1.0);
        }
    }
    out
}

pub fn loop_frob(c: &Array2<f64>) -> f64 {
    let mut s = 0.0;
    for r in 0..c.nrows() {
        for k in 0..c.ncols() {
            s += c[[r, k]] * c[[r, k]];
        }
    }
    s
}

/// Pairwise objective built from the loop covariance.
pub fn loop_objective(recon: &Array2<f64>, w: &[f64], k: usize) -> f64 {
    let blocks = recon.ncols() / k;
    let mut total = 0.0;
    for i in 0..blocks {
        for j in (i + 1)..blocks {
            let u = recon.slice(ndarray::s![.., i * k..(i + 1) * k]).to_owned();
            let v = recon.slice(ndarray::s![.., j * k..(j + 1) * k]).to_owned();
            total += loop_frob(&loop_cov(&u, &v, w));
        }
    }
    total
}

/// Euclidean projection onto `{w >= 0, sum w = total}` by sorting.
pub fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, x) in s.iter().enumerate() {
        cum += x;
        let t = (cum - total) / (i + 1) as f64;
        if x - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

/// Central difference of a scalar function of a vector.
pub fn numeric_grad(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn vec_rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let d = na.max(nb);
    if d == 0.0 {
        0.0
    } else {
        diff / d
    }
}

/// Straight-line InfoNCE from a score matrix, using plain logs of sums.
pub fn naive_infonce(scores: &Array2<f64>) -> f64 {
    let n = scores.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let mut denom = 0.0;
        for b in 0..n {
            denom += scores[[i, b]].exp();
        }
        total += (scores[[i, i]].exp() / (denom / n as f64)).ln();
    }
    total / n as f64
}
