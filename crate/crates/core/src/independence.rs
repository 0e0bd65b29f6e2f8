//! Linear dependence between lifted feature blocks.
//!
//! The dependence measure between two coordinates is the squared Frobenius
//! norm of the cross-covariance of their random Fourier feature blocks. The
//! weighted variant multiplies each sample's features by its weight before
//! centering, as in
//!
//! ```text
//! C(u, v; w) = 1/(n-1) * sum_i (w_i u_i - mean_j w_j u_j)^T (w_i v_i - mean_j w_j v_j)
//! ```
//!
//! so that unit weights recover the plain unbiased estimator.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};

/// Sum of squared Frobenius norms over all coordinate pairs `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecorrObjective {
    pub total: f64,
    pub per_pair: BTreeMap<(usize, usize), f64>,
}

impl DecorrObjective {
    /// Mean of the per-pair norms, zero when there are no pairs.
    pub fn mean(&self) -> f64 {
        if self.per_pair.is_empty() {
            0.0
        } else {
            self.total / self.per_pair.len() as f64
        }
    }

    /// Writes `iteration,i,j,frob_sq` rows, without a header.
    pub fn write_pairs_csv<W: Write>(&self, iteration: usize, out: &mut W) -> std::io::Result<()> {
        for (&(i, j), v) in &self.per_pair {
            writeln!(out, "{iteration},{i},{j},{v}")?;
        }
        Ok(())
    }
}

fn check_rows(u: &ArrayView2<'_, f64>, v: &ArrayView2<'_, f64>) -> Result<usize> {
    let n = u.nrows();
    if v.nrows() != n {
        return Err(Error::DimensionMismatch {
            what: "cross-covariance rows",
            expected: n,
            got: v.nrows(),
        });
    }
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    Ok(n)
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            what: "weights",
            expected: n,
            got: weights.len(),
        });
    }
    for (index, &value) in weights.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite("weights"));
        }
        if value < 0.0 {
            return Err(Error::NegativeWeight { index, value });
        }
    }
    Ok(())
}

fn centered(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    &x - &mean
}

fn weighted_centered(x: ArrayView2<'_, f64>, weights: &[f64]) -> Array2<f64> {
    let mut wx = x.to_owned();
    for (mut row, &w) in wx.rows_mut().into_iter().zip(weights) {
        row *= w;
    }
    let mean = wx.mean_axis(Axis(0)).expect("non-empty");
    wx -= &mean;
    wx
}

/// Unbiased empirical cross-covariance of two blocks with equal row counts.
pub fn cross_cov(u: ArrayView2<'_, f64>, v: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = check_rows(&u, &v)?;
    let du = centered(u);
    let dv = centered(v);
    Ok(du.t().dot(&dv) / (n as f64 - 1.0))
}

/// Cross-covariance with per-sample weights applied to the features.
pub fn weighted_cross_cov(
    u: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    weights: &[f64],
) -> Result<Array2<f64>> {
    let n = check_rows(&u, &v)?;
    check_weights(weights, n)?;
    let du = weighted_centered(u, weights);
    let dv = weighted_centered(v, weights);
    Ok(du.t().dot(&dv) / (n as f64 - 1.0))
}

pub fn frob_sq(c: ArrayView2<'_, f64>) -> Result<f64> {
    if c.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("cross-covariance"));
    }
    Ok(c.iter().map(|x| x * x).sum())
}

/// Validates a reconstructed batch and returns `(n, number of blocks)`.
pub(crate) fn check_blocks(
    recon: &ArrayView2<'_, f64>,
    multiplier: usize,
) -> Result<(usize, usize)> {
    let (n, cols) = recon.dim();
    if multiplier == 0 {
        return Err(Error::InvalidArgument("multiplier must be >= 1".into()));
    }
    if cols == 0 || cols % multiplier != 0 {
        return Err(Error::InvalidArgument(format!(
            "{cols} columns not divisible into blocks of {multiplier}"
        )));
    }
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    if recon.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("reconstructed features"));
    }
    Ok((n, cols / multiplier))
}

/// Weighted, centered features and the full `(m*k, m*k)` covariance between
/// all lifted columns. Diagonal blocks are within-coordinate terms.
pub(crate) fn full_weighted_cov(
    recon: ArrayView2<'_, f64>,
    weights: &[f64],
) -> (Array2<f64>, Array2<f64>) {
    let n = recon.nrows();
    let d = weighted_centered(recon, weights);
    let cov = d.t().dot(&d) / (n as f64 - 1.0);
    (d, cov)
}

/// Decorrelation objective over every pair of `multiplier`-wide blocks.
pub fn decorr_objective(
    recon: ArrayView2<'_, f64>,
    weights: &[f64],
    multiplier: usize,
) -> Result<DecorrObjective> {
    let (n, blocks) = check_blocks(&recon, multiplier)?;
    check_weights(weights, n)?;
    let (_, cov) = full_weighted_cov(recon, weights);
    let k = multiplier;
    let mut per_pair = BTreeMap::new();
    let mut total = 0.0;
    for i in 0..blocks {
        for j in (i + 1)..blocks {
            let block = cov.slice(s![i * k..(i + 1) * k, j * k..(j + 1) * k]);
            let v = frob_sq(block)?;
            total += v;
            per_pair.insert((i, j), v);
        }
    }
    Ok(DecorrObjective { total, per_pair })
}
