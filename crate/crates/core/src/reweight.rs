//! Global per-sample weight table.
//!
//! Weights are parametrized as `w = n * softmax(theta)`, which keeps every
//! weight positive and the full table summing to `n` after any update. Each
//! step moves only the `theta` entries of the current mini-batch, along the
//! analytic gradient of the batch decorrelation objective.

use std::io::Write;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::independence::{check_blocks, decorr_objective, full_weighted_cov};

/// `theta` is clamped to `[-THETA_BOUND, THETA_BOUND]` so that `exp` never
/// underflows a realized weight to zero.
pub const THETA_BOUND: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    theta: Vec<f64>,
    lr: f64,
    lr_decay: f64,
    step_count: u64,
    #[serde(skip)]
    log_norm: Option<f64>,
}

impl WeightTable {
    pub fn new(n: usize, lr: f64, lr_decay: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("weight table needs n >= 1".into()));
        }
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight lr must be positive, got {lr}"
            )));
        }
        if !(lr_decay >= 0.0 && lr_decay.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight lr decay must be nonnegative, got {lr_decay}"
            )));
        }
        let mut t = Self {
            theta: vec![0.0; n],
            lr,
            lr_decay,
            step_count: 0,
            log_norm: None,
        };
        t.refresh();
        Ok(t)
    }

    /// Table with an explicit parametrization; entries are clamped.
    pub fn with_theta(theta: Vec<f64>, lr: f64, lr_decay: f64) -> Result<Self> {
        let mut t = Self::new(theta.len(), lr, lr_decay)?;
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("theta"));
        }
        t.theta = theta
            .into_iter()
            .map(|x| x.clamp(-THETA_BOUND, THETA_BOUND))
            .collect();
        t.refresh();
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Learning rate the next step will use.
    pub fn current_lr(&self) -> f64 {
        self.lr / (1.0 + self.lr_decay * self.step_count as f64)
    }

    fn refresh(&mut self) {
        let max = self.theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = self.theta.iter().map(|t| (t - max).exp()).sum();
        self.log_norm = Some(max + sum.ln());
    }

    fn log_norm(&self) -> f64 {
        match self.log_norm {
            Some(v) => v,
            None => {
                let max = self.theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                max + self.theta.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
            }
        }
    }

    #[inline]
    fn weight_at(&self, i: usize, log_norm: f64) -> f64 {
        self.theta.len() as f64 * (self.theta[i] - log_norm).exp()
    }

    /// Realized weights at `indices`.
    pub fn realize(&self, indices: &[usize]) -> Result<Vec<f64>> {
        let ln = self.log_norm();
        indices
            .iter()
            .map(|&i| {
                if i >= self.theta.len() {
                    Err(Error::IndexOutOfRange {
                        index: i,
                        len: self.theta.len(),
                    })
                } else {
                    Ok(self.weight_at(i, ln))
                }
            })
            .collect()
    }

    /// The whole realized weight vector.
    pub fn realize_all(&self) -> Vec<f64> {
        let ln = self.log_norm();
        (0..self.theta.len())
            .map(|i| self.weight_at(i, ln))
            .collect()
    }

    /// One descent step on the batch decorrelation objective. Returns the
    /// objective re-evaluated with the updated weights.
    pub fn step(
        &mut self,
        recon: ArrayView2<'_, f64>,
        batch_indices: &[usize],
        multiplier: usize,
    ) -> Result<f64> {
        if recon.nrows() != batch_indices.len() {
            return Err(Error::DimensionMismatch {
                what: "batch indices",
                expected: recon.nrows(),
                got: batch_indices.len(),
            });
        }
        let weights = self.realize(batch_indices)?;
        let grad_w = weight_grad(recon, &weights, multiplier)?;

        // Chain rule through n * softmax, restricted to the batch:
        // d w_i / d theta_g = w_i (delta_ig - w_g / n).
        let n = self.theta.len() as f64;
        let inner: f64 = grad_w.iter().zip(&weights).map(|(g, w)| g * w).sum();
        let mut grad_theta: Vec<(usize, f64)> = Vec::with_capacity(batch_indices.len());
        for (pos, &g) in batch_indices.iter().enumerate() {
            let gt = weights[pos] * grad_w[pos];
            match grad_theta.iter_mut().find(|(idx, _)| *idx == g) {
                Some(entry) => entry.1 += gt,
                None => grad_theta.push((g, gt - weights[pos] / n * inner)),
            }
        }
        if grad_theta.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite("weight gradient"));
        }

        let lr = self.current_lr();
        for (g, d) in grad_theta {
            self.theta[g] = (self.theta[g] - lr * d).clamp(-THETA_BOUND, THETA_BOUND);
        }
        self.step_count += 1;
        self.refresh();

        let weights = self.realize(batch_indices)?;
        Ok(decorr_objective(recon, &weights, multiplier)?.total)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut t: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if t.theta.is_empty() || t.theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("theta"));
        }
        t.refresh();
        Ok(t)
    }

    /// Writes `epoch,bin_lo,bin_hi,count` rows for a histogram of the
    /// realized weights on `[0, max]`.
    pub fn write_histogram_csv<W: Write>(
        &self,
        epoch: usize,
        bins: usize,
        out: &mut W,
    ) -> Result<()> {
        let w = self.realize_all();
        let bins = bins.max(1);
        let max = w.iter().copied().fold(0.0, f64::max);
        let width = if max > 0.0 { max / bins as f64 } else { 1.0 };
        let mut counts = vec![0usize; bins];
        for x in &w {
            let b = ((x / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        for (b, c) in counts.iter().enumerate() {
            writeln!(
                out,
                "{epoch},{},{},{c}",
                b as f64 * width,
                (b + 1) as f64 * width
            )?;
        }
        Ok(())
    }
}

/// Analytic gradient of the decorrelation objective with respect to the
/// batch weights (not the parametrization).
///
/// With `D` the centered weighted features and `M` their covariance with the
/// within-coordinate diagonal blocks zeroed, `dO/dw_i = 2/(n-1) * sum_c
/// (D M)_ic * u_ic`.
pub fn weight_grad(
    recon: ArrayView2<'_, f64>,
    weights: &[f64],
    multiplier: usize,
) -> Result<Vec<f64>> {
    let (n, blocks) = check_blocks(&recon, multiplier)?;
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            what: "weights",
            expected: n,
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("weights"));
    }
    if blocks < 2 {
        return Ok(vec![0.0; n]);
    }
    let (d, mut cov) = full_weighted_cov(recon, weights);
    let k = multiplier;
    for b in 0..blocks {
        cov.slice_mut(ndarray::s![b * k..(b + 1) * k, b * k..(b + 1) * k])
            .fill(0.0);
    }
    let dm = d.dot(&cov);
    let scale = 2.0 / (n as f64 - 1.0);
    Ok(dm
        .rows()
        .into_iter()
        .zip(recon.rows())
        .map(|(g, u)| scale * g.dot(&u))
        .collect())
}
