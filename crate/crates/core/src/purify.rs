//! Saliency ranking of local features and the InfoNCE estimator used to tie
//! the kept ones to the sentence representation.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::netcore::info_nce_from_scores;

/// Number of slots kept for a purification ratio: `ceil(ratio * kslots)`.
pub fn num_kept(ratio: f64, kslots: usize) -> Result<usize> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "purify_ratio must be in (0, 1], got {ratio}"
        )));
    }
    if kslots == 0 {
        return Err(Error::InvalidArgument("kslots must be positive".into()));
    }
    // Tolerance keeps products like 0.6 * 5 = 3.0000000000000004 at 3.
    let m = (ratio * kslots as f64 - 1e-9).ceil() as usize;
    Ok(m.clamp(1, kslots))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyReport {
    /// `(n, kslots)` Euclidean norm of the loss gradient per slot embedding.
    pub per_slot_norm: Array2<f64>,
    /// Per sample, the kept slots from most to least salient.
    pub selected: Vec<Vec<usize>>,
}

impl SaliencyReport {
    pub fn kept(&self) -> usize {
        self.selected.first().map_or(0, Vec::len)
    }

    /// Slot index of the `rank`-th most salient kept slot for every sample.
    pub fn slots_at_rank(&self, rank: usize) -> Vec<usize> {
        self.selected.iter().map(|s| s[rank]).collect()
    }
}

/// Ranks slots by gradient norm. `grad_local` holds one row per
/// `(sample, slot)` in sample-major order. Ties go to the lower slot index.
pub fn saliency(
    grad_local: ArrayView2<'_, f64>,
    kslots: usize,
    purify_ratio: f64,
) -> Result<SaliencyReport> {
    let m = num_kept(purify_ratio, kslots)?;
    let rows = grad_local.nrows();
    if !rows.is_multiple_of(kslots) {
        return Err(Error::InvalidArgument(format!(
            "{rows} gradient rows do not split into {kslots} slots"
        )));
    }
    let n = rows / kslots;
    let mut norms = Array2::zeros((n, kslots));
    for (r, g) in grad_local.rows().into_iter().enumerate() {
        norms[[r / kslots, r % kslots]] = g.dot(&g).sqrt();
    }
    if norms.iter().any(|x: &f64| !x.is_finite()) {
        return Err(Error::NonFinite("saliency"));
    }
    let selected = norms
        .rows()
        .into_iter()
        .map(|row| {
            let mut order: Vec<usize> = (0..kslots).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            order.truncate(m);
            order
        })
        .collect();
    Ok(SaliencyReport {
        per_slot_norm: norms,
        selected,
    })
}

/// Fraction of samples that kept each slot.
pub fn selection_frequencies(reports: &[SaliencyReport], kslots: usize) -> Vec<f64> {
    let mut counts = vec![0usize; kslots];
    let mut total = 0usize;
    for r in reports {
        for s in &r.selected {
            total += 1;
            for &j in s {
                counts[j] += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|c| {
            if total == 0 {
                0.0
            } else {
                c as f64 / total as f64
            }
        })
        .collect()
}

/// Writes `slot,fraction` rows with a header.
pub fn write_selection_csv<W: Write>(freqs: &[f64], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "slot,fraction")?;
    for (j, f) in freqs.iter().enumerate() {
        writeln!(out, "{j},{f}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InfoNceEstimate {
    pub value: f64,
    pub batch_size: usize,
}

/// Affine projection of a local feature into representation space.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    /// `(d_emb, m_z)`
    pub weight: Array2<f64>,
    /// `(1, m_z)`
    pub bias: Array2<f64>,
}

/// InfoNCE estimate of the mutual information between one slot's local
/// features and the representation, with in-batch negatives.
pub fn infonce(
    local: ArrayView2<'_, f64>,
    global: ArrayView2<'_, f64>,
    critic: &Critic,
) -> Result<InfoNceEstimate> {
    let n = local.nrows();
    if n == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    if global.nrows() != n {
        return Err(Error::DimensionMismatch {
            what: "infonce rows",
            expected: n,
            got: global.nrows(),
        });
    }
    if local.ncols() != critic.weight.nrows() || global.ncols() != critic.weight.ncols() {
        return Err(Error::DimensionMismatch {
            what: "critic shape",
            expected: local.ncols() * global.ncols(),
            got: critic.weight.len(),
        });
    }
    let projected = local.dot(&critic.weight) + &critic.bias;
    let scores = projected.dot(&global.t());
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("infonce scores"));
    }
    let (value, _) = info_nce_from_scores(scores.view());
    Ok(InfoNceEstimate {
        value,
        batch_size: n,
    })
}
