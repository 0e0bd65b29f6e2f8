//! Slot classifier: embedding table, encoder, classifier and InfoNCE critic,
//! plus the combined training objective.
//!
//! ```text
//! T = embed[tokens]                          (n * kslots, d_emb)
//! H = tanh(concat_slots(T) W1 + b1)          (n, hidden)
//! Z = tanh(H W2 + b2)                        (n, m_z)
//! logits = Z Wc + bc                         (n, classes)
//! ```
//!
//! The objective is `(1/n) sum_i w_i CE_i - alpha * sum_r InfoNCE(T^(r) Wq + bq; Z)`
//! where `T^(r)` holds each sample's `r`-th most salient slot embedding.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::netcore::{init_rng, ParamSet, Tape, Var};
use crate::purify::{saliency, SaliencyReport};

pub const EMBED: &str = "embed";
pub const ENC_W1: &str = "enc.w1";
pub const ENC_B1: &str = "enc.b1";
pub const ENC_W2: &str = "enc.w2";
pub const ENC_B2: &str = "enc.b2";
pub const CLS_W: &str = "cls.w";
pub const CLS_B: &str = "cls.b";
pub const CRITIC_W: &str = "critic.w";
pub const CRITIC_B: &str = "critic.b";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab: usize,
    pub kslots: usize,
    pub d_emb: usize,
    pub hidden: usize,
    pub m_z: usize,
    pub num_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab: 64,
            kslots: 8,
            d_emb: 16,
            hidden: 32,
            m_z: 16,
            num_classes: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeproLossConfig {
    pub alpha: f64,
    pub purify_ratio: f64,
    pub use_decorrelation: bool,
    pub use_purification: bool,
}

impl Default for DeproLossConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            purify_ratio: 0.7,
            use_decorrelation: true,
            use_purification: true,
        }
    }
}

impl DeproLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if !(self.purify_ratio > 0.0 && self.purify_ratio <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "purify_ratio must be in (0, 1], got {}",
                self.purify_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeproModel {
    pub config: ModelConfig,
    pub params: ParamSet,
}

/// Handles to the forward values of one batch.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    /// Local features, one row per `(sample, slot)`.
    pub local: Var,
    pub z: Var,
    pub logits: Var,
}

/// A recorded objective, ready for [`Tape::backward`] from `total`.
#[derive(Debug)]
pub struct DeproForward {
    pub tape: Tape,
    pub vars: ForwardVars,
    pub total: Var,
    pub ce: f64,
    /// Sum of the per-rank InfoNCE estimates (zero when purification is off).
    pub mi: f64,
    pub mi_terms: Vec<f64>,
    pub saliency: Option<SaliencyReport>,
}

impl DeproForward {
    pub fn objective(&self) -> f64 {
        self.tape.scalar_value(self.total)
    }
}

impl DeproModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let c = config;
        if [c.vocab, c.kslots, c.d_emb, c.hidden, c.m_z].contains(&0) || c.num_classes < 2 {
            return Err(Error::InvalidArgument(format!("bad model config {c:?}")));
        }
        let mut rng = init_rng(seed);
        let mut p = ParamSet::new(seed);
        p.init_normal(EMBED, c.vocab, c.d_emb, 0.1, &mut rng);
        p.init_glorot(ENC_W1, c.kslots * c.d_emb, c.hidden, &mut rng);
        p.init_zeros(ENC_B1, 1, c.hidden);
        p.init_glorot(ENC_W2, c.hidden, c.m_z, &mut rng);
        p.init_zeros(ENC_B2, 1, c.m_z);
        p.init_glorot(CLS_W, c.m_z, c.num_classes, &mut rng);
        p.init_zeros(CLS_B, 1, c.num_classes);
        p.init_glorot(CRITIC_W, c.d_emb, c.m_z, &mut rng);
        p.init_zeros(CRITIC_B, 1, c.m_z);
        Ok(Self { config, params: p })
    }

    /// Rebuilds a model from checkpointed parameters, inferring dimensions
    /// from their shapes.
    pub fn from_params(params: ParamSet) -> Result<Self> {
        let shape = |name: &str| {
            params
                .get(name)
                .map(|a| a.dim())
                .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter {name}")))
        };
        let (vocab, d_emb) = shape(EMBED)?;
        let (concat, hidden) = shape(ENC_W1)?;
        let (_, m_z) = shape(ENC_W2)?;
        let (_, num_classes) = shape(CLS_W)?;
        if d_emb == 0 || concat % d_emb != 0 {
            return Err(Error::Config(
                "encoder input is not a multiple of d_emb".into(),
            ));
        }
        let config = ModelConfig {
            vocab,
            kslots: concat / d_emb,
            d_emb,
            hidden,
            m_z,
            num_classes,
        };
        let reference = Self::new(config, 0)?;
        for (name, a) in reference.params.iter() {
            if shape(name)? != a.dim() {
                return Err(Error::Config(format!(
                    "parameter {name} has the wrong shape"
                )));
            }
        }
        Ok(Self { config, params })
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.kslots != self.config.kslots {
            return Err(Error::DimensionMismatch {
                what: "slots per sample",
                expected: self.config.kslots,
                got: batch.kslots,
            });
        }
        if batch.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        Ok(())
    }

    /// Records the forward pass; `slot_mask` removes slots from the encoder
    /// input.
    pub fn forward_masked(
        &self,
        tape: &mut Tape,
        batch: &Batch,
        slot_mask: &[bool],
    ) -> Result<ForwardVars> {
        self.check_batch(batch)?;
        let p = &self.params;
        let table = tape.param(p, EMBED)?;
        let local = tape.embed(table, &batch.token_ids)?;
        let flat = tape.concat_slots(local, self.config.kslots, slot_mask)?;
        let (w1, b1) = (tape.param(p, ENC_W1)?, tape.param(p, ENC_B1)?);
        let h = tape.affine(flat, w1, Some(b1))?;
        let h = tape.tanh(h);
        let (w2, b2) = (tape.param(p, ENC_W2)?, tape.param(p, ENC_B2)?);
        let z = tape.affine(h, w2, Some(b2))?;
        let z = tape.tanh(z);
        let (wc, bc) = (tape.param(p, CLS_W)?, tape.param(p, CLS_B)?);
        let logits = tape.affine(z, wc, Some(bc))?;
        if tape.value(logits).iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("activations"));
        }
        Ok(ForwardVars { local, z, logits })
    }

    pub fn forward(&self, tape: &mut Tape, batch: &Batch) -> Result<ForwardVars> {
        self.forward_masked(tape, batch, &vec![true; self.config.kslots])
    }

    /// Local features and representation for a batch.
    pub fn encode(&self, batch: &Batch) -> Result<(Array2<f64>, Array2<f64>)> {
        let mut tape = Tape::new();
        let v = self.forward(&mut tape, batch)?;
        Ok((tape.value(v.local).clone(), tape.value(v.z).clone()))
    }

    pub fn logits(&self, batch: &Batch) -> Result<Array2<f64>> {
        let mut tape = Tape::new();
        let v = self.forward(&mut tape, batch)?;
        Ok(tape.value(v.logits).clone())
    }

    /// Arg-max class per sample; ties go to the lower class index.
    pub fn predict(&self, batch: &Batch) -> Result<Vec<usize>> {
        let logits = self.logits(batch)?;
        Ok(logits
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (k, &v)| {
                        if v > best.1 {
                            (k, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect())
    }

    /// Appends the combined objective to a tape that already holds the
    /// forward pass of `batch`.
    pub fn append_objective(
        &self,
        tape: &mut Tape,
        vars: ForwardVars,
        batch: &Batch,
        weights: &[f64],
        cfg: &DeproLossConfig,
    ) -> Result<(Var, f64, Vec<f64>, Option<SaliencyReport>)> {
        cfg.validate()?;
        let ce = tape.weighted_ce(vars.logits, &batch.labels, weights)?;
        if !cfg.use_purification {
            return Ok((ce, tape.scalar_value(ce), Vec::new(), None));
        }
        let ce_value = tape.scalar_value(ce);

        // Saliency is taken from the weighted cross-entropy alone.
        let grads = tape.backward(ce)?;
        let zero;
        let grad_local = match grads.wrt(vars.local) {
            Some(g) => g,
            None => {
                zero = Array2::zeros(tape.value(vars.local).dim());
                &zero
            }
        };
        let report = saliency(grad_local.view(), self.config.kslots, cfg.purify_ratio)?;
        if report.kept() == 0 {
            return Err(Error::InvalidArgument(
                "purification selected no slots".into(),
            ));
        }

        let k = self.config.kslots;
        let (wq, bq) = (
            tape.param(&self.params, CRITIC_W)?,
            tape.param(&self.params, CRITIC_B)?,
        );
        let mut mi_sum: Option<Var> = None;
        let mut terms = Vec::with_capacity(report.kept());
        for rank in 0..report.kept() {
            let rows: Vec<usize> = report
                .slots_at_rank(rank)
                .into_iter()
                .enumerate()
                .map(|(i, slot)| i * k + slot)
                .collect();
            let local = tape.gather_rows(vars.local, &rows)?;
            let projected = tape.affine(local, wq, Some(bq))?;
            let est = tape.info_nce(projected, vars.z)?;
            terms.push(tape.scalar_value(est));
            mi_sum = Some(match mi_sum {
                None => est,
                Some(acc) => tape.add(acc, est)?,
            });
        }
        let mi = mi_sum.expect("at least one kept slot");
        let penalty = tape.scale(mi, cfg.alpha);
        let total = tape.sub(ce, penalty)?;
        Ok((total, ce_value, terms, Some(report)))
    }

    /// Forward pass plus objective for one batch.
    pub fn depro_loss(
        &self,
        batch: &Batch,
        weights: &[f64],
        cfg: &DeproLossConfig,
    ) -> Result<DeproForward> {
        if weights.len() != batch.len() {
            return Err(Error::DimensionMismatch {
                what: "batch weights",
                expected: batch.len(),
                got: weights.len(),
            });
        }
        let mut tape = Tape::new();
        let vars = self.forward(&mut tape, batch)?;
        let (total, ce, mi_terms, saliency) =
            self.append_objective(&mut tape, vars, batch, weights, cfg)?;
        if !tape.scalar_value(total).is_finite() {
            return Err(Error::NonFinite("loss"));
        }
        Ok(DeproForward {
            tape,
            vars,
            total,
            ce,
            mi: mi_terms.iter().sum(),
            mi_terms,
            saliency,
        })
    }
}
