//! Training orchestration, evaluation, sweeps and the decorrelation study.
//!
//! Per mini-batch the loop is: forward pass, lift the detached
//! representation with the run's RFF bank, take `weight_steps` steps on the
//! weight table, realize the batch weights, then one SGD step on the combined
//! objective.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{generate, Dataset, Splits, TaskSpec};
use crate::error::{Error, Result};
use crate::independence::decorr_objective;
use crate::model::{DeproLossConfig, DeproModel, ModelConfig};
use crate::purify::{selection_frequencies, write_selection_csv, SaliencyReport};
use crate::reweight::WeightTable;
use crate::rff::{standardize, RffBank};

/// One flat run configuration. Every field is a JSON key and a `--key value`
/// override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    // task
    pub num_classes: usize,
    pub kslots: usize,
    pub signal_slots: usize,
    pub vocab: usize,
    pub signal_tokens_per_class: usize,
    pub align_train: f64,
    pub align_ood: f64,
    pub noise_flip: f64,
    pub train_pool: usize,
    pub ood_size: usize,
    pub data_seed: u64,
    // model
    pub d_emb: usize,
    pub hidden: usize,
    pub m_z: usize,
    // decorrelation
    pub rff_multiplier: usize,
    pub weight_lr: f64,
    pub weight_lr_decay: f64,
    pub weight_steps: usize,
    // purification
    pub alpha: f64,
    pub purify_ratio: f64,
    pub use_decorrelation: bool,
    pub use_purification: bool,
    // optimization
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let task = TaskSpec::default();
        let model = ModelConfig::default();
        let loss = DeproLossConfig::default();
        Self {
            num_classes: task.num_classes,
            kslots: task.kslots,
            signal_slots: task.signal_slots,
            vocab: task.vocab,
            signal_tokens_per_class: task.signal_tokens_per_class,
            align_train: task.align_train,
            align_ood: task.align_ood,
            noise_flip: task.noise_flip,
            train_pool: task.train_pool,
            ood_size: task.ood_size,
            data_seed: task.seed,
            d_emb: model.d_emb,
            hidden: model.hidden,
            m_z: model.m_z,
            rff_multiplier: 4,
            weight_lr: 1e-2,
            weight_lr_decay: 1e-3,
            weight_steps: 5,
            alpha: loss.alpha,
            purify_ratio: loss.purify_ratio,
            use_decorrelation: loss.use_decorrelation,
            use_purification: loss.use_purification,
            epochs: 30,
            batch_size: 32,
            lr: 0.05,
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

impl RunConfig {
    /// Weight learning-rate preset used for the fact-verification setting.
    pub const FEVER_WEIGHT_LR: f64 = 5e-2;

    pub fn task_spec(&self) -> TaskSpec {
        TaskSpec {
            num_classes: self.num_classes,
            kslots: self.kslots,
            signal_slots: self.signal_slots,
            vocab: self.vocab,
            signal_tokens_per_class: self.signal_tokens_per_class,
            align_train: self.align_train,
            align_ood: self.align_ood,
            noise_flip: self.noise_flip,
            train_pool: self.train_pool,
            ood_size: self.ood_size,
            seed: self.data_seed,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            vocab: self.vocab,
            kslots: self.kslots,
            d_emb: self.d_emb,
            hidden: self.hidden,
            m_z: self.m_z,
            num_classes: self.num_classes,
        }
    }

    pub fn loss_config(&self) -> DeproLossConfig {
        DeproLossConfig {
            alpha: self.alpha,
            purify_ratio: self.purify_ratio,
            use_decorrelation: self.use_decorrelation,
            use_purification: self.use_purification,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.task_spec().validate()?;
        self.loss_config().validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list must not be empty".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.rff_multiplier == 0 || self.m_z == 0 || self.d_emb == 0 || self.hidden == 0 {
            return Err(Error::Config(
                "model and rff dimensions must be positive".into(),
            ));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be >= 0, got {}", self.lr)));
        }
        if !(self.weight_lr > 0.0 && self.weight_lr_decay >= 0.0) {
            return Err(Error::Config(
                "weight_lr must be > 0 and weight_lr_decay >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Parses a JSON object, applying defaults for missing keys.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Applies `key value` overrides. Values are read as JSON when they
    /// parse, otherwise as strings.
    pub fn with_overrides<'a, I>(&self, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut obj = serde_json::to_value(self)?;
        let map = obj.as_object_mut().expect("config serializes to an object");
        for (key, raw) in pairs {
            let key = key.replace('-', "_");
            if !map.contains_key(&key) {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
            let value = serde_json::from_str::<Value>(raw)
                .unwrap_or_else(|_| Value::String(raw.to_string()));
            let value = match (&key[..], value) {
                ("seeds", Value::Number(n)) => Value::Array(vec![Value::Number(n)]),
                ("seeds", Value::String(s)) => Value::Array(
                    s.split(',')
                        .map(|p| p.trim().parse::<u64>().map(Value::from))
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::Config(format!("bad seed list `{s}`")))?,
                ),
                (_, v) => v,
            };
            map.insert(key, value);
        }
        let cfg: Self = serde_json::from_value(obj).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Seed of the RFF bank for a run seed; shared by every ablation arm.
    pub fn bank_seed(seed: u64) -> u64 {
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xB5AD_4ECE_DA1C_E2A9
    }

    fn shuffle_seed(seed: u64) -> u64 {
        seed.wrapping_add(0x5851_F42D_4C95_7F2D)
    }
}

/// Per-iteration training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub seed: u64,
    pub iteration: usize,
    pub epoch: usize,
    pub ce: f64,
    /// Mean per-pair weighted cross-covariance norm of the batch, after the
    /// weight steps.
    pub decorr_mean: f64,
    /// Sum of the InfoNCE estimates over kept ranks.
    pub infonce: f64,
    pub objective: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dev_acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ood_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub decorr_mean: f64,
    pub dev_acc: f64,
    pub ood_acc: f64,
}

/// Pair breakdown of the last batch of an epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub iteration: usize,
    pub i: usize,
    pub j: usize,
    pub frob_sq: f64,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub iters: Vec<IterRecord>,
    pub epochs: Vec<EpochRecord>,
    pub pairs: Vec<PairRecord>,
    /// Fraction of samples keeping each slot, over the whole run.
    pub selection: Vec<f64>,
    pub dev_acc: f64,
    pub ood_acc: f64,
    pub model: DeproModel,
    pub weights: WeightTable,
    pub bank: RffBank,
}

#[derive(Debug, Clone)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: RunConfig,
    pub runs: Vec<SeedRun>,
    pub failures: Vec<SeedFailure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub stdev: f64,
    pub count: usize,
}

/// Mean and sample standard deviation.
pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary {
            mean: f64::NAN,
            stdev: f64::NAN,
            count: 0,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let stdev = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Summary {
        mean,
        stdev,
        count: n,
    }
}

impl RunReport {
    pub fn dev_summary(&self) -> Summary {
        summarize(&self.runs.iter().map(|r| r.dev_acc).collect::<Vec<_>>())
    }

    pub fn ood_summary(&self) -> Summary {
        summarize(&self.runs.iter().map(|r| r.ood_acc).collect::<Vec<_>>())
    }

    pub fn all_succeeded(&self) -> bool {
        self.failures.is_empty()
    }

    /// Mean over seeds of each epoch's mean decorrelation measure.
    pub fn epoch_decorr_curve(&self) -> Vec<f64> {
        let Some(first) = self.runs.first() else {
            return Vec::new();
        };
        (0..first.epochs.len())
            .map(|e| {
                self.runs
                    .iter()
                    .map(|r| r.epochs[e].decorr_mean)
                    .sum::<f64>()
                    / self.runs.len() as f64
            })
            .collect()
    }

    pub fn write_metrics_jsonl<W: Write>(&self, out: &mut W) -> Result<()> {
        for run in &self.runs {
            for rec in &run.iters {
                serde_json::to_writer(&mut *out, rec)?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    /// Per-seed finals followed by `mean` and `stdev` rows.
    pub fn write_results_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "seed,dev_acc,ood_acc,status")?;
        for r in &self.runs {
            writeln!(out, "{},{},{},ok", r.seed, r.dev_acc, r.ood_acc)?;
        }
        for f in &self.failures {
            writeln!(
                out,
                "{},,,\"failed: {}\"",
                f.seed,
                f.error.replace('"', "'")
            )?;
        }
        let (d, o) = (self.dev_summary(), self.ood_summary());
        writeln!(out, "mean,{},{},", d.mean, o.mean)?;
        writeln!(out, "stdev,{},{},", d.stdev, o.stdev)?;
        Ok(())
    }

    pub fn write_pairs_csv<W: Write>(&self, arm: &str, out: &mut W, header: bool) -> Result<()> {
        if header {
            writeln!(out, "arm,seed,iteration,i,j,frob_sq")?;
        }
        for r in &self.runs {
            for p in &r.pairs {
                writeln!(
                    out,
                    "{arm},{},{},{},{},{}",
                    r.seed, p.iteration, p.i, p.j, p.frob_sq
                )?;
            }
        }
        Ok(())
    }

    /// Slot selection fractions averaged over seeds.
    pub fn selection(&self) -> Vec<f64> {
        let k = self.config.kslots;
        let mut acc = vec![0.0; k];
        for r in &self.runs {
            for (a, s) in acc.iter_mut().zip(&r.selection) {
                *a += s / self.runs.len() as f64;
            }
        }
        acc
    }

    pub fn write_selection_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        write_selection_csv(&self.selection(), out)?;
        Ok(())
    }

    /// Writes `metrics.jsonl`, `results.csv`, `selection.csv`, `config.json`
    /// and per-seed checkpoints into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut m = BufWriter::new(File::create(dir.join("metrics.jsonl"))?);
        self.write_metrics_jsonl(&mut m)?;
        m.flush()?;
        let mut r = BufWriter::new(File::create(dir.join("results.csv"))?);
        self.write_results_csv(&mut r)?;
        r.flush()?;
        let mut s = BufWriter::new(File::create(dir.join("selection.csv"))?);
        self.write_selection_csv(&mut s)?;
        s.flush()?;
        std::fs::write(
            dir.join("config.json"),
            serde_json::to_string_pretty(&self.config)?,
        )?;
        for run in &self.runs {
            run.model
                .params
                .save(&dir.join(format!("model_seed{}.params", run.seed)))?;
            run.weights
                .save(&dir.join(format!("weights_seed{}.json", run.seed)))?;
            run.bank
                .save(&dir.join(format!("bank_seed{}.json", run.seed)))?;
            let mut h = BufWriter::new(File::create(
                dir.join(format!("weights_hist_seed{}.csv", run.seed)),
            )?);
            writeln!(h, "epoch,bin_lo,bin_hi,count")?;
            run.weights
                .write_histogram_csv(run.epochs.len(), 20, &mut h)?;
            h.flush()?;
        }
        Ok(())
    }
}

/// Arg-max accuracy of a model on a dataset.
pub fn evaluate(model: &DeproModel, dataset: &Dataset) -> Result<f64> {
    if dataset.kslots != model.config.kslots || dataset.num_classes != model.config.num_classes {
        return Err(Error::DimensionMismatch {
            what: "dataset slots/classes",
            expected: model.config.kslots,
            got: dataset.kslots,
        });
    }
    if dataset.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let preds = model.predict(&dataset.all())?;
    let hits = preds
        .iter()
        .zip(&dataset.labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / dataset.len() as f64)
}

/// Trains one seed on pre-generated splits.
pub fn train_seed(cfg: &RunConfig, splits: &Splits, seed: u64) -> Result<SeedRun> {
    cfg.validate()?;
    let train = &splits.train;
    let model_cfg = cfg.model_config();
    let loss_cfg = cfg.loss_config();
    let k = cfg.rff_multiplier;
    let mut model = DeproModel::new(model_cfg, seed)?;
    let bank = RffBank::sample(cfg.m_z, k, RunConfig::bank_seed(seed))?;
    let mut table = WeightTable::new(train.len(), cfg.weight_lr, cfg.weight_lr_decay)?;
    let mut rng = ChaCha8Rng::seed_from_u64(RunConfig::shuffle_seed(seed));

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut iters = Vec::new();
    let mut epochs = Vec::new();
    let mut pairs = Vec::new();
    let mut reports: Vec<SaliencyReport> = Vec::new();
    let mut iteration = 0usize;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_decorr = 0.0;
        let mut epoch_batches = 0usize;
        let chunks: Vec<&[usize]> = order
            .chunks(cfg.batch_size)
            .filter(|c| c.len() >= 2)
            .collect();
        let last = chunks.len().saturating_sub(1);
        for (bi, chunk) in chunks.into_iter().enumerate() {
            let diverged = |e: Error| match e {
                Error::NonFinite(what) => Error::Diverged {
                    iteration,
                    msg: format!("non-finite {what}"),
                },
                other => other,
            };
            let batch = train.batch(chunk);
            let mut tape = crate::netcore::Tape::new();
            let vars = model.forward(&mut tape, &batch).map_err(diverged)?;
            let recon = bank
                .apply(standardize(tape.value(vars.z).view()).view())
                .map_err(diverged)?;

            let ids = &batch.sample_ids;
            let weights = if cfg.use_decorrelation {
                for _ in 0..cfg.weight_steps {
                    table.step(recon.view(), ids, k).map_err(diverged)?;
                }
                table.realize(ids)?
            } else {
                vec![1.0; batch.len()]
            };
            let decorr = decorr_objective(recon.view(), &weights, k).map_err(diverged)?;

            let (total, ce, mi_terms, report) = model
                .append_objective(&mut tape, vars, &batch, &weights, &loss_cfg)
                .map_err(diverged)?;
            let objective = tape.scalar_value(total);
            if !objective.is_finite() {
                return Err(Error::Diverged {
                    iteration,
                    msg: format!("objective {objective}"),
                });
            }
            let grads = tape.backward(total)?;
            model
                .params
                .sgd_step(&grads, cfg.lr)
                .map_err(|e| Error::Diverged {
                    iteration,
                    msg: e.to_string(),
                })?;
            if let Some(r) = report {
                reports.push(r);
            }

            if bi == last {
                pairs.extend(decorr.per_pair.iter().map(|(&(i, j), &v)| PairRecord {
                    iteration,
                    i,
                    j,
                    frob_sq: v,
                }));
            }
            epoch_decorr += decorr.mean();
            epoch_batches += 1;
            iters.push(IterRecord {
                seed,
                iteration,
                epoch,
                ce,
                decorr_mean: decorr.mean(),
                infonce: mi_terms.iter().sum(),
                objective,
                dev_acc: None,
                ood_acc: None,
            });
            iteration += 1;
        }
        let dev_acc = evaluate(&model, &splits.dev)?;
        let ood_acc = evaluate(&model, &splits.ood)?;
        if let Some(rec) = iters.last_mut() {
            rec.dev_acc = Some(dev_acc);
            rec.ood_acc = Some(ood_acc);
        }
        epochs.push(EpochRecord {
            epoch,
            decorr_mean: epoch_decorr / epoch_batches.max(1) as f64,
            dev_acc,
            ood_acc,
        });
    }

    let (dev_acc, ood_acc) = epochs
        .last()
        .map(|e| (e.dev_acc, e.ood_acc))
        .unwrap_or_default();
    Ok(SeedRun {
        seed,
        iters,
        epochs,
        pairs,
        selection: selection_frequencies(&reports, cfg.kslots),
        dev_acc,
        ood_acc,
        model,
        weights: table,
        bank,
    })
}

/// Trains every seed (in parallel) on splits generated from the config.
pub fn train(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let splits = generate(&cfg.task_spec())?;
    Ok(train_on(cfg, &splits))
}

/// Trains every seed on the given splits. Failed seeds are recorded, not
/// propagated.
pub fn train_on(cfg: &RunConfig, splits: &Splits) -> RunReport {
    let outcomes: Vec<std::result::Result<SeedRun, SeedFailure>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            train_seed(cfg, splits, seed).map_err(|e| SeedFailure {
                seed,
                error: e.to_string(),
            })
        })
        .collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => runs.push(r),
            Err(f) => failures.push(f),
        }
    }
    RunReport {
        config: cfg.clone(),
        runs,
        failures,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    RffMultiplier,
    PurifyRatio,
}

impl SweepAxis {
    pub fn key(&self) -> &'static str {
        match self {
            SweepAxis::RffMultiplier => "rff_multiplier",
            SweepAxis::PurifyRatio => "purify_ratio",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "rff_multiplier" => Ok(SweepAxis::RffMultiplier),
            "purify_ratio" => Ok(SweepAxis::PurifyRatio),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub dev_acc: Option<f64>,
    pub ood_acc: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Seed-averaged OOD accuracy per swept value, in sweep order.
    pub fn mean_ood_by_value(&self) -> Vec<(f64, f64)> {
        let mut values: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !values.contains(&r.value) {
                values.push(r.value);
            }
        }
        values
            .into_iter()
            .map(|v| {
                let accs: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.value == v)
                    .filter_map(|r| r.ood_acc)
                    .collect();
                (v, summarize(&accs).mean)
            })
            .collect()
    }

    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "axis,value,seed,dev_acc,ood_acc,status")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let status = match &r.error {
                None => "ok".to_string(),
                Some(e) => format!("\"failed: {}\"", e.replace('"', "'")),
            };
            writeln!(
                out,
                "{},{},{},{},{},{}",
                self.axis.key(),
                r.value,
                r.seed,
                opt(r.dev_acc),
                opt(r.ood_acc),
                status
            )?;
        }
        Ok(())
    }
}

/// One full training per `(value, seed)`; per-run failures are recorded and
/// the sweep continues.
pub fn sweep(cfg: &RunConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let splits = generate(&cfg.task_spec())?;
    let mut rows = Vec::new();
    for &v in values {
        let raw = v.to_string();
        let arm = match cfg.with_overrides([(axis.key(), raw.as_str())]) {
            Ok(c) => c,
            Err(e) => {
                rows.extend(cfg.seeds.iter().map(|&seed| SweepRow {
                    value: v,
                    seed,
                    dev_acc: None,
                    ood_acc: None,
                    error: Some(e.to_string()),
                }));
                continue;
            }
        };
        let report = train_on(&arm, &splits);
        for &seed in &cfg.seeds {
            let row = if let Some(r) = report.runs.iter().find(|r| r.seed == seed) {
                SweepRow {
                    value: v,
                    seed,
                    dev_acc: Some(r.dev_acc),
                    ood_acc: Some(r.ood_acc),
                    error: None,
                }
            } else {
                let err = report
                    .failures
                    .iter()
                    .find(|f| f.seed == seed)
                    .map(|f| f.error.clone())
                    .unwrap_or_else(|| "missing run".into());
                SweepRow {
                    value: v,
                    seed,
                    dev_acc: None,
                    ood_acc: None,
                    error: Some(err),
                }
            };
            rows.push(row);
        }
    }
    Ok(SweepTable { axis, rows })
}

/// Reweighted run and frozen-weight control on identical data, banks and
/// seeds.
#[derive(Debug, Clone)]
pub struct DecorrStudy {
    pub reweighted: RunReport,
    pub control: RunReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecorrSummary {
    pub first_epoch: f64,
    pub final_epoch: f64,
    /// `final_epoch / first_epoch`
    pub ratio: f64,
}

fn curve_summary(curve: &[f64]) -> DecorrSummary {
    let first = curve.first().copied().unwrap_or(f64::NAN);
    let last = curve.last().copied().unwrap_or(f64::NAN);
    DecorrSummary {
        first_epoch: first,
        final_epoch: last,
        ratio: last / first,
    }
}

impl DecorrStudy {
    pub fn reweighted_summary(&self) -> DecorrSummary {
        curve_summary(&self.reweighted.epoch_decorr_curve())
    }

    pub fn control_summary(&self) -> DecorrSummary {
        curve_summary(&self.control.epoch_decorr_curve())
    }

    /// `arm,epoch,decorr_mean` rows with seed-averaged epoch means.
    pub fn write_curve_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "arm,epoch,decorr_mean")?;
        for (arm, rep) in [("reweighted", &self.reweighted), ("control", &self.control)] {
            for (e, v) in rep.epoch_decorr_curve().iter().enumerate() {
                writeln!(out, "{arm},{},{v}", e + 1)?;
            }
        }
        Ok(())
    }

    pub fn write_pairs_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        self.reweighted.write_pairs_csv("reweighted", out, true)?;
        self.control.write_pairs_csv("control", out, false)?;
        Ok(())
    }
}

pub fn decorr_study(cfg: &RunConfig) -> Result<DecorrStudy> {
    cfg.validate()?;
    let splits = generate(&cfg.task_spec())?;
    let on = RunConfig {
        use_decorrelation: true,
        ..cfg.clone()
    };
    let off = RunConfig {
        use_decorrelation: false,
        ..cfg.clone()
    };
    Ok(DecorrStudy {
        reweighted: train_on(&on, &splits),
        control: train_on(&off, &splits),
    })
}

/// Named ablation arms sharing data, banks and seeds.
pub fn ablation_configs(cfg: &RunConfig) -> Vec<(&'static str, RunConfig)> {
    let arm = |dec: bool, pur: bool| RunConfig {
        use_decorrelation: dec,
        use_purification: pur,
        ..cfg.clone()
    };
    vec![
        ("full", arm(true, true)),
        ("no_decorrelation", arm(false, true)),
        ("no_purification", arm(true, false)),
        ("erm", arm(false, false)),
    ]
}
