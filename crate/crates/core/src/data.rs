//! Synthetic classification tasks with one spurious slot.
//!
//! Token ids are laid out as `[bias tokens | signal tokens | noise tokens]`:
//! one bias token per class, `signal_tokens_per_class` signal tokens per
//! class, and the rest noise. Each sample carries its signal in the first
//! `signal_slots` slots, a bias token in the next slot, and noise everywhere
//! else.
//!
//! For a sample with label `y`:
//! * with probability `noise_flip` the signal slots show another class,
//!   otherwise class `y`;
//! * the bias slot shows class `y` with the split's alignment probability and
//!   another class otherwise.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub num_classes: usize,
    pub kslots: usize,
    pub signal_slots: usize,
    pub vocab: usize,
    pub signal_tokens_per_class: usize,
    pub align_train: f64,
    pub align_ood: f64,
    pub noise_flip: f64,
    /// Size of the in-distribution pool; a tenth of it becomes the dev split.
    pub train_pool: usize,
    pub ood_size: usize,
    pub seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            num_classes: 2,
            kslots: 8,
            signal_slots: 3,
            vocab: 64,
            signal_tokens_per_class: 8,
            align_train: 0.9,
            align_ood: 0.5,
            noise_flip: 0.1,
            train_pool: 2000,
            ood_size: 1000,
            seed: 0,
        }
    }
}

impl TaskSpec {
    pub fn bias_slot(&self) -> usize {
        self.signal_slots
    }

    pub fn dev_size(&self) -> usize {
        (self.train_pool as f64 * 0.1).round() as usize
    }

    pub fn train_size(&self) -> usize {
        self.train_pool - self.dev_size()
    }

    fn first_signal_token(&self) -> usize {
        self.num_classes
    }

    fn first_noise_token(&self) -> usize {
        self.num_classes * (1 + self.signal_tokens_per_class)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.signal_slots == 0 || self.signal_tokens_per_class == 0 {
            return bad("need at least one signal slot and one signal token per class".into());
        }
        if self.kslots < self.signal_slots + 1 {
            return bad(format!(
                "{} slots cannot hold {} signal slots plus a bias slot",
                self.kslots, self.signal_slots
            ));
        }
        let noise_slots = self.kslots - self.signal_slots - 1;
        let needed = self.first_noise_token() + usize::from(noise_slots > 0);
        if self.vocab < needed {
            return bad(format!(
                "vocab {} too small for the slot/class layout (needs {needed})",
                self.vocab
            ));
        }
        for (name, p) in [
            ("align_train", self.align_train),
            ("align_ood", self.align_ood),
            ("noise_flip", self.noise_flip),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if self.dev_size() == 0 || self.train_size() < 2 {
            return bad(format!("train_pool {} too small", self.train_pool));
        }
        if self.ood_size == 0 {
            return bad("ood_size must be positive".into());
        }
        Ok(())
    }

    /// Class a bias token stands for.
    pub fn bias_class(&self, token: usize) -> Option<usize> {
        (token < self.num_classes).then_some(token)
    }

    /// Class a signal token stands for.
    pub fn signal_class(&self, token: usize) -> Option<usize> {
        (self.first_signal_token()..self.first_noise_token())
            .contains(&token)
            .then(|| (token - self.first_signal_token()) / self.signal_tokens_per_class)
    }

    pub fn is_noise_token(&self, token: usize) -> bool {
        token >= self.first_noise_token() && token < self.vocab
    }

    fn other_class(&self, y: usize, rng: &mut ChaCha8Rng) -> usize {
        let r = rng.random_range(0..self.num_classes - 1);
        if r >= y {
            r + 1
        } else {
            r
        }
    }

    fn sample_row(&self, align: f64, rng: &mut ChaCha8Rng, tokens: &mut Vec<usize>) -> usize {
        let y = rng.random_range(0..self.num_classes);
        let signal = if rng.random::<f64>() < self.noise_flip {
            self.other_class(y, rng)
        } else {
            y
        };
        for _ in 0..self.signal_slots {
            let t = rng.random_range(0..self.signal_tokens_per_class);
            tokens.push(self.first_signal_token() + signal * self.signal_tokens_per_class + t);
        }
        let bias = if rng.random::<f64>() < align {
            y
        } else {
            self.other_class(y, rng)
        };
        tokens.push(bias);
        let noise_span = self.vocab - self.first_noise_token();
        for _ in (self.signal_slots + 1)..self.kslots {
            tokens.push(self.first_noise_token() + rng.random_range(0..noise_span));
        }
        y
    }
}

/// Immutable labelled token matrix, `kslots` ids per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kslots: usize,
    pub num_classes: usize,
    pub tokens: Vec<usize>,
    pub labels: Vec<usize>,
    pub sample_ids: Vec<usize>,
}

/// A mini-batch; `sample_ids` index the weight table.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub kslots: usize,
    pub token_ids: Vec<usize>,
    pub labels: Vec<usize>,
    pub sample_ids: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.token_ids[i * self.kslots..(i + 1) * self.kslots]
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.tokens[i * self.kslots..(i + 1) * self.kslots]
    }

    /// Batch of the rows at the given positions (not sample ids).
    pub fn batch(&self, positions: &[usize]) -> Batch {
        let mut token_ids = Vec::with_capacity(positions.len() * self.kslots);
        for &p in positions {
            token_ids.extend_from_slice(self.row(p));
        }
        Batch {
            kslots: self.kslots,
            token_ids,
            labels: positions.iter().map(|&p| self.labels[p]).collect(),
            sample_ids: positions.iter().map(|&p| self.sample_ids[p]).collect(),
        }
    }

    pub fn all(&self) -> Batch {
        self.batch(&(0..self.len()).collect::<Vec<_>>())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.kslots).map(|j| format!("slot{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|t| t.to_string()).collect();
            rec.push(self.labels[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Expected layout of an ingested CSV file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvSchema {
    pub kslots: usize,
    pub num_classes: usize,
    /// Token ids must be below this, when set.
    pub vocab: Option<usize>,
    /// Sample id assigned to the first data row.
    pub first_id: usize,
}

/// Reads `slot0,...,slot{k-1},label` rows.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let origin = path.display().to_string();
    let err = |line: u64, msg: String| Error::Parse {
        path: origin.clone(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(err(1, "empty file".into())),
        Some(h) => h?,
    };
    let mut want: Vec<String> = (0..schema.kslots).map(|j| format!("slot{j}")).collect();
    want.push("label".into());
    if header
        .iter()
        .map(str::trim)
        .ne(want.iter().map(String::as_str))
    {
        return Err(err(1, format!("expected header {}", want.join(","))));
    }
    let mut ds = Dataset {
        kslots: schema.kslots,
        num_classes: schema.num_classes,
        tokens: Vec::new(),
        labels: Vec::new(),
        sample_ids: Vec::new(),
    };
    for rec in records {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != schema.kslots + 1 {
            return Err(err(
                line,
                format!("expected {} fields, got {}", schema.kslots + 1, rec.len()),
            ));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: usize = cell.trim().parse().map_err(|_| {
                err(
                    line,
                    format!("field {j}: `{cell}` is not a nonnegative integer"),
                )
            })?;
            if j < schema.kslots {
                if let Some(vocab) = schema.vocab {
                    if v >= vocab {
                        return Err(err(line, format!("token {v} outside vocab {vocab}")));
                    }
                }
                ds.tokens.push(v);
            } else {
                if v >= schema.num_classes {
                    return Err(err(
                        line,
                        format!("label {v} out of range for {} classes", schema.num_classes),
                    ));
                }
                ds.labels.push(v);
            }
        }
        ds.sample_ids.push(schema.first_id + ds.sample_ids.len());
    }
    if ds.is_empty() {
        return Err(err(1, "no data rows".into()));
    }
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub dev: Dataset,
    pub ood: Dataset,
}

fn draw(spec: &TaskSpec, n: usize, align: f64, first_id: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let mut tokens = Vec::with_capacity(n * spec.kslots);
    let labels = (0..n)
        .map(|_| spec.sample_row(align, rng, &mut tokens))
        .collect();
    Dataset {
        kslots: spec.kslots,
        num_classes: spec.num_classes,
        tokens,
        labels,
        sample_ids: (first_id..first_id + n).collect(),
    }
}

/// Train, dev and OOD splits. Sample ids are contiguous and disjoint:
/// train from 0, then dev, then OOD.
pub fn generate(spec: &TaskSpec) -> Result<Splits> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n_train, n_dev) = (spec.train_size(), spec.dev_size());
    let train = draw(spec, n_train, spec.align_train, 0, &mut rng);
    let dev = draw(spec, n_dev, spec.align_train, n_train, &mut rng);
    let ood = draw(
        spec,
        spec.ood_size,
        spec.align_ood,
        n_train + n_dev,
        &mut rng,
    );
    Ok(Splits { train, dev, ood })
}

/// Accuracy of predicting the class named by the bias slot.
pub fn bias_only_accuracy(spec: &TaskSpec, ds: &Dataset) -> f64 {
    let slot = spec.bias_slot();
    let hits = (0..ds.len())
        .filter(|&i| spec.bias_class(ds.row(i)[slot]) == Some(ds.labels[i]))
        .count();
    hits as f64 / ds.len() as f64
}

/// Accuracy of predicting the class named by the first signal slot.
pub fn signal_only_accuracy(spec: &TaskSpec, ds: &Dataset) -> f64 {
    let hits = (0..ds.len())
        .filter(|&i| spec.signal_class(ds.row(i)[0]) == Some(ds.labels[i]))
        .count();
    hits as f64 / ds.len() as f64
}
