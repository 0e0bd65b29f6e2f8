//! A small matrix-valued reverse-mode tape.
//!
//! Only the handful of operations the classifier needs are supported: embedding
//! lookup, slot pooling and concatenation, affine maps, `tanh`, weighted
//! softmax cross-entropy, an InfoNCE estimator and scalar arithmetic. Every
//! value on the tape is a 2-D `f64` array; scalars are `1 x 1`.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Named trainable arrays with immutable shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    params: BTreeMap<String, Array2<f64>>,
    seed: u64,
}

impl ParamSet {
    pub fn new(seed: u64) -> Self {
        Self {
            params: BTreeMap::new(),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn insert(&mut self, name: &str, value: Array2<f64>) {
        self.params.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.params.get(name)
    }

    /// Mutable access for perturbation (finite differences); shapes must not
    /// change.
    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.params.get_mut(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|a| a.len()).sum()
    }

    /// Uniform `(-s, s)` with `s = sqrt(6 / (rows + cols))`.
    pub fn init_glorot(&mut self, name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng) {
        let s = (6.0 / (rows + cols) as f64).sqrt();
        let a = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-s..s));
        self.insert(name, a);
    }

    pub fn init_normal(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        std: f64,
        rng: &mut ChaCha8Rng,
    ) {
        let dist = Normal::new(0.0, std).expect("valid std");
        let a = Array2::from_shape_fn((rows, cols), |_| dist.sample(rng));
        self.insert(name, a);
    }

    pub fn init_zeros(&mut self, name: &str, rows: usize, cols: usize) {
        self.insert(name, Array2::zeros((rows, cols)));
    }

    /// Plain gradient descent, `p <- p - lr * g`. Parameters without a
    /// gradient entry are left alone. Nothing is modified if any gradient is
    /// non-finite or mis-shaped.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        for (name, p) in &self.params {
            if let Some(g) = grads.params.get(name) {
                if g.dim() != p.dim() {
                    return Err(Error::DimensionMismatch {
                        what: "gradient shape",
                        expected: p.len(),
                        got: g.len(),
                    });
                }
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("gradient"));
                }
            }
        }
        if lr == 0.0 {
            return Ok(());
        }
        for (name, p) in self.params.iter_mut() {
            if let Some(g) = grads.params.get(name) {
                p.scaled_add(-lr, g);
            }
        }
        Ok(())
    }

    /// Text checkpoint: a header, the seed, then per parameter a
    /// `param <name> <rows> <cols>` line followed by its row-major values.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "depro-params 1").unwrap();
        writeln!(s, "seed {}", self.seed).unwrap();
        for (name, a) in &self.params {
            writeln!(s, "param {name} {} {}", a.nrows(), a.ncols()).unwrap();
            let vals: Vec<String> = a.iter().map(|v| v.to_string()).collect();
            writeln!(s, "{}", vals.join(" ")).unwrap();
        }
        s
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::Parse {
            path: origin.to_string(),
            line: line as u64,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, "depro-params 1")) => {}
            _ => return Err(err(1, "missing depro-params header")),
        }
        let (ln, seed_line) = lines.next().ok_or_else(|| err(2, "missing seed"))?;
        let seed = seed_line
            .strip_prefix("seed ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(ln, "bad seed line"))?;
        let mut out = ParamSet::new(seed);
        while let Some((ln, head)) = lines.next() {
            if head.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = head.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "param" {
                return Err(err(ln, "expected `param <name> <rows> <cols>`"));
            }
            let rows: usize = parts[2].parse().map_err(|_| err(ln, "bad row count"))?;
            let cols: usize = parts[3].parse().map_err(|_| err(ln, "bad column count"))?;
            let (vln, body) = lines.next().ok_or_else(|| err(ln + 1, "missing values"))?;
            let vals: Vec<f64> = body
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err(vln, "bad value"))?;
            if vals.len() != rows * cols {
                return Err(err(vln, "value count does not match shape"));
            }
            let a =
                Array2::from_shape_vec((rows, cols), vals).map_err(|_| err(vln, "bad shape"))?;
            out.insert(parts[1], a);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?, &path.display().to_string())
    }
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(String),
    Embed {
        table: Var,
        ids: Vec<usize>,
    },
    MeanPool {
        x: Var,
        slots: usize,
        mask: Vec<bool>,
    },
    ConcatSlots {
        x: Var,
        slots: usize,
        mask: Vec<bool>,
    },
    Gather {
        x: Var,
        rows: Vec<usize>,
    },
    Affine {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Tanh {
        x: Var,
    },
    WeightedCe {
        logits: Var,
        labels: Vec<usize>,
        weights: Vec<f64>,
        probs: Array2<f64>,
    },
    InfoNce {
        p: Var,
        z: Var,
        attn: Array2<f64>,
    },
    SumSquares {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        c: f64,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Records forward values so that gradients of any scalar node can be
/// computed once.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    released: HashSet<usize>,
}

/// Gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    nodes: Vec<Option<Array2<f64>>>,
    /// Gradient for every parameter recorded on the tape, zero when unused.
    pub params: BTreeMap<String, Array2<f64>>,
}

impl Gradients {
    /// Gradient with respect to a recorded node, `None` if no path reaches
    /// the root.
    pub fn wrt(&self, v: Var) -> Option<&Array2<f64>> {
        self.nodes.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn param(&self, name: &str) -> Option<&Array2<f64>> {
        self.params.get(name)
    }
}

fn scalar(v: f64) -> Array2<f64> {
    Array2::from_elem((1, 1), v)
}

fn log_sum_exp(row: ndarray::ArrayView1<'_, f64>) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Mean over rows of `ln(exp(s_ii) / ((1/n) sum_b exp(s_ib)))`, together with
/// the row-wise softmax of the scores.
pub fn info_nce_from_scores(scores: ArrayView2<'_, f64>) -> (f64, Array2<f64>) {
    let n = scores.nrows();
    let mut attn = Array2::zeros((n, n));
    let mut total = 0.0;
    for (i, row) in scores.rows().into_iter().enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|s| (s - max).exp()).sum();
        // Written so that constant rows give exactly zero.
        total += (row[i] - max) - (sum / n as f64).ln();
        for (b, &s) in row.iter().enumerate() {
            attn[[i, b]] = (s - max).exp() / sum;
        }
    }
    (total / n as f64, attn)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input (no gradient is propagated past it, but its own
    /// gradient is still reported).
    pub fn input(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, params: &ParamSet, name: &str) -> Result<Var> {
        let value = params
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name}")))?
            .clone();
        Ok(self.push(value, Op::Param(name.to_string())))
    }

    /// Row lookup: output row `r` is `table[ids[r]]`.
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let vocab = t.nrows();
        let mut out = Array2::zeros((ids.len(), t.ncols()));
        for (r, &id) in ids.iter().enumerate() {
            if id >= vocab {
                return Err(Error::IndexOutOfRange {
                    index: id,
                    len: vocab,
                });
            }
            out.row_mut(r).assign(&t.row(id));
        }
        Ok(self.push(
            out,
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    fn check_slots(&self, x: Var, slots: usize, mask: &[bool]) -> Result<usize> {
        let rows = self.value(x).nrows();
        if slots == 0 || !rows.is_multiple_of(slots) {
            return Err(Error::InvalidArgument(format!(
                "{rows} rows do not split into groups of {slots}"
            )));
        }
        if mask.len() != slots {
            return Err(Error::DimensionMismatch {
                what: "slot mask",
                expected: slots,
                got: mask.len(),
            });
        }
        Ok(rows / slots)
    }

    /// Averages each group of `slots` consecutive rows over the slots whose
    /// mask entry is set.
    pub fn mean_pool(&mut self, x: Var, slots: usize, mask: &[bool]) -> Result<Var> {
        let n = self.check_slots(x, slots, mask)?;
        let kept = mask.iter().filter(|&&m| m).count();
        let xv = self.value(x);
        let mut out = Array2::zeros((n, xv.ncols()));
        if kept > 0 {
            for i in 0..n {
                for (j, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
                    let mut row = out.row_mut(i);
                    row += &xv.row(i * slots + j);
                }
            }
            out /= kept as f64;
        }
        Ok(self.push(
            out,
            Op::MeanPool {
                x,
                slots,
                mask: mask.to_vec(),
            },
        ))
    }

    /// Flattens each group of `slots` rows into one row of width
    /// `slots * d`; masked-out slots are zero.
    pub fn concat_slots(&mut self, x: Var, slots: usize, mask: &[bool]) -> Result<Var> {
        let n = self.check_slots(x, slots, mask)?;
        let xv = self.value(x);
        let d = xv.ncols();
        let mut out = Array2::zeros((n, slots * d));
        for i in 0..n {
            for (j, _) in mask.iter().enumerate().filter(|(_, keep)| **keep) {
                out.row_mut(i)
                    .slice_mut(ndarray::s![j * d..(j + 1) * d])
                    .assign(&xv.row(i * slots + j));
            }
        }
        Ok(self.push(
            out,
            Op::ConcatSlots {
                x,
                slots,
                mask: mask.to_vec(),
            },
        ))
    }

    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let len = xv.nrows();
        let mut out = Array2::zeros((rows.len(), xv.ncols()));
        for (r, &src) in rows.iter().enumerate() {
            if src >= len {
                return Err(Error::IndexOutOfRange { index: src, len });
            }
            out.row_mut(r).assign(&xv.row(src));
        }
        Ok(self.push(
            out,
            Op::Gather {
                x,
                rows: rows.to_vec(),
            },
        ))
    }

    /// `x w + b` with `b` broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.ncols() != wv.nrows() {
            return Err(Error::DimensionMismatch {
                what: "affine inner dimension",
                expected: wv.nrows(),
                got: xv.ncols(),
            });
        }
        let mut out = xv.dot(wv);
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.dim() != (1, wv.ncols()) {
                return Err(Error::DimensionMismatch {
                    what: "bias width",
                    expected: wv.ncols(),
                    got: bv.len(),
                });
            }
            out += bv;
        }
        Ok(self.push(out, Op::Affine { x, w, b }))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(f64::tanh);
        self.push(out, Op::Tanh { x })
    }

    /// `(1/n) sum_i w_i * CE(softmax(logits_i), labels_i)`.
    pub fn weighted_ce(&mut self, logits: Var, labels: &[usize], weights: &[f64]) -> Result<Var> {
        let lv = self.value(logits);
        let (n, c) = lv.dim();
        if labels.len() != n || weights.len() != n {
            return Err(Error::DimensionMismatch {
                what: "cross-entropy batch",
                expected: n,
                got: labels.len().min(weights.len()),
            });
        }
        if n == 0 {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        let mut probs = Array2::zeros((n, c));
        let mut total = 0.0;
        for (i, row) in lv.rows().into_iter().enumerate() {
            if labels[i] >= c {
                return Err(Error::IndexOutOfRange {
                    index: labels[i],
                    len: c,
                });
            }
            let lse = log_sum_exp(row);
            total += weights[i] * (lse - row[labels[i]]);
            for (k, &z) in row.iter().enumerate() {
                probs[[i, k]] = (z - lse).exp();
            }
        }
        Ok(self.push(
            scalar(total / n as f64),
            Op::WeightedCe {
                logits,
                labels: labels.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
        ))
    }

    /// InfoNCE estimate with scores `s(i, b) = <p_i, z_b>` and in-batch
    /// negatives.
    pub fn info_nce(&mut self, p: Var, z: Var) -> Result<Var> {
        let (pv, zv) = (self.value(p), self.value(z));
        if pv.dim() != zv.dim() {
            return Err(Error::DimensionMismatch {
                what: "infonce operands",
                expected: zv.len(),
                got: pv.len(),
            });
        }
        if pv.nrows() == 0 {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        let scores = pv.dot(&zv.t());
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("infonce scores"));
        }
        let (est, attn) = info_nce_from_scores(scores.view());
        Ok(self.push(scalar(est), Op::InfoNce { p, z, attn }))
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let v = self.value(x).iter().map(|a| a * a).sum();
        self.push(scalar(v), Op::SumSquares { x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.dim() != bv.dim() {
            return Err(Error::DimensionMismatch {
                what: "add operands",
                expected: av.len(),
                got: bv.len(),
            });
        }
        let out = av + bv;
        Ok(self.push(out, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.dim() != bv.dim() {
            return Err(Error::DimensionMismatch {
                what: "sub operands",
                expected: av.len(),
                got: bv.len(),
            });
        }
        let out = av - bv;
        Ok(self.push(out, Op::Sub { a, b }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x) * c;
        self.push(out, Op::Scale { x, c })
    }

    /// Reverse pass from a scalar root. Each root may be differentiated
    /// once; the tape stays usable for building further nodes.
    pub fn backward(&mut self, root: Var) -> Result<Gradients> {
        if root.0 >= self.nodes.len() {
            return Err(Error::IndexOutOfRange {
                index: root.0,
                len: self.nodes.len(),
            });
        }
        if self.value(root).dim() != (1, 1) {
            return Err(Error::InvalidArgument(
                "backward root must be a scalar".into(),
            ));
        }
        if !self.released.insert(root.0) {
            return Err(Error::DoubleBackward);
        }

        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(scalar(1.0));

        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input | Op::Param(_) => {}
                Op::Embed { table, ids } => {
                    let mut gt = Array2::zeros(self.value(*table).dim());
                    for (r, &id) in ids.iter().enumerate() {
                        let mut row = gt.row_mut(id);
                        row += &g.row(r);
                    }
                    acc(&mut grads, *table, gt);
                }
                Op::MeanPool { x, slots, mask } => {
                    let kept = mask.iter().filter(|&&m| m).count();
                    let mut gx = Array2::zeros(self.value(*x).dim());
                    if kept > 0 {
                        for i in 0..g.nrows() {
                            for j in (0..*slots).filter(|&j| mask[j]) {
                                gx.row_mut(i * slots + j).assign(&(&g.row(i) / kept as f64));
                            }
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::ConcatSlots { x, slots, mask } => {
                    let d = self.value(*x).ncols();
                    let mut gx = Array2::zeros(self.value(*x).dim());
                    for i in 0..g.nrows() {
                        for j in (0..*slots).filter(|&j| mask[j]) {
                            gx.row_mut(i * slots + j)
                                .assign(&g.row(i).slice(ndarray::s![j * d..(j + 1) * d]));
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Gather { x, rows } => {
                    let mut gx = Array2::zeros(self.value(*x).dim());
                    for (r, &src) in rows.iter().enumerate() {
                        let mut row = gx.row_mut(src);
                        row += &g.row(r);
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Affine { x, w, b } => {
                    let gx = g.dot(&self.value(*w).t());
                    let gw = self.value(*x).t().dot(&g);
                    if let Some(b) = b {
                        acc(&mut grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *w, gw);
                }
                Op::Tanh { x } => {
                    let gx = &g * &node.value.mapv(|y| 1.0 - y * y);
                    acc(&mut grads, *x, gx);
                }
                Op::WeightedCe {
                    logits,
                    labels,
                    weights,
                    probs,
                } => {
                    let upstream = g[[0, 0]];
                    let n = labels.len() as f64;
                    let mut gl = probs.clone();
                    for (i, mut row) in gl.rows_mut().into_iter().enumerate() {
                        row[labels[i]] -= 1.0;
                        row *= upstream * weights[i] / n;
                    }
                    acc(&mut grads, *logits, gl);
                }
                Op::InfoNce { p, z, attn } => {
                    // d est / d s_ib = (delta_ib - attn_ib) / n
                    let upstream = g[[0, 0]];
                    let n = attn.nrows();
                    let mut gs = -attn.clone();
                    for i in 0..n {
                        gs[[i, i]] += 1.0;
                    }
                    gs *= upstream / n as f64;
                    let gp = gs.dot(self.value(*z));
                    let gz = gs.t().dot(self.value(*p));
                    acc(&mut grads, *p, gp);
                    acc(&mut grads, *z, gz);
                }
                Op::SumSquares { x } => {
                    let gx = self.value(*x) * (2.0 * g[[0, 0]]);
                    acc(&mut grads, *x, gx);
                }
                Op::Add { a, b } => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::Sub { a, b } => {
                    acc(&mut grads, *b, -&g);
                    acc(&mut grads, *a, g.clone());
                }
                Op::Scale { x, c } => {
                    acc(&mut grads, *x, &g * *c);
                }
            }
            grads[idx] = Some(g);
        }

        let mut params = BTreeMap::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Param(name) = &node.op {
                let g = grads[idx]
                    .clone()
                    .unwrap_or_else(|| Array2::zeros(node.value.dim()));
                match params.get_mut(name) {
                    Some(existing) => *existing += &g,
                    None => {
                        params.insert(name.clone(), g);
                    }
                }
            }
        }
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }
}

// ---------------------------------------------------------------------------
// Finite-difference self-check
// ---------------------------------------------------------------------------

/// Worst-case agreement between analytic and central-difference gradients.
#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Per parameter: `|g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|)`
    /// in the Euclidean norm over the whole array.
    pub rel_errors: BTreeMap<String, f64>,
}

impl GradCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.rel_errors.values().copied().fold(0.0, f64::max)
    }
}

/// Relative error between two gradient arrays, norm-wise. Two all-zero
/// arrays agree exactly.
pub fn relative_error(analytic: ArrayView2<'_, f64>, numeric: ArrayView2<'_, f64>) -> f64 {
    let diff = (&analytic - &numeric)
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nn);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

/// Central differences of `loss` around `params`, compared with `grads`.
pub fn check_gradients<F>(
    params: &ParamSet,
    grads: &Gradients,
    h: f64,
    mut loss: F,
) -> Result<GradCheck>
where
    F: FnMut(&ParamSet) -> Result<f64>,
{
    let mut probe = params.clone();
    let mut rel_errors = BTreeMap::new();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let shape = params.get(&name).expect("listed").dim();
        let mut numeric = Array2::zeros(shape);
        for r in 0..shape.0 {
            for c in 0..shape.1 {
                let orig = probe.get(&name).expect("listed")[[r, c]];
                probe.get_mut(&name).expect("listed")[[r, c]] = orig + h;
                let up = loss(&probe)?;
                probe.get_mut(&name).expect("listed")[[r, c]] = orig - h;
                let down = loss(&probe)?;
                probe.get_mut(&name).expect("listed")[[r, c]] = orig;
                numeric[[r, c]] = (up - down) / (2.0 * h);
            }
        }
        let zero = Array2::zeros(shape);
        let analytic = grads.param(&name).unwrap_or(&zero);
        rel_errors.insert(name, relative_error(analytic.view(), numeric.view()));
    }
    Ok(GradCheck { rel_errors })
}

/// Deterministic RNG used for parameter initialization.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
