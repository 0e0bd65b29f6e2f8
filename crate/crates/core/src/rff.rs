//! Random Fourier feature banks.
//!
//! Every scalar coordinate of the representation is lifted independently with
//! `k` cosine features `sqrt(2) * cos(omega * x + phi)`, `omega ~ N(0, 1)` and
//! `phi ~ U[0, 2pi)`. Output columns are grouped by source coordinate: column
//! `d * k + j` holds feature `j` of coordinate `d`.

use std::f64::consts::{SQRT_2, TAU};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to the per-column standard deviation in [`standardize`].
pub const STD_FLOOR: f64 = 1e-6;

/// One member of the cosine function space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RffFunction {
    pub omega: f64,
    pub phi: f64,
}

impl RffFunction {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        SQRT_2 * (self.omega * x + self.phi).cos()
    }
}

/// An immutable set of `input_dim * multiplier` cosine features.
#[derive(Debug, Clone, PartialEq)]
pub struct RffBank {
    per_dim: Vec<Vec<RffFunction>>,
    input_dim: usize,
    multiplier: usize,
    seed: u64,
}

/// Flat on-disk form of a bank.
#[derive(Debug, Serialize, Deserialize)]
struct BankRecord {
    seed: u64,
    input_dim: usize,
    multiplier: usize,
    omega: Vec<f64>,
    phi: Vec<f64>,
}

impl RffBank {
    /// Draws a bank with `multiplier` functions per input coordinate.
    pub fn sample(input_dim: usize, multiplier: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArgument("rff input_dim must be >= 1".into()));
        }
        if multiplier == 0 {
            return Err(Error::InvalidArgument("rff multiplier must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let per_dim = (0..input_dim)
            .map(|_| {
                (0..multiplier)
                    .map(|_| {
                        let omega: f64 = rng.sample(StandardNormal);
                        let mut phi = rng.random::<f64>() * TAU;
                        if phi >= TAU {
                            phi = 0.0;
                        }
                        RffFunction { omega, phi }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            per_dim,
            input_dim,
            multiplier,
            seed,
        })
    }

    /// Builds a bank from explicit functions, one inner list per coordinate.
    pub fn from_functions(per_dim: Vec<Vec<RffFunction>>, seed: u64) -> Result<Self> {
        let input_dim = per_dim.len();
        if input_dim == 0 {
            return Err(Error::InvalidArgument(
                "rff bank needs at least one coordinate".into(),
            ));
        }
        let multiplier = per_dim[0].len();
        if multiplier == 0 {
            return Err(Error::InvalidArgument("rff multiplier must be >= 1".into()));
        }
        for (d, fs) in per_dim.iter().enumerate() {
            if fs.len() != multiplier {
                return Err(Error::DimensionMismatch {
                    what: "rff functions per coordinate",
                    expected: multiplier,
                    got: fs.len(),
                });
            }
            for f in fs {
                if !f.omega.is_finite() || !(0.0..TAU).contains(&f.phi) {
                    return Err(Error::InvalidArgument(format!(
                        "bad rff function {f:?} for coordinate {d}"
                    )));
                }
            }
        }
        Ok(Self {
            per_dim,
            input_dim,
            multiplier,
            seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn multiplier(&self) -> usize {
        self.multiplier
    }

    pub fn output_dim(&self) -> usize {
        self.input_dim * self.multiplier
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn functions(&self, dim: usize) -> &[RffFunction] {
        &self.per_dim[dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &RffFunction> {
        self.per_dim.iter().flatten()
    }

    /// Lifts an `(n, input_dim)` matrix to `(n, input_dim * multiplier)`.
    pub fn apply(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let (n, m) = features.dim();
        if m != self.input_dim {
            return Err(Error::DimensionMismatch {
                what: "rff input columns",
                expected: self.input_dim,
                got: m,
            });
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("rff input"));
        }
        let k = self.multiplier;
        let mut out = Array2::zeros((n, m * k));
        for (row_in, mut row_out) in features.rows().into_iter().zip(out.rows_mut()) {
            for (d, fs) in self.per_dim.iter().enumerate() {
                let x = row_in[d];
                for (j, f) in fs.iter().enumerate() {
                    row_out[d * k + j] = f.eval(x);
                }
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let rec = BankRecord {
            seed: self.seed,
            input_dim: self.input_dim,
            multiplier: self.multiplier,
            omega: self.iter().map(|f| f.omega).collect(),
            phi: self.iter().map(|f| f.phi).collect(),
        };
        std::fs::write(path, serde_json::to_string(&rec)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let rec: BankRecord = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let total = rec.input_dim * rec.multiplier;
        if rec.omega.len() != total || rec.phi.len() != total {
            return Err(Error::DimensionMismatch {
                what: "rff bank record length",
                expected: total,
                got: rec.omega.len().min(rec.phi.len()),
            });
        }
        if rec.multiplier == 0 {
            return Err(Error::InvalidArgument("rff multiplier must be >= 1".into()));
        }
        let per_dim = rec
            .omega
            .chunks(rec.multiplier)
            .zip(rec.phi.chunks(rec.multiplier))
            .map(|(os, ps)| {
                os.iter()
                    .zip(ps)
                    .map(|(&omega, &phi)| RffFunction { omega, phi })
                    .collect()
            })
            .collect();
        Self::from_functions(per_dim, rec.seed)
    }
}

/// Z-scores each column with the batch mean and (population) standard
/// deviation, flooring the deviation at [`STD_FLOOR`].
pub fn standardize(features: ArrayView2<'_, f64>) -> Array2<f64> {
    let (n, m) = features.dim();
    let mut out = features.to_owned();
    if n == 0 {
        return out;
    }
    for d in 0..m {
        let col = features.column(d);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt().max(STD_FLOOR);
        out.column_mut(d).mapv_inplace(|x| (x - mean) / std);
    }
    out
}
