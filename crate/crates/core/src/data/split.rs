use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitKind {
    /// Seeded permutation cut into contiguous train/val/test blocks.
    Random { train: f64, val: f64, test: f64 },
    /// The `test_out` fraction with the largest targets is held out; the rest
    /// is split randomly. Fractions are of the full dataset.
    TargetThreshold {
        train: f64,
        val: f64,
        test_in: f64,
        test_out: f64,
    },
}

impl SplitKind {
    pub fn standard() -> Self {
        SplitKind::Random {
            train: 0.90,
            val: 0.05,
            test: 0.05,
        }
    }

    pub fn extrapolation() -> Self {
        SplitKind::TargetThreshold {
            train: 0.50,
            val: 0.10,
            test_in: 0.15,
            test_out: 0.25,
        }
    }

    fn fractions(&self) -> Vec<f64> {
        match *self {
            SplitKind::Random { train, val, test } => vec![train, val, test],
            SplitKind::TargetThreshold {
                train,
                val,
                test_in,
                test_out,
            } => vec![train, val, test_in, test_out],
        }
    }
}

impl Default for SplitKind {
    fn default() -> Self {
        Self::standard()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(flatten)]
    pub kind: SplitKind,
    #[serde(default)]
    pub seed: u64,
}

/// Index sets of one split. For a random split `test_out` is empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub test_out: Vec<usize>,
    pub threshold: bool,
}

impl Split {
    /// Evaluation subsets with their report names.
    pub fn named(&self) -> Vec<(&'static str, &[usize])> {
        if self.threshold {
            vec![
                ("train", &self.train),
                ("val", &self.val),
                ("test_in", &self.test),
                ("test_out", &self.test_out),
            ]
        } else {
            vec![
                ("train", &self.train),
                ("val", &self.val),
                ("test", &self.test),
            ]
        }
    }
}

fn count(frac: f64, n: usize) -> usize {
    (frac * n as f64).round() as usize
}

pub fn split<T: Scalar>(y: &[T], spec: &SplitSpec) -> Result<Split> {
    let n = y.len();
    let fr = spec.kind.fractions();
    if fr.iter().any(|&f| !(f > 0.0 && f < 1.0)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must be in (0,1) and sum to 1, got {fr:?}"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("cannot split non-finite targets".into()));
    }
    let mut rng = seed::rng(spec.seed);
    let out = match spec.kind {
        SplitKind::Random { train, val, .. } => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let a = count(train, n);
            let b = (a + count(val, n)).min(n);
            Split {
                train: idx[..a].to_vec(),
                val: idx[a..b].to_vec(),
                test: idx[b..].to_vec(),
                test_out: Vec::new(),
                threshold: false,
            }
        }
        SplitKind::TargetThreshold {
            train,
            val,
            test_out,
            ..
        } => {
            let n_out = count(test_out, n);
            let mut by_target: Vec<usize> = (0..n).collect();
            // Descending target, index as tie-break.
            by_target.sort_by(|&a, &b| y[b].partial_cmp(&y[a]).expect("finite").then(a.cmp(&b)));
            let out_idx = by_target[..n_out.min(n)].to_vec();
            let mut rest = by_target[n_out.min(n)..].to_vec();
            rest.sort_unstable();
            rest.shuffle(&mut rng);
            let a = count(train, n).min(rest.len());
            let b = (a + count(val, n)).min(rest.len());
            Split {
                train: rest[..a].to_vec(),
                val: rest[a..b].to_vec(),
                test: rest[b..].to_vec(),
                test_out: out_idx,
                threshold: true,
            }
        }
    };
    for (name, s) in out.named() {
        if s.is_empty() {
            return Err(Error::Data(format!(
                "split leaves the {name} subset empty (n = {n})"
            )));
        }
    }
    Ok(out)
}
