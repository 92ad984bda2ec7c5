//! Twin-network training and anchor-ensemble inference.
//!
//! The network sees the concatenation `[x_a | x_b]` and is trained on
//! `y_a − y_b`. A query `x` is predicted from each anchor `j` by the
//! symmetrized estimate
//!
//! ```text
//! e_j = ½ F(x, x_j) − ½ F(x_j, x) + y_j
//! ```
//!
//! and the prediction is the mean of the `e_j`.

use rand::seq::index;

use crate::data::{Dataset, Normalizer};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{regression_layers, Network};
use crate::pairing::PairStream;
use crate::scalar::Scalar;
use crate::seed::{self, stream};
use crate::stats;
use crate::train::{self, Batch, BatchSource, History, TrainConfig};

/// A learned or hand-written difference function `F(a, b)`.
pub trait PairFunction<T: Scalar> {
    /// Feature dimension of one side of the pair.
    fn side_dim(&self) -> usize;

    /// Evaluates `count` pairs laid out as rows `[a | b]` of length `2·side_dim`.
    fn eval_pairs(&self, pairs: &[T], count: usize) -> Result<Vec<T>>;
}

impl<T: Scalar> PairFunction<T> for Network<T> {
    fn side_dim(&self) -> usize {
        self.input_dim() / 2
    }

    fn eval_pairs(&self, pairs: &[T], count: usize) -> Result<Vec<T>> {
        self.predict_rows(pairs, count)
    }
}

/// Closure-backed difference function, mostly for oracles and tests.
pub struct FnPair<F> {
    dim: usize,
    f: F,
}

impl<F> FnPair<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<T: Scalar, F: Fn(&[T], &[T]) -> T> PairFunction<T> for FnPair<F> {
    fn side_dim(&self) -> usize {
        self.dim
    }

    fn eval_pairs(&self, pairs: &[T], count: usize) -> Result<Vec<T>> {
        let w = 2 * self.dim;
        if pairs.len() != count * w {
            return Err(Error::Shape {
                context: "pair rows",
                expected: count * w,
                actual: pairs.len(),
            });
        }
        Ok(pairs
            .chunks_exact(w)
            .map(|r| (self.f)(&r[..self.dim], &r[self.dim..]))
            .collect())
    }
}

/// Training points used as anchors at inference time.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchors<T> {
    pub x: Matrix<T>,
    pub y: Vec<T>,
}

impl<T: Scalar> Anchors<T> {
    pub fn new(x: Matrix<T>, y: Vec<T>) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::Contract("anchor set is empty".into()));
        }
        if y.len() != x.rows() {
            return Err(Error::Shape {
                context: "anchor targets",
                expected: x.rows(),
                actual: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite anchor target".into()));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Anchor-wise view of one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBundle<T> {
    /// `e_j = ½F(x,x_j) − ½F(x_j,x) + y_j`.
    pub estimates: Vec<T>,
    /// `r_j = F(x,x_j) + F(x_j,x)`, zero for an antisymmetric `F`.
    pub residuals: Vec<T>,
    pub mean: T,
    /// Population standard deviation of `estimates`.
    pub std: T,
}

impl<T: Scalar> PredictionBundle<T> {
    fn from_parts(estimates: Vec<T>, residuals: Vec<T>) -> Self {
        let mean = stats::mean(&estimates);
        let std = stats::population_std(&estimates);
        Self {
            estimates,
            residuals,
            mean,
            std,
        }
    }

    /// Population standard deviation of the antisymmetry residuals.
    pub fn residual_std(&self) -> T {
        stats::population_std(&self.residuals)
    }
}

/// `F(x, x_j)` and `F(x_j, x)` for every anchor, from a single batched call.
pub(crate) fn anchor_outputs<T: Scalar, F: PairFunction<T> + ?Sized>(
    f: &F,
    anchors: &Anchors<T>,
    x: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    let d = f.side_dim();
    if x.len() != d {
        return Err(Error::Shape {
            context: "query features",
            expected: d,
            actual: x.len(),
        });
    }
    if anchors.x.cols() != d {
        return Err(Error::Shape {
            context: "anchor features",
            expected: d,
            actual: anchors.x.cols(),
        });
    }
    let n = anchors.len();
    let mut rows = Vec::with_capacity(2 * n * 2 * d);
    for a in anchors.x.iter_rows() {
        rows.extend_from_slice(x);
        rows.extend_from_slice(a);
    }
    for a in anchors.x.iter_rows() {
        rows.extend_from_slice(a);
        rows.extend_from_slice(x);
    }
    let mut out = f.eval_pairs(&rows, 2 * n)?;
    let backward = out.split_off(n);
    Ok((out, backward))
}

/// Anchor-averaged prediction of `x` under the difference function `f`.
pub fn predict_with<T: Scalar, F: PairFunction<T> + ?Sized>(
    f: &F,
    anchors: &Anchors<T>,
    x: &[T],
) -> Result<PredictionBundle<T>> {
    let (fwd, bwd) = anchor_outputs(f, anchors, x)?;
    let half = T::half();
    let estimates = fwd
        .iter()
        .zip(&bwd)
        .zip(&anchors.y)
        .map(|((&a, &b), &y)| half * a - half * b + y)
        .collect();
    let residuals = fwd.iter().zip(&bwd).map(|(&a, &b)| a + b).collect();
    Ok(PredictionBundle::from_parts(estimates, residuals))
}

pub fn predict_batch_with<T: Scalar, F: PairFunction<T> + ?Sized>(
    f: &F,
    anchors: &Anchors<T>,
    queries: &Matrix<T>,
) -> Result<Vec<PredictionBundle<T>>> {
    queries
        .iter_rows()
        .map(|q| predict_with(f, anchors, q))
        .collect()
}

/// Result of [`error_suppression_probe_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuppressionProbe<T> {
    /// Spread of the one-sided single-anchor errors `F(x,x_j) + y_j − y`,
    /// pooled over all queries and anchors.
    pub single_anchor_std: T,
    /// RMSE of the anchor-averaged predictions.
    pub averaged_rmse: T,
    /// `single_anchor_std / averaged_rmse`; `None` when the averaged error is exactly 0.
    pub ratio: Option<T>,
}

/// Measures how much averaging over anchors shrinks the error relative to a
/// single one-sided anchor estimate. With independent per-evaluation noise the
/// ratio approaches `√(2n)`.
pub fn error_suppression_probe_with<T: Scalar, F: PairFunction<T> + ?Sized>(
    f: &F,
    anchors: &Anchors<T>,
    queries: &Matrix<T>,
    truth: &[T],
) -> Result<SuppressionProbe<T>> {
    if anchors.len() < 2 {
        return Err(Error::Contract(
            "suppression probe needs at least two anchors".into(),
        ));
    }
    if truth.len() != queries.rows() || truth.is_empty() {
        return Err(Error::Shape {
            context: "probe targets",
            expected: queries.rows(),
            actual: truth.len(),
        });
    }
    let half = T::half();
    let mut single = Vec::with_capacity(queries.rows() * anchors.len());
    let mut averaged = Vec::with_capacity(queries.rows());
    for (q, &y) in queries.iter_rows().zip(truth) {
        let (fwd, bwd) = anchor_outputs(f, anchors, q)?;
        let mut sum = T::zero();
        for ((&a, &b), &ya) in fwd.iter().zip(&bwd).zip(&anchors.y) {
            single.push(a + ya - y);
            sum += half * a - half * b + ya;
        }
        averaged.push(sum / T::from_usize_lossy(anchors.len()));
    }
    let single_anchor_std = stats::population_std(&single);
    let averaged_rmse = stats::rmse(&averaged, truth);
    Ok(SuppressionProbe {
        single_anchor_std,
        averaged_rmse,
        ratio: (averaged_rmse > T::zero()).then(|| single_anchor_std / averaged_rmse),
    })
}

/// A trained twin network together with its anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinModel<T> {
    pub network: Network<T>,
    /// Normalized training features and their targets.
    pub anchors: Anchors<T>,
    pub normalizer: Normalizer<T>,
    /// Mean of the normalized anchor features; fills the second slot of the
    /// pair when embedding a single point.
    pub feature_mean: Vec<T>,
}

impl<T: Scalar> TwinModel<T> {
    pub fn new(
        network: Network<T>,
        anchors: Anchors<T>,
        normalizer: Normalizer<T>,
    ) -> Result<Self> {
        let d = anchors.x.cols();
        if network.input_dim() != 2 * d || normalizer.dim() != d {
            return Err(Error::Shape {
                context: "twin network input",
                expected: 2 * d,
                actual: network.input_dim(),
            });
        }
        if !network.is_regressor() {
            return Err(Error::Contract(
                "twin network must end in a scalar linear layer".into(),
            ));
        }
        let feature_mean = anchors.x.column_means();
        Ok(Self {
            network,
            anchors,
            normalizer,
            feature_mean,
        })
    }

    pub fn dim(&self) -> usize {
        self.anchors.x.cols()
    }

    /// `F` on raw (unnormalized) features.
    pub fn difference(&self, a: &[T], b: &[T]) -> Result<T> {
        let mut row = self.normalizer.apply_row(a)?;
        row.extend(self.normalizer.apply_row(b)?);
        Ok(self.network.predict_rows(&row, 1)?[0])
    }

    pub fn predict_one(&self, x: &[T]) -> Result<PredictionBundle<T>> {
        let z = self.normalizer.apply_row(x)?;
        predict_with(&self.network, &self.anchors, &z)
    }

    pub fn predict_batch(&self, queries: &Matrix<T>) -> Result<Vec<PredictionBundle<T>>> {
        let z = self.normalizer.apply(queries)?;
        predict_batch_with(&self.network, &self.anchors, &z)
    }

    pub fn predict_means(&self, queries: &Matrix<T>) -> Result<Vec<T>> {
        Ok(self
            .predict_batch(queries)?
            .into_iter()
            .map(|b| b.mean)
            .collect())
    }

    pub fn rmse(&self, data: &Dataset<T>) -> Result<T> {
        Ok(stats::rmse(&self.predict_means(&data.x)?, &data.y))
    }

    pub fn error_suppression_probe(&self, data: &Dataset<T>) -> Result<SuppressionProbe<T>> {
        let z = self.normalizer.apply(&data.x)?;
        error_suppression_probe_with(&self.network, &self.anchors, &z, &data.y)
    }

    /// Penultimate-layer embedding of the pair `(x, mean anchor)`; `x` is raw.
    pub fn embedding(&self, x: &[T]) -> Result<Vec<T>> {
        let z = self.normalizer.apply_row(x)?;
        self.embedding_normalized(&z)
    }

    pub(crate) fn embedding_normalized(&self, z: &[T]) -> Result<Vec<T>> {
        let mut row = z.to_vec();
        row.extend_from_slice(&self.feature_mean);
        self.network.penultimate(&row)
    }

    /// Embeddings of every anchor, one row each.
    pub fn anchor_embeddings(&self) -> Result<Matrix<T>> {
        let rows = self
            .anchors
            .x
            .iter_rows()
            .map(|r| self.embedding_normalized(r))
            .collect::<Result<Vec<_>>>()?;
        Matrix::from_rows(&rows)
    }
}

struct PairBatches<'a, T> {
    stream: PairStream,
    x: &'a Matrix<T>,
    y: &'a [T],
}

impl<T: Scalar> BatchSource<T> for PairBatches<'_, T> {
    fn next_batch(&mut self) -> Batch<T> {
        let b = self.stream.next_batch();
        let d = self.x.cols();
        let mut inputs = Vec::with_capacity(b.pairs.len() * 2 * d);
        let mut targets = Vec::with_capacity(b.pairs.len());
        for &(i, j) in &b.pairs {
            inputs.extend_from_slice(self.x.row(i));
            inputs.extend_from_slice(self.x.row(j));
            targets.push(self.y[i] - self.y[j]);
        }
        Batch {
            inputs,
            targets,
            ends_epoch: b.ends_epoch,
        }
    }
}

/// Mirrored validation pairs between each validation point and a fixed random
/// subset of at most `max_anchors` training points.
fn validation_pairs<T: Scalar>(
    train_x: &Matrix<T>,
    train_y: &[T],
    val_x: &Matrix<T>,
    val_y: &[T],
    max_anchors: usize,
    seed: u64,
) -> (Vec<T>, Vec<T>) {
    let n = train_x.rows();
    let mut rng = seed::rng(seed);
    let mut picks = index::sample(&mut rng, n, max_anchors.min(n)).into_vec();
    picks.sort_unstable();
    let d = train_x.cols();
    let count = 2 * val_x.rows() * picks.len();
    let mut inputs = Vec::with_capacity(count * 2 * d);
    let mut targets = Vec::with_capacity(count);
    for (v, &yv) in val_x.iter_rows().zip(val_y) {
        for &a in &picks {
            inputs.extend_from_slice(v);
            inputs.extend_from_slice(train_x.row(a));
            targets.push(yv - train_y[a]);
            inputs.extend_from_slice(train_x.row(a));
            inputs.extend_from_slice(v);
            targets.push(train_y[a] - yv);
        }
    }
    (inputs, targets)
}

fn check_dims<T: Scalar>(train: &Dataset<T>, val: &Dataset<T>) -> Result<()> {
    if val.dim() != train.dim() {
        return Err(Error::Shape {
            context: "validation features",
            expected: train.dim(),
            actual: val.dim(),
        });
    }
    if val.is_empty() {
        return Err(Error::Data("validation set is empty".into()));
    }
    Ok(())
}

/// Trains a twin network on all ordered training pairs with early stopping on
/// the mirrored validation pair loss.
pub fn train_twin<T: Scalar>(
    train: &Dataset<T>,
    val: &Dataset<T>,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<(TwinModel<T>, History)> {
    cfg.validate()?;
    if train.len() < 2 {
        return Err(Error::Data(
            "twin training needs at least two training points".into(),
        ));
    }
    check_dims(train, val)?;
    if cfg.batch_size < 2 || !cfg.batch_size.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "twin batch size must be even and at least 2, got {}",
            cfg.batch_size
        )));
    }
    let normalizer = Normalizer::fit(&train.x)?;
    let tx = normalizer.apply(&train.x)?;
    let vx = normalizer.apply(&val.x)?;
    let d = train.dim();

    let mut init_rng = seed::rng(seed::derive(cfg.seed, stream::INIT));
    let mut net = Network::glorot(&regression_layers(2 * d, hidden), &mut init_rng)?;

    let (val_in, val_t) = validation_pairs(
        &tx,
        &train.y,
        &vx,
        &val.y,
        cfg.val_anchors,
        seed::derive(cfg.seed, stream::VALIDATION),
    );
    let val_count = val_t.len();
    let mut source = PairBatches {
        stream: PairStream::new(
            train.len(),
            cfg.batch_size,
            seed::derive(cfg.seed, stream::PAIRS),
        )?,
        x: &tx,
        y: &train.y,
    };
    let history = train::fit(
        &mut net,
        &mut source,
        |n: &Network<T>| crate::nn::mse_loss(&n.predict_rows(&val_in, val_count)?, &val_t),
        cfg,
    )?;
    let model = TwinModel::new(net, Anchors::new(tx, train.y.clone())?, normalizer)?;
    Ok((model, history))
}

/// Independently trained twin models whose anchor estimates are pooled.
#[derive(Debug, Clone, PartialEq)]
pub struct TnnEnsemble<T> {
    members: Vec<TwinModel<T>>,
}

impl<T: Scalar> TnnEnsemble<T> {
    pub fn new(members: Vec<TwinModel<T>>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Contract("ensemble needs at least one member".into()))?;
        let d = first.dim();
        if members.iter().any(|m| m.dim() != d) {
            return Err(Error::Contract(
                "ensemble members disagree on feature dimension".into(),
            ));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[TwinModel<T>] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Pools every member's anchor estimates into one bundle.
    pub fn predict_one(&self, x: &[T]) -> Result<PredictionBundle<T>> {
        let mut estimates = Vec::new();
        let mut residuals = Vec::new();
        for m in &self.members {
            let b = m.predict_one(x)?;
            estimates.extend(b.estimates);
            residuals.extend(b.residuals);
        }
        Ok(PredictionBundle::from_parts(estimates, residuals))
    }

    pub fn predict_means(&self, queries: &Matrix<T>) -> Result<Vec<T>> {
        queries
            .iter_rows()
            .map(|q| Ok(self.predict_one(q)?.mean))
            .collect()
    }

    pub fn rmse(&self, data: &Dataset<T>) -> Result<T> {
        Ok(stats::rmse(&self.predict_means(&data.x)?, &data.y))
    }
}

/// Trains `k` twin models on the same split under distinct derived seeds.
pub fn train_twin_ensemble<T: Scalar>(
    train: &Dataset<T>,
    val: &Dataset<T>,
    k: usize,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<(TnnEnsemble<T>, Vec<History>)> {
    if k == 0 {
        return Err(Error::Config("ensemble size must be at least 1".into()));
    }
    let mut members = Vec::with_capacity(k);
    let mut histories = Vec::with_capacity(k);
    for i in 0..k {
        let member_cfg = cfg.with_seed(seed::derive(cfg.seed, stream::MEMBER + 16 * i as u64));
        let (m, h) = train_twin(train, val, hidden, &member_cfg)?;
        members.push(m);
        histories.push(h);
    }
    Ok((TnnEnsemble::new(members)?, histories))
}
