//! Single-network regression, explicit ensembles of it, and MC dropout.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Normalizer};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{regression_layers, DropoutMasks, Network};
use crate::scalar::Scalar;
use crate::seed::{self, stream};
use crate::stats;
use crate::train::{self, Batch, BatchSource, History, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct AnnModel<T> {
    pub network: Network<T>,
    pub normalizer: Normalizer<T>,
    /// Dropout rate used during training (0 if none).
    pub dropout_rate: f64,
}

impl<T: Scalar> AnnModel<T> {
    pub fn new(network: Network<T>, normalizer: Normalizer<T>, dropout_rate: f64) -> Result<Self> {
        if network.input_dim() != normalizer.dim() {
            return Err(Error::Shape {
                context: "ann network input",
                expected: normalizer.dim(),
                actual: network.input_dim(),
            });
        }
        if !network.is_regressor() {
            return Err(Error::Contract(
                "ann must end in a scalar linear layer".into(),
            ));
        }
        Ok(Self {
            network,
            normalizer,
            dropout_rate,
        })
    }

    pub fn dim(&self) -> usize {
        self.normalizer.dim()
    }

    pub fn predict(&self, x: &[T]) -> Result<T> {
        let z = self.normalizer.apply_row(x)?;
        Ok(self.network.predict_rows(&z, 1)?[0])
    }

    pub fn predict_many(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        let z = self.normalizer.apply(x)?;
        self.network.predict_rows(z.as_slice(), z.rows())
    }

    pub fn rmse(&self, data: &Dataset<T>) -> Result<T> {
        Ok(stats::rmse(&self.predict_many(&data.x)?, &data.y))
    }

    /// Penultimate-layer embedding of a raw input.
    pub fn embedding(&self, x: &[T]) -> Result<Vec<T>> {
        self.network.penultimate(&self.normalizer.apply_row(x)?)
    }

    /// Mean and population standard deviation over `samples` stochastic passes
    /// with fresh inverted-dropout masks on the hidden units (on the inputs
    /// for a network without hidden layers).
    pub fn mc_dropout(
        &self,
        x: &[T],
        samples: usize,
        rate: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(T, T)> {
        if samples < 2 {
            return Err(Error::Config(
                "mc dropout needs at least two samples".into(),
            ));
        }
        if !(rate > 0.0 && rate < 1.0) {
            return Err(Error::Config(format!(
                "mc dropout rate must lie in (0, 1), got {rate}"
            )));
        }
        let z = self.normalizer.apply_row(x)?;
        let mut outs = Vec::with_capacity(samples);
        for _ in 0..samples {
            let masks = if self.network.num_layers() > 1 {
                DropoutMasks::hidden(&self.network, 1, rate, rng)
            } else {
                DropoutMasks::input(&self.network, 1, rate, rng)
            };
            outs.push(self.network.forward(&z, Some(&masks))?.0[0]);
        }
        Ok((stats::mean(&outs), stats::population_std(&outs)))
    }
}

/// Seeded MC-dropout prediction of one raw input.
pub fn mc_dropout_predict<T: Scalar>(
    model: &AnnModel<T>,
    x: &[T],
    samples: usize,
    rate: f64,
    seed: u64,
) -> Result<(T, T)> {
    model.mc_dropout(x, samples, rate, &mut seed::rng(seed))
}

struct SampleBatches<'a, T> {
    x: &'a Matrix<T>,
    y: &'a [T],
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl<T: Scalar> BatchSource<T> for SampleBatches<'_, T> {
    fn next_batch(&mut self) -> Batch<T> {
        if self.cursor == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let idx = &self.order[self.cursor..end];
        let mut inputs = Vec::with_capacity(idx.len() * self.x.cols());
        for &i in idx {
            inputs.extend_from_slice(self.x.row(i));
        }
        let targets = idx.iter().map(|&i| self.y[i]).collect();
        self.cursor = end;
        Batch {
            inputs,
            targets,
            ends_epoch: end == self.order.len(),
        }
    }
}

/// Trains a plain regression network on the targets with early stopping on
/// the validation MSE.
pub fn train_ann<T: Scalar>(
    train: &Dataset<T>,
    val: &Dataset<T>,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<(AnnModel<T>, History)> {
    cfg.validate()?;
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
    let normalizer = Normalizer::fit(&train.x)?;
    let tx = normalizer.apply(&train.x)?;
    let vx = normalizer.apply(&val.x)?;
    let mut init_rng = seed::rng(seed::derive(cfg.seed, stream::INIT));
    let mut net = Network::glorot(&regression_layers(train.dim(), hidden), &mut init_rng)?;

    let mut rng = seed::rng(seed::derive(cfg.seed, stream::PAIRS));
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);
    let mut source = SampleBatches {
        x: &tx,
        y: &train.y,
        order,
        cursor: 0,
        batch_size: cfg.batch_size,
        rng,
    };
    let history = train::fit(
        &mut net,
        &mut source,
        |n: &Network<T>| crate::nn::mse_loss(&n.predict_rows(vx.as_slice(), vx.rows())?, &val.y),
        cfg,
    )?;
    Ok((AnnModel::new(net, normalizer, cfg.dropout_rate)?, history))
}

/// Explicit ensemble of independently seeded networks; predicts the mean of
/// member predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnEnsemble<T> {
    members: Vec<AnnModel<T>>,
}

impl<T: Scalar> AnnEnsemble<T> {
    pub fn new(members: Vec<AnnModel<T>>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Contract("ensemble needs at least one member".into()));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[AnnModel<T>] {
        &self.members
    }

    pub fn predict(&self, x: &[T]) -> Result<T> {
        let preds = self
            .members
            .iter()
            .map(|m| m.predict(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(stats::mean(&preds))
    }

    pub fn predict_many(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        let mut sum = vec![T::zero(); x.rows()];
        for m in &self.members {
            for (s, p) in sum.iter_mut().zip(m.predict_many(x)?) {
                *s += p;
            }
        }
        let k = T::from_usize_lossy(self.members.len());
        Ok(sum.into_iter().map(|s| s / k).collect())
    }

    pub fn rmse(&self, data: &Dataset<T>) -> Result<T> {
        Ok(stats::rmse(&self.predict_many(&data.x)?, &data.y))
    }
}

pub fn train_ann_ensemble<T: Scalar>(
    train: &Dataset<T>,
    val: &Dataset<T>,
    k: usize,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<(AnnEnsemble<T>, Vec<History>)> {
    if k == 0 {
        return Err(Error::Config("ensemble size must be at least 1".into()));
    }
    let mut members = Vec::with_capacity(k);
    let mut histories = Vec::with_capacity(k);
    for i in 0..k {
        let member_cfg = cfg.with_seed(seed::derive(cfg.seed, stream::MEMBER + 16 * i as u64));
        let (m, h) = train_ann(train, val, hidden, &member_cfg)?;
        members.push(m);
        histories.push(h);
    }
    Ok((AnnEnsemble::new(members)?, histories))
}
