use rand::Rng;

use super::Network;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Inverted-dropout masks for one batch. Entry `k` scales the input of layer
/// `k`; kept units are scaled by `1 / (1 - rate)` so no rescaling is needed
/// when dropout is off.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks<T> {
    batch: usize,
    per_layer: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> DropoutMasks<T> {
    /// Masks on every hidden layer output (inputs of layers `1..L`).
    pub fn hidden<R: Rng + ?Sized>(net: &Network<T>, batch: usize, rate: f64, rng: &mut R) -> Self {
        let nl = net.num_layers();
        let per_layer = (0..nl)
            .map(|k| {
                (k > 0).then(|| sample_mask(batch * net.layers()[k].spec().input_dim, rate, rng))
            })
            .collect();
        Self { batch, per_layer }
    }

    /// Masks on the network inputs only.
    pub fn input<R: Rng + ?Sized>(net: &Network<T>, batch: usize, rate: f64, rng: &mut R) -> Self {
        let nl = net.num_layers();
        let per_layer = (0..nl)
            .map(|k| (k == 0).then(|| sample_mask(batch * net.input_dim(), rate, rng)))
            .collect();
        Self { batch, per_layer }
    }

    /// Masks from explicit per-layer buffers (`None` leaves a layer unmasked).
    pub fn from_layers(batch: usize, per_layer: Vec<Option<Vec<T>>>) -> Self {
        Self { batch, per_layer }
    }

    pub fn layer(&self, k: usize) -> Option<&[T]> {
        self.per_layer.get(k).and_then(|m| m.as_deref())
    }

    pub(super) fn check(&self, net: &Network<T>, batch: usize) -> Result<()> {
        if self.batch != batch || self.per_layer.len() != net.num_layers() {
            return Err(Error::Shape {
                context: "dropout mask layers",
                expected: net.num_layers(),
                actual: self.per_layer.len(),
            });
        }
        for (k, m) in self.per_layer.iter().enumerate() {
            if let Some(m) = m {
                let want = batch * net.layers()[k].spec().input_dim;
                if m.len() != want {
                    return Err(Error::Shape {
                        context: "dropout mask width",
                        expected: want,
                        actual: m.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

fn sample_mask<T: Scalar, R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<T> {
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect()
}
