use serde::{Deserialize, Serialize};

use super::{Gradients, Network};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Unit-rate adadelta: `Δ = −√(E[Δ²]+ε)/√(E[g²]+ε) · g`.
    Adadelta { rho: f64, eps: f64 },
    /// `Δ = −lr · g / √(E[g²]+ε)`.
    Rmsprop { lr: f64, rho: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adadelta() -> Self {
        OptimizerKind::Adadelta {
            rho: 0.95,
            eps: 1e-6,
        }
    }

    pub fn rmsprop() -> Self {
        OptimizerKind::Rmsprop {
            lr: 1e-3,
            rho: 0.9,
            eps: 1e-7,
        }
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::adadelta()
    }
}

/// Running averages per parameter block (`2k` = weights of layer `k`, `2k+1` = bias).
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    kind: OptimizerKind,
    sq_grad: Vec<Vec<T>>,
    sq_update: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(kind: OptimizerKind, net: &Network<T>) -> Self {
        let blocks: Vec<Vec<T>> = net
            .layers()
            .iter()
            .flat_map(|l| {
                [
                    vec![T::zero(); l.weights().len()],
                    vec![T::zero(); l.bias().len()],
                ]
            })
            .collect();
        let sq_update = match kind {
            OptimizerKind::Adadelta { .. } => blocks.clone(),
            OptimizerKind::Rmsprop { .. } => Vec::new(),
        };
        Self {
            kind,
            sq_grad: blocks,
            sq_update,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Squared-gradient running average of block `b`.
    pub fn sq_grad(&self, b: usize) -> &[T] {
        &self.sq_grad[b]
    }

    /// Squared-update running average of block `b` (adadelta only).
    pub fn sq_update(&self, b: usize) -> Option<&[T]> {
        self.sq_update.get(b).map(Vec::as_slice)
    }

    /// Applies one update. Fails without touching anything if a gradient is non-finite.
    pub fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>) -> Result<()> {
        if grads.weights.len() != net.num_layers() {
            return Err(Error::Shape {
                context: "gradient blocks",
                expected: net.num_layers(),
                actual: grads.weights.len(),
            });
        }
        for (k, (w, b)) in grads.weights.iter().zip(&grads.biases).enumerate() {
            if w.len() != net.layers()[k].weights().len() || b.len() != net.layers()[k].bias().len()
            {
                return Err(Error::Shape {
                    context: "gradient block size",
                    expected: net.layers()[k].weights().len(),
                    actual: w.len(),
                });
            }
            if w.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    block: format!("layer {k} weights"),
                });
            }
            if b.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    block: format!("layer {k} bias"),
                });
            }
        }

        let kind = self.kind;
        for (k, layer) in net.layers_mut().iter_mut().enumerate() {
            let (w, b) = layer.params_mut();
            for (slot, (params, g)) in [(w, &grads.weights[k]), (b, &grads.biases[k])]
                .into_iter()
                .enumerate()
            {
                let blk = 2 * k + slot;
                match kind {
                    OptimizerKind::Adadelta { rho, eps } => adadelta(
                        params,
                        g,
                        &mut self.sq_grad[blk],
                        &mut self.sq_update[blk],
                        T::from_f64_lossy(rho),
                        T::from_f64_lossy(eps),
                    ),
                    OptimizerKind::Rmsprop { lr, rho, eps } => rmsprop(
                        params,
                        g,
                        &mut self.sq_grad[blk],
                        T::from_f64_lossy(lr),
                        T::from_f64_lossy(rho),
                        T::from_f64_lossy(eps),
                    ),
                }
            }
        }
        Ok(())
    }
}

fn adadelta<T: Scalar>(params: &mut [T], g: &[T], eg: &mut [T], edx: &mut [T], rho: T, eps: T) {
    let one_m = T::one() - rho;
    for (((p, &gv), a), u) in params
        .iter_mut()
        .zip(g)
        .zip(eg.iter_mut())
        .zip(edx.iter_mut())
    {
        *a = rho * *a + one_m * gv * gv;
        let dx = -((*u + eps) / (*a + eps)).sqrt() * gv;
        *u = rho * *u + one_m * dx * dx;
        *p += dx;
    }
}

fn rmsprop<T: Scalar>(params: &mut [T], g: &[T], eg: &mut [T], lr: T, rho: T, eps: T) {
    let one_m = T::one() - rho;
    for ((p, &gv), a) in params.iter_mut().zip(g).zip(eg.iter_mut()) {
        *a = rho * *a + one_m * gv * gv;
        *p -= lr * gv / (*a + eps).sqrt();
    }
}
