use super::{Gradients, Network};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn mse_loss<T: Scalar>(predictions: &[T], targets: &[T]) -> Result<T> {
    if predictions.len() != targets.len() {
        return Err(Error::Shape {
            context: "loss targets",
            expected: predictions.len(),
            actual: targets.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Contract("loss over an empty batch".into()));
    }
    let ss: T = predictions
        .iter()
        .zip(targets)
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(ss / T::from_usize_lossy(predictions.len()))
}

/// `l2 · Σ w²` over weights, biases excluded.
pub fn l2_term<T: Scalar>(net: &Network<T>, l2_penalty: T) -> T {
    if l2_penalty == T::zero() {
        T::zero()
    } else {
        l2_penalty * net.weight_norm_sq()
    }
}

/// Mean squared residual plus the weight penalty.
pub fn mse_loss_with_l2<T: Scalar>(
    predictions: &[T],
    targets: &[T],
    net: &Network<T>,
    l2_penalty: T,
) -> Result<T> {
    Ok(mse_loss(predictions, targets)? + l2_term(net, l2_penalty))
}

/// d(mean squared residual)/d(prediction).
pub fn mse_gradient<T: Scalar>(predictions: &[T], targets: &[T]) -> Vec<T> {
    let scale = T::two() / T::from_usize_lossy(predictions.len());
    predictions
        .iter()
        .zip(targets)
        .map(|(&p, &t)| scale * (p - t))
        .collect()
}

/// Adds `2 · l2 · w` to every weight gradient.
pub fn add_l2_gradient<T: Scalar>(net: &Network<T>, grads: &mut Gradients<T>, l2_penalty: T) {
    if l2_penalty == T::zero() {
        return;
    }
    let c = T::two() * l2_penalty;
    for (layer, g) in net.layers().iter().zip(&mut grads.weights) {
        for (gv, &w) in g.iter_mut().zip(layer.weights()) {
            *gv += c * w;
        }
    }
}
