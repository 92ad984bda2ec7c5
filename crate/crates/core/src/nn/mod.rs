//! Dense feed-forward network with exact backpropagation.
//!
//! Weights are stored input-major (`in_dim × out_dim`, row-major) so that both
//! the forward affine map and the weight-gradient accumulation are AXPY loops
//! over the output dimension.
//!
//! Dropout masks act on layer *inputs*: mask `k` multiplies the vector fed into
//! layer `k`. Masking the inputs of layers `1..L` is ordinary hidden-unit
//! dropout; masking layer 0 drops network inputs.

mod dropout;
mod loss;
mod optim;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use dropout::DropoutMasks;
pub use loss::{add_l2_gradient, l2_term, mse_gradient, mse_loss, mse_loss_with_l2};
pub use optim::{OptimizerKind, OptimizerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            activation,
        }
    }
}

/// Layer specs for `input_dim → hidden[0] → … → 1` with relu hidden layers
/// and a linear scalar output.
pub fn regression_layers(input_dim: usize, hidden: &[usize]) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(hidden.len() + 1);
    let mut prev = input_dim;
    for &h in hidden {
        specs.push(LayerSpec::new(prev, h, Activation::Relu));
        prev = h;
    }
    specs.push(LayerSpec::new(prev, 1, Activation::Identity));
    specs
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    spec: LayerSpec,
    /// `input_dim × output_dim`, row-major.
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    fn zeros(spec: LayerSpec) -> Self {
        Self {
            spec,
            weights: vec![T::zero(); spec.input_dim * spec.output_dim],
            bias: vec![T::zero(); spec.output_dim],
        }
    }

    pub fn spec(&self) -> LayerSpec {
        self.spec
    }

    /// Weight connecting input `i` to output `o`.
    #[inline]
    pub fn weight(&self, o: usize, i: usize) -> T {
        self.weights[i * self.spec.output_dim + o]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    /// `out = bias + input · W` for one row, then the activation.
    #[inline]
    fn forward_row(&self, input: &[T], out: &mut [T]) {
        let od = self.spec.output_dim;
        out.copy_from_slice(&self.bias);
        for (i, &xi) in input.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            let w = &self.weights[i * od..(i + 1) * od];
            for (o, &wv) in out.iter_mut().zip(w) {
                *o += xi * wv;
            }
        }
        if self.spec.activation == Activation::Relu {
            for o in out.iter_mut() {
                if *o < T::zero() {
                    *o = T::zero();
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    layers: Vec<Dense<T>>,
    /// Bumped on every parameter write; ties forward caches to the weights
    /// they were computed with.
    generation: u64,
}

/// Networks are equal when their layers are; the edit counter is ignored.
impl<T: PartialEq> PartialEq for Network<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Per-layer gradients, laid out like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| vec![T::zero(); l.weights.len()])
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|l| vec![T::zero(); l.bias.len()])
                .collect(),
        }
    }

    /// Gradient of the parameter at flat index `idx` (see [`Network::param`]).
    pub fn flat(&self, idx: usize) -> T {
        let mut idx = idx;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            if idx < w.len() {
                return w[idx];
            }
            idx -= w.len();
            if idx < b.len() {
                return b[idx];
            }
            idx -= b.len();
        }
        panic!("gradient index out of range");
    }

    pub fn is_zero(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .all(|&g| g == T::zero())
    }
}

/// Activations recorded by a forward pass, consumed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    batch: usize,
    generation: u64,
    dims: Vec<usize>,
    /// `acts[k]` is the (masked) input of layer `k`; the last entry is the output.
    acts: Vec<Vec<T>>,
    masks: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> ForwardCache<T> {
    /// Network output, `batch × output_dim` row-major.
    pub fn output(&self) -> &[T] {
        self.acts.last().expect("cache holds at least the input")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl<T: Scalar> Network<T> {
    /// Zero-initialized network. Consecutive specs must chain.
    pub fn new(specs: &[LayerSpec]) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for s in specs {
            if s.input_dim == 0 || s.output_dim == 0 {
                return Err(Error::Config("layer dimensions must be positive".into()));
            }
        }
        for w in specs.windows(2) {
            if w[0].output_dim != w[1].input_dim {
                return Err(Error::Shape {
                    context: "layer chain",
                    expected: w[0].output_dim,
                    actual: w[1].input_dim,
                });
            }
        }
        Ok(Self {
            layers: specs.iter().map(|&s| Dense::zeros(s)).collect(),
            generation: 0,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        let mut net = Self::new(specs)?;
        for layer in &mut net.layers {
            let s = layer.spec;
            let limit = (6.0 / (s.input_dim + s.output_dim) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            for w in &mut layer.weights {
                *w = T::from_f64_lossy(dist.sample(rng));
            }
        }
        Ok(net)
    }

    /// Rebuilds a network from stored parameters (input-major weights).
    pub fn from_parts(
        specs: &[LayerSpec],
        weights: Vec<Vec<T>>,
        biases: Vec<Vec<T>>,
    ) -> Result<Self> {
        let mut net = Self::new(specs)?;
        if weights.len() != specs.len() || biases.len() != specs.len() {
            return Err(Error::Shape {
                context: "parameter blocks",
                expected: specs.len(),
                actual: weights.len().min(biases.len()),
            });
        }
        for ((layer, w), b) in net.layers.iter_mut().zip(weights).zip(biases) {
            if w.len() != layer.weights.len() || b.len() != layer.bias.len() {
                return Err(Error::Shape {
                    context: "parameter block size",
                    expected: layer.weights.len() + layer.bias.len(),
                    actual: w.len() + b.len(),
                });
            }
            if w.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(Error::Data("non-finite network parameter".into()));
            }
            layer.weights = w;
            layer.bias = b;
        }
        Ok(net)
    }

    /// True when the last layer is a scalar linear output.
    pub fn is_regressor(&self) -> bool {
        let last = self.layers.last().expect("nonempty").spec;
        last.output_dim == 1 && last.activation == Activation::Identity
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").spec.output_dim
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Flat parameter view: layer by layer, weights then bias.
    pub fn param(&self, idx: usize) -> T {
        let (k, is_bias, j) = self.locate(idx);
        if is_bias {
            self.layers[k].bias[j]
        } else {
            self.layers[k].weights[j]
        }
    }

    pub fn set_param(&mut self, idx: usize, v: T) {
        let (k, is_bias, j) = self.locate(idx);
        if is_bias {
            self.layers[k].bias[j] = v;
        } else {
            self.layers[k].weights[j] = v;
        }
        self.generation += 1;
    }

    /// Sets the weight from input `i` to output `o` of layer `k`.
    pub fn set_weight(&mut self, k: usize, o: usize, i: usize, v: T) {
        let od = self.layers[k].spec.output_dim;
        self.layers[k].weights[i * od + o] = v;
        self.generation += 1;
    }

    pub fn set_bias(&mut self, k: usize, o: usize, v: T) {
        self.layers[k].bias[o] = v;
        self.generation += 1;
    }

    fn locate(&self, mut idx: usize) -> (usize, bool, usize) {
        for (k, l) in self.layers.iter().enumerate() {
            if idx < l.weights.len() {
                return (k, false, idx);
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                return (k, true, idx);
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_norm_sq(&self) -> T {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter())
            .map(|&w| w * w)
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Forward pass for a single input vector.
    pub fn forward(
        &self,
        input: &[T],
        masks: Option<&DropoutMasks<T>>,
    ) -> Result<(Vec<T>, ForwardCache<T>)> {
        let cache = self.forward_batch(input, 1, masks)?;
        Ok((cache.output().to_vec(), cache))
    }

    /// Forward pass over `batch` row-major inputs.
    pub fn forward_batch(
        &self,
        inputs: &[T],
        batch: usize,
        masks: Option<&DropoutMasks<T>>,
    ) -> Result<ForwardCache<T>> {
        let in_dim = self.input_dim();
        if inputs.len() != batch * in_dim {
            return Err(Error::Shape {
                context: "network input",
                expected: batch * in_dim,
                actual: inputs.len(),
            });
        }
        if let Some(m) = masks {
            m.check(self, batch)?;
        }
        let mask_for = |k: usize| masks.and_then(|m| m.layer(k));

        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut first = inputs.to_vec();
        if let Some(m) = mask_for(0) {
            first.iter_mut().zip(m).for_each(|(a, &s)| *a *= s);
        }
        acts.push(first);
        for (k, layer) in self.layers.iter().enumerate() {
            let (id, od) = (layer.spec.input_dim, layer.spec.output_dim);
            let mut out = vec![T::zero(); batch * od];
            let input = &acts[k];
            for b in 0..batch {
                layer.forward_row(&input[b * id..(b + 1) * id], &mut out[b * od..(b + 1) * od]);
            }
            if let Some(m) = mask_for(k + 1) {
                out.iter_mut().zip(m).for_each(|(a, &s)| *a *= s);
            }
            acts.push(out);
        }
        Ok(ForwardCache {
            batch,
            generation: self.generation,
            dims: self.dims(),
            acts,
            masks: masks.map_or_else(
                || vec![None; self.layers.len()],
                |m| {
                    (0..self.layers.len())
                        .map(|k| m.layer(k).map(<[T]>::to_vec))
                        .collect()
                },
            ),
        })
    }

    /// Plain forward evaluation of many rows, without keeping a cache.
    pub fn predict_rows(&self, inputs: &[T], batch: usize) -> Result<Vec<T>> {
        let in_dim = self.input_dim();
        if inputs.len() != batch * in_dim {
            return Err(Error::Shape {
                context: "network input",
                expected: batch * in_dim,
                actual: inputs.len(),
            });
        }
        let max_w = self
            .layers
            .iter()
            .map(|l| l.spec.output_dim)
            .max()
            .unwrap_or(0)
            .max(in_dim);
        let mut a = vec![T::zero(); max_w];
        let mut b = vec![T::zero(); max_w];
        let od = self.output_dim();
        let mut out = Vec::with_capacity(batch * od);
        for row in inputs.chunks_exact(in_dim) {
            a[..in_dim].copy_from_slice(row);
            let mut width = in_dim;
            for layer in &self.layers {
                let o = layer.spec.output_dim;
                layer.forward_row(&a[..width], &mut b[..o]);
                std::mem::swap(&mut a, &mut b);
                width = o;
            }
            out.extend_from_slice(&a[..od]);
        }
        Ok(out)
    }

    /// Gradients of `sum(output_gradient · output)` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache<T>, output_gradient: &[T]) -> Result<Gradients<T>> {
        let mut grads = Gradients::zeros_like(self);
        self.backward_into(cache, output_gradient, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Network::backward`] but overwrites `grads` in place.
    pub fn backward_into(
        &self,
        cache: &ForwardCache<T>,
        output_gradient: &[T],
        grads: &mut Gradients<T>,
    ) -> Result<()> {
        if cache.generation != self.generation || cache.dims != self.dims() {
            return Err(Error::Contract(
                "forward cache does not belong to the current network parameters".into(),
            ));
        }
        let batch = cache.batch;
        if output_gradient.len() != batch * self.output_dim() {
            return Err(Error::Shape {
                context: "output gradient",
                expected: batch * self.output_dim(),
                actual: output_gradient.len(),
            });
        }
        let nl = self.layers.len();
        let mut delta = output_gradient.to_vec();
        for k in (0..nl).rev() {
            let layer = &self.layers[k];
            let (id, od) = (layer.spec.input_dim, layer.spec.output_dim);
            let out = &cache.acts[k + 1];
            if k + 1 < nl {
                if let Some(m) = &cache.masks[k + 1] {
                    delta.iter_mut().zip(m).for_each(|(d, &s)| *d *= s);
                }
            }
            if layer.spec.activation == Activation::Relu {
                // Subgradient at 0 is 0.
                for (d, &a) in delta.iter_mut().zip(out) {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                }
            }
            let input = &cache.acts[k];
            let gw = &mut grads.weights[k];
            let gb = &mut grads.biases[k];
            gw.iter_mut().for_each(|g| *g = T::zero());
            gb.iter_mut().for_each(|g| *g = T::zero());
            for b in 0..batch {
                let d = &delta[b * od..(b + 1) * od];
                for (g, &dv) in gb.iter_mut().zip(d) {
                    *g += dv;
                }
                for (i, &xi) in input[b * id..(b + 1) * id].iter().enumerate() {
                    if xi == T::zero() {
                        continue;
                    }
                    for (g, &dv) in gw[i * od..(i + 1) * od].iter_mut().zip(d) {
                        *g += xi * dv;
                    }
                }
            }
            if k > 0 {
                let mut next = vec![T::zero(); batch * id];
                for b in 0..batch {
                    let d = &delta[b * od..(b + 1) * od];
                    let nrow = &mut next[b * id..(b + 1) * id];
                    for (i, n) in nrow.iter_mut().enumerate() {
                        *n = dot(&layer.weights[i * od..(i + 1) * od], d);
                    }
                }
                delta = next;
            }
        }
        Ok(())
    }

    /// Post-activation output of the last hidden layer.
    pub fn penultimate(&self, input: &[T]) -> Result<Vec<T>> {
        if self.layers.len() < 2 {
            return Err(Error::Contract(
                "penultimate activations need at least two layers".into(),
            ));
        }
        if input.len() != self.input_dim() {
            return Err(Error::Shape {
                context: "network input",
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        let mut a = input.to_vec();
        for layer in &self.layers[..self.layers.len() - 1] {
            let mut out = vec![T::zero(); layer.spec.output_dim];
            layer.forward_row(&a, &mut out);
            a = out;
        }
        Ok(a)
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense<T>] {
        self.generation += 1;
        &mut self.layers
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.spec.output_dim));
        d
    }

    /// Input-major weights and biases of every layer, for serialization.
    pub fn parts(&self) -> (Vec<&[T]>, Vec<&[T]>) {
        (
            self.layers.iter().map(|l| l.weights.as_slice()).collect(),
            self.layers.iter().map(|l| l.bias.as_slice()).collect(),
        )
    }
}

impl<T> Dense<T> {
    pub(crate) fn params_mut(&mut self) -> (&mut [T], &mut [T]) {
        (&mut self.weights, &mut self.bias)
    }
}

/// Dot product with four independent accumulators.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (&x, &y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}
