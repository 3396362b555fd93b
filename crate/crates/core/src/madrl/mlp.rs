//! Fully connected Q-network with explicit backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MadrlError;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
    Sigmoid,
}

impl Activation {
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Linear => z,
            Activation::Sigmoid => T::one() / (T::one() + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative<T: Scalar>(self, a: T) -> T {
        match self {
            Activation::Relu => {
                if a > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Linear => T::one(),
            Activation::Sigmoid => a * (T::one() - a),
        }
    }
}

/// `out = act(W·in + b)` with `W` stored row-major (`outputs × inputs`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        DenseLayer {
            inputs,
            outputs,
            activation,
            weights: vec![T::zero(); inputs * outputs],
            biases: vec![T::zero(); outputs],
        }
    }

    /// Uniform weights in ±√(6/(fan_in+fan_out)), zero biases.
    pub fn xavier<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut layer = Self::zeros(inputs, outputs, activation);
        for w in &mut layer.weights {
            *w = T::lit(rng.gen_range(-limit..=limit));
        }
        layer
    }

    fn forward_into(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        for (row, &b) in self.weights.chunks_exact(self.inputs).zip(&self.biases) {
            let z = row.iter().zip(x).fold(b, |acc, (&w, &xi)| acc + w * xi);
            out.push(self.activation.apply(z));
        }
    }

    /// Frobenius norm of the weight matrix (an upper bound on its spectral norm).
    pub fn frobenius_norm(&self) -> T {
        self.weights.iter().map(|&w| w * w).sum::<T>().sqrt()
    }
}

/// Same shapes as the network's weights and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> Gradients<T> {
    fn zeros_like(net: &MlpNetwork<T>) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![T::zero(); l.weights.len()], vec![T::zero(); l.biases.len()]))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().chain(b).all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> T {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b))
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// One regression sample: push `Q(input)[action]` toward `target`.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a, T> {
    pub input: &'a [T],
    pub action: usize,
    pub target: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNetwork<T> {
    pub layers: Vec<DenseLayer<T>>,
}

impl<T: Scalar> MlpNetwork<T> {
    /// `dims = [input, hidden…, output]`; hidden layers use ReLU.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], output: Activation, rng: &mut R) -> Result<Self, MadrlError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(MadrlError::InvalidConfig("network needs at least two non-empty layers"));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { output } else { Activation::Relu };
                DenseLayer::xavier(w[0], w[1], act, rng)
            })
            .collect();
        Ok(MlpNetwork { layers })
    }

    pub fn from_layers(layers: Vec<DenseLayer<T>>) -> Result<Self, MadrlError> {
        let ok = !layers.is_empty()
            && layers.windows(2).all(|w| w[0].outputs == w[1].inputs)
            && layers.iter().all(|l| {
                l.weights.len() == l.inputs * l.outputs && l.biases.len() == l.outputs
            });
        if ok {
            Ok(MlpNetwork { layers })
        } else {
            Err(MadrlError::InvalidConfig("inconsistent layer shapes"))
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &[T]) -> Result<(), MadrlError> {
        if x.len() != self.input_dim() {
            return Err(MadrlError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, MadrlError> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.forward_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Activations of every layer, input first.
    fn trace(&self, x: &[T]) -> Vec<Vec<T>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for layer in &self.layers {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward_into(acts.last().expect("input pushed"), &mut out);
            acts.push(out);
        }
        acts
    }

    fn check_sample(&self, s: &Sample<'_, T>) -> Result<(), MadrlError> {
        self.check_input(s.input)?;
        if s.action >= self.output_dim() {
            return Err(MadrlError::ActionOutOfRange {
                action: s.action,
                outputs: self.output_dim(),
            });
        }
        Ok(())
    }

    /// Mean over the batch of ½(Q(s)[a] − y)².
    pub fn loss(&self, batch: &[Sample<'_, T>]) -> Result<T, MadrlError> {
        if batch.is_empty() {
            return Ok(T::zero());
        }
        let mut total = T::zero();
        for s in batch {
            self.check_sample(s)?;
            let q = self.forward(s.input)?[s.action];
            let e = q - s.target;
            total += T::lit(0.5) * e * e;
        }
        Ok(total / T::lit(batch.len() as f64))
    }

    /// Loss and its gradient with respect to every weight and bias.
    pub fn gradients(&self, batch: &[Sample<'_, T>]) -> Result<(T, Gradients<T>), MadrlError> {
        let mut grads = Gradients::zeros_like(self);
        if batch.is_empty() {
            return Ok((T::zero(), grads));
        }
        let n = T::lit(batch.len() as f64);
        let mut total = T::zero();
        for s in batch {
            self.check_sample(s)?;
            let acts = self.trace(s.input);
            let out = acts.last().expect("output layer");
            let e = out[s.action] - s.target;
            total += T::lit(0.5) * e * e;
            // delta = dL/dz for the current layer.
            let last = self.layers.len() - 1;
            let mut delta = vec![T::zero(); self.layers[last].outputs];
            delta[s.action] = e / n * self.layers[last].activation.derivative(out[s.action]);
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let input = &acts[li];
                let (gw, gb) = &mut grads.layers[li];
                for (o, &d) in delta.iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    gb[o] += d;
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    for (g, &x) in row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
                if li == 0 {
                    break;
                }
                let prev_act = self.layers[li - 1].activation;
                let mut prev = vec![T::zero(); layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                for (p, &a) in prev.iter_mut().zip(input) {
                    *p *= prev_act.derivative(a);
                }
                delta = prev;
            }
        }
        Ok((total / n, grads))
    }

    /// Mutable parameter blocks in the order w₀, b₀, w₁, b₁, …
    pub(crate) fn parameters_mut(&mut self) -> impl Iterator<Item = &mut Vec<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.biases])
    }

    pub(crate) fn parameter_shapes(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.len(), l.biases.len()])
            .collect()
    }
}
