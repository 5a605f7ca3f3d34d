//! Dense multilayer perceptron shared by the likelihood classifier and the
//! per-variable structure regressors. Weights are stored `in x out`, so a
//! layer maps a `B x in` batch to `B x out` as `X W + 1 b^T`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weight: DMatrix::zeros(input, output),
            bias: DVector::zeros(output),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Intermediate values kept for backpropagation. `inputs[l]` feeds layer
/// `l`; `outputs[l]` is its activated output.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub inputs: Vec<DMatrix<f64>>,
    pub preacts: Vec<DMatrix<f64>>,
    pub outputs: Vec<DMatrix<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.outputs.last().expect("network has at least one layer")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Shape(format!(
                    "layer {l} outputs {} but layer {} takes {}",
                    pair[0].output_dim(),
                    l + 1,
                    pair[1].input_dim()
                )));
            }
        }
        for layer in &layers {
            if layer.bias.len() != layer.output_dim() {
                return Err(Error::Shape("bias length differs from layer width".into()));
            }
        }
        Ok(Self { layers })
    }

    /// Random initialization. `sizes` lists every width from input to
    /// output; hidden layers get `hidden`, the last layer `output`.
    pub fn init<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "need input and output widths");
        let n_layers = sizes.len() - 1;
        let layers = (0..n_layers)
            .map(|l| {
                let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
                let activation = if l + 1 == n_layers { output } else { hidden };
                let (wb, bb) = match hidden {
                    Activation::Relu => ((6.0 / fan_in as f64).sqrt(), 0.0),
                    _ => {
                        let b = 1.0 / (fan_in as f64).sqrt();
                        (b, b)
                    }
                };
                let weight = DMatrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-wb..=wb));
                let bias = DVector::from_fn(fan_out, |_, _| {
                    if bb > 0.0 {
                        rng.random_range(-bb..=bb)
                    } else {
                        0.0
                    }
                });
                Layer {
                    weight,
                    bias,
                    activation,
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        let mut a = x.clone();
        for layer in &self.layers {
            let mut z = &a * &layer.weight;
            add_bias(&mut z, &layer.bias);
            z.apply(|v| *v = layer.activation.apply(*v));
            a = z;
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> Result<ForwardCache> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for layer in &self.layers {
            let mut z = &a * &layer.weight;
            add_bias(&mut z, &layer.bias);
            let out = z.map(|v| layer.activation.apply(v));
            inputs.push(a);
            preacts.push(z);
            a = out.clone();
            outputs.push(out);
        }
        Ok(ForwardCache {
            inputs,
            preacts,
            outputs,
        })
    }

    /// Gradients of a scalar loss given `grad_out = dL/d(output)`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &DMatrix<f64>) -> Vec<LayerGrad> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta_out = grad_out.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.preacts[l];
            let a = &cache.outputs[l];
            let mut delta = delta_out;
            for ((d, zv), av) in delta.iter_mut().zip(z.iter()).zip(a.iter()) {
                *d *= layer.activation.derivative(*zv, *av);
            }
            let weight = cache.inputs[l].transpose() * &delta;
            let bias = DVector::from_iterator(
                delta.ncols(),
                delta.column_iter().map(|c| c.sum()),
            );
            delta_out = if l > 0 {
                &delta * layer.weight.transpose()
            } else {
                DMatrix::zeros(0, 0)
            };
            grads.push(LayerGrad { weight, bias });
        }
        grads.reverse();
        grads
    }

    /// Flattened parameters, layer by layer: weight (column-major) then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut k = 0;
        for l in &mut self.layers {
            for w in l.weight.iter_mut() {
                *w = flat[k];
                k += 1;
            }
            for b in l.bias.iter_mut() {
                *b = flat[k];
                k += 1;
            }
        }
    }
}

pub fn flatten_grads(grads: &[LayerGrad]) -> Vec<f64> {
    let mut out = Vec::new();
    for g in grads {
        out.extend(g.weight.iter());
        out.extend(g.bias.iter());
    }
    out
}

fn add_bias(z: &mut DMatrix<f64>, bias: &DVector<f64>) {
    for (mut col, b) in z.column_iter_mut().zip(bias.iter()) {
        col.add_scalar_mut(*b);
    }
}

/// Adaptive-moment optimizer over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= self.learning_rate * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chain_check_rejects_mismatch() {
        let r = MlpParams::new(vec![
            Layer::zeros(3, 4, Activation::Relu),
            Layer::zeros(5, 1, Activation::Identity),
        ]);
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn flat_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = MlpParams::init(&[3, 4, 2, 1], Activation::Relu, Activation::Identity, &mut rng);
        let flat = net.to_flat();
        let mut other = MlpParams::init(&[3, 4, 2, 1], Activation::Relu, Activation::Identity, &mut rng);
        other.set_flat(&flat);
        assert_eq!(other, net);
        assert_eq!(flat.len(), 3 * 4 + 4 + 4 * 2 + 2 + 2 + 1);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for hidden in [Activation::Sigmoid, Activation::Relu] {
            let net = MlpParams::init(&[3, 5, 4, 2], hidden, Activation::Identity, &mut rng);
            let x = DMatrix::from_fn(7, 3, |_, _| rng.random_range(-2.0..2.0));
            let c = DMatrix::from_fn(7, 2, |_, _| rng.random_range(-1.0..1.0));
            // loss = sum(c .* out)
            let loss = |p: &MlpParams| p.forward(&x).unwrap().component_mul(&c).sum();
            let cache = net.forward_cached(&x).unwrap();
            let analytic = flatten_grads(&net.backward(&cache, &c));
            let flat = net.to_flat();
            let mut probe = net.clone();
            for k in 0..flat.len() {
                let mut p = flat.clone();
                p[k] += 1e-5;
                probe.set_flat(&p);
                let up = loss(&probe);
                p[k] -= 2e-5;
                probe.set_flat(&p);
                let down = loss(&probe);
                let numeric = (up - down) / 2e-5;
                let rel = (numeric - analytic[k]).abs() / numeric.abs().max(analytic[k].abs()).max(1e-6);
                assert!(rel < 1e-4, "{hidden:?} param {k}: {numeric} vs {}", analytic[k]);
            }
        }
    }

    #[test]
    fn adam_descends_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.1);
        for _ in 0..500 {
            let g = vec![2.0 * p[0], 2.0 * p[1]];
            opt.step(&mut p, &g);
        }
        assert!(p[0].abs() < 1e-2 && p[1].abs() < 1e-2);
    }
}
