use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::SeededRng;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Fully connected layer. `weights` is row-major `[inputs x outputs]`: the
/// weight from input `i` to output `j` sits at `i * outputs + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            biases: vec![T::zero(); outputs],
        }
    }

    /// `out[b] = x[b] W + bias`.
    fn apply(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(x.rows(), self.outputs);
        for b in 0..x.rows() {
            let dst = out.row_mut(b);
            dst.copy_from_slice(&self.biases);
            for (i, &xi) in x.row(b).iter().enumerate() {
                if xi == T::zero() {
                    continue;
                }
                let w = &self.weights[i * self.outputs..(i + 1) * self.outputs];
                for (d, &wij) in dst.iter_mut().zip(w) {
                    *d = *d + xi * wij;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

/// Multi-layer perceptron: ReLU on hidden layers, identity on the output,
/// whose values are the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Dense<T>>,
    activation: Activation,
    version: u64,
}

/// Activations saved by [`Mlp::forward`]; `inputs[l]` is the input of layer `l`.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    inputs: Vec<Matrix<T>>,
    version: u64,
}

/// Parameter gradients, laid out like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::Shape(
            "a model needs at least an input and an output dimension".into(),
        ));
    }
    if dims.contains(&0) {
        return Err(Error::Shape(format!("zero-width layer in {dims:?}")));
    }
    Ok(())
}

impl<T: Scalar> Mlp<T> {
    /// All parameters zero.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            activation: Activation::Relu,
            version: 0,
        })
    }

    /// He-style initialisation: hidden weights `N(0, 2 / fan_in)`, output
    /// weights `N(0, 1 / fan_in)`, biases zero. Weights are drawn layer by
    /// layer in storage order.
    pub fn init(dims: &[usize], rng: &mut SeededRng) -> Result<Self> {
        let mut model = Self::zeros(dims)?;
        let last = model.layers.len() - 1;
        for (l, layer) in model.layers.iter_mut().enumerate() {
            let gain = if l == last { 1.0 } else { 2.0 };
            let std = (gain / layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = T::lit(std * rng.normal());
            }
        }
        Ok(model)
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("a model needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.weights.len() != layer.inputs * layer.outputs
                || layer.biases.len() != layer.outputs
            {
                return Err(Error::Shape(format!(
                    "layer {i} buffers do not match its size"
                )));
            }
            if i > 0 && layers[i - 1].outputs != layer.inputs {
                return Err(Error::Shape(format!(
                    "layer {i} expects {} inputs but layer {} has {} outputs",
                    layer.inputs,
                    i - 1,
                    layers[i - 1].outputs
                )));
            }
        }
        let dims: Vec<usize> = std::iter::once(layers[0].inputs)
            .chain(layers.iter().map(|l| l.outputs))
            .collect();
        check_dims(&dims)?;
        Ok(Self {
            layers,
            activation: Activation::Relu,
            version: 0,
        })
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn classes(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Incremented by every parameter update; forward caches remember it.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense<T>] {
        self.version += 1;
        &mut self.layers
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, model expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Logits for a `[B x d]` batch plus what [`Mlp::backward`] needs.
    pub fn forward(&self, x: &Matrix<T>) -> Result<(Matrix<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = layer.apply(&current);
            if l != last {
                relu_in_place(&mut out);
            }
            inputs.push(std::mem::replace(&mut current, out));
        }
        Ok((
            current,
            ForwardCache {
                inputs,
                version: self.version,
            },
        ))
    }

    /// Logits without keeping a cache.
    pub fn predict(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.forward(x)?.0)
    }

    /// Penultimate-layer activations (the input of the output layer). For a
    /// single-layer model this is the input itself.
    pub fn embed(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        let mut current = x.clone();
        for layer in &self.layers[..self.layers.len() - 1] {
            current = layer.apply(&current);
            relu_in_place(&mut current);
        }
        Ok(current)
    }

    /// Parameter gradients of `mean_b L_b` given `dL_b/dz_b` for every row.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        loss_grads: &Matrix<T>,
    ) -> Result<Gradients<T>> {
        if cache.version != self.version || cache.inputs.len() != self.layers.len() {
            return Err(Error::StaleCache {
                cache: cache.version,
                model: self.version,
            });
        }
        let batch = cache.inputs[0].rows();
        if loss_grads.rows() != batch || loss_grads.cols() != self.classes() {
            return Err(Error::Shape(format!(
                "loss gradients are {}x{}, expected {batch}x{}",
                loss_grads.rows(),
                loss_grads.cols(),
                self.classes()
            )));
        }
        let scale = T::one() / T::lit(batch.max(1) as f64);
        let mut delta = loss_grads.clone();
        let mut grads: Vec<Dense<T>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[l];
            let mut g = Dense::zeros(layer.inputs, layer.outputs);
            for b in 0..batch {
                let d = delta.row(b);
                for (gb, &db) in g.biases.iter_mut().zip(d) {
                    *gb = *gb + db;
                }
                for (i, &xi) in input.row(b).iter().enumerate() {
                    if xi == T::zero() {
                        continue;
                    }
                    let gw = &mut g.weights[i * layer.outputs..(i + 1) * layer.outputs];
                    for (w, &db) in gw.iter_mut().zip(d) {
                        *w = *w + xi * db;
                    }
                }
            }
            for v in g.weights.iter_mut().chain(g.biases.iter_mut()) {
                *v = *v * scale;
            }
            if l > 0 {
                // propagate through W and the ReLU that produced `input`
                let mut next = Matrix::zeros(batch, layer.inputs);
                for b in 0..batch {
                    let d = delta.row(b);
                    let x = input.row(b);
                    let dst = next.row_mut(b);
                    for i in 0..layer.inputs {
                        if x[i] > T::zero() {
                            let w = &layer.weights[i * layer.outputs..(i + 1) * layer.outputs];
                            dst[i] = w.iter().zip(d).fold(T::zero(), |acc, (&a, &c)| acc + a * c);
                        }
                    }
                }
                delta = next;
            }
            grads.push(g);
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }
}

fn relu_in_place<T: Scalar>(m: &mut Matrix<T>) {
    for b in 0..m.rows() {
        for v in m.row_mut(b) {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
    }
}
