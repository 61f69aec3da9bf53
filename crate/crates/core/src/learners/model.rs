//! Multi-layer perceptron with hand-written reverse accumulation.
//!
//! Layer `l` maps `h ↦ act(h W_l + b_l)`, with `W_l` stored `[in, out]`
//! row-major. The last layer is affine (no activation); losses act on its raw
//! output. Nothing here looks at the sign of the data outside the activation,
//! so the same code runs on encoded tensors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::seed::SeedTree;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative at pre-activation `v`. ReLU uses 0 at the kink.
    pub fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = v.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `[in, out]`.
    pub weights: Tensor,
    /// `[out]`.
    pub bias: Tensor,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

/// Intermediate values kept by [`ModelParams::forward_cached`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to each layer, `[batch, in]`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<f64>>,
    batch: usize,
    pub output: Tensor,
}

impl ModelParams {
    /// Layer widths `sizes[0] → sizes[1] → …`, Glorot-uniform weights, zero bias.
    pub fn init(sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return invalid(format!(
                "model needs at least two positive widths, got {sizes:?}"
            ));
        }
        let mut rng = SeedTree::new(seed).rng();
        let layers = sizes
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let data = (0..w[0] * w[1])
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                Layer {
                    weights: Tensor::matrix(w[0], w[1], data).expect("init shape"),
                    bias: Tensor::zeros(vec![w[1]]),
                }
            })
            .collect();
        Ok(ModelParams { layers, activation })
    }

    pub fn from_layers(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return invalid("model has no layers");
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.rank() != 2 || l.bias.shape() != [l.outputs()] {
                return invalid(format!(
                    "layer {i}: weights must be [in,out] and bias [out]"
                ));
            }
            if i > 0 && layers[i - 1].outputs() != l.inputs() {
                return invalid(format!(
                    "layer {i}: input width does not match previous layer"
                ));
            }
        }
        Ok(ModelParams { layers, activation })
    }

    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                weights: Tensor::zeros(l.weights.shape().to_vec()),
                bias: Tensor::zeros(l.bias.shape().to_vec()),
            })
            .collect();
        ModelParams {
            layers,
            activation: self.activation,
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// All parameters in the order `W_0, b_0, W_1, b_1, …`.
    pub fn flatten(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            data.extend_from_slice(l.weights.data());
            data.extend_from_slice(l.bias.data());
        }
        Tensor::from_vec(data)
    }

    /// Inverse of [`ModelParams::flatten`], using `self` as the shape template.
    pub fn unflatten(&self, flat: &Tensor) -> Result<ModelParams> {
        if flat.len() != self.param_count() {
            return invalid(format!(
                "flat parameter tensor has {} elements, model needs {}",
                flat.len(),
                self.param_count()
            ));
        }
        let data = flat.data();
        let mut at = 0;
        let mut take = |shape: &[usize]| {
            let n: usize = shape.iter().product();
            let t = Tensor::new(shape.to_vec(), data[at..at + n].to_vec()).expect("template shape");
            at += n;
            t
        };
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                weights: take(l.weights.shape()),
                bias: take(l.bias.shape()),
            })
            .collect();
        Ok(ModelParams {
            layers,
            activation: self.activation,
        })
    }

    fn check_inputs(&self, inputs: &Tensor) -> Result<usize> {
        if inputs.rank() != 2 || inputs.shape()[1] != self.input_width() {
            return invalid(format!(
                "inputs must be [batch, {}], got {:?}",
                self.input_width(),
                inputs.shape()
            ));
        }
        Ok(inputs.shape()[0])
    }

    pub fn forward(&self, inputs: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(inputs)?.output)
    }

    pub fn forward_cached(&self, inputs: &Tensor) -> Result<ForwardCache> {
        let batch = self.check_inputs(inputs)?;
        let last = self.layers.len() - 1;
        let mut h = inputs.data().to_vec();
        let mut cache_in = Vec::with_capacity(self.layers.len());
        let mut cache_pre = Vec::with_capacity(last);
        for (i, layer) in self.layers.iter().enumerate() {
            let z = affine(&h, batch, layer);
            cache_in.push(h);
            if i == last {
                h = z;
            } else {
                h = z.iter().map(|&v| self.activation.apply(v)).collect();
                cache_pre.push(z);
            }
        }
        let output = Tensor::matrix(batch, self.output_width(), h)?;
        Ok(ForwardCache {
            inputs: cache_in,
            pre: cache_pre,
            batch,
            output,
        })
    }

    /// Parameter gradients given `dL/d output` at the cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &Tensor) -> Result<ModelParams> {
        if output_grad.shape() != cache.output.shape() {
            return invalid(format!(
                "output gradient shape {:?} does not match output {:?}",
                output_grad.shape(),
                cache.output.shape()
            ));
        }
        let batch = cache.batch;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut dz = output_grad.data().to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (n_in, n_out) = (layer.inputs(), layer.outputs());
            let h = &cache.inputs[i];
            let mut dw = vec![0.0; n_in * n_out];
            let mut db = vec![0.0; n_out];
            for r in 0..batch {
                let dzr = &dz[r * n_out..(r + 1) * n_out];
                let hr = &h[r * n_in..(r + 1) * n_in];
                for (a, &hv) in hr.iter().enumerate() {
                    let row = &mut dw[a * n_out..(a + 1) * n_out];
                    for (o, &g) in dzr.iter().enumerate() {
                        row[o] += hv * g;
                    }
                }
                for (o, &g) in dzr.iter().enumerate() {
                    db[o] += g;
                }
            }
            if i > 0 {
                let w = layer.weights.data();
                let pre = &cache.pre[i - 1];
                let mut prev = vec![0.0; batch * n_in];
                for r in 0..batch {
                    for a in 0..n_in {
                        let mut acc = 0.0;
                        for o in 0..n_out {
                            acc += w[a * n_out + o] * dz[r * n_out + o];
                        }
                        prev[r * n_in + a] = acc * self.activation.derivative(pre[r * n_in + a]);
                    }
                }
                dz = prev;
            }
            grads.push(Layer {
                weights: Tensor::matrix(n_in, n_out, dw)?,
                bias: Tensor::from_vec(db),
            });
        }
        grads.reverse();
        Ok(ModelParams {
            layers: grads,
            activation: self.activation,
        })
    }

    /// `self + a · other`, layer by layer.
    pub fn add_scaled(&self, a: f64, other: &ModelParams) -> Result<ModelParams> {
        if self.layers.len() != other.layers.len() {
            return invalid("models have different depths");
        }
        let layers = self
            .layers
            .iter()
            .zip(&other.layers)
            .map(|(p, g)| {
                let mut w = p.weights.clone();
                w.axpy(a, &g.weights)?;
                let mut b = p.bias.clone();
                b.axpy(a, &g.bias)?;
                Ok(Layer {
                    weights: w,
                    bias: b,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelParams {
            layers,
            activation: self.activation,
        })
    }

    pub fn sgd_step(&self, grads: &ModelParams, lr: f64) -> Result<ModelParams> {
        if !(lr > 0.0 && lr.is_finite()) {
            return invalid(format!("learning rate must be positive, got {lr}"));
        }
        self.add_scaled(-lr, grads)
    }
}

fn affine(h: &[f64], batch: usize, layer: &Layer) -> Vec<f64> {
    let (n_in, n_out) = (layer.inputs(), layer.outputs());
    let w = layer.weights.data();
    let b = layer.bias.data();
    let mut z = Vec::with_capacity(batch * n_out);
    for r in 0..batch {
        let hr = &h[r * n_in..(r + 1) * n_in];
        let mut row = b.to_vec();
        for (a, &hv) in hr.iter().enumerate() {
            let wa = &w[a * n_out..(a + 1) * n_out];
            for o in 0..n_out {
                row[o] += hv * wa[o];
            }
        }
        z.extend(row);
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_layer() -> ModelParams {
        // 2 → 3 → 1
        let l0 = Layer {
            weights: Tensor::matrix(2, 3, vec![1.0, -1.0, 0.5, 2.0, 0.0, -0.5]).unwrap(),
            bias: Tensor::from_vec(vec![0.0, 1.0, -1.0]),
        };
        let l1 = Layer {
            weights: Tensor::matrix(3, 1, vec![1.0, 2.0, -3.0]).unwrap(),
            bias: Tensor::from_vec(vec![0.25]),
        };
        ModelParams::from_layers(vec![l0, l1], Activation::Relu).unwrap()
    }

    #[test]
    fn golden_two_layer_relu() {
        let m = two_layer();
        let x = Tensor::matrix(2, 2, vec![1.0, 1.0, -1.0, 2.0]).unwrap();
        // row 0: z = [3, 0, -1] -> relu [3, 0, 0] -> 3 + 0.25
        // row 1: z = [3, 2, -2.5] -> relu [3, 2, 0] -> 3 + 4 + 0.25
        let y = m.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 1]);
        assert_eq!(y.data(), &[3.25, 7.25]);
    }

    #[test]
    fn zero_model_gives_zero_output() {
        let m = two_layer().zeros_like();
        let x = Tensor::matrix(1, 2, vec![3.0, -7.0]).unwrap();
        assert_eq!(m.forward(&x).unwrap().data(), &[0.0]);
    }

    #[test]
    fn identity_layer_passes_inputs() {
        let l = Layer {
            weights: Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            bias: Tensor::zeros(vec![2]),
        };
        let m = ModelParams::from_layers(vec![l], Activation::Identity).unwrap();
        let x = Tensor::matrix(2, 2, vec![1.5, -2.0, 0.0, 4.0]).unwrap();
        assert_eq!(m.forward(&x).unwrap().data(), x.data());
    }

    #[test]
    fn flatten_roundtrip_and_order() {
        let m = two_layer();
        let flat = m.flatten();
        assert_eq!(flat.len(), m.param_count());
        assert_eq!(&flat.data()[..6], m.layers[0].weights.data());
        assert_eq!(&flat.data()[6..9], m.layers[0].bias.data());
        assert_eq!(m.unflatten(&flat).unwrap(), m);
        assert!(m.unflatten(&Tensor::from_vec(vec![0.0; 3])).is_err());
    }

    #[test]
    fn sgd_steps() {
        let m = two_layer();
        let zero = m.zeros_like();
        assert_eq!(m.sgd_step(&zero, 0.1).unwrap(), m);
        let g = m.clone();
        let neg = zero.sgd_step(&g, 1.0).unwrap();
        assert_eq!(neg.flatten().data(), g.flatten().scale(-1.0).data());
        let two = m.sgd_step(&g, 0.1).unwrap().sgd_step(&g, 0.1).unwrap();
        let once = m.sgd_step(&g.add_scaled(1.0, &g).unwrap(), 0.1).unwrap();
        assert!(two.flatten().max_abs_diff(&once.flatten()).unwrap() < 1e-15);
        assert!(m.sgd_step(&g, 0.0).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        let m = two_layer();
        assert!(m
            .forward(&Tensor::matrix(1, 3, vec![0.0; 3]).unwrap())
            .is_err());
        assert!(ModelParams::init(&[3], Activation::Tanh, 0).is_err());
    }
}
