//! Multilayer perceptrons over [`Tensor`] with Xavier-uniform init.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{NodeId, Tape};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }
}

/// One affine layer; `weight` is stored `[in_dim, out_dim]` so a batch of
/// row-vector inputs multiplies as `x @ W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// A stack of [`Linear`] layers with one activation per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activations: Vec<Activation>,
}

/// Tape handles for one MLP's parameters, in `(weight, bias)` layer order.
pub struct MlpVars {
    pub layers: Vec<(NodeId, NodeId)>,
}

impl Mlp {
    /// Xavier/Glorot-uniform weights, zero biases. `dims` chains layer
    /// sizes: `[in, h1, ..., out]`. Hidden layers use `hidden`, the last
    /// layer `output`.
    pub fn new(dims: &[usize], hidden: Activation, output: Activation, rng: &mut ChaCha8Rng) -> Mlp {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let mut layers = Vec::new();
        let mut activations = Vec::new();
        for i in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[i], dims[i + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut w = vec![0.0; fan_in * fan_out];
            for v in w.iter_mut() {
                *v = rng.random_range(-limit..limit);
            }
            layers.push(Linear {
                weight: Tensor::new(vec![fan_in, fan_out], w).expect("sized above"),
                bias: Tensor::zeros(&[fan_out]),
            });
            activations.push(if i + 2 == dims.len() { output } else { hidden });
        }
        Mlp { layers, activations }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("nonempty").weight.shape()[1]
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.in_dim()];
        d.extend(self.layers.iter().map(|l| l.weight.shape()[1]));
        d
    }

    /// Check that adjacent layer dimensions chain.
    pub fn validate(&self) -> Result<()> {
        if self.layers.len() != self.activations.len() {
            return Err(Error::Contract("one activation per layer required".into()));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            let out = pair[0].weight.shape()[1];
            let next_in = pair[1].weight.shape()[0];
            if out != next_in {
                return Err(Error::dim(
                    format!("layer {}", i + 1),
                    format!("expected in-dim {out}, found {next_in}"),
                ));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.numel() != l.weight.shape()[1] {
                return Err(Error::dim(
                    format!("layer {i}"),
                    format!(
                        "bias length {} != out-dim {}",
                        l.bias.numel(),
                        l.weight.shape()[1]
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Plain forward pass, no gradient tracking. Accepts a vector `[d]`
    /// (returns a vector) or a batch `[b, d]` (returns `[b, out]`).
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let single = input.shape().len() == 1;
        let (rows, mut cols) = (input.rows(), input.cols());
        if cols != self.in_dim() {
            return Err(Error::dim(
                "layer 0",
                format!("input dim {} != expected {}", cols, self.in_dim()),
            ));
        }
        let mut cur = input.data().to_vec();
        for (i, (layer, act)) in self.layers.iter().zip(&self.activations).enumerate() {
            let out_dim = layer.weight.shape()[1];
            if layer.weight.shape()[0] != cols {
                return Err(Error::dim(
                    format!("layer {i}"),
                    format!("input dim {} != weight in-dim {}", cols, layer.weight.shape()[0]),
                ));
            }
            let mut out = super::matmul_raw(&cur, layer.weight.data(), rows, cols, out_dim);
            for r in 0..rows {
                for c in 0..out_dim {
                    out[r * out_dim + c] = act.apply(out[r * out_dim + c] + layer.bias.data()[c]);
                }
            }
            cur = out;
            cols = out_dim;
        }
        if single {
            Ok(Tensor::vector(cur))
        } else {
            Tensor::new(vec![rows, cols], cur)
        }
    }

    /// Register this MLP's parameters on a tape.
    pub fn vars_on(&self, tape: &mut Tape) -> MlpVars {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let w = tape.param(l.weight.clone());
                let b = tape.param(l.bias.clone());
                (w, b)
            })
            .collect();
        MlpVars { layers }
    }

    /// Tracked forward pass through previously registered parameters.
    /// `input` must be a `[b, in_dim]` node.
    pub fn forward_on(&self, tape: &mut Tape, vars: &MlpVars, input: NodeId) -> Result<NodeId> {
        let mut cur = input;
        for (i, ((w, b), act)) in vars.layers.iter().zip(&self.activations).enumerate() {
            let z = tape.matmul(cur, *w).map_err(|e| match e {
                Error::Dim { detail, .. } => Error::dim(format!("layer {i}"), detail),
                other => other,
            })?;
            let z = tape.add_row(z, *b)?;
            cur = match act {
                Activation::Tanh => tape.tanh(z),
                Activation::Relu => tape.relu(z),
                Activation::Identity => z,
            };
        }
        Ok(cur)
    }

    pub fn param_tensors(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Gradients for this MLP's tape vars, aligned with `param_tensors`.
    pub fn grads_of(&self, tape: &Tape, grads: &super::Gradients, vars: &MlpVars) -> Vec<Tensor> {
        vars.layers
            .iter()
            .flat_map(|(w, b)| [grads.wrt(tape, *w), grads.wrt(tape, *b)])
            .collect()
    }

    pub fn numel(&self) -> usize {
        self.param_tensors().iter().map(|t| t.numel()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn zero_weights_pass_bias_through_identity_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut mlp = Mlp::new(&[3, 2], Activation::Identity, Activation::Identity, &mut rng);
        for l in &mut mlp.layers {
            l.weight = Tensor::zeros(&[3, 2]);
            l.bias = Tensor::vector(vec![0.25, -1.5]);
        }
        let out = mlp.forward(&Tensor::vector(vec![9.0, -3.0, 4.0])).unwrap();
        assert_eq!(out.data(), &[0.25, -1.5]);
    }

    #[test]
    fn one_by_one_affine() {
        // w = 2, b = 1, identity: f(3) = 7
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut mlp = Mlp::new(&[1, 1], Activation::Identity, Activation::Identity, &mut rng);
        mlp.layers[0].weight = Tensor::matrix(1, 1, vec![2.0]).unwrap();
        mlp.layers[0].bias = Tensor::vector(vec![1.0]);
        let out = mlp.forward(&Tensor::vector(vec![3.0])).unwrap();
        assert_eq!(out.data(), &[7.0]);
    }

    #[test]
    fn two_layer_tanh_matches_hand_rolled_forward() {
        // Oracle: scripted matrix arithmetic on the same weights, written
        // without Mlp::forward.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mlp = Mlp::new(&[2, 3, 2], Activation::Tanh, Activation::Identity, &mut rng);
        let x = [0.3, -1.1];

        let w0 = mlp.layers[0].weight.data();
        let b0 = mlp.layers[0].bias.data();
        let w1 = mlp.layers[1].weight.data();
        let b1 = mlp.layers[1].bias.data();
        let mut h = [0.0f64; 3];
        for j in 0..3 {
            h[j] = (x[0] * w0[j] + x[1] * w0[3 + j] + b0[j]).tanh();
        }
        let mut expect = [0.0f64; 2];
        for j in 0..2 {
            expect[j] = h[0] * w1[j] + h[1] * w1[2 + j] + h[2] * w1[4 + j] + b1[j];
        }

        let out = mlp.forward(&Tensor::vector(x.to_vec())).unwrap();
        for j in 0..2 {
            assert!((out.data()[j] - expect[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_input_dim_naming_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::new(&[4, 2], Activation::Tanh, Activation::Identity, &mut rng);
        let err = mlp.forward(&Tensor::vector(vec![1.0; 3])).unwrap_err();
        match err {
            Error::Dim { context, .. } => assert!(context.contains("layer 0")),
            other => panic!("expected Dim error, got {other:?}"),
        }
    }

    #[test]
    fn tracked_forward_equals_plain_forward_on_batches() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mlp = Mlp::new(&[3, 8, 2], Activation::Tanh, Activation::Identity, &mut rng);
        let batch = Tensor::matrix(4, 3, (0..12).map(|i| (i as f64) * 0.1 - 0.5).collect()).unwrap();
        let plain = mlp.forward(&batch).unwrap();

        let mut tape = Tape::new();
        let vars = mlp.vars_on(&mut tape);
        let x = tape.leaf(batch);
        let y = mlp.forward_on(&mut tape, &vars, x).unwrap();
        assert_eq!(tape.value(y).data(), plain.data());
    }
}
