//! Finite-difference checks of each layer in isolation.
//!
//! Every layer is wrapped in a scalar objective: a fixed random weighting of
//! its output summed up (softmax cross-entropy is already a scalar). Inputs
//! are parameters too, so input gradients are checked alongside weights.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::gradcheck::{finite_diff_check, GradCheckConfig, GradCheckReport, Objective};
use super::{
    conv1d_maxpool, conv1d_maxpool_backward, dense, dense_backward, embed_backward, embed_lookup,
    relu, relu_backward, softmax_cross_entropy, softmax_cross_entropy_backward, GradientReversal,
    Parameter, Tensor,
};
use crate::rng::{self, Rng};
use crate::Result;

fn weighted_sum(y: &Tensor, r: &Tensor) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn accumulate(p: &mut Parameter, g: &Tensor) {
    for (a, b) in p.grad.data_mut().iter_mut().zip(g.data()) {
        *a += b;
    }
}

fn zero_all(params: &mut [Parameter]) {
    for p in params {
        p.zero_grad();
    }
}

#[derive(Clone, Copy)]
enum Layer {
    Dense,
    Relu,
    Embedding,
    Conv,
    Softmax,
    Reversal,
}

/// A layer, its parameters (inputs first) and the output weighting.
struct LayerObjective {
    layer: Layer,
    params: Vec<Parameter>,
    weights: Tensor,
    ids: Vec<usize>,
    labels: Vec<usize>,
    reversal: GradientReversal,
}

impl LayerObjective {
    fn new(layer: Layer, lambda: f64, seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, rng::GRADCHECK, 1 + layer as u64);
        let random = |shape: &[usize], lo: f64, hi: f64, r: &mut Rng| -> Result<Tensor> {
            let n = shape.iter().product();
            Tensor::from_vec(shape, (0..n).map(|_| r.gen_range(lo..hi)).collect())
        };
        let param = |name: &str, t: Tensor| Parameter::new(name, t);
        let (params, weights) = match layer {
            Layer::Dense => (
                vec![
                    param("dense.input", random(&[3, 4], -1.0, 1.0, &mut r)?),
                    param("dense.weight", random(&[4, 5], -1.0, 1.0, &mut r)?),
                    param("dense.bias", random(&[5], -1.0, 1.0, &mut r)?),
                ],
                random(&[3, 5], -1.0, 1.0, &mut r)?,
            ),
            Layer::Relu => {
                // Keep inputs off the kink at zero.
                let mut x = random(&[3, 5], 0.1, 1.0, &mut r)?;
                for v in x.data_mut() {
                    if r.gen_bool(0.5) {
                        *v = -*v;
                    }
                }
                (
                    vec![param("relu.input", x)],
                    random(&[3, 5], -1.0, 1.0, &mut r)?,
                )
            }
            Layer::Embedding => (
                vec![param(
                    "embedding.table",
                    random(&[6, 4], -1.0, 1.0, &mut r)?,
                )],
                random(&[5, 4], -1.0, 1.0, &mut r)?,
            ),
            Layer::Conv => (
                vec![
                    param("conv.input", random(&[6, 4], -1.0, 1.0, &mut r)?),
                    param("conv.filters", random(&[2, 4, 3], -1.0, 1.0, &mut r)?),
                    param("conv.bias", random(&[3], 0.5, 1.0, &mut r)?),
                ],
                random(&[3], -1.0, 1.0, &mut r)?,
            ),
            Layer::Softmax => (
                vec![param("softmax.logits", random(&[4, 3], -2.0, 2.0, &mut r)?)],
                Tensor::zeros(&[1])?,
            ),
            Layer::Reversal => (
                vec![
                    param("reversal.input", random(&[3, 4], -1.0, 1.0, &mut r)?),
                    param("reversal.head.weight", random(&[4, 2], -1.0, 1.0, &mut r)?),
                    param("reversal.head.bias", random(&[2], -1.0, 1.0, &mut r)?),
                ],
                random(&[3, 2], -1.0, 1.0, &mut r)?,
            ),
        };
        Ok(LayerObjective {
            layer,
            params,
            weights,
            ids: vec![1, 3, 3, 0, 5],
            labels: vec![0, 2, 1, 2],
            reversal: GradientReversal::new(lambda)?,
        })
    }
}

impl Objective for LayerObjective {
    fn parameters(&mut self) -> Vec<&mut Parameter> {
        self.params.iter_mut().collect()
    }

    fn loss(&mut self) -> Result<f64> {
        let p = &self.params;
        let r = &self.weights;
        Ok(match self.layer {
            Layer::Dense => weighted_sum(&dense(&p[0].value, &p[1], &p[2])?, r),
            Layer::Relu => weighted_sum(&relu(&p[0].value), r),
            Layer::Embedding => weighted_sum(&embed_lookup(&self.ids, &p[0])?, r),
            Layer::Conv => weighted_sum(&conv1d_maxpool(&p[0].value, &p[1], &p[2])?.output, r),
            Layer::Softmax => softmax_cross_entropy(&p[0].value, &self.labels)?.0,
            Layer::Reversal => {
                let h = self.reversal.forward(&p[0].value);
                weighted_sum(&dense(&h, &p[1], &p[2])?, r)
            }
        })
    }

    /// Behind the reversal the input follows `-lambda` times the loss.
    fn loss_seen_by(&mut self, param: usize) -> Result<f64> {
        let l = self.loss()?;
        Ok(match (self.layer, param) {
            (Layer::Reversal, 0) => -self.reversal.lambda() * l,
            _ => l,
        })
    }

    fn gradient(&mut self) -> Result<f64> {
        zero_all(&mut self.params);
        let loss = self.loss()?;
        let r = self.weights.clone();
        match self.layer {
            Layer::Dense => {
                let [x, w, b] = &mut self.params[..] else {
                    unreachable!()
                };
                let dx = dense_backward(&x.value, w, b, &r)?;
                accumulate(x, &dx);
            }
            Layer::Relu => {
                let x = &mut self.params[0];
                let dx = relu_backward(&x.value, &r)?;
                accumulate(x, &dx);
            }
            Layer::Embedding => embed_backward(&self.ids, &mut self.params[0], &r)?,
            Layer::Conv => {
                let [x, f, b] = &mut self.params[..] else {
                    unreachable!()
                };
                let pool = conv1d_maxpool(&x.value, f, b)?;
                let dx = conv1d_maxpool_backward(&x.value, f, b, &pool, r.data())?;
                accumulate(x, &dx);
            }
            Layer::Softmax => {
                let x = &mut self.params[0];
                let (_, probs) = softmax_cross_entropy(&x.value, &self.labels)?;
                let dx = softmax_cross_entropy_backward(&probs, &self.labels)?;
                accumulate(x, &dx);
            }
            Layer::Reversal => {
                let [x, w, b] = &mut self.params[..] else {
                    unreachable!()
                };
                let h = self.reversal.forward(&x.value);
                let dh = dense_backward(&h, w, b, &r)?;
                accumulate(x, &self.reversal.backward(&dh));
            }
        }
        Ok(loss)
    }
}

/// Names of the layers [`check_layers`] covers.
pub const LAYERS: [&str; 6] = [
    "dense",
    "relu",
    "embedding",
    "conv1d_maxpool",
    "softmax_cross_entropy",
    "grad_reverse",
];

/// Checks every layer; the reversal runs at `lambda`.
pub fn check_layers(
    lambda: f64,
    config: &GradCheckConfig,
) -> Result<Vec<(String, GradCheckReport)>> {
    let layers = [
        Layer::Dense,
        Layer::Relu,
        Layer::Embedding,
        Layer::Conv,
        Layer::Softmax,
        Layer::Reversal,
    ];
    layers
        .iter()
        .zip(LAYERS)
        .map(|(&layer, name)| {
            let mut obj = LayerObjective::new(layer, lambda, config.seed)?;
            Ok((String::from(name), finite_diff_check(&mut obj, config)?))
        })
        .collect()
}
