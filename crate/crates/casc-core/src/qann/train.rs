//! Minimal straight-through trainer for toy fully connected models.
//!
//! Gradients flow through the quantized activation with the straight-through
//! estimator: derivative 1 where the pre-activation lies in (0,1), 0
//! elsewhere. Plain SGD over shuffled minibatches; conv/pool stacks are out
//! of scope for this trainer.

use crate::error::CascError;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::Result;

use super::{cqrelu, LayerSpec, QNetwork};

/// Loss functions the trainer understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Softmax cross-entropy against one-hot targets.
    CrossEntropy,
    /// Sum of squared errors over the output vector.
    SquaredError,
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct Hyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub loss: Loss,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            lr: 0.1,
            epochs: 60,
            batch: 16,
            seed: 0,
            loss: Loss::CrossEntropy,
        }
    }
}

/// What a training run produced.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Mean loss per epoch, in order.
    pub epoch_losses: Vec<f64>,
    /// Fraction of training samples whose argmax matches the target argmax.
    pub train_accuracy: f64,
}

struct ForwardCache {
    /// Pre-activations per layer.
    zs: Vec<Vec<f64>>,
    /// Post-activation (quantized) outputs per layer; last entry raw logits.
    acts: Vec<Vec<f64>>,
}

fn linear_layers(net: &QNetwork) -> Result<Vec<(usize, usize)>> {
    net.layers
        .iter()
        .enumerate()
        .map(|(i, l)| match l {
            LayerSpec::Linear { weight, .. } => Ok((weight.shape()[0], weight.shape()[1])),
            other => Err(CascError::InvalidModel(format!(
                "train_ste supports linear stacks only; layer {i} is {}",
                other.kind_name()
            ))),
        })
        .collect()
}

fn forward_cached(net: &QNetwork, input: &[f64]) -> ForwardCache {
    let q = net.q();
    let mut cur = input.to_vec();
    let mut zs = Vec::with_capacity(net.layers.len());
    let mut acts = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        let LayerSpec::Linear { weight, bias, activated } = layer else {
            unreachable!("checked by linear_layers");
        };
        let (n_out, n_in) = (weight.shape()[0], weight.shape()[1]);
        let w = weight.data();
        let mut z = vec![0.0; n_out];
        for i in 0..n_out {
            let mut acc = 0.0;
            for j in 0..n_in {
                acc += w[i * n_in + j] * cur[j];
            }
            if let Some(b) = bias {
                acc += b.data()[i];
            }
            z[i] = acc;
        }
        let a: Vec<f64> = if *activated {
            z.iter().map(|&x| cqrelu(x, q)).collect()
        } else {
            z.clone()
        };
        zs.push(z);
        cur = a.clone();
        acts.push(a);
    }
    ForwardCache { zs, acts }
}

fn loss_and_grad(loss: Loss, logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    match loss {
        Loss::SquaredError => {
            let mut grad = vec![0.0; logits.len()];
            let mut l = 0.0;
            for i in 0..logits.len() {
                let d = logits[i] - target[i];
                l += d * d;
                grad[i] = 2.0 * d;
            }
            (l, grad)
        }
        Loss::CrossEntropy => {
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let mut l = 0.0;
            let mut grad = vec![0.0; logits.len()];
            for i in 0..logits.len() {
                let p = exps[i] / sum;
                if target[i] > 0.0 {
                    l -= target[i] * (p.max(1e-300)).ln();
                }
                grad[i] = p - target[i];
            }
            (l, grad)
        }
    }
}

/// Mean loss over a dataset without touching weights.
pub fn mean_loss(net: &QNetwork, data: &[(Tensor, Tensor)], loss: Loss) -> f64 {
    let total: f64 = data
        .iter()
        .map(|(x, y)| {
            let cache = forward_cached(net, x.data());
            loss_and_grad(loss, cache.acts.last().unwrap(), y.data()).0
        })
        .sum();
    total / data.len() as f64
}

/// Argmax-accuracy over a dataset.
pub fn accuracy(net: &QNetwork, data: &[(Tensor, Tensor)]) -> f64 {
    let argmax = |v: &[f64]| {
        v.iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap()
    };
    let hits = data
        .iter()
        .filter(|(x, y)| {
            let cache = forward_cached(net, x.data());
            argmax(cache.acts.last().unwrap()) == argmax(y.data())
        })
        .count();
    hits as f64 / data.len() as f64
}

/// SGD with the straight-through estimator. Mutates the network in place and
/// reports the loss trajectory.
pub fn train_ste(net: &mut QNetwork, data: &[(Tensor, Tensor)], hyper: &Hyper) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(CascError::InvalidModel("training dataset is empty".into()));
    }
    let dims = linear_layers(net)?;
    if data[0].0.len() != dims[0].1 {
        return Err(CascError::shape(
            "train_ste input",
            format!("{} features", dims[0].1),
            format!("{}", data[0].0.len()),
        ));
    }

    let initial_loss = mean_loss(net, data, hyper.loss);
    let mut rng = Rng::new(hyper.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    let batch = hyper.batch.max(1);

    for epoch in 0..hyper.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;

        for chunk in order.chunks(batch) {
            // Accumulate batch gradients.
            let mut grad_w: Vec<Vec<f64>> = dims.iter().map(|&(o, i)| vec![0.0; o * i]).collect();
            let mut grad_b: Vec<Vec<f64>> = dims.iter().map(|&(o, _)| vec![0.0; o]).collect();
            let mut batch_loss = 0.0;

            for &idx in chunk {
                let (x, y) = &data[idx];
                let cache = forward_cached(net, x.data());
                let (l, mut delta) = loss_and_grad(hyper.loss, cache.acts.last().unwrap(), y.data());
                batch_loss += l;

                for li in (0..net.layers.len()).rev() {
                    let (n_out, n_in) = dims[li];
                    let prev: &[f64] = if li == 0 { x.data() } else { &cache.acts[li - 1] };
                    for i in 0..n_out {
                        for j in 0..n_in {
                            grad_w[li][i * n_in + j] += delta[i] * prev[j];
                        }
                        grad_b[li][i] += delta[i];
                    }
                    if li > 0 {
                        let LayerSpec::Linear { weight, .. } = &net.layers[li] else {
                            unreachable!()
                        };
                        let w = weight.data();
                        let mut prev_delta = vec![0.0; n_in];
                        for j in 0..n_in {
                            let mut acc = 0.0;
                            for i in 0..n_out {
                                acc += w[i * n_in + j] * delta[i];
                            }
                            // Straight-through gate on the previous layer's
                            // pre-activation.
                            let z = cache.zs[li - 1][j];
                            prev_delta[j] = if z > 0.0 && z < 1.0 { acc } else { 0.0 };
                        }
                        delta = prev_delta;
                    }
                }
            }

            if !batch_loss.is_finite() {
                return Err(CascError::TrainDiverged(format!(
                    "non-finite loss in epoch {epoch}"
                )));
            }
            epoch_loss += batch_loss;

            let scale = hyper.lr / chunk.len() as f64;
            for (li, layer) in net.layers.iter_mut().enumerate() {
                let LayerSpec::Linear { weight, bias, .. } = layer else {
                    unreachable!()
                };
                let w = weight.data_mut();
                for (wv, g) in w.iter_mut().zip(&grad_w[li]) {
                    *wv -= scale * g;
                }
                if let Some(b) = bias {
                    for (bv, g) in b.data_mut().iter_mut().zip(&grad_b[li]) {
                        *bv -= scale * g;
                    }
                }
            }
        }
        epoch_losses.push(epoch_loss / data.len() as f64);
    }

    let final_loss = mean_loss(net, data, hyper.loss);
    if !final_loss.is_finite() {
        return Err(CascError::TrainDiverged("non-finite final loss".into()));
    }
    Ok(TrainReport {
        initial_loss,
        final_loss,
        epoch_losses,
        train_accuracy: accuracy(net, data),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qann::synth;

    #[test]
    fn zero_learning_rate_keeps_weights_bit_exact() {
        let mut net = synth::mlp_from_sizes(&[2, 8, 2], 8, 3);
        let reference = net.clone();
        let data = synth::blobs(20, 1);
        let hyper = Hyper {
            lr: 0.0,
            epochs: 3,
            ..Hyper::default()
        };
        train_ste(&mut net, &data, &hyper).unwrap();
        assert_eq!(net, reference);
    }

    #[test]
    fn single_sgd_step_matches_hand_gradient() {
        // One activated 1×1 layer (w1=0.4) into an identity output layer
        // (w2=1.0), input 1.0, target 0.9, squared loss, Q=8, lr=0.1.
        //
        //   a1 = cqrelu(0.4) = 0.375, logits = w2·a1
        //   dL/dŷ = 2(ŷ − y); grad_w2 = dL/dŷ·a1; grad_w1 = dL/dŷ·w2·x
        // (the pre-activation 0.4 lies in (0,1), so the straight-through
        // gate passes the gradient unchanged).
        let w = |v: f64, activated| LayerSpec::Linear {
            weight: Tensor::new(vec![1, 1], vec![v]).unwrap(),
            bias: None,
            activated,
        };
        let mut net = QNetwork::new(vec![w(0.4, true), w(1.0, false)], 8, "tiny", 0).unwrap();
        let data = vec![(
            Tensor::from_vec(vec![1.0]).unwrap(),
            Tensor::from_vec(vec![0.9]).unwrap(),
        )];
        let hyper = Hyper {
            lr: 0.1,
            epochs: 1,
            batch: 1,
            seed: 0,
            loss: Loss::SquaredError,
        };
        train_ste(&mut net, &data, &hyper).unwrap();

        let a1 = 0.375;
        let dl = 2.0 * (a1 - 0.9);
        let expect_w2 = 1.0 - 0.1 * (dl * a1);
        let expect_w1 = 0.4 - 0.1 * (dl * 1.0 * 1.0);
        let got_w1 = net.layers[0].weight().unwrap().data()[0];
        let got_w2 = net.layers[1].weight().unwrap().data()[0];
        assert!((got_w1 - expect_w1).abs() < 1e-12, "{got_w1} vs {expect_w1}");
        assert!((got_w2 - expect_w2).abs() < 1e-12, "{got_w2} vs {expect_w2}");
    }

    #[test]
    fn dead_pre_activation_blocks_gradient() {
        // First layer output sits above the clip region (z = 1.5 ∉ (0,1)), so
        // the straight-through gate zeroes the upstream gradient and only the
        // output layer moves.
        let w = |v: f64, activated| LayerSpec::Linear {
            weight: Tensor::new(vec![1, 1], vec![v]).unwrap(),
            bias: None,
            activated,
        };
        let mut net = QNetwork::new(vec![w(1.5, true), w(1.0, false)], 8, "dead", 0).unwrap();
        let data = vec![(
            Tensor::from_vec(vec![1.0]).unwrap(),
            Tensor::from_vec(vec![0.9]).unwrap(),
        )];
        let hyper = Hyper {
            lr: 0.1,
            epochs: 1,
            batch: 1,
            seed: 0,
            loss: Loss::SquaredError,
        };
        train_ste(&mut net, &data, &hyper).unwrap();
        assert_eq!(net.layers[0].weight().unwrap().data()[0], 1.5);
        assert_ne!(net.layers[1].weight().unwrap().data()[0], 1.0);
    }

    #[test]
    fn blobs_task_reaches_95_percent() {
        let data = synth::blobs(100, 7);
        let mut net = synth::mlp_from_sizes(&[2, 16, 2], 8, 7);
        let report = train_ste(&mut net, &data, &Hyper::default()).unwrap();
        assert!(
            report.train_accuracy >= 0.95,
            "accuracy {}",
            report.train_accuracy
        );
        assert!(report.final_loss < report.initial_loss);
    }

    #[test]
    fn rings_loss_decreases() {
        let data = synth::rings(80, 7);
        let mut net = synth::mlp_from_sizes(&[2, 24, 2], 8, 7);
        let report = train_ste(&mut net, &data, &Hyper::default()).unwrap();
        assert!(report.final_loss < report.initial_loss);
    }

    #[test]
    fn rejects_conv_stacks() {
        let mut net = synth::bundled_cnn(8);
        let data = synth::blobs(4, 0);
        assert!(train_ste(&mut net, &data, &Hyper::default()).is_err());
    }

    #[test]
    fn empty_dataset_rejected() {
        let mut net = synth::mlp_from_sizes(&[2, 4, 2], 8, 0);
        assert!(train_ste(&mut net, &[], &Hyper::default()).is_err());
    }
}
