//! Quantized ANN: clip-quantized ReLU activation, layer graph, forward pass,
//! batch-norm folding, a minimal straight-through trainer and model files.

mod io;
pub mod synth;
mod train;

pub use io::{load_model, model_from_json, model_to_json, save_model};
pub use train::{train_ste, Hyper, Loss, TrainReport};

use crate::error::CascError;
use crate::tensor::{self, Tensor};
use crate::Result;

/// Quantization settings. The threshold is fixed at 1.0; quantized
/// activations live on the grid {0, 1/Q, ..., 1}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantConfig {
    pub q: u32,
    pub v_th: f64,
}

impl QuantConfig {
    pub fn new(q: u32) -> Result<Self> {
        if q < 1 {
            return Err(CascError::InvalidModel("quantization level Q must be ≥ 1".into()));
        }
        Ok(QuantConfig { q, v_th: 1.0 })
    }
}

/// One layer of the network. Every layer except the last is followed by the
/// quantized activation; the last produces raw logits.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Linear {
        weight: Tensor,
        bias: Option<Tensor>,
        activated: bool,
    },
    Conv2d {
        weight: Tensor,
        bias: Option<Tensor>,
        stride: usize,
        padding: usize,
        activated: bool,
    },
    AvgPool2d {
        k: usize,
        stride: usize,
        activated: bool,
    },
}

impl LayerSpec {
    pub fn activated(&self) -> bool {
        match self {
            LayerSpec::Linear { activated, .. }
            | LayerSpec::Conv2d { activated, .. }
            | LayerSpec::AvgPool2d { activated, .. } => *activated,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Linear { .. } => "linear",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::AvgPool2d { .. } => "avgpool2d",
        }
    }

    pub fn weight(&self) -> Option<&Tensor> {
        match self {
            LayerSpec::Linear { weight, .. } | LayerSpec::Conv2d { weight, .. } => Some(weight),
            LayerSpec::AvgPool2d { .. } => None,
        }
    }

    pub fn bias(&self) -> Option<&Tensor> {
        match self {
            LayerSpec::Linear { bias, .. } | LayerSpec::Conv2d { bias, .. } => bias.as_ref(),
            LayerSpec::AvgPool2d { .. } => None,
        }
    }

    /// Apply the layer's linear operation (no activation). `with_bias`
    /// false drops the bias term, which the wake-sleep schedule uses to
    /// gate biases off during the sleep phase.
    pub fn apply(&self, input: &Tensor, with_bias: bool) -> Result<Tensor> {
        match self {
            LayerSpec::Linear { weight, bias, .. } => {
                let b = if with_bias { bias.as_ref() } else { None };
                tensor::linear(input, weight, b)
            }
            LayerSpec::Conv2d {
                weight,
                bias,
                stride,
                padding,
                ..
            } => {
                let b = if with_bias { bias.as_ref() } else { None };
                tensor::conv2d(input, weight, b, *stride, *padding)
            }
            LayerSpec::AvgPool2d { k, stride, .. } => tensor::avgpool2d(input, *k, *stride),
        }
    }
}

/// Ordered layer stack plus quantization config.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub layers: Vec<LayerSpec>,
    pub config: QuantConfig,
    pub name: String,
    pub seed: u64,
}

impl QNetwork {
    pub fn new(layers: Vec<LayerSpec>, q: u32, name: impl Into<String>, seed: u64) -> Result<Self> {
        let net = QNetwork {
            layers,
            config: QuantConfig::new(q)?,
            name: name.into(),
            seed,
        };
        net.validate()?;
        Ok(net)
    }

    /// Structural invariants: at least one layer, exactly the last one
    /// un-activated, finite weights, sane geometry. Shape composition across
    /// layers is checked at forward time with a dimension report.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(CascError::InvalidModel("network has no layers".into()));
        }
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let want_activated = i != last;
            if layer.activated() != want_activated {
                return Err(CascError::InvalidModel(format!(
                    "layer {i} ({}) has activated={}, but exactly the final layer must be un-activated",
                    layer.kind_name(),
                    layer.activated()
                )));
            }
            match layer {
                LayerSpec::Linear { weight, bias, .. } => {
                    if weight.shape().len() != 2 {
                        return Err(CascError::InvalidModel(format!(
                            "layer {i}: linear weight must be 2-D, got {:?}",
                            weight.shape()
                        )));
                    }
                    if let Some(b) = bias {
                        if b.len() != weight.shape()[0] {
                            return Err(CascError::InvalidModel(format!(
                                "layer {i}: bias length {} != output size {}",
                                b.len(),
                                weight.shape()[0]
                            )));
                        }
                    }
                }
                LayerSpec::Conv2d { weight, stride, .. } => {
                    if weight.shape().len() != 4 || weight.shape()[2] != weight.shape()[3] {
                        return Err(CascError::InvalidModel(format!(
                            "layer {i}: conv weight must be [F,C,k,k], got {:?}",
                            weight.shape()
                        )));
                    }
                    if *stride == 0 {
                        return Err(CascError::InvalidModel(format!("layer {i}: zero stride")));
                    }
                }
                LayerSpec::AvgPool2d { k, stride, .. } => {
                    if *k == 0 || *stride == 0 {
                        return Err(CascError::InvalidModel(format!(
                            "layer {i}: pool window and stride must be ≥ 1"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn q(&self) -> u32 {
        self.config.q
    }

    /// Number of activated (spiking, after conversion) layers.
    pub fn activated_layers(&self) -> usize {
        self.layers.iter().filter(|l| l.activated()).count()
    }
}

/// Clip-quantized ReLU: `Clip(⌊x·Q⌋/Q, 0, 1)`. Total on finite reals; the
/// output is an exact multiple of 1/Q.
pub fn cqrelu(x: f64, q: u32) -> f64 {
    quantize_level(x, q) as f64 / q as f64
}

/// The integer level `Clip(⌊x·Q⌋, 0, Q)`, i.e. `cqrelu(x,Q)·Q` without
/// leaving the integer domain. Spike-count comparisons use this directly.
pub fn quantize_level(x: f64, q: u32) -> i64 {
    (x * q as f64).floor().clamp(0.0, q as f64) as i64
}

fn cqrelu_tensor(t: &Tensor, q: u32) -> Tensor {
    let data = t.data().iter().map(|&x| cqrelu(x, q)).collect();
    Tensor::new(t.shape().to_vec(), data).expect("activation preserves shape and finiteness")
}

/// Forward-pass outputs: raw logits plus the quantized activation of every
/// activated layer (and the same values as integer levels, `a·Q`).
#[derive(Debug, Clone)]
pub struct AnnOutputs {
    pub logits: Tensor,
    pub activations: Vec<Tensor>,
    pub levels: Vec<Vec<i64>>,
}

/// Run the quantized forward pass.
pub fn ann_forward(net: &QNetwork, input: &Tensor) -> Result<AnnOutputs> {
    let q = net.q();
    let mut cur = input.clone();
    let mut activations = Vec::new();
    let mut levels = Vec::new();
    let mut logits = None;

    for layer in &net.layers {
        let z = layer.apply(&cur, true)?;
        if layer.activated() {
            let lv: Vec<i64> = z.data().iter().map(|&x| quantize_level(x, q)).collect();
            let act = cqrelu_tensor(&z, q);
            cur = act.clone();
            activations.push(act);
            levels.push(lv);
        } else {
            logits = Some(z);
        }
    }

    Ok(AnnOutputs {
        logits: logits.expect("validated networks end with an un-activated layer"),
        activations,
        levels,
    })
}

/// Fold batch-norm statistics into the preceding layer's weight and bias.
///
/// Per output channel c (rows of a linear weight, filters of a conv weight):
/// `W'[c,·] = W[c,·]·γ_c/√(var_c+eps)` and
/// `b'_c = (b_c − mean_c)·γ_c/√(var_c+eps) + β_c`.
pub fn fold_batchnorm(
    weight: &Tensor,
    bias: Option<&Tensor>,
    gamma: &Tensor,
    beta: &Tensor,
    mean: &Tensor,
    var: &Tensor,
    eps: f64,
) -> Result<(Tensor, Tensor)> {
    let channels = weight.shape()[0];
    for (name, t) in [("gamma", gamma), ("beta", beta), ("mean", mean), ("var", var)] {
        if t.len() != channels {
            return Err(CascError::shape(
                "fold_batchnorm",
                format!("{channels} {name} values"),
                format!("{}", t.len()),
            ));
        }
    }
    let per_channel = weight.len() / channels;
    let mut w = weight.data().to_vec();
    let mut b = vec![0.0; channels];

    for c in 0..channels {
        let denom = var.data()[c] + eps;
        if denom <= 0.0 {
            return Err(CascError::InvalidModel(format!(
                "fold_batchnorm: var+eps = {denom} ≤ 0 at channel {c}"
            )));
        }
        let scale = gamma.data()[c] / denom.sqrt();
        for v in &mut w[c * per_channel..(c + 1) * per_channel] {
            *v *= scale;
        }
        let b0 = bias.map_or(0.0, |t| t.data()[c]);
        b[c] = (b0 - mean.data()[c]) * scale + beta.data()[c];
    }

    Ok((
        Tensor::new(weight.shape().to_vec(), w)?,
        Tensor::new(vec![channels], b)?,
    ))
}
