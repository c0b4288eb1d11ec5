//! Model (de)serialization.
//!
//! Format: a JSON document
//! `{"format_version":1, "q":…, "name":…, "seed":…, "layers":[{"kind":…,
//! "shape":…, "weight":[…]|null, "bias":[…]|null, "stride":…, "padding":…,
//! "activated":…}, …]}` with weights flat row-major. For pooling layers
//! `shape` holds `[k]` and weight/bias are null. Floats are written in
//! shortest round-trip decimal, so save → load reproduces every value
//! bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CascError;
use crate::tensor::Tensor;
use crate::Result;

use super::{LayerSpec, QNetwork};

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    q: u32,
    #[serde(default)]
    name: String,
    #[serde(default)]
    seed: u64,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    kind: String,
    shape: Vec<usize>,
    weight: Option<Vec<f64>>,
    bias: Option<Vec<f64>>,
    stride: usize,
    padding: usize,
    activated: bool,
}

fn layer_to_file(layer: &LayerSpec) -> LayerFile {
    match layer {
        LayerSpec::Linear {
            weight,
            bias,
            activated,
        } => LayerFile {
            kind: "linear".into(),
            shape: weight.shape().to_vec(),
            weight: Some(weight.data().to_vec()),
            bias: bias.as_ref().map(|b| b.data().to_vec()),
            stride: 1,
            padding: 0,
            activated: *activated,
        },
        LayerSpec::Conv2d {
            weight,
            bias,
            stride,
            padding,
            activated,
        } => LayerFile {
            kind: "conv2d".into(),
            shape: weight.shape().to_vec(),
            weight: Some(weight.data().to_vec()),
            bias: bias.as_ref().map(|b| b.data().to_vec()),
            stride: *stride,
            padding: *padding,
            activated: *activated,
        },
        LayerSpec::AvgPool2d {
            k,
            stride,
            activated,
        } => LayerFile {
            kind: "avgpool2d".into(),
            shape: vec![*k],
            weight: None,
            bias: None,
            stride: *stride,
            padding: 0,
            activated: *activated,
        },
    }
}

fn layer_from_file(index: usize, lf: &LayerFile) -> Result<LayerSpec> {
    let bad = |reason: String| CascError::InvalidModel(format!("layer {index}: {reason}"));

    let take_weight = || -> Result<Tensor> {
        let data = lf
            .weight
            .clone()
            .ok_or_else(|| bad(format!("{} layer lacks a weight array", lf.kind)))?;
        let expected: usize = lf.shape.iter().product();
        if data.len() != expected {
            return Err(bad(format!(
                "weight has {} values but shape {:?} needs {expected}",
                data.len(),
                lf.shape
            )));
        }
        Tensor::new(lf.shape.clone(), data)
            .map_err(|e| bad(format!("weight rejected: {e}")))
    };
    let take_bias = |n_out: usize| -> Result<Option<Tensor>> {
        match &lf.bias {
            None => Ok(None),
            Some(b) => {
                if b.len() != n_out {
                    return Err(bad(format!("bias has {} values, expected {n_out}", b.len())));
                }
                Ok(Some(
                    Tensor::from_vec(b.clone()).map_err(|e| bad(format!("bias rejected: {e}")))?,
                ))
            }
        }
    };

    match lf.kind.as_str() {
        "linear" => {
            if lf.shape.len() != 2 {
                return Err(bad(format!("linear shape must be [out,in], got {:?}", lf.shape)));
            }
            let weight = take_weight()?;
            let bias = take_bias(lf.shape[0])?;
            Ok(LayerSpec::Linear {
                weight,
                bias,
                activated: lf.activated,
            })
        }
        "conv2d" => {
            if lf.shape.len() != 4 {
                return Err(bad(format!("conv2d shape must be [F,C,k,k], got {:?}", lf.shape)));
            }
            let weight = take_weight()?;
            let bias = take_bias(lf.shape[0])?;
            Ok(LayerSpec::Conv2d {
                weight,
                bias,
                stride: lf.stride,
                padding: lf.padding,
                activated: lf.activated,
            })
        }
        "avgpool2d" => {
            if lf.shape.len() != 1 {
                return Err(bad(format!("avgpool2d shape must be [k], got {:?}", lf.shape)));
            }
            Ok(LayerSpec::AvgPool2d {
                k: lf.shape[0],
                stride: lf.stride,
                activated: lf.activated,
            })
        }
        other => Err(bad(format!("unknown layer kind {other:?}"))),
    }
}

/// Serialize a network to the JSON model format.
pub fn model_to_json(net: &QNetwork) -> String {
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        q: net.q(),
        name: net.name.clone(),
        seed: net.seed,
        layers: net.layers.iter().map(layer_to_file).collect(),
    };
    serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
}

/// Parse a network from the JSON model format, re-validating all invariants.
pub fn model_from_json(text: &str) -> Result<QNetwork> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| CascError::MalformedModel {
        path: "<inline>".into(),
        reason: e.to_string(),
    })?;
    if file.format_version != FORMAT_VERSION {
        return Err(CascError::InvalidModel(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let layers = file
        .layers
        .iter()
        .enumerate()
        .map(|(i, lf)| layer_from_file(i, lf))
        .collect::<Result<Vec<_>>>()?;
    QNetwork::new(layers, file.q, file.name, file.seed)
}

pub fn save_model(net: &QNetwork, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_json(net)).map_err(|e| CascError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<QNetwork> {
    let text = std::fs::read_to_string(path).map_err(|e| CascError::io(path, e))?;
    model_from_json(&text).map_err(|e| match e {
        CascError::MalformedModel { reason, .. } => CascError::MalformedModel {
            path: path.display().to_string(),
            reason,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qann::synth;

    #[test]
    fn round_trip_is_field_exact() {
        let net = synth::bundled_mlp(8);
        let back = model_from_json(&model_to_json(&net)).unwrap();
        assert_eq!(net, back);
        let cnn = synth::bundled_cnn(4);
        assert_eq!(model_from_json(&model_to_json(&cnn)).unwrap(), cnn);
    }

    #[test]
    fn rejects_zero_q() {
        let mut text = model_to_json(&synth::bundled_mlp(8));
        text = text.replace("\"q\": 8", "\"q\": 0");
        let err = model_from_json(&text).unwrap_err();
        assert!(err.to_string().contains("Q must be ≥ 1"), "{err}");
    }

    #[test]
    fn rejects_truncated_weights_naming_layer() {
        let net = synth::bundled_mlp(8);
        let mut file: serde_json::Value = serde_json::from_str(&model_to_json(&net)).unwrap();
        let weights = file["layers"][1]["weight"].as_array_mut().unwrap();
        weights.pop();
        let err = model_from_json(&file.to_string()).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
    }

    #[test]
    fn rejects_garbage_with_location() {
        let err = model_from_json("{\"format_version\":1,").unwrap_err();
        assert!(matches!(err, CascError::MalformedModel { .. }), "{err}");
    }
}
