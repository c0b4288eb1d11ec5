//! Seeded synthetic datasets and the bundled desk-scale models used by the
//! CLI, the sweep command and the verification suites. Nothing here touches
//! the network or filesystem; every artifact is a pure function of its seed.

use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::{CascError, Result};

use super::{ann_forward, LayerSpec, QNetwork};

/// Labeled sample: input tensor and one-hot target.
pub type Sample = (Tensor, Tensor);

fn one_hot(class: usize, n: usize) -> Tensor {
    let mut v = vec![0.0; n];
    v[class] = 1.0;
    Tensor::from_vec(v).expect("one-hot is finite")
}

/// Two Gaussian blobs at (−1,−1) and (+1,+1), σ = 0.5.
pub fn blobs(n_per_class: usize, seed: u64) -> Vec<Sample> {
    let mut rng = Rng::new(seed);
    let mut out = Vec::with_capacity(2 * n_per_class);
    for class in 0..2 {
        let center = if class == 0 { -1.0 } else { 1.0 };
        for _ in 0..n_per_class {
            let x = center + 0.5 * rng.normal();
            let y = center + 0.5 * rng.normal();
            out.push((Tensor::from_vec(vec![x, y]).unwrap(), one_hot(class, 2)));
        }
    }
    out
}

/// Concentric rings: class 0 inside radius 0.6, class 1 on the annulus
/// [1.1, 1.7].
pub fn rings(n_per_class: usize, seed: u64) -> Vec<Sample> {
    let mut rng = Rng::new(seed);
    let mut out = Vec::with_capacity(2 * n_per_class);
    for class in 0..2 {
        let (lo, hi) = if class == 0 { (0.0, 0.6) } else { (1.1, 1.7) };
        for _ in 0..n_per_class {
            let r = rng.uniform(lo, hi);
            let theta = rng.uniform(0.0, std::f64::consts::TAU);
            out.push((
                Tensor::from_vec(vec![r * theta.cos(), r * theta.sin()]).unwrap(),
                one_hot(class, 2),
            ));
        }
    }
    out
}

/// Look up a synthetic task by name.
pub fn dataset(name: &str, n_per_class: usize, seed: u64) -> Result<Vec<Sample>> {
    match name {
        "blobs" => Ok(blobs(n_per_class, seed)),
        "rings" => Ok(rings(n_per_class, seed)),
        other => Err(CascError::InvalidModel(format!(
            "unknown synthetic task {other:?} (available: blobs, rings)"
        ))),
    }
}

fn random_linear(rng: &mut Rng, n_out: usize, n_in: usize, activated: bool) -> LayerSpec {
    let std = (1.0 / n_in as f64).sqrt();
    let weight = Tensor::new(
        vec![n_out, n_in],
        (0..n_out * n_in).map(|_| rng.normal() * std).collect(),
    )
    .unwrap();
    let bias = Tensor::from_vec((0..n_out).map(|_| rng.uniform(-0.1, 0.4)).collect()).unwrap();
    LayerSpec::Linear {
        weight,
        bias: Some(bias),
        activated,
    }
}

fn random_conv(rng: &mut Rng, f: usize, c: usize, k: usize, padding: usize) -> LayerSpec {
    let fan_in = c * k * k;
    let std = (1.0 / fan_in as f64).sqrt();
    let weight = Tensor::new(
        vec![f, c, k, k],
        (0..f * fan_in).map(|_| rng.normal() * std).collect(),
    )
    .unwrap();
    let bias = Tensor::from_vec((0..f).map(|_| rng.uniform(-0.1, 0.4)).collect()).unwrap();
    LayerSpec::Conv2d {
        weight,
        bias: Some(bias),
        stride: 1,
        padding,
        activated: true,
    }
}

/// Fully connected stack with the given layer sizes (first entry = input
/// width), random init, all hidden layers activated.
pub fn mlp_from_sizes(sizes: &[usize], q: u32, seed: u64) -> QNetwork {
    assert!(sizes.len() >= 2, "need at least input and output sizes");
    let mut rng = Rng::new(seed);
    let layers: Vec<LayerSpec> = sizes
        .windows(2)
        .enumerate()
        .map(|(i, w)| random_linear(&mut rng, w[1], w[0], i + 2 < sizes.len()))
        .collect();
    QNetwork::new(layers, q, format!("mlp-{sizes:?}"), seed).expect("generated MLP is valid")
}

/// The bundled MLP: 6 → 16 → 12 → 4, fixed seed.
pub fn bundled_mlp(q: u32) -> QNetwork {
    let mut net = mlp_from_sizes(&[6, 16, 12, 4], q, 0x5eed_0001);
    net.name = format!("bundled-mlp-q{q}");
    net
}

/// Input shape for [`bundled_mlp`].
pub fn bundled_mlp_input_shape() -> Vec<usize> {
    vec![6]
}

/// The bundled CNN: [1,8,8] → conv(4,k3,p1) → pool(2) → conv(4,k3) → linear,
/// fixed seed. All hidden layers (pool included) are activated.
pub fn bundled_cnn(q: u32) -> QNetwork {
    let mut rng = Rng::new(0x5eed_0002);
    let layers = vec![
        random_conv(&mut rng, 4, 1, 3, 1), // [4,8,8]
        LayerSpec::AvgPool2d {
            k: 2,
            stride: 2,
            activated: true,
        }, // [4,4,4]
        random_conv(&mut rng, 4, 4, 3, 0), // [4,2,2]
        random_linear(&mut rng, 3, 16, false),
    ];
    QNetwork::new(layers, q, format!("bundled-cnn-q{q}"), 0x5eed_0002)
        .expect("bundled CNN is valid")
}

/// Input shape for [`bundled_cnn`].
pub fn bundled_cnn_input_shape() -> Vec<usize> {
    vec![1, 8, 8]
}

/// Two identity 1×1 linear layers (one activated, one output). Feeding a
/// scalar through this probe exposes the raw activation / firing-rate
/// relation for any x, Q, T.
pub fn scalar_probe(q: u32) -> QNetwork {
    let ident = |activated| LayerSpec::Linear {
        weight: Tensor::new(vec![1, 1], vec![1.0]).unwrap(),
        bias: None,
        activated,
    };
    QNetwork::new(vec![ident(true), ident(false)], q, format!("scalar-probe-q{q}"), 0)
        .expect("probe is valid")
}

/// Random MLP in the desk-scale envelope: 2–4 activated layers, widths ≤ 32.
pub fn random_mlp(rng: &mut Rng, q: u32) -> (QNetwork, Vec<usize>) {
    let depth = 2 + rng.below(3); // activated layers
    let n_in = 2 + rng.below(15);
    let mut sizes = vec![n_in];
    for _ in 0..depth {
        sizes.push(4 + rng.below(29));
    }
    sizes.push(2 + rng.below(7));
    let seed = rng.next_u64();
    (mlp_from_sizes(&sizes, q, seed), vec![n_in])
}

/// Random small CNN on an 8×8 input: 1–3 conv layers (≤ 6 channels), an
/// optional 2×2 average pool, linear head.
pub fn random_cnn(rng: &mut Rng, q: u32) -> (QNetwork, Vec<usize>) {
    let c0 = 1 + rng.below(2);
    let n_conv = 1 + rng.below(3);
    let with_pool = rng.bernoulli(0.5);
    let seed = rng.next_u64();
    let mut body = Rng::new(seed);

    let (mut c, mut h, mut w) = (c0, 8usize, 8usize);
    let mut layers = Vec::new();
    for i in 0..n_conv {
        let padding = if h < 3 || w < 3 { 1 } else { body.below(2) };
        let f = 2 + body.below(5);
        layers.push(random_conv(&mut body, f, c, 3, padding));
        c = f;
        h = h + 2 * padding - 2;
        w = w + 2 * padding - 2;
        if i == 0 && with_pool && h % 2 == 0 && h >= 4 && w % 2 == 0 && w >= 4 {
            layers.push(LayerSpec::AvgPool2d {
                k: 2,
                stride: 2,
                activated: true,
            });
            h /= 2;
            w /= 2;
        }
    }
    let n_out = 2 + body.below(3);
    layers.push(random_linear(&mut body, n_out, c * h * w, false));

    let net = QNetwork::new(layers, q, format!("random-cnn-{seed:#x}"), seed)
        .expect("generated CNN is valid");
    (net, vec![c0, 8, 8])
}

/// Uniform random input in [−1, 1) of the given shape.
pub fn random_input(shape: &[usize], rng: &mut Rng) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect())
        .expect("random input is finite")
}

/// Search for an input that drives at least one first-layer neuron past the
/// threshold (pre-activation ≥ 1.05). Such inputs keep the baseline IF
/// regime firing indefinitely and overshoot the quantized activation, which
/// the error diagnostics rely on. Deterministic given the network seed.
pub fn adversarial_input(net: &QNetwork, input_shape: &[usize], tries: usize) -> Option<Tensor> {
    let mut rng = Rng::new(net.seed ^ 0xadc0_ffee);
    for round in 0..tries {
        let scale = 1.0 + (round / 8) as f64;
        let mut input = random_input(input_shape, &mut rng);
        for v in input.data_mut() {
            *v *= scale;
        }
        let Ok(out) = ann_forward(net, &input) else {
            return None;
        };
        // Pre-activation of the first activated layer: recompute directly.
        let z = net.layers[0].apply(&input, true).ok()?;
        let _ = out;
        if z.data().iter().any(|&v| v >= 1.05) {
            return Some(input);
        }
    }
    None
}
