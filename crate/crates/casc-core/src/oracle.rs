//! Independent brute-force references for the property suites.
//!
//! Everything here re-derives its result from first principles with naive
//! loops and shares no computation with the engine modules it checks: the
//! quantized forward pass, the single-neuron update rules, and the Bernoulli
//! spike-train construction for rate-coded input experiments.

use crate::diagnostics::{NeuronStep, NeuronTrace};
use crate::error::CascError;
use crate::qann::{LayerSpec, QNetwork};
use crate::rng::Rng;
use crate::snn::NeuronMode;
use crate::tensor::Tensor;
use crate::Result;

/// Reference forward-pass outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RefOutputs {
    pub activations: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

fn ref_cqrelu(x: f64, q: u32) -> f64 {
    let mut level = (x * q as f64).floor();
    if level < 0.0 {
        level = 0.0;
    }
    if level > q as f64 {
        level = q as f64;
    }
    level / q as f64
}

fn ref_linear(x: &[f64], weight: &Tensor, bias: Option<&Tensor>) -> Result<Vec<f64>> {
    let (n_out, n_in) = (weight.shape()[0], weight.shape()[1]);
    if x.len() != n_in {
        return Err(CascError::shape(
            "ref_forward linear",
            format!("{n_in}"),
            format!("{}", x.len()),
        ));
    }
    let w = weight.data();
    let mut out = vec![0.0; n_out];
    for i in 0..n_out {
        let mut acc = 0.0;
        for j in 0..n_in {
            acc += w[i * n_in + j] * x[j];
        }
        if let Some(b) = bias {
            acc += b.data()[i];
        }
        out[i] = acc;
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn ref_conv(
    x: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<(Vec<f64>, usize, usize, usize)> {
    let (f, k) = (weight.shape()[0], weight.shape()[2]);
    if weight.shape()[1] != c_in || x.len() != c_in * h * w {
        return Err(CascError::shape(
            "ref_forward conv",
            format!("[{c_in},{h},{w}]"),
            format!("{} values", x.len()),
        ));
    }
    if k > h + 2 * padding || k > w + 2 * padding || stride == 0 {
        return Err(CascError::InvalidGeometry("ref_forward conv geometry".into()));
    }
    // Materialize the zero-padded input, then run the plain seven-loop form.
    let (hp, wp) = (h + 2 * padding, w + 2 * padding);
    let mut padded = vec![0.0; c_in * hp * wp];
    for c in 0..c_in {
        for r in 0..h {
            for col in 0..w {
                padded[c * hp * wp + (r + padding) * wp + (col + padding)] =
                    x[c * h * w + r * w + col];
            }
        }
    }
    let h_out = (hp - k) / stride + 1;
    let w_out = (wp - k) / stride + 1;
    let wt = weight.data();
    let mut out = vec![0.0; f * h_out * w_out];
    for fi in 0..f {
        for oh in 0..h_out {
            for ow in 0..w_out {
                let mut acc = 0.0;
                for c in 0..c_in {
                    for kr in 0..k {
                        for kc in 0..k {
                            let pv = padded[c * hp * wp + (oh * stride + kr) * wp + ow * stride + kc];
                            acc += pv * wt[fi * c_in * k * k + c * k * k + kr * k + kc];
                        }
                    }
                }
                if let Some(b) = bias {
                    acc += b.data()[fi];
                }
                out[fi * h_out * w_out + oh * w_out + ow] = acc;
            }
        }
    }
    Ok((out, f, h_out, w_out))
}

fn ref_pool(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
) -> Result<(Vec<f64>, usize, usize, usize)> {
    if x.len() != c * h * w {
        return Err(CascError::shape(
            "ref_forward pool",
            format!("[{c},{h},{w}]"),
            format!("{} values", x.len()),
        ));
    }
    if k == 0
        || stride == 0
        || k > h
        || k > w
        || !(h - k).is_multiple_of(stride)
        || !(w - k).is_multiple_of(stride)
    {
        return Err(CascError::InvalidGeometry("ref_forward pool geometry".into()));
    }
    let h_out = (h - k) / stride + 1;
    let w_out = (w - k) / stride + 1;
    let mut out = vec![0.0; c * h_out * w_out];
    for ci in 0..c {
        for oh in 0..h_out {
            for ow in 0..w_out {
                let mut acc = 0.0;
                for kr in 0..k {
                    for kc in 0..k {
                        acc += x[ci * h * w + (oh * stride + kr) * w + ow * stride + kc];
                    }
                }
                out[ci * h_out * w_out + oh * w_out + ow] = acc / (k * k) as f64;
            }
        }
    }
    Ok((out, c, h_out, w_out))
}

/// Naive re-implementation of the quantized forward pass; ground truth for
/// the engine's `ann_forward`.
pub fn ref_forward(net: &QNetwork, input: &Tensor) -> Result<RefOutputs> {
    let q = net.q();
    let mut values = input.data().to_vec();
    // Spatial view of `values` when 3-D, flat otherwise.
    let mut dims: Option<(usize, usize, usize)> = match input.shape() {
        [c, h, w] => Some((*c, *h, *w)),
        _ => None,
    };
    let mut activations = Vec::new();
    let mut logits = Vec::new();

    for layer in &net.layers {
        let z = match layer {
            LayerSpec::Linear { weight, bias, .. } => {
                dims = None;
                ref_linear(&values, weight, bias.as_ref())?
            }
            LayerSpec::Conv2d {
                weight,
                bias,
                stride,
                padding,
                ..
            } => {
                let (c, h, w) = dims.ok_or_else(|| {
                    CascError::shape("ref_forward conv input", "3-D [C,H,W]", "flat vector")
                })?;
                let (out, f, h2, w2) =
                    ref_conv(&values, c, h, w, weight, bias.as_ref(), *stride, *padding)?;
                dims = Some((f, h2, w2));
                out
            }
            LayerSpec::AvgPool2d { k, stride, .. } => {
                let (c, h, w) = dims.ok_or_else(|| {
                    CascError::shape("ref_forward pool input", "3-D [C,H,W]", "flat vector")
                })?;
                let (out, c2, h2, w2) = ref_pool(&values, c, h, w, *k, *stride)?;
                dims = Some((c2, h2, w2));
                out
            }
        };
        if layer.activated() {
            values = z.iter().map(|&v| ref_cqrelu(v, q)).collect();
            activations.push(values.clone());
        } else {
            logits = z.clone();
            values = z;
        }
    }

    Ok(RefOutputs { activations, logits })
}

/// A per-step current schedule for one neuron; external input stops after
/// `wake` steps (the rest of the simulation sees zero current).
#[derive(Debug, Clone)]
pub struct CurrentSequence {
    pub currents: Vec<f64>,
    pub wake: usize,
}

impl CurrentSequence {
    pub fn new(currents: Vec<f64>) -> Self {
        let wake = currents.len();
        CurrentSequence { currents, wake }
    }
}

/// Definitional single-neuron simulator: literal application of the update
/// rules for `t_max` steps, zero current once the sequence is exhausted.
/// Returns the final cumulative count and the full trace.
pub fn neuron_oracle(
    seq: &CurrentSequence,
    mode: NeuronMode,
    q: u32,
    t_max: usize,
) -> (i64, NeuronTrace) {
    let mut v = 0.0;
    let mut x = 0.0;
    let mut y: i64 = 0;
    let mut trace = NeuronTrace::default();
    for t in 0..t_max {
        let current = seq.currents.get(t).copied().unwrap_or(0.0);
        v += current;
        x += current;
        let spike: i8 = match mode {
            NeuronMode::If => i8::from(v >= 1.0),
            NeuronMode::Cif => {
                if v >= 1.0 && y < q as i64 {
                    1
                } else if v < 0.0 && y > 0 {
                    -1
                } else {
                    0
                }
            }
        };
        v -= spike as f64;
        y += spike as i64;
        trace.steps.push(NeuronStep {
            current,
            x_total: x,
            v,
            spike,
            y,
        });
    }
    (y, trace)
}

/// Binary spike train of length `T`, i.i.d. Bernoulli(rate) per step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeTrain {
    pub bits: Vec<u8>,
    pub seed: u64,
}

/// Rate-coded spike train: the bounded-rate surrogate with per-step
/// Bernoulli draws (a rate of 0 or 1 degenerates to a constant train).
pub fn poisson_train(rate: f64, t: usize, seed: u64) -> Result<SpikeTrain> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(CascError::InvalidModel(format!(
            "spike-train rate {rate} outside [0, 1]"
        )));
    }
    let mut rng = Rng::new(seed);
    let bits = (0..t).map(|_| u8::from(rng.bernoulli(rate))).collect();
    Ok(SpikeTrain { bits, seed })
}

/// Outcome of the rate-coded single-neuron experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Case2Stats {
    /// Fraction of trials where the IF neuron (no sleep) missed the target.
    pub if_mismatch: f64,
    /// Fraction where the consistent neuron with sleep missed; zero when the
    /// conversion is exact.
    pub cif_mismatch: f64,
    pub trials: usize,
}

/// Drive a single neuron with `W·(Bernoulli spike frames)` for `t` wake steps
/// and compare the final count against `Clip(⌊ΣI⌋, 0, Q)` under both rules.
/// The consistent neuron gets `2Q + 8` extra silent steps to settle.
///
/// Decimal weights make ΣI land exactly on integers in a fair share of
/// trials; the membrane potential is then a knife edge that accumulation
/// order may resolve to either neighboring count. Sums within 1e-9 of an
/// integer therefore accept both neighbors; everywhere else the comparison
/// is exact.
pub fn case2_experiment(
    weights: &Tensor,
    rates: &Tensor,
    q: u32,
    t: usize,
    trials: usize,
    seed: u64,
) -> Result<Case2Stats> {
    if weights.len() != rates.len() {
        return Err(CascError::shape(
            "case2_experiment",
            format!("{} rates", weights.len()),
            format!("{}", rates.len()),
        ));
    }
    if trials == 0 {
        return Err(CascError::InvalidModel("case2_experiment needs ≥ 1 trial".into()));
    }
    for &r in rates.data() {
        if !(0.0..=1.0).contains(&r) {
            return Err(CascError::InvalidModel(format!("rate {r} outside [0, 1]")));
        }
    }

    let parent = Rng::new(seed);
    let mut if_miss = 0usize;
    let mut cif_miss = 0usize;

    for trial in 0..trials {
        let trial_rng = parent.split(trial as u64);
        let trains: Vec<SpikeTrain> = rates
            .data()
            .iter()
            .enumerate()
            .map(|(j, &r)| poisson_train(r, t, trial_rng.split(j as u64).next_u64()))
            .collect::<Result<_>>()?;

        let currents: Vec<f64> = (0..t)
            .map(|step| {
                weights
                    .data()
                    .iter()
                    .zip(&trains)
                    .map(|(w, train)| w * train.bits[step] as f64)
                    .sum()
            })
            .collect();
        let x_total: f64 = {
            // Accumulate in step order, exactly as the neuron integrates.
            let mut acc = 0.0;
            for &c in &currents {
                acc += c;
            }
            acc
        };
        let consistent = |y: i64| {
            let hi = ((x_total + 1e-9).floor().clamp(0.0, q as f64)) as i64;
            let lo = ((x_total - 1e-9).floor().clamp(0.0, q as f64)) as i64;
            y == hi || y == lo
        };
        let seq = CurrentSequence::new(currents);

        let (y_if, _) = neuron_oracle(&seq, NeuronMode::If, q, t);
        if !consistent(y_if) {
            if_miss += 1;
        }
        let (y_cif, _) = neuron_oracle(&seq, NeuronMode::Cif, q, t + 2 * q as usize + 8);
        if !consistent(y_cif) {
            cif_miss += 1;
        }
    }

    Ok(Case2Stats {
        if_mismatch: if_miss as f64 / trials as f64,
        cif_mismatch: cif_miss as f64 / trials as f64,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qann::{ann_forward, synth};

    #[test]
    fn ref_forward_quantizes_identity_probe() {
        let net = synth::scalar_probe(8);
        let out = ref_forward(&net, &Tensor::from_vec(vec![0.58]).unwrap()).unwrap();
        assert_eq!(out.activations[0], vec![0.5]);
        assert_eq!(out.logits, vec![0.5]);
    }

    #[test]
    fn ref_forward_matches_engine_on_random_nets() {
        let mut rng = Rng::new(0xfeed);
        for case in 0..1000 {
            let (net, shape) = if case % 2 == 0 {
                synth::random_mlp(&mut rng, 4 << (case % 3))
            } else {
                synth::random_cnn(&mut rng, 4 << (case % 3))
            };
            let input = synth::random_input(&shape, &mut rng);
            let engine = ann_forward(&net, &input).unwrap();
            let reference = ref_forward(&net, &input).unwrap();
            assert_eq!(engine.logits.data(), reference.logits.as_slice());
            for (a, b) in engine.activations.iter().zip(&reference.activations) {
                assert_eq!(a.data(), b.as_slice());
            }
        }
    }

    #[test]
    fn neuron_oracle_examples() {
        let (y, _) = neuron_oracle(
            &CurrentSequence::new(vec![1.6, 0.9, -1.2]),
            NeuronMode::Cif,
            8,
            8,
        );
        assert_eq!(y, 1);

        let (y, _) = neuron_oracle(
            &CurrentSequence::new(vec![0.58; 16]),
            NeuronMode::If,
            8,
            16,
        );
        assert_eq!(y, 9);

        let (y, trace) = neuron_oracle(&CurrentSequence::new(vec![]), NeuronMode::Cif, 8, 4);
        assert_eq!(y, 0);
        assert!(trace.steps.iter().all(|s| s.spike == 0));
    }

    #[test]
    fn uniform_train_still_mismatches_under_if() {
        // Equal-margin trains, phase shifted, one inhibitory weight: the IF
        // neuron locks in early spikes it can never retract.
        let t = 8;
        let train_a: Vec<f64> = (0..t).map(|i| (i % 2 == 0) as u8 as f64).collect();
        let train_b: Vec<f64> = (0..t).map(|i| (i % 2 == 1) as u8 as f64).collect();
        let currents: Vec<f64> = (0..t)
            .map(|i| 2.6 * train_a[i] - 2.0 * train_b[i])
            .collect();
        let x_total: f64 = currents.iter().sum();
        let target = x_total.floor().clamp(0.0, 8.0) as i64;
        assert_eq!(target, 2);

        let seq = CurrentSequence::new(currents);
        let (y_if, _) = neuron_oracle(&seq, NeuronMode::If, 8, t);
        assert_eq!(y_if, 4);
        let (y_cif, _) = neuron_oracle(&seq, NeuronMode::Cif, 8, t + 24);
        assert_eq!(y_cif, target);
    }

    #[test]
    fn poisson_train_boundaries() {
        assert!(poisson_train(0.0, 50, 1).unwrap().bits.iter().all(|&b| b == 0));
        assert!(poisson_train(1.0, 50, 1).unwrap().bits.iter().all(|&b| b == 1));
        assert!(poisson_train(-0.1, 10, 1).is_err());
        assert!(poisson_train(1.1, 10, 1).is_err());
    }

    #[test]
    fn poisson_train_seeded_rate() {
        let train = poisson_train(0.5, 10_000, 42).unwrap();
        let ones: usize = train.bits.iter().map(|&b| b as usize).sum();
        // Frozen from this seed; the empirical rate sits within 0.02 of 0.5.
        assert_eq!(ones, 4978);
        assert!((ones as f64 / 10_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn case2_constant_train_is_exact_in_both_modes() {
        let stats = case2_experiment(
            &Tensor::from_vec(vec![1.0]).unwrap(),
            &Tensor::from_vec(vec![1.0]).unwrap(),
            8,
            8,
            50,
            9,
        )
        .unwrap();
        assert_eq!(stats.if_mismatch, 0.0);
        assert_eq!(stats.cif_mismatch, 0.0);
    }

    #[test]
    fn case2_random_trains_split_the_modes() {
        let stats = case2_experiment(
            &Tensor::from_vec(vec![0.7, 0.6]).unwrap(),
            &Tensor::from_vec(vec![0.9, 0.8]).unwrap(),
            8,
            8,
            500,
            42,
        )
        .unwrap();
        assert!(stats.if_mismatch > 0.0, "if mismatch {}", stats.if_mismatch);
        assert_eq!(stats.cif_mismatch, 0.0);
    }
}
