//! Executable error analysis for conversion runs: stable-point sets,
//! bound-violation detection, more/less-spike ratios, per-layer relative
//! error, firing-ratio curves, output-MSE traces and their CSV exports.
//!
//! Layer indices here always count *activated* (spiking) layers, starting at
//! 0; the non-spiking output integrator never appears in a trace.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::CascError;
use crate::qann::AnnOutputs;
use crate::tensor::Tensor;
use crate::Result;

/// Address of a spiking neuron: activated-layer ordinal plus flat index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct NeuronId {
    pub layer: usize,
    pub index: usize,
}

/// One recorded step of a single neuron. `v` is the membrane potential after
/// the step's emission, so `v = x_total − y` holds at every entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronStep {
    pub current: f64,
    pub x_total: f64,
    pub v: f64,
    pub spike: i8,
    pub y: i64,
}

/// Full per-step history of one neuron.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeuronTrace {
    pub steps: Vec<NeuronStep>,
}

/// Per-step, per-layer records of a simulation.
#[derive(Debug, Clone)]
pub struct SimTrace {
    /// Neuron count per activated layer.
    pub layer_sizes: Vec<usize>,
    /// `fired[layer][step]` = neurons with a nonzero spike at that step
    /// (negative spikes count as firing).
    pub fired: Vec<Vec<usize>>,
    /// Steps executed.
    pub steps: usize,
    /// First step whose full sweep produced zero spikes network-wide while no
    /// external input was pending, if any.
    pub quiescence_step: Option<usize>,
    /// Steps during which external input (and biases) were injected under the
    /// wake-sleep schedule; equals the wake length.
    pub input_horizon: usize,
    /// Whether the run gated input/biases off after `input_horizon` steps.
    pub wsc_enabled: bool,
    /// Accumulated raw current into the output integrator after each step.
    pub output_acc: Vec<Vec<f64>>,
    /// Full histories for watched neurons (all neurons when full recording
    /// was requested, empty otherwise).
    pub watched: BTreeMap<(usize, usize), NeuronTrace>,
}

impl SimTrace {
    pub fn neuron(&self, id: NeuronId) -> Result<&NeuronTrace> {
        self.watched
            .get(&(id.layer, id.index))
            .ok_or(CascError::UnknownNeuron {
                layer: id.layer,
                index: id.index,
            })
    }

    /// External-input steps seen up to and including step `t`.
    pub fn injected_steps(&self, t: usize) -> usize {
        if self.wsc_enabled {
            (t + 1).min(self.input_horizon)
        } else {
            t + 1
        }
    }
}

/// Upper/lower bound condition report for one neuron.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundViolations {
    /// Steps where the cumulative output exceeds the floor of the total
    /// wake-horizon input — spikes that a plain IF neuron can never retract.
    pub upper: BTreeSet<usize>,
    /// True when the steps remaining after the last stable point cannot
    /// carry the spikes still owed.
    pub lower: bool,
}

/// `{t : Y[t] = ⌊X[t]⌋}` for a single neuron history.
pub fn stable_points_of(trace: &NeuronTrace) -> BTreeSet<usize> {
    trace
        .steps
        .iter()
        .enumerate()
        .filter(|(_, s)| s.y == s.x_total.floor() as i64)
        .map(|(t, _)| t)
        .collect()
}

/// Stable points of a watched neuron in a simulation trace.
pub fn stable_points(trace: &SimTrace, id: NeuronId) -> Result<BTreeSet<usize>> {
    Ok(stable_points_of(trace.neuron(id)?))
}

/// Bound violations for a single neuron history. `input_horizon` is the
/// number of leading steps that carried external input; the upper condition
/// is judged against the cumulative input at that horizon.
pub fn bound_violations_of(trace: &NeuronTrace, input_horizon: usize) -> BoundViolations {
    let n = trace.steps.len();
    if n == 0 {
        return BoundViolations {
            upper: BTreeSet::new(),
            lower: false,
        };
    }
    let ref_step = input_horizon.clamp(1, n) - 1;
    let x_ref = trace.steps[ref_step].x_total.floor() as i64;
    let upper: BTreeSet<usize> = trace
        .steps
        .iter()
        .enumerate()
        .filter(|(_, s)| s.y > x_ref)
        .map(|(t, _)| t)
        .collect();

    let stable = stable_points_of(trace);
    let x_final = trace.steps[n - 1].x_total.floor() as i64;
    // Virtual origin (X = 0, Y = 0) one step before the trace acts as the
    // fallback stable point.
    let (t_last, x_last) = match stable.iter().next_back() {
        Some(&t) => (t as i64, trace.steps[t].x_total.floor() as i64),
        None => (-1, 0),
    };
    let remaining = (n as i64 - 1) - t_last;
    let lower = x_final - x_last > remaining;

    BoundViolations { upper, lower }
}

/// Bound violations for a watched neuron in a simulation trace.
pub fn bound_violations(trace: &SimTrace, id: NeuronId) -> Result<BoundViolations> {
    Ok(bound_violations_of(trace.neuron(id)?, trace.input_horizon))
}

/// Fractions of neurons whose final counts over- or undershoot the ANN level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MismatchRatio {
    pub more: f64,
    pub less: f64,
}

/// Compare final spike counts with the ANN activations in the count domain
/// (`Q·a`, which the quantized activation guarantees is integral).
pub fn spike_mismatch(
    snn_counts: &[Vec<i64>],
    ann_acts: &[Tensor],
    q: u32,
) -> Result<Vec<MismatchRatio>> {
    if snn_counts.len() != ann_acts.len() {
        return Err(CascError::shape(
            "spike_mismatch",
            format!("{} layers", ann_acts.len()),
            format!("{} layers", snn_counts.len()),
        ));
    }
    let mut out = Vec::with_capacity(snn_counts.len());
    for (layer, (counts, acts)) in snn_counts.iter().zip(ann_acts).enumerate() {
        if counts.len() != acts.len() {
            return Err(CascError::shape(
                &format!("spike_mismatch layer {layer}"),
                format!("{} neurons", acts.len()),
                format!("{} counts", counts.len()),
            ));
        }
        let mut more = 0usize;
        let mut less = 0usize;
        for (&c, &a) in counts.iter().zip(acts.data()) {
            let qa = a * q as f64;
            let target = qa.round();
            if (qa - target).abs() > 1e-6 {
                return Err(CascError::InvalidModel(format!(
                    "activation {a} at layer {layer} is not a multiple of 1/{q}"
                )));
            }
            let target = target as i64;
            if c > target {
                more += 1;
            } else if c < target {
                less += 1;
            }
        }
        let n = counts.len().max(1) as f64;
        out.push(MismatchRatio {
            more: more as f64 / n,
            less: less as f64 / n,
        });
    }
    Ok(out)
}

/// Per-layer relative-error summary across neurons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelErrSummary {
    pub mean: f64,
    pub median: f64,
    pub p5: f64,
    pub p95: f64,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Per-neuron error `(counts/Q − a) / max(a, 1/Q)`, summarized per layer.
/// The denominator floor at 1/Q keeps zero activations well-defined.
pub fn relative_error(
    snn_counts: &[Vec<i64>],
    ann_acts: &[Tensor],
    q: u32,
) -> Result<Vec<RelErrSummary>> {
    if snn_counts.len() != ann_acts.len() {
        return Err(CascError::shape(
            "relative_error",
            format!("{} layers", ann_acts.len()),
            format!("{} layers", snn_counts.len()),
        ));
    }
    let qf = q as f64;
    let mut out = Vec::with_capacity(snn_counts.len());
    for (counts, acts) in snn_counts.iter().zip(ann_acts) {
        let mut errs: Vec<f64> = counts
            .iter()
            .zip(acts.data())
            .map(|(&c, &a)| (c as f64 / qf - a) / a.max(1.0 / qf))
            .collect();
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mean = errs.iter().sum::<f64>() / errs.len().max(1) as f64;
        out.push(RelErrSummary {
            mean,
            median: percentile(&errs, 0.5),
            p5: percentile(&errs, 0.05),
            p95: percentile(&errs, 0.95),
        });
    }
    Ok(out)
}

/// `ratio[layer][step]` = fraction of the layer spiking at that step
/// (positive and negative spikes both count).
pub fn firing_ratio(trace: &SimTrace) -> Vec<Vec<f64>> {
    trace
        .fired
        .iter()
        .zip(&trace.layer_sizes)
        .map(|(counts, &size)| {
            counts
                .iter()
                .map(|&c| c as f64 / size.max(1) as f64)
                .collect()
        })
        .collect()
}

/// Everything the error analysis produces for one run.
#[derive(Debug, Clone)]
pub struct DiagnosticsReport {
    pub mismatch: Vec<MismatchRatio>,
    pub relerr: Vec<RelErrSummary>,
    /// (step, MSE between the decoded output so far and the ANN logits).
    pub mse_samples: Vec<(usize, f64)>,
    pub firing: Vec<Vec<f64>>,
}

/// Assemble the report for a finished run against its ANN reference.
pub fn build_report(
    trace: &SimTrace,
    snn_counts: &[Vec<i64>],
    ann: &AnnOutputs,
    q: u32,
) -> Result<DiagnosticsReport> {
    let mismatch = spike_mismatch(snn_counts, &ann.activations, q)?;
    let relerr = relative_error(snn_counts, &ann.activations, q)?;
    let firing = firing_ratio(trace);

    let logits = ann.logits.data();
    let mse_samples = trace
        .output_acc
        .iter()
        .enumerate()
        .map(|(t, acc)| {
            let norm = trace.injected_steps(t) as f64;
            let mse = acc
                .iter()
                .zip(logits)
                .map(|(a, l)| {
                    let d = a / norm - l;
                    d * d
                })
                .sum::<f64>()
                / logits.len().max(1) as f64;
            (t, mse)
        })
        .collect();

    Ok(DiagnosticsReport {
        mismatch,
        relerr,
        mse_samples,
        firing,
    })
}

fn fmt(v: f64) -> String {
    format!("{v:.9e}")
}

/// `layer,step,ratio` rows, layer-major.
pub fn firing_ratio_csv(trace: &SimTrace) -> String {
    let mut out = String::from("layer,step,ratio\n");
    for (layer, ratios) in firing_ratio(trace).iter().enumerate() {
        for (step, r) in ratios.iter().enumerate() {
            out.push_str(&format!("{layer},{step},{}\n", fmt(*r)));
        }
    }
    out
}

/// `layer,more_ratio,less_ratio` rows.
pub fn mismatch_csv(mismatch: &[MismatchRatio]) -> String {
    let mut out = String::from("layer,more_ratio,less_ratio\n");
    for (layer, m) in mismatch.iter().enumerate() {
        out.push_str(&format!("{layer},{},{}\n", fmt(m.more), fmt(m.less)));
    }
    out
}

/// `layer,mean,median,p5,p95` rows.
pub fn relerr_csv(relerr: &[RelErrSummary]) -> String {
    let mut out = String::from("layer,mean,median,p5,p95\n");
    for (layer, r) in relerr.iter().enumerate() {
        out.push_str(&format!(
            "{layer},{},{},{},{}\n",
            fmt(r.mean),
            fmt(r.median),
            fmt(r.p5),
            fmt(r.p95)
        ));
    }
    out
}

/// `step,layer,neuron,I,X,V,s,Y` rows for every watched neuron, step-major.
pub fn trace_csv(trace: &SimTrace) -> String {
    let mut out = String::from("step,layer,neuron,I,X,V,s,Y\n");
    for step in 0..trace.steps {
        for (&(layer, neuron), hist) in &trace.watched {
            if let Some(s) = hist.steps.get(step) {
                out.push_str(&format!(
                    "{step},{layer},{neuron},{},{},{},{},{}\n",
                    fmt(s.current),
                    fmt(s.x_total),
                    fmt(s.v),
                    s.spike,
                    s.y
                ));
            }
        }
    }
    out
}

/// Write prebuilt CSV text, surfacing the path on failure.
pub fn export_csv(text: &str, path: &Path) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CascError::io(path, e))
}
