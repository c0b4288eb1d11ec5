//! Clocked spiking simulation.
//!
//! A converted network mirrors the ANN layer stack; every activated layer
//! becomes an array of threshold-1 neurons with soft reset, and the final
//! layer becomes a non-spiking integrator. Within one step the layers are
//! swept in order and layer ℓ consumes layer ℓ−1's spikes from the same step.
//!
//! Two neuron rules are available. Plain IF fires when the membrane potential
//! reaches the threshold. Consistent IF additionally emits a negative spike
//! when the potential is negative and spikes were already issued, retracting
//! overshoot; its cumulative count is capped at Q so the total output can
//! never leave the quantized activation's range.
//!
//! Under the wake-sleep schedule external input and all biases drive the
//! network for exactly `q_wake` steps; afterwards the network only
//! redistributes internal spikes until a full silent step, at which point the
//! state can never change again.

use std::collections::BTreeMap;

use crate::diagnostics::{NeuronStep, NeuronTrace, SimTrace};
use crate::error::CascError;
use crate::qann::{LayerSpec, QNetwork};
use crate::tensor::Tensor;
use crate::Result;

/// Neuron update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeuronMode {
    If,
    Cif,
}

/// The four simulation regimes (neuron rule × schedule).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    BaselineIf,
    CifOnly,
    WscOnly,
    Casc,
}

impl Regime {
    pub fn mode(self) -> NeuronMode {
        match self {
            Regime::BaselineIf | Regime::WscOnly => NeuronMode::If,
            Regime::CifOnly | Regime::Casc => NeuronMode::Cif,
        }
    }

    /// Whether input and biases are gated off after the wake phase.
    pub fn wsc_enabled(self) -> bool {
        matches!(self, Regime::WscOnly | Regime::Casc)
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::BaselineIf => "baseline-if",
            Regime::CifOnly => "cif-only",
            Regime::WscOnly => "wsc-only",
            Regime::Casc => "casc",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "baseline-if" => Ok(Regime::BaselineIf),
            "cif-only" => Ok(Regime::CifOnly),
            "wsc-only" => Ok(Regime::WscOnly),
            "casc" => Ok(Regime::Casc),
            other => Err(CascError::InvalidModel(format!(
                "unknown regime {other:?} (expected baseline-if, cif-only, wsc-only, casc)"
            ))),
        }
    }

    pub fn all() -> [Regime; 4] {
        [Regime::BaselineIf, Regime::CifOnly, Regime::WscOnly, Regime::Casc]
    }
}

/// Simulation clock contract: wake length, step budget, early stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WscSchedule {
    pub q_wake: usize,
    pub t_max: usize,
    pub quiescence_stop: bool,
}

impl WscSchedule {
    pub fn new(q_wake: usize, t_max: usize, quiescence_stop: bool) -> Result<Self> {
        if q_wake < 1 || t_max < q_wake {
            return Err(CascError::InvalidModel(format!(
                "schedule requires t_max ≥ q_wake ≥ 1, got q_wake={q_wake}, t_max={t_max}"
            )));
        }
        Ok(WscSchedule {
            q_wake,
            t_max,
            quiescence_stop,
        })
    }

    /// Wake for Q steps with the default 8·Q budget and early stop.
    pub fn for_q(q: u32) -> Self {
        WscSchedule {
            q_wake: q as usize,
            t_max: 8 * q as usize,
            quiescence_stop: true,
        }
    }
}

/// Per-layer spiking state: membrane potentials, cumulative signed counts,
/// cumulative input (kept for diagnostics).
#[derive(Debug, Clone)]
pub struct NeuronArray {
    pub v: Vec<f64>,
    pub y: Vec<i64>,
    pub x_total: Vec<f64>,
    pub mode: NeuronMode,
    pub cap: u32,
}

impl NeuronArray {
    pub fn new(len: usize, mode: NeuronMode, cap: u32) -> Self {
        NeuronArray {
            v: vec![0.0; len],
            y: vec![0; len],
            x_total: vec![0.0; len],
            mode,
            cap,
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn reset(&mut self) {
        self.v.iter_mut().for_each(|v| *v = 0.0);
        self.y.iter_mut().for_each(|y| *y = 0);
        self.x_total.iter_mut().for_each(|x| *x = 0.0);
    }

    fn ensure_len(&mut self, len: usize) {
        if self.v.len() != len {
            self.v = vec![0.0; len];
            self.y = vec![0; len];
            self.x_total = vec![0.0; len];
        }
    }
}

/// Spikes of every activated layer for one time step, values in {−1, 0, +1}.
#[derive(Debug, Clone, Default)]
pub struct SpikeFrame {
    pub layers: Vec<Vec<i8>>,
}

fn check_current(current: &[f64], arr: &NeuronArray, what: &str) -> Result<()> {
    if current.len() != arr.len() {
        return Err(CascError::shape(
            what,
            format!("{} currents", arr.len()),
            format!("{}", current.len()),
        ));
    }
    if current.iter().any(|c| !c.is_finite()) {
        return Err(CascError::NonFinite(format!("{what} input current")));
    }
    Ok(())
}

/// One IF step with soft reset: charge, fire at `v ≥ 1`, subtract the spike.
pub fn step_if(arr: &mut NeuronArray, current: &[f64]) -> Result<Vec<i8>> {
    debug_assert_eq!(arr.mode, NeuronMode::If);
    check_current(current, arr, "step_if")?;
    let mut spikes = vec![0i8; arr.len()];
    for i in 0..arr.len() {
        arr.v[i] += current[i];
        arr.x_total[i] += current[i];
        if arr.v[i] >= 1.0 {
            spikes[i] = 1;
            arr.v[i] -= 1.0;
            arr.y[i] += 1;
        }
    }
    Ok(spikes)
}

/// One consistent-IF step: charge, then emit +1 at `v ≥ 1` while below the
/// count cap, or −1 at `v < 0` while the count is positive.
pub fn step_cif(arr: &mut NeuronArray, current: &[f64]) -> Result<Vec<i8>> {
    debug_assert_eq!(arr.mode, NeuronMode::Cif);
    check_current(current, arr, "step_cif")?;
    let cap = arr.cap as i64;
    let mut spikes = vec![0i8; arr.len()];
    for i in 0..arr.len() {
        arr.v[i] += current[i];
        arr.x_total[i] += current[i];
        if arr.v[i] >= 1.0 && arr.y[i] < cap {
            spikes[i] = 1;
            arr.v[i] -= 1.0;
            arr.y[i] += 1;
        } else if arr.v[i] < 0.0 && arr.y[i] > 0 {
            spikes[i] = -1;
            arr.v[i] += 1.0;
            arr.y[i] -= 1;
        }
    }
    Ok(spikes)
}

fn step_array(arr: &mut NeuronArray, current: &[f64]) -> Result<Vec<i8>> {
    match arr.mode {
        NeuronMode::If => step_if(arr, current),
        NeuronMode::Cif => step_cif(arr, current),
    }
}

/// Spiking mirror of a [`QNetwork`]: identical weights and geometry, one
/// neuron array per activated layer, a current integrator behind the final
/// layer. Arrays are sized lazily on the first simulated step because conv
/// layer extents depend on the input shape.
#[derive(Debug, Clone)]
pub struct SnnNetwork {
    pub layers: Vec<LayerSpec>,
    pub q: u32,
    pub v_th: f64,
    pub arrays: Vec<Option<NeuronArray>>,
    pub output_acc: Vec<f64>,
    output_shape: Vec<usize>,
}

/// Map a trained network onto a spiking one. Weights are copied unchanged;
/// every neuron starts at `v = 0`, `y = 0`.
pub fn convert(net: &QNetwork) -> SnnNetwork {
    let arrays = net
        .layers
        .iter()
        .map(|l| {
            l.activated()
                .then(|| NeuronArray::new(0, NeuronMode::Cif, net.q()))
        })
        .collect();
    SnnNetwork {
        layers: net.layers.clone(),
        q: net.q(),
        v_th: net.config.v_th,
        arrays,
        output_acc: Vec::new(),
        output_shape: Vec::new(),
    }
}

impl SnnNetwork {
    pub fn activated_layers(&self) -> usize {
        self.arrays.iter().flatten().count()
    }

    fn reset(&mut self, mode: NeuronMode) {
        for arr in self.arrays.iter_mut().flatten() {
            arr.mode = mode;
            arr.cap = self.q;
            arr.reset();
        }
        self.output_acc.clear();
        self.output_shape.clear();
    }
}

/// How much per-neuron history a run keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceDetail {
    /// Per-layer spike totals and the output accumulator only.
    Totals,
    /// Additionally record (I, X, V, s, Y) for every neuron at every step.
    Full,
}

/// Outcome of one simulation run.
#[derive(Debug, Clone)]
pub struct SimResult {
    /// Output integrator divided by the number of input-injection steps.
    pub decoded_output: Tensor,
    /// Final cumulative spike counts per activated layer.
    pub counts: Vec<Vec<i64>>,
    /// Counts divided by the same normalization (the decoded hidden
    /// activations).
    pub decoded_counts: Vec<Vec<f64>>,
    pub trace: SimTrace,
    /// Steps actually executed.
    pub steps: usize,
    pub quiescence_step: Option<usize>,
    /// Steps that carried external input; the decode normalization.
    pub injection_steps: usize,
}

/// `counts/Q` element-wise; counts outside [0, Q] mean an upstream invariant
/// broke and are rejected.
pub fn decode(counts: &[i64], q: u32) -> Result<Vec<f64>> {
    for (index, &count) in counts.iter().enumerate() {
        if count < 0 || count > q as i64 {
            return Err(CascError::CountOutOfRange { count, q, index });
        }
    }
    Ok(counts.iter().map(|&c| c as f64 / q as f64).collect())
}

/// Run the clocked simulation under a regime and schedule.
///
/// During wake steps (`t < q_wake`, or every step when the regime does not
/// gate input) the first layer receives `W·x + b` and deeper layers receive
/// `W·s + b`. During sleep steps external input and every bias are zero, so
/// layers receive only `W·s`. The run stops early at the first silent sleep
/// step when the schedule allows it.
pub fn simulate(
    snn: &mut SnnNetwork,
    input: &Tensor,
    sched: &WscSchedule,
    regime: Regime,
    detail: TraceDetail,
) -> Result<SimResult> {
    snn.reset(regime.mode());
    let wsc = regime.wsc_enabled();
    let zero_input = Tensor::zeros(input.shape().to_vec());

    let n_spiking = snn.activated_layers();
    let mut fired: Vec<Vec<usize>> = vec![Vec::new(); n_spiking];
    let mut output_acc_history: Vec<Vec<f64>> = Vec::new();
    let mut watched: BTreeMap<(usize, usize), NeuronTrace> = BTreeMap::new();
    let mut quiescence_step = None;
    let mut steps = 0;

    for t in 0..sched.t_max {
        let inject = !wsc || t < sched.q_wake;
        let mut signal = if inject { input.clone() } else { zero_input.clone() };
        let mut frame = SpikeFrame::default();
        let mut spiking_idx = 0;
        let last = snn.layers.len() - 1;

        for li in 0..snn.layers.len() {
            let z = snn.layers[li].apply(&signal, inject)?;
            match snn.arrays[li].as_mut() {
                Some(arr) => {
                    arr.ensure_len(z.len());
                    let spikes = step_array(arr, z.data())?;
                    if detail == TraceDetail::Full {
                        for (i, &s) in spikes.iter().enumerate() {
                            watched
                                .entry((spiking_idx, i))
                                .or_default()
                                .steps
                                .push(NeuronStep {
                                    current: z.data()[i],
                                    x_total: arr.x_total[i],
                                    v: arr.v[i],
                                    spike: s,
                                    y: arr.y[i],
                                });
                        }
                    }
                    fired[spiking_idx].push(spikes.iter().filter(|&&s| s != 0).count());
                    spiking_idx += 1;
                    let data: Vec<f64> = spikes.iter().map(|&s| s as f64).collect();
                    signal = Tensor::new(z.shape().to_vec(), data)?;
                    frame.layers.push(spikes);
                }
                None if li == last => {
                    if snn.output_acc.is_empty() {
                        snn.output_acc = vec![0.0; z.len()];
                        snn.output_shape = z.shape().to_vec();
                    }
                    for (acc, v) in snn.output_acc.iter_mut().zip(z.data()) {
                        *acc += v;
                    }
                }
                // Un-activated interior layers (not produced by validated
                // networks) pass their real-valued output through.
                None => signal = z,
            }
        }

        output_acc_history.push(snn.output_acc.clone());
        steps = t + 1;

        let silent = frame.layers.iter().all(|l| l.iter().all(|&s| s == 0));
        if wsc && !inject && silent && quiescence_step.is_none() {
            quiescence_step = Some(t);
            if sched.quiescence_stop {
                break;
            }
        }
    }

    let injection_steps = if wsc { sched.q_wake } else { steps };
    let counts: Vec<Vec<i64>> = snn
        .arrays
        .iter()
        .flatten()
        .map(|arr| arr.y.clone())
        .collect();
    let layer_sizes: Vec<usize> = snn.arrays.iter().flatten().map(|a| a.len()).collect();
    let decoded_counts: Vec<Vec<f64>> = counts
        .iter()
        .map(|c| c.iter().map(|&y| y as f64 / injection_steps as f64).collect())
        .collect();
    let decoded_output = Tensor::new(
        snn.output_shape.clone(),
        snn.output_acc
            .iter()
            .map(|&a| a / injection_steps as f64)
            .collect(),
    )?;

    let trace = SimTrace {
        layer_sizes,
        fired,
        steps,
        quiescence_step,
        input_horizon: sched.q_wake,
        wsc_enabled: wsc,
        output_acc: output_acc_history,
        watched,
    };

    Ok(SimResult {
        decoded_output,
        counts,
        decoded_counts,
        trace,
        steps,
        quiescence_step,
        injection_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qann::synth;

    fn single_if(cap: u32) -> NeuronArray {
        NeuronArray::new(1, NeuronMode::If, cap)
    }

    fn single_cif(cap: u32) -> NeuronArray {
        NeuronArray::new(1, NeuronMode::Cif, cap)
    }

    #[test]
    fn if_step_arithmetic() {
        let mut arr = single_if(8);
        arr.v[0] = 0.9;
        let s = step_if(&mut arr, &[0.2]).unwrap();
        assert_eq!(s, vec![1]);
        assert!((arr.v[0] - 0.1).abs() < 1e-12);

        let mut arr = single_if(8);
        arr.v[0] = 0.5;
        let s = step_if(&mut arr, &[0.2]).unwrap();
        assert_eq!(s, vec![0]);
        assert!((arr.v[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn if_constant_drive_rate() {
        // Constant 0.58 for 16 steps spikes 9 times (rate 0.5625).
        let mut arr = single_if(8);
        let mut total = 0i64;
        for _ in 0..16 {
            total += step_if(&mut arr, &[0.58]).unwrap()[0] as i64;
        }
        assert_eq!(total, 9);
        assert_eq!(arr.y[0], 9);
    }

    #[test]
    fn cif_negative_spike_rule() {
        // v lands at −0.2 with history → retract.
        let mut arr = single_cif(8);
        arr.y[0] = 3;
        arr.v[0] = 0.4;
        let s = step_cif(&mut arr, &[-0.6]).unwrap();
        assert_eq!(s, vec![-1]);
        assert!((arr.v[0] - 0.8).abs() < 1e-12);
        assert_eq!(arr.y[0], 2);

        // Same potential without history → the Y > 0 guard blocks it.
        let mut arr = single_cif(8);
        arr.v[0] = 0.4;
        let s = step_cif(&mut arr, &[-0.6]).unwrap();
        assert_eq!(s, vec![0]);
        assert_eq!(arr.y[0], 0);
    }

    #[test]
    fn cif_three_step_example() {
        let mut arr = single_cif(8);
        let mut emissions = Vec::new();
        for c in [1.6, 0.9, -1.2] {
            emissions.push(step_cif(&mut arr, &[c]).unwrap()[0]);
        }
        assert_eq!(emissions, vec![1, 1, -1]);
        assert_eq!(arr.y[0], 1); // ⌊1.3⌋
    }

    #[test]
    fn cif_exact_zero_potential_is_quiet() {
        // v = 0 exactly must not trigger a negative spike (rule is v < 0).
        let mut arr = single_cif(8);
        arr.y[0] = 2;
        arr.v[0] = 0.5;
        let s = step_cif(&mut arr, &[-0.5]).unwrap();
        assert_eq!(s, vec![0]);
        // And v = 1 exactly fires.
        let s = step_cif(&mut arr, &[1.0]).unwrap();
        assert_eq!(s, vec![1]);
    }

    #[test]
    fn cif_count_cap_blocks_firing() {
        let mut arr = single_cif(2);
        for _ in 0..5 {
            step_cif(&mut arr, &[1.5]).unwrap();
        }
        assert_eq!(arr.y[0], 2);
    }

    #[test]
    fn non_finite_current_aborts() {
        let mut arr = single_if(8);
        assert!(step_if(&mut arr, &[f64::NAN]).is_err());
        let mut arr = single_cif(8);
        assert!(step_cif(&mut arr, &[f64::INFINITY]).is_err());
    }

    #[test]
    fn soft_reset_identity_holds() {
        let mut arr = single_cif(8);
        let currents = [0.7, -0.3, 1.9, 0.2, -2.5, 0.4];
        for c in currents {
            step_cif(&mut arr, &[c]).unwrap();
            assert!(
                (arr.v[0] - (arr.x_total[0] - arr.y[0] as f64)).abs() < 1e-9,
                "v {} != x {} − y {}",
                arr.v[0],
                arr.x_total[0],
                arr.y[0]
            );
        }
    }

    #[test]
    fn convert_mirrors_topology() {
        let net = synth::bundled_mlp(8);
        let snn = convert(&net);
        assert_eq!(snn.activated_layers(), net.activated_layers());
        assert_eq!(snn.q, 8);
        assert_eq!(snn.v_th, 1.0);
        for (a, b) in snn.layers.iter().zip(&net.layers) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn schedule_invariant() {
        assert!(WscSchedule::new(0, 4, true).is_err());
        assert!(WscSchedule::new(8, 4, true).is_err());
        assert!(WscSchedule::new(4, 4, true).is_ok());
    }

    #[test]
    fn casc_scalar_probe_decodes_quantized_value() {
        let net = synth::scalar_probe(8);
        let mut snn = convert(&net);
        let input = Tensor::from_vec(vec![0.58]).unwrap();
        let sched = WscSchedule::for_q(8);
        let result = simulate(&mut snn, &input, &sched, Regime::Casc, TraceDetail::Totals).unwrap();
        assert_eq!(result.counts[0], vec![4]);
        assert_eq!(result.decoded_counts[0], vec![0.5]);
        assert_eq!(result.decoded_output.data(), &[0.5]);
        assert!(result.quiescence_step.is_some());
    }

    #[test]
    fn baseline_scalar_probe_overshoots() {
        let net = synth::scalar_probe(8);
        let mut snn = convert(&net);
        let input = Tensor::from_vec(vec![0.58]).unwrap();
        let sched = WscSchedule::new(8, 16, true).unwrap();
        let result =
            simulate(&mut snn, &input, &sched, Regime::BaselineIf, TraceDetail::Totals).unwrap();
        assert_eq!(result.steps, 16);
        assert_eq!(result.counts[0], vec![9]);
        assert_eq!(result.decoded_counts[0], vec![0.5625]);
        assert!(result.quiescence_step.is_none());
    }

    #[test]
    fn zero_input_zero_bias_stays_silent() {
        let net = synth::scalar_probe(8);
        let mut snn = convert(&net);
        let input = Tensor::from_vec(vec![0.0]).unwrap();
        let sched = WscSchedule::for_q(8);
        let result = simulate(&mut snn, &input, &sched, Regime::Casc, TraceDetail::Totals).unwrap();
        assert_eq!(result.counts[0], vec![0]);
        assert_eq!(result.decoded_output.data(), &[0.0]);
        assert_eq!(result.quiescence_step, Some(8));
        assert!(result.trace.fired[0].iter().all(|&c| c == 0));
    }

    #[test]
    fn decode_checks_range() {
        assert_eq!(decode(&[0, 4, 8], 8).unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(decode(&[9], 8).is_err());
        assert!(decode(&[-1], 8).is_err());
    }

    #[test]
    fn if_frames_never_negative() {
        let net = synth::bundled_mlp(8);
        let mut snn = convert(&net);
        let mut rng = crate::rng::Rng::new(2);
        let input = synth::random_input(&[6], &mut rng);
        let sched = WscSchedule::for_q(8);
        let result =
            simulate(&mut snn, &input, &sched, Regime::BaselineIf, TraceDetail::Full).unwrap();
        for hist in result.trace.watched.values() {
            assert!(hist.steps.iter().all(|s| s.spike >= 0));
        }
    }
}
