//! Network-level properties of the conversion: exactness of the combined
//! regime, the definitional link between count equality and the mismatch
//! ratios, stable points at quiescence, and the two single-neuron failure
//! shapes that motivate the upper/lower bound conditions.

use casc_core::diagnostics::{
    bound_violations, bound_violations_of, build_report, spike_mismatch, stable_points, NeuronId,
};
use casc_core::oracle::{neuron_oracle, CurrentSequence};
use casc_core::qann::{ann_forward, synth};
use casc_core::rng::Rng;
use casc_core::snn::{convert, simulate, NeuronMode, Regime, TraceDetail, WscSchedule};
use casc_core::tensor::Tensor;

#[test]
fn casc_is_exact_on_random_nets() {
    let mut rng = Rng::new(0xcafe);
    for case in 0..60 {
        let q = [4u32, 8, 16][case % 3];
        let (net, shape) = if case % 2 == 0 {
            synth::random_mlp(&mut rng, q)
        } else {
            synth::random_cnn(&mut rng, q)
        };
        let input = synth::random_input(&shape, &mut rng);
        let ann = ann_forward(&net, &input).unwrap();

        let mut snn = convert(&net);
        let sched = WscSchedule::for_q(q);
        let result = simulate(&mut snn, &input, &sched, Regime::Casc, TraceDetail::Totals).unwrap();

        assert!(
            result.quiescence_step.is_some(),
            "no quiescence within {} steps (net {})",
            sched.t_max,
            net.name
        );
        for (layer, (counts, levels)) in result.counts.iter().zip(&ann.levels).enumerate() {
            assert_eq!(counts, levels, "count mismatch at layer {layer} of {}", net.name);
        }
        for (d, l) in result.decoded_output.data().iter().zip(ann.logits.data()) {
            assert!((d - l).abs() < 1e-6, "logit {d} vs {l}");
        }
    }
}

#[test]
fn zero_mismatch_iff_counts_equal_levels() {
    let mut rng = Rng::new(0xbead);
    let mut saw_exact = false;
    let mut saw_inexact = false;
    for case in 0..30 {
        let q = 8;
        let (net, shape) = synth::random_mlp(&mut rng, q);
        let input = if case % 2 == 0 {
            synth::random_input(&shape, &mut rng)
        } else {
            synth::adversarial_input(&net, &shape, 256).unwrap()
        };
        let ann = ann_forward(&net, &input).unwrap();
        let regime = if case % 2 == 0 { Regime::Casc } else { Regime::BaselineIf };
        let sched = WscSchedule::new(q as usize, 2 * q as usize, true).unwrap();
        let mut snn = convert(&net);
        let result = simulate(&mut snn, &input, &sched, regime, TraceDetail::Totals).unwrap();

        let mismatch = spike_mismatch(&result.counts, &ann.activations, q).unwrap();
        let all_zero = mismatch.iter().all(|m| m.more == 0.0 && m.less == 0.0);
        let exact = result.counts == ann.levels;
        assert_eq!(all_zero, exact);
        saw_exact |= exact;
        saw_inexact |= !exact;
    }
    assert!(saw_exact && saw_inexact, "both sides of the equivalence must occur");
}

#[test]
fn quiescent_step_is_stable_for_every_neuron() {
    let q = 8;
    let net = synth::bundled_mlp(q);
    let input = synth::random_input(&synth::bundled_mlp_input_shape(), &mut Rng::new(21));
    let mut snn = convert(&net);
    let sched = WscSchedule::for_q(q);
    let result = simulate(&mut snn, &input, &sched, Regime::Casc, TraceDetail::Full).unwrap();
    assert!(result.quiescence_step.is_some());

    let last = result.steps - 1;
    for (&(layer, index), hist) in &result.trace.watched {
        // Terminal law for every neuron: the settled count is the clipped
        // floor of its total input. Inside the clip range that makes the
        // final step a stable point; clipped neurons saturate instead.
        let end = hist.steps.last().unwrap();
        let clipped = end.x_total.floor().clamp(0.0, q as f64) as i64;
        assert_eq!(end.y, clipped, "neuron ({layer},{index}) off its settled count");
        if end.x_total >= 0.0 && end.x_total.floor() as i64 <= q as i64 {
            let stable = stable_points(&result.trace, NeuronId { layer, index }).unwrap();
            assert!(
                stable.contains(&last),
                "neuron ({layer},{index}) not stable at the quiescent step"
            );
        }
    }
}

#[test]
fn front_loaded_current_overshoots_upper_bound() {
    // A large early current locks in a spike that later negative input
    // cannot retract under the plain IF rule.
    let seq = CurrentSequence::new(vec![2.9, -2.0]);
    let (y, trace) = neuron_oracle(&seq, NeuronMode::If, 8, 2);
    let last = trace.steps.last().unwrap();
    let x_frac = last.x_total - last.x_total.floor();

    let bv = bound_violations_of(&trace, seq.wake);
    assert!(!bv.upper.is_empty());
    assert!(y > last.x_total.floor() as i64, "more spikes than owed");
    assert!(last.v <= x_frac + 1e-12, "terminal potential below the fractional part");
}

#[test]
fn back_loaded_current_breaks_lower_bound() {
    // All charge arrives on the final step; only one step remains to emit
    // two owed spikes.
    let seq = CurrentSequence::new(vec![0.0, 0.0, 0.0, 2.5]);
    let (y, trace) = neuron_oracle(&seq, NeuronMode::If, 8, 4);
    let last = trace.steps.last().unwrap();
    let x_frac = last.x_total - last.x_total.floor();

    let bv = bound_violations_of(&trace, seq.wake);
    assert!(bv.lower);
    assert!(y < last.x_total.floor() as i64, "fewer spikes than owed");
    assert!(last.v >= x_frac - 1e-12, "terminal potential above the fractional part");
}

#[test]
fn ablation_arms_fail_where_casc_succeeds() {
    let mut rng = Rng::new(0xab1a);
    let q = 8;
    let mut wsc_only_miss = false;
    let mut cif_only_miss = false;
    for _ in 0..40 {
        let (net, shape) = synth::random_mlp(&mut rng, q);
        let input = synth::adversarial_input(&net, &shape, 256).unwrap();
        let ann = ann_forward(&net, &input).unwrap();
        let sched = WscSchedule::new(q as usize, 8 * q as usize, true).unwrap();

        for regime in [Regime::WscOnly, Regime::CifOnly, Regime::Casc] {
            let mut snn = convert(&net);
            let result = simulate(&mut snn, &input, &sched, regime, TraceDetail::Totals).unwrap();
            let exact = result.counts == ann.levels;
            match regime {
                Regime::Casc => assert!(exact, "combined regime must stay exact"),
                Regime::WscOnly => wsc_only_miss |= !exact,
                Regime::CifOnly => cif_only_miss |= !exact,
                Regime::BaselineIf => unreachable!(),
            }
        }
    }
    assert!(wsc_only_miss, "schedule alone should miss on some drive");
    assert!(cif_only_miss, "consistent neurons alone should miss on some drive");
}

#[test]
fn network_freezes_after_quiescence() {
    let q = 8;
    let net = synth::bundled_cnn(q);
    let input = synth::random_input(&synth::bundled_cnn_input_shape(), &mut Rng::new(5));
    let mut snn = convert(&net);
    // Run the full budget with no early stop and confirm nothing moves after
    // the first silent sleep step.
    let sched = WscSchedule::new(q as usize, 6 * q as usize, false).unwrap();
    let result = simulate(&mut snn, &input, &sched, Regime::Casc, TraceDetail::Totals).unwrap();
    let t_star = result.quiescence_step.expect("must settle");

    for layer in &result.trace.fired {
        for (t, &count) in layer.iter().enumerate() {
            if t >= t_star {
                assert_eq!(count, 0, "spike after quiescence at step {t}");
            }
        }
    }
    let frozen = &result.trace.output_acc[t_star];
    for acc in &result.trace.output_acc[t_star..] {
        assert_eq!(acc, frozen);
    }
}

#[test]
fn output_mse_settles_to_zero_only_with_the_combined_regime() {
    let q = 8u32;
    let net = synth::bundled_mlp(q);
    let shape = synth::bundled_mlp_input_shape();
    let input = synth::adversarial_input(&net, &shape, 512).unwrap();
    let ann = ann_forward(&net, &input).unwrap();

    let mut snn = convert(&net);
    let casc = simulate(&mut snn, &input, &WscSchedule::for_q(q), Regime::Casc, TraceDetail::Totals)
        .unwrap();
    let report = build_report(&casc.trace, &casc.counts, &ann, q).unwrap();
    let (_, final_mse) = *report.mse_samples.last().unwrap();
    assert!(final_mse < 1e-12, "settled MSE {final_mse}");

    let sched = WscSchedule::new(q as usize, 2 * q as usize, true).unwrap();
    let base = simulate(&mut snn, &input, &sched, Regime::BaselineIf, TraceDetail::Totals).unwrap();
    let report = build_report(&base.trace, &base.counts, &ann, q).unwrap();
    let (_, final_mse) = *report.mse_samples.last().unwrap();
    assert!(final_mse > 0.0, "baseline MSE unexpectedly zero");
}

#[test]
fn retraction_example_shows_a_corrected_upper_violation() {
    // Currents [1.6, 0.9, −1.2]: the consistent neuron overshoots to Y = 2
    // (above ⌊1.3⌋ = 1) and pulls back on the final step.
    let seq = CurrentSequence::new(vec![1.6, 0.9, -1.2]);
    let (y, trace) = neuron_oracle(&seq, NeuronMode::Cif, 8, 3);
    assert_eq!(y, 1);
    let bv = bound_violations_of(&trace, seq.wake);
    assert_eq!(bv.upper.iter().copied().collect::<Vec<_>>(), vec![1]);
    assert!(!bv.lower);
}

#[test]
fn baseline_probe_trace_shows_upper_violations_past_the_wake_horizon() {
    // x = 0.58, Q = 8, T = 16 without input gating: the count climbs to 9
    // while the wake-horizon input floors at 4.
    let net = synth::scalar_probe(8);
    let mut snn = convert(&net);
    let input = Tensor::from_vec(vec![0.58]).unwrap();
    let sched = WscSchedule::new(8, 16, true).unwrap();
    let result = simulate(&mut snn, &input, &sched, Regime::BaselineIf, TraceDetail::Full).unwrap();
    assert_eq!(result.counts[0], vec![9]);

    let bv = bound_violations(&result.trace, NeuronId { layer: 0, index: 0 }).unwrap();
    assert!(!bv.upper.is_empty());
    assert!(bv.upper.iter().all(|&t| t >= 8), "violations start after the horizon");
}

#[test]
fn binary_quantization_still_converts_exactly() {
    // Q = 1: activations are {0, 1} and the combined regime stays exact.
    let mut rng = Rng::new(0xb1);
    for _ in 0..20 {
        let (net, shape) = synth::random_mlp(&mut rng, 1);
        let input = synth::random_input(&shape, &mut rng);
        let ann = ann_forward(&net, &input).unwrap();
        for levels in &ann.levels {
            assert!(levels.iter().all(|&l| l == 0 || l == 1));
        }
        let mut snn = convert(&net);
        let result =
            simulate(&mut snn, &input, &WscSchedule::for_q(1), Regime::Casc, TraceDetail::Totals)
                .unwrap();
        assert_eq!(result.counts, ann.levels);
    }
}

#[test]
fn negative_spikes_occur_and_are_corrected() {
    // Across a batch of consistent-regime runs some neuron must retract at
    // least once, and the end state is still exact.
    let mut rng = Rng::new(0x9e9);
    let mut saw_negative = false;
    for _ in 0..20 {
        let (net, shape) = synth::random_mlp(&mut rng, 8);
        let input = synth::random_input(&shape, &mut rng);
        let ann = ann_forward(&net, &input).unwrap();
        let mut snn = convert(&net);
        let sched = WscSchedule::for_q(8);
        let result = simulate(&mut snn, &input, &sched, Regime::Casc, TraceDetail::Full).unwrap();
        assert_eq!(result.counts, ann.levels);
        saw_negative |= result
            .trace
            .watched
            .values()
            .any(|h| h.steps.iter().any(|s| s.spike < 0));
    }
    assert!(saw_negative, "no retraction observed in 20 runs");
}
