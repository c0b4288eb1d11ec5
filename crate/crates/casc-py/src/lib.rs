//! Python bindings for the conversion engine.
//!
//! Exposes the quantized network type, the clocked simulation, the
//! activation, and the single-neuron reference so the engine can be driven
//! from notebooks and scripts:
//!
//! ```text
//! import casc_py
//! net = casc_py.QuantizedNetwork.bundled_mlp(8)
//! run = net.simulate([0.1] * 6, regime="casc")
//! assert run.lossless
//! ```

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use casc_core::oracle::{neuron_oracle, CurrentSequence};
use casc_core::qann::{self, synth, Hyper, Loss, QNetwork};
use casc_core::snn::{convert, simulate, NeuronMode, Regime, TraceDetail, WscSchedule};
use casc_core::tensor::Tensor;
use casc_core::CascError;

fn to_py_err(e: CascError) -> PyErr {
    match e {
        CascError::CountOutOfRange { .. } | CascError::UnknownNeuron { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

fn build_tensor(data: Vec<f64>, shape: Option<Vec<usize>>) -> PyResult<Tensor> {
    match shape {
        Some(shape) => Tensor::new(shape, data).map_err(to_py_err),
        None => Tensor::from_vec(data).map_err(to_py_err),
    }
}

/// Clip-quantized ReLU: `Clip(⌊x·Q⌋/Q, 0, 1)`.
#[pyfunction]
fn cqrelu(x: f64, q: u32) -> PyResult<f64> {
    if q < 1 {
        return Err(PyValueError::new_err("Q must be ≥ 1"));
    }
    Ok(qann::cqrelu(x, q))
}

/// One neuron-trace row: (current, x_total, v, spike, y).
type TraceRow = (f64, f64, f64, i8, i64);

/// Step a single neuron through a current schedule (plus silent steps up to
/// `t_max`) and return per-step rows `(current, x_total, v, spike, y)`.
#[pyfunction]
#[pyo3(signature = (currents, mode="cif", q=8, t_max=None))]
fn neuron_trace(
    currents: Vec<f64>,
    mode: &str,
    q: u32,
    t_max: Option<usize>,
) -> PyResult<Vec<TraceRow>> {
    let mode = match mode {
        "if" => NeuronMode::If,
        "cif" => NeuronMode::Cif,
        other => return Err(PyValueError::new_err(format!("mode must be \"if\" or \"cif\", got {other:?}"))),
    };
    let t_max = t_max.unwrap_or(currents.len() + 2 * q as usize + 8);
    let (_, trace) = neuron_oracle(&CurrentSequence::new(currents), mode, q, t_max);
    Ok(trace
        .steps
        .iter()
        .map(|s| (s.current, s.x_total, s.v, s.spike, s.y))
        .collect())
}

/// Outcome of one simulation run.
#[pyclass]
struct SimulationOutcome {
    #[pyo3(get)]
    decoded: Vec<f64>,
    #[pyo3(get)]
    ann_logits: Vec<f64>,
    #[pyo3(get)]
    counts: Vec<Vec<i64>>,
    #[pyo3(get)]
    layer_exact: Vec<bool>,
    #[pyo3(get)]
    lossless: bool,
    #[pyo3(get)]
    quiescence_step: Option<usize>,
    #[pyo3(get)]
    steps: usize,
}

#[pymethods]
impl SimulationOutcome {
    fn __repr__(&self) -> String {
        format!(
            "SimulationOutcome(lossless={}, steps={}, quiescence_step={:?})",
            self.lossless, self.steps, self.quiescence_step
        )
    }
}

/// A quantized feed-forward network plus its quantization level.
#[pyclass]
struct QuantizedNetwork {
    inner: QNetwork,
}

#[pymethods]
impl QuantizedNetwork {
    /// Parse a model from its JSON file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = qann::load_model(std::path::Path::new(path)).map_err(to_py_err)?;
        Ok(QuantizedNetwork { inner })
    }

    /// Parse a model from JSON text.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(QuantizedNetwork {
            inner: qann::model_from_json(text).map_err(to_py_err)?,
        })
    }

    /// The bundled fully connected demo model (input width 6).
    #[staticmethod]
    fn bundled_mlp(q: u32) -> PyResult<Self> {
        if q < 1 {
            return Err(PyValueError::new_err("Q must be ≥ 1"));
        }
        Ok(QuantizedNetwork { inner: synth::bundled_mlp(q) })
    }

    /// The bundled convolutional demo model (input shape [1, 8, 8]).
    #[staticmethod]
    fn bundled_cnn(q: u32) -> PyResult<Self> {
        if q < 1 {
            return Err(PyValueError::new_err("Q must be ≥ 1"));
        }
        Ok(QuantizedNetwork { inner: synth::bundled_cnn(q) })
    }

    /// Two identity 1×1 layers; feeding a scalar exposes the raw
    /// activation/firing-rate relation.
    #[staticmethod]
    fn scalar_probe(q: u32) -> PyResult<Self> {
        if q < 1 {
            return Err(PyValueError::new_err("Q must be ≥ 1"));
        }
        Ok(QuantizedNetwork { inner: synth::scalar_probe(q) })
    }

    /// Train a fresh two-layer MLP on a synthetic task ("blobs" or "rings")
    /// and return it together with the final train accuracy.
    #[staticmethod]
    #[pyo3(signature = (task, q=8, lr=0.1, epochs=60, batch=16, seed=7, samples=100, hidden=16))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        task: &str,
        q: u32,
        lr: f64,
        epochs: usize,
        batch: usize,
        seed: u64,
        samples: usize,
        hidden: usize,
    ) -> PyResult<(Self, f64)> {
        let data = synth::dataset(task, samples, seed).map_err(to_py_err)?;
        let mut net = synth::mlp_from_sizes(&[2, hidden, 2], q, seed);
        net.name = format!("{task}-q{q}-seed{seed}");
        let hyper = Hyper { lr, epochs, batch, seed, loss: Loss::CrossEntropy };
        let report = qann::train_ste(&mut net, &data, &hyper).map_err(to_py_err)?;
        Ok((QuantizedNetwork { inner: net }, report.train_accuracy))
    }

    fn save(&self, path: &str) -> PyResult<()> {
        qann::save_model(&self.inner, std::path::Path::new(path)).map_err(to_py_err)
    }

    fn to_json(&self) -> String {
        qann::model_to_json(&self.inner)
    }

    #[getter]
    fn q(&self) -> u32 {
        self.inner.q()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn activated_layers(&self) -> usize {
        self.inner.activated_layers()
    }

    /// Quantized forward pass: returns `(logits, activations_per_layer)`.
    #[pyo3(signature = (data, shape=None))]
    fn forward(
        &self,
        data: Vec<f64>,
        shape: Option<Vec<usize>>,
    ) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let input = build_tensor(data, shape)?;
        let out = qann::ann_forward(&self.inner, &input).map_err(to_py_err)?;
        Ok((
            out.logits.data().to_vec(),
            out.activations.iter().map(|a| a.data().to_vec()).collect(),
        ))
    }

    /// Convert and run the clocked simulation.
    ///
    /// `regime` is one of "baseline-if", "cif-only", "wsc-only", "casc";
    /// `t_max` defaults to 8·Q.
    #[pyo3(signature = (data, shape=None, regime="casc", t_max=None))]
    fn simulate(
        &self,
        data: Vec<f64>,
        shape: Option<Vec<usize>>,
        regime: &str,
        t_max: Option<usize>,
    ) -> PyResult<SimulationOutcome> {
        let input = build_tensor(data, shape)?;
        let regime = Regime::parse(regime).map_err(to_py_err)?;
        let q = self.inner.q();
        let t_max = t_max.unwrap_or(8 * q as usize);
        if t_max < q as usize {
            return Err(PyValueError::new_err(format!(
                "t_max ≥ Q required (got t_max={t_max}, Q={q})"
            )));
        }
        let sched = WscSchedule::new(q as usize, t_max, true).map_err(to_py_err)?;
        let ann = qann::ann_forward(&self.inner, &input).map_err(to_py_err)?;
        let mut snn = convert(&self.inner);
        let result =
            simulate(&mut snn, &input, &sched, regime, TraceDetail::Totals).map_err(to_py_err)?;

        let layer_exact: Vec<bool> = result
            .counts
            .iter()
            .zip(&ann.levels)
            .map(|(c, l)| c == l)
            .collect();
        Ok(SimulationOutcome {
            decoded: result.decoded_output.data().to_vec(),
            ann_logits: ann.logits.data().to_vec(),
            counts: result.counts,
            lossless: layer_exact.iter().all(|&b| b),
            layer_exact,
            quiescence_step: result.quiescence_step,
            steps: result.steps,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "QuantizedNetwork(name={:?}, q={}, layers={})",
            self.inner.name,
            self.inner.q(),
            self.inner.layers.len()
        )
    }
}

#[pymodule]
fn casc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<QuantizedNetwork>()?;
    m.add_class::<SimulationOutcome>()?;
    m.add_function(wrap_pyfunction!(cqrelu, m)?)?;
    m.add_function(wrap_pyfunction!(neuron_trace, m)?)?;
    Ok(())
}
