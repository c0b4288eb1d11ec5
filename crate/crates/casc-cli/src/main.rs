//! `casc` — train toy quantized models, convert them to spiking networks,
//! simulate under any regime, and export the conversion diagnostics.
//!
//! Exit codes: 0 success, 2 usage/config error, 3 data/shape error,
//! 4 internal invariant breach. Set `CASC_LOG` to quiet/info/trace to
//! control progress output on stderr; file outputs are byte-identical for
//! identical configs and seeds.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use casc_core::diagnostics::{
    build_report, export_csv, firing_ratio_csv, mismatch_csv, relerr_csv, trace_csv,
};
use casc_core::qann::{
    ann_forward, cqrelu, load_model, save_model, synth, train_ste, Hyper, Loss, QNetwork,
};
use casc_core::rng::Rng;
use casc_core::snn::{convert, simulate, Regime, SimResult, TraceDetail, WscSchedule};
use casc_core::tensor::Tensor;
use casc_core::CascError;

#[derive(Parser)]
#[command(name = "casc", version, about = "Quantized ANN → spiking network conversion engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Blobs,
    Rings,
}

impl TaskArg {
    fn name(self) -> &'static str {
        match self {
            TaskArg::Blobs => "blobs",
            TaskArg::Rings => "rings",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    BaselineIf,
    CifOnly,
    WscOnly,
    Casc,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Regime {
        match r {
            RegimeArg::BaselineIf => Regime::BaselineIf,
            RegimeArg::CifOnly => Regime::CifOnly,
            RegimeArg::WscOnly => Regime::WscOnly,
            RegimeArg::Casc => Regime::Casc,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a toy model on a synthetic task and write model + metrics files.
    Train {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, default_value_t = 8)]
        q: u32,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 60)]
        epochs: usize,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Samples per class.
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Hidden width of the trained MLP.
        #[arg(long, default_value_t = 16)]
        hidden: usize,
        #[arg(long, default_value = "casc-out")]
        out: PathBuf,
    },
    /// Convert a model, simulate it under a regime, export results + CSVs.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        /// Input tensor: inline JSON (`[0.1,0.2]` or `{"shape":[1,8,8],"data":[...]}`)
        /// or a path to a JSON file. Omitted: a seeded random input (fully
        /// connected models only).
        #[arg(long)]
        input: Option<String>,
        #[arg(long, value_enum, default_value = "casc")]
        regime: RegimeArg,
        /// Total step budget (default 8·Q).
        #[arg(long)]
        t_max: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "casc-out")]
        out: PathBuf,
    },
    /// Print the activation/firing-rate table showing the overshoot of the
    /// plain rate decode and the settled decode that removes it.
    Demo {
        #[arg(long, default_value_t = 8)]
        q: u32,
        /// Plain-regime step budget (default 2·Q).
        #[arg(long)]
        t: Option<usize>,
    },
    /// Sweep quantization levels over all regimes on a bundled (or given)
    /// model; write steps-to-quiescence and exactness per row.
    Qsweep {
        /// Model file to sweep; default is the bundled fully connected model
        /// regenerated at each Q.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "casc-out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum LogLevel {
    Quiet,
    Info,
    Trace,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }
    fn data(message: impl Into<String>) -> Self {
        CliError { code: 3, message: message.into() }
    }
}

impl From<CascError> for CliError {
    fn from(e: CascError) -> Self {
        let code = match &e {
            CascError::CountOutOfRange { .. } | CascError::UnknownNeuron { .. } => 4,
            _ => 3,
        };
        CliError { code, message: e.to_string() }
    }
}

fn log_level() -> Result<LogLevel, CliError> {
    match std::env::var("CASC_LOG").as_deref() {
        Err(_) | Ok("info") => Ok(LogLevel::Info),
        Ok("quiet") => Ok(LogLevel::Quiet),
        Ok("trace") => Ok(LogLevel::Trace),
        Ok(other) => Err(CliError::usage(format!(
            "CASC_LOG must be quiet, info or trace (got {other:?})"
        ))),
    }
}

struct Logger {
    level: LogLevel,
}

impl Logger {
    fn info(&self, msg: &str) {
        if self.level >= LogLevel::Info {
            eprintln!("casc: {msg}");
        }
    }
    fn trace(&self, msg: &str) {
        if self.level >= LogLevel::Trace {
            eprintln!("casc[trace]: {msg}");
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let log = match log_level() {
        Ok(level) => Logger { level },
        Err(e) => {
            eprintln!("casc: {}", e.message);
            return ExitCode::from(e.code);
        }
    };
    let outcome = match cli.command {
        Command::Train { task, q, lr, epochs, batch, seed, samples, hidden, out } => {
            cmd_train(&log, task, q, lr, epochs, batch, seed, samples, hidden, &out)
        }
        Command::Simulate { model, input, regime, t_max, seed, out } => {
            cmd_simulate(&log, &model, input.as_deref(), regime.into(), t_max, seed, &out)
        }
        Command::Demo { q, t } => cmd_demo(q, t),
        Command::Qsweep { model, out } => cmd_qsweep(&log, model.as_deref(), &out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("casc: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

// === train ===

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    log: &Logger,
    task: TaskArg,
    q: u32,
    lr: f64,
    epochs: usize,
    batch: usize,
    seed: u64,
    samples: usize,
    hidden: usize,
    out: &Path,
) -> Result<(), CliError> {
    ensure_dir(out)?;
    let data = synth::dataset(task.name(), samples, seed)?;
    let mut net = synth::mlp_from_sizes(&[2, hidden, 2], q, seed);
    net.name = format!("{}-q{q}-seed{seed}", task.name());

    let hyper = Hyper { lr, epochs, batch, seed, loss: Loss::CrossEntropy };
    let report = train_ste(&mut net, &data, &hyper)?;
    log.info(&format!(
        "trained {}: loss {:.4} → {:.4}, accuracy {:.3}",
        net.name, report.initial_loss, report.final_loss, report.train_accuracy
    ));

    let model_path = out.join("model.json");
    save_model(&net, &model_path)?;

    let mut curve = String::from("epoch,loss\n");
    for (epoch, loss) in report.epoch_losses.iter().enumerate() {
        curve.push_str(&format!("{epoch},{loss:.9e}\n"));
    }
    write_text(&out.join("training_curve.csv"), &curve)?;

    #[derive(Serialize)]
    struct Metrics {
        task: String,
        q: u32,
        seed: u64,
        epochs: usize,
        initial_loss: f64,
        final_loss: f64,
        train_accuracy: f64,
    }
    let metrics = Metrics {
        task: task.name().into(),
        q,
        seed,
        epochs,
        initial_loss: report.initial_loss,
        final_loss: report.final_loss,
        train_accuracy: report.train_accuracy,
    };
    write_text(
        &out.join("metrics.json"),
        &serde_json::to_string_pretty(&metrics).expect("metrics serialize"),
    )?;
    log.info(&format!("wrote {}", model_path.display()));
    Ok(())
}

// === simulate ===

fn parse_input_json(text: &str) -> Result<Tensor, CliError> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| CliError::data(format!("input JSON: {e}")))?;
    let tensor = if let Some(arr) = value.as_array() {
        let data: Option<Vec<f64>> = arr.iter().map(|v| v.as_f64()).collect();
        let data = data.ok_or_else(|| CliError::data("input array must hold numbers"))?;
        Tensor::from_vec(data)?
    } else if value.is_object() {
        let shape: Vec<usize> = value["shape"]
            .as_array()
            .ok_or_else(|| CliError::data("input object needs a \"shape\" array"))?
            .iter()
            .map(|v| v.as_u64().map(|u| u as usize))
            .collect::<Option<_>>()
            .ok_or_else(|| CliError::data("input shape must hold non-negative integers"))?;
        let data: Vec<f64> = value["data"]
            .as_array()
            .ok_or_else(|| CliError::data("input object needs a \"data\" array"))?
            .iter()
            .map(|v| v.as_f64())
            .collect::<Option<_>>()
            .ok_or_else(|| CliError::data("input data must hold numbers"))?;
        Tensor::new(shape, data)?
    } else {
        return Err(CliError::data("input must be a JSON array or {shape,data} object"));
    };
    Ok(tensor)
}

fn resolve_input(net: &QNetwork, spec: Option<&str>, seed: u64) -> Result<Tensor, CliError> {
    match spec {
        Some(text) => {
            let trimmed = text.trim_start();
            if trimmed.starts_with('[') || trimmed.starts_with('{') {
                parse_input_json(text)
            } else {
                let file = std::fs::read_to_string(text)
                    .map_err(|e| CliError::data(format!("cannot read input {text}: {e}")))?;
                parse_input_json(&file)
            }
        }
        None => match &net.layers[0] {
            casc_core::qann::LayerSpec::Linear { weight, .. } => {
                let n_in = weight.shape()[1];
                Ok(synth::random_input(&[n_in], &mut Rng::new(seed)))
            }
            _ => Err(CliError::usage(
                "--input is required for models whose first layer is not fully connected",
            )),
        },
    }
}

#[derive(Serialize)]
struct ResultsFile {
    decoded: Vec<f64>,
    ann_logits: Vec<f64>,
    layer_exact: Vec<bool>,
    lossless: bool,
    quiescence_step: Option<usize>,
    regime: String,
    seed: u64,
}

fn run_simulation(
    net: &QNetwork,
    input: &Tensor,
    regime: Regime,
    t_max: Option<usize>,
    detail: TraceDetail,
) -> Result<(SimResult, Vec<bool>, casc_core::qann::AnnOutputs), CliError> {
    let q = net.q();
    let t_max = t_max.unwrap_or(8 * q as usize);
    if t_max < q as usize {
        return Err(CliError::usage(format!(
            "t_max ≥ Q required (got t_max={t_max}, Q={q})"
        )));
    }
    let sched = WscSchedule::new(q as usize, t_max, true)?;
    let ann = ann_forward(net, input)?;
    let mut snn = convert(net);
    let result = simulate(&mut snn, input, &sched, regime, detail)?;
    let layer_exact: Vec<bool> = result
        .counts
        .iter()
        .zip(&ann.levels)
        .map(|(c, l)| c == l)
        .collect();
    Ok((result, layer_exact, ann))
}

fn cmd_simulate(
    log: &Logger,
    model: &Path,
    input: Option<&str>,
    regime: Regime,
    t_max: Option<usize>,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    ensure_dir(out)?;
    let net = load_model(model)?;
    let input = resolve_input(&net, input, seed)?;
    let (result, layer_exact, ann) = run_simulation(&net, &input, regime, t_max, TraceDetail::Full)?;

    log.info(&format!(
        "{} under {}: {} steps, quiescence {:?}, exact layers {:?}",
        net.name,
        regime.name(),
        result.steps,
        result.quiescence_step,
        layer_exact
    ));
    for (layer, counts) in result.counts.iter().enumerate() {
        log.trace(&format!("layer {layer} counts {counts:?}"));
    }

    let results = ResultsFile {
        decoded: result.decoded_output.data().to_vec(),
        ann_logits: ann.logits.data().to_vec(),
        lossless: layer_exact.iter().all(|&b| b),
        layer_exact,
        quiescence_step: result.quiescence_step,
        regime: regime.name().into(),
        seed,
    };
    write_text(
        &out.join("results.json"),
        &serde_json::to_string_pretty(&results).expect("results serialize"),
    )?;

    let report = build_report(&result.trace, &result.counts, &ann, net.q())?;
    export_csv(&firing_ratio_csv(&result.trace), &out.join("firing_ratio.csv"))?;
    export_csv(&mismatch_csv(&report.mismatch), &out.join("mismatch.csv"))?;
    export_csv(&relerr_csv(&report.relerr), &out.join("relerr.csv"))?;
    export_csv(&trace_csv(&result.trace), &out.join("trace.csv"))?;
    log.info(&format!("wrote results.json and CSVs under {}", out.display()));
    Ok(())
}

// === demo ===

fn cmd_demo(q: u32, t: Option<usize>) -> Result<(), CliError> {
    let t = t.unwrap_or(2 * q as usize);
    if t < q as usize {
        return Err(CliError::usage(format!("t_max ≥ Q required (got t={t}, Q={q})")));
    }
    let net = synth::scalar_probe(q);
    println!("x        Q    T    cqrelu     if-rate    casc");
    for x in [0.0, 0.1, 0.25, 0.33, 0.5, 0.58, 0.75, 0.9, 0.999, 1.0, 1.3] {
        let input = Tensor::from_vec(vec![x])?;
        let quantized = cqrelu(x, q);

        let mut snn = convert(&net);
        let sched = WscSchedule::new(q as usize, t, true)?;
        let baseline = simulate(&mut snn, &input, &sched, Regime::BaselineIf, TraceDetail::Totals)?;
        let rate = baseline.decoded_counts[0][0];

        let casc = simulate(&mut snn, &input, &WscSchedule::for_q(q), Regime::Casc, TraceDetail::Totals)?;
        let settled = casc.decoded_output.data()[0];

        println!("{x:<8} {q:<4} {t:<4} {quantized:<10} {rate:<10} {settled}");
    }
    Ok(())
}

// === qsweep ===

fn cmd_qsweep(log: &Logger, model: Option<&Path>, out: &Path) -> Result<(), CliError> {
    ensure_dir(out)?;
    let mut csv = String::from("q,regime,steps_to_quiescence,exact_match\n");

    for &q in &[4u32, 8, 16, 32] {
        let net = match model {
            Some(path) => {
                let mut loaded = load_model(path)?;
                loaded.config = casc_core::qann::QuantConfig::new(q)?;
                loaded
            }
            None => synth::bundled_mlp(q),
        };
        let shape = match &net.layers[0] {
            casc_core::qann::LayerSpec::Linear { weight, .. } => vec![weight.shape()[1]],
            _ => return Err(CliError::usage("qsweep needs a fully connected first layer")),
        };
        let input = synth::adversarial_input(&net, &shape, 512)
            .unwrap_or_else(|| synth::random_input(&shape, &mut Rng::new(q as u64)));

        for regime in Regime::all() {
            match run_simulation(&net, &input, regime, None, TraceDetail::Totals) {
                Ok((result, layer_exact, _)) => {
                    let exact = layer_exact.iter().all(|&b| b);
                    let steps = result
                        .quiescence_step
                        .map(|_| result.steps.to_string())
                        .unwrap_or_default();
                    csv.push_str(&format!("{q},{},{steps},{exact}\n", regime.name()));
                    if regime == Regime::Casc {
                        let bound = 2 * q as usize + net.activated_layers();
                        let within = result.steps <= bound;
                        log.info(&format!(
                            "Q={q}: settled in {} steps (budget 2Q+L = {bound}{})",
                            result.steps,
                            if within { "" } else { " — EXCEEDED" }
                        ));
                    }
                }
                Err(e) => {
                    log.info(&format!("Q={q} {}: failed ({})", regime.name(), e.message));
                    csv.push_str(&format!("{q},{},,false\n", regime.name()));
                }
            }
        }
    }

    write_text(&out.join("qsweep.csv"), &csv)?;
    log.info(&format!("wrote {}", out.join("qsweep.csv").display()));
    Ok(())
}
