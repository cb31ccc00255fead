//! Experiment description files.
//!
//! ```json
//! {
//!   "model": {
//!     "prior": { "type": "qpsk" },
//!     "field": "complex",
//!     "layers": [
//!       { "rows": 1024, "cols": 1024, "channel": { "snr_db": 20 } },
//!       { "rows": 1024, "cols": 1024, "channel": { "snr_db": 15, "bits": 3 } }
//!     ]
//!   },
//!   "run": { "trials": 50, "iters": 15, "seed": 11 },
//!   "sweep": [{ "parameter": "bits", "layer": 1, "values": [1, 2, 3, 6, null] }],
//!   "output": { "path": "example1.csv" }
//! }
//! ```
//!
//! `rows` and `cols` are the shape of the mixing matrix, so `cols` is the
//! layer's input length. Sweep layers are counted from zero.

use std::path::PathBuf;

use mlgamp::{
    harness::expand_sweep, AdcDesign, Damping, ExperimentConfig, Field, GampOptions, InitMode, LayerDesign,
    ModelDesign, ModelSpec, NoiseLevel, Prior, QuadratureSpec, SweepAxis,
};
use serde::{Deserialize, Deserializer, Serialize};

use crate::CliError;

pub const DEFAULT_TRIALS: usize = 50;
pub const DEFAULT_ITERS: usize = 20;
pub const SEED_ENV: &str = "MLGAMP_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub model: ModelBlock,
    #[serde(default)]
    pub run: RunBlock,
    #[serde(default)]
    pub sweep: Vec<SweepBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub layers: Vec<LayerBlock>,
    #[serde(default)]
    pub prior: PriorBlock,
    #[serde(default)]
    pub field: Field,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorBlock {
    #[serde(rename = "type")]
    pub kind: PriorKind,
    /// Gaussian priors only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
}

impl Default for PriorBlock {
    fn default() -> Self {
        Self { kind: PriorKind::Qpsk, variance: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Qpsk,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerBlock {
    pub rows: usize,
    pub cols: usize,
    pub channel: ChannelBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelBlock {
    /// Inferred from `bits` when absent.
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ChannelKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    /// Absent or `null` is an unquantized output.
    #[serde(default, deserialize_with = "present", skip_serializing_if = "Option::is_none")]
    pub bits: Option<Option<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Awgn,
    QuantizedAwgn,
}

// Tells an explicit `null` apart from a missing key.
fn present<'de, D: Deserializer<'de>, T: Deserialize<'de>>(d: D) -> Result<Option<Option<T>>, D::Error> {
    Option::<T>::deserialize(d).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunBlock {
    pub trials: usize,
    pub iters: usize,
    pub seed: Option<u64>,
    /// A single factor for every layer or one per layer; absent is undamped.
    pub damping: Option<DampingBlock>,
    pub scalar_variance: bool,
    /// Early-stop tolerance of standalone runs. Experiments always run
    /// `iters` iterations.
    pub stop_tol: Option<f64>,
    pub init: InitMode,
    pub onsager: bool,
    pub variance_floor: f64,
}

impl Default for RunBlock {
    fn default() -> Self {
        let opts = GampOptions::default();
        Self {
            trials: DEFAULT_TRIALS,
            iters: DEFAULT_ITERS,
            seed: None,
            damping: None,
            scalar_variance: opts.scalar_variance,
            stop_tol: opts.stop_tol,
            init: opts.init,
            onsager: opts.onsager,
            variance_floor: opts.variance_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DampingBlock {
    Uniform(f64),
    PerLayer(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub parameter: SweepParameter,
    /// Required for `bits`; for `snr_db`, absent means every layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<usize>,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Bits,
    SnrDb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub iters: Option<usize>,
    pub damping: Option<f64>,
    pub out: Option<PathBuf>,
}

/// A parsed file with overrides and defaults applied, ready to run.
#[derive(Debug, Clone)]
pub struct Resolved {
    /// The effective file; serializing it reproduces the run.
    pub file: RunConfigFile,
    pub experiment: ExperimentConfig,
    pub points: Vec<(String, ModelSpec)>,
    pub out: PathBuf,
}

pub fn parse(text: &str) -> Result<RunConfigFile, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

fn invalid(key: impl Into<String>, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {msg}", key.into()))
}

/// Applies overrides and defaults, then checks everything a run needs.
/// `env_seed` is the value of [`SEED_ENV`], the lowest-precedence seed.
pub fn resolve(
    mut file: RunConfigFile,
    overrides: &Overrides,
    env_seed: Option<&str>,
    default_out: &str,
) -> Result<Resolved, CliError> {
    let env_seed = match env_seed {
        Some(s) => Some(s.trim().parse::<u64>().map_err(|e| invalid(SEED_ENV, e))?),
        None => None,
    };
    let run = &mut file.run;
    run.seed = overrides.seed.or(run.seed).or(env_seed).or(Some(0));
    if let Some(t) = overrides.trials {
        run.trials = t;
    }
    if let Some(t) = overrides.iters {
        run.iters = t;
    }
    if let Some(rho) = overrides.damping {
        run.damping = Some(DampingBlock::Uniform(rho));
    }
    if let Some(out) = &overrides.out {
        file.output.path = Some(out.clone());
    }
    let out = file.output.path.clone().unwrap_or_else(|| PathBuf::from(default_out));
    file.output.path = Some(out.clone());

    if run.trials == 0 {
        return Err(invalid("run.trials", "must be >= 1"));
    }
    if run.iters == 0 {
        return Err(invalid("run.iters", "must be >= 1"));
    }
    let design = design(&file.model)?;
    let n_layers = design.layers.len();
    let damping = match &file.run.damping {
        None => Damping::Off,
        Some(DampingBlock::Uniform(r)) => Damping::Uniform(*r),
        Some(DampingBlock::PerLayer(v)) => Damping::PerLayer(v.clone()),
    };
    damping.factors(n_layers).map_err(|e| invalid("run.damping", e))?;
    let opts = GampOptions {
        max_iters: file.run.iters,
        damping,
        variance_floor: file.run.variance_floor,
        scalar_variance: file.run.scalar_variance,
        stop_tol: file.run.stop_tol,
        init: file.run.init,
        onsager: file.run.onsager,
        damp_estimates: false,
    };
    opts.validate().map_err(|e| invalid("run", e))?;
    let sweep = file
        .sweep
        .iter()
        .enumerate()
        .map(|(k, s)| sweep_axis(s, n_layers).map_err(|msg| invalid(format!("sweep[{k}]"), msg)))
        .collect::<Result<Vec<_>, _>>()?;
    let points = expand_sweep(&design, &sweep)
        .map_err(|e| invalid("sweep", e))?
        .into_iter()
        .map(|(label, d)| {
            let spec = d.resolve().map_err(|e| {
                let key = if label.is_empty() { "model".to_string() } else { format!("model (sweep point {label})") };
                invalid(key, e)
            })?;
            Ok((label, spec))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let experiment = ExperimentConfig {
        design,
        trials: file.run.trials,
        iters: file.run.iters,
        seed: file.run.seed.unwrap_or(0),
        opts,
        quadrature: QuadratureSpec::default(),
        sweep,
    };
    Ok(Resolved { file, experiment, points, out })
}

fn design(model: &ModelBlock) -> Result<ModelDesign, CliError> {
    let prior = match (model.prior.kind, model.prior.variance) {
        (PriorKind::Qpsk, None) => Prior::Qpsk,
        (PriorKind::Qpsk, Some(_)) => return Err(invalid("model.prior.variance", "not used by the qpsk prior")),
        (PriorKind::Gaussian, Some(variance)) if variance > 0.0 && variance.is_finite() => {
            Prior::Gaussian { variance }
        }
        (PriorKind::Gaussian, Some(v)) => return Err(invalid("model.prior.variance", format!("must be > 0, got {v}"))),
        (PriorKind::Gaussian, None) => return Err(invalid("model.prior.variance", "required by the gaussian prior")),
    };
    if model.layers.is_empty() {
        return Err(invalid("model.layers", "at least one layer is required"));
    }
    let layers = model
        .layers
        .iter()
        .enumerate()
        .map(|(k, l)| layer_design(l).map_err(|(key, msg)| invalid(format!("model.layers[{k}].{key}"), msg)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ModelDesign { layers, prior, field: model.field })
}

fn layer_design(l: &LayerBlock) -> Result<LayerDesign, (&'static str, String)> {
    if l.rows == 0 {
        return Err(("rows", "must be >= 1".into()));
    }
    if l.cols == 0 {
        return Err(("cols", "must be >= 1".into()));
    }
    let c = &l.channel;
    let noise = match (c.snr_db, c.sigma2) {
        (Some(snr), None) if snr.is_finite() => NoiseLevel::SnrDb(snr),
        (Some(snr), None) => return Err(("channel.snr_db", format!("must be finite, got {snr}"))),
        (None, Some(v)) if v >= 0.0 => NoiseLevel::NoiseVar(v),
        (None, Some(v)) => return Err(("channel.sigma2", format!("must be >= 0, got {v}"))),
        _ => return Err(("channel", "exactly one of snr_db or sigma2 is required".into())),
    };
    let bits = match (c.kind, c.bits) {
        (Some(ChannelKind::Awgn), Some(Some(_))) => {
            return Err(("channel.bits", "an awgn channel has no quantizer; use quantized_awgn".into()))
        }
        (Some(ChannelKind::QuantizedAwgn), None) => {
            return Err(("channel.bits", "required by quantized_awgn (null for an unquantized output)".into()))
        }
        (_, b) => b.flatten(),
    };
    let adc = match (bits, c.delta) {
        (None, Some(_)) => return Err(("channel.delta", "only valid with a finite bits value".into())),
        (None, None) => None,
        (Some(0), _) => return Err(("channel.bits", "must be >= 1".into())),
        (Some(_), Some(d)) if !(d > 0.0 && d.is_finite()) => {
            return Err(("channel.delta", format!("must be > 0, got {d}")))
        }
        (Some(bits), step) => Some(AdcDesign { bits, step }),
    };
    Ok(LayerDesign { n_in: l.cols, n_out: l.rows, noise, adc })
}

fn sweep_axis(s: &SweepBlock, n_layers: usize) -> Result<SweepAxis, String> {
    if s.values.is_empty() {
        return Err("values must not be empty".into());
    }
    if let Some(layer) = s.layer {
        if layer >= n_layers {
            return Err(format!("layer {layer} does not exist (the model has {n_layers})"));
        }
    }
    match s.parameter {
        SweepParameter::Bits => {
            let layer = s.layer.ok_or("a bits sweep needs a layer")?;
            let values = s
                .values
                .iter()
                .map(|v| match *v {
                    None => Ok(None),
                    Some(b) if b >= 1.0 && b.fract() == 0.0 && b <= u32::MAX as f64 => Ok(Some(b as u32)),
                    Some(b) => Err(format!("bits must be a positive integer or null, got {b}")),
                })
                .collect::<Result<_, _>>()?;
            Ok(SweepAxis::Bits { layer, values })
        }
        SweepParameter::SnrDb => {
            let values = s
                .values
                .iter()
                .map(|v| match *v {
                    Some(x) if x.is_finite() => Ok(x),
                    _ => Err("snr_db values must be finite numbers".to_string()),
                })
                .collect::<Result<_, _>>()?;
            Ok(SweepAxis::SnrDb { layer: s.layer, values })
        }
    }
}
