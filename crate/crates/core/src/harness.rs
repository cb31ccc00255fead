//! Monte-Carlo experiments, error metrics and an exact small-size posterior.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::gamp::{Gamp, GampOptions};
use crate::model::{sample_instance, Channel, Field, Instance, ModelDesign, ModelSpec, NoiseLevel, Prior};
use crate::quadrature::QuadratureSpec;
use crate::state_evolution::{se_run, SeTrace};

/// `||x - est||^2 / ||x||^2`.
pub fn nmse(x: &Array1<Complex64>, est: &Array1<Complex64>) -> Result<f64, Error> {
    if x.len() != est.len() {
        return Err(Error::DimensionMismatch(format!("truth has length {}, estimate {}", x.len(), est.len())));
    }
    let norm: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    if !(norm > 0.0) {
        return Err(Error::InvalidParameter("truth has zero norm".into()));
    }
    Ok(x.iter().zip(est).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / norm)
}

/// Number of symbols whose hard decision (signs of the parts) differs from
/// a QPSK truth.
pub fn qpsk_symbol_errors(x: &Array1<Complex64>, est: &Array1<Complex64>, field: Field) -> Result<usize, Error> {
    if x.len() != est.len() {
        return Err(Error::DimensionMismatch(format!("truth has length {}, estimate {}", x.len(), est.len())));
    }
    let a = Prior::qpsk_amplitude(field);
    let on_grid = |v: f64| (v.abs() - a).abs() <= 1e-12;
    let mut errors = 0;
    for (t, e) in x.iter().zip(est) {
        let ok = match field {
            Field::Real => on_grid(t.re) && t.im == 0.0,
            Field::Complex => on_grid(t.re) && on_grid(t.im),
        };
        if !ok {
            return Err(Error::InvalidParameter(format!("{t} is not a QPSK symbol")));
        }
        let wrong = (t.re > 0.0) != (e.re > 0.0) || (field == Field::Complex && (t.im > 0.0) != (e.im > 0.0));
        errors += usize::from(wrong);
    }
    Ok(errors)
}

/// Fraction of symbols decided into the wrong quadrant.
pub fn ser_qpsk(x: &Array1<Complex64>, est: &Array1<Complex64>, field: Field) -> Result<f64, Error> {
    Ok(qpsk_symbol_errors(x, est, field)? as f64 / x.len() as f64)
}

/// Largest input length the exact posterior enumerates.
pub const MAX_ENUMERATION_LEN: usize = 8;

/// Exact posterior mean `E[x | y, H]` for a QPSK input, by enumerating every
/// input vector.
///
/// Unquantized layers are integrated out exactly: `y | x` is Gaussian with
/// mean `H_L ... H_1 x` and covariance `sum_l sigma_l^2 G_l G_l^H`, where
/// `G_l = H_L ... H_{l+1}`. A quantized channel is supported at the last
/// layer only, and only when every earlier layer is noiseless.
pub fn brute_force_posterior(
    spec: &ModelSpec,
    matrices: &[Array2<Complex64>],
    y: &Array1<Complex64>,
) -> Result<Array1<Complex64>, Error> {
    spec.check()?;
    if spec.prior != Prior::Qpsk {
        return Err(Error::Unsupported("exact posterior needs a QPSK prior".into()));
    }
    let n = spec.input_len();
    let per_coord = match spec.field {
        Field::Real => 2u64,
        Field::Complex => 4,
    };
    if n > MAX_ENUMERATION_LEN {
        return Err(Error::EnumerationTooLarge { states: per_coord.saturating_pow(n as u32) });
    }
    let to_na = |h: &Array2<Complex64>| DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| h[[i, j]]);
    let last = spec.num_layers() - 1;

    // A = H_L ... H_1 and the noise covariance accumulated through the chain
    let mut a = to_na(&matrices[0]);
    let mut cov = DMatrix::<Complex64>::zeros(a.nrows(), a.nrows());
    for (l, layer) in spec.layers.iter().enumerate() {
        if l > 0 {
            let h = to_na(&matrices[l]);
            a = &h * &a;
            cov = &h * cov * h.adjoint();
        }
        match layer.channel {
            Channel::Awgn { noise_var } => {
                for k in 0..cov.nrows() {
                    cov[(k, k)] += Complex64::new(noise_var, 0.0);
                }
            }
            Channel::QuantizedAwgn { .. } if l == last => {
                if cov.iter().any(|c| c.norm() > 0.0) {
                    return Err(Error::Unsupported(
                        "exact posterior with a quantized output needs noiseless earlier layers".into(),
                    ));
                }
            }
            Channel::QuantizedAwgn { .. } => {
                return Err(Error::Unsupported("exact posterior with a quantized inner layer".into()));
            }
        }
    }

    let symbols = qpsk_alphabet(spec.field);
    let yv = DVector::from_iterator(y.len(), y.iter().copied());
    let log_lik: Box<dyn Fn(&DVector<Complex64>) -> f64> = match spec.layers[last].channel {
        Channel::Awgn { .. } => {
            let scale = (0..cov.nrows()).map(|k| cov[(k, k)].re).fold(0.0, f64::max).max(1.0);
            let mut jittered = cov.clone();
            let chol = loop {
                if let Some(c) = jittered.clone().cholesky() {
                    break c;
                }
                // singular (noiseless) covariance: regularize slightly
                for k in 0..jittered.nrows() {
                    jittered[(k, k)] += Complex64::new(1e-12 * scale, 0.0);
                }
            };
            let weight = match spec.field {
                Field::Real => 0.5,
                Field::Complex => 1.0,
            };
            Box::new(move |mean: &DVector<Complex64>| {
                let r = &yv - mean;
                let w = chol.l().solve_lower_triangular(&r).expect("nonsingular factor");
                -weight * w.norm_squared()
            })
        }
        Channel::QuantizedAwgn { noise_var, bits, step } => {
            let q = crate::model::Quantizer::new(bits, step)?;
            let sd = spec.field.per_part(noise_var).sqrt();
            let cells: Vec<(f64, f64)> = y
                .iter()
                .flat_map(|v| match spec.field {
                    Field::Real => vec![v.re],
                    Field::Complex => vec![v.re, v.im],
                })
                .map(|v| q.cell(v))
                .collect::<Result<_, _>>()?;
            let field = spec.field;
            Box::new(move |mean: &DVector<Complex64>| {
                let parts = mean.iter().flat_map(|m| match field {
                    Field::Real => vec![m.re],
                    Field::Complex => vec![m.re, m.im],
                });
                cells
                    .iter()
                    .zip(parts)
                    .map(|(&(lo, hi), z)| cell_log_prob(lo, hi, z, sd))
                    .sum()
            })
        }
    };

    let states = (symbols.len() as u64).pow(n as u32);
    let mut logs = Vec::with_capacity(states as usize);
    let mut x = DVector::from_element(n, symbols[0]);
    for idx in 0..states {
        let mut rest = idx;
        for k in 0..n {
            x[k] = symbols[(rest % symbols.len() as u64) as usize];
            rest /= symbols.len() as u64;
        }
        logs.push(log_lik(&(&a * &x)));
    }
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    let mut mean = Array1::from_elem(n, Complex64::new(0.0, 0.0));
    for (idx, l) in logs.iter().enumerate() {
        let w = (l - peak).exp();
        total += w;
        let mut rest = idx as u64;
        for m in mean.iter_mut() {
            *m += symbols[(rest % symbols.len() as u64) as usize] * w;
            rest /= symbols.len() as u64;
        }
    }
    Ok(mean.mapv(|m| m / total))
}

fn qpsk_alphabet(field: Field) -> Vec<Complex64> {
    let a = Prior::qpsk_amplitude(field);
    match field {
        Field::Real => vec![Complex64::new(-a, 0.0), Complex64::new(a, 0.0)],
        Field::Complex => vec![
            Complex64::new(-a, -a),
            Complex64::new(a, -a),
            Complex64::new(-a, a),
            Complex64::new(a, a),
        ],
    }
}

fn cell_log_prob(lo: f64, hi: f64, z: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return if z > lo && z <= hi { 0.0 } else { f64::NEG_INFINITY };
    }
    crate::special::truncated_standard_normal((lo - z) / sd, (hi - z) / sd).log_mass
}

/// Power ratio in decibels.
pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Parameter varied across the points of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "parameter")]
pub enum SweepAxis {
    /// ADC resolution of one layer; `None` is an unquantized output.
    Bits { layer: usize, values: Vec<Option<u32>> },
    /// SNR in dB of one layer, or of every layer when `layer` is absent.
    SnrDb {
        #[serde(default)]
        layer: Option<usize>,
        values: Vec<f64>,
    },
}

impl SweepAxis {
    fn len(&self) -> usize {
        match self {
            SweepAxis::Bits { values, .. } => values.len(),
            SweepAxis::SnrDb { values, .. } => values.len(),
        }
    }

    fn apply(&self, k: usize, design: &mut ModelDesign) -> Result<String, Error> {
        let n_layers = design.layers.len();
        let missing = |layer: usize| Error::InvalidParameter(format!("sweep refers to missing layer {layer}"));
        Ok(match self {
            SweepAxis::Bits { layer, values } => {
                let d = design.layers.get_mut(*layer).ok_or_else(|| missing(*layer))?;
                match values[k] {
                    None => {
                        d.adc = None;
                        format!("layer{layer}.bits=inf")
                    }
                    Some(bits) => {
                        let step = d.adc.and_then(|a| a.step);
                        d.adc = Some(crate::model::AdcDesign { bits, step });
                        format!("layer{layer}.bits={bits}")
                    }
                }
            }
            SweepAxis::SnrDb { layer: Some(layer), values } => {
                let d = design.layers.get_mut(*layer).ok_or_else(|| missing(*layer))?;
                d.noise = NoiseLevel::SnrDb(values[k]);
                format!("layer{layer}.snr_db={}", values[k])
            }
            SweepAxis::SnrDb { layer: None, values } => {
                if n_layers == 0 {
                    return Err(missing(0));
                }
                for d in &mut design.layers {
                    d.noise = NoiseLevel::SnrDb(values[k]);
                }
                format!("snr_db={}", values[k])
            }
        })
    }
}

/// Designs of every sweep point (the cartesian product of the axes), with
/// labels. Without axes the base design is the only point.
pub fn expand_sweep(base: &ModelDesign, axes: &[SweepAxis]) -> Result<Vec<(String, ModelDesign)>, Error> {
    let mut points = vec![(String::new(), base.clone())];
    for axis in axes {
        if axis.len() == 0 {
            return Err(Error::InvalidParameter("sweep axis without values".into()));
        }
        let mut next = Vec::with_capacity(points.len() * axis.len());
        for (label, design) in &points {
            for k in 0..axis.len() {
                let mut d = design.clone();
                let part = axis.apply(k, &mut d)?;
                let label = if label.is_empty() { part } else { format!("{label},{part}") };
                next.push((label, d));
            }
        }
        points = next;
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub design: ModelDesign,
    pub trials: usize,
    /// Iterations per trial; every trial runs all of them.
    pub iters: usize,
    pub seed: u64,
    pub opts: GampOptions,
    pub quadrature: QuadratureSpec,
    pub sweep: Vec<SweepAxis>,
}

/// Metrics of one trial at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub trial: usize,
    pub iteration: usize,
    pub nmse: f64,
    pub nmse_db: f64,
    /// Hard-decision symbol error rate; QPSK priors only.
    pub ser: Option<f64>,
    /// SE prediction of the normalized error at this iteration.
    pub se_mse: f64,
    pub se_mse_db: f64,
    /// Seconds spent on this trial (same for all its iterations).
    pub wall_time: f64,
}

/// Records of one sweep point.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub label: String,
    pub spec: ModelSpec,
    pub se: SeTrace,
    pub records: Vec<ExperimentRecord>,
}

/// Seed of trial `trial` of an experiment. The same trial index draws the
/// same random numbers at every sweep point.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    splitmix64(splitmix64(base) ^ trial as u64)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs every trial of every sweep point, in parallel over trials.
/// Records come back sorted by trial and iteration.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<PointResult>, Error> {
    if config.trials == 0 || config.iters == 0 {
        return Err(Error::InvalidParameter("trials and iters must be >= 1".into()));
    }
    expand_sweep(&config.design, &config.sweep)?
        .into_iter()
        .map(|(label, design)| {
            let spec = design.resolve()?;
            run_point(label, spec, config)
        })
        .collect()
}

/// Runs the trials of a single resolved model.
pub fn run_point(label: String, spec: ModelSpec, config: &ExperimentConfig) -> Result<PointResult, Error> {
    let (se, outcomes) = run_point_trials(&spec, config)?;
    let mut records = Vec::with_capacity(config.trials * config.iters);
    for (trial, outcome) in outcomes.into_iter().enumerate() {
        if let Some(e) = outcome.error {
            return Err(Error::Trial { trial, source: Box::new(e) });
        }
        records.extend(outcome.records);
    }
    Ok(PointResult { label, spec, se, records })
}

/// Records of one trial, complete up to the iteration where it failed.
#[derive(Debug)]
pub struct TrialOutcome {
    pub records: Vec<ExperimentRecord>,
    pub error: Option<Error>,
}

/// Like [`run_point`], but keeps the records of failed trials instead of
/// discarding the whole point. Outcomes are indexed by trial.
pub fn run_point_trials(spec: &ModelSpec, config: &ExperimentConfig) -> Result<(SeTrace, Vec<TrialOutcome>), Error> {
    if config.trials == 0 || config.iters == 0 {
        return Err(Error::InvalidParameter("trials and iters must be >= 1".into()));
    }
    let se = se_run(spec, config.iters, &config.quadrature)?;
    let t_x = spec.prior.power();
    let opts = GampOptions { max_iters: config.iters, stop_tol: None, ..config.opts.clone() };
    let outcomes = (0..config.trials)
        .into_par_iter()
        .map(|trial| run_trial(spec, &opts, &se, t_x, config.seed, trial))
        .collect();
    Ok((se, outcomes))
}

fn run_trial(spec: &ModelSpec, opts: &GampOptions, se: &SeTrace, t_x: f64, seed: u64, trial: usize) -> TrialOutcome {
    let start = Instant::now();
    let mut records = Vec::with_capacity(opts.max_iters);
    let mut failure = None;
    let result = sample_instance(spec, trial_seed(seed, trial)).and_then(|inst: Instance| {
        let gamp = Gamp::new(spec, &inst.matrices, opts.clone())?;
        let qpsk = spec.prior == Prior::Qpsk;
        gamp.run_with(&inst.y, None, |st| {
            let t = st.iteration - 1;
            let est = st.estimate();
            let nmse = match nmse(&inst.x0, est) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            };
            let ser = if qpsk { ser_qpsk(&inst.x0, est, spec.field).ok() } else { None };
            let se_mse = se.mse_at(t).unwrap_or(f64::NAN) / t_x;
            records.push(ExperimentRecord {
                trial,
                iteration: t,
                nmse,
                nmse_db: to_db(nmse),
                ser,
                se_mse,
                se_mse_db: to_db(se_mse),
                wall_time: 0.0,
            });
        })
    });
    let elapsed = start.elapsed().as_secs_f64();
    for r in &mut records {
        r.wall_time = elapsed;
    }
    TrialOutcome { records, error: result.err().or(failure) }
}

/// Across-trial statistics at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub trials: usize,
    pub mean_nmse: f64,
    pub mean_nmse_db: f64,
    /// Standard error of the mean NMSE.
    pub std_err: f64,
    /// Symbol errors pooled over trials.
    pub pooled_ser: Option<f64>,
    pub se_mse: f64,
    pub se_mse_db: f64,
    /// `mean_nmse_db - se_mse_db`.
    pub gap_db: f64,
}

/// Per-iteration averages of a record list.
pub fn summarize(records: &[ExperimentRecord]) -> Vec<IterationSummary> {
    let max_iter = records.iter().map(|r| r.iteration).max().unwrap_or(0);
    (1..=max_iter)
        .filter_map(|t| {
            let rows: Vec<&ExperimentRecord> = records.iter().filter(|r| r.iteration == t).collect();
            if rows.is_empty() {
                return None;
            }
            let n = rows.len() as f64;
            let mean = rows.iter().map(|r| r.nmse).sum::<f64>() / n;
            let var = if rows.len() > 1 {
                rows.iter().map(|r| (r.nmse - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let pooled_ser = rows
                .iter()
                .map(|r| r.ser)
                .collect::<Option<Vec<f64>>>()
                .map(|s| s.iter().sum::<f64>() / n);
            let se_mse = rows[0].se_mse;
            Some(IterationSummary {
                iteration: t,
                trials: rows.len(),
                mean_nmse: mean,
                mean_nmse_db: to_db(mean),
                std_err: (var / n).sqrt(),
                pooled_ser,
                se_mse,
                se_mse_db: to_db(se_mse),
                gap_db: to_db(mean) - to_db(se_mse),
            })
        })
        .collect()
}
