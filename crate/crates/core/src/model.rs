//! Declarative description of a multi-layer generalized linear model and
//! random instance generation.
//!
//! Layer `l` maps `x^(l)` (length `n_in`) to `z^(l) = H^(l) x^(l)` (length
//! `n_out`) and then draws `x^(l+1) ~ P(.|z^(l))` elementwise through its
//! [`Channel`]. The first input is drawn i.i.d. from the [`Prior`]; the last
//! output is the observation `y`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::special::norm_cdf;

/// Number field of signals and mixing matrices.
///
/// A complex Gaussian `CN(m, v)` is circularly symmetric: each real part has
/// variance `v/2`. All variances in this crate are totals over the parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Real,
    #[default]
    Complex,
}

impl Field {
    /// Number of real parts per scalar.
    #[inline]
    pub fn parts(self) -> usize {
        match self {
            Field::Real => 1,
            Field::Complex => 2,
        }
    }

    /// Per-part share of a total variance.
    #[inline]
    pub fn per_part(self, total: f64) -> f64 {
        total / self.parts() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Prior {
    /// Equiprobable `(+-1 +- j)/sqrt(2)` over the complex field, `+-1` over
    /// the real field. Unit energy either way.
    Qpsk,
    Gaussian { variance: f64 },
}

impl Prior {
    /// Second moment `sigma_X^2`.
    pub fn power(&self) -> f64 {
        match *self {
            Prior::Qpsk => 1.0,
            Prior::Gaussian { variance } => variance,
        }
    }

    /// Per-part constellation amplitude of the QPSK prior.
    pub fn qpsk_amplitude(field: Field) -> f64 {
        match field {
            Field::Real => 1.0,
            Field::Complex => FRAC_1_SQRT_2,
        }
    }

    fn sample(&self, field: Field, rng: &mut impl Rng) -> Complex64 {
        match *self {
            Prior::Qpsk => {
                let a = Self::qpsk_amplitude(field);
                let sign = |b: bool| if b { a } else { -a };
                match field {
                    Field::Real => Complex64::new(sign(rng.random()), 0.0),
                    Field::Complex => Complex64::new(sign(rng.random()), sign(rng.random())),
                }
            }
            Prior::Gaussian { variance } => gaussian(field, variance, rng),
        }
    }
}

/// Uniform mid-rise quantizer with `2^bits` levels `(b - 1/2) * step`,
/// `b = -2^bits/2 + 1, ..., 2^bits/2`.
///
/// Input `u` maps to level `y` when `u` lies in `(lower(y), upper(y)]`; the
/// outermost cells extend to infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    pub bits: u32,
    pub step: f64,
}

impl Quantizer {
    pub fn new(bits: u32, step: f64) -> Result<Self, Error> {
        if !(1..=MAX_BITS).contains(&bits) || !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "quantizer needs 1 <= bits <= {MAX_BITS} and a positive step, got bits={bits}, step={step}"
            )));
        }
        Ok(Self { bits, step })
    }

    fn half_levels(&self) -> i64 {
        1i64 << (self.bits - 1)
    }

    pub fn num_levels(&self) -> usize {
        1usize << self.bits
    }

    fn index_range(&self) -> std::ops::RangeInclusive<i64> {
        let h = self.half_levels();
        (-h + 1)..=h
    }

    fn level_of(&self, b: i64) -> f64 {
        (b as f64 - 0.5) * self.step
    }

    pub fn levels(&self) -> Vec<f64> {
        self.index_range().map(|b| self.level_of(b)).collect()
    }

    /// Cell `(lower, upper]` of every level, in level order.
    pub fn cells(&self) -> Vec<(f64, f64, f64)> {
        self.index_range().map(|b| (self.level_of(b), self.cell_lower(b), self.cell_upper(b))).collect()
    }

    fn cell_lower(&self, b: i64) -> f64 {
        if b == -self.half_levels() + 1 {
            f64::NEG_INFINITY
        } else {
            self.level_of(b) - 0.5 * self.step
        }
    }

    fn cell_upper(&self, b: i64) -> f64 {
        if b == self.half_levels() {
            f64::INFINITY
        } else {
            self.level_of(b) + 0.5 * self.step
        }
    }

    pub fn quantize(&self, u: f64) -> f64 {
        let h = self.half_levels();
        let b = ((u / self.step).ceil() as i64).clamp(-h + 1, h);
        self.level_of(b)
    }

    /// Cell `(lower, upper]` of an observed level.
    pub fn cell(&self, y: f64) -> Result<(f64, f64), Error> {
        let b = (y / self.step + 0.5).round();
        let ok = b.is_finite()
            && self.index_range().contains(&(b as i64))
            && (self.level_of(b as i64) - y).abs() <= 1e-9 * self.step;
        if !ok {
            return Err(Error::OffCodebook { value: y, bits: self.bits, step: self.step });
        }
        let b = b as i64;
        Ok((self.cell_lower(b), self.cell_upper(b)))
    }

    /// Probability of each level when the input is `N(mean, var)`.
    pub fn level_probabilities(&self, mean: f64, var: f64) -> Vec<f64> {
        let sd = var.sqrt();
        self.index_range()
            .map(|b| norm_cdf((self.cell_upper(b) - mean) / sd) - norm_cdf((self.cell_lower(b) - mean) / sd))
            .collect()
    }
}

/// Largest supported quantizer resolution.
pub const MAX_BITS: u32 = 16;

/// Elementwise transition `P(x^(l+1) | z^(l))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Channel {
    /// `x = z + w`, `w ~ N(0, noise_var)`.
    Awgn { noise_var: f64 },
    /// `x = Q(z + w)`, quantized per real part; each part of `w` has variance
    /// `noise_var / parts`.
    QuantizedAwgn { noise_var: f64, bits: u32, step: f64 },
}

impl Channel {
    pub fn noise_var(&self) -> f64 {
        match *self {
            Channel::Awgn { noise_var } | Channel::QuantizedAwgn { noise_var, .. } => noise_var,
        }
    }

    pub fn quantizer(&self) -> Option<Quantizer> {
        match *self {
            Channel::Awgn { .. } => None,
            Channel::QuantizedAwgn { bits, step, .. } => Some(Quantizer { bits, step }),
        }
    }

    /// `E|x|^2` of the output when the input is `N(0, input_power)`.
    pub fn output_power(&self, input_power: f64, field: Field) -> f64 {
        match self.quantizer() {
            None => input_power + self.noise_var(),
            Some(q) => {
                let part_var = field.per_part(input_power + self.noise_var());
                let per_part: f64 = q
                    .levels()
                    .iter()
                    .zip(q.level_probabilities(0.0, part_var))
                    .map(|(y, p)| y * y * p)
                    .sum();
                per_part * field.parts() as f64
            }
        }
    }

    fn sample(&self, z: Complex64, field: Field, rng: &mut impl Rng) -> Complex64 {
        let noisy = z + gaussian(field, self.noise_var(), rng);
        match self.quantizer() {
            None => noisy,
            Some(q) => match field {
                Field::Real => Complex64::new(q.quantize(noisy.re), 0.0),
                Field::Complex => Complex64::new(q.quantize(noisy.re), q.quantize(noisy.im)),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    /// `N_l`, columns of `H^(l)`.
    pub n_in: usize,
    /// `N_{l+1}`, rows of `H^(l)`.
    pub n_out: usize,
    pub channel: Channel,
}

impl LayerSpec {
    /// Aspect ratio `alpha_l = n_out / n_in`.
    pub fn alpha(&self) -> f64 {
        self.n_out as f64 / self.n_in as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
    pub prior: Prior,
    #[serde(default)]
    pub field: Field,
}

/// One violated model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum SpecViolation {
    NoLayers,
    EmptyDimension { layer: usize },
    DimensionChain { layer: usize, n_out: usize, next_n_in: usize },
    NoiseVariance { layer: usize, value: f64 },
    Bits { layer: usize, bits: u32 },
    Step { layer: usize, step: f64 },
    PriorVariance { value: f64 },
}

impl fmt::Display for SpecViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SpecViolation::NoLayers => write!(f, "model needs at least one layer"),
            SpecViolation::EmptyDimension { layer } => {
                write!(f, "layer {layer}: dimensions must be >= 1")
            }
            SpecViolation::DimensionChain { layer, n_out, next_n_in } => write!(
                f,
                "dimension chain: layer {layer} has n_out={n_out} but layer {} has n_in={next_n_in}",
                layer + 1
            ),
            SpecViolation::NoiseVariance { layer, value } => {
                write!(f, "layer {layer}: noise variance must be finite and >= 0, got {value}")
            }
            SpecViolation::Bits { layer, bits } => {
                write!(f, "layer {layer}: bits must be >= 1 and <= {MAX_BITS}, got {bits}")
            }
            SpecViolation::Step { layer, step } => {
                write!(f, "layer {layer}: quantization step must be > 0, got {step}")
            }
            SpecViolation::PriorVariance { value } => {
                write!(f, "prior variance must be > 0, got {value}")
            }
        }
    }
}

impl ModelSpec {
    /// Every violated invariant, or `Ok` for a well-formed model.
    pub fn validate(&self) -> Result<(), Vec<SpecViolation>> {
        let mut bad = Vec::new();
        if self.layers.is_empty() {
            bad.push(SpecViolation::NoLayers);
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.n_in == 0 || layer.n_out == 0 {
                bad.push(SpecViolation::EmptyDimension { layer: l });
            }
            if let Some(next) = self.layers.get(l + 1) {
                if layer.n_out != next.n_in {
                    bad.push(SpecViolation::DimensionChain {
                        layer: l,
                        n_out: layer.n_out,
                        next_n_in: next.n_in,
                    });
                }
            }
            let noise = layer.channel.noise_var();
            if !(noise >= 0.0 && noise.is_finite()) {
                bad.push(SpecViolation::NoiseVariance { layer: l, value: noise });
            }
            if let Channel::QuantizedAwgn { bits, step, .. } = layer.channel {
                if !(1..=MAX_BITS).contains(&bits) {
                    bad.push(SpecViolation::Bits { layer: l, bits });
                }
                if !(step > 0.0 && step.is_finite()) {
                    bad.push(SpecViolation::Step { layer: l, step });
                }
            }
        }
        if let Prior::Gaussian { variance } = self.prior {
            if !(variance > 0.0 && variance.is_finite()) {
                bad.push(SpecViolation::PriorVariance { value: variance });
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad)
        }
    }

    pub(crate) fn check(&self) -> Result<(), Error> {
        self.validate().map_err(Error::InvalidSpec)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// `N_1`.
    pub fn input_len(&self) -> usize {
        self.layers[0].n_in
    }

    /// `N_{L+1}`.
    pub fn output_len(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out
    }

    /// Analytic signal powers `(T_X^(l), T_Z^(l))` of every layer, assuming
    /// Gaussian pre-activations: `T_X^(1) = sigma_X^2`, `T_Z = T_X / alpha`,
    /// `T_X^(l+1)` = output power of channel `l` at input power `T_Z^(l)`.
    pub fn layer_powers(&self) -> Vec<(f64, f64)> {
        let mut t_x = self.prior.power();
        self.layers
            .iter()
            .map(|layer| {
                let t_z = t_x / layer.alpha();
                let out = (t_x, t_z);
                t_x = layer.channel.output_power(t_z, self.field);
                out
            })
            .collect()
    }
}

/// `sigma^2 = t_z * 10^(-snr_db/10)`.
pub fn snr_to_sigma2(snr_db: f64, t_z: f64) -> Result<f64, Error> {
    if !(t_z > 0.0) || !snr_db.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "SNR conversion needs t_z > 0 and finite SNR, got t_z={t_z}, snr={snr_db} dB"
        )));
    }
    Ok(t_z * 10f64.powf(-snr_db / 10.0))
}

/// How the noise of a layer is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLevel {
    /// Ratio of the analytic pre-channel power `T_Z` to the noise variance.
    SnrDb(f64),
    NoiseVar(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcDesign {
    pub bits: u32,
    /// Quantization step; when absent the quantizer spans +-3 standard
    /// deviations of the pre-ADC signal per real part.
    pub step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDesign {
    pub n_in: usize,
    pub n_out: usize,
    pub noise: NoiseLevel,
    /// `None` is an unquantized (infinite-resolution) output.
    pub adc: Option<AdcDesign>,
}

/// A model whose noise levels and quantizer steps are still given relative to
/// the analytic signal powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDesign {
    pub layers: Vec<LayerDesign>,
    pub prior: Prior,
    pub field: Field,
}

impl ModelDesign {
    /// Resolves SNRs to noise variances and fills default quantizer steps,
    /// propagating the analytic powers layer by layer.
    pub fn resolve(&self) -> Result<ModelSpec, Error> {
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut t_x = self.prior.power();
        for d in &self.layers {
            if d.n_in == 0 || d.n_out == 0 {
                return Err(Error::InvalidParameter("layer dimensions must be >= 1".into()));
            }
            let t_z = t_x / (d.n_out as f64 / d.n_in as f64);
            let noise_var = match d.noise {
                NoiseLevel::SnrDb(snr) => snr_to_sigma2(snr, t_z)?,
                NoiseLevel::NoiseVar(v) => v,
            };
            let channel = match d.adc {
                None => Channel::Awgn { noise_var },
                Some(AdcDesign { bits, step }) => {
                    let step = step.unwrap_or_else(|| default_step(bits, t_z + noise_var, self.field));
                    Channel::QuantizedAwgn { noise_var, bits, step }
                }
            };
            t_x = channel.output_power(t_z, self.field);
            layers.push(LayerSpec { n_in: d.n_in, n_out: d.n_out, channel });
        }
        let spec = ModelSpec { layers, prior: self.prior, field: self.field };
        spec.check()?;
        Ok(spec)
    }
}

/// Step that makes a `bits`-bit quantizer span +-3 standard deviations of a
/// zero-mean input with total power `pre_adc_power`.
pub fn default_step(bits: u32, pre_adc_power: f64, field: Field) -> f64 {
    6.0 * field.per_part(pre_adc_power).sqrt() / (1u64 << bits.min(62)) as f64
}

/// Signals of one layer of a sampled instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSignals {
    /// `z^(l) = H^(l) x^(l)`.
    pub z: Array1<Complex64>,
    /// `x^(l+1)`, the channel output.
    pub output: Array1<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub x0: Array1<Complex64>,
    /// `H^(l)`, shape `n_out x n_in`.
    pub matrices: Vec<Array2<Complex64>>,
    pub hidden: Vec<LayerSignals>,
    pub y: Array1<Complex64>,
}

/// Draws signal, mixing matrices and observation. Same seed, same instance.
pub fn sample_instance(spec: &ModelSpec, seed: u64) -> Result<Instance, Error> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field = spec.field;
    let x0: Array1<Complex64> = (0..spec.input_len()).map(|_| spec.prior.sample(field, &mut rng)).collect();
    let mut matrices = Vec::with_capacity(spec.num_layers());
    let mut hidden = Vec::with_capacity(spec.num_layers());
    let mut x = x0.clone();
    for layer in &spec.layers {
        let h = sample_matrix(layer.n_out, layer.n_in, field, &mut rng);
        let z = matvec(&h, &x);
        let output: Array1<Complex64> = z.iter().map(|&zi| layer.channel.sample(zi, field, &mut rng)).collect();
        matrices.push(h);
        x = output.clone();
        hidden.push(LayerSignals { z, output });
    }
    Ok(Instance { x0, matrices, hidden, y: x })
}

/// I.i.d. zero-mean Gaussian entries of variance `1/rows`.
pub fn sample_matrix(rows: usize, cols: usize, field: Field, rng: &mut impl Rng) -> Array2<Complex64> {
    let var = 1.0 / rows as f64;
    Array2::from_shape_simple_fn((rows, cols), || gaussian(field, var, rng))
}

fn gaussian(field: Field, var: f64, rng: &mut impl Rng) -> Complex64 {
    match field {
        Field::Real => {
            let n: f64 = rng.sample(StandardNormal);
            Complex64::new(var.sqrt() * n, 0.0)
        }
        Field::Complex => {
            let sd = (0.5 * var).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(sd * re, sd * im)
        }
    }
}

/// `H x`.
pub fn matvec(h: &Array2<Complex64>, x: &Array1<Complex64>) -> Array1<Complex64> {
    h.rows()
        .into_iter()
        .map(|row| row.iter().zip(x.iter()).fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a * b))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example3() -> ModelSpec {
        ModelSpec {
            layers: vec![
                LayerSpec { n_in: 256, n_out: 512, channel: Channel::Awgn { noise_var: 0.01 } },
                LayerSpec {
                    n_in: 512,
                    n_out: 1024,
                    channel: Channel::QuantizedAwgn { noise_var: 0.01, bits: 3, step: 0.3 },
                },
            ],
            prior: Prior::Qpsk,
            field: Field::Complex,
        }
    }

    #[test]
    fn validate_accepts_two_layer_adc_model() {
        assert_eq!(example3().validate(), Ok(()));
    }

    #[test]
    fn validate_reports_chain_break_and_bits() {
        let mut spec = example3();
        spec.layers[1].n_in = 511;
        spec.layers[1].channel = Channel::QuantizedAwgn { noise_var: 0.01, bits: 0, step: 0.3 };
        let errs = spec.validate().unwrap_err();
        assert_eq!(errs.len(), 2);
        assert!(errs[0].to_string().contains("dimension chain"));
        assert!(errs[1].to_string().contains("bits must be >= 1"));
    }

    #[test]
    fn validate_collects_every_violation() {
        let spec = ModelSpec {
            layers: vec![LayerSpec { n_in: 0, n_out: 4, channel: Channel::Awgn { noise_var: -1.0 } }],
            prior: Prior::Gaussian { variance: 0.0 },
            field: Field::Real,
        };
        assert_eq!(spec.validate().unwrap_err().len(), 3);
        let empty = ModelSpec { layers: vec![], prior: Prior::Qpsk, field: Field::Real };
        assert_eq!(empty.validate().unwrap_err(), vec![SpecViolation::NoLayers]);
    }

    #[test]
    fn snr_conversion() {
        assert_eq!(snr_to_sigma2(0.0, 1.0).unwrap(), 1.0);
        assert!((snr_to_sigma2(10.0, 1.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((snr_to_sigma2(20.0, 0.5).unwrap() - 0.005).abs() < 1e-15);
        assert!(snr_to_sigma2(10.0, 0.0).is_err());
    }

    #[test]
    fn quantizer_cells_follow_interval_rule() {
        let q = Quantizer::new(1, 2.0).unwrap();
        assert_eq!(q.levels(), vec![-1.0, 1.0]);
        assert_eq!(q.cell(1.0).unwrap(), (0.0, f64::INFINITY));
        assert_eq!(q.cell(-1.0).unwrap(), (f64::NEG_INFINITY, 0.0));
        // (lower, upper]: zero belongs to the negative cell
        assert_eq!(q.quantize(0.0), -1.0);
        assert_eq!(q.quantize(1e-12), 1.0);
        assert!(matches!(q.cell(0.5), Err(Error::OffCodebook { .. })));

        let q = Quantizer::new(3, 0.5).unwrap();
        assert_eq!(q.num_levels(), 8);
        assert_eq!(q.levels().first(), Some(&-1.75));
        assert_eq!(q.levels().last(), Some(&1.75));
        assert_eq!(q.cell(0.25).unwrap(), (0.0, 0.5));
        assert_eq!(q.quantize(100.0), 1.75);
        assert_eq!(q.quantize(-100.0), -1.75);
        let p: f64 = q.level_probabilities(0.3, 0.7).iter().sum();
        assert!((p - 1.0).abs() < 1e-14);
    }

    #[test]
    fn qpsk_symbols_have_unit_energy() {
        let inst = sample_instance(&example3(), 7).unwrap();
        for x in inst.x0.iter() {
            assert!((x.norm_sqr() - 1.0).abs() < 1e-15);
        }
        for y in inst.y.iter() {
            let q = example3().layers[1].channel.quantizer().unwrap();
            q.cell(y.re).unwrap();
            q.cell(y.im).unwrap();
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let spec = example3();
        assert_eq!(sample_instance(&spec, 42).unwrap(), sample_instance(&spec, 42).unwrap());
        assert_ne!(sample_instance(&spec, 42).unwrap().x0, sample_instance(&spec, 43).unwrap().x0);
    }

    #[test]
    fn noiseless_awgn_passes_z_through() {
        let spec = ModelSpec {
            layers: vec![LayerSpec { n_in: 8, n_out: 16, channel: Channel::Awgn { noise_var: 0.0 } }],
            prior: Prior::Qpsk,
            field: Field::Complex,
        };
        let inst = sample_instance(&spec, 1).unwrap();
        assert_eq!(inst.y, inst.hidden[0].z);
        assert_eq!(inst.hidden[0].z, matvec(&inst.matrices[0], &inst.x0));
    }

    #[test]
    fn design_resolution_uses_analytic_powers() {
        let design = ModelDesign {
            layers: vec![
                LayerDesign { n_in: 4, n_out: 8, noise: NoiseLevel::SnrDb(10.0), adc: None },
                LayerDesign {
                    n_in: 8,
                    n_out: 8,
                    noise: NoiseLevel::SnrDb(0.0),
                    adc: Some(AdcDesign { bits: 2, step: None }),
                },
            ],
            prior: Prior::Qpsk,
            field: Field::Complex,
        };
        let spec = design.resolve().unwrap();
        // T_Z^(1) = 1/2, sigma_1^2 = 0.05, T_X^(2) = T_Z^(2) = 0.55
        assert!((spec.layers[0].channel.noise_var() - 0.05).abs() < 1e-15);
        assert!((spec.layers[1].channel.noise_var() - 0.55).abs() < 1e-15);
        let step = spec.layers[1].channel.quantizer().unwrap().step;
        assert!((step - 6.0 * (1.1f64 / 2.0).sqrt() / 4.0).abs() < 1e-15);
        let powers = spec.layer_powers();
        assert!((powers[0].1 - 0.5).abs() < 1e-15);
        assert!((powers[1].0 - 0.55).abs() < 1e-15);
    }
}
