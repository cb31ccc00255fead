//! Scalar posterior-moment kernels.
//!
//! Every kernel tilts a Gaussian pseudo-prior by a local likelihood and
//! returns the mean and total variance of the hidden variable. The iterative
//! estimator and the state-evolution integrals both call these functions, so
//! channel and prior math lives only here.
//!
//! Gaussian-product forms are written in total variances and hold in either
//! field. Kernels that are not Gaussian (quantizers, QPSK) separate over real
//! parts, each part carrying half the total variance in the complex field.

use num_complex::Complex64;

use crate::error::Error;
use crate::model::{Channel, Field, Prior, Quantizer};
use crate::quadrature::RealMoments;
use crate::special::truncated_standard_normal;

/// Posterior mean and total variance of one scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: Complex64,
    pub var: f64,
}

/// A Gaussian message `N(mean, var)` used as a pseudo-prior or likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoGaussian {
    pub mean: Complex64,
    pub var: f64,
}

impl PseudoGaussian {
    pub fn new(mean: Complex64, var: f64) -> Self {
        Self { mean, var }
    }

    pub fn real(mean: f64, var: f64) -> Self {
        Self { mean: Complex64::new(mean, 0.0), var }
    }
}

fn check_var(what: &str, v: f64) -> Result<(), Error> {
    if v > 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} variance must be positive, got {v}")))
    }
}

/// Normalized product of `N(x|m1,v1)` and `N(x|m2,v2)`. Either variance may
/// be zero (a point mass), not both.
#[inline]
pub fn gaussian_product(m1: Complex64, v1: f64, m2: Complex64, v2: f64) -> Moments {
    let s = v1 + v2;
    if s.is_infinite() {
        return if v1.is_infinite() { Moments { mean: m2, var: v2 } } else { Moments { mean: m1, var: v1 } };
    }
    Moments { mean: (m1 * v2 + m2 * v1) / s, var: v1 * v2 / s }
}

/// Moments of `z` under `N(z|Z,V) P(y|z)` at the last layer.
pub fn output_last(y: Complex64, zv: PseudoGaussian, ch: &Channel, field: Field) -> Result<Moments, Error> {
    check_var("pseudo-prior", zv.var)?;
    match ch.quantizer() {
        None => Ok(gaussian_product(y, ch.noise_var(), zv.mean, zv.var)),
        Some(q) => {
            let noise = field.per_part(ch.noise_var());
            let v = field.per_part(zv.var);
            let part = |y: f64, z: f64| -> Result<RealMoments, Error> {
                let (lo, hi) = q.cell(y)?;
                Ok(quantized_part(lo, hi, z, v, noise).moments)
            };
            let re = part(y.re, zv.mean.re)?;
            match field {
                Field::Real => Ok(Moments { mean: Complex64::new(re.mean, 0.0), var: re.var }),
                Field::Complex => {
                    let im = part(y.im, zv.mean.im)?;
                    Ok(Moments { mean: Complex64::new(re.mean, im.mean), var: re.var + im.var })
                }
            }
        }
    }
}

/// Moments of `z` under `N(z|Z,V) Int P(x|z) N(x|R,Sigma) dx` at an inner
/// layer, where `rx = (R, Sigma)` is the feedback on the channel output.
pub fn output_mid(
    rx: PseudoGaussian,
    zv: PseudoGaussian,
    ch: &Channel,
    field: Field,
) -> Result<Moments, Error> {
    check_var("feedback", rx.var)?;
    check_var("pseudo-prior", zv.var)?;
    match ch.quantizer() {
        None => Ok(gaussian_product(rx.mean, rx.var + ch.noise_var(), zv.mean, zv.var)),
        Some(q) => {
            let noise = field.per_part(ch.noise_var());
            let (s, v) = (field.per_part(rx.var), field.per_part(zv.var));
            Ok(per_part(field, rx.mean, zv.mean, |r, z| quantized_output_mid_part(&q, r, s, z, v, noise)))
        }
    }
}

/// Moments of `x` under `P_X(x) N(x|R,Sigma)` at the first layer.
pub fn input_first(rx: PseudoGaussian, prior: &Prior, field: Field) -> Result<Moments, Error> {
    check_var("feedback", rx.var)?;
    match *prior {
        Prior::Gaussian { variance } => Ok(gaussian_product(Complex64::new(0.0, 0.0), variance, rx.mean, rx.var)),
        Prior::Qpsk => {
            let a = Prior::qpsk_amplitude(field);
            let s = field.per_part(rx.var);
            Ok(per_part(field, rx.mean, rx.mean, |r, _| qpsk_part(r, s, a)))
        }
    }
}

/// Moments of `x` under `Int P(x|z) N(z|Z,V) dz N(x|R,Sigma)` at an inner
/// layer, where `zv = (Z, V)` is the pseudo-prior of the previous layer's
/// pre-activation.
pub fn input_mid(
    rx: PseudoGaussian,
    zv: PseudoGaussian,
    ch: &Channel,
    field: Field,
) -> Result<Moments, Error> {
    check_var("feedback", rx.var)?;
    check_var("pseudo-prior", zv.var)?;
    match ch.quantizer() {
        None => Ok(gaussian_product(zv.mean, zv.var + ch.noise_var(), rx.mean, rx.var)),
        Some(q) => {
            let spread = field.per_part(zv.var + ch.noise_var());
            let s = field.per_part(rx.var);
            Ok(per_part(field, rx.mean, zv.mean, |r, z| quantized_input_mid_part(&q, r, s, z, spread)))
        }
    }
}

fn per_part(
    field: Field,
    a: Complex64,
    b: Complex64,
    f: impl Fn(f64, f64) -> RealMoments,
) -> Moments {
    let re = f(a.re, b.re);
    match field {
        Field::Real => Moments { mean: Complex64::new(re.mean, 0.0), var: re.var },
        Field::Complex => {
            let im = f(a.im, b.im);
            Moments { mean: Complex64::new(re.mean, im.mean), var: re.var + im.var }
        }
    }
}

/// Posterior of one quantized part: `u ~ N(z_mean, z_var)` observed through
/// `u + w in (lo, hi]` with `w ~ N(0, noise)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizedPart {
    /// Moments of `u`.
    pub moments: RealMoments,
    /// `ln P(u + w in (lo, hi])`.
    pub log_mass: f64,
}

pub fn quantized_part(lo: f64, hi: f64, z_mean: f64, z_var: f64, noise: f64) -> QuantizedPart {
    let c = (z_var + noise).sqrt();
    let t = truncated_standard_normal((lo - z_mean) / c, (hi - z_mean) / c);
    let gain = z_var / c;
    QuantizedPart {
        moments: RealMoments {
            mean: z_mean + gain * t.mean,
            var: (z_var - gain * gain * (1.0 - t.var)).max(0.0),
        },
        log_mass: t.log_mass,
    }
}

/// `E[x | r]` and `Var[x | r]` for `x` uniform on `{-a, a}` and
/// `r = x + N(0, s)`.
pub fn qpsk_part(r: f64, s: f64, a: f64) -> RealMoments {
    let u = a * r / s;
    // sech^2 written to stay accurate when tanh saturates
    let e = (-2.0 * u.abs()).exp();
    let sech2 = 4.0 * e / ((1.0 + e) * (1.0 + e));
    RealMoments { mean: a * u.tanh(), var: a * a * sech2 }
}

/// Output-side kernel of a quantized inner layer: `z ~ N(z_mean, z_var)`,
/// the level `y = Q(z + w)` is unknown but carries feedback `N(y|r, s)`.
pub fn quantized_output_mid_part(q: &Quantizer, r: f64, s: f64, z_mean: f64, z_var: f64, noise: f64) -> RealMoments {
    let comps: Vec<(f64, RealMoments)> = q
        .cells()
        .into_iter()
        .map(|(y, lo, hi)| {
            let p = quantized_part(lo, hi, z_mean, z_var, noise);
            (p.log_mass - 0.5 * (y - r) * (y - r) / s, p.moments)
        })
        .collect();
    mixture(&comps)
}

/// Input-side kernel of a quantized inner layer: levels weighted by their
/// probability under `z ~ N(z_mean, spread)` (pseudo-prior plus noise) and by
/// the feedback `N(y|r, s)`.
pub fn quantized_input_mid_part(q: &Quantizer, r: f64, s: f64, z_mean: f64, spread: f64) -> RealMoments {
    let c = spread.sqrt();
    let comps: Vec<(f64, RealMoments)> = q
        .cells()
        .into_iter()
        .map(|(y, lo, hi)| {
            let t = truncated_standard_normal((lo - z_mean) / c, (hi - z_mean) / c);
            (t.log_mass - 0.5 * (y - r) * (y - r) / s, RealMoments { mean: y, var: 0.0 })
        })
        .collect();
    mixture(&comps)
}

/// Moments of a mixture given log-weights and component moments.
fn mixture(comps: &[(f64, RealMoments)]) -> RealMoments {
    let peak = comps.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = comps.iter().map(|c| (c.0 - peak).exp()).collect();
    let total: f64 = w.iter().sum();
    let mean = comps.iter().zip(&w).map(|(c, w)| w * c.1.mean).sum::<f64>() / total;
    let var = comps
        .iter()
        .zip(&w)
        .map(|(c, w)| w * (c.1.var + (c.1.mean - mean).powi(2)))
        .sum::<f64>()
        / total;
    RealMoments { mean, var }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{quadrature_oracle, Support};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn awgn(noise_var: f64) -> Channel {
        Channel::Awgn { noise_var }
    }

    #[test]
    fn awgn_last_layer_products() {
        let m = output_last(c(1.0), PseudoGaussian::real(0.0, 1.0), &awgn(1.0), Field::Real).unwrap();
        assert_eq!((m.mean.re, m.var), (0.5, 0.5));
        let m = output_last(c(0.3), PseudoGaussian::real(-0.1, 0.5), &awgn(0.25), Field::Real).unwrap();
        assert_relative_eq!(m.mean.re, 1.0 / 6.0, max_relative = 1e-15);
        assert_relative_eq!(m.var, 1.0 / 6.0, max_relative = 1e-15);
        // oracle over z
        let o = quadrature_oracle(
            |z| -0.5 * (0.3 - z).powi(2) / 0.25 - 0.5 * (z + 0.1).powi(2) / 0.5,
            Support::Interval(-10.0, 10.0),
            201,
        )
        .unwrap();
        assert_relative_eq!(o.mean, m.mean.re, max_relative = 1e-10);
        assert_relative_eq!(o.var, m.var, max_relative = 1e-10);
    }

    #[test]
    fn one_bit_half_normal() {
        let ch = Channel::QuantizedAwgn { noise_var: 0.0, bits: 1, step: 2.0 };
        let m = output_last(c(1.0), PseudoGaussian::real(0.0, 1.0), &ch, Field::Real).unwrap();
        assert_relative_eq!(m.mean.re, (2.0 / PI).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(m.var, 1.0 - 2.0 / PI, max_relative = 1e-13);
        assert!(matches!(
            output_last(c(0.5), PseudoGaussian::real(0.0, 1.0), &ch, Field::Real),
            Err(Error::OffCodebook { .. })
        ));
    }

    #[test]
    fn fine_quantizer_approaches_awgn() {
        let (y, z, v, s2) = (0.3, -0.1, 0.5, 0.25);
        let exact = output_last(c(y), PseudoGaussian::real(z, v), &awgn(s2), Field::Real).unwrap();
        let mut prev = f64::INFINITY;
        for bits in [8u32, 10, 12] {
            let step = 16.0 / (1u64 << bits) as f64;
            let q = Quantizer::new(bits, step).unwrap();
            let yq = q.quantize(y);
            let ch = Channel::QuantizedAwgn { noise_var: s2, bits, step };
            let m = output_last(c(yq), PseudoGaussian::real(z, v), &ch, Field::Real).unwrap();
            let target = output_last(c(yq), PseudoGaussian::real(z, v), &awgn(s2), Field::Real).unwrap();
            let err = (m.mean.re - target.mean.re).abs() + (m.var - target.var).abs();
            assert!(err < 0.1 * step * step, "bits {bits}: err {err}");
            assert!(err < prev);
            prev = err;
        }
        assert!(exact.var > 0.0);
    }

    #[test]
    fn awgn_mid_layer_examples() {
        let m = output_mid(PseudoGaussian::real(1.0, 1.0), PseudoGaussian::real(0.0, 1.0), &awgn(0.0), Field::Real)
            .unwrap();
        assert_eq!((m.mean.re, m.var), (0.5, 0.5));
        let m = output_mid(PseudoGaussian::real(2.0, 1.0), PseudoGaussian::real(0.0, 2.0), &awgn(1.0), Field::Real)
            .unwrap();
        assert_eq!((m.mean.re, m.var), (1.0, 1.0));
        let m = output_mid(PseudoGaussian::real(5.0, 1e300), PseudoGaussian::real(0.3, 2.0), &awgn(1.0), Field::Real)
            .unwrap();
        assert_relative_eq!(m.mean.re, 0.3, max_relative = 1e-12);
        assert_relative_eq!(m.var, 2.0, max_relative = 1e-12);

        let m = input_mid(PseudoGaussian::real(1.0, 1.0), PseudoGaussian::real(0.0, 0.5), &awgn(0.5), Field::Real)
            .unwrap();
        assert_eq!((m.mean.re, m.var), (0.5, 0.5));
        let m = input_mid(PseudoGaussian::real(0.0, 1.0), PseudoGaussian::real(1.0, 0.75), &awgn(0.25), Field::Real)
            .unwrap();
        assert_eq!((m.mean.re, m.var), (0.5, 0.5));
        let m = input_mid(PseudoGaussian::real(0.0, 1.0), PseudoGaussian::real(0.7, 1e-14), &awgn(0.0), Field::Real)
            .unwrap();
        assert_relative_eq!(m.mean.re, 0.7, max_relative = 1e-12);
        assert!(m.var < 1e-13);
    }

    #[test]
    fn qpsk_prior() {
        let p = Prior::Qpsk;
        let m = input_first(PseudoGaussian::real(0.0, 3.0), &p, Field::Complex).unwrap();
        assert_eq!(m.mean, Complex64::new(0.0, 0.0));
        assert_relative_eq!(m.var, 1.0, max_relative = 1e-15);
        let m = input_first(PseudoGaussian::real(0.5, 1.0), &p, Field::Complex).unwrap();
        assert_relative_eq!(m.mean.re, FRAC_1_SQRT_2 * FRAC_1_SQRT_2.tanh(), max_relative = 1e-15);
        // (1/sqrt 2) tanh(1/sqrt 2) evaluates to 0.430529, not 0.42819
        assert_relative_eq!(m.mean.re, 0.430_528_585_790_273_9, max_relative = 1e-14);
        let s = Complex64::new(FRAC_1_SQRT_2, -FRAC_1_SQRT_2);
        let m = input_first(PseudoGaussian::new(Complex64::new(0.2, -0.1), 1e-6), &p, Field::Complex).unwrap();
        assert!((m.mean - s).norm() < 1e-12 && m.var < 1e-12);
        let m = input_first(PseudoGaussian::real(1.0, 1.0), &Prior::Gaussian { variance: 1.0 }, Field::Real).unwrap();
        assert_eq!((m.mean.re, m.var), (0.5, 0.5));
    }

    #[test]
    fn qpsk_matches_constellation_enumeration() {
        let r = Complex64::new(0.5, -0.2);
        let sigma = 0.7;
        let a = FRAC_1_SQRT_2;
        let pts = [(a, a), (a, -a), (-a, a), (-a, -a)];
        let w: Vec<f64> = pts
            .iter()
            .map(|&(re, im)| (-((r.re - re).powi(2) + (r.im - im).powi(2)) / sigma).exp())
            .collect();
        let z: f64 = w.iter().sum();
        let mean = pts
            .iter()
            .zip(&w)
            .fold(Complex64::new(0.0, 0.0), |acc, (&(re, im), w)| acc + Complex64::new(re, im) * *w / z);
        let m = input_first(PseudoGaussian::new(r, sigma), &Prior::Qpsk, Field::Complex).unwrap();
        assert!((m.mean - mean).norm() < 1e-15);
        assert_relative_eq!(m.var, 1.0 - mean.norm_sqr(), max_relative = 1e-14);
    }

    #[test]
    fn quantized_mid_kernels_match_oracles() {
        let q = Quantizer::new(2, 0.8).unwrap();
        let ch = Channel::QuantizedAwgn { noise_var: 0.3, bits: 2, step: 0.8 };
        let (r, s, z, v): (f64, f64, f64, f64) = (0.4, 0.5, -0.2, 0.6);
        let levels = q.levels();
        let spread = v + 0.3;
        let log_prior = |y: f64| {
            let (lo, hi) = q.cell(y).unwrap();
            let c = spread.sqrt();
            truncated_standard_normal((lo - z) / c, (hi - z) / c).log_mass
        };
        let oracle =
            quadrature_oracle(|y| log_prior(y) - 0.5 * (y - r).powi(2) / s, Support::Discrete(&levels), 3).unwrap();
        let m = input_mid(PseudoGaussian::real(r, s), PseudoGaussian::real(z, v), &ch, Field::Real).unwrap();
        assert_relative_eq!(m.mean.re, oracle.mean, max_relative = 1e-13);
        assert_relative_eq!(m.var, oracle.var, max_relative = 1e-13);

        // output side: z | sum_y N(y|r,s) P(y|z)
        let log_post = |u: f64| {
            let lik: f64 = q
                .cells()
                .iter()
                .map(|&(y, lo, hi)| {
                    let sd = 0.3f64.sqrt();
                    let p = crate::special::norm_cdf((hi - u) / sd) - crate::special::norm_cdf((lo - u) / sd);
                    p * (-0.5 * (y - r).powi(2) / s).exp()
                })
                .sum();
            lik.ln() - 0.5 * (u - z).powi(2) / v
        };
        let oracle = quadrature_oracle(log_post, Support::Interval(-12.0, 12.0), 241).unwrap();
        let m = output_mid(PseudoGaussian::real(r, s), PseudoGaussian::real(z, v), &ch, Field::Real).unwrap();
        assert_relative_eq!(m.mean.re, oracle.mean, max_relative = 1e-9);
        assert_relative_eq!(m.var, oracle.var, max_relative = 1e-9);
    }

    #[test]
    fn rejects_nonpositive_variances() {
        let zv = PseudoGaussian::real(0.0, 0.0);
        assert!(output_last(c(0.0), zv, &awgn(1.0), Field::Real).is_err());
        assert!(input_first(zv, &Prior::Qpsk, Field::Real).is_err());
        assert!(input_mid(PseudoGaussian::real(0.0, 1.0), PseudoGaussian::real(0.0, f64::NAN), &awgn(1.0), Field::Real)
            .is_err());
    }

    fn level(q: &Quantizer, k: usize) -> f64 {
        q.levels()[k % q.num_levels()]
    }

    proptest! {
        // the codebook and every Gaussian are symmetric, so negating all
        // means negates the posterior mean and keeps its variance
        #[test]
        fn kernels_are_odd_in_the_means(
            bits in 1u32..5,
            k in 0usize..64,
            (z, r) in (-2.0f64..2.0, -2.0f64..2.0),
            (v, s, n) in (0.05f64..2.0, 0.05f64..2.0, 0.01f64..1.0),
        ) {
            let q = Quantizer::new(bits, 0.5).unwrap();
            let ch = Channel::QuantizedAwgn { noise_var: n, bits, step: q.step };
            let y = level(&q, k);
            let pairs = [
                (
                    output_last(c(y), PseudoGaussian::real(z, v), &ch, Field::Real).unwrap(),
                    output_last(c(-y), PseudoGaussian::real(-z, v), &ch, Field::Real).unwrap(),
                ),
                (
                    output_mid(PseudoGaussian::real(r, s), PseudoGaussian::real(z, v), &ch, Field::Real).unwrap(),
                    output_mid(PseudoGaussian::real(-r, s), PseudoGaussian::real(-z, v), &ch, Field::Real).unwrap(),
                ),
                (
                    input_mid(PseudoGaussian::real(r, s), PseudoGaussian::real(z, v), &ch, Field::Real).unwrap(),
                    input_mid(PseudoGaussian::real(-r, s), PseudoGaussian::real(-z, v), &ch, Field::Real).unwrap(),
                ),
                (
                    input_first(PseudoGaussian::real(r, s), &Prior::Qpsk, Field::Real).unwrap(),
                    input_first(PseudoGaussian::real(-r, s), &Prior::Qpsk, Field::Real).unwrap(),
                ),
            ];
            for (a, b) in pairs {
                prop_assert!((a.mean + b.mean).norm() <= 1e-12 * (1.0 + a.mean.norm()), "{a:?} {b:?}");
                prop_assert!((a.var - b.var).abs() <= 1e-12 * a.var, "{a:?} {b:?}");
            }
        }

        // log-concave likelihoods never widen a Gaussian pseudo-prior; the
        // quantized mid-layer factor is a sum over cells and is not one
        #[test]
        fn posteriors_contract_the_pseudo_prior(
            bits in 1u32..5,
            k in 0usize..64,
            (z, r) in (-2.0f64..2.0, -2.0f64..2.0),
            (v, s, n) in (0.05f64..2.0, 0.05f64..2.0, 0.01f64..1.0),
        ) {
            let zv = PseudoGaussian::real(z, v);
            let rx = PseudoGaussian::real(r, s);
            let q = Quantizer::new(bits, 0.5).unwrap();
            let quantized = Channel::QuantizedAwgn { noise_var: n, bits, step: q.step };
            let y = c(level(&q, k));
            for ch in [awgn(n), quantized] {
                let last = output_last(y, zv, &ch, Field::Real).unwrap();
                prop_assert!(last.var > 0.0 && last.var <= v * (1.0 + 1e-12), "{last:?}");
            }
            let mid = output_mid(rx, zv, &awgn(n), Field::Real).unwrap();
            prop_assert!(mid.var > 0.0 && mid.var <= v, "{mid:?}");
            let x = input_mid(rx, zv, &awgn(n), Field::Real).unwrap();
            prop_assert!(x.var <= s);
            for prior in [Prior::Qpsk, Prior::Gaussian { variance: 0.7 }] {
                let m = input_first(rx, &prior, Field::Real).unwrap();
                prop_assert!(m.var >= 0.0 && m.var <= prior.power() * (1.0 + 1e-12), "{m:?}");
            }
        }

        #[test]
        fn complex_kernels_split_into_real_parts(
            bits in 1u32..5,
            (k, j) in (0usize..64, 0usize..64),
            (zr, zi, rr, ri) in (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0),
            (v, s, n) in (0.05f64..2.0, 0.05f64..2.0, 0.01f64..1.0),
        ) {
            let q = Quantizer::new(bits, 0.5).unwrap();
            let full = Channel::QuantizedAwgn { noise_var: n, bits, step: q.step };
            let half = Channel::QuantizedAwgn { noise_var: n / 2.0, bits, step: q.step };
            let y = Complex64::new(level(&q, k), level(&q, j));
            let zv = PseudoGaussian::new(Complex64::new(zr, zi), v);
            let rx = PseudoGaussian::new(Complex64::new(rr, ri), s);
            let re = |m: Complex64| PseudoGaussian::real(m.re, 0.0);
            let im = |m: Complex64| PseudoGaussian::real(m.im, 0.0);
            let with_var = |p: PseudoGaussian, var: f64| PseudoGaussian { var, ..p };
            let kernels: [&dyn Fn(Complex64, PseudoGaussian, PseudoGaussian, &Channel, Field) -> Moments; 3] = [
                &|y, _, zv, ch, f| output_last(y, zv, ch, f).unwrap(),
                &|_, rx, zv, ch, f| output_mid(rx, zv, ch, f).unwrap(),
                &|_, rx, zv, ch, f| input_mid(rx, zv, ch, f).unwrap(),
            ];
            for kernel in kernels {
                let m = kernel(y, rx, zv, &full, Field::Complex);
                let a = kernel(c(y.re), with_var(re(rx.mean), s / 2.0), with_var(re(zv.mean), v / 2.0), &half, Field::Real);
                let b = kernel(c(y.im), with_var(im(rx.mean), s / 2.0), with_var(im(zv.mean), v / 2.0), &half, Field::Real);
                prop_assert_eq!(m.mean, Complex64::new(a.mean.re, b.mean.re));
                prop_assert!((m.var - (a.var + b.var)).abs() <= 1e-15 * m.var);
            }
        }
    }

    #[test]
    fn complex_kernel_splits_into_real_parts() {
        let ch = Channel::QuantizedAwgn { noise_var: 0.4, bits: 3, step: 0.5 };
        let y = Complex64::new(0.25, -0.75);
        let zv = PseudoGaussian::new(Complex64::new(0.1, -0.3), 0.8);
        let m = output_last(y, zv, &ch, Field::Complex).unwrap();
        let ch_half = Channel::QuantizedAwgn { noise_var: 0.2, bits: 3, step: 0.5 };
        let re = output_last(c(y.re), PseudoGaussian::real(zv.mean.re, 0.4), &ch_half, Field::Real).unwrap();
        let im = output_last(c(y.im), PseudoGaussian::real(zv.mean.im, 0.4), &ch_half, Field::Real).unwrap();
        assert_eq!(m.mean, Complex64::new(re.mean.re, im.mean.re));
        assert_relative_eq!(m.var, re.var + im.var, max_relative = 1e-15);
    }
}
