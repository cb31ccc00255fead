//! Standard-normal special functions.
//!
//! Everything that divides a normal density by a normal probability goes
//! through [`truncated_standard_normal`], which works with the scaled
//! complementary error function so that far-tail truncations (a 1-bit ADC at
//! high SNR pushes the standardized thresholds past |8|) never produce `0/0`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// `1/sqrt(2*pi)`.
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, `Phi(x)`.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Gaussian tail probability `Q(x) = 1 - Phi(x)`.
#[inline]
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Scaled complementary error function `exp(x^2) * erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        if x < -26.6 {
            return f64::INFINITY;
        }
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 10.0 {
        return (x * x).exp() * libm::erfc(x);
    }
    if x.is_infinite() {
        return 0.0;
    }
    // Asymptotic series; at x >= 10 the 12th term is below 1e-16 relative.
    let inv2x2 = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..12 {
        term *= -((2 * n - 1) as f64) * inv2x2;
        sum += term;
    }
    sum / (x * PI.sqrt())
}

/// `ln Phi(x)`, accurate deep into the lower tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x < -5.0 {
        (0.5 * erfcx(-x * FRAC_1_SQRT_2)).ln() - 0.5 * x * x
    } else if x > 5.0 {
        (-q_function(x)).ln_1p()
    } else {
        norm_cdf(x).ln()
    }
}

/// Moments of a standard normal variable restricted to `(lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    /// `ln(Phi(hi) - Phi(lo))`.
    pub log_mass: f64,
    pub mean: f64,
    pub var: f64,
}

impl Truncation {
    #[inline]
    pub fn mass(&self) -> f64 {
        self.log_mass.exp()
    }
}

/// Mean and variance of `N(0,1)` truncated to `(lo, hi]`. Either bound may be
/// infinite. Requires `lo < hi`.
pub fn truncated_standard_normal(lo: f64, hi: f64) -> Truncation {
    debug_assert!(lo < hi, "empty truncation interval ({lo}, {hi}]");
    if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
        return Truncation { log_mass: 0.0, mean: 0.0, var: 1.0 };
    }
    // Reflect so the bulk of the interval sits in the lower half-line.
    if lo + hi > 0.0 {
        let t = truncated_standard_normal(-hi, -lo);
        return Truncation { log_mass: t.log_mass, mean: -t.mean, var: t.var };
    }

    // Now lo < 0 and hi is finite.
    let lo_term = |ratio_at_lo: f64| if lo.is_finite() { lo * ratio_at_lo } else { 0.0 };
    let (log_mass, pdf_lo, pdf_hi) = if hi > -1.0 {
        let mass = norm_cdf(hi) - norm_cdf(lo);
        let pdf_lo = if lo.is_finite() { norm_pdf(lo) } else { 0.0 };
        (mass.ln(), pdf_lo / mass, norm_pdf(hi) / mass)
    } else {
        // Both bounds in the lower tail: scale by Phi(hi).
        let ex_hi = erfcx(-hi * FRAC_1_SQRT_2);
        // Phi(lo)/Phi(hi) and phi(lo)/phi(hi)
        let (ratio_cdf_ln, ratio_pdf) = if lo.is_finite() {
            let ex_lo = erfcx(-lo * FRAC_1_SQRT_2);
            let gauss = -0.5 * (lo - hi) * (lo + hi);
            ((ex_lo / ex_hi).ln() + gauss, gauss.exp())
        } else {
            (f64::NEG_INFINITY, 0.0)
        };
        // 1 - Phi(lo)/Phi(hi)
        let keep = -ratio_cdf_ln.exp_m1();
        let log_mass = (0.5 * ex_hi).ln() - 0.5 * hi * hi + keep.ln();
        let hi_ratio = (2.0 / PI).sqrt() / ex_hi / keep;
        (log_mass, hi_ratio * ratio_pdf, hi_ratio)
    };
    let mean = pdf_lo - pdf_hi;
    let var = (1.0 + lo_term(pdf_lo) - hi * pdf_hi - mean * mean).max(0.0);
    Truncation { log_mass, mean, var }
}
