//! Scalar state evolution predicting the per-iteration MSE of the estimator.
//!
//! Per layer the recursion tracks the pseudo-prior variance `V`, the
//! feedback variance `Sigma` and the overlaps `q` (on `z`) and `d` (on `x`).
//! Overlaps are obtained from expected posterior variances: under a matched
//! model `E|E[z|.]|^2 = T_Z - E[Var(z|.)]`, so `q = T_Z - v~` and
//! `d = T_X - v^`, where the bars denote the averaged posterior variances
//! of the scalar channels.

use serde::{Deserialize, Serialize};

use crate::denoise::{
    quantized_input_mid_part, quantized_output_mid_part, quantized_part, qpsk_part,
};
use crate::error::Error;
use crate::model::{Channel, Field, ModelSpec, Prior, Quantizer};
use crate::quadrature::{gaussian_expectation, integrate_panels, GaussianRule, NormalRule, QuadratureSpec};
use crate::special::{norm_pdf, q_function};

/// Scalars of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeLayer {
    pub alpha: f64,
    /// Power of `x^(l)`.
    pub t_x: f64,
    /// Power of `z^(l)`.
    pub t_z: f64,
    /// Pseudo-prior variance of `z^(l)`.
    pub v: f64,
    /// Overlap of the posterior mean of `z^(l)` with itself.
    pub q: f64,
    /// Feedback variance on `x^(l)`.
    pub sigma: f64,
    /// Overlap of the posterior mean of `x^(l)` with itself.
    pub d: f64,
    /// Averaged posterior variance of `z^(l)`, `T_Z - q`.
    pub z_post_var: f64,
    /// Averaged posterior variance of `x^(l)`, `T_X - d`.
    pub x_post_var: f64,
}

impl SeLayer {
    /// Relative residual of `T_Z - V = d / alpha`, written as
    /// `V = (T_X - d) / alpha` to avoid cancellation near perfect recovery.
    pub fn pseudo_prior_identity(&self) -> f64 {
        (self.v - self.x_post_var / self.alpha) / self.t_z
    }

    /// Relative residual of `Sigma = (T_X - d)^2 / (alpha (alpha q - d))`,
    /// using `alpha q - d = (T_X - d) - alpha (T_Z - q)`.
    pub fn feedback_identity(&self) -> f64 {
        let e = self.x_post_var;
        let rhs = e * e / (self.alpha * (e - self.alpha * self.z_post_var));
        (self.sigma - rhs) / self.sigma
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeState {
    pub layers: Vec<SeLayer>,
    /// Number of completed iterations.
    pub iteration: usize,
    clamped_for: Vec<usize>,
}

impl SeState {
    /// Predicted MSE of the input estimate, `T_X^(1) - d^(1)`.
    pub fn mse(&self) -> f64 {
        let first = &self.layers[0];
        first.x_post_var
    }
}

/// Powers from the analytic signal model, zero overlaps.
pub fn se_init(spec: &ModelSpec) -> Result<SeState, Error> {
    spec.check()?;
    let layers: Vec<SeLayer> = spec
        .layers
        .iter()
        .zip(spec.layer_powers())
        .map(|(layer, (t_x, t_z))| SeLayer {
            alpha: layer.alpha(),
            t_x,
            t_z,
            v: t_z,
            q: 0.0,
            sigma: f64::INFINITY,
            d: 0.0,
            z_post_var: t_z,
            x_post_var: t_x,
        })
        .collect();
    if let Some(l) = layers.iter().position(|s| !(s.t_x.is_finite() && s.t_x > 0.0)) {
        return Err(Error::SeBreakdown { layer: l, iteration: 0, reason: "signal power is not finite and positive".into() });
    }
    let n = layers.len();
    Ok(SeState { layers, iteration: 0, clamped_for: vec![0; n] })
}

/// Consecutive clamped iterations tolerated before reporting a breakdown.
const MAX_CLAMPED: usize = 3;

/// Layers `L..1`: `V` from the current `d`, then `q` and `Sigma`.
pub fn se_backward_step(st: &mut SeState, spec: &ModelSpec, quad: &QuadratureSpec) -> Result<(), Error> {
    let n = spec.num_layers();
    let field = spec.field;
    let t = st.iteration + 1;
    for l in (0..n).rev() {
        let channel = &spec.layers[l].channel;
        let feedback = st.layers.get(l + 1).map(|nx| nx.sigma);
        let s = &mut st.layers[l];
        s.v = s.x_post_var / s.alpha;
        let reduction = match feedback {
            None => output_last_reduction(channel, s.t_z, s.v, field, quad),
            Some(sigma_next) => output_mid_reduction(channel, s.t_z, s.v, sigma_next, field, quad),
        };
        s.z_post_var = s.v - reduction;
        s.q = s.t_z - s.z_post_var;
        let floor = 1e-12 * s.t_z;
        let denom = reduction;
        if denom < floor {
            st.clamped_for[l] += 1;
            if st.clamped_for[l] > MAX_CLAMPED {
                return Err(Error::SeBreakdown {
                    layer: l,
                    iteration: t,
                    reason: format!("V - T_Z + q = {denom:e} stayed below the clamp for {} iterations", st.clamped_for[l]),
                });
            }
        } else {
            st.clamped_for[l] = 0;
        }
        let s = &mut st.layers[l];
        s.sigma = s.v * s.v / denom.max(floor);
        if !(s.sigma.is_finite() && s.q.is_finite()) {
            return Err(Error::SeBreakdown { layer: l, iteration: t, reason: "non-finite feedback variance".into() });
        }
    }
    Ok(())
}

/// Layers `1..L`: `d` from the feedback variance and the refreshed
/// pseudo-prior of the previous layer.
pub fn se_forward_step(st: &mut SeState, spec: &ModelSpec, quad: &QuadratureSpec) -> Result<(), Error> {
    let field = spec.field;
    let t = st.iteration + 1;
    for l in 0..spec.num_layers() {
        let sigma = st.layers[l].sigma;
        let x_post = if l == 0 {
            prior_mmse(&spec.prior, sigma, quad.outer)
        } else {
            let prev = st.layers[l - 1];
            let v_prev = prev.x_post_var / prev.alpha;
            input_mid_variance(&spec.layers[l - 1].channel, prev.t_z, v_prev, sigma, field, quad)
        };
        let s = &mut st.layers[l];
        s.x_post_var = x_post.clamp(0.0, s.t_x);
        s.d = s.t_x - s.x_post_var;
        if !s.d.is_finite() {
            return Err(Error::SeBreakdown { layer: l, iteration: t, reason: "non-finite overlap".into() });
        }
    }
    st.iteration += 1;
    Ok(())
}

/// One row of an SE trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeIteration {
    pub iteration: usize,
    pub mse: f64,
    pub layers: Vec<SeLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeTrace {
    pub iterations: Vec<SeIteration>,
    /// The input-layer MSE moved by at most `1e-12` relative in the last
    /// iteration.
    pub converged: bool,
}

impl SeTrace {
    /// Predicted MSE at iterations `1..=t`, holding the last value once the
    /// recursion has stopped.
    pub fn mse_at(&self, t: usize) -> Option<f64> {
        let last = self.iterations.last()?;
        if t == 0 {
            return None;
        }
        Some(self.iterations.get(t - 1).unwrap_or(last).mse)
    }

    pub fn final_mse(&self) -> Option<f64> {
        self.iterations.last().map(|it| it.mse)
    }
}

/// Stopping threshold on the relative change of the input-layer MSE.
pub const SE_STOP_TOL: f64 = 1e-12;

/// Iterates backward and forward steps up to `max_iters` times or until
/// the input-layer MSE `T_X - d^(1)` stops moving.
pub fn se_run(spec: &ModelSpec, max_iters: usize, quad: &QuadratureSpec) -> Result<SeTrace, Error> {
    quad.validate()?;
    let mut st = se_init(spec)?;
    let mut iterations = Vec::with_capacity(max_iters);
    let mut converged = false;
    for _ in 0..max_iters {
        let before = st.mse();
        se_backward_step(&mut st, spec, quad)?;
        se_forward_step(&mut st, spec, quad)?;
        iterations.push(SeIteration { iteration: st.iteration, mse: st.mse(), layers: st.layers.clone() });
        let scale = before.max(SE_STOP_TOL * st.layers[0].t_x);
        if (st.mse() - before).abs() <= SE_STOP_TOL * scale {
            converged = true;
            break;
        }
    }
    Ok(SeTrace { iterations, converged })
}

/// Reduction `V - v~` of the pseudo-prior variance of `z^(L)` by the
/// observation, averaged. Closed forms avoid the cancellation of `V - v~`
/// when the posterior is nearly as wide as the pseudo-prior.
fn output_last_reduction(ch: &Channel, t_z: f64, v: f64, field: Field, quad: &QuadratureSpec) -> f64 {
    match *ch {
        Channel::Awgn { noise_var } if noise_var.is_infinite() => 0.0,
        Channel::Awgn { noise_var } => v * v / (v + noise_var),
        Channel::QuantizedAwgn { noise_var, bits, step } => {
            let q = Quantizer { bits, step };
            let p = field.parts() as f64;
            let (spread, vp, np) = (((t_z - v) / p).max(0.0).sqrt(), v / p, noise_var / p);
            let cells = q.cells();
            let [e] = gaussian_expectation(quad.outer, |xi| {
                let z = spread * xi;
                [cells
                    .iter()
                    .map(|&(_, lo, hi)| {
                        let part = quantized_part(lo, hi, z, vp, np);
                        part.log_mass.exp() * part.moments.var
                    })
                    .sum()]
            });
            v - p * e
        }
    }
}

/// Reduction `V - v~` of the pseudo-prior variance of `z^(l)` by the
/// feedback on `x^(l+1)`, averaged.
fn output_mid_reduction(ch: &Channel, t_z: f64, v: f64, sigma_next: f64, field: Field, quad: &QuadratureSpec) -> f64 {
    match *ch {
        Channel::Awgn { noise_var } => {
            let w = sigma_next + noise_var;
            if w.is_infinite() {
                0.0
            } else {
                v * v / (v + w)
            }
        }
        Channel::QuantizedAwgn { noise_var, bits, step } => {
            let q = Quantizer { bits, step };
            let p = field.parts() as f64;
            let (spread, vp, np, sp) = (((t_z - v) / p).max(0.0).sqrt(), v / p, noise_var / p, sigma_next / p);
            let inner = NormalRule::new(quad.hermite_nodes);
            let cells = q.cells();
            let [e] = gaussian_expectation(quad.outer, |xi| {
                let z = spread * xi;
                let probs = q.level_probabilities(z, vp + np);
                let mut acc = 0.0;
                for (&(y, _, _), pr) in cells.iter().zip(probs) {
                    if pr == 0.0 {
                        continue;
                    }
                    let [ev] = inner.expect(|zeta| [quantized_output_mid_part(&q, y + sp.sqrt() * zeta, sp, z, vp, np).var]);
                    acc += pr * ev;
                }
                [acc]
            });
            v - p * e
        }
    }
}

/// Expected posterior variance of `x^(l)`, `l > 1`, whose prior comes from
/// the previous layer's pseudo-prior `(T_Z', V')` passed through its channel.
fn input_mid_variance(ch: &Channel, t_z: f64, v: f64, sigma: f64, field: Field, quad: &QuadratureSpec) -> f64 {
    match *ch {
        Channel::Awgn { noise_var } => {
            let w = v + noise_var;
            if sigma.is_infinite() {
                w
            } else {
                w * sigma / (w + sigma)
            }
        }
        Channel::QuantizedAwgn { noise_var, bits, step } => {
            let q = Quantizer { bits, step };
            let p = field.parts() as f64;
            let (spread, c2, sp) = (((t_z - v) / p).max(0.0).sqrt(), (v + noise_var) / p, sigma / p);
            let inner = NormalRule::new(quad.hermite_nodes);
            let cells = q.cells();
            let [e] = gaussian_expectation(quad.outer, |xi| {
                let z = spread * xi;
                let probs = q.level_probabilities(z, c2);
                let mut acc = 0.0;
                for (&(y, _, _), pr) in cells.iter().zip(probs) {
                    if pr == 0.0 {
                        continue;
                    }
                    let [ev] = inner.expect(|zeta| [quantized_input_mid_part(&q, y + sp.sqrt() * zeta, sp, z, c2).var]);
                    acc += pr * ev;
                }
                [acc]
            });
            p * e
        }
    }
}

/// Scalar MMSE of estimating a prior draw observed in Gaussian noise of
/// variance `sigma`.
pub fn prior_mmse(prior: &Prior, sigma: f64, rule: GaussianRule) -> f64 {
    match *prior {
        Prior::Gaussian { variance } => {
            if sigma.is_infinite() {
                variance
            } else {
                variance * sigma / (variance + sigma)
            }
        }
        Prior::Qpsk => qpsk_mmse(sigma, rule),
    }
}

const SECH2_WINDOW: f64 = 40.0;
const SECH2_PANELS: usize = 256;

/// MMSE of unit-energy QPSK in noise of total variance `sigma`,
/// `E[sech^2(1/sigma + zeta/sqrt(sigma))]`. The same in both fields.
pub fn qpsk_mmse(sigma: f64, rule: GaussianRule) -> f64 {
    if sigma.is_infinite() {
        return 1.0;
    }
    if sigma <= 0.0 {
        return 0.0;
    }
    let (shift, scale) = (1.0 / sigma, 1.0 / sigma.sqrt());
    // qpsk_part with amplitude 1 and noise 1 returns sech^2 of its argument
    let sech2 = |u: f64| qpsk_part(u, 1.0, 1.0).var;
    let e = match rule {
        GaussianRule::Hermite { .. } => gaussian_expectation(rule, |zeta| [sech2(shift + scale * zeta)])[0],
        GaussianRule::Adaptive { .. } => {
            // integrate over the tanh argument, where the mass sits near zero
            // for every noise level; a fixed rule keeps the map smooth in sigma
            let lo = (shift - 12.0 * scale).max(-SECH2_WINDOW);
            let hi = (shift + 12.0 * scale).min(SECH2_WINDOW);
            if lo >= hi {
                return 0.0;
            }
            integrate_panels(|u| [sech2(u) * norm_pdf((u - shift) / scale) / scale], lo, hi, SECH2_PANELS)[0]
        }
    };
    e.clamp(0.0, 1.0)
}

/// Noise variance at which the QPSK MMSE equals `mse`.
pub fn qpsk_effective_noise(mse: f64, rule: GaussianRule) -> f64 {
    if mse >= 1.0 {
        return f64::INFINITY;
    }
    if mse <= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (-30.0f64, 30.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if qpsk_mmse(mid.exp(), rule) < mse {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// `ṽ` of a quantized last layer via the squared truncated means, an
/// independent route to the same quantity as the generic variance path.
///
/// `V - V^2/(sigma2 + V) * sum_y E_xi[(phi(eta_1) - phi(eta_2))^2 / (Phi(eta_1) - Phi(eta_2))]`,
/// summed over real parts.
pub fn se_adc_vtilde(
    t_z: f64,
    v: f64,
    noise_var: f64,
    bits: u32,
    step: f64,
    field: Field,
    quad: &QuadratureSpec,
) -> Result<f64, Error> {
    let q = Quantizer::new(bits, step)?;
    if !(v > 0.0 && t_z >= v && noise_var >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < V <= T_Z and noise >= 0, got T_Z={t_z}, V={v}, noise={noise_var}"
        )));
    }
    let p = field.parts() as f64;
    let spread = ((t_z - v) / p).sqrt();
    let c = ((v + noise_var) / p).sqrt();
    let cells = q.cells();
    let [sum] = gaussian_expectation(quad.outer, |xi| {
        let z = spread * xi;
        [cells
            .iter()
            .map(|&(_, lo, hi)| {
                let t = crate::special::truncated_standard_normal((lo - z) / c, (hi - z) / c);
                t.log_mass.exp() * t.mean * t.mean
            })
            .sum()]
    });
    Ok(v - v * v / (noise_var + v) * sum)
}

/// `2 Q(x) - Q(x)^2`, the QPSK symbol error rate when each part is decided
/// with error `Q(x)`.
pub fn ser_from_argument(x: f64) -> f64 {
    let qx = q_function(x);
    2.0 * qx - qx * qx
}

/// How an MSE is turned into the argument of [`ser_from_argument`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SerMapping {
    /// `sqrt(mse)`, read literally.
    Verbatim,
    /// `1/sqrt(Sigma)`, where `Sigma` is the decoupled-channel noise whose
    /// QPSK MMSE equals the given MSE.
    #[default]
    EffectiveSnr,
}

/// Analytic symbol error rate of unit-energy complex QPSK at a given MSE.
pub fn ser_from_mse(mse: f64, mapping: SerMapping) -> f64 {
    match mapping {
        SerMapping::Verbatim => ser_from_argument(mse.max(0.0).sqrt()),
        SerMapping::EffectiveSnr => {
            let sigma = qpsk_effective_noise(mse, QuadratureSpec::default().outer);
            ser_from_argument(1.0 / sigma.sqrt())
        }
    }
}
