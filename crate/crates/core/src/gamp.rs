//! The multi-layer GAMP estimator and its scalar-variance simplification.
//!
//! One iteration is a backward sweep from the last layer to the first,
//! followed by a forward sweep from the first layer to the last. Each
//! layer-step consumes the messages its neighbour produced earlier in the
//! same sweep.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::denoise::{input_first, input_mid, output_last, output_mid, PseudoGaussian};
use crate::error::Error;
use crate::model::ModelSpec;

/// Starting pseudo-prior on each pre-activation `z^(l)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Mean `alpha_1 * ... * alpha_l`, variance 1.
    Verbatim,
    /// Mean 0, variance `T_Z^(l)` (the analytic pre-activation power).
    #[default]
    Uninformed,
}

/// Per-layer damping factors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Damping {
    /// No damping on any layer.
    #[default]
    Off,
    Uniform(f64),
    PerLayer(Vec<f64>),
}

impl Damping {
    pub fn factors(&self, layers: usize) -> Result<Vec<f64>, Error> {
        let rho = match self {
            Damping::Off => vec![1.0; layers],
            Damping::Uniform(r) => vec![*r; layers],
            Damping::PerLayer(v) => {
                if v.len() != layers {
                    return Err(Error::DimensionMismatch(format!(
                        "{} damping factors for {layers} layers",
                        v.len()
                    )));
                }
                v.clone()
            }
        };
        if let Some(bad) = rho.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::InvalidParameter(format!("damping factor must lie in (0, 1], got {bad}")));
        }
        Ok(rho)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GampOptions {
    pub max_iters: usize,
    pub damping: Damping,
    pub variance_floor: f64,
    /// Run the scalar-variance simplification.
    pub scalar_variance: bool,
    /// Stop once the relative change of the estimate falls to this value.
    /// `None` always runs `max_iters` iterations.
    pub stop_tol: Option<f64>,
    pub init: InitMode,
    /// Keep the `-V s` correction in the pre-activation update.
    pub onsager: bool,
    /// Also damp the posterior means of `x` and `z`.
    pub damp_estimates: bool,
}

impl Default for GampOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            damping: Damping::Off,
            variance_floor: 1e-11,
            scalar_variance: false,
            stop_tol: Some(1e-8),
            init: InitMode::default(),
            onsager: true,
            damp_estimates: false,
        }
    }
}

impl GampOptions {
    pub fn validate(&self) -> Result<(), Error> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.variance_floor > 0.0 && self.variance_floor < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "variance floor must lie in (0, 1), got {}",
                self.variance_floor
            )));
        }
        if let Some(tol) = self.stop_tol {
            if !(tol >= 0.0) {
                return Err(Error::InvalidParameter(format!("stop tolerance must be >= 0, got {tol}")));
            }
        }
        Ok(())
    }
}

/// Iterating variables of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    /// `Z`, pseudo-prior means of `z^(l)` (length `n_out`).
    pub z_mean: Array1<Complex64>,
    /// `V`, pseudo-prior variances of `z^(l)`.
    pub z_var: Array1<f64>,
    /// `z~`, posterior means of `z^(l)`.
    pub z_post_mean: Array1<Complex64>,
    /// `v~`, posterior variances of `z^(l)`.
    pub z_post_var: Array1<f64>,
    /// `s`, scaled residuals.
    pub score: Array1<Complex64>,
    /// `tau`, negated derivative of the residual.
    pub score_precision: Array1<f64>,
    /// `R`, feedback means on `x^(l)` (length `n_in`).
    pub feedback_mean: Array1<Complex64>,
    /// `Sigma`, feedback variances on `x^(l)`.
    pub feedback_var: Array1<f64>,
    /// `m^`, posterior means of `x^(l)`.
    pub x_mean: Array1<Complex64>,
    /// `v^`, posterior variances of `x^(l)`.
    pub x_var: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GampState {
    pub layers: Vec<LayerState>,
    /// Index `t` of the next backward sweep, starting at 1.
    pub iteration: usize,
}

impl GampState {
    /// Current estimate of the input signal.
    pub fn estimate(&self) -> &Array1<Complex64> {
        &self.layers[0].x_mean
    }
}

/// Summary of one completed iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Normalized error of the estimate, when the truth was supplied.
    pub nmse: Option<f64>,
    /// Layer averages of `V`.
    pub mean_z_var: Vec<f64>,
    /// Layer averages of `Sigma`.
    pub mean_feedback_var: Vec<f64>,
    /// Relative change of the estimate during this iteration.
    pub change: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GampTrace {
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct GampOutput {
    pub estimate: Array1<Complex64>,
    pub trace: GampTrace,
    pub state: GampState,
}

/// Estimator bound to one model and its mixing matrices.
#[derive(Debug)]
pub struct Gamp<'a> {
    spec: &'a ModelSpec,
    matrices: &'a [Array2<Complex64>],
    abs2: Vec<Array2<f64>>,
    opts: GampOptions,
    damping: Vec<f64>,
}

impl<'a> Gamp<'a> {
    pub fn new(spec: &'a ModelSpec, matrices: &'a [Array2<Complex64>], opts: GampOptions) -> Result<Self, Error> {
        spec.check()?;
        opts.validate()?;
        if matrices.len() != spec.num_layers() {
            return Err(Error::DimensionMismatch(format!(
                "{} matrices for {} layers",
                matrices.len(),
                spec.num_layers()
            )));
        }
        for (l, (h, layer)) in matrices.iter().zip(&spec.layers).enumerate() {
            if h.dim() != (layer.n_out, layer.n_in) {
                return Err(Error::DimensionMismatch(format!(
                    "matrix {l} has shape {:?}, layer needs ({}, {})",
                    h.dim(),
                    layer.n_out,
                    layer.n_in
                )));
            }
        }
        let damping = opts.damping.factors(spec.num_layers())?;
        let abs2 = matrices.iter().map(|h| h.mapv(|v| v.norm_sqr())).collect();
        Ok(Self { spec, matrices, abs2, opts, damping })
    }

    pub fn options(&self) -> &GampOptions {
        &self.opts
    }

    fn check_observation(&self, y: &Array1<Complex64>) -> Result<(), Error> {
        if y.len() != self.spec.output_len() {
            return Err(Error::DimensionMismatch(format!(
                "observation has length {}, model output is {}",
                y.len(),
                self.spec.output_len()
            )));
        }
        if let Some(q) = self.spec.layers[self.spec.num_layers() - 1].channel.quantizer() {
            for v in y {
                q.cell(v.re)?;
                if self.spec.field == crate::model::Field::Complex {
                    q.cell(v.im)?;
                }
            }
        }
        Ok(())
    }

    /// Starting state for observation `y`.
    pub fn init_state(&self, y: &Array1<Complex64>) -> Result<GampState, Error> {
        self.check_observation(y)?;
        let powers = self.spec.layer_powers();
        let floor = self.opts.variance_floor;
        let mut alpha_prod = 1.0;
        let layers = self
            .spec
            .layers
            .iter()
            .zip(&powers)
            .enumerate()
            .map(|(l, (layer, &(t_x, t_z)))| {
                alpha_prod *= layer.alpha();
                let (z0, v0) = match self.opts.init {
                    InitMode::Verbatim => (alpha_prod, 1.0),
                    InitMode::Uninformed => (0.0, t_z.max(floor)),
                };
                let x_var = if l == 0 { self.spec.prior.power() } else { t_x };
                let zeros_out = Array1::from_elem(layer.n_out, Complex64::new(0.0, 0.0));
                let zeros_in = Array1::from_elem(layer.n_in, Complex64::new(0.0, 0.0));
                LayerState {
                    z_mean: Array1::from_elem(layer.n_out, Complex64::new(z0, 0.0)),
                    z_var: Array1::from_elem(layer.n_out, v0),
                    z_post_mean: Array1::from_elem(layer.n_out, Complex64::new(z0, 0.0)),
                    z_post_var: Array1::from_elem(layer.n_out, v0),
                    score: zeros_out,
                    score_precision: Array1::zeros(layer.n_out),
                    feedback_mean: zeros_in.clone(),
                    feedback_var: Array1::from_elem(layer.n_in, 1.0 / floor),
                    x_mean: zeros_in,
                    x_var: Array1::from_elem(layer.n_in, x_var),
                }
            })
            .collect();
        Ok(GampState { layers, iteration: 1 })
    }

    /// Layers `L..1`: posterior of `z`, residuals, and feedback `(R, Sigma)`.
    pub fn backward_sweep(&self, st: &mut GampState, y: &Array1<Complex64>) -> Result<(), Error> {
        let n_layers = self.spec.num_layers();
        let field = self.spec.field;
        let floor = self.opts.variance_floor;
        let t = st.iteration;
        for l in (0..n_layers).rev() {
            let channel = &self.spec.layers[l].channel;
            let (head, tail) = st.layers.split_at_mut(l + 1);
            let cur = &mut head[l];
            let next = tail.first();
            let rho = self.damping[l];
            for a in 0..cur.z_mean.len() {
                let zv = PseudoGaussian::new(cur.z_mean[a], cur.z_var[a]);
                let m = match next {
                    None => output_last(y[a], zv, channel, field)?,
                    Some(nx) => output_mid(
                        PseudoGaussian::new(nx.feedback_mean[a], nx.feedback_var[a]),
                        zv,
                        channel,
                        field,
                    )?,
                };
                cur.z_post_mean[a] = if self.opts.damp_estimates && t > 1 {
                    m.mean * rho + cur.z_post_mean[a] * (1.0 - rho)
                } else {
                    m.mean
                };
                cur.z_post_var[a] = m.var;
            }

            let h = &self.matrices[l];
            if self.opts.scalar_variance {
                let v = cur.z_var[0];
                let v_post = mean(&cur.z_post_var);
                let tau = ((v - v_post) / (v * v)).clamp(0.0, 1.0 / floor);
                let sigma = (v * v / (v - v_post).max(floor)).min(1.0 / floor);
                cur.score_precision.fill(tau);
                cur.feedback_var.fill(sigma);
                for a in 0..cur.score.len() {
                    cur.score[a] = (cur.z_post_mean[a] - cur.z_mean[a]) / v;
                }
            } else {
                for a in 0..cur.score.len() {
                    let v = cur.z_var[a];
                    cur.score[a] = (cur.z_post_mean[a] - cur.z_mean[a]) / v;
                    cur.score_precision[a] = ((v - cur.z_post_var[a]) / (v * v)).clamp(0.0, 1.0 / floor);
                }
                let precision = transpose_matvec(&self.abs2[l], &cur.score_precision);
                for (sig, p) in cur.feedback_var.iter_mut().zip(precision) {
                    *sig = 1.0 / p.max(floor);
                }
            }
            let back = adjoint_matvec(h, &cur.score);
            for i in 0..cur.feedback_mean.len() {
                cur.feedback_mean[i] = cur.x_mean[i] + back[i] * cur.feedback_var[i];
            }
            ensure_finite("R", l, t, cur.feedback_mean.iter().map(|v| v.re + v.im))?;
            ensure_finite("Sigma", l, t, cur.feedback_var.iter().copied())?;
        }
        Ok(())
    }

    /// Layers `1..L`: posterior of `x`, then the pseudo-prior `(Z, V)`.
    pub fn forward_sweep(&self, st: &mut GampState) -> Result<(), Error> {
        let field = self.spec.field;
        let floor = self.opts.variance_floor;
        let t = st.iteration;
        for l in 0..self.spec.num_layers() {
            let (head, tail) = st.layers.split_at_mut(l);
            let prev = head.last();
            let cur = &mut tail[0];
            let rho = self.damping[l];
            for i in 0..cur.x_mean.len() {
                let rx = PseudoGaussian::new(cur.feedback_mean[i], cur.feedback_var[i]);
                let m = match prev {
                    None => input_first(rx, &self.spec.prior, field)?,
                    Some(pv) => input_mid(
                        rx,
                        PseudoGaussian::new(pv.z_mean[i], pv.z_var[i]),
                        &self.spec.layers[l - 1].channel,
                        field,
                    )?,
                };
                cur.x_mean[i] = if self.opts.damp_estimates {
                    m.mean * rho + cur.x_mean[i] * (1.0 - rho)
                } else {
                    m.mean
                };
                cur.x_var[i] = m.var;
            }

            let fresh_var = if self.opts.scalar_variance {
                Array1::from_elem(cur.z_mean.len(), mean(&cur.x_var) / self.spec.layers[l].alpha())
            } else {
                matvec_real(&self.abs2[l], &cur.x_var)
            };
            let mixed = matvec(&self.matrices[l], &cur.x_mean);
            for a in 0..cur.z_mean.len() {
                let onsager = if self.opts.onsager { cur.score[a] * fresh_var[a] } else { Complex64::new(0.0, 0.0) };
                let z_new = mixed[a] - onsager;
                cur.z_mean[a] = z_new * rho + cur.z_mean[a] * (1.0 - rho);
                cur.z_var[a] = (rho * fresh_var[a] + (1.0 - rho) * cur.z_var[a]).max(floor);
            }
            ensure_finite("Z", l, t, cur.z_mean.iter().map(|v| v.re + v.im))?;
            ensure_finite("V", l, t, cur.z_var.iter().copied())?;
        }
        st.iteration += 1;
        Ok(())
    }

    pub fn run(&self, y: &Array1<Complex64>) -> Result<GampOutput, Error> {
        self.run_with(y, None, |_| {})
    }

    /// Runs up to `max_iters` iterations, calling `observe` with the state
    /// after every completed iteration. With `truth`, the trace carries the
    /// normalized error of every iterate.
    pub fn run_with(
        &self,
        y: &Array1<Complex64>,
        truth: Option<&Array1<Complex64>>,
        mut observe: impl FnMut(&GampState),
    ) -> Result<GampOutput, Error> {
        if let Some(x) = truth {
            if x.len() != self.spec.input_len() {
                return Err(Error::DimensionMismatch(format!(
                    "truth has length {}, model input is {}",
                    x.len(),
                    self.spec.input_len()
                )));
            }
        }
        let mut st = self.init_state(y)?;
        let mut trace = GampTrace::default();
        for _ in 0..self.opts.max_iters {
            let t = st.iteration;
            let before = st.estimate().clone();
            let step = self.backward_sweep(&mut st, y).and_then(|()| self.forward_sweep(&mut st));
            if let Err(cause) = step {
                return Err(Error::Diverged { iteration: t, cause: Box::new(cause), trace: Box::new(trace) });
            }
            let after = st.estimate();
            let scale = norm_sqr(&before);
            let change = if scale > 0.0 {
                (after.iter().zip(&before).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / scale).sqrt()
            } else {
                f64::INFINITY
            };
            trace.iterations.push(IterationRecord {
                iteration: t,
                nmse: truth.map(|x| crate::harness::nmse(x, after).unwrap_or(f64::NAN)),
                mean_z_var: st.layers.iter().map(|ls| mean(&ls.z_var)).collect(),
                mean_feedback_var: st.layers.iter().map(|ls| mean(&ls.feedback_var)).collect(),
                change,
            });
            observe(&st);
            if self.opts.stop_tol.is_some_and(|tol| change <= tol) {
                trace.converged = true;
                break;
            }
        }
        Ok(GampOutput { estimate: st.estimate().clone(), trace, state: st })
    }
}

/// Runs the full estimator.
pub fn run(
    spec: &ModelSpec,
    matrices: &[Array2<Complex64>],
    y: &Array1<Complex64>,
    opts: &GampOptions,
) -> Result<GampOutput, Error> {
    Gamp::new(spec, matrices, GampOptions { scalar_variance: false, ..opts.clone() })?.run(y)
}

/// Runs the scalar-variance simplification.
pub fn run_scalar_variance(
    spec: &ModelSpec,
    matrices: &[Array2<Complex64>],
    y: &Array1<Complex64>,
    opts: &GampOptions,
) -> Result<GampOutput, Error> {
    Gamp::new(spec, matrices, GampOptions { scalar_variance: true, ..opts.clone() })?.run(y)
}

fn ensure_finite(
    quantity: &'static str,
    layer: usize,
    iteration: usize,
    values: impl Iterator<Item = f64>,
) -> Result<(), Error> {
    for (index, v) in values.enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { quantity, layer, index, iteration });
        }
    }
    Ok(())
}

fn mean(v: &Array1<f64>) -> f64 {
    v.sum() / v.len() as f64
}

fn norm_sqr(v: &Array1<Complex64>) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

/// `H x`.
pub(crate) fn matvec(h: &Array2<Complex64>, x: &Array1<Complex64>) -> Array1<Complex64> {
    crate::model::matvec(h, x)
}

/// `H^H s`.
pub(crate) fn adjoint_matvec(h: &Array2<Complex64>, s: &Array1<Complex64>) -> Array1<Complex64> {
    let mut out = Array1::from_elem(h.ncols(), Complex64::new(0.0, 0.0));
    let out_s = out.as_slice_mut().expect("contiguous");
    for (row, &sa) in h.rows().into_iter().zip(s.iter()) {
        for (o, hv) in out_s.iter_mut().zip(row.iter()) {
            *o += hv.conj() * sa;
        }
    }
    out
}

/// `A v` for a real matrix.
fn matvec_real(a: &Array2<f64>, v: &Array1<f64>) -> Array1<f64> {
    a.rows().into_iter().map(|row| row.iter().zip(v.iter()).map(|(x, y)| x * y).sum()).collect()
}

/// `A^T v` for a real matrix.
fn transpose_matvec(a: &Array2<f64>, v: &Array1<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(a.ncols());
    let out_s = out.as_slice_mut().expect("contiguous");
    for (row, &va) in a.rows().into_iter().zip(v.iter()) {
        for (o, x) in out_s.iter_mut().zip(row.iter()) {
            *o += x * va;
        }
    }
    out
}
