//! Numerical integration used by the state-evolution recursion and by the
//! reference oracle that every closed-form denoiser is checked against.
//!
//! Two engines are provided:
//!
//! * a globally adaptive 7/15-point Gauss–Kronrod integrator over a finite
//!   interval, operating on small fixed-size vectors of integrands so the mass
//!   and moments of a density are refined together;
//! * Gauss–Hermite rules (nodes from `gauss-quad`) rescaled to the standard
//!   normal measure `Dxi = N(xi|0,1) dxi`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::num::NonZeroUsize;

use gauss_quad::hermite::GaussHermite;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::special::FRAC_1_SQRT_2PI;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights at XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Half-width of the window used for expectations under `N(0,1)`; the mass
/// outside `[-12, 12]` is below `4e-33`.
const GAUSS_WINDOW: f64 = 12.0;
const MAX_SUBDIVISIONS: usize = 4000;

/// Mean and variance of a real scalar distribution.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RealMoments {
    pub mean: f64,
    pub var: f64,
}

/// Rule used for one-dimensional expectations over a standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum GaussianRule {
    /// Fixed Gauss–Hermite rule with the given number of nodes.
    Hermite { nodes: usize },
    /// Adaptive Gauss–Kronrod on `[-12, 12]` against the normal density,
    /// refined until the error estimate is below `tol` relative to the L1
    /// norm of the integrand.
    Adaptive { tol: f64 },
}

/// Quadrature settings for the state-evolution integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Rule for the outer `Dxi` integrals.
    pub outer: GaussianRule,
    /// Gauss–Hermite nodes for inner integrals over Gaussian feedback noise
    /// (only needed for quantized mid-layer channels).
    pub hermite_nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { outer: GaussianRule::Adaptive { tol: 1e-13 }, hermite_nodes: 40 }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<(), Error> {
        let outer_ok = match self.outer {
            GaussianRule::Hermite { nodes } => nodes >= 10,
            GaussianRule::Adaptive { tol } => tol > 0.0 && tol < 1e-3,
        };
        if !outer_ok || self.hermite_nodes < 10 {
            return Err(Error::InvalidParameter(format!(
                "quadrature needs >= 10 nodes and a tolerance in (0, 1e-3): {self:?}"
            )));
        }
        Ok(())
    }

    /// A strictly finer version of this spec (twice the nodes, 1/100 of the
    /// tolerance), used to check quadrature convergence.
    pub fn refined(&self) -> Self {
        let outer = match self.outer {
            GaussianRule::Hermite { nodes } => GaussianRule::Hermite { nodes: 2 * nodes },
            GaussianRule::Adaptive { tol } => GaussianRule::Adaptive { tol: tol / 100.0 },
        };
        Self { outer, hermite_nodes: 2 * self.hermite_nodes }
    }
}

/// Gauss–Hermite nodes and weights for `E[f(xi)]`, `xi ~ N(0,1)`.
#[derive(Debug, Clone)]
pub struct NormalRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl NormalRule {
    pub fn new(n: usize) -> Self {
        let n = NonZeroUsize::new(n.max(1)).expect("nonzero");
        let gh = GaussHermite::new(n);
        let (nodes, weights) = gh
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (x * std::f64::consts::SQRT_2, w / std::f64::consts::PI.sqrt()))
            .unzip();
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn expect<const N: usize>(&self, mut f: impl FnMut(f64) -> [f64; N]) -> [f64; N] {
        let mut acc = [0.0; N];
        for (x, w) in self.iter() {
            let v = f(x);
            for k in 0..N {
                acc[k] += w * v[k];
            }
        }
        acc
    }
}

/// `E[f(xi)]` for `xi ~ N(0,1)` under the given rule.
pub fn gaussian_expectation<const N: usize>(
    rule: GaussianRule,
    mut f: impl FnMut(f64) -> [f64; N],
) -> [f64; N] {
    match rule {
        GaussianRule::Hermite { nodes } => NormalRule::new(nodes).expect(f),
        GaussianRule::Adaptive { tol } => integrate_adaptive(
            |x| {
                let w = FRAC_1_SQRT_2PI * (-0.5 * x * x).exp();
                let v = f(x);
                v.map(|vk| w * vk)
            },
            -GAUSS_WINDOW,
            GAUSS_WINDOW,
            48,
            tol,
        ),
    }
}

struct Segment<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    abs: [f64; N],
    err: [f64; N],
    priority: f64,
}

impl<const N: usize> PartialEq for Segment<N> {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority
    }
}
impl<const N: usize> Eq for Segment<N> {}
impl<const N: usize> PartialOrd for Segment<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Segment<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.total_cmp(&other.priority)
    }
}

fn kronrod<const N: usize>(f: &mut impl FnMut(f64) -> [f64; N], a: f64, b: f64) -> Segment<N> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kron = [0.0; N];
    let mut gauss = [0.0; N];
    let mut abs = [0.0; N];
    let mid = f(center);
    for k in 0..N {
        kron[k] = WGK[7] * mid[k];
        gauss[k] = WG[3] * mid[k];
        abs[k] = WGK[7] * mid[k].abs();
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        let lo = f(center - dx);
        let hi = f(center + dx);
        for k in 0..N {
            let s = lo[k] + hi[k];
            kron[k] += WGK[j] * s;
            abs[k] += WGK[j] * (lo[k].abs() + hi[k].abs());
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * s;
            }
        }
    }
    let mut err = [0.0; N];
    for k in 0..N {
        kron[k] *= half;
        abs[k] *= half;
        err[k] = ((kron[k] - gauss[k] * half).abs()).max(f64::EPSILON * abs[k]);
    }
    Segment { a, b, value: kron, abs, err, priority: 0.0 }
}

/// Composite 15-point Kronrod rule on `panels` equal panels of `[a, b]`.
/// Unlike [`integrate_adaptive`] the nodes depend smoothly on `a` and `b`,
/// so the result is a smooth function of the integrand's parameters.
pub fn integrate_panels<const N: usize>(mut f: impl FnMut(f64) -> [f64; N], a: f64, b: f64, panels: usize) -> [f64; N] {
    assert!(a.is_finite() && b.is_finite() && a <= b, "bad interval [{a}, {b}]");
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut total = [0.0; N];
    for p in 0..panels {
        let lo = a + width * p as f64;
        let hi = if p + 1 == panels { b } else { lo + width };
        let seg = kronrod(&mut f, lo, hi);
        for k in 0..N {
            total[k] += seg.value[k];
        }
    }
    total
}

/// Globally adaptive Gauss–Kronrod integration of a vector-valued integrand
/// over the finite interval `[a, b]`, starting from `panels` equal panels.
///
/// Refinement stops when, for every component `k`, the summed error estimate
/// is below `rel_tol` times the integral of `|f_k|`.
pub fn integrate_adaptive<const N: usize>(
    mut f: impl FnMut(f64) -> [f64; N],
    a: f64,
    b: f64,
    panels: usize,
    rel_tol: f64,
) -> [f64; N] {
    assert!(a.is_finite() && b.is_finite() && a <= b, "bad interval [{a}, {b}]");
    if a == b {
        return [0.0; N];
    }
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut segments: Vec<Segment<N>> = (0..panels)
        .map(|p| {
            let lo = a + width * p as f64;
            let hi = if p + 1 == panels { b } else { lo + width };
            kronrod(&mut f, lo, hi)
        })
        .collect();

    let scale = |segs: &[Segment<N>]| {
        let mut s = [0.0; N];
        for seg in segs {
            for k in 0..N {
                s[k] += seg.abs[k];
            }
        }
        s.map(|v| v.max(f64::MIN_POSITIVE))
    };
    let norm = scale(&segments);
    let priority = |seg: &Segment<N>, norm: &[f64; N]| {
        (0..N).map(|k| seg.err[k] / norm[k]).fold(0.0, f64::max)
    };
    for seg in &mut segments {
        seg.priority = priority(seg, &norm);
    }
    let mut total_err = [0.0; N];
    for seg in &segments {
        for k in 0..N {
            total_err[k] += seg.err[k];
        }
    }
    let mut heap: BinaryHeap<Segment<N>> = segments.into_iter().collect();

    let converged = |err: &[f64; N]| (0..N).all(|k| err[k] <= rel_tol * norm[k]);
    let mut splits = 0;
    while !converged(&total_err) && splits < MAX_SUBDIVISIONS {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let mut left = kronrod(&mut f, worst.a, mid);
        let mut right = kronrod(&mut f, mid, worst.b);
        for k in 0..N {
            total_err[k] += left.err[k] + right.err[k] - worst.err[k];
        }
        left.priority = priority(&left, &norm);
        right.priority = priority(&right, &norm);
        heap.push(left);
        heap.push(right);
        splits += 1;
    }

    let mut total = [0.0; N];
    for seg in heap.iter() {
        for k in 0..N {
            total[k] += seg.value[k];
        }
    }
    total
}

/// Support of a density handed to [`quadrature_oracle`].
#[derive(Debug, Clone, Copy)]
pub enum Support<'a> {
    /// Finite interval `[lo, hi]`.
    Interval(f64, f64),
    /// Finite set of atoms.
    Discrete(&'a [f64]),
}

/// Reference mean and variance of an unnormalized density given by its log.
///
/// Continuous supports are integrated adaptively, starting from `nodes - 1`
/// equal panels (the panel count must resolve the narrowest feature of the
/// density); discrete supports are summed exactly. The variance is computed
/// in a second pass around the mean, so it does not suffer from
/// `E[x^2] - E[x]^2` cancellation. Targets 1e-10 relative accuracy on
/// Gaussian-mixture densities.
pub fn quadrature_oracle(
    log_density: impl Fn(f64) -> f64,
    support: Support<'_>,
    nodes: usize,
) -> Result<RealMoments, Error> {
    if nodes < 3 {
        return Err(Error::InvalidParameter(format!("oracle needs at least 3 nodes, got {nodes}")));
    }
    const MIN_LOG_MASS: f64 = -690.775_527_898_213_7; // ln(1e-300)
    match support {
        Support::Discrete(atoms) => {
            if atoms.is_empty() {
                return Err(Error::InvalidParameter("empty discrete support".into()));
            }
            let logs: Vec<f64> = atoms.iter().map(|&x| log_density(x)).collect();
            let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = logs.iter().map(|&l| (l - peak).exp()).collect();
            let mass: f64 = weights.iter().sum();
            let log_mass = peak + mass.ln();
            if !(log_mass >= MIN_LOG_MASS) {
                return Err(Error::NotNormalizable { log_mass });
            }
            let mean = atoms.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>() / mass;
            let var =
                atoms.iter().zip(&weights).map(|(x, w)| w * (x - mean).powi(2)).sum::<f64>() / mass;
            Ok(RealMoments { mean, var })
        }
        Support::Interval(lo, hi) => {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidParameter(format!(
                    "oracle interval must be finite and nonempty, got [{lo}, {hi}]"
                )));
            }
            let step = (hi - lo) / (nodes - 1) as f64;
            let (peak, argmax) = (0..nodes)
                .map(|k| lo + step * k as f64)
                .map(|x| (log_density(x), x))
                .filter(|(l, _)| !l.is_nan())
                .fold((f64::NEG_INFINITY, lo), |acc, v| if v.0 > acc.0 { v } else { acc });
            if peak == f64::NEG_INFINITY {
                return Err(Error::NotNormalizable { log_mass: f64::NEG_INFINITY });
            }
            let density = |x: f64| {
                let l = log_density(x) - peak;
                if l.is_nan() {
                    0.0
                } else {
                    l.exp()
                }
            };
            let tol = 1e-13;
            let [mass, first] = integrate_adaptive(
                |x| {
                    let p = density(x);
                    [p, (x - argmax) * p]
                },
                lo,
                hi,
                nodes - 1,
                tol,
            );
            let log_mass = peak + mass.ln();
            if !(mass > 0.0) || !(log_mass >= MIN_LOG_MASS) {
                return Err(Error::NotNormalizable { log_mass });
            }
            let mean = argmax + first / mass;
            let [second] =
                integrate_adaptive(|x| [(x - mean).powi(2) * density(x)], lo, hi, nodes - 1, tol);
            Ok(RealMoments { mean, var: second / mass })
        }
    }
}
