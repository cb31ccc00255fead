//! Multi-layer generalized approximate message passing.
//!
//! A multi-layer generalized linear model chains `L` random linear mixings,
//! each followed by an elementwise random transition:
//! `x^(1) -> z^(1) = H^(1) x^(1) -> x^(2) ~ P(.|z^(1)) -> ... -> y`.
//! This crate estimates `x^(1)` from `y` with a Bayesian message-passing
//! algorithm, predicts its per-iteration error with a scalar state
//! evolution, and checks the two against each other by Monte-Carlo
//! simulation.
//!
//! ```
//! use mlgamp::{run, sample_instance, se_run, Channel, Field, GampOptions, LayerSpec, ModelSpec, Prior, QuadratureSpec};
//!
//! let spec = ModelSpec {
//!     layers: vec![LayerSpec { n_in: 128, n_out: 256, channel: Channel::Awgn { noise_var: 0.01 } }],
//!     prior: Prior::Qpsk,
//!     field: Field::Complex,
//! };
//! let inst = sample_instance(&spec, 1)?;
//! let out = run(&spec, &inst.matrices, &inst.y, &GampOptions::default())?;
//! let nmse = mlgamp::nmse(&inst.x0, &out.estimate)?;
//! let predicted = se_run(&spec, 50, &QuadratureSpec::default())?.final_mse().unwrap();
//! assert!(nmse < 10.0 * predicted + 1e-3);
//! # Ok::<(), mlgamp::Error>(())
//! ```

pub mod denoise;
pub mod error;
pub mod gamp;
pub mod harness;
pub mod model;
pub mod quadrature;
pub mod special;
pub mod state_evolution;

pub use denoise::{gaussian_product, input_first, input_mid, output_last, output_mid, Moments, PseudoGaussian};
pub use error::Error;
pub use gamp::{run, run_scalar_variance, Damping, Gamp, GampOptions, GampOutput, GampState, GampTrace, InitMode};
pub use harness::{
    brute_force_posterior, nmse, run_experiment, run_point_trials, ser_qpsk, summarize, to_db, trial_seed, ExperimentConfig,
    ExperimentRecord, IterationSummary, PointResult, TrialOutcome,
    SweepAxis,
};
pub use model::{
    sample_instance, snr_to_sigma2, AdcDesign, Channel, Field, Instance, LayerDesign, LayerSpec, ModelDesign,
    ModelSpec, NoiseLevel, Prior, Quantizer,
};
pub use quadrature::{quadrature_oracle, GaussianRule, QuadratureSpec, RealMoments, Support};
pub use state_evolution::{
    se_adc_vtilde, se_backward_step, se_forward_step, se_init, se_run, ser_from_mse, SeLayer, SeState, SeTrace, SerMapping,
};

/// The guide's chapters, compiled and run as doc-tests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/model.md")]
    struct Model;
    #[doc = include_str!("../../../book/src/denoisers.md")]
    struct Denoisers;
    #[doc = include_str!("../../../book/src/algorithm.md")]
    struct Algorithm;
    #[doc = include_str!("../../../book/src/state-evolution.md")]
    struct StateEvolution;
    #[doc = include_str!("../../../book/src/experiments.md")]
    struct Experiments;
    #[doc = include_str!("../../../README.md")]
    struct Readme;
}
