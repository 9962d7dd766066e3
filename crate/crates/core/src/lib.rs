//! Curie-Weiss-Potts model laboratory: exact finite-n laws, the mean-field
//! free energy and phase diagram, heat-bath dynamics, exchangeable-pair
//! diagnostics, critical fluctuations and a Gaussian-smoothing oracle.

pub mod critical;
pub mod error;
pub mod experiments;
pub mod free_energy;
pub mod hs;
pub mod model;
pub mod numerics;
pub mod sampler;
pub mod stein;

pub use error::{CwpError, Result};
pub use free_energy::{
    closed_form_constants, find_minimizers, hessian_summary, regression_matrix, theoretical_sigma,
    CriticalConstants, HessianSummary, Minimizer, PhaseClassification, PhasePoint, PhaseTag,
    RegressionMatrix,
};
pub use model::{
    exact_law, log_weight, CountVector, ExactLaw, FluctuationVector, ModelParams,
    SpinConfiguration, StepCdf,
};
