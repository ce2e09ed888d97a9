//! Numerical realization of the quantum action principle for a harmonic
//! oscillator.
//!
//! The wave functional is written `exp(i S[x]/hbar + sigma[x])` with phase
//! and log-amplitude functionals truncated at quadratic, time-local order.
//! Their four coefficient functions obey a closed ODE system
//! ([`dynamics`]); the action eigenvalue is a boundary term plus two
//! integrals over that solution ([`action`]) and depends only on the
//! initial coefficients, over which it is extremized ([`extremize`]).
//! In the classical limit everything has closed forms ([`classical`]),
//! which serve as the oracle for the numerical path.

pub mod action;
pub mod classical;
pub mod config;
pub mod dynamics;
pub mod experiments;
pub mod extremize;
pub mod model;
pub mod output;

pub use action::{constraint_residual, eigenvalue, EigenvalueReport, EvalError, FunctionalValue};
pub use classical::{lambda_classical, lambda_star, s10_star, ClassicalParams};
pub use config::{ConfigError, ExperimentConfig};
pub use dynamics::{
    convergence_order, integrate, integrate_rk4, CoefficientState, IntegrateError,
    IntegratorConfig, Method, SolutionGrid,
};
pub use experiments::{ExperimentError, SweepTable};
pub use extremize::{
    objective, objective_gradient, optimize, stationarity_check, ActiveMask, ExtremumResult,
    OptimizeOptions, Sense,
};
pub use model::{
    s20_to_t0, t0_to_s20, validate, ClosedFormError, InitialData, OscillatorSpec, SpecError,
};
