//! Action eigenvalue, initial-data constraint and functional diagnostics
//! evaluated on a [`SolutionGrid`].

use serde::Serialize;
use thiserror::Error;

use crate::classical;
use crate::dynamics::SolutionGrid;
use crate::model::ClosedFormError;
use crate::output::{serialize_sig17, serialize_sig17_opt};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("grid ends at t = {t_end} before the horizon T = {horizon}")]
    IncompleteGrid { t_end: f64, horizon: f64 },
    #[error("trajectory has {got} samples, grid has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    ClosedForm(#[from] ClosedFormError),
}

/// The eigenvalue split into its three contributions, plus the constraint
/// residual of the same run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenvalueReport {
    #[serde(serialize_with = "serialize_sig17")]
    pub lambda: f64,
    /// `(S1 x + S2 x^2 / 2)` at `T` minus at `0`.
    #[serde(serialize_with = "serialize_sig17")]
    pub boundary_term: f64,
    /// `-qS(T) / (2m)`.
    #[serde(serialize_with = "serialize_sig17")]
    pub kinetic_term: f64,
    /// `hbar^2 qSigma(T) / (2m)`.
    #[serde(serialize_with = "serialize_sig17")]
    pub quantum_term: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub constraint_residual: f64,
}

fn complete(grid: &SolutionGrid) -> Result<(), EvalError> {
    let horizon = grid.spec.horizon;
    let t_end = grid.states.last().map_or(f64::NAN, |s| s.t);
    if grid.states.is_empty() || (t_end - horizon).abs() > 1e-12 * horizon.max(1.0) {
        return Err(EvalError::IncompleteGrid { t_end, horizon });
    }
    Ok(())
}

/// Eigenvalue of the action operator for the run in `grid`.
pub fn eigenvalue(grid: &SolutionGrid) -> Result<EigenvalueReport, EvalError> {
    complete(grid)?;
    let spec = &grid.spec;
    let m = spec.mass;
    let (start, end) = (grid.first(), grid.last());
    let (x0, xt) = (spec.x0, spec.x_end);

    let boundary_term =
        (end.s1 * xt + end.s2 * xt * xt / 2.0) - (start.s1 * x0 + start.s2 * x0 * x0 / 2.0);
    let kinetic_term = -end.q_s / (2.0 * m);
    let quantum_term = spec.hbar * spec.hbar * end.q_sigma / (2.0 * m);
    Ok(EigenvalueReport {
        lambda: boundary_term + kinetic_term + quantum_term,
        boundary_term,
        kinetic_term,
        quantum_term,
        constraint_residual: residual_unchecked(grid),
    })
}

fn residual_unchecked(grid: &SolutionGrid) -> f64 {
    let spec = &grid.spec;
    let (start, end) = (grid.first(), grid.last());
    let (x0, xt) = (spec.x0, spec.x_end);
    (end.sigma1 * xt + end.sigma2 * xt * xt / 2.0)
        - (start.sigma1 * x0 + start.sigma2 * x0 * x0 / 2.0)
        - end.q_con / spec.mass
}

/// Left side of the algebraic condition on the initial data; zero when the
/// condition holds. Uses the running integral of `sigma1 S1 + 2 S2`.
pub fn constraint_residual(grid: &SolutionGrid) -> Result<f64, EvalError> {
    complete(grid)?;
    Ok(residual_unchecked(grid))
}

/// Same quantity as [`constraint_residual`] but with the integral
/// recomputed by [`simpson`] over the grid samples instead of the
/// integrator's accumulator.
pub fn constraint_residual_simpson(grid: &SolutionGrid) -> Result<f64, EvalError> {
    complete(grid)?;
    let spec = &grid.spec;
    let times = grid.times();
    let integrand: Vec<f64> = grid
        .states
        .iter()
        .map(|s| s.sigma1 * s.s1 + 2.0 * s.s2)
        .collect();
    let (start, end) = (grid.first(), grid.last());
    let (x0, xt) = (spec.x0, spec.x_end);
    Ok((end.sigma1 * xt + end.sigma2 * xt * xt / 2.0)
        - (start.sigma1 * x0 + start.sigma2 * x0 * x0 / 2.0)
        - simpson(&times, &integrand) / spec.mass)
}

/// Composite Simpson rule on a possibly non-uniform grid, pairing
/// intervals with the three-point rule for unequal spacing. An odd
/// trailing interval is closed with the trapezoid rule.
pub fn simpson(times: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(times.len(), values.len());
    let n = times.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut i = 0;
    while i + 2 < n {
        let h0 = times[i + 1] - times[i];
        let h1 = times[i + 2] - times[i + 1];
        let (f0, f1, f2) = (values[i], values[i + 1], values[i + 2]);
        total += (h0 + h1) / 6.0
            * ((2.0 - h1 / h0) * f0
                + (h0 + h1) * (h0 + h1) / (h0 * h1) * f1
                + (2.0 - h0 / h1) * f2);
        i += 2;
    }
    if i + 1 < n {
        total += 0.5 * (times[i + 1] - times[i]) * (values[i] + values[i + 1]);
    }
    total
}

/// Truncated phase and log-amplitude functionals on one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FunctionalValue {
    #[serde(serialize_with = "serialize_sig17")]
    pub s_of_x: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub sigma_of_x: f64,
    /// Log-magnitude of the wave functional (equals `sigma_of_x`).
    #[serde(serialize_with = "serialize_sig17")]
    pub psi_magnitude_log: f64,
    /// `s_of_x / hbar`; `None` in the classical limit.
    #[serde(serialize_with = "serialize_sig17_opt")]
    pub psi_phase: Option<f64>,
}

/// Evaluates `S[x] = int (S1 x + S2 x^2/2) dt` and
/// `sigma[x] = int (sigma1 x + sigma2 x^2/2) dt` for a trajectory sampled
/// on the grid times.
pub fn functional_values(x: &[f64], grid: &SolutionGrid) -> Result<FunctionalValue, EvalError> {
    if x.len() != grid.len() {
        return Err(EvalError::LengthMismatch {
            expected: grid.len(),
            got: x.len(),
        });
    }
    let times = grid.times();
    let (phase, amp): (Vec<f64>, Vec<f64>) = grid
        .states
        .iter()
        .zip(x)
        .map(|(s, &xv)| {
            (
                s.s1 * xv + s.s2 * xv * xv / 2.0,
                s.sigma1 * xv + s.sigma2 * xv * xv / 2.0,
            )
        })
        .unzip();
    let s_of_x = simpson(&times, &phase);
    let sigma_of_x = simpson(&times, &amp);
    let hbar = grid.spec.hbar;
    Ok(FunctionalValue {
        s_of_x,
        sigma_of_x,
        psi_magnitude_log: sigma_of_x,
        psi_phase: (hbar > 0.0).then(|| s_of_x / hbar),
    })
}

/// Difference between the phase functional computed from the grid's
/// kernels and the reference form built on [`classical::xtilde`].
/// Diagnostic only: the two disagree in general, and this reports by how
/// much.
pub fn phase_reference_residual(x: &[f64], grid: &SolutionGrid, t0: f64) -> Result<f64, EvalError> {
    let from_kernels = functional_values(x, grid)?.s_of_x;
    let reference = classical::phase_reference(&grid.times(), x, t0, &grid.spec)?;
    Ok(from_kernels - reference)
}
