//! Closed forms for the classical limit (`hbar = 0`).
//!
//! With `w = omega0` and `a = sqrt(m k)` the classical coefficient
//! trajectories are
//!
//! ```text
//! S1(t) = S10 cos(w t0) / cos(w (t - t0))
//! S2(t) = -a tan(w (t - t0))
//! ```
//!
//! where the phase offset `t0` encodes the initial quadratic coefficient,
//! `S20 = a tan(w t0)`. Substituting them into the eigenvalue gives a
//! quadratic in `S10` whose stationary value is independent of `t0` and
//! equals the classical action between the boundary points.

use serde::{Deserialize, Serialize};

use crate::model::{nonsingular, ClosedFormError, OscillatorSpec, SINGULARITY_TOL};

/// The two free parameters of the classical solution family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalParams {
    #[serde(rename = "S10")]
    pub s10: f64,
    pub t0: f64,
}

impl ClassicalParams {
    pub fn new(s10: f64, t0: f64) -> Self {
        Self { s10, t0 }
    }
}

fn require_stiffness(spec: &OscillatorSpec) -> Result<(), ClosedFormError> {
    if spec.stiffness > 0.0 {
        Ok(())
    } else {
        Err(ClosedFormError::ZeroStiffness)
    }
}

fn require_off_resonance(spec: &OscillatorSpec) -> Result<f64, ClosedFormError> {
    let s = (spec.omega0() * spec.horizon).sin();
    if s.abs() < SINGULARITY_TOL {
        Err(ClosedFormError::Resonance { sin_omega_t: s })
    } else {
        Ok(s)
    }
}

/// Closed-form `S1(t)`.
pub fn s1_closed(
    t: f64,
    params: &ClassicalParams,
    spec: &OscillatorSpec,
) -> Result<f64, ClosedFormError> {
    require_stiffness(spec)?;
    let w = spec.omega0();
    let c = nonsingular("cos(omega0 (t - t0))", (w * (t - params.t0)).cos())?;
    Ok(params.s10 * (w * params.t0).cos() / c)
}

/// Closed-form `S2(t)`; does not depend on `S10`.
pub fn s2_closed(
    t: f64,
    params: &ClassicalParams,
    spec: &OscillatorSpec,
) -> Result<f64, ClosedFormError> {
    require_stiffness(spec)?;
    let w = spec.omega0();
    let arg = w * (t - params.t0);
    nonsingular("cos(omega0 (t - t0))", arg.cos())?;
    Ok(-spec.sqrt_mk() * arg.tan())
}

/// Classical eigenvalue as a function of `(S10, t0)`.
pub fn lambda_classical(
    params: &ClassicalParams,
    spec: &OscillatorSpec,
) -> Result<f64, ClosedFormError> {
    require_stiffness(spec)?;
    let w = spec.omega0();
    let a = spec.sqrt_mk();
    let (x0, xt, t) = (spec.x0, spec.x_end, spec.horizon);
    let ClassicalParams { s10, t0 } = *params;

    let c0 = nonsingular("cos(omega0 t0)", (w * t0).cos())?;
    let ct = nonsingular("cos(omega0 (T - t0))", (w * (t - t0)).cos())?;
    let tan0 = (w * t0).tan();
    let tan_t = (w * (t - t0)).tan();

    let linear = s10 * (xt * c0 / ct - x0);
    let boundary = -0.5 * a * (xt * xt * tan_t + x0 * x0 * tan0);
    let kinetic = -s10 * s10 * c0 * c0 / (2.0 * a) * (tan_t + tan0);
    Ok(linear + boundary + kinetic)
}

/// `S10` at which [`lambda_classical`] is stationary for fixed `t0`.
pub fn s10_star(t0: f64, spec: &OscillatorSpec) -> Result<f64, ClosedFormError> {
    require_stiffness(spec)?;
    let sin_t = require_off_resonance(spec)?;
    let w = spec.omega0();
    let c0 = nonsingular("cos(omega0 t0)", (w * t0).cos())?;
    nonsingular("cos(omega0 (T - t0))", (w * (spec.horizon - t0)).cos())?;
    let ct = (w * (spec.horizon - t0)).cos();
    Ok(spec.sqrt_mk() * (spec.x_end * c0 - spec.x0 * ct) / (c0 * sin_t))
}

/// The degenerate stationary eigenvalue, equal to the classical action
/// `sqrt(mk) ((xT^2 + x0^2) cos(wT) - 2 xT x0) / (2 sin(wT))`.
pub fn lambda_star(spec: &OscillatorSpec) -> Result<f64, ClosedFormError> {
    require_stiffness(spec)?;
    let sin_t = require_off_resonance(spec)?;
    let cos_t = (spec.omega0() * spec.horizon).cos();
    let (x0, xt) = (spec.x0, spec.x_end);
    Ok(spec.sqrt_mk() * ((xt * xt + x0 * x0) * cos_t - 2.0 * xt * x0) / (2.0 * sin_t))
}

/// Reference trajectory of the classical phase functional, evaluated
/// literally as `(xT cos(w t0) - x0 cos(w (T - t0))) / (sin(wT) sin(w (t - t0)))`.
///
/// Diagnostic only. Its time dependence does not match the quadratic
/// kernel implied by [`phase_reference`]; see
/// [`crate::action::phase_reference_residual`].
pub fn xtilde(t: f64, t0: f64, spec: &OscillatorSpec) -> Result<f64, ClosedFormError> {
    require_stiffness(spec)?;
    let w = spec.omega0();
    let sin_t = require_off_resonance(spec)?;
    let s = nonsingular("sin(omega0 (t - t0))", (w * (t - t0)).sin())?;
    let num = spec.x_end * (w * t0).cos() - spec.x0 * (w * (spec.horizon - t0)).cos();
    Ok(num / (sin_t * s))
}

/// Phase functional `-(sqrt(mk)/2) * integral (x - xtilde)^2 dt` on a
/// sampled trajectory. Diagnostic only.
pub fn phase_reference(
    times: &[f64],
    x: &[f64],
    t0: f64,
    spec: &OscillatorSpec,
) -> Result<f64, ClosedFormError> {
    let integrand = times
        .iter()
        .zip(x)
        .map(|(&t, &xv)| xtilde(t, t0, spec).map(|r| (xv - r) * (xv - r)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(-0.5 * spec.sqrt_mk() * crate::action::simpson(times, &integrand))
}
