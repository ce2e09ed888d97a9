//! Problem parameters, initial coefficient data and the phase-offset map.
//!
//! All quantities are dimensionless. An [`OscillatorSpec`] describes the
//! potential `U(x) = k x^2 / 2`, the quantum scale `hbar`, the horizon `T`
//! and the two boundary positions the action eigenvalue is evaluated between.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Magnitude below which a trigonometric denominator is treated as zero.
pub const SINGULARITY_TOL: f64 = 1e-12;

/// Physical and boundary parameters of one oscillator problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorSpec {
    #[serde(rename = "m")]
    pub mass: f64,
    #[serde(rename = "k")]
    pub stiffness: f64,
    #[serde(rename = "hbar_tilde")]
    pub hbar: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub x0: f64,
    #[serde(rename = "xT")]
    pub x_end: f64,
}

impl Default for OscillatorSpec {
    fn default() -> Self {
        Self {
            mass: 1.0,
            stiffness: 1.0,
            hbar: 0.0,
            horizon: 1.0,
            x0: 0.0,
            x_end: 1.0,
        }
    }
}

impl OscillatorSpec {
    /// Natural frequency `sqrt(k/m)`.
    pub fn omega0(&self) -> f64 {
        (self.stiffness / self.mass).sqrt()
    }

    /// `sqrt(m k)`, the scale of the classical quadratic coefficient.
    pub fn sqrt_mk(&self) -> f64 {
        (self.mass * self.stiffness).sqrt()
    }

    pub fn with_hbar(mut self, hbar: f64) -> Self {
        self.hbar = hbar;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_boundary(mut self, x0: f64, x_end: f64) -> Self {
        self.x0 = x0;
        self.x_end = x_end;
        self
    }

    /// Checks every invariant; see [`validate`].
    pub fn validate(&self) -> Result<Validated, SpecErrors> {
        validate(*self)
    }
}

/// Free function form of [`OscillatorSpec::omega0`].
pub fn omega0(spec: &OscillatorSpec) -> f64 {
    spec.omega0()
}

/// The four initial coefficients the eigenvalue depends on.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InitialData {
    #[serde(rename = "S10")]
    pub s10: f64,
    #[serde(rename = "S20")]
    pub s20: f64,
    pub sigma10: f64,
    pub sigma20: f64,
}

impl InitialData {
    pub fn new(s10: f64, s20: f64, sigma10: f64, sigma20: f64) -> Self {
        Self {
            s10,
            s20,
            sigma10,
            sigma20,
        }
    }

    /// Purely classical data: both amplitude coefficients zero.
    pub fn classical(s10: f64, s20: f64) -> Self {
        Self::new(s10, s20, 0.0, 0.0)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.s10, self.s20, self.sigma10, self.sigma20]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Same phase coefficients with both amplitude coefficients negated.
    pub fn sigma_flipped(self) -> Self {
        Self::new(self.s10, self.s20, -self.sigma10, -self.sigma20)
    }
}

/// A single violated invariant of an [`OscillatorSpec`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("mass must be positive, got {0}")]
    NonPositiveMass(f64),
    #[error("time horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("stiffness must be non-negative, got {0}")]
    NegativeStiffness(f64),
    #[error("hbar_tilde must be non-negative, got {0}")]
    NegativeHbar(f64),
    #[error("parameter `{0}` is not finite")]
    NonFinite(&'static str),
}

/// Every invariant violated by a spec, in field order.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid oscillator spec: {}", list(.0))]
pub struct SpecErrors(pub Vec<SpecError>);

fn list(errors: &[SpecError]) -> String {
    errors
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Non-fatal findings attached to a valid spec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SpecWarning {
    /// `sin(omega0 T)` vanishes: the closed-form extremum is undefined,
    /// the ODE path is not affected.
    Resonance { sin_omega_t: f64 },
}

/// A spec that passed validation, with any warnings found.
#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub spec: OscillatorSpec,
    pub warnings: Vec<SpecWarning>,
}

impl Validated {
    pub fn is_resonant(&self) -> bool {
        self.warnings
            .iter()
            .any(|w| matches!(w, SpecWarning::Resonance { .. }))
    }
}

/// Checks the spec invariants, collecting every violation.
pub fn validate(spec: OscillatorSpec) -> Result<Validated, SpecErrors> {
    let mut errors = Vec::new();
    let fields = [
        ("m", spec.mass),
        ("k", spec.stiffness),
        ("hbar_tilde", spec.hbar),
        ("T", spec.horizon),
        ("x0", spec.x0),
        ("xT", spec.x_end),
    ];
    for (name, value) in fields {
        if !value.is_finite() {
            errors.push(SpecError::NonFinite(name));
        }
    }
    if spec.mass.is_finite() && spec.mass <= 0.0 {
        errors.push(SpecError::NonPositiveMass(spec.mass));
    }
    if spec.stiffness.is_finite() && spec.stiffness < 0.0 {
        errors.push(SpecError::NegativeStiffness(spec.stiffness));
    }
    if spec.hbar.is_finite() && spec.hbar < 0.0 {
        errors.push(SpecError::NegativeHbar(spec.hbar));
    }
    if spec.horizon.is_finite() && spec.horizon <= 0.0 {
        errors.push(SpecError::NonPositiveHorizon(spec.horizon));
    }
    if !errors.is_empty() {
        return Err(SpecErrors(errors));
    }

    let mut warnings = Vec::new();
    let sin_wt = (spec.omega0() * spec.horizon).sin();
    if spec.stiffness > 0.0 && sin_wt.abs() < SINGULARITY_TOL {
        warnings.push(SpecWarning::Resonance {
            sin_omega_t: sin_wt,
        });
    }
    Ok(Validated { spec, warnings })
}

/// Failures of the closed-form classical expressions.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ClosedFormError {
    #[error("singular closed form: {factor} = {value:e}")]
    Singularity { factor: &'static str, value: f64 },
    #[error("resonance: sin(omega0 T) = {sin_omega_t:e}")]
    Resonance { sin_omega_t: f64 },
    #[error("closed form undefined for k = 0; use the ODE path")]
    ZeroStiffness,
    #[error("phase offset undefined for zero frequency")]
    ZeroFrequency,
}

pub(crate) fn nonsingular(factor: &'static str, value: f64) -> Result<f64, ClosedFormError> {
    if value.abs() < SINGULARITY_TOL {
        Err(ClosedFormError::Singularity { factor, value })
    } else {
        Ok(value)
    }
}

/// Initial quadratic coefficient for phase offset `t0`:
/// `S20 = sqrt(mk) tan(omega0 t0)`.
pub fn t0_to_s20(t0: f64, spec: &OscillatorSpec) -> Result<f64, ClosedFormError> {
    let w = spec.omega0();
    nonsingular("cos(omega0 t0)", (w * t0).cos())?;
    Ok(spec.sqrt_mk() * (w * t0).tan())
}

/// Principal-branch inverse of [`t0_to_s20`].
pub fn s20_to_t0(s20: f64, spec: &OscillatorSpec) -> Result<f64, ClosedFormError> {
    let w = spec.omega0();
    if w == 0.0 {
        return Err(ClosedFormError::ZeroFrequency);
    }
    Ok((s20 / spec.sqrt_mk()).atan() / w)
}
