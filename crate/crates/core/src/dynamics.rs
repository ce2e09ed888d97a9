//! Time integration of the coefficient system.
//!
//! The unknowns are the linear and quadratic phase coefficients `S1, S2`
//! and amplitude coefficients `sigma1, sigma2`. Three running integrals
//! ride along as extra state components so the eigenvalue and constraint
//! integrals share the integrator's order:
//!
//! ```text
//! sigma1' = -(sigma1 S2 + sigma2 S1) / m
//! sigma2' = -sigma2 S2 / m
//! S1'     = -S1 S2 / m + hbar^2 sigma1 sigma2 / (2m)
//! S2'     = -S2^2 / m - k + hbar^2 sigma2^2 / m
//! qS'     = S1^2
//! qSigma' = sigma1^2 + sigma2
//! qCon'   = sigma1 S1 + 2 S2
//! ```

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate, InitialData, OscillatorSpec, SpecErrors};
use crate::output::sig17;

/// Any component larger than this in magnitude is treated as a blow-up.
pub const BLOWUP_THRESHOLD: f64 = 1e12;
pub const DEFAULT_ATOL: f64 = 1e-12;
pub const DEFAULT_RTOL: f64 = 1e-10;

/// Number of components in the augmented coefficient state.
pub const STATE_DIM: usize = 7;

/// Right-hand side of an autonomous or time-dependent ODE of fixed size.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N]) -> [f64; N];
}

fn axpy<const N: usize>(y: &[f64; N], a: f64, k: &[f64; N]) -> [f64; N] {
    let mut out = *y;
    for (o, ki) in out.iter_mut().zip(k) {
        *o += a * ki;
    }
    out
}

/// One classic fourth-order Runge-Kutta step.
pub fn rk4_step<const N: usize, S: OdeSystem<N> + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64; N],
    h: f64,
) -> [f64; N] {
    let k1 = sys.rhs(t, y);
    let k2 = sys.rhs(t + 0.5 * h, &axpy(y, 0.5 * h, &k1));
    let k3 = sys.rhs(t + 0.5 * h, &axpy(y, 0.5 * h, &k2));
    let k4 = sys.rhs(t + h, &axpy(y, h, &k3));
    let mut out = *y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Integration scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Fixed-step RK4 on a uniform grid, last step shortened to land on `T`.
    #[default]
    Rk4,
    /// RK4 with step-doubling error control.
    Rk4Adaptive,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Rk4 => "rk4",
            Method::Rk4Adaptive => "rk4_adaptive",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "rk4" => Ok(Method::Rk4),
            "rk4_adaptive" => Ok(Method::Rk4Adaptive),
            other => Err(format!(
                "unknown method `{other}` (expected rk4 or rk4_adaptive)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Uniform step for `rk4`, initial step for `rk4_adaptive`.
    pub step: f64,
    pub method: Method,
    pub atol: f64,
    pub rtol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            method: Method::Rk4,
            atol: DEFAULT_ATOL,
            rtol: DEFAULT_RTOL,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        Self {
            step,
            ..Default::default()
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }
}

/// Instantaneous coefficient values plus the three running integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientState {
    pub t: f64,
    #[serde(rename = "S1")]
    pub s1: f64,
    #[serde(rename = "S2")]
    pub s2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Running integral of `S1^2`.
    #[serde(rename = "qS")]
    pub q_s: f64,
    /// Running integral of `sigma1^2 + sigma2`.
    #[serde(rename = "qSigma")]
    pub q_sigma: f64,
    /// Running integral of `sigma1 S1 + 2 S2`.
    #[serde(rename = "qCon")]
    pub q_con: f64,
}

impl CoefficientState {
    /// State at `t = 0` with zeroed integrals.
    pub fn initial(init: &InitialData) -> Self {
        Self {
            t: 0.0,
            s1: init.s10,
            s2: init.s20,
            sigma1: init.sigma10,
            sigma2: init.sigma20,
            q_s: 0.0,
            q_sigma: 0.0,
            q_con: 0.0,
        }
    }

    pub fn to_vector(&self) -> [f64; STATE_DIM] {
        [
            self.s1,
            self.s2,
            self.sigma1,
            self.sigma2,
            self.q_s,
            self.q_sigma,
            self.q_con,
        ]
    }

    pub fn from_vector(t: f64, y: &[f64; STATE_DIM]) -> Self {
        Self {
            t,
            s1: y[0],
            s2: y[1],
            sigma1: y[2],
            sigma2: y[3],
            q_s: y[4],
            q_sigma: y[5],
            q_con: y[6],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Time derivatives of a [`CoefficientState`], component for component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub sigma1: f64,
    pub sigma2: f64,
    pub s1: f64,
    pub s2: f64,
    pub q_s: f64,
    pub q_sigma: f64,
    pub q_con: f64,
}

/// Evaluates the coefficient equations at `state`.
pub fn rhs(state: &CoefficientState, spec: &OscillatorSpec) -> StateDerivative {
    let m = spec.mass;
    let hb2 = spec.hbar * spec.hbar;
    let CoefficientState {
        s1,
        s2,
        sigma1,
        sigma2,
        ..
    } = *state;
    StateDerivative {
        sigma1: -(sigma1 * s2 + sigma2 * s1) / m,
        sigma2: -(sigma2 * s2) / m,
        s1: -(s1 * s2) / m + hb2 / (2.0 * m) * sigma1 * sigma2,
        s2: -(s2 * s2) / m - spec.stiffness + hb2 / m * sigma2 * sigma2,
        q_s: s1 * s1,
        q_sigma: sigma1 * sigma1 + sigma2,
        q_con: sigma1 * s1 + 2.0 * s2,
    }
}

/// The coefficient equations as an [`OdeSystem`] over the packed state
/// `[S1, S2, sigma1, sigma2, qS, qSigma, qCon]`.
#[derive(Debug, Clone, Copy)]
pub struct CoefficientSystem {
    pub spec: OscillatorSpec,
}

impl OdeSystem<STATE_DIM> for CoefficientSystem {
    fn rhs(&self, t: f64, y: &[f64; STATE_DIM]) -> [f64; STATE_DIM] {
        let d = rhs(&CoefficientState::from_vector(t, y), &self.spec);
        [d.s1, d.s2, d.sigma1, d.sigma2, d.q_s, d.q_sigma, d.q_con]
    }
}

/// Number of uniform steps covering `horizon` with step `h`; an exact
/// multiple (up to rounding) does not get an extra sliver step.
pub fn uniform_step_count(horizon: f64, h: f64) -> usize {
    let ratio = horizon / h;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        (nearest as usize).max(1)
    } else {
        ratio.ceil() as usize
    }
}

fn blown_up<const N: usize>(y: &[f64; N]) -> bool {
    y.iter()
        .any(|v| !v.is_finite() || v.abs() > BLOWUP_THRESHOLD)
}

/// A generic integration failure: the solution left the finite range.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence<const N: usize> {
    pub t_last: f64,
    pub accepted: Vec<(f64, [f64; N])>,
}

/// Fixed-step RK4 from `t = 0` to `horizon`, returning every grid point.
pub fn integrate_fixed<const N: usize, S: OdeSystem<N> + ?Sized>(
    sys: &S,
    y0: [f64; N],
    horizon: f64,
    h: f64,
) -> Result<Vec<(f64, [f64; N])>, Divergence<N>> {
    let n = uniform_step_count(horizon, h);
    let mut out = Vec::with_capacity(n + 1);
    let mut y = y0;
    out.push((0.0, y));
    for i in 0..n {
        let t = i as f64 * h;
        let t_next = if i + 1 == n {
            horizon
        } else {
            (i + 1) as f64 * h
        };
        let next = rk4_step(sys, t, &y, t_next - t);
        if blown_up(&next) {
            return Err(Divergence {
                t_last: t,
                accepted: out,
            });
        }
        y = next;
        out.push((t_next, y));
    }
    Ok(out)
}

/// RK4 with step doubling: each step is taken once with `h` and twice with
/// `h/2`; the difference (divided by 15) is the local error estimate,
/// controlled per component against `atol + rtol * |y|`.
pub fn integrate_adaptive<const N: usize, S: OdeSystem<N> + ?Sized>(
    sys: &S,
    y0: [f64; N],
    horizon: f64,
    h0: f64,
    atol: f64,
    rtol: f64,
) -> Result<Vec<(f64, [f64; N])>, Divergence<N>> {
    let mut out = vec![(0.0, y0)];
    let mut y = y0;
    let mut t = 0.0;
    let mut h = h0.min(horizon);
    let h_min = 1e-14 * horizon.max(1.0);
    while t < horizon {
        let last = t + h >= horizon - 1e-15 * horizon.max(1.0);
        let step = if last { horizon - t } else { h };
        let full = rk4_step(sys, t, &y, step);
        let mid = rk4_step(sys, t, &y, 0.5 * step);
        let halves = rk4_step(sys, t + 0.5 * step, &mid, 0.5 * step);

        let mut ratio: f64 = 0.0;
        for i in 0..N {
            let err = (halves[i] - full[i]).abs() / 15.0;
            let scale = atol + rtol * y[i].abs().max(halves[i].abs());
            ratio = ratio.max(err / scale);
        }
        if !ratio.is_finite() {
            ratio = f64::INFINITY;
        }

        if ratio <= 1.0 {
            if blown_up(&halves) {
                return Err(Divergence {
                    t_last: t,
                    accepted: out,
                });
            }
            t = if last { horizon } else { t + step };
            y = halves;
            out.push((t, y));
        }
        let factor = if ratio == 0.0 {
            5.0
        } else {
            (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = step * factor;
        if h < h_min && t < horizon {
            return Err(Divergence {
                t_last: t,
                accepted: out,
            });
        }
    }
    Ok(out)
}

/// Time-ordered coefficient states from one integration run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionGrid {
    pub spec: OscillatorSpec,
    pub states: Vec<CoefficientState>,
    pub method: Method,
    pub step: f64,
}

impl SolutionGrid {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn first(&self) -> &CoefficientState {
        &self.states[0]
    }

    pub fn last(&self) -> &CoefficientState {
        self.states.last().expect("grid is never empty")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Writes the grid as CSV: `#` metadata lines, a header row, then one
    /// row per grid point with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W, metadata: &[(String, String)]) -> io::Result<()> {
        for (k, v) in metadata {
            writeln!(w, "# {k}: {v}")?;
        }
        write_state_rows(&mut w, &self.states)
    }
}

/// Header plus rows for a sequence of states, shared by complete and
/// partial (blown-up) grids.
pub fn write_state_rows<W: Write>(w: &mut W, states: &[CoefficientState]) -> io::Result<()> {
    writeln!(w, "t,S1,S2,sigma1,sigma2,qS,qSigma,qCon")?;
    for s in states {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            sig17(s.t),
            sig17(s.s1),
            sig17(s.s2),
            sig17(s.sigma1),
            sig17(s.sigma2),
            sig17(s.q_s),
            sig17(s.q_sigma),
            sig17(s.q_con)
        )?;
    }
    Ok(())
}

/// Integration outcome that blew up, carrying the states reached.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("coefficient blow-up after t = {t_last}")]
pub struct BlowUp {
    pub t_last: f64,
    pub partial: Vec<CoefficientState>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error(transparent)]
    BlowUp(#[from] BlowUp),
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error(transparent)]
    InvalidSpec(#[from] SpecErrors),
}

impl IntegrateError {
    pub fn blow_up_time(&self) -> Option<f64> {
        match self {
            IntegrateError::BlowUp(b) => Some(b.t_last),
            _ => None,
        }
    }
}

/// Integrates the coefficient system over `[0, T]`.
pub fn integrate(
    spec: &OscillatorSpec,
    init: &InitialData,
    config: &IntegratorConfig,
) -> Result<SolutionGrid, IntegrateError> {
    validate(*spec)?;
    let h = config.step;
    if !(h.is_finite() && h > 0.0) {
        return Err(IntegrateError::InvalidStep(h));
    }
    let sys = CoefficientSystem { spec: *spec };
    let y0 = CoefficientState::initial(init).to_vector();
    let run = match config.method {
        Method::Rk4 => integrate_fixed(&sys, y0, spec.horizon, h),
        Method::Rk4Adaptive => {
            integrate_adaptive(&sys, y0, spec.horizon, h, config.atol, config.rtol)
        }
    };
    let to_states = |pts: Vec<(f64, [f64; STATE_DIM])>| -> Vec<CoefficientState> {
        pts.iter()
            .map(|(t, y)| CoefficientState::from_vector(*t, y))
            .collect()
    };
    match run {
        Ok(pts) => Ok(SolutionGrid {
            spec: *spec,
            states: to_states(pts),
            method: config.method,
            step: h,
        }),
        Err(div) => Err(BlowUp {
            t_last: div.t_last,
            partial: to_states(div.accepted),
        }
        .into()),
    }
}

/// Shorthand for fixed-step RK4.
pub fn integrate_rk4(
    spec: &OscillatorSpec,
    init: &InitialData,
    h: f64,
) -> Result<SolutionGrid, IntegrateError> {
    integrate(spec, init, &IntegratorConfig::rk4(h))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConvergenceError {
    #[error("successive differences too small to estimate order ({d1:e}, {d2:e})")]
    Degenerate { d1: f64, d2: f64 },
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

/// Quantity observed by [`convergence_order_of`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// `S2(t_probe)`.
    #[default]
    S2,
    /// Max-norm over all seven state components at `t_probe`.
    MaxNorm,
}

/// Richardson estimate of the observed order of fixed-step RK4 on
/// `S2(t_probe)`, from runs with steps `h`, `h/2` and `h/4`:
/// `log2(|u_h - u_{h/2}| / |u_{h/2} - u_{h/4}|)`.
pub fn convergence_order(
    spec: &OscillatorSpec,
    init: &InitialData,
    t_probe: f64,
    h: f64,
) -> Result<f64, ConvergenceError> {
    convergence_order_of(spec, init, t_probe, h, Observable::S2)
}

pub fn convergence_order_of(
    spec: &OscillatorSpec,
    init: &InitialData,
    t_probe: f64,
    h: f64,
    observable: Observable,
) -> Result<f64, ConvergenceError> {
    // the probe time is the horizon of the runs, so it is always a grid point
    let probe_spec = spec.with_horizon(t_probe);
    let mut ends = Vec::with_capacity(3);
    for i in 0..3 {
        let step = h / f64::from(1u32 << i);
        ends.push(integrate_rk4(&probe_spec, init, step)?.last().to_vector());
    }
    let diff = |a: &[f64; STATE_DIM], b: &[f64; STATE_DIM]| match observable {
        Observable::S2 => (a[1] - b[1]).abs(),
        Observable::MaxNorm => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max),
    };
    let d1 = diff(&ends[0], &ends[1]);
    let d2 = diff(&ends[1], &ends[2]);
    if d1 < 1e-14 || d2 < 1e-14 {
        return Err(ConvergenceError::Degenerate { d1, d2 });
    }
    Ok((d1 / d2).log2())
}
