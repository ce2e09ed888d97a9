//! Named experiments driven by an [`ExperimentConfig`], plus the tables
//! and reports they emit.

use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::action::{eigenvalue, EigenvalueReport};
use crate::classical::{lambda_classical, lambda_star, s10_star, ClassicalParams};
use crate::config::{parse_grid, ConfigError, ExperimentConfig};
use crate::dynamics::{
    convergence_order, integrate, write_state_rows, BlowUp, ConvergenceError, IntegrateError,
    IntegratorConfig, SolutionGrid,
};
use crate::extremize::{
    objective_gradient, optimize, ActiveMask, ExtremumResult, OptimizeError, StationarityError,
};
use crate::model::{
    s20_to_t0, t0_to_s20, validate, ClosedFormError, InitialData, OscillatorSpec, SpecErrors,
};
use crate::output::{serialize_sig17, serialize_sig17_opt, sig17};

pub const TOOL_VERSION: &str = concat!("qap ", env!("CARGO_PKG_VERSION"));

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

/// Tolerance of the classical check on `|lambda - lambda_star|`.
pub const CLASSICAL_TOL: f64 = 1e-6;
/// Accepted band for observed convergence orders.
pub const ORDER_BAND: [f64; 2] = [3.7, 4.3];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Spec(#[from] SpecErrors),
    #[error(transparent)]
    ClosedForm(#[from] ClosedFormError),
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    BlowUp(#[from] BlowUp),
    #[error("{0}")]
    Numerical(String),
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_)
            | ExperimentError::Spec(_)
            | ExperimentError::ClosedForm(_)
            | ExperimentError::Precondition(_) => EXIT_INVALID,
            ExperimentError::BlowUp(_) | ExperimentError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<IntegrateError> for ExperimentError {
    fn from(e: IntegrateError) -> Self {
        match e {
            IntegrateError::BlowUp(b) => ExperimentError::BlowUp(b),
            IntegrateError::InvalidStep(h) => {
                ExperimentError::Precondition(format!("invalid step size {h}"))
            }
            IntegrateError::InvalidSpec(s) => ExperimentError::Spec(s),
        }
    }
}

impl From<OptimizeError> for ExperimentError {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::InvalidOptions(m) => ExperimentError::Precondition(m),
            other => ExperimentError::Numerical(other.to_string()),
        }
    }
}

impl From<StationarityError> for ExperimentError {
    fn from(e: StationarityError) -> Self {
        ExperimentError::Numerical(e.to_string())
    }
}

/// Initial data from the config, with `S20` replaced by the image of `t0`
/// when a phase offset is given.
pub fn resolve_init(
    cfg: &ExperimentConfig,
    spec: &OscillatorSpec,
    fallback: InitialData,
) -> Result<InitialData, ExperimentError> {
    let mut init = cfg.init.unwrap_or(fallback);
    if let Some(t0) = cfg.t0 {
        init.s20 = t0_to_s20(t0, spec)?;
    }
    Ok(init)
}

/// `#` header lines shared by every CSV the tool writes. No timestamps, so
/// reruns are byte-identical.
pub fn metadata(
    command: &str,
    spec: &OscillatorSpec,
    init: Option<&InitialData>,
    integrator: &IntegratorConfig,
    seed: u64,
) -> Vec<(String, String)> {
    let mut out = vec![
        ("tool".to_string(), TOOL_VERSION.to_string()),
        ("command".to_string(), command.to_string()),
        ("spec".to_string(), to_json(spec)),
    ];
    if let Some(init) = init {
        out.push(("init".to_string(), to_json(init)));
    }
    out.push((
        "grid".to_string(),
        format!("h={} method={}", sig17(integrator.step), integrator.method),
    ));
    out.push(("seed".to_string(), seed.to_string()));
    out
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

/// JSON document wrapping a result with the run's provenance.
#[derive(Debug, Clone, Serialize)]
pub struct Envelope<T> {
    pub tool: &'static str,
    pub command: String,
    pub spec: OscillatorSpec,
    #[serde(serialize_with = "serialize_sig17")]
    pub h: f64,
    pub method: String,
    pub seed: u64,
    pub result: T,
}

/// Anything that can be embedded in an [`Envelope`].
pub trait Report: Serialize {}

impl<T: Serialize> Report for T {}

impl<T: Serialize> Envelope<T> {
    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json_pretty(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("reports serialize");
        text.push('\n');
        text
    }
}

impl<T> Envelope<T> {
    pub fn new(command: &str, cfg: &ExperimentConfig, spec: OscillatorSpec, result: T) -> Self {
        Self {
            tool: TOOL_VERSION,
            command: command.to_string(),
            spec,
            h: cfg.integrator.step,
            method: cfg.integrator.method.to_string(),
            seed: cfg.seed,
            result,
        }
    }
}

// ---------------------------------------------------------------- integrate

/// Outcome of `integrate`: the spec and initial data actually run, and
/// either the full grid or the states reached before a blow-up.
#[derive(Debug, Clone)]
pub struct IntegrateRun {
    pub spec: OscillatorSpec,
    pub init: InitialData,
    pub result: Result<SolutionGrid, BlowUp>,
}

pub fn run_integrate(cfg: &ExperimentConfig) -> Result<IntegrateRun, ExperimentError> {
    let spec = validate(cfg.spec)?.spec;
    let init = resolve_init(cfg, &spec, InitialData::default())?;
    let result = match integrate(&spec, &init, &cfg.integrator) {
        Ok(grid) => Ok(grid),
        Err(IntegrateError::BlowUp(b)) => Err(b),
        Err(e) => return Err(e.into()),
    };
    Ok(IntegrateRun { spec, init, result })
}

impl IntegrateRun {
    /// Writes the grid CSV; a blown-up run writes the partial rows
    /// followed by a `# BLOWUP` footer naming the last good time.
    pub fn write_csv<W: Write>(&self, mut w: W, cfg: &ExperimentConfig) -> io::Result<()> {
        let meta = metadata(
            "integrate",
            &self.spec,
            Some(&self.init),
            &cfg.integrator,
            cfg.seed,
        );
        match &self.result {
            Ok(grid) => grid.write_csv(w, &meta),
            Err(b) => {
                for (k, v) in &meta {
                    writeln!(w, "# {k}: {v}")?;
                }
                write_state_rows(&mut w, &b.partial)?;
                writeln!(w, "# BLOWUP: last good t = {}", sig17(b.t_last))
            }
        }
    }
}

// --------------------------------------------------------------- eigenvalue

#[derive(Debug, Clone, Serialize)]
pub struct EigenvalueRun {
    pub init: InitialData,
    pub report: EigenvalueReport,
}

pub fn run_eigenvalue(cfg: &ExperimentConfig) -> Result<EigenvalueRun, ExperimentError> {
    let spec = validate(cfg.spec)?.spec;
    let init = resolve_init(cfg, &spec, InitialData::default())?;
    let grid = integrate(&spec, &init, &cfg.integrator)?;
    let report = eigenvalue(&grid).map_err(|e| ExperimentError::Numerical(e.to_string()))?;
    Ok(EigenvalueRun { init, report })
}

// ---------------------------------------------------------- classical check

#[derive(Debug, Clone, Serialize)]
pub struct ClassicalCheck {
    #[serde(serialize_with = "serialize_sig17")]
    pub t0: f64,
    #[serde(rename = "S10_star", serialize_with = "serialize_sig17")]
    pub s10_star: f64,
    #[serde(rename = "S20", serialize_with = "serialize_sig17")]
    pub s20: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub lambda_star: f64,
    /// Eigenvalue from integrating at `(S10_star, S20)`.
    #[serde(serialize_with = "serialize_sig17")]
    pub lambda_ode: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub delta_ode: f64,
    /// Eigenvalue at the optimizer's stationary point.
    #[serde(serialize_with = "serialize_sig17")]
    pub lambda_optimized: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub delta_optimized: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub tolerance: f64,
    pub extremum: ExtremumResult,
    pub passed: bool,
}

/// Classical pipeline against the closed-form action: `t0 -> S20`,
/// integration at the stationary `S10`, and a free search over
/// `(S10, S20)` with `sigma = 0`. `hbar` is forced to zero.
pub fn classical_check(cfg: &ExperimentConfig) -> Result<ClassicalCheck, ExperimentError> {
    let spec = validate(cfg.spec.with_hbar(0.0))?.spec;
    let target = lambda_star(&spec)?;
    let t0 = match (cfg.t0, cfg.init) {
        (Some(t0), _) => t0,
        (None, Some(init)) => s20_to_t0(init.s20, &spec)?,
        (None, None) => 0.5 * spec.horizon,
    };
    let s20 = t0_to_s20(t0, &spec)?;
    let s10 = s10_star(t0, &spec)?;

    let grid = integrate(&spec, &InitialData::classical(s10, s20), &cfg.integrator)?;
    let lambda_ode = eigenvalue(&grid)
        .map_err(|e| ExperimentError::Numerical(e.to_string()))?
        .lambda;

    let guess = InitialData::classical(cfg.init.map_or(0.0, |i| i.s10), s20);
    let mut options = cfg.optimize;
    options.active_mask = ActiveMask::CLASSICAL;
    options.penalty_weight = 0.0;
    let extremum = optimize(&spec, &guess, &options)?;
    let lambda_optimized = extremum.report.lambda;

    let delta_ode = lambda_ode - target;
    let delta_optimized = lambda_optimized - target;
    let passed = extremum.converged
        && delta_ode.abs() <= CLASSICAL_TOL
        && delta_optimized.abs() <= CLASSICAL_TOL;
    Ok(ClassicalCheck {
        t0,
        s10_star: s10,
        s20,
        lambda_star: target,
        lambda_ode,
        delta_ode,
        lambda_optimized,
        delta_optimized,
        tolerance: CLASSICAL_TOL,
        extremum,
        passed,
    })
}

// ------------------------------------------------------------- sweep tables

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowStatus {
    #[serde(rename = "ok")]
    Ok,
    #[serde(rename = "failed:blowup")]
    BlowUp,
    #[serde(rename = "failed:singular")]
    Singular,
    #[serde(rename = "failed:gradient")]
    Gradient,
}

impl fmt::Display for RowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowStatus::Ok => "ok",
            RowStatus::BlowUp => "failed:blowup",
            RowStatus::Singular => "failed:singular",
            RowStatus::Gradient => "failed:gradient",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(serialize_with = "serialize_sig17")]
    pub param: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub lambda: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub constraint_residual: f64,
    pub converged: bool,
    #[serde(serialize_with = "serialize_sig17")]
    pub gradient_norm: f64,
    /// Values of the table's extra columns, in order.
    pub extras: Vec<f64>,
    pub status: RowStatus,
}

impl SweepRow {
    fn failed(param: f64, n_extras: usize, status: RowStatus) -> Self {
        Self {
            param,
            lambda: f64::NAN,
            constraint_residual: f64::NAN,
            converged: false,
            gradient_norm: f64::NAN,
            extras: vec![f64::NAN; n_extras],
            status,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RowStatus::Ok
    }
}

/// One row per grid point of a parameter sweep, sorted by the swept value.
/// Failed points keep their row with a `failed:*` status.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub param_name: &'static str,
    pub extra_columns: Vec<&'static str>,
    pub rows: Vec<SweepRow>,
    pub metadata: Vec<(String, String)>,
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (k, v) in &self.metadata {
            writeln!(w, "# {k}: {v}")?;
        }
        write!(
            w,
            "{},lambda,constraint_residual,converged,gradient_norm",
            self.param_name
        )?;
        for c in &self.extra_columns {
            write!(w, ",{c}")?;
        }
        writeln!(w, ",status")?;
        for r in &self.rows {
            write!(
                w,
                "{},{},{},{},{}",
                sig17(r.param),
                sig17(r.lambda),
                sig17(r.constraint_residual),
                r.converged,
                sig17(r.gradient_norm)
            )?;
            for x in &r.extras {
                write!(w, ",{}", sig17(*x))?;
            }
            writeln!(w, ",{}", r.status)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is ASCII")
    }

    /// Column of an extra field by name.
    pub fn extra(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.extra_columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r.extras[j]).collect())
    }

    /// `max - min` of `lambda` over successful rows.
    pub fn lambda_spread(&self) -> f64 {
        let ok = self.rows.iter().filter(|r| r.is_ok()).map(|r| r.lambda);
        let (lo, hi) = ok.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        if lo.is_finite() {
            hi - lo
        } else {
            f64::NAN
        }
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }
}

fn row_status(e: &ExperimentError) -> RowStatus {
    match e {
        ExperimentError::BlowUp(_) => RowStatus::BlowUp,
        ExperimentError::ClosedForm(_) => RowStatus::Singular,
        _ => RowStatus::Gradient,
    }
}

fn gradient_status(e: &StationarityError) -> RowStatus {
    match e {
        StationarityError::FdFailure {
            source: IntegrateError::BlowUp(_),
            ..
        } => RowStatus::BlowUp,
        StationarityError::FdFailure { .. } => RowStatus::Gradient,
    }
}

// ------------------------------------------------------------------ scan t0

pub const SCAN_COLUMNS: [&str; 3] = ["S10", "S20", "lambda_closed"];

fn default_t0_grid(spec: &OscillatorSpec) -> Vec<f64> {
    (1..=9)
        .map(|i| spec.horizon * f64::from(i) / 10.0)
        .collect()
}

/// Classical degeneracy scan: for each `t0`, the stationary `S10` from the
/// closed form, `lambda` from the closed form and from integration, the
/// constraint residual, and `|d lambda / d S10|` by central differences.
/// `gradient_norm <= grad_tol` is reported as `converged`.
pub fn scan_t0(cfg: &ExperimentConfig) -> Result<SweepTable, ExperimentError> {
    let spec = validate(cfg.spec.with_hbar(0.0))?.spec;
    lambda_star(&spec)?;
    let grid = match &cfg.sweep.t0 {
        Some(g) => g.clone(),
        None => default_t0_grid(&spec),
    };
    let mut options = cfg.optimize;
    options.active_mask = ActiveMask::S10_ONLY;
    options.penalty_weight = 0.0;

    let row = |t0: f64| -> SweepRow {
        let point = || -> Result<(InitialData, f64), ExperimentError> {
            let s10 = s10_star(t0, &spec)?;
            let s20 = t0_to_s20(t0, &spec)?;
            let closed = lambda_classical(&ClassicalParams::new(s10, t0), &spec)?;
            Ok((InitialData::classical(s10, s20), closed))
        };
        let (init, closed) = match point() {
            Ok(p) => p,
            Err(e) => return SweepRow::failed(t0, SCAN_COLUMNS.len(), row_status(&e)),
        };
        let extras = vec![init.s10, init.s20, closed];
        let report = match integrate(&spec, &init, &cfg.integrator) {
            Ok(g) => eigenvalue(&g).expect("integrate returns complete grids"),
            Err(e) => {
                let mut r = SweepRow::failed(t0, 0, row_status(&e.into()));
                r.extras = extras;
                return r;
            }
        };
        let (gradient_norm, status) = match objective_gradient(&init, &spec, &options) {
            Ok(g) => (g[0].abs(), RowStatus::Ok),
            Err(e) => (f64::NAN, gradient_status(&e)),
        };
        SweepRow {
            param: t0,
            lambda: report.lambda,
            constraint_residual: report.constraint_residual,
            converged: status == RowStatus::Ok && gradient_norm <= options.grad_tol,
            gradient_norm,
            extras,
            status,
        }
    };
    let rows: Vec<SweepRow> = grid.par_iter().map(|&t0| row(t0)).collect();
    Ok(SweepTable {
        param_name: "t0",
        extra_columns: SCAN_COLUMNS.to_vec(),
        rows,
        metadata: metadata("scan-t0", &spec, None, &cfg.integrator, cfg.seed),
    })
}

// -------------------------------------------------------------- sweep hbar

pub const SWEEP_COLUMNS: [&str; 2] = ["delta_lambda", "quantum_term"];

pub fn default_hbar_grid() -> Vec<f64> {
    parse_grid("0.02, 0.04, 0.08, 0.16").expect("valid literal grid")
}

pub fn default_sweep_init() -> InitialData {
    InitialData::new(1.0, 0.0, 0.3, 1.0)
}

/// Power-law fit `|lambda(hbar) - lambda(0)| ~ prefactor * hbar^exponent`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub init: InitialData,
    #[serde(serialize_with = "serialize_sig17")]
    pub lambda0: f64,
    /// `None` when fewer than two rows have `hbar > 0` and a nonzero
    /// difference.
    #[serde(serialize_with = "serialize_sig17_opt")]
    pub exponent: Option<f64>,
    #[serde(serialize_with = "serialize_sig17_opt")]
    pub prefactor: Option<f64>,
    pub fit_points: usize,
    pub failed_rows: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub table: SweepTable,
    pub summary: SweepSummary,
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Eigenvalue over an `hbar` grid at fixed initial data, with a log-log fit
/// of its deviation from the classical value.
pub fn sweep_hbar(cfg: &ExperimentConfig) -> Result<SweepResult, ExperimentError> {
    let spec = validate(cfg.spec)?.spec;
    let init = resolve_init(cfg, &spec, default_sweep_init())?;
    if init.sigma20 == 0.0 {
        log::warn!("sigma20 = 0: quantum corrections may vanish identically");
    }
    let grid = match &cfg.sweep.hbar {
        Some(g) => g.clone(),
        None => default_hbar_grid(),
    };
    let baseline = integrate(&spec.with_hbar(0.0), &init, &cfg.integrator)?;
    let lambda0 = eigenvalue(&baseline)
        .map_err(|e| ExperimentError::Numerical(e.to_string()))?
        .lambda;

    let mut options = cfg.optimize;
    options.active_mask = ActiveMask::ALL;
    options.penalty_weight = 0.0;

    let row = |hbar: f64| -> SweepRow {
        let s = spec.with_hbar(hbar);
        let report = match integrate(&s, &init, &cfg.integrator) {
            Ok(g) => eigenvalue(&g).expect("integrate returns complete grids"),
            Err(e) => return SweepRow::failed(hbar, SWEEP_COLUMNS.len(), row_status(&e.into())),
        };
        let (gradient_norm, status) = match objective_gradient(&init, &s, &options) {
            Ok(g) => (g.iter().fold(0.0f64, |m, v| m.max(v.abs())), RowStatus::Ok),
            Err(e) => (f64::NAN, gradient_status(&e)),
        };
        SweepRow {
            param: hbar,
            lambda: report.lambda,
            constraint_residual: report.constraint_residual,
            converged: status == RowStatus::Ok,
            gradient_norm,
            extras: vec![report.lambda - lambda0, report.quantum_term],
            status,
        }
    };
    let rows: Vec<SweepRow> = grid.par_iter().map(|&h| row(h)).collect();

    let (lx, ly): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.is_ok() && r.param > 0.0)
        .map(|r| (r.param, (r.lambda - lambda0).abs()))
        .filter(|(_, d)| *d > 0.0 && d.is_finite())
        .map(|(h, d)| (h.ln(), d.ln()))
        .unzip();
    let fit = linear_fit(&lx, &ly);
    let table = SweepTable {
        param_name: "hbar",
        extra_columns: SWEEP_COLUMNS.to_vec(),
        rows,
        metadata: metadata("sweep-hbar", &spec, Some(&init), &cfg.integrator, cfg.seed),
    };
    let summary = SweepSummary {
        init,
        lambda0,
        exponent: fit.map(|(slope, _)| slope),
        prefactor: fit.map(|(_, icpt)| icpt.exp()),
        fit_points: lx.len(),
        failed_rows: table.failures(),
    };
    Ok(SweepResult { table, summary })
}

// ---------------------------------------------------------------- extremize

pub fn run_extremize(cfg: &ExperimentConfig) -> Result<ExtremumResult, ExperimentError> {
    let spec = validate(cfg.spec)?.spec;
    let guess = resolve_init(cfg, &spec, InitialData::default())?;
    Ok(optimize(&spec, &guess, &cfg.optimize)?)
}

// -------------------------------------------------------------- convergence

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceCase {
    pub label: &'static str,
    #[serde(serialize_with = "serialize_sig17")]
    pub hbar: f64,
    pub init: InitialData,
    #[serde(serialize_with = "serialize_sig17")]
    pub t_probe: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub h: f64,
    #[serde(serialize_with = "serialize_sig17_opt")]
    pub order: Option<f64>,
    /// `ok`, `degenerate` or `failed:blowup`.
    pub status: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub band: [f64; 2],
    pub classical: ConvergenceCase,
    pub quantum: ConvergenceCase,
    pub passed: bool,
}

impl ConvergenceReport {
    pub fn blew_up(&self) -> bool {
        [&self.classical, &self.quantum]
            .iter()
            .any(|c| c.status == "failed:blowup")
    }
}

fn convergence_case(
    label: &'static str,
    spec: &OscillatorSpec,
    init: InitialData,
    t_probe: f64,
    h: f64,
) -> Result<ConvergenceCase, ExperimentError> {
    let (order, status) = match convergence_order(spec, &init, t_probe, h) {
        Ok(p) => (Some(p), "ok"),
        Err(ConvergenceError::Degenerate { d1, d2 }) => {
            log::info!("{label}: degenerate differences {d1:e}, {d2:e}");
            (None, "degenerate")
        }
        Err(ConvergenceError::Integrate(IntegrateError::BlowUp(_))) => (None, "failed:blowup"),
        Err(ConvergenceError::Integrate(e)) => return Err(e.into()),
    };
    let passed = order.is_some_and(|p| (ORDER_BAND[0]..=ORDER_BAND[1]).contains(&p));
    Ok(ConvergenceCase {
        label,
        hbar: spec.hbar,
        init,
        t_probe,
        h,
        order,
        status: status.to_string(),
        passed,
    })
}

/// Observed RK4 order on `S2(t_probe)` for a classical run and a quantum
/// run, by step halving from `h`.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport, ExperimentError> {
    let spec = validate(cfg.spec)?.spec;
    let c = &cfg.convergence;
    let classical_spec = spec.with_hbar(0.0);
    let classical_init = resolve_init(cfg, &classical_spec, InitialData::default())?;
    let classical = convergence_case(
        "classical",
        &classical_spec,
        classical_init,
        c.t_probe.unwrap_or(0.5 * spec.horizon),
        c.h,
    )?;
    let quantum = convergence_case(
        "quantum",
        &spec.with_hbar(c.quantum_hbar),
        c.quantum_init,
        c.quantum_t_probe.unwrap_or(spec.horizon),
        c.h,
    )?;
    let passed = classical.passed && quantum.passed;
    Ok(ConvergenceReport {
        band: ORDER_BAND,
        classical,
        quantum,
        passed,
    })
}
