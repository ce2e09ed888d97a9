//! Extremization of the action eigenvalue over the initial coefficients.
//!
//! The eigenvalue is a function of `(S10, S20, sigma10, sigma20)` through
//! the coefficient trajectories. It has no closed-form gradient in the
//! quantum case, so the search is derivative-free (Nelder-Mead) and
//! gradients only appear as finite-difference verification.
//!
//! In the classical limit the stationary set is a curve: the value is
//! constant along the `S20` direction once `S10` is tuned. Convergence is
//! therefore declared on the gradient norm, never on simplex collapse.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{eigenvalue, EigenvalueReport};
use crate::dynamics::{integrate, IntegrateError, IntegratorConfig};
use crate::model::{InitialData, OscillatorSpec};
use crate::output::serialize_sig17;

/// Objective value assigned to initial data whose trajectory blows up.
pub const BLOWUP_PENALTY: f64 = 1e15;
pub const DEFAULT_SEED: u64 = 42;

/// Coordinate names in [`InitialData::to_array`] order.
pub const COORDINATE_NAMES: [&str; 4] = ["S10", "S20", "sigma10", "sigma20"];

/// What kind of stationary point the simplex search looks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    /// Minimize the squared finite-difference gradient: finds maxima,
    /// minima and saddles alike.
    #[default]
    Stationary,
    Maximize,
    Minimize,
}

impl std::str::FromStr for Sense {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "stationary" => Ok(Sense::Stationary),
            "maximize" | "max" => Ok(Sense::Maximize),
            "minimize" | "min" => Ok(Sense::Minimize),
            other => Err(format!(
                "unknown sense `{other}` (expected stationary, maximize or minimize)"
            )),
        }
    }
}

/// Which of the four initial coefficients are free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveMask(pub [bool; 4]);

impl ActiveMask {
    pub const ALL: ActiveMask = ActiveMask([true; 4]);
    pub const CLASSICAL: ActiveMask = ActiveMask([true, true, false, false]);
    pub const S10_ONLY: ActiveMask = ActiveMask([true, false, false, false]);

    pub fn indices(&self) -> Vec<usize> {
        (0..4).filter(|&i| self.0[i]).collect()
    }

    /// Parses a comma-separated list of coordinate names, e.g. `S10,S20`.
    pub fn parse(list: &str) -> Result<Self, String> {
        let mut mask = [false; 4];
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let i = COORDINATE_NAMES
                .iter()
                .position(|c| c.eq_ignore_ascii_case(name))
                .ok_or_else(|| format!("unknown coordinate `{name}`"))?;
            mask[i] = true;
        }
        if !mask.iter().any(|&b| b) {
            return Err("active set is empty".into());
        }
        Ok(ActiveMask(mask))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    pub active_mask: ActiveMask,
    pub grad_tol: f64,
    /// Iteration budget of one simplex run.
    pub max_iter: usize,
    /// Weight of the squared constraint residual added to the eigenvalue.
    pub penalty_weight: f64,
    /// Number of simplex runs, the first from the guess and the rest from
    /// perturbed best points.
    pub restarts: usize,
    pub seed: u64,
    pub sense: Sense,
    /// Relative central-difference step for gradients.
    pub h_fd: f64,
    /// Relative step for the Hessian used in the signature.
    pub hessian_step: f64,
    pub integrator: IntegratorConfig,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            active_mask: ActiveMask::ALL,
            grad_tol: 1e-6,
            max_iter: 2000,
            penalty_weight: 0.0,
            restarts: 5,
            seed: DEFAULT_SEED,
            sense: Sense::Stationary,
            h_fd: 1e-5,
            hessian_step: 1e-3,
            integrator: IntegratorConfig::default(),
        }
    }
}

/// `lambda + penalty_weight * residual^2` for one initial data point.
pub fn objective_checked(
    init: &InitialData,
    spec: &OscillatorSpec,
    penalty_weight: f64,
    integrator: &IntegratorConfig,
) -> Result<(f64, EigenvalueReport), IntegrateError> {
    let grid = integrate(spec, init, integrator)?;
    let report = eigenvalue(&grid).expect("integrate returns complete grids");
    let r = report.constraint_residual;
    Ok((report.lambda + penalty_weight * r * r, report))
}

/// Like [`objective_checked`], with blow-ups mapped to [`BLOWUP_PENALTY`].
pub fn objective(
    init: &InitialData,
    spec: &OscillatorSpec,
    penalty_weight: f64,
    integrator: &IntegratorConfig,
) -> f64 {
    match objective_checked(init, spec, penalty_weight, integrator) {
        Ok((v, _)) if v.is_finite() => v,
        _ => BLOWUP_PENALTY,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StationarityError {
    #[error("finite-difference probe along {coordinate} failed: {source}")]
    FdFailure {
        coordinate: &'static str,
        source: IntegrateError,
    },
}

/// Counts of Hessian eigenvalues by sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HessianSignature {
    pub positive: usize,
    pub negative: usize,
    pub near_zero: usize,
}

impl HessianSignature {
    /// Classifies eigenvalues; `|e| < 1e-6 * max(1, max |e|)` counts as zero.
    pub fn from_eigenvalues(eigs: &[f64]) -> Self {
        let scale = eigs.iter().fold(1.0f64, |acc, e| acc.max(e.abs()));
        let mut sig = HessianSignature::default();
        for &e in eigs {
            if e.abs() < 1e-6 * scale {
                sig.near_zero += 1;
            } else if e > 0.0 {
                sig.positive += 1;
            } else {
                sig.negative += 1;
            }
        }
        sig
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stationarity {
    /// Central-difference gradient over the active coordinates.
    pub gradient: Vec<f64>,
    /// Max-norm of `gradient`.
    pub gradient_norm: f64,
    pub hessian_eigenvalues: Vec<f64>,
    pub signature: HessianSignature,
}

struct Probe<'a> {
    spec: &'a OscillatorSpec,
    base: InitialData,
    active: Vec<usize>,
    penalty_weight: f64,
    integrator: &'a IntegratorConfig,
}

impl Probe<'_> {
    fn point(&self, coords: &[f64]) -> InitialData {
        let mut v = self.base.to_array();
        for (&i, &c) in self.active.iter().zip(coords) {
            v[i] = c;
        }
        InitialData::from_array(v)
    }

    fn eval(&self, coords: &[f64], along: usize) -> Result<f64, StationarityError> {
        objective_checked(
            &self.point(coords),
            self.spec,
            self.penalty_weight,
            self.integrator,
        )
        .map(|(v, _)| v)
        .map_err(|source| StationarityError::FdFailure {
            coordinate: COORDINATE_NAMES[self.active[along]],
            source,
        })
    }

    fn coords(&self) -> Vec<f64> {
        let v = self.base.to_array();
        self.active.iter().map(|&i| v[i]).collect()
    }

    fn gradient(&self, coords: &[f64], h_rel: f64) -> Result<Vec<f64>, StationarityError> {
        (0..coords.len())
            .map(|j| {
                let h = h_rel * coords[j].abs().max(1.0);
                let mut plus = coords.to_vec();
                let mut minus = coords.to_vec();
                plus[j] += h;
                minus[j] -= h;
                Ok((self.eval(&plus, j)? - self.eval(&minus, j)?) / (2.0 * h))
            })
            .collect()
    }

    fn hessian(&self, coords: &[f64], h_rel: f64) -> Result<DMatrix<f64>, StationarityError> {
        let n = coords.len();
        let steps: Vec<f64> = coords.iter().map(|c| h_rel * c.abs().max(1.0)).collect();
        let f0 = self.eval(coords, 0)?;
        let shifted = |moves: &[(usize, f64)]| {
            let mut c = coords.to_vec();
            for &(j, d) in moves {
                c[j] += d;
            }
            c
        };
        let mut hess = DMatrix::zeros(n, n);
        for i in 0..n {
            let hi = steps[i];
            let fp = self.eval(&shifted(&[(i, hi)]), i)?;
            let fm = self.eval(&shifted(&[(i, -hi)]), i)?;
            hess[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
            for j in (i + 1)..n {
                let hj = steps[j];
                let fpp = self.eval(&shifted(&[(i, hi), (j, hj)]), j)?;
                let fpm = self.eval(&shifted(&[(i, hi), (j, -hj)]), j)?;
                let fmp = self.eval(&shifted(&[(i, -hi), (j, hj)]), j)?;
                let fmm = self.eval(&shifted(&[(i, -hi), (j, -hj)]), j)?;
                let v = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        Ok(hess)
    }
}

fn signature_of(hess: DMatrix<f64>) -> (Vec<f64>, HessianSignature) {
    let mut eigs: Vec<f64> = hess.symmetric_eigen().eigenvalues.iter().copied().collect();
    eigs.sort_by(|a, b| a.total_cmp(b));
    let sig = HessianSignature::from_eigenvalues(&eigs);
    (eigs, sig)
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Central-difference gradient of the objective at `init` over the active
/// coordinates, without the Hessian.
pub fn objective_gradient(
    init: &InitialData,
    spec: &OscillatorSpec,
    options: &OptimizeOptions,
) -> Result<Vec<f64>, StationarityError> {
    let probe = Probe {
        spec,
        base: *init,
        active: options.active_mask.indices(),
        penalty_weight: options.penalty_weight,
        integrator: &options.integrator,
    };
    probe.gradient(&probe.coords(), options.h_fd)
}

/// Finite-difference gradient and Hessian signature of the objective at
/// `init`, over the coordinates in `options.active_mask`. Central
/// differences use the per-coordinate step `h * max(1, |coordinate|)`.
pub fn stationarity_check(
    init: &InitialData,
    spec: &OscillatorSpec,
    options: &OptimizeOptions,
) -> Result<Stationarity, StationarityError> {
    let probe = Probe {
        spec,
        base: *init,
        active: options.active_mask.indices(),
        penalty_weight: options.penalty_weight,
        integrator: &options.integrator,
    };
    let coords = probe.coords();
    let gradient = probe.gradient(&coords, options.h_fd)?;
    let (hessian_eigenvalues, signature) =
        signature_of(probe.hessian(&coords, options.hessian_step)?);
    Ok(Stationarity {
        gradient_norm: max_norm(&gradient),
        gradient,
        hessian_eigenvalues,
        signature,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtremumResult {
    pub init: InitialData,
    /// Eigenvalue report from a fresh integration at `init`.
    pub report: EigenvalueReport,
    #[serde(serialize_with = "serialize_sig17")]
    pub objective: f64,
    pub gradient: Vec<f64>,
    #[serde(serialize_with = "serialize_sig17")]
    pub gradient_norm: f64,
    pub hessian_eigenvalues: Vec<f64>,
    pub hessian_signature: Option<HessianSignature>,
    pub iterations: usize,
    pub evaluations: usize,
    /// Objective evaluations that hit a blow-up and were penalized.
    pub blowups: usize,
    pub runs: usize,
    pub converged: bool,
    pub active_mask: ActiveMask,
    pub sense: Sense,
    pub seed: u64,
    /// Starting point actually used (the guess, or the guess pulled toward
    /// the origin when the guess itself blows up).
    pub start: InitialData,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("no feasible starting point between the guess and the origin")]
    InfeasibleStart,
    #[error("invalid optimizer options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Stationarity(#[from] StationarityError),
}

#[derive(Debug, Error)]
#[error("not converged after {runs} runs: gradient norm {gradient_norm:e}")]
pub struct NotConverged {
    pub runs: usize,
    pub gradient_norm: f64,
}

impl ExtremumResult {
    pub fn ensure_converged(&self) -> Result<&Self, NotConverged> {
        if self.converged {
            Ok(self)
        } else {
            Err(NotConverged {
                runs: self.runs,
                gradient_norm: self.gradient_norm,
            })
        }
    }
}

struct Counters {
    evaluations: usize,
    blowups: usize,
}

/// Function minimized by the simplex for the chosen [`Sense`].
fn search_value(
    probe: &Probe<'_>,
    coords: &[f64],
    options: &OptimizeOptions,
    c: &mut Counters,
) -> f64 {
    c.evaluations += 1;
    let value = match options.sense {
        Sense::Maximize => probe.eval(coords, 0).map(|v| -v),
        Sense::Minimize => probe.eval(coords, 0),
        Sense::Stationary => probe
            .gradient(coords, options.h_fd)
            .map(|g| g.iter().map(|x| x * x).sum()),
    };
    match value {
        Ok(v) if v.is_finite() => v,
        _ => {
            c.blowups += 1;
            BLOWUP_PENALTY
        }
    }
}

/// Total order on simplex vertices: by value, then lexicographically.
fn vertex_order(a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then_with(|| {
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// One Nelder-Mead run with standard coefficients; returns the best
/// vertex and the iteration count.
fn nelder_mead(
    start: &[f64],
    scale: &[f64],
    max_iter: usize,
    f: &mut dyn FnMut(&[f64]) -> f64,
) -> ((Vec<f64>, f64), usize) {
    const REFLECT: f64 = 1.0;
    const EXPAND: f64 = 2.0;
    const CONTRACT: f64 = 0.5;
    const SHRINK: f64 = 0.5;

    let n = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), f(start)));
    for j in 0..n {
        let mut v = start.to_vec();
        v[j] += scale[j];
        let fv = f(&v);
        simplex.push((v, fv));
    }

    let mut iter = 0;
    while iter < max_iter {
        simplex.sort_by(vertex_order);
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let size = simplex[1..]
            .iter()
            .map(|(v, _)| {
                v.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        let x_scale = simplex[0].0.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        if (worst - best).abs() <= 1e-16 * best.abs() || size <= 1e-13 * x_scale {
            break;
        }
        iter += 1;

        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let toward = |coef: f64, target: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(target)
                .map(|(c, t)| c + coef * (t - c))
                .collect()
        };

        let xr = toward(-REFLECT, &simplex[n].0);
        let fr = f(&xr);
        if fr < best {
            let xe = toward(EXPAND, &xr);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let xc = toward(CONTRACT, &xr);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = toward(CONTRACT, &simplex[n].0.clone());
            let fc = f(&xc);
            (xc, fc)
        };
        if fc < fr.min(worst) {
            simplex[n] = (xc, fc);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let v: Vec<f64> = anchor
                .iter()
                .zip(&vertex.0)
                .map(|(a, x)| a + SHRINK * (x - a))
                .collect();
            let fv = f(&v);
            *vertex = (v, fv);
        }
    }
    simplex.sort_by(vertex_order);
    (simplex.swap_remove(0), iter)
}

/// Searches for an extremum of the eigenvalue (plus optional constraint
/// penalty) over the active initial coefficients.
///
/// The first run starts from `guess`; each further run restarts from the
/// best point so far with a seeded random perturbation and a smaller
/// simplex. The search stops as soon as the gradient max-norm at the best
/// point is at most `grad_tol`.
pub fn optimize(
    spec: &OscillatorSpec,
    guess: &InitialData,
    options: &OptimizeOptions,
) -> Result<ExtremumResult, OptimizeError> {
    if !(options.grad_tol > 0.0 && options.h_fd > 0.0 && options.hessian_step > 0.0) {
        return Err(OptimizeError::InvalidOptions(
            "grad_tol, h_fd and hessian_step must be positive".into(),
        ));
    }
    let active = options.active_mask.indices();
    if active.is_empty() {
        return Err(OptimizeError::InvalidOptions("active set is empty".into()));
    }
    let mut counters = Counters {
        evaluations: 0,
        blowups: 0,
    };

    let start =
        feasible_start(spec, guess, &active, options).ok_or(OptimizeError::InfeasibleStart)?;
    let probe = Probe {
        spec,
        base: start,
        active: active.clone(),
        penalty_weight: options.penalty_weight,
        integrator: &options.integrator,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut iterations = 0;
    let mut runs = 0;
    let mut gradient = Vec::new();
    let mut converged = false;

    for run in 0..options.restarts.max(1) {
        runs += 1;
        let origin = match &best {
            None => probe.coords(),
            Some((x, _)) => x
                .iter()
                .map(|&c| c + 1e-3 * c.abs().max(1.0) * rng.gen_range(-1.0..1.0))
                .collect(),
        };
        let shrink = 0.5f64.powi(run as i32);
        let scale: Vec<f64> = origin
            .iter()
            .map(|c| 0.1 * c.abs().max(1.0) * shrink)
            .collect();

        let mut f = |x: &[f64]| search_value(&probe, x, options, &mut counters);
        let (candidate, iters) = nelder_mead(&origin, &scale, options.max_iter, &mut f);
        iterations += iters;

        best = match best {
            Some(b) if vertex_order(&b, &candidate).is_le() => Some(b),
            _ => Some(candidate),
        };
        let x = &best.as_ref().expect("set above").0;
        match probe.gradient(x, options.h_fd) {
            Ok(g) => {
                converged = max_norm(&g) <= options.grad_tol;
                gradient = g;
            }
            Err(_) => {
                converged = false;
                gradient = vec![f64::NAN; x.len()];
            }
        }
        log::debug!(
            "run {run}: value {:e}, gradient norm {:e}",
            best.as_ref().map_or(f64::NAN, |b| b.1),
            max_norm(&gradient)
        );
        if converged {
            break;
        }
    }

    let (x, _) = best.expect("at least one run");
    let init = probe.point(&x);
    let (objective, report) =
        objective_checked(&init, spec, options.penalty_weight, &options.integrator).map_err(
            |source| StationarityError::FdFailure {
                coordinate: "none",
                source,
            },
        )?;
    let (hessian_eigenvalues, hessian_signature) = match probe.hessian(&x, options.hessian_step) {
        Ok(h) => {
            let (e, s) = signature_of(h);
            (e, Some(s))
        }
        Err(_) => (Vec::new(), None),
    };

    Ok(ExtremumResult {
        init,
        report,
        objective,
        gradient_norm: max_norm(&gradient),
        gradient,
        hessian_eigenvalues,
        hessian_signature,
        iterations,
        evaluations: counters.evaluations,
        blowups: counters.blowups,
        runs,
        converged,
        active_mask: options.active_mask,
        sense: options.sense,
        seed: options.seed,
        start,
    })
}

/// The guess itself if its trajectory stays finite, otherwise the first
/// point on the halving path toward the origin whose trajectory and
/// gradient probes do.
fn feasible_start(
    spec: &OscillatorSpec,
    guess: &InitialData,
    active: &[usize],
    options: &OptimizeOptions,
) -> Option<InitialData> {
    let mut v = guess.to_array();
    for _ in 0..60 {
        let candidate = InitialData::from_array(v);
        let probe = Probe {
            spec,
            base: candidate,
            active: active.to_vec(),
            penalty_weight: options.penalty_weight,
            integrator: &options.integrator,
        };
        let coords = probe.coords();
        if probe.eval(&coords, 0).is_ok() && probe.gradient(&coords, options.h_fd).is_ok() {
            return Some(candidate);
        }
        for &i in active {
            v[i] *= 0.5;
        }
    }
    None
}
