//! Experiment configuration files.
//!
//! Two equivalent encodings are accepted. The INI form:
//!
//! ```text
//! seed = 42
//!
//! [spec]
//! m = 1
//! k = 1
//! hbar_tilde = 0
//! T = 1
//! x0 = 0
//! xT = 1
//!
//! [init]
//! S10 = 0          ; or t0 = 0.5 to derive S20 from the phase offset
//! S20 = 0
//! sigma10 = 0
//! sigma20 = 0
//!
//! [grid]
//! h = 0.001
//! method = rk4
//!
//! [optimize]
//! active = S10,S20,sigma10,sigma20
//! grad_tol = 1e-6
//! max_iter = 2000
//! penalty_weight = 0
//! restarts = 5
//! sense = stationary
//!
//! [sweep]
//! t0 = 0.1:0.9:0.1
//! hbar = 0.02, 0.04, 0.08, 0.16
//!
//! [convergence]
//! h = 0.01
//! t_probe = 0.5          ; defaults to T/2
//! quantum_hbar = 0.5
//! quantum_t_probe = 1.0  ; defaults to T
//! quantum_init = 1, 0, 0.3, 0.7
//!
//! [output]
//! dir = out
//! ```
//!
//! and a JSON object with the same sections as nested objects (top-level
//! scalars play the role of the unnamed INI section). Grids are either a
//! comma-separated list or `start:stop:step`; in JSON they may also be
//! arrays of numbers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dynamics::{IntegratorConfig, Method};
use crate::extremize::{ActiveMask, OptimizeOptions, Sense, DEFAULT_SEED};
use crate::model::{validate, InitialData, OscillatorSpec, SpecErrors};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("[{section}] {key}: {message}")]
    Invalid {
        section: String,
        key: String,
        message: String,
    },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error(transparent)]
    Spec(#[from] SpecErrors),
}

type Section = BTreeMap<String, String>;

/// Raw key/value view of a config file: section name (empty for the
/// top level) to entries.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct RawConfig(BTreeMap<String, Section>);

impl RawConfig {
    pub fn parse_ini(text: &str) -> Result<Self, ConfigError> {
        let ini = ini::Ini::load_from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let mut out = BTreeMap::new();
        for (section, props) in ini.iter() {
            let entry: &mut Section = out.entry(section.unwrap_or("").to_string()).or_default();
            for (k, v) in props.iter() {
                entry.insert(k.trim().to_string(), strip_inline_comment(v).to_string());
            }
        }
        Ok(Self(out))
    }

    pub fn parse_json(text: &str) -> Result<Self, ConfigError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| ConfigError::Syntax("top level must be an object".into()))?;
        let mut out: BTreeMap<String, Section> = BTreeMap::new();
        for (key, v) in obj {
            match v {
                serde_json::Value::Object(inner) => {
                    let section = out.entry(key.clone()).or_default();
                    for (k, iv) in inner {
                        section.insert(k.clone(), json_scalar(iv, key, k)?);
                    }
                }
                other => {
                    out.entry(String::new())
                        .or_default()
                        .insert(key.clone(), json_scalar(other, "", key)?);
                }
            }
        }
        Ok(Self(out))
    }

    /// Chooses JSON when the text starts with `{`, INI otherwise.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        if text.trim_start().starts_with('{') {
            Self::parse_json(text)
        } else {
            Self::parse_ini(text)
        }
    }
}

fn strip_inline_comment(v: &str) -> &str {
    let cut = v.find([';', '#']).unwrap_or(v.len());
    v[..cut].trim()
}

fn json_scalar(v: &serde_json::Value, section: &str, key: &str) -> Result<String, ConfigError> {
    use serde_json::Value;
    match v {
        Value::Number(n) => Ok(n.to_string()),
        Value::String(s) => Ok(s.clone()),
        Value::Bool(b) => Ok(b.to_string()),
        Value::Array(items) => items
            .iter()
            .map(|i| json_scalar(i, section, key))
            .collect::<Result<Vec<_>, _>>()
            .map(|parts| parts.join(",")),
        _ => Err(ConfigError::Invalid {
            section: section.into(),
            key: key.into(),
            message: "expected a scalar or an array".into(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepConfig {
    pub t0: Option<Vec<f64>>,
    pub hbar: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    pub h: f64,
    /// Defaults to `T / 2`.
    pub t_probe: Option<f64>,
    pub quantum_hbar: f64,
    /// Defaults to `T`.
    pub quantum_t_probe: Option<f64>,
    pub quantum_init: InitialData,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            h: 0.01,
            t_probe: None,
            quantum_hbar: 0.5,
            quantum_t_probe: None,
            quantum_init: InitialData::new(1.0, 0.0, 0.3, 0.7),
        }
    }
}

/// Fully typed experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub spec: OscillatorSpec,
    /// `None` when the file has no `[init]` section; each experiment then
    /// uses its own default.
    pub init: Option<InitialData>,
    /// Phase offset given instead of `S20`.
    pub t0: Option<f64>,
    pub integrator: IntegratorConfig,
    pub optimize: OptimizeOptions,
    pub sweep: SweepConfig,
    pub convergence: ConvergenceConfig,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            spec: OscillatorSpec::default(),
            init: None,
            t0: None,
            integrator: IntegratorConfig::default(),
            optimize: OptimizeOptions::default(),
            sweep: SweepConfig::default(),
            convergence: ConvergenceConfig::default(),
            output_dir: None,
            seed: DEFAULT_SEED,
        }
    }
}

struct Reader<'a> {
    name: &'static str,
    entries: Option<&'a Section>,
    used: Vec<&'a str>,
}

impl<'a> Reader<'a> {
    fn new(raw: &'a RawConfig, name: &'static str) -> Self {
        Self {
            name,
            entries: raw.0.get(name),
            used: Vec::new(),
        }
    }

    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            section: self.name.into(),
            key: key.into(),
            message: message.into(),
        }
    }

    /// First present key among `aliases`.
    fn raw(&mut self, aliases: &[&str]) -> Option<(&'a str, &'a str)> {
        let entries = self.entries?;
        for &alias in aliases {
            if let Some((k, v)) = entries.get_key_value(alias) {
                self.used.push(k.as_str());
                return Some((k.as_str(), v.as_str()));
            }
        }
        None
    }

    fn f64(&mut self, aliases: &[&str]) -> Result<Option<f64>, ConfigError> {
        match self.raw(aliases) {
            None => Ok(None),
            Some((k, v)) => v
                .trim()
                .parse::<f64>()
                .map(Some)
                .map_err(|_| self.err(k, format!("expected a number, got `{v}`"))),
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, aliases: &[&str]) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(aliases) {
            None => Ok(None),
            Some((k, v)) => v
                .trim()
                .parse::<T>()
                .map(Some)
                .map_err(|e| self.err(k, e.to_string())),
        }
    }

    fn grid(&mut self, aliases: &[&str]) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.raw(aliases) {
            None => Ok(None),
            Some((k, v)) => parse_grid(v).map(Some).map_err(|m| self.err(k, m)),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some(entries) = self.entries {
            if let Some(k) = entries.keys().find(|k| !self.used.contains(&k.as_str())) {
                return Err(self.err(k, "unknown key"));
            }
        }
        Ok(())
    }
}

/// Parses `a, b, c` or `start:stop:step` into a non-empty, strictly
/// increasing grid.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let text = text.trim();
    let values: Vec<f64> = if text.contains(':') {
        let parts: Vec<f64> = text
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| format!("malformed range `{text}`"))?;
        let [start, stop, step] = parts[..] else {
            return Err(format!("range `{text}` must be start:stop:step"));
        };
        if step.is_nan() || step <= 0.0 || stop < start {
            return Err(format!("range `{text}` needs step > 0 and stop >= start"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| start + i as f64 * step).collect()
    } else {
        text.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| format!("bad grid value `{s}`"))
            })
            .collect::<Result<_, _>>()?
    };
    if values.is_empty() {
        return Err("grid is empty".into());
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err("grid values must be finite".into());
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err("grid must be strictly increasing".into());
    }
    Ok(values)
}

fn parse_init_list(text: &str) -> Result<InitialData, String> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("malformed initial data `{text}`"))?;
    let [a, b, c, d] = v[..] else {
        return Err("initial data needs four values S10, S20, sigma10, sigma20".into());
    };
    Ok(InitialData::new(a, b, c, d))
}

const SECTIONS: [&str; 8] = [
    "",
    "spec",
    "init",
    "grid",
    "optimize",
    "sweep",
    "convergence",
    "output",
];

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        if let Some(unknown) = raw.0.keys().find(|s| !SECTIONS.contains(&s.as_str())) {
            return Err(ConfigError::UnknownSection(unknown.clone()));
        }
        let mut cfg = ExperimentConfig::default();

        let mut top = Reader::new(raw, "");
        if let Some(seed) = top.parsed::<u64>(&["seed"])? {
            cfg.seed = seed;
        }
        top.finish()?;

        let mut r = Reader::new(raw, "spec");
        let s = &mut cfg.spec;
        s.mass = r.f64(&["m", "mass"])?.unwrap_or(s.mass);
        s.stiffness = r.f64(&["k", "stiffness"])?.unwrap_or(s.stiffness);
        s.hbar = r.f64(&["hbar_tilde", "hbar"])?.unwrap_or(s.hbar);
        s.horizon = r.f64(&["T", "horizon"])?.unwrap_or(s.horizon);
        s.x0 = r.f64(&["x0"])?.unwrap_or(s.x0);
        s.x_end = r.f64(&["xT", "x_T", "x_end"])?.unwrap_or(s.x_end);
        r.finish()?;

        let mut r = Reader::new(raw, "init");
        if r.entries.is_some() {
            let s10 = r.f64(&["S10", "s10"])?.unwrap_or(0.0);
            let s20 = r.f64(&["S20", "s20"])?;
            let t0 = r.f64(&["t0"])?;
            let sigma10 = r.f64(&["sigma10"])?.unwrap_or(0.0);
            let sigma20 = r.f64(&["sigma20"])?.unwrap_or(0.0);
            if s20.is_some() && t0.is_some() {
                return Err(r.err("t0", "give either S20 or t0, not both"));
            }
            cfg.t0 = t0;
            let init = InitialData::new(s10, s20.unwrap_or(0.0), sigma10, sigma20);
            if !init.is_finite() {
                return Err(r.err("S10", "initial data must be finite"));
            }
            cfg.init = Some(init);
        }
        r.finish()?;

        let mut r = Reader::new(raw, "grid");
        cfg.integrator.step = r.f64(&["h", "step"])?.unwrap_or(cfg.integrator.step);
        cfg.integrator.method = r.parsed::<Method>(&["method"])?.unwrap_or_default();
        cfg.integrator.atol = r.f64(&["atol"])?.unwrap_or(cfg.integrator.atol);
        cfg.integrator.rtol = r.f64(&["rtol"])?.unwrap_or(cfg.integrator.rtol);
        if !(cfg.integrator.step > 0.0 && cfg.integrator.step.is_finite()) {
            return Err(r.err("h", "step must be positive"));
        }
        r.finish()?;

        let mut r = Reader::new(raw, "optimize");
        let o = &mut cfg.optimize;
        if let Some((k, v)) = r.raw(&["active", "active_mask"]) {
            o.active_mask = ActiveMask::parse(v).map_err(|m| r.err(k, m))?;
        }
        o.grad_tol = r.f64(&["grad_tol"])?.unwrap_or(o.grad_tol);
        o.max_iter = r.parsed::<usize>(&["max_iter"])?.unwrap_or(o.max_iter);
        o.penalty_weight = r.f64(&["penalty_weight"])?.unwrap_or(o.penalty_weight);
        o.restarts = r.parsed::<usize>(&["restarts"])?.unwrap_or(o.restarts);
        o.sense = r.parsed::<Sense>(&["sense"])?.unwrap_or(o.sense);
        o.h_fd = r.f64(&["h_fd"])?.unwrap_or(o.h_fd);
        o.hessian_step = r.f64(&["hessian_step"])?.unwrap_or(o.hessian_step);
        if let Some(seed) = r.parsed::<u64>(&["seed"])? {
            cfg.seed = seed;
        }
        if !(o.grad_tol > 0.0 && o.h_fd > 0.0 && o.hessian_step > 0.0) {
            return Err(r.err(
                "grad_tol",
                "grad_tol, h_fd and hessian_step must be positive",
            ));
        }
        if o.penalty_weight < 0.0 || !o.penalty_weight.is_finite() {
            return Err(r.err("penalty_weight", "must be finite and non-negative"));
        }
        r.finish()?;

        let mut r = Reader::new(raw, "sweep");
        cfg.sweep.t0 = r.grid(&["t0"])?;
        cfg.sweep.hbar = r.grid(&["hbar", "hbar_tilde"])?;
        if let Some(h) = &cfg.sweep.hbar {
            if h.iter().any(|&v| v < 0.0) {
                return Err(r.err("hbar", "values must be non-negative"));
            }
        }
        r.finish()?;

        let mut r = Reader::new(raw, "convergence");
        let c = &mut cfg.convergence;
        c.h = r.f64(&["h"])?.unwrap_or(c.h);
        c.t_probe = r.f64(&["t_probe"])?;
        c.quantum_hbar = r.f64(&["quantum_hbar"])?.unwrap_or(c.quantum_hbar);
        c.quantum_t_probe = r.f64(&["quantum_t_probe"])?;
        if let Some((k, v)) = r.raw(&["quantum_init"]) {
            c.quantum_init = parse_init_list(v).map_err(|m| r.err(k, m))?;
        }
        let probes_ok = [c.t_probe, c.quantum_t_probe]
            .iter()
            .flatten()
            .all(|&t| t > 0.0);
        if !(c.h > 0.0 && probes_ok) {
            return Err(r.err("h", "h and probe times must be positive"));
        }
        if c.quantum_hbar.is_nan() || c.quantum_hbar < 0.0 {
            return Err(r.err("quantum_hbar", "must be non-negative"));
        }
        r.finish()?;

        let mut r = Reader::new(raw, "output");
        cfg.output_dir = r.raw(&["dir"]).map(|(_, v)| PathBuf::from(v.trim()));
        r.finish()?;

        cfg.optimize.seed = cfg.seed;
        cfg.optimize.integrator = cfg.integrator;
        validate(cfg.spec)?;
        Ok(cfg)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.optimize.seed = seed;
        self
    }

    pub fn with_step(mut self, h: f64) -> Self {
        self.integrator.step = h;
        self.optimize.integrator.step = h;
        self.convergence.h = h;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.integrator.method = method;
        self.optimize.integrator.method = method;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = ExperimentConfig::from_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn ini_round() {
        let text = "seed = 7\n[spec]\nm = 2\nk=0.5\nhbar_tilde = 0.1\nT = 1.5\nx0 = -1\nxT = 2 ; comment\n\
                    [init]\nS10 = 1\nt0 = 0.25\nsigma20 = 1\n[grid]\nh = 0.01\nmethod = rk4_adaptive\n\
                    [optimize]\nactive = S10,S20\nsense = maximize\nrestarts = 3\n\
                    [sweep]\nt0 = 0.1:0.3:0.1\nhbar = 0, 0.02, 0.04\n[output]\ndir = results\n";
        let cfg = ExperimentConfig::from_str(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.optimize.seed, 7);
        assert_eq!(cfg.spec.mass, 2.0);
        assert_eq!(cfg.spec.x_end, 2.0);
        assert_eq!(cfg.t0, Some(0.25));
        assert_eq!(cfg.init.unwrap().sigma20, 1.0);
        assert_eq!(cfg.integrator.method, Method::Rk4Adaptive);
        assert_eq!(cfg.optimize.integrator.step, 0.01);
        assert_eq!(cfg.optimize.active_mask, ActiveMask::CLASSICAL);
        assert_eq!(cfg.optimize.sense, Sense::Maximize);
        assert_eq!(cfg.sweep.t0.as_ref().unwrap().len(), 3);
        assert_eq!(cfg.sweep.hbar, Some(vec![0.0, 0.02, 0.04]));
        assert_eq!(cfg.output_dir, Some(PathBuf::from("results")));
    }

    #[test]
    fn json_matches_ini() {
        let ini = "[spec]\nT = 2\n[sweep]\nhbar = 0.02,0.04\n[init]\nS10 = 1\n";
        let json = r#"{"spec": {"T": 2}, "sweep": {"hbar": [0.02, 0.04]}, "init": {"S10": 1}}"#;
        assert_eq!(
            ExperimentConfig::from_str(ini).unwrap(),
            ExperimentConfig::from_str(json).unwrap()
        );
    }

    #[test]
    fn invalid_spec_rejected() {
        let err = ExperimentConfig::from_str("[spec]\nT = 0\n").unwrap_err();
        assert!(matches!(err, ConfigError::Spec(_)));
    }

    #[test]
    fn unknown_keys_and_sections_rejected() {
        assert!(matches!(
            ExperimentConfig::from_str("[spec]\nmasss = 1\n"),
            Err(ConfigError::Invalid { .. })
        ));
        assert!(matches!(
            ExperimentConfig::from_str("[plot]\nx = 1\n"),
            Err(ConfigError::UnknownSection(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_str("[grid]\nmethod = euler\n"),
            Err(ConfigError::Invalid { .. })
        ));
    }

    #[test]
    fn s20_and_t0_conflict() {
        assert!(ExperimentConfig::from_str("[init]\nS20 = 1\nt0 = 0.2\n").is_err());
    }

    #[test]
    fn grid_forms() {
        let g = parse_grid("0.1:0.9:0.1").unwrap();
        assert_eq!(g.len(), 9);
        assert!((g[8] - 0.9).abs() < 1e-12);
        assert_eq!(parse_grid("1, 2,3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(parse_grid("").is_err());
        assert!(parse_grid("1, 1").is_err());
        assert!(parse_grid("0.3, 0.1").is_err());
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("0:1").is_err());
    }

    #[test]
    fn quantum_init_list() {
        let cfg =
            ExperimentConfig::from_str("[convergence]\nquantum_init = 1, 0, 0.3, 1\n").unwrap();
        assert_eq!(
            cfg.convergence.quantum_init,
            InitialData::new(1.0, 0.0, 0.3, 1.0)
        );
        assert!(ExperimentConfig::from_str("[convergence]\nquantum_init = 1, 0\n").is_err());
    }
}
