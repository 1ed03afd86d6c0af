//! Experiment configuration: per-system defaults, a `key = value` file
//! format, and command-line overrides layered on top.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::filters::FilterKind;
use crate::models::{stream_rng, LinearModel, Lorenz, SystemModel, VanDerPol};
use crate::sigma::{Matrix, Vector};

/// Stream of the configured seed used to draw a `linear-random` system.
pub const MODEL_STREAM: u64 = 3;

/// Van der Pol sampling time. Chosen so the one-step UKF reaches its
/// steady-state covariance inflation without the Euler map going unstable.
pub const VDP_DEFAULT_TS: f64 = 0.15;
pub const LORENZ_DEFAULT_TS: f64 = 0.01;
pub const DEFAULT_ALPHA: f64 = 1.5;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemId {
    Vdp,
    Lorenz,
    LinearRandom,
}

impl SystemId {
    pub fn name(&self) -> &'static str {
        match self {
            SystemId::Vdp => "vdp",
            SystemId::Lorenz => "lorenz",
            SystemId::LinearRandom => "linear-random",
        }
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "vdp" => Ok(SystemId::Vdp),
            "lorenz" => Ok(SystemId::Lorenz),
            "linear-random" => Ok(SystemId::LinearRandom),
            other => Err(Error::Config(format!("unknown system '{other}'"))),
        }
    }
}

/// Fully resolved settings of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub system: SystemId,
    pub filters: Vec<String>,
    pub steps: usize,
    pub seed: u64,
    pub alpha: f64,
    pub ts: f64,
    pub mu: f64,
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub q_scale: f64,
    pub r_scale: f64,
    pub x0: Vec<f64>,
    /// One value (scaled identity), `n` values (diagonal) or `n * n` values
    /// (row-major).
    pub p0: Vec<f64>,
    pub out: Option<PathBuf>,
    pub jitter: Option<f64>,
    /// State and output dimensions of `linear-random`.
    pub state_dim: usize,
    pub output_dim: usize,
}

impl ExperimentConfig {
    /// Defaults for `system`: the benchmark parameters for `vdp` and
    /// `lorenz`, a 3-state 2-output system for `linear-random`.
    pub fn defaults(system: SystemId) -> Self {
        let base = ExperimentConfig {
            system,
            filters: vec!["ukf2".into(), "ukf1".into(), "mukf".into()],
            steps: 5000,
            seed: DEFAULT_SEED,
            alpha: DEFAULT_ALPHA,
            ts: VDP_DEFAULT_TS,
            mu: 1.2,
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
            q_scale: 0.01,
            r_scale: 1e-4,
            x0: vec![1.0, 1.0],
            p0: vec![1.0],
            out: None,
            jitter: None,
            state_dim: 3,
            output_dim: 2,
        };
        match system {
            SystemId::Vdp => base,
            SystemId::Lorenz => ExperimentConfig {
                steps: 3000,
                ts: LORENZ_DEFAULT_TS,
                x0: vec![1.0; 3],
                ..base
            },
            SystemId::LinearRandom => ExperimentConfig {
                filters: vec!["kf".into(), "ukf2".into(), "ukf1".into(), "mukf".into()],
                steps: 200,
                q_scale: 1.0,
                r_scale: 1.0,
                x0: vec![1.0; 3],
                ..base
            },
        }
    }

    pub fn state_dim(&self) -> usize {
        match self.system {
            SystemId::Vdp => 2,
            SystemId::Lorenz => 3,
            SystemId::LinearRandom => self.state_dim,
        }
    }

    pub fn filter_kinds(&self) -> Result<Vec<FilterKind>> {
        self.filters
            .iter()
            .map(|name| {
                FilterKind::parse(name, self.alpha)
                    .ok_or_else(|| Error::Config(format!("unknown filter '{name}'")))
            })
            .collect()
    }

    pub fn initial_state(&self) -> Vector {
        Vector::from_column_slice(&self.x0)
    }

    pub fn initial_covariance(&self) -> Result<Matrix> {
        let n = self.state_dim();
        match self.p0.len() {
            1 => Ok(Matrix::identity(n, n) * self.p0[0]),
            len if len == n => Ok(Matrix::from_diagonal(&Vector::from_column_slice(&self.p0))),
            len if len == n * n => Ok(Matrix::from_row_slice(n, n, &self.p0)),
            len => Err(Error::Config(format!(
                "p0 needs 1, {n} or {} values for a {n}-state system, got {len}",
                n * n
            ))),
        }
    }

    /// Checks every invariant that can be checked before running.
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return Err(Error::Config(format!(
                "ts must be positive, got {}",
                self.ts
            )));
        }
        for (name, v) in [("q-scale", self.q_scale), ("r-scale", self.r_scale)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if self.r_scale == 0.0 {
            return Err(Error::Config("r-scale must be positive".into()));
        }
        if let Some(j) = self.jitter {
            if !(j > 0.0 && j.is_finite()) {
                return Err(Error::Config(format!("jitter must be positive, got {j}")));
            }
        }
        if self.system == SystemId::LinearRandom
            && (self.state_dim == 0 || self.output_dim == 0 || self.output_dim > self.state_dim)
        {
            return Err(Error::Config(format!(
                "linear-random needs 1 <= output-dim <= state-dim, got {}x{}",
                self.output_dim, self.state_dim
            )));
        }
        let n = self.state_dim();
        if self.x0.len() != n {
            return Err(Error::Config(format!(
                "x0 has {} values, {} needs {n}",
                self.x0.len(),
                self.system
            )));
        }
        self.initial_covariance()?;
        if self.filters.is_empty() {
            return Err(Error::Config("no filters requested".into()));
        }
        let kinds = self.filter_kinds()?;
        if self.system != SystemId::LinearRandom && kinds.contains(&FilterKind::Kf) {
            return Err(Error::Config(format!(
                "kf needs a linear system, {} is nonlinear",
                self.system
            )));
        }
        for (i, k) in kinds.iter().enumerate() {
            if kinds[..i].contains(k) {
                return Err(Error::Config(format!("filter '{}' listed twice", k.name())));
            }
        }
        Ok(())
    }

    /// Builds the model this configuration describes.
    pub fn build_model(&self) -> Result<BuiltModel> {
        let n = self.state_dim();
        Ok(match self.system {
            SystemId::Vdp => BuiltModel::Vdp(VanDerPol {
                ts: self.ts,
                mu: self.mu,
                q: Matrix::identity(n, n) * self.q_scale,
                r: Matrix::identity(1, 1) * self.r_scale,
            }),
            SystemId::Lorenz => BuiltModel::Lorenz(Lorenz {
                ts: self.ts,
                sigma: self.sigma,
                rho: self.rho,
                beta: self.beta,
                q: Matrix::identity(n, n) * self.q_scale,
                r: Matrix::identity(1, 1) * self.r_scale,
            }),
            SystemId::LinearRandom => {
                let mut rng = stream_rng(self.seed, MODEL_STREAM);
                let base = LinearModel::random(&mut rng, self.state_dim, self.output_dim)?;
                BuiltModel::Linear(LinearModel::new(
                    base.a(0),
                    base.b(0),
                    base.c(0),
                    base.q(0) * self.q_scale,
                    base.r(0) * self.r_scale,
                )?)
            }
        })
    }
}

#[derive(Debug, Clone)]
pub enum BuiltModel {
    Vdp(VanDerPol),
    Lorenz(Lorenz),
    Linear(LinearModel),
}

impl BuiltModel {
    pub fn as_system(&self) -> &dyn SystemModel {
        match self {
            BuiltModel::Vdp(m) => m,
            BuiltModel::Lorenz(m) => m,
            BuiltModel::Linear(m) => m,
        }
    }
}

/// Partial settings from a config file or the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub system: Option<SystemId>,
    pub filters: Option<Vec<String>>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub ts: Option<f64>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub rho: Option<f64>,
    pub beta: Option<f64>,
    pub q_scale: Option<f64>,
    pub r_scale: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub p0: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub jitter: Option<f64>,
    pub state_dim: Option<usize>,
    pub output_dim: Option<usize>,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value for {key}: '{value}'")))
}

/// Parses a comma-separated list of reals.
pub fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| parse_value::<f64>(key, v))
        .collect()
}

pub fn parse_filters(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_ascii_lowercase())
        .filter(|s| !s.is_empty())
        .collect()
}

impl ConfigOverrides {
    /// Parses `key = value` lines. Blank lines and `#` comments are ignored;
    /// keys use the long flag names without dashes (`q-scale` or `q_scale`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut o = ConfigOverrides::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim().replace('_', "-");
            let value = value.trim();
            o.set(&key, value)
                .map_err(|e| Error::Config(format!("line {}: {}", lineno + 1, e.root())))?;
        }
        Ok(o)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "system" => self.system = Some(value.parse()?),
            "filters" => self.filters = Some(parse_filters(value)),
            "steps" => self.steps = Some(parse_value(key, value)?),
            "seed" => self.seed = Some(parse_value(key, value)?),
            "alpha" => self.alpha = Some(parse_value(key, value)?),
            "ts" => self.ts = Some(parse_value(key, value)?),
            "mu" => self.mu = Some(parse_value(key, value)?),
            "sigma" => self.sigma = Some(parse_value(key, value)?),
            "rho" => self.rho = Some(parse_value(key, value)?),
            "beta" => self.beta = Some(parse_value(key, value)?),
            "q-scale" => self.q_scale = Some(parse_value(key, value)?),
            "r-scale" => self.r_scale = Some(parse_value(key, value)?),
            "x0" => self.x0 = Some(parse_list(key, value)?),
            "p0" => self.p0 = Some(parse_list(key, value)?),
            "out" => self.out = Some(PathBuf::from(value)),
            "jitter" => self.jitter = Some(parse_value(key, value)?),
            "state-dim" => self.state_dim = Some(parse_value(key, value)?),
            "output-dim" => self.output_dim = Some(parse_value(key, value)?),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Fills every unset field of `self` from `fallback`.
    pub fn or(self, fallback: ConfigOverrides) -> ConfigOverrides {
        ConfigOverrides {
            system: self.system.or(fallback.system),
            filters: self.filters.or(fallback.filters),
            steps: self.steps.or(fallback.steps),
            seed: self.seed.or(fallback.seed),
            alpha: self.alpha.or(fallback.alpha),
            ts: self.ts.or(fallback.ts),
            mu: self.mu.or(fallback.mu),
            sigma: self.sigma.or(fallback.sigma),
            rho: self.rho.or(fallback.rho),
            beta: self.beta.or(fallback.beta),
            q_scale: self.q_scale.or(fallback.q_scale),
            r_scale: self.r_scale.or(fallback.r_scale),
            x0: self.x0.or(fallback.x0),
            p0: self.p0.or(fallback.p0),
            out: self.out.or(fallback.out),
            jitter: self.jitter.or(fallback.jitter),
            state_dim: self.state_dim.or(fallback.state_dim),
            output_dim: self.output_dim.or(fallback.output_dim),
        }
    }

    /// Applies the overrides to the defaults of the chosen system and validates.
    pub fn resolve(self) -> Result<ExperimentConfig> {
        let system = self
            .system
            .ok_or_else(|| Error::Config("no system given".into()))?;
        let mut c = ExperimentConfig::defaults(system);
        if let Some(n) = self.state_dim {
            c.state_dim = n;
            c.x0 = vec![1.0; n];
        }
        macro_rules! take {
            ($($field:ident),*) => { $( if let Some(v) = self.$field { c.$field = v; } )* };
        }
        take!(
            filters, steps, seed, alpha, ts, mu, sigma, rho, beta, q_scale, r_scale, x0, p0,
            output_dim
        );
        c.out = self.out;
        c.jitter = self.jitter;
        c.validate()?;
        Ok(c)
    }
}
