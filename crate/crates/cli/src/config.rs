//! Sectioned key-value experiment configuration.
//!
//! ```text
//! [model]
//! n = 3                  # total dimension, >= 2
//! c = 1.0                # cone slope
//! profile = capped       # capped | neck
//! cap_offset = 0.0       # d in F(ρ) = cρ + d past the match radius
//! cap_match_radius = 2.0 # ρ_b
//! outer_bc = dirichlet   # dirichlet | neumann
//! l_max = 4              # highest spherical-harmonic degree kept
//! length = 1.0
//!
//! [schedule]
//! eps = 0.2, 0.1, 0.05, 0.025, 0.0125
//!
//! [solver]
//! cells = 2048           # coarse grid of every Richardson pair
//! tolerance = 1e-3
//! levels = 10            # reference levels compared by `flow`
//! rel_window = 1e-3
//! scheme = extrapolated_euler  # or crank_nicolson
//! steps = 400
//! tail_tol = 1e-14
//!
//! [probe]
//! regime = interior_F0101      # interior_F0101 | scaled_F1010
//! x = 0.5
//! xprime = 0.5
//! times = 0.1, 0.5, 1.0
//! l_max = 48             # angular truncation for kernel sums
//!
//! [output]
//! dir = out
//! ```
//! Every key is optional; the defaults are listed above, except that the
//! probe point and times default per regime.

use acclab::heat::{ExpansionOptions, ProbeSpec, Regime, StepOptions, Stepper};
use acclab::model_geometry::{BoundaryCondition, ProfileKind, WarpFamily};
use acclab::spectral::{FlowOptions, SolverOptions, DEFAULT_SCHEDULE};
use ini::Ini;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("unknown config key [{section}] {key}")]
    UnknownKey { section: String, key: String },
    #[error("invalid value for {key}: `{value}` ({reason})")]
    Invalid { key: String, value: String, reason: String },
    #[error("empty ε schedule")]
    EmptySchedule,
    #[error("ε schedule must be positive and strictly decreasing: {0:?}")]
    Schedule(Vec<f64>),
    #[error("model: {0}")]
    Model(#[from] acclab::model_geometry::GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelConfig {
    pub n: u32,
    pub c: f64,
    pub profile: ProfileKind,
    pub cap_offset: f64,
    pub cap_match_radius: f64,
    pub outer_bc: BoundaryCondition,
    pub l_max: u32,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub cells: usize,
    pub tolerance: f64,
    pub levels: usize,
    pub rel_window: f64,
    pub scheme: Stepper,
    pub steps: usize,
    pub tail_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeConfig {
    pub regime: Regime,
    pub point: Option<(f64, f64)>,
    pub times: Option<Vec<f64>>,
    pub l_max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub schedule: Vec<f64>,
    pub solver: SolverConfig,
    pub probe: ProbeConfig,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelConfig {
                n: 3,
                c: 1.0,
                profile: ProfileKind::Capped,
                cap_offset: 0.0,
                cap_match_radius: 2.0,
                outer_bc: BoundaryCondition::Dirichlet,
                l_max: 4,
                length: 1.0,
            },
            schedule: DEFAULT_SCHEDULE.to_vec(),
            solver: SolverConfig {
                cells: 2048,
                tolerance: 1e-3,
                levels: 10,
                rel_window: 1e-3,
                scheme: Stepper::ExtrapolatedEuler,
                steps: 400,
                tail_tol: 1e-14,
            },
            probe: ProbeConfig { regime: Regime::InteriorF0101, point: None, times: None, l_max: 48 },
            output_dir: None,
        }
    }
}

fn invalid(key: &str, value: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid { key: key.into(), value: value.into(), reason: reason.to_string() }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| invalid(key, value, e))
}

fn positive(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = num(key, value)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(key, value, "must be positive"))
    }
}

fn list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| num(key, s)).collect()
}

fn stepper(value: &str) -> Result<Stepper, ConfigError> {
    match value.trim() {
        "extrapolated_euler" => Ok(Stepper::ExtrapolatedEuler),
        "crank_nicolson" => Ok(Stepper::CrankNicolson),
        other => Err(invalid("solver.scheme", other, "expected extrapolated_euler or crank_nicolson")),
    }
}

pub fn check_schedule(s: &[f64]) -> Result<(), ConfigError> {
    if s.is_empty() {
        return Err(ConfigError::EmptySchedule);
    }
    if s.iter().any(|e| !(*e > 0.0)) || s.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ConfigError::Schedule(s.to_vec()));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_file(path)
            .map_err(|e| ConfigError::Read { path: path.to_path_buf(), message: e.to_string() })?;
        Self::from_ini(&ini)
    }

    #[cfg(test)]
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_str(text)
            .map_err(|e| ConfigError::Read { path: PathBuf::from("<string>"), message: e.to_string() })?;
        Self::from_ini(&ini)
    }

    fn from_ini(ini: &Ini) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let (mut x, mut xp) = (None, None);
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            for (key, value) in props.iter() {
                let full = format!("{section}.{key}");
                let m = &mut cfg.model;
                let s = &mut cfg.solver;
                match (section, key) {
                    ("model", "n") => m.n = num(&full, value)?,
                    ("model", "c") => m.c = positive(&full, value)?,
                    ("model", "profile") => m.profile = value.parse()?,
                    ("model", "cap_offset") => m.cap_offset = num(&full, value)?,
                    ("model", "cap_match_radius") => m.cap_match_radius = positive(&full, value)?,
                    ("model", "outer_bc") => m.outer_bc = value.parse()?,
                    ("model", "l_max") => m.l_max = num(&full, value)?,
                    ("model", "length") => m.length = positive(&full, value)?,
                    ("schedule", "eps") => cfg.schedule = list(&full, value)?,
                    ("solver", "cells") => s.cells = num(&full, value)?,
                    ("solver", "tolerance") => s.tolerance = positive(&full, value)?,
                    ("solver", "levels") => s.levels = num(&full, value)?,
                    ("solver", "rel_window") => s.rel_window = positive(&full, value)?,
                    ("solver", "scheme") => s.scheme = stepper(value)?,
                    ("solver", "steps") => s.steps = num(&full, value)?,
                    ("solver", "tail_tol") => s.tail_tol = positive(&full, value)?,
                    ("probe", "regime") => {
                        cfg.probe.regime = value.parse().map_err(|e: acclab::heat::HeatError| invalid(&full, value, e))?
                    }
                    ("probe", "x") => x = Some(num::<f64>(&full, value)?),
                    ("probe", "xprime") => xp = Some(num::<f64>(&full, value)?),
                    ("probe", "l_max") => cfg.probe.l_max = num(&full, value)?,
                    ("probe", "times") => cfg.probe.times = Some(list(&full, value)?),
                    ("output", "dir") => cfg.output_dir = Some(PathBuf::from(value.trim())),
                    _ => return Err(ConfigError::UnknownKey { section: section.into(), key: key.into() }),
                }
            }
        }
        match (x, xp) {
            (Some(a), Some(b)) => cfg.probe.point = Some((a, b)),
            (Some(a), None) | (None, Some(a)) => cfg.probe.point = Some((a, a)),
            _ => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        check_schedule(&self.schedule)?;
        if self.solver.cells < 8 {
            return Err(invalid("solver.cells", &self.solver.cells.to_string(), "need at least 8 cells"));
        }
        if self.solver.steps == 0 {
            return Err(invalid("solver.steps", "0", "must be positive"));
        }
        if self.solver.levels == 0 {
            return Err(invalid("solver.levels", "0", "must be positive"));
        }
        if let Some(t) = &self.probe.times {
            if t.is_empty() || t.iter().any(|v| !(*v > 0.0)) {
                return Err(invalid("probe.times", &format!("{t:?}"), "need positive times"));
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Result<WarpFamily, ConfigError> {
        self.family_with(self.model.l_max)
    }

    /// Same model with the probe's angular truncation.
    pub fn heat_family(&self) -> Result<WarpFamily, ConfigError> {
        self.family_with(self.probe.l_max)
    }

    fn family_with(&self, l_max: u32) -> Result<WarpFamily, ConfigError> {
        let m = &self.model;
        let mut fam = match m.profile {
            ProfileKind::Capped => WarpFamily::capped_with(m.n, m.c, m.cap_offset, m.cap_match_radius, l_max)?,
            ProfileKind::Neck => WarpFamily::neck(m.n, m.c, l_max)?,
        };
        fam.outer_bc = m.outer_bc;
        Ok(fam.with_length(m.length))
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { cells: self.solver.cells, tolerance: self.solver.tolerance }
    }

    pub fn flow_options(&self) -> FlowOptions {
        FlowOptions { solver: self.solver_options(), levels: self.solver.levels, rel_window: self.solver.rel_window }
    }

    pub fn probe_spec(&self, regime: Regime) -> ProbeSpec {
        let mut spec = match regime {
            Regime::ScaledF1010 => ProbeSpec::scaled_default(),
            _ => ProbeSpec::interior_default(),
        };
        spec.schedule = self.schedule.clone();
        if let Some(p) = self.probe.point {
            spec.point = p;
        }
        if let Some(t) = &self.probe.times {
            spec.times = t.clone();
        }
        spec.expansion = ExpansionOptions { cells: self.solver.cells, tail_tol: self.solver.tail_tol };
        spec.stepping = StepOptions { cells: self.solver.cells, steps: self.solver.steps, stepper: self.solver.scheme };
        spec
    }
}
