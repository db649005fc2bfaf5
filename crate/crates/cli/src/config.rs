//! Flat key-value experiment configuration with flag overrides.

use std::fs;
use std::path::{Path, PathBuf};

use calabi_core::bounds::{BoundsError, SpecialConvexParams};
use calabi_core::flow::FlowError;
use calabi_core::grid::snapshot::read_snapshot;
use calabi_core::weak::{MollifierSpec, QUARTIC_EXAMPLE};
use calabi_core::{FlowConfig, PeriodicGrid, Scheme};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_POINTS: usize = 64;
pub const DEFAULT_DIM: usize = 2;
pub const DEFAULT_AMPLITUDE: f64 = 0.05;
pub const DEFAULT_H: f64 = 0.25;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {reason}")]
    Read { path: PathBuf, reason: String },
    #[error("config file {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, reason: reason.into() }
}

/// Every recognised key. Absent keys take per-experiment defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// `flat`, `cosine`, `quartic-example` or a snapshot path.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monitor_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adaptive: Option<bool>,
    /// Extra snapshot cadence in steps; 0 keeps only the first and last state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<usize>,
    /// Largest approximation index.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Mollifier radius.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radial_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read { path: path.to_owned(), reason: e.to_string() })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.to_owned(), reason: e.to_string() })
    }

    /// Keys set in `top` replace those in `self`.
    pub fn overlay(self, top: ConfigFile) -> ConfigFile {
        ConfigFile {
            points: top.points.or(self.points),
            dim: top.dim.or(self.dim),
            initial: top.initial.or(self.initial),
            amplitude: top.amplitude.or(self.amplitude),
            scheme: top.scheme.or(self.scheme),
            sigma: top.sigma.or(self.sigma),
            t_end: top.t_end.or(self.t_end),
            dt: top.dt.or(self.dt),
            monitor_every: top.monitor_every.or(self.monitor_every),
            lambda: top.lambda.or(self.lambda),
            adaptive: top.adaptive.or(self.adaptive),
            snapshot_every: top.snapshot_every.or(self.snapshot_every),
            m: top.m.or(self.m),
            h: top.h.or(self.h),
            gradient_bound: top.gradient_bound.or(self.gradient_bound),
            radial_floor: top.radial_floor.or(self.radial_floor),
            energy_bound: top.energy_bound.or(self.energy_bound),
            out: top.out.or(self.out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Flow,
    Energies,
    Legendre,
    Mollify,
    Bounds,
    SmoothQuartic,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Flow => "flow",
            ExperimentKind::Energies => "energies",
            ExperimentKind::Legendre => "legendre",
            ExperimentKind::Mollify => "mollify",
            ExperimentKind::Bounds => "bounds",
            ExperimentKind::SmoothQuartic => "smooth-quartic",
        }
    }

    fn default_initial(self) -> &'static str {
        match self {
            ExperimentKind::Flow | ExperimentKind::Legendre => "cosine",
            _ => QUARTIC_EXAMPLE,
        }
    }

    fn default_m(self) -> usize {
        match self {
            ExperimentKind::SmoothQuartic => 8,
            _ => 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    Flat,
    /// `a·Σᵢ cos(πxᵢ)`.
    Cosine,
    QuarticExample,
    Snapshot(PathBuf),
}

impl Initial {
    pub fn describe(&self) -> String {
        match self {
            Initial::Flat => "flat".into(),
            Initial::Cosine => "cosine".into(),
            Initial::QuarticExample => QUARTIC_EXAMPLE.into(),
            Initial::Snapshot(p) => p.display().to_string(),
        }
    }
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub grid: PeriodicGrid,
    pub initial: Initial,
    /// Snapshot kind, when the initial data is a file.
    pub initial_kind: Option<String>,
    pub amplitude: f64,
    pub flow: FlowConfig,
    pub snapshot_every: usize,
    pub m: usize,
    pub h: f64,
    pub bounds: SpecialConvexParams,
    pub out: PathBuf,
}

fn positive(field: &'static str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn resolve(kind: ExperimentKind, file: ConfigFile) -> Result<Self, ConfigError> {
        let initial = match file.initial.as_deref().unwrap_or(kind.default_initial()) {
            "flat" => Initial::Flat,
            "cosine" => Initial::Cosine,
            QUARTIC_EXAMPLE => Initial::QuarticExample,
            path => {
                let path = PathBuf::from(path);
                if !path.is_file() {
                    return Err(invalid("initial", format!("`{}` is neither a built-in name nor an existing file", path.display())));
                }
                Initial::Snapshot(path)
            }
        };

        let (mut points, mut dim) = (file.points, file.dim);
        let mut initial_kind = None;
        if let Initial::Snapshot(path) = &initial {
            let bytes = fs::read(path).map_err(|e| invalid("initial", e.to_string()))?;
            let (header, _) = read_snapshot(&bytes[..]).map_err(|e| invalid("initial", format!("{}: {e}", path.display())))?;
            for (field, given, found) in [("N", points, header.points), ("dim", dim, header.dim)] {
                if given.is_some_and(|g| g != found) {
                    return Err(invalid(field, format!("{} conflicts with the snapshot value {found}", given.unwrap())));
                }
            }
            if header.half_width.is_some_and(|l| l != 1.0) {
                return Err(invalid("initial", "snapshot grid is not the standard period [-1, 1)"));
            }
            points = Some(header.points);
            dim = Some(header.dim);
            initial_kind = header.kind;
        }
        let points = points.unwrap_or(DEFAULT_POINTS);
        let dim = dim.unwrap_or(DEFAULT_DIM);
        if !(dim == 1 || dim == 2) {
            return Err(invalid("dim", format!("must be 1 or 2, got {dim}")));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(invalid("N", format!("must be a power of two and at least 8, got {points}")));
        }
        let grid = PeriodicGrid::new(dim, points).map_err(|e| invalid("N", e.to_string()))?;

        let defaults = FlowConfig::default();
        let scheme = match &file.scheme {
            Some(s) => s.parse::<Scheme>().map_err(|e| invalid("scheme", e))?,
            None => defaults.scheme,
        };
        let flow = FlowConfig {
            scheme,
            sigma: file.sigma.unwrap_or(defaults.sigma),
            t_end: file.t_end.unwrap_or(defaults.t_end),
            monitor_every: file.monitor_every.unwrap_or(defaults.monitor_every),
            lambda: file.lambda.unwrap_or(defaults.lambda),
            adaptive: file.adaptive.unwrap_or(defaults.adaptive),
            dt: file.dt,
        };
        flow.validate().map_err(|e| match e {
            FlowError::Config { field, reason } => invalid(field, reason),
            other => invalid("flow", other.to_string()),
        })?;

        let h = file.h.unwrap_or(DEFAULT_H);
        MollifierSpec::new(h).map_err(|e| invalid("h", e.to_string()))?;
        let m = file.m.unwrap_or(kind.default_m());
        if m == 0 {
            return Err(invalid("m", "approximation index must be at least 1"));
        }
        let amplitude = file.amplitude.unwrap_or(DEFAULT_AMPLITUDE);
        if !amplitude.is_finite() {
            return Err(invalid("amplitude", "must be finite"));
        }

        let bounds = SpecialConvexParams::new(
            positive("gradient_bound", file.gradient_bound.unwrap_or(1.0))?,
            positive("radial_floor", file.radial_floor.unwrap_or(1.0))?,
            positive("energy_bound", file.energy_bound.unwrap_or(1.0))?,
            dim,
        )
        .map_err(|e| match e {
            BoundsError::Dimension(_) => invalid("dim", e.to_string()),
            other => invalid("bounds", other.to_string()),
        })?;

        let weak_input = matches!(initial, Initial::QuarticExample) || initial_kind.as_deref() == Some("weak");
        if kind == ExperimentKind::SmoothQuartic && !weak_input {
            return Err(invalid("initial", "smooth-quartic needs `quartic-example` or a weak snapshot"));
        }
        if kind == ExperimentKind::Flow && weak_input {
            return Err(invalid("initial", "weak data cannot be flowed directly; use smooth-quartic"));
        }

        Ok(Self {
            kind,
            grid,
            initial,
            initial_kind,
            amplitude,
            flow,
            snapshot_every: file.snapshot_every.unwrap_or(0),
            m,
            h,
            bounds,
            out: file.out.unwrap_or_else(|| PathBuf::from("runs").join(kind.name())),
        })
    }

    /// A fully populated config that reproduces this experiment.
    pub fn to_file(&self) -> ConfigFile {
        let initial = match &self.initial {
            Initial::Snapshot(p) => fs::canonicalize(p).unwrap_or_else(|_| p.clone()).display().to_string(),
            other => other.describe(),
        };
        ConfigFile {
            points: Some(self.grid.points_per_axis()),
            dim: Some(self.grid.dim()),
            initial: Some(initial),
            amplitude: Some(self.amplitude),
            scheme: Some(self.flow.scheme.name().to_string()),
            sigma: Some(self.flow.sigma),
            t_end: Some(self.flow.t_end),
            dt: self.flow.dt,
            monitor_every: Some(self.flow.monitor_every),
            lambda: Some(self.flow.lambda),
            adaptive: Some(self.flow.adaptive),
            snapshot_every: Some(self.snapshot_every),
            m: Some(self.m),
            h: Some(self.h),
            gradient_bound: Some(self.bounds.m),
            radial_floor: Some(self.bounds.c0),
            energy_bound: Some(self.bounds.ce),
            out: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_defaults() {
        let c = ExperimentConfig::resolve(ExperimentKind::Energies, ConfigFile::default()).unwrap();
        assert_eq!((c.grid.points_per_axis(), c.grid.dim()), (64, 2));
        assert_eq!((c.flow.sigma, c.flow.t_end), (0.5, 0.02));
        assert_eq!(c.initial, Initial::QuarticExample);
        assert_eq!(c.m, 16);
    }

    #[test]
    fn rejections_name_the_field() {
        let field = |file: ConfigFile| match ExperimentConfig::resolve(ExperimentKind::Flow, file) {
            Err(ConfigError::Invalid { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(field(ConfigFile { points: Some(12), ..Default::default() }), "N");
        assert_eq!(field(ConfigFile { h: Some(0.7), ..Default::default() }), "h");
        assert_eq!(field(ConfigFile { dim: Some(3), ..Default::default() }), "dim");
        assert_eq!(field(ConfigFile { sigma: Some(1.5), ..Default::default() }), "sigma");
        assert_eq!(field(ConfigFile { scheme: Some("euler".into()), ..Default::default() }), "scheme");
        assert_eq!(field(ConfigFile { initial: Some("/no/such/file".into()), ..Default::default() }), "initial");
        assert_eq!(field(ConfigFile { initial: Some(QUARTIC_EXAMPLE.into()), ..Default::default() }), "initial");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<ConfigFile>("N = 32\ncolour = 1\n").unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn flags_override_file() {
        let file = ConfigFile { points: Some(32), sigma: Some(0.25), ..Default::default() };
        let flags = ConfigFile { points: Some(16), ..Default::default() };
        let merged = file.overlay(flags);
        assert_eq!((merged.points, merged.sigma), (Some(16), Some(0.25)));
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = ExperimentConfig::resolve(ExperimentKind::Flow, ConfigFile { points: Some(16), ..Default::default() }).unwrap();
        let text = toml::to_string(&c.to_file()).unwrap();
        let again = ExperimentConfig::resolve(ExperimentKind::Flow, toml::from_str(&text).unwrap()).unwrap();
        assert_eq!(again.to_file(), c.to_file());
    }
}
