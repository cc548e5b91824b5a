use std::path::PathBuf;
use std::sync::Arc;

use mdfrac::geometry::Point;
use mdfrac::meshdim::{build_benchmark_mesh_with, default_parameters, MeshOptions, MixedDimMesh, ParameterTable, Preset};
use mdfrac::spaces::ProjectionOptions;
use mdfrac::verify::StudySetup;
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = include_str!("../schema/run-config.schema.json");

/// Dirichlet pressure on the tagged part of the boundary.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryData {
    /// The preset's own pressure drop.
    #[default]
    Preset,
    Zero,
    /// `g = 1 − x[axis]`.
    LinearDrop { axis: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Conservation,
    Rates,
    Infsup,
    /// Every check that applies; rates only when more than one level runs.
    All,
}

impl Check {
    pub fn name(&self) -> &'static str {
        match self {
            Check::Conservation => "conservation",
            Check::Rates => "rates",
            Check::Infsup => "infsup",
            Check::All => "all",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureFlags {
    pub nonmatching_3d_mortars: bool,
    pub infsup_probe: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub preset: Option<Preset>,
    /// Level-0 mesh hierarchy in the JSON mesh format.
    #[serde(default)]
    pub mesh: Option<PathBuf>,
    #[serde(default)]
    pub mesh_options: MeshOptions,
    /// Overrides the preset's parameter table; required with `mesh`.
    #[serde(default)]
    pub parameters: Option<ParameterTable>,
    #[serde(default)]
    pub boundary: BoundaryData,
    #[serde(default = "one")]
    pub levels: usize,
    #[serde(default = "one")]
    pub reference_extra: usize,
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub checks: Vec<Check>,
    #[serde(default)]
    pub features: FeatureFlags,
}

fn one() -> usize {
    1
}

fn default_tol() -> f64 {
    1e-10
}

fn default_output() -> PathBuf {
    PathBuf::from("mdfrac-out")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: None,
            mesh: None,
            mesh_options: MeshOptions::default(),
            parameters: None,
            boundary: BoundaryData::Preset,
            levels: 1,
            reference_extra: 1,
            rho: 0.0,
            tol: default_tol(),
            output: default_output(),
            checks: Vec::new(),
            features: FeatureFlags::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config: {e}"))
    }

    pub fn wants(&self, check: Check) -> bool {
        self.checks.contains(&check) || self.checks.contains(&Check::All)
    }

    /// Checks everything that can be checked without solving and builds the
    /// study description.
    pub fn resolve(&self) -> Result<StudySetup, String> {
        let base = match (&self.preset, &self.mesh) {
            (Some(_), Some(_)) => return Err("config: give either `preset` or `mesh`, not both".into()),
            (None, None) => return Err("config: one of `preset` or `mesh` is required".into()),
            (Some(p), None) => build_benchmark_mesh_with(*p, 0, &self.mesh_options).map_err(|e| e.to_string())?,
            (None, Some(path)) => MixedDimMesh::read_json(path).map_err(|e| format!("{}: {e}", path.display()))?,
        };
        if self.levels == 0 {
            return Err("config: `levels` must be at least 1".into());
        }
        if self.reference_extra == 0 {
            return Err("config: `reference_extra` must be at least 1".into());
        }
        if !(self.tol > 0.0 && self.tol <= 1e-6) {
            return Err(format!("config: `tol` must lie in (0, 1e-6], got {}", self.tol));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(format!("config: `rho` must be >= 0, got {}", self.rho));
        }
        if self.checks.contains(&Check::Rates) && self.levels < 2 {
            return Err("config: the rates check needs at least 2 levels".into());
        }
        let params = match (&self.parameters, &self.preset) {
            (Some(p), _) => p.clone(),
            (None, Some(preset)) => default_parameters(*preset),
            (None, None) => return Err("config: `parameters` is required with a mesh file".into()),
        };
        params.check().map_err(|e| e.to_string())?;
        for sub in &base.subdomains {
            params.get(&sub.feature).map_err(|e| e.to_string())?;
        }
        let dirichlet: Arc<dyn Fn(&Point) -> f64 + Send + Sync> = match self.boundary {
            BoundaryData::Preset => {
                let preset = self.preset.ok_or("config: boundary `preset` needs a preset")?;
                let g = preset.boundary_pressure();
                Arc::new(move |x: &Point| g(x))
            }
            BoundaryData::Zero => Arc::new(|_: &Point| 0.0),
            BoundaryData::LinearDrop { axis } => {
                if axis >= base.ambient_dim {
                    return Err(format!("config: linear_drop axis {axis} outside the {}D domain", base.ambient_dim));
                }
                Arc::new(move |x: &Point| 1.0 - x[axis])
            }
        };
        let setup = StudySetup {
            name: self.preset.map_or_else(|| "mesh".to_string(), |p| p.name().to_string()),
            base,
            params,
            dirichlet,
            source: Arc::new(|_, _| 0.0),
            projection: ProjectionOptions { clipping_3d: self.features.nonmatching_3d_mortars },
            tol: self.tol,
            rho: self.rho,
        };
        let finest = if self.levels > 1 { self.levels - 1 + self.reference_extra } else { 0 };
        setup.mesh(finest).map_err(|e| e.to_string())?;
        Ok(setup)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_json(r#"{"preset": "square2d", "level": 2}"#).unwrap_err();
        assert!(err.contains("unknown field"), "{err}");
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::from_json(r#"{"preset": "single-fracture-2d"}"#).unwrap();
        assert_eq!(cfg.levels, 1);
        assert_eq!(cfg.boundary, BoundaryData::Preset);
        assert!(cfg.resolve().is_ok());
    }

    #[test]
    fn boundary_selector_forms() {
        let cfg = RunConfig::from_json(r#"{"preset": "unfractured-2d", "boundary": {"linear_drop": {"axis": 0}}}"#).unwrap();
        assert_eq!(cfg.boundary, BoundaryData::LinearDrop { axis: 0 });
        let cfg = RunConfig::from_json(r#"{"preset": "unfractured-2d", "boundary": {"linear_drop": {"axis": 2}}}"#).unwrap();
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn preset_and_mesh_are_exclusive() {
        let cfg = RunConfig { preset: Some(Preset::Unfractured2d), mesh: Some("m.json".into()), ..RunConfig::default() };
        assert!(cfg.resolve().err().unwrap().contains("not both"));
        assert!(RunConfig::default().resolve().is_err());
    }

    #[test]
    fn schema_parses() {
        let schema: serde_json::Value = serde_json::from_str(SCHEMA).unwrap();
        assert_eq!(schema["additionalProperties"], serde_json::Value::Bool(false));
    }
}
