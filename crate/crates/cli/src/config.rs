//! Run configuration: serializable, merged from a JSON file and flags.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use manifold_deflation::datasets::Rect;
use manifold_deflation::deflation::Method;
use manifold_deflation::solver::SolverOptions;
use manifold_deflation::tangent::Refinement;
use manifold_deflation::Error;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    Scurve,
    Sphere,
    Box,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub name: DatasetName,
    pub n: usize,
    pub noise_halfwidth: f64,
    pub hole: Option<Rect>,
    pub lengths: [f64; 3],
    pub stretch_ns: f64,
    pub stretch_ew: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            name: DatasetName::Scurve,
            n: 3000,
            noise_halfwidth: 0.1,
            hole: Some(Rect::default_hole()),
            lengths: [9.0 * PI, 3.0 * PI, PI],
            stretch_ns: 1.05,
            stretch_ew: 1.02,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphSpec {
    /// Exactly one of `k` and `radius` is set.
    pub k: Option<usize>,
    pub radius: Option<f64>,
    pub bandwidth_multiplier: f64,
}

impl Default for GraphSpec {
    fn default() -> Self {
        GraphSpec {
            k: Some(15),
            radius: None,
            bandwidth_multiplier: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// lambda 3, projection plus rescaling.
    Synthetic,
    /// lambda 2, unit-norm rows.
    HighDimensional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodSpec {
    pub method: Method,
    pub m: usize,
    pub preset: Preset,
    /// Unset means the preset's value.
    pub lambda: Option<f64>,
    pub refinement: Option<Refinement>,
    pub include_self: bool,
    pub vfi: bool,
    /// Unset means the default ridge.
    pub alpha: Option<f64>,
}

impl Default for MethodSpec {
    fn default() -> Self {
        MethodSpec {
            method: Method::Deflation,
            m: 2,
            preset: Preset::Synthetic,
            lambda: None,
            refinement: None,
            include_self: true,
            vfi: false,
            alpha: None,
        }
    }
}

impl MethodSpec {
    pub fn resolved_lambda(&self) -> f64 {
        self.lambda.unwrap_or(match self.preset {
            Preset::Synthetic => 3.0,
            Preset::HighDimensional => 2.0,
        })
    }

    pub fn resolved_refinement(&self) -> Refinement {
        self.refinement.unwrap_or(match self.preset {
            Preset::Synthetic => Refinement::ProjectRescale,
            Preset::HighDimensional => Refinement::RowNormalize,
        })
    }

    /// Writes the preset's choices into the explicit fields.
    pub fn resolve(&mut self) {
        self.lambda = Some(self.resolved_lambda());
        self.refinement = Some(self.resolved_refinement());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Margin {
    Absolute(f64),
    /// Multiple of the graph bandwidth.
    Bandwidths(f64),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSpec {
    pub margin: Option<Margin>,
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub input: Option<PathBuf>,
    pub embedding: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub fields_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub graph: GraphSpec,
    pub method: MethodSpec,
    pub solver: SolverOptions,
    pub evaluation: EvaluationSpec,
    pub paths: Paths,
}

/// Sidecar path for an output file: same stem, `.json` extension.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

/// Reads a config file. Sidecars written by this tool are accepted too;
/// their `run` member is the config.
pub fn load(path: &Path) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::parameter(format!("{}: {e}", path.display())))?;
    let value = match value {
        serde_json::Value::Object(mut map) if map.contains_key("run") => map.remove("run").unwrap(),
        other => other,
    };
    serde_json::from_value(value).map_err(|e| Error::parameter(format!("{}: {e}", path.display())))
}

/// Reads the `run` member of a sidecar, if the file exists.
pub fn read_sidecar(path: &Path) -> Result<Option<serde_json::Value>, Error> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| Error::parameter(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.method.resolve();
        c.evaluation.margin = Some(Margin::Bandwidths(1.0));
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"graph": {"kk": 3}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"colour": 1}"#).is_err());
    }

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.graph.k, Some(15));
        assert_eq!(c.graph.bandwidth_multiplier, 5.0);
        assert_eq!(c.method.resolved_lambda(), 3.0);
        let hd = MethodSpec {
            preset: Preset::HighDimensional,
            ..MethodSpec::default()
        };
        assert_eq!(hd.resolved_lambda(), 2.0);
        assert_eq!(hd.resolved_refinement(), Refinement::RowNormalize);
    }
}
