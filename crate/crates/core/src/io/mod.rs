//! On-disk formats: PLY clouds, JSON documents, scenario bundles and run
//! directories.

mod docs;
mod ply;

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

pub use docs::{
    from_json, index_ranges, to_json, GraphDocument, GroundTruthDocument, HingeRecord, PartRecord, RunReport,
    ScenarioSpecDocument, SCHEMA_VERSION,
};
pub use ply::{parse_ply, ply_string, read_ply, write_ply, PLY_COMMENT};

use crate::error::{Error, Result};
use crate::features::CorrespondenceSet;
use crate::geom::PointCloud;
use crate::partgraph::PartGraph;
use crate::scansim::{GroundTruth, Hinge, ModelKind, Scenario, DEFAULT_SCALE};

pub const SOURCE_FILE: &str = "source.ply";
pub const GRAPH_FILE: &str = "graph.json";
pub const TARGET_FILE: &str = "target.ply";
pub const TRUTH_FILE: &str = "ground_truth.json";
pub const SPEC_FILE: &str = "scenario.json";
pub const REPORT_FILE: &str = "report.json";
pub const REGISTERED_FILE: &str = "registered.ply";
pub const MATCHES_FILE: &str = "correspondences.json";
pub const METRICS_FILE: &str = "metrics.json";

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.context(path.display().to_string()))
}

pub fn load_cloud(path: &Path) -> Result<PointCloud> {
    let file = with_path(path, fs::File::open(path).map_err(Error::from))?;
    with_path(path, read_ply(BufReader::new(file)))
}

pub fn save_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    with_path(path, fs::write(path, ply_string(cloud)).map_err(Error::from))
}

pub fn load_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = with_path(path, fs::read_to_string(path).map_err(Error::from))?;
    with_path(path, from_json(&text))
}

pub fn save_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    with_path(path, fs::write(path, to_json(value)).map_err(Error::from))
}

/// Everything registration needs, as read from or written to a directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBundle {
    pub name: String,
    pub source: PointCloud,
    pub graph: PartGraph,
    pub hinges: Vec<Hinge>,
    pub target: PointCloud,
    pub truth: Option<GroundTruth>,
    pub spec: Option<ScenarioSpecDocument>,
}

impl ScenarioBundle {
    pub fn from_scenario(scenario: &Scenario, preset: Option<&str>, seed: Option<u64>) -> Self {
        ScenarioBundle {
            name: scenario.name.clone(),
            source: scenario.source.cloud.clone(),
            graph: scenario.source.graph.clone(),
            hinges: scenario.source.hinges.clone(),
            target: scenario.target.clone(),
            truth: Some(scenario.truth.clone()),
            spec: Some(ScenarioSpecDocument {
                schema_version: SCHEMA_VERSION,
                name: scenario.name.clone(),
                model: scenario.source.kind.name().to_string(),
                preset: preset.map(str::to_string),
                seed,
                scale: DEFAULT_SCALE,
                deformation: scenario.deformation.clone(),
                scan: scenario.scan.clone(),
            }),
        }
    }

    pub fn model_kind(&self) -> Option<ModelKind> {
        self.spec.as_ref().and_then(|s| s.model.parse().ok())
    }

    pub fn noise_sigma(&self) -> f64 {
        self.spec.as_ref().map_or(0.0, |s| s.scan.noise_sigma)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        with_path(dir, fs::create_dir_all(dir).map_err(Error::from))?;
        save_cloud(&dir.join(SOURCE_FILE), &self.source)?;
        save_json(&dir.join(GRAPH_FILE), &GraphDocument::new(&self.graph, &self.hinges))?;
        save_cloud(&dir.join(TARGET_FILE), &self.target)?;
        if let Some(truth) = &self.truth {
            save_json(&dir.join(TRUTH_FILE), &GroundTruthDocument::new(truth))?;
        }
        if let Some(spec) = &self.spec {
            save_json(&dir.join(SPEC_FILE), spec)?;
        }
        Ok(())
    }

    /// Reads a bundle. Ground truth and spec are optional files.
    pub fn read(dir: &Path) -> Result<Self> {
        let mut source = load_cloud(&dir.join(SOURCE_FILE))?;
        let graph_path = dir.join(GRAPH_FILE);
        let graph_doc: GraphDocument = load_json(&graph_path)?;
        let graph = with_path(&graph_path, graph_doc.to_graph(&mut source))?;
        let target = load_cloud(&dir.join(TARGET_FILE))?;
        let optional = |name: &str| -> Option<PathBuf> {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        let truth = match optional(TRUTH_FILE) {
            Some(p) => {
                let doc: GroundTruthDocument = load_json(&p)?;
                Some(with_path(&p, doc.into_truth())?)
            }
            None => None,
        };
        let spec = match optional(SPEC_FILE) {
            Some(p) => Some(load_json::<ScenarioSpecDocument>(&p)?),
            None => None,
        };
        let name = spec
            .as_ref()
            .map(|s| s.name.clone())
            .or_else(|| dir.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "scenario".into());
        Ok(ScenarioBundle {
            name,
            source,
            hinges: graph_doc.hinges(),
            graph,
            target,
            truth,
            spec,
        })
    }
}

/// Outputs of one registration run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub report: RunReport,
    pub registered: PointCloud,
    pub correspondences: CorrespondenceSet,
}

impl RunArtifacts {
    pub fn write(&self, dir: &Path) -> Result<()> {
        with_path(dir, fs::create_dir_all(dir).map_err(Error::from))?;
        save_json(&dir.join(REPORT_FILE), &self.report)?;
        save_cloud(&dir.join(REGISTERED_FILE), &self.registered)?;
        save_json(&dir.join(MATCHES_FILE), &self.correspondences)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(RunArtifacts {
            report: load_json(&dir.join(REPORT_FILE))?,
            registered: load_cloud(&dir.join(REGISTERED_FILE))?,
            correspondences: load_json(&dir.join(MATCHES_FILE))?,
        })
    }
}
