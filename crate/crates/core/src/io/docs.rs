//! Versioned JSON documents: part graph, ground truth, scenario spec and run report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{PointCloud, Point3, RigidTransform, Vec3};
use crate::metrics::MetricsBundle;
use crate::partgraph::PartGraph;
use crate::pipeline::{Event, PartOutcome, PipelineConfig, PipelineResult};
use crate::scansim::{DeformationSpec, GroundTruth, Hinge, ScanSpec};

pub const SCHEMA_VERSION: u32 = 1;

fn check_version(found: u32, what: &str) -> Result<()> {
    if found == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{what}: unsupported schema_version {found}, expected {SCHEMA_VERSION}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HingeRecord {
    pub parent: u32,
    pub pivot: Point3,
    pub axis: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartRecord {
    pub id: u32,
    pub name: String,
    /// Half-open `[start, end)` runs of source point indices.
    pub point_ranges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hinge: Option<HingeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub schema_version: u32,
    pub parts: Vec<PartRecord>,
    pub edges: Vec<(u32, u32)>,
}

pub fn index_ranges(indices: &[usize]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for &i in indices {
        match out.last_mut() {
            Some(last) if last.1 == i => last.1 = i + 1,
            _ => out.push((i, i + 1)),
        }
    }
    out
}

impl GraphDocument {
    pub fn new(graph: &PartGraph, hinges: &[Hinge]) -> Self {
        let parts = graph
            .parts
            .iter()
            .map(|p| PartRecord {
                id: p.id,
                name: p.name.clone(),
                point_ranges: index_ranges(&p.point_indices),
                hinge: hinges.iter().find(|h| h.part == p.id).map(|h| HingeRecord {
                    parent: h.parent,
                    pivot: h.pivot,
                    axis: h.axis,
                }),
            })
            .collect();
        GraphDocument {
            schema_version: SCHEMA_VERSION,
            parts,
            edges: graph.edges.clone(),
        }
    }

    pub fn hinges(&self) -> Vec<Hinge> {
        self.parts
            .iter()
            .filter_map(|p| {
                p.hinge.as_ref().map(|h| Hinge {
                    part: p.id,
                    parent: h.parent,
                    pivot: h.pivot,
                    axis: h.axis,
                })
            })
            .collect()
    }

    /// Rebuilds the graph over `cloud`. Point ranges must agree with the
    /// cloud's labels when it has them; otherwise they supply the labels.
    pub fn to_graph(&self, cloud: &mut PointCloud) -> Result<PartGraph> {
        check_version(self.schema_version, "part graph")?;
        let mut labels: Vec<Option<u32>> = vec![None; cloud.len()];
        for part in &self.parts {
            for &(start, end) in &part.point_ranges {
                if start >= end || end > cloud.len() {
                    return Err(Error::InvalidArgument(format!(
                        "part {} range {start}..{end} outside a cloud of {} points",
                        part.id,
                        cloud.len()
                    )));
                }
                for slot in &mut labels[start..end] {
                    if slot.replace(part.id).is_some() {
                        return Err(Error::InvalidArgument(format!("point claimed twice near part {}", part.id)));
                    }
                }
            }
        }
        let labels = labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| Error::InvalidArgument(format!("point {i} belongs to no part"))))
            .collect::<Result<Vec<u32>>>()?;
        match &cloud.part_ids {
            Some(existing) if *existing != labels => {
                return Err(Error::InvalidArgument("cloud part_id labels disagree with the graph".into()))
            }
            Some(_) => {}
            None => cloud.part_ids = Some(labels),
        }
        let names: BTreeMap<u32, String> = self.parts.iter().map(|p| (p.id, p.name.clone())).collect();
        let graph = PartGraph::from_labels(cloud, &names, &self.edges)?;
        graph.validate(cloud.len())?;
        Ok(graph)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthDocument {
    pub schema_version: u32,
    pub whole_body: RigidTransform,
    pub part_transforms: BTreeMap<u32, RigidTransform>,
    /// Source index to target index pairs.
    pub correspondences: Vec<(usize, usize)>,
}

impl GroundTruthDocument {
    pub fn new(truth: &GroundTruth) -> Self {
        GroundTruthDocument {
            schema_version: SCHEMA_VERSION,
            whole_body: truth.whole_body,
            part_transforms: truth.part_transforms.clone(),
            correspondences: truth.correspondences.clone(),
        }
    }

    pub fn into_truth(self) -> Result<GroundTruth> {
        check_version(self.schema_version, "ground truth")?;
        Ok(GroundTruth {
            whole_body: self.whole_body,
            part_transforms: self.part_transforms,
            correspondences: self.correspondences,
        })
    }
}

/// How a bundle was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpecDocument {
    pub schema_version: u32,
    pub name: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub scale: f64,
    pub deformation: DeformationSpec,
    pub scan: ScanSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: String,
    pub config: PipelineConfig,
    pub whole_body: RigidTransform,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub whole_body_error: Option<String>,
    pub order: Vec<u32>,
    pub part_transforms: BTreeMap<u32, RigidTransform>,
    pub outcomes: Vec<PartOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsBundle>,
    pub events: Vec<Event>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn new(scenario: impl Into<String>, config: &PipelineConfig, result: &PipelineResult, metrics: Option<MetricsBundle>) -> Self {
        RunReport {
            schema_version: SCHEMA_VERSION,
            scenario: scenario.into(),
            config: config.clone(),
            whole_body: result.whole_body,
            whole_body_error: result.whole_body_error.clone(),
            order: result.order.clone(),
            part_transforms: result.part_transforms.clone(),
            outcomes: result.outcomes.clone(),
            metrics,
            events: result.log.clone(),
            timings: result.timings.clone(),
        }
    }

    pub fn validate(&self, graph: &PartGraph) -> Result<()> {
        check_version(self.schema_version, "run report")?;
        let mut seen: Vec<u32> = self.outcomes.iter().map(|o| o.part).collect();
        seen.sort_unstable();
        if seen != graph.part_ids() {
            return Err(Error::InvalidArgument("report outcomes do not cover each part exactly once".into()));
        }
        Ok(())
    }

    /// The report with wall-clock timings cleared, for reproducibility checks.
    pub fn without_timings(&self) -> RunReport {
        RunReport {
            timings: BTreeMap::new(),
            ..self.clone()
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    s
}

pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}
