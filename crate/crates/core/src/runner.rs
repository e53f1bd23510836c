//! The generate, register and evaluate workflows shared by the CLI and tests.

use std::path::Path;

use crate::error::{Error, Result};
use crate::features::CorrespondenceSet;
use crate::geom::{aabb_of, PointCloud};
use crate::io::{RunArtifacts, RunReport, ScenarioBundle};
use crate::metrics::{compute_bundle, MetricsBundle, MetricsInput};
use crate::pipeline::{run_pipeline, PipelineConfig, PipelineResult};
use crate::scansim::{generate_scenario, Experiment, ModelKind};

/// Histogram bins per source diagonal.
const HISTOGRAM_BINS: f64 = 200.0;

pub fn generate(preset: Experiment, model: ModelKind, seed: u64) -> Result<ScenarioBundle> {
    let scenario = generate_scenario(preset, model, seed)?;
    Ok(ScenarioBundle::from_scenario(&scenario, Some(preset.name()), Some(seed)))
}

pub fn generate_to(preset: Experiment, model: ModelKind, seed: u64, out: &Path) -> Result<ScenarioBundle> {
    let bundle = generate(preset, model, seed)?;
    bundle.write(out)?;
    Ok(bundle)
}

/// ICP cut-off in units of the scan noise level, when the noise is known.
pub const ICP_DISTANCE_SIGMAS: f64 = 3.0;

/// Model defaults; the ICP cut-off follows the scan noise when it is known.
pub fn default_config(bundle: &ScenarioBundle) -> PipelineConfig {
    let mut cfg = bundle.model_kind().map(PipelineConfig::for_model).unwrap_or_default();
    let sigma = bundle.noise_sigma();
    if sigma > 0.0 {
        cfg.icp_distance = Some((ICP_DISTANCE_SIGMAS * sigma).min(cfg.d_max));
    }
    cfg
}

/// Twice the scan noise level.
pub fn default_tolerance(bundle: &ScenarioBundle) -> f64 {
    2.0 * bundle.noise_sigma()
}

fn bin_width(bundle: &ScenarioBundle) -> Result<f64> {
    let diag = aabb_of(&bundle.source, None)?.diagonal();
    Ok(if diag > 0.0 { diag / HISTOGRAM_BINS } else { 1.0 })
}

fn metrics_for(
    bundle: &ScenarioBundle,
    report: &RunReport,
    registered: &PointCloud,
    predicted: &CorrespondenceSet,
    tolerance: f64,
) -> Result<MetricsBundle> {
    let truth = bundle.truth.as_ref().ok_or(Error::MissingGroundTruth)?;
    if !(tolerance >= 0.0) {
        return Err(Error::InvalidArgument("tolerance must be non-negative".into()));
    }
    if registered.len() != bundle.source.len() {
        return Err(Error::InvalidArgument(format!(
            "registered cloud has {} points, source has {}",
            registered.len(),
            bundle.source.len()
        )));
    }
    compute_bundle(&MetricsInput {
        source: &bundle.source,
        graph: &bundle.graph,
        registered,
        target: &bundle.target,
        truth,
        predicted,
        estimates: &report.part_transforms,
        tolerance,
        bin_width: bin_width(bundle)?,
    })
}

/// Runs the pipeline in auto mode. Metrics are attached when the bundle has
/// ground truth.
pub fn register(bundle: &ScenarioBundle, cfg: &PipelineConfig, tolerance: Option<f64>) -> Result<RunArtifacts> {
    cfg.validate()?;
    let result = run_pipeline(&bundle.source, &bundle.graph, &bundle.target, bundle.truth.as_ref(), cfg)?;
    let cfg = PipelineConfig {
        interactive: false,
        ..cfg.clone()
    };
    artifacts(bundle, &cfg, result, tolerance)
}

/// Packs a finished pipeline run into its report, registered cloud and
/// matches.
pub fn artifacts(
    bundle: &ScenarioBundle,
    cfg: &PipelineConfig,
    result: PipelineResult,
    tolerance: Option<f64>,
) -> Result<RunArtifacts> {
    let mut report = RunReport::new(&bundle.name, cfg, &result, None);
    if bundle.truth.is_some() {
        let tol = tolerance.unwrap_or_else(|| default_tolerance(bundle));
        report.metrics = Some(metrics_for(bundle, &report, &result.registered, &result.correspondences, tol)?);
    }
    Ok(RunArtifacts {
        report,
        registered: result.registered,
        correspondences: result.correspondences,
    })
}

/// Recomputes metrics from a run's artifacts.
pub fn evaluate(bundle: &ScenarioBundle, run: &RunArtifacts, tolerance: Option<f64>) -> Result<MetricsBundle> {
    run.report.validate(&bundle.graph)?;
    let tol = tolerance.unwrap_or_else(|| default_tolerance(bundle));
    metrics_for(bundle, &run.report, &run.registered, &run.correspondences, tol)
}
