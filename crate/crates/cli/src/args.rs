//! Command-line surface. Flags mirror the pipeline configuration fields.

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use partreg_core::io::{load_json, ScenarioBundle};
use partreg_core::pipeline::{Backend, PipelineConfig};
use partreg_core::runner;
use partreg_core::scansim::{Experiment, ModelKind};

#[derive(Debug, Parser)]
#[command(name = "partreg", version, about = "Part-whole registration of articulated rigid objects")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandLine,
}

#[derive(Debug, Subcommand)]
pub enum CommandLine {
    /// Write a synthetic scenario bundle for one experiment preset.
    Generate(GenerateArgs),
    /// Register a scenario in auto mode and write the report.
    Register(RegisterArgs),
    /// Recompute metrics from a scenario and a registration run.
    Evaluate(EvaluateArgs),
    /// Serve an interactive review session over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// e1, e2, e3 or e4.
    pub preset: Experiment,
    /// lander or robot.
    pub model: ModelKind,
    #[arg(long, env = "PARTREG_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Exactly one of a bundle directory or a preset/model pair.
#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario bundle directory.
    #[arg(long, conflicts_with_all = ["preset", "model"], required_unless_present = "preset")]
    pub scenario: Option<PathBuf>,
    /// Generate the scenario in memory from a preset.
    #[arg(long, requires = "model")]
    pub preset: Option<Experiment>,
    #[arg(long, requires = "preset")]
    pub model: Option<ModelKind>,
    /// Seed for an in-memory preset scenario.
    #[arg(long, default_value_t = 0)]
    pub scenario_seed: u64,
}

impl ScenarioArgs {
    pub fn load(&self) -> partreg_core::Result<ScenarioBundle> {
        match (&self.scenario, self.preset, self.model) {
            (Some(dir), _, _) => ScenarioBundle::read(dir),
            (None, Some(p), Some(m)) => runner::generate(p, m, self.scenario_seed),
            _ => Err(partreg_core::Error::InvalidArgument("give --scenario or --preset with --model".into())),
        }
    }
}

#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// JSON pipeline configuration; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub f_retention: Option<f64>,
    #[arg(long)]
    pub d_max: Option<f64>,
    #[arg(long)]
    pub n_min: Option<usize>,
    #[arg(long)]
    pub theta_c: Option<f64>,
    #[arg(long)]
    pub top_n: Option<usize>,
    #[arg(long)]
    pub min_part_points: Option<usize>,
    #[arg(long)]
    pub roi_padding: Option<f64>,
    #[arg(long)]
    pub joint_tolerance: Option<f64>,
    #[arg(long)]
    pub junction_radius_fraction: Option<f64>,
    #[arg(long)]
    pub max_anchors: Option<usize>,
    #[arg(long)]
    pub ransac_iterations: Option<usize>,
    #[arg(long)]
    pub inlier_distance: Option<f64>,
    #[arg(long)]
    pub icp_distance: Option<f64>,
    #[arg(long)]
    pub icp_iterations: Option<usize>,
    #[arg(long)]
    pub icp_epsilon: Option<f64>,
    #[arg(long)]
    pub max_ransac_retries: Option<usize>,
    #[arg(long)]
    pub fitness_threshold: Option<f64>,
    #[arg(long)]
    pub max_icp_retries: Option<usize>,
    /// oracle or descriptor.
    #[arg(long)]
    pub backend: Option<Backend>,
    #[arg(long)]
    pub outlier_fraction: Option<f64>,
    #[arg(long, env = "PARTREG_SEED")]
    pub seed: Option<u64>,
}

macro_rules! overlay {
    ($cfg:ident, $args:ident, $($field:ident => $($path:ident).+),* $(,)?) => {
        $(if let Some(v) = $args.$field { $cfg.$($path).+ = v; })*
    };
}

impl ConfigArgs {
    /// Model defaults, then the config file, then flags and `PARTREG_SEED`.
    pub fn resolve(&self, bundle: &ScenarioBundle) -> partreg_core::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_json(path)?,
            None => runner::default_config(bundle),
        };
        overlay!(cfg, self,
            f_retention => f_retention,
            d_max => d_max,
            n_min => n_min,
            theta_c => theta_c,
            top_n => top_n,
            min_part_points => min_part_points,
            roi_padding => roi_padding,
            joint_tolerance => joint_tolerance,
            junction_radius_fraction => junction_radius_fraction,
            max_anchors => max_anchors,
            ransac_iterations => ransac_iterations,
            icp_iterations => icp_iterations,
            icp_epsilon => icp_epsilon,
            max_ransac_retries => auto_policy.max_ransac_retries,
            fitness_threshold => auto_policy.fitness_threshold,
            max_icp_retries => auto_policy.max_icp_retries,
            backend => backend,
            outlier_fraction => oracle.outlier_fraction,
            seed => seed,
        );
        if self.inlier_distance.is_some() {
            cfg.inlier_distance = self.inlier_distance;
        }
        if self.icp_distance.is_some() {
            cfg.icp_distance = self.icp_distance;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Metric tolerance; defaults to twice the scan noise.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Directory written by `register`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Metrics file; defaults to metrics.json inside the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Pause at checkpoints for reviewer commands.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub interactive: bool,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Directory of static review UI assets.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}
