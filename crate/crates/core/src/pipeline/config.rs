use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{DEFAULT_FEATURE_DIM, DEFAULT_ROTARY_BASE, DEFAULT_THETA_C};
use crate::partgraph::{DEFAULT_JUNCTION_RADIUS_FRACTION, DEFAULT_MAX_ANCHORS};
use crate::rigidfit::{DEFAULT_ICP_EPSILON, DEFAULT_ICP_ITERATIONS, DEFAULT_RANSAC_ITERATIONS};
use crate::scansim::ModelKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Ground-truth matches with injected wrong pairs.
    #[default]
    Oracle,
    /// Frozen kernel descriptors, rotary encoding and dual-softmax.
    Descriptor,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oracle" => Ok(Backend::Oracle),
            "descriptor" => Ok(Backend::Descriptor),
            other => Err(Error::InvalidArgument(format!("unknown back-end {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoPolicy {
    pub max_ransac_retries: usize,
    pub fitness_threshold: f64,
    pub max_icp_retries: usize,
}

impl Default for AutoPolicy {
    fn default() -> Self {
        AutoPolicy {
            max_ransac_retries: 5,
            fitness_threshold: 0.6,
            max_icp_retries: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleSettings {
    pub outlier_fraction: f64,
    /// Jitter of true targets before snapping to a kept target point.
    pub position_sigma: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            outlier_fraction: 0.3,
            position_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescriptorSettings {
    pub dim: usize,
    pub rotary_base: f64,
    /// Kernel radius as a multiple of the median point spacing.
    pub radius_spacings: f64,
    /// Cap on points per side fed to the dense score matrix.
    pub max_points: usize,
}

impl Default for DescriptorSettings {
    fn default() -> Self {
        DescriptorSettings {
            dim: DEFAULT_FEATURE_DIM,
            rotary_base: DEFAULT_ROTARY_BASE,
            radius_spacings: 4.0,
            max_points: 1500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub f_retention: f64,
    pub d_max: f64,
    pub n_min: usize,
    pub theta_c: f64,
    pub top_n: usize,
    pub min_part_points: usize,
    pub roi_padding: f64,
    pub joint_tolerance: f64,
    pub junction_radius_fraction: f64,
    pub max_anchors: usize,
    pub ransac_iterations: usize,
    /// Defaults to half of `d_max` when unset.
    pub inlier_distance: Option<f64>,
    /// ICP correspondence cut-off. Defaults to `d_max` when unset.
    pub icp_distance: Option<f64>,
    pub icp_iterations: usize,
    pub icp_epsilon: f64,
    pub auto_policy: AutoPolicy,
    pub interactive: bool,
    pub backend: Backend,
    pub oracle: OracleSettings,
    pub descriptor: DescriptorSettings,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            f_retention: 0.5,
            d_max: 20.0,
            n_min: 5,
            theta_c: DEFAULT_THETA_C,
            top_n: 512,
            min_part_points: 50,
            roi_padding: 0.1,
            joint_tolerance: 10.0,
            junction_radius_fraction: DEFAULT_JUNCTION_RADIUS_FRACTION,
            max_anchors: DEFAULT_MAX_ANCHORS,
            ransac_iterations: DEFAULT_RANSAC_ITERATIONS,
            inlier_distance: None,
            icp_distance: None,
            icp_iterations: DEFAULT_ICP_ITERATIONS,
            icp_epsilon: DEFAULT_ICP_EPSILON,
            auto_policy: AutoPolicy::default(),
            interactive: false,
            backend: Backend::Oracle,
            oracle: OracleSettings::default(),
            descriptor: DescriptorSettings::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Defaults tuned per test subject (the robot uses a lower retention).
    pub fn for_model(kind: ModelKind) -> Self {
        PipelineConfig {
            f_retention: match kind {
                ModelKind::Lander => 0.5,
                ModelKind::Robot => 0.4,
            },
            ..Default::default()
        }
    }

    pub fn inlier_distance(&self) -> f64 {
        self.inlier_distance.unwrap_or(self.d_max / 2.0)
    }

    pub fn icp_distance(&self) -> f64 {
        self.icp_distance.unwrap_or(self.d_max)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.f_retention > 0.0 && self.f_retention <= 1.0) {
            return fail("f_retention must lie in (0, 1]");
        }
        let positive = [
            ("d_max", self.d_max),
            ("theta_c", self.theta_c),
            ("joint_tolerance", self.joint_tolerance),
            ("junction_radius_fraction", self.junction_radius_fraction),
            ("icp_epsilon", self.icp_epsilon),
            ("inlier_distance", self.inlier_distance()),
            ("icp_distance", self.icp_distance()),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return fail(&format!("{name} must be positive"));
            }
        }
        if !(self.roi_padding >= 0.0) {
            return fail("roi_padding must be non-negative");
        }
        if self.n_min < 3 || self.top_n < 3 {
            return fail("n_min and top_n must be at least 3");
        }
        if self.ransac_iterations == 0 || self.icp_iterations == 0 {
            return fail("iteration budgets must be positive");
        }
        if !(0.0..=1.0).contains(&self.oracle.outlier_fraction) {
            return fail("oracle outlier fraction must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.auto_policy.fitness_threshold) {
            return fail("fitness threshold must lie in [0, 1]");
        }
        if self.descriptor.dim == 0 || !self.descriptor.dim.is_multiple_of(6) {
            return fail("descriptor dimension must be a positive multiple of 6");
        }
        Ok(())
    }
}
