//! Part-whole registration for rigid objects with movable parts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod features;
pub mod geom;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod partgraph;
pub mod pipeline;
pub mod rigidfit;
pub mod runner;
pub mod scansim;
pub mod seed;

pub use error::{Error, Result};
pub use geom::{aabb_of, apply_transform, scale_cloud, Aabb, Point3, PointCloud, RigidTransform, Vec3};
pub use nn::NnIndex;
