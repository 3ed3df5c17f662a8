//! Reconstruction of radially symmetric, deforming objects (pottery on a
//! wheel) from one or more depth-sensor point-cloud streams.
//!
//! The pipeline detects the turntable in each sensor cloud, registers all
//! clouds into a frame whose origin is the plate centre and whose +y axis is
//! the revolution axis, accumulates point density over `(rho, h)` annuli,
//! and tracks the object profile, a five-knot Catmull-Rom curve, with a
//! particle filter scored against the accumulator.

pub mod accumulator;
pub mod bench;
pub mod error;
pub mod filter;
pub mod geometry;
pub mod metrics;
pub mod pipeline;
pub mod registration;
pub mod rng;
pub mod spline;
pub mod synth;
pub mod table;

pub use error::{Error, Result};
pub use geometry::{FrameId, Point2, Point3, PointCloud, PolarFrame, PolarPoint};
