//! Parameter optimal transport (POT) for continuous occupancy mapping.
//!
//! Kernel parameters of a Bayesian occupancy model are learned once on small
//! source scans and stored as a dictionary of atoms. New LIDAR scans are then
//! mapped online by matching their hit geometry against every atom (under a
//! grid of rotations) with entropic optimal transport and carrying the learned
//! kernels across the best coupling. Optionally the transported weights are
//! refined as priors of a variational Bayesian logistic regression.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod mapfile;
pub mod model;
pub mod ot;
pub mod pot;
pub mod render;
pub mod repot;
pub mod rng;
pub mod source;
pub mod world;

pub use error::{PotError, Result};

pub use pot::{Candidate, MapMode, MapState, RotationSet, TransportConfig, Transporter};
pub use model::{Kernel, Occupancy, ParameterSet};
pub use eval::{GridMap, MetricsReport};
pub use ot::{Affine2D, CostMatrix, Coupling, SinkhornConfig};
pub use repot::RefineConfig;
pub use source::{Atom, Dictionary, DictionaryConfig, VbTrace};
pub use world::{LabeledPoint, Pose2, Scan, World};

/// 2D point or vector in meters.
pub type Vec2 = nalgebra::Vector2<f64>;
