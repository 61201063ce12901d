//! Balanced, fault-tolerant clustering and data-dependent dispatch.
//!
//! Clustering under cluster-size bounds `[ℓ, L]` with `p`-fold replication for
//! the k-median, k-means and k-center objectives, plus the tooling needed to
//! use such clusterings to route data to workers in distributed learning.

pub mod baselines;
pub mod bicriteria;
pub mod dispatch;
pub mod error;
pub mod eval;
pub mod harness;
pub mod instances;
pub mod io;
pub mod kcenter_exact;
pub mod kmeanspp;
pub mod lp;
pub mod mcf;
pub mod model;
pub mod persist;
pub mod stability;

pub use error::{Error, ErrorClass, Result};
pub use eval::{
    averaged_kmeans_objective, check_capacities, class_entropy, evaluate, ViolationReport,
};
pub use model::{
    cost_matrix, Assignment, Center, Constraints, CostKind, CostMatrix, DistMatrix, Geometry,
    Instance, Objective, PointSet, Slot,
};
