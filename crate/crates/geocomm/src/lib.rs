//! Dynamic community detection on temporal networks via Grassmannian
//! geodesic subspace tracking.

pub mod cluster;
pub mod error;
pub mod exec;
pub mod geodesic;
pub mod graph;
pub mod linalg;
pub mod mcm;
pub mod metrics;
pub mod pipeline;
pub mod sbm;

pub use error::{Error, Result};
