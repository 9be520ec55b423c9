//! Organized-retrieval consensus engine.
//!
//! The pipeline retrieves documents for a query, regroups them into V
//! subsets, generates one length-truncated candidate answer per subset,
//! votes among the candidates by pairwise text similarity, and extends
//! the winning truncated candidate into the final answer. A sweep
//! harness grids over (response length L, vote size V), accounts the
//! extra tokens each configuration spends, and extracts the
//! Pareto-optimal configurations.

pub mod config;
pub mod consensus;
pub mod error;
pub mod generation;
pub mod metrics;
pub mod organization;
pub mod par;
pub mod pipeline;
pub mod retrieval;
pub mod scenario;
pub mod sweep;
pub mod text;
pub mod types;

pub use error::Error;
