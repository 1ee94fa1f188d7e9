//! Clustering by non-parametric smoothing.
//!
//! Cluster memberships are estimated by repeatedly averaging an almost
//! uniform initial assignment over a kNN graph while leaking a fixed
//! fraction `λ` of mass back to the start at every step. The limit of that
//! process is an absorbing Markov chain whose absorption probabilities have a
//! closed form in a handful of columns of `(I - (1 - λ) W)⁻¹`. The number of
//! neighbours `k`, the leak `λ` and the number of clusters `K` are all chosen
//! automatically by a clarity criterion.
//!
//! ```no_run
//! use cns_core::{data, select, DistanceMetric};
//!
//! let (raw, _) = data::load_csv("points.csv".as_ref(), None, true)?;
//! let prepared = data::preprocess(&raw, data::PreprocessOptions::default())?;
//! let fit = select::grid_search(&prepared.data, DistanceMetric::Euclidean, &select::GridSpec::default())?;
//! println!("K = {}", fit.best.clusters);
//! # Ok::<(), cns_core::CnsError>(())
//! ```

pub mod chain;
pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod select;
pub mod synth;

pub use chain::{ResolventColumn, SoftAssignment};
pub use data::{DataMatrix, LabelColumn, LabelVector, PreprocessOptions};
pub use error::{CnsError, ErrorClass, Result};
pub use eval::{ContingencyTable, MetricReport};
pub use graph::{DistanceMetric, TransitionMatrix};
pub use select::{ClusterResult, CriterionReport, CriterionRow, GridSearchOutput, GridSpec, ModelConfig};
