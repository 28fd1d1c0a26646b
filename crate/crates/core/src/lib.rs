//! Approximate k-nearest-neighbor graph construction and merging.
//!
//! The crate covers the whole pipeline from raw vectors to search:
//!
//! * [`construct`] builds graphs from scratch, either exactly
//!   ([`construct::brute_force_graph`]) or with NN-Descent.
//! * [`merge`] combines graphs: symmetric merge of two built subgraphs,
//!   joint merge of a raw id set into a built graph, and hierarchical
//!   construction by repeated joint merges over growing blocks.
//! * [`diversify`] prunes occluded edges to produce search adjacency.
//! * [`search`] runs greedy top-down descent plus best-first search on the
//!   bottom layer.
//! * [`eval`] computes recall and scanning rate.
//!
//! Every distance evaluation performed by a build goes through a
//! [`metric::PairDistance`] implementation, which is how scanning rates are
//! measured and how tests observe which pairs were compared.

pub mod construct;
pub mod dataset;
mod descent;
pub mod diversify;
pub mod error;
pub mod eval;
pub mod graph;
pub mod hierarchy;
pub mod io;
pub mod merge;
pub mod metric;
pub mod search;

pub use construct::{brute_force_graph, nn_descent, DescentParams};
pub use dataset::{generate_sparse, generate_uniform, Dataset, Record};
pub use descent::{BuildReport, IterationStat};
pub use diversify::{diversify_graph, diversify_list, Adjacency, DiversifyParams};
pub use error::{Error, Result};
pub use eval::{recall_at_k, scanning_rate};
pub use graph::{KnnGraph, Neighbor, NeighborList, SplitGraph};
pub use hierarchy::{Hierarchy, Pyramid};
pub use merge::{h_merge, j_merge, s_merge, MergeParams};
pub use metric::{DistanceCounter, Evaluator, Metric, PairDistance};
pub use search::{best_first_search, greedy_descend, hierarchical_search, SearchParams, SearchResult};
