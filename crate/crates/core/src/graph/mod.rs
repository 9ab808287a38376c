//! Interaction data: ingestion, adjacency construction, splits, sampling,
//! unlearning requests and adversarial edge injection.

mod adjacency;
mod attack;
mod interactions;
mod request;
mod split;
pub mod synthetic;

pub use adjacency::{bipartite_adjacency, build_norm_adj};
pub use attack::inject_adversarial_edges;
pub use interactions::{load_edges, read_edges, write_edges, Edge, IdMap, InteractionGraph, LoadedDataset};
pub use request::{sample_negatives, sample_unlearn_set, NormalizedGraph, UnlearnRequest};
pub use split::split_train_test;
