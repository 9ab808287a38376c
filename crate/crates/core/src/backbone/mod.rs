//! The recommenders being unlearned: LightGCN propagation with optional SGL
//! (edge dropout) or SimGCL (feature noise) contrastive objectives.

mod config;
mod loss;
mod propagate;

pub use config::{BackboneConfig, BackboneKind};
pub use loss::{bpr_batches, bpr_loss, drop_edges, infonce_loss, model_loss, ssl_views, BprTriple, ModelLoss};
pub use propagate::{forward, forward_tape, predict_scores, EmbeddingState, ScoreModel};
