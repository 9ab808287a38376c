//! Training stages: backbone training, encoder pre-training, unlearning,
//! fine-tuning and the retraining baseline, plus checkpoint I/O.

pub mod checkpoint;
pub mod protocol;
mod train;
mod unlearn;

pub use train::{train_backbone, TrainOptions, TrainedModel, INIT_SCALE};
pub use unlearn::{
    finetune, load_encoder, pretrain_ie, retrain_baseline, save_encoder, unlearn, FinetuneOptions, PretrainOptions,
    RoundLog,
};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::graph::{inject_adversarial_edges, Edge, InteractionGraph};
use crate::numerics::{derive_seed, seeded_rng};

impl ExperimentConfig {
    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.backbone_epochs,
            lr: self.lr_backbone,
            batch_size: self.batch_size,
            seed: derive_seed(self.seed, 1),
        }
    }

    pub fn pretrain_options(&self) -> PretrainOptions {
        PretrainOptions {
            rounds: self.pretrain_rounds,
            epochs: self.pretrain_epochs,
            lr: self.lr_pretrain,
            rho_sim: self.rho_sim,
            batch_size: self.batch_size,
            seed: derive_seed(self.seed, 2),
        }
    }

    pub fn finetune_options(&self) -> FinetuneOptions {
        FinetuneOptions {
            epochs: self.finetune_epochs,
            lr: self.lr_finetune,
            batch_size: self.batch_size,
            seed: derive_seed(self.seed, 3),
        }
    }

    /// Number of adversarial edges for a training graph of `n_edges`.
    pub fn attack_count(&self, n_edges: usize) -> usize {
        ((self.attack_ratio / 100.0 * n_edges as f64).round() as usize).max(1)
    }
}

/// Injects `attack_ratio`% implausible edges into `train`, ranked by the
/// clean model's scores. Returns the attacked graph and the injected edges.
pub fn attack(cfg: &ExperimentConfig, clean: &TrainedModel, train: &InteractionGraph) -> Result<(InteractionGraph, Vec<Edge>)> {
    if clean.n_users != train.n_users() || clean.n_items != train.n_items() {
        return Err(Error::shape(
            "attack",
            format!("model {}x{} vs graph {}x{}", clean.n_users, clean.n_items, train.n_users(), train.n_items()),
        ));
    }
    let scorer = clean.scorer();
    let mut rng = seeded_rng(derive_seed(cfg.seed, 4));
    inject_adversarial_edges(
        train,
        |u, i| scorer.score(u, i),
        cfg.attack_count(train.n_edges()),
        cfg.attack_tail_factor,
        &mut rng,
    )
}
