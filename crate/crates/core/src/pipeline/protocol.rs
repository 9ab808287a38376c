//! The attack-then-unlearn evaluation protocol, composed from the stages.

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::evaluation::{sample_mi_negatives, MetricsReport};
use crate::graph::{split_train_test, Edge, InteractionGraph, UnlearnRequest};
use crate::numerics::{derive_seed, seeded_rng};
use crate::pipeline::{attack, finetune, pretrain_ie, retrain_baseline, train_backbone, unlearn, RoundLog, TrainedModel};

#[derive(Clone, Debug)]
pub struct DataSplit {
    pub full: InteractionGraph,
    pub train: InteractionGraph,
    pub test: Vec<Edge>,
}

pub fn split_dataset(cfg: &ExperimentConfig, full: InteractionGraph) -> Result<DataSplit> {
    let (train, test) = split_train_test(&full, cfg.test_fraction, &mut seeded_rng(derive_seed(cfg.seed, 9)))?;
    Ok(DataSplit {
        train: full.with_edges(train)?,
        full,
        test,
    })
}

/// A model trained on a graph with injected edges, and the request to remove them.
#[derive(Clone, Debug)]
pub struct AttackSetup {
    pub attacked: InteractionGraph,
    pub adversarial: Vec<Edge>,
    pub model: TrainedModel,
    pub request: UnlearnRequest,
    /// Never-interacted pairs, as many as adversarial edges.
    pub negatives: Vec<Edge>,
}

pub fn prepare_attack(cfg: &ExperimentConfig, data: &DataSplit, clean: &TrainedModel) -> Result<AttackSetup> {
    let (attacked, adversarial) = attack(cfg, clean, &data.train)?;
    let model = train_backbone(&cfg.backbone, &attacked, &cfg.train_options())?;
    let request = UnlearnRequest::new(&attacked, adversarial.iter().copied())?;
    let known = data.full.with_edges(data.full.edges().iter().chain(&adversarial).copied())?;
    let negatives = sample_mi_negatives(&known, adversarial.len(), &mut seeded_rng(derive_seed(cfg.seed, 5)));
    Ok(AttackSetup {
        attacked,
        adversarial,
        model,
        request,
        negatives,
    })
}

impl AttackSetup {
    /// Metrics of `after` relative to the attacked model. `before` ranks
    /// against the attacked graph, every other stage against the residual.
    pub fn evaluate(&self, cfg: &ExperimentConfig, data: &DataSplit, after: &TrainedModel, is_before: bool) -> Result<MetricsReport> {
        let train = if is_before { &self.attacked } else { &self.request.residual().graph };
        MetricsReport::evaluate(
            &self.model.scorer(),
            &after.scorer(),
            train,
            &data.test,
            &self.adversarial,
            &self.negatives,
            cfg.top_n,
        )
    }
}

#[derive(Clone, Debug)]
pub struct UnlearnOutcome {
    pub ours0: TrainedModel,
    pub ours: TrainedModel,
    pub pretrain_log: Vec<RoundLog>,
    pub report0: MetricsReport,
    pub report: MetricsReport,
}

/// Pre-trains the encoder on the attacked graph, unlearns the adversarial
/// edges, fine-tunes, and evaluates both outputs.
pub fn unlearn_and_evaluate(cfg: &ExperimentConfig, data: &DataSplit, setup: &AttackSetup) -> Result<UnlearnOutcome> {
    let (encoder, pretrain_log) = pretrain_ie(&setup.model, &setup.attacked, &cfg.encoder, &cfg.weights, &cfg.pretrain_options())?;
    let ours0 = unlearn(&setup.model, &encoder, &setup.request)?;
    let (ours, _) = finetune(&setup.model, &encoder, &setup.request, cfg.weights.lambda_u, &cfg.finetune_options())?;
    Ok(UnlearnOutcome {
        report0: setup.evaluate(cfg, data, &ours0, false)?,
        report: setup.evaluate(cfg, data, &ours, false)?,
        ours0,
        ours,
        pretrain_log,
    })
}

pub fn retrain_and_evaluate(cfg: &ExperimentConfig, data: &DataSplit, setup: &AttackSetup) -> Result<(TrainedModel, MetricsReport)> {
    let model = retrain_baseline(&cfg.backbone, &setup.request, &cfg.train_options())?;
    let report = setup.evaluate(cfg, data, &model, false)?;
    Ok((model, report))
}
