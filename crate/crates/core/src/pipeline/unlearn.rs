use std::path::Path;

use log::debug;

use crate::backbone::{bpr_batches, BackboneConfig};
use crate::encoder::{EncoderConfig, EncoderMode, InfluenceEncoder, MlpLayer};
use crate::error::Result;
use crate::graph::{sample_unlearn_set, InteractionGraph, UnlearnRequest};
use crate::losses::{total_loss, LossWeights, ObjectiveInputs};
use crate::numerics::{derive_seed, seeded_rng, AdamState};
use crate::pipeline::checkpoint::{load_matrix, save_matrix};
use crate::pipeline::train::{check_finite, train_backbone, TrainOptions, TrainedModel};

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainOptions {
    pub rounds: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Simulated request size, percent of edges.
    pub rho_sim: f64,
    pub batch_size: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

/// Mean total loss of every epoch of one pre-training round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundLog {
    pub round: usize,
    pub unlearn_edges: usize,
    pub epoch_losses: Vec<f64>,
}

/// Trains `H₀` and `W_η` on simulated requests drawn from `graph`, the graph
/// `model` was trained on. The model itself is never modified.
pub fn pretrain_ie(
    model: &TrainedModel,
    graph: &InteractionGraph,
    encoder_config: &EncoderConfig,
    weights: &LossWeights,
    opts: &PretrainOptions,
) -> Result<(InfluenceEncoder, Vec<RoundLog>)> {
    weights.validate()?;
    let mut init_rng = seeded_rng(derive_seed(opts.seed, 0xE4C0));
    let mut encoder = InfluenceEncoder::new(encoder_config.clone(), graph.n_nodes(), model.config.dim, &mut init_rng)?;
    let mut adam = AdamState::new(opts.lr, &[encoder.h0.shape(), encoder.w_eta.shape()]);
    let mut logs = Vec::with_capacity(opts.rounds);
    for round in 0..opts.rounds {
        let round_seed = derive_seed(opts.seed, 0x5100 + round as u64);
        let mut rng = seeded_rng(round_seed);
        let request = sample_unlearn_set(graph, opts.rho_sim, &mut rng)?;
        let mut epoch_losses = Vec::with_capacity(opts.epochs);
        for epoch in 0..opts.epochs {
            let mut rng = seeded_rng(derive_seed(round_seed, 1 + epoch as u64));
            let batches = bpr_batches(&request.residual().graph, opts.batch_size, &mut rng);
            let mut sum = 0.0;
            for batch in &batches {
                let obj = total_loss(
                    ObjectiveInputs {
                        backbone: &model.config,
                        encoder: &encoder,
                        mode: EncoderMode::Pretrain,
                        e0: &model.e0,
                        train_e0: false,
                        readout: &model.readout,
                        request: &request,
                        batch,
                        weights,
                    },
                    &mut rng,
                )?;
                let value = obj.total_value();
                check_finite(value, || format!("pre-training loss at round {round}, epoch {epoch}"))?;
                let grads = obj.tape.backward(obj.total)?;
                let (gh, gw) = (grads.get(obj.encoder.h0), grads.get(obj.encoder.w_eta));
                adam.step(
                    &mut [&mut encoder.h0, &mut encoder.w_eta],
                    &[gh.expect("trainable h0"), gw.expect("trainable w_eta")],
                )?;
                sum += value;
            }
            let mean = sum / batches.len().max(1) as f64;
            debug!("pretrain round {round} epoch {epoch}: loss {mean:.6}");
            epoch_losses.push(mean);
        }
        logs.push(RoundLog {
            round,
            unlearn_edges: request.delta().len(),
            epoch_losses,
        });
    }
    Ok((encoder, logs))
}

/// Encodes the request and propagates the revised embeddings over the
/// residual graph. No training happens.
pub fn unlearn(model: &TrainedModel, encoder: &InfluenceEncoder, request: &UnlearnRequest) -> Result<TrainedModel> {
    let encoded = encoder.encode(request.idm_norm(), &model.e0, &model.readout)?;
    TrainedModel::from_e0(&model.config, request.residual(), encoded, Vec::new())
}

/// Adjusts the model's `E₀` and the encoder MLP on the backbone loss plus the
/// weighted unlearning loss over the residual graph. `H₀`, `W_η` and the input
/// model are left untouched; zero epochs reproduce [`unlearn`].
pub fn finetune(
    model: &TrainedModel,
    encoder: &InfluenceEncoder,
    request: &UnlearnRequest,
    lambda_u: f64,
    opts: &FinetuneOptions,
) -> Result<(TrainedModel, InfluenceEncoder)> {
    let weights = LossWeights {
        lambda_u,
        lambda_p: 0.0,
        lambda_c: 0.0,
        ..LossWeights::default()
    };
    let mut encoder = encoder.clone();
    let mut e0 = model.e0.clone();
    let mut shapes = vec![e0.shape()];
    shapes.extend(encoder.mlp.iter().flat_map(|l| [l.weight.shape(), l.bias.shape()]));
    let mut adam = AdamState::new(opts.lr, &shapes);
    let mut log = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        let mut rng = seeded_rng(derive_seed(opts.seed, 0xF1E0 + epoch as u64));
        let batches = bpr_batches(&request.residual().graph, opts.batch_size, &mut rng);
        let mut sum = 0.0;
        for batch in &batches {
            let obj = total_loss(
                ObjectiveInputs {
                    backbone: &model.config,
                    encoder: &encoder,
                    mode: EncoderMode::Finetune,
                    e0: &e0,
                    train_e0: true,
                    readout: &model.readout,
                    request,
                    batch,
                    weights: &weights,
                },
                &mut rng,
            )?;
            let value = obj.total_value();
            check_finite(value, || format!("fine-tuning loss at epoch {epoch}"))?;
            let grads = obj.tape.backward(obj.total)?;
            let mut grad_refs = vec![grads.get(obj.e0).expect("trainable e0")];
            for v in obj.encoder.mlp_flat() {
                grad_refs.push(grads.get(v).expect("trainable mlp"));
            }
            let mut params = vec![&mut e0];
            params.extend(encoder.mlp_params_mut());
            adam.step(&mut params, &grad_refs)?;
            sum += value;
        }
        debug!("finetune epoch {epoch}: loss {sum:.6}");
        log.push(sum);
    }
    let encoded = encoder.encode(request.idm_norm(), &e0, &model.readout)?;
    let tuned = TrainedModel::from_e0(&model.config, request.residual(), encoded, log)?;
    Ok((tuned, encoder))
}

/// Fresh training on the residual graph only.
pub fn retrain_baseline(config: &BackboneConfig, request: &UnlearnRequest, opts: &TrainOptions) -> Result<TrainedModel> {
    train_backbone(config, &request.residual().graph, opts)
}

pub fn save_encoder(dir: &Path, name: &str, encoder: &InfluenceEncoder) -> Result<()> {
    for (part, m) in encoder.named_matrices() {
        save_matrix(&dir.join(format!("{name}.{part}.mat")), m)?;
    }
    Ok(())
}

pub fn load_encoder(dir: &Path, name: &str, config: &EncoderConfig) -> Result<InfluenceEncoder> {
    let load = |part: &str| load_matrix(&dir.join(format!("{name}.{part}.mat")));
    let mlp = (0..config.mlp_layers)
        .map(|l| {
            Ok(MlpLayer {
                weight: load(&format!("mlp{l}_w"))?,
                bias: load(&format!("mlp{l}_b"))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InfluenceEncoder {
        config: config.clone(),
        h0: load("h0")?,
        w_eta: load("w_eta")?,
        mlp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{forward, BackboneKind};
    use crate::graph::{Edge, NormalizedGraph};

    fn graph() -> InteractionGraph {
        let edges = (0..6).flat_map(|u| [Edge::new(u, u), Edge::new(u, (u + 1) % 6), Edge::new(u, (u + 2) % 6)]);
        InteractionGraph::new(6, 6, edges).unwrap()
    }

    fn trained(kind: BackboneKind) -> TrainedModel {
        let cfg = BackboneConfig { kind, dim: 4, ..BackboneConfig::default() };
        train_backbone(&cfg, &graph(), &TrainOptions { epochs: 20, lr: 0.02, batch_size: 8, seed: 1 }).unwrap()
    }

    fn pre_opts(rounds: usize) -> PretrainOptions {
        PretrainOptions { rounds, epochs: 3, lr: 1e-2, rho_sim: 10.0, batch_size: 8, seed: 4 }
    }

    #[test]
    fn zero_rounds_leave_initialization() {
        let m = trained(BackboneKind::LightGcn);
        let (enc, logs) = pretrain_ie(&m, &graph(), &EncoderConfig::default(), &LossWeights::default(), &pre_opts(0)).unwrap();
        let fresh = InfluenceEncoder::new(EncoderConfig::default(), 12, 4, &mut seeded_rng(derive_seed(4, 0xE4C0))).unwrap();
        assert_eq!(enc, fresh);
        assert!(logs.is_empty());
    }

    #[test]
    fn pretraining_leaves_the_model_alone_and_is_deterministic() {
        for kind in BackboneKind::ALL {
            let m = trained(kind);
            let snapshot = m.clone();
            let run = || pretrain_ie(&m, &graph(), &EncoderConfig::default(), &LossWeights::default(), &pre_opts(2)).unwrap();
            let (a, logs) = run();
            let (b, _) = run();
            assert_eq!(m.e0.to_le_bytes(), snapshot.e0.to_le_bytes());
            assert_eq!(m.readout.to_le_bytes(), snapshot.readout.to_le_bytes());
            assert_eq!(a, b);
            assert_eq!(logs.len(), 2);
            assert_eq!(logs[0].unlearn_edges, 2);
            // only H₀ and W_η move
            let fresh = InfluenceEncoder::new(EncoderConfig::default(), 12, 4, &mut seeded_rng(derive_seed(4, 0xE4C0))).unwrap();
            assert_ne!(a.h0, fresh.h0);
            assert_eq!(a.mlp, fresh.mlp);
        }
    }

    #[test]
    fn empty_request_with_zero_encoder_keeps_scores() {
        let m = trained(BackboneKind::LightGcn);
        let request = UnlearnRequest::new(&graph(), []).unwrap();
        let enc = InfluenceEncoder::zeroed(EncoderConfig::default(), 12, 4);
        let out = unlearn(&m, &enc, &request).unwrap();
        assert_eq!(out.readout, m.readout);
    }

    #[test]
    fn unlearn_matches_hand_chain() {
        let m = trained(BackboneKind::SimGcl);
        let request = UnlearnRequest::new(&graph(), [Edge::new(2, 3), Edge::new(4, 4)]).unwrap();
        let enc = InfluenceEncoder::new(EncoderConfig { init_scale: 0.2, ..EncoderConfig::default() }, 12, 4, &mut seeded_rng(7)).unwrap();
        let out = unlearn(&m, &enc, &request).unwrap();
        assert_eq!(request.residual().graph.n_edges(), graph().n_edges() - 2);
        let encoded = enc.mlp_forward(&enc.delta(request.idm_norm(), &m.readout).unwrap()).unwrap().add(&m.e0).unwrap();
        let residual = NormalizedGraph::new(request.residual().graph.clone());
        let expected = forward(&encoded, &residual.norm_adj, 3).unwrap().readout;
        assert!(out.readout.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn finetune_properties() {
        let m = trained(BackboneKind::SglEd);
        let request = UnlearnRequest::new(&graph(), [Edge::new(1, 1), Edge::new(3, 5)]).unwrap();
        let (enc, _) = pretrain_ie(&m, &graph(), &EncoderConfig::default(), &LossWeights::default(), &pre_opts(1)).unwrap();
        let base = unlearn(&m, &enc, &request).unwrap();
        let opts = |epochs| FinetuneOptions { epochs, lr: 1e-2, batch_size: 8, seed: 9 };

        let (zero, same_enc) = finetune(&m, &enc, &request, 0.5, &opts(0)).unwrap();
        assert_eq!(zero.readout, base.readout);
        assert_eq!(same_enc, enc);

        let (a, enc_a) = finetune(&m, &enc, &request, 0.5, &opts(3)).unwrap();
        let (b, _) = finetune(&m, &enc, &request, 0.5, &opts(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(enc_a.h0.to_le_bytes(), enc.h0.to_le_bytes());
        assert_eq!(enc_a.w_eta.to_le_bytes(), enc.w_eta.to_le_bytes());
        assert_ne!(enc_a.mlp, enc.mlp);

        let mean_score = |t: &TrainedModel| {
            let s = t.scorer();
            request.delta().iter().map(|e| s.score(e.user, e.item)).sum::<f64>()
        };
        assert!(mean_score(&a) < mean_score(&base));
    }

    #[test]
    fn empty_request_retrain_equals_training() {
        let cfg = BackboneConfig { dim: 4, ..BackboneConfig::default() };
        let opts = TrainOptions { epochs: 3, lr: 0.01, batch_size: 8, seed: 2 };
        let request = UnlearnRequest::new(&graph(), []).unwrap();
        assert_eq!(retrain_baseline(&cfg, &request, &opts).unwrap(), train_backbone(&cfg, &graph(), &opts).unwrap());
    }

    #[test]
    fn encoder_round_trip() {
        let enc = InfluenceEncoder::new(EncoderConfig::default(), 5, 3, &mut seeded_rng(1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_encoder(dir.path(), "encoder", &enc).unwrap();
        assert_eq!(load_encoder(dir.path(), "encoder", &EncoderConfig::default()).unwrap(), enc);
    }
}
