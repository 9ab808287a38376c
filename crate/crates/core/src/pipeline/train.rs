use std::path::Path;

use log::debug;

use crate::backbone::{bpr_batches, forward, model_loss, BackboneConfig, ScoreModel};
use crate::error::{Error, Result};
use crate::graph::{InteractionGraph, NormalizedGraph};
use crate::numerics::{derive_seed, seeded_rng, AdamState, DenseMatrix, Tape};
use crate::pipeline::checkpoint::{load_matrix, save_matrix};

/// Initialization half-width of `E₀`.
pub const INIT_SCALE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

/// Layer-0 embeddings, the readout they produce on the model's own graph, and
/// the per-epoch loss log.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub config: BackboneConfig,
    pub n_users: usize,
    pub n_items: usize,
    pub e0: DenseMatrix,
    pub readout: DenseMatrix,
    pub log: Vec<f64>,
}

impl TrainedModel {
    /// Builds the readout of `e0` over `graph`.
    pub fn from_e0(config: &BackboneConfig, graph: &NormalizedGraph, e0: DenseMatrix, log: Vec<f64>) -> Result<Self> {
        let readout = forward(&e0, &graph.norm_adj, config.layers)?.readout;
        Ok(Self {
            config: config.clone(),
            n_users: graph.graph.n_users(),
            n_items: graph.graph.n_items(),
            e0,
            readout,
            log,
        })
    }

    pub fn scorer(&self) -> ScoreModel {
        ScoreModel::new(self.n_users, self.n_items, self.readout.clone()).expect("readout rows match node count")
    }

    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        save_matrix(&dir.join(format!("{name}.e0.mat")), &self.e0)?;
        save_matrix(&dir.join(format!("{name}.readout.mat")), &self.readout)
    }

    pub fn load(dir: &Path, name: &str, config: &BackboneConfig, n_users: usize) -> Result<Self> {
        let e0 = load_matrix(&dir.join(format!("{name}.e0.mat")))?;
        let readout = load_matrix(&dir.join(format!("{name}.readout.mat")))?;
        if e0.shape() != readout.shape() || e0.rows() < n_users {
            return Err(Error::Checkpoint {
                path: dir.join(name),
                message: format!("e0 {:?} and readout {:?} disagree", e0.shape(), readout.shape()),
            });
        }
        Ok(Self {
            config: config.clone(),
            n_users,
            n_items: e0.rows() - n_users,
            e0,
            readout,
            log: Vec::new(),
        })
    }
}

pub(crate) fn check_finite(value: f64, context: impl FnOnce() -> String) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { context: context() })
    }
}

/// Adam on the backbone's own objective from a fresh initialization. A
/// non-finite loss aborts with [`Error::NonFinite`]; nothing is written.
pub fn train_backbone(config: &BackboneConfig, graph: &InteractionGraph, opts: &TrainOptions) -> Result<TrainedModel> {
    config.validate()?;
    let normalized = NormalizedGraph::new(graph.clone());
    let mut init_rng = seeded_rng(derive_seed(opts.seed, 0x1417));
    let mut e0 = DenseMatrix::random_uniform(graph.n_nodes(), config.dim, -INIT_SCALE, INIT_SCALE, &mut init_rng);
    let mut adam = AdamState::new(opts.lr, &[e0.shape()]);
    let mut log = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        let mut rng = seeded_rng(derive_seed(opts.seed, 1 + epoch as u64));
        let mut total = 0.0;
        for batch in bpr_batches(graph, opts.batch_size, &mut rng) {
            let mut tape = Tape::new();
            let v = tape.param(e0.clone());
            let loss = model_loss(&mut tape, config, v, &normalized, &batch, &mut rng)?;
            let value = tape.scalar(loss.total).unwrap_or(f64::NAN);
            check_finite(value, || format!("backbone loss at epoch {epoch}"))?;
            let grads = tape.backward(loss.total)?;
            adam.step(&mut [&mut e0], &[grads.get(v).expect("trainable leaf")])?;
            total += value;
        }
        debug!("backbone epoch {epoch}: loss {total:.6}");
        log.push(total);
    }
    TrainedModel::from_e0(config, &normalized, e0, log)
}
