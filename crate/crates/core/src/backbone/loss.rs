use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::backbone::config::{BackboneConfig, BackboneKind};
use crate::backbone::propagate::forward_tape;
use crate::error::{Error, Result};
use crate::graph::{build_norm_adj, sample_negatives, Edge, InteractionGraph, NormalizedGraph};
use crate::numerics::{DenseMatrix, SparseSymMatrix, Tape, Var};

/// One `(user, positive item, negative item)` training triple. Item ids are in
/// item space (`0..J`), not node space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BprTriple {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

/// Shuffles the edges of `positives` into batches and pairs every positive
/// with one item the user has no edge to in `positives`.
pub fn bpr_batches<R: Rng + ?Sized>(
    positives: &InteractionGraph,
    batch_size: usize,
    rng: &mut R,
) -> Vec<Vec<BprTriple>> {
    let mut order: Vec<Edge> = positives.edges().to_vec();
    order.shuffle(rng);
    let mut triples = Vec::with_capacity(order.len());
    for e in order {
        if let Ok(neg) = sample_negatives(positives, e.user, 1, rng) {
            triples.push(BprTriple {
                user: e.user,
                pos: e.item,
                neg: neg[0],
            });
        }
    }
    triples
        .chunks(batch_size.max(1))
        .map(<[BprTriple]>::to_vec)
        .collect()
}

/// `Σ −log σ(ŷ⁺ − ŷ⁻)` over the batch.
pub fn bpr_loss(tape: &mut Tape, readout: Var, n_users: usize, batch: &[BprTriple]) -> Result<Var> {
    let users: Vec<usize> = batch.iter().map(|t| t.user).collect();
    let pos: Vec<usize> = batch.iter().map(|t| n_users + t.pos).collect();
    let neg: Vec<usize> = batch.iter().map(|t| n_users + t.neg).collect();
    let u = tape.gather_rows(readout, &users)?;
    let p = tape.gather_rows(readout, &pos)?;
    let n = tape.gather_rows(readout, &neg)?;
    let sp = tape.row_dot(u, p)?;
    let sn = tape.row_dot(u, n)?;
    let diff = tape.sub(sp, sn)?;
    let ls = tape.log_sigmoid(diff);
    let total = tape.sum(ls);
    Ok(tape.neg(total))
}

/// Cross-view InfoNCE over matching rows of two views:
/// `Σ_i −log softmax_{i'}(cos(v1_i, v2_{i'})/τ)_i`. Zero rows have cosine 0.
pub fn infonce_loss(tape: &mut Tape, view1: Var, view2: Var, temperature: f64) -> Result<Var> {
    if tape.value(view1).shape() != tape.value(view2).shape() {
        return Err(Error::shape(
            "infonce",
            format!("{:?} vs {:?}", tape.value(view1).shape(), tape.value(view2).shape()),
        ));
    }
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::InvalidArgument("temperature must be positive".into()));
    }
    let a = tape.row_normalize(view1);
    let b = tape.row_normalize(view2);
    let sim = tape.matmul_transb(a, b)?;
    let logits = tape.scale(sim, 1.0 / temperature);
    let lsm = tape.log_softmax_rows(logits);
    let diag = tape.diagonal(lsm)?;
    let total = tape.sum(diag);
    Ok(tape.neg(total))
}

/// Keeps a uniform subset of `|E| − round(rate·|E|)` edges.
pub fn drop_edges<R: Rng + ?Sized>(edges: &[Edge], rate: f64, rng: &mut R) -> Vec<Edge> {
    let drop = (rate * edges.len() as f64).round() as usize;
    let keep = edges.len() - drop.min(edges.len());
    let mut kept: Vec<Edge> = sample(rng, edges.len(), keep)
        .into_iter()
        .map(|k| edges[k])
        .collect();
    kept.sort_unstable();
    kept
}

/// Forward pass that adds `sign(E_l) ⊙ uniform(0, ε)` to every propagated
/// layer. The noise is a constant on the tape.
pub(crate) fn noisy_forward_tape<R: Rng + ?Sized>(
    tape: &mut Tape,
    e0: Var,
    adj: &Arc<SparseSymMatrix>,
    layers: usize,
    eps: f64,
    rng: &mut R,
) -> Result<(Var, Vec<Var>)> {
    let mut out = vec![e0];
    let mut readout = e0;
    for l in 1..layers {
        let clean = tape.spmm(adj, out[l - 1])?;
        let cv = tape.value(clean);
        let noise = DenseMatrix::from_vec(
            cv.rows(),
            cv.cols(),
            cv.values()
                .iter()
                .map(|&v| {
                    let u = if eps > 0.0 { rng.gen_range(0.0..eps) } else { 0.0 };
                    if v > 0.0 {
                        u
                    } else if v < 0.0 {
                        -u
                    } else {
                        0.0
                    }
                })
                .collect(),
        )?;
        let nv = tape.constant(noise);
        let noisy = tape.add(clean, nv)?;
        out.push(noisy);
        readout = tape.add(readout, noisy)?;
    }
    Ok((readout, out))
}

/// Two stochastic views of the readout for the SSL backbones.
pub fn ssl_views<R: Rng + ?Sized>(
    tape: &mut Tape,
    e0: Var,
    graph: &NormalizedGraph,
    config: &BackboneConfig,
    rng: &mut R,
) -> Result<(Var, Var)> {
    let one_view = |tape: &mut Tape, rng: &mut R| -> Result<Var> {
        match config.kind {
            BackboneKind::LightGcn => Err(Error::Contract("lightgcn has no SSL views".into())),
            BackboneKind::SglEd => {
                let g = &graph.graph;
                let kept = drop_edges(g.edges(), config.edge_drop, rng);
                let adj = Arc::new(build_norm_adj(g.n_users(), g.n_items(), &kept));
                Ok(forward_tape(tape, e0, &adj, config.layers)?.0)
            }
            BackboneKind::SimGcl => {
                Ok(noisy_forward_tape(tape, e0, &graph.norm_adj, config.layers, config.noise_eps, rng)?.0)
            }
        }
    };
    let v1 = one_view(tape, rng)?;
    let v2 = one_view(tape, rng)?;
    Ok((v1, v2))
}

/// Handles to the pieces of the backbone training objective.
#[derive(Clone, Copy, Debug)]
pub struct ModelLoss {
    pub readout: Var,
    pub bpr: Var,
    pub reg: Var,
    pub ssl: Option<Var>,
    pub total: Var,
}

/// The backbone's own objective on `Model(e0, graph)`: BPR + L2 on the batch
/// rows of `e0`, plus the weighted InfoNCE term for SSL backbones (computed
/// separately over the batch's distinct users and distinct items).
pub fn model_loss<R: Rng + ?Sized>(
    tape: &mut Tape,
    config: &BackboneConfig,
    e0: Var,
    graph: &NormalizedGraph,
    batch: &[BprTriple],
    rng: &mut R,
) -> Result<ModelLoss> {
    let n_users = graph.graph.n_users();
    let (readout, _) = forward_tape(tape, e0, &graph.norm_adj, config.layers)?;
    let bpr = bpr_loss(tape, readout, n_users, batch)?;

    let mut rows: Vec<usize> = Vec::with_capacity(batch.len() * 3);
    for t in batch {
        rows.extend([t.user, n_users + t.pos, n_users + t.neg]);
    }
    let picked = tape.gather_rows(e0, &rows)?;
    let sq = tape.mul(picked, picked)?;
    let sq_sum = tape.sum(sq);
    let reg = tape.scale(sq_sum, config.reg);
    let mut total = tape.add(bpr, reg)?;

    let mut ssl = None;
    if config.kind.has_ssl() {
        let (v1, v2) = ssl_views(tape, e0, graph, config, rng)?;
        let users: Vec<usize> = batch.iter().map(|t| t.user).collect::<BTreeSet<_>>().into_iter().collect();
        let items: Vec<usize> = batch
            .iter()
            .flat_map(|t| [n_users + t.pos, n_users + t.neg])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut parts = Vec::new();
        for rows in [users, items] {
            if rows.is_empty() {
                continue;
            }
            let a = tape.gather_rows(v1, &rows)?;
            let b = tape.gather_rows(v2, &rows)?;
            parts.push(infonce_loss(tape, a, b, config.ssl_temperature)?);
        }
        if let Some((&first, rest)) = parts.split_first() {
            let mut s = first;
            for &p in rest {
                s = tape.add(s, p)?;
            }
            let weighted = tape.scale(s, config.ssl_weight);
            total = tape.add(total, weighted)?;
            ssl = Some(s);
        }
    }
    Ok(ModelLoss {
        readout,
        bpr,
        reg,
        ssl,
        total,
    })
}
