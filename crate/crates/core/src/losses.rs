//! Objectives used to pre-train and fine-tune the influence encoder.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;

use crate::backbone::{model_loss, BackboneConfig, BprTriple, ModelLoss};
use crate::encoder::{delta_tape, mlp_tape, EncoderMode, EncoderVars, InfluenceEncoder};
use crate::error::{Error, Result};
use crate::graph::{build_norm_adj, Edge, UnlearnRequest};
use crate::numerics::{DenseMatrix, SparseSymMatrix, Tape, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_u: f64,
    pub lambda_p: f64,
    pub lambda_c: f64,
    pub tau_p: f64,
    pub tau_c: f64,
    /// Fraction of unlearning edges removed for the contrast view.
    pub dropout: f64,
    /// Contrast every IEM layer against its dropped-IDM view instead of only
    /// the last one.
    pub contrast_all_layers: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_u: 0.5,
            lambda_p: 0.01,
            lambda_c: 1e-3,
            tau_p: 1.0,
            tau_c: 1.0,
            dropout: 0.1,
            contrast_all_layers: false,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_u < 0.0 || self.lambda_p < 0.0 || self.lambda_c < 0.0 {
            return Err(Error::InvalidArgument("loss weights must be non-negative".into()));
        }
        if !(self.tau_p > 0.0 && self.tau_c > 0.0) {
            return Err(Error::InvalidArgument("temperatures must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument("idm dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// `Σ −log σ(−ẽ_iᵀẽ_j)` over the unlearned edges; zero for an empty set.
pub fn unlearning_loss(tape: &mut Tape, readout: Var, n_users: usize, delta: &[Edge]) -> Result<Var> {
    if delta.is_empty() {
        return Ok(tape.constant(DenseMatrix::scalar(0.0)));
    }
    let users: Vec<usize> = delta.iter().map(|e| e.user).collect();
    let items: Vec<usize> = delta.iter().map(|e| n_users + e.item).collect();
    let u = tape.gather_rows(readout, &users)?;
    let i = tape.gather_rows(readout, &items)?;
    let dots = tape.row_dot(u, i)?;
    let neg = tape.neg(dots);
    let ls = tape.log_sigmoid(neg);
    let total = tape.sum(ls);
    Ok(tape.neg(total))
}

/// Per-pair log-softmax of `ē_uᵀē_j⁺/τ` against the positive items of the
/// same batch. Returns a `B × 1` column.
pub fn psi(tape: &mut Tape, readout: Var, n_users: usize, pairs: &[Edge], tau: f64) -> Result<Var> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("psi needs at least one pair".into()));
    }
    let users: Vec<usize> = pairs.iter().map(|e| e.user).collect();
    let items: Vec<usize> = pairs.iter().map(|e| n_users + e.item).collect();
    let u = tape.gather_rows(readout, &users)?;
    let i = tape.gather_rows(readout, &items)?;
    let logits = tape.matmul_transb(u, i)?;
    let logits = tape.scale(logits, 1.0 / tau);
    let lsm = tape.log_softmax_rows(logits);
    tape.diagonal(lsm)
}

/// `‖Ψ_new − Ψ_old‖²`.
pub fn preserving_loss(tape: &mut Tape, psi_new: Var, psi_old: Var) -> Result<Var> {
    let d = tape.sub(psi_new, psi_old)?;
    let sq = tape.mul(d, d)?;
    Ok(tape.sum(sq))
}

/// Removes `⌈ρ·|E_Δ|⌉` unlearning edges (never all of them) and returns the
/// normalized adjacency of the rest.
pub fn idm_dropout<R: Rng + ?Sized>(
    delta: &[Edge],
    n_users: usize,
    n_items: usize,
    rho: f64,
    rng: &mut R,
) -> Result<SparseSymMatrix> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("dropout rate {rho} outside [0, 1)")));
    }
    let n = delta.len();
    let remove = ((rho * n as f64).ceil() as usize).min(n.saturating_sub(1));
    let mut kept: Vec<Edge> = sample(rng, n, n - remove).into_iter().map(|k| delta[k]).collect();
    kept.sort_unstable();
    Ok(build_norm_adj(n_users, n_items, &kept))
}

/// `Σ_i −log softmax_i(cos(h_i, h'_i)/τ)` where the softmax runs over the
/// same-index cosines of all nodes. Zero rows have cosine 0.
pub fn contrast_loss(tape: &mut Tape, h: Var, h_prime: Var, tau: f64) -> Result<Var> {
    let a = tape.row_normalize(h);
    let b = tape.row_normalize(h_prime);
    let cos = tape.row_dot(a, b)?;
    let row = tape.transpose(cos);
    let logits = tape.scale(row, 1.0 / tau);
    let lsm = tape.log_softmax_rows(logits);
    let total = tape.sum(lsm);
    Ok(tape.neg(total))
}

/// Everything the combined objective reads.
#[derive(Clone, Copy, Debug)]
pub struct ObjectiveInputs<'a> {
    pub backbone: &'a BackboneConfig,
    pub encoder: &'a InfluenceEncoder,
    pub mode: EncoderMode,
    /// Layer-0 embeddings of the model being unlearned.
    pub e0: &'a DenseMatrix,
    pub train_e0: bool,
    /// Frozen readout of the model before unlearning.
    pub readout: &'a DenseMatrix,
    pub request: &'a UnlearnRequest,
    /// Triples from the residual graph.
    pub batch: &'a [BprTriple],
    pub weights: &'a LossWeights,
}

/// A built objective: the tape and handles to its pieces. Terms whose weight
/// is zero are not built.
pub struct Objective {
    pub tape: Tape,
    pub e0: Var,
    pub encoder: EncoderVars,
    pub encoded_e0: Var,
    pub model: ModelLoss,
    pub unlearn: Option<Var>,
    pub preserve: Option<Var>,
    pub contrast: Option<Var>,
    pub total: Var,
}

impl Objective {
    pub fn value(&self, v: Var) -> f64 {
        self.tape.scalar(v).unwrap_or(f64::NAN)
    }

    pub fn total_value(&self) -> f64 {
        self.value(self.total)
    }
}

/// `L_M + λ_u·L_u + λ_p·L_p + λ_c·L_c`, with `L_M` evaluated on the encoded
/// embeddings over the residual graph.
pub fn total_loss<R: Rng + ?Sized>(inputs: ObjectiveInputs<'_>, rng: &mut R) -> Result<Objective> {
    let ObjectiveInputs {
        backbone,
        encoder,
        mode,
        e0,
        train_e0,
        readout,
        request,
        batch,
        weights,
    } = inputs;
    let n_users = request.n_users();
    let mut tape = Tape::new();
    let e0_var = tape.leaf(e0.clone(), train_e0);
    let vars = EncoderVars::new(&mut tape, encoder, mode);
    let frozen = tape.constant(readout.clone());

    let (delta, h_layers) = delta_tape(&mut tape, &encoder.config, &vars, request.idm_norm(), frozen)?;
    let shift = mlp_tape(&mut tape, &vars, delta)?;
    let encoded = tape.add(shift, e0_var)?;

    let model = model_loss(&mut tape, backbone, encoded, request.residual(), batch, rng)?;
    let mut total = model.total;

    let mut unlearn = None;
    if weights.lambda_u > 0.0 {
        let l = unlearning_loss(&mut tape, model.readout, n_users, request.delta())?;
        let w = tape.scale(l, weights.lambda_u);
        total = tape.add(total, w)?;
        unlearn = Some(l);
    }

    let mut preserve = None;
    if weights.lambda_p > 0.0 && !batch.is_empty() {
        let pairs: Vec<Edge> = batch.iter().map(|t| Edge::new(t.user, t.pos)).collect();
        let new = psi(&mut tape, model.readout, n_users, &pairs, weights.tau_p)?;
        let old = psi(&mut tape, frozen, n_users, &pairs, weights.tau_p)?;
        let l = preserving_loss(&mut tape, new, old)?;
        let w = tape.scale(l, weights.lambda_p);
        total = tape.add(total, w)?;
        preserve = Some(l);
    }

    let mut contrast = None;
    if weights.lambda_c > 0.0 {
        let dropped = Arc::new(idm_dropout(
            request.delta(),
            n_users,
            request.n_items(),
            weights.dropout,
            rng,
        )?);
        let last = h_layers.len() - 1;
        let l = if last == 0 {
            contrast_loss(&mut tape, h_layers[0], h_layers[0], weights.tau_c)?
        } else {
            let first = if weights.contrast_all_layers { 1 } else { last };
            let mut acc = None;
            for k in first..=last {
                let h_prime = tape.spmm(&dropped, h_layers[k - 1])?;
                let term = contrast_loss(&mut tape, h_layers[k], h_prime, weights.tau_c)?;
                acc = Some(match acc {
                    None => term,
                    Some(a) => tape.add(a, term)?,
                });
            }
            acc.expect("at least one layer")
        };
        let w = tape.scale(l, weights.lambda_c);
        total = tape.add(total, w)?;
        contrast = Some(l);
    }

    Ok(Objective {
        tape,
        e0: e0_var,
        encoder: vars,
        encoded_e0: encoded,
        model,
        unlearn,
        preserve,
        contrast,
        total,
    })
}
