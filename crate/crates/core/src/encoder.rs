//! Influence Encoder: maps an unlearning request and the trained layer-0
//! embeddings to revised layer-0 embeddings.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, SparseSymMatrix, Tape, Var};

/// Negative slope of the hidden MLP activations.
pub const HIDDEN_SLOPE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    /// Layers of influence-estimation propagation, counting `H₀`.
    pub iem_layers: usize,
    /// Layers of weighted readout propagation, counting `E_w,0`.
    pub weighted_layers: usize,
    pub mlp_layers: usize,
    /// Half-width of the uniform initialization of `H₀` and `W_η`.
    pub init_scale: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            iem_layers: 3,
            weighted_layers: 3,
            mlp_layers: 2,
            init_scale: 1e-3,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iem_layers == 0 || self.weighted_layers == 0 || self.mlp_layers == 0 {
            return Err(Error::InvalidArgument("encoder layer counts must be at least 1".into()));
        }
        if self.init_scale.is_nan() || self.init_scale < 0.0 {
            return Err(Error::InvalidArgument("encoder init scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// One `x ↦ x·W + b` layer of the MLP.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpLayer {
    pub weight: DenseMatrix,
    pub bias: DenseMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InfluenceEncoder {
    pub config: EncoderConfig,
    /// `(I+J) × d`
    pub h0: DenseMatrix,
    /// `(I+J) × 1`
    pub w_eta: DenseMatrix,
    pub mlp: Vec<MlpLayer>,
}

impl InfluenceEncoder {
    /// `H₀`, `W_η` uniform in `±init_scale`; identity MLP.
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, n_nodes: usize, dim: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let s = config.init_scale;
        let (h0, w_eta) = if s > 0.0 {
            (
                DenseMatrix::random_uniform(n_nodes, dim, -s, s, rng),
                DenseMatrix::random_uniform(n_nodes, 1, -s, s, rng),
            )
        } else {
            (DenseMatrix::zeros(n_nodes, dim), DenseMatrix::zeros(n_nodes, 1))
        };
        Ok(Self::with_parts(config, h0, w_eta))
    }

    /// Exact no-op encoder: `H₀ = 0`, `W_η = 0`, identity MLP.
    pub fn zeroed(config: EncoderConfig, n_nodes: usize, dim: usize) -> Self {
        Self::with_parts(config, DenseMatrix::zeros(n_nodes, dim), DenseMatrix::zeros(n_nodes, 1))
    }

    fn with_parts(config: EncoderConfig, h0: DenseMatrix, w_eta: DenseMatrix) -> Self {
        let dim = h0.cols();
        let mlp = (0..config.mlp_layers)
            .map(|_| MlpLayer {
                weight: DenseMatrix::identity(dim),
                bias: DenseMatrix::zeros(1, dim),
            })
            .collect();
        Self { config, h0, w_eta, mlp }
    }

    pub fn n_nodes(&self) -> usize {
        self.h0.rows()
    }

    pub fn dim(&self) -> usize {
        self.h0.cols()
    }

    /// Named matrices in a fixed order, for checkpoints.
    pub fn named_matrices(&self) -> Vec<(String, &DenseMatrix)> {
        let mut out = vec![("h0".to_string(), &self.h0), ("w_eta".to_string(), &self.w_eta)];
        for (l, layer) in self.mlp.iter().enumerate() {
            out.push((format!("mlp{l}_w"), &layer.weight));
            out.push((format!("mlp{l}_b"), &layer.bias));
        }
        out
    }

    /// Mutable `[W₀, b₀, W₁, b₁, …]`.
    pub fn mlp_params_mut(&mut self) -> Vec<&mut DenseMatrix> {
        self.mlp
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    fn check_nodes(&self, op: &'static str, adj: &SparseSymMatrix, x: &DenseMatrix) -> Result<()> {
        if adj.dim() != self.n_nodes() || x.rows() != self.n_nodes() || x.cols() != self.dim() {
            return Err(Error::shape(
                op,
                format!(
                    "encoder {}x{}, adjacency {}, input {:?}",
                    self.n_nodes(),
                    self.dim(),
                    adj.dim(),
                    x.shape()
                ),
            ));
        }
        Ok(())
    }

    /// Every IEM layer `H_l = idm·H_{l-1}`, starting at `H₀`.
    pub fn iem_layers(&self, idm_norm: &SparseSymMatrix) -> Result<Vec<DenseMatrix>> {
        self.check_nodes("propagate_iem", idm_norm, &self.h0)?;
        let mut layers = vec![self.h0.clone()];
        for l in 1..self.config.iem_layers {
            let next = idm_norm.spmm(&layers[l - 1])?;
            layers.push(next);
        }
        Ok(layers)
    }

    /// `H̄ = Σ_l H_l`.
    pub fn propagate_iem(&self, idm_norm: &SparseSymMatrix) -> Result<DenseMatrix> {
        let layers = self.iem_layers(idm_norm)?;
        let mut sum = layers[0].clone();
        for h in &layers[1..] {
            sum.add_assign(h)?;
        }
        Ok(sum)
    }

    /// Last layer of `E_w,l = idm·E_w,l-1` from `E_w,0 = Ē ⊙ W_η`.
    pub fn propagate_weighted(&self, idm_norm: &SparseSymMatrix, readout: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_nodes("propagate_weighted", idm_norm, readout)?;
        let mut x = readout.scale_rows(&self.w_eta)?;
        for _ in 1..self.config.weighted_layers {
            x = idm_norm.spmm(&x)?;
        }
        Ok(x)
    }

    /// `ΔE₀ = −Ē_w + H̄`.
    pub fn delta(&self, idm_norm: &SparseSymMatrix, readout: &DenseMatrix) -> Result<DenseMatrix> {
        let h_bar = self.propagate_iem(idm_norm)?;
        let e_w = self.propagate_weighted(idm_norm, readout)?;
        h_bar.sub(&e_w)
    }

    pub fn mlp_forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.cols() != self.dim() {
            return Err(Error::shape("mlp", format!("input has {} cols, expected {}", x.cols(), self.dim())));
        }
        let last = self.mlp.len() - 1;
        let mut x = x.clone();
        for (l, layer) in self.mlp.iter().enumerate() {
            let mut y = x.matmul(&layer.weight)?;
            for r in 0..y.rows() {
                for (v, b) in y.row_mut(r).iter_mut().zip(layer.bias.values()) {
                    *v += b;
                }
            }
            if l != last {
                y = y.map(|v| if v > 0.0 { v } else { HIDDEN_SLOPE * v });
            }
            x = y;
        }
        Ok(x)
    }

    /// `Ẽ₀ = MLP(ΔE₀) + E₀`.
    pub fn encode(&self, idm_norm: &SparseSymMatrix, e0: &DenseMatrix, readout: &DenseMatrix) -> Result<DenseMatrix> {
        if e0.shape() != readout.shape() {
            return Err(Error::shape("encode", format!("e0 {:?} vs readout {:?}", e0.shape(), readout.shape())));
        }
        let delta = self.delta(idm_norm, readout)?;
        self.mlp_forward(&delta)?.add(e0)
    }
}

/// Which encoder parameters are trainable leaves on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderMode {
    /// `H₀` and `W_η` train; the MLP is frozen.
    Pretrain,
    /// The MLP trains; `H₀` and `W_η` are frozen.
    Finetune,
    Frozen,
}

/// Encoder parameters placed on a tape.
#[derive(Clone, Debug)]
pub struct EncoderVars {
    pub h0: Var,
    pub w_eta: Var,
    /// `[(W, b)]` per MLP layer.
    pub mlp: Vec<(Var, Var)>,
}

impl EncoderVars {
    pub fn new(tape: &mut Tape, enc: &InfluenceEncoder, mode: EncoderMode) -> Self {
        let pre = mode == EncoderMode::Pretrain;
        let fine = mode == EncoderMode::Finetune;
        Self {
            h0: tape.leaf(enc.h0.clone(), pre),
            w_eta: tape.leaf(enc.w_eta.clone(), pre),
            mlp: enc
                .mlp
                .iter()
                .map(|l| (tape.leaf(l.weight.clone(), fine), tape.leaf(l.bias.clone(), fine)))
                .collect(),
        }
    }

    /// MLP variables in the order of [`InfluenceEncoder::mlp_params_mut`].
    pub fn mlp_flat(&self) -> Vec<Var> {
        self.mlp.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

/// Taped IEM layers.
pub fn iem_layers_tape(tape: &mut Tape, vars: &EncoderVars, idm_norm: &Arc<SparseSymMatrix>, layers: usize) -> Result<Vec<Var>> {
    let mut out = vec![vars.h0];
    for l in 1..layers {
        let next = tape.spmm(idm_norm, out[l - 1])?;
        out.push(next);
    }
    Ok(out)
}

pub fn mlp_tape(tape: &mut Tape, vars: &EncoderVars, x: Var) -> Result<Var> {
    let last = vars.mlp.len() - 1;
    let mut x = x;
    for (l, &(w, b)) in vars.mlp.iter().enumerate() {
        let y = tape.matmul(x, w)?;
        let y = tape.add_row_bias(y, b)?;
        x = if l != last { tape.leaky_relu(y, HIDDEN_SLOPE) } else { y };
    }
    Ok(x)
}

/// Taped `ΔE₀` plus the IEM layers, which the contrast loss reuses.
pub fn delta_tape(
    tape: &mut Tape,
    config: &EncoderConfig,
    vars: &EncoderVars,
    idm_norm: &Arc<SparseSymMatrix>,
    readout: Var,
) -> Result<(Var, Vec<Var>)> {
    let h = iem_layers_tape(tape, vars, idm_norm, config.iem_layers)?;
    let mut h_bar = h[0];
    for &layer in &h[1..] {
        h_bar = tape.add(h_bar, layer)?;
    }
    let mut e_w = tape.row_scale(readout, vars.w_eta)?;
    for _ in 1..config.weighted_layers {
        e_w = tape.spmm(idm_norm, e_w)?;
    }
    Ok((tape.sub(h_bar, e_w)?, h))
}
