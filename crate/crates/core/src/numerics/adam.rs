use crate::error::{Error, Result};
use crate::numerics::dense::DenseMatrix;

/// Adam with bias correction over a fixed list of parameter matrices.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<DenseMatrix>,
    second: Vec<DenseMatrix>,
}

impl AdamState {
    /// Default hyper-parameters (β₁ = 0.9, β₂ = 0.999, ε = 1e-8) with moments
    /// shaped like `params`.
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        Self::with_betas(lr, 0.9, 0.999, 1e-8, shapes)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64, shapes: &[(usize, usize)]) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            first: shapes.iter().map(|&(r, c)| DenseMatrix::zeros(r, c)).collect(),
            second: shapes.iter().map(|&(r, c)| DenseMatrix::zeros(r, c)).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update of every parameter. Nothing is modified when any gradient
    /// is non-finite or mis-shaped.
    pub fn step(&mut self, params: &mut [&mut DenseMatrix], grads: &[&DenseMatrix]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Contract(format!(
                "adam tracks {} parameters, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (slot, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.first[slot].shape() || g.shape() != p.shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!(
                        "slot {slot}: moment {:?}, param {:?}, grad {:?}",
                        self.first[slot].shape(),
                        p.shape(),
                        g.shape()
                    ),
                ));
            }
            if let Some(pos) = g.values().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!(
                        "gradient of parameter slot {slot} at flat index {pos} (value {})",
                        g.values()[pos]
                    ),
                });
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (slot, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first[slot].values_mut();
            let v = self.second[slot].values_mut();
            for (((pv, &gv), mv), vv) in p.values_mut().iter_mut().zip(g.values()).zip(m).zip(v) {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
