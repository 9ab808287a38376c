use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{dot, DenseMatrix, SparseSymMatrix, Tape, Var};

/// Per-layer embeddings and their sum.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingState {
    pub layers: Vec<DenseMatrix>,
    pub readout: DenseMatrix,
}

/// `E_l = Â·E_{l-1}` for `l = 1..layers-1`; the readout is `Σ_l E_l`.
pub fn forward(e0: &DenseMatrix, adj: &SparseSymMatrix, layers: usize) -> Result<EmbeddingState> {
    if layers == 0 {
        return Err(Error::InvalidArgument("at least one layer is required".into()));
    }
    let mut out = vec![e0.clone()];
    for l in 1..layers {
        let next = adj.spmm(&out[l - 1])?;
        out.push(next);
    }
    let mut readout = out[0].clone();
    for layer in &out[1..] {
        readout.add_assign(layer)?;
    }
    Ok(EmbeddingState { layers: out, readout })
}

/// Taped version of [`forward`]; returns the readout and every layer.
pub fn forward_tape(
    tape: &mut Tape,
    e0: Var,
    adj: &Arc<SparseSymMatrix>,
    layers: usize,
) -> Result<(Var, Vec<Var>)> {
    if layers == 0 {
        return Err(Error::InvalidArgument("at least one layer is required".into()));
    }
    let mut out = vec![e0];
    for l in 1..layers {
        let next = tape.spmm(adj, out[l - 1])?;
        out.push(next);
    }
    let mut readout = out[0];
    for &layer in &out[1..] {
        readout = tape.add(readout, layer)?;
    }
    Ok((readout, out))
}

/// Frozen readout used for scoring. Rows `0..n_users` are users, the rest items.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreModel {
    n_users: usize,
    n_items: usize,
    readout: DenseMatrix,
}

impl ScoreModel {
    pub fn new(n_users: usize, n_items: usize, readout: DenseMatrix) -> Result<Self> {
        if readout.rows() != n_users + n_items {
            return Err(Error::shape(
                "score_model",
                format!("{} rows for {n_users} users + {n_items} items", readout.rows()),
            ));
        }
        Ok(Self {
            n_users,
            n_items,
            readout,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn readout(&self) -> &DenseMatrix {
        &self.readout
    }

    /// `ŷ = ē_userᵀ ē_item`.
    #[inline]
    pub fn score(&self, user: usize, item: usize) -> f64 {
        dot(self.readout.row(user), self.readout.row(self.n_users + item))
    }

    /// Scores of `user` against every item.
    pub fn user_scores(&self, user: usize) -> Vec<f64> {
        let u = self.readout.row(user);
        (0..self.n_items)
            .map(|i| dot(u, self.readout.row(self.n_users + i)))
            .collect()
    }
}

/// Score matrix `|users| × |items|`.
pub fn predict_scores(model: &ScoreModel, users: &[usize], items: &[usize]) -> Result<DenseMatrix> {
    if let Some(u) = users.iter().find(|&&u| u >= model.n_users) {
        return Err(Error::InvalidArgument(format!("user id {u} out of range")));
    }
    if let Some(i) = items.iter().find(|&&i| i >= model.n_items) {
        return Err(Error::InvalidArgument(format!("item id {i} out of range")));
    }
    let mut out = DenseMatrix::zeros(users.len(), items.len());
    for (r, &u) in users.iter().enumerate() {
        for (c, &i) in items.iter().enumerate() {
            out.set(r, c, model.score(u, i));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_norm_adj, Edge};
    use crate::numerics::seeded_rng;
    use proptest::prelude::*;

    #[test]
    fn single_layer_readout_is_e0() {
        let e0 = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let adj = SparseSymMatrix::from_undirected(2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(forward(&e0, &adj, 1).unwrap().readout, e0);
    }

    #[test]
    fn zero_adjacency_readout_is_e0() {
        let e0 = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let st = forward(&e0, &SparseSymMatrix::empty(2), 3).unwrap();
        assert_eq!(st.readout, e0);
        assert_eq!(st.layers[2], DenseMatrix::zeros(2, 2));
    }

    #[test]
    fn path_graph_matches_dense_products() {
        // user0 - item0 - user1: nodes 0, 1 are users, node 2 the item.
        let adj = build_norm_adj(2, 1, &[Edge::new(0, 0), Edge::new(1, 0)]);
        let e0 = DenseMatrix::identity(3);
        let st = forward(&e0, &adj, 2).unwrap();
        let dense_a = adj.to_dense();
        let expected = e0.add(&dense_a.matmul(&e0).unwrap()).unwrap();
        assert!(st.readout.max_abs_diff(&expected) < 1e-15);
        let w = 0.5f64.sqrt();
        assert!((st.readout.get(0, 2) - w).abs() < 1e-15);
        assert!((st.readout.get(2, 1) - w).abs() < 1e-15);
    }

    #[test]
    fn taped_forward_matches_plain() {
        let adj = Arc::new(build_norm_adj(3, 4, &[Edge::new(0, 1), Edge::new(1, 1), Edge::new(2, 3), Edge::new(0, 0)]));
        let e0 = DenseMatrix::random_uniform(7, 5, -1.0, 1.0, &mut seeded_rng(2));
        let plain = forward(&e0, &adj, 3).unwrap();
        let mut tape = Tape::new();
        let v = tape.param(e0.clone());
        let (readout, layers) = forward_tape(&mut tape, v, &adj, 3).unwrap();
        assert_eq!(tape.value(readout), &plain.readout);
        assert_eq!(layers.len(), 3);
    }

    #[test]
    fn unit_and_orthogonal_readouts() {
        let r = DenseMatrix::from_rows(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let m = ScoreModel::new(1, 2, r).unwrap();
        assert_eq!(m.score(0, 0), 1.0);
        assert_eq!(m.score(0, 1), 0.0);
        assert!(predict_scores(&m, &[1], &[0]).is_err());
        assert!(predict_scores(&m, &[0], &[2]).is_err());
    }

    #[test]
    fn scores_match_brute_force_dots() {
        let r = DenseMatrix::random_uniform(8, 3, -1.0, 1.0, &mut seeded_rng(9));
        let m = ScoreModel::new(4, 4, r.clone()).unwrap();
        let s = predict_scores(&m, &[0, 1, 2, 3], &[0, 1, 2, 3]).unwrap();
        for u in 0..4 {
            for i in 0..4 {
                let brute: f64 = (0..3).map(|k| r.get(u, k) * r.get(4 + i, k)).sum();
                assert!((s.get(u, i) - brute).abs() < 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn forward_is_linear(seed in 0u64..200, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = seeded_rng(seed);
            let edges: Vec<Edge> = (0..12).map(|k| Edge::new(k % 5, (k * 7 + seed as usize) % 6)).collect();
            let mut edges = edges;
            edges.sort_unstable();
            edges.dedup();
            let adj = build_norm_adj(5, 6, &edges);
            let x = DenseMatrix::random_uniform(11, 4, -1.0, 1.0, &mut rng);
            let y = DenseMatrix::random_uniform(11, 4, -1.0, 1.0, &mut rng);
            let mut combo = x.scale(a);
            combo.axpy(b, &y).unwrap();
            let lhs = forward(&combo, &adj, 3).unwrap().readout;
            let mut rhs = forward(&x, &adj, 3).unwrap().readout.scale(a);
            rhs.axpy(b, &forward(&y, &adj, 3).unwrap().readout).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
        }

        #[test]
        fn readout_is_exact_layer_sum(seed in 0u64..100, layers in 1usize..5) {
            let adj = build_norm_adj(3, 3, &[Edge::new(0, 0), Edge::new(1, 0), Edge::new(2, 2), Edge::new(0, 1)]);
            let e0 = DenseMatrix::random_uniform(6, 3, -1.0, 1.0, &mut seeded_rng(seed));
            let st = forward(&e0, &adj, layers).unwrap();
            let mut sum = st.layers[0].clone();
            for l in &st.layers[1..] {
                sum.add_assign(l).unwrap();
            }
            prop_assert_eq!(sum, st.readout);
        }
    }
}
