use crate::graph::interactions::Edge;
use crate::numerics::SparseSymMatrix;

/// 0/1 symmetric adjacency over `n_users + n_items` nodes.
pub fn bipartite_adjacency(n_users: usize, n_items: usize, edges: &[Edge]) -> SparseSymMatrix {
    let pairs: Vec<(usize, usize, f64)> = edges
        .iter()
        .map(|e| (e.user, n_users + e.item, 1.0))
        .collect();
    SparseSymMatrix::from_undirected(n_users + n_items, &pairs)
        .expect("edges are validated against the node ranges by InteractionGraph")
}

/// `D^{-1/2} Ā D^{-1/2}`; entry `(u_i, v_j)` is `1/√(δ_i δ_j)`.
pub fn build_norm_adj(n_users: usize, n_items: usize, edges: &[Edge]) -> SparseSymMatrix {
    bipartite_adjacency(n_users, n_items, edges).sym_normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_edge_has_unit_weights() {
        let a = build_norm_adj(1, 1, &[Edge::new(0, 0)]);
        assert_eq!(a.get(0, 1), Some(1.0));
        assert_eq!(a.get(1, 0), Some(1.0));
    }

    #[test]
    fn shared_item_halves_by_sqrt_two() {
        // δ(u0)=δ(u1)=1, δ(v0)=2  =>  1/√(1·2)
        let a = build_norm_adj(2, 1, &[Edge::new(0, 0), Edge::new(1, 0)]);
        let expected = 1.0 / (1.0f64 * 2.0).sqrt();
        assert!((a.get(0, 2).unwrap() - expected).abs() < 1e-15);
        assert!((a.get(2, 1).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn isolated_node_has_empty_row() {
        let a = build_norm_adj(2, 2, &[Edge::new(0, 0)]);
        assert!(a.row_cols(1).is_empty());
        assert!(a.row_cols(3).is_empty());
        assert!(a.degrees().iter().all(|d| d.is_finite()));
    }

    proptest! {
        #[test]
        fn symmetric_with_bounded_row_sums(
            raw in proptest::collection::vec((0usize..6, 0usize..5), 1..25)
        ) {
            let edges: Vec<Edge> = {
                let mut v: Vec<Edge> = raw.iter().map(|&(u, i)| Edge::new(u, i)).collect();
                v.sort_unstable();
                v.dedup();
                v
            };
            let a = build_norm_adj(6, 5, &edges);
            let max_degree = bipartite_adjacency(6, 5, &edges)
                .degrees()
                .into_iter()
                .fold(0.0, f64::max);
            for (r, c, w) in a.entries() {
                prop_assert_eq!(a.get(c, r), Some(w));
            }
            for r in 0..a.dim() {
                let s: f64 = a.row_weights(r).iter().sum();
                prop_assert!(s <= max_degree.sqrt() + 1e-12);
            }
        }
    }
}
