use crate::error::{Error, Result};
use crate::numerics::dense::DenseMatrix;

/// Symmetric sparse matrix stored as CSR (entries sorted by row, then column).
///
/// Every off-diagonal entry `(i, j)` has a mirror `(j, i)` with the same
/// weight and there are no self-loops.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymMatrix {
    dim: usize,
    row_offsets: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseSymMatrix {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            row_offsets: vec![0; dim + 1],
            cols: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// Builds from a full coordinate list; both `(i, j)` and `(j, i)` must be
    /// listed. Duplicate coordinates are rejected.
    pub fn from_entries(dim: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        for &(i, j, w) in entries {
            if i >= dim || j >= dim {
                return Err(Error::shape(
                    "sparse_from_entries",
                    format!("entry ({i},{j}) outside dim {dim}"),
                ));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self-loop at node {i}")));
            }
            if !w.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("sparse entry ({i},{j})"),
                });
            }
        }
        let m = Self::from_sorted_unchecked(dim, sorted_entries(entries));
        for r in 0..dim {
            let cols = m.row_cols(r);
            if cols.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidArgument(format!("duplicate entry in row {r}")));
            }
            for (&c, &w) in cols.iter().zip(m.row_weights(r)) {
                if m.get(c, r) != Some(w) {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({r},{c}) has no symmetric counterpart"
                    )));
                }
            }
        }
        Ok(m)
    }

    /// Builds from undirected pairs, inserting each pair in both directions.
    pub fn from_undirected(dim: usize, pairs: &[(usize, usize, f64)]) -> Result<Self> {
        let mut entries = Vec::with_capacity(pairs.len() * 2);
        for &(i, j, w) in pairs {
            entries.push((i, j, w));
            entries.push((j, i, w));
        }
        Self::from_entries(dim, &entries)
    }

    fn from_sorted_unchecked(dim: usize, entries: Vec<(usize, usize, f64)>) -> Self {
        let mut row_offsets = vec![0usize; dim + 1];
        for &(i, _, _) in &entries {
            row_offsets[i + 1] += 1;
        }
        for r in 0..dim {
            row_offsets[r + 1] += row_offsets[r];
        }
        let (cols, weights) = entries.into_iter().map(|(_, j, w)| (j, w)).unzip();
        Self {
            dim,
            row_offsets,
            cols,
            weights,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored entries (each undirected edge counts twice).
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row_cols(&self, r: usize) -> &[usize] {
        &self.cols[self.row_offsets[r]..self.row_offsets[r + 1]]
    }

    pub fn row_weights(&self, r: usize) -> &[f64] {
        &self.weights[self.row_offsets[r]..self.row_offsets[r + 1]]
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        if r >= self.dim {
            return None;
        }
        let cols = self.row_cols(r);
        cols.binary_search(&c).ok().map(|k| self.row_weights(r)[k])
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            self.row_cols(r)
                .iter()
                .zip(self.row_weights(r))
                .map(move |(&c, &w)| (r, c, w))
        })
    }

    /// Row sums of the stored weights (node degrees for a 0/1 adjacency).
    pub fn degrees(&self) -> Vec<f64> {
        (0..self.dim).map(|r| self.row_weights(r).iter().sum()).collect()
    }

    /// `D^{-1/2} · A · D^{-1/2}`. Zero-degree rows stay empty.
    pub fn sym_normalized(&self) -> Self {
        let inv_sqrt: Vec<f64> = self
            .degrees()
            .into_iter()
            .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        let mut out = self.clone();
        for r in 0..self.dim {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                out.weights[k] = self.weights[k] * inv_sqrt[r] * inv_sqrt[self.cols[k]];
            }
        }
        out
    }

    /// `A · x`.
    pub fn spmm(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.rows() != self.dim {
            return Err(Error::shape(
                "spmm",
                format!("{0}x{0} adjacency times {1:?}", self.dim, x.shape()),
            ));
        }
        let d = x.cols();
        let mut out = DenseMatrix::zeros(self.dim, d);
        for r in 0..self.dim {
            let out_row = out.row_mut(r);
            for (&c, &w) in self.row_cols(r).iter().zip(self.row_weights(r)) {
                for (o, &v) in out_row.iter_mut().zip(x.row(c)) {
                    *o += w * v;
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.dim, self.dim);
        for (r, c, w) in self.entries() {
            m.set(r, c, w);
        }
        m
    }
}

fn sorted_entries(entries: &[(usize, usize, f64)]) -> Vec<(usize, usize, f64)> {
    let mut v = entries.to_vec();
    v.sort_by_key(|a| (a.0, a.1));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn swap_permutation() {
        let a = SparseSymMatrix::from_undirected(2, &[(0, 1, 1.0)]).unwrap();
        let y = a.spmm(&DenseMatrix::identity(2)).unwrap();
        assert_eq!(y, DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap());
    }

    #[test]
    fn zero_adjacency_annihilates() {
        let a = SparseSymMatrix::empty(3);
        let x = DenseMatrix::filled(3, 4, 2.5);
        assert_eq!(a.spmm(&x).unwrap(), DenseMatrix::zeros(3, 4));
    }

    #[test]
    fn normalized_star_row() {
        // Hand multiplication: node 2 has degree 2, nodes 0 and 1 degree 1,
        // so both weights are 1/sqrt(2) and row 2 of A·I is [w, w, 0].
        let raw = SparseSymMatrix::from_undirected(3, &[(0, 2, 1.0), (1, 2, 1.0)]).unwrap();
        let a = raw.sym_normalized();
        let y = a.spmm(&DenseMatrix::identity(3)).unwrap();
        let w = 0.5f64.sqrt();
        assert!((y.get(2, 0) - w).abs() < 1e-15);
        assert!((y.get(2, 1) - w).abs() < 1e-15);
        assert_eq!(y.get(2, 2), 0.0);
        assert!((y.get(2, 0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric_and_bad_indices() {
        assert!(SparseSymMatrix::from_entries(3, &[(0, 1, 1.0)]).is_err());
        assert!(SparseSymMatrix::from_entries(3, &[(0, 1, 1.0), (1, 0, 2.0)]).is_err());
        assert!(SparseSymMatrix::from_undirected(2, &[(0, 2, 1.0)]).is_err());
        assert!(SparseSymMatrix::from_undirected(2, &[(1, 1, 1.0)]).is_err());
        assert!(SparseSymMatrix::from_undirected(2, &[(0, 1, 1.0), (1, 0, 1.0)]).is_err());
    }

    #[test]
    fn spmm_shape_error() {
        let a = SparseSymMatrix::empty(3);
        assert!(matches!(a.spmm(&DenseMatrix::zeros(2, 2)), Err(Error::Shape { .. })));
    }

    #[test]
    fn isolated_nodes_normalize_to_zero_rows() {
        let a = SparseSymMatrix::from_undirected(4, &[(0, 1, 1.0)]).unwrap().sym_normalized();
        assert!(a.row_cols(2).is_empty() && a.row_cols(3).is_empty());
        let y = a.spmm(&DenseMatrix::filled(4, 2, 1.0)).unwrap();
        assert!(y.is_finite());
        assert_eq!(y.row(3), &[0.0, 0.0]);
    }

    fn random_adj(n: usize, seed: u64) -> SparseSymMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rand::Rng::gen_bool(&mut rng, 0.3) {
                    pairs.push((i, j, rand::Rng::gen_range(&mut rng, 0.1..2.0)));
                }
            }
        }
        SparseSymMatrix::from_undirected(n, &pairs).unwrap()
    }

    proptest! {
        #[test]
        fn spmm_is_self_adjoint(seed in 0u64..500, n in 2usize..12) {
            let a = random_adj(n, seed).sym_normalized();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let x = DenseMatrix::random_uniform(n, 1, -1.0, 1.0, &mut rng);
            let y = DenseMatrix::random_uniform(n, 1, -1.0, 1.0, &mut rng);
            let lhs = x.transa_matmul(&a.spmm(&y).unwrap()).unwrap().get(0, 0);
            let rhs = y.transa_matmul(&a.spmm(&x).unwrap()).unwrap().get(0, 0);
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }

        #[test]
        fn spmm_matches_dense_product(seed in 0u64..500, n in 1usize..10) {
            let a = random_adj(n, seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 7);
            let x = DenseMatrix::random_uniform(n, 3, -1.0, 1.0, &mut rng);
            let sparse = a.spmm(&x).unwrap();
            let dense = a.to_dense().matmul(&x).unwrap();
            prop_assert!(sparse.max_abs_diff(&dense) < 1e-12);
        }
    }
}
