use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::adjacency::bipartite_adjacency;
use crate::graph::interactions::{Edge, InteractionGraph};
use crate::numerics::SparseSymMatrix;

/// An interaction graph paired with its normalized propagation matrix.
#[derive(Clone, Debug)]
pub struct NormalizedGraph {
    pub graph: InteractionGraph,
    pub norm_adj: Arc<SparseSymMatrix>,
}

impl NormalizedGraph {
    pub fn new(graph: InteractionGraph) -> Self {
        let norm_adj = Arc::new(
            bipartite_adjacency(graph.n_users(), graph.n_items(), graph.edges()).sym_normalized(),
        );
        Self { graph, norm_adj }
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }
}

/// A set of edges to forget, split against the graph it is removed from.
#[derive(Clone, Debug)]
pub struct UnlearnRequest {
    delta: Vec<Edge>,
    /// Ā_Δ: 0/1 adjacency of the unlearned edges over all nodes.
    idm: SparseSymMatrix,
    idm_norm: Arc<SparseSymMatrix>,
    delta_degrees: Vec<f64>,
    residual: NormalizedGraph,
}

impl UnlearnRequest {
    /// `delta` must be a subset of `graph`'s edges; duplicates are merged.
    pub fn new(graph: &InteractionGraph, delta: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let mut delta: Vec<Edge> = delta.into_iter().collect();
        delta.sort_unstable();
        delta.dedup();
        if let Some(e) = delta.iter().find(|e| !graph.contains(**e)) {
            return Err(Error::InvalidArgument(format!(
                "unlearn edge ({}, {}) is not in the graph",
                e.user, e.item
            )));
        }
        let removed: HashSet<Edge> = delta.iter().copied().collect();
        let residual_graph = graph.with_edges(graph.edges().iter().copied().filter(|e| !removed.contains(e)))?;
        let idm = bipartite_adjacency(graph.n_users(), graph.n_items(), &delta);
        let delta_degrees = idm.degrees();
        Ok(Self {
            idm_norm: Arc::new(idm.sym_normalized()),
            idm,
            delta_degrees,
            delta,
            residual: NormalizedGraph::new(residual_graph),
        })
    }

    pub fn delta(&self) -> &[Edge] {
        &self.delta
    }

    pub fn residual_edges(&self) -> &[Edge] {
        self.residual.graph.edges()
    }

    pub fn residual(&self) -> &NormalizedGraph {
        &self.residual
    }

    pub fn idm(&self) -> &SparseSymMatrix {
        &self.idm
    }

    /// `D_Δ^{-1/2} Ā_Δ D_Δ^{-1/2}` with zero rows for untouched nodes.
    pub fn idm_norm(&self) -> &Arc<SparseSymMatrix> {
        &self.idm_norm
    }

    pub fn delta_degrees(&self) -> &[f64] {
        &self.delta_degrees
    }

    pub fn n_users(&self) -> usize {
        self.residual.graph.n_users()
    }

    pub fn n_items(&self) -> usize {
        self.residual.graph.n_items()
    }
}

/// Uniform sample of `⌈ρ%·|E|⌉` edges of `graph` as a simulated request.
pub fn sample_unlearn_set<R: Rng + ?Sized>(
    graph: &InteractionGraph,
    rho_percent: f64,
    rng: &mut R,
) -> Result<UnlearnRequest> {
    if !(rho_percent > 0.0 && rho_percent < 100.0) {
        return Err(Error::InvalidArgument(format!(
            "unlearn percentage must lie in (0, 100), got {rho_percent}"
        )));
    }
    let n = graph.n_edges();
    let count = ((rho_percent * n as f64 / 100.0) - 1e-9).ceil().max(0.0) as usize;
    let picked = sample(rng, n, count.min(n));
    UnlearnRequest::new(graph, picked.into_iter().map(|k| graph.edges()[k]))
}

/// `count` items drawn uniformly (with replacement) from those `user` has not
/// interacted with in `graph`.
pub fn sample_negatives<R: Rng + ?Sized>(
    graph: &InteractionGraph,
    user: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if user >= graph.n_users() {
        return Err(Error::InvalidArgument(format!("user {user} out of range")));
    }
    let seen = graph.user_items(user);
    let free = graph.n_items() - seen.len();
    if free == 0 {
        return Err(Error::InvalidArgument(format!(
            "user {user} has interacted with every item; no negatives exist"
        )));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    if seen.len() * 2 <= graph.n_items() {
        // Sparse user: rejection sampling terminates quickly.
        Ok((0..count)
            .map(|_| loop {
                let item = rng.gen_range(0..graph.n_items());
                if seen.binary_search(&item).is_err() {
                    break item;
                }
            })
            .collect())
    } else {
        let complement: Vec<usize> = (0..graph.n_items())
            .filter(|i| seen.binary_search(i).is_err())
            .collect();
        Ok((0..count)
            .map(|_| complement[rng.gen_range(0..complement.len())])
            .collect())
    }
}
