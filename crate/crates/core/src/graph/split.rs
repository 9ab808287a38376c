use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::interactions::{Edge, InteractionGraph};

/// Uniform random train/test edge split.
///
/// The test set targets `round(test_fraction·|E|)` edges, but an edge is only
/// moved to test while its user keeps at least one training edge, so
/// single-interaction users stay entirely in train.
pub fn split_train_test<R: Rng + ?Sized>(
    graph: &InteractionGraph,
    test_fraction: f64,
    rng: &mut R,
) -> Result<(Vec<Edge>, Vec<Edge>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let target = (test_fraction * graph.n_edges() as f64).round() as usize;
    let mut order: Vec<Edge> = graph.edges().to_vec();
    order.shuffle(rng);

    let mut remaining: Vec<usize> = (0..graph.n_users()).map(|u| graph.user_items(u).len()).collect();
    let mut train = Vec::with_capacity(graph.n_edges() - target);
    let mut test = Vec::with_capacity(target);
    for e in order {
        if test.len() < target && remaining[e.user] > 1 {
            remaining[e.user] -= 1;
            test.push(e);
        } else {
            train.push(e);
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
