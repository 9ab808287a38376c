use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::interactions::{Edge, InteractionGraph};

/// Parameters of a community-structured graph with power-law user activity
/// and item popularity.
#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub target_edges: usize,
    pub communities: usize,
    /// Zipf exponent shared by user activity and item popularity.
    pub exponent: f64,
    /// Probability that an interaction stays inside the user's community.
    pub affinity: f64,
    pub min_degree: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_users: 500,
            n_items: 500,
            target_edges: 10_000,
            communities: 10,
            exponent: 0.8,
            affinity: 0.85,
            min_degree: 4,
        }
    }
}

fn zipf_weights<R: Rng + ?Sized>(n: usize, exponent: f64, rng: &mut R) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|r| ((r + 1) as f64).powf(-exponent)).collect();
    w.shuffle(rng);
    w
}

pub fn power_law_graph<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> InteractionGraph {
    let activity = zipf_weights(spec.n_users, spec.exponent, rng);
    let popularity = zipf_weights(spec.n_items, spec.exponent, rng);
    let k = spec.communities.max(1);
    let item_comm: Vec<usize> = (0..spec.n_items).map(|_| rng.gen_range(0..k)).collect();
    let user_comm: Vec<usize> = (0..spec.n_users).map(|_| rng.gen_range(0..k)).collect();

    let members: Vec<Vec<usize>> = (0..k)
        .map(|c| (0..spec.n_items).filter(|&i| item_comm[i] == c).collect())
        .collect();
    let global = WeightedIndex::new(&popularity).expect("positive weights");
    let local: Vec<Option<WeightedIndex<f64>>> = members
        .iter()
        .map(|m| WeightedIndex::new(m.iter().map(|&i| popularity[i])).ok())
        .collect();

    let total_activity: f64 = activity.iter().sum();
    let cap = (spec.n_items / 2).max(spec.min_degree);
    let mut edges = Vec::with_capacity(spec.target_edges);
    for u in 0..spec.n_users {
        let want = ((activity[u] / total_activity) * spec.target_edges as f64).round() as usize;
        let want = want.clamp(spec.min_degree, cap);
        let mut chosen: Vec<usize> = Vec::with_capacity(want);
        let mut attempts = 0;
        while chosen.len() < want && attempts < want * 50 {
            attempts += 1;
            let c = user_comm[u];
            let item = match &local[c] {
                Some(dist) if rng.gen_bool(spec.affinity) => members[c][dist.sample(rng)],
                _ => global.sample(rng),
            };
            if !chosen.contains(&item) {
                chosen.push(item);
            }
        }
        edges.extend(chosen.into_iter().map(|i| Edge::new(u, i)));
    }
    InteractionGraph::new(spec.n_users, spec.n_items, edges).expect("generated ids are in range")
}
