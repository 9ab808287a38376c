//! Ranking utility and unlearning-efficacy metrics.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::backbone::ScoreModel;
use crate::error::{Error, Result};
use crate::graph::{Edge, InteractionGraph};
use crate::numerics::sigmoid;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankMetrics {
    pub recall: f64,
    pub ndcg: f64,
    /// Users with at least one test item.
    pub users: usize,
    pub n: usize,
}

/// Items of `user` in descending score order with ties by ascending id,
/// skipping `exclude` (sorted), truncated to `n`.
pub fn top_n(model: &ScoreModel, user: usize, exclude: &[usize], n: usize) -> Vec<usize> {
    // `+ 0.0` folds −0 into +0 so signed zeros tie.
    let key: Vec<f64> = model.user_scores(user).into_iter().map(|s| s + 0.0).collect();
    let mut candidates: Vec<usize> = (0..key.len()).filter(|i| exclude.binary_search(i).is_err()).collect();
    let by_rank = |a: &usize, b: &usize| key[*b].total_cmp(&key[*a]).then(a.cmp(b));
    if candidates.len() > n {
        candidates.select_nth_unstable_by(n, by_rank);
        candidates.truncate(n);
    }
    candidates.sort_unstable_by(by_rank);
    candidates
}

/// Full-ranking Recall@N and NDCG@N averaged over users that have test
/// items. Items a user interacted with in `train` are never ranked.
pub fn rank_metrics(model: &ScoreModel, train: &InteractionGraph, test: &[Edge], n: usize) -> Result<RankMetrics> {
    if n == 0 {
        return Err(Error::InvalidArgument("cutoff must be positive".into()));
    }
    if train.n_users() != model.n_users() || train.n_items() != model.n_items() {
        return Err(Error::shape(
            "rank_metrics",
            format!(
                "model {}x{} vs train graph {}x{}",
                model.n_users(),
                model.n_items(),
                train.n_users(),
                train.n_items()
            ),
        ));
    }
    let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); model.n_users()];
    for e in test {
        if e.user >= model.n_users() || e.item >= model.n_items() {
            return Err(Error::InvalidArgument(format!("test edge ({}, {}) out of range", e.user, e.item)));
        }
        per_user[e.user].push(e.item);
    }
    let (mut recall, mut ndcg, mut users) = (0.0, 0.0, 0usize);
    for (user, items) in per_user.iter_mut().enumerate() {
        if items.is_empty() {
            continue;
        }
        items.sort_unstable();
        items.dedup();
        let ranked = top_n(model, user, train.user_items(user), n);
        let mut hits = 0usize;
        let mut dcg = 0.0;
        for (pos, item) in ranked.iter().enumerate() {
            if items.binary_search(item).is_ok() {
                hits += 1;
                dcg += 1.0 / ((pos + 2) as f64).log2();
            }
        }
        let idcg: f64 = (0..items.len().min(n)).map(|k| 1.0 / ((k + 2) as f64).log2()).sum();
        recall += hits as f64 / items.len() as f64;
        ndcg += dcg / idcg;
        users += 1;
    }
    if users == 0 {
        return Ok(RankMetrics { recall: 0.0, ndcg: 0.0, users, n });
    }
    Ok(RankMetrics {
        recall: recall / users as f64,
        ndcg: ndcg / users as f64,
        users,
        n,
    })
}

/// Mean `σ(ŷ)` over `edges`.
pub fn mean_sigmoid(model: &ScoreModel, edges: &[Edge]) -> Result<f64> {
    if edges.is_empty() {
        return Err(Error::InvalidArgument("mean over an empty edge set".into()));
    }
    Ok(edges.iter().map(|e| sigmoid(model.score(e.user, e.item))).sum::<f64>() / edges.len() as f64)
}

/// Mean probability on the unlearned edges before over after.
pub fn mi_bf(before: &ScoreModel, after: &ScoreModel, delta: &[Edge]) -> Result<f64> {
    Ok(mean_sigmoid(before, delta)? / mean_sigmoid(after, delta)?)
}

/// Mean probability of the negatives over that of the unlearned edges; above
/// 1 when unlearned edges score below random non-interactions.
pub fn mi_ng(after: &ScoreModel, delta: &[Edge], negatives: &[Edge]) -> Result<f64> {
    Ok(mean_sigmoid(after, negatives)? / mean_sigmoid(after, delta)?)
}

/// `count` distinct user-item pairs drawn uniformly from the pairs absent
/// from `known` (or every absent pair if fewer exist). Sorted.
pub fn sample_mi_negatives<R: Rng + ?Sized>(known: &InteractionGraph, count: usize, rng: &mut R) -> Vec<Edge> {
    let absent = known.n_users() * known.n_items() - known.n_edges();
    let count = count.min(absent);
    let mut chosen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    if count * 2 > absent {
        let mut all: Vec<Edge> = (0..known.n_users())
            .flat_map(|u| (0..known.n_items()).map(move |i| Edge::new(u, i)))
            .filter(|e| !known.contains(*e))
            .collect();
        let idx = rand::seq::index::sample(rng, all.len(), count);
        out = idx.into_iter().map(|k| all[k]).collect();
        all.clear();
    } else {
        while out.len() < count {
            let e = Edge::new(rng.gen_range(0..known.n_users()), rng.gen_range(0..known.n_items()));
            if !known.contains(e) && chosen.insert(e) {
                out.push(e);
            }
        }
    }
    out.sort_unstable();
    out
}

/// Writes `set,user,item,score,sigmoid` rows for every named edge set, then
/// one `mean:<set>` row per non-empty set carrying the mean score and mean
/// sigmoid.
pub fn export_score_distribution<W: Write>(model: &ScoreModel, sets: &[(&str, &[Edge])], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "set,user,item,score,sigmoid")?;
    let mut summary = Vec::new();
    for (name, edges) in sets {
        let (mut s, mut p) = (0.0, 0.0);
        for e in edges.iter() {
            let score = model.score(e.user, e.item);
            let prob = sigmoid(score);
            s += score;
            p += prob;
            writeln!(out, "{name},{},{},{score:.17e},{prob:.17e}", e.user, e.item)?;
        }
        if !edges.is_empty() {
            let n = edges.len() as f64;
            summary.push((name, s / n, p / n));
        }
    }
    for (name, s, p) in summary {
        writeln!(out, "mean:{name},,,{s:.17e},{p:.17e}")?;
    }
    Ok(())
}

/// Everything one evaluated model reports.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub rank: RankMetrics,
    pub mi_bf: f64,
    pub mi_ng: f64,
    pub unlearned_mean_sigmoid: f64,
    pub negative_mean_sigmoid: f64,
    pub unlearned_edges: usize,
}

impl MetricsReport {
    pub fn evaluate(
        before: &ScoreModel,
        after: &ScoreModel,
        train: &InteractionGraph,
        test: &[Edge],
        delta: &[Edge],
        negatives: &[Edge],
        n: usize,
    ) -> Result<Self> {
        let unlearned = mean_sigmoid(after, delta)?;
        let negative = mean_sigmoid(after, negatives)?;
        Ok(Self {
            rank: rank_metrics(after, train, test, n)?,
            mi_bf: mi_bf(before, after, delta)?,
            mi_ng: negative / unlearned,
            unlearned_mean_sigmoid: unlearned,
            negative_mean_sigmoid: negative,
            unlearned_edges: delta.len(),
        })
    }

    /// `(metric, value)` pairs in a fixed order.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let n = self.rank.n;
        vec![
            (format!("recall@{n}"), self.rank.recall),
            (format!("ndcg@{n}"), self.rank.ndcg),
            ("mi_bf".into(), self.mi_bf),
            ("mi_ng".into(), self.mi_ng),
            ("unlearned_mean_sigmoid".into(), self.unlearned_mean_sigmoid),
            ("negative_mean_sigmoid".into(), self.negative_mean_sigmoid),
        ]
    }
}

/// `stage,metric,value` CSV.
pub fn write_metrics_csv(path: &Path, rows: &[(String, String, f64)]) -> Result<()> {
    let mut text = String::from("stage,metric,value\n");
    for (stage, metric, value) in rows {
        text.push_str(&format!("{stage},{metric},{value:.17e}\n"));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<(String, String, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        let parse_err = |message: &str| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: message.into(),
        };
        let mut parts = line.splitn(3, ',');
        let (Some(stage), Some(metric), Some(value)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err("expected stage,metric,value"));
        };
        let value: f64 = value.parse().map_err(|_| parse_err("bad value"))?;
        rows.push((stage.to_string(), metric.to_string(), value));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{seeded_rng, DenseMatrix};
    use proptest::prelude::*;
    use rand::Rng;

    /// Scores given directly: one user row `[1]`, item rows `[s_i]`.
    fn model_with_scores(scores: &[f64]) -> ScoreModel {
        let mut rows = vec![1.0];
        rows.extend_from_slice(scores);
        ScoreModel::new(1, scores.len(), DenseMatrix::column(rows)).unwrap()
    }

    fn empty_train(items: usize) -> InteractionGraph {
        InteractionGraph::new(1, items, []).unwrap()
    }

    #[test]
    fn top_ranked_single_item() {
        let m = model_with_scores(&[0.1, 0.9, 0.3]);
        let r = rank_metrics(&m, &empty_train(3), &[Edge::new(0, 1)], 20).unwrap();
        assert_eq!((r.recall, r.ndcg, r.users), (1.0, 1.0, 1));
    }

    #[test]
    fn half_recall() {
        let scores: Vec<f64> = (0..30).map(|i| -(i as f64)).collect();
        let m = model_with_scores(&scores);
        let r = rank_metrics(&m, &empty_train(30), &[Edge::new(0, 0), Edge::new(0, 25)], 20).unwrap();
        assert_eq!(r.recall, 0.5);
    }

    #[test]
    fn rank_two_ndcg() {
        let m = model_with_scores(&[0.9, 0.5, 0.1]);
        let r = rank_metrics(&m, &empty_train(3), &[Edge::new(0, 1)], 2).unwrap();
        assert!((r.ndcg - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert!((r.ndcg - 0.6309).abs() < 1e-4);
    }

    #[test]
    fn training_items_are_excluded_and_ties_go_to_lower_ids() {
        let m = model_with_scores(&[0.9, 0.5, 0.5, 0.5]);
        let train = InteractionGraph::new(1, 4, [Edge::new(0, 0)]).unwrap();
        assert_eq!(top_n(&m, 0, train.user_items(0), 2), vec![1, 2]);
        let r = rank_metrics(&m, &train, &[Edge::new(0, 1)], 1).unwrap();
        assert_eq!(r.recall, 1.0);
    }

    #[test]
    fn users_without_test_items_are_skipped() {
        let m = ScoreModel::new(2, 2, DenseMatrix::filled(4, 1, 1.0)).unwrap();
        let train = InteractionGraph::new(2, 2, []).unwrap();
        let r = rank_metrics(&m, &train, &[Edge::new(1, 0)], 1).unwrap();
        assert_eq!(r.users, 1);
    }

    #[test]
    fn mi_definitions() {
        let m = model_with_scores(&[0.0, 2.0, -1.0]);
        assert_eq!(mi_bf(&m, &m, &[Edge::new(0, 1), Edge::new(0, 2)]).unwrap(), 1.0);
        assert!(mi_bf(&m, &m, &[]).is_err());
        // equal scores on both sets give 1
        assert_eq!(mi_ng(&m, &[Edge::new(0, 1)], &[Edge::new(0, 1)]).unwrap(), 1.0);

        // before σ = 0.8, after σ = 0.2 -> 4
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let before = model_with_scores(&[logit(0.8)]);
        let after = model_with_scores(&[logit(0.2)]);
        assert!((mi_bf(&before, &after, &[Edge::new(0, 0)]).unwrap() - 4.0).abs() < 1e-12);
        let after = model_with_scores(&[logit(0.1), logit(0.3)]);
        assert!((mi_ng(&after, &[Edge::new(0, 0)], &[Edge::new(0, 1)]).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn negatives_avoid_known_pairs() {
        let g = InteractionGraph::new(10, 10, (0..10).flat_map(|u| (0..5).map(move |i| Edge::new(u, (u + i) % 10)))).unwrap();
        let neg = sample_mi_negatives(&g, 20, &mut seeded_rng(1));
        assert_eq!(neg.len(), 20);
        assert!(neg.iter().all(|e| !g.contains(*e)));
        assert!(neg.windows(2).all(|w| w[0] < w[1]));
        // asking for more than exist returns the whole complement
        assert_eq!(sample_mi_negatives(&g, 1000, &mut seeded_rng(1)).len(), 50);
        assert_eq!(sample_mi_negatives(&g, 20, &mut seeded_rng(3)), sample_mi_negatives(&g, 20, &mut seeded_rng(3)));
    }

    #[test]
    fn score_distribution_csv() {
        let m = model_with_scores(&[0.0, 1.0, -2.0]);
        let mut buf = Vec::new();
        let pos = [Edge::new(0, 0), Edge::new(0, 1)];
        export_score_distribution(&m, &[("positive", &pos), ("negative", &[]), ("unlearned", &[Edge::new(0, 2)])], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "set,user,item,score,sigmoid");
        assert_eq!(lines.len(), 1 + 3 + 2);
        let mean_row = lines.iter().find(|l| l.starts_with("mean:positive")).unwrap();
        let fields: Vec<&str> = mean_row.split(',').collect();
        assert!((fields[3].parse::<f64>().unwrap() - 0.5).abs() < 1e-15);
        let expected = (0.5 + sigmoid(1.0)) / 2.0;
        assert!((fields[4].parse::<f64>().unwrap() - expected).abs() < 1e-15);
        assert!(!text.contains("mean:negative"));
    }

    #[test]
    fn metrics_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let rows = vec![("before".to_string(), "recall@20".to_string(), 0.123456789)];
        write_metrics_csv(&path, &rows).unwrap();
        assert_eq!(read_metrics_csv(&path).unwrap(), rows);
    }

    /// Full sort of every item; direct formulas.
    fn brute_force(model: &ScoreModel, train: &InteractionGraph, test: &[Edge], n: usize) -> (f64, f64) {
        let (mut recall, mut ndcg, mut users) = (0.0, 0.0, 0);
        for u in 0..model.n_users() {
            let rel: Vec<usize> = {
                let mut v: Vec<usize> = test.iter().filter(|e| e.user == u).map(|e| e.item).collect();
                v.sort_unstable();
                v.dedup();
                v
            };
            if rel.is_empty() {
                continue;
            }
            let mut items: Vec<(f64, usize)> = (0..model.n_items())
                .filter(|&i| !train.contains(Edge::new(u, i)))
                .map(|i| (model.score(u, i), i))
                .collect();
            items.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let top: Vec<usize> = items.iter().take(n).map(|p| p.1).collect();
            let hits = top.iter().filter(|i| rel.contains(i)).count();
            let dcg: f64 = top
                .iter()
                .enumerate()
                .filter(|(_, i)| rel.contains(i))
                .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
                .sum();
            let idcg: f64 = (1..=rel.len().min(n)).map(|k| 1.0 / ((k + 1) as f64).log2()).sum();
            recall += hits as f64 / rel.len() as f64;
            ndcg += dcg / idcg;
            users += 1;
        }
        (recall / users as f64, ndcg / users as f64)
    }

    fn random_instance(seed: u64) -> (ScoreModel, InteractionGraph, Vec<Edge>, usize) {
        let mut rng = seeded_rng(seed);
        let users = rng.gen_range(1..=10);
        let items = rng.gen_range(2..=20);
        // Coarse scores so ties happen.
        let readout = DenseMatrix::from_vec(
            users + items,
            2,
            (0..(users + items) * 2).map(|_| rng.gen_range(-2i32..=2) as f64).collect(),
        )
        .unwrap();
        let mut train = Vec::new();
        let mut test = Vec::new();
        for u in 0..users {
            for i in 0..items {
                match rng.gen_range(0..10) {
                    0..=1 => train.push(Edge::new(u, i)),
                    2..=3 => test.push(Edge::new(u, i)),
                    _ => {}
                }
            }
        }
        if test.is_empty() {
            test.push(Edge::new(0, 0));
            train.retain(|e| *e != Edge::new(0, 0));
        }
        let n = rng.gen_range(1..=items);
        (
            ScoreModel::new(users, items, readout).unwrap(),
            InteractionGraph::new(users, items, train).unwrap(),
            test,
            n,
        )
    }

    #[test]
    fn agrees_with_brute_force_on_small_instances() {
        for seed in 0..100 {
            let (m, train, test, n) = random_instance(seed);
            let r = rank_metrics(&m, &train, &test, n).unwrap();
            let (recall, ndcg) = brute_force(&m, &train, &test, n);
            assert!((r.recall - recall).abs() < 1e-12, "seed {seed}");
            assert!((r.ndcg - ndcg).abs() < 1e-12, "seed {seed}");
        }
    }

    proptest! {
        #[test]
        fn metrics_survive_user_relabeling(seed in 0u64..300, shift in 1usize..10) {
            let (m, train, test, n) = random_instance(seed);
            let users = m.n_users();
            let perm = |u: usize| (u + shift) % users;
            let r = m.readout();
            let mut rows = vec![vec![0.0; r.cols()]; r.rows()];
            for u in 0..users {
                rows[perm(u)] = r.row(u).to_vec();
            }
            for i in users..r.rows() {
                rows[i] = r.row(i).to_vec();
            }
            let flat: Vec<f64> = rows.concat();
            let m2 = ScoreModel::new(users, m.n_items(), DenseMatrix::from_vec(r.rows(), r.cols(), flat).unwrap()).unwrap();
            let train2 = InteractionGraph::new(users, m.n_items(), train.edges().iter().map(|e| Edge::new(perm(e.user), e.item))).unwrap();
            let test2: Vec<Edge> = test.iter().map(|e| Edge::new(perm(e.user), e.item)).collect();
            let a = rank_metrics(&m, &train, &test, n).unwrap();
            let b = rank_metrics(&m2, &train2, &test2, n).unwrap();
            prop_assert!((a.recall - b.recall).abs() < 1e-12);
            prop_assert!((a.ndcg - b.ndcg).abs() < 1e-12);
        }
    }
}
