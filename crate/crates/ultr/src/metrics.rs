//! Relevance-ranking evaluation (NDCG@k, MAP) and diagnostic exports.
//!
//! Evaluation always scores against graded labels on held-out data, never
//! against clicks. Queries whose ideal DCG is zero (all labels 0) are skipped
//! and counted, not averaged as zeros.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DenseFeatures};
use crate::debias::TrainHistory;
use crate::error::Result;
use crate::gbdt::Ensemble;

/// NDCG cutoffs reported by default.
pub const DEFAULT_NDCG_CUTS: [usize; 4] = [1, 3, 5, 10];

/// Grade at or above which a document counts as relevant for MAP.
pub const DEFAULT_MAP_THRESHOLD: u8 = 1;

/// Ranking order: score descending, ties toward the lower index.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order
}

#[inline]
fn gain(label: u8) -> f64 {
    (1u64 << label) as f64 - 1.0
}

/// NDCG@k with gains `2^label - 1` and discounts `1/log2(1 + rank)`.
/// Returns `None` (the skip signal) when the ideal DCG is zero.
pub fn ndcg_at_k(labels: &[u8], scores: &[f64], k: usize) -> Option<f64> {
    assert_eq!(labels.len(), scores.len());
    assert!(k >= 1);
    let order = ranking(scores);
    let dcg: f64 = order
        .iter()
        .take(k)
        .enumerate()
        .map(|(r, &d)| gain(labels[d]) / ((r + 2) as f64).log2())
        .sum();
    let mut ideal: Vec<u8> = labels.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(r, &l)| gain(l) / ((r + 2) as f64).log2())
        .sum();
    if idcg == 0.0 {
        None
    } else {
        Some(dcg / idcg)
    }
}

/// Average precision over binarized relevance (`label >= threshold`).
/// Returns `None` when the query has no relevant document.
pub fn average_precision(labels: &[u8], scores: &[f64], threshold: u8) -> Option<f64> {
    assert_eq!(labels.len(), scores.len());
    let order = ranking(scores);
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, &d) in order.iter().enumerate() {
        if labels[d] >= threshold {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    if hits == 0 {
        None
    } else {
        Some(sum / hits as f64)
    }
}

/// Aggregate evaluation over a labeled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean NDCG per cutoff, over queries with nonzero ideal DCG.
    pub ndcg_at: BTreeMap<usize, f64>,
    /// Mean average precision over queries with at least one relevant doc.
    pub map_score: f64,
    pub n_queries_scored: usize,
    /// Queries skipped for zero ideal DCG (all labels 0).
    pub n_queries_skipped: usize,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (&k, &v) in &self.ndcg_at {
            out.push_str(&format!("ndcg@{k},{v}\n"));
        }
        out.push_str(&format!("map,{}\n", self.map_score));
        out.push_str(&format!("queries_scored,{}\n", self.n_queries_scored));
        out.push_str(&format!("queries_skipped,{}\n", self.n_queries_skipped));
        out
    }
}

/// Evaluates per-query score slices against the dataset's labels.
pub fn evaluate_scores(
    data: &Dataset,
    scores: &[f64],
    cuts: &[usize],
    map_threshold: u8,
) -> EvalReport {
    let offsets = data.row_offsets();
    let mut ndcg_sums: BTreeMap<usize, f64> = cuts.iter().map(|&k| (k, 0.0)).collect();
    let mut map_sum = 0.0;
    let mut map_count = 0usize;
    let mut scored = 0usize;
    let mut skipped = 0usize;

    for (q, group) in data.queries.iter().enumerate() {
        let labels: Vec<u8> = group.docs.iter().map(|d| d.label).collect();
        let s = &scores[offsets[q]..offsets[q + 1]];
        let mut any = false;
        for &k in cuts {
            if let Some(v) = ndcg_at_k(&labels, s, k) {
                *ndcg_sums.get_mut(&k).unwrap() += v;
                any = true;
            }
        }
        if any {
            scored += 1;
        } else {
            skipped += 1;
        }
        if let Some(ap) = average_precision(&labels, s, map_threshold) {
            map_sum += ap;
            map_count += 1;
        }
    }

    EvalReport {
        ndcg_at: ndcg_sums
            .into_iter()
            .map(|(k, sum)| (k, if scored > 0 { sum / scored as f64 } else { 0.0 }))
            .collect(),
        map_score: if map_count > 0 {
            map_sum / map_count as f64
        } else {
            0.0
        },
        n_queries_scored: scored,
        n_queries_skipped: skipped,
    }
}

/// Scores a model over a dataset and evaluates it at the default cutoffs.
pub fn evaluate(data: &Dataset, model: &Ensemble) -> Result<EvalReport> {
    model.check_features(data.num_features)?;
    let dense = DenseFeatures::from_dataset(data);
    let scores = model.predict(&dense);
    Ok(evaluate_scores(
        data,
        &scores,
        &DEFAULT_NDCG_CUTS,
        DEFAULT_MAP_THRESHOLD,
    ))
}

/// Average positions after re-ranking, per original position.
///
/// Each list gives, in original-ranker order, the new score of the document
/// shown at that position. Re-rank each list by score (ties keep the lower
/// original position first) and return, for every original position, the mean
/// 1-based position those documents now occupy. Passing labels as scores
/// yields the ground-truth curve.
pub fn avg_rerank_positions(score_lists: &[Vec<f64>]) -> Vec<f64> {
    let max_len = score_lists.iter().map(|l| l.len()).max().unwrap_or(0);
    let mut sums = vec![0.0; max_len];
    let mut counts = vec![0usize; max_len];
    for list in score_lists {
        let order = ranking(list);
        for (new_rank, &orig_pos) in order.iter().enumerate() {
            sums[orig_pos] += (new_rank + 1) as f64;
            counts[orig_pos] += 1;
        }
    }
    (0..max_len)
        .map(|p| if counts[p] == 0 { 0.0 } else { sums[p] / counts[p] as f64 })
        .collect()
}

/// Writes bias-ratio snapshots as CSV rows `round,position,t_plus,t_minus`.
/// The first snapshot is the all-ones initialization.
pub fn export_bias_curves(history: &TrainHistory, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "round,position,t_plus,t_minus")?;
    for snap in &history.bias {
        for (i, (tp, tm)) in snap.t_plus.iter().zip(&snap.t_minus).enumerate() {
            writeln!(w, "{},{},{},{}", snap.round, i + 1, tp, tm)?;
        }
    }
    Ok(())
}

/// Writes per-round training stats as CSV `round,objective,mean_abs_lambda`.
pub fn export_history(history: &TrainHistory, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "round,objective,mean_abs_lambda")?;
    for r in &history.rounds {
        writeln!(w, "{},{},{}", r.round, r.objective, r.mean_abs_lambda)?;
    }
    Ok(())
}

/// Spearman rank correlation between two equal-length slices (average ranks
/// for ties).
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap().then(a.cmp(&b)));
        let mut ranks = vec![0.0; v.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &o in &order[i..=j] {
                ranks[o] = avg;
            }
            i = j + 1;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..xs.len() {
        num += (rx[i] - mean) * (ry[i] - mean);
        dx += (rx[i] - mean).powi(2);
        dy += (ry[i] - mean).powi(2);
    }
    if dx == 0.0 || dy == 0.0 {
        0.0
    } else {
        num / (dx * dy).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_ranking_scores_one() {
        let labels = [3u8, 1, 0];
        let scores = [3.0, 2.0, 1.0];
        assert!((ndcg_at_k(&labels, &scores, 3).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reversed_binary_pair_matches_hand_value() {
        let labels = [1u8, 0];
        let scores = [0.0, 1.0];
        let got = ndcg_at_k(&labels, &scores, 2).unwrap();
        assert!((got - 1.0 / 3f64.log2()).abs() < 1e-5);
        assert!((got - 0.63093).abs() < 1e-5);
    }

    #[test]
    fn all_zero_labels_signal_skip() {
        assert_eq!(ndcg_at_k(&[0u8, 0, 0], &[1.0, 2.0, 3.0], 3), None);
    }

    #[test]
    fn map_single_relevant_first_and_second() {
        assert_eq!(average_precision(&[1u8, 0], &[2.0, 1.0], 1), Some(1.0));
        assert_eq!(average_precision(&[1u8, 0], &[1.0, 2.0], 1), Some(0.5));
    }

    #[test]
    fn map_two_relevant_listed_order() {
        let labels = [1u8, 0, 1];
        let scores = [3.0, 2.0, 1.0];
        let got = average_precision(&labels, &scores, 1).unwrap();
        assert!((got - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn map_skips_queries_without_relevant_docs() {
        assert_eq!(average_precision(&[0u8, 0], &[1.0, 2.0], 1), None);
    }

    /// Ideal DCG by brute-force permutation enumeration on short lists.
    fn ideal_dcg_enumerated(labels: &[u8]) -> f64 {
        fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
            if items.len() <= 1 {
                return vec![items.to_vec()];
            }
            let mut out = Vec::new();
            for (i, &x) in items.iter().enumerate() {
                let mut rest = items.to_vec();
                rest.remove(i);
                for mut p in permutations(&rest) {
                    p.insert(0, x);
                    out.push(p);
                }
            }
            out
        }
        let all: Vec<usize> = (0..labels.len()).collect();
        let mut best = 0.0f64;
        for perm in permutations(&all) {
            let dcg: f64 = perm
                .iter()
                .enumerate()
                .map(|(r, &d)| gain(labels[d]) / ((r + 2) as f64).log2())
                .sum();
            best = best.max(dcg);
        }
        best
    }

    #[test]
    fn ideal_normalization_matches_permutation_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let n = rng.random_range(1..=6);
            let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..=4) as u8).collect();
            if labels.iter().all(|&l| l == 0) {
                continue;
            }
            let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let got = ndcg_at_k(&labels, &scores, n).unwrap();
            let dcg: f64 = ranking(&scores)
                .iter()
                .enumerate()
                .map(|(r, &d)| gain(labels[d]) / ((r + 2) as f64).log2())
                .sum();
            let oracle = dcg / ideal_dcg_enumerated(&labels);
            assert!((got - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn rerank_identity_when_scores_preserve_order() {
        let lists: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..10).map(|i| 10.0 - i as f64).collect())
            .collect();
        let curve = avg_rerank_positions(&lists);
        for (p, &avg) in curve.iter().enumerate() {
            assert!((avg - (p + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn rerank_random_scores_center_near_middle() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let lists: Vec<Vec<f64>> = (0..1000)
            .map(|_| (0..10).map(|_| rng.random::<f64>()).collect())
            .collect();
        let curve = avg_rerank_positions(&lists);
        for &avg in &curve {
            assert!(avg > 1.0 && avg < 10.0);
        }
        let mean: f64 = curve.iter().sum::<f64>() / curve.len() as f64;
        assert!((mean - 5.5).abs() <= 0.2, "mean {mean}");
    }

    #[test]
    fn bias_curve_export_shape() {
        use crate::debias::{BiasSnapshot, TrainHistory};
        let history = TrainHistory {
            rounds: vec![],
            bias: vec![
                BiasSnapshot {
                    round: 0,
                    t_plus: vec![1.0; 10],
                    t_minus: vec![1.0; 10],
                },
                BiasSnapshot {
                    round: 5,
                    t_plus: (1..=10).map(|i| 1.0 / i as f64).collect(),
                    t_minus: vec![0.9; 10],
                },
            ],
        };
        let mut buf = Vec::new();
        export_bias_curves(&history, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 20, "header plus 10 rows per snapshot");
        assert_eq!(lines[1], "0,1,1,1", "initialization snapshot is all ones");
    }

    #[test]
    fn spearman_detects_monotone_relations() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = (0..10).map(|i| (10 - i) as f64).collect();
        assert!((spearman(&xs, &xs) - 1.0).abs() < 1e-12);
        assert!((spearman(&xs, &ys) + 1.0).abs() < 1e-12);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn ndcg_in_unit_interval(
                labels in prop::collection::vec(0u8..=4, 1..12),
                scores in prop::collection::vec(-10.0f64..10.0, 12),
                k in 1usize..12
            ) {
                let n = labels.len();
                if let Some(v) = ndcg_at_k(&labels, &scores[..n], k) {
                    prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
                }
            }

            #[test]
            fn ndcg_invariant_under_monotone_transforms(
                labels in prop::collection::vec(0u8..=4, 2..10),
                scores in prop::collection::vec(-5.0f64..5.0, 10),
                scale in 0.1f64..10.0,
                shift in -3.0f64..3.0
            ) {
                let n = labels.len();
                let s = &scores[..n];
                let transformed: Vec<f64> = s.iter().map(|v| scale * v + shift).collect();
                let a = ndcg_at_k(&labels, s, n);
                let b = ndcg_at_k(&labels, &transformed, n);
                match (a, b) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
                    (None, None) => {}
                    _ => prop_assert!(false, "skip signal changed under transform"),
                }
            }

            #[test]
            fn label_sorted_ranking_is_ideal(
                labels in prop::collection::vec(0u8..=4, 1..10)
            ) {
                let scores: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
                if labels.iter().any(|&l| l > 0) {
                    let v = ndcg_at_k(&labels, &scores, labels.len()).unwrap();
                    prop_assert!((v - 1.0).abs() < 1e-12);
                }
            }

            #[test]
            fn map_in_unit_interval(
                labels in prop::collection::vec(0u8..=4, 1..12),
                scores in prop::collection::vec(-10.0f64..10.0, 12)
            ) {
                let n = labels.len();
                if let Some(v) = average_precision(&labels, &scores[..n], 1) {
                    prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
                }
            }
        }
    }
}
