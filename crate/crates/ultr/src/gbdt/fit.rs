//! Histogram-based regression tree fitting with second-order gradients.
//!
//! Trees grow best-first (leaf-wise) up to `max_leaves`, choosing at each step
//! the split with the largest gain anywhere on the frontier. Split gain and
//! leaf values use the standard second-order formulas
//!
//! ```text
//! gain(L, R) = G_L^2/(H_L + l2) + G_R^2/(H_R + l2) - G^2/(H + l2)
//! leaf value = -G / (H + l2)
//! ```
//!
//! All reductions are order-fixed so the same inputs produce a bit-identical
//! tree regardless of thread count.

use rayon::prelude::*;

use super::bins::BinIndex;
use super::{Node, Tree};

/// Tree-shape and regularization parameters.
#[derive(Debug, Clone)]
pub struct FitParams {
    pub max_leaves: usize,
    pub min_docs_per_leaf: usize,
    pub l2_leaf_reg: f64,
}

impl Default for FitParams {
    fn default() -> Self {
        FitParams {
            max_leaves: 31,
            min_docs_per_leaf: 20,
            l2_leaf_reg: 1.0,
        }
    }
}

/// Per-(feature, bin) gradient/hessian/count sums for one node, flattened over
/// the candidate feature list.
struct Histogram {
    g: Vec<f64>,
    h: Vec<f64>,
    c: Vec<u32>,
    offsets: Vec<usize>,
}

impl Histogram {
    fn empty(bins: &BinIndex, features: &[u32]) -> Histogram {
        let mut offsets = Vec::with_capacity(features.len() + 1);
        let mut total = 0;
        offsets.push(0);
        for &f in features {
            total += bins.n_bins_of(f as usize);
            offsets.push(total);
        }
        Histogram {
            g: vec![0.0; total],
            h: vec![0.0; total],
            c: vec![0; total],
            offsets,
        }
    }

    fn accumulate(&mut self, bins: &BinIndex, features: &[u32], grad: &[f64], hess: &[f64], rows: &[u32]) {
        for &r in rows {
            let r = r as usize;
            let row_bins = bins.row_bins(r);
            let (g, h) = (grad[r], hess[r]);
            for (slot, &f) in features.iter().enumerate() {
                let idx = self.offsets[slot] + row_bins[f as usize] as usize;
                self.g[idx] += g;
                self.h[idx] += h;
                self.c[idx] += 1;
            }
        }
    }

    fn merge(&mut self, other: &Histogram) {
        for i in 0..self.g.len() {
            self.g[i] += other.g[i];
            self.h[i] += other.h[i];
            self.c[i] += other.c[i];
        }
    }

    /// Sibling histogram via subtraction from the parent.
    fn subtract_from(&self, parent: &Histogram) -> Histogram {
        let mut out = Histogram {
            g: parent.g.clone(),
            h: parent.h.clone(),
            c: parent.c.clone(),
            offsets: parent.offsets.clone(),
        };
        for i in 0..out.g.len() {
            out.g[i] -= self.g[i];
            out.h[i] -= self.h[i];
            out.c[i] -= self.c[i];
        }
        out
    }

    fn feature_slice(&self, slot: usize) -> (&[f64], &[f64], &[u32]) {
        let (a, b) = (self.offsets[slot], self.offsets[slot + 1]);
        (&self.g[a..b], &self.h[a..b], &self.c[a..b])
    }
}

/// Rows are accumulated in fixed-size chunks merged in order, keeping the
/// floating-point sums independent of the thread schedule.
const HIST_CHUNK: usize = 8192;

fn build_histogram(
    bins: &BinIndex,
    features: &[u32],
    grad: &[f64],
    hess: &[f64],
    rows: &[u32],
) -> Histogram {
    if rows.len() <= HIST_CHUNK {
        let mut hist = Histogram::empty(bins, features);
        hist.accumulate(bins, features, grad, hess, rows);
        return hist;
    }
    let parts: Vec<Histogram> = rows
        .par_chunks(HIST_CHUNK)
        .map(|chunk| {
            let mut hist = Histogram::empty(bins, features);
            hist.accumulate(bins, features, grad, hess, chunk);
            hist
        })
        .collect();
    let mut iter = parts.into_iter();
    let mut hist = iter.next().unwrap();
    for part in iter {
        hist.merge(&part);
    }
    hist
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    gain: f64,
    /// Index into the candidate feature list.
    slot: usize,
    bin: usize,
}

fn score(g: f64, h: f64, l2: f64) -> f64 {
    let denom = h + l2;
    if denom > 0.0 {
        g * g / denom
    } else {
        0.0
    }
}

fn leaf_value(g: f64, h: f64, l2: f64) -> f64 {
    let denom = h + l2;
    if denom > 0.0 {
        let v = -g / denom;
        if v == 0.0 {
            0.0
        } else {
            v
        }
    } else {
        0.0
    }
}

/// Best valid split of one node, scanning every (feature, bin) candidate.
/// Ties resolve to the lowest feature slot, then the lowest bin.
fn best_split(
    hist: &Histogram,
    features: &[u32],
    sum_g: f64,
    sum_h: f64,
    count: u32,
    params: &FitParams,
) -> Option<SplitCandidate> {
    let parent_score = score(sum_g, sum_h, params.l2_leaf_reg);
    let min_docs = params.min_docs_per_leaf as u32;
    let mut best: Option<SplitCandidate> = None;
    for slot in 0..features.len() {
        let (g, h, c) = hist.feature_slice(slot);
        if g.len() < 2 {
            continue;
        }
        let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0u32);
        for b in 0..g.len() - 1 {
            gl += g[b];
            hl += h[b];
            cl += c[b];
            let cr = count - cl;
            if cl < min_docs || cr < min_docs {
                continue;
            }
            let gain = score(gl, hl, params.l2_leaf_reg)
                + score(sum_g - gl, sum_h - hl, params.l2_leaf_reg)
                - parent_score;
            if gain > 0.0 && best.map_or(true, |b| gain > b.gain) {
                best = Some(SplitCandidate {
                    gain,
                    slot,
                    bin: b,
                });
            }
        }
    }
    best
}

struct FrontierNode {
    /// Index of this node in the in-progress node vector.
    node_id: usize,
    rows: Vec<u32>,
    hist: Histogram,
    sum_g: f64,
    sum_h: f64,
    best: Option<SplitCandidate>,
}

/// Fits one regression tree to per-document gradients/hessians over all rows
/// and all features.
pub fn fit_tree(bins: &BinIndex, grad: &[f64], hess: &[f64], params: &FitParams) -> Tree {
    let rows: Vec<u32> = (0..bins.n_rows as u32).collect();
    let features: Vec<u32> = (0..bins.n_features as u32).collect();
    fit_tree_subset(bins, grad, hess, params, rows, &features)
}

/// Fits a tree using only the given rows (bagging) and candidate features
/// (feature sampling). Rows excluded here still route through the fitted tree
/// at prediction time.
pub fn fit_tree_subset(
    bins: &BinIndex,
    grad: &[f64],
    hess: &[f64],
    params: &FitParams,
    rows: Vec<u32>,
    features: &[u32],
) -> Tree {
    assert_eq!(grad.len(), bins.n_rows);
    assert_eq!(hess.len(), bins.n_rows);
    assert!(params.max_leaves >= 1);

    let mut sum_g = 0.0;
    let mut sum_h = 0.0;
    for &r in &rows {
        sum_g += grad[r as usize];
        sum_h += hess[r as usize];
    }
    if rows.is_empty() || sum_h == 0.0 {
        return Tree {
            nodes: vec![Node::Leaf { value: 0.0 }],
        };
    }

    let mut nodes: Vec<Node> = vec![Node::Leaf {
        value: leaf_value(sum_g, sum_h, params.l2_leaf_reg),
    }];
    let root_hist = build_histogram(bins, features, grad, hess, &rows);
    let root_best = best_split(&root_hist, features, sum_g, sum_h, rows.len() as u32, params);
    let mut frontier = vec![FrontierNode {
        node_id: 0,
        rows,
        hist: root_hist,
        sum_g,
        sum_h,
        best: root_best,
    }];

    let mut n_leaves = 1;
    while n_leaves < params.max_leaves {
        // Best-first: grow the frontier node with the largest gain.
        let Some(pick) = frontier
            .iter()
            .enumerate()
            .filter(|(_, n)| n.best.is_some())
            .max_by(|(ia, a), (ib, b)| {
                let (ga, gb) = (a.best.unwrap().gain, b.best.unwrap().gain);
                ga.partial_cmp(&gb)
                    .unwrap()
                    .then_with(|| ib.cmp(ia)) // tie: earlier node wins
            })
            .map(|(i, _)| i)
        else {
            break;
        };
        let node = frontier.swap_remove(pick);
        let cand = node.best.unwrap();
        let feature = features[cand.slot];

        let mut left_rows = Vec::new();
        let mut right_rows = Vec::new();
        for &r in &node.rows {
            if bins.bin(r as usize, feature as usize) as usize <= cand.bin {
                left_rows.push(r);
            } else {
                right_rows.push(r);
            }
        }

        // Fresh histogram for the smaller child; sibling by subtraction.
        let (small_rows, small_is_left) = if left_rows.len() <= right_rows.len() {
            (&left_rows, true)
        } else {
            (&right_rows, false)
        };
        let small_hist = build_histogram(bins, features, grad, hess, small_rows);
        let large_hist = small_hist.subtract_from(&node.hist);
        let (left_hist, right_hist) = if small_is_left {
            (small_hist, large_hist)
        } else {
            (large_hist, small_hist)
        };

        let mut lg = 0.0;
        let mut lh = 0.0;
        for &r in &left_rows {
            lg += grad[r as usize];
            lh += hess[r as usize];
        }
        let rg = node.sum_g - lg;
        let rh = node.sum_h - lh;

        let left_id = nodes.len();
        nodes.push(Node::Leaf {
            value: leaf_value(lg, lh, params.l2_leaf_reg),
        });
        let right_id = nodes.len();
        nodes.push(Node::Leaf {
            value: leaf_value(rg, rh, params.l2_leaf_reg),
        });
        nodes[node.node_id] = Node::Split {
            feature,
            threshold: bins.boundary(feature as usize, cand.bin),
            bin: cand.bin as u16,
            left: left_id as u32,
            right: right_id as u32,
        };
        n_leaves += 1;

        let left_best = best_split(&left_hist, features, lg, lh, left_rows.len() as u32, params);
        let right_best = best_split(&right_hist, features, rg, rh, right_rows.len() as u32, params);
        frontier.push(FrontierNode {
            node_id: left_id,
            rows: left_rows,
            hist: left_hist,
            sum_g: lg,
            sum_h: lh,
            best: left_best,
        });
        frontier.push(FrontierNode {
            node_id: right_id,
            rows: right_rows,
            hist: right_hist,
            sum_g: rg,
            sum_h: rh,
            best: right_best,
        });
    }

    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, DenseFeatures, Document, QueryGroup};
    use crate::gbdt::bins::build_bins;

    fn dense(rows: &[Vec<f64>]) -> DenseFeatures {
        let nf = rows[0].len();
        let docs = rows
            .iter()
            .map(|r| Document {
                features: r.iter().enumerate().map(|(i, &v)| (i as u32, v)).collect(),
                label: 0,
            })
            .collect();
        DenseFeatures::from_dataset(&Dataset {
            queries: vec![QueryGroup {
                query_id: "1".into(),
                docs,
            }],
            num_features: nf,
        })
    }

    /// Exhaustive (feature, bin) search with the same gain formula; returns
    /// the best gain or None.
    fn brute_force_best_gain(
        bins: &BinIndex,
        grad: &[f64],
        hess: &[f64],
        params: &FitParams,
    ) -> Option<(f64, usize, usize)> {
        let n = bins.n_rows;
        let total_g: f64 = grad.iter().sum();
        let total_h: f64 = hess.iter().sum();
        let parent = score(total_g, total_h, params.l2_leaf_reg);
        let mut best: Option<(f64, usize, usize)> = None;
        for f in 0..bins.n_features {
            for b in 0..bins.n_bins_of(f).saturating_sub(1) {
                let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
                for r in 0..n {
                    if (bins.bin(r, f) as usize) <= b {
                        gl += grad[r];
                        hl += hess[r];
                        cl += 1;
                    }
                }
                if cl < params.min_docs_per_leaf || n - cl < params.min_docs_per_leaf {
                    continue;
                }
                let gain = score(gl, hl, params.l2_leaf_reg)
                    + score(total_g - gl, total_h - hl, params.l2_leaf_reg)
                    - parent;
                if gain > 0.0 && best.map_or(true, |(g, _, _)| gain > g) {
                    best = Some((gain, f, b));
                }
            }
        }
        best
    }

    #[test]
    fn zero_gradients_give_single_zero_leaf() {
        let f = dense(&[vec![0.0], vec![1.0], vec![2.0]]);
        let bins = build_bins(&f, 4);
        let tree = fit_tree(&bins, &[0.0; 3], &[1.0; 3], &FitParams {
            max_leaves: 8,
            min_docs_per_leaf: 1,
            l2_leaf_reg: 0.0,
        });
        assert_eq!(tree.nodes, vec![Node::Leaf { value: 0.0 }]);
    }

    #[test]
    fn zero_hessians_give_single_zero_leaf() {
        let f = dense(&[vec![0.0], vec![1.0]]);
        let bins = build_bins(&f, 4);
        let tree = fit_tree(&bins, &[1.0, -1.0], &[0.0, 0.0], &FitParams::default());
        assert_eq!(tree.nodes, vec![Node::Leaf { value: 0.0 }]);
    }

    #[test]
    fn splits_on_separating_feature_with_unit_leaves() {
        // grad = -1 where feature0 <= 0.5, +1 otherwise; hess = 1, l2 = 0.
        // Expect a depth-1 tree on feature 0 with leaf values +1 (left) and -1.
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![if i < 10 { 0.3 } else { 0.8 }, (i % 7) as f64])
            .collect();
        let f = dense(&rows);
        let bins = build_bins(&f, 8);
        let grad: Vec<f64> = (0..20).map(|i| if i < 10 { -1.0 } else { 1.0 }).collect();
        let hess = vec![1.0; 20];
        let params = FitParams {
            max_leaves: 2,
            min_docs_per_leaf: 1,
            l2_leaf_reg: 0.0,
        };
        let tree = fit_tree(&bins, &grad, &hess, &params);
        match tree.nodes[0] {
            Node::Split { feature, left, right, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(tree.nodes[left as usize], Node::Leaf { value: 1.0 });
                assert_eq!(tree.nodes[right as usize], Node::Leaf { value: -1.0 });
            }
            _ => panic!("expected a split at the root"),
        }
        // And the chosen gain is the brute-force maximum.
        let brute = brute_force_best_gain(&bins, &grad, &hess, &params).unwrap();
        assert_eq!(brute.1, 0, "brute force also splits feature 0");
    }

    #[test]
    fn single_doc_leaf_value_matches_formula() {
        let f = dense(&[vec![1.0]]);
        let bins = build_bins(&f, 2);
        let tree = fit_tree(&bins, &[-2.0], &[1.0], &FitParams {
            max_leaves: 4,
            min_docs_per_leaf: 1,
            l2_leaf_reg: 1.0,
        });
        assert_eq!(tree.nodes, vec![Node::Leaf { value: 1.0 }]);
    }

    #[test]
    fn chosen_split_matches_brute_force_on_random_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for trial in 0..20 {
            let n = rng.random_range(20..=200);
            let nf = rng.random_range(1..=10);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..nf).map(|_| rng.random::<f64>()).collect())
                .collect();
            let f = dense(&rows);
            let bins = build_bins(&f, 16);
            let grad: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let hess: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let params = FitParams {
                max_leaves: 2,
                min_docs_per_leaf: 5,
                l2_leaf_reg: 1.0,
            };
            let tree = fit_tree(&bins, &grad, &hess, &params);
            let brute = brute_force_best_gain(&bins, &grad, &hess, &params);
            match (&tree.nodes[0], brute) {
                (Node::Split { feature, bin, .. }, Some((_, bf, bb))) => {
                    assert_eq!(*feature as usize, bf, "trial {trial}");
                    assert_eq!(*bin as usize, bb, "trial {trial}");
                }
                (Node::Leaf { .. }, None) => {}
                (node, brute) => panic!("trial {trial}: fitter {node:?} vs brute {brute:?}"),
            }
        }
    }

    #[test]
    fn leaf_values_match_partition_sums() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let n = 150;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
            .collect();
        let f = dense(&rows);
        let bins = build_bins(&f, 16);
        let grad: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let hess: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.1).collect();
        let l2 = 0.7;
        let tree = fit_tree(&bins, &grad, &hess, &FitParams {
            max_leaves: 8,
            min_docs_per_leaf: 5,
            l2_leaf_reg: l2,
        });
        // Route every row, then recompute each leaf's value from its docs.
        let mut leaf_g = std::collections::HashMap::new();
        let mut leaf_h = std::collections::HashMap::new();
        for r in 0..n {
            let mut id = 0usize;
            loop {
                match tree.nodes[id] {
                    Node::Split { feature, bin, left, right, .. } => {
                        id = if (bins.bin(r, feature as usize) as u16) <= bin {
                            left as usize
                        } else {
                            right as usize
                        };
                    }
                    Node::Leaf { .. } => break,
                }
            }
            *leaf_g.entry(id).or_insert(0.0) += grad[r];
            *leaf_h.entry(id).or_insert(0.0) += hess[r];
        }
        for (id, g) in leaf_g {
            let h = leaf_h[&id];
            if let Node::Leaf { value } = tree.nodes[id] {
                assert!((value - (-g / (h + l2))).abs() <= 1e-9);
            } else {
                panic!("routing reached a non-leaf");
            }
        }
    }

    #[test]
    fn shrunk_tree_never_increases_second_order_surrogate() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let n = 120;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..5).map(|_| rng.random::<f64>()).collect())
                .collect();
            let f = dense(&rows);
            let bins = build_bins(&f, 16);
            let grad: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let hess: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let tree = fit_tree(&bins, &grad, &hess, &FitParams {
                max_leaves: 8,
                min_docs_per_leaf: 5,
                l2_leaf_reg: 0.5,
            });
            for eta in [0.05, 0.5, 1.0] {
                let mut surrogate = 0.0;
                for r in 0..n {
                    let delta = eta * tree.predict_binned(&bins, r);
                    surrogate += grad[r] * delta + 0.5 * hess[r] * delta * delta;
                }
                assert!(
                    surrogate <= 1e-12,
                    "surrogate increased by {surrogate} at eta={eta}"
                );
            }
        }
    }

    #[test]
    fn respects_min_docs_per_leaf() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let n = 60;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>()]).collect();
        let f = dense(&rows);
        let bins = build_bins(&f, 16);
        let grad: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let hess = vec![1.0; n];
        let min_docs = 10;
        let tree = fit_tree(&bins, &grad, &hess, &FitParams {
            max_leaves: 16,
            min_docs_per_leaf: min_docs,
            l2_leaf_reg: 0.0,
        });
        let mut leaf_counts = std::collections::HashMap::new();
        for r in 0..n {
            let mut id = 0usize;
            loop {
                match tree.nodes[id] {
                    Node::Split { feature, bin, left, right, .. } => {
                        id = if (bins.bin(r, feature as usize) as u16) <= bin {
                            left as usize
                        } else {
                            right as usize
                        };
                    }
                    Node::Leaf { .. } => break,
                }
            }
            *leaf_counts.entry(id).or_insert(0usize) += 1;
        }
        for (_, c) in leaf_counts {
            assert!(c >= min_docs);
        }
    }
}
