//! Pairwise lambda gradients: NDCG swap deltas, the pairwise logistic loss,
//! and per-document gradient accumulation with position-bias adjustment.
//!
//! A pair `(i, j)` always orders the preferred document first: `i` clicked and
//! `j` unclicked for click training, or `label_i > label_j` for labeled
//! training. The pair gradient is
//!
//! ```text
//! lambda_ij = -sigma / (1 + e^{sigma (f_i - f_j)}) * |dZ_ij|      (<= 0)
//! hess_ij   = sigma^2 * rho (1 - rho) * |dZ_ij|,  rho = 1/(1 + e^{sigma (f_i - f_j)})
//! ```
//!
//! and the bias adjustment divides both by `t+[pos_i] * t-[pos_j]`, positions
//! being the original logged ones. Accumulated per-document entries store the
//! descent direction: a positive lambda means the document's score should go
//! up. Per unit the entries sum to zero exactly (each pair contributes equal
//! and opposite amounts).

use rayon::prelude::*;

use crate::data::{ClickDataset, Dataset};
use crate::debias::BiasRatios;
use crate::error::{Error, Result};

/// Default logistic scale, per the pairwise loss definition.
pub const DEFAULT_SIGMA: f64 = 2.0;

/// Pairs of one training unit (a click session or a labeled query), over the
/// unit's local document slots.
#[derive(Debug, Clone)]
pub struct UnitPairs {
    /// Global row index of each local slot; slot order is the original logged
    /// order (click data) or the stored order (labeled data).
    pub rows: Vec<u32>,
    /// Per-slot gain: click bit for click training, `2^label - 1` for labeled.
    pub gains: Vec<f64>,
    /// (preferred slot, other slot).
    pub pairs: Vec<(u16, u16)>,
}

/// All training units plus the size of the global row space.
#[derive(Debug, Clone)]
pub struct PairSet {
    pub units: Vec<UnitPairs>,
    pub n_rows: usize,
}

impl PairSet {
    /// Click-training pairs: within each session, exactly the (clicked,
    /// unclicked) combinations. Sessions with zero clicks or all clicks yield
    /// no pairs and contribute nothing.
    pub fn from_click_data(clicks: &ClickDataset) -> PairSet {
        let offsets = clicks.source.row_offsets();
        let units = clicks
            .sessions
            .iter()
            .map(|s| {
                let rows: Vec<u32> = s
                    .doc_refs
                    .iter()
                    .map(|&d| (offsets[s.query as usize] + d as usize) as u32)
                    .collect();
                let gains: Vec<f64> = s.clicks.iter().map(|&c| c as u8 as f64).collect();
                let mut pairs = Vec::new();
                for (i, &ci) in s.clicks.iter().enumerate() {
                    if !ci {
                        continue;
                    }
                    for (j, &cj) in s.clicks.iter().enumerate() {
                        if !cj {
                            pairs.push((i as u16, j as u16));
                        }
                    }
                }
                UnitPairs { rows, gains, pairs }
            })
            .collect();
        PairSet {
            units,
            n_rows: clicks.source.total_docs(),
        }
    }

    /// Labeled-training pairs: within each query, all (higher grade, lower
    /// grade) combinations, with `2^label - 1` gains.
    pub fn from_labels(data: &Dataset) -> PairSet {
        let offsets = data.row_offsets();
        let units = data
            .queries
            .iter()
            .enumerate()
            .map(|(q, group)| {
                let rows: Vec<u32> = (0..group.docs.len())
                    .map(|d| (offsets[q] + d) as u32)
                    .collect();
                let gains: Vec<f64> = group
                    .docs
                    .iter()
                    .map(|d| (1u64 << d.label) as f64 - 1.0)
                    .collect();
                let mut pairs = Vec::new();
                for i in 0..group.docs.len() {
                    for j in 0..group.docs.len() {
                        if group.docs[i].label > group.docs[j].label {
                            pairs.push((i as u16, j as u16));
                        }
                    }
                }
                UnitPairs { rows, gains, pairs }
            })
            .collect();
        PairSet {
            units,
            n_rows: data.total_docs(),
        }
    }

    pub fn total_pairs(&self) -> usize {
        self.units.iter().map(|u| u.pairs.len()).sum()
    }
}

/// Per-document gradient accumulators for one boosting round. `lambda` is the
/// descent direction (positive pushes the score up); `hess` is non-negative.
#[derive(Debug, Clone)]
pub struct LambdaBuffer {
    pub lambda: Vec<f64>,
    pub hess: Vec<f64>,
}

/// Numerically safe `log(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Pairwise logistic loss `log(1 + e^{-sigma (f_i - f_j)}) * delta_z`.
/// Overflow-safe for any score gap.
#[inline]
pub fn pairwise_loss(f_i: f64, f_j: f64, delta_z: f64, sigma: f64) -> f64 {
    softplus(-sigma * (f_i - f_j)) * delta_z
}

/// Pair gradient and second derivative of [`pairwise_loss`] with respect to
/// `f_i`. Returns `(lambda_ij, hess_ij)` with `lambda_ij <= 0`, `hess_ij >= 0`.
#[inline]
pub fn lambda_pair(f_i: f64, f_j: f64, delta_z: f64, sigma: f64) -> (f64, f64) {
    let rho = sigmoid_neg(sigma * (f_i - f_j));
    (
        -sigma * rho * delta_z,
        sigma * sigma * rho * (1.0 - rho) * delta_z,
    )
}

/// `1 / (1 + e^x)` without overflow.
#[inline]
fn sigmoid_neg(x: f64) -> f64 {
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Per-slot 1-based ranks under the current scores, descending, ties broken
/// toward the earlier slot (stable sort).
pub fn rank_slots(scores: &[f64]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut ranks = vec![0u32; scores.len()];
    for (r, &slot) in order.iter().enumerate() {
        ranks[slot] = (r + 1) as u32;
    }
    ranks
}

#[inline]
fn discount(rank: u32) -> f64 {
    1.0 / ((1 + rank) as f64).log2()
}

fn ideal_dcg(gains: &[f64], k_cut: Option<usize>) -> f64 {
    let mut sorted: Vec<f64> = gains.to_vec();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    let k = k_cut.unwrap_or(sorted.len()).min(sorted.len());
    sorted[..k]
        .iter()
        .enumerate()
        .map(|(r, &g)| g * discount((r + 1) as u32))
        .sum()
}

/// Absolute NDCG change from swapping the documents at slots `i` and `j` in
/// the ranking `rank_order` (slot indices sorted best-first by the current
/// scores). Gains follow the training mode: click bits or `2^label - 1`.
/// Returns 0 when the ideal DCG is 0.
pub fn delta_ndcg(
    gains: &[f64],
    rank_order: &[usize],
    i: usize,
    j: usize,
    k_cut: Option<usize>,
) -> Result<f64> {
    if i == j {
        return Err(Error::InvalidArgument("delta_ndcg: i == j".into()));
    }
    let idcg = ideal_dcg(gains, k_cut);
    if idcg == 0.0 {
        return Ok(0.0);
    }
    let mut rank_of = vec![0u32; gains.len()];
    for (r, &slot) in rank_order.iter().enumerate() {
        rank_of[slot] = (r + 1) as u32;
    }
    Ok(swap_delta(
        gains[i],
        gains[j],
        rank_of[i],
        rank_of[j],
        idcg,
        k_cut,
    ))
}

#[inline]
fn swap_delta(g_i: f64, g_j: f64, rank_i: u32, rank_j: u32, idcg: f64, k_cut: Option<usize>) -> f64 {
    let d = |rank: u32| -> f64 {
        match k_cut {
            Some(k) if rank as usize > k => 0.0,
            _ => discount(rank),
        }
    };
    ((g_i - g_j) * (d(rank_i) - d(rank_j))).abs() / idcg
}

/// Everything one pair sweep produces: per-document lambda/hessian sums and
/// the per-position loss sums that drive the bias update.
pub(crate) struct SweepOutput {
    pub buffer: LambdaBuffer,
    /// `s_plus[i]`: sum over pairs whose clicked doc logs at position i+1 of
    /// `L_ij / t-[pos_j]`.
    pub s_plus: Vec<f64>,
    /// `s_minus[j]`: sum over pairs whose unclicked doc logs at position j+1
    /// of `L_ij / t+[pos_i]`.
    pub s_minus: Vec<f64>,
    /// Plain sum of `L_ij / (t+[pos_i] * t-[pos_j])` (the objective's pair
    /// term at the bias used for the sweep).
    pub weighted_loss: f64,
}

const SWEEP_CHUNK: usize = 512;

/// One pass over every pair at the given scores/bias. Parallel over fixed
/// session chunks, merged in order: bit-identical for any thread count.
pub(crate) fn sweep_pairs(
    pairs: &PairSet,
    scores: &[f64],
    bias: &BiasRatios,
    sigma: f64,
    max_position: usize,
) -> SweepOutput {
    struct ChunkAcc {
        entries: Vec<(u32, f64, f64)>,
        s_plus: Vec<f64>,
        s_minus: Vec<f64>,
        weighted_loss: f64,
    }

    let chunk_results: Vec<ChunkAcc> = pairs
        .units
        .par_chunks(SWEEP_CHUNK)
        .map(|units| {
            let mut acc = ChunkAcc {
                entries: Vec::new(),
                s_plus: vec![0.0; max_position],
                s_minus: vec![0.0; max_position],
                weighted_loss: 0.0,
            };
            let mut f = Vec::new();
            for unit in units {
                if unit.pairs.is_empty() {
                    continue;
                }
                f.clear();
                f.extend(unit.rows.iter().map(|&r| scores[r as usize]));
                let ranks = rank_slots(&f);
                let idcg = ideal_dcg(&unit.gains, None);
                if idcg == 0.0 {
                    continue;
                }
                for &(i, j) in &unit.pairs {
                    let (i, j) = (i as usize, j as usize);
                    let dz = swap_delta(unit.gains[i], unit.gains[j], ranks[i], ranks[j], idcg, None);
                    let t_plus = bias.t_plus_at(i + 1);
                    let t_minus = bias.t_minus_at(j + 1);
                    let w = t_plus * t_minus;
                    let (lam, hes) = lambda_pair(f[i], f[j], dz, sigma);
                    let lam_adj = lam / w;
                    let hes_adj = hes / w;
                    // Store the descent direction: -lambda_ij pushes the
                    // preferred document up.
                    acc.entries.push((unit.rows[i], -lam_adj, hes_adj));
                    acc.entries.push((unit.rows[j], lam_adj, hes_adj));
                    let loss = pairwise_loss(f[i], f[j], dz, sigma);
                    acc.s_plus[i] += loss / t_minus;
                    acc.s_minus[j] += loss / t_plus;
                    acc.weighted_loss += loss / w;
                }
            }
            acc
        })
        .collect();

    let mut buffer = LambdaBuffer {
        lambda: vec![0.0; pairs.n_rows],
        hess: vec![0.0; pairs.n_rows],
    };
    let mut s_plus = vec![0.0; max_position];
    let mut s_minus = vec![0.0; max_position];
    let mut weighted_loss = 0.0;
    for acc in chunk_results {
        for (row, dl, dh) in acc.entries {
            buffer.lambda[row as usize] += dl;
            buffer.hess[row as usize] += dh;
        }
        for p in 0..max_position {
            s_plus[p] += acc.s_plus[p];
            s_minus[p] += acc.s_minus[p];
        }
        weighted_loss += acc.weighted_loss;
    }
    SweepOutput {
        buffer,
        s_plus,
        s_minus,
        weighted_loss,
    }
}

/// Accumulates bias-adjusted lambda gradients and hessians per document.
///
/// Each pair's `lambda_ij` and `hess_ij` are divided by
/// `t+[pos_i] * t-[pos_j]`; positions beyond the bias vectors reuse the last
/// entry. With all ratios at 1 the output is the plain unadjusted lambda sum.
pub fn accumulate_lambdas(
    pairs: &PairSet,
    scores: &[f64],
    bias: &BiasRatios,
    sigma: f64,
) -> LambdaBuffer {
    let max_position = pairs
        .units
        .iter()
        .map(|u| u.rows.len())
        .max()
        .unwrap_or(0)
        .max(1);
    sweep_pairs(pairs, scores, bias, sigma, max_position).buffer
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_bias(k: usize) -> BiasRatios {
        BiasRatios::ones(k, 0.0, 0.01)
    }

    /// Independent NDCG oracle: full DCG over an explicit ranking.
    fn ndcg_of_order(gains: &[f64], order: &[usize]) -> f64 {
        let dcg: f64 = order
            .iter()
            .enumerate()
            .map(|(r, &s)| gains[s] / ((r + 2) as f64).log2())
            .sum();
        let mut ideal: Vec<f64> = gains.to_vec();
        ideal.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
        let idcg: f64 = ideal
            .iter()
            .enumerate()
            .map(|(r, &g)| g / ((r + 2) as f64).log2())
            .sum();
        if idcg == 0.0 {
            0.0
        } else {
            dcg / idcg
        }
    }

    #[test]
    fn delta_ndcg_matches_full_recompute() {
        let gains = [1.0, 0.0];
        let order = [0usize, 1];
        let got = delta_ndcg(&gains, &order, 0, 1, None).unwrap();
        let before = ndcg_of_order(&gains, &[0, 1]);
        let after = ndcg_of_order(&gains, &[1, 0]);
        assert!((got - (before - after).abs()).abs() < 1e-12);
        assert!((got - 0.36907).abs() < 1e-5);
    }

    #[test]
    fn delta_ndcg_random_swaps_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(2..10);
            let gains: Vec<f64> = (0..n).map(|_| rng.random_range(0..3) as f64).collect();
            let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n);
            if i == j {
                j = (j + 1) % n;
            }
            let got = delta_ndcg(&gains, &order, i, j, None).unwrap();
            let mut swapped = order.clone();
            let pi = order.iter().position(|&s| s == i).unwrap();
            let pj = order.iter().position(|&s| s == j).unwrap();
            swapped.swap(pi, pj);
            let oracle = (ndcg_of_order(&gains, &order) - ndcg_of_order(&gains, &swapped)).abs();
            assert!((got - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_ndcg_equal_gains_is_zero() {
        let gains = [2.0, 2.0, 2.0];
        let order = [0usize, 1, 2];
        assert_eq!(delta_ndcg(&gains, &order, 0, 2, None).unwrap(), 0.0);
    }

    #[test]
    fn delta_ndcg_zero_ideal_is_zero() {
        let gains = [0.0, 0.0];
        let order = [0usize, 1];
        assert_eq!(delta_ndcg(&gains, &order, 0, 1, None).unwrap(), 0.0);
    }

    #[test]
    fn delta_ndcg_rejects_self_swap() {
        assert!(delta_ndcg(&[1.0, 0.0], &[0, 1], 1, 1, None).is_err());
    }

    #[test]
    fn pairwise_loss_known_values() {
        assert!((pairwise_loss(1.0, 1.0, 1.0, 2.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((pairwise_loss(1.0, 0.0, 1.0, 2.0) - 0.126928011042972).abs() < 1e-12);
        let big = pairwise_loss(-1000.0, 0.0, 1.0, 2.0);
        assert!(big.is_finite());
        assert!((big - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn lambda_pair_known_values() {
        let (l, h) = lambda_pair(0.5, 0.5, 1.0, 2.0);
        assert!((l - (-1.0)).abs() < 1e-12);
        assert!((h - 1.0).abs() < 1e-12);
        let (l, _) = lambda_pair(1e6, 0.0, 1.0, 2.0);
        assert!(l.abs() < 1e-12, "saturated pair has vanishing gradient");
    }

    #[test]
    fn lambda_pair_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let f_i: f64 = rng.random_range(-5.0..5.0);
            let f_j: f64 = rng.random_range(-5.0..5.0);
            let dz: f64 = rng.random_range(0.01..2.0);
            let sigma: f64 = rng.random_range(0.5..4.0);
            let (lam, _) = lambda_pair(f_i, f_j, dz, sigma);
            let eps = 1e-6;
            let fd = (pairwise_loss(f_i + eps, f_j, dz, sigma)
                - pairwise_loss(f_i - eps, f_j, dz, sigma))
                / (2.0 * eps);
            let rel = (lam - fd).abs() / fd.abs().max(1e-12);
            assert!(rel <= 1e-4, "rel error {rel} at fi={f_i} fj={f_j}");
        }
    }

    #[test]
    fn lambda_magnitude_decreases_with_score_gap() {
        let mut prev = f64::INFINITY;
        for step in 0..50 {
            let gap = -5.0 + step as f64 * 0.2;
            let (l, _) = lambda_pair(gap, 0.0, 1.0, 2.0);
            assert!(l.abs() <= prev + 1e-15);
            prev = l.abs();
        }
    }

    fn random_unit(rng: &mut ChaCha8Rng, n: usize, n_clicks: usize) -> (UnitPairs, Vec<f64>) {
        let mut clicks = vec![false; n];
        for c in 0..n_clicks {
            clicks[c * n / n_clicks] = true;
        }
        let gains: Vec<f64> = clicks.iter().map(|&c| c as u8 as f64).collect();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if clicks[i] && !clicks[j] {
                    pairs.push((i as u16, j as u16));
                }
            }
        }
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        (
            UnitPairs {
                rows: (0..n as u32).collect(),
                gains,
                pairs,
            },
            scores,
        )
    }

    #[test]
    fn lambdas_conserve_to_zero_per_session() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let (unit, scores) = random_unit(&mut rng, 8, 3);
            let pairs = PairSet {
                units: vec![unit],
                n_rows: 8,
            };
            // Arbitrary non-unit bias: conservation holds for any ratios.
            let mut bias = unit_bias(8);
            bias.set_for_test(
                vec![1.0, 0.8, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1],
                vec![1.0, 0.9, 0.7, 0.6, 0.5, 0.4, 0.35, 0.3],
            );
            let buf = accumulate_lambdas(&pairs, &scores, &bias, 2.0);
            let total: f64 = buf.lambda.iter().sum();
            assert!(total.abs() <= 1e-9, "sum {total}");
        }
    }

    #[test]
    fn unit_ratios_reproduce_unadjusted_lambdas() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (unit, scores) = random_unit(&mut rng, 6, 2);
        let pairs = PairSet {
            units: vec![unit.clone()],
            n_rows: 6,
        };
        let adjusted = accumulate_lambdas(&pairs, &scores, &unit_bias(6), 2.0);

        // Direct Eq.-style accumulation without any weighting.
        let ranks = rank_slots(&scores);
        let idcg = ideal_dcg(&unit.gains, None);
        let mut expect = vec![0.0; 6];
        for &(i, j) in &unit.pairs {
            let (i, j) = (i as usize, j as usize);
            let dz = swap_delta(unit.gains[i], unit.gains[j], ranks[i], ranks[j], idcg, None);
            let (l, _) = lambda_pair(scores[i], scores[j], dz, 2.0);
            expect[i] += -l;
            expect[j] += l;
        }
        for s in 0..6 {
            assert!((adjusted.lambda[s] - expect[s]).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_weight_scales_single_pair_linearly() {
        let unit = UnitPairs {
            rows: vec![0, 1],
            gains: vec![1.0, 0.0],
            pairs: vec![(0, 1)],
        };
        let pairs = PairSet {
            units: vec![unit],
            n_rows: 2,
        };
        let scores = [0.3, -0.2];
        let base = accumulate_lambdas(&pairs, &scores, &unit_bias(2), 2.0);
        let mut halved_bias = unit_bias(2);
        halved_bias.set_for_test(vec![1.0, 1.0], vec![1.0, 2.0]);
        let halved = accumulate_lambdas(&pairs, &scores, &halved_bias, 2.0);
        for s in 0..2 {
            assert!((halved.lambda[s] - base.lambda[s] / 2.0).abs() < 1e-15);
            assert!((halved.hess[s] - base.hess[s] / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_bias_scaling_divides_lambdas_by_c_squared() {
        // c = 2 keeps the arithmetic exact in binary floating point.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (unit, scores) = random_unit(&mut rng, 8, 3);
        let pairs = PairSet {
            units: vec![unit],
            n_rows: 8,
        };
        let base = accumulate_lambdas(&pairs, &scores, &unit_bias(8), 2.0);
        let mut scaled_bias = unit_bias(8);
        scaled_bias.set_for_test(vec![2.0; 8], vec![2.0; 8]);
        let scaled = accumulate_lambdas(&pairs, &scores, &scaled_bias, 2.0);
        for s in 0..8 {
            assert_eq!(scaled.lambda[s], base.lambda[s] / 4.0);
            assert_eq!(scaled.hess[s], base.hess[s] / 4.0);
        }
    }

    #[test]
    fn scaled_bias_preserves_split_decisions_without_l2() {
        use crate::data::{generate_synthetic, DenseFeatures, SyntheticConfig};
        use crate::gbdt::{build_bins, fit_tree, FitParams, Node};

        let data = generate_synthetic(&SyntheticConfig {
            n_queries: 20,
            docs_per_query: 8,
            n_features: 5,
            label_noise: 0.0,
            seed: 8,
        })
        .unwrap();
        let dense = DenseFeatures::from_dataset(&data);
        let bins = build_bins(&dense, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = dense.n_rows;

        let mut units = Vec::new();
        let offsets = data.row_offsets();
        for (q, group) in data.queries.iter().enumerate() {
            let rows: Vec<u32> = (0..group.docs.len()).map(|d| (offsets[q] + d) as u32).collect();
            let clicks: Vec<bool> = (0..group.docs.len()).map(|_| rng.random::<f64>() < 0.4).collect();
            let gains: Vec<f64> = clicks.iter().map(|&c| c as u8 as f64).collect();
            let mut prs = Vec::new();
            for i in 0..clicks.len() {
                for j in 0..clicks.len() {
                    if clicks[i] && !clicks[j] {
                        prs.push((i as u16, j as u16));
                    }
                }
            }
            units.push(UnitPairs { rows, gains, pairs: prs });
        }
        let pairs = PairSet { units, n_rows: n };
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();

        let params = FitParams {
            max_leaves: 8,
            min_docs_per_leaf: 5,
            l2_leaf_reg: 0.0,
        };
        let fit = |bias: &BiasRatios| {
            let buf = accumulate_lambdas(&pairs, &scores, bias, 2.0);
            let grad: Vec<f64> = buf.lambda.iter().map(|l| -l).collect();
            fit_tree(&bins, &grad, &buf.hess, &params)
        };
        let tree_a = fit(&unit_bias(8));
        let mut scaled = unit_bias(8);
        scaled.set_for_test(vec![2.0; 8], vec![2.0; 8]);
        let tree_b = fit(&scaled);

        let splits = |t: &crate::gbdt::Tree| -> Vec<(u32, u16)> {
            t.nodes
                .iter()
                .filter_map(|n| match n {
                    Node::Split { feature, bin, .. } => Some((*feature, *bin)),
                    _ => None,
                })
                .collect()
        };
        assert_eq!(splits(&tree_a), splits(&tree_b));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn loss_is_nonnegative_and_finite(
                fi in -100.0f64..100.0,
                fj in -100.0f64..100.0,
                dz in 0.0f64..2.0,
                sigma in 0.1f64..5.0
            ) {
                let l = pairwise_loss(fi, fj, dz, sigma);
                prop_assert!(l.is_finite());
                prop_assert!(l >= 0.0);
            }

            #[test]
            fn pair_gradient_sign_and_hessian(
                fi in -50.0f64..50.0,
                fj in -50.0f64..50.0,
                dz in 0.001f64..2.0,
                sigma in 0.1f64..5.0
            ) {
                let (l, h) = lambda_pair(fi, fj, dz, sigma);
                prop_assert!(l <= 0.0);
                prop_assert!(h >= 0.0);
            }
        }
    }
}
