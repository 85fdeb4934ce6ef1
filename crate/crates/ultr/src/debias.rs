//! Joint position-bias estimation and ranker training.
//!
//! Bias ratios `t+` (click position) and `t-` (unclick position) reweight
//! every pair's loss as `L_ij / (t+[pos_i] * t-[pos_j])`. With the ranker
//! frozen, the regularized objective
//!
//! ```text
//! sum_pairs L_ij / (t+_i t-_j) + ||t+||_p^p + ||t-||_p^p,   t+_1 = t-_1 = 1
//! ```
//!
//! has closed-form coordinate minimizers, and the update normalizes them so
//! position 1 stays exactly 1:
//!
//! ```text
//! t+[i] = (S+[i] / S+[1])^(1/(p+1)),   S+[i] = sum over pairs clicked at i of L_ij / t-[pos_j]
//! t-[j] = (S-[j] / S-[1])^(1/(p+1)),   S-[j] = sum over pairs unclicked at j of L_ij / t+[pos_i]
//! ```
//!
//! Training interleaves these updates with boosting rounds: accumulate
//! adjusted lambdas, fit one tree, re-estimate the ratios from the new scores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClickDataset, Dataset, DenseFeatures};
use crate::error::{Error, Result};
use crate::gbdt::{build_bins, fit_tree_subset, Ensemble, FitParams};
use crate::lambda::{pairwise_loss, rank_slots, sweep_pairs, PairSet, DEFAULT_SIGMA};

/// Position-bias ratios at click (`t+`) and unclick (`t-`) positions,
/// 1-indexed, both anchored to 1 at position 1 and floored at a small
/// positive value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRatios {
    t_plus: Vec<f64>,
    t_minus: Vec<f64>,
    /// Regularization order used by updates.
    pub p: f64,
    /// Lower clamp for every ratio.
    pub floor: f64,
}

impl BiasRatios {
    /// All-ones initialization over `k` positions.
    pub fn ones(k: usize, p: f64, floor: f64) -> BiasRatios {
        BiasRatios {
            t_plus: vec![1.0; k.max(1)],
            t_minus: vec![1.0; k.max(1)],
            p,
            floor,
        }
    }

    pub fn len(&self) -> usize {
        self.t_plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_plus.is_empty()
    }

    pub fn t_plus(&self) -> &[f64] {
        &self.t_plus
    }

    pub fn t_minus(&self) -> &[f64] {
        &self.t_minus
    }

    /// `t+` at a 1-based position; positions beyond the vector reuse the last
    /// entry.
    #[inline]
    pub fn t_plus_at(&self, position: usize) -> f64 {
        self.t_plus[(position - 1).min(self.t_plus.len() - 1)]
    }

    #[inline]
    pub fn t_minus_at(&self, position: usize) -> f64 {
        self.t_minus[(position - 1).min(self.t_minus.len() - 1)]
    }

    /// Closed-form update from per-position loss sums. Each ratio becomes
    /// `(S[i]/S[1])^(1/(p+1))` clamped below at `floor`; position 1 is set to
    /// exactly 1. For `p = 0` the exponent is 1.
    ///
    /// Returns false (ratios unchanged, warning logged) when either anchor
    /// sum `S[1]` is zero.
    pub fn update(&mut self, s_plus: &[f64], s_minus: &[f64]) -> bool {
        assert_eq!(s_plus.len(), s_minus.len());
        if s_plus.is_empty() {
            return false;
        }
        let (anchor_plus, anchor_minus) = (s_plus[0], s_minus[0]);
        if anchor_plus <= 0.0 || anchor_minus <= 0.0 {
            log::warn!(
                "bias update skipped: zero anchor sum at position 1 (S+={anchor_plus}, S-={anchor_minus})"
            );
            return false;
        }
        let e = 1.0 / (self.p + 1.0);
        self.t_plus = s_plus
            .iter()
            .map(|&s| (s / anchor_plus).powf(e).max(self.floor))
            .collect();
        self.t_minus = s_minus
            .iter()
            .map(|&s| (s / anchor_minus).powf(e).max(self.floor))
            .collect();
        self.t_plus[0] = 1.0;
        self.t_minus[0] = 1.0;
        true
    }

    /// `||t+||_p^p + ||t-||_p^p`. For `p = 0` this is formally the support
    /// count, which is the constant `2k` here because the floor keeps every
    /// entry nonzero.
    pub fn regularizer(&self, p: f64) -> f64 {
        if p == 0.0 {
            (self.t_plus.len() + self.t_minus.len()) as f64
        } else {
            self.t_plus.iter().map(|t| t.powf(p)).sum::<f64>()
                + self.t_minus.iter().map(|t| t.powf(p)).sum::<f64>()
        }
    }

    #[cfg(test)]
    pub(crate) fn set_for_test(&mut self, t_plus: Vec<f64>, t_minus: Vec<f64>) {
        self.t_plus = t_plus;
        self.t_minus = t_minus;
    }
}

/// GBDT hyperparameters. Defaults are the standard LightGBM-style settings:
/// 300 trees come from [`TrainConfig::rounds`]; here live learning rate 0.05,
/// 31 leaves, feature and bagging fractions 0.9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub min_docs_per_leaf: usize,
    pub l2_leaf_reg: f64,
    pub n_bins: usize,
    pub feature_fraction: f64,
    pub bagging_fraction: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            learning_rate: 0.05,
            max_leaves: 31,
            min_docs_per_leaf: 20,
            l2_leaf_reg: 1.0,
            n_bins: 64,
            feature_fraction: 0.9,
            bagging_fraction: 0.9,
        }
    }
}

/// Full training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Boosting rounds (one tree each).
    pub rounds: usize,
    /// Regularization order for the ratio updates.
    pub p: f64,
    pub sigma: f64,
    /// Re-estimate the ratios every this many rounds.
    pub bias_update_interval: usize,
    /// When false the ratios stay pinned at 1: plain LambdaMART on clicks.
    pub debias: bool,
    pub floor: f64,
    pub gbdt: GbdtParams,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rounds: 300,
            p: 0.0,
            sigma: DEFAULT_SIGMA,
            bias_update_interval: 1,
            debias: true,
            floor: 0.01,
            gbdt: GbdtParams::default(),
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if self.rounds < 1 {
            return bad("rounds must be >= 1");
        }
        if !(self.p >= 0.0 && self.p.is_finite()) {
            return bad("p must be finite and >= 0");
        }
        if !(self.sigma > 0.0) {
            return bad("sigma must be > 0");
        }
        if self.bias_update_interval < 1 {
            return bad("bias_update_interval must be >= 1");
        }
        if !(self.floor > 0.0) {
            return bad("floor must be > 0");
        }
        if !(self.gbdt.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if self.gbdt.max_leaves < 1 {
            return bad("max_leaves must be >= 1");
        }
        if self.gbdt.min_docs_per_leaf < 1 {
            return bad("min_docs_per_leaf must be >= 1");
        }
        if self.gbdt.l2_leaf_reg < 0.0 {
            return bad("l2_leaf_reg must be >= 0");
        }
        if !(2..=256).contains(&self.gbdt.n_bins) {
            return bad("n_bins must be in 2..=256");
        }
        for (name, f) in [
            ("feature_fraction", self.gbdt.feature_fraction),
            ("bagging_fraction", self.gbdt.bagging_fraction),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must be in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Per-round training telemetry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundStat {
    pub round: usize,
    /// Objective at the round's final scores, with the ratios in effect while
    /// the round's lambdas were computed (i.e. before that round's update).
    pub objective: f64,
    pub mean_abs_lambda: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiasSnapshot {
    pub round: usize,
    pub t_plus: Vec<f64>,
    pub t_minus: Vec<f64>,
}

/// Training history: one stat row per round plus ratio snapshots (the first
/// snapshot is the all-ones initialization).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub rounds: Vec<RoundStat>,
    pub bias: Vec<BiasSnapshot>,
}

/// Output of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub ensemble: Ensemble,
    pub bias: BiasRatios,
    pub history: TrainHistory,
}

/// Per-position loss sums at the current scores:
/// `S+[i] = sum over pairs whose clicked doc sits at position i of L_ij / t-[pos_j]`,
/// `S-[j] = sum over pairs whose unclicked doc sits at position j of L_ij / t+[pos_i]`.
/// Vectors are sized to the longest unit; returns all zeros when there are no
/// pairs.
pub fn position_loss_sums(
    pairs: &PairSet,
    scores: &[f64],
    bias: &BiasRatios,
    sigma: f64,
) -> (Vec<f64>, Vec<f64>) {
    let k = pairs.units.iter().map(|u| u.rows.len()).max().unwrap_or(0);
    if k == 0 {
        return (Vec::new(), Vec::new());
    }
    let sweep = sweep_pairs(pairs, scores, bias, sigma, k);
    (sweep.s_plus, sweep.s_minus)
}

/// The regularized objective: weighted pair loss plus `L_p` norms of both
/// ratio vectors. For `p = 0` the norm term is the support count (see
/// [`BiasRatios::regularizer`]).
pub fn objective_value(
    pairs: &PairSet,
    scores: &[f64],
    bias: &BiasRatios,
    sigma: f64,
    p: f64,
) -> f64 {
    let mut total = 0.0;
    for unit in &pairs.units {
        if unit.pairs.is_empty() {
            continue;
        }
        let f: Vec<f64> = unit.rows.iter().map(|&r| scores[r as usize]).collect();
        let ranks = rank_slots(&f);
        let idcg: f64 = {
            let mut sorted = unit.gains.clone();
            sorted.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
            sorted
                .iter()
                .enumerate()
                .map(|(r, &g)| g / ((r + 2) as f64).log2())
                .sum()
        };
        if idcg == 0.0 {
            continue;
        }
        for &(i, j) in &unit.pairs {
            let (i, j) = (i as usize, j as usize);
            let dz = (unit.gains[i] - unit.gains[j]).abs()
                * (1.0 / ((1 + ranks[i]) as f64).log2() - 1.0 / ((1 + ranks[j]) as f64).log2())
                    .abs()
                / idcg;
            total += pairwise_loss(f[i], f[j], dz, sigma) / (bias.t_plus_at(i + 1) * bias.t_minus_at(j + 1));
        }
    }
    total + bias.regularizer(p)
}

/// Draws `round(fraction * n)` distinct indices (at least 1), ascending.
fn sample_subset(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> Vec<u32> {
    if fraction >= 1.0 {
        return (0..n as u32).collect();
    }
    let k = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut idx: Vec<u32> = (0..n as u32).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

fn boost(
    pairs: &PairSet,
    dense: &DenseFeatures,
    k: usize,
    cfg: &TrainConfig,
    debias: bool,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if pairs.total_pairs() == 0 {
        return Err(Error::NoTrainingPairs);
    }

    let bins = build_bins(dense, cfg.gbdt.n_bins);
    let n_rows = dense.n_rows;
    let n_features = dense.n_features;
    let fit_params = FitParams {
        max_leaves: cfg.gbdt.max_leaves,
        min_docs_per_leaf: cfg.gbdt.min_docs_per_leaf,
        l2_leaf_reg: cfg.gbdt.l2_leaf_reg,
    };

    let mut bias = BiasRatios::ones(k, cfg.p, cfg.floor);
    let mut ensemble = Ensemble::new(cfg.gbdt.learning_rate, n_features);
    ensemble.bin_boundaries = Some(bins.boundaries().to_vec());
    let mut history = TrainHistory::default();
    history.bias.push(BiasSnapshot {
        round: 0,
        t_plus: bias.t_plus().to_vec(),
        t_minus: bias.t_minus().to_vec(),
    });

    let mut scores = vec![0.0; n_rows];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    for round in 1..=cfg.rounds {
        let sweep = sweep_pairs(pairs, &scores, &bias, cfg.sigma, k);
        let mean_abs_lambda =
            sweep.buffer.lambda.iter().map(|l| l.abs()).sum::<f64>() / n_rows as f64;

        let rows = sample_subset(n_rows, cfg.gbdt.bagging_fraction, &mut rng);
        let features = sample_subset(n_features, cfg.gbdt.feature_fraction, &mut rng);
        let grad: Vec<f64> = sweep.buffer.lambda.iter().map(|l| -l).collect();
        let tree = fit_tree_subset(&bins, &grad, &sweep.buffer.hess, &fit_params, rows, &features);

        let lr = cfg.gbdt.learning_rate;
        scores
            .par_iter_mut()
            .enumerate()
            .for_each(|(r, s)| *s += lr * tree.predict_binned(&bins, r));
        ensemble.trees.push(tree);

        // Re-estimate the ratios at the new scores; the same sweep provides
        // the objective for the history row.
        let post = sweep_pairs(pairs, &scores, &bias, cfg.sigma, k);
        history.rounds.push(RoundStat {
            round,
            objective: post.weighted_loss + bias.regularizer(cfg.p),
            mean_abs_lambda,
        });
        if debias && round % cfg.bias_update_interval == 0 {
            if bias.update(&post.s_plus, &post.s_minus) {
                history.bias.push(BiasSnapshot {
                    round,
                    t_plus: bias.t_plus().to_vec(),
                    t_minus: bias.t_minus().to_vec(),
                });
            }
        }
    }

    Ok(TrainOutput {
        ensemble,
        bias,
        history,
    })
}

/// Trains a ranker from click data, jointly estimating position-bias ratios
/// (skipped when `cfg.debias` is false, which leaves the ratios at 1 and is
/// exactly LambdaMART on raw clicks).
pub fn train_clicks(clicks: &ClickDataset, cfg: &TrainConfig) -> Result<TrainOutput> {
    let pairs = PairSet::from_click_data(clicks);
    let dense = DenseFeatures::from_dataset(&clicks.source);
    let k = clicks.max_position.max(1);
    boost(&pairs, &dense, k, cfg, cfg.debias)
}

/// Trains LambdaMART on graded labels (no clicks, no bias): the labeled-data
/// upper-bound condition and the initial-ranker trainer.
pub fn train_labeled(data: &Dataset, cfg: &TrainConfig) -> Result<Ensemble> {
    let pairs = PairSet::from_labels(data);
    let dense = DenseFeatures::from_dataset(data);
    let k = data.queries.iter().map(|q| q.docs.len()).max().unwrap_or(1);
    boost(&pairs, &dense, k, cfg, false).map(|out| out.ensemble)
}
