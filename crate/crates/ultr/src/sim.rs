//! Synthetic click-log generation: an initial ranker orders each query's
//! documents, then a user model (position-based or cascade) samples clicks.
//!
//! Sessions draw their randomness from counter-based streams keyed on
//! `(seed, session index)`, so generation is reproducible under any thread
//! schedule.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClickDataset, ClickSession, Dataset, DenseFeatures, Y_MAX};
use crate::debias::{train_labeled, TrainConfig};
use crate::error::{Error, Result};
use crate::gbdt::Ensemble;

/// Position-based model: position `i` is examined with probability
/// `rho[i]^theta`, and an examined document is clicked with its relevance
/// probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PbmConfig {
    /// Base examination propensities, position 1 first; `rho[0] = 1`,
    /// non-increasing.
    pub rho: Vec<f64>,
    /// Bias severity exponent; 0 means no position bias.
    pub theta: f64,
    /// Click-noise floor in the relevance probability.
    pub epsilon: f64,
    pub y_max: u8,
}

impl Default for PbmConfig {
    fn default() -> Self {
        PbmConfig {
            rho: (1..=10).map(|i| 1.0 / i as f64).collect(),
            theta: 1.0,
            epsilon: 0.1,
            y_max: Y_MAX,
        }
    }
}

impl PbmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rho.is_empty() || self.rho[0] != 1.0 {
            return Err(Error::InvalidArgument("rho[1] must be 1".into()));
        }
        if self.rho.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidArgument("rho must be non-increasing".into()));
        }
        if self.rho.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
            return Err(Error::InvalidArgument("rho entries must be in [0, 1]".into()));
        }
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return Err(Error::InvalidArgument("theta must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidArgument("epsilon must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Cascade model: the user scans top-down; at each examined position they
/// click with the relevance probability, stop when satisfied (probability
/// `satisfaction_scale * relevance`), and otherwise continue to the next
/// position with probability `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeConfig {
    /// Continuation probability after an unsatisfying click, and (by the
    /// symmetric convention used here) after a non-click.
    pub beta: f64,
    /// Satisfaction probability as a fraction of the relevance probability.
    pub satisfaction_scale: f64,
    pub epsilon: f64,
    pub y_max: u8,
    /// List truncation at logging time.
    pub max_positions: usize,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            beta: 0.5,
            satisfaction_scale: 0.5,
            epsilon: 0.1,
            y_max: Y_MAX,
            max_positions: 10,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidArgument("beta must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.satisfaction_scale) {
            return Err(Error::InvalidArgument(
                "satisfaction_scale must be in [0, 1]".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidArgument("epsilon must be in [0, 1)".into()));
        }
        if self.max_positions == 0 {
            return Err(Error::InvalidArgument("max_positions must be >= 1".into()));
        }
        Ok(())
    }
}

/// The user model driving click sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ClickModel {
    Pbm(PbmConfig),
    Cascade(CascadeConfig),
}

impl ClickModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            ClickModel::Pbm(c) => c.validate(),
            ClickModel::Cascade(c) => c.validate(),
        }
    }

    /// List truncation this model applies.
    pub fn truncation(&self) -> usize {
        match self {
            ClickModel::Pbm(c) => c.rho.len(),
            ClickModel::Cascade(c) => c.max_positions,
        }
    }
}

/// `P(relevant) = epsilon + (1 - epsilon) * (2^y - 1) / (2^y_max - 1)`.
pub fn relevance_prob(label: u8, epsilon: f64, y_max: u8) -> Result<f64> {
    if label > y_max {
        return Err(Error::InvalidArgument(format!(
            "label {label} exceeds y_max {y_max}"
        )));
    }
    let num = (1u64 << label) as f64 - 1.0;
    let den = (1u64 << y_max) as f64 - 1.0;
    Ok(epsilon + (1.0 - epsilon) * num / den)
}

/// Samples one PBM session over a ranked (truncated) label list: position `i`
/// (1-based) is clicked with probability `rho[i]^theta * P(relevant)`,
/// independently per position.
pub fn pbm_sample(ranked_labels: &[u8], cfg: &PbmConfig, rng: &mut impl Rng) -> Vec<bool> {
    ranked_labels
        .iter()
        .enumerate()
        .map(|(idx, &label)| {
            let observe = cfg.rho[idx].powf(cfg.theta);
            let relevant = relevance_prob(label, cfg.epsilon, cfg.y_max).unwrap_or(0.0);
            rng.random::<f64>() < observe * relevant
        })
        .collect()
}

/// Samples one cascade session: sequential examination from position 1;
/// clicks happen at examined positions with the relevance probability; a
/// satisfying click stops the scan; otherwise the user continues with
/// probability `beta`.
pub fn cascade_sample(ranked_labels: &[u8], cfg: &CascadeConfig, rng: &mut impl Rng) -> Vec<bool> {
    let mut clicks = vec![false; ranked_labels.len()];
    for (idx, &label) in ranked_labels.iter().enumerate() {
        let relevant = relevance_prob(label, cfg.epsilon, cfg.y_max).unwrap_or(0.0);
        if rng.random::<f64>() < relevant {
            clicks[idx] = true;
            let satisfied = rng.random::<f64>() < cfg.satisfaction_scale * relevant;
            if satisfied {
                break;
            }
        }
        if rng.random::<f64>() >= cfg.beta {
            break;
        }
    }
    clicks
}

/// Trains the weak initial ranker on a seeded sample of `fraction` of the
/// queries: a 30-tree labeled LambdaMART with otherwise default parameters.
pub fn train_initial_ranker(data: &Dataset, fraction: f64, seed: u64) -> Result<Ensemble> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument("fraction must be in (0, 1]".into()));
    }
    let n = data.queries.len();
    let k = (fraction * n as f64) as usize;
    if k == 0 {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} selects 0 of {n} queries"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx.sort_unstable();
    let sample = data.subset(&idx);

    let cfg = TrainConfig {
        rounds: 30,
        seed,
        ..TrainConfig::default()
    };
    train_labeled(&sample, &cfg)
}

/// Document order by score descending, ties toward the lower document index.
pub fn rank_by_scores(scores: &[f64]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..scores.len() as u32).collect();
    order.sort_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    order
}

/// Generates a click dataset: each session picks a query uniformly at random
/// (with replacement), ranks its documents with the initial ranker, truncates
/// to the model's position budget, and samples clicks. Deterministic given
/// the seed, for any thread count.
pub fn generate_click_dataset(
    source: Arc<Dataset>,
    initial_ranker: &Ensemble,
    model: &ClickModel,
    n_sessions: usize,
    seed: u64,
) -> Result<ClickDataset> {
    if n_sessions == 0 {
        return Err(Error::InvalidArgument("n_sessions must be >= 1".into()));
    }
    model.validate()?;
    initial_ranker.check_features(source.num_features)?;

    // The initial ranking is fixed per query: rank once, reuse across sessions.
    let dense = DenseFeatures::from_dataset(&source);
    let scores = initial_ranker.predict(&dense);
    let rankings: Vec<Vec<u32>> = source
        .queries
        .iter()
        .enumerate()
        .map(|(q, group)| {
            let start = dense.query_offsets[q];
            rank_by_scores(&scores[start..start + group.docs.len()])
        })
        .collect();

    let truncation = model.truncation();
    let n_queries = source.queries.len();
    let sessions: Vec<ClickSession> = (0..n_sessions)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64 + 1);
            let q = rng.random_range(0..n_queries);
            let ranked = &rankings[q];
            let len = ranked.len().min(truncation);
            let doc_refs: Vec<u32> = ranked[..len].to_vec();
            let labels: Vec<u8> = doc_refs
                .iter()
                .map(|&d| source.queries[q].docs[d as usize].label)
                .collect();
            let clicks = match model {
                ClickModel::Pbm(cfg) => pbm_sample(&labels, cfg, &mut rng),
                ClickModel::Cascade(cfg) => cascade_sample(&labels, cfg, &mut rng),
            };
            ClickSession {
                query: q as u32,
                doc_refs,
                clicks,
                truncation: truncation as u32,
            }
        })
        .collect();

    ClickDataset::new(sessions, source)
}

/// Per-position click-through rates over a click dataset (index 0 is
/// position 1). Positions shorter lists never reach count as unshown.
pub fn position_ctr(clicks: &ClickDataset) -> Vec<f64> {
    let k = clicks.max_position;
    let mut shown = vec![0usize; k];
    let mut clicked = vec![0usize; k];
    for s in &clicks.sessions {
        for (idx, &c) in s.clicks.iter().enumerate() {
            shown[idx] += 1;
            clicked[idx] += c as usize;
        }
    }
    (0..k)
        .map(|i| {
            if shown[i] == 0 {
                0.0
            } else {
                clicked[i] as f64 / shown[i] as f64
            }
        })
        .collect()
}
