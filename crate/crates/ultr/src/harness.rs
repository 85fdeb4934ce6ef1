//! Experiment harness: the method-comparison table (labeled upper bound vs
//! raw-click lower bound vs pairwise debiasing, one ranker) and the
//! regularization / bias-severity / data-size sweeps.
//!
//! Per seed: split queries 80/20, train the weak initial ranker on the train
//! split, simulate clicks from it, train every condition on the same clicks,
//! evaluate on held-out labels. The raw-click condition is the debiasing run
//! with updates disabled and ratios pinned at 1; nothing else differs.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, parse_svmlight, Dataset, DenseFeatures, SyntheticConfig};
use crate::debias::{BiasRatios, TrainConfig, TrainHistory};
use crate::error::{Error, Result};
use crate::gbdt::Ensemble;
use crate::metrics::{avg_rerank_positions, evaluate, EvalReport};
use crate::sim::{generate_click_dataset, rank_by_scores, train_initial_ranker, ClickModel};

/// Where the labeled data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    File { path: PathBuf },
    Synthetic(SyntheticConfig),
}

/// A training condition in the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// LambdaMART on true labels: the bias-free upper bound.
    LabeledUpper,
    /// LambdaMART on raw clicks, ratios pinned at 1: the lower bound.
    ClickLower,
    /// Joint bias estimation and training.
    PairwiseDebias,
}

impl Condition {
    pub const ALL: [Condition; 3] = [
        Condition::LabeledUpper,
        Condition::ClickLower,
        Condition::PairwiseDebias,
    ];
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::LabeledUpper => "labeled_upper",
            Condition::ClickLower => "click_lower",
            Condition::PairwiseDebias => "pairwise_debias",
        })
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Condition> {
        match s {
            "labeled_upper" => Ok(Condition::LabeledUpper),
            "click_lower" => Ok(Condition::ClickLower),
            "pairwise_debias" => Ok(Condition::PairwiseDebias),
            other => Err(Error::InvalidArgument(format!("unknown condition `{other}`"))),
        }
    }
}

/// Full description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub name: String,
    pub data: DataSource,
    pub click_model: ClickModel,
    pub conditions: Vec<Condition>,
    pub train: TrainConfig,
    pub n_seeds: u32,
    pub n_sessions: usize,
    /// Fraction of train-split queries used for the initial ranker.
    pub initial_fraction: f64,
    /// Fraction of queries held out for evaluation.
    pub test_fraction: f64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "comparison".into(),
            data: DataSource::Synthetic(SyntheticConfig::default()),
            click_model: ClickModel::Pbm(crate::sim::PbmConfig::default()),
            conditions: Condition::ALL.to_vec(),
            train: TrainConfig::default(),
            n_seeds: 5,
            n_sessions: 20_000,
            initial_fraction: 0.01,
            test_fraction: 0.2,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_seeds < 1 {
            return Err(Error::InvalidArgument("n_seeds must be >= 1".into()));
        }
        if self.conditions.is_empty() {
            return Err(Error::InvalidArgument("conditions must be nonempty".into()));
        }
        if self.n_sessions < 1 {
            return Err(Error::InvalidArgument("n_sessions must be >= 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidArgument("test_fraction must be in (0, 1)".into()));
        }
        self.click_model.validate()?;
        self.train.validate()
    }

    /// FNV-1a hash of the canonical JSON encoding, for row provenance.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in json.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

/// One (condition, seed) outcome; failures carry the error text so a partial
/// table can still be written.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub condition: Condition,
    pub seed_index: u32,
    pub report: std::result::Result<EvalReport, String>,
}

/// Result of one comparison run.
#[derive(Debug, Clone)]
pub struct ComparisonResult {
    pub config_hash: String,
    pub outcomes: Vec<RunOutcome>,
    /// Final estimated ratios per seed, for runs that estimated them.
    pub bias_by_seed: Vec<(u32, BiasRatios)>,
    /// Training history of the first debiasing run (bias-curve export).
    pub debias_history: Option<TrainHistory>,
    /// Average re-ranked position per original position on the test split of
    /// the first seed: one curve per condition plus the label ground truth.
    pub rerank_curves: Vec<(String, Vec<f64>)>,
}

impl ComparisonResult {
    pub fn report(&self, condition: Condition, seed_index: u32) -> Option<&EvalReport> {
        self.outcomes
            .iter()
            .find(|o| o.condition == condition && o.seed_index == seed_index)
            .and_then(|o| o.report.as_ref().ok())
    }

    /// Mean of a metric over seeds (ignoring failed runs).
    pub fn mean_metric(&self, condition: Condition, metric: &str) -> Option<f64> {
        let vals: Vec<f64> = self
            .outcomes
            .iter()
            .filter(|o| o.condition == condition)
            .filter_map(|o| o.report.as_ref().ok())
            .filter_map(|r| metric_value(r, metric))
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

/// Named metric from a report: `ndcg@k` or `map`.
pub fn metric_value(report: &EvalReport, metric: &str) -> Option<f64> {
    if metric == "map" {
        return Some(report.map_score);
    }
    metric
        .strip_prefix("ndcg@")
        .and_then(|k| k.parse::<usize>().ok())
        .and_then(|k| report.ndcg_at.get(&k).copied())
}

pub const METRICS: [&str; 5] = ["ndcg@1", "ndcg@3", "ndcg@5", "ndcg@10", "map"];

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn subseed(base: u64, tag: u64) -> u64 {
    splitmix64(base ^ splitmix64(tag))
}

pub fn load_dataset(source: &DataSource) -> Result<Dataset> {
    match source {
        DataSource::File { path } => parse_svmlight(path),
        DataSource::Synthetic(cfg) => generate_synthetic(cfg),
    }
}

/// Seeded 80/20-style query split: returns (train indices, test indices).
pub fn split_queries(n_queries: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n_queries).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..idx.len()).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let n_test = ((test_fraction * n_queries as f64).round() as usize).clamp(1, n_queries - 1);
    let test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    train.sort_unstable();
    let mut test = test;
    test.sort_unstable();
    (train, test)
}

struct SeedRun {
    outcomes: Vec<RunOutcome>,
    bias: Option<BiasRatios>,
    history: Option<TrainHistory>,
    rerank: Option<Vec<(String, Vec<f64>)>>,
}

fn run_seed(
    spec: &ExperimentSpec,
    data: &Arc<Dataset>,
    seed_index: u32,
    want_curves: bool,
) -> SeedRun {
    let base = spec.train.seed.wrapping_add(seed_index as u64);
    let (train_idx, test_idx) = split_queries(data.queries.len(), spec.test_fraction, subseed(base, 0));
    let train_data = Arc::new(data.subset(&train_idx));
    let test_data = data.subset(&test_idx);

    let prep = || -> Result<(Ensemble, crate::data::ClickDataset)> {
        let ranker0 = train_initial_ranker(&train_data, spec.initial_fraction, subseed(base, 1))?;
        let clicks = generate_click_dataset(
            train_data.clone(),
            &ranker0,
            &spec.click_model,
            spec.n_sessions,
            subseed(base, 2),
        )?;
        Ok((ranker0, clicks))
    };

    let needs_clicks = spec
        .conditions
        .iter()
        .any(|c| *c != Condition::LabeledUpper)
        || want_curves;
    let prepared = if needs_clicks { Some(prep()) } else { None };

    let mut outcomes = Vec::new();
    let mut bias = None;
    let mut history = None;
    let mut models: Vec<(Condition, Ensemble)> = Vec::new();

    for &cond in &spec.conditions {
        let train_seed = subseed(base, 3);
        let outcome: std::result::Result<EvalReport, String> = (|| {
            let model = match cond {
                Condition::LabeledUpper => {
                    let cfg = TrainConfig {
                        seed: train_seed,
                        ..spec.train.clone()
                    };
                    crate::debias::train_labeled(&train_data, &cfg)?
                }
                Condition::ClickLower | Condition::PairwiseDebias => {
                    let (_, clicks) = match &prepared {
                        Some(Ok(p)) => p,
                        Some(Err(e)) => return Err(Error::InvalidArgument(e.to_string())),
                        None => unreachable!("clicks prepared for click conditions"),
                    };
                    let cfg = TrainConfig {
                        seed: train_seed,
                        debias: cond == Condition::PairwiseDebias,
                        ..spec.train.clone()
                    };
                    let out = crate::debias::train_clicks(clicks, &cfg)?;
                    if cond == Condition::PairwiseDebias {
                        bias = Some(out.bias.clone());
                        history = Some(out.history.clone());
                    }
                    out.ensemble
                }
            };
            let report = evaluate(&test_data, &model)?;
            models.push((cond, model));
            Ok(report)
        })()
        .map_err(|e| e.to_string());

        outcomes.push(RunOutcome {
            condition: cond,
            seed_index,
            report: outcome,
        });
    }

    // Re-rank diagnostics on the test split: documents at each original
    // (initial-ranker) position, averaged new position under each model and
    // under the labels.
    let rerank = if want_curves {
        prepared.as_ref().and_then(|p| p.as_ref().ok()).map(|(ranker0, _)| {
            let dense = DenseFeatures::from_dataset(&test_data);
            let scores0 = ranker0.predict(&dense);
            let truncation = spec.click_model.truncation();
            let original_order: Vec<Vec<usize>> = test_data
                .queries
                .iter()
                .enumerate()
                .map(|(q, group)| {
                    let start = dense.query_offsets[q];
                    rank_by_scores(&scores0[start..start + group.docs.len()])
                        .into_iter()
                        .take(truncation)
                        .map(|d| start + d as usize)
                        .collect()
                })
                .collect();

            let mut curves = Vec::new();
            for (cond, model) in &models {
                let scores = model.predict(&dense);
                let lists: Vec<Vec<f64>> = original_order
                    .iter()
                    .map(|rows| rows.iter().map(|&r| scores[r]).collect())
                    .collect();
                curves.push((cond.to_string(), avg_rerank_positions(&lists)));
            }
            let label_of_row: Vec<f64> = test_data
                .queries
                .iter()
                .flat_map(|g| g.docs.iter().map(|d| d.label as f64))
                .collect();
            let truth_lists: Vec<Vec<f64>> = original_order
                .iter()
                .map(|rows| rows.iter().map(|&r| label_of_row[r]).collect())
                .collect();
            curves.push(("ground_truth".into(), avg_rerank_positions(&truth_lists)));
            curves
        })
    } else {
        None
    };

    SeedRun {
        outcomes,
        bias,
        history,
        rerank,
    }
}

/// Runs the full comparison: every condition on every seed. Seeds run in
/// parallel; results merge in seed order, so the output is identical for any
/// thread count.
pub fn run_comparison(spec: &ExperimentSpec) -> Result<ComparisonResult> {
    spec.validate()?;
    let data = Arc::new(load_dataset(&spec.data)?);
    data.validate()?;

    let runs: Vec<SeedRun> = (0..spec.n_seeds)
        .into_par_iter()
        .map(|s| run_seed(spec, &data, s, s == 0))
        .collect();

    let mut outcomes = Vec::new();
    let mut bias_by_seed = Vec::new();
    let mut debias_history = None;
    let mut rerank_curves = Vec::new();
    for (s, run) in runs.into_iter().enumerate() {
        outcomes.extend(run.outcomes);
        if let Some(b) = run.bias {
            bias_by_seed.push((s as u32, b));
        }
        if s == 0 {
            debias_history = run.history;
            rerank_curves = run.rerank.unwrap_or_default();
        }
    }

    Ok(ComparisonResult {
        config_hash: spec.config_hash(),
        outcomes,
        bias_by_seed,
        debias_history,
        rerank_curves,
    })
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// The swept axis of a Figure-style experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum SweepAxis {
    /// Regularization order of the ratio updates.
    P(Vec<f64>),
    /// Position-bias severity of the PBM click model.
    Theta(Vec<f64>),
    /// Continuation probability of the cascade click model.
    Beta(Vec<f64>),
    /// Fraction of the click sessions kept.
    DataFraction(Vec<f64>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::P(_) => "p",
            SweepAxis::Theta(_) => "theta",
            SweepAxis::Beta(_) => "beta",
            SweepAxis::DataFraction(_) => "data_fraction",
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            SweepAxis::P(v) | SweepAxis::Theta(v) | SweepAxis::Beta(v) | SweepAxis::DataFraction(v) => v,
        }
    }
}

/// Spec for one sweep point.
pub fn apply_axis(spec: &ExperimentSpec, axis: &SweepAxis, value: f64) -> Result<ExperimentSpec> {
    let mut out = spec.clone();
    match axis {
        SweepAxis::P(_) => out.train.p = value,
        SweepAxis::Theta(_) => match &mut out.click_model {
            ClickModel::Pbm(cfg) => cfg.theta = value,
            ClickModel::Cascade(_) => {
                return Err(Error::InvalidArgument(
                    "theta sweep requires the pbm click model".into(),
                ))
            }
        },
        SweepAxis::Beta(_) => match &mut out.click_model {
            ClickModel::Cascade(cfg) => cfg.beta = value,
            ClickModel::Pbm(_) => {
                return Err(Error::InvalidArgument(
                    "beta sweep requires the cascade click model".into(),
                ))
            }
        },
        SweepAxis::DataFraction(_) => {
            if !(value > 0.0 && value <= 1.0) {
                return Err(Error::InvalidArgument(
                    "data_fraction values must be in (0, 1]".into(),
                ));
            }
            out.n_sessions = ((spec.n_sessions as f64 * value).round() as usize).max(1);
        }
    }
    out.validate()?;
    Ok(out)
}

/// One row of the long-form sweep output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub condition: String,
    pub metric: String,
    pub seed: u32,
    pub score: f64,
    pub note: String,
    pub config_hash: String,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Comparison result per axis value, in order.
    pub points: Vec<(f64, ComparisonResult)>,
}

/// Runs one comparison per axis value and flattens the outcomes.
pub fn run_sweep(spec: &ExperimentSpec, axis: &SweepAxis) -> Result<SweepResult> {
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &value in axis.values() {
        let point_spec = apply_axis(spec, axis, value)?;
        let result = run_comparison(&point_spec)?;
        for outcome in &result.outcomes {
            match &outcome.report {
                Ok(report) => {
                    for metric in METRICS {
                        if let Some(score) = metric_value(report, metric) {
                            rows.push(SweepRow {
                                axis: axis.name().into(),
                                value,
                                condition: outcome.condition.to_string(),
                                metric: metric.into(),
                                seed: outcome.seed_index,
                                score,
                                note: String::new(),
                                config_hash: result.config_hash.clone(),
                            });
                        }
                    }
                }
                Err(msg) => rows.push(SweepRow {
                    axis: axis.name().into(),
                    value,
                    condition: outcome.condition.to_string(),
                    metric: "error".into(),
                    seed: outcome.seed_index,
                    score: f64::NAN,
                    note: msg.clone(),
                    config_hash: result.config_hash.clone(),
                }),
            }
        }
        points.push((value, result));
    }
    Ok(SweepResult { rows, points })
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `table.csv`, `bias_curves.csv`, `rerank_positions.csv`, and
/// `config.json` into `dir`.
pub fn write_comparison_outputs(
    dir: &Path,
    spec: &ExperimentSpec,
    result: &ComparisonResult,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut table = String::from("condition,seed,metric,value,note,config_hash\n");
    for outcome in &result.outcomes {
        match &outcome.report {
            Ok(report) => {
                for metric in METRICS {
                    if let Some(v) = metric_value(report, metric) {
                        table.push_str(&format!(
                            "{},{},{},{},,{}\n",
                            outcome.condition, outcome.seed_index, metric, v, result.config_hash
                        ));
                    }
                }
            }
            Err(msg) => table.push_str(&format!(
                "{},{},error,NaN,{},{}\n",
                outcome.condition,
                outcome.seed_index,
                msg.replace(',', ";"),
                result.config_hash
            )),
        }
    }
    for &cond in &spec.conditions {
        for metric in METRICS {
            let vals: Vec<f64> = (0..spec.n_seeds)
                .filter_map(|s| result.report(cond, s))
                .filter_map(|r| metric_value(r, metric))
                .collect();
            if vals.is_empty() {
                continue;
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let std = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64)
                    .sqrt()
            } else {
                0.0
            };
            table.push_str(&format!(
                "{cond},mean,{metric},{mean},,{}\n",
                result.config_hash
            ));
            table.push_str(&format!(
                "{cond},std,{metric},{std},,{}\n",
                result.config_hash
            ));
        }
    }
    write_file(&dir.join("table.csv"), &table)?;

    if let Some(history) = &result.debias_history {
        let mut buf = Vec::new();
        crate::metrics::export_bias_curves(history, &mut buf)
            .map_err(|e| Error::io(dir.join("bias_curves.csv"), e))?;
        write_file(&dir.join("bias_curves.csv"), &String::from_utf8(buf).unwrap())?;
    }

    if !result.rerank_curves.is_empty() {
        let mut csv = String::from("condition,position,avg_position\n");
        for (label, curve) in &result.rerank_curves {
            for (i, v) in curve.iter().enumerate() {
                csv.push_str(&format!("{label},{},{v}\n", i + 1));
            }
        }
        write_file(&dir.join("rerank_positions.csv"), &csv)?;
    }

    write_config(dir, spec)?;
    Ok(())
}

/// Writes `sweep.csv` and `config.json` into `dir`.
pub fn write_sweep_outputs(
    dir: &Path,
    spec: &ExperimentSpec,
    axis: &SweepAxis,
    result: &SweepResult,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut csv = String::from("axis,value,condition,metric,seed,score,note,config_hash\n");
    for r in &result.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.axis, r.value, r.condition, r.metric, r.seed, r.score, r.note, r.config_hash
        ));
    }
    write_file(&dir.join("sweep.csv"), &csv)?;

    #[derive(Serialize)]
    struct SweepConfig<'a> {
        spec: &'a ExperimentSpec,
        axis: &'a SweepAxis,
        config_hash: String,
        version: &'a str,
    }
    let json = serde_json::to_string_pretty(&SweepConfig {
        spec,
        axis,
        config_hash: spec.config_hash(),
        version: env!("CARGO_PKG_VERSION"),
    })
    .expect("sweep config serializes");
    write_file(&dir.join("config.json"), &json)
}

fn write_config(dir: &Path, spec: &ExperimentSpec) -> Result<()> {
    #[derive(Serialize)]
    struct ConfigFile<'a> {
        spec: &'a ExperimentSpec,
        config_hash: String,
        version: &'a str,
    }
    let json = serde_json::to_string_pretty(&ConfigFile {
        spec,
        config_hash: spec.config_hash(),
        version: env!("CARGO_PKG_VERSION"),
    })
    .expect("config serializes");
    write_file(&dir.join("config.json"), &json)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> ExperimentSpec {
        ExperimentSpec {
            data: DataSource::Synthetic(SyntheticConfig {
                n_queries: 60,
                docs_per_query: 10,
                n_features: 8,
                label_noise: 0.0,
                seed: 5,
            }),
            n_seeds: 2,
            n_sessions: 800,
            initial_fraction: 0.1,
            train: TrainConfig {
                rounds: 25,
                ..TrainConfig::default()
            },
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn comparison_is_deterministic() {
        let spec = tiny_spec();
        let a = run_comparison(&spec).unwrap();
        let b = run_comparison(&spec).unwrap();
        for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
            assert_eq!(x.condition, y.condition);
            assert_eq!(x.report.as_ref().ok(), y.report.as_ref().ok());
        }
        assert_eq!(a.bias_by_seed.len(), b.bias_by_seed.len());
        for ((_, ba), (_, bb)) in a.bias_by_seed.iter().zip(&b.bias_by_seed) {
            assert_eq!(ba, bb);
        }
    }

    #[test]
    fn labeled_upper_on_clean_data_is_strong() {
        let spec = ExperimentSpec {
            conditions: vec![Condition::LabeledUpper],
            train: TrainConfig {
                rounds: 120,
                ..TrainConfig::default()
            },
            n_seeds: 1,
            ..tiny_spec()
        };
        let result = run_comparison(&spec).unwrap();
        let ndcg5 = result.mean_metric(Condition::LabeledUpper, "ndcg@5").unwrap();
        assert!(ndcg5 >= 0.95, "labeled upper NDCG@5 {ndcg5} below 0.95");
    }

    #[test]
    fn sweep_emits_expected_row_count() {
        let spec = ExperimentSpec {
            conditions: vec![Condition::ClickLower, Condition::PairwiseDebias],
            n_seeds: 1,
            train: TrainConfig {
                rounds: 8,
                ..TrainConfig::default()
            },
            ..tiny_spec()
        };
        let axis = SweepAxis::Theta(vec![0.0, 1.0, 2.0]);
        let result = run_sweep(&spec, &axis).unwrap();
        // 3 values x 2 conditions x 1 seed x 5 metrics
        assert_eq!(result.rows.len(), 3 * 2 * 5);
        assert!(result.rows.iter().all(|r| !r.config_hash.is_empty()));
    }

    #[test]
    fn theta_sweep_rejects_cascade_model() {
        let spec = ExperimentSpec {
            click_model: ClickModel::Cascade(crate::sim::CascadeConfig::default()),
            ..tiny_spec()
        };
        assert!(run_sweep(&spec, &SweepAxis::Theta(vec![0.0])).is_err());
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let (train, test) = split_queries(100, 0.2, 7);
        assert_eq!(train.len(), 80);
        assert_eq!(test.len(), 20);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let (train2, test2) = split_queries(100, 0.2, 7);
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        let (train3, _) = split_queries(100, 0.2, 8);
        assert_ne!(train, train3);
    }

    #[test]
    fn outputs_are_written() {
        let spec = ExperimentSpec {
            n_seeds: 1,
            conditions: vec![Condition::ClickLower, Condition::PairwiseDebias],
            train: TrainConfig {
                rounds: 6,
                ..TrainConfig::default()
            },
            ..tiny_spec()
        };
        let result = run_comparison(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_comparison_outputs(dir.path(), &spec, &result).unwrap();
        for f in ["table.csv", "bias_curves.csv", "rerank_positions.csv", "config.json"] {
            assert!(dir.path().join(f).exists(), "{f} missing");
        }
    }
}
