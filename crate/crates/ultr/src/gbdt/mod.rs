//! Gradient-boosted regression trees over arbitrary per-document first- and
//! second-order gradients: the MART substrate under the rankers.

mod bins;
mod fit;

pub use bins::{build_bins, BinIndex};
pub use fit::{fit_tree, fit_tree_subset, FitParams};

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DenseFeatures;
use crate::error::{Error, Result};

/// One tree node. Split thresholds are bin boundary values, so prediction
/// works directly on raw feature values; `bin` carries the boundary's bin id
/// for fast traversal over pre-binned training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        bin: u16,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

/// A regression tree stored as a flat node array, root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Raw output for one dense feature row (`value <= threshold` goes left).
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut id = 0usize;
        loop {
            match self.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    id = if row[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
                Node::Leaf { value } => return value,
            }
        }
    }

    /// Raw output for a pre-binned training row; identical routing to
    /// [`Tree::predict_row`] by construction of the thresholds.
    pub fn predict_binned(&self, bins: &BinIndex, row: usize) -> f64 {
        let row_bins = bins.row_bins(row);
        let mut id = 0usize;
        loop {
            match self.nodes[id] {
                Node::Split {
                    feature,
                    bin,
                    left,
                    right,
                    ..
                } => {
                    id = if (row_bins[feature as usize] as u16) <= bin {
                        left as usize
                    } else {
                        right as usize
                    };
                }
                Node::Leaf { value } => return value,
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

/// Additive tree ensemble with shrinkage:
/// `score = base_score + learning_rate * sum(tree outputs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    pub base_score: f64,
    pub num_features: usize,
    /// Bin boundaries used at training time (per feature), kept for
    /// provenance; not needed for prediction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_boundaries: Option<Vec<Vec<f64>>>,
}

impl Ensemble {
    pub fn new(learning_rate: f64, num_features: usize) -> Ensemble {
        Ensemble {
            trees: Vec::new(),
            learning_rate,
            base_score: 0.0,
            num_features,
            bin_boundaries: None,
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let raw: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        self.base_score + self.learning_rate * raw
    }

    /// Scores for every row of a dense matrix, in row order.
    pub fn predict(&self, features: &DenseFeatures) -> Vec<f64> {
        (0..features.n_rows)
            .into_par_iter()
            .map(|r| self.predict_row(features.row(r)))
            .collect()
    }

    pub fn check_features(&self, data_features: usize) -> Result<()> {
        if self.num_features != data_features {
            return Err(Error::FeatureMismatch {
                model: self.num_features,
                data: data_features,
            });
        }
        Ok(())
    }
}

const MODEL_FORMAT: &str = "ultr-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    ensemble: Ensemble,
}

/// Serializes an ensemble to versioned JSON. Deserializing the output yields
/// bit-identical predictions (JSON floats round-trip exactly).
pub fn serialize(ensemble: &Ensemble) -> String {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        ensemble: ensemble.clone(),
    };
    serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
}

pub fn deserialize(text: &str) -> Result<Ensemble> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
    if file.format != MODEL_FORMAT {
        return Err(Error::ModelFormat(format!(
            "unknown model format `{}`",
            file.format
        )));
    }
    if file.version != MODEL_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported model version {} (expected {MODEL_VERSION})",
            file.version
        )));
    }
    Ok(file.ensemble)
}

pub fn save_model(ensemble: &Ensemble, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(serialize(ensemble).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Ensemble> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let file: ModelFile =
        serde_json::from_reader(reader).map_err(|e| Error::ModelFormat(e.to_string()))?;
    if file.format != MODEL_FORMAT {
        return Err(Error::ModelFormat(format!(
            "unknown model format `{}`",
            file.format
        )));
    }
    if file.version != MODEL_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported model version {}",
            file.version
        )));
    }
    Ok(file.ensemble)
}
