//! Data model and ingestion: query-grouped ranking data, synthetic dataset
//! generation, and click-log files.
//!
//! Datasets are stored sparse (SVMLight files are sparse) and materialized to
//! dense column data once, at training time. All structures are read-only
//! after construction and safe to share across threads.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest relevance grade handled by the toolkit.
pub const Y_MAX: u8 = 4;

/// One query-document pair: sparse feature vector plus an integer grade.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    /// Sparse features, 0-based indices, strictly ascending.
    pub features: Vec<(u32, f64)>,
    /// Relevance grade in `0..=Y_MAX`.
    pub label: u8,
}

impl Document {
    pub fn feature(&self, index: u32) -> f64 {
        match self.features.binary_search_by_key(&index, |&(i, _)| i) {
            Ok(pos) => self.features[pos].1,
            Err(_) => 0.0,
        }
    }

    /// Dense copy with `num_features` columns; absent entries are 0.
    pub fn to_dense(&self, num_features: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_features];
        for &(i, v) in &self.features {
            if (i as usize) < num_features {
                out[i as usize] = v;
            }
        }
        out
    }
}

/// All documents retrieved for one query, in their stored order.
///
/// The stored order is meaningful: for click data it is the order produced by
/// the ranker that served the results, and positions are indices into it.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroup {
    pub query_id: String,
    pub docs: Vec<Document>,
}

/// A query-grouped ranking dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub queries: Vec<QueryGroup>,
    pub num_features: usize,
}

impl Dataset {
    pub fn total_docs(&self) -> usize {
        self.queries.iter().map(|q| q.docs.len()).sum()
    }

    /// Index of the first global row of each query, plus a final sentinel.
    pub fn row_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.queries.len() + 1);
        let mut acc = 0;
        offs.push(0);
        for q in &self.queries {
            acc += q.docs.len();
            offs.push(acc);
        }
        offs
    }

    /// Checks the structural invariants: non-empty groups, feature indices in
    /// range, labels within grade bounds.
    pub fn validate(&self) -> Result<()> {
        for q in &self.queries {
            if q.docs.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "query `{}` has no documents",
                    q.query_id
                )));
            }
            for d in &q.docs {
                if d.label > Y_MAX {
                    return Err(Error::InvalidArgument(format!(
                        "query `{}`: label {} exceeds {}",
                        q.query_id, d.label, Y_MAX
                    )));
                }
                for &(i, _) in &d.features {
                    if i as usize >= self.num_features {
                        return Err(Error::InvalidArgument(format!(
                            "query `{}`: feature index {} out of range ({})",
                            q.query_id, i, self.num_features
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Dataset restricted to the given query indices (order preserved).
    pub fn subset(&self, query_indices: &[usize]) -> Dataset {
        Dataset {
            queries: query_indices
                .iter()
                .map(|&q| self.queries[q].clone())
                .collect(),
            num_features: self.num_features,
        }
    }
}

/// Dense row-major feature matrix over all documents of a dataset.
#[derive(Debug, Clone)]
pub struct DenseFeatures {
    values: Vec<f64>,
    pub n_rows: usize,
    pub n_features: usize,
    /// First global row of each query; last entry equals `n_rows`.
    pub query_offsets: Vec<usize>,
}

impl DenseFeatures {
    pub fn from_dataset(data: &Dataset) -> DenseFeatures {
        let n_rows = data.total_docs();
        let n_features = data.num_features;
        let mut values = vec![0.0; n_rows * n_features];
        let query_offsets = data.row_offsets();
        let mut row = 0;
        for q in &data.queries {
            for d in &q.docs {
                let base = row * n_features;
                for &(i, v) in &d.features {
                    values[base + i as usize] = v;
                }
                row += 1;
            }
        }
        DenseFeatures {
            values,
            n_rows,
            n_features,
            query_offsets,
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.n_features..(r + 1) * self.n_features]
    }

    #[inline]
    pub fn value(&self, r: usize, f: usize) -> f64 {
        self.values[r * self.n_features + f]
    }

    pub fn row_of(&self, query: usize, doc: usize) -> usize {
        self.query_offsets[query] + doc
    }
}

/// One logged impression: a query's documents in the order they were shown,
/// with a click bit per position. Position of a document is its 1-based index
/// in `doc_refs` and never changes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickSession {
    /// Index of the query group in the source dataset.
    pub query: u32,
    /// Document indices into the source group, shown order, position 1 first.
    pub doc_refs: Vec<u32>,
    pub clicks: Vec<bool>,
    /// Maximum list length used at logging time.
    pub truncation: u32,
}

impl ClickSession {
    pub fn len(&self) -> usize {
        self.doc_refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_refs.is_empty()
    }
}

/// A set of click sessions over a shared source dataset.
#[derive(Debug, Clone)]
pub struct ClickDataset {
    pub sessions: Vec<ClickSession>,
    pub source: Arc<Dataset>,
    /// Largest list length across sessions.
    pub max_position: usize,
}

impl ClickDataset {
    pub fn new(sessions: Vec<ClickSession>, source: Arc<Dataset>) -> Result<ClickDataset> {
        for (idx, s) in sessions.iter().enumerate() {
            let group = source.queries.get(s.query as usize).ok_or_else(|| {
                Error::UnknownQuery {
                    session: idx,
                    qid: format!("#{}", s.query),
                }
            })?;
            if s.clicks.len() != s.doc_refs.len() || s.doc_refs.len() > s.truncation as usize {
                return Err(Error::InvalidArgument(format!(
                    "session {idx}: clicks/docs length mismatch or exceeds truncation"
                )));
            }
            for &d in &s.doc_refs {
                if d as usize >= group.docs.len() {
                    return Err(Error::DanglingDocRef {
                        session: idx,
                        qid: group.query_id.clone(),
                        doc: d as usize,
                        len: group.docs.len(),
                    });
                }
            }
        }
        let max_position = sessions.iter().map(|s| s.len()).max().unwrap_or(0);
        Ok(ClickDataset {
            sessions,
            source,
            max_position,
        })
    }
}

// ---------------------------------------------------------------------------
// SVMLight / LETOR ingestion
// ---------------------------------------------------------------------------

/// Parses an SVMLight/LETOR file: `<label> qid:<id> <idx>:<val> ... [# comment]`.
///
/// Documents are grouped by contiguous qid runs. Feature indices are 1-based
/// in the file and stored 0-based; `num_features` is the largest file index
/// seen. A qid that reappears after a different qid starts a new group (with
/// a warning), matching common LETOR tooling.
pub fn parse_svmlight(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_svmlight_reader(BufReader::new(file))
}

pub fn parse_svmlight_reader(reader: impl BufRead) -> Result<Dataset> {
    let mut queries: Vec<QueryGroup> = Vec::new();
    let mut seen_qids: Vec<String> = Vec::new();
    let mut max_index_1based: usize = 0;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();

        let label_tok = tokens
            .next()
            .ok_or_else(|| Error::parse(lineno, "missing label"))?;
        let label: i64 = label_tok
            .parse()
            .map_err(|_| Error::parse(lineno, format!("non-integer label `{label_tok}`")))?;
        if label < 0 || label > Y_MAX as i64 {
            return Err(Error::parse(
                lineno,
                format!("label {label} outside 0..={Y_MAX}"),
            ));
        }

        let qid_tok = tokens
            .next()
            .ok_or_else(|| Error::parse(lineno, "missing qid field"))?;
        let qid = qid_tok
            .strip_prefix("qid:")
            .ok_or_else(|| Error::parse(lineno, format!("expected qid:<id>, got `{qid_tok}`")))?
            .to_string();
        if qid.is_empty() {
            return Err(Error::parse(lineno, "empty qid"));
        }

        let mut features: Vec<(u32, f64)> = Vec::new();
        for tok in tokens {
            let (idx_s, val_s) = tok
                .split_once(':')
                .ok_or_else(|| Error::parse(lineno, format!("expected <idx>:<val>, got `{tok}`")))?;
            let idx: usize = idx_s
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad feature index `{idx_s}`")))?;
            if idx == 0 {
                return Err(Error::parse(lineno, "feature indices are 1-based"));
            }
            let val: f64 = val_s
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad feature value `{val_s}`")))?;
            max_index_1based = max_index_1based.max(idx);
            features.push(((idx - 1) as u32, val));
        }
        features.sort_unstable_by_key(|&(i, _)| i);
        if features.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::parse(lineno, "duplicate feature index"));
        }

        let doc = Document {
            features,
            label: label as u8,
        };
        match queries.last_mut() {
            Some(group) if group.query_id == qid => group.docs.push(doc),
            _ => {
                if seen_qids.iter().any(|q| *q == qid) {
                    log::warn!(
                        "qid `{qid}` reappears after other queries (line {lineno}); treating as a distinct query"
                    );
                }
                seen_qids.push(qid.clone());
                queries.push(QueryGroup {
                    query_id: qid,
                    docs: vec![doc],
                });
            }
        }
    }

    if queries.is_empty() {
        return Err(Error::parse(0, "empty file: no documents"));
    }
    Ok(Dataset {
        queries,
        num_features: max_index_1based,
    })
}

/// Writes a dataset back out in SVMLight format. Parsing the output yields the
/// same dataset (sparse zero entries are dropped on both sides).
pub fn write_svmlight(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut line = String::new();
    for q in &data.queries {
        for d in &q.docs {
            line.clear();
            write!(line, "{} qid:{}", d.label, q.query_id).unwrap();
            for &(i, v) in &d.features {
                write!(line, " {}:{}", i + 1, v).unwrap();
            }
            line.push('\n');
            w.write_all(line.as_bytes())
                .map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Configuration for [`generate_synthetic`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_queries: usize,
    pub docs_per_query: usize,
    pub n_features: usize,
    /// Probability that a grade is resampled uniformly from `0..=Y_MAX`.
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_queries: 2000,
            docs_per_query: 20,
            n_features: 50,
            label_noise: 0.1,
            seed: 42,
        }
    }
}

/// Weights of the hidden scoring function over the first five features.
const SCORE_WEIGHTS: [f64; 5] = [1.0, 0.8, 0.6, 0.4, 0.2];

/// Generates a synthetic dataset: features are iid standard normal (via
/// Box-Muller on the seeded stream), a hidden linear-plus-interaction score
/// is quantized to grades 0..=4 at dataset-level quintiles, and each grade is
/// replaced by a uniform draw with probability `label_noise`. Pure function of
/// the config: identical configs give bit-identical datasets.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.n_queries == 0 || cfg.docs_per_query == 0 {
        return Err(Error::InvalidArgument(
            "n_queries and docs_per_query must be >= 1".into(),
        ));
    }
    if cfg.n_features < 5 {
        return Err(Error::InvalidArgument(
            "n_features must be >= 5 (hidden scoring function uses 5 features)".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_docs = cfg.n_queries * cfg.docs_per_query;
    let mut features: Vec<Vec<f64>> = Vec::with_capacity(n_docs);
    let mut scores: Vec<f64> = Vec::with_capacity(n_docs);
    for _ in 0..n_docs {
        let x: Vec<f64> = (0..cfg.n_features).map(|_| normal(&mut rng)).collect();
        let mut s = 0.0;
        for (w, v) in SCORE_WEIGHTS.iter().zip(&x) {
            s += w * v;
        }
        s += 0.5 * x[0] * x[1] + 0.3 * x[2] * x[3];
        features.push(x);
        scores.push(s);
    }

    // Dataset-level cutoffs with the skew of graded retrieval corpora: half
    // the documents are irrelevant and high grades are rare.
    let mut sorted = scores.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let cutoff = |q: f64| sorted[((q * n_docs as f64).ceil() as usize).clamp(1, n_docs) - 1];
    let cutoffs = [cutoff(0.5), cutoff(0.75), cutoff(0.9), cutoff(0.97)];

    let mut queries = Vec::with_capacity(cfg.n_queries);
    let mut doc_i = 0;
    for q in 0..cfg.n_queries {
        let mut docs = Vec::with_capacity(cfg.docs_per_query);
        for _ in 0..cfg.docs_per_query {
            let mut grade = cutoffs.iter().filter(|&&c| scores[doc_i] > c).count() as u8;
            if cfg.label_noise > 0.0 && rng.random::<f64>() < cfg.label_noise {
                grade = rng.random_range(0..=Y_MAX as u32) as u8;
            }
            docs.push(Document {
                features: features[doc_i]
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| (i as u32, v))
                    .collect(),
                label: grade,
            });
            doc_i += 1;
        }
        queries.push(QueryGroup {
            query_id: format!("{}", q + 1),
            docs,
        });
    }

    Ok(Dataset {
        queries,
        num_features: cfg.n_features,
    })
}

/// Standard normal via Box-Muller; two uniforms per draw keeps the stream
/// layout independent of any library sampling internals.
fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

// ---------------------------------------------------------------------------
// Click log files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ClickLogHeader {
    format: String,
    version: u32,
    truncation: u32,
}

#[derive(Serialize, Deserialize)]
struct ClickLogLine {
    qid: String,
    docs: Vec<u32>,
    clicks: Vec<u8>,
}

const CLICK_LOG_FORMAT: &str = "ultr-clicklog";

/// Writes a click log: a header object, then one JSON object per session in
/// session order with fields `qid`, `docs`, `clicks`.
pub fn write_click_log(clicks: &ClickDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = ClickLogHeader {
        format: CLICK_LOG_FORMAT.into(),
        version: 1,
        truncation: clicks.sessions.iter().map(|s| s.truncation).max().unwrap_or(0),
    };
    let io_err = |e: std::io::Error| Error::io(path, e);
    serde_json::to_writer(&mut w, &header).map_err(|e| Error::ModelFormat(e.to_string()))?;
    w.write_all(b"\n").map_err(io_err)?;
    for s in &clicks.sessions {
        let line = ClickLogLine {
            qid: clicks.source.queries[s.query as usize].query_id.clone(),
            docs: s.doc_refs.clone(),
            clicks: s.clicks.iter().map(|&c| c as u8).collect(),
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::ModelFormat(e.to_string()))?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads a click log written by [`write_click_log`], resolving qids and doc
/// indices against `source`. A dangling reference is an error naming the
/// offending session.
pub fn read_click_log(path: impl AsRef<Path>, source: Arc<Dataset>) -> Result<ClickDataset> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();

    let header_line = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing click log header"))?;
    let header: ClickLogHeader = serde_json::from_str(header_line)
        .map_err(|e| Error::parse(1, format!("bad header: {e}")))?;
    if header.format != CLICK_LOG_FORMAT {
        return Err(Error::parse(1, format!("unknown format `{}`", header.format)));
    }
    if header.version != 1 {
        return Err(Error::parse(1, format!("unsupported version {}", header.version)));
    }

    // First occurrence wins for duplicate qids; duplicates are warned about at
    // parse time and are indistinguishable in the log.
    let mut qid_index = std::collections::HashMap::new();
    for (i, q) in source.queries.iter().enumerate() {
        qid_index.entry(q.query_id.as_str()).or_insert(i);
    }

    let mut sessions = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ClickLogLine = serde_json::from_str(line)
            .map_err(|e| Error::parse(idx + 2, e.to_string()))?;
        let &query = qid_index.get(rec.qid.as_str()).ok_or_else(|| Error::UnknownQuery {
            session: idx,
            qid: rec.qid.clone(),
        })?;
        if rec.clicks.len() != rec.docs.len() {
            return Err(Error::parse(idx + 2, "clicks/docs length mismatch"));
        }
        sessions.push(ClickSession {
            query: query as u32,
            doc_refs: rec.docs,
            clicks: rec.clicks.iter().map(|&c| c != 0).collect(),
            truncation: header.truncation,
        });
    }
    ClickDataset::new(sessions, source)
}
