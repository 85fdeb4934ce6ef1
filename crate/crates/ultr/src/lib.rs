//! Unbiased learning-to-rank toolkit.
//!
//! Trains LambdaMART rankers from click logs while jointly estimating
//! position-bias ratios at click and unclick positions, with a click-model
//! simulator and an experiment harness for offline evaluation.
//!
//! Pipeline:
//!
//! 1. [`data`]: load SVMLight/LETOR data or generate a synthetic dataset.
//! 2. [`sim`]: train a weak initial ranker, sample click sessions from it
//!    with a position-based or cascade user model.
//! 3. [`debias`]: boost a tree ranker on the clicks; every round reweights
//!    pair gradients by estimated bias ratios and re-estimates the ratios in
//!    closed form.
//! 4. [`metrics`] / [`harness`]: evaluate against held-out labels and
//!    reproduce the method-comparison tables and sweeps.

pub mod data;
pub mod debias;
pub mod error;
pub mod gbdt;
pub mod harness;
pub mod lambda;
pub mod metrics;
pub mod sim;

pub use data::{
    generate_synthetic, parse_svmlight, read_click_log, write_click_log, write_svmlight,
    ClickDataset, ClickSession, Dataset, DenseFeatures, Document, QueryGroup, SyntheticConfig,
};
pub use debias::{
    objective_value, position_loss_sums, train_clicks, train_labeled, BiasRatios, GbdtParams,
    TrainConfig, TrainHistory, TrainOutput,
};
pub use error::{Error, Result};
pub use gbdt::{build_bins, fit_tree, load_model, save_model, BinIndex, Ensemble, FitParams, Tree};
pub use lambda::{
    accumulate_lambdas, delta_ndcg, lambda_pair, pairwise_loss, LambdaBuffer, PairSet, UnitPairs,
};
pub use metrics::{average_precision, avg_rerank_positions, evaluate, ndcg_at_k, EvalReport};
pub use sim::{
    cascade_sample, generate_click_dataset, pbm_sample, relevance_prob, train_initial_ranker,
    CascadeConfig, ClickModel, PbmConfig,
};
