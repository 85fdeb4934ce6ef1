//! Command-line interface: simulate click logs, train rankers, evaluate,
//! and reproduce the comparison/sweep experiments.
//!
//! Every subcommand resolves its parameters as defaults < `--config` file <
//! explicit flags, then writes the resolved configuration as `config.json`
//! next to its outputs; re-running from that file reproduces the outputs
//! bit-identically.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use ultr::data::{
    generate_synthetic, parse_svmlight, read_click_log, write_click_log, write_svmlight,
    SyntheticConfig,
};
use ultr::debias::{train_clicks, TrainConfig};
use ultr::gbdt::{load_model, save_model, Node};
use ultr::harness::{
    run_comparison, run_sweep, write_comparison_outputs, write_sweep_outputs, Condition,
    DataSource, ExperimentSpec, SweepAxis,
};
use ultr::metrics::{evaluate, export_bias_curves, export_history};
use ultr::sim::{
    generate_click_dataset, position_ctr, train_initial_ranker, CascadeConfig, ClickModel,
    PbmConfig,
};

#[derive(Parser)]
#[command(name = "ultr", version, about = "Unbiased learning-to-rank toolkit")]
struct Cli {
    /// Worker threads (overrides the ULTR_THREADS environment variable;
    /// default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a click log from a labeled dataset via an initial ranker and
    /// a click model.
    Simulate(SimulateArgs),
    /// Train a ranker on a click log, optionally with joint bias estimation.
    Train(TrainArgs),
    /// Evaluate a model file against a labeled dataset.
    Evaluate(EvaluateArgs),
    /// Run the full method comparison (conditions x seeds) and write tables.
    Compare(CompareArgs),
    /// Sweep one axis (p, theta, beta, data_fraction) over a comparison.
    Sweep(SweepArgs),
    /// Print a summary of a model file.
    InspectModel(InspectArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let threads = cli
        .threads
        .or_else(|| std::env::var("ULTR_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .expect("rayon pool initializes once");

    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::InspectModel(args) => cmd_inspect(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn load_config<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Args)]
struct SimulateArgs {
    /// JSON config to start from (flags override it).
    #[arg(long)]
    config: Option<PathBuf>,
    /// SVMLight dataset to simulate over (default: generate synthetic data).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Force synthetic data generation.
    #[arg(long)]
    synthetic: bool,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    docs: Option<usize>,
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    label_noise: Option<f64>,
    #[arg(long)]
    sessions: Option<usize>,
    /// pbm or cascade.
    #[arg(long)]
    click_model: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long)]
    satisfaction_scale: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Examination propensity table, one real per line, position order.
    #[arg(long)]
    rho_file: Option<PathBuf>,
    /// List truncation at logging time.
    #[arg(long)]
    truncation: Option<usize>,
    /// Fraction of queries used to train the initial ranker.
    #[arg(long)]
    initial_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "runs/simulate")]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct SimulateConfig {
    dataset: Option<PathBuf>,
    synthetic: SyntheticConfig,
    sessions: usize,
    click_model: ClickModel,
    initial_fraction: f64,
    seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            dataset: None,
            synthetic: SyntheticConfig::default(),
            sessions: 20_000,
            click_model: ClickModel::Pbm(PbmConfig::default()),
            initial_fraction: 0.01,
            seed: 42,
        }
    }
}

fn resolve_click_model(
    current: ClickModel,
    args_model: &Option<String>,
    theta: Option<f64>,
    beta: Option<f64>,
    satisfaction_scale: Option<f64>,
    epsilon: Option<f64>,
    rho_file: &Option<PathBuf>,
    truncation: Option<usize>,
) -> anyhow::Result<ClickModel> {
    let mut model = match args_model.as_deref() {
        Some("pbm") => ClickModel::Pbm(match current {
            ClickModel::Pbm(cfg) => cfg,
            _ => PbmConfig::default(),
        }),
        Some("cascade") => ClickModel::Cascade(match current {
            ClickModel::Cascade(cfg) => cfg,
            _ => CascadeConfig::default(),
        }),
        Some(other) => bail!("unknown click model `{other}` (expected pbm or cascade)"),
        None => current,
    };
    match &mut model {
        ClickModel::Pbm(cfg) => {
            if let Some(t) = theta {
                cfg.theta = t;
            }
            if let Some(e) = epsilon {
                cfg.epsilon = e;
            }
            if let Some(path) = rho_file {
                let text =
                    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                cfg.rho = text
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(|l| l.trim().parse::<f64>().context("bad rho entry"))
                    .collect::<anyhow::Result<Vec<f64>>>()?;
            }
            if let Some(k) = truncation {
                if cfg.rho.len() >= k {
                    cfg.rho.truncate(k);
                } else {
                    bail!("truncation {k} exceeds rho table length {}", cfg.rho.len());
                }
            }
            if beta.is_some() || satisfaction_scale.is_some() {
                bail!("--beta/--satisfaction-scale apply to the cascade model");
            }
        }
        ClickModel::Cascade(cfg) => {
            if let Some(b) = beta {
                cfg.beta = b;
            }
            if let Some(s) = satisfaction_scale {
                cfg.satisfaction_scale = s;
            }
            if let Some(e) = epsilon {
                cfg.epsilon = e;
            }
            if let Some(k) = truncation {
                cfg.max_positions = k;
            }
            if theta.is_some() {
                bail!("--theta applies to the pbm model");
            }
        }
    }
    model.validate()?;
    Ok(model)
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let mut cfg: SimulateConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => SimulateConfig::default(),
    };
    if args.dataset.is_some() && args.synthetic {
        bail!("--dataset and --synthetic are mutually exclusive");
    }
    if let Some(d) = args.dataset {
        cfg.dataset = Some(d);
    }
    if args.synthetic {
        cfg.dataset = None;
    }
    if let Some(v) = args.queries {
        cfg.synthetic.n_queries = v;
    }
    if let Some(v) = args.docs {
        cfg.synthetic.docs_per_query = v;
    }
    if let Some(v) = args.features {
        cfg.synthetic.n_features = v;
    }
    if let Some(v) = args.label_noise {
        cfg.synthetic.label_noise = v;
    }
    if let Some(v) = args.sessions {
        cfg.sessions = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
        cfg.synthetic.seed = v;
    }
    if let Some(v) = args.initial_fraction {
        cfg.initial_fraction = v;
    }
    cfg.click_model = resolve_click_model(
        cfg.click_model.clone(),
        &args.click_model,
        args.theta,
        args.beta,
        args.satisfaction_scale,
        args.epsilon,
        &args.rho_file,
        args.truncation,
    )?;

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let data = Arc::new(match &cfg.dataset {
        Some(path) => parse_svmlight(path)?,
        None => {
            let data = generate_synthetic(&cfg.synthetic)?;
            write_svmlight(&data, args.out_dir.join("dataset.svmlight"))?;
            data
        }
    });

    let ranker = train_initial_ranker(&data, cfg.initial_fraction, cfg.seed)?;
    let clicks = generate_click_dataset(
        data.clone(),
        &ranker,
        &cfg.click_model,
        cfg.sessions,
        cfg.seed,
    )?;
    write_click_log(&clicks, args.out_dir.join("clicks.jsonl"))?;
    write_json(&args.out_dir.join("config.json"), &cfg)?;

    let total_clicks: usize = clicks
        .sessions
        .iter()
        .map(|s| s.clicks.iter().filter(|&&c| c).count())
        .sum();
    println!(
        "wrote {} sessions ({} clicks) to {}",
        clicks.sessions.len(),
        total_clicks,
        args.out_dir.join("clicks.jsonl").display()
    );
    println!("position CTR:");
    for (i, ctr) in position_ctr(&clicks).iter().enumerate() {
        println!("  {:>2}  {ctr:.4}", i + 1);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// SVMLight dataset supplying the features.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Click log produced by `simulate`.
    #[arg(long)]
    clicks: Option<PathBuf>,
    /// Boosting rounds.
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    leaves: Option<usize>,
    #[arg(long)]
    min_docs: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    feature_fraction: Option<f64>,
    #[arg(long)]
    bagging_fraction: Option<f64>,
    /// Regularization order of the bias updates.
    #[arg(long, allow_hyphen_values = true)]
    p: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    bias_interval: Option<usize>,
    #[arg(long)]
    floor: Option<f64>,
    /// Keep all ratios pinned at 1 (plain LambdaMART on clicks).
    #[arg(long)]
    no_debias: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "runs/train")]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct TrainCommandConfig {
    dataset: PathBuf,
    clicks: PathBuf,
    train: TrainConfig,
}

impl Default for TrainCommandConfig {
    fn default() -> Self {
        TrainCommandConfig {
            dataset: PathBuf::new(),
            clicks: PathBuf::new(),
            train: TrainConfig::default(),
        }
    }
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let mut cfg: TrainCommandConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => TrainCommandConfig::default(),
    };
    if let Some(v) = args.dataset {
        cfg.dataset = v;
    }
    if let Some(v) = args.clicks {
        cfg.clicks = v;
    }
    if cfg.dataset.as_os_str().is_empty() || cfg.clicks.as_os_str().is_empty() {
        bail!("--dataset and --clicks are required (directly or via --config)");
    }
    let t = &mut cfg.train;
    if let Some(v) = args.trees {
        t.rounds = v;
    }
    if let Some(v) = args.lr {
        t.gbdt.learning_rate = v;
    }
    if let Some(v) = args.leaves {
        t.gbdt.max_leaves = v;
    }
    if let Some(v) = args.min_docs {
        t.gbdt.min_docs_per_leaf = v;
    }
    if let Some(v) = args.l2 {
        t.gbdt.l2_leaf_reg = v;
    }
    if let Some(v) = args.bins {
        t.gbdt.n_bins = v;
    }
    if let Some(v) = args.feature_fraction {
        t.gbdt.feature_fraction = v;
    }
    if let Some(v) = args.bagging_fraction {
        t.gbdt.bagging_fraction = v;
    }
    if let Some(v) = args.p {
        t.p = v;
    }
    if let Some(v) = args.sigma {
        t.sigma = v;
    }
    if let Some(v) = args.bias_interval {
        t.bias_update_interval = v;
    }
    if let Some(v) = args.floor {
        t.floor = v;
    }
    if args.no_debias {
        t.debias = false;
    }
    if let Some(v) = args.seed {
        t.seed = v;
    }
    cfg.train.validate()?;

    let data = Arc::new(parse_svmlight(&cfg.dataset)?);
    let clicks = read_click_log(&cfg.clicks, data)?;
    let output = train_clicks(&clicks, &cfg.train)?;

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    save_model(&output.ensemble, args.out_dir.join("model.json"))?;
    let mut history_csv = Vec::new();
    export_history(&output.history, &mut history_csv)?;
    fs::write(args.out_dir.join("history.csv"), history_csv)?;
    let mut curves = Vec::new();
    export_bias_curves(&output.history, &mut curves)?;
    fs::write(args.out_dir.join("bias_curves.csv"), curves)?;
    write_json(&args.out_dir.join("config.json"), &cfg)?;

    println!(
        "trained {} trees; final ratios t+ = {:?}",
        output.ensemble.trees.len(),
        output
            .bias
            .t_plus()
            .iter()
            .map(|v| (v * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>()
    );
    println!("model written to {}", args.out_dir.join("model.json").display());
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "runs/evaluate")]
    out_dir: PathBuf,
}

fn cmd_evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let model = load_model(&args.model)?;
    let data = parse_svmlight(&args.dataset)?;
    let report = evaluate(&data, &model)?;

    fs::create_dir_all(&args.out_dir)?;
    write_json(&args.out_dir.join("eval.json"), &report)?;
    fs::write(args.out_dir.join("eval.csv"), report.to_csv())?;
    #[derive(Serialize)]
    struct EvalConfig<'a> {
        model: &'a Path,
        dataset: &'a Path,
    }
    write_json(
        &args.out_dir.join("config.json"),
        &EvalConfig {
            model: &args.model,
            dataset: &args.dataset,
        },
    )?;
    print!("{}", report.to_csv());
    Ok(())
}

// ---------------------------------------------------------------------------
// compare and sweep
// ---------------------------------------------------------------------------

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment spec to start from (flags override it).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    /// SVMLight dataset; omit to use synthetic data.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    docs: Option<usize>,
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    label_noise: Option<f64>,
    #[arg(long)]
    sessions: Option<usize>,
    #[arg(long)]
    click_model: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long)]
    satisfaction_scale: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    rho_file: Option<PathBuf>,
    #[arg(long)]
    truncation: Option<usize>,
    /// Comma-separated: labeled_upper,click_lower,pairwise_debias.
    #[arg(long, value_delimiter = ',')]
    conditions: Vec<String>,
    #[arg(long)]
    seeds: Option<u32>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    p: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    initial_fraction: Option<f64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

/// `config.json` written next to experiment outputs.
#[derive(Serialize, Deserialize)]
struct ExperimentConfigFile {
    spec: ExperimentSpec,
    #[serde(default)]
    config_hash: String,
    #[serde(default)]
    version: String,
}

fn build_spec(args: &ExperimentArgs) -> anyhow::Result<ExperimentSpec> {
    let mut spec = match &args.config {
        Some(path) => {
            // Accept either a bare spec or the wrapped config.json this tool
            // writes.
            match load_config::<ExperimentConfigFile>(path) {
                Ok(wrapped) => wrapped.spec,
                Err(_) => load_config::<ExperimentSpec>(path)?,
            }
        }
        None => ExperimentSpec::default(),
    };
    if let Some(v) = &args.name {
        spec.name = v.clone();
    }
    if let Some(path) = &args.dataset {
        spec.data = DataSource::File { path: path.clone() };
    }
    if let DataSource::Synthetic(cfg) = &mut spec.data {
        if let Some(v) = args.queries {
            cfg.n_queries = v;
        }
        if let Some(v) = args.docs {
            cfg.docs_per_query = v;
        }
        if let Some(v) = args.features {
            cfg.n_features = v;
        }
        if let Some(v) = args.label_noise {
            cfg.label_noise = v;
        }
    }
    if let Some(v) = args.sessions {
        spec.n_sessions = v;
    }
    spec.click_model = resolve_click_model(
        spec.click_model.clone(),
        &args.click_model,
        args.theta,
        args.beta,
        args.satisfaction_scale,
        args.epsilon,
        &args.rho_file,
        args.truncation,
    )?;
    if !args.conditions.is_empty() {
        spec.conditions = args
            .conditions
            .iter()
            .map(|s| s.parse::<Condition>())
            .collect::<Result<Vec<_>, _>>()?;
    }
    if let Some(v) = args.seeds {
        spec.n_seeds = v;
    }
    if let Some(v) = args.trees {
        spec.train.rounds = v;
    }
    if let Some(v) = args.p {
        spec.train.p = v;
    }
    if let Some(v) = args.seed {
        spec.train.seed = v;
    }
    if let Some(v) = args.initial_fraction {
        spec.initial_fraction = v;
    }
    if let Some(v) = args.test_fraction {
        spec.test_fraction = v;
    }
    spec.validate()?;
    Ok(spec)
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
}

fn cmd_compare(args: CompareArgs) -> anyhow::Result<()> {
    let spec = build_spec(&args.experiment)?;
    let result = run_comparison(&spec)?;
    let dir = args.experiment.out_dir.join(&spec.name);
    write_comparison_outputs(&dir, &spec, &result)?;

    println!("condition means (over {} seeds):", spec.n_seeds);
    for &cond in &spec.conditions {
        let mut line = format!("  {cond:<16}");
        for metric in ultr::harness::METRICS {
            match result.mean_metric(cond, metric) {
                Some(v) => line.push_str(&format!(" {metric}={v:.4}")),
                None => line.push_str(&format!(" {metric}=failed")),
            }
        }
        println!("{line}");
    }
    println!("outputs in {}", dir.display());
    Ok(())
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// p, theta, beta, or data_fraction.
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Vec<f64>,
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let spec = build_spec(&args.experiment)?;
    if args.values.is_empty() {
        bail!("--values must be nonempty");
    }
    let axis = match args.axis.as_str() {
        "p" => SweepAxis::P(args.values.clone()),
        "theta" => SweepAxis::Theta(args.values.clone()),
        "beta" => SweepAxis::Beta(args.values.clone()),
        "data_fraction" => SweepAxis::DataFraction(args.values.clone()),
        other => bail!("unknown axis `{other}`"),
    };
    let result = run_sweep(&spec, &axis)?;
    let dir = args.experiment.out_dir.join(&spec.name);
    write_sweep_outputs(&dir, &spec, &axis, &result)?;
    println!(
        "wrote {} sweep rows to {}",
        result.rows.len(),
        dir.join("sweep.csv").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// inspect-model
// ---------------------------------------------------------------------------

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
}

fn cmd_inspect(args: InspectArgs) -> anyhow::Result<()> {
    let model = load_model(&args.model)?;
    let total_leaves: usize = model.trees.iter().map(|t| t.n_leaves()).sum();
    let mut feature_splits = vec![0usize; model.num_features];
    for tree in &model.trees {
        for node in &tree.nodes {
            if let Node::Split { feature, .. } = node {
                feature_splits[*feature as usize] += 1;
            }
        }
    }
    let mut top: Vec<(usize, usize)> = feature_splits.iter().copied().enumerate().collect();
    top.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    println!("model: {}", args.model.display());
    println!("trees: {}", model.trees.len());
    println!("total leaves: {total_leaves}");
    println!("learning rate: {}", model.learning_rate);
    println!("base score: {}", model.base_score);
    println!("features: {}", model.num_features);
    println!(
        "bin boundaries stored: {}",
        if model.bin_boundaries.is_some() { "yes" } else { "no" }
    );
    println!("top features by split count:");
    for (f, c) in top.iter().take(10).filter(|(_, c)| *c > 0) {
        println!("  feature {f}: {c} splits");
    }
    Ok(())
}
