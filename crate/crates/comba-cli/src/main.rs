//! `comba` — reproducible command-line runs for the COMBA node classifier.
//!
//! Every subcommand is a pure function of its flags, config file, dataset
//! bytes, and seed (up to wall-clock fields): machine-readable results go to
//! stdout as JSON/JSONL/edge lists, human-oriented text goes to stderr.
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use comba_core::data::{
    generate_synthetic, load_dataset, restore_model, save_checkpoint, save_dataset, DatasetBundle,
    SyntheticSpec,
};
use comba_core::graph::hop_adjacency;
use comba_core::model::eval_logits;
use comba_core::rng::RngState;
use comba_core::theorem::verify_inequality;
use comba_core::train::{bench_scaling, evaluate, partition_for, train, TrainConfig};

/// Where a run gets its graph from: a dataset directory on disk or a
/// synthetic generator spec evaluated in memory.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
enum DataSource {
    /// Directory holding edges.txt, features.csv, labels.txt, splits.json,
    /// and meta.json.
    Path(PathBuf),
    /// Synthetic dataset spec (see `gen-data` for writing one to disk).
    Synthetic(SyntheticSpec),
}

/// Top-level JSON config for `train` and `bench`: a data source plus the
/// training hyperparameters. Unknown keys are rejected; every `train` field
/// falls back to its documented default when omitted.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigFile {
    data: DataSource,
    #[serde(default)]
    train: TrainConfig,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {what} from {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {what} {}", path.display()))
}

fn load_bundle(source: &DataSource) -> Result<DatasetBundle> {
    match source {
        DataSource::Path(dir) => {
            load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))
        }
        DataSource::Synthetic(spec) => {
            generate_synthetic(spec).context("generating synthetic dataset")
        }
    }
}

#[derive(Parser)]
#[command(
    name = "comba",
    version,
    about = "Train, evaluate, and verify COMBA graph models",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model from a JSON run config; writes metrics.jsonl,
    /// checkpoint.json, and summary.json into --out.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a dataset; prints a metric JSON.
    Eval(EvalArgs),
    /// Check the cross-batch error bound on randomized instances.
    VerifyTheorem(VerifyArgs),
    /// Time training epochs across graph sizes and fit a log-log slope.
    Bench(BenchArgs),
    /// Generate a synthetic dataset directory from a spec file.
    GenData(GenDataArgs),
    /// Dump the hop-k adjacencies of a dataset as edge-list files.
    Hops(HopsArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Run config JSON (see RunConfigFile).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for metrics.jsonl, checkpoint.json, summary.json.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory to evaluate on.
    #[arg(long)]
    data: PathBuf,
    /// Which split of the dataset to score.
    #[arg(long, value_enum)]
    split: SplitName,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitName {
    Train,
    Val,
    Test,
}

#[derive(Args)]
struct VerifyArgs {
    /// Number of randomized trials (at least 1).
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    /// Seed for the trial generator.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional JSONL file receiving one record per trial.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated graph sizes, e.g. --sizes 1000,2000,4000.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    sizes: Vec<usize>,
    /// Optional run config; only its train section is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Timed epochs per size (median is reported; at least 3).
    #[arg(long, default_value_t = 5)]
    epochs: usize,
}

#[derive(Args)]
struct GenDataArgs {
    /// Synthetic spec JSON (kind, n, seed, and kind-specific knobs).
    #[arg(long)]
    spec: PathBuf,
    /// Directory to write the dataset into.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HopsArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Largest hop distance to materialize (at least 1).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    /// Directory receiving hop_1.txt .. hop_k.txt.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run() -> Result<u8> {
    let cli = Cli::parse();
    init_threads()?;
    match cli.cmd {
        Cmd::Train(a) => cmd_train(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::VerifyTheorem(a) => cmd_verify_theorem(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::GenData(a) => cmd_gen_data(a),
        Cmd::Hops(a) => cmd_hops(a),
    }
}

/// COMBA_THREADS caps the rayon pool for the whole process.
fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("COMBA_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .context("COMBA_THREADS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<u8> {
    let mut rc: RunConfigFile = read_json(&args.config, "run config")?;
    if let Some(seed) = args.seed {
        log::info!(
            "overriding config seed {} with --seed {}",
            rc.train.seed,
            seed
        );
        rc.train.seed = seed;
    }
    let bundle = load_bundle(&rc.data)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let outcome = train(&bundle.graph, &bundle.splits, &rc.train, bundle.meta.metric)?;

    let metrics_path = args.out.join("metrics.jsonl");
    let mut f = fs::File::create(&metrics_path)?;
    for rec in &outcome.history {
        writeln!(f, "{}", serde_json::to_string(rec)?)?;
    }

    save_checkpoint(
        &args.out.join("checkpoint.json"),
        &outcome.model,
        &outcome.params,
        Some(&rc.train),
    )?;

    let summary = serde_json::json!({
        "metric": outcome.metric.name(),
        "best_epoch": outcome.best_epoch,
        "best_val": outcome.best_val,
        "test_at_best": outcome.test_at_best,
        "epochs_run": outcome.history.len(),
    });
    fs::write(
        args.out.join("summary.json"),
        format!("{}\n", serde_json::to_string_pretty(&summary)?),
    )?;
    log::info!(
        "trained {} epochs on '{}'; best {} at epoch {}",
        outcome.history.len(),
        bundle.meta.name,
        outcome.best_val,
        outcome.best_epoch
    );
    println!("{summary}");
    Ok(0)
}

fn cmd_eval(args: EvalArgs) -> Result<u8> {
    let (model, params, cfg) = restore_model(&args.checkpoint)?;
    let cfg = cfg.context(
        "checkpoint carries no training config, so the batch partition cannot be rebuilt",
    )?;
    let bundle = load_dataset(&args.data)?;
    let g = &bundle.graph;
    if model.spec.d_in != g.feature_dim() || model.spec.classes != g.num_classes() {
        bail!(
            "checkpoint expects {} features / {} classes but dataset has {} / {}",
            model.spec.d_in,
            model.spec.classes,
            g.feature_dim(),
            g.num_classes()
        );
    }

    let bs = partition_for(&cfg, g)?;
    let logits = eval_logits(&model, &params, g, &bs)?;
    let idx = match args.split {
        SplitName::Train => &bundle.splits.train,
        SplitName::Val => &bundle.splits.val,
        SplitName::Test => &bundle.splits.test,
    };
    let value = evaluate(&logits, g.labels(), idx, bundle.meta.metric)?;
    println!(
        "{}",
        serde_json::json!({ "metric": bundle.meta.metric.name(), "value": value })
    );
    Ok(0)
}

fn cmd_verify_theorem(args: VerifyArgs) -> Result<u8> {
    let report = verify_inequality(args.trials as usize, &RngState::new(args.seed))?;
    if let Some(path) = &args.report {
        let mut f =
            fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        for t in &report.trials {
            writeln!(f, "{}", serde_json::to_string(t)?)?;
        }
    }
    let summary = serde_json::json!({
        "trials": report.trials.len(),
        "violations": report.violations,
        "min_gap": report.min_gap,
        "all_hold": report.all_hold,
    });
    eprintln!(
        "{}/{} trials satisfy the error bound (min gap {:.3e})",
        report.trials.len() - report.violations,
        report.trials.len(),
        report.min_gap
    );
    println!("{summary}");
    Ok(if report.all_hold { 0 } else { 1 })
}

fn cmd_bench(args: BenchArgs) -> Result<u8> {
    let cfg = match &args.config {
        Some(path) => read_json::<RunConfigFile>(path, "run config")?.train,
        None => TrainConfig::default(),
    };
    let report = bench_scaling(&args.sizes, &cfg, args.epochs)?;
    eprintln!(
        "{:>10} {:>10} {:>10} {:>14}",
        "size", "nodes", "edges", "ms/epoch"
    );
    for row in &report.rows {
        eprintln!(
            "{:>10} {:>10} {:>10} {:>14.3}",
            row.size, row.nodes, row.edges, row.ms_per_epoch
        );
    }
    eprintln!("log-log slope: {:.3}", report.slope);
    println!("{}", serde_json::to_string(&report)?);
    Ok(0)
}

fn cmd_gen_data(args: GenDataArgs) -> Result<u8> {
    let spec: SyntheticSpec = read_json(&args.spec, "synthetic spec")?;
    let bundle = generate_synthetic(&spec)?;
    save_dataset(&args.out, &bundle)?;
    let g = &bundle.graph;
    println!(
        "{}",
        serde_json::json!({
            "out": args.out.display().to_string(),
            "nodes": g.n(),
            "edges": g.num_edges(),
            "classes": g.num_classes(),
            "metric": bundle.meta.metric.name(),
        })
    );
    Ok(0)
}

fn cmd_hops(args: HopsArgs) -> Result<u8> {
    let bundle = load_dataset(&args.data)?;
    let g = &bundle.graph;
    let hops = hop_adjacency(g, args.k as usize)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut files = Vec::new();
    for k in 1..=args.k as usize {
        let mat = hops.mat(k);
        // Hop matrices are symmetric; list each pair once, lines sorted
        // lexicographically so dumps diff cleanly.
        let mut lines = Vec::new();
        for i in 0..g.n() {
            for &j in mat.row(i) {
                if (j as usize) > i {
                    lines.push(format!("{i} {j}\n"));
                }
            }
        }
        lines.sort_unstable();
        let path = args.out.join(format!("hop_{k}.txt"));
        fs::write(&path, lines.concat())?;
        files.push(path.display().to_string());
    }
    println!("{}", serde_json::json!({ "k": args.k, "files": files }));
    Ok(0)
}
