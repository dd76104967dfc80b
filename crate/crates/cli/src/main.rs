//! rankvec: corpus-anchored sentence similarity from the command line.
//!
//! The workflow is a pipeline: `gen-toy` (or your own corpus) -> `index` ->
//! `train` -> `index` again with the trained model -> `score` / `eval` /
//! `analyze`. Every run prints its resolved configuration to stderr before
//! doing any work, emits data on stdout, and is reproducible: identical
//! inputs and seeds give identical output files.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/domain error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rankvec_core::ErrorKind;

mod commands;

#[derive(Parser)]
#[command(
    name = "rankvec",
    version,
    about = "Corpus-anchored sentence similarity engine"
)]
struct Cli {
    /// Worker threads for batched computations (0 = machine parallelism,
    /// 1 = the deterministic reference path; results are identical either way)
    #[arg(long, global = true, env = "RANKVEC_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a corpus index: encode every sentence and persist the matrix
    Index(IndexArgs),
    /// Train a fresh encoder with the contrastive + rank-distillation hinge
    Train(TrainArgs),
    /// Print predicted similarity for each sentence pair in a TSV
    Score(ScoreArgs),
    /// Spearman correlation of predictions against gold scores
    Eval(EvalArgs),
    /// Paper-style analyses (CSV on stdout)
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Time rank-vector computation and the batch similarity matrix
    Bench(BenchArgs),
    /// Generate a synthetic clustered corpus and scored pair set
    GenToy(GenToyArgs),
}

#[derive(Args)]
struct IndexArgs {
    /// Corpus file, one sentence per line (UTF-8, LF or CRLF)
    #[arg(long)]
    corpus: PathBuf,
    /// Encoder backend: hash-ngram | precomputed:PATH | model:PATH
    #[arg(long, env = "RANKVEC_ENCODER", default_value = "hash-ngram")]
    encoder: String,
    /// Embedding dimension (hash-ngram backend)
    #[arg(long, env = "RANKVEC_DIM", default_value_t = 64)]
    dim: usize,
    /// Hashed feature dimension (hash-ngram backend)
    #[arg(long, env = "RANKVEC_FEATURES", default_value_t = 1024)]
    features: usize,
    /// Seed for hash-ngram encoder initialization
    #[arg(long, env = "RANKVEC_SEED", default_value_t = 42)]
    seed: u64,
    /// Output index file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training corpus file, one sentence per line
    #[arg(long)]
    corpus: PathBuf,
    /// Index built with the base encoder E1
    #[arg(long)]
    index: PathBuf,
    /// Base encoder backend: hash-ngram | precomputed:PATH | model:PATH
    #[arg(long, env = "RANKVEC_E1", default_value = "hash-ngram")]
    e1: String,
    /// Seed of the base hash-ngram encoder (must reproduce the index)
    #[arg(long, env = "RANKVEC_E1_SEED", default_value_t = 42)]
    e1_seed: u64,
    /// Feature dimension of the base hash-ngram encoder
    #[arg(long, env = "RANKVEC_E1_FEATURES", default_value_t = 1024)]
    e1_features: usize,
    #[arg(long, env = "RANKVEC_BATCH_SIZE", default_value_t = 64)]
    batch_size: usize,
    /// Contrastive softmax temperature
    #[arg(long, env = "RANKVEC_TAU", default_value_t = 0.05)]
    tau: f64,
    /// Weight on the rank loss inside the hinge
    #[arg(long, env = "RANKVEC_LAMBDA_TRAIN", default_value_t = 0.05)]
    lambda_train: f64,
    /// Lower rank-similarity threshold for sentence-pair filtering
    #[arg(long, env = "RANKVEC_TAU_L", default_value_t = 0.5)]
    tau_l: f64,
    /// Upper rank-similarity threshold for sentence-pair filtering
    #[arg(long, env = "RANKVEC_TAU_U", default_value_t = 0.8)]
    tau_u: f64,
    /// Feature dropout rate for positive pairs
    #[arg(long, env = "RANKVEC_DROPOUT", default_value_t = 0.1)]
    dropout: f64,
    /// Learning rate (plain gradient descent)
    #[arg(long, env = "RANKVEC_LR", default_value_t = 0.1)]
    lr: f64,
    #[arg(long, env = "RANKVEC_EPOCHS", default_value_t = 1)]
    epochs: usize,
    /// Seed for encoder init, shuffling, and dropout draws
    #[arg(long, env = "RANKVEC_SEED", default_value_t = 42)]
    seed: u64,
    /// Embedding dimension of the encoder being trained
    #[arg(long, env = "RANKVEC_DIM", default_value_t = 64)]
    dim: usize,
    /// Hashed feature dimension of the encoder being trained
    #[arg(long, env = "RANKVEC_FEATURES", default_value_t = 1024)]
    features: usize,
    /// Output model file
    #[arg(long)]
    out: PathBuf,
    /// Per-step loss log CSV (columns step,l_cl,lambda_lr,l_total)
    #[arg(long)]
    loss_log: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Trained model file
    #[arg(long)]
    model: PathBuf,
    /// Index built with that model
    #[arg(long)]
    index: PathBuf,
    /// Pair TSV: sentence1 TAB sentence2 TAB gold
    #[arg(long)]
    pairs: PathBuf,
    /// Weight on the rank-vector term of the blend
    #[arg(long, env = "RANKVEC_LAMBDA_INF", default_value_t = 0.1)]
    lambda_inf: f64,
    /// Gold scores are divided by this scale
    #[arg(long, env = "RANKVEC_SCALE", default_value_t = 5.0)]
    scale: f64,
}

#[derive(Args)]
struct EvalArgs {
    /// Pair TSV: sentence1 TAB sentence2 TAB gold
    #[arg(long)]
    dataset: PathBuf,
    /// Trained model file
    #[arg(long)]
    model: PathBuf,
    /// Index built with that model
    #[arg(long)]
    index: PathBuf,
    /// Weight on the rank-vector term of the blend
    #[arg(long, env = "RANKVEC_LAMBDA_INF", default_value_t = 0.1)]
    lambda_inf: f64,
    /// Gold scores are divided by this scale
    #[arg(long, env = "RANKVEC_SCALE", default_value_t = 5.0)]
    scale: f64,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Per-bucket Spearman by gold-similarity band (CSV: bucket_lo,bucket_hi,count,spearman)
    Buckets(BucketsArgs),
    /// Neighbor-overlap analysis by encoder-cosine group
    /// (CSV: group_lo,group_hi,count,mean_overlap,spearman)
    Overlap(OverlapArgs),
    /// Uniformity and alignment of base embeddings vs rank vectors
    /// (CSV: set,uniformity,alignment)
    Uniformity(UniformityArgs),
}

#[derive(Args)]
struct BucketsArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long, env = "RANKVEC_LAMBDA_INF", default_value_t = 0.1)]
    lambda_inf: f64,
    #[arg(long, env = "RANKVEC_SCALE", default_value_t = 5.0)]
    scale: f64,
    /// Comma-separated bucket edges over normalized gold scores
    #[arg(long, default_value = "0,0.3333333333333333,0.6666666666666666,1")]
    edges: String,
}

#[derive(Args)]
struct OverlapArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    index: PathBuf,
    /// Neighborhood size for the top-k intersection
    #[arg(long, env = "RANKVEC_K", default_value_t = 100)]
    k: usize,
    /// Comma-separated group edges over encoder cosine
    #[arg(long, default_value = "0,0.2,0.4,0.6,0.8,1")]
    group_edges: String,
    #[arg(long, env = "RANKVEC_LAMBDA_INF", default_value_t = 0.1)]
    lambda_inf: f64,
    #[arg(long, env = "RANKVEC_SCALE", default_value_t = 5.0)]
    scale: f64,
}

#[derive(Args)]
struct UniformityArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long, env = "RANKVEC_SCALE", default_value_t = 5.0)]
    scale: f64,
    /// Pairs with normalized gold at or above this are positives for alignment
    #[arg(long, default_value_t = 0.8)]
    positive_threshold: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long, env = "RANKVEC_BATCH_SIZE", default_value_t = 16)]
    batch_size: usize,
    /// Seed for sampling the query batch from the corpus
    #[arg(long, env = "RANKVEC_SEED", default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct GenToyArgs {
    #[arg(long, env = "RANKVEC_SEED", default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    clusters: usize,
    #[arg(long, default_value_t = 200)]
    per_cluster: usize,
    /// Core vocabulary size per cluster
    #[arg(long, default_value_t = 25)]
    vocab: usize,
    /// Number of scored pairs to generate
    #[arg(long, default_value_t = 300)]
    pairs: usize,
    /// Words per sentence (including fillers)
    #[arg(long, default_value_t = 12)]
    sentence_len: usize,
    /// Size of the globally shared filler pool
    #[arg(long, default_value_t = 30)]
    filler_vocab: usize,
    /// Filler words mixed into each sentence
    #[arg(long, default_value_t = 2)]
    fillers_per_sentence: usize,
    /// Output corpus file (one sentence per line)
    #[arg(long)]
    out_corpus: PathBuf,
    /// Output pair TSV (gold on a 0-5 scale)
    #[arg(long)]
    out_pairs: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind::{DisplayHelp, DisplayVersion};
            return match e.kind() {
                DisplayHelp | DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprintln!("{e}");
                    ExitCode::from(1)
                }
            };
        }
    };

    if cli.threads > 0 {
        // build_global errors if a pool already exists; the first one wins
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }

    let result = match cli.command {
        Command::Index(args) => commands::run_index(&args, cli.threads),
        Command::Train(args) => commands::run_train(&args, cli.threads),
        Command::Score(args) => commands::run_score(&args, cli.threads),
        Command::Eval(args) => commands::run_eval(&args, cli.threads),
        Command::Analyze(AnalyzeCommand::Buckets(args)) => {
            commands::run_analyze_buckets(&args, cli.threads)
        }
        Command::Analyze(AnalyzeCommand::Overlap(args)) => {
            commands::run_analyze_overlap(&args, cli.threads)
        }
        Command::Analyze(AnalyzeCommand::Uniformity(args)) => {
            commands::run_analyze_uniformity(&args, cli.threads)
        }
        Command::Bench(args) => commands::run_bench(&args, cli.threads),
        Command::GenToy(args) => commands::run_gen_toy(&args, cli.threads),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e.kind() {
                ErrorKind::Usage => ExitCode::from(1),
                ErrorKind::Data => ExitCode::from(2),
            }
        }
    }
}
