//! Subcommand implementations. Data goes to stdout; the resolved config,
//! warnings, and progress notes go to stderr.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rankvec_core::corpus::{
    build_index, load_index, read_corpus_sentences, save_index, CorpusIndex,
};
use rankvec_core::encoder::{
    Embedding, Encoder, EncoderParams, HashNgramEncoder, PrecomputedEncoder,
};
use rankvec_core::error::{Error, Result};
use rankvec_core::evaluation::{
    alignment, bucket_evaluate, evaluate, load_pairs_tsv, overlap_analysis, pair_similarity,
    uniformity, InferenceConfig, ScoredPair,
};
use rankvec_core::numerics::DenseVector;
use rankvec_core::rank::{rank_vectors, RankVector};
use rankvec_core::toydata::{generate, write_files, ToyConfig};
use rankvec_core::training::{train, write_loss_csv, TrainConfig};

use crate::{
    BenchArgs, BucketsArgs, EvalArgs, GenToyArgs, IndexArgs, OverlapArgs, ScoreArgs, TrainArgs,
    UniformityArgs,
};

enum EncoderSpec {
    HashNgram,
    Precomputed(PathBuf),
    Model(PathBuf),
}

fn parse_encoder_spec(s: &str) -> Result<EncoderSpec> {
    if s == "hash-ngram" {
        Ok(EncoderSpec::HashNgram)
    } else if let Some(path) = s.strip_prefix("precomputed:") {
        Ok(EncoderSpec::Precomputed(PathBuf::from(path)))
    } else if let Some(path) = s.strip_prefix("model:") {
        Ok(EncoderSpec::Model(PathBuf::from(path)))
    } else {
        Err(Error::InvalidConfig(format!(
            "unknown encoder spec {s:?} (expected hash-ngram, precomputed:PATH, or model:PATH)"
        )))
    }
}

fn build_encoder(spec: &str, seed: u64, dim: usize, features: usize) -> Result<Box<dyn Encoder>> {
    match parse_encoder_spec(spec)? {
        EncoderSpec::HashNgram => Ok(Box::new(HashNgramEncoder::new(EncoderParams::init(
            seed, dim, features,
        )?))),
        EncoderSpec::Precomputed(path) => Ok(Box::new(PrecomputedEncoder::from_file(&path)?)),
        EncoderSpec::Model(path) => {
            Ok(Box::new(HashNgramEncoder::new(EncoderParams::load(&path)?)))
        }
    }
}

fn show(path: &Path) -> String {
    path.display().to_string()
}

pub fn run_index(args: &IndexArgs, threads: usize) -> Result<()> {
    eprintln!(
        "config index corpus={} encoder={} dim={} features={} seed={} out={} threads={}",
        show(&args.corpus),
        args.encoder,
        args.dim,
        args.features,
        args.seed,
        show(&args.out),
        threads
    );
    let encoder = build_encoder(&args.encoder, args.seed, args.dim, args.features)?;
    let (index, stats) = build_index(&args.corpus, encoder.as_ref())?;
    if stats.skipped_blank_lines > 0 {
        eprintln!(
            "warning: skipped {} blank line(s)",
            stats.skipped_blank_lines
        );
    }
    save_index(&index, &args.out)?;
    eprintln!(
        "index written: n={} dim={} fingerprint={:#018x} -> {}",
        index.len(),
        index.dim(),
        index.fingerprint(),
        show(&args.out)
    );
    Ok(())
}

pub fn run_train(args: &TrainArgs, threads: usize) -> Result<()> {
    eprintln!(
        "config train corpus={} index={} e1={} e1_seed={} e1_features={} batch_size={} tau={} \
         lambda_train={} tau_l={} tau_u={} dropout={} lr={} epochs={} seed={} dim={} features={} \
         out={} loss_log={} threads={}",
        show(&args.corpus),
        show(&args.index),
        args.e1,
        args.e1_seed,
        args.e1_features,
        args.batch_size,
        args.tau,
        args.lambda_train,
        args.tau_l,
        args.tau_u,
        args.dropout,
        args.lr,
        args.epochs,
        args.seed,
        args.dim,
        args.features,
        show(&args.out),
        args.loss_log
            .as_deref()
            .map(show)
            .unwrap_or_else(|| "-".into()),
        threads
    );
    let config = TrainConfig {
        batch_size: args.batch_size,
        temperature: args.tau,
        lambda_train: args.lambda_train,
        tau_l: args.tau_l,
        tau_u: args.tau_u,
        dropout_rate: args.dropout,
        learning_rate: args.lr,
        epochs: args.epochs,
        seed: args.seed,
        dim: args.dim,
        features: args.features,
    };
    config.validate()?;
    let index = load_index(&args.index)?;
    let e1 = build_encoder(&args.e1, args.e1_seed, index.dim(), args.e1_features)?;
    index.verify_fingerprint(e1.fingerprint())?;
    let (sentences, _, stats) = read_corpus_sentences(&args.corpus)?;
    if stats.skipped_blank_lines > 0 {
        eprintln!(
            "warning: skipped {} blank line(s)",
            stats.skipped_blank_lines
        );
    }
    let (params, trace) = train(&sentences, &index, e1.as_ref(), &config)?;
    params.save(&args.out)?;
    if let Some(log) = &args.loss_log {
        write_loss_csv(log, &trace)?;
    }
    if let Some(last) = trace.last() {
        eprintln!(
            "trained {} steps: final l_cl={} lambda_lr={} l_total={}",
            trace.len(),
            last.l_cl,
            last.lambda_lr,
            last.l_total
        );
    } else {
        eprintln!("trained 0 steps (epochs=0): initial parameters written");
    }
    eprintln!("model written: {}", show(&args.out));
    Ok(())
}

struct ScoringSetup {
    index: CorpusIndex,
    encoder: HashNgramEncoder,
    pairs: Vec<ScoredPair>,
}

fn load_scoring_setup(
    model: &Path,
    index_path: &Path,
    dataset: &Path,
    scale: f64,
) -> Result<ScoringSetup> {
    let params = EncoderParams::load(model)?;
    let encoder = HashNgramEncoder::new(params);
    let index = load_index(index_path)?;
    index.verify_fingerprint(encoder.fingerprint())?;
    let pairs = load_pairs_tsv(dataset, scale)?;
    Ok(ScoringSetup {
        index,
        encoder,
        pairs,
    })
}

pub fn run_score(args: &ScoreArgs, threads: usize) -> Result<()> {
    eprintln!(
        "config score model={} index={} pairs={} lambda_inf={} scale={} threads={}",
        show(&args.model),
        show(&args.index),
        show(&args.pairs),
        args.lambda_inf,
        args.scale,
        threads
    );
    let setup = load_scoring_setup(&args.model, &args.index, &args.pairs, args.scale)?;
    let cfg = InferenceConfig::new(args.lambda_inf)?;
    for pair in setup.pairs {
        let predicted = pair_similarity(&setup.index, &setup.encoder, &pair.s1, &pair.s2, &cfg)?;
        let pair = pair.with_predicted(predicted);
        println!(
            "{}\t{}\t{}",
            pair.s1.text(),
            pair.s2.text(),
            pair.predicted.expect("just set")
        );
    }
    Ok(())
}

pub fn run_eval(args: &EvalArgs, threads: usize) -> Result<()> {
    eprintln!(
        "config eval dataset={} model={} index={} lambda_inf={} scale={} threads={}",
        show(&args.dataset),
        show(&args.model),
        show(&args.index),
        args.lambda_inf,
        args.scale,
        threads
    );
    let setup = load_scoring_setup(&args.model, &args.index, &args.dataset, args.scale)?;
    let cfg = InferenceConfig::new(args.lambda_inf)?;
    let rho = evaluate(&setup.pairs, |p| {
        pair_similarity(&setup.index, &setup.encoder, &p.s1, &p.s2, &cfg)
    })?;
    println!("metric,value");
    println!("pairs,{}", setup.pairs.len());
    println!("spearman,{rho}");
    Ok(())
}

fn parse_edges(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad edge value {tok:?}")))
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn run_analyze_buckets(args: &BucketsArgs, threads: usize) -> Result<()> {
    eprintln!(
        "config analyze-buckets dataset={} model={} index={} lambda_inf={} scale={} edges={} threads={}",
        show(&args.dataset),
        show(&args.model),
        show(&args.index),
        args.lambda_inf,
        args.scale,
        args.edges,
        threads
    );
    let setup = load_scoring_setup(&args.model, &args.index, &args.dataset, args.scale)?;
    let cfg = InferenceConfig::new(args.lambda_inf)?;
    let edges = parse_edges(&args.edges)?;
    let buckets = bucket_evaluate(
        &setup.pairs,
        |p| pair_similarity(&setup.index, &setup.encoder, &p.s1, &p.s2, &cfg),
        &edges,
    )?;
    println!("bucket_lo,bucket_hi,count,spearman");
    for b in buckets {
        println!("{},{},{},{}", b.lo, b.hi, b.count, fmt_opt(b.spearman));
    }
    Ok(())
}

pub fn run_analyze_overlap(args: &OverlapArgs, threads: usize) -> Result<()> {
    eprintln!(
        "config analyze-overlap dataset={} model={} index={} k={} group_edges={} lambda_inf={} scale={} threads={}",
        show(&args.dataset),
        show(&args.model),
        show(&args.index),
        args.k,
        args.group_edges,
        args.lambda_inf,
        args.scale,
        threads
    );
    let setup = load_scoring_setup(&args.model, &args.index, &args.dataset, args.scale)?;
    let cfg = InferenceConfig::new(args.lambda_inf)?;
    let edges = parse_edges(&args.group_edges)?;
    let groups = overlap_analysis(
        &setup.pairs,
        &setup.index,
        &setup.encoder,
        args.k,
        &edges,
        |p| pair_similarity(&setup.index, &setup.encoder, &p.s1, &p.s2, &cfg),
    )?;
    println!("group_lo,group_hi,count,mean_overlap,spearman");
    for g in groups {
        println!(
            "{},{},{},{},{}",
            g.lo,
            g.hi,
            g.count,
            fmt_opt(g.mean_overlap),
            fmt_opt(g.spearman)
        );
    }
    Ok(())
}

pub fn run_analyze_uniformity(args: &UniformityArgs, threads: usize) -> Result<()> {
    eprintln!(
        "config analyze-uniformity dataset={} model={} index={} scale={} positive_threshold={} threads={}",
        show(&args.dataset),
        show(&args.model),
        show(&args.index),
        args.scale,
        args.positive_threshold,
        threads
    );
    let setup = load_scoring_setup(&args.model, &args.index, &args.dataset, args.scale)?;
    let mut base_vecs: Vec<DenseVector> = Vec::new();
    let mut embeddings: Vec<Embedding> = Vec::new();
    for pair in &setup.pairs {
        for s in [&pair.s1, &pair.s2] {
            let e = setup.encoder.encode_sentence(s)?;
            base_vecs.push(e.vector().clone());
            embeddings.push(e);
        }
    }
    let ranks: Vec<RankVector> = rank_vectors(&setup.index, &embeddings)?;
    let rank_vecs: Vec<DenseVector> = ranks
        .iter()
        .map(|z| DenseVector::new(z.as_slice().to_vec()))
        .collect::<Result<_>>()?;
    let positive_indexes: Vec<usize> = setup
        .pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| p.gold() >= args.positive_threshold)
        .map(|(i, _)| i)
        .collect();
    let positives = |vecs: &[DenseVector]| -> Vec<(DenseVector, DenseVector)> {
        positive_indexes
            .iter()
            .map(|&i| (vecs[2 * i].clone(), vecs[2 * i + 1].clone()))
            .collect()
    };
    println!("set,uniformity,alignment");
    println!(
        "base,{},{}",
        uniformity(&base_vecs)?,
        alignment(&positives(&base_vecs))?
    );
    println!(
        "rank,{},{}",
        uniformity(&rank_vecs)?,
        alignment(&positives(&rank_vecs))?
    );
    Ok(())
}

pub fn run_bench(args: &BenchArgs, threads: usize) -> Result<()> {
    eprintln!(
        "config bench index={} batch_size={} seed={} threads={}",
        show(&args.index),
        args.batch_size,
        args.seed,
        threads
    );
    let index = load_index(&args.index)?;
    if args.batch_size == 0 || args.batch_size > index.len() {
        return Err(Error::KOutOfRange {
            k: args.batch_size,
            n: index.len(),
        });
    }
    // deterministic batch: stride across the corpus from the seed
    let n = index.len();
    let queries: Vec<Embedding> = (0..args.batch_size)
        .map(|i| index.row_embedding(((args.seed as usize).wrapping_add(i * 97)) % n))
        .collect();

    let t0 = Instant::now();
    let ranks = rank_vectors(&index, &queries)?;
    let rank_time = t0.elapsed();

    let t1 = Instant::now();
    let b = ranks.len();
    let mut sims = vec![0.0; b * b];
    for i in 0..b {
        for j in i..b {
            let s = rankvec_core::rank::rank_similarity(&ranks[i], &ranks[j])?;
            sims[i * b + j] = s;
            sims[j * b + i] = s;
        }
    }
    let matrix_time = t1.elapsed();
    // keep the matrix observable so the timing loop cannot be optimized out
    let checksum: f64 = sims.iter().sum();

    println!("stage,batch,corpus,dim,micros");
    println!(
        "rank_vectors,{},{},{},{}",
        b,
        n,
        index.dim(),
        rank_time.as_micros()
    );
    println!(
        "similarity_matrix,{},{},{},{}",
        b,
        n,
        index.dim(),
        matrix_time.as_micros()
    );
    eprintln!("checksum {checksum}");
    Ok(())
}

pub fn run_gen_toy(args: &GenToyArgs, threads: usize) -> Result<()> {
    eprintln!(
        "config gen-toy seed={} clusters={} per_cluster={} vocab={} pairs={} sentence_len={} \
         filler_vocab={} fillers_per_sentence={} out_corpus={} out_pairs={} threads={}",
        args.seed,
        args.clusters,
        args.per_cluster,
        args.vocab,
        args.pairs,
        args.sentence_len,
        args.filler_vocab,
        args.fillers_per_sentence,
        show(&args.out_corpus),
        show(&args.out_pairs),
        threads
    );
    let config = ToyConfig {
        seed: args.seed,
        clusters: args.clusters,
        per_cluster: args.per_cluster,
        vocab: args.vocab,
        pairs: args.pairs,
        sentence_len: args.sentence_len,
        filler_vocab: args.filler_vocab,
        fillers_per_sentence: args.fillers_per_sentence,
    };
    let data = generate(&config)?;
    write_files(&data, &args.out_corpus, &args.out_pairs)?;
    eprintln!(
        "wrote {} corpus lines -> {} and {} pairs -> {}",
        data.corpus_lines.len(),
        show(&args.out_corpus),
        data.pairs.len(),
        show(&args.out_pairs)
    );
    Ok(())
}
