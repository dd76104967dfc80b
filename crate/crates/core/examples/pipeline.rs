//! The whole pipeline against synthetic data: build a base-encoder index,
//! score pairs with rank vectors alone, train the distilled encoder, and
//! compare the weighted blend against the plain base-encoder cosine.
//!
//! Run: `cargo run --release -p rankvec-core --example pipeline`

use rankvec_core::corpus::build_index;
use rankvec_core::encoder::{Encoder, EncoderParams, HashNgramEncoder};
use rankvec_core::evaluation::{evaluate, pair_similarity, InferenceConfig};
use rankvec_core::numerics::cosine;
use rankvec_core::toydata::{generate, write_files, ToyConfig, TOY_GOLD_SCALE};
use rankvec_core::training::{train, TrainConfig};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("corpus.txt");
    let pairs_path = dir.path().join("pairs.tsv");
    let toy = generate(&ToyConfig::default()).unwrap();
    write_files(&toy, &corpus_path, &pairs_path).unwrap();
    let pairs = rankvec_core::evaluation::load_pairs_tsv(&pairs_path, TOY_GOLD_SCALE).unwrap();
    println!(
        "{} corpus sentences, {} scored pairs",
        toy.corpus_lines.len(),
        pairs.len()
    );

    // frozen base encoder and its index
    let e1 = HashNgramEncoder::new(EncoderParams::init(1, 64, 1024).unwrap());
    let (index1, _) = build_index(&corpus_path, &e1).unwrap();

    let base = evaluate(&pairs, |p| {
        let a = e1.encode_sentence(&p.s1)?;
        let b = e1.encode_sentence(&p.s2)?;
        cosine(a.vector(), b.vector())
    })
    .unwrap();
    println!("base encoder cosine:        Spearman = {base:.4}");

    // rank vectors straight off the base encoder, no retraining
    let rank_only = evaluate(&pairs, |p| {
        pair_similarity(
            &index1,
            &e1,
            &p.s1,
            &p.s2,
            &InferenceConfig::new(1.0).unwrap(),
        )
    })
    .unwrap();
    println!("rank vectors (no retrain):  Spearman = {rank_only:.4}");

    // distill rank similarities into a fresh encoder, then blend at inference
    let (sentences, _, _) = rankvec_core::corpus::read_corpus_sentences(&corpus_path).unwrap();
    let config = TrainConfig {
        temperature: 0.5,
        epochs: 4,
        seed: 1,
        ..TrainConfig::default()
    };
    let (params, _) = train(&sentences, &index1, &e1, &config).unwrap();
    let e2 = HashNgramEncoder::new(params);
    let (index2, _) = build_index(&corpus_path, &e2).unwrap();
    let blended = evaluate(&pairs, |p| {
        pair_similarity(&index2, &e2, &p.s1, &p.s2, &InferenceConfig::default())
    })
    .unwrap();
    println!("retrained + weighted blend: Spearman = {blended:.4}");
}
