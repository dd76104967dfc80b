//! Deterministic synthetic data: a clustered corpus plus a scored pair set,
//! standing in for a real corpus and an STS-style benchmark at desk scale.
//!
//! Sentences are built from cluster-specific pseudo-word pools with
//! controlled lexical overlap: consecutive cluster pairs (0,1), (2,3), ...
//! share a small bridge vocabulary, and every sentence mixes in a few words
//! from a global filler pool. Pair gold scores follow the cluster relation -
//! same cluster high, bridged clusters medium, unrelated clusters low - with
//! per-pair jitter, on a 0-5 scale.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Native gold scale of generated pair files.
pub const TOY_GOLD_SCALE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub seed: u64,
    pub clusters: usize,
    pub per_cluster: usize,
    /// Core vocabulary size per cluster.
    pub vocab: usize,
    /// Number of scored pairs to generate.
    pub pairs: usize,
    /// Words per sentence (including fillers).
    pub sentence_len: usize,
    /// Size of the global filler pool.
    pub filler_vocab: usize,
    /// Filler words mixed into each sentence.
    pub fillers_per_sentence: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            clusters: 6,
            per_cluster: 200,
            vocab: 25,
            pairs: 300,
            sentence_len: 12,
            filler_vocab: 30,
            fillers_per_sentence: 2,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clusters < 2 {
            return Err(Error::InvalidConfig(format!(
                "clusters must be at least 2, got {}",
                self.clusters
            )));
        }
        if self.per_cluster < 2 {
            return Err(Error::InvalidConfig(format!(
                "per_cluster must be at least 2, got {}",
                self.per_cluster
            )));
        }
        if self.vocab < 4 {
            return Err(Error::InvalidConfig("vocab must be at least 4".into()));
        }
        if self.pairs < 2 {
            return Err(Error::InvalidConfig("pairs must be at least 2".into()));
        }
        if self.sentence_len <= self.fillers_per_sentence {
            return Err(Error::InvalidConfig(
                "sentence_len must exceed fillers_per_sentence".into(),
            ));
        }
        Ok(())
    }
}

/// Generated corpus lines (cluster-contiguous: line i belongs to cluster
/// i / per_cluster) and scored pairs on the 0-5 scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyData {
    pub corpus_lines: Vec<String>,
    pub pairs: Vec<ToyPair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyPair {
    pub s1: String,
    pub s2: String,
    pub gold: f64,
    pub relation: PairRelation,
}

/// The cluster relation a pair was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairRelation {
    SameCluster,
    BridgedClusters,
    UnrelatedClusters,
}

const CONSONANTS: &[char] = &[
    'b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z',
];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];

fn draw_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut word = String::with_capacity(syllables * 2);
    for _ in 0..syllables {
        word.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())]);
        word.push(VOWELS[rng.gen_range(0..VOWELS.len())]);
    }
    word
}

fn draw_unique_words(rng: &mut ChaCha8Rng, count: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut words = Vec::with_capacity(count);
    while words.len() < count {
        let w = draw_word(rng);
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

struct Pools {
    /// Per-cluster pools including bridge words.
    cluster: Vec<Vec<String>>,
    filler: Vec<String>,
    /// bridged[a] == Some(b) when clusters a and b share a bridge vocabulary.
    bridged: Vec<Option<usize>>,
}

fn build_pools(rng: &mut ChaCha8Rng, config: &ToyConfig) -> Pools {
    let bridge_size = (config.vocab / 5).max(2);
    let n_bridges = config.clusters / 2;
    let total = config.filler_vocab + config.clusters * config.vocab + n_bridges * bridge_size;
    let words = draw_unique_words(rng, total);
    let mut it = words.into_iter();
    let filler: Vec<String> = (&mut it).take(config.filler_vocab).collect();
    let mut cluster: Vec<Vec<String>> = (0..config.clusters)
        .map(|_| (&mut it).take(config.vocab).collect())
        .collect();
    let mut bridged = vec![None; config.clusters];
    for b in 0..n_bridges {
        let (a, z) = (2 * b, 2 * b + 1);
        let bridge: Vec<String> = (&mut it).take(bridge_size).collect();
        cluster[a].extend(bridge.iter().cloned());
        cluster[z].extend(bridge);
        bridged[a] = Some(z);
        bridged[z] = Some(a);
    }
    Pools {
        cluster,
        filler,
        bridged,
    }
}

fn make_sentence(
    rng: &mut ChaCha8Rng,
    pools: &Pools,
    cluster: usize,
    config: &ToyConfig,
) -> String {
    let content_words = config.sentence_len - config.fillers_per_sentence;
    let pool = &pools.cluster[cluster];
    let mut words: Vec<&str> = (0..content_words)
        .map(|_| pool[rng.gen_range(0..pool.len())].as_str())
        .collect();
    for _ in 0..config.fillers_per_sentence {
        words.push(pools.filler[rng.gen_range(0..pools.filler.len())].as_str());
    }
    words.shuffle(rng);
    words.join(" ")
}

/// Deterministic given the config: same seed, same files.
pub fn generate(config: &ToyConfig) -> Result<ToyData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pools = build_pools(&mut rng, config);

    let mut corpus_lines = Vec::with_capacity(config.clusters * config.per_cluster);
    for cluster in 0..config.clusters {
        for _ in 0..config.per_cluster {
            corpus_lines.push(make_sentence(&mut rng, &pools, cluster, config));
        }
    }

    let unrelated_available = has_unrelated_pair(&pools.bridged);
    let mut pairs = Vec::with_capacity(config.pairs);
    for i in 0..config.pairs {
        let relation = match i % 3 {
            0 => PairRelation::SameCluster,
            1 => PairRelation::BridgedClusters,
            _ if unrelated_available => PairRelation::UnrelatedClusters,
            _ => PairRelation::BridgedClusters,
        };
        let (a, b) = pick_cluster_pair(&mut rng, &pools.bridged, config.clusters, relation);
        let s1 = make_sentence(&mut rng, &pools, a, config);
        let s2 = make_sentence(&mut rng, &pools, b, config);
        let (base, span) = match relation {
            PairRelation::SameCluster => (3.8, 1.2),
            PairRelation::BridgedClusters => (2.0, 1.2),
            PairRelation::UnrelatedClusters => (0.2, 1.2),
        };
        let gold = base + rng.gen_range(0.0..span);
        pairs.push(ToyPair {
            s1,
            s2,
            gold,
            relation,
        });
    }
    Ok(ToyData {
        corpus_lines,
        pairs,
    })
}

fn has_unrelated_pair(bridged: &[Option<usize>]) -> bool {
    let n = bridged.len();
    (0..n).any(|a| (0..n).any(|b| a != b && bridged[a] != Some(b)))
}

fn pick_cluster_pair(
    rng: &mut ChaCha8Rng,
    bridged: &[Option<usize>],
    clusters: usize,
    relation: PairRelation,
) -> (usize, usize) {
    match relation {
        PairRelation::SameCluster => {
            let c = rng.gen_range(0..clusters);
            (c, c)
        }
        PairRelation::BridgedClusters => {
            // bridges exist between (0,1), (2,3), ...; fall back to any
            // distinct pair if the odd last cluster is drawn
            loop {
                let a = rng.gen_range(0..clusters);
                if let Some(b) = bridged[a] {
                    return (a, b);
                }
            }
        }
        PairRelation::UnrelatedClusters => loop {
            let a = rng.gen_range(0..clusters);
            let b = rng.gen_range(0..clusters);
            if a != b && bridged[a] != Some(b) {
                return (a, b);
            }
        },
    }
}

/// Write the corpus (one sentence per line) and the pair TSV
/// (sentence1 TAB sentence2 TAB gold, gold on the 0-5 scale).
pub fn write_files(data: &ToyData, corpus_path: &Path, pairs_path: &Path) -> Result<()> {
    let mut corpus = String::new();
    for line in &data.corpus_lines {
        corpus.push_str(line);
        corpus.push('\n');
    }
    std::fs::write(corpus_path, corpus)?;
    let mut tsv = String::new();
    for p in &data.pairs {
        tsv.push_str(&format!("{}\t{}\t{}\n", p.s1, p.s2, p.gold));
    }
    std::fs::write(pairs_path, tsv)?;
    Ok(())
}
