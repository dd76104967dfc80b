//! Scoring and analysis: the weighted rank/cosine blend for inference,
//! Spearman evaluation against gold scores, similarity-bucket breakdowns,
//! neighbor-overlap analysis, and uniformity/alignment of representations.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::corpus::{neighbor_overlap, CorpusIndex};
use crate::encoder::{Encoder, Sentence};
use crate::error::{Error, Result};
use crate::numerics::{cosine, DenseVector};
use crate::rank::{rank_similarity, rank_vector, spearman_oracle};

/// Default weight on the rank-vector term of the inference blend.
pub const DEFAULT_LAMBDA_INF: f64 = 0.1;
/// Default gold-score scale of pair datasets (0-5, STS style).
pub const DEFAULT_GOLD_SCALE: f64 = 5.0;

/// A sentence pair with a human (or synthetic) similarity judgment, kept on
/// its native scale plus a normalized 0-1 copy.
#[derive(Debug, Clone)]
pub struct ScoredPair {
    pub s1: Sentence,
    pub s2: Sentence,
    gold_raw: f64,
    gold: f64,
    pub predicted: Option<f64>,
}

impl ScoredPair {
    pub fn new(s1: Sentence, s2: Sentence, gold_raw: f64, scale: f64) -> Result<Self> {
        if !(gold_raw.is_finite() && scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bad gold score {gold_raw} / scale {scale}"
            )));
        }
        let gold = gold_raw / scale;
        if !(0.0..=1.0).contains(&gold) {
            return Err(Error::InvalidConfig(format!(
                "normalized gold {gold} outside [0, 1]"
            )));
        }
        Ok(Self {
            s1,
            s2,
            gold_raw,
            gold,
            predicted: None,
        })
    }

    pub fn gold_raw(&self) -> f64 {
        self.gold_raw
    }

    /// Gold score normalized to [0, 1].
    pub fn gold(&self) -> f64 {
        self.gold
    }

    pub fn with_predicted(mut self, predicted: f64) -> Self {
        self.predicted = Some(predicted);
        self
    }
}

/// Inference-stage settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceConfig {
    pub lambda_inf: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            lambda_inf: DEFAULT_LAMBDA_INF,
        }
    }
}

impl InferenceConfig {
    pub fn new(lambda_inf: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda_inf) {
            return Err(Error::InvalidConfig(format!(
                "lambda_inf must be in [0, 1], got {lambda_inf}"
            )));
        }
        Ok(Self { lambda_inf })
    }
}

/// The inference blend: lambda * rank similarity + (1 - lambda) * cosine.
/// At lambda 0 or 1 this reproduces the respective component exactly.
pub fn weighted_score(rank_sim: f64, cos: f64, config: &InferenceConfig) -> f64 {
    config.lambda_inf * rank_sim + (1.0 - config.lambda_inf) * cos
}

/// Score a sentence pair against an index built with the same encoder:
/// blend the inner product of the pair's rank vectors with the encoder
/// cosine. The index fingerprint must match the encoder.
pub fn pair_similarity(
    index: &CorpusIndex,
    encoder: &dyn Encoder,
    s1: &Sentence,
    s2: &Sentence,
    config: &InferenceConfig,
) -> Result<f64> {
    index.verify_fingerprint(encoder.fingerprint())?;
    let e1 = encoder.encode_sentence(s1)?;
    let e2 = encoder.encode_sentence(s2)?;
    let z1 = rank_vector(index, &e1)?;
    let z2 = rank_vector(index, &e2)?;
    let rank_sim = rank_similarity(&z1, &z2)?;
    let cos = cosine(e1.vector(), e2.vector())?;
    Ok(weighted_score(rank_sim, cos, config))
}

/// Spearman correlation between a scorer's predictions and the gold scores.
pub fn evaluate<F>(pairs: &[ScoredPair], scorer: F) -> Result<f64>
where
    F: Fn(&ScoredPair) -> Result<f64>,
{
    if pairs.len() < 2 {
        return Err(Error::TooFewElements {
            min: 2,
            got: pairs.len(),
        });
    }
    let predicted: Vec<f64> = pairs.iter().map(&scorer).collect::<Result<_>>()?;
    let gold: Vec<f64> = pairs.iter().map(|p| p.gold()).collect();
    spearman_oracle(&predicted, &gold)
}

/// A bucket of the gold-score range with its per-bucket correlation.
/// `spearman` is None when the bucket is deficient (fewer than two pairs, or
/// constant gold or predictions).
#[derive(Debug, Clone, PartialEq)]
pub struct BucketResult {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub spearman: Option<f64>,
}

fn validate_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::InvalidConfig(
            "need at least two bucket edges".into(),
        ));
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) || edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "bucket edges must be finite and strictly increasing, got {edges:?}"
        )));
    }
    Ok(())
}

/// Index of the bucket a value falls into. Boundary values go to the lower
/// bucket, except the very first edge which opens the first bucket. Values
/// outside the edge range clamp to the nearest bucket.
fn bucket_of(value: f64, edges: &[f64]) -> usize {
    let v = value.clamp(edges[0], edges[edges.len() - 1]);
    if v == edges[0] {
        return 0;
    }
    for (i, w) in edges.windows(2).enumerate() {
        if v > w[0] && v <= w[1] {
            return i;
        }
    }
    edges.len() - 2
}

/// Split pairs by normalized gold score and correlate within each bucket.
/// A deficient bucket is reported as undefined rather than failing the run.
pub fn bucket_evaluate<F>(
    pairs: &[ScoredPair],
    scorer: F,
    edges: &[f64],
) -> Result<Vec<BucketResult>>
where
    F: Fn(&ScoredPair) -> Result<f64>,
{
    validate_edges(edges)?;
    let n_buckets = edges.len() - 1;
    let mut grouped: Vec<Vec<&ScoredPair>> = vec![Vec::new(); n_buckets];
    for pair in pairs {
        grouped[bucket_of(pair.gold(), edges)].push(pair);
    }
    let mut out = Vec::with_capacity(n_buckets);
    for (i, bucket) in grouped.iter().enumerate() {
        let spearman = correlate_group(bucket, &scorer)?;
        out.push(BucketResult {
            lo: edges[i],
            hi: edges[i + 1],
            count: bucket.len(),
            spearman,
        });
    }
    Ok(out)
}

fn correlate_group<F>(group: &[&ScoredPair], scorer: &F) -> Result<Option<f64>>
where
    F: Fn(&ScoredPair) -> Result<f64>,
{
    if group.len() < 2 {
        return Ok(None);
    }
    let predicted: Vec<f64> = group.iter().map(|p| scorer(p)).collect::<Result<_>>()?;
    let gold: Vec<f64> = group.iter().map(|p| p.gold()).collect();
    match spearman_oracle(&predicted, &gold) {
        Ok(rho) => Ok(Some(rho)),
        Err(Error::ZeroVariance { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Per-group results of the overlapping-neighbor analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapGroup {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_overlap: Option<f64>,
    pub spearman: Option<f64>,
}

/// Group pairs by base-encoder cosine, then report each group's mean top-k
/// neighbor overlap and the scorer's within-group Spearman correlation.
pub fn overlap_analysis<F>(
    pairs: &[ScoredPair],
    index: &CorpusIndex,
    encoder: &dyn Encoder,
    k: usize,
    group_edges: &[f64],
    scorer: F,
) -> Result<Vec<OverlapGroup>>
where
    F: Fn(&ScoredPair) -> Result<f64>,
{
    validate_edges(group_edges)?;
    index.verify_fingerprint(encoder.fingerprint())?;
    let n_groups = group_edges.len() - 1;
    let mut grouped: Vec<Vec<(&ScoredPair, usize)>> = vec![Vec::new(); n_groups];
    for pair in pairs {
        let e1 = encoder.encode_sentence(&pair.s1)?;
        let e2 = encoder.encode_sentence(&pair.s2)?;
        let cos = cosine(e1.vector(), e2.vector())?;
        let overlap = neighbor_overlap(index, &e1, &e2, k)?;
        grouped[bucket_of(cos, group_edges)].push((pair, overlap));
    }
    let mut out = Vec::with_capacity(n_groups);
    for (i, group) in grouped.iter().enumerate() {
        let mean_overlap = if group.is_empty() {
            None
        } else {
            Some(group.iter().map(|(_, o)| *o as f64).sum::<f64>() / group.len() as f64)
        };
        let members: Vec<&ScoredPair> = group.iter().map(|(p, _)| *p).collect();
        let spearman = correlate_group(&members, &scorer)?;
        out.push(OverlapGroup {
            lo: group_edges[i],
            hi: group_edges[i + 1],
            count: group.len(),
            mean_overlap,
            spearman,
        });
    }
    Ok(out)
}

fn unit_normalize(v: &DenseVector) -> Result<Vec<f64>> {
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(v.as_slice().iter().map(|x| x / norm).collect())
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Uniformity: log of the mean, over distinct vector pairs, of
/// exp(-2 ||x - y||^2) on the unit sphere. Lower is better (more spread).
pub fn uniformity(vectors: &[DenseVector]) -> Result<f64> {
    if vectors.len() < 2 {
        return Err(Error::TooFewElements {
            min: 2,
            got: vectors.len(),
        });
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != vectors[0].len()) {
        return Err(Error::DimensionMismatch {
            left: vectors[0].len(),
            right: v.len(),
        });
    }
    let unit: Vec<Vec<f64>> = vectors.iter().map(unit_normalize).collect::<Result<_>>()?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..unit.len() {
        for j in (i + 1)..unit.len() {
            sum += (-2.0 * squared_distance(&unit[i], &unit[j])).exp();
            count += 1;
        }
    }
    Ok((sum / count as f64).ln())
}

/// Alignment: mean squared distance between positive-pair vectors on the
/// unit sphere. Lower is better (positives closer).
pub fn alignment(positive_pairs: &[(DenseVector, DenseVector)]) -> Result<f64> {
    if positive_pairs.is_empty() {
        return Err(Error::TooFewElements { min: 1, got: 0 });
    }
    let mut sum = 0.0;
    for (a, b) in positive_pairs {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        sum += squared_distance(&unit_normalize(a)?, &unit_normalize(b)?);
    }
    Ok(sum / positive_pairs.len() as f64)
}

/// Both representation-quality metrics at once.
pub fn uniformity_alignment(
    vectors: &[DenseVector],
    positive_pairs: &[(DenseVector, DenseVector)],
) -> Result<(f64, f64)> {
    Ok((uniformity(vectors)?, alignment(positive_pairs)?))
}

/// Load a pair dataset: TSV with columns sentence1, sentence2, gold score.
/// Gold is normalized by `scale`. Sentence ids are assigned per line.
pub fn load_pairs_tsv(path: &Path, scale: f64) -> Result<Vec<ScoredPair>> {
    let display = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(Error::LineError {
                path: display.clone(),
                line: lineno,
                reason: format!("expected 3 tab-separated columns, got {}", fields.len()),
            });
        }
        let gold: f64 = fields[2].trim().parse().map_err(|_| Error::LineError {
            path: display.clone(),
            line: lineno,
            reason: format!("bad gold score {:?}", fields[2]),
        })?;
        let i = pairs.len() as u64;
        let s1 = Sentence::new(2 * i, fields[0]).map_err(|e| Error::LineError {
            path: display.clone(),
            line: lineno,
            reason: e.to_string(),
        })?;
        let s2 = Sentence::new(2 * i + 1, fields[1]).map_err(|e| Error::LineError {
            path: display.clone(),
            line: lineno,
            reason: e.to_string(),
        })?;
        let pair = ScoredPair::new(s1, s2, gold, scale).map_err(|e| Error::LineError {
            path: display.clone(),
            line: lineno,
            reason: e.to_string(),
        })?;
        pairs.push(pair);
    }
    if pairs.is_empty() {
        return Err(Error::LoadError {
            path: display,
            reason: "no pairs in dataset".into(),
        });
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_index;
    use crate::encoder::{EncoderParams, HashNgramEncoder};

    fn pair(id: u64, gold: f64) -> ScoredPair {
        ScoredPair::new(
            Sentence::new(2 * id, format!("left {id}")).unwrap(),
            Sentence::new(2 * id + 1, format!("right {id}")).unwrap(),
            gold,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn weighted_score_arithmetic() {
        let cfg = InferenceConfig::new(0.1).unwrap();
        assert!((weighted_score(0.8, 0.6, &cfg) - 0.62).abs() < 1e-15);
    }

    #[test]
    fn weighted_score_limits_exact() {
        let zero = InferenceConfig::new(0.0).unwrap();
        let one = InferenceConfig::new(1.0).unwrap();
        let rank_sim = 0.123456789f64;
        let cos = -0.987654321f64;
        assert_eq!(weighted_score(rank_sim, cos, &zero), cos);
        assert_eq!(weighted_score(rank_sim, cos, &one), rank_sim);
    }

    #[test]
    fn lambda_out_of_range_rejected() {
        assert!(InferenceConfig::new(1.5).is_err());
        assert!(InferenceConfig::new(-0.1).is_err());
    }

    #[test]
    fn evaluate_identity_and_negation() {
        let pairs: Vec<ScoredPair> = [0.1, 0.5, 0.9, 0.3]
            .iter()
            .enumerate()
            .map(|(i, g)| pair(i as u64, *g))
            .collect();
        assert!((evaluate(&pairs, |p| Ok(p.gold())).unwrap() - 1.0).abs() < 1e-12);
        assert!((evaluate(&pairs, |p| Ok(-p.gold())).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn evaluate_swap_two_of_four() {
        let pairs: Vec<ScoredPair> = [0.1, 0.3, 0.5, 0.9]
            .iter()
            .enumerate()
            .map(|(i, g)| pair(i as u64, *g))
            .collect();
        // predictions swap the middle two pairs: d^2 sum = 2 -> rho = 0.8
        let swapped = [0.1, 0.5, 0.3, 0.9];
        let rho = evaluate(&pairs, |p| {
            let i = (p.s1.id() / 2) as usize;
            Ok(swapped[i])
        })
        .unwrap();
        assert!((rho - 0.8).abs() < 1e-12);
    }

    #[test]
    fn evaluate_constant_gold_is_domain_error() {
        let pairs: Vec<ScoredPair> = (0..3).map(|i| pair(i, 0.5)).collect();
        let err = evaluate(&pairs, |p| Ok(p.gold() + p.s1.id() as f64)).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance { .. }));
    }

    #[test]
    fn evaluate_monotone_invariant_exactly() {
        let pairs: Vec<ScoredPair> = [0.2, 0.7, 0.4, 0.9, 0.1]
            .iter()
            .enumerate()
            .map(|(i, g)| pair(i as u64, *g))
            .collect();
        let base = evaluate(&pairs, |p| Ok(p.gold() * 0.5 - 0.1)).unwrap();
        let mapped = evaluate(&pairs, |p| Ok((p.gold() * 0.5 - 0.1).exp() * 7.0)).unwrap();
        assert_eq!(base, mapped);
    }

    #[test]
    fn buckets_boundaries() {
        let edges = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        assert_eq!(bucket_of(0.0, &edges), 0);
        assert_eq!(bucket_of(1.0 / 3.0, &edges), 0);
        assert_eq!(bucket_of(0.34, &edges), 1);
        assert_eq!(bucket_of(2.0 / 3.0, &edges), 1);
        assert_eq!(bucket_of(1.0, &edges), 2);
    }

    #[test]
    fn buckets_all_in_one() {
        let pairs: Vec<ScoredPair> = [0.7, 0.8, 0.9, 0.75]
            .iter()
            .enumerate()
            .map(|(i, g)| pair(i as u64, *g))
            .collect();
        let scorer = |p: &ScoredPair| Ok(p.gold() * 2.0);
        let edges = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        let buckets = bucket_evaluate(&pairs, scorer, &edges).unwrap();
        assert_eq!(buckets[0].count, 0);
        assert_eq!(buckets[0].spearman, None);
        assert_eq!(buckets[1].count, 0);
        assert_eq!(buckets[2].count, 4);
        let full = evaluate(&pairs, scorer).unwrap();
        assert_eq!(buckets[2].spearman, Some(full));
    }

    #[test]
    fn buckets_deficient_everywhere() {
        let pairs = vec![pair(0, 0.1), pair(1, 0.5), pair(2, 0.9)];
        let buckets =
            bucket_evaluate(&pairs, |p| Ok(p.gold()), &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]).unwrap();
        for b in &buckets {
            assert_eq!(b.count, 1);
            assert_eq!(b.spearman, None);
        }
    }

    #[test]
    fn buckets_match_filter_then_correlate_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let pairs: Vec<ScoredPair> = (0..30)
            .map(|i| {
                let bucket = i % 3;
                let gold = bucket as f64 / 3.0 + 0.01 + rng.gen_range(0.0..0.31);
                pair(i as u64, gold)
            })
            .collect();
        let preds: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..1.0)).collect();
        let scorer = |p: &ScoredPair| Ok(preds[(p.s1.id() / 2) as usize]);
        let edges = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        let buckets = bucket_evaluate(&pairs, scorer, &edges).unwrap();
        for (i, b) in buckets.iter().enumerate() {
            // independent composition: filter, then full evaluate
            let members: Vec<ScoredPair> = pairs
                .iter()
                .filter(|p| bucket_of(p.gold(), &edges) == i)
                .cloned()
                .collect();
            assert_eq!(b.count, members.len());
            let expect = evaluate(&members, scorer).ok();
            assert_eq!(b.spearman, expect);
        }
    }

    #[test]
    fn uniformity_examples() {
        let same = vec![
            DenseVector::new(vec![1.0, 0.0]).unwrap(),
            DenseVector::new(vec![1.0, 0.0]).unwrap(),
        ];
        assert_eq!(uniformity(&same).unwrap(), 0.0);
        let antipodal = vec![
            DenseVector::new(vec![1.0, 0.0]).unwrap(),
            DenseVector::new(vec![-1.0, 0.0]).unwrap(),
        ];
        assert!((uniformity(&antipodal).unwrap() + 8.0).abs() < 1e-12);
    }

    #[test]
    fn alignment_identical_is_zero() {
        let pairs = vec![(
            DenseVector::new(vec![0.0, 2.0]).unwrap(),
            DenseVector::new(vec![0.0, 5.0]).unwrap(),
        )];
        assert_eq!(alignment(&pairs).unwrap(), 0.0);
    }

    #[test]
    fn uniformity_improves_when_spread() {
        let tight = vec![
            DenseVector::new(vec![1.0, 0.0, 0.0]).unwrap(),
            DenseVector::new(vec![0.99, 0.1, 0.0]).unwrap(),
            DenseVector::new(vec![0.99, 0.0, 0.1]).unwrap(),
        ];
        let spread = vec![
            DenseVector::new(vec![1.0, 0.0, 0.0]).unwrap(),
            DenseVector::new(vec![0.0, 1.0, 0.0]).unwrap(),
            DenseVector::new(vec![0.0, 0.0, 1.0]).unwrap(),
        ];
        assert!(uniformity(&spread).unwrap() < uniformity(&tight).unwrap());
    }

    #[test]
    fn uniformity_empty_inputs_rejected() {
        assert!(uniformity(&[]).is_err());
        assert!(alignment(&[]).is_err());
    }

    fn small_corpus() -> (tempfile::TempDir, CorpusIndex, HashNgramEncoder) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        let lines: Vec<String> = (0..12)
            .map(|i| {
                let topic = match i % 3 {
                    0 => "red crimson scarlet",
                    1 => "blue azure navy",
                    _ => "green olive lime",
                };
                format!("{topic} sample sentence {i}")
            })
            .collect();
        std::fs::write(&path, lines.join("\n")).unwrap();
        let encoder = HashNgramEncoder::new(EncoderParams::init(2, 16, 512).unwrap());
        let (index, _) = build_index(&path, &encoder).unwrap();
        (dir, index, encoder)
    }

    #[test]
    fn pair_similarity_symmetric() {
        let (_d, index, encoder) = small_corpus();
        let s1 = Sentence::new(100, "red crimson thing").unwrap();
        let s2 = Sentence::new(101, "blue azure thing").unwrap();
        let cfg = InferenceConfig::default();
        let a = pair_similarity(&index, &encoder, &s1, &s2, &cfg).unwrap();
        let b = pair_similarity(&index, &encoder, &s2, &s1, &cfg).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn pair_similarity_limits_match_components() {
        let (_d, index, encoder) = small_corpus();
        let s1 = Sentence::new(100, "red crimson thing").unwrap();
        let s2 = Sentence::new(101, "blue azure thing").unwrap();
        use crate::encoder::Encoder as _;
        let e1 = encoder.encode_sentence(&s1).unwrap();
        let e2 = encoder.encode_sentence(&s2).unwrap();
        let pure_cos = cosine(e1.vector(), e2.vector()).unwrap();
        let z1 = rank_vector(&index, &e1).unwrap();
        let z2 = rank_vector(&index, &e2).unwrap();
        let pure_rank = rank_similarity(&z1, &z2).unwrap();

        let at_zero = pair_similarity(
            &index,
            &encoder,
            &s1,
            &s2,
            &InferenceConfig::new(0.0).unwrap(),
        )
        .unwrap();
        let at_one = pair_similarity(
            &index,
            &encoder,
            &s1,
            &s2,
            &InferenceConfig::new(1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(at_zero, pure_cos);
        assert_eq!(at_one, pure_rank);
    }

    #[test]
    fn pair_similarity_checks_fingerprint() {
        let (_d, index, _) = small_corpus();
        let other = HashNgramEncoder::new(EncoderParams::init(77, 16, 512).unwrap());
        let s1 = Sentence::new(0, "anything").unwrap();
        let err =
            pair_similarity(&index, &other, &s1, &s1, &InferenceConfig::default()).unwrap_err();
        assert!(matches!(err, Error::FingerprintMismatch { .. }));
    }

    #[test]
    fn overlap_analysis_identical_pair_hits_k() {
        let (_d, index, encoder) = small_corpus();
        let text = index.sentence(0).text().to_string();
        let pairs = vec![ScoredPair::new(
            Sentence::new(0, text.clone()).unwrap(),
            Sentence::new(1, text).unwrap(),
            0.9,
            1.0,
        )
        .unwrap()];
        let k = 5;
        let groups = overlap_analysis(&pairs, &index, &encoder, k, &[-1.0, 0.0, 1.0], |p| {
            Ok(p.gold())
        })
        .unwrap();
        let populated: Vec<&OverlapGroup> = groups.iter().filter(|g| g.count > 0).collect();
        assert_eq!(populated.len(), 1);
        assert_eq!(populated[0].mean_overlap, Some(k as f64));
    }

    #[test]
    fn overlap_analysis_orthogonal_clusters_is_zero() {
        use crate::encoder::{Embedding, PrecomputedEncoder};
        use std::collections::BTreeMap;
        let rows = [
            (0u64, vec![1.0, 0.0, 0.0, 0.0]),
            (1, vec![0.9, 0.1, 0.0, 0.0]),
            (2, vec![0.0, 0.0, 1.0, 0.0]),
            (3, vec![0.0, 0.0, 0.9, 0.1]),
            // query pair, one sentence per cluster
            (10, vec![1.0, 0.05, 0.0, 0.0]),
            (11, vec![0.0, 0.0, 1.0, 0.05]),
        ];
        let table: BTreeMap<u64, Embedding> = rows
            .iter()
            .map(|(id, v)| (*id, Embedding::from_values(v.clone()).unwrap()))
            .collect();
        let encoder = PrecomputedEncoder::new(table).unwrap();
        use crate::encoder::Encoder as _;
        let sentences: Vec<Sentence> = (0..4)
            .map(|i| Sentence::new(i, format!("s{i}")).unwrap())
            .collect();
        let corpus_rows: Vec<Embedding> = sentences
            .iter()
            .map(|s| encoder.encode_sentence(s).unwrap())
            .collect();
        let index = CorpusIndex::new(sentences, corpus_rows, encoder.fingerprint()).unwrap();
        let pairs = vec![ScoredPair::new(
            Sentence::new(10, "cluster a query").unwrap(),
            Sentence::new(11, "cluster b query").unwrap(),
            0.1,
            1.0,
        )
        .unwrap()];
        let groups = overlap_analysis(&pairs, &index, &encoder, 2, &[-1.0, 0.0, 1.0], |p| {
            Ok(p.gold())
        })
        .unwrap();
        let populated: Vec<&OverlapGroup> = groups.iter().filter(|g| g.count > 0).collect();
        assert_eq!(populated.len(), 1);
        assert_eq!(populated[0].mean_overlap, Some(0.0));
    }

    #[test]
    fn tsv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.tsv");
        std::fs::write(&path, "a cat\tthe cat\t4.5\nfast car\tslow bus\t1.0\n").unwrap();
        let pairs = load_pairs_tsv(&path, 5.0).unwrap();
        assert_eq!(pairs.len(), 2);
        assert!((pairs[0].gold() - 0.9).abs() < 1e-12);
        assert_eq!(pairs[0].gold_raw(), 4.5);
    }

    #[test]
    fn tsv_rejects_out_of_scale_gold() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.tsv");
        std::fs::write(&path, "a\tb\t7.5\n").unwrap();
        assert!(matches!(
            load_pairs_tsv(&path, 5.0).unwrap_err(),
            Error::LineError { line: 1, .. }
        ));
    }
}
