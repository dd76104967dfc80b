//! Rank vectors: similarity scores turned into normalized rank vectors whose
//! inner products equal Spearman's rank correlation.
//!
//! The pipeline is `compute_ranks` (descending, average ranks for ties) then
//! `normalize` (center, scale by sqrt(n) times the population std). After
//! normalization a rank vector sums to ~0 and has unit norm, and for two such
//! vectors the plain inner product is exactly the tie-corrected Spearman
//! correlation of the original score lists. `spearman_oracle` is a separate
//! implementation of that correlation (Pearson over ascending average ranks)
//! kept independent so the two routes can check each other.

use crate::corpus::CorpusIndex;
use crate::encoder::Embedding;
use crate::error::{Error, Result};
use crate::numerics::{mean_std_slice, DenseVector};

/// Raw ranks over a score list: rank 1 is the most similar, ties share the
/// arithmetic mean of the positions they span. The sum is always n(n+1)/2.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRanks {
    values: Vec<f64>,
}

impl RawRanks {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// A centered, unit-norm rank vector over a corpus of n sentences.
#[derive(Debug, Clone, PartialEq)]
pub struct RankVector {
    values: DenseVector,
    source_id: Option<u64>,
}

impl RankVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn source_id(&self) -> Option<u64> {
        self.source_id
    }

    pub fn with_source_id(mut self, id: u64) -> Self {
        self.source_id = Some(id);
        self
    }
}

/// Rank a score list in descending order (highest score gets rank 1), with
/// average ranks for ties. The result is independent of input permutation.
pub fn compute_ranks(scores: &[f64]) -> Result<RawRanks> {
    let n = scores.len();
    if n < 2 {
        return Err(Error::TooFewElements { min: 2, got: n });
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end (1-based) share their mean rank
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    Ok(RawRanks { values: ranks })
}

/// The normalization g: subtract the mean rank, divide by sqrt(n) times the
/// population standard deviation. Errors when all ranks are tied.
pub fn normalize(r: &RawRanks) -> Result<RankVector> {
    let n = r.values.len();
    if n < 2 {
        return Err(Error::TooFewElements { min: 2, got: n });
    }
    let (mean, std) = mean_std_slice(&r.values);
    if std == 0.0 {
        return Err(Error::DegenerateRanks);
    }
    let denom = (n as f64).sqrt() * std;
    let values: Vec<f64> = r.values.iter().map(|v| (v - mean) / denom).collect();
    Ok(RankVector {
        values: DenseVector::new(values)?,
        source_id: None,
    })
}

/// Rank an embedding against every corpus row by cosine, then normalize.
pub fn rank_vector(index: &CorpusIndex, embedding: &Embedding) -> Result<RankVector> {
    let scores = index.cosine_scores(embedding)?;
    normalize(&compute_ranks(&scores)?)
}

/// Rank a batch of embeddings against the same index, fanning out across
/// threads. Each output is computed independently in a fixed per-item order,
/// so results are identical at any thread count.
pub fn rank_vectors(index: &CorpusIndex, embeddings: &[Embedding]) -> Result<Vec<RankVector>> {
    use rayon::prelude::*;
    embeddings
        .par_iter()
        .map(|e| rank_vector(index, e))
        .collect()
}

/// Inner product of two rank vectors, clamped to [-1, 1]. For vectors built
/// by [`normalize`] this equals Spearman's rank correlation of the original
/// score lists.
pub fn rank_similarity(u: &RankVector, v: &RankVector) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let dot: f64 = u
        .as_slice()
        .iter()
        .zip(v.as_slice().iter())
        .map(|(a, b)| a * b)
        .sum();
    Ok(dot.clamp(-1.0, 1.0))
}

/// Spearman's rank correlation, implemented independently of the rank-vector
/// path: both inputs are average-ranked ascending, then Pearson-correlated
/// with 1/n-weighted deviations. Doubles as the STS evaluation metric.
pub fn spearman_oracle(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::TooFewElements {
            min: 2,
            got: a.len(),
        });
    }
    let ra = ascending_average_ranks(a)?;
    let rb = ascending_average_ranks(b)?;
    let n = ra.len() as f64;
    let mean_a = ra.iter().sum::<f64>() / n;
    let mean_b = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in ra.iter().zip(rb.iter()) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy / n;
        var_a += dx * dx / n;
        var_b += dy * dy / n;
    }
    if var_a == 0.0 {
        return Err(Error::ZeroVariance {
            context: "first sequence".into(),
        });
    }
    if var_b == 0.0 {
        return Err(Error::ZeroVariance {
            context: "second sequence".into(),
        });
    }
    Ok(cov / (var_a.sqrt() * var_b.sqrt()))
}

fn ascending_average_ranks(values: &[f64]) -> Result<Vec<f64>> {
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    Ok(ranks)
}

/// Rank similarity computed straight from two score lists.
pub fn score_list_rank_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    let u = normalize(&compute_ranks(a)?)?;
    let v = normalize(&compute_ranks(b)?)?;
    rank_similarity(&u, &v)
}
