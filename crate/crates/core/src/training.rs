//! The full loss stack and training loop: contrastive loss with in-batch
//! negatives, rank-distillation MSE restricted to filtered sentence pairs,
//! their hinge combination, and exact gradients for the linear encoder.
//!
//! Rank targets are computed once per batch from the frozen base encoder and
//! its index, never refreshed from the encoder in training. The loop is
//! deterministic given the seed: fixed shuffling, fixed dropout draws, fixed
//! reduction orders.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::CorpusIndex;
use crate::encoder::{
    AugmentedPair, Embedding, Encoder, EncoderParams, Sentence, DEFAULT_DIM, DEFAULT_DROPOUT,
    DEFAULT_FEATURES,
};
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, DenseVector};
use crate::rank::{rank_similarity, rank_vector};

/// Default softmax temperature for the contrastive loss.
pub const DEFAULT_TEMPERATURE: f64 = 0.05;
/// Default weight on the rank loss inside the hinge.
pub const DEFAULT_LAMBDA_TRAIN: f64 = 0.05;
/// Default lower similarity threshold for sentence-pair filtering.
pub const DEFAULT_TAU_L: f64 = 0.5;
/// Default upper similarity threshold for sentence-pair filtering.
pub const DEFAULT_TAU_U: f64 = 0.8;
/// Default batch size.
pub const DEFAULT_BATCH_SIZE: usize = 64;
/// Default learning rate for plain gradient descent.
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;

/// All scalars governing a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub temperature: f64,
    pub lambda_train: f64,
    pub tau_l: f64,
    pub tau_u: f64,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Embedding dimension of the encoder being trained.
    pub dim: usize,
    /// Hashed feature dimension of the encoder being trained.
    pub features: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: DEFAULT_BATCH_SIZE,
            temperature: DEFAULT_TEMPERATURE,
            lambda_train: DEFAULT_LAMBDA_TRAIN,
            tau_l: DEFAULT_TAU_L,
            tau_u: DEFAULT_TAU_U,
            dropout_rate: DEFAULT_DROPOUT,
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: 1,
            seed: 42,
            dim: DEFAULT_DIM,
            features: DEFAULT_FEATURES,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if self.temperature <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.lambda_train <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lambda_train must be positive, got {}",
                self.lambda_train
            )));
        }
        if self.tau_l > self.tau_u {
            return Err(Error::InvalidConfig("tau_l must not exceed tau_u".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.dim == 0 || self.features == 0 {
            return Err(Error::InvalidConfig(
                "dim and features must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Pairwise rank-vector similarities of a batch under the base encoder,
/// plus the filter mask. `sims` is exactly symmetric; a pair is masked in
/// iff tau_l <= sim <= tau_u (the diagonal included, which at default
/// thresholds always fails because its similarity is 1 > tau_u).
#[derive(Debug, Clone)]
pub struct BatchRankTargets {
    sims: DenseMatrix,
    mask: Vec<bool>,
}

impl BatchRankTargets {
    pub fn batch_len(&self) -> usize {
        self.sims.rows()
    }

    pub fn sims(&self) -> &DenseMatrix {
        &self.sims
    }

    pub fn sim(&self, i: usize, j: usize) -> f64 {
        self.sims.get(i, j)
    }

    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.batch_len() + j]
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Assemble targets directly from a similarity matrix (test hook; the
    /// production path is [`batch_rank_targets`]).
    pub fn from_sims(sims: DenseMatrix, tau_l: f64, tau_u: f64) -> Result<Self> {
        if sims.rows() != sims.cols() {
            return Err(Error::ShapeMismatch {
                context: format!("sims must be square, got {}x{}", sims.rows(), sims.cols()),
            });
        }
        if tau_l > tau_u {
            return Err(Error::InvalidConfig("tau_l must not exceed tau_u".into()));
        }
        let m = sims.rows();
        let mask = (0..m * m)
            .map(|idx| {
                let v = sims.as_slice()[idx];
                tau_l <= v && v <= tau_u
            })
            .collect();
        Ok(Self { sims, mask })
    }
}

/// Rank each batch sentence against the frozen base-encoder index and take
/// pairwise inner products of the rank vectors. Degenerate rank vectors are
/// reported with the offending sentence id.
pub fn batch_rank_targets(
    index: &CorpusIndex,
    batch: &[Sentence],
    encoder_e1: &dyn Encoder,
    tau_l: f64,
    tau_u: f64,
) -> Result<BatchRankTargets> {
    if batch.len() < 2 {
        return Err(Error::TooFewElements {
            min: 2,
            got: batch.len(),
        });
    }
    if tau_l > tau_u {
        return Err(Error::InvalidConfig("tau_l must not exceed tau_u".into()));
    }
    index.verify_fingerprint(encoder_e1.fingerprint())?;
    let embeddings: Vec<Embedding> = batch
        .iter()
        .map(|s| encoder_e1.encode_sentence(s))
        .collect::<Result<_>>()?;
    let rank_vecs = embeddings
        .par_iter()
        .zip(batch.par_iter())
        .map(|(e, s)| {
            rank_vector(index, e)
                .map(|z| z.with_source_id(s.id()))
                .map_err(|err| Error::BuildError(format!("sentence {}: {err}", s.id())))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = batch.len();
    let mut sims = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let s = rank_similarity(&rank_vecs[i], &rank_vecs[j])?;
            sims[i * m + j] = s;
            sims[j * m + i] = s;
        }
    }
    BatchRankTargets::from_sims(DenseMatrix::new(m, m, sims)?, tau_l, tau_u)
}

fn embedding_norms(embeddings: &[Embedding]) -> Result<Vec<f64>> {
    embeddings
        .iter()
        .map(|e| {
            let n = e.vector().norm();
            if n == 0.0 {
                Err(Error::ZeroNorm)
            } else {
                Ok(n)
            }
        })
        .collect()
}

fn cosine_from_norms(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Contrastive loss with in-batch negatives: each anchor must score its own
/// positive above the other positives under a temperature-scaled softmax.
/// Row logits are stabilized by subtracting the row maximum. A single-item
/// batch gives exactly zero.
pub fn contrastive_loss(
    anchors: &[Embedding],
    positives: &[Embedding],
    temperature: f64,
) -> Result<f64> {
    if anchors.is_empty() {
        return Err(Error::TooFewElements { min: 1, got: 0 });
    }
    if anchors.len() != positives.len() {
        return Err(Error::DimensionMismatch {
            left: anchors.len(),
            right: positives.len(),
        });
    }
    if temperature <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let na = embedding_norms(anchors)?;
    let nb = embedding_norms(positives)?;
    let m = anchors.len();
    let mut loss = 0.0;
    for i in 0..m {
        let logits: Vec<f64> = (0..m)
            .map(|j| {
                cosine_from_norms(anchors[i].as_slice(), positives[j].as_slice(), na[i], nb[j])
                    / temperature
            })
            .collect();
        let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let log_sum: f64 = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        loss += -(logits[i] - max) + log_sum;
    }
    Ok(loss)
}

/// Mean squared error between target rank similarities and encoder cosines,
/// over the masked pairs only. An empty mask contributes zero.
pub fn rank_loss(targets: &BatchRankTargets, embeddings: &[Embedding]) -> Result<f64> {
    let m = targets.batch_len();
    if embeddings.len() != m {
        return Err(Error::DimensionMismatch {
            left: m,
            right: embeddings.len(),
        });
    }
    let count = targets.masked_count();
    if count == 0 {
        return Ok(0.0);
    }
    let norms = embedding_norms(embeddings)?;
    let mut loss = 0.0;
    for i in 0..m {
        for j in 0..m {
            if !targets.is_masked(i, j) {
                continue;
            }
            let c = cosine_from_norms(
                embeddings[i].as_slice(),
                embeddings[j].as_slice(),
                norms[i],
                norms[j],
            );
            let d = targets.sim(i, j) - c;
            loss += d * d;
        }
    }
    Ok(loss / count as f64)
}

/// The hinge combination: max(lambda_train * l_r, l_cl).
pub fn total_loss(l_cl: f64, l_r: f64, lambda_train: f64) -> f64 {
    (lambda_train * l_r).max(l_cl)
}

// ---------------------------------------------------------------------------
// Feature-level batch and gradients
// ---------------------------------------------------------------------------

/// A batch at the feature level: anchor features and their dropout-augmented
/// positive features. This is the granularity the gradient works at, so
/// finite-difference checks can hold the features fixed while perturbing the
/// projection.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    anchor_features: Vec<DenseVector>,
    positive_features: Vec<DenseVector>,
}

impl TrainBatch {
    /// Featurize sentences and draw their positive-pair dropout masks. Each
    /// item gets its own stream seed so batches are order-insensitive to
    /// RNG state sharing.
    pub fn from_sentences(
        sentences: &[Sentence],
        num_features: usize,
        dropout_rate: f64,
        item_seeds: &[u64],
    ) -> Result<Self> {
        if sentences.len() != item_seeds.len() {
            return Err(Error::DimensionMismatch {
                left: sentences.len(),
                right: item_seeds.len(),
            });
        }
        let mut anchors = Vec::with_capacity(sentences.len());
        let mut positives = Vec::with_capacity(sentences.len());
        for (s, &seed) in sentences.iter().zip(item_seeds.iter()) {
            let pair = AugmentedPair::new(s.clone(), num_features, dropout_rate, seed)?;
            anchors.push(crate::encoder::featurize(s, num_features));
            positives.push(pair.positive_features().clone());
        }
        Ok(Self {
            anchor_features: anchors,
            positive_features: positives,
        })
    }

    /// Build from explicit feature vectors (test hook).
    pub fn from_features(
        anchor_features: Vec<DenseVector>,
        positive_features: Vec<DenseVector>,
    ) -> Result<Self> {
        if anchor_features.is_empty() {
            return Err(Error::TooFewElements { min: 1, got: 0 });
        }
        if anchor_features.len() != positive_features.len() {
            return Err(Error::DimensionMismatch {
                left: anchor_features.len(),
                right: positive_features.len(),
            });
        }
        let f = anchor_features[0].len();
        for v in anchor_features.iter().chain(positive_features.iter()) {
            if v.len() != f {
                return Err(Error::DimensionMismatch {
                    left: f,
                    right: v.len(),
                });
            }
        }
        Ok(Self {
            anchor_features,
            positive_features,
        })
    }

    pub fn len(&self) -> usize {
        self.anchor_features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchor_features.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.anchor_features[0].len()
    }

    pub fn anchor_features(&self) -> &[DenseVector] {
        &self.anchor_features
    }

    pub fn positive_features(&self) -> &[DenseVector] {
        &self.positive_features
    }

    fn project(&self, params: &EncoderParams, features: &[DenseVector]) -> Vec<Embedding> {
        features
            .iter()
            .map(|f| {
                let values = crate::numerics::matvec(params.projection(), f.as_slice())
                    .expect("batch feature length matches projection cols");
                Embedding::new(DenseVector::new(values).expect("projection output finite"))
            })
            .collect()
    }

    pub fn anchor_embeddings(&self, params: &EncoderParams) -> Vec<Embedding> {
        self.project(params, &self.anchor_features)
    }

    pub fn positive_embeddings(&self, params: &EncoderParams) -> Vec<Embedding> {
        self.project(params, &self.positive_features)
    }
}

/// Losses of one forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLosses {
    pub contrastive: f64,
    pub rank: f64,
    pub total: f64,
}

/// Forward pass: both losses and their hinge combination.
pub fn batch_forward(
    params: &EncoderParams,
    batch: &TrainBatch,
    targets: &BatchRankTargets,
    config: &TrainConfig,
) -> Result<BatchLosses> {
    let anchors = batch.anchor_embeddings(params);
    let positives = batch.positive_embeddings(params);
    let l_cl = contrastive_loss(&anchors, &positives, config.temperature)?;
    let l_r = rank_loss(targets, &anchors)?;
    Ok(BatchLosses {
        contrastive: l_cl,
        rank: l_r,
        total: total_loss(l_cl, l_r, config.lambda_train),
    })
}

/// d(cos(x, y))/dx with y held fixed, given the cosine and both norms.
fn cosine_grad_wrt_first(
    x: &[f64],
    y: &[f64],
    cos: f64,
    nx: f64,
    ny: f64,
    scale: f64,
    out: &mut [f64],
) {
    let a = scale / (nx * ny);
    let b = scale * cos / (nx * nx);
    for ((o, &yv), &xv) in out.iter_mut().zip(y.iter()).zip(x.iter()) {
        *o += a * yv - b * xv;
    }
}

/// Exact subgradient of the hinge total loss with respect to the projection:
/// the gradient of whichever branch is strictly larger, and of the
/// contrastive branch at exact ties.
pub fn gradient(
    params: &EncoderParams,
    batch: &TrainBatch,
    targets: &BatchRankTargets,
    config: &TrainConfig,
) -> Result<DenseMatrix> {
    let losses = batch_forward(params, batch, targets, config)?;
    if config.lambda_train * losses.rank > losses.contrastive {
        let g = rank_loss_gradient(params, batch, targets)?;
        scale_matrix(g, config.lambda_train)
    } else {
        contrastive_gradient(params, batch, config.temperature)
    }
}

fn scale_matrix(m: DenseMatrix, s: f64) -> Result<DenseMatrix> {
    let values = m.as_slice().iter().map(|v| v * s).collect();
    DenseMatrix::new(m.rows(), m.cols(), values)
}

/// Gradient of the contrastive loss with respect to the projection.
pub fn contrastive_gradient(
    params: &EncoderParams,
    batch: &TrainBatch,
    temperature: f64,
) -> Result<DenseMatrix> {
    let anchors = batch.anchor_embeddings(params);
    let positives = batch.positive_embeddings(params);
    let na = embedding_norms(&anchors)?;
    let nb = embedding_norms(&positives)?;
    let m = batch.len();
    let dim = params.dim();

    // cosines and row-wise softmax over logits c/tau
    let mut cos = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            cos[i * m + j] =
                cosine_from_norms(anchors[i].as_slice(), positives[j].as_slice(), na[i], nb[j]);
        }
    }
    let mut softmax = vec![0.0; m * m];
    for i in 0..m {
        let row = &cos[i * m..(i + 1) * m];
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) / temperature;
        let mut sum = 0.0;
        for j in 0..m {
            let e = (row[j] / temperature - max).exp();
            softmax[i * m + j] = e;
            sum += e;
        }
        for j in 0..m {
            softmax[i * m + j] /= sum;
        }
    }

    // accumulate per-embedding gradients, then push through the projection
    let mut d_anchor = vec![0.0; m * dim];
    let mut d_positive = vec![0.0; m * dim];
    for i in 0..m {
        for j in 0..m {
            let mut g = softmax[i * m + j];
            if i == j {
                g -= 1.0;
            }
            let g = g / temperature;
            let c = cos[i * m + j];
            cosine_grad_wrt_first(
                anchors[i].as_slice(),
                positives[j].as_slice(),
                c,
                na[i],
                nb[j],
                g,
                &mut d_anchor[i * dim..(i + 1) * dim],
            );
            cosine_grad_wrt_first(
                positives[j].as_slice(),
                anchors[i].as_slice(),
                c,
                nb[j],
                na[i],
                g,
                &mut d_positive[j * dim..(j + 1) * dim],
            );
        }
    }
    accumulate_projection_gradient(params, batch, &d_anchor, Some(&d_positive))
}

/// Gradient of the (filtered, mean-normalized) rank loss with respect to the
/// projection. Zero when the mask is empty.
pub fn rank_loss_gradient(
    params: &EncoderParams,
    batch: &TrainBatch,
    targets: &BatchRankTargets,
) -> Result<DenseMatrix> {
    let m = batch.len();
    if targets.batch_len() != m {
        return Err(Error::DimensionMismatch {
            left: targets.batch_len(),
            right: m,
        });
    }
    let dim = params.dim();
    let count = targets.masked_count();
    if count == 0 {
        return DenseMatrix::zeros(dim, params.features());
    }
    let anchors = batch.anchor_embeddings(params);
    let norms = embedding_norms(&anchors)?;
    let mut d_anchor = vec![0.0; m * dim];
    for i in 0..m {
        for j in 0..m {
            if !targets.is_masked(i, j) {
                continue;
            }
            let c = cosine_from_norms(
                anchors[i].as_slice(),
                anchors[j].as_slice(),
                norms[i],
                norms[j],
            );
            // d/dc of (t - c)^2 / count
            let g = 2.0 * (c - targets.sim(i, j)) / count as f64;
            cosine_grad_wrt_first(
                anchors[i].as_slice(),
                anchors[j].as_slice(),
                c,
                norms[i],
                norms[j],
                g,
                &mut d_anchor[i * dim..(i + 1) * dim],
            );
            cosine_grad_wrt_first(
                anchors[j].as_slice(),
                anchors[i].as_slice(),
                c,
                norms[j],
                norms[i],
                g,
                &mut d_anchor[j * dim..(j + 1) * dim],
            );
        }
    }
    accumulate_projection_gradient(params, batch, &d_anchor, None)
}

/// Chain per-embedding gradients through the linear map: for embedding
/// gradients dE and feature vectors phi, dW = sum_i outer(dE_i, phi_i).
fn accumulate_projection_gradient(
    params: &EncoderParams,
    batch: &TrainBatch,
    d_anchor: &[f64],
    d_positive: Option<&[f64]>,
) -> Result<DenseMatrix> {
    let dim = params.dim();
    let features = params.features();
    let mut grad = vec![0.0; dim * features];
    let mut add_outer = |d_emb: &[f64], feats: &DenseVector| {
        for (r, &dv) in d_emb.iter().enumerate() {
            if dv == 0.0 {
                continue;
            }
            let row = &mut grad[r * features..(r + 1) * features];
            for (g, &f) in row.iter_mut().zip(feats.as_slice().iter()) {
                *g += dv * f;
            }
        }
    };
    for (i, feats) in batch.anchor_features().iter().enumerate() {
        add_outer(&d_anchor[i * dim..(i + 1) * dim], feats);
    }
    if let Some(d_pos) = d_positive {
        for (j, feats) in batch.positive_features().iter().enumerate() {
            add_outer(&d_pos[j * dim..(j + 1) * dim], feats);
        }
    }
    DenseMatrix::new(dim, features, grad)
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// One row of the training loss log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub l_cl: f64,
    /// lambda_train * l_r, the rank branch of the hinge.
    pub lambda_lr: f64,
    pub l_total: f64,
}

/// Train a fresh encoder against rank targets from the frozen base encoder.
/// Plain gradient descent with a fixed learning rate; batches of fewer than
/// two sentences (a ragged tail) are skipped. Deterministic given the seed.
pub fn train(
    sentences: &[Sentence],
    index_e1: &CorpusIndex,
    encoder_e1: &dyn Encoder,
    config: &TrainConfig,
) -> Result<(EncoderParams, Vec<LossRecord>)> {
    config.validate()?;
    if sentences.len() < 2 {
        return Err(Error::TooFewElements {
            min: 2,
            got: sentences.len(),
        });
    }
    index_e1.verify_fingerprint(encoder_e1.fingerprint())?;
    let mut params = EncoderParams::init(config.seed, config.dim, config.features)?;
    let mut trace = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut step = 0;
    for _epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..sentences.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let batch_sentences: Vec<Sentence> =
                chunk.iter().map(|&i| sentences[i].clone()).collect();
            let item_seeds: Vec<u64> = (0..chunk.len()).map(|_| rng.gen()).collect();
            let targets = batch_rank_targets(
                index_e1,
                &batch_sentences,
                encoder_e1,
                config.tau_l,
                config.tau_u,
            )?;
            let batch = TrainBatch::from_sentences(
                &batch_sentences,
                config.features,
                config.dropout_rate,
                &item_seeds,
            )?;
            let losses = batch_forward(&params, &batch, &targets, config)?;
            step += 1;
            trace.push(LossRecord {
                step,
                l_cl: losses.contrastive,
                lambda_lr: config.lambda_train * losses.rank,
                l_total: losses.total,
            });
            let grad = gradient(&params, &batch, &targets, config)?;
            let updated: Vec<f64> = params
                .projection()
                .as_slice()
                .iter()
                .zip(grad.as_slice().iter())
                .map(|(w, g)| w - config.learning_rate * g)
                .collect();
            params =
                params.with_projection(DenseMatrix::new(config.dim, config.features, updated)?)?;
        }
    }
    Ok((params, trace))
}

/// [`train`] over a corpus file (one sentence per line).
pub fn train_from_file(
    corpus_path: &Path,
    index_e1: &CorpusIndex,
    encoder_e1: &dyn Encoder,
    config: &TrainConfig,
) -> Result<(EncoderParams, Vec<LossRecord>)> {
    let (sentences, _, _) = crate::corpus::read_corpus_sentences(corpus_path)?;
    train(&sentences, index_e1, encoder_e1, config)
}

/// Write the loss trace as CSV with columns step,l_cl,lambda_lr,l_total.
/// Floats use shortest round-trip formatting, so reading the file back
/// recovers the exact values.
pub fn write_loss_csv(path: &Path, trace: &[LossRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "step,l_cl,lambda_lr,l_total")?;
    for r in trace {
        writeln!(w, "{},{},{},{}", r.step, r.l_cl, r.lambda_lr, r.l_total)?;
    }
    w.flush()?;
    Ok(())
}

/// Read back a loss-trace CSV written by [`write_loss_csv`].
pub fn read_loss_csv(path: &Path) -> Result<Vec<LossRecord>> {
    let display = path.display().to_string();
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let header = lines.next().transpose()?.ok_or_else(|| Error::LoadError {
        path: display.clone(),
        reason: "empty loss log".into(),
    })?;
    if header.trim() != "step,l_cl,lambda_lr,l_total" {
        return Err(Error::LoadError {
            path: display,
            reason: format!("unexpected header {header:?}"),
        });
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let lineno = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::LineError {
                path: display.clone(),
                line: lineno,
                reason: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| Error::LineError {
                path: display.clone(),
                line: lineno,
                reason: format!("bad float {s:?}"),
            })
        };
        out.push(LossRecord {
            step: fields[0].trim().parse().map_err(|_| Error::LineError {
                path: display.clone(),
                line: lineno,
                reason: format!("bad step {:?}", fields[0]),
            })?,
            l_cl: parse(fields[1])?,
            lambda_lr: parse(fields[2])?,
            l_total: parse(fields[3])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_index;
    use crate::encoder::HashNgramEncoder;

    fn emb(values: &[f64]) -> Embedding {
        Embedding::from_values(values.to_vec()).unwrap()
    }

    #[test]
    fn contrastive_single_item_is_zero() {
        let a = vec![emb(&[1.0, 0.0])];
        let p = vec![emb(&[0.5, 0.5])];
        assert_eq!(contrastive_loss(&a, &p, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn contrastive_hand_case() {
        // two orthogonal anchor/positive pairs at tau = 1:
        // each row loss is log(1 + e^-1)
        let a = vec![emb(&[1.0, 0.0]), emb(&[0.0, 1.0])];
        let p = a.clone();
        let l = contrastive_loss(&a, &p, 1.0).unwrap();
        let expect = 2.0 * (1.0 + (-1.0f64).exp()).ln();
        assert!((l - expect).abs() < 1e-12, "{l} vs {expect}");
        assert!((l - 0.626523).abs() < 1e-6);
    }

    #[test]
    fn contrastive_nonnegative_and_finite() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let m = rng.gen_range(1..6);
            let a: Vec<Embedding> = (0..m)
                .map(|_| emb(&[rng.gen_range(0.1..1.0), rng.gen_range(-1.0..1.0)]))
                .collect();
            let p: Vec<Embedding> = (0..m)
                .map(|_| emb(&[rng.gen_range(0.1..1.0), rng.gen_range(-1.0..1.0)]))
                .collect();
            let l = contrastive_loss(&a, &p, 0.05).unwrap();
            assert!(l.is_finite());
            assert!(l >= 0.0);
        }
    }

    #[test]
    fn contrastive_zero_norm_rejected() {
        let a = vec![emb(&[0.0, 0.0])];
        let p = vec![emb(&[1.0, 0.0])];
        assert!(matches!(
            contrastive_loss(&a, &p, 0.05).unwrap_err(),
            Error::ZeroNorm
        ));
    }

    fn sims_from(values: &[f64], m: usize) -> DenseMatrix {
        DenseMatrix::new(m, m, values.to_vec()).unwrap()
    }

    #[test]
    fn threshold_filtering() {
        // off-diagonal sims 0.9, 0.6, 0.3: only 0.6 passes [0.5, 0.8]
        let sims = sims_from(
            &[
                1.0, 0.9, 0.6, //
                0.9, 1.0, 0.3, //
                0.6, 0.3, 1.0,
            ],
            3,
        );
        let t = BatchRankTargets::from_sims(sims, 0.5, 0.8).unwrap();
        assert!(t.is_masked(0, 2) && t.is_masked(2, 0));
        assert!(!t.is_masked(0, 1));
        assert!(!t.is_masked(1, 2));
        assert!(!t.is_masked(0, 0), "diagonal 1 > tau_u fails the filter");
        assert_eq!(t.masked_count(), 2);
    }

    #[test]
    fn wide_open_thresholds_pass_everything() {
        let sims = sims_from(&[1.0, -0.2, -0.2, 1.0], 2);
        let t = BatchRankTargets::from_sims(sims, -1.0, 1.0).unwrap();
        assert_eq!(t.masked_count(), 4);
    }

    #[test]
    fn rank_loss_perfect_fit_and_single_pair() {
        let sims = sims_from(
            &[
                1.0, 0.6, //
                0.6, 1.0,
            ],
            2,
        );
        let t = BatchRankTargets::from_sims(sims, 0.5, 0.8).unwrap();
        assert_eq!(t.masked_count(), 2);
        // embeddings at a known angle: cos = 0.1 -> per-pair (0.5)^2
        let angle = 0.1f64.acos();
        let e = vec![emb(&[1.0, 0.0]), emb(&[angle.cos(), angle.sin()])];
        let l = rank_loss(&t, &e).unwrap();
        assert!((l - 0.25).abs() < 1e-12, "{l}");
        // perfect fit: cos = 0.6 on the masked pair
        let angle = 0.6f64.acos();
        let e = vec![emb(&[1.0, 0.0]), emb(&[angle.cos(), angle.sin()])];
        assert!(rank_loss(&t, &e).unwrap() < 1e-24);
    }

    #[test]
    fn rank_loss_empty_mask_is_zero() {
        let sims = sims_from(&[1.0, 0.95, 0.95, 1.0], 2);
        let t = BatchRankTargets::from_sims(sims, 0.5, 0.8).unwrap();
        assert_eq!(t.masked_count(), 0);
        let e = vec![emb(&[1.0, 0.0]), emb(&[0.0, 1.0])];
        assert_eq!(rank_loss(&t, &e).unwrap(), 0.0);
    }

    #[test]
    fn total_loss_branches() {
        assert_eq!(total_loss(0.2, 1.0, 0.05), 0.2);
        assert_eq!(total_loss(0.2, 10.0, 0.05), 0.5);
        assert_eq!(total_loss(0.7, 0.0, 0.05), 0.7);
    }

    #[test]
    fn identical_batch_gives_empty_mask_at_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        std::fs::write(
            &path,
            "same sentence here\nanother line two\nthird line text\n",
        )
        .unwrap();
        let e1 = HashNgramEncoder::new(EncoderParams::init(1, 16, 256).unwrap());
        let (index, _) = build_index(&path, &e1).unwrap();
        let s = Sentence::new(0, "identical text").unwrap();
        let batch = vec![
            s.clone(),
            Sentence::new(1, "identical text").unwrap(),
            Sentence::new(2, "identical text").unwrap(),
        ];
        let t = batch_rank_targets(&index, &batch, &e1, DEFAULT_TAU_L, DEFAULT_TAU_U).unwrap();
        // all pairwise sims are 1 (> tau_u), so nothing passes
        assert_eq!(t.masked_count(), 0);
        for i in 0..3 {
            for j in 0..3 {
                assert!((t.sim(i, j) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn targets_symmetric_and_masked_values_in_band() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        let lines: Vec<String> = (0..20)
            .map(|i| format!("corpus sentence number {i} with shared words"))
            .collect();
        std::fs::write(&path, lines.join("\n")).unwrap();
        let e1 = HashNgramEncoder::new(EncoderParams::init(3, 16, 256).unwrap());
        let (index, _) = build_index(&path, &e1).unwrap();
        let batch: Vec<Sentence> = (0..5)
            .map(|i| Sentence::new(i, format!("query sentence {i} shared words")).unwrap())
            .collect();
        let t = batch_rank_targets(&index, &batch, &e1, -0.2, 0.9).unwrap();
        for i in 0..5 {
            assert!((t.sim(i, i) - 1.0).abs() < 1e-9);
            for j in 0..5 {
                assert_eq!(t.sim(i, j), t.sim(j, i));
                if t.is_masked(i, j) {
                    assert!(t.sim(i, j) >= -0.2 && t.sim(i, j) <= 0.9);
                }
            }
        }
    }

    #[test]
    fn unfiltered_equals_plain_mse_over_all_pairs() {
        let sims = sims_from(
            &[
                1.0, 0.3, -0.4, //
                0.3, 1.0, 0.8, //
                -0.4, 0.8, 1.0,
            ],
            3,
        );
        let t = BatchRankTargets::from_sims(sims.clone(), -1.0, 1.0).unwrap();
        let e = vec![
            emb(&[1.0, 0.2, 0.1]),
            emb(&[-0.3, 0.9, 0.4]),
            emb(&[0.5, -0.5, 0.7]),
        ];
        let filtered = rank_loss(&t, &e).unwrap();
        // plain Eq-4 style mean over all m^2 pairs
        let mut plain = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let c = crate::numerics::cosine(e[i].vector(), e[j].vector()).unwrap();
                let d = sims.get(i, j) - c;
                plain += d * d;
            }
        }
        plain /= 9.0;
        assert!((filtered - plain).abs() < 1e-12);
    }

    // -- gradient checks ---------------------------------------------------

    fn random_batch(rng: &mut ChaCha8Rng, m: usize, f: usize) -> TrainBatch {
        use rand::Rng;
        let mk = |rng: &mut ChaCha8Rng| -> DenseVector {
            // sparse non-negative unit vectors, like hashed features
            let mut v = vec![0.0; f];
            for _ in 0..3 {
                v[rng.gen_range(0..f)] += rng.gen_range(0.2..1.0);
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            DenseVector::new(v.into_iter().map(|x| x / n).collect()).unwrap()
        };
        let anchors: Vec<DenseVector> = (0..m).map(|_| mk(rng)).collect();
        let positives: Vec<DenseVector> = (0..m).map(|_| mk(rng)).collect();
        TrainBatch::from_features(anchors, positives).unwrap()
    }

    fn random_targets(rng: &mut ChaCha8Rng, m: usize, tau_l: f64, tau_u: f64) -> BatchRankTargets {
        use rand::Rng;
        let mut sims = vec![0.0; m * m];
        for i in 0..m {
            sims[i * m + i] = 1.0;
            for j in (i + 1)..m {
                let v = rng.gen_range(-0.9..0.9);
                sims[i * m + j] = v;
                sims[j * m + i] = v;
            }
        }
        BatchRankTargets::from_sims(DenseMatrix::new(m, m, sims).unwrap(), tau_l, tau_u).unwrap()
    }

    fn finite_difference(
        params: &EncoderParams,
        batch: &TrainBatch,
        targets: &BatchRankTargets,
        config: &TrainConfig,
        h: f64,
    ) -> Vec<f64> {
        let dim = params.dim();
        let features = params.features();
        let base = params.projection().as_slice().to_vec();
        let mut grad = vec![0.0; dim * features];
        for (idx, g) in grad.iter_mut().enumerate() {
            let mut plus = base.clone();
            plus[idx] += h;
            let mut minus = base.clone();
            minus[idx] -= h;
            let p_plus = params
                .with_projection(DenseMatrix::new(dim, features, plus).unwrap())
                .unwrap();
            let p_minus = params
                .with_projection(DenseMatrix::new(dim, features, minus).unwrap())
                .unwrap();
            let l_plus = batch_forward(&p_plus, batch, targets, config)
                .unwrap()
                .total;
            let l_minus = batch_forward(&p_minus, batch, targets, config)
                .unwrap()
                .total;
            *g = (l_plus - l_minus) / (2.0 * h);
        }
        grad
    }

    fn assert_gradient_close(analytic: &[f64], numeric: &[f64]) {
        for (idx, (a, n)) in analytic.iter().zip(numeric.iter()).enumerate() {
            let tol = 1e-8f64.max(1e-4 * a.abs().max(n.abs()));
            assert!(
                (a - n).abs() <= tol,
                "coordinate {idx}: analytic {a} vs numeric {n}"
            );
        }
    }

    #[test]
    fn gradient_zero_for_symmetric_batch() {
        // all anchors equal their positives and each other: uniform softmax
        // over identical cosines has zero gradient
        let f = 8;
        let feat = DenseVector::new({
            let mut v = vec![0.0; f];
            v[0] = 0.6;
            v[3] = 0.8;
            v
        })
        .unwrap();
        let batch = TrainBatch::from_features(
            vec![feat.clone(), feat.clone(), feat.clone()],
            vec![feat.clone(), feat.clone(), feat],
        )
        .unwrap();
        let params = EncoderParams::init(5, 4, f).unwrap();
        let g = contrastive_gradient(&params, &batch, 0.05).unwrap();
        for v in g.as_slice() {
            assert!(v.abs() < 1e-10, "{v}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences_contrastive_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..5 {
            let batch = random_batch(&mut rng, 3, 8);
            let targets = random_targets(&mut rng, 3, -1.0, 1.0);
            let params = EncoderParams::init(100 + trial, 4, 8).unwrap();
            let mut config = TrainConfig {
                temperature: 0.5,
                ..TrainConfig::default()
            };
            // force the contrastive branch
            let losses = batch_forward(&params, &batch, &targets, &config).unwrap();
            config.lambda_train = (0.25 * losses.contrastive / losses.rank.max(1e-9)).max(1e-6);
            let losses = batch_forward(&params, &batch, &targets, &config).unwrap();
            assert!(config.lambda_train * losses.rank < losses.contrastive);
            let analytic = gradient(&params, &batch, &targets, &config).unwrap();
            let numeric = finite_difference(&params, &batch, &targets, &config, 1e-5);
            assert_gradient_close(analytic.as_slice(), &numeric);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_rank_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for trial in 0..5 {
            let batch = random_batch(&mut rng, 3, 8);
            let targets = random_targets(&mut rng, 3, -1.0, 1.0);
            let params = EncoderParams::init(200 + trial, 4, 8).unwrap();
            let mut config = TrainConfig {
                temperature: 0.5,
                ..TrainConfig::default()
            };
            let losses = batch_forward(&params, &batch, &targets, &config).unwrap();
            // force the rank branch
            config.lambda_train = 4.0 * losses.contrastive / losses.rank.max(1e-9);
            let losses = batch_forward(&params, &batch, &targets, &config).unwrap();
            assert!(config.lambda_train * losses.rank > losses.contrastive);
            let analytic = gradient(&params, &batch, &targets, &config).unwrap();
            let numeric = finite_difference(&params, &batch, &targets, &config, 1e-5);
            assert_gradient_close(analytic.as_slice(), &numeric);
        }
    }

    // -- training loop -----------------------------------------------------

    fn toy_setup() -> (tempfile::TempDir, std::path::PathBuf, HashNgramEncoder) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        let mut lines = Vec::new();
        for i in 0..12 {
            let cluster = if i % 2 == 0 {
                "red crimson ruby"
            } else {
                "blue azure navy"
            };
            lines.push(format!("{cluster} item number {i}"));
        }
        std::fs::write(&path, lines.join("\n")).unwrap();
        let e1 = HashNgramEncoder::new(EncoderParams::init(1, 16, 256).unwrap());
        (dir, path, e1)
    }

    #[test]
    fn train_zero_epochs_returns_initial_params() {
        let (_d, path, e1) = toy_setup();
        let (index, _) = build_index(&path, &e1).unwrap();
        let (sentences, _, _) = crate::corpus::read_corpus_sentences(&path).unwrap();
        let config = TrainConfig {
            epochs: 0,
            batch_size: 4,
            dim: 8,
            features: 256,
            seed: 7,
            ..TrainConfig::default()
        };
        let (params, trace) = train(&sentences, &index, &e1, &config).unwrap();
        assert!(trace.is_empty());
        assert_eq!(params, EncoderParams::init(7, 8, 256).unwrap());
    }

    #[test]
    fn train_deterministic_given_seed() {
        let (_d, path, e1) = toy_setup();
        let (index, _) = build_index(&path, &e1).unwrap();
        let (sentences, _, _) = crate::corpus::read_corpus_sentences(&path).unwrap();
        let config = TrainConfig {
            epochs: 2,
            batch_size: 4,
            dim: 8,
            features: 256,
            seed: 9,
            ..TrainConfig::default()
        };
        let (p1, t1) = train(&sentences, &index, &e1, &config).unwrap();
        let (p2, t2) = train(&sentences, &index, &e1, &config).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(t1, t2);
    }

    #[test]
    fn train_loss_decreases_on_toy_corpus() {
        // fixed-seed reference run on a generated clustered corpus
        let toy = crate::toydata::generate(&crate::toydata::ToyConfig {
            seed: 5,
            clusters: 3,
            per_cluster: 12,
            vocab: 24,
            pairs: 12,
            sentence_len: 7,
            filler_vocab: 12,
            fillers_per_sentence: 1,
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        std::fs::write(&path, toy.corpus_lines.join("\n")).unwrap();
        let e1 = HashNgramEncoder::new(EncoderParams::init(1, 16, 512).unwrap());
        let (index, _) = build_index(&path, &e1).unwrap();
        let (sentences, _, _) = crate::corpus::read_corpus_sentences(&path).unwrap();
        let config = TrainConfig {
            epochs: 5,
            batch_size: 8,
            dim: 16,
            features: 512,
            seed: 3,
            ..TrainConfig::default()
        };
        let (_, trace) = train(&sentences, &index, &e1, &config).unwrap();
        assert_eq!(trace.len(), 25);
        assert!(
            trace.last().unwrap().l_total <= trace.first().unwrap().l_total,
            "final {} vs initial {}",
            trace.last().unwrap().l_total,
            trace.first().unwrap().l_total
        );
    }

    #[test]
    fn train_rejects_bad_config() {
        let (_d, path, e1) = toy_setup();
        let (index, _) = build_index(&path, &e1).unwrap();
        let (sentences, _, _) = crate::corpus::read_corpus_sentences(&path).unwrap();
        let config = TrainConfig {
            tau_l: 0.9,
            tau_u: 0.5,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&sentences, &index, &e1, &config).unwrap_err(),
            Error::InvalidConfig(_)
        ));
    }

    #[test]
    fn rank_loss_batch_order_invariant() {
        let sims = sims_from(
            &[
                1.0, 0.3, 0.6, //
                0.3, 1.0, -0.2, //
                0.6, -0.2, 1.0,
            ],
            3,
        );
        let t = BatchRankTargets::from_sims(sims, -1.0, 1.0).unwrap();
        let e = vec![emb(&[1.0, 0.2]), emb(&[-0.3, 0.9]), emb(&[0.5, -0.5])];
        let l = rank_loss(&t, &e).unwrap();
        // permute the batch (and targets consistently)
        let perm = [2usize, 0, 1];
        let mut sims_p = vec![0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                sims_p[i * 3 + j] = t.sim(perm[i], perm[j]);
            }
        }
        let t_p = BatchRankTargets::from_sims(DenseMatrix::new(3, 3, sims_p).unwrap(), -1.0, 1.0)
            .unwrap();
        let e_p: Vec<Embedding> = perm.iter().map(|&i| e[i].clone()).collect();
        let l_p = rank_loss(&t_p, &e_p).unwrap();
        assert!((l - l_p).abs() < 1e-12);
    }

    #[test]
    fn loss_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        let trace = vec![
            LossRecord {
                step: 1,
                l_cl: 1.5,
                lambda_lr: 0.02500000000000001,
                l_total: 1.5,
            },
            LossRecord {
                step: 2,
                l_cl: 0.3,
                lambda_lr: 0.7071067811865475,
                l_total: 0.7071067811865475,
            },
        ];
        write_loss_csv(&path, &trace).unwrap();
        let back = read_loss_csv(&path).unwrap();
        assert_eq!(trace, back);
    }
}
