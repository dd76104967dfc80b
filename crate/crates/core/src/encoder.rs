//! Sentence encoders: a deterministic trainable hashed-trigram encoder, a
//! precomputed-embedding backend for externally produced vectors, and the
//! feature-dropout augmentation used to build positive pairs.
//!
//! The trainable encoder maps a sentence to a D-dimensional embedding in two
//! steps: `featurize` hashes the character trigrams of the lowercased,
//! whitespace-normalized text into F buckets (FNV-1a 64 over the trigram's
//! UTF-8 bytes, modulo F) and L2-normalizes the counts; `encode` applies a
//! D x F linear projection. No nonlinearity - cosine downstream makes scale
//! irrelevant.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{matvec, DenseMatrix, DenseVector};

/// Default embedding dimension.
pub const DEFAULT_DIM: usize = 64;
/// Default hashed feature dimension.
pub const DEFAULT_FEATURES: usize = 1024;
/// Default feature-dropout rate for positive pairs.
pub const DEFAULT_DROPOUT: f64 = 0.1;

/// A sentence with an id unique within its corpus or batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    id: u64,
    text: String,
}

impl Sentence {
    pub fn new(id: u64, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::EmptySentence { id });
        }
        Ok(Self { id, text })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// A D-dimensional sentence embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    vector: DenseVector,
}

impl Embedding {
    pub fn new(vector: DenseVector) -> Self {
        Self { vector }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Ok(Self {
            vector: DenseVector::new(values)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.vector.as_slice()
    }

    pub fn vector(&self) -> &DenseVector {
        &self.vector
    }
}

/// FNV-1a, 64-bit. The bucket hash is part of the file-format contract and
/// must stay frozen.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Hash the character-trigram multiset of a sentence into `num_features`
/// buckets and L2-normalize the counts. Texts shorter than three characters
/// are wrapped in boundary markers (^, $) so at least one trigram exists.
/// Deterministic: same text, same output.
pub fn featurize(sentence: &Sentence, num_features: usize) -> DenseVector {
    assert!(num_features > 0, "num_features must be positive");
    let normalized = normalize_text(sentence.text());
    let chars: Vec<char> = if normalized.chars().count() < 3 {
        format!("^{normalized}$").chars().collect()
    } else {
        normalized.chars().collect()
    };
    let mut counts = vec![0.0f64; num_features];
    let mut buf = [0u8; 12];
    for window in chars.windows(3) {
        let mut len = 0;
        for ch in window {
            len += ch.encode_utf8(&mut buf[len..]).len();
        }
        let bucket = (fnv1a64(&buf[..len]) % num_features as u64) as usize;
        counts[bucket] += 1.0;
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    for c in &mut counts {
        *c /= norm;
    }
    DenseVector::new(counts).expect("feature vector is non-empty and finite")
}

/// Trainable parameters of the hashed-trigram encoder: a D x F projection.
/// Freshly initialized parameters are fully determined by (seed, D, F).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    projection: DenseMatrix,
    seed: u64,
}

impl EncoderParams {
    /// Initialize i.i.d. uniform(-1/sqrt(F), +1/sqrt(F)) from the seeded RNG.
    pub fn init(seed: u64, dim: usize, features: usize) -> Result<Self> {
        if dim == 0 || features == 0 {
            return Err(Error::InvalidConfig(
                "encoder dimensions must be positive".into(),
            ));
        }
        let bound = 1.0 / (features as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..dim * features)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Ok(Self {
            projection: DenseMatrix::new(dim, features, values)?,
            seed,
        })
    }

    /// Wrap an updated projection (training step output) keeping the seed.
    pub fn with_projection(&self, projection: DenseMatrix) -> Result<Self> {
        if projection.rows() != self.dim() || projection.cols() != self.features() {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "projection must stay {}x{}, got {}x{}",
                    self.dim(),
                    self.features(),
                    projection.rows(),
                    projection.cols()
                ),
            });
        }
        Ok(Self {
            projection,
            seed: self.seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.projection.rows()
    }

    pub fn features(&self) -> usize {
        self.projection.cols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn projection(&self) -> &DenseMatrix {
        &self.projection
    }

    /// Hash identifying the encoder function these parameters implement.
    /// Covers the projection values, not the seed: equal projections encode
    /// identically regardless of how they were produced.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::with_capacity(16 + 8 + self.projection.as_slice().len() * 8);
        bytes.extend_from_slice(b"hash-ngram\0");
        bytes.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.features() as u32).to_le_bytes());
        for v in self.projection.as_slice() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fnv1a64(&bytes)
    }

    /// Persist as a model file: magic "RKM1", u32 D, u32 F, u64 seed, then
    /// D x F little-endian f64, row-major.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(b"RKM1")?;
        w.write_all(&(self.dim() as u32).to_le_bytes())?;
        w.write_all(&(self.features() as u32).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in self.projection.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let display = path.display().to_string();
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, &display, "magic")?;
        if &magic != b"RKM1" {
            return Err(Error::LoadError {
                path: display,
                reason: "bad magic, not a model file".into(),
            });
        }
        let dim = read_u32(&mut r, &display)? as usize;
        let features = read_u32(&mut r, &display)? as usize;
        let seed = read_u64(&mut r, &display)?;
        if dim == 0 || features == 0 {
            return Err(Error::LoadError {
                path: display,
                reason: "zero dimension in header".into(),
            });
        }
        let mut values = Vec::with_capacity(dim * features);
        let mut buf = [0u8; 8];
        for i in 0..dim * features {
            read_exact(&mut r, &mut buf, &display, "projection values")?;
            let v = f64::from_le_bytes(buf);
            if !v.is_finite() {
                return Err(Error::LoadError {
                    path: display,
                    reason: format!("non-finite projection value at index {i}"),
                });
            }
            values.push(v);
        }
        Ok(Self {
            projection: DenseMatrix::new(dim, features, values)?,
            seed,
        })
    }
}

/// Project a sentence's features: embedding = projection x featurize(s).
/// Pure function of (params, text).
pub fn encode(params: &EncoderParams, sentence: &Sentence) -> Embedding {
    let features = featurize(sentence, params.features());
    let values = matvec(params.projection(), features.as_slice())
        .expect("featurize length always matches projection cols");
    Embedding::new(DenseVector::new(values).expect("projection output is finite"))
}

/// A positive example built from an anchor by feature-level dropout.
/// The positive features derive only from the anchor's own features.
#[derive(Debug, Clone)]
pub struct AugmentedPair {
    anchor: Sentence,
    positive_features: DenseVector,
    dropout_rate: f64,
    seed: u64,
}

impl AugmentedPair {
    /// Draw the dropout mask from a ChaCha stream seeded with `seed`: each of
    /// the F coordinates is zeroed independently with probability
    /// `dropout_rate`, then the result is re-L2-normalized. Degenerate-input
    /// rule: if dropout zeroes every feature, fall back to the un-dropped
    /// features. A rate of exactly 0 returns the anchor features untouched.
    pub fn new(
        anchor: Sentence,
        num_features: usize,
        dropout_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout_rate must be in [0, 1), got {dropout_rate}"
            )));
        }
        let features = featurize(&anchor, num_features);
        let positive_features = if dropout_rate == 0.0 {
            features
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut dropped = false;
            let mut values: Vec<f64> = features
                .as_slice()
                .iter()
                .map(|&v| {
                    if rng.gen::<f64>() < dropout_rate {
                        dropped = true;
                        0.0
                    } else {
                        v
                    }
                })
                .collect();
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !dropped || norm == 0.0 {
                features
            } else {
                for v in &mut values {
                    *v /= norm;
                }
                DenseVector::new(values)?
            }
        };
        Ok(Self {
            anchor,
            positive_features,
            dropout_rate,
            seed,
        })
    }

    pub fn anchor(&self) -> &Sentence {
        &self.anchor
    }

    pub fn positive_features(&self) -> &DenseVector {
        &self.positive_features
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Project the augmented (dropout) features of a positive pair.
pub fn encode_positive(params: &EncoderParams, pair: &AugmentedPair) -> Embedding {
    let values = matvec(params.projection(), pair.positive_features().as_slice())
        .expect("positive features length always matches projection cols");
    Embedding::new(DenseVector::new(values).expect("projection output is finite"))
}

// ---------------------------------------------------------------------------
// Encoder backends
// ---------------------------------------------------------------------------

/// A map from sentence text to embedding. The corpus index records the
/// fingerprint of the encoder that produced it so later stages can refuse
/// mismatched pairings.
pub trait Encoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode_sentence(&self, sentence: &Sentence) -> Result<Embedding>;
    fn fingerprint(&self) -> u64;
    fn backend_name(&self) -> &'static str;
}

/// The trainable hashed-trigram encoder.
#[derive(Debug, Clone)]
pub struct HashNgramEncoder {
    params: EncoderParams,
}

impl HashNgramEncoder {
    pub fn new(params: EncoderParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }
}

impl Encoder for HashNgramEncoder {
    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn encode_sentence(&self, sentence: &Sentence) -> Result<Embedding> {
        Ok(encode(&self.params, sentence))
    }

    fn fingerprint(&self) -> u64 {
        self.params.fingerprint()
    }

    fn backend_name(&self) -> &'static str {
        "hash-ngram"
    }
}

/// Externally produced vectors (e.g. from a transformer encoder), looked up
/// by sentence id.
#[derive(Debug, Clone)]
pub struct PrecomputedEncoder {
    table: BTreeMap<u64, Embedding>,
    dim: usize,
}

impl PrecomputedEncoder {
    pub fn new(table: BTreeMap<u64, Embedding>) -> Result<Self> {
        let dim = match table.values().next() {
            Some(e) => e.dim(),
            None => {
                return Err(Error::InvalidConfig(
                    "precomputed table must not be empty".into(),
                ))
            }
        };
        if let Some((id, e)) = table.iter().find(|(_, e)| e.dim() != dim) {
            return Err(Error::LoadError {
                path: "<table>".into(),
                reason: format!("embedding for id {id} has dimension {} != {dim}", e.dim()),
            });
        }
        Ok(Self { table, dim })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::new(load_precomputed(path)?)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Encoder for PrecomputedEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_sentence(&self, sentence: &Sentence) -> Result<Embedding> {
        self.table
            .get(&sentence.id())
            .cloned()
            .ok_or(Error::UnknownSentence { id: sentence.id() })
    }

    fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::with_capacity(16 + self.table.len() * (8 + self.dim * 8));
        bytes.extend_from_slice(b"precomputed\0");
        bytes.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for (id, e) in &self.table {
            bytes.extend_from_slice(&id.to_le_bytes());
            for v in e.as_slice() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fnv1a64(&bytes)
    }

    fn backend_name(&self) -> &'static str {
        "precomputed"
    }
}

// ---------------------------------------------------------------------------
// Embedding file format
// ---------------------------------------------------------------------------
//
// Binary (.rkv): magic "RKV1", little-endian u32 n, u32 D, then n x D
// little-endian f32, row-major; row i belongs to sentence id i. Values are
// widened to f64 on load.
//
// Text (.tsv): one line per sentence, `id TAB space-separated decimals`.
//
// The loader sniffs the extension.

/// Load a precomputed embedding table. Errors name the offending row.
pub fn load_precomputed(path: &Path) -> Result<BTreeMap<u64, Embedding>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("rkv") => load_embeddings_binary(path),
        Some("tsv") => load_embeddings_text(path),
        other => Err(Error::LoadError {
            path: path.display().to_string(),
            reason: format!(
                "unsupported embedding file extension {:?} (expected .rkv or .tsv)",
                other.unwrap_or("")
            ),
        }),
    }
}

fn load_embeddings_binary(path: &Path) -> Result<BTreeMap<u64, Embedding>> {
    let display = path.display().to_string();
    let mut r = BufReader::new(File::open(path)?);
    let (n, dim) = read_rkv_header(&mut r, &display)?;
    let mut table = BTreeMap::new();
    let mut buf = [0u8; 4];
    for row in 0..n {
        let mut values = Vec::with_capacity(dim);
        for col in 0..dim {
            read_exact(&mut r, &mut buf, &display, "embedding values")?;
            let v = f32::from_le_bytes(buf) as f64;
            if !v.is_finite() {
                return Err(Error::LineError {
                    path: display,
                    line: row + 1,
                    reason: format!("non-finite value in column {col}"),
                });
            }
            values.push(v);
        }
        table.insert(row as u64, Embedding::from_values(values)?);
    }
    Ok(table)
}

fn load_embeddings_text(path: &Path) -> Result<BTreeMap<u64, Embedding>> {
    let display = path.display().to_string();
    let r = BufReader::new(File::open(path)?);
    let mut table = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id_part, values_part) = line.split_once('\t').ok_or_else(|| Error::LineError {
            path: display.clone(),
            line: lineno,
            reason: "expected `id TAB values`".into(),
        })?;
        let id: u64 = id_part.trim().parse().map_err(|_| Error::LineError {
            path: display.clone(),
            line: lineno,
            reason: format!("bad sentence id {id_part:?}"),
        })?;
        let mut values = Vec::new();
        for tok in values_part.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::LineError {
                path: display.clone(),
                line: lineno,
                reason: format!("bad value {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::LineError {
                    path: display.clone(),
                    line: lineno,
                    reason: format!("non-finite value {tok:?}"),
                });
            }
            values.push(v);
        }
        if values.is_empty() {
            return Err(Error::LineError {
                path: display.clone(),
                line: lineno,
                reason: "no embedding values".into(),
            });
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::LineError {
                    path: display.clone(),
                    line: lineno,
                    reason: format!("dimension {} != {d}", values.len()),
                });
            }
            _ => {}
        }
        if table.insert(id, Embedding::from_values(values)?).is_some() {
            return Err(Error::LineError {
                path: display.clone(),
                line: lineno,
                reason: format!("duplicate sentence id {id}"),
            });
        }
    }
    if table.is_empty() {
        return Err(Error::LoadError {
            path: display,
            reason: "no embeddings in file".into(),
        });
    }
    Ok(table)
}

/// Write embeddings in the binary format; row i gets sentence id i.
pub fn save_embeddings_binary(path: &Path, rows: &[Embedding]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("no embeddings to write".into()));
    }
    let dim = rows[0].dim();
    if let Some(bad) = rows.iter().find(|e| e.dim() != dim) {
        return Err(Error::DimensionMismatch {
            left: dim,
            right: bad.dim(),
        });
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_rkv_block(
        &mut w,
        rows.len(),
        dim,
        rows.iter().flat_map(|e| e.as_slice().iter()),
    )?;
    w.flush()?;
    Ok(())
}

pub(crate) fn write_rkv_block<'a, W: Write>(
    w: &mut W,
    n: usize,
    dim: usize,
    values: impl Iterator<Item = &'a f64>,
) -> Result<()> {
    w.write_all(b"RKV1")?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    for v in values {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_rkv_header<R: Read>(r: &mut R, display: &str) -> Result<(usize, usize)> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, display, "magic")?;
    if &magic != b"RKV1" {
        return Err(Error::LoadError {
            path: display.to_string(),
            reason: "bad magic, not an embedding block".into(),
        });
    }
    let n = read_u32(r, display)? as usize;
    let dim = read_u32(r, display)? as usize;
    if n == 0 || dim == 0 {
        return Err(Error::LoadError {
            path: display.to_string(),
            reason: "zero-sized embedding block".into(),
        });
    }
    Ok((n, dim))
}

pub(crate) fn read_exact<R: Read>(
    r: &mut R,
    buf: &mut [u8],
    display: &str,
    what: &str,
) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::LoadError {
        path: display.to_string(),
        reason: format!("truncated file while reading {what}"),
    })
}

pub(crate) fn read_u32<R: Read>(r: &mut R, display: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, display, "header")?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn read_u64<R: Read>(r: &mut R, display: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, display, "header")?;
    Ok(u64::from_le_bytes(buf))
}
