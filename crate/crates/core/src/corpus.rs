//! The reference corpus: ingest sentences, precompute their embedding matrix
//! with a chosen encoder, persist the result, and answer exact top-k
//! neighbor queries.
//!
//! Index embeddings are stored in 32-bit precision and widened to 64-bit for
//! all similarity math, so a persisted index scores identically to the
//! in-memory one that produced it. An index is immutable after build;
//! rebuilding is the only way to change it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::encoder::{
    read_exact, read_rkv_header, read_u32, read_u64, write_rkv_block, Embedding, Encoder, Sentence,
};
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// An immutable corpus of n sentences with their precomputed embeddings and
/// the fingerprint of the encoder that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusIndex {
    sentences: Vec<Sentence>,
    embeddings: DenseMatrix,
    row_norms: Vec<f64>,
    encoder_fingerprint: u64,
    created_at: u64,
}

/// Side information from a build (currently just skipped blank lines).
#[derive(Debug, Clone, Copy, Default)]
pub struct BuildStats {
    pub skipped_blank_lines: usize,
}

impl CorpusIndex {
    /// Assemble an index from sentences and their embedding rows. Rows are
    /// quantized through 32-bit floats here, matching the on-disk precision.
    pub fn new(
        sentences: Vec<Sentence>,
        rows: Vec<Embedding>,
        encoder_fingerprint: u64,
    ) -> Result<Self> {
        if sentences.len() < 2 {
            return Err(Error::BuildError(format!(
                "need at least 2 sentences, got {}",
                sentences.len()
            )));
        }
        if sentences.len() != rows.len() {
            return Err(Error::BuildError(format!(
                "{} sentences but {} embedding rows",
                sentences.len(),
                rows.len()
            )));
        }
        let dim = rows[0].dim();
        let mut values = Vec::with_capacity(sentences.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.dim() != dim {
                return Err(Error::BuildError(format!(
                    "row {i} has dimension {} != {dim}",
                    row.dim()
                )));
            }
            values.extend(row.as_slice().iter().map(|v| *v as f32 as f64));
        }
        let embeddings = DenseMatrix::new(sentences.len(), dim, values)?;
        let row_norms: Vec<f64> = (0..sentences.len())
            .map(|i| embeddings.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        if let Some(i) = row_norms.iter().position(|n| *n == 0.0) {
            return Err(Error::BuildError(format!(
                "embedding for sentence {i} has zero norm"
            )));
        }
        Ok(Self {
            sentences,
            embeddings,
            row_norms,
            encoder_fingerprint,
            created_at: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn sentence(&self, i: usize) -> &Sentence {
        &self.sentences[i]
    }

    pub fn embeddings(&self) -> &DenseMatrix {
        &self.embeddings
    }

    /// Embedding of corpus row i (a copy).
    pub fn row_embedding(&self, i: usize) -> Embedding {
        Embedding::from_values(self.embeddings.row(i).to_vec())
            .expect("index rows are finite and non-empty")
    }

    pub fn fingerprint(&self) -> u64 {
        self.encoder_fingerprint
    }

    pub fn created_at(&self) -> u64 {
        self.created_at
    }

    /// Refuse to pair this index with an encoder it was not built from.
    pub fn verify_fingerprint(&self, fingerprint: u64) -> Result<()> {
        if self.encoder_fingerprint != fingerprint {
            return Err(Error::FingerprintMismatch {
                index: self.encoder_fingerprint,
                encoder: fingerprint,
            });
        }
        Ok(())
    }

    /// Cosine of a query against every corpus row, in row order.
    pub fn cosine_scores(&self, query: &Embedding) -> Result<Vec<f64>> {
        if query.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                left: query.dim(),
                right: self.dim(),
            });
        }
        let q = query.as_slice();
        let q_norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if q_norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok((0..self.len())
            .map(|i| {
                let row = self.embeddings.row(i);
                let dot: f64 = row.iter().zip(q.iter()).map(|(a, b)| a * b).sum();
                (dot / (self.row_norms[i] * q_norm)).clamp(-1.0, 1.0)
            })
            .collect())
    }
}

/// Read a plain-text corpus (one sentence per line, UTF-8, LF or CRLF) into
/// sentences with consecutive ids starting at 0. Blank lines are skipped;
/// duplicates are retained; order is preserved. Returns the retained
/// sentences, their original 1-based line numbers, and build stats.
pub fn read_corpus_sentences(path: &Path) -> Result<(Vec<Sentence>, Vec<usize>, BuildStats)> {
    let display = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut sentences = Vec::new();
    let mut line_numbers = Vec::new();
    let mut stats = BuildStats::default();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::LineError {
            path: display.clone(),
            line: lineno,
            reason: e.to_string(),
        })?;
        let text = line.trim();
        if text.is_empty() {
            stats.skipped_blank_lines += 1;
            continue;
        }
        sentences.push(Sentence::new(sentences.len() as u64, text)?);
        line_numbers.push(lineno);
    }
    Ok((sentences, line_numbers, stats))
}

/// Build an index from a corpus file: read its sentences and encode each
/// with the given backend. Encoding failures name the offending line.
pub fn build_index(path: &Path, encoder: &dyn Encoder) -> Result<(CorpusIndex, BuildStats)> {
    let display = path.display().to_string();
    let (sentences, line_numbers, stats) = read_corpus_sentences(path)?;
    if sentences.len() < 2 {
        return Err(Error::BuildError(format!(
            "{display}: fewer than 2 usable sentences"
        )));
    }
    let mut rows = Vec::with_capacity(sentences.len());
    for (sentence, lineno) in sentences.iter().zip(line_numbers.iter()) {
        let embedding = encoder
            .encode_sentence(sentence)
            .map_err(|e| Error::LineError {
                path: display.clone(),
                line: *lineno,
                reason: e.to_string(),
            })?;
        rows.push(embedding);
    }
    let index = CorpusIndex::new(sentences, rows, encoder.fingerprint())?;
    Ok((index, stats))
}

// Index file layout: magic "RKI1", u32 n, u32 D, u64 fingerprint, sentence
// block (n length-prefixed UTF-8 strings), embedding block (the embedding
// file format). All integers little-endian.

pub fn save_index(index: &CorpusIndex, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"RKI1")?;
    w.write_all(&(index.len() as u32).to_le_bytes())?;
    w.write_all(&(index.dim() as u32).to_le_bytes())?;
    w.write_all(&index.encoder_fingerprint.to_le_bytes())?;
    for s in &index.sentences {
        let bytes = s.text().as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
    }
    write_rkv_block(
        &mut w,
        index.len(),
        index.dim(),
        index.embeddings.as_slice().iter(),
    )?;
    w.flush()?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<CorpusIndex> {
    let display = path.display().to_string();
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, &display, "magic")?;
    if &magic != b"RKI1" {
        return Err(Error::LoadError {
            path: display,
            reason: "bad magic, not an index file".into(),
        });
    }
    let n = read_u32(&mut r, &display)? as usize;
    let dim = read_u32(&mut r, &display)? as usize;
    let fingerprint = read_u64(&mut r, &display)?;
    if n < 2 || dim == 0 {
        return Err(Error::LoadError {
            path: display,
            reason: format!("bad header: n={n}, dim={dim}"),
        });
    }
    let mut sentences = Vec::with_capacity(n);
    for i in 0..n {
        let len = read_u32(&mut r, &display)? as usize;
        let mut bytes = vec![0u8; len];
        read_exact(&mut r, &mut bytes, &display, "sentence text")?;
        let text = String::from_utf8(bytes).map_err(|_| Error::LoadError {
            path: display.clone(),
            reason: format!("sentence {i} is not valid UTF-8"),
        })?;
        sentences.push(Sentence::new(i as u64, text)?);
    }
    let (block_n, block_dim) = read_rkv_header(&mut r, &display)?;
    if block_n != n || block_dim != dim {
        return Err(Error::LoadError {
            path: display,
            reason: format!(
                "embedding block {block_n}x{block_dim} disagrees with header {n}x{dim}"
            ),
        });
    }
    let mut rows = Vec::with_capacity(n);
    let mut buf = [0u8; 4];
    for i in 0..n {
        let mut values = Vec::with_capacity(dim);
        for _ in 0..dim {
            read_exact(&mut r, &mut buf, &display, "embedding values")?;
            let v = f32::from_le_bytes(buf) as f64;
            if !v.is_finite() {
                return Err(Error::LoadError {
                    path: display,
                    reason: format!("non-finite embedding value in row {i}"),
                });
            }
            values.push(v);
        }
        rows.push(Embedding::from_values(values)?);
    }
    CorpusIndex::new(sentences, rows, fingerprint)
}

/// Exact top-k corpus neighbors by cosine, descending; ties broken by
/// ascending sentence id.
pub fn top_k_neighbors(
    index: &CorpusIndex,
    query: &Embedding,
    k: usize,
) -> Result<Vec<(u64, f64)>> {
    if k == 0 || k > index.len() {
        return Err(Error::KOutOfRange { k, n: index.len() });
    }
    let scores = index.cosine_scores(query)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order
        .into_iter()
        .map(|i| (index.sentence(i).id(), scores[i]))
        .collect())
}

/// Size of the intersection of the two queries' top-k neighbor sets.
pub fn neighbor_overlap(
    index: &CorpusIndex,
    e1: &Embedding,
    e2: &Embedding,
    k: usize,
) -> Result<usize> {
    let a = top_k_neighbors(index, e1, k)?;
    let b = top_k_neighbors(index, e2, k)?;
    let set: std::collections::HashSet<u64> = a.iter().map(|(id, _)| *id).collect();
    Ok(b.iter().filter(|(id, _)| set.contains(id)).count())
}
