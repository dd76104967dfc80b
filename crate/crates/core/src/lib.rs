//! Corpus-anchored sentence similarity.
//!
//! A sentence's meaning is pinned down not just by its own words but by how
//! it ranks the sentences of a reference corpus. This crate turns base-encoder
//! embeddings into normalized rank vectors over such a corpus (inner products
//! of which equal Spearman's rank correlation), trains a lightweight encoder
//! with a combined contrastive + rank-distillation objective, and scores
//! sentence pairs with a weighted blend of rank-vector and cosine similarity.
//!
//! Module map:
//!
//! - [`numerics`] - dense vector/matrix primitives, cosine, population stats
//! - [`encoder`] - hashed-trigram encoder, precomputed backend, augmentation
//! - [`rank`] - rank vectors, normalization, Spearman oracle
//! - [`corpus`] - corpus index build/persist, exact top-k neighbors
//! - [`training`] - contrastive + filtered rank-MSE losses, analytic
//!   gradients, the training loop
//! - [`evaluation`] - weighted inference, Spearman evaluation, bucket /
//!   overlap / uniformity analyses
//! - [`toydata`] - deterministic synthetic corpus + scored-pair generator

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod numerics;
pub mod rank;
pub mod toydata;
pub mod training;

pub use error::{Error, ErrorKind, Result};
