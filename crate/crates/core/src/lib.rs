//! Contrastive phrase embeddings at desk scale.
//!
//! The crate is organised bottom-up:
//!
//! - [`numcore`]: Adam, the warm-up/decay learning-rate schedule, finite-difference
//!   gradient checks and seeded RNG construction.
//! - [`vecstore`]: vocabularies, embedding matrices, the `pvec` file formats and exact
//!   nearest-neighbor search.
//! - [`composer`]: mean-pooled phrase/document vectors over a trainable token table
//!   with an optional projection layer.
//! - [`contrastive`]: triplet construction (corruption, context masking) and triplet-loss
//!   training of a [`composer::ComposerModel`].
//! - [`evalsuite`]: Turney, BiRD and paraphrase-pair protocols, the PPDB overlap filter and
//!   the lexical-diversity metrics.
//! - [`pntm`]: the phrase-based neural topic model.
//! - [`gradcheck`]: the finite-difference suite over every hand-derived gradient.
//!
//! All arithmetic is `f64`. Every stochastic routine takes an explicit RNG.

pub mod composer;
pub mod contrastive;
mod error;
pub mod evalsuite;
pub mod gradcheck;
pub mod numcore;
pub mod pntm;
pub mod vecstore;

pub use error::{Error, Result};
