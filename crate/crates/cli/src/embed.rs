//! Phrase vectors from a vector file or a trained composer checkpoint.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::Array1;
use phrasecraft::composer::{ComposerModel, Phrase};
use phrasecraft::vecstore::{load_vectors, EmbeddingMatrix, Vocab};

use crate::error::CliError;

pub struct Embedder {
    model: ComposerModel,
    unknown: AtomicUsize,
}

impl Embedder {
    pub fn from_vectors(path: &Path) -> Result<Self, CliError> {
        let (vocab, matrix) = load_vectors(path, None)?;
        Ok(Self::new(ComposerModel::new(vocab, matrix)?))
    }

    pub fn from_model(dir: &Path) -> Result<Self, CliError> {
        Ok(Self::new(ComposerModel::load(dir)?))
    }

    pub fn new(model: ComposerModel) -> Self {
        Self {
            model,
            unknown: AtomicUsize::new(0),
        }
    }

    pub fn vocab(&self) -> &Vocab {
        self.model.vocab()
    }

    pub fn table(&self) -> &EmbeddingMatrix {
        self.model.table()
    }

    /// A multi-word entry stored whole in the table is used as is (projection-free
    /// models only); anything else is mean-pooled over its tokens.
    pub fn embed(&self, p: &Phrase) -> Array1<f64> {
        if p.tokens.len() > 1 && self.model.projection().is_none() {
            let joined = p.tokens.join(" ");
            for key in [p.surface.as_str(), joined.as_str()] {
                if let Some(id) = self.model.vocab().get(key) {
                    return self.model.table().row(id).to_owned();
                }
            }
        }
        let composed = self.model.embed_phrase(p);
        if composed.all_unknown() {
            self.unknown.fetch_add(1, Ordering::Relaxed);
        }
        composed.vector
    }

    /// Phrases embedded so far with no known token.
    pub fn unknown_count(&self) -> usize {
        self.unknown.load(Ordering::Relaxed)
    }
}
