//! Multilingual subword word vectors at desk scale.
//!
//! The crate covers the whole path from raw text to evaluated vectors:
//! per-line language identification and filtering ([`langid`], [`corpus`]),
//! hash-based line deduplication and tokenization ([`corpus`]), vocabulary
//! and character n-gram hashing ([`dict`]), skipgram and position-weighted
//! CBOW models trained with negative sampling ([`model`], [`trainer`]),
//! word-analogy evaluation ([`eval`]) and file formats ([`formats`]).
//!
//! With the default `parallel` feature, training, language prediction and
//! evaluation fan out over a rayon thread pool. Without it everything runs
//! sequentially with identical results for single-worker training.

pub mod corpus;
pub mod dict;
pub mod error;
pub mod eval;
pub mod formats;
pub mod hash;
pub mod langid;
pub mod math;
pub mod model;
pub mod trainer;

pub use error::{Error, Result};
