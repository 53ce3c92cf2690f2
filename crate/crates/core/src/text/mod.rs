//! Tokenization, documents and word embeddings.

mod embeddings;
mod tokenize;

pub use embeddings::{EmbeddingTable, Embedded, UNK_RANGE};
pub use tokenize::{tokenize, Document};
