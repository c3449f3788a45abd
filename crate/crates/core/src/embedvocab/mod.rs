//! Vocabulary construction, word2vec loading and the embedding lookup layer.

mod embedding;
mod vocab;
mod word2vec;

pub use embedding::{build_embedding, embed, embed_backward, EmbeddingTable, OOV_INIT_RANGE};
pub use vocab::{Vocabulary, PAD, PAD_ID, UNK, UNK_ID};
pub use word2vec::{load_word2vec, read_binary, read_text, RawEmbeddings, Word2VecFormat};
