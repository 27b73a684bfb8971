//! Dataset ingestion, tokenization, vocabulary, embeddings and batching.

mod batch;
mod dataset;
mod embeddings;
pub mod synth;
mod tokenize;
mod vocab;

pub use batch::{encode_examples, make_batches, Batch, EncodedExample};
pub use dataset::{load_dataset, parse_dataset, to_csv, write_dataset, Domain, RawExample};
pub use embeddings::{load_embeddings, parse_embeddings, random_table, EmbeddingPair, LoadedTable, OOV_RANGE};
pub use synth::{synth_generate, Lexicon, SynthCorpus, SynthSpec};
pub use tokenize::{tokenize, TokenizedExample};
pub use vocab::{Vocab, PAD, PAD_TOKEN, UNK, UNK_TOKEN};
