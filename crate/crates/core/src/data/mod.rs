//! Corpus ingestion, vocabulary, batching, feature files and the
//! synthetic triplet generator.

pub mod collate;
pub mod corpus;
pub mod features;
pub mod synth;
pub mod vocab;

pub use collate::{collate, collate_one};
pub use corpus::{load_corpus, Corpus, Splits, Triplet, TripletRecord};
pub use features::{load_image_features, write_features, FeatureTable};
pub use synth::{generate_synthetic_corpus, write_synthetic_corpus, SynthSpec};
pub use vocab::{build_vocab, is_reserved, Vocabulary};
