//! Corpora, vocabularies, pretrained embeddings, voting, agreement and
//! synthetic crowd data.

pub mod corpus;
pub mod embeddings;
pub mod kappa;
pub mod synth;
pub mod vocab;
pub mod vote;

pub use corpus::{format_corpus, load_corpus, parse_corpus, save_corpus, Corpus, LabeledSentence, LoadOptions};
pub use embeddings::{load_embeddings, parse_embeddings, EmbeddingCoverage};
pub use kappa::{cohen_kappa, pairwise_kappa};
pub use synth::{load_profiles, synth_generate, NoiseProfile, SynthCorpora, SynthSpec};
pub use vocab::Vocabulary;
pub use vote::{majority_vote, vote_corpus, VoteSummary};
