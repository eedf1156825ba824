//! Synthetic two-language corpus and the five target-generation families.

mod corpus;
mod generators;
pub mod language;
mod pipeline;
mod synth;

use thiserror::Error;

pub use corpus::{build_corpus, Corpus, Split, Utterance};
pub use generators::{
    build_experiment, flip_candidates, gen_abbreviated, gen_expanded, gen_negated, gen_phoneme_flip, gen_randomized,
    ExperimentKind, ExperimentSpec, Flip, SamplePair,
};
pub use language::{lang_d, lang_s, Language, LexWord, Phoneme, PhonemeClass, SyntheticLanguage};
pub use pipeline::{corpus_cer, corpus_examples, fit_model, window_means};
pub use synth::{clip_len, synth_speech, CROSSFADE_LEN, SEGMENT_LEN};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid language definition: {0}")]
    InvalidLanguage(String),
    #[error("unknown language {0:?}")]
    UnknownLanguage(String),
    #[error("unknown phoneme class {0:?}")]
    UnknownPhonemeClass(String),
    #[error("character {0:?} is not in the language alphabet")]
    UnknownCharacter(char),
    #[error("original transcript is empty")]
    EmptyOriginal,
    #[error("original needs at least {needed} words, has {actual}")]
    TooFewWords { needed: usize, actual: usize },
    #[error("cannot satisfy target constraints: {0}")]
    CannotSatisfy(String),
    #[error("original already contains the negation word")]
    AlreadyNegated,
    #[error("negation index {index} is outside 0..={words}")]
    BadNegationIndex { index: usize, words: usize },
    #[error("no same-class {0} flip yields a lexicon word")]
    NoFlipAvailable(PhonemeClass),
    #[error("corpus yielded {got} usable samples, {wanted} requested")]
    InsufficientCorpus { wanted: usize, got: usize },
    #[error("corpus language {corpus} does not match experiment language {spec}")]
    LanguageMismatch { corpus: Language, spec: Language },
    #[error(transparent)]
    Asr(#[from] crate::asr::AsrError),
    #[error(transparent)]
    Features(#[from] crate::features::FeatureError),
}
