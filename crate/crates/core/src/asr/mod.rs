//! Toy character-level CTC recognizer: acoustic model, CTC loss, decoders,
//! character n-gram LM, training and error-rate metrics.

mod alphabet;
mod checkpoint;
pub mod ctc;
mod decode;
mod metrics;
mod model;
mod ngram;
mod train;

use ndarray::Array2;
use thiserror::Error;

pub use alphabet::{Alphabet, Transcript};
pub use checkpoint::{MAGIC as CHECKPOINT_MAGIC, VERSION as CHECKPOINT_VERSION};
pub use ctc::{ctc_loss, log_softmax, min_frames};
pub use decode::{beam_decode, beam_labels, greedy_decode, greedy_labels};
pub use metrics::{cer, char_distance, edit_distance, wer, word_distance};
pub use model::{AcousticModel, InputNorm, ModelCache, ModelDims, Params};
pub use ngram::{ngram_train, NGramModel};
pub use train::{loss_and_grad, train, TrainExample, TrainHyper};

#[derive(Debug, Error)]
pub enum AsrError {
    #[error("shape mismatch: model expects {expected} input features, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("target needs at least {needed} frames but only {frames} are available")]
    InfeasibleTarget { frames: usize, needed: usize },
    #[error("target transcript is empty")]
    EmptyTarget,
    #[error("label {0} is not a valid non-blank output")]
    BadLabel(usize),
    #[error("character {0:?} is not in the alphabet")]
    UnknownCharacter(char),
    #[error("reference transcript is empty")]
    EmptyReference,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Pre-softmax scores, `T × (|alphabet| + 1)`; the last column is blank.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub values: Array2<f64>,
}

impl Logits {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }
}
