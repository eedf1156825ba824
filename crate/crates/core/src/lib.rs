//! Attack bench for targeted audio adversarial examples against a small CTC
//! speech recognizer, with psychoacoustic hiding, two synthetic toy
//! languages and the statistics used to compare them.

pub mod dsp;
pub mod features;
pub mod asr;
pub mod psycho;
pub mod seed;
pub mod experiments;
pub mod attacks;
pub mod stats;
