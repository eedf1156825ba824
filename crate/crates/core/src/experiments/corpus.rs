use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::language::Language;
use super::synth::synth_speech;
use crate::asr::Transcript;
use crate::dsp::AudioClip;
use crate::seed::derive_seed;

pub const MIN_WORDS: usize = 3;
pub const MAX_WORDS: usize = 8;
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Heldout,
}

#[derive(Debug, Clone)]
pub struct Utterance {
    pub index: usize,
    pub transcript: Transcript,
    pub clip: AudioClip,
    pub split: Split,
    /// Seed the clip was synthesised with.
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub language: Language,
    pub utterances: Vec<Utterance>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(move |u| u.split == split)
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }
}

/// Phrases of 3–8 words drawn uniformly from the lexicon, synthesised with
/// per-phrase seeds `derive_seed([seed, index])`. A seeded permutation marks
/// 80 % of the phrases (rounded) as training data.
///
/// Word choices index the lexicon by position and no seed depends on the
/// language, so both toy languages get the same phrases and the same audio
/// for a given seed; only the spelling of the transcripts differs.
pub fn build_corpus(lang: Language, n_phrases: usize, seed: u64) -> Corpus {
    let def = lang.definition();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0xC0]));
    let phrases: Vec<Transcript> = (0..n_phrases)
        .map(|_| {
            let n = rng.random_range(MIN_WORDS..=MAX_WORDS);
            let words: Vec<&str> = (0..n)
                .map(|_| def.lexicon.choose(&mut rng).expect("non-empty lexicon").spelling.as_str())
                .collect();
            Transcript::from_words(words)
        })
        .collect();
    let mut order: Vec<usize> = (0..n_phrases).collect();
    order.shuffle(&mut rng);
    let n_train = (n_phrases as f64 * TRAIN_FRACTION).round() as usize;
    let mut split = vec![Split::Heldout; n_phrases];
    for &i in &order[..n_train] {
        split[i] = Split::Train;
    }
    let utterances = phrases
        .into_par_iter()
        .enumerate()
        .map(|(index, transcript)| {
            let seed = derive_seed(&[seed, index as u64]);
            let clip = synth_speech(&transcript, def, seed).expect("lexicon phrases are synthesisable");
            Utterance {
                index,
                transcript,
                clip,
                split: split[index],
                seed,
            }
        })
        .collect();
    Corpus {
        language: lang,
        utterances,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_contract() {
        let a = build_corpus(Language::D, 30, 5);
        let b = build_corpus(Language::D, 30, 5);
        assert_eq!(a.len(), 30);
        assert_eq!(a.split(Split::Train).count(), 24);
        let def = Language::D.definition();
        for (u, v) in a.utterances.iter().zip(&b.utterances) {
            assert_eq!(u.transcript, v.transcript);
            assert_eq!(u.clip, v.clip);
            assert_eq!(u.split, v.split);
            let n = u.transcript.words().count();
            assert!((MIN_WORDS..=MAX_WORDS).contains(&n));
            assert!(u.transcript.words().all(|w| def.word(w).is_some()));
        }
        let s = build_corpus(Language::S, 30, 5);
        for (u, v) in s.utterances.iter().zip(&a.utterances) {
            assert_eq!(u.clip, v.clip);
            assert_eq!(u.split, v.split);
            assert_eq!(u.transcript.words().count(), v.transcript.words().count());
        }
        let c = build_corpus(Language::D, 30, 6);
        assert_ne!(
            a.utterances.iter().map(|u| &u.transcript).collect::<Vec<_>>(),
            c.utterances.iter().map(|u| &u.transcript).collect::<Vec<_>>()
        );
    }
}
