//! Target generators for the five experiment families and the experiment
//! builder that pairs them with corpus originals.
//!
//! Lengths are measured in characters of the transcript, spaces included.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::Corpus;
use super::language::{Language, PhonemeClass, SyntheticLanguage};
use super::ExperimentError;
use crate::asr::Transcript;
use crate::dsp::AudioClip;
use crate::seed::derive_seed;

const ATTEMPTS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentKind {
    Randomized,
    Expanded,
    Abbreviated,
    Negated,
    PhonemeFlip(PhonemeClass),
}

impl ExperimentKind {
    pub fn number(self) -> u8 {
        match self {
            ExperimentKind::Randomized => 1,
            ExperimentKind::Expanded => 2,
            ExperimentKind::Abbreviated => 3,
            ExperimentKind::Negated => 4,
            ExperimentKind::PhonemeFlip(_) => 5,
        }
    }

    /// Kinds 1–4; kind 5 needs a phoneme class.
    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(ExperimentKind::Randomized),
            2 => Some(ExperimentKind::Expanded),
            3 => Some(ExperimentKind::Abbreviated),
            4 => Some(ExperimentKind::Negated),
            _ => None,
        }
    }

    pub fn default_samples(self) -> usize {
        match self {
            ExperimentKind::PhonemeFlip(_) => 7,
            _ => 40,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExperimentKind::PhonemeFlip(c) => write!(f, "5-{c}"),
            k => write!(f, "{}", k.number()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub language: Language,
    pub n_samples: usize,
    pub seed: u64,
    /// Word index the negation word is inserted at; `None` means before the
    /// final word.
    pub negation_index: Option<usize>,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, language: Language, seed: u64) -> Self {
        Self {
            kind,
            language,
            n_samples: kind.default_samples(),
            seed,
            negation_index: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SamplePair {
    pub kind: ExperimentKind,
    pub language: Language,
    /// Position in the experiment, 0-based.
    pub index: usize,
    pub corpus_index: usize,
    pub original_clip: AudioClip,
    pub original: Transcript,
    pub target: Transcript,
    /// Word indices of the target that differ from the original.
    pub changed: Vec<usize>,
}

fn char_len(words: &[&str]) -> usize {
    words.iter().map(|w| w.chars().count()).sum::<usize>() + words.len().saturating_sub(1)
}

/// Random phrase from `pool` with character length in `[lo, hi]`. Words
/// are appended until the length reaches `lo`; attempts that overshoot `hi`
/// are discarded.
fn fresh_phrase<'a>(
    pool: &[&'a str],
    lo: usize,
    hi: usize,
    rng: &mut ChaCha8Rng,
    accept: impl Fn(&[&str]) -> bool,
) -> Option<Vec<&'a str>> {
    if pool.is_empty() || lo > hi {
        return None;
    }
    for _ in 0..ATTEMPTS {
        let mut words: Vec<&str> = Vec::new();
        while char_len(&words) < lo {
            words.push(pool.choose(rng).expect("non-empty pool"));
        }
        if char_len(&words) <= hi && accept(&words) {
            return Some(words);
        }
    }
    None
}

fn check_original(original: &Transcript, lang: &SyntheticLanguage) -> Result<(), ExperimentError> {
    if original.words().next().is_none() {
        return Err(ExperimentError::EmptyOriginal);
    }
    if let Some(c) = original.as_str().chars().find(|&c| !lang.alphabet.contains(c)) {
        return Err(ExperimentError::UnknownCharacter(c));
    }
    Ok(())
}

fn window(len: usize, lo: f64, hi: f64) -> (usize, usize) {
    ((len as f64 * lo).ceil() as usize, (len as f64 * hi).floor() as usize)
}

/// Fresh phrase of the same character length ±10 % sharing no word with the
/// original.
pub fn gen_randomized(original: &Transcript, lang: &SyntheticLanguage, seed: u64) -> Result<Transcript, ExperimentError> {
    check_original(original, lang)?;
    let used: BTreeSet<&str> = original.words().collect();
    let pool: Vec<&str> = lang
        .content_words()
        .map(|w| w.spelling.as_str())
        .filter(|w| !used.contains(w))
        .collect();
    let (lo, hi) = window(original.char_len(), 0.9, 1.1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fresh_phrase(&pool, lo, hi, &mut rng, |_| true)
        .map(Transcript::from_words)
        .ok_or_else(|| ExperimentError::CannotSatisfy(format!("no disjoint phrase of {lo}..={hi} characters")))
}

/// Phrase about 50 % longer than the original (within 1.4–1.6×).
pub fn gen_expanded(original: &Transcript, lang: &SyntheticLanguage, seed: u64) -> Result<Transcript, ExperimentError> {
    check_original(original, lang)?;
    let pool: Vec<&str> = lang.content_words().map(|w| w.spelling.as_str()).collect();
    let (lo, hi) = window(original.char_len(), 1.4, 1.6);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fresh_phrase(&pool, lo, hi, &mut rng, |w| Transcript::from_words(w.iter().copied()) != *original)
        .map(Transcript::from_words)
        .ok_or_else(|| ExperimentError::CannotSatisfy(format!("no phrase of {lo}..={hi} characters")))
}

/// Phrase about half the original's length (within 0.4–0.6×).
pub fn gen_abbreviated(original: &Transcript, lang: &SyntheticLanguage, seed: u64) -> Result<Transcript, ExperimentError> {
    check_original(original, lang)?;
    let n = original.words().count();
    if n < 2 {
        return Err(ExperimentError::TooFewWords { needed: 2, actual: n });
    }
    let pool: Vec<&str> = lang.content_words().map(|w| w.spelling.as_str()).collect();
    let (lo, hi) = window(original.char_len(), 0.4, 0.6);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fresh_phrase(&pool, lo.max(1), hi, &mut rng, |_| true)
        .map(Transcript::from_words)
        .ok_or_else(|| ExperimentError::CannotSatisfy(format!("no phrase of {lo}..={hi} characters")))
}

/// Inserts the negation word at `index` (default: before the final word).
pub fn gen_negated(original: &Transcript, lang: &SyntheticLanguage, index: Option<usize>) -> Result<Transcript, ExperimentError> {
    check_original(original, lang)?;
    let mut words: Vec<&str> = original.words().collect();
    if words.contains(&lang.negation_word.as_str()) {
        return Err(ExperimentError::AlreadyNegated);
    }
    let at = index.unwrap_or(words.len() - 1);
    if at > words.len() {
        return Err(ExperimentError::BadNegationIndex {
            index: at,
            words: words.len(),
        });
    }
    words.insert(at, &lang.negation_word);
    Ok(Transcript::from_words(words))
}

/// One candidate single-phoneme substitution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flip {
    pub word_index: usize,
    pub from: String,
    pub to: String,
    pub phoneme_index: usize,
}

/// Lexicon words reachable from `word` by changing exactly one phoneme of
/// `class` into another phoneme of the same class.
pub fn flip_candidates<'a>(word: &str, lang: &'a SyntheticLanguage, class: PhonemeClass) -> Vec<(&'a str, usize)> {
    let Some(entry) = lang.word(word) else {
        return Vec::new();
    };
    let src: Vec<&str> = entry.phonemes().collect();
    lang.content_words()
        .filter(|w| w.spelling != word)
        .filter_map(|w| {
            let dst: Vec<&str> = w.phonemes().collect();
            if dst.len() != src.len() {
                return None;
            }
            let diff: Vec<usize> = (0..src.len()).filter(|&i| src[i] != dst[i]).collect();
            match diff.as_slice() {
                [i] if lang.class_of(src[*i]) == Some(class) && lang.class_of(dst[*i]) == Some(class) => {
                    Some((w.spelling.as_str(), *i))
                }
                _ => None,
            }
        })
        .collect()
}

/// Replaces one word by a lexicon word that differs in exactly one phoneme
/// of `class`.
pub fn gen_phoneme_flip(
    original: &Transcript,
    lang: &SyntheticLanguage,
    class: PhonemeClass,
    seed: u64,
) -> Result<(Transcript, Flip), ExperimentError> {
    check_original(original, lang)?;
    let words: Vec<&str> = original.words().collect();
    let mut options = Vec::new();
    for (wi, w) in words.iter().enumerate() {
        for (to, pi) in flip_candidates(w, lang, class) {
            options.push(Flip {
                word_index: wi,
                from: w.to_string(),
                to: to.to_string(),
                phoneme_index: pi,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flip = options.choose(&mut rng).cloned().ok_or(ExperimentError::NoFlipAvailable(class))?;
    let mut out = words.clone();
    out[flip.word_index] = &flip.to;
    Ok((Transcript::from_words(out), flip))
}

fn generate(
    spec: &ExperimentSpec,
    lang: &SyntheticLanguage,
    original: &Transcript,
    seed: u64,
) -> Result<(Transcript, Vec<usize>), ExperimentError> {
    let all = |t: &Transcript| (0..t.words().count()).collect::<Vec<_>>();
    match spec.kind {
        ExperimentKind::Randomized => gen_randomized(original, lang, seed).map(|t| {
            let c = all(&t);
            (t, c)
        }),
        ExperimentKind::Expanded => gen_expanded(original, lang, seed).map(|t| {
            let c = all(&t);
            (t, c)
        }),
        ExperimentKind::Abbreviated => gen_abbreviated(original, lang, seed).map(|t| {
            let c = all(&t);
            (t, c)
        }),
        ExperimentKind::Negated => {
            let t = gen_negated(original, lang, spec.negation_index)?;
            let at = spec.negation_index.unwrap_or(original.words().count() - 1);
            Ok((t, vec![at]))
        }
        ExperimentKind::PhonemeFlip(class) => {
            gen_phoneme_flip(original, lang, class, seed).map(|(t, f)| (t, vec![f.word_index]))
        }
    }
}

/// Walks the corpus in a seeded order and pairs originals with generated
/// targets until `n_samples` pairs exist. Originals whose target cannot be
/// generated are skipped and logged.
pub fn build_experiment(spec: &ExperimentSpec, corpus: &Corpus) -> Result<Vec<SamplePair>, ExperimentError> {
    if corpus.language != spec.language {
        return Err(ExperimentError::LanguageMismatch {
            corpus: corpus.language,
            spec: spec.language,
        });
    }
    let lang = spec.language.definition();
    let class_tag = match spec.kind {
        ExperimentKind::PhonemeFlip(c) => c as u64 + 1,
        _ => 0,
    };
    let base = [spec.seed, spec.language.tag(), spec.kind.number() as u64, class_tag];
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&base)));
    let mut pairs = Vec::with_capacity(spec.n_samples);
    for ci in order {
        if pairs.len() == spec.n_samples {
            break;
        }
        let u = &corpus.utterances[ci];
        let seed = derive_seed(&[base[0], base[1], base[2], base[3], ci as u64]);
        match generate(spec, lang, &u.transcript, seed) {
            Ok((target, changed)) => pairs.push(SamplePair {
                kind: spec.kind,
                language: spec.language,
                index: pairs.len(),
                corpus_index: ci,
                original_clip: u.clip.clone(),
                original: u.transcript.clone(),
                target,
                changed,
            }),
            Err(e) => log::info!(
                "experiment {} ({}): skipping {:?}: {e}",
                spec.kind,
                spec.language,
                u.transcript.as_str()
            ),
        }
    }
    if pairs.len() < spec.n_samples {
        return Err(ExperimentError::InsufficientCorpus {
            wanted: spec.n_samples,
            got: pairs.len(),
        });
    }
    Ok(pairs)
}
