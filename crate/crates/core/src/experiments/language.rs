//! Toy language definitions and their text format.
//!
//! ```text
//! # comment
//! name S
//! orthography shallow            # or deep
//! negation ni
//! alphabet abdefghiklmnoprstu    # space is implicit
//! phoneme a monophthong 800 1300 2500
//! phoneme ai diphthong 800 1300 2500 300 2300 3000
//! phoneme k consonant 450 2400 3600 amp=0.6 env=decay
//! word cat = c:k a t
//! ```
//!
//! A word line lists its spelling units in order; `grapheme:phoneme` binds a
//! grapheme to a phoneme with a different symbol, and a bare `grapheme` maps
//! to the phoneme of the same name. The units must concatenate to the word.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::asr::Alphabet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Language {
    S,
    D,
}

impl Language {
    pub const ALL: [Language; 2] = [Language::S, Language::D];

    pub fn tag(self) -> u64 {
        match self {
            Language::S => 0x53,
            Language::D => 0x44,
        }
    }

    pub fn definition(self) -> &'static SyntheticLanguage {
        match self {
            Language::S => lang_s(),
            Language::D => lang_d(),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::S => "S",
            Language::D => "D",
        })
    }
}

impl FromStr for Language {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "S" | "s" => Ok(Language::S),
            "D" | "d" => Ok(Language::D),
            other => Err(ExperimentError::UnknownLanguage(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhonemeClass {
    Monophthong,
    Diphthong,
    Consonant,
}

impl PhonemeClass {
    pub const ALL: [PhonemeClass; 3] = [
        PhonemeClass::Monophthong,
        PhonemeClass::Diphthong,
        PhonemeClass::Consonant,
    ];
}

impl fmt::Display for PhonemeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhonemeClass::Monophthong => "monophthong",
            PhonemeClass::Diphthong => "diphthong",
            PhonemeClass::Consonant => "consonant",
        })
    }
}

impl FromStr for PhonemeClass {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "monophthong" => Ok(PhonemeClass::Monophthong),
            "diphthong" => Ok(PhonemeClass::Diphthong),
            "consonant" => Ok(PhonemeClass::Consonant),
            other => Err(ExperimentError::UnknownPhonemeClass(other.to_string())),
        }
    }
}

/// Amplitude contour of a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Envelope {
    Flat,
    Decay,
    Rise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phoneme {
    pub symbol: String,
    pub class: PhonemeClass,
    /// Formant frequencies at the segment start, Hz.
    pub formants: [f64; 3],
    /// Formant frequencies at the segment end; equal to `formants` unless
    /// the phoneme glides.
    pub formants_end: [f64; 3],
    pub amplitude: f64,
    pub envelope: Envelope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexWord {
    pub spelling: String,
    /// `(grapheme, phoneme)` units in order.
    pub units: Vec<(String, String)>,
}

impl LexWord {
    pub fn phonemes(&self) -> impl Iterator<Item = &str> {
        self.units.iter().map(|(_, p)| p.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orthography {
    Shallow,
    Deep,
}

#[derive(Debug, Clone)]
pub struct SyntheticLanguage {
    pub name: String,
    pub orthography: Orthography,
    pub alphabet: Alphabet,
    pub phonemes: Vec<Phoneme>,
    pub lexicon: Vec<LexWord>,
    pub negation_word: String,
    /// grapheme → phonemes it is used for
    pub g2p: BTreeMap<String, BTreeSet<String>>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, ExperimentError> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("expected a number, got {tok:?}")))
}

fn parse_phoneme(toks: &[&str], line: usize) -> Result<Phoneme, ExperimentError> {
    let (symbol, class) = match toks {
        [s, c, ..] => (s.to_string(), c.parse::<PhonemeClass>().map_err(|e| parse_err(line, e.to_string()))?),
        _ => return Err(parse_err(line, "phoneme needs a symbol and a class")),
    };
    let mut nums = Vec::new();
    let mut amplitude = 1.0;
    let mut envelope = Envelope::Flat;
    for tok in &toks[2..] {
        if let Some(v) = tok.strip_prefix("amp=") {
            amplitude = parse_f64(v, line)?;
        } else if let Some(v) = tok.strip_prefix("env=") {
            envelope = match v {
                "flat" => Envelope::Flat,
                "decay" => Envelope::Decay,
                "rise" => Envelope::Rise,
                other => return Err(parse_err(line, format!("unknown envelope {other:?}"))),
            };
        } else {
            nums.push(parse_f64(tok, line)?);
        }
    }
    let expected = if class == PhonemeClass::Diphthong { 6 } else { 3 };
    if nums.len() != expected {
        return Err(parse_err(
            line,
            format!("{class} {symbol:?} needs {expected} formants, got {}", nums.len()),
        ));
    }
    if nums.iter().any(|&f| !(f > 0.0 && f < 8000.0)) {
        return Err(parse_err(line, "formants must lie in (0, 8000) Hz"));
    }
    let formants = [nums[0], nums[1], nums[2]];
    let formants_end = if expected == 6 { [nums[3], nums[4], nums[5]] } else { formants };
    Ok(Phoneme {
        symbol,
        class,
        formants,
        formants_end,
        amplitude,
        envelope,
    })
}

fn parse_word(rest: &[&str], line: usize) -> Result<LexWord, ExperimentError> {
    let (spelling, units) = match rest {
        [w, "=", units @ ..] if !units.is_empty() => (w.to_string(), units),
        _ => return Err(parse_err(line, "expected `word <spelling> = <unit> ...`")),
    };
    let units: Vec<(String, String)> = units
        .iter()
        .map(|u| match u.split_once(':') {
            Some((g, p)) => (g.to_string(), p.to_string()),
            None => (u.to_string(), u.to_string()),
        })
        .collect();
    let joined: String = units.iter().map(|(g, _)| g.as_str()).collect();
    if joined != spelling {
        return Err(parse_err(line, format!("units spell {joined:?}, not {spelling:?}")));
    }
    Ok(LexWord { spelling, units })
}

impl SyntheticLanguage {
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut name = None;
        let mut orthography = None;
        let mut negation = None;
        let mut alphabet = None;
        let mut phonemes: Vec<Phoneme> = Vec::new();
        let mut lexicon: Vec<LexWord> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let toks: Vec<&str> = content.split_whitespace().collect();
            match toks[0] {
                "name" if toks.len() == 2 => name = Some(toks[1].to_string()),
                "orthography" if toks.len() == 2 => {
                    orthography = Some(match toks[1] {
                        "shallow" => Orthography::Shallow,
                        "deep" => Orthography::Deep,
                        other => return Err(parse_err(line, format!("unknown orthography {other:?}"))),
                    })
                }
                "negation" if toks.len() == 2 => negation = Some(toks[1].to_string()),
                "alphabet" if toks.len() == 2 => alphabet = Some(Alphabet::new(toks[1].chars())),
                "phoneme" => phonemes.push(parse_phoneme(&toks[1..], line)?),
                "word" => lexicon.push(parse_word(&toks[1..], line)?),
                other => return Err(parse_err(line, format!("unexpected directive {other:?}"))),
            }
        }
        let missing = |what: &str| parse_err(0, format!("missing `{what}` line"));
        let lang = Self {
            name: name.ok_or_else(|| missing("name"))?,
            orthography: orthography.ok_or_else(|| missing("orthography"))?,
            alphabet: alphabet.ok_or_else(|| missing("alphabet"))?,
            negation_word: negation.ok_or_else(|| missing("negation"))?,
            g2p: lexicon
                .iter()
                .flat_map(|w| w.units.iter().cloned())
                .fold(BTreeMap::new(), |mut m, (g, p)| {
                    m.entry(g).or_insert_with(BTreeSet::new).insert(p);
                    m
                }),
            phonemes,
            lexicon,
        };
        lang.validate()?;
        Ok(lang)
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        let invalid = |msg: String| ExperimentError::InvalidLanguage(msg);
        let mut symbols = BTreeSet::new();
        for p in &self.phonemes {
            if !symbols.insert(p.symbol.as_str()) {
                return Err(invalid(format!("phoneme {:?} declared twice", p.symbol)));
            }
        }
        let mut seen = BTreeSet::new();
        for w in &self.lexicon {
            if !seen.insert(w.spelling.as_str()) {
                return Err(invalid(format!("word {:?} listed twice", w.spelling)));
            }
            if let Some(c) = w.spelling.chars().find(|&c| c == ' ' || !self.alphabet.contains(c)) {
                return Err(invalid(format!("word {:?} uses {c:?} outside the alphabet", w.spelling)));
            }
            if let Some(p) = w.phonemes().find(|p| !symbols.contains(p)) {
                return Err(invalid(format!("word {:?} uses unknown phoneme {p:?}", w.spelling)));
            }
        }
        if self.word(&self.negation_word).is_none() {
            return Err(invalid(format!("negation {:?} is not in the lexicon", self.negation_word)));
        }
        match self.orthography {
            Orthography::Shallow if !self.is_injective() => {
                Err(invalid("shallow orthography must map graphemes to phonemes one-to-one".into()))
            }
            Orthography::Deep if self.is_injective() => {
                Err(invalid("deep orthography needs two graphemes sharing a phoneme".into()))
            }
            _ => Ok(()),
        }
    }

    /// True when every grapheme has one phoneme and no two graphemes share
    /// one.
    pub fn is_injective(&self) -> bool {
        let mut owners: BTreeMap<&str, usize> = BTreeMap::new();
        for ps in self.g2p.values() {
            if ps.len() != 1 {
                return false;
            }
            for p in ps {
                *owners.entry(p.as_str()).or_default() += 1;
            }
        }
        owners.values().all(|&n| n == 1)
    }

    /// Phonemes written with more than one grapheme.
    pub fn shared_phonemes(&self) -> BTreeMap<String, BTreeSet<String>> {
        let mut by_phoneme: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (g, ps) in &self.g2p {
            for p in ps {
                by_phoneme.entry(p.clone()).or_default().insert(g.clone());
            }
        }
        by_phoneme.retain(|_, gs| gs.len() > 1);
        by_phoneme
    }

    pub fn word(&self, spelling: &str) -> Option<&LexWord> {
        self.lexicon.iter().find(|w| w.spelling == spelling)
    }

    pub fn phoneme(&self, symbol: &str) -> Option<&Phoneme> {
        self.phonemes.iter().find(|p| p.symbol == symbol)
    }

    pub fn class_of(&self, symbol: &str) -> Option<PhonemeClass> {
        self.phoneme(symbol).map(|p| p.class)
    }

    /// Lexicon words other than the negation word.
    pub fn content_words(&self) -> impl Iterator<Item = &LexWord> {
        self.lexicon.iter().filter(|w| w.spelling != self.negation_word)
    }

    /// Phonemes of an arbitrary word: the lexicon entry if there is one,
    /// otherwise a longest-match grapheme parse using the first phoneme
    /// each grapheme maps to.
    pub fn pronounce(&self, word: &str) -> Result<Vec<&Phoneme>, ExperimentError> {
        if let Some(c) = word.chars().find(|&c| !self.alphabet.contains(c)) {
            return Err(ExperimentError::UnknownCharacter(c));
        }
        let symbols: Vec<&str> = match self.word(word) {
            Some(w) => w.phonemes().collect(),
            None => {
                let longest = self.g2p.keys().map(|g| g.len()).max().unwrap_or(1);
                let mut out = Vec::new();
                let mut rest = word;
                while !rest.is_empty() {
                    let hit = (1..=longest.min(rest.len()))
                        .rev()
                        .filter(|&n| rest.is_char_boundary(n))
                        .find_map(|n| self.g2p.get(&rest[..n]).map(|ps| (n, ps)));
                    let (n, ps) = hit.ok_or_else(|| {
                        ExperimentError::UnknownCharacter(rest.chars().next().unwrap_or(' '))
                    })?;
                    out.push(ps.iter().next().expect("non-empty phoneme set").as_str());
                    rest = &rest[n..];
                }
                out
            }
        };
        symbols
            .into_iter()
            .map(|s| {
                self.phoneme(s)
                    .ok_or_else(|| ExperimentError::InvalidLanguage(format!("unknown phoneme {s:?}")))
            })
            .collect()
    }
}

pub fn lang_s() -> &'static SyntheticLanguage {
    static LANG: std::sync::OnceLock<SyntheticLanguage> = std::sync::OnceLock::new();
    LANG.get_or_init(|| SyntheticLanguage::parse(include_str!("../../data/lang_s.txt")).expect("built-in language S"))
}

pub fn lang_d() -> &'static SyntheticLanguage {
    static LANG: std::sync::OnceLock<SyntheticLanguage> = std::sync::OnceLock::new();
    LANG.get_or_init(|| SyntheticLanguage::parse(include_str!("../../data/lang_d.txt")).expect("built-in language D"))
}
