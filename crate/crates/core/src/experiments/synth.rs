//! Formant speech synthesis for the toy languages.
//!
//! Each phoneme is a 100 ms segment holding three sinusoids at its formant
//! frequencies (gliding for diphthongs). Words are separated by a 100 ms
//! pause segment. Neighbouring segments overlap by a 10 ms linear
//! crossfade. Seeded speaker variation scales all formants by up to ±5 %,
//! and low-level Gaussian noise runs under the whole clip.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::language::{Envelope, Phoneme, SyntheticLanguage};
use super::ExperimentError;
use crate::asr::Transcript;
use crate::dsp::{clip_i16, AudioClip, SAMPLE_RATE};

pub const SEGMENT_LEN: usize = 1600;
pub const CROSSFADE_LEN: usize = 160;
pub const NOISE_STD: f64 = 20.0;
/// Peak amplitude of the first formant before envelope and jitter.
pub const BASE_AMPLITUDE: f64 = 5000.0;
const FORMANT_GAINS: [f64; 3] = [1.0, 0.5, 0.3];

enum Segment<'a> {
    Phone(&'a Phoneme),
    Pause,
}

/// Number of samples produced for `n` segments.
pub fn clip_len(n_segments: usize) -> usize {
    if n_segments == 0 {
        0
    } else {
        n_segments * SEGMENT_LEN - (n_segments - 1) * CROSSFADE_LEN
    }
}

fn envelope(kind: Envelope, x: f64) -> f64 {
    match kind {
        Envelope::Flat => 1.0,
        Envelope::Decay => (-3.0 * x).exp(),
        Envelope::Rise => 0.3 + 0.7 * x,
    }
}

pub fn synth_speech(transcript: &Transcript, lang: &SyntheticLanguage, seed: u64) -> Result<AudioClip, ExperimentError> {
    if let Some(c) = transcript.as_str().chars().find(|&c| !lang.alphabet.contains(c)) {
        return Err(ExperimentError::UnknownCharacter(c));
    }
    let mut segments = Vec::new();
    for (i, word) in transcript.words().enumerate() {
        if i > 0 {
            segments.push(Segment::Pause);
        }
        segments.extend(lang.pronounce(word)?.into_iter().map(Segment::Phone));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let speaker = rng.random_range(0.95..1.05);
    let n = clip_len(segments.len());
    let mut out = vec![0.0; n];
    let step = SEGMENT_LEN - CROSSFADE_LEN;
    let sr = SAMPLE_RATE as f64;
    for (s, seg) in segments.iter().enumerate() {
        let Segment::Phone(ph) = seg else { continue };
        let gain = BASE_AMPLITUDE * ph.amplitude * rng.random_range(0.9..1.1);
        let phases: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..2.0 * PI));
        let start = s * step;
        let mut acc = phases;
        for i in 0..SEGMENT_LEN {
            let x = i as f64 / SEGMENT_LEN as f64;
            let fade = if s > 0 && i < CROSSFADE_LEN {
                i as f64 / CROSSFADE_LEN as f64
            } else if s + 1 < segments.len() && i >= SEGMENT_LEN - CROSSFADE_LEN {
                (SEGMENT_LEN - i) as f64 / CROSSFADE_LEN as f64
            } else {
                1.0
            };
            let env = envelope(ph.envelope, x) * fade * gain;
            let mut v = 0.0;
            for j in 0..3 {
                let f = speaker * (ph.formants[j] + (ph.formants_end[j] - ph.formants[j]) * x);
                v += FORMANT_GAINS[j] * acc[j].sin();
                acc[j] += 2.0 * PI * f / sr;
            }
            out[start + i] += env * v;
        }
    }
    let noise = Normal::new(0.0, NOISE_STD).expect("valid noise std");
    for v in &mut out {
        *v = clip_i16((*v + noise.sample(&mut rng)).round());
    }
    Ok(AudioClip::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::fft_real;
    use crate::experiments::language::{lang_d, lang_s};

    #[test]
    fn length_follows_segment_count() {
        // "sand" has 4 phonemes; "hand sand" adds a pause
        let c = synth_speech(&"sand".into(), lang_s(), 1).unwrap();
        assert_eq!(c.len(), 4 * 1600 - 3 * 160);
        let c = synth_speech(&"hand sand".into(), lang_s(), 1).unwrap();
        assert_eq!(c.len(), clip_len(9));
        // five phonemes: 500 ms minus four crossfades
        assert_eq!(clip_len(5), 8000 - 4 * 160);
    }

    #[test]
    fn deterministic_per_seed_and_integer_valued() {
        let t: Transcript = "kat sun".into();
        let a = synth_speech(&t, lang_s(), 9).unwrap();
        let b = synth_speech(&t, lang_s(), 9).unwrap();
        let c = synth_speech(&t, lang_s(), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.samples.iter().all(|v| v.fract() == 0.0));
        let peak = a.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(peak > 3000.0 && peak < 20000.0, "peak {peak}");
    }

    #[test]
    fn rejects_unknown_characters() {
        assert!(matches!(
            synth_speech(&"kat cat".into(), lang_s(), 0),
            Err(ExperimentError::UnknownCharacter('c'))
        ));
        assert!(synth_speech(&"cat".into(), lang_d(), 0).is_ok());
    }

    fn peak_freq(samples: &[f64]) -> f64 {
        let p = fft_real(&samples[..1024]).unwrap().power();
        let k = (1..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        k as f64 * 16000.0 / 1024.0
    }

    #[test]
    fn segments_carry_their_formants() {
        // second segment of "lid" is /i/ (F1 300 Hz), of "lad" is /a/ (F1 800 Hz)
        let c = synth_speech(&"lid".into(), lang_s(), 3).unwrap();
        let f = peak_freq(&c.samples[1440 + 200..]);
        assert!((f - 300.0).abs() < 40.0, "i peak {f}");
        let c = synth_speech(&"lad".into(), lang_s(), 3).unwrap();
        let f = peak_freq(&c.samples[1440 + 200..]);
        assert!((f - 800.0).abs() < 60.0, "a peak {f}");
    }
}
