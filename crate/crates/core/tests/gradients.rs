use advbench_core::asr::{AcousticModel, InputNorm, ModelDims, Transcript};
use advbench_core::attacks::Victim;
use advbench_core::dsp::AudioClip;
use advbench_core::experiments::{lang_s, synth_speech};
use advbench_core::features::{mfcc_backward, mfcc_forward, FeatureConfig};
use advbench_core::psycho::{masking_thresholds, PsychoLoss};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::{probes, rel_max_err, voiced_clip};

#[test]
fn mfcc_backward_matches_finite_differences() {
    let cfg = FeatureConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for inst in 0..20 {
        let n = rng.random_range(600..2400);
        let x = voiced_clip(&mut rng, n);
        let f = mfcc_forward(&AudioClip::new(x.clone()), &cfg).unwrap();
        let w = Array2::from_shape_fn(f.values.dim(), |_| rng.random_range(-1.0..1.0));
        let g = mfcc_backward(&f, w.view()).unwrap();
        let loss = |s: &[f64]| (&mfcc_forward(&AudioClip::new(s.to_vec()), &cfg).unwrap().values * &w).sum();
        let p = probes(&g, &mut rng, 40);
        let err = rel_max_err(
            &g,
            &p,
            |i, h| {
                let mut s = x.clone();
                s[i] += h;
                loss(&s)
            },
            1e-3,
        );
        assert!(err < 1e-4, "instance {inst}: relative error {err}");
    }
}

#[test]
fn psycho_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for inst in 0..20 {
        let n = rng.random_range(800..2400);
        let x = voiced_clip(&mut rng, n);
        let ev = PsychoLoss::new(masking_thresholds(&AudioClip::new(x)).unwrap()).unwrap();
        let scale = rng.random_range(400.0..3000.0);
        let delta: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
        let (_, g) = ev.eval_grad(&delta).unwrap();
        let p = probes(&g, &mut rng, 40);
        let err = rel_max_err(
            &g,
            &p,
            |i, h| {
                let mut d = delta.clone();
                d[i] += h;
                ev.value(&d).unwrap()
            },
            1e-3,
        );
        assert!(err < 1e-3, "instance {inst}: relative error {err}");
    }
}

#[test]
fn waveform_gradient_through_the_full_chain() {
    let lang = lang_s();
    let words: Vec<&str> = lang.content_words().map(|w| w.spelling.as_str()).collect();
    let cfg = FeatureConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for inst in 0..20 {
        let w1 = words[rng.random_range(0..words.len())];
        let w2 = words[rng.random_range(0..words.len())];
        let clip = synth_speech(&Transcript::from_words([w1, w2]), lang, inst).unwrap();
        let f = mfcc_forward(&clip, &cfg).unwrap();
        let norm = InputNorm::fit([&f.values]);
        let alphabet = lang.alphabet.clone();
        let model = AcousticModel::init(alphabet, cfg, ModelDims::default(), norm, inst);
        let victim = Victim::greedy(&model).unwrap();
        let target = Transcript::new(words[rng.random_range(0..words.len())]);
        let labels = victim.encode_target(&target, clip.len()).unwrap();
        let ev = victim.evaluate(&clip.samples, &labels).unwrap();
        let p = probes(&ev.grad, &mut rng, 24);
        let err = rel_max_err(
            &ev.grad,
            &p,
            |i, h| {
                let mut s = clip.samples.clone();
                s[i] += h;
                victim.evaluate(&s, &labels).unwrap().ctc
            },
            1e-2,
        );
        assert!(err < 1e-3, "instance {inst}: relative error {err}");
    }
}
