use advbench_core::asr::{ModelDims, TrainHyper, Transcript};
use advbench_core::attacks::*;
use advbench_core::dsp::AudioClip;
use advbench_core::experiments::*;
use advbench_core::features::FeatureConfig;
use std::sync::OnceLock;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

fn fixture(name: &str, stage: Stage) -> AttackTrace {
    let text = std::fs::read_to_string(format!("{FIXTURES}/{name}")).unwrap();
    AttackTrace::read_jsonl(stage, &text).unwrap()
}

#[test]
fn handcrafted_traces_yield_hand_derived_metrics() {
    let r = extract_result(&fixture("stage1_two_successes.jsonl", Stage::One)).unwrap();
    assert_eq!((r.fh, r.bh, r.nl_db, r.pb), (Some(2), Some(4), Some(-35.25), Some(1200.0)));
    assert!(r.success && r.alpha.is_none() && r.pl.is_none());

    let r = extract_result(&fixture("stage1_tied_loudness.jsonl", Stage::One)).unwrap();
    assert_eq!((r.fh, r.bh, r.pb), (Some(1), Some(1), Some(0.0)));
    assert_eq!(r.nl_db, Some(f64::NEG_INFINITY));

    let r = extract_result(&fixture("stage1_no_success.jsonl", Stage::One)).unwrap();
    assert!(!r.success && r.fh.is_none() && r.bh.is_none() && r.nl_db.is_none() && r.pb.is_none());

    let r = extract_result(&fixture("stage2_improvements.jsonl", Stage::Two)).unwrap();
    assert_eq!((r.fh, r.bh, r.pl, r.alpha, r.nl_db), (Some(4), Some(6), Some(0.9), Some(0.06), Some(-27.0)));
    assert!(r.pb.is_none());
    let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(json["bh"], 6);
    assert!(json["pb"].is_null());
}

struct Setup {
    model: advbench_core::asr::AcousticModel,
    corpus: Corpus,
}

fn setup() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| {
        let corpus = build_corpus(Language::S, 60, 5);
        let hyper = TrainHyper {
            epochs: 25,
            ..Default::default()
        };
        let (model, _) = fit_model(&corpus, &hyper, ModelDims::default(), FeatureConfig::default()).unwrap();
        Setup { model, corpus }
    })
}

fn peak(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn stage1_successes_decode_exactly_within_the_bound() {
    let s = setup();
    let victim = Victim::greedy(&s.model).unwrap();
    let cfg = Stage1Config {
        epochs: 300,
        ..Default::default()
    };
    for kind in [ExperimentKind::Randomized, ExperimentKind::Negated] {
        let mut spec = ExperimentSpec::new(kind, Language::S, 9);
        spec.n_samples = 2;
        for p in build_experiment(&spec, &s.corpus).unwrap() {
            let labels = victim.encode_target(&p.target, p.original_clip.len()).unwrap();
            let mut checked = 0;
            let out = stage1_cw_observed(&victim, &p.original_clip, &p.target, &cfg, 1, &mut |rec, adv| {
                if rec.success {
                    assert!(peak(adv, &p.original_clip.samples) <= rec.eps.unwrap());
                    let ev = victim.evaluate(adv, &labels).unwrap();
                    assert_eq!(ev.decoded, labels);
                    checked += 1;
                }
            })
            .unwrap();
            let r = &out.result;
            assert!(r.success, "{} -> {}", p.original.as_str(), p.target.as_str());
            assert_eq!(checked, out.trace.records.iter().filter(|r| r.success).count());
            let adv = r.adv_clip.as_ref().unwrap();
            assert_eq!(victim.transcribe(&adv.samples).unwrap(), p.target);
            assert!(peak(&adv.samples, &p.original_clip.samples) <= r.pb.unwrap());
            assert!(r.fh.unwrap() <= r.bh.unwrap());
            let at = |e: usize| out.trace.records[e - 1].nl_db;
            assert!(at(r.bh.unwrap()) <= at(r.fh.unwrap()));
            let eps: Vec<f64> = out.trace.records.iter().map(|r| r.eps.unwrap()).collect();
            assert!(eps.windows(2).all(|w| w[1] <= w[0]));
            assert!(out.trace.records.iter().enumerate().all(|(i, r)| r.epoch == i + 1));
        }
    }
}

#[test]
fn own_transcription_as_target_hits_immediately() {
    let s = setup();
    let victim = Victim::greedy(&s.model).unwrap();
    let clip = &s.corpus.utterances[0].clip;
    let target = victim.transcribe(&clip.samples).unwrap();
    let cfg = Stage1Config {
        epochs: 5,
        ..Default::default()
    };
    let out = stage1_cw(&victim, clip, &target, &cfg, 0).unwrap();
    assert_eq!((out.result.fh, out.result.bh), (Some(1), Some(1)));
    assert_eq!(out.result.nl_db, Some(f64::NEG_INFINITY));
    assert!(out.best_delta.unwrap().iter().all(|&d| d == 0.0));

    // a zero perturbation is below every threshold
    let thr = thresholds_for(clip).unwrap();
    let c2 = Stage2Config {
        epochs: 3,
        ..Default::default()
    };
    let zero = vec![0.0; clip.len()];
    let o2 = stage2_qin(&victim, clip, Some(&zero), &target, &c2, &thr).unwrap();
    assert_eq!((o2.result.bh, o2.result.pl), (Some(1), Some(0.0)));
}

#[test]
fn attacks_are_reproducible() {
    let s = setup();
    let victim = Victim::greedy(&s.model).unwrap();
    let u = &s.corpus.utterances[3];
    let target = Transcript::new("kat sun");
    let cfg = Stage1Config {
        epochs: 40,
        init_noise: 5.0,
        ..Default::default()
    };
    let a = stage1_cw(&victim, &u.clip, &target, &cfg, 42).unwrap();
    let b = stage1_cw(&victim, &u.clip, &target, &cfg, 42).unwrap();
    assert_eq!(a.trace, b.trace);
    let c = stage1_cw(&victim, &u.clip, &target, &cfg, 43).unwrap();
    assert_ne!(a.trace, c.trace);
}

#[test]
fn errors() {
    let s = setup();
    let victim = Victim::greedy(&s.model).unwrap();
    let short = AudioClip::new(vec![0.0; 1200]);
    let long: Transcript = "kat sun hand land sand".into();
    let cfg = Stage1Config::default();
    assert!(matches!(stage1_cw(&victim, &short, &long, &cfg, 0), Err(AttackError::InfeasibleTarget { .. })));
    assert!(matches!(stage1_cw(&victim, &short, &Transcript::new(""), &cfg, 0), Err(AttackError::EmptyTarget)));
    let thr = thresholds_for(&short).unwrap();
    assert!(matches!(
        stage2_qin(&victim, &short, None, &"kat".into(), &Stage2Config::default(), &thr),
        Err(AttackError::Stage1Failed)
    ));
}

#[test]
fn stage2_keeps_the_target_and_never_worsens_the_loss() {
    let s = setup();
    let victim = Victim::greedy(&s.model).unwrap();
    let mut spec = ExperimentSpec::new(ExperimentKind::Negated, Language::S, 4);
    spec.n_samples = 1;
    let p = &build_experiment(&spec, &s.corpus).unwrap()[0];
    let c1 = Stage1Config {
        epochs: 200,
        ..Default::default()
    };
    let o1 = stage1_cw(&victim, &p.original_clip, &p.target, &c1, 0).unwrap();
    assert!(o1.result.success);
    let thr = thresholds_for(&p.original_clip).unwrap();
    let c2 = Stage2Config {
        epochs: 200,
        ..Default::default()
    };
    let o2 = stage2_qin(&victim, &p.original_clip, o1.best_delta.as_deref(), &p.target, &c2, &thr).unwrap();
    let pl1 = o2.trace.records[0].loss_psy.unwrap();
    assert!(o2.result.success);
    assert!(o2.result.pl.unwrap() < pl1);
    let adv = o2.result.adv_clip.as_ref().unwrap();
    assert_eq!(victim.transcribe(&adv.samples).unwrap(), p.target);

    let mut alpha = c2.alpha_init;
    for r in &o2.trace.records {
        assert_eq!(r.alpha, Some(alpha));
        if r.epoch % c2.check_every == 0 {
            assert!(r.success, "alpha check assumes uninterrupted success");
            alpha *= c2.alpha_up;
        }
    }
    assert_eq!(
        o2.trace.records[c2.check_every].alpha.unwrap().to_bits(),
        (0.05f64 * 1.2).to_bits()
    );
}
