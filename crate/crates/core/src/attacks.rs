//! The two attack stages and the extraction of their metrics.
//!
//! Stage 1 descends the CTC loss of the target inside a shrinking
//! L∞ box. Stage 2 starts from the Stage-1 perturbation and trades CTC
//! loss against the psychoacoustic loss with an adaptive weight α.
//!
//! The optimisation variable `delta` is real-valued, but every forward pass
//! evaluates the clip that would actually be written to disk:
//! `clamp16(original + trunc(delta))`. Gradients pass straight through the
//! truncation and clamp. Since originals are integer-valued, the saved WAV
//! reproduces exactly the decision seen during the attack, and truncation
//! towards zero keeps `|adv − original| ≤ |delta|`.

use std::io::Write;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::asr::{self, AcousticModel, AsrError, NGramModel, Transcript};
use crate::dsp::{self, clip_i16, AudioClip};
use crate::features::{FeatureError, Frontend};
use crate::psycho::{self, MaskingThreshold, PsychoError, PsychoLoss};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("target needs at least {needed} frames but the clip has {frames}")]
    InfeasibleTarget { frames: usize, needed: usize },
    #[error("attack target is empty")]
    EmptyTarget,
    #[error("original clip is empty")]
    EmptyClip,
    #[error("stage 2 needs a successful stage-1 perturbation")]
    Stage1Failed,
    #[error("perturbation has {actual} samples, clip has {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("trace is empty")]
    EmptyTrace,
    #[error("bad attack config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Asr(#[from] AsrError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Psycho(#[from] PsychoError),
    #[error(transparent)]
    Dsp(#[from] dsp::DspError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// `delta -= lr · sign(grad)`
    Signed,
    /// `delta -= lr · grad`
    Plain,
}

impl Optimizer {
    fn step(self, delta: &mut [f64], grad: &[f64], lr: f64) {
        for (d, &g) in delta.iter_mut().zip(grad) {
            *d -= match self {
                Optimizer::Signed if g > 0.0 => lr,
                Optimizer::Signed if g < 0.0 => -lr,
                Optimizer::Signed => 0.0,
                Optimizer::Plain => lr * g,
            };
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stage1Config {
    pub epochs: usize,
    pub lr: f64,
    pub eps_init: f64,
    pub eps_shrink: f64,
    pub optimizer: Optimizer,
    /// Half-width of the seeded uniform initial perturbation; 0 starts from
    /// the clean clip.
    pub init_noise: f64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            epochs: 1000,
            lr: 10.0,
            eps_init: 2000.0,
            eps_shrink: 0.8,
            optimizer: Optimizer::Signed,
            init_noise: 0.0,
        }
    }
}

impl Stage1Config {
    pub fn validate(&self) -> Result<(), AttackError> {
        let bad = |m: &str| Err(AttackError::BadConfig(m.into()));
        if self.epochs < 1 {
            return bad("stage1.epochs must be at least 1");
        }
        if !(self.eps_shrink > 0.0 && self.eps_shrink < 1.0) {
            return bad("stage1.eps_shrink must lie in (0, 1)");
        }
        if !(self.eps_init > 0.0) || !(self.lr > 0.0) || !(self.init_noise >= 0.0) {
            return bad("stage1.eps_init and stage1.lr must be positive, init_noise non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stage2Config {
    pub epochs: usize,
    pub lr: f64,
    pub alpha_init: f64,
    pub alpha_up: f64,
    pub alpha_down: f64,
    pub check_every: usize,
    pub optimizer: Optimizer,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            epochs: 4000,
            lr: 1.0,
            alpha_init: 0.05,
            alpha_up: 1.2,
            alpha_down: 0.8,
            check_every: 50,
            optimizer: Optimizer::Plain,
        }
    }
}

impl Stage2Config {
    pub fn validate(&self) -> Result<(), AttackError> {
        let bad = |m: &str| Err(AttackError::BadConfig(m.into()));
        if self.epochs < 1 || self.check_every < 1 {
            return bad("stage2.epochs and stage2.check_every must be at least 1");
        }
        if !(self.alpha_up > 1.0 && 1.0 > self.alpha_down && self.alpha_down > 0.0) {
            return bad("stage2 needs alpha_up > 1 > alpha_down > 0");
        }
        if !(self.alpha_init > 0.0) || !(self.lr > 0.0) {
            return bad("stage2.alpha_init and stage2.lr must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
        }
    }
}

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn null_as_neg_inf<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
}

/// One epoch of an attack, evaluated before that epoch's update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_ctc: f64,
    pub loss_psy: Option<f64>,
    pub success: bool,
    /// Box bound in force (Stage 1 only).
    pub eps: Option<f64>,
    /// Psychoacoustic weight in force (Stage 2 only).
    pub alpha: Option<f64>,
    /// Noise loudness in dB; an all-zero perturbation is `-inf`, written as
    /// `null` in JSON.
    #[serde(serialize_with = "finite_or_null", deserialize_with = "null_as_neg_inf")]
    pub nl_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackTrace {
    pub stage: Stage,
    pub records: Vec<EpochRecord>,
}

impl AttackTrace {
    pub fn new(stage: Stage) -> Self {
        Self {
            stage,
            records: Vec::new(),
        }
    }

    /// JSON Lines, one record per epoch.
    pub fn write_jsonl(&self, w: &mut impl Write) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut *w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(stage: Stage, text: &str) -> Result<Self, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { stage, records })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackResult {
    pub stage: Stage,
    pub fh: Option<usize>,
    pub bh: Option<usize>,
    #[serde(serialize_with = "opt_finite_or_null")]
    pub nl_db: Option<f64>,
    /// Half-width `eps` of the bound `(−eps, +eps)`, Stage 1 only.
    pub pb: Option<f64>,
    pub alpha: Option<f64>,
    pub pl: Option<f64>,
    pub success: bool,
    #[serde(skip)]
    pub adv_clip: Option<AudioClip>,
}

fn opt_finite_or_null<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_finite() => s.serialize_f64(*x),
        _ => s.serialize_none(),
    }
}

impl AttackResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("attack results serialise")
    }
}

pub fn update_alpha(alpha: f64, success: bool, cfg: &Stage2Config) -> f64 {
    if success {
        alpha * cfg.alpha_up
    } else {
        alpha * cfg.alpha_down
    }
}

pub fn update_epsilon(eps: f64, delta: &[f64], success: bool, cfg: &Stage1Config) -> f64 {
    if !success {
        return eps;
    }
    let peak = delta.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    eps.min(peak) * cfg.eps_shrink
}

/// Epochs that count as hits. In Stage 1 every successful epoch is a hit.
/// In Stage 2 the first record evaluates the Stage-1 perturbation; a later
/// epoch is a hit when it succeeds with a psychoacoustic loss strictly below
/// both that starting value and every earlier hit. The first record itself
/// only counts when its loss is already zero.
pub fn hits(trace: &AttackTrace) -> Vec<usize> {
    match trace.stage {
        Stage::One => trace.records.iter().filter(|r| r.success).map(|r| r.epoch).collect(),
        Stage::Two => {
            let mut out = Vec::new();
            let Some(first) = trace.records.first() else {
                return out;
            };
            let pl = |r: &EpochRecord| r.loss_psy.unwrap_or(f64::INFINITY);
            let mut best = pl(first);
            if first.success && best == 0.0 {
                out.push(first.epoch);
            }
            for r in &trace.records[1..] {
                if r.success && pl(r) < best {
                    best = pl(r);
                    out.push(r.epoch);
                }
            }
            out
        }
    }
}

/// FH, BH and the metrics reported at BH, as a pure function of the trace.
pub fn extract_result(trace: &AttackTrace) -> Result<AttackResult, AttackError> {
    if trace.records.is_empty() {
        return Err(AttackError::EmptyTrace);
    }
    let hit_epochs = hits(trace);
    let at = |e: usize| &trace.records[e - trace.records[0].epoch];
    let fh = hit_epochs.first().copied();
    let bh = match trace.stage {
        Stage::One => hit_epochs
            .iter()
            .copied()
            .min_by(|&a, &b| at(a).nl_db.total_cmp(&at(b).nl_db).then(a.cmp(&b))),
        Stage::Two => hit_epochs.last().copied(),
    };
    let last = hit_epochs.last().copied();
    Ok(AttackResult {
        stage: trace.stage,
        fh,
        bh,
        nl_db: bh.map(|e| at(e).nl_db),
        pb: match trace.stage {
            Stage::One => last.and_then(|e| at(e).eps),
            Stage::Two => None,
        },
        alpha: bh.and_then(|e| at(e).alpha),
        pl: bh.and_then(|e| at(e).loss_psy),
        success: fh.is_some(),
        adv_clip: None,
    })
}

/// How attack success is judged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Judge {
    Greedy,
    Beam { width: usize, lm_weight: f64 },
}

/// A trained model wrapped for attacking: feature front end, CTC loss and
/// the success judge.
#[derive(Debug, Clone)]
pub struct Victim<'a> {
    pub model: &'a AcousticModel,
    pub frontend: Frontend,
    pub lm: Option<&'a NGramModel>,
    pub judge: Judge,
}

/// Loss, waveform gradient and decode of one clip.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub ctc: f64,
    pub grad: Vec<f64>,
    pub decoded: Vec<usize>,
}

impl<'a> Victim<'a> {
    pub fn greedy(model: &'a AcousticModel) -> Result<Self, AttackError> {
        Ok(Self {
            model,
            frontend: Frontend::new(model.feature_cfg)?,
            lm: None,
            judge: Judge::Greedy,
        })
    }

    pub fn with_beam(model: &'a AcousticModel, lm: &'a NGramModel, width: usize, lm_weight: f64) -> Result<Self, AttackError> {
        Ok(Self {
            model,
            frontend: Frontend::new(model.feature_cfg)?,
            lm: Some(lm),
            judge: Judge::Beam { width, lm_weight },
        })
    }

    fn decode_labels(&self, logits: &asr::Logits) -> Vec<usize> {
        let blank = self.model.alphabet.blank();
        match self.judge {
            Judge::Greedy => asr::greedy_labels(logits, blank),
            Judge::Beam { width, lm_weight } => asr::beam_labels(logits, blank, self.lm, width, lm_weight),
        }
    }

    pub fn transcribe(&self, samples: &[f64]) -> Result<Transcript, AttackError> {
        let f = self.frontend.forward(samples);
        let (logits, _) = self.model.forward(f.values.view())?;
        Ok(Transcript::new(self.model.alphabet.decode(&self.decode_labels(&logits))))
    }

    pub fn encode_target(&self, target: &Transcript, n_samples: usize) -> Result<Vec<usize>, AttackError> {
        if target.is_empty() {
            return Err(AttackError::EmptyTarget);
        }
        let labels = self.model.alphabet.encode(target.as_str())?;
        let frames = self.frontend.n_frames(n_samples);
        let needed = asr::min_frames(&labels);
        if needed > frames {
            return Err(AttackError::InfeasibleTarget { frames, needed });
        }
        Ok(labels)
    }

    /// CTC loss of `labels` on `samples`, its gradient with respect to the
    /// samples, and the judged decode.
    pub fn evaluate(&self, samples: &[f64], labels: &[usize]) -> Result<Evaluation, AttackError> {
        let f = self.frontend.forward(samples);
        let (logits, cache) = self.model.forward(f.values.view())?;
        let (ctc, grad_logits) = asr::ctc_loss(&logits, labels, self.model.alphabet.blank())?;
        let decoded = self.decode_labels(&logits);
        let (grad_feat, _): (Array2<f64>, _) = self.model.backward(&cache, grad_logits.view(), false);
        let grad = self.frontend.backward(&f, grad_feat.view())?;
        Ok(Evaluation { ctc, grad, decoded })
    }
}

/// The clip evaluated for a given perturbation, and the perturbation it
/// actually applies.
pub fn apply_delta(original: &AudioClip, delta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let adv: Vec<f64> = original
        .samples
        .iter()
        .zip(delta)
        .map(|(&x, &d)| clip_i16(x + d.trunc()))
        .collect();
    let eff = adv.iter().zip(&original.samples).map(|(a, x)| a - x).collect();
    (adv, eff)
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub result: AttackResult,
    pub trace: AttackTrace,
    /// Applied perturbation at BH (integer-valued), if any.
    pub best_delta: Option<Vec<f64>>,
}

/// Called once per epoch with the record and the clip it evaluated.
pub type Observer<'o> = &'o mut dyn FnMut(&EpochRecord, &[f64]);

/// Stage 1: signed-gradient descent on the target's CTC loss inside an
/// L∞ box that shrinks after every success.
pub fn stage1_cw(
    victim: &Victim<'_>,
    original: &AudioClip,
    target: &Transcript,
    cfg: &Stage1Config,
    seed: u64,
) -> Result<AttackOutcome, AttackError> {
    stage1_cw_observed(victim, original, target, cfg, seed, &mut |_, _| {})
}

pub fn stage1_cw_observed(
    victim: &Victim<'_>,
    original: &AudioClip,
    target: &Transcript,
    cfg: &Stage1Config,
    seed: u64,
    observer: Observer<'_>,
) -> Result<AttackOutcome, AttackError> {
    cfg.validate()?;
    if original.is_empty() {
        return Err(AttackError::EmptyClip);
    }
    let labels = victim.encode_target(target, original.len())?;
    let mut eps = cfg.eps_init;
    let mut delta = vec![0.0; original.len()];
    if cfg.init_noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = cfg.init_noise.min(eps);
        for d in &mut delta {
            *d = rng.random_range(-w..=w);
        }
    }
    let mut trace = AttackTrace::new(Stage::One);
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for epoch in 1..=cfg.epochs {
        let (adv, eff) = apply_delta(original, &delta);
        let ev = victim.evaluate(&adv, &labels)?;
        let success = ev.decoded == labels;
        let nl = dsp::noise_loudness(original, &eff)?;
        trace.records.push(EpochRecord {
            epoch,
            loss_total: ev.ctc,
            loss_ctc: ev.ctc,
            loss_psy: None,
            success,
            eps: Some(eps),
            alpha: None,
            nl_db: nl,
        });
        observer(trace.records.last().expect("just pushed"), &adv);
        if success {
            if best.as_ref().is_none_or(|(b, _, _)| nl < *b) {
                best = Some((nl, adv.clone(), eff.clone()));
            }
            eps = update_epsilon(eps, &eff, true, cfg);
        }
        if epoch == cfg.epochs {
            break;
        }
        cfg.optimizer.step(&mut delta, &ev.grad, cfg.lr);
        for d in &mut delta {
            *d = d.clamp(-eps, eps);
        }
    }
    let mut result = extract_result(&trace)?;
    let best_delta = best.map(|(_, adv, eff)| {
        result.adv_clip = Some(AudioClip::new(adv));
        eff
    });
    Ok(AttackOutcome {
        result,
        trace,
        best_delta,
    })
}

/// Stage 2: minimise `ctc + α · psycho_loss` from the Stage-1 perturbation.
/// Every `check_every` epochs α grows after a success and shrinks after a
/// failure, and a failure reverts the perturbation to the last successful
/// one.
pub fn stage2_qin(
    victim: &Victim<'_>,
    original: &AudioClip,
    stage1_delta: Option<&[f64]>,
    target: &Transcript,
    cfg: &Stage2Config,
    thresholds: &MaskingThreshold,
) -> Result<AttackOutcome, AttackError> {
    stage2_qin_observed(victim, original, stage1_delta, target, cfg, thresholds, &mut |_, _| {})
}

pub fn stage2_qin_observed(
    victim: &Victim<'_>,
    original: &AudioClip,
    stage1_delta: Option<&[f64]>,
    target: &Transcript,
    cfg: &Stage2Config,
    thresholds: &MaskingThreshold,
    observer: Observer<'_>,
) -> Result<AttackOutcome, AttackError> {
    cfg.validate()?;
    let start = stage1_delta.ok_or(AttackError::Stage1Failed)?;
    if start.len() != original.len() {
        return Err(AttackError::LengthMismatch {
            expected: original.len(),
            actual: start.len(),
        });
    }
    let labels = victim.encode_target(target, original.len())?;
    let psy = PsychoLoss::new(thresholds.clone())?;
    let mut delta = start.to_vec();
    let mut last_good = delta.clone();
    let mut alpha = cfg.alpha_init;
    let mut trace = AttackTrace::new(Stage::Two);
    let mut best_pl = f64::INFINITY;
    let mut best: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut grad = vec![0.0; original.len()];
    for epoch in 1..=cfg.epochs {
        let (adv, eff) = apply_delta(original, &delta);
        let ev = victim.evaluate(&adv, &labels)?;
        let (pl, pgrad) = psy.eval_grad(&eff)?;
        let success = ev.decoded == labels;
        trace.records.push(EpochRecord {
            epoch,
            loss_total: ev.ctc + alpha * pl,
            loss_ctc: ev.ctc,
            loss_psy: Some(pl),
            success,
            eps: None,
            alpha: Some(alpha),
            nl_db: dsp::noise_loudness(original, &eff)?,
        });
        observer(trace.records.last().expect("just pushed"), &adv);
        let hit = if epoch == 1 {
            best_pl = pl;
            success && pl == 0.0
        } else {
            success && pl < best_pl
        };
        if hit {
            best_pl = pl;
            best = Some((adv.clone(), eff.clone()));
        }
        if success {
            last_good.copy_from_slice(&delta);
        }
        if epoch == cfg.epochs {
            break;
        }
        for ((g, c), p) in grad.iter_mut().zip(&ev.grad).zip(&pgrad) {
            *g = c + alpha * p;
        }
        cfg.optimizer.step(&mut delta, &grad, cfg.lr);
        if epoch % cfg.check_every == 0 {
            alpha = update_alpha(alpha, success, cfg);
            if !success {
                delta.copy_from_slice(&last_good);
            }
        }
    }
    let mut result = extract_result(&trace)?;
    let best_delta = best.map(|(adv, eff)| {
        result.adv_clip = Some(AudioClip::new(adv));
        eff
    });
    Ok(AttackOutcome {
        result,
        trace,
        best_delta,
    })
}

/// Masking thresholds of the original clip with the default framing.
pub fn thresholds_for(original: &AudioClip) -> Result<MaskingThreshold, AttackError> {
    Ok(psycho::masking_thresholds(original)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epoch: usize, success: bool, nl: f64, eps: f64) -> EpochRecord {
        EpochRecord {
            epoch,
            loss_total: 1.0,
            loss_ctc: 1.0,
            loss_psy: None,
            success,
            eps: Some(eps),
            alpha: None,
            nl_db: nl,
        }
    }

    fn rec2(epoch: usize, success: bool, pl: f64, alpha: f64) -> EpochRecord {
        EpochRecord {
            epoch,
            loss_total: 1.0 + alpha * pl,
            loss_ctc: 1.0,
            loss_psy: Some(pl),
            success,
            eps: None,
            alpha: Some(alpha),
            nl_db: -30.0,
        }
    }

    #[test]
    fn update_rules() {
        let c2 = Stage2Config::default();
        assert!((update_alpha(0.05, true, &c2) - 0.06).abs() < 1e-15);
        assert!((update_alpha(0.05, false, &c2) - 0.04).abs() < 1e-15);
        let back = update_alpha(update_alpha(0.05, true, &c2), false, &c2);
        assert!((back - 0.05 * 0.96).abs() < 1e-15);
        let c1 = Stage1Config::default();
        assert_eq!(update_epsilon(2000.0, &[10.0, -500.0, 3.0], true, &c1), 400.0);
        assert_eq!(update_epsilon(2000.0, &[10.0, -500.0], false, &c1), 2000.0);
        assert_eq!(update_epsilon(300.0, &[-500.0], true, &c1), 240.0);
    }

    #[test]
    fn configs_validate() {
        assert!(Stage1Config::default().validate().is_ok());
        assert!(Stage2Config::default().validate().is_ok());
        let mut c = Stage1Config::default();
        c.eps_shrink = 1.0;
        assert!(c.validate().is_err());
        c = Stage1Config { epochs: 0, ..Default::default() };
        assert!(c.validate().is_err());
        let c2 = Stage2Config { alpha_down: 1.1, ..Default::default() };
        assert!(c2.validate().is_err());
    }

    #[test]
    fn stage1_extraction() {
        let mut t = AttackTrace::new(Stage::One);
        assert!(matches!(extract_result(&t), Err(AttackError::EmptyTrace)));
        for e in 1..=400 {
            let (s, nl) = match e {
                120 => (true, -30.0),
                300 => (true, -38.0),
                _ => (false, -20.0),
            };
            let eps = if e <= 120 { 2000.0 } else { 1500.0 };
            t.records.push(rec(e, s, nl, eps));
        }
        let r = extract_result(&t).unwrap();
        assert_eq!((r.fh, r.bh), (Some(120), Some(300)));
        assert_eq!(r.nl_db, Some(-38.0));
        assert_eq!(r.pb, Some(1500.0));
        assert!(r.success && r.alpha.is_none() && r.pl.is_none());

        let none = AttackTrace {
            stage: Stage::One,
            records: (1..=5).map(|e| rec(e, false, -10.0, 2000.0)).collect(),
        };
        let r = extract_result(&none).unwrap();
        assert!(!r.success && r.fh.is_none() && r.bh.is_none() && r.pb.is_none());

        let single = AttackTrace {
            stage: Stage::One,
            records: vec![rec(1, false, -3.0, 9.0), rec(2, true, -7.0, 9.0), rec(3, false, -8.0, 4.0)],
        };
        let r = extract_result(&single).unwrap();
        assert_eq!((r.fh, r.bh), (Some(2), Some(2)));
    }

    #[test]
    fn stage2_extraction() {
        // epoch 1 is the stage-1 delta (PL 5); epoch 3 improves, epoch 4 is
        // worse, epoch 5 fails, epoch 6 improves again
        let t = AttackTrace {
            stage: Stage::Two,
            records: vec![
                rec2(1, true, 5.0, 0.05),
                rec2(2, true, 5.0, 0.05),
                rec2(3, true, 4.0, 0.05),
                rec2(4, true, 4.5, 0.06),
                rec2(5, false, 1.0, 0.06),
                rec2(6, true, 2.0, 0.072),
            ],
        };
        assert_eq!(hits(&t), vec![3, 6]);
        let r = extract_result(&t).unwrap();
        assert_eq!((r.fh, r.bh), (Some(3), Some(6)));
        assert_eq!((r.pl, r.alpha), (Some(2.0), Some(0.072)));
        assert!(r.pb.is_none());

        let zero = AttackTrace {
            stage: Stage::Two,
            records: vec![rec2(1, true, 0.0, 0.05), rec2(2, true, 0.0, 0.05)],
        };
        let r = extract_result(&zero).unwrap();
        assert_eq!((r.fh, r.bh, r.pl), (Some(1), Some(1), Some(0.0)));

        let flat = AttackTrace {
            stage: Stage::Two,
            records: vec![rec2(1, true, 3.0, 0.05), rec2(2, true, 3.0, 0.05)],
        };
        assert!(!extract_result(&flat).unwrap().success);
    }

    #[test]
    fn jsonl_round_trip_with_neg_inf() {
        let t = AttackTrace {
            stage: Stage::One,
            records: vec![rec(1, true, f64::NEG_INFINITY, 2000.0), rec(2, false, -12.5, 0.0)],
        };
        let mut buf = Vec::new();
        t.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        let keys: Vec<&str> = first.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        for k in ["epoch", "loss_total", "loss_ctc", "loss_psy", "success", "eps", "alpha", "nl_db"] {
            assert!(keys.contains(&k), "missing {k}");
        }
        assert!(first["nl_db"].is_null());
        assert_eq!(AttackTrace::read_jsonl(Stage::One, &text).unwrap(), t);
    }

    #[test]
    fn truncation_never_exceeds_delta() {
        let orig = AudioClip::new(vec![0.0, 32760.0, -32768.0, 5.0]);
        let (adv, eff) = apply_delta(&orig, &[2.7, 20.0, -3.0, -0.9]);
        assert_eq!(adv, vec![2.0, 32767.0, -32768.0, 5.0]);
        assert_eq!(eff, vec![2.0, 7.0, 0.0, 0.0]);
    }
}
