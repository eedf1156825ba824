//! Campaign execution: corpus and model lifecycle, attacks over every
//! (language, experiment, sample, stage) and artifact persistence.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use advbench_core::asr::{ngram_train, AcousticModel, NGramModel, Transcript};
use advbench_core::attacks::{
    stage1_cw, stage2_qin, thresholds_for, AttackError, AttackOutcome, Judge, Victim,
};
use advbench_core::dsp::write_wav;
use advbench_core::experiments::{
    build_corpus, build_experiment, corpus_cer, fit_model, Corpus, ExperimentKind, ExperimentSpec, Language,
    SamplePair, Split,
};
use advbench_core::features::FeatureConfig;
use advbench_core::seed::derive_seed;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{CampaignConfig, ConfigError};
use crate::records::{write_records, RecordError, RunRecord};
use crate::report::{compute_stats, write_decisions, Report, TrainingSummary};

/// Character n-gram used when the judge is a beam search.
pub const LM_ORDER: usize = 3;
pub const LM_ADD_K: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Asr(#[from] advbench_core::asr::AsrError),
    #[error(transparent)]
    Experiment(#[from] advbench_core::experiments::ExperimentError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Dsp(#[from] advbench_core::dsp::DspError),
    #[error(transparent)]
    Records(#[from] RecordError),
    #[error(transparent)]
    Stats(#[from] advbench_core::stats::StatsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug)]
pub struct CampaignOutput {
    pub report: Report,
    pub out: PathBuf,
}

impl CampaignOutput {
    pub fn any_failed(&self) -> bool {
        self.report.records.iter().any(|r| !r.success)
    }
}

/// Seed mixing component of an experiment kind.
pub fn kind_code(kind: ExperimentKind) -> u64 {
    match kind {
        ExperimentKind::PhonemeFlip(c) => 5 * 16 + c as u64,
        k => k.number() as u64,
    }
}

pub fn record_id(lang: Language, kind: ExperimentKind, index: usize, stage: u8) -> String {
    format!("{lang}-{kind}-{index:03}-s{stage}")
}

/// A trained or loaded recognizer with its provenance.
pub struct LoadedModel {
    pub model: AcousticModel,
    pub summary: TrainingSummary,
}

/// Loads the configured checkpoint or trains a fresh model; a trained model
/// is saved to `models/<lang>.ckpt` under the output directory.
pub fn obtain_model(cfg: &CampaignConfig, corpus: &Corpus, out: &Path) -> Result<LoadedModel, CampaignError> {
    let lang = corpus.language;
    let (model, history) = match cfg.model.checkpoints.get(&lang) {
        Some(path) => {
            log::info!("{lang}: loading {}", path.display());
            (AcousticModel::load(path)?, Vec::new())
        }
        None => {
            log::info!("{lang}: training on {} phrases for {} epochs", corpus.len(), cfg.model.epochs);
            let (m, h) = fit_model(corpus, &cfg.model.hyper(cfg.seed), cfg.model.dims(), FeatureConfig::default())?;
            let dir = out.join("models");
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            m.save(dir.join(format!("{lang}.ckpt")))?;
            (m, h)
        }
    };
    let heldout_cer = corpus_cer(&model, corpus, Split::Heldout)?;
    log::info!("{lang}: held-out CER {heldout_cer:.4}");
    Ok(LoadedModel {
        summary: TrainingSummary {
            language: lang,
            epochs: history.len(),
            final_loss: history.last().copied(),
            heldout_cer,
        },
        model,
    })
}

#[derive(Serialize)]
struct ManifestRow<'a> {
    index: usize,
    split: Split,
    seed: u64,
    samples: usize,
    transcript: &'a str,
}

fn write_manifest(corpus: &Corpus, path: &Path) -> Result<(), CampaignError> {
    let mut w = csv::Writer::from_path(path)?;
    for u in &corpus.utterances {
        w.serialize(ManifestRow {
            index: u.index,
            split: u.split,
            seed: u.seed,
            samples: u.clip.len(),
            transcript: u.transcript.as_str(),
        })?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

fn persist(out: &Path, id: &str, outcome: &AttackOutcome) -> Result<(), CampaignError> {
    let trace_path = out.join("traces").join(format!("{id}.jsonl"));
    let mut w = BufWriter::new(File::create(&trace_path).map_err(io_err(&trace_path))?);
    outcome.trace.write_jsonl(&mut w).map_err(io_err(&trace_path))?;
    w.flush().map_err(io_err(&trace_path))?;
    if let Some(clip) = &outcome.result.adv_clip {
        write_wav(clip, out.join("adv").join(format!("{id}.wav")))?;
    }
    Ok(())
}

/// Stage 1 then, on success, Stage 2 for one sample. Attack errors become
/// failure records; only persistence errors propagate.
pub fn attack_sample(
    cfg: &CampaignConfig,
    victim: &Victim<'_>,
    pair: &SamplePair,
    out: &Path,
) -> Result<Vec<RunRecord>, CampaignError> {
    let lang = pair.language;
    let label = pair.kind.to_string();
    let seed = derive_seed(&[cfg.seed, lang.tag(), kind_code(pair.kind), pair.index as u64]);
    let (orig, target) = (pair.original.to_string(), pair.target.to_string());
    let id1 = record_id(lang, pair.kind, pair.index, 1);
    let s1 = match stage1_cw(victim, &pair.original_clip, &pair.target, &cfg.stage1, seed) {
        Ok(o) => o,
        Err(e) => {
            log::warn!("{id1}: {e}");
            return Ok(vec![RunRecord::failed(
                id1,
                label,
                lang,
                pair.index,
                1,
                orig,
                target,
                e.to_string(),
            )]);
        }
    };
    persist(out, &id1, &s1)?;
    let mut recs = vec![RunRecord::from_result(
        id1,
        label.clone(),
        lang,
        pair.index,
        orig.clone(),
        target.clone(),
        cfg.stage1.epochs,
        &s1.result,
    )];
    let Some(delta) = s1.best_delta.as_deref().filter(|_| s1.result.success) else {
        return Ok(recs);
    };
    let id2 = record_id(lang, pair.kind, pair.index, 2);
    let s2 = thresholds_for(&pair.original_clip)
        .and_then(|thr| stage2_qin(victim, &pair.original_clip, Some(delta), &pair.target, &cfg.stage2, &thr));
    match s2 {
        Ok(o) => {
            persist(out, &id2, &o)?;
            recs.push(RunRecord::from_result(
                id2,
                label,
                lang,
                pair.index,
                orig,
                target,
                cfg.stage2.epochs,
                &o.result,
            ));
        }
        Err(e) => {
            log::warn!("{id2}: {e}");
            recs.push(RunRecord::failed(id2, label, lang, pair.index, 2, orig, target, e.to_string()));
        }
    }
    Ok(recs)
}

fn lm_for(corpus: &Corpus) -> Result<NGramModel, CampaignError> {
    let texts: Vec<Transcript> = corpus.split(Split::Train).map(|u| u.transcript.clone()).collect();
    Ok(ngram_train(&texts, &corpus.language.definition().alphabet, LM_ORDER, LM_ADD_K)?)
}

/// Records sorted by language, experiment order in the config, sample and stage.
fn sort_records(records: &mut [RunRecord], cfg: &CampaignConfig) {
    let kinds: Vec<String> = cfg.kinds().iter().map(|k| k.to_string()).collect();
    let rank = |r: &RunRecord| kinds.iter().position(|k| *k == r.experiment).unwrap_or(usize::MAX);
    let langs = &cfg.languages;
    let lrank = |r: &RunRecord| langs.iter().position(|l| *l == r.language).unwrap_or(usize::MAX);
    records.sort_by_key(|r| (lrank(r), rank(r), r.sample, r.stage));
}

pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignOutput, CampaignError> {
    cfg.validate()?;
    let out = cfg.out.clone();
    for sub in ["traces", "adv", "corpus"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    let mut records = Vec::new();
    let mut training = Vec::new();
    let mut notes = Vec::new();
    for &lang in &cfg.languages {
        let corpus = build_corpus(lang, cfg.corpus.phrases, cfg.seed);
        write_manifest(&corpus, &out.join("corpus").join(format!("{lang}.csv")))?;
        let loaded = obtain_model(cfg, &corpus, &out)?;
        training.push(loaded.summary.clone());
        let lm = match cfg.judge {
            Judge::Beam { .. } => Some(lm_for(&corpus)?),
            Judge::Greedy => None,
        };
        let victim = match (cfg.judge, &lm) {
            (Judge::Beam { width, lm_weight }, Some(lm)) => Victim::with_beam(&loaded.model, lm, width, lm_weight)?,
            _ => Victim::greedy(&loaded.model)?,
        };
        for kind in cfg.kinds() {
            let mut spec = ExperimentSpec::new(kind, lang, derive_seed(&[cfg.seed, lang.tag(), kind_code(kind)]));
            spec.n_samples = cfg.samples_for(kind);
            let pairs = match build_experiment(&spec, &corpus) {
                Ok(p) => p,
                Err(e) => {
                    let note = format!("experiment {kind} ({lang}) was not run: {e}");
                    log::warn!("{note}");
                    notes.push(note);
                    continue;
                }
            };
            log::info!("{lang}: experiment {kind}, {} samples", pairs.len());
            let per_sample: Vec<Vec<RunRecord>> = pairs
                .par_iter()
                .map(|p| attack_sample(cfg, &victim, p, &out))
                .collect::<Result<_, _>>()?;
            records.extend(per_sample.into_iter().flatten());
        }
    }
    sort_records(&mut records, cfg);

    let path = out.join("records.csv");
    write_records(&records, File::create(&path).map_err(io_err(&path))?)?;
    let stats = compute_stats(&records, cfg.stats.alpha_star, cfg.stats.m)?;
    let path = out.join("decisions.csv");
    let file = File::create(&path).map_err(io_err(&path))?;
    if let Some(st) = &stats {
        write_decisions(st, file)?;
    }
    let report = Report {
        records,
        stats,
        training,
        notes,
    };
    let path = out.join("report.md");
    fs::write(&path, crate::report::render_report(&report)).map_err(io_err(&path))?;
    Ok(CampaignOutput { report, out })
}
