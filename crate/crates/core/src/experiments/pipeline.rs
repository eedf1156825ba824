//! Corpus-level training and evaluation of the toy recognizer.

use rayon::prelude::*;

use super::corpus::{Corpus, Split};
use super::ExperimentError;
use crate::asr::{self, AcousticModel, InputNorm, ModelDims, TrainExample, TrainHyper};
use crate::features::{FeatureConfig, Frontend};
use crate::seed::derive_seed;

/// Features and labels of every utterance in `split`.
pub fn corpus_examples(corpus: &Corpus, frontend: &Frontend, split: Split) -> Result<Vec<TrainExample>, ExperimentError> {
    let def = corpus.language.definition();
    let utts: Vec<_> = corpus.split(split).collect();
    utts.par_iter()
        .map(|u| {
            Ok(TrainExample {
                features: frontend.forward(&u.clip.samples).without_cache().values,
                labels: def.alphabet.encode(u.transcript.as_str())?,
            })
        })
        .collect()
}

/// Fits the input normalisation on the training split, initialises the model
/// from `derive_seed([hyper.seed, language tag])` and trains it. Returns the
/// model and its per-epoch mean loss.
pub fn fit_model(
    corpus: &Corpus,
    hyper: &TrainHyper,
    dims: ModelDims,
    cfg: FeatureConfig,
) -> Result<(AcousticModel, Vec<f64>), ExperimentError> {
    let frontend = Frontend::new(cfg)?;
    let examples = corpus_examples(corpus, &frontend, Split::Train)?;
    let norm = InputNorm::fit(examples.iter().map(|e| &e.features));
    let seed = derive_seed(&[hyper.seed, corpus.language.tag()]);
    let mut model = AcousticModel::init(corpus.language.definition().alphabet.clone(), cfg, dims, norm, seed);
    let history = asr::train(&mut model, &examples, hyper)?;
    Ok((model, history))
}

/// Greedy-decode character error rate pooled over `split`.
pub fn corpus_cer(model: &AcousticModel, corpus: &Corpus, split: Split) -> Result<f64, ExperimentError> {
    let frontend = Frontend::new(model.feature_cfg)?;
    let utts: Vec<_> = corpus.split(split).collect();
    let counts: Vec<(usize, usize)> = utts
        .par_iter()
        .map(|u| {
            let f = frontend.forward(&u.clip.samples);
            let (logits, _) = model.forward(f.values.view())?;
            let hyp = asr::greedy_decode(&logits, &model.alphabet);
            Ok((asr::char_distance(&u.transcript, &hyp), u.transcript.char_len()))
        })
        .collect::<Result<_, ExperimentError>>()?;
    let (err, total) = counts.iter().fold((0, 0), |(e, t), (a, b)| (e + a, t + b));
    if total == 0 {
        return Err(ExperimentError::InsufficientCorpus { wanted: 1, got: 0 });
    }
    Ok(err as f64 / total as f64)
}

/// Means of consecutive non-overlapping windows of `window` epochs.
pub fn window_means(history: &[f64], window: usize) -> Vec<f64> {
    history.chunks_exact(window).map(|c| c.iter().sum::<f64>() / window as f64).collect()
}
