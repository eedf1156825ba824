//! Plain minibatch SGD with global-norm gradient clipping.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ctc::ctc_loss;
use super::{AcousticModel, AsrError, Params};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainHyper {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub clip_norm: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.05,
            batch: 8,
            seed: 0,
            clip_norm: 5.0,
        }
    }
}

/// One training utterance: features and encoded target labels.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

pub fn loss_and_grad(model: &AcousticModel, ex: &TrainExample) -> Result<(f64, Params), AsrError> {
    let (logits, cache) = model.forward(ex.features.view())?;
    let (loss, gl) = ctc_loss(&logits, &ex.labels, model.alphabet.blank())?;
    let (_, grads) = model.backward(&cache, gl.view(), true);
    Ok((loss, grads.expect("parameter gradients requested")))
}

/// Trains in place and returns the mean CTC loss of every epoch.
///
/// Per-example gradients are computed in parallel but always reduced in batch
/// order, so the result depends only on the seed.
pub fn train(model: &mut AcousticModel, corpus: &[TrainExample], hyper: &TrainHyper) -> Result<Vec<f64>, AsrError> {
    if corpus.is_empty() {
        return Err(AsrError::EmptyCorpus);
    }
    for ex in corpus {
        let needed = super::ctc::min_frames(&ex.labels);
        if needed > ex.features.nrows() {
            return Err(AsrError::InfeasibleTarget {
                frames: ex.features.nrows(),
                needed,
            });
        }
    }
    let batch = hyper.batch.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut history = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let results: Vec<(f64, Params)> = chunk
                .par_iter()
                .map(|&i| loss_and_grad(model, &corpus[i]))
                .collect::<Result<_, _>>()?;
            let mut grad = Params::zeros(model.n_inputs(), model.dims, model.alphabet.n_outputs());
            for (loss, g) in &results {
                epoch_loss += loss;
                grad.add_scaled(g, 1.0 / chunk.len() as f64);
            }
            let norm = grad.norm();
            if norm > hyper.clip_norm {
                grad.scale(hyper.clip_norm / norm);
            }
            if hyper.lr != 0.0 {
                model.params.add_scaled(&grad, -hyper.lr);
            }
        }
        let mean = epoch_loss / corpus.len() as f64;
        log::debug!("epoch {} mean ctc loss {:.4}", epoch + 1, mean);
        history.push(mean);
    }
    Ok(history)
}
