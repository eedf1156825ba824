//! Character n-gram model with add-k smoothing.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Alphabet, AsrError, Transcript};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NGramModel {
    order: usize,
    add_k: f64,
    vocab: usize,
    /// Context (padded with the begin marker `vocab`) → next-symbol counts.
    counts: HashMap<Vec<usize>, Vec<f64>>,
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    /// Begin-of-text marker used to pad short histories.
    pub fn bos(&self) -> usize {
        self.vocab
    }

    fn context_key(&self, history: &[usize]) -> Vec<usize> {
        let n = self.order - 1;
        let mut key = vec![self.bos(); n.saturating_sub(history.len())];
        key.extend_from_slice(&history[history.len().saturating_sub(n)..]);
        key
    }

    /// `P(next | history)`; only the last `order - 1` symbols of the history
    /// matter. Unseen contexts with `k = 0` fall back to uniform.
    pub fn prob(&self, history: &[usize], next: usize) -> f64 {
        let v = self.vocab as f64;
        match self.counts.get(&self.context_key(history)) {
            Some(row) => {
                let total: f64 = row.iter().sum();
                let denom = total + self.add_k * v;
                if denom > 0.0 {
                    (row[next] + self.add_k) / denom
                } else {
                    1.0 / v
                }
            }
            None => 1.0 / v,
        }
    }

    pub fn log_prob(&self, history: &[usize], next: usize) -> f64 {
        self.prob(history, next).ln()
    }

    /// Log-probability of a whole label sequence.
    pub fn score(&self, labels: &[usize]) -> f64 {
        (0..labels.len())
            .map(|i| self.log_prob(&labels[..i], labels[i]))
            .sum()
    }
}

pub fn ngram_train(
    corpus: &[Transcript],
    alphabet: &Alphabet,
    order: usize,
    add_k: f64,
) -> Result<NGramModel, AsrError> {
    if corpus.is_empty() {
        return Err(AsrError::EmptyCorpus);
    }
    assert!(order >= 1, "n-gram order must be at least 1");
    let vocab = alphabet.len();
    let mut model = NGramModel {
        order,
        add_k,
        vocab,
        counts: HashMap::new(),
    };
    for t in corpus {
        let labels = alphabet.encode(t.as_str())?;
        for i in 0..labels.len() {
            let key = model.context_key(&labels[..i]);
            model.counts.entry(key).or_insert_with(|| vec![0.0; vocab])[labels[i]] += 1.0;
        }
    }
    Ok(model)
}
