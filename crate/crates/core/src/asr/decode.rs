use std::collections::HashMap;

use super::ctc::{log_add, log_softmax};
use super::{Alphabet, Logits, NGramModel, Transcript};

/// Best-path labels: per-frame argmax, repeats collapsed, blanks dropped.
pub fn greedy_labels(logits: &Logits, blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for row in logits.values.outer_iter() {
        let best = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (k, &v)| if v > b.1 { (k, v) } else { b })
            .0;
        if Some(best) != prev && best != blank {
            out.push(best);
        }
        prev = Some(best);
    }
    out
}

pub fn greedy_decode(logits: &Logits, alphabet: &Alphabet) -> Transcript {
    Transcript::new(alphabet.decode(&greedy_labels(logits, alphabet.blank())))
}

#[derive(Debug, Clone, Copy)]
struct Beam {
    /// log P(prefix, path ends in blank)
    blank: f64,
    /// log P(prefix, path ends in the last label)
    label: f64,
    /// accumulated weighted LM score of the prefix
    lm: f64,
}

impl Beam {
    fn ctc(&self) -> f64 {
        log_add(self.blank, self.label)
    }

    fn score(&self) -> f64 {
        self.ctc() + self.lm
    }
}

/// CTC prefix beam search scored by `ln P_ctc + lm_weight · ln P_lm`.
pub fn beam_labels(logits: &Logits, blank: usize, lm: Option<&NGramModel>, beam_width: usize, lm_weight: f64) -> Vec<usize> {
    assert!(beam_width >= 1, "beam width must be at least 1");
    let logp = log_softmax(logits.values.view());
    let n_out = logp.ncols();
    let mut beams: Vec<(Vec<usize>, Beam)> = vec![(
        Vec::new(),
        Beam {
            blank: 0.0,
            label: f64::NEG_INFINITY,
            lm: 0.0,
        },
    )];
    for row in logp.outer_iter() {
        let mut next: HashMap<Vec<usize>, Beam> = HashMap::new();
        let empty = |lm: f64| Beam {
            blank: f64::NEG_INFINITY,
            label: f64::NEG_INFINITY,
            lm,
        };
        for (prefix, beam) in &beams {
            let total = beam.ctc();
            let e = next.entry(prefix.clone()).or_insert_with(|| empty(beam.lm));
            e.blank = log_add(e.blank, total + row[blank]);
            if let Some(&last) = prefix.last() {
                e.label = log_add(e.label, beam.label + row[last]);
            }
            for c in (0..n_out).filter(|&c| c != blank) {
                let mut extended = prefix.clone();
                extended.push(c);
                let lm_term = match (lm, lm_weight) {
                    (Some(m), w) if w != 0.0 => w * m.log_prob(prefix, c),
                    _ => 0.0,
                };
                // a repeat only extends from paths that ended in blank
                let from = if prefix.last() == Some(&c) { beam.blank } else { total };
                let e = next.entry(extended).or_insert_with(|| empty(beam.lm + lm_term));
                e.label = log_add(e.label, from + row[c]);
            }
        }
        let mut ranked: Vec<(Vec<usize>, Beam)> = next.into_iter().collect();
        ranked.sort_by(|a, b| b.1.score().total_cmp(&a.1.score()).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(beam_width);
        beams = ranked;
    }
    beams.into_iter().next().map(|(p, _)| p).unwrap_or_default()
}

pub fn beam_decode(logits: &Logits, alphabet: &Alphabet, lm: &NGramModel, beam_width: usize, lm_weight: f64) -> Transcript {
    Transcript::new(alphabet.decode(&beam_labels(logits, alphabet.blank(), Some(lm), beam_width, lm_weight)))
}
