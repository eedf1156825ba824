//! CTC loss by log-space forward–backward over the blank-augmented labels.

use ndarray::{Array2, ArrayView2};

use super::{AsrError, Logits};

const NEG_INF: f64 = f64::NEG_INFINITY;

pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == NEG_INF {
        return b;
    }
    if b == NEG_INF {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Row-wise log-softmax.
pub fn log_softmax(values: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = values.to_owned();
    for mut row in out.outer_iter_mut() {
        let m = row.fold(NEG_INF, |m, &v| m.max(v));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Minimum number of frames needed to emit `labels` (repeats need a blank
/// between them).
pub fn min_frames(labels: &[usize]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Returns `-ln p(labels | logits)` and its gradient with respect to the
/// pre-softmax logits.
pub fn ctc_loss(logits: &Logits, labels: &[usize], blank: usize) -> Result<(f64, Array2<f64>), AsrError> {
    if labels.is_empty() {
        return Err(AsrError::EmptyTarget);
    }
    let t_len = logits.n_frames();
    let needed = min_frames(labels);
    if needed > t_len {
        return Err(AsrError::InfeasibleTarget {
            frames: t_len,
            needed,
        });
    }
    let n_out = logits.values.ncols();
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_out || l == blank) {
        return Err(AsrError::BadLabel(bad));
    }

    let logp = log_softmax(logits.values.view());
    let s_len = 2 * labels.len() + 1;
    let ext = |s: usize| if s.is_multiple_of(2) { blank } else { labels[s / 2] };
    // a skip from s-2 to s is allowed onto a non-blank that differs from s-2
    let can_skip = |s: usize| s >= 2 && s % 2 == 1 && ext(s) != ext(s - 2);

    let mut alpha = Array2::from_elem((t_len, s_len), NEG_INF);
    alpha[[0, 0]] = logp[[0, blank]];
    alpha[[0, 1]] = logp[[0, ext(1)]];
    for t in 1..t_len {
        for s in 0..s_len {
            let mut a = alpha[[t - 1, s]];
            if s >= 1 {
                a = log_add(a, alpha[[t - 1, s - 1]]);
            }
            if can_skip(s) {
                a = log_add(a, alpha[[t - 1, s - 2]]);
            }
            if a != NEG_INF {
                alpha[[t, s]] = a + logp[[t, ext(s)]];
            }
        }
    }

    let mut beta = Array2::from_elem((t_len, s_len), NEG_INF);
    beta[[t_len - 1, s_len - 1]] = logp[[t_len - 1, blank]];
    beta[[t_len - 1, s_len - 2]] = logp[[t_len - 1, ext(s_len - 2)]];
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let mut b = beta[[t + 1, s]];
            if s + 1 < s_len {
                b = log_add(b, beta[[t + 1, s + 1]]);
            }
            if s + 2 < s_len && can_skip(s + 2) {
                b = log_add(b, beta[[t + 1, s + 2]]);
            }
            if b != NEG_INF {
                beta[[t, s]] = b + logp[[t, ext(s)]];
            }
        }
    }

    let log_p = log_add(alpha[[t_len - 1, s_len - 1]], alpha[[t_len - 1, s_len - 2]]);
    if log_p == NEG_INF {
        return Err(AsrError::InfeasibleTarget {
            frames: t_len,
            needed,
        });
    }

    // grad = softmax - occupancy, occupancy_{t,k} = sum_{s: ext(s)=k} αβ / (p·y_{t,k})
    let mut grad = logp.mapv(f64::exp);
    let mut occ = vec![NEG_INF; n_out];
    for t in 0..t_len {
        occ.iter_mut().for_each(|o| *o = NEG_INF);
        for s in 0..s_len {
            let ab = alpha[[t, s]] + beta[[t, s]];
            if ab != NEG_INF {
                let k = ext(s);
                occ[k] = log_add(occ[k], ab);
            }
        }
        for (k, &o) in occ.iter().enumerate() {
            if o != NEG_INF {
                grad[[t, k]] -= (o - logp[[t, k]] - log_p).exp();
            }
        }
    }
    Ok((-log_p, grad))
}
