use super::{AsrError, Transcript};

/// Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn word_distance(reference: &Transcript, hyp: &Transcript) -> usize {
    let r: Vec<&str> = reference.words().collect();
    let h: Vec<&str> = hyp.words().collect();
    edit_distance(&r, &h)
}

pub fn char_distance(reference: &Transcript, hyp: &Transcript) -> usize {
    let r: Vec<char> = reference.as_str().chars().collect();
    let h: Vec<char> = hyp.as_str().chars().collect();
    edit_distance(&r, &h)
}

pub fn wer(reference: &Transcript, hyp: &Transcript) -> Result<f64, AsrError> {
    let n = reference.words().count();
    if n == 0 {
        return Err(AsrError::EmptyReference);
    }
    Ok(word_distance(reference, hyp) as f64 / n as f64)
}

pub fn cer(reference: &Transcript, hyp: &Transcript) -> Result<f64, AsrError> {
    let n = reference.char_len();
    if n == 0 {
        return Err(AsrError::EmptyReference);
    }
    Ok(char_distance(reference, hyp) as f64 / n as f64)
}
