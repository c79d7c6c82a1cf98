//! Edit distance and character error rate over Unicode scalar values.

use crate::{MetricError, Result};

/// Unit-cost Levenshtein distance between two strings, per character.
pub fn edit_distance(hyp: &str, reference: &str) -> usize {
    let a: Vec<char> = hyp.chars().collect();
    let b: Vec<char> = reference.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance normalized by the reference length in characters.
pub fn char_error_rate(hyp: &str, reference: &str) -> Result<f64> {
    let ref_len = reference.chars().count();
    if ref_len == 0 {
        return Err(MetricError::InvalidArgument(
            "character error rate is undefined for an empty reference".into(),
        ));
    }
    Ok(edit_distance(hyp, reference) as f64 / ref_len as f64)
}
