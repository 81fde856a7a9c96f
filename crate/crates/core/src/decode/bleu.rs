use std::collections::HashMap;
use std::hash::Hash;

use super::DecodeError;

/// Numerator used for n-gram orders with no matches when smoothing is on.
pub const SMOOTHING_EPSILON: f64 = 0.1;

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and the number of candidate n-grams (at least 1).
pub fn modified_precision<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let matched = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    let total = (candidate.len() + 1).saturating_sub(n).max(1);
    (matched, total)
}

pub fn brevity_penalty(candidate_len: usize, reference_len: usize) -> f64 {
    if candidate_len == 0 {
        0.0
    } else if candidate_len > reference_len {
        1.0
    } else {
        (1.0 - reference_len as f64 / candidate_len as f64).exp()
    }
}

/// Sentence-level BLEU with uniform weights over orders `1..=max_n`.
///
/// With `smoothing`, an order with zero matches contributes precision
/// `ε / count` instead of collapsing the score to zero.
pub fn bleu<T: Eq + Hash>(candidate: &[T], reference: &[T], max_n: usize, smoothing: bool) -> Result<f64, DecodeError> {
    if reference.is_empty() {
        return Err(DecodeError::EmptyReference);
    }
    let bp = brevity_penalty(candidate.len(), reference.len());
    if bp == 0.0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (matched, total) = modified_precision(candidate, reference, n);
        let p = if matched > 0 {
            matched as f64 / total as f64
        } else if smoothing {
            SMOOTHING_EPSILON / total as f64
        } else {
            return Ok(0.0);
        };
        log_sum += p.ln();
    }
    Ok((bp * (log_sum / max_n as f64).exp()).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn perfect_match() {
        let s = w("the quick brown fox jumps");
        assert_eq!(bleu(&s, &s, 4, true).unwrap(), 1.0);
        assert_eq!(bleu(&s, &s, 4, false).unwrap(), 1.0);
    }

    #[test]
    fn clipping_example() {
        // p1 = 1/4, p2..p4 smoothed to 0.1/3, 0.1/2, 0.1/1
        let got = bleu(&w("the the the the"), &w("the cat sat down"), 4, true).unwrap();
        let expect = (0.25f64 * (0.1 / 3.0) * 0.05 * 0.1).powf(0.25);
        assert!((got - expect).abs() < 1e-12);
        assert_eq!(
            bleu(&w("the the the the"), &w("the cat sat down"), 4, false).unwrap(),
            0.0
        );
    }

    #[test]
    fn empty_cases() {
        assert!(matches!(
            bleu::<&str>(&["a"], &[], 4, true),
            Err(DecodeError::EmptyReference)
        ));
        assert_eq!(bleu::<&str>(&[], &["a"], 4, true).unwrap(), 0.0);
    }

    #[test]
    fn brevity() {
        assert_eq!(brevity_penalty(5, 4), 1.0);
        assert_eq!(brevity_penalty(4, 4), 1.0);
        assert!((brevity_penalty(2, 4) - (-1.0f64).exp()).abs() < 1e-15);
    }
}
