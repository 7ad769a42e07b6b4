//! Deterministic hashed bag-of-words embeddings.

use crate::text::{fnv1a, tokenize};

pub const EMBEDDING_DIM: usize = 256;

/// Tokens hashed into 256 buckets, counted, then L2-normalized.
/// Empty (token-free) text embeds to the zero vector.
pub fn embed(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; EMBEDDING_DIM];
    for token in tokenize(text) {
        let bucket = (fnv1a(token.as_bytes()) % EMBEDDING_DIM as u64) as usize;
        v[bucket] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Cosine of two vectors; zero when either is the zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_is_zero() {
        assert!(embed("").iter().all(|x| *x == 0.0));
        assert!(embed("  ?! ").iter().all(|x| *x == 0.0));
    }

    #[test]
    fn word_order_is_irrelevant() {
        assert!((cosine(&embed("red apple"), &embed("apple red")) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn non_empty_text_is_unit_norm(words in proptest::collection::vec("[a-z]{1,8}", 1..20)) {
            let v = embed(&words.join(" "));
            let self_dot: f64 = v.iter().map(|x| x * x).sum();
            prop_assert!((self_dot - 1.0).abs() < 1e-9);
        }
    }
}
