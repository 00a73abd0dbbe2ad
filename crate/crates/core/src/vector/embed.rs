use crate::value::{mix64, stable_hash_parts};

/// Deterministic stand-in for an embedding model: every character trigram
/// of the lower-cased text is hashed to a seeded pseudo-random direction,
/// the directions are summed and the result is L2-normalized.
///
/// Texts sharing many trigrams land close together; identical texts map to
/// identical vectors.
pub fn mock_embedding(text: &str, dim: usize, seed: u64) -> Vec<f32> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut acc = vec![0f32; dim];
    let seed_bytes = seed.to_le_bytes();
    let mut add_gram = |gram: &[char]| {
        let s: String = gram.iter().collect();
        let h = stable_hash_parts(&[&seed_bytes, s.as_bytes()]);
        for (d, slot) in acc.iter_mut().enumerate() {
            let r = mix64(h ^ (d as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            // Uniform in [-1, 1).
            *slot += (r >> 40) as f32 / (1u64 << 23) as f32 - 1.0;
        }
    };
    if chars.len() < 3 {
        add_gram(&chars);
    } else {
        for w in chars.windows(3) {
            add_gram(w);
        }
    }
    super::normalize(&mut acc);
    acc
}
