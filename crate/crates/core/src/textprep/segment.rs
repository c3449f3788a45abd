//! Unigram word segmentation for hashtag bodies.

use super::Lexicon;

/// Extra log-probability penalty per character of an out-of-lexicon piece.
pub const OOV_PENALTY_PER_CHAR: f64 = 3.0;

/// Log-probability of `word` under the unigram model.
///
/// In-lexicon words score `ln(count / total)`; anything else scores
/// `ln(1 / total) - 3 * len(word)`. Requires `lex.total() > 0`.
pub fn word_log_prob(word: &str, lex: &Lexicon) -> f64 {
    let total = lex.total() as f64;
    match lex.count(word) {
        0 => -total.ln() - OOV_PENALTY_PER_CHAR * word.chars().count() as f64,
        c => (c as f64 / total).ln(),
    }
}

/// Splits a hashtag (with or without its leading `#`) into the most probable
/// word sequence. The body is lowercased first. With an empty lexicon the
/// body is returned unsplit.
///
/// Ties between equally scored segmentations go to the one whose final word
/// is longest, applied recursively from the right.
pub fn segment_hashtag(tag: &str, lex: &Lexicon) -> Vec<String> {
    let body = tag.strip_prefix('#').unwrap_or(tag).to_lowercase();
    if body.is_empty() {
        return Vec::new();
    }
    if lex.total() == 0 {
        return vec![body];
    }

    // byte offsets of char boundaries, including the end
    let bounds: Vec<usize> = body
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(body.len()))
        .collect();
    let m = bounds.len() - 1;

    let mut best = vec![f64::NEG_INFINITY; m + 1];
    let mut back = vec![0usize; m + 1];
    best[0] = 0.0;
    for end in 1..=m {
        for start in 0..end {
            let score = best[start] + word_log_prob(&body[bounds[start]..bounds[end]], lex);
            if score > best[end] {
                best[end] = score;
                back[end] = start;
            }
        }
    }

    let mut words = Vec::new();
    let mut end = m;
    while end > 0 {
        let start = back[end];
        words.push(body[bounds[start]..bounds[end]].to_string());
        end = start;
    }
    words.reverse();
    words
}
