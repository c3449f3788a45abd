//! Frequency-ranked spelling correction within edit distance 2.
//!
//! Distances are optimal-string-alignment distances: insertions, deletions,
//! substitutions and adjacent transpositions each cost 1.

use super::Lexicon;

/// Returns `word` if it is in the lexicon; otherwise the most frequent
/// lexicon word at distance 1, else at distance 2, else `word` unchanged.
/// Count ties resolve to the lexicographically smallest candidate.
pub fn spell_correct(word: &str, lex: &Lexicon) -> String {
    if lex.is_empty() || lex.contains(word) {
        return word.to_string();
    }
    let query: Vec<char> = word.chars().collect();
    let n = query.len();

    // (distance, -count, word) minimised
    let mut best: Option<(usize, u64, &[char])> = None;
    for (cand, count) in lex.words_with_len(n.saturating_sub(2), n + 2) {
        let Some(d) = bounded_distance(&query, cand, 2) else {
            continue;
        };
        if d == 0 {
            continue;
        }
        let better = match best {
            None => true,
            Some((bd, bc, bw)) => {
                d < bd || (d == bd && (*count > bc || (*count == bc && cand.as_slice() < bw)))
            }
        };
        if better {
            best = Some((d, *count, cand.as_slice()));
        }
    }
    match best {
        Some((_, _, w)) => w.iter().collect(),
        None => word.to_string(),
    }
}

/// Optimal-string-alignment distance between `a` and `b`, or `None` if it
/// exceeds `max`.
pub fn bounded_distance(a: &[char], b: &[char], max: usize) -> Option<usize> {
    if a.len().abs_diff(b.len()) > max {
        return None;
    }
    let (n, m) = (a.len(), b.len());
    let width = m + 1;
    let mut d = vec![0usize; (n + 1) * width];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * width] = i;
        let mut row_min = i;
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut v = (d[(i - 1) * width + j] + 1)
                .min(d[i * width + j - 1] + 1)
                .min(d[(i - 1) * width + j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                v = v.min(d[(i - 2) * width + j - 2] + 1);
            }
            d[i * width + j] = v;
            row_min = row_min.min(v);
        }
        // the transposition term reaches back two rows, so only prune when
        // both this row and the previous one are over budget
        if row_min > max && (i == 1 || d[(i - 1) * width..i * width].iter().all(|&v| v > max)) {
            return None;
        }
    }
    let dist = d[n * width + m];
    (dist <= max).then_some(dist)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    fn lex(words: &[(&str, u64)]) -> Lexicon {
        Lexicon::from_counts(words.iter().copied()).unwrap()
    }

    #[test]
    fn distance_basics() {
        assert_eq!(bounded_distance(&chars("teh"), &chars("the"), 2), Some(1));
        assert_eq!(bounded_distance(&chars("kitten"), &chars("sitting"), 3), Some(3));
        assert_eq!(bounded_distance(&chars("kitten"), &chars("sitting"), 2), None);
        assert_eq!(bounded_distance(&chars(""), &chars("ab"), 2), Some(2));
        assert_eq!(bounded_distance(&chars("abcd"), &chars("abcd"), 0), Some(0));
    }

    #[test]
    fn in_lexicon_is_identity() {
        let l = lex(&[("the", 100), ("then", 5)]);
        assert_eq!(spell_correct("the", &l), "the");
    }

    #[test]
    fn transposition_is_one_edit() {
        let l = lex(&[("the", 100), ("tea", 3), ("ten", 40)]);
        assert_eq!(spell_correct("teh", &l), "the");
    }

    #[test]
    fn nothing_close_leaves_word() {
        let l = lex(&[("the", 100), ("cat", 3)]);
        assert_eq!(spell_correct("zzqqzz", &l), "zzqqzz");
    }

    #[test]
    fn distance_one_beats_more_frequent_distance_two() {
        let l = lex(&[("cart", 1), ("cbrtxy", 1000)]);
        assert_eq!(spell_correct("cbrt", &l), "cart");
        let l = lex(&[("cbrtxy", 1000)]);
        assert_eq!(spell_correct("cbrt", &l), "cbrtxy");
    }

    #[test]
    fn ties_break_lexicographically() {
        let l = lex(&[("bat", 7), ("cat", 7), ("hat", 7)]);
        assert_eq!(spell_correct("zat", &l), "bat");
    }
}
