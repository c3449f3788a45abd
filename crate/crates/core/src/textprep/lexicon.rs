use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result, ResultExt};

/// Unigram word counts backing hashtag segmentation and spell correction.
///
/// Keys are lowercase, non-empty and free of asterisks.
#[derive(Clone, Debug, Default)]
pub struct Lexicon {
    counts: HashMap<String, u64>,
    total: u64,
    // words bucketed by char length, sorted, for bounded-distance scans
    by_len: BTreeMap<usize, Vec<(Vec<char>, u64)>>,
}

impl Lexicon {
    pub fn empty() -> Self {
        Lexicon::default()
    }

    /// Builds a lexicon from `(word, count)` pairs; duplicates are summed and
    /// words are lowercased. Empty or asterisk-bearing words are rejected.
    pub fn from_counts<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for (word, count) in pairs {
            let word = word.as_ref().trim().to_lowercase();
            if word.is_empty() || word.contains('*') {
                return Err(Error::InvalidConfig(format!(
                    "lexicon word {word:?} must be non-empty and asterisk-free"
                )));
            }
            *counts.entry(word).or_default() += count;
        }
        Ok(Self::from_map(counts))
    }

    /// Counts every alphabetic word in `words` once per occurrence.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for w in words {
            let w = w.as_ref().to_lowercase();
            if !w.is_empty() && w.chars().all(char::is_alphabetic) {
                *counts.entry(w).or_default() += 1;
            }
        }
        Self::from_map(counts)
    }

    fn from_map(mut counts: HashMap<String, u64>) -> Self {
        counts.retain(|_, c| *c > 0);
        let total = counts.values().sum();
        let mut by_len: BTreeMap<usize, Vec<(Vec<char>, u64)>> = BTreeMap::new();
        for (w, &c) in &counts {
            let chars: Vec<char> = w.chars().collect();
            by_len.entry(chars.len()).or_default().push((chars, c));
        }
        for bucket in by_len.values_mut() {
            bucket.sort();
        }
        Lexicon {
            counts,
            total,
            by_len,
        }
    }

    /// Reads `word<TAB>count` lines. Blank lines are skipped.
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut pairs = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |reason: &str| Error::MalformedLine {
                line: idx + 1,
                reason: reason.to_string(),
            };
            let (word, count) = line
                .split_once('\t')
                .ok_or_else(|| malformed("expected word<TAB>count"))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| malformed("count is not a non-negative integer"))?;
            if word.trim().is_empty() || word.contains('*') {
                return Err(malformed("word must be non-empty and asterisk-free"));
            }
            pairs.push((word.to_string(), count));
        }
        Self::from_counts(pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).in_file(path)?;
        Self::from_reader(std::io::BufReader::new(file)).in_file(path)
    }

    /// Writes the lexicon as sorted `word<TAB>count` lines.
    pub fn write(&self, mut out: impl std::io::Write) -> Result<()> {
        let mut entries: Vec<_> = self.counts.iter().collect();
        entries.sort();
        for (w, c) in entries {
            writeln!(out, "{w}\t{c}")?;
        }
        Ok(())
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.counts.contains_key(word)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(w, &c)| (w.as_str(), c))
    }

    /// Words whose char length lies in `lo..=hi`, with counts.
    pub(crate) fn words_with_len(
        &self,
        lo: usize,
        hi: usize,
    ) -> impl Iterator<Item = &(Vec<char>, u64)> {
        self.by_len.range(lo..=hi).flat_map(|(_, v)| v.iter())
    }
}
