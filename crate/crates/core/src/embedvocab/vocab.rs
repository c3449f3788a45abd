use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result, ResultExt};
use crate::textprep::tags;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

/// Word ↔ id mapping.
///
/// Ids `0` and `1` are `<pad>` and `<unk>`; ids `2..10` are the reserved
/// preprocessing tags in [`tags::ALL`] order. Corpus words follow.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

fn reserved() -> impl Iterator<Item = &'static str> {
    [PAD, UNK].into_iter().chain(tags::ALL)
}

impl Vocabulary {
    /// A vocabulary holding only the reserved entries.
    pub fn reserved_only() -> Self {
        let mut v = Vocabulary {
            words: Vec::new(),
            index: HashMap::new(),
        };
        for w in reserved() {
            v.push(w.to_string());
        }
        v
    }

    pub fn num_reserved() -> usize {
        2 + tags::ALL.len()
    }

    fn push(&mut self, word: String) -> usize {
        if let Some(&id) = self.index.get(&word) {
            return id;
        }
        let id = self.words.len();
        self.index.insert(word.clone(), id);
        self.words.push(word);
        id
    }

    /// Builds a vocabulary from tokenized sentences. Words occurring fewer
    /// than `min_count` times are left out; the rest are ordered by
    /// descending frequency, ties alphabetically.
    pub fn build<'a, I, S>(sentences: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for sentence in sentences {
            for w in sentence {
                *counts.entry(w.as_ref()).or_default() += 1;
            }
        }
        let mut vocab = Self::reserved_only();
        let mut entries: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(w, c)| c >= min_count.max(1) && !vocab.index.contains_key(w))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        for (w, _) in entries {
            vocab.push(w.to_string());
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Id of `word`, or `<unk>` when absent.
    pub fn id(&self, word: &str) -> usize {
        self.get(word).unwrap_or(UNK_ID)
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn encode<S: AsRef<str>>(&self, surfaces: &[S]) -> Vec<usize> {
        surfaces.iter().map(|s| self.id(s.as_ref())).collect()
    }

    /// Writes `id<TAB>word` lines in id order.
    pub fn write(&self, mut out: impl Write) -> Result<()> {
        for (id, w) in self.words.iter().enumerate() {
            writeln!(out, "{id}\t{w}")?;
        }
        Ok(())
    }

    /// Reads `id<TAB>word` lines. Ids must be contiguous from 0 and the
    /// reserved entries must sit at their fixed ids.
    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut v = Vocabulary {
            words: Vec::new(),
            index: HashMap::new(),
        };
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let malformed = |reason: String| Error::MalformedLine {
                line: idx + 1,
                reason,
            };
            let (id, word) = line
                .split_once('\t')
                .ok_or_else(|| malformed("expected id<TAB>word".into()))?;
            let id: usize = id
                .parse()
                .map_err(|_| malformed(format!("bad id {id:?}")))?;
            if id != v.words.len() {
                return Err(malformed(format!("expected id {}, found {id}", v.words.len())));
            }
            if v.index.contains_key(word) {
                return Err(malformed(format!("duplicate word {word:?}")));
            }
            v.push(word.to_string());
        }
        for (id, w) in reserved().enumerate() {
            if v.word(id) != Some(w) {
                return Err(Error::InvalidConfig(format!(
                    "vocabulary id {id} must be the reserved entry {w:?}"
                )));
            }
        }
        Ok(v)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).in_file(path)?;
        Self::read(std::io::BufReader::new(file)).in_file(path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).in_file(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write(&mut w).in_file(path)?;
        w.flush().in_file(path)
    }
}
