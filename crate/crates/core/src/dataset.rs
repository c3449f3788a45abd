//! `label<TAB>text` datasets.

use std::io::BufRead;
use std::path::Path;

use crate::embedvocab::{Vocabulary, UNK_ID};
use crate::error::{Error, Result, ResultExt};
use crate::evaluation::Emotion;
use crate::textprep::{preprocess, tokenize, Lexicon, TokenKind};
use crate::training::Sample;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub label: Option<Emotion>,
    pub text: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Labels {
    /// Every line is `label<TAB>text`; blank lines are skipped.
    Required,
    /// A line is labelled when the part before the first tab is a known
    /// label; otherwise the whole line is text. Every line is kept, so the
    /// example count equals the line count.
    Optional,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dataset {
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.examples.iter().map(|e| e.text.as_str())
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        self.examples.iter().map(|e| e.label.map(Emotion::index)).collect()
    }

    /// Gold indices; fails if any example is unlabelled.
    pub fn gold_indices(&self) -> Result<Vec<usize>> {
        self.examples
            .iter()
            .enumerate()
            .map(|(i, e)| {
                e.label.map(Emotion::index).ok_or_else(|| Error::MalformedLine {
                    line: i + 1,
                    reason: "missing label".into(),
                })
            })
            .collect()
    }
}

pub fn parse_dataset(reader: impl BufRead, labels: Labels) -> Result<Dataset> {
    let mut examples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let lineno = idx + 1;
        match labels {
            Labels::Required => {
                if line.trim().is_empty() {
                    continue;
                }
                let (label, text) = line.split_once('\t').ok_or_else(|| Error::MalformedLine {
                    line: lineno,
                    reason: "expected label<TAB>text".into(),
                })?;
                let label = label.parse::<Emotion>().map_err(|label| Error::UnknownLabel {
                    line: lineno,
                    label,
                })?;
                examples.push(Example {
                    label: Some(label),
                    text: text.to_string(),
                });
            }
            Labels::Optional => {
                let example = match line.split_once('\t') {
                    Some((label, text)) => match label.parse::<Emotion>() {
                        Ok(label) => Example {
                            label: Some(label),
                            text: text.to_string(),
                        },
                        Err(_) => Example {
                            label: None,
                            text: line.to_string(),
                        },
                    },
                    None => Example {
                        label: None,
                        text: line.to_string(),
                    },
                };
                examples.push(example);
            }
        }
    }
    if labels == Labels::Required && examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Dataset { examples })
}

pub fn load_dataset(path: impl AsRef<Path>, labels: Labels) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).in_file(path)?;
    parse_dataset(std::io::BufReader::new(file), labels).in_file(path)
}

/// Preprocesses and encodes text to token ids. Text that yields no tokens
/// becomes a single `<unk>` so every example has length at least one.
pub fn encode_text(text: &str, vocab: &Vocabulary, lexicon: &Lexicon) -> Vec<usize> {
    let ids = vocab.encode(&preprocess(text, lexicon));
    if ids.is_empty() {
        vec![UNK_ID]
    } else {
        ids
    }
}

pub fn encode_dataset(dataset: &Dataset, vocab: &Vocabulary, lexicon: &Lexicon) -> Vec<Vec<usize>> {
    dataset
        .texts()
        .map(|t| encode_text(t, vocab, lexicon))
        .collect()
}

/// Unigram counts of the plain words in `dataset`, for use when no
/// external lexicon is supplied.
pub fn corpus_lexicon(dataset: &Dataset) -> Lexicon {
    Lexicon::from_words(dataset.texts().flat_map(|t| {
        tokenize(t)
            .into_iter()
            .filter(|tok| tok.kind == TokenKind::Word)
            .map(|tok| tok.surface)
    }))
}

/// Encoded, labelled samples; fails on unlabelled examples.
pub fn samples(dataset: &Dataset, vocab: &Vocabulary, lexicon: &Lexicon) -> Result<Vec<Sample>> {
    let golds = dataset.gold_indices()?;
    Ok(encode_dataset(dataset, vocab, lexicon)
        .into_iter()
        .zip(golds)
        .map(|(ids, label)| Sample { ids, label })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_labelled_example() {
        let ds = parse_dataset(
            "sad\tIt's [#TARGETWORD#] when you feel like you are invisible to others.\n".as_bytes(),
            Labels::Required,
        )
        .unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.examples[0].label, Some(Emotion::Sad));
        assert!(ds.examples[0].text.contains("[#TARGETWORD#]"));
    }

    #[test]
    fn tabs_after_the_first_are_text() {
        let ds = parse_dataset("JOY\ta\tb\tc\n".as_bytes(), Labels::Required).unwrap();
        assert_eq!(ds.examples[0].text, "a\tb\tc");
        assert_eq!(ds.examples[0].label, Some(Emotion::Joy));
    }

    #[test]
    fn empty_training_file_is_an_error() {
        assert!(matches!(
            parse_dataset("".as_bytes(), Labels::Required),
            Err(Error::EmptyDataset)
        ));
        assert!(matches!(
            parse_dataset("\n  \n".as_bytes(), Labels::Required),
            Err(Error::EmptyDataset)
        ));
        assert!(parse_dataset("".as_bytes(), Labels::Optional).unwrap().is_empty());
    }

    #[test]
    fn bad_lines_report_line_numbers() {
        let err = parse_dataset("joy\tok\nno tab here\n".as_bytes(), Labels::Required).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 2, .. }));
        let err = parse_dataset("joy\tok\nhappiness\tx\n".as_bytes(), Labels::Required).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { line: 2, ref label } if label == "happiness"));
    }

    #[test]
    fn optional_labels_keep_every_line() {
        let ds = parse_dataset("fear\tboo\njust text\n\nnot a label\tstill text\n".as_bytes(), Labels::Optional)
            .unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.examples[0].label, Some(Emotion::Fear));
        assert_eq!(ds.examples[1].text, "just text");
        assert_eq!(ds.examples[2].text, "");
        assert_eq!(ds.examples[3].text, "not a label\tstill text");
        assert_eq!(ds.labels(), vec![Some(2), None, None, None]);
        assert!(ds.gold_indices().is_err());
    }

    #[test]
    fn empty_text_encodes_to_unknown() {
        let vocab = Vocabulary::reserved_only();
        assert_eq!(encode_text("   ", &vocab, &Lexicon::empty()), vec![UNK_ID]);
    }
}
