//! Readers for the word2vec text and binary embedding formats.
//!
//! Both start with an ASCII header `count dim\n`. The text format follows
//! with one `word v1 … vdim` line per entry. The binary format follows with,
//! per entry, the word bytes terminated by a space and then `dim`
//! little-endian IEEE-754 `f32` values (an optional newline may precede the
//! next word).

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result, ResultExt};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Word2VecFormat {
    Binary,
    Text,
}

impl FromStr for Word2VecFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binary" | "bin" => Ok(Word2VecFormat::Binary),
            "text" | "txt" => Ok(Word2VecFormat::Text),
            other => Err(Error::InvalidConfig(format!(
                "unknown word2vec format {other:?} (expected binary or text)"
            ))),
        }
    }
}

/// Pretrained vectors as read from disk, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct RawEmbeddings {
    dim: usize,
    words: Vec<String>,
    vectors: Vec<f64>,
    index: HashMap<String, usize>,
}

impl RawEmbeddings {
    fn with_capacity(dim: usize, count: usize) -> Self {
        RawEmbeddings {
            dim,
            words: Vec::with_capacity(count),
            vectors: Vec::with_capacity(count * dim),
            index: HashMap::with_capacity(count),
        }
    }

    /// Keeps the first occurrence of a duplicated word.
    fn insert(&mut self, word: String, vector: impl IntoIterator<Item = f64>) {
        if self.index.contains_key(&word) {
            return;
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.vectors.extend(vector);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.as_str(), &self.vectors[i * self.dim..(i + 1) * self.dim]))
    }

    /// Writes the text format. Values are printed with `f32` precision.
    pub fn write_text(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (w, v) in self.iter() {
            write!(out, "{w}")?;
            for x in v {
                write!(out, " {}", *x as f32)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Writes the binary format (vectors narrowed to `f32`).
    pub fn write_binary(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (w, v) in self.iter() {
            out.write_all(w.as_bytes())?;
            out.write_all(b" ")?;
            for x in v {
                out.write_all(&(*x as f32).to_le_bytes())?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let bad = || Error::MalformedHeader(format!("expected \"count dim\", found {line:?}"));
    if fields.len() != 2 {
        return Err(bad());
    }
    let count = fields[0].parse().map_err(|_| bad())?;
    let dim: usize = fields[1].parse().map_err(|_| bad())?;
    if dim == 0 {
        return Err(Error::MalformedHeader("dimension must be positive".into()));
    }
    Ok((count, dim))
}

fn read_header(reader: &mut impl BufRead) -> Result<(usize, usize)> {
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::MalformedHeader("missing header line".into()));
    }
    let line = std::str::from_utf8(&line)
        .map_err(|_| Error::MalformedHeader("header is not UTF-8".into()))?;
    parse_header(line)
}

pub fn read_text(mut reader: impl BufRead) -> Result<RawEmbeddings> {
    let (count, dim) = read_header(&mut reader)?;
    let mut table = RawEmbeddings::with_capacity(dim, count);
    let mut lines = reader.lines();
    for entry in 0..count {
        let line_no = entry + 2;
        let line = loop {
            match lines.next() {
                Some(l) => {
                    let l = l?;
                    if !l.trim().is_empty() {
                        break l;
                    }
                }
                None => {
                    return Err(Error::TruncatedFile(format!(
                        "expected {count} entries, found {entry}"
                    )))
                }
            }
        };
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("line is non-blank").to_string();
        let values = fields
            .map(|f| {
                f.parse::<f32>().map(f64::from).map_err(|_| Error::MalformedLine {
                    line: line_no,
                    reason: format!("bad float {f:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(Error::DimensionMismatch {
                context: format!("word2vec entry {word:?} on line {line_no}"),
                expected: dim,
                found: values.len(),
            });
        }
        table.insert(word, values);
    }
    Ok(table)
}

pub fn read_binary(mut reader: impl BufRead) -> Result<RawEmbeddings> {
    let (count, dim) = read_header(&mut reader)?;
    let mut table = RawEmbeddings::with_capacity(dim, count);
    let mut word = Vec::new();
    let mut buf = vec![0u8; dim * 4];
    for entry in 0..count {
        let truncated = |what: &str| {
            Error::TruncatedFile(format!("entry {entry} of {count}: {what}"))
        };
        // skip separator whitespace left over from the previous entry
        loop {
            let available = reader.fill_buf()?;
            match available.first() {
                None => return Err(truncated("missing word")),
                Some(b) if b.is_ascii_whitespace() => reader.consume(1),
                Some(_) => break,
            }
        }
        word.clear();
        reader.read_until(b' ', &mut word)?;
        if word.pop() != Some(b' ') {
            return Err(truncated("word not terminated by a space"));
        }
        reader.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                truncated("vector cut short")
            } else {
                e.into()
            }
        })?;
        let values = buf
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
        table.insert(String::from_utf8_lossy(&word).into_owned(), values);
    }
    Ok(table)
}

pub fn load_word2vec(path: impl AsRef<Path>, format: Word2VecFormat) -> Result<RawEmbeddings> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).in_file(path)?;
    let reader = std::io::BufReader::new(file);
    match format {
        Word2VecFormat::Binary => read_binary(reader),
        Word2VecFormat::Text => read_text(reader),
    }
    .in_file(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_fixture_parses() {
        let t = read_text("1 2\nhi 0.5 -0.5".as_bytes()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("hi"), Some(&[0.5, -0.5][..]));
    }

    #[test]
    fn text_dimension_mismatch() {
        let err = read_text("2 2\nhi 0.5 -0.5\nyo 1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, found: 1, .. }));
    }

    #[test]
    fn text_missing_entries_is_truncation() {
        let err = read_text("3 1\na 1\nb 2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::TruncatedFile(_)));
    }

    #[test]
    fn malformed_headers() {
        for h in ["", "3\n", "a b\n", "1 2 3\n", "1 0\n"] {
            let err = read_binary(h.as_bytes()).unwrap_err();
            assert!(matches!(err, Error::MalformedHeader(_)), "{h:?} -> {err:?}");
        }
    }

    #[test]
    fn duplicates_keep_first() {
        let t = read_text("2 1\nx 1\nx 2\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("x"), Some(&[1.0][..]));
    }

    #[test]
    fn binary_without_trailing_newlines() {
        let mut bytes = b"2 1\na ".to_vec();
        bytes.extend(1.5f32.to_le_bytes());
        bytes.extend(b"b ");
        bytes.extend((-2.0f32).to_le_bytes());
        let t = read_binary(bytes.as_slice()).unwrap();
        assert_eq!(t.get("a"), Some(&[1.5][..]));
        assert_eq!(t.get("b"), Some(&[-2.0][..]));
    }

    #[test]
    fn writers_round_trip() {
        let t = read_text("2 3\nfoo 0.25 -1 3.5\nbar 1e-3 2 0\n".as_bytes()).unwrap();
        let mut bin = Vec::new();
        t.write_binary(&mut bin).unwrap();
        assert_eq!(read_binary(bin.as_slice()).unwrap(), t);
        let mut txt = Vec::new();
        t.write_text(&mut txt).unwrap();
        assert_eq!(read_text(txt.as_slice()).unwrap(), t);
    }
}
