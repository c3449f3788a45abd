//! Checkpoint directories.
//!
//! ```text
//! <dir>/manifest.json   {version, dtype, seed, model, hyperparameters, shapes: [{name, shape}]}
//! <dir>/params.bin      little-endian f64 values of every tensor, in manifest order
//! <dir>/vocab.tsv       id<TAB>word
//! <dir>/lexicon.tsv     word<TAB>count (optional)
//! ```

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::embedvocab::{EmbeddingTable, Vocabulary};
use crate::error::{Error, Result, ResultExt};
use crate::nncore::TensorView;
use crate::textprep::Lexicon;
use crate::training::{Model, ModelConfig, ModelParams};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const LEXICON_FILE: &str = "lexicon.tsv";
pub const EMBEDDING_MANIFEST_FILE: &str = "embedding.json";
pub const EMBEDDING_FILE: &str = "embedding.bin";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub dtype: String,
    pub seed: u64,
    pub model: ModelConfig,
    pub hyperparameters: Value,
    pub shapes: Vec<ShapeEntry>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub model: Model,
    pub vocab: Vocabulary,
    pub lexicon: Lexicon,
}

fn shapes_of(tensors: &[TensorView<'_>]) -> Vec<ShapeEntry> {
    tensors
        .iter()
        .map(|t| ShapeEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
        })
        .collect()
}

pub fn write_payload(mut out: impl Write, tensors: &[TensorView<'_>]) -> Result<()> {
    for t in tensors {
        for v in t.data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Fills `targets` in order from `input`; the input must hold exactly
/// enough bytes.
pub fn read_payload(mut input: impl Read, targets: Vec<&mut [f64]>) -> Result<()> {
    let mut buf = [0u8; 8];
    let expected: usize = targets.iter().map(|t| t.len()).sum();
    let mut filled = 0;
    for t in targets {
        for v in t.iter_mut() {
            input.read_exact(&mut buf).map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => Error::TruncatedFile(format!(
                    "payload holds {filled} of {expected} values"
                )),
                _ => Error::Io(e),
            })?;
            *v = f64::from_le_bytes(buf);
            filled += 1;
        }
    }
    let mut extra = Vec::new();
    input.read_to_end(&mut extra)?;
    if !extra.is_empty() {
        return Err(Error::Checkpoint(format!(
            "payload has {} trailing bytes",
            extra.len()
        )));
    }
    Ok(())
}

fn check_shapes(expected: &[ShapeEntry], found: &[ShapeEntry]) -> Result<()> {
    if expected.len() != found.len() {
        return Err(Error::Checkpoint(format!(
            "manifest lists {} tensors, model has {}",
            found.len(),
            expected.len()
        )));
    }
    for (e, f) in expected.iter().zip(found) {
        if e != f {
            return Err(Error::Checkpoint(format!(
                "tensor {} has shape {:?} in the manifest, model expects {} {:?}",
                f.name, f.shape, e.name, e.shape
            )));
        }
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).in_file(path)
}

pub fn save_checkpoint(
    dir: impl AsRef<Path>,
    model: &Model,
    vocab: &Vocabulary,
    lexicon: Option<&Lexicon>,
    hyperparameters: Value,
    seed: u64,
) -> Result<()> {
    let dir = dir.as_ref();
    if vocab.len() != model.config.vocab_size {
        return Err(Error::DimensionMismatch {
            context: "vocabulary size vs model".into(),
            expected: model.config.vocab_size,
            found: vocab.len(),
        });
    }
    fs::create_dir_all(dir).in_file(dir)?;
    let tensors = model.params.tensors();
    let manifest = Manifest {
        version: FORMAT_VERSION,
        dtype: "f64".into(),
        seed,
        model: model.config.clone(),
        hyperparameters,
        shapes: shapes_of(&tensors),
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_file(&dir.join(MANIFEST_FILE), json.as_bytes())?;

    let path = dir.join(PARAMS_FILE);
    let file = fs::File::create(&path).in_file(&path)?;
    write_payload(BufWriter::new(file), &tensors).in_file(&path)?;

    vocab.save(dir.join(VOCAB_FILE))?;
    let path = dir.join(LEXICON_FILE);
    match lexicon {
        Some(lex) => {
            let mut bytes = Vec::new();
            lex.write(&mut bytes)?;
            write_file(&path, &bytes)?;
        }
        None => {
            if path.exists() {
                fs::remove_file(&path).in_file(&path)?;
            }
        }
    }
    Ok(())
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).in_file(&path)?;
    let manifest: Manifest = serde_json::from_str(&text).in_file(&path)?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}",
            manifest.version
        ))
        .in_file(path));
    }
    if manifest.dtype != "f64" {
        return Err(Error::Checkpoint(format!("unsupported dtype {:?}", manifest.dtype)).in_file(path));
    }
    Ok(manifest)
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Checkpoint> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    manifest.model.validate().in_file(dir.join(MANIFEST_FILE))?;
    let mut params = ModelParams::zeros(&manifest.model);
    check_shapes(&shapes_of(&params.tensors()), &manifest.shapes).in_file(dir.join(MANIFEST_FILE))?;

    let path = dir.join(PARAMS_FILE);
    let file = fs::File::open(&path).in_file(&path)?;
    read_payload(std::io::BufReader::new(file), params.tensors_mut()).in_file(&path)?;

    let vocab = Vocabulary::load(dir.join(VOCAB_FILE))?;
    if vocab.len() != manifest.model.vocab_size {
        return Err(Error::DimensionMismatch {
            context: "checkpoint vocabulary size".into(),
            expected: manifest.model.vocab_size,
            found: vocab.len(),
        }
        .in_file(dir.join(VOCAB_FILE)));
    }
    let lex_path = dir.join(LEXICON_FILE);
    let lexicon = if lex_path.exists() {
        Lexicon::load(&lex_path)?
    } else {
        Lexicon::empty()
    };
    Ok(Checkpoint {
        model: Model {
            config: manifest.model.clone(),
            params,
        },
        manifest,
        vocab,
        lexicon,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct EmbeddingManifest {
    version: u32,
    dtype: String,
    shapes: Vec<ShapeEntry>,
}

/// Writes an embedding table as `embedding.json` + `embedding.bin` in `dir`.
pub fn save_embedding(dir: impl AsRef<Path>, table: &EmbeddingTable) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).in_file(dir)?;
    let tensors = [TensorView {
        name: "embedding.weight".into(),
        shape: table.weights.shape().to_vec(),
        data: table.weights.as_slice(),
    }];
    let manifest = EmbeddingManifest {
        version: FORMAT_VERSION,
        dtype: "f64".into(),
        shapes: shapes_of(&tensors),
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_file(&dir.join(EMBEDDING_MANIFEST_FILE), json.as_bytes())?;
    let path = dir.join(EMBEDDING_FILE);
    let file = fs::File::create(&path).in_file(&path)?;
    write_payload(BufWriter::new(file), &tensors).in_file(&path)
}

pub fn load_embedding(dir: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let dir = dir.as_ref();
    let mpath = dir.join(EMBEDDING_MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).in_file(&mpath)?;
    let manifest: EmbeddingManifest = serde_json::from_str(&text).in_file(&mpath)?;
    let shape = match manifest.shapes.as_slice() {
        [entry] if entry.shape.len() == 2 && manifest.dtype == "f64" => entry.shape.clone(),
        _ => {
            return Err(Error::Checkpoint("expected one 2-d f64 embedding tensor".into()).in_file(mpath))
        }
    };
    let mut table = EmbeddingTable::zeros(shape[0], shape[1]);
    let path = dir.join(EMBEDDING_FILE);
    let file = fs::File::open(&path).in_file(&path)?;
    read_payload(std::io::BufReader::new(file), vec![table.weights.as_mut_slice()]).in_file(&path)?;
    Ok(table)
}

/// Paths written by [`save_checkpoint`].
pub fn checkpoint_files(dir: impl AsRef<Path>) -> Vec<PathBuf> {
    let dir = dir.as_ref();
    [MANIFEST_FILE, PARAMS_FILE, VOCAB_FILE, LEXICON_FILE]
        .iter()
        .map(|f| dir.join(f))
        .filter(|p| p.exists())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedvocab::build_embedding;
    use crate::training::predict_proba;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_model(vocab: &Vocabulary) -> Model {
        let config = ModelConfig {
            vocab_size: vocab.len(),
            embed_dim: 6,
            hidden_dim: 3,
            num_capsules: 2,
            capsule_dim: 4,
            routing_iters: 3,
            num_classes: 6,
            dense_bias: true,
        };
        let table = build_embedding(vocab, None, 6, 4).unwrap();
        let params = ModelParams::init(&config, table, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        Model { config, params }
    }

    fn vocab() -> Vocabulary {
        let sents = [vec!["happy", "day"], vec!["sad", "day"]];
        Vocabulary::build(sents.iter().map(|s| s.as_slice()), 1)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = vocab();
        let model = small_model(&vocab);
        let lex = Lexicon::from_words(["happy", "day"]);
        save_checkpoint(dir.path(), &model, &vocab, Some(&lex), serde_json::json!({"lr": 0.001}), 7).unwrap();
        let ck = load_checkpoint(dir.path()).unwrap();
        assert_eq!(ck.model, model);
        assert_eq!(ck.vocab, vocab);
        assert_eq!(ck.lexicon.count("day"), 1);
        assert_eq!(ck.manifest.seed, 7);
        let ids = [2usize, vocab.len() - 1];
        assert_eq!(
            predict_proba(&ids, &ck.model).unwrap(),
            predict_proba(&ids, &model).unwrap()
        );
    }

    #[test]
    fn truncated_or_padded_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = vocab();
        save_checkpoint(dir.path(), &small_model(&vocab), &vocab, None, Value::Null, 0).unwrap();
        let path = dir.path().join(PARAMS_FILE);
        let bytes = fs::read(&path).unwrap();

        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err();
        assert!(matches!(err.root(), Error::TruncatedFile(_)), "{err}");

        let mut longer = bytes.clone();
        longer.extend_from_slice(&[0; 8]);
        fs::write(&path, &longer).unwrap();
        assert!(matches!(load_checkpoint(dir.path()).unwrap_err().root(), Error::Checkpoint(_)));
    }

    #[test]
    fn shape_tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = vocab();
        save_checkpoint(dir.path(), &small_model(&vocab), &vocab, None, Value::Null, 0).unwrap();
        let mpath = dir.path().join(MANIFEST_FILE);
        let mut m: Manifest = serde_json::from_str(&fs::read_to_string(&mpath).unwrap()).unwrap();
        m.shapes[1].shape[0] += 1;
        fs::write(&mpath, serde_json::to_string(&m).unwrap()).unwrap();
        assert!(matches!(load_checkpoint(dir.path()).unwrap_err().root(), Error::Checkpoint(_)));
    }

    #[test]
    fn embedding_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let table = build_embedding(&vocab(), None, 5, 3).unwrap();
        save_embedding(dir.path(), &table).unwrap();
        assert_eq!(load_embedding(dir.path()).unwrap(), table);
    }
}
