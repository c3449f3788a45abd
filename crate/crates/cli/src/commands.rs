use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;

use emocaps::checkpoint::{
    load_checkpoint, load_embedding, save_checkpoint, save_embedding, LEXICON_FILE, VOCAB_FILE,
};
use emocaps::dataset::{corpus_lexicon, encode_dataset, load_dataset, samples, Dataset, Labels};
use emocaps::embedvocab::{build_embedding, load_word2vec, EmbeddingTable, Vocabulary, Word2VecFormat};
use emocaps::evaluation::{confusion, error_listing, metrics, Emotion};
use emocaps::textprep::{preprocess, Lexicon};
use emocaps::training::{history_jsonl, predict_all, train, Model, ModelParams, Sample};
use emocaps::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::settings::{RunConfig, Settings};
use crate::{Cli, Command};

pub(crate) fn dispatch(cli: Cli) -> Result<()> {
    let settings = match &cli.config {
        Some(path) => Settings::from_file(path)?.overlay(cli.settings)?,
        None => cli.settings,
    };
    let run = settings.resolve()?;
    match cli.command {
        Command::Preprocess => cmd_preprocess(&run),
        Command::BuildVocab => cmd_build_vocab(&run),
        Command::Train => cmd_train(&run),
        Command::Evaluate { errors } => cmd_evaluate(&run, errors.as_deref()),
        Command::Predict => cmd_predict(&run),
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::from(e).in_file(parent))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::from(e).in_file(path))?;
    Ok(BufWriter::new(file))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    io::BufReader::new(file)
        .lines()
        .map(|l| l.map(|l| l.trim_end_matches('\r').to_string()).map_err(|e| Error::from(e).in_file(path)))
        .collect()
}

fn load_lexicon(run: &RunConfig) -> Result<Option<Lexicon>> {
    run.settings.lexicon.as_deref().map(Lexicon::load).transpose()
}

/// Explicit setting, else `.txt`/`.vec` means text and anything else binary.
fn word2vec_format(run: &RunConfig, path: &Path) -> Word2VecFormat {
    if run.settings.embeddings_format.is_some() {
        return run.embeddings_format;
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("txt") | Some("vec") => Word2VecFormat::Text,
        _ => Word2VecFormat::Binary,
    }
}

fn cmd_preprocess(run: &RunConfig) -> Result<()> {
    let input = run.require(&run.settings.input, "input", "preprocess")?;
    let lex = load_lexicon(run)?.unwrap_or_default();
    let mut out = output(run.settings.output.as_deref())?;
    for line in read_lines(input)? {
        writeln!(out, "{}", preprocess(&line, &lex).join(" "))?;
    }
    out.flush()?;
    Ok(())
}

struct Prepared {
    vocab: Vocabulary,
    lexicon: Lexicon,
    embedding: EmbeddingTable,
}

/// Vocabulary from the training split, lexicon (given or counted from the
/// training text) and the initial embedding table.
fn prepare(run: &RunConfig, train_set: &Dataset) -> Result<Prepared> {
    let lexicon = match load_lexicon(run)? {
        Some(l) => l,
        None => corpus_lexicon(train_set),
    };
    let tokens: Vec<Vec<String>> = train_set.texts().map(|t| preprocess(t, &lexicon)).collect();
    let vocab = Vocabulary::build(tokens.iter().map(|t| t.as_slice()), run.min_count);

    let raw = match &run.settings.embeddings {
        Some(path) => Some(load_word2vec(path, word2vec_format(run, path))?),
        None => None,
    };
    let dim = match &raw {
        Some(r) if run.embed_dim_explicit && r.dim() != run.embed_dim => {
            return Err(Error::DimensionMismatch {
                context: "embed_dim vs word2vec file".into(),
                expected: run.embed_dim,
                found: r.dim(),
            })
        }
        Some(r) => r.dim(),
        None => run.embed_dim,
    };
    let embedding = build_embedding(&vocab, raw.as_ref(), dim, run.train.seed)?;
    if let Some(r) = &raw {
        let covered = vocab.words().iter().filter(|w| r.get(w).is_some()).count();
        eprintln!("word2vec covers {covered} of {} vocabulary entries", vocab.len());
    }
    Ok(Prepared {
        vocab,
        lexicon,
        embedding,
    })
}

fn cmd_build_vocab(run: &RunConfig) -> Result<()> {
    let train_path = run.require(&run.settings.train, "train", "build-vocab")?;
    let dir = run.require(&run.settings.vocab_dir, "vocab_dir", "build-vocab")?;
    let train_set = load_dataset(train_path, Labels::Required)?;
    let prep = prepare(run, &train_set)?;
    fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    prep.vocab.save(dir.join(VOCAB_FILE))?;
    let mut lex = create(&dir.join(LEXICON_FILE))?;
    prep.lexicon.write(&mut lex)?;
    lex.flush()?;
    save_embedding(dir, &prep.embedding)?;
    eprintln!(
        "vocabulary of {} entries, embedding {}x{} written to {}",
        prep.vocab.len(),
        prep.embedding.vocab_size(),
        prep.embedding.dim(),
        dir.display()
    );
    Ok(())
}

fn load_prepared(dir: &Path) -> Result<Prepared> {
    let vocab = Vocabulary::load(dir.join(VOCAB_FILE))?;
    let lex_path = dir.join(LEXICON_FILE);
    let lexicon = if lex_path.exists() {
        Lexicon::load(&lex_path)?
    } else {
        Lexicon::empty()
    };
    let embedding = load_embedding(dir)?;
    if embedding.vocab_size() != vocab.len() {
        return Err(Error::DimensionMismatch {
            context: "embedding rows vs vocabulary".into(),
            expected: vocab.len(),
            found: embedding.vocab_size(),
        }
        .in_file(dir));
    }
    Ok(Prepared {
        vocab,
        lexicon,
        embedding,
    })
}

fn cmd_train(run: &RunConfig) -> Result<()> {
    let train_path = run.require(&run.settings.train, "train", "train")?;
    let ck_dir = run.require(&run.settings.checkpoint, "checkpoint", "train")?;
    let train_set = load_dataset(train_path, Labels::Required)?;
    let prep = match &run.settings.vocab_dir {
        Some(dir) => load_prepared(dir)?,
        None => prepare(run, &train_set)?,
    };
    let train_samples = samples(&train_set, &prep.vocab, &prep.lexicon).map_err(|e| e.in_file(train_path))?;
    let dev_samples: Option<Vec<Sample>> = match &run.settings.dev {
        Some(p) => {
            let ds = load_dataset(p, Labels::Required)?;
            Some(samples(&ds, &prep.vocab, &prep.lexicon).map_err(|e| e.in_file(p))?)
        }
        None => None,
    };

    let mut config = run.model_config(prep.vocab.len());
    if prep.embedding.dim() != config.embed_dim {
        if run.embed_dim_explicit {
            return Err(Error::DimensionMismatch {
                context: "embed_dim vs prepared embedding".into(),
                expected: config.embed_dim,
                found: prep.embedding.dim(),
            });
        }
        config.embed_dim = prep.embedding.dim();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(run.train.seed);
    rng.set_stream(1);
    let params = ModelParams::init(&config, prep.embedding, &mut rng)?;

    let outcome = train(
        Model { config, params },
        &train_samples,
        dev_samples.as_deref(),
        &run.train,
        |r| {
            eprintln!(
                "epoch {:>3}  loss {:.4}  dev macro-F1 {:.4}  {:.1}s",
                r.epoch, r.train_loss, r.dev_macro_f1, r.seconds
            )
        },
    )?;

    save_checkpoint(
        ck_dir,
        &outcome.model,
        &prep.vocab,
        Some(&prep.lexicon),
        run.hyperparameters(),
        run.train.seed,
    )?;
    let history_path = run
        .settings
        .history
        .clone()
        .unwrap_or_else(|| ck_dir.join("history.jsonl"));
    let mut h = create(&history_path)?;
    h.write_all(history_jsonl(&outcome.history)?.as_bytes())?;
    h.flush()?;
    eprintln!(
        "best epoch {} of {}; checkpoint written to {}",
        outcome.best_epoch,
        outcome.history.len(),
        ck_dir.display()
    );
    Ok(())
}

/// Labels from a file holding one label per line, optionally followed by
/// `<TAB>text`. Returns the labels and the text (or an empty string).
fn read_labels(path: &Path) -> Result<(Vec<usize>, Vec<String>)> {
    let mut labels = Vec::new();
    let mut texts = Vec::new();
    for (i, line) in read_lines(path)?.into_iter().enumerate() {
        let (label, text) = line.split_once('\t').unwrap_or((&line, ""));
        let e = label.parse::<Emotion>().map_err(|label| {
            Error::UnknownLabel {
                line: i + 1,
                label,
            }
            .in_file(path)
        })?;
        labels.push(e.index());
        texts.push(text.to_string());
    }
    Ok((labels, texts))
}

fn parse_pair(text: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidConfig(format!("--errors expects gold:pred labels, got {text:?}"));
    let (g, p) = text.split_once(':').ok_or_else(bad)?;
    let g = g.parse::<Emotion>().map_err(|_| bad())?;
    let p = p.parse::<Emotion>().map_err(|_| bad())?;
    Ok((g.index(), p.index()))
}

fn cmd_evaluate(run: &RunConfig, errors: Option<&str>) -> Result<()> {
    let pair = errors.map(parse_pair).transpose()?;
    let (golds, preds, texts) = match (&run.settings.predictions, &run.settings.checkpoint) {
        (Some(pred_path), _) => {
            let gold_path = run.require(&run.settings.gold, "gold", "evaluate")?;
            let (golds, texts) = read_labels(gold_path)?;
            let (preds, _) = read_labels(pred_path)?;
            (golds, preds, texts)
        }
        (None, Some(ck_dir)) => {
            let test_path = run.require(&run.settings.test, "test", "evaluate")?;
            let ck = load_checkpoint(ck_dir)?;
            let ds = load_dataset(test_path, Labels::Required)?;
            let inputs = encode_dataset(&ds, &ck.vocab, &ck.lexicon);
            let preds = predict_all(&ck.model, &inputs, run.train.workers)?;
            let golds = ds.gold_indices()?;
            (golds, preds, ds.texts().map(str::to_string).collect())
        }
        (None, None) => {
            return Err(Error::InvalidConfig(
                "`evaluate` needs --predictions with --gold, or --checkpoint with --test".into(),
            ))
        }
    };

    let report = metrics(&confusion(&golds, &preds)?);
    let mut out = output(run.settings.output.as_deref())?;
    write!(out, "{}", report.table())?;
    if let Some((g, p)) = pair {
        let gold_opt: Vec<Option<usize>> = golds.iter().map(|&g| Some(g)).collect();
        let hits = error_listing(&texts, &gold_opt, &preds, g, p)?;
        writeln!(
            out,
            "\n{} examples with gold {} predicted as {}:",
            hits.len(),
            Emotion::ALL[g],
            Emotion::ALL[p]
        )?;
        for t in hits {
            writeln!(out, "  {t}")?;
        }
    }
    out.flush()?;
    if let Some(path) = &run.settings.report {
        let mut f = create(path)?;
        serde_json::to_writer_pretty(&mut f, &report.to_json())?;
        writeln!(f)?;
        f.flush()?;
    }
    Ok(())
}

fn cmd_predict(run: &RunConfig) -> Result<()> {
    let ck_dir = run.require(&run.settings.checkpoint, "checkpoint", "predict")?;
    let input = run.require(&run.settings.input, "input", "predict")?;
    let ck = load_checkpoint(ck_dir)?;
    let ds = load_dataset(input, Labels::Optional)?;
    let inputs = encode_dataset(&ds, &ck.vocab, &ck.lexicon);
    let preds = predict_all(&ck.model, &inputs, run.train.workers).map_err(|e| e.in_file(input))?;
    let mut out = output(run.settings.output.as_deref())?;
    for p in preds {
        writeln!(out, "{}", Emotion::ALL[p])?;
    }
    out.flush()?;
    Ok(())
}
