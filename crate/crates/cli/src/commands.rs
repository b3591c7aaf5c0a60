use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semtag::data::{
    build_char_vocab, build_word_vocab, load_conll, load_tagset, BuiltinTagset, Corpus, Sentence,
    Split, TagSet, TagSource, TaskTag, Token, Validation,
};
use semtag::eval::{
    accuracy, bootstrap_significance, mfc_baseline, report, EvalResult, ResampleUnit, MIN_RESAMPLES,
};
use semtag::layers::{init_embeddings, EmbeddingSource};
use semtag::model::{build_model, load_model, save_model, ModelConfig, TaskSetup, TrainedModel};
use semtag::train::{make_interleaved_corpus, train_loop, TrainOptions};

use crate::settings::RunConfig;
use crate::{CensusArgs, CliError, OutputArgs, SignificanceArgs, TagArgs, Unit};

/// A builtin name or a tagset file.
fn tagset(name: &str) -> Result<TagSet, CliError> {
    let source = match name.parse::<BuiltinTagset>() {
        Ok(b) => TagSource::Builtin(b),
        Err(_) => {
            let p = Path::new(name);
            if !p.is_file() {
                return Err(CliError::Usage(format!(
                    "tagset {name:?} is neither builtin nor a file"
                )));
            }
            TagSource::File(p)
        }
    };
    Ok(load_tagset(source)?)
}

/// An input path that must be set and exist.
fn input<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    let p = p.as_deref().ok_or_else(|| {
        CliError::Usage(format!("missing {key} path (--{})", key.replace('_', "-")))
    })?;
    existing(p, key)
}

fn existing<'a>(p: &'a Path, key: &str) -> Result<&'a Path, CliError> {
    if !p.is_file() {
        return Err(CliError::Usage(format!(
            "{key} path {} does not exist",
            p.display()
        )));
    }
    Ok(p)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| {
        semtag::Error::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn warn(corpus: &Corpus) {
    for w in &corpus.warnings {
        eprintln!("warning: {w}");
    }
}

fn with_tags(sentences: &[Sentence], tags: &[Vec<String>]) -> Vec<Sentence> {
    sentences
        .iter()
        .zip(tags)
        .map(|(s, t)| Sentence {
            tokens: s
                .tokens
                .iter()
                .zip(t)
                .map(|(tok, t)| Token::new(tok.surface.clone(), t.clone()))
                .collect(),
            ..s.clone()
        })
        .collect()
}

/// Prints the table and writes the optional report and predictions.
fn emit(
    label: &str,
    r: &EvalResult,
    test: &Corpus,
    pred: &[Vec<String>],
    out: &OutputArgs,
) -> Result<(), CliError> {
    let (table, machine) = report(&[(label, r)]);
    print!("{table}");
    if let Some(p) = &out.report {
        write_file(p, &machine)?;
    }
    if let Some(p) = &out.predictions {
        write_file(
            p,
            &semtag::data::write_conll(&with_tags(&test.sentences, pred)),
        )?;
    }
    Ok(())
}

fn model_label(m: &TrainedModel) -> String {
    let aux = if m.config.use_aux { "+aux" } else { "" };
    format!("{}{aux}", m.config.arch)
}

pub fn train(c: &RunConfig) -> Result<(), CliError> {
    let train_path = input(&c.train, "train")?;
    let dev_path = input(&c.dev, "dev")?;
    let model_path = c
        .model
        .as_deref()
        .ok_or_else(|| CliError::Usage("missing model output path (--model)".into()))?;
    let embeddings = match &c.embeddings {
        Some(_) => Some(input(&c.embeddings, "embeddings")?),
        None => None,
    };
    let joint = c.pos_train.is_some() || c.pos_dev.is_some();
    let (pos_train, pos_dev) = if joint {
        (
            Some(input(&c.pos_train, "pos_train")?),
            Some(input(&c.pos_dev, "pos_dev")?),
        )
    } else {
        (None, None)
    };

    let tags = tagset(&c.tagset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    rng.set_stream(2);
    let st_train = load_conll(
        train_path,
        &tags,
        c.validation,
        Split::Train,
        TaskTag::MainSt,
    )?;
    let st_dev = load_conll(dev_path, &tags, c.validation, Split::Dev, TaskTag::MainSt)?;
    let (setup, train, dev) = match (pos_train, pos_dev) {
        (Some(pt), Some(pd)) => {
            let pos = tagset(&c.pos_tagset)?;
            let p_train = load_conll(pt, &pos, c.validation, Split::Train, TaskTag::MainPos)?;
            let p_dev = load_conll(pd, &pos, c.validation, Split::Dev, TaskTag::MainPos)?;
            let train = make_interleaved_corpus(st_train, p_train, &mut rng)?;
            let mut dev = st_dev;
            dev.extend(p_dev);
            (TaskSetup::Joint { pos, st: tags }, train, dev)
        }
        _ => (TaskSetup::Single { tags }, st_train, st_dev),
    };
    warn(&train);
    warn(&dev);

    let config = ModelConfig::new(c.arch, c.aux, &setup, c.hyper.clone())?;
    let words = if c.arch.uses_words() {
        let base = build_word_vocab(&train, c.hyper.min_count);
        let source = embeddings.map_or(EmbeddingSource::Random, EmbeddingSource::Pretrained);
        Some(init_embeddings(source, &base, c.hyper.d_w, &mut rng)?)
    } else {
        if embeddings.is_some() {
            eprintln!(
                "warning: {} reads no word embeddings; --embeddings ignored",
                c.arch
            );
        }
        None
    };
    let chars = c.arch.uses_chars().then(|| build_char_vocab(&train));
    let mut model = build_model(config, setup, words, chars, c.seed)?;
    // The output path is not a property of the model; leaving it out keeps
    // the container bytes independent of where it is written.
    model.run_config = c
        .entries()
        .into_iter()
        .filter(|(k, _)| *k != "model")
        .map(|(k, v)| (k.to_string(), v))
        .collect();

    let echo = c.to_text();
    eprint!("{echo}");
    eprintln!("{} trainable parameters", model.census());
    let (model, history) = train_loop(model, &train, &dev, &TrainOptions::default())?;
    for r in &history.epochs {
        eprintln!("{}", r.to_line());
    }
    save_model(&model, model_path)?;

    // The log doubles as a config file: history lines are comments.
    let mut log = echo;
    for line in history.to_log().lines() {
        log.push_str("# ");
        log.push_str(line);
        log.push('\n');
    }
    let mut log_path = model_path.as_os_str().to_owned();
    log_path.push(".log");
    write_file(Path::new(&log_path), &log)?;
    eprintln!(
        "best epoch {} of {}; wrote {}",
        model.training.best_epoch.unwrap_or(0),
        model.training.epochs_run,
        model_path.display()
    );
    Ok(())
}

/// One token per line (first tab column), blank lines between sentences.
fn read_tokens(text: &str, origin: &str) -> Result<Vec<Sentence>, CliError> {
    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !tokens.is_empty() {
                sentences.push(Sentence::new(std::mem::take(&mut tokens), TaskTag::MainSt));
            }
            continue;
        }
        let surface = line.split('\t').next().unwrap_or_default();
        if surface.is_empty() {
            return Err(semtag::Error::Format {
                path: origin.to_string(),
                line: i + 1,
                detail: "empty token surface".into(),
            }
            .into());
        }
        tokens.push(Token::new(surface, ""));
    }
    if !tokens.is_empty() {
        sentences.push(Sentence::new(tokens, TaskTag::MainSt));
    }
    Ok(sentences)
}

pub fn tag(args: &TagArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    if let Some(name) = &args.tagset {
        let want = tagset(name)?;
        let have = model.setup.main_tags();
        if want.fine_tags() != have.fine_tags() {
            return Err(CliError::Usage(format!(
                "model predicts tagset {:?} ({} tags), not the requested {:?} ({} tags)",
                have.name(),
                have.fine_tags().len(),
                want.name(),
                want.fine_tags().len()
            )));
        }
    }
    let (text, origin) = if args.input.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|source| semtag::Error::Io {
                path: "<stdin>".into(),
                source,
            })?;
        (s, "<stdin>".to_string())
    } else {
        let p = existing(&args.input, "input")?;
        let s = std::fs::read_to_string(p).map_err(|source| semtag::Error::Io {
            path: p.to_path_buf(),
            source,
        })?;
        (s, p.display().to_string())
    };
    let sentences = read_tokens(&text, &origin)?;
    let pred = model.predict_sentences(&sentences)?;
    let out = semtag::data::write_conll(&with_tags(&sentences, &pred));
    match &args.output {
        Some(p) => write_file(p, &out),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(out.as_bytes()).map_err(|source| {
                CliError::from(semtag::Error::Io {
                    path: "<stdout>".into(),
                    source,
                })
            })
        }
    }
}

pub fn eval(c: &RunConfig, out: &OutputArgs) -> Result<(), CliError> {
    let model_path = input(&c.model, "model")?;
    let test_path = input(&c.test, "test")?;
    let model = load_model(model_path)?;
    let task = if model.setup.is_joint() {
        TaskTag::MainPos
    } else {
        TaskTag::MainSt
    };
    let test = load_conll(
        test_path,
        model.setup.main_tags(),
        c.validation,
        Split::Test,
        task,
    )?;
    warn(&test);
    let pred = model.predict_sentences(&test.sentences)?;
    let gold: Vec<Vec<String>> = test.sentences.iter().map(Sentence::tags).collect();
    let result = accuracy(&pred, &gold)?;
    emit(&model_label(&model), &result, &test, &pred, out)
}

pub fn baseline(c: &RunConfig, out: &OutputArgs) -> Result<(), CliError> {
    let train_path = input(&c.train, "train")?;
    let test_path = input(&c.test, "test")?;
    let tags = tagset(&c.tagset)?;
    let train = load_conll(
        train_path,
        &tags,
        c.validation,
        Split::Train,
        TaskTag::MainSt,
    )?;
    let test = load_conll(test_path, &tags, c.validation, Split::Test, TaskTag::MainSt)?;
    warn(&train);
    warn(&test);
    let (pred, result) = mfc_baseline(&train, &test)?;
    emit("mfc", &result, &test, &pred, out)
}

fn validation(lenient: bool) -> Validation {
    if lenient {
        Validation::Lenient
    } else {
        Validation::Strict
    }
}

pub fn significance(args: &SignificanceArgs) -> Result<(), CliError> {
    if args.resamples < MIN_RESAMPLES {
        return Err(CliError::Usage(format!(
            "--resamples {} is below the minimum of {MIN_RESAMPLES}",
            args.resamples
        )));
    }
    let tags = tagset(&args.tagset)?;
    let v = validation(args.lenient);
    let mut corpora = Vec::new();
    for (p, key) in [
        (&args.a, "system A"),
        (&args.b, "system B"),
        (&args.gold, "gold"),
    ] {
        let p = existing(p, key)?;
        corpora.push(load_conll(p, &tags, v, Split::Test, TaskTag::MainSt)?);
    }
    let gold = &corpora[2];
    for (c, name) in corpora[..2].iter().zip(["A", "B"]) {
        let same = c.len() == gold.len()
            && c.sentences
                .iter()
                .zip(&gold.sentences)
                .all(|(s, g)| s.surfaces().eq(g.surfaces()));
        if !same {
            return Err(CliError::Usage(format!(
                "system {name} output is not aligned with the gold tokens"
            )));
        }
    }
    let tags: Vec<Vec<Vec<String>>> = corpora
        .iter()
        .map(|c| c.sentences.iter().map(Sentence::tags).collect())
        .collect();
    let unit = match args.unit {
        Unit::Sentence => ResampleUnit::Sentence,
        Unit::Token => ResampleUnit::Token,
    };
    let acc_a = accuracy(&tags[0], &tags[2])?;
    let acc_b = accuracy(&tags[1], &tags[2])?;
    let p = bootstrap_significance(
        &tags[0],
        &tags[1],
        &tags[2],
        args.resamples,
        args.seed,
        unit,
    )?;
    println!("accuracy_a = {:.2}", acc_a.accuracy * 100.0);
    println!("accuracy_b = {:.2}", acc_b.accuracy * 100.0);
    println!("p = {p}");
    Ok(())
}

pub fn census(args: &CensusArgs) -> Result<(), CliError> {
    let tags = tagset(&args.tagset)?;
    let v = validation(args.lenient);
    let mut rows = Vec::new();
    for p in &args.paths {
        let p = existing(p, "corpus")?;
        let corpus = load_conll(p, &tags, v, Split::Train, TaskTag::MainSt)?;
        warn(&corpus);
        rows.push((p.display().to_string(), corpus.census()));
    }
    println!("corpus\tsentences\ttokens\tdistinct_tags");
    for (name, c) in rows {
        println!("{name}\t{}\t{}\t{}", c.sentences, c.tokens, c.distinct_tags);
    }
    Ok(())
}
