//! Run configuration: defaults, then a `key = value` file, then flags.

use std::path::{Path, PathBuf};

use semtag::config::HyperParams;
use semtag::data::Validation;
use semtag::model::Arch;

use crate::CliError;

/// Every setting a run depends on. Paths are kept as given.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub arch: Arch,
    pub aux: bool,
    pub seed: u64,
    pub validation: Validation,
    pub hyper: HyperParams,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub model: Option<PathBuf>,
    /// `semtag`, `ud_pos` or a tagset file.
    pub tagset: String,
    /// POS corpora for joint training; the main head then predicts POS.
    pub pos_train: Option<PathBuf>,
    pub pos_dev: Option<PathBuf>,
    pub pos_tagset: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            arch: Arch::ResnetCbpW,
            aux: false,
            seed: 42,
            validation: Validation::Strict,
            hyper: HyperParams::default(),
            train: None,
            dev: None,
            test: None,
            embeddings: None,
            model: None,
            tagset: "semtag".into(),
            pos_train: None,
            pos_dev: None,
            pos_tagset: "ud_pos".into(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "arch",
    "aux",
    "seed",
    "validation",
    "train",
    "dev",
    "test",
    "embeddings",
    "model",
    "tagset",
    "pos_train",
    "pos_dev",
    "pos_tagset",
    "d_c",
    "d_w",
    "gru_hidden",
    "gru_layers",
    "dropout_rnn",
    "dropout_cnn",
    "batch_size",
    "max_epochs",
    "lambda_aux",
    "lr",
    "padded_word_len",
    "conv1",
    "conv2",
    "channels",
    "patience",
    "min_count",
    "bypass_mode",
    "joint_weighting",
];

fn bad(key: &str, value: &str, expected: &str) -> CliError {
    CliError::Usage(format!("{key} = {value:?}: expected {expected}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| bad(key, value, "a number"))
}

fn pair(key: &str, value: &str, sep: char) -> Result<(usize, usize), CliError> {
    let expected = format!("two positive integers separated by '{sep}'");
    let (a, b) = value
        .split_once(sep)
        .ok_or_else(|| bad(key, value, &expected))?;
    match (a.trim().parse(), b.trim().parse()) {
        (Ok(a), Ok(b)) => Ok((a, b)),
        _ => Err(bad(key, value, &expected)),
    }
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show(p: &Option<PathBuf>) -> String {
    p.as_deref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        let h = &mut self.hyper;
        match key {
            "arch" => self.arch = value.parse()?,
            "aux" => {
                self.aux = value
                    .parse()
                    .map_err(|_| bad(key, value, "true or false"))?
            }
            "seed" => self.seed = num(key, value)?,
            "validation" => {
                self.validation = match value {
                    "strict" => Validation::Strict,
                    "lenient" => Validation::Lenient,
                    _ => return Err(bad(key, value, "strict or lenient")),
                }
            }
            "train" => self.train = path(value),
            "dev" => self.dev = path(value),
            "test" => self.test = path(value),
            "embeddings" => self.embeddings = path(value),
            "model" => self.model = path(value),
            "tagset" => self.tagset = value.to_string(),
            "pos_train" => self.pos_train = path(value),
            "pos_dev" => self.pos_dev = path(value),
            "pos_tagset" => self.pos_tagset = value.to_string(),
            "d_c" => h.d_c = num(key, value)?,
            "d_w" => h.d_w = num(key, value)?,
            "gru_hidden" => h.gru_hidden = num(key, value)?,
            "gru_layers" => h.gru_layers = num(key, value)?,
            "dropout_rnn" => h.dropout_rnn = num(key, value)?,
            "dropout_cnn" => h.dropout_cnn = num(key, value)?,
            "batch_size" => h.batch_size = num(key, value)?,
            "max_epochs" => h.max_epochs = num(key, value)?,
            "lambda_aux" => h.lambda_aux = num(key, value)?,
            "lr" => h.lr = num(key, value)?,
            "padded_word_len" => h.padded_word_len = num(key, value)?,
            "conv1" => h.conv1 = pair(key, value, 'x')?,
            "conv2" => h.conv2 = pair(key, value, 'x')?,
            "channels" => h.channels = pair(key, value, ',')?,
            "patience" => h.patience = num(key, value)?,
            "min_count" => h.min_count = num(key, value)?,
            "bypass_mode" => h.bypass_mode = value.parse()?,
            "joint_weighting" => h.joint_weighting = value.parse()?,
            _ => {
                return Err(CliError::Usage(format!(
                    "unknown configuration key {key:?}"
                )))
            }
        }
        Ok(())
    }

    /// Applies a `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "{origin}:{}: expected key = value, got {line:?}",
                    i + 1
                ))
            })?;
            self.set(key.trim(), value)
                .map_err(|e| CliError::Usage(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Every effective value, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let h = &self.hyper;
        KEYS.iter()
            .map(|&k| {
                let v = match k {
                    "arch" => self.arch.to_string(),
                    "aux" => self.aux.to_string(),
                    "seed" => self.seed.to_string(),
                    "validation" => match self.validation {
                        Validation::Strict => "strict".into(),
                        Validation::Lenient => "lenient".into(),
                    },
                    "train" => show(&self.train),
                    "dev" => show(&self.dev),
                    "test" => show(&self.test),
                    "embeddings" => show(&self.embeddings),
                    "model" => show(&self.model),
                    "tagset" => self.tagset.clone(),
                    "pos_train" => show(&self.pos_train),
                    "pos_dev" => show(&self.pos_dev),
                    "pos_tagset" => self.pos_tagset.clone(),
                    "d_c" => h.d_c.to_string(),
                    "d_w" => h.d_w.to_string(),
                    "gru_hidden" => h.gru_hidden.to_string(),
                    "gru_layers" => h.gru_layers.to_string(),
                    "dropout_rnn" => h.dropout_rnn.to_string(),
                    "dropout_cnn" => h.dropout_cnn.to_string(),
                    "batch_size" => h.batch_size.to_string(),
                    "max_epochs" => h.max_epochs.to_string(),
                    "lambda_aux" => h.lambda_aux.to_string(),
                    "lr" => h.lr.to_string(),
                    "padded_word_len" => h.padded_word_len.to_string(),
                    "conv1" => format!("{}x{}", h.conv1.0, h.conv1.1),
                    "conv2" => format!("{}x{}", h.conv2.0, h.conv2.1),
                    "channels" => format!("{},{}", h.channels.0, h.channels.1),
                    "patience" => h.patience.to_string(),
                    "min_count" => h.min_count.to_string(),
                    "bypass_mode" => h.bypass_mode.to_string(),
                    "joint_weighting" => h.joint_weighting.to_string(),
                    _ => unreachable!("every key is rendered"),
                };
                (k, v)
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
