//! Hyperparameters with their defaults and validation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How character representations join the penultimate layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BypassMode {
    #[default]
    Add,
    Concat,
}

impl FromStr for BypassMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add" => Ok(BypassMode::Add),
            "concat" => Ok(BypassMode::Concat),
            _ => Err(Error::Config(format!(
                "unknown bypass mode {s:?} (expected add or concat)"
            ))),
        }
    }
}

impl fmt::Display for BypassMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BypassMode::Add => "add",
            BypassMode::Concat => "concat",
        })
    }
}

/// Weight of the semantic-tag loss in joint POS + semtag training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointWeighting {
    /// λ, as for any auxiliary loss.
    #[default]
    Lambda,
    /// 1, i.e. both tasks weigh equally.
    Unit,
}

impl FromStr for JointWeighting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(JointWeighting::Lambda),
            "unit" => Ok(JointWeighting::Unit),
            _ => Err(Error::Config(format!(
                "unknown joint weighting {s:?} (expected lambda or unit)"
            ))),
        }
    }
}

impl fmt::Display for JointWeighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JointWeighting::Lambda => "lambda",
            JointWeighting::Unit => "unit",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Character embedding width.
    pub d_c: usize,
    /// Word embedding width.
    pub d_w: usize,
    pub gru_hidden: usize,
    /// Stacked layers per recurrent direction.
    pub gru_layers: usize,
    pub dropout_rnn: f64,
    pub dropout_cnn: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lambda_aux: f64,
    pub lr: f64,
    /// Characters per word after truncation and padding.
    pub padded_word_len: usize,
    /// `(height, width)` of the first and second convolution.
    pub conv1: (usize, usize),
    pub conv2: (usize, usize),
    pub channels: (usize, usize),
    pub patience: usize,
    pub min_count: usize,
    pub bypass_mode: BypassMode,
    pub joint_weighting: JointWeighting,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            d_c: 64,
            d_w: 64,
            gru_hidden: 100,
            gru_layers: 2,
            dropout_rnn: 0.1,
            dropout_cnn: 0.5,
            batch_size: 500,
            max_epochs: 50,
            lambda_aux: 0.1,
            lr: 0.001,
            padded_word_len: 25,
            conv1: (4, 8),
            conv2: (4, 4),
            channels: (8, 16),
            patience: 5,
            min_count: 1,
            bypass_mode: BypassMode::Add,
            joint_weighting: JointWeighting::Lambda,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_c", self.d_c),
            ("d_w", self.d_w),
            ("gru_hidden", self.gru_hidden),
            ("gru_layers", self.gru_layers),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("padded_word_len", self.padded_word_len),
            ("conv1 height", self.conv1.0),
            ("conv1 width", self.conv1.1),
            ("conv2 height", self.conv2.0),
            ("conv2 width", self.conv2.1),
            ("channels (first)", self.channels.0),
            ("channels (second)", self.channels.1),
            ("min_count", self.min_count),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        for (name, p) in [
            ("dropout_rnn", self.dropout_rnn),
            ("dropout_cnn", self.dropout_cnn),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is outside [0, 1)")));
            }
        }
        if !(self.lambda_aux >= 0.0 && self.lambda_aux.is_finite()) {
            return Err(Error::Config(format!(
                "lambda = {} must be finite and non-negative",
                self.lambda_aux
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr = {} must be positive", self.lr)));
        }
        Ok(())
    }

    /// Weight of the semantic-tag loss in joint training.
    pub fn joint_st_weight(&self) -> f64 {
        match self.joint_weighting {
            JointWeighting::Lambda => self.lambda_aux,
            JointWeighting::Unit => 1.0,
        }
    }
}
