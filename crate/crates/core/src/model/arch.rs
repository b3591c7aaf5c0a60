use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::EncoderKind;

/// The eight architecture variants. Names ending in `_w` read word
/// embeddings; names containing `bp` add the residual bypass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    BigruW,
    CnnC,
    CnnCbp,
    CnnCbpW,
    ResnetC,
    ResnetCW,
    ResnetCbp,
    ResnetCbpW,
}

impl Arch {
    pub const ALL: [Arch; 8] = [
        Arch::BigruW,
        Arch::CnnC,
        Arch::CnnCbp,
        Arch::CnnCbpW,
        Arch::ResnetC,
        Arch::ResnetCW,
        Arch::ResnetCbp,
        Arch::ResnetCbpW,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arch::BigruW => "bigru_w",
            Arch::CnnC => "cnn_c",
            Arch::CnnCbp => "cnn_cbp",
            Arch::CnnCbpW => "cnn_cbp_w",
            Arch::ResnetC => "resnet_c",
            Arch::ResnetCW => "resnet_c_w",
            Arch::ResnetCbp => "resnet_cbp",
            Arch::ResnetCbpW => "resnet_cbp_w",
        }
    }

    pub fn uses_words(self) -> bool {
        self.name().ends_with("_w")
    }

    pub fn uses_chars(self) -> bool {
        self.encoder().is_some()
    }

    pub fn uses_bypass(self) -> bool {
        self.name().contains("bp")
    }

    pub fn encoder(self) -> Option<EncoderKind> {
        match self {
            Arch::BigruW => None,
            Arch::CnnC | Arch::CnnCbp | Arch::CnnCbpW => Some(EncoderKind::BasicCnn),
            _ => Some(EncoderKind::Resnet),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Arch::ALL.iter().map(|a| a.name()).collect();
                Error::Config(format!(
                    "unknown architecture {s:?} (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}
