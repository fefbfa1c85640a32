use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which parts of the system are active.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Extraction-guided generation, no retrieval.
    #[serde(rename = "KG-KE")]
    KgKe,
    /// Retrieval-guided generation, no extractor.
    #[serde(rename = "KG-KR")]
    KgKr,
    /// Both, generated candidates only.
    #[serde(rename = "KG-KE-KR")]
    KgKeKr,
    /// Both, with the merging stage.
    #[default]
    #[serde(rename = "KG-KE-KR-M")]
    KgKeKrM,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::KgKe, Mode::KgKr, Mode::KgKeKr, Mode::KgKeKrM];

    pub fn uses_extractor(self) -> bool {
        self != Mode::KgKr
    }

    pub fn uses_retrieval(self) -> bool {
        self != Mode::KgKe
    }

    pub fn merges(self) -> bool {
        self == Mode::KgKeKrM
    }

    /// The mode of the network that gets trained; merging adds no parameters.
    pub fn network(self) -> Mode {
        match self {
            Mode::KgKeKrM => Mode::KgKeKr,
            m => m,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::KgKe => "KG-KE",
            Mode::KgKr => "KG-KR",
            Mode::KgKeKr => "KG-KE-KR",
            Mode::KgKeKrM => "KG-KE-KR-M",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}` (expected KG-KE, KG-KR, KG-KE-KR or KG-KE-KR-M)")))
    }
}

/// Network and training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    /// Total encoder width; each direction gets half.
    pub hidden_dim: usize,
    pub vocab_size: usize,
    pub pos_loss_weight: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub max_grad_norm: f64,
    pub init_scale: f64,
    pub max_source_len: usize,
    pub max_epochs: usize,
    /// Evaluate every this many updates; 0 means once per epoch.
    pub eval_every: usize,
    pub patience: usize,
    pub beam_depth: usize,
    pub beam_size: usize,
    /// Rank beams by mean rather than summed log-probability.
    pub length_normalize: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 100,
            hidden_dim: 300,
            vocab_size: 50_000,
            pos_loss_weight: 9.0,
            dropout: 0.1,
            batch_size: 64,
            lr: 0.001,
            max_grad_norm: 1.0,
            init_scale: 0.1,
            max_source_len: 400,
            max_epochs: 20,
            eval_every: 2000,
            patience: 4,
            beam_depth: 6,
            beam_size: 200,
            length_normalize: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embedding_dim", self.embedding_dim),
            ("hidden_dim", self.hidden_dim),
            ("vocab_size", self.vocab_size),
            ("batch_size", self.batch_size),
            ("max_source_len", self.max_source_len),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("beam_depth", self.beam_depth),
            ("beam_size", self.beam_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.hidden_dim % 2 != 0 {
            return Err(Error::Config("hidden_dim must be even".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        for (name, v) in [
            ("pos_loss_weight", self.pos_loss_weight),
            ("lr", self.lr),
            ("max_grad_norm", self.max_grad_norm),
            ("init_scale", self.init_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}
