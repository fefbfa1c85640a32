use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::candidates::DEFAULT_EPSILON;
use crate::corpus::{LabelMatch, MAX_SOURCE_LEN};
use crate::error::{Error, Result};
use crate::eval::{PrecisionDenominator, Profile};
use crate::model::{Mode, ModelConfig};
use crate::retriever::DEFAULT_K;
use crate::scorer::ScorerConfig;

/// Every setting of a pipeline run, read from a flat TOML file.
/// Relative paths are resolved against the directory of that file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    /// Directory holding every artifact.
    pub work_dir: PathBuf,
    /// Stop-word list; the bundled English list when unset.
    pub stopwords: Option<PathBuf>,

    pub mode: Mode,
    pub seed: u64,
    pub threads: usize,
    pub profile: Profile,
    pub precision_denominator: PrecisionDenominator,

    /// Training documents whose term sets overlap an earlier one at least this much are dropped; 0 disables.
    pub dedup_threshold: f64,
    pub label_match: LabelMatch,
    pub retrieve_k: usize,

    pub vocab_size: usize,
    pub max_source_len: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub pos_loss_weight: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub max_grad_norm: f64,
    pub init_scale: f64,
    pub max_epochs: usize,
    pub eval_every: usize,
    pub patience: usize,

    pub beam_depth: usize,
    pub beam_size: usize,
    pub length_normalize: bool,
    pub epsilon: f64,
    pub skip_punctuation: bool,

    pub scorer_embedding_dim: usize,
    pub scorer_hidden_dim: usize,
    pub scorer_attend_dim: usize,
    pub scorer_mlp_dim: usize,
    pub scorer_lr: f64,
    pub scorer_batch_docs: usize,
    pub scorer_max_epochs: usize,
    pub scorer_patience: usize,
    pub scorer_neg_ratio: usize,
    pub scorer_span_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let s = ScorerConfig::default();
        Self {
            train: "train.jsonl".into(),
            valid: "valid.jsonl".into(),
            test: "test.jsonl".into(),
            work_dir: "work".into(),
            stopwords: None,
            mode: Mode::default(),
            seed: 1,
            threads: 1,
            profile: Profile::default(),
            precision_denominator: PrecisionDenominator::default(),
            dedup_threshold: 0.0,
            label_match: LabelMatch::default(),
            retrieve_k: DEFAULT_K,
            vocab_size: m.vocab_size,
            max_source_len: MAX_SOURCE_LEN,
            embedding_dim: m.embedding_dim,
            hidden_dim: m.hidden_dim,
            pos_loss_weight: m.pos_loss_weight,
            dropout: m.dropout,
            batch_size: m.batch_size,
            lr: m.lr,
            max_grad_norm: m.max_grad_norm,
            init_scale: m.init_scale,
            max_epochs: m.max_epochs,
            eval_every: m.eval_every,
            patience: m.patience,
            beam_depth: m.beam_depth,
            beam_size: m.beam_size,
            length_normalize: m.length_normalize,
            epsilon: DEFAULT_EPSILON,
            skip_punctuation: true,
            scorer_embedding_dim: s.embedding_dim,
            scorer_hidden_dim: s.hidden_dim,
            scorer_attend_dim: s.attend_dim,
            scorer_mlp_dim: s.mlp_dim,
            scorer_lr: s.lr,
            scorer_batch_docs: s.batch_docs,
            scorer_max_epochs: s.max_epochs,
            scorer_patience: s.patience,
            scorer_neg_ratio: s.neg_ratio,
            scorer_span_fraction: s.span_fraction,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub mode: Option<Mode>,
    pub profile: Option<Profile>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads, resolves relative paths, applies overrides and validates.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = crate::io::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.train);
        fix(&mut self.valid);
        fix(&mut self.test);
        fix(&mut self.work_dir);
        if let Some(p) = self.stopwords.as_mut() {
            fix(p);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.threads {
            self.threads = v;
        }
        if let Some(v) = o.mode {
            self.mode = v;
        }
        if let Some(v) = o.profile {
            self.profile = v;
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            embedding_dim: self.embedding_dim,
            hidden_dim: self.hidden_dim,
            vocab_size: self.vocab_size,
            pos_loss_weight: self.pos_loss_weight,
            dropout: self.dropout,
            batch_size: self.batch_size,
            lr: self.lr,
            max_grad_norm: self.max_grad_norm,
            init_scale: self.init_scale,
            max_source_len: self.max_source_len,
            max_epochs: self.max_epochs,
            eval_every: self.eval_every,
            patience: self.patience,
            beam_depth: self.beam_depth,
            beam_size: self.beam_size,
            length_normalize: self.length_normalize,
        }
    }

    pub fn scorer_config(&self) -> ScorerConfig {
        ScorerConfig {
            embedding_dim: self.scorer_embedding_dim,
            hidden_dim: self.scorer_hidden_dim,
            attend_dim: self.scorer_attend_dim,
            mlp_dim: self.scorer_mlp_dim,
            lr: self.scorer_lr,
            batch_docs: self.scorer_batch_docs,
            max_epochs: self.scorer_max_epochs,
            patience: self.scorer_patience,
            neg_ratio: self.scorer_neg_ratio,
            span_fraction: self.scorer_span_fraction,
            max_source_len: self.max_source_len,
            max_grad_norm: self.max_grad_norm,
            init_scale: self.init_scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.scorer_config().validate()?;
        if self.threads == 0 {
            return Err(Error::Config("threads must be positive".into()));
        }
        if self.retrieve_k == 0 {
            return Err(Error::Config("retrieve_k must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.dedup_threshold) {
            return Err(Error::Config("dedup_threshold must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config("epsilon must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 over the settings that shape trained artifacts. Paths and
    /// run-time choices (threads, profile, decoding and evaluation settings)
    /// are left out, and the merging mode shares its network with KG-KE-KR.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.threads = 1;
        c.profile = Profile::default();
        c.precision_denominator = PrecisionDenominator::default();
        c.mode = c.mode.network();
        c.train = PathBuf::new();
        c.valid = PathBuf::new();
        c.test = PathBuf::new();
        c.work_dir = PathBuf::new();
        c.stopwords = None;
        let d = PipelineConfig::default();
        c.beam_depth = d.beam_depth;
        c.beam_size = d.beam_size;
        c.length_normalize = d.length_normalize;
        c.epsilon = d.epsilon;
        c.skip_punctuation = d.skip_punctuation;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
