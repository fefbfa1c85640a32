//! The command-line stages: preprocess, build-index, train, train-scorer,
//! predict and evaluate. Each stage reads the artifacts of earlier stages
//! from the work directory and writes its own atomically.

mod config;

use std::path::{Path, PathBuf};

use kpgen_autodiff::Checkpoint;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{Overrides, PipelineConfig};

use crate::candidates::{assemble, collect_extracted, CandidateDump};
use crate::corpus::{load_dataset, save_dataset, split_tuples, Document, Source, TrainingTuple, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport, PrecisionDenominator, Profile};
use crate::io::{read_to_string, to_jsonl, write_atomic};
use crate::merger::{generated_only, merge, select_final, Prediction};
use crate::model::infer::{beam_config, encode, generate};
use crate::model::train::{train, LogRow};
use crate::model::{KgModel, Mode, ModelConfig};
use crate::retriever::{collect_retrieved_candidates, concat_retrieved, RetrievalIndex, RetrievalResult, Stopwords};
use crate::scorer::{build_examples, train_scorer, Scorer, ScorerConfig, ScorerDoc, ScorerNet};

/// A dataset split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?} (expected train, valid or test)"))),
        }
    }
}

/// File layout of a work directory.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn corpus(&self, split: Split) -> PathBuf {
        self.dir.join("corpus").join(format!("{}.jsonl", split.as_str()))
    }
    pub fn vocab(&self) -> PathBuf {
        self.dir.join("vocab.txt")
    }
    pub fn preprocess_meta(&self) -> PathBuf {
        self.dir.join("preprocess.meta.json")
    }
    pub fn index(&self) -> PathBuf {
        self.dir.join("index.json")
    }
    pub fn model(&self, mode: Mode) -> PathBuf {
        self.dir.join(format!("model.{}.ckpt", mode.network()))
    }
    pub fn train_log(&self, mode: Mode) -> PathBuf {
        self.dir.join(format!("train_log.{}.jsonl", mode.network()))
    }
    pub fn scorer(&self) -> PathBuf {
        self.dir.join("scorer.ckpt")
    }
    pub fn scorer_log(&self) -> PathBuf {
        self.dir.join("scorer_log.jsonl")
    }
    pub fn predictions(&self, mode: Mode, split: Split) -> PathBuf {
        self.dir.join(format!("predictions.{mode}.{}.jsonl", split.as_str()))
    }
    pub fn candidates(&self, mode: Mode, split: Split) -> PathBuf {
        self.dir.join(format!("candidates.{mode}.{}.jsonl", split.as_str()))
    }
    pub fn report(&self, mode: Mode, split: Split) -> PathBuf {
        self.dir.join(format!("report.{mode}.{}.json", split.as_str()))
    }
    pub fn effective_config(&self) -> PathBuf {
        self.dir.join("config.effective.toml")
    }
}

/// Sidecar recording which configuration produced the preprocessed corpus.
#[derive(Debug, Serialize, Deserialize)]
struct PreprocessMeta {
    config_hash: String,
    train_docs: usize,
    valid_docs: usize,
    test_docs: usize,
    dropped_duplicates: usize,
    vocab_size: usize,
}

/// Metadata stored inside model checkpoints.
#[derive(Debug, Serialize, Deserialize)]
struct ModelMeta {
    mode: Mode,
    vocab_len: usize,
    config: ModelConfig,
    best_valid_ppl: f64,
    updates: usize,
}

/// One line of a prediction file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub id: String,
    pub predictions: Vec<Prediction>,
}

/// Reads a prediction file into ranked phrase lists.
pub fn load_predictions(path: &Path) -> Result<Vec<(String, Vec<String>)>> {
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let p: PredictionLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push((p.id, p.predictions.into_iter().map(|p| p.phrase).collect()));
    }
    Ok(out)
}

/// A loaded generator.
pub struct TrainedModel {
    pub model: KgModel,
    pub store: kpgen_autodiff::ParamStore,
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    /// Accept artifacts produced under a different configuration.
    pub force: bool,
    pub artifacts: Artifacts,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, force: bool) -> Result<Self> {
        cfg.validate()?;
        let artifacts = Artifacts { dir: cfg.work_dir.clone() };
        Ok(Self { cfg, force, artifacts })
    }

    fn stopwords(&self) -> Result<Stopwords> {
        match &self.cfg.stopwords {
            Some(p) => Stopwords::load(p),
            None => Ok(Stopwords::default()),
        }
    }

    fn check(&self, artifact: &Path, found: &str) -> Result<()> {
        let expected = self.cfg.hash();
        if found == expected {
            return Ok(());
        }
        if self.force {
            log::warn!("{}: config hash mismatch ignored", artifact.display());
            return Ok(());
        }
        Err(Error::ConfigMismatch {
            artifact: artifact.to_path_buf(),
            expected,
            found: found.to_string(),
        })
    }

    fn echo_config(&self) -> Result<()> {
        write_atomic(&self.artifacts.effective_config(), self.cfg.to_toml()?.as_bytes())
    }

    fn require_preprocessed(&self) -> Result<()> {
        let path = self.artifacts.preprocess_meta();
        let meta: PreprocessMeta = serde_json::from_str(&read_to_string(&path)?)?;
        self.check(&path, &meta.config_hash)
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<Document>> {
        load_dataset(&self.artifacts.corpus(split))
    }

    pub fn load_vocab(&self) -> Result<Vocabulary> {
        self.require_preprocessed()?;
        Vocabulary::load(&self.artifacts.vocab())
    }

    pub fn load_index(&self) -> Result<RetrievalIndex> {
        let path = self.artifacts.index();
        let (index, hash) = RetrievalIndex::load(&path)?;
        self.check(&path, &hash)?;
        Ok(index)
    }

    /// Validates the raw splits, optionally removes near-duplicate training
    /// documents, and builds the vocabulary.
    pub fn preprocess(&self) -> Result<()> {
        self.echo_config()?;
        let train = load_dataset(&self.cfg.train)?;
        let valid = load_dataset(&self.cfg.valid)?;
        let test = load_dataset(&self.cfg.test)?;
        let before = train.len();
        let train = if self.cfg.dedup_threshold > 0.0 {
            crate::corpus::dedup_corpus(&train, &self.stopwords()?, self.cfg.dedup_threshold)
        } else {
            train
        };
        if train.is_empty() {
            return Err(Error::InvalidInput("training split is empty".into()));
        }
        let tokenized: Vec<_> = train.iter().map(Document::tokenized).collect();
        let vocab = Vocabulary::build(&tokenized, self.cfg.vocab_size)?;
        save_dataset(&self.artifacts.corpus(Split::Train), &train)?;
        save_dataset(&self.artifacts.corpus(Split::Valid), &valid)?;
        save_dataset(&self.artifacts.corpus(Split::Test), &test)?;
        vocab.save(&self.artifacts.vocab())?;
        let meta = PreprocessMeta {
            config_hash: self.cfg.hash(),
            train_docs: train.len(),
            valid_docs: valid.len(),
            test_docs: test.len(),
            dropped_duplicates: before - train.len(),
            vocab_size: vocab.len(),
        };
        write_atomic(&self.artifacts.preprocess_meta(), &serde_json::to_vec_pretty(&meta)?)?;
        log::info!("preprocessed {} training documents, vocabulary of {}", train.len(), vocab.len());
        Ok(())
    }

    pub fn build_index(&self) -> Result<()> {
        self.echo_config()?;
        self.require_preprocessed()?;
        let train = self.load_split(Split::Train)?;
        let index = RetrievalIndex::build(&train, &self.stopwords()?)?;
        index.save(&self.artifacts.index(), &self.cfg.hash())?;
        log::info!("indexed {} documents", index.len());
        Ok(())
    }

    /// Neighbors of a document (never itself) when the mode uses retrieval.
    fn retrieve(&self, index: &RetrievalIndex, doc: &Document, mode: Mode) -> Result<RetrievalResult> {
        if !mode.uses_retrieval() {
            return Ok(RetrievalResult::default());
        }
        index.retrieve(&doc.id, &doc.tokens(), self.cfg.retrieve_k)
    }

    /// Training tuples of each document, with retrieval as in `train`.
    pub fn tuples(&self, docs: &[Document], index: &RetrievalIndex, vocab: &Vocabulary, mode: Mode) -> Result<Vec<Vec<TrainingTuple>>> {
        docs.iter()
            .map(|d| {
                let r = concat_retrieved(&self.retrieve(index, d, mode)?);
                Ok(split_tuples(&d.tokenized(), &r, vocab, self.cfg.max_source_len, self.cfg.label_match))
            })
            .collect()
    }

    pub fn train(&self) -> Result<()> {
        self.echo_config()?;
        let vocab = self.load_vocab()?;
        let index = self.load_index()?;
        let mode = self.cfg.mode.network();
        let train_docs = self.tuples(&self.load_split(Split::Train)?, &index, &vocab, mode)?;
        let valid_docs = self.tuples(&self.load_split(Split::Valid)?, &index, &vocab, mode)?;
        let config = self.cfg.model_config();
        let out = train(&config, mode, vocab.len(), &train_docs, &valid_docs, self.cfg.seed, self.cfg.threads)?;
        let meta = ModelMeta {
            mode,
            vocab_len: vocab.len(),
            config,
            best_valid_ppl: out.best_valid_ppl,
            updates: out.updates,
        };
        write_atomic(&self.artifacts.train_log(mode), &to_jsonl::<LogRow>(&out.log)?)?;
        let ckpt = Checkpoint {
            config_hash: self.cfg.hash(),
            metadata: serde_json::to_string(&meta)?,
            params: out.store,
        };
        ckpt.save(&self.artifacts.model(mode))?;
        log::info!("trained {mode} for {} updates, best validation perplexity {:.4}", out.updates, out.best_valid_ppl);
        Ok(())
    }

    fn scorer_docs(&self, docs: &[Document], index: &RetrievalIndex, cfg: &ScorerConfig, rng: &mut ChaCha8Rng) -> Result<Vec<ScorerDoc>> {
        docs.iter()
            .map(|d| {
                let retrieved: Vec<String> = collect_retrieved_candidates(&index.retrieve(&d.id, &d.tokens(), self.cfg.retrieve_k)?)
                    .into_iter()
                    .map(|c| c.phrase)
                    .collect();
                Ok(build_examples(&d.tokenized(), &retrieved, cfg, rng))
            })
            .collect()
    }

    pub fn train_scorer(&self) -> Result<()> {
        self.echo_config()?;
        let vocab = self.load_vocab()?;
        let index = self.load_index()?;
        let cfg = self.cfg.scorer_config();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let train = self.scorer_docs(&self.load_split(Split::Train)?, &index, &cfg, &mut rng)?;
        let valid = self.scorer_docs(&self.load_split(Split::Valid)?, &index, &cfg, &mut rng)?;
        let out = train_scorer(&cfg, &vocab, &train, &valid, self.cfg.seed)?;
        write_atomic(&self.artifacts.scorer_log(), &to_jsonl(&out.log)?)?;
        let ckpt = Checkpoint {
            config_hash: self.cfg.hash(),
            metadata: serde_json::to_string(&cfg)?,
            params: out.scorer.store,
        };
        ckpt.save(&self.artifacts.scorer())?;
        log::info!("trained scorer, best validation accuracy {:.4}", out.best_accuracy);
        Ok(())
    }

    fn load_checkpoint(&self, path: &Path) -> Result<Checkpoint> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let ckpt = Checkpoint::load(path)?;
        self.check(path, &ckpt.config_hash)?;
        Ok(ckpt)
    }

    pub fn load_model(&self) -> Result<TrainedModel> {
        let mode = self.cfg.mode.network();
        let ckpt = self.load_checkpoint(&self.artifacts.model(mode))?;
        let meta: ModelMeta = serde_json::from_str(&ckpt.metadata)?;
        if meta.mode != mode {
            return Err(Error::InvalidInput(format!("checkpoint holds a {} network, not {mode}", meta.mode)));
        }
        let model = KgModel::from_store(&ckpt.params, mode)?;
        Ok(TrainedModel { model, store: ckpt.params })
    }

    pub fn load_scorer(&self, vocab: &Vocabulary) -> Result<Scorer> {
        let ckpt = self.load_checkpoint(&self.artifacts.scorer())?;
        let cfg: ScorerConfig = serde_json::from_str(&ckpt.metadata)?;
        Ok(Scorer {
            net: ScorerNet::from_store(&ckpt.params)?,
            store: ckpt.params,
            vocab: vocab.clone(),
            max_source_len: cfg.max_source_len,
        })
    }

    /// Candidates and the final ranking of one document.
    pub fn predict_document(
        &self,
        doc: &Document,
        vocab: &Vocabulary,
        index: &RetrievalIndex,
        trained: &TrainedModel,
        scorer: Option<&Scorer>,
    ) -> Result<(PredictionLine, CandidateDump)> {
        let mode = self.cfg.mode;
        let tokens = doc.tokens();
        let retrieved = self.retrieve(index, doc, mode)?;
        let src = Source::new(doc.id.clone(), &tokens, &concat_retrieved(&retrieved), vocab, self.cfg.max_source_len);
        let encoded = encode(&trained.store, &trained.model, &src)?;
        let beam = beam_config(self.cfg.beam_depth, self.cfg.beam_size, self.cfg.length_normalize);
        let gk = generate(&trained.store, &trained.model, &encoded, &src, vocab, &beam)?;
        let ek = match &encoded.beta {
            Some(beta) => collect_extracted(&src.tokens, beta, self.cfg.epsilon, self.cfg.skip_punctuation),
            None => Vec::new(),
        };
        let rk = collect_retrieved_candidates(&retrieved);
        let set = assemble(rk, ek, gk, &tokens);
        let ranked = match (mode.merges(), scorer) {
            (true, Some(s)) if !set.is_empty() => merge(&set, &tokens, s)?,
            (true, None) => return Err(Error::InvalidInput("merging requires a trained scorer".into())),
            _ => generated_only(&set),
        };
        Ok((
            PredictionLine {
                id: doc.id.clone(),
                predictions: select_final(&ranked, self.cfg.profile),
            },
            CandidateDump::new(doc.id.clone(), &set),
        ))
    }

    /// Predicts every document of `split`; output order follows the input.
    pub fn predict(&self, split: Split) -> Result<Vec<PredictionLine>> {
        self.echo_config()?;
        let vocab = self.load_vocab()?;
        let index = self.load_index()?;
        let trained = self.load_model()?;
        let scorer = if self.cfg.mode.merges() {
            Some(self.load_scorer(&vocab)?)
        } else {
            None
        };
        let docs = self.load_split(split)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let run = |d: &Document| self.predict_document(d, &vocab, &index, &trained, scorer.as_ref());
        let results: Vec<(PredictionLine, CandidateDump)> = if self.cfg.threads <= 1 {
            docs.iter().map(run).collect::<Result<_>>()?
        } else {
            pool.install(|| docs.par_iter().map(run).collect::<Result<_>>())?
        };
        let (lines, dumps): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        write_atomic(&self.artifacts.candidates(self.cfg.mode, split), &to_jsonl(&dumps)?)?;
        write_atomic(&self.artifacts.predictions(self.cfg.mode, split), &to_jsonl(&lines)?)?;
        log::info!("predicted {} documents", lines.len());
        Ok(lines)
    }

    /// Scores a prediction file against gold documents and writes the report.
    pub fn evaluate_files(pred: &Path, gold: &Path, profile: Profile, denom: PrecisionDenominator, out: &Path) -> Result<EvalReport> {
        let preds = load_predictions(pred)?;
        let gold = load_dataset(gold)?;
        let report = eval::evaluate(&preds, &gold, profile, denom)?;
        let mut bytes = serde_json::to_vec_pretty(&report)?;
        bytes.push(b'\n');
        write_atomic(out, &bytes)?;
        Ok(report)
    }

    /// Evaluates this configuration's predictions for `split`.
    pub fn evaluate(&self, split: Split) -> Result<EvalReport> {
        self.echo_config()?;
        Self::evaluate_files(
            &self.artifacts.predictions(self.cfg.mode, split),
            &self.artifacts.corpus(split),
            self.cfg.profile,
            self.cfg.precision_denominator,
            &self.artifacts.report(self.cfg.mode, split),
        )
    }
}
