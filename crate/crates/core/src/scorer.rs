//! A document–candidate relevance classifier in the decomposable-attention
//! style: both sides are encoded with bidirectional GRUs, soft-aligned,
//! compared, mean-pooled and classified.

use std::collections::HashSet;

use kpgen_autodiff::nn::BiGru;
use kpgen_autodiff::{clip_global_norm, Adam, Graph, ParamId, ParamStore, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{is_punctuation, TokenizedDoc, Vocabulary};
use crate::error::{Error, Result};
use crate::model::losses::CLAMP;
use crate::stem::{key_of, phrase_key};

/// Anything that can rate candidate phrases for a document.
pub trait CandidateScorer {
    /// One probability per phrase (space-separated tokens).
    fn score_phrases(&self, doc_tokens: &[String], phrases: &[String]) -> Result<Vec<f64>>;
}

/// Gives every candidate the same score.
#[derive(Clone, Copy, Debug)]
pub struct ConstantScorer(pub f64);

impl CandidateScorer for ConstantScorer {
    fn score_phrases(&self, _: &[String], phrases: &[String]) -> Result<Vec<f64>> {
        Ok(vec![self.0; phrases.len()])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    pub embedding_dim: usize,
    /// Encoder width, split over the two directions.
    pub hidden_dim: usize,
    /// Width of the attend and compare layers.
    pub attend_dim: usize,
    /// Hidden size of the aggregation layer.
    pub mlp_dim: usize,
    pub lr: f64,
    pub max_grad_norm: f64,
    pub init_scale: f64,
    /// Documents per update.
    pub batch_docs: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Negatives per positive.
    pub neg_ratio: usize,
    /// Share of negatives drawn from document spans rather than retrieved candidates.
    pub span_fraction: f64,
    pub max_source_len: usize,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 100,
            hidden_dim: 300,
            attend_dim: 100,
            mlp_dim: 100,
            lr: 0.001,
            max_grad_norm: 1.0,
            init_scale: 0.1,
            batch_docs: 8,
            max_epochs: 20,
            patience: 4,
            neg_ratio: 2,
            span_fraction: 0.5,
            max_source_len: 400,
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("scorer_embedding_dim", self.embedding_dim),
            ("scorer_hidden_dim", self.hidden_dim),
            ("scorer_attend_dim", self.attend_dim),
            ("scorer_mlp_dim", self.mlp_dim),
            ("scorer_batch_docs", self.batch_docs),
            ("scorer_max_epochs", self.max_epochs),
            ("scorer_patience", self.patience),
            ("scorer_neg_ratio", self.neg_ratio),
            ("scorer_max_source_len", self.max_source_len),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.hidden_dim % 2 != 0 {
            return Err(Error::Config("scorer_hidden_dim must be even".into()));
        }
        if !(0.0..=1.0).contains(&self.span_fraction) {
            return Err(Error::Config("scorer_span_fraction must lie in [0, 1]".into()));
        }
        if !(self.lr > 0.0 && self.max_grad_norm > 0.0 && self.init_scale > 0.0) {
            return Err(Error::Config("scorer learning rate, clip norm and init scale must be positive".into()));
        }
        Ok(())
    }
}

/// Parameter handles of the scorer.
#[derive(Clone, Debug)]
pub struct ScorerNet {
    pub embed: ParamId,
    pub doc_enc: BiGru,
    pub cand_enc: BiGru,
    pub w_f: ParamId,
    pub b_f: ParamId,
    pub w_cmp: ParamId,
    pub b_cmp: ParamId,
    pub w_h: ParamId,
    pub b_h: ParamId,
    pub w_o: ParamId,
    pub b_o: ParamId,
}

/// Per-document tensors shared by all of its candidates.
#[derive(Clone, Copy)]
pub struct DocSide {
    enc: Var,
    attend: Var,
}

impl ScorerNet {
    pub fn init(store: &mut ParamStore, cfg: &ScorerConfig, vocab_len: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let (de, h, k, m, s) = (cfg.embedding_dim, cfg.hidden_dim, cfg.attend_dim, cfg.mlp_dim, cfg.init_scale);
        Ok(Self {
            embed: store.uniform("sc.embed", &[vocab_len, de], s, rng)?,
            doc_enc: BiGru::new(store, "sc.doc", de, h / 2, s, rng)?,
            cand_enc: BiGru::new(store, "sc.cand", de, h / 2, s, rng)?,
            w_f: store.uniform("sc.w_f", &[h, k], s, rng)?,
            b_f: store.uniform("sc.b_f", &[k], s, rng)?,
            w_cmp: store.uniform("sc.w_cmp", &[2 * h, k], s, rng)?,
            b_cmp: store.uniform("sc.b_cmp", &[k], s, rng)?,
            w_h: store.uniform("sc.w_h", &[m, 2 * k], s, rng)?,
            b_h: store.uniform("sc.b_h", &[m], s, rng)?,
            w_o: store.uniform("sc.w_o", &[m], s, rng)?,
            b_o: store.uniform("sc.b_o", &[1], s, rng)?,
        })
    }

    pub fn from_store(store: &ParamStore) -> Result<Self> {
        Ok(Self {
            embed: store.id("sc.embed")?,
            doc_enc: BiGru::from_store(store, "sc.doc")?,
            cand_enc: BiGru::from_store(store, "sc.cand")?,
            w_f: store.id("sc.w_f")?,
            b_f: store.id("sc.b_f")?,
            w_cmp: store.id("sc.w_cmp")?,
            b_cmp: store.id("sc.b_cmp")?,
            w_h: store.id("sc.w_h")?,
            b_h: store.id("sc.b_h")?,
            w_o: store.id("sc.w_o")?,
            b_o: store.id("sc.b_o")?,
        })
    }

    fn encode(&self, g: &mut Graph<'_>, enc: &BiGru, ids: &[usize]) -> Result<Var> {
        if ids.is_empty() {
            return Err(Error::InvalidInput("scorer input must be non-empty".into()));
        }
        let table = g.param(self.embed);
        let e = g.embedding(table, ids)?;
        let rows = (0..ids.len()).map(|i| g.row(e, i)).collect::<kpgen_autodiff::Result<Vec<_>>>()?;
        let out = enc.run(g, &rows)?;
        Ok(g.stack(&out.states)?)
    }

    /// `tanh(X W + b)` applied to every row.
    fn feed(g: &mut Graph<'_>, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let w = g.param(w);
        let b = g.param(b);
        let z = g.matmul(x, w)?;
        let z = g.add_row(z, b)?;
        Ok(g.tanh(z)?)
    }

    pub fn doc_side(&self, g: &mut Graph<'_>, doc: &[usize]) -> Result<DocSide> {
        let enc = self.encode(g, &self.doc_enc, doc)?;
        let attend = Self::feed(g, enc, self.w_f, self.b_f)?;
        Ok(DocSide { enc, attend })
    }

    /// Relevance logit of one candidate.
    pub fn logit(&self, g: &mut Graph<'_>, doc: DocSide, cand: &[usize]) -> Result<Var> {
        let b = self.encode(g, &self.cand_enc, cand)?;
        let fb = Self::feed(g, b, self.w_f, self.b_f)?;
        let fbt = g.transpose(fb)?;
        let e = g.matmul(doc.attend, fbt)?;
        let w_doc = g.softmax(e)?;
        let aligned_doc = g.matmul(w_doc, b)?;
        let et = g.transpose(e)?;
        let w_cand = g.softmax(et)?;
        let aligned_cand = g.matmul(w_cand, doc.enc)?;
        let left = g.concat(&[doc.enc, aligned_doc])?;
        let right = g.concat(&[b, aligned_cand])?;
        let v1 = Self::feed(g, left, self.w_cmp, self.b_cmp)?;
        let v2 = Self::feed(g, right, self.w_cmp, self.b_cmp)?;
        let p1 = g.mean_rows(v1)?;
        let p2 = g.mean_rows(v2)?;
        let agg = g.concat(&[p1, p2])?;
        let w_h = g.param(self.w_h);
        let b_h = g.param(self.b_h);
        let z = g.matmul(w_h, agg)?;
        let z = g.add(z, b_h)?;
        let hidden = g.tanh(z)?;
        let w_o = g.param(self.w_o);
        let b_o = g.param(self.b_o);
        let o = g.dot(w_o, hidden)?;
        Ok(g.add(o, b_o)?)
    }
}

/// Trained scorer bound to its vocabulary.
pub struct Scorer {
    pub store: ParamStore,
    pub net: ScorerNet,
    pub vocab: Vocabulary,
    pub max_source_len: usize,
}

fn ids(tokens: &[String], vocab: &Vocabulary) -> Vec<usize> {
    tokens.iter().map(|t| vocab.index_of(t)).collect()
}

impl Scorer {
    /// Probability for each candidate token sequence; the document is encoded once.
    pub fn score_many(&self, doc_tokens: &[String], cands: &[Vec<String>]) -> Result<Vec<f64>> {
        if cands.is_empty() {
            return Ok(Vec::new());
        }
        let doc: Vec<usize> = ids(&doc_tokens[..doc_tokens.len().min(self.max_source_len)], &self.vocab);
        let mut g = Graph::new(&self.store);
        let side = self.net.doc_side(&mut g, &doc)?;
        cands
            .iter()
            .map(|c| {
                let l = self.net.logit(&mut g, side, &ids(c, &self.vocab))?;
                let p = g.sigmoid(l)?;
                Ok(g.value(p).item())
            })
            .collect()
    }

    pub fn score(&self, doc_tokens: &[String], cand: &[String]) -> Result<f64> {
        Ok(self.score_many(doc_tokens, &[cand.to_vec()])?[0])
    }
}

impl CandidateScorer for Scorer {
    fn score_phrases(&self, doc_tokens: &[String], phrases: &[String]) -> Result<Vec<f64>> {
        let cands: Vec<Vec<String>> = phrases
            .iter()
            .map(|p| p.split_whitespace().map(str::to_string).collect())
            .collect();
        self.score_many(doc_tokens, &cands)
    }
}

/// Negatives for one document: a seeded mix of 1–3 token spans of the text
/// and retrieved candidates, never stem-equal to a gold phrase or to each other.
pub fn sample_negatives(
    doc: &TokenizedDoc,
    retrieved: &[String],
    n_neg: usize,
    span_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<String>> {
    let gold: HashSet<String> = doc.gold_phrases.iter().map(|p| phrase_key(p)).collect();
    let mut seen = gold.clone();
    let mut from_retrieved: Vec<Vec<String>> = Vec::new();
    for r in retrieved {
        if seen.insert(key_of(r)) {
            from_retrieved.push(r.split_whitespace().map(str::to_string).collect());
        }
    }
    from_retrieved.shuffle(rng);
    let mut spans: Vec<Vec<String>> = Vec::new();
    let mut span_keys = HashSet::new();
    for len in 1..=3 {
        for w in doc.tokens.windows(len) {
            if w.iter().any(|t| is_punctuation(t)) {
                continue;
            }
            let key = phrase_key(w);
            if !gold.contains(&key) && span_keys.insert(key) {
                spans.push(w.to_vec());
            }
        }
    }
    spans.shuffle(rng);

    let want_spans = ((n_neg as f64) * span_fraction).round() as usize;
    let want_ret = n_neg - want_spans.min(n_neg);
    let take_ret = want_ret.min(from_retrieved.len());
    let mut out: Vec<Vec<String>> = from_retrieved.drain(..take_ret).collect();
    for s in spans {
        if out.len() >= n_neg {
            break;
        }
        if seen.insert(phrase_key(&s)) {
            out.push(s);
        }
    }
    out.extend(from_retrieved.into_iter().take(n_neg.saturating_sub(out.len())));
    if out.len() < n_neg {
        log::warn!("{}: only {} of {n_neg} negatives available", doc.doc_id, out.len());
    }
    out
}

/// Labelled candidates of one document.
#[derive(Clone, Debug, PartialEq)]
pub struct ScorerDoc {
    pub tokens: Vec<String>,
    pub examples: Vec<(Vec<String>, f64)>,
}

/// Gold phrases as positives plus `neg_ratio` negatives per positive.
pub fn build_examples(doc: &TokenizedDoc, retrieved: &[String], cfg: &ScorerConfig, rng: &mut ChaCha8Rng) -> ScorerDoc {
    let mut examples: Vec<(Vec<String>, f64)> = doc.gold_phrases.iter().map(|p| (p.clone(), 1.0)).collect();
    let n_neg = cfg.neg_ratio * doc.gold_phrases.len();
    if n_neg > 0 {
        examples.extend(
            sample_negatives(doc, retrieved, n_neg, cfg.span_fraction, rng)
                .into_iter()
                .map(|n| (n, 0.0)),
        );
    }
    ScorerDoc {
        tokens: doc.tokens.clone(),
        examples,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorerLogRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_accuracy: f64,
}

pub struct ScorerOutcome {
    pub scorer: Scorer,
    pub log: Vec<ScorerLogRow>,
    pub best_accuracy: f64,
}

fn bce(g: &mut Graph<'_>, logit: Var, label: f64) -> Result<Var> {
    let p = g.sigmoid(logit)?;
    let p = g.clamp(p, CLAMP, 1.0 - CLAMP)?;
    let target = if label >= 0.5 { p } else { g.one_minus(p)? };
    let l = g.log(target)?;
    Ok(g.scale(l, -1.0)?)
}

/// Fraction of examples whose thresholded probability matches the label.
pub fn accuracy(scorer: &Scorer, docs: &[ScorerDoc]) -> Result<f64> {
    let mut right = 0usize;
    let mut total = 0usize;
    for d in docs.iter().filter(|d| !d.examples.is_empty()) {
        let cands: Vec<Vec<String>> = d.examples.iter().map(|e| e.0.clone()).collect();
        let probs = scorer.score_many(&d.tokens, &cands)?;
        for (p, (_, y)) in probs.iter().zip(&d.examples) {
            right += usize::from((*p >= 0.5) == (*y >= 0.5));
            total += 1;
        }
    }
    Ok(if total == 0 { 0.0 } else { right as f64 / total as f64 })
}

/// Minimises binary cross-entropy with Adam; keeps the parameters with the
/// best validation accuracy.
pub fn train_scorer(
    cfg: &ScorerConfig,
    vocab: &Vocabulary,
    train: &[ScorerDoc],
    valid: &[ScorerDoc],
    seed: u64,
) -> Result<ScorerOutcome> {
    cfg.validate()?;
    let labels: Vec<f64> = train.iter().flat_map(|d| d.examples.iter().map(|e| e.1)).collect();
    if !labels.iter().any(|&y| y >= 0.5) || !labels.iter().any(|&y| y < 0.5) {
        return Err(Error::InvalidInput("scorer training data must contain both labels".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let net = ScorerNet::init(&mut store, cfg, vocab.len(), &mut rng)?;
    let mut adam = Adam::new(&store, cfg.lr);
    let encoded: Vec<(Vec<usize>, Vec<(Vec<usize>, f64)>)> = train
        .iter()
        .filter(|d| !d.examples.is_empty())
        .map(|d| {
            let doc = ids(&d.tokens[..d.tokens.len().min(cfg.max_source_len)], vocab);
            (doc, d.examples.iter().map(|(c, y)| (ids(c, vocab), *y)).collect())
        })
        .collect();
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut scorer = Scorer {
        store,
        net,
        vocab: vocab.clone(),
        max_source_len: cfg.max_source_len,
    };
    let mut best = (-1.0, scorer.store.clone());
    let mut bad = 0;
    let mut log = Vec::new();
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_n = 0usize;
        for batch in order.chunks(cfg.batch_docs) {
            let n: usize = batch.iter().map(|&i| encoded[i].1.len()).sum();
            let mut grads: Vec<Tensor> = scorer.store.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
            for &i in batch {
                let (doc, examples) = &encoded[i];
                let mut g = Graph::new(&scorer.store);
                let side = scorer.net.doc_side(&mut g, doc)?;
                let mut terms = Vec::with_capacity(examples.len());
                for (c, y) in examples {
                    let l = scorer.net.logit(&mut g, side, c)?;
                    terms.push(bce(&mut g, l, *y)?);
                }
                let all = g.concat(&terms)?;
                let total = g.sum(all)?;
                epoch_loss += g.value(total).item();
                let scaled = g.scale(total, 1.0 / n as f64)?;
                g.backward(scaled)?.accumulate_into(&mut grads);
            }
            epoch_n += n;
            clip_global_norm(&mut grads, cfg.max_grad_norm);
            adam.step(&mut scorer.store, &grads)?;
        }
        let acc = accuracy(&scorer, if valid.is_empty() { train } else { valid })?;
        log.push(ScorerLogRow {
            epoch: epoch + 1,
            train_loss: epoch_loss / epoch_n.max(1) as f64,
            valid_accuracy: acc,
        });
        log::info!("scorer epoch {}: valid accuracy {acc:.4}", epoch + 1);
        if acc > best.0 {
            best = (acc, scorer.store.clone());
            bad = 0;
        } else {
            bad += 1;
            if bad >= cfg.patience {
                break;
            }
        }
    }
    scorer.store = best.1;
    Ok(ScorerOutcome {
        scorer,
        log,
        best_accuracy: best.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn negatives_exclude_gold() {
        let doc = TokenizedDoc::new("d", toks("neural nets for parameter control ."), vec![toks("neural net"), toks("control")]);
        let retrieved = vec!["neural nets".to_string(), "genetic algorithm".to_string(), "search".to_string()];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let negs = sample_negatives(&doc, &retrieved, 6, 0.5, &mut rng);
        assert_eq!(negs.len(), 6);
        let gold: HashSet<String> = doc.gold_phrases.iter().map(|p| phrase_key(p)).collect();
        let mut keys = HashSet::new();
        for n in &negs {
            assert!(!gold.contains(&phrase_key(n)), "{n:?}");
            assert!(keys.insert(phrase_key(n)));
            assert!(!n.iter().any(|t| t == "."));
        }
        let again = sample_negatives(&doc, &retrieved, 6, 0.5, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(negs, again);
    }

    #[test]
    fn all_unigrams_gold() {
        let doc = TokenizedDoc::new("d", toks("a b c"), vec![toks("a"), toks("b"), toks("c")]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let negs = sample_negatives(&doc, &[], 10, 1.0, &mut rng);
        assert_eq!(negs.len(), 3);
        assert!(negs.iter().all(|n| n.len() > 1));
    }

    #[test]
    fn untrained_scores_in_range_and_deterministic() {
        let doc = TokenizedDoc::new("d", toks("a b c"), vec![toks("a")]);
        let vocab = Vocabulary::build(&[doc.clone()], 100).unwrap();
        let cfg = ScorerConfig {
            embedding_dim: 4,
            hidden_dim: 4,
            attend_dim: 3,
            mlp_dim: 3,
            ..Default::default()
        };
        let mut store = ParamStore::new();
        let net = ScorerNet::init(&mut store, &cfg, vocab.len(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let s = Scorer { store, net, vocab, max_source_len: 400 };
        let p = s.score(&doc.tokens, &toks("a b")).unwrap();
        assert!(p > 0.0 && p < 1.0);
        assert_eq!(p.to_bits(), s.score(&doc.tokens, &toks("a b")).unwrap().to_bits());
        assert!(s.score(&doc.tokens, &[]).is_err());
    }

    #[test]
    fn single_class_rejected() {
        let doc = TokenizedDoc::new("d", toks("a b"), vec![toks("a")]);
        let vocab = Vocabulary::build(&[doc.clone()], 100).unwrap();
        let only_pos = ScorerDoc {
            tokens: doc.tokens.clone(),
            examples: vec![(toks("a"), 1.0)],
        };
        assert!(train_scorer(&ScorerConfig::default(), &vocab, &[only_pos], &[], 0).is_err());
    }
}
