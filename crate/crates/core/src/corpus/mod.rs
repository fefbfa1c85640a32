//! Dataset ingestion, tokenization, vocabulary and training-tuple splitting.

mod tokenize;
mod vocab;

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::retriever::{jaccard, term_set, Stopwords};
use crate::stem::{contains_run, stem, stem_all};

pub use tokenize::{is_punctuation, tokenize, DIGIT};
pub use vocab::{Vocabulary, BOS, BOS_ID, EOS, EOS_ID, PAD, PAD_ID, RESERVED, SEP, SEP_ID, UNK, UNK_ID};

/// Default cap on source length used when building tuples.
pub const MAX_SOURCE_LEN: usize = 400;

/// One raw dataset record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub keyphrases: Vec<String>,
}

impl Document {
    /// Title followed by abstract, tokenized.
    pub fn tokens(&self) -> Vec<String> {
        let mut t = tokenize(&self.title);
        t.extend(tokenize(&self.abstract_text));
        t
    }

    pub fn tokenized(&self) -> TokenizedDoc {
        let gold = self
            .keyphrases
            .iter()
            .map(|k| tokenize(k))
            .filter(|k| !k.is_empty())
            .collect();
        TokenizedDoc::new(self.id.clone(), self.tokens(), gold)
    }
}

/// Parses JSONL text; `line` numbers in errors are 1-based.
pub fn parse_dataset(text: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        if doc.title.trim().is_empty() || doc.abstract_text.trim().is_empty() {
            return Err(Error::Parse {
                line,
                msg: format!("document `{}` has an empty title or abstract", doc.id),
            });
        }
        if !seen.insert(doc.id.clone()) {
            return Err(Error::DuplicateId { line, id: doc.id });
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_dataset(path: &Path) -> Result<Vec<Document>> {
    parse_dataset(&io::read_to_string(path)?)
}

pub fn save_dataset(path: &Path, docs: &[Document]) -> Result<()> {
    io::write_atomic(path, &io::to_jsonl(docs)?)
}

/// A document after tokenization, with gold phrases tokenized the same way.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub gold_phrases: Vec<Vec<String>>,
    /// Whether each gold phrase occurs contiguously in the stemmed tokens.
    pub present_mask: Vec<bool>,
}

impl TokenizedDoc {
    pub fn new(doc_id: impl Into<String>, tokens: Vec<String>, gold_phrases: Vec<Vec<String>>) -> Self {
        let stemmed = stem_all(&tokens);
        let present_mask = gold_phrases
            .iter()
            .map(|p| contains_run(&stemmed, &stem_all(p)))
            .collect();
        Self {
            doc_id: doc_id.into(),
            tokens,
            gold_phrases,
            present_mask,
        }
    }
}

/// How gold words are matched against source tokens when labelling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMatch {
    #[default]
    Exact,
    Stemmed,
}

/// `1.0` for every source token that is a word of some gold phrase.
pub fn gold_importance(tokens: &[String], gold_phrases: &[Vec<String>], matching: LabelMatch) -> Vec<f64> {
    let key = |t: &str| match matching {
        LabelMatch::Exact => t.to_string(),
        LabelMatch::Stemmed => stem(t),
    };
    let gold: HashSet<String> = gold_phrases.iter().flatten().map(|t| key(t)).collect();
    tokens
        .iter()
        .map(|t| if gold.contains(&key(t)) { 1.0 } else { 0.0 })
        .collect()
}

/// Everything about a document the model consumes, shared by its tuples.
#[derive(Clone, Debug, PartialEq)]
pub struct Source {
    pub doc_id: String,
    /// Surface tokens (possibly truncated).
    pub tokens: Vec<String>,
    /// Vocabulary ids, `<unk>` for out-of-vocabulary tokens.
    pub x: Vec<usize>,
    /// Ids in the extended vocabulary: OOV token `k` maps to `|V| + k`.
    pub x_ext: Vec<usize>,
    /// Source-specific OOV tokens in order of first occurrence.
    pub oov: Vec<String>,
    /// Retrieved keyphrase sequence as vocabulary ids.
    pub r: Vec<usize>,
    /// Gold importance labels; empty when unlabelled.
    pub beta_star: Vec<f64>,
}

impl Source {
    pub fn new(doc_id: impl Into<String>, tokens: &[String], r: &[String], vocab: &Vocabulary, max_len: usize) -> Self {
        let tokens: Vec<String> = tokens.iter().take(max_len.max(1)).cloned().collect();
        let mut oov: Vec<String> = Vec::new();
        let mut x = Vec::with_capacity(tokens.len());
        let mut x_ext = Vec::with_capacity(tokens.len());
        for t in &tokens {
            match vocab.get(t) {
                Some(id) if id != UNK_ID => {
                    x.push(id);
                    x_ext.push(id);
                }
                _ => {
                    let k = match oov.iter().position(|o| o == t) {
                        Some(k) => k,
                        None => {
                            oov.push(t.clone());
                            oov.len() - 1
                        }
                    };
                    x.push(UNK_ID);
                    x_ext.push(vocab.len() + k);
                }
            }
        }
        Self {
            doc_id: doc_id.into(),
            tokens,
            x,
            x_ext,
            oov,
            r: r.iter().map(|t| vocab.index_of(t)).collect(),
            beta_star: Vec::new(),
        }
    }

    /// Size of the extended vocabulary for this source.
    pub fn ext_vocab_len(&self, vocab_len: usize) -> usize {
        vocab_len + self.oov.len()
    }

    /// Extended-vocabulary id of `token`, if it can be produced at all.
    pub fn ext_id(&self, token: &str, vocab: &Vocabulary) -> Option<usize> {
        match vocab.get(token) {
            Some(id) if id != UNK_ID => Some(id),
            _ => self.oov.iter().position(|o| o == token).map(|k| vocab.len() + k),
        }
    }

    /// Surface form of an extended-vocabulary id.
    pub fn ext_token<'a>(&'a self, id: usize, vocab: &'a Vocabulary) -> &'a str {
        if id < vocab.len() {
            vocab.token(id)
        } else {
            &self.oov[id - vocab.len()]
        }
    }
}

/// One (source, retrieved, labels, gold phrase) training instance.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingTuple {
    pub source: Arc<Source>,
    /// Target ids with `<unk>` for OOV tokens, terminated by `<eos>`; used as decoder inputs.
    pub y: Vec<usize>,
    /// Extended-vocabulary targets; `None` marks a position that cannot be produced.
    pub y_ext: Vec<Option<usize>>,
}

/// Splits a document into one tuple per gold phrase, all sharing one [`Source`].
pub fn split_tuples(
    doc: &TokenizedDoc,
    r: &[String],
    vocab: &Vocabulary,
    max_len: usize,
    matching: LabelMatch,
) -> Vec<TrainingTuple> {
    let mut source = Source::new(doc.doc_id.clone(), &doc.tokens, r, vocab, max_len);
    source.beta_star = gold_importance(&source.tokens, &doc.gold_phrases, matching);
    let source = Arc::new(source);
    doc.gold_phrases
        .iter()
        .map(|phrase| {
            let mut y: Vec<usize> = phrase.iter().map(|t| vocab.index_of(t)).collect();
            y.push(EOS_ID);
            let mut y_ext: Vec<Option<usize>> = phrase.iter().map(|t| source.ext_id(t, vocab)).collect();
            y_ext.push(Some(EOS_ID));
            if y_ext.iter().any(Option::is_none) {
                log::warn!("{}: target `{}` has tokens outside vocabulary and source", doc.doc_id, phrase.join(" "));
            }
            TrainingTuple {
                source: Arc::clone(&source),
                y,
                y_ext,
            }
        })
        .collect()
}

/// Drops every document whose non-stop-word token set has Jaccard similarity
/// of at least `threshold` with an earlier kept document.
pub fn dedup_corpus(docs: &[Document], stopwords: &Stopwords, threshold: f64) -> Vec<Document> {
    let mut kept: Vec<(Document, std::collections::BTreeSet<String>)> = Vec::new();
    for doc in docs {
        let terms = term_set(&doc.tokens(), stopwords);
        if kept.iter().all(|(_, t)| jaccard(t, &terms) < threshold) {
            kept.push((doc.clone(), terms));
        }
    }
    kept.into_iter().map(|(d, _)| d).collect()
}
