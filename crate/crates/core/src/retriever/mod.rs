//! Jaccard retrieval of similar training documents and their keyphrases.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::candidates::{dedup_max, Candidate};
use crate::corpus::{is_punctuation, tokenize, Document, SEP};
use crate::error::{Error, Result};
use crate::io;

/// Format version of the persisted index.
pub const INDEX_VERSION: u32 = 1;

/// Default number of neighbors.
pub const DEFAULT_K: usize = 3;

const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

/// A fixed stop-word list. The default is the bundled English snapshot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Default for Stopwords {
    fn default() -> Self {
        Self::from_text(BUNDLED_STOPWORDS)
    }
}

impl Stopwords {
    /// One word per line; blank lines and `#` comments are ignored.
    pub fn from_text(text: &str) -> Self {
        Self(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::from_text(&io::read_to_string(path)?))
    }

    pub fn from_words<I: IntoIterator<Item = S>, S: Into<String>>(words: I) -> Self {
        Self(words.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn sorted(&self) -> Vec<String> {
        let mut v: Vec<String> = self.0.iter().cloned().collect();
        v.sort();
        v
    }
}

/// Distinct tokens that are neither stop words nor punctuation.
pub fn term_set(tokens: &[String], stopwords: &Stopwords) -> BTreeSet<String> {
    tokens
        .iter()
        .filter(|t| !stopwords.contains(t) && !is_punctuation(t))
        .cloned()
        .collect()
}

/// `|a ∩ b| / |a ∪ b|`, and 0 when both are empty.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    ratio(inter, a.len(), b.len())
}

fn ratio(inter: usize, a: usize, b: usize) -> f64 {
    let union = a + b - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct IndexedDoc {
    id: String,
    terms: Vec<String>,
    keyphrases: Vec<String>,
}

/// Inverted index over the non-stop-word sets of a corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalIndex {
    stopwords: Vec<String>,
    /// Sorted by id, so a smaller position means a smaller id.
    docs: Vec<IndexedDoc>,
    /// Term to positions in `docs`, ascending.
    postings: BTreeMap<String, Vec<u32>>,
}

/// One retrieved document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub doc_id: String,
    pub score: f64,
    pub keyphrases: Vec<String>,
}

/// Up to `K` neighbors, best first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub neighbors: Vec<Neighbor>,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    version: u32,
    config_hash: String,
    index: RetrievalIndex,
}

impl RetrievalIndex {
    pub fn build(docs: &[Document], stopwords: &Stopwords) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::InvalidInput("cannot index an empty corpus".into()));
        }
        let mut indexed: Vec<IndexedDoc> = docs
            .iter()
            .map(|d| IndexedDoc {
                id: d.id.clone(),
                terms: term_set(&d.tokens(), stopwords).into_iter().collect(),
                keyphrases: d.keyphrases.clone(),
            })
            .collect();
        indexed.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = indexed.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidInput(format!("duplicate document id `{}`", w[0].id)));
        }
        let mut postings: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for (i, d) in indexed.iter().enumerate() {
            if d.terms.is_empty() {
                log::warn!("document `{}` has no indexable terms and can never be retrieved", d.id);
            }
            for t in &d.terms {
                postings.entry(t.clone()).or_default().push(i as u32);
            }
        }
        Ok(Self {
            stopwords: stopwords.sorted(),
            docs: indexed,
            postings,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn stopwords(&self) -> Stopwords {
        Stopwords::from_words(self.stopwords.iter().cloned())
    }

    /// Ids of the documents containing `term`, ascending.
    pub fn posting(&self, term: &str) -> Vec<&str> {
        self.postings
            .get(term)
            .map(|p| p.iter().map(|&i| self.docs[i as usize].id.as_str()).collect())
            .unwrap_or_default()
    }

    /// Term set of an indexed document.
    pub fn terms(&self, id: &str) -> Option<BTreeSet<String>> {
        self.position(id).map(|i| self.docs[i].terms.iter().cloned().collect())
    }

    fn position(&self, id: &str) -> Option<usize> {
        self.docs.binary_search_by(|d| d.id.as_str().cmp(id)).ok()
    }

    /// Top-`k` neighbors of a tokenized query. A query whose id is indexed
    /// never retrieves itself.
    pub fn retrieve(&self, query_id: &str, tokens: &[String], k: usize) -> Result<RetrievalResult> {
        let terms = tokens
            .iter()
            .filter(|t| self.stopwords.binary_search(t).is_err() && !is_punctuation(t))
            .cloned()
            .collect();
        self.retrieve_terms(query_id, &terms, k)
    }

    pub fn retrieve_terms(&self, query_id: &str, terms: &BTreeSet<String>, k: usize) -> Result<RetrievalResult> {
        if k < 1 {
            return Err(Error::InvalidInput("K must be at least 1".into()));
        }
        let mut overlap = vec![0usize; self.docs.len()];
        for t in terms {
            if let Some(p) = self.postings.get(t) {
                for &i in p {
                    overlap[i as usize] += 1;
                }
            }
        }
        let own = self.position(query_id);
        let mut scored: Vec<(usize, f64)> = overlap
            .iter()
            .enumerate()
            .filter(|&(i, &n)| n > 0 && Some(i) != own)
            .map(|(i, &n)| (i, ratio(n, terms.len(), self.docs[i].terms.len())))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(RetrievalResult {
            neighbors: scored
                .into_iter()
                .map(|(i, score)| Neighbor {
                    doc_id: self.docs[i].id.clone(),
                    score,
                    keyphrases: self.docs[i].keyphrases.clone(),
                })
                .collect(),
        })
    }

    pub fn to_json(&self, config_hash: &str) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(&IndexFile {
            version: INDEX_VERSION,
            config_hash: config_hash.to_string(),
            index: self.clone(),
        })?)
    }

    /// Returns the index and the config hash it was built with.
    pub fn from_json(bytes: &[u8]) -> Result<(Self, String)> {
        let file: IndexFile = serde_json::from_slice(bytes)?;
        if file.version != INDEX_VERSION {
            return Err(Error::InvalidInput(format!(
                "index format version {} is not supported (expected {INDEX_VERSION})",
                file.version
            )));
        }
        Ok((file.index, file.config_hash))
    }

    pub fn save(&self, path: &Path, config_hash: &str) -> Result<()> {
        io::write_atomic(path, &self.to_json(config_hash)?)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes)
    }
}

/// Every neighbor's keyphrases as one token sequence, phrases separated by `;`.
pub fn concat_retrieved(result: &RetrievalResult) -> Vec<String> {
    let mut out = Vec::new();
    for phrase in result.neighbors.iter().flat_map(|n| &n.keyphrases) {
        let toks = tokenize(phrase);
        if toks.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(SEP.to_string());
        }
        out.extend(toks);
    }
    out
}

/// Retrieved candidates scored by their neighbor's similarity; stemmed
/// duplicates keep the higher score.
pub fn collect_retrieved_candidates(result: &RetrievalResult) -> Vec<Candidate> {
    let all = result.neighbors.iter().flat_map(|n| {
        n.keyphrases.iter().filter_map(move |p| {
            let toks = tokenize(p);
            (!toks.is_empty()).then(|| Candidate::new(toks.join(" "), n.score))
        })
    });
    dedup_max(all)
}
