//! Candidate keyphrases from retrieval, extraction and generation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::is_punctuation;
use crate::stem::{contains_run, key_of, stem_all};

/// Default keyword threshold on importance scores.
pub const DEFAULT_EPSILON: f64 = 0.7;

/// A phrase (tokens joined by single spaces) with a source score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub phrase: String,
    pub score: f64,
}

impl Candidate {
    pub fn new(phrase: impl Into<String>, score: f64) -> Self {
        Self {
            phrase: phrase.into(),
            score,
        }
    }

    pub fn key(&self) -> String {
        key_of(&self.phrase)
    }
}

/// Collapses stemmed duplicates to their best-scoring occurrence (the first
/// one on ties) and sorts by score, descending. The sort is stable.
pub fn dedup_max<I: IntoIterator<Item = Candidate>>(items: I) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for c in items {
        match seen.get(&c.key()) {
            Some(&i) => {
                if c.score > out[i].score {
                    out[i] = c;
                }
            }
            None => {
                seen.insert(c.key(), out.len());
                out.push(c);
            }
        }
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    out
}

/// Maximal runs of tokens with `beta >= epsilon` become candidates scored by
/// their mean importance. With `skip_punctuation`, punctuation tokens never
/// count as keywords and therefore split runs.
pub fn collect_extracted(tokens: &[String], beta: &[f64], epsilon: f64, skip_punctuation: bool) -> Vec<Candidate> {
    assert_eq!(tokens.len(), beta.len(), "one importance score per token");
    let keyword = |i: usize| beta[i] >= epsilon && !(skip_punctuation && is_punctuation(&tokens[i]));
    let mut runs = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if !keyword(i) {
            i += 1;
            continue;
        }
        let start = i;
        while i < tokens.len() && keyword(i) {
            i += 1;
        }
        let mean = beta[start..i].iter().sum::<f64>() / (i - start) as f64;
        runs.push(Candidate::new(tokens[start..i].join(" "), mean));
    }
    dedup_max(runs)
}

/// A candidate with its presence in the source text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourcedCandidate {
    pub phrase: String,
    pub score: f64,
    pub present: bool,
}

/// The three candidate lists of one document, each sorted by score.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub rk: Vec<SourcedCandidate>,
    pub ek: Vec<SourcedCandidate>,
    pub gk: Vec<SourcedCandidate>,
}

impl CandidateSet {
    pub fn is_empty(&self) -> bool {
        self.rk.is_empty() && self.ek.is_empty() && self.gk.is_empty()
    }
}

/// True if the stemmed phrase occurs contiguously in the stemmed source.
pub fn is_present(phrase: &str, stemmed_source: &[String]) -> bool {
    let p: Vec<&str> = phrase.split_whitespace().collect();
    contains_run(stemmed_source, &stem_all(&p))
}

/// Flags presence against `source_tokens` and sorts each list.
pub fn assemble(
    retrieved: Vec<Candidate>,
    extracted: Vec<Candidate>,
    generated: Vec<Candidate>,
    source_tokens: &[String],
) -> CandidateSet {
    let stemmed = stem_all(source_tokens);
    let flag = |list: Vec<Candidate>| {
        let mut out: Vec<SourcedCandidate> = list
            .into_iter()
            .map(|c| SourcedCandidate {
                present: is_present(&c.phrase, &stemmed),
                phrase: c.phrase,
                score: c.score,
            })
            .collect();
        out.sort_by(|a, b| b.score.total_cmp(&a.score));
        out
    };
    CandidateSet {
        rk: flag(retrieved),
        ek: flag(extracted),
        gk: flag(generated),
    }
}

/// One line of the candidate dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateDump {
    pub id: String,
    pub rk: Vec<Candidate>,
    pub ek: Vec<Candidate>,
    pub gk: Vec<Candidate>,
}

impl CandidateDump {
    pub fn new(id: impl Into<String>, set: &CandidateSet) -> Self {
        let plain = |l: &[SourcedCandidate]| l.iter().map(|c| Candidate::new(c.phrase.clone(), c.score)).collect();
        Self {
            id: id.into(),
            rk: plain(&set.rk),
            ek: plain(&set.ek),
            gk: plain(&set.gk),
        }
    }
}
