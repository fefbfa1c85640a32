//! Fuses retrieved, extracted and generated candidates into one ranking.
//!
//! Retrieval and extraction scores are first rescaled so that their averages
//! match the average generation score, every score is multiplied by the
//! scorer's probability, and the adjusted scores of a phrase are summed over
//! the sources that proposed it.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::candidates::{CandidateSet, SourcedCandidate};
use crate::error::{Error, Result};
use crate::eval::Profile;
use crate::scorer::CandidateScorer;
use crate::stem::key_of;

/// Adjusted score contributed by each source; `None` if the source did not
/// propose the phrase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceScores {
    pub r: Option<f64>,
    pub e: Option<f64>,
    pub g: Option<f64>,
}

impl SourceScores {
    pub fn total(&self) -> f64 {
        self.r.unwrap_or(0.0) + self.e.unwrap_or(0.0) + self.g.unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub phrase: String,
    pub score: f64,
    pub sources: SourceScores,
    pub present: bool,
}

/// Per-document averages of the raw source scores (0 for an empty list).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Averages {
    pub rs: f64,
    pub es: f64,
    pub gs: f64,
}

fn mean(list: &[SourcedCandidate]) -> f64 {
    if list.is_empty() {
        0.0
    } else {
        list.iter().map(|c| c.score).sum::<f64>() / list.len() as f64
    }
}

pub fn averages(set: &CandidateSet) -> Averages {
    Averages {
        rs: mean(&set.rk),
        es: mean(&set.ek),
        gs: mean(&set.gk),
    }
}

/// Factor bringing a list with average `u` to the generation average. When
/// there are no generated candidates, scores are left on their own scale.
fn balance(u_gs: f64, u: f64, have_generated: bool) -> f64 {
    if !have_generated {
        1.0
    } else if u > 0.0 {
        u_gs / u
    } else {
        0.0
    }
}

/// Orders predictions by score, descending, then by phrase.
pub fn rank(preds: &mut [Prediction]) {
    preds.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.phrase.cmp(&b.phrase)));
}

pub fn merge(set: &CandidateSet, doc_tokens: &[String], scorer: &dyn CandidateScorer) -> Result<Vec<Prediction>> {
    if set.is_empty() {
        return Err(Error::InvalidInput("nothing to merge: all candidate lists are empty".into()));
    }
    let u = averages(set);
    let have_g = !set.gk.is_empty();
    let phrases: Vec<String> = set
        .rk
        .iter()
        .chain(&set.ek)
        .chain(&set.gk)
        .map(|c| c.phrase.clone())
        .collect();
    let probs = scorer.score_phrases(doc_tokens, &phrases)?;
    if probs.len() != phrases.len() {
        return Err(Error::InvalidInput("scorer returned the wrong number of scores".into()));
    }
    let (pr, rest) = probs.split_at(set.rk.len());
    let (pe, pg) = rest.split_at(set.ek.len());

    let mut out: Vec<Prediction> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let lists: [(&[SourcedCandidate], &[f64], f64, usize); 3] = [
        (&set.gk, pg, 1.0, 2),
        (&set.rk, pr, balance(u.gs, u.rs, have_g), 0),
        (&set.ek, pe, balance(u.gs, u.es, have_g), 1),
    ];
    for (list, probs, factor, source) in lists {
        for (c, p) in list.iter().zip(probs) {
            let adjusted = c.score * factor * p;
            let i = *index.entry(key_of(&c.phrase)).or_insert_with(|| {
                out.push(Prediction {
                    phrase: c.phrase.clone(),
                    score: 0.0,
                    sources: SourceScores::default(),
                    present: c.present,
                });
                out.len() - 1
            });
            let slot = match source {
                0 => &mut out[i].sources.r,
                1 => &mut out[i].sources.e,
                _ => &mut out[i].sources.g,
            };
            *slot = Some(slot.map_or(adjusted, |s: f64| s.max(adjusted)));
        }
    }
    for p in &mut out {
        p.score = p.sources.total();
    }
    rank(&mut out);
    Ok(out)
}

/// Generated candidates alone, in beam order.
pub fn generated_only(set: &CandidateSet) -> Vec<Prediction> {
    set.gk
        .iter()
        .map(|c| Prediction {
            phrase: c.phrase.clone(),
            score: c.score,
            sources: SourceScores {
                g: Some(c.score),
                ..Default::default()
            },
            present: c.present,
        })
        .collect()
}

/// Applies the dataset profile's single-word rule: KP20k keeps every
/// single-word prediction, other profiles only the best-ranked one.
pub fn select_final(preds: &[Prediction], profile: Profile) -> Vec<Prediction> {
    let mut seen_single = false;
    preds
        .iter()
        .filter(|p| {
            if profile == Profile::Kp20k || p.phrase.split_whitespace().count() != 1 {
                return true;
            }
            !std::mem::replace(&mut seen_single, true)
        })
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::ConstantScorer;

    fn c(p: &str, s: f64) -> SourcedCandidate {
        SourcedCandidate {
            phrase: p.into(),
            score: s,
            present: false,
        }
    }

    #[test]
    fn hand_traced() {
        let set = CandidateSet {
            rk: vec![c("a", 0.5), c("b", 0.4)],
            ek: vec![],
            gk: vec![c("a", 0.2)],
        };
        let out = merge(&set, &[], &ConstantScorer(1.0)).unwrap();
        assert_eq!(out[0].phrase, "a");
        assert!((out[0].score - 0.42222).abs() < 1e-4);
        assert!((out[0].sources.r.unwrap() - 0.22222).abs() < 1e-4);
        assert_eq!(out[1].phrase, "b");
        assert!((out[1].score - 0.17778).abs() < 1e-4);
    }

    #[test]
    fn zero_scorer_and_empty() {
        struct ZeroFor(&'static str);
        impl CandidateScorer for ZeroFor {
            fn score_phrases(&self, _: &[String], p: &[String]) -> Result<Vec<f64>> {
                Ok(p.iter().map(|p| if p == self.0 { 0.0 } else { 1.0 }).collect())
            }
        }
        let set = CandidateSet {
            rk: vec![],
            ek: vec![c("x", 0.9), c("y", 0.8)],
            gk: vec![c("z", 0.1)],
        };
        let out = merge(&set, &[], &ZeroFor("x")).unwrap();
        assert_eq!(out.last().unwrap().phrase, "x");
        assert_eq!(out.last().unwrap().score, 0.0);
        assert!(merge(&CandidateSet::default(), &[], &ConstantScorer(1.0)).is_err());
    }

    fn pred(p: &str) -> Prediction {
        Prediction {
            phrase: p.into(),
            score: 0.0,
            sources: SourceScores::default(),
            present: true,
        }
    }

    #[test]
    fn single_word_rule() {
        let preds: Vec<Prediction> = ["x", "a b", "y", "z"].iter().map(|p| pred(p)).collect();
        let names = |v: Vec<Prediction>| v.into_iter().map(|p| p.phrase).collect::<Vec<_>>();
        assert_eq!(names(select_final(&preds, Profile::Kp20k)), ["x", "a b", "y", "z"]);
        assert_eq!(names(select_final(&preds, Profile::Other)), ["x", "a b"]);
        let multi: Vec<Prediction> = ["a b", "c d"].iter().map(|p| pred(p)).collect();
        assert_eq!(select_final(&multi, Profile::Other), multi);
    }
}
