//! Stemmed matching and ranking metrics.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::stem::{contains_run, key_of, stem_all};

/// Dataset conventions for filtering predictions and stemming gold phrases.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Profile {
    #[serde(rename = "kp20k")]
    Kp20k,
    #[default]
    #[serde(rename = "other")]
    Other,
    /// Gold phrases are already stemmed.
    #[serde(rename = "semeval")]
    SemEval,
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Kp20k => "kp20k",
            Profile::Other => "other",
            Profile::SemEval => "semeval",
        }
    }

    pub fn stems_gold(self) -> bool {
        self != Profile::SemEval
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kp20k" => Ok(Profile::Kp20k),
            "other" => Ok(Profile::Other),
            "semeval" => Ok(Profile::SemEval),
            _ => Err(Error::Config(format!("unknown profile {s:?} (expected kp20k, other or semeval)"))),
        }
    }
}

/// How precision at k is normalised when fewer than k predictions exist.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionDenominator {
    /// `min(k, |preds|)`.
    #[default]
    MinK,
    /// Always `k`.
    K,
}

/// Two phrases match when their stemmed token sequences are equal.
pub fn matches(pred: &str, gold: &str) -> bool {
    key_of(pred) == key_of(gold)
}

/// Keeps the first phrase of each stemmed form, in order.
pub fn dedup_predictions<S: AsRef<str>>(preds: &[S]) -> Vec<String> {
    let mut seen = HashSet::new();
    preds
        .iter()
        .filter(|p| seen.insert(key_of(p.as_ref())))
        .map(|p| p.as_ref().to_string())
        .collect()
}

/// Normalised but unstemmed form, for gold that is already stemmed.
fn raw_key(phrase: &str) -> String {
    phrase.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

fn gold_keys<S: AsRef<str>>(gold: &[S], stem: bool) -> HashSet<String> {
    gold.iter()
        .map(|g| if stem { key_of(g.as_ref()) } else { raw_key(g.as_ref()) })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Hit flags of the ranked predictions against a set of gold keys.
fn hits(pred_keys: &[String], gold: &HashSet<String>) -> Vec<bool> {
    pred_keys.iter().map(|p| gold.contains(p)).collect()
}

/// Keys of the predictions with later stem duplicates dropped.
fn unique_keys<S: AsRef<str>>(preds: &[S]) -> Vec<String> {
    let mut seen = HashSet::new();
    keyed(preds).into_iter().filter(|k| seen.insert(k.clone())).collect()
}

fn prf(hits: &[bool], n_gold: usize, k: usize, denom: PrecisionDenominator) -> Prf {
    if hits.is_empty() || n_gold == 0 || k == 0 {
        return Prf::default();
    }
    let top = k.min(hits.len());
    let correct = hits[..top].iter().filter(|h| **h).count() as f64;
    let p_den = match denom {
        PrecisionDenominator::MinK => top,
        PrecisionDenominator::K => k,
    };
    let precision = correct / p_den as f64;
    let recall = correct / n_gold as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Prf { precision, recall, f1 }
}

fn average_precision(hits: &[bool], n_gold: usize, k: usize) -> f64 {
    if n_gold == 0 || k == 0 {
        return 0.0;
    }
    let mut correct = 0usize;
    let mut sum = 0.0;
    for (i, _) in hits.iter().take(k).enumerate().filter(|(_, h)| **h) {
        correct += 1;
        sum += correct as f64 / (i + 1) as f64;
    }
    sum / n_gold.min(k) as f64
}

fn keyed<S: AsRef<str>>(preds: &[S]) -> Vec<String> {
    preds.iter().map(|p| key_of(p.as_ref())).collect()
}

/// Precision, recall and F1 of the top `k` (deduplicated) predictions.
pub fn prf_at_k<S: AsRef<str>, T: AsRef<str>>(preds: &[S], gold: &[T], k: usize, denom: PrecisionDenominator) -> Prf {
    let g = gold_keys(gold, true);
    prf(&hits(&unique_keys(preds), &g), g.len(), k, denom)
}

pub fn f1_at_k<S: AsRef<str>, T: AsRef<str>>(preds: &[S], gold: &[T], k: usize) -> f64 {
    prf_at_k(preds, gold, k, PrecisionDenominator::MinK).f1
}

pub fn recall_at_k<S: AsRef<str>, T: AsRef<str>>(preds: &[S], gold: &[T], k: usize) -> f64 {
    prf_at_k(preds, gold, k, PrecisionDenominator::MinK).recall
}

/// Average precision over the top `k`, normalised by `min(|gold|, k)`.
pub fn map_at_k<S: AsRef<str>, T: AsRef<str>>(preds: &[S], gold: &[T], k: usize) -> f64 {
    let g = gold_keys(gold, true);
    average_precision(&hits(&unique_keys(preds), &g), g.len(), k)
}

/// Predictions and gold phrases restricted to one side of the present/absent split.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Split {
    pub preds: Vec<String>,
    pub gold: Vec<String>,
}

/// Splits predictions and gold by stemmed containment in the source; order is kept.
pub fn split_present_absent<S: AsRef<str>, T: AsRef<str>>(
    preds: &[S],
    gold: &[T],
    source_tokens: &[String],
    stem_gold: bool,
) -> (Split, Split) {
    let stemmed = stem_all(source_tokens);
    let lower: Vec<String> = source_tokens.iter().map(|t| t.to_lowercase()).collect();
    let present = |p: &str, stem: bool| {
        let toks: Vec<String> = p.split_whitespace().map(str::to_lowercase).collect();
        if stem {
            contains_run(&stemmed, &stem_all(&toks))
        } else {
            contains_run(&stemmed, &toks) || contains_run(&lower, &toks)
        }
    };
    let (mut pres, mut abs) = (Split::default(), Split::default());
    for p in preds {
        let side = if present(p.as_ref(), true) { &mut pres } else { &mut abs };
        side.preds.push(p.as_ref().to_string());
    }
    for g in gold {
        let side = if present(g.as_ref(), stem_gold) { &mut pres } else { &mut abs };
        side.gold.push(g.as_ref().to_string());
    }
    (pres, abs)
}

/// Metrics of one document; split metrics are `None` when that side has no gold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocRow {
    pub id: String,
    pub n_predictions: usize,
    pub n_gold: usize,
    pub f1_at_5: f64,
    pub f1_at_10: f64,
    pub r_at_10: f64,
    pub map_at_10: f64,
    pub present_f1_at_5: Option<f64>,
    pub absent_r_at_10: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub profile: Profile,
    pub precision_denominator: PrecisionDenominator,
    /// Documents with non-empty gold.
    pub documents: usize,
    pub f1_at_5: f64,
    pub f1_at_10: f64,
    pub r_at_10: f64,
    pub map_at_10: f64,
    pub present_documents: usize,
    pub present_f1_at_5: f64,
    pub absent_documents: usize,
    pub absent_r_at_10: f64,
    pub rows: Vec<DocRow>,
}

fn metrics_for(preds: &[String], gold: &[String], stem_gold: bool, k: usize, denom: PrecisionDenominator) -> (Prf, f64) {
    let g = gold_keys(gold, stem_gold);
    let h = hits(&keyed(preds), &g);
    (prf(&h, g.len(), k, denom), average_precision(&h, g.len(), k))
}

/// Scores one document's ranked predictions.
pub fn score_document(
    id: &str,
    preds: &[String],
    gold: &[String],
    source_tokens: &[String],
    profile: Profile,
    denom: PrecisionDenominator,
) -> Option<DocRow> {
    let gold: Vec<String> = gold.iter().filter(|g| !g.trim().is_empty()).cloned().collect();
    if gold.is_empty() {
        return None;
    }
    let stem_gold = profile.stems_gold();
    let preds = dedup_predictions(preds);
    let (at5, _) = metrics_for(&preds, &gold, stem_gold, 5, denom);
    let (at10, map10) = metrics_for(&preds, &gold, stem_gold, 10, denom);
    let (pres, abs) = split_present_absent(&preds, &gold, source_tokens, stem_gold);
    Some(DocRow {
        id: id.to_string(),
        n_predictions: preds.len(),
        n_gold: gold.len(),
        f1_at_5: at5.f1,
        f1_at_10: at10.f1,
        r_at_10: at10.recall,
        map_at_10: map10,
        present_f1_at_5: (!pres.gold.is_empty()).then(|| metrics_for(&pres.preds, &pres.gold, stem_gold, 5, denom).0.f1),
        absent_r_at_10: (!abs.gold.is_empty()).then(|| metrics_for(&abs.preds, &abs.gold, stem_gold, 10, denom).0.recall),
    })
}

fn mean<I: Iterator<Item = f64>>(it: I) -> (usize, f64) {
    let (n, s) = it.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n, if n == 0 { 0.0 } else { s / n as f64 })
}

/// Macro-averaged report over `gold` documents. Gold documents without
/// predictions count as empty rankings; predictions for unknown ids are an error.
pub fn evaluate(
    predictions: &[(String, Vec<String>)],
    gold: &[Document],
    profile: Profile,
    denom: PrecisionDenominator,
) -> Result<EvalReport> {
    let by_id: HashMap<&str, &Document> = gold.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut preds: HashMap<&str, &[String]> = HashMap::new();
    for (id, p) in predictions {
        if !by_id.contains_key(id.as_str()) {
            return Err(Error::InvalidInput(format!("prediction for unknown document {id:?}")));
        }
        if preds.insert(id, p).is_some() {
            return Err(Error::InvalidInput(format!("duplicate predictions for {id:?}")));
        }
    }
    let mut rows = Vec::new();
    for d in gold {
        let p = preds.get(d.id.as_str()).copied().unwrap_or_else(|| {
            log::warn!("no predictions for {}", d.id);
            &[]
        });
        if let Some(row) = score_document(&d.id, p, &d.keyphrases, &d.tokens(), profile, denom) {
            rows.push(row);
        }
    }
    let (documents, f1_at_5) = mean(rows.iter().map(|r| r.f1_at_5));
    let present = mean(rows.iter().filter_map(|r| r.present_f1_at_5));
    let absent = mean(rows.iter().filter_map(|r| r.absent_r_at_10));
    Ok(EvalReport {
        profile,
        precision_denominator: denom,
        documents,
        f1_at_5,
        f1_at_10: mean(rows.iter().map(|r| r.f1_at_10)).1,
        r_at_10: mean(rows.iter().map(|r| r.r_at_10)).1,
        map_at_10: mean(rows.iter().map(|r| r.map_at_10)).1,
        present_documents: present.0,
        present_f1_at_5: present.1,
        absent_documents: absent.0,
        absent_r_at_10: absent.1,
        rows,
    })
}
