//! Joint training of extraction and generation.

use kpgen_autodiff::{clip_global_norm, Adam, AutodiffError, Graph, ParamStore, Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{TrainingTuple, BOS_ID};
use crate::error::{Error, Result};
use crate::model::config::{Mode, ModelConfig};
use crate::model::losses::{extraction_loss, generation_loss};
use crate::model::network::{DecodeContext, Dropout, KgModel};

/// The loss terms of one document and all of its tuples.
pub struct DocLoss {
    /// Extraction loss, when the extractor is active.
    pub l_e: Option<Var>,
    /// Generation loss per tuple (`None` if no position is producible).
    pub l_g: Vec<Option<Var>>,
    /// Number of scored target positions.
    pub target_tokens: usize,
}

/// Builds the losses of `tuples`, which must share one source.
pub fn doc_loss(
    g: &mut Graph<'_>,
    model: &KgModel,
    tuples: &[TrainingTuple],
    pos_weight: f64,
    dropout: &mut Option<Dropout>,
) -> Result<DocLoss> {
    let src = &tuples[0].source;
    let enc = model.encode_source(g, &src.x, dropout)?;
    let v = model.encode_retrieved(g, &src.r, dropout)?;
    let beta = model.extract_scores(g, &enc)?;
    let l_e = match beta {
        Some(b) => Some(extraction_loss(g, b, &src.beta_star, pos_weight)?),
        None => None,
    };
    let ctx = DecodeContext {
        u: enc.u,
        v,
        beta,
        x_ext: &src.x_ext,
        ext_len: src.ext_vocab_len(model.vocab_len),
    };
    let mut l_g = Vec::with_capacity(tuples.len());
    let mut target_tokens = 0;
    for t in tuples {
        let mut state = model.initial_state(g, &enc);
        let mut prev = BOS_ID;
        let mut steps = Vec::with_capacity(t.y.len());
        for &y in &t.y {
            let out = model.decode_step(g, prev, state, &ctx, dropout)?;
            steps.push(out.p);
            state = out.state;
            prev = y;
        }
        target_tokens += t.y_ext.iter().filter(|y| y.is_some()).count();
        l_g.push(generation_loss(g, &steps, &t.y_ext)?);
    }
    Ok(DocLoss { l_e, l_g, target_tokens })
}

/// `N * L_e + sum(L_g)` for one document.
fn doc_objective(g: &mut Graph<'_>, loss: &DocLoss) -> Result<Option<Var>> {
    let mut parts: Vec<Var> = loss.l_g.iter().flatten().copied().collect();
    if let Some(l_e) = loss.l_e {
        parts.push(g.scale(l_e, loss.l_g.len() as f64)?);
    }
    if parts.is_empty() {
        return Ok(None);
    }
    let all = g.concat(&parts)?;
    Ok(Some(g.sum(all)?))
}

/// Losses of a labelled set without dropout.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Mean extraction loss per document.
    pub l_e: f64,
    /// Mean generation loss per tuple.
    pub l_g: f64,
    /// Mean of `L_e + L_g` per tuple.
    pub total: f64,
    /// `exp(sum L_g / scored target tokens)`.
    pub perplexity: f64,
}

pub fn evaluate(store: &ParamStore, model: &KgModel, docs: &[Vec<TrainingTuple>], config: &ModelConfig) -> Result<Evaluation> {
    let mut sum_e = 0.0;
    let mut sum_g = 0.0;
    let mut tuples = 0usize;
    let mut tokens = 0usize;
    for doc in docs.iter().filter(|d| !d.is_empty()) {
        let mut g = Graph::new(store);
        let loss = doc_loss(&mut g, model, doc, config.pos_loss_weight, &mut None)?;
        if let Some(l) = loss.l_e {
            sum_e += g.value(l).item() * doc.len() as f64;
        }
        sum_g += loss.l_g.iter().flatten().map(|l| g.value(*l).item()).sum::<f64>();
        tuples += doc.len();
        tokens += loss.target_tokens;
    }
    if tuples == 0 {
        return Err(Error::InvalidInput("evaluation set has no tuples".into()));
    }
    Ok(Evaluation {
        l_e: sum_e / tuples as f64,
        l_g: sum_g / tuples as f64,
        total: (sum_e + sum_g) / tuples as f64,
        perplexity: (sum_g / tokens.max(1) as f64).exp(),
    })
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub train_loss: f64,
    #[serde(rename = "L_e")]
    pub l_e: f64,
    #[serde(rename = "L_g")]
    pub l_g: f64,
    pub valid_ppl: f64,
}

pub struct TrainOutcome {
    pub model: KgModel,
    /// Parameters at the best validation perplexity.
    pub store: ParamStore,
    pub log: Vec<LogRow>,
    pub best_valid_ppl: f64,
    pub updates: usize,
}

struct DocResult {
    grads: Vec<Tensor>,
    objective: f64,
    l_e: f64,
    l_g: f64,
}

fn doc_gradients(
    store: &ParamStore,
    model: &KgModel,
    doc: &[TrainingTuple],
    config: &ModelConfig,
    scale: f64,
    seed: u64,
) -> Result<Option<DocResult>> {
    let mut g = Graph::new(store);
    let mut dropout = (config.dropout > 0.0).then(|| Dropout::new(config.dropout, ChaCha8Rng::seed_from_u64(seed)));
    let loss = doc_loss(&mut g, model, doc, config.pos_loss_weight, &mut dropout)?;
    let Some(obj) = doc_objective(&mut g, &loss)? else { return Ok(None) };
    let scaled = g.scale(obj, scale)?;
    let grads = g.backward(scaled)?;
    let mut acc: Vec<Tensor> = store.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
    grads.accumulate_into(&mut acc);
    Ok(Some(DocResult {
        grads: acc,
        objective: g.value(obj).item(),
        l_e: loss.l_e.map(|l| g.value(l).item()).unwrap_or(0.0),
        l_g: loss.l_g.iter().flatten().map(|l| g.value(*l).item()).sum(),
    }))
}

fn diverged(step: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Autodiff(AutodiffError::NonFinite { .. }) => Error::Diverged { step },
        e => e,
    }
}

/// Trains a fresh network on documents grouped into tuples, stopping early
/// once validation perplexity has not improved for `patience` evaluations.
///
/// Documents in a batch may be processed on `threads` workers; gradients
/// are summed in document order, so results do not depend on the thread count.
pub fn train(
    config: &ModelConfig,
    mode: Mode,
    vocab_len: usize,
    train_docs: &[Vec<TrainingTuple>],
    valid_docs: &[Vec<TrainingTuple>],
    seed: u64,
    threads: usize,
) -> Result<TrainOutcome> {
    config.validate()?;
    let train_docs: Vec<&Vec<TrainingTuple>> = train_docs.iter().filter(|d| !d.is_empty()).collect();
    if train_docs.is_empty() || valid_docs.iter().all(|d| d.is_empty()) {
        return Err(Error::InvalidInput("training and validation sets must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let model = KgModel::init(&mut store, config, mode, vocab_len, &mut rng)?;
    let mut adam = Adam::new(&store, config.lr);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let mut log = Vec::new();
    let mut best = (f64::INFINITY, store.clone());
    let mut bad_evals = 0;
    let mut updates = 0;
    let mut order: Vec<usize> = (0..train_docs.len()).collect();
    let (mut ep_loss, mut ep_batches, mut ep_e, mut ep_g, mut ep_docs, mut ep_tuples) = (0.0, 0, 0.0, 0.0, 0, 0);

    'epochs: for _epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut start = 0;
        while start < order.len() {
            let mut end = start;
            let mut n_tuples = 0;
            while end < order.len() && n_tuples < config.batch_size {
                n_tuples += train_docs[order[end]].len();
                end += 1;
            }
            let batch: Vec<(usize, u64)> = order[start..end].iter().map(|&i| (i, rng.gen())).collect();
            start = end;
            let scale = 1.0 / n_tuples as f64;
            let run = |&(i, s): &(usize, u64)| doc_gradients(&store, &model, train_docs[i], config, scale, s);
            let results: Vec<Result<Option<DocResult>>> = if threads <= 1 {
                batch.iter().map(run).collect()
            } else {
                pool.install(|| batch.par_iter().map(run).collect())
            };
            let mut grads: Vec<Tensor> = store.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
            let mut batch_loss = 0.0;
            for (r, &(i, _)) in results.into_iter().zip(&batch) {
                let Some(r) = r.map_err(diverged(updates))? else { continue };
                for (acc, g) in grads.iter_mut().zip(&r.grads) {
                    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                batch_loss += r.objective;
                ep_e += r.l_e;
                ep_g += r.l_g;
                ep_docs += 1;
                ep_tuples += train_docs[i].len();
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { step: updates });
            }
            clip_global_norm(&mut grads, config.max_grad_norm);
            adam.step(&mut store, &grads).map_err(|e| diverged(updates)(e.into()))?;
            updates += 1;
            ep_loss += batch_loss * scale;
            ep_batches += 1;

            let eval_now = if config.eval_every == 0 { start >= order.len() } else { updates % config.eval_every == 0 };
            if eval_now {
                let ev = evaluate(&store, &model, valid_docs, config)?;
                log.push(LogRow {
                    step: updates,
                    train_loss: ep_loss / ep_batches.max(1) as f64,
                    l_e: ep_e / ep_docs.max(1) as f64,
                    l_g: ep_g / ep_tuples.max(1) as f64,
                    valid_ppl: ev.perplexity,
                });
                (ep_loss, ep_batches, ep_e, ep_g, ep_docs, ep_tuples) = (0.0, 0, 0.0, 0.0, 0, 0);
                log::info!("update {updates}: valid perplexity {:.4}", ev.perplexity);
                if ev.perplexity < best.0 {
                    best = (ev.perplexity, store.clone());
                    bad_evals = 0;
                } else {
                    bad_evals += 1;
                    if bad_evals >= config.patience {
                        break 'epochs;
                    }
                }
            }
        }
    }
    if best.0.is_infinite() {
        best = (evaluate(&store, &model, valid_docs, config)?.perplexity, store);
    }
    Ok(TrainOutcome {
        model,
        store: best.1,
        log,
        best_valid_ppl: best.0,
        updates,
    })
}
