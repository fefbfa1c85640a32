//! Beam search over any step-wise next-token distribution.

use crate::error::{Error, Result};

/// A left-to-right model: feeding a token yields the next distribution.
pub trait StepModel {
    type State: Clone;

    fn start(&self) -> Result<Self::State>;

    /// Probabilities of the next token after feeding `prev` in `state`.
    fn step(&self, state: &Self::State, prev: usize) -> Result<(Vec<f64>, Self::State)>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamConfig {
    /// Maximum number of tokens before `<eos>`.
    pub depth: usize,
    pub size: usize,
    pub length_normalize: bool,
    pub start: usize,
    pub eos: usize,
    /// Tokens that are never emitted.
    pub blocked: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Emitted tokens, without `<eos>`.
    pub tokens: Vec<usize>,
    /// Sum of log-probabilities including the `<eos>` step.
    pub log_prob: f64,
    /// Ranking score: `log_prob`, divided by `tokens.len() + 1` when normalising.
    pub score: f64,
}

struct Live<S> {
    tokens: Vec<usize>,
    log_prob: f64,
    state: S,
}

fn finish(tokens: Vec<usize>, log_prob: f64, normalize: bool) -> Hypothesis {
    let score = if normalize { log_prob / (tokens.len() + 1) as f64 } else { log_prob };
    Hypothesis { tokens, log_prob, score }
}

/// Keeps the `size` most probable expansions (by summed log-probability) at
/// every step; an expansion by `<eos>` completes its hypothesis and leaves the
/// beam. After `depth` tokens only `<eos>` may follow. Completed hypotheses
/// are returned best first, ties broken by token sequence.
pub fn beam_search<M: StepModel>(model: &M, cfg: &BeamConfig) -> Result<Vec<Hypothesis>> {
    if cfg.depth == 0 || cfg.size == 0 {
        return Err(Error::InvalidInput("beam depth and size must be positive".into()));
    }
    let mut beams = vec![Live {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: model.start()?,
    }];
    let mut done = Vec::new();
    for t in 0..=cfg.depth {
        // (parent, token, log_prob)
        let mut expansions: Vec<(usize, usize, f64)> = Vec::new();
        let mut states = Vec::with_capacity(beams.len());
        for (bi, b) in beams.iter().enumerate() {
            let prev = b.tokens.last().copied().unwrap_or(cfg.start);
            let (probs, next) = model.step(&b.state, prev)?;
            states.push(next);
            let mut push = |tok: usize| {
                let p = probs[tok];
                if p > 0.0 {
                    expansions.push((bi, tok, b.log_prob + p.ln()));
                }
            };
            if t == cfg.depth {
                push(cfg.eos);
            } else {
                for tok in 0..probs.len() {
                    if cfg.blocked.contains(&tok) || (t == 0 && tok == cfg.eos) {
                        continue;
                    }
                    push(tok);
                }
            }
        }
        expansions.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        expansions.truncate(cfg.size);
        let mut next_beams = Vec::new();
        for (bi, tok, lp) in expansions {
            let parent = &beams[bi];
            if tok == cfg.eos {
                done.push(finish(parent.tokens.clone(), lp, cfg.length_normalize));
            } else {
                let mut tokens = parent.tokens.clone();
                tokens.push(tok);
                next_beams.push(Live {
                    tokens,
                    log_prob: lp,
                    state: states[bi].clone(),
                });
            }
        }
        if next_beams.is_empty() {
            break;
        }
        beams = next_beams;
    }
    done.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.tokens.cmp(&b.tokens)));
    Ok(done)
}
