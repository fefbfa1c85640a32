//! Inference on trained parameters: importance scores and beam decoding.

use kpgen_autodiff::{Graph, ParamStore, Tensor};

use crate::candidates::{dedup_max, Candidate};
use crate::corpus::{Source, Vocabulary, BOS_ID, EOS_ID, PAD_ID, SEP_ID, UNK_ID};
use crate::error::Result;
use crate::model::beam::{beam_search, BeamConfig, StepModel};
use crate::model::network::{DecodeContext, DecoderState, KgModel};

/// Encoder outputs of one source, detached from any graph.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub u: Tensor,
    pub h0: Tensor,
    pub v: Option<Tensor>,
    /// Importance scores, when the extractor is active.
    pub beta: Option<Vec<f64>>,
}

pub fn encode(store: &ParamStore, model: &KgModel, src: &Source) -> Result<Encoded> {
    let mut g = Graph::new(store);
    let enc = model.encode_source(&mut g, &src.x, &mut None)?;
    let v = model.encode_retrieved(&mut g, &src.r, &mut None)?;
    let beta = model.extract_scores(&mut g, &enc)?;
    Ok(Encoded {
        u: g.value(enc.u).clone(),
        h0: g.value(enc.h0).clone(),
        v: v.map(|v| g.value(v).clone()),
        beta: beta.map(|b| g.value(b).data().to_vec()),
    })
}

/// Decoder of one source, usable by [`beam_search`].
pub struct Stepper<'a> {
    pub store: &'a ParamStore,
    pub model: &'a KgModel,
    pub encoded: &'a Encoded,
    pub x_ext: &'a [usize],
    pub ext_len: usize,
}

impl<'a> Stepper<'a> {
    pub fn new(store: &'a ParamStore, model: &'a KgModel, encoded: &'a Encoded, src: &'a Source) -> Self {
        Self {
            store,
            model,
            encoded,
            x_ext: &src.x_ext,
            ext_len: src.ext_vocab_len(model.vocab_len),
        }
    }
}

/// `(h, h~)` between steps.
pub type StepState = (Tensor, Tensor);

impl StepModel for Stepper<'_> {
    type State = StepState;

    fn start(&self) -> Result<StepState> {
        Ok((self.encoded.h0.clone(), Tensor::zeros(&[self.model.hidden_dim])))
    }

    fn step(&self, state: &StepState, prev: usize) -> Result<(Vec<f64>, StepState)> {
        let mut g = Graph::new(self.store);
        let u = g.constant(self.encoded.u.clone());
        let v = self.encoded.v.as_ref().map(|v| g.constant(v.clone()));
        let beta = self.encoded.beta.as_ref().map(|b| g.constant(Tensor::vector(b.clone())));
        let ctx = DecodeContext {
            u,
            v,
            beta,
            x_ext: self.x_ext,
            ext_len: self.ext_len,
        };
        let st = DecoderState {
            h: g.constant(state.0.clone()),
            h_tilde: g.constant(state.1.clone()),
        };
        let out = self.model.decode_step(&mut g, prev, st, &ctx, &mut None)?;
        Ok((
            g.value(out.p).data().to_vec(),
            (g.value(out.state.h).clone(), g.value(out.state.h_tilde).clone()),
        ))
    }
}

/// Beam settings with the model's special tokens filled in.
pub fn beam_config(depth: usize, size: usize, length_normalize: bool) -> BeamConfig {
    BeamConfig {
        depth,
        size,
        length_normalize,
        start: BOS_ID,
        eos: EOS_ID,
        blocked: vec![PAD_ID, UNK_ID, BOS_ID, SEP_ID],
    }
}

/// Generated candidates: every completed beam as a phrase scored by the
/// exponential of its ranking score; stemmed duplicates keep the best score.
pub fn generate(
    store: &ParamStore,
    model: &KgModel,
    encoded: &Encoded,
    src: &Source,
    vocab: &Vocabulary,
    cfg: &BeamConfig,
) -> Result<Vec<Candidate>> {
    let stepper = Stepper::new(store, model, encoded, src);
    let hyps = beam_search(&stepper, cfg)?;
    Ok(dedup_max(hyps.into_iter().map(|h| {
        let words: Vec<&str> = h.tokens.iter().map(|&t| src.ext_token(t, vocab)).collect();
        Candidate::new(words.join(" "), h.score.exp())
    })))
}
