//! The multi-task network: source and retrieval encoders, the importance
//! extractor and the copy-augmented attentional decoder.

use kpgen_autodiff::nn::{BiGru, GruCell};
use kpgen_autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::config::{Mode, ModelConfig};

/// Inverted dropout with its own random stream.
pub struct Dropout {
    rate: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(rate: f64, rng: ChaCha8Rng) -> Self {
        Self { rate, rng }
    }

    fn apply(&mut self, g: &mut Graph<'_>, v: Var) -> Result<Var> {
        if self.rate == 0.0 {
            return Ok(v);
        }
        let shape = g.value(v).shape().to_vec();
        let n: usize = shape.iter().product();
        let keep = 1.0 / (1.0 - self.rate);
        let mask = (0..n)
            .map(|_| if self.rng.gen::<f64>() < self.rate { 0.0 } else { keep })
            .collect();
        let mask = g.constant(Tensor::new(shape, mask)?);
        Ok(g.mul(v, mask)?)
    }
}

fn drop(g: &mut Graph<'_>, v: Var, dropout: &mut Option<Dropout>) -> Result<Var> {
    match dropout {
        Some(d) => d.apply(g, v),
        None => Ok(v),
    }
}

#[derive(Clone, Debug)]
pub struct Extractor {
    pub w_c: ParamId,
    pub w_s: ParamId,
    pub w_n: ParamId,
    pub b: ParamId,
    /// Projection producing the global document vector.
    pub w_d: ParamId,
    pub b_d: ParamId,
}

/// Parameter handles of the network; values live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct KgModel {
    pub mode: Mode,
    pub vocab_len: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub embed: ParamId,
    pub enc_src: BiGru,
    pub enc_ret: Option<BiGru>,
    pub extractor: Option<Extractor>,
    pub dec: GruCell,
    pub w_in: ParamId,
    pub w_ex: Option<ParamId>,
    pub w_1: ParamId,
    pub w_2: ParamId,
    pub b_v: ParamId,
    pub w_g: ParamId,
    pub b_g: ParamId,
}

/// Output of the source encoder.
#[derive(Clone, Copy, Debug)]
pub struct EncodedSource {
    /// Memory bank `[L, d]`.
    pub u: Var,
    /// Initial decoder state `[fwd_last; bwd_first]`.
    pub h0: Var,
    /// Global document vector; only built when the extractor is active.
    pub d_doc: Option<Var>,
    pub len: usize,
}

/// Everything a decoding step reads besides its own state.
#[derive(Clone, Copy, Debug)]
pub struct DecodeContext<'a> {
    pub u: Var,
    /// External memory bank; `None` means a zero retrieval context.
    pub v: Option<Var>,
    /// Importance scores used to rescale copy attention.
    pub beta: Option<Var>,
    pub x_ext: &'a [usize],
    pub ext_len: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderState {
    pub h: Var,
    pub h_tilde: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    /// Distribution over the extended vocabulary.
    pub p: Var,
    pub switch: Var,
    pub alpha_in: Var,
    pub alpha_c: Var,
    pub state: DecoderState,
}

impl KgModel {
    /// Registers freshly initialised parameters for `mode` in `store`.
    pub fn init(store: &mut ParamStore, config: &ModelConfig, mode: Mode, vocab_len: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let mode = mode.network();
        let (de, d, s) = (config.embedding_dim, config.hidden_dim, config.init_scale);
        let embed = store.uniform("embed", &[vocab_len, de], s, rng)?;
        let enc_src = BiGru::new(store, "enc_src", de, d / 2, s, rng)?;
        let enc_ret = if mode.uses_retrieval() {
            Some(BiGru::new(store, "enc_ret", de, d / 2, s, rng)?)
        } else {
            None
        };
        let extractor = if mode.uses_extractor() {
            Some(Extractor {
                w_c: store.uniform("ext.w_c", &[d], s, rng)?,
                w_s: store.uniform("ext.w_s", &[d, d], s, rng)?,
                w_n: store.uniform("ext.w_n", &[d, d], s, rng)?,
                b: store.uniform("ext.b", &[1], s, rng)?,
                w_d: store.uniform("ext.w_d", &[d, d], s, rng)?,
                b_d: store.uniform("ext.b_d", &[d], s, rng)?,
            })
        } else {
            None
        };
        let dec = GruCell::new(store, "dec", de + d, d, s, rng)?;
        let w_in = store.uniform("attn.w_in", &[d, d], s, rng)?;
        let w_ex = if mode.uses_retrieval() {
            Some(store.uniform("attn.w_ex", &[d, d], s, rng)?)
        } else {
            None
        };
        Ok(Self {
            mode,
            vocab_len,
            embedding_dim: de,
            hidden_dim: d,
            embed,
            enc_src,
            enc_ret,
            extractor,
            dec,
            w_in,
            w_ex,
            w_1: store.uniform("out.w_1", &[d, 3 * d], s, rng)?,
            w_2: store.uniform("out.w_2", &[vocab_len, d], s, rng)?,
            b_v: store.uniform("out.b_v", &[vocab_len], s, rng)?,
            w_g: store.uniform("switch.w_g", &[d], s, rng)?,
            b_g: store.uniform("switch.b_g", &[1], s, rng)?,
        })
    }

    /// Recovers handles and dimensions from a loaded store.
    pub fn from_store(store: &ParamStore, mode: Mode) -> Result<Self> {
        let mode = mode.network();
        let embed = store.id("embed")?;
        let (vocab_len, embedding_dim) = store.get(embed).dims2();
        let enc_src = BiGru::from_store(store, "enc_src")?;
        let hidden_dim = enc_src.output_dim();
        let enc_ret = if mode.uses_retrieval() {
            Some(BiGru::from_store(store, "enc_ret")?)
        } else {
            None
        };
        let extractor = if mode.uses_extractor() {
            Some(Extractor {
                w_c: store.id("ext.w_c")?,
                w_s: store.id("ext.w_s")?,
                w_n: store.id("ext.w_n")?,
                b: store.id("ext.b")?,
                w_d: store.id("ext.w_d")?,
                b_d: store.id("ext.b_d")?,
            })
        } else {
            None
        };
        Ok(Self {
            mode,
            vocab_len,
            embedding_dim,
            hidden_dim,
            embed,
            enc_src,
            enc_ret,
            extractor,
            dec: GruCell::from_store(store, "dec")?,
            w_in: store.id("attn.w_in")?,
            w_ex: if mode.uses_retrieval() { Some(store.id("attn.w_ex")?) } else { None },
            w_1: store.id("out.w_1")?,
            w_2: store.id("out.w_2")?,
            b_v: store.id("out.b_v")?,
            w_g: store.id("switch.w_g")?,
            b_g: store.id("switch.b_g")?,
        })
    }

    fn embed_rows(&self, g: &mut Graph<'_>, ids: &[usize], dropout: &mut Option<Dropout>) -> Result<Vec<Var>> {
        let table = g.param(self.embed);
        let e = g.embedding(table, ids)?;
        let e = drop(g, e, dropout)?;
        (0..ids.len()).map(|i| Ok(g.row(e, i)?)).collect()
    }

    /// Bidirectional encoding of the source ids.
    pub fn encode_source(&self, g: &mut Graph<'_>, x: &[usize], dropout: &mut Option<Dropout>) -> Result<EncodedSource> {
        if x.is_empty() {
            return Err(Error::InvalidInput("cannot encode an empty source".into()));
        }
        let rows = self.embed_rows(g, x, dropout)?;
        let out = self.enc_src.run(g, &rows)?;
        let u = g.stack(&out.states)?;
        let h0 = g.concat(&[out.forward_last, out.backward_first])?;
        let d_doc = match &self.extractor {
            Some(ex) => {
                let w = g.param(ex.w_d);
                let b = g.param(ex.b_d);
                let z = g.matmul(w, h0)?;
                let z = g.add(z, b)?;
                Some(g.tanh(z)?)
            }
            None => None,
        };
        Ok(EncodedSource { u, h0, d_doc, len: x.len() })
    }

    /// External memory bank over the retrieved keyphrase sequence, if any.
    pub fn encode_retrieved(&self, g: &mut Graph<'_>, r: &[usize], dropout: &mut Option<Dropout>) -> Result<Option<Var>> {
        let Some(enc) = &self.enc_ret else { return Ok(None) };
        if r.is_empty() {
            return Ok(None);
        }
        let rows = self.embed_rows(g, r, dropout)?;
        let out = enc.run(g, &rows)?;
        Ok(Some(g.stack(&out.states)?))
    }

    /// Importance score of every source position, computed left to right
    /// because each depends on the summary of the positions before it.
    pub fn extract_scores(&self, g: &mut Graph<'_>, enc: &EncodedSource) -> Result<Option<Var>> {
        let (Some(ex), Some(d_doc)) = (&self.extractor, enc.d_doc) else {
            return Ok(None);
        };
        let w_c = g.param(ex.w_c);
        let content = g.matmul(enc.u, w_c)?;
        let w_s = g.param(ex.w_s);
        let sal = g.matmul(w_s, d_doc)?;
        let salience = g.matmul(enc.u, sal)?;
        let ones = g.constant(Tensor::filled(&[enc.len], 1.0));
        let b = g.param(ex.b);
        let bias = g.mul_scalar(ones, b)?;
        let base = g.add(content, salience)?;
        let base = g.add(base, bias)?;
        let w_n = g.param(ex.w_n);
        let mut summary = g.constant(Tensor::zeros(&[self.hidden_dim]));
        let mut betas = Vec::with_capacity(enc.len);
        for j in 0..enc.len {
            let u_j = g.row(enc.u, j)?;
            let t = g.tanh(summary)?;
            let wn = g.matmul(w_n, t)?;
            let novelty = g.dot(u_j, wn)?;
            let b_j = g.pick(base, j)?;
            let logit = g.sub(b_j, novelty)?;
            let beta = g.sigmoid(logit)?;
            let weighted = g.mul_scalar(u_j, beta)?;
            summary = g.add(summary, weighted)?;
            betas.push(beta);
        }
        Ok(Some(g.concat(&betas)?))
    }

    pub fn initial_state(&self, g: &mut Graph<'_>, enc: &EncodedSource) -> DecoderState {
        DecoderState {
            h: enc.h0,
            h_tilde: g.constant(Tensor::zeros(&[self.hidden_dim])),
        }
    }

    /// One decoder step after emitting `prev` (an extended id; source OOVs
    /// are embedded as `<unk>`).
    pub fn decode_step(
        &self,
        g: &mut Graph<'_>,
        prev: usize,
        state: DecoderState,
        ctx: &DecodeContext<'_>,
        dropout: &mut Option<Dropout>,
    ) -> Result<StepOutput> {
        let id = if prev < self.vocab_len { prev } else { crate::corpus::UNK_ID };
        let e = self.embed_rows(g, &[id], dropout)?[0];
        let input = g.concat(&[e, state.h_tilde])?;
        let h = self.dec.step(g, input, state.h)?;

        let w_in = g.param(self.w_in);
        let (c_in, alpha_in) = attend(g, h, ctx.u, w_in)?;
        let c_ex = match (ctx.v, self.w_ex) {
            (Some(v), Some(w_ex)) => {
                let w_ex = g.param(w_ex);
                attend(g, h, v, w_ex)?.0
            }
            _ => g.constant(Tensor::zeros(&[self.hidden_dim])),
        };
        let w_1 = g.param(self.w_1);
        let cat = g.concat(&[c_in, c_ex, h])?;
        let z = g.matmul(w_1, cat)?;
        let h_tilde = g.tanh(z)?;
        let h_tilde = drop(g, h_tilde, dropout)?;

        let w_g = g.param(self.w_g);
        let b_g = g.param(self.b_g);
        let s = g.dot(w_g, h_tilde)?;
        let s = g.add(s, b_g)?;
        let switch = g.sigmoid(s)?;

        let w_2 = g.param(self.w_2);
        let b_v = g.param(self.b_v);
        let logits = g.matmul(w_2, h_tilde)?;
        let logits = g.add(logits, b_v)?;
        let p_vocab = g.softmax(logits)?;

        let alpha_c = match ctx.beta {
            Some(beta) => rescale_copy(g, alpha_in, beta)?,
            None => alpha_in,
        };
        let p_copy = g.scatter_add(alpha_c, ctx.x_ext, ctx.ext_len)?;
        let p_vocab = if ctx.ext_len > self.vocab_len {
            let pad = g.constant(Tensor::zeros(&[ctx.ext_len - self.vocab_len]));
            g.concat(&[p_vocab, pad])?
        } else {
            p_vocab
        };
        let gen = g.one_minus(switch)?;
        let a = g.mul_scalar(p_vocab, gen)?;
        let b = g.mul_scalar(p_copy, switch)?;
        let p = g.add(a, b)?;
        Ok(StepOutput {
            p,
            switch,
            alpha_in,
            alpha_c,
            state: DecoderState { h, h_tilde },
        })
    }
}

/// Bilinear attention `softmax(h^T W m_i)` over the rows of `memory`;
/// returns the context vector and the weights.
pub fn attend(g: &mut Graph<'_>, h: Var, memory: Var, w: Var) -> Result<(Var, Var)> {
    if g.value(memory).is_empty() {
        return Err(Error::InvalidInput("attention over an empty memory".into()));
    }
    let q = g.matmul(h, w)?;
    let scores = g.matmul(memory, q)?;
    let weights = g.softmax(scores)?;
    let context = g.matmul(weights, memory)?;
    Ok((context, weights))
}

/// `alpha ⊙ beta`, renormalised to sum to one.
pub fn rescale_copy(g: &mut Graph<'_>, alpha: Var, beta: Var) -> Result<Var> {
    let prod = g.mul(alpha, beta)?;
    let total = g.sum(prod)?;
    if g.value(total).item() <= 0.0 {
        return Err(Error::InvalidInput("copy rescaling with zero total importance".into()));
    }
    let inv = g.recip(total)?;
    Ok(g.mul_scalar(prod, inv)?)
}
