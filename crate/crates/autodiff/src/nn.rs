//! Recurrent building blocks.

use rand::Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Gated recurrent unit:
///
/// ```text
/// z  = sigmoid(W_z [x; h] + b_z)
/// r  = sigmoid(W_r [x; h] + b_r)
/// h~ = tanh(W_h [x; r * h] + b_h)
/// h' = (1 - z) * h + z * h~
/// ```
#[derive(Clone, Debug)]
pub struct GruCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_h: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_h: ParamId,
}

impl GruCell {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        init: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let wshape = [hidden_dim, input_dim + hidden_dim];
        Ok(Self {
            input_dim,
            hidden_dim,
            w_z: store.uniform(format!("{prefix}.w_z"), &wshape, init, rng)?,
            w_r: store.uniform(format!("{prefix}.w_r"), &wshape, init, rng)?,
            w_h: store.uniform(format!("{prefix}.w_h"), &wshape, init, rng)?,
            b_z: store.uniform(format!("{prefix}.b_z"), &[hidden_dim], init, rng)?,
            b_r: store.uniform(format!("{prefix}.b_r"), &[hidden_dim], init, rng)?,
            b_h: store.uniform(format!("{prefix}.b_h"), &[hidden_dim], init, rng)?,
        })
    }

    /// Looks up an existing cell's parameters by prefix.
    pub fn from_store(store: &ParamStore, prefix: &str) -> Result<Self> {
        let w_z = store.id(&format!("{prefix}.w_z"))?;
        let shape = store.get(w_z).shape().to_vec();
        let hidden_dim = shape[0];
        Ok(Self {
            input_dim: shape[1] - hidden_dim,
            hidden_dim,
            w_z,
            w_r: store.id(&format!("{prefix}.w_r"))?,
            w_h: store.id(&format!("{prefix}.w_h"))?,
            b_z: store.id(&format!("{prefix}.b_z"))?,
            b_r: store.id(&format!("{prefix}.b_r"))?,
            b_h: store.id(&format!("{prefix}.b_h"))?,
        })
    }

    pub fn step(&self, g: &mut Graph<'_>, x: Var, h: Var) -> Result<Var> {
        let xh = g.concat(&[x, h])?;
        let w_z = g.param(self.w_z);
        let b_z = g.param(self.b_z);
        let z = g.matmul(w_z, xh)?;
        let z = g.add(z, b_z)?;
        let z = g.sigmoid(z)?;

        let w_r = g.param(self.w_r);
        let b_r = g.param(self.b_r);
        let r = g.matmul(w_r, xh)?;
        let r = g.add(r, b_r)?;
        let r = g.sigmoid(r)?;

        let rh = g.mul(r, h)?;
        let xrh = g.concat(&[x, rh])?;
        let w_h = g.param(self.w_h);
        let b_h = g.param(self.b_h);
        let cand = g.matmul(w_h, xrh)?;
        let cand = g.add(cand, b_h)?;
        let cand = g.tanh(cand)?;

        let keep = g.one_minus(z)?;
        let kept = g.mul(keep, h)?;
        let fresh = g.mul(z, cand)?;
        g.add(kept, fresh)
    }

    pub fn zero_state(&self, g: &mut Graph<'_>) -> Var {
        g.constant(Tensor::zeros(&[self.hidden_dim]))
    }
}

/// Output of [`BiGru::run`].
#[derive(Clone, Debug)]
pub struct BiGruOutput {
    /// `[forward_i; backward_i]` per position.
    pub states: Vec<Var>,
    /// Last forward state (after the final position).
    pub forward_last: Var,
    /// Backward state at the first position.
    pub backward_first: Var,
}

/// A forward and a backward [`GruCell`] over the same sequence, both starting from zero.
#[derive(Clone, Debug)]
pub struct BiGru {
    pub forward: GruCell,
    pub backward: GruCell,
}

impl BiGru {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_per_direction: usize,
        init: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            forward: GruCell::new(store, &format!("{prefix}.fwd"), input_dim, hidden_per_direction, init, rng)?,
            backward: GruCell::new(store, &format!("{prefix}.bwd"), input_dim, hidden_per_direction, init, rng)?,
        })
    }

    pub fn from_store(store: &ParamStore, prefix: &str) -> Result<Self> {
        Ok(Self {
            forward: GruCell::from_store(store, &format!("{prefix}.fwd"))?,
            backward: GruCell::from_store(store, &format!("{prefix}.bwd"))?,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.forward.hidden_dim + self.backward.hidden_dim
    }

    /// Runs both directions over `inputs` (one vector per position).
    pub fn run(&self, g: &mut Graph<'_>, inputs: &[Var]) -> Result<BiGruOutput> {
        assert!(!inputs.is_empty(), "BiGru::run needs at least one position");
        let n = inputs.len();
        let mut fwd = Vec::with_capacity(n);
        let mut h = self.forward.zero_state(g);
        for x in inputs {
            h = self.forward.step(g, *x, h)?;
            fwd.push(h);
        }
        let mut bwd = vec![h; n];
        let mut h = self.backward.zero_state(g);
        for i in (0..n).rev() {
            h = self.backward.step(g, inputs[i], h)?;
            bwd[i] = h;
        }
        let states = fwd
            .iter()
            .zip(&bwd)
            .map(|(f, b)| g.concat(&[*f, *b]))
            .collect::<Result<Vec<_>>>()?;
        Ok(BiGruOutput {
            states,
            forward_last: fwd[n - 1],
            backward_first: bwd[0],
        })
    }
}
