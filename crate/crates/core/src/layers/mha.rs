//! Multi-head self-attention across variates.
//!
//! Tokens are the variates, and each token's feature vector is its raw
//! look-back window, so `d_model` equals the window length. One block with a
//! residual connection; no layer norm and no feed-forward sublayer.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::array::RealArray;
use crate::error::{dim_err, Error, Result};
use crate::graph::{Graph, Var};
use crate::math;
use crate::param::{ParamGroup, ParamId, ParamStore, ParamValue};
use crate::rng::uniform;

#[derive(Debug, Clone)]
pub struct MhaBlock {
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub n_heads: usize,
    pub d_model: usize,
}

impl MhaBlock {
    /// Query/key/value projections are drawn uniformly in `±1/√d_model`; the
    /// output projection starts at zero so the block begins as the identity.
    pub fn new(store: &mut ParamStore, d_model: usize, n_heads: usize, rng: &mut impl Rng) -> Result<Self> {
        if n_heads == 0 || !d_model.is_multiple_of(n_heads) {
            return Err(Error::Config(format!("d_model {d_model} is not divisible by {n_heads} heads")));
        }
        let bound = 1.0 / math::sqrt(d_model as f64);
        let mut dense = |name: &str, rng: &mut dyn FnMut() -> f64| {
            let data = (0..d_model * d_model).map(|_| rng()).collect();
            let w = store.register(
                &format!("mha.{name}.w"),
                ParamGroup::Attention,
                ParamValue::Real(RealArray::new(&[d_model, d_model], data).expect("square")),
            );
            let b = store.register(&format!("mha.{name}.b"), ParamGroup::Attention, ParamValue::Real(RealArray::zeros(&[d_model])));
            (w, b)
        };
        let mut draw = || uniform(rng, -bound, bound);
        let (wq, bq) = dense("q", &mut draw);
        let (wk, bk) = dense("k", &mut draw);
        let (wv, bv) = dense("v", &mut draw);
        let (wo, bo) = dense("o", &mut || 0.0);
        Ok(MhaBlock { wq, bq, wk, bk, wv, bv, wo, bo, n_heads, d_model })
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    fn project(&self, g: &mut Graph, store: &ParamStore, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let w = g.param(store, w);
        let b = g.param(store, b);
        let y = g.matmul_bt(x, w)?;
        g.add_bias(y, b)
    }

    /// `x: [V, d_model]` → same shape.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        Ok(self.forward_with_weights(g, store, x)?.0)
    }

    /// Also returns each head's `[V, V]` attention matrix.
    pub fn forward_with_weights(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<(Var, Vec<Var>)> {
        let d = g.value(x).rows_cols().1;
        if d != self.d_model {
            return Err(dim_err!("attention expects d_model {}, got {d}", self.d_model));
        }
        let q = self.project(g, store, x, self.wq, self.bq)?;
        let k = self.project(g, store, x, self.wk, self.bk)?;
        let v = self.project(g, store, x, self.wv, self.bv)?;
        let dh = self.d_head();
        let inv_sqrt = 1.0 / math::sqrt(dh as f64);
        let mut heads = Vec::with_capacity(self.n_heads);
        let mut weights = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let qh = g.slice_cols(q, h * dh, dh)?;
            let kh = g.slice_cols(k, h * dh, dh)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            let scores = g.matmul_bt(qh, kh)?;
            let scores = g.scale(scores, inv_sqrt);
            let a = g.softmax_rows(scores);
            weights.push(a);
            heads.push(g.matmul(a, vh)?);
        }
        let merged = g.concat_cols(&heads)?;
        let out = self.project(g, store, merged, self.wo, self.bo)?;
        Ok((g.add(x, out)?, weights))
    }
}
