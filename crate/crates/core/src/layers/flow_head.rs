//! Velocity-field MLP used by the flow-matching residual head.
//!
//! Input is `concat(x_t, cond, time_embed(t))`. The first layer lifts to
//! `hidden`, each further hidden layer is a residual GELU block, and a linear
//! read-out (zero-initialized) returns a vector shaped like `x_t`. `depth`
//! counts the hidden layers.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::array::RealArray;
use crate::error::{contract_err, dim_err, Error, Result};
use crate::graph::{Graph, Var};
use crate::math;
use crate::param::{ParamGroup, ParamId, ParamStore, ParamValue};
use crate::rng::uniform;

pub const TIME_EMBED_FREQS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
pub const TIME_EMBED_DIM: usize = 2 * TIME_EMBED_FREQS.len();

/// `[sin(2πf·t), cos(2πf·t)]` for `f ∈ {1, 2, 4, 8}`.
pub fn time_embed(t: f64) -> [f64; TIME_EMBED_DIM] {
    let mut out = [0.0; TIME_EMBED_DIM];
    for (j, f) in TIME_EMBED_FREQS.iter().enumerate() {
        let (s, c) = math::sin_cos(math::TAU * f * t);
        out[2 * j] = s;
        out[2 * j + 1] = c;
    }
    out
}

#[derive(Debug, Clone)]
pub struct FlowHead {
    /// `(weight [out, in], bias [out])` from input to read-out.
    pub layers: Vec<(ParamId, ParamId)>,
    pub depth: usize,
    pub hidden: usize,
    pub state_dim: usize,
}

impl FlowHead {
    pub fn new(store: &mut ParamStore, state_dim: usize, depth: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        if depth < 1 || hidden < 1 || state_dim < 1 {
            return Err(Error::Config(format!("flow head needs depth, hidden and state >= 1 (got {depth}, {hidden}, {state_dim})")));
        }
        let in_dim = 2 * state_dim + TIME_EMBED_DIM;
        let mut layers = Vec::with_capacity(depth + 1);
        let dense = |store: &mut ParamStore, idx: usize, fan_in: usize, fan_out: usize, bound: f64, rng: &mut dyn FnMut(f64) -> f64| {
            let data = (0..fan_in * fan_out).map(|_| rng(bound)).collect();
            let w = store.register(
                &format!("flow.{idx}.w"),
                ParamGroup::Flow,
                ParamValue::Real(RealArray::new(&[fan_out, fan_in], data).expect("dense shape")),
            );
            let b = store.register(&format!("flow.{idx}.b"), ParamGroup::Flow, ParamValue::Real(RealArray::zeros(&[fan_out])));
            (w, b)
        };
        let mut draw = |bound: f64| uniform(rng, -bound, bound);
        layers.push(dense(store, 0, in_dim, hidden, math::sqrt(3.0 / in_dim as f64), &mut draw));
        // residual blocks are scaled down so the stack stays near unit gain
        let block_bound = math::sqrt(3.0 / hidden as f64) / math::sqrt(depth as f64);
        for i in 1..depth {
            layers.push(dense(store, i, hidden, hidden, block_bound, &mut draw));
        }
        layers.push(dense(store, depth, hidden, state_dim, 0.0, &mut draw));
        Ok(FlowHead { layers, depth, hidden, state_dim })
    }

    pub fn in_dim(&self) -> usize {
        2 * self.state_dim + TIME_EMBED_DIM
    }

    /// Rows are independent samples: `x_t, cond: [R, state_dim]`, one time per row.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x_t: Var, t: &[f64], cond: Var) -> Result<Var> {
        let (rows, d) = g.value(x_t).rows_cols();
        if d != self.state_dim || g.value(cond).rows_cols() != (rows, d) {
            return Err(dim_err!(
                "flow head expects [R, {}] state and condition, got {:?} and {:?}",
                self.state_dim,
                g.value(x_t).shape(),
                g.value(cond).shape()
            ));
        }
        if t.len() != rows {
            return Err(dim_err!("{} times for {rows} rows", t.len()));
        }
        let mut emb = Vec::with_capacity(rows * TIME_EMBED_DIM);
        for &ti in t {
            if !(0.0..=1.0).contains(&ti) {
                return Err(contract_err!("flow time {ti} outside [0, 1]"));
            }
            emb.extend_from_slice(&time_embed(ti));
        }
        let emb = g.input(RealArray::new(&[rows, TIME_EMBED_DIM], emb)?);
        let input = g.concat_cols(&[x_t, cond, emb])?;

        let (w0, b0) = self.layers[0];
        let (w, b) = (g.param(store, w0), g.param(store, b0));
        let h = g.matmul_bt(input, w)?;
        let h = g.add_bias(h, b)?;
        let mut h = g.gelu(h);
        for &(wi, bi) in &self.layers[1..self.depth] {
            let (w, b) = (g.param(store, wi), g.param(store, bi));
            let z = g.matmul_bt(h, w)?;
            let z = g.add_bias(z, b)?;
            let z = g.gelu(z);
            h = g.add(h, z)?;
        }
        let (wl, bl) = self.layers[self.depth];
        let (w, b) = (g.param(store, wl), g.param(store, bl));
        let out = g.matmul_bt(h, w)?;
        g.add_bias(out, b)
    }

    /// Plain evaluation without keeping a tape around.
    pub fn eval(&self, store: &ParamStore, x_t: &RealArray, t: &[f64], cond: &RealArray) -> Result<RealArray> {
        let mut g = Graph::new();
        let x = g.input(x_t.clone());
        let c = g.input(cond.clone());
        let u = self.forward(&mut g, store, x, t, c)?;
        Ok(g.value(u).clone())
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStreams;

    #[test]
    fn zero_readout_gives_zero_velocity_and_shape_holds() {
        for depth in [2, 16] {
            let mut store = ParamStore::new();
            let head = FlowHead::new(&mut store, 6, depth, 16, &mut SeedStreams::new(1).stream("flow")).unwrap();
            let x = RealArray::new(&[2, 6], (0..12).map(|i| i as f64 - 5.0).collect()).unwrap();
            let c = x.map(|v| v * 0.5);
            let u = head.eval(&store, &x, &[0.25, 0.9], &c).unwrap();
            assert_eq!(u.shape(), &[2, 6]);
            assert!(u.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn parameter_layout() {
        let mut store = ParamStore::new();
        let head = FlowHead::new(&mut store, 192, 2, 64, &mut SeedStreams::new(1).stream("flow")).unwrap();
        assert_eq!(head.in_dim(), 392);
        assert_eq!(store.count_trainable(), 392 * 64 + 64 + 64 * 64 + 64 + 64 * 192 + 192);
    }

    #[test]
    fn rejects_time_outside_unit_interval() {
        let mut store = ParamStore::new();
        let head = FlowHead::new(&mut store, 2, 2, 4, &mut SeedStreams::new(1).stream("flow")).unwrap();
        let x = RealArray::zeros(&[1, 2]);
        assert!(matches!(head.eval(&store, &x, &[1.5], &x), Err(Error::Contract(_))));
        assert!(matches!(head.eval(&store, &RealArray::zeros(&[1, 3]), &[0.5], &x), Err(Error::Dimension(_))));
    }

    #[test]
    fn time_embedding_values() {
        let e = time_embed(0.0);
        assert_eq!(e, [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let e = time_embed(0.25);
        assert!((e[0] - 1.0).abs() < 1e-15 && e[1].abs() < 1e-15);
    }
}
