//! Reversible instance normalization.
//!
//! Every `(instance, variate)` slice is shifted to zero mean and scaled to
//! unit population standard deviation; the statistics are kept so the model
//! output can be mapped back. The stored mean is the DC offset restored after
//! the inverse FFT. Statistics are treated as constants for differentiation.

use alloc::vec::Vec;

use crate::array::RealArray;
use crate::error::{dim_err, Error, Result};
use crate::graph::{Graph, Var};
use crate::math;
use crate::param::{ParamGroup, ParamId, ParamStore, ParamValue};

/// Lower bound on the stored scale.
pub const SCALE_FLOOR: f64 = 1e-5;
const AFFINE_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RinState {
    /// `[B, V]` per-slice mean.
    pub mean: RealArray,
    /// `[B, V]` per-slice standard deviation, floored at [`SCALE_FLOOR`].
    pub scale: RealArray,
}

/// Mean and floored population std of one slice.
pub fn slice_stats(x: &[f64]) -> (f64, f64) {
    let n = x.len().max(1) as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, math::sqrt(var).max(SCALE_FLOOR))
}

fn bvl(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [b, v, l] => Ok((b, v, l)),
        [v, l] => Ok((1, v, l)),
        _ => Err(dim_err!("expected [B, V, L], got {:?}", shape)),
    }
}

/// Normalizes each `(b, v)` slice of a `[B, V, L]` array.
pub fn rin_normalize(x: &RealArray) -> Result<(RealArray, RinState)> {
    let (b, v, l) = bvl(x.shape())?;
    if l < 2 {
        return Err(Error::Contract(alloc::format!("instance normalization needs L >= 2, got {l}")));
    }
    let mut out = x.clone();
    let mut mean = RealArray::zeros(&[b, v]);
    let mut scale = RealArray::zeros(&[b, v]);
    for s in 0..b * v {
        let (m, sd) = slice_stats(&x.data()[s * l..(s + 1) * l]);
        mean.data_mut()[s] = m;
        scale.data_mut()[s] = sd;
        out.data_mut()[s * l..(s + 1) * l].iter_mut().for_each(|z| *z = (*z - m) / sd);
    }
    Ok((out, RinState { mean, scale }))
}

/// `y·scale + mean`, broadcast over the (possibly different) length of `y`.
pub fn rin_denormalize(y: &RealArray, state: &RinState) -> Result<RealArray> {
    let (b, v, l) = bvl(y.shape())?;
    if state.mean.len() != b * v || state.scale.len() != b * v {
        return Err(dim_err!("state for {:?} applied to {:?}", state.mean.shape(), y.shape()));
    }
    let mut out = y.clone();
    for s in 0..b * v {
        let (m, sd) = (state.mean.data()[s], state.scale.data()[s]);
        out.data_mut()[s * l..(s + 1) * l].iter_mut().for_each(|z| *z = *z * sd + m);
    }
    Ok(out)
}

/// Per-row statistics of one `[V, L]` instance.
#[derive(Debug, Clone, PartialEq)]
pub struct RinStats {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl RinStats {
    pub fn of_rows(x: &RealArray) -> Self {
        let (rows, cols) = x.rows_cols();
        let (mean, scale) = (0..rows).map(|r| slice_stats(&x.data()[r * cols..(r + 1) * cols])).unzip();
        RinStats { mean, scale }
    }

    /// Statistics of the identity normalization (used when RIN is disabled).
    pub fn identity(rows: usize) -> Self {
        RinStats { mean: alloc::vec![0.0; rows], scale: alloc::vec![1.0; rows] }
    }
}

/// Instance normalization with a learnable per-variate affine map
/// `z = γ·(x − μ)/σ + β`.
#[derive(Debug, Clone)]
pub struct RinAffine {
    pub gamma: ParamId,
    pub beta: ParamId,
    n_vars: usize,
}

impl RinAffine {
    pub fn new(store: &mut ParamStore, n_vars: usize) -> Self {
        let gamma = store.register("rin.gamma", ParamGroup::Rin, ParamValue::Real(RealArray::filled(&[n_vars], 1.0)));
        let beta = store.register("rin.beta", ParamGroup::Rin, ParamValue::Real(RealArray::zeros(&[n_vars])));
        RinAffine { gamma, beta, n_vars }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Normalizes the rows of `x` (`[V, L]`) with statistics taken from its
    /// current value.
    pub fn normalize(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<(Var, RinStats)> {
        let stats = RinStats::of_rows(g.value(x));
        if stats.mean.len() != self.n_vars {
            return Err(dim_err!("{} rows for {} variates", stats.mean.len(), self.n_vars));
        }
        let inv: Vec<f64> = stats.scale.iter().map(|s| 1.0 / s).collect();
        let shift: Vec<f64> = stats.mean.iter().zip(&stats.scale).map(|(m, s)| -m / s).collect();
        let z = g.row_affine(x, &inv, &shift)?;
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        let z = g.row_scale(z, gamma)?;
        let z = g.row_shift(z, beta)?;
        Ok((z, stats))
    }

    /// Inverse of [`RinAffine::normalize`] for rows of any length.
    pub fn denormalize(&self, g: &mut Graph, store: &ParamStore, y: Var, stats: &RinStats) -> Result<Var> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        let neg_beta = g.scale(beta, -1.0);
        let y = g.row_shift(y, neg_beta)?;
        let y = g.row_div(y, gamma, AFFINE_EPS)?;
        g.row_affine(y, &stats.scale, &stats.mean)
    }

    /// Maps a constant `[V, L]` array into normalized space using `stats`.
    pub fn apply_constant(&self, store: &ParamStore, x: &RealArray, stats: &RinStats) -> RealArray {
        let (rows, cols) = x.rows_cols();
        let gamma = store.get(self.gamma).value.flat();
        let beta = store.get(self.beta).value.flat();
        let mut out = x.clone();
        for r in 0..rows {
            let (m, s) = (stats.mean[r], stats.scale[r]);
            out.data_mut()[r * cols..(r + 1) * cols]
                .iter_mut()
                .for_each(|v| *v = gamma[r] * (*v - m) / s + beta[r]);
        }
        out
    }
}
