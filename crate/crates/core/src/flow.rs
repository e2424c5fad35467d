//! Conditional flow matching on split-real residual spectra.
//!
//! Training pairs a base draw `x0 ~ N(0, I)` with a residual target `x1` on
//! the straight path `x_t = (1 − t)·x0 + t·x1`, whose velocity is the
//! constant `x1 − x0`. Inference integrates the learned field with explicit
//! Euler steps from `t = 0` to `t = 1`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::array::RealArray;
use crate::error::{contract_err, dim_err, Error, Result};
use crate::graph::{Graph, Var};
use crate::layers::FlowHead;
use crate::param::ParamStore;
use crate::spectral::Spectrum;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub x_t: RealArray,
    pub t: f64,
    pub x0: RealArray,
    pub x1: RealArray,
    pub cond: RealArray,
}

fn same_shape(a: &RealArray, b: &RealArray) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_err!("{:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(contract_err!("path time {t} outside [0, 1]"));
    }
    Ok(())
}

/// Point on the linear path between `x0` and `x1`.
pub fn sample_path(x0: &RealArray, x1: &RealArray, t: f64, cond: &RealArray) -> Result<FlowSample> {
    same_shape(x0, x1)?;
    check_time(t)?;
    // endpoints are returned verbatim so t = 0 and t = 1 are exact
    let x_t = if t == 0.0 {
        x0.clone()
    } else if t == 1.0 {
        x1.clone()
    } else {
        x0.zip_map(x1, |a, b| (1.0 - t) * a + t * b)?
    };
    Ok(FlowSample { x_t, t, x0: x0.clone(), x1: x1.clone(), cond: cond.clone() })
}

/// `x1 − x0`.
pub fn target_velocity(x0: &RealArray, x1: &RealArray) -> Result<RealArray> {
    x0.zip_map(x1, |a, b| b - a)
}

/// Records the flow loss `mean((u_θ(x_t, t, cond) − (x1 − x0))²)` on `g`.
///
/// `x0`, `x1` and `cond` are `[R, D]`; `t` holds one time per row.
pub fn flow_loss_graph(
    g: &mut Graph,
    head: &FlowHead,
    store: &ParamStore,
    x0: &RealArray,
    x1: &RealArray,
    cond: &RealArray,
    t: &[f64],
) -> Result<Var> {
    same_shape(x0, x1)?;
    let (rows, cols) = x0.rows_cols();
    if t.len() != rows {
        return Err(dim_err!("{} times for {rows} rows", t.len()));
    }
    let mut x_t = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        check_time(t[r])?;
        for c in 0..cols {
            let i = r * cols + c;
            x_t.push((1.0 - t[r]) * x0.data()[i] + t[r] * x1.data()[i]);
        }
    }
    let target = target_velocity(x0, x1)?;
    let x_t = g.input(RealArray::new(&[rows, cols], x_t)?);
    let cond = g.input(cond.clone().reshape(&[rows, cols])?);
    let target = g.input(target.reshape(&[rows, cols])?);
    let u = head.forward(g, store, x_t, t, cond)?;
    let diff = g.sub(u, target)?;
    Ok(g.mean_square(diff))
}

/// Scalar flow loss at a single time shared by every row.
pub fn flow_loss(head: &FlowHead, store: &ParamStore, x0: &RealArray, x1: &RealArray, cond: &RealArray, t: f64) -> Result<f64> {
    let rows = x0.rows_cols().0;
    let mut g = Graph::new();
    let loss = flow_loss_graph(&mut g, head, store, &as_rows(x0), &as_rows(x1), &as_rows(cond), &vec![t; rows])?;
    Ok(g.scalar(loss))
}

fn as_rows(x: &RealArray) -> RealArray {
    let (r, c) = x.rows_cols();
    x.clone().reshape(&[r, c]).expect("same element count")
}

/// Explicit Euler integration of `dx/dt = u_θ(x, t, cond)` over `[0, 1]`.
pub fn ode_sample(head: &FlowHead, store: &ParamStore, x0: &RealArray, cond: &RealArray, n_steps: usize) -> Result<RealArray> {
    let cond = as_rows(cond);
    ode_sample_with(x0, n_steps, |x, t| {
        let x = as_rows(x);
        let u = head.eval(store, &x, &vec![t; x.rows_cols().0], &cond)?;
        Ok(u)
    })
}

/// Euler integration against an arbitrary velocity field.
pub fn ode_sample_with(
    x0: &RealArray,
    n_steps: usize,
    mut field: impl FnMut(&RealArray, f64) -> Result<RealArray>,
) -> Result<RealArray> {
    if n_steps < 1 {
        return Err(contract_err!("ODE sampler needs at least one step"));
    }
    let mut x = x0.clone();
    let h = 1.0 / n_steps as f64;
    for k in 0..n_steps {
        let u = field(&x, k as f64 * h)?;
        if u.len() != x.len() {
            return Err(dim_err!("velocity {:?} for state {:?}", u.shape(), x.shape()));
        }
        x.data_mut().iter_mut().zip(u.data()).for_each(|(a, &v)| *a += h * v);
        if !x.is_finite() {
            return Err(Error::Divergence(format!("ODE step {}", k + 1)));
        }
    }
    Ok(x)
}

/// Split-real residual `S_true − S_interp`, one row per variate.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTarget {
    pub value: RealArray,
}

/// Difference of two spectra with equal bin counts. Inputs are plain values,
/// so the result carries no gradient back to whatever produced `s_interp`.
pub fn make_residual_target(s_true: &Spectrum, s_interp: &Spectrum) -> Result<ResidualTarget> {
    if s_true.coeffs.shape() != s_interp.coeffs.shape() {
        return Err(dim_err!("true spectrum {:?} vs interpolated {:?}", s_true.coeffs.shape(), s_interp.coeffs.shape()));
    }
    let (v, k) = (s_true.variates(), s_true.bins());
    let data = s_true
        .coeffs
        .interleaved()
        .iter()
        .zip(s_interp.coeffs.interleaved())
        .map(|(a, b)| a - b)
        .collect();
    Ok(ResidualTarget { value: RealArray::new(&[v, 2 * k], data)? })
}
