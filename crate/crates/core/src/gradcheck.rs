//! Central finite-difference verification of tape gradients.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::param::{ParamId, ParamStore};

/// Builds a scalar loss on a fresh tape from the parameters in the store.
pub trait ScalarFn: Fn(&ParamStore, &mut Graph) -> Result<Var> {}
impl<T: Fn(&ParamStore, &mut Graph) -> Result<Var>> ScalarFn for T {}

fn evaluate(f: &impl ScalarFn, store: &ParamStore) -> Result<f64> {
    let mut g = Graph::new();
    let loss = f(store, &mut g)?;
    let v = g.scalar(loss);
    if !v.is_finite() {
        return Err(Error::Numeric(format!("loss evaluated to {v}")));
    }
    Ok(v)
}

/// Analytic gradient of `f` with respect to parameter `id`, split-real.
pub fn analytic_gradient(f: &impl ScalarFn, store: &ParamStore, id: ParamId) -> Result<Vec<f64>> {
    let mut work = store.clone();
    work.zero_grad();
    let mut g = Graph::new();
    let loss = f(&work, &mut g)?;
    g.backward(loss)?;
    g.accumulate_into(&mut work, 1.0)?;
    Ok(work.get(id).gradient.flat().to_vec())
}

/// Max over coordinates of `|analytic − central| / max(|analytic|, |central|, 1e-8)`.
pub fn finite_diff_check(f: &impl ScalarFn, store: &ParamStore, id: ParamId, step: f64) -> Result<f64> {
    let n = store.get(id).numel();
    finite_diff_check_coords(f, store, id, step, 0..n)
}

/// Same as [`finite_diff_check`] restricted to the given flat coordinates.
pub fn finite_diff_check_coords(
    f: &impl ScalarFn,
    store: &ParamStore,
    id: ParamId,
    step: f64,
    coords: impl IntoIterator<Item = usize>,
) -> Result<f64> {
    if step <= 0.0 || !step.is_finite() {
        return Err(Error::Contract(format!("finite-difference step must be positive, got {step}")));
    }
    let analytic = analytic_gradient(f, store, id)?;
    let mut work = store.clone();
    let mut worst: f64 = 0.0;
    for c in coords {
        let orig = work.get(id).value.flat()[c];
        work.get_mut(id).value.flat_mut()[c] = orig + step;
        let plus = evaluate(f, &work)?;
        work.get_mut(id).value.flat_mut()[c] = orig - step;
        let minus = evaluate(f, &work)?;
        work.get_mut(id).value.flat_mut()[c] = orig;
        let central = (plus - minus) / (2.0 * step);
        let a = analytic[c];
        let denom = a.abs().max(central.abs()).max(1e-8);
        worst = worst.max((a - central).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::RealArray;
    use crate::param::{ParamGroup, ParamValue};
    use alloc::vec;

    fn single(value: Vec<f64>) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.register("p", ParamGroup::Flow, ParamValue::Real(RealArray::from_vec(value)));
        (store, id)
    }

    #[test]
    fn exact_quadratic() {
        let (store, id) = single(vec![3.0]);
        let f = |s: &ParamStore, g: &mut Graph| {
            let x = g.param(s, id);
            let y = g.mul(x, x)?;
            g.weighted_sum(&[(y, 1.0)])
        };
        assert!(finite_diff_check(&f, &store, id, 1e-5).unwrap() < 1e-9);
    }

    #[test]
    fn linear_is_machine_precision() {
        let (store, id) = single(vec![0.7, -1.3, 2.0]);
        let f = |s: &ParamStore, g: &mut Graph| {
            let x = g.param(s, id);
            let w = g.input(RealArray::new(&[1, 3], vec![1.5, -2.0, 0.25])?);
            let x = g.slice_cols(x, 0, 3)?;
            let y = g.matmul_bt(w, x)?;
            g.weighted_sum(&[(y, 1.0)])
        };
        assert!(finite_diff_check(&f, &store, id, 1e-5).unwrap() < 1e-9);
    }

    #[test]
    fn rejects_bad_step_and_non_finite() {
        let (store, id) = single(vec![1.0]);
        let f = |s: &ParamStore, g: &mut Graph| {
            let x = g.param(s, id);
            g.weighted_sum(&[(x, f64::NAN)])
        };
        assert!(matches!(finite_diff_check(&f, &store, id, 0.0), Err(Error::Contract(_))));
        assert!(matches!(finite_diff_check(&f, &store, id, 1e-5), Err(Error::Numeric(_))));
    }
}
