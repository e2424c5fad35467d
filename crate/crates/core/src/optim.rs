//! Adam with decoupled weight decay.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::param::{ParamGroup, ParamStore};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, p)| alloc::vec![0.0; p.value.flat().len()]).collect();
        AdamState { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One Adam update of every trainable parameter, then clears all gradients.
///
/// Decay multiplies the value by `1 − lr·weight_decay` before the Adam delta
/// and skips the RIN affine terms. Gradients are checked before anything
/// moves, so a NaN leaves the parameters untouched.
pub fn adam_step(state: &mut AdamState, store: &mut ParamStore, lr: f64, weight_decay: f64) -> Result<()> {
    if state.m.len() != store.len() {
        return Err(Error::Dimension(format!("optimizer tracks {} parameters, store has {}", state.m.len(), store.len())));
    }
    if let Some((_, p)) = store.iter().find(|(_, p)| p.trainable && p.gradient.flat().iter().any(|g| !g.is_finite())) {
        return Err(Error::Numeric(format!("non-finite gradient in {}", p.name)));
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - libm::pow(BETA1, t);
    let bc2 = 1.0 - libm::pow(BETA2, t);
    for (i, p) in store.iter_mut().enumerate() {
        if !p.trainable {
            continue;
        }
        let decay = if p.group == ParamGroup::Rin { 1.0 } else { 1.0 - lr * weight_decay };
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let grad = p.gradient.flat().to_vec();
        for (j, w) in p.value.flat_mut().iter_mut().enumerate() {
            let g = grad[j];
            m[j] = BETA1 * m[j] + (1.0 - BETA1) * g;
            v[j] = BETA2 * v[j] + (1.0 - BETA2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *w = *w * decay - lr * m_hat / (libm::sqrt(v_hat) + EPS);
        }
    }
    store.zero_grad();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::RealArray;
    use crate::param::ParamValue;
    use alloc::vec;

    fn scalar_store(value: f64, grad: f64, group: ParamGroup) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.register("w", group, ParamValue::Real(RealArray::from_vec(vec![value])));
        s.get_mut(id).gradient.flat_mut()[0] = grad;
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = scalar_store(0.0, 2.0, ParamGroup::Flow);
        let mut st = AdamState::new(&s);
        adam_step(&mut st, &mut s, 0.1, 0.0).unwrap();
        let w = s.iter().next().unwrap().1.value.flat()[0];
        assert!((w - (-0.1 * 2.0 / (2.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(s.iter().next().unwrap().1.gradient.flat(), &[0.0]);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut s = scalar_store(0.7, 0.0, ParamGroup::Flow);
        let mut st = AdamState::new(&s);
        adam_step(&mut st, &mut s, 0.1, 0.0).unwrap();
        assert_eq!(s.iter().next().unwrap().1.value.flat(), &[0.7]);
    }

    #[test]
    fn decoupled_decay_skips_rin() {
        let mut s = scalar_store(1.0, 0.0, ParamGroup::Interpolation);
        let mut st = AdamState::new(&s);
        adam_step(&mut st, &mut s, 0.1, 1e-8).unwrap();
        assert_eq!(s.iter().next().unwrap().1.value.flat()[0], 1.0 - 1e-9);
        let mut s = scalar_store(1.0, 0.0, ParamGroup::Rin);
        adam_step(&mut AdamState::new(&s), &mut s, 0.1, 1e-8).unwrap();
        assert_eq!(s.iter().next().unwrap().1.value.flat()[0], 1.0);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut s = scalar_store(1.0, f64::NAN, ParamGroup::Flow);
        let err = adam_step(&mut AdamState::new(&s), &mut s, 0.1, 0.0).unwrap_err();
        assert_eq!(err, Error::Numeric("non-finite gradient in w".into()));
        assert_eq!(s.iter().next().unwrap().1.value.flat(), &[1.0]);
    }
}
