//! Trainable parameters and the registry that owns them.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::array::{ComplexArray, RealArray};
use crate::error::{dim_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParamValue {
    Real(RealArray),
    Complex(ComplexArray),
}

impl ParamValue {
    pub fn shape(&self) -> &[usize] {
        match self {
            ParamValue::Real(a) => a.shape(),
            ParamValue::Complex(a) => a.shape(),
        }
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, ParamValue::Complex(_))
    }

    /// Split-real view: complex values appear as interleaved `(re, im)`.
    pub fn flat(&self) -> &[f64] {
        match self {
            ParamValue::Real(a) => a.data(),
            ParamValue::Complex(a) => a.interleaved(),
        }
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        match self {
            ParamValue::Real(a) => a.data_mut(),
            ParamValue::Complex(a) => a.interleaved_mut(),
        }
    }

    fn zeros_like(&self) -> ParamValue {
        match self {
            ParamValue::Real(a) => ParamValue::Real(RealArray::zeros(a.shape())),
            ParamValue::Complex(a) => ParamValue::Complex(ComplexArray::zeros(a.shape())),
        }
    }
}

/// Which block of the model a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Attention,
    Rin,
    Interpolation,
    Flow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub group: ParamGroup,
    pub value: ParamValue,
    pub gradient: ParamValue,
    pub trainable: bool,
}

impl Parameter {
    pub fn new(name: &str, group: ParamGroup, value: ParamValue) -> Self {
        let gradient = value.zeros_like();
        Parameter { name: name.to_string(), group, value, gradient, trainable: true }
    }

    /// Number of real scalars, counting a complex entry as two.
    pub fn numel(&self) -> usize {
        self.value.flat().len()
    }

    pub fn zero_grad(&mut self) {
        self.gradient.flat_mut().iter_mut().for_each(|g| *g = 0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Ordered parameter registry. Registration order is the serialization order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, group: ParamGroup, value: ParamValue) -> ParamId {
        debug_assert!(self.find(name).is_none(), "duplicate parameter {name}");
        self.params.push(Parameter::new(name, group, value));
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    /// Trainable scalar count (complex entries count twice).
    pub fn count_trainable(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(Parameter::numel).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    /// Adds `scale · grad` into the stored gradient of `id`.
    pub fn accumulate(&mut self, id: ParamId, grad: &[f64], scale: f64) -> Result<()> {
        let p = &mut self.params[id.0];
        let g = p.gradient.flat_mut();
        if g.len() != grad.len() {
            return Err(dim_err!("gradient for {} has {} entries, expected {}", p.name, grad.len(), g.len()));
        }
        g.iter_mut().zip(grad).for_each(|(a, b)| *a += scale * b);
        Ok(())
    }

    /// Replaces every value with the one from `other`. Names and shapes must agree.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::Dimension(alloc::format!(
                "parameter count {} vs {}",
                self.params.len(),
                other.params.len()
            )));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.name != src.name || dst.value.shape() != src.value.shape() {
                return Err(dim_err!("parameter {} {:?} vs {} {:?}", dst.name, dst.value.shape(), src.name, src.value.shape()));
            }
            dst.value = src.value.clone();
        }
        Ok(())
    }
}
