//! Dense row-major real and complex arrays.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };
    pub const ONE: Complex = Complex { re: 1.0, im: 0.0 };
    pub const I: Complex = Complex { re: 0.0, im: 1.0 };

    #[inline]
    pub const fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    /// `e^{i·theta}`.
    #[inline]
    pub fn cis(theta: f64) -> Self {
        let (s, c) = math::sin_cos(theta);
        Complex { re: c, im: s }
    }

    #[inline]
    pub fn from_polar(amplitude: f64, phase: f64) -> Self {
        Complex::cis(phase).scale(amplitude)
    }

    #[inline]
    pub fn amplitude(self) -> f64 {
        math::hypot(self.re, self.im)
    }

    /// Phase in `(-π, π]`.
    #[inline]
    pub fn phase(self) -> f64 {
        math::atan2(self.im, self.re)
    }

    #[inline]
    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    #[inline]
    pub fn conj(self) -> Self {
        Complex { re: self.re, im: -self.im }
    }

    #[inline]
    pub fn scale(self, s: f64) -> Self {
        Complex { re: self.re * s, im: self.im * s }
    }
}

impl Add for Complex {
    type Output = Complex;
    #[inline]
    fn add(self, o: Complex) -> Complex {
        Complex { re: self.re + o.re, im: self.im + o.im }
    }
}

impl Sub for Complex {
    type Output = Complex;
    #[inline]
    fn sub(self, o: Complex) -> Complex {
        Complex { re: self.re - o.re, im: self.im - o.im }
    }
}

impl Mul for Complex {
    type Output = Complex;
    #[inline]
    fn mul(self, o: Complex) -> Complex {
        Complex {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
}

impl Neg for Complex {
    type Output = Complex;
    #[inline]
    fn neg(self) -> Complex {
        Complex { re: -self.re, im: -self.im }
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl RealArray {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(dim_err!("shape {:?} needs {} values, got {}", shape, numel(shape), data.len()));
        }
        Ok(RealArray { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        RealArray { shape: shape.to_vec(), data: vec![0.0; numel(shape)] }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        RealArray { shape: shape.to_vec(), data: vec![value; numel(shape)] }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        RealArray { shape: vec![data.len()], data }
    }

    pub fn scalar(value: f64) -> Self {
        RealArray { shape: vec![1], data: vec![value] }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Rows and columns when viewed as a matrix over the last axis.
    pub fn rows_cols(&self) -> (usize, usize) {
        match self.shape.len() {
            0 => (1, 1),
            1 => (1, self.shape[0]),
            _ => {
                let cols = *self.shape.last().unwrap();
                (self.data.len() / cols.max(1), cols)
            }
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let (_, c) = self.rows_cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let (_, c) = self.rows_cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.data.len() {
            return Err(dim_err!("cannot reshape {:?} into {:?}", self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        RealArray { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &RealArray, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(dim_err!("shape {:?} vs {:?}", self.shape, other.shape));
        }
        Ok(RealArray {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Complex array stored as interleaved `(re, im)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl ComplexArray {
    pub fn zeros(shape: &[usize]) -> Self {
        ComplexArray { shape: shape.to_vec(), data: vec![0.0; 2 * numel(shape)] }
    }

    pub fn from_complex(shape: &[usize], values: &[Complex]) -> Result<Self> {
        if numel(shape) != values.len() {
            return Err(dim_err!("shape {:?} needs {} values, got {}", shape, numel(shape), values.len()));
        }
        let mut data = Vec::with_capacity(values.len() * 2);
        for z in values {
            data.push(z.re);
            data.push(z.im);
        }
        Ok(ComplexArray { shape: shape.to_vec(), data })
    }

    /// Builds from an interleaved buffer of length `2 · numel(shape)`.
    pub fn from_interleaved(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if 2 * numel(shape) != data.len() {
            return Err(dim_err!("shape {:?} needs {} interleaved reals, got {}", shape, 2 * numel(shape), data.len()));
        }
        Ok(ComplexArray { shape: shape.to_vec(), data })
    }

    pub fn from_vec(values: &[Complex]) -> Self {
        Self::from_complex(&[values.len()], values).expect("length matches by construction")
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / 2
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> Complex {
        Complex { re: self.data[2 * i], im: self.data[2 * i + 1] }
    }

    #[inline]
    pub fn set(&mut self, i: usize, z: Complex) {
        self.data[2 * i] = z.re;
        self.data[2 * i + 1] = z.im;
    }

    pub fn iter(&self) -> impl Iterator<Item = Complex> + '_ {
        self.data.chunks_exact(2).map(|p| Complex { re: p[0], im: p[1] })
    }

    pub fn to_vec(&self) -> Vec<Complex> {
        self.iter().collect()
    }

    /// Interleaved split-real view.
    #[inline]
    pub fn interleaved(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn interleaved_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Real parts and imaginary parts as two separate arrays of the same shape.
    pub fn to_split(&self) -> (RealArray, RealArray) {
        let re = self.iter().map(|z| z.re).collect();
        let im = self.iter().map(|z| z.im).collect();
        (
            RealArray { shape: self.shape.clone(), data: re },
            RealArray { shape: self.shape.clone(), data: im },
        )
    }

    pub fn from_split(re: &RealArray, im: &RealArray) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(dim_err!("real part {:?} vs imaginary part {:?}", re.shape(), im.shape()));
        }
        let mut data = Vec::with_capacity(2 * re.len());
        for (&a, &b) in re.data().iter().zip(im.data()) {
            data.push(a);
            data.push(b);
        }
        Ok(ComplexArray { shape: re.shape().to_vec(), data })
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.len() {
            return Err(dim_err!("cannot reshape {:?} into {:?}", self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }
}

/// Elementwise complex product. The smaller operand is broadcast when it
/// holds a single value or its shape is a trailing suffix of the other's.
pub fn complex_mul(a: &ComplexArray, b: &ComplexArray) -> Result<ComplexArray> {
    let a_big = a.len() > b.len() || (a.len() == b.len() && a.shape.len() >= b.shape.len());
    let (big, small, swap) = if a_big { (a, b, false) } else { (b, a, true) };
    let rank_ok = big.shape.len() >= small.shape.len();
    let suffix_ok = rank_ok && big.shape[big.shape.len() - small.shape.len()..] == small.shape[..];
    if !(suffix_ok || small.len() == 1) {
        return Err(dim_err!("cannot broadcast {:?} against {:?}", a.shape, b.shape));
    }
    let n = small.len().max(1);
    let mut out = ComplexArray::zeros(&big.shape);
    for i in 0..big.len() {
        let (x, y) = (big.get(i), small.get(i % n));
        out.set(i, if swap { y * x } else { x * y });
    }
    Ok(out)
}

/// `y[j] = Σ_k W[j,k]·x[k] + b[j]`.
pub fn complex_matvec(w: &ComplexArray, x: &ComplexArray, b: &ComplexArray) -> Result<ComplexArray> {
    if w.shape.len() != 2 {
        return Err(dim_err!("weight must be 2-D, got {:?}", w.shape));
    }
    let (k_out, k_in) = (w.shape[0], w.shape[1]);
    if x.len() != k_in || x.shape.len() != 1 {
        return Err(dim_err!("input {:?} does not match weight inner dimension {}", x.shape, k_in));
    }
    if b.len() != k_out || b.shape.len() != 1 {
        return Err(dim_err!("bias {:?} does not match weight outer dimension {}", b.shape, k_out));
    }
    let mut out = ComplexArray::zeros(&[k_out]);
    for j in 0..k_out {
        let mut acc = b.get(j);
        for k in 0..k_in {
            acc = acc + w.get(j * k_in + k) * x.get(k);
        }
        out.set(j, acc);
    }
    Ok(out)
}
