//! Define-by-run reverse-mode differentiation over a flat operation tape.
//!
//! Every value on the tape is a real array viewed as `[rows, cols]`.
//! Complex quantities use the split-real layout (interleaved `re, im` along
//! the last axis), so their gradients are `(∂L/∂re, ∂L/∂im)` pairs.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::array::{Complex, RealArray};
use crate::error::{contract_err, dim_err, Error, Result};
use crate::math;
use crate::param::{ParamId, ParamStore};
use crate::spectral::RealFft;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    SoftmaxRows(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    RowScale(Var, Var),
    RowShift(Var, Var),
    RowDiv { x: Var, s: Var, eps: f64 },
    RowAffine { x: Var, scale: Vec<f64> },
    Rfft { x: Var, plan: Arc<RealFft> },
    Irfft { x: Var, plan: Arc<RealFft> },
    ComplexLinear { x: Var, w: Var, b: Var },
    MeanSquare(Var),
    SumSquares(Var),
    WeightedSum(Vec<(Var, f64)>),
}

#[derive(Debug, Clone)]
struct Node {
    value: RealArray,
    op: Op,
}

/// Operation tape. Confined to one thread; `backward` may run once.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
    consumed: bool,
}

fn rc(a: &RealArray) -> (usize, usize) {
    a.rows_cols()
}

fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

fn matmul_bt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out[k, n] += aᵀ · g` for `a: [m, k]`, `g: [m, n]`.
fn matmul_at(a: &[f64], g: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: RealArray, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &RealArray {
        &self.nodes[v.0].value
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    /// A constant: no gradient flows past it.
    pub fn input(&mut self, value: RealArray) -> Var {
        self.push(value, Op::Input)
    }

    /// Copies a parameter onto the tape. Complex parameters appear split-real
    /// with the last axis doubled.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        let mut shape = p.value.shape().to_vec();
        if p.value.is_complex() {
            if let Some(last) = shape.last_mut() {
                *last *= 2;
            }
        }
        let value = RealArray::new(&shape, p.value.flat().to_vec()).expect("parameter buffer matches its shape");
        self.push(value, Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((m, k), (k2, n)) = (rc(self.value(a)), rc(self.value(b)));
        if k != k2 {
            return Err(dim_err!("matmul [{m},{k}] x [{k2},{n}]"));
        }
        let mut out = vec![0.0; m * n];
        matmul(self.value(a).data(), self.value(b).data(), m, k, n, &mut out);
        Ok(self.push(RealArray::new(&[m, n], out)?, Op::MatMul(a, b)))
    }

    /// `a · bᵀ` for `a: [m, k]`, `b: [n, k]`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((m, k), (n, k2)) = (rc(self.value(a)), rc(self.value(b)));
        if k != k2 {
            return Err(dim_err!("matmul_bt [{m},{k}] x [{n},{k2}]^T"));
        }
        let mut out = vec![0.0; m * n];
        matmul_bt(self.value(a).data(), self.value(b).data(), m, k, n, &mut out);
        Ok(self.push(RealArray::new(&[m, n], out)?, Op::MatMulBt(a, b)))
    }

    /// Adds a length-`n` vector to every row of `[m, n]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (m, n) = rc(self.value(x));
        if self.value(b).len() != n {
            return Err(dim_err!("bias of length {} for {n} columns", self.value(b).len()));
        }
        let bias = self.value(b).data();
        let mut out = self.value(x).data().to_vec();
        for r in 0..m {
            out[r * n..(r + 1) * n].iter_mut().zip(bias).for_each(|(o, &v)| *o += v);
        }
        Ok(self.push(RealArray::new(&[m, n], out)?, Op::AddBias(x, b)))
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), f)?;
        Ok(self.push(value, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let value = self.value(x).map(|v| v * s);
        self.push(value, Op::Scale(x, s))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(math::gelu);
        self.push(value, Op::Gelu(x))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let (m, n) = rc(self.value(x));
        let mut out = self.value(x).data().to_vec();
        for r in 0..m {
            let row = &mut out[r * n..(r + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = math::exp(*v - max);
                total += *v;
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
        let value = RealArray::new(&[m, n], out).expect("same size");
        self.push(value, Op::SoftmaxRows(x))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = rc(self.value(x));
        if start + len > n {
            return Err(dim_err!("columns {start}..{} of {n}", start + len));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&src[r * n + start..r * n + start + len]);
        }
        Ok(self.push(RealArray::new(&[m, len], out)?, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = rc(self.value(parts[0])).0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = rc(self.value(p));
            if pm != m {
                return Err(dim_err!("concat of {pm} rows onto {m} rows"));
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for r in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        Ok(self.push(RealArray::new(&[m, total], out)?, Op::ConcatCols(parts.to_vec())))
    }

    fn row_vector_check(&self, x: Var, s: Var) -> Result<(usize, usize)> {
        let (m, n) = rc(self.value(x));
        if self.value(s).len() != m {
            return Err(dim_err!("row vector of length {} for {m} rows", self.value(s).len()));
        }
        Ok((m, n))
    }

    /// Multiplies row `r` by `s[r]`.
    pub fn row_scale(&mut self, x: Var, s: Var) -> Result<Var> {
        let (m, n) = self.row_vector_check(x, s)?;
        let sv = self.value(s).data();
        let out = self.value(x).data().iter().enumerate().map(|(i, &v)| v * sv[i / n]).collect();
        Ok(self.push(RealArray::new(&[m, n], out)?, Op::RowScale(x, s)))
    }

    /// Adds `s[r]` to row `r`.
    pub fn row_shift(&mut self, x: Var, s: Var) -> Result<Var> {
        let (m, n) = self.row_vector_check(x, s)?;
        let sv = self.value(s).data();
        let out = self.value(x).data().iter().enumerate().map(|(i, &v)| v + sv[i / n]).collect();
        Ok(self.push(RealArray::new(&[m, n], out)?, Op::RowShift(x, s)))
    }

    /// Divides row `r` by `s[r] + eps`.
    pub fn row_div(&mut self, x: Var, s: Var, eps: f64) -> Result<Var> {
        let (m, n) = self.row_vector_check(x, s)?;
        let sv = self.value(s).data();
        let out = self.value(x).data().iter().enumerate().map(|(i, &v)| v / (sv[i / n] + eps)).collect();
        Ok(self.push(RealArray::new(&[m, n], out)?, Op::RowDiv { x, s, eps }))
    }

    /// `y[r, c] = x[r, c]·scale[r] + shift[r]` with constant coefficients.
    pub fn row_affine(&mut self, x: Var, scale: &[f64], shift: &[f64]) -> Result<Var> {
        let (m, n) = rc(self.value(x));
        if scale.len() != m || shift.len() != m {
            return Err(dim_err!("affine coefficients of length {}/{} for {m} rows", scale.len(), shift.len()));
        }
        let out = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * scale[i / n] + shift[i / n])
            .collect();
        Ok(self.push(RealArray::new(&[m, n], out)?, Op::RowAffine { x, scale: scale.to_vec() }))
    }

    /// Row-wise real FFT: `[m, L] → [m, 2·(L/2+1)]` split-real.
    pub fn rfft_rows(&mut self, x: Var, plan: &Arc<RealFft>) -> Result<Var> {
        let (m, l) = rc(self.value(x));
        if l != plan.len() {
            return Err(dim_err!("rfft plan for {} applied to rows of {l}", plan.len()));
        }
        let bins = plan.bins();
        let mut out = Vec::with_capacity(m * 2 * bins);
        for r in 0..m {
            for z in plan.forward(&self.value(x).data()[r * l..(r + 1) * l]) {
                out.push(z.re);
                out.push(z.im);
            }
        }
        Ok(self.push(RealArray::new(&[m, 2 * bins], out)?, Op::Rfft { x, plan: plan.clone() }))
    }

    /// Row-wise inverse real FFT: `[m, 2·(L/2+1)] → [m, L]`. Imaginary parts
    /// of the DC and Nyquist bins are ignored (treated as zero).
    pub fn irfft_rows(&mut self, x: Var, plan: &Arc<RealFft>) -> Result<Var> {
        let (m, w) = rc(self.value(x));
        let bins = plan.bins();
        if w != 2 * bins {
            return Err(dim_err!("irfft to {} samples needs {} split-real columns, got {w}", plan.len(), 2 * bins));
        }
        let l = plan.len();
        let mut out = Vec::with_capacity(m * l);
        for r in 0..m {
            let row: Vec<Complex> = self.value(x).data()[r * w..(r + 1) * w]
                .chunks_exact(2)
                .map(|p| Complex::new(p[0], p[1]))
                .collect();
            out.extend(plan.inverse(&row));
        }
        Ok(self.push(RealArray::new(&[m, l], out)?, Op::Irfft { x, plan: plan.clone() }))
    }

    /// Complex affine map applied to every row: `y = W·x + b` with
    /// `x: [m, 2·K_in]`, `W: [K_out, 2·K_in]`, `b: [2·K_out]`, all split-real.
    pub fn complex_linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (m, xin) = rc(self.value(x));
        let (k_out, win) = rc(self.value(w));
        if xin != win || xin % 2 != 0 {
            return Err(dim_err!("complex input width {xin} vs weight width {win}"));
        }
        if self.value(b).len() != 2 * k_out {
            return Err(dim_err!("complex bias of {} reals for {k_out} outputs", self.value(b).len()));
        }
        let k_in = xin / 2;
        let (xv, wv, bv) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut out = vec![0.0; m * 2 * k_out];
        for r in 0..m {
            let xr = &xv[r * xin..(r + 1) * xin];
            for j in 0..k_out {
                let wr = &wv[j * win..(j + 1) * win];
                let (mut re, mut im) = (bv[2 * j], bv[2 * j + 1]);
                for k in 0..k_in {
                    let (a, c) = (wr[2 * k], wr[2 * k + 1]);
                    let (p, q) = (xr[2 * k], xr[2 * k + 1]);
                    re += a * p - c * q;
                    im += a * q + c * p;
                }
                out[r * 2 * k_out + 2 * j] = re;
                out[r * 2 * k_out + 2 * j + 1] = im;
            }
        }
        Ok(self.push(RealArray::new(&[m, 2 * k_out], out)?, Op::ComplexLinear { x, w, b }))
    }

    /// Mean of squares over all elements.
    pub fn mean_square(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let value = v.sum_squares() / v.len().max(1) as f64;
        self.push(RealArray::scalar(value), Op::MeanSquare(x))
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let value = self.value(x).sum_squares();
        self.push(RealArray::scalar(value), Op::SumSquares(x))
    }

    /// `Σ coeff_i · term_i` over scalar terms.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut total = 0.0;
        for &(t, c) in terms {
            if self.value(t).len() != 1 {
                return Err(contract_err!("weighted_sum term {} is not a scalar", t.0));
            }
            total += c * self.scalar(t);
        }
        Ok(self.push(RealArray::scalar(total), Op::WeightedSum(terms.to_vec())))
    }

    /// Reverse sweep from the scalar `loss`. Consumes the tape.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::GraphReused);
        }
        if self.value(loss).len() != 1 {
            return Err(contract_err!("loss node has {} elements, expected a scalar", self.value(loss).len()));
        }
        self.consumed = true;
        self.grads = vec![Vec::new(); self.nodes.len()];
        self.grads[loss.0] = vec![1.0];
        for i in (0..=loss.0).rev() {
            if self.grads[i].is_empty() {
                continue;
            }
            let g = core::mem::take(&mut self.grads[i]);
            self.propagate(i, &g);
            self.grads[i] = g;
        }
        Ok(())
    }

    fn acc(&mut self, v: Var) -> &mut [f64] {
        let n = self.nodes[v.0].value.len();
        let g = &mut self.grads[v.0];
        if g.is_empty() {
            *g = vec![0.0; n];
        }
        g
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        let op = self.nodes[i].op.clone();
        match op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let ((m, k), (_, n)) = (rc(self.value(a)), rc(self.value(b)));
                let (av, bv) = (self.value(a).data().to_vec(), self.value(b).data().to_vec());
                matmul_bt(g, &bv, m, n, k, self.acc(a));
                matmul_at(&av, g, m, k, n, self.acc(b));
            }
            Op::MatMulBt(a, b) => {
                let ((m, k), (n, _)) = (rc(self.value(a)), rc(self.value(b)));
                let (av, bv) = (self.value(a).data().to_vec(), self.value(b).data().to_vec());
                matmul(g, &bv, m, n, k, self.acc(a));
                matmul_at(g, &av, m, n, k, self.acc(b));
            }
            Op::AddBias(x, b) => {
                let (_, n) = rc(self.value(x));
                self.acc(x).iter_mut().zip(g).for_each(|(a, &v)| *a += v);
                let gb = self.acc(b);
                for (idx, &v) in g.iter().enumerate() {
                    gb[idx % n] += v;
                }
            }
            Op::Add(a, b) => {
                self.acc(a).iter_mut().zip(g).for_each(|(x, &v)| *x += v);
                self.acc(b).iter_mut().zip(g).for_each(|(x, &v)| *x += v);
            }
            Op::Sub(a, b) => {
                self.acc(a).iter_mut().zip(g).for_each(|(x, &v)| *x += v);
                self.acc(b).iter_mut().zip(g).for_each(|(x, &v)| *x -= v);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(a).data().to_vec(), self.value(b).data().to_vec());
                self.acc(a).iter_mut().zip(g.iter().zip(&bv)).for_each(|(x, (&gv, &o))| *x += gv * o);
                self.acc(b).iter_mut().zip(g.iter().zip(&av)).for_each(|(x, (&gv, &o))| *x += gv * o);
            }
            Op::Scale(x, s) => {
                self.acc(x).iter_mut().zip(g).for_each(|(a, &v)| *a += s * v);
            }
            Op::Gelu(x) => {
                let xv = self.value(x).data().to_vec();
                self.acc(x).iter_mut().zip(g.iter().zip(&xv)).for_each(|(a, (&gv, &z))| *a += gv * math::gelu_grad(z));
            }
            Op::SoftmaxRows(x) => {
                let (m, n) = rc(self.value(x));
                let y = self.nodes[i].value.data().to_vec();
                let gx = self.acc(x);
                for r in 0..m {
                    let (yr, gr) = (&y[r * n..(r + 1) * n], &g[r * n..(r + 1) * n]);
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..n {
                        gx[r * n + c] += yr[c] * (gr[c] - dot);
                    }
                }
            }
            Op::SliceCols { x, start } => {
                let (m, n) = rc(self.value(x));
                let len = rc(&self.nodes[i].value).1;
                let gx = self.acc(x);
                for r in 0..m {
                    for c in 0..len {
                        gx[r * n + start + c] += g[r * len + c];
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = rc(&self.nodes[i].value).1;
                let mut offset = 0;
                for p in parts {
                    let (m, w) = rc(self.value(p));
                    let gp = self.acc(p);
                    for r in 0..m {
                        for c in 0..w {
                            gp[r * w + c] += g[r * total + offset + c];
                        }
                    }
                    offset += w;
                }
            }
            Op::RowScale(x, s) => {
                let (m, n) = rc(self.value(x));
                let (xv, sv) = (self.value(x).data().to_vec(), self.value(s).data().to_vec());
                let gx = self.acc(x);
                for idx in 0..m * n {
                    gx[idx] += g[idx] * sv[idx / n];
                }
                let gs = self.acc(s);
                for idx in 0..m * n {
                    gs[idx / n] += g[idx] * xv[idx];
                }
            }
            Op::RowShift(x, s) => {
                let (_, n) = rc(self.value(x));
                self.acc(x).iter_mut().zip(g).for_each(|(a, &v)| *a += v);
                let gs = self.acc(s);
                for (idx, &v) in g.iter().enumerate() {
                    gs[idx / n] += v;
                }
            }
            Op::RowDiv { x, s, eps } => {
                let (m, n) = rc(self.value(x));
                let (xv, sv) = (self.value(x).data().to_vec(), self.value(s).data().to_vec());
                let gx = self.acc(x);
                for idx in 0..m * n {
                    gx[idx] += g[idx] / (sv[idx / n] + eps);
                }
                let gs = self.acc(s);
                for idx in 0..m * n {
                    let d = sv[idx / n] + eps;
                    gs[idx / n] -= g[idx] * xv[idx] / (d * d);
                }
            }
            Op::RowAffine { x, scale } => {
                let (_, n) = rc(self.value(x));
                let gx = self.acc(x);
                for (idx, &v) in g.iter().enumerate() {
                    gx[idx] += v * scale[idx / n];
                }
            }
            Op::Rfft { x, plan } => {
                let (m, l) = rc(self.value(x));
                let w = 2 * plan.bins();
                let gx = self.acc(x);
                for r in 0..m {
                    let gz: Vec<Complex> = g[r * w..(r + 1) * w].chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect();
                    for (a, v) in gx[r * l..(r + 1) * l].iter_mut().zip(plan.forward_adjoint(&gz)) {
                        *a += v;
                    }
                }
            }
            Op::Irfft { x, plan } => {
                let (m, w) = rc(self.value(x));
                let l = plan.len();
                let gx = self.acc(x);
                for r in 0..m {
                    let gz = plan.inverse_adjoint(&g[r * l..(r + 1) * l]);
                    for (k, z) in gz.into_iter().enumerate() {
                        gx[r * w + 2 * k] += z.re;
                        gx[r * w + 2 * k + 1] += z.im;
                    }
                }
            }
            Op::ComplexLinear { x, w, b } => {
                let (m, xin) = rc(self.value(x));
                let k_out = rc(self.value(w)).0;
                let k_in = xin / 2;
                let (xv, wv) = (self.value(x).data().to_vec(), self.value(w).data().to_vec());
                {
                    let gb = self.acc(b);
                    for r in 0..m {
                        for j in 0..2 * k_out {
                            gb[j] += g[r * 2 * k_out + j];
                        }
                    }
                }
                {
                    // gx = Wᴴ·gy
                    let gx = self.acc(x);
                    for r in 0..m {
                        for j in 0..k_out {
                            let (gr, gi) = (g[r * 2 * k_out + 2 * j], g[r * 2 * k_out + 2 * j + 1]);
                            let wr = &wv[j * xin..(j + 1) * xin];
                            let gxr = &mut gx[r * xin..(r + 1) * xin];
                            for k in 0..k_in {
                                let (a, c) = (wr[2 * k], wr[2 * k + 1]);
                                gxr[2 * k] += gr * a + gi * c;
                                gxr[2 * k + 1] += -gr * c + gi * a;
                            }
                        }
                    }
                }
                // gW = gy·xᴴ
                let gw = self.acc(w);
                for r in 0..m {
                    let xr = &xv[r * xin..(r + 1) * xin];
                    for j in 0..k_out {
                        let (gr, gi) = (g[r * 2 * k_out + 2 * j], g[r * 2 * k_out + 2 * j + 1]);
                        let gwr = &mut gw[j * xin..(j + 1) * xin];
                        for k in 0..k_in {
                            let (p, q) = (xr[2 * k], xr[2 * k + 1]);
                            gwr[2 * k] += gr * p + gi * q;
                            gwr[2 * k + 1] += gi * p - gr * q;
                        }
                    }
                }
            }
            Op::MeanSquare(x) => {
                let xv = self.value(x).data().to_vec();
                let c = 2.0 * g[0] / xv.len().max(1) as f64;
                self.acc(x).iter_mut().zip(&xv).for_each(|(a, &v)| *a += c * v);
            }
            Op::SumSquares(x) => {
                let xv = self.value(x).data().to_vec();
                let c = 2.0 * g[0];
                self.acc(x).iter_mut().zip(&xv).for_each(|(a, &v)| *a += c * v);
            }
            Op::WeightedSum(terms) => {
                for (t, c) in terms {
                    self.acc(t)[0] += c * g[0];
                }
            }
        }
    }

    /// Gradient of the last `backward` loss with respect to `v`, if any
    /// reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).filter(|g| !g.is_empty()).map(|g| g.as_slice())
    }

    /// Adds `scale ·` the gradient of every parameter leaf into `store`.
    pub fn accumulate_into(&self, store: &mut ParamStore, scale: f64) -> Result<()> {
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                if let Some(g) = self.grads.get(i).filter(|g| !g.is_empty()) {
                    store.accumulate(id, g, scale)?;
                }
            }
        }
        Ok(())
    }
}
