//! Complex FFT plans: iterative radix-2 for powers of two, Bluestein's chirp-z
//! algorithm for every other length.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::array::Complex;
use crate::math::{PI, TAU};

#[derive(Debug, Clone)]
enum Kind {
    Trivial,
    Radix2 { twiddles: Vec<Complex>, bitrev: Vec<u32> },
    Bluestein { m: usize, chirp: Vec<Complex>, chirp_fft: Vec<Complex>, inner: Box<FftPlan> },
}

/// Precomputed unnormalized forward/inverse DFT of a fixed length.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    kind: Kind,
}

impl FftPlan {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "FFT length must be positive");
        let kind = if n == 1 {
            Kind::Trivial
        } else if n.is_power_of_two() {
            let bits = n.trailing_zeros();
            let bitrev = (0..n as u32).map(|i| i.reverse_bits() >> (32 - bits)).collect();
            let twiddles = (0..n / 2).map(|k| Complex::cis(-TAU * k as f64 / n as f64)).collect();
            Kind::Radix2 { twiddles, bitrev }
        } else {
            let m = (2 * n - 1).next_power_of_two();
            // w[k] = exp(-iπk²/n); k² is reduced mod 2n to keep the angle small.
            let chirp: Vec<Complex> = (0..n)
                .map(|k| {
                    let k2 = (k as u128 * k as u128 % (2 * n as u128)) as f64;
                    Complex::cis(-PI * k2 / n as f64)
                })
                .collect();
            let inner = FftPlan::new(m);
            let mut b = vec![Complex::ZERO; m];
            b[0] = chirp[0].conj();
            for k in 1..n {
                b[k] = chirp[k].conj();
                b[m - k] = chirp[k].conj();
            }
            inner.forward(&mut b);
            Kind::Bluestein { m, chirp, chirp_fft: b, inner: Box::new(inner) }
        };
        FftPlan { n, kind }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In place `X[k] = Σ x[n]·e^{-2πi·kn/N}`.
    pub fn forward(&self, buf: &mut [Complex]) {
        assert_eq!(buf.len(), self.n, "buffer length does not match plan");
        match &self.kind {
            Kind::Trivial => {}
            Kind::Radix2 { twiddles, bitrev } => radix2(buf, twiddles, bitrev),
            Kind::Bluestein { m, chirp, chirp_fft, inner } => {
                let mut a = vec![Complex::ZERO; *m];
                for k in 0..self.n {
                    a[k] = buf[k] * chirp[k];
                }
                inner.forward(&mut a);
                for (x, y) in a.iter_mut().zip(chirp_fft) {
                    *x = *x * *y;
                }
                inner.inverse(&mut a);
                let scale = 1.0 / *m as f64;
                for k in 0..self.n {
                    buf[k] = (a[k] * chirp[k]).scale(scale);
                }
            }
        }
    }

    /// In place `x[n] = Σ X[k]·e^{+2πi·kn/N}` (no 1/N factor).
    pub fn inverse(&self, buf: &mut [Complex]) {
        buf.iter_mut().for_each(|z| *z = z.conj());
        self.forward(buf);
        buf.iter_mut().for_each(|z| *z = z.conj());
    }
}

fn radix2(buf: &mut [Complex], twiddles: &[Complex], bitrev: &[u32]) {
    let n = buf.len();
    for i in 0..n {
        let j = bitrev[i] as usize;
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = twiddles[k * stride];
                let u = buf[start + k];
                let v = buf[start + k + half] * w;
                buf[start + k] = u + v;
                buf[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
}

/// Real-input transform of even length `n` producing `n/2 + 1` bins.
#[derive(Debug, Clone)]
pub struct RealFft {
    n: usize,
    plan: FftPlan,
}

impl RealFft {
    pub fn new(n: usize) -> Self {
        RealFft { n, plan: FftPlan::new(n) }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    pub fn forward(&self, x: &[f64]) -> Vec<Complex> {
        assert_eq!(x.len(), self.n);
        let mut buf: Vec<Complex> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.plan.forward(&mut buf);
        buf.truncate(self.bins());
        buf
    }

    /// Inverse of [`RealFft::forward`] including the `1/n` factor. The
    /// imaginary parts of the DC and Nyquist bins are ignored.
    pub fn inverse(&self, spec: &[Complex]) -> Vec<f64> {
        assert_eq!(spec.len(), self.bins());
        let n = self.n;
        let mut buf = vec![Complex::ZERO; n];
        buf[0] = Complex::new(spec[0].re, 0.0);
        for k in 1..n.div_ceil(2) {
            buf[k] = spec[k];
            buf[n - k] = spec[k].conj();
        }
        if n.is_multiple_of(2) {
            buf[n / 2] = Complex::new(spec[n / 2].re, 0.0);
        }
        self.plan.inverse(&mut buf);
        let scale = 1.0 / n as f64;
        buf.iter().map(|z| z.re * scale).collect()
    }

    /// Transpose of [`RealFft::forward`] viewed as a real linear map from
    /// `n` samples to `2·(n/2+1)` split-real outputs.
    pub fn forward_adjoint(&self, grad: &[Complex]) -> Vec<f64> {
        assert_eq!(grad.len(), self.bins());
        let mut buf = vec![Complex::ZERO; self.n];
        buf[..grad.len()].copy_from_slice(grad);
        self.plan.inverse(&mut buf);
        buf.iter().map(|z| z.re).collect()
    }

    /// Transpose of [`RealFft::inverse`] in the same split-real view.
    pub fn inverse_adjoint(&self, grad: &[f64]) -> Vec<Complex> {
        let n = self.n;
        let mut f = self.forward(grad);
        let last = f.len() - 1;
        for (k, z) in f.iter_mut().enumerate() {
            let is_real_bin = k == 0 || (n.is_multiple_of(2) && k == last);
            *z = if is_real_bin { Complex::new(z.re / n as f64, 0.0) } else { z.scale(2.0 / n as f64) };
        }
        f
    }
}
