//! The complex frequency interpolation layer.
//!
//! One complex matrix shared by every variate maps the (low-passed) input
//! spectrum of a length-`L_i` window onto the spectrum of a length-`η·L_i`
//! output. Complex multiplication lets each weight scale an amplitude and
//! rotate a phase at the same time.

use alloc::vec::Vec;

use crate::array::{complex_matvec, Complex, ComplexArray};
use crate::error::{dim_err, Result};
use crate::graph::{Graph, Var};
use crate::math;
use crate::param::{ParamGroup, ParamId, ParamStore, ParamValue};
use crate::spectral::{zero_pad_to, Spectrum};

#[derive(Debug, Clone)]
pub struct ComplexLinearLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub k_in: usize,
    pub k_out: usize,
    pub eta: f64,
}

impl ComplexLinearLayer {
    /// Registers `W: [k_out, k_in]` and `b: [k_out]`.
    ///
    /// `W` starts as the band correspondence: input bin `k` (frequency `k+1`
    /// on the input grid) feeds output bin `round(η·(k+1)) − 1`, the same
    /// physical frequency on the longer grid, with weight `η` so the
    /// waveform keeps its amplitude after the longer inverse transform.
    pub fn new(store: &mut ParamStore, k_in: usize, k_out: usize, eta: f64) -> Self {
        let mut w = ComplexArray::zeros(&[k_out, k_in]);
        for k in 0..k_in {
            let j = math::round(eta * (k + 1) as f64) as usize;
            if j >= 1 && j <= k_out {
                w.set((j - 1) * k_in + k, Complex::new(eta, 0.0));
            }
        }
        let w = store.register("interp.w", ParamGroup::Interpolation, ParamValue::Complex(w));
        let b = store.register("interp.b", ParamGroup::Interpolation, ParamValue::Complex(ComplexArray::zeros(&[k_out])));
        ComplexLinearLayer { w, b, k_in, k_out, eta }
    }

    /// `x: [V, 2·k_in]` split-real → `[V, 2·k_out]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        g.complex_linear(x, w, b)
    }
}

/// Applies the layer to every variate of `s`, then zero-pads to `l_out / 2`
/// bins so the result is ready for DC prepend and inverse FFT.
pub fn complex_interpolate(layer: &ComplexLinearLayer, store: &ParamStore, s: &Spectrum, l_out: usize) -> Result<Spectrum> {
    if s.bins() != layer.k_in {
        return Err(dim_err!("spectrum has {} bins, layer expects {}", s.bins(), layer.k_in));
    }
    let ParamValue::Complex(w) = &store.get(layer.w).value else {
        return Err(dim_err!("interpolation weight is not complex"));
    };
    let ParamValue::Complex(b) = &store.get(layer.b).value else {
        return Err(dim_err!("interpolation bias is not complex"));
    };
    let v = s.variates();
    let mut out = Vec::with_capacity(v * layer.k_out);
    for r in 0..v {
        let x: Vec<Complex> = (0..s.bins()).map(|k| s.get(r, k)).collect();
        out.extend(complex_matvec(w, &ComplexArray::from_vec(&x), b)?.iter());
    }
    let coeffs = ComplexArray::from_complex(&[v, layer.k_out], &out)?;
    let interp = Spectrum { coeffs, source_length: 2 * layer.k_out, nyquist_included: true };
    zero_pad_to(&interp, l_out / 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::RealArray;
    use crate::spectral::{drop_dc, rfft};
    use alloc::vec;

    #[test]
    fn identity_square_layer_copies_spectrum() {
        let mut store = ParamStore::new();
        let layer = ComplexLinearLayer::new(&mut store, 4, 4, 1.0);
        let x = RealArray::new(&[2, 8], vec![1.0, -2.0, 0.5, 0.0, 3.0, -1.0, -0.5, -1.0, 0.0, 1.0, 0.0, -1.0, 2.0, -2.0, 1.0, -1.0]).unwrap();
        let s = drop_dc(&rfft(&x).unwrap()).unwrap();
        let y = complex_interpolate(&layer, &store, &s, 8).unwrap();
        assert_eq!(y.coeffs, s.coeffs);
        let back = y.to_time().unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_rate_sets_bin_count() {
        let mut store = ParamStore::new();
        // L_i = 96, η = 2 → L_o = 192, 96 output bins
        let layer = ComplexLinearLayer::new(&mut store, 48, 96, 2.0);
        let s = Spectrum::new(ComplexArray::zeros(&[1, 48]), 96).unwrap();
        let y = complex_interpolate(&layer, &store, &s, 192).unwrap();
        assert_eq!(y.bins(), 96);
        assert_eq!(y.source_length, 192);
        let bad = Spectrum::new(ComplexArray::zeros(&[1, 47]), 96).unwrap();
        assert!(complex_interpolate(&layer, &store, &bad, 192).is_err());
    }

    #[test]
    fn initialization_continues_a_periodic_signal() {
        // Period-8 cosine over a 16-sample window, interpolated to 32 samples.
        let l = 16;
        let x: Vec<f64> = (0..l).map(|n| libm::cos(math::TAU * n as f64 / 8.0 + 0.3)).collect();
        let s = drop_dc(&rfft(&RealArray::from_vec(x)).unwrap()).unwrap();
        let mut store = ParamStore::new();
        let layer = ComplexLinearLayer::new(&mut store, 8, 16, 2.0);
        let y = complex_interpolate(&layer, &store, &s, 32).unwrap().to_time().unwrap();
        for n in 0..32 {
            let expected = libm::cos(math::TAU * n as f64 / 8.0 + 0.3);
            assert!((y.data()[n] - expected).abs() < 1e-12);
        }
    }
}
