//! Real FFT, the DC-excluded spectrum convention and the frequency-domain
//! utilities built on it (low-pass filter, zero padding, time shift).
//!
//! Normalization: the forward transform is unnormalized, the inverse divides
//! by `L`. A [`Spectrum`] never stores the DC bin: coefficient `k` is the
//! frequency `k + 1` cycles per `source_length` samples, and for even
//! lengths the Nyquist bin is the last coefficient.

mod fft;

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use fft::{FftPlan, RealFft};

use crate::array::{Complex, ComplexArray, RealArray};
use crate::error::{contract_err, dim_err, Error, Result};
use crate::math::{self, TAU};

/// Tolerance for the imaginary part of the DC and Nyquist bins in [`irfft`].
pub const REAL_BIN_TOLERANCE: f64 = 1e-9;

fn as_rows(x: &RealArray) -> (usize, usize) {
    if x.shape().len() <= 1 {
        (1, x.len())
    } else {
        x.rows_cols()
    }
}

fn out_shape(input: &[usize], last: usize) -> Vec<usize> {
    let mut s = input.to_vec();
    match s.last_mut() {
        Some(l) => *l = last,
        None => s.push(last),
    }
    s
}

/// Row-wise real FFT. The last axis is the time axis and must have even length ≥ 4.
pub fn rfft(x: &RealArray) -> Result<ComplexArray> {
    let (rows, l) = as_rows(x);
    if l % 2 != 0 || l < 4 {
        return Err(contract_err!("rfft needs an even length >= 4, got {l}"));
    }
    let plan = RealFft::new(l);
    let mut out = Vec::with_capacity(rows * plan.bins());
    for r in 0..rows {
        out.extend(plan.forward(&x.data()[r * l..(r + 1) * l]));
    }
    ComplexArray::from_complex(&out_shape(x.shape(), plan.bins()), &out)
}

/// Row-wise inverse real FFT back to `l` samples.
pub fn irfft(spec: &ComplexArray, l: usize) -> Result<RealArray> {
    if !l.is_multiple_of(2) || l < 2 {
        return Err(contract_err!("irfft needs an even output length, got {l}"));
    }
    let bins = l / 2 + 1;
    let last = spec.shape().last().copied().unwrap_or(0);
    if last != bins {
        return Err(dim_err!("irfft to length {l} needs {bins} bins, got {last}"));
    }
    let rows = spec.len() / bins;
    let plan = RealFft::new(l);
    let mut out = Vec::with_capacity(rows * l);
    for r in 0..rows {
        let row: Vec<Complex> = (0..bins).map(|k| spec.get(r * bins + k)).collect();
        for (name, k) in [("DC", 0), ("Nyquist", bins - 1)] {
            if row[k].im.abs() > REAL_BIN_TOLERANCE {
                return Err(contract_err!("{name} bin of row {r} has imaginary part {:e}", row[k].im));
            }
        }
        out.extend(plan.inverse(&row));
    }
    RealArray::new(&out_shape(spec.shape(), l), out)
}

/// Direct O(L²) evaluation of the DFT sum for bins `0..=L/2`.
pub fn naive_dft(x: &RealArray) -> ComplexArray {
    let (rows, l) = as_rows(x);
    let bins = l / 2 + 1;
    let mut out = Vec::with_capacity(rows * bins);
    for r in 0..rows {
        let row = &x.data()[r * l..(r + 1) * l];
        for k in 0..bins {
            let mut acc = Complex::ZERO;
            for (n, &v) in row.iter().enumerate() {
                // reduce kn mod L before scaling to keep the angle accurate
                let angle = -TAU * ((k * n) % l) as f64 / l as f64;
                acc = acc + Complex::cis(angle).scale(v);
            }
            out.push(acc);
        }
    }
    ComplexArray::from_complex(&out_shape(x.shape(), bins), &out).expect("shape built from input")
}

/// How the period used by the harmonic cutoff heuristic is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BasePeriod {
    Samples(f64),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl BasePeriod {
    pub const AUTO: BasePeriod = BasePeriod::Auto(AutoTag::Auto);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LpfConfig {
    pub n_harmonics: usize,
    pub base_period: BasePeriod,
    pub explicit_cutoff: Option<usize>,
}

impl Default for LpfConfig {
    fn default() -> Self {
        LpfConfig { n_harmonics: 6, base_period: BasePeriod::AUTO, explicit_cutoff: None }
    }
}

impl LpfConfig {
    pub fn with_period(n_harmonics: usize, period: f64) -> Self {
        LpfConfig { n_harmonics, base_period: BasePeriod::Samples(period), explicit_cutoff: None }
    }

    pub fn explicit(cutoff: usize) -> Self {
        LpfConfig { explicit_cutoff: Some(cutoff), ..Default::default() }
    }

    /// Cutoff bin count for a spectrum of `bins` coefficients taken from
    /// `source_length` samples. `amplitude` is the per-bin amplitude profile
    /// used by the automatic period detector (e.g. the training-set mean).
    pub fn resolve_cutoff(&self, source_length: usize, bins: usize, amplitude: Option<&[f64]>) -> Result<usize> {
        if let Some(c) = self.explicit_cutoff {
            if c < 1 || c > bins {
                return Err(Error::Config(alloc::format!("cutoff {c} outside [1, {bins}]")));
            }
            return Ok(c);
        }
        if self.n_harmonics < 1 {
            return Err(Error::Config("n_harmonics must be at least 1".into()));
        }
        let period = match self.base_period {
            BasePeriod::Samples(p) if p > 0.0 => p,
            BasePeriod::Samples(p) => return Err(Error::Config(alloc::format!("base period {p} must be positive"))),
            BasePeriod::Auto(_) => {
                let amp = amplitude.ok_or_else(|| Error::Config("automatic base period needs an amplitude profile".into()))?;
                detect_base_period(amp, source_length)?
            }
        };
        let c = math::ceil(self.n_harmonics as f64 * source_length as f64 / period - 1e-9) as usize;
        Ok(c.clamp(1, bins.max(1)))
    }
}

/// `L / (argmax bin + 1)` over a DC-excluded amplitude profile.
pub fn detect_base_period(amplitude: &[f64], source_length: usize) -> Result<f64> {
    let (idx, _) = amplitude
        .iter()
        .enumerate()
        .fold((None, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (Some(i), v) } else { (bi, bv) });
    let idx = idx.ok_or_else(|| Error::Config("empty amplitude profile".into()))?;
    Ok(source_length as f64 / (idx + 1) as f64)
}

/// DC-excluded spectrum of one or more variates.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// `[V, K]` coefficients, bin `k` ↔ `k + 1` cycles per `source_length`.
    pub coeffs: ComplexArray,
    pub source_length: usize,
    pub nyquist_included: bool,
}

impl Spectrum {
    pub fn new(coeffs: ComplexArray, source_length: usize) -> Result<Self> {
        let s = Spectrum { nyquist_included: false, coeffs, source_length };
        let k = s.bins();
        if k > source_length / 2 {
            return Err(dim_err!("{k} bins exceed {} for length {source_length}", source_length / 2));
        }
        Ok(Spectrum { nyquist_included: source_length.is_multiple_of(2) && k == source_length / 2, ..s })
    }

    pub fn bins(&self) -> usize {
        self.coeffs.shape().last().copied().unwrap_or(0)
    }

    pub fn variates(&self) -> usize {
        self.coeffs.len().checked_div(self.bins()).unwrap_or(0)
    }

    pub fn get(&self, variate: usize, bin: usize) -> Complex {
        self.coeffs.get(variate * self.bins() + bin)
    }

    /// Prepends a zero DC bin, fills missing high bins with zeros and inverts
    /// back to `source_length` samples per variate. The Nyquist imaginary
    /// part is dropped.
    pub fn to_time(&self) -> Result<RealArray> {
        let l = self.source_length;
        let full = l / 2 + 1;
        let (v, k) = (self.variates(), self.bins());
        let mut spec = ComplexArray::zeros(&[v, full]);
        for r in 0..v {
            for b in 0..k {
                let mut z = self.get(r, b);
                if b + 1 == l / 2 {
                    z.im = 0.0;
                }
                spec.set(r * full + b + 1, z);
            }
        }
        irfft(&spec, l)
    }

    /// Split-real flattening `[re0, im0, re1, im1, ...]` of one variate.
    pub fn split_real(&self, variate: usize) -> Vec<f64> {
        let k = self.bins();
        self.coeffs.interleaved()[2 * variate * k..2 * (variate + 1) * k].to_vec()
    }

    /// Mean amplitude per bin across variates.
    pub fn mean_amplitude(&self) -> Vec<f64> {
        let (v, k) = (self.variates(), self.bins());
        let mut amp = vec![0.0; k];
        for r in 0..v {
            for b in 0..k {
                amp[b] += self.get(r, b).amplitude() / v as f64;
            }
        }
        amp
    }
}

/// Removes the DC bin of a full rFFT layout. The source must be zero-mean:
/// `|X[0]| < 1e-8·L` for every row.
pub fn drop_dc(full: &ComplexArray) -> Result<Spectrum> {
    let bins = full.shape().last().copied().unwrap_or(0);
    if bins < 2 {
        return Err(dim_err!("full spectrum needs at least 2 bins, got {bins}"));
    }
    let l = 2 * (bins - 1);
    let tolerance = 1e-8 * l as f64;
    let rows = full.len() / bins;
    for r in 0..rows {
        let magnitude = full.get(r * bins).amplitude();
        if magnitude >= tolerance {
            return Err(Error::DcLeak { magnitude, tolerance });
        }
    }
    Ok(strip_dc(full))
}

/// [`drop_dc`] without the zero-mean check, for spectra of arbitrary signals.
pub fn strip_dc(full: &ComplexArray) -> Spectrum {
    let bins = full.shape().last().copied().unwrap_or(0);
    let rows = full.len() / bins.max(1);
    let k = bins.saturating_sub(1);
    let mut coeffs = ComplexArray::zeros(&[rows, k]);
    for r in 0..rows {
        for b in 0..k {
            coeffs.set(r * k + b, full.get(r * bins + b + 1));
        }
    }
    Spectrum { coeffs, source_length: 2 * k, nyquist_included: true }
}

/// Keeps the first `c` bins; `c` comes from [`LpfConfig::resolve_cutoff`]
/// using this spectrum's own mean amplitude when the base period is automatic.
pub fn low_pass(s: &Spectrum, cfg: &LpfConfig) -> Result<Spectrum> {
    let amp = s.mean_amplitude();
    let c = cfg.resolve_cutoff(s.source_length, s.bins(), Some(&amp))?;
    Ok(truncate(s, c))
}

pub(crate) fn truncate(s: &Spectrum, c: usize) -> Spectrum {
    let (v, k) = (s.variates(), s.bins());
    let c = c.min(k);
    let mut coeffs = ComplexArray::zeros(&[v, c]);
    for r in 0..v {
        for b in 0..c {
            coeffs.set(r * c + b, s.get(r, b));
        }
    }
    Spectrum { coeffs, source_length: s.source_length, nyquist_included: s.nyquist_included && c == k }
}

/// Appends zero bins up to `target_bins`; the result describes a signal of
/// `2 · target_bins` samples.
pub fn zero_pad_to(s: &Spectrum, target_bins: usize) -> Result<Spectrum> {
    let (v, k) = (s.variates(), s.bins());
    if target_bins < k {
        return Err(contract_err!("cannot pad {k} bins down to {target_bins}"));
    }
    let mut coeffs = ComplexArray::zeros(&[v, target_bins]);
    for r in 0..v {
        for b in 0..k {
            coeffs.set(r * target_bins + b, s.get(r, b));
        }
    }
    Ok(Spectrum { coeffs, source_length: 2 * target_bins, nyquist_included: true })
}

/// Delays the signal by `tau` samples: bin `k` is rotated by `-2π·(k+1)·τ/L`.
pub fn time_shift(s: &Spectrum, tau: f64) -> Spectrum {
    let (v, k) = (s.variates(), s.bins());
    let l = s.source_length as f64;
    let mut out = s.clone();
    for b in 0..k {
        let rot = Complex::cis(-TAU * (b + 1) as f64 * tau / l);
        for r in 0..v {
            out.coeffs.set(r * k + b, s.get(r, b) * rot);
        }
    }
    out
}
