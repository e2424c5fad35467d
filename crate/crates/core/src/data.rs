//! Datasets, preprocessing and sliding windows.
//!
//! Raw values are stored time-major (`[T, V]`, the on-disk row order);
//! windows are variate-major (`[V, L]`, the model's layout).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::array::RealArray;
use crate::error::{dim_err, Error, Result};
use crate::layers::SCALE_FLOOR;
use crate::math;
use crate::rng::{normal, uniform, SeedStreams};

#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    /// `[T, V]`, NaN marks a missing value.
    pub values: RealArray,
    pub node_ids: Vec<String>,
    pub interval_minutes: u32,
}

impl RawDataset {
    pub fn new(values: RealArray, node_ids: Vec<String>, interval_minutes: u32) -> Result<Self> {
        let (t, v) = values.rows_cols();
        if t == 0 || v == 0 || node_ids.len() != v {
            return Err(dim_err!("{t} x {v} values with {} node ids", node_ids.len()));
        }
        for (i, id) in node_ids.iter().enumerate() {
            if node_ids[..i].contains(id) {
                return Err(Error::Config(format!("duplicate node id {id}")));
            }
        }
        Ok(RawDataset { values, node_ids, interval_minutes })
    }

    pub fn len(&self) -> usize {
        self.values.rows_cols().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_nodes(&self) -> usize {
        self.values.rows_cols().1
    }

    /// Series of one node.
    pub fn node(&self, v: usize) -> Vec<f64> {
        let n = self.n_nodes();
        self.values.data().iter().skip(v).step_by(n).copied().collect()
    }

    /// `[V, end − start]` block of the time range.
    pub fn block(&self, start: usize, end: usize) -> RealArray {
        let n = self.n_nodes();
        let mut out = Vec::with_capacity(n * (end - start));
        for v in 0..n {
            out.extend((start..end).map(|t| self.values.data()[t * n + v]));
        }
        RealArray::new(&[n, end - start], out).expect("block shape")
    }
}

/// Forward fill then backward fill, node by node.
pub fn impute(ds: &RawDataset) -> Result<RawDataset> {
    let (t, n) = ds.values.rows_cols();
    let mut out = ds.clone();
    let data = out.values.data_mut();
    for v in 0..n {
        let Some(first) = (0..t).find(|&i| !data[i * n + v].is_nan()) else {
            return Err(Error::Unimputable(ds.node_ids[v].clone()));
        };
        let mut last = data[first * n + v];
        for i in 0..t {
            let x = &mut data[i * n + v];
            if x.is_nan() {
                *x = last;
            } else {
                last = *x;
            }
        }
    }
    Ok(out)
}

/// Per-node mean and population standard deviation of the training range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NodeStats {
    /// Fits on rows `0..train_end`.
    pub fn fit(ds: &RawDataset, train_end: usize) -> Result<Self> {
        if train_end == 0 || train_end > ds.len() {
            return Err(Error::EmptySplit(format!("training range of {train_end} rows")));
        }
        if ds.values.data().iter().any(|x| x.is_nan()) {
            return Err(Error::Numeric("standardize needs imputed data".into()));
        }
        let (mean, std) = (0..ds.n_nodes())
            .map(|v| {
                let xs = &ds.node(v)[..train_end];
                let m = xs.iter().sum::<f64>() / xs.len() as f64;
                let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
                (m, math::sqrt(var).max(SCALE_FLOOR))
            })
            .unzip();
        Ok(NodeStats { mean, std })
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.mean.len() != n || self.std.len() != n {
            return Err(dim_err!("stats for {} nodes applied to {n}", self.mean.len()));
        }
        Ok(())
    }

    /// Maps a `[V, L]` block from standardized back to original units.
    pub fn invert_rows(&self, x: &RealArray) -> Result<RealArray> {
        let (rows, cols) = x.rows_cols();
        self.check(rows)?;
        let mut out = x.clone();
        for r in 0..rows {
            out.data_mut()[r * cols..(r + 1) * cols].iter_mut().for_each(|y| *y = *y * self.std[r] + self.mean[r]);
        }
        Ok(out)
    }
}

fn map_nodes(ds: &RawDataset, stats: &NodeStats, f: impl Fn(f64, f64, f64) -> f64) -> Result<RawDataset> {
    let n = ds.n_nodes();
    stats.check(n)?;
    let mut out = ds.clone();
    for (i, x) in out.values.data_mut().iter_mut().enumerate() {
        let v = i % n;
        *x = f(*x, stats.mean[v], stats.std[v]);
    }
    Ok(out)
}

pub fn standardize(ds: &RawDataset, stats: &NodeStats) -> Result<RawDataset> {
    map_nodes(ds, stats, |x, m, s| (x - m) / s)
}

pub fn destandardize(ds: &RawDataset, stats: &NodeStats) -> Result<RawDataset> {
    map_nodes(ds, stats, |x, m, s| x * s + m)
}

/// Fits on the training range of the 70/10/20 split and standardizes everything.
pub fn fit_standardize(ds: &RawDataset) -> Result<(RawDataset, NodeStats)> {
    let stats = NodeStats::fit(ds, SplitBounds::new(ds.len()).train_end)?;
    Ok((standardize(ds, &stats)?, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Contiguous time split: `[0, train_end)`, `[train_end, val_end)`, `[val_end, T)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitBounds {
    pub train_end: usize,
    pub val_end: usize,
    pub len: usize,
}

impl SplitBounds {
    pub fn new(len: usize) -> Self {
        SplitBounds { train_end: len * 7 / 10, val_end: len * 8 / 10, len }
    }

    pub fn range(&self, split: Split) -> (usize, usize) {
        match split {
            Split::Train => (0, self.train_end),
            Split::Val => (self.train_end, self.val_end),
            Split::Test => (self.val_end, self.len),
        }
    }
}

/// Number of windows needing `need` samples at offsets `0, stride, …` in `len` samples.
pub fn window_count(len: usize, need: usize, stride: usize) -> usize {
    if stride == 0 || need == 0 || len < need {
        0
    } else {
        (len - need) / stride + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesWindow {
    /// `[V, L_i]`
    pub lookback: RealArray,
    /// `[V, L_o]`, empty columns for reconstruction windows.
    pub horizon: RealArray,
    /// Absolute index of the first look-back sample.
    pub t0: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub windows: Vec<SeriesWindow>,
    pub split: Split,
    pub lookback: usize,
    pub horizon: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Windows of one split. Every window lies inside the split's range.
pub fn window_split(ds: &RawDataset, split: Split, l_i: usize, l_o: usize, stride: usize) -> Result<WindowedDataset> {
    let (start, end) = SplitBounds::new(ds.len()).range(split);
    let need = l_i + l_o;
    let count = window_count(end - start, need, stride);
    if count == 0 {
        return Err(Error::EmptySplit(format!(
            "{split:?} split has {} samples, a window needs {need} (stride {stride})",
            end - start
        )));
    }
    let windows = (0..count)
        .map(|k| {
            let t0 = start + k * stride;
            SeriesWindow { lookback: ds.block(t0, t0 + l_i), horizon: ds.block(t0 + l_i, t0 + need), t0 }
        })
        .collect();
    Ok(WindowedDataset { windows, split, lookback: l_i, horizon: l_o })
}

/// Train, validation and test windows with one stride.
pub fn split_and_window(ds: &RawDataset, l_i: usize, l_o: usize, stride: usize) -> Result<[WindowedDataset; 3]> {
    Ok([
        window_split(ds, Split::Train, l_i, l_o, stride)?,
        window_split(ds, Split::Val, l_i, l_o, stride)?,
        window_split(ds, Split::Test, l_i, l_o, stride)?,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_vars: usize,
    pub length: usize,
    pub periods: Vec<f64>,
    pub harmonics: usize,
    pub trend_slope: f64,
    pub noise_std: f64,
    /// Amplitude of the latent sinusoid shared by all nodes (at `periods[0]`).
    pub latent_amplitude: f64,
    pub interval_minutes: u32,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_vars: 8,
            length: 8000,
            periods: vec![24.0, 96.0],
            harmonics: 1,
            trend_slope: 1e-4,
            noise_std: 0.3,
            latent_amplitude: 2.0,
            interval_minutes: 5,
            seed: 7,
        }
    }
}

/// Sums of seeded sinusoids plus a linear trend and Gaussian noise.
///
/// Every node also carries the shared latent `a_v·sin(2πt/P₀ + φ)` with a
/// per-node gain `a_v ∈ [0.8, 1.2]·latent_amplitude`.
pub fn synth_generate(spec: &SynthSpec) -> Result<RawDataset> {
    if spec.n_vars == 0 || spec.length == 0 {
        return Err(Error::Config("synthetic data needs at least one node and one step".into()));
    }
    if spec.periods.iter().any(|&p| !(p >= 2.0)) {
        return Err(Error::Config("synthetic periods must be at least 2 samples".into()));
    }
    let streams = SeedStreams::new(spec.seed);
    let mut shape_rng = streams.stream("synth.shape");
    let mut noise_rng = streams.stream("synth.noise");
    let latent_phase = uniform(&mut shape_rng, 0.0, math::TAU);
    let (t_len, n) = (spec.length, spec.n_vars);
    let mut values = vec![0.0; t_len * n];
    for v in 0..n {
        let gain = spec.latent_amplitude * uniform(&mut shape_rng, 0.8, 1.2);
        let mut comps = Vec::new();
        for &p in &spec.periods {
            for h in 1..=spec.harmonics.max(1) {
                let a = uniform(&mut shape_rng, 0.2, 0.6) / h as f64;
                let phi = uniform(&mut shape_rng, 0.0, math::TAU);
                comps.push((a, h as f64 / p, phi));
            }
        }
        let p0 = spec.periods.first().copied().unwrap_or(1.0);
        for t in 0..t_len {
            let tf = t as f64;
            let mut x = spec.trend_slope * tf;
            if !spec.periods.is_empty() {
                x += gain * math::sin(math::TAU * tf / p0 + latent_phase);
            }
            for &(a, f, phi) in &comps {
                x += a * math::sin(math::TAU * f * tf + phi);
            }
            values[t * n + v] = x;
        }
    }
    // noise drawn time-major so a node's noise does not depend on V
    if spec.noise_std > 0.0 {
        values.iter_mut().for_each(|x| *x += spec.noise_std * normal(&mut noise_rng));
    }
    let ids = (0..n).map(|v| format!("node{v}")).collect();
    RawDataset::new(RealArray::new(&[t_len, n], values)?, ids, spec.interval_minutes)
}
