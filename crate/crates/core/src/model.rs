//! The assembled forecaster.
//!
//! ```text
//! window ─► MHA ─► RIN ─► rFFT ─► drop DC ─► LPF ─► complex linear ─► (+ flow correction)
//!                                                        │
//!          output ◄─ RIN⁻¹ ◄─ irFFT ◄─ prepend zero DC ◄─┘
//! ```
//!
//! In the forecast task the interpolation layer emits one series of
//! `L_i + L_o` samples whose first `L_i` samples are the backcast and whose
//! last `L_o` samples are the forecast. In the reconstruct task the input is
//! the window downsampled by an integer factor and the output is the window
//! at full resolution.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::array::RealArray;
use crate::data::SeriesWindow;
use crate::error::{dim_err, Error, Result};
use crate::flow::{flow_loss_graph, ode_sample};
use crate::graph::{Graph, Var};
use crate::layers::{ComplexLinearLayer, FlowHead, MhaBlock, RinAffine, RinStats};
use crate::math;
use crate::param::{ParamGroup, ParamStore};
use crate::rng::{normal, uniform, SeedStreams};
use crate::spectral::{LpfConfig, RealFft};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Forecast,
    Reconstruct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Shallow,
    Deep,
}

impl Preset {
    pub fn flow_depth(self) -> usize {
        match self {
            Preset::Shallow => 2,
            Preset::Deep => 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub task: Task,
    pub n_vars: usize,
    /// Look-back length `L_i` (forecast) or full segment length (reconstruct).
    pub lookback: usize,
    /// Forecast horizon `L_o`; unused when reconstructing.
    pub horizon: usize,
    /// Downsampling factor for the reconstruct task.
    pub downsample: usize,
    pub n_heads: usize,
    pub flow_depth: usize,
    pub flow_hidden: usize,
    pub lpf: LpfConfig,
    /// Resolved cutoff in bins. Filled from `lpf` when possible; automatic
    /// base periods need [`ModelConfig::resolve_cutoff`] with a data profile.
    pub cutoff: Option<usize>,
    pub use_mha: bool,
    pub use_rin: bool,
    pub use_lpf: bool,
    pub use_backcast: bool,
    /// Train the flow head.
    pub use_flow: bool,
    /// Apply the flow head's residual correction at inference.
    pub flow_correction: bool,
    pub ode_steps: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            task: Task::Forecast,
            n_vars: 32,
            lookback: 96,
            horizon: 96,
            downsample: 2,
            n_heads: 8,
            flow_depth: 2,
            flow_hidden: 64,
            lpf: LpfConfig::with_period(6, 24.0),
            cutoff: None,
            use_mha: true,
            use_rin: true,
            use_lpf: true,
            use_backcast: true,
            use_flow: true,
            flow_correction: false,
            ode_steps: 1,
        }
    }
}

impl ModelConfig {
    pub fn preset(preset: Preset, n_vars: usize, lookback: usize, horizon: usize) -> Self {
        let mut cfg = ModelConfig { n_vars, lookback, horizon, ..Default::default() };
        cfg.apply_preset(preset);
        cfg
    }

    /// Shallow: two hidden flow layers, correction off at inference.
    /// Deep: sixteen hidden flow layers, correction on.
    pub fn apply_preset(&mut self, preset: Preset) {
        self.flow_depth = preset.flow_depth();
        self.flow_correction = preset == Preset::Deep;
    }

    pub fn input_len(&self) -> usize {
        match self.task {
            Task::Forecast => self.lookback,
            Task::Reconstruct => self.lookback / self.downsample.max(1),
        }
    }

    pub fn output_len(&self) -> usize {
        match self.task {
            Task::Forecast => self.lookback + self.horizon,
            Task::Reconstruct => self.lookback,
        }
    }

    /// Interpolation rate `L_out / L_in`.
    pub fn eta(&self) -> f64 {
        self.output_len() as f64 / self.input_len() as f64
    }

    /// Spectrum bins before low-pass filtering.
    pub fn input_bins(&self) -> usize {
        self.input_len() / 2
    }

    pub fn output_bins(&self) -> usize {
        self.output_len() / 2
    }

    /// Bins entering the complex layer.
    pub fn k_in(&self) -> Result<usize> {
        if !self.use_lpf {
            return Ok(self.input_bins());
        }
        match self.cutoff {
            Some(c) if (1..=self.input_bins()).contains(&c) => Ok(c),
            Some(c) => Err(Error::Config(alloc::format!("cutoff {c} outside [1, {}]", self.input_bins()))),
            None => self.lpf.resolve_cutoff(self.input_len(), self.input_bins(), None),
        }
    }

    /// Fixes `cutoff` using a DC-excluded amplitude profile of the input
    /// grid (used when the base period is automatic).
    pub fn resolve_cutoff(&mut self, amplitude: &[f64]) -> Result<usize> {
        let c = self.lpf.resolve_cutoff(self.input_len(), self.input_bins(), Some(amplitude))?;
        self.cutoff = Some(c);
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: &str| Err(Error::Config(m.into()));
        if self.n_vars == 0 {
            return cfg_err("n_vars must be positive");
        }
        if self.task == Task::Reconstruct && (self.downsample == 0 || !self.lookback.is_multiple_of(self.downsample)) {
            return cfg_err("reconstruct needs a downsample factor dividing the segment length");
        }
        if self.task == Task::Forecast && self.horizon == 0 {
            return cfg_err("forecast horizon must be positive");
        }
        if !self.input_len().is_multiple_of(2) || self.input_len() < 4 || !self.output_len().is_multiple_of(2) {
            return cfg_err("input and output lengths must be even, input at least 4");
        }
        if self.use_mha && (self.n_heads == 0 || !self.input_len().is_multiple_of(self.n_heads)) {
            return Err(Error::Config(alloc::format!(
                "attention width {} is not divisible by {} heads",
                self.input_len(),
                self.n_heads
            )));
        }
        if self.ode_steps == 0 {
            return cfg_err("ode_steps must be at least 1");
        }
        self.k_in().map(|_| ())
    }
}

/// Flow state scaling applied to spectra before they reach the flow head.
fn flow_scale(output_len: usize) -> f64 {
    1.0 / math::sqrt(output_len as f64)
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub rin: RinAffine,
    pub mha: MhaBlock,
    pub interp: ComplexLinearLayer,
    pub flow: FlowHead,
    plan_in: Arc<RealFft>,
    plan_out: Arc<RealFft>,
}

/// Per-example training objective terms, recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct ExampleLosses {
    pub recon: Var,
    pub flow: Option<Var>,
}

/// One base draw for the flow objective of one example.
#[derive(Debug, Clone)]
pub struct FlowDraw {
    pub x0: RealArray,
    pub t: f64,
}

impl Model {
    /// Builds and initializes every block from named streams of `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let streams = SeedStreams::new(seed);
        let mut store = ParamStore::new();
        let v = config.n_vars;
        let rin = RinAffine::new(&mut store, v);
        // head count does not change parameter shapes, so a disabled block tolerates any value
        let heads = if config.use_mha { config.n_heads } else { 1 };
        let mha = MhaBlock::new(&mut store, config.input_len(), heads, &mut streams.stream("init.mha"))?;
        let interp = ComplexLinearLayer::new(&mut store, config.k_in()?, config.output_bins(), config.eta());
        let flow = FlowHead::new(
            &mut store,
            2 * config.output_bins(),
            config.flow_depth,
            config.flow_hidden,
            &mut streams.stream("init.flow"),
        )?;
        for p in store.iter_mut() {
            p.trainable = match p.group {
                ParamGroup::Attention => config.use_mha,
                ParamGroup::Rin => config.use_rin,
                ParamGroup::Interpolation => true,
                ParamGroup::Flow => config.use_flow,
            };
        }
        Ok(Model {
            plan_in: Arc::new(RealFft::new(config.input_len())),
            plan_out: Arc::new(RealFft::new(config.output_len())),
            config,
            store,
            rin,
            mha,
            interp,
            flow,
        })
    }

    /// Trainable scalar count (complex weights count twice).
    pub fn param_count(&self) -> usize {
        self.store.count_trainable()
    }

    pub fn flow_enabled_at_inference(&self) -> bool {
        self.config.use_flow && self.config.flow_correction
    }

    /// `n` independent `(x0 ~ N(0, I), t ~ U[0, 1))` draws shaped like the flow state.
    pub fn draw_flow(&self, rng: &mut impl Rng, n: usize) -> Vec<FlowDraw> {
        let shape = [self.config.n_vars, 2 * self.config.output_bins()];
        (0..n)
            .map(|_| {
                let x0 = (0..shape[0] * shape[1]).map(|_| normal(rng)).collect();
                FlowDraw { x0: RealArray::new(&shape, x0).expect("draw shape"), t: uniform(rng, 0.0, 1.0) }
            })
            .collect()
    }

    /// `[V, L_in]` model input for a window.
    pub fn model_input(&self, w: &SeriesWindow) -> Result<RealArray> {
        match self.config.task {
            Task::Forecast => Ok(w.lookback.clone()),
            Task::Reconstruct => downsample(&w.lookback, self.config.downsample),
        }
    }

    /// `[V, L_out]` supervision target for a window.
    pub fn target(&self, w: &SeriesWindow) -> Result<RealArray> {
        match self.config.task {
            Task::Forecast => concat_rows(&w.lookback, &w.horizon),
            Task::Reconstruct => Ok(w.lookback.clone()),
        }
    }

    fn check_input(&self, x: &RealArray) -> Result<()> {
        let (v, l) = x.rows_cols();
        if v != self.config.n_vars || l != self.config.input_len() {
            return Err(dim_err!(
                "model expects [{}, {}] input, got {:?}",
                self.config.n_vars,
                self.config.input_len(),
                x.shape()
            ));
        }
        Ok(())
    }

    /// Input → interpolated split-real spectrum `[V, 2·K_out]`.
    pub fn encode(&self, g: &mut Graph, x: Var) -> Result<(Var, RinStats)> {
        let cfg = &self.config;
        let x = if cfg.use_mha { self.mha.forward(g, &self.store, x)? } else { x };
        let (z, stats) = if cfg.use_rin {
            self.rin.normalize(g, &self.store, x)?
        } else {
            (x, RinStats::identity(cfg.n_vars))
        };
        let spec = g.rfft_rows(z, &self.plan_in)?;
        let kept = g.slice_cols(spec, 2, 2 * self.interp.k_in)?;
        Ok((self.interp.forward(g, &self.store, kept)?, stats))
    }

    /// Interpolated spectrum → output series `[V, L_out]` in input units.
    pub fn decode(&self, g: &mut Graph, spec: Var, stats: &RinStats) -> Result<Var> {
        let rows = g.value(spec).rows_cols().0;
        let dc = g.input(RealArray::zeros(&[rows, 2]));
        let full = g.concat_cols(&[dc, spec])?;
        let y = g.irfft_rows(full, &self.plan_out)?;
        if self.config.use_rin {
            self.rin.denormalize(g, &self.store, y, stats)
        } else {
            Ok(y)
        }
    }

    /// Split-real residual between the target's spectrum and `spec`, plus
    /// the conditioning vector, both scaled for the flow head.
    fn flow_pair(&self, spec: &RealArray, stats: &RinStats, target: &RealArray) -> Result<(RealArray, RealArray)> {
        let s = flow_scale(self.config.output_len());
        let normalized = if self.config.use_rin {
            self.rin.apply_constant(&self.store, target, stats)
        } else {
            target.clone()
        };
        let (rows, width) = spec.rows_cols();
        let l = self.config.output_len();
        let mut residual = Vec::with_capacity(rows * width);
        for r in 0..rows {
            let full = self.plan_out.forward(normalized.row(r));
            let pred = spec.row(r);
            for (k, z) in full.iter().skip(1).enumerate() {
                residual.push((z.re - pred[2 * k]) * s);
                residual.push((z.im - pred[2 * k + 1]) * s);
            }
        }
        debug_assert_eq!(residual.len(), rows * width, "output grid of {l} samples");
        let cond = spec.map(|v| v * s);
        Ok((RealArray::new(&[rows, width], residual)?, cond))
    }

    /// Records the per-example reconstruction and flow losses. The flow
    /// loss averages over `draws`; none means no flow term.
    pub fn example_losses(&self, g: &mut Graph, w: &SeriesWindow, draws: &[FlowDraw]) -> Result<ExampleLosses> {
        let input = self.model_input(w)?;
        self.check_input(&input)?;
        let target = self.target(w)?;
        let x = g.input(input);
        let (spec, stats) = self.encode(g, x)?;
        let out = self.decode(g, spec, &stats)?;

        let cfg = &self.config;
        let (pred, tgt) = if cfg.task == Task::Forecast && !cfg.use_backcast {
            let pred = g.slice_cols(out, cfg.lookback, cfg.horizon)?;
            (pred, g.input(w.horizon.clone()))
        } else {
            (out, g.input(target.clone()))
        };
        let diff = g.sub(pred, tgt)?;
        let recon = g.mean_square(diff);

        let flow = if cfg.use_flow && !draws.is_empty() {
            let (x1, cond) = self.flow_pair(g.value(spec), &stats, &target)?;
            let rows = x1.rows_cols().0;
            let w = 1.0 / draws.len() as f64;
            let mut terms = Vec::with_capacity(draws.len());
            for d in draws {
                terms.push((flow_loss_graph(g, &self.flow, &self.store, &d.x0, &x1, &cond, &vec![d.t; rows])?, w));
            }
            Some(if terms.len() == 1 { terms[0].0 } else { g.weighted_sum(&terms)? })
        } else {
            None
        };
        Ok(ExampleLosses { recon, flow })
    }

    /// Full output `[V, L_out]` for a `[V, L_in]` input. Applies the flow
    /// correction (integrated from `x0 = 0`, the mean of the base
    /// distribution) when enabled.
    pub fn predict(&self, input: &RealArray) -> Result<RealArray> {
        self.predict_from(input, None)
    }

    /// Like [`Model::predict`] but integrates the correction from a base draw
    /// `x0 ~ N(0, I)`.
    pub fn predict_sampled(&self, input: &RealArray, rng: &mut impl Rng) -> Result<RealArray> {
        let x0 = self.draw_flow(rng, 1).remove(0).x0;
        self.predict_from(input, Some(x0))
    }

    fn predict_from(&self, input: &RealArray, x0: Option<RealArray>) -> Result<RealArray> {
        self.check_input(input)?;
        let mut g = Graph::new();
        let x = g.input(input.clone().reshape(&[self.config.n_vars, self.config.input_len()])?);
        let (spec, stats) = self.encode(&mut g, x)?;
        let spec = if self.flow_enabled_at_inference() {
            let s = flow_scale(self.config.output_len());
            let cond = g.value(spec).map(|v| v * s);
            let x0 = x0.unwrap_or_else(|| RealArray::zeros(cond.shape()));
            let residual = ode_sample(&self.flow, &self.store, &x0, &cond, self.config.ode_steps)?;
            let correction = g.input(residual.map(|v| v / s));
            g.add(spec, correction)?
        } else {
            spec
        };
        let out = self.decode(&mut g, spec, &stats)?;
        Ok(g.value(out).clone())
    }

    /// Forecast segment `[V, L_o]` (forecast task) or the full reconstruction.
    pub fn forecast(&self, w: &SeriesWindow) -> Result<RealArray> {
        let full = self.predict(&self.model_input(w)?)?;
        match self.config.task {
            Task::Forecast => slice_cols(&full, self.config.lookback, self.config.horizon),
            Task::Reconstruct => Ok(full),
        }
    }

    /// Ground truth aligned with [`Model::forecast`].
    pub fn forecast_truth<'a>(&self, w: &'a SeriesWindow) -> &'a RealArray {
        match self.config.task {
            Task::Forecast => &w.horizon,
            Task::Reconstruct => &w.lookback,
        }
    }
}

/// Keeps every `factor`-th sample of each row, starting at the first.
pub fn downsample(x: &RealArray, factor: usize) -> Result<RealArray> {
    let (rows, cols) = x.rows_cols();
    if factor == 0 || cols % factor != 0 {
        return Err(dim_err!("cannot downsample {cols} samples by {factor}"));
    }
    let data = (0..rows).flat_map(|r| x.row(r).iter().step_by(factor).copied().collect::<Vec<_>>()).collect();
    RealArray::new(&[rows, cols / factor], data)
}

pub fn concat_rows(a: &RealArray, b: &RealArray) -> Result<RealArray> {
    let ((ra, ca), (rb, cb)) = (a.rows_cols(), b.rows_cols());
    if ra != rb {
        return Err(dim_err!("{ra} rows vs {rb} rows"));
    }
    let mut data = Vec::with_capacity(ra * (ca + cb));
    for r in 0..ra {
        data.extend_from_slice(a.row(r));
        data.extend_from_slice(b.row(r));
    }
    RealArray::new(&[ra, ca + cb], data)
}

pub fn slice_cols(x: &RealArray, start: usize, len: usize) -> Result<RealArray> {
    let (rows, cols) = x.rows_cols();
    if start + len > cols {
        return Err(dim_err!("columns {start}..{} of {cols}", start + len));
    }
    let data = (0..rows).flat_map(|r| x.row(r)[start..start + len].to_vec()).collect();
    RealArray::new(&[rows, len], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_parameter_budget() {
        let shallow = Model::new(ModelConfig::preset(Preset::Shallow, 32, 96, 96), 0).unwrap();
        let deep = Model::new(ModelConfig::preset(Preset::Deep, 32, 96, 96), 0).unwrap();
        // rin 64 + mha 37248 + interp 4800 + flow head
        assert_eq!(shallow.param_count(), 64 + 37_248 + 4_800 + 41_792);
        assert_eq!(deep.param_count(), 64 + 37_248 + 4_800 + 100_032);
        assert_eq!(shallow.interp.k_in, 24);
        assert_eq!(shallow.interp.k_out, 96);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ModelConfig::preset(Preset::Shallow, 4, 96, 96);
        cfg.n_heads = 7;
        assert!(matches!(Model::new(cfg.clone(), 0), Err(Error::Config(_))));
        cfg.use_mha = false;
        assert!(Model::new(cfg, 0).is_ok());
        let cfg = ModelConfig { task: Task::Reconstruct, lookback: 96, downsample: 5, ..Default::default() };
        assert!(Model::new(cfg, 0).is_err());
    }

    #[test]
    fn downsample_keeps_every_mth() {
        let x = RealArray::new(&[2, 6], (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(downsample(&x, 3).unwrap().data(), &[0.0, 3.0, 6.0, 9.0]);
        assert!(downsample(&x, 4).is_err());
    }
}
