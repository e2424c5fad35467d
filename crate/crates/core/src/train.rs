//! Loss assembly, mini-batch training and early stopping.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::array::RealArray;
use crate::data::SeriesWindow;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::metrics;
use crate::model::{FlowDraw, Model};
use crate::optim::{adam_step, AdamState};
use crate::param::{ParamGroup, ParamStore};
use crate::rng::SeedStreams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub weight_decay: f64,
    pub lambda_rec: f64,
    pub lambda_flow: f64,
    pub lambda_reg: f64,
    /// Flow `(x0, t)` draws per example per step.
    pub flow_draws: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 150,
            patience: 20,
            weight_decay: 1e-8,
            lambda_rec: 0.276,
            lambda_flow: 0.721,
            lambda_reg: 1e-6,
            flow_draws: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let rates = [self.lr, self.lambda_rec, self.lambda_flow];
        if rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) || !(self.lambda_reg >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("learning rate and loss weights must be positive and finite".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.flow_draws == 0 {
            return Err(Error::Config("batch_size, max_epochs and flow_draws must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub flow: f64,
    pub reg: f64,
    pub total: f64,
    pub lambda_rec: f64,
    pub lambda_flow: f64,
    pub lambda_reg: f64,
}

/// Mean squared error over every element.
pub fn reconstruction_loss(pred: &RealArray, target: &RealArray) -> Result<f64> {
    metrics::mse(pred, target)
}

/// `Σ‖θ‖²` over the flow head's parameters.
pub fn flow_regularizer(store: &ParamStore) -> f64 {
    store
        .iter()
        .filter(|(_, p)| p.group == ParamGroup::Flow)
        .map(|(_, p)| p.value.flat().iter().map(|w| w * w).sum::<f64>())
        .sum()
}

pub fn total_loss(recon: f64, flow: f64, store: &ParamStore, cfg: &TrainConfig) -> Result<LossBreakdown> {
    combine(recon, flow, flow_regularizer(store), cfg)
}

fn combine(recon: f64, flow: f64, reg: f64, cfg: &TrainConfig) -> Result<LossBreakdown> {
    if !(recon.is_finite() && flow.is_finite() && reg.is_finite()) {
        return Err(Error::Numeric(format!("loss components recon={recon} flow={flow} reg={reg}")));
    }
    Ok(LossBreakdown {
        recon,
        flow,
        reg,
        total: cfg.lambda_rec * recon + cfg.lambda_flow * flow + cfg.lambda_reg * reg,
        lambda_rec: cfg.lambda_rec,
        lambda_flow: cfg.lambda_flow,
        lambda_reg: cfg.lambda_reg,
    })
}

/// Zeroes the gradients, then accumulates the gradient of the batch loss
/// (mean of per-example losses plus the regularizer) into `model.store`.
/// `draws[i]` feeds example `i`.
pub fn batch_gradients(model: &mut Model, batch: &[&SeriesWindow], draws: &[Vec<FlowDraw>], cfg: &TrainConfig) -> Result<LossBreakdown> {
    if batch.is_empty() || draws.len() != batch.len() {
        return Err(Error::Dimension(format!("{} windows with {} draw sets", batch.len(), draws.len())));
    }
    model.store.zero_grad();
    let scale = 1.0 / batch.len() as f64;
    let (mut recon, mut flow) = (0.0, 0.0);
    for (w, d) in batch.iter().zip(draws) {
        let mut g = Graph::new();
        let ex = model.example_losses(&mut g, w, d)?;
        let mut terms = alloc::vec![(ex.recon, cfg.lambda_rec)];
        recon += g.scalar(ex.recon);
        if let Some(f) = ex.flow {
            flow += g.scalar(f);
            terms.push((f, cfg.lambda_flow));
        }
        let loss = g.weighted_sum(&terms)?;
        if !g.scalar(loss).is_finite() {
            return Err(Error::Numeric("non-finite example loss".into()));
        }
        g.backward(loss)?;
        g.accumulate_into(&mut model.store, scale)?;
    }
    let reg = if model.config.use_flow && cfg.lambda_reg > 0.0 {
        let mut g = Graph::new();
        let terms: Vec<(Var, f64)> = model
            .flow
            .param_ids()
            .map(|id| {
                let p = g.param(&model.store, id);
                (g.sum_squares(p), cfg.lambda_reg)
            })
            .collect();
        let loss = g.weighted_sum(&terms)?;
        g.backward(loss)?;
        g.accumulate_into(&mut model.store, 1.0)?;
        flow_regularizer(&model.store)
    } else {
        0.0
    };
    combine(recon * scale, flow * scale, reg, cfg)
}

/// Mean forecast-segment MSE over `windows` (the whole output when reconstructing).
pub fn validation_mse(model: &Model, windows: &[SeriesWindow]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::EmptySplit("no validation windows".into()));
    }
    let mut total = 0.0;
    for w in windows {
        total += metrics::mse(&model.forecast(w)?, model.forecast_truth(w))?;
    }
    Ok(total / windows.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without a strictly lower loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    pub since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: f64::INFINITY, best_epoch: 0, since_best: 0 }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            StopDecision::Improved
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub val_mse: f64,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub param_count: usize,
    pub stopped_early: bool,
    /// Whether inference keeps the flow correction after the validation gate.
    pub flow_correction: bool,
}

/// Hooks for the caller: a clock (the core has none) and a per-epoch callback.
pub trait TrainObserver {
    fn now_ms(&self) -> f64 {
        0.0
    }
    fn on_epoch(&mut self, _record: &EpochRecord) {}
}

impl TrainObserver for () {}

fn shuffle(idx: &mut [usize], rng: &mut impl Rng) {
    for i in (1..idx.len()).rev() {
        idx.swap(i, rng.random_range(0..=i));
    }
}

/// Trains `model` in place and restores the parameters of the best
/// validation epoch.
///
/// Early stopping follows the interpolation head's forecast MSE. When the
/// model applies a flow correction at inference, the correction is kept only
/// if it lowers validation MSE at the restored epoch.
pub fn train(model: &mut Model, train: &[SeriesWindow], val: &[SeriesWindow], cfg: &TrainConfig, observer: &mut impl TrainObserver) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySplit("no training windows".into()));
    }
    if val.is_empty() {
        return Err(Error::EmptySplit("no validation windows".into()));
    }
    let streams = SeedStreams::new(cfg.seed);
    let mut order_rng = streams.stream("train.order");
    let mut flow_rng = streams.stream("train.flow");
    let mut adam = AdamState::new(&model.store);
    let mut stopper = EarlyStopping::new(cfg.patience.max(1));
    let mut best = model.store.clone();
    let mut history = Vec::new();
    let mut stopped_early = false;
    let wants_correction = model.config.flow_correction;
    let start = observer.now_ms();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        shuffle(&mut order, &mut order_rng);
        let mut sums = LossBreakdown::default();
        let mut steps = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&SeriesWindow> = chunk.iter().map(|&i| &train[i]).collect();
            let draws: Vec<Vec<FlowDraw>> = batch
                .iter()
                .map(|_| if model.config.use_flow { model.draw_flow(&mut flow_rng, cfg.flow_draws) } else { Vec::new() })
                .collect();
            let diverged = |e: Error| Error::Divergence(format!("epoch {epoch} step {}: {e}", step + 1));
            let loss = batch_gradients(model, &batch, &draws, cfg).map_err(|e| match e {
                Error::Numeric(_) => diverged(e),
                other => other,
            })?;
            adam_step(&mut adam, &mut model.store, cfg.lr, cfg.weight_decay).map_err(diverged)?;
            sums.recon += loss.recon;
            sums.flow += loss.flow;
            sums.reg += loss.reg;
            steps += 1;
        }
        let n = steps as f64;
        let loss = combine(sums.recon / n, sums.flow / n, sums.reg / n, cfg)?;

        model.config.flow_correction = false;
        let val_mse = validation_mse(model, val)?;
        if !val_mse.is_finite() {
            return Err(Error::Divergence(format!("epoch {epoch}: validation loss {val_mse}")));
        }
        let record = EpochRecord { epoch, loss, val_mse, wall_time_ms: observer.now_ms() - start };
        observer.on_epoch(&record);
        history.push(record);
        match stopper.observe(epoch, val_mse) {
            StopDecision::Improved => best.clone_from(&model.store),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    model.store.copy_values_from(&best)?;
    if wants_correction {
        model.config.flow_correction = true;
        let corrected = validation_mse(model, val)?;
        model.config.flow_correction = corrected < stopper.best;
    }
    Ok(TrainReport {
        history,
        best_epoch: stopper.best_epoch,
        best_val_mse: stopper.best,
        param_count: model.param_count(),
        stopped_early,
        flow_correction: model.config.flow_correction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_arithmetic() {
        let cfg = TrainConfig { lambda_reg: 0.0, ..Default::default() };
        let b = combine(1.0, 1.0, 0.0, &cfg).unwrap();
        assert!((b.total - 0.997).abs() < 1e-12);
        assert!(matches!(combine(f64::NAN, 0.0, 0.0, &cfg), Err(Error::Numeric(_))));
        let p = RealArray::from_vec(alloc::vec![0.0, 0.0]);
        let t = RealArray::from_vec(alloc::vec![3.0, 4.0]);
        assert_eq!(reconstruction_loss(&p, &t).unwrap(), 12.5);
    }

    #[test]
    fn patience_on_worsening_curve() {
        let mut es = EarlyStopping::new(3);
        let mut epochs = 0;
        for (e, v) in [1.0, 2.0, 3.0, 4.0, 5.0, 6.0].into_iter().enumerate() {
            epochs += 1;
            if es.observe(e + 1, v) == StopDecision::Stop {
                break;
            }
        }
        assert_eq!(epochs, 4);
        assert_eq!(es.best_epoch, 1);
    }
}
