//! Point-forecast metrics and copy baselines.

use alloc::string::String;
use alloc::vec::Vec;

use crate::array::RealArray;
use crate::data::SeriesWindow;
use crate::error::{contract_err, dim_err, Error, Result};
use crate::math;

fn check(pred: &RealArray, truth: &RealArray) -> Result<()> {
    if pred.shape() != truth.shape() {
        return Err(dim_err!("prediction {:?} vs truth {:?}", pred.shape(), truth.shape()));
    }
    if pred.is_empty() {
        return Err(dim_err!("empty forecast"));
    }
    Ok(())
}

pub fn mse(pred: &RealArray, truth: &RealArray) -> Result<f64> {
    check(pred, truth)?;
    Ok(pred.data().iter().zip(truth.data()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

pub fn rmse(pred: &RealArray, truth: &RealArray) -> Result<f64> {
    mse(pred, truth).map(math::sqrt)
}

pub fn mae(pred: &RealArray, truth: &RealArray) -> Result<f64> {
    check(pred, truth)?;
    Ok(pred.data().iter().zip(truth.data()).map(|(p, t)| math::abs(p - t)).sum::<f64>() / pred.len() as f64)
}

/// Repeats each variate's last look-back value over the horizon.
pub fn persistence_baseline(w: &SeriesWindow) -> RealArray {
    let (v, l_i) = w.lookback.rows_cols();
    let l_o = w.horizon.rows_cols().1;
    let data = (0..v).flat_map(|r| core::iter::repeat_n(w.lookback.row(r)[l_i - 1], l_o)).collect();
    RealArray::new(&[v, l_o], data).expect("baseline shape")
}

/// Horizon step `h` copies look-back index `L_i − P + (h mod P)`.
pub fn seasonal_naive_baseline(w: &SeriesWindow, period: usize) -> Result<RealArray> {
    let (v, l_i) = w.lookback.rows_cols();
    let l_o = w.horizon.rows_cols().1;
    if period == 0 || period > l_i {
        return Err(contract_err!("seasonal period {period} outside [1, {l_i}]"));
    }
    let data = (0..v).flat_map(|r| (0..l_o).map(move |h| w.lookback.row(r)[l_i - period + h % period])).collect();
    RealArray::new(&[v, l_o], data)
}

/// Running sums for metrics aggregated over many windows.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorAccumulator {
    sq: Vec<f64>,
    abs: Vec<f64>,
    count: Vec<usize>,
    windows: usize,
}

impl ErrorAccumulator {
    pub fn new(n_vars: usize) -> Self {
        ErrorAccumulator { sq: alloc::vec![0.0; n_vars], abs: alloc::vec![0.0; n_vars], count: alloc::vec![0; n_vars], windows: 0 }
    }

    /// Adds the first `steps` horizon columns of one `[V, L]` forecast.
    pub fn add(&mut self, pred: &RealArray, truth: &RealArray, steps: usize) -> Result<()> {
        check(pred, truth)?;
        let (v, l) = pred.rows_cols();
        if v != self.sq.len() || steps == 0 || steps > l {
            return Err(dim_err!("{v} x {l} forecast scored over {steps} steps for {} variates", self.sq.len()));
        }
        for r in 0..v {
            for (p, t) in pred.row(r)[..steps].iter().zip(&truth.row(r)[..steps]) {
                self.sq[r] += (p - t) * (p - t);
                self.abs[r] += math::abs(p - t);
            }
            self.count[r] += steps;
        }
        self.windows += 1;
        Ok(())
    }

    pub fn report(&self, horizon: usize, node_ids: &[String]) -> Result<MetricReport> {
        let total: usize = self.count.iter().sum();
        if total == 0 {
            return Err(Error::EmptySplit("no forecasts scored".into()));
        }
        let per_node = node_ids
            .iter()
            .enumerate()
            .map(|(r, id)| NodeMetric {
                node_id: id.clone(),
                rmse: math::sqrt(self.sq[r] / self.count[r] as f64),
                mae: self.abs[r] / self.count[r] as f64,
            })
            .collect();
        Ok(MetricReport {
            rmse: math::sqrt(self.sq.iter().sum::<f64>() / total as f64),
            mae: self.abs.iter().sum::<f64>() / total as f64,
            horizon,
            n_windows: self.windows,
            per_node,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeMetric {
    pub node_id: String,
    pub rmse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub rmse: f64,
    pub mae: f64,
    pub horizon: usize,
    pub n_windows: usize,
    pub per_node: Vec<NodeMetric>,
}

/// Scores `forecaster` on every window, once per requested horizon
/// (each horizon is a prefix of the forecast). Errors are measured after
/// `to_original` maps both sides back to data units.
pub fn evaluate_horizons(
    windows: &[SeriesWindow],
    horizons: &[usize],
    node_ids: &[String],
    mut forecaster: impl FnMut(&SeriesWindow) -> Result<RealArray>,
    to_original: impl Fn(&RealArray) -> Result<RealArray>,
) -> Result<Vec<MetricReport>> {
    let n = node_ids.len();
    let mut accs: Vec<ErrorAccumulator> = horizons.iter().map(|_| ErrorAccumulator::new(n)).collect();
    for w in windows {
        let pred = to_original(&forecaster(w)?)?;
        let truth = to_original(&w.horizon)?;
        for (acc, &h) in accs.iter_mut().zip(horizons) {
            acc.add(&pred, &truth, h)?;
        }
    }
    accs.iter().zip(horizons).map(|(a, &h)| a.report(h, node_ids)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn arr(xs: &[f64]) -> RealArray {
        RealArray::from_vec(xs.to_vec())
    }

    #[test]
    fn metric_examples() {
        let (p, t) = (arr(&[0.0, 0.0]), arr(&[3.0, 4.0]));
        assert!((rmse(&p, &t).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(mae(&p, &t).unwrap(), 3.5);
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        assert!(matches!(rmse(&p, &arr(&[1.0])), Err(Error::Dimension(_))));
    }

    fn window(look: &[f64], l_o: usize) -> SeriesWindow {
        SeriesWindow {
            lookback: RealArray::new(&[1, look.len()], look.to_vec()).unwrap(),
            horizon: RealArray::zeros(&[1, l_o]),
            t0: 0,
        }
    }

    #[test]
    fn baselines() {
        let w = window(&[1.0, 2.0, 3.0, 7.0], 3);
        assert_eq!(persistence_baseline(&w).data(), &[7.0; 3]);
        assert_eq!(seasonal_naive_baseline(&w, 2).unwrap().data(), &[3.0, 7.0, 3.0]);
        assert_eq!(seasonal_naive_baseline(&w, 1).unwrap(), persistence_baseline(&w));
        assert!(matches!(seasonal_naive_baseline(&w, 5), Err(Error::Contract(_))));
    }

    #[test]
    fn accumulated_matches_concatenation() {
        let mut acc = ErrorAccumulator::new(1);
        let a = (RealArray::new(&[1, 2], vec![1.0, 2.0]).unwrap(), RealArray::new(&[1, 2], vec![0.0, 0.0]).unwrap());
        let b = (RealArray::new(&[1, 2], vec![3.0, -1.0]).unwrap(), RealArray::new(&[1, 2], vec![0.0, 1.0]).unwrap());
        acc.add(&a.0, &a.1, 2).unwrap();
        acc.add(&b.0, &b.1, 2).unwrap();
        let rep = acc.report(2, &["n".into()]).unwrap();
        let all = rmse(&arr(&[1.0, 2.0, 3.0, -1.0]), &arr(&[0.0, 0.0, 0.0, 1.0])).unwrap();
        assert!((rep.rmse - all).abs() < 1e-15);
        assert_eq!(rep.n_windows, 2);
    }
}
