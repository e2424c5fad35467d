use freqflow_core::data::{split_and_window, synth_generate, SeriesWindow, SynthSpec};
use freqflow_core::metrics::{
    evaluate_horizons, mae, persistence_baseline, rmse, seasonal_naive_baseline, ErrorAccumulator,
};
use freqflow_core::RealArray;
use proptest::prelude::*;

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..60).prop_flat_map(|n| (prop::collection::vec(-1e3f64..1e3, n), prop::collection::vec(-1e3f64..1e3, n)))
}

fn arr(x: &[f64]) -> RealArray {
    RealArray::from_vec(x.to_vec())
}

proptest! {
    #[test]
    fn rmse_dominates_mae((p, t) in pair()) {
        let (r, m) = (rmse(&arr(&p), &arr(&t)).unwrap(), mae(&arr(&p), &arr(&t)).unwrap());
        prop_assert!(m >= 0.0);
        prop_assert!(r >= m * (1.0 - 1e-12));
    }

    #[test]
    fn metrics_ignore_joint_permutation((p, t) in pair(), rot in 0usize..60) {
        let n = p.len();
        // i ↦ 7i + rot is a bijection only when 7 ∤ n
        prop_assume!(n % 7 != 0);
        let pp: Vec<f64> = (0..n).map(|i| p[(i * 7 + rot) % n]).collect();
        let pt: Vec<f64> = (0..n).map(|i| t[(i * 7 + rot) % n]).collect();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + b.abs());
        prop_assert!(close(rmse(&arr(&pp), &arr(&pt)).unwrap(), rmse(&arr(&p), &arr(&t)).unwrap()));
        prop_assert!(close(mae(&arr(&pp), &arr(&pt)).unwrap(), mae(&arr(&p), &arr(&t)).unwrap()));
    }

    #[test]
    fn mae_is_homogeneous((p, t) in pair(), a in -10.0f64..10.0) {
        let scale = |x: &[f64]| arr(&x.iter().map(|v| a * v).collect::<Vec<_>>());
        let lhs = mae(&scale(&p), &scale(&t)).unwrap();
        let rhs = a.abs() * mae(&arr(&p), &arr(&t)).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs));
    }

    #[test]
    fn aggregate_equals_concatenation(windows in 1usize..6, v in 1usize..4, l in 1usize..8, data in prop::collection::vec(-50.0f64..50.0, 2 * 5 * 3 * 7)) {
        let mut acc = ErrorAccumulator::new(v);
        let (mut all_p, mut all_t) = (Vec::new(), Vec::new());
        for w in 0..windows {
            let take = |off: usize| (0..v * l).map(|i| data[(off + w * v * l + i) % data.len()]).collect::<Vec<f64>>();
            let (p, t) = (take(0), take(97));
            acc.add(&RealArray::new(&[v, l], p.clone()).unwrap(), &RealArray::new(&[v, l], t.clone()).unwrap(), l).unwrap();
            all_p.extend(p);
            all_t.extend(t);
        }
        let ids: Vec<String> = (0..v).map(|i| format!("n{i}")).collect();
        let report = acc.report(l, &ids).unwrap();
        prop_assert_eq!(report.n_windows, windows);
        prop_assert!((report.rmse - rmse(&arr(&all_p), &arr(&all_t)).unwrap()).abs() < 1e-9);
        prop_assert!((report.mae - mae(&arr(&all_p), &arr(&all_t)).unwrap()).abs() < 1e-9);
    }
}

fn window(look: Vec<f64>, horizon: Vec<f64>) -> SeriesWindow {
    let (li, lo) = (look.len(), horizon.len());
    SeriesWindow { lookback: RealArray::new(&[1, li], look).unwrap(), horizon: RealArray::new(&[1, lo], horizon).unwrap(), t0: 0 }
}

#[test]
fn baseline_contracts() {
    let periodic: Vec<f64> = (0..40).map(|t| [1.0, 5.0, -2.0, 0.5][t % 4]).collect();
    let w = window(periodic[..24].to_vec(), periodic[24..].to_vec());
    assert_eq!(rmse(&seasonal_naive_baseline(&w, 4).unwrap(), &w.horizon).unwrap(), 0.0);
    assert_eq!(seasonal_naive_baseline(&w, 1).unwrap(), persistence_baseline(&w));
    assert!(seasonal_naive_baseline(&w, 25).is_err());
    let flat = window(vec![7.0; 5], vec![7.0; 3]);
    assert_eq!(persistence_baseline(&flat).data(), &[7.0; 3]);
}

#[test]
fn baselines_on_the_fixture() {
    let ds = synth_generate(&SynthSpec::default()).unwrap();
    let [_, _, test] = split_and_window(&ds, 96, 96, 96).unwrap();
    let ids = ds.node_ids.clone();
    let score = |f: &dyn Fn(&SeriesWindow) -> RealArray| {
        evaluate_horizons(&test.windows, &[96], &ids, |w| Ok(f(w)), |x| Ok(x.clone())).unwrap()[0].rmse
    };
    let persistence = score(&persistence_baseline);
    let seasonal = score(&|w| seasonal_naive_baseline(w, 96).unwrap());
    assert!(persistence > 0.5, "persistence rmse {persistence}");
    assert!(seasonal < persistence, "seasonal {seasonal} vs persistence {persistence}");
}
