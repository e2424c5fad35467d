use freqflow_core::data::{
    destandardize, fit_standardize, impute, standardize, synth_generate, window_count, window_split, NodeStats, RawDataset, Split,
    SplitBounds, SynthSpec,
};
use freqflow_core::spectral::{rfft, strip_dc};
use freqflow_core::RealArray;
use proptest::prelude::*;

fn dataset(t: usize, v: usize, values: Vec<f64>) -> RawDataset {
    RawDataset::new(RealArray::new(&[t, v], values).unwrap(), (0..v).map(|i| format!("n{i}")).collect(), 5).unwrap()
}

fn with_gaps() -> impl Strategy<Value = (usize, usize, Vec<Option<f64>>)> {
    (1usize..30, 1usize..4).prop_flat_map(|(t, v)| {
        (Just(t), Just(v), prop::collection::vec(prop::option::weighted(0.7, -100.0f64..100.0), t * v))
    })
}

proptest! {
    #[test]
    fn impute_is_idempotent_and_keeps_observations((t, v, cells) in with_gaps()) {
        let values: Vec<f64> = cells.iter().map(|c| c.unwrap_or(f64::NAN)).collect();
        let ds = dataset(t, v, values.clone());
        let observed_everywhere = (0..v).all(|n| (0..t).any(|i| cells[i * v + n].is_some()));
        match impute(&ds) {
            Ok(once) => {
                prop_assert!(observed_everywhere);
                prop_assert!(once.values.data().iter().all(|x| !x.is_nan()));
                for (a, b) in once.values.data().iter().zip(&values) {
                    if !b.is_nan() {
                        prop_assert_eq!(a, b);
                    }
                }
                prop_assert_eq!(impute(&once).unwrap(), once);
            }
            Err(_) => prop_assert!(!observed_everywhere),
        }
    }

    #[test]
    fn standardize_round_trips(t in 10usize..60, v in 1usize..4, seed in prop::collection::vec(-1e3f64..1e3, 180)) {
        let values: Vec<f64> = (0..t * v).map(|i| seed[i % seed.len()] + i as f64 * 0.1).collect();
        let ds = dataset(t, v, values);
        let (z, stats) = fit_standardize(&ds).unwrap();
        let back = destandardize(&z, &stats).unwrap();
        for (a, b) in back.values.data().iter().zip(ds.values.data()) {
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
        }
        // fitted strictly from the training range: the rest of the series does not matter
        let train_end = SplitBounds::new(t).train_end;
        let mut changed = ds.clone();
        for i in train_end * v..t * v {
            changed.values.data_mut()[i] = 1e6;
        }
        prop_assert_eq!(NodeStats::fit(&changed, train_end).unwrap(), stats.clone());
        prop_assert_eq!(standardize(&ds, &stats).unwrap(), z);
    }
}

#[test]
fn windows_exhaustive() {
    for t in 1..40 {
        let ds = dataset(t, 1, (0..t).map(|i| i as f64).collect());
        let bounds = SplitBounds::new(t);
        assert_eq!(bounds.train_end, (7 * t) / 10);
        assert_eq!(bounds.val_end, (8 * t) / 10);
        for l_i in 1..6 {
            for l_o in 0..4 {
                for stride in 1..4 {
                    for split in [Split::Train, Split::Val, Split::Test] {
                        let (start, end) = bounds.range(split);
                        // brute force: every admissible start offset
                        let starts: Vec<usize> = (start..end).step_by(stride).filter(|s| s + l_i + l_o <= end).collect();
                        assert_eq!(window_count(end - start, l_i + l_o, stride), starts.len());
                        match window_split(&ds, split, l_i, l_o, stride) {
                            Ok(w) => {
                                assert_eq!(w.windows.iter().map(|w| w.t0).collect::<Vec<_>>(), starts);
                                for win in &w.windows {
                                    let want: Vec<f64> = (win.t0..win.t0 + l_i + l_o).map(|i| i as f64).collect();
                                    let got: Vec<f64> = win.lookback.data().iter().chain(win.horizon.data()).copied().collect();
                                    assert_eq!(got, want);
                                    assert!(win.t0 >= start && win.t0 + l_i + l_o <= end);
                                }
                            }
                            Err(_) => assert!(starts.is_empty()),
                        }
                    }
                }
            }
        }
    }
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn synthetic_nodes_are_coupled() {
    for seed in 0..5 {
        let ds = synth_generate(&SynthSpec { seed, length: 2000, ..Default::default() }).unwrap();
        for a in 0..ds.n_nodes() {
            for b in a + 1..ds.n_nodes() {
                let r = correlation(&ds.node(a), &ds.node(b));
                assert!(r >= 0.5, "seed {seed} nodes {a},{b}: correlation {r}");
            }
        }
    }
}

#[test]
fn single_harmonic_has_one_dominant_bin() {
    let spec = SynthSpec {
        n_vars: 3,
        length: 960,
        periods: vec![24.0],
        harmonics: 1,
        trend_slope: 0.0,
        noise_std: 0.0,
        ..Default::default()
    };
    let ds = synth_generate(&spec).unwrap();
    for start in [0, 100, 333] {
        let block = ds.block(start, start + 96);
        let s = strip_dc(&rfft(&block).unwrap());
        for v in 0..3 {
            let energy: Vec<f64> = (0..s.bins()).map(|k| s.get(v, k).norm_sqr()).collect();
            let total: f64 = energy.iter().sum();
            let top = energy.iter().copied().fold(0.0, f64::max);
            assert!(top >= 0.999 * total);
            assert_eq!(energy.iter().position(|&e| e == top), Some(3), "96 / 24 = 4 cycles");
        }
    }
}
