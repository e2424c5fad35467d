use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use freqflow::cli::{evaluate_checkpoint, forecast_tail, CHECKPOINT_FILE, EPOCH_LOG_FILE, FORECAST_FILE, PARAMS_FILE, SPECTRUM_FILE, SYNTH_FILE};
use freqflow::{load_csv, Checkpoint, RunConfig, TimedDataset};
use freqflow_core::data::{RawDataset, SplitBounds};
use freqflow_core::metrics::rmse;
use freqflow_core::RealArray;

const CONFIG: &str = r#"
[model]
lookback = 24
horizon = 24
n_heads = 2
flow_hidden = 8

[model.lpf]
n_harmonics = 2
base_period = 12.0

[train]
max_epochs = 2
batch_size = 16

[data]
train_stride = 4

[eval]
horizons = [12, 24]

[synth]
n_vars = 3
length = 600
periods = [12.0, 24.0]
"#;

fn freqflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freqflow")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn ok(out: Output) -> Output {
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Run {
    dir: PathBuf,
    config: PathBuf,
    data: PathBuf,
    checkpoint: PathBuf,
}

/// One synthetic file and one trained checkpoint shared by the tests.
fn trained() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        let config = dir.join("run.toml");
        fs::write(&config, CONFIG).unwrap();
        let out = dir.join("out");
        ok(freqflow(&["--config", s(&config), "--out", s(&out), "synth"]));
        let data = out.join(SYNTH_FILE);
        ok(freqflow(&["--config", s(&config), "--out", s(&out), "train", s(&data)]));
        Run { checkpoint: out.join(CHECKPOINT_FILE), dir, config, data }
    })
}

fn truncated(ds: &TimedDataset, rows: usize) -> TimedDataset {
    let v = ds.data.n_nodes();
    let values = RealArray::new(&[rows, v], ds.data.values.data()[..rows * v].to_vec()).unwrap();
    TimedDataset {
        data: RawDataset::new(values, ds.data.node_ids.clone(), ds.data.interval_minutes).unwrap(),
        timestamps: ds.timestamps[..rows].to_vec(),
    }
}

#[test]
fn train_writes_artifacts() {
    let run = trained();
    let ck = Checkpoint::load(&run.checkpoint).unwrap();
    assert_eq!(ck.node_ids.len(), 3);
    assert_eq!(ck.model.config.lookback, 24);
    let out = run.checkpoint.parent().unwrap();
    let params: usize = fs::read_to_string(out.join(PARAMS_FILE)).unwrap().trim().parse().unwrap();
    assert_eq!(params, ck.model.param_count());
    let log = fs::read_to_string(out.join(EPOCH_LOG_FILE)).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("epoch,recon,flow,reg,total,val_mse,wall_time_ms"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn forecast_is_deterministic_and_continues_the_clock() {
    let run = trained();
    let mut files = Vec::new();
    for name in ["fa", "fb"] {
        let out = run.dir.join(name);
        ok(freqflow(&["--out", s(&out), "forecast", s(&run.checkpoint), s(&run.data), "--horizon", "10"]));
        files.push(fs::read(out.join(FORECAST_FILE)).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let input = load_csv(&run.data).unwrap();
    let pred = freqflow::read_csv(files[0].as_slice()).unwrap();
    assert_eq!(pred.data.len(), 10);
    assert_eq!(pred.data.node_ids, input.data.node_ids);
    assert_eq!(pred.timestamps, input.following(10));
}

#[test]
fn forecast_matches_evaluation_windows() {
    let run = trained();
    let ck = Checkpoint::load(&run.checkpoint).unwrap();
    let ds = load_csv(&run.data).unwrap();
    let (l_i, l_o, stride) = (24, 24, 24);
    let bounds = SplitBounds::new(ds.data.len());
    let (mut preds, mut truth) = (Vec::new(), Vec::new());
    let mut t0 = bounds.val_end;
    while t0 + l_i + l_o <= bounds.len {
        let p = forecast_tail(&ck, &truncated(&ds, t0 + l_i)).unwrap();
        preds.extend_from_slice(p.data());
        truth.extend_from_slice(ds.data.block(t0 + l_i, t0 + l_i + l_o).data());
        t0 += stride;
    }
    let direct = rmse(&RealArray::from_vec(preds), &RealArray::from_vec(truth)).unwrap();
    let reports = evaluate_checkpoint(&ck, &ds, &[24], stride, 24).unwrap();
    let (name, model) = &reports[0];
    assert_eq!(name, "freqflow");
    assert!((model[0].rmse - direct).abs() <= 1e-12 * direct, "{} vs {direct}", model[0].rmse);
}

#[test]
fn evaluate_writes_metrics_for_every_horizon() {
    let run = trained();
    let out = run.dir.join("eval");
    ok(freqflow(&["--out", s(&out), "evaluate", s(&run.checkpoint), s(&run.data)]));
    let text = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "horizon,model,rmse,mae");
    // 3 models x (2 horizons + mean)
    assert_eq!(rows.len(), 1 + 9);
    for row in &rows[1..] {
        let cells: Vec<&str> = row.split(',').collect();
        assert!(cells[2].parse::<f64>().unwrap() >= cells[3].parse::<f64>().unwrap());
    }
}

#[test]
fn disabled_flow_forecasts_the_interpolation_path() {
    let run = trained();
    let out = run.dir.join("noflow");
    ok(freqflow(&["--config", s(&run.config), "--out", s(&out), "--no-flow", "train", s(&run.data)]));
    let ck = Checkpoint::load(&out.join(CHECKPOINT_FILE)).unwrap();
    assert!(!ck.model.config.use_flow);
    let ds = load_csv(&run.data).unwrap();
    let a = forecast_tail(&ck, &ds).unwrap();
    let mut interp = ck.model.clone();
    interp.config.flow_correction = false;
    let b = forecast_tail(&Checkpoint { model: interp, ..ck }, &ds).unwrap();
    assert_eq!(a, b);
}

#[test]
fn synth_is_reproducible_by_seed() {
    let run = trained();
    let read = |name: &str, seed: &str| {
        let out = run.dir.join(name);
        ok(freqflow(&["--config", s(&run.config), "--out", s(&out), "--seed", seed, "synth", "--length", "200"]));
        fs::read(out.join(SYNTH_FILE)).unwrap()
    };
    let (a, b, c) = (read("s1", "5"), read("s2", "5"), read("s3", "6"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(freqflow::read_csv(a.as_slice()).unwrap().data.len(), 200);
}

#[test]
fn spectrum_of_a_sine_has_one_bin() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("timestamp,x\n");
    for t in 0..64 {
        let x = 3.0 * (2.0 * std::f64::consts::PI * 5.0 * t as f64 / 64.0).cos() + 1.0;
        text.push_str(&format!("2024-01-01T{:02}:{:02}:00,{x}\n", t / 60, t % 60));
    }
    let input = dir.path().join("sine.csv");
    fs::write(&input, text).unwrap();
    let out = dir.path().join("out");
    ok(freqflow(&["--out", s(&out), "spectrum", s(&input), "--window", "64"]));
    let text = fs::read_to_string(out.join(SPECTRUM_FILE)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bin,freq_cycles_per_window,amplitude,phase"));
    let amps: Vec<f64> = lines.map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(amps.len(), 33);
    for (k, a) in amps.iter().enumerate() {
        match k {
            0 | 5 => assert!(*a > 1.0, "bin {k} amplitude {a}"),
            _ => assert!(*a < 1e-9, "bin {k} amplitude {a}"),
        }
    }
}

#[test]
fn print_config_parses_back() {
    let out = ok(freqflow(&["--preset", "deep", "print-config"]));
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = RunConfig::from_toml(&text, None).unwrap();
    assert_eq!((cfg.model.flow_depth, cfg.model.flow_correction), (16, true));
    let out = ok(freqflow(&["--no-mha", "--horizons", "12,24", "print-config"]));
    let cfg = RunConfig::from_toml(&String::from_utf8(out.stdout).unwrap(), None).unwrap();
    assert!(!cfg.model.use_mha);
    assert_eq!(cfg.eval.horizons, vec![12, 24]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let out = p("out");
    let config = p("run.toml");
    fs::write(&config, CONFIG).unwrap();

    assert_eq!(code(&freqflow(&["--out", s(&out), "train", s(&p("missing.csv"))])), 2);
    assert_eq!(code(&freqflow(&["frobnicate"])), 2);
    assert_eq!(code(&freqflow(&["--horizons", "", "print-config"])), 2);

    fs::write(p("bad.toml"), "[train]\nlearning_rate = 0.1\n").unwrap();
    assert_eq!(code(&freqflow(&["--config", s(&p("bad.toml")), "print-config"])), 2);

    fs::write(p("junk.ffck"), "not a checkpoint").unwrap();
    fs::write(p("tiny.csv"), "timestamp,a\n2024-01-01T00:00:00,1\n2024-01-01T00:05:00,2\n").unwrap();
    assert_eq!(code(&freqflow(&["--out", s(&out), "forecast", s(&p("junk.ffck")), s(&p("tiny.csv"))])), 2);

    let mut short = String::from("timestamp,a,b,c\n");
    for t in 0..40 {
        short.push_str(&format!("2024-01-01T{:02}:{:02}:00,{t},1,2\n", t / 12, (t % 12) * 5));
    }
    fs::write(p("short.csv"), short).unwrap();
    assert_eq!(code(&freqflow(&["--config", s(&config), "--out", s(&out), "train", s(&p("short.csv"))])), 4);

    let run = trained();
    fs::write(p("hot.toml"), format!("{CONFIG}\n[train]\nlr = 1e12\n").replacen("[train]\nmax_epochs = 2\nbatch_size = 16\n", "", 1)).unwrap();
    let hot = freqflow(&["--config", s(&p("hot.toml")), "--out", s(&out), "train", s(&run.data)]);
    assert_eq!(code(&hot), 3, "stderr: {}", String::from_utf8_lossy(&hot.stderr));
}
