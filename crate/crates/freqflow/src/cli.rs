//! Command-line verbs.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use freqflow_core::data::{fit_standardize, impute, standardize, synth_generate, window_split, SeriesWindow, Split};
use freqflow_core::model::{downsample, slice_cols};
use freqflow_core::metrics::{evaluate_horizons, persistence_baseline, seasonal_naive_baseline, MetricReport};
use freqflow_core::spectral::{rfft, strip_dc};
use freqflow_core::train::{train, EpochRecord, TrainObserver};
use freqflow_core::{Error as CoreError, Model, Preset, RealArray, Task};

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::config::{ConfigError, RunConfig};
use crate::csv_io::{load_csv, save_csv, write_rows, CsvError, TimedDataset};

pub const CHECKPOINT_FILE: &str = "checkpoint.ffck";
pub const EPOCH_LOG_FILE: &str = "epoch_log.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const FORECAST_FILE: &str = "forecast.csv";
pub const SYNTH_FILE: &str = "synth.csv";
pub const SPECTRUM_FILE: &str = "spectrum.csv";
pub const PARAMS_FILE: &str = "params.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Shallow,
    Deep,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Shallow => Preset::Shallow,
            PresetArg::Deep => Preset::Deep,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "freqflow", version, about = "Frequency interpolation forecaster with a flow-matching residual head")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub preset: Option<PresetArg>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub no_mha: bool,
    #[arg(long, global = true)]
    pub no_lpf: bool,
    #[arg(long, global = true)]
    pub no_rin: bool,
    #[arg(long, global = true)]
    pub no_backcast: bool,
    #[arg(long, global = true)]
    pub no_flow: bool,
    /// Comma-separated horizon lengths in samples
    #[arg(long, global = true)]
    pub horizons: Option<String>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on a dataset CSV and write a checkpoint
    Train {
        /// Dataset CSV (overrides `data.path`)
        data: Option<PathBuf>,
    },
    /// Forecast past the end of a CSV
    Forecast {
        checkpoint: PathBuf,
        input: PathBuf,
        /// Number of steps to write (default: the model horizon)
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Score a checkpoint and the baselines on the test split
    Evaluate { checkpoint: PathBuf, data: PathBuf },
    /// Write a synthetic dataset
    Synth {
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        length: Option<usize>,
        /// Comma-separated periods in samples
        #[arg(long, value_delimiter = ',')]
        periods: Option<Vec<f64>>,
        #[arg(long)]
        noise_std: Option<f64>,
        #[arg(long)]
        trend_slope: Option<f64>,
    },
    /// Dump one node's spectrum over a window
    Spectrum {
        input: PathBuf,
        /// Node id (default: the first column)
        #[arg(long)]
        node: Option<String>,
        /// Window length (default: the model look-back)
        #[arg(long)]
        window: Option<usize>,
        /// First row of the window (default: the last full window)
        #[arg(long)]
        start: Option<usize>,
    },
    /// Print the effective configuration
    PrintConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{0}")]
    Insufficient(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl AppError {
    /// 2 config/usage, 3 divergence, 4 insufficient data, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) | AppError::Config(_) | AppError::Csv(_) | AppError::Checkpoint(_) => 2,
            AppError::Insufficient(_) => 4,
            AppError::Io { .. } => 1,
            AppError::Core(e) => match e {
                CoreError::Config(_) => 2,
                CoreError::Divergence(_) | CoreError::Numeric(_) => 3,
                CoreError::EmptySplit(_) | CoreError::Unimputable(_) => 4,
                _ => 1,
            },
        }
    }
}

type AppResult<T> = Result<T, AppError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AppError + '_ {
    move |source| AppError::Io { path: path.to_path_buf(), source }
}

/// Parses arguments, runs the verb, reports errors on stderr and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn parse_horizons(text: &str) -> AppResult<Vec<usize>> {
    let hs: Vec<usize> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| AppError::Usage(format!("bad horizon {s:?}"))))
        .collect::<AppResult<_>>()?;
    if hs.is_empty() {
        return Err(AppError::Usage("empty horizon list".into()));
    }
    Ok(hs)
}

/// Config file, then preset, then command-line overrides.
pub fn resolve_config(cli: &Cli) -> AppResult<RunConfig> {
    let preset = cli.preset.map(Preset::from);
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path, preset)?,
        None => RunConfig::from_toml("", preset)?,
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
        cfg.synth.seed = seed;
    }
    let m = &mut cfg.model;
    m.use_mha &= !cli.no_mha;
    m.use_lpf &= !cli.no_lpf;
    m.use_rin &= !cli.no_rin;
    m.use_backcast &= !cli.no_backcast;
    m.use_flow &= !cli.no_flow;
    if let Some(h) = &cli.horizons {
        cfg.eval.horizons = parse_horizons(h)?;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> AppResult<()> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::PrintConfig => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
        Command::Train { data } => cmd_train(&cfg, data.as_deref()),
        Command::Forecast { checkpoint, input, horizon } => cmd_forecast(&cfg, checkpoint, input, *horizon),
        Command::Evaluate { checkpoint, data } => cmd_evaluate(&cfg, checkpoint, data, cli.horizons.is_some()),
        Command::Synth { nodes, length, periods, noise_std, trend_slope } => {
            let mut spec = cfg.synth.clone();
            spec.n_vars = nodes.unwrap_or(spec.n_vars);
            spec.length = length.unwrap_or(spec.length);
            if let Some(p) = periods {
                spec.periods = p.clone();
            }
            spec.noise_std = noise_std.unwrap_or(spec.noise_std);
            spec.trend_slope = trend_slope.unwrap_or(spec.trend_slope);
            cmd_synth(&cfg, &spec)
        }
        Command::Spectrum { input, node, window, start } => cmd_spectrum(&cfg, input, node.as_deref(), *window, *start),
    }
}

fn out_dir(cfg: &RunConfig) -> AppResult<PathBuf> {
    fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    Ok(cfg.out_dir.clone())
}

fn load_imputed(path: &Path) -> AppResult<TimedDataset> {
    let mut ds = load_csv(path)?;
    ds.data = impute(&ds.data)?;
    Ok(ds)
}

struct EpochLog {
    file: File,
    start: Instant,
}

impl TrainObserver for EpochLog {
    fn now_ms(&self) -> f64 {
        self.start.elapsed().as_secs_f64() * 1e3
    }

    fn on_epoch(&mut self, r: &EpochRecord) {
        let l = &r.loss;
        let _ = writeln!(self.file, "{},{},{},{},{},{},{:.0}", r.epoch, l.recon, l.flow, l.reg, l.total, r.val_mse, r.wall_time_ms);
        eprintln!("epoch {:>3}  total {:.6}  recon {:.6}  flow {:.6}  val_mse {:.6}", r.epoch, l.total, l.recon, l.flow, r.val_mse);
    }
}

/// Mean DC-excluded amplitude over the training inputs.
fn training_amplitude(inputs: &[RealArray]) -> AppResult<Vec<f64>> {
    let mut acc: Vec<f64> = Vec::new();
    for x in inputs {
        let amp = strip_dc(&rfft(x)?).mean_amplitude();
        if acc.is_empty() {
            acc = vec![0.0; amp.len()];
        }
        acc.iter_mut().zip(amp).for_each(|(a, b)| *a += b);
    }
    Ok(acc)
}

pub fn cmd_train(cfg: &RunConfig, data: Option<&Path>) -> AppResult<()> {
    let path = data.or(cfg.data.path.as_deref()).ok_or_else(|| AppError::Usage("no data path (argument or data.path)".into()))?;
    if !path.exists() {
        return Err(AppError::Usage(format!("data file {} not found", path.display())));
    }
    let ds = load_imputed(path)?;
    let (std_ds, stats) = fit_standardize(&ds.data)?;
    let mut model_cfg = cfg.model.clone();
    model_cfg.n_vars = ds.data.n_nodes();
    let (l_i, l_o) = (model_cfg.lookback, if model_cfg.task == Task::Forecast { model_cfg.horizon } else { 0 });
    let insufficient = |e: CoreError| match e {
        CoreError::EmptySplit(m) => AppError::Insufficient(m),
        e => e.into(),
    };
    let train_w = window_split(&std_ds, Split::Train, l_i, l_o, cfg.data.train_stride).map_err(insufficient)?;
    let val_w = window_split(&std_ds, Split::Val, l_i, l_o, cfg.eval_stride()).map_err(insufficient)?;
    if model_cfg.use_lpf && model_cfg.cutoff.is_none() && model_cfg.k_in().is_err() {
        let factor = if model_cfg.task == Task::Forecast { 1 } else { model_cfg.downsample };
        let inputs = train_w.windows.iter().map(|w| downsample(&w.lookback, factor)).collect::<Result<Vec<_>, _>>()?;
        model_cfg.resolve_cutoff(&training_amplitude(&inputs)?)?;
    }
    let mut model = Model::new(model_cfg, cfg.train.seed)?;
    let dir = out_dir(cfg)?;
    println!("parameters: {}", model.param_count());
    let log_path = dir.join(EPOCH_LOG_FILE);
    let mut file = File::create(&log_path).map_err(io_err(&log_path))?;
    writeln!(file, "epoch,recon,flow,reg,total,val_mse,wall_time_ms").map_err(io_err(&log_path))?;
    let mut log = EpochLog { file, start: Instant::now() };
    let report = train(&mut model, &train_w.windows, &val_w.windows, &cfg.train, &mut log)?;
    println!(
        "best epoch {} of {}, val_mse {:.6}, flow correction {}",
        report.best_epoch,
        report.history.len(),
        report.best_val_mse,
        if report.flow_correction { "on" } else { "off" }
    );
    let params_path = dir.join(PARAMS_FILE);
    fs::write(&params_path, format!("{}\n", report.param_count)).map_err(io_err(&params_path))?;
    let ck = Checkpoint::new(model, cfg.clone(), ds.data.node_ids.clone(), stats);
    let ck_path = dir.join(CHECKPOINT_FILE);
    ck.save(&ck_path)?;
    println!("wrote {}", ck_path.display());
    Ok(())
}

fn check_nodes(ck: &Checkpoint, ds: &TimedDataset) -> AppResult<()> {
    if ck.node_ids != ds.data.node_ids {
        return Err(AppError::Usage(format!("data columns {:?} differ from checkpoint nodes {:?}", ds.data.node_ids, ck.node_ids)));
    }
    Ok(())
}

/// Forecast for the window ending at the last row, in data units, `[V, steps]`.
pub fn forecast_tail(ck: &Checkpoint, ds: &TimedDataset) -> AppResult<RealArray> {
    let m = &ck.model.config;
    let t = ds.data.len();
    if t < m.lookback {
        return Err(AppError::Insufficient(format!("{t} rows, the model needs {}", m.lookback)));
    }
    let z = standardize(&ds.data, &ck.node_stats)?;
    let window = SeriesWindow { lookback: z.block(t - m.lookback, t), horizon: RealArray::zeros(&[m.n_vars, 0]), t0: t - m.lookback };
    Ok(ck.node_stats.invert_rows(&ck.model.forecast(&window)?)?)
}

fn transpose(x: &RealArray) -> RealArray {
    let (r, c) = x.rows_cols();
    let data = (0..c).flat_map(|j| (0..r).map(move |i| x.data()[i * c + j])).collect();
    RealArray::new(&[c, r], data).expect("transpose shape")
}

pub fn cmd_forecast(cfg: &RunConfig, checkpoint: &Path, input: &Path, horizon: Option<usize>) -> AppResult<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let ds = load_imputed(input)?;
    check_nodes(&ck, &ds)?;
    let pred = forecast_tail(&ck, &ds)?;
    let full = pred.rows_cols().1;
    let steps = horizon.unwrap_or(full);
    if steps == 0 || steps > full {
        return Err(AppError::Usage(format!("horizon {steps} outside [1, {full}]")));
    }
    let pred = slice_cols(&pred, 0, steps)?;
    let times = match ck.model.config.task {
        Task::Forecast => ds.following(steps),
        Task::Reconstruct => ds.timestamps[ds.timestamps.len() - full..][..steps].to_vec(),
    };
    let dir = out_dir(cfg)?;
    let path = dir.join(FORECAST_FILE);
    let file = File::create(&path).map_err(io_err(&path))?;
    write_rows(file, &ds.data.node_ids, &times, &transpose(&pred))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Test-split reports for the model and both baselines, one per horizon.
pub fn evaluate_checkpoint(ck: &Checkpoint, ds: &TimedDataset, horizons: &[usize], stride: usize, period: usize) -> AppResult<Vec<(String, Vec<MetricReport>)>> {
    let m = &ck.model.config;
    if m.task != Task::Forecast {
        return Err(AppError::Usage("evaluate scores forecast-task checkpoints".into()));
    }
    if horizons.is_empty() {
        return Err(AppError::Usage("empty horizon list".into()));
    }
    if let Some(h) = horizons.iter().find(|&&h| h == 0 || h > m.horizon) {
        return Err(AppError::Usage(format!("horizon {h} outside [1, {}]", m.horizon)));
    }
    let z = standardize(&ds.data, &ck.node_stats)?;
    let test = window_split(&z, Split::Test, m.lookback, m.horizon, stride).map_err(|e| AppError::Insufficient(e.to_string()))?;
    let inv = |x: &RealArray| ck.node_stats.invert_rows(x);
    let ids = &ds.data.node_ids;
    let model = evaluate_horizons(&test.windows, horizons, ids, |w| ck.model.forecast(w), inv)?;
    let pers = evaluate_horizons(&test.windows, horizons, ids, |w| Ok(persistence_baseline(w)), inv)?;
    let seas = evaluate_horizons(&test.windows, horizons, ids, |w| seasonal_naive_baseline(w, period), inv)?;
    Ok(vec![("freqflow".into(), model), ("persistence".into(), pers), ("seasonal_naive".into(), seas)])
}

pub fn cmd_evaluate(cfg: &RunConfig, checkpoint: &Path, data: &Path, horizons_from_cli: bool) -> AppResult<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let ds = load_imputed(data)?;
    check_nodes(&ck, &ds)?;
    let horizons = if horizons_from_cli { cfg.eval.horizons.clone() } else { ck.config.eval.horizons.clone() };
    let horizons: Vec<usize> = horizons.into_iter().filter(|&h| horizons_from_cli || h <= ck.model.config.horizon).collect();
    let stride = cfg.data.eval_stride.unwrap_or(ck.config.eval_stride());
    let period = cfg.eval.seasonal_period.or(ck.config.eval.seasonal_period).unwrap_or(ck.model.config.lookback);
    let rows = evaluate_checkpoint(&ck, &ds, &horizons, stride, period)?;
    let dir = out_dir(cfg)?;
    let path = dir.join(METRICS_FILE);
    let mut text = String::from("horizon,model,rmse,mae\n");
    for (name, reports) in &rows {
        for r in reports {
            println!("model={name} horizon={} rmse={:.6} mae={:.6} windows={}", r.horizon, r.rmse, r.mae, r.n_windows);
            text.push_str(&format!("{},{name},{},{}\n", r.horizon, r.rmse, r.mae));
        }
        let n = reports.len() as f64;
        let (rmse, mae) = (reports.iter().map(|r| r.rmse).sum::<f64>() / n, reports.iter().map(|r| r.mae).sum::<f64>() / n);
        println!("model={name} horizon=mean rmse={rmse:.6} mae={mae:.6}");
        text.push_str(&format!("mean,{name},{rmse},{mae}\n"));
    }
    fs::write(&path, text).map_err(io_err(&path))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_synth(cfg: &RunConfig, spec: &freqflow_core::data::SynthSpec) -> AppResult<()> {
    let data = synth_generate(spec)?;
    let start = chrono::NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date").and_hms_opt(0, 0, 0).expect("valid time");
    let dt = chrono::TimeDelta::minutes(i64::from(spec.interval_minutes));
    let timestamps = (0..data.len() as i32).map(|k| start + dt * k).collect();
    let dir = out_dir(cfg)?;
    let path = dir.join(SYNTH_FILE);
    save_csv(&TimedDataset { data, timestamps }, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// `(bin, cycles per window, amplitude, phase)` rows for one node.
pub fn spectrum_rows(ds: &TimedDataset, node: usize, start: usize, window: usize) -> AppResult<Vec<(usize, f64, f64, f64)>> {
    if window < 4 || !window.is_multiple_of(2) || start + window > ds.data.len() {
        return Err(AppError::Insufficient(format!("window {window} at row {start} of {}", ds.data.len())));
    }
    let series = ds.data.node(node)[start..start + window].to_vec();
    let spec = rfft(&RealArray::from_vec(series))?;
    Ok(spec.iter().enumerate().map(|(k, z)| (k, k as f64, z.amplitude(), z.phase())).collect())
}

pub fn cmd_spectrum(cfg: &RunConfig, input: &Path, node: Option<&str>, window: Option<usize>, start: Option<usize>) -> AppResult<()> {
    let ds = load_imputed(input)?;
    let v = match node {
        Some(id) => ds.data.node_ids.iter().position(|n| n == id).ok_or_else(|| AppError::Usage(format!("unknown node {id}")))?,
        None => 0,
    };
    let window = window.unwrap_or(cfg.model.lookback);
    let start = start.unwrap_or(ds.data.len().saturating_sub(window));
    let rows = spectrum_rows(&ds, v, start, window)?;
    let dir = out_dir(cfg)?;
    let path = dir.join(SPECTRUM_FILE);
    let mut text = String::from("bin,freq_cycles_per_window,amplitude,phase\n");
    for (k, f, a, p) in rows {
        text.push_str(&format!("{k},{f},{a},{p}\n"));
    }
    fs::write(&path, text).map_err(io_err(&path))?;
    println!("wrote {}", path.display());
    Ok(())
}
