//! Traffic forecasting adapter: sensor CSV ingestion, distance-kernel road graph,
//! normalization and windowing, 12-step autoregressive forecasts and metrics.

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDateTime, Timelike};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::derive_seed;
use crate::error::{param_err, Error, Result};
use crate::graph::Graph;
use crate::neural::{flatten, AdamWConfig, DenseMatrix, OptimState};
use crate::ngs::{GraphBatch, NgsConfig, NgsModel, StepInput, UpdateMode};
use crate::scalar::Scalar;

/// History and forecast length in steps.
pub const WINDOW: usize = 12;
pub const HORIZONS: [usize; 3] = [3, 6, 12];
/// Truth speeds below this are left out of MAPE.
pub const DEFAULT_MAPE_FLOOR: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SensorSeries {
    pub sensor_ids: Vec<String>,
    /// Seconds since 1970-01-01 00:00 (naive local time).
    pub timestamps: Vec<i64>,
    pub interval: i64,
    /// `time x sensors`.
    pub speeds: DenseMatrix<f64>,
    /// `(time, sensor)` cells that were missing and forward-filled.
    pub filled: Vec<(usize, usize)>,
}

fn parse_timestamp(s: &str) -> Result<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Ok(v);
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc().timestamp());
        }
    }
    Err(Error::Ingestion(format!("unparseable timestamp '{s}'")))
}

fn reading(s: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") || s.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| Error::Ingestion(format!("unparseable speed '{s}'")))?;
    Ok(v.is_finite().then_some(v))
}

/// Reads `speeds.csv`: a timestamp column followed by one column per sensor id.
/// Missing readings are forward-filled (leading gaps take the first observation).
pub fn read_speeds<R: Read>(r: R) -> Result<SensorSeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Ingestion("speeds need a timestamp column and at least one sensor".into()));
    }
    let sensor_ids: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let s = sensor_ids.len();
    let mut timestamps = Vec::new();
    let mut raw: Vec<Option<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != s + 1 {
            return Err(Error::Ingestion(format!("row {} has {} fields, expected {}", timestamps.len() + 1, rec.len(), s + 1)));
        }
        timestamps.push(parse_timestamp(&rec[0])?);
        for f in rec.iter().skip(1) {
            raw.push(reading(f)?);
        }
    }
    let t = timestamps.len();
    if t < 2 {
        return Err(Error::Ingestion("speeds need at least two rows".into()));
    }
    let interval = timestamps[1] - timestamps[0];
    if interval <= 0 || timestamps.windows(2).any(|w| w[1] - w[0] != interval) {
        return Err(Error::Ingestion("timestamps are not on a uniform ascending grid".into()));
    }
    let mut speeds = DenseMatrix::zeros(t, s);
    let mut filled = Vec::new();
    for j in 0..s {
        let first = (0..t)
            .find_map(|i| raw[i * s + j])
            .ok_or_else(|| Error::Ingestion(format!("sensor {} has no readings", sensor_ids[j])))?;
        let mut last = first;
        for i in 0..t {
            match raw[i * s + j] {
                Some(v) => last = v,
                None => filled.push((i, j)),
            }
            speeds.set(i, j, last);
        }
    }
    filled.sort_unstable();
    if !filled.is_empty() {
        log::warn!("forward-filled {} missing readings", filled.len());
    }
    Ok(SensorSeries {
        sensor_ids,
        timestamps,
        interval,
        speeds,
        filled,
    })
}

pub fn load_speeds(path: impl AsRef<Path>) -> Result<SensorSeries> {
    read_speeds(std::fs::File::open(path)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceEntry {
    pub from: String,
    pub to: String,
    pub distance: f64,
}

/// Reads `distances.csv` with columns `from,to,distance`.
pub fn read_distances<R: Read>(r: R) -> Result<Vec<DistanceEntry>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let e: DistanceEntry = rec?;
        if !(e.distance >= 0.0) {
            return Err(Error::Ingestion(format!("negative or invalid distance {} -> {}", e.from, e.to)));
        }
        out.push(e);
    }
    Ok(out)
}

pub fn load_distances(path: impl AsRef<Path>) -> Result<Vec<DistanceEntry>> {
    read_distances(std::fs::File::open(path)?)
}

/// Directed road graph with Gaussian distance-kernel weights.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadGraph {
    pub sensor_ids: Vec<String>,
    pub sigma: f64,
    pub cutoff: f64,
    /// Every supplied pair with a nonzero weight, self pairs included.
    pub weights: Vec<(usize, usize, f64)>,
    /// Directed edges for `i != j` with nonzero weight.
    pub graph: Graph,
    /// `1 - W_ij` per graph edge.
    pub edge_coeffs: DenseMatrix<f64>,
}

/// `W_ij = exp(-d_ij^2 / sigma^2)` for `d_ij <= cutoff`, else 0, with `sigma` the
/// population standard deviation of the supplied distances. Directions are kept as given.
pub fn road_weight(d: f64, sigma: f64, cutoff: f64) -> f64 {
    if d <= cutoff {
        (-(d * d) / (sigma * sigma)).exp()
    } else {
        0.0
    }
}

pub fn build_road_graph(sensor_ids: &[String], distances: &[DistanceEntry], cutoff: f64) -> Result<RoadGraph> {
    if distances.is_empty() {
        return Err(Error::Ingestion("no distances supplied".into()));
    }
    if let Some(e) = distances.iter().find(|e| !(e.distance >= 0.0)) {
        return Err(Error::Ingestion(format!("negative or invalid distance {} -> {}", e.from, e.to)));
    }
    let n = distances.len() as f64;
    let mean = distances.iter().map(|e| e.distance).sum::<f64>() / n;
    let sigma = (distances.iter().map(|e| (e.distance - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sigma > 0.0) {
        return Err(Error::Ingestion("distances have zero spread".into()));
    }
    let index = |id: &str| sensor_ids.iter().position(|s| s == id);
    let mut weights = Vec::new();
    let mut skipped = 0;
    for e in distances {
        let (Some(i), Some(j)) = (index(&e.from), index(&e.to)) else {
            skipped += 1;
            continue;
        };
        let w = road_weight(e.distance, sigma, cutoff);
        if w > 0.0 {
            weights.push((i, j, w));
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} distance rows naming unknown sensors");
    }
    weights.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    if let Some(w) = weights.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
        return Err(Error::Ingestion(format!("duplicate distance for pair ({}, {})", w[0].0, w[0].1)));
    }
    let off: Vec<(usize, usize, f64)> = weights.iter().copied().filter(|&(i, j, _)| i != j).collect();
    let graph = Graph::new(sensor_ids.len(), off.iter().map(|&(i, j, _)| (i, j)).collect(), true)?;
    let mut edge_coeffs = DenseMatrix::zeros(graph.num_edges(), 1);
    for &(i, j, w) in &off {
        let k = graph.edge_index(i, j).expect("edge inserted above");
        edge_coeffs.set(k, 0, 1.0 - w);
    }
    Ok(RoadGraph {
        sensor_ids: sensor_ids.to_vec(),
        sigma,
        cutoff,
        weights,
        graph,
        edge_coeffs,
    })
}

/// Z-score normalization with statistics from the training split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: f64,
    pub std: f64,
}

impl Scaler {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return param_err("cannot fit a scaler on no values");
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        if !(std > 0.0) {
            return param_err("training speeds are constant");
        }
        Ok(Self { mean, std })
    }

    pub fn transform(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// `(cos, sin)` of the time-in-day and day-in-week angles in `[0, 2pi)`.
pub fn time_features(ts: i64) -> [f64; 4] {
    let dt = chrono::DateTime::from_timestamp(ts, 0).expect("timestamp in range").naive_utc();
    let day = 2.0 * PI * dt.num_seconds_from_midnight() as f64 / 86_400.0;
    let week = 2.0 * PI * dt.weekday().num_days_from_monday() as f64 / 7.0;
    [day.cos(), day.sin(), week.cos(), week.sin()]
}

/// History block, target block and the global features for each forecast step.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastWindow {
    pub start: usize,
    /// `sensors x 12`, normalized, oldest first.
    pub history: DenseMatrix<f64>,
    /// `sensors x 12`, normalized.
    pub target: DenseMatrix<f64>,
    /// Features of the most recent known time before each of the 12 steps.
    pub step_features: Vec<[f64; 4]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowSplits {
    pub scaler: Scaler,
    /// Steps in the train/val/test ranges before windowing.
    pub split_steps: (usize, usize, usize),
    pub train: Vec<ForecastWindow>,
    pub val: Vec<ForecastWindow>,
    pub test: Vec<ForecastWindow>,
}

/// Train/val/test step counts for a 7:1:2 split.
pub fn split_sizes(t: usize) -> (usize, usize, usize) {
    let train = (t as f64 * 0.7).round() as usize;
    let val = (t as f64 * 0.1).round() as usize;
    (train, val, t - train - val)
}

fn windows_in(
    series: &SensorSeries,
    scaler: &Scaler,
    range: std::ops::Range<usize>,
    stride: usize,
) -> Vec<ForecastWindow> {
    let s = series.sensor_ids.len();
    let mut out = Vec::new();
    let mut k = range.start;
    while k + 2 * WINDOW <= range.end {
        let block = |off: usize| {
            DenseMatrix::from_fn(s, WINDOW, |i, j| scaler.transform(series.speeds.get(k + off + j, i)))
        };
        out.push(ForecastWindow {
            start: k,
            history: block(0),
            target: block(WINDOW),
            step_features: (0..WINDOW).map(|j| time_features(series.timestamps[k + WINDOW - 1 + j])).collect(),
        });
        k += stride;
    }
    out
}

/// Splits the series 7:1:2 in time, fits the scaler on the training range and cuts
/// 12-in/12-out windows inside each range.
pub fn make_windows(series: &SensorSeries, stride: usize) -> Result<WindowSplits> {
    let t = series.timestamps.len();
    if t < 2 * WINDOW {
        return param_err(format!("series of {t} steps is shorter than {}", 2 * WINDOW));
    }
    if stride == 0 {
        return param_err("window stride must be positive");
    }
    let (a, b, c) = split_sizes(t);
    let s = series.sensor_ids.len();
    let train_vals: Vec<f64> = series.speeds.data()[..a * s].to_vec();
    let scaler = Scaler::fit(&train_vals)?;
    Ok(WindowSplits {
        scaler,
        split_steps: (a, b, c),
        train: windows_in(series, &scaler, 0..a, stride),
        val: windows_in(series, &scaler, a..a + b, stride),
        test: windows_in(series, &scaler, a + b..t, stride),
    })
}

pub fn traffic_config(latent_dim: usize, hidden_dim: usize, depth: usize) -> NgsConfig {
    NgsConfig {
        latent_dim,
        hidden_dim,
        depth,
        state_dim: WINDOW,
        node_coeff_dim: 0,
        edge_coeff_dim: 1,
        global_coeff_dim: 4,
        update: UpdateMode::ShiftWindow,
    }
}

/// Normalized 12-step forecast (`sensors x 12`).
pub fn forecast_normalized<T: Scalar>(model: &NgsModel<T>, road: &RoadGraph, w: &ForecastWindow) -> Result<DenseMatrix<f64>> {
    if model.config.update != UpdateMode::ShiftWindow || model.config.state_dim != WINDOW {
        return param_err("model is not configured for 12-step traffic windows");
    }
    if w.history.shape() != (road.graph.num_nodes(), WINDOW) {
        return param_err("window does not match the road graph");
    }
    let node_coeffs = DenseMatrix::zeros(w.history.rows(), 0);
    let edge_coeffs = road.edge_coeffs.cast::<T>();
    let mut state = w.history.cast::<T>();
    let mut out = DenseMatrix::zeros(w.history.rows(), WINDOW);
    for j in 0..WINDOW {
        let g: Vec<T> = w.step_features[j].iter().map(|&v| T::lit(v)).collect();
        state = model.step(&StepInput {
            state: &state,
            node_coeffs: &node_coeffs,
            edge_coeffs: &edge_coeffs,
            global_coeffs: &g,
            dt: T::one(),
            graph: &road.graph,
        })?;
        if !state.is_finite() {
            return Err(Error::RolloutDivergence { step: j });
        }
        for i in 0..state.rows() {
            out.set(i, j, state.get(i, WINDOW - 1).to_f64_lossy());
        }
    }
    Ok(out)
}

/// 12-step forecast in speed units.
pub fn forecast<T: Scalar>(model: &NgsModel<T>, road: &RoadGraph, scaler: &Scaler, w: &ForecastWindow) -> Result<DenseMatrix<f64>> {
    Ok(forecast_normalized(model, road, w)?.map(|z| scaler.inverse(z)))
}

/// Repeats the last observed speed over the horizon.
pub fn persistence(scaler: &Scaler, w: &ForecastWindow) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(w.history.rows(), WINDOW, |i, _| scaler.inverse(w.history.get(i, WINDOW - 1)))
}

pub fn denormalized_target(scaler: &Scaler, w: &ForecastWindow) -> DenseMatrix<f64> {
    w.target.map(|z| scaler.inverse(z))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub horizon: usize,
    pub mae: f64,
    pub rmse: f64,
    /// Percent.
    pub mape: f64,
}

/// MAE, RMSE and MAPE at each horizon (1-based step within the forecast), averaging the
/// per-window node means. MAPE skips truths below `mape_floor`.
pub fn traffic_metrics(
    pred: &[DenseMatrix<f64>],
    truth: &[DenseMatrix<f64>],
    horizons: &[usize],
    mape_floor: f64,
) -> Result<Vec<HorizonMetrics>> {
    if pred.len() != truth.len() || pred.is_empty() {
        return param_err("need equally many non-zero prediction and truth windows");
    }
    if pred.iter().zip(truth).any(|(p, t)| p.shape() != t.shape()) {
        return param_err("prediction and truth shapes differ");
    }
    horizons
        .iter()
        .map(|&h| {
            if h == 0 || h > pred[0].cols() {
                return param_err(format!("horizon {h} outside the forecast"));
            }
            let c = h - 1;
            let (mut mae, mut rmse, mut mape) = (0.0, 0.0, 0.0);
            let mut mape_windows = 0;
            for (p, t) in pred.iter().zip(truth) {
                let n = p.rows() as f64;
                let mut a = 0.0;
                let mut s = 0.0;
                let mut pc = 0.0;
                let mut pn = 0usize;
                for i in 0..p.rows() {
                    let e = p.get(i, c) - t.get(i, c);
                    a += e.abs();
                    s += e * e;
                    if t.get(i, c).abs() >= mape_floor {
                        pc += (e / t.get(i, c)).abs();
                        pn += 1;
                    }
                }
                mae += a / n;
                rmse += (s / n).sqrt();
                if pn > 0 {
                    mape += pc / pn as f64;
                    mape_windows += 1;
                }
            }
            if mape_windows == 0 {
                return Err(Error::DegenerateInput("every truth speed is below the MAPE floor".into()));
            }
            let m = pred.len() as f64;
            Ok(HorizonMetrics {
                horizon: h,
                mae: mae / m,
                rmse: rmse / m,
                mape: 100.0 * mape / mape_windows as f64,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficTrainConfig {
    pub epochs: usize,
    /// Windows per optimizer step.
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub ema_decay: f64,
    pub seed: u64,
}

impl Default for TrafficTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 8,
            lr0: 1e-3,
            lr_min: 1e-5,
            weight_decay: 1e-2,
            ema_decay: 0.99,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficEpoch {
    pub epoch: usize,
    pub train_mse: f64,
    /// Normalized 12-step MAE on the validation windows.
    pub val_mae: f64,
}

fn window_input<'a, T>(
    state: &'a DenseMatrix<T>,
    node_coeffs: &'a DenseMatrix<T>,
    edge_coeffs: &'a DenseMatrix<T>,
    g: &'a [T],
    road: &'a RoadGraph,
) -> StepInput<'a, T>
where
    T: Scalar,
{
    StepInput {
        state,
        node_coeffs,
        edge_coeffs,
        global_coeffs: g,
        dt: T::one(),
        graph: &road.graph,
    }
}

/// Mean normalized absolute error of 12-step forecasts.
pub fn normalized_forecast_mae<T: Scalar>(model: &NgsModel<T>, road: &RoadGraph, windows: &[ForecastWindow]) -> Result<f64> {
    if windows.is_empty() {
        return param_err("no windows to evaluate");
    }
    let sums = windows
        .par_iter()
        .map(|w| {
            let p = forecast_normalized(model, road, w)?;
            Ok(p.data().iter().zip(w.target.data()).map(|(a, b)| (a - b).abs()).sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(sums.iter().sum::<f64>() / (windows.len() * windows[0].target.data().len()) as f64)
}

/// Teacher-forced one-step training on `history -> next speed` pairs; returns the
/// EMA model with the best validation forecast MAE.
pub fn train_traffic<T: Scalar>(
    model: NgsModel<T>,
    road: &RoadGraph,
    splits: &WindowSplits,
    cfg: &TrafficTrainConfig,
) -> Result<(NgsModel<T>, Vec<TrafficEpoch>)> {
    if splits.train.is_empty() || cfg.epochs == 0 || cfg.batch_size == 0 {
        return param_err("traffic training needs windows, epochs and a positive batch size");
    }
    let mut model = model;
    let layout = model.layout();
    let steps_per_epoch = splits.train.len().div_ceil(cfg.batch_size) as u64;
    let opt_cfg = AdamWConfig {
        lr0: cfg.lr0,
        lr_min: cfg.lr_min,
        weight_decay: cfg.weight_decay,
        ema_decay: cfg.ema_decay,
        total_steps: steps_per_epoch * cfg.epochs as u64,
        ..AdamWConfig::default()
    };
    let mut params = model.params();
    let mut opt = OptimState::new(opt_cfg, &params)?;
    let node_coeffs = DenseMatrix::<T>::zeros(road.graph.num_nodes(), 0);
    let edge_coeffs = road.edge_coeffs.cast::<T>();
    let pairs: Vec<(DenseMatrix<T>, DenseMatrix<T>, Vec<T>)> = splits
        .train
        .iter()
        .map(|w| {
            let next = DenseMatrix::from_fn(w.history.rows(), WINDOW, |i, j| {
                if j + 1 < WINDOW {
                    w.history.get(i, j + 1)
                } else {
                    w.target.get(i, 0)
                }
            });
            let g = w.step_features[0].iter().map(|&v| T::lit(v)).collect();
            (w.history.cast(), next.cast(), g)
        })
        .collect();
    let mask = vec![true; road.graph.num_nodes() * cfg.batch_size];
    let mut history = Vec::new();
    let mut best: Option<(f64, Vec<T>)> = None;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64, 2)));
        let mut loss_sum = 0.0;
        let mut n = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let inputs: Vec<StepInput<'_, T>> = chunk
                .iter()
                .map(|&k| window_input(&pairs[k].0, &node_coeffs, &edge_coeffs, &pairs[k].2, road))
                .collect();
            let batch = GraphBatch::from_inputs(&inputs)?;
            let targets: Vec<&DenseMatrix<T>> = chunk.iter().map(|&k| &pairs[k].1).collect();
            let targets = DenseMatrix::vcat(&targets)?;
            let (loss, grads) = model.loss_and_grad(&batch, &targets, &mask[..targets.rows()])?;
            let loss = loss.to_f64_lossy();
            if !loss.is_finite() {
                return Err(Error::NanLoss {
                    epoch,
                    step: opt.step as usize,
                });
            }
            opt.step(&layout, &mut params, &flatten(&grads))?;
            model.set_params(&params)?;
            loss_sum += loss;
            n += 1;
        }
        let mut ema = model.clone();
        ema.set_params(&opt.shadow)?;
        let eval_on = if splits.val.is_empty() { &splits.train } else { &splits.val };
        let val_mae = normalized_forecast_mae(&ema, road, eval_on)?;
        log::info!("traffic epoch {epoch}: train {:.3e} val mae {:.4}", loss_sum / n as f64, val_mae);
        if best.as_ref().is_none_or(|b| val_mae < b.0) {
            best = Some((val_mae, opt.shadow.clone()));
        }
        history.push(TrafficEpoch {
            epoch,
            train_mse: loss_sum / n as f64,
            val_mae,
        });
    }
    let (_, p) = best.expect("at least one epoch");
    model.set_params(&p)?;
    Ok((model, history))
}

/// Periodic speeds on a ring of sensors with forward distances, for tests and demos.
/// Each sensor follows `mean + amp sin(2 pi t / period + phase_i)` plus small noise.
pub fn synthetic_traffic(sensors: usize, steps: usize, period: f64, seed: u64) -> (SensorSeries, Vec<DistanceEntry>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.2).expect("valid std");
    let phases: Vec<f64> = (0..sensors).map(|i| 2.0 * PI * i as f64 / sensors as f64).collect();
    let means: Vec<f64> = (0..sensors).map(|_| rng.random_range(55.0..65.0)).collect();
    let speeds = DenseMatrix::from_fn(steps, sensors, |t, i| {
        means[i] + 10.0 * (2.0 * PI * t as f64 / period + phases[i]).sin() + noise.sample(&mut rng)
    });
    let start = 1_704_067_200; // 2024-01-01 00:00, a Monday
    let ids: Vec<String> = (0..sensors).map(|i| format!("s{i}")).collect();
    let mut distances = Vec::new();
    for i in 0..sensors {
        distances.push(DistanceEntry {
            from: ids[i].clone(),
            to: ids[i].clone(),
            distance: 0.0,
        });
        for k in 1..=2 {
            distances.push(DistanceEntry {
                from: ids[i].clone(),
                to: ids[(i + k) % sensors].clone(),
                distance: 500.0 * k as f64 + rng.random_range(0.0..100.0),
            });
        }
    }
    let series = SensorSeries {
        sensor_ids: ids,
        timestamps: (0..steps as i64).map(|k| start + 300 * k).collect(),
        interval: 300,
        speeds,
        filled: Vec::new(),
    };
    (series, distances)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_fill_and_grid() {
        let csv = "time,a,b\n2024-01-01 00:00:00,50,\n2024-01-01 00:05:00,,61\n2024-01-01 00:10:00,52,NaN\n";
        let s = read_speeds(csv.as_bytes()).unwrap();
        assert_eq!(s.interval, 300);
        assert_eq!(s.speeds.data(), &[50.0, 61.0, 50.0, 61.0, 52.0, 61.0]);
        assert_eq!(s.filled, vec![(0, 1), (1, 0), (2, 1)]);
        let bad = "time,a\n2024-01-01 00:00:00,1\n2024-01-01 00:05:00,1\n2024-01-01 00:15:00,1\n";
        assert!(matches!(read_speeds(bad.as_bytes()), Err(Error::Ingestion(_))));
    }

    #[test]
    fn negative_distance_rejected() {
        let csv = "from,to,distance\na,b,-1\n";
        assert!(matches!(read_distances(csv.as_bytes()), Err(Error::Ingestion(_))));
    }

    #[test]
    fn midnight_monday_features() {
        let f = time_features(1_704_067_200);
        assert_eq!(f, [1.0, 0.0, 1.0, 0.0]);
        let noon = time_features(1_704_067_200 + 43_200);
        assert!((noon[0] + 1.0).abs() < 1e-15 && noon[1].abs() < 1e-15);
    }
}
