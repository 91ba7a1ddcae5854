//! Evaluation harness: rollout MAE on fresh instances with t-intervals, Lyapunov
//! exponent estimation, NFEV/runtime benchmarks and the Kuramoto threshold sweep.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::{
    abs_error_sum, derive_seed, generate_sample, sample_time_grid, simulate, DatasetConfig,
    DomainConfig, GraphDomain, TimeDomain,
};
use crate::dynsys::{sample_heat_instance, sample_kuramoto_instance, sample_rossler_instance, InstanceRanges, StateMatrix, SystemKind, SystemSpec};
use crate::error::{param_err, Error, Result};
use crate::graph::generate_er;
use crate::ngs::{provider_for_system, rollout, NgsConfig, NgsModel};
use crate::odesolve::{Method, SolverConfig};
use crate::scalar::Scalar;
use crate::trajectory::Trajectory;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalTask {
    pub system: SystemKind,
    pub graph_domain: GraphDomain,
    pub time_domain: TimeDomain,
    #[serde(default = "default_eval_count")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub domains: DomainConfig,
    #[serde(default)]
    pub ranges: InstanceRanges,
    #[serde(default)]
    pub theta_th: Option<f64>,
}

fn default_eval_count() -> usize {
    50
}

impl EvalTask {
    pub fn new(system: SystemKind, graph_domain: GraphDomain, time_domain: TimeDomain) -> Self {
        Self {
            system,
            graph_domain,
            time_domain,
            count: default_eval_count(),
            seed: 0,
            solver: SolverConfig::default(),
            domains: DomainConfig::default(),
            ranges: InstanceRanges::default(),
            theta_th: None,
        }
    }

    /// Short tag such as `heat_g_int_t_ext`.
    pub fn tag(&self) -> String {
        format!("{}_{}_{}", self.system.name(), self.graph_domain.tag(), self.time_domain.tag())
    }

    /// Instances are always simulated to the domain's horizon: `T_int` or `T_ext`.
    fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            solver: self.solver.clone(),
            domains: self.domains.clone(),
            ranges: self.ranges.clone(),
            theta_th: self.theta_th,
            ..DatasetConfig::new(self.system, self.graph_domain, self.time_domain, self.count, self.seed)
        }
    }
}

/// Parses `system:graph_domain:time_domain`, e.g. `thermal:g_ext:t_ext`.
impl FromStr for EvalTask {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return param_err(format!("task '{s}' is not system:graph_domain:time_domain"));
        }
        Ok(Self::new(parts[0].parse()?, parts[1].parse()?, parts[2].parse()?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEval {
    pub index: usize,
    pub seed: u64,
    pub num_nodes: usize,
    pub num_steps: usize,
    /// `None` when the rollout diverged.
    pub mae: Option<f64>,
}

/// Mean with a 95% Student-t confidence interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: f64,
    pub low: f64,
    pub high: f64,
    pub n: usize,
}

/// t-interval of the mean; the half width is NaN for fewer than two values.
pub fn mean_ci95(values: &[f64]) -> Result<MeanCi> {
    let n = values.len();
    if n == 0 {
        return param_err("no values to summarize");
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let half_width = if n < 2 {
        f64::NAN
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .map_err(|e| Error::Numerical(e.to_string()))?
            .inverse_cdf(0.975);
        t * (var / n as f64).sqrt()
    };
    Ok(MeanCi {
        mean,
        half_width,
        low: mean - half_width,
        high: mean + half_width,
        n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub task: String,
    pub mae: MeanCi,
    pub diverged: usize,
    pub ci_method: String,
    pub samples: Vec<SampleEval>,
}

/// MAE of a rollout against a reference over `times > t_from`, all nodes and channels.
pub fn trajectory_mae<T: Scalar>(
    kind: SystemKind,
    spec: &SystemSpec<T>,
    pred_encoded: &Trajectory<T>,
    truth: &Trajectory<f64>,
    t_from: f64,
) -> Result<Option<f64>> {
    let mut sum = 0.0;
    let mut count = 0;
    for ((t, pred), tr) in truth.times.iter().zip(&pred_encoded.states).zip(&truth.states).skip(1) {
        if *t <= t_from * (1.0 + 1e-12) {
            continue;
        }
        let raw = spec.decode_state(pred)?.cast::<f64>();
        if !raw.is_finite() {
            return Ok(None);
        }
        let (a, c) = abs_error_sum(kind, &raw, tr)?;
        sum += a;
        count += c;
    }
    if count == 0 {
        return param_err("evaluation window contains no time points");
    }
    Ok(Some(sum / count as f64))
}

/// Rolls the model out from the clean initial state of every fresh instance and reports
/// the MAE against the reference solver. Time extrapolation scores only `t > T_int`.
pub fn evaluate_task<T: Scalar>(model: &NgsModel<T>, task: &EvalTask) -> Result<EvalSummary> {
    if task.count == 0 {
        return param_err("evaluation needs at least one sample");
    }
    let dcfg = task.dataset_config();
    dcfg.validate()?;
    let t_from = match task.time_domain {
        TimeDomain::Int => 0.0,
        TimeDomain::Ext => task.domains.time(task.system).t_int,
    };
    let samples = (0..task.count)
        .into_par_iter()
        .map(|k| -> Result<SampleEval> {
            let s = generate_sample(&dcfg, k)?;
            let spec = s.spec.cast::<T>();
            let s0 = spec.encode_state(&s.clean.states[0].cast())?;
            let dts: Vec<T> = s.clean.dt_sequence().into_iter().map(T::lit).collect();
            let mut provider = provider_for_system(&spec)?;
            let mae = match rollout(model, &s0, &dts, provider.as_mut()) {
                Ok(rep) => trajectory_mae(task.system, &spec, &rep.trajectory, &s.clean, t_from)?,
                Err(Error::RolloutDivergence { step }) => {
                    log::warn!("sample {k}: rollout diverged at step {step}");
                    None
                }
                Err(e) => return Err(e),
            };
            Ok(SampleEval {
                index: k,
                seed: s.seed,
                num_nodes: s.spec.num_nodes(),
                num_steps: s.clean.num_steps(),
                mae,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let maes: Vec<f64> = samples.iter().filter_map(|s| s.mae).collect();
    let diverged = samples.len() - maes.len();
    if maes.is_empty() {
        return Err(Error::RolloutDivergence { step: 0 });
    }
    Ok(EvalSummary {
        task: task.tag(),
        mae: mean_ci95(&maes)?,
        diverged,
        ci_method: "student-t interval over per-sample MAE".into(),
        samples,
    })
}

/// Average Euclidean distance between matching node rows.
pub fn discrepancy(a: &StateMatrix<f64>, b: &StateMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() || a.rows() == 0 {
        return param_err("discrepancy needs equal, non-empty states");
    }
    let total: f64 = (0..a.rows())
        .map(|i| a.row(i).iter().zip(b.row(i)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
        .sum();
    Ok(total / a.rows() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovConfig {
    pub stds: Vec<f64>,
    /// Fit window; defaults to `[0.1 T, 0.6 T]`.
    pub fit_window: Option<(f64, f64)>,
    pub replicates: usize,
    pub horizon: f64,
    /// Output grid spacing.
    pub dt: f64,
    pub seed: u64,
    /// A fit fails when the discrepancy reaches this fraction of its maximum before the
    /// window opens, after growing by more than a factor of ten.
    pub saturation_fraction: f64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self {
            stds: vec![1e-8, 1e-6, 1e-4],
            fit_window: None,
            replicates: 5,
            horizon: 200.0,
            dt: 1.0,
            seed: 0,
            saturation_fraction: 0.5,
        }
    }
}

impl LyapunovConfig {
    pub fn window(&self) -> (f64, f64) {
        self.fit_window.unwrap_or((0.1 * self.horizon, 0.6 * self.horizon))
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.window();
        if !(self.horizon > 0.0 && self.dt > 0.0 && self.replicates > 0) {
            return param_err("Lyapunov runs need positive horizon, dt and replicates");
        }
        if !(0.0 <= a && a < b && b <= self.horizon) {
            return Err(Error::FitWindow(format!("window [{a}, {b}] not inside [0, {}]", self.horizon)));
        }
        if self.stds.iter().any(|s| !(*s >= 0.0)) {
            return param_err("perturbation stds must be non-negative");
        }
        Ok(())
    }

    fn times(&self) -> Vec<f64> {
        let n = (self.horizon / self.dt).round() as usize;
        (1..=n).map(|k| k as f64 * self.dt).collect()
    }
}

/// Least-squares slope of `ln delta` over the fit window.
pub fn fit_exponent(times: &[f64], deltas: &[f64], window: (f64, f64), saturation_fraction: f64) -> Result<f64> {
    if times.len() != deltas.len() {
        return param_err("times and discrepancies differ in length");
    }
    let (ta, tb) = window;
    let max_all = deltas.iter().copied().fold(0.0, f64::max);
    let max_before = times
        .iter()
        .zip(deltas)
        .filter(|(t, _)| **t < ta)
        .map(|(_, d)| *d)
        .fold(0.0, f64::max);
    if let Some(&d0) = deltas.first() {
        if max_all > 10.0 * d0 && max_before >= saturation_fraction * max_all {
            return Err(Error::FitWindow(format!("discrepancy saturates before t = {ta}")));
        }
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(deltas)
        .filter(|(t, _)| **t >= ta && **t <= tb)
        .map(|(&t, &d)| (t, d))
        .collect();
    if pts.len() < 2 {
        return Err(Error::FitWindow(format!("fewer than two samples in [{ta}, {tb}]")));
    }
    if pts.iter().any(|(_, d)| !(*d > 0.0) || !d.is_finite()) {
        return Err(Error::FitWindow("discrepancy is zero or non-finite inside the window".into()));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|(t, d)| (t - mt) * (d.ln() - ml)).sum();
    let den: f64 = pts.iter().map(|(t, _)| (t - mt).powi(2)).sum();
    Ok(num / den)
}

/// Which simulator produces the trajectories.
pub enum Simulator<'a, T> {
    Solver(SolverConfig),
    Ngs(&'a NgsModel<T>),
}

impl<T: Scalar> Simulator<'_, T> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Solver(_) => "solver",
            Self::Ngs(_) => "ngs",
        }
    }

    /// Raw-state trajectory at `times` (after `t = 0`).
    pub fn run(&self, spec: &SystemSpec<f64>, s0: &StateMatrix<f64>, times: &[f64]) -> Result<Vec<StateMatrix<f64>>> {
        match self {
            Self::Solver(cfg) => Ok(simulate(spec, s0, times, cfg)?.trajectory.states),
            Self::Ngs(model) => {
                let spec_t = spec.cast::<T>();
                let enc = spec_t.encode_state(&s0.cast())?;
                let mut prev = 0.0;
                let dts: Vec<T> = times
                    .iter()
                    .map(|&t| {
                        let dt = t - prev;
                        prev = t;
                        T::lit(dt)
                    })
                    .collect();
                let mut provider = provider_for_system(&spec_t)?;
                let rep = rollout(model, &enc, &dts, provider.as_mut())?;
                rep.trajectory
                    .states
                    .iter()
                    .map(|s| Ok(spec_t.decode_state(s)?.cast()))
                    .collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovRow {
    pub simulator: String,
    pub std: f64,
    pub replicates: usize,
    pub lambda_mean: f64,
    /// Sample standard deviation over replicates; 0 for a single replicate.
    pub lambda_std: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    #[serde(skip)]
    pub lambdas: Vec<f64>,
}

/// Exponent estimates per perturbation size, averaged over replicates.
pub fn lyapunov<T: Scalar>(
    spec: &SystemSpec<f64>,
    s0: &StateMatrix<f64>,
    sim: &Simulator<'_, T>,
    cfg: &LyapunovConfig,
) -> Result<Vec<LyapunovRow>> {
    cfg.validate()?;
    let times = cfg.times();
    let base = sim.run(spec, s0, &times)?;
    let mut grid = vec![0.0];
    grid.extend_from_slice(&times);
    cfg.stds
        .iter()
        .enumerate()
        .map(|(k, &std)| {
            let lambdas = (0..cfg.replicates)
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, k as u64, r as u64));
                    let mut p0 = s0.clone();
                    if std > 0.0 {
                        let normal = Normal::new(0.0, std).map_err(|e| Error::Parameter(e.to_string()))?;
                        p0.data_mut().iter_mut().for_each(|v| *v += normal.sample(&mut rng));
                    }
                    let pert = sim.run(spec, &p0, &times)?;
                    let deltas = base
                        .iter()
                        .zip(&pert)
                        .map(|(a, b)| discrepancy(a, b))
                        .collect::<Result<Vec<_>>>()?;
                    fit_exponent(&grid, &deltas, cfg.window(), cfg.saturation_fraction)
                })
                .collect::<Result<Vec<_>>>()?;
            let n = lambdas.len() as f64;
            let mean = lambdas.iter().sum::<f64>() / n;
            let var = if lambdas.len() > 1 {
                lambdas.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            Ok(LyapunovRow {
                simulator: sim.name().into(),
                std,
                replicates: lambdas.len(),
                lambda_mean: mean,
                lambda_std: var.sqrt(),
                lambda_min: lambdas.iter().copied().fold(f64::INFINITY, f64::min),
                lambda_max: lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                lambdas,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub sizes: Vec<(usize, usize)>,
    /// Kuramoto thresholds; ignored for other systems.
    pub theta_ths: Vec<f64>,
    pub tol: f64,
    pub timeout: Option<f64>,
    pub repeats: usize,
    pub seed: u64,
    pub domains: DomainConfig,
    pub ranges: InstanceRanges,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![(50, 100), (100, 200), (200, 400)],
            theta_ths: vec![FRAC_PI_2, std::f64::consts::FRAC_PI_3, std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_6],
            tol: 1e-11,
            timeout: Some(600.0),
            repeats: 5,
            seed: 0,
            domains: DomainConfig::default(),
            ranges: InstanceRanges::default(),
        }
    }
}

/// One benchmark row. Wall times live in a separate table so that the counts are
/// reproducible byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub system: String,
    pub simulator: String,
    pub nodes: usize,
    pub edges: usize,
    pub theta_th: Option<f64>,
    pub steps: usize,
    pub nfev: u64,
    pub timed_out: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub system: String,
    pub simulator: String,
    pub nodes: usize,
    pub theta_th: Option<f64>,
    pub wall_median_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub timings: Vec<TimingRow>,
    pub note: String,
}

impl BenchResult {
    /// Solver NFEV over NGS NFEV for matching configurations.
    pub fn nfev_ratios(&self) -> Vec<(usize, Option<f64>, f64)> {
        self.rows
            .iter()
            .filter(|r| r.simulator != "ngs")
            .filter_map(|r| {
                self.rows
                    .iter()
                    .find(|n| n.simulator == "ngs" && n.nodes == r.nodes && n.theta_th == r.theta_th)
                    .map(|n| (r.nodes, r.theta_th, r.nfev as f64 / n.nfev as f64))
            })
            .collect()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Solver and NGS on identical instances and time grids. Runs sequentially.
pub fn bench<T: Scalar>(system: SystemKind, model: Option<&NgsModel<T>>, cfg: &BenchConfig) -> Result<BenchResult> {
    if cfg.repeats == 0 || cfg.sizes.is_empty() {
        return param_err("bench needs sizes and at least one repeat");
    }
    let method = if system == SystemKind::Kuramoto {
        Method::StiffSwitching
    } else {
        Method::Rk8
    };
    let solver = SolverConfig {
        timeout: cfg.timeout,
        ..SolverConfig::default().with_tol(cfg.tol).with_method(method)
    };
    let fallback;
    let model = match model {
        Some(m) => m,
        None => {
            fallback = NgsModel::<T>::new(NgsConfig::for_system(system, 16, 16, 2), 0)?;
            &fallback
        }
    };
    let thetas: Vec<Option<f64>> = if system == SystemKind::Kuramoto {
        cfg.theta_ths.iter().map(|&t| Some(t)).collect()
    } else {
        vec![None]
    };
    let trange = cfg.domains.time(system);
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for (si, &(n, e)) in cfg.sizes.iter().enumerate() {
        let seed = derive_seed(cfg.seed, si as u64, 0);
        let (base_spec, s0) = sample_instance(system, n, e, seed, &cfg.ranges)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX, 0));
        let times = sample_time_grid(trange.t_int, trange.dt, &mut rng);
        for &theta in &thetas {
            let mut spec = base_spec.clone();
            if let Some(th) = theta {
                spec.theta_th = Some(th);
            }
            let mut walls = Vec::new();
            let mut nfev = 0;
            let mut timed_out = false;
            for _ in 0..cfg.repeats {
                let start = Instant::now();
                match simulate(&spec, &s0, &times, &solver) {
                    Ok(rep) => nfev = rep.nfev,
                    Err(Error::Timeout { nfev: partial, .. }) => {
                        nfev = partial;
                        timed_out = true;
                    }
                    Err(e) => return Err(e),
                }
                walls.push(start.elapsed().as_secs_f64());
                if timed_out {
                    break;
                }
            }
            let solver_name = match method {
                Method::Rk8 => "rk8",
                Method::StiffSwitching => "stiff_switching",
            };
            rows.push(BenchRow {
                system: system.name().into(),
                simulator: solver_name.into(),
                nodes: n,
                edges: spec.graph.num_edges(),
                theta_th: theta,
                steps: times.len(),
                nfev,
                timed_out,
            });
            timings.push(TimingRow {
                system: system.name().into(),
                simulator: solver_name.into(),
                nodes: n,
                theta_th: theta,
                wall_median_s: median(walls),
            });

            let mut walls = Vec::new();
            let mut ngs_nfev = 0;
            for _ in 0..cfg.repeats {
                let start = Instant::now();
                let spec_t = spec.cast::<T>();
                let enc = spec_t.encode_state(&s0.cast())?;
                let dts: Vec<T> = std::iter::once(times[0])
                    .chain(times.windows(2).map(|w| w[1] - w[0]))
                    .map(T::lit)
                    .collect();
                let mut provider = provider_for_system(&spec_t)?;
                ngs_nfev = match rollout(model, &enc, &dts, provider.as_mut()) {
                    Ok(r) => r.nfev,
                    Err(Error::RolloutDivergence { step }) => step as u64 + 1,
                    Err(e) => return Err(e),
                };
                walls.push(start.elapsed().as_secs_f64());
            }
            rows.push(BenchRow {
                system: system.name().into(),
                simulator: "ngs".into(),
                nodes: n,
                edges: spec.graph.num_edges(),
                theta_th: theta,
                steps: times.len(),
                nfev: ngs_nfev,
                timed_out: false,
            });
            timings.push(TimingRow {
                system: system.name().into(),
                simulator: "ngs".into(),
                nodes: n,
                theta_th: theta,
                wall_median_s: median(walls),
            });
        }
    }
    Ok(BenchResult {
        rows,
        timings,
        note: "solver and NGS both run on CPU; wall times are indicative only".into(),
    })
}

/// One instance of `system` on a fresh connected graph (`edges` is ignored for Kuramoto,
/// which is fully connected).
pub fn sample_instance(
    system: SystemKind,
    n: usize,
    e: usize,
    seed: u64,
    ranges: &InstanceRanges,
) -> Result<(SystemSpec<f64>, StateMatrix<f64>)> {
    if system == SystemKind::Kuramoto {
        let (rule, s0) = sample_kuramoto_instance::<f64>(n, seed, ranges);
        return Ok((SystemSpec::kuramoto(&rule), s0));
    }
    if n < 2 || e < n - 1 || e > n * (n - 1) / 2 {
        return param_err(format!("cannot build a connected simple graph with {n} nodes and {e} edges"));
    }
    let g = generate_er(n, e, seed)?;
    Ok(match system {
        SystemKind::Heat => sample_heat_instance(&g, derive_seed(seed, 1, 0), ranges),
        SystemKind::Rossler => sample_rossler_instance(&g, derive_seed(seed, 1, 0), ranges),
        SystemKind::Kuramoto => unreachable!(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub theta_th: f64,
    pub mae: f64,
    pub nfev_mean: f64,
}

/// Solver MAE of thresholded Kuramoto runs against the all-pairs run, averaged over
/// `count` fully connected instances of `n` oscillators.
pub fn threshold_sweep(
    n: usize,
    thetas: &[f64],
    count: usize,
    horizon: f64,
    solver: &SolverConfig,
    seed: u64,
    ranges: &InstanceRanges,
) -> Result<Vec<ThresholdRow>> {
    if count == 0 || thetas.is_empty() {
        return param_err("threshold sweep needs instances and thresholds");
    }
    let times: Vec<f64> = (1..=((horizon / 0.25).round() as usize)).map(|k| k as f64 * 0.25).collect();
    let per_instance = (0..count)
        .into_par_iter()
        .map(|k| -> Result<Vec<(f64, u64)>> {
            let (rule, s0) = sample_kuramoto_instance::<f64>(n, derive_seed(seed, k as u64, 0), ranges);
            let mut spec = SystemSpec::kuramoto(&rule);
            spec.theta_th = Some(FRAC_PI_2);
            let reference = simulate(&spec, &s0, &times, solver)?.trajectory;
            thetas
                .iter()
                .map(|&th| {
                    spec.theta_th = Some(th);
                    let rep = simulate(&spec, &s0, &times, solver)?;
                    let mut sum = 0.0;
                    let mut cnt = 0;
                    for (a, b) in rep.trajectory.states.iter().zip(&reference.states).skip(1) {
                        let (s, c) = abs_error_sum(SystemKind::Kuramoto, a, b)?;
                        sum += s;
                        cnt += c;
                    }
                    Ok((sum / cnt as f64, rep.nfev))
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(thetas
        .iter()
        .enumerate()
        .map(|(j, &th)| ThresholdRow {
            theta_th: th,
            mae: per_instance.iter().map(|r| r[j].0).sum::<f64>() / count as f64,
            nfev_mean: per_instance.iter().map(|r| r[j].1 as f64).sum::<f64>() / count as f64,
        })
        .collect())
}

/// Writes serializable rows as CSV with a header line.
pub fn write_csv<S: Serialize>(path: impl AsRef<Path>, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
