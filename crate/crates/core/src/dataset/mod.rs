//! Trajectory datasets: instance sampling over graph/time domains, reference simulation,
//! degradation (noise and missing nodes), loss masks and the on-disk layout.

mod io;
mod loss;

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynsys::{
    sample_heat_instance, sample_kuramoto_instance, wrap_phase, sample_rossler_instance, InstanceRanges, StateMatrix,
    SystemKind, SystemSpec,
};
use crate::error::{param_err, Error, Result};
use crate::graph::{generate_er, k_hop_neighborhood, Graph, NodeSet};
use crate::odesolve::{solve, SolveReport, SolverConfig};
use crate::trajectory::Trajectory;

pub use io::{load_trajectory, read_trajectory, save_trajectory, write_trajectory};
pub use loss::{masked_mse, masked_mse_grad};

/// Resampling budget per sample when the reference solver fails.
const MAX_ATTEMPTS: u32 = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GraphDomain {
    #[default]
    #[serde(rename = "g_int")]
    Int,
    #[serde(rename = "g_ext")]
    Ext,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimeDomain {
    #[default]
    #[serde(rename = "t_int")]
    Int,
    #[serde(rename = "t_ext")]
    Ext,
}

impl FromStr for GraphDomain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "g_int" | "int" => Ok(Self::Int),
            "g_ext" | "ext" => Ok(Self::Ext),
            other => param_err(format!("unknown graph domain '{other}'")),
        }
    }
}

impl FromStr for TimeDomain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t_int" | "int" => Ok(Self::Int),
            "t_ext" | "ext" => Ok(Self::Ext),
            other => param_err(format!("unknown time domain '{other}'")),
        }
    }
}

impl GraphDomain {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Int => "g_int",
            Self::Ext => "g_ext",
        }
    }
}

impl TimeDomain {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Int => "t_int",
            Self::Ext => "t_ext",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeRange {
    pub t_int: f64,
    pub t_ext: f64,
    pub dt: (f64, f64),
}

impl TimeRange {
    pub fn horizon(&self, dom: TimeDomain) -> f64 {
        match dom {
            TimeDomain::Int => self.t_int,
            TimeDomain::Ext => self.t_ext,
        }
    }
}

/// Graph-size and time-horizon ranges per domain and system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    pub g_int_nodes: (usize, usize),
    pub g_int_edges: (usize, usize),
    pub g_ext_nodes: (usize, usize),
    pub g_ext_edges: (usize, usize),
    pub heat: TimeRange,
    pub rossler: TimeRange,
    pub kuramoto: TimeRange,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            g_int_nodes: (100, 200),
            g_int_edges: (100, 400),
            g_ext_nodes: (2000, 3000),
            g_ext_edges: (2000, 6000),
            heat: TimeRange {
                t_int: 1.0,
                t_ext: 2.0,
                dt: (0.01, 0.09),
            },
            rossler: TimeRange {
                t_int: 40.0,
                t_ext: 50.0,
                dt: (0.5, 1.5),
            },
            kuramoto: TimeRange {
                t_int: 5.0,
                t_ext: 5.0,
                dt: (0.1, 0.4),
            },
        }
    }
}

impl DomainConfig {
    /// Small graphs for runs that must finish on one CPU in minutes.
    pub fn desk() -> Self {
        Self {
            g_int_nodes: (20, 50),
            g_int_edges: (20, 100),
            g_ext_nodes: (100, 200),
            g_ext_edges: (100, 400),
            ..Self::default()
        }
    }

    pub fn time(&self, kind: SystemKind) -> &TimeRange {
        match kind {
            SystemKind::Heat => &self.heat,
            SystemKind::Rossler => &self.rossler,
            SystemKind::Kuramoto => &self.kuramoto,
        }
    }

    pub fn graph_ranges(&self, dom: GraphDomain) -> ((usize, usize), (usize, usize)) {
        match dom {
            GraphDomain::Int => (self.g_int_nodes, self.g_int_edges),
            GraphDomain::Ext => (self.g_ext_nodes, self.g_ext_edges),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in [self.g_int_nodes, self.g_ext_nodes] {
            if lo < 2 || hi < lo {
                return param_err("node ranges need 2 <= lo <= hi");
            }
        }
        for (lo, hi) in [self.g_int_edges, self.g_ext_edges] {
            if hi < lo {
                return param_err("edge ranges need lo <= hi");
            }
        }
        for t in [&self.heat, &self.rossler, &self.kuramoto] {
            if !(t.t_int > 0.0 && t.t_ext >= t.t_int && t.dt.0 > 0.0 && t.dt.1 >= t.dt.0) {
                return param_err("time ranges need 0 < t_int <= t_ext and 0 < dt_lo <= dt_hi");
            }
        }
        Ok(())
    }
}

/// Mixes a base seed with a sample index and attempt number.
pub fn derive_seed(seed: u64, index: u64, attempt: u64) -> u64 {
    let mut z = seed
        ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ attempt.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Output times after 0 with steps drawn uniformly from `dt`, stopping at `t_end`.
pub fn sample_time_grid<R: Rng + ?Sized>(t_end: f64, dt: (f64, f64), rng: &mut R) -> Vec<f64> {
    let mut times = Vec::new();
    let mut t = 0.0;
    loop {
        let h = if dt.1 > dt.0 { rng.random_range(dt.0..=dt.1) } else { dt.0 };
        if t + h > t_end * (1.0 + 1e-12) {
            break;
        }
        t += h;
        times.push(t);
    }
    if times.is_empty() {
        times.push(t_end);
    }
    times
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub system: SystemKind,
    #[serde(default)]
    pub graph_domain: GraphDomain,
    #[serde(default)]
    pub time_domain: TimeDomain,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub domains: DomainConfig,
    #[serde(default)]
    pub ranges: InstanceRanges,
    /// Kuramoto interaction threshold; all pairs when absent.
    #[serde(default)]
    pub theta_th: Option<f64>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_train_fraction() -> f64 {
    0.8
}

fn default_count() -> usize {
    1000
}

impl DatasetConfig {
    pub fn new(system: SystemKind, graph_domain: GraphDomain, time_domain: TimeDomain, count: usize, seed: u64) -> Self {
        Self {
            system,
            graph_domain,
            time_domain,
            count,
            seed,
            solver: SolverConfig::default(),
            domains: DomainConfig::default(),
            ranges: InstanceRanges::default(),
            theta_th: None,
            train_fraction: default_train_fraction(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.domains.validate()?;
        self.solver.validate()?;
        if self.count == 0 {
            return param_err("dataset count must be positive");
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return param_err("train fraction must lie in [0, 1]");
        }
        if let Some(th) = self.theta_th {
            if !(th > 0.0) {
                return param_err("theta_th must be positive");
            }
        }
        Ok(())
    }

    /// Number of leading samples assigned to training.
    pub fn num_train(&self) -> usize {
        ((self.count as f64) * self.train_fraction).round() as usize
    }
}

/// Draws one system instance and its initial state.
pub fn sample_system(
    kind: SystemKind,
    graph_domain: GraphDomain,
    domains: &DomainConfig,
    ranges: &InstanceRanges,
    theta_th: Option<f64>,
    seed: u64,
) -> Result<(SystemSpec<f64>, StateMatrix<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ((n_lo, n_hi), (e_lo, e_hi)) = domains.graph_ranges(graph_domain);
    let n = rng.random_range(n_lo..=n_hi);
    let inst_seed: u64 = rng.random();
    if kind == SystemKind::Kuramoto {
        let (mut rule, s0) = sample_kuramoto_instance::<f64>(n, inst_seed, ranges);
        if let Some(th) = theta_th {
            rule.theta_th = th;
        }
        return Ok((SystemSpec::kuramoto(&rule), s0));
    }
    let e = rng.random_range(e_lo..=e_hi).clamp(n - 1, n * (n - 1) / 2);
    let graph_seed: u64 = rng.random();
    let g = generate_er(n, e, graph_seed)?;
    Ok(match kind {
        SystemKind::Heat => sample_heat_instance(&g, inst_seed, ranges),
        SystemKind::Rossler => sample_rossler_instance(&g, inst_seed, ranges),
        SystemKind::Kuramoto => unreachable!(),
    })
}

/// Reference trajectory of `spec` at `times` (after `t = 0`).
pub fn simulate(
    spec: &SystemSpec<f64>,
    s0: &StateMatrix<f64>,
    times: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveReport<f64>> {
    spec.validate()?;
    solve(spec.rhs(), s0, times, cfg)
}

/// One clean sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub seed: u64,
    pub spec: SystemSpec<f64>,
    pub clean: Trajectory<f64>,
    pub nfev: u64,
}

/// Draws and simulates sample `index`; solver failures resample with a new seed.
pub fn generate_sample(cfg: &DatasetConfig, index: usize) -> Result<Sample> {
    let t = cfg.domains.time(cfg.system);
    let horizon = t.horizon(cfg.time_domain);
    let mut last_err = None;
    for attempt in 0..MAX_ATTEMPTS {
        let seed = derive_seed(cfg.seed, index as u64, attempt as u64);
        let (spec, s0) = sample_system(cfg.system, cfg.graph_domain, &cfg.domains, &cfg.ranges, cfg.theta_th, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX, 0));
        let times = sample_time_grid(horizon, t.dt, &mut rng);
        match simulate(&spec, &s0, &times, &cfg.solver) {
            Ok(rep) => {
                return Ok(Sample {
                    index,
                    seed,
                    spec,
                    clean: rep.trajectory,
                    nfev: rep.nfev,
                })
            }
            Err(e) => {
                log::warn!("sample {index} attempt {attempt}: solver failed ({e}); resampling");
                last_err = Some(e);
            }
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Generates all samples in memory, in index order.
pub fn generate_samples(cfg: &DatasetConfig) -> Result<Vec<Sample>> {
    cfg.validate()?;
    (0..cfg.count).into_par_iter().map(|k| generate_sample(cfg, k)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleFile {
    pub index: usize,
    pub seed: u64,
    pub traj: String,
    pub spec: String,
    pub num_nodes: usize,
    pub num_steps: usize,
    pub nfev: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub config: DatasetConfig,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub files: Vec<SampleFile>,
}

impl DatasetManifest {
    pub fn validate(&self, dir: &Path) -> Result<()> {
        if self.files.len() != self.config.count || self.train.len() + self.val.len() != self.config.count {
            return Err(Error::Format("manifest counts do not match its file index".into()));
        }
        for f in &self.files {
            for name in [&f.traj, &f.spec] {
                if !dir.join(name).is_file() {
                    return Err(Error::Format(format!("dataset file {name} is missing")));
                }
            }
        }
        Ok(())
    }
}

fn write_sample(dir: &Path, s: &Sample) -> Result<SampleFile> {
    let traj = format!("sample_{}.traj", s.index);
    let spec = format!("sample_{}.spec.json", s.index);
    save_trajectory(&s.clean, dir.join(&traj))?;
    fs::write(dir.join(&spec), serde_json::to_string(&s.spec)? + "\n")?;
    Ok(SampleFile {
        index: s.index,
        seed: s.seed,
        traj,
        spec,
        num_nodes: s.spec.num_nodes(),
        num_steps: s.clean.num_steps(),
        nfev: s.nfev,
    })
}

/// Generates a dataset into `dir` (created if needed) and writes its manifest.
pub fn generate_dataset(cfg: &DatasetConfig, dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let samples = generate_samples(cfg)?;
    let files = samples
        .par_iter()
        .map(|s| write_sample(dir, s))
        .collect::<Result<Vec<_>>>()?;
    let n_train = cfg.num_train();
    let manifest = DatasetManifest {
        config: cfg.clone(),
        train: (0..n_train).collect(),
        val: (n_train..cfg.count).collect(),
        files,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

/// A dataset loaded back from disk.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        manifest.validate(&dir)?;
        let samples = manifest
            .files
            .iter()
            .map(|f| {
                let spec: SystemSpec<f64> = serde_json::from_str(&fs::read_to_string(dir.join(&f.spec))?)?;
                spec.validate()?;
                Ok(Sample {
                    index: f.index,
                    seed: f.seed,
                    spec,
                    clean: load_trajectory(dir.join(&f.traj))?,
                    nfev: f.nfev,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dir, manifest, samples })
    }

    pub fn from_samples(cfg: DatasetConfig, samples: Vec<Sample>) -> Self {
        let n_train = cfg.num_train().min(samples.len());
        let manifest = DatasetManifest {
            train: (0..n_train).collect(),
            val: (n_train..samples.len()).collect(),
            files: Vec::new(),
            config: cfg,
        };
        Self {
            dir: PathBuf::new(),
            manifest,
            samples,
        }
    }

    pub fn train(&self) -> Vec<&Sample> {
        self.manifest.train.iter().map(|&i| &self.samples[i]).collect()
    }

    pub fn val(&self) -> Vec<&Sample> {
        self.manifest.val.iter().map(|&i| &self.samples[i]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegradationSpec {
    pub noise_sigma: f64,
    pub missing_fraction: f64,
    pub rng_seed: u64,
}

impl Default for DegradationSpec {
    fn default() -> Self {
        Self {
            noise_sigma: 0.001,
            missing_fraction: 0.1,
            rng_seed: 0,
        }
    }
}

impl DegradationSpec {
    pub fn clean() -> Self {
        Self {
            noise_sigma: 0.0,
            missing_fraction: 0.0,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0) || !(0.0..1.0).contains(&self.missing_fraction) {
            return param_err("degradation needs sigma >= 0 and 0 <= p < 1");
        }
        Ok(())
    }
}

/// Noisy trajectory, missing nodes and the per-node loss mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DegradedSample {
    pub noisy: Trajectory<f64>,
    pub missing: NodeSet,
    /// `true` = node contributes to the loss.
    pub mask: Vec<bool>,
    /// Set when the mask excludes every node.
    pub degenerate: bool,
}

/// Adds iid `Normal(0, sigma^2)` noise to every state entry, marks `ceil(p N)` nodes
/// missing and masks out their `depth`-hop neighbourhood.
pub fn degrade(traj: &Trajectory<f64>, graph: &Graph, spec: &DegradationSpec, depth: usize) -> Result<DegradedSample> {
    spec.validate()?;
    let n = traj.num_nodes();
    if graph.num_nodes() != n {
        return param_err("graph and trajectory node counts differ");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let n_missing = ((spec.missing_fraction * n as f64).ceil() as usize).min(n);
    let missing: NodeSet = index::sample(&mut rng, n, n_missing).into_iter().collect();
    let mut noisy = traj.clone();
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Parameter(e.to_string()))?;
        for s in &mut noisy.states {
            for v in s.data_mut() {
                *v += normal.sample(&mut rng);
            }
        }
    }
    let excluded = k_hop_neighborhood(graph, &missing, depth)?;
    let mask: Vec<bool> = (0..n).map(|i| !excluded.contains(&i)).collect();
    let degenerate = !mask.iter().any(|&m| m);
    if degenerate {
        log::warn!("degradation masks out every node");
    }
    Ok(DegradedSample {
        noisy,
        missing,
        mask,
        degenerate,
    })
}

/// Sum of absolute errors and entry count between two raw states. Kuramoto phase
/// errors are wrapped into `[0, pi]`.
pub fn abs_error_sum(kind: SystemKind, pred: &StateMatrix<f64>, truth: &StateMatrix<f64>) -> Result<(f64, usize)> {
    if pred.shape() != truth.shape() {
        return param_err("prediction and truth shapes differ");
    }
    let sum = pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(&p, &t)| match kind {
            SystemKind::Kuramoto => wrap_phase(p - t).abs(),
            _ => (p - t).abs(),
        })
        .sum();
    Ok((sum, pred.data().len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::DenseMatrix;

    fn desk_cfg(kind: SystemKind, count: usize) -> DatasetConfig {
        DatasetConfig {
            domains: DomainConfig::desk(),
            solver: SolverConfig::default().with_tol(1e-8),
            ..DatasetConfig::new(kind, GraphDomain::Int, TimeDomain::Int, count, 3)
        }
    }

    #[test]
    fn heat_samples_respect_domains() {
        let cfg = DatasetConfig {
            domains: DomainConfig {
                g_int_nodes: (100, 120),
                ..DomainConfig::default()
            },
            ..desk_cfg(SystemKind::Heat, 10)
        };
        let samples = generate_samples(&cfg).unwrap();
        assert_eq!(samples.len(), 10);
        for s in &samples {
            let n = s.spec.num_nodes();
            assert!((100..=120).contains(&n));
            let e = s.spec.graph.num_edges();
            assert!((100..=400).contains(&e));
            assert!(*s.clean.times.last().unwrap() <= 1.0 + 1e-12);
            for dt in s.clean.dt_sequence() {
                assert!((0.01..=0.09 + 1e-12).contains(&dt));
            }
        }
    }

    #[test]
    fn rossler_horizon() {
        let mut cfg = desk_cfg(SystemKind::Rossler, 2);
        cfg.domains.g_int_nodes = (5, 8);
        cfg.domains.g_int_edges = (5, 10);
        for s in generate_samples(&cfg).unwrap() {
            assert!(*s.clean.times.last().unwrap() <= 40.0);
        }
    }

    #[test]
    fn time_grid_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = sample_time_grid(2.0, (0.01, 0.09), &mut rng);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(*g.last().unwrap() <= 2.0 && *g.last().unwrap() > 2.0 - 0.09);
    }

    #[test]
    fn files_are_reproducible() {
        let cfg = desk_cfg(SystemKind::Heat, 3);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let m = generate_dataset(&cfg, a.path()).unwrap();
        generate_dataset(&cfg, b.path()).unwrap();
        for name in ["manifest.json", "sample_0.traj", "sample_2.spec.json"] {
            assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
        }
        assert_eq!(m.train, vec![0, 1]);
        assert_eq!(m.val, vec![2]);
        let ds = Dataset::load(a.path()).unwrap();
        assert_eq!(ds.samples.len(), 3);
        let again = generate_sample(&cfg, 1).unwrap();
        assert_eq!(ds.samples[1].clean, again.clean);
        fs::remove_file(a.path().join("sample_1.traj")).unwrap();
        assert!(Dataset::load(a.path()).is_err());
    }

    #[test]
    fn clean_degradation_is_identity() {
        let traj = Trajectory::new(vec![0.0, 0.1], vec![DenseMatrix::column(vec![1.0, 0.0, 1.0]); 2]).unwrap();
        let d = degrade(&traj, &Graph::path(3), &DegradationSpec::clean(), 2).unwrap();
        assert_eq!(d.noisy, traj);
        assert!(d.mask.iter().all(|&m| m));
        assert!(d.missing.is_empty());
    }

    #[test]
    fn noise_statistics() {
        let states = vec![DenseMatrix::zeros(1000, 1); 101];
        let times: Vec<f64> = (0..101).map(|k| k as f64).collect();
        let traj = Trajectory::new(times, states).unwrap();
        let g = Graph::path(1000);
        let spec = DegradationSpec {
            noise_sigma: 0.001,
            missing_fraction: 0.0,
            rng_seed: 4,
        };
        let d = degrade(&traj, &g, &spec, 2).unwrap();
        let vals: Vec<f64> = d.noisy.states.iter().flat_map(|s| s.data().to_vec()).collect();
        let n = vals.len() as f64;
        let mean_abs = vals.iter().map(|v| v.abs()).sum::<f64>() / n;
        let std = (vals.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        assert!((mean_abs - 0.001 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.02 * 7.98e-4);
        assert!((std - 0.001).abs() < 0.02 * 0.001);
    }

    #[test]
    fn mask_is_complement_of_khop() {
        let g = Graph::path(10);
        let traj = Trajectory::new(vec![0.0], vec![DenseMatrix::zeros(10, 1)]).unwrap();
        let spec = DegradationSpec {
            noise_sigma: 0.0,
            missing_fraction: 0.1,
            rng_seed: 11,
        };
        let d = degrade(&traj, &g, &spec, 2).unwrap();
        assert_eq!(d.missing.len(), 1);
        let m = *d.missing.iter().next().unwrap() as i64;
        for i in 0..10i64 {
            assert_eq!(d.mask[i as usize], (i - m).abs() > 2, "node {i} missing {m}");
        }
    }
}
