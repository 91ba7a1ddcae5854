//! Subcommand implementations. Each one resolves its config, writes it to the run
//! directory, produces its output files and prints a JSON summary on stdout.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, FRAC_PI_6};
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use ngs_core::dataset::{
    generate_dataset, generate_sample, save_trajectory, Dataset, DatasetConfig, DomainConfig, GraphDomain,
    TimeDomain,
};
use ngs_core::dynsys::{InstanceRanges, SystemKind};
use ngs_core::evalbench::{
    self, lyapunov as lyapunov_rows, sample_instance, threshold_sweep, trajectory_mae, write_csv,
    BenchConfig, EvalTask, LyapunovConfig, SampleEval, Simulator,
};
use ngs_core::ngs::{provider_for_system, rollout, NgsConfig, NgsModel};
use ngs_core::odesolve::{Method, SolverConfig};
use ngs_core::traffic::{
    self, build_road_graph, denormalized_target, forecast, load_distances, load_speeds, make_windows,
    persistence, synthetic_traffic, traffic_config, traffic_metrics, train_traffic, HorizonMetrics,
    TrafficTrainConfig,
};
use ngs_core::trainer::{TrainConfig, TrainReport, Trainer};
use ngs_core::trajectory::Trajectory;
use ngs_core::Scalar;

use crate::config::{flag_patch, parse_list, parse_sizes, resolve, write_resolved};
use crate::exit::CliError;
use crate::Common;

type CliResult<T> = Result<T, CliError>;

// Aliases keep clap from treating these as repeated arguments.
type Floats = Vec<f64>;
type Sizes = Vec<(usize, usize)>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

/// Network size and initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    /// Number of GN layers; also the masking depth around missing nodes.
    pub depth: usize,
    /// Defaults to the training seed.
    pub init_seed: Option<u64>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            hidden_dim: 32,
            depth: 2,
            init_seed: None,
        }
    }
}

fn to_value<S: Serialize>(v: S) -> Option<Value> {
    Some(serde_json::to_value(v).expect("plain data serializes"))
}

fn opt<S: Serialize>(v: &Option<S>) -> Option<Value> {
    v.as_ref().and_then(to_value)
}

fn print_summary(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value"));
}

fn write_json<S: Serialize>(path: &Path, v: &S) -> CliResult<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::invalid(e.to_string()))? + "\n";
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_rows<S: Serialize>(path: &Path, rows: &[S]) -> CliResult<()> {
    write_csv(path, rows).map_err(CliError::from)
}

pub fn write_diagnostics(out: &Path, subcommand: &str, e: &CliError) {
    let path = out.join("diagnostics.json");
    let body = json!({
        "subcommand": subcommand,
        "exit_code": e.code,
        "error": e.message,
        "details": e.details,
    });
    if fs::create_dir_all(out).and_then(|_| fs::write(&path, body.to_string() + "\n")).is_err() {
        log::error!("could not write {}", path.display());
    }
}

fn load_model<T: Scalar>(stem: &Path) -> CliResult<NgsModel<T>> {
    let stem = stem.with_extension("");
    NgsModel::load(&stem).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("model {}: {}", stem.display(), err.message);
        err
    })
}

fn desk_domains(desk: bool) -> Option<Value> {
    desk.then(|| to_value(DomainConfig::desk())).flatten()
}

fn tol_patch(prefix: &str, tol: Option<f64>) -> Vec<(String, Option<Value>)> {
    vec![
        (format!("{prefix}abs_tol"), tol.and_then(to_value)),
        (format!("{prefix}rel_tol"), tol.and_then(to_value)),
    ]
}

fn patch<'a>(mut fixed: Vec<(&'a str, Option<Value>)>, extra: &'a [(String, Option<Value>)]) -> Value {
    fixed.extend(extra.iter().map(|(k, v)| (k.as_str(), v.clone())));
    flag_patch(fixed)
}

// ---------------------------------------------------------------- generate

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// heat, rossler or kuramoto.
    #[arg(long)]
    system: Option<String>,
    /// g_int or g_ext.
    #[arg(long, alias = "graph-domain")]
    domain: Option<String>,
    /// t_int or t_ext.
    #[arg(long)]
    time_domain: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    /// Kuramoto interaction threshold in radians.
    #[arg(long)]
    theta_th: Option<f64>,
    /// Solver tolerance (absolute and relative).
    #[arg(long)]
    tol: Option<f64>,
    /// Use the small desk-scale graph ranges.
    #[arg(long)]
    desk: bool,
}

pub fn generate(c: &Common, a: &GenerateArgs) -> CliResult<()> {
    let flags = patch(
        vec![
            ("system", opt(&a.system)),
            ("graph_domain", opt(&a.domain)),
            ("time_domain", opt(&a.time_domain)),
            ("count", opt(&a.count)),
            ("seed", opt(&c.seed)),
            ("theta_th", opt(&a.theta_th)),
            ("domains", desk_domains(a.desk)),
        ],
        &tol_patch("solver.", a.tol),
    );
    let cfg: DatasetConfig = resolve(c.config.as_deref(), &c.overrides, flags)?;
    cfg.validate()?;
    write_resolved(&c.out, &cfg)?;
    let manifest = generate_dataset(&cfg, &c.out)?;
    let nodes: Vec<usize> = manifest.files.iter().map(|f| f.num_nodes).collect();
    print_summary(&json!({
        "dataset": c.out,
        "system": cfg.system.name(),
        "count": manifest.files.len(),
        "train": manifest.train.len(),
        "val": manifest.val.len(),
        "nodes_min": nodes.iter().min(),
        "nodes_max": nodes.iter().max(),
        "steps_total": manifest.files.iter().map(|f| f.num_steps).sum::<usize>(),
        "solver_nfev_total": manifest.files.iter().map(|f| f.nfev).sum::<u64>(),
    }));
    Ok(())
}

// ---------------------------------------------------------------- simulate

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub system: SystemKind,
    #[serde(default)]
    pub graph_domain: GraphDomain,
    #[serde(default)]
    pub time_domain: TimeDomain,
    /// Instance index within the seeded stream.
    #[serde(default)]
    pub index: usize,
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
    /// Checkpoint stem of a model to roll out alongside the solver.
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub precision: Precision,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    system: Option<String>,
    #[arg(long, alias = "graph-domain")]
    domain: Option<String>,
    #[arg(long)]
    time_domain: Option<String>,
    #[arg(long)]
    index: Option<usize>,
    #[arg(long)]
    theta_th: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    desk: bool,
}

pub fn simulate(c: &Common, a: &SimulateArgs) -> CliResult<()> {
    let flags = patch(
        vec![
            ("system", opt(&a.system)),
            ("graph_domain", opt(&a.domain)),
            ("time_domain", opt(&a.time_domain)),
            ("index", opt(&a.index)),
            ("seed", opt(&c.seed)),
            ("theta_th", opt(&a.theta_th)),
            ("model", opt(&a.model)),
            ("domains", desk_domains(a.desk)),
        ],
        &tol_patch("solver.", a.tol),
    );
    let cfg: SimulateConfig = resolve(c.config.as_deref(), &c.overrides, flags)?;
    write_resolved(&c.out, &cfg)?;
    match cfg.precision {
        Precision::F64 => simulate_with::<f64>(c, &cfg),
        Precision::F32 => simulate_with::<f32>(c, &cfg),
    }
}

fn simulate_with<T: Scalar>(c: &Common, cfg: &SimulateConfig) -> CliResult<()> {
    let dcfg = DatasetConfig {
        solver: cfg.solver.clone(),
        domains: cfg.domains.clone(),
        ranges: cfg.ranges.clone(),
        theta_th: cfg.theta_th,
        ..DatasetConfig::new(cfg.system, cfg.graph_domain, cfg.time_domain, cfg.index + 1, cfg.seed)
    };
    dcfg.validate()?;
    let model = cfg.model.as_deref().map(load_model::<T>).transpose()?;
    let sample = generate_sample(&dcfg, cfg.index)?;
    save_trajectory(&sample.clean, c.out.join("solver.traj"))?;
    write_json(&c.out.join("spec.json"), &sample.spec)?;
    let mut summary = json!({
        "system": cfg.system.name(),
        "nodes": sample.spec.num_nodes(),
        "edges": sample.spec.graph.num_edges(),
        "steps": sample.clean.num_steps(),
        "solver_nfev": sample.nfev,
    });
    if let Some(model) = model {
        let spec = sample.spec.cast::<T>();
        let s0 = spec.encode_state(&sample.clean.states[0].cast())?;
        let dts: Vec<T> = sample.clean.dt_sequence().into_iter().map(T::lit).collect();
        let mut provider = provider_for_system(&spec)?;
        let rep = rollout(&model, &s0, &dts, provider.as_mut())?;
        let raw = rep
            .trajectory
            .states
            .iter()
            .map(|s| Ok(spec.decode_state(s)?.cast::<f64>()))
            .collect::<ngs_core::Result<Vec<_>>>()?;
        save_trajectory(&Trajectory::new(sample.clean.times.clone(), raw)?, c.out.join("ngs.traj"))?;
        let mae = trajectory_mae(cfg.system, &spec, &rep.trajectory, &sample.clean, 0.0)?;
        summary["ngs_nfev"] = json!(rep.nfev);
        summary["mae"] = json!(mae);
    }
    write_json(&c.out.join("summary.json"), &summary)?;
    print_summary(&summary);
    Ok(())
}

// ---------------------------------------------------------------- train

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    pub dataset: PathBuf,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub precision: Precision,
    /// Continue from `<out>/state.ckpt` when it exists.
    #[serde(default)]
    pub resume: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_min: Option<f64>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    /// Observation noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Fraction of missing nodes.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    f32: bool,
    #[arg(long)]
    resume: bool,
}

fn train_flags(c: &Common, a: &TrainArgs) -> Value {
    flag_patch(vec![
        ("dataset", opt(&a.dataset)),
        ("train.epochs", opt(&a.epochs)),
        ("train.batch_size", opt(&a.batch_size)),
        ("train.lr0", opt(&a.lr)),
        ("train.lr_min", opt(&a.lr_min)),
        ("train.seed", opt(&c.seed)),
        ("train.checkpoint_every", opt(&a.checkpoint_every)),
        ("train.degradation.noise_sigma", opt(&a.sigma)),
        ("train.degradation.missing_fraction", opt(&a.p)),
        ("model.latent_dim", opt(&a.latent_dim)),
        ("model.hidden_dim", opt(&a.hidden_dim)),
        ("model.depth", opt(&a.depth)),
        ("precision", a.f32.then(|| json!("f32"))),
        ("resume", a.resume.then(|| json!(true))),
    ])
}

/// Expected absolute value of zero-mean Gaussian noise.
fn noise_mae(sigma: f64) -> f64 {
    sigma * (2.0 / std::f64::consts::PI).sqrt()
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    #[serde(flatten)]
    report: &'a TrainReport,
    /// `sigma sqrt(2/pi)` for the training noise level.
    noise_mae: f64,
    /// Final validation MAE over the noise MAE; absent without noise.
    val_mae_over_noise: Option<f64>,
}

pub fn train(c: &Common, a: &TrainArgs) -> CliResult<()> {
    let cfg: TrainRunConfig = resolve(c.config.as_deref(), &c.overrides, train_flags(c, a))?;
    cfg.train.validate()?;
    write_resolved(&c.out, &cfg)?;
    match cfg.precision {
        Precision::F64 => train_with::<f64>(c, &cfg),
        Precision::F32 => train_with::<f32>(c, &cfg),
    }
}

fn new_model<T: Scalar>(kind: SystemKind, m: &ModelSpec, seed: u64) -> CliResult<NgsModel<T>> {
    let cfg = NgsConfig::for_system(kind, m.latent_dim, m.hidden_dim, m.depth);
    Ok(NgsModel::new(cfg, m.init_seed.unwrap_or(seed))?)
}

fn train_with<T: Scalar>(c: &Common, cfg: &TrainRunConfig) -> CliResult<()> {
    let ds = Dataset::load(&cfg.dataset)?;
    let model = new_model::<T>(ds.manifest.config.system, &cfg.model, cfg.train.seed)?;
    let mut trainer = Trainer::new(model, &ds, cfg.train.clone())?;
    let state = c.out.join("state.ckpt");
    if cfg.resume && state.is_file() {
        trainer.restore_state(&state)?;
        log::info!("resumed at epoch {}", trainer.epoch);
    }
    let report = trainer.run(Some(&c.out)).map_err(|e| {
        CliError::from(e).with_details(json!({ "history": trainer.history, "epoch": trainer.epoch }))
    })?;
    write_rows(&c.out.join("history.csv"), &report.epochs)?;
    let sigma = cfg.train.degradation.noise_sigma;
    let summary = TrainSummary {
        report: &report,
        noise_mae: noise_mae(sigma),
        val_mae_over_noise: (sigma > 0.0).then(|| report.final_val_mae / noise_mae(sigma)),
    };
    write_json(&c.out.join("report.json"), &summary)?;
    let mut v = serde_json::to_value(&summary).map_err(|e| CliError::invalid(e.to_string()))?;
    if let Some(o) = v.as_object_mut() {
        o.remove("epochs");
    }
    print_summary(&v);
    Ok(())
}

// ---------------------------------------------------------------- evaluate

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub model: PathBuf,
    /// `system:graph_domain:time_domain`, e.g. `heat:g_ext:t_ext`.
    pub tasks: Vec<String>,
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
    #[serde(default)]
    pub precision: Precision,
}

fn default_eval_count() -> usize {
    50
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Checkpoint stem (the `.ckpt`/`.json` pair), e.g. `run/best`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Task `system:graph_domain:time_domain`; repeatable.
    #[arg(long = "task")]
    tasks: Vec<String>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    desk: bool,
    #[arg(long)]
    f32: bool,
}

#[derive(Serialize)]
struct EvalCsvRow {
    index: usize,
    seed: u64,
    num_nodes: usize,
    num_steps: usize,
    mae: Option<f64>,
}

impl From<&SampleEval> for EvalCsvRow {
    fn from(s: &SampleEval) -> Self {
        Self {
            index: s.index,
            seed: s.seed,
            num_nodes: s.num_nodes,
            num_steps: s.num_steps,
            mae: s.mae,
        }
    }
}

pub fn evaluate(c: &Common, a: &EvaluateArgs) -> CliResult<()> {
    let flags = patch(
        vec![
            ("model", opt(&a.model)),
            ("tasks", (!a.tasks.is_empty()).then(|| json!(a.tasks))),
            ("count", opt(&a.count)),
            ("seed", opt(&c.seed)),
            ("domains", desk_domains(a.desk)),
            ("precision", a.f32.then(|| json!("f32"))),
        ],
        &tol_patch("solver.", a.tol),
    );
    let cfg: EvaluateConfig = resolve(c.config.as_deref(), &c.overrides, flags)?;
    if cfg.tasks.is_empty() {
        return Err(CliError::invalid("no evaluation tasks given"));
    }
    for t in &cfg.tasks {
        t.parse::<EvalTask>()?;
    }
    write_resolved(&c.out, &cfg)?;
    match cfg.precision {
        Precision::F64 => evaluate_with::<f64>(c, &cfg),
        Precision::F32 => evaluate_with::<f32>(c, &cfg),
    }
}

fn evaluate_with<T: Scalar>(c: &Common, cfg: &EvaluateConfig) -> CliResult<()> {
    let model = load_model::<T>(&cfg.model)?;
    let mut all = Vec::new();
    for t in &cfg.tasks {
        let base: EvalTask = t.parse()?;
        let task = EvalTask {
            count: cfg.count,
            seed: cfg.seed,
            solver: cfg.solver.clone(),
            domains: cfg.domains.clone(),
            ranges: cfg.ranges.clone(),
            theta_th: cfg.theta_th,
            ..base
        };
        let summary = evalbench::evaluate_task(&model, &task)?;
        let tag = task.tag();
        let rows: Vec<EvalCsvRow> = summary.samples.iter().map(EvalCsvRow::from).collect();
        write_rows(&c.out.join(format!("eval_{tag}.csv")), &rows)?;
        let head = json!({
            "task": summary.task,
            "mae": summary.mae,
            "diverged": summary.diverged,
            "ci_method": summary.ci_method,
        });
        write_json(&c.out.join(format!("eval_{tag}.json")), &head)?;
        all.push(head);
    }
    print_summary(&Value::Array(all));
    Ok(())
}

// ---------------------------------------------------------------- bench

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchRunConfig {
    pub system: SystemKind,
    /// Checkpoint stem; an untrained model is used when absent (NFEV does not depend on weights).
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default)]
    pub precision: Precision,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Graph sizes as `NODESxEDGES`, comma separated.
    #[arg(long, value_parser = parse_sizes)]
    sizes: Option<Sizes>,
    /// Kuramoto thresholds in radians, comma separated.
    #[arg(long, value_parser = parse_list::<f64>)]
    theta_th: Option<Floats>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Per-run solver wall-clock limit in seconds.
    #[arg(long)]
    timeout: Option<f64>,
}

pub fn bench(c: &Common, a: &BenchArgs) -> CliResult<()> {
    let flags = flag_patch(vec![
        ("system", opt(&a.system)),
        ("model", opt(&a.model)),
        ("bench.sizes", opt(&a.sizes)),
        ("bench.theta_ths", opt(&a.theta_th)),
        ("bench.repeats", opt(&a.repeats)),
        ("bench.tol", opt(&a.tol)),
        ("bench.timeout", opt(&a.timeout)),
        ("bench.seed", opt(&c.seed)),
    ]);
    let cfg: BenchRunConfig = resolve(c.config.as_deref(), &c.overrides, flags)?;
    write_resolved(&c.out, &cfg)?;
    match cfg.precision {
        Precision::F64 => bench_with::<f64>(c, &cfg),
        Precision::F32 => bench_with::<f32>(c, &cfg),
    }
}

fn bench_with<T: Scalar>(c: &Common, cfg: &BenchRunConfig) -> CliResult<()> {
    let model = cfg.model.as_deref().map(load_model::<T>).transpose()?;
    let res = evalbench::bench(cfg.system, model.as_ref(), &cfg.bench)?;
    let name = cfg.system.name();
    write_rows(&c.out.join(format!("bench_{name}.csv")), &res.rows)?;
    write_rows(&c.out.join(format!("bench_{name}_timing.csv")), &res.timings)?;
    let ratios: Vec<Value> = res
        .nfev_ratios()
        .into_iter()
        .map(|(n, th, r)| json!({"nodes": n, "theta_th": th, "solver_over_ngs": r}))
        .collect();
    let summary = json!({
        "system": name,
        "rows": res.rows,
        "nfev_ratios": ratios,
        "ngs_nfev_equals_steps": res.rows.iter().filter(|r| r.simulator == "ngs").all(|r| r.nfev == r.steps as u64),
        "note": res.note,
    });
    write_json(&c.out.join(format!("bench_{name}.json")), &summary)?;
    print_summary(&summary);
    Ok(())
}

// ---------------------------------------------------------------- lyapunov

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovRunConfig {
    #[serde(default = "default_lyap_system")]
    pub system: SystemKind,
    #[serde(default = "default_lyap_nodes")]
    pub nodes: usize,
    #[serde(default = "default_lyap_edges")]
    pub edges: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ranges: InstanceRanges,
    /// Fixed Rössler `(a, b, c)` instead of sampled values.
    #[serde(default)]
    pub rossler_abc: Option<[f64; 3]>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub lyapunov: LyapunovConfig,
    #[serde(default)]
    pub precision: Precision,
}

fn default_lyap_system() -> SystemKind {
    SystemKind::Rossler
}

fn default_lyap_nodes() -> usize {
    20
}

fn default_lyap_edges() -> usize {
    40
}

#[derive(Args, Debug)]
pub struct LyapunovArgs {
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    edges: Option<usize>,
    /// Perturbation standard deviations, comma separated.
    #[arg(long, value_parser = parse_list::<f64>)]
    stds: Option<Floats>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Rössler `a,b,c`.
    #[arg(long, value_parser = parse_list::<f64>)]
    abc: Option<Floats>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    model: Option<PathBuf>,
}

pub fn lyapunov(c: &Common, a: &LyapunovArgs) -> CliResult<()> {
    if a.abc.as_ref().is_some_and(|v| v.len() != 3) {
        return Err(CliError::invalid("--abc needs three values"));
    }
    let flags = patch(
        vec![
            ("system", opt(&a.system)),
            ("nodes", opt(&a.nodes)),
            ("edges", opt(&a.edges)),
            ("seed", opt(&c.seed)),
            ("lyapunov.seed", opt(&c.seed)),
            ("lyapunov.stds", opt(&a.stds)),
            ("lyapunov.replicates", opt(&a.replicates)),
            ("lyapunov.horizon", opt(&a.horizon)),
            ("rossler_abc", opt(&a.abc)),
            ("model", opt(&a.model)),
        ],
        &tol_patch("solver.", a.tol),
    );
    let cfg: LyapunovRunConfig = resolve(c.config.as_deref(), &c.overrides, flags)?;
    cfg.lyapunov.validate()?;
    write_resolved(&c.out, &cfg)?;
    match cfg.precision {
        Precision::F64 => lyapunov_with::<f64>(c, &cfg),
        Precision::F32 => lyapunov_with::<f32>(c, &cfg),
    }
}

fn lyapunov_with<T: Scalar>(c: &Common, cfg: &LyapunovRunConfig) -> CliResult<()> {
    let (mut spec, s0) = sample_instance(cfg.system, cfg.nodes, cfg.edges, cfg.seed, &cfg.ranges)?;
    if let Some(abc) = cfg.rossler_abc {
        if cfg.system != SystemKind::Rossler {
            return Err(CliError::invalid("rossler_abc applies to the rossler system only"));
        }
        spec.global_coeffs = abc.to_vec();
    }
    let model = cfg.model.as_deref().map(load_model::<T>).transpose()?;
    let mut rows = lyapunov_rows(&spec, &s0, &Simulator::<T>::Solver(cfg.solver.clone()), &cfg.lyapunov)?;
    if let Some(m) = &model {
        rows.extend(lyapunov_rows(&spec, &s0, &Simulator::Ngs(m), &cfg.lyapunov)?);
    }
    let name = cfg.system.name();
    write_rows(&c.out.join(format!("lyap_{name}.csv")), &rows)?;
    let summary = json!({
        "system": name,
        "nodes": spec.num_nodes(),
        "edges": spec.graph.num_edges(),
        "fit_window": cfg.lyapunov.window(),
        "rows": rows.iter().map(|r| json!({
            "simulator": r.simulator,
            "std": r.std,
            "lambda_mean": r.lambda_mean,
            "lambda_std": r.lambda_std,
            "lambdas": r.lambdas,
        })).collect::<Vec<_>>(),
    });
    write_json(&c.out.join(format!("lyap_{name}.json")), &summary)?;
    print_summary(&summary);
    Ok(())
}

// ---------------------------------------------------------------- sweep

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub dataset: PathBuf,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_sigmas")]
    pub sigmas: Vec<f64>,
    #[serde(default = "default_ps")]
    pub ps: Vec<f64>,
    #[serde(default)]
    pub precision: Precision,
}

fn default_sigmas() -> Vec<f64> {
    vec![0.0, 0.001, 0.01]
}

fn default_ps() -> Vec<f64> {
    vec![0.0, 0.1]
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Noise levels, comma separated.
    #[arg(long, value_parser = parse_list::<f64>)]
    sigma: Option<Floats>,
    /// Missing fractions, comma separated.
    #[arg(long, value_parser = parse_list::<f64>)]
    p: Option<Floats>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
}

#[derive(Serialize)]
struct SweepRow {
    sigma: f64,
    p: f64,
    val_mae: f64,
    val_mse: f64,
    best_epoch: usize,
    degenerate_samples: usize,
}

pub fn sweep(c: &Common, a: &SweepArgs) -> CliResult<()> {
    let flags = flag_patch(vec![
        ("dataset", opt(&a.dataset)),
        ("sigmas", opt(&a.sigma)),
        ("ps", opt(&a.p)),
        ("train.epochs", opt(&a.epochs)),
        ("train.seed", opt(&c.seed)),
        ("model.latent_dim", opt(&a.latent_dim)),
        ("model.hidden_dim", opt(&a.hidden_dim)),
    ]);
    let cfg: SweepConfig = resolve(c.config.as_deref(), &c.overrides, flags)?;
    if cfg.sigmas.is_empty() || cfg.ps.is_empty() {
        return Err(CliError::invalid("sweep needs at least one sigma and one p"));
    }
    cfg.train.validate()?;
    write_resolved(&c.out, &cfg)?;
    match cfg.precision {
        Precision::F64 => sweep_with::<f64>(c, &cfg),
        Precision::F32 => sweep_with::<f32>(c, &cfg),
    }
}

fn sweep_with<T: Scalar>(c: &Common, cfg: &SweepConfig) -> CliResult<()> {
    let ds = Dataset::load(&cfg.dataset)?;
    let mut rows = Vec::new();
    for &sigma in &cfg.sigmas {
        for &p in &cfg.ps {
            let mut tc = cfg.train.clone();
            tc.degradation.noise_sigma = sigma;
            tc.degradation.missing_fraction = p;
            let model = new_model::<T>(ds.manifest.config.system, &cfg.model, tc.seed)?;
            let mut trainer = Trainer::new(model, &ds, tc)?;
            let report = trainer.run(None)?;
            log::info!("sigma {sigma} p {p}: val mae {:.3e}", report.final_val_mae);
            rows.push(SweepRow {
                sigma,
                p,
                val_mae: report.final_val_mae,
                val_mse: report.final_val_mse,
                best_epoch: report.best_epoch,
                degenerate_samples: report.degenerate_samples,
            });
        }
    }
    write_rows(&c.out.join("sweep_mae.csv"), &rows)?;
    print_summary(&serde_json::to_value(&rows).map_err(|e| CliError::invalid(e.to_string()))?);
    Ok(())
}

// ---------------------------------------------------------------- threshold

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdConfig {
    pub nodes: usize,
    pub thetas: Vec<f64>,
    pub count: usize,
    pub horizon: f64,
    pub solver: SolverConfig,
    pub seed: u64,
    pub ranges: InstanceRanges,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            nodes: 50,
            thetas: vec![FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, FRAC_PI_6],
            count: 10,
            horizon: 5.0,
            solver: SolverConfig::default().with_tol(1e-10).with_method(Method::StiffSwitching),
            seed: 0,
            ranges: InstanceRanges::default(),
        }
    }
}

#[derive(Args, Debug)]
pub struct ThresholdArgs {
    #[arg(long)]
    nodes: Option<usize>,
    /// Thresholds in radians, comma separated.
    #[arg(long, value_parser = parse_list::<f64>)]
    theta_th: Option<Floats>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

pub fn threshold(c: &Common, a: &ThresholdArgs) -> CliResult<()> {
    let flags = patch(
        vec![
            ("nodes", opt(&a.nodes)),
            ("thetas", opt(&a.theta_th)),
            ("count", opt(&a.count)),
            ("horizon", opt(&a.horizon)),
            ("seed", opt(&c.seed)),
        ],
        &tol_patch("solver.", a.tol),
    );
    let cfg: ThresholdConfig = resolve(c.config.as_deref(), &c.overrides, flags)?;
    write_resolved(&c.out, &cfg)?;
    let rows = threshold_sweep(cfg.nodes, &cfg.thetas, cfg.count, cfg.horizon, &cfg.solver, cfg.seed, &cfg.ranges)?;
    write_rows(&c.out.join("threshold_kuramoto.csv"), &rows)?;
    let monotone = rows.windows(2).all(|w| w[1].mae >= w[0].mae);
    let summary = json!({ "rows": rows, "mae_monotone": monotone });
    write_json(&c.out.join("threshold_kuramoto.json"), &summary)?;
    print_summary(&summary);
    Ok(())
}

// ---------------------------------------------------------------- traffic

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub sensors: usize,
    pub steps: usize,
    /// Period in steps.
    pub period: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            sensors: 12,
            steps: 2016,
            period: 288.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    #[serde(default)]
    pub speeds: Option<PathBuf>,
    #[serde(default)]
    pub distances: Option<PathBuf>,
    /// Generated periodic data used when no CSV input is given.
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    /// Distance cutoff `d_c`; no cutoff when absent.
    #[serde(default)]
    pub cutoff: Option<f64>,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_traffic_model")]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrafficTrainConfig,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    #[serde(default = "default_mape_floor")]
    pub mape_floor: f64,
    #[serde(default)]
    pub precision: Precision,
}

fn default_stride() -> usize {
    1
}

fn default_traffic_model() -> ModelSpec {
    ModelSpec {
        latent_dim: 32,
        hidden_dim: 32,
        depth: 2,
        init_seed: None,
    }
}

fn default_horizons() -> Vec<usize> {
    traffic::HORIZONS.to_vec()
}

fn default_mape_floor() -> f64 {
    traffic::DEFAULT_MAPE_FLOOR
}

#[derive(Args, Debug)]
pub struct TrafficArgs {
    /// Speed CSV: timestamp column, then one column per sensor.
    #[arg(long)]
    speeds: Option<PathBuf>,
    /// Distance CSV with `from,to,distance` columns.
    #[arg(long)]
    distances: Option<PathBuf>,
    /// Use generated periodic speeds instead of CSV input.
    #[arg(long)]
    synthetic: bool,
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
}

#[derive(Serialize)]
struct TrafficReport {
    sensors: usize,
    edges: usize,
    sigma: f64,
    scaler: traffic::Scaler,
    filled_cells: usize,
    windows: (usize, usize, usize),
    model: Vec<HorizonMetrics>,
    persistence: Vec<HorizonMetrics>,
}

pub fn traffic(c: &Common, a: &TrafficArgs) -> CliResult<()> {
    let flags = flag_patch(vec![
        ("speeds", opt(&a.speeds)),
        ("distances", opt(&a.distances)),
        ("synthetic", a.synthetic.then(|| json!({}))),
        ("cutoff", opt(&a.cutoff)),
        ("stride", opt(&a.stride)),
        ("train.epochs", opt(&a.epochs)),
        ("train.seed", opt(&c.seed)),
        ("model.latent_dim", opt(&a.latent_dim)),
        ("model.hidden_dim", opt(&a.hidden_dim)),
    ]);
    let cfg: TrafficConfig = resolve(c.config.as_deref(), &c.overrides, flags)?;
    write_resolved(&c.out, &cfg)?;
    match cfg.precision {
        Precision::F64 => traffic_with::<f64>(c, &cfg),
        Precision::F32 => traffic_with::<f32>(c, &cfg),
    }
}

fn traffic_with<T: Scalar>(c: &Common, cfg: &TrafficConfig) -> CliResult<()> {
    let (series, distances) = match (&cfg.speeds, &cfg.distances, &cfg.synthetic) {
        (Some(s), Some(d), None) => (load_speeds(s)?, load_distances(d)?),
        (None, None, Some(syn)) => synthetic_traffic(syn.sensors, syn.steps, syn.period, cfg.train.seed),
        _ => {
            return Err(CliError::invalid(
                "give either both speeds and distances or the synthetic option",
            ))
        }
    };
    let road = build_road_graph(&series.sensor_ids, &distances, cfg.cutoff.unwrap_or(f64::INFINITY))?;
    let splits = make_windows(&series, cfg.stride)?;
    if splits.test.is_empty() {
        return Err(CliError::invalid("the test split holds no complete 24-step window"));
    }
    let m = &cfg.model;
    let model = NgsModel::<T>::new(
        traffic_config(m.latent_dim, m.hidden_dim, m.depth),
        m.init_seed.unwrap_or(cfg.train.seed),
    )?;
    let (model, history) = train_traffic(model, &road, &splits, &cfg.train)?;
    model.save(c.out.join("traffic_model"), json!({ "scaler": splits.scaler }))?;
    write_rows(&c.out.join("traffic_history.csv"), &history)?;
    let truth: Vec<_> = splits.test.iter().map(|w| denormalized_target(&splits.scaler, w)).collect();
    let pred = splits
        .test
        .iter()
        .map(|w| forecast(&model, &road, &splits.scaler, w))
        .collect::<ngs_core::Result<Vec<_>>>()?;
    let base: Vec<_> = splits.test.iter().map(|w| persistence(&splits.scaler, w)).collect();
    let report = TrafficReport {
        sensors: series.sensor_ids.len(),
        edges: road.graph.num_edges(),
        sigma: road.sigma,
        scaler: splits.scaler,
        filled_cells: series.filled.len(),
        windows: (splits.train.len(), splits.val.len(), splits.test.len()),
        model: traffic_metrics(&pred, &truth, &cfg.horizons, cfg.mape_floor)?,
        persistence: traffic_metrics(&base, &truth, &cfg.horizons, cfg.mape_floor)?,
    };
    write_json(&c.out.join("traffic_metrics.json"), &report)?;
    print_summary(&serde_json::to_value(&report).map_err(|e| CliError::invalid(e.to_string()))?);
    Ok(())
}
