//! Teacher-forced one-step training with AdamW, a cosine schedule and an EMA shadow,
//! plus validation and resumable training state.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{abs_error_sum, degrade, derive_seed, Dataset, DegradationSpec, Sample};
use crate::dynsys::{SystemKind, SystemSpec};
use crate::error::{param_err, Error, Result};
use crate::neural::{flatten, AdamWConfig, Checkpoint, DenseMatrix, OptimState};
use crate::ngs::{provider_for_system, rollout, GraphBatch, NgsModel, Normalizers, StepCoeffs, StepInput};
use crate::scalar::Scalar;
use crate::trajectory::Trajectory;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Graphs per optimizer step.
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub ema_decay: f64,
    pub seed: u64,
    /// Write an `epoch_<k>` checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    pub degradation: DegradationSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 4,
            lr0: 1e-3,
            lr_min: 1e-5,
            weight_decay: 1e-2,
            ema_decay: 0.999,
            seed: 0,
            checkpoint_every: 0,
            degradation: DegradationSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return param_err("epochs and batch size must be positive");
        }
        if !(self.lr0 >= self.lr_min && self.lr_min > 0.0) {
            return param_err("need lr0 >= lr_min > 0");
        }
        if !(0.0..1.0).contains(&self.ema_decay) || !(self.weight_decay >= 0.0) {
            return param_err("need 0 <= ema_decay < 1 and weight_decay >= 0");
        }
        self.degradation.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean teacher-forced masked MSE over the epoch's optimizer steps.
    pub train_mse: f64,
    pub val_mse: f64,
    pub val_mae: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_checkpoint: Option<String>,
    pub initial_train_mse: f64,
    pub final_train_mse: f64,
    /// False when training did not lower the training loss.
    pub loss_decreased: bool,
    pub final_val_mse: f64,
    pub final_val_mae: f64,
    pub degenerate_samples: usize,
    pub optimizer_steps: u64,
    /// Excluded from serialized reports so repeated runs produce identical files.
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// A sample turned into network inputs: degraded encoded states, loss mask and
/// per-step coefficients.
#[derive(Clone, Debug)]
pub struct PreparedSample<T> {
    pub index: usize,
    pub spec: SystemSpec<T>,
    pub states: Vec<DenseMatrix<T>>,
    pub dts: Vec<T>,
    pub mask: Vec<bool>,
    pub degenerate: bool,
    /// One entry for static systems, one per step otherwise.
    pub coeffs: Vec<StepCoeffs<T>>,
    pub clean: Trajectory<f64>,
}

impl<T: Scalar> PreparedSample<T> {
    pub fn new(sample: &Sample, deg: &DegradationSpec, depth: usize) -> Result<Self> {
        let deg = DegradationSpec {
            rng_seed: derive_seed(deg.rng_seed, sample.index as u64, 0),
            ..deg.clone()
        };
        let d = degrade(&sample.clean, &sample.spec.graph, &deg, depth)?;
        let spec = sample.spec.cast::<T>();
        let states = d
            .noisy
            .states
            .iter()
            .map(|s| spec.encode_state(&s.cast()))
            .collect::<Result<Vec<_>>>()?;
        let dts: Vec<T> = sample.clean.dt_sequence().into_iter().map(T::lit).collect();
        let mut provider = provider_for_system(&spec)?;
        let coeffs = if spec.kind == SystemKind::Kuramoto {
            (0..dts.len())
                .map(|m| provider.coeffs(m, &states[m]).cloned())
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![provider.coeffs(0, &states[0])?.clone()]
        };
        drop(provider);
        Ok(Self {
            index: sample.index,
            spec,
            states,
            dts,
            mask: d.mask,
            degenerate: d.degenerate,
            coeffs,
            clean: sample.clean.clone(),
        })
    }

    pub fn num_steps(&self) -> usize {
        self.dts.len()
    }

    fn coeffs_at(&self, m: usize) -> &StepCoeffs<T> {
        &self.coeffs[m.min(self.coeffs.len() - 1)]
    }

    pub fn input(&self, m: usize) -> StepInput<'_, T> {
        let c = self.coeffs_at(m);
        StepInput {
            state: &self.states[m],
            node_coeffs: &c.node_coeffs,
            edge_coeffs: &c.edge_coeffs,
            global_coeffs: &c.global_coeffs,
            dt: self.dts[m],
            graph: &c.graph,
        }
    }

    fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

pub fn prepare_samples<T: Scalar>(samples: &[&Sample], deg: &DegradationSpec, depth: usize) -> Result<Vec<PreparedSample<T>>> {
    samples.par_iter().map(|s| PreparedSample::new(s, deg, depth)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValMetrics {
    /// Teacher-forced masked MSE against degraded targets.
    pub mse: f64,
    /// Rollout MAE over all nodes against clean trajectories.
    pub mae: f64,
    pub diverged: usize,
}

/// Masked MSE of one-step predictions over every (sample, step) pair, entry-weighted.
pub fn teacher_forced_mse<T: Scalar>(model: &NgsModel<T>, samples: &[PreparedSample<T>]) -> Result<f64> {
    let parts = samples
        .par_iter()
        .filter(|s| !s.degenerate)
        .map(|s| {
            let w = (s.masked_count() * model.config.state_dim) as f64;
            let mut acc = 0.0;
            for m in 0..s.num_steps() {
                let batch = GraphBatch::from_inputs(&[s.input(m)])?;
                acc += model.loss(&batch, &s.states[m + 1], &s.mask)?.to_f64_lossy() * w;
            }
            Ok((acc, w * s.num_steps() as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sum, count) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    if count == 0.0 {
        return Err(Error::DegenerateLoss("every sample is fully masked".into()));
    }
    Ok(sum / count)
}

/// Rollout MAE from the degraded initial state against the clean trajectory.
/// Returns `None` when the rollout diverges.
pub fn rollout_mae<T: Scalar>(model: &NgsModel<T>, s: &PreparedSample<T>) -> Result<Option<(f64, usize)>> {
    let mut provider = provider_for_system(&s.spec)?;
    let rep = match rollout(model, &s.states[0], &s.dts, provider.as_mut()) {
        Ok(r) => r,
        Err(Error::RolloutDivergence { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut sum = 0.0;
    let mut count = 0;
    for (pred, truth) in rep.trajectory.states.iter().zip(&s.clean.states).skip(1) {
        let raw = s.spec.decode_state(pred)?.cast::<f64>();
        if !raw.is_finite() {
            return Ok(None);
        }
        let (a, c) = abs_error_sum(s.spec.kind, &raw, truth)?;
        sum += a;
        count += c;
    }
    Ok(Some((sum, count)))
}

pub fn validate<T: Scalar>(model: &NgsModel<T>, samples: &[PreparedSample<T>]) -> Result<ValMetrics> {
    if samples.is_empty() {
        return param_err("validation split is empty");
    }
    let mse = match teacher_forced_mse(model, samples) {
        Err(Error::DegenerateLoss(_)) => {
            log::warn!("every validation sample is fully masked; validation MSE is undefined");
            f64::NAN
        }
        r => r?,
    };
    let maes = samples.par_iter().map(|s| rollout_mae(model, s)).collect::<Result<Vec<_>>>()?;
    let diverged = maes.iter().filter(|m| m.is_none()).count();
    let (sum, count) = maes.iter().flatten().fold((0.0, 0usize), |a, b| (a.0 + b.0, a.1 + b.1));
    let mae = if count == 0 { f64::INFINITY } else { sum / count as f64 };
    Ok(ValMetrics { mse, mae, diverged })
}

/// Shuffled graph batches for one epoch.
fn epoch_batches(order: &[usize], batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut idx = order.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, epoch as u64, 1));
    idx.shuffle(&mut rng);
    idx.chunks(batch_size).map(|c| c.to_vec()).collect()
}

/// Training loop state. Everything needed to continue a run bit-for-bit.
pub struct Trainer<T> {
    pub cfg: TrainConfig,
    pub model: NgsModel<T>,
    pub opt: OptimState<T>,
    pub epoch: usize,
    pub history: Vec<EpochStats>,
    pub best: Option<(usize, f64)>,
    best_params: Vec<T>,
    train: Vec<PreparedSample<T>>,
    val: Vec<PreparedSample<T>>,
    usable: Vec<usize>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: NgsModel<T>, dataset: &Dataset, cfg: TrainConfig) -> Result<Self> {
        let depth = model.config.depth;
        let train = prepare_samples(&dataset.train(), &cfg.degradation, depth)?;
        let val = prepare_samples(&dataset.val(), &cfg.degradation, depth)?;
        Self::from_prepared(model, train, val, cfg)
    }

    pub fn from_prepared(
        mut model: NgsModel<T>,
        train: Vec<PreparedSample<T>>,
        val: Vec<PreparedSample<T>>,
        cfg: TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if let Some(s) = train.iter().chain(&val).next() {
            model.step(&s.input(0))?;
        }
        let usable: Vec<usize> = (0..train.len()).filter(|&i| !train[i].degenerate).collect();
        if usable.is_empty() {
            return Err(Error::DegenerateLoss("no training sample has an unmasked node".into()));
        }
        if model.norm == Normalizers::identity(&model.config) {
            let mut batches = Vec::new();
            for &i in &usable {
                let s = &train[i];
                for m in 0..s.num_steps() {
                    batches.push((GraphBatch::from_inputs(&[s.input(m)])?, &s.states[m + 1]));
                }
            }
            let pairs: Vec<_> = batches.iter().map(|(b, t)| (b, *t)).collect();
            model.fit_normalizers(&pairs)?;
        }
        let total_steps: u64 = (0..cfg.epochs)
            .map(|e| {
                epoch_batches(&usable, cfg.batch_size, cfg.seed, e)
                    .iter()
                    .map(|b| b.iter().map(|&i| train[i].num_steps()).max().unwrap_or(0) as u64)
                    .sum::<u64>()
            })
            .sum();
        let opt_cfg = AdamWConfig {
            lr0: cfg.lr0,
            lr_min: cfg.lr_min,
            weight_decay: cfg.weight_decay,
            ema_decay: cfg.ema_decay,
            total_steps,
            ..AdamWConfig::default()
        };
        let params = model.params();
        let opt = OptimState::new(opt_cfg, &params)?;
        Ok(Self {
            cfg,
            model,
            opt,
            epoch: 0,
            history: Vec::new(),
            best: None,
            best_params: params,
            train,
            val,
            usable,
        })
    }

    pub fn train_samples(&self) -> &[PreparedSample<T>] {
        &self.train
    }

    pub fn val_samples(&self) -> &[PreparedSample<T>] {
        &self.val
    }

    pub fn degenerate_count(&self) -> usize {
        self.train.iter().chain(&self.val).filter(|s| s.degenerate).count()
    }

    /// The model with EMA shadow parameters.
    pub fn ema_model(&self) -> NgsModel<T> {
        let mut m = self.model.clone();
        m.set_params(&self.opt.shadow).expect("shadow matches layout");
        m
    }

    /// EMA model of the best validation epoch so far.
    pub fn best_model(&self) -> NgsModel<T> {
        let mut m = self.model.clone();
        m.set_params(&self.best_params).expect("best params match layout");
        m
    }

    /// One epoch of optimizer steps followed by EMA validation.
    pub fn run_epoch(&mut self) -> Result<EpochStats> {
        let epoch = self.epoch;
        let layout = self.model.layout();
        let mut params = self.model.params();
        let mut loss_sum = 0.0;
        let mut n_steps = 0usize;
        let mut lr = self.opt.current_lr();
        for batch_ids in epoch_batches(&self.usable, self.cfg.batch_size, self.cfg.seed, epoch) {
            let max_m = batch_ids.iter().map(|&i| self.train[i].num_steps()).max().unwrap_or(0);
            for m in 0..max_m {
                let members: Vec<&PreparedSample<T>> =
                    batch_ids.iter().map(|&i| &self.train[i]).filter(|s| m < s.num_steps()).collect();
                let inputs: Vec<StepInput<'_, T>> = members.iter().map(|s| s.input(m)).collect();
                let batch = GraphBatch::from_inputs(&inputs)?;
                let targets: Vec<&DenseMatrix<T>> = members.iter().map(|s| &s.states[m + 1]).collect();
                let targets = DenseMatrix::vcat(&targets)?;
                let mask: Vec<bool> = members.iter().flat_map(|s| s.mask.iter().copied()).collect();
                let (loss, grads) = match self.model.loss_and_grad(&batch, &targets, &mask) {
                    Ok(v) => v,
                    // A batch whose members are all masked at this step contributes nothing.
                    Err(Error::DegenerateLoss(_)) => continue,
                    Err(e) => return Err(e),
                };
                let loss = loss.to_f64_lossy();
                if !loss.is_finite() {
                    return Err(Error::NanLoss {
                        epoch,
                        step: self.opt.step as usize,
                    });
                }
                lr = self.opt.step(&layout, &mut params, &flatten(&grads)).map_err(|e| match e {
                    Error::Numerical(_) => Error::NanLoss {
                        epoch,
                        step: self.opt.step as usize,
                    },
                    e => e,
                })?;
                self.model.set_params(&params)?;
                loss_sum += loss;
                n_steps += 1;
            }
        }
        let ema = self.ema_model();
        let val = if self.val.is_empty() {
            ValMetrics {
                mse: teacher_forced_mse(&ema, &self.train)?,
                mae: f64::NAN,
                diverged: 0,
            }
        } else {
            validate(&ema, &self.val)?
        };
        let stats = EpochStats {
            epoch,
            train_mse: loss_sum / n_steps.max(1) as f64,
            val_mse: val.mse,
            val_mae: val.mae,
            lr,
        };
        log::info!(
            "epoch {epoch}: train {:.3e} val mse {:.3e} val mae {:.3e} lr {:.2e}",
            stats.train_mse,
            stats.val_mse,
            stats.val_mae,
            lr
        );
        // Fully masked validation sets fall back to the rollout MAE.
        let score = if val.mse.is_finite() { val.mse } else { val.mae };
        if self.best.is_none_or(|(_, b)| score < b) {
            self.best = Some((epoch, score));
            self.best_params = self.opt.shadow.clone();
        }
        self.history.push(stats.clone());
        self.epoch += 1;
        Ok(stats)
    }

    /// Runs the remaining epochs, writing checkpoints into `out_dir` when given.
    pub fn run(&mut self, out_dir: Option<&Path>) -> Result<TrainReport> {
        let start = Instant::now();
        if let Some(d) = out_dir {
            std::fs::create_dir_all(d)?;
        }
        let initial_train_mse = teacher_forced_mse(&self.model, &self.train)?;
        while self.epoch < self.cfg.epochs {
            self.run_epoch()?;
            if let Some(d) = out_dir {
                let k = self.cfg.checkpoint_every;
                if k > 0 && self.epoch % k == 0 {
                    self.ema_model().save(d.join(format!("epoch_{}", self.epoch)), self.meta())?;
                }
                self.save_state(d.join("state.ckpt"))?;
            }
        }
        let best_checkpoint = match out_dir {
            Some(d) => {
                self.best_model().save(d.join("best"), self.meta())?;
                Some(PathBuf::from("best").display().to_string())
            }
            None => None,
        };
        let final_train_mse = teacher_forced_mse(&self.model, &self.train)?;
        let best = self.best_model();
        let fin = if self.val.is_empty() {
            ValMetrics {
                mse: f64::NAN,
                mae: f64::NAN,
                diverged: 0,
            }
        } else {
            validate(&best, &self.val)?
        };
        let report = TrainReport {
            epochs: self.history.clone(),
            best_epoch: self.best.map_or(0, |b| b.0),
            best_checkpoint,
            initial_train_mse,
            final_train_mse,
            loss_decreased: final_train_mse < initial_train_mse,
            final_val_mse: fin.mse,
            final_val_mae: fin.mae,
            degenerate_samples: self.degenerate_count(),
            optimizer_steps: self.opt.step,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        if !report.loss_decreased {
            log::warn!("training loss did not decrease");
        }
        log::info!("training finished in {:.1}s", report.wall_seconds);
        Ok(report)
    }

    fn meta(&self) -> serde_json::Value {
        serde_json::json!({
            "epoch": self.epoch,
            "optimizer_step": self.opt.step,
            "train_config": self.cfg,
        })
    }

    /// Parameters, optimizer moments, EMA shadow, best snapshot and history.
    pub fn save_state(&self, path: impl AsRef<Path>) -> Result<()> {
        let to64 = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>();
        let mut ck = Checkpoint::new(
            self.model.layout(),
            serde_json::json!({
                "epoch": self.epoch,
                "optimizer": {"config": self.opt.config, "step": self.opt.step},
                "history": self.history,
                "best": self.best,
                "train_config": self.cfg,
            }),
        );
        ck.push_section("params", to64(&self.model.params()));
        ck.push_section("adam_m", to64(&self.opt.m));
        ck.push_section("adam_v", to64(&self.opt.v));
        ck.push_section("ema", to64(&self.opt.shadow));
        ck.push_section("best", to64(&self.best_params));
        ck.save(path)
    }

    /// Restores a state written by [`Trainer::save_state`] for the same model and data.
    pub fn restore_state(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let ck = Checkpoint::load(path)?;
        if ck.header.layout != self.model.layout() {
            return Err(Error::Format("training state layout does not match the model".into()));
        }
        let section = |name: &str| -> Result<Vec<T>> {
            ck.section(name)
                .map(|v| v.iter().map(|&x| T::lit(x)).collect())
                .ok_or_else(|| Error::Format(format!("training state has no {name} section")))
        };
        let meta = &ck.header.meta;
        let get = |key: &str| -> Result<serde_json::Value> {
            meta.get(key)
                .cloned()
                .ok_or_else(|| Error::Format(format!("training state meta lacks {key}")))
        };
        let cfg: TrainConfig = serde_json::from_value(get("train_config")?)?;
        if cfg != self.cfg {
            return Err(Error::Format("training state was written with a different configuration".into()));
        }
        self.model.set_params(&section("params")?)?;
        self.opt.m = section("adam_m")?;
        self.opt.v = section("adam_v")?;
        self.opt.shadow = section("ema")?;
        self.best_params = section("best")?;
        let opt = get("optimizer")?;
        self.opt.config = serde_json::from_value(opt["config"].clone())?;
        self.opt.step = serde_json::from_value(opt["step"].clone())?;
        self.epoch = serde_json::from_value(get("epoch")?)?;
        self.history = serde_json::from_value(get("history")?)?;
        self.best = serde_json::from_value(get("best")?)?;
        Ok(())
    }
}

/// Trains `model` on the dataset's train split and returns the best EMA model.
pub fn train<T: Scalar>(
    model: NgsModel<T>,
    dataset: &Dataset,
    cfg: TrainConfig,
    out_dir: Option<&Path>,
) -> Result<(NgsModel<T>, TrainReport)> {
    let mut trainer = Trainer::new(model, dataset, cfg)?;
    let report = trainer.run(out_dir)?;
    Ok((trainer.best_model(), report))
}
