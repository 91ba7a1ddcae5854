//! The graph-network surrogate: shared encoders, `L` graph-network blocks, a decoder
//! and a residual state update, plus autoregressive rollout.

mod batch;
mod layer;
mod rollout;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::masked_mse_grad;
use crate::dynsys::SystemKind;
use crate::error::{param_err, Error, Result};
use crate::neural::{
    flatten, unflatten, Checkpoint, DenseMatrix, Mlp2, MlpCache, ParamLayout, Parameterized,
    MLP_TENSOR_NAMES,
};
use crate::scalar::Scalar;

pub use batch::{GraphBatch, StepInput, Topology};
pub use layer::{GnLayer, LatentGraphState};
pub use rollout::{
    provider_for_system, rollout, CoeffProvider, KuramotoCoeffs, RolloutReport, StaticCoeffs, StepCoeffs,
};

use layer::LayerCache;

/// How the decoder output turns the current state into the next one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// `S + Dec(V)`.
    Residual,
    /// `S + Dec(V)` rescaled row-wise onto the unit circle (phase encodings).
    UnitCircle,
    /// History window: drop the oldest channel and append `last + Dec(V)`.
    ShiftWindow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NgsConfig {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub depth: usize,
    /// Width of the encoded state per node.
    pub state_dim: usize,
    pub node_coeff_dim: usize,
    pub edge_coeff_dim: usize,
    pub global_coeff_dim: usize,
    pub update: UpdateMode,
}

impl NgsConfig {
    pub fn for_system(kind: SystemKind, latent_dim: usize, hidden_dim: usize, depth: usize) -> Self {
        let (node_coeff_dim, edge_coeff_dim, global_coeff_dim) = kind.coeff_dims();
        Self {
            latent_dim,
            hidden_dim,
            depth,
            state_dim: kind.encoded_state_dim(),
            node_coeff_dim,
            edge_coeff_dim,
            global_coeff_dim,
            update: if kind == SystemKind::Kuramoto {
                UpdateMode::UnitCircle
            } else {
                UpdateMode::Residual
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.latent_dim == 0 || self.hidden_dim == 0 || self.state_dim == 0 {
            return param_err("depth, widths and state dimension must be positive");
        }
        if self.update == UpdateMode::UnitCircle && self.state_dim != 2 {
            return param_err("unit-circle update needs a 2-channel state");
        }
        Ok(())
    }

    pub fn node_input_dim(&self) -> usize {
        self.state_dim + self.node_coeff_dim
    }

    pub fn global_input_dim(&self) -> usize {
        self.global_coeff_dim + 1
    }

    pub fn output_dim(&self) -> usize {
        match self.update {
            UpdateMode::ShiftWindow => 1,
            _ => self.state_dim,
        }
    }
}

/// Metadata stored next to a model checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSidecar {
    pub config: NgsConfig,
    pub node_input_dim: usize,
    pub edge_input_dim: usize,
    pub global_input_dim: usize,
    pub edge_to_node: String,
    pub node_to_global: String,
    pub edge_to_global: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NgsModel<T> {
    pub config: NgsConfig,
    pub node_encoder: Mlp2<T>,
    pub edge_encoder: Mlp2<T>,
    pub global_encoder: Mlp2<T>,
    pub layers: Vec<GnLayer<T>>,
    pub decoder: Mlp2<T>,
    /// Fixed input/output scaling, fitted on training data.
    #[serde(default)]
    pub norm: Normalizers,
}

/// Per-feature affine map `x -> (x - shift) / scale`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureNorm {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureNorm {
    pub fn identity(dim: usize) -> Self {
        Self {
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Mean and standard deviation per column; near-constant columns keep scale 1.
    pub fn fit<'a, T: Scalar>(parts: impl IntoIterator<Item = &'a DenseMatrix<T>>, dim: usize) -> Self {
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for m in parts {
            for i in 0..m.rows() {
                for (j, &v) in m.row(i).iter().enumerate() {
                    let v = v.to_f64_lossy();
                    sum[j] += v;
                    sq[j] += v * v;
                }
            }
            n += m.rows();
        }
        if n == 0 {
            return Self::identity(dim);
        }
        let mut out = Self::identity(dim);
        for j in 0..dim {
            let mean = sum[j] / n as f64;
            let std = (sq[j] / n as f64 - mean * mean).max(0.0).sqrt();
            out.shift[j] = mean;
            out.scale[j] = if std > 1e-8 * mean.abs().max(1.0) { std } else { 1.0 };
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    fn is_identity(&self) -> bool {
        self.shift.iter().all(|&v| v == 0.0) && self.scale.iter().all(|&v| v == 1.0)
    }

    pub fn apply<T: Scalar>(&self, x: &DenseMatrix<T>) -> DenseMatrix<T> {
        if self.is_identity() {
            return x.clone();
        }
        DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| {
            (x.get(i, j) - T::lit(self.shift[j])) / T::lit(self.scale[j])
        })
    }
}

/// Input normalizers for the three encoders and the output scale of the decoder
/// (the decoder output is multiplied by `output.scale`; `output.shift` is unused).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalizers {
    pub node: FeatureNorm,
    pub edge: FeatureNorm,
    pub global: FeatureNorm,
    pub output: FeatureNorm,
}

impl Normalizers {
    pub fn identity(cfg: &NgsConfig) -> Self {
        Self {
            node: FeatureNorm::identity(cfg.node_input_dim()),
            edge: FeatureNorm::identity(cfg.edge_coeff_dim),
            global: FeatureNorm::identity(cfg.global_input_dim()),
            output: FeatureNorm::identity(cfg.output_dim()),
        }
    }

    fn to_flat(&self) -> Vec<f64> {
        [&self.node, &self.edge, &self.global, &self.output]
            .iter()
            .flat_map(|f| f.shift.iter().chain(&f.scale).copied())
            .collect()
    }

    fn from_flat(cfg: &NgsConfig, flat: &[f64]) -> Result<Self> {
        let dims = [cfg.node_input_dim(), cfg.edge_coeff_dim, cfg.global_input_dim(), cfg.output_dim()];
        if flat.len() != 2 * dims.iter().sum::<usize>() {
            return Err(Error::Format("normalizer section has the wrong length".into()));
        }
        let mut it = flat.iter().copied();
        let mut take = |d: usize| FeatureNorm {
            shift: it.by_ref().take(d).collect(),
            scale: it.by_ref().take(d).collect(),
        };
        Ok(Self {
            node: take(dims[0]),
            edge: take(dims[1]),
            global: take(dims[2]),
            output: take(dims[3]),
        })
    }

    fn output_scale<T: Scalar>(&self, out: &mut DenseMatrix<T>) {
        if self.output.is_identity() {
            return;
        }
        for i in 0..out.rows() {
            for (v, &s) in out.row_mut(i).iter_mut().zip(&self.output.scale) {
                *v *= T::lit(s);
            }
        }
    }
}

pub(crate) struct ForwardCache<T> {
    enc_n: MlpCache<T>,
    enc_e: MlpCache<T>,
    enc_g: MlpCache<T>,
    layers: Vec<LayerCache<T>>,
    dec: MlpCache<T>,
}

impl<T: Scalar> NgsModel<T> {
    pub fn new(config: NgsConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (l, h) = (config.latent_dim, config.hidden_dim);
        let node_encoder = Mlp2::init(config.node_input_dim(), h, l, &mut rng);
        let edge_encoder = Mlp2::init(config.edge_coeff_dim, h, l, &mut rng);
        let global_encoder = Mlp2::init(config.global_input_dim(), h, l, &mut rng);
        let layers = (0..config.depth).map(|_| GnLayer::init(l, h, &mut rng)).collect();
        let mut decoder = Mlp2::init(l, h, config.output_dim(), &mut rng);
        // Start close to the identity map.
        decoder.scale_output(T::lit(0.01));
        Ok(Self {
            node_encoder,
            edge_encoder,
            global_encoder,
            layers,
            decoder,
            norm: Normalizers::identity(&config),
            config,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            node_encoder: self.node_encoder.zeros_like(),
            edge_encoder: self.edge_encoder.zeros_like(),
            global_encoder: self.global_encoder.zeros_like(),
            layers: self.layers.iter().map(GnLayer::zeros_like).collect(),
            decoder: self.decoder.zeros_like(),
            norm: self.norm.clone(),
        }
    }

    /// Fits input normalizers and the output scale on teacher-forcing pairs
    /// `(batch, next states)`.
    pub fn fit_normalizers(&mut self, pairs: &[(&GraphBatch<T>, &DenseMatrix<T>)]) -> Result<()> {
        for (b, t) in pairs {
            self.check_batch(b)?;
            if t.shape() != b.states.shape() {
                return param_err("target shape differs from the batch states");
            }
        }
        let c = &self.config;
        let incs: Vec<DenseMatrix<T>> = pairs
            .iter()
            .map(|(b, t)| self.base_channels(t).sub(&self.base_channels(&b.states)))
            .collect::<Result<_>>()?;
        let mut output = FeatureNorm::fit(&incs, c.output_dim());
        output.shift.iter_mut().for_each(|v| *v = 0.0);
        for (j, s) in output.scale.iter_mut().enumerate() {
            let rms = {
                let mut acc = 0.0;
                let mut n = 0usize;
                for m in &incs {
                    for i in 0..m.rows() {
                        acc += m.get(i, j).to_f64_lossy().powi(2);
                        n += 1;
                    }
                }
                (acc / n.max(1) as f64).sqrt()
            };
            *s = if rms > 0.0 { rms } else { 1.0 };
        }
        self.norm = Normalizers {
            node: FeatureNorm::fit(pairs.iter().map(|p| &p.0.node_feats), c.node_input_dim()),
            edge: FeatureNorm::fit(pairs.iter().map(|p| &p.0.edge_feats), c.edge_coeff_dim),
            global: FeatureNorm::fit(pairs.iter().map(|p| &p.0.global_feats), c.global_input_dim()),
            output,
        };
        Ok(())
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::of(self)
    }

    pub fn sidecar(&self) -> ModelSidecar {
        ModelSidecar {
            config: self.config.clone(),
            node_input_dim: self.config.node_input_dim(),
            edge_input_dim: self.config.edge_coeff_dim,
            global_input_dim: self.config.global_input_dim(),
            edge_to_node: "sum".into(),
            node_to_global: "min".into(),
            edge_to_global: "min".into(),
        }
    }

    fn check_batch(&self, batch: &GraphBatch<T>) -> Result<()> {
        let c = &self.config;
        let n = &self.norm;
        if (n.node.dim(), n.edge.dim(), n.global.dim(), n.output.dim())
            != (c.node_input_dim(), c.edge_coeff_dim, c.global_input_dim(), c.output_dim())
        {
            return param_err("normalizer widths do not match the model configuration");
        }
        if batch.node_feats.cols() != c.node_input_dim()
            || batch.edge_feats.cols() != c.edge_coeff_dim
            || batch.global_feats.cols() != c.global_input_dim()
            || batch.states.cols() != c.state_dim
        {
            return param_err(format!(
                "input widths (node {}, edge {}, global {}) do not match model (node {}, edge {}, global {})",
                batch.node_feats.cols(),
                batch.edge_feats.cols(),
                batch.global_feats.cols(),
                c.node_input_dim(),
                c.edge_coeff_dim,
                c.global_input_dim()
            ));
        }
        Ok(())
    }

    pub fn encode(&self, batch: &GraphBatch<T>) -> Result<LatentGraphState<T>> {
        self.check_batch(batch)?;
        Ok(LatentGraphState {
            nodes: self.node_encoder.apply(&self.norm.node.apply(&batch.node_feats))?,
            edges: self.edge_encoder.apply(&self.norm.edge.apply(&batch.edge_feats))?,
            globals: self.global_encoder.apply(&self.norm.global.apply(&batch.global_feats))?,
        })
    }

    /// Decoder output per node (before the state update).
    pub(crate) fn forward(&self, batch: &GraphBatch<T>) -> Result<(DenseMatrix<T>, ForwardCache<T>)> {
        self.check_batch(batch)?;
        let (nodes, enc_n) = self.node_encoder.forward(&self.norm.node.apply(&batch.node_feats))?;
        let (edges, enc_e) = self.edge_encoder.forward(&self.norm.edge.apply(&batch.edge_feats))?;
        let (globals, enc_g) = self.global_encoder.forward(&self.norm.global.apply(&batch.global_feats))?;
        let mut lat = LatentGraphState { nodes, edges, globals };
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = layer.forward(&lat, &batch.topology)?;
            lat = next;
            layers.push(cache);
        }
        let (mut out, dec) = self.decoder.forward(&lat.nodes)?;
        self.norm.output_scale(&mut out);
        Ok((
            out,
            ForwardCache {
                enc_n,
                enc_e,
                enc_g,
                layers,
                dec,
            },
        ))
    }

    pub(crate) fn backward(
        &self,
        cache: &ForwardCache<T>,
        topo: &Topology,
        d_out: &DenseMatrix<T>,
        grads: &mut NgsModel<T>,
    ) -> Result<()> {
        let mut d_out = d_out.clone();
        self.norm.output_scale(&mut d_out);
        let dv = self.decoder.backward(&cache.dec, &d_out, &mut grads.decoder)?;
        let l = self.config.latent_dim;
        let mut d = LatentGraphState {
            nodes: dv,
            edges: DenseMatrix::zeros(topo.num_edges(), l),
            globals: DenseMatrix::zeros(topo.num_graphs, l),
        };
        for ((layer, lc), g) in self.layers.iter().zip(&cache.layers).zip(grads.layers.iter_mut()).rev() {
            d = layer.backward(lc, topo, &d, g)?;
        }
        self.node_encoder.backward(&cache.enc_n, &d.nodes, &mut grads.node_encoder)?;
        self.edge_encoder.backward(&cache.enc_e, &d.edges, &mut grads.edge_encoder)?;
        self.global_encoder.backward(&cache.enc_g, &d.globals, &mut grads.global_encoder)?;
        Ok(())
    }

    /// State channels the decoder output is added to.
    pub fn base_channels(&self, states: &DenseMatrix<T>) -> DenseMatrix<T> {
        match self.config.update {
            UpdateMode::ShiftWindow => {
                let c = states.cols();
                DenseMatrix::from_fn(states.rows(), 1, |i, _| states.get(i, c - 1))
            }
            _ => states.clone(),
        }
    }

    /// Next state from the current one and the decoder output.
    pub fn apply_update(&self, states: &DenseMatrix<T>, out: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        match self.config.update {
            UpdateMode::Residual => states.add(out),
            UpdateMode::UnitCircle => {
                let mut next = states.add(out)?;
                for i in 0..next.rows() {
                    let r = next.row_mut(i);
                    let norm = (r[0] * r[0] + r[1] * r[1]).sqrt();
                    if norm > T::zero() {
                        r[0] /= norm;
                        r[1] /= norm;
                    }
                }
                Ok(next)
            }
            UpdateMode::ShiftWindow => {
                let c = states.cols();
                Ok(DenseMatrix::from_fn(states.rows(), c, |i, j| {
                    if j + 1 < c {
                        states.get(i, j + 1)
                    } else {
                        states.get(i, c - 1) + out.get(i, 0)
                    }
                }))
            }
        }
    }

    /// Predicted next encoded states for every graph of the batch, stacked.
    pub fn predict(&self, batch: &GraphBatch<T>) -> Result<DenseMatrix<T>> {
        let (out, _) = self.forward(batch)?;
        self.apply_update(&batch.states, &out)
    }

    /// One network evaluation on one graph.
    pub fn step(&self, inp: &StepInput<'_, T>) -> Result<DenseMatrix<T>> {
        self.predict(&GraphBatch::from_inputs(std::slice::from_ref(inp))?)
    }

    /// Teacher-forced masked MSE of the raw residual prediction against `targets`
    /// (stacked next states), with parameter gradients.
    pub fn loss_and_grad(
        &self,
        batch: &GraphBatch<T>,
        targets: &DenseMatrix<T>,
        mask: &[bool],
    ) -> Result<(T, NgsModel<T>)> {
        let (out, cache) = self.forward(batch)?;
        let pred = self.base_channels(&batch.states).add(&out)?;
        let (loss, dpred) = masked_mse_grad(&pred, &self.base_channels(targets), mask)?;
        let mut grads = self.zeros_like();
        self.backward(&cache, &batch.topology, &dpred, &mut grads)?;
        Ok((loss, grads))
    }

    pub fn loss(&self, batch: &GraphBatch<T>, targets: &DenseMatrix<T>, mask: &[bool]) -> Result<T> {
        let (out, _) = self.forward(batch)?;
        let pred = self.base_channels(&batch.states).add(&out)?;
        Ok(crate::dataset::masked_mse(&pred, &self.base_channels(targets), mask)?)
    }

    pub fn params(&self) -> Vec<T> {
        flatten(self)
    }

    pub fn set_params(&mut self, flat: &[T]) -> Result<()> {
        unflatten(self, flat)
    }

    pub fn to_checkpoint(&self, meta: serde_json::Value) -> Checkpoint {
        let mut ck = Checkpoint::new(self.layout(), meta);
        ck.push_section("params", self.params().iter().map(|v| v.to_f64_lossy()).collect());
        ck.push_section("normalizers", self.norm.to_flat());
        ck
    }

    pub fn from_checkpoint(config: NgsConfig, ck: &Checkpoint) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if ck.header.layout != model.layout() {
            return Err(Error::Format("checkpoint layout does not match model configuration".into()));
        }
        let params = ck
            .section("params")
            .ok_or_else(|| Error::Format("checkpoint has no params section".into()))?;
        let flat: Vec<T> = params.iter().map(|&v| T::lit(v)).collect();
        model.set_params(&flat)?;
        if let Some(norm) = ck.section("normalizers") {
            model.norm = Normalizers::from_flat(&model.config, norm)?;
        }
        Ok(model)
    }

    /// Writes `<stem>.ckpt` and the `<stem>.json` sidecar.
    pub fn save(&self, stem: impl AsRef<Path>, meta: serde_json::Value) -> Result<()> {
        let stem = stem.as_ref();
        self.to_checkpoint(meta).save(stem.with_extension("ckpt"))?;
        let sidecar = serde_json::to_string_pretty(&self.sidecar())?;
        std::fs::write(stem.with_extension("json"), sidecar + "\n")?;
        Ok(())
    }

    pub fn load(stem: impl AsRef<Path>) -> Result<Self> {
        let stem = stem.as_ref();
        let sidecar: ModelSidecar = serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)?;
        let ck = Checkpoint::load(stem.with_extension("ckpt"))?;
        Self::from_checkpoint(sidecar.config, &ck)
    }
}

impl<T: Scalar> Parameterized<T> for NgsModel<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &DenseMatrix<T>)) {
        for (prefix, m) in self.named_mlps() {
            for (name, t) in MLP_TENSOR_NAMES.iter().zip(m.tensors()) {
                f(&format!("{prefix}.{name}"), t);
            }
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut DenseMatrix<T>)) {
        for (prefix, m) in self.named_mlps_mut() {
            for (name, t) in MLP_TENSOR_NAMES.iter().zip(m.tensors_mut()) {
                f(&format!("{prefix}.{name}"), t);
            }
        }
    }
}

impl<T: Scalar> NgsModel<T> {
    fn named_mlps(&self) -> Vec<(String, &Mlp2<T>)> {
        let mut v = vec![
            ("node_encoder".to_string(), &self.node_encoder),
            ("edge_encoder".to_string(), &self.edge_encoder),
            ("global_encoder".to_string(), &self.global_encoder),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            v.push((format!("gn{i}.phi_e"), &l.phi_e));
            v.push((format!("gn{i}.phi_v"), &l.phi_v));
            v.push((format!("gn{i}.phi_g"), &l.phi_g));
        }
        v.push(("decoder".to_string(), &self.decoder));
        v
    }

    fn named_mlps_mut(&mut self) -> Vec<(String, &mut Mlp2<T>)> {
        let mut v = vec![
            ("node_encoder".to_string(), &mut self.node_encoder),
            ("edge_encoder".to_string(), &mut self.edge_encoder),
            ("global_encoder".to_string(), &mut self.global_encoder),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            v.push((format!("gn{i}.phi_e"), &mut l.phi_e));
            v.push((format!("gn{i}.phi_v"), &mut l.phi_v));
            v.push((format!("gn{i}.phi_g"), &mut l.phi_g));
        }
        v.push(("decoder".to_string(), &mut self.decoder));
        v
    }
}
