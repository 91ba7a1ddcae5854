use crate::dynsys::{kuramoto_graph, StateMatrix, SystemKind, SystemSpec};
use crate::error::{param_err, Error, Result};
use crate::graph::Graph;
use crate::neural::DenseMatrix;
use crate::scalar::Scalar;
use crate::trajectory::Trajectory;

use super::{NgsModel, StepInput};

/// Coefficients and connectivity seen by the network at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepCoeffs<T> {
    pub graph: Graph,
    pub node_coeffs: DenseMatrix<T>,
    pub edge_coeffs: DenseMatrix<T>,
    pub global_coeffs: Vec<T>,
}

/// Supplies per-step coefficients, possibly depending on the current predicted state.
pub trait CoeffProvider<T> {
    fn coeffs(&mut self, step: usize, state: &DenseMatrix<T>) -> Result<&StepCoeffs<T>>;
}

/// The same coefficients at every step.
pub struct StaticCoeffs<T>(pub StepCoeffs<T>);

impl<T> CoeffProvider<T> for StaticCoeffs<T> {
    fn coeffs(&mut self, _step: usize, _state: &DenseMatrix<T>) -> Result<&StepCoeffs<T>> {
        Ok(&self.0)
    }
}

/// Rebuilds the interaction edge set from the phases encoded in the current state.
pub struct KuramotoCoeffs<T> {
    theta_th: T,
    current: StepCoeffs<T>,
}

impl<T: Scalar> KuramotoCoeffs<T> {
    pub fn new(spec: &SystemSpec<T>) -> Result<Self> {
        let rule = spec.kuramoto_rule()?;
        Ok(Self {
            theta_th: rule.theta_th,
            current: StepCoeffs {
                graph: Graph::path(0),
                node_coeffs: spec.node_coeffs.clone(),
                edge_coeffs: DenseMatrix::zeros(0, 0),
                global_coeffs: spec.global_coeffs.clone(),
            },
        })
    }
}

impl<T: Scalar> CoeffProvider<T> for KuramotoCoeffs<T> {
    fn coeffs(&mut self, _step: usize, state: &DenseMatrix<T>) -> Result<&StepCoeffs<T>> {
        let theta: Vec<T> = (0..state.rows()).map(|i| state.get(i, 1).atan2(state.get(i, 0))).collect();
        self.current.graph = kuramoto_graph(&theta, self.theta_th);
        self.current.edge_coeffs = DenseMatrix::zeros(self.current.graph.num_edges(), 0);
        Ok(&self.current)
    }
}

/// Network view of a system's coefficients.
pub fn provider_for_system<T: Scalar>(spec: &SystemSpec<T>) -> Result<Box<dyn CoeffProvider<T> + '_>> {
    match spec.kind {
        SystemKind::Kuramoto => Ok(Box::new(KuramotoCoeffs::new(spec)?)),
        _ => Ok(Box::new(StaticCoeffs(StepCoeffs {
            graph: spec.graph.clone(),
            node_coeffs: spec.node_coeffs.clone(),
            edge_coeffs: spec.edge_coeffs.clone(),
            global_coeffs: spec.global_coeffs.clone(),
        }))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutReport<T> {
    /// Encoded states at `t_0 = 0` and after every step.
    pub trajectory: Trajectory<T>,
    /// Network evaluations, one per step.
    pub nfev: u64,
}

/// Autoregressive prediction from the encoded state `s0` over `dt_sequence`.
pub fn rollout<T: Scalar>(
    model: &NgsModel<T>,
    s0: &StateMatrix<T>,
    dt_sequence: &[T],
    provider: &mut dyn CoeffProvider<T>,
) -> Result<RolloutReport<T>> {
    if dt_sequence.iter().any(|dt| !(*dt > T::zero())) {
        return param_err("time steps must be positive");
    }
    let mut times = Vec::with_capacity(dt_sequence.len() + 1);
    let mut states = Vec::with_capacity(dt_sequence.len() + 1);
    times.push(T::zero());
    states.push(s0.clone());
    let mut nfev = 0u64;
    for (m, &dt) in dt_sequence.iter().enumerate() {
        let cur = states.last().expect("initial state");
        let c = provider.coeffs(m, cur)?;
        let next = model.step(&StepInput {
            state: cur,
            node_coeffs: &c.node_coeffs,
            edge_coeffs: &c.edge_coeffs,
            global_coeffs: &c.global_coeffs,
            dt,
            graph: &c.graph,
        })?;
        nfev += 1;
        if !next.is_finite() {
            return Err(Error::RolloutDivergence { step: m });
        }
        times.push(*times.last().expect("initial time") + dt);
        states.push(next);
    }
    Ok(RolloutReport {
        trajectory: Trajectory { times, states },
        nfev,
    })
}
