//! Benchmark dynamical systems on graphs: heat diffusion, coupled Rössler
//! oscillators and (thresholded) Kuramoto phase oscillators.

mod heat;
mod kuramoto;
mod rossler;
mod sample;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::graph::Graph;
use crate::neural::DenseMatrix;
use crate::scalar::Scalar;

pub use heat::{heat_spectral_solution, rhs_heat};
pub use kuramoto::{
    active_pairs, kuramoto_graph, phase_decode, phase_encode, rhs_kuramoto, wrap_phase,
    KuramotoInteractionRule,
};
pub use rossler::rhs_rossler;
pub use sample::{
    sample_heat_instance, sample_kuramoto_instance, sample_rossler_instance, InstanceRanges,
};

/// Node states at one time point: `N x state_dim`.
pub type StateMatrix<T> = DenseMatrix<T>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    #[serde(alias = "thermal")]
    Heat,
    Rossler,
    Kuramoto,
}

impl SystemKind {
    /// Width of the raw per-node state integrated by the solvers.
    pub fn state_dim(self) -> usize {
        match self {
            SystemKind::Heat | SystemKind::Kuramoto => 1,
            SystemKind::Rossler => 3,
        }
    }

    /// Width of the per-node state seen by the network (phases become `(cos, sin)`).
    pub fn encoded_state_dim(self) -> usize {
        match self {
            SystemKind::Heat => 1,
            SystemKind::Rossler => 3,
            SystemKind::Kuramoto => 2,
        }
    }

    /// (node, edge, global) coefficient widths.
    pub fn coeff_dims(self) -> (usize, usize, usize) {
        match self {
            SystemKind::Heat => (0, 1, 0),
            SystemKind::Rossler => (0, 1, 3),
            SystemKind::Kuramoto => (1, 0, 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Heat => "heat",
            SystemKind::Rossler => "rossler",
            SystemKind::Kuramoto => "kuramoto",
        }
    }
}

impl std::str::FromStr for SystemKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "heat" | "thermal" => Ok(SystemKind::Heat),
            "rossler" | "rössler" => Ok(SystemKind::Rossler),
            "kuramoto" => Ok(SystemKind::Kuramoto),
            other => param_err(format!("unknown system '{other}'")),
        }
    }
}

/// A dynamical system instance: kind, graph and its node/edge/global coefficients.
///
/// For Kuramoto systems the graph is the complete interaction base; `theta_th` selects
/// which pairs interact at each evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec<T> {
    pub kind: SystemKind,
    pub graph: Graph,
    pub node_coeffs: DenseMatrix<T>,
    pub edge_coeffs: DenseMatrix<T>,
    pub global_coeffs: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_th: Option<T>,
}

impl<T: Scalar> SystemSpec<T> {
    pub fn new(
        kind: SystemKind,
        graph: Graph,
        node_coeffs: DenseMatrix<T>,
        edge_coeffs: DenseMatrix<T>,
        global_coeffs: Vec<T>,
    ) -> Result<Self> {
        let spec = Self {
            kind,
            graph,
            node_coeffs,
            edge_coeffs,
            global_coeffs,
            theta_th: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (dv, de, dg) = self.kind.coeff_dims();
        let n = self.graph.num_nodes();
        let e = self.graph.num_edges();
        if self.node_coeffs.shape() != (n, dv) {
            return param_err(format!(
                "{} node coefficients: expected {n}x{dv}, got {:?}",
                self.kind.name(),
                self.node_coeffs.shape()
            ));
        }
        // Kuramoto edges are recomputed per evaluation and carry no coefficients.
        if self.kind != SystemKind::Kuramoto && self.edge_coeffs.shape() != (e, de) {
            return param_err(format!(
                "{} edge coefficients: expected {e}x{de}, got {:?}",
                self.kind.name(),
                self.edge_coeffs.shape()
            ));
        }
        if self.global_coeffs.len() != dg {
            return param_err(format!(
                "{} global coefficients: expected {dg}, got {}",
                self.kind.name(),
                self.global_coeffs.len()
            ));
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn state_dim(&self) -> usize {
        self.kind.state_dim()
    }

    /// Kuramoto interaction rule (threshold, coupling, natural frequencies).
    pub fn kuramoto_rule(&self) -> Result<KuramotoInteractionRule<T>> {
        if self.kind != SystemKind::Kuramoto {
            return param_err("not a Kuramoto system");
        }
        KuramotoInteractionRule::new(
            self.theta_th.unwrap_or_else(|| T::lit(std::f64::consts::FRAC_PI_2)),
            self.global_coeffs[0],
            self.node_coeffs.data().to_vec(),
        )
    }

    /// Right-hand side on a flat row-major state vector.
    pub fn derivative(&self, s: &[T], ds: &mut [T]) -> Result<()> {
        let n = self.num_nodes();
        if s.len() != n * self.state_dim() || ds.len() != s.len() {
            return param_err(format!(
                "state length {} does not match {n} nodes x {}",
                s.len(),
                self.state_dim()
            ));
        }
        match self.kind {
            SystemKind::Heat => heat::heat_into(&self.graph, self.edge_coeffs.data(), s, ds),
            SystemKind::Rossler => rossler::rossler_into(self, s, ds),
            SystemKind::Kuramoto => {
                let theta_th = self
                    .theta_th
                    .unwrap_or_else(|| T::lit(std::f64::consts::FRAC_PI_2));
                kuramoto::kuramoto_into(
                    self.node_coeffs.data(),
                    self.global_coeffs[0],
                    theta_th,
                    s,
                    ds,
                )
            }
        }
        Ok(())
    }

    /// Convenience closure for the ODE solvers. Panics on shape mismatch, which
    /// [`SystemSpec::validate`] and the solver's own checks rule out.
    pub fn rhs(&self) -> impl FnMut(T, &[T], &mut [T]) + '_ {
        move |_t, s, ds| self.derivative(s, ds).expect("state shape checked by solver")
    }

    pub fn cast<U: Scalar>(&self) -> SystemSpec<U> {
        SystemSpec {
            kind: self.kind,
            graph: self.graph.clone(),
            node_coeffs: self.node_coeffs.cast(),
            edge_coeffs: self.edge_coeffs.cast(),
            global_coeffs: self.global_coeffs.iter().map(|&v| U::lit(v.to_f64_lossy())).collect(),
            theta_th: self.theta_th.map(|v| U::lit(v.to_f64_lossy())),
        }
    }

    /// Maps a raw solver state to the network's encoded state.
    pub fn encode_state(&self, s: &StateMatrix<T>) -> Result<StateMatrix<T>> {
        match self.kind {
            SystemKind::Kuramoto => Ok(phase_encode(s)),
            _ => Ok(s.clone()),
        }
    }

    pub fn decode_state(&self, s: &StateMatrix<T>) -> Result<StateMatrix<T>> {
        match self.kind {
            SystemKind::Kuramoto => phase_decode(s),
            _ => Ok(s.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_parsing_and_dims() {
        assert_eq!("Thermal".parse::<SystemKind>().unwrap(), SystemKind::Heat);
        assert!("lorenz".parse::<SystemKind>().is_err());
        assert_eq!(SystemKind::Kuramoto.encoded_state_dim(), 2);
        assert_eq!(SystemKind::Rossler.state_dim(), 3);
    }

    #[test]
    fn spec_json_has_kind_tag() {
        let g = Graph::path(2);
        let spec = SystemSpec::new(
            SystemKind::Heat,
            g,
            DenseMatrix::zeros(2, 0),
            DenseMatrix::column(vec![0.5]),
            vec![],
        )
        .unwrap();
        let js = serde_json::to_string(&spec).unwrap();
        assert!(js.contains(r#""kind":"heat""#));
        let back: SystemSpec<f64> = serde_json::from_str(&js).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let g = Graph::path(3);
        let r = SystemSpec::<f64>::new(
            SystemKind::Heat,
            g,
            DenseMatrix::zeros(3, 0),
            DenseMatrix::column(vec![0.5]),
            vec![],
        );
        assert!(r.is_err());
    }
}
