use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::neural::DenseMatrix;
use crate::scalar::Scalar;

/// States at ascending, possibly non-uniform, time points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<DenseMatrix<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(times: Vec<T>, states: Vec<DenseMatrix<T>>) -> Result<Self> {
        let t = Self { times, states };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.states.len() || self.times.is_empty() {
            return param_err(format!(
                "trajectory has {} times and {} states",
                self.times.len(),
                self.states.len()
            ));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return param_err("trajectory times must be strictly increasing");
        }
        let shape = self.states[0].shape();
        if self.states.iter().any(|s| s.shape() != shape) {
            return param_err("trajectory state shapes differ");
        }
        Ok(())
    }

    /// Number of steps `M` (one less than the number of time points).
    pub fn num_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dt_sequence(&self) -> Vec<T> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn initial(&self) -> &DenseMatrix<T> {
        &self.states[0]
    }

    pub fn last(&self) -> &DenseMatrix<T> {
        self.states.last().expect("non-empty trajectory")
    }

    pub fn num_nodes(&self) -> usize {
        self.states[0].rows()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].cols()
    }

    /// Keeps only time points with `t <= t_max` (the initial point is always kept).
    pub fn truncated(&self, t_max: T) -> Self {
        let keep = self.times.iter().take_while(|&&t| t <= t_max).count().max(1);
        Self {
            times: self.times[..keep].to_vec(),
            states: self.states[..keep].to_vec(),
        }
    }
}
