//! Reference integrators: an adaptive 8th-order Runge–Kutta (Dormand–Prince 8(5,3))
//! and an Adams/BDF solver that switches to the implicit branch under stiffness.
//!
//! Both return states exactly at the requested times by shortening the step that
//! would cross each one, and count every right-hand-side call as NFEV.

mod linalg;
mod rk8;
mod stiff;

use std::cell::Cell;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::neural::DenseMatrix;
use crate::scalar::Scalar;
use crate::trajectory::Trajectory;

pub use rk8::{solve_rk8, RK8_STAGES};
pub use stiff::solve_stiff_switching;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk8,
    StiffSwitching,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// `None` picks the first step automatically.
    #[serde(default)]
    pub initial_step: Option<f64>,
    pub max_steps: usize,
    pub method: Method,
    /// Wall-clock budget in seconds; exceeding it aborts with partial NFEV.
    #[serde(default)]
    pub timeout: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-11,
            rel_tol: 1e-11,
            initial_step: None,
            max_steps: 5_000_000,
            method: Method::Rk8,
            timeout: None,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.abs_tol = tol;
        self.rel_tol = tol;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return param_err("solver tolerances must be positive");
        }
        if let Some(h) = self.initial_step {
            if !(h > 0.0) {
                return param_err("initial step must be positive");
            }
        }
        if self.max_steps == 0 {
            return param_err("max_steps must be positive");
        }
        Ok(())
    }
}

/// Trajectory plus cost accounting of one solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport<T> {
    pub trajectory: Trajectory<T>,
    pub nfev: u64,
    pub steps_accepted: u64,
    pub steps_rejected: u64,
    pub stiff_switches: u64,
    pub wall_time: f64,
}

/// Right-hand side wrapper that counts its invocations.
pub struct CountingRhs<F> {
    inner: F,
    calls: Cell<u64>,
}

impl<F> CountingRhs<F> {
    pub fn new(inner: F) -> Self {
        Self {
            inner,
            calls: Cell::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.calls.get()
    }

    pub fn reset(&self) {
        self.calls.set(0);
    }

    pub fn call<T>(&mut self, t: T, y: &[T], dy: &mut [T])
    where
        F: FnMut(T, &[T], &mut [T]),
    {
        self.calls.set(self.calls.get() + 1);
        (self.inner)(t, y, dy);
    }
}

/// Solves with the method named in `cfg`.
pub fn solve<T: Scalar, F: FnMut(T, &[T], &mut [T])>(
    rhs: F,
    s0: &DenseMatrix<T>,
    eval_times: &[T],
    cfg: &SolverConfig,
) -> Result<SolveReport<T>> {
    match cfg.method {
        Method::Rk8 => solve_rk8(rhs, s0, eval_times, cfg),
        Method::StiffSwitching => solve_stiff_switching(rhs, s0, eval_times, cfg),
    }
}

pub(crate) fn check_inputs<T: Scalar>(
    s0: &DenseMatrix<T>,
    eval_times: &[T],
    cfg: &SolverConfig,
) -> Result<()> {
    cfg.validate()?;
    if eval_times.is_empty() {
        return param_err("no evaluation times requested");
    }
    if !(eval_times[0] > T::zero()) || eval_times.windows(2).any(|w| !(w[1] > w[0])) {
        return param_err("evaluation times must be strictly increasing and after t=0");
    }
    if !s0.is_finite() {
        return Err(Error::Numerical("non-finite initial state".into()));
    }
    Ok(())
}

/// Weighted RMS norm with weights `a + r*|y|`.
pub(crate) fn wrms<T: Scalar>(v: &[T], y: &[T], atol: T, rtol: T) -> T {
    if v.is_empty() {
        return T::zero();
    }
    let s: T = v
        .iter()
        .zip(y)
        .map(|(&e, &yi)| {
            let w = e / (atol + rtol * yi.abs());
            w * w
        })
        .sum();
    (s / T::from_count(v.len())).sqrt()
}

pub(crate) struct Budget {
    start: Instant,
    timeout: Option<f64>,
    max_steps: usize,
    attempts: usize,
}

impl Budget {
    pub(crate) fn new(cfg: &SolverConfig) -> Self {
        Self {
            start: Instant::now(),
            timeout: cfg.timeout,
            max_steps: cfg.max_steps,
            attempts: 0,
        }
    }

    pub(crate) fn tick(&mut self, t: f64, nfev: u64) -> Result<()> {
        self.attempts += 1;
        if self.attempts > self.max_steps {
            return Err(Error::Divergence {
                max_steps: self.max_steps,
                t,
                nfev,
            });
        }
        if let Some(limit) = self.timeout {
            if self.attempts % 64 == 0 && self.elapsed() > limit {
                return Err(Error::Timeout {
                    seconds: self.elapsed(),
                    t,
                    nfev,
                });
            }
        }
        Ok(())
    }

    pub(crate) fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

pub(crate) fn ensure_finite<T: Scalar>(v: &[T], t: T, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite {what} at t={t}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_wrapper() {
        let mut f = CountingRhs::new(|_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0]);
        let mut out = [0.0];
        for _ in 0..3 {
            f.call(0.0, &[1.0], &mut out);
        }
        assert_eq!(f.count(), 3);
        f.reset();
        assert_eq!(f.count(), 0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s0 = DenseMatrix::column(vec![1.0]);
        let cfg = SolverConfig::default();
        assert!(check_inputs(&s0, &[0.0, 1.0], &cfg).is_err());
        assert!(check_inputs(&s0, &[0.5, 0.5], &cfg).is_err());
        assert!(check_inputs(&s0, &[], &cfg).is_err());
        assert!(check_inputs(&s0, &[1.0], &cfg.clone().with_tol(0.0)).is_err());
        assert!(check_inputs(&DenseMatrix::column(vec![f64::NAN]), &[1.0], &cfg).is_err());
    }
}
