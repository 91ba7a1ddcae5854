use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{param_err, Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;

use super::StateMatrix;

/// Which oscillator pairs interact, with coupling strength and natural frequencies.
///
/// A pair interacts when its phase gap `|theta_i - theta_j| mod 2pi` lies within
/// `theta_th` of `pi/2` or `3pi/2`; any `theta_th >= pi/2` keeps every pair.
#[derive(Clone, Debug, PartialEq)]
pub struct KuramotoInteractionRule<T> {
    pub theta_th: T,
    pub coupling: T,
    pub omegas: Vec<T>,
}

impl<T: Scalar> KuramotoInteractionRule<T> {
    pub fn new(theta_th: T, coupling: T, omegas: Vec<T>) -> Result<Self> {
        if !(theta_th > T::zero()) {
            return param_err("theta_th must be positive");
        }
        Ok(Self {
            theta_th,
            coupling,
            omegas,
        })
    }

    pub fn all_pairs(&self) -> bool {
        self.theta_th >= T::lit(FRAC_PI_2)
    }

    pub fn num_nodes(&self) -> usize {
        self.omegas.len()
    }
}

#[inline]
pub(super) fn interacts<T: Scalar>(ti: T, tj: T, theta_th: T) -> bool {
    if theta_th >= T::lit(FRAC_PI_2) {
        return true;
    }
    let two_pi = T::lit(2.0 * PI);
    let mut gap = (ti - tj).abs() % two_pi;
    if gap < T::zero() {
        gap += two_pi;
    }
    (gap - T::lit(FRAC_PI_2)).abs() < theta_th || (gap - T::lit(1.5 * PI)).abs() < theta_th
}

pub(super) fn kuramoto_into<T: Scalar>(omegas: &[T], k: T, theta_th: T, s: &[T], ds: &mut [T]) {
    let n = s.len();
    ds.iter_mut().for_each(|x| *x = T::zero());
    for i in 0..n {
        for j in i + 1..n {
            if interacts(s[i], s[j], theta_th) {
                let f = (s[j] - s[i]).sin();
                ds[i] += f;
                ds[j] -= f;
            }
        }
    }
    let scale = k / T::from_count(n.max(1));
    for (d, &w) in ds.iter_mut().zip(omegas) {
        *d = w + scale * *d;
    }
}

/// `dtheta_i/dt = omega_i + (K/N) sum_{j interacting} sin(theta_j - theta_i)`.
pub fn rhs_kuramoto<T: Scalar>(
    rule: &KuramotoInteractionRule<T>,
    s: &StateMatrix<T>,
) -> Result<StateMatrix<T>> {
    if s.shape() != (rule.num_nodes(), 1) {
        return param_err(format!("Kuramoto state must be {}x1", rule.num_nodes()));
    }
    let mut ds = StateMatrix::zeros(s.rows(), 1);
    kuramoto_into(&rule.omegas, rule.coupling, rule.theta_th, s.data(), ds.data_mut());
    Ok(ds)
}

/// Interacting pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn active_pairs<T: Scalar>(theta: &[T], theta_th: T) -> Vec<(usize, usize)> {
    let n = theta.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if interacts(theta[i], theta[j], theta_th) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Interaction graph at the given phases.
pub fn kuramoto_graph<T: Scalar>(theta: &[T], theta_th: T) -> Graph {
    Graph::undirected(theta.len(), active_pairs(theta, theta_th)).expect("pairs are simple")
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_phase<T: Scalar>(x: T) -> T {
    let two_pi = T::lit(2.0 * PI);
    let pi = T::lit(PI);
    let mut r = x % two_pi;
    if r <= -pi {
        r += two_pi;
    } else if r > pi {
        r -= two_pi;
    }
    r
}

/// `theta -> (cos theta, sin theta)` per node.
pub fn phase_encode<T: Scalar>(s: &StateMatrix<T>) -> StateMatrix<T> {
    StateMatrix::from_fn(s.rows(), 2, |i, c| {
        let th = s.get(i, 0);
        if c == 0 {
            th.cos()
        } else {
            th.sin()
        }
    })
}

/// `(c, s) -> atan2(s, c)` after projecting onto the unit circle.
pub fn phase_decode<T: Scalar>(s: &StateMatrix<T>) -> Result<StateMatrix<T>> {
    if s.cols() != 2 {
        return param_err("encoded phases must have two columns");
    }
    let mut out = Vec::with_capacity(s.rows());
    for i in 0..s.rows() {
        let (c, sn) = (s.get(i, 0), s.get(i, 1));
        let norm = c.hypot(sn);
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::DegenerateInput(format!(
                "cannot decode phase of node {i} from ({c}, {sn})"
            )));
        }
        out.push((sn / norm).atan2(c / norm));
    }
    Ok(StateMatrix::column(out))
}
