use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::scalar::Scalar;

use super::DenseMatrix;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

/// GeLU, tanh approximation.
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    let u = T::lit(SQRT_2_OVER_PI) * (x + T::lit(GELU_CUBIC) * x * x * x);
    T::lit(0.5) * x * (T::one() + u.tanh())
}

#[inline]
pub fn gelu_deriv<T: Scalar>(x: T) -> T {
    let c = T::lit(SQRT_2_OVER_PI);
    let a = T::lit(GELU_CUBIC);
    let u = c * (x + a * x * x * x);
    let th = u.tanh();
    let du = c * (T::one() + T::lit(3.0) * a * x * x);
    T::lit(0.5) * (T::one() + th) + T::lit(0.5) * x * (T::one() - th * th) * du
}

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

/// Two-layer perceptron `y = W2 gelu(W1 x + b1) + b2`, applied row-wise.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mlp2<T> {
    w1: DenseMatrix<T>,
    b1: DenseMatrix<T>,
    w2: DenseMatrix<T>,
    b2: DenseMatrix<T>,
    #[serde(skip, default = "fresh_stamp")]
    stamp: u64,
}

impl<T: PartialEq> PartialEq for Mlp2<T> {
    fn eq(&self, other: &Self) -> bool {
        self.w1 == other.w1 && self.b1 == other.b1 && self.w2 == other.w2 && self.b2 == other.b2
    }
}

/// Activations kept by [`Mlp2::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache<T> {
    x: DenseMatrix<T>,
    pre: DenseMatrix<T>,
    act: DenseMatrix<T>,
    stamp: u64,
}

pub const MLP_TENSOR_NAMES: [&str; 4] = ["w1", "b1", "w2", "b2"];

impl<T: Scalar> Mlp2<T> {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: DenseMatrix::zeros(hidden, input),
            b1: DenseMatrix::zeros(1, hidden),
            w2: DenseMatrix::zeros(output, hidden),
            b2: DenseMatrix::zeros(1, output),
            stamp: fresh_stamp(),
        }
    }

    /// Uniform fan-in initialization, biases zero.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(input, hidden, output);
        let l1 = (1.0 / input.max(1) as f64).sqrt();
        let l2 = (1.0 / hidden.max(1) as f64).sqrt();
        for v in m.w1.data_mut() {
            *v = T::lit(rng.random_range(-l1..l1));
        }
        for v in m.w2.data_mut() {
            *v = T::lit(rng.random_range(-l2..l2));
        }
        m
    }

    pub fn from_parts(
        w1: DenseMatrix<T>,
        b1: Vec<T>,
        w2: DenseMatrix<T>,
        b2: Vec<T>,
    ) -> Result<Self> {
        if b1.len() != w1.rows() || w2.cols() != w1.rows() || b2.len() != w2.rows() {
            return param_err("inconsistent MLP layer shapes");
        }
        Ok(Self {
            b1: DenseMatrix::new(1, b1.len(), b1)?,
            b2: DenseMatrix::new(1, b2.len(), b2)?,
            w1,
            w2,
            stamp: fresh_stamp(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.rows()
    }

    pub fn tensors(&self) -> [&DenseMatrix<T>; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    /// Mutable access invalidates every outstanding forward cache.
    pub fn tensors_mut(&mut self) -> [&mut DenseMatrix<T>; 4] {
        self.stamp = fresh_stamp();
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// All-zero MLP of the same shape, used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden_dim(), self.output_dim())
    }

    pub fn scale_output(&mut self, s: T) {
        let [_, _, w2, b2] = self.tensors_mut();
        w2.data_mut().iter_mut().for_each(|v| *v *= s);
        b2.data_mut().iter_mut().for_each(|v| *v *= s);
    }

    pub fn forward(&self, x: &DenseMatrix<T>) -> Result<(DenseMatrix<T>, MlpCache<T>)> {
        if x.cols() != self.input_dim() {
            return param_err(format!(
                "MLP expects {} input columns, got {}",
                self.input_dim(),
                x.cols()
            ));
        }
        let mut pre = x.matmul_nt(&self.w1)?;
        pre.add_row_vector(self.b1.data());
        let act = pre.map(gelu);
        let mut y = act.matmul_nt(&self.w2)?;
        y.add_row_vector(self.b2.data());
        Ok((
            y,
            MlpCache {
                x: x.clone(),
                pre,
                act,
                stamp: self.stamp,
            },
        ))
    }

    /// Forward pass without keeping activations.
    pub fn apply(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        Ok(self.forward(x)?.0)
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub fn backward(
        &self,
        cache: &MlpCache<T>,
        dy: &DenseMatrix<T>,
        grads: &mut Mlp2<T>,
    ) -> Result<DenseMatrix<T>> {
        if cache.stamp != self.stamp {
            return Err(Error::Contract("MLP cache is stale: parameters changed since forward".into()));
        }
        if dy.shape() != (cache.x.rows(), self.output_dim()) {
            return param_err("MLP backward: output gradient shape mismatch");
        }
        let [gw1, gb1, gw2, gb2] = grads.tensors_mut();
        if gw1.shape() != self.w1.shape() || gw2.shape() != self.w2.shape() {
            return param_err("MLP backward: gradient accumulator shape mismatch");
        }
        gw2.add_assign(&dy.matmul_tn(&cache.act)?)?;
        add_into(gb2.data_mut(), &dy.col_sums());
        let da = dy.matmul_nn(&self.w2)?;
        let mut dpre = da;
        for (d, &p) in dpre.data_mut().iter_mut().zip(cache.pre.data()) {
            *d *= gelu_deriv(p);
        }
        gw1.add_assign(&dpre.matmul_tn(&cache.x)?)?;
        add_into(gb1.data_mut(), &dpre.col_sums());
        dpre.matmul_nn(&self.w1)
    }
}

fn add_into<T: Scalar>(acc: &mut [T], v: &[T]) {
    for (a, &b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}
