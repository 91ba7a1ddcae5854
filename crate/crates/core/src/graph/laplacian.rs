use crate::error::{param_err, Error, Result};
use crate::scalar::Scalar;

use super::Graph;

pub const DEFAULT_EIGEN_CAP: usize = 512;

/// Dense Laplacian weighted by per-edge dissipation rates.
#[derive(Clone, Debug)]
pub struct WeightedLaplacian<T> {
    n: usize,
    matrix: Vec<T>,
    edge_weights: Vec<T>,
}

impl<T: Scalar> WeightedLaplacian<T> {
    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.matrix[i * self.n + j]
    }

    /// Row-major `n x n` entries.
    pub fn as_slice(&self) -> &[T] {
        &self.matrix
    }

    pub fn edge_weights(&self) -> &[T] {
        &self.edge_weights
    }

    /// `L x`.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                self.matrix[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(x)
                    .map(|(&a, &b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// `L_ii = sum_j d_ij`, `L_ij = -d_ij` for neighbors, zero elsewhere.
pub fn weighted_laplacian<T: Scalar>(g: &Graph, d: &[T]) -> Result<WeightedLaplacian<T>> {
    if g.is_directed() {
        return param_err("weighted Laplacian requires an undirected graph");
    }
    if d.len() != g.num_edges() {
        return param_err(format!(
            "expected {} edge weights, got {}",
            g.num_edges(),
            d.len()
        ));
    }
    if let Some(k) = d.iter().position(|&w| !(w > T::zero()) || !w.is_finite()) {
        return param_err(format!("edge weight {k} is not positive"));
    }
    let n = g.num_nodes();
    let mut matrix = vec![T::zero(); n * n];
    for (&(i, j), &w) in g.edges().iter().zip(d) {
        matrix[i * n + j] = -w;
        matrix[j * n + i] = -w;
        matrix[i * n + i] += w;
        matrix[j * n + j] += w;
    }
    Ok(WeightedLaplacian {
        n,
        matrix,
        edge_weights: d.to_vec(),
    })
}

/// Full eigensystem of a symmetric matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition<T> {
    n: usize,
    eigenvalues: Vec<T>,
    // eigenvector j occupies vectors[j*n..(j+1)*n]
    vectors: Vec<T>,
}

impl<T: Scalar> SpectralDecomposition<T> {
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn eigenvector(&self, j: usize) -> &[T] {
        &self.vectors[j * self.n..(j + 1) * self.n]
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// `Q diag(lambda) Q^T`, row-major.
    pub fn reconstruct(&self) -> Vec<T> {
        let n = self.n;
        let mut out = vec![T::zero(); n * n];
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let v = self.eigenvector(j);
            for r in 0..n {
                let s = lam * v[r];
                for c in 0..n {
                    out[r * n + c] += s * v[c];
                }
            }
        }
        out
    }
}

pub fn eigendecompose<T: Scalar>(lap: &WeightedLaplacian<T>) -> Result<SpectralDecomposition<T>> {
    eigendecompose_with_cap(lap, DEFAULT_EIGEN_CAP)
}

/// Cyclic Jacobi rotations on the dense symmetric Laplacian.
pub fn eigendecompose_with_cap<T: Scalar>(
    lap: &WeightedLaplacian<T>,
    cap: usize,
) -> Result<SpectralDecomposition<T>> {
    let n = lap.n;
    if n > cap {
        return Err(Error::Capability(format!(
            "eigendecomposition of {n} nodes exceeds cap {cap}; use a numerical solver"
        )));
    }
    let mut a = lap.matrix.clone();
    // Rows of `v` become the eigenvectors.
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    let scale = a.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    let tiny = T::eps() * T::eps() * scale * scale;
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum();
        if off <= tiny {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vp = v[p * n + k];
                    let vq = v[q * n + k];
                    v[p * n + k] = c * vp - s * vq;
                    v[q * n + k] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].partial_cmp(&a[j * n + j]).expect("finite spectrum"));
    let eigenvalues = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for &i in &order {
        vectors.extend_from_slice(&v[i * n..(i + 1) * n]);
    }
    Ok(SpectralDecomposition {
        n,
        eigenvalues,
        vectors,
    })
}
