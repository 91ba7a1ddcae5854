use crate::error::{param_err, Result};
use crate::graph::{Graph, SpectralDecomposition};
use crate::scalar::Scalar;

use super::{StateMatrix, SystemKind, SystemSpec};

pub(super) fn heat_into<T: Scalar>(g: &Graph, d: &[T], s: &[T], ds: &mut [T]) {
    ds.iter_mut().for_each(|x| *x = T::zero());
    for (&(i, j), &w) in g.edges().iter().zip(d) {
        let flow = w * (s[j] - s[i]);
        ds[i] += flow;
        ds[j] -= flow;
    }
}

/// `dT_i/dt = sum_{j in N(i)} d_ij (T_j - T_i)`.
pub fn rhs_heat<T: Scalar>(spec: &SystemSpec<T>, s: &StateMatrix<T>) -> Result<StateMatrix<T>> {
    if spec.kind != SystemKind::Heat {
        return param_err("rhs_heat called on a non-heat system");
    }
    if s.shape() != (spec.num_nodes(), 1) {
        return param_err(format!("heat state must be {}x1", spec.num_nodes()));
    }
    let mut ds = StateMatrix::zeros(s.rows(), 1);
    spec.derivative(s.data(), ds.data_mut())?;
    Ok(ds)
}

/// Closed-form temperatures `T(t) = sum_j (T(0) . xi_j) exp(-lambda_j t) xi_j`.
pub fn heat_spectral_solution<T: Scalar>(
    eig: &SpectralDecomposition<T>,
    t0_state: &[T],
    t: T,
) -> Vec<T> {
    let n = eig.size();
    let mut out = vec![T::zero(); n];
    for (j, &lam) in eig.eigenvalues().iter().enumerate() {
        let xi = eig.eigenvector(j);
        let a: T = xi.iter().zip(t0_state).map(|(&x, &y)| x * y).sum();
        let coef = a * (-lam * t).exp();
        for (o, &x) in out.iter_mut().zip(xi) {
            *o += coef * x;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::sample_heat_instance;
    use crate::graph::{eigendecompose, generate_er, weighted_laplacian};
    use crate::neural::DenseMatrix;

    fn two_node() -> SystemSpec<f64> {
        SystemSpec::new(
            SystemKind::Heat,
            Graph::path(2),
            DenseMatrix::zeros(2, 0),
            DenseMatrix::column(vec![0.5]),
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn two_node_hand_value() {
        let ds = rhs_heat(&two_node(), &StateMatrix::column(vec![1.0, 0.0])).unwrap();
        assert_eq!(ds.data(), &[-0.5, 0.5]);
    }

    #[test]
    fn uniform_state_is_equilibrium() {
        let g = generate_er(15, 30, 1).unwrap();
        let (spec, _) = sample_heat_instance::<f64>(&g, 2, &Default::default());
        let ds = rhs_heat(&spec, &StateMatrix::column(vec![0.7; 15])).unwrap();
        assert!(ds.data().iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn matches_negative_laplacian_product() {
        let g = generate_er(20, 50, 3).unwrap();
        let (spec, s0) = sample_heat_instance(&g, 4, &Default::default());
        let s = StateMatrix::column(s0.data().iter().enumerate().map(|(i, x)| x + 0.1 * i as f64).collect());
        let ds = rhs_heat(&spec, &s).unwrap();
        let lap = weighted_laplacian(&g, spec.edge_coeffs.data()).unwrap();
        let ls = lap.apply(s.data());
        for (a, b) in ds.data().iter().zip(ls) {
            assert!((a + b).abs() < 1e-14);
        }
        let total: f64 = ds.data().iter().sum();
        assert!(total.abs() < 1e-12 * 20.0);
    }

    #[test]
    fn spectral_solution_at_zero_is_initial_state() {
        let g = generate_er(12, 20, 5).unwrap();
        let (spec, s0) = sample_heat_instance::<f64>(&g, 6, &Default::default());
        let eig = eigendecompose(&weighted_laplacian(&g, spec.edge_coeffs.data()).unwrap()).unwrap();
        let back = heat_spectral_solution(&eig, s0.data(), 0.0);
        for (a, b) in back.iter().zip(s0.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        // Long-time limit is the mean temperature.
        let mean = s0.data().iter().sum::<f64>() / 12.0;
        let late = heat_spectral_solution(&eig, s0.data(), 500.0);
        assert!(late.iter().all(|x| (x - mean).abs() < 1e-9));
    }
}
