use crate::error::{param_err, Result};
use crate::scalar::Scalar;

use super::{StateMatrix, SystemKind, SystemSpec};

pub(super) fn rossler_into<T: Scalar>(spec: &SystemSpec<T>, s: &[T], ds: &mut [T]) {
    let (a, b, c) = (
        spec.global_coeffs[0],
        spec.global_coeffs[1],
        spec.global_coeffs[2],
    );
    for i in 0..spec.num_nodes() {
        let (x, y, z) = (s[3 * i], s[3 * i + 1], s[3 * i + 2]);
        ds[3 * i] = -y - z;
        ds[3 * i + 1] = x + a * y;
        ds[3 * i + 2] = b + z * (x - c);
    }
    for (&(i, j), &k) in spec.graph.edges().iter().zip(spec.edge_coeffs.data()) {
        let flow = k * (s[3 * j + 1] - s[3 * i + 1]);
        ds[3 * i + 1] += flow;
        ds[3 * j + 1] -= flow;
    }
}

/// Coupled Rössler attractors with diffusive coupling on the `y` component.
pub fn rhs_rossler<T: Scalar>(spec: &SystemSpec<T>, s: &StateMatrix<T>) -> Result<StateMatrix<T>> {
    if spec.kind != SystemKind::Rossler {
        return param_err("rhs_rossler called on a non-Rössler system");
    }
    if s.shape() != (spec.num_nodes(), 3) {
        return param_err(format!("Rössler state must be {}x3", spec.num_nodes()));
    }
    let mut ds = StateMatrix::zeros(s.rows(), 3);
    spec.derivative(s.data(), ds.data_mut())?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::sample_rossler_instance;
    use crate::graph::{generate_er, Graph};
    use crate::neural::DenseMatrix;

    fn spec(g: Graph, k: Vec<f64>, abc: [f64; 3]) -> SystemSpec<f64> {
        let n = g.num_nodes();
        SystemSpec::new(
            SystemKind::Rossler,
            g,
            DenseMatrix::zeros(n, 0),
            DenseMatrix::column(k),
            abc.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn origin_single_node() {
        let sp = spec(Graph::undirected(1, vec![]).unwrap(), vec![], [0.2, 0.2, 5.7]);
        let ds = rhs_rossler(&sp, &StateMatrix::zeros(1, 3)).unwrap();
        assert_eq!(ds.data(), &[0.0, 0.0, 0.2]);
    }

    #[test]
    fn two_node_coupling_hand_value() {
        let sp = spec(Graph::path(2), vec![0.05], [0.2, 0.2, 5.7]);
        let s = StateMatrix::new(2, 3, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let ds = rhs_rossler(&sp, &s).unwrap();
        assert!((ds.get(0, 1) - 0.15).abs() < 1e-15);
        assert!((ds.get(1, 1) - 0.05).abs() < 1e-15);
        assert_eq!(ds.get(0, 0), -1.0);
    }

    #[test]
    fn matches_per_node_loop() {
        let g = generate_er(12, 25, 8).unwrap();
        let (sp, s0) = sample_rossler_instance::<f64>(&g, 9, &Default::default());
        let ds = rhs_rossler(&sp, &s0).unwrap();
        let (a, b, c) = (sp.global_coeffs[0], sp.global_coeffs[1], sp.global_coeffs[2]);
        for i in 0..12 {
            let (x, y, z) = (s0.get(i, 0), s0.get(i, 1), s0.get(i, 2));
            let mut coupling = 0.0f64;
            for &j in g.neighbors(i) {
                let k = sp.edge_coeffs.get(g.edge_index(i, j).unwrap(), 0);
                coupling += k * (s0.get(j, 1) - y);
            }
            assert!((ds.get(i, 0) - (-y - z)).abs() < 1e-14);
            assert!((ds.get(i, 1) - (x + a * y + coupling)).abs() < 1e-13);
            assert!((ds.get(i, 2) - (b + z * (x - c))).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_coupling_decouples_nodes() {
        let g = generate_er(6, 8, 2).unwrap();
        let (mut sp, s0) = sample_rossler_instance(&g, 3, &Default::default());
        sp.edge_coeffs = DenseMatrix::zeros(8, 1);
        let ds = rhs_rossler(&sp, &s0).unwrap();
        let iso = spec(Graph::undirected(1, vec![]).unwrap(), vec![], [sp.global_coeffs[0], sp.global_coeffs[1], sp.global_coeffs[2]]);
        for i in 0..6 {
            let single = StateMatrix::new(1, 3, s0.row(i).to_vec()).unwrap();
            assert_eq!(rhs_rossler(&iso, &single).unwrap().row(0), ds.row(i));
        }
    }
}
