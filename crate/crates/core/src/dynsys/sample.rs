use std::f64::consts::PI;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::neural::DenseMatrix;
use crate::scalar::Scalar;

use super::{KuramotoInteractionRule, StateMatrix, SystemKind, SystemSpec};

/// Sampling intervals for initial conditions and coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstanceRanges {
    pub heat_hot_fraction: (f64, f64),
    pub heat_dissipation: (f64, f64),
    pub rossler_xy: (f64, f64),
    pub rossler_z: (f64, f64),
    pub rossler_ab: (f64, f64),
    pub rossler_c: (f64, f64),
    pub rossler_coupling: (f64, f64),
    pub kuramoto_coupling: (f64, f64),
    pub kuramoto_omega_std: f64,
}

impl Default for InstanceRanges {
    fn default() -> Self {
        Self {
            heat_hot_fraction: (0.2, 0.8),
            heat_dissipation: (0.1, 1.0),
            rossler_xy: (-4.0, 4.0),
            rossler_z: (0.0, 6.0),
            rossler_ab: (0.1, 0.3),
            rossler_c: (5.0, 7.0),
            rossler_coupling: (0.01, 0.05),
            kuramoto_coupling: (0.1, 0.9),
            kuramoto_omega_std: 1.0,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Hot/cold initial temperatures and uniform dissipation rates.
pub fn sample_heat_instance<T: Scalar>(
    g: &Graph,
    seed: u64,
    ranges: &InstanceRanges,
) -> (SystemSpec<T>, StateMatrix<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.num_nodes();
    let frac = uniform(&mut rng, ranges.heat_hot_fraction);
    let n_hot = ((frac * n as f64).round() as usize).min(n);
    let mut temps = vec![T::zero(); n];
    for i in index::sample(&mut rng, n, n_hot) {
        temps[i] = T::one();
    }
    let d: Vec<T> = (0..g.num_edges())
        .map(|_| T::lit(uniform(&mut rng, ranges.heat_dissipation)))
        .collect();
    let spec = SystemSpec::new(
        SystemKind::Heat,
        g.clone(),
        DenseMatrix::zeros(n, 0),
        DenseMatrix::column(d),
        vec![],
    )
    .expect("sampled shapes are consistent");
    (spec, StateMatrix::column(temps))
}

/// Random attractor positions, chaotic-regime `(a, b, c)` and weak couplings.
pub fn sample_rossler_instance<T: Scalar>(
    g: &Graph,
    seed: u64,
    ranges: &InstanceRanges,
) -> (SystemSpec<T>, StateMatrix<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.num_nodes();
    let mut s = Vec::with_capacity(3 * n);
    for _ in 0..n {
        s.push(T::lit(uniform(&mut rng, ranges.rossler_xy)));
        s.push(T::lit(uniform(&mut rng, ranges.rossler_xy)));
        s.push(T::lit(uniform(&mut rng, ranges.rossler_z)));
    }
    let a = uniform(&mut rng, ranges.rossler_ab);
    let b = uniform(&mut rng, ranges.rossler_ab);
    let c = uniform(&mut rng, ranges.rossler_c);
    let k: Vec<T> = (0..g.num_edges())
        .map(|_| T::lit(uniform(&mut rng, ranges.rossler_coupling)))
        .collect();
    let spec = SystemSpec::new(
        SystemKind::Rossler,
        g.clone(),
        DenseMatrix::zeros(n, 0),
        DenseMatrix::column(k),
        vec![T::lit(a), T::lit(b), T::lit(c)],
    )
    .expect("sampled shapes are consistent");
    (spec, StateMatrix::new(n, 3, s).expect("3 values per node"))
}

/// Uniform phases on `(-pi, pi]`, Gaussian natural frequencies and sub-critical coupling.
/// The returned rule keeps every pair; callers lower `theta_th` as needed.
pub fn sample_kuramoto_instance<T: Scalar>(
    n: usize,
    seed: u64,
    ranges: &InstanceRanges,
) -> (KuramotoInteractionRule<T>, StateMatrix<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: Vec<T> = (0..n)
        .map(|_| {
            // (-pi, pi]: reflect the half-open [-pi, pi) draw.
            let x: f64 = rng.random_range(-PI..PI);
            T::lit(-x)
        })
        .collect();
    let normal = Normal::new(0.0, ranges.kuramoto_omega_std).expect("positive std");
    let omegas: Vec<T> = (0..n).map(|_| T::lit(normal.sample(&mut rng))).collect();
    let k = uniform(&mut rng, ranges.kuramoto_coupling);
    let rule = KuramotoInteractionRule::new(T::lit(std::f64::consts::FRAC_PI_2), T::lit(k), omegas)
        .expect("valid threshold");
    (rule, StateMatrix::column(theta))
}

impl<T: Scalar> SystemSpec<T> {
    /// Kuramoto system over the complete interaction base.
    pub fn kuramoto(rule: &KuramotoInteractionRule<T>) -> Self {
        let n = rule.num_nodes();
        Self {
            kind: SystemKind::Kuramoto,
            graph: Graph::complete(n),
            node_coeffs: DenseMatrix::column(rule.omegas.clone()),
            edge_coeffs: DenseMatrix::zeros(0, 0),
            global_coeffs: vec![rule.coupling],
            theta_th: Some(rule.theta_th),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_er;

    #[test]
    fn heat_ranges_and_hot_fraction() {
        let g = generate_er(40, 80, 1).unwrap();
        let r = InstanceRanges::default();
        let mut frac_sum = 0.0;
        for seed in 0..1000 {
            let (spec, s0) = sample_heat_instance::<f64>(&g, seed, &r);
            assert!(spec.edge_coeffs.data().iter().all(|&d| (0.1..=1.0).contains(&d)));
            assert!(s0.data().iter().all(|&t| t == 0.0 || t == 1.0));
            frac_sum += s0.data().iter().sum::<f64>() / 40.0;
        }
        let mean = frac_sum / 1000.0;
        assert!((mean - 0.5).abs() < 0.02, "mean hot fraction {mean}");
    }

    #[test]
    fn heat_sampling_is_reproducible() {
        let g = generate_er(20, 30, 2).unwrap();
        let a = sample_heat_instance::<f64>(&g, 5, &Default::default());
        let b = sample_heat_instance::<f64>(&g, 5, &Default::default());
        assert_eq!(serde_json::to_vec(&a.0).unwrap(), serde_json::to_vec(&b.0).unwrap());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn rossler_ranges() {
        let g = Graph::path(3);
        let r = InstanceRanges::default();
        let mut c_sum = 0.0;
        for seed in 0..10_000u64 {
            let (spec, s0) = sample_rossler_instance::<f64>(&g, seed, &r);
            let (a, b, c) = (spec.global_coeffs[0], spec.global_coeffs[1], spec.global_coeffs[2]);
            c_sum += c;
            if seed < 1000 {
                assert!((0.1..=0.3).contains(&a) && (0.1..=0.3).contains(&b));
                assert!((5.0..=7.0).contains(&c));
                assert!(spec.edge_coeffs.data().iter().all(|k| (0.01..=0.05).contains(k)));
                for i in 0..3 {
                    assert!((-4.0..=4.0).contains(&s0.get(i, 0)) && (-4.0..=4.0).contains(&s0.get(i, 1)));
                    assert!((0.0..=6.0).contains(&s0.get(i, 2)));
                }
            }
        }
        assert!((c_sum / 1e4 - 6.0).abs() < 0.05);
        let a = sample_rossler_instance::<f64>(&g, 3, &r);
        assert_eq!(a, sample_rossler_instance::<f64>(&g, 3, &r));
    }

    #[test]
    fn kuramoto_statistics() {
        let r = InstanceRanges::default();
        let (rule, th) = sample_kuramoto_instance::<f64>(100_000, 7, &r);
        let n = rule.omegas.len() as f64;
        let mean = rule.omegas.iter().sum::<f64>() / n;
        let std = (rule.omegas.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std - 1.0).abs() < 0.01, "omega std {std}");
        assert!(th.data().iter().all(|&x| x > -PI && x <= PI));
        let k_c = (8.0 / PI).sqrt();
        for seed in 0..200 {
            let (rule, _) = sample_kuramoto_instance::<f64>(3, seed, &r);
            assert!((0.1..=0.9).contains(&rule.coupling) && rule.coupling < k_c);
        }
        assert_eq!(
            sample_kuramoto_instance::<f64>(10, 4, &r),
            sample_kuramoto_instance::<f64>(10, 4, &r)
        );
    }
}
