use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use ngs_core::dataset::*;
use ngs_core::dynsys::{InstanceRanges, StateMatrix, SystemKind, SystemSpec};
use ngs_core::evalbench::*;
use ngs_core::graph::Graph;
use ngs_core::neural::DenseMatrix;
use ngs_core::ngs::{NgsConfig, NgsModel};
use ngs_core::odesolve::SolverConfig;
use ngs_core::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn tiny_domains() -> DomainConfig {
    let mut d = DomainConfig {
        g_int_nodes: (8, 12),
        g_int_edges: (8, 16),
        g_ext_nodes: (14, 18),
        g_ext_edges: (14, 24),
        ..DomainConfig::default()
    };
    d.heat.t_int = 0.3;
    d.heat.t_ext = 0.6;
    d
}

fn identity_model(kind: SystemKind) -> NgsModel<f64> {
    let mut m = NgsModel::new(NgsConfig::for_system(kind, 8, 8, 2), 4).unwrap();
    m.decoder.scale_output(0.0);
    m
}

#[test]
fn ci_matches_tabulated_t_value() {
    let v = [1.0, 2.0, 3.0, 4.0, 5.0];
    let ci = mean_ci95(&v).unwrap();
    // t_{0.975, 4} from tables.
    let t = 2.776_445_105_197_799;
    let s = 2.5f64.sqrt();
    assert!((ci.mean - 3.0).abs() < 1e-15);
    assert!((ci.half_width - t * s / 5f64.sqrt()).abs() < 1e-9);
    assert!((ci.low - (3.0 - ci.half_width)).abs() < 1e-15);
    assert_eq!(ci.n, 5);

    let one = mean_ci95(&[0.7]).unwrap();
    assert_eq!(one.mean, 0.7);
    assert!(one.half_width.is_nan());
    assert!(mean_ci95(&[]).is_err());
}

#[test]
fn exponent_of_pure_exponentials() {
    let times: Vec<f64> = (0..=200).map(|k| k as f64 * 0.05).collect();
    for lam in [-1.0, 0.5] {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let d: Vec<f64> = times.iter().map(|t| 1e-6 * (lam * t).exp() * (1.0 + noise.sample(&mut rng))).collect();
        let est = fit_exponent(&times, &d, (1.0, 6.0), 0.5).unwrap();
        assert!((est - lam).abs() < 0.05 * lam.abs(), "{est} vs {lam}");
    }
}

#[test]
fn zero_discrepancy_and_bad_windows_fail() {
    let times: Vec<f64> = (0..=10).map(|k| k as f64).collect();
    let zeros = vec![0.0; 11];
    assert!(matches!(fit_exponent(&times, &zeros, (1.0, 6.0), 0.5), Err(Error::FitWindow(_))));
    let ones = vec![1.0; 11];
    assert!(matches!(fit_exponent(&times, &ones, (6.0, 6.5), 0.5), Err(Error::FitWindow(_))));
    let cfg = LyapunovConfig { fit_window: Some((5.0, 1.0)), ..LyapunovConfig::default() };
    assert!(matches!(cfg.validate(), Err(Error::FitWindow(_))));
}

#[test]
fn early_saturation_is_reported() {
    let times: Vec<f64> = (0..=100).map(|k| k as f64).collect();
    let d: Vec<f64> = times.iter().map(|t| (1e-8 * (t * 2.0f64).exp()).min(1.0)).collect();
    assert!(matches!(fit_exponent(&times, &d, (10.0, 60.0), 0.5), Err(Error::FitWindow(_))));
}

#[test]
fn discrepancy_is_mean_row_distance() {
    let a = DenseMatrix::new(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
    let b = DenseMatrix::new(2, 2, vec![3.0, 4.0, 1.0, 1.0]).unwrap();
    assert!((discrepancy(&a, &b).unwrap() - 2.5).abs() < 1e-15);
}

#[test]
fn heat_pair_lyapunov_follows_closed_form() {
    // Two nodes, one edge: the difference mode decays at rate 2D, the mean is conserved.
    let dcoef = 0.5;
    let g = Graph::new(2, vec![(0, 1)], false).unwrap();
    let spec = SystemSpec::new(SystemKind::Heat, g, DenseMatrix::zeros(2, 0), DenseMatrix::column(vec![dcoef]), vec![]).unwrap();
    let s0: StateMatrix<f64> = DenseMatrix::column(vec![0.2, 0.9]);
    let cfg = LyapunovConfig { stds: vec![1e-6], replicates: 3, horizon: 10.0, dt: 0.5, seed: 5, ..LyapunovConfig::default() };
    let sim = Simulator::<f64>::Solver(SolverConfig::default().with_tol(1e-13));
    let rows = lyapunov(&spec, &s0, &sim, &cfg).unwrap();
    assert_eq!(rows.len(), 1);
    let mut grid = vec![0.0];
    grid.extend((1..=20).map(|k| k as f64 * 0.5));
    for (r, &lam) in rows[0].lambdas.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(5, 0, r as u64));
        let n = Normal::new(0.0, 1e-6).unwrap();
        let (a, b) = (n.sample(&mut rng), n.sample(&mut rng));
        let (m, d) = ((a + b) / 2.0, (a - b) / 2.0);
        let deltas: Vec<f64> = grid
            .iter()
            .map(|t| {
                let dd = d * (-2.0 * dcoef * t).exp();
                0.5 * ((m - dd).abs() + (m + dd).abs())
            })
            .collect();
        let expect = fit_exponent(&grid, &deltas, cfg.window(), 0.5).unwrap();
        assert!((lam - expect).abs() < 1e-4, "{lam} vs {expect}");
    }
    assert_eq!(rows[0].replicates, 3);
    assert!(rows[0].lambda_min <= rows[0].lambda_mean && rows[0].lambda_mean <= rows[0].lambda_max);
}

#[test]
fn evaluate_identity_model_against_hand_mae() {
    for tdom in [TimeDomain::Int, TimeDomain::Ext] {
        let task = EvalTask { count: 4, seed: 2, domains: tiny_domains(), ..EvalTask::new(SystemKind::Heat, GraphDomain::Int, tdom) };
        let summary = evaluate_task(&identity_model(SystemKind::Heat), &task).unwrap();
        let dcfg = DatasetConfig {
            domains: tiny_domains(),
            ..DatasetConfig::new(SystemKind::Heat, GraphDomain::Int, tdom, 4, 2)
        };
        let t_from = if tdom == TimeDomain::Ext { 0.3 } else { 0.0 };
        let mut maes = Vec::new();
        for k in 0..4 {
            let s = generate_sample(&dcfg, k).unwrap();
            let s0 = &s.clean.states[0];
            let mut sum = 0.0;
            let mut count = 0usize;
            for (t, st) in s.clean.times.iter().zip(&s.clean.states).skip(1) {
                if *t > t_from + 1e-12 {
                    for i in 0..st.rows() {
                        sum += (st.get(i, 0) - s0.get(i, 0)).abs();
                        count += 1;
                    }
                }
            }
            maes.push(sum / count as f64);
        }
        let mean = maes.iter().sum::<f64>() / 4.0;
        assert!((summary.mae.mean - mean).abs() < 1e-12);
        for (e, m) in summary.samples.iter().zip(&maes) {
            assert!((e.mae.unwrap() - m).abs() < 1e-12);
        }
        assert_eq!(summary.diverged, 0);
        assert_eq!(summary.task, format!("heat_g_int_{}", tdom.tag()));
    }
}

#[test]
fn task_strings_parse() {
    let t: EvalTask = "thermal:g_ext:t_int".parse().unwrap();
    assert_eq!(t.system, SystemKind::Heat);
    assert_eq!(t.graph_domain, GraphDomain::Ext);
    assert_eq!(t.time_domain, TimeDomain::Int);
    assert!("heat:g_int".parse::<EvalTask>().is_err());
    assert!("heat:g_mid:t_int".parse::<EvalTask>().is_err());
}

#[test]
fn bench_counts_rollout_steps_and_solver_calls() {
    let cfg = BenchConfig {
        sizes: vec![(10, 15), (20, 30)],
        repeats: 1,
        tol: 1e-8,
        domains: tiny_domains(),
        ..BenchConfig::default()
    };
    let res = bench::<f64>(SystemKind::Heat, None, &cfg).unwrap();
    assert_eq!(res.rows.len(), 4);
    assert_eq!(res.timings.len(), 4);
    for pair in res.rows.chunks(2) {
        assert_eq!(pair[0].simulator, "rk8");
        assert_eq!(pair[1].simulator, "ngs");
        assert_eq!(pair[1].nfev, pair[1].steps as u64);
        assert!(pair[0].nfev > pair[1].nfev);
        assert!(!pair[0].timed_out);
    }
    assert_eq!(res.nfev_ratios().len(), 2);
    // Counts do not depend on timing.
    let again = bench::<f64>(SystemKind::Heat, None, &cfg).unwrap();
    assert_eq!(res.rows, again.rows);
}

#[test]
fn kuramoto_bench_uses_stiff_solver_per_threshold() {
    let cfg = BenchConfig {
        sizes: vec![(12, 0)],
        theta_ths: vec![FRAC_PI_2, FRAC_PI_4],
        repeats: 1,
        tol: 1e-8,
        ..BenchConfig::default()
    };
    let res = bench::<f64>(SystemKind::Kuramoto, None, &cfg).unwrap();
    assert_eq!(res.rows.len(), 4);
    assert_eq!(res.rows[0].simulator, "stiff_switching");
    assert_eq!(res.rows[0].theta_th, Some(FRAC_PI_2));
    assert_eq!(res.rows[2].theta_th, Some(FRAC_PI_4));
    assert_eq!(res.rows[0].edges, 12 * 11 / 2);
}

#[test]
fn threshold_sweep_reference_threshold_is_exact() {
    let rows = threshold_sweep(8, &[FRAC_PI_2, FRAC_PI_4], 2, 2.0, &SolverConfig::default().with_tol(1e-9), 1, &InstanceRanges::default()).unwrap();
    assert_eq!(rows[0].mae, 0.0);
    assert!(rows[1].mae > 0.0);
    assert!(rows[1].nfev_mean > 0.0);
}

#[test]
fn csv_rows_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rows.csv");
    let rows = vec![ThresholdRow { theta_th: 0.5, mae: 1e-3, nfev_mean: 10.0 }];
    write_csv(&path, &rows).unwrap();
    let mut r = csv::Reader::from_path(&path).unwrap();
    let back: Vec<ThresholdRow> = r.deserialize().collect::<Result<_, _>>().unwrap();
    assert_eq!(back, rows);
}

proptest! {
    #[test]
    fn ci_contains_mean_and_widens_with_spread(v in prop::collection::vec(-10.0f64..10.0, 2..30), k in 1.5f64..4.0) {
        let a = mean_ci95(&v).unwrap();
        prop_assert!(a.low <= a.mean && a.mean <= a.high);
        let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
        let b = mean_ci95(&scaled).unwrap();
        prop_assert!(b.half_width >= a.half_width * (1.0 - 1e-12));
    }

    #[test]
    fn exponent_is_recovered_from_any_exponential(lam in -2.0f64..2.0, c in 1e-9f64..1e-3) {
        let times: Vec<f64> = (0..=50).map(|k| k as f64 * 0.1).collect();
        let d: Vec<f64> = times.iter().map(|t| c * (lam * t).exp()).collect();
        let est = fit_exponent(&times, &d, (0.5, 3.0), 0.5).unwrap();
        prop_assert!((est - lam).abs() < 1e-9);
    }
}
