use ngs_core::neural::DenseMatrix;
use ngs_core::ngs::NgsModel;
use ngs_core::traffic::*;
use ngs_core::Error;
use proptest::prelude::*;

fn entry(from: &str, to: &str, d: f64) -> DistanceEntry {
    DistanceEntry { from: from.into(), to: to.into(), distance: d }
}

fn ids(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn three_sensor_kernel_by_hand() {
    // distances 0, 1, 2, 3: mean 1.5, population variance 1.25
    let d = vec![entry("a", "a", 0.0), entry("a", "b", 1.0), entry("b", "a", 2.0), entry("b", "c", 3.0)];
    let road = build_road_graph(&ids(&["a", "b", "c"]), &d, 2.5).unwrap();
    assert!((road.sigma - 1.25f64.sqrt()).abs() < 1e-15);
    let w_ab = (-0.8f64).exp();
    let w_ba = (-3.2f64).exp();
    assert_eq!(road.weights.len(), 3);
    assert_eq!((road.weights[0].0, road.weights[0].1), (0, 0));
    assert!((road.weights[0].2 - 1.0).abs() < 1e-12);
    assert!((road.weights[1].2 - w_ab).abs() < 1e-12);
    assert!((road.weights[2].2 - w_ba).abs() < 1e-12);
    assert!(road.graph.is_directed());
    assert_eq!(road.graph.num_edges(), 2);
    let k_ab = road.graph.edge_index(0, 1).unwrap();
    let k_ba = road.graph.edge_index(1, 0).unwrap();
    assert!((road.edge_coeffs.get(k_ab, 0) - (1.0 - w_ab)).abs() < 1e-12);
    assert!((road.edge_coeffs.get(k_ba, 0) - (1.0 - w_ba)).abs() < 1e-12);
    assert!(road.graph.edge_index(1, 2).is_none());
}

#[test]
fn kernel_rejects_bad_inputs() {
    assert!(matches!(build_road_graph(&ids(&["a"]), &[], 1.0), Err(Error::Ingestion(_))));
    let dup = vec![entry("a", "b", 1.0), entry("a", "b", 2.0), entry("b", "a", 3.0)];
    assert!(matches!(build_road_graph(&ids(&["a", "b"]), &dup, 10.0), Err(Error::Ingestion(_))));
    let flat = vec![entry("a", "b", 1.0), entry("b", "a", 1.0)];
    assert!(matches!(build_road_graph(&ids(&["a", "b"]), &flat, 10.0), Err(Error::Ingestion(_))));
}

#[test]
fn single_prediction_metrics() {
    let p = DenseMatrix::new(1, 1, vec![55.0]).unwrap();
    let t = DenseMatrix::new(1, 1, vec![50.0]).unwrap();
    let m = traffic_metrics(&[p], &[t], &[1], DEFAULT_MAPE_FLOOR).unwrap();
    assert!((m[0].mae - 5.0).abs() < 1e-12);
    assert!((m[0].rmse - 5.0).abs() < 1e-12);
    assert!((m[0].mape - 10.0).abs() < 1e-12);
}

#[test]
fn mape_floor_skips_near_zero_truth() {
    let p = DenseMatrix::new(2, 1, vec![3.0, 44.0]).unwrap();
    let t = DenseMatrix::new(2, 1, vec![0.5, 40.0]).unwrap();
    let m = traffic_metrics(&[p.clone()], &[t], &[1], 1.0).unwrap();
    assert!((m[0].mape - 10.0).abs() < 1e-12);
    let zero = DenseMatrix::new(2, 1, vec![0.0, 0.0]).unwrap();
    assert!(matches!(traffic_metrics(&[p], &[zero], &[1], 1.0), Err(Error::DegenerateInput(_))));
}

#[test]
fn split_of_one_hundred_steps() {
    assert_eq!(split_sizes(100), (70, 10, 20));
    let (series, _) = synthetic_traffic(3, 100, 48.0, 0);
    let w = make_windows(&series, 1).unwrap();
    assert_eq!(w.split_steps, (70, 10, 20));
    assert_eq!(w.train.len(), 70 - 24 + 1);
    assert!(w.val.is_empty());
    assert!(w.test.is_empty());
    assert!(w.train.iter().all(|x| x.start + 24 <= 70));
}

#[test]
fn scaler_ignores_future_values() {
    let (series, _) = synthetic_traffic(4, 200, 48.0, 1);
    let a = make_windows(&series, 2).unwrap();
    let mut altered = series.clone();
    let (n_train, _, _) = split_sizes(200);
    for t in n_train..200 {
        for i in 0..4 {
            altered.speeds.set(t, i, 1000.0);
        }
    }
    let b = make_windows(&altered, 2).unwrap();
    assert_eq!(a.scaler, b.scaler);
    assert_eq!(a.train, b.train);
    assert_ne!(a.test, b.test);
    let train_vals: Vec<f64> = series.speeds.data()[..n_train * 4].to_vec();
    let mean = train_vals.iter().sum::<f64>() / train_vals.len() as f64;
    assert!((a.scaler.mean - mean).abs() < 1e-12);
}

#[test]
fn windows_hold_normalized_blocks() {
    let (series, _) = synthetic_traffic(3, 100, 48.0, 2);
    let w = make_windows(&series, 5).unwrap();
    let x = &w.train[2];
    assert_eq!(x.start, 10);
    for i in 0..3 {
        for j in 0..12 {
            assert!((w.scaler.inverse(x.history.get(i, j)) - series.speeds.get(10 + j, i)).abs() < 1e-9);
            assert!((w.scaler.inverse(x.target.get(i, j)) - series.speeds.get(22 + j, i)).abs() < 1e-9);
        }
    }
    assert_eq!(x.step_features[0], time_features(series.timestamps[21]));
}

#[test]
fn zero_decoder_forecast_is_persistence() {
    let (series, dist) = synthetic_traffic(5, 120, 48.0, 3);
    let road = build_road_graph(&series.sensor_ids, &dist, f64::INFINITY).unwrap();
    let w = make_windows(&series, 4).unwrap();
    let mut model = NgsModel::<f64>::new(traffic_config(8, 8, 2), 0).unwrap();
    model.decoder.scale_output(0.0);
    for win in &w.train {
        let f = forecast(&model, &road, &w.scaler, win).unwrap();
        let p = persistence(&w.scaler, win);
        for (a, b) in f.data().iter().zip(p.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn training_on_periodic_speeds_beats_persistence() {
    let (series, dist) = synthetic_traffic(6, 1200, 48.0, 4);
    let road = build_road_graph(&series.sensor_ids, &dist, f64::INFINITY).unwrap();
    let splits = make_windows(&series, 2).unwrap();
    let cfg = TrafficTrainConfig { epochs: 6, batch_size: 8, lr0: 3e-3, lr_min: 1e-4, seed: 1, ..TrafficTrainConfig::default() };
    let model = NgsModel::<f64>::new(traffic_config(16, 16, 2), 0).unwrap();
    let (model, hist) = train_traffic(model, &road, &splits, &cfg).unwrap();
    assert_eq!(hist.len(), 6);
    let truth: Vec<_> = splits.test.iter().map(|w| denormalized_target(&splits.scaler, w)).collect();
    let ngs: Vec<_> = splits.test.iter().map(|w| forecast(&model, &road, &splits.scaler, w).unwrap()).collect();
    let base: Vec<_> = splits.test.iter().map(|w| persistence(&splits.scaler, w)).collect();
    let m_ngs = traffic_metrics(&ngs, &truth, &HORIZONS, DEFAULT_MAPE_FLOOR).unwrap();
    let m_base = traffic_metrics(&base, &truth, &HORIZONS, DEFAULT_MAPE_FLOOR).unwrap();
    for (a, b) in m_ngs.iter().zip(&m_base) {
        assert!(a.mae < b.mae, "horizon {}: {} vs persistence {}", a.horizon, a.mae, b.mae);
    }
}

fn loop_metrics(pred: &[DenseMatrix<f64>], truth: &[DenseMatrix<f64>], h: usize) -> (f64, f64, f64) {
    let mut maes = Vec::new();
    let mut rmses = Vec::new();
    let mut mapes = Vec::new();
    for (p, t) in pred.iter().zip(truth) {
        let errs: Vec<f64> = (0..p.rows()).map(|i| p.get(i, h - 1) - t.get(i, h - 1)).collect();
        maes.push(errs.iter().map(|e| e.abs()).sum::<f64>() / errs.len() as f64);
        rmses.push((errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt());
        let rel: Vec<f64> = (0..p.rows())
            .filter(|&i| t.get(i, h - 1).abs() >= 1.0)
            .map(|i| (errs[i] / t.get(i, h - 1)).abs())
            .collect();
        mapes.push(rel.iter().sum::<f64>() / rel.len() as f64);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (mean(&maes), mean(&rmses), 100.0 * mean(&mapes))
}

proptest! {
    #[test]
    fn metrics_match_loop_oracle(
        vals in prop::collection::vec((10.0f64..80.0, -5.0f64..5.0), 4 * 12 * 3),
    ) {
        let mk = |f: &dyn Fn(&(f64, f64)) -> f64, w: usize| {
            DenseMatrix::from_fn(4, 12, |i, j| f(&vals[w * 48 + i * 12 + j]))
        };
        let truth: Vec<_> = (0..3).map(|w| mk(&|v| v.0, w)).collect();
        let pred: Vec<_> = (0..3).map(|w| mk(&|v| v.0 + v.1, w)).collect();
        let m = traffic_metrics(&pred, &truth, &HORIZONS, 1.0).unwrap();
        for r in &m {
            let (mae, rmse, mape) = loop_metrics(&pred, &truth, r.horizon);
            prop_assert!((r.mae - mae).abs() < 1e-12);
            prop_assert!((r.rmse - rmse).abs() < 1e-12);
            prop_assert!((r.mape - mape).abs() < 1e-10);
            prop_assert!(r.rmse >= r.mae - 1e-12);
        }
    }

    #[test]
    fn weights_shrink_with_distance(d1 in 0.0f64..10.0, gap in 0.0f64..10.0, sigma in 0.1f64..5.0) {
        let a = road_weight(d1, sigma, f64::INFINITY);
        let b = road_weight(d1 + gap, sigma, f64::INFINITY);
        prop_assert!(b <= a && a <= 1.0 && b >= 0.0);
        prop_assert_eq!(road_weight(d1 + 1e-9, sigma, d1), 0.0);
    }

    #[test]
    fn scaler_round_trips(vals in prop::collection::vec(0.0f64..100.0, 2..50), x in -50.0f64..150.0) {
        prop_assume!(vals.iter().any(|v| (v - vals[0]).abs() > 1e-6));
        let s = Scaler::fit(&vals).unwrap();
        prop_assert!((s.inverse(s.transform(x)) - x).abs() < 1e-9);
    }
}
