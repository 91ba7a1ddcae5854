use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ngs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ngs"))
        .current_dir(dir)
        .args(["--threads", "1", "-q"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

#[test]
fn generate_count_contract_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ngs(tmp.path(), &["-o", "ds", "generate", "--system", "heat", "--domain", "g_int", "--count", "10", "--seed", "1", "--desk"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout_json(&o);
    assert_eq!(s["count"], 10);
    let ds = tmp.path().join("ds");
    let trajs = fs::read_dir(&ds).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "traj")).count();
    assert_eq!(trajs, 10);
    let m = json(ds.join("manifest.json"));
    assert_eq!(m["files"].as_array().unwrap().len(), 10);
    let cfg = json(ds.join("config.json"));
    assert_eq!(cfg["seed"], 1);
    assert_eq!(cfg["count"], 10);
}

#[test]
fn kuramoto_threshold_is_recorded_in_specs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ngs(tmp.path(), &["-o", "k", "generate", "--system", "kuramoto", "--theta-th", "0.5236", "--count", "2", "--desk", "--tol", "1e-8"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for k in 0..2 {
        let spec = json(tmp.path().join(format!("k/sample_{k}.spec.json")));
        assert_eq!(spec["theta_th"], 0.5236);
    }
}

#[test]
fn config_file_then_overrides_then_flags() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.json"), r#"{"system": "heat", "count": 5, "seed": 3, "solver": {"abs_tol": 1e-9}}"#).unwrap();
    let o = ngs(
        tmp.path(),
        &["-c", "c.json", "--set", "count=4", "--set", "solver.rel_tol=1e-9", "-o", "r", "generate", "--count", "2", "--desk"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = json(tmp.path().join("r/config.json"));
    assert_eq!(cfg["count"], 2);
    assert_eq!(cfg["seed"], 3);
    assert_eq!(cfg["solver"]["abs_tol"], 1e-9);
    assert_eq!(cfg["solver"]["rel_tol"], 1e-9);

    // The resolved config reproduces the run on its own.
    let again = ngs(tmp.path(), &["-c", "r/config.json", "-o", "r2", "generate"]);
    assert!(again.status.success());
    assert_eq!(fs::read(tmp.path().join("r/manifest.json")).unwrap(), fs::read(tmp.path().join("r2/manifest.json")).unwrap());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| ngs(tmp.path(), args).status.code().unwrap();
    assert_eq!(code(&["-o", "x", "generate", "--system", "heat", "--count", "0"]), 2);
    assert_eq!(code(&["-o", "x", "generate", "--system", "heat", "--set", "bogus=1"]), 2);
    assert_eq!(code(&["-o", "x", "generate", "--system", "heat", "--set", "domains.g_int_nodes=[50,20]"]), 2);
    assert_eq!(code(&["-o", "x", "generate", "--system", "nosuch"]), 2);
    assert_eq!(code(&["-o", "x", "-c", "missing.json", "generate"]), 3);
    assert_eq!(code(&["-o", "x", "train", "--dataset", "nowhere"]), 3);
    assert_eq!(code(&["-o", "x", "evaluate", "--model", "nowhere/best", "--task", "heat:g_int:t_int"]), 3);
    assert_eq!(code(&["-o", "x", "evaluate", "--model", "m", "--task", "heat:g_int"]), 2);
    fs::write(tmp.path().join("arr.json"), "[1]").unwrap();
    assert_eq!(code(&["-o", "x", "-c", "arr.json", "generate"]), 2);
}

#[test]
fn divergence_writes_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(ngs(tmp.path(), &["-o", "ds", "generate", "--system", "heat", "--count", "4", "--desk"]).status.success());
    let o = ngs(
        tmp.path(),
        &["-o", "tr", "train", "--dataset", "ds", "--epochs", "2", "--latent-dim", "4", "--hidden-dim", "4", "--lr", "1e300", "--lr-min", "1e299", "--p", "0"],
    );
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let d = json(tmp.path().join("tr/diagnostics.json"));
    assert_eq!(d["subcommand"], "train");
    assert_eq!(d["exit_code"], 4);
    assert!(d["error"].as_str().unwrap().len() > 3);
}

#[test]
fn train_evaluate_simulate_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| {
        let o = ngs(tmp.path(), args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        o
    };
    run(&["-o", "ds", "generate", "--system", "heat", "--count", "6", "--desk", "--seed", "2"]);
    let o = run(&["-o", "tr", "train", "--dataset", "ds", "--epochs", "2", "--latent-dim", "8", "--hidden-dim", "8", "--p", "0", "--sigma", "0.001"]);
    let rep = stdout_json(&o);
    let noise = 0.001 * (2.0 / std::f64::consts::PI).sqrt();
    assert!((rep["noise_mae"].as_f64().unwrap() - noise).abs() < 1e-15);
    let ratio = rep["final_val_mae"].as_f64().unwrap() / noise;
    assert!((rep["val_mae_over_noise"].as_f64().unwrap() - ratio).abs() < 1e-9 * ratio);
    for f in ["best.ckpt", "best.json", "state.ckpt", "report.json", "history.csv", "config.json"] {
        assert!(tmp.path().join("tr").join(f).is_file(), "{f}");
    }
    let hist = fs::read_to_string(tmp.path().join("tr/history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 3);

    let o = run(&["-o", "ev", "evaluate", "--model", "tr/best", "--task", "thermal:g_ext:t_ext", "--count", "3", "--desk"]);
    let v = stdout_json(&o);
    let mae = &v[0]["mae"];
    assert!(mae["low"].as_f64().unwrap() <= mae["mean"].as_f64().unwrap());
    assert_eq!(mae["n"], 3);
    let rows = fs::read_to_string(tmp.path().join("ev/eval_heat_g_ext_t_ext.csv")).unwrap();
    assert_eq!(rows.lines().count(), 4);

    let o = run(&["-o", "sim", "simulate", "--system", "heat", "--model", "tr/best", "--desk"]);
    let s = stdout_json(&o);
    assert_eq!(s["ngs_nfev"], s["steps"]);
    assert!(tmp.path().join("sim/ngs.traj").is_file() && tmp.path().join("sim/solver.traj").is_file());

    // Resuming a finished run trains nothing further and keeps the history.
    run(&["-o", "tr", "train", "--dataset", "ds", "--epochs", "2", "--latent-dim", "8", "--hidden-dim", "8", "--p", "0", "--sigma", "0.001", "--resume"]);
    assert_eq!(fs::read_to_string(tmp.path().join("tr/history.csv")).unwrap(), hist);
}

#[test]
fn sweep_grid_cardinality() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(ngs(tmp.path(), &["-o", "ds", "generate", "--system", "heat", "--count", "5", "--desk"]).status.success());
    let o = ngs(
        tmp.path(),
        &["-o", "sw", "sweep", "--dataset", "ds", "--sigma", "0,0.001,0.01", "--p", "0,0.1", "--epochs", "1", "--latent-dim", "4", "--hidden-dim", "4"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(tmp.path().join("sw/sweep_mae.csv")).unwrap();
    let cells: Vec<(String, String)> = r.records().map(|x| {
        let x = x.unwrap();
        (x[0].to_string(), x[1].to_string())
    }).collect();
    assert_eq!(cells.len(), 6);
    assert_eq!(cells[5], ("0.01".to_string(), "0.1".to_string()));
}

#[test]
fn bench_ngs_nfev_column_equals_steps() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ngs(tmp.path(), &["-o", "b", "bench", "--system", "rossler", "--sizes", "20x30,30x50", "--repeats", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(tmp.path().join("b/bench_rossler.csv")).unwrap();
    let head = r.headers().unwrap().clone();
    let sim = head.iter().position(|h| h == "simulator").unwrap();
    let steps = head.iter().position(|h| h == "steps").unwrap();
    let nfev = head.iter().position(|h| h == "nfev").unwrap();
    let mut ngs_rows = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        if &rec[sim] == "ngs" {
            ngs_rows += 1;
            assert_eq!(rec[steps], rec[nfev]);
        }
    }
    assert_eq!(ngs_rows, 2);
    let timing = fs::read_to_string(tmp.path().join("b/bench_rossler_timing.csv")).unwrap();
    assert!(timing.starts_with("system,simulator,nodes,theta_th,wall_median_s"));
}

#[test]
fn traffic_from_csv_files() {
    let tmp = tempfile::tempdir().unwrap();
    let mut speeds = String::from("timestamp,s1,s2,s3\n");
    for k in 0..120 {
        let h = k / 12;
        let m = (k % 12) * 5;
        let v = 50.0 + 10.0 * (k as f64 / 10.0).sin();
        let gap = if k == 7 { String::new() } else { format!("{:.2}", v + 1.0) };
        speeds += &format!("2024-01-01 {h:02}:{m:02}:00,{v:.2},{gap},{:.2}\n", v - 2.0);
    }
    fs::write(tmp.path().join("speeds.csv"), speeds).unwrap();
    fs::write(tmp.path().join("distances.csv"), "from,to,distance\ns1,s2,1.0\ns2,s3,2.0\ns3,s1,2.5\n").unwrap();
    let o = ngs(
        tmp.path(),
        &["-o", "t", "traffic", "--speeds", "speeds.csv", "--distances", "distances.csv", "--epochs", "1", "--latent-dim", "4", "--hidden-dim", "4", "--stride", "4"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(tmp.path().join("t/traffic_metrics.json"));
    assert_eq!(m["filled_cells"], 1);
    assert_eq!(m["sensors"], 3);
    let hs: Vec<u64> = m["model"].as_array().unwrap().iter().map(|r| r["horizon"].as_u64().unwrap()).collect();
    assert_eq!(hs, vec![3, 6, 12]);
    for r in m["persistence"].as_array().unwrap() {
        assert!(r["rmse"].as_f64().unwrap() >= r["mae"].as_f64().unwrap());
    }
    let bad = ngs(tmp.path(), &["-o", "t2", "traffic", "--speeds", "speeds.csv"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn schema_file_covers_every_subcommand() {
    let schema = json(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schema/config.schema.json"));
    for cmd in ["generate", "simulate", "train", "evaluate", "bench", "lyapunov", "sweep", "threshold", "traffic"] {
        let d = &schema["$defs"][format!("cmd_{cmd}")];
        assert_eq!(d["additionalProperties"], false, "{cmd}");
    }
}

#[test]
fn help_lists_subcommands_and_exit_codes() {
    let o = Command::new(env!("CARGO_BIN_EXE_ngs")).arg("--help").output().unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    for cmd in ["generate", "simulate", "train", "evaluate", "bench", "lyapunov", "sweep", "threshold", "traffic"] {
        assert!(text.contains(cmd), "{cmd}");
    }
    assert!(text.contains("Exit codes"));
}
