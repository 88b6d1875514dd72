use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn agecast(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agecast"))
        .args(args)
        .current_dir(dir)
        .env_remove("AGECAST_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) {
    std::fs::write(dir.join(name), body).unwrap();
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn strip_runtime(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.remove("runtime_seconds");
            m.values_mut().for_each(strip_runtime);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_runtime),
        _ => {}
    }
}

fn synth(dir: &Path, name: &str, seed: u64) {
    let cfg = format!(r#"{{"alpha": 0.01, "beta": 0.02, "duration": 79, "noise_sigma": 0.001, "seed": {seed}}}"#);
    write(dir, &format!("{name}.json"), &cfg);
    let o = agecast(dir, &["synth", "--config", &format!("{name}.json"), "--out", &format!("{name}.csv")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn synth_preprocess_and_forecast() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "s.json", r#"{"alpha": 0.01, "beta": 0.05, "duration": 20}"#);
    let o = agecast(d, &["synth", "--config", "s.json", "--out", "raw.csv", "--raw"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = agecast(d, &["preprocess", "--input", "raw.csv", "--out", "trace.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(d.join("trace.csv")).unwrap().lines().count() > 10);

    let o = agecast(
        d,
        &["forecast", "--model", "holt", "--trace", "trace.csv", "--train-frac", "0.5", "--steps", "5", "--out-dir", "out"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let f = json(&d.join("out/forecast.json"));
    assert_eq!(f["model"], "HOLT");
    assert_eq!(f["forecast"]["point"].as_array().unwrap().len(), 5);
    assert!(f["rul"]["threshold"].as_f64().unwrap() > 0.0);
}

#[test]
fn benchmark_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        d,
        "bench.json",
        r#"{
            "traces": [{"synth": {"alpha": 0.01, "beta": 0.02, "duration": 39, "noise_sigma": 0.001, "seed": 1}},
                       {"synth": {"alpha": 0.012, "beta": 0.02, "duration": 39, "noise_sigma": 0.001, "seed": 2}}],
            "models": ["ORACLE", "UKF", "E-ELM"],
            "horizons": [1, 2],
            "train_fractions": [0.5],
            "seeds": [0, 1]
        }"#,
    );
    let o = agecast(d, &["benchmark", "--config", "bench.json", "--out-dir", "a"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = agecast(d, &["benchmark", "--config", "bench.json", "--out-dir", "b"]);
    assert_eq!(code(&o), 0);

    let (mut a, mut b) = (json(&d.join("a/report.json")), json(&d.join("b/report.json")));
    let rows = a["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2 * 3 * 2 * 2);
    for r in rows.iter().filter(|r| r["model"] == "ORACLE") {
        assert_eq!(r["mape"].as_f64(), Some(0.0));
    }
    strip_runtime(&mut a);
    strip_runtime(&mut b);
    assert_eq!(a, b);
    assert!(d.join("a/report.csv").exists());

    let o = agecast(d, &["report", "--input", "a/report.json", "--out-dir", "plots"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["mape_bars.csv", "forecasts.csv", "attention.csv"] {
        assert!(d.join("plots").join(f).exists(), "{f}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "bad.json", r#"{"traces": [], "models": ["HOLT"], "horizons": []}"#);
    assert_eq!(code(&agecast(d, &["benchmark", "--config", "bad.json"])), 2);
    assert_eq!(code(&agecast(d, &["benchmark", "--config", "missing.json"])), 2);
    write(d, "unknown.json", r#"{"traces": [], "models": ["LSTM"]}"#);
    assert_eq!(code(&agecast(d, &["benchmark", "--config", "unknown.json"])), 2);

    // TFT-wCov on a single trace has no references: the cell fails, the run completes.
    write(
        d,
        "lone.json",
        r#"{"traces": [{"synth": {"alpha": 0.01, "beta": 0.02, "duration": 29}}],
            "models": ["TFT-wCov", "ORACLE"], "horizons": [1], "train_fractions": [0.5]}"#,
    );
    let o = agecast(d, &["benchmark", "--config", "lone.json", "--out-dir", "lone"]);
    assert_eq!(code(&o), 1);
    let report = json(&d.join("lone/report.json"));
    assert!(report["rows"][1]["error"].is_string() || report["rows"][0]["error"].is_string());
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "t", 3);
    let o = Command::new(env!("CARGO_BIN_EXE_agecast"))
        .args(["forecast", "--model", "EKF", "--trace", "t.csv", "--train-frac", "0.5", "--steps", "3"])
        .current_dir(d)
        .env("AGECAST_OUT_DIR", "env-out")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("env-out/forecast.json").exists());
}

#[test]
fn tft_checkpoint_and_attention() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "t", 4);
    synth(d, "r", 5);
    write(d, "settings.json", r#"{"tft": {"max_epochs": 5}}"#);
    let o = agecast(
        d,
        &[
            "forecast", "--model", "TFT-wCov", "--trace", "t.csv", "--references", "r.csv", "--train-frac", "0.5",
            "--steps", "6", "--settings", "settings.json", "--checkpoint", "ck.json", "--out", "f.json",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&d.join("f.json"))["forecast"]["quantiles"].as_array().unwrap().len(), 3);

    let run = |out: &str| agecast(d, &["attention", "--model-checkpoint", "ck.json", "--trace", "t.csv", "--origin", "40", "--out", out]);
    assert_eq!(code(&run("a1.json")), 0);
    assert_eq!(code(&run("a2.json")), 0);
    let a = std::fs::read(d.join("a1.json")).unwrap();
    assert_eq!(a, std::fs::read(d.join("a2.json")).unwrap());
    let report = json(&d.join("a1.json"));
    for step in report["steps"].as_array().unwrap() {
        let sum: f64 = step["weights"].as_array().unwrap().iter().map(|w| w.as_f64().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }
    assert_eq!(code(&agecast(d, &["attention", "--model-checkpoint", "ck.json", "--trace", "t.csv", "--origin", "0"])), 2);
}

#[test]
fn loo_over_a_family() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (k, name) in ["a", "b", "c"].iter().enumerate() {
        synth(d, name, 10 + k as u64);
    }
    let o = agecast(
        d,
        &["loo", "--family", "a.csv", "b.csv", "c.csv", "--model", "E-ELM", "--train-frac", "0.3", "--out-dir", "loo"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&d.join("loo/loo.json"));
    assert_eq!(report["rows"].as_array().unwrap().len(), 3);
    assert!(d.join("loo/loo_forecasts.csv").exists());

    let o = agecast(d, &["loo", "--family", "a.csv", "b.csv", "--model", "HOLT", "--train-frac", "0.3"]);
    assert_eq!(code(&o), 2);
}
