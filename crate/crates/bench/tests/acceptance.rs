//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails. Criterion 12 needs converted NASA traces
//! in `AGECAST_NASA_DIR` and is skipped otherwise.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;

use agecast_bench::{
    loo_long_term, run_on_traces, synthetic_family, walk_forward, BenchmarkConfig, BenchmarkReport, Engine, FamilyConfig,
    ModelKind, ModelSettings, RefitMode,
};
use agecast_core::ingest::{preprocess, synthesize_raw, synthesize_trace, DriveConfig, PreprocessConfig, SynthConfig};
use agecast_core::similarity::{frechet_distance_points, select_family};
use agecast_core::stat::arima::{arima_fit, auto_arima};
use agecast_core::stat::holt::holt_fit;
use agecast_core::statespace::{track, FilterConfig, FilterKind, Variant};
use agecast_core::{mape, seeded_rng, DegradationTrace};
use agecast_tft::gradcheck::{check_block, BLOCKS};
use agecast_tft::{quantile_loss, AttentionMask, TftConfig, TftModel};

// Pinned tolerances.
const ROUND_TRIP_FRACTION: f64 = 0.01;
const UKF_ONE_STEP_MAPE: f64 = 1.0;
const FILTER_AGREEMENT: f64 = 1e-6;
const HOLT_SSE: f64 = 1e-10;
const GRAD_REL_ERROR: f64 = 1e-4;
const GRAD_INSTANCES: u64 = 20;
const SIMPLEX: f64 = 1e-6;
const SEEDS: u64 = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit: f64) -> bool {
    elapsed.as_secs_f64() < limit
}

fn normals(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = seeded_rng(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn c1_round_trip() -> Outcome {
    let clock = Instant::now();
    let cfg = SynthConfig::new(0.01, 0.05, 60.0);
    let trace = preprocess(&synthesize_raw(&cfg, &DriveConfig::default()).unwrap(), &PreprocessConfig::default()).unwrap();
    let final_dr = cfg.delta_r(60.0);
    let worst = trace.times().iter().zip(trace.values()).map(|(t, v)| (v - cfg.delta_r(*t)).abs()).fold(0.0, f64::max);
    let elapsed = clock.elapsed();
    outcome(
        worst < ROUND_TRIP_FRACTION * final_dr && within(elapsed, 10.0),
        format!("max error {:.3}% of final ΔR over {} points, {:.2?}", 100.0 * worst / final_dr, trace.len(), elapsed),
    )
}

fn c2_filter_oracle() -> Outcome {
    let clock = Instant::now();
    let trace = synthesize_trace(&SynthConfig::new(0.01, 0.02, 199.0)).unwrap();
    let mut ukf = Engine::prepare(ModelKind::Ukf, &trace, 20, 0, &ModelSettings::default(), &[]).unwrap();
    let w = walk_forward(&mut ukf, &trace, 20, 1, RefitMode::Literal).unwrap();
    let ukf_mape = mape(w.actuals(&trace), &w.predictions).unwrap();

    // β = 0 with no spread: both transitions are linear in the state.
    let z: Vec<f64> = normals(2, 200).iter().map(|e| 0.02 + 0.001 * e).collect();
    let flat = DegradationTrace::from_values("flat", z).unwrap();
    let cfg = FilterConfig {
        process_sigma: 1e-9,
        measurement_sigma: 0.001,
        x0: Some([0.02, 0.01, 0.0]),
        p0: Some(vec![1e-4, 1e-4, 0.0]),
        ..Default::default()
    };
    let mut gap = 0.0f64;
    for variant in [Variant::A, Variant::B] {
        let (e, _) = track(&flat, FilterKind::Ekf, variant, &cfg).unwrap();
        let (u, _) = track(&flat, FilterKind::Ukf, variant, &cfg).unwrap();
        gap = gap.max((e.x - u.x).amax()).max((e.p - u.p).amax());
    }
    let elapsed = clock.elapsed();
    outcome(
        ukf_mape < UKF_ONE_STEP_MAPE && gap < FILTER_AGREEMENT && within(elapsed, 5.0),
        format!("UKF one-step MAPE {ukf_mape:.4}%, EKF/UKF gap {gap:.1e}, {elapsed:.2?}"),
    )
}

fn c3_transition_comparison() -> Outcome {
    let clock = Instant::now();
    let traces: Vec<DegradationTrace> = (0..SEEDS)
        .map(|s| {
            let mut cfg = SynthConfig::new(0.01, 0.02, 99.0);
            cfg.noise_sigma = 0.02 * cfg.delta_r(99.0);
            cfg.seed = s;
            synthesize_trace(&cfg).unwrap()
        })
        .collect();
    let run = |variant: Variant| {
        let mut cfg = BenchmarkConfig::new(vec![ModelKind::Ukf]);
        cfg.train_fractions = vec![0.5];
        cfg.settings.variant = variant;
        run_on_traces(&cfg, &traces).unwrap()
    };
    let (a, b) = (run(Variant::A), run(Variant::B));
    let mut pass = a.failures() == 0 && b.failures() == 0;
    let mut detail = Vec::new();
    for n in [1, 2, 4] {
        let ma = a.mean_mape(|r| r.n == n).unwrap_or(f64::NAN);
        let mb = b.mean_mape(|r| r.n == n).unwrap_or(f64::NAN);
        pass &= ma <= mb;
        detail.push(format!("N={n}: {ma:.2}% vs {mb:.2}%"));
    }
    let elapsed = clock.elapsed();
    outcome(pass && within(elapsed, 60.0), format!("exponential vs pristine {}, {elapsed:.2?}", detail.join(", ")))
}

fn c4_arima() -> Outcome {
    let clock = Instant::now();
    let e = normals(4, 600);
    let mut y = Vec::with_capacity(500);
    let mut x = 0.0;
    for (t, e) in e.into_iter().enumerate() {
        x = 0.7 * x + e;
        if t >= 100 {
            y.push(x);
        }
    }
    let phi = arima_fit(&y, 1, 0, 0, true).unwrap().phi[0];
    let wn = auto_arima(&normals(44, 300)).unwrap();
    let elapsed = clock.elapsed();
    outcome(
        (0.6..=0.8).contains(&phi) && wn.d == 0 && wn.p + wn.q <= 1 && within(elapsed, 30.0),
        format!("φ̂ = {phi:.3}, white noise → {:?}, {elapsed:.2?}", wn.order()),
    )
}

fn c5_holt() -> Outcome {
    let y: Vec<f64> = (0..50).map(|t| 2.0 + 3.0 * t as f64).collect();
    let m = holt_fit(&y).unwrap();
    // Independent recursion from the textbook start l = y1, b = y1 − y0,
    // scoring the one-step forecasts of y2 onwards.
    let (mut l, mut b, mut sse) = (y[1], y[1] - y[0], 0.0);
    for &v in &y[2..] {
        let f = l + b;
        sse += (v - f).powi(2);
        let nl = m.alpha_s * v + (1.0 - m.alpha_s) * f;
        b = m.beta_s * (nl - l) + (1.0 - m.beta_s) * b;
        l = nl;
    }
    outcome(m.sse < HOLT_SSE && sse < HOLT_SSE, format!("fitted SSE {:.1e}, recomputed SSE {sse:.1e}", m.sse))
}

fn c6_gradients() -> Outcome {
    let clock = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    let mut errors = 0;
    for block in BLOCKS {
        for seed in 0..GRAD_INSTANCES {
            match check_block(block, seed) {
                Ok(g) => {
                    checked += g.checked;
                    if g.max_rel_error > worst.0 {
                        worst = (g.max_rel_error, format!("{block:?}"));
                    }
                }
                Err(_) => errors += 1,
            }
        }
    }
    let elapsed = clock.elapsed();
    outcome(
        errors == 0 && worst.0 < GRAD_REL_ERROR && within(elapsed, 120.0),
        format!(
            "{} blocks × {GRAD_INSTANCES} instances, {checked} partials, worst {:.1e} ({}), {elapsed:.2?}",
            BLOCKS.len(),
            worst.0,
            worst.1
        ),
    )
}

fn simplex_gap(t: &agecast_tft::tensor::Tensor) -> f64 {
    (0..t.rows)
        .map(|r| {
            let row = t.row(r);
            let negative = row.iter().fold(0.0f64, |m, v| m.max(-v));
            negative.max((row.iter().sum::<f64>() - 1.0).abs())
        })
        .fold(0.0, f64::max)
}

fn c7_simplex() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let cfg = TftConfig { d_model: 8, heads: 2, input_window: 6, tau_max: 3, seed, ..TftConfig::default() };
        let model = TftModel::new(cfg, 2, vec!["a".into()], 0.1).unwrap();
        let mut rng = seeded_rng(1000 + seed);
        let hist: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..0.3)).collect();
        let known: Vec<Vec<f64>> = (0..9).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0)]).collect();
        let sample = model.prepare(&hist, &known, Some("a")).unwrap();
        let (_, att) = model.forward_normalized(&sample, AttentionMask::Causal);
        let (past, future) = model.selection_weights(&sample);
        worst = worst.max(simplex_gap(&att)).max(simplex_gap(&past)).max(simplex_gap(&future));
    }
    outcome(worst < SIMPLEX, format!("100 forward passes, worst deviation {worst:.1e}"))
}

fn c8_quantile_loss() -> Outcome {
    let mut rng = seeded_rng(8);
    let mut pass = true;
    for _ in 0..1000 {
        let (y, y_hat, q): (f64, f64, f64) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.01..0.99));
        pass &= quantile_loss(y, y_hat, 0.5).unwrap() == 0.5 * (y - y_hat).abs();
        let e = (y - y_hat).abs();
        let under = quantile_loss(y_hat + e, y_hat, q).unwrap();
        let over = quantile_loss(y_hat - e, y_hat, q).unwrap();
        pass &= (under - q * e).abs() <= 1e-12 * (1.0 + e) && (over - (1.0 - q) * e).abs() <= 1e-12 * (1.0 + e);
    }
    outcome(pass, "1000 random (y, ŷ, q)")
}

fn brute_frechet(a: &[(f64, f64)], b: &[(f64, f64)], i: usize, j: usize) -> f64 {
    let d = (a[i].0 - b[j].0).abs().max((a[i].1 - b[j].1).abs());
    let mut rest = f64::INFINITY;
    if i + 1 == a.len() && j + 1 == b.len() {
        return d;
    }
    if i + 1 < a.len() {
        rest = rest.min(brute_frechet(a, b, i + 1, j));
    }
    if j + 1 < b.len() {
        rest = rest.min(brute_frechet(a, b, i, j + 1));
    }
    if i + 1 < a.len() && j + 1 < b.len() {
        rest = rest.min(brute_frechet(a, b, i + 1, j + 1));
    }
    d.max(rest)
}

fn c9_frechet() -> Outcome {
    let mut rng = seeded_rng(9);
    let poly = |rng: &mut agecast_core::SeededRng| -> Vec<(f64, f64)> {
        let n = rng.random_range(1..=6);
        (0..n).map(|_| (rng.random_range(0.0..1.0), rng.random_range(-1.0..1.0))).collect()
    };
    let (mut exact, mut symmetric, mut triangle) = (0, 0, 0);
    for _ in 0..200 {
        let (a, b, c) = (poly(&mut rng), poly(&mut rng), poly(&mut rng));
        let ab = frechet_distance_points(&a, &b).unwrap();
        exact += usize::from(ab == brute_frechet(&a, &b, 0, 0));
        symmetric += usize::from(ab == frechet_distance_points(&b, &a).unwrap());
        let bc = frechet_distance_points(&b, &c).unwrap();
        let ac = frechet_distance_points(&a, &c).unwrap();
        triangle += usize::from(ac <= ab + bc);
    }
    outcome(
        exact == 200 && symmetric == 200 && triangle == 200,
        format!("exact {exact}/200, symmetric {symmetric}/200, triangle {triangle}/200"),
    )
}

fn c10_fixed_point() -> Outcome {
    let traces = synthetic_family(&FamilyConfig::default(), 10).unwrap();
    let mut worst = 0.0f64;
    for n in [1, 2, 4, 5] {
        let mut oracle = Engine::prepare(ModelKind::Oracle, &traces[0], 30, 0, &ModelSettings::default(), &[]).unwrap();
        let w = walk_forward(&mut oracle, &traces[0], 30, n, RefitMode::Literal).unwrap();
        worst = worst.max(mape(w.actuals(&traces[0]), &w.predictions).unwrap());
    }
    let report = run_on_traces(&BenchmarkConfig::new(vec![ModelKind::Oracle]), &traces).unwrap();
    let cells = report.rows.len();
    let bench_worst = report.rows.iter().map(|r| r.mape.unwrap_or(f64::NAN)).fold(0.0f64, f64::max);
    outcome(
        worst == 0.0 && bench_worst == 0.0 && report.failures() == 0,
        format!("walk_forward MAPE {worst}, run_benchmark max MAPE {bench_worst} over {cells} cells"),
    )
}

const SHORT_TERM: [ModelKind; 8] = [
    ModelKind::Ekf,
    ModelKind::Ukf,
    ModelKind::Arima,
    ModelKind::Holt,
    ModelKind::Enn,
    ModelKind::Eelm,
    ModelKind::Tft,
    ModelKind::TftWcov,
];
const FRACTION_TREND: [ModelKind; 3] = [ModelKind::Arima, ModelKind::Eelm, ModelKind::Tft];

fn c11_trends() -> Outcome {
    let clock = Instant::now();
    let mut horizon_runs: Vec<BenchmarkReport> = Vec::new();
    let mut fraction_runs: Vec<BenchmarkReport> = Vec::new();
    let (mut wcov, mut elm) = (Vec::new(), Vec::new());
    let mut failures = 0;
    for seed in 0..SEEDS {
        let family = synthetic_family(&FamilyConfig::default(), seed).unwrap();
        // (a): every model, every horizon, at the middle fraction.
        let mut a = BenchmarkConfig::new(SHORT_TERM.to_vec());
        a.train_fractions = vec![0.5];
        a.seeds = vec![seed];
        a.attention = false;
        // (b): the outer fractions at N = 1; the middle one comes from (a).
        let mut b = BenchmarkConfig::new(FRACTION_TREND.to_vec());
        b.horizons = vec![1];
        b.train_fractions = vec![0.3, 0.7];
        b.seeds = vec![seed];
        b.attention = false;
        let (ra, rb) = (run_on_traces(&a, &family).unwrap(), run_on_traces(&b, &family).unwrap());
        failures += ra.failures() + rb.failures();
        horizon_runs.push(ra);
        fraction_runs.push(rb);
        for (model, sink) in [(ModelKind::TftWcov, &mut wcov), (ModelKind::Eelm, &mut elm)] {
            for row in loo_long_term(&family, model, 0.3, seed, &ModelSettings::default()).unwrap() {
                match row.mape {
                    Some(m) => sink.push(m),
                    None => failures += 1,
                }
            }
        }
        eprintln!("  criterion 11: seed {seed} done after {:.0?}", clock.elapsed());
    }
    let mean = |runs: &[BenchmarkReport], model: ModelKind, n: usize, f: f64| {
        let v: Vec<f64> = runs
            .iter()
            .flat_map(|r| &r.rows)
            .filter(|r| r.model == model && r.n == n && (r.train_fraction - f).abs() < 1e-12)
            .filter_map(|r| r.mape)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };

    let mut lines = Vec::new();
    let mut pass_a = true;
    for model in SHORT_TERM {
        let m: Vec<f64> = [1, 2, 4].iter().map(|&n| mean(&horizon_runs, model, n, 0.5)).collect();
        let ok = m[0] <= m[1] && m[1] <= m[2];
        pass_a &= ok;
        lines.push(format!("    (a) {:<8} N=1,2,4: {:.3} {:.3} {:.3} {}", model.name(), m[0], m[1], m[2], if ok { "ok" } else { "NOT non-decreasing" }));
    }
    let mut pass_b = true;
    for model in FRACTION_TREND {
        let m = [mean(&fraction_runs, model, 1, 0.3), mean(&horizon_runs, model, 1, 0.5), mean(&fraction_runs, model, 1, 0.7)];
        let ok = m[0] >= m[1] && m[1] >= m[2];
        pass_b &= ok;
        lines.push(format!("    (b) {:<8} f=0.3,0.5,0.7: {:.3} {:.3} {:.3} {}", model.name(), m[0], m[1], m[2], if ok { "ok" } else { "NOT non-increasing" }));
    }
    let (mw, me) = (wcov.iter().sum::<f64>() / wcov.len() as f64, elm.iter().sum::<f64>() / elm.len() as f64);
    let pass_c = mw < me;
    lines.push(format!("    (c) LOO f=0.3: TFT-wCov {mw:.3} vs E-ELM {me:.3} {}", if pass_c { "ok" } else { "NOT smaller" }));
    let elapsed = clock.elapsed();
    let pass_t = within(elapsed, 1800.0);
    outcome(
        failures == 0 && pass_a && pass_b && pass_c && pass_t,
        format!(
            "(a) {} (b) {} (c) {}, {failures} failed cells, {elapsed:.0?} on {} core(s)\n{}",
            if pass_a { "pass" } else { "FAIL" },
            if pass_b { "pass" } else { "FAIL" },
            if pass_c { "pass" } else { "FAIL" },
            std::thread::available_parallelism().map_or(1, |n| n.get()),
            lines.join("\n")
        ),
    )
}

/// The number in a trace id such as `T09` or `test12`.
fn test_number(id: &str) -> Option<u32> {
    id.chars().filter(char::is_ascii_digit).collect::<String>().parse().ok()
}

fn c12_dataset(dir: &Path) -> Outcome {
    let mut traces: Vec<DegradationTrace> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| DegradationTrace::load(&p).unwrap())
        .collect();
    traces.sort_by(|a, b| a.id().cmp(b.id()));
    let sel = select_family(&traces, 3.0).unwrap();
    let dropped_12 = sel.dropped.iter().any(|id| test_number(id) == Some(12));

    let expected = [(9, ModelKind::Eelm), (11, ModelKind::Arima), (12, ModelKind::Arima), (36, ModelKind::Eelm)];
    let mut cfg = BenchmarkConfig::new(vec![ModelKind::Arima, ModelKind::Eelm, ModelKind::Holt]);
    cfg.horizons = vec![1];
    cfg.train_fractions = vec![0.33];
    let report = run_on_traces(&cfg, &traces).unwrap();
    let mut hits = 0;
    for (test, best) in expected {
        let winner = report
            .rows
            .iter()
            .filter(|r| test_number(&r.test) == Some(test) && r.mape.is_some())
            .min_by(|a, b| a.mape.unwrap().total_cmp(&b.mape.unwrap()))
            .map(|r| r.model);
        hits += usize::from(winner == Some(best));
    }
    outcome(dropped_12 && hits >= 3, format!("dropped {:?}, best-model matches {hits}/4", sel.dropped))
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

/// File contents with runtime fields removed from JSON and CSV.
fn canonical(path: &Path) -> Vec<u8> {
    let bytes = std::fs::read(path).unwrap();
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => {
            let mut v: Value = serde_json::from_slice(&bytes).unwrap();
            strip_runtime(&mut v);
            serde_json::to_vec(&v).unwrap()
        }
        Some("csv") => {
            let mut rdr = csv::Reader::from_reader(bytes.as_slice());
            let headers = rdr.headers().unwrap().clone();
            let keep: Vec<usize> = (0..headers.len()).filter(|&i| &headers[i] != "runtime_seconds").collect();
            let mut out = csv::Writer::from_writer(Vec::new());
            out.write_record(keep.iter().map(|&i| &headers[i])).unwrap();
            for rec in rdr.records() {
                let rec = rec.unwrap();
                out.write_record(keep.iter().map(|&i| &rec[i])).unwrap();
            }
            out.into_inner().unwrap()
        }
        _ => bytes,
    }
}

fn c13_determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let setup = root.path();
    std::fs::write(setup.join("s.json"), r#"{"alpha": 0.01, "beta": 0.05, "duration": 30, "noise_sigma": 0.0005, "seed": 3}"#).unwrap();
    for (name, seed) in [("a", 1), ("b", 2), ("c", 3)] {
        let cfg = format!(r#"{{"alpha": 0.01, "beta": 0.02, "duration": 69, "noise_sigma": 0.002, "seed": {seed}}}"#);
        std::fs::write(setup.join(format!("{name}.json")), cfg).unwrap();
    }
    std::fs::write(setup.join("settings.json"), r#"{"tft": {"max_epochs": 10}}"#).unwrap();
    std::fs::write(
        setup.join("bench.json"),
        r#"{"traces": [{"path": "a.csv"}, {"path": "b.csv"}], "models": ["UKF", "E-ELM", "TFT"],
            "horizons": [1, 2], "train_fractions": [0.5], "seeds": [0, 1],
            "settings": {"tft": {"max_epochs": 10}}}"#,
    )
    .unwrap();

    let commands: Vec<Vec<&str>> = vec![
        vec!["synth", "--config", "a.json", "--out", "a.csv"],
        vec!["synth", "--config", "b.json", "--out", "b.csv"],
        vec!["synth", "--config", "c.json", "--out", "c.csv"],
        vec!["synth", "--config", "s.json", "--out", "raw.csv", "--raw"],
        vec!["preprocess", "--input", "raw.csv", "--out", "pre.csv"],
        vec!["forecast", "--model", "ARIMA", "--trace", "a.csv", "--train-frac", "0.5", "--steps", "8", "--out", "arima.json"],
        vec![
            "forecast", "--model", "TFT-wCov", "--trace", "a.csv", "--references", "b.csv", "c.csv", "--train-frac", "0.5",
            "--steps", "8", "--settings", "settings.json", "--checkpoint", "ck.json", "--out", "tft.json",
        ],
        vec!["attention", "--model-checkpoint", "ck.json", "--trace", "a.csv", "--out", "att.json"],
        vec!["benchmark", "--config", "bench.json", "--out-dir", "bench"],
        vec!["report", "--input", "bench/report.json", "--out-dir", "plots"],
        vec!["loo", "--family", "a.csv", "b.csv", "c.csv", "--model", "E-ELM", "--train-frac", "0.3", "--out-dir", "loo"],
    ];
    let outputs = [
        "a.csv", "raw.csv", "pre.csv", "arima.json", "tft.json", "ck.json", "att.json", "bench/report.json", "bench/report.csv",
        "plots/mape_bars.csv", "plots/forecasts.csv", "plots/attention.csv", "loo/loo.json", "loo/loo_mape.csv",
    ];
    let run_all = |dir: &Path| -> Result<Vec<Vec<u8>>, String> {
        for f in ["s.json", "a.json", "b.json", "c.json", "settings.json", "bench.json"] {
            std::fs::copy(setup.join(f), dir.join(f)).unwrap();
        }
        for args in &commands {
            let o = Command::new(env!("CARGO_BIN_EXE_agecast")).args(args).current_dir(dir).env_remove("AGECAST_OUT_DIR").output().unwrap();
            if !o.status.success() {
                return Err(format!("{} failed: {}", args[0], String::from_utf8_lossy(&o.stderr)));
            }
        }
        Ok(outputs.iter().map(|f| canonical(&dir.join(f))).collect())
    };
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    match (run_all(d1.path()), run_all(d2.path())) {
        (Ok(a), Ok(b)) => {
            let differing: Vec<&str> = outputs.iter().zip(a.iter().zip(&b)).filter(|(_, (x, y))| x != y).map(|(f, _)| *f).collect();
            outcome(
                differing.is_empty(),
                format!("{} commands, {} outputs compared, differing: {differing:?}", commands.len(), outputs.len()),
            )
        }
        (Err(e), _) | (_, Err(e)) => outcome(false, e),
    }
}

fn main() {
    // Under `cargo test -- <filter>` or `--list`, stay quiet and succeed.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Option<Outcome>>)> = vec![
        (1, "preprocessing round-trip", Box::new(|| Some(c1_round_trip()))),
        (2, "filter oracle", Box::new(|| Some(c2_filter_oracle()))),
        (3, "state-transition comparison", Box::new(|| Some(c3_transition_comparison()))),
        (4, "ARIMA estimation", Box::new(|| Some(c4_arima()))),
        (5, "Holt exactness", Box::new(|| Some(c5_holt()))),
        (6, "TFT gradient suite", Box::new(|| Some(c6_gradients()))),
        (7, "TFT simplex invariants", Box::new(|| Some(c7_simplex()))),
        (8, "quantile loss", Box::new(|| Some(c8_quantile_loss()))),
        (9, "Fréchet oracle", Box::new(|| Some(c9_frechet()))),
        (10, "harness fixed point", Box::new(|| Some(c10_fixed_point()))),
        (11, "qualitative trends", Box::new(|| Some(c11_trends()))),
        (12, "dataset-conditional ordering", Box::new(|| std::env::var_os("AGECAST_NASA_DIR").map(|d| c12_dataset(Path::new(&d))))),
        (13, "determinism", Box::new(|| Some(c13_determinism()))),
    ];
    // AGECAST_CRITERIA=1,2,13 runs a subset.
    let only: Option<Vec<u32>> =
        std::env::var("AGECAST_CRITERIA").ok().map(|v| v.split(',').filter_map(|c| c.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (n, name, run) in &criteria {
        if only.as_ref().is_some_and(|o| !o.contains(n)) {
            continue;
        }
        match run() {
            None => println!("criterion {n:>2} SKIP {name}: set AGECAST_NASA_DIR to converted NASA traces"),
            Some(o) => {
                println!("criterion {n:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
                // Dataset-conditional results are informative only.
                if !o.pass && *n != 12 {
                    failed.push(*n);
                }
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
