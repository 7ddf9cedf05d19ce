//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Tolerances and sizes are pinned below.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use twoscale::{execute, RunConfig, Status};
use twoscale_core::ergodics::{
    ergodic_average, estimate_bbar, estimate_mixing, time_average_with, AverageWindow, AveragedCoeffs, EstimationPlan,
};
use twoscale_core::integrator::{simulate_averaged, FrozenPath};
use twoscale_core::khasminskii::{eval_l_av, kolmogorov_gap, CoupledSetup, CylindricalFn};
use twoscale_core::model::*;
use twoscale_core::rng::{replica_seed, study};
use twoscale_core::spectral::{check_hypothesis_h1, Exponent};
use twoscale_core::stats::{linear_fit, Welford};
use twoscale_core::FieldCoeffs;

/// Z-score bound for every "within k standard errors" check.
const Z: f64 = 3.0;

struct Report {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn linear(n: usize, p: LinearParams) -> ModelSpec {
    CatalogModel::LinearTestModel(p).build(&BasisParams::default().with_modes(n)).unwrap()
}

fn run_study(dir: &Path, name: &str, cfg: Value) -> (Status, Value, Vec<BTreeMap<String, String>>) {
    let mut cfg = cfg;
    cfg["out"] = json!(dir.join(name));
    let cfg = RunConfig::from_value(cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
    let outcome = execute(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
    let study = cfg.study.unwrap().name();
    let csv_path = dir.join(name).join(format!("{study}.csv"));
    let rows = match csv::Reader::from_path(&csv_path) {
        Ok(mut r) => r.deserialize().map(|row| row.unwrap()).collect(),
        Err(_) => Vec::new(),
    };
    (outcome.status, outcome.summary, rows)
}

fn col(rows: &[BTreeMap<String, String>], key: &str) -> Vec<f64> {
    rows.iter().map(|r| r[key].parse().unwrap()).collect()
}

fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

fn timed(limit: Duration, f: impl FnOnce() -> (bool, String)) -> (bool, String) {
    let start = Instant::now();
    let (pass, detail) = f();
    let took = start.elapsed();
    let in_time = took <= limit;
    let note = format!("{detail}; {:.1} s (limit {} s)", took.as_secs_f64(), limit.as_secs());
    (pass && in_time, if in_time { note } else { format!("{note}; over time limit") })
}

fn ou_oracle() -> (bool, String) {
    let n = 8;
    let m = linear(n, LinearParams::default());
    let x = FieldCoeffs::unit(n, 1);
    let w = AverageWindow::for_model(&m, 200.0, 1e-3, 20);
    let mu1 = 1.0 / 3.0;
    // Mode means and squared deviations from the known means.
    let s = time_average_with(&m, &x, &FieldCoeffs::zeros(n), &w, 0, study::ERGODIC, 1 + n, || {
        move |p: &FrozenPath<'_>, out: &mut [f64]| {
            out[0] = p.v[0];
            for k in 0..n {
                let c = if k == 0 { p.v[0] - mu1 } else { p.v[k] };
                out[1 + k] = c * c;
            }
        }
    })
    .unwrap();
    let mut pass = (s.estimate[0] - mu1).abs() <= Z * s.standard_error[0];
    let mut worst = 0.0f64;
    for k in 1..=n {
        let target = 1.0 / (2.0 * (k * k) as f64 + 1.0);
        let z = (s.estimate[k] - target).abs() / s.standard_error[k];
        worst = worst.max(z);
        pass &= z <= Z;
    }
    (pass, format!("mode-1 mean {:.5} ± {:.5} (target 0.33333); worst variance |z| = {worst:.2}", s.estimate[0], s.standard_error[0]))
}

fn ergodic_rate() -> (bool, String) {
    let n = 8;
    let m = linear(n, LinearParams::default());
    let z = FieldCoeffs::zeros(n);
    let horizons = [10.0, 40.0, 160.0, 640.0];
    let replicas = 200;
    let errors: Vec<f64> = horizons
        .iter()
        .map(|&t| {
            let w = AverageWindow::for_model(&m, t, 0.005, replicas);
            let s = ergodic_average(&m, &z, &z, &|v: &[f64]| v[0] * v[0], &w, 0).unwrap();
            s.per_replica.iter().map(|r| (r[0] - 1.0 / 3.0).abs()).sum::<f64>() / replicas as f64
        })
        .collect();
    let lx: Vec<f64> = horizons.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let slope = linear_fit(&lx, &ly).unwrap().slope;
    ((-0.65..=-0.35).contains(&slope), format!("mean |error| {} at T = 10..640; slope {slope:.3} (band [-0.65, -0.35])", fmt(&errors)))
}

fn mixing() -> (bool, String) {
    let n = 8;
    let m = linear(n, LinearParams::default());
    let x = FieldCoeffs::unit(n, 1);
    let fit = estimate_mixing(&m, &x, &FieldCoeffs::zeros(n), &FieldCoeffs::unit(n, 1), 5.0, 1e-3, 3, 0).unwrap();
    let pass = (fit.rate - 1.5).abs() <= 0.01 * 1.5;
    (pass, format!("rate {:.5} (target 1.5 ± 1%), R² = {:.6}", fit.rate, fit.r_squared))
}

fn m0_gate() -> (bool, String) {
    let m = linear(32, LinearParams::default());
    let r = check_hypothesis_h1(m.slow(), m.fast(), (0.75, 0.75), (Exponent::Infinite, Exponent::Infinite)).unwrap();
    let good = check_condition_m0(&m, &r).unwrap();
    let bad_model = linear(32, LinearParams { feedback: -0.8, ..LinearParams::default() });
    let bad = check_condition_m0(&bad_model, &r).unwrap();
    let pass = (good.m0 - 0.25).abs() <= 1e-15 && good.pass && (bad.m0 - 0.64).abs() <= 1e-15 && !bad.pass;
    (pass, format!("M0 = {} (pass = {}), L_b2 = 0.8 variant M0 = {} (pass = {})", good.m0, good.pass, bad.m0, bad.pass))
}

fn bbar_pipeline() -> (bool, String) {
    let n = 8;
    let m = linear(n, LinearParams::default());
    let e1 = FieldCoeffs::unit(n, 1);
    let w = AverageWindow::for_model(&m, 200.0, 1e-3, 20);
    let (b, s) = estimate_bbar(&m, &e1, &w, 0).unwrap();
    let point = (b[0] - 1.0 / 3.0).abs() <= Z * s.standard_error[0];

    let plan = EstimationPlan {
        window: AverageWindow::for_model(&m, 50.0, 1e-3, 20),
        anchors: vec![FieldCoeffs::zeros(n)],
        jacobian_step: 1.0,
        seed: 0,
    };
    let estimated = AveragedCoeffs::estimated(&m, &plan, true).unwrap();
    let analytic = AveragedCoeffs::analytic(&m).unwrap();
    let replicas = 400;
    let finals = |avg: &AveragedCoeffs, seed: u64| -> (Welford, Welford) {
        let mut mode1 = Welford::new();
        let mut sq = Welford::new();
        for r in 0..replicas {
            let tr = simulate_averaged(avg, m.slow(), &e1, 1.0, 1e-3, replica_seed(seed, study::AVERAGED, r)).unwrap();
            let u = tr.u.last().unwrap();
            mode1.push(u[0]);
            sq.push(u.iter().map(|c| c * c).sum());
        }
        (mode1, sq)
    };
    let (ea, eb) = finals(&estimated, 1);
    let (aa, ab) = finals(&analytic, 2);
    let within = |p: &Welford, q: &Welford| (p.mean() - q.mean()).abs() <= Z * p.standard_error().hypot(q.standard_error());
    let pass = point && within(&ea, &aa) && within(&eb, &ab);
    (
        pass,
        format!(
            "B̄(e1)_1 = {:.5} ± {:.5}; E<u(1),e1> estimated {:.4} vs analytic {:.4}; E|u(1)|² {:.4} vs {:.4}",
            b[0],
            s.standard_error[0],
            ea.mean(),
            aa.mean(),
            eb.mean(),
            ab.mean()
        ),
    )
}

fn converge(dir: &Path) -> (bool, String) {
    let (status, _, rows) = run_study(dir, "converge", json!({"study": "converge", "params": {"replicas": 200}}));
    let e = col(&rows, "mean_sup_error");
    let pass = status == Status::Pass && decreasing(&e) && e[2] < 0.5 * e[0];
    (pass, format!("E sup|u_ε - ū| = {} for ε = 0.1, 0.02, 0.004", fmt(&e)))
}

fn remainder(dir: &Path) -> (bool, String) {
    let (_, _, rows) = run_study(dir, "remainder", json!({"study": "remainder", "params": {"replicas": 200}}));
    let e = col(&rows, "estimate");
    let control = json!({"study": "remainder", "model_params": {"b1": "slow"}, "params": {"replicas": 20}});
    let (_, _, crow) = run_study(dir, "remainder_control", control);
    let c = col(&crow, "estimate");
    let pass = decreasing(&e) && c.iter().all(|v| *v == 0.0);
    (pass, format!("E sup|R_ε| = {}; v-independent control {}", fmt(&e), fmt(&c)))
}

fn kolmogorov(dir: &Path) -> (bool, String) {
    let base = json!({
        "study": "gap",
        "basis": {"n": 8},
        "integrator": {"t_end": 0.5},
        "params": {"t1": 0.25, "t2": 0.5, "outer": 50, "inner": 32}
    });
    let (_, _, rows) = run_study(dir, "gap", base);
    let e = col(&rows, "estimate");

    let n = 8;
    let ctrl = linear(n, LinearParams { b1: SlowDrift::Slow, ..LinearParams::default() });
    let avg = AveragedCoeffs::analytic(&ctrl).unwrap();
    let phi = CylindricalFn::mode_square(n, 1).unwrap();
    let setup = CoupledSetup { x: FieldCoeffs::unit(n, 1), y: FieldCoeffs::zeros(n), t_end: 0.5, dt: 4e-4, kappa1: 0.5, kappa2: 1.0 };
    let zero = kolmogorov_gap(&ctrl, &avg, &phi, 0.02, &setup, 0.25, 0.5, 10, 10, 0).unwrap().scalar();

    let m = linear(n, LinearParams::default());
    let lav = eval_l_av(&phi, &AveragedCoeffs::analytic(&m).unwrap(), &FieldCoeffs::unit(n, 1)).unwrap();
    let pass = decreasing(&e) && zero.abs() <= 1e-12 && (lav + 1.0 / 3.0).abs() <= 1e-9;
    (pass, format!("gap {} over ε; control gap {zero:e}; L_av φ(e1) = {lav:.12}", fmt(&e)))
}

fn bounds(dir: &Path) -> (bool, String) {
    let (ms, msum, _) = run_study(dir, "moments", json!({"study": "moments", "params": {"replicas": 200}}));
    let (hs, hsum, hrows) = run_study(dir, "holder", json!({"study": "holder", "params": {"replicas": 200}}));
    let spreads: Vec<f64> = msum["reports"].as_array().unwrap().iter().map(|r| r["spread"].as_f64().unwrap()).collect();
    let mut exps = col(&hrows, "exponent");
    exps.dedup();
    let pass = ms == Status::Pass && hs == Status::Pass;
    (pass, format!("moment ratios {} (limit 5); Hölder exponents {} spread {:.4} (limit 0.3)", fmt(&spreads), fmt(&exps), hsum["spread"].as_f64().unwrap()))
}

fn weak(dir: &Path) -> (bool, String) {
    let cfg = json!({
        "study": "weak",
        "basis": {"n": 8},
        "model_params": {"g1": "sin_fast"},
        "params": {
            "replicas": 2000,
            "x": "zero",
            "y": {"unit": 1, "scale": 50.0},
            "window": {"t": 50.0, "dt": 1e-3, "replicas": 20},
            "anchors": ["zero"],
            "functionals": [{"kind": "mode1_clipped", "clip": 3.0}, {"kind": "norm_clipped", "clip": 5.0}]
        }
    });
    let (status, _, _) = run_study(dir, "weak", cfg);
    let mut r = csv::Reader::from_path(dir.join("weak/weak.csv")).unwrap();
    let rows: Vec<Vec<f64>> = r.records().map(|rec| rec.unwrap().iter().map(|f| f.parse().unwrap()).collect()).collect();
    let ks: Vec<f64> = rows.iter().map(|r| r[2]).collect();
    let d1: Vec<f64> = rows.iter().map(|r| r[4]).collect();
    let d2: Vec<f64> = rows.iter().map(|r| r[6]).collect();
    let pass = status == Status::Pass && decreasing(&ks) && decreasing(&d1) && decreasing(&d2);
    (pass, format!("KS {}; |Δ mode-1| {}; |Δ norm| {}", fmt(&ks), fmt(&d1), fmt(&d2)))
}

fn hash_csvs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let sub = entry.unwrap().path();
        for f in fs::read_dir(&sub).unwrap() {
            let p = f.unwrap().path();
            if p.extension().is_some_and(|e| e == "csv") {
                let key = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(key, Sha256::digest(fs::read(&p).unwrap()).to_vec());
            }
        }
    }
    out
}

fn determinism(dir: &Path) -> (bool, String) {
    let small = json!({
        "basis": {"n": 4},
        "integrator": {"t_end": 0.4},
        "seed": 11,
        "params": {
            "replicas": 12,
            "eps_list": [0.1, 0.05],
            "window": {"t": 5.0, "dt": 5e-3, "replicas": 3},
            "mixing": true,
            "t1": 0.1,
            "t2": 0.2,
            "outer": 10,
            "inner": 10,
            "h_list": [0.02, 0.04, 0.08]
        }
    });
    let studies = ["check", "simulate", "fast", "estimate", "remainder", "gap", "converge", "moments", "holder", "weak"];
    let mut runs = Vec::new();
    for (k, threads) in [(0, 1usize), (1, 4)] {
        let root = dir.join(format!("round{k}"));
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        for s in studies {
            let mut cfg = small.clone();
            cfg["study"] = json!(s);
            if s == "weak" {
                cfg["model_params"] = json!({"g1": "sin_fast"});
            }
            cfg["out"] = json!(root.join(s));
            let cfg = RunConfig::from_value(cfg).unwrap();
            pool.install(|| execute(&cfg)).unwrap_or_else(|e| panic!("{s}: {e}"));
        }
        runs.push(hash_csvs(&root));
    }
    let pass = runs[0] == runs[1] && runs[0].len() >= studies.len();
    (pass, format!("{} CSV files hash-identical across reruns on 1 and 4 threads", runs[0].len()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let dir = tmp.path();
    let secs = Duration::from_secs;
    type Check<'a> = Box<dyn FnOnce() -> (bool, String) + 'a>;
    let criteria: Vec<(u32, &str, Duration, Check)> = vec![
        (1, "OU oracle for the frozen fast process", secs(120), Box::new(ou_oracle)),
        (2, "ergodic time-average rate", secs(180), Box::new(ergodic_rate)),
        (3, "mixing rate under additive noise", secs(30), Box::new(mixing)),
        (4, "M0 contraction gate", secs(1), Box::new(m0_gate)),
        (5, "averaged drift estimator and pipeline", secs(180), Box::new(bbar_pipeline)),
        (6, "averaging limit (strong, common noise)", secs(600), Box::new(|| converge(dir))),
        (7, "remainder vanishes", secs(300), Box::new(|| remainder(dir))),
        (8, "Kolmogorov-operator gap", secs(600), Box::new(|| kolmogorov(dir))),
        (9, "a priori bounds", secs(300), Box::new(|| bounds(dir))),
        (10, "weak probe with fast-dependent diffusion", secs(600), Box::new(|| weak(dir))),
        (11, "determinism of CSV outputs", secs(300), Box::new(|| determinism(dir))),
    ];
    let mut reports = Vec::new();
    for (id, name, limit, f) in criteria {
        let (pass, detail) = timed(limit, f);
        let r = Report { id, name, pass, detail };
        println!("[{}] {:>2} {}: {}", if r.pass { "PASS" } else { "FAIL" }, r.id, r.name, r.detail);
        reports.push(r);
    }
    let passed = reports.iter().filter(|r| r.pass).count();
    println!("acceptance: {passed}/{} criteria passed", reports.len());
    if passed != reports.len() {
        std::process::exit(1);
    }
}
