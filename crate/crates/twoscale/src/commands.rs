//! One function per subcommand. Each writes its tables into the run
//! directory and returns a verdict with a JSON summary.

use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use twoscale_core::ergodics::{
    estimate_bbar, estimate_mixing, estimate_s, provenance_label, time_average_with, AveragedCoeffs, EstimationPlan,
};
use twoscale_core::experiments::{
    convergence_study, holder_increment_study, moment_bound_study, weak_convergence_probe, StudySetup,
};
use twoscale_core::integrator::{simulate_coupled, Trajectory};
use twoscale_core::khasminskii::{gap_study, remainder_study, CoupledSetup, CylindricalFn, PartitionRow};
use twoscale_core::linalg::sqrt_spd;
use twoscale_core::model::{linear_invariant_law, CatalogModel, HypothesisGate, ModelSpec};
use twoscale_core::rng::{replica_seed, study};
use twoscale_core::stats::linear_fit;

use crate::config::{BbarMode, RunConfig, Study};
use crate::error::{lift, CliError, EXIT_FAIL, EXIT_PASS, EXIT_USAGE};
use crate::io::RunDir;

pub const CONFIG_FILE: &str = "config.json";
pub const VERDICT_FILE: &str = "verdict.json";
pub const TIMING_FILE: &str = "timing.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Refused,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => EXIT_PASS,
            Status::Fail => EXIT_FAIL,
            Status::Refused => EXIT_USAGE,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub study: Study,
    pub status: Status,
    pub summary: Value,
}

type Verdict = Result<(bool, Value), CliError>;

/// Runs the configured study inside its run directory and returns the
/// outcome. Refusals are reported as an outcome, not an error.
pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let study = cfg.study()?;
    let cfg = cfg.clone().resolved();
    let dir = RunDir::create(&cfg.out_dir())?;
    dir.write_text(CONFIG_FILE, &(cfg.canonical_json() + "\n"))?;
    let start = Instant::now();
    let result = match study {
        Study::Check => check(&cfg, &dir),
        Study::Simulate => simulate(&cfg, &dir),
        Study::Fast => fast(&cfg, &dir),
        Study::Estimate => estimate(&cfg, &dir),
        Study::Remainder => remainder(&cfg, &dir),
        Study::Gap => gap(&cfg, &dir),
        Study::Converge => converge(&cfg, &dir),
        Study::Moments => moments(&cfg, &dir),
        Study::Holder => holder(&cfg, &dir),
        Study::Weak => weak(&cfg, &dir),
    };
    let outcome = match result {
        Ok((pass, summary)) => Outcome { study, status: if pass { Status::Pass } else { Status::Fail }, summary },
        Err(CliError::Refused(reason)) => Outcome { study, status: Status::Refused, summary: json!({ "reason": reason }) },
        Err(e) => return Err(e),
    };
    dir.write_json(VERDICT_FILE, &outcome)?;
    dir.write_json(TIMING_FILE, &json!({ "seconds": start.elapsed().as_secs_f64(), "threads": rayon::current_num_threads() }))?;
    Ok(outcome)
}

fn gate(cfg: &RunConfig, model: &ModelSpec) -> Result<HypothesisGate, CliError> {
    let h = &cfg.hypothesis;
    Ok(HypothesisGate::evaluate(model, (h.beta[0], h.beta[1]), (h.rho[0], h.rho[1]), h.samples, cfg.seed)?)
}

fn averaged(cfg: &RunConfig, model: &ModelSpec) -> Result<AveragedCoeffs, CliError> {
    let p = &cfg.params;
    let anchors = p
        .anchors
        .iter()
        .enumerate()
        .map(|(k, a)| cfg.resolve_data(&format!("anchors[{k}]"), a))
        .collect::<Result<Vec<_>, _>>()?;
    let plan = EstimationPlan { window: p.window.window(model), anchors, jacobian_step: p.jacobian_step, seed: cfg.seed };
    let avg = match p.bbar {
        BbarMode::Analytic => AveragedCoeffs::analytic(model),
        BbarMode::Auto => AveragedCoeffs::analytic(model).or_else(|_| AveragedCoeffs::best_available(model, &plan)),
        BbarMode::Estimated => AveragedCoeffs::estimated(model, &plan, true),
    };
    Ok(avg?)
}

fn study_setup(cfg: &RunConfig, study: Study) -> Result<StudySetup, CliError> {
    let p = &cfg.params;
    Ok(StudySetup {
        x: cfg.resolve_data("x", &p.x)?,
        y: cfg.resolve_data("y", &p.y)?,
        t_end: cfg.integrator.t_end,
        dt: cfg.dt(study),
        replicas: p.replicas,
        seed: cfg.seed,
    })
}

fn coupled_setup(cfg: &RunConfig, study: Study) -> Result<CoupledSetup, CliError> {
    let p = &cfg.params;
    Ok(CoupledSetup {
        x: cfg.resolve_data("x", &p.x)?,
        y: cfg.resolve_data("y", &p.y)?,
        t_end: cfg.integrator.t_end,
        dt: cfg.dt(study),
        kappa1: p.kappa1,
        kappa2: p.kappa2,
    })
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

#[derive(Serialize)]
struct CheckRow {
    check: &'static str,
    value: f64,
    pass: bool,
}

fn check(cfg: &RunConfig, dir: &RunDir) -> Verdict {
    let model = cfg.build_model()?;
    let g = gate(cfg, &model)?;
    let s = &g.spectral;
    let upper = |v: twoscale_core::spectral::SeriesValue| v.upper().unwrap_or(f64::INFINITY);
    let rows = [
        CheckRow { check: "kappa_slow", value: upper(s.kappa[0]), pass: s.flags.slow_series },
        CheckRow { check: "zeta_slow", value: upper(s.zeta[0]), pass: s.flags.slow_series },
        CheckRow { check: "kappa_fast", value: upper(s.kappa[1]), pass: s.flags.fast_series },
        CheckRow { check: "zeta_fast", value: upper(s.zeta[1]), pass: s.flags.fast_series },
        CheckRow { check: "exponent_slow", value: s.exponent_products[0], pass: s.flags.slow_exponent },
        CheckRow { check: "exponent_fast", value: s.exponent_products[1], pass: s.flags.fast_exponent },
        CheckRow { check: "lambda_gap", value: s.lambda_gap, pass: s.flags.spectral_gap },
        CheckRow { check: "l_b2_declared", value: g.lipschitz.declared_l_b2, pass: s.flags.lipschitz_below_gap.unwrap_or(true) },
        CheckRow { check: "l_b2_measured", value: g.lipschitz.measured_l_b2, pass: g.lipschitz.pass },
        CheckRow { check: "l_g2_measured", value: g.lipschitz.measured_l_g2, pass: g.lipschitz.pass },
        CheckRow { check: "growth_exponent", value: g.lipschitz.growth_exponent, pass: g.lipschitz.pass },
        CheckRow { check: "m0", value: g.contraction.m0, pass: g.contraction.pass },
    ];
    dir.write_csv("check.csv", &rows)?;
    Ok((g.pass, json!({ "gate": g, "failures": g.failures() })))
}

fn trajectory_table(tr: &Trajectory, every: usize) -> (Vec<String>, Vec<Vec<f64>>) {
    let n = tr.u.first().map_or(0, |c| c.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|k| format!("u_{k}")));
    if tr.v.is_some() {
        header.extend((1..=n).map(|k| format!("v_{k}")));
    }
    let last = tr.len().saturating_sub(1);
    let rows = (0..tr.len())
        .filter(|i| i % every == 0 || *i == last)
        .map(|i| {
            let mut r = vec![tr.times[i]];
            r.extend_from_slice(&tr.u[i]);
            if let Some(v) = &tr.v {
                r.extend_from_slice(&v[i]);
            }
            r
        })
        .collect();
    (header, rows)
}

fn simulate(cfg: &RunConfig, dir: &RunDir) -> Verdict {
    let model = cfg.build_model()?;
    let s = study_setup(cfg, Study::Simulate)?;
    let i = &cfg.integrator;
    let seed = replica_seed(cfg.seed, study::SIMULATE, 0);
    let tr = simulate_coupled(&model, &s.x, &s.y, i.eps, i.t_end, s.dt, i.allow_unstable, seed)?;
    let (header, rows) = trajectory_table(&tr, cfg.params.record_every);
    dir.write_table("trajectory.csv", &header, &rows)?;
    let norm = |c: &[f64]| c.iter().map(|x| x * x).sum::<f64>().sqrt();
    let summary = json!({
        "eps": i.eps,
        "dt": s.dt,
        "steps": tr.len() - 1,
        "sup_norm_u": tr.sup_norm_u(),
        "final_norm_u": norm(tr.u.last().unwrap()),
        "final_norm_v": tr.v.as_ref().map(|v| norm(v.last().unwrap())),
    });
    Ok((true, summary))
}

#[derive(Serialize)]
struct FastRow {
    mode: usize,
    mean: f64,
    mean_se: f64,
    mean_target: Option<f64>,
    second_moment: f64,
    second_moment_se: f64,
    second_moment_target: Option<f64>,
    variance: f64,
}

/// Closed-form invariant law when the model is the linear test model.
fn invariant_law(cfg: &RunConfig, model: &ModelSpec, x: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    match cfg.catalog().ok()? {
        CatalogModel::LinearTestModel(p) => linear_invariant_law(model.fast(), p.gain, p.feedback, p.g2_scale, x),
        _ => None,
    }
}

fn fast(cfg: &RunConfig, dir: &RunDir) -> Verdict {
    let model = cfg.build_model()?;
    let p = &cfg.params;
    let x = cfg.resolve_data("x", &p.x)?;
    let y = cfg.resolve_data("y", &p.y)?;
    let w = p.window.window(&model);
    let n = model.modes();
    let stats = time_average_with(&model, &x, &y, &w, cfg.seed, study::ERGODIC, 2 * n, || {
        move |path: &twoscale_core::integrator::FrozenPath<'_>, out: &mut [f64]| {
            for (k, v) in path.v.iter().enumerate() {
                out[k] = *v;
                out[n + k] = v * v;
            }
        }
    })?;
    let law = invariant_law(cfg, &model, &x);
    let within = |est: f64, se: f64, target: Option<f64>| target.is_none_or(|t| (est - t).abs() <= 3.0 * se);
    let mut pass = true;
    let rows: Vec<FastRow> = (0..n)
        .map(|k| {
            let (m, m2) = (stats.estimate[k], stats.estimate[n + k]);
            let mean_target = law.as_ref().map(|l| l.0[k]);
            let second_moment_target = law.as_ref().map(|l| l.1[k] + l.0[k] * l.0[k]);
            let row = FastRow {
                mode: k + 1,
                mean: m,
                mean_se: stats.standard_error[k],
                mean_target,
                second_moment: m2,
                second_moment_se: stats.standard_error[n + k],
                second_moment_target,
                variance: m2 - m * m,
            };
            pass &= within(row.mean, row.mean_se, mean_target) && within(row.second_moment, row.second_moment_se, second_moment_target);
            row
        })
        .collect();
    dir.write_csv("fast.csv", &rows)?;
    let mut summary = json!({ "window": w, "analytic_targets": law.is_some() });
    if p.mixing {
        let y2 = cfg.resolve_data("y2", &p.y2)?;
        let fit = estimate_mixing(&model, &x, &y, &y2, p.mixing_t_end, w.dt, w.replicas, cfg.seed)?;
        if let Ok(CatalogModel::LinearTestModel(lp)) = cfg.catalog() {
            let target = model.fast().spectral_gap() - lp.feedback;
            pass &= (fit.rate - target).abs() <= 0.01 * target;
            summary["mixing_target"] = json!(target);
        }
        summary["mixing"] = json!({ "rate": fit.rate, "prefactor": fit.prefactor, "r_squared": fit.r_squared });
        let rows: Vec<Vec<f64>> = fit.times.iter().zip(&fit.mean_distance).map(|(t, d)| vec![*t, *d]).collect();
        dir.write_table("mixing.csv", &["t".into(), "mean_distance".into()], &rows)?;
    }
    Ok((pass, summary))
}

#[derive(Serialize)]
struct BbarRow {
    mode: usize,
    bbar: f64,
    se: f64,
    analytic: Option<f64>,
}

fn estimate(cfg: &RunConfig, dir: &RunDir) -> Verdict {
    let model = cfg.build_model()?;
    let p = &cfg.params;
    let x = cfg.resolve_data("x", &p.x)?;
    let w = p.window.window(&model);
    let (b, stats) = estimate_bbar(&model, &x, &w, cfg.seed)?;
    let analytic = model.analytic_bbar().map(|f| f(&x));
    let mut pass = true;
    let rows: Vec<BbarRow> = (0..model.modes())
        .map(|k| {
            let a = analytic.as_ref().map(|v| v[k]);
            if let Some(a) = a {
                pass &= (b[k] - a).abs() <= 3.0 * stats.standard_error[k];
            }
            BbarRow { mode: k + 1, bbar: b[k], se: stats.standard_error[k], analytic: a }
        })
        .collect();
    dir.write_csv("bbar.csv", &rows)?;
    let mut summary = json!({ "window": w, "analytic_targets": analytic.is_some() });
    if p.diffusion.unwrap_or_else(|| model.g1_depends_on_fast()) {
        let d = estimate_s(&model, &x, &w, cfg.seed)?;
        let root = sqrt_spd(&d.s)?;
        let header: Vec<String> = (1..=model.modes()).map(|k| format!("col_{k}")).collect();
        dir.write_table("s.csv", &header, &d.s)?;
        dir.write_table("s_se.csv", &header, &d.standard_error)?;
        dir.write_table("gbar.csv", &header, &root)?;
        summary["s_11"] = json!(d.s[0][0]);
    }
    Ok((pass, summary))
}

fn partition_verdict(rows: &[PartitionRow]) -> bool {
    let est: Vec<f64> = rows.iter().map(|r| r.estimate).collect();
    strictly_decreasing(&est) || est.iter().all(|e| *e == 0.0)
}

fn remainder(cfg: &RunConfig, dir: &RunDir) -> Verdict {
    let model = cfg.build_model()?;
    let avg = averaged(cfg, &model)?;
    let setup = coupled_setup(cfg, Study::Remainder)?;
    let h = cfg.resolve_data("h", &cfg.params.h)?;
    let rows = remainder_study(&model, &avg, &setup, &cfg.params.eps_list, &h, cfg.params.replicas, cfg.seed)?;
    dir.write_csv("remainder.csv", &rows)?;
    Ok((partition_verdict(&rows), json!({ "averaged": provenance_label(&avg), "dt": setup.dt })))
}

fn gap(cfg: &RunConfig, dir: &RunDir) -> Verdict {
    let model = cfg.build_model()?;
    let avg = averaged(cfg, &model)?;
    let setup = coupled_setup(cfg, Study::Gap)?;
    let p = &cfg.params;
    let phi = CylindricalFn::mode_square(model.modes(), p.phi_mode)?;
    let rows = gap_study(&model, &avg, &phi, &setup, &p.eps_list, p.t1, p.t2, p.outer, p.inner, cfg.seed)?;
    dir.write_csv("gap.csv", &rows)?;
    Ok((partition_verdict(&rows), json!({ "averaged": provenance_label(&avg), "dt": setup.dt })))
}

fn converge(cfg: &RunConfig, dir: &RunDir) -> Verdict {
    let model = cfg.build_model()?;
    let g = gate(cfg, &model)?;
    if !g.pass {
        return Err(CliError::Refused(g.failures().join("; ")));
    }
    let avg = averaged(cfg, &model).map_err(|e| match e {
        CliError::Core(c) => lift(c),
        other => other,
    })?;
    let setup = study_setup(cfg, Study::Converge)?;
    let r = convergence_study(&model, &avg, &g, &setup, &cfg.params.eps_list).map_err(lift)?;
    dir.write_csv("converge.csv", &r.rows)?;
    let first = r.rows.first().map_or(0.0, |row| row.mean_sup_error);
    let last = r.rows.last().map_or(0.0, |row| row.mean_sup_error);
    let pass = r.strictly_decreasing() && last < 0.5 * first;
    // Observed rate in ε; reported only, nothing is asserted about it.
    let lx: Vec<f64> = r.rows.iter().map(|row| row.eps.ln()).collect();
    let ly: Vec<f64> = r.rows.iter().map(|row| row.mean_sup_error.ln()).collect();
    let rate = linear_fit(&lx, &ly).map(|f| f.slope);
    Ok((pass, json!({ "coupling": r.coupling, "bbar": r.bbar, "gbar": r.gbar, "dt": r.dt, "empirical_rate": rate })))
}

#[derive(Serialize)]
struct MomentRow {
    quantity: twoscale_core::experiments::BoundQuantity,
    eps: f64,
    p: u32,
    value: f64,
    se: f64,
}

fn moments(cfg: &RunConfig, dir: &RunDir) -> Verdict {
    let model = cfg.build_model()?;
    let setup = study_setup(cfg, Study::Moments)?;
    let reports = moment_bound_study(&model, &setup, &cfg.params.eps_list, &cfg.params.p_list)?;
    let rows: Vec<MomentRow> = reports
        .iter()
        .flat_map(|r| r.rows.iter().map(move |row| MomentRow { quantity: r.quantity, eps: row.eps, p: row.p, value: row.value, se: row.se }))
        .collect();
    dir.write_csv("moments.csv", &rows)?;
    let pass = reports.iter().all(|r| r.pass);
    let summary: Vec<Value> = reports
        .iter()
        .map(|r| json!({ "quantity": r.quantity, "spread": r.spread, "threshold": r.threshold, "pass": r.pass }))
        .collect();
    Ok((pass, json!({ "reports": summary })))
}

#[derive(Serialize)]
struct HolderCsvRow {
    eps: f64,
    h: f64,
    increment: f64,
    se: f64,
    exponent: f64,
}

fn holder(cfg: &RunConfig, dir: &RunDir) -> Verdict {
    let model = cfg.build_model()?;
    let setup = study_setup(cfg, Study::Holder)?;
    let s = holder_increment_study(&model, &setup, &cfg.params.eps_list, &cfg.params.h_list)?;
    let rows: Vec<HolderCsvRow> = s
        .rows
        .iter()
        .flat_map(|r| {
            (0..r.h.len()).map(move |i| HolderCsvRow { eps: r.eps, h: r.h[i], increment: r.increment[i], se: r.se[i], exponent: r.exponent })
        })
        .collect();
    dir.write_csv("holder.csv", &rows)?;
    Ok((s.report.pass, json!({ "spread": s.report.spread, "threshold": s.report.threshold })))
}

fn weak(cfg: &RunConfig, dir: &RunDir) -> Verdict {
    let model = cfg.build_model()?;
    let g = gate(cfg, &model)?;
    if !g.pass {
        return Err(CliError::Refused(g.failures().join("; ")));
    }
    let avg = averaged(cfg, &model)?;
    let setup = study_setup(cfg, Study::Weak)?;
    let f = &cfg.params.functionals;
    let rows = weak_convergence_probe(&model, &avg, &g, &setup, &cfg.params.eps_list, f).map_err(lift)?;
    let mut header: Vec<String> = ["eps", "replicas", "ks_statistic", "ks_p_value"].map(String::from).to_vec();
    for (k, func) in f.iter().enumerate() {
        header.push(format!("diff_{k}_{}", func.label()));
        header.push(format!("se_{k}_{}", func.label()));
    }
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.eps, r.replicas as f64, r.ks_statistic, r.ks_p_value];
            for (d, s) in r.mean_differences.iter().zip(&r.difference_se) {
                v.extend([*d, *s]);
            }
            v
        })
        .collect();
    dir.write_table("weak.csv", &header, &table)?;
    let ks: Vec<f64> = rows.iter().map(|r| r.ks_statistic).collect();
    let diffs_ok = (0..f.len()).all(|k| {
        let d: Vec<f64> = rows.iter().map(|r| r.mean_differences[k]).collect();
        strictly_decreasing(&d) || d.iter().all(|x| *x == 0.0)
    });
    Ok((strictly_decreasing(&ks) && diffs_ok, json!({ "averaged": provenance_label(&avg), "dt": setup.dt })))
}
