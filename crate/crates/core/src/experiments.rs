//! Replica studies: strong and weak averaging error, a priori moment bounds
//! and Hölder increments of the slow component.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ergodics::{AveragedCoeffs, Provenance};
use crate::error::{invalid, Error, Result};
use crate::integrator::{check_stability, step_count, AveragedPath, CoupledPath};
use crate::model::{HypothesisGate, ModelSpec};
use crate::parallel::try_map_indexed;
use crate::rng::{replica_seed, study};
use crate::spectral::{norm, FieldCoeffs};
use crate::stats::{ks_two_sample, linear_fit, median, Welford};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    CommonNoise,
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub replicas: usize,
    pub mean_sup_error: f64,
    pub se: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceResult {
    pub model: String,
    pub coupling: Coupling,
    pub bbar: Provenance,
    pub gbar: Provenance,
    pub dt: f64,
    /// Sorted by decreasing ε.
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceResult {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].mean_sup_error < w[0].mean_sup_error)
    }
}

/// Shared initial data, horizon and step of a replica study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySetup {
    pub x: FieldCoeffs,
    pub y: FieldCoeffs,
    pub t_end: f64,
    /// One step for every ε; it must satisfy the stability guard for the
    /// smallest ε.
    pub dt: f64,
    pub replicas: usize,
    pub seed: u64,
}

impl StudySetup {
    fn validate(&self, model: &ModelSpec, eps_list: &[f64]) -> Result<usize> {
        let n = model.modes();
        if self.x.len() != n || self.y.len() != n {
            return Err(invalid(format!("initial data must have {n} coefficients")));
        }
        if self.replicas == 0 {
            return Err(invalid("at least one replica is required"));
        }
        if eps_list.is_empty() {
            return Err(invalid("ε list is empty"));
        }
        if eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("ε list must be strictly decreasing"));
        }
        for &eps in eps_list {
            check_stability(self.dt, eps, false)?;
        }
        step_count(self.t_end, self.dt)
    }
}

fn require_gate(gate: &HypothesisGate) -> Result<()> {
    if gate.pass {
        Ok(())
    } else {
        Err(Error::HypothesisFailed(gate.failures().join("; ")))
    }
}

/// `E sup_{t<=T} |u_ε(t) - ū(t)|_H` under common-noise coupling. Replica `r`
/// simulates `ū` once and reuses it, and its slow increments, for every ε.
pub fn convergence_study(
    model: &ModelSpec,
    avg: &AveragedCoeffs,
    gate: &HypothesisGate,
    setup: &StudySetup,
    eps_list: &[f64],
) -> Result<ConvergenceResult> {
    require_gate(gate)?;
    if model.g1_depends_on_fast() {
        return Err(Error::HypothesisFailed(
            "strong averaging needs a slow diffusion independent of the fast variable".into(),
        ));
    }
    let steps = setup.validate(model, eps_list)?;
    let errors = try_map_indexed(setup.replicas, |r| {
        let seed = replica_seed(setup.seed, study::CONVERGENCE, r);
        let mut bar = AveragedPath::new(avg, model.slow(), &setup.x, setup.dt, seed)?;
        let mut ubar = Vec::with_capacity(steps);
        for _ in 0..steps {
            bar.advance()?;
            ubar.push(bar.u.clone());
        }
        eps_list
            .iter()
            .map(|&eps| {
                let mut path = CoupledPath::new(model, &setup.x, &setup.y, eps, setup.dt, false, seed)?;
                let mut sup = 0.0f64;
                for target in &ubar {
                    path.advance()?;
                    let d: f64 = path.u.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
                    sup = sup.max(libm::sqrt(d));
                }
                Ok(sup)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let rows = eps_list
        .iter()
        .enumerate()
        .map(|(i, &eps)| {
            let col: Vec<f64> = errors.iter().map(|row| row[i]).collect();
            let w: Welford = col.iter().copied().collect();
            ConvergenceRow { eps, replicas: setup.replicas, mean_sup_error: w.mean(), se: w.standard_error(), median: median(&col) }
        })
        .collect();
    Ok(ConvergenceResult {
        model: model.name.clone(),
        coupling: Coupling::CommonNoise,
        bbar: avg.bbar_provenance,
        gbar: avg.gbar_provenance,
        dt: setup.dt,
        rows,
    })
}

/// Bounded test functionals of `u(T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunctional {
    /// `<u, e_1>` clipped to `[-clip, clip]`.
    Mode1Clipped { clip: f64 },
    /// `min(|u|_H, clip)`.
    NormClipped { clip: f64 },
    Constant { value: f64 },
}

impl TestFunctional {
    pub fn eval(&self, u: &[f64]) -> f64 {
        match *self {
            TestFunctional::Mode1Clipped { clip } => u[0].clamp(-clip, clip),
            TestFunctional::NormClipped { clip } => norm(u).min(clip),
            TestFunctional::Constant { value } => value,
        }
    }

    pub fn label(&self) -> String {
        match self {
            TestFunctional::Mode1Clipped { .. } => "mode1_clipped".into(),
            TestFunctional::NormClipped { .. } => "norm_clipped".into(),
            TestFunctional::Constant { .. } => "constant".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakRow {
    pub eps: f64,
    pub replicas: usize,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    /// `|E f(u_ε(T)) - E f(ū(T))|` per functional.
    pub mean_differences: Vec<f64>,
    /// Combined standard error of each difference.
    pub difference_se: Vec<f64>,
}

/// Distribution distance between `u_ε(T)` and `ū(T)` driven by independent
/// noise. The averaged sample is drawn once and shared by every ε.
pub fn weak_convergence_probe(
    model: &ModelSpec,
    avg: &AveragedCoeffs,
    gate: &HypothesisGate,
    setup: &StudySetup,
    eps_list: &[f64],
    functionals: &[TestFunctional],
) -> Result<Vec<WeakRow>> {
    require_gate(gate)?;
    let steps = setup.validate(model, eps_list)?;
    let averaged = try_map_indexed(setup.replicas, |r| {
        let seed = replica_seed(setup.seed, study::AVERAGED, r);
        let mut bar = AveragedPath::new(avg, model.slow(), &setup.x, setup.dt, seed)?;
        for _ in 0..steps {
            bar.advance()?;
        }
        Ok::<_, Error>(bar.u)
    })?;
    let mode1 = |s: &[Vec<f64>]| s.iter().map(|u| u[0]).collect::<Vec<f64>>();
    let bar_mode1 = mode1(&averaged);
    let bar_stats: Vec<Welford> = functionals.iter().map(|f| averaged.iter().map(|u| f.eval(u)).collect()).collect();
    eps_list
        .iter()
        .map(|&eps| {
            let finals = try_map_indexed(setup.replicas, |r| {
                let seed = replica_seed(setup.seed, study::WEAK, r);
                let mut path = CoupledPath::new(model, &setup.x, &setup.y, eps, setup.dt, false, seed)?;
                for _ in 0..steps {
                    path.advance()?;
                }
                Ok::<_, Error>(path.u)
            })?;
            let ks = ks_two_sample(&mode1(&finals), &bar_mode1);
            let (mut diffs, mut ses) = (Vec::new(), Vec::new());
            for (f, b) in functionals.iter().zip(&bar_stats) {
                let w: Welford = finals.iter().map(|u| f.eval(u)).collect();
                diffs.push((w.mean() - b.mean()).abs());
                let (sa, sb) = (w.standard_error(), b.standard_error());
                ses.push(libm::sqrt(sa * sa + sb * sb));
            }
            Ok(WeakRow {
                eps,
                replicas: setup.replicas,
                ks_statistic: ks.statistic,
                ks_p_value: ks.p_value,
                mean_differences: diffs,
                difference_se: ses,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundQuantity {
    /// `E sup_t |u_ε(t)|^p`.
    SlowSupMoment,
    /// `∫_0^T E|v_ε(t)|^p dt`.
    FastIntegralMoment,
    /// `sup_t E|v_ε(t)|²`.
    FastSecondMoment,
    /// Fitted exponent of `E|u_ε(t+h) - u_ε(t)|²` in `h`.
    HolderIncrement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub eps: f64,
    pub p: u32,
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub quantity: BoundQuantity,
    pub rows: Vec<BoundRow>,
    /// Max over min across ε (moments) or max minus min (exponents).
    pub spread: f64,
    pub threshold: f64,
    pub finite: bool,
    pub pass: bool,
}

/// Largest admissible max/min ratio of a moment across ε.
pub const MOMENT_RATIO_LIMIT: f64 = 5.0;
/// Largest admissible spread of the Hölder exponent across ε.
pub const HOLDER_SPREAD_LIMIT: f64 = 0.3;

fn ratio(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        1.0
    } else {
        max / min
    }
}

/// Moment bounds of the coupled system for each ε and p ∈ {2, 4}.
pub fn moment_bound_study(model: &ModelSpec, setup: &StudySetup, eps_list: &[f64], p_list: &[u32]) -> Result<Vec<BoundReport>> {
    if p_list.is_empty() || p_list.iter().any(|p| *p != 2 && *p != 4) {
        return Err(invalid("moment orders must be 2 or 4"));
    }
    let steps = setup.validate(model, eps_list)?;
    // Per replica and ε: [sup|u|^p for p..., ∫|v|^p for p..., |v(t_n)|² for n...]
    let np = p_list.len();
    let per_eps: Vec<Vec<Vec<f64>>> = eps_list
        .iter()
        .map(|&eps| {
            try_map_indexed(setup.replicas, |r| {
                let seed = replica_seed(setup.seed, study::MOMENTS, r);
                let mut path = CoupledPath::new(model, &setup.x, &setup.y, eps, setup.dt, false, seed)?;
                let mut out = vec![0.0; 2 * np + steps + 1];
                let record = |u: &[f64], v: &[f64], n: usize, out: &mut [f64]| {
                    let (nu, nv) = (norm(u), norm(v));
                    for (i, &p) in p_list.iter().enumerate() {
                        out[i] = out[i].max(libm::pow(nu, p as f64));
                        let w = if n == 0 || n == steps { 0.5 } else { 1.0 };
                        out[np + i] += w * setup.dt * libm::pow(nv, p as f64);
                    }
                    out[2 * np + n] = nv * nv;
                };
                record(&path.u, &path.v, 0, &mut out);
                for n in 1..=steps {
                    path.advance()?;
                    record(&path.u, &path.v, n, &mut out);
                }
                Ok::<_, Error>(out)
            })
        })
        .collect::<Result<_>>()?;
    let column = |e: usize, i: usize| -> Welford { per_eps[e].iter().map(|row| row[i]).collect() };
    let mut reports = Vec::new();
    for (quantity, offset) in [(BoundQuantity::SlowSupMoment, 0), (BoundQuantity::FastIntegralMoment, np)] {
        for (i, &p) in p_list.iter().enumerate() {
            let rows: Vec<BoundRow> = eps_list
                .iter()
                .enumerate()
                .map(|(e, &eps)| {
                    let w = column(e, offset + i);
                    BoundRow { eps, p, value: w.mean(), se: w.standard_error() }
                })
                .collect();
            reports.push(moment_report(quantity, rows));
        }
    }
    let rows: Vec<BoundRow> = eps_list
        .iter()
        .enumerate()
        .map(|(e, &eps)| {
            let (value, se) = (0..=steps)
                .map(|n| {
                    let w = column(e, 2 * np + n);
                    (w.mean(), w.standard_error())
                })
                .fold((f64::NEG_INFINITY, 0.0), |acc, cur| if cur.0 > acc.0 { cur } else { acc });
            BoundRow { eps, p: 2, value, se }
        })
        .collect();
    reports.push(moment_report(BoundQuantity::FastSecondMoment, rows));
    Ok(reports)
}

fn moment_report(quantity: BoundQuantity, rows: Vec<BoundRow>) -> BoundReport {
    let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let finite = values.iter().all(|v| v.is_finite());
    let spread = ratio(&values);
    BoundReport { quantity, rows, spread, threshold: MOMENT_RATIO_LIMIT, finite, pass: finite && spread <= MOMENT_RATIO_LIMIT }
}

/// Per-ε Hölder increment measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderRow {
    pub eps: f64,
    pub h: Vec<f64>,
    /// `E|u_ε(T/2 + h) - u_ε(T/2)|²_H`.
    pub increment: Vec<f64>,
    pub se: Vec<f64>,
    /// Fitted log-log slope `2β̂`.
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderStudy {
    pub rows: Vec<HolderRow>,
    pub report: BoundReport,
}

/// Fits `log E|u_ε(t+h) - u_ε(t)|² ~ 2β̂ log h` at `t = T/2` for each ε.
pub fn holder_increment_study(model: &ModelSpec, setup: &StudySetup, eps_list: &[f64], h_list: &[f64]) -> Result<HolderStudy> {
    setup.validate(model, eps_list)?;
    if h_list.len() < 2 || h_list.iter().any(|h| !(*h > 0.0 && *h <= 1.0)) {
        return Err(invalid("need at least two increments in (0, 1]"));
    }
    let t0 = 0.5 * setup.t_end;
    let n0 = step_count(t0, setup.dt)?;
    let offsets = h_list.iter().map(|h| step_count(*h, setup.dt)).collect::<Result<Vec<_>>>()?;
    let last = n0 + offsets.iter().copied().max().unwrap_or(0);
    if last as f64 * setup.dt > setup.t_end * (1.0 + 1e-12) {
        return Err(invalid("T/2 + max h exceeds the horizon"));
    }
    let mut rows = Vec::new();
    for &eps in eps_list {
        let incs = try_map_indexed(setup.replicas, |r| {
            let seed = replica_seed(setup.seed, study::HOLDER, r);
            let mut path = CoupledPath::new(model, &setup.x, &setup.y, eps, setup.dt, false, seed)?;
            let mut base = Vec::new();
            let mut out = vec![0.0; offsets.len()];
            for n in 0..=last {
                if n == n0 {
                    base = path.u.clone();
                }
                for (o, &m) in out.iter_mut().zip(&offsets) {
                    if n == n0 + m {
                        *o = path.u.iter().zip(&base).map(|(a, b)| (a - b) * (a - b)).sum();
                    }
                }
                if n < last {
                    path.advance()?;
                }
            }
            Ok::<_, Error>(out)
        })?;
        let stats: Vec<Welford> = (0..offsets.len()).map(|i| incs.iter().map(|row| row[i]).collect()).collect();
        let increment: Vec<f64> = stats.iter().map(Welford::mean).collect();
        let lx: Vec<f64> = h_list.iter().map(|h| libm::log(*h)).collect();
        let ly: Vec<f64> = increment.iter().map(|v| libm::log(*v)).collect();
        let exponent = linear_fit(&lx, &ly).map_or(f64::NAN, |f| f.slope);
        rows.push(HolderRow {
            eps,
            h: h_list.to_vec(),
            se: stats.iter().map(Welford::standard_error).collect(),
            increment,
            exponent,
        });
    }
    let exps: Vec<f64> = rows.iter().map(|r| r.exponent).collect();
    let finite = exps.iter().all(|e| e.is_finite());
    let spread = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max) - exps.iter().copied().fold(f64::INFINITY, f64::min);
    let report = BoundReport {
        quantity: BoundQuantity::HolderIncrement,
        rows: rows.iter().map(|r| BoundRow { eps: r.eps, p: 2, value: r.exponent, se: 0.0 }).collect(),
        spread,
        threshold: HOLDER_SPREAD_LIMIT,
        finite,
        pass: finite && exps.iter().all(|e| *e > 0.0) && spread <= HOLDER_SPREAD_LIMIT,
    };
    Ok(HolderStudy { rows, report })
}
