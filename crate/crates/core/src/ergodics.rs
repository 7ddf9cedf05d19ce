//! Long-time statistics of the frozen fast process and the averaged
//! coefficients built from them.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::integrator::{pointwise_drift, AveragedField, FrozenPath};
use crate::linalg::{mat_vec, sqrt_spd, Matrix};
use crate::model::{BbarFn, CoefficientMap, ModelSpec};
use crate::parallel::try_map_indexed;
use crate::rng::{replica_seed, study};
use crate::spectral::{norm, FieldCoeffs};
use crate::stats::{linear_fit, EstimatorStats, Welford};

/// Averaging window, burn-in and replica count of a frozen-fast estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageWindow {
    pub window: f64,
    pub burn_in: f64,
    pub dt: f64,
    pub replicas: usize,
}

impl AverageWindow {
    /// Window `window` with the default burn-in `5 / λ_gap`.
    pub fn for_model(model: &ModelSpec, window: f64, dt: f64, replicas: usize) -> Self {
        AverageWindow { window, burn_in: 5.0 / model.fast().spectral_gap(), dt, replicas }
    }

    fn validate(&self) -> Result<(usize, usize)> {
        if !(self.window > 0.0) || !(self.burn_in >= 0.0) || !(self.dt > 0.0) {
            return Err(invalid("need T > 0, T_b >= 0 and Δt > 0"));
        }
        if self.replicas == 0 {
            return Err(invalid("at least one replica is required"));
        }
        Ok((grid_steps(self.burn_in, self.dt), grid_steps(self.window, self.dt).max(1)))
    }
}

fn grid_steps(t: f64, dt: f64) -> usize {
    libm::ceil(t / dt - 1e-9).max(0.0) as usize
}

/// Shifted trapezoid average `φ_0 + mean(φ - φ_0)` of `f` along one frozen
/// path over `[T_b, T_b + T]`; a constant functional comes out exact.
fn path_average<F>(path: &mut FrozenPath<'_>, burn: usize, steps: usize, dim: usize, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&FrozenPath<'_>, &mut [f64]),
{
    for _ in 0..burn {
        path.advance()?;
    }
    let mut first = vec![0.0; dim];
    f(path, &mut first);
    check_values(&first, path.t())?;
    let mut acc = vec![0.0; dim];
    let mut cur = vec![0.0; dim];
    for n in 1..=steps {
        path.advance()?;
        f(path, &mut cur);
        check_values(&cur, path.t())?;
        let w = if n == steps { 0.5 } else { 1.0 };
        for ((a, c), f0) in acc.iter_mut().zip(&cur).zip(&first) {
            *a += w * (c - f0);
        }
    }
    Ok(first.iter().zip(&acc).map(|(f0, a)| f0 + a / steps as f64).collect())
}

fn check_values(v: &[f64], t: f64) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("functional is non-finite at t = {t}")))
    }
}

/// Time average of a vector functional of `v^{x,y}` over replicas. `make`
/// builds one evaluator per replica so evaluators may own scratch space.
#[allow(clippy::too_many_arguments)]
pub fn time_average_with<M, F>(
    model: &ModelSpec,
    x: &[f64],
    y: &[f64],
    w: &AverageWindow,
    seed: u64,
    study_tag: u64,
    dim: usize,
    make: M,
) -> Result<EstimatorStats>
where
    M: Fn() -> F + Sync + Send,
    F: FnMut(&FrozenPath<'_>, &mut [f64]),
{
    let (burn, steps) = w.validate()?;
    let per_replica = try_map_indexed(w.replicas, |r| {
        let mut path = FrozenPath::new(model, x, y, w.dt, replica_seed(seed, study_tag, r))?;
        path_average(&mut path, burn, steps, dim, make())
    })?;
    Ok(EstimatorStats::from_replicas(per_replica, steps as f64 * w.dt, burn as f64 * w.dt, seed))
}

/// `(1/T) ∫_{T_b}^{T_b+T} φ(v^{x,y}(s)) ds` averaged over replicas.
pub fn ergodic_average(
    model: &ModelSpec,
    x: &FieldCoeffs,
    y: &FieldCoeffs,
    phi: &(dyn Fn(&[f64]) -> f64 + Sync),
    w: &AverageWindow,
    seed: u64,
) -> Result<EstimatorStats> {
    time_average_with(model, x, y, w, seed, study::ERGODIC, 1, || {
        |p: &FrozenPath<'_>, out: &mut [f64]| out[0] = phi(&p.v)
    })
}

/// Time-average estimate of `∫ |z|_H^p μ^x(dz)` from `y = 0`.
pub fn invariant_moments(model: &ModelSpec, x: &FieldCoeffs, p: u32, w: &AverageWindow, seed: u64) -> Result<EstimatorStats> {
    if p != 2 && p != 4 {
        return Err(invalid("moment order must be 2 or 4"));
    }
    let y = FieldCoeffs::zeros(model.modes());
    let phi = move |v: &[f64]| {
        let s: f64 = v.iter().map(|c| c * c).sum();
        if p == 2 { s } else { s * s }
    };
    ergodic_average(model, x, &y, &phi, w, seed)
}

/// Exponential fit of `E|v^{x,y1}(t) - v^{x,y2}(t)|_H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingFit {
    pub rate: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub times: Vec<f64>,
    pub mean_distance: Vec<f64>,
}

/// Number of sample times used by the mixing fit.
const MIXING_SAMPLES: usize = 100;

/// Couples two frozen fast paths through identical noise and fits
/// `log E|Δv(t)|` against `t` on `[0, T]`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_mixing(
    model: &ModelSpec,
    x: &FieldCoeffs,
    y1: &FieldCoeffs,
    y2: &FieldCoeffs,
    t_end: f64,
    dt: f64,
    replicas: usize,
    seed: u64,
) -> Result<MixingFit> {
    if replicas == 0 {
        return Err(invalid("at least one replica is required"));
    }
    let steps = grid_steps(t_end, dt);
    if steps < 2 {
        return Err(invalid("mixing window must span at least two steps"));
    }
    let stride = (steps / MIXING_SAMPLES).max(1);
    let samples: Vec<usize> = (0..=steps).step_by(stride).collect();
    let per_replica = try_map_indexed(replicas, |r| {
        let s = replica_seed(seed, study::MIXING, r);
        let mut a = FrozenPath::new(model, x, y1, dt, s)?;
        let mut b = FrozenPath::new(model, x, y2, dt, s)?;
        let mut out = Vec::with_capacity(samples.len());
        let dist = |a: &FrozenPath<'_>, b: &FrozenPath<'_>| {
            libm::sqrt(a.v.iter().zip(&b.v).map(|(p, q)| (p - q) * (p - q)).sum())
        };
        out.push(dist(&a, &b));
        for n in 1..=steps {
            a.advance()?;
            b.advance()?;
            if n % stride == 0 {
                out.push(dist(&a, &b));
            }
        }
        Ok::<_, Error>(out)
    })?;
    let stats = EstimatorStats::from_replicas(per_replica, t_end, 0.0, seed);
    let times: Vec<f64> = samples.iter().map(|n| *n as f64 * dt).collect();
    if let Some(d) = stats.estimate.iter().find(|d| **d < 1e-14) {
        return Err(Error::DegenerateFit(format!("path distance {d:e} below 1e-14 inside the fit window")));
    }
    let logs: Vec<f64> = stats.estimate.iter().map(|d| libm::log(*d)).collect();
    let fit = linear_fit(&times, &logs).ok_or_else(|| Error::DegenerateFit("singular fit".into()))?;
    Ok(MixingFit {
        rate: -fit.slope,
        prefactor: libm::exp(fit.intercept),
        r_squared: fit.r_squared,
        times,
        mean_distance: stats.estimate,
    })
}

/// Evaluator for `P b1(·, x, v)` on a frozen path.
fn drift_functional(model: &ModelSpec) -> impl FnMut(&FrozenPath<'_>, &mut [f64]) + '_ {
    let points = model.transform().points();
    let mut v_grid = vec![0.0; points];
    let mut f_grid = vec![0.0; points];
    move |p: &FrozenPath<'_>, out: &mut [f64]| {
        model.transform().synthesize(&p.v, &mut v_grid);
        pointwise_drift(model, CoefficientMap::B1, p.x_grid(), &v_grid, &mut f_grid, out);
    }
}

/// `B1(x, z)` for a single `z`.
pub fn slow_drift(model: &ModelSpec, x: &[f64], z: &[f64]) -> Vec<f64> {
    let t = model.transform();
    let mut xg = vec![0.0; t.points()];
    let mut zg = vec![0.0; t.points()];
    let mut fg = vec![0.0; t.points()];
    t.synthesize(x, &mut xg);
    t.synthesize(z, &mut zg);
    let mut out = vec![0.0; model.modes()];
    pointwise_drift(model, CoefficientMap::B1, &xg, &zg, &mut fg, &mut out);
    out
}

/// Time average of the mode projections of `B1(x, v^{x,0})`.
pub fn estimate_bbar(model: &ModelSpec, x: &FieldCoeffs, w: &AverageWindow, seed: u64) -> Result<(FieldCoeffs, EstimatorStats)> {
    let mut all = estimate_bbar_batch(model, core::slice::from_ref(x), w, seed)?;
    let stats = all.remove(0);
    Ok((FieldCoeffs::from_vec(stats.estimate.clone()), stats))
}

/// [`estimate_bbar`] at several points with common random numbers: replica
/// `r` drives every point with the same fast noise.
pub fn estimate_bbar_batch(model: &ModelSpec, xs: &[FieldCoeffs], w: &AverageWindow, seed: u64) -> Result<Vec<EstimatorStats>> {
    let n = model.modes();
    if xs.iter().any(|x| x.len() != n) {
        return Err(invalid("anchor has the wrong number of coefficients"));
    }
    let (burn, steps) = w.validate()?;
    let window = steps as f64 * w.dt;
    let burn_in = burn as f64 * w.dt;
    if !model.coefficient(CoefficientMap::B1).dependence().fast() {
        return Ok(xs
            .iter()
            .map(|x| {
                let b = slow_drift(model, x, &vec![0.0; n]);
                EstimatorStats::from_replicas(vec![b; w.replicas], window, burn_in, seed)
            })
            .collect());
    }
    let y = vec![0.0; n];
    let rows = try_map_indexed(w.replicas, |r| {
        let s = replica_seed(seed, study::BBAR, r);
        xs.iter()
            .map(|x| {
                let mut path = FrozenPath::new(model, x, &y, w.dt, s)?;
                path_average(&mut path, burn, steps, n, drift_functional(model))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok((0..xs.len())
        .map(|i| EstimatorStats::from_replicas(rows.iter().map(|row| row[i].clone()).collect(), window, burn_in, seed))
        .collect())
}

/// Estimated diffusion Gram matrix with per-entry standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionEstimate {
    pub s: Matrix,
    pub standard_error: Matrix,
    pub window: f64,
    pub burn_in: f64,
    pub replicas: usize,
    pub seed: u64,
}

/// Galerkin matrix `M_ij = <g e_j, e_i>` of multiplication by the grid
/// values `g`.
pub fn multiplier_matrix(model: &ModelSpec, g: &[f64]) -> Matrix {
    let t = model.transform();
    let n = t.modes();
    let mut m = vec![vec![0.0; n]; n];
    for (l, gl) in g.iter().enumerate() {
        for i in 0..n {
            let a = t.weight() * gl * t.basis_value(l, i);
            for j in i..n {
                m[i][j] += a * t.basis_value(l, j);
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            m[i][j] = m[j][i];
        }
    }
    m
}

fn gram(m: &Matrix, out: &mut [f64]) {
    let n = m.len();
    for h in 0..n {
        for k in 0..n {
            out[h * n + k] = (0..n).map(|i| m[i][h] * m[i][k]).sum();
        }
    }
}

/// Time average of `MᵀM`, where `M` is the Galerkin matrix of multiplication
/// by `g1(·, x, v^{x,0})`. The output is symmetrised.
pub fn estimate_s(model: &ModelSpec, x: &FieldCoeffs, w: &AverageWindow, seed: u64) -> Result<DiffusionEstimate> {
    let n = model.modes();
    if x.len() != n {
        return Err(invalid("anchor has the wrong number of coefficients"));
    }
    let g1 = model.coefficient(CoefficientMap::G1);
    let stats = if let Some(c) = g1.as_constant() {
        let (burn, steps) = w.validate()?;
        let mut flat = vec![0.0; n * n];
        (0..n).for_each(|k| flat[k * n + k] = c * c);
        EstimatorStats::from_replicas(vec![flat; w.replicas], steps as f64 * w.dt, burn as f64 * w.dt, seed)
    } else {
        let y = vec![0.0; n];
        time_average_with(model, x, &y, w, seed, study::DIFFUSION, n * n, || {
            let points = model.transform().points();
            let mut v_grid = vec![0.0; points];
            let mut g = vec![0.0; points];
            move |p: &FrozenPath<'_>, out: &mut [f64]| {
                model.transform().synthesize(&p.v, &mut v_grid);
                model.eval_grid(CoefficientMap::G1, p.x_grid(), &v_grid, &mut g);
                gram(&multiplier_matrix(model, &g), out);
            }
        })?
    };
    let at = |v: &[f64], h: usize, k: usize| v[h * n + k];
    let s = (0..n).map(|h| (0..n).map(|k| 0.5 * (at(&stats.estimate, h, k) + at(&stats.estimate, k, h))).collect()).collect();
    let se = (0..n).map(|h| (0..n).map(|k| at(&stats.standard_error, h, k)).collect()).collect();
    Ok(DiffusionEstimate {
        s,
        standard_error: se,
        window: stats.window,
        burn_in: stats.burn_in,
        replicas: stats.replicas,
        seed,
    })
}

/// Pairwise Lipschitz quotients of the estimated averaged drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzProbe {
    /// `(i, j, quotient, se)` for anchor pairs with `x_i != x_j`.
    pub pairs: Vec<(usize, usize, f64, f64)>,
    pub max_quotient: f64,
}

/// Estimates `|B̄(x_i) - B̄(x_j)| / |x_i - x_j|` over anchor pairs using
/// common random numbers.
pub fn bbar_lipschitz_probe(model: &ModelSpec, anchors: &[FieldCoeffs], w: &AverageWindow, seed: u64) -> Result<LipschitzProbe> {
    let stats = estimate_bbar_batch(model, anchors, w, seed)?;
    let mut pairs = Vec::new();
    for i in 0..anchors.len() {
        for j in i + 1..anchors.len() {
            let d: Vec<f64> = anchors[i].iter().zip(anchors[j].iter()).map(|(a, b)| a - b).collect();
            let dx = norm(&d);
            if dx == 0.0 {
                continue;
            }
            let q: Welford = (0..w.replicas)
                .map(|r| {
                    let (a, b) = (&stats[i].per_replica[r], &stats[j].per_replica[r]);
                    let diff: Vec<f64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
                    norm(&diff) / dx
                })
                .collect();
            pairs.push((i, j, q.mean(), q.standard_error()));
        }
    }
    let max_quotient = pairs.iter().map(|p| p.2).fold(0.0, f64::max);
    Ok(LipschitzProbe { pairs, max_quotient })
}

// ---------------------------------------------------------------------------
// Averaged coefficients
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Closed form supplied by the model.
    Analytic,
    /// The coefficient does not read the fast variable, so averaging is the
    /// identity.
    Exact,
    Estimated,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Analytic => "analytic",
            Provenance::Exact => "exact",
            Provenance::Estimated => "estimated",
        })
    }
}

#[derive(Clone)]
pub enum Bbar {
    Analytic(BbarFn),
    /// `B1(x, 0)`; valid when b1 ignores the fast variable.
    SlowOnly,
    /// First-order model `B̄(a) + J (x - a)` around an anchor `a`.
    Affine { anchor: Vec<f64>, value: Vec<f64>, jacobian: Matrix },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gbar {
    /// `P |g1(·, x)| P`; valid when g1 ignores the fast variable.
    Multiplier,
    /// `S(a)^{1/2}` at the anchor nearest to x.
    Anchored { anchors: Vec<Vec<f64>>, roots: Vec<Matrix> },
}

/// `B̄` and `Ḡ` for one model, with their provenance.
#[derive(Clone)]
pub struct AveragedCoeffs {
    model: ModelSpec,
    pub bbar: Bbar,
    pub gbar: Gbar,
    pub bbar_provenance: Provenance,
    pub gbar_provenance: Provenance,
}

impl fmt::Debug for AveragedCoeffs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AveragedCoeffs")
            .field("model", &self.model.name)
            .field("bbar", &self.bbar_provenance)
            .field("gbar", &self.gbar_provenance)
            .finish()
    }
}

/// Settings for [`AveragedCoeffs::estimated`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationPlan {
    pub window: AverageWindow,
    /// Anchors for `S`; the first one also anchors the affine drift.
    pub anchors: Vec<FieldCoeffs>,
    /// Finite-difference step of the drift Jacobian.
    pub jacobian_step: f64,
    pub seed: u64,
}

impl AveragedCoeffs {
    /// Closed-form coefficients; fails when either one would need estimation.
    pub fn analytic(model: &ModelSpec) -> Result<Self> {
        let (bbar, bp) = if !model.coefficient(CoefficientMap::B1).dependence().fast() {
            (Bbar::SlowOnly, Provenance::Exact)
        } else if let Some(f) = model.analytic_bbar() {
            (Bbar::Analytic(f.clone()), Provenance::Analytic)
        } else {
            return Err(invalid(format!("model {} has no closed-form averaged drift", model.name)));
        };
        if model.g1_depends_on_fast() {
            return Err(invalid("g1 reads the fast variable; Ḡ must be estimated"));
        }
        Ok(AveragedCoeffs { model: model.clone(), bbar, gbar: Gbar::Multiplier, bbar_provenance: bp, gbar_provenance: Provenance::Exact })
    }

    /// Analytic where possible, otherwise estimated from the frozen process.
    pub fn best_available(model: &ModelSpec, plan: &EstimationPlan) -> Result<Self> {
        let mut out = Self::estimated(model, plan, false)?;
        if let Ok(a) = Self::analytic(model) {
            out.bbar = a.bbar;
            out.bbar_provenance = a.bbar_provenance;
        } else if let Some(f) = model.analytic_bbar() {
            out.bbar = Bbar::Analytic(f.clone());
            out.bbar_provenance = Provenance::Analytic;
        }
        Ok(out)
    }

    /// Estimates every fast-dependent coefficient. With `estimate_drift`
    /// false the drift is left at its exact value or marked for replacement.
    pub fn estimated(model: &ModelSpec, plan: &EstimationPlan, estimate_drift: bool) -> Result<Self> {
        let n = model.modes();
        if plan.anchors.is_empty() {
            return Err(invalid("estimation needs at least one anchor"));
        }
        let (bbar, bp) = if !model.coefficient(CoefficientMap::B1).dependence().fast() {
            (Bbar::SlowOnly, Provenance::Exact)
        } else if estimate_drift || model.analytic_bbar().is_none() {
            let h = plan.jacobian_step;
            if !(h > 0.0) {
                return Err(invalid("jacobian_step must be positive"));
            }
            let a = plan.anchors[0].clone();
            let mut pts = vec![a.clone()];
            for j in 0..n {
                let mut p = a.clone();
                p[j] += h;
                pts.push(p);
            }
            let stats = estimate_bbar_batch(model, &pts, &plan.window, plan.seed)?;
            let value = stats[0].estimate.clone();
            let mut jacobian = vec![vec![0.0; n]; n];
            for j in 0..n {
                for i in 0..n {
                    jacobian[i][j] = (stats[j + 1].estimate[i] - value[i]) / h;
                }
            }
            (Bbar::Affine { anchor: a.into_vec(), value, jacobian }, Provenance::Estimated)
        } else {
            (Bbar::Analytic(model.analytic_bbar().unwrap().clone()), Provenance::Analytic)
        };
        let (gbar, gp) = if model.g1_depends_on_fast() {
            let mut roots = Vec::new();
            for a in &plan.anchors {
                roots.push(sqrt_spd(&estimate_s(model, a, &plan.window, plan.seed)?.s)?);
            }
            let anchors = plan.anchors.iter().map(|a| a.to_vec()).collect();
            (Gbar::Anchored { anchors, roots }, Provenance::Estimated)
        } else {
            (Gbar::Multiplier, Provenance::Exact)
        };
        Ok(AveragedCoeffs { model: model.clone(), bbar, gbar, bbar_provenance: bp, gbar_provenance: gp })
    }

    pub fn from_parts(model: &ModelSpec, bbar: Bbar, gbar: Gbar, bp: Provenance, gp: Provenance) -> Self {
        AveragedCoeffs { model: model.clone(), bbar, gbar, bbar_provenance: bp, gbar_provenance: gp }
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn eval_bbar(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.drift(x, &mut out);
        out
    }

    /// `Ḡ(x)` as a dense matrix.
    pub fn gbar_matrix(&self, x: &[f64]) -> Matrix {
        match &self.gbar {
            Gbar::Multiplier => {
                let t = self.model.transform();
                let mut xg = vec![0.0; t.points()];
                t.synthesize(x, &mut xg);
                let zeros = vec![0.0; t.points()];
                let mut g = vec![0.0; t.points()];
                self.model.eval_grid(CoefficientMap::G1, &xg, &zeros, &mut g);
                g.iter_mut().for_each(|v| *v = v.abs());
                multiplier_matrix(&self.model, &g)
            }
            Gbar::Anchored { anchors, roots } => roots[nearest(anchors, x)].clone(),
        }
    }

    /// `S(x) = Ḡ(x)²`.
    pub fn s_matrix(&self, x: &[f64]) -> Matrix {
        let g = self.gbar_matrix(x);
        let n = g.len();
        (0..n).map(|h| (0..n).map(|k| (0..n).map(|i| g[h][i] * g[i][k]).sum()).collect()).collect()
    }
}

fn nearest(anchors: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, a) in anchors.iter().enumerate() {
        let d: f64 = a.iter().zip(x).map(|(p, q)| (p - q) * (p - q)).sum();
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

impl AveragedField for AveragedCoeffs {
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        match &self.bbar {
            Bbar::Analytic(f) => out.copy_from_slice(&f(x)),
            Bbar::SlowOnly => out.copy_from_slice(&slow_drift(&self.model, x, &vec![0.0; x.len()])),
            Bbar::Affine { anchor, value, jacobian } => {
                let d: Vec<f64> = x.iter().zip(anchor).map(|(p, q)| p - q).collect();
                mat_vec(jacobian, &d, out);
                out.iter_mut().zip(value).for_each(|(o, v)| *o += v);
            }
        }
    }

    fn diffusion(&self, x: &[f64], z: &[f64], out: &mut [f64]) {
        match &self.gbar {
            Gbar::Multiplier => {
                let g1 = self.model.coefficient(CoefficientMap::G1);
                if let Some(c) = g1.as_constant() {
                    out.iter_mut().zip(z).for_each(|(o, zi)| *o = c.abs() * zi);
                    return;
                }
                let t = self.model.transform();
                let mut xg = vec![0.0; t.points()];
                let mut zg = vec![0.0; t.points()];
                t.synthesize(x, &mut xg);
                t.synthesize(z, &mut zg);
                for (j, zj) in zg.iter_mut().enumerate() {
                    *zj *= g1.eval(t.node(j), xg[j], 0.0).abs();
                }
                t.analyze(&zg, out);
            }
            Gbar::Anchored { anchors, roots } => mat_vec(&roots[nearest(anchors, x)], z, out),
        }
    }
}

/// Short label for reports.
pub fn provenance_label(a: &AveragedCoeffs) -> String {
    format!("bbar={},gbar={}", a.bbar_provenance, a.gbar_provenance)
}
