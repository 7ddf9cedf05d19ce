//! Time partition, auxiliary fast process, remainder and the
//! Kolmogorov-operator gap between the slow and averaged dynamics.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::ergodics::{multiplier_matrix, slow_drift, AveragedCoeffs};
use crate::error::{invalid, Result};
use crate::integrator::{
    fill_normals, step_count, AveragedField, CoupledPath, Stepper, Trajectory,
};
use crate::linalg::Matrix;
use crate::model::{CoefficientMap, ModelSpec};
use crate::parallel::try_map_indexed;
use crate::rng::{replica_seed, study, StreamSeed, FAST_NOISE};
use crate::spectral::{dot, FieldCoeffs};
use crate::stats::{EstimatorStats, Welford};

/// Default exponents of the partition scale `ζ_ε = (κ2 log(1/ε))^κ1`.
pub const DEFAULT_KAPPA1: f64 = 0.5;
pub const DEFAULT_KAPPA2: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub eps: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    /// Block length `δ_ε = ε ζ_ε`.
    pub delta: f64,
    /// `ζ_ε = δ_ε / ε`.
    pub zeta: f64,
    pub intervals: usize,
}

/// Partition of `[0, T]` into blocks of length `δ_ε = ε (log ε^{-κ2})^{κ1}`.
pub fn build_partition(eps: f64, kappa1: f64, kappa2: f64, t_end: f64) -> Result<PartitionPlan> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid("ε must lie in (0, 1)"));
    }
    if !(kappa1 > 0.0) || !(kappa2 > 0.0) {
        return Err(invalid("κ1 and κ2 must be positive"));
    }
    let zeta = libm::pow(kappa2 * libm::log(1.0 / eps), kappa1);
    let delta = eps * zeta;
    if delta >= t_end {
        return Err(invalid(format!("block length δ = {delta} is not below T = {t_end}; ε is too large")));
    }
    Ok(PartitionPlan { eps, kappa1, kappa2, delta, zeta, intervals: libm::ceil(t_end / delta) as usize })
}

impl PartitionPlan {
    /// Largest step `<= max_dt` dividing `δ_ε` evenly.
    pub fn aligned_dt(&self, max_dt: f64) -> f64 {
        self.delta / libm::ceil(self.delta / max_dt - 1e-12)
    }

    /// Steps per block for the step `dt`; `dt` must divide `δ_ε`.
    pub fn steps_per_block(&self, dt: f64) -> Result<usize> {
        let m = libm::round(self.delta / dt);
        if m < 1.0 || (m * dt - self.delta).abs() > 1e-9 * self.delta.max(1.0) {
            return Err(invalid(format!("step {dt} does not divide the block length {}", self.delta)));
        }
        Ok(m as usize)
    }
}

/// Fast process `v̂_ε`: on each block the slow argument is frozen at its value
/// at the block start and `v̂_ε` restarts from `v_ε`, driven by the same fast
/// increments as the coupled run.
pub fn simulate_auxiliary(model: &ModelSpec, coupled: &Trajectory, plan: &PartitionPlan) -> Result<Trajectory> {
    let v = coupled.v.as_ref().ok_or_else(|| invalid("coupled trajectory has no fast component"))?;
    let block = plan.steps_per_block(coupled.dt)?;
    let mut stepper = Stepper::coupled(model, coupled.dt, plan.eps, true)?;
    let mut rng = coupled.stream.child(FAST_NOISE).rng();
    let points = model.transform().points();
    let mut x_grid = vec![0.0; points];
    let mut draw = vec![0.0; model.modes()];
    let mut vhat = v[0].to_vec();
    let mut out = Vec::with_capacity(v.len());
    out.push(v[0].clone());
    for n in 0..v.len() - 1 {
        if n % block == 0 {
            vhat.copy_from_slice(&v[n]);
            stepper.grid_of(&coupled.u[n], &mut x_grid);
        }
        fill_normals(&mut rng, &mut draw);
        stepper.advance_fast_frozen(&x_grid, &mut vhat, &draw);
        out.push(FieldCoeffs::from_vec(vhat.clone()));
    }
    Ok(Trajectory { dt: coupled.dt, times: coupled.times.clone(), u: coupled.u.clone(), v: Some(out), stream: coupled.stream })
}

/// `R_ε(t) = ∫_0^t <B1(u_ε, v_ε) - B̄(u_ε), h> ds` by cumulative trapezoid.
pub fn remainder_path(model: &ModelSpec, coupled: &Trajectory, bbar: &dyn AveragedField, h: &FieldCoeffs) -> Result<Vec<f64>> {
    let v = coupled.v.as_ref().ok_or_else(|| invalid("coupled trajectory has no fast component"))?;
    if h.len() != model.modes() {
        return Err(invalid("h must lie in the span of the truncated basis"));
    }
    let mut tracker = RemainderTracker::new(model, bbar, h);
    let mut out = Vec::with_capacity(v.len());
    for (n, (u, v)) in coupled.u.iter().zip(v).enumerate() {
        tracker.push(u, v, coupled.dt, n == 0);
        out.push(tracker.value);
    }
    if out.iter().any(|x| !x.is_finite()) {
        return Err(crate::Error::NonFinite("remainder is non-finite".into()));
    }
    Ok(out)
}

/// Incremental trapezoid for `R_ε` along a running path.
struct RemainderTracker<'a> {
    model: &'a ModelSpec,
    bbar: &'a dyn AveragedField,
    h: &'a [f64],
    avg: Vec<f64>,
    prev: f64,
    value: f64,
}

impl<'a> RemainderTracker<'a> {
    fn new(model: &'a ModelSpec, bbar: &'a dyn AveragedField, h: &'a [f64]) -> Self {
        RemainderTracker { model, bbar, h, avg: vec![0.0; h.len()], prev: 0.0, value: 0.0 }
    }

    fn integrand(&mut self, u: &[f64], v: &[f64]) -> f64 {
        let b = slow_drift(self.model, u, v);
        self.bbar.drift(u, &mut self.avg);
        b.iter().zip(&self.avg).zip(self.h).map(|((p, q), h)| (p - q) * h).sum()
    }

    fn push(&mut self, u: &[f64], v: &[f64], dt: f64, first: bool) {
        let f = self.integrand(u, v);
        if !first {
            self.value += 0.5 * dt * (self.prev + f);
        }
        self.prev = f;
    }
}

// ---------------------------------------------------------------------------
// Cylindrical test functions
// ---------------------------------------------------------------------------

/// A smooth `f: R^k → R` with its first and second derivatives.
pub trait SmoothFn: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, s: &[f64]) -> f64;
    fn gradient(&self, s: &[f64], out: &mut [f64]);
    /// Row-major `k x k` Hessian.
    fn hessian(&self, s: &[f64], out: &mut [f64]);
}

/// `f(s) = sᵀ A s + bᵀ s + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    pub a: Matrix,
    pub b: Vec<f64>,
    pub c: f64,
}

impl Quadratic {
    /// `f(s) = s²` on one coordinate.
    pub fn square() -> Self {
        Quadratic { a: vec![vec![1.0]], b: vec![0.0], c: 0.0 }
    }
}

impl SmoothFn for Quadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }
    fn value(&self, s: &[f64]) -> f64 {
        let quad: f64 = self.a.iter().zip(s).map(|(row, si)| si * dot(row, s)).sum();
        quad + dot(&self.b, s) + self.c
    }
    fn gradient(&self, s: &[f64], out: &mut [f64]) {
        let k = self.dim();
        for i in 0..k {
            out[i] = self.b[i] + (0..k).map(|j| (self.a[i][j] + self.a[j][i]) * s[j]).sum::<f64>();
        }
    }
    fn hessian(&self, _s: &[f64], out: &mut [f64]) {
        let k = self.dim();
        for i in 0..k {
            for j in 0..k {
                out[i * k + j] = self.a[i][j] + self.a[j][i];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub dim: usize,
    pub c: f64,
}

impl SmoothFn for Constant {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _s: &[f64]) -> f64 {
        self.c
    }
    fn gradient(&self, _s: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
    fn hessian(&self, _s: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
}

/// `f(s) = exp(-|s - center|² / (2 width²))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub center: Vec<f64>,
    pub width: f64,
}

impl SmoothFn for GaussianBump {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, s: &[f64]) -> f64 {
        let r2: f64 = s.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        libm::exp(-0.5 * r2 / (self.width * self.width))
    }
    fn gradient(&self, s: &[f64], out: &mut [f64]) {
        let f = self.value(s);
        let w2 = self.width * self.width;
        for (o, (a, c)) in out.iter_mut().zip(s.iter().zip(&self.center)) {
            *o = -f * (a - c) / w2;
        }
    }
    fn hessian(&self, s: &[f64], out: &mut [f64]) {
        let k = self.dim();
        let f = self.value(s);
        let w2 = self.width * self.width;
        for i in 0..k {
            for j in 0..k {
                let di = s[i] - self.center[i];
                let dj = s[j] - self.center[j];
                let delta = if i == j { 1.0 } else { 0.0 };
                out[i * k + j] = f * (di * dj / (w2 * w2) - delta / w2);
            }
        }
    }
}

/// `φ(x) = f(<x, P a_1>, ..., <x, P a_k>)` with `P` the projection on the
/// first `n_proj` modes.
#[derive(Clone)]
pub struct CylindricalFn {
    f: Arc<dyn SmoothFn>,
    /// Projected anchors `P a_i`, full basis length.
    anchors: Vec<Vec<f64>>,
    n_proj: usize,
}

impl fmt::Debug for CylindricalFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CylindricalFn").field("anchors", &self.anchors).field("n_proj", &self.n_proj).finish()
    }
}

/// Relative tolerance of the finite-difference derivative check.
pub const DERIVATIVE_TOLERANCE: f64 = 1e-4;

impl CylindricalFn {
    /// Checks the supplied derivatives against central differences at a few
    /// probe points before accepting `f`.
    pub fn new(f: Arc<dyn SmoothFn>, anchors: Vec<FieldCoeffs>, n_proj: usize) -> Result<Self> {
        let k = f.dim();
        if anchors.len() != k || k == 0 {
            return Err(invalid("need one anchor per argument of f"));
        }
        let modes = anchors[0].len();
        if anchors.iter().any(|a| a.len() != modes) {
            return Err(invalid("anchors must share the basis size"));
        }
        if n_proj == 0 || n_proj > modes {
            return Err(invalid("projection order must lie in 1..=N"));
        }
        let anchors = anchors
            .into_iter()
            .map(|a| a.iter().enumerate().map(|(i, c)| if i < n_proj { *c } else { 0.0 }).collect())
            .collect();
        let phi = CylindricalFn { f, anchors, n_proj };
        phi.check_derivatives()?;
        Ok(phi)
    }

    /// `⟨x, e_mode⟩²`.
    pub fn mode_square(modes: usize, mode: usize) -> Result<Self> {
        Self::new(Arc::new(Quadratic::square()), vec![FieldCoeffs::unit(modes, mode)], modes)
    }

    pub fn modes(&self) -> usize {
        self.anchors[0].len()
    }

    pub fn n_proj(&self) -> usize {
        self.n_proj
    }

    pub fn smooth(&self) -> &dyn SmoothFn {
        &*self.f
    }

    pub fn projected_anchors(&self) -> &[Vec<f64>] {
        &self.anchors
    }

    pub fn arguments(&self, x: &[f64]) -> Vec<f64> {
        self.anchors.iter().map(|a| dot(a, x)).collect()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.f.value(&self.arguments(x))
    }

    fn check_derivatives(&self) -> Result<()> {
        let k = self.f.dim();
        let probes: [f64; 3] = [0.0, 0.37, -0.81];
        let h = 1e-4;
        for &p in &probes {
            let s: Vec<f64> = (0..k).map(|i| p + 0.1 * i as f64).collect();
            let mut g = vec![0.0; k];
            let mut hess = vec![0.0; k * k];
            self.f.gradient(&s, &mut g);
            self.f.hessian(&s, &mut hess);
            let (fd_g, fd_h) = fd_derivatives(&*self.f, &s, h);
            let scale = 1.0 + g.iter().chain(&hess).fold(0.0f64, |m, v| m.max(v.abs()));
            let err = g.iter().zip(&fd_g).chain(hess.iter().zip(&fd_h)).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if err > DERIVATIVE_TOLERANCE * scale {
                return Err(invalid(format!("derivatives of f disagree with finite differences by {err:e}")));
            }
        }
        Ok(())
    }
}

/// Central-difference gradient and Hessian of `f` at `s` with step `h`.
pub fn fd_derivatives(f: &dyn SmoothFn, s: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let k = s.len();
    let at = |d: &[(usize, f64)]| {
        let mut p = s.to_vec();
        for &(i, v) in d {
            p[i] += v;
        }
        f.value(&p)
    };
    let g = (0..k).map(|i| (at(&[(i, h)]) - at(&[(i, -h)])) / (2.0 * h)).collect();
    let mut hess = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            hess[i * k + j] = if i == j {
                (at(&[(i, h)]) - 2.0 * f.value(s) + at(&[(i, -h)])) / (h * h)
            } else {
                (at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)]) + at(&[(i, -h), (j, -h)]))
                    / (4.0 * h * h)
            };
        }
    }
    (g, hess)
}

/// Derivatives of `f` used by the generator evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Derivatives {
    Exact,
    /// Central differences with the given step, for cross-checks.
    FiniteDifference(f64),
}

fn derivatives(phi: &CylindricalFn, s: &[f64], how: Derivatives) -> (Vec<f64>, Vec<f64>) {
    match how {
        Derivatives::Exact => {
            let k = s.len();
            let mut g = vec![0.0; k];
            let mut h = vec![0.0; k * k];
            phi.f.gradient(s, &mut g);
            phi.f.hessian(s, &mut h);
            (g, h)
        }
        Derivatives::FiniteDifference(h) => fd_derivatives(&*phi.f, s, h),
    }
}

/// Generator of a cylindrical function given the drift `b`, the diffusion
/// matrix `G` (acting on coefficients) and the noise eigenvalues.
fn generator(phi: &CylindricalFn, model: &ModelSpec, x: &[f64], b: &[f64], g: &Matrix, how: Derivatives) -> f64 {
    let s = phi.arguments(x);
    let (grad, hess) = derivatives(phi, &s, how);
    let k = s.len();
    let lambdas = model.slow().lambdas();
    let alphas = model.slow().alphas();
    // G Q P a_i
    let gq: Vec<Vec<f64>> = phi
        .anchors
        .iter()
        .map(|a| {
            let qa: Vec<f64> = a.iter().zip(lambdas).map(|(c, l)| c * l).collect();
            g.iter().map(|row| dot(row, &qa)).collect()
        })
        .collect();
    let mut trace = 0.0;
    for i in 0..k {
        for j in 0..k {
            trace += hess[i * k + j] * dot(&gq[i], &gq[j]);
        }
    }
    let mut drift = 0.0;
    for (i, a) in phi.anchors.iter().enumerate() {
        let ax: f64 = a.iter().zip(x).zip(alphas).map(|((ai, xi), al)| -al * ai * xi).sum();
        drift += grad[i] * (ax + dot(b, a));
    }
    0.5 * trace + drift
}

fn check_phi(phi: &CylindricalFn, model: &ModelSpec, x: &[f64]) -> Result<()> {
    if phi.modes() != model.modes() || x.len() != model.modes() {
        return Err(invalid("test function and state must match the basis size"));
    }
    Ok(())
}

/// Galerkin matrix of `g1(·, x, y)`.
fn slow_diffusion_matrix(model: &ModelSpec, x: &[f64], y: &[f64]) -> Matrix {
    let t = model.transform();
    let mut xg = vec![0.0; t.points()];
    let mut yg = vec![0.0; t.points()];
    let mut g = vec![0.0; t.points()];
    t.synthesize(x, &mut xg);
    t.synthesize(y, &mut yg);
    model.eval_grid(CoefficientMap::G1, &xg, &yg, &mut g);
    multiplier_matrix(model, &g)
}

/// Slow generator with frozen fast component,
/// `½ Σ D²f <G1 Q1 P a_i, G1 Q1 P a_j> + Σ D f (<x, A1 P a_i> + <B1(x, y), P a_i>)`.
pub fn eval_l_sl(phi: &CylindricalFn, model: &ModelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    eval_l_sl_with(phi, model, x, y, Derivatives::Exact)
}

pub fn eval_l_sl_with(phi: &CylindricalFn, model: &ModelSpec, x: &[f64], y: &[f64], how: Derivatives) -> Result<f64> {
    check_phi(phi, model, x)?;
    let b = slow_drift(model, x, y);
    let g = slow_diffusion_matrix(model, x, y);
    Ok(generator(phi, model, x, &b, &g, how))
}

/// Averaged generator, the same expression with `B̄(x)` and `Ḡ(x)`.
pub fn eval_l_av(phi: &CylindricalFn, avg: &AveragedCoeffs, x: &[f64]) -> Result<f64> {
    eval_l_av_with(phi, avg, x, Derivatives::Exact)
}

pub fn eval_l_av_with(phi: &CylindricalFn, avg: &AveragedCoeffs, x: &[f64], how: Derivatives) -> Result<f64> {
    let model = avg.model();
    check_phi(phi, model, x)?;
    let b = avg.eval_bbar(x);
    let g = avg.gbar_matrix(x);
    Ok(generator(phi, model, x, &b, &g, how))
}

// ---------------------------------------------------------------------------
// Monte Carlo studies
// ---------------------------------------------------------------------------

/// Replica settings shared by the remainder and gap studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledSetup {
    pub x: FieldCoeffs,
    pub y: FieldCoeffs,
    pub t_end: f64,
    pub dt: f64,
    pub kappa1: f64,
    pub kappa2: f64,
}

/// One row of a remainder or gap study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionRow {
    pub eps: f64,
    pub delta_eps: f64,
    pub zeta_eps: f64,
    pub estimate: f64,
    pub se: f64,
    pub replicas: usize,
}

/// `E sup_{t<=T} |R_ε(t)|` for each ε. Replica `r` uses the same seed for
/// every ε.
pub fn remainder_study(
    model: &ModelSpec,
    avg: &dyn AveragedField,
    setup: &CoupledSetup,
    eps_list: &[f64],
    h: &FieldCoeffs,
    replicas: usize,
    seed: u64,
) -> Result<Vec<PartitionRow>> {
    if replicas == 0 {
        return Err(invalid("at least one replica is required"));
    }
    if h.len() != model.modes() {
        return Err(invalid("h must lie in the span of the truncated basis"));
    }
    let steps = step_count(setup.t_end, setup.dt)?;
    eps_list
        .iter()
        .map(|&eps| {
            let plan = build_partition(eps, setup.kappa1, setup.kappa2, setup.t_end)?;
            let sups = try_map_indexed(replicas, |r| {
                let mut path = CoupledPath::new(model, &setup.x, &setup.y, eps, setup.dt, false, replica_seed(seed, study::REMAINDER, r))?;
                let mut tr = RemainderTracker::new(model, avg, h);
                tr.push(&path.u, &path.v, setup.dt, true);
                let mut sup = 0.0f64;
                for _ in 0..steps {
                    path.advance()?;
                    tr.push(&path.u, &path.v, setup.dt, false);
                    sup = sup.max(tr.value.abs());
                }
                Ok::<_, crate::Error>(sup)
            })?;
            let w: Welford = sups.into_iter().collect();
            Ok(PartitionRow {
                eps,
                delta_eps: plan.delta,
                zeta_eps: plan.zeta,
                estimate: w.mean(),
                se: w.standard_error(),
                replicas,
            })
        })
        .collect()
}

/// Minimum replica counts of the nested gap estimator.
pub const MIN_GAP_REPLICAS: usize = 10;

/// Nested Monte Carlo estimate of
/// `E |∫_{t1}^{t2} E[L_sl φ(u_ε, v_ε) - L_av φ(u_ε) | F_{t1}] dr|`.
/// Outer replicas fix the path up to `t1`; `inner` branches continue it with
/// fresh noise.
#[allow(clippy::too_many_arguments)]
pub fn kolmogorov_gap(
    model: &ModelSpec,
    avg: &AveragedCoeffs,
    phi: &CylindricalFn,
    eps: f64,
    setup: &CoupledSetup,
    t1: f64,
    t2: f64,
    outer: usize,
    inner: usize,
    seed: u64,
) -> Result<EstimatorStats> {
    if outer < MIN_GAP_REPLICAS || inner < MIN_GAP_REPLICAS {
        return Err(invalid(format!("gap estimator needs at least {MIN_GAP_REPLICAS} outer and inner replicas")));
    }
    if !(0.0 <= t1 && t1 <= t2 && t2 <= setup.t_end) {
        return Err(invalid("need 0 <= t1 <= t2 <= T"));
    }
    check_phi(phi, model, &setup.x)?;
    let n1 = step_count(t1, setup.dt)?;
    let n2 = step_count(t2, setup.dt)?;
    let dt = setup.dt;
    let diff = |u: &[f64], v: &[f64]| -> Result<f64> { Ok(eval_l_sl(phi, model, u, v)? - eval_l_av(phi, avg, u)?) };
    let per_outer = try_map_indexed(outer, |r| {
        let root = replica_seed(seed, study::GAP, r);
        let mut path = CoupledPath::new(model, &setup.x, &setup.y, eps, dt, false, root)?;
        for _ in 0..n1 {
            path.advance()?;
        }
        let start = diff(&path.u, &path.v)?;
        let mut mean = Welford::new();
        for b in 0..inner {
            let mut branch = path.clone();
            branch.reseed(root.child(BRANCH).child(b as u64));
            let mut prev = start;
            let mut integral = 0.0;
            for _ in n1..n2 {
                branch.advance()?;
                let cur = diff(&branch.u, &branch.v)?;
                integral += 0.5 * dt * (prev + cur);
                prev = cur;
            }
            mean.push(integral);
        }
        Ok::<_, crate::Error>(vec![mean.mean().abs()])
    })?;
    Ok(EstimatorStats::from_replicas(per_outer, t2 - t1, t1, seed))
}

const BRANCH: u64 = 0xB4;

/// [`kolmogorov_gap`] over a list of ε.
#[allow(clippy::too_many_arguments)]
pub fn gap_study(
    model: &ModelSpec,
    avg: &AveragedCoeffs,
    phi: &CylindricalFn,
    setup: &CoupledSetup,
    eps_list: &[f64],
    t1: f64,
    t2: f64,
    outer: usize,
    inner: usize,
    seed: u64,
) -> Result<Vec<PartitionRow>> {
    eps_list
        .iter()
        .map(|&eps| {
            let plan = build_partition(eps, setup.kappa1, setup.kappa2, setup.t_end)?;
            let s = kolmogorov_gap(model, avg, phi, eps, setup, t1, t2, outer, inner, seed)?;
            Ok(PartitionRow {
                eps,
                delta_eps: plan.delta,
                zeta_eps: plan.zeta,
                estimate: s.scalar(),
                se: s.scalar_se(),
                replicas: outer,
            })
        })
        .collect()
}

/// `sup_n E|v̂_ε - v_ε|²_H` over replicas of a coupled run.
pub fn auxiliary_gap(model: &ModelSpec, setup: &CoupledSetup, plan: &PartitionPlan, replicas: usize, seed: u64) -> Result<f64> {
    let block = plan.steps_per_block(setup.dt)?;
    let steps = step_count(setup.t_end, setup.dt)?;
    let rows = try_map_indexed(replicas, |r| {
        let s: StreamSeed = replica_seed(seed, study::REMAINDER, r);
        let mut path = CoupledPath::new(model, &setup.x, &setup.y, plan.eps, setup.dt, false, s)?;
        let mut aux = Stepper::coupled(model, setup.dt, plan.eps, true)?;
        let mut x_grid = vec![0.0; model.transform().points()];
        let mut vhat = path.v.clone();
        let mut out = Vec::with_capacity(steps);
        for n in 0..steps {
            if n % block == 0 {
                vhat.copy_from_slice(&path.v);
                aux.grid_of(&path.u, &mut x_grid);
            }
            path.advance()?;
            aux.advance_fast_frozen(&x_grid, &mut vhat, &path.last_draw().fast);
            out.push(vhat.iter().zip(&path.v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
        }
        Ok::<_, crate::Error>(out)
    })?;
    let stats = EstimatorStats::from_replicas(rows, setup.t_end, 0.0, seed);
    Ok(stats.estimate.iter().copied().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_examples() {
        let p = build_partition(0.01, 0.5, 1.0, 1.0).unwrap();
        assert!((p.zeta - 2.1460).abs() < 1e-4);
        assert!((p.delta - 0.021460).abs() < 1e-6);
        assert_eq!(p.delta / p.eps, p.zeta);
        let p = build_partition(0.1, 1.0, 1.0, 1.0).unwrap();
        assert!((p.zeta - core::f64::consts::LN_10).abs() < 1e-12);
        assert!(build_partition(0.5, 1.0, 1.0, 0.1).is_err());
        let dt = p.aligned_dt(0.01);
        assert!(dt <= 0.01);
        assert!(p.steps_per_block(dt).is_ok());
        assert!(p.steps_per_block(0.007).is_err());
    }

    #[test]
    fn derivative_check_rejects_wrong_gradient() {
        struct Bad;
        impl SmoothFn for Bad {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, s: &[f64]) -> f64 {
                s[0] * s[0]
            }
            fn gradient(&self, s: &[f64], out: &mut [f64]) {
                out[0] = s[0];
            }
            fn hessian(&self, _s: &[f64], out: &mut [f64]) {
                out[0] = 2.0;
            }
        }
        assert!(CylindricalFn::new(Arc::new(Bad), vec![FieldCoeffs::unit(4, 1)], 4).is_err());
        assert!(CylindricalFn::new(Arc::new(Quadratic::square()), vec![FieldCoeffs::unit(4, 1)], 5).is_err());
        let bump = GaussianBump { center: vec![0.1, -0.2], width: 0.7 };
        let anchors = vec![FieldCoeffs::unit(4, 1), FieldCoeffs::unit(4, 2)];
        assert!(CylindricalFn::new(Arc::new(bump), anchors, 4).is_ok());
    }
}
