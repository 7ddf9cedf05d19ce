//! Exponential-Euler time stepping on the truncated eigenbasis.
//!
//! Per mode `k`, with rate `a = α_k / ε` and left-endpoint nonlinearities,
//!
//! ```text
//! c⁺ = e^{-a Δt} c + (1 - e^{-a Δt}) / α_k · B_k + σ_k [G (λ ∘ ξ)]_k,
//! σ_k² = (1 - e^{-2 a Δt}) / (2 α_k),
//! ```
//!
//! where `ξ` is a vector of standard normals. For constant coefficients this
//! samples the Ornstein–Uhlenbeck transition exactly. The slow equation uses
//! `ε = 1`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{CoefficientMap, ModelSpec, MultiplierScratch};
use crate::rng::{NoiseStreams, StreamSeed, FAST_NOISE, SLOW_NOISE};
use crate::spectral::{FieldCoeffs, SpectralBasis};

/// Largest admissible `Δt / ε` for direct simulation of the fast equation.
pub const STABILITY_RATIO: f64 = 0.1;

pub fn stability_limit(eps: f64) -> f64 {
    eps * STABILITY_RATIO
}

pub fn check_stability(dt: f64, eps: f64, allow_unstable: bool) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid("time step must be positive"));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(invalid("ε must lie in (0, 1]"));
    }
    let limit = stability_limit(eps);
    if dt > limit * (1.0 + 1e-12) && !allow_unstable {
        return Err(Error::StabilityViolation { dt, limit });
    }
    Ok(())
}

/// Number of steps of size `dt` covering `[0, t_end]`; `t_end` must be a
/// multiple of `dt` up to rounding.
pub fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end >= 0.0) || !(dt > 0.0) {
        return Err(invalid("horizon must be non-negative and step positive"));
    }
    let n = libm::round(t_end / dt);
    if (n * dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(invalid(format!("horizon {t_end} is not a multiple of the step {dt}")));
    }
    Ok(n as usize)
}

/// One step's standard normal increments for the two noise channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDraw {
    pub slow: Vec<f64>,
    pub fast: Vec<f64>,
}

impl NoiseDraw {
    pub fn zeros(modes: usize) -> Self {
        NoiseDraw { slow: vec![0.0; modes], fast: vec![0.0; modes] }
    }

    pub fn fill(&mut self, streams: &mut NoiseStreams) {
        fill_normals(&mut streams.slow, &mut self.slow);
        fill_normals(&mut streams.fast, &mut self.fast);
    }
}

pub fn fill_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for x in out.iter_mut() {
        *x = rng.sample(StandardNormal);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowFastState {
    pub t: f64,
    pub u: FieldCoeffs,
    pub v: FieldCoeffs,
    pub eps: f64,
}

/// Per-mode factors of the exponential-Euler map for one operator.
#[derive(Debug, Clone)]
pub(crate) struct ExpFactors {
    decay: Vec<f64>,
    phi: Vec<f64>,
    /// `σ_k λ_k`: noise amplitude before the multiplier is applied.
    lambda: Vec<f64>,
    sigma: Vec<f64>,
}

impl ExpFactors {
    pub(crate) fn new(basis: &SpectralBasis, dt: f64, eps: f64) -> Self {
        let mut f = ExpFactors { decay: vec![], phi: vec![], lambda: basis.lambdas().to_vec(), sigma: vec![] };
        for &a in basis.alphas() {
            let z = a * dt / eps;
            f.decay.push(libm::exp(-z));
            f.phi.push(-libm::expm1(-z) / a);
            f.sigma.push(libm::sqrt(-libm::expm1(-2.0 * z) / (2.0 * a)));
        }
        f
    }

    #[inline]
    fn apply(&self, c: &mut [f64], drift: &[f64], noise: &[f64]) {
        for k in 0..c.len() {
            c[k] = self.decay[k] * c[k] + self.phi[k] * drift[k] + self.sigma[k] * noise[k];
        }
    }
}

#[derive(Debug, Clone)]
struct Workspace {
    u_grid: Vec<f64>,
    v_grid: Vec<f64>,
    f_grid: Vec<f64>,
    drift: Vec<f64>,
    noise: Vec<f64>,
    z: Vec<f64>,
    fast_drift: Vec<f64>,
    fast_noise: Vec<f64>,
    mult: MultiplierScratch,
}

impl Workspace {
    fn new(modes: usize, points: usize) -> Self {
        Workspace {
            u_grid: vec![0.0; points],
            v_grid: vec![0.0; points],
            f_grid: vec![0.0; points],
            drift: vec![0.0; modes],
            noise: vec![0.0; modes],
            z: vec![0.0; modes],
            fast_drift: vec![0.0; modes],
            fast_noise: vec![0.0; modes],
            mult: MultiplierScratch::new(points),
        }
    }
}

/// Exponential-Euler stepper for the coupled and the frozen fast equations.
#[derive(Debug, Clone)]
pub struct Stepper<'m> {
    model: &'m ModelSpec,
    dt: f64,
    eps: f64,
    slow: ExpFactors,
    fast: ExpFactors,
    ws: Workspace,
}

impl<'m> Stepper<'m> {
    /// Stepper for the coupled system with time-scale separation `eps`.
    pub fn coupled(model: &'m ModelSpec, dt: f64, eps: f64, allow_unstable: bool) -> Result<Self> {
        check_stability(dt, eps, allow_unstable)?;
        Ok(Self::build(model, dt, eps))
    }

    /// Stepper for the frozen fast equation at natural speed.
    pub fn frozen(model: &'m ModelSpec, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("time step must be positive"));
        }
        Ok(Self::build(model, dt, 1.0))
    }

    fn build(model: &'m ModelSpec, dt: f64, eps: f64) -> Self {
        let n = model.modes();
        let points = model.transform().points();
        Stepper {
            model,
            dt,
            eps,
            slow: ExpFactors::new(model.slow(), dt, 1.0),
            fast: ExpFactors::new(model.fast(), dt, eps),
            ws: Workspace::new(n, points),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn eps(&self) -> f64 {
        self.eps
    }
    pub fn model(&self) -> &'m ModelSpec {
        self.model
    }

    /// Advances `(u, v)` by one step using left-endpoint coefficients.
    pub fn advance(&mut self, u: &mut [f64], v: &mut [f64], draw: &NoiseDraw) {
        let t = self.model.transform().clone();
        t.synthesize(u, &mut self.ws.u_grid);
        t.synthesize(v, &mut self.ws.v_grid);
        self.slow_terms(&draw.slow);
        self.fast_terms(&draw.fast);
        let ws = &mut self.ws;
        self.slow.apply(u, &ws.drift, &ws.noise);
        self.fast.apply(v, &ws.fast_drift, &ws.fast_noise);
    }

    /// Advances the fast component with the slow argument frozen at the
    /// grid values `x_grid`.
    pub fn advance_fast_frozen(&mut self, x_grid: &[f64], v: &mut [f64], fast_draw: &[f64]) {
        self.ws.u_grid.copy_from_slice(x_grid);
        self.model.transform().synthesize(v, &mut self.ws.v_grid);
        self.fast_terms(fast_draw);
        let ws = &self.ws;
        self.fast.apply(v, &ws.fast_drift, &ws.fast_noise);
    }

    /// Grid values of the given coefficients.
    pub fn grid_of(&self, c: &[f64], out: &mut [f64]) {
        self.model.transform().synthesize(c, out);
    }

    fn slow_terms(&mut self, xi: &[f64]) {
        let m = self.model;
        let ws = &mut self.ws;
        pointwise_drift(m, CoefficientMap::B1, &ws.u_grid, &ws.v_grid, &mut ws.f_grid, &mut ws.drift);
        for (z, (l, x)) in ws.z.iter_mut().zip(self.slow.lambda.iter().zip(xi)) {
            *z = l * x;
        }
        m.apply_multiplier(CoefficientMap::G1, &ws.u_grid, &ws.v_grid, &ws.z, &mut ws.noise, &mut ws.mult);
    }

    fn fast_terms(&mut self, xi: &[f64]) {
        let m = self.model;
        let ws = &mut self.ws;
        pointwise_drift(m, CoefficientMap::B2, &ws.u_grid, &ws.v_grid, &mut ws.f_grid, &mut ws.fast_drift);
        for (z, (l, x)) in ws.z.iter_mut().zip(self.fast.lambda.iter().zip(xi)) {
            *z = l * x;
        }
        m.apply_multiplier(CoefficientMap::G2, &ws.u_grid, &ws.v_grid, &ws.z, &mut ws.fast_noise, &mut ws.mult);
    }
}

/// `out = P b(·, u, v)`, skipping the transforms for constant `b`.
pub(crate) fn pointwise_drift(
    model: &ModelSpec,
    map: CoefficientMap,
    u_grid: &[f64],
    v_grid: &[f64],
    f_grid: &mut [f64],
    out: &mut [f64],
) {
    if model.coefficient(map).is_zero() {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    model.eval_grid(map, u_grid, v_grid, f_grid);
    model.transform().analyze(f_grid, out);
}

/// The averaged coefficients as seen by the integrator.
pub trait AveragedField: Sync {
    /// `out = B̄(x)`.
    fn drift(&self, x: &[f64], out: &mut [f64]);
    /// `out = Ḡ(x) z`.
    fn diffusion(&self, x: &[f64], z: &[f64], out: &mut [f64]);
}

/// Exponential-Euler stepper for the averaged slow equation.
#[derive(Debug, Clone)]
pub struct AveragedStepper {
    dt: f64,
    slow: ExpFactors,
    drift: Vec<f64>,
    noise: Vec<f64>,
    z: Vec<f64>,
}

impl AveragedStepper {
    pub fn new(slow: &SpectralBasis, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("time step must be positive"));
        }
        let n = slow.modes();
        Ok(AveragedStepper {
            dt,
            slow: ExpFactors::new(slow, dt, 1.0),
            drift: vec![0.0; n],
            noise: vec![0.0; n],
            z: vec![0.0; n],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn advance(&mut self, avg: &dyn AveragedField, u: &mut [f64], slow_draw: &[f64]) {
        avg.drift(u, &mut self.drift);
        for (z, (l, x)) in self.z.iter_mut().zip(self.slow.lambda.iter().zip(slow_draw)) {
            *z = l * x;
        }
        avg.diffusion(u, &self.z, &mut self.noise);
        self.slow.apply(u, &self.drift, &self.noise);
    }
}

/// A discretely sampled path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub u: Vec<FieldCoeffs>,
    pub v: Option<Vec<FieldCoeffs>>,
    /// Seed of the stream tree that drove the path.
    pub stream: StreamSeed,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `sup_n |u_n|_H` over the recorded grid.
    pub fn sup_norm_u(&self) -> f64 {
        self.u.iter().map(FieldCoeffs::norm).fold(0.0, f64::max)
    }
}

fn check_len(c: &[f64], n: usize, what: &str) -> Result<()> {
    if c.len() != n {
        return Err(invalid(format!("{what} has {} coefficients, expected {n}", c.len())));
    }
    Ok(())
}

pub(crate) fn ensure_finite(c: &[f64], what: &str, t: f64) -> Result<()> {
    if c.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} became non-finite at t = {t}")))
    }
}

/// Coupled path `(u_ε, v_ε)` driven by the noise streams of `seed`.
#[derive(Debug, Clone)]
pub struct CoupledPath<'m> {
    stepper: Stepper<'m>,
    streams: NoiseStreams,
    draw: NoiseDraw,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    step: usize,
}

impl<'m> CoupledPath<'m> {
    pub fn new(
        model: &'m ModelSpec,
        x: &[f64],
        y: &[f64],
        eps: f64,
        dt: f64,
        allow_unstable: bool,
        seed: StreamSeed,
    ) -> Result<Self> {
        let n = model.modes();
        check_len(x, n, "x")?;
        check_len(y, n, "y")?;
        Ok(CoupledPath {
            stepper: Stepper::coupled(model, dt, eps, allow_unstable)?,
            streams: NoiseStreams::new(seed),
            draw: NoiseDraw::zeros(n),
            u: x.to_vec(),
            v: y.to_vec(),
            step: 0,
        })
    }

    pub fn t(&self) -> f64 {
        self.step as f64 * self.stepper.dt
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    /// The increments used by the most recent step.
    pub fn last_draw(&self) -> &NoiseDraw {
        &self.draw
    }

    pub fn stepper(&self) -> &Stepper<'m> {
        &self.stepper
    }

    pub fn advance(&mut self) -> Result<()> {
        self.draw.fill(&mut self.streams);
        self.stepper.advance(&mut self.u, &mut self.v, &self.draw);
        self.step += 1;
        let t = self.t();
        ensure_finite(&self.u, "u", t)?;
        ensure_finite(&self.v, "v", t)
    }

    /// Replaces the noise streams, used to branch a path at its current time.
    pub fn reseed(&mut self, seed: StreamSeed) {
        self.streams = NoiseStreams::new(seed);
    }
}

/// Averaged path `ū`; with the same seed as a [`CoupledPath`] it sees the
/// same slow increments step by step.
pub struct AveragedPath<'a> {
    avg: &'a dyn AveragedField,
    stepper: AveragedStepper,
    rng: ChaCha8Rng,
    draw: Vec<f64>,
    pub u: Vec<f64>,
    step: usize,
}

impl<'a> AveragedPath<'a> {
    pub fn new(avg: &'a dyn AveragedField, slow: &SpectralBasis, x: &[f64], dt: f64, seed: StreamSeed) -> Result<Self> {
        check_len(x, slow.modes(), "x")?;
        Ok(AveragedPath {
            avg,
            stepper: AveragedStepper::new(slow, dt)?,
            rng: seed.child(SLOW_NOISE).rng(),
            draw: vec![0.0; slow.modes()],
            u: x.to_vec(),
            step: 0,
        })
    }

    pub fn t(&self) -> f64 {
        self.step as f64 * self.stepper.dt()
    }

    pub fn advance(&mut self) -> Result<()> {
        fill_normals(&mut self.rng, &mut self.draw);
        self.stepper.advance(self.avg, &mut self.u, &self.draw);
        self.step += 1;
        ensure_finite(&self.u, "ū", self.t())
    }

    pub fn reseed(&mut self, seed: StreamSeed) {
        self.rng = seed.child(SLOW_NOISE).rng();
    }
}

/// Frozen fast path `v^{x,y}` at natural speed.
#[derive(Debug, Clone)]
pub struct FrozenPath<'m> {
    stepper: Stepper<'m>,
    rng: ChaCha8Rng,
    x_grid: Vec<f64>,
    draw: Vec<f64>,
    pub v: Vec<f64>,
    step: usize,
}

impl<'m> FrozenPath<'m> {
    pub fn new(model: &'m ModelSpec, x: &[f64], y: &[f64], dt: f64, seed: StreamSeed) -> Result<Self> {
        let n = model.modes();
        check_len(x, n, "x")?;
        check_len(y, n, "y")?;
        let stepper = Stepper::frozen(model, dt)?;
        let mut x_grid = vec![0.0; model.transform().points()];
        stepper.grid_of(x, &mut x_grid);
        Ok(FrozenPath {
            stepper,
            rng: seed.child(FAST_NOISE).rng(),
            x_grid,
            draw: vec![0.0; n],
            v: y.to_vec(),
            step: 0,
        })
    }

    pub fn t(&self) -> f64 {
        self.step as f64 * self.stepper.dt
    }

    pub fn x_grid(&self) -> &[f64] {
        &self.x_grid
    }

    pub fn model(&self) -> &'m ModelSpec {
        self.stepper.model
    }

    pub fn advance(&mut self) -> Result<()> {
        fill_normals(&mut self.rng, &mut self.draw);
        self.stepper.advance_fast_frozen(&self.x_grid, &mut self.v, &self.draw);
        self.step += 1;
        ensure_finite(&self.v, "v", self.t())
    }
}

/// One coupled step from `state` with explicit increments.
pub fn step_coupled(
    model: &ModelSpec,
    state: &SlowFastState,
    dt: f64,
    noise: &NoiseDraw,
    allow_unstable: bool,
) -> Result<SlowFastState> {
    let n = model.modes();
    check_len(&state.u, n, "u")?;
    check_len(&state.v, n, "v")?;
    check_len(&noise.slow, n, "slow noise")?;
    check_len(&noise.fast, n, "fast noise")?;
    let mut s = Stepper::coupled(model, dt, state.eps, allow_unstable)?;
    let mut next = state.clone();
    s.advance(&mut next.u, &mut next.v, noise);
    next.t += dt;
    ensure_finite(&next.u, "u", next.t)?;
    ensure_finite(&next.v, "v", next.t)?;
    Ok(next)
}

fn times(steps: usize, dt: f64) -> Vec<f64> {
    (0..=steps).map(|n| n as f64 * dt).collect()
}

/// Full path of the coupled system on `[0, t_end]`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_coupled(
    model: &ModelSpec,
    x: &FieldCoeffs,
    y: &FieldCoeffs,
    eps: f64,
    t_end: f64,
    dt: f64,
    allow_unstable: bool,
    seed: StreamSeed,
) -> Result<Trajectory> {
    let steps = step_count(t_end, dt)?;
    let mut path = CoupledPath::new(model, x, y, eps, dt, allow_unstable, seed)?;
    let mut u = Vec::with_capacity(steps + 1);
    let mut v = Vec::with_capacity(steps + 1);
    u.push(x.clone());
    v.push(y.clone());
    for _ in 0..steps {
        path.advance()?;
        u.push(FieldCoeffs::from_vec(path.u.clone()));
        v.push(FieldCoeffs::from_vec(path.v.clone()));
    }
    Ok(Trajectory { dt, times: times(steps, dt), u, v: Some(v), stream: seed })
}

/// Path of the frozen fast process `v^{x,y}` on `[0, t_end]`, stored in `v`.
pub fn simulate_frozen_fast(
    model: &ModelSpec,
    x: &FieldCoeffs,
    y: &FieldCoeffs,
    t_end: f64,
    dt: f64,
    seed: StreamSeed,
) -> Result<Trajectory> {
    let steps = step_count(t_end, dt)?;
    let mut path = FrozenPath::new(model, x, y, dt, seed)?;
    let mut v = Vec::with_capacity(steps + 1);
    v.push(y.clone());
    for _ in 0..steps {
        path.advance()?;
        v.push(FieldCoeffs::from_vec(path.v.clone()));
    }
    Ok(Trajectory { dt, times: times(steps, dt), u: vec![x.clone(); steps + 1], v: Some(v), stream: seed })
}

/// Path of the averaged equation on `[0, t_end]`.
pub fn simulate_averaged(
    avg: &dyn AveragedField,
    slow: &SpectralBasis,
    x: &FieldCoeffs,
    t_end: f64,
    dt: f64,
    seed: StreamSeed,
) -> Result<Trajectory> {
    let steps = step_count(t_end, dt)?;
    let mut path = AveragedPath::new(avg, slow, x, dt, seed)?;
    let mut u = Vec::with_capacity(steps + 1);
    u.push(x.clone());
    for _ in 0..steps {
        path.advance()?;
        u.push(FieldCoeffs::from_vec(path.u.clone()));
    }
    Ok(Trajectory { dt, times: times(steps, dt), u, v: None, stream: seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BasisParams, CatalogModel, LinearParams, SlowDrift, SlowNoise};

    fn quiet(modes: usize) -> ModelSpec {
        let p = LinearParams { gain: 0.0, feedback: 0.0, b1: SlowDrift::Zero, g1: SlowNoise::Zero, g2_scale: 0.0 };
        CatalogModel::LinearTestModel(p).build(&BasisParams::default().with_modes(modes)).unwrap()
    }

    #[test]
    fn guard_and_alignment() {
        assert!(check_stability(0.01, 0.1, false).is_ok());
        assert!(matches!(check_stability(0.02, 0.1, false), Err(Error::StabilityViolation { .. })));
        assert!(check_stability(0.02, 0.1, true).is_ok());
        assert_eq!(step_count(1.0, 4e-4).unwrap(), 2500);
        assert!(step_count(1.0, 0.3).is_err());
    }

    #[test]
    fn pure_decay() {
        let m = quiet(4);
        let x = FieldCoeffs::from_vec(vec![1.0, 1.0, 1.0, 1.0]);
        let s = SlowFastState { t: 0.0, u: x.clone(), v: x.clone(), eps: 0.1 };
        let next = step_coupled(&m, &s, 0.01, &NoiseDraw::zeros(4), false).unwrap();
        for k in 0..4 {
            let a = ((k + 1) * (k + 1)) as f64;
            assert!((next.u[k] - libm::exp(-a * 0.01)).abs() < 1e-15);
            assert!((next.v[k] - libm::exp(-a * 0.1)).abs() < 1e-15);
        }
        let tr = simulate_coupled(&m, &FieldCoeffs::unit(4, 1), &FieldCoeffs::zeros(4), 0.1, 1.0, 0.01, false, StreamSeed::root(1)).unwrap();
        assert!((tr.u.last().unwrap()[0] - libm::exp(-1.0)).abs() < 1e-13);
    }

    #[test]
    fn small_step_limits() {
        let b = crate::spectral::build_basis(crate::spectral::BasisKind::DirichletLaplacian, 1, core::f64::consts::PI, 0.0).unwrap();
        let f = ExpFactors::new(&b, 1e-9, 1e-3);
        assert!((f.phi[0] / (1e-9 / 1e-3) - 1.0).abs() < 1e-5);
        assert!((f.sigma[0] * f.sigma[0] / (1e-9 / 1e-3) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn same_seed_same_path() {
        let m = CatalogModel::LinearTestModel(LinearParams::default()).build(&BasisParams::default().with_modes(6)).unwrap();
        let x = FieldCoeffs::unit(6, 1);
        let y = FieldCoeffs::zeros(6);
        let a = simulate_coupled(&m, &x, &y, 0.1, 0.2, 0.01, false, StreamSeed::root(5)).unwrap();
        let b = simulate_coupled(&m, &x, &y, 0.1, 0.2, 0.01, false, StreamSeed::root(5)).unwrap();
        assert_eq!(a, b);
        let c = simulate_coupled(&m, &x, &y, 0.1, 0.2, 0.01, false, StreamSeed::root(6)).unwrap();
        assert_ne!(a, c);
    }
}
