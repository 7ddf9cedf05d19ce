//! Pointwise reaction and diffusion coefficients, the built-in model catalog
//! and the sampled Lipschitz / contraction checks.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{E, PI};
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::StreamSeed;
use crate::spectral::{
    build_basis, check_hypothesis_h1, BasisKind, Exponent, GridField, HypothesisReport, Role,
    SharedTransform, SineTransform, SpectralBasis,
};
use crate::stats::linear_fit;

/// A map `(ξ, σ1, σ2) ↦ value`.
pub type PointFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Which of the two field arguments a coefficient reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dependence {
    Neither,
    Slow,
    Fast,
    Both,
}

impl Dependence {
    pub fn slow(self) -> bool {
        matches!(self, Dependence::Slow | Dependence::Both)
    }
    pub fn fast(self) -> bool {
        matches!(self, Dependence::Fast | Dependence::Both)
    }
}

#[derive(Clone)]
pub struct Coefficient {
    f: PointFn,
    dependence: Dependence,
    constant: Option<f64>,
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coefficient")
            .field("dependence", &self.dependence)
            .field("constant", &self.constant)
            .finish()
    }
}

impl Coefficient {
    pub fn new(dependence: Dependence, f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient { f: Arc::new(f), dependence, constant: None }
    }

    /// A spatially constant value; multiplication by it skips the grid.
    pub fn constant(c: f64) -> Self {
        Coefficient { f: Arc::new(move |_, _, _| c), dependence: Dependence::Neither, constant: Some(c) }
    }

    #[inline]
    pub fn eval(&self, xi: f64, s1: f64, s2: f64) -> f64 {
        (self.f)(xi, s1, s2)
    }

    pub fn dependence(&self) -> Dependence {
        self.dependence
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }

    pub fn is_zero(&self) -> bool {
        self.constant == Some(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientMap {
    B1,
    B2,
    G1,
    G2,
}

/// Closed-form averaged drift `x ↦ B̄(x)` in coefficient space.
pub type BbarFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Declared constants of a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeclaredConstants {
    pub l_b2: f64,
    pub l_g2: f64,
    /// Growth exponent of g2 in σ2.
    pub gamma: f64,
    /// Lower bound δ on g1 (0 when none is claimed).
    pub g1_lower_bound: f64,
    pub g1_bounded: bool,
}

/// A slow-fast reaction-diffusion model on a shared sine basis.
#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    slow: SpectralBasis,
    fast: SpectralBasis,
    transform: SharedTransform,
    b1: Coefficient,
    b2: Coefficient,
    g1: Coefficient,
    g2: Coefficient,
    pub constants: DeclaredConstants,
    analytic_bbar: Option<BbarFn>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("modes", &self.modes())
            .field("grid_points", &self.transform.points())
            .field("constants", &self.constants)
            .finish()
    }
}

impl ModelSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        slow: SpectralBasis,
        fast: SpectralBasis,
        grid_points: usize,
        b1: Coefficient,
        b2: Coefficient,
        g1: Coefficient,
        g2: Coefficient,
        constants: DeclaredConstants,
    ) -> Result<Self> {
        if slow.modes() != fast.modes() || slow.length() != fast.length() {
            return Err(invalid("slow and fast bases must share N and L"));
        }
        if constants.gamma < 0.0 || constants.l_b2 < 0.0 || constants.l_g2 < 0.0 {
            return Err(invalid("declared constants must be non-negative"));
        }
        let transform = Arc::new(SineTransform::for_basis(&slow, grid_points)?);
        Ok(ModelSpec {
            name: name.into(),
            slow: slow.with_role(Role::Slow),
            fast: fast.with_role(Role::Fast),
            transform,
            b1,
            b2,
            g1,
            g2,
            constants,
            analytic_bbar: None,
        })
    }

    pub fn with_analytic_bbar(mut self, f: BbarFn) -> Self {
        self.analytic_bbar = Some(f);
        self
    }

    pub fn slow(&self) -> &SpectralBasis {
        &self.slow
    }
    pub fn fast(&self) -> &SpectralBasis {
        &self.fast
    }
    pub fn transform(&self) -> &SharedTransform {
        &self.transform
    }
    pub fn modes(&self) -> usize {
        self.slow.modes()
    }
    pub fn analytic_bbar(&self) -> Option<&BbarFn> {
        self.analytic_bbar.as_ref()
    }

    pub fn coefficient(&self, map: CoefficientMap) -> &Coefficient {
        match map {
            CoefficientMap::B1 => &self.b1,
            CoefficientMap::B2 => &self.b2,
            CoefficientMap::G1 => &self.g1,
            CoefficientMap::G2 => &self.g2,
        }
    }

    pub fn g1_depends_on_fast(&self) -> bool {
        self.g1.dependence().fast()
    }

    /// Evaluates a coefficient at every collocation point.
    pub fn eval_grid(&self, map: CoefficientMap, u: &[f64], v: &[f64], out: &mut [f64]) {
        let c = self.coefficient(map);
        if let Some(k) = c.as_constant() {
            out.iter_mut().for_each(|o| *o = k);
            return;
        }
        let t = &self.transform;
        for (j, o) in out.iter_mut().enumerate() {
            *o = c.eval(t.node(j), u[j], v[j]);
        }
    }

    /// Galerkin action of a multiplication coefficient on the coefficient
    /// vector `z`: `out = P(g(·, u, v) z)`.
    pub fn apply_multiplier(
        &self,
        map: CoefficientMap,
        u_grid: &[f64],
        v_grid: &[f64],
        z: &[f64],
        out: &mut [f64],
        scratch: &mut MultiplierScratch,
    ) {
        let c = self.coefficient(map);
        if let Some(k) = c.as_constant() {
            for (o, zi) in out.iter_mut().zip(z) {
                *o = k * zi;
            }
            return;
        }
        self.eval_grid(map, u_grid, v_grid, &mut scratch.g);
        self.transform.synthesize(z, &mut scratch.z);
        for (zj, gj) in scratch.z.iter_mut().zip(&scratch.g) {
            *zj *= gj;
        }
        self.transform.analyze(&scratch.z, out);
    }
}

/// Grid-sized buffers for [`ModelSpec::apply_multiplier`].
#[derive(Debug, Clone)]
pub struct MultiplierScratch {
    g: Vec<f64>,
    z: Vec<f64>,
}

impl MultiplierScratch {
    pub fn new(points: usize) -> Self {
        MultiplierScratch { g: vec![0.0; points], z: vec![0.0; points] }
    }
}

/// Pointwise application `ξ_j ↦ map(ξ_j, u(ξ_j), v(ξ_j))`. For the g-maps the
/// result is the multiplier field.
pub fn nemytskii(model: &ModelSpec, map: CoefficientMap, u: &GridField, v: &GridField) -> Result<GridField> {
    if !u.same_grid(v) {
        return Err(invalid("u and v are on different grids"));
    }
    let t = model.transform();
    if u.points() != t.points() || u.length != t.length() {
        return Err(invalid("grid does not match the model collocation grid"));
    }
    let mut values = vec![0.0; u.points()];
    model.eval_grid(map, &u.values, &v.values, &mut values);
    Ok(GridField { values, length: u.length })
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

/// Shared discretisation parameters for catalog models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisParams {
    pub modes: usize,
    pub length: f64,
    pub slow_shift: f64,
    pub fast_shift: f64,
    /// Collocation points per mode (M = grid_factor * N).
    pub grid_factor: usize,
    pub slow_noise_decay: f64,
    pub fast_noise_decay: f64,
}

impl Default for BasisParams {
    fn default() -> Self {
        BasisParams {
            modes: 32,
            length: PI,
            slow_shift: 0.0,
            fast_shift: 0.0,
            grid_factor: 2,
            slow_noise_decay: 0.0,
            fast_noise_decay: 0.0,
        }
    }
}

impl BasisParams {
    pub fn with_modes(mut self, modes: usize) -> Self {
        self.modes = modes;
        self
    }

    fn build(&self) -> Result<(SpectralBasis, SpectralBasis, usize)> {
        if self.grid_factor < 1 {
            return Err(invalid("grid_factor must be at least 1"));
        }
        let kind = |s: f64| if s > 0.0 { BasisKind::ShiftedLaplacian } else { BasisKind::DirichletLaplacian };
        let slow = build_basis(kind(self.slow_shift), self.modes, self.length, self.slow_shift)?
            .with_noise(1.0, self.slow_noise_decay)?;
        let fast = build_basis(kind(self.fast_shift), self.modes, self.length, self.fast_shift)?
            .with_noise(1.0, self.fast_noise_decay)?
            .with_role(Role::Fast);
        Ok((slow, fast, self.grid_factor * self.modes))
    }
}

/// Slow drift choices of the linear test model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlowDrift {
    /// `b1 = σ2`.
    Fast,
    /// `b1 = σ1 / 3`, independent of the fast variable.
    Slow,
    Zero,
}

/// Slow diffusion choices of the linear test model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlowNoise {
    One,
    Zero,
    /// `g1 = 2 + sin σ2`.
    SinFast,
    /// `g1 = 1 + sin(σ1)/2`.
    SlowOnly,
}

/// Parameters of the linear test model
/// `b2 = gain σ1 + feedback σ2`, `g2 ≡ g2_scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearParams {
    pub gain: f64,
    pub feedback: f64,
    pub b1: SlowDrift,
    pub g1: SlowNoise,
    pub g2_scale: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams { gain: 0.5, feedback: -0.5, b1: SlowDrift::Fast, g1: SlowNoise::One, g2_scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum CatalogModel {
    LinearTestModel(LinearParams),
    /// `b1 = σ1 - σ1³ + σ2`, `b2 = (σ1 - σ2)/2`, `g1 = g2 = 1`.
    Bistable,
    /// `b1 = cos σ2`, `b2 = (σ1 - σ2)/2`, `g1 = g2 = 1`.
    AdditiveFast,
}

impl CatalogModel {
    pub fn id(&self) -> &'static str {
        match self {
            CatalogModel::LinearTestModel(_) => "linear_test_model",
            CatalogModel::Bistable => "bistable",
            CatalogModel::AdditiveFast => "additive_fast",
        }
    }

    pub fn from_id(id: &str, linear: LinearParams) -> Result<Self> {
        match id {
            "linear_test_model" => Ok(CatalogModel::LinearTestModel(linear)),
            "bistable" => Ok(CatalogModel::Bistable),
            "additive_fast" => Ok(CatalogModel::AdditiveFast),
            other => Err(invalid(format!("unknown model {other:?}"))),
        }
    }

    pub fn build(&self, basis: &BasisParams) -> Result<ModelSpec> {
        let (slow, fast, points) = basis.build()?;
        match *self {
            CatalogModel::LinearTestModel(p) => linear_test_model(slow, fast, points, p),
            CatalogModel::Bistable => bistable(slow, fast, points),
            CatalogModel::AdditiveFast => additive_fast(slow, fast, points),
        }
    }
}

/// Mean and variance of each mode of the (Gaussian) invariant law of the
/// linear fast equation `dv = (A2 v + gain x + feedback v) dt + scale dW^{Q2}`.
pub fn linear_invariant_law(
    fast: &SpectralBasis,
    gain: f64,
    feedback: f64,
    scale: f64,
    x: &[f64],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let rates: Vec<f64> = fast.alphas().iter().map(|a| a - feedback).collect();
    if rates.iter().any(|r| *r <= 0.0) {
        return None;
    }
    let mean = rates.iter().zip(x).map(|(r, xk)| gain * xk / r).collect();
    let var = rates.iter().zip(fast.lambdas()).map(|(r, l)| scale * scale * l * l / (2.0 * r)).collect();
    Some((mean, var))
}

fn linear_test_model(slow: SpectralBasis, fast: SpectralBasis, points: usize, p: LinearParams) -> Result<ModelSpec> {
    let b1 = match p.b1 {
        SlowDrift::Fast => Coefficient::new(Dependence::Fast, |_, _, s2| s2),
        SlowDrift::Slow => Coefficient::new(Dependence::Slow, |_, s1, _| s1 / 3.0),
        SlowDrift::Zero => Coefficient::constant(0.0),
    };
    let (gain, feedback) = (p.gain, p.feedback);
    let b2 = Coefficient::new(Dependence::Both, move |_, s1, s2| gain * s1 + feedback * s2);
    let (g1, bounded, delta) = match p.g1 {
        SlowNoise::One => (Coefficient::constant(1.0), true, 1.0),
        SlowNoise::Zero => (Coefficient::constant(0.0), true, 0.0),
        SlowNoise::SinFast => (Coefficient::new(Dependence::Fast, |_, _, s2| 2.0 + libm::sin(s2)), true, 1.0),
        SlowNoise::SlowOnly => (Coefficient::new(Dependence::Slow, |_, s1, _| 1.0 + 0.5 * libm::sin(s1)), true, 0.5),
    };
    let g2 = Coefficient::constant(p.g2_scale);
    let constants = DeclaredConstants {
        l_b2: feedback.abs(),
        l_g2: 0.0,
        gamma: 0.0,
        g1_lower_bound: delta,
        g1_bounded: bounded,
    };
    let fast_basis = fast.clone();
    let model = ModelSpec::new("linear_test_model", slow, fast, points, b1, b2, g1, g2, constants)?;
    let model = match p.b1 {
        SlowDrift::Fast => {
            if linear_invariant_law(&fast_basis, gain, feedback, p.g2_scale, &vec![0.0; fast_basis.modes()]).is_none() {
                return Ok(model);
            }
            let rates: Vec<f64> = fast_basis.alphas().iter().map(|a| a - feedback).collect();
            model.with_analytic_bbar(Arc::new(move |x: &[f64]| {
                x.iter().zip(&rates).map(|(xk, r)| gain * xk / r).collect()
            }))
        }
        // v-independent drifts average to themselves; the generic path covers them.
        SlowDrift::Slow | SlowDrift::Zero => model,
    };
    Ok(model)
}

fn bistable(slow: SpectralBasis, fast: SpectralBasis, points: usize) -> Result<ModelSpec> {
    let b1 = Coefficient::new(Dependence::Both, |_, s1, s2| s1 - s1 * s1 * s1 + s2);
    let b2 = Coefficient::new(Dependence::Both, |_, s1, s2| 0.5 * (s1 - s2));
    let constants = DeclaredConstants { l_b2: 0.5, l_g2: 0.0, gamma: 0.0, g1_lower_bound: 1.0, g1_bounded: true };
    let rates: Vec<f64> = fast.alphas().iter().map(|a| a + 0.5).collect();
    let model = ModelSpec::new(
        "bistable",
        slow,
        fast,
        points,
        b1,
        b2,
        Coefficient::constant(1.0),
        Coefficient::constant(1.0),
        constants,
    )?;
    let t = model.transform().clone();
    Ok(model.with_analytic_bbar(Arc::new(move |x: &[f64]| {
        let mut grid = vec![0.0; t.points()];
        t.synthesize(x, &mut grid);
        grid.iter_mut().for_each(|s| *s = *s - *s * *s * *s);
        let mut out = vec![0.0; t.modes()];
        t.analyze(&grid, &mut out);
        for ((o, xk), r) in out.iter_mut().zip(x).zip(&rates) {
            *o += 0.5 * xk / r;
        }
        out
    })))
}

fn additive_fast(slow: SpectralBasis, fast: SpectralBasis, points: usize) -> Result<ModelSpec> {
    let b1 = Coefficient::new(Dependence::Fast, |_, _, s2| libm::cos(s2));
    let b2 = Coefficient::new(Dependence::Both, |_, s1, s2| 0.5 * (s1 - s2));
    let constants = DeclaredConstants { l_b2: 0.5, l_g2: 0.0, gamma: 0.0, g1_lower_bound: 1.0, g1_bounded: true };
    let fast_basis = fast.clone();
    let model = ModelSpec::new(
        "additive_fast",
        slow,
        fast,
        points,
        b1,
        b2,
        Coefficient::constant(1.0),
        Coefficient::constant(1.0),
        constants,
    )?;
    let t = model.transform().clone();
    // Under the Gaussian invariant law, E cos z(ξ) = cos(m(ξ)) exp(-s²(ξ)/2).
    Ok(model.with_analytic_bbar(Arc::new(move |x: &[f64]| {
        let (mean, var) = linear_invariant_law(&fast_basis, 0.5, -0.5, 1.0, x).expect("positive rates");
        let mut m = vec![0.0; t.points()];
        t.synthesize(&mean, &mut m);
        let grid: Vec<f64> = (0..t.points())
            .map(|j| {
                let s2: f64 = (0..t.modes()).map(|k| { let e = t.basis_value(j, k); e * e * var[k] }).sum();
                libm::cos(m[j]) * libm::exp(-0.5 * s2)
            })
            .collect();
        let mut out = vec![0.0; t.modes()];
        t.analyze(&grid, &mut out);
        out
    })))
}

// ---------------------------------------------------------------------------
// Checks
// ---------------------------------------------------------------------------

/// Sampled Lipschitz and growth checks on b2, g2 and the g1 lower bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub samples: usize,
    pub measured_l_b2: f64,
    pub measured_l_g2: f64,
    pub declared_l_b2: f64,
    pub declared_l_g2: f64,
    pub lambda_gap: f64,
    pub growth_exponent: f64,
    pub gamma: f64,
    pub g1_min_sampled: f64,
    pub violations: Vec<String>,
    pub pass: bool,
}

const LIPSCHITZ_SLACK: f64 = 1.01;
const GROWTH_SLACK: f64 = 0.05;
const SAMPLE_RANGE: f64 = 10.0;

/// Samples random `(ξ, σ1, σ2, ρ2)` to bound the σ2-Lipschitz quotients of
/// b2 and g2, checks `L_b2 < λ`, fits the growth exponent of g2 and probes the
/// declared lower bound of g1.
pub fn check_hypothesis_h2(model: &ModelSpec, sample_count: usize, seed: u64) -> LipschitzReport {
    let samples = sample_count.max(100);
    let mut rng = StreamSeed::root(seed).child(0x42).rng();
    let len = model.slow().length();
    let c = model.constants;
    let lambda_gap = model.fast().spectral_gap();
    let (mut lb2, mut lg2) = (0.0f64, 0.0f64);
    let mut g1_min = f64::INFINITY;
    for _ in 0..samples {
        let xi = rng.random::<f64>() * len;
        let s1 = SAMPLE_RANGE * (2.0 * rng.random::<f64>() - 1.0);
        let s2 = SAMPLE_RANGE * (2.0 * rng.random::<f64>() - 1.0);
        let r2 = SAMPLE_RANGE * (2.0 * rng.random::<f64>() - 1.0);
        if s2 != r2 {
            let d = (s2 - r2).abs();
            lb2 = lb2.max((model.b2.eval(xi, s1, s2) - model.b2.eval(xi, s1, r2)).abs() / d);
            lg2 = lg2.max((model.g2.eval(xi, s1, s2) - model.g2.eval(xi, s1, r2)).abs() / d);
        }
        g1_min = g1_min.min(model.g1.eval(xi, s1, s2));
    }

    let growth_exponent = growth_exponent(&model.g2, len);
    let mut violations = Vec::new();
    if lb2 > c.l_b2 * LIPSCHITZ_SLACK + 1e-12 {
        violations.push(format!("measured L_b2 = {lb2} exceeds declared {}", c.l_b2));
    }
    if lg2 > c.l_g2 * LIPSCHITZ_SLACK + 1e-12 {
        violations.push(format!("measured L_g2 = {lg2} exceeds declared {}", c.l_g2));
    }
    let l_eff = lb2.max(c.l_b2);
    if l_eff >= lambda_gap {
        violations.push(format!("L_b2 = {l_eff} is not below the spectral gap {lambda_gap}"));
    }
    if c.gamma >= 1.0 {
        violations.push(format!("growth exponent γ = {} must be below 1", c.gamma));
    }
    if growth_exponent > c.gamma + GROWTH_SLACK {
        violations.push(format!("g2 grows like |σ2|^{growth_exponent}, above γ = {}", c.gamma));
    }
    if c.g1_lower_bound > 0.0 && g1_min < c.g1_lower_bound {
        violations.push(format!("g1 sampled at {g1_min} below declared δ = {}", c.g1_lower_bound));
    }
    LipschitzReport {
        samples,
        measured_l_b2: lb2,
        measured_l_g2: lg2,
        declared_l_b2: c.l_b2,
        declared_l_g2: c.l_g2,
        lambda_gap,
        growth_exponent,
        gamma: c.gamma,
        g1_min_sampled: g1_min,
        pass: violations.is_empty(),
        violations,
    }
}

/// Slope of `log sup_ξ |g2(ξ, 0, ±s)|` against `log s` for s = 10..10⁴.
fn growth_exponent(g2: &Coefficient, len: f64) -> f64 {
    let scales = [1e1, 1e2, 1e3, 1e4];
    let sup: Vec<f64> = scales
        .iter()
        .map(|&s| {
            (1..16)
                .flat_map(|j| {
                    let xi = len * j as f64 / 16.0;
                    [g2.eval(xi, 0.0, s).abs(), g2.eval(xi, 0.0, -s).abs()]
                })
                .fold(0.0, f64::max)
        })
        .collect();
    if sup.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    let x: Vec<f64> = scales.iter().map(|s| libm::log(*s)).collect();
    let y: Vec<f64> = sup.iter().map(|v| libm::log(v.max(f64::MIN_POSITIVE))).collect();
    linear_fit(&x, &y).map_or(0.0, |f| f.slope.max(0.0))
}

/// The contraction constant M0 and its two summands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionM0Report {
    pub m0: f64,
    pub drift_term: f64,
    pub noise_term: f64,
    pub pass: bool,
    pub lambda: f64,
    pub beta2: f64,
    pub rho2: Exponent,
    pub zeta2: f64,
    pub kappa2: f64,
    pub l_b2: f64,
    pub l_g2: f64,
}

/// Evaluates
/// `M0 = (L_b2/λ)² + L_g2² (β2/e)^{β2(ρ2-2)/ρ2} ζ2^{(ρ2-2)/ρ2} κ2^{2/ρ2} (ρ2/(λ(ρ2+2)))^{1-β2(ρ2-2)/ρ2}`
/// with the declared Lipschitz constants and the fast-operator series
/// bounds (partial sum plus tail). For ρ2 = ∞ the limits of the exponents are
/// used and `κ2^0 = 1`.
pub fn check_condition_m0(model: &ModelSpec, report: &HypothesisReport) -> Result<ConditionM0Report> {
    m0_from_constants(model.constants.l_b2, model.constants.l_g2, report)
}

pub fn m0_from_constants(l_b2: f64, l_g2: f64, report: &HypothesisReport) -> Result<ConditionM0Report> {
    let lambda = report.lambda_gap;
    if !(lambda > 0.0) {
        return Err(invalid("spectral gap λ must be positive to evaluate M0"));
    }
    let beta = report.beta[1];
    let rho = report.rho[1];
    let drift_term = (l_b2 / lambda) * (l_b2 / lambda);
    let zeta = report.zeta[1].upper();
    let kappa = report.kappa[1].upper();
    let noise_term = if l_g2 == 0.0 {
        0.0
    } else {
        let zeta = zeta.ok_or_else(|| invalid("ζ2 is not finite; M0 undefined"))?;
        let kappa = kappa.ok_or_else(|| invalid("κ2 is not finite; M0 undefined"))?;
        let (zeta_exp, kappa_exp, last) = match rho {
            Exponent::Infinite => (1.0, 0.0, 1.0 / lambda),
            Exponent::Finite(r) => ((r - 2.0) / r, 2.0 / r, r / (lambda * (r + 2.0))),
        };
        let e = beta * zeta_exp;
        let kappa_factor = if kappa_exp == 0.0 { 1.0 } else { libm::pow(kappa, kappa_exp) };
        l_g2 * l_g2 * libm::pow(beta / E, e) * libm::pow(zeta, zeta_exp) * kappa_factor * libm::pow(last, 1.0 - e)
    };
    let m0 = drift_term + noise_term;
    Ok(ConditionM0Report {
        m0,
        drift_term,
        noise_term,
        pass: m0 < 0.5,
        lambda,
        beta2: beta,
        rho2: rho,
        zeta2: zeta.unwrap_or(f64::NAN),
        kappa2: kappa.unwrap_or(f64::NAN),
        l_b2,
        l_g2,
    })
}

/// Combined spectral, Lipschitz and contraction verdict for a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisGate {
    pub spectral: HypothesisReport,
    pub lipschitz: LipschitzReport,
    pub contraction: ConditionM0Report,
    pub pass: bool,
}

impl HypothesisGate {
    pub fn evaluate(
        model: &ModelSpec,
        beta: (f64, f64),
        rho: (Exponent, Exponent),
        samples: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut spectral = check_hypothesis_h1(model.slow(), model.fast(), beta, rho)?;
        let lipschitz = check_hypothesis_h2(model, samples, seed);
        let contraction = check_condition_m0(model, &spectral)?;
        spectral.l_b2 = Some(model.constants.l_b2);
        spectral.m0 = Some(contraction.m0);
        spectral.flags.lipschitz_below_gap = Some(model.constants.l_b2 < spectral.lambda_gap);
        spectral.flags.m0_below_half = Some(contraction.pass);
        let pass = spectral.flags.all_pass() && lipschitz.pass && contraction.pass;
        Ok(HypothesisGate { spectral, lipschitz, contraction, pass })
    }

    /// Human-readable list of what failed.
    pub fn failures(&self) -> Vec<String> {
        let mut out = self.lipschitz.violations.clone();
        let f = &self.spectral.flags;
        let named = [
            (f.slow_series, "slow series κ1/ζ1 not summable"),
            (f.fast_series, "fast series κ2/ζ2 not summable"),
            (f.slow_exponent, "β1(ρ1-2)/ρ1 >= 1"),
            (f.fast_exponent, "β2(ρ2-2)/ρ2 >= 1"),
            (f.spectral_gap, "fast spectral gap is not positive"),
            (f.lipschitz_below_gap.unwrap_or(true), "declared L_b2 not below λ"),
        ];
        out.extend(named.iter().filter(|(ok, _)| !ok).map(|(_, m)| String::from(*m)));
        if !self.contraction.pass {
            out.push(format!("M0 = {} is not below 1/2", self.contraction.m0));
        }
        out
    }
}
