//! Sine eigenbasis of the Dirichlet Laplacian on `(0, L)`.
//!
//! Fields are stored as coefficient vectors in the orthonormal basis
//! `e_k(ξ) = sqrt(2/L) sin(kπξ/L)`; pointwise (Nemytskii) coefficients are
//! evaluated on the interior collocation grid `ξ_j = jL/(M+1)`, `j = 1..M`,
//! where the discrete sine sums make synthesis and analysis exact inverses
//! for every `M >= N`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Deref, DerefMut};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Slow,
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Dirichlet,
    /// Dirichlet eigenfunctions with a positive mass shift standing in for a
    /// Robin condition.
    Robin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    DirichletLaplacian,
    ShiftedLaplacian,
}

/// Eigenpairs of one elliptic operator together with the covariance
/// eigenvalues `λ_k = scale * k^(-decay)` of its driving noise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralBasis {
    role: Role,
    #[serde(skip)]
    kind: BasisKind,
    #[serde(rename = "N")]
    modes: usize,
    #[serde(rename = "L")]
    length: f64,
    boundary: Boundary,
    shift: f64,
    alphas: Vec<f64>,
    lambdas: Vec<f64>,
    #[serde(skip)]
    noise_scale: f64,
    #[serde(skip)]
    noise_decay: f64,
}

/// Builds the Laplacian eigenbasis with `α_k = (kπ/L)² + shift` and white
/// noise (`λ_k ≡ 1`).
pub fn build_basis(kind: BasisKind, modes: usize, length: f64, shift: f64) -> Result<SpectralBasis> {
    if modes == 0 {
        return Err(invalid("mode count N must be positive"));
    }
    if !(length > 0.0) || !length.is_finite() {
        return Err(invalid("domain length L must be positive"));
    }
    if !(shift >= 0.0) || !shift.is_finite() {
        return Err(invalid("shift must be non-negative"));
    }
    let boundary = match kind {
        BasisKind::DirichletLaplacian => Boundary::Dirichlet,
        BasisKind::ShiftedLaplacian => {
            if shift == 0.0 {
                return Err(invalid("shifted_laplacian requires a positive shift"));
            }
            Boundary::Robin
        }
    };
    let alphas = (1..=modes)
        .map(|k| {
            let w = k as f64 * PI / length;
            w * w + shift
        })
        .collect();
    Ok(SpectralBasis {
        role: Role::Slow,
        kind,
        modes,
        length,
        boundary,
        shift,
        alphas,
        lambdas: vec![1.0; modes],
        noise_scale: 1.0,
        noise_decay: 0.0,
    })
}

impl SpectralBasis {
    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    /// Replaces the noise covariance eigenvalues by `scale * k^(-decay)`.
    pub fn with_noise(mut self, scale: f64, decay: f64) -> Result<Self> {
        if !(scale >= 0.0) || !(decay >= 0.0) {
            return Err(invalid("noise scale and decay must be non-negative"));
        }
        self.noise_scale = scale;
        self.noise_decay = decay;
        self.lambdas = (1..=self.modes).map(|k| scale * libm::pow(k as f64, -decay)).collect();
        Ok(self)
    }

    pub fn role(&self) -> Role {
        self.role
    }
    pub fn kind(&self) -> BasisKind {
        self.kind
    }
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }
    pub fn modes(&self) -> usize {
        self.modes
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn shift(&self) -> f64 {
        self.shift
    }
    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }
    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }
    pub fn noise_decay(&self) -> f64 {
        self.noise_decay
    }

    /// `|e_k|_0 = sqrt(2/L)` for every k.
    pub fn sup_bound(&self) -> f64 {
        libm::sqrt(2.0 / self.length)
    }

    /// Smallest eigenvalue `min_k α_k` (the spectral gap for the fast basis).
    pub fn spectral_gap(&self) -> f64 {
        self.alphas.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Value of the k-th eigenfunction (1-based) at ξ.
    pub fn eigenfunction(&self, k: usize, xi: f64) -> f64 {
        self.sup_bound() * libm::sin(k as f64 * PI * xi / self.length)
    }
}

/// Truncated eigen-coefficients of an element of `H = L²(0, L)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldCoeffs(Vec<f64>);

impl FieldCoeffs {
    pub fn zeros(modes: usize) -> Self {
        FieldCoeffs(vec![0.0; modes])
    }

    /// The basis vector `e_k` (1-based).
    pub fn unit(modes: usize, k: usize) -> Self {
        let mut c = vec![0.0; modes];
        c[k - 1] = 1.0;
        FieldCoeffs(c)
    }

    pub fn from_vec(coeffs: Vec<f64>) -> Self {
        FieldCoeffs(coeffs)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// H-norm, equal to the Euclidean norm of the coefficients.
    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn dot(&self, other: &FieldCoeffs) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn scaled(&self, a: f64) -> FieldCoeffs {
        FieldCoeffs(self.0.iter().map(|c| a * c).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl Deref for FieldCoeffs {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for FieldCoeffs {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for FieldCoeffs {
    fn from(v: Vec<f64>) -> Self {
        FieldCoeffs(v)
    }
}

impl Serialize for FieldCoeffs {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for FieldCoeffs {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        Vec::<f64>::deserialize(d).map(FieldCoeffs)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Values of a function at the collocation points `ξ_j = jL/(M+1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub values: Vec<f64>,
    pub length: f64,
}

impl GridField {
    pub fn points(&self) -> usize {
        self.values.len()
    }

    pub fn same_grid(&self, other: &GridField) -> bool {
        self.values.len() == other.values.len() && self.length == other.length
    }

    /// L² norm by the collocation quadrature `L/(M+1) Σ g_j²`.
    pub fn l2_norm(&self) -> f64 {
        let w = self.length / (self.values.len() + 1) as f64;
        libm::sqrt(w * dot(&self.values, &self.values))
    }
}

/// Dense discrete sine transform between N coefficients and M grid values.
#[derive(Debug, Clone, PartialEq)]
pub struct SineTransform {
    modes: usize,
    points: usize,
    length: f64,
    weight: f64,
    /// Row-major `M x N` synthesis matrix `e_k(ξ_j)`.
    synth: Vec<f64>,
}

impl SineTransform {
    pub fn new(modes: usize, points: usize, length: f64) -> Result<Self> {
        if modes == 0 {
            return Err(invalid("mode count N must be positive"));
        }
        if points < modes {
            return Err(invalid("grid size M must be at least N"));
        }
        if !(length > 0.0) {
            return Err(invalid("domain length L must be positive"));
        }
        let amp = libm::sqrt(2.0 / length);
        let denom = (points + 1) as f64;
        let mut synth = Vec::with_capacity(points * modes);
        for j in 1..=points {
            for k in 1..=modes {
                synth.push(amp * libm::sin(PI * (k * j) as f64 / denom));
            }
        }
        Ok(SineTransform { modes, points, length, weight: length / denom, synth })
    }

    pub fn for_basis(basis: &SpectralBasis, points: usize) -> Result<Self> {
        Self::new(basis.modes(), points, basis.length())
    }

    pub fn modes(&self) -> usize {
        self.modes
    }
    pub fn points(&self) -> usize {
        self.points
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    /// Quadrature weight `L/(M+1)`.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn node(&self, j: usize) -> f64 {
        (j + 1) as f64 * self.weight
    }

    /// `e_{k+1}(ξ_{j+1})` with zero-based indices.
    #[inline]
    pub fn basis_value(&self, j: usize, k: usize) -> f64 {
        self.synth[j * self.modes + k]
    }

    pub fn synthesize(&self, coeffs: &[f64], grid: &mut [f64]) {
        debug_assert_eq!(coeffs.len(), self.modes);
        debug_assert_eq!(grid.len(), self.points);
        for (g, row) in grid.iter_mut().zip(self.synth.chunks_exact(self.modes)) {
            *g = dot(row, coeffs);
        }
    }

    pub fn analyze(&self, grid: &[f64], coeffs: &mut [f64]) {
        debug_assert_eq!(coeffs.len(), self.modes);
        debug_assert_eq!(grid.len(), self.points);
        coeffs.iter_mut().for_each(|c| *c = 0.0);
        for (&g, row) in grid.iter().zip(self.synth.chunks_exact(self.modes)) {
            for (c, &e) in coeffs.iter_mut().zip(row) {
                *c += g * e;
            }
        }
        coeffs.iter_mut().for_each(|c| *c *= self.weight);
    }

    pub fn to_grid(&self, u: &FieldCoeffs) -> Result<GridField> {
        if u.len() != self.modes {
            return Err(invalid("coefficient length does not match the transform"));
        }
        let mut values = vec![0.0; self.points];
        self.synthesize(u, &mut values);
        Ok(GridField { values, length: self.length })
    }

    pub fn from_grid(&self, g: &GridField) -> Result<FieldCoeffs> {
        if g.values.len() != self.points || g.length != self.length {
            return Err(invalid("grid does not match the transform"));
        }
        let mut c = vec![0.0; self.modes];
        self.analyze(&g.values, &mut c);
        Ok(FieldCoeffs(c))
    }
}

/// Synthesizes `u` on an M-point grid.
pub fn to_grid(basis: &SpectralBasis, u: &FieldCoeffs, points: usize) -> Result<GridField> {
    SineTransform::for_basis(basis, points)?.to_grid(u)
}

/// Projects grid values onto the N modes of `basis`.
pub fn from_grid(g: &GridField, basis: &SpectralBasis) -> Result<FieldCoeffs> {
    if g.length != basis.length() {
        return Err(invalid("grid length does not match basis length"));
    }
    SineTransform::for_basis(basis, g.points())?.from_grid(g)
}

/// `e^{tA}` acting diagonally: `c_k ↦ e^{-α_k t} c_k`.
pub fn apply_semigroup(basis: &SpectralBasis, u: &FieldCoeffs, t: f64) -> Result<FieldCoeffs> {
    if !(t >= 0.0) {
        return Err(invalid("semigroup time must be non-negative"));
    }
    if u.len() != basis.modes() {
        return Err(invalid("coefficient length does not match basis"));
    }
    Ok(FieldCoeffs(u.iter().zip(basis.alphas()).map(|(c, a)| libm::exp(-a * t) * c).collect()))
}

/// Summability exponent ρ ∈ (2, ∞]; serialised as a number or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinite,
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(v) => s.serialize_f64(*v),
            Exponent::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(alloc::string::String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Exponent::Finite(v)),
            Raw::Str(s) if s == "inf" || s == "infinity" => Ok(Exponent::Infinite),
            Raw::Str(other) => Err(serde::de::Error::custom(alloc::format!(
                "expected a number or \"inf\", got {other:?}"
            ))),
        }
    }
}

/// Truncated series value and an upper bound on its tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesValue {
    pub partial: f64,
    /// `None` when the tail is not summable.
    pub tail_bound: Option<f64>,
}

impl SeriesValue {
    pub fn converges(&self) -> bool {
        self.tail_bound.is_some()
    }

    /// Partial sum plus tail bound, an upper bound on the full series.
    pub fn upper(&self) -> Option<f64> {
        self.tail_bound.map(|t| self.partial + t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisFlags {
    pub slow_series: bool,
    pub fast_series: bool,
    pub slow_exponent: bool,
    pub fast_exponent: bool,
    pub spectral_gap: bool,
    /// `L_b2 < λ`; filled by the model checks.
    pub lipschitz_below_gap: Option<bool>,
    /// `M0 < 1/2`; filled by the model checks.
    pub m0_below_half: Option<bool>,
}

impl HypothesisFlags {
    pub fn all_pass(&self) -> bool {
        self.slow_series
            && self.fast_series
            && self.slow_exponent
            && self.fast_exponent
            && self.spectral_gap
            && self.lipschitz_below_gap.unwrap_or(true)
            && self.m0_below_half.unwrap_or(true)
    }
}

/// Numeric form of the spectral hypotheses. Index 0 is the slow operator,
/// index 1 the fast one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub beta: [f64; 2],
    pub rho: [Exponent; 2],
    pub kappa: [SeriesValue; 2],
    pub zeta: [SeriesValue; 2],
    /// `β(ρ-2)/ρ`, which must stay below one.
    pub exponent_products: [f64; 2],
    pub lambda_gap: f64,
    pub flags: HypothesisFlags,
    pub l_b2: Option<f64>,
    pub m0: Option<f64>,
}

fn kappa_series(basis: &SpectralBasis, rho: Exponent) -> SeriesValue {
    let e0 = basis.sup_bound();
    let n = basis.modes() as f64;
    match rho {
        Exponent::Infinite => {
            // sup_k λ_k |e_k|_0; λ_k is non-increasing so later modes cannot exceed it.
            let sup = basis.lambdas().iter().map(|l| l * e0).fold(0.0, f64::max);
            SeriesValue { partial: sup, tail_bound: Some(0.0) }
        }
        Exponent::Finite(r) => {
            let partial = basis.lambdas().iter().map(|l| libm::pow(*l, r) * e0 * e0).sum();
            let p = basis.noise_decay() * r;
            let tail_bound = if basis.noise_scale() == 0.0 {
                Some(0.0)
            } else if p > 1.0 {
                Some(libm::pow(basis.noise_scale(), r) * e0 * e0 * libm::pow(n, 1.0 - p) / (p - 1.0))
            } else {
                None
            };
            SeriesValue { partial, tail_bound }
        }
    }
}

fn zeta_series(basis: &SpectralBasis, beta: f64) -> SeriesValue {
    let e0sq = 2.0 / basis.length();
    let partial = basis.alphas().iter().map(|a| libm::pow(*a, -beta) * e0sq).sum();
    let p = 2.0 * beta;
    let n = basis.modes() as f64;
    // α_k >= (kπ/L)², so Σ_{k>N} α_k^{-β} <= (L/π)^{2β} ∫_N^∞ x^{-2β} dx.
    let tail_bound = (p > 1.0)
        .then(|| e0sq * libm::pow(basis.length() / PI, p) * libm::pow(n, 1.0 - p) / (p - 1.0));
    SeriesValue { partial, tail_bound }
}

fn exponent_product(beta: f64, rho: Exponent) -> f64 {
    match rho {
        Exponent::Infinite => beta,
        Exponent::Finite(r) => beta * (r - 2.0) / r,
    }
}

/// Evaluates the series and exponent conditions on the two operators.
pub fn check_hypothesis_h1(
    slow: &SpectralBasis,
    fast: &SpectralBasis,
    beta: (f64, f64),
    rho: (Exponent, Exponent),
) -> Result<HypothesisReport> {
    for b in [beta.0, beta.1] {
        if !(b > 0.0) || !b.is_finite() {
            return Err(invalid("β must be a positive finite number"));
        }
    }
    for r in [rho.0, rho.1] {
        if let Exponent::Finite(v) = r {
            if !(v > 2.0) || !v.is_finite() {
                return Err(invalid("ρ must lie in (2, ∞]"));
            }
        }
    }
    let kappa = [kappa_series(slow, rho.0), kappa_series(fast, rho.1)];
    let zeta = [zeta_series(slow, beta.0), zeta_series(fast, beta.1)];
    let exponent_products = [exponent_product(beta.0, rho.0), exponent_product(beta.1, rho.1)];
    let lambda_gap = fast.spectral_gap();
    let flags = HypothesisFlags {
        slow_series: kappa[0].converges() && zeta[0].converges(),
        fast_series: kappa[1].converges() && zeta[1].converges(),
        slow_exponent: exponent_products[0] < 1.0,
        fast_exponent: exponent_products[1] < 1.0,
        spectral_gap: lambda_gap > 0.0,
        lipschitz_below_gap: None,
        m0_below_half: None,
    };
    Ok(HypothesisReport {
        beta: [beta.0, beta.1],
        rho: [rho.0, rho.1],
        kappa,
        zeta,
        exponent_products,
        lambda_gap,
        flags,
        l_b2: None,
        m0: None,
    })
}

/// Shared handle to a transform, used by models and steppers.
pub type SharedTransform = Arc<SineTransform>;

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn dirichlet_eigenvalues() {
        let b = build_basis(BasisKind::DirichletLaplacian, 4, PI, 0.0).unwrap();
        for (a, e) in b.alphas().iter().zip([1.0, 4.0, 9.0, 16.0]) {
            assert!(close(*a, e, 1e-14));
        }
        let b = build_basis(BasisKind::DirichletLaplacian, 1, PI, 0.5).unwrap();
        assert!(close(b.alphas()[0], 1.5, 1e-14));
        let b = build_basis(BasisKind::DirichletLaplacian, 3, 1.0, 0.0).unwrap();
        for (k, a) in b.alphas().iter().enumerate() {
            let kk = (k + 1) as f64;
            assert!(close(*a, kk * kk * PI * PI, 1e-14));
        }
        assert!(close(b.sup_bound(), 2f64.sqrt(), 1e-15));
    }

    #[test]
    fn basis_rejects_bad_arguments() {
        assert!(build_basis(BasisKind::DirichletLaplacian, 0, 1.0, 0.0).is_err());
        assert!(build_basis(BasisKind::DirichletLaplacian, 3, 0.0, 0.0).is_err());
        assert!(build_basis(BasisKind::DirichletLaplacian, 3, -1.0, 0.0).is_err());
        assert!(build_basis(BasisKind::DirichletLaplacian, 3, 1.0, -0.1).is_err());
        assert!(build_basis(BasisKind::ShiftedLaplacian, 3, 1.0, 0.0).is_err());
        let b = build_basis(BasisKind::ShiftedLaplacian, 3, 1.0, 0.2).unwrap();
        assert_eq!(b.boundary(), Boundary::Robin);
    }

    #[test]
    fn semigroup_examples() {
        let b = build_basis(BasisKind::DirichletLaplacian, 3, PI, 0.0).unwrap();
        let u = FieldCoeffs::from_vec(vec![1.0, -2.0, 0.5]);
        assert_eq!(apply_semigroup(&b, &u, 0.0).unwrap(), u);
        let half = apply_semigroup(&b, &FieldCoeffs::unit(3, 1), core::f64::consts::LN_2).unwrap();
        assert!(close(half[0], 0.5, 1e-15));
        assert!(apply_semigroup(&b, &u, -1.0).is_err());
        let once = apply_semigroup(&b, &u, 0.6).unwrap();
        let twice = apply_semigroup(&b, &apply_semigroup(&b, &u, 0.3).unwrap(), 0.3).unwrap();
        for (a, c) in once.iter().zip(twice.iter()) {
            assert!((a - c).abs() <= 1e-12 * a.abs());
        }
    }

    #[test]
    fn single_mode_synthesis() {
        let b = build_basis(BasisKind::DirichletLaplacian, 4, 2.0, 0.0).unwrap();
        let g = to_grid(&b, &FieldCoeffs::unit(4, 1), 9).unwrap();
        for (j, v) in g.values.iter().enumerate() {
            let xi = (j + 1) as f64 * 2.0 / 10.0;
            assert!(close(*v, (2.0f64 / 2.0).sqrt() * (PI * xi / 2.0).sin(), 1e-14));
        }
        let z = to_grid(&b, &FieldCoeffs::zeros(4), 9).unwrap();
        assert!(z.values.iter().all(|v| *v == 0.0));
        assert!(to_grid(&b, &FieldCoeffs::zeros(4), 3).is_err());
    }

    #[test]
    fn hypothesis_white_noise_example() {
        let slow = build_basis(BasisKind::DirichletLaplacian, 32, PI, 0.0).unwrap();
        let fast = build_basis(BasisKind::DirichletLaplacian, 32, PI, 0.5).unwrap().with_role(Role::Fast);
        let r = check_hypothesis_h1(&slow, &fast, (0.75, 0.75), (Exponent::Infinite, Exponent::Infinite)).unwrap();
        assert!(r.flags.all_pass());
        assert!(close(r.lambda_gap, 1.5, 1e-14));
        // Σ k^{-1.5} (2/π) truncated at 32 plus the integral tail 2·32^{-1/2} (2/π).
        let partial: f64 = (1..=32).map(|k| (k as f64).powf(-1.5)).sum::<f64>() * 2.0 / PI;
        assert!(close(r.zeta[0].partial, partial, 1e-13));
        assert!(close(r.zeta[0].tail_bound.unwrap(), 2.0 / 32f64.sqrt() * 2.0 / PI, 1e-13));
        assert!(close(r.kappa[0].partial, (2.0 / PI).sqrt(), 1e-14));
    }

    #[test]
    fn hypothesis_exponent_and_errors() {
        let b = build_basis(BasisKind::DirichletLaplacian, 8, PI, 0.0).unwrap();
        let r = check_hypothesis_h1(&b, &b, (1.0, 1.0), (Exponent::Finite(3.0), Exponent::Finite(3.0))).unwrap();
        assert!(close(r.exponent_products[0], 1.0 / 3.0, 1e-15));
        assert!(r.flags.slow_exponent);
        // white noise with finite ρ: κ diverges
        assert!(!r.flags.slow_series);
        assert!(check_hypothesis_h1(&b, &b, (1.0, 1.0), (Exponent::Finite(2.0), Exponent::Infinite)).is_err());
        assert!(check_hypothesis_h1(&b, &b, (0.0, 1.0), (Exponent::Infinite, Exponent::Infinite)).is_err());
        // β = 1/2 gives a divergent ζ
        let r = check_hypothesis_h1(&b, &b, (0.5, 0.75), (Exponent::Infinite, Exponent::Infinite)).unwrap();
        assert!(!r.flags.slow_series);
        assert!(r.flags.fast_series);
    }

    #[test]
    fn colored_noise_kappa_tail() {
        let b = build_basis(BasisKind::DirichletLaplacian, 16, PI, 0.0).unwrap().with_noise(1.0, 1.0).unwrap();
        let r = check_hypothesis_h1(&b, &b, (0.75, 0.75), (Exponent::Finite(4.0), Exponent::Finite(4.0))).unwrap();
        assert!(r.kappa[0].converges());
        let tail_exact: f64 = (17..200_000).map(|k| (k as f64).powf(-4.0)).sum::<f64>() * 2.0 / PI;
        assert!(r.kappa[0].tail_bound.unwrap() >= tail_exact);
    }
}
