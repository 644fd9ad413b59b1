//! Closed-form asymptotics for `P(∫_T e^{μ + σf} > b)` and `P(N(T) > b)`.
//!
//! Everything is driven by the level `u`, the larger root of
//!
//! ```text
//! g(u) = (2π/σ)^{d/2} u^{-d/2} e^{σu} = b.
//! ```
//!
//! If the field peaks at level `u` somewhere in `T`, its conditional mean
//! there is roughly `u C(t) ≈ u − u|t|²/2`, and integrating `e^{σ u C}` over
//! `R^d` gives `g(u)`. The tail is then
//!
//! ```text
//! P(I(T) > b) ≈ u^{d−1} ∫_T exp{−(u − μ_σ(t))²/2} H(μ, σ, t) dt,    μ_σ = μ/σ,
//! ```
//!
//! with `H` assembled from the spectral moments of `C` and the local shape of
//! the mean (see [`HConstant`]).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::accum::ExactSum;
use crate::covariance::{
    direction_grid, isotropize, spectral_moments, CovarianceKernel, SpectralMoments,
};
use crate::error::{Error, Result};
use crate::field_sim::{Domain, Grid, MeanFunction};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// ρ(T) at or above this value flags the approximation as unreliable.
pub const RHO_THRESHOLD: f64 = 0.15;

/// One tail problem: kernel, mean, box domain, scale and threshold.
#[derive(Debug, Clone)]
pub struct TailQuery {
    pub kernel: Arc<dyn CovarianceKernel>,
    pub mean: Arc<dyn MeanFunction>,
    pub domain: Domain,
    pub sigma: f64,
    pub b: f64,
}

impl TailQuery {
    pub fn new(
        kernel: Arc<dyn CovarianceKernel>,
        mean: Arc<dyn MeanFunction>,
        domain: Domain,
        sigma: f64,
        b: f64,
    ) -> Result<Self> {
        if kernel.dim() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: kernel.dim(),
            });
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::invalid(format!("threshold must be positive, got {b}")));
        }
        Ok(Self {
            kernel,
            mean,
            domain,
            sigma,
            b,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn with_threshold(&self, b: f64) -> Result<Self> {
        Self::new(
            Arc::clone(&self.kernel),
            Arc::clone(&self.mean),
            self.domain.clone(),
            self.sigma,
            b,
        )
    }

    pub fn mu_sigma(&self, t: &[f64]) -> f64 {
        self.mean.value(t) / self.sigma
    }

    /// A string identifying everything but the random stream; used to refuse
    /// merging estimates of different problems.
    pub fn fingerprint(&self) -> String {
        format!(
            "{:?}|{:?}|{:?}|{:e}|{:e}",
            self.kernel, self.mean, self.domain, self.sigma, self.b
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproxMethod {
    /// Domain integral of the local tail density.
    Quadrature,
    /// Second-order expansion of the mean around its unique maximiser.
    Laplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproxTarget {
    Integral,
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ApproxWarning {
    /// ρ(T) ≥ 0.15: the domain is small relative to the correlation length.
    SmallDomain,
    /// The raw value exceeds one; `b` is below the asymptotic regime.
    AboveOne,
}

impl fmt::Display for ApproxWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ApproxWarning::SmallDomain => "small_domain",
            ApproxWarning::AboveOne => "regime_above_one",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxResult {
    /// Raw asymptotic value; may exceed one for small `b`.
    pub probability: f64,
    /// Natural log of `probability`, finite even when it underflows.
    pub log_probability: f64,
    /// `min(probability, 1)`.
    pub clamped: f64,
    pub u: f64,
    pub method: ApproxMethod,
    pub target: ApproxTarget,
    pub rho: RhoDiagnostic,
    pub warnings: Vec<ApproxWarning>,
}

impl ApproxResult {
    fn finish(
        log_probability: f64,
        u: f64,
        method: ApproxMethod,
        rho: RhoDiagnostic,
    ) -> Self {
        let probability = log_probability.exp();
        let mut warnings = Vec::new();
        if rho.rho >= RHO_THRESHOLD {
            warnings.push(ApproxWarning::SmallDomain);
        }
        if probability > 1.0 {
            warnings.push(ApproxWarning::AboveOne);
        }
        Self {
            probability,
            log_probability,
            clamped: probability.min(1.0),
            u,
            method,
            target: ApproxTarget::Integral,
            rho,
            warnings,
        }
    }
}

/// `g(u) = (2π/σ)^{d/2} u^{-d/2} e^{σu}`.
pub fn u_equation(u: f64, sigma: f64, d: usize) -> f64 {
    log_u_equation(u, sigma, d).exp()
}

fn log_u_equation(u: f64, sigma: f64, d: usize) -> f64 {
    let h = d as f64 / 2.0;
    h * (LN_2PI - sigma.ln()) - h * u.ln() + sigma * u
}

/// Smallest `b` for which the u-equation has a root: `g(d / 2σ)`.
pub fn regime_threshold(sigma: f64, d: usize) -> f64 {
    u_equation(d as f64 / (2.0 * sigma), sigma, d)
}

/// The larger root `u ≥ d/(2σ)` of `g(u) = b`.
///
/// `log g` is convex with its minimum at `d/(2σ)`, so Newton on `log g − log b`
/// from any start on the increasing branch lands at or right of the root and
/// then decreases monotonically to it. Bisection takes over if Newton stalls.
pub fn solve_u(b: f64, sigma: f64, d: usize) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) || d == 0 {
        return Err(Error::invalid("solve_u needs sigma > 0 and d ≥ 1"));
    }
    let u_min = d as f64 / (2.0 * sigma);
    let min = regime_threshold(sigma, d);
    if !(b > min) || !b.is_finite() {
        return Err(Error::NoRoot { b, min });
    }
    let log_b = b.ln();
    let psi = |u: f64| log_u_equation(u, sigma, d) - log_b;
    let dpsi = |u: f64| sigma - d as f64 / (2.0 * u);

    let mut u = (u_min + 0.1).max(log_b / sigma);
    for _ in 0..100 {
        let step = psi(u) / dpsi(u);
        let next = u - step;
        if !next.is_finite() || next <= u_min {
            break;
        }
        if (next - u).abs() <= 4.0 * f64::EPSILON * next {
            u = next;
            return Ok(polish(u, &psi, u_min));
        }
        u = next;
    }

    // bisection on [u_min, hi] with hi grown until psi(hi) > 0
    let (mut lo, mut hi) = (u_min, log_b / sigma + d as f64);
    while psi(hi) <= 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if psi(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 2.0 * f64::EPSILON * hi {
            break;
        }
    }
    Ok(polish(0.5 * (lo + hi), &psi, u_min))
}

/// Picks the neighbouring float with the smallest residual.
fn polish(u: f64, psi: &impl Fn(f64) -> f64, u_min: f64) -> f64 {
    let mut best = u;
    let mut best_r = psi(u).abs();
    for cand in [u * (1.0 - f64::EPSILON), u * (1.0 + f64::EPSILON)] {
        let r = psi(cand).abs();
        if cand > u_min && r < best_r {
            best = cand;
            best_r = r;
        }
    }
    best
}

/// Closed form of the Gaussian integral over `z ∈ R^{d(d+1)/2}` in `H`:
///
/// ```text
/// ∫ exp{−½ [ (μ₂₀μ₂₂⁻¹z)² / (1 − μ₂₀μ₂₂⁻¹μ₀₂) + |μ₂₂^{−1/2}z − μ₂₂^{1/2}𝟏/(2σ)|² ]} dz
/// ```
///
/// The exponent is `−½zᵀMz + vᵀz − c` with `M = μ₂₂⁻¹ + aaᵀ/s`, `a = μ₂₂⁻¹μ₀₂`,
/// `s` the Schur complement, `v = 𝟏/(2σ)` and `c = 𝟏ᵀμ₂₂𝟏/(8σ²)`.
pub fn z_integral(moments: &SpectralMoments, sigma: f64) -> Result<f64> {
    Ok(log_z_integral(moments, sigma)?.exp())
}

fn log_z_integral(moments: &SpectralMoments, sigma: f64) -> Result<f64> {
    let m = moments.m();
    let mu22 = moments.mu22();
    let one = moments.one_vector();
    let chol22 = mu22
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NonPositiveDefinite("mu22".into()))?;
    let inv22 = chol22.inverse();
    let a: DVector<f64> = &inv22 * moments.mu20();
    let s = moments.schur_complement()?;
    let precision: DMatrix<f64> = &inv22 + (&a * a.transpose()) / s;
    let chol_m = precision
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NonPositiveDefinite("z-integral precision matrix".into()))?;
    let v: DVector<f64> = one / (2.0 * sigma);
    let c = one.dot(&(mu22 * one)) / (8.0 * sigma * sigma);
    let log_det_m = 2.0 * chol_m.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let quad = v.dot(&chol_m.solve(&v));
    Ok(0.5 * m as f64 * LN_2PI - 0.5 * log_det_m + 0.5 * quad - c)
}

/// The constant `H(μ, σ, t)` with all `t`-independent parts precomputed.
///
/// ```text
/// H = |Γ|^{−1/2} (2π)^{−(d+1)(d+2)/4}
///     · exp{ (𝟏ᵀμ₂₂𝟏 + Σᵢ∂⁴ᵢᵢᵢᵢC(0)) / (8σ²) + (d μ_σ + Tr Δμ_σ) / (2σ) + |∂μ_σ|² }
///     · (z-integral)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct HConstant {
    d: usize,
    sigma: f64,
    log_base: f64,
}

impl HConstant {
    pub fn new(moments: &SpectralMoments, sigma: f64) -> Result<Self> {
        let d = moments.dim();
        let gamma_chol = moments
            .gamma()
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NonPositiveDefinite("Gamma".into()))?;
        let log_det_gamma = 2.0 * gamma_chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let one = moments.one_vector();
        let quartic = one.dot(&(moments.mu22() * one)) + moments.quartic_diag_sum();
        let log_base = -0.5 * log_det_gamma - ((d + 1) * (d + 2)) as f64 / 4.0 * LN_2PI
            + quartic / (8.0 * sigma * sigma)
            + log_z_integral(moments, sigma)?;
        Ok(Self { d, sigma, log_base })
    }

    /// `log H` with the `t`-dependent factor set to one.
    pub fn log_base(&self) -> f64 {
        self.log_base
    }

    pub fn log_value(&self, mean: &dyn MeanFunction, t: &[f64]) -> f64 {
        let grad_sq: f64 = mean.gradient(t).iter().map(|g| g * g).sum();
        self.log_from_local(mean.value(t), grad_sq, mean.hessian(t).trace())
    }

    /// `log H` from the mean's value, squared gradient norm and Laplacian
    /// (all unscaled by σ).
    pub fn log_from_local(&self, mu: f64, grad_sq: f64, laplacian: f64) -> f64 {
        let s = self.sigma;
        self.log_base + (self.d as f64 * mu / s + laplacian / s) / (2.0 * s) + grad_sq / (s * s)
    }

    pub fn value(&self, mean: &dyn MeanFunction, t: &[f64]) -> f64 {
        self.log_value(mean, t).exp()
    }
}

pub fn h_constant(moments: &SpectralMoments, mean: &dyn MeanFunction, sigma: f64, t: &[f64]) -> Result<f64> {
    Ok(HConstant::new(moments, sigma)?.value(mean, t))
}

/// Inscribed-ball radius `r(T)` and `ρ(T) = sup_{|t| = r(T)} C(t)/C(0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoDiagnostic {
    pub r: f64,
    pub rho: f64,
}

impl RhoDiagnostic {
    pub fn recommended(&self) -> bool {
        self.rho < RHO_THRESHOLD
    }
}

pub fn rho_diagnostic(kernel: &dyn CovarianceKernel, domain: &Domain) -> RhoDiagnostic {
    rho_diagnostic_with(kernel, domain, 64)
}

/// [`rho_diagnostic`] maximising over `directions` directions (ignored in
/// one dimension).
pub fn rho_diagnostic_with(kernel: &dyn CovarianceKernel, domain: &Domain, directions: usize) -> RhoDiagnostic {
    let d = domain.dim();
    let r = domain.inradius();
    let c0 = kernel.eval(&vec![0.0; d]);
    let rho = direction_grid(d, directions)
        .iter()
        .map(|v| {
            let t: Vec<f64> = v.iter().map(|x| r * x).collect();
            kernel.eval(&t) / c0
        })
        .fold(f64::NEG_INFINITY, f64::max);
    RhoDiagnostic { r, rho }
}

/// Resolution and diagnostics knobs for the approximations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxSettings {
    /// Quadrature nodes per `u^{-1/2}` length along each axis.
    pub nodes_per_sqrt_u: f64,
    /// Lower bound on quadrature nodes per unit length.
    pub min_nodes_per_unit: f64,
    /// Upper bound on the total quadrature node count.
    pub max_nodes: usize,
    /// Direction count for ρ(T).
    pub directions: usize,
}

impl Default for ApproxSettings {
    fn default() -> Self {
        Self {
            nodes_per_sqrt_u: 8.0,
            min_nodes_per_unit: 8.0,
            max_nodes: 4_000_000,
            directions: 64,
        }
    }
}

/// The query rewritten for a normalised kernel.
///
/// With `A = (−ΔC(0))^{−1/2}`, the field `f(A s)` has a normalised kernel on
/// `A⁻¹T` and `∫_T = |det A| ∫_{A⁻¹T}`, so the threshold becomes `b/|det A|`
/// and the mean is read through `s ↦ μ(A s)`. Integrals over `A⁻¹T` are
/// evaluated in `t` coordinates with `ds = dt / |det A|`.
struct Normalised {
    u: f64,
    h: HConstant,
    transform: Option<DMatrix<f64>>,
    log_jacobian: f64,
}

impl Normalised {
    fn new(query: &TailQuery) -> Result<Self> {
        let d = query.dim();
        let (kernel, a) = isotropize(&query.kernel)?;
        let identity = a == DMatrix::<f64>::identity(d, d);
        let log_jacobian = if identity { 0.0 } else { a.determinant().abs().ln() };
        let u = solve_u(query.b / log_jacobian.exp(), query.sigma, d).map_err(|e| match e {
            Error::NoRoot { min, .. } => Error::NoRoot {
                b: query.b,
                min: min * log_jacobian.exp(),
            },
            other => other,
        })?;
        let moments = spectral_moments(kernel.as_ref())?;
        Ok(Self {
            u,
            h: HConstant::new(&moments, query.sigma)?,
            transform: (!identity).then_some(a),
            log_jacobian,
        })
    }

    /// Gradient and Hessian of `s ↦ μ(A s)` at `t = A s`.
    fn local(&self, mean: &dyn MeanFunction, t: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let g = mean.gradient(t);
        let h = mean.hessian(t);
        match &self.transform {
            None => (g, h),
            Some(a) => {
                let g = a.transpose() * DVector::from_vec(g);
                (g.as_slice().to_vec(), a.transpose() * h * a)
            }
        }
    }

    fn log_h(&self, mean: &dyn MeanFunction, t: &[f64]) -> f64 {
        if self.transform.is_none() {
            return self.h.log_value(mean, t);
        }
        let (g, hess) = self.local(mean, t);
        let grad_sq: f64 = g.iter().map(|x| x * x).sum();
        self.h.log_from_local(mean.value(t), grad_sq, hess.trace())
    }
}

/// Quadrature form of the tail approximation over the whole domain.
pub fn tail_integral_approx(query: &TailQuery) -> Result<ApproxResult> {
    tail_integral_approx_with(query, &ApproxSettings::default())
}

pub fn tail_integral_approx_with(query: &TailQuery, settings: &ApproxSettings) -> Result<ApproxResult> {
    let d = query.dim();
    let norm = Normalised::new(query)?;
    let u = norm.u;

    let per_unit = settings
        .min_nodes_per_unit
        .max(settings.nodes_per_sqrt_u * u.max(1.0).sqrt());
    let mut resolution: Vec<usize> = query
        .domain
        .widths()
        .map(|w| ((per_unit * w - 1e-9).ceil() as usize).max(2))
        .collect();
    let total: f64 = resolution.iter().map(|&n| n as f64).product();
    if total > settings.max_nodes as f64 {
        let shrink = (settings.max_nodes as f64 / total).powf(1.0 / d as f64);
        for n in &mut resolution {
            *n = ((*n as f64 * shrink).floor() as usize).max(2);
        }
    }
    let grid = Grid::new(query.domain.clone(), resolution)?;

    let logs: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let t = grid.node(i);
            let mu = query.mu_sigma(t);
            -0.5 * (u - mu).powi(2) + norm.log_h(query.mean.as_ref(), t)
        })
        .collect();
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: ExactSum = logs.iter().map(|l| (l - peak).exp()).collect();
    let log_p = (d as f64 - 1.0) * u.ln() + peak + (sum.value() * grid.cell_volume()).ln() - norm.log_jacobian;

    let rho = rho_diagnostic_with(query.kernel.as_ref(), &query.domain, settings.directions);
    Ok(ApproxResult::finish(log_p, u, ApproxMethod::Quadrature, rho))
}

/// The same value as [`tail_integral_approx`], tagged as a count tail:
/// the Poisson layer does not change the first-order asymptotics.
pub fn tail_count_approx(query: &TailQuery) -> Result<ApproxResult> {
    tail_count_approx_with(query, &ApproxSettings::default())
}

pub fn tail_count_approx_with(query: &TailQuery, settings: &ApproxSettings) -> Result<ApproxResult> {
    let mut r = tail_integral_approx_with(query, settings)?;
    r.target = ApproxTarget::Count;
    Ok(r)
}

/// Location of the unique interior maximum of the mean.
pub fn locate_mean_maximum(mean: &dyn MeanFunction, domain: &Domain) -> Result<Vec<f64>> {
    if mean.is_constant() {
        return Err(Error::NoInteriorMax("constant mean".into()));
    }
    let grid = Grid::with_density(domain.clone(), 8.0);
    let values = grid.map(|t| mean.value(t));
    let (arg, max) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    if max - lo <= 1e-12 * (1.0 + max.abs()) {
        return Err(Error::NoInteriorMax("mean is constant on the search grid".into()));
    }
    let center = grid.multi_index(arg);
    for (i, &v) in values.iter().enumerate() {
        if v >= max - 1e-6 {
            let idx = grid.multi_index(i);
            let far = idx.iter().zip(&center).any(|(a, b)| a.abs_diff(*b) > 1);
            if far {
                return Err(Error::NoInteriorMax(format!(
                    "grid maxima at {:?} and {:?} tie within 1e-6",
                    grid.node(arg),
                    grid.node(i)
                )));
            }
        }
    }

    // compass search, confined to the box
    let bounds = domain.bounds();
    let mut t = grid.node(arg).to_vec();
    let mut best = max;
    let mut step: Vec<f64> = grid.spacing().to_vec();
    while step.iter().any(|&s| s > 1e-9) {
        let mut improved = false;
        for a in 0..t.len() {
            for dir in [1.0, -1.0] {
                let mut cand = t.clone();
                cand[a] = (cand[a] + dir * step[a]).clamp(bounds[a].0, bounds[a].1);
                let v = mean.value(&cand);
                if v > best {
                    best = v;
                    t = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            for s in &mut step {
                *s *= 0.5;
            }
        }
    }

    for (a, &(lo, hi)) in bounds.iter().enumerate() {
        let tol = 1e-7 * (hi - lo);
        if t[a] - lo <= tol || hi - t[a] <= tol {
            return Err(Error::NoInteriorMax(format!("maximum at boundary point {t:?}")));
        }
    }
    Ok(t)
}

/// Laplace form around the unique interior maximiser `t*` of the mean:
///
/// ```text
/// (2π)^{d/2} |det Δμ_σ(t*)|^{−1/2} H(μ, σ, t*) u^{d/2−1} exp{−(u − μ_σ(t*))²/2}
/// ```
pub fn tail_laplace_approx(query: &TailQuery) -> Result<ApproxResult> {
    tail_laplace_approx_with(query, &ApproxSettings::default())
}

pub fn tail_laplace_approx_with(query: &TailQuery, settings: &ApproxSettings) -> Result<ApproxResult> {
    let d = query.dim();
    let norm = Normalised::new(query)?;
    let u = norm.u;
    let t_star = locate_mean_maximum(query.mean.as_ref(), &query.domain)?;

    let neg_hess = -norm.local(query.mean.as_ref(), &t_star).1 / query.sigma;
    let eig = SymmetricEigen::new((&neg_hess + neg_hess.transpose()) * 0.5).eigenvalues;
    if eig.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::NoInteriorMax(format!(
            "Hessian of the mean at {t_star:?} is not negative definite"
        )));
    }
    let log_det: f64 = eig.iter().map(|l| l.ln()).sum();
    let mu_star = query.mu_sigma(&t_star);
    let log_p = 0.5 * d as f64 * LN_2PI - 0.5 * log_det
        + norm.log_h(query.mean.as_ref(), &t_star)
        + (0.5 * d as f64 - 1.0) * u.ln()
        - 0.5 * (u - mu_star).powi(2);

    let rho = rho_diagnostic_with(query.kernel.as_ref(), &query.domain, settings.directions);
    Ok(ApproxResult::finish(log_p, u, ApproxMethod::Laplace, rho))
}
