//! Stationary covariance kernels, their spectral moments, and the regularity
//! checks the tail asymptotics rely on.
//!
//! Second-derivative coordinates are always ordered with the `d` diagonal
//! entries first and then the pairs `(i, j)`, `i < j`, lexicographically; see
//! [`second_order_index`].

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::field_sim::{Domain, Grid, MeanFunction};

/// How the derivatives of a kernel at the origin are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeSource {
    Analytic,
    FiniteDifference,
}

/// A stationary correlation function `C(t) = Cov(f(s + t), f(s))`.
///
/// Implementors only need [`eval`](CovarianceKernel::eval); analytic
/// derivative tables at the origin are optional and otherwise replaced by
/// Richardson-extrapolated central differences.
pub trait CovarianceKernel: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, lag: &[f64]) -> f64;

    /// Typical correlation length, used to scale finite-difference steps.
    fn length_scale(&self) -> f64 {
        1.0
    }

    /// `∂²C(0)/∂t_i∂t_j`, if known in closed form.
    fn second_derivative_at_origin(&self, _i: usize, _j: usize) -> Option<f64> {
        None
    }

    /// `∂⁴C(0)/∂t_i∂t_j∂t_k∂t_l`, if known in closed form.
    fn fourth_derivative_at_origin(&self, _i: usize, _j: usize, _k: usize, _l: usize) -> Option<f64> {
        None
    }

    fn derivative_source(&self) -> DerivativeSource {
        if self.fourth_derivative_at_origin(0, 0, 0, 0).is_some()
            && self.second_derivative_at_origin(0, 0).is_some()
        {
            DerivativeSource::Analytic
        } else {
            DerivativeSource::FiniteDifference
        }
    }
}

/// `C(t) = exp(-½ tᵀ S t)` for a symmetric positive definite scale matrix `S`.
///
/// This is the characteristic function of `N(0, S)`, so the derivatives at the
/// origin are Gaussian moments: `∂²C(0) = -S` and
/// `∂⁴_{ijkl}C(0) = S_ij S_kl + S_ik S_jl + S_il S_jk`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianAniso {
    scale: DMatrix<f64>,
}

impl GaussianAniso {
    pub fn new(scale: DMatrix<f64>) -> Result<Self> {
        if !scale.is_square() || scale.nrows() == 0 {
            return Err(Error::invalid("scale matrix must be square and non-empty"));
        }
        let d = scale.nrows();
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (scale[(i, j)], scale[(j, i)]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::invalid("scale matrix must be symmetric"));
                }
            }
        }
        if scale.clone().cholesky().is_none() {
            return Err(Error::NonPositiveDefinite("kernel scale matrix".into()));
        }
        Ok(Self { scale })
    }

    pub fn scale(&self) -> &DMatrix<f64> {
        &self.scale
    }
}

impl CovarianceKernel for GaussianAniso {
    fn dim(&self) -> usize {
        self.scale.nrows()
    }

    fn eval(&self, lag: &[f64]) -> f64 {
        let d = self.dim();
        let mut q = 0.0;
        for i in 0..d {
            for j in 0..d {
                q += lag[i] * self.scale[(i, j)] * lag[j];
            }
        }
        (-0.5 * q).exp()
    }

    fn length_scale(&self) -> f64 {
        let max_diag = (0..self.dim()).map(|i| self.scale[(i, i)]).fold(0.0, f64::max);
        1.0 / max_diag.sqrt()
    }

    fn second_derivative_at_origin(&self, i: usize, j: usize) -> Option<f64> {
        Some(-self.scale[(i, j)])
    }

    fn fourth_derivative_at_origin(&self, i: usize, j: usize, k: usize, l: usize) -> Option<f64> {
        let s = &self.scale;
        Some(s[(i, j)] * s[(k, l)] + s[(i, k)] * s[(j, l)] + s[(i, l)] * s[(j, k)])
    }
}

/// Isotropic squared-exponential kernel `C(t) = exp(-|t|² / (2ℓ²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredExponential {
    inner: GaussianAniso,
    length_scale: f64,
}

impl SquaredExponential {
    pub fn new(dim: usize, length_scale: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("kernel dimension must be positive"));
        }
        if !(length_scale > 0.0 && length_scale.is_finite()) {
            return Err(Error::invalid("length scale must be positive and finite"));
        }
        let s = DMatrix::identity(dim, dim) / (length_scale * length_scale);
        Ok(Self {
            inner: GaussianAniso::new(s)?,
            length_scale,
        })
    }

    /// Unit length scale, which already satisfies the `ΔC(0) = -I` normalisation.
    pub fn unit(dim: usize) -> Self {
        Self::new(dim, 1.0).expect("unit squared-exponential kernel is valid")
    }
}

impl CovarianceKernel for SquaredExponential {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, lag: &[f64]) -> f64 {
        let r2: f64 = lag.iter().map(|x| x * x).sum();
        (-0.5 * r2 / (self.length_scale * self.length_scale)).exp()
    }

    fn length_scale(&self) -> f64 {
        self.length_scale
    }

    fn second_derivative_at_origin(&self, i: usize, j: usize) -> Option<f64> {
        self.inner.second_derivative_at_origin(i, j)
    }

    fn fourth_derivative_at_origin(&self, i: usize, j: usize, k: usize, l: usize) -> Option<f64> {
        self.inner.fourth_derivative_at_origin(i, j, k, l)
    }
}

/// `C'(s) = C(A s)` for a fixed linear map `A`.
#[derive(Debug, Clone)]
pub struct TransformedKernel {
    inner: Arc<dyn CovarianceKernel>,
    transform: DMatrix<f64>,
}

impl TransformedKernel {
    pub fn new(inner: Arc<dyn CovarianceKernel>, transform: DMatrix<f64>) -> Result<Self> {
        let d = inner.dim();
        if transform.nrows() != d || transform.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: transform.nrows(),
            });
        }
        Ok(Self { inner, transform })
    }

    pub fn transform(&self) -> &DMatrix<f64> {
        &self.transform
    }

    fn map(&self, s: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|j| self.transform[(i, j)] * s[j]).sum())
            .collect()
    }
}

impl CovarianceKernel for TransformedKernel {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, lag: &[f64]) -> f64 {
        self.inner.eval(&self.map(lag))
    }

    fn length_scale(&self) -> f64 {
        let norm = SymmetricEigen::new(&self.transform.transpose() * &self.transform)
            .eigenvalues
            .max()
            .sqrt();
        self.inner.length_scale() / norm
    }

    fn second_derivative_at_origin(&self, i: usize, j: usize) -> Option<f64> {
        let a = &self.transform;
        let d = self.dim();
        let mut acc = 0.0;
        for p in 0..d {
            for q in 0..d {
                acc += a[(p, i)] * a[(q, j)] * self.inner.second_derivative_at_origin(p, q)?;
            }
        }
        Some(acc)
    }

    fn fourth_derivative_at_origin(&self, i: usize, j: usize, k: usize, l: usize) -> Option<f64> {
        let a = &self.transform;
        let d = self.dim();
        let mut acc = 0.0;
        for p in 0..d {
            for q in 0..d {
                for r in 0..d {
                    for s in 0..d {
                        let w = a[(p, i)] * a[(q, j)] * a[(r, k)] * a[(s, l)];
                        if w != 0.0 {
                            acc += w * self.inner.fourth_derivative_at_origin(p, q, r, s)?;
                        }
                    }
                }
            }
        }
        Some(acc)
    }
}

/// A kernel given by a closure; derivatives come from finite differences.
pub struct FnKernel<F> {
    dim: usize,
    length_scale: f64,
    f: F,
}

impl<F> FnKernel<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self {
            dim,
            length_scale: 1.0,
            f,
        }
    }

    pub fn with_length_scale(mut self, length_scale: f64) -> Self {
        self.length_scale = length_scale;
        self
    }
}

impl<F> fmt::Debug for FnKernel<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnKernel")
            .field("dim", &self.dim)
            .field("length_scale", &self.length_scale)
            .finish_non_exhaustive()
    }
}

impl<F> CovarianceKernel for FnKernel<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, lag: &[f64]) -> f64 {
        (self.f)(lag)
    }

    fn length_scale(&self) -> f64 {
        self.length_scale
    }
}

/// Index pairs of the `d(d+1)/2` second-derivative coordinates.
pub fn second_order_index(d: usize) -> Vec<(usize, usize)> {
    let mut idx: Vec<(usize, usize)> = (0..d).map(|i| (i, i)).collect();
    for i in 0..d {
        for j in (i + 1)..d {
            idx.push((i, j));
        }
    }
    idx
}

/// The vector with ones on the diagonal coordinates and zeros elsewhere.
pub fn one_vector(d: usize) -> DVector<f64> {
    let m = d * (d + 1) / 2;
    DVector::from_fn(m, |p, _| if p < d { 1.0 } else { 0.0 })
}

/// Derivatives of `C` at the origin collected in the joint covariance of
/// `(f(0), ∂²f(0))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMoments {
    d: usize,
    mu20: DVector<f64>,
    mu22: DMatrix<f64>,
    gamma: DMatrix<f64>,
    quartic_diag_sum: f64,
    one_vector: DVector<f64>,
    source: DerivativeSource,
}

impl SpectralMoments {
    /// Assembles the moment blocks from derivative accessors and checks that
    /// `Γ` and `μ₂₂` are positive definite.
    pub fn from_derivatives(
        d: usize,
        source: DerivativeSource,
        second: impl Fn(usize, usize) -> f64,
        fourth: impl Fn(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let idx = second_order_index(d);
        let m = idx.len();
        let mu20 = DVector::from_fn(m, |p, _| second(idx[p].0, idx[p].1));
        let mut mu22 = DMatrix::zeros(m, m);
        for p in 0..m {
            for q in p..m {
                let (i, j) = idx[p];
                let (k, l) = idx[q];
                let v = fourth(i, j, k, l);
                mu22[(p, q)] = v;
                mu22[(q, p)] = v;
            }
        }
        let quartic_diag_sum = (0..d).map(|i| fourth(i, i, i, i)).sum();

        let mut gamma = DMatrix::zeros(m + 1, m + 1);
        gamma[(0, 0)] = 1.0;
        for p in 0..m {
            gamma[(0, p + 1)] = mu20[p];
            gamma[(p + 1, 0)] = mu20[p];
            for q in 0..m {
                gamma[(p + 1, q + 1)] = mu22[(p, q)];
            }
        }

        check_positive_definite(&mu22, "mu22")?;
        check_positive_definite(&gamma, "Gamma")?;

        let moments = Self {
            d,
            mu20,
            mu22,
            gamma,
            quartic_diag_sum,
            one_vector: one_vector(d),
            source,
        };
        let schur = moments.schur_complement()?;
        if !(schur > 0.0) {
            return Err(Error::NonPositiveDefinite(format!(
                "Schur complement 1 - mu20 mu22^-1 mu02 = {schur:e}"
            )));
        }
        Ok(moments)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of second-derivative coordinates, `d(d+1)/2`.
    pub fn m(&self) -> usize {
        self.mu20.len()
    }

    pub fn mu20(&self) -> &DVector<f64> {
        &self.mu20
    }

    pub fn mu22(&self) -> &DMatrix<f64> {
        &self.mu22
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    /// `Σ_i ∂⁴_{iiii} C(0)`.
    pub fn quartic_diag_sum(&self) -> f64 {
        self.quartic_diag_sum
    }

    pub fn one_vector(&self) -> &DVector<f64> {
        &self.one_vector
    }

    pub fn source(&self) -> DerivativeSource {
        self.source
    }

    /// `1 - μ₂₀ μ₂₂⁻¹ μ₀₂`, the conditional variance of `f(0)` given `∂²f(0)`.
    pub fn schur_complement(&self) -> Result<f64> {
        let chol = self
            .mu22
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NonPositiveDefinite("mu22".into()))?;
        let x = chol.solve(&self.mu20);
        Ok(1.0 - self.mu20.dot(&x))
    }
}

/// Cholesky with a relative diagonal jitter of `1e-12` before giving up.
fn check_positive_definite(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.clone().cholesky().is_some() {
        return Ok(());
    }
    let n = a.nrows();
    let mean_diag = a.trace().abs() / n as f64;
    let jittered = a + DMatrix::identity(n, n) * (1e-12 * mean_diag.max(f64::MIN_POSITIVE));
    if jittered.cholesky().is_some() {
        Ok(())
    } else {
        Err(Error::NonPositiveDefinite(what.to_string()))
    }
}

/// Spectral moments, from the analytic derivative table when the kernel has
/// one and from finite differences otherwise.
pub fn spectral_moments(kernel: &dyn CovarianceKernel) -> Result<SpectralMoments> {
    match kernel.derivative_source() {
        DerivativeSource::Analytic => {
            let d = kernel.dim();
            SpectralMoments::from_derivatives(
                d,
                DerivativeSource::Analytic,
                |i, j| kernel.second_derivative_at_origin(i, j).unwrap_or(f64::NAN),
                |i, j, k, l| kernel.fourth_derivative_at_origin(i, j, k, l).unwrap_or(f64::NAN),
            )
        }
        DerivativeSource::FiniteDifference => spectral_moments_fd(kernel),
    }
}

/// Spectral moments from Richardson-extrapolated central differences,
/// ignoring any analytic table.
pub fn spectral_moments_fd(kernel: &dyn CovarianceKernel) -> Result<SpectralMoments> {
    let d = kernel.dim();
    let fd = FiniteDifference::for_kernel(kernel);
    let idx = second_order_index(d);
    let m = idx.len();

    let mut second = vec![0.0; m];
    for (p, &(i, j)) in idx.iter().enumerate() {
        second[p] = fd.derivative(kernel, &[i, j])?;
    }
    let mut fourth = vec![vec![0.0; m]; m];
    for p in 0..m {
        for q in p..m {
            let (i, j) = idx[p];
            let (k, l) = idx[q];
            let v = fd.derivative(kernel, &[i, j, k, l])?;
            fourth[p][q] = v;
            fourth[q][p] = v;
        }
    }
    let mut diag4 = vec![0.0; d];
    for (i, slot) in diag4.iter_mut().enumerate() {
        *slot = fourth[i][i];
    }

    let pair_pos = |i: usize, j: usize| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        idx.iter().position(|&x| x == (a, b)).expect("pair in index")
    };
    SpectralMoments::from_derivatives(
        d,
        DerivativeSource::FiniteDifference,
        |i, j| second[pair_pos(i, j)],
        |i, j, k, l| {
            if i == j && j == k && k == l {
                diag4[i]
            } else {
                fourth[pair_pos(i, j)][pair_pos(k, l)]
            }
        },
    )
}

/// Central-difference derivatives at the origin with one Richardson step.
#[derive(Debug, Clone, Copy)]
pub struct FiniteDifference {
    /// Base step `h`; the extrapolation also uses `h/2`.
    pub step: f64,
    /// Relative disagreement between the two step sizes tolerated before
    /// declaring the derivative unavailable.
    pub divergence_tol: f64,
}

impl FiniteDifference {
    pub fn for_kernel(kernel: &dyn CovarianceKernel) -> Self {
        Self {
            step: f64::EPSILON.powf(1.0 / 8.0) * kernel.length_scale(),
            divergence_tol: 1e-2,
        }
    }

    /// Mixed partial derivative at the origin; `axes` lists the
    /// differentiation axis once per order, e.g. `[0, 0, 1, 1]`.
    pub fn derivative(&self, kernel: &dyn CovarianceKernel, axes: &[usize]) -> Result<f64> {
        let d = kernel.dim();
        let mut orders = vec![0usize; d];
        for &a in axes {
            if a >= d {
                return Err(Error::invalid(format!("axis {a} out of range for d = {d}")));
            }
            orders[a] += 1;
        }
        if orders.iter().any(|&o| o > 4) {
            return Err(Error::invalid("per-axis derivative order above 4"));
        }
        let coarse = tensor_stencil(kernel, &orders, self.step);
        let fine = tensor_stencil(kernel, &orders, self.step / 2.0);
        if !(coarse.is_finite() && fine.is_finite()) {
            return Err(Error::DerivativeUnavailable(format!("non-finite difference for axes {axes:?}")));
        }
        let scale = fine.abs().max(1.0);
        if (coarse - fine).abs() > self.divergence_tol * scale {
            return Err(Error::DerivativeUnavailable(format!(
                "axes {axes:?}: {coarse:e} at h vs {fine:e} at h/2"
            )));
        }
        Ok((4.0 * fine - coarse) / 3.0)
    }
}

/// Offsets (in units of h) and weights of the second-order central stencils.
fn stencil(order: usize) -> &'static [(f64, f64)] {
    match order {
        0 => &[(0.0, 1.0)],
        1 => &[(1.0, 0.5), (-1.0, -0.5)],
        2 => &[(1.0, 1.0), (0.0, -2.0), (-1.0, 1.0)],
        3 => &[(2.0, 0.5), (1.0, -1.0), (-1.0, 1.0), (-2.0, -0.5)],
        4 => &[(2.0, 1.0), (1.0, -4.0), (0.0, 6.0), (-1.0, -4.0), (-2.0, 1.0)],
        _ => unreachable!("orders are validated by the caller"),
    }
}

fn tensor_stencil(kernel: &dyn CovarianceKernel, orders: &[usize], h: f64) -> f64 {
    let d = orders.len();
    let stencils: Vec<&[(f64, f64)]> = orders.iter().map(|&o| stencil(o)).collect();
    let mut counter = vec![0usize; d];
    let mut point = vec![0.0; d];
    let mut acc = 0.0;
    loop {
        let mut w = 1.0;
        for a in 0..d {
            let (off, coef) = stencils[a][counter[a]];
            point[a] = off * h;
            w *= coef;
        }
        acc += w * kernel.eval(&point);

        let mut a = 0;
        loop {
            if a == d {
                let total: usize = orders.iter().sum();
                return acc / h.powi(total as i32);
            }
            counter[a] += 1;
            if counter[a] < stencils[a].len() {
                break;
            }
            counter[a] = 0;
            a += 1;
        }
    }
}

/// Hessian of `C` at the origin.
pub fn hessian_at_origin(kernel: &dyn CovarianceKernel) -> Result<DMatrix<f64>> {
    let d = kernel.dim();
    let fd = FiniteDifference::for_kernel(kernel);
    let mut h = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = match kernel.second_derivative_at_origin(i, j) {
                Some(v) => v,
                None => fd.derivative(kernel, &[i, j])?,
            };
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

/// Rescales a kernel so that its Hessian at the origin is `-I`.
///
/// With `Σ = -ΔC(0)`, the returned kernel is `s ↦ C(Σ^{-1/2} s)` and the
/// returned matrix is the symmetric `Σ^{-1/2}`. A field `g` with the original
/// kernel satisfies `g(t) = f(Σ^{1/2} t)` for a normalised field `f`, so a box
/// `T` maps to `Σ^{1/2} T` and the integral picks up `det(Σ^{-1/2})`.
pub fn isotropize(
    kernel: &Arc<dyn CovarianceKernel>,
) -> Result<(Arc<dyn CovarianceKernel>, DMatrix<f64>)> {
    let d = kernel.dim();
    let sigma = -hessian_at_origin(kernel.as_ref())?;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sigma);
    let det: f64 = eig.eigenvalues.iter().product();
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::DegenerateHessian { det });
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let transform = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
    let transform = (&transform + transform.transpose()) * 0.5;

    let identity = DMatrix::<f64>::identity(d, d);
    if (&transform - &identity).amax() <= 1e-12 {
        return Ok((Arc::clone(kernel), identity));
    }
    let mapped = TransformedKernel::new(Arc::clone(kernel), transform.clone())?;
    Ok((Arc::new(mapped), transform))
}

/// Unit directions used by radial scans: `±e₁` in one dimension, equally
/// spaced angles in two, a Fibonacci lattice on the sphere in three or more
/// (only the first three coordinates are populated beyond that).
pub fn direction_grid(d: usize, count: usize) -> Vec<Vec<f64>> {
    let count = count.max(2);
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * k as f64;
                    let mut v = vec![0.0; d];
                    v[0] = r * a.cos();
                    v[1] = r * a.sin();
                    v[2] = z;
                    v
                })
                .collect()
        }
    }
}

/// The regularity conditions under which the tail asymptotics hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// C1: zero mean, unit variance.
    UnitVariance,
    /// C2: smoothness of the field and the mean.
    Smoothness,
    /// C3: compact domain with piecewise smooth boundary.
    CompactDomain,
    /// C4: `ΔC(0) = -I`.
    NormalizedHessian,
    /// C5: `λ ↦ C(λt)` non-increasing on `λ > 0`.
    RadialMonotonicity,
    /// C6: a non-constant mean is maximised away from the boundary.
    InteriorMeanMaximum,
}

impl Condition {
    pub const ALL: [Condition; 6] = [
        Condition::UnitVariance,
        Condition::Smoothness,
        Condition::CompactDomain,
        Condition::NormalizedHessian,
        Condition::RadialMonotonicity,
        Condition::InteriorMeanMaximum,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Condition::UnitVariance => "C1",
            Condition::Smoothness => "C2",
            Condition::CompactDomain => "C3",
            Condition::NormalizedHessian => "C4",
            Condition::RadialMonotonicity => "C5",
            Condition::InteriorMeanMaximum => "C6",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionStatus {
    Pass,
    /// Passed on a finite probe set; the condition itself is global.
    PassSampled,
    Fail,
    NotChecked,
}

impl ConditionStatus {
    pub fn is_pass(self) -> bool {
        matches!(self, ConditionStatus::Pass | ConditionStatus::PassSampled)
    }
}

impl fmt::Display for ConditionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditionStatus::Pass => "pass",
            ConditionStatus::PassSampled => "pass (sampled)",
            ConditionStatus::Fail => "fail",
            ConditionStatus::NotChecked => "not-checked",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionCheck {
    pub condition: Condition,
    pub status: ConditionStatus,
    pub message: String,
    pub evidence: Vec<(&'static str, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    checks: Vec<ConditionCheck>,
}

impl ConditionReport {
    pub fn checks(&self) -> &[ConditionCheck] {
        &self.checks
    }

    pub fn get(&self, condition: Condition) -> &ConditionCheck {
        self.checks
            .iter()
            .find(|c| c.condition == condition)
            .expect("report lists every condition")
    }

    pub fn status(&self, condition: Condition) -> ConditionStatus {
        self.get(condition).status
    }

    /// True when no checked condition failed.
    pub fn all_checked_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status != ConditionStatus::Fail)
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{}: {} - {}", c.condition.label(), c.status, c.message)?;
        }
        Ok(())
    }
}

/// Probe resolution for [`check_conditions`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionOptions {
    pub directions: usize,
    pub radial_points: usize,
    /// Radial extent of the C5 scan; defaults to the domain diameter.
    pub max_radius: Option<f64>,
    /// Grid density used to locate the maximum of the mean.
    pub nodes_per_unit: f64,
}

impl Default for ConditionOptions {
    fn default() -> Self {
        Self {
            directions: 64,
            radial_points: 128,
            max_radius: None,
            nodes_per_unit: 8.0,
        }
    }
}

/// Checks the regularity conditions numerically. Failures are reported, never
/// raised.
pub fn check_conditions(
    kernel: &dyn CovarianceKernel,
    domain: &Domain,
    mean: &dyn MeanFunction,
    options: &ConditionOptions,
) -> ConditionReport {
    let d = kernel.dim();
    let mut checks = Vec::with_capacity(6);

    let c0 = kernel.eval(&vec![0.0; d]);
    let c1_ok = (c0 - 1.0).abs() <= 1e-10;
    checks.push(ConditionCheck {
        condition: Condition::UnitVariance,
        status: if c1_ok { ConditionStatus::Pass } else { ConditionStatus::Fail },
        message: format!("C(0) = {c0}"),
        evidence: vec![("c0", c0)],
    });

    checks.push(ConditionCheck {
        condition: Condition::Smoothness,
        status: ConditionStatus::NotChecked,
        message: "smoothness is declared, not verified".into(),
        evidence: vec![],
    });
    checks.push(ConditionCheck {
        condition: Condition::CompactDomain,
        status: ConditionStatus::NotChecked,
        message: "domains are boxes by construction".into(),
        evidence: vec![],
    });

    checks.push(match hessian_at_origin(kernel) {
        Ok(h) => {
            let dev = (&h + DMatrix::<f64>::identity(d, d)).amax();
            ConditionCheck {
                condition: Condition::NormalizedHessian,
                status: if dev <= 1e-6 { ConditionStatus::Pass } else { ConditionStatus::Fail },
                message: format!("max |ΔC(0) + I| = {dev:e}"),
                evidence: vec![("max_deviation", dev)],
            }
        }
        Err(e) => ConditionCheck {
            condition: Condition::NormalizedHessian,
            status: ConditionStatus::Fail,
            message: format!("Hessian unavailable: {e}"),
            evidence: vec![],
        },
    });

    checks.push(radial_scan(kernel, domain, options));
    checks.push(mean_maximum_check(domain, mean, options));

    ConditionReport { checks }
}

fn radial_scan(
    kernel: &dyn CovarianceKernel,
    domain: &Domain,
    options: &ConditionOptions,
) -> ConditionCheck {
    let d = kernel.dim();
    let radius = options.max_radius.unwrap_or_else(|| domain.diameter());
    let k = options.radial_points.max(2);
    let mut point = vec![0.0; d];
    for dir in direction_grid(d, options.directions) {
        let mut prev = kernel.eval(point_at(&dir, 0.0, &mut point));
        for step in 1..=k {
            let lambda = radius * step as f64 / k as f64;
            let cur = kernel.eval(point_at(&dir, lambda, &mut point));
            if cur > prev + 1e-12 {
                return ConditionCheck {
                    condition: Condition::RadialMonotonicity,
                    status: ConditionStatus::Fail,
                    message: format!("C increases along direction {dir:?} near radius {lambda:.4}"),
                    evidence: vec![("radius", lambda), ("increase", cur - prev)],
                };
            }
            prev = cur;
        }
    }
    ConditionCheck {
        condition: Condition::RadialMonotonicity,
        status: ConditionStatus::PassSampled,
        message: format!(
            "non-increasing on {} directions x {k} radial points up to {radius:.4}",
            direction_grid(d, options.directions).len()
        ),
        evidence: vec![("max_radius", radius)],
    }
}

fn point_at<'a>(dir: &[f64], lambda: f64, buf: &'a mut [f64]) -> &'a [f64] {
    for (b, v) in buf.iter_mut().zip(dir) {
        *b = lambda * v;
    }
    buf
}

fn mean_maximum_check(domain: &Domain, mean: &dyn MeanFunction, options: &ConditionOptions) -> ConditionCheck {
    let grid = Grid::with_density(domain.clone(), options.nodes_per_unit);
    let values: Vec<f64> = grid.nodes().map(|t| mean.value(t)).collect();
    let (mut lo, mut hi, mut arg) = (f64::INFINITY, f64::NEG_INFINITY, 0);
    for (i, &v) in values.iter().enumerate() {
        lo = lo.min(v);
        if v > hi {
            hi = v;
            arg = i;
        }
    }
    if hi - lo <= 1e-12 * (1.0 + hi.abs()) {
        return ConditionCheck {
            condition: Condition::InteriorMeanMaximum,
            status: ConditionStatus::Pass,
            message: "mean is constant on the grid (exempt)".into(),
            evidence: vec![("mean_range", hi - lo)],
        };
    }
    let node = grid.node(arg).to_vec();
    let on_boundary = match grid.boundary_projection(arg) {
        None => false,
        Some(projections) => projections.iter().any(|p| mean.value(p) >= hi),
    };
    ConditionCheck {
        condition: Condition::InteriorMeanMaximum,
        status: if on_boundary { ConditionStatus::Fail } else { ConditionStatus::Pass },
        message: if on_boundary {
            format!("maximum of the mean is attained at the boundary near {node:?}")
        } else {
            format!("grid maximum of the mean at interior point {node:?}")
        },
        evidence: vec![("max_mean", hi)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_sim::{ConstantMean, QuadraticMean};

    fn se(d: usize) -> Arc<dyn CovarianceKernel> {
        Arc::new(SquaredExponential::unit(d))
    }

    #[test]
    fn squared_exponential_moments_d1() {
        let m = spectral_moments(se(1).as_ref()).unwrap();
        assert_eq!(m.mu20().as_slice(), &[-1.0]);
        assert_eq!(m.mu22().as_slice(), &[3.0]);
        assert_eq!(m.gamma(), &DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 3.0]));
        assert_eq!(m.quartic_diag_sum(), 3.0);
        assert!((m.schur_complement().unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn squared_exponential_moments_d2() {
        let m = spectral_moments(se(2).as_ref()).unwrap();
        assert_eq!(m.mu20().as_slice(), &[-1.0, -1.0, 0.0]);
        let expected = DMatrix::from_row_slice(3, 3, &[3.0, 1.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(m.mu22(), &expected);
        assert_eq!(m.quartic_diag_sum(), 6.0);
        assert_eq!(m.one_vector().as_slice(), &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn ordering_is_diagonal_first() {
        assert_eq!(second_order_index(1), vec![(0, 0)]);
        assert_eq!(second_order_index(2), vec![(0, 0), (1, 1), (0, 1)]);
        assert_eq!(
            second_order_index(3),
            vec![(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]
        );
        assert_eq!(one_vector(3).as_slice(), &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn finite_differences_match_analytic_squared_exponential() {
        for d in 1..=3 {
            let k = se(d);
            let a = spectral_moments(k.as_ref()).unwrap();
            let f = spectral_moments_fd(k.as_ref()).unwrap();
            assert_eq!(f.source(), DerivativeSource::FiniteDifference);
            for (x, y) in a.gamma().iter().zip(f.gamma().iter()) {
                let err = if *x == 0.0 { y.abs() } else { ((x - y) / x).abs() };
                assert!(err <= 1e-6, "d={d}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn non_positive_definite_moments_are_rejected() {
        // mu22 = 1 with mu20 = -1 makes Γ singular.
        let err = SpectralMoments::from_derivatives(1, DerivativeSource::Analytic, |_, _| -1.0, |_, _, _, _| 1.0)
            .unwrap_err();
        assert!(matches!(err, Error::NonPositiveDefinite(_)));
    }

    #[test]
    fn rough_kernel_has_no_fourth_derivative() {
        // exp(-|t|) has a kink at zero.
        let k = FnKernel::new(1, |t: &[f64]| (-t[0].abs()).exp());
        let err = spectral_moments_fd(&k).unwrap_err();
        assert!(matches!(err, Error::DerivativeUnavailable(_)), "{err:?}");
    }

    #[test]
    fn isotropize_normalised_kernel_is_identity() {
        let k = se(1);
        let (k2, a) = isotropize(&k).unwrap();
        assert_eq!(a, DMatrix::identity(1, 1));
        assert_eq!(k2.eval(&[0.7]), k.eval(&[0.7]));
    }

    #[test]
    fn isotropize_scalar_rescaling() {
        let k: Arc<dyn CovarianceKernel> =
            Arc::new(GaussianAniso::new(DMatrix::from_element(1, 1, 4.0)).unwrap());
        let (k2, a) = isotropize(&k).unwrap();
        assert!((a[(0, 0)] - 0.5).abs() < 1e-15);
        for t in [0.3, 1.0, 2.5] {
            assert!((k2.eval(&[t]) - (-t * t / 2.0).exp()).abs() < 1e-15);
        }
        assert!((k2.second_derivative_at_origin(0, 0).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn isotropize_anisotropic_and_idempotent() {
        let s = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let k: Arc<dyn CovarianceKernel> = Arc::new(GaussianAniso::new(s).unwrap());
        let (k2, a) = isotropize(&k).unwrap();
        assert!((&a - DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0])).amax() < 1e-12);

        // numeric Hessian of the transformed kernel, analytic table bypassed
        let numeric = FnKernel::new(2, {
            let k2 = Arc::clone(&k2);
            move |t: &[f64]| k2.eval(t)
        });
        let h = hessian_at_origin(&numeric).unwrap();
        assert!((&h + DMatrix::<f64>::identity(2, 2)).amax() < 1e-8, "{h}");

        let (_, again) = isotropize(&k2).unwrap();
        assert!((again - DMatrix::<f64>::identity(2, 2)).amax() < 1e-8);
    }

    #[test]
    fn isotropize_rejects_flat_kernel() {
        let k: Arc<dyn CovarianceKernel> = Arc::new(FnKernel::new(1, |_: &[f64]| 1.0));
        assert!(matches!(isotropize(&k), Err(Error::DegenerateHessian { .. })));
    }

    #[test]
    fn conditions_pass_for_reference_setup() {
        let domain = Domain::new(vec![(-2.0, 2.0)]).unwrap();
        let mean = QuadraticMean::new(0.25);
        let r = check_conditions(se(1).as_ref(), &domain, &mean, &ConditionOptions::default());
        assert_eq!(r.checks().len(), 6);
        assert_eq!(r.status(Condition::UnitVariance), ConditionStatus::Pass);
        assert_eq!(r.status(Condition::Smoothness), ConditionStatus::NotChecked);
        assert_eq!(r.status(Condition::CompactDomain), ConditionStatus::NotChecked);
        assert_eq!(r.status(Condition::NormalizedHessian), ConditionStatus::Pass);
        assert_eq!(r.status(Condition::RadialMonotonicity), ConditionStatus::PassSampled);
        assert_eq!(r.status(Condition::InteriorMeanMaximum), ConditionStatus::Pass);
        assert!(r.all_checked_pass());
    }

    #[test]
    fn boundary_maximum_fails_c6() {
        let domain = Domain::new(vec![(0.0, 2.0)]).unwrap();
        let r = check_conditions(
            se(1).as_ref(),
            &domain,
            &QuadraticMean::new(0.25),
            &ConditionOptions::default(),
        );
        assert_eq!(r.status(Condition::InteriorMeanMaximum), ConditionStatus::Fail);
    }

    #[test]
    fn oscillating_kernel_fails_c5() {
        let k = FnKernel::new(1, |t: &[f64]| (3.0 * t[0]).cos() * (-t[0] * t[0] / 2.0).exp());
        let domain = Domain::new(vec![(-2.0, 2.0)]).unwrap();
        let r = check_conditions(&k, &domain, &ConstantMean::new(0.0), &ConditionOptions::default());
        let c5 = r.get(Condition::RadialMonotonicity);
        assert_eq!(c5.status, ConditionStatus::Fail);
        // first increase happens after the first local minimum, past the zero at π/6
        let radius = c5.evidence[0].1;
        assert!(radius > std::f64::consts::PI / 6.0 && radius < 1.5, "{radius}");
        assert_eq!(r.status(Condition::NormalizedHessian), ConditionStatus::Fail);
        assert_eq!(r.status(Condition::InteriorMeanMaximum), ConditionStatus::Pass);
    }

    #[test]
    fn direction_grids_are_unit() {
        for d in 1..=3 {
            for v in direction_grid(d, 64) {
                let n: f64 = v.iter().map(|x| x * x).sum();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }
}
