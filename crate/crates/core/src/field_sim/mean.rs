use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// A deterministic mean `μ(t)` with gradient and Hessian access.
///
/// The default derivative implementations are central finite differences;
/// built-in means override them analytically.
pub trait MeanFunction: fmt::Debug + Send + Sync {
    fn value(&self, t: &[f64]) -> f64;

    fn gradient(&self, t: &[f64]) -> Vec<f64> {
        fd_gradient(|x| self.value(x), t)
    }

    fn hessian(&self, t: &[f64]) -> DMatrix<f64> {
        fd_hessian(|x| self.value(x), t)
    }

    fn is_constant(&self) -> bool {
        false
    }
}

pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, t: &[f64]) -> Vec<f64> {
    let mut x = t.to_vec();
    (0..t.len())
        .map(|i| {
            let h = 1e-6 * (1.0 + t[i].abs());
            x[i] = t[i] + h;
            let up = f(&x);
            x[i] = t[i] - h;
            let down = f(&x);
            x[i] = t[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn fd_hessian(f: impl Fn(&[f64]) -> f64, t: &[f64]) -> DMatrix<f64> {
    let d = t.len();
    let mut x = t.to_vec();
    let mut out = DMatrix::zeros(d, d);
    let h: Vec<f64> = t.iter().map(|v| 1e-4 * (1.0 + v.abs())).collect();
    let f0 = f(t);
    for i in 0..d {
        x[i] = t[i] + h[i];
        let up = f(&x);
        x[i] = t[i] - h[i];
        let down = f(&x);
        x[i] = t[i];
        out[(i, i)] = (up - 2.0 * f0 + down) / (h[i] * h[i]);
        for j in (i + 1)..d {
            let mut corner = |si: f64, sj: f64| {
                x[i] = t[i] + si * h[i];
                x[j] = t[j] + sj * h[j];
                let v = f(&x);
                x[i] = t[i];
                x[j] = t[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * h[i] * h[j]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantMean {
    value: f64,
}

impl ConstantMean {
    pub fn new(value: f64) -> Self {
        Self { value }
    }
}

impl MeanFunction for ConstantMean {
    fn value(&self, _t: &[f64]) -> f64 {
        self.value
    }

    fn gradient(&self, t: &[f64]) -> Vec<f64> {
        vec![0.0; t.len()]
    }

    fn hessian(&self, t: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(t.len(), t.len())
    }

    fn is_constant(&self) -> bool {
        true
    }
}

/// `μ(t) = -c |t - center|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticMean {
    c: f64,
    center: Option<Vec<f64>>,
}

impl QuadraticMean {
    pub fn new(c: f64) -> Self {
        Self { c, center: None }
    }

    pub fn centered_at(c: f64, center: Vec<f64>) -> Self {
        Self {
            c,
            center: Some(center),
        }
    }

    fn offset(&self, t: &[f64], i: usize) -> f64 {
        match &self.center {
            Some(c) => t[i] - c[i],
            None => t[i],
        }
    }
}

impl MeanFunction for QuadraticMean {
    fn value(&self, t: &[f64]) -> f64 {
        -self.c * (0..t.len()).map(|i| self.offset(t, i).powi(2)).sum::<f64>()
    }

    fn gradient(&self, t: &[f64]) -> Vec<f64> {
        (0..t.len()).map(|i| -2.0 * self.c * self.offset(t, i)).collect()
    }

    fn hessian(&self, t: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(t.len(), t.len()) * (-2.0 * self.c)
    }

    fn is_constant(&self) -> bool {
        self.c == 0.0
    }
}

/// One regressor `x_k(t)` of a linear mean `μ(t) = x(t)ᵀβ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Covariate {
    Intercept,
    /// `t_axis^degree`.
    Power { axis: usize, degree: u32 },
    /// `cos(2π t_axis / period)`.
    Cos { axis: usize, period: f64 },
    /// `sin(2π t_axis / period)`.
    Sin { axis: usize, period: f64 },
}

impl Covariate {
    pub fn axis(&self) -> Option<usize> {
        match *self {
            Covariate::Intercept => None,
            Covariate::Power { axis, .. } | Covariate::Cos { axis, .. } | Covariate::Sin { axis, .. } => {
                Some(axis)
            }
        }
    }

    /// Value and first two derivatives along the covariate's own axis.
    fn eval(&self, t: &[f64]) -> (f64, f64, f64) {
        use std::f64::consts::TAU;
        match *self {
            Covariate::Intercept => (1.0, 0.0, 0.0),
            Covariate::Power { axis, degree } => {
                let x = t[axis];
                let k = degree as i32;
                let v = x.powi(k);
                let d1 = if k >= 1 { k as f64 * x.powi(k - 1) } else { 0.0 };
                let d2 = if k >= 2 { (k * (k - 1)) as f64 * x.powi(k - 2) } else { 0.0 };
                (v, d1, d2)
            }
            Covariate::Cos { axis, period } => {
                let w = TAU / period;
                let a = w * t[axis];
                (a.cos(), -w * a.sin(), -w * w * a.cos())
            }
            Covariate::Sin { axis, period } => {
                let w = TAU / period;
                let a = w * t[axis];
                (a.sin(), w * a.cos(), -w * w * a.sin())
            }
        }
    }
}

/// `μ(t) = Σ_k β_k x_k(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCombination {
    terms: Vec<(f64, Covariate)>,
}

impl LinearCombination {
    pub fn new(terms: Vec<(f64, Covariate)>) -> Self {
        Self { terms }
    }

    pub fn terms(&self) -> &[(f64, Covariate)] {
        &self.terms
    }
}

impl MeanFunction for LinearCombination {
    fn value(&self, t: &[f64]) -> f64 {
        self.terms.iter().map(|(b, x)| b * x.eval(t).0).sum()
    }

    fn gradient(&self, t: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; t.len()];
        for (b, x) in &self.terms {
            if let Some(a) = x.axis() {
                g[a] += b * x.eval(t).1;
            }
        }
        g
    }

    fn hessian(&self, t: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(t.len(), t.len());
        for (b, x) in &self.terms {
            if let Some(a) = x.axis() {
                h[(a, a)] += b * x.eval(t).2;
            }
        }
        h
    }

    fn is_constant(&self) -> bool {
        self.terms
            .iter()
            .all(|(b, x)| *b == 0.0 || matches!(x, Covariate::Intercept | Covariate::Power { degree: 0, .. }))
    }
}

/// A mean given by a closure, differentiated numerically.
pub struct FnMean<F>(pub F);

impl<F> fmt::Debug for FnMean<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnMean(..)")
    }
}

impl<F> MeanFunction for FnMean<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn value(&self, t: &[f64]) -> f64 {
        (self.0)(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_against_fd(m: &dyn MeanFunction, t: &[f64]) {
        let g = m.gradient(t);
        let g_fd = fd_gradient(|x| m.value(x), t);
        for (a, b) in g.iter().zip(&g_fd) {
            assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0), "{a} vs {b}");
        }
        let h = m.hessian(t);
        let h_fd = fd_hessian(|x| m.value(x), t);
        for (a, b) in h.iter().zip(h_fd.iter()) {
            assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn analytic_derivatives_agree_with_finite_differences() {
        let points: [&[f64]; 3] = [&[0.3, -1.2], &[1.7, 0.4], &[-2.0, 2.0]];
        let quad = QuadraticMean::centered_at(0.25, vec![0.5, -0.5]);
        let combo = LinearCombination::new(vec![
            (1.5, Covariate::Intercept),
            (0.2, Covariate::Power { axis: 0, degree: 3 }),
            (-0.7, Covariate::Cos { axis: 1, period: 12.0 }),
            (0.4, Covariate::Sin { axis: 0, period: 6.0 }),
        ]);
        for t in points {
            check_against_fd(&quad, t);
            check_against_fd(&combo, t);
            check_against_fd(&ConstantMean::new(2.0), t);
        }
    }

    #[test]
    fn quadratic_reference_mean() {
        let m = QuadraticMean::new(0.25);
        assert_eq!(m.value(&[2.0]), -1.0);
        assert_eq!(m.hessian(&[0.0])[(0, 0)], -0.5);
        assert!(!m.is_constant());
        assert!(ConstantMean::new(0.0).is_constant());
    }
}
