#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use grftail::covariance::SquaredExponential;
use grftail::field_sim::QuadraticMean;
use grftail::mc_estimators::McProblem;
use grftail::{Domain, Grid, TailQuery};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// A fixed-order rule reused across panels.
pub struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self { nodes, weights }
    }

    pub fn panel(&self, f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
        let (h, c) = (0.5 * (b - a), 0.5 * (b + a));
        h * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(c + h * x))
            .sum::<f64>()
    }

    /// Equal panels over `[a, b]`.
    pub fn composite(&self, mut f: impl FnMut(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|k| self.panel(&mut f, a + k as f64 * h, a + (k + 1) as f64 * h))
            .sum()
    }

    /// Panels shrinking geometrically towards `b`, for integrands singular there.
    pub fn graded(&self, mut f: impl FnMut(f64) -> f64, a: f64, b: f64, levels: usize, ratio: f64) -> f64 {
        let mut total = 0.0;
        let mut lo = a;
        let mut width = (b - a) * (1.0 - ratio);
        for _ in 0..levels {
            let hi = lo + width;
            total += self.panel(&mut f, lo, hi);
            lo = hi;
            width *= ratio;
        }
        total + self.panel(&mut f, lo, b)
    }
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Unit squared-exponential kernel, `μ(t) = −|t|²/4`, `σ = 1` on `[−half, half]^d`.
pub fn reference_query(d: usize, half: f64, b: f64) -> TailQuery {
    TailQuery::new(
        Arc::new(SquaredExponential::unit(d)),
        Arc::new(QuadraticMean::new(0.25)),
        Domain::symmetric_cube(d, half).unwrap(),
        1.0,
        b,
    )
    .unwrap()
}

/// The reference query on its default grid of 8 nodes per unit length.
pub fn reference_problem(d: usize, half: f64, b: f64) -> McProblem {
    let q = reference_query(d, half, b);
    let grid = Grid::with_density(q.domain.clone(), 8.0);
    McProblem::new(q, grid).unwrap()
}

/// Threshold at which the quadrature approximation equals `p`, by bisection on `log b`.
pub fn threshold_for(d: usize, half: f64, p: f64) -> f64 {
    let approx = |b: f64| grftail::tail_integral_approx(&reference_query(d, half, b)).unwrap().probability;
    let (mut lo, mut hi) = (8.0f64.ln(), 1e4f64.ln());
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if approx(mid.exp()) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// `|a − b|` measured in combined standard errors.
pub fn z_score(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    (a - b).abs() / (se_a * se_a + se_b * se_b).sqrt()
}
