use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::{Grid, MeanFunction};
use crate::covariance::CovarianceKernel;
use crate::error::{Error, Result};

/// Relative diagonal jitters tried, in order, when factorising the node
/// covariance.
const JITTER_LADDER: [f64; 6] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Centered,
    Shifted { tau: Vec<f64>, amplitude: f64 },
}

/// Field values at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

/// Exact sampler for the field restricted to the nodes of a grid.
///
/// Holds the (possibly jittered) node covariance and its lower Cholesky
/// factor, both row-major. Built once and shared read-only across
/// replications.
#[derive(Debug, Clone)]
pub struct GridSampler {
    kernel: Arc<dyn CovarianceKernel>,
    grid: Grid,
    covariance: Vec<f64>,
    factor: Vec<f64>,
    jitter: f64,
}

impl GridSampler {
    pub fn new(kernel: Arc<dyn CovarianceKernel>, grid: Grid) -> Result<Self> {
        if kernel.dim() != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                got: kernel.dim(),
            });
        }
        let n = grid.len();
        let mut lag = vec![0.0; grid.dim()];
        let mut cov = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                for (l, (a, b)) in lag.iter_mut().zip(grid.node(i).iter().zip(grid.node(j))) {
                    *l = a - b;
                }
                let c = kernel.eval(&lag);
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
        }
        let mean_diag = cov.trace() / n as f64;
        if cov.iter().all(|&c| c == 0.0) {
            // degenerate field f ≡ 0
            return Ok(Self {
                kernel,
                grid,
                covariance: vec![0.0; n * n],
                factor: vec![0.0; n * n],
                jitter: 0.0,
            });
        }

        for &rel in &JITTER_LADDER {
            let mut m = cov.clone();
            for i in 0..n {
                m[(i, i)] += rel * mean_diag;
            }
            let covariance: Vec<f64> = m.transpose().as_slice().to_vec();
            if let Some(chol) = m.cholesky() {
                let l = chol.l();
                let factor = l.transpose().as_slice().to_vec();
                if factor.iter().all(|v| v.is_finite()) {
                    return Ok(Self {
                        kernel,
                        grid,
                        covariance,
                        factor,
                        jitter: rel * mean_diag,
                    });
                }
            }
        }
        Err(Error::EmbeddingFailure {
            jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kernel(&self) -> &Arc<dyn CovarianceKernel> {
        &self.kernel
    }

    /// Absolute diagonal jitter that was added to the node covariance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Entry `(i, j)` of the node covariance actually sampled from.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.covariance[i * self.len() + j]
    }

    /// Column `j` of the sampled node covariance.
    pub fn covariance_column(&self, j: usize) -> &[f64] {
        let n = self.len();
        &self.covariance[j * n..(j + 1) * n]
    }

    /// Writes a centered draw into `out`, consuming `len()` standard normals
    /// from `rng` in node order.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        let n = self.len();
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&self.factor[i * n..i * n + i + 1], &z[..=i]);
        }
    }

    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldSample {
        let n = self.len();
        let mut z = vec![0.0; n];
        let mut values = vec![0.0; n];
        self.sample_into(rng, &mut z, &mut values);
        FieldSample {
            values,
            provenance: Provenance::Centered,
        }
    }

    /// `amplitude · C(t_i − τ)` at every node, from the analytic kernel.
    pub fn mean_shift(&self, tau: &[f64], amplitude: f64) -> Vec<f64> {
        let mut lag = vec![0.0; self.grid.dim()];
        self.grid
            .nodes()
            .map(|t| {
                for (l, (a, b)) in lag.iter_mut().zip(t.iter().zip(tau)) {
                    *l = a - b;
                }
                amplitude * self.kernel.eval(&lag)
            })
            .collect()
    }

    /// A centered draw plus the deterministic shift `amplitude · C(· − τ)`.
    pub fn simulate_shifted<R: Rng + ?Sized>(
        &self,
        tau: &[f64],
        amplitude: f64,
        rng: &mut R,
    ) -> Result<FieldSample> {
        if !self.grid.domain().contains(tau) {
            return Err(Error::invalid(format!("tau {tau:?} lies outside the domain")));
        }
        let mut sample = self.simulate(rng);
        for (v, m) in sample.values.iter_mut().zip(self.mean_shift(tau, amplitude)) {
            *v += m;
        }
        sample.provenance = Provenance::Shifted {
            tau: tau.to_vec(),
            amplitude,
        };
        Ok(sample)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// One centered draw of the field on `grid`.
pub fn simulate_grf<R: Rng + ?Sized>(
    kernel: Arc<dyn CovarianceKernel>,
    grid: Grid,
    rng: &mut R,
) -> Result<FieldSample> {
    Ok(GridSampler::new(kernel, grid)?.simulate(rng))
}

/// One draw of the field with mean `amplitude · C(· − τ)`.
pub fn simulate_grf_shifted<R: Rng + ?Sized>(
    kernel: Arc<dyn CovarianceKernel>,
    grid: Grid,
    tau: &[f64],
    amplitude: f64,
    rng: &mut R,
) -> Result<FieldSample> {
    GridSampler::new(kernel, grid)?.simulate_shifted(tau, amplitude, rng)
}

/// Midpoint rule for `∫_T exp(μ(t) + σ f(t)) dt`.
pub fn integral_i(field: &FieldSample, mean: &dyn MeanFunction, sigma: f64, grid: &Grid) -> f64 {
    let mean_values = grid.map(|t| mean.value(t));
    integral_i_on_nodes(&field.values, &mean_values, sigma, grid.cell_volume())
}

/// [`integral_i`] with the mean already evaluated at the nodes.
pub fn integral_i_on_nodes(values: &[f64], mean_values: &[f64], sigma: f64, cell_volume: f64) -> f64 {
    debug_assert_eq!(values.len(), mean_values.len());
    let s: f64 = values
        .iter()
        .zip(mean_values)
        .map(|(f, m)| (m + sigma * f).exp())
        .sum();
    s * cell_volume
}

/// A draw from `Poisson(intensity)`; zero intensity gives zero.
pub fn sample_poisson_count<R: Rng + ?Sized>(intensity: f64, rng: &mut R) -> u64 {
    if !(intensity > 0.0) {
        return 0;
    }
    match Poisson::new(intensity) {
        Ok(p) => p.sample(rng) as u64,
        // beyond the sampler's range the normal approximation is exact to
        // far below f64 resolution
        Err(_) => {
            let z: f64 = rng.sample(StandardNormal);
            (intensity + intensity.sqrt() * z).round().max(0.0) as u64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::SquaredExponential;
    use crate::field_sim::{ConstantMean, Domain, FnMean};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn se1() -> Arc<dyn CovarianceKernel> {
        Arc::new(SquaredExponential::unit(1))
    }

    fn grid(a: f64, b: f64, n: usize) -> Grid {
        Grid::new(Domain::new(vec![(a, b)]).unwrap(), vec![n]).unwrap()
    }

    #[test]
    fn single_node_is_one_standard_normal() {
        let g = grid(0.0, 1.0, 1);
        let s = GridSampler::new(se1(), g).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        let x = s.simulate(&mut r1).values;
        let z: f64 = r2.sample(StandardNormal);
        assert_eq!(x, vec![z]);
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let g = grid(-2.0, 2.0, 32);
        let a = simulate_grf(se1(), g.clone(), &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = simulate_grf(se1(), g, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shift_is_additive() {
        let g = grid(-2.0, 2.0, 16);
        let s = GridSampler::new(se1(), g).unwrap();
        let centered = s.simulate(&mut ChaCha8Rng::seed_from_u64(5));
        let shifted = s.simulate_shifted(&[0.31], 2.5, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let shift = s.mean_shift(&[0.31], 2.5);
        for ((v, c), m) in shifted.values.iter().zip(&centered.values).zip(&shift) {
            assert_eq!(*v, c + m);
        }
        let zero = s.simulate_shifted(&[0.31], 0.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(zero.values, centered.values);
        assert!(s.simulate_shifted(&[3.0], 1.0, &mut ChaCha8Rng::seed_from_u64(5)).is_err());
    }

    #[test]
    fn fine_grids_need_jitter_but_factor() {
        let g = Grid::with_density(Domain::symmetric_cube(2, 2.0).unwrap(), 8.0);
        let s = GridSampler::new(Arc::new(SquaredExponential::unit(2)), g).unwrap();
        assert!(s.jitter() <= 1e-8);
    }

    #[test]
    fn integral_constant_fields() {
        let g = grid(0.0, 1.0, 10);
        let zero = FieldSample {
            values: vec![0.0; 10],
            provenance: Provenance::Centered,
        };
        assert!((integral_i(&zero, &ConstantMean::new(0.0), 0.7, &g) - 1.0).abs() < 1e-15);
        let g = grid(-1.0, 2.0, 7);
        let c = FieldSample {
            values: vec![0.4; 7],
            provenance: Provenance::Centered,
        };
        let expected = 3.0 * (1.3f64 * 0.4).exp();
        assert!((integral_i(&c, &ConstantMean::new(0.0), 1.3, &g) - expected).abs() < 1e-13);
    }

    #[test]
    fn midpoint_rule_is_second_order() {
        // f(t) = -t² on [-1, 1] with σ = 1, μ = 0: ∫ e^{-t²} = √π erf(1)
        let exact = std::f64::consts::PI.sqrt() * statrs::function::erf::erf(1.0);
        let zero = ConstantMean::new(0.0);
        let err = |n: usize| {
            let g = grid(-1.0, 1.0, n);
            let f = FieldSample {
                values: g.map(|t| -t[0] * t[0]),
                provenance: Provenance::Centered,
            };
            (integral_i(&f, &zero, 1.0, &g) - exact).abs()
        };
        let mut prev = err(8);
        for n in [16, 32, 64] {
            let e = err(n);
            let order = (prev / e).log2();
            assert!(order >= 1.9, "order {order} at n = {n}");
            prev = e;
        }
        // field values entering through the mean give the same quadrature
        let g = grid(-1.0, 1.0, 64);
        let via_mean = integral_i(
            &FieldSample {
                values: vec![0.0; 64],
                provenance: Provenance::Centered,
            },
            &FnMean(|t: &[f64]| -t[0] * t[0]),
            1.0,
            &g,
        );
        assert!((via_mean - exact).abs() < 1e-4);
    }

    #[test]
    fn poisson_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_poisson_count(0.0, &mut rng), 0);
        let n = 100_000;
        let draws: Vec<u64> = (0..n).map(|_| sample_poisson_count(1.0, &mut rng)).collect();
        let mean = draws.iter().sum::<u64>() as f64 / n as f64;
        assert!((mean - 1.0).abs() < 3.0 * (1.0 / n as f64).sqrt(), "{mean}");
        let p_tail = 1.0 - (-1.0f64).exp() * 2.5;
        let tail = draws.iter().filter(|&&k| k > 2).count() as f64 / n as f64;
        let se = (p_tail * (1.0 - p_tail) / n as f64).sqrt();
        assert!((tail - p_tail).abs() < 3.0 * se, "{tail} vs {p_tail}");
        assert!(sample_poisson_count(1e25, &mut rng) > 0);
    }
}
