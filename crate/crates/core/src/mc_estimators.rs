//! Monte Carlo reference estimates for the field-integral and count tails.
//!
//! All estimators work on the grid-level functional: the field is sampled
//! exactly at the cell midpoints and `I(T)` is the midpoint rule. Replication
//! `k` always draws from stream `k` of the seed, and sums are accumulated
//! exactly, so an estimate is independent of thread count and of how the
//! replications are batched.
//!
//! The importance sampler follows the two-step change of measure: pick a cell
//! uniformly, then sample the field with mean `a_j K[·, j]`, where
//! `a_j = u − μ_σ(t_j)` and `K` is the node covariance being sampled. Against
//! the centered law this proposal has density
//!
//! ```text
//! dQ/dP(x) = (1/N) Σ_j exp{a_j x_j − a_j² K_jj / 2},
//! ```
//!
//! which is the node-quadrature of the continuum mixture with cell weights
//! `1/mes(T)`. The weight `dP/dQ` is its reciprocal, so the estimator is
//! exactly unbiased for the grid-level probability.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::accum::ExactSum;
use crate::error::{Error, Result};
use crate::field_sim::{sample_poisson_count, Grid, GridSampler};
use crate::rng::ReplicationStreams;
use crate::tail_approx::{solve_u, TailQuery};

/// Log-weights beyond this magnitude are reported as [`Error::WeightOverflow`].
pub const MAX_LOG_WEIGHT: f64 = 700.0;

/// Replication count, seed and the index of the first replication stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McSettings {
    pub n: u64,
    pub seed: u64,
    pub first_replication: u64,
}

impl McSettings {
    pub fn new(n: u64, seed: u64) -> Self {
        Self {
            n,
            seed,
            first_replication: 0,
        }
    }

    /// Splits replications `0..n` into `batches` consecutive ranges.
    pub fn batches(&self, batches: u64) -> Vec<McSettings> {
        let batches = batches.max(1);
        let base = self.n / batches;
        let extra = self.n % batches;
        let mut start = self.first_replication;
        (0..batches)
            .map(|k| {
                let n = base + u64::from(k < extra);
                let s = McSettings {
                    n,
                    seed: self.seed,
                    first_replication: start,
                };
                start += n;
                s
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Crude,
    ImportanceSampling,
    CountTail,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Crude => "crude_mc",
            EstimatorKind::ImportanceSampling => "importance_sampling",
            EstimatorKind::CountTail => "count_tail_mc",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum McWarning {
    /// Fewer than ten replications.
    LowN,
    /// No replication hit the event.
    ZeroHits,
}

impl fmt::Display for McWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            McWarning::LowN => "low_n",
            McWarning::ZeroHits => "zero_hits",
        })
    }
}

/// One importance-sampling replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ISWeight {
    /// Uniform location drawn on `T`.
    pub tau: Vec<f64>,
    /// Node whose cell contains `tau`; the shift is centred there.
    pub node: usize,
    /// Realised `dP/dQ`.
    pub weight: f64,
    pub log_weight: f64,
    pub indicator: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Accumulator {
    hits: u64,
    sum_y: ExactSum,
    sum_y2: ExactSum,
    sum_w: ExactSum,
    sum_w2: ExactSum,
    log_weight_range: Option<(f64, f64)>,
}

impl Accumulator {
    fn push(&mut self, y: f64, w: f64, hit: bool) {
        self.hits += u64::from(hit);
        if y != 0.0 {
            self.sum_y.add(y);
            self.sum_y2.add(y * y);
        }
        self.sum_w.add(w);
        self.sum_w2.add(w * w);
    }

    fn record_log_weight(&mut self, lw: f64) {
        self.log_weight_range = Some(match self.log_weight_range {
            None => (lw, lw),
            Some((lo, hi)) => (lo.min(lw), hi.max(lw)),
        });
    }

    fn merge(&mut self, other: &Accumulator) {
        self.hits += other.hits;
        self.sum_y.merge(&other.sum_y);
        self.sum_y2.merge(&other.sum_y2);
        self.sum_w.merge(&other.sum_w);
        self.sum_w2.merge(&other.sum_w2);
        if let Some((lo, hi)) = other.log_weight_range {
            self.record_log_weight(lo);
            self.record_log_weight(hi);
        }
    }
}

/// A pooled Monte Carlo estimate.
///
/// The public statistics are derived from exact running sums, so merging
/// batches reproduces a single run bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorResult {
    pub kind: EstimatorKind,
    pub estimate: f64,
    pub std_error: f64,
    pub n: u64,
    /// `std_error / estimate`; infinite when the estimate is zero.
    pub relative_error: f64,
    pub ci95: (f64, f64),
    /// Replications with `I(T) > b` (or `N(T) > b`).
    pub hits: u64,
    /// `(Σw)² / Σw²`; equals `n` for unweighted estimators.
    pub effective_sample_size: f64,
    /// Smallest and largest log-weight seen (importance sampling only).
    pub log_weight_range: Option<(f64, f64)>,
    pub warnings: Vec<McWarning>,
    pub wall_time: f64,
    provenance: String,
    replications: Vec<(u64, u64, u64)>,
    acc: Accumulator,
}

impl EstimatorResult {
    fn from_parts(
        kind: EstimatorKind,
        provenance: String,
        replications: Vec<(u64, u64, u64)>,
        acc: Accumulator,
        wall_time: f64,
    ) -> Self {
        let n: u64 = replications.iter().map(|r| r.2 - r.1).sum();
        let nf = n as f64;
        let estimate = acc.sum_y.value() / nf;
        let std_error = match kind {
            EstimatorKind::Crude | EstimatorKind::CountTail => (estimate * (1.0 - estimate) / nf).max(0.0).sqrt(),
            EstimatorKind::ImportanceSampling if n > 1 => {
                let mut ss = acc.sum_y2.clone();
                let sy = acc.sum_y.value();
                ss.add(-sy * sy / nf);
                (ss.value().max(0.0) / (nf - 1.0) / nf).sqrt()
            }
            EstimatorKind::ImportanceSampling => 0.0,
        };
        let relative_error = if estimate > 0.0 {
            std_error / estimate
        } else {
            f64::INFINITY
        };
        let ci95 = if estimate == 0.0 {
            (0.0, 3.0 / nf)
        } else {
            let lo = (estimate - 1.96 * std_error).max(0.0);
            let hi = estimate + 1.96 * std_error;
            match kind {
                EstimatorKind::ImportanceSampling => (lo, hi),
                _ => (lo, hi.min(1.0)),
            }
        };
        let sw = acc.sum_w.value();
        let sw2 = acc.sum_w2.value();
        let effective_sample_size = if sw2 > 0.0 { sw * sw / sw2 } else { 0.0 };
        let mut warnings = Vec::new();
        if n < 10 {
            warnings.push(McWarning::LowN);
        }
        if acc.hits == 0 {
            warnings.push(McWarning::ZeroHits);
        }
        Self {
            kind,
            estimate,
            std_error,
            n,
            relative_error,
            ci95,
            hits: acc.hits,
            effective_sample_size,
            log_weight_range: acc.log_weight_range,
            warnings,
            wall_time,
            provenance,
            replications,
            acc,
        }
    }

    /// Identifies the (estimator, query, grid) triple the estimate belongs to.
    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// `(seed, first, end)` ranges of replication streams consumed.
    pub fn replications(&self) -> &[(u64, u64, u64)] {
        &self.replications
    }
}

/// Pools estimates of the same problem drawn from disjoint streams.
pub fn merge(results: &[EstimatorResult]) -> Result<EstimatorResult> {
    let first = results
        .first()
        .ok_or_else(|| Error::invalid("merge needs at least one result"))?;
    let mut acc = Accumulator::default();
    let mut ranges = Vec::new();
    let mut wall = 0.0;
    for r in results {
        if r.kind != first.kind || r.provenance != first.provenance {
            return Err(Error::MixedProvenance);
        }
        acc.merge(&r.acc);
        ranges.extend_from_slice(&r.replications);
        wall += r.wall_time;
    }
    ranges.sort_unstable();
    for w in ranges.windows(2) {
        if w[0].0 == w[1].0 && w[1].1 < w[0].2 {
            return Err(Error::invalid(format!(
                "replication streams overlap: {:?} and {:?}",
                w[0], w[1]
            )));
        }
    }
    Ok(EstimatorResult::from_parts(
        first.kind,
        first.provenance.clone(),
        ranges,
        acc,
        wall,
    ))
}

/// A query bound to a factored grid sampler, reusable across thresholds.
#[derive(Debug, Clone)]
pub struct McProblem {
    query: TailQuery,
    sampler: Arc<GridSampler>,
    mean_values: Vec<f64>,
}

impl McProblem {
    pub fn new(query: TailQuery, grid: Grid) -> Result<Self> {
        if grid.domain() != &query.domain {
            return Err(Error::invalid("grid domain differs from the query domain"));
        }
        let sampler = Arc::new(GridSampler::new(Arc::clone(&query.kernel), grid)?);
        Self::with_sampler(query, sampler)
    }

    pub fn with_sampler(query: TailQuery, sampler: Arc<GridSampler>) -> Result<Self> {
        if sampler.grid().domain() != &query.domain {
            return Err(Error::invalid("grid domain differs from the query domain"));
        }
        let mean_values = sampler.grid().map(|t| query.mean.value(t));
        Ok(Self {
            query,
            sampler,
            mean_values,
        })
    }

    /// The same problem at another threshold, sharing the factorisation.
    pub fn with_threshold(&self, b: f64) -> Result<Self> {
        Ok(Self {
            query: self.query.with_threshold(b)?,
            sampler: Arc::clone(&self.sampler),
            mean_values: self.mean_values.clone(),
        })
    }

    pub fn query(&self) -> &TailQuery {
        &self.query
    }

    pub fn grid(&self) -> &Grid {
        self.sampler.grid()
    }

    pub fn sampler(&self) -> &GridSampler {
        &self.sampler
    }

    fn provenance(&self, kind: EstimatorKind, b: f64) -> String {
        let fp = self
            .query
            .with_threshold(b)
            .map(|q| q.fingerprint())
            .unwrap_or_else(|_| self.query.fingerprint());
        format!("{kind}|{fp}|{:?}", self.grid().resolution())
    }

    /// Midpoint-rule `I(T)` for node values `x`.
    pub fn integral(&self, x: &[f64]) -> f64 {
        let sigma = self.query.sigma;
        let s: f64 = x
            .iter()
            .zip(&self.mean_values)
            .map(|(f, m)| (m + sigma * f).exp())
            .sum();
        s * self.grid().cell_volume()
    }
}

struct Scratch {
    z: Vec<f64>,
    x: Vec<f64>,
}

/// Runs replications in parallel, folding each into `nb` accumulators.
fn run<F>(settings: &McSettings, nodes: usize, nb: usize, body: F) -> Result<Vec<Accumulator>>
where
    F: Fn(&mut ChaCha8Rng, &mut Scratch, &mut [Accumulator]) -> Result<()> + Sync,
{
    if settings.n == 0 {
        return Err(Error::invalid("replication count must be at least 1"));
    }
    let streams = ReplicationStreams::new(settings.seed);
    let start = settings.first_replication;
    let end = start
        .checked_add(settings.n)
        .ok_or_else(|| Error::invalid("replication range overflows"))?;
    let fresh = || vec![Accumulator::default(); nb];
    (start..end)
        .into_par_iter()
        .fold(
            || {
                Ok((
                    Scratch {
                        z: vec![0.0; nodes],
                        x: vec![0.0; nodes],
                    },
                    fresh(),
                ))
            },
            |state: Result<(Scratch, Vec<Accumulator>)>, rep| {
                let (mut scratch, mut accs) = state?;
                body(&mut streams.stream(rep), &mut scratch, &mut accs)?;
                Ok((scratch, accs))
            },
        )
        .map(|s| s.map(|(_, a)| a))
        .try_reduce(fresh, |mut a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                x.merge(y);
            }
            Ok(a)
        })
}

fn finish(
    problem: &McProblem,
    kind: EstimatorKind,
    thresholds: &[f64],
    settings: &McSettings,
    accs: Vec<Accumulator>,
    started: Instant,
) -> Vec<EstimatorResult> {
    let wall = started.elapsed().as_secs_f64() / thresholds.len().max(1) as f64;
    let range = (
        settings.seed,
        settings.first_replication,
        settings.first_replication + settings.n,
    );
    thresholds
        .iter()
        .zip(accs)
        .map(|(&b, acc)| EstimatorResult::from_parts(kind, problem.provenance(kind, b), vec![range], acc, wall))
        .collect()
}

/// Crude Monte Carlo for `P(I(T) > b)`.
pub fn crude_mc(problem: &McProblem, settings: &McSettings) -> Result<EstimatorResult> {
    Ok(crude_mc_many(problem, &[problem.query.b], settings)?.remove(0))
}

/// [`crude_mc`] at several thresholds from the same field draws; each entry
/// equals the single-threshold run with the same settings.
pub fn crude_mc_many(problem: &McProblem, thresholds: &[f64], settings: &McSettings) -> Result<Vec<EstimatorResult>> {
    let started = Instant::now();
    let sampler = problem.sampler();
    let accs = run(settings, sampler.len(), thresholds.len(), |rng, s, accs| {
        sampler.sample_into(rng, &mut s.z, &mut s.x);
        let i = problem.integral(&s.x);
        for (acc, &b) in accs.iter_mut().zip(thresholds) {
            let hit = i > b;
            acc.push(if hit { 1.0 } else { 0.0 }, 1.0, hit);
        }
        Ok(())
    })?;
    Ok(finish(problem, EstimatorKind::Crude, thresholds, settings, accs, started))
}

/// Crude Monte Carlo for the Cox-process count tail `P(N(T) > b)`.
pub fn count_tail_mc(problem: &McProblem, settings: &McSettings) -> Result<EstimatorResult> {
    Ok(count_tail_mc_many(problem, &[problem.query.b], settings)?.remove(0))
}

/// [`count_tail_mc`] at several thresholds from the same draws of `N(T)`.
pub fn count_tail_mc_many(
    problem: &McProblem,
    thresholds: &[f64],
    settings: &McSettings,
) -> Result<Vec<EstimatorResult>> {
    let started = Instant::now();
    let sampler = problem.sampler();
    let accs = run(settings, sampler.len(), thresholds.len(), |rng, s, accs| {
        sampler.sample_into(rng, &mut s.z, &mut s.x);
        let count = sample_poisson_count(problem.integral(&s.x), rng) as f64;
        for (acc, &b) in accs.iter_mut().zip(thresholds) {
            let hit = count > b;
            acc.push(if hit { 1.0 } else { 0.0 }, 1.0, hit);
        }
        Ok(())
    })?;
    Ok(finish(problem, EstimatorKind::CountTail, thresholds, settings, accs, started))
}

/// `log dQ/dP` at node values `x` for shift amplitudes `a` and node
/// variances `var`: `log mean_j exp{a_j x_j − a_j² var_j / 2}`.
pub fn log_likelihood_ratio(x: &[f64], a: &[f64], var: &[f64]) -> f64 {
    let terms = x
        .iter()
        .zip(a)
        .zip(var)
        .map(|((x, a), v)| a * x - 0.5 * a * a * v);
    let peak = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY || peak.is_nan() {
        return peak;
    }
    let s: f64 = terms.map(|t| (t - peak).exp()).sum();
    peak + (s / x.len() as f64).ln()
}

/// Node amplitudes `a_j = u − μ_σ(t_j)` and the node variances of the sampler.
fn is_parameters(problem: &McProblem) -> Result<(Vec<f64>, Vec<f64>)> {
    let q = &problem.query;
    let u = solve_u(q.b, q.sigma, q.dim())?;
    let a = problem.mean_values.iter().map(|m| u - m / q.sigma).collect();
    let var = (0..problem.sampler.len())
        .map(|i| problem.sampler.covariance(i, i))
        .collect();
    Ok((a, var))
}

fn is_replication(
    problem: &McProblem,
    a: &[f64],
    var: &[f64],
    rng: &mut ChaCha8Rng,
    scratch: &mut Scratch,
) -> Result<ISWeight> {
    let grid = problem.grid();
    let tau: Vec<f64> = grid
        .domain()
        .bounds()
        .iter()
        .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
        .collect();
    let node = grid.cell_of(&tau);
    problem.sampler.sample_into(rng, &mut scratch.z, &mut scratch.x);
    let column = problem.sampler.covariance_column(node);
    for (x, k) in scratch.x.iter_mut().zip(column) {
        *x += a[node] * k;
    }
    let log_weight = -log_likelihood_ratio(&scratch.x, a, var);
    if !log_weight.is_finite() || log_weight.abs() > MAX_LOG_WEIGHT {
        return Err(Error::WeightOverflow { log_weight });
    }
    Ok(ISWeight {
        tau,
        node,
        weight: log_weight.exp(),
        log_weight,
        indicator: problem.integral(&scratch.x) > problem.query.b,
    })
}

/// One importance-sampling replication drawn from `rng`.
pub fn importance_draw(problem: &McProblem, rng: &mut ChaCha8Rng) -> Result<ISWeight> {
    let (a, var) = is_parameters(problem)?;
    let n = problem.sampler.len();
    let mut scratch = Scratch {
        z: vec![0.0; n],
        x: vec![0.0; n],
    };
    is_replication(problem, &a, &var, rng, &mut scratch)
}

/// Importance sampling for `P(I(T) > b)` under the shifted-field mixture.
pub fn importance_sampling(problem: &McProblem, settings: &McSettings) -> Result<EstimatorResult> {
    let started = Instant::now();
    let (a, var) = is_parameters(problem)?;
    let accs = run(settings, problem.sampler.len(), 1, |rng, s, accs| {
        let draw = is_replication(problem, &a, &var, rng, s)?;
        let y = if draw.indicator { draw.weight } else { 0.0 };
        accs[0].push(y, draw.weight, draw.indicator);
        accs[0].record_log_weight(draw.log_weight);
        Ok(())
    })?;
    Ok(finish(
        problem,
        EstimatorKind::ImportanceSampling,
        &[problem.query.b],
        settings,
        accs,
        started,
    )
    .remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{FnKernel, SquaredExponential};
    use crate::field_sim::{ConstantMean, Domain, QuadraticMean};
    use crate::tail_approx::tail_integral_approx;

    fn reference(b: f64, half: f64) -> McProblem {
        let q = TailQuery::new(
            Arc::new(SquaredExponential::unit(1)),
            Arc::new(QuadraticMean::new(0.25)),
            Domain::symmetric_cube(1, half).unwrap(),
            1.0,
            b,
        )
        .unwrap();
        let grid = Grid::with_density(q.domain.clone(), 8.0);
        McProblem::new(q, grid).unwrap()
    }

    fn frozen(b: f64) -> McProblem {
        let q = TailQuery::new(
            Arc::new(FnKernel::new(1, |_: &[f64]| 0.0)),
            Arc::new(ConstantMean::new(0.0)),
            Domain::new(vec![(0.0, 1.0)]).unwrap(),
            1.0,
            b,
        )
        .unwrap();
        let grid = Grid::with_density(q.domain.clone(), 8.0);
        McProblem::new(q, grid).unwrap()
    }

    #[test]
    fn frozen_field_is_deterministic() {
        let s = McSettings::new(200, 1);
        let r = crude_mc(&frozen(0.5), &s).unwrap();
        assert_eq!((r.estimate, r.std_error), (1.0, 0.0));
        let r = crude_mc(&frozen(2.0), &s).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert_eq!(r.ci95, (0.0, 3.0 / 200.0));
        assert!(r.warnings.contains(&McWarning::ZeroHits));
    }

    #[test]
    fn frozen_field_poisson_tail() {
        // I = 1, so P(N > 2) = 1 − (5/2) e^{-1}
        let r = count_tail_mc(&frozen(2.0), &McSettings::new(100_000, 9)).unwrap();
        let p = 1.0 - 2.5 * (-1.0f64).exp();
        assert!((p - 0.0803).abs() < 1e-4);
        assert!((r.estimate - p).abs() < 3.0 * r.std_error, "{} vs {p}", r.estimate);
    }

    #[test]
    fn likelihood_ratio_for_zero_path() {
        // f ≡ 0, μ ≡ 0: dQ/dP = e^{−u²/2}
        let u = 2.7;
        let n = 5;
        let lr = log_likelihood_ratio(&vec![0.0; n], &vec![u; n], &vec![1.0; n]);
        assert!((lr + u * u / 2.0).abs() < 1e-14);
        let p = reference(40.0, 2.0);
        let w = importance_draw(&p, &mut ReplicationStreams::new(1).stream(0)).unwrap();
        assert!(w.weight > 0.0 && w.weight.is_finite());
        assert_eq!(w.node, p.grid().cell_of(&w.tau));
    }

    #[test]
    fn single_replication() {
        let r = crude_mc(&reference(20.0, 2.0), &McSettings::new(1, 3)).unwrap();
        assert!(r.estimate == 0.0 || r.estimate == 1.0);
        assert_eq!(r.std_error, 0.0);
        assert!(r.warnings.contains(&McWarning::LowN));
        assert!(crude_mc(&reference(20.0, 2.0), &McSettings::new(0, 3)).is_err());
    }

    #[test]
    fn fixed_seed_reproduces() {
        let p = reference(20.0, 2.0);
        let s = McSettings::new(2000, 42);
        let a = crude_mc(&p, &s).unwrap();
        let b = crude_mc(&p, &s).unwrap();
        assert_eq!((a.estimate, a.hits), (b.estimate, b.hits));
        let a = importance_sampling(&p, &s).unwrap();
        let b = importance_sampling(&p, &s).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn many_thresholds_match_single_runs() {
        let p = reference(20.0, 2.0);
        let s = McSettings::new(500, 8);
        let bs = [10.0, 20.0, 35.0];
        let many = crude_mc_many(&p, &bs, &s).unwrap();
        let counts = count_tail_mc_many(&p, &bs, &s).unwrap();
        for (k, &b) in bs.iter().enumerate() {
            let pb = p.with_threshold(b).unwrap();
            let one = crude_mc(&pb, &s).unwrap();
            assert_eq!(one.estimate, many[k].estimate);
            assert_eq!(one.provenance(), many[k].provenance());
            assert_eq!(count_tail_mc(&pb, &s).unwrap().hits, counts[k].hits);
        }
    }

    #[test]
    fn merge_contract() {
        let p = reference(20.0, 2.0);
        let full = McSettings::new(1000, 5);
        for est in [EstimatorKind::Crude, EstimatorKind::ImportanceSampling] {
            let go = |s: &McSettings| match est {
                EstimatorKind::Crude => crude_mc(&p, s).unwrap(),
                _ => importance_sampling(&p, s).unwrap(),
            };
            let whole = go(&full);
            let parts: Vec<_> = full.batches(10).iter().map(go).collect();
            let merged = merge(&parts).unwrap();
            assert_eq!(merged.estimate.to_bits(), whole.estimate.to_bits());
            assert_eq!(merged.std_error.to_bits(), whole.std_error.to_bits());
            assert_eq!(merged.n, 1000);
            assert_eq!(merged.effective_sample_size.to_bits(), whole.effective_sample_size.to_bits());

            let ab = merge(&[parts[0].clone(), parts[1].clone()]).unwrap();
            let ba = merge(&[parts[1].clone(), parts[0].clone()]).unwrap();
            assert_eq!(ab.estimate.to_bits(), ba.estimate.to_bits());
            assert_eq!(ab.std_error.to_bits(), ba.std_error.to_bits());
            let one = merge(&parts[..1]).unwrap();
            assert_eq!(one.estimate.to_bits(), parts[0].estimate.to_bits());
            assert!(merge(&[parts[0].clone(), parts[0].clone()]).is_err());
        }
        let other = crude_mc(&reference(30.0, 2.0), &full).unwrap();
        let mine = crude_mc(&p, &McSettings::new(10, 5)).unwrap();
        assert_eq!(merge(&[mine, other]).unwrap_err(), Error::MixedProvenance);
    }

    #[test]
    fn crude_agrees_with_approximation_in_valid_regime() {
        let p = reference(20.0, 2.0);
        let approx = tail_integral_approx(p.query()).unwrap().probability;
        let r = crude_mc(&p, &McSettings::new(20_000, 17)).unwrap();
        assert!(r.estimate > 1e-3 && r.estimate < 1e-1, "{}", r.estimate);
        // agreement on the log scale; the approximation is asymptotic
        assert!((approx.log10() - r.estimate.log10()).abs() < 0.3, "{approx} vs {}", r.estimate);
    }

    #[test]
    fn is_requires_regime() {
        let p = reference(3.0, 2.0);
        assert!(matches!(
            importance_sampling(&p, &McSettings::new(10, 1)),
            Err(Error::NoRoot { .. })
        ));
    }

    #[test]
    fn result_invariants() {
        let p = reference(25.0, 2.0);
        for r in [
            crude_mc(&p, &McSettings::new(300, 2)).unwrap(),
            importance_sampling(&p, &McSettings::new(300, 2)).unwrap(),
            count_tail_mc(&p, &McSettings::new(300, 2)).unwrap(),
        ] {
            assert!(r.estimate >= 0.0);
            assert!(r.ci95.0 <= r.estimate && r.estimate <= r.ci95.1);
            if r.kind != EstimatorKind::ImportanceSampling {
                assert!(r.estimate <= 1.0);
                assert_eq!(r.effective_sample_size, 300.0);
            } else {
                let (lo, hi) = r.log_weight_range.unwrap();
                assert!(lo <= hi && hi.is_finite());
                assert!(r.effective_sample_size > 1.0 && r.effective_sample_size <= 300.0);
            }
        }
    }
}
