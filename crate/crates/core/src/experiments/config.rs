use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceKernel, GaussianAniso, SquaredExponential};
use crate::field_sim::{ConstantMean, Covariate, Domain, Grid, LinearCombination, MeanFunction, QuadraticMean};

/// A config problem, anchored to a line of the source when one is known.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}{message}", match line { Some(l) => format!("line {l}: "), None => String::new() })]
pub struct ConfigError {
    pub message: String,
    pub line: Option<usize>,
}

impl ConfigError {
    fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            line: None,
        }
    }

    /// Attaches the line of the first occurrence of `"key"` in `source`.
    fn anchor(mut self, source: &str, key: &str) -> Self {
        if self.line.is_none() {
            let needle = format!("\"{key}\"");
            self.line = source.lines().position(|l| l.contains(&needle)).map(|i| i + 1);
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `exp(−|t|² / 2ℓ²)`.
    SquaredExponential {
        #[serde(default = "one")]
        length_scale: f64,
    },
    /// `exp(−tᵀ S t / 2)`.
    GaussianAniso { scale: Vec<Vec<f64>> },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub beta: f64,
    pub covariate: Covariate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeanSpec {
    /// `−c |t − center|²`.
    Quadratic {
        c: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    Constant { value: f64 },
    /// `Σ β_k x_k(t)`.
    LinearCombo { terms: Vec<Term> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Thresholds {
    Values(Vec<f64>),
    Geometric { start: f64, stop: f64, count: usize },
}

impl Thresholds {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            Thresholds::Values(ref v) => v.clone(),
            Thresholds::Geometric { start, stop, count } => {
                if count == 1 {
                    return vec![start];
                }
                let ratio = (stop / start).ln() / (count - 1) as f64;
                (0..count)
                    .map(|k| if k + 1 == count { stop } else { start * (ratio * k as f64).exp() })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSettings {
    pub seed: u64,
    /// Crude Monte Carlo replications.
    #[serde(default = "default_mc_n")]
    pub mc_n: u64,
    /// Importance-sampling replications.
    #[serde(default = "default_is_n")]
    pub is_n: u64,
    /// Count-tail replications.
    #[serde(default = "default_mc_n")]
    pub count_n: u64,
    /// Simulation grid density; ignored when `resolution` is given.
    #[serde(default = "default_density")]
    pub nodes_per_unit: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Vec<usize>>,
    #[serde(default)]
    pub importance_sampling: bool,
    #[serde(default)]
    pub count_mc: bool,
    #[serde(default = "yes")]
    pub laplace: bool,
}

fn default_mc_n() -> u64 {
    5000
}

fn default_is_n() -> u64 {
    1000
}

fn default_density() -> f64 {
    8.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_stem")]
    pub name: String,
    #[serde(default)]
    pub svg: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_stem() -> String {
    "results".into()
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            name: default_stem(),
            svg: false,
        }
    }
}

/// One experiment: a field model, a threshold sweep and estimator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    pub mean: MeanSpec,
    /// `[lo, hi]` per axis.
    pub domain: Vec<[f64; 2]>,
    pub sigma: f64,
    pub thresholds: Thresholds,
    pub estimators: EstimatorSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_count: Option<u64>,
    #[serde(default)]
    pub output: OutputSettings,
}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(source: &str) -> Result<Self, ConfigError> {
        let config: Self = serde_json::from_str(source).map_err(|e| ConfigError {
            message: e.to_string(),
            line: (e.line() > 0).then_some(e.line()),
        })?;
        config.validate().map_err(|(e, key)| e.anchor(source, key))?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn dim(&self) -> usize {
        self.domain.len()
    }

    fn validate(&self) -> Result<(), (ConfigError, &'static str)> {
        let fail = |key: &'static str, msg: String| Err((ConfigError::new(msg), key));
        if self.domain.is_empty() {
            return fail("domain", "domain needs at least one axis".into());
        }
        if let Err(e) = self.domain() {
            return fail("domain", e.to_string());
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return fail("sigma", format!("sigma must be positive, got {}", self.sigma));
        }
        if let Err(e) = self.kernel() {
            return fail("kernel", e);
        }
        if let Err(e) = self.mean() {
            return fail("mean", e);
        }
        match self.thresholds {
            Thresholds::Values(ref v) => {
                if v.is_empty() || v.iter().any(|b| !b.is_finite() || *b < 0.0) {
                    return fail("thresholds", "thresholds must be a non-empty list of finite values ≥ 0".into());
                }
            }
            Thresholds::Geometric { start, stop, count } => {
                if !(start > 0.0 && stop >= start && stop.is_finite()) || count == 0 {
                    return fail(
                        "geometric",
                        "geometric thresholds need 0 < start ≤ stop and count ≥ 1".into(),
                    );
                }
            }
        }
        let e = &self.estimators;
        if e.mc_n == 0 || e.is_n == 0 || e.count_n == 0 {
            return fail("estimators", "replication counts must be at least 1".into());
        }
        if let Err(msg) = self.grid() {
            return fail("estimators", msg);
        }
        Ok(())
    }

    pub fn domain(&self) -> crate::Result<Domain> {
        Domain::new(self.domain.iter().map(|&[a, b]| (a, b)).collect())
    }

    pub fn kernel(&self) -> Result<Arc<dyn CovarianceKernel>, String> {
        let d = self.dim();
        match self.kernel {
            KernelSpec::SquaredExponential { length_scale } => SquaredExponential::new(d, length_scale)
                .map(|k| Arc::new(k) as Arc<dyn CovarianceKernel>)
                .map_err(|e| e.to_string()),
            KernelSpec::GaussianAniso { ref scale } => {
                if scale.len() != d || scale.iter().any(|r| r.len() != d) {
                    return Err(format!("scale must be a {d}×{d} matrix"));
                }
                let m = DMatrix::from_fn(d, d, |i, j| scale[i][j]);
                GaussianAniso::new(m)
                    .map(|k| Arc::new(k) as Arc<dyn CovarianceKernel>)
                    .map_err(|e| e.to_string())
            }
        }
    }

    pub fn mean(&self) -> Result<Arc<dyn MeanFunction>, String> {
        let d = self.dim();
        Ok(match self.mean {
            MeanSpec::Quadratic { c, ref center } => match center {
                None => Arc::new(QuadraticMean::new(c)),
                Some(center) if center.len() == d => Arc::new(QuadraticMean::centered_at(c, center.clone())),
                Some(center) => return Err(format!("center has {} coordinates, domain has {d}", center.len())),
            },
            MeanSpec::Constant { value } => Arc::new(ConstantMean::new(value)),
            MeanSpec::LinearCombo { ref terms } => {
                for t in terms {
                    if let Some(a) = t.covariate.axis() {
                        if a >= d {
                            return Err(format!("covariate axis {a} out of range for dimension {d}"));
                        }
                    }
                    if let Covariate::Cos { period, .. } | Covariate::Sin { period, .. } = t.covariate {
                        if !(period > 0.0) {
                            return Err("harmonic period must be positive".into());
                        }
                    }
                }
                Arc::new(LinearCombination::new(
                    terms.iter().map(|t| (t.beta, t.covariate.clone())).collect(),
                ))
            }
        })
    }

    /// Simulation grid.
    pub fn grid(&self) -> Result<Grid, String> {
        let domain = self.domain().map_err(|e| e.to_string())?;
        match self.estimators.resolution {
            Some(ref r) => {
                if r.len() != self.dim() || r.iter().any(|&n| n < 2) {
                    return Err(format!("resolution needs {} entries, each ≥ 2", self.dim()));
                }
                Grid::new(domain, r.clone()).map_err(|e| e.to_string())
            }
            None => {
                let npu = self.estimators.nodes_per_unit;
                if !(npu > 0.0 && npu.is_finite()) {
                    return Err("nodes_per_unit must be positive".into());
                }
                Ok(Grid::with_density(domain, npu))
            }
        }
    }
}
