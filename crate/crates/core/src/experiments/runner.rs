use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ConfigError, ExperimentConfig};
use super::plot::{render_svg, Panel};
use crate::error::Error;
use crate::mc_estimators::{
    count_tail_mc_many, crude_mc_many, importance_sampling, EstimatorResult, McProblem, McSettings,
};
use crate::tail_approx::{
    rho_diagnostic, tail_count_approx, tail_integral_approx, tail_laplace_approx, ApproxResult, RhoDiagnostic,
    TailQuery,
};

/// Column order of every results CSV.
pub const CSV_HEADER: &str =
    "b,u,rho,approx,approx_laplace,mc_estimate,mc_se,is_estimate,is_se,count_mc_estimate,count_mc_se,warnings";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("numeric failure: {0}")]
    Numeric(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numeric(_) | RunError::Io(_) => 3,
        }
    }
}

/// Which estimators a command runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Approx,
    Mc,
    Is,
    /// Approximation and crude MC, plus importance sampling and the count
    /// tail when enabled in the config.
    Compare,
}

/// One threshold's worth of results; absent values are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub b: f64,
    pub u: Option<f64>,
    pub rho: f64,
    pub approx: Option<f64>,
    pub approx_laplace: Option<f64>,
    pub mc_estimate: Option<f64>,
    pub mc_se: Option<f64>,
    pub is_estimate: Option<f64>,
    pub is_se: Option<f64>,
    pub count_mc_estimate: Option<f64>,
    pub count_mc_se: Option<f64>,
    pub warnings: Vec<String>,
}

impl ResultRow {
    fn new(b: f64, rho: f64) -> Self {
        Self {
            b,
            u: None,
            rho,
            approx: None,
            approx_laplace: None,
            mc_estimate: None,
            mc_se: None,
            is_estimate: None,
            is_se: None,
            count_mc_estimate: None,
            count_mc_se: None,
            warnings: Vec::new(),
        }
    }

    pub fn log10_approx(&self) -> Option<f64> {
        self.approx.map(f64::log10)
    }

    pub fn log10_mc(&self) -> Option<f64> {
        self.mc_estimate.filter(|&p| p > 0.0).map(f64::log10)
    }

    fn warn(&mut self, w: impl fmt::Display) {
        let w = w.to_string();
        if !self.warnings.contains(&w) {
            self.warnings.push(w);
        }
    }

    fn absorb_mc(&mut self, prefix: &str, r: &EstimatorResult) {
        for w in &r.warnings {
            self.warn(format!("{prefix}_{w}"));
        }
    }

    pub fn to_csv_line(&self) -> String {
        let num = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        let mut warnings = self.warnings.clone();
        warnings.sort();
        [
            num(Some(self.b)),
            num(self.u),
            num(Some(self.rho)),
            num(self.approx),
            num(self.approx_laplace),
            num(self.mc_estimate),
            num(self.mc_se),
            num(self.is_estimate),
            num(self.is_se),
            num(self.count_mc_estimate),
            num(self.count_mc_se),
            warnings.join(";"),
        ]
        .join(",")
    }
}

pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n: Option<u64>,
    pub out: Option<PathBuf>,
    pub svg: bool,
    pub observed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            config.estimators.seed = seed;
        }
        if let Some(n) = self.n {
            config.estimators.mc_n = n;
            config.estimators.is_n = n;
            config.estimators.count_n = n;
        }
        if let Some(out) = &self.out {
            config.output.dir = out.clone();
        }
        config.output.svg |= self.svg;
        if let Some(b) = self.observed {
            config.observed_count = Some(b);
        }
    }
}

struct Model {
    query: TailQuery,
    rho: RhoDiagnostic,
}

fn model(config: &ExperimentConfig, b: f64) -> Result<Model, RunError> {
    let domain = config.domain()?;
    let kernel = config.kernel().map_err(ConfigError::from_message)?;
    let mean = config.mean().map_err(ConfigError::from_message)?;
    let rho = rho_diagnostic(kernel.as_ref(), &domain);
    let query = TailQuery::new(kernel, mean, domain, config.sigma, b)?;
    Ok(Model { query, rho })
}

impl ConfigError {
    fn from_message(message: String) -> Self {
        ConfigError { message, line: None }
    }
}

fn record_approx(row: &mut ResultRow, r: &ApproxResult) {
    row.u = Some(r.u);
    row.approx = Some(r.probability);
    for w in &r.warnings {
        row.warn(w);
    }
}

fn numeric_warning(row: &mut ResultRow, e: &Error) {
    row.warn(match e {
        Error::NoRoot { .. } => "no_root",
        Error::NoInteriorMax(_) => "no_interior_max",
        Error::WeightOverflow { .. } => "weight_overflow",
        _ => "numeric_failure",
    });
}

/// Runs the estimators selected by `mode` at every configured threshold.
pub fn run_compare(config: &ExperimentConfig, mode: Mode) -> Result<Vec<ResultRow>, RunError> {
    let thresholds = config.thresholds.values();
    let base = model(config, thresholds.iter().copied().find(|&b| b > 0.0).unwrap_or(1.0))?;
    let rho = base.rho.rho;
    let mut rows: Vec<ResultRow> = thresholds.iter().map(|&b| ResultRow::new(b, rho)).collect();
    let e = &config.estimators;

    let query_at = |b: f64| base.query.with_threshold(b);

    if matches!(mode, Mode::Approx | Mode::Compare) {
        let laplace = e.laplace;
        rows.par_iter_mut().for_each(|row| {
            let q = match query_at(row.b) {
                Ok(q) => q,
                Err(_) => {
                    row.warn("no_root");
                    return;
                }
            };
            match tail_integral_approx(&q) {
                Ok(r) => record_approx(row, &r),
                Err(err) => numeric_warning(row, &err),
            }
            if laplace {
                match tail_laplace_approx(&q) {
                    Ok(r) => row.approx_laplace = Some(r.probability),
                    Err(Error::NoRoot { .. }) => {}
                    Err(err) => numeric_warning(row, &err),
                }
            }
        });
    }

    let needs_grid = !matches!(mode, Mode::Approx);
    if !needs_grid {
        return Ok(rows);
    }
    let grid = config.grid().map_err(ConfigError::from_message)?;
    let problem = McProblem::new(base.query.clone(), grid)?;

    if matches!(mode, Mode::Mc | Mode::Compare) {
        let settings = McSettings::new(e.mc_n, e.seed);
        let results = crude_mc_many(&problem, &thresholds, &settings)?;
        for (row, r) in rows.iter_mut().zip(&results) {
            row.mc_estimate = Some(r.estimate);
            row.mc_se = Some(r.std_error);
            row.absorb_mc("mc", r);
        }
    }

    if mode == Mode::Is || (mode == Mode::Compare && e.importance_sampling) {
        let settings = McSettings::new(e.is_n, e.seed);
        let results: Vec<Result<EstimatorResult, Error>> = thresholds
            .par_iter()
            .map(|&b| {
                let p = problem.with_threshold(b.max(f64::MIN_POSITIVE))?;
                importance_sampling(&p, &settings)
            })
            .collect();
        for (row, r) in rows.iter_mut().zip(results) {
            match r {
                Ok(r) => {
                    row.is_estimate = Some(r.estimate);
                    row.is_se = Some(r.std_error);
                    row.absorb_mc("is", &r);
                }
                Err(err) => numeric_warning(row, &err),
            }
        }
    }

    if mode == Mode::Compare && e.count_mc {
        let settings = McSettings::new(e.count_n, e.seed);
        let results = count_tail_mc_many(&problem, &thresholds, &settings)?;
        for (row, r) in rows.iter_mut().zip(&results) {
            row.count_mc_estimate = Some(r.estimate);
            row.count_mc_se = Some(r.std_error);
            row.absorb_mc("count", r);
        }
    }
    Ok(rows)
}

/// Writes `<dir>/<name>.csv` (and `.svg` when enabled); returns the CSV path.
pub fn write_outputs(config: &ExperimentConfig, rows: &[ResultRow], title: &str) -> Result<PathBuf, RunError> {
    let dir = &config.output.dir;
    std::fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{}.csv", config.output.name));
    std::fs::write(&csv, rows_to_csv(rows))?;
    if config.output.svg {
        let panel = Panel::from_rows(title, rows);
        std::fs::write(dir.join(format!("{}.svg", config.output.name)), render_svg(&[panel]))?;
    }
    Ok(csv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// One-dimensional domains `[−A, A]`, `A = 1, 2, 3`.
    Fig1,
    /// Two-dimensional domains `[−A, A]²`, `A = 1, 2, 3`.
    Fig2,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
        }
    }

    /// The embedded preset configs, one per domain.
    pub fn presets(self) -> Vec<ExperimentConfig> {
        let sources: [&str; 3] = match self {
            Figure::Fig1 => [
                include_str!("../../presets/fig1_a1.json"),
                include_str!("../../presets/fig1_a2.json"),
                include_str!("../../presets/fig1_a3.json"),
            ],
            Figure::Fig2 => [
                include_str!("../../presets/fig2_a1.json"),
                include_str!("../../presets/fig2_a2.json"),
                include_str!("../../presets/fig2_a3.json"),
            ],
        };
        sources
            .iter()
            .map(|s| ExperimentConfig::from_json(s).expect("embedded preset is valid"))
            .collect()
    }
}

impl std::str::FromStr for Figure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig1" => Ok(Figure::Fig1),
            "fig2" => Ok(Figure::Fig2),
            other => Err(format!("unknown figure {other:?}; expected fig1 or fig2")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigurePanel {
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
}

/// Runs every panel of a figure: approximation and crude MC per threshold.
pub fn run_figure(which: Figure, overrides: &Overrides) -> Result<Vec<FigurePanel>, RunError> {
    which
        .presets()
        .into_iter()
        .map(|mut config| {
            overrides.apply(&mut config);
            let rows = run_compare(&config, Mode::Compare)?;
            Ok(FigurePanel { config, rows })
        })
        .collect()
}

/// Writes one CSV per panel and, when any panel asks for it, a combined SVG.
pub fn write_figure(which: Figure, panels: &[FigurePanel]) -> Result<Vec<PathBuf>, RunError> {
    let mut paths = Vec::new();
    for p in panels {
        std::fs::create_dir_all(&p.config.output.dir)?;
        let path = p.config.output.dir.join(format!("{}.csv", p.config.output.name));
        std::fs::write(&path, rows_to_csv(&p.rows))?;
        paths.push(path);
    }
    if let Some(first) = panels.iter().find(|p| p.config.output.svg) {
        let svg: Vec<Panel> = panels
            .iter()
            .map(|p| Panel::from_rows(&domain_label(&p.config), &p.rows))
            .collect();
        let path = first.config.output.dir.join(format!("{}.svg", which.name()));
        std::fs::write(&path, render_svg(&svg))?;
        paths.push(path);
    }
    Ok(paths)
}

fn domain_label(config: &ExperimentConfig) -> String {
    let axes: Vec<String> = config.domain.iter().map(|[a, b]| format!("[{a}, {b}]")).collect();
    format!("T = {}", axes.join(" × "))
}

/// Inscribed radius, ρ(T) and the verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoReport {
    pub diagnostic: RhoDiagnostic,
}

impl RhoReport {
    pub fn to_csv(&self) -> String {
        format!(
            "r,rho,recommended\n{:.16e},{:.16e},{}\n",
            self.diagnostic.r,
            self.diagnostic.rho,
            self.diagnostic.recommended()
        )
    }
}

impl fmt::Display for RhoReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "r(T)   = {:.6}", self.diagnostic.r)?;
        writeln!(f, "rho(T) = {:.6}", self.diagnostic.rho)?;
        if self.diagnostic.recommended() {
            write!(f, "verdict: approximation recommended (rho < 0.15)")
        } else {
            write!(f, "verdict: approximation not recommended (rho >= 0.15)")
        }
    }
}

pub fn run_rho(config: &ExperimentConfig) -> Result<RhoReport, RunError> {
    let domain = config.domain()?;
    let kernel = config.kernel().map_err(ConfigError::from_message)?;
    Ok(RhoReport {
        diagnostic: rho_diagnostic(kernel.as_ref(), &domain),
    })
}

/// Outcome of the count p-value command.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueReport {
    pub observed: u64,
    /// Clamped asymptotic p-value; `None` below the asymptotic regime.
    pub approx: Option<f64>,
    pub u: Option<f64>,
    pub mc: Option<EstimatorResult>,
    pub rho: RhoDiagnostic,
    /// The observation is below the range where the approximation applies.
    pub below_regime: bool,
}

impl PValueReport {
    pub fn row(&self) -> ResultRow {
        let mut row = ResultRow::new(self.observed as f64, self.rho.rho);
        row.u = self.u;
        row.approx = self.approx;
        if let Some(mc) = &self.mc {
            row.count_mc_estimate = Some(mc.estimate);
            row.count_mc_se = Some(mc.std_error);
            row.absorb_mc("count", mc);
        }
        if self.below_regime {
            row.warn("below_regime");
        }
        if !self.rho.recommended() {
            row.warn("small_domain");
        }
        row
    }
}

impl fmt::Display for PValueReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "observed count b = {}", self.observed)?;
        if self.below_regime {
            writeln!(f, "observed count below asymptotic regime")?;
        }
        match self.approx {
            Some(p) => writeln!(f, "approximate p-value P(N(T) > b) = {p:.6e}")?,
            None => writeln!(f, "approximate p-value unavailable")?,
        }
        if let Some(mc) = &self.mc {
            writeln!(
                f,
                "Monte Carlo p-value = {:.6e} (se {:.3e}, n = {})",
                mc.estimate, mc.std_error, mc.n
            )?;
        }
        let caveat = if self.rho.recommended() {
            "approximation recommended"
        } else {
            "approximation not recommended; prefer the Monte Carlo value"
        };
        write!(f, "rho(T) = {:.6}: {caveat}", self.rho.rho)
    }
}

/// One-sided p-value `P(N(T) > b)` for an observed count `b`.
///
/// Fails with [`Error::NoRoot`] when `b` is below the asymptotic regime and
/// no Monte Carlo fallback is enabled.
pub fn run_pvalue(config: &ExperimentConfig) -> Result<PValueReport, RunError> {
    let observed = config.observed_count.ok_or_else(|| ConfigError {
        message: "observed_count is required for pvalue".into(),
        line: None,
    })?;
    let b = observed as f64;
    let m = model(config, b.max(1.0))?;
    let e = &config.estimators;

    let mc = if e.count_mc {
        let grid = config.grid().map_err(ConfigError::from_message)?;
        let problem = McProblem::new(m.query.clone(), grid)?;
        // b = 0 is a valid count threshold even though the query needs b > 0
        let r = count_tail_mc_many(&problem, &[b], &McSettings::new(e.count_n, e.seed))?;
        r.into_iter().next()
    } else {
        None
    };

    if observed == 0 {
        return Ok(PValueReport {
            observed,
            approx: Some(1.0),
            u: None,
            mc,
            rho: m.rho,
            below_regime: true,
        });
    }
    match tail_count_approx(&m.query) {
        Ok(r) => Ok(PValueReport {
            observed,
            approx: Some(r.clamped),
            u: Some(r.u),
            mc,
            rho: m.rho,
            below_regime: r.probability > 1.0,
        }),
        Err(Error::NoRoot { .. }) if mc.is_some() => Ok(PValueReport {
            observed,
            approx: None,
            u: None,
            mc,
            rho: m.rho,
            below_regime: true,
        }),
        Err(err) => Err(err.into()),
    }
}

/// Runs `mode` for `config` and writes its outputs.
pub fn run_and_write(config: &ExperimentConfig, mode: Mode) -> Result<(Vec<ResultRow>, PathBuf), RunError> {
    let rows = run_compare(config, mode)?;
    let title = domain_label(config);
    let path = write_outputs(config, &rows, &title)?;
    Ok((rows, path))
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig, RunError> {
    let source = std::fs::read_to_string(path).map_err(|e| ConfigError {
        message: format!("cannot read {}: {e}", path.display()),
        line: None,
    })?;
    Ok(ExperimentConfig::from_json(&source)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference(half: f64, n: u64) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(
            r#"{{
  "kernel": {{"name": "squared_exponential"}},
  "mean": {{"name": "quadratic", "c": 0.25}},
  "domain": [[-{half}, {half}]],
  "sigma": 1.0,
  "thresholds": {{"values": [3.0, 20.0, 60.0]}},
  "estimators": {{"seed": 11, "mc_n": {n}, "is_n": 200, "count_n": {n}, "importance_sampling": true, "count_mc": true}}
}}"#
        ))
        .unwrap()
    }

    #[test]
    fn compare_rows() {
        let rows = run_compare(&reference(2.0, 400), Mode::Compare).unwrap();
        assert_eq!(rows.len(), 3);
        // b = 3 is below the regime: approximation and IS are absent
        assert!(rows[0].approx.is_none() && rows[0].is_estimate.is_none());
        assert!(rows[0].warnings.contains(&"no_root".to_string()));
        assert!(rows[0].mc_estimate.is_some());
        for r in &rows[1..] {
            assert!(r.u.is_some() && r.approx.is_some() && r.approx_laplace.is_some());
            assert!(r.is_estimate.is_some() && r.count_mc_estimate.is_some());
            assert!((r.rho - (-2.0f64).exp()).abs() < 1e-15);
        }
        let line = rows[1].to_csv_line();
        assert_eq!(line.split(',').count(), 12);
        assert!(line.starts_with("2.0000000000000000e1,"));
    }

    #[test]
    fn approx_mode_has_no_mc_columns() {
        let rows = run_compare(&reference(2.0, 400), Mode::Approx).unwrap();
        assert!(rows.iter().all(|r| r.mc_estimate.is_none() && r.is_estimate.is_none()));
        let csv = rows_to_csv(&rows);
        assert!(csv.starts_with(CSV_HEADER));
        assert!(csv.lines().nth(2).unwrap().contains(",,,,,,,"));
    }

    #[test]
    fn rho_verdicts() {
        let r = run_rho(&reference(1.0, 10)).unwrap();
        assert!((r.diagnostic.rho - 0.6065).abs() < 1e-4);
        assert!(r.to_string().contains("not recommended"));
        let r = run_rho(&reference(2.0, 10)).unwrap();
        assert!(r.to_string().contains("verdict: approximation recommended"));
    }

    #[test]
    fn pvalue_edges() {
        let mut c = reference(2.0, 2000);
        c.observed_count = Some(0);
        let r = run_pvalue(&c).unwrap();
        assert_eq!(r.approx, Some(1.0));
        assert!(r.below_regime);

        c.observed_count = Some(3);
        let r = run_pvalue(&c).unwrap();
        assert!(r.approx.is_none() && r.mc.is_some());
        assert!(r.to_string().contains("observed count below asymptotic regime"));

        c.estimators.count_mc = false;
        let e = run_pvalue(&c).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }
}
