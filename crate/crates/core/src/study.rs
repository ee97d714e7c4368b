//! Noise-level sweep: seeded trials per noise level, median aggregation,
//! log-log rate fits and CSV output.

use std::cmp::Ordering;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward_op::{self, CurveParametrization, TraceData};
use crate::param_space::{ParameterSpline, UniformGrid};
use crate::regularize::{self, AprioriRule, Penalties, ReconstructionResult, TikhonovProblem};

pub const DEFAULT_DELTAS: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
pub const DEFAULT_TRIALS: usize = 10;
pub const DEFAULT_ELEMENTS: usize = 200;
pub const DEFAULT_QUADRATURE: usize = 500;
/// Noise levels at or below this are limited by the discretization and
/// left out of rate fits unless requested.
pub const DISCRETIZATION_FLOOR: f64 = 1e-6;

/// Exact coefficient of the reference experiment.
pub fn exact_coefficient(u: f64) -> f64 {
    1.0 + u * u
}

/// `A(u) = u + u³/3 + C`, normalized so that `A(-1/√2) = 0`.
pub fn exact_antiderivative(u: f64) -> f64 {
    u + u.powi(3) / 3.0 + 7.0 / (6.0 * std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaRule {
    Quadratic,
    EightFifths(f64),
    Discrepancy(f64),
}

impl fmt::Display for AlphaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaRule::Quadratic => write!(f, "quadratic"),
            AlphaRule::EightFifths(c) => write!(f, "eight-fifths:{c}"),
            AlphaRule::Discrepancy(tau) => write!(f, "discrepancy:{tau}"),
        }
    }
}

impl FromStr for AlphaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let number = |a: &str| {
            a.parse::<f64>()
                .map_err(|_| Error::Argument(format!("bad numeric argument `{a}` in alpha rule `{s}`")))
        };
        match (name, arg) {
            ("quadratic", None) => Ok(AlphaRule::Quadratic),
            ("eight-fifths", None) => Ok(AlphaRule::EightFifths(AprioriRule::DEFAULT_EIGHT_FIFTHS)),
            ("eight-fifths", Some(c)) => Ok(AlphaRule::EightFifths(number(c)?)),
            ("discrepancy", None) => Ok(AlphaRule::Discrepancy(regularize::DEFAULT_TAU)),
            ("discrepancy", Some(t)) => Ok(AlphaRule::Discrepancy(number(t)?)),
            _ => Err(Error::Argument(format!(
                "unknown alpha rule `{s}` (expected quadratic, eight-fifths[:c] or discrepancy[:tau])"
            ))),
        }
    }
}

/// Theoretical rates drawn as reference lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRates {
    pub err0: f64,
    pub err1: f64,
    pub residual: f64,
}

impl ReferenceRates {
    pub fn for_rule(rule: AlphaRule) -> Self {
        match rule {
            AlphaRule::EightFifths(_) => Self { err0: 0.6, err1: 0.2, residual: 1.0 },
            AlphaRule::Quadratic | AlphaRule::Discrepancy(_) => Self { err0: 0.5, err1: 0.0, residual: 1.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub deltas: Vec<f64>,
    pub alpha_rule: AlphaRule,
    pub trials: usize,
    pub base_seed: u64,
    pub n_spline: usize,
    pub m_quad: usize,
    pub out_dir: PathBuf,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            deltas: DEFAULT_DELTAS.to_vec(),
            alpha_rule: AlphaRule::Quadratic,
            trials: DEFAULT_TRIALS,
            base_seed: 0,
            n_spline: DEFAULT_ELEMENTS,
            m_quad: DEFAULT_QUADRATURE,
            out_dir: PathBuf::from("study_out"),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.deltas.is_empty() {
            return Err(Error::Argument("no noise levels given".into()));
        }
        if let Some(d) = self.deltas.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
            return Err(Error::Argument(format!("noise levels must be positive, got {d}")));
        }
        if self.deltas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Argument("noise levels must be strictly decreasing".into()));
        }
        if self.trials == 0 {
            return Err(Error::Argument("need at least one trial".into()));
        }
        if self.n_spline == 0 {
            return Err(Error::Argument("need at least one spline element".into()));
        }
        if self.m_quad < 3 {
            return Err(Error::Argument("need at least three quadrature points".into()));
        }
        match self.alpha_rule {
            AlphaRule::EightFifths(c) if !(c > 0.0) => {
                Err(Error::Argument(format!("eight-fifths factor must be positive, got {c}")))
            }
            AlphaRule::Discrepancy(tau) if !(tau > 1.0) => {
                Err(Error::Argument(format!("discrepancy factor must exceed 1, got {tau}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub delta: f64,
    pub alpha: f64,
    pub trial: usize,
    pub seed: u64,
    pub err0: f64,
    pub err1: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub delta: f64,
    pub trial: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudyOutput {
    pub records: Vec<ConvergenceRecord>,
    pub failures: Vec<CellFailure>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-cell seed, a pure function of `(base_seed, δ, trial)`.
pub fn cell_seed(base_seed: u64, delta: f64, trial: usize) -> u64 {
    base_seed ^ splitmix64(delta.to_bits() ^ splitmix64(trial as u64))
}

/// How the regularization parameter of a single run is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParameterChoice {
    Fixed(f64),
    Rule(AlphaRule),
}

/// Shared, immutable pieces of the reference experiment.
#[derive(Debug, Clone)]
pub struct StudyContext {
    curve: CurveParametrization,
    exact_data: TraceData,
    penalties: Arc<Penalties>,
    exact: ParameterSpline,
}

impl StudyContext {
    pub fn reference(n_spline: usize, m_quad: usize) -> Result<Self> {
        let curve = CurveParametrization::reference();
        let exact_data = forward_op::make_exact_data(&curve, exact_antiderivative, m_quad)?;
        let grid = UniformGrid::new(curve.interval(), n_spline)?;
        let penalties = Arc::new(Penalties::assemble(grid)?);
        let exact = ParameterSpline::from_function(exact_coefficient, curve.interval(), n_spline)?;
        Ok(Self { curve, exact_data, penalties, exact })
    }

    pub fn curve(&self) -> &CurveParametrization {
        &self.curve
    }

    pub fn exact_data(&self) -> &TraceData {
        &self.exact_data
    }

    pub fn exact_spline(&self) -> &ParameterSpline {
        &self.exact
    }

    pub fn penalties(&self) -> Arc<Penalties> {
        self.penalties.clone()
    }

    /// Noisy traces for one seed; `δ = 0` returns the exact data.
    pub fn noisy_data(&self, delta: f64, seed: u64) -> Result<TraceData> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        forward_op::add_noise(&self.exact_data, delta, &mut rng)
    }

    /// One regularized reconstruction with errors against the exact `a`.
    pub fn reconstruct(&self, delta: f64, seed: u64, choice: ParameterChoice) -> Result<ReconstructionResult> {
        let data = self.noisy_data(delta, seed)?;
        let result = match choice {
            ParameterChoice::Fixed(alpha) => {
                regularize::solve_tikhonov(&TikhonovProblem::new(data, self.penalties.clone(), alpha)?)?
            }
            ParameterChoice::Rule(AlphaRule::Quadratic) => {
                let alpha = regularize::alpha_a_priori(delta, AprioriRule::Quadratic)?;
                regularize::solve_tikhonov(&TikhonovProblem::new(data, self.penalties.clone(), alpha)?)?
            }
            ParameterChoice::Rule(AlphaRule::EightFifths(c)) => {
                let alpha = regularize::alpha_a_priori(delta, AprioriRule::EightFifths { c })?;
                regularize::solve_tikhonov(&TikhonovProblem::new(data, self.penalties.clone(), alpha)?)?
            }
            ParameterChoice::Rule(AlphaRule::Discrepancy(tau)) => {
                let problem = TikhonovProblem::new(data, self.penalties.clone(), 1.0)?;
                regularize::alpha_discrepancy(&problem, delta, tau)?.1
            }
        };
        result.with_reference(&self.exact)
    }

    /// `err₀` of direct differentiation of the noisy traces.
    pub fn naive_error(&self, delta: f64, seed: u64) -> Result<f64> {
        let data = self.noisy_data(delta, seed)?;
        let naive = regularize::naive_reconstruction(&data, &self.curve, self.exact.grid().elements())?;
        Ok(naive.difference(&self.exact)?.l2_norm())
    }

    pub fn run_cell(&self, delta: f64, trial: usize, seed: u64, choice: ParameterChoice) -> Result<ConvergenceRecord> {
        let r = self.reconstruct(delta, seed, choice)?;
        Ok(ConvergenceRecord {
            delta,
            alpha: r.alpha,
            trial,
            seed,
            err0: r.err0.unwrap_or(f64::NAN),
            err1: r.err1.unwrap_or(f64::NAN),
            residual: r.residual,
        })
    }
}

/// Runs every `(δ, trial)` cell in parallel. Failed cells are collected
/// and the sweep continues; output order is `(δ as listed, trial)`.
pub fn run_study(config: &StudyConfig) -> Result<StudyOutput> {
    config.validate()?;
    let ctx = StudyContext::reference(config.n_spline, config.m_quad)?;
    let cells: Vec<(f64, usize)> = config
        .deltas
        .iter()
        .flat_map(|&d| (0..config.trials).map(move |t| (d, t)))
        .collect();
    let outcomes: Vec<std::result::Result<ConvergenceRecord, CellFailure>> = cells
        .par_iter()
        .map(|&(delta, trial)| {
            let seed = cell_seed(config.base_seed, delta, trial);
            ctx.run_cell(delta, trial, seed, ParameterChoice::Rule(config.alpha_rule))
                .map_err(|e| CellFailure { delta, trial, seed, message: e.to_string() })
        })
        .collect();
    let mut out = StudyOutput::default();
    for o in outcomes {
        match o {
            Ok(r) => out.records.push(r),
            Err(f) => out.failures.push(f),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Err0,
    Err1,
    Residual,
}

impl Column {
    pub const ALL: [Column; 3] = [Column::Err0, Column::Err1, Column::Residual];

    pub fn name(self) -> &'static str {
        match self {
            Column::Err0 => "err0",
            Column::Err1 => "err1",
            Column::Residual => "residual",
        }
    }

    pub fn of(self, r: &ConvergenceRecord) -> f64 {
        match self {
            Column::Err0 => r.err0,
            Column::Err1 => r.err1,
            Column::Residual => r.residual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSummary {
    pub delta: f64,
    pub trials: usize,
    pub alpha: Band,
    pub err0: Band,
    pub err1: Band,
    pub residual: Band,
}

impl DeltaSummary {
    pub fn band(&self, column: Column) -> Band {
        match column {
            Column::Err0 => self.err0,
            Column::Err1 => self.err1,
            Column::Residual => self.residual,
        }
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn band(mut values: Vec<f64>) -> Band {
    let med = median(&mut values);
    Band { median: med, min: values[0], max: values[values.len() - 1] }
}

/// Per-δ medians and extremes, largest δ first.
pub fn summarize(records: &[ConvergenceRecord]) -> Vec<DeltaSummary> {
    let mut sorted: Vec<&ConvergenceRecord> = records.iter().collect();
    sorted.sort_by(|a, b| b.delta.total_cmp(&a.delta).then(a.trial.cmp(&b.trial)));
    let mut out = Vec::new();
    for group in sorted.chunk_by(|a, b| a.delta == b.delta) {
        let pick = |f: fn(&ConvergenceRecord) -> f64| band(group.iter().map(|r| f(r)).collect());
        out.push(DeltaSummary {
            delta: group[0].delta,
            trials: group.len(),
            alpha: pick(|r| r.alpha),
            err0: pick(|r| r.err0),
            err1: pick(|r| r.err1),
            residual: pick(|r| r.residual),
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Include noise levels at or below [`DISCRETIZATION_FLOOR`].
    pub include_floor: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { include_floor: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub deltas: Vec<f64>,
}

/// Least-squares slope of `log₁₀(median)` against `log₁₀(δ)`.
pub fn fit_rate(records: &[ConvergenceRecord], column: Column, options: FitOptions) -> Result<RateFit> {
    let points: Vec<(f64, f64)> = summarize(records)
        .iter()
        .filter(|s| options.include_floor || s.delta > DISCRETIZATION_FLOOR * (1.0 + 1e-9))
        .map(|s| (s.delta, s.band(column).median))
        .filter(|(_, v)| *v > 0.0 && v.is_finite())
        .collect();
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "rate fit for {} needs at least 3 usable noise levels, got {}",
            column.name(),
            points.len()
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.log10()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log10()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(RateFit { slope, intercept: my - slope * mx, deltas: points.iter().map(|p| p.0).collect() })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

/// Writes `delta,alpha,trial,seed,err0,err1,residual`.
pub fn emit_csv(records: &[ConvergenceRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no records to write".into()));
    }
    let mut w = csv_writer(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ConvergenceRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|rec| rec.map_err(Error::from)).collect()
}

/// Writes per-δ bands to `series_path` and reference-rate lines, anchored
/// at the median of the largest δ, to `reference_path`.
pub fn emit_plot_data(
    records: &[ConvergenceRecord],
    rates: ReferenceRates,
    series_path: &Path,
    reference_path: &Path,
) -> Result<()> {
    let summary = summarize(records);
    let Some(anchor) = summary.first() else {
        return Err(Error::InsufficientData("no records to plot".into()));
    };

    let mut w = csv_writer(series_path)?;
    let mut header = vec!["delta".to_string()];
    for c in Column::ALL {
        for part in ["median", "min", "max"] {
            header.push(format!("{}_{part}", c.name()));
        }
    }
    w.write_record(&header)?;
    for s in &summary {
        let mut row = vec![s.delta.to_string()];
        for c in Column::ALL {
            let b = s.band(c);
            row.extend([b.median.to_string(), b.min.to_string(), b.max.to_string()]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv_writer(reference_path)?;
    w.write_record(["series", "rate", "delta", "value"])?;
    for (c, rate) in [(Column::Err0, rates.err0), (Column::Err1, rates.err1), (Column::Residual, rates.residual)] {
        let base = anchor.band(c).median;
        for s in &summary {
            let v = base * (s.delta / anchor.delta).powf(rate);
            w.write_record([c.name().to_string(), rate.to_string(), s.delta.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `records.csv`, `plot_series.csv`, `plot_reference.csv` and,
/// when cells failed, `failures.txt` into the configured directory.
pub fn write_outputs(config: &StudyConfig, output: &StudyOutput) -> Result<()> {
    std::fs::create_dir_all(&config.out_dir)?;
    let dir = &config.out_dir;
    if !output.records.is_empty() {
        emit_csv(&output.records, &dir.join("records.csv"))?;
        emit_plot_data(
            &output.records,
            ReferenceRates::for_rule(config.alpha_rule),
            &dir.join("plot_series.csv"),
            &dir.join("plot_reference.csv"),
        )?;
    }
    if !output.failures.is_empty() {
        let mut f = BufWriter::new(File::create(dir.join("failures.txt"))?);
        for fail in &output.failures {
            writeln!(f, "delta={} trial={} seed={}: {}", fail.delta, fail.trial, fail.seed, fail.message)?;
        }
        f.flush()?;
    }
    Ok(())
}

/// Orders records by descending δ, then trial.
pub fn sort_records(records: &mut [ConvergenceRecord]) {
    records.sort_by(|a, b| match b.delta.total_cmp(&a.delta) {
        Ordering::Equal => a.trial.cmp(&b.trial),
        o => o,
    });
}
