//! Repeated single-server trials over a grid of privacy budgets.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::classifiers::{FeatureSpace, LinearClassifier, Predictor};
use crate::data::Client;
use crate::error::{invalid, Error, Result};
use crate::harness::dataset::Dataset;
use crate::harness::synthetic::{Generator, SlopeSpec};
use crate::mechanisms::{split_budget, Epsilon};
use crate::mrma::{run_baselines, run_single_server, MemberDiagnostics, MrmaConfig};
use crate::output::{fmt_f64, RunMeta};
use crate::rng::{child, SimRng};

const DATA_STREAM: u64 = 1;
const PROTOCOL_STREAM: u64 = 2;
const BASELINE_STREAM: u64 = 3;

/// Fraction of `test` the predictor gets wrong.
pub fn misclassification_rate<P: Predictor + ?Sized>(predictor: &P, test: &[Client]) -> Result<f64> {
    if test.is_empty() {
        return Err(invalid("empty test set"));
    }
    let mut wrong = 0usize;
    for c in test {
        if predictor.predict(&c.features)? != c.label {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / test.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodKind {
    /// Mean over the weak classifiers.
    Weak,
    /// Mean over the weak classifiers after reversal.
    Mr,
    /// Averaging without reversal.
    Ma,
    Mrma,
    Voting,
    Averaging,
    AllData,
}

impl MethodKind {
    pub const ALL: [MethodKind; 7] = [
        MethodKind::Weak,
        MethodKind::Mr,
        MethodKind::Ma,
        MethodKind::Mrma,
        MethodKind::Voting,
        MethodKind::Averaging,
        MethodKind::AllData,
    ];

    fn needs_protocol(self) -> bool {
        matches!(self, MethodKind::Weak | MethodKind::Mr | MethodKind::Ma | MethodKind::Mrma)
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodKind::Weak => "weak",
            MethodKind::Mr => "mr",
            MethodKind::Ma => "ma",
            MethodKind::Mrma => "mrma",
            MethodKind::Voting => "voting",
            MethodKind::Averaging => "averaging",
            MethodKind::AllData => "all-data",
        })
    }
}

impl FromStr for MethodKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .into_iter()
            .find(|m| m.to_string() == s.trim())
            .ok_or_else(|| invalid(format!("unknown method {s:?}")))
    }
}

/// Clients and a test set for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialData {
    pub clients: Vec<Client>,
    pub test: Vec<Client>,
}

/// Where each trial's data comes from.
pub trait TrialSource: Sync {
    fn space(&self) -> FeatureSpace;
    fn draw(&self, n_clients: usize, n_test: usize, rng: &mut SimRng) -> Result<TrialData>;
}

/// Fresh functional covariates projected onto a basis.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    pub generator: Generator,
    pub slope: SlopeSpec,
}

impl TrialSource for SyntheticSource {
    fn space(&self) -> FeatureSpace {
        FeatureSpace::Basis(self.generator.basis().clone())
    }

    fn draw(&self, n_clients: usize, n_test: usize, rng: &mut SimRng) -> Result<TrialData> {
        let slope = self.slope.realize(self.generator.grid(), rng)?;
        let pop = self.generator.population(&slope)?;
        Ok(TrialData {
            clients: pop.draw_clients(n_clients, rng),
            test: pop.draw_clients(n_test, rng),
        })
    }
}

/// A random train/test split of a fixed dataset per trial. The test size
/// argument is ignored in favor of `test_fraction`.
#[derive(Debug, Clone)]
pub struct DatasetSource {
    pub dataset: Dataset,
    pub test_fraction: f64,
}

impl TrialSource for DatasetSource {
    fn space(&self) -> FeatureSpace {
        FeatureSpace::Vector(self.dataset.dim())
    }

    fn draw(&self, n_clients: usize, _n_test: usize, rng: &mut SimRng) -> Result<TrialData> {
        let (clients, test) = self.dataset.split_rescaled(self.test_fraction, rng)?;
        if clients.len() < n_clients {
            return Err(invalid(format!(
                "training portion has {} records, the protocol needs {n_clients}",
                clients.len()
            )));
        }
        Ok(TrialData { clients, test })
    }
}

/// The same data every trial.
#[derive(Debug, Clone)]
pub struct FixedSource {
    pub space: FeatureSpace,
    pub data: TrialData,
}

impl TrialSource for FixedSource {
    fn space(&self) -> FeatureSpace {
        self.space.clone()
    }

    fn draw(&self, _: usize, _: usize, _: &mut SimRng) -> Result<TrialData> {
        Ok(self.data.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub epsilons: Vec<Epsilon>,
    pub trials: usize,
    pub test_size: usize,
    /// Protocol sizes and training settings. The budget is replaced per grid
    /// point by the even split of that `ε` with `ε_v = ε`.
    pub mrma: MrmaConfig,
    pub methods: Vec<MethodKind>,
    pub seed: u64,
    pub jobs: usize,
    pub diagnostics: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(invalid("the epsilon grid is empty"));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.test_size == 0 {
            return Err(invalid("test size must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(invalid("no methods selected"));
        }
        if self.jobs == 0 {
            return Err(invalid("jobs must be at least 1"));
        }
        self.mrma.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub epsilon: Epsilon,
    pub trial: usize,
    pub method: MethodKind,
    pub misclassification: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow {
    pub epsilon: Epsilon,
    pub trial: usize,
    pub member: MemberDiagnostics,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    pub results: Vec<TrialResult>,
    pub diagnostics: Vec<DiagnosticsRow>,
}

fn mean_rate(clfs: &[LinearClassifier], test: &[Client]) -> Result<f64> {
    let mut total = 0.0;
    for c in clfs {
        total += misclassification_rate(c, test)?;
    }
    Ok(total / clfs.len() as f64)
}

/// One `(ε, trial)` cell. The data stream depends only on the trial, so every
/// grid point sees the same clients.
pub fn run_trial<S: TrialSource + ?Sized>(
    source: &S,
    config: &ExperimentConfig,
    epsilon: Epsilon,
    trial: usize,
) -> Result<ExperimentOutput> {
    let space = source.space();
    let mut mrma = config.mrma.clone();
    mrma.budget = split_budget(epsilon, space.dim())?;
    let mut data_rng = child(config.seed, &[DATA_STREAM, trial as u64]);
    let data = source.draw(mrma.total_clients(), config.test_size, &mut data_rng)?;
    let test = &data.test;
    let eps_key = epsilon.value().to_bits();

    let mut out = ExperimentOutput::default();
    let mut record = |method, misclassification| {
        out.results.push(TrialResult {
            epsilon,
            trial,
            method,
            misclassification,
        })
    };

    if config.methods.iter().any(|m| m.needs_protocol()) {
        let mut rng = child(config.seed, &[PROTOCOL_STREAM, eps_key, trial as u64]);
        let run = run_single_server(&mrma, &space, &data.clients, &mut rng)?;
        for &m in &config.methods {
            let rate = match m {
                MethodKind::Weak => mean_rate(&run.weak, test)?,
                MethodKind::Mr => mean_rate(&run.reversed, test)?,
                MethodKind::Ma => misclassification_rate(&run.ma_classifier, test)?,
                MethodKind::Mrma => misclassification_rate(&run.final_classifier, test)?,
                _ => continue,
            };
            record(m, rate);
        }
        if config.diagnostics {
            out.diagnostics = run
                .members
                .into_iter()
                .map(|member| DiagnosticsRow {
                    epsilon,
                    trial,
                    member,
                })
                .collect();
        }
    }
    if config.methods.iter().any(|m| !m.needs_protocol()) {
        let mut rng = child(config.seed, &[BASELINE_STREAM, eps_key, trial as u64]);
        let base = run_baselines(&mrma, &space, &data.clients, &mut rng)?;
        for &m in &config.methods {
            let rate = match m {
                MethodKind::Voting => misclassification_rate(&base.voting, test)?,
                MethodKind::Averaging => misclassification_rate(&base.averaging, test)?,
                MethodKind::AllData => misclassification_rate(&base.all_data, test)?,
                _ => continue,
            };
            record(m, rate);
        }
    }
    // Report methods in the order requested.
    out.results
        .sort_by_key(|r| config.methods.iter().position(|m| *m == r.method));
    Ok(out)
}

/// Every `(ε, trial)` cell, run on `config.jobs` threads. Output order is
/// grid order, then trial, then method, whatever the thread count.
pub fn run_experiment<S: TrialSource + ?Sized>(source: &S, config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let cells: Vec<(Epsilon, usize)> = config
        .epsilons
        .iter()
        .flat_map(|&e| (0..config.trials).map(move |t| (e, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    let parts = pool.install(|| {
        cells
            .par_iter()
            .map(|&(e, t)| run_trial(source, config, e, t))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut out = ExperimentOutput::default();
    for p in parts {
        out.results.extend(p.results);
        out.diagnostics.extend(p.diagnostics);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub epsilon: Epsilon,
    pub method: MethodKind,
    pub mean: f64,
    /// Standard error of the mean across trials.
    pub stderr: f64,
    pub trials: usize,
}

/// Mean and standard error per `(ε, method)`, in first-seen order.
pub fn summarize(results: &[TrialResult]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Epsilon, MethodKind)> = Vec::new();
    for r in results {
        if !keys.iter().any(|&(e, m)| e == r.epsilon && m == r.method) {
            keys.push((r.epsilon, r.method));
        }
    }
    keys.into_iter()
        .map(|(epsilon, method)| {
            let xs: Vec<f64> = results
                .iter()
                .filter(|r| r.epsilon == epsilon && r.method == method)
                .map(|r| r.misclassification)
                .collect();
            let (mean, stderr) = mean_stderr(&xs);
            SummaryRow {
                epsilon,
                method,
                mean,
                stderr,
                trials: xs.len(),
            }
        })
        .collect()
}

/// Sample mean and `s/√n`; the standard error of a single value is 0.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn write_results_csv<W: Write>(w: &mut W, meta: &RunMeta, results: &[TrialResult]) -> io::Result<()> {
    meta.write_header(w)?;
    writeln!(w, "epsilon,trial,method,misclassification")?;
    for r in results {
        writeln!(w, "{},{},{},{}", r.epsilon, r.trial, r.method, fmt_f64(r.misclassification))?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(w: &mut W, meta: &RunMeta, rows: &[SummaryRow]) -> io::Result<()> {
    meta.write_header(w)?;
    writeln!(w, "epsilon,method,mean,stderr,trials")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.epsilon,
            r.method,
            fmt_f64(r.mean),
            fmt_f64(r.stderr),
            r.trials
        )?;
    }
    Ok(())
}

pub fn write_diagnostics_csv<W: Write>(w: &mut W, meta: &RunMeta, rows: &[DiagnosticsRow]) -> io::Result<()> {
    meta.write_header(w)?;
    writeln!(w, "epsilon,trial,{}", MemberDiagnostics::HEADER)?;
    for r in rows {
        writeln!(w, "{},{},{}", r.epsilon, r.trial, r.member.csv_fields())?;
    }
    Ok(())
}
