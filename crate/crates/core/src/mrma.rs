//! Model reversal, utility-weighted model averaging, and the single-server
//! protocol that produces the weak classifiers they act on.

use std::fmt;
use std::io::{self, Write};

use rand::seq::index;
use rand::Rng;

use crate::accounting::PrivacyAccountant;
use crate::classifiers::{combine, train, FeatureSpace, LinearClassifier, Predictor, TrainConfig};
use crate::data::{Client, Label, PerturbedPair};
use crate::error::{invalid, Result};
use crate::evaluation::{evaluate_audited, AccuracyEstimate};
use crate::mechanisms::{perturb_features, randomized_response, PrivacyBudget};
use crate::output::fmt_f64;
use crate::rng::{seeded, SimRng};

/// A classifier after the reversal decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Reversed {
    pub classifier: LinearClassifier,
    /// `max(r̃, 1 − r̃)`.
    pub estimate: f64,
    pub reversed: bool,
}

/// Negates `clf` when its estimated accuracy is below one half. An estimate
/// of exactly 0.5 keeps the original.
pub fn model_reversal(clf: &LinearClassifier, est: &AccuracyEstimate) -> Reversed {
    reverse_by_estimate(clf, est.debiased)
}

pub fn reverse_by_estimate(clf: &LinearClassifier, debiased: f64) -> Reversed {
    if debiased < 0.5 {
        Reversed {
            classifier: clf.negate(),
            estimate: 1.0 - debiased,
            reversed: true,
        }
    } else {
        Reversed {
            classifier: clf.clone(),
            estimate: debiased,
            reversed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragingWeights {
    pub weights: Vec<f64>,
    /// Set when no estimate cleared the cutoff and all weight went to the
    /// best one.
    pub fallback: bool,
}

pub fn check_cutoff(r0: f64) -> Result<()> {
    if r0 > 0.5 && r0 < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("cutoff r0 must lie in (0.5, 1), got {r0}")))
    }
}

/// `w_b ∝ max(r̃_b − r0, 0)`. When every estimate is at or below the cutoff
/// the weight goes entirely to the largest estimate (lowest index on ties).
pub fn averaging_weights(estimates: &[f64], r0: f64) -> Result<AveragingWeights> {
    if estimates.is_empty() {
        return Err(invalid("no estimates to weight"));
    }
    check_cutoff(r0)?;
    if let Some(e) = estimates.iter().find(|e| !e.is_finite()) {
        return Err(invalid(format!("non-finite accuracy estimate {e}")));
    }
    let excess: Vec<f64> = estimates.iter().map(|r| (r - r0).max(0.0)).collect();
    let total: f64 = excess.iter().sum();
    if total > 0.0 {
        return Ok(AveragingWeights {
            weights: excess.iter().map(|e| e / total).collect(),
            fallback: false,
        });
    }
    let best = estimates
        .iter()
        .enumerate()
        .fold(0, |best, (i, r)| if *r > estimates[best] { i } else { best });
    let mut weights = vec![0.0; estimates.len()];
    weights[best] = 1.0;
    Ok(AveragingWeights {
        weights,
        fallback: true,
    })
}

/// Reversed members and their estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakEnsemble {
    pub members: Vec<(LinearClassifier, AccuracyEstimate)>,
    pub r0: f64,
}

/// Result of reverse-then-average over an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub reversed: Vec<Reversed>,
    pub weights: AveragingWeights,
    pub combined: LinearClassifier,
}

impl WeakEnsemble {
    pub fn new(members: Vec<(LinearClassifier, AccuracyEstimate)>, r0: f64) -> Result<Self> {
        if members.is_empty() {
            return Err(invalid("ensemble needs at least one member"));
        }
        check_cutoff(r0)?;
        Ok(Self { members, r0 })
    }

    /// Model reversal followed by model averaging.
    pub fn reverse_and_average(&self) -> Result<Aggregate> {
        let reversed: Vec<Reversed> = self
            .members
            .iter()
            .map(|(c, e)| model_reversal(c, e))
            .collect();
        let estimates: Vec<f64> = reversed.iter().map(|r| r.estimate).collect();
        let weights = averaging_weights(&estimates, self.r0)?;
        let clfs: Vec<LinearClassifier> = reversed.iter().map(|r| r.classifier.clone()).collect();
        let combined = combine(&clfs, &weights.weights)?;
        Ok(Aggregate {
            reversed,
            weights,
            combined,
        })
    }

    /// Model averaging on the raw estimates, without reversal.
    pub fn average_only(&self) -> Result<(AveragingWeights, LinearClassifier)> {
        let estimates: Vec<f64> = self.members.iter().map(|(_, e)| e.debiased).collect();
        let weights = averaging_weights(&estimates, self.r0)?;
        let clfs: Vec<LinearClassifier> = self.members.iter().map(|(c, _)| c.clone()).collect();
        let combined = combine(&clfs, &weights.weights)?;
        Ok((weights, combined))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrmaConfig {
    /// Training clients `N0`.
    pub n_train: usize,
    /// Evaluation clients `N1`.
    pub n_eval: usize,
    /// Training pairs per weak classifier `n0`.
    pub n0: usize,
    /// Evaluation clients per weak classifier `n1`.
    pub n1: usize,
    /// Number of weak classifiers `B`.
    pub b: usize,
    pub budget: PrivacyBudget,
    pub r0: f64,
    pub train: TrainConfig,
}

impl MrmaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b == 0 {
            return Err(invalid("B must be at least 1"));
        }
        if self.n0 < 2 || self.n0 > self.n_train {
            return Err(invalid(format!(
                "n0 = {} must lie in [2, N0 = {}]",
                self.n0, self.n_train
            )));
        }
        if self.n1 == 0 || self.b * self.n1 > self.n_eval {
            return Err(invalid(format!(
                "B·n1 = {}·{} exceeds N1 = {}",
                self.b, self.n1, self.n_eval
            )));
        }
        check_cutoff(self.r0)?;
        self.train.validate()
    }

    pub fn total_clients(&self) -> usize {
        self.n_train + self.n_eval
    }
}

/// Which clients play which role in one protocol run.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub train: Vec<usize>,
    /// `B` disjoint evaluation subsets of `n1` clients each.
    pub eval_subsets: Vec<Vec<usize>>,
    /// Evaluation clients left unused.
    pub unused_eval: Vec<usize>,
}

impl Partition {
    /// Random split of `0..pool_size` into `N0` training clients and `N1`
    /// evaluation clients, the latter cut into `groups` runs of `n1`.
    pub fn draw<R: Rng + ?Sized>(
        pool_size: usize,
        n_train: usize,
        n_eval: usize,
        n1: usize,
        groups: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if n_train + n_eval > pool_size {
            return Err(invalid(format!(
                "{pool_size} clients cannot cover N0 + N1 = {}",
                n_train + n_eval
            )));
        }
        if groups * n1 > n_eval {
            return Err(invalid(format!(
                "{groups} evaluation subsets of {n1} exceed N1 = {n_eval}"
            )));
        }
        let order = index::sample(rng, pool_size, n_train + n_eval).into_vec();
        let (train, eval) = order.split_at(n_train);
        let eval_subsets = eval.chunks(n1).take(groups).map(<[usize]>::to_vec).collect();
        Ok(Self {
            train: train.to_vec(),
            eval_subsets,
            unused_eval: eval[groups * n1..].to_vec(),
        })
    }
}

/// Local perturbation of every training client at budget `(ε_z, ε_y)`.
pub fn collect_perturbed<R: Rng + ?Sized>(
    pool: &[Client],
    indices: &[usize],
    budget: &PrivacyBudget,
    accountant: Option<&mut PrivacyAccountant>,
    rng: &mut R,
) -> Result<Vec<PerturbedPair>> {
    let mut accountant = accountant;
    indices
        .iter()
        .map(|&i| {
            if let Some(acc) = accountant.as_deref_mut() {
                acc.charge(i, budget.total)?;
            }
            let c = &pool[i];
            let z = perturb_features(&c.features, budget.features, rng)?;
            let y = randomized_response(c.label, budget.labels, rng);
            Ok(PerturbedPair::new(z, y))
        })
        .collect()
}

/// Per-member record of one single-server run.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberDiagnostics {
    pub b: usize,
    pub estimate: AccuracyEstimate,
    pub reversed: bool,
    pub reversed_estimate: f64,
    /// Weight in the reversed-and-averaged classifier.
    pub weight: f64,
    /// Weight in the average-only classifier.
    pub ma_weight: f64,
}

impl MemberDiagnostics {
    pub const HEADER: &'static str = "b,r_hat,r_tilde,r_tilde_reversed,reversed,weight,ma_weight";

    pub fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.b,
            fmt_f64(self.estimate.raw_mean),
            fmt_f64(self.estimate.debiased),
            fmt_f64(self.reversed_estimate),
            u8::from(self.reversed),
            fmt_f64(self.weight),
            fmt_f64(self.ma_weight)
        )
    }
}

#[derive(Debug, Clone)]
pub struct SingleServerOutcome {
    /// Reversed and averaged classifier.
    pub final_classifier: LinearClassifier,
    /// Averaged without reversal.
    pub ma_classifier: LinearClassifier,
    pub weak: Vec<LinearClassifier>,
    pub reversed: Vec<LinearClassifier>,
    pub members: Vec<MemberDiagnostics>,
    pub fallback: bool,
    pub ma_fallback: bool,
    /// Evaluation clients dropped because `N1` is not a multiple of `n1`.
    pub dropped_eval: usize,
    pub accountant: PrivacyAccountant,
}

impl SingleServerOutcome {
    /// Whether any reversed estimate exceeds 1 (the estimator is unclipped).
    pub fn has_estimate_above_one(&self) -> bool {
        self.members.iter().any(|m| m.reversed_estimate > 1.0)
    }

    pub fn write_diagnostics<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{}", MemberDiagnostics::HEADER)?;
        for m in &self.members {
            writeln!(w, "{}", m.csv_fields())?;
        }
        Ok(())
    }
}

/// Trains the weak classifiers on already-perturbed pairs, evaluates each on
/// its own subset, and aggregates. Shared by the single- and multi-server
/// protocols.
pub fn train_and_aggregate<R: Rng + ?Sized>(
    config: &MrmaConfig,
    space: &FeatureSpace,
    pool: &[Client],
    perturbed: &[PerturbedPair],
    eval_subsets: &[Vec<usize>],
    accountant: &mut PrivacyAccountant,
    rng: &mut R,
) -> Result<SingleServerOutcome> {
    if eval_subsets.len() != config.b {
        return Err(invalid(format!(
            "{} evaluation subsets for B = {}",
            eval_subsets.len(),
            config.b
        )));
    }
    // One independent stream per branch so branches do not depend on each
    // other's consumption.
    let branch_seeds: Vec<u64> = (0..config.b).map(|_| rng.gen()).collect();
    let mut members = Vec::with_capacity(config.b);
    for (subset, seed) in eval_subsets.iter().zip(branch_seeds) {
        let mut branch: SimRng = seeded(seed);
        let picks = index::sample(&mut branch, perturbed.len(), config.n0);
        let sample: Vec<PerturbedPair> = picks.iter().map(|i| perturbed[i].clone()).collect();
        let clf = train(&sample, space, &config.train)?;
        let est = evaluate_audited(&clf, pool, subset, config.budget.evaluation, accountant, &mut branch)?;
        members.push((clf, est));
    }
    let ensemble = WeakEnsemble::new(members, config.r0)?;
    let agg = ensemble.reverse_and_average()?;
    let (ma_weights, ma_classifier) = ensemble.average_only()?;

    let diagnostics = ensemble
        .members
        .iter()
        .zip(&agg.reversed)
        .enumerate()
        .map(|(b, ((_, est), rev))| MemberDiagnostics {
            b: b + 1,
            estimate: *est,
            reversed: rev.reversed,
            reversed_estimate: rev.estimate,
            weight: agg.weights.weights[b],
            ma_weight: ma_weights.weights[b],
        })
        .collect();

    Ok(SingleServerOutcome {
        final_classifier: agg.combined,
        ma_classifier,
        weak: ensemble.members.into_iter().map(|(c, _)| c).collect(),
        reversed: agg.reversed.into_iter().map(|r| r.classifier).collect(),
        members: diagnostics,
        fallback: agg.weights.fallback,
        ma_fallback: ma_weights.fallback,
        dropped_eval: 0,
        accountant: accountant.clone(),
    })
}

/// The full single-server protocol: partition, perturbed collection,
/// weak-classifier training, privatized evaluation, reversal, averaging.
pub fn run_single_server<R: Rng + ?Sized>(
    config: &MrmaConfig,
    space: &FeatureSpace,
    clients: &[Client],
    rng: &mut R,
) -> Result<SingleServerOutcome> {
    config.validate()?;
    check_dims(clients, space)?;
    let partition = Partition::draw(clients.len(), config.n_train, config.n_eval, config.n1, config.b, rng)?;
    let mut accountant = PrivacyAccountant::new(clients.len(), config.budget.total);
    let perturbed = collect_perturbed(clients, &partition.train, &config.budget, Some(&mut accountant), rng)?;
    let mut outcome = train_and_aggregate(
        config,
        space,
        clients,
        &perturbed,
        &partition.eval_subsets,
        &mut accountant,
        rng,
    )?;
    outcome.dropped_eval = partition.unused_eval.len();
    Ok(outcome)
}

pub(crate) fn check_dims(clients: &[Client], space: &FeatureSpace) -> Result<()> {
    match clients.iter().find(|c| c.dim() != space.dim()) {
        Some(c) => Err(invalid(format!(
            "client of dimension {} in a {}-dimensional feature space",
            c.dim(),
            space.dim()
        ))),
        None => Ok(()),
    }
}

/// Majority vote over members, ties to +1.
#[derive(Debug, Clone, PartialEq)]
pub struct VotingEnsemble {
    pub members: Vec<LinearClassifier>,
}

impl Predictor for VotingEnsemble {
    fn predict(&self, z: &[f64]) -> Result<Label> {
        let mut tally = 0i64;
        for m in &self.members {
            tally += match m.predict_label(z)? {
                Label::Positive => 1,
                Label::Negative => -1,
            };
        }
        Ok(if tally >= 0 { Label::Positive } else { Label::Negative })
    }
}

/// Classic ensembles trained on perturbed data from all `N = N0 + N1`
/// clients, without privatized evaluation.
#[derive(Debug, Clone)]
pub struct Baselines {
    pub voting: VotingEnsemble,
    pub averaging: LinearClassifier,
    pub all_data: LinearClassifier,
}

/// Every client uploads one perturbed pair; `B` classifiers are trained on
/// disjoint blocks of `⌊N/B⌋` pairs for voting and equal-weight averaging,
/// and one classifier on all `N` pairs.
pub fn run_baselines<R: Rng + ?Sized>(
    config: &MrmaConfig,
    space: &FeatureSpace,
    clients: &[Client],
    rng: &mut R,
) -> Result<Baselines> {
    config.validate()?;
    check_dims(clients, space)?;
    let n = config.total_clients();
    if clients.len() < n {
        return Err(invalid(format!("{} clients cannot cover N = {n}", clients.len())));
    }
    let order = index::sample(rng, clients.len(), n).into_vec();
    let perturbed = collect_perturbed(clients, &order, &config.budget, None, rng)?;
    let block = n / config.b;
    if block < 2 {
        return Err(invalid(format!("N/B = {block} is too small to train on")));
    }
    let members = perturbed
        .chunks_exact(block)
        .take(config.b)
        .map(|chunk| train(chunk, space, &config.train))
        .collect::<Result<Vec<_>>>()?;
    let equal = vec![1.0 / config.b as f64; config.b];
    let averaging = combine(&members, &equal)?;
    let all_data = train(&perturbed, space, &config.train)?;
    Ok(Baselines {
        voting: VotingEnsemble { members },
        averaging,
        all_data,
    })
}

impl fmt::Display for Reversed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (r*={:.4}{})",
            self.classifier.to_csv_line(),
            self.estimate,
            if self.reversed { ", reversed" } else { "" }
        )
    }
}
