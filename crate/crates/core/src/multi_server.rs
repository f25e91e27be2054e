//! Several servers, each with its own client population, run the local
//! protocol and then refine their classifiers by evaluating every peer's
//! classifier on a reserved group of their own clients.

use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;

use crate::accounting::PrivacyAccountant;
use crate::classifiers::{FeatureSpace, LinearClassifier};
use crate::data::Client;
use crate::error::{invalid, Result};
use crate::evaluation::{evaluate_audited, AccuracyEstimate};
use crate::mechanisms::{split_budget, Epsilon};
use crate::mrma::{
    check_cutoff, check_dims, collect_perturbed, train_and_aggregate, MrmaConfig, Partition, SingleServerOutcome,
    WeakEnsemble,
};
use crate::output::fmt_f64;
use crate::rng::{seeded, SimRng};

#[derive(Debug, Clone)]
pub struct ServerSpec {
    pub id: usize,
    pub clients: Vec<Client>,
    /// Local protocol settings. The budget is overridden by the round.
    pub config: MrmaConfig,
    /// Cutoff for weighting peers' classifiers.
    pub r0_star: f64,
}

/// One server's verdict on one peer classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct PeerEvaluation {
    pub server: usize,
    pub peer: usize,
    pub estimate: AccuracyEstimate,
    pub reversed: bool,
    pub reversed_estimate: f64,
    pub weight: f64,
}

impl PeerEvaluation {
    pub const HEADER: &'static str = "server,peer,r_hat,r_tilde,r_tilde_reversed,reversed,weight";

    pub fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.server,
            self.peer,
            fmt_f64(self.estimate.raw_mean),
            fmt_f64(self.estimate.debiased),
            fmt_f64(self.reversed_estimate),
            u8::from(self.reversed),
            fmt_f64(self.weight)
        )
    }
}

#[derive(Debug, Clone)]
pub struct ServerOutcome {
    pub id: usize,
    /// Result of the local protocol.
    pub local: SingleServerOutcome,
    /// Classifier after reweighting all peers.
    pub final_classifier: LinearClassifier,
    pub peers: Vec<PeerEvaluation>,
    pub fallback: bool,
    /// Covers both phases.
    pub accountant: PrivacyAccountant,
}

#[derive(Debug, Clone)]
pub struct MultiServerOutcome {
    pub servers: Vec<ServerOutcome>,
    /// Serialized classifiers as exchanged between servers.
    pub exchanged: Vec<String>,
}

impl MultiServerOutcome {
    pub fn write_diagnostics<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{}", PeerEvaluation::HEADER)?;
        for s in &self.servers {
            for p in &s.peers {
                writeln!(w, "{}", p.csv_fields())?;
            }
        }
        Ok(())
    }
}

struct LocalState {
    partition: Partition,
    outcome: SingleServerOutcome,
    accountant: PrivacyAccountant,
    rng: SimRng,
}

/// Runs both phases. Phase one spends `ε/2` on local evaluation, phase two
/// the other `ε/2` on the reserved groups, so no client exceeds `ε`.
pub fn run_round<R: Rng + ?Sized>(
    servers: &[ServerSpec],
    epsilon: Epsilon,
    space: &FeatureSpace,
    rng: &mut R,
) -> Result<MultiServerOutcome> {
    if servers.is_empty() {
        return Err(invalid("a round needs at least one server"));
    }
    let k = servers.len();
    let half = epsilon.scaled(0.5)?;
    for s in servers {
        s.config.validate()?;
        check_cutoff(s.r0_star)?;
        check_dims(&s.clients, space)?;
        let c = &s.config;
        if (c.b + k) * c.n1 > c.n_eval {
            return Err(invalid(format!(
                "server {}: (B + K)·n1 = ({} + {k})·{} exceeds N1 = {}",
                s.id, c.b, c.n1, c.n_eval
            )));
        }
    }
    let seeds: Vec<u64> = (0..k).map(|_| rng.gen()).collect();

    let locals = servers
        .par_iter()
        .zip(seeds)
        .map(|(s, seed)| run_local(s, k, epsilon, half, space, seed))
        .collect::<Result<Vec<_>>>()?;

    let exchanged: Vec<String> = locals
        .iter()
        .map(|l| l.outcome.final_classifier.to_csv_line())
        .collect();
    let received = exchanged
        .iter()
        .map(|line| LinearClassifier::from_csv_line(line))
        .collect::<Result<Vec<_>>>()?;

    let outcomes = servers
        .par_iter()
        .zip(locals)
        .map(|(s, local)| refine(s, local, &received, half))
        .collect::<Result<Vec<_>>>()?;

    Ok(MultiServerOutcome {
        servers: outcomes,
        exchanged,
    })
}

fn run_local(
    s: &ServerSpec,
    peers: usize,
    epsilon: Epsilon,
    half: Epsilon,
    space: &FeatureSpace,
    seed: u64,
) -> Result<LocalState> {
    let mut rng = seeded(seed);
    let mut config = s.config.clone();
    config.budget = split_budget(epsilon, space.dim())?.with_evaluation(half);
    let partition = Partition::draw(
        s.clients.len(),
        config.n_train,
        config.n_eval,
        config.n1,
        config.b + peers,
        &mut rng,
    )?;
    let mut accountant = PrivacyAccountant::new(s.clients.len(), epsilon);
    let perturbed = collect_perturbed(&s.clients, &partition.train, &config.budget, Some(&mut accountant), &mut rng)?;
    let outcome = train_and_aggregate(
        &config,
        space,
        &s.clients,
        &perturbed,
        &partition.eval_subsets[..config.b],
        &mut accountant,
        &mut rng,
    )?;
    Ok(LocalState {
        partition,
        outcome,
        accountant,
        rng,
    })
}

fn refine(s: &ServerSpec, local: LocalState, received: &[LinearClassifier], half: Epsilon) -> Result<ServerOutcome> {
    let LocalState {
        partition,
        mut outcome,
        mut accountant,
        mut rng,
    } = local;
    let reserved = &partition.eval_subsets[s.config.b..s.config.b + received.len()];
    let members = received
        .iter()
        .zip(reserved)
        .map(|(clf, group)| {
            let est = evaluate_audited(clf, &s.clients, group, half, &mut accountant, &mut rng)?;
            Ok((clf.clone(), est))
        })
        .collect::<Result<Vec<_>>>()?;
    let ensemble = WeakEnsemble::new(members, s.r0_star)?;
    let agg = ensemble.reverse_and_average()?;
    let peers = ensemble
        .members
        .iter()
        .zip(&agg.reversed)
        .enumerate()
        .map(|(j, ((_, est), rev))| PeerEvaluation {
            server: s.id,
            peer: j,
            estimate: *est,
            reversed: rev.reversed,
            reversed_estimate: rev.estimate,
            weight: agg.weights.weights[j],
        })
        .collect();
    outcome.dropped_eval = partition.unused_eval.len();
    outcome.accountant = accountant.clone();
    Ok(ServerOutcome {
        id: s.id,
        local: outcome,
        final_classifier: agg.combined,
        peers,
        fallback: agg.weights.fallback,
        accountant,
    })
}
