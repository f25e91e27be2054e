//! Repeated multi-server rounds over heterogeneous server groups.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::classifiers::FeatureSpace;
use crate::error::{invalid, Result};
use crate::harness::experiment::{mean_stderr, misclassification_rate};
use crate::harness::synthetic::{Generator, SlopeSpec};
use crate::mechanisms::Epsilon;
use crate::mrma::{check_cutoff, MrmaConfig};
use crate::multi_server::{run_round, PeerEvaluation, ServerSpec};
use crate::output::{fmt_f64, RunMeta};
use crate::rng::child;

const DATA_STREAM: u64 = 11;
const PROTOCOL_STREAM: u64 = 12;

/// Servers sharing a slope distribution. Each server draws its own slope.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerGroup {
    pub slope: SlopeSpec,
    pub servers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiExperimentConfig {
    pub epsilons: Vec<Epsilon>,
    pub trials: usize,
    pub test_size: usize,
    pub groups: Vec<ServerGroup>,
    /// Per-server protocol sizes; every server holds `N0 + N1` clients.
    pub local: MrmaConfig,
    pub r0_star: f64,
    pub seed: u64,
    pub jobs: usize,
}

impl MultiExperimentConfig {
    pub fn servers(&self) -> usize {
        self.groups.iter().map(|g| g.servers).sum()
    }

    /// Group number (from 1) of each server.
    pub fn group_of(&self) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(g, grp)| std::iter::repeat(g + 1).take(grp.servers))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(invalid("the epsilon grid is empty"));
        }
        if self.trials == 0 || self.test_size == 0 || self.jobs == 0 {
            return Err(invalid("trials, test size and jobs must be at least 1"));
        }
        if self.servers() < 2 {
            return Err(invalid("a multi-server round needs at least two servers"));
        }
        for g in &self.groups {
            g.slope.validate()?;
        }
        check_cutoff(self.r0_star)?;
        self.local.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiMethod {
    /// The server's own classifier after the local protocol.
    Local,
    /// After reweighting every server's classifier.
    Multi,
}

impl MultiMethod {
    pub fn name(self) -> &'static str {
        match self {
            MultiMethod::Local => "local",
            MultiMethod::Multi => "multi",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiTrialResult {
    pub epsilon: Epsilon,
    pub trial: usize,
    pub server: usize,
    pub group: usize,
    pub method: MultiMethod,
    pub misclassification: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeerRow {
    pub epsilon: Epsilon,
    pub trial: usize,
    pub peer: PeerEvaluation,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MultiOutput {
    pub results: Vec<MultiTrialResult>,
    pub peers: Vec<PeerRow>,
}

pub fn run_multi_trial(
    generator: &Generator,
    config: &MultiExperimentConfig,
    epsilon: Epsilon,
    trial: usize,
) -> Result<MultiOutput> {
    let space = FeatureSpace::Basis(generator.basis().clone());
    let groups = config.group_of();
    let slopes: Vec<&SlopeSpec> = config
        .groups
        .iter()
        .flat_map(|g| std::iter::repeat(&g.slope).take(g.servers))
        .collect();
    let mut servers = Vec::with_capacity(slopes.len());
    let mut tests = Vec::with_capacity(slopes.len());
    for (k, spec) in slopes.iter().enumerate() {
        let mut rng = child(config.seed, &[DATA_STREAM, trial as u64, k as u64]);
        let slope = spec.realize(generator.grid(), &mut rng)?;
        let pop = generator.population(&slope)?;
        servers.push(ServerSpec {
            id: k,
            clients: pop.draw_clients(config.local.total_clients(), &mut rng),
            config: config.local.clone(),
            r0_star: config.r0_star,
        });
        tests.push(pop.draw_clients(config.test_size, &mut rng));
    }
    let mut rng = child(
        config.seed,
        &[PROTOCOL_STREAM, epsilon.value().to_bits(), trial as u64],
    );
    let round = run_round(&servers, epsilon, &space, &mut rng)?;
    let mut out = MultiOutput::default();
    for (s, test) in round.servers.iter().zip(&tests) {
        for (method, clf) in [
            (MultiMethod::Local, &s.local.final_classifier),
            (MultiMethod::Multi, &s.final_classifier),
        ] {
            out.results.push(MultiTrialResult {
                epsilon,
                trial,
                server: s.id,
                group: groups[s.id],
                method,
                misclassification: misclassification_rate(clf, test)?,
            });
        }
        out.peers.extend(s.peers.iter().map(|p| PeerRow {
            epsilon,
            trial,
            peer: p.clone(),
        }));
    }
    Ok(out)
}

pub fn run_multi_experiment(generator: &Generator, config: &MultiExperimentConfig) -> Result<MultiOutput> {
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
            .map(|&(e, t)| run_multi_trial(generator, config, e, t))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut out = MultiOutput::default();
    for p in parts {
        out.results.extend(p.results);
        out.peers.extend(p.peers);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiSummaryRow {
    pub epsilon: Epsilon,
    pub group: usize,
    pub method: MultiMethod,
    pub mean: f64,
    pub stderr: f64,
    /// Number of (trial, server) values averaged.
    pub count: usize,
}

/// Mean over trials and over the servers of each group.
pub fn summarize_multi(results: &[MultiTrialResult]) -> Vec<MultiSummaryRow> {
    let mut keys: Vec<(Epsilon, usize, MultiMethod)> = Vec::new();
    for r in results {
        let key = (r.epsilon, r.group, r.method);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.sort_by_key(|&(_, g, m)| (g, m == MultiMethod::Multi));
    let mut eps_order: Vec<Epsilon> = Vec::new();
    for r in results {
        if !eps_order.contains(&r.epsilon) {
            eps_order.push(r.epsilon);
        }
    }
    keys.sort_by_key(|k| eps_order.iter().position(|e| *e == k.0));
    keys.into_iter()
        .map(|(epsilon, group, method)| {
            let xs: Vec<f64> = results
                .iter()
                .filter(|r| r.epsilon == epsilon && r.group == group && r.method == method)
                .map(|r| r.misclassification)
                .collect();
            let (mean, stderr) = mean_stderr(&xs);
            MultiSummaryRow {
                epsilon,
                group,
                method,
                mean,
                stderr,
                count: xs.len(),
            }
        })
        .collect()
}

pub fn write_multi_results_csv<W: Write>(w: &mut W, meta: &RunMeta, results: &[MultiTrialResult]) -> io::Result<()> {
    meta.write_header(w)?;
    writeln!(w, "epsilon,trial,server,group,method,misclassification")?;
    for r in results {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.epsilon,
            r.trial,
            r.server,
            r.group,
            r.method.name(),
            fmt_f64(r.misclassification)
        )?;
    }
    Ok(())
}

pub fn write_multi_summary_csv<W: Write>(w: &mut W, meta: &RunMeta, rows: &[MultiSummaryRow]) -> io::Result<()> {
    meta.write_header(w)?;
    writeln!(w, "epsilon,group,method,mean,stderr,count")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.epsilon,
            r.group,
            r.method.name(),
            fmt_f64(r.mean),
            fmt_f64(r.stderr),
            r.count
        )?;
    }
    Ok(())
}

pub fn write_peer_csv<W: Write>(w: &mut W, meta: &RunMeta, rows: &[PeerRow]) -> io::Result<()> {
    meta.write_header(w)?;
    writeln!(w, "epsilon,trial,{}", PeerEvaluation::HEADER)?;
    for r in rows {
        writeln!(w, "{},{},{}", r.epsilon, r.trial, r.peer.csv_fields())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::TrainConfig;
    use crate::encoding::{BasisSpec, RescaleKind};
    use crate::mechanisms::PrivacyBudget;

    fn config() -> MultiExperimentConfig {
        MultiExperimentConfig {
            epsilons: vec![Epsilon::new(2.0).unwrap()],
            trials: 2,
            test_size: 100,
            groups: vec![
                ServerGroup {
                    slope: SlopeSpec::uniform_series(-8.0, -2.0),
                    servers: 1,
                },
                ServerGroup {
                    slope: SlopeSpec::gaussian_process(15.0),
                    servers: 1,
                },
                ServerGroup {
                    slope: SlopeSpec::uniform_series(2.0, 8.0),
                    servers: 1,
                },
            ],
            local: MrmaConfig {
                n_train: 200,
                n_eval: 300,
                n0: 40,
                n1: 30,
                b: 6,
                budget: PrivacyBudget::unlimited(),
                r0: 0.8,
                train: TrainConfig::default(),
            },
            r0_star: 0.8,
            seed: 3,
            jobs: 2,
        }
    }

    #[test]
    fn shape_and_determinism() {
        let g = Generator::new(&BasisSpec::cubic_bspline(4).unwrap(), RescaleKind::Tanh).unwrap();
        let cfg = config();
        let a = run_multi_experiment(&g, &cfg).unwrap();
        assert_eq!(a.results.len(), 2 * 3 * 2);
        assert_eq!(a.peers.len(), 2 * 3 * 3);
        assert_eq!(cfg.group_of(), vec![1, 2, 3]);
        let mut single = cfg.clone();
        single.jobs = 1;
        assert_eq!(run_multi_experiment(&g, &single).unwrap(), a);
        let summary = summarize_multi(&a.results);
        assert_eq!(summary.len(), 6);
        assert_eq!(summary[0].group, 1);
        assert_eq!(summary[0].method, MultiMethod::Local);
        assert_eq!(summary[1].method, MultiMethod::Multi);
    }

    #[test]
    fn rejects_single_server() {
        let mut cfg = config();
        cfg.groups.truncate(1);
        assert!(cfg.validate().is_err());
    }
}
