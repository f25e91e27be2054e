//! Named parameter sets for the simulation studies.

use std::fmt;
use std::str::FromStr;

use crate::classifiers::TrainConfig;
use crate::error::{invalid, Error, Result};
use crate::harness::multi::ServerGroup;
use crate::harness::synthetic::SlopeSpec;
use crate::mechanisms::PrivacyBudget;
use crate::mrma::MrmaConfig;

pub const DEFAULT_EPSILONS: [f64; 8] = [0.1, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// One server, `N = 3000` split 500/2500, `n0 = n1 = 50`, `B = 50`.
    Single,
    /// 25 servers in three slope groups of 10, 5 and 10.
    Multi,
    /// Six servers, two per group, 1500 clients each.
    MultiSmall,
    /// Sample-size variants 1 to 8.
    Case(u8),
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Single => f.write_str("single"),
            Preset::Multi => f.write_str("multi"),
            Preset::MultiSmall => f.write_str("multi-small"),
            Preset::Case(k) => write!(f, "case{k}"),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Preset::Single),
            "multi" => Ok(Preset::Multi),
            "multi-small" => Ok(Preset::MultiSmall),
            _ => match s.strip_prefix("case").and_then(|k| k.parse::<u8>().ok()) {
                Some(k @ 1..=8) => Ok(Preset::Case(k)),
                _ => Err(invalid(format!(
                    "unknown preset {s:?}; expected single, multi, multi-small or case1..case8"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetValues {
    pub mrma: MrmaConfig,
    pub epsilons: Vec<f64>,
    pub trials: usize,
    pub test_size: usize,
    /// Empty for single-server presets.
    pub groups: Vec<ServerGroup>,
    pub r0_star: f64,
}

fn sizes(n_train: usize, n_eval: usize, n0: usize, n1: usize, b: usize, r0: f64) -> MrmaConfig {
    MrmaConfig {
        n_train,
        n_eval,
        n0,
        n1,
        b,
        budget: PrivacyBudget::unlimited(),
        r0,
        train: TrainConfig::default(),
    }
}

fn three_groups(per_side: usize, middle: usize) -> Vec<ServerGroup> {
    vec![
        ServerGroup {
            slope: SlopeSpec::uniform_series(-8.0, -2.0),
            servers: per_side,
        },
        ServerGroup {
            slope: SlopeSpec::gaussian_process(15.0),
            servers: middle,
        },
        ServerGroup {
            slope: SlopeSpec::uniform_series(2.0, 8.0),
            servers: per_side,
        },
    ]
}

impl Preset {
    pub fn is_multi(self) -> bool {
        matches!(self, Preset::Multi | Preset::MultiSmall)
    }

    pub fn values(self) -> PresetValues {
        let single = |mrma| PresetValues {
            mrma,
            epsilons: DEFAULT_EPSILONS.to_vec(),
            trials: 500,
            test_size: 500,
            groups: Vec::new(),
            r0_star: 0.8,
        };
        match self {
            Preset::Single => single(sizes(500, 2500, 50, 50, 50, 0.8)),
            // n1 is chosen so that the B + K evaluation groups fit in N1.
            Preset::Multi => PresetValues {
                mrma: sizes(500, 2500, 50, 33, 50, 0.8),
                epsilons: DEFAULT_EPSILONS.to_vec(),
                trials: 100,
                test_size: 500,
                groups: three_groups(10, 5),
                r0_star: 0.8,
            },
            Preset::MultiSmall => PresetValues {
                mrma: sizes(500, 1000, 50, 50, 14, 0.8),
                epsilons: vec![2.0],
                trials: 50,
                test_size: 500,
                groups: three_groups(2, 2),
                r0_star: 0.8,
            },
            Preset::Case(k) => {
                let (n_train, n_eval, n0, n1, b) = match k {
                    1 => (500, 2500, 100, 100, 25),
                    2 => (500, 5000, 100, 100, 50),
                    3 => (500, 5000, 50, 100, 50),
                    4 => (500, 2500, 100, 50, 50),
                    5 => (500, 2500, 50, 50, 50),
                    6 => (2500, 2500, 250, 50, 50),
                    7 => (5000, 2500, 500, 50, 50),
                    _ => (2500, 5000, 250, 100, 50),
                };
                single(sizes(n_train, n_eval, n0, n1, b, 0.6))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        let all = [Preset::Single, Preset::Multi, Preset::MultiSmall]
            .into_iter()
            .chain((1..=8).map(Preset::Case));
        for p in all {
            assert_eq!(p.to_string().parse::<Preset>().unwrap(), p);
        }
        assert!("case9".parse::<Preset>().is_err());
        assert!("case0".parse::<Preset>().is_err());
    }

    #[test]
    fn presets_are_valid() {
        for p in [Preset::Single, Preset::Multi, Preset::MultiSmall]
            .into_iter()
            .chain((1..=8).map(Preset::Case))
        {
            let v = p.values();
            v.mrma.validate().unwrap();
            let k: usize = v.groups.iter().map(|g| g.servers).sum();
            assert!((v.mrma.b + k) * v.mrma.n1 <= v.mrma.n_eval, "{p}");
        }
        assert_eq!(Preset::Single.values().mrma.total_clients(), 3000);
        assert_eq!(Preset::MultiSmall.values().mrma.total_clients(), 1500);
        assert_eq!(Preset::Case(8).values().mrma.total_clients(), 7500);
    }
}
