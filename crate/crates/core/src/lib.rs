//! Private binary classification from locally perturbed data with model
//! reversal and model averaging.
//!
//! Clients perturb features with the Laplace mechanism and labels with
//! randomized response. The server trains many weak classifiers on random
//! subsamples, asks disjoint groups of clients for privatized accuracy
//! feedback, flips the classifiers that do worse than chance, and averages
//! the rest with weights proportional to their estimated utility.

pub mod accounting;
pub mod classifiers;
pub mod data;
pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod harness;
pub mod mechanisms;
pub mod mrma;
pub mod multi_server;
pub mod oracles;
pub mod output;
pub mod rng;

pub use accounting::PrivacyAccountant;
pub use classifiers::{combine, train, FeatureSpace, LinearClassifier, Method, Predictor, TrainConfig};
pub use data::{Client, Label, LabeledPoint, PerturbedPair};
pub use encoding::{
    project, reconstruct, rescale, BasisKind, BasisSpec, CoefficientVector, FunctionalSample, Projector,
    RescaleKind,
};
pub use error::{Error, Result};
pub use evaluation::{estimate_accuracy, evaluate_classifier, AccuracyEstimate};
pub use mechanisms::{
    perturb_features, randomized_response, rr_keep_probability, split_budget, Epsilon, LaplaceParams,
    PrivacyBudget,
};
pub use mrma::{
    averaging_weights, model_reversal, run_baselines, run_single_server, AveragingWeights, MrmaConfig,
    SingleServerOutcome, VotingEnsemble, WeakEnsemble,
};
pub use multi_server::{run_round, MultiServerOutcome, ServerSpec};
pub use oracles::{
    mc_total_variation, reversal_success_probability, utility_g, weight_omega, TvEstimate, UtilityPoint,
};
pub use output::{fmt_f64, RunMeta};
