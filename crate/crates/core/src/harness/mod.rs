//! Simulation harness: synthetic functional data, experiment drivers,
//! dataset files, presets and result files.

pub mod dataset;
pub mod experiment;
pub mod multi;
pub mod presets;
pub mod synthetic;

pub use dataset::{load_dataset_csv, write_dataset_csv, Dataset};
pub use experiment::{
    misclassification_rate, run_experiment, run_trial, summarize, DatasetSource, ExperimentConfig, ExperimentOutput,
    FixedSource, MethodKind, SummaryRow, SyntheticSource, TrialData, TrialResult, TrialSource,
};
pub use multi::{run_multi_experiment, MultiExperimentConfig, MultiMethod, MultiOutput, ServerGroup};
pub use presets::Preset;
pub use synthetic::{bayes_accuracy, generate_label, Generator, Slope, SlopeKind, SlopeSpec};
