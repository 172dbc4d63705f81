//! Network-corrected treatment effects for one-to-one communication
//! experiments.
//!
//! Messages between members of a Bernoulli-randomized experiment are split
//! into four edge classes by the treatment status of sender and recipient.
//! Properly normalized, those classes identify the total effect of rolling
//! a feature out to everyone, even though treated members also change the
//! behavior of the control members they message. Significance comes from
//! network-consistent permutation tests, and a generative simulator with
//! closed-form expectations serves as ground truth.

pub mod analysis;
pub mod contrasts;
pub mod error;
pub mod estimators;
pub mod hashing;
pub mod ingest;
pub mod permutation;
pub mod report;
pub mod simulator;
pub mod statistic;

pub use analysis::{analyze_edges, calibrate, run_analysis, CalibrationConfig, CalibrationReport};
pub use contrasts::{
    class_totals, normalized_contrasts, ClassTotals, GroupSizes, Normalization, NormalizedContrasts,
};
pub use error::{Error, Result};
pub use estimators::{estimate_effects, EffectEstimates, SendReceiveTotals};
pub use ingest::{parse_edge_file, EdgeRecord, ExperimentConfig, ParseOptions};
pub use permutation::{
    null_distribution, PermutationEngine, PermutationMode, PermutationPlan, PermutationResult,
};
pub use report::{render_report, Format, Report};
pub use simulator::{simulate, SimulationParams, SimulationTruth};
pub use statistic::Statistic;
