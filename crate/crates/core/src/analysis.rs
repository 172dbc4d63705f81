//! End-to-end analysis of an edge file and the placebo calibration suite.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contrasts::{class_totals, normalized_contrasts, Normalization};
use crate::error::Result;
use crate::estimators::estimate_effects;
use crate::ingest::{
    parse_edge_file, resolve_group_sizes, ExperimentConfig, ParseOptions, ParsedEdges,
};
use crate::permutation::{PermutationEngine, PermutationMode, PermutationPlan};
use crate::report::{
    commentary, warnings, AlphaAssessment, Report, Significance, ToolInfo, SCHEMA_VERSION,
};
use crate::simulator::{simulate, SimulationParams};
use crate::statistic::Statistic;

/// Statistics tested under full relabeling in every analysis.
pub const REPORTED_STATISTICS: [Statistic; 15] = [
    Statistic::CorrectedLift,
    Statistic::CorrectedEffect,
    Statistic::Alpha,
    Statistic::InstantLift,
    Statistic::SendLift,
    Statistic::ReceiveLift,
    Statistic::ApproxLift,
    Statistic::ApproxAlpha,
    Statistic::PlaceboSpread,
    Statistic::TtExcess,
    Statistic::TcExcess,
    Statistic::ResponseContrast,
    Statistic::AffinityContrast,
    Statistic::PerfectAffinityGap,
    Statistic::InteractionContrast,
];

/// Statistics repeated under a one-sided relabeling when one is configured.
pub const CONTRAST_STATISTICS: [Statistic; 7] = [
    Statistic::PlaceboSpread,
    Statistic::TtExcess,
    Statistic::TcExcess,
    Statistic::ResponseContrast,
    Statistic::AffinityContrast,
    Statistic::PerfectAffinityGap,
    Statistic::InteractionContrast,
];

pub fn run_analysis(
    config: &ExperimentConfig,
    path: impl AsRef<Path>,
    options: ParseOptions,
) -> Result<Report> {
    config.validate()?;
    analyze_edges(config, parse_edge_file(path, options)?)
}

/// Analysis of already parsed edges.
///
/// Every reported statistic is tested under full relabeling. The receive
/// lift is also tested by relabeling recipients only, which isolates the
/// receive-side hypothesis, and the edge-class contrasts are repeated under
/// the configured mode when it is one-sided.
pub fn analyze_edges(config: &ExperimentConfig, parsed: ParsedEdges) -> Result<Report> {
    config.validate()?;
    let ParsedEdges { edges, summary } = parsed;
    let resolved = resolve_group_sizes(&edges, config)?;
    let totals = class_totals(&edges, resolved.sizes)?;
    let contrasts = normalized_contrasts(&totals, config.p, config.normalization)?;
    let estimates = estimate_effects(&totals, config.p, config.normalization)?;

    let mut passes: Vec<(PermutationMode, Vec<Statistic>)> =
        vec![(PermutationMode::Full, REPORTED_STATISTICS.to_vec())];
    match config.permutation_mode {
        PermutationMode::Full => {
            passes.push((PermutationMode::Recipient, vec![Statistic::ReceiveLift]))
        }
        PermutationMode::Recipient => {
            let mut stats = CONTRAST_STATISTICS.to_vec();
            stats.push(Statistic::ReceiveLift);
            passes.push((PermutationMode::Recipient, stats));
        }
        PermutationMode::Sender => {
            let mut stats = CONTRAST_STATISTICS.to_vec();
            stats.push(Statistic::SendLift);
            passes.push((PermutationMode::Sender, stats));
            passes.push((PermutationMode::Recipient, vec![Statistic::ReceiveLift]));
        }
    }

    let mut significance = Vec::new();
    for (mode, stats) in passes {
        let plan = PermutationPlan {
            mode,
            iterations: config.iterations,
            seed: config.seed,
            p: config.p,
            ci_level: config.ci_level,
        };
        let engine = PermutationEngine::new(&edges, resolved.sizes, plan)?;
        let results = engine.run(&stats, config.normalization);
        for (stat, result) in stats.iter().zip(&results) {
            significance.push(Significance::from_result(
                *stat,
                mode,
                config.iterations,
                config.ci_level,
                result,
            ));
        }
    }

    let denominator = significance
        .iter()
        .find(|s| s.statistic == Statistic::TcExcess && s.mode == PermutationMode::Full);
    let alpha_valid = estimates.alpha_hat.is_some()
        && denominator.is_some_and(|s| s.reliable && !s.ci_covers(0.0));
    let alpha = AlphaAssessment {
        value: estimates.alpha_hat,
        valid: alpha_valid,
        conversation_type: estimates.alpha_hat.map(|a| config.alpha_bands.classify(a)),
    };

    let mut report = Report {
        schema_version: SCHEMA_VERSION,
        tool: ToolInfo::default(),
        config: config.clone(),
        ingest: summary,
        group_sizes: resolved,
        class_totals: totals,
        contrasts,
        estimates,
        alpha,
        significance,
        commentary: Vec::new(),
        warnings: Vec::new(),
    };
    report.commentary = commentary(&report);
    report.warnings = warnings(&report);
    Ok(report)
}

/// Settings for the placebo false-positive suite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub replicates: u32,
    pub n: u32,
    pub p: f64,
    pub lambda: f64,
    pub iterations: u32,
    /// Nominal two-sided test level.
    pub level: f64,
    pub seed: u64,
    pub normalization: Normalization,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            replicates: 200,
            n: 2000,
            p: 0.5,
            lambda: 0.02,
            iterations: 1000,
            level: 0.05,
            seed: 0,
            normalization: Normalization::Realized,
        }
    }
}

/// Per-statistic outcome of the placebo suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub statistic: Statistic,
    pub rejections: u32,
    pub tested: u32,
    pub false_positive_rate: f64,
    pub p_values: Vec<f64>,
    /// Mid-rank of the observed value among its null values, one per
    /// replicate; uniform on `[0, 1]` under exchangeability.
    pub ranks: Vec<f64>,
    /// Kolmogorov-Smirnov distance between `ranks` and the uniform law.
    pub rank_ks_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub config: CalibrationConfig,
    pub outcomes: Vec<CalibrationOutcome>,
}

pub const CALIBRATION_STATISTICS: [Statistic; 2] =
    [Statistic::CorrectedLift, Statistic::PlaceboSpread];

/// Simulates placebo experiments (no effect, no replies) and records how
/// often a full-relabeling test rejects at the nominal level.
pub fn calibrate(config: &CalibrationConfig) -> Result<CalibrationReport> {
    let mut p_values = vec![Vec::new(); CALIBRATION_STATISTICS.len()];
    let mut ranks = vec![Vec::new(); CALIBRATION_STATISTICS.len()];
    for r in 0..u64::from(config.replicates) {
        let params = SimulationParams {
            n: config.n,
            p: config.p,
            lambda: config.lambda,
            q1: 0.0,
            q2: 0.0,
            alpha: 0.0,
            seed: config.seed.wrapping_add(r),
            ..SimulationParams::default()
        };
        let (edges, truth) = simulate(&params)?;
        let plan = PermutationPlan {
            mode: PermutationMode::Full,
            iterations: config.iterations,
            seed: config
                .seed
                .wrapping_add(r)
                .wrapping_mul(0x9e37_79b9_7f4a_7c15),
            p: config.p,
            ci_level: 1.0 - config.level,
        };
        let engine = PermutationEngine::new(&edges, truth.sizes(), plan)?;
        for (k, result) in engine
            .run(&CALIBRATION_STATISTICS, config.normalization)
            .into_iter()
            .enumerate()
        {
            // Undefined observations are skipped rather than counted as
            // acceptances.
            let Ok(result) = result else { continue };
            p_values[k].push(result.p_value);
            ranks[k].push(mid_rank(result.observed, &result.null_values));
        }
    }
    let outcomes = CALIBRATION_STATISTICS
        .iter()
        .zip(p_values.into_iter().zip(ranks))
        .map(|(stat, (p, ranks))| {
            let rejections = p.iter().filter(|v| **v < config.level).count() as u32;
            let tested = p.len() as u32;
            CalibrationOutcome {
                statistic: *stat,
                rejections,
                tested,
                false_positive_rate: if tested == 0 {
                    f64::NAN
                } else {
                    f64::from(rejections) / f64::from(tested)
                },
                rank_ks_distance: ks_uniform(&ranks),
                p_values: p,
                ranks,
            }
        })
        .collect();
    Ok(CalibrationReport {
        config: *config,
        outcomes,
    })
}

fn mid_rank(observed: f64, nulls: &[f64]) -> f64 {
    let (mut below, mut ties, mut n) = (0usize, 0usize, 0usize);
    for v in nulls.iter().filter(|v| v.is_finite()) {
        n += 1;
        if *v < observed {
            below += 1;
        } else if *v == observed {
            ties += 1;
        }
    }
    (below as f64 + 0.5 * ties as f64 + 0.5) / (n as f64 + 1.0)
}

/// Kolmogorov-Smirnov distance between a sample and Uniform(0, 1).
pub fn ks_uniform(sample: &[f64]) -> f64 {
    if sample.is_empty() {
        return f64::NAN;
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let x = x.clamp(0.0, 1.0);
            (x - i as f64 / n).max((i + 1) as f64 / n - x)
        })
        .fold(0.0, f64::max)
}
