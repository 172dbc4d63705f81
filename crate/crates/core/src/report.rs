//! Analysis reports: JSON for machines, sectioned text for people.
//!
//! Commentary and warnings are produced by fixed threshold rules over the
//! computed values; no free text is generated at run time.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::contrasts::{ClassTotals, Normalization, NormalizedContrasts};
use crate::error::{Error, Result};
use crate::estimators::{ConversationType, EffectEstimates};
use crate::hashing::HASH_NAME;
use crate::ingest::{ExperimentConfig, IngestSummary, ResolvedSizes};
use crate::permutation::{PermutationMode, PermutationResult};
use crate::statistic::Statistic;

pub const SCHEMA_VERSION: u32 = 1;

/// Below this many days of data a warning is attached.
pub const MIN_WINDOW_DAYS: u32 = 7;

/// Treated shares outside this range count as very uneven splits.
pub const BALANCED_SHARE: (f64, f64) = (0.25, 0.75);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
    /// Hash function behind every permutation label.
    pub hash: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        ToolInfo {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            hash: HASH_NAME.into(),
        }
    }
}

/// Permutation summary of one statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub statistic: Statistic,
    pub mode: PermutationMode,
    pub iterations: u32,
    pub observed: Option<f64>,
    pub p_value: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub ci_level: f64,
    pub null_mean: Option<f64>,
    pub null_sd: Option<f64>,
    /// Share of iterations on which the statistic was undefined.
    pub undefined_rate: f64,
    /// False when the statistic was undefined on more than 10% of
    /// iterations, or on the observed data.
    pub reliable: bool,
}

impl Significance {
    pub fn from_result(
        statistic: Statistic,
        mode: PermutationMode,
        iterations: u32,
        ci_level: f64,
        result: &Result<PermutationResult>,
    ) -> Self {
        match result {
            Ok(r) => Significance {
                statistic,
                mode,
                iterations,
                observed: Some(r.observed),
                p_value: Some(r.p_value),
                ci_low: Some(r.ci_low),
                ci_high: Some(r.ci_high),
                ci_level,
                null_mean: Some(r.null_mean),
                null_sd: Some(r.null_sd),
                undefined_rate: r.undefined_rate(),
                reliable: r.is_reliable(),
            },
            Err(e) => Significance {
                statistic,
                mode,
                iterations,
                observed: None,
                p_value: None,
                ci_low: None,
                ci_high: None,
                ci_level,
                null_mean: None,
                null_sd: None,
                undefined_rate: match e {
                    Error::DegenerateNull { .. } => 1.0,
                    _ => 0.0,
                },
                reliable: false,
            },
        }
    }

    /// Reliable and with permutation p-value below `1 - ci_level`.
    pub fn is_significant(&self) -> bool {
        self.reliable && self.p_value.is_some_and(|p| p < 1.0 - self.ci_level)
    }

    pub fn is_significant_positive(&self) -> bool {
        self.is_significant() && self.observed.is_some_and(|v| v > 0.0)
    }

    pub fn ci_covers(&self, value: f64) -> bool {
        matches!((self.ci_low, self.ci_high), (Some(lo), Some(hi)) if lo <= value && value <= hi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaAssessment {
    pub value: Option<f64>,
    /// The TC-vs-CC denominator differs significantly from zero.
    pub valid: bool,
    pub conversation_type: Option<ConversationType>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub config: ExperimentConfig,
    pub ingest: IngestSummary,
    pub group_sizes: ResolvedSizes,
    pub class_totals: ClassTotals,
    pub contrasts: NormalizedContrasts,
    pub estimates: EffectEstimates,
    pub alpha: AlphaAssessment,
    pub significance: Vec<Significance>,
    pub commentary: Vec<String>,
    pub warnings: Vec<String>,
}

impl Report {
    /// The entry for `statistic` under `mode`, if it was tested.
    pub fn significance_of(
        &self,
        statistic: Statistic,
        mode: PermutationMode,
    ) -> Option<&Significance> {
        self.significance
            .iter()
            .find(|s| s.statistic == statistic && s.mode == mode)
    }

    fn full(&self, statistic: Statistic) -> Option<&Significance> {
        self.significance_of(statistic, PermutationMode::Full)
    }
}

pub fn percent(v: f64) -> String {
    format!("{:+.2}%", v * 100.0)
}

fn value(stat: Statistic, v: f64) -> String {
    if stat.is_percentage() {
        percent(v)
    } else {
        format!("{v:.6}")
    }
}

fn opt_value(stat: Statistic, v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |v| value(stat, v))
}

/// Findings derived from the report's values.
pub fn commentary(report: &Report) -> Vec<String> {
    let mut out = Vec::new();
    let level = report.config.ci_level * 100.0;

    let lift = report.full(Statistic::CorrectedLift);
    let lift_significant = lift.is_some_and(Significance::is_significant);
    match (lift, lift_significant) {
        (Some(s), true) => out.push(format!(
            "Corrected total effect is significant: {} ({level:.0}% CI {} to {}).",
            opt_value(Statistic::CorrectedLift, s.observed),
            opt_value(Statistic::CorrectedLift, s.ci_low),
            opt_value(Statistic::CorrectedLift, s.ci_high),
        )),
        _ => out.push(format!(
            "No detectable treatment effect: the corrected total effect is not significant at the {level:.0}% level."
        )),
    }

    if lift_significant {
        if let (Some(corrected), Some(send)) = (
            report.estimates.corrected_lift_pct,
            report.estimates.standard_send_lift_pct,
        ) {
            let relation = if corrected > send {
                "understates"
            } else {
                "overstates"
            };
            out.push(format!(
                "The standard send-side lift ({}) {relation} the corrected total effect ({}).",
                percent(send),
                percent(corrected)
            ));
        }
    }

    if report
        .full(Statistic::PlaceboSpread)
        .is_some_and(Significance::is_significant)
    {
        out.push(
            "Per-pair message rates differ across edge classes more than a placebo would allow."
                .into(),
        );
    }

    let tt = report
        .full(Statistic::TtExcess)
        .is_some_and(Significance::is_significant_positive);
    let gap = report
        .full(Statistic::PerfectAffinityGap)
        .is_some_and(Significance::is_significant_positive);
    let tc = report
        .full(Statistic::TcExcess)
        .is_some_and(Significance::is_significant);
    let ct = report
        .full(Statistic::ResponseContrast)
        .is_some_and(Significance::is_significant);
    if tt && gap && !tc && !ct {
        out.push(
            "Perfect treatment affinity: TT exceeds TC significantly while TC and CT match the CC baseline; extra messages go to treated members only."
                .into(),
        );
    } else if report
        .full(Statistic::InteractionContrast)
        .is_some_and(Significance::is_significant)
    {
        let target = if report.contrasts.interaction_contrast > 0.0 {
            "treated"
        } else {
            "control"
        };
        out.push(format!(
            "Treatment affinity: treated members direct extra messages preferentially at {target} members."
        ));
    }

    if ct && report.contrasts.response_contrast > 0.0 {
        out.push(
            "Control members reply to treatment-created messages: CT exceeds the CC baseline."
                .into(),
        );
    }

    match (report.alpha.value, report.alpha.valid, report.alpha.conversation_type) {
        (Some(a), true, Some(kind)) => out.push(format!(
            "Response rate alpha = {a:.3}, consistent with {} traffic.",
            kind.label()
        )),
        (Some(_), false, _) => out.push(
            "Response rate alpha is not interpretable: the TC-vs-CC contrast is not significantly different from zero."
                .into(),
        ),
        _ => {}
    }
    out
}

/// Stability and data-quality warnings.
pub fn warnings(report: &Report) -> Vec<String> {
    let mut out = Vec::new();
    if report.group_sizes.silent_uncounted {
        out.push(
            "Group sizes were inferred from the edges; members who sent and received nothing are not counted. Supply --n-treated and --n-control."
                .into(),
        );
    }
    let share = report.group_sizes.sizes.treated_share();
    if share < BALANCED_SHARE.0 || share > BALANCED_SHARE.1 {
        out.push(format!(
            "Very uneven split: treated share {:.1}% lies outside 25%-75%; estimates are less stable.",
            share * 100.0
        ));
    }
    if let Some(days) = report.config.window_days {
        if days < MIN_WINDOW_DAYS {
            out.push(format!(
                "Data window of {days} day(s) is shorter than {MIN_WINDOW_DAYS} days; estimates may be unstable."
            ));
        }
    }
    if report.ingest.dropped_lines > 0 {
        out.push(format!(
            "{} self-loop line(s) carrying {} message(s) were dropped.",
            report.ingest.dropped_lines, report.ingest.dropped_messages
        ));
    }
    for s in &report.significance {
        if !s.reliable {
            out.push(format!(
                "Statistic {} ({} permutation) was undefined on {:.0}% of iterations or on the observed data; its interval is unreliable.",
                s.statistic,
                s.mode,
                s.undefined_rate * 100.0
            ));
        }
    }
    if report.alpha.conversation_type == Some(ConversationType::Outlier) {
        out.push(
            "Response rate outside [0, 1): the experiment may act on recipients rather than senders, or show strong affinity."
                .into(),
        );
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Text,
}

pub fn render_report(report: &Report, format: Format) -> Result<String> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            Ok(s)
        }
        Format::Text => Ok(render_text(report)),
    }
}

fn render_text(r: &Report) -> String {
    let mut s = String::new();
    let c = &r.config;
    let units = match r.contrasts.normalization {
        Normalization::Realized => "messages per ordered pair",
        Normalization::Expected => "CC-equivalent messages",
    };

    let _ = writeln!(s, "== Configuration ==");
    let _ = writeln!(
        s,
        "p = {}  normalization = {}  iterations = {}  seed = {}  ci_level = {}  mode = {}  hash = {}",
        c.p, c.normalization, c.iterations, c.seed, c.ci_level, c.permutation_mode, r.tool.hash
    );
    let g = &r.group_sizes;
    let _ = writeln!(
        s,
        "members: {} treated, {} control ({} / {} seen in edges)",
        g.sizes.treated, g.sizes.control, g.observed.treated, g.observed.control
    );
    let _ = writeln!(
        s,
        "edges: {} records from {} lines, {} messages",
        r.ingest.records, r.ingest.lines, r.ingest.total_messages
    );

    let _ = writeln!(s, "\n== Class totals ==");
    let t = &r.class_totals;
    let per_pair = r.contrasts.per_pair();
    for (k, name) in crate::contrasts::CLASS_NAMES.iter().enumerate() {
        let _ = writeln!(
            s,
            "{name}: messages = {:>12}  pairs = {:>14}  per pair = {:.6}",
            t.messages()[k],
            t.pairs()[k],
            per_pair[k]
        );
    }

    let _ = writeln!(s, "\n== Contrasts ({units}) ==");
    let ct = &r.contrasts;
    for (name, v) in [
        ("placebo spread", ct.placebo_spread),
        ("TT excess over CC", ct.tt_excess),
        ("TC excess over CC", ct.tc_excess),
        ("response contrast (CT - CC)", ct.response_contrast),
        ("affinity contrast", ct.affinity_contrast),
        ("perfect-affinity gap (TT - TC)", ct.perfect_affinity_gap),
        (
            "interaction contrast (TT - TC - CT + CC)",
            ct.interaction_contrast,
        ),
    ] {
        let _ = writeln!(s, "{name}: {v:.6}");
    }

    let _ = writeln!(s, "\n== Estimates ==");
    let e = &r.estimates;
    let pct = |v: Option<f64>| v.map_or_else(|| "undefined".into(), percent);
    let _ = writeln!(
        s,
        "corrected total effect: {:.3} messages",
        e.corrected_total_effect_abs
    );
    let _ = writeln!(s, "corrected lift: {}", pct(e.corrected_lift_pct));
    let _ = writeln!(s, "instant lift q1: {}", pct(e.q1_hat));
    let _ = writeln!(
        s,
        "response rate alpha: {}",
        e.alpha_hat
            .map_or_else(|| "undefined".into(), |a| format!("{a:.4}"))
    );
    if let Some(kind) = r.alpha.conversation_type {
        let _ = writeln!(s, "conversation type: {}", kind.label());
    }
    if !r.alpha.valid {
        let _ = writeln!(
            s,
            "CAVEAT: alpha is invalid here; the TC-vs-CC contrast is not significantly different from zero."
        );
    }
    let _ = writeln!(s, "standard send lift: {}", pct(e.standard_send_lift_pct));
    let _ = writeln!(
        s,
        "standard receive lift: {}",
        pct(e.standard_receive_lift_pct)
    );
    let _ = writeln!(
        s,
        "send + receive approximation: {}  (approximates q1/(1-alpha)*(1+2pu)/(1+u), u = q1/q2 - 1)",
        pct(e.approx_lift_pct)
    );
    let _ = writeln!(
        s,
        "receive / send approximation of alpha: {}  (approximates alpha when u = 0)",
        e.approx_alpha
            .map_or_else(|| "undefined".into(), |a| format!("{a:.4}"))
    );

    let _ = writeln!(
        s,
        "\n== Significance ({:.0}% intervals) ==",
        c.ci_level * 100.0
    );
    for sig in &r.significance {
        let _ = writeln!(
            s,
            "{:<22} {:<9} n={:<6} observed = {:>12}  p = {:<8} CI [{}, {}]{}",
            sig.statistic.name(),
            sig.mode.to_string(),
            sig.iterations,
            opt_value(sig.statistic, sig.observed),
            sig.p_value
                .map_or_else(|| "-".into(), |p| format!("{p:.4}")),
            opt_value(sig.statistic, sig.ci_low),
            opt_value(sig.statistic, sig.ci_high),
            if sig.reliable { "" } else { "  (unreliable)" },
        );
    }

    let _ = writeln!(s, "\n== Commentary ==");
    for line in &r.commentary {
        let _ = writeln!(s, "- {line}");
    }
    if !r.warnings.is_empty() {
        let _ = writeln!(s, "\n== Warnings ==");
        for line in &r.warnings {
            let _ = writeln!(s, "- {line}");
        }
    }
    s
}
