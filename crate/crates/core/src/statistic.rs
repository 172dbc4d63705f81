use serde::{Deserialize, Serialize};

use crate::contrasts::{normalized_contrasts, ClassTotals, Normalization};
use crate::estimators::{
    approx_alpha, estimate_alpha, instant_lift, standard_lifts, total_treatment_effect,
    SendReceiveTotals,
};

/// A scalar computed from class totals, testable by permutation.
#[derive(
    Clone,
    Copy,
    Debug,
    PartialEq,
    Eq,
    Hash,
    PartialOrd,
    Ord,
    Serialize,
    Deserialize,
    clap::ValueEnum,
)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Statistic {
    CorrectedLift,
    CorrectedEffect,
    Alpha,
    InstantLift,
    SendLift,
    ReceiveLift,
    ApproxLift,
    ApproxAlpha,
    PlaceboSpread,
    TtExcess,
    TcExcess,
    ResponseContrast,
    AffinityContrast,
    PerfectAffinityGap,
    InteractionContrast,
    GrandTotal,
}

impl Statistic {
    pub const ALL: [Statistic; 16] = [
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
        Statistic::GrandTotal,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Statistic::CorrectedLift => "corrected_lift",
            Statistic::CorrectedEffect => "corrected_effect",
            Statistic::Alpha => "alpha",
            Statistic::InstantLift => "instant_lift",
            Statistic::SendLift => "send_lift",
            Statistic::ReceiveLift => "receive_lift",
            Statistic::ApproxLift => "approx_lift",
            Statistic::ApproxAlpha => "approx_alpha",
            Statistic::PlaceboSpread => "placebo_spread",
            Statistic::TtExcess => "tt_excess",
            Statistic::TcExcess => "tc_excess",
            Statistic::ResponseContrast => "response_contrast",
            Statistic::AffinityContrast => "affinity_contrast",
            Statistic::PerfectAffinityGap => "perfect_affinity_gap",
            Statistic::InteractionContrast => "interaction_contrast",
            Statistic::GrandTotal => "grand_total",
        }
    }

    /// Reported as a percentage in text output.
    pub fn is_percentage(&self) -> bool {
        matches!(
            self,
            Statistic::CorrectedLift
                | Statistic::InstantLift
                | Statistic::SendLift
                | Statistic::ReceiveLift
                | Statistic::ApproxLift
        )
    }

    /// `None` when the statistic is undefined for these totals.
    pub fn evaluate(&self, totals: &ClassTotals, p: f64, mode: Normalization) -> Option<f64> {
        let value = match self {
            Statistic::CorrectedLift => total_treatment_effect(totals, p, mode).ok()?.percent?,
            Statistic::CorrectedEffect => total_treatment_effect(totals, p, mode).ok()?.absolute,
            Statistic::Alpha => estimate_alpha(totals, p, mode).ok()?,
            Statistic::InstantLift => {
                let lift = total_treatment_effect(totals, p, mode).ok()?.percent?;
                instant_lift(lift, estimate_alpha(totals, p, mode).ok()?).ok()?
            }
            Statistic::SendLift => standard_lifts(&SendReceiveTotals::from(totals)).send?,
            Statistic::ReceiveLift => standard_lifts(&SendReceiveTotals::from(totals)).receive?,
            Statistic::ApproxLift => {
                let l = standard_lifts(&SendReceiveTotals::from(totals));
                l.send? + l.receive?
            }
            Statistic::ApproxAlpha => {
                let l = standard_lifts(&SendReceiveTotals::from(totals));
                approx_alpha(l.send?, l.receive?).ok()?
            }
            Statistic::GrandTotal => totals.total_messages() as f64,
            contrast => {
                let c = normalized_contrasts(totals, p, mode).ok()?;
                match contrast {
                    Statistic::PlaceboSpread => c.placebo_spread,
                    Statistic::TtExcess => c.tt_excess,
                    Statistic::TcExcess => c.tc_excess,
                    Statistic::ResponseContrast => c.response_contrast,
                    Statistic::AffinityContrast => c.affinity_contrast,
                    Statistic::PerfectAffinityGap => c.perfect_affinity_gap,
                    Statistic::InteractionContrast => c.interaction_contrast,
                    _ => unreachable!(),
                }
            }
        };
        value.is_finite().then_some(value)
    }
}

impl std::fmt::Display for Statistic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
