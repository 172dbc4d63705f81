//! Edge-class totals and their normalized contrasts.
//!
//! Every message falls in one of four classes by the treatment status of
//! its sender and recipient: TT, TC, CT, CC. Under a placebo the number of
//! messages per ordered pair is the same in every class, so normalized
//! differences between classes expose treatment effects that leak across
//! the treatment/control boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::EdgeRecord;

pub const CLASS_NAMES: [&str; 4] = ["TT", "TC", "CT", "CC"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupSizes {
    pub treated: u64,
    pub control: u64,
}

impl GroupSizes {
    pub const fn new(treated: u64, control: u64) -> Self {
        GroupSizes { treated, control }
    }

    pub fn total(&self) -> u64 {
        self.treated + self.control
    }

    pub fn treated_share(&self) -> f64 {
        self.treated as f64 / self.total() as f64
    }
}

/// How class totals are put on a common scale.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Weight totals by the design probability: `((1-p)/p)^2` on TT,
    /// `(1-p)/p` on TC and CT. Contrasts come out in CC-equivalent totals.
    Expected,
    /// Divide by exact ordered-pair counts. Contrasts come out in messages
    /// per ordered pair.
    #[default]
    Realized,
}

impl std::fmt::Display for Normalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Normalization::Expected => "expected",
            Normalization::Realized => "realized",
        })
    }
}

/// Message totals and ordered-pair counts for the four edge classes.
///
/// Pair counts exclude self-pairs. Group sizes are kept per role because a
/// one-sided permutation relabels senders and recipients independently; for
/// observed data both roles carry the same partition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTotals {
    pub m_tt: u64,
    pub m_tc: u64,
    pub m_ct: u64,
    pub m_cc: u64,
    pub n_tt: u64,
    pub n_tc: u64,
    pub n_ct: u64,
    pub n_cc: u64,
    pub senders: GroupSizes,
    pub recipients: GroupSizes,
}

impl ClassTotals {
    /// Totals for a single partition of `sizes` members shared by both roles.
    pub fn with_sizes(messages: [u64; 4], sizes: GroupSizes) -> Self {
        let (t, c) = (sizes.treated, sizes.control);
        Self::from_role_counts(messages, [t, 0, 0, c])
    }

    /// `role_counts[k]` counts members whose (sender label, recipient label)
    /// falls in class `k` (TT, TC, CT, CC order). Ordered-pair counts follow
    /// as `senders_X * recipients_Y - role_counts[XY]`.
    pub fn from_role_counts(messages: [u64; 4], role_counts: [u64; 4]) -> Self {
        let [c_tt, c_tc, c_ct, c_cc] = role_counts;
        let senders = GroupSizes::new(c_tt + c_tc, c_ct + c_cc);
        let recipients = GroupSizes::new(c_tt + c_ct, c_tc + c_cc);
        let pairs = |s: u64, r: u64, own: u64| s * r - own;
        ClassTotals {
            m_tt: messages[0],
            m_tc: messages[1],
            m_ct: messages[2],
            m_cc: messages[3],
            n_tt: pairs(senders.treated, recipients.treated, c_tt),
            n_tc: pairs(senders.treated, recipients.control, c_tc),
            n_ct: pairs(senders.control, recipients.treated, c_ct),
            n_cc: pairs(senders.control, recipients.control, c_cc),
            senders,
            recipients,
        }
    }

    pub fn messages(&self) -> [u64; 4] {
        [self.m_tt, self.m_tc, self.m_ct, self.m_cc]
    }

    pub fn pairs(&self) -> [u64; 4] {
        [self.n_tt, self.n_tc, self.n_ct, self.n_cc]
    }

    pub fn total_messages(&self) -> u64 {
        self.messages().iter().sum()
    }

    pub fn n_treated(&self) -> u64 {
        self.senders.treated
    }

    pub fn n_control(&self) -> u64 {
        self.senders.control
    }

    /// Messages per ordered pair, `None` for classes without pairs.
    pub fn rates(&self) -> [Option<f64>; 4] {
        let m = self.messages();
        let n = self.pairs();
        std::array::from_fn(|k| (n[k] > 0).then(|| m[k] as f64 / n[k] as f64))
    }

    /// The totals seen with treatment and control labels exchanged.
    pub fn swap_labels(&self) -> Self {
        let swap = |g: GroupSizes| GroupSizes::new(g.control, g.treated);
        ClassTotals {
            m_tt: self.m_cc,
            m_tc: self.m_ct,
            m_ct: self.m_tc,
            m_cc: self.m_tt,
            n_tt: self.n_cc,
            n_tc: self.n_ct,
            n_ct: self.n_tc,
            n_cc: self.n_tt,
            senders: swap(self.senders),
            recipients: swap(self.recipients),
        }
    }
}

/// Sums messages by class.
pub fn class_message_totals(edges: &[EdgeRecord]) -> [u64; 4] {
    edges.iter().fold([0u64; 4], |mut acc, e| {
        acc[e.class()] += e.msg;
        acc
    })
}

/// Class totals for canonical `edges` with resolved group `sizes`.
///
/// Pair counts come from the group sizes, not from observed edges, so
/// members who never messaged still count toward normalization.
pub fn class_totals(edges: &[EdgeRecord], sizes: GroupSizes) -> Result<ClassTotals> {
    if sizes.treated < 2 || sizes.control < 2 {
        return Err(Error::InsufficientGroups {
            treated: sizes.treated,
            control: sizes.control,
        });
    }
    Ok(ClassTotals::with_sizes(class_message_totals(edges), sizes))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedContrasts {
    pub normalization: Normalization,
    pub per_pair_tt: f64,
    pub per_pair_tc: f64,
    pub per_pair_ct: f64,
    pub per_pair_cc: f64,
    /// Largest minus smallest per-pair value; zero in expectation under a placebo.
    pub placebo_spread: f64,
    /// TT minus the CC baseline.
    pub tt_excess: f64,
    /// TC minus the CC baseline: extra messages sent into control.
    pub tc_excess: f64,
    /// CT minus the CC baseline: responses from control to treated.
    pub response_contrast: f64,
    /// TT minus the mean of TC and CT.
    pub affinity_contrast: f64,
    /// TT minus TC; positive under perfect affinity.
    pub perfect_affinity_gap: f64,
    /// TT excess minus the TC and CT excesses; zero when treated members
    /// lift traffic to both groups equally.
    pub interaction_contrast: f64,
}

impl NormalizedContrasts {
    pub fn per_pair(&self) -> [f64; 4] {
        [
            self.per_pair_tt,
            self.per_pair_tc,
            self.per_pair_ct,
            self.per_pair_cc,
        ]
    }
}

/// Weights putting TT, TC, CT and CC totals on the CC scale of a design
/// with treatment probability `p`.
pub fn expected_weights(p: f64) -> [f64; 4] {
    let odds = (1.0 - p) / p;
    [odds * odds, odds, odds, 1.0]
}

pub fn normalized_contrasts(
    totals: &ClassTotals,
    p: f64,
    mode: Normalization,
) -> Result<NormalizedContrasts> {
    let m = totals.messages().map(|v| v as f64);
    let (per_pair, scaled) = match mode {
        Normalization::Realized => {
            let rates = totals.rates();
            let mut per_pair = [0.0; 4];
            for k in 0..4 {
                per_pair[k] = rates[k].ok_or(Error::EmptyClass(CLASS_NAMES[k]))?;
            }
            (per_pair, per_pair)
        }
        Normalization::Expected => {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "p must lie in (0, 1), got {p}"
                )));
            }
            let n = totals.senders.total() as f64;
            if n == 0.0 {
                return Err(Error::InsufficientGroups {
                    treated: 0,
                    control: 0,
                });
            }
            let shares = [p * p, p * (1.0 - p), p * (1.0 - p), (1.0 - p) * (1.0 - p)];
            let w = expected_weights(p);
            (
                std::array::from_fn(|k| m[k] / (shares[k] * n * n)),
                std::array::from_fn(|k| w[k] * m[k]),
            )
        }
    };

    let max = per_pair.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = per_pair.iter().copied().fold(f64::INFINITY, f64::min);
    let [tt, tc, ct, cc] = scaled;
    Ok(NormalizedContrasts {
        normalization: mode,
        per_pair_tt: per_pair[0],
        per_pair_tc: per_pair[1],
        per_pair_ct: per_pair[2],
        per_pair_cc: per_pair[3],
        placebo_spread: max - min,
        tt_excess: tt - cc,
        tc_excess: tc - cc,
        response_contrast: ct - cc,
        affinity_contrast: tt - 0.5 * (tc + ct),
        perfect_affinity_gap: tt - tc,
        interaction_contrast: tt - tc - ct + cc,
    })
}
