//! Total treatment effect, response rate and instant lift estimators, plus
//! the standard per-member lifts and the approximations built from them.
//!
//! Percentages are fractions here (`0.10` is a 10% lift); they are only
//! formatted as percentages when a report is rendered.

use serde::{Deserialize, Serialize};

use crate::contrasts::{ClassTotals, GroupSizes, Normalization, CLASS_NAMES};
use crate::error::{Error, Result};
use crate::ingest::EdgeRecord;

/// Messages sent and received by each group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SendReceiveTotals {
    pub ms_t: u64,
    pub ms_c: u64,
    pub mr_t: u64,
    pub mr_c: u64,
    pub senders: GroupSizes,
    pub recipients: GroupSizes,
}

impl From<&ClassTotals> for SendReceiveTotals {
    fn from(t: &ClassTotals) -> Self {
        SendReceiveTotals {
            ms_t: t.m_tt + t.m_tc,
            ms_c: t.m_ct + t.m_cc,
            mr_t: t.m_tt + t.m_ct,
            mr_c: t.m_tc + t.m_cc,
            senders: t.senders,
            recipients: t.recipients,
        }
    }
}

/// Role-based sums straight from the edge list.
pub fn send_receive_totals(edges: &[EdgeRecord], sizes: GroupSizes) -> SendReceiveTotals {
    let mut s = SendReceiveTotals {
        ms_t: 0,
        ms_c: 0,
        mr_t: 0,
        mr_c: 0,
        senders: sizes,
        recipients: sizes,
    };
    for e in edges {
        if e.src_treated {
            s.ms_t += e.msg;
        } else {
            s.ms_c += e.msg;
        }
        if e.dest_treated {
            s.mr_t += e.msg;
        } else {
            s.mr_c += e.msg;
        }
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TotalEffect {
    /// Change in total messages between full rollout and no rollout.
    pub absolute: f64,
    /// `absolute` relative to the no-rollout baseline; `None` when CC is empty.
    pub percent: Option<f64>,
}

/// Total effect of rolling treatment out to everyone.
///
/// With `Expected` normalization this is `m_tt/p^2 - m_cc/(1-p)^2` over the
/// baseline `m_cc/(1-p)^2`. With `Realized` normalization the lift is the
/// ratio of exact TT and CC per-pair rates, and the absolute effect is that
/// lift applied to the same baseline evaluated at the realized treated share.
pub fn total_treatment_effect(
    totals: &ClassTotals,
    p: f64,
    mode: Normalization,
) -> Result<TotalEffect> {
    match mode {
        Normalization::Expected => {
            check_p(p)?;
            let baseline = totals.m_cc as f64 / ((1.0 - p) * (1.0 - p));
            let absolute = totals.m_tt as f64 / (p * p) - baseline;
            let percent = (totals.m_cc > 0).then(|| absolute / baseline);
            Ok(TotalEffect { absolute, percent })
        }
        Normalization::Realized => {
            let [r_tt, _, _, r_cc] = totals.rates();
            let r_tt = r_tt.ok_or(Error::EmptyClass(CLASS_NAMES[0]))?;
            let r_cc = r_cc.ok_or(Error::EmptyClass(CLASS_NAMES[3]))?;
            let control_share = 1.0 - totals.senders.treated_share();
            let scale = totals.n_cc as f64 / (control_share * control_share);
            let absolute = (r_tt - r_cc) * scale;
            let percent = (totals.m_cc > 0).then(|| r_tt / r_cc - 1.0);
            Ok(TotalEffect { absolute, percent })
        }
    }
}

/// Numerator and denominator of the response-rate ratio: extra CT
/// responses over extra TC messages, both measured against CC.
pub fn alpha_parts(totals: &ClassTotals, p: f64, mode: Normalization) -> Result<(f64, f64)> {
    match mode {
        Normalization::Expected => {
            check_p(p)?;
            let base = p / (1.0 - p) * totals.m_cc as f64;
            Ok((totals.m_ct as f64 - base, totals.m_tc as f64 - base))
        }
        Normalization::Realized => {
            let rates = totals.rates();
            let rate = |k: usize| rates[k].ok_or(Error::EmptyClass(CLASS_NAMES[k]));
            let cc = rate(3)?;
            Ok((rate(2)? - cc, rate(1)? - cc))
        }
    }
}

pub fn estimate_alpha(totals: &ClassTotals, p: f64, mode: Normalization) -> Result<f64> {
    let (num, den) = alpha_parts(totals, p, mode)?;
    if den == 0.0 {
        return Err(Error::Undefined("response rate (zero TC-vs-CC contrast)"));
    }
    Ok(num / den)
}

/// Instant lift from the total lift, inverting `total = instant / (1 - alpha)`.
pub fn instant_lift(corrected_lift: f64, alpha: f64) -> Result<f64> {
    if !alpha.is_finite() || (1.0 - alpha).abs() < 1e-12 {
        return Err(Error::Undefined("instant lift (response rate of 1)"));
    }
    Ok(corrected_lift * (1.0 - alpha))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardLifts {
    pub send: Option<f64>,
    pub receive: Option<f64>,
}

fn per_member_lift(treated_total: u64, control_total: u64, sizes: GroupSizes) -> Option<f64> {
    if control_total == 0 || sizes.treated == 0 || sizes.control == 0 {
        return None;
    }
    let t = treated_total as f64 / sizes.treated as f64;
    let c = control_total as f64 / sizes.control as f64;
    Some(t / c - 1.0)
}

/// Conventional per-member lifts on messages sent and received.
pub fn standard_lifts(srt: &SendReceiveTotals) -> StandardLifts {
    StandardLifts {
        send: per_member_lift(srt.ms_t, srt.ms_c, srt.senders),
        receive: per_member_lift(srt.mr_t, srt.mr_c, srt.recipients),
    }
}

/// Sum of send and receive lifts; approximates `q1/(1-alpha) * (1+2pu)/(1+u)`.
pub fn approx_total_effect(send_lift: f64, receive_lift: f64) -> f64 {
    send_lift + receive_lift
}

/// Receive lift over send lift; approximates `(alpha + p u alpha)/(1 + p u alpha)`.
pub fn approx_alpha(send_lift: f64, receive_lift: f64) -> Result<f64> {
    if send_lift == 0.0 {
        return Err(Error::Undefined(
            "approximate response rate (zero send lift)",
        ));
    }
    Ok(receive_lift / send_lift)
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "p must lie in (0, 1), got {p}"
        )))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimates {
    pub normalization: Normalization,
    pub corrected_total_effect_abs: f64,
    pub corrected_lift_pct: Option<f64>,
    pub alpha_hat: Option<f64>,
    pub q1_hat: Option<f64>,
    pub standard_send_lift_pct: Option<f64>,
    pub standard_receive_lift_pct: Option<f64>,
    pub approx_lift_pct: Option<f64>,
    pub approx_alpha: Option<f64>,
}

/// Every estimator at once. Undefined values (zero denominators) come back
/// as `None`; only missing pair classes are errors.
pub fn estimate_effects(
    totals: &ClassTotals,
    p: f64,
    mode: Normalization,
) -> Result<EffectEstimates> {
    let effect = total_treatment_effect(totals, p, mode)?;
    let alpha = match estimate_alpha(totals, p, mode) {
        Ok(a) => Some(a),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    let q1 = match (effect.percent, alpha) {
        (Some(l), Some(a)) => instant_lift(l, a).ok(),
        _ => None,
    };
    let lifts = standard_lifts(&SendReceiveTotals::from(totals));
    let (approx_lift, approx_a) = match (lifts.send, lifts.receive) {
        (Some(s), Some(r)) => (Some(approx_total_effect(s, r)), approx_alpha(s, r).ok()),
        _ => (None, None),
    };
    Ok(EffectEstimates {
        normalization: mode,
        corrected_total_effect_abs: effect.absolute,
        corrected_lift_pct: effect.percent,
        alpha_hat: alpha,
        q1_hat: q1,
        standard_send_lift_pct: lifts.send,
        standard_receive_lift_pct: lifts.receive,
        approx_lift_pct: approx_lift,
        approx_alpha: approx_a,
    })
}

/// Kinds of conversation a response rate points to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConversationType {
    /// Close to the global reply rate: extra messages mostly get one reply.
    OneOff,
    /// Well above the reply rate but below 1: extended back-and-forth.
    Long,
    /// At or above 1, or negative: outside what the response model explains.
    Outlier,
}

impl ConversationType {
    pub fn label(&self) -> &'static str {
        match self {
            ConversationType::OneOff => "one-off conversation",
            ConversationType::Long => "long conversation",
            ConversationType::Outlier => "outlier",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaBands {
    /// Upper end of the one-off band, typically near the platform's global reply rate.
    pub reply_rate_ceiling: f64,
    /// Response rates at or above this are outliers.
    pub outlier_min: f64,
}

impl Default for AlphaBands {
    fn default() -> Self {
        AlphaBands {
            reply_rate_ceiling: 0.5,
            outlier_min: 1.0,
        }
    }
}

impl AlphaBands {
    pub fn validate(&self) -> Result<()> {
        if !(self.reply_rate_ceiling >= 0.0 && self.reply_rate_ceiling <= self.outlier_min) {
            return Err(Error::InvalidConfig(
                "alpha bands need 0 <= reply_rate_ceiling <= outlier_min".into(),
            ));
        }
        Ok(())
    }

    pub fn classify(&self, alpha: f64) -> ConversationType {
        if alpha.is_nan() || alpha < 0.0 || alpha >= self.outlier_min {
            ConversationType::Outlier
        } else if alpha <= self.reply_rate_ceiling {
            ConversationType::OneOff
        } else {
            ConversationType::Long
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrasts::class_totals;
    use proptest::prelude::*;

    fn four_member_totals() -> ClassTotals {
        class_totals(
            &crate::contrasts::tests::four_member(),
            GroupSizes::new(2, 2),
        )
        .unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn four_member_total_effect() {
        let t = four_member_totals();
        let e = total_treatment_effect(&t, 0.5, Normalization::Expected).unwrap();
        assert_eq!(e.absolute, -8.0);
        assert_eq!(e.percent, Some(-0.4));
        let r = total_treatment_effect(&t, 0.5, Normalization::Realized).unwrap();
        assert_eq!(r.absolute, -8.0);
        assert_eq!(r.percent, Some(-0.4));
    }

    #[test]
    fn zero_cc_leaves_percent_undefined() {
        let t = ClassTotals::with_sizes([4, 1, 1, 0], GroupSizes::new(3, 3));
        for mode in [Normalization::Expected, Normalization::Realized] {
            let e = total_treatment_effect(&t, 0.5, mode).unwrap();
            assert!(e.absolute > 0.0);
            assert_eq!(e.percent, None);
        }
    }

    #[test]
    fn placebo_expectation_has_no_effect() {
        // p = 0.25 with per-pair rate 1 in every class and expected-share totals.
        let t = ClassTotals::with_sizes([1, 3, 3, 9], GroupSizes::new(4, 12));
        let e = total_treatment_effect(&t, 0.25, Normalization::Expected).unwrap();
        assert!(close(e.absolute, 0.0, 1e-9));
        assert!(matches!(
            estimate_alpha(&t, 0.25, Normalization::Expected),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn four_member_alpha() {
        let t = four_member_totals();
        let a = estimate_alpha(&t, 0.5, Normalization::Expected).unwrap();
        assert!(close(a, 4.0 / 3.0, 1e-15));
        assert_eq!(AlphaBands::default().classify(a), ConversationType::Outlier);
        let r = estimate_alpha(&t, 0.5, Normalization::Realized).unwrap();
        assert!(close(r, 1.125, 1e-15));
    }

    #[test]
    fn instant_lift_inverts_geometric_total() {
        let total = 0.10 / 0.70;
        assert!(close(instant_lift(total, 0.30).unwrap(), 0.10, 1e-15));
        assert_eq!(instant_lift(0.2, 0.0).unwrap(), 0.2);
        assert!(close(
            instant_lift(-0.4, 4.0 / 3.0).unwrap(),
            0.4 / 3.0,
            1e-15
        ));
        assert!(instant_lift(0.2, 1.0).is_err());
    }

    #[test]
    fn four_member_send_receive() {
        let s = send_receive_totals(
            &crate::contrasts::tests::four_member(),
            GroupSizes::new(2, 2),
        );
        assert_eq!((s.ms_t, s.ms_c, s.mr_t, s.mr_c), (5, 6, 4, 7));
        assert_eq!(s, SendReceiveTotals::from(&four_member_totals()));

        let lifts = standard_lifts(&s);
        assert!(close(lifts.send.unwrap(), 5.0 / 6.0 - 1.0, 1e-15));
        assert!(close(lifts.receive.unwrap(), 4.0 / 7.0 - 1.0, 1e-15));
        let ratio = approx_alpha(lifts.send.unwrap(), lifts.receive.unwrap()).unwrap();
        assert!(close(ratio, 2.571428571428571, 1e-12));
    }

    #[test]
    fn send_receive_edge_cases() {
        let s = send_receive_totals(&[], GroupSizes::new(3, 3));
        assert_eq!((s.ms_t, s.ms_c, s.mr_t, s.mr_c), (0, 0, 0, 0));
        assert_eq!(
            standard_lifts(&s),
            StandardLifts {
                send: None,
                receive: None
            }
        );

        let edges = vec![
            EdgeRecord::new(1, 2, 3, true, false),
            EdgeRecord::new(2, 1, 0, false, true),
        ];
        let s = send_receive_totals(&edges, GroupSizes::new(1, 1));
        assert_eq!(s.ms_c, 0);
        assert_eq!(standard_lifts(&s).send, None);
    }

    #[test]
    fn approximation_identities_at_zero_affinity() {
        // Closed-form lifts with q1 = q2 = 0.1, alpha = 0.3, p = 0.5.
        let (q, a) = (0.10, 0.30);
        let send = q / (1.0 - a * a);
        let receive = q * a / (1.0 - a * a);
        assert!(close(
            approx_total_effect(send, receive),
            q / (1.0 - a),
            1e-15
        ));
        assert!(close(approx_alpha(send, receive).unwrap(), a, 1e-15));
        assert_eq!(approx_total_effect(0.0, 0.0), 0.0);
        assert!(approx_alpha(0.0, 0.1).is_err());
    }

    #[test]
    fn classification_bands() {
        let b = AlphaBands::default();
        assert_eq!(b.classify(0.3), ConversationType::OneOff);
        assert_eq!(b.classify(0.8), ConversationType::Long);
        assert_eq!(b.classify(1.0), ConversationType::Outlier);
        assert_eq!(b.classify(-0.2), ConversationType::Outlier);
        assert_eq!(b.classify(f64::NAN), ConversationType::Outlier);
    }

    fn totals_strategy() -> impl Strategy<Value = ClassTotals> {
        (
            1u64..5000,
            1u64..5000,
            1u64..5000,
            1u64..5000,
            2u64..200,
            2u64..200,
        )
            .prop_map(|(a, b, c, d, t, k)| {
                ClassTotals::with_sizes([a, b, c, d], GroupSizes::new(t, k))
            })
    }

    proptest! {
        #[test]
        fn instant_lift_round_trips(t in totals_strategy(), p in 0.05f64..0.95) {
            for mode in [Normalization::Expected, Normalization::Realized] {
                let e = estimate_effects(&t, p, mode).unwrap();
                if let (Some(l), Some(a)) = (e.corrected_lift_pct, e.alpha_hat) {
                    if (1.0 - a).abs() > 1e-9 {
                        let q1 = instant_lift(l, a).unwrap();
                        prop_assert!((q1 / (1.0 - a) - l).abs() <= 1e-12 * (1.0 + l.abs()));
                    }
                }
            }
        }

        #[test]
        fn ratios_ignore_message_scale(t in totals_strategy(), k in 2u64..50, p in 0.05f64..0.95) {
            let scaled = ClassTotals::with_sizes(t.messages().map(|m| m * k), t.senders);
            for mode in [Normalization::Expected, Normalization::Realized] {
                let a = estimate_effects(&t, p, mode).unwrap();
                let b = estimate_effects(&scaled, p, mode).unwrap();
                let same = |x: Option<f64>, y: Option<f64>| match (x, y) {
                    (Some(x), Some(y)) => (x - y).abs() <= 1e-9 * (1.0 + x.abs()),
                    (None, None) => true,
                    _ => false,
                };
                prop_assert!(same(a.corrected_lift_pct, b.corrected_lift_pct));
                prop_assert!(same(a.alpha_hat, b.alpha_hat));
                prop_assert!(same(a.q1_hat, b.q1_hat));
                prop_assert!(same(a.standard_send_lift_pct, b.standard_send_lift_pct));
                prop_assert!(same(a.standard_receive_lift_pct, b.standard_receive_lift_pct));
                let kf = k as f64;
                prop_assert!((a.corrected_total_effect_abs * kf - b.corrected_total_effect_abs).abs()
                    <= 1e-9 * (1.0 + b.corrected_total_effect_abs.abs()));
            }
        }
    }
}
