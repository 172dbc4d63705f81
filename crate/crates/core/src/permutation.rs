//! Network-consistent permutation tests.
//!
//! Each iteration relabels members with a fresh hash-derived Bernoulli(p)
//! assignment. A member keeps one label per iteration across every edge on
//! which it plays the permuted role, and labels of different iterations are
//! independent. Three schemes:
//!
//! * `Full`: both sender and recipient labels are redrawn. Tests whether
//!   treatment has any effect at all.
//! * `Sender`: sender labels are redrawn, recipient labels kept.
//! * `Recipient`: recipient labels are redrawn, sender labels kept. Tests
//!   receive-side hypotheses while letting treatment act on senders.
//!
//! Iterations reduce the edge list into integer class totals, so results are
//! bit-identical under any schedule.

use std::collections::HashMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrasts::{class_totals, ClassTotals, GroupSizes, Normalization};
use crate::error::{Error, Result};
use crate::hashing::{assign, domain, member_hash};
use crate::ingest::{member_statuses, EdgeRecord};
use crate::statistic::Statistic;

/// Largest tolerated share of iterations on which a statistic is undefined.
pub const MAX_UNDEFINED_RATE: f64 = 0.10;

pub const DEFAULT_ITERATIONS: u32 = 1000;

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum PermutationMode {
    #[default]
    Full,
    Sender,
    Recipient,
}

impl PermutationMode {
    pub fn relabels_senders(&self) -> bool {
        matches!(self, PermutationMode::Full | PermutationMode::Sender)
    }

    pub fn relabels_recipients(&self) -> bool {
        matches!(self, PermutationMode::Full | PermutationMode::Recipient)
    }
}

impl std::fmt::Display for PermutationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PermutationMode::Full => "full",
            PermutationMode::Sender => "sender",
            PermutationMode::Recipient => "recipient",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationPlan {
    pub mode: PermutationMode,
    pub iterations: u32,
    pub seed: u64,
    /// Treatment probability used when relabeling.
    pub p: f64,
    pub ci_level: f64,
}

impl PermutationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidConfig(format!(
                "p must lie in [0, 1], got {}",
                self.p
            )));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "ci_level must lie in (0, 1), got {}",
                self.ci_level
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub statistic: Statistic,
    pub mode: PermutationMode,
    pub iterations: u32,
    pub observed: f64,
    /// One value per iteration; NaN where the statistic was undefined.
    #[serde(skip)]
    pub null_values: Vec<f64>,
    pub null_mean: f64,
    pub null_sd: f64,
    pub undefined: usize,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_level: f64,
}

impl PermutationResult {
    /// Builds the result from raw null values: two-sided add-one p-value
    /// around the null mean, and a shift-method confidence interval.
    pub fn from_null(
        statistic: Statistic,
        observed: f64,
        null_values: Vec<f64>,
        plan: &PermutationPlan,
    ) -> Result<Self> {
        let defined: Vec<f64> = null_values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .collect();
        let undefined = null_values.len() - defined.len();
        if defined.is_empty() {
            return Err(Error::DegenerateNull {
                statistic: statistic.name().into(),
                undefined,
                iterations: null_values.len(),
            });
        }
        let n = defined.len() as f64;
        let mean = defined.iter().sum::<f64>() / n;
        let var = defined.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;

        let obs_dev = (observed - mean).abs();
        let extreme = defined
            .iter()
            .filter(|v| (**v - mean).abs() >= obs_dev)
            .count();
        let p_value = (1.0 + extreme as f64) / (n + 1.0);

        let mut centered: Vec<f64> = defined.iter().map(|v| v - mean).collect();
        centered.sort_by(f64::total_cmp);
        let tail = (1.0 - plan.ci_level) / 2.0;
        let lo = quantile(&centered, tail);
        let hi = quantile(&centered, 1.0 - tail);

        Ok(PermutationResult {
            statistic,
            mode: plan.mode,
            iterations: plan.iterations,
            observed,
            null_values,
            null_mean: mean,
            null_sd: var.sqrt(),
            undefined,
            p_value,
            ci_low: observed - hi,
            ci_high: observed - lo,
            ci_level: plan.ci_level,
        })
    }

    pub fn undefined_rate(&self) -> f64 {
        self.undefined as f64 / self.null_values.len().max(1) as f64
    }

    /// At most 10% of iterations left the statistic undefined.
    pub fn is_reliable(&self) -> bool {
        self.undefined_rate() <= MAX_UNDEFINED_RATE
    }

    pub fn ci_covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Edges with the permuted role's labels replaced for one iteration.
pub fn relabel(edges: &[EdgeRecord], plan: &PermutationPlan, iteration: u32) -> Vec<EdgeRecord> {
    let k = u64::from(iteration);
    edges
        .iter()
        .map(|e| EdgeRecord {
            src_treated: if plan.mode.relabels_senders() {
                assign(e.src, k, plan.seed, plan.p)
            } else {
                e.src_treated
            },
            dest_treated: if plan.mode.relabels_recipients() {
                assign(e.dest, k, plan.seed, plan.p)
            } else {
                e.dest_treated
            },
            ..*e
        })
        .collect()
}

/// Dense, reusable form of an edge list for repeated relabeling.
pub struct PermutationEngine {
    plan: PermutationPlan,
    members: Vec<u64>,
    /// Original class bit per member: 0 treated, 1 control.
    original: Vec<u8>,
    edges: Vec<(u32, u32, u64)>,
    /// Members of each original group that never appear in the edges.
    silent: GroupSizes,
    observed: ClassTotals,
}

impl PermutationEngine {
    pub fn new(edges: &[EdgeRecord], sizes: GroupSizes, plan: PermutationPlan) -> Result<Self> {
        plan.validate()?;
        let observed = class_totals(edges, sizes)?;
        let statuses = member_statuses(edges)?;
        let members: Vec<u64> = statuses.keys().copied().collect();
        let original: Vec<u8> = statuses.values().map(|t| u8::from(!*t)).collect();
        let treated_seen = original.iter().filter(|b| **b == 0).count() as u64;
        let control_seen = original.len() as u64 - treated_seen;
        if sizes.treated < treated_seen {
            return Err(Error::GroupSizeTooSmall {
                group: "treated",
                supplied: sizes.treated,
                observed: treated_seen,
            });
        }
        if sizes.control < control_seen {
            return Err(Error::GroupSizeTooSmall {
                group: "control",
                supplied: sizes.control,
                observed: control_seen,
            });
        }
        let index: HashMap<u64, u32> = members
            .iter()
            .enumerate()
            .map(|(i, m)| (*m, i as u32))
            .collect();
        let dense = edges
            .iter()
            .filter(|e| e.msg > 0)
            .map(|e| (index[&e.src], index[&e.dest], e.msg))
            .collect();
        Ok(PermutationEngine {
            plan,
            members,
            original,
            edges: dense,
            silent: GroupSizes::new(sizes.treated - treated_seen, sizes.control - control_seen),
            observed,
        })
    }

    pub fn plan(&self) -> &PermutationPlan {
        &self.plan
    }

    pub fn observed_totals(&self) -> &ClassTotals {
        &self.observed
    }

    /// Class totals under the relabeling of `iteration`, with group sizes
    /// recomputed from the relabeled membership.
    pub fn iteration_totals(&self, iteration: u32) -> ClassTotals {
        let plan = &self.plan;
        let k = u64::from(iteration);
        let fresh: Vec<u8> = self
            .members
            .iter()
            .map(|m| u8::from(!assign(*m, k, plan.seed, plan.p)))
            .collect();
        let senders = if plan.mode.relabels_senders() {
            &fresh
        } else {
            &self.original
        };
        let recipients = if plan.mode.relabels_recipients() {
            &fresh
        } else {
            &self.original
        };

        let mut roles = [0u64; 4];
        for (s, r) in senders.iter().zip(recipients) {
            roles[usize::from((s << 1) | r)] += 1;
        }
        self.split_silent(k, &mut roles);

        let mut messages = [0u64; 4];
        for &(src, dest, msg) in &self.edges {
            let class = (senders[src as usize] << 1) | recipients[dest as usize];
            messages[usize::from(class)] += msg;
        }
        ClassTotals::from_role_counts(messages, roles)
    }

    /// Silent members have no id to hash; their relabeled split is drawn
    /// binomially from a stream keyed by the same seed and iteration.
    fn split_silent(&self, iteration: u64, roles: &mut [u64; 4]) {
        let GroupSizes { treated, control } = self.silent;
        if treated + control == 0 {
            return;
        }
        let p = self.plan.p;
        let mut rng = ChaCha8Rng::seed_from_u64(member_hash(
            self.plan.seed,
            domain::SILENT_SPLIT,
            0,
            iteration,
        ));
        let mut draw = |n: u64| -> u64 {
            if n == 0 {
                0
            } else {
                Binomial::new(n, p).expect("p validated").sample(&mut rng)
            }
        };
        match self.plan.mode {
            PermutationMode::Full => {
                let t = draw(treated + control);
                roles[0] += t;
                roles[3] += treated + control - t;
            }
            PermutationMode::Sender => {
                // Recipient label stays with the original group.
                let t_from_t = draw(treated);
                let t_from_c = draw(control);
                roles[0] += t_from_t;
                roles[2] += treated - t_from_t;
                roles[1] += t_from_c;
                roles[3] += control - t_from_c;
            }
            PermutationMode::Recipient => {
                let t_from_t = draw(treated);
                let t_from_c = draw(control);
                roles[0] += t_from_t;
                roles[1] += treated - t_from_t;
                roles[2] += t_from_c;
                roles[3] += control - t_from_c;
            }
        }
    }

    /// Class totals for every iteration, in iteration order.
    pub fn all_iteration_totals(&self) -> Vec<ClassTotals> {
        (0..self.plan.iterations)
            .into_par_iter()
            .map(|k| self.iteration_totals(k))
            .collect()
    }

    /// Permutation results for several statistics from one pass over the
    /// iterations. A statistic undefined on the observed data, or on every
    /// iteration, yields an error in its slot; results with more than 10%
    /// undefined iterations are returned but flagged by `is_reliable`.
    pub fn run(
        &self,
        statistics: &[Statistic],
        normalization: Normalization,
    ) -> Vec<Result<PermutationResult>> {
        let null_totals = self.all_iteration_totals();
        let p = self.plan.p;
        statistics
            .iter()
            .map(|stat| {
                let observed = stat
                    .evaluate(&self.observed, p, normalization)
                    .ok_or(Error::Undefined(stat.name()))?;
                let nulls = null_totals
                    .iter()
                    .map(|t| stat.evaluate(t, p, normalization).unwrap_or(f64::NAN))
                    .collect();
                PermutationResult::from_null(*stat, observed, nulls, &self.plan)
            })
            .collect()
    }
}

/// Null distribution of one statistic, failing when it is undefined on more
/// than 10% of iterations.
pub fn null_distribution(
    edges: &[EdgeRecord],
    statistic: Statistic,
    plan: &PermutationPlan,
    sizes: GroupSizes,
    normalization: Normalization,
) -> Result<PermutationResult> {
    let engine = PermutationEngine::new(edges, sizes, *plan)?;
    let result = engine
        .run(&[statistic], normalization)
        .pop()
        .expect("one statistic requested")?;
    if !result.is_reliable() {
        return Err(Error::DegenerateNull {
            statistic: statistic.name().into(),
            undefined: result.undefined,
            iterations: result.null_values.len(),
        });
    }
    Ok(result)
}

/// Writes null values as CSV: a header of statistic names, then one row per
/// iteration. Undefined values are left empty.
pub fn write_null_csv<W: Write>(mut out: W, results: &[PermutationResult]) -> Result<()> {
    let header: Vec<&str> = results.iter().map(|r| r.statistic.name()).collect();
    writeln!(out, "{}", header.join(",")).map_err(Error::Write)?;
    let rows = results
        .iter()
        .map(|r| r.null_values.len())
        .max()
        .unwrap_or(0);
    for i in 0..rows {
        let row: Vec<String> = results
            .iter()
            .map(|r| match r.null_values.get(i) {
                Some(v) if v.is_finite() => v.to_string(),
                _ => String::new(),
            })
            .collect();
        writeln!(out, "{}", row.join(",")).map_err(Error::Write)?;
    }
    out.flush().map_err(Error::Write)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrasts::class_message_totals;

    fn plan(mode: PermutationMode, iterations: u32) -> PermutationPlan {
        PermutationPlan {
            mode,
            iterations,
            seed: 11,
            p: 0.5,
            ci_level: 0.9,
        }
    }

    fn star() -> Vec<EdgeRecord> {
        // Member 5 sends to three recipients and receives from two.
        vec![
            EdgeRecord::new(5, 1, 2, true, false),
            EdgeRecord::new(5, 2, 1, true, true),
            EdgeRecord::new(5, 3, 4, true, false),
            EdgeRecord::new(1, 5, 1, false, true),
            EdgeRecord::new(4, 5, 3, true, true),
            EdgeRecord::new(2, 3, 2, true, false),
        ]
    }

    #[test]
    fn relabel_is_consistent_per_member() {
        let edges = star();
        for k in 0..20 {
            let view = relabel(&edges, &plan(PermutationMode::Full, 20), k);
            let expected = assign(5, u64::from(k), 11, 0.5);
            for e in &view {
                if e.src == 5 {
                    assert_eq!(e.src_treated, expected);
                }
                if e.dest == 5 {
                    assert_eq!(e.dest_treated, expected);
                }
            }
        }
    }

    #[test]
    fn one_sided_modes_keep_the_other_role() {
        let edges = star();
        for k in 0..20 {
            let s = relabel(&edges, &plan(PermutationMode::Sender, 20), k);
            let r = relabel(&edges, &plan(PermutationMode::Recipient, 20), k);
            for ((orig, s), r) in edges.iter().zip(&s).zip(&r) {
                assert_eq!(s.dest_treated, orig.dest_treated);
                assert_eq!(r.src_treated, orig.src_treated);
                assert_eq!(s.src_treated, assign(orig.src, u64::from(k), 11, 0.5));
                assert_eq!(r.dest_treated, assign(orig.dest, u64::from(k), 11, 0.5));
            }
        }
    }

    #[test]
    fn engine_matches_direct_relabeling() {
        let edges = star();
        let sizes = GroupSizes::new(6, 4);
        for mode in [
            PermutationMode::Full,
            PermutationMode::Sender,
            PermutationMode::Recipient,
        ] {
            let pl = plan(mode, 50);
            let engine = PermutationEngine::new(&edges, sizes, pl).unwrap();
            for k in 0..50 {
                let t = engine.iteration_totals(k);
                assert_eq!(t.messages(), class_message_totals(&relabel(&edges, &pl, k)));
                assert_eq!(t.senders.total(), sizes.total());
                assert_eq!(t.recipients.total(), sizes.total());
            }
        }
    }

    #[test]
    fn full_mode_sizes_follow_labels() {
        let edges = star();
        let pl = plan(PermutationMode::Full, 30);
        let engine = PermutationEngine::new(&edges, GroupSizes::new(3, 2), pl).unwrap();
        for k in 0..30 {
            let t = engine.iteration_totals(k);
            let treated = [1u64, 2, 3, 4, 5]
                .iter()
                .filter(|m| assign(**m, u64::from(k), 11, 0.5))
                .count() as u64;
            assert_eq!(t.senders, GroupSizes::new(treated, 5 - treated));
            assert_eq!(t.recipients, t.senders);
            assert_eq!(t.n_tt, treated * treated.saturating_sub(1));
        }
    }

    #[test]
    fn label_invariant_statistic_is_degenerate() {
        let edges = star();
        let r = null_distribution(
            &edges,
            Statistic::GrandTotal,
            &plan(PermutationMode::Full, 200),
            GroupSizes::new(30, 30),
            Normalization::Realized,
        )
        .unwrap();
        assert_eq!(r.observed, 13.0);
        assert!(r.null_values.iter().all(|v| *v == 13.0));
        assert_eq!(r.p_value, 1.0);
        assert_eq!((r.ci_low, r.ci_high), (13.0, 13.0));
    }

    #[test]
    fn frequently_undefined_statistic_errors() {
        // Five members: over a third of relabelings leave a group with
        // fewer than two, so some class has no pairs.
        let err = null_distribution(
            &star(),
            Statistic::TtExcess,
            &plan(PermutationMode::Full, 200),
            GroupSizes::new(3, 2),
            Normalization::Realized,
        );
        assert!(matches!(err, Err(Error::DegenerateNull { .. })));
    }

    #[test]
    fn p_value_and_shift_interval() {
        let pl = plan(PermutationMode::Full, 9);
        let nulls: Vec<f64> = (1..=9).map(f64::from).collect();
        let r = PermutationResult::from_null(Statistic::TtExcess, 9.0, nulls, &pl).unwrap();
        // Mean 5; |9-5| is matched by 1 and 9.
        assert_eq!(r.null_mean, 5.0);
        assert!((r.p_value - 3.0 / 10.0).abs() < 1e-15);
        // Centered quantiles at 5% and 95% of -4..4 step 1: -3.6 and 3.6.
        assert!((r.ci_low - (9.0 - 3.6)).abs() < 1e-12);
        assert!((r.ci_high - (9.0 + 3.6)).abs() < 1e-12);
        assert!(r.ci_covers(9.0));
    }

    #[test]
    fn undefined_nulls_are_counted() {
        let pl = plan(PermutationMode::Full, 4);
        let r =
            PermutationResult::from_null(Statistic::Alpha, 0.3, vec![0.1, f64::NAN, 0.2, 0.3], &pl)
                .unwrap();
        assert_eq!(r.undefined, 1);
        assert!(!r.is_reliable());
        assert!(PermutationResult::from_null(Statistic::Alpha, 0.3, vec![f64::NAN], &pl).is_err());
    }

    #[test]
    fn iteration_order_does_not_matter() {
        let edges = star();
        let engine = PermutationEngine::new(
            &edges,
            GroupSizes::new(40, 60),
            plan(PermutationMode::Sender, 64),
        )
        .unwrap();
        let forward = engine.all_iteration_totals();
        let mut backward: Vec<_> = (0..64).rev().map(|k| engine.iteration_totals(k)).collect();
        backward.reverse();
        assert_eq!(forward, backward);
    }

    #[test]
    fn csv_dump_layout() {
        let pl = plan(PermutationMode::Full, 2);
        let a =
            PermutationResult::from_null(Statistic::CorrectedLift, 0.1, vec![0.5, f64::NAN], &pl)
                .unwrap();
        let b = PermutationResult::from_null(Statistic::Alpha, 0.2, vec![1.0, 2.0], &pl).unwrap();
        let mut out = Vec::new();
        write_null_csv(&mut out, &[a, b]).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "corrected_lift,alpha\n0.5,1\n,2\n"
        );
    }
}
