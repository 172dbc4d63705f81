//! Synthetic experiments with known ground truth.
//!
//! Members `0..n` are assigned to treatment by a seeded hash with
//! probability `p`. Every ordered pair exchanges a Poisson(`lambda`) number
//! of baseline messages. Each treated sender additionally sends
//! Poisson(`lambda * q1`) extra messages to every treated member and
//! Poisson(`lambda * q2`) to every control member. Every extra message,
//! and every response to one, draws a reply in the opposite direction with
//! probability `alpha`, up to `max_chain_depth` replies. Baseline messages
//! draw no replies.
//!
//! Randomness for sender `i` comes from streams keyed by `(seed, i, tag)`,
//! so output does not depend on how rows are scheduled.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrasts::GroupSizes;
use crate::error::{Error, Result};
use crate::hashing::{bernoulli, domain, member_hash};
use crate::ingest::EdgeRecord;

pub const DEFAULT_MAX_CHAIN_DEPTH: u32 = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    pub n: u32,
    pub p: f64,
    /// Baseline messages per ordered pair.
    pub lambda: f64,
    /// Instant lift toward treated recipients.
    pub q1: f64,
    /// Instant lift toward control recipients.
    pub q2: f64,
    /// Reply probability for treatment-created messages.
    pub alpha: f64,
    /// `None` lets reply chains run until they die out.
    pub max_chain_depth: Option<u32>,
    pub seed: u64,
    /// Treated members send extra messages only to treated members.
    pub perfect_affinity: bool,
}

impl Default for SimulationParams {
    fn default() -> Self {
        SimulationParams {
            n: 1000,
            p: 0.5,
            lambda: 0.02,
            q1: 0.10,
            q2: 0.10,
            alpha: 0.30,
            max_chain_depth: Some(DEFAULT_MAX_CHAIN_DEPTH),
            seed: 0,
            perfect_affinity: false,
        }
    }
}

impl SimulationParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return bad(format!("p must lie in (0, 1), got {}", self.p));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            ));
        }
        for (name, q) in [("q1", self.q1), ("q2", self.q2)] {
            if !(q.is_finite() && q >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {q}"));
            }
        }
        if !(self.alpha >= 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in [0, 1), got {}", self.alpha));
        }
        if self.max_chain_depth == Some(0) {
            return bad("max_chain_depth must be positive".into());
        }
        Ok(())
    }

    /// Lift toward control recipients; zero under perfect affinity.
    pub fn effective_q2(&self) -> f64 {
        if self.perfect_affinity {
            0.0
        } else {
            self.q2
        }
    }

    /// Affinity `u = q1/q2 - 1`, positive when treated members favor other
    /// treated members. `None` when the control-directed lift is zero, which
    /// includes perfect affinity.
    pub fn affinity(&self) -> Option<f64> {
        let q2 = self.effective_q2();
        (q2 != 0.0).then(|| self.q1 / q2 - 1.0)
    }
}

/// Closed-form expectations and counterfactual totals for a parameter set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationTruth {
    pub n_treated: u64,
    pub n_control: u64,
    pub expected_m_tt: f64,
    pub expected_m_tc: f64,
    pub expected_m_ct: f64,
    pub expected_m_cc: f64,
    pub true_corrected_lift: f64,
    pub true_alpha: f64,
    pub true_q1: f64,
    pub true_q2: f64,
    /// Expected messages with nobody treated.
    pub counterfactual_total_at_0: f64,
    /// Expected messages with everybody treated.
    pub counterfactual_total_at_1: f64,
}

impl SimulationTruth {
    pub fn sizes(&self) -> GroupSizes {
        GroupSizes::new(self.n_treated, self.n_control)
    }

    pub fn expected_messages(&self) -> [f64; 4] {
        [
            self.expected_m_tt,
            self.expected_m_tc,
            self.expected_m_ct,
            self.expected_m_cc,
        ]
    }
}

/// Expected class totals given realized group sizes. Reply chains are
/// treated as unbounded; truncation at depth `d` changes them by `O(alpha^d)`.
pub fn expected_totals(params: &SimulationParams, sizes: GroupSizes) -> SimulationTruth {
    let (t, c) = (sizes.treated as f64, sizes.control as f64);
    let (lambda, a) = (params.lambda, params.alpha);
    let (q1, q2) = (params.q1, params.effective_q2());
    let total_lift = q1 / (1.0 - a);
    let n = t + c;
    SimulationTruth {
        n_treated: sizes.treated,
        n_control: sizes.control,
        expected_m_tt: t * (t - 1.0) * lambda * (1.0 + total_lift),
        expected_m_tc: t * c * lambda * (1.0 + q2 / (1.0 - a * a)),
        expected_m_ct: t * c * lambda * (1.0 + q2 * a / (1.0 - a * a)),
        expected_m_cc: c * (c - 1.0) * lambda,
        true_corrected_lift: total_lift,
        true_alpha: a,
        true_q1: q1,
        true_q2: q2,
        counterfactual_total_at_0: n * (n - 1.0) * lambda,
        counterfactual_total_at_1: n * (n - 1.0) * lambda * (1.0 + total_lift),
    }
}

/// Treatment label of every member, indexed by member id.
pub fn treatment_labels(params: &SimulationParams) -> Vec<bool> {
    (0..u64::from(params.n))
        .map(|m| bernoulli(member_hash(params.seed, domain::SIM_ASSIGN, m, 0), params.p))
        .collect()
}

/// Traffic on one ordered pair, split by origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTraffic {
    pub src: u64,
    pub dest: u64,
    pub src_treated: bool,
    pub dest_treated: bool,
    pub baseline: u64,
    /// Extra messages started by a treated sender on this pair.
    pub initiated: u64,
    /// Replies in reaction to extra messages.
    pub responses: u64,
}

impl PairTraffic {
    pub fn total(&self) -> u64 {
        self.baseline + self.initiated + self.responses
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetailedSimulation {
    pub traffic: Vec<PairTraffic>,
    pub truth: SimulationTruth,
}

impl DetailedSimulation {
    pub fn edges(&self) -> Vec<EdgeRecord> {
        self.traffic
            .iter()
            .map(|t| EdgeRecord::new(t.src, t.dest, t.total(), t.src_treated, t.dest_treated))
            .collect()
    }
}

pub fn simulate(params: &SimulationParams) -> Result<(Vec<EdgeRecord>, SimulationTruth)> {
    let sim = simulate_detailed(params)?;
    Ok((sim.edges(), sim.truth))
}

/// Runs the generative model and keeps the per-pair breakdown of baseline,
/// initiated and reply traffic.
pub fn simulate_detailed(params: &SimulationParams) -> Result<DetailedSimulation> {
    params.validate()?;
    let labels = treatment_labels(params);
    let treated: Vec<u32> = (0..params.n).filter(|&m| labels[m as usize]).collect();
    let control: Vec<u32> = (0..params.n).filter(|&m| !labels[m as usize]).collect();
    let sizes = GroupSizes::new(treated.len() as u64, control.len() as u64);

    let mut parts: Vec<Part> = (0..params.n)
        .into_par_iter()
        .flat_map_iter(|i| sender_row(params, i, labels[i as usize], &treated, &control))
        .collect();
    parts.sort_unstable_by_key(|p| (p.src, p.dest));

    let mut traffic: Vec<PairTraffic> = Vec::with_capacity(parts.len());
    for part in parts {
        match traffic.last_mut() {
            Some(last) if last.src == u64::from(part.src) && last.dest == u64::from(part.dest) => {
                last.baseline += part.counts[0];
                last.initiated += part.counts[1];
                last.responses += part.counts[2];
            }
            _ => traffic.push(PairTraffic {
                src: u64::from(part.src),
                dest: u64::from(part.dest),
                src_treated: labels[part.src as usize],
                dest_treated: labels[part.dest as usize],
                baseline: part.counts[0],
                initiated: part.counts[1],
                responses: part.counts[2],
            }),
        }
    }
    Ok(DetailedSimulation {
        traffic,
        truth: expected_totals(params, sizes),
    })
}

struct Part {
    src: u32,
    dest: u32,
    /// Baseline, initiated, responses.
    counts: [u64; 3],
}

fn sender_row(
    params: &SimulationParams,
    sender: u32,
    sender_treated: bool,
    treated: &[u32],
    control: &[u32],
) -> Vec<Part> {
    let mut out = Vec::new();
    let key = u64::from(sender);

    let mut rng = ChaCha8Rng::seed_from_u64(member_hash(params.seed, domain::SIM_BASELINE, key, 0));
    let others = params.n as usize - 1;
    poisson_hits(&mut rng, others, params.lambda, |slot, count| {
        let slot = slot as u32;
        let dest = if slot < sender { slot } else { slot + 1 };
        out.push(Part {
            src: sender,
            dest,
            counts: [count, 0, 0],
        });
    });

    if !sender_treated {
        return out;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(member_hash(params.seed, domain::SIM_EXTRA, key, 0));
    let depth = params.max_chain_depth;
    let alpha = params.alpha;
    let mut replies: HashMap<u32, u64> = HashMap::new();
    let groups = [
        (treated, params.lambda * params.q1),
        (control, params.lambda * params.effective_q2()),
    ];
    for (targets, mean) in groups {
        let mut chains = Vec::new();
        poisson_hits(&mut rng, targets.len(), mean, |slot, count| {
            chains.push((targets[slot], count));
        });
        for (dest, count) in chains {
            if dest == sender {
                continue;
            }
            let mut forward = 0u64;
            let mut backward = 0u64;
            for _ in 0..count {
                let k = chain_replies(&mut rng, alpha, depth);
                backward += k.div_ceil(2);
                forward += k / 2;
            }
            out.push(Part {
                src: sender,
                dest,
                counts: [0, count, forward],
            });
            *replies.entry(dest).or_default() += backward;
        }
    }
    let mut replies: Vec<_> = replies.into_iter().filter(|(_, r)| *r > 0).collect();
    replies.sort_unstable();
    out.extend(replies.into_iter().map(|(from, r)| Part {
        src: from,
        dest: sender,
        counts: [0, 0, r],
    }));
    out
}

/// Number of replies following one extra message: at least `m` with
/// probability `alpha^m`, capped at `depth`.
fn chain_replies(rng: &mut ChaCha8Rng, alpha: f64, depth: Option<u32>) -> u64 {
    if alpha <= 0.0 {
        return 0;
    }
    let u: f64 = 1.0 - rng.random::<f64>();
    let k = (u.ln() / alpha.ln()).floor();
    let cap = depth.map_or(f64::INFINITY, f64::from);
    k.min(cap) as u64
}

/// Visits every slot in `0..slots` whose Poisson(`mean`) draw is non-zero,
/// jumping over empty slots geometrically.
fn poisson_hits(rng: &mut ChaCha8Rng, slots: usize, mean: f64, mut hit: impl FnMut(usize, u64)) {
    if mean <= 0.0 || slots == 0 {
        return;
    }
    let mut idx = 0usize;
    while idx < slots {
        let u: f64 = 1.0 - rng.random::<f64>();
        let skip = (u.ln() / -mean).floor();
        if skip >= (slots - idx) as f64 {
            break;
        }
        idx += skip as usize;
        hit(idx, positive_poisson(rng, mean));
        idx += 1;
    }
}

/// Poisson(`mean`) conditioned on being at least one.
fn positive_poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean > 10.0 {
        let dist = Poisson::new(mean).expect("positive finite mean");
        loop {
            let k = dist.sample(rng) as u64;
            if k > 0 {
                return k;
            }
        }
    }
    let p_hit = -(-mean).exp_m1();
    let u = rng.random::<f64>() * p_hit;
    let mut k = 1u64;
    let mut prob = (-mean).exp() * mean;
    let mut acc = prob;
    while u > acc && k < 1_000 {
        k += 1;
        prob *= mean / k as f64;
        acc += prob;
    }
    k
}
