//! Dispatching policies: SCD plus the baseline policies it is evaluated
//! against.
//!
//! Each dispatcher runs its own policy instance against the shared
//! round-start queue snapshot. Within a round a dispatcher sees only its
//! own assignments (it updates a private working copy of the snapshot),
//! never those of other dispatchers — that blindness is what produces
//! herding in the queue-greedy baselines.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::balance::{compute_ideal_workload, order_by_load, LoadSnapshot};
use crate::scd_opt::{dispatch_probabilities, QpInstance};
use crate::{Error, Result};

/// Exact policy-name strings accepted in configs and used in CSV output.
pub const POLICY_NAMES: &[&str] = &[
    "scd",
    "scd-quadratic",
    "jsq",
    "sed",
    "jsq2",
    "hjsq2",
    "jiq",
    "hjiq",
    "lsq",
    "hlsq",
    "wr",
    "twf",
];

/// Everything one dispatcher sees when making its round decision.
pub struct PolicyContext<'a> {
    pub dispatcher_index: usize,
    pub dispatcher_count: usize,
    /// True q_s(t) at round start, shared by all dispatchers.
    pub queue_snapshot: &'a [u64],
    pub rates: &'a [f64],
    /// This dispatcher's arrival count a^{(d)}(t); callers skip dispatch
    /// entirely when it is zero.
    pub arrivals: usize,
}

/// One dispatcher-round assignment: a target server per arriving job.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyDecision {
    pub per_job_targets: Vec<usize>,
}

pub trait Policy: Send {
    fn name(&self) -> &'static str;

    /// Choose a destination for each of the dispatcher's jobs this round.
    fn dispatch(&mut self, ctx: &PolicyContext, rng: &mut ChaCha8Rng) -> PolicyDecision;

    /// Clone including local state, used by the timing harness to run an
    /// unmeasured warm-up decision without disturbing the real run.
    fn clone_box(&self) -> Box<dyn Policy>;
}

/// Construct a policy instance by its config name.
pub fn build_policy(name: &str, server_count: usize) -> Result<Box<dyn Policy>> {
    let policy: Box<dyn Policy> = match name {
        "scd" => Box::new(Scd {
            quadratic: false,
            unit_rates: false,
            name: "scd",
        }),
        "scd-quadratic" => Box::new(Scd {
            quadratic: true,
            unit_rates: false,
            name: "scd-quadratic",
        }),
        "twf" => Box::new(Scd {
            quadratic: false,
            unit_rates: true,
            name: "twf",
        }),
        "jsq" => Box::new(GreedyArgmin { weighted: false }),
        "sed" => Box::new(GreedyArgmin { weighted: true }),
        "jsq2" => Box::new(SampledArgmin {
            samples: 2,
            weighted: false,
        }),
        "hjsq2" => Box::new(SampledArgmin {
            samples: 2,
            weighted: true,
        }),
        "jiq" => Box::new(JoinIdleQueue { weighted: false }),
        "hjiq" => Box::new(JoinIdleQueue { weighted: true }),
        "lsq" => Box::new(LocalShortestQueue {
            weighted: false,
            local: vec![0; server_count],
        }),
        "hlsq" => Box::new(LocalShortestQueue {
            weighted: true,
            local: vec![0; server_count],
        }),
        "wr" => Box::new(WeightedRandom),
        other => return Err(Error::UnknownPolicy(other.to_string())),
    };
    Ok(policy)
}

/// Draw an index with probability proportional to `weights`, skipping any
/// index marked in `exclude` (weights renormalize implicitly).
fn weighted_draw(rng: &mut ChaCha8Rng, weights: &[f64], exclude: Option<usize>) -> usize {
    let total: f64 = weights
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(_, &w)| w)
        .sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if Some(i) == exclude {
            continue;
        }
        last = i;
        if u < w {
            return i;
        }
        u -= w;
    }
    last
}

fn uniform_draw(rng: &mut ChaCha8Rng, n: usize, exclude: Option<usize>) -> usize {
    match exclude {
        None => rng.gen_range(0..n),
        Some(e) => {
            let k = rng.gen_range(0..n - 1);
            if k >= e {
                k + 1
            } else {
                k
            }
        }
    }
}

// ── SCD / TWF ──────────────────────────────────────────────────────────

/// Stochastically coordinated dispatching. Estimates the system-wide
/// arrivals as m·a^{(d)}, water-fills to the IWL, solves the QP for the
/// probability vector, then draws every job's target independently.
///
/// `unit_rates` replaces all rates by 1 inside the policy's own
/// computation, which realizes the homogeneous TWF baseline.
#[derive(Clone)]
struct Scd {
    quadratic: bool,
    unit_rates: bool,
    name: &'static str,
}

impl Scd {
    fn probabilities(&self, ctx: &PolicyContext) -> crate::core::ProbabilityVector {
        let a_est = (ctx.dispatcher_count * ctx.arrivals) as f64;
        let rates: Vec<f64> = if self.unit_rates {
            vec![1.0; ctx.rates.len()]
        } else {
            ctx.rates.to_vec()
        };
        let snapshot = LoadSnapshot::new(ctx.queue_snapshot.to_vec(), rates, a_est);
        let iwl = compute_ideal_workload(&snapshot, &order_by_load(&snapshot))
            .expect("non-empty server set");
        let instance = QpInstance {
            queue_lengths: snapshot.queue_lengths,
            rates: snapshot.rates,
            total_arrivals: a_est,
            iwl,
        };
        dispatch_probabilities(&instance, self.quadratic).expect("valid QP instance")
    }
}

impl Policy for Scd {
    fn name(&self) -> &'static str {
        self.name
    }

    fn dispatch(&mut self, ctx: &PolicyContext, rng: &mut ChaCha8Rng) -> PolicyDecision {
        let sampler = self.probabilities(ctx).sampler();
        let per_job_targets = (0..ctx.arrivals).map(|_| sampler.sample(rng)).collect();
        PolicyDecision { per_job_targets }
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

// ── JSQ / SED ──────────────────────────────────────────────────────────

/// Per-job argmin over a self-updated working copy of the snapshot:
/// JSQ minimizes q̃+1, SED minimizes (q̃+1)/μ. Ties go to the lowest index.
#[derive(Clone)]
struct GreedyArgmin {
    weighted: bool,
}

fn argmin_by<F: Fn(usize) -> f64>(n: usize, key: F) -> usize {
    let mut best = 0;
    let mut best_key = key(0);
    for s in 1..n {
        let k = key(s);
        if k < best_key {
            best = s;
            best_key = k;
        }
    }
    best
}

impl Policy for GreedyArgmin {
    fn name(&self) -> &'static str {
        if self.weighted {
            "sed"
        } else {
            "jsq"
        }
    }

    fn dispatch(&mut self, ctx: &PolicyContext, _rng: &mut ChaCha8Rng) -> PolicyDecision {
        let mut local: Vec<u64> = ctx.queue_snapshot.to_vec();
        let n = local.len();
        let per_job_targets = (0..ctx.arrivals)
            .map(|_| {
                let target = if self.weighted {
                    argmin_by(n, |s| (local[s] + 1) as f64 / ctx.rates[s])
                } else {
                    argmin_by(n, |s| (local[s] + 1) as f64)
                };
                local[target] += 1;
                target
            })
            .collect();
        PolicyDecision { per_job_targets }
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

// ── JSQ(d) / hJSQ(d) ───────────────────────────────────────────────────

/// Power-of-d-choices: per job, sample `samples` distinct servers (uniform
/// for JSQ(d), rate-proportional for hJSQ(d)), then apply the JSQ or SED
/// rule within the sample.
#[derive(Clone)]
struct SampledArgmin {
    samples: usize,
    weighted: bool,
}

impl Policy for SampledArgmin {
    fn name(&self) -> &'static str {
        if self.weighted {
            "hjsq2"
        } else {
            "jsq2"
        }
    }

    fn dispatch(&mut self, ctx: &PolicyContext, rng: &mut ChaCha8Rng) -> PolicyDecision {
        let mut local: Vec<u64> = ctx.queue_snapshot.to_vec();
        let n = local.len();
        let d = self.samples.min(n);
        let per_job_targets = (0..ctx.arrivals)
            .map(|_| {
                let mut candidates = Vec::with_capacity(d);
                while candidates.len() < d {
                    let exclude = candidates.first().copied();
                    let s = if self.weighted {
                        weighted_draw(rng, ctx.rates, exclude)
                    } else {
                        uniform_draw(rng, n, exclude)
                    };
                    if !candidates.contains(&s) {
                        candidates.push(s);
                    }
                }
                candidates.sort_unstable();
                let target = *candidates
                    .iter()
                    .min_by(|&&a, &&b| {
                        let key = |s: usize| {
                            if self.weighted {
                                (local[s] + 1) as f64 / ctx.rates[s]
                            } else {
                                (local[s] + 1) as f64
                            }
                        };
                        key(a).partial_cmp(&key(b)).unwrap().then(a.cmp(&b))
                    })
                    .unwrap();
                local[target] += 1;
                target
            })
            .collect();
        PolicyDecision { per_job_targets }
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

// ── JIQ / hJIQ ─────────────────────────────────────────────────────────

/// Join-the-idle-queue: per job, pick among idle servers if any exist
/// (uniformly, or rate-proportionally for hJIQ), otherwise among all.
#[derive(Clone)]
struct JoinIdleQueue {
    weighted: bool,
}

impl Policy for JoinIdleQueue {
    fn name(&self) -> &'static str {
        if self.weighted {
            "hjiq"
        } else {
            "jiq"
        }
    }

    fn dispatch(&mut self, ctx: &PolicyContext, rng: &mut ChaCha8Rng) -> PolicyDecision {
        let mut local: Vec<u64> = ctx.queue_snapshot.to_vec();
        let n = local.len();
        let per_job_targets = (0..ctx.arrivals)
            .map(|_| {
                let idle: Vec<usize> = (0..n).filter(|&s| local[s] == 0).collect();
                let target = if idle.is_empty() {
                    if self.weighted {
                        weighted_draw(rng, ctx.rates, None)
                    } else {
                        uniform_draw(rng, n, None)
                    }
                } else if self.weighted {
                    let weights: Vec<f64> = idle.iter().map(|&s| ctx.rates[s]).collect();
                    idle[weighted_draw(rng, &weights, None)]
                } else {
                    idle[uniform_draw(rng, idle.len(), None)]
                };
                local[target] += 1;
                target
            })
            .collect();
        PolicyDecision { per_job_targets }
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

// ── LSQ / hLSQ ─────────────────────────────────────────────────────────

/// Local-shortest-queue: each dispatcher keeps a persistent (stale) local
/// queue-length array, initialized to zeros. Before dispatching it
/// refreshes exactly one sampled server's entry with the true value, then
/// routes per job by argmin over the local array (JSQ rule for LSQ, SED
/// rule for hLSQ), incrementing the chosen entry.
#[derive(Clone)]
struct LocalShortestQueue {
    weighted: bool,
    local: Vec<u64>,
}

impl Policy for LocalShortestQueue {
    fn name(&self) -> &'static str {
        if self.weighted {
            "hlsq"
        } else {
            "lsq"
        }
    }

    fn dispatch(&mut self, ctx: &PolicyContext, rng: &mut ChaCha8Rng) -> PolicyDecision {
        let n = self.local.len();
        let refresh = if self.weighted {
            weighted_draw(rng, ctx.rates, None)
        } else {
            uniform_draw(rng, n, None)
        };
        self.local[refresh] = ctx.queue_snapshot[refresh];
        let per_job_targets = (0..ctx.arrivals)
            .map(|_| {
                let target = if self.weighted {
                    argmin_by(n, |s| (self.local[s] + 1) as f64 / ctx.rates[s])
                } else {
                    argmin_by(n, |s| (self.local[s] + 1) as f64)
                };
                self.local[target] += 1;
                target
            })
            .collect();
        PolicyDecision { per_job_targets }
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

// ── Weighted random ────────────────────────────────────────────────────

/// Each job goes to server s with probability μ_s/μ_tot, independently.
#[derive(Clone)]
struct WeightedRandom;

impl Policy for WeightedRandom {
    fn name(&self) -> &'static str {
        "wr"
    }

    fn dispatch(&mut self, ctx: &PolicyContext, rng: &mut ChaCha8Rng) -> PolicyDecision {
        let per_job_targets = (0..ctx.arrivals)
            .map(|_| weighted_draw(rng, ctx.rates, None))
            .collect();
        PolicyDecision { per_job_targets }
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}
