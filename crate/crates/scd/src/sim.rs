//! Three-phase round engine: arrivals at the dispatchers, independent
//! dispatch decisions against the shared round-start snapshot, then
//! departures as each server consumes up to c_s(t) jobs from its queue
//! head.
//!
//! A run is single-threaded and fully determined by `(config, seed)`.
//! Traffic comes from round-keyed sub-streams, so swapping the policy
//! leaves the arrival and capacity sequences bit-identical.

use std::time::{Duration, Instant};

use crate::core::{ClusterSpec, Job, RandomStreams, RoundTraffic, ServerQueue, GENERATOR_ID};
use crate::policies::{build_policy, Policy, PolicyContext};
use crate::Result;

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub cluster: ClusterSpec,
    pub policy: String,
    pub rounds: u64,
    pub seed: u64,
    pub warmup_rounds: u64,
    /// Measure per-decision wall-clock time (with an unmeasured warm-up
    /// repetition of each decision first).
    pub time_decisions: bool,
    /// Keep per-round traffic and queue vectors for tracing/regression.
    pub record_trace: bool,
}

impl SimulationConfig {
    pub fn new(cluster: ClusterSpec, policy: &str, rounds: u64, seed: u64) -> Self {
        Self {
            cluster,
            policy: policy.to_string(),
            rounds,
            seed,
            warmup_rounds: 0,
            time_decisions: false,
            record_trace: false,
        }
    }
}

/// Per-round trace entry kept when `record_trace` is set.
#[derive(Debug, Clone)]
pub struct RoundTrace {
    pub traffic: RoundTraffic,
    pub queue_lengths_end: Vec<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct SimulationReport {
    /// Rounds in system (departure − arrival + 1) per completed job,
    /// excluding jobs that arrived during warmup.
    pub response_times: Vec<u32>,
    /// Σ_s q_s(t) at the end of each round.
    pub per_round_total_queue: Vec<u64>,
    /// One sample per dispatcher-round with arrivals, when timing is on.
    pub decision_times: Vec<Duration>,
    pub completed_jobs: u64,
    pub total_arrivals: u64,
    /// Always zero: the model has no drops.
    pub dropped: u64,
    pub trace: Vec<RoundTrace>,
    /// PRNG identity, recorded for reproducibility.
    pub generator: &'static str,
}

/// Mutable simulation state, exposed so tests can drive single rounds.
pub struct SimState {
    pub queues: Vec<ServerQueue>,
    policies: Vec<Box<dyn Policy>>,
    policy_rngs: Vec<rand_chacha::ChaCha8Rng>,
    rates: Vec<f64>,
    warmup_rounds: u64,
    time_decisions: bool,
}

impl SimState {
    pub fn new(config: &SimulationConfig) -> Result<Self> {
        let n = config.cluster.server_count();
        let m = config.cluster.dispatcher_count();
        let streams = RandomStreams::new(config.seed);
        let mut policies = Vec::with_capacity(m);
        let mut policy_rngs = Vec::with_capacity(m);
        for d in 0..m {
            policies.push(build_policy(&config.policy, n)?);
            policy_rngs.push(streams.policy_rng(d));
        }
        Ok(Self {
            queues: config
                .cluster
                .server_rates()
                .iter()
                .map(|&mu| ServerQueue::new(mu))
                .collect(),
            policies,
            policy_rngs,
            rates: config.cluster.server_rates().to_vec(),
            warmup_rounds: config.warmup_rounds,
            time_decisions: config.time_decisions,
        })
    }

    pub fn queue_lengths(&self) -> Vec<u64> {
        self.queues.iter().map(|q| q.len() as u64).collect()
    }
}

/// Metrics produced by one round.
#[derive(Debug, Clone, Default)]
pub struct RoundMetrics {
    pub response_times: Vec<u32>,
    pub completions: u64,
    pub total_queue_end: u64,
    pub decision_times: Vec<Duration>,
}

/// Execute one round: record arrivals, let every dispatcher with work
/// decide against the round-start snapshot, apply all decisions (by
/// dispatcher index, then job index), then serve min(q_s, c_s) jobs per
/// server. Jobs completed in their arrival round count as 1 round in
/// system.
pub fn run_round(state: &mut SimState, round_index: u64, traffic: &RoundTraffic) -> RoundMetrics {
    let snapshot = state.queue_lengths();
    let m = traffic.arrivals_per_dispatcher.len();
    debug_assert_eq!(m, state.policies.len());
    // Eq. 18 identity: the dispatcher-average of the m·a^{(d)} estimates
    // equals the true total arrivals.
    debug_assert!({
        let total: u64 = traffic.arrivals_per_dispatcher.iter().sum();
        let est_sum: u64 = traffic
            .arrivals_per_dispatcher
            .iter()
            .map(|&a| m as u64 * a)
            .sum();
        est_sum == m as u64 * total
    });

    let mut metrics = RoundMetrics::default();

    // Phase 2: decisions from the shared snapshot, applied in dispatcher
    // order (intra-round arrival order is arbitrary in the model).
    for d in 0..m {
        let arrivals = traffic.arrivals_per_dispatcher[d] as usize;
        if arrivals == 0 {
            continue;
        }
        let ctx = PolicyContext {
            dispatcher_index: d,
            dispatcher_count: m,
            queue_snapshot: &snapshot,
            rates: &state.rates,
            arrivals,
        };
        let decision = if state.time_decisions {
            // Warm run on clones so the measured pass sees warm caches
            // without consuming the real policy/RNG state.
            let mut warm_policy = state.policies[d].clone_box();
            let mut warm_rng = state.policy_rngs[d].clone();
            let _ = warm_policy.dispatch(&ctx, &mut warm_rng);
            let start = Instant::now();
            let decision = state.policies[d].dispatch(&ctx, &mut state.policy_rngs[d]);
            metrics.decision_times.push(start.elapsed());
            decision
        } else {
            state.policies[d].dispatch(&ctx, &mut state.policy_rngs[d])
        };
        debug_assert_eq!(decision.per_job_targets.len(), arrivals);
        for &target in &decision.per_job_targets {
            state.queues[target].push(Job {
                arrival_round: round_index,
            });
        }
    }

    // Phase 3: departures.
    for (s, queue) in state.queues.iter_mut().enumerate() {
        let capacity = traffic.capacities_per_server[s] as usize;
        for job in queue.serve(capacity) {
            debug_assert!(job.arrival_round <= round_index);
            metrics.completions += 1;
            if job.arrival_round >= state.warmup_rounds {
                metrics
                    .response_times
                    .push((round_index - job.arrival_round + 1) as u32);
            }
        }
    }
    metrics.total_queue_end = state.queues.iter().map(|q| q.len() as u64).sum();
    metrics
}

/// Run the configured number of rounds, drawing all traffic from the
/// seed's round-keyed streams.
pub fn run_simulation(config: &SimulationConfig) -> Result<SimulationReport> {
    let mut state = SimState::new(config)?;
    let streams = RandomStreams::new(config.seed);
    let lambdas = config.cluster.dispatcher_rates().to_vec();
    let mus = config.cluster.server_rates().to_vec();

    let mut report = SimulationReport {
        generator: GENERATOR_ID,
        ..Default::default()
    };
    for t in 0..config.rounds {
        let traffic = RoundTraffic {
            arrivals_per_dispatcher: streams.arrivals_for_round(t, &lambdas),
            capacities_per_server: streams.capacities_for_round(t, &mus),
        };
        report.total_arrivals += traffic.total_arrivals();
        let metrics = run_round(&mut state, t, &traffic);
        report.completed_jobs += metrics.completions;
        report.response_times.extend(metrics.response_times);
        report.per_round_total_queue.push(metrics.total_queue_end);
        report.decision_times.extend(metrics.decision_times);
        if config.record_trace {
            report.trace.push(RoundTrace {
                traffic,
                queue_lengths_end: state.queue_lengths(),
            });
        }
    }
    debug_assert_eq!(
        report.total_arrivals - report.completed_jobs,
        state.queue_lengths().iter().sum::<u64>()
    );
    Ok(report)
}

/// Nearest-rank percentile of a sorted sample.
fn nearest_rank(sorted: &[u32], quantile: f64) -> u32 {
    debug_assert!(!sorted.is_empty());
    let rank = (quantile * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Response-time and stability summary of a run.
#[derive(Debug, Clone)]
pub struct Summary {
    pub completed_jobs: u64,
    /// Absent (None) when no job completed; never reported as zero.
    pub mean_response: Option<f64>,
    pub p95: Option<u32>,
    pub p99: Option<u32>,
    pub p999: Option<u32>,
    pub p9999: Option<u32>,
    /// CCDF points (τ, P(response > τ)) for τ = 0, 1, …, max response.
    pub ccdf: Vec<(u32, f64)>,
    pub time_avg_total_queue: f64,
}

pub fn summarize(report: &SimulationReport) -> Summary {
    let rounds = report.per_round_total_queue.len().max(1) as f64;
    let time_avg_total_queue =
        report.per_round_total_queue.iter().sum::<u64>() as f64 / rounds;
    if report.response_times.is_empty() {
        return Summary {
            completed_jobs: report.completed_jobs,
            mean_response: None,
            p95: None,
            p99: None,
            p999: None,
            p9999: None,
            ccdf: Vec::new(),
            time_avg_total_queue,
        };
    }
    let mut sorted = report.response_times.clone();
    sorted.sort_unstable();
    let count = sorted.len();
    let mean = sorted.iter().map(|&x| x as f64).sum::<f64>() / count as f64;
    let max = *sorted.last().unwrap();
    let mut ccdf = Vec::with_capacity(max as usize + 1);
    let mut idx = 0usize;
    for tau in 0..=max {
        while idx < count && sorted[idx] <= tau {
            idx += 1;
        }
        ccdf.push((tau, (count - idx) as f64 / count as f64));
    }
    Summary {
        completed_jobs: report.completed_jobs,
        mean_response: Some(mean),
        p95: Some(nearest_rank(&sorted, 0.95)),
        p99: Some(nearest_rank(&sorted, 0.99)),
        p999: Some(nearest_rank(&sorted, 0.999)),
        p9999: Some(nearest_rank(&sorted, 0.9999)),
        ccdf,
        time_avg_total_queue,
    }
}
