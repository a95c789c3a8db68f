//! Domain types and seeded random-stream management.
//!
//! Randomness is split into independent sub-streams keyed off a single
//! master seed. The arrival and capacity streams are pure functions of
//! `(master_seed, round)`, so two runs with the same seed but different
//! policies see bit-identical traffic.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Poisson};

use crate::{Error, Result};

/// Immutable description of the cluster: server processing rates `μ_s`
/// (jobs/round) and dispatcher arrival rates `λ_d` (jobs/round).
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    server_rates: Vec<f64>,
    dispatcher_rates: Vec<f64>,
}

impl ClusterSpec {
    pub fn new(server_rates: Vec<f64>, dispatcher_rates: Vec<f64>) -> Result<Self> {
        if server_rates.is_empty() {
            return Err(Error::EmptyServerSet);
        }
        if dispatcher_rates.is_empty() {
            return Err(Error::Config("at least one dispatcher required".into()));
        }
        if server_rates.iter().any(|&mu| !(mu > 0.0)) {
            return Err(Error::Config("every server rate must be positive".into()));
        }
        if dispatcher_rates.iter().any(|&l| !(l >= 0.0)) {
            return Err(Error::Config(
                "dispatcher rates must be non-negative".into(),
            ));
        }
        Ok(Self {
            server_rates,
            dispatcher_rates,
        })
    }

    pub fn server_count(&self) -> usize {
        self.server_rates.len()
    }

    pub fn dispatcher_count(&self) -> usize {
        self.dispatcher_rates.len()
    }

    pub fn server_rates(&self) -> &[f64] {
        &self.server_rates
    }

    pub fn dispatcher_rates(&self) -> &[f64] {
        &self.dispatcher_rates
    }

    pub fn total_service_rate(&self) -> f64 {
        self.server_rates.iter().sum()
    }
}

/// Offered load ρ = Σλ_d / Σμ_s. The system is admissible when ρ < 1.
pub fn offered_load(spec: &ClusterSpec) -> f64 {
    let lambda: f64 = spec.dispatcher_rates.iter().sum();
    lambda / spec.total_service_rate()
}

/// A queued job, tagged with the round in which it arrived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Job {
    pub arrival_round: u64,
}

/// A server's FIFO queue together with its rate.
#[derive(Debug, Clone)]
pub struct ServerQueue {
    pub rate: f64,
    jobs: std::collections::VecDeque<Job>,
}

impl ServerQueue {
    pub fn new(rate: f64) -> Self {
        Self {
            rate,
            jobs: std::collections::VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    pub fn push(&mut self, job: Job) {
        self.jobs.push_back(job);
    }

    /// Remove up to `capacity` jobs from the head, in FIFO order.
    pub fn serve(&mut self, capacity: usize) -> impl Iterator<Item = Job> + '_ {
        let k = capacity.min(self.jobs.len());
        self.jobs.drain(..k)
    }
}

/// One round's exogenous traffic: per-dispatcher arrival counts `a^{(d)}(t)`
/// and per-server service capacities `c_s(t)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundTraffic {
    pub arrivals_per_dispatcher: Vec<u64>,
    pub capacities_per_server: Vec<u64>,
}

impl RoundTraffic {
    pub fn total_arrivals(&self) -> u64 {
        self.arrivals_per_dispatcher.iter().sum()
    }
}

/// Simplex-constrained dispatch probabilities P = [p_1, …, p_n].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    probs: Vec<f64>,
}

impl ProbabilityVector {
    /// Clamps tiny negatives (≥ −1e-9) to zero and renormalizes if the
    /// post-clamp sum drifted from 1 by more than 1e-12. Closed-form
    /// solutions accumulate O(n·ε) cancellation error, so drift up to
    /// 1e-6 is accepted; anything larger indicates a solver bug.
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        for p in probs.iter_mut() {
            if *p < 0.0 {
                if *p < -1e-9 {
                    return Err(Error::Numeric(format!("negative probability {p}")));
                }
                *p = 0.0;
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Numeric(format!("probabilities sum to {sum}")));
        }
        if (sum - 1.0).abs() > 1e-12 {
            for p in probs.iter_mut() {
                *p /= sum;
            }
        }
        Ok(Self { probs })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Draw a server index according to this distribution.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen::<f64>();
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // u landed in the rounding gap past the last cumulative point.
        self.probs.len() - 1
    }

    /// Precompute the CDF for repeated draws: O(n) build, O(log n) per
    /// draw, and every draw returns the same index [`Self::sample`]
    /// would for the same uniform.
    pub fn sampler(&self) -> Sampler {
        let mut acc = 0.0;
        Sampler {
            cumulative: self
                .probs
                .iter()
                .map(|&p| {
                    acc += p;
                    acc
                })
                .collect(),
        }
    }
}

/// Cumulative form of a [`ProbabilityVector`] for repeated draws.
#[derive(Debug, Clone)]
pub struct Sampler {
    cumulative: Vec<f64>,
}

impl Sampler {
    /// O(log n) draw, index-identical to [`ProbabilityVector::sample`]
    /// on the same uniform.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen::<f64>();
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

/// Identifier of the PRNG family and key-derivation scheme, recorded in
/// reports so runs can be reproduced.
pub const GENERATOR_ID: &str = "chacha8(splitmix64-keyed)";

const STREAM_ARRIVALS: u64 = 0x41;
const STREAM_CAPACITIES: u64 = 0x43;
const STREAM_POLICY: u64 = 0x50;
const STREAM_CLUSTER: u64 = 0x4d;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ tag.wrapping_mul(0x6a09e667f3bcc909)) ^ index)
}

/// Per-run random sub-streams derived from one master seed.
///
/// Arrival and capacity streams are keyed by round index, so they are
/// independent of any policy decision or of how much randomness a policy
/// consumed earlier in the run.
#[derive(Debug, Clone, Copy)]
pub struct RandomStreams {
    master_seed: u64,
}

impl RandomStreams {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    fn rng(&self, tag: u64, index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.master_seed, tag, index))
    }

    /// Arrival counts a^{(d)}(t) for one round, in dispatcher order.
    pub fn arrivals_for_round(&self, round: u64, lambdas: &[f64]) -> Vec<u64> {
        let mut rng = self.rng(STREAM_ARRIVALS, round);
        lambdas
            .iter()
            .map(|&l| draw_poisson(&mut rng, l))
            .collect()
    }

    /// Service capacities c_s(t) for one round, in server order. Drawn for
    /// every server regardless of occupancy so the stream is policy-free.
    pub fn capacities_for_round(&self, round: u64, mus: &[f64]) -> Vec<u64> {
        let mut rng = self.rng(STREAM_CAPACITIES, round);
        mus.iter()
            .map(|&mu| draw_geometric_capacity(&mut rng, mu))
            .collect()
    }

    /// Private stream for one dispatcher's policy-internal sampling.
    pub fn policy_rng(&self, dispatcher: usize) -> ChaCha8Rng {
        self.rng(STREAM_POLICY, dispatcher as u64)
    }

    /// Stream for drawing cluster composition (μ_s ∼ U[lo,hi] experiments).
    pub fn cluster_rng(&self) -> ChaCha8Rng {
        self.rng(STREAM_CLUSTER, 0)
    }
}

/// Poisson(λ) sample; λ = 0 yields 0.
pub fn draw_poisson<R: Rng>(rng: &mut R, lambda: f64) -> u64 {
    debug_assert!(lambda >= 0.0);
    if lambda <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(lambda).expect("lambda checked positive");
    dist.sample(rng) as u64
}

/// Geometric sample on {0, 1, 2, …} with success probability 1/(1+μ),
/// so the mean number of failures equals μ.
pub fn draw_geometric_capacity<R: Rng>(rng: &mut R, mu: f64) -> u64 {
    debug_assert!(mu > 0.0);
    let p = 1.0 / (1.0 + mu);
    let dist = Geometric::new(p).expect("p in (0,1]");
    dist.sample(rng)
}
