//! Experiment driver: load sweeps, delay-tail collection, per-decision
//! timing, and single traced runs, with CSV emission.
//!
//! Sweep cells — one simulation per (ρ, policy, seed) — share nothing
//! mutable and run data-parallel via rayon when the `parallel` feature is
//! on (the default); a sequential path is always available and is forced
//! in timing mode to keep measurements quiet.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use rand::Rng;
use serde::Serialize;

use crate::core::{ClusterSpec, RandomStreams, GENERATOR_ID};
use crate::policies::POLICY_NAMES;
use crate::sim::{run_simulation, summarize, SimulationConfig, Summary};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sweep,
    Tail,
    Timing,
    Single,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sweep" => Ok(Mode::Sweep),
            "tail" => Ok(Mode::Tail),
            "timing" => Ok(Mode::Timing),
            "single" => Ok(Mode::Single),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// Server-rate distribution for cluster construction.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MuDist {
    /// Explicit per-server rates; fixes n.
    Fixed { rates: Vec<f64> },
    /// μ_s ∼ U[lo, hi], drawn from a dedicated sub-stream of the seed so
    /// the cluster composition is shared across policies.
    Uniform { lo: f64, hi: f64 },
}

impl std::str::FromStr for MuDist {
    type Err = Error;

    /// Accepts `uniform:lo,hi` or `fixed:r1,r2,…`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("invalid --mu-dist `{s}`: {m}"));
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| bad("expected `uniform:lo,hi` or `fixed:r1,r2,…`"))?;
        let values: Vec<f64> = args
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(&e.to_string()))?;
        match kind {
            "uniform" => {
                if values.len() != 2 || !(values[0] > 0.0) || values[1] < values[0] {
                    return Err(bad("uniform needs 0 < lo ≤ hi"));
                }
                Ok(MuDist::Uniform {
                    lo: values[0],
                    hi: values[1],
                })
            }
            "fixed" => {
                if values.is_empty() || values.iter().any(|&v| !(v > 0.0)) {
                    return Err(bad("fixed needs positive rates"));
                }
                Ok(MuDist::Fixed { rates: values })
            }
            _ => Err(bad("unknown kind")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSpec {
    pub mode: Mode,
    /// Server counts; sweep/tail/single use the first entry, timing runs
    /// every entry.
    pub server_counts: Vec<usize>,
    pub dispatchers: usize,
    pub mu_dist: MuDist,
    pub rho_values: Vec<f64>,
    pub policies: Vec<String>,
    pub rounds: u64,
    pub seeds: Vec<u64>,
    pub warmup_rounds: u64,
    pub out_dir: PathBuf,
    /// Emit a per-round queue-vector trace in single mode.
    pub trace: bool,
    /// Force sequential cell execution.
    pub serial: bool,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.server_counts.is_empty() || self.server_counts.contains(&0) {
            return cfg("at least one positive server count required".into());
        }
        if self.dispatchers == 0 {
            return cfg("at least one dispatcher required".into());
        }
        if self.rho_values.is_empty() {
            return cfg("at least one rho value required".into());
        }
        for &rho in &self.rho_values {
            if !(rho > 0.0 && rho < 1.0) {
                return cfg(format!("rho must lie in (0,1), got {rho}"));
            }
        }
        if self.policies.is_empty() {
            return cfg("at least one policy required".into());
        }
        for p in &self.policies {
            if !POLICY_NAMES.contains(&p.as_str()) {
                return Err(Error::UnknownPolicy(p.clone()));
            }
        }
        if self.seeds.is_empty() {
            return cfg("at least one seed required".into());
        }
        if self.rounds == 0 {
            return cfg("rounds must be ≥ 1".into());
        }
        if self.warmup_rounds >= self.rounds {
            return cfg("warmup must be smaller than rounds".into());
        }
        if let MuDist::Fixed { rates } = &self.mu_dist {
            for &n in &self.server_counts {
                if rates.len() != n {
                    return cfg(format!(
                        "fixed rate list has {} entries but n = {n}",
                        rates.len()
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Draw server rates for `(seed, n)` and split ρ·Σμ evenly over the
/// dispatchers.
pub fn build_cluster(
    n: usize,
    m: usize,
    mu_dist: &MuDist,
    rho: f64,
    seed: u64,
) -> Result<ClusterSpec> {
    let rates = match mu_dist {
        MuDist::Fixed { rates } => rates.clone(),
        MuDist::Uniform { lo, hi } => {
            let mut rng = RandomStreams::new(seed).cluster_rng();
            (0..n).map(|_| rng.gen_range(*lo..*hi)).collect()
        }
    };
    let total: f64 = rates.iter().sum();
    let lambdas = vec![rho * total / m as f64; m];
    ClusterSpec::new(rates, lambdas)
}

/// One (ρ, policy, seed) simulation cell.
#[derive(Debug, Clone)]
struct Cell {
    rho: f64,
    policy: String,
    seed: u64,
}

struct CellResult {
    cell: Cell,
    summary: Summary,
}

fn run_cell(spec: &ExperimentSpec, cell: Cell) -> Result<CellResult> {
    let n = spec.server_counts[0];
    let cluster = build_cluster(n, spec.dispatchers, &spec.mu_dist, cell.rho, cell.seed)?;
    let mut config = SimulationConfig::new(cluster, &cell.policy, spec.rounds, cell.seed);
    config.warmup_rounds = spec.warmup_rounds;
    let report = run_simulation(&config)?;
    Ok(CellResult {
        cell,
        summary: summarize(&report),
    })
}

fn run_cells(spec: &ExperimentSpec, cells: Vec<Cell>) -> Result<Vec<CellResult>> {
    #[cfg(feature = "parallel")]
    if !spec.serial {
        use rayon::prelude::*;
        return cells
            .into_par_iter()
            .map(|c| run_cell(spec, c))
            .collect();
    }
    run_cells_sequential(spec, cells)
}

fn run_cells_sequential(spec: &ExperimentSpec, cells: Vec<Cell>) -> Result<Vec<CellResult>> {
    cells.into_iter().map(|c| run_cell(spec, c)).collect()
}

/// Format with 9 significant digits, the CSV convention for all floats.
fn fmt9(x: f64) -> String {
    format!("{x:.8e}")
}

fn opt_u32(v: Option<u32>) -> String {
    v.map_or_else(|| "nan".into(), |x| x.to_string())
}

pub const SWEEP_HEADER: &str =
    "experiment,policy,seed,n,m,rho,mean_response,p95,p99,p999,p9999,time_avg_total_queue,completed_jobs";

fn result_row(spec: &ExperimentSpec, r: &CellResult) -> String {
    let n = spec.server_counts[0];
    let s = &r.summary;
    format!(
        "n{n}-m{m},{policy},{seed},{n},{m},{rho},{mean},{p95},{p99},{p999},{p9999},{queue},{jobs}",
        m = spec.dispatchers,
        policy = r.cell.policy,
        seed = r.cell.seed,
        rho = fmt9(r.cell.rho),
        mean = s.mean_response.map_or_else(|| "nan".into(), fmt9),
        p95 = opt_u32(s.p95),
        p99 = opt_u32(s.p99),
        p999 = opt_u32(s.p999),
        p9999 = opt_u32(s.p9999),
        queue = fmt9(s.time_avg_total_queue),
        jobs = s.completed_jobs,
    )
}

#[derive(Serialize)]
struct EffectiveConfig<'a> {
    spec: &'a ExperimentSpec,
    generator: &'static str,
    /// Drawn μ_s per seed for the first server count, so a run can be
    /// reconstructed exactly.
    drawn_rates: std::collections::BTreeMap<String, Vec<f64>>,
    timing_methodology: &'static str,
}

fn write_effective_config(spec: &ExperimentSpec) -> Result<()> {
    let mut drawn_rates = std::collections::BTreeMap::new();
    for &seed in &spec.seeds {
        let cluster = build_cluster(
            spec.server_counts[0],
            spec.dispatchers,
            &spec.mu_dist,
            spec.rho_values[0],
            seed,
        )?;
        drawn_rates.insert(format!("seed_{seed}"), cluster.server_rates().to_vec());
    }
    let effective = EffectiveConfig {
        spec,
        generator: GENERATOR_ID,
        drawn_rates,
        timing_methodology:
            "monotonic clock; each measured decision repeated once unmeasured first (cache warm); timing mode runs serial",
    };
    let text = toml::to_string_pretty(&effective)
        .map_err(|e| Error::Config(format!("config serialization failed: {e}")))?;
    fs::write(spec.out_dir.join("config_effective.toml"), text)?;
    Ok(())
}

/// Pool per-seed CCDFs into one curve, weighting by completion counts.
fn pool_ccdfs(summaries: &[&Summary]) -> Vec<(u32, f64)> {
    let max_tau = summaries
        .iter()
        .filter_map(|s| s.ccdf.last().map(|&(t, _)| t))
        .max()
        .unwrap_or(0);
    let total: f64 = summaries.iter().map(|s| s.completed_jobs as f64).sum();
    if total == 0.0 {
        return Vec::new();
    }
    (0..=max_tau)
        .map(|tau| {
            let mass: f64 = summaries
                .iter()
                .map(|s| {
                    let p = s
                        .ccdf
                        .get(tau as usize)
                        .map_or(0.0, |&(_, p)| p);
                    p * s.completed_jobs as f64
                })
                .sum();
            (tau, mass / total)
        })
        .collect()
}

/// Run the (ρ, policy, seed) grid and emit `sweep.csv`; in tail mode also
/// emit a pooled `ccdf_<policy>_<rho>.csv` per (policy, ρ).
pub fn run_sweep(spec: &ExperimentSpec) -> Result<()> {
    spec.validate()?;
    fs::create_dir_all(&spec.out_dir)?;
    let mut cells = Vec::new();
    for &rho in &spec.rho_values {
        for policy in &spec.policies {
            for &seed in &spec.seeds {
                cells.push(Cell {
                    rho,
                    policy: policy.clone(),
                    seed,
                });
            }
        }
    }
    let results = run_cells(spec, cells)?;

    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for r in &results {
        csv.push_str(&result_row(spec, r));
        csv.push('\n');
    }
    fs::write(spec.out_dir.join("sweep.csv"), csv)?;

    if spec.mode == Mode::Tail {
        for &rho in &spec.rho_values {
            for policy in &spec.policies {
                let group: Vec<&Summary> = results
                    .iter()
                    .filter(|r| r.cell.rho == rho && &r.cell.policy == policy)
                    .map(|r| &r.summary)
                    .collect();
                let mut csv = String::from("tau,ccdf\n");
                for (tau, p) in pool_ccdfs(&group) {
                    let _ = writeln!(csv, "{tau},{}", fmt9(p));
                }
                fs::write(
                    spec.out_dir.join(format!("ccdf_{policy}_{rho}.csv")),
                    csv,
                )?;
            }
        }
    }
    write_effective_config(spec)
}

/// Measure per-decision wall-clock times for one (cluster, policy) pair.
pub fn measure_decision_times(
    cluster: &ClusterSpec,
    policy: &str,
    rounds: u64,
    seed: u64,
) -> Result<Vec<Duration>> {
    let mut config = SimulationConfig::new(cluster.clone(), policy, rounds, seed);
    config.time_decisions = true;
    Ok(run_simulation(&config)?.decision_times)
}

pub fn median_duration(samples: &mut [Duration]) -> Duration {
    samples.sort_unstable();
    samples[samples.len() / 2]
}

/// Serial timing harness: for every policy and server count, record the
/// per-decision time CDF into `timing_<policy>_<n>.csv`.
pub fn run_timing(spec: &ExperimentSpec) -> Result<()> {
    spec.validate()?;
    fs::create_dir_all(&spec.out_dir)?;
    let rho = spec.rho_values[0];
    let seed = spec.seeds[0];
    for policy in &spec.policies {
        for &n in &spec.server_counts {
            let cluster = build_cluster(n, spec.dispatchers, &spec.mu_dist, rho, seed)?;
            let mut times = measure_decision_times(&cluster, policy, spec.rounds, seed)?;
            times.sort_unstable();
            let mut csv = String::from("duration_us,cdf\n");
            let count = times.len() as f64;
            for (i, t) in times.iter().enumerate() {
                let _ = writeln!(
                    csv,
                    "{},{}",
                    fmt9(t.as_secs_f64() * 1e6),
                    fmt9((i + 1) as f64 / count)
                );
            }
            fs::write(spec.out_dir.join(format!("timing_{policy}_{n}.csv")), csv)?;
        }
    }
    write_effective_config(spec)
}

/// One fully specified run; optionally dumps the per-round queue vectors.
pub fn run_single(spec: &ExperimentSpec) -> Result<()> {
    spec.validate()?;
    if spec.policies.len() != 1 || spec.rho_values.len() != 1 || spec.seeds.len() != 1 {
        return Err(Error::Config(
            "single mode takes exactly one policy, one rho, and one seed".into(),
        ));
    }
    fs::create_dir_all(&spec.out_dir)?;
    let n = spec.server_counts[0];
    let cluster = build_cluster(
        n,
        spec.dispatchers,
        &spec.mu_dist,
        spec.rho_values[0],
        spec.seeds[0],
    )?;
    let mut config = SimulationConfig::new(cluster, &spec.policies[0], spec.rounds, spec.seeds[0]);
    config.warmup_rounds = spec.warmup_rounds;
    config.record_trace = spec.trace;
    let report = run_simulation(&config)?;
    let summary = summarize(&report);
    let result = CellResult {
        cell: Cell {
            rho: spec.rho_values[0],
            policy: spec.policies[0].clone(),
            seed: spec.seeds[0],
        },
        summary,
    };
    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    csv.push_str(&result_row(spec, &result));
    csv.push('\n');
    fs::write(spec.out_dir.join("sweep.csv"), csv)?;

    if spec.trace {
        let mut csv = String::from("round");
        for s in 0..n {
            let _ = write!(csv, ",q{s}");
        }
        csv.push('\n');
        for (t, round) in report.trace.iter().enumerate() {
            let _ = write!(csv, "{t}");
            for q in &round.queue_lengths_end {
                let _ = write!(csv, ",{q}");
            }
            csv.push('\n');
        }
        fs::write(spec.out_dir.join("trace.csv"), csv)?;
    }
    write_effective_config(spec)
}

/// Entry point used by the binary.
pub fn run(spec: &ExperimentSpec) -> Result<()> {
    match spec.mode {
        Mode::Sweep | Mode::Tail => run_sweep(spec),
        Mode::Timing => run_timing(spec),
        Mode::Single => run_single(spec),
    }
}
