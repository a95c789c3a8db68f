//! Solvers for the simplex-constrained quadratic program that yields the
//! optimal dispatch probabilities.
//!
//! The program minimizes
//!
//! ```text
//! f(P) = (a−1) Σ p_s²/μ_s + Σ (2(q_s − μ_s·iwl) + 1)/μ_s · p_s
//! s.t.  Σ p_s = 1,  p_s ≥ 0
//! ```
//!
//! The optimal support ("probable set") is always a prefix of the servers
//! sorted by `(2q_s+1)/μ_s`, which reduces the active-set search from 2ⁿ
//! subsets to n prefixes. Three routes are provided: a per-prefix O(n²)
//! scan, an incremental O(n)-given-the-order scan, and a 2ⁿ brute-force
//! oracle used only in tests. The `a = 1` case degenerates to a linear
//! objective solved by inspection.

use crate::core::ProbabilityVector;
use crate::{Error, Result};

/// One QP instance: round-start queues, rates, (estimated) total arrivals
/// `a ≥ 1`, and the matching water level.
#[derive(Debug, Clone)]
pub struct QpInstance {
    pub queue_lengths: Vec<u64>,
    pub rates: Vec<f64>,
    pub total_arrivals: f64,
    pub iwl: f64,
}

impl QpInstance {
    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// The sort key (2q_s+1)/μ_s that orders the probable set.
    pub fn ratio(&self, s: usize) -> f64 {
        (2.0 * self.queue_lengths[s] as f64 + 1.0) / self.rates[s]
    }

    /// Numerator of the stationarity expression for p_s at multiplier Λ₀:
    /// −2(q_s − μ_s·iwl) − 1 − μ_s·Λ₀.
    fn prob_numerator(&self, s: usize, lambda0: f64) -> f64 {
        -2.0 * (self.queue_lengths[s] as f64 - self.rates[s] * self.iwl) - 1.0
            - self.rates[s] * lambda0
    }

    fn prob_at(&self, s: usize, lambda0: f64) -> f64 {
        self.prob_numerator(s, lambda0) / (2.0 * (self.total_arrivals - 1.0))
    }
}

/// Server indices sorted by (2q_s+1)/μ_s non-decreasing, ties by index.
pub fn order_by_ratio(instance: &QpInstance) -> Vec<usize> {
    crate::balance::sort_indices_by_key((0..instance.len()).map(|s| instance.ratio(s)).collect())
}

/// Solver output: probabilities, the equality multiplier Λ₀, the probable
/// set size |S⁺|, and the objective value f(P).
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub probs: ProbabilityVector,
    pub lambda0: f64,
    pub probable_set_size: usize,
    pub objective: f64,
}

const A_ONE_TOL: f64 = 1e-9;

fn feasibility_slack(lambda0: f64) -> f64 {
    1e-12 * lambda0.abs().max(1.0)
}

/// The a = 1 degenerate case: the objective is linear, so all mass goes to
/// the servers minimizing (2q_s+1)/μ_s. Ties broken by lowest index.
pub fn single_arrival_probabilities(instance: &QpInstance) -> Result<ProbabilityVector> {
    if (instance.total_arrivals - 1.0).abs() > A_ONE_TOL {
        return Err(Error::Contract(format!(
            "single_arrival_probabilities requires a = 1, got {}",
            instance.total_arrivals
        )));
    }
    if instance.is_empty() {
        return Err(Error::EmptyServerSet);
    }
    let best = (0..instance.len())
        .min_by(|&a, &b| {
            instance
                .ratio(a)
                .partial_cmp(&instance.ratio(b))
                .expect("ratios are finite")
        })
        .expect("non-empty");
    let mut probs = vec![0.0; instance.len()];
    probs[best] = 1.0;
    ProbabilityVector::new(probs)
}

fn require_a_above_one(instance: &QpInstance) -> Result<()> {
    if instance.total_arrivals <= 1.0 + A_ONE_TOL {
        return Err(Error::Contract(format!(
            "solver requires a > 1, got {}",
            instance.total_arrivals
        )));
    }
    if instance.is_empty() {
        return Err(Error::EmptyServerSet);
    }
    Ok(())
}

/// Shared incremental Λ₀ accumulator over growing prefixes.
struct Lambda0Acc {
    numerator: f64,
    denominator: f64,
}

impl Lambda0Acc {
    fn new(a: f64) -> Self {
        Self {
            numerator: -2.0 * (a - 1.0),
            denominator: 0.0,
        }
    }

    fn push(&mut self, instance: &QpInstance, s: usize) -> f64 {
        self.numerator +=
            2.0 * (instance.rates[s] * instance.iwl - instance.queue_lengths[s] as f64) - 1.0;
        self.denominator += instance.rates[s];
        self.numerator / self.denominator
    }
}

fn materialize(instance: &QpInstance, lambda0: f64, objective: f64) -> Result<QpSolution> {
    // one shared division; a per-server divide is measurably slower
    let inv = 1.0 / (2.0 * (instance.total_arrivals - 1.0));
    let probs: Vec<f64> = (0..instance.len())
        .map(|s| (instance.prob_numerator(s, lambda0) * inv).max(0.0))
        .collect();
    let probable_set_size = probs.iter().filter(|&&p| p > 0.0).count();
    Ok(QpSolution {
        probs: ProbabilityVector::new(probs)?,
        lambda0,
        probable_set_size,
        objective,
    })
}

/// Prefix scan with per-prefix re-evaluation: O(n²) overall. Every prefix
/// gets Λ₀ from the simplex equality, is rejected if any in-prefix
/// probability is negative, and is scored by direct evaluation of f(P).
pub fn solve_quadratic(instance: &QpInstance, order: &[usize]) -> Result<QpSolution> {
    require_a_above_one(instance)?;
    debug_assert_eq!(order.len(), instance.len());
    let a = instance.total_arrivals;

    let mut acc = Lambda0Acc::new(a);
    let mut best: Option<(f64, f64)> = None; // (objective, lambda0)
    for j in 1..=order.len() {
        let lambda0 = acc.push(instance, order[j - 1]);
        let slack = feasibility_slack(lambda0);
        let feasible = order[..j].iter().all(|&s| {
            // numerator ≥ −μ_s·slack  ⇔  p_s ≥ 0 up to rounding
            instance.prob_numerator(s, lambda0) >= -instance.rates[s] * slack
        });
        if !feasible {
            continue;
        }
        let mut val = 0.0;
        for &s in &order[..j] {
            let p = instance.prob_at(s, lambda0).max(0.0);
            val += (a - 1.0) * p * p / instance.rates[s]
                + (2.0 * (instance.queue_lengths[s] as f64 - instance.rates[s] * instance.iwl)
                    + 1.0)
                    / instance.rates[s]
                    * p;
        }
        if best.map_or(true, |(v, _)| val < v) {
            best = Some((val, lambda0));
        }
    }
    let (objective, lambda0) =
        best.ok_or_else(|| Error::Numeric("no feasible prefix found".into()))?;
    materialize(instance, lambda0, objective)
}

/// Incremental prefix scan: O(n) given the order.
///
/// Per prefix it performs O(1) work: Λ₀ via running numerator/denominator
/// sums, feasibility via the single test `2·iwl − (2q_r+1)/μ_r ≥ Λ₀` on the
/// last-added server r (the prefix member with the largest ratio), and the
/// objective via the closed form `f = Λ₀²·v₁ − v₂` with running sums
/// v₁ = Σ μ_s/(4(a−1)) and v₂ = Σ (2(q_s−μ_s·iwl)+1)²/(4μ_s(a−1)).
pub fn solve_loglinear(instance: &QpInstance, order: &[usize]) -> Result<QpSolution> {
    Ok(solve_loglinear_counted(instance, order)?.0)
}

/// [`solve_loglinear`] plus an iteration counter for complexity tests.
pub fn solve_loglinear_counted(
    instance: &QpInstance,
    order: &[usize],
) -> Result<(QpSolution, usize)> {
    require_a_above_one(instance)?;
    debug_assert_eq!(order.len(), instance.len());
    let a = instance.total_arrivals;

    let inv4 = 1.0 / (4.0 * (a - 1.0));
    let mut num_acc = -2.0 * (a - 1.0);
    let mut den_acc = 0.0;
    let mut v1 = 0.0;
    let mut v2 = 0.0;
    let mut best: Option<(f64, f64)> = None;
    let mut ops = 0usize;
    for &r in order {
        ops += 1;
        let mu = instance.rates[r];
        // num = 2(q_r − μ_r·iwl) + 1 feeds Λ₀, v2, and feasibility alike
        let num = 2.0 * (instance.queue_lengths[r] as f64 - mu * instance.iwl) + 1.0;
        num_acc -= num;
        den_acc += mu;
        let lambda0 = num_acc / den_acc;
        // v1/v2 always track the full current prefix, including prefixes
        // whose marginal server fails the feasibility test below.
        v1 += mu * inv4;
        v2 += num * num * inv4 / mu;
        // 2·iwl − (2q_r+1)/μ_r ≥ Λ₀ − slack, multiplied through by μ_r > 0
        if -num < (lambda0 - feasibility_slack(lambda0)) * mu {
            continue;
        }
        let val = lambda0 * lambda0 * v1 - v2;
        if best.map_or(true, |(v, _)| val < v) {
            best = Some((val, lambda0));
        }
    }
    let (objective, lambda0) =
        best.ok_or_else(|| Error::Numeric("no feasible prefix found".into()))?;
    Ok((materialize(instance, lambda0, objective)?, ops))
}

/// Exhaustive 2ⁿ subset search. Test oracle only; refuses n > 20.
pub fn brute_force_probabilities(instance: &QpInstance) -> Result<QpSolution> {
    Ok(brute_force_with_support(instance)?.0)
}

/// [`brute_force_probabilities`] plus the winning subset, so tests can
/// check the prefix-support structure directly.
pub fn brute_force_with_support(instance: &QpInstance) -> Result<(QpSolution, Vec<usize>)> {
    require_a_above_one(instance)?;
    let n = instance.len();
    if n > 20 {
        return Err(Error::Contract(format!("brute force refused for n = {n}")));
    }
    let a = instance.total_arrivals;
    let mut best: Option<(f64, f64, u32)> = None; // (objective, lambda0, mask)
    for mask in 1u32..(1 << n) {
        let mut num = -2.0 * (a - 1.0);
        let mut den = 0.0;
        for s in 0..n {
            if mask & (1 << s) != 0 {
                num += 2.0
                    * (instance.rates[s] * instance.iwl - instance.queue_lengths[s] as f64)
                    - 1.0;
                den += instance.rates[s];
            }
        }
        let lambda0 = num / den;
        let slack = feasibility_slack(lambda0);
        let mut val = 0.0;
        let mut feasible = true;
        for s in 0..n {
            if mask & (1 << s) == 0 {
                continue;
            }
            if instance.prob_numerator(s, lambda0) < -instance.rates[s] * slack {
                feasible = false;
                break;
            }
            let p = instance.prob_at(s, lambda0).max(0.0);
            val += (a - 1.0) * p * p / instance.rates[s]
                + (2.0 * (instance.queue_lengths[s] as f64 - instance.rates[s] * instance.iwl)
                    + 1.0)
                    / instance.rates[s]
                    * p;
        }
        if feasible && best.map_or(true, |(v, _, _)| val < v) {
            best = Some((val, lambda0, mask));
        }
    }
    let (objective, lambda0, mask) =
        best.ok_or_else(|| Error::Numeric("no feasible subset found".into()))?;
    let support = (0..n).filter(|s| mask & (1 << s) != 0).collect();
    Ok((materialize(instance, lambda0, objective)?, support))
}

/// Direct evaluation of f(P).
pub fn objective_value(instance: &QpInstance, probs: &ProbabilityVector) -> f64 {
    let a = instance.total_arrivals;
    probs
        .as_slice()
        .iter()
        .enumerate()
        .map(|(s, &p)| {
            (a - 1.0) * p * p / instance.rates[s]
                + (2.0 * (instance.queue_lengths[s] as f64 - instance.rates[s] * instance.iwl)
                    + 1.0)
                    / instance.rates[s]
                    * p
        })
        .sum()
}

/// KKT diagnostics for a candidate solution.
#[derive(Debug, Clone)]
pub struct KktReport {
    pub ok: bool,
    /// max |∂L/∂p_s| over supported servers (Λ_s = 0 there).
    pub stationarity_violation: f64,
    /// most negative implied multiplier Λ_s off support (should be ≥ 0).
    pub dual_violation: f64,
    /// |Σ p_s − 1|.
    pub primal_gap: f64,
    pub min_prob: f64,
}

/// Check stationarity, primal feasibility, dual feasibility, and
/// complementary slackness at the given solution, within `tol`.
pub fn verify_kkt(instance: &QpInstance, solution: &QpSolution, tol: f64) -> KktReport {
    let a = instance.total_arrivals;
    let probs = solution.probs.as_slice();
    let mut stationarity_violation: f64 = 0.0;
    let mut dual_violation: f64 = 0.0;
    let mut min_prob = f64::INFINITY;
    for (s, &p) in probs.iter().enumerate() {
        min_prob = min_prob.min(p);
        // gradient of the Lagrangian at Λ_s = 0
        let grad = 2.0 * (a - 1.0) * p / instance.rates[s]
            + (2.0 * (instance.queue_lengths[s] as f64 - instance.rates[s] * instance.iwl) + 1.0)
                / instance.rates[s]
            + solution.lambda0;
        if p > tol {
            // supported: complementary slackness forces Λ_s = 0
            stationarity_violation = stationarity_violation.max(grad.abs());
        } else {
            // off support: Λ_s = grad must be dual-feasible
            dual_violation = dual_violation.min(grad);
        }
    }
    let primal_gap = (probs.iter().sum::<f64>() - 1.0).abs();
    let ok = stationarity_violation <= tol
        && dual_violation >= -tol
        && primal_gap <= tol
        && min_prob >= -tol;
    KktReport {
        ok,
        stationarity_violation,
        dual_violation,
        primal_gap,
        min_prob,
    }
}

/// Solve for dispatch probabilities, routing near-degenerate arrival counts
/// (a ≤ 1 + 1e-9) to the linear a = 1 case.
pub fn dispatch_probabilities(instance: &QpInstance, quadratic: bool) -> Result<ProbabilityVector> {
    if instance.total_arrivals <= 1.0 + A_ONE_TOL {
        let unit = QpInstance {
            total_arrivals: 1.0,
            ..instance.clone()
        };
        return single_arrival_probabilities(&unit);
    }
    let order = order_by_ratio(instance);
    let solution = if quadratic {
        solve_quadratic(instance, &order)?
    } else {
        solve_loglinear(instance, &order)?
    };
    Ok(solution.probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::{compute_ideal_workload, order_by_load, LoadSnapshot};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn instance(q: &[u64], mu: &[f64], a: f64) -> QpInstance {
        let snap = LoadSnapshot::new(q.to_vec(), mu.to_vec(), a);
        let iwl = compute_ideal_workload(&snap, &order_by_load(&snap)).unwrap();
        QpInstance {
            queue_lengths: q.to_vec(),
            rates: mu.to_vec(),
            total_arrivals: a,
            iwl,
        }
    }

    pub(crate) fn random_instance(rng: &mut ChaCha8Rng, max_n: usize) -> QpInstance {
        let n = rng.gen_range(1..=max_n);
        let q: Vec<u64> = (0..n).map(|_| rng.gen_range(0..=50)).collect();
        let mu: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-2..100.0)).collect();
        let a = rng.gen_range(2.0..20.0);
        instance(&q, &mu, a)
    }

    fn fig2_instance() -> QpInstance {
        let mut mu = vec![1.0; 9];
        mu[0] = 10.0;
        let mut q = vec![0u64; 9];
        q[0] = 9;
        instance(&q, &mu, 7.0)
    }

    #[test]
    fn single_arrival_prefers_min_ratio() {
        let inst = instance(&[0, 5], &[1.0, 1.0], 1.0);
        assert_eq!(
            single_arrival_probabilities(&inst).unwrap().as_slice(),
            &[1.0, 0.0]
        );
        // faster empty server wins
        let inst = instance(&[0, 0], &[2.0, 1.0], 1.0);
        assert_eq!(
            single_arrival_probabilities(&inst).unwrap().as_slice(),
            &[1.0, 0.0]
        );
        // symmetric tie: first index
        let inst = instance(&[1, 1], &[1.0, 1.0], 1.0);
        assert_eq!(
            single_arrival_probabilities(&inst).unwrap().as_slice(),
            &[1.0, 0.0]
        );
    }

    #[test]
    fn single_arrival_rejects_a_above_one() {
        let inst = instance(&[0], &[1.0], 2.0);
        assert!(single_arrival_probabilities(&inst).is_err());
    }

    #[test]
    fn fig2_solution() {
        // One μ=10 server holding 9 jobs, 8 empty μ=1 servers, a=7.
        // Brute force confirms the fast server keeps probability 2/9 even
        // though its load exceeds the water level.
        let inst = fig2_instance();
        assert!((inst.iwl - 0.875).abs() < 1e-12);
        let oracle = brute_force_probabilities(&inst).unwrap();
        assert!((oracle.probs.as_slice()[0] - 2.0 / 9.0).abs() < 1e-9);
        for s in 1..9 {
            assert!((oracle.probs.as_slice()[s] - 7.0 / 72.0).abs() < 1e-9);
        }
        let order = order_by_ratio(&inst);
        let fast = solve_loglinear(&inst, &order).unwrap();
        let quad = solve_quadratic(&inst, &order).unwrap();
        assert_eq!(fast.probs.as_slice(), quad.probs.as_slice());
        assert!((fast.probs.as_slice()[0] - oracle.probs.as_slice()[0]).abs() < 1e-9);
        assert!((fast.objective - oracle.objective).abs() < 1e-9);
        assert_eq!(fast.probable_set_size, 9);
        // a server above the IWL is in the probable set
        assert!(inst.queue_lengths[0] as f64 / inst.rates[0] > inst.iwl);
        assert!(fast.probs.as_slice()[0] > 0.0);
    }

    #[test]
    fn symmetric_split() {
        let inst = instance(&[0, 0], &[1.0, 1.0], 2.0);
        let order = order_by_ratio(&inst);
        let sol = solve_quadratic(&inst, &order).unwrap();
        assert!((sol.probs.as_slice()[0] - 0.5).abs() < 1e-12);
        assert!((sol.probs.as_slice()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_server_gets_everything() {
        let inst = instance(&[42], &[3.0], 8.0);
        let order = order_by_ratio(&inst);
        for sol in [
            solve_loglinear(&inst, &order).unwrap(),
            solve_quadratic(&inst, &order).unwrap(),
        ] {
            assert_eq!(sol.probs.as_slice(), &[1.0]);
            assert_eq!(sol.probable_set_size, 1);
        }
    }

    #[test]
    fn solvers_match_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..300 {
            let inst = random_instance(&mut rng, 10);
            let order = order_by_ratio(&inst);
            let oracle = brute_force_probabilities(&inst).unwrap();
            for sol in [
                solve_quadratic(&inst, &order).unwrap(),
                solve_loglinear(&inst, &order).unwrap(),
            ] {
                let rel = (sol.objective - oracle.objective).abs()
                    / oracle.objective.abs().max(1e-30);
                assert!(rel < 1e-9 || (sol.objective - oracle.objective).abs() < 1e-9);
                for (p, o) in sol.probs.as_slice().iter().zip(oracle.probs.as_slice()) {
                    assert!((p - o).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn oracle_support_is_a_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        for _ in 0..2000 {
            let inst = random_instance(&mut rng, 8);
            let (sol, support) = brute_force_with_support(&inst).unwrap();
            let order = order_by_ratio(&inst);
            // every strictly positive server precedes every zero server in
            // the ratio order
            let probs = sol.probs.as_slice();
            let max_pos_ratio = probs
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 1e-12)
                .map(|(s, _)| inst.ratio(s))
                .fold(f64::NEG_INFINITY, f64::max);
            for (s, &p) in probs.iter().enumerate() {
                if p <= 1e-12 {
                    assert!(
                        inst.ratio(s) >= max_pos_ratio - 1e-9,
                        "zero-prob server {s} below a positive one"
                    );
                }
            }
            // and the winning subset itself is a prefix of the order
            let in_support: Vec<bool> = {
                let mut v = vec![false; inst.len()];
                for &s in &support {
                    v[s] = true;
                }
                v
            };
            let mut seen_out = false;
            for &s in &order {
                if in_support[s] {
                    assert!(
                        !seen_out || (inst.ratio(s) - max_pos_ratio).abs() < 1e-9,
                        "support not a prefix"
                    );
                } else {
                    seen_out = true;
                }
            }
        }
    }

    #[test]
    fn homogeneous_support_matches_below_iwl_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        for _ in 0..200 {
            let n = rng.gen_range(2..=10);
            let mu = vec![rng.gen_range(0.5..5.0); n];
            let q: Vec<u64> = (0..n).map(|_| rng.gen_range(0..=10)).collect();
            let a = rng.gen_range(2.0..20.0);
            let inst = instance(&q, &mu, a);
            let order = order_by_ratio(&inst);
            let sol = solve_loglinear(&inst, &order).unwrap();
            let below: Vec<usize> = (0..n)
                .filter(|&s| (q[s] as f64 / mu[s]) < inst.iwl - 1e-12)
                .collect();
            let support: Vec<usize> = sol
                .probs
                .as_slice()
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 1e-12)
                .map(|(s, _)| s)
                .collect();
            // With equal rates, whenever the below-IWL prefix is the chosen
            // one it must equal the support exactly.
            if support.len() == below.len() {
                assert_eq!(support, below);
            }
        }
    }

    #[test]
    fn loglinear_and_quadratic_agree_at_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        for _ in 0..100 {
            let n = rng.gen_range(1..=500);
            let q: Vec<u64> = (0..n).map(|_| rng.gen_range(0..=50)).collect();
            let mu: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-2..100.0)).collect();
            let a = rng.gen_range(2.0..20.0);
            let inst = instance(&q, &mu, a);
            let order = order_by_ratio(&inst);
            let fast = solve_loglinear(&inst, &order).unwrap();
            let quad = solve_quadratic(&inst, &order).unwrap();
            assert!((fast.objective - quad.objective).abs() < 1e-9);
            for (p, o) in fast.probs.as_slice().iter().zip(quad.probs.as_slice()) {
                assert!((p - o).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn loglinear_work_is_linear() {
        for n in [100usize, 1000] {
            let q: Vec<u64> = (0..n as u64).map(|i| i % 13).collect();
            let mu: Vec<f64> = (0..n).map(|i| 1.0 + (i % 5) as f64).collect();
            let inst = instance(&q, &mu, 10.0);
            let order = order_by_ratio(&inst);
            let (_, ops) = solve_loglinear_counted(&inst, &order).unwrap();
            assert_eq!(ops, n);
        }
    }

    #[test]
    fn objective_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(505);
        for _ in 0..200 {
            let inst = random_instance(&mut rng, 10);
            let order = order_by_ratio(&inst);
            let sol = solve_loglinear(&inst, &order).unwrap();
            let direct = objective_value(&inst, &sol.probs);
            assert!(
                (direct - sol.objective).abs() < 1e-9 * sol.objective.abs().max(1.0),
                "direct {direct} vs lemma {lemma}",
                lemma = sol.objective
            );
        }
    }

    #[test]
    fn solver_beats_random_simplex_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(606);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, 8);
            let order = order_by_ratio(&inst);
            let sol = solve_loglinear(&inst, &order).unwrap();
            for _ in 0..10_000 {
                let raw: Vec<f64> = (0..inst.len())
                    .map(|_| -rng.gen::<f64>().max(1e-300).ln())
                    .collect();
                let sum: f64 = raw.iter().sum();
                let point =
                    ProbabilityVector::new(raw.iter().map(|x| x / sum).collect()).unwrap();
                assert!(objective_value(&inst, &point) >= sol.objective - 1e-9);
            }
        }
    }

    #[test]
    fn kkt_accepts_solver_output_and_rejects_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(707);
        for _ in 0..100 {
            let inst = random_instance(&mut rng, 10);
            let order = order_by_ratio(&inst);
            let sol = solve_loglinear(&inst, &order).unwrap();
            assert!(verify_kkt(&inst, &sol, 1e-8).ok);

            if sol.probable_set_size < 2 {
                // a lone supported server renormalizes back to itself
                continue;
            }
            // bump one supported probability by 0.01 and renormalize
            let mut probs = sol.probs.as_slice().to_vec();
            let supported = probs.iter().position(|&p| p > 0.01).unwrap_or(0);
            probs[supported] += 0.01;
            let sum: f64 = probs.iter().sum();
            for p in probs.iter_mut() {
                *p /= sum;
            }
            let perturbed = QpSolution {
                probs: ProbabilityVector::new(probs).unwrap(),
                lambda0: sol.lambda0,
                probable_set_size: sol.probable_set_size,
                objective: sol.objective,
            };
            assert!(!verify_kkt(&inst, &perturbed, 1e-8).ok);
        }
    }

    #[test]
    fn kkt_rejects_uniform_on_asymmetric_instance() {
        let inst = fig2_instance();
        let n = inst.len();
        let uniform = QpSolution {
            probs: ProbabilityVector::new(vec![1.0 / n as f64; n]).unwrap(),
            lambda0: 0.0,
            probable_set_size: n,
            objective: 0.0,
        };
        assert!(!verify_kkt(&inst, &uniform, 1e-8).ok);
    }

    #[test]
    fn dispatch_probabilities_routes_degenerate_a() {
        let inst = instance(&[0, 5], &[1.0, 1.0], 1.0);
        let p = dispatch_probabilities(&inst, false).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 0.0]);
        let mut nearly_one = inst.clone();
        nearly_one.total_arrivals = 1.0 + 5e-10;
        let p = dispatch_probabilities(&nearly_one, false).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 0.0]);
    }
}
