//! Ideal workload (IWL) and ideally balanced assignment (IBA).
//!
//! The IWL is the value of the continuous max-min fill
//! `max min_s (q_s + ā_s)/μ_s` subject to `Σ ā_s = a`, `ā_s ≥ 0`,
//! computed by water-filling the least-loaded servers upward. Given the
//! servers pre-sorted by `q_s/μ_s` the computation is O(n).

use crate::{Error, Result};

/// Round-start view of the system handed to the water-filling step:
/// queue lengths, rates, and the (possibly estimated) total arrivals `a`.
#[derive(Debug, Clone)]
pub struct LoadSnapshot {
    pub queue_lengths: Vec<u64>,
    pub rates: Vec<f64>,
    pub total_arrivals: f64,
}

impl LoadSnapshot {
    pub fn new(queue_lengths: Vec<u64>, rates: Vec<f64>, total_arrivals: f64) -> Self {
        debug_assert_eq!(queue_lengths.len(), rates.len());
        debug_assert!(total_arrivals >= 0.0);
        Self {
            queue_lengths,
            rates,
            total_arrivals,
        }
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Normalized load q_s/μ_s of server `s`.
    pub fn load(&self, s: usize) -> f64 {
        self.queue_lengths[s] as f64 / self.rates[s]
    }
}

/// The water level (`iwl`, in expected rounds of work) together with the
/// continuous per-server work vector `ā_s` it induces.
#[derive(Debug, Clone)]
pub struct IdealAssignment {
    pub iwl: f64,
    pub per_server_work: Vec<f64>,
}

/// Server indices sorted by `q_s/μ_s` non-decreasing, ties by index.
pub fn order_by_load(snapshot: &LoadSnapshot) -> Vec<usize> {
    sort_indices_by_key((0..snapshot.len()).map(|s| snapshot.load(s)).collect())
}

/// Sort indices by precomputed non-negative keys, ties by index. Each key
/// is mapped to its IEEE-754 bit pattern (order-preserving for values
/// ≥ 0); the top 32 key bits are packed with the index into one u64 so
/// the hot sort runs on plain integers in half the footprint of a
/// full-key pairing — 4096 servers fit in L1 — and comparator-side float
/// recomputation is avoided. Truncating to 32 key bits can merge nearby
/// keys, so runs sharing those bits are re-sorted by the exact key; the
/// runs arrive index-ascending and the refinement is stable, which
/// preserves tie-by-index.
pub(crate) fn sort_indices_by_key(keys: Vec<f64>) -> Vec<usize> {
    debug_assert!(keys.iter().all(|k| k.is_finite() && *k >= 0.0));
    debug_assert!(keys.len() <= u32::MAX as usize);
    let mut keyed: Vec<u64> = keys
        .iter()
        .zip(0..)
        .map(|(k, s): (&f64, u64)| (k.to_bits() & 0xffff_ffff_0000_0000) | s)
        .collect();
    keyed.sort_unstable();
    let mut i = 0;
    while i < keyed.len() {
        let hi = keyed[i] >> 32;
        let mut j = i + 1;
        while j < keyed.len() && keyed[j] >> 32 == hi {
            j += 1;
        }
        if j - i > 1 {
            keyed[i..j].sort_by_key(|&p| keys[p as u32 as usize].to_bits());
        }
        i = j;
    }
    keyed.into_iter().map(|k| k as u32 as usize).collect()
}

/// Water-fill the servers (visited in the supplied `q/μ` order) until the
/// arriving work `a` is exhausted; returns the resulting common load level.
pub fn compute_ideal_workload(snapshot: &LoadSnapshot, order: &[usize]) -> Result<f64> {
    Ok(compute_ideal_workload_counted(snapshot, order)?.0)
}

/// Same as [`compute_ideal_workload`] but also reports the number of loop
/// iterations, used by tests to pin the O(n) bound.
pub fn compute_ideal_workload_counted(
    snapshot: &LoadSnapshot,
    order: &[usize],
) -> Result<(f64, usize)> {
    if snapshot.is_empty() {
        return Err(Error::EmptyServerSet);
    }
    debug_assert_eq!(order.len(), snapshot.len());
    let mut ops = 0usize;

    let mut iwl = snapshot.load(order[0]);
    let mut filled = snapshot.total_arrivals;
    if filled <= 0.0 {
        return Ok((iwl, ops));
    }
    let mut mu_tot = 0.0;
    let mut next = 0usize;
    loop {
        ops += 1;
        mu_tot += snapshot.rates[order[next]];
        next += 1;
        if next == order.len() {
            return Ok((iwl + filled / mu_tot, ops));
        }
        let delta = snapshot.load(order[next]) - iwl;
        if delta * mu_tot >= filled {
            return Ok((iwl + filled / mu_tot, ops));
        }
        filled -= delta * mu_tot;
        iwl += delta;
    }
}

/// Materialize the IBA from the IWL: `ā_s = μ_s·max{q_s/μ_s, iwl} − q_s`.
pub fn compute_iba(snapshot: &LoadSnapshot, iwl: f64) -> IdealAssignment {
    let per_server_work = (0..snapshot.len())
        .map(|s| {
            // branch instead of computing μ_s·max{q_s/μ_s, iwl} − q_s
            // directly: the untouched case must be exactly zero, not a
            // μ_s·(q_s/μ_s) − q_s rounding residue
            if snapshot.load(s) >= iwl {
                0.0
            } else {
                (snapshot.rates[s] * iwl - snapshot.queue_lengths[s] as f64).max(0.0)
            }
        })
        .collect();
    IdealAssignment {
        iwl,
        per_server_work,
    }
}

/// Convenience wrapper: sort, water-fill, materialize.
pub fn ideal_assignment(snapshot: &LoadSnapshot) -> Result<IdealAssignment> {
    let order = order_by_load(snapshot);
    let iwl = compute_ideal_workload(snapshot, &order)?;
    Ok(compute_iba(snapshot, iwl))
}
