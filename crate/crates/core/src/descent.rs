//! The shared local-join iteration behind NN-Descent and both merges.
//!
//! Vertices are addressed by local index `0..m`; `ids[i]` gives the dataset
//! id used for distance evaluation. Each round:
//!
//! 1. splits every list into new and old entries and marks the new ones old,
//! 2. builds reverse new/old lists, each capped at `k` by uniform sampling,
//! 3. joins forward and reverse lists into per-vertex new/old neighborhoods,
//! 4. compares new×new and new×old pairs inside every neighborhood that the
//!    [`PairRule`] admits, offering each result to both endpoints' lists.
//!
//! Comparisons depend only on the neighborhoods fixed at the start of the
//! round, so candidate generation runs in parallel chunks and the resulting
//! updates are applied afterwards in vertex order. This gives the same lists
//! as applying every update immediately in a sequential sweep, independent of
//! the thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::graph::{cap_uniform, mix_seed, phi_exact, ExactSum, NeighborList};
use crate::metric::PairDistance;

/// Which pairs inside a neighborhood may be compared.
#[derive(Debug, Clone)]
pub(crate) enum PairRule {
    All,
    /// Only pairs whose endpoints lie on different sides.
    Cross(Vec<bool>),
    /// Every pair except those with both endpoints marked.
    NotBothMarked(Vec<bool>),
}

impl PairRule {
    #[inline]
    fn admits(&self, a: u32, b: u32) -> bool {
        match self {
            PairRule::All => true,
            PairRule::Cross(side) => side[a as usize] != side[b as usize],
            PairRule::NotBothMarked(marked) => !(marked[a as usize] && marked[b as usize]),
        }
    }
}

/// One row of the per-round log.
#[derive(Debug, Clone, Serialize)]
pub struct IterationStat {
    pub iteration: usize,
    /// Updates accepted into lists this round.
    pub updates: u64,
    /// Pairs compared this round.
    pub comparisons: u64,
    /// Sum of all list distances after the round.
    pub phi: f64,
    #[serde(skip)]
    pub phi_exact: ExactSum,
    /// Distance evaluations so far, including initialization.
    pub cumulative_evaluations: u64,
}

/// What a build or merge did.
#[derive(Debug, Clone, Default, Serialize)]
pub struct BuildReport {
    /// φ of the starting graph, before the first round.
    pub initial_phi: f64,
    #[serde(skip)]
    pub initial_phi_exact: ExactSum,
    pub iterations: Vec<IterationStat>,
    /// Distance evaluations performed by this call.
    pub evaluations: u64,
    /// Whether every list was full when the rounds started; φ is only
    /// guaranteed to fall monotonically in that case.
    pub lists_full: bool,
    /// Reports of the separate builds a composite run is made of, in order.
    /// Their evaluations are included in `evaluations`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<BuildReport>,
}

impl BuildReport {
    /// True when φ never rose and fell strictly in every round that accepted
    /// an update, here and in every stage. Vacuously true with no rounds.
    pub fn phi_monotone(&self) -> bool {
        if !self.stages.iter().all(BuildReport::phi_monotone) {
            return false;
        }
        let mut prev = self.initial_phi_exact;
        for it in &self.iterations {
            if it.phi_exact > prev || (it.updates > 0 && it.phi_exact >= prev) {
                return false;
            }
            prev = it.phi_exact;
        }
        true
    }

    pub fn final_phi(&self) -> f64 {
        match (self.iterations.last(), self.stages.last()) {
            (Some(it), _) => it.phi,
            (None, Some(st)) => st.final_phi(),
            (None, None) => self.initial_phi,
        }
    }

    /// Rounds run, counting every stage.
    pub fn rounds(&self) -> usize {
        self.iterations.len() + self.stages.iter().map(BuildReport::rounds).sum::<usize>()
    }

    /// Wraps consecutive builds into one composite report.
    pub(crate) fn composite(stages: Vec<BuildReport>) -> BuildReport {
        BuildReport {
            initial_phi: stages.first().map_or(0.0, |s| s.initial_phi),
            evaluations: stages.iter().map(|s| s.evaluations).sum(),
            lists_full: stages.iter().all(|s| s.lists_full),
            stages,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LoopParams {
    pub k: usize,
    pub max_iters: usize,
    pub min_update_fraction: f64,
    pub seed: u64,
}

// comparisons made, then proposed (vertex, neighbor, dist) updates
type JoinBatch = (u64, Vec<(u32, u32, f32)>);

const CHUNK: usize = 2048;

/// Runs local-join rounds on `lists` until the accepted-update count falls to
/// `min_update_fraction * m * k` or `max_iters` rounds have run.
pub(crate) fn iterate<D: PairDistance + ?Sized>(
    space: &D,
    ids: &[u32],
    lists: &mut [NeighborList],
    rule: &PairRule,
    params: LoopParams,
    report: &mut BuildReport,
) {
    let m = lists.len();
    let k = params.k;
    let stop_at = params.min_update_fraction * m as f64 * k as f64;
    report.lists_full = lists.iter().all(NeighborList::is_full);
    report.initial_phi_exact = phi_exact(lists);
    report.initial_phi = report.initial_phi_exact.to_f64();

    for iteration in 0..params.max_iters {
        let (new_nb, old_nb) = neighborhoods(lists, k, mix_seed(params.seed, iteration as u64));

        let mut updates = 0u64;
        let mut comparisons = 0u64;
        let mut start = 0;
        while start < m {
            let end = (start + CHUNK).min(m);
            let snapshot: &[NeighborList] = lists;
            let batches: Vec<JoinBatch> = (start..end)
                .into_par_iter()
                .map(|v| join_one(space, ids, snapshot, rule, &new_nb[v], &old_nb[v]))
                .collect();
            for (count, batch) in batches {
                comparisons += count;
                for (a, b, d) in batch {
                    if lists[a as usize].update(b, d) {
                        updates += 1;
                    }
                }
            }
            start = end;
        }

        report.evaluations += comparisons;
        let phi = phi_exact(lists);
        let stat = IterationStat {
            iteration,
            updates,
            comparisons,
            phi: phi.to_f64(),
            phi_exact: phi,
            cumulative_evaluations: report.evaluations,
        };
        log::debug!(
            "iteration {} updates {} phi {:.6} evaluations {}",
            stat.iteration,
            stat.updates,
            stat.phi,
            stat.cumulative_evaluations
        );
        report.iterations.push(stat);
        if updates as f64 <= stop_at {
            break;
        }
    }
}

/// Compares one neighborhood; returns the pair count and the updates that can
/// still be accepted given the lists' current thresholds.
fn join_one<D: PairDistance + ?Sized>(
    space: &D,
    ids: &[u32],
    lists: &[NeighborList],
    rule: &PairRule,
    new: &[u32],
    old: &[u32],
) -> (u64, Vec<(u32, u32, f32)>) {
    let mut out = Vec::new();
    let mut count = 0u64;
    let mut consider = |a: u32, b: u32, out: &mut Vec<(u32, u32, f32)>| {
        if !rule.admits(a, b) {
            return;
        }
        count += 1;
        let d = space.distance(ids[a as usize], ids[b as usize]);
        // A stale threshold is never below the live one, so filtering here
        // drops only offers that `update` would reject anyway.
        if d < lists[a as usize].threshold() {
            out.push((a, b, d));
        }
        if d < lists[b as usize].threshold() {
            out.push((b, a, d));
        }
    };
    for (i, &a) in new.iter().enumerate() {
        for &b in &new[i + 1..] {
            consider(a, b, &mut out);
        }
        for &b in old {
            consider(a, b, &mut out);
        }
    }
    (count, out)
}

/// Per-vertex new and old neighborhoods (forward ∪ capped reverse); clears
/// the new flag of every forward entry.
fn neighborhoods(lists: &mut [NeighborList], k: usize, seed: u64) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    let m = lists.len();
    let mut new_nb: Vec<Vec<u32>> = vec![Vec::new(); m];
    let mut old_nb: Vec<Vec<u32>> = vec![Vec::new(); m];
    let mut rev_new: Vec<Vec<u32>> = vec![Vec::new(); m];
    let mut rev_old: Vec<Vec<u32>> = vec![Vec::new(); m];
    for (v, list) in lists.iter_mut().enumerate() {
        for e in list.entries_mut() {
            if e.is_new {
                new_nb[v].push(e.id);
                rev_new[e.id as usize].push(v as u32);
                e.is_new = false;
            } else {
                old_nb[v].push(e.id);
                rev_old[e.id as usize].push(v as u32);
            }
        }
    }
    new_nb
        .par_iter_mut()
        .zip(old_nb.par_iter_mut())
        .zip(rev_new.par_iter_mut().zip(rev_old.par_iter_mut()))
        .enumerate()
        .for_each(|(v, ((new, old), (rnew, rold)))| {
            cap_uniform(rnew, k, seed, 2 * v as u64);
            cap_uniform(rold, k, seed, 2 * v as u64 + 1);
            new.extend_from_slice(rnew);
            new.sort_unstable();
            new.dedup();
            old.extend_from_slice(rold);
            old.sort_unstable();
            old.dedup();
            old.retain(|x| new.binary_search(x).is_err());
        });
    (new_nb, old_nb)
}
