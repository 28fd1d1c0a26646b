//! Graph builders: exact brute force and NN-Descent.

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Mutex;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Record;
use crate::descent::{iterate, BuildReport, LoopParams, PairRule};
use crate::error::{Error, Result};
use crate::graph::{KnnGraph, NeighborList, PositionMap};
use crate::metric::{Metric, PairDistance};
use crate::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentParams {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once a round accepts at most this fraction of `n * k` updates.
    /// Zero runs until a round accepts nothing.
    pub min_update_fraction: f64,
}

impl DescentParams {
    pub fn new(k: usize) -> Self {
        DescentParams {
            k,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::param(format!("k must be at least 2, got {}", self.k)));
        }
        if !(0.0..1.0).contains(&self.min_update_fraction) {
            return Err(Error::param(format!(
                "min_update_fraction must lie in [0, 1), got {}",
                self.min_update_fraction
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters must be positive"));
        }
        Ok(())
    }
}

impl Default for DescentParams {
    fn default() -> Self {
        DescentParams {
            k: 20,
            max_iters: 50,
            min_update_fraction: 0.001,
        }
    }
}

pub(crate) fn check_members(space: &(impl PairDistance + ?Sized), members: &[u32]) -> Result<()> {
    let n = space.num_points();
    let mut seen = vec![false; n];
    for &m in members {
        let slot = seen
            .get_mut(m as usize)
            .ok_or(Error::IdOutOfRange { id: m, n })?;
        if std::mem::replace(slot, true) {
            return Err(Error::param(format!("member id {m} listed twice")));
        }
    }
    Ok(())
}

/// Maps local-index lists back to dataset ids and clears the new flags.
pub(crate) fn into_graph(
    k: usize,
    metric: Metric,
    ids: Vec<u32>,
    lists: Vec<NeighborList>,
) -> KnnGraph {
    let lists = lists
        .into_iter()
        .map(|l| {
            let entries = l
                .iter()
                .map(|e| crate::graph::Neighbor {
                    id: ids[e.id as usize],
                    dist: e.dist,
                    is_new: false,
                })
                .collect();
            NeighborList::from_entries(k, entries)
        })
        .collect();
    KnnGraph::from_parts(k, metric, ids, lists)
}

/// Converts a graph's lists to local indices of `map`, all flagged old.
pub(crate) fn to_local(graph: &KnnGraph, map: &PositionMap, capacity: usize) -> Vec<NeighborList> {
    graph
        .lists()
        .iter()
        .map(|l| {
            let entries = l
                .iter()
                .map(|e| crate::graph::Neighbor {
                    id: map.get(e.id).expect("neighbor outside member set") as u32,
                    dist: e.dist,
                    is_new: false,
                })
                .collect();
            NeighborList::from_entries(capacity, entries)
        })
        .collect()
}

/// Exact k-NN graph over the whole dataset.
pub fn brute_force_graph<D: PairDistance + ?Sized>(space: &D, k: usize) -> Result<KnnGraph> {
    let members: Vec<u32> = (0..space.num_points() as u32).collect();
    brute_force_on(space, members, k)
}

/// Exact k-NN graph over `members`.
///
/// Evaluates every unordered pair exactly once (`m(m-1)/2` calls) and offers
/// the result to both endpoints. Ties at the k-th distance resolve toward the
/// smaller id, so the result does not depend on scheduling.
pub fn brute_force_on<D: PairDistance + ?Sized>(
    space: &D,
    members: Vec<u32>,
    k: usize,
) -> Result<KnnGraph> {
    check_members(space, &members)?;
    let m = members.len();
    if k == 0 || k >= m {
        return Err(Error::param(format!(
            "brute force needs 1 <= k < n (k = {k}, n = {m})"
        )));
    }
    let lists: Vec<Mutex<NeighborList>> = (0..m).map(|_| Mutex::new(NeighborList::new(k))).collect();
    let thresholds: Vec<AtomicU32> = (0..m).map(|_| AtomicU32::new(f32::INFINITY.to_bits())).collect();

    let offer = |slot: usize, id: u32, d: f32| {
        let mut l = lists[slot].lock().unwrap();
        if l.offer_ordered(id, d) && l.is_full() {
            thresholds[slot].store(l.worst().unwrap().dist.to_bits(), Ordering::Relaxed);
        }
    };

    (0..m).into_par_iter().for_each(|i| {
        let mut own = NeighborList::new(k);
        for j in i + 1..m {
            let d = space.distance(members[i], members[j]);
            own.offer_ordered(j as u32, d);
            // thresholds only shrink, so a stale read can only let extra
            // offers through to the locked check
            if d <= f32::from_bits(thresholds[j].load(Ordering::Relaxed)) {
                offer(j, i as u32, d);
            }
        }
        for e in own.iter() {
            offer(i, e.id, e.dist);
        }
    });

    let lists = lists.into_iter().map(|l| l.into_inner().unwrap()).collect();
    Ok(into_graph(k, space.metric(), members, lists))
}

/// Exact top-`k` dataset ids for each query, ties toward smaller ids.
pub fn brute_force_queries(
    dataset: &Dataset,
    metric: Metric,
    queries: &Dataset,
    k: usize,
) -> Result<Vec<Vec<(u32, f32)>>> {
    metric.check_dataset(dataset)?;
    metric.check_dataset(queries)?;
    if dataset.kind() == crate::dataset::DataKind::Dense && dataset.dim() != queries.dim() {
        return Err(Error::DimensionMismatch {
            expected: dataset.dim(),
            actual: queries.dim(),
        });
    }
    if k == 0 || k > dataset.len() {
        return Err(Error::param(format!(
            "need 1 <= k <= n (k = {k}, n = {})",
            dataset.len()
        )));
    }
    Ok((0..queries.len() as u32)
        .into_par_iter()
        .map(|q| {
            let query: Record<'_> = queries.record(q);
            let mut l = NeighborList::new(k);
            for (id, rec) in dataset.records().enumerate() {
                l.offer_ordered(id as u32, metric.eval(query, rec));
            }
            l.iter().map(|e| (e.id, e.dist)).collect()
        })
        .collect())
}

/// NN-Descent over the whole dataset.
pub fn nn_descent<D: PairDistance + ?Sized>(
    space: &D,
    params: &DescentParams,
    seed: u64,
) -> Result<(KnnGraph, BuildReport)> {
    let members: Vec<u32> = (0..space.num_points() as u32).collect();
    nn_descent_on(space, members, params, seed)
}

/// NN-Descent over `members`, starting from `k` distinct random neighbors per
/// vertex.
pub fn nn_descent_on<D: PairDistance + ?Sized>(
    space: &D,
    members: Vec<u32>,
    params: &DescentParams,
    seed: u64,
) -> Result<(KnnGraph, BuildReport)> {
    params.validate()?;
    check_members(space, &members)?;
    let m = members.len();
    let k = params.k;
    if m < 2 || k >= m {
        return Err(Error::param(format!(
            "NN-Descent needs n >= 2 and k < n (k = {k}, n = {m})"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<Vec<u32>> = (0..m)
        .map(|v| {
            index::sample(&mut rng, m - 1, k)
                .into_iter()
                .map(|x| if x >= v { x as u32 + 1 } else { x as u32 })
                .collect()
        })
        .collect();
    let mut lists = init_lists(space, &members, &picks, k, m);

    let mut report = BuildReport {
        evaluations: (m * k) as u64,
        ..Default::default()
    };
    let loop_params = LoopParams {
        k,
        max_iters: params.max_iters,
        min_update_fraction: params.min_update_fraction,
        seed: crate::graph::mix_seed(seed, 0xD35C),
    };
    iterate(space, &members, &mut lists, &PairRule::All, loop_params, &mut report);
    Ok((into_graph(k, space.metric(), members, lists), report))
}

/// Fresh lists of capacity `k` holding the picked local neighbors, flagged new.
pub(crate) fn init_lists<D: PairDistance + ?Sized>(
    space: &D,
    ids: &[u32],
    picks: &[Vec<u32>],
    k: usize,
    m: usize,
) -> Vec<NeighborList> {
    debug_assert_eq!(picks.len(), m);
    picks
        .par_iter()
        .enumerate()
        .map(|(v, pick)| {
            let mut l = NeighborList::new(k);
            for &u in pick {
                l.update(u, space.distance(ids[v], ids[u as usize]));
            }
            l
        })
        .collect()
}
