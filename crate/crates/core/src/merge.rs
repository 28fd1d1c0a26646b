//! Merging k-NN graphs.
//!
//! * [`s_merge`] joins two graphs built over disjoint sets.
//! * [`j_merge`] joins a raw set of ids into a built graph.
//! * [`h_merge`] grows a graph block by block with repeated joint merges,
//!   keeping each intermediate graph as one layer of a pyramid.
//!
//! Both merges cut the rear `round(r * k)` entries off each existing list,
//! refill those slots with random samples from the other side, run
//! local-join rounds restricted to pairs that can carry new information, and
//! finally fold the cut-off rear entries back in.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construct::{check_members, into_graph, nn_descent_on, to_local, DescentParams};
use crate::descent::{iterate, BuildReport, LoopParams, PairRule};
use crate::error::{Error, Result};
use crate::graph::{merge_rear, mix_seed, split, KnnGraph, Neighbor, NeighborList, PositionMap};
use crate::hierarchy::Pyramid;
use crate::metric::PairDistance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeParams {
    pub k: usize,
    /// Fraction of each existing list cut off and refilled with random
    /// samples from the other set. Zero mixes nothing in.
    pub r: f64,
    pub min_update_fraction: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for MergeParams {
    fn default() -> Self {
        MergeParams {
            k: 20,
            r: 0.5,
            min_update_fraction: 0.001,
            max_iters: 50,
            seed: 0,
        }
    }
}

impl MergeParams {
    pub fn new(k: usize) -> Self {
        MergeParams {
            k,
            ..Default::default()
        }
    }

    /// Slots per existing list refilled with cross-set samples.
    pub fn mixed(&self) -> usize {
        ((self.r * self.k as f64).round() as usize).min(self.k)
    }

    /// Number of front entries kept from each existing list.
    pub fn kept(&self) -> usize {
        self.k - self.mixed()
    }

    pub fn descent(&self) -> DescentParams {
        DescentParams {
            k: self.k,
            max_iters: self.max_iters,
            min_update_fraction: self.min_update_fraction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.r) {
            return Err(Error::param(format!("r must lie in [0, 1], got {}", self.r)));
        }
        self.descent().validate()
    }

    fn loop_params(&self, salt: u64) -> LoopParams {
        LoopParams {
            k: self.k,
            max_iters: self.max_iters,
            min_update_fraction: self.min_update_fraction,
            seed: mix_seed(self.seed, salt),
        }
    }
}

fn check_graph<D: PairDistance + ?Sized>(space: &D, g: &KnnGraph, params: &MergeParams) -> Result<()> {
    if g.metric() != space.metric() {
        return Err(Error::param(format!(
            "graph metric {} does not match evaluator metric {}",
            g.metric(),
            space.metric()
        )));
    }
    if g.k() != params.k {
        return Err(Error::param(format!(
            "graph has k = {} but merge k = {}",
            g.k(),
            params.k
        )));
    }
    Ok(())
}

fn check_disjoint(first: &[u32], second: &[u32]) -> Result<()> {
    let map = PositionMap::new(first);
    match second.iter().find(|&&id| map.get(id).is_some()) {
        Some(&id) => Err(Error::OverlappingSets(id)),
        None => Ok(()),
    }
}

/// Local-index lists of `graph`'s front entries, widened to capacity `k`.
fn kept_heads(graph: &KnnGraph, k1: usize, map: &PositionMap, k: usize) -> Result<(Vec<NeighborList>, Vec<Vec<Neighbor>>)> {
    let parts = split(graph, k1)?;
    Ok((to_local(&parts.head, map, k), parts.tail))
}

/// Appends up to `want` distinct random picks from `pool` (local ids) to each
/// list, with computed distances and the new flag set.
fn append_random<D: PairDistance + ?Sized>(
    space: &D,
    ids: &[u32],
    lists: &mut [NeighborList],
    offset: usize,
    pool: std::ops::Range<usize>,
    want: usize,
    rng: &mut ChaCha8Rng,
) -> u64 {
    let take = want.min(pool.len());
    if take == 0 {
        return 0;
    }
    let picks: Vec<Vec<u32>> = (0..lists.len())
        .map(|_| {
            index::sample(rng, pool.len(), take)
                .into_iter()
                .map(|x| (pool.start + x) as u32)
                .collect()
        })
        .collect();
    lists.par_iter_mut().zip(picks).enumerate().for_each(|(i, (list, pick))| {
        let owner = ids[offset + i];
        for u in pick {
            list.update(u, space.distance(owner, ids[u as usize]));
        }
    });
    (lists.len() * take) as u64
}

/// Symmetric merge of `g` (over S1) and `h` (over S2) into a graph over
/// S1 ∪ S2. Members of the result are `g`'s members followed by `h`'s.
pub fn s_merge<D: PairDistance + ?Sized>(
    space: &D,
    g: &KnnGraph,
    h: &KnnGraph,
    params: &MergeParams,
) -> Result<(KnnGraph, BuildReport)> {
    params.validate()?;
    check_graph(space, g, params)?;
    check_graph(space, h, params)?;
    check_disjoint(g.members(), h.members())?;
    let (m1, m2) = (g.len(), h.len());
    let k = params.k;
    let k1 = params.kept();

    let ids: Vec<u32> = g.members().iter().chain(h.members()).copied().collect();
    check_members(space, &ids)?;
    let map = PositionMap::new(&ids);
    let (mut lists, mut tails) = kept_heads(g, k1, &map, k)?;
    let (h_lists, h_tails) = kept_heads(h, k1, &map, k)?;
    lists.extend(h_lists);
    tails.extend(h_tails);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut report = BuildReport::default();
    let (first, second) = lists.split_at_mut(m1);
    report.evaluations += append_random(space, &ids, first, 0, m1..m1 + m2, k - k1, &mut rng);
    report.evaluations += append_random(space, &ids, second, m1, 0..m1, k - k1, &mut rng);

    let side: Vec<bool> = (0..m1 + m2).map(|v| v < m1).collect();
    iterate(space, &ids, &mut lists, &PairRule::Cross(side), params.loop_params(1), &mut report);

    let mut merged = into_graph(k, space.metric(), ids, lists);
    merge_rear(&mut merged, &tails)?;
    merged.clear_flags();
    Ok((merged, report))
}

/// Joint merge of the raw ids `s2` into `g` (over S1). Members of the result
/// are `g`'s members followed by `s2` in the given order.
pub fn j_merge<D: PairDistance + ?Sized>(
    space: &D,
    g: &KnnGraph,
    s2: &[u32],
    params: &MergeParams,
) -> Result<(KnnGraph, BuildReport)> {
    params.validate()?;
    check_graph(space, g, params)?;
    check_members(space, s2)?;
    check_disjoint(g.members(), s2)?;
    let (m1, m2) = (g.len(), s2.len());
    let m = m1 + m2;
    let k = params.k;
    let k1 = params.kept();

    let ids: Vec<u32> = g.members().iter().chain(s2).copied().collect();
    let map = PositionMap::new(&ids);
    let (mut lists, tails) = kept_heads(g, k1, &map, k)?;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut report = BuildReport::default();
    report.evaluations += append_random(space, &ids, &mut lists, 0, m1..m, k - k1, &mut rng);

    let fill = k.min(m.saturating_sub(1));
    let picks: Vec<Vec<u32>> = (m1..m)
        .map(|v| {
            index::sample(&mut rng, m - 1, fill)
                .into_iter()
                .map(|x| if x >= v { x as u32 + 1 } else { x as u32 })
                .collect()
        })
        .collect();
    let raw: Vec<NeighborList> = picks
        .par_iter()
        .enumerate()
        .map(|(i, pick)| {
            let owner = ids[m1 + i];
            let mut l = NeighborList::new(k);
            for &u in pick {
                l.update(u, space.distance(owner, ids[u as usize]));
            }
            l
        })
        .collect();
    report.evaluations += (m2 * fill) as u64;
    lists.extend(raw);

    let in_first: Vec<bool> = (0..m).map(|v| v < m1).collect();
    iterate(
        space,
        &ids,
        &mut lists,
        &PairRule::NotBothMarked(in_first),
        params.loop_params(2),
        &mut report,
    );

    let mut merged = into_graph(k, space.metric(), ids, lists);
    merge_rear(&mut merged, &tails)?;
    merged.clear_flags();
    Ok((merged, report))
}

/// Layer sizes that double from the bottom up: `n, n/2, n/4, ...` down to the
/// smallest size that is still at least `min_top`, returned top first.
pub fn doubling_layers(n: usize, min_top: usize) -> Vec<usize> {
    let mut sizes = vec![n];
    let mut s = n;
    while s / 2 >= min_top.max(1) && s / 2 > 0 {
        s /= 2;
        sizes.push(s);
    }
    sizes.reverse();
    sizes
}

/// The fixed five-layer schedule `64, 512, 4096, 32768, n`, dropping cut
/// points that are not below `n` or cannot hold `k` neighbors.
pub fn default_search_layers(n: usize, k: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = [64, 512, 4096, 32768]
        .into_iter()
        .filter(|&s| s < n && s > k)
        .collect();
    sizes.push(n);
    sizes
}

/// `count` layer sizes growing geometrically from `top` to `n`.
pub fn geometric_layers(n: usize, top: usize, count: usize) -> Vec<usize> {
    if count <= 1 || top >= n {
        return vec![n];
    }
    let ratio = (n as f64 / top as f64).powf(1.0 / (count - 1) as f64);
    let mut sizes: Vec<usize> = (0..count - 1)
        .map(|i| (top as f64 * ratio.powi(i as i32)).round() as usize)
        .collect();
    sizes.dedup();
    sizes.push(n);
    sizes
}

fn check_layers(sizes: &[usize], n: usize, k: usize) -> Result<()> {
    if sizes.is_empty() {
        return Err(Error::param("layer sizes must not be empty"));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param(format!("layer sizes must strictly increase: {sizes:?}")));
    }
    if *sizes.last().unwrap() != n {
        return Err(Error::param(format!(
            "last layer size {} must equal the dataset size {n}",
            sizes.last().unwrap()
        )));
    }
    if sizes[0] < k + 1 {
        return Err(Error::param(format!(
            "top layer size {} must be at least k + 1 = {}",
            sizes[0],
            k + 1
        )));
    }
    Ok(())
}

/// Hierarchical construction, handing each finished non-bottom layer to
/// `on_layer` (top first) as soon as it exists instead of keeping it.
///
/// The top layer is NN-Descent over a random sample of `layer_sizes[0]` ids;
/// each following block of fresh random ids is joined in with [`j_merge`].
/// Non-bottom layers are passed on cut to `k / 2` entries per list. Returns
/// the bottom graph over every id, with total cost in the report.
pub fn h_merge_with<D, F>(
    space: &D,
    params: &MergeParams,
    layer_sizes: &[usize],
    mut on_layer: F,
) -> Result<(KnnGraph, BuildReport)>
where
    D: PairDistance + ?Sized,
    F: FnMut(usize, KnnGraph) -> Result<()>,
{
    params.validate()?;
    let n = space.num_points();
    check_layers(layer_sizes, n, params.k)?;

    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(params.seed, 0x4E5)));

    let mut top: Vec<u32> = order[..layer_sizes[0]].to_vec();
    top.sort_unstable();
    let (mut graph, first) = nn_descent_on(space, top, &params.descent(), params.seed)?;
    log::info!("layer 0: {} vertices, {} evaluations", graph.len(), first.evaluations);
    let mut stages = vec![first];

    for (t, w) in layer_sizes.windows(2).enumerate() {
        on_layer(t, graph.truncated(params.k / 2))?;
        let mut block: Vec<u32> = order[w[0]..w[1]].to_vec();
        block.sort_unstable();
        let step = MergeParams {
            seed: mix_seed(params.seed, t as u64 + 1),
            ..*params
        };
        let (next, report) = j_merge(space, &graph, &block, &step)?;
        log::info!(
            "layer {}: {} vertices, {} evaluations",
            t + 1,
            next.len(),
            report.evaluations
        );
        stages.push(report);
        graph = next;
    }
    Ok((graph, BuildReport::composite(stages)))
}

/// [`h_merge_with`] keeping every layer in memory. The pyramid's last layer is
/// the returned bottom graph.
pub fn h_merge<D: PairDistance + ?Sized>(
    space: &D,
    params: &MergeParams,
    layer_sizes: &[usize],
) -> Result<(KnnGraph, Pyramid, BuildReport)> {
    let mut layers = Vec::with_capacity(layer_sizes.len());
    let (graph, report) = h_merge_with(space, params, layer_sizes, |_, layer| {
        layers.push(layer);
        Ok(())
    })?;
    layers.push(graph.clone());
    Ok((graph, Pyramid::new(layers)?, report))
}
