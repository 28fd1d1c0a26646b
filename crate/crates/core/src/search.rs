//! Nearest neighbor search over diversified adjacency.
//!
//! Hierarchical search descends greedily through the upper layers from a
//! random top vertex, then runs a best-first search on the bottom layer.
//! Flat search runs the best-first stage alone from random seeds.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Record};
use crate::diversify::Adjacency;
use crate::error::{Error, Result};
use crate::graph::mix_seed;
use crate::hierarchy::Hierarchy;
use crate::metric::Metric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Capacity of the bottom-stage candidate pool.
    pub pool_size: usize,
    pub seed: u64,
    /// Fixed top-layer entry vertex instead of a random one.
    pub entry: Option<u32>,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams { pool_size: 16, seed: 0, entry: None }
    }
}

impl SearchParams {
    pub fn new(pool_size: usize) -> Self {
        SearchParams { pool_size, ..SearchParams::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool_size == 0 {
            return Err(Error::param("pool_size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// `(id, distance)` ascending by distance, then id.
    pub neighbors: Vec<(u32, f32)>,
    pub distance_evals: u64,
}

impl SearchResult {
    pub fn ids(&self) -> Vec<u32> {
        self.neighbors.iter().map(|p| p.0).collect()
    }
}

/// Outcome of a greedy walk on one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    pub vertex: u32,
    pub dist: f32,
    pub distance_evals: u64,
    /// Visited vertices in order, starting with the start vertex.
    pub path: Vec<u32>,
    /// Distance of each path vertex to the query.
    pub path_dists: Vec<f32>,
}

/// Per-query scratch: dataset-wide visited bits and every evaluated pair.
struct Scratch<'a> {
    dataset: &'a Dataset,
    metric: Metric,
    query: Record<'a>,
    visited: Vec<u64>,
    evaluated: Vec<(u32, f32)>,
}

impl<'a> Scratch<'a> {
    fn new(dataset: &'a Dataset, metric: Metric, query: Record<'a>) -> Self {
        Scratch {
            dataset,
            metric,
            query,
            visited: vec![0; dataset.len().div_ceil(64)],
            evaluated: Vec::new(),
        }
    }

    /// Distance to `id` unless it was already evaluated.
    #[inline]
    fn visit(&mut self, id: u32) -> Option<f32> {
        let (w, b) = ((id / 64) as usize, id % 64);
        if self.visited[w] >> b & 1 == 1 {
            return None;
        }
        self.visited[w] |= 1 << b;
        let d = self.metric.eval(self.query, self.dataset.record(id));
        self.evaluated.push((id, d));
        Some(d)
    }

    fn evals(&self) -> u64 {
        self.evaluated.len() as u64
    }
}

fn check_query(dataset: &Dataset, metric: Metric, query: Record<'_>) -> Result<()> {
    metric.check_dataset(dataset)?;
    if query.kind() != dataset.kind() {
        return Err(Error::MetricMismatch { metric, kind: query.kind().name() });
    }
    match query {
        Record::Dense(v) if v.len() != dataset.dim() => {
            Err(Error::DimensionMismatch { expected: dataset.dim(), actual: v.len() })
        }
        Record::Dense(v) if v.iter().any(|x| !x.is_finite()) => {
            Err(Error::InvalidDataset("query has non-finite values".into()))
        }
        Record::Sparse(s) if s.windows(2).any(|w| w[0] >= w[1]) => {
            Err(Error::InvalidDataset("sparse query must be strictly ascending".into()))
        }
        _ => Ok(()),
    }
}

fn check_member(layer: &Adjacency, id: u32) -> Result<()> {
    if layer.contains(id) {
        Ok(())
    } else {
        Err(Error::IdOutOfRange { id, n: layer.len() })
    }
}

fn check_layer(dataset: &Dataset, layer: &Adjacency) -> Result<()> {
    match layer.members().iter().find(|&&m| m as usize >= dataset.len()) {
        Some(&id) => Err(Error::IdOutOfRange { id, n: dataset.len() }),
        None => Ok(()),
    }
}

/// Walks from `start` (at distance `start_dist`) to the neighbor closest to
/// the query until no neighbor is strictly closer. Vertices evaluated in an
/// earlier walk are skipped: none of them can beat the current position.
fn descend(layer: &Adjacency, s: &mut Scratch<'_>, start: u32, start_dist: f32) -> Descent {
    let before = s.evals();
    let (mut cur, mut cur_dist) = (start, start_dist);
    let mut path = vec![cur];
    let mut path_dists = vec![cur_dist];
    loop {
        let pos = layer.position(cur).expect("walk stays on the layer");
        let mut best = (cur, cur_dist);
        for &nb in layer.neighbors(pos) {
            if let Some(d) = s.visit(nb) {
                if d < best.1 {
                    best = (nb, d);
                }
            }
        }
        if best.0 == cur {
            break;
        }
        (cur, cur_dist) = best;
        path.push(cur);
        path_dists.push(cur_dist);
    }
    Descent {
        vertex: cur,
        dist: cur_dist,
        distance_evals: s.evals() - before,
        path,
        path_dists,
    }
}

/// Bounded pool sorted by `(dist, id)` with expanded flags.
fn best_first(layer: &Adjacency, s: &mut Scratch<'_>, seeds: &[(u32, f32)], pool_size: usize) -> Vec<(u32, f32)> {
    let mut pool: Vec<(f32, u32, bool)> = Vec::with_capacity(pool_size + 1);
    let insert = |pool: &mut Vec<(f32, u32, bool)>, id: u32, d: f32| {
        if pool.len() == pool_size && (d, id) >= (pool[pool_size - 1].0, pool[pool_size - 1].1) {
            return;
        }
        let at = pool.partition_point(|e| (e.0, e.1) < (d, id));
        pool.insert(at, (d, id, false));
        pool.truncate(pool_size);
    };
    for &(id, d) in seeds {
        if layer.contains(id) {
            insert(&mut pool, id, d);
        }
    }
    while let Some(i) = pool.iter().position(|e| !e.2) {
        pool[i].2 = true;
        let pos = layer.position(pool[i].1).expect("pool holds layer members");
        for &nb in layer.neighbors(pos) {
            if let Some(d) = s.visit(nb) {
                insert(&mut pool, nb, d);
            }
        }
    }
    pool.into_iter().map(|(d, id, _)| (id, d)).collect()
}

/// Greedy walk on one layer from `start`.
pub fn greedy_descend(
    layer: &Adjacency,
    dataset: &Dataset,
    metric: Metric,
    query: Record<'_>,
    start: u32,
) -> Result<Descent> {
    check_query(dataset, metric, query)?;
    check_layer(dataset, layer)?;
    check_member(layer, start)?;
    let mut s = Scratch::new(dataset, metric, query);
    let d = s.visit(start).expect("fresh scratch");
    let mut out = descend(layer, &mut s, start, d);
    out.distance_evals = s.evals();
    Ok(out)
}

/// Best-first search on `layer` from the given seed vertices.
pub fn best_first_search(
    layer: &Adjacency,
    dataset: &Dataset,
    metric: Metric,
    query: Record<'_>,
    seeds: &[u32],
    params: &SearchParams,
) -> Result<SearchResult> {
    params.validate()?;
    check_query(dataset, metric, query)?;
    check_layer(dataset, layer)?;
    if seeds.is_empty() {
        return Err(Error::param("best-first search needs at least one seed"));
    }
    for &id in seeds {
        check_member(layer, id)?;
    }
    let mut s = Scratch::new(dataset, metric, query);
    let scored: Vec<(u32, f32)> = seeds.iter().filter_map(|&id| s.visit(id).map(|d| (id, d))).collect();
    let neighbors = best_first(layer, &mut s, &scored, params.pool_size);
    Ok(SearchResult { neighbors, distance_evals: s.evals() })
}

/// Top-down search: greedy descent through every non-bottom layer, each
/// layer's optimum starting the next, then best-first on the bottom layer.
/// Every vertex scored on the way down also seeds the bottom pool.
pub fn hierarchical_search(
    hierarchy: &Hierarchy,
    dataset: &Dataset,
    query: Record<'_>,
    params: &SearchParams,
) -> Result<SearchResult> {
    params.validate()?;
    let metric = hierarchy.metric();
    check_query(dataset, metric, query)?;
    for layer in hierarchy.layers() {
        check_layer(dataset, layer)?;
    }
    let top = hierarchy.top();
    if top.is_empty() {
        return Ok(SearchResult { neighbors: Vec::new(), distance_evals: 0 });
    }
    let start = match params.entry {
        Some(id) => {
            check_member(top, id)?;
            id
        }
        None => top.members()[ChaCha8Rng::seed_from_u64(params.seed).random_range(0..top.len())],
    };
    let mut s = Scratch::new(dataset, metric, query);
    let (mut cur, mut cur_dist) = (start, s.visit(start).expect("fresh scratch"));
    let layers = hierarchy.layers();
    for layer in &layers[..layers.len() - 1] {
        let d = descend(layer, &mut s, cur, cur_dist);
        (cur, cur_dist) = (d.vertex, d.dist);
    }
    let seeds = s.evaluated.clone();
    let neighbors = best_first(hierarchy.bottom(), &mut s, &seeds, params.pool_size);
    Ok(SearchResult { neighbors, distance_evals: s.evals() })
}

/// Best-first search seeded with `pool_size` distinct random vertices.
pub fn flat_search(
    layer: &Adjacency,
    dataset: &Dataset,
    metric: Metric,
    query: Record<'_>,
    params: &SearchParams,
) -> Result<SearchResult> {
    params.validate()?;
    if layer.is_empty() {
        return Ok(SearchResult { neighbors: Vec::new(), distance_evals: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let m = params.pool_size.min(layer.len());
    let seeds: Vec<u32> = sample(&mut rng, layer.len(), m)
        .into_iter()
        .map(|p| layer.members()[p])
        .collect();
    best_first_search(layer, dataset, metric, query, &seeds, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    Hierarchical,
    /// Best-first on the bottom layer only.
    Flat,
}

/// Runs every query of `queries`, in parallel on the current rayon pool.
/// Query `i` uses seed `mix(params.seed, i)`.
pub fn search_batch(
    hierarchy: &Hierarchy,
    dataset: &Dataset,
    queries: &Dataset,
    params: &SearchParams,
    mode: SearchMode,
) -> Result<Vec<SearchResult>> {
    (0..queries.len() as u32)
        .into_par_iter()
        .map(|i| {
            let p = SearchParams { seed: mix_seed(params.seed, i as u64), ..*params };
            let q = queries.record(i);
            match mode {
                SearchMode::Hierarchical => hierarchical_search(hierarchy, dataset, q, &p),
                SearchMode::Flat => flat_search(hierarchy.bottom(), dataset, hierarchy.metric(), q, &p),
            }
        })
        .collect()
}
