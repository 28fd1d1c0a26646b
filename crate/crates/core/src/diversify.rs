//! Occlusion pruning of k-NN lists into search adjacency.
//!
//! A candidate `e` of vertex `a` is dropped when some already kept neighbor
//! `c` satisfies `m(e, c) < m(e, a)`. Candidates are examined nearest first;
//! the nearest neighbor is always kept. The stored graph is never modified:
//! the result is a separate [`Adjacency`].

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{reverse, KnnGraph, Neighbor, PositionMap};
use crate::metric::PairDistance;

/// Variable out-degree adjacency over a member set, targets as dataset ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    members: Vec<u32>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    positions: PositionMap,
}

impl Adjacency {
    /// `lists[i]` are the out-neighbors of `members[i]`; every target must be
    /// a member and no vertex may point at itself.
    pub fn new(members: Vec<u32>, lists: Vec<Vec<u32>>) -> Result<Self> {
        if members.len() != lists.len() {
            return Err(Error::LengthMismatch(format!(
                "{} members but {} adjacency lists",
                members.len(),
                lists.len()
            )));
        }
        let positions = PositionMap::new(&members);
        for (i, &m) in members.iter().enumerate() {
            if positions.get(m) != Some(i) {
                return Err(Error::format(format!("member {m} listed twice")));
            }
        }
        let mut offsets = Vec::with_capacity(members.len() + 1);
        let mut targets = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        offsets.push(0);
        for (owner, list) in members.iter().zip(&lists) {
            for &t in list {
                if t == *owner {
                    return Err(Error::format(format!("vertex {owner} points at itself")));
                }
                if positions.get(t).is_none() {
                    return Err(Error::format(format!(
                        "vertex {owner} points at non-member {t}"
                    )));
                }
            }
            targets.extend_from_slice(list);
            offsets.push(targets.len());
        }
        Ok(Adjacency {
            members,
            offsets,
            targets,
            positions,
        })
    }

    /// Plain adjacency taken straight from a graph's lists.
    pub fn from_graph(graph: &KnnGraph) -> Self {
        Adjacency::new(graph.members().to_vec(), graph.id_lists())
            .expect("a valid graph yields valid adjacency")
    }

    pub fn members(&self) -> &[u32] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn position(&self, id: u32) -> Option<usize> {
        self.positions.get(id)
    }

    pub fn contains(&self, id: u32) -> bool {
        self.positions.get(id).is_some()
    }

    #[inline]
    pub fn neighbors(&self, pos: usize) -> &[u32] {
        &self.targets[self.offsets[pos]..self.offsets[pos + 1]]
    }

    pub fn neighbors_of(&self, id: u32) -> Option<&[u32]> {
        self.positions.get(id).map(|p| self.neighbors(p))
    }

    pub fn lists(&self) -> impl Iterator<Item = &[u32]> + '_ {
        (0..self.len()).map(move |p| self.neighbors(p))
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn max_degree(&self) -> usize {
        self.lists().map(<[u32]>::len).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DiversifyParams {
    /// Optional cap on the merged out-degree; forward picks are kept first.
    pub max_degree: Option<usize>,
}

/// Occlusion pruning of one neighborhood, which must be sorted ascending by
/// `(dist, id)` with `dist` measured to `owner`. Returns kept ids in order.
pub fn diversify_list<D: PairDistance + ?Sized>(owner: u32, nhood: &[Neighbor], space: &D) -> Vec<u32> {
    let mut kept: Vec<u32> = Vec::new();
    for cand in nhood {
        debug_assert_ne!(cand.id, owner);
        let occluded = kept
            .iter()
            .any(|&c| space.distance(cand.id, c) < cand.dist);
        if !occluded {
            kept.push(cand.id);
        }
    }
    kept
}

/// Diversifies every forward list and every reverse list of `graph`, and
/// unions the two kept sets per vertex (forward picks first).
pub fn diversify_graph<D: PairDistance + ?Sized>(
    graph: &KnnGraph,
    space: &D,
    params: &DiversifyParams,
) -> Adjacency {
    let rev = reverse(graph, None, 0);
    let lists: Vec<Vec<u32>> = graph
        .lists()
        .par_iter()
        .zip(rev.into_par_iter())
        .zip(graph.members().par_iter())
        .map(|((fwd, rev), &owner)| {
            let mut out = diversify_list(owner, fwd.entries(), space);
            let mut rnhood: Vec<Neighbor> = rev
                .into_iter()
                .map(|(id, dist)| Neighbor { id, dist, is_new: false })
                .collect();
            rnhood.sort_by(|a, b| a.dist.total_cmp(&b.dist).then(a.id.cmp(&b.id)));
            for id in diversify_list(owner, &rnhood, space) {
                if !out.contains(&id) {
                    out.push(id);
                }
            }
            if let Some(cap) = params.max_degree {
                out.truncate(cap);
            }
            out
        })
        .collect();
    Adjacency::new(graph.members().to_vec(), lists).expect("diversified lists stay within members")
}
