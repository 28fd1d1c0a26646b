//! Layered graphs: the pyramid of k-NN graphs produced by hierarchical
//! construction, and its diversified counterpart used for search.
//!
//! On disk a hierarchy is a directory holding `hierarchy.json` plus one file
//! per layer (`layer-<i>.knng` for graphs, `layer-<i>.adj` with
//! `layer-<i>.ids` for adjacency). Layer 0 is the top, the last layer is the
//! bottom.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diversify::{diversify_graph, Adjacency, DiversifyParams};
use crate::error::{Error, Result};
use crate::graph::KnnGraph;
use crate::io;
use crate::metric::{Metric, PairDistance};

pub const MANIFEST: &str = "hierarchy.json";

fn check_nesting<'a>(layers: impl Iterator<Item = &'a [u32]>) -> Result<Vec<usize>> {
    let mut prev: Option<std::collections::HashSet<u32>> = None;
    let mut sizes = Vec::new();
    for (i, members) in layers.enumerate() {
        if let Some(last) = sizes.last() {
            if members.len() <= *last {
                return Err(Error::format(format!(
                    "layer {i} has {} vertices, not more than the layer above",
                    members.len()
                )));
            }
        }
        let set: std::collections::HashSet<u32> = members.iter().copied().collect();
        if let Some(above) = &prev {
            if let Some(m) = above.iter().find(|m| !set.contains(m)) {
                return Err(Error::format(format!("layer {} lacks vertex {m} of layer {}", i, i - 1)));
            }
        }
        sizes.push(members.len());
        prev = Some(set);
    }
    if sizes.is_empty() {
        return Err(Error::format("a hierarchy needs at least one layer"));
    }
    Ok(sizes)
}

/// Nested k-NN graphs, top (smallest) first.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    layers: Vec<KnnGraph>,
}

impl Pyramid {
    pub fn new(layers: Vec<KnnGraph>) -> Result<Self> {
        check_nesting(layers.iter().map(KnnGraph::members))?;
        if layers.windows(2).any(|w| w[0].metric() != w[1].metric()) {
            return Err(Error::format("layers disagree on the metric"));
        }
        Ok(Pyramid { layers })
    }

    pub fn layers(&self) -> &[KnnGraph] {
        &self.layers
    }

    pub fn bottom(&self) -> &KnnGraph {
        self.layers.last().expect("nonempty")
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.layers.iter().map(KnnGraph::len).collect()
    }

    /// Diversifies every layer independently.
    pub fn diversify<D: PairDistance + ?Sized>(&self, space: &D, params: &DiversifyParams) -> Hierarchy {
        let layers = self
            .layers
            .iter()
            .map(|g| diversify_graph(g, space, params))
            .collect();
        Hierarchy {
            metric: self.bottom().metric(),
            layers,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut w = HierarchyWriter::create(dir, self.bottom().metric())?;
        for g in &self.layers {
            w.push_graph(g)?;
        }
        w.finish(serde_json::Value::Null).map(|_| ())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m: Manifest = io::load_json(&dir.join(MANIFEST))?;
        let layers = m
            .layers
            .iter()
            .map(|l| {
                let file = l.graph.as_ref().ok_or_else(|| Error::format("layer has no graph file"))?;
                io::load_graph(&dir.join(file))
            })
            .collect::<Result<Vec<_>>>()?;
        Pyramid::new(layers)
    }
}

/// Nested search adjacency, top (smallest) first.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    metric: Metric,
    layers: Vec<Adjacency>,
}

impl Hierarchy {
    pub fn new(metric: Metric, layers: Vec<Adjacency>) -> Result<Self> {
        check_nesting(layers.iter().map(Adjacency::members))?;
        Ok(Hierarchy { metric, layers })
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn layers(&self) -> &[Adjacency] {
        &self.layers
    }

    pub fn top(&self) -> &Adjacency {
        &self.layers[0]
    }

    pub fn bottom(&self) -> &Adjacency {
        self.layers.last().expect("nonempty")
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Adjacency::len).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut w = HierarchyWriter::create(dir, self.metric)?;
        for a in &self.layers {
            w.push_adjacency(a)?;
        }
        w.finish(serde_json::Value::Null).map(|_| ())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m: Manifest = io::load_json(&dir.join(MANIFEST))?;
        let layers = m
            .layers
            .iter()
            .map(|l| match (&l.adjacency, &l.members) {
                (Some(adj), Some(ids)) => {
                    let members = io::load_ids(&dir.join(ids))?;
                    io::load_adjacency(&dir.join(adj), members)
                }
                _ => Err(Error::format("layer has no adjacency file")),
            })
            .collect::<Result<Vec<_>>>()?;
        Hierarchy::new(m.metric, layers)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LayerEntry {
    pub size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub members: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub metric: Metric,
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<LayerEntry>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub params: serde_json::Value,
}

/// Writes layers one at a time so a large pyramid never has to sit in memory.
pub struct HierarchyWriter {
    dir: PathBuf,
    metric: Metric,
    layers: Vec<LayerEntry>,
}

impl HierarchyWriter {
    pub fn create(dir: &Path, metric: Metric) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(HierarchyWriter {
            dir: dir.to_path_buf(),
            metric,
            layers: Vec::new(),
        })
    }

    fn check_size(&self, size: usize) -> Result<()> {
        match self.layers.last() {
            Some(l) if l.size >= size => Err(Error::format("layers must grow from top to bottom")),
            _ => Ok(()),
        }
    }

    pub fn push_graph(&mut self, graph: &KnnGraph) -> Result<()> {
        self.check_size(graph.len())?;
        let name = format!("layer-{}.knng", self.layers.len());
        io::save_graph(&self.dir.join(&name), graph)?;
        self.layers.push(LayerEntry {
            size: graph.len(),
            k: Some(graph.k()),
            graph: Some(name),
            adjacency: None,
            members: None,
        });
        Ok(())
    }

    pub fn push_adjacency(&mut self, adj: &Adjacency) -> Result<()> {
        self.check_size(adj.len())?;
        let i = self.layers.len();
        let (name, ids) = (format!("layer-{i}.adj"), format!("layer-{i}.ids"));
        io::save_adjacency(&self.dir.join(&name), adj)?;
        io::save_ids(&self.dir.join(&ids), adj.members())?;
        self.layers.push(LayerEntry {
            size: adj.len(),
            k: None,
            graph: None,
            adjacency: Some(name),
            members: Some(ids),
        });
        Ok(())
    }

    /// Writes the manifest and returns its path.
    pub fn finish(self, params: serde_json::Value) -> Result<PathBuf> {
        let manifest = Manifest {
            metric: self.metric,
            layer_sizes: self.layers.iter().map(|l| l.size).collect(),
            layers: self.layers,
            params,
        };
        let path = self.dir.join(MANIFEST);
        io::save_json(&path, &manifest)?;
        Ok(path)
    }
}
