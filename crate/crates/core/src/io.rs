//! File formats.
//!
//! * `fvecs`: per record a little-endian `i32` dimension followed by that
//!   many little-endian `f32` values. `ivecs` uses the same layout with `i32`
//!   values.
//! * Sparse text: one record per line, ascending decimal item ids separated
//!   by spaces.
//! * Id lists: one decimal id per line.
//! * Graph files (`.knng`): magic `KNNG`, then little-endian `u32` fields
//!   `version`, `n`, `k`, `metric tag`, `explicit members` (0 or 1); when the
//!   flag is 1, `n` member ids follow. Then for every vertex exactly `k`
//!   `(u32 id, f32 dist)` pairs; short lists are padded with
//!   `(0xFFFF_FFFF, +inf)`. With the flag at 0 the members are `0..n`.
//! * Adjacency files (`.adj`): for every vertex a `u32` degree followed by
//!   that many `u32` ids. The member list lives beside it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::dataset::{Dataset, Record};
use crate::diversify::Adjacency;
use crate::error::{Error, Result};
use crate::graph::{KnnGraph, Neighbor, NeighborList};
use crate::metric::Metric;

pub const GRAPH_MAGIC: &[u8; 4] = b"KNNG";
pub const GRAPH_VERSION: u32 = 1;
const PAD_ID: u32 = u32::MAX;

/// Reads a dimension prefix, or `None` at a clean end of stream.
fn read_dim(r: &mut impl Read) -> Result<Option<usize>> {
    match r.read_i32::<LittleEndian>() {
        Ok(d) if d > 0 => Ok(Some(d as usize)),
        Ok(d) => Err(Error::format(format!("invalid record dimension {d}"))),
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn read_fvecs(mut r: impl Read) -> Result<Dataset> {
    let mut values = Vec::new();
    let mut dim = None;
    let mut buf = Vec::new();
    while let Some(d) = read_dim(&mut r)? {
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::DimensionMismatch { expected, actual: d })
            }
            _ => {}
        }
        buf.resize(d, 0f32);
        r.read_f32_into::<LittleEndian>(&mut buf)
            .map_err(|_| Error::format("truncated fvecs record"))?;
        values.extend_from_slice(&buf);
    }
    let dim = dim.ok_or_else(|| Error::format("empty fvecs stream"))?;
    Dataset::from_dense(dim, values)
}

pub fn write_fvecs(mut w: impl Write, dataset: &Dataset) -> Result<()> {
    for rec in dataset.records() {
        let Record::Dense(row) = rec else {
            return Err(Error::format("fvecs holds dense data only"));
        };
        w.write_i32::<LittleEndian>(row.len() as i32)?;
        for &v in row {
            w.write_f32::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_ivecs(mut r: impl Read) -> Result<Vec<Vec<u32>>> {
    let mut rows = Vec::new();
    let mut buf = Vec::new();
    while let Some(d) = read_dim(&mut r)? {
        buf.resize(d, 0i32);
        r.read_i32_into::<LittleEndian>(&mut buf)
            .map_err(|_| Error::format("truncated ivecs record"))?;
        if let Some(v) = buf.iter().find(|&&v| v < 0) {
            return Err(Error::format(format!("negative id {v} in ivecs")));
        }
        rows.push(buf.iter().map(|&v| v as u32).collect());
    }
    Ok(rows)
}

pub fn write_ivecs(mut w: impl Write, rows: &[Vec<u32>]) -> Result<()> {
    for row in rows {
        if row.is_empty() {
            return Err(Error::format("ivecs records cannot be empty"));
        }
        w.write_i32::<LittleEndian>(row.len() as i32)?;
        for &v in row {
            w.write_i32::<LittleEndian>(i32::try_from(v).map_err(|_| Error::format("id too large for ivecs"))?)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_ids(line: &str, lineno: usize) -> Result<Vec<u32>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<u32>()
                .map_err(|_| Error::format(format!("line {lineno}: bad id '{t}'")))
        })
        .collect()
}

pub fn read_sparse_text(r: impl BufRead, universe: Option<u32>) -> Result<Dataset> {
    let mut records = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_ids(&line, i + 1)?);
    }
    Dataset::from_sparse(records, universe)
}

pub fn write_sparse_text(mut w: impl Write, dataset: &Dataset) -> Result<()> {
    for rec in dataset.records() {
        let Record::Sparse(items) = rec else {
            return Err(Error::format("sparse text holds sparse data only"));
        };
        let line: Vec<String> = items.iter().map(u32::to_string).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ids(r: impl BufRead) -> Result<Vec<u32>> {
    let mut ids = Vec::new();
    for (i, line) in r.lines().enumerate() {
        ids.extend(parse_ids(&line?, i + 1)?);
    }
    Ok(ids)
}

pub fn write_ids(mut w: impl Write, ids: &[u32]) -> Result<()> {
    for id in ids {
        writeln!(w, "{id}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_graph(mut w: impl Write, graph: &KnnGraph) -> Result<()> {
    let n = graph.len();
    let implicit = graph.members().iter().enumerate().all(|(i, &m)| m as usize == i);
    w.write_all(GRAPH_MAGIC)?;
    for v in [GRAPH_VERSION, n as u32, graph.k() as u32, graph.metric().tag(), !implicit as u32] {
        w.write_u32::<LittleEndian>(v)?;
    }
    if !implicit {
        for &m in graph.members() {
            w.write_u32::<LittleEndian>(m)?;
        }
    }
    for list in graph.lists() {
        for e in list.iter() {
            w.write_u32::<LittleEndian>(e.id)?;
            w.write_f32::<LittleEndian>(e.dist)?;
        }
        for _ in list.len()..graph.k() {
            w.write_u32::<LittleEndian>(PAD_ID)?;
            w.write_f32::<LittleEndian>(f32::INFINITY)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_graph(mut r: impl Read) -> Result<KnnGraph> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != GRAPH_MAGIC {
        return Err(Error::format("not a graph file (bad magic)"));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != GRAPH_VERSION {
        return Err(Error::format(format!("unsupported graph version {version}")));
    }
    let n = r.read_u32::<LittleEndian>()? as usize;
    let k = r.read_u32::<LittleEndian>()? as usize;
    let tag = r.read_u32::<LittleEndian>()?;
    let metric = Metric::from_tag(tag).ok_or_else(|| Error::format(format!("unknown metric tag {tag}")))?;
    let members = match r.read_u32::<LittleEndian>()? {
        0 => (0..n as u32).collect(),
        1 => {
            let mut m = vec![0u32; n];
            r.read_u32_into::<LittleEndian>(&mut m)?;
            m
        }
        f => return Err(Error::format(format!("bad member flag {f}"))),
    };
    let mut lists = Vec::with_capacity(n);
    for _ in 0..n {
        let mut entries = Vec::with_capacity(k);
        for _ in 0..k {
            let id = r.read_u32::<LittleEndian>()?;
            let dist = r.read_f32::<LittleEndian>()?;
            if id != PAD_ID {
                entries.push(Neighbor { id, dist, is_new: false });
            }
        }
        let list = NeighborList::from_entries(k, entries.clone());
        if list.len() != entries.len() {
            return Err(Error::format("graph list contains duplicate ids"));
        }
        lists.push(list);
    }
    KnnGraph::new(k, metric, members, lists)
}

pub fn write_adjacency(mut w: impl Write, adj: &Adjacency) -> Result<()> {
    for list in adj.lists() {
        w.write_u32::<LittleEndian>(list.len() as u32)?;
        for &t in list {
            w.write_u32::<LittleEndian>(t)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_adjacency(mut r: impl Read, members: Vec<u32>) -> Result<Adjacency> {
    let mut lists = Vec::with_capacity(members.len());
    for _ in 0..members.len() {
        let deg = r.read_u32::<LittleEndian>()? as usize;
        let mut list = vec![0u32; deg];
        r.read_u32_into::<LittleEndian>(&mut list)?;
        lists.push(list);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::format("adjacency file has more vertices than its member list"));
    }
    Adjacency::new(members, lists)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Loads `.fvecs` as dense data and anything else as sparse text.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    if path.extension().is_some_and(|e| e == "fvecs") {
        read_fvecs(open(path)?)
    } else {
        read_sparse_text(open(path)?, None)
    }
}

pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    if path.extension().is_some_and(|e| e == "fvecs") {
        write_fvecs(create(path)?, dataset)
    } else {
        write_sparse_text(create(path)?, dataset)
    }
}

pub fn load_ids(path: &Path) -> Result<Vec<u32>> {
    read_ids(open(path)?)
}

pub fn save_ids(path: &Path, ids: &[u32]) -> Result<()> {
    write_ids(create(path)?, ids)
}

pub fn load_ivecs(path: &Path) -> Result<Vec<Vec<u32>>> {
    read_ivecs(open(path)?)
}

pub fn save_ivecs(path: &Path, rows: &[Vec<u32>]) -> Result<()> {
    write_ivecs(create(path)?, rows)
}

pub fn load_graph(path: &Path) -> Result<KnnGraph> {
    read_graph(open(path)?)
}

pub fn save_graph(path: &Path, graph: &KnnGraph) -> Result<()> {
    write_graph(create(path)?, graph)
}

pub fn load_adjacency(path: &Path, members: Vec<u32>) -> Result<Adjacency> {
    read_adjacency(open(path)?, members)
}

pub fn save_adjacency(path: &Path, adj: &Adjacency) -> Result<()> {
    write_adjacency(create(path)?, adj)
}

pub fn save_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::format(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}
