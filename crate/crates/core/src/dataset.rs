//! In-memory datasets: dense float rows or sparse sorted item-id sets.
//!
//! Records are addressed by contiguous ids `0..len()`. A dataset is never
//! mutated after construction, so it can be shared freely across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::error::{Error, Result};

/// Borrowed view of one record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Record<'a> {
    Dense(&'a [f32]),
    Sparse(&'a [u32]),
}

impl Record<'_> {
    pub fn kind(&self) -> DataKind {
        match self {
            Record::Dense(_) => DataKind::Dense,
            Record::Sparse(_) => DataKind::Sparse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Dense,
    Sparse,
}

impl DataKind {
    pub fn name(self) -> &'static str {
        match self {
            DataKind::Dense => "dense",
            DataKind::Sparse => "sparse",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Dense {
        dim: usize,
        values: Vec<f32>,
    },
    Sparse {
        universe: u32,
        offsets: Vec<usize>,
        items: Vec<u32>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    storage: Storage,
}

impl Dataset {
    /// Builds a dense dataset from a row-major buffer of `values.len() / dim`
    /// rows. Every value must be finite.
    pub fn from_dense(dim: usize, values: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDataset("dimension must be at least 1".into()));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::InvalidDataset(format!(
                "{} values do not form rows of dimension {dim}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite value in row {}",
                pos / dim
            )));
        }
        Ok(Dataset {
            storage: Storage::Dense { dim, values },
        })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::from_dense(dim, values)
    }

    /// Builds a sparse dataset. Each record must be non-empty and strictly
    /// ascending. When `universe` is `None` it is inferred as `max id + 1`.
    pub fn from_sparse(records: Vec<Vec<u32>>, universe: Option<u32>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(records.len() + 1);
        let mut items = Vec::with_capacity(records.iter().map(Vec::len).sum());
        let mut max_id = 0u32;
        offsets.push(0);
        for (i, rec) in records.iter().enumerate() {
            if rec.is_empty() {
                return Err(Error::InvalidDataset(format!("sparse record {i} is empty")));
            }
            if rec.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidDataset(format!(
                    "sparse record {i} is not strictly ascending"
                )));
            }
            max_id = max_id.max(*rec.last().unwrap());
            items.extend_from_slice(rec);
            offsets.push(items.len());
        }
        let universe = match universe {
            Some(u) if !records.is_empty() && max_id >= u => {
                return Err(Error::InvalidDataset(format!(
                    "item id {max_id} exceeds universe {u}"
                )))
            }
            Some(u) => u,
            None => max_id + 1,
        };
        Ok(Dataset {
            storage: Storage::Sparse {
                universe,
                offsets,
                items,
            },
        })
    }

    pub fn len(&self) -> usize {
        match &self.storage {
            Storage::Dense { dim, values } => values.len() / dim,
            Storage::Sparse { offsets, .. } => offsets.len() - 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> DataKind {
        match &self.storage {
            Storage::Dense { .. } => DataKind::Dense,
            Storage::Sparse { .. } => DataKind::Sparse,
        }
    }

    /// Row dimension for dense data, vocabulary bound for sparse data.
    pub fn dim(&self) -> usize {
        match &self.storage {
            Storage::Dense { dim, .. } => *dim,
            Storage::Sparse { universe, .. } => *universe as usize,
        }
    }

    #[inline]
    pub fn record(&self, id: u32) -> Record<'_> {
        let i = id as usize;
        match &self.storage {
            Storage::Dense { dim, values } => Record::Dense(&values[i * dim..(i + 1) * dim]),
            Storage::Sparse { offsets, items, .. } => {
                Record::Sparse(&items[offsets[i]..offsets[i + 1]])
            }
        }
    }

    pub fn dense_values(&self) -> Option<&[f32]> {
        match &self.storage {
            Storage::Dense { values, .. } => Some(values),
            Storage::Sparse { .. } => None,
        }
    }

    pub fn records(&self) -> impl Iterator<Item = Record<'_>> + '_ {
        (0..self.len() as u32).map(move |i| self.record(i))
    }

    /// Copies the given records, in order, into a new dataset.
    pub fn select(&self, ids: &[u32]) -> Result<Self> {
        let n = self.len();
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= n) {
            return Err(Error::IdOutOfRange { id: bad, n });
        }
        match &self.storage {
            Storage::Dense { dim, values } => {
                let mut out = Vec::with_capacity(ids.len() * dim);
                for &id in ids {
                    let i = id as usize;
                    out.extend_from_slice(&values[i * dim..(i + 1) * dim]);
                }
                Self::from_dense(*dim, out)
            }
            Storage::Sparse { universe, .. } => {
                let recs = ids
                    .iter()
                    .map(|&id| match self.record(id) {
                        Record::Sparse(s) => s.to_vec(),
                        Record::Dense(_) => unreachable!(),
                    })
                    .collect();
                Self::from_sparse(recs, Some(*universe))
            }
        }
    }
}

/// Uniform dense data in `[0, 1)`.
///
/// Values come from ChaCha8 seeded with `seed_from_u64(seed)`, drawn row-major
/// as 24-bit-mantissa `f32`s, so any ChaCha8 implementation reproduces them.
pub fn generate_uniform(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::param("generate_uniform needs n >= 1 and d >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n * d).map(|_| rng.random::<f32>()).collect();
    Dataset::from_dense(d, values)
}

/// Synthetic itemsets: each record has a uniform length in
/// `[min_len, max_len]` with items drawn without replacement from a Zipf
/// (exponent 1) popularity law over `0..universe`, so records overlap the
/// way real basket data does.
pub fn generate_sparse(
    n: usize,
    universe: u32,
    min_len: usize,
    max_len: usize,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 || min_len == 0 || min_len > max_len || max_len > universe as usize {
        return Err(Error::param(format!(
            "generate_sparse needs n >= 1 and 1 <= min_len <= max_len <= universe \
             (got n={n}, len {min_len}..={max_len}, universe {universe})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zipf = Zipf::new(universe as f64, 1.0).map_err(|e| Error::param(e.to_string()))?;
    let mut records = Vec::with_capacity(n);
    let mut seen = vec![false; universe as usize];
    for _ in 0..n {
        let len = rng.random_range(min_len..=max_len);
        let mut rec = Vec::with_capacity(len);
        while rec.len() < len {
            let item = zipf.sample(&mut rng) as u32 - 1;
            if !seen[item as usize] {
                seen[item as usize] = true;
                rec.push(item);
            }
        }
        for &item in &rec {
            seen[item as usize] = false;
        }
        rec.sort_unstable();
        records.push(rec);
    }
    Dataset::from_sparse(records, Some(universe))
}
