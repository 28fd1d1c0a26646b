//! Distance metrics and instrumented evaluation.
//!
//! `L2` is the *squared* Euclidean distance everywhere in this crate: every
//! stored, compared and reported L2 value is squared. Neighbor ordering and
//! recall are unaffected by the monotone square.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use crossbeam_utils::CachePadded;
use serde::{Deserialize, Serialize};

use crate::dataset::{DataKind, Dataset, Record};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L1,
    L2,
    Cosine,
    Jaccard,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::L1, Metric::L2, Metric::Cosine, Metric::Jaccard];

    /// Numeric tag used in binary file headers.
    pub fn tag(self) -> u32 {
        match self {
            Metric::L1 => 1,
            Metric::L2 => 2,
            Metric::Cosine => 3,
            Metric::Jaccard => 4,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::L1 => "l1",
            Metric::L2 => "l2",
            Metric::Cosine => "cosine",
            Metric::Jaccard => "jaccard",
        }
    }

    pub fn data_kind(self) -> DataKind {
        match self {
            Metric::Jaccard => DataKind::Sparse,
            _ => DataKind::Dense,
        }
    }

    pub fn check_dataset(self, dataset: &Dataset) -> Result<()> {
        if dataset.kind() != self.data_kind() {
            return Err(Error::MetricMismatch {
                metric: self,
                kind: dataset.kind().name(),
            });
        }
        Ok(())
    }

    /// Checked distance between two records.
    pub fn distance(self, a: Record<'_>, b: Record<'_>) -> Result<f32> {
        match (a, b) {
            (Record::Dense(x), Record::Dense(y)) if self.data_kind() == DataKind::Dense => {
                if x.len() != y.len() {
                    return Err(Error::DimensionMismatch {
                        expected: x.len(),
                        actual: y.len(),
                    });
                }
                Ok(self.eval(a, b))
            }
            (Record::Sparse(_), Record::Sparse(_)) if self == Metric::Jaccard => {
                Ok(self.eval(a, b))
            }
            (Record::Dense(_), Record::Dense(_)) | (Record::Sparse(_), Record::Sparse(_)) => {
                Err(Error::MetricMismatch {
                    metric: self,
                    kind: a.kind().name(),
                })
            }
            _ => Err(Error::InvalidDataset(
                "cannot compare a dense record with a sparse record".into(),
            )),
        }
    }

    /// Unchecked evaluation; callers guarantee kind and dimension agree.
    #[inline]
    pub(crate) fn eval(self, a: Record<'_>, b: Record<'_>) -> f32 {
        match (self, a, b) {
            (Metric::L1, Record::Dense(x), Record::Dense(y)) => l1(x, y),
            (Metric::L2, Record::Dense(x), Record::Dense(y)) => l2_squared(x, y),
            (Metric::Cosine, Record::Dense(x), Record::Dense(y)) => cosine(x, y),
            (Metric::Jaccard, Record::Sparse(x), Record::Sparse(y)) => jaccard(x, y),
            _ => unreachable!("metric/record kind mismatch"),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Metric::L1),
            "l2" => Ok(Metric::L2),
            "cosine" => Ok(Metric::Cosine),
            "jaccard" => Ok(Metric::Jaccard),
            other => Err(Error::param(format!("unknown metric '{other}'"))),
        }
    }
}

const LANES: usize = 8;

#[inline]
pub fn l1(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let tail: f32 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| (x - y).abs())
        .sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..LANES {
            acc[i] += (x[i] - y[i]).abs();
        }
    }
    acc.iter().sum::<f32>() + tail
}

#[inline]
pub fn l2_squared(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let tail: f32 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..LANES {
            let t = x[i] - y[i];
            acc[i] += t * t;
        }
    }
    acc.iter().sum::<f32>() + tail
}

/// `1 - cos(a, b)`, clamped to `[0, 2]`. Two zero vectors are at distance 0;
/// a zero vector and a non-zero vector are at distance 1.
#[inline]
pub fn cosine(a: &[f32], b: &[f32]) -> f32 {
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return if na == nb { 0.0 } else { 1.0 };
    }
    let d = 1.0 - dot / (na * nb).sqrt();
    d.clamp(0.0, 2.0) as f32
}

/// `1 - |a ∩ b| / |a ∪ b|` over strictly ascending id lists.
#[inline]
pub fn jaccard(a: &[u32], b: &[u32]) -> f32 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return 0.0;
    }
    1.0 - inter as f32 / union as f32
}

const SHARDS: usize = 64;

/// Monotone tally of distance evaluations.
///
/// Increments land in per-worker shards so parallel builds do not contend on
/// one cache line; [`DistanceCounter::get`] sums the shards.
pub struct DistanceCounter {
    shards: Box<[CachePadded<AtomicU64>]>,
}

impl DistanceCounter {
    pub fn new() -> Self {
        DistanceCounter {
            shards: (0..SHARDS).map(|_| CachePadded::new(AtomicU64::new(0))).collect(),
        }
    }

    #[inline]
    pub fn add(&self, n: u64) {
        let shard = rayon::current_thread_index().unwrap_or(0) % SHARDS;
        self.shards[shard].fetch_add(n, Ordering::Relaxed);
    }

    #[inline]
    pub fn incr(&self) {
        self.add(1);
    }

    pub fn get(&self) -> u64 {
        self.shards.iter().map(|s| s.load(Ordering::Relaxed)).sum()
    }
}

impl Default for DistanceCounter {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for DistanceCounter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DistanceCounter").field("count", &self.get()).finish()
    }
}

/// Counted distance between two records, validated for kind and dimension.
pub fn distance(
    metric: Metric,
    a: Record<'_>,
    b: Record<'_>,
    counter: &DistanceCounter,
) -> Result<f32> {
    let d = metric.distance(a, b)?;
    counter.incr();
    Ok(d)
}

/// Source of pairwise distances between dataset ids.
///
/// Builders, merges and diversification only ever see distances through this
/// trait. Tests wrap it to count calls independently or to record which
/// pairs were compared.
pub trait PairDistance: Sync {
    /// Number of addressable ids (`0..num_points()`).
    fn num_points(&self) -> usize;

    fn metric(&self) -> Metric;

    fn distance(&self, a: u32, b: u32) -> f32;
}

/// A dataset paired with a metric and an evaluation counter.
pub struct Evaluator<'a> {
    dataset: &'a Dataset,
    metric: Metric,
    counter: DistanceCounter,
}

impl<'a> Evaluator<'a> {
    pub fn new(dataset: &'a Dataset, metric: Metric) -> Result<Self> {
        metric.check_dataset(dataset)?;
        Ok(Evaluator {
            dataset,
            metric,
            counter: DistanceCounter::new(),
        })
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn counter(&self) -> &DistanceCounter {
        &self.counter
    }

    /// Distance evaluations performed so far.
    pub fn evaluations(&self) -> u64 {
        self.counter.get()
    }
}

impl PairDistance for Evaluator<'_> {
    fn num_points(&self) -> usize {
        self.dataset.len()
    }

    fn metric(&self) -> Metric {
        self.metric
    }

    #[inline]
    fn distance(&self, a: u32, b: u32) -> f32 {
        self.counter.incr();
        self.metric.eval(self.dataset.record(a), self.dataset.record(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense(metric: Metric, a: &[f32], b: &[f32]) -> f32 {
        metric.distance(Record::Dense(a), Record::Dense(b)).unwrap()
    }

    #[test]
    fn worked_examples() {
        let c = DistanceCounter::new();
        let d = distance(Metric::L2, Record::Dense(&[0.5, 0.5]), Record::Dense(&[0.5, 0.5]), &c);
        assert_eq!(d.unwrap(), 0.0);
        assert_eq!(c.get(), 1);
        let d = distance(Metric::Jaccard, Record::Sparse(&[1, 2]), Record::Sparse(&[3, 4]), &c);
        assert_eq!(d.unwrap(), 1.0);
        assert_eq!(dense(Metric::L1, &[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]), 6.0);
        assert_eq!(dense(Metric::Cosine, &[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(c.get(), 2);
    }

    #[test]
    fn l2_is_squared() {
        assert_eq!(dense(Metric::L2, &[0.0, 0.0], &[3.0, 4.0]), 25.0);
    }

    #[test]
    fn jaccard_partial_overlap() {
        let d = Metric::Jaccard
            .distance(Record::Sparse(&[1, 2, 3]), Record::Sparse(&[2, 3, 4]))
            .unwrap();
        assert!((d - 0.5).abs() < 1e-7);
    }

    #[test]
    fn cosine_zero_vectors() {
        assert_eq!(dense(Metric::Cosine, &[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(dense(Metric::Cosine, &[0.0, 0.0], &[1.0, 0.0]), 1.0);
    }

    #[test]
    fn mismatches_are_errors() {
        let c = DistanceCounter::new();
        assert!(matches!(
            distance(Metric::L2, Record::Dense(&[1.0]), Record::Dense(&[1.0, 2.0]), &c),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            Metric::Jaccard.distance(Record::Dense(&[1.0]), Record::Dense(&[1.0])),
            Err(Error::MetricMismatch { .. })
        ));
        assert!(matches!(
            Metric::L1.distance(Record::Sparse(&[1]), Record::Sparse(&[1])),
            Err(Error::MetricMismatch { .. })
        ));
        assert!(Metric::L1.distance(Record::Sparse(&[1]), Record::Dense(&[1.0])).is_err());
        assert_eq!(c.get(), 0);

        let ds = Dataset::from_sparse(vec![vec![1]], None).unwrap();
        assert!(Evaluator::new(&ds, Metric::L2).is_err());
    }

    #[test]
    fn tags_round_trip() {
        for m in Metric::ALL {
            assert_eq!(Metric::from_tag(m.tag()), Some(m));
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!("hamming".parse::<Metric>().is_err());
    }

    #[test]
    fn counter_sums_parallel_increments() {
        use rayon::prelude::*;
        let c = DistanceCounter::new();
        (0..10_000).into_par_iter().for_each(|_| c.incr());
        assert_eq!(c.get(), 10_000);
    }

    fn vec_pair() -> impl Strategy<Value = (Vec<f32>, Vec<f32>)> {
        (1usize..40).prop_flat_map(|d| {
            (
                prop::collection::vec(-10.0f32..10.0, d),
                prop::collection::vec(-10.0f32..10.0, d),
            )
        })
    }

    fn set() -> impl Strategy<Value = Vec<u32>> {
        prop::collection::btree_set(0u32..64, 1..20).prop_map(|s| s.into_iter().collect())
    }

    proptest! {
        #[test]
        fn dense_metrics_symmetric_with_identity((a, b) in vec_pair()) {
            for m in [Metric::L1, Metric::L2, Metric::Cosine] {
                let ab = dense(m, &a, &b);
                prop_assert_eq!(ab, dense(m, &b, &a));
                prop_assert!(ab >= 0.0 && ab.is_finite());
                prop_assert_eq!(dense(m, &a, &a), 0.0);
            }
        }

        #[test]
        fn jaccard_symmetric_with_identity(a in set(), b in set()) {
            let j = |x: &[u32], y: &[u32]| Metric::Jaccard.distance(Record::Sparse(x), Record::Sparse(y)).unwrap();
            prop_assert_eq!(j(&a, &b), j(&b, &a));
            prop_assert_eq!(j(&a, &a), 0.0);
            prop_assert!((0.0..=1.0).contains(&j(&a, &b)));
        }
    }
}
