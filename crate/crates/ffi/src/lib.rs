//! C interface to knn-merge.
//!
//! All objects are opaque handles created by `km_*` constructors and released
//! with the matching `km_*_free`. Every fallible call returns a [`KmStatus`];
//! on failure the message is available from [`km_last_error`] on the same
//! thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use knn_merge::construct::{brute_force_on, nn_descent_on};
use knn_merge::eval::graph_recall;
use knn_merge::merge::h_merge;
use knn_merge::{
    generate_uniform, hierarchical_search, io, j_merge, s_merge, Dataset, DescentParams, DiversifyParams, Error,
    Evaluator, Hierarchy, KnnGraph, MergeParams, Metric, Record, SearchParams,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    /// A panic was caught at the boundary.
    Internal = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KmMetric {
    L1 = 0,
    L2 = 1,
    Cosine = 2,
    Jaccard = 3,
}

impl From<KmMetric> for Metric {
    fn from(m: KmMetric) -> Metric {
        match m {
            KmMetric::L1 => Metric::L1,
            KmMetric::L2 => Metric::L2,
            KmMetric::Cosine => Metric::Cosine,
            KmMetric::Jaccard => Metric::Jaccard,
        }
    }
}

/// Opaque dataset handle.
pub struct KmDataset(Dataset);

/// Opaque k-NN graph handle.
pub struct KmGraph(KnnGraph);

/// Opaque search hierarchy handle.
pub struct KmHierarchy(Hierarchy);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> KmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KmStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            KmStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg);
            KmStatus::InvalidArgument
        }
        Ok(Err(Fail::Lib(e))) => {
            let status = match e {
                Error::Io(_) => KmStatus::Io,
                Error::Format(_) => KmStatus::Format,
                _ => KmStatus::InvalidArgument,
            };
            set_error(e.to_string());
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            KmStatus::Internal
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    unsafe { p.as_ref() }.ok_or(Fail::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    let s = unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| Fail::Arg("path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut T, v: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    unsafe { out.write(v) };
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(unsafe { Box::from_raw(p) });
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn km_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Uniform random dense dataset in [0, 1)^d.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn km_dataset_generate(n: usize, d: usize, seed: u64, out: *mut *mut KmDataset) -> KmStatus {
    guard(|| {
        let ds = generate_uniform(n, d, seed)?;
        unsafe { put(out, boxed(KmDataset(ds)), "out") }
    })
}

/// Dense dataset copied from `n` rows of `d` floats, row-major.
///
/// # Safety
/// `values` must point to `n * d` floats and `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn km_dataset_from_dense(
    values: *const f32,
    n: usize,
    d: usize,
    out: *mut *mut KmDataset,
) -> KmStatus {
    guard(|| {
        let len = n.checked_mul(d).ok_or_else(|| Fail::Arg("n * d overflows".into()))?;
        let v = unsafe { slice(values, len, "values") }?;
        let ds = Dataset::from_dense(d, v.to_vec())?;
        unsafe { put(out, boxed(KmDataset(ds)), "out") }
    })
}

/// Loads an fvecs file (or sparse text for any other extension).
///
/// # Safety
/// `file` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn km_dataset_load(file: *const c_char, out: *mut *mut KmDataset) -> KmStatus {
    guard(|| {
        let ds = io::load_dataset(&unsafe { path(file) }?)?;
        unsafe { put(out, boxed(KmDataset(ds)), "out") }
    })
}

/// Number of records, or 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn km_dataset_len(ds: *const KmDataset) -> usize {
    unsafe { ds.as_ref() }.map_or(0, |d| d.0.len())
}

/// # Safety
/// `ds` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn km_dataset_free(ds: *mut KmDataset) {
    unsafe { free(ds) }
}

unsafe fn members(ids: *const u32, n_ids: usize, ds: &Dataset) -> Result<Vec<u32>, Fail> {
    if ids.is_null() && n_ids == 0 {
        return Ok((0..ds.len() as u32).collect());
    }
    Ok(unsafe { slice(ids, n_ids, "ids") }?.to_vec())
}

/// NN-Descent over `ids` (all records when `ids` is NULL and `n_ids` is 0).
/// `evaluations` may be NULL.
///
/// # Safety
/// Pointers must be valid for the given lengths; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn km_nn_descent(
    ds: *const KmDataset,
    metric: KmMetric,
    ids: *const u32,
    n_ids: usize,
    k: usize,
    seed: u64,
    out: *mut *mut KmGraph,
    evaluations: *mut u64,
) -> KmStatus {
    guard(|| {
        let ds = &unsafe { get(ds, "dataset") }?.0;
        let ev = Evaluator::new(ds, metric.into())?;
        let (g, rep) = nn_descent_on(&ev, unsafe { members(ids, n_ids, ds) }?, &DescentParams::new(k), seed)?;
        if !evaluations.is_null() {
            unsafe { evaluations.write(rep.evaluations) };
        }
        unsafe { put(out, boxed(KmGraph(g)), "out") }
    })
}

/// Exact graph over `ids` (all records when `ids` is NULL and `n_ids` is 0).
///
/// # Safety
/// As for [`km_nn_descent`].
#[no_mangle]
pub unsafe extern "C" fn km_brute_force(
    ds: *const KmDataset,
    metric: KmMetric,
    ids: *const u32,
    n_ids: usize,
    k: usize,
    out: *mut *mut KmGraph,
) -> KmStatus {
    guard(|| {
        let ds = &unsafe { get(ds, "dataset") }?.0;
        let ev = Evaluator::new(ds, metric.into())?;
        let g = brute_force_on(&ev, unsafe { members(ids, n_ids, ds) }?, k)?;
        unsafe { put(out, boxed(KmGraph(g)), "out") }
    })
}

fn merge_params(g: &KnnGraph, r: f64, seed: u64) -> MergeParams {
    MergeParams { r, seed, ..MergeParams::new(g.k()) }
}

/// Symmetric merge of two graphs over disjoint id sets. `r` is the fraction
/// of each list refilled from the other set.
///
/// # Safety
/// Handles must be live; `out` valid for writes; `evaluations` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn km_s_merge(
    ds: *const KmDataset,
    g: *const KmGraph,
    h: *const KmGraph,
    r: f64,
    seed: u64,
    out: *mut *mut KmGraph,
    evaluations: *mut u64,
) -> KmStatus {
    guard(|| {
        let ds = &unsafe { get(ds, "dataset") }?.0;
        let (g, h) = (&unsafe { get(g, "g") }?.0, &unsafe { get(h, "h") }?.0);
        let ev = Evaluator::new(ds, g.metric())?;
        let (u, rep) = s_merge(&ev, g, h, &merge_params(g, r, seed))?;
        if !evaluations.is_null() {
            unsafe { evaluations.write(rep.evaluations) };
        }
        unsafe { put(out, boxed(KmGraph(u)), "out") }
    })
}

/// Joint merge of raw `ids` into `g`.
///
/// # Safety
/// As for [`km_s_merge`]; `ids` must hold `n_ids` values.
#[no_mangle]
pub unsafe extern "C" fn km_j_merge(
    ds: *const KmDataset,
    g: *const KmGraph,
    ids: *const u32,
    n_ids: usize,
    r: f64,
    seed: u64,
    out: *mut *mut KmGraph,
    evaluations: *mut u64,
) -> KmStatus {
    guard(|| {
        let ds = &unsafe { get(ds, "dataset") }?.0;
        let g = &unsafe { get(g, "g") }?.0;
        let raw = unsafe { slice(ids, n_ids, "ids") }?;
        let ev = Evaluator::new(ds, g.metric())?;
        let (u, rep) = j_merge(&ev, g, raw, &merge_params(g, r, seed))?;
        if !evaluations.is_null() {
            unsafe { evaluations.write(rep.evaluations) };
        }
        unsafe { put(out, boxed(KmGraph(u)), "out") }
    })
}

/// Number of vertices, or 0 for NULL.
///
/// # Safety
/// `g` must be NULL or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn km_graph_len(g: *const KmGraph) -> usize {
    unsafe { g.as_ref() }.map_or(0, |g| g.0.len())
}

/// List capacity k, or 0 for NULL.
///
/// # Safety
/// `g` must be NULL or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn km_graph_k(g: *const KmGraph) -> usize {
    unsafe { g.as_ref() }.map_or(0, |g| g.0.k())
}

/// Copies up to `cap` neighbors of vertex `id`, nearest first. `dists` may be
/// NULL; `len` receives the number written.
///
/// # Safety
/// `ids` (and `dists` if given) must hold `cap` values; `len` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn km_graph_neighbors(
    g: *const KmGraph,
    id: u32,
    ids: *mut u32,
    dists: *mut f32,
    cap: usize,
    len: *mut usize,
) -> KmStatus {
    guard(|| {
        let g = &unsafe { get(g, "graph") }?.0;
        let pos = g.position_map().get(id).ok_or_else(|| Fail::Arg(format!("vertex {id} is not in the graph")))?;
        let list = g.list(pos).entries();
        let m = list.len().min(cap);
        if m > 0 && ids.is_null() {
            return Err(Fail::Null("ids"));
        }
        for (i, e) in list[..m].iter().enumerate() {
            unsafe { ids.add(i).write(e.id) };
            if !dists.is_null() {
                unsafe { dists.add(i).write(e.dist) };
            }
        }
        unsafe { put(len, m, "len") }
    })
}

/// Mean recall@k of `g` against `truth`.
///
/// # Safety
/// Handles must be live; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn km_graph_recall(
    g: *const KmGraph,
    truth: *const KmGraph,
    k: usize,
    out: *mut f64,
) -> KmStatus {
    guard(|| {
        let r = graph_recall(&unsafe { get(g, "graph") }?.0, &unsafe { get(truth, "truth") }?.0, k)?;
        unsafe { put(out, r, "out") }
    })
}

/// # Safety
/// `g` must be live and `file` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn km_graph_save(g: *const KmGraph, file: *const c_char) -> KmStatus {
    guard(|| Ok(io::save_graph(&unsafe { path(file) }?, &unsafe { get(g, "graph") }?.0)?))
}

/// # Safety
/// `file` must be NUL-terminated and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn km_graph_load(file: *const c_char, out: *mut *mut KmGraph) -> KmStatus {
    guard(|| {
        let g = io::load_graph(&unsafe { path(file) }?)?;
        unsafe { put(out, boxed(KmGraph(g)), "out") }
    })
}

/// # Safety
/// `g` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn km_graph_free(g: *mut KmGraph) {
    unsafe { free(g) }
}

/// Builds layers of the given sizes (top first, last equal to the dataset
/// size) by hierarchical merging, then diversifies them for search.
///
/// # Safety
/// `sizes` must hold `n_sizes` values; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn km_hierarchy_build(
    ds: *const KmDataset,
    metric: KmMetric,
    k: usize,
    sizes: *const usize,
    n_sizes: usize,
    seed: u64,
    out: *mut *mut KmHierarchy,
) -> KmStatus {
    guard(|| {
        let ds = &unsafe { get(ds, "dataset") }?.0;
        let sizes = unsafe { slice(sizes, n_sizes, "sizes") }?;
        let ev = Evaluator::new(ds, metric.into())?;
        let (_, pyr, _) = h_merge(&ev, &MergeParams { seed, ..MergeParams::new(k) }, sizes)?;
        let h = pyr.diversify(&ev, &DiversifyParams::default());
        unsafe { put(out, boxed(KmHierarchy(h)), "out") }
    })
}

/// # Safety
/// `dir` must be NUL-terminated and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn km_hierarchy_load(dir: *const c_char, out: *mut *mut KmHierarchy) -> KmStatus {
    guard(|| {
        let h = Hierarchy::load(&unsafe { path(dir) }?)?;
        unsafe { put(out, boxed(KmHierarchy(h)), "out") }
    })
}

/// # Safety
/// `h` must be live and `dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn km_hierarchy_save(h: *const KmHierarchy, dir: *const c_char) -> KmStatus {
    guard(|| Ok(unsafe { get(h, "hierarchy") }?.0.save(&unsafe { path(dir) }?)?))
}

/// Searches for a dense query of `dim` floats. Writes up to `cap` results
/// nearest first; `dists` and `evaluations` may be NULL.
///
/// # Safety
/// `query` must hold `dim` floats, `ids` (and `dists`) `cap` values.
#[no_mangle]
pub unsafe extern "C" fn km_hierarchy_search(
    h: *const KmHierarchy,
    ds: *const KmDataset,
    query: *const f32,
    dim: usize,
    pool: usize,
    seed: u64,
    ids: *mut u32,
    dists: *mut f32,
    cap: usize,
    len: *mut usize,
    evaluations: *mut u64,
) -> KmStatus {
    guard(|| {
        let h = &unsafe { get(h, "hierarchy") }?.0;
        let ds = &unsafe { get(ds, "dataset") }?.0;
        let q = unsafe { slice(query, dim, "query") }?;
        let p = SearchParams { seed, ..SearchParams::new(pool) };
        let r = hierarchical_search(h, ds, Record::Dense(q), &p)?;
        let m = r.neighbors.len().min(cap);
        if m > 0 && ids.is_null() {
            return Err(Fail::Null("ids"));
        }
        for (i, &(id, d)) in r.neighbors[..m].iter().enumerate() {
            unsafe { ids.add(i).write(id) };
            if !dists.is_null() {
                unsafe { dists.add(i).write(d) };
            }
        }
        if !evaluations.is_null() {
            unsafe { evaluations.write(r.distance_evals) };
        }
        unsafe { put(len, m, "len") }
    })
}

/// # Safety
/// `h` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn km_hierarchy_free(h: *mut KmHierarchy) {
    unsafe { free(h) }
}
