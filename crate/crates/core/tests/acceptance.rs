//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fail. Pass criterion numbers as arguments to run a subset,
//! e.g. `cargo test --test acceptance -- 3 7`.

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use knn_merge::construct::{brute_force_queries, nn_descent_on};
use knn_merge::eval::graph_recall;
use knn_merge::merge::{doubling_layers, geometric_layers, h_merge};
use knn_merge::search::{flat_search, hierarchical_search};
use knn_merge::{
    brute_force_graph, diversify_list, generate_sparse, generate_uniform, j_merge, nn_descent, s_merge,
    scanning_rate, BuildReport, DescentParams, DiversifyParams, Evaluator, KnnGraph, MergeParams,
    Metric, Neighbor, PairDistance, SearchParams,
};

/// Every build and merge report produced by the suite, for the φ check.
#[derive(Default)]
struct Runs {
    reports: Vec<(String, bool, usize)>,
}

impl Runs {
    fn record(&mut self, label: impl Into<String>, r: &BuildReport) {
        assert!(r.lists_full, "rounds started from unfilled lists");
        self.reports.push((label.into(), r.phi_monotone(), r.rounds()));
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn halves(n: usize) -> (Vec<u32>, Vec<u32>) {
    ((0..n as u32 / 2).collect(), (n as u32 / 2..n as u32).collect())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Paired NN-Descent / S-Merge / J-Merge runs on equal halves.
struct Trio {
    nnd: (f64, u64),
    s: (f64, u64),
    j: (f64, u64),
}

fn trio(ev: &Evaluator<'_>, truth: &KnnGraph, k: usize, r: f64, seed: u64, runs: &mut Runs) -> Trio {
    let n = ev.num_points();
    let p = DescentParams::new(k);
    let (full, rep) = nn_descent(ev, &p, seed).unwrap();
    runs.record(format!("nnd n={n} seed={seed}"), &rep);
    let (a, b) = halves(n);
    let (ga, ra) = nn_descent_on(ev, a, &p, seed ^ 1).unwrap();
    let (gb, rb) = nn_descent_on(ev, b.clone(), &p, seed ^ 2).unwrap();
    runs.record("nnd half", &ra);
    runs.record("nnd half", &rb);
    let mp = MergeParams { k, r, seed, ..MergeParams::default() };
    let (sg, rs) = s_merge(ev, &ga, &gb, &mp).unwrap();
    runs.record(format!("s-merge n={n} seed={seed}"), &rs);
    let (jg, rj) = j_merge(ev, &ga, &b, &mp).unwrap();
    runs.record(format!("j-merge n={n} seed={seed}"), &rj);
    let rec = |g: &KnnGraph| graph_recall(g, truth, 10).unwrap();
    Trio {
        nnd: (rec(&full), rep.evaluations),
        s: (rec(&sg), rs.evaluations),
        j: (rec(&jg), rj.evaluations),
    }
}

fn c1(runs: &mut Runs) -> Verdict {
    let (mut rn, mut rs, mut rj) = (vec![], vec![], vec![]);
    for seed in 0..5 {
        let ds = generate_uniform(500, 4, 100 + seed).unwrap();
        let ev = Evaluator::new(&ds, Metric::L2).unwrap();
        let truth = brute_force_graph(&ev, 10).unwrap();
        let t = trio(&ev, &truth, 10, 0.5, seed, runs);
        rn.push(t.nnd.0);
        rs.push(t.s.0);
        rj.push(t.j.0);
    }
    let (n, s, j) = (mean(&rn), mean(&rs), mean(&rj));
    verdict(
        n >= 0.95 && s >= 0.95 && j >= 0.95,
        format!("recall@10 nnd {n:.4} s-merge {s:.4} j-merge {j:.4} (need >= 0.95)"),
    )
}

/// Shared by criteria 2 and 3: per dimension, mean recalls and scanning rates.
struct Parity {
    d: usize,
    recall: [f64; 3],
    rate: [f64; 3],
}

fn parity_runs(runs: &mut Runs) -> Vec<Parity> {
    let n = 20_000;
    [(10usize, 20usize), (50, 30)]
        .into_iter()
        .map(|(d, k)| {
            let mut recall = [vec![], vec![], vec![]];
            let mut rate = [vec![], vec![], vec![]];
            for seed in 0..5 {
                let ds = generate_uniform(n, d, 200 + seed).unwrap();
                let ev = Evaluator::new(&ds, Metric::L2).unwrap();
                let truth = brute_force_graph(&ev, 10).unwrap();
                let t = trio(&ev, &truth, k, 0.5, seed, runs);
                for (i, (r, c)) in [t.nnd, t.s, t.j].into_iter().enumerate() {
                    recall[i].push(r);
                    rate[i].push(scanning_rate(c, n));
                }
            }
            Parity {
                d,
                recall: [mean(&recall[0]), mean(&recall[1]), mean(&recall[2])],
                rate: [mean(&rate[0]), mean(&rate[1]), mean(&rate[2])],
            }
        })
        .collect()
}

fn c2(p: &[Parity]) -> Verdict {
    let mut ok = true;
    let mut parts = vec![];
    for x in p {
        let [n, s, j] = x.recall;
        ok &= n - s <= 0.03 && n - j <= 0.03;
        parts.push(format!("d={} nnd {n:.4} s {s:.4} j {j:.4}", x.d));
    }
    verdict(ok, format!("{} (merge within 0.03 of nnd)", parts.join("; ")))
}

fn c3(p: &[Parity]) -> Verdict {
    let x = p.iter().find(|x| x.d == 50).unwrap();
    let [n, s, j] = x.rate;
    let (rs, rj) = (s / n, j / n);
    verdict(
        (0.20..=0.45).contains(&rs) && (0.45..=0.80).contains(&rj),
        format!("rates nnd {n:.4} s {s:.4} j {j:.4}; s/nnd {rs:.3} in [0.20,0.45], j/nnd {rj:.3} in [0.45,0.80]"),
    )
}

fn c4(runs: &Runs) -> Verdict {
    let bad: Vec<&str> = runs.reports.iter().filter(|r| !r.1).map(|r| r.0.as_str()).collect();
    let rounds: usize = runs.reports.iter().map(|r| r.2).sum();
    verdict(
        bad.is_empty() && !runs.reports.is_empty(),
        format!(
            "{} runs, {rounds} rounds checked exactly, {} violations {:?}",
            runs.reports.len(),
            bad.len(),
            bad.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

/// Counts evaluations whose endpoints share a side.
struct Provenance<'a> {
    inner: Evaluator<'a>,
    first: Vec<bool>,
    both_first: AtomicU64,
    both_second: AtomicU64,
    total: AtomicU64,
}

impl PairDistance for Provenance<'_> {
    fn num_points(&self) -> usize {
        self.inner.num_points()
    }
    fn metric(&self) -> Metric {
        self.inner.metric()
    }
    fn distance(&self, a: u32, b: u32) -> f32 {
        self.total.fetch_add(1, Ordering::Relaxed);
        match (self.first[a as usize], self.first[b as usize]) {
            (true, true) => self.both_first.fetch_add(1, Ordering::Relaxed),
            (false, false) => self.both_second.fetch_add(1, Ordering::Relaxed),
            _ => 0,
        };
        self.inner.distance(a, b)
    }
}

fn c5(runs: &mut Runs) -> Verdict {
    let n = 4000;
    let ds = generate_uniform(n, 6, 500).unwrap();
    let ev = Evaluator::new(&ds, Metric::L2).unwrap();
    let p = DescentParams::new(12);
    // interleaved sides so provenance cannot line up with index ranges
    let a: Vec<u32> = (0..n as u32).filter(|i| i % 3 != 0).collect();
    let b: Vec<u32> = (0..n as u32).filter(|i| i % 3 == 0).collect();
    let (ga, _) = nn_descent_on(&ev, a.clone(), &p, 1).unwrap();
    let (gb, _) = nn_descent_on(&ev, b.clone(), &p, 2).unwrap();
    let mut first = vec![false; n];
    a.iter().for_each(|&i| first[i as usize] = true);
    let mut lines = vec![];
    let mut ok = true;
    for (r, seed) in [(0.5, 3u64), (0.2, 4), (0.0, 5), (1.0, 6)] {
        let mp = MergeParams { k: 12, r, seed, ..MergeParams::default() };
        let prov = Provenance {
            inner: Evaluator::new(&ds, Metric::L2).unwrap(),
            first: first.clone(),
            both_first: AtomicU64::new(0),
            both_second: AtomicU64::new(0),
            total: AtomicU64::new(0),
        };
        let (_, rs) = s_merge(&prov, &ga, &gb, &mp).unwrap();
        runs.record("s-merge provenance", &rs);
        let same = prov.both_first.load(Ordering::Relaxed) + prov.both_second.load(Ordering::Relaxed);
        let s_total = prov.total.swap(0, Ordering::Relaxed);
        prov.both_first.store(0, Ordering::Relaxed);
        let (_, rj) = j_merge(&prov, &ga, &b, &mp).unwrap();
        runs.record("j-merge provenance", &rj);
        let s1s1 = prov.both_first.load(Ordering::Relaxed);
        let j_total = prov.total.load(Ordering::Relaxed);
        ok &= same == 0 && s1s1 == 0 && j_total > 0 && (s_total > 0 || r == 0.0);
        ok &= s_total == rs.evaluations && j_total == rj.evaluations;
        lines.push(format!("r={r}: s same-set {same}/{s_total}, j S1-S1 {s1s1}/{j_total}"));
    }
    verdict(ok, lines.join("; "))
}

/// Independent pruning oracle over a precomputed occlusion matrix.
fn oracle_prune(owner_d: &[f32], pair: &[Vec<f32>]) -> Vec<usize> {
    let c = owner_d.len();
    let mut kept = vec![false; c];
    for i in 0..c {
        kept[i] = (0..i).all(|j| !kept[j] || pair[i][j] >= owner_d[i]);
    }
    (0..c).filter(|&i| kept[i]).collect()
}

fn c6() -> Verdict {
    let mut mismatches = 0;
    let mut witness_failures = 0;
    let mut pruned = 0usize;
    for t in 0..1000u64 {
        let ds = generate_uniform(50, 8, 6000 + t).unwrap();
        let ev = Evaluator::new(&ds, Metric::L2).unwrap();
        let owner = (t % 50) as u32;
        let m = |a: u32, b: u32| Metric::L2.distance(ds.record(a), ds.record(b)).unwrap();
        let mut nhood: Vec<Neighbor> = (0..50u32).filter(|&v| v != owner).map(|v| Neighbor::new(v, m(owner, v))).collect();
        nhood.sort_by(|x, y| x.dist.total_cmp(&y.dist).then(x.id.cmp(&y.id)));
        let got = diversify_list(owner, &nhood, &ev);

        let owner_d: Vec<f32> = nhood.iter().map(|e| e.dist).collect();
        let pair: Vec<Vec<f32>> = nhood.iter().map(|x| nhood.iter().map(|y| m(x.id, y.id)).collect()).collect();
        let want: Vec<u32> = oracle_prune(&owner_d, &pair).into_iter().map(|i| nhood[i].id).collect();
        if got != want {
            mismatches += 1;
        }
        let kept: HashSet<u32> = got.iter().copied().collect();
        if got.first() != Some(&nhood[0].id) {
            witness_failures += 1;
        }
        for (i, e) in nhood.iter().enumerate() {
            let earlier_kept = nhood[..i].iter().filter(|c| kept.contains(&c.id));
            let has_witness = earlier_kept.clone().any(|c| m(e.id, c.id) < m(e.id, owner));
            if kept.contains(&e.id) == has_witness {
                witness_failures += 1;
            }
            if !kept.contains(&e.id) {
                pruned += 1;
            }
        }
    }
    verdict(
        mismatches == 0 && witness_failures == 0,
        format!("1000 neighborhoods, {pruned} pruned edges, {mismatches} oracle mismatches, {witness_failures} witness failures"),
    )
}

fn c7(runs: &mut Runs) -> Verdict {
    let n = 20_000;
    let ds = generate_uniform(n, 8, 700).unwrap();
    let ev = Evaluator::new(&ds, Metric::L2).unwrap();
    let (_, nr) = nn_descent(&ev, &DescentParams::new(20), 7).unwrap();
    runs.record("nnd n=20000 d=8", &nr);
    let layers = doubling_layers(n, 64);
    let mp = MergeParams { k: 20, seed: 7, ..MergeParams::default() };
    let (_, _, hr) = h_merge(&ev, &mp, &layers).unwrap();
    runs.record("h-merge n=20000 d=8", &hr);
    let ratio = hr.evaluations as f64 / nr.evaluations as f64;
    verdict(
        ratio <= 2.2,
        format!(
            "{} layers, h-merge {} vs nnd {} evaluations, ratio {ratio:.3} (need <= 2.2)",
            layers.len(),
            hr.evaluations,
            nr.evaluations
        ),
    )
}

fn c8(runs: &mut Runs) -> Verdict {
    let n = 100_000;
    let ds = generate_uniform(n, 8, 800).unwrap();
    let queries = generate_uniform(1000, 8, 801).unwrap();
    let ev = Evaluator::new(&ds, Metric::L2).unwrap();
    let layers = geometric_layers(n, 64, 4);
    let mp = MergeParams { k: 20, seed: 8, ..MergeParams::default() };
    let (_, pyramid, hr) = h_merge(&ev, &mp, &layers).unwrap();
    runs.record("h-merge n=100000 d=8", &hr);
    let h = pyramid.diversify(&ev, &DiversifyParams::default());
    let truth = brute_force_queries(&ds, Metric::L2, &queries, 1).unwrap();

    let (mut hits_h, mut hits_f, mut evals_h, mut evals_f) = (0, 0, 0u64, 0u64);
    for q in 0..queries.len() as u32 {
        let p = SearchParams { pool_size: 16, seed: q as u64, entry: None };
        let rh = hierarchical_search(&h, &ds, queries.record(q), &p).unwrap();
        let rf = flat_search(h.bottom(), &ds, Metric::L2, queries.record(q), &p).unwrap();
        let want = truth[q as usize][0].0;
        hits_h += (rh.neighbors[0].0 == want) as u32;
        hits_f += (rf.neighbors[0].0 == want) as u32;
        evals_h += rh.distance_evals;
        evals_f += rf.distance_evals;
    }
    let nq = queries.len() as f64;
    let (rec_h, rec_f) = (hits_h as f64 / nq, hits_f as f64 / nq);
    let (me_h, me_f) = (evals_h as f64 / nq, evals_f as f64 / nq);
    verdict(
        rec_h >= 0.95 && me_h < 0.05 * n as f64 && me_h <= me_f && (rec_h - rec_f).abs() <= 0.01,
        format!(
            "layers {:?}; hierarchical recall@1 {rec_h:.3} mean evals {me_h:.1}; flat recall@1 {rec_f:.3} mean evals {me_f:.1} (need recall >= 0.95, evals < {}, hier <= flat, recalls within 0.01)",
            h.sizes(),
            0.05 * n as f64
        ),
    )
}

fn c9(runs: &mut Runs) -> Verdict {
    let (n, k) = (10_000, 30);
    let rs = [0.0, 0.2, 1.0 / 3.0, 0.5, 0.8];
    let mut s_rec = vec![0.0; rs.len()];
    let mut j_rec = [0.0; 2];
    let seeds = 20;
    for seed in 0..seeds {
        let ds = generate_uniform(n, 100, 900 + seed).unwrap();
        let ev = Evaluator::new(&ds, Metric::L2).unwrap();
        let truth = brute_force_graph(&ev, 10).unwrap();
        let p = DescentParams::new(k);
        let (a, b) = halves(n);
        let (ga, ra) = nn_descent_on(&ev, a, &p, seed).unwrap();
        let (gb, rb) = nn_descent_on(&ev, b.clone(), &p, seed + 1000).unwrap();
        runs.record("nnd half d=100", &ra);
        runs.record("nnd half d=100", &rb);
        for (i, &r) in rs.iter().enumerate() {
            let mp = MergeParams { k, r, seed, ..MergeParams::default() };
            let (g, rep) = s_merge(&ev, &ga, &gb, &mp).unwrap();
            runs.record(format!("s-merge r={r:.2}"), &rep);
            s_rec[i] += graph_recall(&g, &truth, 10).unwrap() / seeds as f64;
        }
        for (i, r) in [1.0 / 3.0, 0.5].into_iter().enumerate() {
            let mp = MergeParams { k, r, seed, ..MergeParams::default() };
            let (g, rep) = j_merge(&ev, &ga, &b, &mp).unwrap();
            runs.record(format!("j-merge r={r:.2}"), &rep);
            j_rec[i] += graph_recall(&g, &truth, 10).unwrap() / seeds as f64;
        }
    }
    let mid_beats_ends = s_rec[1..4].iter().all(|&m| m > s_rec[0] && m > s_rec[4]);
    let j_spread = (j_rec[0] - j_rec[1]).abs();
    verdict(
        mid_beats_ends && j_spread < 0.03,
        format!(
            "s-merge recall@10 by r {{0: {:.4}, 1/5: {:.4}, 1/3: {:.4}, 1/2: {:.4}, 4/5: {:.4}}}; j-merge 1/3 {:.4} 1/2 {:.4} spread {j_spread:.4} (< 0.03)",
            s_rec[0], s_rec[1], s_rec[2], s_rec[3], s_rec[4], j_rec[0], j_rec[1]
        ),
    )
}

/// Plain set-based Jaccard distance, independent of the library kernel.
fn naive_jaccard(a: &[u32], b: &[u32]) -> f64 {
    let sa: HashSet<u32> = a.iter().copied().collect();
    let sb: HashSet<u32> = b.iter().copied().collect();
    let inter = sa.intersection(&sb).count() as f64;
    1.0 - inter / sa.union(&sb).count() as f64
}

fn c10(runs: &mut Runs) -> Verdict {
    let (n, k) = (5000, 20);
    let (mut rn, mut rj) = (vec![], vec![]);
    let mut oracle_bad = 0;
    for seed in 0..3 {
        let ds = generate_sparse(n, 2000, 10, 50, 1000 + seed).unwrap();
        let ev = Evaluator::new(&ds, Metric::Jaccard).unwrap();
        let truth = brute_force_graph(&ev, 10).unwrap();
        // the k-th truth distance must equal the naive k-th smallest distance
        for v in (0..n as u32).step_by(97) {
            let rec = |i: u32| match ds.record(i) {
                knn_merge::Record::Sparse(s) => s,
                _ => unreachable!(),
            };
            let mut all: Vec<f64> = (0..n as u32).filter(|&u| u != v).map(|u| naive_jaccard(rec(v), rec(u))).collect();
            all.sort_by(f64::total_cmp);
            let got: Vec<f64> = truth.list(v as usize).iter().map(|e| e.dist as f64).collect();
            if got.iter().zip(&all).any(|(g, w)| (g - w).abs() > 1e-6) {
                oracle_bad += 1;
            }
        }
        let p = DescentParams::new(k);
        let (full, nr) = nn_descent(&ev, &p, seed).unwrap();
        runs.record("nnd jaccard", &nr);
        let (a, b) = halves(n);
        let (ga, ra) = nn_descent_on(&ev, a, &p, seed + 10).unwrap();
        runs.record("nnd half jaccard", &ra);
        let mp = MergeParams { k, seed, ..MergeParams::default() };
        let (jg, jr) = j_merge(&ev, &ga, &b, &mp).unwrap();
        runs.record("j-merge jaccard", &jr);
        rn.push(graph_recall(&full, &truth, 10).unwrap());
        rj.push(graph_recall(&jg, &truth, 10).unwrap());
    }
    let (n_, j) = (mean(&rn), mean(&rj));
    verdict(
        oracle_bad == 0 && (n_ - j).abs() <= 0.03,
        format!("recall@10 nnd {n_:.4} j-merge {j:.4} (within 0.03); brute-force oracle mismatches {oracle_bad}"),
    )
}

struct Line {
    criterion: u32,
    pass: bool,
}

fn report(lines: &mut Vec<Line>, c: u32, name: &str, v: Verdict, el: Duration, budget: Option<u64>) {
    let in_time = budget.is_none_or(|b| el <= Duration::from_secs(b));
    print_line(c, name, &v, el, budget);
    lines.push(Line { criterion: c, pass: v.pass && in_time });
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

fn main() {
    let _ = env_logger::builder().is_test(true).try_init();
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |c: u32| wanted.is_empty() || wanted.contains(&c);
    let mut runs = Runs::default();
    let mut lines = Vec::new();

    if want(1) {
        let (v, el) = timed(|| c1(&mut runs));
        report(&mut lines, 1, "oracle equivalence", v, el, Some(10));
    }
    if want(2) || want(3) {
        // 2 and 3 share the same runs and the same budget
        let (p, el) = timed(|| parity_runs(&mut runs));
        report(&mut lines, 2, "merge quality parity", c2(&p), el, Some(180));
        report(&mut lines, 3, "cost ratios", c3(&p), el, Some(180));
    }
    if want(5) {
        let (v, el) = timed(|| c5(&mut runs));
        report(&mut lines, 5, "cross-set discipline", v, el, None);
    }
    if want(6) {
        let (v, el) = timed(c6);
        report(&mut lines, 6, "diversification soundness", v, el, Some(5));
    }
    if want(7) {
        let (v, el) = timed(|| c7(&mut runs));
        report(&mut lines, 7, "h-merge overhead", v, el, Some(120));
    }
    if want(8) {
        let (v, el) = timed(|| c8(&mut runs));
        report(&mut lines, 8, "hierarchical search", v, el, Some(300));
    }
    if want(9) {
        let (v, el) = timed(|| c9(&mut runs));
        report(&mut lines, 9, "r-ablation shape", v, el, Some(900));
    }
    if want(10) {
        let (v, el) = timed(|| c10(&mut runs));
        report(&mut lines, 10, "jaccard path", v, el, Some(120));
    }
    if want(4) {
        report(&mut lines, 4, "phi monotonicity", c4(&runs), Duration::ZERO, None);
    }

    let failed: Vec<u32> = lines.iter().filter(|l| !l.pass).map(|l| l.criterion).collect();
    println!("acceptance: {} passed, {} failed {:?}", lines.len() - failed.len(), failed.len(), failed);
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

fn print_line(c: u32, name: &str, v: &Verdict, el: Duration, budget: Option<u64>) {
    let in_time = budget.is_none_or(|b| el <= Duration::from_secs(b));
    let tag = if v.pass && in_time { "PASS" } else { "FAIL" };
    let time = match budget {
        Some(b) => format!(" [{:.1}s of {b}s{}]", el.as_secs_f64(), if in_time { "" } else { ", over budget" }),
        None if el > Duration::ZERO => format!(" [{:.1}s]", el.as_secs_f64()),
        None => String::new(),
    };
    println!("{tag} {c:>2} {name}: {}{time}", v.detail);
}
