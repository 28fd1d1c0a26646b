use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use knn_merge::construct::{brute_force_on, brute_force_queries, nn_descent_on};
use knn_merge::eval::{graph_recall, recall_at_k};
use knn_merge::graph::phi;
use knn_merge::hierarchy::{HierarchyWriter, Pyramid};
use knn_merge::io;
use knn_merge::merge::{default_search_layers, doubling_layers, h_merge_with};
use knn_merge::search::{flat_search, hierarchical_search, SearchMode};
use knn_merge::{
    diversify_graph, generate_sparse, generate_uniform, j_merge, s_merge, scanning_rate, BuildReport, Dataset,
    DescentParams, DiversifyParams, Evaluator, Hierarchy, KnnGraph, MergeParams, Metric, SearchParams,
};

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "knn-merge", version, about = "Build, merge and search approximate k-NN graphs")]
struct Cli {
    /// Directory that relative paths are resolved against.
    #[arg(long, global = true, env = "KNN_MERGE_DATA", default_value = ".")]
    data_dir: PathBuf,
    /// Worker threads; 0 means all cores for builds and 1 for search.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Log per-round progress to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset (uniform dense fvecs, or sparse itemsets).
    Gen(GenArgs),
    /// Split the ids 0..n of a dataset into two disjoint id files.
    Split(SplitArgs),
    /// Build a k-NN graph with NN-Descent (or exactly with --exact).
    Build(BuildArgs),
    /// Exact ground truth: a graph file, or ivecs for --queries.
    Truth(TruthArgs),
    /// Symmetric merge of two graphs over disjoint id sets.
    Smerge(SmergeArgs),
    /// Joint merge of a raw id set into a graph.
    Jmerge(JmergeArgs),
    /// Hierarchical construction; writes the bottom graph and the layer pyramid.
    Hmerge(HmergeArgs),
    /// Diversify a graph or a pyramid into search adjacency.
    Diversify(DiversifyArgs),
    /// Run queries against a diversified hierarchy, sweeping pool sizes.
    Search(SearchArgs),
    /// Recall of a graph or of result lists against ground truth.
    Eval(EvalArgs),
    /// Sweep r and subset size ratios for both merges.
    Bench(BenchArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value = "l2")]
    metric: Metric,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    /// Dimension of dense data.
    #[arg(long, default_value_t = 8)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Generate sparse itemsets over this many items instead of dense data.
    #[arg(long)]
    universe: Option<u32>,
    #[arg(long, default_value_t = 10)]
    min_len: usize,
    #[arg(long, default_value_t = 50)]
    max_len: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Fraction of ids that go to the first set.
    #[arg(long, default_value_t = 0.5)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes <out>.1.ids and <out>.2.ids.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Restrict the graph to the ids in this file.
    #[arg(long)]
    ids: Option<PathBuf>,
    #[arg(long)]
    exact: bool,
    #[arg(long, default_value_t = 0.001)]
    min_update_fraction: f64,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TruthArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "l2")]
    metric: Metric,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Query file; writes ivecs of the k nearest dataset ids per query.
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MergeOpts {
    #[command(flatten)]
    common: Common,
    /// Fraction of each list cut off and refilled with cross-set samples.
    #[arg(long, default_value_t = 0.5)]
    r: f64,
    #[arg(long, default_value_t = 0.001)]
    min_update_fraction: f64,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
}

impl MergeOpts {
    fn params(&self) -> MergeParams {
        MergeParams {
            k: self.common.k,
            r: self.r,
            min_update_fraction: self.min_update_fraction,
            max_iters: self.max_iters,
            seed: self.common.seed,
        }
    }
}

#[derive(Args)]
struct SmergeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    g: PathBuf,
    #[arg(long)]
    h: PathBuf,
    #[command(flatten)]
    opts: MergeOpts,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct JmergeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    g: PathBuf,
    /// Id file of the raw set.
    #[arg(long)]
    ids: PathBuf,
    #[command(flatten)]
    opts: MergeOpts,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HmergeArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    opts: MergeOpts,
    /// Comma-separated layer sizes, top first; `n` stands for the dataset
    /// size. Default 64,512,4096,32768,n.
    #[arg(long)]
    layers: Option<String>,
    /// Use layers that double from the bottom up to at least this top size.
    #[arg(long, conflicts_with = "layers")]
    doubling: Option<usize>,
    /// Output directory for the pyramid; the bottom graph goes to
    /// <out>/graph.knng.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiversifyArgs {
    #[arg(long)]
    data: PathBuf,
    /// A single graph file.
    #[arg(long, conflicts_with = "pyramid")]
    graph: Option<PathBuf>,
    /// A pyramid directory written by hmerge.
    #[arg(long)]
    pyramid: Option<PathBuf>,
    #[arg(long)]
    max_degree: Option<usize>,
    /// Output hierarchy directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Hier,
    Flat,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    hierarchy: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Ground-truth ivecs; enables recall columns.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Comma-separated pool sizes to sweep.
    #[arg(long, default_value = "8,16,32,64")]
    pool: String,
    #[arg(long, value_enum, default_value = "hier")]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    entry: Option<u32>,
    /// Per-query CSV; the summary goes to <out>.summary.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Graph file to score, against a truth graph.
    #[arg(long, conflicts_with = "results")]
    graph: Option<PathBuf>,
    /// Result ivecs to score, against truth ivecs.
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Comma-separated r values.
    #[arg(long, default_value = "0,0.2,0.3333333333,0.5,0.6666666667,0.8")]
    r: String,
    /// Comma-separated |S1| fractions.
    #[arg(long, default_value = "0.2,0.3,0.4,0.5,0.6,0.7,0.8")]
    ratios: String,
    #[arg(long, default_value = "10")]
    recall_k: usize,
    #[arg(long)]
    out: PathBuf,
}

struct Ctx {
    dir: PathBuf,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let searching = matches!(cli.cmd, Cmd::Search(_));
    let threads = match (cli.threads, searching) {
        (0, true) => 1,
        (t, _) => t,
    };
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    let ctx = Ctx { dir: cli.data_dir };
    match cli.cmd {
        Cmd::Gen(a) => gen(&ctx, a),
        Cmd::Split(a) => split(&ctx, a),
        Cmd::Build(a) => build(&ctx, a),
        Cmd::Truth(a) => truth(&ctx, a),
        Cmd::Smerge(a) => smerge(&ctx, a),
        Cmd::Jmerge(a) => jmerge(&ctx, a),
        Cmd::Hmerge(a) => hmerge(&ctx, a),
        Cmd::Diversify(a) => diversify(&ctx, a),
        Cmd::Search(a) => search(&ctx, a),
        Cmd::Eval(a) => eval(&ctx, a),
        Cmd::Bench(a) => bench(&ctx, a),
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_manifest(out: &Path, command: &str, params: Value, stats: Value) -> CliResult<()> {
    let m = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "output": out.file_name().map(|f| f.to_string_lossy().into_owned()),
        "params": params,
        "stats": stats,
    });
    io::save_json(&manifest_path(out), &m)?;
    Ok(())
}

#[derive(Serialize)]
struct Stats {
    wall_s: f64,
    n: usize,
    evaluations: u64,
    scanning_rate: f64,
    phi: f64,
    iterations: usize,
}

impl Stats {
    fn new(start: Instant, graph: &KnnGraph, report: &BuildReport) -> Self {
        Stats {
            wall_s: start.elapsed().as_secs_f64(),
            n: graph.len(),
            evaluations: report.evaluations,
            scanning_rate: scanning_rate(report.evaluations, graph.len()),
            phi: phi(graph),
            iterations: report.rounds(),
        }
    }

    fn print(&self) {
        println!(
            "stats wall_s={:.3} n={} evaluations={} scanning_rate={:.6} phi={:.6} iterations={}",
            self.wall_s, self.n, self.evaluations, self.scanning_rate, self.phi, self.iterations
        );
    }
}

fn load(ctx: &Ctx, p: &Path) -> CliResult<Dataset> {
    Ok(io::load_dataset(&ctx.path(p))?)
}

fn gen(ctx: &Ctx, a: GenArgs) -> CliResult<()> {
    let out = ctx.path(&a.out);
    let ds = match a.universe {
        Some(u) => generate_sparse(a.n, u, a.min_len, a.max_len, a.seed)?,
        None => generate_uniform(a.n, a.d, a.seed)?,
    };
    io::save_dataset(&out, &ds)?;
    let params = match a.universe {
        Some(u) => json!({"n": a.n, "universe": u, "min_len": a.min_len, "max_len": a.max_len, "seed": a.seed}),
        None => json!({"n": a.n, "d": a.d, "seed": a.seed}),
    };
    write_manifest(&out, "gen", params, json!({}))
}

fn split(ctx: &Ctx, a: SplitArgs) -> CliResult<()> {
    if !(0.0..=1.0).contains(&a.ratio) {
        return Err(format!("ratio must lie in [0, 1], got {}", a.ratio).into());
    }
    let n = load(ctx, &a.data)?.len();
    let mut ids: Vec<u32> = (0..n as u32).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(a.seed));
    let cut = (a.ratio * n as f64).round() as usize;
    let (mut first, mut second) = (ids[..cut].to_vec(), ids[cut..].to_vec());
    first.sort_unstable();
    second.sort_unstable();
    let out = ctx.path(&a.out);
    for (i, part) in [(1, &first), (2, &second)] {
        let p = PathBuf::from(format!("{}.{i}.ids", out.display()));
        io::save_ids(&p, part)?;
        write_manifest(&p, "split", json!({"data": a.data, "ratio": a.ratio, "seed": a.seed, "part": i}), json!({"size": part.len()}))?;
    }
    Ok(())
}

fn build(ctx: &Ctx, a: BuildArgs) -> CliResult<()> {
    let ds = load(ctx, &a.data)?;
    let ev = Evaluator::new(&ds, a.common.metric)?;
    let members = match &a.ids {
        Some(p) => io::load_ids(&ctx.path(p))?,
        None => (0..ds.len() as u32).collect(),
    };
    let start = Instant::now();
    let (graph, report) = if a.exact {
        let g = brute_force_on(&ev, members, a.common.k)?;
        let report = BuildReport {
            evaluations: ev.evaluations(),
            ..Default::default()
        };
        (g, report)
    } else {
        let p = DescentParams {
            k: a.common.k,
            max_iters: a.max_iters,
            min_update_fraction: a.min_update_fraction,
        };
        nn_descent_on(&ev, members, &p, a.common.seed)?
    };
    let stats = Stats::new(start, &graph, &report);
    let out = ctx.path(&a.out);
    io::save_graph(&out, &graph)?;
    stats.print();
    write_manifest(
        &out,
        "build",
        json!({"data": a.data, "ids": a.ids, "metric": a.common.metric, "k": a.common.k, "seed": a.common.seed,
               "exact": a.exact, "min_update_fraction": a.min_update_fraction, "max_iters": a.max_iters}),
        json!({"summary": stats, "report": report}),
    )
}

fn truth(ctx: &Ctx, a: TruthArgs) -> CliResult<()> {
    let ds = load(ctx, &a.data)?;
    let out = ctx.path(&a.out);
    let start = Instant::now();
    match &a.queries {
        Some(q) => {
            let queries = load(ctx, q)?;
            let rows: Vec<Vec<u32>> = brute_force_queries(&ds, a.metric, &queries, a.k)?
                .into_iter()
                .map(|r| r.into_iter().map(|p| p.0).collect())
                .collect();
            io::save_ivecs(&out, &rows)?;
        }
        None => {
            let ev = Evaluator::new(&ds, a.metric)?;
            let g = knn_merge::brute_force_graph(&ev, a.k)?;
            io::save_graph(&out, &g)?;
        }
    }
    write_manifest(
        &out,
        "truth",
        json!({"data": a.data, "queries": a.queries, "metric": a.metric, "k": a.k}),
        json!({"wall_s": start.elapsed().as_secs_f64()}),
    )
}

fn load_graph(ctx: &Ctx, p: &Path, metric: Metric, k: usize) -> CliResult<KnnGraph> {
    let g = io::load_graph(&ctx.path(p))?;
    if g.metric() != metric {
        return Err(format!("{} was built with metric {}, not {metric}", p.display(), g.metric()).into());
    }
    if g.k() != k {
        return Err(format!("{} has k = {}, not {k}", p.display(), g.k()).into());
    }
    Ok(g)
}

fn smerge(ctx: &Ctx, a: SmergeArgs) -> CliResult<()> {
    let ds = load(ctx, &a.data)?;
    let ev = Evaluator::new(&ds, a.opts.common.metric)?;
    let g = load_graph(ctx, &a.g, a.opts.common.metric, a.opts.common.k)?;
    let h = load_graph(ctx, &a.h, a.opts.common.metric, a.opts.common.k)?;
    let start = Instant::now();
    let (u, report) = s_merge(&ev, &g, &h, &a.opts.params())?;
    let stats = Stats::new(start, &u, &report);
    let out = ctx.path(&a.out);
    io::save_graph(&out, &u)?;
    stats.print();
    write_manifest(
        &out,
        "smerge",
        json!({"data": a.data, "g": a.g, "h": a.h, "merge": a.opts.params(), "metric": a.opts.common.metric}),
        json!({"summary": stats, "report": report}),
    )
}

fn jmerge(ctx: &Ctx, a: JmergeArgs) -> CliResult<()> {
    let ds = load(ctx, &a.data)?;
    let ev = Evaluator::new(&ds, a.opts.common.metric)?;
    let g = load_graph(ctx, &a.g, a.opts.common.metric, a.opts.common.k)?;
    let raw = io::load_ids(&ctx.path(&a.ids))?;
    let start = Instant::now();
    let (u, report) = j_merge(&ev, &g, &raw, &a.opts.params())?;
    let stats = Stats::new(start, &u, &report);
    let out = ctx.path(&a.out);
    io::save_graph(&out, &u)?;
    stats.print();
    write_manifest(
        &out,
        "jmerge",
        json!({"data": a.data, "g": a.g, "ids": a.ids, "merge": a.opts.params(), "metric": a.opts.common.metric}),
        json!({"summary": stats, "report": report}),
    )
}

fn parse_list<T: std::str::FromStr + Clone>(s: &str, n: Option<T>) -> CliResult<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| match (t, &n) {
            ("n", Some(n)) => Ok(n.clone()),
            _ => t.parse::<T>().map_err(|_| format!("cannot parse '{t}' in list '{s}'").into()),
        })
        .collect()
}

fn hmerge(ctx: &Ctx, a: HmergeArgs) -> CliResult<()> {
    let ds = load(ctx, &a.data)?;
    let n = ds.len();
    let ev = Evaluator::new(&ds, a.opts.common.metric)?;
    let layers = match (&a.layers, a.doubling) {
        (Some(s), _) => parse_list(s, Some(n))?,
        (None, Some(top)) => doubling_layers(n, top),
        (None, None) => default_search_layers(n, a.opts.common.k),
    };
    let params = a.opts.params();
    let dir = ctx.path(&a.out);
    let mut writer = HierarchyWriter::create(&dir, a.opts.common.metric)?;
    let start = Instant::now();
    let (graph, report) = h_merge_with(&ev, &params, &layers, |_, layer| {
        writer.push_graph(&layer)?;
        Ok(())
    })?;
    writer.push_graph(&graph)?;
    let stats = Stats::new(start, &graph, &report);
    let run = json!({"data": a.data, "merge": params, "layers": layers, "metric": a.opts.common.metric});
    writer.finish(run.clone())?;
    let bottom = dir.join("graph.knng");
    io::save_graph(&bottom, &graph)?;
    stats.print();
    write_manifest(&bottom, "hmerge", run, json!({"summary": stats, "report": report}))
}

fn diversify(ctx: &Ctx, a: DiversifyArgs) -> CliResult<()> {
    let ds = load(ctx, &a.data)?;
    let params = DiversifyParams { max_degree: a.max_degree };
    let start = Instant::now();
    let h = match (&a.graph, &a.pyramid) {
        (Some(g), None) => {
            let g = io::load_graph(&ctx.path(g))?;
            let ev = Evaluator::new(&ds, g.metric())?;
            Hierarchy::new(g.metric(), vec![diversify_graph(&g, &ev, &params)])?
        }
        (None, Some(p)) => {
            let pyr = Pyramid::load(&ctx.path(p))?;
            let ev = Evaluator::new(&ds, pyr.bottom().metric())?;
            pyr.diversify(&ev, &params)
        }
        _ => return Err("pass exactly one of --graph or --pyramid".into()),
    };
    let dir = ctx.path(&a.out);
    let mut w = HierarchyWriter::create(&dir, h.metric())?;
    for layer in h.layers() {
        w.push_adjacency(layer)?;
    }
    let edges: Vec<usize> = h.layers().iter().map(|l| l.edge_count()).collect();
    w.finish(json!({
        "data": a.data, "graph": a.graph, "pyramid": a.pyramid, "max_degree": a.max_degree,
        "edges": edges, "wall_s": start.elapsed().as_secs_f64(),
    }))?;
    println!(
        "stats wall_s={:.3} layers={:?} edges={:?}",
        start.elapsed().as_secs_f64(),
        h.sizes(),
        edges
    );
    Ok(())
}

fn search(ctx: &Ctx, a: SearchArgs) -> CliResult<()> {
    let ds = load(ctx, &a.data)?;
    let queries = load(ctx, &a.queries)?;
    let h = Hierarchy::load(&ctx.path(&a.hierarchy))?;
    let truth = a.truth.as_ref().map(|t| io::load_ivecs(&ctx.path(t))).transpose()?;
    if let Some(t) = &truth {
        if t.len() != queries.len() {
            return Err(format!("{} truth rows for {} queries", t.len(), queries.len()).into());
        }
    }
    let pools: Vec<usize> = parse_list(&a.pool, None)?;
    let mode = match a.mode {
        Mode::Hier => SearchMode::Hierarchical,
        Mode::Flat => SearchMode::Flat,
    };
    let out = ctx.path(&a.out);
    let mut per_query = BufWriter::new(File::create(&out)?);
    writeln!(per_query, "pool,query,top_ids,distance_evals,wall_us,hit_at_1")?;
    let summary_path = PathBuf::from(format!("{}.summary.csv", out.display()));
    let mut summary = BufWriter::new(File::create(&summary_path)?);
    writeln!(summary, "mode,pool,queries,recall_at_1,mean_distance_evals,queries_per_second")?;
    let mode_name = match a.mode {
        Mode::Hier => "hier",
        Mode::Flat => "flat",
    };

    for &pool in &pools {
        let start = Instant::now();
        let rows: Vec<(knn_merge::SearchResult, f64)> = (0..queries.len() as u32)
            .into_par_iter()
            .map(|q| {
                let p = SearchParams {
                    pool_size: pool,
                    seed: knn_merge::graph::mix_seed(a.seed, q as u64),
                    entry: a.entry,
                };
                let t = Instant::now();
                let r = match mode {
                    SearchMode::Hierarchical => hierarchical_search(&h, &ds, queries.record(q), &p),
                    SearchMode::Flat => flat_search(h.bottom(), &ds, h.metric(), queries.record(q), &p),
                }?;
                Ok((r, t.elapsed().as_secs_f64() * 1e6))
            })
            .collect::<knn_merge::Result<_>>()?;
        let wall = start.elapsed().as_secs_f64();
        let mut hits = 0usize;
        let mut evals = 0u64;
        for (q, (r, us)) in rows.iter().enumerate() {
            let hit = truth.as_ref().map(|t| r.neighbors.first().map(|p| p.0) == t[q].first().copied());
            hits += (hit == Some(true)) as usize;
            evals += r.distance_evals;
            let ids: Vec<String> = r.neighbors.iter().take(10).map(|p| p.0.to_string()).collect();
            let hit = hit.map_or(String::new(), |h| (h as u8).to_string());
            writeln!(per_query, "{pool},{q},{},{},{us:.1},{hit}", ids.join(" "), r.distance_evals)?;
        }
        let nq = rows.len().max(1) as f64;
        let recall = if truth.is_some() { format!("{:.6}", hits as f64 / nq) } else { String::new() };
        writeln!(summary, "{mode_name},{pool},{},{recall},{:.3},{:.1}", rows.len(), evals as f64 / nq, nq / wall)?;
        println!(
            "search mode={mode_name} pool={pool} recall_at_1={} mean_evals={:.1} qps={:.1}",
            if recall.is_empty() { "n/a" } else { &recall },
            evals as f64 / nq,
            nq / wall
        );
    }
    per_query.flush()?;
    summary.flush()?;
    write_manifest(
        &out,
        "search",
        json!({"data": a.data, "hierarchy": a.hierarchy, "queries": a.queries, "truth": a.truth,
               "pools": pools, "mode": mode_name, "seed": a.seed, "entry": a.entry}),
        json!({"summary": summary_path.file_name().map(|f| f.to_string_lossy().into_owned())}),
    )
}

fn eval(ctx: &Ctx, a: EvalArgs) -> CliResult<()> {
    let recall = match (&a.graph, &a.results) {
        (Some(g), None) => graph_recall(&io::load_graph(&ctx.path(g))?, &io::load_graph(&ctx.path(&a.truth))?, a.k)?,
        (None, Some(r)) => recall_at_k(&io::load_ivecs(&ctx.path(r))?, &io::load_ivecs(&ctx.path(&a.truth))?, a.k)?,
        _ => return Err("pass exactly one of --graph or --results".into()),
    };
    println!("recall_at_{}={recall:.6}", a.k);
    Ok(())
}

fn bench(ctx: &Ctx, a: BenchArgs) -> CliResult<()> {
    let ds = load(ctx, &a.data)?;
    let n = ds.len();
    let k = a.common.k;
    let ev = Evaluator::new(&ds, a.common.metric)?;
    let rs: Vec<f64> = parse_list(&a.r, None)?;
    let ratios: Vec<f64> = parse_list(&a.ratios, None)?;
    log::info!("computing ground truth for {n} points");
    let truth = knn_merge::brute_force_graph(&ev, a.recall_k)?;
    let dp = DescentParams::new(k);

    let out = ctx.path(&a.out);
    let mut w = BufWriter::new(File::create(&out)?);
    writeln!(w, "method,r,size_ratio,reps,recall_at_{},scanning_rate", a.recall_k)?;
    for &ratio in &ratios {
        let mut acc = vec![[0.0f64; 4]; rs.len()];
        for rep in 0..a.reps {
            let seed = knn_merge::graph::mix_seed(a.common.seed, rep as u64);
            let mut ids: Vec<u32> = (0..n as u32).collect();
            ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let cut = (ratio * n as f64).round() as usize;
            let (mut s1, mut s2) = (ids[..cut].to_vec(), ids[cut..].to_vec());
            s1.sort_unstable();
            s2.sort_unstable();
            let (g1, _) = nn_descent_on(&ev, s1, &dp, seed)?;
            let (g2, _) = nn_descent_on(&ev, s2.clone(), &dp, seed ^ 1)?;
            for (i, &r) in rs.iter().enumerate() {
                let mp = MergeParams { k, r, seed, ..MergeParams::default() };
                let (sg, sr) = s_merge(&ev, &g1, &g2, &mp)?;
                let (jg, jr) = j_merge(&ev, &g1, &s2, &mp)?;
                acc[i][0] += graph_recall(&sg, &truth, a.recall_k)?;
                acc[i][1] += scanning_rate(sr.evaluations, n);
                acc[i][2] += graph_recall(&jg, &truth, a.recall_k)?;
                acc[i][3] += scanning_rate(jr.evaluations, n);
            }
        }
        let reps = a.reps.max(1) as f64;
        let label = format!("{:.0}/{:.0}", ratio * 10.0, (1.0 - ratio) * 10.0);
        for (i, &r) in rs.iter().enumerate() {
            let v = acc[i].map(|x| x / reps);
            writeln!(w, "s-merge,{r:.4},{label},{},{:.6},{:.6}", a.reps, v[0], v[1])?;
            writeln!(w, "j-merge,{r:.4},{label},{},{:.6},{:.6}", a.reps, v[2], v[3])?;
            println!("bench ratio={label} r={r:.3} s_recall={:.4} j_recall={:.4}", v[0], v[2]);
        }
        w.flush()?;
    }
    write_manifest(
        &out,
        "bench",
        json!({"data": a.data, "metric": a.common.metric, "k": k, "seed": a.common.seed, "reps": a.reps,
               "r": rs, "ratios": ratios, "recall_k": a.recall_k}),
        json!({}),
    )
}
