//! `sidx`: build, query and maintain a data-series index from the shell.
//!
//! Exit status: 0 success, 2 bad arguments, 3 invalid input or
//! configuration, 4 I/O failure, 5 corrupt index, 6 series not found.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sidx_core::eval::{
    brute_force_knn, generate_queries, generate_random_walk, report_json_lines, report_table, run_benchmark,
    BenchSpec, Dataset, Variant,
};
use sidx_core::index::{build_index, BuildConfig, Index, Strategy};
use sidx_core::query::{
    exact_search, extended_approx_search, leaf_bound_histogram, DistanceKind, KnnResult, Neighbor, PreparedQuery,
    SearchBudget,
};
use sidx_core::updates::{delete_series, insert_series, DeleteTarget};
use sidx_core::Error;

#[derive(Parser)]
#[command(name = "sidx", version, about = "Data-series similarity index")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random-walk dataset.
    Generate(GenerateArgs),
    /// Build an index over a dataset.
    Build(BuildArgs),
    /// Approximate kNN with a leaf budget.
    Query(QueryArgs),
    /// Exact kNN.
    Exact(QueryArgs),
    /// Exact kNN by scanning the raw dataset, without an index.
    Brute(BruteArgs),
    /// Structure statistics and the leaf upper-bound histogram.
    Stats(StatsArgs),
    /// Build every variant and report quality and cost.
    Bench(BenchArgs),
    /// Insert every series of a dataset file.
    Insert(InsertArgs),
    /// Delete series by ordinal or by value.
    Delete(DeleteArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    length: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Draw from the query stream instead of the data stream.
    #[arg(long)]
    queries: bool,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Series length.
    #[arg(long)]
    length: usize,
    #[arg(long, default_value_t = 16)]
    width: usize,
    #[arg(long, default_value_t = 8)]
    bits: u8,
    #[arg(long, default_value_t = 10_000)]
    threshold: u64,
    #[arg(long, default_value_t = 0.5)]
    fill_low: f64,
    #[arg(long, default_value_t = 3.0)]
    fill_high: f64,
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    small_node: f64,
    /// Boundary fraction for fuzzy duplication; off when absent.
    #[arg(long)]
    fuzzy: Option<f64>,
    #[arg(long, default_value_t = 3)]
    max_duplications: u32,
    /// Series buffered in memory before a flush.
    #[arg(long, default_value_t = 65_536)]
    buffer: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = StrategyArg::Adaptive)]
    strategy: StrategyArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Adaptive,
    Binary,
}

impl ConfigArgs {
    fn config(&self) -> Result<BuildConfig, Error> {
        let mut c = BuildConfig::new(self.length);
        c.w = self.width;
        c.bits = self.bits;
        c.th = self.threshold;
        c.fill_low = self.fill_low;
        c.fill_high = self.fill_high;
        c.alpha = self.alpha;
        c.rho = self.rho;
        c.small_node = self.small_node;
        c.fuzzy = self.fuzzy;
        c.max_duplications = self.max_duplications;
        c.buffer_series = self.buffer;
        c.seed = self.seed;
        c.strategy = match self.strategy {
            StrategyArg::Adaptive => Strategy::Adaptive,
            StrategyArg::Binary => Strategy::BinaryBaseline,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistanceArg {
    Ed,
    Dtw,
}

#[derive(Args)]
struct DistanceArgs {
    #[arg(long, value_enum, default_value_t = DistanceArg::Ed)]
    distance: DistanceArg,
    /// Warping band half-width in points; defaults to 10% of the length.
    #[arg(long)]
    window: Option<usize>,
}

impl DistanceArgs {
    fn kind(&self, n: usize) -> Result<DistanceKind, Error> {
        Ok(match self.distance {
            DistanceArg::Ed => DistanceKind::Euclidean,
            DistanceArg::Dtw => {
                let window = self.window.unwrap_or(n / 10);
                if window >= n {
                    return Err(Error::WindowTooLarge { window, n });
                }
                DistanceKind::Dtw { window }
            }
        })
    }
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(short, long, default_value_t = 10)]
    k: usize,
    /// Leaf budget for approximate search.
    #[arg(long, default_value_t = 1)]
    nodes: usize,
    #[command(flatten)]
    distance: DistanceArgs,
    /// Write results here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BruteArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    length: usize,
    #[arg(short, long, default_value_t = 10)]
    k: usize,
    #[command(flatten)]
    distance: DistanceArgs,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    bucket_width: f64,
    #[arg(long, default_value_t = 20)]
    buckets: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Directory for the per-variant indexes.
    #[arg(long)]
    work_dir: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(short, long, default_value_t = 50)]
    k: usize,
    /// Comma-separated leaf budgets.
    #[arg(long, value_delimiter = ',', default_value = "1,5,25")]
    budgets: Vec<usize>,
    /// Boundary fraction used by the fuzzy variant.
    #[arg(long, default_value_t = 0.1)]
    fuzzy_fraction: f64,
    #[command(flatten)]
    distance: DistanceArgs,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct InsertArgs {
    #[arg(long)]
    index: PathBuf,
    /// Dataset-format file of series to add.
    #[arg(long)]
    series: PathBuf,
}

#[derive(Args)]
struct DeleteArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long, value_delimiter = ',', required_unless_present = "series")]
    ordinal: Vec<u64>,
    /// Dataset-format file; each series is matched by value.
    #[arg(long, conflicts_with = "ordinal")]
    series: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 4,
        Error::BadMagic(_) | Error::VersionMismatch { .. } | Error::Checksum { .. } | Error::Corrupt(_) => 5,
        Error::NotFound(_) => 6,
        _ => 3,
    }
}

/// Write to `output` or stdout; a closed stdout pipe is not an error.
fn emit(output: Option<&Path>, text: &str) -> Result<(), Error> {
    match output {
        Some(p) => fs::write(p, text)?,
        None => match std::io::stdout().lock().write_all(text.as_bytes()) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
            r => r?,
        },
    }
    Ok(())
}

/// One line per neighbor: query, rank, ordinal, distance.
fn format_neighbors(lists: &[Vec<Neighbor>]) -> String {
    let mut out = String::new();
    for (q, list) in lists.iter().enumerate() {
        for (rank, n) in list.iter().enumerate() {
            writeln!(out, "{q}\t{rank}\t{}\t{:.9}", n.ordinal, n.distance).unwrap();
        }
    }
    out
}

fn run_queries(args: &QueryArgs, exact: bool) -> Result<(), Error> {
    let index = Index::open(&args.index)?;
    let n = index.config().n;
    let kind = args.distance.kind(n)?;
    let queries = Dataset::load(&args.queries, n)?;
    let budget = SearchBudget::new(args.nodes)?;
    let mut lists = Vec::with_capacity(queries.len());
    let (mut visited, mut pruning) = (0usize, 0.0);
    for i in 0..queries.len() {
        let q = PreparedQuery::for_index(&queries.series_f64(i), &index, kind)?;
        let r: KnnResult = if exact {
            exact_search(&index, &q, args.k)?
        } else {
            extended_approx_search(&index, &q, args.k, budget)?
        };
        visited += r.nodes_visited;
        pruning += r.pruning_ratio();
        lists.push(r.neighbors);
    }
    let count = queries.len().max(1) as f64;
    log::info!(
        "{} queries, mean leaves visited {:.2}, mean pruning ratio {:.4}",
        queries.len(),
        visited as f64 / count,
        pruning / count
    );
    emit(args.output.as_deref(), &format_neighbors(&lists))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Generate(a) => {
            if a.queries {
                generate_queries(&a.output, a.count, a.length, a.seed)
            } else {
                generate_random_walk(&a.output, a.count, a.length, a.seed)
            }
        }
        Command::Build(a) => {
            let config = a.config.config()?;
            let (index, report) = build_index(&a.dataset, &a.index, &config)?;
            let s = index.stats();
            let line = format!(
                "built {} series: {} leaves, {} nodes, height {}, fill factor {:.3}, {} duplicates, {:.3}s\n",
                index.series_count(),
                s.leaf_count,
                s.node_count,
                s.height,
                s.fill_factor,
                report.fuzzy.len(),
                report.total_seconds
            );
            emit(None, &line)
        }
        Command::Query(a) => run_queries(&a, false),
        Command::Exact(a) => run_queries(&a, true),
        Command::Brute(a) => {
            let kind = a.distance.kind(a.length)?;
            let data = Dataset::load(&a.dataset, a.length)?;
            let queries = Dataset::load(&a.queries, a.length)?;
            let lists: Vec<Vec<Neighbor>> = (0..queries.len())
                .map(|i| brute_force_knn(&data, &queries.series_f64(i), a.k, kind))
                .collect();
            emit(a.output.as_deref(), &format_neighbors(&lists))
        }
        Command::Stats(a) => {
            let index = Index::open(&a.index)?;
            let s = index.stats();
            let h = leaf_bound_histogram(index.tree(), index.config().n, index.breakpoints(), a.bucket_width, a.buckets);
            let mut out = String::new();
            if a.json {
                writeln!(out, "{}", serde_json::json!({ "stats": s, "histogram": h })).unwrap();
                return emit(None, &out);
            }
            writeln!(out, "series       {}", index.series_count()).unwrap();
            writeln!(out, "nodes        {}", s.node_count).unwrap();
            writeln!(out, "internal     {}", s.internal_count).unwrap();
            writeln!(out, "leaves       {}", s.leaf_count).unwrap();
            writeln!(out, "packs        {}", s.pack_count).unwrap();
            writeln!(out, "height       {}", s.height).unwrap();
            writeln!(out, "fill factor  {:.3}", s.fill_factor).unwrap();
            writeln!(out, "leaf upper bounds (bucket width {}):", h.bucket_width).unwrap();
            for (i, c) in h.counts.iter().enumerate() {
                let (lo, hi) = (i as f64 * h.bucket_width, (i + 1) as f64 * h.bucket_width);
                writeln!(out, "  [{lo:>8.2}, {hi:>8.2})  {c}").unwrap();
            }
            writeln!(out, "  unbounded            {}", h.unbounded).unwrap();
            if let Some(m) = h.mean_finite() {
                writeln!(out, "  mean finite          {m:.4}").unwrap();
            }
            emit(None, &out)
        }
        Command::Bench(a) => {
            let base = a.config.config()?;
            let spec = BenchSpec {
                dataset: a.dataset,
                queries: a.queries,
                work_dir: a.work_dir,
                kind: a.distance.kind(base.n)?,
                base,
                fuzzy: a.fuzzy_fraction,
                k: a.k,
                budgets: a.budgets,
                variants: Variant::all(),
            };
            let records = run_benchmark(&spec)?;
            let text = if a.json { report_json_lines(&records) } else { report_table(&records) };
            emit(a.output.as_deref(), &text)
        }
        Command::Insert(a) => {
            let mut index = Index::open(&a.index)?;
            let series = Dataset::load(&a.series, index.config().n)?;
            let mut out = String::new();
            for i in 0..series.len() {
                let ord = insert_series(&mut index, &series.series_f64(i))?;
                writeln!(out, "{ord}").unwrap();
            }
            index.save()?;
            emit(None, &out)
        }
        Command::Delete(a) => {
            let mut index = Index::open(&a.index)?;
            let mut out = String::new();
            let result = match &a.series {
                Some(path) => Dataset::load(path, index.config().n).and_then(|series| {
                    (0..series.len()).try_for_each(|i| {
                        let ord = delete_series(&mut index, DeleteTarget::Series(&series.series_f64(i)))?;
                        writeln!(out, "{ord}").unwrap();
                        Ok(())
                    })
                }),
                None => a.ordinal.iter().try_for_each(|&o| {
                    delete_series(&mut index, DeleteTarget::Ordinal(o))?;
                    writeln!(out, "{o}").unwrap();
                    Ok(())
                }),
            };
            // Deletions applied before a failure are kept.
            index.save()?;
            emit(None, &out)?;
            result
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
