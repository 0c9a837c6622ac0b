//! Workload generation, ground truth and accuracy metrics.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::storage::{read_dataset, DatasetWriter};
use crate::index::{build_index, BuildConfig, Index, Strategy};
use crate::query::{
    exact_search, extended_approx_search, neighbor_cmp, DistanceKind, KnnResult, Neighbor, PreparedQuery,
    SearchBudget,
};
use crate::summarization::{dtw_bounded, z_normalize};

/// RNG stream for dataset series.
pub const DATA_STREAM: u64 = 0;
/// RNG stream for query series, disjoint from the data stream.
pub const QUERY_STREAM: u64 = 1;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Cumulative sum of standard normal steps, z-normalized.
pub fn random_walk<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut acc = 0.0;
    let walk: Vec<f64> = (0..n)
        .map(|_| {
            acc += rng.sample::<f64, _>(StandardNormal);
            acc
        })
        .collect();
    z_normalize(&walk).expect("n >= 1").into_inner()
}

fn write_walks(path: &Path, count: usize, n: usize, rng: &mut ChaCha8Rng) -> Result<()> {
    if count == 0 || n == 0 {
        return Err(Error::Config("count and length must be positive".into()));
    }
    let mut writer = DatasetWriter::create(path, n)?;
    for _ in 0..count {
        writer.push(&random_walk(rng, n))?;
    }
    writer.finish()?;
    Ok(())
}

pub fn generate_random_walk(path: &Path, count: usize, n: usize, seed: u64) -> Result<()> {
    write_walks(path, count, n, &mut stream_rng(seed, DATA_STREAM))
}

pub fn generate_queries(path: &Path, count: usize, n: usize, seed: u64) -> Result<()> {
    write_walks(path, count, n, &mut stream_rng(seed, QUERY_STREAM))
}

/// A dataset held in memory for repeated exhaustive scans.
#[derive(Debug, Clone)]
pub struct Dataset {
    n: usize,
    values: Vec<f32>,
}

impl Dataset {
    pub fn load(path: &Path, n: usize) -> Result<Self> {
        Ok(Self {
            n,
            values: read_dataset(path, n)?,
        })
    }

    pub fn from_values(n: usize, values: Vec<f32>) -> Self {
        assert_eq!(values.len() % n, 0);
        Self { n, values }
    }

    pub fn series_len(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn series(&self, i: usize) -> &[f32] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn series_f64(&self, i: usize) -> Vec<f64> {
        self.series(i).iter().map(|&x| f64::from(x)).collect()
    }
}

/// Exhaustive kNN over `(ordinal, series)` pairs; ties by ordinal.
///
/// ED is summed in full; DTW abandons only once the warping cost is
/// strictly above the current k-th distance, which never drops a
/// candidate that belongs in the answer.
pub fn brute_force<'a>(
    items: impl IntoIterator<Item = (u64, &'a [f32])>,
    query: &[f64],
    k: usize,
    kind: DistanceKind,
) -> Vec<Neighbor> {
    let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
    let mut buf = vec![0.0f64; query.len()];
    for (ordinal, series) in items {
        for (dst, &x) in buf.iter_mut().zip(series) {
            *dst = f64::from(x);
        }
        let kth = if best.len() >= k { best[k - 1].distance } else { f64::INFINITY };
        let distance = match kind {
            DistanceKind::Euclidean => query.iter().zip(&buf).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
            DistanceKind::Dtw { window } => match dtw_bounded(query, &buf, window, kth) {
                Some(d) => d,
                None => continue,
            },
        };
        let cand = Neighbor { ordinal, distance };
        let pos = best.partition_point(|b| neighbor_cmp(b, &cand).is_lt());
        if pos < k {
            best.insert(pos, cand);
            best.truncate(k);
        }
    }
    best
}

pub fn brute_force_knn(dataset: &Dataset, query: &[f64], k: usize, kind: DistanceKind) -> Vec<Neighbor> {
    brute_force((0..dataset.len()).map(|i| (i as u64, dataset.series(i))), query, k, kind)
}

/// A returned neighbor counts as relevant when it is in the true top-k or
/// ties the true k-th distance (relative tolerance `1e-6`).
fn relevant(n: &Neighbor, truth: &[Neighbor], kth: f64) -> bool {
    truth.iter().any(|t| t.ordinal == n.ordinal) || n.distance <= kth * (1.0 + 1e-6)
}

fn check_shapes(results: &[Vec<Neighbor>], truth: &[Vec<Neighbor>], k: usize) -> Result<()> {
    if results.len() != truth.len() {
        return Err(Error::KMismatch {
            results: results.len(),
            truth: truth.len(),
        });
    }
    for t in truth {
        if t.len() < k {
            return Err(Error::KMismatch { results: k, truth: t.len() });
        }
    }
    Ok(())
}

/// Average precision of one ranked result list.
pub fn average_precision(result: &[Neighbor], truth: &[Neighbor], k: usize) -> f64 {
    let kth = truth[k - 1].distance;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, n) in result.iter().take(k).enumerate() {
        if relevant(n, &truth[..k], kth) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / k as f64
}

pub fn map_score(results: &[Vec<Neighbor>], truth: &[Vec<Neighbor>], k: usize) -> Result<f64> {
    check_shapes(results, truth, k)?;
    if results.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = results.iter().zip(truth).map(|(r, t)| average_precision(r, t, k)).sum();
    Ok(total / results.len() as f64)
}

pub fn average_recall(results: &[Vec<Neighbor>], truth: &[Vec<Neighbor>], k: usize) -> Result<f64> {
    check_shapes(results, truth, k)?;
    if results.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = results
        .iter()
        .zip(truth)
        .map(|(r, t)| {
            let kth = t[k - 1].distance;
            r.iter().take(k).filter(|n| relevant(n, &t[..k], kth)).count() as f64 / k as f64
        })
        .sum();
    Ok(total / results.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRatio {
    pub value: f64,
    /// Queries left out because a zero true distance met a non-zero answer.
    pub excluded: usize,
}

/// Mean over queries of `(1/k) Σ d(returned_i) / d(true_i)`.
pub fn avg_error_ratio(results: &[Vec<Neighbor>], truth: &[Vec<Neighbor>], k: usize) -> Result<ErrorRatio> {
    check_shapes(results, truth, k)?;
    let mut total = 0.0;
    let mut used = 0usize;
    let mut excluded = 0usize;
    'queries: for (r, t) in results.iter().zip(truth) {
        if r.len() < k {
            return Err(Error::KMismatch { results: r.len(), truth: k });
        }
        let mut sum = 0.0;
        for i in 0..k {
            let (a, e) = (r[i].distance, t[i].distance);
            if e == 0.0 {
                if a == 0.0 {
                    sum += 1.0;
                } else {
                    excluded += 1;
                    continue 'queries;
                }
            } else {
                sum += a / e;
            }
        }
        total += sum / k as f64;
        used += 1;
    }
    Ok(ErrorRatio {
        value: if used == 0 { f64::NAN } else { total / used as f64 },
        excluded,
    })
}

/// One index variant's measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub variant: String,
    pub series: u64,
    pub build_seconds: f64,
    pub leaf_count: usize,
    pub node_count: usize,
    pub height: usize,
    pub fill_factor: f64,
    pub duplicates: usize,
    /// `(nbr, MAP)` per budget.
    pub map: Vec<(usize, f64)>,
    /// `(nbr, error ratio)` per budget.
    pub error_ratio: Vec<(usize, f64)>,
    pub mean_approx_ms: Vec<(usize, f64)>,
    pub mean_nodes_visited: Vec<(usize, f64)>,
    pub exact_pruning_ratio: f64,
    pub mean_exact_ms: f64,
    /// Exact results that matched the brute-force oracle.
    pub exact_agreement: f64,
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub dataset: PathBuf,
    pub queries: PathBuf,
    pub work_dir: PathBuf,
    pub base: BuildConfig,
    pub fuzzy: f64,
    pub k: usize,
    pub budgets: Vec<usize>,
    pub kind: DistanceKind,
    pub variants: Vec<Variant>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Adaptive,
    AdaptiveFuzzy,
    BinaryBaseline,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Adaptive => "adaptive",
            Variant::AdaptiveFuzzy => "adaptive-fuzzy",
            Variant::BinaryBaseline => "binary-baseline",
        }
    }

    pub fn all() -> Vec<Variant> {
        vec![Variant::Adaptive, Variant::AdaptiveFuzzy, Variant::BinaryBaseline]
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, count) = xs.into_iter().fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Ground truth for every query by exhaustive scan.
pub fn ground_truth(data: &Dataset, queries: &Dataset, k: usize, kind: DistanceKind) -> Vec<Vec<Neighbor>> {
    (0..queries.len())
        .map(|i| brute_force_knn(data, &queries.series_f64(i), k, kind))
        .collect()
}

pub fn run_benchmark(spec: &BenchSpec) -> Result<Vec<BenchRecord>> {
    let data = Dataset::load(&spec.dataset, spec.base.n)?;
    let queries = Dataset::load(&spec.queries, spec.base.n)?;
    let truth = ground_truth(&data, &queries, spec.k, spec.kind);
    let mut records = Vec::new();
    for &variant in &spec.variants {
        let mut config = spec.base.clone();
        match variant {
            Variant::Adaptive => {
                config.strategy = Strategy::Adaptive;
                config.fuzzy = None;
            }
            Variant::AdaptiveFuzzy => {
                config.strategy = Strategy::Adaptive;
                config.fuzzy = Some(spec.fuzzy);
            }
            Variant::BinaryBaseline => {
                config.strategy = Strategy::BinaryBaseline;
                config.fuzzy = None;
            }
        }
        let dir = spec.work_dir.join(variant.name());
        let (index, report) = build_index(&spec.dataset, &dir, &config)?;
        records.push(measure(&index, variant.name(), report.total_seconds, report.fuzzy.len(), &queries, &truth, spec)?);
    }
    Ok(records)
}

fn measure(
    index: &Index,
    name: &str,
    build_seconds: f64,
    duplicates: usize,
    queries: &Dataset,
    truth: &[Vec<Neighbor>],
    spec: &BenchSpec,
) -> Result<BenchRecord> {
    let prepared: Vec<PreparedQuery> = (0..queries.len())
        .map(|i| PreparedQuery::for_index(&queries.series_f64(i), index, spec.kind))
        .collect::<Result<_>>()?;
    let stats = index.stats();
    let mut record = BenchRecord {
        variant: name.to_string(),
        series: index.series_count(),
        build_seconds,
        leaf_count: stats.leaf_count,
        node_count: stats.node_count,
        height: stats.height,
        fill_factor: stats.fill_factor,
        duplicates,
        map: Vec::new(),
        error_ratio: Vec::new(),
        mean_approx_ms: Vec::new(),
        mean_nodes_visited: Vec::new(),
        exact_pruning_ratio: 0.0,
        mean_exact_ms: 0.0,
        exact_agreement: 0.0,
    };
    for &nbr in &spec.budgets {
        let budget = SearchBudget::new(nbr)?;
        let mut results: Vec<KnnResult> = Vec::with_capacity(prepared.len());
        let t = Instant::now();
        for q in &prepared {
            results.push(extended_approx_search(index, q, spec.k, budget)?);
        }
        let ms = t.elapsed().as_secs_f64() * 1e3 / prepared.len().max(1) as f64;
        let lists: Vec<Vec<Neighbor>> = results.iter().map(|r| r.neighbors.clone()).collect();
        record.map.push((nbr, map_score(&lists, truth, spec.k)?));
        let padded: Vec<Vec<Neighbor>> = lists
            .iter()
            .zip(truth)
            .map(|(l, t)| if l.len() >= spec.k { l.clone() } else { t.clone() })
            .collect();
        record.error_ratio.push((nbr, avg_error_ratio(&padded, truth, spec.k)?.value));
        record.mean_approx_ms.push((nbr, ms));
        record.mean_nodes_visited.push((nbr, mean(results.iter().map(|r| r.nodes_visited as f64))));
    }
    let t = Instant::now();
    let exact: Vec<KnnResult> = prepared.iter().map(|q| exact_search(index, q, spec.k)).collect::<Result<_>>()?;
    record.mean_exact_ms = t.elapsed().as_secs_f64() * 1e3 / prepared.len().max(1) as f64;
    record.exact_pruning_ratio = mean(exact.iter().map(KnnResult::pruning_ratio));
    record.exact_agreement = mean(
        exact
            .iter()
            .zip(truth)
            .map(|(r, t)| f64::from(u8::from(r.ordinals() == t.iter().map(|n| n.ordinal).collect::<Vec<_>>()))),
    );
    Ok(record)
}

/// One JSON object per line.
pub fn report_json_lines(records: &[BenchRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes"))
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

/// Aligned plain-text summary tables.
pub fn report_table(records: &[BenchRecord]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>9} {:>8} {:>7} {:>6} {:>8} {:>9} {:>8} {:>10}\n",
        "variant", "build_s", "leaves", "nodes", "height", "fill", "dups", "pruning", "exact_ms"
    ));
    for r in records {
        out.push_str(&format!(
            "{:<16} {:>9.3} {:>8} {:>7} {:>6} {:>8.4} {:>9} {:>8.4} {:>10.3}\n",
            r.variant, r.build_seconds, r.leaf_count, r.node_count, r.height, r.fill_factor, r.duplicates,
            r.exact_pruning_ratio, r.mean_exact_ms
        ));
    }
    out.push('\n');
    out.push_str(&format!("{:<16} {:>5} {:>8} {:>11} {:>9} {:>8}\n", "variant", "nbr", "MAP", "error_ratio", "approx_ms", "visited"));
    for r in records {
        for (i, &(nbr, map)) in r.map.iter().enumerate() {
            out.push_str(&format!(
                "{:<16} {:>5} {:>8.4} {:>11.4} {:>9.3} {:>8.2}\n",
                r.variant, nbr, map, r.error_ratio[i].1, r.mean_approx_ms[i].1, r.mean_nodes_visited[i].1
            ));
        }
    }
    out
}
