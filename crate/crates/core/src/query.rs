//! kNN search over a built index: one-leaf approximate search, budgeted
//! extended search, and best-first exact search with lower-bound pruning.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{Index, NodeId, NodeKind, RecordLayout, Tree};
use crate::split::sid_of;
use crate::summarization::{
    compute_paa, dtw_bounded, lb_keogh, leaf_upper_bound, lower_bound_ed, paa_to_sax, Breakpoints, ISaxWord,
    QueryEnvelope,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceKind {
    Euclidean,
    /// Sakoe-Chiba band half-width in points.
    Dtw { window: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub ordinal: u64,
    pub distance: f64,
}

/// Total order used everywhere: distance, then ordinal.
pub fn neighbor_cmp(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance.total_cmp(&b.distance).then(a.ordinal.cmp(&b.ordinal))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnResult {
    /// Ascending by distance, ties by ordinal; no repeated ordinals.
    pub neighbors: Vec<Neighbor>,
    /// Leaves scanned.
    pub nodes_visited: usize,
    pub series_scanned: u64,
    /// Leaves skipped by exact search; zero for approximate searches.
    pub leaves_pruned: usize,
    pub total_leaves: usize,
}

impl KnnResult {
    pub fn pruning_ratio(&self) -> f64 {
        if self.total_leaves == 0 {
            0.0
        } else {
            self.leaves_pruned as f64 / self.total_leaves as f64
        }
    }

    pub fn ordinals(&self) -> Vec<u64> {
        self.neighbors.iter().map(|n| n.ordinal).collect()
    }

    pub fn kth_distance(&self) -> Option<f64> {
        self.neighbors.last().map(|n| n.distance)
    }
}

/// Maximum number of leaves an extended search may scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBudget {
    nbr: usize,
}

impl SearchBudget {
    pub fn new(nbr: usize) -> Result<Self> {
        if nbr == 0 {
            return Err(Error::Config("search budget must be at least one node".into()));
        }
        Ok(Self { nbr })
    }

    pub fn nodes(&self) -> usize {
        self.nbr
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry(Neighbor);

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        neighbor_cmp(&self.0, &other.0)
    }
}

/// Bounded max-heap of the best `k` candidates by (distance, ordinal).
#[derive(Debug, Clone)]
pub struct KnnHeap {
    k: usize,
    heap: BinaryHeap<HeapEntry>,
    held: HashSet<u64>,
}

impl KnnHeap {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
            held: HashSet::with_capacity(k + 1),
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.heap.len() >= self.k
    }

    /// Current k-th distance, infinite until `k` candidates are held.
    pub fn kth(&self) -> f64 {
        if self.is_full() {
            self.heap.peek().map_or(f64::INFINITY, |e| e.0.distance)
        } else {
            f64::INFINITY
        }
    }

    /// Whether a candidate at `distance` could still enter, given that its
    /// ordinal may win a tie.
    pub fn admits(&self, distance: f64) -> bool {
        distance <= self.kth()
    }

    pub fn offer(&mut self, ordinal: u64, distance: f64) -> bool {
        if self.k == 0 || self.held.contains(&ordinal) {
            return false;
        }
        let entry = HeapEntry(Neighbor { ordinal, distance });
        if self.heap.len() < self.k {
            self.heap.push(entry);
            self.held.insert(ordinal);
            return true;
        }
        let top = self.heap.peek().expect("full heap");
        if entry < *top {
            let evicted = self.heap.pop().expect("full heap");
            self.held.remove(&evicted.0.ordinal);
            self.heap.push(entry);
            self.held.insert(ordinal);
            true
        } else {
            false
        }
    }

    pub fn into_sorted(self) -> Vec<Neighbor> {
        let mut out: Vec<Neighbor> = self.heap.into_iter().map(|e| e.0).collect();
        out.sort_by(neighbor_cmp);
        out
    }
}

/// A query with its summaries precomputed for one index shape.
#[derive(Debug, Clone)]
pub struct PreparedQuery {
    values: Vec<f64>,
    paa: Vec<f64>,
    sax: Vec<u8>,
    envelope: Option<QueryEnvelope<f64>>,
    kind: DistanceKind,
}

impl PreparedQuery {
    pub fn new(values: &[f64], w: usize, bp: &Breakpoints, kind: DistanceKind) -> Result<Self> {
        let paa = compute_paa(values, w)?;
        let sax = paa_to_sax(&paa, bp).0;
        let envelope = match kind {
            DistanceKind::Euclidean => None,
            DistanceKind::Dtw { window } => Some(QueryEnvelope::new(values, window, w)?),
        };
        Ok(Self {
            values: values.to_vec(),
            paa: paa.coefficients().to_vec(),
            sax,
            envelope,
            kind,
        })
    }

    pub fn for_index(values: &[f64], index: &Index, kind: DistanceKind) -> Result<Self> {
        if values.len() != index.config().n {
            return Err(Error::LengthMismatch {
                expected: index.config().n,
                actual: values.len(),
            });
        }
        Self::new(values, index.config().w, index.breakpoints(), kind)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sax(&self) -> &[u8] {
        &self.sax
    }

    pub fn kind(&self) -> DistanceKind {
        self.kind
    }

    /// Lower bound of the distance to any series inside `word`'s region.
    pub fn lower_bound(&self, word: &ISaxWord, bp: &Breakpoints) -> f64 {
        match &self.envelope {
            None => lower_bound_ed(word, &self.paa, self.values.len(), bp).expect("word width matches query"),
            Some(env) => env.lower_bound(word, bp).expect("word width matches query"),
        }
    }

    /// Exact distance, or `None` once it provably exceeds `cutoff`.
    pub fn distance_within(&self, candidate: &[f64], cutoff: f64) -> Option<f64> {
        match (&self.kind, &self.envelope) {
            (DistanceKind::Dtw { window }, Some(env)) => {
                if lb_keogh(env, candidate) > cutoff {
                    return None;
                }
                dtw_bounded(&self.values, candidate, *window, cutoff)
            }
            _ => {
                let limit = cutoff * cutoff;
                let mut sum = 0.0;
                for (chunk_q, chunk_c) in self.values.chunks(16).zip(candidate.chunks(16)) {
                    for (&a, &b) in chunk_q.iter().zip(chunk_c) {
                        sum += (a - b) * (a - b);
                    }
                    if sum > limit {
                        return None;
                    }
                }
                Some(sum.sqrt())
            }
        }
    }

    /// Exact distance with no cutoff.
    pub fn distance(&self, candidate: &[f64]) -> f64 {
        self.distance_within(candidate, f64::INFINITY).expect("no cutoff")
    }
}

/// Scan one leaf's live records into `heap`. Returns records examined.
pub fn leaf_scan(index: &Index, leaf: NodeId, query: &PreparedQuery, heap: &mut KnnHeap) -> Result<u64> {
    let bytes = index.leaf_bytes(leaf)?;
    let deleted = &index.tree().leaf(leaf).deleted;
    Ok(scan_bytes(index.layout(), &bytes, deleted, query, heap))
}

pub(crate) fn scan_bytes(
    layout: RecordLayout,
    bytes: &[u8],
    deleted: &crate::index::DeletionBits,
    query: &PreparedQuery,
    heap: &mut KnnHeap,
) -> u64 {
    let mut buf = vec![0.0f64; layout.n];
    let mut scanned = 0;
    for slot in 0..layout.count(bytes) {
        if deleted.get(slot as u64) {
            continue;
        }
        let record = layout.record(bytes, slot);
        record.values_into(&mut buf);
        scanned += 1;
        if let Some(d) = query.distance_within(&buf, heap.kth()) {
            heap.offer(record.ordinal(), d);
        }
    }
    scanned
}

/// Child of `node` with the smallest lower bound; ties by sid.
fn closest_child(tree: &Tree, node: NodeId, query: &PreparedQuery, bp: &Breakpoints) -> Option<NodeId> {
    let internal = tree.node(node).as_internal()?;
    internal
        .routes
        .values()
        .map(|&c| (query.lower_bound(&tree.node(c).word, bp), c))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c)
}

/// Node where budgeted descent stops: the first node on the query's route
/// with at most `nbr` leaves. A missing route continues into the child
/// with the smallest lower bound.
fn descend(index: &Index, query: &PreparedQuery, nbr: usize) -> NodeId {
    let tree = index.tree();
    let bp = index.breakpoints();
    let mut cur = tree.root();
    while tree.leaf_count_under(cur) > nbr {
        let node = tree.node(cur);
        let NodeKind::Internal(internal) = &node.kind else {
            break;
        };
        let sid = sid_of(&node.word, &query.sax, &internal.csl, bp.bits());
        cur = match internal.routes.get(&sid) {
            Some(&child) => child,
            None => match closest_child(tree, cur, query, bp) {
                Some(child) => child,
                None => break,
            },
        };
    }
    cur
}

/// Leaves under `node` ordered by lower bound, ties by node id.
fn leaves_by_bound(tree: &Tree, node: NodeId, query: &PreparedQuery, bp: &Breakpoints) -> Vec<NodeId> {
    let mut leaves: Vec<(f64, NodeId)> = tree
        .leaves_under(node)
        .into_iter()
        .map(|l| (query.lower_bound(&tree.node(l).word, bp), l))
        .collect();
    leaves.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    leaves.into_iter().map(|(_, l)| l).collect()
}

/// Leaves an extended search with budget `nbr` scans, in scan order.
pub fn extended_scan_order(index: &Index, query: &PreparedQuery, nbr: usize) -> Vec<NodeId> {
    let tree = index.tree();
    let bp = index.breakpoints();
    let end = descend(index, query, nbr);
    // siblings of the end node, the end node first; at the root its children
    let siblings: Vec<NodeId> = match tree.node(end).parent {
        Some(parent) => {
            let mut others: Vec<(f64, NodeId)> = tree
                .children(parent)
                .into_iter()
                .filter(|&c| c != end)
                .map(|c| (query.lower_bound(&tree.node(c).word, bp), c))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            std::iter::once(end).chain(others.into_iter().map(|(_, c)| c)).collect()
        }
        None => vec![end],
    };
    let mut order = Vec::new();
    for sibling in siblings {
        for leaf in leaves_by_bound(tree, sibling, query, bp) {
            if tree.leaf(leaf).live() == 0 {
                continue;
            }
            if order.len() >= nbr {
                return order;
            }
            order.push(leaf);
        }
    }
    order
}

pub fn extended_approx_search(index: &Index, query: &PreparedQuery, k: usize, budget: SearchBudget) -> Result<KnnResult> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let mut heap = KnnHeap::new(k);
    let order = extended_scan_order(index, query, budget.nodes());
    let mut scanned = 0;
    for &leaf in &order {
        scanned += leaf_scan(index, leaf, query, &mut heap)?;
    }
    Ok(KnnResult {
        neighbors: heap.into_sorted(),
        nodes_visited: order.len(),
        series_scanned: scanned,
        leaves_pruned: 0,
        total_leaves: index.tree().leaf_count_under(index.tree().root()),
    })
}

/// Scan of the single leaf the query routes to.
pub fn approx_search(index: &Index, query: &PreparedQuery, k: usize) -> Result<KnnResult> {
    extended_approx_search(index, query, k, SearchBudget { nbr: 1 })
}

/// Exact kNN plus the leaves it skipped.
pub fn exact_search_traced(index: &Index, query: &PreparedQuery, k: usize) -> Result<(KnnResult, Vec<NodeId>)> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let tree = index.tree();
    let bp = index.breakpoints();
    let mut heap = KnnHeap::new(k);
    let mut visited: HashSet<NodeId> = HashSet::new();
    let mut scanned = 0;
    for leaf in extended_scan_order(index, query, 1) {
        scanned += leaf_scan(index, leaf, query, &mut heap)?;
        visited.insert(leaf);
    }

    let mut queue: BinaryHeap<Reverse<(OrderedBound, NodeId)>> = BinaryHeap::new();
    queue.push(Reverse((OrderedBound(0.0), tree.root())));
    let mut pruned = Vec::new();
    while let Some(Reverse((OrderedBound(lb), node))) = queue.pop() {
        if prunable(lb, heap.kth()) {
            pruned.extend(
                std::iter::once(node)
                    .chain(queue.drain().map(|Reverse((_, n))| n))
                    .flat_map(|n| tree.leaves_under(n))
                    .filter(|l| !visited.contains(l)),
            );
            break;
        }
        match &tree.node(node).kind {
            NodeKind::Internal(_) => {
                for child in tree.children(node) {
                    let b = query.lower_bound(&tree.node(child).word, bp);
                    if prunable(b, heap.kth()) {
                        pruned.extend(tree.leaves_under(child).into_iter().filter(|l| !visited.contains(l)));
                    } else {
                        queue.push(Reverse((OrderedBound(b), child)));
                    }
                }
            }
            NodeKind::Leaf(_) => {
                if visited.insert(node) {
                    scanned += leaf_scan(index, node, query, &mut heap)?;
                }
            }
        }
    }
    pruned.sort_unstable();
    pruned.dedup();
    let total_leaves = tree.leaf_count_under(tree.root());
    Ok((
        KnnResult {
            neighbors: heap.into_sorted(),
            nodes_visited: visited.len(),
            series_scanned: scanned,
            leaves_pruned: pruned.len(),
            total_leaves,
        },
        pruned,
    ))
}

pub fn exact_search(index: &Index, query: &PreparedQuery, k: usize) -> Result<KnnResult> {
    exact_search_traced(index, query, k).map(|(r, _)| r)
}

/// A node is skipped only when its bound is strictly above the k-th
/// distance, with slack for rounding in the bound itself.
fn prunable(lb: f64, kth: f64) -> bool {
    lb > kth * (1.0 + 1e-9) + 1e-12
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrderedBound(f64);

impl Eq for OrderedBound {}

impl PartialOrd for OrderedBound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedBound {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Leaf upper bounds bucketed by `bucket_width`; values past the last
/// bucket land in it, unbounded leaves are counted separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundHistogram {
    pub bucket_width: f64,
    pub counts: Vec<usize>,
    pub unbounded: usize,
    pub finite: Vec<f64>,
}

impl BoundHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.unbounded
    }

    pub fn mean_finite(&self) -> Option<f64> {
        (!self.finite.is_empty()).then(|| self.finite.iter().sum::<f64>() / self.finite.len() as f64)
    }
}

pub fn leaf_bound_histogram(tree: &Tree, n: usize, bp: &Breakpoints, bucket_width: f64, buckets: usize) -> BoundHistogram {
    let mut hist = BoundHistogram {
        bucket_width,
        counts: vec![0; buckets.max(1)],
        unbounded: 0,
        finite: Vec::new(),
    };
    for leaf in tree.leaves_under(tree.root()) {
        match leaf_upper_bound::<f64>(&tree.node(leaf).word, n, bp) {
            Some(ub) => {
                let bucket = ((ub / bucket_width) as usize).min(hist.counts.len() - 1);
                hist.counts[bucket] += 1;
                hist.finite.push(ub);
            }
            None => hist.unbounded += 1,
        }
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heap_keeps_best_with_ordinal_ties() {
        let mut h = KnnHeap::new(2);
        assert!(h.offer(5, 1.0));
        assert!(h.offer(3, 2.0));
        assert_eq!(h.kth(), 2.0);
        assert!(h.offer(1, 2.0));
        assert!(!h.offer(7, 2.0));
        assert!(!h.offer(5, 1.0));
        assert!(h.offer(9, 0.5));
        let out = h.into_sorted();
        assert_eq!(out.iter().map(|n| n.ordinal).collect::<Vec<_>>(), vec![9, 5]);
    }

    #[test]
    fn heap_recompute_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let k = rng.random_range(1..10);
            let items: Vec<(u64, f64)> = (0..60).map(|i| (i, f64::from(rng.random_range(0..20u8)))).collect();
            let mut h = KnnHeap::new(k);
            for &(o, d) in &items {
                h.offer(o, d);
            }
            let mut sorted: Vec<Neighbor> = items.iter().map(|&(ordinal, distance)| Neighbor { ordinal, distance }).collect();
            sorted.sort_by(neighbor_cmp);
            sorted.truncate(k);
            assert_eq!(h.into_sorted(), sorted);
        }
    }

    #[test]
    fn ed_abandon_matches_full_distance() {
        let bp = Breakpoints::standard(8).unwrap();
        let q: Vec<f64> = (0..32).map(|i| (i as f64 * 0.2).sin()).collect();
        let c: Vec<f64> = (0..32).map(|i| (i as f64 * 0.25).cos()).collect();
        let pq = PreparedQuery::new(&q, 4, bp, DistanceKind::Euclidean).unwrap();
        let full = pq.distance(&c);
        let direct = q.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert_eq!(full, direct);
        assert_eq!(pq.distance_within(&c, full), Some(full));
        assert_eq!(pq.distance_within(&c, full * 0.99), None);
    }

    #[test]
    fn budget_must_be_positive() {
        assert!(SearchBudget::new(0).is_err());
        assert_eq!(SearchBudget::new(3).unwrap().nodes(), 3);
    }
}
