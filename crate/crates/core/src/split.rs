//! Choosing the segments a full node splits on.
//!
//! A plan is scored by a proximity term (spread of the series' refined
//! symbol midpoints on the chosen segments) plus a compactness term (spread
//! of the children's fill factors, penalized by the share of overflowing
//! children). The search only visits plan sizes inside the fill-factor
//! band and derives every plan's child-size distribution from a superset's.

use std::collections::HashSet;

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::summarization::{Breakpoints, ISaxWord};
use crate::Sid;

/// Segments to split on (0-based, ascending) and the plan's score.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub segments: Vec<usize>,
    pub score: f64,
}

/// Per-segment population variance of refined-region midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentStats {
    variances: Vec<f64>,
}

impl SegmentStats {
    pub fn from_variances(variances: Vec<f64>) -> Self {
        Self { variances }
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn get(&self, seg: usize) -> f64 {
        self.variances[seg]
    }
}

/// Child sizes keyed by sid. Only non-empty children are stored; entries
/// are sorted by sid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeDistribution {
    width: usize,
    entries: Vec<(Sid, u64)>,
}

impl SizeDistribution {
    pub fn from_counts(width: usize, counts: impl IntoIterator<Item = (Sid, u64)>) -> Self {
        let mut entries: Vec<(Sid, u64)> = counts.into_iter().filter(|&(_, c)| c > 0).collect();
        entries.sort_unstable();
        merge_sorted(&mut entries);
        Self { width, entries }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn entries(&self) -> &[(Sid, u64)] {
        &self.entries
    }

    pub fn get(&self, sid: Sid) -> u64 {
        self.entries
            .binary_search_by_key(&sid, |&(s, _)| s)
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c).sum()
    }
}

fn merge_sorted(entries: &mut Vec<(Sid, u64)>) {
    entries.dedup_by(|next, kept| {
        if next.0 == kept.0 {
            kept.1 += next.1;
            true
        } else {
            false
        }
    });
}

/// Admissible numbers of chosen segments for a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FanoutRange {
    pub min: usize,
    pub max: usize,
}

impl FanoutRange {
    pub fn contains(&self, lambda: usize) -> bool {
        self.min <= lambda && lambda <= self.max
    }
}

/// Tunables of the adaptive split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitParams {
    pub th: u64,
    pub fill_low: f64,
    pub fill_high: f64,
    pub alpha: f64,
}

/// Sid of `sax` under `plan`, without checking that the plan's segments
/// can be promoted.
#[inline]
pub fn sid_of(node: &ISaxWord, sax: &[u8], plan: &[usize], bits: u8) -> Sid {
    plan.iter().fold(0, |sid, &seg| {
        (sid << 1) | Sid::from(node.symbol(seg).next_bit(sax[seg], bits))
    })
}

/// Routing key of `sax` under `plan`, and the child word it lands in.
pub fn promote_isax(node: &ISaxWord, sax: &[u8], plan: &[usize], bits: u8) -> Result<(Sid, ISaxWord)> {
    let mut sid: Sid = 0;
    let mut child = node.clone();
    for &seg in plan {
        let sym = node.symbol(seg);
        if sym.len >= bits {
            return Err(Error::SegmentSaturated(seg));
        }
        let bit = sym.next_bit(sax[seg], bits);
        sid = (sid << 1) | Sid::from(bit);
        child.set_symbol(seg, sym.extended(bit));
    }
    Ok((sid, child))
}

/// The child word reached through `sid` under `plan`.
pub fn child_word(node: &ISaxWord, plan: &[usize], sid: Sid) -> ISaxWord {
    let mut child = node.clone();
    let width = plan.len();
    for (i, &seg) in plan.iter().enumerate() {
        let bit = ((sid >> (width - 1 - i)) & 1) as u8;
        child.set_symbol(seg, node.symbol(seg).extended(bit));
    }
    child
}

pub fn segment_variances<S: AsRef<[u8]>>(
    words: &[S],
    node: &ISaxWord,
    bp: &Breakpoints,
) -> Result<SegmentStats> {
    if words.is_empty() {
        return Err(Error::EmptyInput("segment_variances needs at least one series"));
    }
    let bits = bp.bits();
    let w = node.segments();
    let count = words.len() as f64;
    let midpoint = |seg: usize, sax: &[u8]| -> f64 {
        let sym = node.symbol(seg);
        if sym.len < bits {
            let next = sym.extended(sym.next_bit(sax[seg], bits));
            bp.midpoint(next.prefix, next.len)
        } else {
            bp.midpoint(sym.prefix, sym.len)
        }
    };
    // shifted by the first series so identical inputs give exactly zero
    let shift: Vec<f64> = (0..w).map(|seg| midpoint(seg, words[0].as_ref())).collect();
    let mut sums = vec![0.0; w];
    let mut sq = vec![0.0; w];
    for word in words {
        let sax = word.as_ref();
        for seg in 0..w {
            let d = midpoint(seg, sax) - shift[seg];
            sums[seg] += d;
            sq[seg] += d * d;
        }
    }
    Ok(SegmentStats {
        variances: sums
            .iter()
            .zip(&sq)
            .map(|(s, q)| (q / count - (s / count).powi(2)).max(0.0))
            .collect(),
    })
}

/// Variance of the series projected onto `plan`, accumulated per segment.
pub fn projected_variance(plan: &[usize], stats: &SegmentStats) -> f64 {
    plan.iter().map(|&seg| stats.get(seg)).sum()
}

/// Range of chosen-segment counts keeping the average child fill factor
/// inside `[fill_low, fill_high]`.
pub fn fanout_range(size: u64, th: u64, fill_low: f64, fill_high: f64, w: usize) -> Result<FanoutRange> {
    if size <= th {
        return Err(Error::NoSplitNeeded { size, th });
    }
    let ratio = size as f64 / th as f64;
    let lo = (ratio / fill_high).log2().ceil();
    let hi = (ratio / fill_low).log2().floor();
    let min = (lo.max(1.0) as usize).min(w);
    let max = (hi.max(0.0) as usize).min(w);
    Ok(FanoutRange {
        min,
        max: max.max(min),
    })
}

/// Child sizes when every segment of `plan` is promoted.
pub fn base_distribution<S: AsRef<[u8]>>(
    words: &[S],
    node: &ISaxWord,
    plan: &[usize],
    bits: u8,
) -> Result<SizeDistribution> {
    if words.is_empty() {
        return Err(Error::EmptyInput("base_distribution needs at least one series"));
    }
    if let Some(&seg) = plan.iter().find(|&&seg| node.symbol(seg).len >= bits) {
        return Err(Error::SegmentSaturated(seg));
    }
    let mut sids: Vec<(Sid, u64)> = words
        .iter()
        .map(|word| (sid_of(node, word.as_ref(), plan, bits), 1))
        .collect();
    sids.sort_unstable();
    merge_sorted(&mut sids);
    Ok(SizeDistribution {
        width: plan.len(),
        entries: sids,
    })
}

/// Fold a distribution over `base_plan` onto `sub_plan`, a subset of it.
pub fn project_distribution(
    base: &SizeDistribution,
    base_plan: &[usize],
    sub_plan: &[usize],
) -> Result<SizeDistribution> {
    let positions = sub_plan
        .iter()
        .map(|seg| base_plan.iter().position(|s| s == seg))
        .collect::<Option<Vec<usize>>>()
        .filter(|p| p.windows(2).all(|w| w[0] < w[1]))
        .ok_or_else(|| Error::NotSubset {
            base: base_plan.to_vec(),
            sub: sub_plan.to_vec(),
        })?;
    Ok(project_positions(base, &positions))
}

/// Projection onto the plan positions `positions` (ascending indices into
/// the base plan).
fn project_positions(base: &SizeDistribution, positions: &[usize]) -> SizeDistribution {
    let width = positions.len();
    let shifts: Vec<usize> = positions.iter().map(|&p| base.width - 1 - p).collect();
    let extract = |sid: Sid| shifts.iter().fold(0, |acc, &s| (acc << 1) | ((sid >> s) & 1));
    let entries = if width <= 20 {
        let mut dense = vec![0u64; 1 << width];
        for &(sid, count) in &base.entries {
            dense[extract(sid) as usize] += count;
        }
        dense
            .into_iter()
            .enumerate()
            .filter(|&(_, c)| c > 0)
            .map(|(sid, c)| (sid as Sid, c))
            .collect()
    } else {
        let mut v: Vec<(Sid, u64)> = base.entries.iter().map(|&(sid, c)| (extract(sid), c)).collect();
        v.sort_unstable();
        merge_sorted(&mut v);
        v
    };
    SizeDistribution { width, entries }
}

/// Objective value of `plan` given its child-size distribution.
pub fn score_plan(plan: &[usize], dist: &SizeDistribution, stats: &SegmentStats, th: u64, alpha: f64) -> f64 {
    let lambda = plan.len();
    debug_assert!(lambda > 0);
    let children = (lambda as f64).exp2();
    let th = th as f64;
    let proximity = (projected_variance(plan, stats) / lambda as f64).sqrt().exp();

    let mut total = 0.0;
    let mut sum_sq = 0.0;
    let mut overflow = 0u64;
    for &(_, count) in &dist.entries {
        let fill = count as f64 / th;
        total += fill;
        sum_sq += fill * fill;
        if count as f64 > th {
            overflow += 1;
        }
    }
    let mean = total / children;
    let sigma = (sum_sq / children - mean * mean).max(0.0).sqrt();
    let o = overflow as f64 / children;
    proximity + alpha * (-(1.0 + o) * sigma).exp()
}

fn plan_mask(plan: &[usize]) -> u64 {
    plan.iter().fold(0, |m, &s| m | (1u64 << s))
}

/// Highest-scoring plan whose size lies in the fanout range; ties go to the
/// lexicographically smallest segment list.
pub fn find_optimal_plan<S: AsRef<[u8]>>(
    words: &[S],
    node: &ISaxWord,
    params: &SplitParams,
    bp: &Breakpoints,
) -> Result<SplitPlan> {
    let bits = bp.bits();
    let promotable = node.promotable_segments(bits);
    if promotable.is_empty() {
        return Err(Error::Unsplittable);
    }
    let range = fanout_range(
        words.len() as u64,
        params.th,
        params.fill_low,
        params.fill_high,
        node.segments(),
    )?;
    let range = clamp_range(range, promotable.len());
    let stats = segment_variances(words, node, bp)?;
    let base = base_distribution(words, node, &promotable, bits)?;

    let mut search = PlanSearch {
        stats: &stats,
        params,
        min: range.min,
        visited: HashSet::new(),
        best: None,
    };
    search.calc_dist(&base, &promotable, range.max);
    Ok(search.best.expect("non-empty fanout range yields a plan"))
}

/// Narrow a fanout range to the number of promotable segments.
pub fn clamp_range(range: FanoutRange, promotable: usize) -> FanoutRange {
    let max = range.max.min(promotable);
    FanoutRange {
        min: range.min.min(max),
        max,
    }
}

struct PlanSearch<'a> {
    stats: &'a SegmentStats,
    params: &'a SplitParams,
    min: usize,
    visited: HashSet<u64>,
    best: Option<SplitPlan>,
}

impl PlanSearch<'_> {
    /// Depth-first over the subset lattice: every `cur`-subset of `plan`
    /// is scored from `dist`, then its own subsets from its distribution.
    fn calc_dist(&mut self, dist: &SizeDistribution, plan: &[usize], cur: usize) {
        if cur < self.min || cur == 0 {
            return;
        }
        for positions in (0..plan.len()).combinations(cur) {
            let segments: Vec<usize> = positions.iter().map(|&p| plan[p]).collect();
            let mask = plan_mask(&segments);
            if self.visited.contains(&mask) {
                continue;
            }
            let sub = project_positions(dist, &positions);
            let score = score_plan(&segments, &sub, self.stats, self.params.th, self.params.alpha);
            self.offer(&segments, score);
            self.calc_dist(&sub, &segments, cur - 1);
            self.visited.insert(mask);
        }
    }

    fn offer(&mut self, segments: &[usize], score: f64) {
        let better = match &self.best {
            None => true,
            Some(best) => score > best.score || (score == best.score && segments < best.segments.as_slice()),
        };
        if better {
            self.best = Some(SplitPlan {
                segments: segments.to_vec(),
                score,
            });
        }
    }
}

/// Single-segment plan with the most even next-bit split; ties go to the
/// lowest segment id. The score is the negated imbalance.
pub fn binary_baseline_plan<S: AsRef<[u8]>>(words: &[S], node: &ISaxWord, bits: u8) -> Result<SplitPlan> {
    let promotable = node.promotable_segments(bits);
    if promotable.is_empty() {
        return Err(Error::Unsplittable);
    }
    let total = words.len() as i64;
    let mut best: Option<(i64, usize)> = None;
    for seg in promotable {
        let sym = node.symbol(seg);
        let ones = words
            .iter()
            .filter(|w| sym.next_bit(w.as_ref()[seg], bits) == 1)
            .count() as i64;
        let imbalance = (total - 2 * ones).abs();
        if best.is_none_or(|(b, _)| imbalance < b) {
            best = Some((imbalance, seg));
        }
    }
    let (imbalance, seg) = best.expect("at least one promotable segment");
    Ok(SplitPlan {
        segments: vec![seg],
        score: -(imbalance as f64),
    })
}
