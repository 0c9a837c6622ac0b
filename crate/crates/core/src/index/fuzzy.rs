//! Boundary duplication: series close to a split boundary are copied into
//! the leaf on the other side.
//!
//! For every leaf or pack `T` routed from sid `s` of an internal node, and
//! every chosen-segment bit `j`, the sibling at `s ^ bit(j)` is a neighbor.
//! A neighbor series whose PAA on that segment lies within `f` times the
//! neighbor's (β-clamped) region width of the shared breakpoint is copied
//! into `T`, while `T` stays at or below capacity and the series has fewer
//! than the allowed number of copies. Node words never change.

use std::collections::HashSet;

use crate::split::sid_of;
use crate::summarization::Breakpoints;

use super::storage::SaxTable;
use super::tree::{NodeId, NodeKind, Tree};

/// One duplicated series and the range test it passed.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyEntry {
    pub ordinal: u64,
    pub target: NodeId,
    /// The sibling the series was taken from.
    pub source: NodeId,
    pub parent: NodeId,
    pub segment: usize,
    pub paa: f64,
    pub boundary: f64,
    pub reach: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FuzzyLog {
    pub entries: Vec<FuzzyEntry>,
}

impl FuzzyLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub(crate) struct FuzzyInput<'a> {
    pub tree: &'a Tree,
    /// Original ordinals under every node (internal nodes hold their subtree).
    pub members: &'a [Vec<u32>],
    pub table: &'a SaxTable,
    /// `w` PAA coefficients per series.
    pub paa: &'a [f32],
    pub bp: &'a Breakpoints,
    pub fraction: f64,
    pub max_copies: u32,
    pub th: u64,
}

/// Extra ordinals per node id, plus the audit log.
pub(crate) fn duplicate(input: &FuzzyInput<'_>) -> (Vec<Vec<u32>>, FuzzyLog) {
    let tree = input.tree;
    let bits = input.bp.bits();
    let w = input.table.width();
    let mut copies = vec![0u32; input.table.len()];
    let mut dups: Vec<Vec<u32>> = vec![Vec::new(); input.members.len()];
    let mut seen: Vec<HashSet<u32>> = vec![HashSet::new(); input.members.len()];
    let mut log = FuzzyLog::default();

    for parent in tree.preorder() {
        let node = tree.node(parent);
        let NodeKind::Internal(internal) = &node.kind else {
            continue;
        };
        let lambda = internal.csl.len();
        for (&sid, &target) in &internal.routes {
            if !tree.node(target).is_leaf() {
                continue;
            }
            for j in 0..lambda {
                let shift = lambda - 1 - j;
                let nsid = sid ^ (1 << shift);
                let Some(&source) = internal.routes.get(&nsid) else {
                    continue;
                };
                if source == target {
                    continue;
                }
                let seg = internal.csl[j];
                let sym = node.word.symbol(seg);
                let nbit = ((nsid >> shift) & 1) as u8;
                let nsym = sym.extended(nbit);
                let (lo, hi) = input.bp.clamped_region(nsym.prefix, nsym.len);
                let boundary = if nbit == 1 { lo } else { hi };
                let reach = input.fraction * (hi - lo);

                for &ord in &input.members[source as usize] {
                    let capacity = input.members[target as usize].len() + dups[target as usize].len();
                    if capacity as u64 >= input.th {
                        break;
                    }
                    let o = ord as usize;
                    if copies[o] >= input.max_copies {
                        continue;
                    }
                    let sax = input.table.get(o);
                    if sid_of(&node.word, sax, &internal.csl, bits) != nsid {
                        continue;
                    }
                    let x = f64::from(input.paa[o * w + seg]);
                    if (x - boundary).abs() > reach {
                        continue;
                    }
                    if !seen[target as usize].insert(ord) {
                        continue;
                    }
                    copies[o] += 1;
                    dups[target as usize].push(ord);
                    log.entries.push(FuzzyEntry {
                        ordinal: u64::from(ord),
                        target,
                        source,
                        parent,
                        segment: seg,
                        paa: x,
                        boundary,
                        reach,
                    });
                }
            }
        }
    }
    for d in &mut dups {
        d.sort_unstable();
    }
    (dups, log)
}
