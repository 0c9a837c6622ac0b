//! Bulk build: SAX table, recursive splits, leaf packing, optional fuzzy
//! duplication, then one buffered pass writing leaf files.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::packing::{pack_isax, pack_nodes};
use crate::split::{
    binary_baseline_plan, child_word, clamp_range, fanout_range, find_optimal_plan, sid_of,
};
use crate::summarization::{Breakpoints, ISaxWord};
use crate::Sid;

use super::fuzzy::{duplicate, FuzzyInput, FuzzyLog};
use super::storage::{self, build_sax_table, DatasetReader, DeletionBits, SaxTable};
use super::tree::{Internal, Leaf, Node, NodeId, NodeKind, PackInfo, SplitInfo, Tree};
use super::{BuildConfig, Index, Strategy, SAX_TABLE_FILE};

#[derive(Debug, Clone, Default)]
pub struct BuildReport {
    pub sax_seconds: f64,
    pub structure_seconds: f64,
    pub materialize_seconds: f64,
    pub total_seconds: f64,
    /// Leaves over capacity because every segment is at full cardinality.
    pub oversized: Vec<NodeId>,
    pub fuzzy: FuzzyLog,
    pub flushes: u64,
}

/// Grows a subtree from a set of items (rows of a SAX table).
pub(crate) struct Grower<'a> {
    pub config: &'a BuildConfig,
    pub bp: &'a Breakpoints,
    pub table: &'a SaxTable,
    pub tree: &'a mut Tree,
    /// Items under every node created or grown here.
    pub members: HashMap<NodeId, Vec<u32>>,
    pub oversized: Vec<NodeId>,
    pub rng: &'a mut ChaCha8Rng,
}

impl Grower<'_> {
    /// Split `id` (currently a leaf holding `members[id]`) while it holds
    /// more than `th` items.
    pub fn grow(&mut self, id: NodeId) -> Result<()> {
        let size = self.members[&id].len() as u64;
        if size <= self.config.th {
            return Ok(());
        }
        let word = self.tree.node(id).word.clone();
        let bits = self.bp.bits();
        let plan = {
            let words: Vec<&[u8]> = self.members[&id].iter().map(|&i| self.table.get(i as usize)).collect();
            match self.config.strategy {
                Strategy::Adaptive => find_optimal_plan(&words, &word, &self.config.split_params(), self.bp),
                Strategy::BinaryBaseline => binary_baseline_plan(&words, &word, bits),
            }
        };
        let plan = match plan {
            Ok(plan) => plan,
            Err(Error::Unsplittable) => {
                log::warn!("node {id} holds {size} series above capacity {} and cannot split", self.config.th);
                self.oversized.push(id);
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let band = match self.config.strategy {
            Strategy::Adaptive => {
                let range = fanout_range(size, self.config.th, self.config.fill_low, self.config.fill_high, word.segments())?;
                Some(clamp_range(range, word.promotable_segments(bits).len()))
            }
            Strategy::BinaryBaseline => None,
        };
        let info = SplitInfo {
            size,
            band,
            adaptive: self.config.strategy == Strategy::Adaptive,
        };
        self.split_with(id, plan.segments, info)
    }

    /// Turn leaf `id` into an internal node over `csl` and grow the children.
    pub fn split_with(&mut self, id: NodeId, csl: Vec<usize>, info: SplitInfo) -> Result<()> {
        let bits = self.bp.bits();
        let word = self.tree.node(id).word.clone();
        let mut groups: BTreeMap<Sid, Vec<u32>> = BTreeMap::new();
        for &item in &self.members[&id] {
            let sid = sid_of(&word, self.table.get(item as usize), &csl, bits);
            groups.entry(sid).or_default().push(item);
        }
        let mut routes = BTreeMap::new();
        let mut children = Vec::with_capacity(groups.len());
        for (sid, items) in groups {
            let child = self.tree.push(Node {
                word: child_word(&word, &csl, sid),
                parent: Some(id),
                kind: NodeKind::Leaf(Leaf::new(0)),
            });
            self.members.insert(child, items);
            routes.insert(sid, child);
            children.push(child);
        }
        self.tree.node_mut(id).kind = NodeKind::Internal(Internal {
            csl,
            routes,
            split: info,
            extractions: 0,
        });
        for child in children {
            self.grow(child)?;
        }
        Ok(())
    }

    /// Pack small leaf children of every internal node under `id`, in
    /// pre-order.
    pub fn pack_subtree(&mut self, id: NodeId) {
        if self.config.strategy != Strategy::Adaptive {
            return;
        }
        let internals: Vec<NodeId> = self
            .tree
            .preorder_from(id)
            .into_iter()
            .filter(|&n| !self.tree.node(n).is_leaf())
            .collect();
        for parent in internals {
            self.pack_children(parent);
        }
    }

    /// Pack the plain leaf children of one internal node.
    pub fn pack_children(&mut self, parent: NodeId) {
        let internal = self.tree.internal(parent);
        let lambda = internal.csl.len();
        if lambda == 0 {
            return;
        }
        let csl = internal.csl.clone();
        let children: Vec<(Sid, u64)> = internal
            .routes
            .iter()
            .filter(|(_, &c)| self.tree.leaf_opt(c).is_some_and(|l| l.pack.is_none()))
            .map(|(&sid, &c)| (sid, self.members[&c].len() as u64))
            .collect();
        let packs = pack_nodes(
            &children,
            lambda,
            self.config.small_node,
            self.config.rho,
            self.config.th,
            self.rng,
        );
        let parent_word = self.tree.node(parent).word.clone();
        for pack in packs.into_iter().filter(|p| p.members().len() >= 2) {
            let mask = pack.mask().expect("non-empty pack has a mask");
            let mut sids = pack.members().to_vec();
            sids.sort_unstable();
            let olds: Vec<NodeId> = sids.iter().map(|s| self.tree.internal(parent).routes[s]).collect();
            let mut items: Vec<u32> = Vec::with_capacity(pack.size() as usize);
            for old in &olds {
                items.extend(self.members.remove(old).unwrap_or_default());
                self.tree.remove(*old);
            }
            items.sort_unstable();
            let node = self.tree.push(Node {
                word: pack_isax(&mask, &parent_word, &csl),
                parent: Some(parent),
                kind: NodeKind::Leaf(Leaf {
                    pack: Some(PackInfo { mask, members: sids.clone() }),
                    ..Leaf::new(0)
                }),
            });
            self.members.insert(node, items);
            let routes = &mut self.tree.internal_mut(parent).routes;
            for sid in sids {
                routes.insert(sid, node);
            }
        }
    }
}

impl Tree {
    pub(crate) fn leaf_opt(&self, id: NodeId) -> Option<&Leaf> {
        self.get(id).and_then(Node::as_leaf)
    }
}

fn clean_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        let ours = (name.starts_with("leaf_") && (name.ends_with(".bin") || name.ends_with(".del")))
            || name == super::INDEX_FILE
            || name == SAX_TABLE_FILE;
        if ours {
            fs::remove_file(entry.path())?;
        }
    }
    Ok(())
}

/// Build an index over `dataset` into directory `dir`.
pub fn build_index(dataset: &Path, dir: &Path, config: &BuildConfig) -> Result<(Index, BuildReport)> {
    config.validate()?;
    let total = Instant::now();
    let bp = Breakpoints::standard(config.bits)?;
    clean_dir(dir)?;
    let mut report = BuildReport::default();

    // stage 1
    let t = Instant::now();
    let (table, paa) = build_sax_table(dataset, config.n, config.w, bp, config.buffer_series, config.fuzzy.is_some())?;
    table.save(&dir.join(SAX_TABLE_FILE))?;
    report.sax_seconds = t.elapsed().as_secs_f64();
    let count = table.len();

    // stages 2-4
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tree = Tree::with_root(
        ISaxWord::wildcard(config.w),
        NodeKind::Leaf(Leaf::new(0)),
    );
    let root = tree.root();
    let mut grower = Grower {
        config,
        bp,
        table: &table,
        tree: &mut tree,
        members: HashMap::from([(root, (0..count as u32).collect())]),
        oversized: Vec::new(),
        rng: &mut rng,
    };
    let root_csl: Vec<usize> = if count as u64 > config.th { (0..config.w).collect() } else { Vec::new() };
    grower.split_with(
        root,
        root_csl,
        SplitInfo {
            size: count as u64,
            band: None,
            adaptive: false,
        },
    )?;
    grower.pack_subtree(root);
    let Grower { members, oversized, .. } = grower;
    let map = tree.compact();
    let remap = |id: NodeId| map[id as usize].expect("live node survives compaction");
    let mut by_node: Vec<Vec<u32>> = vec![Vec::new(); tree.node_count()];
    for (id, items) in members {
        if let Some(new) = map[id as usize] {
            by_node[new as usize] = items;
        }
    }
    report.oversized = oversized.into_iter().filter(|&id| map[id as usize].is_some()).map(remap).collect();
    report.oversized.sort_unstable();

    let dups = match (config.fuzzy, &paa) {
        (Some(fraction), Some(paa)) => {
            let (dups, log) = duplicate(&FuzzyInput {
                tree: &tree,
                members: &by_node,
                table: &table,
                paa,
                bp,
                fraction,
                max_copies: config.max_duplications,
                th: config.th,
            });
            report.fuzzy = log;
            dups
        }
        _ => vec![Vec::new(); tree.node_count()],
    };
    report.structure_seconds = t.elapsed().as_secs_f64();

    // stage 5
    let t = Instant::now();
    let leaves = tree.leaves_under(tree.root());
    for (file_id, &leaf) in leaves.iter().enumerate() {
        tree.leaf_mut(leaf).file_id = file_id as u32;
    }
    let mut extra: HashMap<u32, Vec<NodeId>> = HashMap::new();
    for (node, ords) in dups.iter().enumerate() {
        for &o in ords {
            extra.entry(o).or_default().push(node as NodeId);
        }
    }
    let layout = super::RecordLayout { n: config.n, w: config.w };
    let bits = bp.bits();
    let mut slots: HashMap<NodeId, u64> = HashMap::new();
    let mut buffer: BTreeMap<NodeId, Vec<u8>> = BTreeMap::new();
    let mut buffered = 0usize;
    let mut flush = |buffer: &mut BTreeMap<NodeId, Vec<u8>>, tree: &Tree| -> Result<()> {
        for (&node, bytes) in buffer.iter() {
            storage::append_leaf(dir, tree.leaf(node).file_id, bytes)?;
        }
        buffer.clear();
        report.flushes += 1;
        Ok(())
    };
    let mut reader = DatasetReader::open(dataset, config.n)?;
    let mut batch = Vec::new();
    let mut ordinal = 0u32;
    while reader.read_batch(config.buffer_series, &mut batch)? > 0 {
        for values in batch.chunks_exact(config.n) {
            let sax = table.get(ordinal as usize);
            let home = tree.route_to_leaf(sax, bits)?;
            let copies = extra.get(&ordinal).map(Vec::as_slice).unwrap_or(&[]);
            for &dest in std::iter::once(&home).chain(copies) {
                if buffered >= config.buffer_series {
                    flush(&mut buffer, &tree)?;
                    buffered = 0;
                }
                layout.encode(buffer.entry(dest).or_default(), values, sax, u64::from(ordinal));
                *slots.entry(dest).or_default() += 1;
                buffered += 1;
            }
            ordinal += 1;
        }
    }
    if buffered > 0 {
        flush(&mut buffer, &tree)?;
    }
    for &leaf in &leaves {
        let n = slots.get(&leaf).copied().unwrap_or(0);
        let l = tree.leaf_mut(leaf);
        l.slots = n;
        l.deleted = DeletionBits::new(n);
    }
    report.materialize_seconds = t.elapsed().as_secs_f64();

    let index = Index {
        dir: dir.to_path_buf(),
        config: config.clone(),
        dataset: dataset.to_path_buf(),
        series_count: count as u64,
        next_ordinal: count as u64,
        next_file_id: leaves.len() as u32,
        tree,
        bp,
        locator: None,
    };
    index.save()?;
    report.total_seconds = total.elapsed().as_secs_f64();
    Ok((index, report))
}
