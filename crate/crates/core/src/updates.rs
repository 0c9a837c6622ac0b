//! Inserts, deletes and structural upkeep of a built index.
//!
//! Every structural change is prepared on a copy of the tree and written
//! to fresh leaf files; the copy replaces the live tree only after all
//! writes succeed, and the replaced files are removed last. Fuzzy copies
//! are not carried into rewritten leaves. Changes reach `index.bin` on the
//! next [`Index::save`].

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::index::storage::{self, SaxTable};
use crate::index::{Index, Leaf, Location, Node, NodeId, NodeKind, PackInfo, RecordLayout, Tree};
use crate::packing::{pack_isax, LeafPack};
use crate::split::{child_word, clamp_range, fanout_range, sid_of};
use crate::summarization::{compute_paa, paa_to_sax};
use crate::Sid;

/// What to delete.
#[derive(Debug, Clone, Copy)]
pub enum DeleteTarget<'a> {
    Ordinal(u64),
    /// The first live series equal to this one (compared at f32 precision).
    Series(&'a [f64]),
}

/// Encoded records plus their SAX words, row `i` for record `i`.
struct RecordSet {
    bytes: Vec<u8>,
    sax: Vec<u8>,
    w: usize,
    count: usize,
}

impl RecordSet {
    fn new(layout: RecordLayout) -> Self {
        Self {
            bytes: Vec::new(),
            sax: Vec::new(),
            w: layout.w,
            count: 0,
        }
    }

    fn push(&mut self, record: &[u8], layout: RecordLayout) {
        self.bytes.extend_from_slice(record);
        self.sax.extend_from_slice(layout.record(record, 0).sax());
        self.count += 1;
    }

    fn table(&self) -> SaxTable {
        SaxTable::from_raw(self.w, self.sax.clone())
    }

    fn record(&self, layout: RecordLayout, i: usize) -> &[u8] {
        let size = layout.size();
        &self.bytes[i * size..(i + 1) * size]
    }
}

/// Live records of `leaf` that route to it (fuzzy copies skipped).
fn home_records(index: &Index, tree: &Tree, leaf: NodeId) -> Result<Vec<Vec<u8>>> {
    let layout = index.layout();
    let bytes = storage::read_leaf(&index.dir, tree.leaf(leaf).file_id, layout)?;
    let deleted = &tree.leaf(leaf).deleted;
    let bits = index.bp.bits();
    let mut out = Vec::new();
    for slot in 0..layout.count(&bytes) {
        if deleted.get(slot as u64) {
            continue;
        }
        let r = layout.record(&bytes, slot);
        if tree.route_to_leaf(r.sax(), bits).ok() == Some(leaf) {
            let size = layout.size();
            out.push(bytes[slot * size..(slot + 1) * size].to_vec());
        }
    }
    Ok(out)
}

impl Index {
    fn ensure_locator(&mut self) -> Result<()> {
        if self.locator.is_some() {
            return Ok(());
        }
        let layout = self.layout();
        let mut map: HashMap<u64, Vec<Location>> = HashMap::new();
        for leaf in self.tree.leaves_under(self.tree.root()) {
            let bytes = self.leaf_bytes(leaf)?;
            let deleted = &self.tree.leaf(leaf).deleted;
            for slot in 0..layout.count(&bytes) {
                if !deleted.get(slot as u64) {
                    map.entry(layout.record(&bytes, slot).ordinal())
                        .or_default()
                        .push((leaf, slot as u64));
                }
            }
        }
        self.locator = Some(map);
        Ok(())
    }

    /// Every live slot holding `ordinal`.
    pub fn locate(&mut self, ordinal: u64) -> Result<Vec<Location>> {
        self.ensure_locator()?;
        Ok(self
            .locator
            .as_ref()
            .and_then(|m| m.get(&ordinal))
            .cloned()
            .unwrap_or_default())
    }

    fn locator_forget_leaves(&mut self, leaves: &[NodeId]) {
        if let Some(map) = self.locator.as_mut() {
            map.retain(|_, locs| {
                locs.retain(|(leaf, _)| !leaves.contains(leaf));
                !locs.is_empty()
            });
        }
    }

    fn locator_add(&mut self, ordinal: u64, loc: Location) {
        if let Some(map) = self.locator.as_mut() {
            map.entry(ordinal).or_default().push(loc);
        }
    }

    fn fresh_file_id(&mut self) -> u32 {
        let id = self.next_file_id;
        self.next_file_id += 1;
        id
    }

    fn update_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.config.seed ^ (u64::from(self.next_file_id) << 20) ^ self.next_ordinal)
    }

    /// Write the records of each listed leaf to fresh files; `members`
    /// maps leaf to rows of `records`.
    fn materialize(
        &mut self,
        tree: &mut Tree,
        leaves: &[NodeId],
        members: &HashMap<NodeId, Vec<u32>>,
        records: &RecordSet,
    ) -> Result<Vec<(u64, Location)>> {
        let layout = self.layout();
        let mut placed = Vec::new();
        for &leaf in leaves {
            let file_id = self.fresh_file_id();
            let rows = members.get(&leaf).map(Vec::as_slice).unwrap_or(&[]);
            let mut bytes = Vec::with_capacity(rows.len() * layout.size());
            for (slot, &row) in rows.iter().enumerate() {
                let rec = records.record(layout, row as usize);
                bytes.extend_from_slice(rec);
                placed.push((layout.record(rec, 0).ordinal(), (leaf, slot as u64)));
            }
            storage::write_leaf(&self.dir, file_id, &bytes)?;
            let l = tree.leaf_mut(leaf);
            l.file_id = file_id;
            l.slots = rows.len() as u64;
            l.deleted = storage::DeletionBits::new(rows.len() as u64);
        }
        Ok(placed)
    }

    /// Swap in `tree`, drop the files of `old_files`, and refresh the
    /// locator for the affected leaves.
    fn commit(&mut self, tree: Tree, old_leaves: &[NodeId], old_files: &[u32], placed: Vec<(u64, Location)>) -> Result<()> {
        self.tree = tree;
        self.locator_forget_leaves(old_leaves);
        for (ordinal, loc) in placed {
            self.locator_add(ordinal, loc);
        }
        for &f in old_files {
            storage::remove_leaf_files(&self.dir, f)?;
        }
        Ok(())
    }
}

/// Add one series; returns its ordinal.
pub fn insert_series(index: &mut Index, values: &[f64]) -> Result<u64> {
    let n = index.config.n;
    if values.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("series contains non-finite values".into()));
    }
    index.ensure_locator()?;
    let stored: Vec<f32> = values.iter().map(|&x| x as f32).collect();
    let sax = paa_to_sax(&compute_paa(&stored, index.config.w)?, index.bp).0;
    let ordinal = index.next_ordinal;
    let layout = index.layout();
    let mut record = Vec::with_capacity(layout.size());
    layout.encode(&mut record, &stored, &sax, ordinal);

    let mut target = route_or_create(index, &sax)?;
    if index.tree.leaf(target).pack.is_some() && index.tree.leaf(target).live() >= index.config.th {
        target = extract_from_pack(index, target, &sax)?;
    }

    let leaf = index.tree.leaf_mut(target);
    let file_id = leaf.file_id;
    let slot = match leaf.deleted.first_deleted() {
        Some(slot) => {
            storage::write_slot(&index.dir, file_id, layout, slot, &record)?;
            index.tree.leaf_mut(target).deleted.set(slot, false);
            slot
        }
        None => {
            storage::append_leaf(&index.dir, file_id, &record)?;
            let leaf = index.tree.leaf_mut(target);
            leaf.slots += 1;
            leaf.deleted.push(false);
            leaf.slots - 1
        }
    };
    index.locator_add(ordinal, (target, slot));
    index.next_ordinal += 1;
    index.series_count += 1;

    if index.tree.leaf(target).live() > index.config.th {
        split_leaf(index, target)?;
    }
    resplit_ancestors(index, target)?;
    Ok(ordinal)
}

/// Leaf `sax` routes to, adding a leaf where a routing entry is missing.
fn route_or_create(index: &mut Index, sax: &[u8]) -> Result<NodeId> {
    let bits = index.bp.bits();
    loop {
        match index.tree.route_to_leaf(sax, bits) {
            Ok(leaf) => return Ok(leaf),
            Err(Error::MissingRoute { node, sid }) => {
                let word = {
                    let parent = index.tree.node(node);
                    child_word(&parent.word, &index.tree.internal(node).csl, sid)
                };
                let file_id = index.fresh_file_id();
                let leaf = index.tree.push(Node {
                    word,
                    parent: Some(node),
                    kind: NodeKind::Leaf(Leaf::new(file_id)),
                });
                index.tree.internal_mut(node).routes.insert(sid, leaf);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Move the member of full pack `pack` that `sax` belongs to into its own
/// leaf; returns that leaf.
fn extract_from_pack(index: &mut Index, pack: NodeId, sax: &[u8]) -> Result<NodeId> {
    let bits = index.bp.bits();
    let layout = index.layout();
    let parent = index.tree.node(pack).parent.expect("packs have a parent");
    let (parent_word, csl) = {
        let p = index.tree.node(parent);
        (p.word.clone(), p.as_internal().expect("parent is internal").csl.clone())
    };
    let member = sid_of(&parent_word, sax, &csl, bits);

    let mut records = RecordSet::new(layout);
    let mut stay: Vec<u32> = Vec::new();
    let mut go: Vec<u32> = Vec::new();
    for rec in home_records(index, &index.tree, pack)? {
        let row = records.count as u32;
        let s = sid_of(&parent_word, layout.record(&rec, 0).sax(), &csl, bits);
        records.push(&rec, layout);
        if s == member { go.push(row) } else { stay.push(row) }
    }

    let mut tree = index.tree.clone();
    let old_file = tree.leaf(pack).file_id;
    let info = tree.leaf(pack).pack.clone().expect("pack node");
    let remaining: Vec<Sid> = info.members.iter().copied().filter(|&s| s != member).collect();
    let lambda = csl.len();
    {
        let node = tree.node_mut(pack);
        if remaining.len() == 1 {
            node.word = child_word(&parent_word, &csl, remaining[0]);
            if let NodeKind::Leaf(l) = &mut node.kind {
                l.pack = None;
            }
        } else {
            let mut lp = LeafPack::empty(lambda);
            for &s in &remaining {
                lp.insert(s, 0);
            }
            let mask = lp.mask().expect("non-empty");
            node.word = pack_isax(&mask, &parent_word, &csl);
            if let NodeKind::Leaf(l) = &mut node.kind {
                l.pack = Some(PackInfo { mask, members: remaining });
            }
        }
    }
    let extracted = tree.push(Node {
        word: child_word(&parent_word, &csl, member),
        parent: Some(parent),
        kind: NodeKind::Leaf(Leaf::new(0)),
    });
    tree.internal_mut(parent).routes.insert(member, extracted);
    tree.internal_mut(parent).extractions += 1;

    let members = HashMap::from([(pack, stay), (extracted, go)]);
    let placed = index.materialize(&mut tree, &[pack, extracted], &members, &records)?;
    index.commit(tree, &[pack], &[old_file], placed)?;

    let lambda_children = 1usize << lambda.min(20);
    if index.tree.internal(parent).extractions as usize >= (lambda_children / 4).max(1) {
        repack(index, parent)?;
        return index.tree.route_to_leaf(sax, bits);
    }
    Ok(extracted)
}

/// Unpack every leaf child of `parent` and pack them again from scratch.
pub fn repack(index: &mut Index, parent: NodeId) -> Result<()> {
    let bits = index.bp.bits();
    let layout = index.layout();
    let config = index.config.clone();
    let (parent_word, csl) = {
        let p = index.tree.node(parent);
        (p.word.clone(), p.as_internal().expect("internal").csl.clone())
    };
    let leaf_children: Vec<NodeId> = index
        .tree
        .children(parent)
        .into_iter()
        .filter(|&c| index.tree.node(c).is_leaf())
        .collect();

    let mut records = RecordSet::new(layout);
    let mut by_sid: std::collections::BTreeMap<Sid, Vec<u32>> = std::collections::BTreeMap::new();
    for &leaf in &leaf_children {
        for rec in home_records(index, &index.tree, leaf)? {
            let s = sid_of(&parent_word, layout.record(&rec, 0).sax(), &csl, bits);
            by_sid.entry(s).or_default().push(records.count as u32);
            records.push(&rec, layout);
        }
    }

    let mut tree = index.tree.clone();
    let old_files: Vec<u32> = leaf_children.iter().map(|&l| tree.leaf(l).file_id).collect();
    for &leaf in &leaf_children {
        tree.remove(leaf);
    }
    tree.internal_mut(parent)
        .routes
        .retain(|_, c| !leaf_children.contains(c));
    let mut members: HashMap<NodeId, Vec<u32>> = HashMap::new();
    for (sid, rows) in by_sid {
        let leaf = tree.push(Node {
            word: child_word(&parent_word, &csl, sid),
            parent: Some(parent),
            kind: NodeKind::Leaf(Leaf::new(0)),
        });
        tree.internal_mut(parent).routes.insert(sid, leaf);
        members.insert(leaf, rows);
    }
    let table = records.table();
    let mut rng = index.update_rng();
    let mut grower = crate::index::Grower {
        config: &config,
        bp: index.bp,
        table: &table,
        tree: &mut tree,
        members,
        oversized: Vec::new(),
        rng: &mut rng,
    };
    grower.pack_children(parent);
    let members = grower.members;
    tree.internal_mut(parent).extractions = 0;
    let new_leaves: Vec<NodeId> = tree
        .children(parent)
        .into_iter()
        .filter(|c| tree.node(*c).is_leaf())
        .collect();
    let placed = index.materialize(&mut tree, &new_leaves, &members, &records)?;
    index.commit(tree, &leaf_children, &old_files, placed)
}

/// Split an over-capacity plain leaf in place.
fn split_leaf(index: &mut Index, leaf: NodeId) -> Result<()> {
    rebuild_subtree(index, leaf).map(|_| ())
}

/// Replace the subtree at `node` by a fresh build over its live records.
/// Returns the number of records placed.
fn rebuild_subtree(index: &mut Index, node: NodeId) -> Result<usize> {
    let layout = index.layout();
    let config = index.config.clone();
    let old_leaves = index.tree.leaves_under(node);
    let mut records = RecordSet::new(layout);
    for &leaf in &old_leaves {
        for rec in home_records(index, &index.tree, leaf)? {
            records.push(&rec, layout);
        }
    }

    let mut tree = index.tree.clone();
    let old_files: Vec<u32> = old_leaves.iter().map(|&l| tree.leaf(l).file_id).collect();
    for d in tree.preorder_from(node).into_iter().skip(1) {
        tree.remove(d);
    }
    tree.node_mut(node).kind = NodeKind::Leaf(Leaf::new(0));
    let table = records.table();
    let mut rng = index.update_rng();
    let mut grower = crate::index::Grower {
        config: &config,
        bp: index.bp,
        table: &table,
        tree: &mut tree,
        members: HashMap::from([(node, (0..records.count as u32).collect())]),
        oversized: Vec::new(),
        rng: &mut rng,
    };
    grower.grow(node)?;
    grower.pack_subtree(node);
    let members = grower.members;
    let new_leaves = tree.leaves_under(node);
    let placed = index.materialize(&mut tree, &new_leaves, &members, &records)?;
    let count = placed.len();
    index.commit(tree, &old_leaves, &old_files, placed)?;
    Ok(count)
}

/// Live records under `node`.
fn subtree_size(tree: &Tree, node: NodeId) -> u64 {
    tree.leaves_under(node).iter().map(|&l| tree.leaf(l).live()).sum()
}

/// Whether `node`'s size has drifted far enough from its fanout to
/// warrant a rebuild.
pub fn needs_resplit(index: &Index, node: NodeId) -> bool {
    let tree = &index.tree;
    if node == tree.root() {
        return false;
    }
    let Some(internal) = tree.node(node).as_internal() else {
        return false;
    };
    let c = subtree_size(tree, node) as f64;
    let th = index.config.th as f64;
    let lambda = internal.csl.len() as i32;
    let children = 2f64.powi(lambda);
    let grown = c > 2.0 * index.config.fill_high * th * children;
    let shrunk = c < 0.5 * index.config.fill_low * th * children;
    if !(grown || shrunk) {
        return false;
    }
    if c <= th {
        return true;
    }
    let word = &tree.node(node).word;
    let promotable = word.promotable_segments(index.bp.bits()).len();
    match fanout_range(c as u64, index.config.th, index.config.fill_low, index.config.fill_high, word.segments()) {
        Ok(range) => !clamp_range(range, promotable).contains(internal.csl.len()),
        Err(_) => true,
    }
}

/// Rebuild `node`'s subtree if [`needs_resplit`] says so.
pub fn maybe_resplit(index: &mut Index, node: NodeId) -> Result<bool> {
    if !needs_resplit(index, node) {
        return Ok(false);
    }
    rebuild_subtree(index, node)?;
    Ok(true)
}

/// Check ancestors of `leaf` top-down, rebuilding the first that drifted.
fn resplit_ancestors(index: &mut Index, leaf: NodeId) -> Result<()> {
    let mut chain = Vec::new();
    let mut cur = index.tree.get(leaf).and_then(|n| n.parent);
    while let Some(id) = cur {
        chain.push(id);
        cur = index.tree.node(id).parent;
    }
    for &node in chain.iter().rev() {
        if maybe_resplit(index, node)? {
            break;
        }
    }
    Ok(())
}

/// Remove one series; returns its ordinal.
pub fn delete_series(index: &mut Index, target: DeleteTarget<'_>) -> Result<u64> {
    index.ensure_locator()?;
    let ordinal = match target {
        DeleteTarget::Ordinal(o) => o,
        DeleteTarget::Series(values) => find_series(index, values)?,
    };
    let locations = index.locate(ordinal)?;
    if locations.is_empty() {
        return Err(Error::NotFound(format!("series {ordinal}")));
    }
    for &(leaf, slot) in &locations {
        index.tree.leaf_mut(leaf).deleted.set(slot, true);
    }
    if let Some(map) = index.locator.as_mut() {
        map.remove(&ordinal);
    }
    index.series_count -= 1;
    let mut emptied: Vec<NodeId> = locations.iter().map(|l| l.0).collect();
    emptied.sort_unstable();
    emptied.dedup();
    for leaf in emptied {
        if index.tree.get(leaf).is_some() && index.tree.leaf(leaf).live() == 0 {
            remove_leaf(index, leaf)?;
        }
    }
    Ok(ordinal)
}

fn find_series(index: &Index, values: &[f64]) -> Result<u64> {
    if values.len() != index.config.n {
        return Err(Error::LengthMismatch {
            expected: index.config.n,
            actual: values.len(),
        });
    }
    let stored: Vec<f32> = values.iter().map(|&x| x as f32).collect();
    let sax = paa_to_sax(&compute_paa(&stored, index.config.w)?, index.bp).0;
    let not_found = || Error::NotFound("live series equal to the given values".into());
    let leaf = index.tree.route_to_leaf(&sax, index.bp.bits()).map_err(|_| not_found())?;
    let layout = index.layout();
    let bytes = index.leaf_bytes(leaf)?;
    let deleted = &index.tree.leaf(leaf).deleted;
    (0..layout.count(&bytes))
        .filter(|&s| !deleted.get(s as u64))
        .map(|s| layout.record(&bytes, s))
        .find(|r| r.values_f32() == stored)
        .map(|r| r.ordinal())
        .ok_or_else(not_found)
}

/// Drop an empty leaf and any internal ancestors left without children.
fn remove_leaf(index: &mut Index, leaf: NodeId) -> Result<()> {
    let file_id = index.tree.leaf(leaf).file_id;
    storage::remove_leaf_files(&index.dir, file_id)?;
    index.locator_forget_leaves(&[leaf]);
    let mut cur = leaf;
    loop {
        let parent = index.tree.node(cur).parent;
        index.tree.remove(cur);
        let Some(p) = parent else { break };
        let routes = &mut index.tree.internal_mut(p).routes;
        routes.retain(|_, c| *c != cur);
        if !routes.is_empty() || p == index.tree.root() {
            break;
        }
        cur = p;
    }
    Ok(())
}
