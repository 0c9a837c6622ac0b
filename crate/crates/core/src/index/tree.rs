use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::packing::PackMask;
use crate::split::{sid_of, FanoutRange};
use crate::summarization::ISaxWord;
use crate::Sid;

use super::storage::DeletionBits;

pub type NodeId = u32;

/// How an internal node's segments were chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitInfo {
    /// Node size when it was split.
    pub size: u64,
    /// Admissible plan sizes at split time; `None` for the root's full split.
    pub band: Option<FanoutRange>,
    pub adaptive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Internal {
    pub csl: Vec<usize>,
    pub routes: BTreeMap<Sid, NodeId>,
    pub split: SplitInfo,
    /// Pack extractions since the last repack of this node's children.
    pub extractions: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackInfo {
    pub mask: PackMask,
    pub members: Vec<Sid>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub file_id: u32,
    /// Record slots in the leaf file, deleted ones included.
    pub slots: u64,
    pub deleted: DeletionBits,
    pub pack: Option<PackInfo>,
}

impl Leaf {
    pub fn new(file_id: u32) -> Self {
        Self {
            file_id,
            slots: 0,
            deleted: DeletionBits::new(0),
            pack: None,
        }
    }

    /// Live records, fuzzy copies included.
    pub fn live(&self) -> u64 {
        self.slots - self.deleted.count_deleted()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Internal(Internal),
    Leaf(Leaf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub word: ISaxWord,
    pub parent: Option<NodeId>,
    pub kind: NodeKind,
}

impl Node {
    pub fn as_internal(&self) -> Option<&Internal> {
        match &self.kind {
            NodeKind::Internal(i) => Some(i),
            NodeKind::Leaf(_) => None,
        }
    }

    pub fn as_leaf(&self) -> Option<&Leaf> {
        match &self.kind {
            NodeKind::Leaf(l) => Some(l),
            NodeKind::Internal(_) => None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf(_))
    }
}

/// Arena of nodes; removed nodes leave `None` holes until compaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Option<Node>>,
    root: NodeId,
}

impl Tree {
    pub fn with_root(word: ISaxWord, kind: NodeKind) -> Self {
        Self::with_root_node(Node {
            word,
            parent: None,
            kind,
        })
    }

    pub fn with_root_node(root: Node) -> Self {
        Self {
            nodes: vec![Some(root)],
            root: 0,
        }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &Node {
        self.nodes[id as usize].as_ref().expect("live node id")
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut Node {
        self.nodes[id as usize].as_mut().expect("live node id")
    }

    pub fn get(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id as usize).and_then(Option::as_ref)
    }

    pub fn internal(&self, id: NodeId) -> &Internal {
        self.node(id).as_internal().expect("internal node")
    }

    pub fn internal_mut(&mut self, id: NodeId) -> &mut Internal {
        match &mut self.node_mut(id).kind {
            NodeKind::Internal(i) => i,
            NodeKind::Leaf(_) => panic!("node {id} is a leaf"),
        }
    }

    pub fn leaf(&self, id: NodeId) -> &Leaf {
        self.node(id).as_leaf().expect("leaf node")
    }

    pub fn leaf_mut(&mut self, id: NodeId) -> &mut Leaf {
        match &mut self.node_mut(id).kind {
            NodeKind::Leaf(l) => l,
            NodeKind::Internal(_) => panic!("node {id} is internal"),
        }
    }

    pub fn push(&mut self, node: Node) -> NodeId {
        self.nodes.push(Some(node));
        (self.nodes.len() - 1) as NodeId
    }

    pub fn remove(&mut self, id: NodeId) -> Option<Node> {
        self.nodes[id as usize].take()
    }

    /// Live node ids in arena order.
    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_some())
            .map(|(i, _)| i as NodeId)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_some()).count()
    }

    /// Distinct children of an internal node, in first-sid order.
    pub fn children(&self, id: NodeId) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = Vec::new();
        if let Some(internal) = self.node(id).as_internal() {
            for &child in internal.routes.values() {
                if !out.contains(&child) {
                    out.push(child);
                }
            }
        }
        out
    }

    /// Node ids of the subtree at `id` in pre-order.
    pub fn preorder_from(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(cur) = stack.pop() {
            out.push(cur);
            let children = self.children(cur);
            stack.extend(children.into_iter().rev());
        }
        out
    }

    pub fn preorder(&self) -> Vec<NodeId> {
        self.preorder_from(self.root)
    }

    pub fn leaves_under(&self, id: NodeId) -> Vec<NodeId> {
        self.preorder_from(id)
            .into_iter()
            .filter(|&n| self.node(n).is_leaf())
            .collect()
    }

    pub fn leaf_count_under(&self, id: NodeId) -> usize {
        self.leaves_under(id).len()
    }

    /// Follow routing tables from `from` down to the leaf covering `sax`.
    pub fn route_from(&self, from: NodeId, sax: &[u8], bits: u8) -> Result<NodeId> {
        let mut cur = from;
        loop {
            let node = self.node(cur);
            match &node.kind {
                NodeKind::Leaf(_) => return Ok(cur),
                NodeKind::Internal(internal) => {
                    let sid = sid_of(&node.word, sax, &internal.csl, bits);
                    cur = *internal
                        .routes
                        .get(&sid)
                        .ok_or(Error::MissingRoute { node: cur, sid })?;
                }
            }
        }
    }

    pub fn route_to_leaf(&self, sax: &[u8], bits: u8) -> Result<NodeId> {
        self.route_from(self.root, sax, bits)
    }

    /// Renumber live nodes in pre-order with no holes. Returns the old to
    /// new id map.
    pub fn compact(&mut self) -> Vec<Option<NodeId>> {
        let order = self.preorder();
        let mut map = vec![None; self.nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            map[old as usize] = Some(new as NodeId);
        }
        let mut nodes = Vec::with_capacity(order.len());
        for &old in &order {
            let mut node = self.nodes[old as usize].take().expect("pre-order visits live nodes");
            node.parent = node.parent.map(|p| map[p as usize].expect("parent is live"));
            if let NodeKind::Internal(internal) = &mut node.kind {
                for child in internal.routes.values_mut() {
                    *child = map[*child as usize].expect("child is live");
                }
            }
            nodes.push(Some(node));
        }
        self.nodes = nodes;
        self.root = 0;
        map
    }

    /// Pre-order renumbered copy, for structural comparison.
    pub fn compacted(&self) -> Tree {
        let mut t = self.clone();
        t.compact();
        t
    }

    /// Maximum root-to-leaf edge count.
    pub fn height(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(self.root, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            best = best.max(depth);
            for child in self.children(id) {
                stack.push((child, depth + 1));
            }
        }
        best
    }
}
