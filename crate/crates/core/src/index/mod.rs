//! The index tree, its build pipeline and its on-disk form.
//!
//! An index lives in a directory: `index.bin` (structure and metadata),
//! `sax_table.bin`, and one `leaf_{id}.bin` / `leaf_{id}.del` pair per leaf.

mod build;
mod config;
mod format;
mod fuzzy;
pub mod storage;
mod tree;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::summarization::Breakpoints;

pub use build::{build_index, BuildReport};
pub(crate) use build::Grower;
pub use config::{BuildConfig, Strategy};
pub use format::{decode_index_file, encode_index_file, FORMAT_VERSION, MAGIC};
pub use fuzzy::{FuzzyEntry, FuzzyLog};
pub use storage::{DeletionBits, RecordLayout, SaxTable};
pub use tree::{Internal, Leaf, Node, NodeId, NodeKind, PackInfo, SplitInfo, Tree};

pub const INDEX_FILE: &str = "index.bin";
pub const SAX_TABLE_FILE: &str = "sax_table.bin";

/// Structure statistics, recomputable from the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub node_count: usize,
    pub internal_count: usize,
    pub leaf_count: usize,
    pub pack_count: usize,
    /// Maximum root-to-leaf edge count.
    pub height: usize,
    /// Live series over `leaf_count · th`.
    pub fill_factor: f64,
    /// Live leaf records, fuzzy copies included.
    pub records: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub version: u16,
    pub config: BuildConfig,
    pub dataset: PathBuf,
    /// Live indexed series, copies excluded.
    pub series_count: u64,
    pub next_ordinal: u64,
    pub next_file_id: u32,
    pub stats: IndexStats,
}

/// Where a record sits: leaf node and slot.
pub type Location = (NodeId, u64);

pub struct Index {
    pub(crate) dir: PathBuf,
    pub(crate) config: BuildConfig,
    pub(crate) dataset: PathBuf,
    pub(crate) series_count: u64,
    pub(crate) next_ordinal: u64,
    pub(crate) next_file_id: u32,
    pub(crate) tree: Tree,
    pub(crate) bp: &'static Breakpoints,
    /// Ordinal to every live slot holding it; built on first use.
    pub(crate) locator: Option<HashMap<u64, Vec<Location>>>,
}

pub fn compute_stats(tree: &Tree, series_count: u64, th: u64) -> IndexStats {
    let mut internal_count = 0;
    let mut leaf_count = 0;
    let mut pack_count = 0;
    let mut records = 0;
    let order = tree.preorder();
    for &id in &order {
        match &tree.node(id).kind {
            NodeKind::Internal(_) => internal_count += 1,
            NodeKind::Leaf(leaf) => {
                leaf_count += 1;
                records += leaf.live();
                if leaf.pack.is_some() {
                    pack_count += 1;
                }
            }
        }
    }
    let fill_factor = if leaf_count == 0 {
        0.0
    } else {
        series_count as f64 / (leaf_count as f64 * th as f64)
    };
    IndexStats {
        node_count: order.len(),
        internal_count,
        leaf_count,
        pack_count,
        height: tree.height(),
        fill_factor,
        records,
    }
}

impl Index {
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &BuildConfig {
        &self.config
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn breakpoints(&self) -> &'static Breakpoints {
        self.bp
    }

    pub fn dataset_path(&self) -> &Path {
        &self.dataset
    }

    pub fn series_count(&self) -> u64 {
        self.series_count
    }

    pub fn next_ordinal(&self) -> u64 {
        self.next_ordinal
    }

    pub fn layout(&self) -> RecordLayout {
        RecordLayout {
            n: self.config.n,
            w: self.config.w,
        }
    }

    pub fn stats(&self) -> IndexStats {
        compute_stats(&self.tree, self.series_count, self.config.th)
    }

    pub fn meta(&self) -> IndexMeta {
        IndexMeta {
            version: FORMAT_VERSION,
            config: self.config.clone(),
            dataset: self.dataset.clone(),
            series_count: self.series_count,
            next_ordinal: self.next_ordinal,
            next_file_id: self.next_file_id,
            stats: self.stats(),
        }
    }

    /// Raw bytes of a leaf's record file.
    pub fn leaf_bytes(&self, id: NodeId) -> Result<Vec<u8>> {
        let leaf = self.tree.leaf(id);
        let bytes = storage::read_leaf(&self.dir, leaf.file_id, self.layout())?;
        if bytes.len() as u64 != leaf.slots * self.layout().size() as u64 {
            return Err(Error::Corrupt(format!(
                "leaf file {} holds {} bytes, expected {} slots",
                leaf.file_id,
                bytes.len(),
                leaf.slots
            )));
        }
        Ok(bytes)
    }

    /// Whether `sax` routes to `leaf`, i.e. the record is an original
    /// rather than a fuzzy copy.
    pub fn is_home(&self, leaf: NodeId, sax: &[u8]) -> bool {
        self.tree.route_to_leaf(sax, self.bp.bits()).ok() == Some(leaf)
    }

    /// Write `index.bin` (atomically) and every leaf's deletion bits.
    pub fn save(&self) -> Result<()> {
        for id in self.tree.leaves_under(self.tree.root()) {
            let leaf = self.tree.leaf(id);
            leaf.deleted.save(&storage::deletion_path(&self.dir, leaf.file_id))?;
        }
        let bytes = encode_index_file(&self.tree, &self.meta())?;
        let tmp = self.dir.join(format!("{INDEX_FILE}.tmp"));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, self.dir.join(INDEX_FILE))?;
        Ok(())
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(INDEX_FILE);
        let bytes = fs::read(&path)?;
        let (mut tree, meta) = decode_index_file(&path, &bytes)?;
        meta.config.validate()?;
        let bp = Breakpoints::standard(meta.config.bits)?;
        for id in tree.leaves_under(tree.root()) {
            let leaf = tree.leaf_mut(id);
            let del = storage::deletion_path(dir, leaf.file_id);
            leaf.deleted = if del.exists() {
                DeletionBits::load(&del)?
            } else {
                DeletionBits::new(leaf.slots)
            };
            if leaf.deleted.len() != leaf.slots {
                return Err(Error::Corrupt(format!(
                    "{}: {} bits for {} slots",
                    del.display(),
                    leaf.deleted.len(),
                    leaf.slots
                )));
            }
        }
        let stats = compute_stats(&tree, meta.series_count, meta.config.th);
        if stats != meta.stats {
            return Err(Error::Corrupt(format!(
                "stored statistics {:?} disagree with the tree {:?}",
                meta.stats, stats
            )));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            config: meta.config,
            dataset: meta.dataset,
            series_count: meta.series_count,
            next_ordinal: meta.next_ordinal,
            next_file_id: meta.next_file_id,
            tree,
            bp,
            locator: None,
        })
    }

    pub fn load_sax_table(&self) -> Result<SaxTable> {
        SaxTable::load(&self.dir.join(SAX_TABLE_FILE), self.config.w)
    }
}
