#![allow(dead_code)]

use std::path::{Path, PathBuf};

use sidx_core::eval::{generate_queries, generate_random_walk, Dataset};
use sidx_core::index::{build_index, BuildConfig, BuildReport, Index};

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub dataset: PathBuf,
    pub queries: PathBuf,
    pub data: Dataset,
    pub query_set: Dataset,
}

pub fn fixture(count: usize, n: usize, queries: usize, seed: u64) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("data.bin");
    let qpath = dir.path().join("queries.bin");
    generate_random_walk(&dataset, count, n, seed).unwrap();
    generate_queries(&qpath, queries.max(1), n, seed).unwrap();
    let data = Dataset::load(&dataset, n).unwrap();
    let query_set = Dataset::load(&qpath, n).unwrap();
    Fixture {
        dir,
        dataset,
        queries: qpath,
        data,
        query_set,
    }
}

impl Fixture {
    pub fn build(&self, name: &str, config: &BuildConfig) -> (Index, BuildReport) {
        build_index(&self.dataset, &self.index_dir(name), config).unwrap()
    }

    pub fn index_dir(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }
}

pub fn small_config(n: usize, w: usize, th: u64) -> BuildConfig {
    let mut c = BuildConfig::new(n);
    c.w = w;
    c.th = th;
    c.buffer_series = 1000;
    c
}

/// Every live record in the index as `(ordinal, leaf, is_home)`.
pub fn scan_all(index: &Index) -> Vec<(u64, u32, bool)> {
    let layout = index.layout();
    let mut out = Vec::new();
    for leaf in index.tree().leaves_under(index.tree().root()) {
        let bytes = index.leaf_bytes(leaf).unwrap();
        let deleted = &index.tree().leaf(leaf).deleted;
        for slot in 0..layout.count(&bytes) {
            if deleted.get(slot as u64) {
                continue;
            }
            let r = layout.record(&bytes, slot);
            out.push((r.ordinal(), leaf, index.is_home(leaf, r.sax())));
        }
    }
    out
}
