//! `index.bin` layout:
//!
//! ```text
//! magic "DMPYIDX1" | version u16 | config json (u32 len) | meta json (u32 len)
//! | node count u32 | nodes in pre-order | crc64 of all preceding bytes
//! ```
//!
//! Node ids in the file are pre-order positions. Deletion bits live in the
//! per-leaf `.del` files and are not part of this file.

use std::collections::BTreeMap;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use crc::{Crc, CRC_64_ECMA_182};

use crate::error::{Error, Result};
use crate::packing::PackMask;
use crate::split::FanoutRange;
use crate::summarization::{ISaxSymbol, ISaxWord};

use super::storage::DeletionBits;
use super::tree::{Internal, Leaf, Node, NodeId, NodeKind, PackInfo, SplitInfo, Tree};
use super::{BuildConfig, IndexMeta};

pub const MAGIC: &[u8; 8] = b"DMPYIDX1";
pub const FORMAT_VERSION: u16 = 1;

const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_ECMA_182);
const NO_PARENT: u32 = u32::MAX;
const TAG_INTERNAL: u8 = 0;
const TAG_LEAF: u8 = 1;

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Corrupt(msg.into())
}

pub fn encode_index_file(tree: &Tree, meta: &IndexMeta) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.write_u16::<LittleEndian>(FORMAT_VERSION)?;
    let config = serde_json::to_vec(&meta.config).map_err(|e| corrupt(e.to_string()))?;
    let meta_json = serde_json::to_vec(meta).map_err(|e| corrupt(e.to_string()))?;
    for blob in [&config, &meta_json] {
        out.write_u32::<LittleEndian>(blob.len() as u32)?;
        out.extend_from_slice(blob);
    }

    let order = tree.preorder();
    let mut position = BTreeMap::new();
    for (i, &id) in order.iter().enumerate() {
        position.insert(id, i as u32);
    }
    out.write_u32::<LittleEndian>(order.len() as u32)?;
    for &id in &order {
        let node = tree.node(id);
        for sym in node.word.symbols() {
            out.push(sym.prefix);
            out.push(sym.len);
        }
        out.write_u32::<LittleEndian>(node.parent.map_or(NO_PARENT, |p| position[&p]))?;
        match &node.kind {
            NodeKind::Internal(internal) => {
                out.push(TAG_INTERNAL);
                out.push(internal.csl.len() as u8);
                out.extend(internal.csl.iter().map(|&s| s as u8));
                out.write_u64::<LittleEndian>(internal.split.size)?;
                match internal.split.band {
                    Some(band) => {
                        out.push(1);
                        out.push(band.min as u8);
                        out.push(band.max as u8);
                    }
                    None => out.extend_from_slice(&[0, 0, 0]),
                }
                out.push(u8::from(internal.split.adaptive));
                out.write_u32::<LittleEndian>(internal.extractions)?;
                out.write_u32::<LittleEndian>(internal.routes.len() as u32)?;
                for (&sid, child) in &internal.routes {
                    out.write_u64::<LittleEndian>(sid)?;
                    out.write_u32::<LittleEndian>(position[child])?;
                }
            }
            NodeKind::Leaf(leaf) => {
                out.push(TAG_LEAF);
                out.write_u32::<LittleEndian>(leaf.file_id)?;
                out.write_u64::<LittleEndian>(leaf.slots)?;
                match &leaf.pack {
                    Some(pack) => {
                        out.push(1);
                        out.push(pack.mask.width() as u8);
                        out.write_u64::<LittleEndian>(pack.mask.fixed())?;
                        out.write_u64::<LittleEndian>(pack.mask.value())?;
                        out.write_u32::<LittleEndian>(pack.members.len() as u32)?;
                        for &sid in &pack.members {
                            out.write_u64::<LittleEndian>(sid)?;
                        }
                    }
                    None => out.push(0),
                }
            }
        }
    }
    let crc = CRC64.checksum(&out);
    out.write_u64::<LittleEndian>(crc)?;
    Ok(out)
}

/// Parse an index file. The checksum is verified before anything else, so
/// a damaged file never yields a partial tree.
pub fn decode_index_file(path: &Path, bytes: &[u8]) -> Result<(Tree, IndexMeta)> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    if bytes.len() < MAGIC.len() + 2 + 8 {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
            stored: 0,
            computed: CRC64.checksum(bytes),
        });
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(trailer.try_into().expect("8-byte trailer"));
    let computed = CRC64.checksum(body);
    if stored != computed {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
            stored,
            computed,
        });
    }

    let mut cur = Cursor::new(&body[MAGIC.len()..]);
    let version = cur.read_u16::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let config: BuildConfig = serde_json::from_slice(&read_blob(&mut cur)?).map_err(|e| corrupt(e.to_string()))?;
    let meta: IndexMeta = serde_json::from_slice(&read_blob(&mut cur)?).map_err(|e| corrupt(e.to_string()))?;
    if meta.config != config {
        return Err(corrupt("config and metadata disagree"));
    }
    let w = config.w;

    let count = cur.read_u32::<LittleEndian>()? as usize;
    if count == 0 {
        return Err(corrupt("index has no nodes"));
    }
    let mut nodes: Vec<Node> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut symbols = Vec::with_capacity(w);
        for _ in 0..w {
            let prefix = cur.read_u8()?;
            let len = cur.read_u8()?;
            symbols.push(ISaxSymbol::new(prefix, len));
        }
        let parent = cur.read_u32::<LittleEndian>()?;
        let parent = (parent != NO_PARENT).then_some(parent);
        let kind = match cur.read_u8()? {
            TAG_INTERNAL => {
                let lambda = cur.read_u8()? as usize;
                let mut csl = vec![0u8; lambda];
                cur.read_exact(&mut csl)?;
                let size = cur.read_u64::<LittleEndian>()?;
                let has_band = cur.read_u8()? == 1;
                let (min, max) = (cur.read_u8()? as usize, cur.read_u8()? as usize);
                let adaptive = cur.read_u8()? == 1;
                let extractions = cur.read_u32::<LittleEndian>()?;
                let routes_len = cur.read_u32::<LittleEndian>()?;
                let mut routes = BTreeMap::new();
                for _ in 0..routes_len {
                    let sid = cur.read_u64::<LittleEndian>()?;
                    let child = cur.read_u32::<LittleEndian>()?;
                    if child as usize >= count {
                        return Err(corrupt(format!("route to node {child} of {count}")));
                    }
                    routes.insert(sid, child as NodeId);
                }
                NodeKind::Internal(Internal {
                    csl: csl.into_iter().map(usize::from).collect(),
                    routes,
                    split: SplitInfo {
                        size,
                        band: has_band.then_some(FanoutRange { min, max }),
                        adaptive,
                    },
                    extractions,
                })
            }
            TAG_LEAF => {
                let file_id = cur.read_u32::<LittleEndian>()?;
                let slots = cur.read_u64::<LittleEndian>()?;
                let pack = if cur.read_u8()? == 1 {
                    let width = cur.read_u8()? as usize;
                    let fixed = cur.read_u64::<LittleEndian>()?;
                    let value = cur.read_u64::<LittleEndian>()?;
                    let members_len = cur.read_u32::<LittleEndian>()?;
                    let members = (0..members_len)
                        .map(|_| cur.read_u64::<LittleEndian>())
                        .collect::<std::io::Result<Vec<_>>>()?;
                    Some(PackInfo {
                        mask: PackMask::from_parts(width, fixed, value),
                        members,
                    })
                } else {
                    None
                };
                NodeKind::Leaf(Leaf {
                    file_id,
                    slots,
                    deleted: DeletionBits::new(slots),
                    pack,
                })
            }
            tag => return Err(corrupt(format!("unknown node tag {tag}"))),
        };
        nodes.push(Node {
            word: ISaxWord::from_symbols(symbols),
            parent,
            kind,
        });
    }
    if cur.position() as usize != body.len() - MAGIC.len() {
        return Err(corrupt("trailing bytes after node records"));
    }

    let mut iter = nodes.into_iter();
    let mut tree = Tree::with_root_node(iter.next().expect("count > 0"));
    for node in iter {
        tree.push(node);
    }
    Ok((tree, meta))
}

fn read_blob(cur: &mut Cursor<&[u8]>) -> Result<Vec<u8>> {
    let len = cur.read_u32::<LittleEndian>()? as usize;
    let remaining = cur.get_ref().len() - cur.position() as usize;
    if len > remaining {
        return Err(corrupt("blob length past end of file"));
    }
    let mut blob = vec![0; len];
    cur.read_exact(&mut blob)?;
    Ok(blob)
}
