//! On-disk formats: raw datasets, the SAX table, leaf record files and
//! deletion bit-vectors. All integers and floats are little-endian.

use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::summarization::{paa_to_sax, compute_paa, Breakpoints};

const F32: usize = 4;

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedDataset {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Streaming reader over a headerless series-major f32 file.
pub struct DatasetReader {
    path: PathBuf,
    reader: BufReader<File>,
    n: usize,
    count: u64,
    read: u64,
}

impl DatasetReader {
    pub fn open(path: &Path, n: usize) -> Result<Self> {
        let file = File::open(path)?;
        let bytes = file.metadata()?.len();
        let record = (n * F32) as u64;
        if n == 0 || bytes == 0 || bytes % record != 0 {
            return Err(malformed(
                path,
                format!("{bytes} bytes is not a positive multiple of {record} (n = {n})"),
            ));
        }
        Ok(Self {
            path: path.to_path_buf(),
            reader: BufReader::with_capacity(1 << 20, file),
            n,
            count: bytes / record,
            read: 0,
        })
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn series_len(&self) -> usize {
        self.n
    }

    /// Read up to `max` series into `out` (cleared first); returns how many.
    pub fn read_batch(&mut self, max: usize, out: &mut Vec<f32>) -> Result<usize> {
        let take = ((self.count - self.read) as usize).min(max);
        out.clear();
        out.resize(take * self.n, 0.0);
        self.reader.read_f32_into::<LittleEndian>(out)?;
        if let Some(pos) = out.iter().position(|x| !x.is_finite()) {
            return Err(malformed(
                &self.path,
                format!("non-finite value in series {}", self.read + (pos / self.n) as u64),
            ));
        }
        self.read += take as u64;
        Ok(take)
    }
}

/// Whole dataset as one flat buffer.
pub fn read_dataset(path: &Path, n: usize) -> Result<Vec<f32>> {
    let mut reader = DatasetReader::open(path, n)?;
    let mut out = Vec::new();
    reader.read_batch(reader.count() as usize, &mut out)?;
    Ok(out)
}

/// One series by ordinal.
pub fn read_series(path: &Path, n: usize, ordinal: u64) -> Result<Vec<f32>> {
    let mut file = File::open(path)?;
    let bytes = file.metadata()?.len();
    let offset = ordinal * (n * F32) as u64;
    if offset + (n * F32) as u64 > bytes {
        return Err(Error::NotFound(format!("series {ordinal} in {}", path.display())));
    }
    file.seek(SeekFrom::Start(offset))?;
    let mut out = vec![0f32; n];
    file.read_f32_into::<LittleEndian>(&mut out)?;
    Ok(out)
}

pub struct DatasetWriter {
    writer: BufWriter<File>,
    n: usize,
    count: u64,
}

impl DatasetWriter {
    pub fn create(path: &Path, n: usize) -> Result<Self> {
        Ok(Self {
            writer: BufWriter::with_capacity(1 << 20, File::create(path)?),
            n,
            count: 0,
        })
    }

    pub fn push<T: Copy + Into<f64>>(&mut self, series: &[T]) -> Result<()> {
        if series.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                actual: series.len(),
            });
        }
        for &x in series {
            self.writer.write_f32::<LittleEndian>(x.into() as f32)?;
        }
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<u64> {
        self.writer.flush()?;
        Ok(self.count)
    }
}

/// SAX words of every dataset series, `w` bytes each, by ordinal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaxTable {
    w: usize,
    data: Vec<u8>,
}

impl SaxTable {
    pub fn from_raw(w: usize, data: Vec<u8>) -> Self {
        debug_assert_eq!(data.len() % w, 0);
        Self { w, data }
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.w
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, ordinal: usize) -> &[u8] {
        &self.data[ordinal * self.w..(ordinal + 1) * self.w]
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.data)?;
        Ok(())
    }

    pub fn load(path: &Path, w: usize) -> Result<Self> {
        let data = fs::read(path)?;
        if data.len() % w != 0 {
            return Err(malformed(path, format!("SAX table length {} not a multiple of {w}", data.len())));
        }
        Ok(Self { w, data })
    }
}

/// SAX table of a dataset, read `batch` series at a time. With `keep_paa`
/// the PAA coefficients are returned as well (`w` per series).
pub fn build_sax_table(
    path: &Path,
    n: usize,
    w: usize,
    bp: &Breakpoints,
    batch: usize,
    keep_paa: bool,
) -> Result<(SaxTable, Option<Vec<f32>>)> {
    let mut reader = DatasetReader::open(path, n)?;
    let count = reader.count() as usize;
    let mut data = Vec::with_capacity(count * w);
    let mut paa_table = keep_paa.then(|| Vec::with_capacity(count * w));
    let mut buf = Vec::new();
    while reader.read_batch(batch.max(1), &mut buf)? > 0 {
        for series in buf.chunks_exact(n) {
            let paa = compute_paa(series, w)?;
            data.extend_from_slice(&paa_to_sax(&paa, bp));
            if let Some(t) = paa_table.as_mut() {
                t.extend_from_slice(&paa);
            }
        }
    }
    Ok((SaxTable { w, data }, paa_table))
}

/// Byte layout of one leaf record: `n` f32, `w` symbol bytes, u64 ordinal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordLayout {
    pub n: usize,
    pub w: usize,
}

impl RecordLayout {
    pub fn size(&self) -> usize {
        self.n * F32 + self.w + 8
    }

    pub fn encode(&self, out: &mut Vec<u8>, values: &[f32], sax: &[u8], ordinal: u64) {
        debug_assert_eq!(values.len(), self.n);
        debug_assert_eq!(sax.len(), self.w);
        let start = out.len();
        out.resize(start + self.n * F32, 0);
        LittleEndian::write_f32_into(values, &mut out[start..]);
        out.extend_from_slice(sax);
        out.extend_from_slice(&ordinal.to_le_bytes());
    }

    pub fn record<'a>(&self, bytes: &'a [u8], slot: usize) -> RecordRef<'a> {
        let size = self.size();
        RecordRef {
            layout: *self,
            bytes: &bytes[slot * size..(slot + 1) * size],
        }
    }

    pub fn count(&self, bytes: &[u8]) -> usize {
        bytes.len() / self.size()
    }
}

/// Borrowed view of one encoded record.
#[derive(Debug, Clone, Copy)]
pub struct RecordRef<'a> {
    layout: RecordLayout,
    bytes: &'a [u8],
}

impl RecordRef<'_> {
    pub fn values_into(&self, out: &mut [f64]) {
        for (dst, chunk) in out.iter_mut().zip(self.bytes[..self.layout.n * F32].chunks_exact(F32)) {
            *dst = f64::from(LittleEndian::read_f32(chunk));
        }
    }

    pub fn values_f32(&self) -> Vec<f32> {
        let mut out = vec![0f32; self.layout.n];
        LittleEndian::read_f32_into(&self.bytes[..self.layout.n * F32], &mut out);
        out
    }

    pub fn sax(&self) -> &[u8] {
        let start = self.layout.n * F32;
        &self.bytes[start..start + self.layout.w]
    }

    pub fn ordinal(&self) -> u64 {
        LittleEndian::read_u64(&self.bytes[self.layout.n * F32 + self.layout.w..])
    }
}

pub fn leaf_path(dir: &Path, file_id: u32) -> PathBuf {
    dir.join(format!("leaf_{file_id}.bin"))
}

pub fn deletion_path(dir: &Path, file_id: u32) -> PathBuf {
    dir.join(format!("leaf_{file_id}.del"))
}

/// Whole leaf file; a missing file reads as empty.
pub fn read_leaf(dir: &Path, file_id: u32, layout: RecordLayout) -> Result<Vec<u8>> {
    let path = leaf_path(dir, file_id);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    if bytes.len() % layout.size() != 0 {
        return Err(Error::Corrupt(format!(
            "{} has {} bytes, not a multiple of the record size {}",
            path.display(),
            bytes.len(),
            layout.size()
        )));
    }
    Ok(bytes)
}

pub fn append_leaf(dir: &Path, file_id: u32, bytes: &[u8]) -> Result<()> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(leaf_path(dir, file_id))?;
    file.write_all(bytes)?;
    Ok(())
}

pub fn write_leaf(dir: &Path, file_id: u32, bytes: &[u8]) -> Result<()> {
    fs::write(leaf_path(dir, file_id), bytes)?;
    Ok(())
}

/// Overwrite one record slot in place.
pub fn write_slot(dir: &Path, file_id: u32, layout: RecordLayout, slot: u64, record: &[u8]) -> Result<()> {
    let mut file = OpenOptions::new().write(true).open(leaf_path(dir, file_id))?;
    file.seek(SeekFrom::Start(slot * layout.size() as u64))?;
    file.write_all(record)?;
    Ok(())
}

pub fn remove_leaf_files(dir: &Path, file_id: u32) -> Result<()> {
    for path in [leaf_path(dir, file_id), deletion_path(dir, file_id)] {
        match fs::remove_file(&path) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

/// One bit per record slot; set bits are deleted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeletionBits {
    len: u64,
    words: Vec<u64>,
}

impl DeletionBits {
    pub fn new(len: u64) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64) as usize],
        }
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, slot: u64) -> bool {
        slot < self.len && (self.words[(slot / 64) as usize] >> (slot % 64)) & 1 == 1
    }

    pub fn set(&mut self, slot: u64, deleted: bool) {
        assert!(slot < self.len, "slot {slot} out of {}", self.len);
        let word = &mut self.words[(slot / 64) as usize];
        if deleted {
            *word |= 1 << (slot % 64);
        } else {
            *word &= !(1 << (slot % 64));
        }
    }

    pub fn push(&mut self, deleted: bool) {
        if self.len % 64 == 0 {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, deleted);
    }

    pub fn count_deleted(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn first_deleted(&self) -> Option<u64> {
        self.words
            .iter()
            .enumerate()
            .find(|(_, &w)| w != 0)
            .map(|(i, w)| i as u64 * 64 + u64::from(w.trailing_zeros()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(8 + self.len.div_ceil(8) as usize);
        out.write_u64::<LittleEndian>(self.len)?;
        for slot in (0..self.len).step_by(8) {
            let mut byte = 0u8;
            for bit in 0..8 {
                if self.get(slot + bit) {
                    byte |= 1 << bit;
                }
            }
            out.push(byte);
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let mut cursor = bytes.as_slice();
        let len = cursor.read_u64::<LittleEndian>()?;
        if cursor.len() as u64 != len.div_ceil(8) {
            return Err(Error::Corrupt(format!("{}: bit-vector length mismatch", path.display())));
        }
        let mut bits = Self::new(len);
        for slot in 0..len {
            if (cursor[(slot / 8) as usize] >> (slot % 8)) & 1 == 1 {
                bits.set(slot, true);
            }
        }
        Ok(bits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let mut w = DatasetWriter::create(&path, 4).unwrap();
        w.push(&[1.0f32, 2.0, 3.0, 4.0]).unwrap();
        w.push(&[5.0f64, 6.0, 7.0, 8.0]).unwrap();
        assert!(w.push(&[1.0f32]).is_err());
        assert_eq!(w.finish().unwrap(), 2);
        assert_eq!(read_dataset(&path, 4).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(read_series(&path, 4, 1).unwrap(), vec![5.0, 6.0, 7.0, 8.0]);
        assert!(matches!(DatasetReader::open(&path, 3), Err(Error::MalformedDataset { .. })));

        let bad = dir.path().join("nan.bin");
        let mut w = DatasetWriter::create(&bad, 2).unwrap();
        w.push(&[1.0f32, f32::NAN]).unwrap();
        w.finish().unwrap();
        assert!(matches!(read_dataset(&bad, 2), Err(Error::MalformedDataset { .. })));
    }

    #[test]
    fn sax_table_is_batch_independent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let mut w = DatasetWriter::create(&path, 8).unwrap();
        for i in 0..37 {
            let s: Vec<f32> = (0..8).map(|j| ((i * 8 + j) as f32 * 0.3).sin()).collect();
            w.push(&s).unwrap();
        }
        w.finish().unwrap();
        let bp = Breakpoints::standard(8).unwrap();
        let (a, _) = build_sax_table(&path, 8, 4, bp, 1, false).unwrap();
        let (b, paa) = build_sax_table(&path, 8, 4, bp, 1000, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 37);
        assert_eq!(paa.unwrap().len(), 37 * 4);
        let table_path = dir.path().join("sax_table.bin");
        a.save(&table_path).unwrap();
        assert_eq!(SaxTable::load(&table_path, 4).unwrap(), a);
    }

    #[test]
    fn record_encoding() {
        let layout = RecordLayout { n: 3, w: 2 };
        let mut buf = Vec::new();
        layout.encode(&mut buf, &[1.5, -2.0, 0.25], &[7, 200], 123_456_789_012);
        layout.encode(&mut buf, &[0.0, 0.0, 1.0], &[0, 1], 5);
        assert_eq!(buf.len(), 2 * layout.size());
        assert_eq!(layout.count(&buf), 2);
        let r = layout.record(&buf, 0);
        assert_eq!(r.values_f32(), vec![1.5, -2.0, 0.25]);
        assert_eq!(r.sax(), &[7, 200]);
        assert_eq!(r.ordinal(), 123_456_789_012);
        let mut out = [0.0f64; 3];
        layout.record(&buf, 1).values_into(&mut out);
        assert_eq!(out, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn deletion_bits_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut bits = DeletionBits::new(70);
        bits.set(3, true);
        bits.set(69, true);
        bits.push(true);
        assert_eq!(bits.len(), 71);
        assert_eq!(bits.count_deleted(), 3);
        assert_eq!(bits.first_deleted(), Some(3));
        let path = dir.path().join("x.del");
        bits.save(&path).unwrap();
        assert_eq!(fs::read(&path).unwrap().len(), 8 + 9);
        assert_eq!(DeletionBits::load(&path).unwrap(), bits);
        bits.set(3, false);
        assert!(!bits.get(3));
        assert!(!bits.get(500));
    }
}
