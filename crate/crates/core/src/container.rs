//! The on-disk volume container.
//!
//! ```text
//! "SYGC" | version u16 | VolumeMeta | chunk record ... | footer | footer_offset u64 | "SYGX"
//!
//! VolumeMeta   dims 3×u32, channels u8, bits u8, spacing 3×f64, block_size u32, level_count u8
//! chunk record [frame u32 (v2 only)] level u8, i/j/k u32, compressed u32, uncompressed u32,
//!              crc32 u32 | LZ4 block payload | complete flag 0xA5
//! footer entry [frame u32 (v2 only)] level u8, i/j/k u32, offset u64
//! ```
//!
//! All integers are little endian. Chunks are appended in a fixed order and
//! never rewritten, so an interrupted writer can always resume from the end
//! of the last complete chunk. The footer is written last.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::volume::{build_pyramid, Block, BlockKey, Volume, VolumeMeta};

pub const MAGIC: &[u8; 4] = b"SYGC";
pub const FOOTER_MAGIC: &[u8; 4] = b"SYGX";
pub const VERSION_VOLUME: u16 = 1;
pub const VERSION_MOVIE: u16 = 2;
pub const COMPLETE_FLAG: u8 = 0xA5;

const META_LEN: usize = 12 + 1 + 1 + 24 + 4 + 1;
pub const HEADER_LEN: u64 = (4 + 2 + META_LEN) as u64;
const TRAILER_LEN: u64 = 12;

/// Fixed-size encodings that depend on the container version.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Layout {
    pub version: u16,
}

impl Layout {
    pub fn new(version: u16) -> Result<Self> {
        match version {
            VERSION_VOLUME | VERSION_MOVIE => Ok(Layout { version }),
            v => Err(Error::UnsupportedVersion(v)),
        }
    }

    fn has_frames(self) -> bool {
        self.version == VERSION_MOVIE
    }

    fn chunk_header_len(self) -> u64 {
        25 + if self.has_frames() { 4 } else { 0 }
    }

    fn footer_entry_len(self) -> u64 {
        21 + if self.has_frames() { 4 } else { 0 }
    }
}

/// A chunk's identity: the block key plus a frame id (always 0 for plain
/// volume containers).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChunkId {
    pub frame: u32,
    pub key: BlockKey,
}

impl ChunkId {
    pub fn volume(key: BlockKey) -> Self {
        ChunkId { frame: 0, key }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChunkHeader {
    pub id: ChunkId,
    pub compressed_size: u32,
    pub uncompressed_size: u32,
    pub checksum: u32,
}

/// Offsets of every complete chunk, in append order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChunkIndex {
    entries: Vec<(ChunkId, u64)>,
    lookup: HashMap<ChunkId, usize>,
}

impl ChunkIndex {
    pub(crate) fn push(&mut self, id: ChunkId, offset: u64) -> Result<()> {
        if let Some(&(_, last)) = self.entries.last() {
            if offset <= last {
                return Err(Error::Corrupt(format!(
                    "chunk offsets not increasing ({offset} after {last})"
                )));
            }
        }
        if self.lookup.insert(id, self.entries.len()).is_some() {
            return Err(Error::Corrupt(format!("duplicate chunk {}", id.key)));
        }
        self.entries.push((id, offset));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn offset(&self, id: &ChunkId) -> Option<u64> {
        self.lookup.get(id).map(|&i| self.entries[i].1)
    }

    pub fn entries(&self) -> &[(ChunkId, u64)] {
        &self.entries
    }

    pub fn frame_count(&self) -> u32 {
        self.entries.iter().map(|(id, _)| id.frame + 1).max().unwrap_or(0)
    }
}

fn encode_meta(meta: &VolumeMeta, out: &mut Vec<u8>) {
    for d in meta.dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.push(meta.channels);
    out.push(meta.bits_per_channel);
    for s in meta.voxel_spacing {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out.extend_from_slice(&meta.block_size.to_le_bytes());
    out.push(meta.level_count());
}

/// Cursor over a little-endian byte slice.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out: [u8; N] = self.buf[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        out
    }

    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }

    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
}

fn decode_meta(buf: &[u8]) -> Result<VolumeMeta> {
    let mut r = Reader::new(buf);
    let dims = [r.u32(), r.u32(), r.u32()];
    let channels = r.u8();
    let bits = r.u8();
    let spacing = [r.f64(), r.f64(), r.f64()];
    let block_size = r.u32();
    let level_count = r.u8();
    let meta = VolumeMeta::new(dims, channels, bits, spacing, block_size)?;
    if meta.level_count() != level_count {
        return Err(Error::Corrupt(format!(
            "stored level count {level_count} disagrees with dims (expected {})",
            meta.level_count()
        )));
    }
    Ok(meta)
}

pub(crate) fn encode_file_header(meta: &VolumeMeta, layout: Layout) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&layout.version.to_le_bytes());
    encode_meta(meta, &mut out);
    out
}

fn encode_key(id: &ChunkId, layout: Layout, out: &mut Vec<u8>) {
    if layout.has_frames() {
        out.extend_from_slice(&id.frame.to_le_bytes());
    }
    out.push(id.key.level);
    for c in id.key.coords {
        out.extend_from_slice(&c.to_le_bytes());
    }
}

fn decode_key(r: &mut Reader<'_>, layout: Layout) -> ChunkId {
    let frame = if layout.has_frames() { r.u32() } else { 0 };
    let level = r.u8();
    let coords = [r.u32(), r.u32(), r.u32()];
    ChunkId {
        frame,
        key: BlockKey::new(level, coords),
    }
}

/// Serializes one complete chunk record (header, payload, flag).
pub(crate) fn encode_chunk(id: ChunkId, raw: &[u8], layout: Layout) -> Vec<u8> {
    let payload = lz4_flex::block::compress(raw);
    let checksum = crc32fast::hash(&payload);
    let mut out = Vec::with_capacity(payload.len() + 32);
    encode_key(&id, layout, &mut out);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&(raw.len() as u32).to_le_bytes());
    out.extend_from_slice(&checksum.to_le_bytes());
    out.extend_from_slice(&payload);
    out.push(COMPLETE_FLAG);
    out
}

fn decode_chunk_header(buf: &[u8], layout: Layout) -> ChunkHeader {
    let mut r = Reader::new(buf);
    let id = decode_key(&mut r, layout);
    ChunkHeader {
        id,
        compressed_size: r.u32(),
        uncompressed_size: r.u32(),
        checksum: r.u32(),
    }
}

pub(crate) fn encode_footer(index: &ChunkIndex, layout: Layout, footer_offset: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(index.len() * layout.footer_entry_len() as usize + 12);
    for (id, offset) in index.entries() {
        encode_key(id, layout, &mut out);
        out.extend_from_slice(&offset.to_le_bytes());
    }
    out.extend_from_slice(&footer_offset.to_le_bytes());
    out.extend_from_slice(FOOTER_MAGIC);
    out
}

/// The chunk a container of this layout expects at append position `n`.
pub(crate) fn expected_chunk(meta: &VolumeMeta, layout: Layout, order: &[BlockKey], n: usize) -> Option<ChunkId> {
    if layout.has_frames() {
        let per_frame = meta.level_blocks(0).count();
        Some(ChunkId {
            frame: (n / per_frame) as u32,
            key: order[n % per_frame],
        })
    } else {
        order.get(n).copied().map(ChunkId::volume)
    }
}

pub(crate) fn append_order(meta: &VolumeMeta, layout: Layout) -> Vec<BlockKey> {
    if layout.has_frames() {
        meta.level_blocks(0).collect()
    } else {
        meta.blocks_in_order()
    }
}

/// What [`resume_scan`] found in a (possibly partial) container file.
#[derive(Clone, Debug)]
pub struct ScanReport {
    pub meta: VolumeMeta,
    pub version: u16,
    pub index: ChunkIndex,
    /// Offset just past the last complete chunk, or the end of file for a
    /// finished container.
    pub resume_point: u64,
    /// End of the chunk region (equals `resume_point` unless finished).
    pub chunk_end: u64,
    /// A valid footer matching the chunk records is present.
    pub finished: bool,
}

fn read_file_header(file: &mut File) -> Result<(VolumeMeta, Layout)> {
    let mut head = [0u8; HEADER_LEN as usize];
    file.seek(SeekFrom::Start(0))?;
    let got = read_up_to(file, &mut head)?;
    if got < 4 || &head[..4] != MAGIC {
        return Err(Error::BadMagic { expected: "SYGC" });
    }
    if got < HEADER_LEN as usize {
        return Err(Error::Corrupt("file header truncated".into()));
    }
    let layout = Layout::new(u16::from_le_bytes([head[4], head[5]]))?;
    let meta = decode_meta(&head[6..])?;
    Ok((meta, layout))
}

fn read_up_to(file: &mut File, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match file.read(&mut buf[got..])? {
            0 => break,
            n => got += n,
        }
    }
    Ok(got)
}

/// Scans the chunk records of `path` and truncates any trailing partial
/// chunk. A checksum failure on a flagged chunk is reported, never skipped.
pub fn resume_scan(path: &Path) -> Result<ScanReport> {
    let mut file = OpenOptions::new()
        .read(true)
        .write(true)
        .open(path)
        .map_err(|e| Error::at_path(path, e))?;
    let report = scan_file(&mut file)?;
    if !report.finished && file.metadata()?.len() != report.resume_point {
        file.set_len(report.resume_point)?;
    }
    Ok(report)
}

fn scan_file(file: &mut File) -> Result<ScanReport> {
    let (meta, layout) = read_file_header(file)?;
    let file_len = file.metadata()?.len();

    // A footer, if any, tells us where the chunk region stops.
    let mut footer: Option<u64> = None;
    if file_len >= HEADER_LEN + TRAILER_LEN {
        let mut tail = [0u8; TRAILER_LEN as usize];
        file.seek(SeekFrom::Start(file_len - TRAILER_LEN))?;
        file.read_exact(&mut tail)?;
        if &tail[8..] == FOOTER_MAGIC {
            let offset = u64::from_le_bytes(tail[..8].try_into().unwrap());
            if offset >= HEADER_LEN
                && offset <= file_len - TRAILER_LEN
                && (file_len - TRAILER_LEN - offset).is_multiple_of(layout.footer_entry_len())
            {
                footer = Some(offset);
            }
        }
    }
    let region_end = footer.unwrap_or(file_len);

    let order = append_order(&meta, layout);
    let header_len = layout.chunk_header_len();
    let mut index = ChunkIndex::default();
    let mut pos = HEADER_LEN;
    let mut head = vec![0u8; header_len as usize];
    let mut payload = Vec::new();
    file.seek(SeekFrom::Start(pos))?;
    while let Some(expected) = expected_chunk(&meta, layout, &order, index.len()) {
        if pos + header_len > region_end {
            break;
        }
        file.seek(SeekFrom::Start(pos))?;
        file.read_exact(&mut head)?;
        let header = decode_chunk_header(&head, layout);
        if header.id != expected || header.uncompressed_size as usize != meta.block_bytes() {
            // Not a chunk record: a torn footer or garbage after the last chunk.
            break;
        }
        let record_end = pos + header_len + header.compressed_size as u64 + 1;
        if record_end > region_end {
            break;
        }
        payload.resize(header.compressed_size as usize + 1, 0);
        file.read_exact(&mut payload)?;
        if payload[header.compressed_size as usize] != COMPLETE_FLAG {
            break;
        }
        if crc32fast::hash(&payload[..header.compressed_size as usize]) != header.checksum {
            return Err(Error::ChecksumMismatch {
                key: header.id.key,
                offset: pos,
            });
        }
        index.push(header.id, pos)?;
        pos = record_end;
    }

    let finished = match footer {
        Some(offset) if pos == offset => {
            let stored = read_footer(file, layout, offset, file_len)?;
            if stored != index {
                return Err(Error::Corrupt("footer index disagrees with chunk records".into()));
            }
            true
        }
        _ => false,
    };
    Ok(ScanReport {
        meta,
        version: layout.version,
        index,
        resume_point: if finished { file_len } else { pos },
        chunk_end: pos,
        finished,
    })
}

fn read_footer(file: &mut File, layout: Layout, offset: u64, file_len: u64) -> Result<ChunkIndex> {
    let len = (file_len - TRAILER_LEN - offset) as usize;
    let mut buf = vec![0u8; len];
    file.seek(SeekFrom::Start(offset))?;
    file.read_exact(&mut buf)?;
    let mut r = Reader::new(&buf);
    let mut index = ChunkIndex::default();
    while r.pos < buf.len() {
        let id = decode_key(&mut r, layout);
        let chunk_offset = r.u64();
        index.push(id, chunk_offset)?;
    }
    Ok(index)
}

#[cfg(unix)]
fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)
}

#[cfg(windows)]
fn read_exact_at(file: &File, mut buf: &mut [u8], mut offset: u64) -> std::io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        match file.seek_read(buf, offset)? {
            0 => return Err(std::io::ErrorKind::UnexpectedEof.into()),
            n => {
                buf = &mut buf[n..];
                offset += n as u64;
            }
        }
    }
    Ok(())
}

/// Read-only view of a finished container. `read_chunk` takes `&self` and
/// uses positional reads, so one handle can be shared across threads.
#[derive(Debug)]
pub struct ContainerHandle {
    path: PathBuf,
    file: File,
    meta: VolumeMeta,
    layout: Layout,
    index: ChunkIndex,
}

impl ContainerHandle {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut file = File::open(path).map_err(|e| Error::at_path(path, e))?;
        let (meta, layout) = read_file_header(&mut file)?;
        let file_len = file.metadata()?.len();
        let mut tail = [0u8; TRAILER_LEN as usize];
        if file_len < HEADER_LEN + TRAILER_LEN {
            return Err(Error::Corrupt("container has no footer (unfinished import?)".into()));
        }
        file.seek(SeekFrom::Start(file_len - TRAILER_LEN))?;
        file.read_exact(&mut tail)?;
        if &tail[8..] != FOOTER_MAGIC {
            return Err(Error::Corrupt("container has no footer (unfinished import?)".into()));
        }
        let offset = u64::from_le_bytes(tail[..8].try_into().unwrap());
        if offset < HEADER_LEN
            || offset > file_len - TRAILER_LEN
            || !(file_len - TRAILER_LEN - offset).is_multiple_of(layout.footer_entry_len())
        {
            return Err(Error::Corrupt(format!("bad footer offset {offset}")));
        }
        let index = read_footer(&mut file, layout, offset, file_len)?;
        if let Some(&(_, last)) = index.entries().last() {
            if last >= offset {
                return Err(Error::Corrupt("footer points past the chunk region".into()));
            }
        }
        Ok(ContainerHandle {
            path: path.to_path_buf(),
            file,
            meta,
            layout,
            index,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn meta(&self) -> &VolumeMeta {
        &self.meta
    }

    pub fn version(&self) -> u16 {
        self.layout.version
    }

    pub fn index(&self) -> &ChunkIndex {
        &self.index
    }

    pub fn read_chunk(&self, level: u8, coords: [u32; 3]) -> Result<Block> {
        self.read_chunk_id(ChunkId::volume(BlockKey::new(level, coords)))
    }

    pub fn read_block(&self, key: BlockKey) -> Result<Block> {
        self.read_chunk_id(ChunkId::volume(key))
    }

    /// Reads, verifies and decompresses one chunk.
    pub fn read_chunk_id(&self, id: ChunkId) -> Result<Block> {
        let mut raw = vec![0u8; self.meta.block_bytes()];
        self.read_chunk_into(id, &mut raw)?;
        Ok(Block {
            key: id.key,
            block_size: self.meta.block_size,
            channels: self.meta.channels,
            bits_per_channel: self.meta.bits_per_channel,
            data: raw,
        })
    }

    /// Decompresses into a caller-provided buffer of `block_bytes()` length.
    pub fn read_chunk_into(&self, id: ChunkId, out: &mut [u8]) -> Result<()> {
        let offset = self.index.offset(&id).ok_or(Error::MissingChunk(id.key))?;
        let header_len = self.layout.chunk_header_len() as usize;
        let mut head = vec![0u8; header_len];
        read_exact_at(&self.file, &mut head, offset)?;
        let header = decode_chunk_header(&head, self.layout);
        if header.id != id {
            return Err(Error::Corrupt(format!("index points at {} but found {}", id.key, header.id.key)));
        }
        if header.uncompressed_size as usize != out.len() {
            return Err(Error::Corrupt(format!(
                "chunk {} has uncompressed size {}, expected {}",
                id.key,
                header.uncompressed_size,
                out.len()
            )));
        }
        let mut payload = vec![0u8; header.compressed_size as usize];
        read_exact_at(&self.file, &mut payload, offset + header_len as u64)?;
        if crc32fast::hash(&payload) != header.checksum {
            return Err(Error::ChecksumMismatch { key: id.key, offset });
        }
        let n = lz4_flex::block::decompress_into(&payload, out).map_err(|e| Error::Decompress {
            key: id.key,
            message: e.to_string(),
        })?;
        if n != out.len() {
            return Err(Error::Decompress {
                key: id.key,
                message: format!("decoded {n} bytes, expected {}", out.len()),
            });
        }
        Ok(())
    }
}

/// Knobs for [`import_volume_with`].
#[derive(Default)]
pub struct ImportOptions<'a> {
    /// Stop after writing this many new chunks, leaving the container
    /// unfinished (simulates an interrupted conversion).
    pub stop_after: Option<usize>,
    /// Called with (chunks written so far, total chunks).
    pub progress: Option<&'a dyn Fn(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct ImportReport {
    pub chunks_total: usize,
    /// Chunks found already complete when the import started.
    pub chunks_existing: usize,
    pub chunks_written: usize,
    pub finished: bool,
    /// The container was already finished; nothing was touched.
    pub up_to_date: bool,
}

/// Opens `path` for appending, creating it or resuming a partial file.
/// Returns the writer positioned at the resume point plus the scan state.
pub(crate) fn open_append(path: &Path, meta: &VolumeMeta, layout: Layout) -> Result<(File, ScanReport)> {
    let header = encode_file_header(meta, layout);
    let existing_len = match std::fs::metadata(path) {
        Ok(m) => m.len(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => 0,
        Err(e) => return Err(Error::at_path(path, e)),
    };

    let mut file = OpenOptions::new()
        .read(true)
        .write(true)
        .create(true)
        .truncate(false)
        .open(path)
        .map_err(|e| Error::at_path(path, e))?;

    if existing_len < HEADER_LEN {
        // Empty or torn header: only restart if what is there is a prefix of ours.
        let mut prefix = vec![0u8; existing_len as usize];
        file.read_exact(&mut prefix)?;
        if !header.starts_with(&prefix) {
            return Err(if prefix.len() >= 4 && &prefix[..4] != MAGIC {
                Error::BadMagic { expected: "SYGC" }
            } else {
                Error::DimensionMismatch("existing partial header differs from requested metadata".into())
            });
        }
        file.set_len(0)?;
        file.seek(SeekFrom::Start(0))?;
        file.write_all(&header)?;
        let report = ScanReport {
            meta: meta.clone(),
            version: layout.version,
            index: ChunkIndex::default(),
            resume_point: HEADER_LEN,
            chunk_end: HEADER_LEN,
            finished: false,
        };
        return Ok((file, report));
    }

    let report = scan_file(&mut file)?;
    if report.version != layout.version {
        return Err(Error::UnsupportedVersion(report.version));
    }
    if &report.meta != meta {
        return Err(Error::DimensionMismatch(format!(
            "existing container has {:?} x{} ch @{} bit, block {}, requested {:?} x{} ch @{} bit, block {}",
            report.meta.dims,
            report.meta.channels,
            report.meta.bits_per_channel,
            report.meta.block_size,
            meta.dims,
            meta.channels,
            meta.bits_per_channel,
            meta.block_size
        )));
    }
    if !report.finished {
        file.set_len(report.resume_point)?;
    }
    Ok((file, report))
}

pub(crate) fn finish(writer: &mut BufWriter<&mut File>, index: &ChunkIndex, layout: Layout, footer_offset: u64) -> Result<()> {
    writer.write_all(&encode_footer(index, layout, footer_offset))?;
    writer.flush()?;
    Ok(())
}

/// Imports an in-memory level-0 volume, resuming a partial container if one
/// is present. Re-running on a finished container is a no-op.
pub fn import_volume(volume: &Volume, meta: &VolumeMeta, out_path: &Path) -> Result<ImportReport> {
    import_volume_with(volume, meta, out_path, &ImportOptions::default())
}

pub fn import_volume_with(
    volume: &Volume,
    meta: &VolumeMeta,
    out_path: &Path,
    opts: &ImportOptions<'_>,
) -> Result<ImportReport> {
    if !volume.matches(meta) {
        return Err(Error::DimensionMismatch(format!(
            "source is {:?} x{} ch @{} bit, metadata says {:?} x{} ch @{} bit",
            volume.dims,
            volume.channels,
            volume.bits_per_channel,
            meta.dims,
            meta.channels,
            meta.bits_per_channel
        )));
    }
    let layout = Layout::new(VERSION_VOLUME)?;
    let order = meta.blocks_in_order();
    let (mut file, report) = open_append(out_path, meta, layout)?;
    let existing = report.index.len();
    if report.finished {
        return Ok(ImportReport {
            chunks_total: order.len(),
            chunks_existing: existing,
            chunks_written: 0,
            finished: true,
            up_to_date: true,
        });
    }

    let mut index = report.index;
    let mut pos = report.resume_point;
    file.seek(SeekFrom::Start(pos))?;
    let mut writer = BufWriter::with_capacity(1 << 20, &mut file);
    let mut written = 0;

    if existing < order.len() {
        let levels = build_pyramid(volume.clone(), meta.level_count());
        for key in &order[existing..] {
            if opts.stop_after == Some(written) {
                writer.flush()?;
                return Ok(ImportReport {
                    chunks_total: order.len(),
                    chunks_existing: existing,
                    chunks_written: written,
                    finished: false,
                    up_to_date: false,
                });
            }
            let block = levels[key.level as usize].extract_block(*key, meta.block_size);
            let record = encode_chunk(ChunkId::volume(*key), &block.data, layout);
            writer.write_all(&record)?;
            index.push(ChunkId::volume(*key), pos)?;
            pos += record.len() as u64;
            written += 1;
            if let Some(progress) = opts.progress {
                progress(existing + written, order.len());
            }
        }
    }
    finish(&mut writer, &index, layout, pos)?;
    Ok(ImportReport {
        chunks_total: order.len(),
        chunks_existing: existing,
        chunks_written: written,
        finished: true,
        up_to_date: false,
    })
}

/// Reassembles a whole pyramid level from its chunks.
pub fn read_level(handle: &ContainerHandle, level: u8) -> Result<Volume> {
    let meta = handle.meta();
    let mut out = Volume::zeroed(meta.level_dims(level), meta.channels, meta.bits_per_channel);
    for key in meta.level_blocks(level) {
        out.insert_block(&handle.read_block(key)?);
    }
    Ok(out)
}
