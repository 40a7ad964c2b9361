//! Volumetric movies: a sequence of full-resolution frames stored as level-0
//! chunks in a version-2 container, where each chunk header carries its
//! frame id.

use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::container::{
    encode_chunk, finish, open_append, ChunkId, ContainerHandle, ImportOptions, Layout, VERSION_MOVIE,
};
use crate::error::{Error, Result};
use crate::volume::{Block, BlockKey, Volume, VolumeMeta};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AppendReport {
    /// Index of the frame this call worked on.
    pub frame: u32,
    /// Chunks of that frame already present from an interrupted append.
    pub chunks_existing: usize,
    pub chunks_written: usize,
    /// The frame is complete and the footer has been rewritten.
    pub finished: bool,
}

/// Appends `volume` as the next frame, creating the movie if needed. If the
/// previous append was interrupted, the partial frame is completed from
/// `volume` instead.
pub fn append_frame(path: &Path, meta: &VolumeMeta, volume: &Volume) -> Result<AppendReport> {
    append_frame_with(path, meta, volume, &ImportOptions::default())
}

pub fn append_frame_with(path: &Path, meta: &VolumeMeta, volume: &Volume, opts: &ImportOptions<'_>) -> Result<AppendReport> {
    if !volume.matches(meta) {
        return Err(Error::DimensionMismatch(format!(
            "frame is {:?} x{} ch @{} bit, movie has {:?} x{} ch @{} bit",
            volume.dims, volume.channels, volume.bits_per_channel, meta.dims, meta.channels, meta.bits_per_channel
        )));
    }
    let layout = Layout::new(VERSION_MOVIE)?;
    let (mut file, report) = open_append(path, meta, layout)?;
    let order: Vec<BlockKey> = meta.level_blocks(0).collect();
    let per_frame = order.len();
    if report.finished {
        if opts.stop_after == Some(0) {
            // Stopping before the first chunk must leave a finished movie
            // intact, or it would read back as a torn footer.
            return Ok(AppendReport {
                frame: (report.index.len() / per_frame) as u32,
                chunks_existing: 0,
                chunks_written: 0,
                finished: false,
            });
        }
        // Drop the footer; it is rewritten after the new frame.
        file.set_len(report.chunk_end)?;
    }
    let existing = report.index.len();
    // All chunks present but no footer: the interrupted frame only needs
    // its footer.
    let torn_footer = !report.finished && existing > 0 && existing % per_frame == 0;
    let (frame, done_in_frame) = if torn_footer {
        ((existing / per_frame - 1) as u32, per_frame)
    } else {
        ((existing / per_frame) as u32, existing % per_frame)
    };

    let mut index = report.index;
    let mut pos = report.chunk_end;
    file.seek(SeekFrom::Start(pos))?;
    let mut writer = BufWriter::with_capacity(1 << 20, &mut file);
    let mut written = 0;
    for key in &order[done_in_frame..] {
        if opts.stop_after == Some(written) {
            writer.flush()?;
            return Ok(AppendReport {
                frame,
                chunks_existing: done_in_frame,
                chunks_written: written,
                finished: false,
            });
        }
        let id = ChunkId { frame, key: *key };
        let block = volume.extract_block(*key, meta.block_size);
        let record = encode_chunk(id, &block.data, layout);
        writer.write_all(&record)?;
        index.push(id, pos)?;
        pos += record.len() as u64;
        written += 1;
        if let Some(progress) = opts.progress {
            progress(done_in_frame + written, per_frame);
        }
    }
    finish(&mut writer, &index, layout, pos)?;
    Ok(AppendReport {
        frame,
        chunks_existing: done_in_frame,
        chunks_written: written,
        finished: true,
    })
}

/// A finished movie opened for decoding.
#[derive(Debug)]
pub struct Movie {
    handle: ContainerHandle,
    frames: u32,
}

impl Movie {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let handle = ContainerHandle::open(path)?;
        if handle.version() != VERSION_MOVIE {
            return Err(Error::UnsupportedVersion(handle.version()));
        }
        let per_frame = handle.meta().level_blocks(0).count();
        if handle.index().len() % per_frame != 0 {
            return Err(Error::Corrupt("movie footer lists a partial frame".into()));
        }
        let frames = (handle.index().len() / per_frame) as u32;
        Ok(Movie { handle, frames })
    }

    pub fn meta(&self) -> &VolumeMeta {
        self.handle.meta()
    }

    pub fn frame_count(&self) -> u32 {
        self.frames
    }

    pub fn frame_bytes(&self) -> usize {
        let m = self.meta();
        m.voxel_count() as usize * m.voxel_bytes()
    }

    /// Frame `index` as one contiguous volume.
    pub fn decode_frame(&self, index: usize) -> Result<Volume> {
        let mut out = Volume::for_meta(self.meta());
        self.decode_frame_into(index, &mut out)?;
        Ok(out)
    }

    /// Decodes into an existing volume of the movie's shape.
    pub fn decode_frame_into(&self, index: usize, out: &mut Volume) -> Result<()> {
        if index >= self.frames as usize {
            return Err(Error::FrameOutOfRange {
                index,
                count: self.frames as usize,
            });
        }
        let meta = self.meta();
        let frame = index as u32;
        let keys: Vec<BlockKey> = meta.level_blocks(0).collect();
        let blocks: Vec<Block> = keys
            .par_iter()
            .map(|key| self.handle.read_chunk_id(ChunkId { frame, key: *key }))
            .collect::<Result<_>>()?;
        for b in &blocks {
            out.insert_block(b);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlaybackStats {
    pub frames_decoded: u64,
    pub wall_seconds: f64,
    pub frames_per_second: f64,
    pub decompressed_bytes_per_second: f64,
    pub frame_voxels: u64,
    pub workers: usize,
}

/// Decodes frames in a loop for at least `seconds` (and at least one frame)
/// with `workers` threads, each pulling the next frame in sequence.
pub fn bench_playback(movie: &Movie, seconds: f64, workers: usize) -> Result<PlaybackStats> {
    if movie.frame_count() == 0 {
        return Err(Error::FrameOutOfRange { index: 0, count: 0 });
    }
    let workers = workers.max(1);
    let duration = Duration::from_secs_f64(seconds.max(0.0));
    let next = Arc::new(std::sync::atomic::AtomicU64::new(0));
    let start = Instant::now();
    let results: Vec<Result<()>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                let next = next.clone();
                s.spawn(move || -> Result<()> {
                    let mut buf = Volume::for_meta(movie.meta());
                    loop {
                        let n = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if n > 0 && start.elapsed() >= duration {
                            next.fetch_sub(1, std::sync::atomic::Ordering::Relaxed);
                            return Ok(());
                        }
                        movie.decode_frame_into((n % movie.frame_count() as u64) as usize, &mut buf)?;
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("decode worker panicked")).collect()
    });
    let wall = start.elapsed().as_secs_f64();
    for r in results {
        r?;
    }
    let frames = next.load(std::sync::atomic::Ordering::Relaxed);
    Ok(PlaybackStats {
        frames_decoded: frames,
        wall_seconds: wall,
        frames_per_second: frames as f64 / wall,
        decompressed_bytes_per_second: frames as f64 * movie.frame_bytes() as f64 / wall,
        frame_voxels: movie.meta().voxel_count(),
        workers,
    })
}
