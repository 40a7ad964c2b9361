//! Slice-stack sources: a directory of PNG/PGM slices named by zero-padded
//! z index plus a `meta.txt` with `key=value` lines.
//!
//! ```text
//! dims = 256,256,120
//! spacing = 0.5,0.5,2.0
//! channels = 1
//! block_size = 64
//! bits = 8            # optional, defaults to 8
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::container::{import_volume_with, ImportOptions, ImportReport};
use crate::error::{Error, Result};
use crate::volume::{Volume, VolumeMeta};

pub const META_FILE: &str = "meta.txt";

#[derive(Clone, Debug)]
pub struct SliceStack {
    pub dir: PathBuf,
    pub meta: VolumeMeta,
    /// Slice paths ordered by z index.
    pub slices: Vec<PathBuf>,
}

fn parse_triple<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<[T; 3]> {
    let parts: Vec<&str> = value.split([',', 'x', ' ']).filter(|s| !s.is_empty()).collect();
    let bad = || Error::Parse {
        kind: "meta.txt",
        line,
        message: format!("{key} expects three numbers, got {value:?}"),
    };
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(p.trim().parse::<T>().map_err(|_| bad())?);
    }
    out.try_into().map_err(|_| bad())
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Parse {
        kind: "meta.txt",
        line,
        message: format!("{key}: cannot parse {value:?}"),
    })
}

pub fn parse_meta_text(text: &str) -> Result<VolumeMeta> {
    let mut dims = None;
    let mut spacing = [1.0; 3];
    let mut channels = 1u8;
    let mut block_size = 64u32;
    let mut bits = 8u8;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            kind: "meta.txt",
            line: n + 1,
            message: format!("expected key=value, got {line:?}"),
        })?;
        let key = key.trim();
        match key {
            "dims" => dims = Some(parse_triple::<u32>(key, value, n + 1)?),
            "spacing" => spacing = parse_triple::<f64>(key, value, n + 1)?,
            "channels" => channels = parse_scalar(key, value, n + 1)?,
            "block_size" => block_size = parse_scalar(key, value, n + 1)?,
            "bits" => bits = parse_scalar(key, value, n + 1)?,
            other => {
                return Err(Error::Parse {
                    kind: "meta.txt",
                    line: n + 1,
                    message: format!("unknown key {other:?}"),
                })
            }
        }
    }
    let dims = dims.ok_or_else(|| Error::InvalidMeta("meta.txt is missing `dims`".into()))?;
    VolumeMeta::new(dims, channels, bits, spacing, block_size)
}

fn slice_index(path: &Path) -> Option<u32> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    if !matches!(ext.as_str(), "png" | "pgm" | "ppm" | "pnm") {
        return None;
    }
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

impl SliceStack {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let meta_path = dir.join(META_FILE);
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::at_path(&meta_path, e))?;
        let meta = parse_meta_text(&text)?;

        let mut indexed: HashMap<u32, PathBuf> = HashMap::new();
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::at_path(&dir, e))? {
            let path = entry?.path();
            if let Some(z) = slice_index(&path) {
                if let Some(prev) = indexed.insert(z, path.clone()) {
                    return Err(Error::DimensionMismatch(format!(
                        "two slices for z={z}: {} and {}",
                        prev.display(),
                        path.display()
                    )));
                }
            }
        }
        let depth = meta.dims[2];
        if indexed.len() != depth as usize {
            return Err(Error::DimensionMismatch(format!(
                "meta.txt declares {depth} slices, found {} in {}",
                indexed.len(),
                dir.display()
            )));
        }
        let slices = (0..depth)
            .map(|z| {
                indexed
                    .remove(&z)
                    .ok_or_else(|| Error::DimensionMismatch(format!("slice z={z} missing")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SliceStack { dir, meta, slices })
    }

    /// Decodes every slice into one level-0 volume.
    pub fn load(&self) -> Result<Volume> {
        let meta = &self.meta;
        let [w, h, _] = meta.dims;
        let mut volume = Volume::for_meta(meta);
        let slice_bytes = (w * h) as usize * meta.voxel_bytes();
        for (z, path) in self.slices.iter().enumerate() {
            let img = image::open(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
            if img.width() != w || img.height() != h {
                return Err(Error::DimensionMismatch(format!(
                    "{} is {}x{}, expected {w}x{h}",
                    path.display(),
                    img.width(),
                    img.height()
                )));
            }
            let bytes = slice_bytes_for(&img, meta).map_err(|m| {
                Error::DimensionMismatch(format!("{}: {m}", path.display()))
            })?;
            volume.data[z * slice_bytes..(z + 1) * slice_bytes].copy_from_slice(&bytes);
        }
        Ok(volume)
    }
}

fn slice_bytes_for(img: &DynamicImage, meta: &VolumeMeta) -> std::result::Result<Vec<u8>, String> {
    match (meta.channels, meta.bits_per_channel) {
        (1, 8) => Ok(img.to_luma8().into_raw()),
        (3, 8) => Ok(img.to_rgb8().into_raw()),
        (1, 16) => Ok(img.to_luma16().into_raw().iter().flat_map(|v| v.to_le_bytes()).collect()),
        (3, 16) => Ok(img.to_rgb16().into_raw().iter().flat_map(|v| v.to_le_bytes()).collect()),
        (c, b) => Err(format!("slice images cannot carry {c} channels at {b} bits")),
    }
}

/// Reads a slice stack and imports it into a container at `out_path`.
pub fn import_stack(source: &SliceStack, out_path: &Path, opts: &ImportOptions<'_>) -> Result<ImportReport> {
    let volume = source.load()?;
    import_volume_with(&volume, &source.meta, out_path, opts)
}

/// Writes `volume` as a PNG slice stack (1 or 3 channels) with `meta.txt`.
pub fn write_stack(volume: &Volume, meta: &VolumeMeta, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::at_path(dir, e))?;
    let [w, h, d] = meta.dims;
    let slice_bytes = (w * h) as usize * meta.voxel_bytes();
    for z in 0..d as usize {
        let bytes = &volume.data[z * slice_bytes..(z + 1) * slice_bytes];
        let path = dir.join(format!("slice_{z:05}.png"));
        let img = match (meta.channels, meta.bits_per_channel) {
            (1, 8) => DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes.to_vec()).unwrap()),
            (3, 8) => DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, bytes.to_vec()).unwrap()),
            (1, 16) => DynamicImage::ImageLuma16(
                ImageBuffer::<Luma<u16>, _>::from_raw(w, h, le_u16(bytes)).unwrap(),
            ),
            (3, 16) => DynamicImage::ImageRgb16(
                ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, le_u16(bytes)).unwrap(),
            ),
            (c, b) => {
                return Err(Error::DimensionMismatch(format!(
                    "cannot write {c}-channel {b}-bit slices"
                )))
            }
        };
        img.save(&path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    }
    let [sx, sy, sz] = meta.voxel_spacing;
    let text = format!(
        "dims = {w},{h},{d}\nspacing = {sx},{sy},{sz}\nchannels = {}\nblock_size = {}\nbits = {}\n",
        meta.channels, meta.block_size, meta.bits_per_channel
    );
    let meta_path = dir.join(META_FILE);
    std::fs::write(&meta_path, text).map_err(|e| Error::at_path(&meta_path, e))?;
    Ok(())
}

fn le_u16(bytes: &[u8]) -> Vec<u16> {
    bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect()
}
