//! Volume metadata, dense voxel arrays, the mean-downsampled pyramid and
//! fixed-size blocks cut from it.

use std::fmt;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Aabb;

/// Identifies one block of the pyramid. Level 0 is the finest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockKey {
    pub level: u8,
    pub coords: [u32; 3],
}

impl BlockKey {
    pub const fn new(level: u8, coords: [u32; 3]) -> Self {
        BlockKey { level, coords }
    }
}

impl fmt::Display for BlockKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [i, j, k] = self.coords;
        write!(f, "L{}({},{},{})", self.level, i, j, k)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VolumeMeta {
    pub dims: [u32; 3],
    pub channels: u8,
    pub bits_per_channel: u8,
    /// Physical voxel size per axis in micrometers.
    pub voxel_spacing: [f64; 3],
    pub block_size: u32,
    level_count: u8,
}

impl VolumeMeta {
    pub fn new(
        dims: [u32; 3],
        channels: u8,
        bits_per_channel: u8,
        voxel_spacing: [f64; 3],
        block_size: u32,
    ) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidMeta(format!("dims must be nonzero, got {dims:?}")));
        }
        if !(1..=4).contains(&channels) {
            return Err(Error::InvalidMeta(format!("channels must be 1..=4, got {channels}")));
        }
        if bits_per_channel != 8 && bits_per_channel != 16 {
            return Err(Error::InvalidMeta(format!(
                "bits_per_channel must be 8 or 16, got {bits_per_channel}"
            )));
        }
        if voxel_spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidMeta(format!(
                "voxel spacing must be positive, got {voxel_spacing:?}"
            )));
        }
        if block_size < 8 || !block_size.is_power_of_two() {
            return Err(Error::InvalidMeta(format!(
                "block_size must be a power of two >= 8, got {block_size}"
            )));
        }
        let max_dim = *dims.iter().max().unwrap();
        let mut level_count = 1u8;
        let mut covered = block_size as u64;
        while covered < max_dim as u64 {
            covered *= 2;
            level_count += 1;
        }
        Ok(VolumeMeta {
            dims,
            channels,
            bits_per_channel,
            voxel_spacing,
            block_size,
            level_count,
        })
    }

    pub fn level_count(&self) -> u8 {
        self.level_count
    }

    pub fn top_level(&self) -> u8 {
        self.level_count - 1
    }

    pub fn bytes_per_channel(&self) -> usize {
        self.bits_per_channel as usize / 8
    }

    pub fn voxel_bytes(&self) -> usize {
        self.channels as usize * self.bytes_per_channel()
    }

    /// Uncompressed size of every chunk (boundary blocks are zero padded).
    pub fn block_bytes(&self) -> usize {
        (self.block_size as usize).pow(3) * self.voxel_bytes()
    }

    pub fn voxel_count(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }

    pub fn level_dims(&self, level: u8) -> [u32; 3] {
        self.dims.map(|d| d.div_ceil(1 << level))
    }

    pub fn block_grid(&self, level: u8) -> [u32; 3] {
        self.level_dims(level).map(|d| d.div_ceil(self.block_size))
    }

    pub fn level_spacing(&self, level: u8) -> Vector3<f64> {
        let s = (1u64 << level) as f64;
        Vector3::new(
            self.voxel_spacing[0] * s,
            self.voxel_spacing[1] * s,
            self.voxel_spacing[2] * s,
        )
    }

    pub fn volume_aabb(&self) -> Aabb {
        Aabb::new(
            Point3::origin(),
            Point3::new(
                self.dims[0] as f64 * self.voxel_spacing[0],
                self.dims[1] as f64 * self.voxel_spacing[1],
                self.dims[2] as f64 * self.voxel_spacing[2],
            ),
        )
    }

    pub fn contains_key(&self, key: &BlockKey) -> bool {
        key.level < self.level_count
            && key
                .coords
                .iter()
                .zip(self.block_grid(key.level))
                .all(|(&c, g)| c < g)
    }

    /// World box of a block, clipped to the volume. Adjacent blocks share
    /// bit-identical face coordinates.
    pub fn block_aabb(&self, key: &BlockKey) -> Aabb {
        let span = self.block_size as u64 * (1u64 << key.level);
        let mut min = Point3::origin();
        let mut max = Point3::origin();
        for a in 0..3 {
            let lo = key.coords[a] as u64 * span;
            let hi = ((key.coords[a] as u64 + 1) * span).min(self.dims[a] as u64);
            min[a] = lo as f64 * self.voxel_spacing[a];
            max[a] = hi as f64 * self.voxel_spacing[a];
        }
        Aabb::new(min, max)
    }

    /// All block keys in container append order: level 0 first, blocks in
    /// z-major order (x fastest), then each coarser level.
    pub fn blocks_in_order(&self) -> Vec<BlockKey> {
        let mut keys = Vec::new();
        for level in 0..self.level_count {
            keys.extend(self.level_blocks(level));
        }
        keys
    }

    pub fn level_blocks(&self, level: u8) -> impl Iterator<Item = BlockKey> {
        let [gx, gy, gz] = self.block_grid(level);
        (0..gz).flat_map(move |k| {
            (0..gy).flat_map(move |j| (0..gx).map(move |i| BlockKey::new(level, [i, j, k])))
        })
    }

    pub fn total_blocks(&self) -> usize {
        (0..self.level_count)
            .map(|l| self.block_grid(l).iter().map(|&g| g as usize).product::<usize>())
            .sum()
    }
}

/// Dense voxel array, x fastest, then y, then z, channels interleaved.
/// 16-bit samples are stored little endian.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Volume {
    pub dims: [u32; 3],
    pub channels: u8,
    pub bits_per_channel: u8,
    pub data: Vec<u8>,
}

impl Volume {
    pub fn zeroed(dims: [u32; 3], channels: u8, bits_per_channel: u8) -> Self {
        let len = dims.iter().map(|&d| d as usize).product::<usize>()
            * channels as usize
            * (bits_per_channel as usize / 8);
        Volume {
            dims,
            channels,
            bits_per_channel,
            data: vec![0; len],
        }
    }

    pub fn for_meta(meta: &VolumeMeta) -> Self {
        Self::zeroed(meta.dims, meta.channels, meta.bits_per_channel)
    }

    /// Builds an 8-bit volume from a generator evaluated at every voxel.
    pub fn from_fn_u8(dims: [u32; 3], channels: u8, mut f: impl FnMut(u32, u32, u32, u8) -> u8) -> Self {
        let mut v = Self::zeroed(dims, channels, 8);
        let mut idx = 0;
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    for c in 0..channels {
                        v.data[idx] = f(x, y, z, c);
                        idx += 1;
                    }
                }
            }
        }
        v
    }

    pub fn bytes_per_channel(&self) -> usize {
        self.bits_per_channel as usize / 8
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    pub fn matches(&self, meta: &VolumeMeta) -> bool {
        self.dims == meta.dims
            && self.channels == meta.channels
            && self.bits_per_channel == meta.bits_per_channel
            && self.data.len() == self.voxel_count() * meta.voxel_bytes()
    }

    #[inline]
    fn sample_index(&self, x: u32, y: u32, z: u32, c: u8) -> usize {
        let [dx, dy, _] = self.dims;
        ((z as usize * dy as usize + y as usize) * dx as usize + x as usize) * self.channels as usize
            + c as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, z: u32, c: u8) -> u16 {
        let i = self.sample_index(x, y, z, c);
        read_sample(&self.data, i, self.bytes_per_channel())
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, z: u32, c: u8, value: u16) {
        let i = self.sample_index(x, y, z, c);
        let bpc = self.bytes_per_channel();
        write_sample(&mut self.data, i, bpc, value);
    }

    /// 2×2×2 mean with round-half-up. Children beyond the edge count as zero.
    pub fn downsample(&self) -> Volume {
        let out_dims = self.dims.map(|d| d.div_ceil(2));
        let mut out = Volume::zeroed(out_dims, self.channels, self.bits_per_channel);
        let [dx, dy, dz] = self.dims;
        for z in 0..out_dims[2] {
            for y in 0..out_dims[1] {
                for x in 0..out_dims[0] {
                    for c in 0..self.channels {
                        let mut sum = 0u32;
                        for (ox, oy, oz) in CHILD_OFFSETS {
                            let (sx, sy, sz) = (2 * x + ox, 2 * y + oy, 2 * z + oz);
                            if sx < dx && sy < dy && sz < dz {
                                sum += self.get(sx, sy, sz, c) as u32;
                            }
                        }
                        out.set(x, y, z, c, ((sum + 4) / 8) as u16);
                    }
                }
            }
        }
        out
    }

    /// Cuts the zero-padded block at `coords` assuming this volume is the
    /// pyramid level the key refers to.
    pub fn extract_block(&self, key: BlockKey, block_size: u32) -> Block {
        let bpc = self.bytes_per_channel();
        let voxel_bytes = self.channels as usize * bpc;
        let bs = block_size as usize;
        let mut data = vec![0u8; bs * bs * bs * voxel_bytes];
        let origin = key.coords.map(|c| c * block_size);
        let valid = [0, 1, 2].map(|a| self.dims[a].saturating_sub(origin[a]).min(block_size) as usize);
        let row_bytes = valid[0] * voxel_bytes;
        for z in 0..valid[2] {
            for y in 0..valid[1] {
                let src = self.sample_index(origin[0], origin[1] + y as u32, origin[2] + z as u32, 0) * bpc;
                let dst = (z * bs + y) * bs * voxel_bytes;
                data[dst..dst + row_bytes].copy_from_slice(&self.data[src..src + row_bytes]);
            }
        }
        Block {
            key,
            block_size,
            channels: self.channels,
            bits_per_channel: self.bits_per_channel,
            data,
        }
    }

    /// Copies the valid region of a block back into this (level) volume.
    pub fn insert_block(&mut self, block: &Block) {
        let bpc = self.bytes_per_channel();
        let voxel_bytes = self.channels as usize * bpc;
        let bs = block.block_size as usize;
        let origin = block.key.coords.map(|c| c * block.block_size);
        let valid =
            [0, 1, 2].map(|a| self.dims[a].saturating_sub(origin[a]).min(block.block_size) as usize);
        let row_bytes = valid[0] * voxel_bytes;
        for z in 0..valid[2] {
            for y in 0..valid[1] {
                let dst = self.sample_index(origin[0], origin[1] + y as u32, origin[2] + z as u32, 0) * bpc;
                let src = (z * bs + y) * bs * voxel_bytes;
                self.data[dst..dst + row_bytes].copy_from_slice(&block.data[src..src + row_bytes]);
            }
        }
    }
}

const CHILD_OFFSETS: [(u32, u32, u32); 8] = [
    (0, 0, 0),
    (1, 0, 0),
    (0, 1, 0),
    (1, 1, 0),
    (0, 0, 1),
    (1, 0, 1),
    (0, 1, 1),
    (1, 1, 1),
];

#[inline]
pub(crate) fn read_sample(data: &[u8], index: usize, bytes_per_channel: usize) -> u16 {
    if bytes_per_channel == 1 {
        data[index] as u16
    } else {
        u16::from_le_bytes([data[2 * index], data[2 * index + 1]])
    }
}

#[inline]
fn write_sample(data: &mut [u8], index: usize, bytes_per_channel: usize, value: u16) {
    if bytes_per_channel == 1 {
        data[index] = value as u8;
    } else {
        data[2 * index..2 * index + 2].copy_from_slice(&value.to_le_bytes());
    }
}

/// Every level of the pyramid, level 0 first.
pub fn build_pyramid(level0: Volume, level_count: u8) -> Vec<Volume> {
    let mut levels = Vec::with_capacity(level_count as usize);
    levels.push(level0);
    for _ in 1..level_count {
        let next = levels.last().unwrap().downsample();
        levels.push(next);
    }
    levels
}

/// A `block_size³` brick, upload-ready: x fastest, channels interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub key: BlockKey,
    pub block_size: u32,
    pub channels: u8,
    pub bits_per_channel: u8,
    pub data: Vec<u8>,
}

impl Block {
    pub fn zeroed(key: BlockKey, meta: &VolumeMeta) -> Self {
        Block {
            key,
            block_size: meta.block_size,
            channels: meta.channels,
            bits_per_channel: meta.bits_per_channel,
            data: vec![0; meta.block_bytes()],
        }
    }

    pub fn byte_len(&self) -> usize {
        self.data.len()
    }

    pub fn sample_count(&self) -> usize {
        (self.block_size as usize).pow(3) * self.channels as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, z: u32, c: u8) -> u16 {
        let bs = self.block_size as usize;
        let i = ((z as usize * bs + y as usize) * bs + x as usize) * self.channels as usize + c as usize;
        read_sample(&self.data, i, self.bits_per_channel as usize / 8)
    }

    /// Sample value mapped to `[0, 1]`.
    #[inline]
    pub fn normalized(&self, x: u32, y: u32, z: u32, c: u8) -> f64 {
        let scale = if self.bits_per_channel == 8 { 255.0 } else { 65535.0 };
        self.get(x, y, z, c) as f64 / scale
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|&b| b == 0)
    }
}
