//! Trilinear sampling of voxel data in world coordinates.

use std::sync::Arc;

use nalgebra::{Point3, Vector3};

use crate::geometry::Aabb;
use crate::volume::{Block, BlockKey, Volume, VolumeMeta};

pub const MAX_CHANNELS: usize = 4;

/// Per-channel values of one sample; unused channels are 0.
pub type Sample = [f64; MAX_CHANNELS];

/// A scalar (or multi-channel) field over world space.
pub trait Field: Sync {
    fn channels(&self) -> usize;
    /// Region where the field is defined. Samples outside are 0.
    fn bounds(&self) -> Aabb;
    /// Voxel spacing; also the central-difference stencil per axis.
    fn spacing(&self) -> Vector3<f64>;
    fn sample(&self, p: &Point3<f64>) -> Sample;
}

/// Trilinear blend over a voxel grid with cell-centered samples
/// (voxel `i` sits at `(i + 0.5) * spacing`). Indices are clamped to the
/// grid, so sampling between the outermost centers and the boundary repeats
/// the edge voxel.
#[inline]
pub(crate) fn trilinear(
    p: &Point3<f64>,
    spacing: &Vector3<f64>,
    dims: [u32; 3],
    fetch: impl Fn(u32, u32, u32) -> Sample,
) -> Sample {
    let mut i0 = [0u32; 3];
    let mut i1 = [0u32; 3];
    let mut f = [0f64; 3];
    for a in 0..3 {
        let u = p[a] / spacing[a] - 0.5;
        let fl = u.floor();
        let hi = dims[a] as i64 - 1;
        let lo_i = fl as i64;
        i0[a] = lo_i.clamp(0, hi) as u32;
        i1[a] = (lo_i + 1).clamp(0, hi) as u32;
        f[a] = u - fl;
    }
    let c000 = fetch(i0[0], i0[1], i0[2]);
    let c100 = fetch(i1[0], i0[1], i0[2]);
    let c010 = fetch(i0[0], i1[1], i0[2]);
    let c110 = fetch(i1[0], i1[1], i0[2]);
    let c001 = fetch(i0[0], i0[1], i1[2]);
    let c101 = fetch(i1[0], i0[1], i1[2]);
    let c011 = fetch(i0[0], i1[1], i1[2]);
    let c111 = fetch(i1[0], i1[1], i1[2]);
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    std::array::from_fn(|c| {
        let x00 = lerp(c000[c], c100[c], f[0]);
        let x10 = lerp(c010[c], c110[c], f[0]);
        let x01 = lerp(c001[c], c101[c], f[0]);
        let x11 = lerp(c011[c], c111[c], f[0]);
        lerp(lerp(x00, x10, f[1]), lerp(x01, x11, f[1]), f[2])
    })
}

/// Central-difference gradient of every channel, with the field's spacing as
/// the stencil.
pub fn gradient(field: &dyn Field, p: &Point3<f64>) -> [Vector3<f64>; MAX_CHANNELS] {
    let h = field.spacing();
    let mut g = [Vector3::zeros(); MAX_CHANNELS];
    for a in 0..3 {
        let mut lo = *p;
        let mut hi = *p;
        lo[a] -= h[a];
        hi[a] += h[a];
        let (s_lo, s_hi) = (field.sample(&lo), field.sample(&hi));
        for c in 0..field.channels() {
            g[c][a] = (s_hi[c] - s_lo[c]) / (2.0 * h[a]);
        }
    }
    g
}

fn scale_for_bits(bits: u8) -> f64 {
    if bits == 8 {
        255.0
    } else {
        65535.0
    }
}

/// A whole volume (any pyramid level) held in memory.
#[derive(Clone, Copy, Debug)]
pub struct DenseField<'a> {
    volume: &'a Volume,
    spacing: Vector3<f64>,
    bounds: Aabb,
}

impl<'a> DenseField<'a> {
    pub fn new(volume: &'a Volume, spacing: Vector3<f64>) -> Self {
        let bounds = Aabb::new(
            Point3::origin(),
            Point3::from(Vector3::from_fn(|a, _| volume.dims[a] as f64 * spacing[a])),
        );
        DenseField {
            volume,
            spacing,
            bounds,
        }
    }

    /// Pyramid level `level` of a volume described by `meta`. The bounds stay
    /// those of the full-resolution volume.
    pub fn level(volume: &'a Volume, meta: &VolumeMeta, level: u8) -> Self {
        DenseField {
            volume,
            spacing: meta.level_spacing(level),
            bounds: meta.volume_aabb(),
        }
    }
}

impl Field for DenseField<'_> {
    fn channels(&self) -> usize {
        self.volume.channels as usize
    }

    fn bounds(&self) -> Aabb {
        self.bounds
    }

    fn spacing(&self) -> Vector3<f64> {
        self.spacing
    }

    fn sample(&self, p: &Point3<f64>) -> Sample {
        if !self.bounds.contains(p) {
            return [0.0; MAX_CHANNELS];
        }
        let v = self.volume;
        let scale = scale_for_bits(v.bits_per_channel);
        let ch = (v.channels as usize).min(MAX_CHANNELS);
        trilinear(p, &self.spacing, v.dims, |x, y, z| {
            let mut s = [0.0; MAX_CHANNELS];
            for (c, out) in s.iter_mut().enumerate().take(ch) {
                *out = v.get(x, y, z, c as u8) as f64 / scale;
            }
            s
        })
    }
}

/// One block plus whichever of its 26 same-level neighbors are resident.
/// Interpolation across a face reads the neighbor's voxels; where a neighbor
/// is missing, indices clamp to the block's own edge.
#[derive(Clone, Debug)]
pub struct BlockField {
    level: u8,
    coords: [u32; 3],
    block_size: u32,
    channels: usize,
    scale: f64,
    dims: [u32; 3],
    spacing: Vector3<f64>,
    bounds: Aabb,
    blocks: [Option<Arc<Block>>; 27],
}

#[inline]
fn neighbor_slot(d: [i64; 3]) -> usize {
    ((d[2] + 1) * 9 + (d[1] + 1) * 3 + (d[0] + 1)) as usize
}

impl BlockField {
    pub fn new(meta: &VolumeMeta, center: Arc<Block>, neighbor: impl Fn(&BlockKey) -> Option<Arc<Block>>) -> Self {
        let key = center.key;
        let grid = meta.block_grid(key.level);
        let mut blocks: [Option<Arc<Block>>; 27] = Default::default();
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let d = [dx, dy, dz];
                    if d == [0, 0, 0] {
                        continue;
                    }
                    let c: [i64; 3] = std::array::from_fn(|a| key.coords[a] as i64 + d[a]);
                    if (0..3).any(|a| c[a] < 0 || c[a] >= grid[a] as i64) {
                        continue;
                    }
                    let nk = BlockKey::new(key.level, [c[0] as u32, c[1] as u32, c[2] as u32]);
                    blocks[neighbor_slot(d)] = neighbor(&nk);
                }
            }
        }
        let scale = scale_for_bits(center.bits_per_channel);
        blocks[neighbor_slot([0, 0, 0])] = Some(center);
        BlockField {
            level: key.level,
            coords: key.coords,
            block_size: meta.block_size,
            channels: (meta.channels as usize).min(MAX_CHANNELS),
            scale,
            dims: meta.level_dims(key.level),
            spacing: meta.level_spacing(key.level),
            bounds: meta.volume_aabb(),
            blocks,
        }
    }

    /// Only the center block; no neighbor data.
    pub fn isolated(meta: &VolumeMeta, center: Arc<Block>) -> Self {
        Self::new(meta, center, |_| None)
    }

    pub fn key(&self) -> BlockKey {
        BlockKey::new(self.level, self.coords)
    }

    pub fn neighbor_count(&self) -> usize {
        self.blocks.iter().filter(|b| b.is_some()).count() - 1
    }

    #[inline]
    fn fetch(&self, g: [u32; 3]) -> Sample {
        let bs = self.block_size;
        let mut d = [0i64; 3];
        for a in 0..3 {
            d[a] = (g[a] / bs) as i64 - self.coords[a] as i64;
        }
        let (block, local) = match d.iter().all(|v| v.abs() <= 1) {
            true => match &self.blocks[neighbor_slot(d)] {
                Some(b) => (&**b, std::array::from_fn(|a| g[a] % bs)),
                None => (self.center(), self.clamp_local(g)),
            },
            false => (self.center(), self.clamp_local(g)),
        };
        let mut s = [0.0; MAX_CHANNELS];
        for (c, out) in s.iter_mut().enumerate().take(self.channels) {
            *out = block.get(local[0], local[1], local[2], c as u8) as f64 / self.scale;
        }
        s
    }

    fn center(&self) -> &Block {
        self.blocks[neighbor_slot([0, 0, 0])].as_ref().expect("center block present")
    }

    fn clamp_local(&self, g: [u32; 3]) -> [u32; 3] {
        let bs = self.block_size;
        std::array::from_fn(|a| {
            let start = self.coords[a] * bs;
            g[a].clamp(start, start + bs - 1) - start
        })
    }
}

impl Field for BlockField {
    fn channels(&self) -> usize {
        self.channels
    }

    fn bounds(&self) -> Aabb {
        self.bounds
    }

    fn spacing(&self) -> Vector3<f64> {
        self.spacing
    }

    fn sample(&self, p: &Point3<f64>) -> Sample {
        if !self.bounds.contains(p) {
            return [0.0; MAX_CHANNELS];
        }
        trilinear(p, &self.spacing, self.dims, |x, y, z| self.fetch([x, y, z]))
    }
}
