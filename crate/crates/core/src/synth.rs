//! Deterministic synthetic volumes for tests, benchmarks and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::volume::Volume;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Blob {
    /// Center in voxel coordinates.
    pub center: [f64; 3],
    pub sigma: f64,
    pub amplitude: f64,
}

/// `count` random Gaussian blobs sized relative to the volume.
pub fn random_blobs(dims: [u32; 3], count: usize, seed: u64) -> Vec<Blob> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extent = dims.iter().copied().min().unwrap_or(1) as f64;
    (0..count)
        .map(|_| Blob {
            center: std::array::from_fn(|a| rng.gen_range(0.15..0.85) * dims[a] as f64),
            sigma: extent * rng.gen_range(0.04..0.12),
            amplitude: rng.gen_range(0.5..1.0),
        })
        .collect()
}

/// 8-bit single-channel volume holding the clamped sum of the blobs.
/// Each blob contributes only within four sigma of its center.
pub fn blob_volume(dims: [u32; 3], blobs: &[Blob]) -> Volume {
    let mut vol = Volume::zeroed(dims, 1, 8);
    let slice = dims[0] as usize * dims[1] as usize;
    vol.data.par_chunks_mut(slice).enumerate().for_each(|(z, plane)| {
        let zc = z as f64 + 0.5;
        let mut acc = vec![0f32; slice];
        for b in blobs {
            let reach = 4.0 * b.sigma;
            let dz = zc - b.center[2];
            if dz.abs() > reach {
                continue;
            }
            let inv = -0.5 / (b.sigma * b.sigma);
            let range = |a: usize| {
                let lo = (b.center[a] - reach).floor().max(0.0) as usize;
                let hi = ((b.center[a] + reach).ceil().max(0.0) as usize).min(dims[a] as usize);
                lo..hi
            };
            for y in range(1) {
                let dy = y as f64 + 0.5 - b.center[1];
                let row = (dy * dy + dz * dz) * inv;
                for x in range(0) {
                    let dx = x as f64 + 0.5 - b.center[0];
                    acc[y * dims[0] as usize + x] += (b.amplitude * (dx * dx * inv + row).exp()) as f32;
                }
            }
        }
        for (out, v) in plane.iter_mut().zip(acc) {
            *out = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    });
    vol
}

/// Convenience: `count` seeded blobs in a `dims` volume.
pub fn blob_scene(dims: [u32; 3], count: usize, seed: u64) -> Volume {
    blob_volume(dims, &random_blobs(dims, count, seed))
}

/// Uniform random bytes (incompressible frames).
pub fn noise_volume(dims: [u32; 3], channels: u8, seed: u64) -> Volume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vol = Volume::zeroed(dims, channels, 8);
    rng.fill(vol.data.as_mut_slice());
    vol
}
