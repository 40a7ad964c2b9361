//! Multipass rendering: one pass per scheduled block, each continuing the
//! rays stored in the wrapped framebuffer.

use rayon::prelude::*;
use serde::Serialize;

use crate::cache::BlockStore;
use crate::camera::Camera;
use crate::error::Result;
use crate::geometry::{Aabb, Ray};
use crate::image::FloatImage;
use crate::octree::RenderSchedule;
use crate::warp::{ray_for_pixel, WarpMap};

use super::field::{BlockField, Field};
use super::integrate::{march, MarchParams, OpticalModel, RayState, Span};
use super::transfer::TransferFunction;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    pub model: OpticalModel,
    /// Step as a fraction of the smallest voxel spacing of the block's level.
    pub step_scale: f64,
    pub term_eps: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            model: OpticalModel::EmissionAbsorption,
            step_scale: 0.5,
            term_eps: 1e-3,
        }
    }
}

impl RenderOptions {
    pub fn march_params(&self, spacing_min: f64) -> MarchParams {
        MarchParams {
            model: self.model,
            step: self.step_scale * spacing_min,
            term_eps: if self.model == OpticalModel::EmissionAbsorption {
                self.term_eps
            } else {
                0.0
            },
        }
    }
}

/// Intermediate framebuffer in wrapped space holding each pixel's full ray
/// state, so later passes can continue where earlier ones stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct WrappedFramebuffer {
    pub width: u32,
    pub height: u32,
    pub states: Vec<RayState>,
}

impl WrappedFramebuffer {
    pub fn new(width: u32, height: u32) -> Self {
        WrappedFramebuffer {
            width,
            height,
            states: vec![RayState::default(); (width * height) as usize],
        }
    }

    pub fn state(&self, x: u32, y: u32) -> &RayState {
        &self.states[(y * self.width + x) as usize]
    }

    pub fn total_samples(&self) -> u64 {
        self.states.iter().map(|s| s.samples).sum()
    }

    /// Premultiplied RGBA. Additive models report zero alpha.
    pub fn to_image(&self) -> FloatImage {
        FloatImage {
            width: self.width,
            height: self.height,
            pixels: self.states.iter().map(RayState::rgba).collect(),
        }
    }
}

/// Per-frame ray setup shared by every pass: the warped primary rays, their
/// volume intervals and optional opaque-geometry depth limits.
pub struct FrameSetup<'a> {
    pub camera: &'a Camera,
    pub warp: &'a WarpMap,
    pub tf: &'a TransferFunction,
    pub opts: RenderOptions,
    width: u32,
    height: u32,
    rays: Vec<Ray>,
    /// Volume entry and exit (already clipped by near/far and depth), or
    /// `None` if the ray misses.
    intervals: Vec<Option<(f64, f64)>>,
}

impl<'a> FrameSetup<'a> {
    pub fn new(
        volume: &Aabb,
        camera: &'a Camera,
        warp: &'a WarpMap,
        tf: &'a TransferFunction,
        opts: RenderOptions,
        depth: Option<&[f64]>,
    ) -> Self {
        let (width, height) = warp.wrapped_size();
        let n = (width * height) as usize;
        let mut rays = Vec::with_capacity(n);
        let mut intervals = Vec::with_capacity(n);
        for py in 0..height {
            for px in 0..width {
                let ray = ray_for_pixel(camera, warp, px, py);
                let limit = depth.map_or(f64::INFINITY, |d| d[(py * width + px) as usize]);
                let iv = volume.intersect_ray(&ray).and_then(|(t0, t1)| {
                    let t0 = t0.max(camera.near);
                    let t1 = t1.min(camera.far).min(limit);
                    (t1 > t0).then_some((t0, t1))
                });
                rays.push(ray);
                intervals.push(iv);
            }
        }
        FrameSetup {
            camera,
            warp,
            tf,
            opts,
            width,
            height,
            rays,
            intervals,
        }
    }

    pub fn size(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn framebuffer(&self) -> WrappedFramebuffer {
        WrappedFramebuffer::new(self.width, self.height)
    }

    pub fn ray(&self, x: u32, y: u32) -> &Ray {
        &self.rays[(y * self.width + x) as usize]
    }
}

/// One pass over a block: every pixel whose ray crosses `aabb` beyond its
/// stored parameter resumes marching through the segments the block owns.
/// `aabb = None` makes the field own the whole ray.
pub fn render_block_pass(fb: &mut WrappedFramebuffer, setup: &FrameSetup<'_>, field: &dyn Field, aabb: Option<&Aabb>) {
    let params = setup.opts.march_params(field.spacing().min());
    // Emission-only and MIP accumulate commutatively, so a pass samples the
    // segments it owns regardless of what earlier passes covered.
    let commutative = params.model != OpticalModel::EmissionAbsorption;
    let width = setup.width as usize;
    fb.states
        .par_chunks_mut(width)
        .zip(setup.rays.par_chunks(width))
        .zip(setup.intervals.par_chunks(width))
        .for_each(|((states, rays), intervals)| {
            for ((state, ray), iv) in states.iter_mut().zip(rays).zip(intervals) {
                let Some((t_vol, t_end)) = *iv else { continue };
                if state.terminated {
                    continue;
                }
                let span = match aabb {
                    None => Span::whole(t_vol, t_end),
                    Some(b) => {
                        let Some((tb0, tb1)) = b.intersect_ray(ray) else { continue };
                        if (!commutative && tb1 <= state.t) || tb0 >= t_end {
                            continue;
                        }
                        Span {
                            grid_origin: t_vol,
                            end: t_end,
                            owner_start: tb0,
                            owner_end: tb1,
                        }
                    }
                };
                if commutative {
                    let resume = state.t;
                    state.t = f64::NEG_INFINITY;
                    march(state, ray, field, setup.tf, &params, &span);
                    state.t = state.t.max(resume);
                } else {
                    march(state, ray, field, setup.tf, &params, &span);
                }
            }
        });
}

/// Brute-force render of a single field over the whole volume.
pub fn render_dense(setup: &FrameSetup<'_>, field: &dyn Field) -> WrappedFramebuffer {
    let mut fb = setup.framebuffer();
    render_block_pass(&mut fb, setup, field, None);
    fb
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FrameStats {
    pub blocks_rendered: usize,
    pub samples: u64,
    pub rays: u64,
    /// Number of scheduled blocks per pyramid level.
    pub blocks_per_level: Vec<usize>,
}

/// Folds [`render_block_pass`] over the schedule in order. Neighbor blocks
/// for seam-free interpolation come from whatever is already resident.
pub fn render_frame(schedule: &RenderSchedule, store: &BlockStore, setup: &FrameSetup<'_>) -> Result<(WrappedFramebuffer, FrameStats)> {
    let meta = store.container().meta();
    let mut fb = setup.framebuffer();
    let mut stats = FrameStats {
        rays: (setup.width * setup.height) as u64,
        blocks_per_level: vec![0; meta.level_count() as usize],
        ..Default::default()
    };
    for sb in &schedule.blocks {
        let center = store.fetch(sb.key)?;
        let field = BlockField::new(meta, center, |k| store.resident(k));
        render_block_pass(&mut fb, setup, &field, Some(&sb.aabb));
        stats.blocks_rendered += 1;
        stats.blocks_per_level[sb.key.level as usize] += 1;
    }
    stats.samples = fb.total_samples();
    Ok((fb, stats))
}
