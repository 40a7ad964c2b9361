//! Frame assembly: overlay rasterization, scheduling and block loading,
//! multipass volume rendering, unwarping, compositing and lens distortion.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{Point3, Unit};
use serde::Serialize;

use crate::cache::{BlockStore, CacheStats};
use crate::camera::Camera;
use crate::compositor::{composite, load_obj, rasterize, warp_depth, Light, Scene, TriangleMesh};
use crate::config::RenderConfig;
use crate::container::ContainerHandle;
use crate::dvr::{render_dense, render_frame, DenseField, FrameSetup, RenderOptions, TransferFunction, WrappedFramebuffer};
use crate::geometry::Aabb;
use crate::error::{Error, Result};
use crate::image::FloatImage;
use crate::imposter::{load_swc, render_annotations, Guide};
use crate::octree::{traverse, Octree, RenderSchedule, TraversalOptions};
use crate::volume::{BlockKey, Volume, VolumeMeta};
use crate::warp::{barrel_distort, unwarp_image, WarpMap};

/// Everything about a frame except the camera.
#[derive(Clone, Debug)]
pub struct FrameSettings {
    pub tf: TransferFunction,
    pub warp: WarpMap,
    pub render: RenderOptions,
    pub lod: TraversalOptions,
    /// Schedule/load rounds before rendering. Zero renders whatever is
    /// resident and leaves the requests queued.
    pub max_load_rounds: usize,
    pub distort: Option<(f64, f64)>,
    pub light: Light,
}

impl FrameSettings {
    pub fn new(tf: TransferFunction, output: (u32, u32)) -> Self {
        FrameSettings {
            tf,
            warp: WarpMap::identity(output),
            render: RenderOptions::default(),
            lod: TraversalOptions::default(),
            max_load_rounds: 32,
            distort: None,
            light: Light::default(),
        }
    }
}

/// Opaque geometry drawn with the volume.
#[derive(Clone, Debug, Default)]
pub struct Overlays {
    pub meshes: Vec<TriangleMesh>,
    pub guides: Vec<Guide>,
}

impl Overlays {
    pub fn load(meshes: &[PathBuf], swcs: &[PathBuf], palette: &crate::imposter::TypePalette) -> Result<Self> {
        let mut out = Overlays::default();
        for p in meshes {
            out.meshes.push(load_obj(p)?);
        }
        for p in swcs {
            out.guides.extend(load_swc(p, palette)?);
        }
        Ok(out)
    }

    pub fn is_empty(&self) -> bool {
        self.meshes.is_empty() && self.guides.is_empty()
    }

    pub fn triangle_count(&self) -> usize {
        self.meshes.iter().map(TriangleMesh::len).sum()
    }

    /// Nearest-surface color and distance at output resolution.
    pub fn rasterize(&self, camera: &Camera, light: &Light) -> Result<(Scene, u64)> {
        let mut scene = Scene::empty(camera.width, camera.height);
        for mesh in &self.meshes {
            scene.merge(&rasterize(mesh, camera, light))?;
        }
        let mut hits = 0;
        if !self.guides.is_empty() {
            let (s, stats) = render_annotations(&self.guides, camera, light);
            scene.merge(&s)?;
            hits = stats.pixels_hit;
        }
        Ok((scene, hits))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EyeStats {
    pub wrapped_width: u32,
    pub wrapped_height: u32,
    pub rays: u64,
    pub samples: u64,
    pub blocks_rendered: usize,
    pub blocks_per_level: Vec<usize>,
    pub load_rounds: usize,
    pub blocks_loaded: usize,
    /// Requests still queued when rendering started.
    pub requests_pending: usize,
    pub triangles: usize,
    pub annotation_pixels: u64,
    pub scene_ms: f64,
    pub load_ms: f64,
    pub volume_ms: f64,
    pub post_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RenderStats {
    pub width: u32,
    pub height: u32,
    pub eyes: Vec<EyeStats>,
    pub render_cache: CacheStats,
    pub memory_cache: CacheStats,
    pub disk_reads: u64,
    pub checksum_errors: u64,
    pub wall_ms: f64,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// A container with its caches and octree.
#[derive(Debug)]
pub struct Renderer {
    store: BlockStore,
    tree: Octree,
}

impl Renderer {
    pub fn new(container: Arc<ContainerHandle>, memory_bytes: usize, render_bytes: usize) -> Self {
        let tree = Octree::new(container.meta().clone());
        Renderer {
            store: BlockStore::new(container, memory_bytes, render_bytes),
            tree,
        }
    }

    pub fn open(path: &Path, memory_bytes: usize, render_bytes: usize) -> Result<Self> {
        Ok(Self::new(Arc::new(ContainerHandle::open(path)?), memory_bytes, render_bytes))
    }

    pub fn store(&self) -> &BlockStore {
        &self.store
    }

    pub fn tree(&self) -> &Octree {
        &self.tree
    }

    /// Traverses, loads what was requested, and repeats until the schedule
    /// is complete, `max_rounds` loads have happened or nothing more fits.
    /// Returns the final schedule, the rounds used and the blocks loaded.
    pub fn schedule(&self, camera: &Camera, lod: &TraversalOptions, max_rounds: usize) -> Result<(RenderSchedule, usize, usize)> {
        let mut loaded = 0;
        let mut rounds = 0;
        loop {
            let schedule = traverse(&self.tree, camera, &self.store.render, lod);
            if schedule.requests.is_empty() || rounds == max_rounds {
                return Ok((schedule, rounds, loaded));
            }
            let n = self.refine(&schedule)?;
            if n == 0 {
                return Ok((schedule, rounds, loaded));
            }
            loaded += n;
            rounds += 1;
        }
    }

    /// One traversal for `camera` followed by one budgeted load.
    pub fn prefetch(&self, camera: &Camera, lod: &TraversalOptions) -> Result<usize> {
        let schedule = traverse(&self.tree, camera, &self.store.render, lod);
        self.refine(&schedule)
    }

    /// Loads queued requests into the render-cache room left by the blocks
    /// `schedule` draws and their ancestors, so refining never evicts the
    /// fallback being refined. Requests that do not fit are dropped; the
    /// next traversal asks again.
    fn refine(&self, schedule: &RenderSchedule) -> Result<usize> {
        let meta = self.tree.meta();
        let render = &self.store.render;
        let mut pinned = Vec::new();
        let mut seen = HashSet::new();
        for b in &schedule.blocks {
            let mut chain = Vec::new();
            let mut k = b.key;
            while seen.insert(k) {
                chain.push(k);
                if k.level >= meta.top_level() {
                    break;
                }
                k = BlockKey::new(k.level + 1, k.coords.map(|c| c / 2));
            }
            pinned.extend(chain.into_iter().rev());
        }
        // Restamp ancestors first so every pinned block is newer than
        // anything eviction may take.
        let mut pinned_bytes = 0;
        for k in &pinned {
            if render.peek(k).is_some() {
                pinned_bytes += render.get(k).map_or(0, |b| b.byte_len());
            }
        }
        let room = render.capacity().saturating_sub(pinned_bytes);
        let loaded = self.store.service_requests(room / meta.block_bytes())?;
        render.drain_requests(usize::MAX);
        Ok(loaded)
    }

    /// One eye at the camera's resolution.
    pub fn render_eye(&self, camera: &Camera, settings: &FrameSettings, overlays: &Overlays) -> Result<(FloatImage, EyeStats)> {
        let aabb = self.tree.meta().volume_aabb();
        assemble(camera, settings, overlays, &aabb, |setup, stats| {
            let t = Instant::now();
            let (schedule, rounds, loaded) = self.schedule(camera, &settings.lod, settings.max_load_rounds)?;
            stats.load_rounds = rounds;
            stats.blocks_loaded = loaded;
            stats.requests_pending = schedule.requests.len();
            stats.load_ms = ms(t);
            let (fb, fs) = render_frame(&schedule, &self.store, setup)?;
            stats.blocks_rendered = fs.blocks_rendered;
            stats.blocks_per_level = fs.blocks_per_level;
            Ok(fb)
        })
    }

    /// A mono frame, or a side-by-side stereo pair when `ipd` is given.
    pub fn render_view(
        &self,
        camera: &Camera,
        settings: &FrameSettings,
        overlays: &Overlays,
        ipd: Option<f64>,
    ) -> Result<(FloatImage, RenderStats)> {
        let start = Instant::now();
        let (image, eyes) = match ipd {
            None => {
                let (img, s) = self.render_eye(camera, settings, overlays)?;
                (img, vec![s])
            }
            Some(ipd) => {
                let (left, ls) = self.render_eye(&camera.shifted(-ipd / 2.0), settings, overlays)?;
                let (right, rs) = self.render_eye(&camera.shifted(ipd / 2.0), settings, overlays)?;
                (left.side_by_side(&right)?, vec![ls, rs])
            }
        };
        let stats = RenderStats {
            width: image.width,
            height: image.height,
            eyes,
            render_cache: self.store.render.stats(),
            memory_cache: self.store.memory.stats(),
            disk_reads: self.store.disk_reads(),
            checksum_errors: self.store.checksum_errors(),
            wall_ms: ms(start),
        };
        Ok((image, stats))
    }
}

/// Renders a fully resident level-0 volume (a decoded movie frame) in one
/// pass, without the octree.
pub fn render_resident(
    volume: &Volume,
    meta: &VolumeMeta,
    camera: &Camera,
    settings: &FrameSettings,
    overlays: &Overlays,
) -> Result<(FloatImage, EyeStats)> {
    if !volume.matches(meta) {
        return Err(Error::DimensionMismatch("volume does not match its metadata".into()));
    }
    let field = DenseField::level(volume, meta, 0);
    assemble(camera, settings, overlays, &meta.volume_aabb(), |setup, stats| {
        stats.blocks_rendered = 1;
        stats.blocks_per_level = vec![1];
        Ok(render_dense(setup, &field))
    })
}

fn assemble(
    camera: &Camera,
    settings: &FrameSettings,
    overlays: &Overlays,
    volume_aabb: &Aabb,
    volume_pass: impl FnOnce(&FrameSetup<'_>, &mut EyeStats) -> Result<WrappedFramebuffer>,
) -> Result<(FloatImage, EyeStats)> {
    let out_size = (camera.width, camera.height);
    if settings.warp.output_size() != out_size {
        return Err(Error::SizeMismatch(format!(
            "warp output {:?} differs from camera {:?}",
            settings.warp.output_size(),
            out_size
        )));
    }
    let mut stats = EyeStats {
        triangles: overlays.triangle_count(),
        ..Default::default()
    };

    let t = Instant::now();
    let (scene, hits) = overlays.rasterize(camera, &settings.light)?;
    stats.annotation_pixels = hits;
    let depth = (!overlays.is_empty()).then(|| warp_depth(&scene.depth, &settings.warp));
    stats.scene_ms = ms(t);

    let setup = FrameSetup::new(
        volume_aabb,
        camera,
        &settings.warp,
        &settings.tf,
        settings.render,
        depth.as_ref().map(|d| d.data.as_slice()),
    );
    let t = Instant::now();
    let fb = volume_pass(&setup, &mut stats)?;
    (stats.wrapped_width, stats.wrapped_height) = setup.size();
    stats.rays = stats.wrapped_width as u64 * stats.wrapped_height as u64;
    stats.samples = fb.total_samples();
    stats.volume_ms = ms(t) - stats.load_ms;

    let t = Instant::now();
    let volume = unwarp_image(&fb.to_image(), &settings.warp, out_size);
    let mut image = composite(&volume, &scene.color)?;
    if let Some((k1, k2)) = settings.distort {
        image = barrel_distort(&image, k1, k2)?;
    }
    stats.post_ms = ms(t);
    Ok((image, stats))
}

/// Camera, settings and overlays from a config, for a volume with
/// `channels` channels.
pub fn frame_from_config(cfg: &RenderConfig, channels: usize) -> Result<(Camera, FrameSettings, Overlays)> {
    let camera = cfg.camera.camera()?;
    let settings = FrameSettings {
        tf: cfg.transfer_for(channels),
        warp: cfg.warp.map((camera.width, camera.height))?,
        render: cfg.render,
        lod: cfg.lod,
        max_load_rounds: cfg.max_load_rounds,
        distort: cfg.distort,
        light: cfg.light,
    };
    let overlays = Overlays::load(&cfg.meshes, &cfg.swcs, &cfg.swc_palette)?;
    Ok((camera, settings, overlays))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrbitFrame {
    pub index: usize,
    pub wall_ms: f64,
    pub rays: u64,
    pub samples: u64,
    pub blocks_rendered: usize,
    pub blocks_loaded: usize,
    pub render_resident_bytes: usize,
    pub memory_resident_bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrbitReport {
    pub frames: Vec<OrbitFrame>,
    pub render_budget_bytes: usize,
    pub render_peak_bytes: usize,
    pub memory_budget_bytes: usize,
    pub memory_peak_bytes: usize,
    pub checksum_errors: u64,
    pub within_budget: bool,
    pub wall_seconds: f64,
}

/// Renders `frames` views evenly spaced on a full turn of `camera` around
/// `center` (about the camera's up axis). After each frame the view is
/// traversed again and its requests loaded within the budget, so later
/// frames refine what earlier ones could not.
pub fn bench_orbit(
    renderer: &Renderer,
    camera: &Camera,
    center: &Point3<f64>,
    frames: usize,
    settings: &FrameSettings,
    overlays: &Overlays,
) -> Result<OrbitReport> {
    let start = Instant::now();
    let axis = Unit::new_normalize(camera.up());
    let store = renderer.store();
    let mut out = Vec::with_capacity(frames);
    for i in 0..frames {
        let t = Instant::now();
        let angle = std::f64::consts::TAU * i as f64 / frames as f64;
        let cam = camera.orbited(center, &axis, angle);
        let (_, s) = renderer.render_eye(&cam, settings, overlays)?;
        let drained = renderer.prefetch(&cam, &settings.lod)?;
        out.push(OrbitFrame {
            index: i,
            wall_ms: ms(t),
            rays: s.rays,
            samples: s.samples,
            blocks_rendered: s.blocks_rendered,
            blocks_loaded: s.blocks_loaded + drained,
            render_resident_bytes: store.render.resident_bytes(),
            memory_resident_bytes: store.memory.resident_bytes(),
        });
    }
    let render_peak = store.render.peak_bytes();
    let memory_peak = store.memory.peak_bytes();
    Ok(OrbitReport {
        frames: out,
        render_budget_bytes: store.render.capacity(),
        render_peak_bytes: render_peak,
        memory_budget_bytes: store.memory.capacity(),
        memory_peak_bytes: memory_peak,
        checksum_errors: store.checksum_errors(),
        within_budget: render_peak <= store.render.capacity() && memory_peak <= store.memory.capacity(),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
