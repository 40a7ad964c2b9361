//! End-to-end acceptance checks. Runs without the libtest harness so each
//! criterion prints one PASS/FAIL line; exits non-zero if any fails.

// Negated comparisons are deliberate: NaN must fail every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{sized_block, LruModel};
use voxcast::cache::{BlockCache, BlockStore};
use voxcast::camera::Camera;
use voxcast::compositor::{rasterize, Light, TriangleMesh};
use voxcast::container::{import_volume, ContainerHandle, HEADER_LEN};
use voxcast::dvr::*;
use voxcast::geometry::{Aabb, Ray};
use voxcast::image::psnr;
use voxcast::imposter::*;
use voxcast::movie::{append_frame, bench_playback, Movie};
use voxcast::octree::{traverse, Octree, TraversalOptions};
use voxcast::pipeline::{bench_orbit, render_resident, FrameSettings, Overlays, Renderer};
use voxcast::synth::blob_scene;
use voxcast::volume::{BlockKey, Volume, VolumeMeta};
use voxcast::warp::WarpMap;
use voxcast::Error;

type Check = Result<String, String>;
type Criterion = (&'static str, Option<f64>, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("integrator accuracy", Some(5.0), integrator_accuracy),
        ("multipass equals single pass", Some(30.0), multipass_equals_single_pass),
        ("octree level of detail", Some(60.0), octree_lod_quality),
        ("early ray termination", None, early_termination),
        ("cache model equivalence", Some(10.0), cache_model_equivalence),
        ("container resumability", Some(30.0), container_resumability),
        ("out-of-core budget", Some(300.0), out_of_core_budget),
        ("wrapped-space economy", None, wrapped_space_economy),
        ("compositing", None, compositing),
        ("imposter fidelity", None, imposter_fidelity),
        ("movie playback", None, movie_playback),
        ("skeleton files", None, skeleton_files),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        let outcome = match (outcome, limit) {
            (Ok(d), Some(l)) if secs > *l => Err(format!("{d}; took {secs:.1}s, limit {l}s")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.2}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

struct Slab {
    value: f64,
    bounds: Aabb,
}

impl Field for Slab {
    fn channels(&self) -> usize {
        1
    }
    fn bounds(&self) -> Aabb {
        self.bounds
    }
    fn spacing(&self) -> Vector3<f64> {
        Vector3::repeat(1.0)
    }
    fn sample(&self, p: &Point3<f64>) -> Sample {
        if self.bounds.contains(p) {
            [self.value, 0.0, 0.0, 0.0]
        } else {
            [0.0; 4]
        }
    }
}

fn integrator_accuracy() -> Check {
    let (c, rho, len): (f64, f64, f64) = (0.8, 0.03, 50.0);
    let exact = c / rho * (1.0 - (-rho * len).exp());
    let field = Slab {
        value: 1.0,
        bounds: Aabb::new(Point3::origin(), Point3::new(len, 4.0, 4.0)),
    };
    let tf = TransferFunction {
        emission_scale: c,
        opacity_scale: rho,
        ..TransferFunction::linear(1)
    };
    let ray = Ray::new(Point3::new(-3.0, 2.0, 2.0), Vector3::x());
    let err = |step: f64| {
        let p = MarchParams {
            model: OpticalModel::EmissionAbsorption,
            step,
            term_eps: 0.0,
        };
        (integrate_ray(&ray, &field, &tf, &p, f64::INFINITY).rgb[0] - exact) / exact
    };
    let (e1, e2) = (err(0.5), err(0.25));
    let ratio = e1 / e2;
    ensure!(e1.abs() <= 0.01, "relative error {:.4}% > 1%", e1 * 100.0);
    ensure!((1.7..=2.3).contains(&ratio), "error ratio {ratio:.3} outside [1.7, 2.3]");
    Ok(format!("relative error {:.3}% at step 0.5, ratio {ratio:.3}", e1 * 100.0))
}

fn import_to(dir: &Path, name: &str, vol: &Volume, meta: &VolumeMeta) -> std::path::PathBuf {
    let path = dir.join(name);
    import_volume(vol, meta, &path).unwrap();
    path
}

fn look(center: Point3<f64>, eye: Vector3<f64>, vfov: f64, size: (u32, u32)) -> Camera {
    Camera::look_at(center + eye, center, Vector3::y(), vfov, size, 0.1, 1e5).unwrap()
}

fn multipass_equals_single_pass() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let meta = VolumeMeta::new([64; 3], 1, 8, [1.0; 3], 32).unwrap();
    let vol = blob_scene(meta.dims, 12, 4);
    let path = import_to(dir.path(), "m.syg", &vol, &meta);
    let store = BlockStore::new(Arc::new(ContainerHandle::open(&path).unwrap()), 1 << 26, 1 << 26);
    for k in meta.blocks_in_order() {
        store.fetch(k).unwrap();
    }
    let tree = Octree::new(meta.clone());
    let tf = TransferFunction {
        emission_scale: 0.3,
        opacity_scale: 0.1,
        ..TransferFunction::linear(1)
    };
    let c = meta.volume_aabb().center();
    let warp = WarpMap::identity((96, 96));
    let mut worst: f64 = 0.0;
    let mut blocks = 0;
    for eye in [Vector3::new(30.0, 50.0, -120.0), Vector3::new(-90.0, -20.0, 40.0)] {
        let cam = look(c, eye, 0.7, (96, 96));
        let sched = traverse(&tree, &cam, &store.render, &TraversalOptions { quality_k: 1.0, force_finest: true });
        blocks = sched.len();
        ensure!(blocks == 8, "schedule has {blocks} blocks, expected 8");
        for model in [OpticalModel::EmissionAbsorption, OpticalModel::Emission, OpticalModel::MaximumIntensity] {
            let opts = RenderOptions {
                model,
                step_scale: 0.5,
                term_eps: 0.0,
            };
            let setup = FrameSetup::new(&meta.volume_aabb(), &cam, &warp, &tf, opts, None);
            let (multi, _) = render_frame(&sched, &store, &setup).unwrap();
            let single = render_dense(&setup, &DenseField::level(&vol, &meta, 0));
            for (a, b) in multi.states.iter().zip(&single.states) {
                for ch in 0..3 {
                    worst = worst.max((a.rgb[ch] - b.rgb[ch]).abs());
                }
                worst = worst.max((a.alpha - b.alpha).abs());
            }
        }
    }
    ensure!(worst <= 1e-6, "max difference {worst:e}");
    Ok(format!("{blocks} blocks, 3 models, 2 views, max |d| = {worst:.1e}"))
}

fn blob_container(dir: &Path) -> (std::path::PathBuf, VolumeMeta) {
    let meta = VolumeMeta::new([128; 3], 1, 8, [1.0; 3], 16).unwrap();
    let path = import_to(dir, "blobs.syg", &blob_scene(meta.dims, 24, 7), &meta);
    (path, meta)
}

fn blob_settings(size: u32) -> FrameSettings {
    let tf = TransferFunction {
        emission_scale: 0.05,
        opacity_scale: 0.05,
        ..TransferFunction::linear(1)
    };
    FrameSettings::new(tf, (size, size))
}

/// Camera at `distance` bounding radii from the center, slightly above.
fn orbit_camera(meta: &VolumeMeta, distance: f64, vfov: f64, size: u32) -> Camera {
    let aabb = meta.volume_aabb();
    let r = aabb.extent().norm() / 2.0;
    look(aabb.center(), Vector3::new(0.3, 0.25, 1.0).normalize() * distance * r, vfov, (size, size))
}

fn octree_lod_quality() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let (path, meta) = blob_container(dir.path());
    let renderer = Renderer::open(&path, 1 << 28, 1 << 28).unwrap();
    // The volume spans about half the frame height.
    let cam = orbit_camera(&meta, 5.5, 45f64.to_radians(), 256);
    let mut set = blob_settings(256);
    set.lod = TraversalOptions { quality_k: 1.0, force_finest: true };
    let (finest, fs) = renderer.render_eye(&cam, &set, &Overlays::default()).unwrap();
    set.lod.force_finest = false;
    let (lod, ls) = renderer.render_eye(&cam, &set, &Overlays::default()).unwrap();
    ensure!(fs.requests_pending == 0 && ls.requests_pending == 0, "schedules incomplete");
    let db = psnr(&finest, &lod).unwrap();
    ensure!(ls.blocks_rendered < fs.blocks_rendered, "{} blocks vs {} at finest", ls.blocks_rendered, fs.blocks_rendered);
    ensure!(db >= 40.0, "PSNR {db:.2} dB");
    Ok(format!("PSNR {db:.2} dB, {} blocks vs {} at finest (per level {:?})", ls.blocks_rendered, fs.blocks_rendered, ls.blocks_per_level))
}

fn early_termination() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let meta = VolumeMeta::new([64; 3], 1, 8, [1.0; 3], 16).unwrap();
    let blobs = blob_scene(meta.dims, 10, 9);
    // Dense wall over the front quarter, structure behind it.
    let vol = Volume::from_fn_u8(meta.dims, 1, |x, y, z, _| if z >= 48 { 255 } else { blobs.get(x, y, z, 0) as u8 });
    let path = import_to(dir.path(), "wall.syg", &vol, &meta);
    let renderer = Renderer::open(&path, 1 << 28, 1 << 28).unwrap();
    let cam = look(meta.volume_aabb().center(), Vector3::new(15.0, 10.0, 150.0), 0.6, (128, 128));
    let tf = TransferFunction {
        emission_scale: 0.5,
        opacity_scale: 0.5,
        ..TransferFunction::linear(1)
    };
    let mut set = FrameSettings::new(tf, (128, 128));
    set.lod.force_finest = true;
    set.render.term_eps = 0.0;
    let (full, fs) = renderer.render_eye(&cam, &set, &Overlays::default()).unwrap();
    set.render.term_eps = 1e-3;
    let (cut, cs) = renderer.render_eye(&cam, &set, &Overlays::default()).unwrap();
    let diff = full
        .pixels
        .iter()
        .zip(&cut.pixels)
        .flat_map(|(a, b)| (0..4).map(move |c| (a[c] - b[c]).abs()))
        .fold(0f32, f32::max);
    let saved = 1.0 - cs.samples as f64 / fs.samples as f64;
    ensure!(diff <= 2e-3, "max difference {diff:e}");
    ensure!(saved >= 0.2, "only {:.1}% fewer samples", saved * 100.0);
    Ok(format!("max |d| = {diff:.2e}, {:.1}% fewer samples ({} vs {})", saved * 100.0, cs.samples, fs.samples))
}

fn cache_model_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cap = 40_000;
    let cache = BlockCache::new(cap);
    let mut model = LruModel::new(cap);
    let mut evictions = 0;
    for i in 0..100_000 {
        let key = BlockKey::new(0, [rng.gen_range(0..400), 0, 0]);
        if rng.gen_bool(0.5) {
            let hit = cache.get(&key).is_some();
            ensure!(hit == model.get(key), "op {i}: hit mismatch on {key:?}");
        } else {
            let size = rng.gen_range(1..12) * 100;
            let got = cache.insert(key, sized_block(key, size)).unwrap();
            let want = model.insert(key, size);
            ensure!(got == want, "op {i}: evicted {got:?}, model evicted {want:?}");
            evictions += got.len();
        }
        ensure!(cache.resident_bytes() <= cap, "op {i}: {} bytes over budget {cap}", cache.resident_bytes());
        ensure!(cache.resident_bytes() == model.bytes(), "op {i}: byte count diverged");
    }
    ensure!(cache.peak_bytes() <= cap, "peak {} over budget", cache.peak_bytes());
    Ok(format!("100000 ops, {evictions} evictions identical to the reference"))
}

fn container_resumability() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let meta = VolumeMeta::new([32; 3], 1, 8, [1.0; 3], 8).unwrap();
    let vol = blob_scene(meta.dims, 6, 3);
    let full = import_to(dir.path(), "full.syg", &vol, &meta);
    let reference = std::fs::read(&full).unwrap();
    let handle = ContainerHandle::open(&full).unwrap();
    let mut offsets: Vec<usize> = handle.index().entries().iter().map(|(_, o)| *o as usize).collect();
    let footer = u64::from_le_bytes(reference[reference.len() - 12..reference.len() - 4].try_into().unwrap()) as usize;
    offsets.push(footer);
    let mut cuts = offsets.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let i = rng.gen_range(0..offsets.len() - 1);
        cuts.push(rng.gen_range(offsets[i] + 1..offsets[i + 1]));
    }
    ensure!(offsets[0] == HEADER_LEN as usize, "first chunk not right after the header");
    let part = dir.path().join("part.syg");
    for &cut in &cuts {
        std::fs::write(&part, &reference[..cut]).unwrap();
        import_volume(&vol, &meta, &part).unwrap();
        ensure!(std::fs::read(&part).unwrap() == reference, "cut at byte {cut} resumed differently");
    }
    Ok(format!("{} chunk boundaries + 10 mid-chunk cuts byte-identical", offsets.len()))
}

fn out_of_core_budget() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let meta = VolumeMeta::new([512; 3], 1, 8, [1.0; 3], 64).unwrap();
    let path = import_to(dir.path(), "big.syg", &blob_scene(meta.dims, 32, 1), &meta);
    let budget = 64 << 20;
    let renderer = Renderer::open(&path, 256 << 20, budget).unwrap();
    // Close orbit: the full-detail working set exceeds the budget.
    let cam = orbit_camera(&meta, 1.3, 45f64.to_radians(), 160);
    let mut set = blob_settings(160);
    set.max_load_rounds = 0;
    let report = bench_orbit(&renderer, &cam, &meta.volume_aabb().center(), 30, &set, &Overlays::default()).unwrap();
    let finest_bytes = meta.level_blocks(0).count() * meta.block_bytes();
    ensure!(report.frames.len() == 30, "{} frames", report.frames.len());
    ensure!(report.render_peak_bytes <= budget, "peak {} > budget {budget}", report.render_peak_bytes);
    ensure!(report.within_budget, "memory cache over budget");
    ensure!(report.checksum_errors == 0, "{} checksum errors", report.checksum_errors);
    let rendered: Vec<usize> = report.frames.iter().map(|f| f.blocks_rendered).collect();
    Ok(format!(
        "30 frames, peak {:.1} MiB of {} MiB (level 0 alone is {} MiB), 0 checksum errors, cold first frame {} blocks, then {}..{} blocks/frame",
        report.render_peak_bytes as f64 / (1 << 20) as f64,
        budget >> 20,
        finest_bytes >> 20,
        rendered[0],
        rendered[1..].iter().min().unwrap(),
        rendered[1..].iter().max().unwrap()
    ))
}

fn wrapped_space_economy() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let (path, meta) = blob_container(dir.path());
    let renderer = Renderer::open(&path, 1 << 28, 1 << 28).unwrap();
    let size = 256;
    let cam = orbit_camera(&meta, 1.2 / (22.5f64.to_radians()).sin(), 45f64.to_radians(), size);
    let plain = blob_settings(size);
    let mut warped = plain.clone();
    warped.warp = WarpMap::radial_scaled(0.5, 0.0, 0.75, (size, size)).unwrap();
    let (a, sa) = renderer.render_eye(&cam, &plain, &Overlays::default()).unwrap();
    let (b, sb) = renderer.render_eye(&cam, &warped, &Overlays::default()).unwrap();
    let saved = 1.0 - sb.rays as f64 / sa.rays as f64;
    let db = psnr(&a, &b).unwrap();
    ensure!(saved >= 0.4, "only {:.1}% fewer rays", saved * 100.0);
    ensure!(db >= 35.0, "PSNR {db:.2} dB");
    Ok(format!("{:.1}% fewer rays ({} vs {}), PSNR {db:.2} dB", saved * 100.0, sb.rays, sa.rays))
}

fn compositing() -> Check {
    const VALUE: u8 = 204;
    let meta = VolumeMeta::new([32; 3], 1, 8, [1.0; 3], 16).unwrap();
    let vol = Volume::from_fn_u8(meta.dims, 1, |_, _, _, _| VALUE);
    let cam = Camera::look_at(Point3::new(16.0, 16.0, -40.0), Point3::new(16.0, 16.0, 16.0), Vector3::y(), 0.5, (33, 33), 0.1, 1e3).unwrap();
    let e = 0.02;
    let mut set = FrameSettings::new(
        TransferFunction {
            emission_scale: e,
            opacity_scale: 0.0,
            ..TransferFunction::linear(1)
        },
        (33, 33),
    );
    set.render = RenderOptions {
        model: OpticalModel::Emission,
        step_scale: 0.5,
        term_eps: 0.0,
    };
    let p = |x: f64, y: f64| Point3::new(x, y, 16.0);
    let mut plane = TriangleMesh::default();
    let color = [[0.3, 0.2, 0.1]; 3];
    plane.push_triangle([p(-50.0, -50.0), p(80.0, -50.0), p(80.0, 80.0)], None, color);
    plane.push_triangle([p(-50.0, -50.0), p(80.0, 80.0), p(-50.0, 80.0)], None, color);
    let scene = rasterize(&plane, &cam, &Light::default());
    let overlays = Overlays {
        meshes: vec![plane],
        guides: vec![],
    };
    let (img, _) = render_resident(&vol, &meta, &cam, &set, &overlays).unwrap();
    let (alone, _) = render_resident(&vol, &meta, &cam, &set, &Overlays::default()).unwrap();
    ensure!(alone.pixels.iter().all(|px| px[3] == 0.0), "emission layer has nonzero alpha");
    let density = VALUE as f64 / 255.0 * e;
    let mut worst: f64 = 0.0;
    let mut pixels = 0;
    for y in 0..33 {
        for x in 0..33 {
            let ray = cam.ray_through_pixel(x, y);
            let Some((t0, t1)) = meta.volume_aabb().intersect_ray(&ray) else { continue };
            let expect = density * (t1.min(scene.depth.get(x, y)) - t0);
            let got = img.get(x, y);
            let plain = alone.get(x, y);
            let sc = scene.color.get(x, y);
            for c in 0..3 {
                let want = expect + sc[c] as f64;
                worst = worst.max((got[c] as f64 - want).abs() / want);
                // Without the plane the layer adds nothing but itself.
                ensure!(plain[c] as f64 >= expect, "plane did not truncate the ray at ({x},{y})");
            }
            pixels += 1;
        }
    }
    ensure!(worst <= 0.01, "relative error {:.3}%", worst * 100.0);
    Ok(format!("{pixels} pixels within {:.4}% of truncated integral + plane, emission alpha 0", worst * 100.0))
}

fn unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn imposter_fidelity() -> Check {
    let cam = Camera::look_at(Point3::new(0.0, 0.0, 8.0), Point3::origin(), Vector3::y(), 0.6, (256, 256), 0.05, 100.0).unwrap();
    let r = 1.6;
    let s = SphereGuide {
        center: Point3::new(0.1, -0.1, 0.0),
        radius: r,
        color: [1.0; 3],
    };
    let mesh = TriangleMesh::uv_sphere(s.center, r, 100, 101, s.color);
    let a = render_annotations(&[Guide::Sphere(s)], &cam, &Light::default()).0;
    let m = rasterize(&mesh, &cam, &Light::default());
    let (mut inter, mut union, mut sq) = (0u64, 0u64, 0.0);
    for (da, dm) in a.depth.data.iter().zip(&m.depth.data) {
        match (da.is_finite(), dm.is_finite()) {
            (true, true) => {
                inter += 1;
                union += 1;
                sq += (da - dm) * (da - dm);
            }
            (false, false) => {}
            _ => union += 1,
        }
    }
    let iou = inter as f64 / union as f64;
    let rms = (sq / inter as f64).sqrt();
    ensure!(iou >= 0.99, "IoU {iou:.4}");
    ensure!(rms <= 0.005 * r, "depth RMS {:.4}% of radius", rms / r * 100.0);

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cyl = ConeGuide {
        a: Point3::new(0.0, -4.0, 0.0),
        b: Point3::new(0.0, 4.0, 0.0),
        ra: 0.7,
        rb: 0.7,
        color: [1.0; 3],
    };
    let mut cyl_err: f64 = 0.0;
    for _ in 0..500 {
        let ang = rng.gen_range(0.0..std::f64::consts::TAU);
        let dir = Vector3::new(ang.cos(), 0.0, ang.sin());
        let dist = rng.gen_range(1.0..20.0);
        let ray = Ray::new(Point3::new(0.0, rng.gen_range(-3.0..3.0), 0.0) + dir * dist, -dir);
        let t = intersect_cone(&ray, &cyl).map_or(f64::INFINITY, |h| h.t);
        cyl_err = cyl_err.max((t - (dist - 0.7)).abs());
    }
    ensure!(cyl_err <= 1e-5, "cylinder error {cyl_err:e}");

    let mut samples = 0;
    for n in 0..100 {
        let guide = if n % 2 == 0 {
            Guide::Sphere(SphereGuide {
                center: Point3::from(unit(&mut rng) * rng.gen_range(0.0..1.0)),
                radius: rng.gen_range(0.2..1.0),
                color: [1.0; 3],
            })
        } else {
            loop {
                let a = Point3::from(unit(&mut rng) * rng.gen_range(0.0..1.0));
                let c = ConeGuide {
                    a,
                    b: a + unit(&mut rng) * rng.gen_range(0.5..2.5),
                    ra: rng.gen_range(0.1..0.6),
                    rb: rng.gen_range(0.1..0.6),
                    color: [1.0; 3],
                };
                if c.is_valid() {
                    break Guide::Cone(c);
                }
            }
        };
        let pos = Point3::from(unit(&mut rng) * rng.gen_range(3.0..12.0));
        let cam = Camera::look_at(pos, Point3::from(unit(&mut rng) * 0.5), Vector3::y(), rng.gen_range(0.5..1.2), (64, 48), 0.05, 1e4).unwrap();
        let quad = imposter_for(&cam, &guide);
        for y in 0..48 {
            for x in 0..64 {
                if intersect_guide(&cam.ray_through_pixel(x, y), &guide).is_some() {
                    ensure!(quad.contains([x as f64 + 0.5, y as f64 + 0.5]), "primitive {n}: hit pixel ({x},{y}) outside its footprint");
                    samples += 1;
                }
            }
        }
    }
    Ok(format!(
        "IoU {iou:.4}, depth RMS {:.3}% of r, cylinder error {cyl_err:.1e}, {samples} hit pixels of 100 primitives contained",
        rms / r * 100.0
    ))
}

fn movie_playback() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for m in 0..10 {
        let dims = [rng.gen_range(1..40), rng.gen_range(1..40), rng.gen_range(1..20)];
        let meta = VolumeMeta::new(dims, rng.gen_range(1..3), if rng.gen_bool(0.5) { 8 } else { 16 }, [1.0; 3], 16).unwrap();
        let path = dir.path().join(format!("r{m}.syg"));
        let frames: Vec<Volume> = (0..rng.gen_range(1..4))
            .map(|_| {
                let mut v = Volume::for_meta(&meta);
                rng.fill(v.data.as_mut_slice());
                v
            })
            .collect();
        for f in &frames {
            append_frame(&path, &meta, f).unwrap();
        }
        let movie = Movie::open(&path).unwrap();
        for (i, f) in frames.iter().enumerate() {
            ensure!(movie.decode_frame(i).unwrap() == *f, "movie {m} frame {i} differs");
        }
    }

    let dims = [272, 272, 272];
    let meta = VolumeMeta::new(dims, 1, 8, [1.0; 3], 64).unwrap();
    let path = dir.path().join("big.syg");
    for seed in 0..3 {
        append_frame(&path, &meta, &blob_scene(dims, 32, seed)).unwrap();
    }
    let movie = Movie::open(&path).unwrap();
    let stats = bench_playback(&movie, 3.0, 1).unwrap();
    let fps = stats.frames_per_second;
    ensure!(fps >= 10.0, "{fps:.1} frames/s below the 10 frames/s floor");
    let target = if fps >= 25.0 { "meets" } else { "below" };
    Ok(format!(
        "10 random movies bit-exact; {:.1}M-voxel frames at {fps:.1} frames/s ({target} the 25 frames/s target), {:.0} MB/s",
        stats.frame_voxels as f64 / 1e6,
        stats.decompressed_bytes_per_second / 1e6
    ))
}

fn skeleton_files() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for t in 0..100 {
        let mut nodes: Vec<SwcNode> = Vec::new();
        let mut id = 0;
        for i in 0..rng.gen_range(1..80) {
            id += rng.gen_range(1..4);
            let parent = if i == 0 || rng.gen_bool(0.05) { -1 } else { nodes[rng.gen_range(0..nodes.len())].id };
            nodes.push(SwcNode {
                id,
                kind: rng.gen_range(0..8),
                position: [rng.gen_range(-1e4..1e4), rng.gen_range(-1e4..1e4), rng.gen_range(-1e4..1e4)],
                radius: rng.gen_range(1e-3..50.0),
                parent,
            });
        }
        let once = parse_swc(&serialize_swc(&nodes)).unwrap();
        let twice = parse_swc(&serialize_swc(&once)).unwrap();
        ensure!(once == nodes && twice == nodes, "tree {t} did not roundtrip");
    }
    let cases = [
        ("1 1 0 0 0 1 -1\n# comment\n1 1 0 0 0 1 -1\n", 3),
        ("1 1 0 0 0 1 -1\n2 1 0 0 0 1 9\n", 2),
        ("\n\n\n1 1 0 x 0 1 -1\n", 4),
        ("1 1 0 0 0 1\n", 1),
    ];
    for (text, line) in cases {
        match parse_swc(text) {
            Err(Error::Parse { kind: "swc", line: l, .. }) if l == line => {}
            other => return Err(format!("{text:?}: expected error on line {line}, got {other:?}")),
        }
    }
    Ok("100 random trees roundtrip, 4 malformed files report the right line".into())
}

