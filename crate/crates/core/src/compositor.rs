//! Opaque geometry: OBJ meshes, a software rasterizer producing color plus a
//! distance buffer, depth resampling into wrapped space, and premultiplied
//! compositing of the volume layer over the scene.

use std::path::Path;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image::FloatImage;
use crate::warp::WarpMap;

pub const AMBIENT: f64 = 0.2;
const DEFAULT_MESH_COLOR: [f64; 3] = [0.8, 0.8, 0.8];

/// Per-pixel Euclidean distance from the camera to the nearest opaque
/// surface; infinite where nothing was drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthBuffer {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl DepthBuffer {
    pub fn empty(width: u32, height: u32) -> Self {
        DepthBuffer {
            width,
            height,
            data: vec![f64::INFINITY; (width * height) as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[(y * self.width + x) as usize]
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|d| d.is_infinite())
    }
}

/// A rendered opaque layer: premultiplied color (alpha 1 where covered)
/// and the matching distances.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub color: FloatImage,
    pub depth: DepthBuffer,
}

impl Scene {
    pub fn empty(width: u32, height: u32) -> Self {
        Scene {
            color: FloatImage::new(width, height),
            depth: DepthBuffer::empty(width, height),
        }
    }

    /// Per-pixel nearest of two layers; ties keep `self`.
    pub fn merge(&mut self, other: &Scene) -> Result<()> {
        if (self.color.width, self.color.height) != (other.color.width, other.color.height) {
            return Err(Error::SizeMismatch("scene layers differ in size".into()));
        }
        for i in 0..self.depth.data.len() {
            if other.depth.data[i] < self.depth.data[i] {
                self.depth.data[i] = other.depth.data[i];
                self.color.pixels[i] = other.color.pixels[i];
            }
        }
        Ok(())
    }
}

/// Direction towards the light; `None` lights from the camera.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Light {
    pub direction: Option<Vector3<f64>>,
}

impl Light {
    pub fn towards_light(&self, camera: &Camera) -> Vector3<f64> {
        self.direction.map_or(-camera.forward(), |d| d.normalize())
    }
}

/// Triangle soup with per-corner normals and colors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub positions: Vec<Point3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub colors: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn push_triangle(&mut self, p: [Point3<f64>; 3], n: Option<[Vector3<f64>; 3]>, c: [[f64; 3]; 3]) {
        let face_n = (p[1] - p[0]).cross(&(p[2] - p[0]));
        let face_n = if face_n.norm() > 0.0 { face_n.normalize() } else { Vector3::z() };
        let base = self.positions.len() as u32;
        for i in 0..3 {
            self.positions.push(p[i]);
            let ni = n.map_or(face_n, |n| if n[i].norm() > 0.0 { n[i].normalize() } else { face_n });
            self.normals.push(ni);
            self.colors.push(c[i]);
        }
        self.triangles.push([base, base + 1, base + 2]);
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// UV sphere with roughly `2 * stacks * slices` triangles.
    pub fn uv_sphere(center: Point3<f64>, radius: f64, stacks: u32, slices: u32, color: [f64; 3]) -> Self {
        let mut mesh = TriangleMesh::default();
        let point = |i: u32, j: u32| {
            let theta = std::f64::consts::PI * i as f64 / stacks as f64;
            let phi = 2.0 * std::f64::consts::PI * j as f64 / slices as f64;
            let n = Vector3::new(theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin());
            (center + n * radius, n)
        };
        for i in 0..stacks {
            for j in 0..slices {
                let (a, na) = point(i, j);
                let (b, nb) = point(i + 1, j);
                let (c, nc) = point(i + 1, j + 1);
                let (d, nd) = point(i, j + 1);
                if i + 1 < stacks {
                    mesh.push_triangle([a, b, c], Some([na, nb, nc]), [color; 3]);
                }
                if i > 0 {
                    mesh.push_triangle([a, c, d], Some([na, nc, nd]), [color; 3]);
                }
            }
        }
        mesh
    }
}

/// Reads the `v`, `vn` and `f` records of an OBJ file. Vertices may carry an
/// RGB color after the position. Polygons are fan-triangulated; other
/// records are ignored.
pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut positions: Vec<Point3<f64>> = Vec::new();
    let mut colors: Vec<[f64; 3]> = Vec::new();
    let mut normals: Vec<Vector3<f64>> = Vec::new();
    let mut mesh = TriangleMesh::default();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let bad = |message: String| Error::Parse {
            kind: "obj",
            line: line_no,
            message,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let nums = |parts: std::str::SplitWhitespace<'_>| -> Result<Vec<f64>> {
            parts
                .map(|s| s.parse::<f64>().map_err(|_| bad(format!("{s:?} is not a number"))))
                .collect()
        };
        match tag {
            "v" => {
                let v = nums(parts)?;
                if v.len() != 3 && v.len() != 6 {
                    return Err(bad(format!("vertex needs 3 or 6 values, got {}", v.len())));
                }
                positions.push(Point3::new(v[0], v[1], v[2]));
                colors.push(if v.len() == 6 { [v[3], v[4], v[5]] } else { DEFAULT_MESH_COLOR });
            }
            "vn" => {
                let v = nums(parts)?;
                if v.len() != 3 {
                    return Err(bad(format!("normal needs 3 values, got {}", v.len())));
                }
                normals.push(Vector3::new(v[0], v[1], v[2]));
            }
            "f" => {
                let mut corners = Vec::new();
                for tok in parts {
                    let mut fields = tok.split('/');
                    let resolve = |s: Option<&str>, count: usize| -> Result<Option<usize>> {
                        match s {
                            None | Some("") => Ok(None),
                            Some(s) => {
                                let i: i64 = s.parse().map_err(|_| bad(format!("bad face index {s:?}")))?;
                                let idx = if i > 0 { i - 1 } else { count as i64 + i };
                                if i == 0 || idx < 0 || idx as usize >= count {
                                    return Err(bad(format!("face index {i} out of range")));
                                }
                                Ok(Some(idx as usize))
                            }
                        }
                    };
                    let v = resolve(fields.next(), positions.len())?.ok_or_else(|| bad("face corner without vertex".into()))?;
                    let _texcoord = fields.next();
                    let vn = resolve(fields.next(), normals.len())?;
                    corners.push((v, vn));
                }
                if corners.len() < 3 {
                    return Err(bad(format!("face needs at least 3 corners, got {}", corners.len())));
                }
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    let p = tri.map(|(v, _)| positions[v]);
                    let c = tri.map(|(v, _)| colors[v]);
                    let n = if tri.iter().all(|(_, vn)| vn.is_some()) {
                        Some(tri.map(|(_, vn)| normals[vn.unwrap()]))
                    } else {
                        None
                    };
                    mesh.push_triangle(p, n, c);
                }
            }
            _ => {}
        }
    }
    Ok(mesh)
}

pub fn load_obj(path: &Path) -> Result<TriangleMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::at_path(path, e))?;
    parse_obj(&text)
}

/// A triangle prepared for rasterization: screen-space polygon (after
/// near-plane clipping) and world-space plane for exact distances.
struct PreparedTriangle {
    index: usize,
    screen: Vec<[f64; 2]>,
    bbox: [f64; 4],
    normal: Vector3<f64>,
}

fn clip_near(cam_pts: &[Vector3<f64>; 3], near: f64) -> Vec<Vector3<f64>> {
    let inside = |p: &Vector3<f64>| -p.z >= near;
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = cam_pts[i];
        let b = cam_pts[(i + 1) % 3];
        match (inside(&a), inside(&b)) {
            (true, true) => out.push(b),
            (true, false) | (false, true) => {
                let t = (-near - a.z) / (b.z - a.z);
                let cut = a + (b - a) * t;
                out.push(cut);
                if inside(&b) {
                    out.push(b);
                }
            }
            (false, false) => {}
        }
    }
    out
}

fn prepare(mesh: &TriangleMesh, camera: &Camera) -> Vec<PreparedTriangle> {
    let mut out = Vec::with_capacity(mesh.triangles.len());
    for (index, tri) in mesh.triangles.iter().enumerate() {
        let p = tri.map(|i| mesh.positions[i as usize]);
        let normal = (p[1] - p[0]).cross(&(p[2] - p[0]));
        if normal.norm() <= f64::EPSILON * (p[1] - p[0]).norm().max(1.0) {
            continue;
        }
        let cam = p.map(|q| camera.to_camera(&q));
        let poly = clip_near(&cam, camera.near);
        if poly.len() < 3 {
            continue;
        }
        let screen: Vec<[f64; 2]> = poly
            .iter()
            .map(|c| {
                let (x, y) = camera.project_camera_space(c);
                [x, y]
            })
            .collect();
        let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for s in &screen {
            bbox[0] = bbox[0].min(s[0]);
            bbox[1] = bbox[1].min(s[1]);
            bbox[2] = bbox[2].max(s[0]);
            bbox[3] = bbox[3].max(s[1]);
        }
        out.push(PreparedTriangle {
            index,
            screen,
            bbox,
            normal: normal.normalize(),
        });
    }
    out
}

/// Whether `p` lies inside (or on the edge of) a convex polygon of either
/// winding.
pub(crate) fn in_convex_polygon(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    let mut sign = 0.0f64;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        if cross != 0.0 {
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
    }
    true
}

/// Pixel range `[lo, hi)` whose centers may fall inside `[min, max]`.
pub(crate) fn pixel_span(min: f64, max: f64, limit: u32) -> (u32, u32) {
    let lo = (min - 0.5).ceil().max(0.0);
    let hi = ((max - 0.5).floor() + 1.0).min(limit as f64);
    if hi <= lo {
        (0, 0)
    } else {
        (lo as u32, hi as u32)
    }
}

/// Rasterizes `mesh` at the camera's resolution. Distances are exact
/// ray-plane distances; color and normals are interpolated with 3D
/// barycentric weights (perspective correct).
pub fn rasterize(mesh: &TriangleMesh, camera: &Camera, light: &Light) -> Scene {
    let (w, h) = (camera.width, camera.height);
    let mut scene = Scene::empty(w, h);
    if mesh.is_empty() {
        return scene;
    }
    let tris = prepare(mesh, camera);
    let l = light.towards_light(camera);
    let band = 16usize;
    let width = w as usize;
    scene
        .color
        .pixels
        .par_chunks_mut(width * band)
        .zip(scene.depth.data.par_chunks_mut(width * band))
        .enumerate()
        .for_each(|(b, (colors, depths))| {
            let y0 = (b * band) as u32;
            let y1 = y0 + (colors.len() / width) as u32;
            for tri in &tris {
                let (ys, ye) = pixel_span(tri.bbox[1], tri.bbox[3], h);
                let (ys, ye) = (ys.max(y0), ye.min(y1));
                if ys >= ye {
                    continue;
                }
                let (xs, xe) = pixel_span(tri.bbox[0], tri.bbox[2], w);
                let t = mesh.triangles[tri.index];
                let p = t.map(|i| mesh.positions[i as usize]);
                for y in ys..ye {
                    for x in xs..xe {
                        let center = [x as f64 + 0.5, y as f64 + 0.5];
                        if !in_convex_polygon(&tri.screen, center) {
                            continue;
                        }
                        let ray = camera.ray_through_pixel(x, y);
                        let denom = tri.normal.dot(&ray.dir);
                        if denom.abs() < 1e-15 {
                            continue;
                        }
                        let dist = tri.normal.dot(&(p[0] - ray.origin)) / denom;
                        let i = ((y - y0) * w + x) as usize;
                        if !(dist > 0.0) || dist >= depths[i] {
                            continue;
                        }
                        let hit = ray.at(dist);
                        let bary = barycentric(&p, &hit, &tri.normal);
                        let mut n = Vector3::zeros();
                        let mut c = [0.0; 3];
                        for k in 0..3 {
                            let vi = t[k] as usize;
                            n += mesh.normals[vi] * bary[k];
                            for ch in 0..3 {
                                c[ch] += mesh.colors[vi][ch] * bary[k];
                            }
                        }
                        let lambert = if n.norm() > 0.0 { n.normalize().dot(&l).abs() } else { 0.0 };
                        let shade = AMBIENT + (1.0 - AMBIENT) * lambert;
                        depths[i] = dist;
                        colors[i] = [(c[0] * shade) as f32, (c[1] * shade) as f32, (c[2] * shade) as f32, 1.0];
                    }
                }
            }
        });
    scene
}

fn barycentric(p: &[Point3<f64>; 3], q: &Point3<f64>, n: &Vector3<f64>) -> [f64; 3] {
    let area = |a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>| (b - a).cross(&(c - a)).dot(n);
    let total = area(&p[0], &p[1], &p[2]);
    let b0 = area(q, &p[1], &p[2]) / total;
    let b1 = area(&p[0], q, &p[2]) / total;
    [b0, b1, 1.0 - b0 - b1]
}

/// Resamples a display-space distance buffer into wrapped space. Each
/// wrapped pixel takes the minimum over the display pixels its warped
/// footprint touches, so rays never run past a surface.
pub fn warp_depth(depth: &DepthBuffer, map: &WarpMap) -> DepthBuffer {
    let (ww, wh) = map.wrapped_size();
    if map.is_identity() && (ww, wh) == (depth.width, depth.height) {
        return depth.clone();
    }
    let (dw, dh) = (depth.width as f64, depth.height as f64);
    const EPS: f64 = 1e-9;
    let mut out = DepthBuffer::empty(ww, wh);
    out.data
        .par_chunks_mut(ww as usize)
        .enumerate()
        .for_each(|(py, row)| {
            for (px, slot) in row.iter_mut().enumerate() {
                let mut bb = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
                for (cx, cy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
                    let q = map.warp([(px as f64 + cx) / ww as f64, (py as f64 + cy) / wh as f64]);
                    bb[0] = bb[0].min(q[0] * dw);
                    bb[1] = bb[1].min(q[1] * dh);
                    bb[2] = bb[2].max(q[0] * dw);
                    bb[3] = bb[3].max(q[1] * dh);
                }
                let c = map.warp(map.wrapped_pixel_center(px as u32, py as u32));
                let cx = ((c[0] * dw).floor().max(0.0) as u32).min(depth.width - 1);
                let cy = ((c[1] * dh).floor().max(0.0) as u32).min(depth.height - 1);
                let x0 = ((bb[0] + EPS).floor().max(0.0) as u32).min(cx);
                let y0 = ((bb[1] + EPS).floor().max(0.0) as u32).min(cy);
                let x1 = ((bb[2] - EPS).ceil().min(dw) as u32).max(cx + 1);
                let y1 = ((bb[3] - EPS).ceil().min(dh) as u32).max(cy + 1);
                let mut m = f64::INFINITY;
                for y in y0..y1 {
                    for x in x0..x1 {
                        m = m.min(depth.get(x, y));
                    }
                }
                *slot = m;
            }
        });
    out
}

/// `out = vol + scene * (1 - vol_alpha)`, clamped to `[0, 1]`.
pub fn composite(volume: &FloatImage, scene: &FloatImage) -> Result<FloatImage> {
    if (volume.width, volume.height) != (scene.width, scene.height) {
        return Err(Error::SizeMismatch(format!(
            "volume layer {}x{} vs scene {}x{}",
            volume.width, volume.height, scene.width, scene.height
        )));
    }
    let pixels = volume
        .pixels
        .par_iter()
        .zip(&scene.pixels)
        .map(|(v, s)| {
            let keep = 1.0 - v[3];
            [
                (v[0] + s[0] * keep).clamp(0.0, 1.0),
                (v[1] + s[1] * keep).clamp(0.0, 1.0),
                (v[2] + s[2] * keep).clamp(0.0, 1.0),
                (v[3] + s[3] * keep).clamp(0.0, 1.0),
            ]
        })
        .collect();
    Ok(FloatImage {
        width: volume.width,
        height: volume.height,
        pixels,
    })
}
