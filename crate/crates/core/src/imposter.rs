//! Analytic annotation primitives (spheres and round cones) drawn through
//! camera-facing screen footprints, plus SWC skeleton files.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use crate::camera::Camera;
use crate::compositor::{in_convex_polygon, pixel_span, Light, Scene, AMBIENT};
use crate::error::{Error, Result};
use crate::geometry::Ray;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereGuide {
    pub center: Point3<f64>,
    pub radius: f64,
    pub color: [f64; 3],
}

/// The envelope of spheres interpolated from `(a, ra)` to `(b, rb)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConeGuide {
    pub a: Point3<f64>,
    pub b: Point3<f64>,
    pub ra: f64,
    pub rb: f64,
    pub color: [f64; 3],
}

impl ConeGuide {
    /// A tangent cone exists only if neither end sphere swallows the other.
    pub fn is_valid(&self) -> bool {
        self.ra > 0.0 && self.rb > 0.0 && (self.b - self.a).norm() > (self.ra - self.rb).abs()
    }

    pub fn end_spheres(&self) -> [SphereGuide; 2] {
        [
            SphereGuide {
                center: self.a,
                radius: self.ra,
                color: self.color,
            },
            SphereGuide {
                center: self.b,
                radius: self.rb,
                color: self.color,
            },
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Guide {
    Sphere(SphereGuide),
    Cone(ConeGuide),
}

impl Guide {
    pub fn color(&self) -> [f64; 3] {
        match self {
            Guide::Sphere(s) => s.color,
            Guide::Cone(c) => c.color,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub normal: Vector3<f64>,
}

const T_MIN: f64 = 1e-9;

/// Nearest intersection in front of the ray origin.
pub fn intersect_sphere(ray: &Ray, s: &SphereGuide) -> Option<Hit> {
    let oc = ray.origin - s.center;
    let b = oc.dot(&ray.dir);
    let c = oc.norm_squared() - s.radius * s.radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    // Stable form of the smaller root.
    let t0 = if b > 0.0 { -b - root } else { c / (-b + root) };
    let t1 = if b > 0.0 { c / (-b - root) } else { -b + root };
    let (near, far) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
    let t = if near > T_MIN {
        near
    } else if far > T_MIN {
        far
    } else {
        return None;
    };
    Some(Hit {
        t,
        normal: (ray.at(t) - s.center) / s.radius,
    })
}

/// Nearest intersection with the lateral surface of the round cone. Hits
/// outside the stretch between the two tangency circles are rejected; the
/// end spheres cover the caps.
pub fn intersect_cone(ray: &Ray, cone: &ConeGuide) -> Option<Hit> {
    if !cone.is_valid() {
        return None;
    }
    let axis = cone.b - cone.a;
    let len = axis.norm();
    let a = axis / len;
    let sin_phi = (cone.ra - cone.rb) / len;
    let cos2 = 1.0 - sin_phi * sin_phi;
    let w = ray.origin - cone.a;
    let x0 = w.dot(&a);
    let xd = ray.dir.dot(&a);
    let wd = w.dot(&ray.dir);
    let ww = w.norm_squared();
    let lead = cone.ra - x0 * sin_phi;
    let k2 = cos2 - xd * xd;
    let k1 = cos2 * (wd - x0 * xd) + sin_phi * xd * lead;
    let k0 = cos2 * (ww - x0 * x0) - lead * lead;

    let mut roots = [f64::NAN; 2];
    if k2.abs() < 1e-12 {
        if k1.abs() < 1e-300 {
            return None;
        }
        roots[0] = -k0 / (2.0 * k1);
    } else {
        let disc = k1 * k1 - k2 * k0;
        if disc < 0.0 {
            return None;
        }
        let root = disc.sqrt();
        let q = -(k1 + k1.signum() * root);
        let (r0, r1) = if q != 0.0 { (q / k2, k0 / q) } else { (-k1 / k2, -k1 / k2) };
        roots = if r0 <= r1 { [r0, r1] } else { [r1, r0] };
    }
    let x_lo = cone.ra * sin_phi;
    let x_hi = len + cone.rb * sin_phi;
    for t in roots {
        if !(t > T_MIN) {
            continue;
        }
        let x = x0 + t * xd;
        if x < x_lo || x > x_hi || cone.ra - x * sin_phi < 0.0 {
            continue;
        }
        let p = ray.at(t);
        let radial = (p - cone.a) - a * x;
        let rho = radial.norm();
        if rho == 0.0 {
            continue;
        }
        let normal = a * sin_phi + radial / rho * cos2.sqrt();
        return Some(Hit { t, normal });
    }
    None
}

/// Screen region a primitive may cover: a convex polygon in pixel
/// coordinates, the whole viewport, or nothing.
#[derive(Clone, Debug, PartialEq)]
pub enum Footprint {
    Polygon(Vec<[f64; 2]>),
    FullScreen,
    Empty,
}

/// Camera-facing proxy geometry for one primitive.
#[derive(Clone, Debug, PartialEq)]
pub struct ImposterQuad {
    /// World-space corners of the proxy plane (empty for fallbacks).
    pub corners: Vec<Point3<f64>>,
    pub footprint: Footprint,
}

impl ImposterQuad {
    fn full_screen() -> Self {
        ImposterQuad {
            corners: Vec::new(),
            footprint: Footprint::FullScreen,
        }
    }

    fn empty() -> Self {
        ImposterQuad {
            corners: Vec::new(),
            footprint: Footprint::Empty,
        }
    }

    /// Area of the footprint in pixels (the whole viewport for fallbacks).
    pub fn screen_area(&self, camera: &Camera) -> f64 {
        match &self.footprint {
            Footprint::Polygon(p) => polygon_area(p),
            Footprint::FullScreen => camera.width as f64 * camera.height as f64,
            Footprint::Empty => 0.0,
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        match &self.footprint {
            Footprint::Polygon(poly) => in_convex_polygon(poly, p),
            Footprint::FullScreen => true,
            Footprint::Empty => false,
        }
    }
}

pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let mut s = 0.0;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        s += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * s.abs()
}

/// Half-extent of a sphere's silhouette in the plane through its center
/// facing the viewer, at distance `d` from the eye.
pub fn silhouette_half_extent(radius: f64, d: f64) -> f64 {
    radius * d / (d * d - radius * radius).sqrt()
}

/// An orthonormal pair spanning the plane perpendicular to `w`, aligned with
/// the camera's up axis where possible.
fn facing_basis(w: &Vector3<f64>, camera: &Camera) -> (Vector3<f64>, Vector3<f64>) {
    let mut u = w.cross(&camera.up());
    if u.norm() < 1e-9 {
        u = w.cross(&camera.right());
    }
    let u = u.normalize();
    (u, u.cross(w))
}

/// Square proxy perpendicular to the eye→center direction, through the
/// center, with the exact silhouette half-extent: the silhouette cone cuts
/// that plane in the square's inscribed circle.
pub fn quad_for_sphere(camera: &Camera, sphere: &SphereGuide) -> ImposterQuad {
    let to_center = sphere.center - camera.position;
    let d = to_center.norm();
    if d <= sphere.radius {
        return ImposterQuad::full_screen();
    }
    let w = to_center / d;
    let h = silhouette_half_extent(sphere.radius, d);
    let (u, v) = facing_basis(&w, camera);
    let corners: Vec<Point3<f64>> = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
        .iter()
        .map(|(a, b)| sphere.center + u * (a * h) + v * (b * h))
        .collect();
    let Some(bounds) = sphere_screen_bounds(camera, sphere) else {
        return ImposterQuad::empty();
    };
    let bounds = match bounds {
        SilhouetteBounds::Box(b) => b,
        SilhouetteBounds::Unbounded => return ImposterQuad::full_screen(),
    };
    let mut screen = Vec::with_capacity(4);
    for c in &corners {
        match camera.project(c) {
            Some((x, y, depth)) if depth > 0.0 => screen.push([x, y]),
            // Quad reaches behind the eye: fall back to the silhouette box.
            _ => {
                return ImposterQuad {
                    corners,
                    footprint: Footprint::Polygon(box_polygon(bounds)),
                }
            }
        }
    }
    ImposterQuad {
        corners,
        footprint: Footprint::Polygon(screen),
    }
}

fn box_polygon(b: [f64; 4]) -> Vec<[f64; 2]> {
    vec![[b[0], b[1]], [b[2], b[1]], [b[2], b[3]], [b[0], b[3]]]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SilhouetteBounds {
    /// `[xmin, ymin, xmax, ymax]` in pixel coordinates.
    Box([f64; 4]),
    /// The sphere reaches the eye plane; its projection is unbounded.
    Unbounded,
}

/// Exact screen bounding box of a sphere's silhouette, from the planes
/// through the eye tangent to the sphere. `None` if wholly behind the eye.
pub fn sphere_screen_bounds(camera: &Camera, sphere: &SphereGuide) -> Option<SilhouetteBounds> {
    let c = camera.to_camera(&sphere.center);
    let r = sphere.radius;
    if c.z >= r {
        return None;
    }
    if c.z > -r {
        return Some(SilhouetteBounds::Unbounded);
    }
    // Planes x = m z tangent to the sphere: m²(cz²−r²) − 2 cx cz m + cx² − r² = 0.
    let tangent_slopes = |cx: f64| -> (f64, f64) {
        let qa = c.z * c.z - r * r;
        let qb = -2.0 * cx * c.z;
        let qc = cx * cx - r * r;
        let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
        ((-qb - disc) / (2.0 * qa), (-qb + disc) / (2.0 * qa))
    };
    let t = camera.tan_half_vfov();
    let (w, h) = (camera.width as f64, camera.height as f64);
    // A point on x = m z has x/depth = −m.
    let (mx0, mx1) = tangent_slopes(c.x);
    let (my0, my1) = tangent_slopes(c.y);
    let px = |m: f64| (-m / (t * camera.aspect()) + 1.0) * 0.5 * w;
    let py = |m: f64| (1.0 + m / t) * 0.5 * h;
    let (xa, xb) = (px(mx0), px(mx1));
    let (ya, yb) = (py(my0), py(my1));
    Some(SilhouetteBounds::Box([xa.min(xb), ya.min(yb), xa.max(xb), ya.max(yb)]))
}

/// Signed distance to the round cone (negative inside).
fn round_cone_distance(p: &Point3<f64>, cone: &ConeGuide) -> f64 {
    let axis = cone.b - cone.a;
    let len = axis.norm();
    let a = axis / len;
    let sin_phi = (cone.ra - cone.rb) / len;
    let cos_phi = (1.0 - sin_phi * sin_phi).sqrt();
    let w = p - cone.a;
    let x = w.dot(&a);
    let rho = (w - a * x).norm();
    // Project onto the tangent line in the (x, ρ) half plane.
    let s = x * cos_phi - rho * sin_phi;
    if s < 0.0 {
        w.norm() - cone.ra
    } else if s > len * cos_phi {
        (p - cone.b).norm() - cone.rb
    } else {
        x * sin_phi + rho * cos_phi - cone.ra
    }
}

/// Cage for a round cone: the screen bounding box of the two end spheres'
/// silhouettes. The cone lies in the convex hull of its end spheres, so this
/// box contains its projection.
pub fn cage_for_cone(camera: &Camera, cone: &ConeGuide) -> ImposterQuad {
    if round_cone_distance(&camera.position, cone) <= 0.0 {
        return ImposterQuad::full_screen();
    }
    let mut bb = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    let mut any = false;
    let mut behind = false;
    for s in cone.end_spheres() {
        match sphere_screen_bounds(camera, &s) {
            None => behind = true,
            Some(SilhouetteBounds::Unbounded) => return ImposterQuad::full_screen(),
            Some(SilhouetteBounds::Box(b)) => {
                any = true;
                bb = [bb[0].min(b[0]), bb[1].min(b[1]), bb[2].max(b[2]), bb[3].max(b[3])];
            }
        }
    }
    match (any, behind) {
        (false, _) => ImposterQuad::empty(),
        // One end in front and one behind the eye: the cone crosses the eye
        // plane and its projection is unbounded.
        (true, true) => ImposterQuad::full_screen(),
        (true, false) => {
            let mid = Point3::from((cone.a.coords + cone.b.coords) * 0.5);
            let dist = (mid - camera.position).norm();
            let corners = [[bb[0], bb[1]], [bb[2], bb[1]], [bb[2], bb[3]], [bb[0], bb[3]]]
                .iter()
                .map(|c| {
                    let ray = camera.ray_through_normalized(c[0] / camera.width as f64, c[1] / camera.height as f64);
                    ray.at(dist)
                })
                .collect();
            ImposterQuad {
                corners,
                footprint: Footprint::Polygon(box_polygon(bb)),
            }
        }
    }
}

pub fn imposter_for(camera: &Camera, guide: &Guide) -> ImposterQuad {
    match guide {
        Guide::Sphere(s) => quad_for_sphere(camera, s),
        Guide::Cone(c) => cage_for_cone(camera, c),
    }
}

pub fn intersect_guide(ray: &Ray, guide: &Guide) -> Option<Hit> {
    match guide {
        Guide::Sphere(s) => intersect_sphere(ray, s),
        Guide::Cone(c) => intersect_cone(ray, c),
    }
}

#[derive(Clone, Debug, Default, PartialEq, serde::Serialize)]
pub struct AnnotationStats {
    pub primitives: usize,
    pub pixels_tested: u64,
    pub pixels_hit: u64,
}

fn draw_guide(guide: &Guide, camera: &Camera, l: &Vector3<f64>, scene: &mut Scene, stats: &mut AnnotationStats) {
    let quad = imposter_for(camera, guide);
    let (w, h) = (camera.width, camera.height);
    let (xs, xe, ys, ye) = match &quad.footprint {
        Footprint::Empty => return,
        Footprint::FullScreen => (0, w, 0, h),
        Footprint::Polygon(poly) => {
            let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
            for p in poly {
                x0 = x0.min(p[0]);
                y0 = y0.min(p[1]);
                x1 = x1.max(p[0]);
                y1 = y1.max(p[1]);
            }
            let (xs, xe) = pixel_span(x0, x1, w);
            let (ys, ye) = pixel_span(y0, y1, h);
            (xs, xe, ys, ye)
        }
    };
    let color = guide.color();
    for y in ys..ye {
        for x in xs..xe {
            if !quad.contains([x as f64 + 0.5, y as f64 + 0.5]) {
                continue;
            }
            stats.pixels_tested += 1;
            let ray = camera.ray_through_pixel(x, y);
            let Some(hit) = intersect_guide(&ray, guide) else { continue };
            let i = (y * w + x) as usize;
            if hit.t >= scene.depth.data[i] {
                continue;
            }
            stats.pixels_hit += 1;
            let shade = AMBIENT + (1.0 - AMBIENT) * hit.normal.dot(l).max(0.0);
            scene.depth.data[i] = hit.t;
            scene.color.pixels[i] = [
                (color[0] * shade) as f32,
                (color[1] * shade) as f32,
                (color[2] * shade) as f32,
                1.0,
            ];
        }
    }
}

/// Draws every guide into a color layer (alpha 1 on hits) and a distance
/// buffer. Guides are split into contiguous chunks rendered in parallel and
/// merged by depth, ties going to the earlier chunk, so the output does not
/// depend on the worker count.
pub fn render_annotations(guides: &[Guide], camera: &Camera, light: &Light) -> (Scene, AnnotationStats) {
    let (w, h) = (camera.width, camera.height);
    let l = light.towards_light(camera);
    if guides.is_empty() {
        return (Scene::empty(w, h), AnnotationStats::default());
    }
    let chunk = guides.len().div_ceil(rayon::current_num_threads().max(1)).max(1);
    let parts: Vec<(Scene, AnnotationStats)> = guides
        .par_chunks(chunk)
        .map(|part| {
            let mut scene = Scene::empty(w, h);
            let mut stats = AnnotationStats::default();
            for g in part {
                draw_guide(g, camera, &l, &mut scene, &mut stats);
            }
            stats.primitives = part.len();
            (scene, stats)
        })
        .collect();
    let mut iter = parts.into_iter();
    let (mut scene, mut stats) = iter.next().expect("at least one chunk");
    for (s, st) in iter {
        scene.merge(&s).expect("equal sizes");
        stats.primitives += st.primitives;
        stats.pixels_tested += st.pixels_tested;
        stats.pixels_hit += st.pixels_hit;
    }
    (scene, stats)
}

/// One SWC record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwcNode {
    pub id: i64,
    pub kind: i32,
    pub position: [f64; 3],
    pub radius: f64,
    /// `-1` for a root.
    pub parent: i64,
}

/// Parses SWC text: `id type x y z radius parent` per line, `#` comments.
/// Parents must appear before their children.
pub fn parse_swc(text: &str) -> Result<Vec<SwcNode>> {
    let mut nodes = Vec::new();
    let mut seen: HashMap<i64, usize> = HashMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let bad = |message: String| Error::Parse {
            kind: "swc",
            line: line_no,
            message,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(bad(format!("expected 7 fields, got {}", fields.len())));
        }
        let int = |i: usize, name: &str| -> Result<i64> {
            fields[i].parse().map_err(|_| bad(format!("{name} {:?} is not an integer", fields[i])))
        };
        let num = |i: usize, name: &str| -> Result<f64> {
            let v: f64 = fields[i].parse().map_err(|_| bad(format!("{name} {:?} is not a number", fields[i])))?;
            if !v.is_finite() {
                return Err(bad(format!("{name} must be finite")));
            }
            Ok(v)
        };
        let id = int(0, "id")?;
        let kind = int(1, "type")?;
        let kind = i32::try_from(kind).map_err(|_| bad(format!("type {kind} out of range")))?;
        let position = [num(2, "x")?, num(3, "y")?, num(4, "z")?];
        let radius = num(5, "radius")?;
        let parent = int(6, "parent")?;
        if radius <= 0.0 {
            return Err(bad(format!("radius must be positive, got {radius}")));
        }
        if seen.contains_key(&id) {
            return Err(bad(format!("duplicate id {id}")));
        }
        if parent != -1 && !seen.contains_key(&parent) {
            return Err(bad(format!("parent {parent} of node {id} not defined earlier")));
        }
        seen.insert(id, nodes.len());
        nodes.push(SwcNode {
            id,
            kind,
            position,
            radius,
            parent,
        });
    }
    Ok(nodes)
}

/// One node per line in file order. Floats use the shortest representation
/// that parses back to the same value.
pub fn serialize_swc(nodes: &[SwcNode]) -> String {
    let mut out = String::new();
    for n in nodes {
        let _ = writeln!(
            out,
            "{} {} {:?} {:?} {:?} {:?} {}",
            n.id, n.kind, n.position[0], n.position[1], n.position[2], n.radius, n.parent
        );
    }
    out
}

/// Colors per SWC type code.
#[derive(Clone, Debug, PartialEq)]
pub struct TypePalette {
    pub colors: HashMap<i32, [f64; 3]>,
    pub fallback: [f64; 3],
}

impl Default for TypePalette {
    fn default() -> Self {
        let colors = HashMap::from([
            (0, [0.6, 0.6, 0.6]),
            (1, [1.0, 1.0, 1.0]),
            (2, [0.25, 0.5, 1.0]),
            (3, [1.0, 0.35, 0.3]),
            (4, [1.0, 0.3, 1.0]),
        ]);
        TypePalette {
            colors,
            fallback: [1.0, 0.85, 0.2],
        }
    }
}

impl TypePalette {
    pub fn color(&self, kind: i32) -> [f64; 3] {
        self.colors.get(&kind).copied().unwrap_or(self.fallback)
    }
}

/// One sphere per node and one round cone per child→parent edge, colored
/// by the child's type. Edges without a valid tangent cone are dropped
/// (the end spheres still cover them).
pub fn guides_from_swc(nodes: &[SwcNode], palette: &TypePalette) -> (Vec<SphereGuide>, Vec<ConeGuide>) {
    let by_id: HashMap<i64, &SwcNode> = nodes.iter().map(|n| (n.id, n)).collect();
    let mut spheres = Vec::with_capacity(nodes.len());
    let mut cones = Vec::new();
    for n in nodes {
        let color = palette.color(n.kind);
        spheres.push(SphereGuide {
            center: Point3::from(n.position),
            radius: n.radius,
            color,
        });
        if let Some(p) = by_id.get(&n.parent) {
            let cone = ConeGuide {
                a: Point3::from(n.position),
                b: Point3::from(p.position),
                ra: n.radius,
                rb: p.radius,
                color,
            };
            if cone.is_valid() {
                cones.push(cone);
            }
        }
    }
    (spheres, cones)
}

pub fn load_swc(path: &Path, palette: &TypePalette) -> Result<Vec<Guide>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::at_path(path, e))?;
    let nodes = parse_swc(&text)?;
    let (spheres, cones) = guides_from_swc(&nodes, palette);
    Ok(spheres
        .into_iter()
        .map(Guide::Sphere)
        .chain(cones.into_iter().map(Guide::Cone))
        .collect())
}
