//! Pinhole camera. Camera space is right-handed and looks along −z; image
//! space has its origin at the top-left corner with y pointing down.

use nalgebra::{Point3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Ray};

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub position: Point3<f64>,
    /// Camera-to-world rotation.
    pub orientation: Rotation3<f64>,
    /// Vertical field of view in radians.
    pub vfov: f64,
    pub width: u32,
    pub height: u32,
    pub near: f64,
    pub far: f64,
}

/// A half-space `normal · p + offset >= 0` (inside).
#[derive(Clone, Copy, Debug)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Plane {
    fn through(point: &Point3<f64>, normal: Vector3<f64>) -> Self {
        let normal = normal.normalize();
        Plane {
            normal,
            offset: -normal.dot(&point.coords),
        }
    }

    #[inline]
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&p.coords) + self.offset
    }
}

impl Camera {
    pub fn new(
        position: Point3<f64>,
        orientation: Rotation3<f64>,
        vfov: f64,
        (width, height): (u32, u32),
        near: f64,
        far: f64,
    ) -> Result<Self> {
        let cam = Camera {
            position,
            orientation,
            vfov,
            width,
            height,
            near,
            far,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn look_at(
        position: Point3<f64>,
        target: Point3<f64>,
        up: Vector3<f64>,
        vfov: f64,
        size: (u32, u32),
        near: f64,
        far: f64,
    ) -> Result<Self> {
        let dir = target - position;
        if dir.norm() == 0.0 || dir.cross(&up).norm() < 1e-12 {
            return Err(Error::Config("camera look-at direction is degenerate or parallel to up".into()));
        }
        let view = Rotation3::look_at_rh(&dir, &up);
        Self::new(position, view.inverse(), vfov, size, near, far)
    }

    fn validate(&self) -> Result<()> {
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::Config(format!(
                "camera needs 0 < near < far, got near={} far={}",
                self.near, self.far
            )));
        }
        if !(self.vfov > 0.0 && self.vfov < std::f64::consts::PI) {
            return Err(Error::Config(format!("vfov must be in (0, pi), got {}", self.vfov)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image size must be at least 1x1".into()));
        }
        Ok(())
    }

    pub fn with_size(&self, width: u32, height: u32) -> Camera {
        Camera {
            width,
            height,
            ..self.clone()
        }
    }

    pub fn aspect(&self) -> f64 {
        self.width as f64 / self.height as f64
    }

    pub fn tan_half_vfov(&self) -> f64 {
        (self.vfov * 0.5).tan()
    }

    /// Angle subtended by one pixel (square pixels).
    pub fn pixel_angle(&self) -> f64 {
        self.vfov / self.height as f64
    }

    pub fn forward(&self) -> Vector3<f64> {
        self.orientation * -Vector3::z()
    }

    pub fn right(&self) -> Vector3<f64> {
        self.orientation * Vector3::x()
    }

    pub fn up(&self) -> Vector3<f64> {
        self.orientation * Vector3::y()
    }

    pub fn to_camera(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.orientation.inverse() * (p - self.position)
    }

    /// Ray through normalized image coordinates `(u, v) ∈ [0,1]²`, with
    /// `(0,0)` the top-left corner of the image.
    pub fn ray_through_normalized(&self, u: f64, v: f64) -> Ray {
        let t = self.tan_half_vfov();
        let x = (2.0 * u - 1.0) * t * self.aspect();
        let y = (1.0 - 2.0 * v) * t;
        Ray::new(self.position, self.orientation * Vector3::new(x, y, -1.0))
    }

    /// Ray through the center of pixel `(px, py)`.
    pub fn ray_through_pixel(&self, px: u32, py: u32) -> Ray {
        self.ray_through_normalized(
            (px as f64 + 0.5) / self.width as f64,
            (py as f64 + 0.5) / self.height as f64,
        )
    }

    /// Continuous pixel coordinates and camera-space depth (`-z`) of a world
    /// point, or `None` if it is not in front of the camera.
    pub fn project(&self, p: &Point3<f64>) -> Option<(f64, f64, f64)> {
        let c = self.to_camera(p);
        let depth = -c.z;
        if depth <= 0.0 {
            return None;
        }
        let t = self.tan_half_vfov();
        let x_ndc = c.x / (depth * t * self.aspect());
        let y_ndc = c.y / (depth * t);
        Some((
            (x_ndc + 1.0) * 0.5 * self.width as f64,
            (1.0 - y_ndc) * 0.5 * self.height as f64,
            depth,
        ))
    }

    /// Projection of a camera-space point (depth must be positive).
    pub fn project_camera_space(&self, c: &Vector3<f64>) -> (f64, f64) {
        let depth = -c.z;
        let t = self.tan_half_vfov();
        (
            (c.x / (depth * t * self.aspect()) + 1.0) * 0.5 * self.width as f64,
            (1.0 - c.y / (depth * t)) * 0.5 * self.height as f64,
        )
    }

    /// Inward-facing world-space frustum planes: near, far, left, right,
    /// bottom, top.
    pub fn frustum_planes(&self) -> [Plane; 6] {
        let t = self.tan_half_vfov();
        let ta = t * self.aspect();
        let fwd = self.forward();
        let o = self.position;
        let r = &self.orientation;
        // Side plane normals in camera space, pointing into the frustum.
        let left = r * Vector3::new(1.0, 0.0, -ta);
        let right = r * Vector3::new(-1.0, 0.0, -ta);
        let bottom = r * Vector3::new(0.0, 1.0, -t);
        let top = r * Vector3::new(0.0, -1.0, -t);
        [
            Plane::through(&(o + fwd * self.near), fwd),
            Plane::through(&(o + fwd * self.far), -fwd),
            Plane::through(&o, left),
            Plane::through(&o, right),
            Plane::through(&o, bottom),
            Plane::through(&o, top),
        ]
    }

    /// Whether the point lies inside the view frustum.
    pub fn sees_point(&self, p: &Point3<f64>) -> bool {
        let c = self.to_camera(p);
        let depth = -c.z;
        if depth < self.near || depth > self.far {
            return false;
        }
        let t = self.tan_half_vfov();
        c.x.abs() <= depth * t * self.aspect() && c.y.abs() <= depth * t
    }

    /// Conservative box-vs-frustum test: `false` only if the box lies wholly
    /// outside one of the six planes.
    pub fn box_visible(&self, aabb: &Aabb) -> bool {
        self.frustum_planes().iter().all(|plane| {
            // Corner furthest along the plane normal.
            let p = Point3::new(
                if plane.normal.x >= 0.0 { aabb.max.x } else { aabb.min.x },
                if plane.normal.y >= 0.0 { aabb.max.y } else { aabb.min.y },
                if plane.normal.z >= 0.0 { aabb.max.z } else { aabb.min.z },
            );
            plane.signed_distance(&p) >= 0.0
        })
    }

    /// Same camera shifted along its right axis (stereo eyes).
    pub fn shifted(&self, offset: f64) -> Camera {
        Camera {
            position: self.position + self.right() * offset,
            ..self.clone()
        }
    }

    /// Rotation about `axis` through `center` (orbit helper).
    pub fn orbited(&self, center: &Point3<f64>, axis: &Unit<Vector3<f64>>, angle: f64) -> Camera {
        let rot = Rotation3::from_axis_angle(axis, angle);
        Camera {
            position: center + rot * (self.position - center),
            orientation: rot * self.orientation,
            ..self.clone()
        }
    }
}
