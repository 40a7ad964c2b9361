//! Wrapped-space rendering: rays are cast uniformly over a smaller "wrapped"
//! image whose pixels map to view coordinates through a radial polynomial,
//! concentrating rays near the image center. The result is resampled back to
//! display space afterwards.
//!
//! The radial map works on the normalized radius `s = r / R(θ)`, where
//! `R(θ)` is the distance from the center to the unit-square boundary along
//! the point's direction, and sends it to `g(s) / g(1)` with
//! `g(s) = s (1 + k1 s² + k2 s⁴)`. Angles are preserved and the unit square
//! maps onto itself.

use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::geometry::Ray;
use crate::image::FloatImage;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WarpKind {
    Identity,
    Radial { k1: f64, k2: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarpMap {
    kind: WarpKind,
    wrapped: (u32, u32),
    output: (u32, u32),
}

fn radial_poly(s: f64, k1: f64, k2: f64) -> f64 {
    let s2 = s * s;
    s * (1.0 + k1 * s2 + k2 * s2 * s2)
}

impl WarpMap {
    pub fn identity(size: (u32, u32)) -> Self {
        WarpMap {
            kind: WarpKind::Identity,
            wrapped: size,
            output: size,
        }
    }

    /// Radial map; rejects coefficients for which the radius map is not
    /// strictly increasing on `[0, 1]`.
    pub fn radial(k1: f64, k2: f64, wrapped: (u32, u32), output: (u32, u32)) -> Result<Self> {
        if !(k1.is_finite() && k2.is_finite()) {
            return Err(Error::InvalidWarp(format!("non-finite coefficients k1={k1} k2={k2}")));
        }
        const N: usize = 2048;
        for i in 0..=N {
            let s = i as f64 / N as f64;
            let s2 = s * s;
            let slope = 1.0 + 3.0 * k1 * s2 + 5.0 * k2 * s2 * s2;
            if slope <= 0.0 {
                return Err(Error::InvalidWarp(format!(
                    "radius map not monotone for k1={k1} k2={k2} (slope {slope:.3} at r={s:.3})"
                )));
            }
        }
        if wrapped.0 == 0 || wrapped.1 == 0 || output.0 == 0 || output.1 == 0 {
            return Err(Error::InvalidWarp("image sizes must be nonzero".into()));
        }
        Ok(WarpMap {
            kind: WarpKind::Radial { k1, k2 },
            wrapped,
            output,
        })
    }

    /// Radial map whose wrapped image is `scale` times the output size.
    pub fn radial_scaled(k1: f64, k2: f64, scale: f64, output: (u32, u32)) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidWarp(format!("scale must be positive, got {scale}")));
        }
        let wrapped = (
            ((output.0 as f64 * scale).round() as u32).max(1),
            ((output.1 as f64 * scale).round() as u32).max(1),
        );
        Self::radial(k1, k2, wrapped, output)
    }

    pub fn kind(&self) -> WarpKind {
        self.kind
    }

    pub fn is_identity(&self) -> bool {
        self.kind == WarpKind::Identity
    }

    pub fn wrapped_size(&self) -> (u32, u32) {
        self.wrapped
    }

    pub fn output_size(&self) -> (u32, u32) {
        self.output
    }

    pub fn ray_count(&self) -> u64 {
        self.wrapped.0 as u64 * self.wrapped.1 as u64
    }

    /// Normalized wrapped coordinates to normalized view coordinates.
    pub fn warp(&self, p: [f64; 2]) -> [f64; 2] {
        match self.kind {
            WarpKind::Identity => p,
            WarpKind::Radial { k1, k2 } => {
                let d = [p[0] - 0.5, p[1] - 0.5];
                let s = 2.0 * d[0].abs().max(d[1].abs());
                if s == 0.0 {
                    return p;
                }
                let s_new = radial_poly(s, k1, k2) / radial_poly(1.0, k1, k2);
                let f = s_new / s;
                [0.5 + d[0] * f, 0.5 + d[1] * f]
            }
        }
    }

    /// Inverse of [`warp`](Self::warp), by bisection on the monotone radius
    /// map.
    pub fn inverse(&self, q: [f64; 2]) -> [f64; 2] {
        match self.kind {
            WarpKind::Identity => q,
            WarpKind::Radial { k1, k2 } => {
                let d = [q[0] - 0.5, q[1] - 0.5];
                let target = 2.0 * d[0].abs().max(d[1].abs());
                if target == 0.0 {
                    return q;
                }
                let norm = radial_poly(1.0, k1, k2);
                let (mut lo, mut hi) = (0.0f64, 1.0f64.max(target));
                for _ in 0..64 {
                    let mid = 0.5 * (lo + hi);
                    if radial_poly(mid, k1, k2) / norm < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-13 {
                        break;
                    }
                }
                let f = 0.5 * (lo + hi) / target;
                [0.5 + d[0] * f, 0.5 + d[1] * f]
            }
        }
    }

    /// Normalized coordinates of a wrapped pixel center.
    pub fn wrapped_pixel_center(&self, px: u32, py: u32) -> [f64; 2] {
        [
            (px as f64 + 0.5) / self.wrapped.0 as f64,
            (py as f64 + 0.5) / self.wrapped.1 as f64,
        ]
    }
}

/// Camera ray for a wrapped pixel: warp the normalized coordinate, then
/// pinhole reverse projection.
pub fn ray_for_pixel(camera: &Camera, map: &WarpMap, px: u32, py: u32) -> Ray {
    let q = map.warp(map.wrapped_pixel_center(px, py));
    camera.ray_through_normalized(q[0], q[1])
}

/// Resamples a wrapped-space image back to the display size.
pub fn unwarp_image(img: &FloatImage, map: &WarpMap, (width, height): (u32, u32)) -> FloatImage {
    if map.is_identity() && (img.width, img.height) == (width, height) {
        return img.clone();
    }
    let mut out = FloatImage::new(width, height);
    out.pixels
        .par_chunks_mut(width as usize)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, px) in row.iter_mut().enumerate() {
                let q = [(x as f64 + 0.5) / width as f64, (y as f64 + 0.5) / height as f64];
                let p = map.inverse(q);
                *px = img.sample_bilinear(p[0] * img.width as f64, p[1] * img.height as f64);
            }
        });
    out
}

/// Cosmetic lens pre-distortion of a finished image: each output pixel reads
/// the source at the radially mapped position.
pub fn barrel_distort(img: &FloatImage, k1: f64, k2: f64) -> Result<FloatImage> {
    let size = (img.width, img.height);
    let map = WarpMap::radial(k1, k2, size, size)?;
    let mut out = FloatImage::new(img.width, img.height);
    let (w, h) = (img.width as f64, img.height as f64);
    out.pixels
        .par_chunks_mut(img.width as usize)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, px) in row.iter_mut().enumerate() {
                let q = map.warp([(x as f64 + 0.5) / w, (y as f64 + 0.5) / h]);
                *px = img.sample_bilinear(q[0] * w, q[1] * h);
            }
        });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_identity() {
        let m = WarpMap::identity((10, 10));
        assert_eq!(m.warp([0.25, 0.75]), [0.25, 0.75]);
    }

    #[test]
    fn center_is_fixed() {
        for (k1, k2) in [(0.5, 0.0), (0.2, 0.3), (-0.2, 0.0)] {
            let m = WarpMap::radial(k1, k2, (8, 8), (8, 8)).unwrap();
            assert_eq!(m.warp([0.5, 0.5]), [0.5, 0.5]);
        }
    }

    #[test]
    fn radius_formula_direct_evaluation() {
        // Normalized radius 0.4 along +x: offset 0.2 from center.
        let m = WarpMap::radial(0.5, 0.0, (8, 8), (8, 8)).unwrap();
        let q = m.warp([0.7, 0.5]);
        let expected_s = 0.4 * (1.0 + 0.5 * 0.16) / 1.5;
        assert!((2.0 * (q[0] - 0.5) - expected_s).abs() < 1e-15);
        assert_eq!(q[1], 0.5);
        let back = m.inverse(q);
        assert!((back[0] - 0.7).abs() < 1e-9);
    }

    #[test]
    fn non_monotone_rejected() {
        assert!(WarpMap::radial(-0.5, 0.0, (8, 8), (8, 8)).is_err());
        assert!(WarpMap::radial(0.0, -0.3, (8, 8), (8, 8)).is_err());
        assert!(WarpMap::radial(f64::NAN, 0.0, (8, 8), (8, 8)).is_err());
    }

    #[test]
    fn square_boundary_maps_to_itself() {
        let m = WarpMap::radial(0.5, 0.1, (8, 8), (8, 8)).unwrap();
        for p in [[0.0, 0.3], [1.0, 0.9], [0.2, 0.0], [0.0, 0.0], [1.0, 1.0]] {
            let q = m.warp(p);
            let s = 2.0 * (q[0] - 0.5).abs().max((q[1] - 0.5).abs());
            assert!((s - 1.0).abs() < 1e-12, "{p:?} -> {q:?}");
        }
    }
}
