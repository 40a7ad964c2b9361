//! Ray marching for the optical models.
//!
//! Samples sit on a grid anchored at the ray's volume entry: segment `k`
//! spans `[t0 + k·step, t0 + (k+1)·step]`, clipped at the end of the ray,
//! and is sampled at its midpoint. Because the grid is fixed per ray, any
//! split of the ray into consecutive pieces that resume from the stored
//! parameter reproduces the single-pass result exactly.
//!
//! Emission-absorption compositing is front to back: the segment's emission
//! is weighted by the transmittance at the segment start, then the
//! transmittance is attenuated by `exp(-ρ·Δt)`. The scheme is first-order in
//! the step.

use crate::geometry::Ray;

use super::field::{gradient, Field, MAX_CHANNELS};
use super::transfer::TransferFunction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpticalModel {
    Emission,
    EmissionAbsorption,
    MaximumIntensity,
}

impl OpticalModel {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "emission" => Some(OpticalModel::Emission),
            "emission_absorption" => Some(OpticalModel::EmissionAbsorption),
            "mip" => Some(OpticalModel::MaximumIntensity),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OpticalModel::Emission => "emission",
            OpticalModel::EmissionAbsorption => "emission_absorption",
            OpticalModel::MaximumIntensity => "mip",
        }
    }
}

/// Per-ray accumulator, persisted between passes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayState {
    pub rgb: [f64; 3],
    /// Accumulated optical depth; transmittance is `exp(-alpha)`.
    pub alpha: f64,
    /// Ray parameter up to which the ray has been integrated.
    pub t: f64,
    pub terminated: bool,
    pub samples: u64,
}

impl Default for RayState {
    fn default() -> Self {
        RayState {
            rgb: [0.0; 3],
            alpha: 0.0,
            t: f64::NEG_INFINITY,
            terminated: false,
            samples: 0,
        }
    }
}

impl RayState {
    pub fn transmittance(&self) -> f64 {
        (-self.alpha).exp()
    }

    /// Premultiplied RGBA with `A = 1 - exp(-alpha)`.
    pub fn rgba(&self) -> [f32; 4] {
        [
            self.rgb[0] as f32,
            self.rgb[1] as f32,
            self.rgb[2] as f32,
            (1.0 - self.transmittance()) as f32,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarchParams {
    pub model: OpticalModel,
    pub step: f64,
    /// Emission-absorption rays stop once transmittance drops below this.
    /// Zero disables early termination.
    pub term_eps: f64,
}

/// The portion of a ray to integrate in one call.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Span {
    /// Anchor of the sample grid (the volume entry parameter).
    pub grid_origin: f64,
    /// Ray end: volume exit, clipped by any opaque depth.
    pub end: f64,
    /// Segments whose midpoint lies in `[owner_start, owner_end)` are sampled
    /// by this call.
    pub owner_start: f64,
    pub owner_end: f64,
}

impl Span {
    pub fn whole(grid_origin: f64, end: f64) -> Self {
        Span {
            grid_origin,
            end,
            owner_start: f64::NEG_INFINITY,
            owner_end: f64::INFINITY,
        }
    }
}

/// Snap tolerance, in units of steps, for recognizing a grid point.
const GRID_SNAP: f64 = 1e-6;

/// The next segment starting at `t`: up to the following grid point.
#[inline]
pub fn segment_after(t: f64, origin: f64, step: f64) -> (f64, f64) {
    let x = (t - origin) / step;
    let k = x.round();
    if (x - k).abs() < GRID_SNAP {
        (origin + k * step, origin + (k + 1.0) * step)
    } else {
        (t, origin + x.ceil() * step)
    }
}

/// Advances `state` through the owned part of `span`.
pub fn march(state: &mut RayState, ray: &Ray, field: &dyn Field, tf: &TransferFunction, params: &MarchParams, span: &Span) {
    if state.t < span.grid_origin {
        state.t = span.grid_origin;
    }
    let channels = field.channels();
    let step = params.step;
    let need_grad = tf.needs_gradient();
    while !state.terminated && state.t < span.end {
        let (s0, s1) = segment_after(state.t, span.grid_origin, step);
        let s1 = s1.min(span.end);
        if s1 <= s0 {
            // Rounding left no room for another segment.
            state.t = span.end;
            break;
        }
        let mid = 0.5 * (s0 + s1);
        if mid >= span.owner_end {
            break;
        }
        if mid < span.owner_start {
            // Skip ahead to the grid cell containing the owner start.
            let k = ((span.owner_start - span.grid_origin) / step).floor();
            let jump = span.grid_origin + k * step;
            state.t = if jump > s1 { jump } else { s1 };
            continue;
        }
        let dt = s1 - s0;
        let p = ray.at(mid);
        let values = field.sample(&p);
        let grad_mag = need_grad.then(|| {
            let g = gradient(field, &p);
            let mut m = [0.0; MAX_CHANNELS];
            for c in 0..channels.min(MAX_CHANNELS) {
                m[c] = g[c].norm();
            }
            m
        });
        let (emit, rho) = tf.eval(&values, channels, grad_mag.as_ref(), mid);
        match params.model {
            OpticalModel::Emission => {
                for (acc, e) in state.rgb.iter_mut().zip(emit) {
                    *acc += e * dt;
                }
            }
            OpticalModel::EmissionAbsorption => {
                let trans = state.transmittance();
                for (acc, e) in state.rgb.iter_mut().zip(emit) {
                    *acc += trans * e * dt;
                }
                state.alpha += rho * dt;
                if state.transmittance() < params.term_eps {
                    state.terminated = true;
                }
            }
            OpticalModel::MaximumIntensity => {
                for (acc, e) in state.rgb.iter_mut().zip(emit) {
                    *acc = acc.max(e);
                }
            }
        }
        state.samples += 1;
        state.t = s1;
    }
}

/// Integrates the whole ray against `field` within the field's bounds,
/// optionally stopping at `max_t`.
pub fn integrate_ray(ray: &Ray, field: &dyn Field, tf: &TransferFunction, params: &MarchParams, max_t: f64) -> RayState {
    let mut state = RayState::default();
    if let Some((t0, t1)) = field.bounds().intersect_ray(ray) {
        let end = t1.min(max_t);
        if end > t0 {
            march(&mut state, ray, field, tf, params, &Span::whole(t0, end));
        }
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Aabb;
    use nalgebra::{Point3, Vector3};

    struct Constant(f64);

    impl Field for Constant {
        fn channels(&self) -> usize {
            1
        }
        fn bounds(&self) -> Aabb {
            Aabb::new(Point3::origin(), Point3::new(1.0, 1.0, 1.0))
        }
        fn spacing(&self) -> Vector3<f64> {
            Vector3::repeat(0.1)
        }
        fn sample(&self, p: &Point3<f64>) -> [f64; 4] {
            if self.bounds().contains(p) {
                [self.0, 0.0, 0.0, 0.0]
            } else {
                [0.0; 4]
            }
        }
    }

    fn x_ray() -> Ray {
        Ray::new(Point3::new(-1.0, 0.5, 0.5), Vector3::x())
    }

    #[test]
    fn constant_emission_is_exact() {
        let tf = TransferFunction::default();
        let params = MarchParams {
            model: OpticalModel::Emission,
            step: 0.3,
            term_eps: 0.0,
        };
        let s = integrate_ray(&x_ray(), &Constant(1.0), &tf, &params, f64::INFINITY);
        assert!((s.rgb[0] - 1.0).abs() < 1e-12);
        assert_eq!(s.alpha, 0.0);
        assert_eq!(s.samples, 4);
    }

    #[test]
    fn missing_ray_is_black() {
        let tf = TransferFunction::default();
        let params = MarchParams {
            model: OpticalModel::EmissionAbsorption,
            step: 0.1,
            term_eps: 1e-3,
        };
        let ray = Ray::new(Point3::new(-1.0, 5.0, 0.5), Vector3::x());
        assert_eq!(integrate_ray(&ray, &Constant(1.0), &tf, &params, f64::INFINITY), RayState::default());
    }

    #[test]
    fn segment_grid_snaps() {
        assert_eq!(segment_after(0.0, 0.0, 0.5), (0.0, 0.5));
        assert_eq!(segment_after(0.2, 0.0, 0.5), (0.2, 0.5));
        let (a, b) = segment_after(1.5 + 1e-12, 0.0, 0.5);
        assert_eq!((a, b), (1.5, 2.0));
    }

    #[test]
    fn split_at_grid_point_equals_whole() {
        let tf = TransferFunction {
            opacity_scale: 3.0,
            ..Default::default()
        };
        let params = MarchParams {
            model: OpticalModel::EmissionAbsorption,
            step: 0.05,
            term_eps: 0.0,
        };
        let ray = x_ray();
        let whole = integrate_ray(&ray, &Constant(0.7), &tf, &params, f64::INFINITY);
        let mut split = RayState::default();
        for (lo, hi) in [(f64::NEG_INFINITY, 1.4), (1.4, f64::INFINITY)] {
            let span = Span {
                grid_origin: 1.0,
                end: 2.0,
                owner_start: lo,
                owner_end: hi,
            };
            march(&mut split, &ray, &Constant(0.7), &tf, &params, &span);
        }
        assert_eq!(whole, split);
    }
}
