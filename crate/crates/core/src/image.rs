//! Float RGBA images and their PFM/PNG encodings.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major RGBA image, top row first. Color is premultiplied by alpha.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[f32; 4]>,
}

impl FloatImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, [0.0; 4])
    }

    pub fn filled(width: u32, height: u32, value: [f32; 4]) -> Self {
        FloatImage {
            width,
            height,
            pixels: vec![value; (width * height) as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [f32; 4] {
        self.pixels[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: [f32; 4]) {
        self.pixels[(y * self.width + x) as usize] = v;
    }

    /// Bilinear lookup at continuous pixel coordinates (pixel centers at
    /// integer + 0.5), clamped to the edge.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> [f32; 4] {
        let fx = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = fx.floor();
        let y0 = fy.floor();
        let mut tx = fx - x0;
        let mut ty = fy - y0;
        // Snap near-integer positions so exact pixel centers copy exactly.
        if tx < 1e-9 {
            tx = 0.0;
        }
        if ty < 1e-9 {
            ty = 0.0;
        }
        let (x0, y0) = (x0 as u32, y0 as u32);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
        if tx == 0.0 && ty == 0.0 {
            return a;
        }
        std::array::from_fn(|i| {
            let top = a[i] as f64 * (1.0 - tx) + b[i] as f64 * tx;
            let bottom = c[i] as f64 * (1.0 - tx) + d[i] as f64 * tx;
            (top * (1.0 - ty) + bottom * ty) as f32
        })
    }

    /// Places `other` to the right of `self`.
    pub fn side_by_side(&self, other: &FloatImage) -> Result<FloatImage> {
        if self.height != other.height {
            return Err(Error::SizeMismatch(format!(
                "side-by-side needs equal heights, got {} and {}",
                self.height, other.height
            )));
        }
        let mut out = FloatImage::new(self.width + other.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(x, y, self.get(x, y));
            }
            for x in 0..other.width {
                out.set(self.width + x, y, other.get(x, y));
            }
        }
        Ok(out)
    }

    pub fn max_rgb(&self) -> f32 {
        self.pixels
            .iter()
            .flat_map(|p| p[..3].iter().copied())
            .fold(0.0, f32::max)
    }

    /// Little-endian color PFM (alpha dropped), bottom row first.
    pub fn write_pfm(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(self.pixels.len() * 12 + 32);
        write!(out, "PF\n{} {}\n-1.0\n", self.width, self.height)?;
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                for c in &self.get(x, y)[..3] {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
        }
        std::fs::write(path, out).map_err(|e| Error::at_path(path, e))
    }

    pub fn read_pfm(path: &Path) -> Result<FloatImage> {
        let file = std::fs::File::open(path).map_err(|e| Error::at_path(path, e))?;
        let mut r = BufReader::new(file);
        let mut line = String::new();
        let mut next_line = |r: &mut BufReader<std::fs::File>| -> Result<String> {
            line.clear();
            r.read_line(&mut line)?;
            Ok(line.trim().to_string())
        };
        let color = match next_line(&mut r)?.as_str() {
            "PF" => true,
            "Pf" => false,
            other => return Err(Error::Image(format!("not a PFM file (header {other:?})"))),
        };
        let dims = next_line(&mut r)?;
        let mut it = dims.split_whitespace().map(|s| s.parse::<u32>());
        let (Some(Ok(width)), Some(Ok(height))) = (it.next(), it.next()) else {
            return Err(Error::Image(format!("bad PFM dimensions {dims:?}")));
        };
        let scale: f32 = next_line(&mut r)?
            .parse()
            .map_err(|_| Error::Image("bad PFM scale".into()))?;
        let channels = if color { 3 } else { 1 };
        let mut raw = vec![0u8; (width * height) as usize * channels * 4];
        r.read_exact(&mut raw)?;
        let mut img = FloatImage::new(width, height);
        for (i, px) in raw.chunks_exact(channels * 4).enumerate() {
            let vals: Vec<f32> = px
                .chunks_exact(4)
                .map(|b| {
                    let b = [b[0], b[1], b[2], b[3]];
                    if scale < 0.0 {
                        f32::from_le_bytes(b)
                    } else {
                        f32::from_be_bytes(b)
                    }
                })
                .collect();
            let (x, y) = (i as u32 % width, height - 1 - i as u32 / width);
            let v = if color {
                [vals[0], vals[1], vals[2], 1.0]
            } else {
                [vals[0], vals[0], vals[0], 1.0]
            };
            img.set(x, y, v);
        }
        Ok(img)
    }

    /// 8-bit RGB PNG with values clamped to `[0, 1]`.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(self.pixels.len() * 3);
        for p in &self.pixels {
            for c in &p[..3] {
                buf.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        image::save_buffer(path, &buf, self.width, self.height, image::ExtendedColorType::Rgb8)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
    }
}

/// Peak signal-to-noise ratio over RGB, with the reference's brightest
/// channel value as the peak.
pub fn psnr(reference: &FloatImage, test: &FloatImage) -> Result<f64> {
    if reference.width != test.width || reference.height != test.height {
        return Err(Error::SizeMismatch(format!(
            "psnr of {}x{} vs {}x{}",
            reference.width, reference.height, test.width, test.height
        )));
    }
    let mut sum = 0.0f64;
    for (a, b) in reference.pixels.iter().zip(&test.pixels) {
        for c in 0..3 {
            let d = a[c] as f64 - b[c] as f64;
            sum += d * d;
        }
    }
    let mse = sum / (reference.pixels.len() * 3) as f64;
    let peak = reference.max_rgb() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = FloatImage::new(3, 2);
        img.set(0, 0, [0.25, 0.5, 1.5, 1.0]);
        img.set(2, 1, [1e-7, 3.0, 0.0, 1.0]);
        let p = dir.path().join("a.pfm");
        img.write_pfm(&p).unwrap();
        let back = FloatImage::read_pfm(&p).unwrap();
        for (a, b) in img.pixels.iter().zip(&back.pixels) {
            assert_eq!(a[..3], b[..3]);
        }
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"PF\n3 2\n-1.0\n"));
    }

    #[test]
    fn bilinear_at_centers_copies() {
        let mut img = FloatImage::new(2, 1);
        img.set(0, 0, [0.0; 4]);
        img.set(1, 0, [1.0; 4]);
        assert_eq!(img.sample_bilinear(0.5, 0.5), [0.0; 4]);
        assert_eq!(img.sample_bilinear(1.5, 0.5), [1.0; 4]);
        assert_eq!(img.sample_bilinear(1.0, 0.5), [0.5; 4]);
    }

    #[test]
    fn psnr_identical_is_infinite() {
        let img = FloatImage::filled(4, 4, [0.5, 0.5, 0.5, 1.0]);
        assert!(psnr(&img, &img).unwrap().is_infinite());
        let mut other = img.clone();
        other.set(0, 0, [0.6, 0.5, 0.5, 1.0]);
        let p = psnr(&img, &other).unwrap();
        // mse = 0.01 / 48, peak 0.5
        let expected = 10.0 * (0.25 / (0.01f64 / 48.0)).log10();
        assert!((p - expected).abs() < 1e-3, "{p} vs {expected}");
    }
}
