//! Transfer functions: normalized sample values to emitted intensity (RGB)
//! and opacity density.

use std::path::Path;

use crate::error::{Error, Result};

use super::field::{Sample, MAX_CHANNELS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TfVariant {
    Linear,
    Palette,
    DepthPalette,
    GradientModulated,
}

impl TfVariant {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "linear" => TfVariant::Linear,
            "palette" => TfVariant::Palette,
            "depth_palette" => TfVariant::DepthPalette,
            "gradient_modulated" => TfVariant::GradientModulated,
            other => return Err(Error::Config(format!("unknown tf.variant {other:?}"))),
        })
    }
}

/// 256-entry RGB lookup table with entries in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Palette {
    entries: Vec<[f64; 3]>,
}

impl Palette {
    pub fn from_entries(entries: Vec<[f64; 3]>) -> Result<Self> {
        if entries.len() != 256 {
            return Err(Error::Config(format!("palette needs 256 entries, got {}", entries.len())));
        }
        if entries.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config("palette entries must lie in [0, 1]".into()));
        }
        Ok(Palette { entries })
    }

    /// Black to white.
    pub fn grayscale() -> Self {
        Palette {
            entries: (0..256).map(|i| [i as f64 / 255.0; 3]).collect(),
        }
    }

    /// Blue through green to red.
    pub fn rainbow() -> Self {
        Palette {
            entries: (0..256)
                .map(|i| {
                    let t = i as f64 / 255.0;
                    [(2.0 * t - 1.0).clamp(0.0, 1.0), 1.0 - (2.0 * t - 1.0).abs(), (1.0 - 2.0 * t).clamp(0.0, 1.0)]
                })
                .collect(),
        }
    }

    /// CSV with 256 rows of `r,g,b` in 0..=255. Blank lines and `#`
    /// comments are skipped.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut entries = Vec::with_capacity(256);
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = |message: String| Error::Parse {
                kind: "palette",
                line: n + 1,
                message,
            };
            if parts.len() != 3 {
                return Err(bad(format!("expected 3 values, got {}", parts.len())));
            }
            let mut rgb = [0.0; 3];
            for (slot, s) in rgb.iter_mut().zip(&parts) {
                let v: u8 = s.parse().map_err(|_| bad(format!("{s:?} is not an integer in 0..=255")))?;
                *slot = v as f64 / 255.0;
            }
            entries.push(rgb);
        }
        Self::from_entries(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::at_path(path, e))?;
        Self::parse_csv(&text)
    }

    #[inline]
    pub fn lookup(&self, u: f64) -> [f64; 3] {
        let i = (u.clamp(0.0, 1.0) * 255.0).round() as usize;
        self.entries[i]
    }
}

/// Default per-channel colors: white for one channel, purple/green for two,
/// RGB for three.
pub fn default_channel_colors(channels: usize) -> Vec<[f64; 3]> {
    match channels {
        1 => vec![[1.0; 3]],
        2 => vec![[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]],
        _ => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0]]
            .into_iter()
            .cycle()
            .take(channels)
            .collect(),
    }
}

/// Value window `u = clamp(scale * v + offset, 0, 1)` per channel, then a
/// variant-specific map. Emission and opacity sum over channels and are then
/// multiplied by `emission_scale` and `opacity_scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferFunction {
    pub variant: TfVariant,
    pub scale: f64,
    pub offset: f64,
    pub emission_scale: f64,
    pub opacity_scale: f64,
    pub channel_colors: Vec<[f64; 3]>,
    pub palette: Palette,
    /// Multiplier on the gradient magnitude (per world unit) before clamping
    /// to [0, 1] in the gradient-modulated variant.
    pub gradient_scale: f64,
    /// Ray distances mapped to the ends of the palette in depth mode.
    pub depth_near: f64,
    pub depth_far: f64,
}

impl Default for TransferFunction {
    fn default() -> Self {
        TransferFunction {
            variant: TfVariant::Linear,
            scale: 1.0,
            offset: 0.0,
            emission_scale: 1.0,
            opacity_scale: 1.0,
            channel_colors: default_channel_colors(1),
            palette: Palette::grayscale(),
            gradient_scale: 1.0,
            depth_near: 0.0,
            depth_far: 1.0,
        }
    }
}

impl TransferFunction {
    pub fn linear(channels: usize) -> Self {
        TransferFunction {
            channel_colors: default_channel_colors(channels),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.scale, self.offset, self.emission_scale, self.opacity_scale, self.gradient_scale]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("transfer function parameters must be finite".into()));
        }
        if self.emission_scale < 0.0 || self.opacity_scale < 0.0 || self.gradient_scale < 0.0 {
            return Err(Error::Config("emission, opacity and gradient scales must be >= 0".into()));
        }
        if self.variant == TfVariant::DepthPalette && !(self.depth_far > self.depth_near) {
            return Err(Error::Config("tf.depth_far must exceed tf.depth_near".into()));
        }
        if self.channel_colors.iter().flatten().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::Config("channel colors must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn needs_gradient(&self) -> bool {
        self.variant == TfVariant::GradientModulated
    }

    #[inline]
    pub fn window(&self, v: f64) -> f64 {
        (self.scale * v + self.offset).clamp(0.0, 1.0)
    }

    /// Emitted RGB intensity and opacity density for one sample.
    /// `gradient_mag` is required for the gradient-modulated variant and
    /// `depth` (distance along the ray) for the depth palette.
    pub fn eval(&self, values: &Sample, channels: usize, gradient_mag: Option<&[f64; MAX_CHANNELS]>, depth: f64) -> ([f64; 3], f64) {
        let mut rgb = [0.0; 3];
        let mut rho = 0.0;
        let white = [1.0; 3];
        let depth_color = match self.variant {
            TfVariant::DepthPalette => {
                let d = (depth - self.depth_near) / (self.depth_far - self.depth_near);
                self.palette.lookup(d)
            }
            _ => white,
        };
        for c in 0..channels.min(MAX_CHANNELS) {
            let u = self.window(values[c]);
            if u == 0.0 {
                continue;
            }
            let color = self.channel_colors.get(c).unwrap_or(&white);
            let (col, weight) = match self.variant {
                TfVariant::Linear => (*color, u),
                TfVariant::Palette => (self.palette.lookup(u), 1.0),
                TfVariant::DepthPalette => (depth_color, u),
                TfVariant::GradientModulated => {
                    let g = gradient_mag.map_or(0.0, |g| g[c]);
                    let m = (g * self.gradient_scale).clamp(0.0, 1.0);
                    (*color, u * m)
                }
            };
            for k in 0..3 {
                rgb[k] += col[k] * weight;
            }
            rho += match self.variant {
                TfVariant::GradientModulated => weight,
                _ => u,
            };
        }
        for v in &mut rgb {
            *v *= self.emission_scale;
        }
        (rgb, rho * self.opacity_scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_csv_errors_carry_line() {
        let mut text = String::from("# header\n");
        for i in 0..255 {
            text.push_str(&format!("{i},{i},{i}\n"));
        }
        text.push_str("1,2,300\n");
        match Palette::parse_csv(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 257),
            other => panic!("{other:?}"),
        }
        let ok = text.replace("1,2,300", "255,0,0");
        let p = Palette::parse_csv(&ok).unwrap();
        assert_eq!(p.lookup(1.0), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_value_emits_nothing() {
        for variant in [TfVariant::Linear, TfVariant::Palette, TfVariant::DepthPalette, TfVariant::GradientModulated] {
            let tf = TransferFunction {
                variant,
                ..Default::default()
            };
            let (rgb, rho) = tf.eval(&[0.0; 4], 1, Some(&[1.0; 4]), 0.5);
            assert_eq!((rgb, rho), ([0.0; 3], 0.0), "{variant:?}");
        }
    }

    #[test]
    fn gradient_modulation_suppresses_flat_regions() {
        let tf = TransferFunction {
            variant: TfVariant::GradientModulated,
            ..Default::default()
        };
        let flat = tf.eval(&[0.8, 0.0, 0.0, 0.0], 1, Some(&[0.0; 4]), 0.0);
        let edge = tf.eval(&[0.8, 0.0, 0.0, 0.0], 1, Some(&[2.0, 0.0, 0.0, 0.0]), 0.0);
        assert_eq!(flat.1, 0.0);
        assert!((edge.1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn channels_sum_with_their_colors() {
        let tf = TransferFunction::linear(2);
        let (rgb, rho) = tf.eval(&[0.5, 0.25, 0.0, 0.0], 2, None, 0.0);
        assert_eq!(rgb, [0.5, 0.25, 0.5]);
        assert_eq!(rho, 0.75);
    }
}
