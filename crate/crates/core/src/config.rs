//! Render configuration files: `key = value` lines grouped under
//! `[section]` headers, `#` comments. Keys are addressed as
//! `section.key`; keys before the first header have no prefix.
//! Relative paths resolve against the file's directory. Unknown keys are
//! rejected so typos do not silently fall back to defaults.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};

use crate::camera::Camera;
use crate::compositor::Light;
use crate::dvr::{default_channel_colors, OpticalModel, Palette, RenderOptions, TfVariant, TransferFunction};
use crate::error::{Error, Result};
use crate::imposter::TypePalette;
use crate::octree::TraversalOptions;
use crate::warp::WarpMap;

#[derive(Clone, Debug)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed key/value pairs with usage tracking.
#[derive(Debug)]
pub struct ConfigFile {
    entries: BTreeMap<String, Entry>,
    base_dir: PathBuf,
    used: RefCell<HashSet<String>>,
}

impl ConfigFile {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let bad = |message: String| Error::Parse {
                kind: "config",
                line: line_no,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| bad("unterminated section header".into()))?;
                section = name.trim().to_string();
                if section.is_empty() {
                    return Err(bad("empty section name".into()));
                }
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("expected key = value, got {line:?}")))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(bad("empty key".into()));
            }
            let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
            let entry = Entry {
                value: v.trim().to_string(),
                line: line_no,
            };
            if let Some(prev) = entries.insert(key.clone(), entry) {
                return Err(bad(format!("{key} already set on line {}", prev.line)));
            }
        }
        Ok(ConfigFile {
            entries,
            base_dir: base_dir.into(),
            used: RefCell::new(HashSet::new()),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::at_path(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    fn raw(&self, key: &str) -> Option<&Entry> {
        let e = self.entries.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(e)
    }

    fn invalid(&self, key: &str, message: impl std::fmt::Display) -> Error {
        let line = self.entries.get(key).map_or(0, |e| e.line);
        Error::Parse {
            kind: "config",
            line,
            message: format!("{key}: {message}"),
        }
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.raw(key).map(|e| e.value.as_str())
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => match e.value.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(self.invalid(key, format!("{:?} is not a finite number", e.value))),
            },
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some(e) => match e.value.as_str() {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                other => Err(self.invalid(key, format!("{other:?} is not a boolean"))),
            },
        }
    }

    /// Comma- or whitespace-separated numbers.
    pub fn numbers(&self, key: &str, count: usize) -> Result<Option<Vec<f64>>> {
        let Some(e) = self.raw(key) else { return Ok(None) };
        let vals: Vec<f64> = e
            .value
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| self.invalid(key, format!("{:?} is not a list of numbers", e.value)))?;
        if vals.len() != count || vals.iter().any(|v| !v.is_finite()) {
            return Err(self.invalid(key, format!("expected {count} finite numbers, got {:?}", e.value)));
        }
        Ok(Some(vals))
    }

    pub fn vec3(&self, key: &str) -> Result<Option<Vector3<f64>>> {
        Ok(self.numbers(key, 3)?.map(|v| Vector3::new(v[0], v[1], v[2])))
    }

    /// `WxH` or `W,H`.
    pub fn size(&self, key: &str) -> Result<Option<(u32, u32)>> {
        let Some(e) = self.raw(key) else { return Ok(None) };
        let parts: Vec<&str> = e.value.split(['x', ',']).map(str::trim).collect();
        match parts.as_slice() {
            [w, h] => match (w.parse::<u32>(), h.parse::<u32>()) {
                (Ok(w), Ok(h)) if w > 0 && h > 0 => Ok(Some((w, h))),
                _ => Err(self.invalid(key, format!("{:?} is not a positive WxH size", e.value))),
            },
            _ => Err(self.invalid(key, format!("{:?} is not a WxH size", e.value))),
        }
    }

    /// A path relative to the config file, which must exist.
    pub fn existing_path(&self, key: &str) -> Result<Option<PathBuf>> {
        let Some(v) = self.str(key) else { return Ok(None) };
        Ok(Some(self.check_exists(key, v)?))
    }

    /// A comma-separated list of existing paths.
    pub fn existing_paths(&self, key: &str) -> Result<Vec<PathBuf>> {
        let Some(v) = self.str(key) else { return Ok(Vec::new()) };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| self.check_exists(key, s))
            .collect()
    }

    fn check_exists(&self, key: &str, v: &str) -> Result<PathBuf> {
        let p = self.resolve(v);
        if !p.exists() {
            return Err(Error::at_path(
                &p,
                std::io::Error::new(std::io::ErrorKind::NotFound, format!("{key} refers to a missing file")),
            ));
        }
        Ok(p)
    }

    /// A path relative to the config file (need not exist).
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.str(key).map(|v| self.resolve(v))
    }

    fn resolve(&self, v: &str) -> PathBuf {
        let p = PathBuf::from(v);
        if p.is_absolute() {
            p
        } else {
            self.base_dir.join(p)
        }
    }

    /// Keys under `prefix` (e.g. all `tf.color.*`), marking them used.
    pub fn keys_with_prefix(&self, prefix: &str) -> Vec<String> {
        self.entries.keys().filter(|k| k.starts_with(prefix)).cloned().collect()
    }

    /// Fails on the first key that was never read.
    pub fn reject_unknown(&self) -> Result<()> {
        let used = self.used.borrow();
        match self.entries.iter().find(|(k, _)| !used.contains(*k)) {
            None => Ok(()),
            Some((k, e)) => Err(Error::Parse {
                kind: "config",
                line: e.line,
                message: format!("unknown key {k}"),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraConfig {
    pub position: Point3<f64>,
    pub look_at: Point3<f64>,
    pub up: Vector3<f64>,
    /// Degrees.
    pub vfov: f64,
    pub size: (u32, u32),
    pub near: f64,
    pub far: f64,
}

impl CameraConfig {
    pub fn camera(&self) -> Result<Camera> {
        Camera::look_at(
            self.position,
            self.look_at,
            self.up,
            self.vfov.to_radians(),
            self.size,
            self.near,
            self.far,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WarpConfig {
    Identity,
    Radial { k1: f64, k2: f64, scale: f64 },
}

impl WarpConfig {
    pub fn map(&self, output: (u32, u32)) -> Result<WarpMap> {
        match *self {
            WarpConfig::Identity => Ok(WarpMap::identity(output)),
            WarpConfig::Radial { k1, k2, scale } => WarpMap::radial_scaled(k1, k2, scale, output),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderConfig {
    pub container: PathBuf,
    pub camera: CameraConfig,
    /// Channel colors are filled in per volume; see [`RenderConfig::transfer_for`].
    pub tf: TransferFunction,
    /// Explicit `tf.color.N` overrides.
    pub channel_colors: BTreeMap<usize, [f64; 3]>,
    pub warp: WarpConfig,
    pub distort: Option<(f64, f64)>,
    pub meshes: Vec<PathBuf>,
    pub swcs: Vec<PathBuf>,
    pub swc_palette: TypePalette,
    pub light: Light,
    pub render: RenderOptions,
    pub lod: TraversalOptions,
    /// Upper bound on schedule/load rounds before the final render.
    pub max_load_rounds: usize,
    pub memory_cache_bytes: usize,
    pub render_cache_bytes: usize,
    pub output_png: Option<PathBuf>,
    pub output_pfm: Option<PathBuf>,
    /// Interpupillary distance when rendering a stereo pair.
    pub stereo_ipd: Option<f64>,
}

const MB: f64 = 1024.0 * 1024.0;

fn color_triplet(cfg: &ConfigFile, key: &str) -> Result<[f64; 3]> {
    let v = cfg.numbers(key, 3)?.expect("key exists");
    if v.iter().any(|c| *c < 0.0) {
        return Err(cfg.invalid(key, "color components must be >= 0"));
    }
    Ok([v[0], v[1], v[2]])
}

impl RenderConfig {
    /// The transfer function with colors for a `channels`-channel volume.
    pub fn transfer_for(&self, channels: usize) -> TransferFunction {
        let mut colors = default_channel_colors(channels);
        for (&i, &c) in &self.channel_colors {
            if i < colors.len() {
                colors[i] = c;
            }
        }
        TransferFunction {
            channel_colors: colors,
            ..self.tf.clone()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(&ConfigFile::load(path)?)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        Self::from_file(&ConfigFile::parse(text, base_dir)?)
    }

    pub fn from_file(cfg: &ConfigFile) -> Result<Self> {
        let container = cfg
            .existing_path("input.container")?
            .ok_or_else(|| Error::Config("input.container is required".into()))?;

        let camera = CameraConfig {
            position: Point3::from(
                cfg.vec3("camera.position")?
                    .ok_or_else(|| Error::Config("camera.position is required".into()))?,
            ),
            look_at: Point3::from(
                cfg.vec3("camera.look_at")?
                    .ok_or_else(|| Error::Config("camera.look_at is required".into()))?,
            ),
            up: cfg.vec3("camera.up")?.unwrap_or_else(Vector3::y),
            vfov: cfg.f64_or("camera.vfov", 45.0)?,
            size: cfg.size("camera.size")?.unwrap_or((512, 512)),
            near: cfg.f64_or("camera.near", 0.01)?,
            far: cfg.f64_or("camera.far", 1e7)?,
        };
        camera.camera()?;

        let mut tf = TransferFunction {
            variant: TfVariant::parse(cfg.str("tf.variant").unwrap_or("linear"))?,
            scale: cfg.f64_or("tf.scale", 1.0)?,
            offset: cfg.f64_or("tf.offset", 0.0)?,
            emission_scale: cfg.f64_or("tf.emission_scale", 1.0)?,
            opacity_scale: cfg.f64_or("tf.opacity_scale", 1.0)?,
            gradient_scale: cfg.f64_or("tf.gradient_scale", 1.0)?,
            depth_near: cfg.f64_or("tf.depth_near", 0.0)?,
            depth_far: cfg.f64_or("tf.depth_far", 1.0)?,
            ..Default::default()
        };
        if let Some(p) = cfg.existing_path("tf.palette")? {
            tf.palette = Palette::load(&p)?;
        } else if tf.variant == TfVariant::DepthPalette {
            tf.palette = Palette::rainbow();
        }
        let color_keys = cfg.keys_with_prefix("tf.color.");
        let mut channel_colors = BTreeMap::new();
        for key in &color_keys {
            let idx: usize = key["tf.color.".len()..]
                .parse()
                .ok()
                .filter(|i| *i < 4)
                .ok_or_else(|| cfg.invalid(key, "channel index must be 0..=3"))?;
            channel_colors.insert(idx, color_triplet(cfg, key)?);
        }
        tf.validate()?;

        let warp = match cfg.str("warp.variant").unwrap_or("identity") {
            "identity" => WarpConfig::Identity,
            "radial" => WarpConfig::Radial {
                k1: cfg.f64_or("warp.k1", 0.5)?,
                k2: cfg.f64_or("warp.k2", 0.0)?,
                scale: cfg.f64_or("warp.scale", 0.75)?,
            },
            other => return Err(cfg.invalid("warp.variant", format!("unknown variant {other:?}"))),
        };
        warp.map(camera.size)?;

        let distort = match (cfg.f64("distort.k1")?, cfg.f64("distort.k2")?) {
            (None, None) => None,
            (k1, k2) => {
                let d = (k1.unwrap_or(0.0), k2.unwrap_or(0.0));
                WarpMap::radial(d.0, d.1, (1, 1), (1, 1))?;
                Some(d)
            }
        };

        let mut swc_palette = TypePalette::default();
        for key in cfg.keys_with_prefix("scene.swc_color.") {
            let code: i32 = key["scene.swc_color.".len()..]
                .parse()
                .map_err(|_| cfg.invalid(&key, "SWC type code must be an integer"))?;
            swc_palette.colors.insert(code, color_triplet(cfg, &key)?);
        }

        let model_name = cfg.str("render.model").unwrap_or("emission_absorption");
        let model = OpticalModel::parse(model_name)
            .ok_or_else(|| cfg.invalid("render.model", format!("unknown model {model_name:?}")))?;
        let render = RenderOptions {
            model,
            step_scale: cfg.f64_or("render.step_scale", 0.5)?,
            term_eps: cfg.f64_or("render.term_eps", 1e-3)?,
        };
        if render.step_scale <= 0.0 {
            return Err(cfg.invalid("render.step_scale", "must be > 0"));
        }
        if !(render.term_eps >= 0.0 && render.term_eps < 1.0) {
            return Err(cfg.invalid("render.term_eps", "must be in [0, 1)"));
        }
        let lod = TraversalOptions {
            quality_k: cfg.f64_or("lod.quality", 1.0)?,
            force_finest: cfg.bool_or("lod.force_finest", false)?,
        };
        if lod.quality_k <= 0.0 {
            return Err(cfg.invalid("lod.quality", "must be > 0"));
        }
        let max_load_rounds = cfg.f64_or("lod.max_load_rounds", 32.0)?;
        if max_load_rounds < 0.0 || max_load_rounds.fract() != 0.0 {
            return Err(cfg.invalid("lod.max_load_rounds", "must be a non-negative integer"));
        }

        let memory_bytes = cfg.f64_or("cache.memory_bytes", 512.0 * MB)?;
        let render_bytes = cfg.f64_or("cache.render_bytes", 256.0 * MB)?;
        for (key, v) in [("cache.memory_bytes", memory_bytes), ("cache.render_bytes", render_bytes)] {
            if v < 1.0 || v.fract() != 0.0 {
                return Err(cfg.invalid(key, "must be a positive whole number of bytes"));
            }
        }

        let stereo_ipd = if cfg.bool_or("stereo.enabled", false)? {
            Some(cfg.f64_or("stereo.ipd", 0.065)?)
        } else {
            cfg.f64("stereo.ipd")?;
            None
        };

        let out = RenderConfig {
            container,
            camera,
            tf,
            channel_colors,
            warp,
            distort,
            meshes: cfg.existing_paths("scene.mesh")?,
            swcs: cfg.existing_paths("scene.swc")?,
            swc_palette,
            light: Light {
                direction: cfg.vec3("scene.light")?,
            },
            render,
            lod,
            max_load_rounds: max_load_rounds as usize,
            memory_cache_bytes: memory_bytes as usize,
            render_cache_bytes: render_bytes as usize,
            output_png: cfg.path("output.png"),
            output_pfm: cfg.path("output.pfm"),
            stereo_ipd,
        };
        cfg.reject_unknown()?;
        Ok(out)
    }
}
