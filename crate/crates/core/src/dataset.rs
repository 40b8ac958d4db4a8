//! Video sequences on disk and the synthetic camouflage generator.
//!
//! Layout:
//!
//! ```text
//! <root>/<sequence>/frames/*.png     RGB frames, sorted lexicographically
//! <root>/<sequence>/gt/*.png         single-channel masks, 0 / 255
//! <root>/<sequence>/features/*.gvf   optional precomputed feature stacks
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{BinaryMask, PredictionMap};

pub const FRAMES_DIR: &str = "frames";
pub const GT_DIR: &str = "gt";
pub const FEATURES_DIR: &str = "features";

#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    pub name: String,
    pub frame_paths: Vec<PathBuf>,
    pub mask_paths: Option<Vec<PathBuf>>,
    pub feature_dir: Option<PathBuf>,
    /// `(height, width)` of the first frame.
    pub frame_size: (usize, usize),
}

impl VideoSequence {
    pub fn len(&self) -> usize {
        self.frame_paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_paths.is_empty()
    }

    /// File stem of frame `i`, used to name every per-frame output.
    pub fn frame_stem(&self, i: usize) -> String {
        self.frame_paths[i]
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("{i:05}"))
    }

    pub fn load_masks(&self) -> Result<Vec<BinaryMask>> {
        let paths = self
            .mask_paths
            .as_ref()
            .ok_or_else(|| Error::Dataset(format!("sequence {} has no ground truth", self.name)))?;
        paths.iter().map(|p| read_mask(p)).collect()
    }
}

fn sorted_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    out.sort();
    Ok(out)
}

fn load_sequence(dir: &Path) -> Result<VideoSequence> {
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let frames_dir = dir.join(FRAMES_DIR);
    if !frames_dir.is_dir() {
        return Err(Error::Dataset(format!(
            "{} has no {FRAMES_DIR}/ directory",
            dir.display()
        )));
    }
    let frame_paths = sorted_pngs(&frames_dir)?;
    if frame_paths.is_empty() {
        return Err(Error::Dataset(format!(
            "{} contains no frames",
            frames_dir.display()
        )));
    }
    let gt_dir = dir.join(GT_DIR);
    let mask_paths = if gt_dir.is_dir() {
        let masks = sorted_pngs(&gt_dir)?;
        if masks.len() != frame_paths.len() {
            return Err(Error::Dataset(format!(
                "{}: {} frames but {} masks",
                dir.display(),
                frame_paths.len(),
                masks.len()
            )));
        }
        Some(masks)
    } else {
        None
    };
    let feature_dir = Some(dir.join(FEATURES_DIR)).filter(|p| p.is_dir());
    let (w, h) =
        image::image_dimensions(&frame_paths[0]).map_err(|e| Error::image(&frame_paths[0], e))?;
    Ok(VideoSequence {
        name,
        frame_paths,
        mask_paths,
        feature_dir,
        frame_size: (h as usize, w as usize),
    })
}

/// Every sequence under `root`, sorted by name.
pub fn load_dataset(root: &Path) -> Result<Vec<VideoSequence>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::NoSequences(root.to_path_buf()));
    }
    dirs.iter().map(|d| load_sequence(d)).collect()
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path)
        .map_err(|e| Error::image(path, e))?
        .to_rgb8())
}

/// 8-bit mask, foreground where the value is at least 128.
pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let img = image::open(path)
        .map_err(|e| Error::image(path, e))?
        .to_luma8();
    let (w, h) = img.dimensions();
    BinaryMask::new(
        h as usize,
        w as usize,
        img.pixels().map(|p| p.0[0] >= 128).collect(),
    )
}

/// 8-bit grayscale PNG read as probabilities `value / 255`.
pub fn read_probability_png(path: &Path) -> Result<PredictionMap> {
    let img = image::open(path)
        .map_err(|e| Error::image(path, e))?
        .to_luma8();
    let (w, h) = img.dimensions();
    PredictionMap::new(
        h as usize,
        w as usize,
        img.pixels().map(|p| p.0[0] as f32 / 255.0).collect(),
    )
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

/// Writes `round(255 * p)` as 8-bit grayscale.
pub fn write_probability_png(map: &PredictionMap, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let img = GrayImage::from_fn(map.width() as u32, map.height() as u32, |x, y| {
        Luma([(map.at(y as usize, x as usize) * 255.0).round() as u8])
    });
    img.save(path).map_err(|e| Error::image(path, e))
}

/// Writes 0 / 255.
pub fn write_mask_png(mask: &BinaryMask, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let img = GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        Luma([if mask.at(y as usize, x as usize) {
            255
        } else {
            0
        }])
    });
    img.save(path).map_err(|e| Error::image(path, e))
}

/// One synthetic video: a textured ellipse drifting over a static textured
/// background, wrapping around the canvas edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Horizontal and vertical semi-axes in pixels.
    pub axes: (f64, f64),
    /// `(dx, dy)` in pixels per frame.
    pub velocity: (f64, f64),
    /// Object center at frame 0; drawn from the seed when absent.
    pub start: Option<(f64, f64)>,
    /// 0 paints the object with the distinct texture, 1 with the background.
    pub gamma: f64,
    /// Standard deviation of per-pixel Gaussian noise, in `[0, 1]` intensity units.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            frames: 40,
            height: 128,
            width: 128,
            axes: (16.0, 11.0),
            velocity: (1.5, 0.75),
            start: None,
            gamma: 0.6,
            noise: 0.03,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidConfig(
                "synthetic video needs frames and a canvas".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(self.noise >= 0.0) {
            return Err(Error::InvalidConfig(
                "gamma must be in [0, 1] and noise >= 0".into(),
            ));
        }
        if !(self.axes.0 > 0.0 && self.axes.1 > 0.0) {
            return Err(Error::InvalidConfig("ellipse axes must be positive".into()));
        }
        Ok(())
    }
}

/// Smooth random field in `[0, 1]`: two octaves of bilinear value noise.
fn value_noise(rng: &mut ChaCha8Rng, h: usize, w: usize, cell: usize) -> Vec<f32> {
    let mut out = vec![0f32; h * w];
    for (octave, weight) in [(cell, 0.65f32), ((cell / 2).max(1), 0.35)] {
        let gh = h / octave + 2;
        let gw = w / octave + 2;
        let grid: Vec<f32> = (0..gh * gw).map(|_| rng.random::<f32>()).collect();
        for r in 0..h {
            let y = r as f32 / octave as f32;
            let (y0, fy) = (y.floor() as usize, y.fract());
            for c in 0..w {
                let x = c as f32 / octave as f32;
                let (x0, fx) = (x.floor() as usize, x.fract());
                let a = grid[y0 * gw + x0];
                let b = grid[y0 * gw + x0 + 1];
                let cc = grid[(y0 + 1) * gw + x0];
                let d = grid[(y0 + 1) * gw + x0 + 1];
                let top = a + (b - a) * fx;
                let bottom = cc + (d - cc) * fx;
                out[r * w + c] += weight * (top + (bottom - top) * fy);
            }
        }
    }
    out
}

/// Shortest signed offset from `center` to `x` on a ring of length `len`.
fn wrapped_offset(x: f64, center: f64, len: f64) -> f64 {
    (x - center + len / 2.0).rem_euclid(len) - len / 2.0
}

fn object_center(cfg: &SynthConfig, start: (f64, f64), t: usize) -> (f64, f64) {
    (
        (start.0 + cfg.velocity.0 * t as f64).rem_euclid(cfg.width as f64),
        (start.1 + cfg.velocity.1 * t as f64).rem_euclid(cfg.height as f64),
    )
}

fn resolve_start(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let drawn = (
        rng.random::<f64>() * cfg.width as f64,
        rng.random::<f64>() * cfg.height as f64,
    );
    cfg.start.unwrap_or(drawn)
}

fn rasterize(cfg: &SynthConfig, center: (f64, f64)) -> BinaryMask {
    let (a, b) = cfg.axes;
    let data = (0..cfg.height * cfg.width)
        .map(|i| {
            let (r, c) = (i / cfg.width, i % cfg.width);
            let dx = wrapped_offset(c as f64 + 0.5, center.0, cfg.width as f64) / a;
            let dy = wrapped_offset(r as f64 + 0.5, center.1, cfg.height as f64) / b;
            dx * dx + dy * dy <= 1.0
        })
        .collect();
    BinaryMask::new(cfg.height, cfg.width, data).expect("canvas is non-empty")
}

/// Exact ground-truth mask of frame `t`.
pub fn synth_mask(cfg: &SynthConfig, t: usize) -> BinaryMask {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = resolve_start(cfg, &mut rng);
    rasterize(cfg, object_center(cfg, start, t))
}

const BACKGROUND_TINT: [f32; 3] = [0.46, 0.40, 0.28];
const OBJECT_TINT: [f32; 3] = [0.70, 0.55, 0.30];

/// Renders the video into `<out_root>/frames` and `<out_root>/gt`.
pub fn synth_generate(cfg: &SynthConfig, out_root: &Path) -> Result<VideoSequence> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = resolve_start(cfg, &mut rng);
    let background: Vec<Vec<f32>> = (0..3).map(|_| value_noise(&mut rng, h, w, 12)).collect();
    let pattern: Vec<Vec<f32>> = (0..3).map(|_| value_noise(&mut rng, h, w, 4)).collect();
    let noise = Normal::new(0.0f64, cfg.noise.max(1e-12)).expect("finite sigma");

    let frames_dir = out_root.join(FRAMES_DIR);
    let gt_dir = out_root.join(GT_DIR);
    for d in [&frames_dir, &gt_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let gamma = cfg.gamma as f32;
    let mut frame_paths = Vec::with_capacity(cfg.frames);
    let mut mask_paths = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let center = object_center(cfg, start, t);
        let mask = rasterize(cfg, center);
        let mut img = RgbImage::new(w as u32, h as u32);
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                let mut px = [0u8; 3];
                for k in 0..3 {
                    let bg = BACKGROUND_TINT[k] + 0.35 * (background[k][i] - 0.5);
                    let value = if mask.at(r, c) {
                        // object texture travels with the object
                        let oc = (c as f64 - center.0).rem_euclid(w as f64) as usize % w;
                        let or = (r as f64 - center.1).rem_euclid(h as f64) as usize % h;
                        let distinct = OBJECT_TINT[k] + 0.5 * (pattern[k][or * w + oc] - 0.5);
                        gamma * bg + (1.0 - gamma) * distinct
                    } else {
                        bg
                    };
                    let noisy = value as f64
                        + if cfg.noise > 0.0 {
                            noise.sample(&mut rng)
                        } else {
                            0.0
                        };
                    px[k] = (noisy.clamp(0.0, 1.0) * 255.0).round() as u8;
                }
                img.put_pixel(c as u32, r as u32, image::Rgb(px));
            }
        }
        let name = format!("{t:05}.png");
        let fp = frames_dir.join(&name);
        img.save(&fp).map_err(|e| Error::image(&fp, e))?;
        let mp = gt_dir.join(&name);
        write_mask_png(&mask, &mp)?;
        frame_paths.push(fp);
        mask_paths.push(mp);
    }
    Ok(VideoSequence {
        name: out_root
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        frame_paths,
        mask_paths: Some(mask_paths),
        feature_dir: None,
        frame_size: (h, w),
    })
}

/// A set of synthetic videos sharing appearance settings; each sequence gets
/// its own seed, start point and motion direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthDatasetConfig {
    pub sequences: usize,
    /// Object speed in pixels per frame; directions are drawn per sequence.
    pub speed: f64,
    pub video: SynthConfig,
}

impl Default for SynthDatasetConfig {
    fn default() -> Self {
        Self {
            sequences: 8,
            speed: 1.5,
            video: SynthConfig::default(),
        }
    }
}

impl SynthDatasetConfig {
    /// Per-sequence configs, deterministic in `video.seed`.
    pub fn sequence_configs(&self) -> Vec<SynthConfig> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.video.seed ^ 0x0005_eed0_f5e9);
        (0..self.sequences)
            .map(|i| {
                let angle = rng.random::<f64>() * std::f64::consts::TAU;
                let scale = 0.8 + 0.4 * rng.random::<f64>();
                SynthConfig {
                    velocity: (self.speed * angle.cos(), self.speed * angle.sin()),
                    axes: (self.video.axes.0 * scale, self.video.axes.1 * scale),
                    seed: self.video.seed.wrapping_mul(1000).wrapping_add(i as u64),
                    ..self.video.clone()
                }
            })
            .collect()
    }
}

/// Writes `<root>/seq_000`, `<root>/seq_001`, ...
pub fn synth_dataset(cfg: &SynthDatasetConfig, root: &Path) -> Result<Vec<VideoSequence>> {
    cfg.sequence_configs()
        .iter()
        .enumerate()
        .map(|(i, c)| synth_generate(c, &root.join(format!("seq_{i:03}"))))
        .collect()
}
