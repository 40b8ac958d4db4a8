//! Per-frame feature stacks at the standard 168 x 168 size.
//!
//! Two providers exist: precomputed GVF1 tensors on disk, and a hand-crafted
//! extractor used for desk-scale runs. The extractor resizes the frame to
//! 672 x 672, average-pools 4 x 4 down to 168 x 168 and emits, per scale `s`
//! (window `4s + 1`, gradient dilation `s`):
//!
//! | channels | content |
//! |---|---|
//! | 3 | windowed mean of R, G, B |
//! | 3 | windowed standard deviation of R, G, B |
//! | 1 | Sobel gradient magnitude of luma |
//! | 4 | `abs(gx cos t + gy sin t)` for t = 0, 45, 90, 135 degrees |
//!
//! followed by luma, chroma (`max - min` over RGB), and the normalized row and
//! column of the pixel. With the default scales `[1, 3]` that is 26 channels.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_rgb, VideoSequence};
use crate::error::{Error, Result};
use crate::tensor::{resize_bilinear, Tensor3};

pub const STANDARD_SIZE: usize = 168;
pub const INPUT_SIZE: usize = 672;

const GVF_MAGIC: &[u8; 4] = b"GVF1";
const GVF_VERSION: u8 = 1;
const GVF_DTYPE_F32: u8 = 0;
const GVF_HEADER_LEN: usize = 20;

/// `features/<frame_id:05d>.gvf`.
pub fn gvf_file_name(frame_id: usize) -> String {
    format!("{frame_id:05}.gvf")
}

fn gvf_header(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize)> {
    let bad = |what: &str| Error::FeatureShapeMismatch(format!("{}: {what}", path.display()));
    if bytes.len() < GVF_HEADER_LEN || &bytes[..4] != GVF_MAGIC {
        return Err(bad("not a GVF1 file"));
    }
    if bytes[4] != GVF_VERSION || bytes[5] != GVF_DTYPE_F32 {
        return Err(bad("unsupported version or dtype"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (h, w, c) = (u32_at(8), u32_at(12), u32_at(16));
    if h == 0 || w == 0 || c == 0 {
        return Err(bad("zero dimension"));
    }
    Ok((h, w, c))
}

/// Reads only the header: `(height, width, channels)`.
pub fn read_gvf_shape(path: &Path) -> Result<(usize, usize, usize)> {
    let mut f = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FeatureFileNotFound(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let mut head = [0u8; GVF_HEADER_LEN];
    f.read_exact(&mut head).map_err(|_| {
        Error::FeatureShapeMismatch(format!("{}: truncated header", path.display()))
    })?;
    gvf_header(&head, path)
}

pub fn read_gvf(path: &Path) -> Result<Tensor3> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FeatureFileNotFound(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let (h, w, c) = gvf_header(&bytes, path)?;
    let body = &bytes[GVF_HEADER_LEN..];
    if body.len() != h * w * c * 4 {
        return Err(Error::FeatureShapeMismatch(format!(
            "{}: header says {h}x{w}x{c} but payload holds {} bytes",
            path.display(),
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Tensor3::new(h, w, c, data)
}

pub fn write_gvf(tensor: &Tensor3, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut buf = Vec::with_capacity(GVF_HEADER_LEN + tensor.data().len() * 4);
    buf.extend_from_slice(GVF_MAGIC);
    buf.extend_from_slice(&[GVF_VERSION, GVF_DTYPE_F32, 0, 0]);
    for d in [tensor.height(), tensor.width(), tensor.channels()] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in tensor.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    /// Scale `s` uses a `(4s + 1)`-wide window and gradient taps `s` apart.
    pub scales: Vec<usize>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { scales: vec![1, 3] }
    }
}

impl SyntheticConfig {
    pub fn channels(&self) -> usize {
        11 * self.scales.len() + 4
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() || self.scales.contains(&0) {
            return Err(Error::InvalidConfig(
                "synthetic scales must be positive and nonempty".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureProviderConfig {
    /// GVF1 files under `<root>/<sequence>/features/`, or each sequence's own
    /// `features/` directory when `root` is absent.
    FileBacked {
        root: Option<PathBuf>,
    },
    Synthetic(SyntheticConfig),
}

impl Default for FeatureProviderConfig {
    fn default() -> Self {
        FeatureProviderConfig::Synthetic(SyntheticConfig::default())
    }
}

#[derive(Debug)]
enum Source {
    Files(PathBuf),
    Synthetic(SyntheticConfig),
}

/// Feature source for one sequence. Remembers the channel count of the
/// first stack it returns and rejects later stacks that disagree.
#[derive(Debug)]
pub struct FeatureProvider {
    source: Source,
    channels: OnceLock<usize>,
}

impl FeatureProvider {
    pub fn file_backed(dir: impl Into<PathBuf>) -> Self {
        Self {
            source: Source::Files(dir.into()),
            channels: OnceLock::new(),
        }
    }

    pub fn synthetic(cfg: SyntheticConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            source: Source::Synthetic(cfg),
            channels: OnceLock::new(),
        })
    }

    pub fn for_sequence(cfg: &FeatureProviderConfig, seq: &VideoSequence) -> Result<Self> {
        match cfg {
            FeatureProviderConfig::Synthetic(s) => Self::synthetic(s.clone()),
            FeatureProviderConfig::FileBacked { root: Some(root) } => Ok(Self::file_backed(
                root.join(&seq.name).join(crate::dataset::FEATURES_DIR),
            )),
            FeatureProviderConfig::FileBacked { root: None } => match &seq.feature_dir {
                Some(dir) => Ok(Self::file_backed(dir.clone())),
                None => Err(Error::FeatureFileNotFound(
                    seq.frame_paths[0]
                        .parent()
                        .and_then(Path::parent)
                        .unwrap_or(Path::new("."))
                        .join(crate::dataset::FEATURES_DIR),
                )),
            },
        }
    }

    pub fn needs_frames(&self) -> bool {
        matches!(self.source, Source::Synthetic(_))
    }

    fn check_channels(&self, stack: Tensor3) -> Result<Tensor3> {
        let c = stack.channels();
        let expected = *self.channels.get_or_init(|| c);
        if expected != c {
            return Err(Error::InconsistentChannels { expected, got: c });
        }
        Ok(stack)
    }

    /// Stack for one frame. The image is ignored by the file-backed source.
    pub fn provide(&self, frame: &RgbImage, frame_id: usize) -> Result<Tensor3> {
        match &self.source {
            Source::Files(dir) => self.provide_file(dir, frame_id),
            Source::Synthetic(cfg) => self.check_channels(extract_synthetic(frame, cfg)?),
        }
    }

    /// Like [`provide`](Self::provide) but decodes the frame only when needed.
    pub fn provide_frame(&self, seq: &VideoSequence, frame_id: usize) -> Result<Tensor3> {
        match &self.source {
            Source::Files(dir) => self.provide_file(dir, frame_id),
            Source::Synthetic(cfg) => {
                let img = read_rgb(&seq.frame_paths[frame_id])?;
                self.check_channels(extract_synthetic(&img, cfg)?)
            }
        }
    }

    fn provide_file(&self, dir: &Path, frame_id: usize) -> Result<Tensor3> {
        let path = dir.join(gvf_file_name(frame_id));
        let t = read_gvf(&path)?;
        if t.height() != STANDARD_SIZE || t.width() != STANDARD_SIZE {
            return Err(Error::FeatureShapeMismatch(format!(
                "{}: {}x{} instead of {STANDARD_SIZE}x{STANDARD_SIZE}",
                path.display(),
                t.height(),
                t.width()
            )));
        }
        self.check_channels(t)
    }

    /// Checks that every frame has a usable stack and that all agree on the
    /// channel count, which is returned.
    pub fn validate_sequence(&self, n_frames: usize) -> Result<usize> {
        if n_frames == 0 {
            return Err(Error::NoFrames);
        }
        let dir = match &self.source {
            Source::Synthetic(cfg) => return Ok(cfg.channels()),
            Source::Files(dir) => dir,
        };
        let mut shapes = Vec::with_capacity(n_frames);
        let mut missing = Vec::new();
        for id in 0..n_frames {
            match read_gvf_shape(&dir.join(gvf_file_name(id))) {
                Ok(s) => shapes.push((id, s)),
                Err(_) => missing.push(id),
            }
        }
        if !missing.is_empty() {
            return Err(Error::InvalidSequence(format!(
                "missing or unreadable frames {missing:?}"
            )));
        }
        let expected = self
            .channels
            .get()
            .copied()
            .unwrap_or_else(|| majority(shapes.iter().map(|(_, s)| s.2)));
        let bad: Vec<usize> = shapes
            .iter()
            .filter(|(_, (h, w, c))| *h != STANDARD_SIZE || *w != STANDARD_SIZE || *c != expected)
            .map(|(id, _)| *id)
            .collect();
        if !bad.is_empty() {
            return Err(Error::InvalidSequence(format!(
                "frames {bad:?} disagree with {STANDARD_SIZE}x{STANDARD_SIZE}x{expected}"
            )));
        }
        Ok(expected)
    }
}

/// Most frequent value, smallest on ties.
fn majority(values: impl Iterator<Item = usize>) -> usize {
    let mut counts = std::collections::BTreeMap::new();
    for v in values {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    counts
        .into_iter()
        .find(|&(_, n)| n == best)
        .map(|(v, _)| v)
        .unwrap_or(0)
}

fn rgb_tensor(img: &RgbImage) -> Result<Tensor3> {
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    Tensor3::new(h as usize, w as usize, 3, data)
}

/// 672 x 672 bilinear resize followed by 4 x 4 average pooling.
fn standardize(img: &RgbImage) -> Result<Vec<Vec<f32>>> {
    let big = resize_bilinear(&rgb_tensor(img)?, INPUT_SIZE, INPUT_SIZE)?;
    let n = STANDARD_SIZE;
    let mut planes = vec![vec![0f32; n * n]; 3];
    for r in 0..n {
        for c in 0..n {
            for (k, plane) in planes.iter_mut().enumerate() {
                let mut acc = 0f32;
                for dr in 0..4 {
                    for dc in 0..4 {
                        acc += big.get(4 * r + dr, 4 * c + dc, k);
                    }
                }
                plane[r * n + c] = acc / 16.0;
            }
        }
    }
    Ok(planes)
}

/// Windowed mean and standard deviation over the in-bounds part of a
/// `(2 radius + 1)`-wide square window. Values are offset by the plane's first
/// element before accumulation so a constant plane yields exactly zero spread.
fn window_stats(plane: &[f32], n: usize, radius: usize) -> (Vec<f32>, Vec<f32>) {
    let reference = plane[0] as f64;
    let stride = n + 1;
    let mut s1 = vec![0f64; stride * stride];
    let mut s2 = vec![0f64; stride * stride];
    for r in 0..n {
        for c in 0..n {
            let d = plane[r * n + c] as f64 - reference;
            let i = (r + 1) * stride + c + 1;
            s1[i] = d + s1[i - 1] + s1[i - stride] - s1[i - stride - 1];
            s2[i] = d * d + s2[i - 1] + s2[i - stride] - s2[i - stride - 1];
        }
    }
    let mut means = vec![0f32; n * n];
    let mut stds = vec![0f32; n * n];
    for r in 0..n {
        let (r0, r1) = (r.saturating_sub(radius), (r + radius + 1).min(n));
        for c in 0..n {
            let (c0, c1) = (c.saturating_sub(radius), (c + radius + 1).min(n));
            let rect = |s: &[f64]| {
                s[r1 * stride + c1] - s[r0 * stride + c1] - s[r1 * stride + c0]
                    + s[r0 * stride + c0]
            };
            let count = ((r1 - r0) * (c1 - c0)) as f64;
            let m = rect(&s1) / count;
            let var = (rect(&s2) / count - m * m).max(0.0);
            means[r * n + c] = (reference + m) as f32;
            stds[r * n + c] = var.sqrt() as f32;
        }
    }
    (means, stds)
}

/// Sobel derivatives with taps `dilation` pixels apart and replicated borders,
/// normalized so a unit step across the taps gives a response of 1.
fn sobel(plane: &[f32], n: usize, dilation: usize) -> (Vec<f32>, Vec<f32>) {
    let d = dilation as isize;
    let at = |r: isize, c: isize| {
        let rr = r.clamp(0, n as isize - 1) as usize;
        let cc = c.clamp(0, n as isize - 1) as usize;
        plane[rr * n + cc]
    };
    let mut gx = vec![0f32; n * n];
    let mut gy = vec![0f32; n * n];
    for r in 0..n as isize {
        for c in 0..n as isize {
            let x = (at(r - d, c + d) + 2.0 * at(r, c + d) + at(r + d, c + d))
                - (at(r - d, c - d) + 2.0 * at(r, c - d) + at(r + d, c - d));
            let y = (at(r + d, c - d) + 2.0 * at(r + d, c) + at(r + d, c + d))
                - (at(r - d, c - d) + 2.0 * at(r - d, c) + at(r - d, c + d));
            let i = r as usize * n + c as usize;
            gx[i] = x / 4.0;
            gy[i] = y / 4.0;
        }
    }
    (gx, gy)
}

/// Hand-crafted 168 x 168 feature stack; see the module docs for the layout.
pub fn extract_synthetic(img: &RgbImage, cfg: &SyntheticConfig) -> Result<Tensor3> {
    cfg.validate()?;
    let n = STANDARD_SIZE;
    let rgb = standardize(img)?;
    let luma: Vec<f32> = (0..n * n)
        .map(|i| 0.299 * rgb[0][i] + 0.587 * rgb[1][i] + 0.114 * rgb[2][i])
        .collect();
    let chroma: Vec<f32> = (0..n * n)
        .map(|i| {
            let (a, b, c) = (rgb[0][i], rgb[1][i], rgb[2][i]);
            a.max(b).max(c) - a.min(b).min(c)
        })
        .collect();

    let mut channels: Vec<Vec<f32>> = Vec::with_capacity(cfg.channels());
    let diag = std::f32::consts::FRAC_1_SQRT_2;
    for &s in &cfg.scales {
        let stats: Vec<_> = rgb.iter().map(|p| window_stats(p, n, 2 * s)).collect();
        channels.extend(stats.iter().map(|(m, _)| m.clone()));
        channels.extend(stats.into_iter().map(|(_, sd)| sd));
        let (gx, gy) = sobel(&luma, n, s);
        channels.push(gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect());
        for (cos, sin) in [(1.0, 0.0), (diag, diag), (0.0, 1.0), (-diag, diag)] {
            channels.push(
                gx.iter()
                    .zip(&gy)
                    .map(|(x, y)| (x * cos + y * sin).abs())
                    .collect(),
            );
        }
    }
    channels.push(luma);
    channels.push(chroma);
    let scale = 1.0 / (n - 1) as f32;
    channels.push((0..n * n).map(|i| (i / n) as f32 * scale).collect());
    channels.push((0..n * n).map(|i| (i % n) as f32 * scale).collect());

    let c = channels.len();
    let mut data = vec![0f32; n * n * c];
    for (k, ch) in channels.iter().enumerate() {
        for (i, &v) in ch.iter().enumerate() {
            data[i * c + k] = v;
        }
    }
    Tensor3::new(n, n, c, data)
}
