//! Temporal neighborhood (TN) prediction cubes.
//!
//! A cube is the stack of `S x S` crops taken at one fixed `(row, col)` from
//! `K` frames of a video's prediction volume. The frames are `i + o * GAP` for
//! offsets `o` in `-(K-1)/2 ..= (K-1)/2`; indices that fall outside the video
//! are reflected about its first/last frame without repeating the edge frame.

use crate::error::{Error, Result};
use crate::gbdt::RowSource;
use crate::tensor::{clamp_index, crop_replicate, PredictionMap, Tensor3};

/// Per-video stack of equally sized prediction maps.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionVolume {
    frames: Vec<PredictionMap>,
}

impl PredictionVolume {
    pub fn new(frames: Vec<PredictionMap>) -> Result<Self> {
        let first = frames.first().ok_or(Error::NoFrames)?;
        let shape = (first.height(), first.width());
        if let Some(i) = frames.iter().position(|m| (m.height(), m.width()) != shape) {
            return Err(Error::ShapeMismatch(format!(
                "frame {i} is {}x{}, expected {}x{}",
                frames[i].height(),
                frames[i].width(),
                shape.0,
                shape.1
            )));
        }
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn frames(&self) -> &[PredictionMap] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &PredictionMap {
        &self.frames[i]
    }

    pub fn into_frames(self) -> Vec<PredictionMap> {
        self.frames
    }
}

/// Cube geometry: spatial side `S`, temporal depth `K` and frame stride `GAP`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TnCubeSpec {
    pub side: usize,
    pub depth: usize,
    pub gap: usize,
}

impl TnCubeSpec {
    pub fn new(side: usize, depth: usize, gap: usize) -> Result<Self> {
        let spec = Self { side, depth, gap };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.side.is_multiple_of(2) {
            return Err(Error::EvenSide);
        }
        if self.depth.is_multiple_of(2) {
            return Err(Error::EvenDepth);
        }
        if self.gap == 0 {
            return Err(Error::InvalidConfig("GAP must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of cube values, `S * S * K`.
    pub fn cube_len(&self) -> usize {
        self.side * self.side * self.depth
    }

    /// Largest frame distance the cube reaches, `GAP * (K - 1) / 2`.
    pub fn temporal_radius(&self) -> usize {
        self.gap * (self.depth / 2)
    }

    /// `GAP == 1` is the short-term setting, larger gaps are long-term.
    pub fn is_short_term(&self) -> bool {
        self.gap == 1
    }
}

/// Reflects `i` into `[0, n_frames)` without duplicating the end frames.
pub fn reflect_index(i: i64, n_frames: usize) -> usize {
    if n_frames <= 1 {
        return 0;
    }
    let period = 2 * (n_frames as i64 - 1);
    let j = i.abs() % period;
    if j < n_frames as i64 {
        j as usize
    } else {
        (period - j) as usize
    }
}

/// Frame indices feeding the cube of frame `i`, earliest offset first.
pub fn sample_indices(i: usize, spec: &TnCubeSpec, n_frames: usize) -> Result<Vec<usize>> {
    spec.validate()?;
    if i >= n_frames {
        return Err(Error::InvalidSequence(format!(
            "frame {i} outside a {n_frames}-frame video"
        )));
    }
    let half = (spec.depth / 2) as i64;
    Ok((-half..=half)
        .map(|o| reflect_index(i as i64 + o * spec.gap as i64, n_frames))
        .collect())
}

/// The `S x S x K` cube at `(row, col)` of frame `frame`. Channel `k` holds the
/// crop from the `k`-th sampled frame.
pub fn extract_tn_cube(
    vol: &PredictionVolume,
    frame: usize,
    row: usize,
    col: usize,
    spec: &TnCubeSpec,
) -> Result<Tensor3> {
    let indices = sample_indices(frame, spec, vol.len())?;
    let slices = indices
        .iter()
        .map(|&t| crop_replicate(vol.frame(t).as_tensor(), row, col, spec.side))
        .collect::<Result<Vec<_>>>()?;
    let s2 = spec.side * spec.side;
    let k = spec.depth;
    let mut data = vec![0.0f32; s2 * k];
    for (slot, slice) in slices.iter().enumerate() {
        for (p, &v) in slice.data().iter().enumerate() {
            data[p * k + slot] = v;
        }
    }
    Tensor3::new(spec.side, spec.side, k, data)
}

/// Pixel features followed by the cube flattened slice-major, then row-major.
pub fn tn_feature_vector(cube: &Tensor3, pixel_features: &[f32]) -> Vec<f32> {
    let (s, _, k) = cube.shape();
    let mut out = Vec::with_capacity(pixel_features.len() + s * s * k);
    out.extend_from_slice(pixel_features);
    for slot in 0..k {
        for r in 0..s {
            for c in 0..s {
                out.push(cube.get(r, c, slot));
            }
        }
    }
    out
}

/// Lazy refiner input rows for every pixel of one frame: row `r * W + c` is
/// `tn_feature_vector(extract_tn_cube(vol, frame, r, c), features[r, c])`.
pub struct TnRows<'a> {
    vol: &'a PredictionVolume,
    features: &'a Tensor3,
    frames: Vec<usize>,
    side: usize,
}

impl<'a> TnRows<'a> {
    pub fn new(
        vol: &'a PredictionVolume,
        features: &'a Tensor3,
        frame: usize,
        spec: &TnCubeSpec,
    ) -> Result<Self> {
        if (features.height(), features.width()) != (vol.height(), vol.width()) {
            return Err(Error::ShapeMismatch(format!(
                "features {}x{} vs predictions {}x{}",
                features.height(),
                features.width(),
                vol.height(),
                vol.width()
            )));
        }
        Ok(Self {
            vol,
            features,
            frames: sample_indices(frame, spec, vol.len())?,
            side: spec.side,
        })
    }

    /// The frames this row source reads.
    pub fn sampled_frames(&self) -> &[usize] {
        &self.frames
    }
}

impl RowSource for TnRows<'_> {
    fn n_rows(&self) -> usize {
        self.vol.height() * self.vol.width()
    }

    fn n_features(&self) -> usize {
        self.features.channels() + self.side * self.side * self.frames.len()
    }

    #[inline]
    fn value(&self, row: usize, feature: usize) -> f32 {
        let c = self.features.channels();
        if feature < c {
            return self.features.data()[row * c + feature];
        }
        let w = self.vol.width();
        let k = feature - c;
        let s2 = self.side * self.side;
        let slot = k / s2;
        let within = k % s2;
        let half = (self.side / 2) as isize;
        let dr = (within / self.side) as isize - half;
        let dc = (within % self.side) as isize - half;
        let r = clamp_index((row / w) as isize + dr, self.vol.height());
        let cc = clamp_index((row % w) as isize + dc, w);
        self.vol.frame(self.frames[slot]).at(r, cc)
    }
}
