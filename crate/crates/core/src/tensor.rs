//! Dense channel-last float tensors and the resampling / cropping primitives
//! shared by every stage of the pipeline.
//!
//! Resampling uses half-pixel centers: a destination index `d` maps to the
//! source coordinate `(d + 0.5) * src / dst - 0.5`, clamped to the valid range.

use crate::error::{Error, Result};

/// Height x width x channels, row-major, channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Tensor3 {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidTensor(format!(
                "dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidTensor(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor(format!(
                "non-finite value at index {i}"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::filled(height, width, channels, 0.0)
    }

    /// Builds a tensor by evaluating `f(row, col, channel)` at every element.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for k in 0..channels {
                    data.push(f(r, c, k));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// All channels of one pixel.
    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Copies out a single channel as an `H x W x 1` tensor.
    pub fn channel(&self, channel: usize) -> Result<Tensor3> {
        if channel >= self.channels {
            return Err(Error::InvalidTensor(format!(
                "channel {channel} out of range for {} channels",
                self.channels
            )));
        }
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px[channel])
            .collect();
        Tensor3::new(self.height, self.width, 1, data)
    }

    /// Splits into the first `at` channels and the remainder.
    pub fn split_channels(&self, at: usize) -> Result<(Tensor3, Tensor3)> {
        if at == 0 || at >= self.channels {
            return Err(Error::InvalidTensor(format!(
                "cannot split {} channels at {at}",
                self.channels
            )));
        }
        let mut a = Vec::with_capacity(self.height * self.width * at);
        let mut b = Vec::with_capacity(self.height * self.width * (self.channels - at));
        for px in self.data.chunks_exact(self.channels) {
            a.extend_from_slice(&px[..at]);
            b.extend_from_slice(&px[at..]);
        }
        Ok((
            Tensor3::new(self.height, self.width, at, a)?,
            Tensor3::new(self.height, self.width, self.channels - at, b)?,
        ))
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

/// A single-channel foreground probability map with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMap(Tensor3);

impl PredictionMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        Self::from_tensor(Tensor3::new(height, width, 1, data)?)
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_tensor(tensor: Tensor3) -> Result<Self> {
        if tensor.channels() != 1 {
            return Err(Error::InvalidTensor(format!(
                "prediction map needs 1 channel, got {}",
                tensor.channels()
            )));
        }
        if let Some(v) = tensor.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidTensor(format!(
                "prediction value {v} outside [0, 1]"
            )));
        }
        Ok(Self(tensor))
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn values(&self) -> &[f32] {
        self.0.data()
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.0.data()[row * self.0.width() + col]
    }

    pub fn as_tensor(&self) -> &Tensor3 {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor3 {
        self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.mean()
    }

    /// Bilinear resize; the result stays inside `[0, 1]`.
    pub fn resized(&self, height: usize, width: usize) -> Result<PredictionMap> {
        Ok(PredictionMap(resize_bilinear(&self.0, height, width)?))
    }
}

/// A binary segmentation mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::InvalidTensor(format!(
                "mask data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn to_map(&self) -> PredictionMap {
        let data = self
            .data
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        PredictionMap::new(self.height, self.width, data).expect("binary values are valid")
    }

    /// Area-average resample then binarize; a covered fraction of exactly 0.5
    /// counts as foreground.
    pub fn resized(&self, height: usize, width: usize) -> Result<BinaryMask> {
        if height == self.height && width == self.width {
            return Ok(self.clone());
        }
        let area = resize_area(self.to_map().as_tensor(), height, width)?;
        let data = area.data().iter().map(|&v| v >= 0.5).collect();
        BinaryMask::new(height, width, data)
    }
}

/// Source sample positions for one axis: `(lower index, upper index, fraction)`.
fn bilinear_axis(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let x = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = x.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, x - lo as f64)
        })
        .collect()
}

/// Channel-wise bilinear resize with half-pixel centers.
pub fn resize_bilinear(src: &Tensor3, out_h: usize, out_w: usize) -> Result<Tensor3> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::EmptyTarget);
    }
    if (out_h, out_w) == (src.height, src.width) {
        return Ok(src.clone());
    }
    let ch = src.channels;
    let rows = bilinear_axis(src.height, out_h);
    let cols = bilinear_axis(src.width, out_w);
    let mut data = Vec::with_capacity(out_h * out_w * ch);
    for &(r0, r1, ty) in &rows {
        for &(c0, c1, tx) in &cols {
            for k in 0..ch {
                let a = src.get(r0, c0, k) as f64;
                let b = src.get(r0, c1, k) as f64;
                let c = src.get(r1, c0, k) as f64;
                let d = src.get(r1, c1, k) as f64;
                // lerp form keeps constants exact
                let top = a + (b - a) * tx;
                let bottom = c + (d - c) * tx;
                data.push((top + (bottom - top) * ty) as f32);
            }
        }
    }
    Tensor3::new(out_h, out_w, ch, data)
}

/// Overlap weights of each destination cell over the source cells on one axis.
fn area_axis(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let start = d as f64 * scale;
            let end = (d + 1) as f64 * scale;
            let first = start.floor() as usize;
            let last = (end.ceil() as usize).min(src);
            let mut weights = Vec::with_capacity(last - first);
            for s in first..last {
                let overlap = (end.min((s + 1) as f64) - start.max(s as f64)).max(0.0);
                if overlap > 0.0 {
                    weights.push((s, overlap / scale));
                }
            }
            weights
        })
        .collect()
}

/// Area-average (box) resample; each output value is the overlap-weighted mean
/// of the source cells it covers.
pub fn resize_area(src: &Tensor3, out_h: usize, out_w: usize) -> Result<Tensor3> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::EmptyTarget);
    }
    let ch = src.channels;
    let rows = area_axis(src.height, out_h);
    let cols = area_axis(src.width, out_w);
    let mut data = Vec::with_capacity(out_h * out_w * ch);
    let mut acc = vec![0.0f64; ch];
    for rw in &rows {
        for cw in &cols {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for &(r, wr) in rw {
                for &(c, wc) in cw {
                    let w = wr * wc;
                    for (k, a) in acc.iter_mut().enumerate() {
                        *a += w * src.get(r, c, k) as f64;
                    }
                }
            }
            data.extend(acc.iter().map(|&a| a as f32));
        }
    }
    Tensor3::new(out_h, out_w, ch, data)
}

/// `side x side` crop of a single-channel map centred on `(center_row,
/// center_col)`; coordinates outside the map are clamped to the border.
pub fn crop_replicate(
    src: &Tensor3,
    center_row: usize,
    center_col: usize,
    side: usize,
) -> Result<Tensor3> {
    if side.is_multiple_of(2) {
        return Err(Error::EvenSide);
    }
    if src.channels != 1 {
        return Err(Error::InvalidTensor(format!(
            "crop expects a single-channel map, got {} channels",
            src.channels
        )));
    }
    if center_row >= src.height || center_col >= src.width {
        return Err(Error::InvalidTensor(format!(
            "crop center ({center_row}, {center_col}) outside {}x{} map",
            src.height, src.width
        )));
    }
    let half = (side / 2) as isize;
    let mut data = Vec::with_capacity(side * side);
    for dr in -half..=half {
        let r = clamp_index(center_row as isize + dr, src.height);
        for dc in -half..=half {
            let c = clamp_index(center_col as isize + dc, src.width);
            data.push(src.data[r * src.width + c]);
        }
    }
    Tensor3::new(side, side, 1, data)
}

#[inline]
pub(crate) fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Stacks `b`'s channels after `a`'s.
pub fn concat_channels(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    if a.height != b.height || a.width != b.width {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    for (pa, pb) in a
        .data
        .chunks_exact(a.channels)
        .zip(b.data.chunks_exact(b.channels))
    {
        data.extend_from_slice(pa);
        data.extend_from_slice(pb);
    }
    Tensor3::new(a.height, a.width, a.channels + b.channels, data)
}
