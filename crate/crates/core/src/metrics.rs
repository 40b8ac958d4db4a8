//! Segmentation quality metrics: weighted F-measure, enhanced-alignment
//! measure, MAE, Dice and IoU, plus per-sequence / dataset aggregation.
//!
//! MAE and the weighted F-measure score the continuous map. E-measure, Dice
//! and IoU score the map binarized with the adaptive threshold. Frames whose
//! ground truth has no foreground are skipped by every metric except MAE.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset;
use crate::ensemble::{adaptive_threshold, binarize};
use crate::error::{Error, Result};
use crate::tensor::{BinaryMask, PredictionMap};

/// Alignment-matrix regularizer.
pub const EMEASURE_EPS: f64 = 1e-8;
/// Side of the error-smoothing Gaussian.
pub const WFM_KERNEL_SIDE: usize = 7;
pub const WFM_SIGMA: f64 = 5.0;
pub const WFM_BETA2: f64 = 1.0;

/// Distance decay of background error weights, `ln(0.5) / 5`.
pub fn wfm_alpha() -> f64 {
    0.5f64.ln() / 5.0
}

fn check_shape(h: usize, w: usize, gt: &BinaryMask) -> Result<()> {
    if (h, w) != (gt.height(), gt.width()) {
        return Err(Error::ShapeMismatch(format!(
            "prediction {h}x{w} vs ground truth {}x{}",
            gt.height(),
            gt.width()
        )));
    }
    Ok(())
}

fn as_f64(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn mae(pred: &PredictionMap, gt: &BinaryMask) -> Result<f64> {
    check_shape(pred.height(), pred.width(), gt)?;
    let sum: f64 = pred
        .values()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| (p as f64 - as_f64(g)).abs())
        .sum();
    Ok(sum / gt.data().len() as f64)
}

/// `(dice, iou)`; two empty masks score `(1, 1)`.
pub fn dice_iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<(f64, f64)> {
    check_shape(pred.height(), pred.width(), gt)?;
    let (mut inter, mut p, mut g) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.data().iter().zip(gt.data()) {
        inter += (a && b) as usize;
        p += a as usize;
        g += b as usize;
    }
    if p + g == 0 {
        return Ok((1.0, 1.0));
    }
    let union = p + g - inter;
    Ok((
        2.0 * inter as f64 / (p + g) as f64,
        inter as f64 / union as f64,
    ))
}

pub fn emeasure(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    check_shape(pred.height(), pred.width(), gt)?;
    let n = gt.data().len() as f64;
    let fg = gt.count();
    let pred_mean = pred.count() as f64 / n;
    if fg == 0 {
        return Ok(1.0 - pred_mean);
    }
    if fg == gt.data().len() {
        return Ok(pred_mean);
    }
    let gt_mean = fg as f64 / n;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| {
            let a = as_f64(p) - pred_mean;
            let b = as_f64(g) - gt_mean;
            let phi = 2.0 * a * b / (a * a + b * b + EMEASURE_EPS);
            (phi + 1.0) * (phi + 1.0) / 4.0
        })
        .sum();
    Ok(sum / n)
}

/// Normalized `side x side` Gaussian.
pub fn gaussian_kernel(side: usize, sigma: f64) -> Vec<f64> {
    let half = (side / 2) as f64;
    let mut k: Vec<f64> = (0..side * side)
        .map(|i| {
            let y = (i / side) as f64 - half;
            let x = (i % side) as f64 - half;
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Same-size correlation with zero padding outside the image.
fn filter_zero_padded(src: &[f64], h: usize, w: usize, kernel: &[f64], side: usize) -> Vec<f64> {
    let half = (side / 2) as isize;
    let mut out = vec![0.0; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let mut acc = 0.0;
            for kr in 0..side as isize {
                let rr = r + kr - half;
                if rr < 0 || rr >= h as isize {
                    continue;
                }
                for kc in 0..side as isize {
                    let cc = c + kc - half;
                    if cc < 0 || cc >= w as isize {
                        continue;
                    }
                    acc += kernel[(kr * side as isize + kc) as usize]
                        * src[(rr * w as isize + cc) as usize];
                }
            }
            out[(r * w as isize + c) as usize] = acc;
        }
    }
    out
}

/// Exact squared Euclidean distance along one line (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        let mut s;
        loop {
            let p = v[k] as f64;
            s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * qf - 2.0 * p);
            // z[0] is -inf, so this never pops the first parabola
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Euclidean distance from every pixel to the nearest foreground pixel of
/// `mask`. Requires at least one foreground pixel.
pub fn distance_to_foreground(mask: &BinaryMask) -> Vec<f64> {
    const FAR: f64 = 1e20;
    let (h, w) = (mask.height(), mask.width());
    let n = h.max(w);
    let mut v = vec![0usize; n];
    let mut z = vec![0f64; n + 1];
    let mut grid: Vec<f64> = mask
        .data()
        .iter()
        .map(|&b| if b { 0.0 } else { FAR })
        .collect();
    let mut line = vec![0f64; n];
    let mut out = vec![0f64; n];
    for c in 0..w {
        for r in 0..h {
            line[r] = grid[r * w + c];
        }
        edt_1d(&line[..h], &mut out[..h], &mut v, &mut z);
        for r in 0..h {
            grid[r * w + c] = out[r];
        }
    }
    for r in 0..h {
        line[..w].copy_from_slice(&grid[r * w..(r + 1) * w]);
        edt_1d(&line[..w], &mut out[..w], &mut v, &mut z);
        grid[r * w..(r + 1) * w].copy_from_slice(&out[..w]);
    }
    grid.into_iter().map(f64::sqrt).collect()
}

/// Weighted F-measure; `None` when the ground truth has no foreground.
pub fn wfm(pred: &PredictionMap, gt: &BinaryMask) -> Result<Option<f64>> {
    check_shape(pred.height(), pred.width(), gt)?;
    if gt.count() == 0 {
        return Ok(None);
    }
    let (h, w) = (gt.height(), gt.width());
    let err: Vec<f64> = pred
        .values()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| (p as f64 - as_f64(g)).abs())
        .collect();
    let kernel = gaussian_kernel(WFM_KERNEL_SIDE, WFM_SIGMA);
    let smoothed = filter_zero_padded(&err, h, w, &kernel, WFM_KERNEL_SIDE);
    let dist = distance_to_foreground(gt);
    let alpha = wfm_alpha();

    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for i in 0..h * w {
        if gt.data()[i] {
            tp += 1.0 - err[i];
            fn_ += err[i];
        } else {
            let e = err[i].min(smoothed[i]);
            fp += e * (2.0 - (alpha * dist[i]).exp());
        }
    }
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let denom = WFM_BETA2 * precision + recall;
    Ok(Some(if denom > 0.0 {
        (1.0 + WFM_BETA2) * precision * recall / denom
    } else {
        0.0
    }))
}

/// Metrics of one frame; overlap metrics are `None` for empty ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMetrics {
    pub mae: f64,
    pub wfm: Option<f64>,
    pub emeasure: Option<f64>,
    pub dice: Option<f64>,
    pub iou: Option<f64>,
}

pub fn evaluate_frame(pred: &PredictionMap, gt: &BinaryMask) -> Result<FrameMetrics> {
    let mae = mae(pred, gt)?;
    if gt.count() == 0 {
        return Ok(FrameMetrics {
            mae,
            wfm: None,
            emeasure: None,
            dice: None,
            iou: None,
        });
    }
    let bin = binarize(pred, adaptive_threshold(pred));
    let (dice, iou) = dice_iou(&bin, gt)?;
    Ok(FrameMetrics {
        mae,
        wfm: wfm(pred, gt)?,
        emeasure: Some(emeasure(&bin, gt)?),
        dice: Some(dice),
        iou: Some(iou),
    })
}

/// The five headline numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub wfm: f64,
    pub emeasure: f64,
    pub mae: f64,
    pub mdice: f64,
    pub miou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_sequence: BTreeMap<String, MetricsSummary>,
    pub overall: MetricsSummary,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn summarize<'a>(items: impl Iterator<Item = &'a SequenceAverages> + Clone) -> SequenceAverages {
    SequenceAverages {
        mae: mean_of(items.clone().filter_map(|s| s.mae)),
        wfm: mean_of(items.clone().filter_map(|s| s.wfm)),
        emeasure: mean_of(items.clone().filter_map(|s| s.emeasure)),
        dice: mean_of(items.clone().filter_map(|s| s.dice)),
        iou: mean_of(items.filter_map(|s| s.iou)),
    }
}

#[derive(Debug, Clone, Copy)]
struct SequenceAverages {
    mae: Option<f64>,
    wfm: Option<f64>,
    emeasure: Option<f64>,
    dice: Option<f64>,
    iou: Option<f64>,
}

impl SequenceAverages {
    fn from_frames(frames: &[FrameMetrics]) -> Self {
        Self {
            mae: mean_of(frames.iter().map(|f| f.mae)),
            wfm: mean_of(frames.iter().filter_map(|f| f.wfm)),
            emeasure: mean_of(frames.iter().filter_map(|f| f.emeasure)),
            dice: mean_of(frames.iter().filter_map(|f| f.dice)),
            iou: mean_of(frames.iter().filter_map(|f| f.iou)),
        }
    }

    /// Metrics with no scored frame report 0.
    fn summary(&self) -> MetricsSummary {
        MetricsSummary {
            wfm: self.wfm.unwrap_or(0.0),
            emeasure: self.emeasure.unwrap_or(0.0),
            mae: self.mae.unwrap_or(0.0),
            mdice: self.dice.unwrap_or(0.0),
            miou: self.iou.unwrap_or(0.0),
        }
    }
}

/// Frame metrics are averaged per sequence, then sequences are averaged.
pub fn aggregate(sequences: &[(String, Vec<FrameMetrics>)]) -> MetricsReport {
    let per: Vec<(String, SequenceAverages)> = sequences
        .iter()
        .map(|(name, frames)| (name.clone(), SequenceAverages::from_frames(frames)))
        .collect();
    let overall = summarize(per.iter().map(|(_, s)| s)).summary();
    MetricsReport {
        per_sequence: per.into_iter().map(|(n, s)| (n, s.summary())).collect(),
        overall,
    }
}

/// Scores in-memory `(prediction, ground truth)` pairs per sequence.
/// Predictions are resized to the ground-truth resolution first.
pub fn evaluate_sequences(
    sequences: &[(String, Vec<(PredictionMap, BinaryMask)>)],
) -> Result<MetricsReport> {
    use rayon::prelude::*;
    let scored = sequences
        .iter()
        .map(|(name, frames)| {
            let metrics = frames
                .par_iter()
                .map(|(p, g)| evaluate_frame(&p.resized(g.height(), g.width())?, g))
                .collect::<Result<Vec<_>>>()?;
            Ok((name.clone(), metrics))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(&scored))
}

/// Scores `<pred_root>/<sequence>/<subdir>/<frame>.png` against the masks of
/// the dataset at `data_root`.
pub fn evaluate_dataset(pred_root: &Path, subdir: &str, data_root: &Path) -> Result<MetricsReport> {
    let sequences = dataset::load_dataset(data_root)?;
    let mut missing = Vec::new();
    let mut pairs = Vec::with_capacity(sequences.len());
    for seq in &sequences {
        let masks = seq
            .mask_paths
            .as_ref()
            .ok_or_else(|| Error::Dataset(format!("sequence {} has no ground truth", seq.name)))?;
        let dir = pred_root.join(&seq.name).join(subdir);
        let mut frames = Vec::with_capacity(masks.len());
        for mask_path in masks {
            let stem = mask_path.file_stem().unwrap_or_default();
            let pred_path = dir.join(stem).with_extension("png");
            if !pred_path.is_file() {
                missing.push(pred_path.display().to_string());
                continue;
            }
            frames.push((
                dataset::read_probability_png(&pred_path)?,
                dataset::read_mask(mask_path)?,
            ));
        }
        pairs.push((seq.name.clone(), frames));
    }
    if !missing.is_empty() {
        return Err(Error::Dataset(format!(
            "missing prediction files: {}",
            missing.join(", ")
        )));
    }
    evaluate_sequences(&pairs)
}

impl MetricsReport {
    /// Aligned plain-text table, one row per sequence plus the overall row.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(&str, &MetricsSummary)> = self
            .per_sequence
            .iter()
            .map(|(n, s)| (n.as_str(), s))
            .collect();
        rows.push(("overall", &self.overall));
        let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(8).max(8);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}",
            "sequence", "Fw", "Ephi", "MAE", "mDice", "mIoU"
        );
        for (name, s) in rows {
            let _ = writeln!(
                out,
                "{name:<width$}  {:>8.4}  {:>8.4}  {:>8.5}  {:>8.4}  {:>8.4}",
                s.wfm, s.emeasure, s.mae, s.mdice, s.miou
            );
        }
        out
    }
}
