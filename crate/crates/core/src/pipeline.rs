//! Glue between the dataset layout, feature providers, the cascade, the
//! refiners and the ensemble, shared by the command-line driver and the
//! end-to-end tests.

use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{infer_cascade, stream_rng, CascadeModel, CascadeOutput, TrainingFrame};
use crate::dataset::{write_mask_png, write_probability_png, VideoSequence};
use crate::ensemble::{decide, fuse, EnsembleConfig};
use crate::error::{Error, Result};
use crate::features::{read_gvf, write_gvf, FeatureProvider, FeatureProviderConfig};
use crate::gbdt::TrainConfig;
use crate::refine::{refine_sequence, RefinerModel, Term};
use crate::temporal::{PredictionVolume, TnCubeSpec};
use crate::tensor::{BinaryMask, PredictionMap, Tensor3};

pub const STAGE1_DIR: &str = "stage1";
pub const STAGE1_PNG_DIR: &str = "stage1_png";
pub const FUSED_DIR: &str = "fused";
pub const FUSED_BINARY_DIR: &str = "fused_bin";

/// Temporal cube settings for both refiners plus their training settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub side: usize,
    pub depth: usize,
    pub gap_short: usize,
    pub gap_long: usize,
    pub train: TrainConfig,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            side: 19,
            depth: 5,
            gap_short: 1,
            gap_long: 3,
            train: TrainConfig {
                n_trees: 150,
                depth: 6,
                ..TrainConfig::default()
            },
        }
    }
}

impl RefineConfig {
    pub fn spec(&self, term: Term) -> Result<TnCubeSpec> {
        let gap = match term {
            Term::Short => self.gap_short,
            Term::Long => self.gap_long,
        };
        TnCubeSpec::new(self.side, self.depth, gap)
    }
}

/// Feature stacks of every frame of a sequence, in frame order.
pub fn sequence_features(cfg: &FeatureProviderConfig, seq: &VideoSequence) -> Result<Vec<Tensor3>> {
    let provider = FeatureProvider::for_sequence(cfg, seq)?;
    provider.validate_sequence(seq.len())?;
    (0..seq.len())
        .into_par_iter()
        .map(|i| provider.provide_frame(seq, i))
        .collect()
}

/// Feature stacks and masks of every frame of the given sequences.
pub fn cascade_training_frames(
    cfg: &FeatureProviderConfig,
    seqs: &[VideoSequence],
) -> Result<Vec<TrainingFrame>> {
    let mut out = Vec::new();
    for seq in seqs {
        let masks = seq.load_masks()?;
        let feats = sequence_features(cfg, seq)?;
        out.extend(
            feats
                .into_iter()
                .zip(masks)
                .map(|(features, mask)| TrainingFrame { features, mask }),
        );
    }
    Ok(out)
}

/// Cascade outputs for every frame, in frame order.
pub fn run_cascade(model: &CascadeModel, features: &[Tensor3]) -> Result<Vec<CascadeOutput>> {
    features
        .par_iter()
        .map(|f| infer_cascade(model, f))
        .collect()
}

/// Final-stage maps of cascade outputs as a volume.
pub fn final_volume(outputs: Vec<CascadeOutput>) -> Result<PredictionVolume> {
    PredictionVolume::new(outputs.into_iter().map(CascadeOutput::into_final).collect())
}

/// Replaces each pixel by 1 with probability `rate`, independently per pixel
/// and per frame.
pub fn salt_noise(volume: &PredictionVolume, rate: f64, seed: u64) -> Result<PredictionVolume> {
    let frames = volume
        .frames()
        .iter()
        .enumerate()
        .map(|(t, m)| {
            let mut rng = stream_rng(seed, t as u64);
            let data = m
                .values()
                .iter()
                .map(|&v| if rng.random::<f64>() < rate { 1.0 } else { v })
                .collect();
            PredictionMap::new(m.height(), m.width(), data)
        })
        .collect::<Result<_>>()?;
    PredictionVolume::new(frames)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedVolumes {
    pub short: PredictionVolume,
    pub long: PredictionVolume,
    pub fused: PredictionVolume,
    pub decisions: Vec<BinaryMask>,
}

pub fn refine_and_fuse(
    short: &RefinerModel,
    long: &RefinerModel,
    volume: &PredictionVolume,
    features: &[Tensor3],
    ensemble: &EnsembleConfig,
) -> Result<RefinedVolumes> {
    let s = refine_sequence(short, volume, features)?;
    let l = refine_sequence(long, volume, features)?;
    let fused = PredictionVolume::new(
        s.frames()
            .iter()
            .zip(l.frames())
            .map(|(a, b)| fuse(a, b, ensemble))
            .collect::<Result<_>>()?,
    )?;
    let decisions = fused.frames().iter().map(|m| decide(m, ensemble)).collect();
    Ok(RefinedVolumes {
        short: s,
        long: l,
        fused,
        decisions,
    })
}

/// `(prediction, ground truth)` pairs of one sequence, ready for
/// [`crate::metrics::evaluate_sequences`].
pub fn scored_pairs(
    name: &str,
    volume: &PredictionVolume,
    masks: &[BinaryMask],
) -> Result<(String, Vec<(PredictionMap, BinaryMask)>)> {
    if volume.len() != masks.len() {
        return Err(Error::InvalidSequence(format!(
            "{name}: {} maps for {} masks",
            volume.len(),
            masks.len()
        )));
    }
    Ok((
        name.to_string(),
        volume
            .frames()
            .iter()
            .cloned()
            .zip(masks.iter().cloned())
            .collect(),
    ))
}

/// Writes `<dir>/<stem>.gvf` (one channel) per frame; returns the paths.
pub fn write_volume_gvf(
    volume: &PredictionVolume,
    seq: &VideoSequence,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    volume
        .frames()
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let p = dir.join(format!("{}.gvf", seq.frame_stem(i)));
            write_gvf(m.as_tensor(), &p)?;
            Ok(p)
        })
        .collect()
}

pub fn read_volume_gvf(seq: &VideoSequence, dir: &Path) -> Result<PredictionVolume> {
    let frames = (0..seq.len())
        .map(|i| {
            let p = dir.join(format!("{}.gvf", seq.frame_stem(i)));
            let t = read_gvf(&p)?;
            if t.channels() != 1 {
                return Err(Error::FeatureShapeMismatch(format!(
                    "{}: prediction maps have one channel, found {}",
                    p.display(),
                    t.channels()
                )));
            }
            PredictionMap::from_tensor(t)
        })
        .collect::<Result<_>>()?;
    PredictionVolume::new(frames)
}

/// Writes `<dir>/<stem>.png` per frame, resized to `size` when given.
pub fn write_volume_png(
    volume: &PredictionVolume,
    seq: &VideoSequence,
    dir: &Path,
    size: Option<(usize, usize)>,
) -> Result<Vec<PathBuf>> {
    volume
        .frames()
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let p = dir.join(format!("{}.png", seq.frame_stem(i)));
            match size {
                Some((h, w)) => write_probability_png(&m.resized(h, w)?, &p)?,
                None => write_probability_png(m, &p)?,
            }
            Ok(p)
        })
        .collect()
}

pub fn write_masks_png(
    masks: &[BinaryMask],
    seq: &VideoSequence,
    dir: &Path,
    size: Option<(usize, usize)>,
) -> Result<Vec<PathBuf>> {
    masks
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let p = dir.join(format!("{}.png", seq.frame_stem(i)));
            match size {
                Some((h, w)) => write_mask_png(&m.resized(h, w)?, &p)?,
                None => write_mask_png(m, &p)?,
            }
            Ok(p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn salt_noise_only_raises_and_varies_per_frame() {
        let vol =
            PredictionVolume::new(vec![PredictionMap::filled(20, 20, 0.2).unwrap(); 3]).unwrap();
        let noisy = salt_noise(&vol, 0.1, 7).unwrap();
        let ones: Vec<usize> = noisy
            .frames()
            .iter()
            .map(|m| m.values().iter().filter(|&&v| v == 1.0).count())
            .collect();
        assert!(ones.iter().all(|&n| n > 10 && n < 90), "{ones:?}");
        assert_ne!(noisy.frame(0), noisy.frame(1));
        assert!(noisy
            .frames()
            .iter()
            .all(|m| m.values().iter().all(|&v| v == 0.2 || v == 1.0)));
        assert_eq!(salt_noise(&vol, 0.1, 7).unwrap(), noisy);
    }

    #[test]
    fn refine_config_specs() {
        let c = RefineConfig::default();
        assert_eq!(c.spec(Term::Short).unwrap().gap, 1);
        assert_eq!(c.spec(Term::Long).unwrap().gap, 3);
        assert_eq!(c.spec(Term::Long).unwrap().cube_len(), 19 * 19 * 5);
    }
}
