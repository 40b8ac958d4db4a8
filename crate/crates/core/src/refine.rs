//! Short- and long-term refiners: one tree ensemble per term, fed with each
//! pixel's feature vector followed by its temporal neighborhood cube.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{sample_pixels, stream_rng};
use crate::error::{Error, Result};
use crate::gbdt::{self, DenseMatrix, GbdtModel, RowSource, TrainConfig};
use crate::temporal::{PredictionVolume, TnCubeSpec, TnRows};
use crate::tensor::{BinaryMask, PredictionMap, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Term {
    Short,
    Long,
}

impl Term {
    pub fn as_str(self) -> &'static str {
        match self {
            Term::Short => "short",
            Term::Long => "long",
        }
    }
}

impl std::fmt::Display for Term {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "short" => Ok(Term::Short),
            "long" => Ok(Term::Long),
            other => Err(Error::InvalidConfig(format!("unknown term {other:?}"))),
        }
    }
}

/// Training material for one video: its stage-1 volume, the per-frame
/// feature stacks at the same resolution and ground truth at any resolution.
#[derive(Debug, Clone, Copy)]
pub struct RefinerVideo<'a> {
    pub volume: &'a PredictionVolume,
    pub features: &'a [Tensor3],
    pub masks: &'a [BinaryMask],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinerModel {
    pub term: Term,
    pub spec: TnCubeSpec,
    pub channels: usize,
    pub model: GbdtModel,
}

impl RefinerModel {
    pub fn input_width(&self) -> usize {
        self.channels + self.spec.cube_len()
    }

    /// Refiner without trees; predicts `sigmoid(base_score)` everywhere.
    pub fn constant(
        term: Term,
        spec: TnCubeSpec,
        channels: usize,
        depth: usize,
        base_score: f64,
    ) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            term,
            spec,
            channels,
            model: GbdtModel::constant(channels + spec.cube_len(), depth, base_score),
        })
    }
}

fn check_video(v: &RefinerVideo<'_>, with_masks: bool) -> Result<usize> {
    let n = v.volume.len();
    if v.features.len() != n || (with_masks && v.masks.len() != n) {
        return Err(Error::InvalidTrainingData(format!(
            "{n} maps, {} feature stacks, {} masks",
            v.features.len(),
            v.masks.len()
        )));
    }
    let c = v.features[0].channels();
    if let Some(f) = v.features.iter().find(|f| f.channels() != c) {
        return Err(Error::InconsistentChannels {
            expected: c,
            got: f.channels(),
        });
    }
    Ok(c)
}

pub fn train_refiner(
    videos: &[RefinerVideo<'_>],
    term: Term,
    spec: &TnCubeSpec,
    cfg: &TrainConfig,
) -> Result<RefinerModel> {
    spec.validate()?;
    cfg.validate()?;
    if videos.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut channels = None;
    for v in videos {
        let c = check_video(v, true)?;
        if *channels.get_or_insert(c) != c {
            return Err(Error::InconsistentChannels {
                expected: channels.unwrap(),
                got: c,
            });
        }
    }
    let channels = channels.unwrap();
    let jobs: Vec<(usize, usize)> = videos
        .iter()
        .enumerate()
        .flat_map(|(v, video)| (0..video.volume.len()).map(move |i| (v, i)))
        .collect();
    let parts: Vec<(DenseMatrix, Vec<u8>)> = jobs
        .par_iter()
        .map(|&(v, i)| {
            let video = &videos[v];
            let rows = TnRows::new(video.volume, &video.features[i], i, spec)?;
            let labels = video.masks[i].resized(video.volume.height(), video.volume.width())?;
            let mut rng = stream_rng(cfg.seed, ((v as u64) << 32) | i as u64);
            let picked = sample_pixels(labels.data(), &cfg.sampling, &mut rng);
            let x = DenseMatrix::from_source_rows(&rows, &picked)?;
            Ok((x, picked.iter().map(|&j| labels.data()[j] as u8).collect()))
        })
        .collect::<Result<_>>()?;
    let mut x = DenseMatrix::new(0, channels + spec.cube_len(), Vec::new())?;
    let mut y = Vec::new();
    for (xi, yi) in &parts {
        x.append(xi)?;
        y.extend_from_slice(yi);
    }
    drop(parts);
    Ok(RefinerModel {
        term,
        spec: *spec,
        channels,
        model: gbdt::train(&x, &y, cfg)?,
    })
}

/// Applies the refiner once to every frame of a volume.
pub fn refine_sequence(
    refiner: &RefinerModel,
    volume: &PredictionVolume,
    features: &[Tensor3],
) -> Result<PredictionVolume> {
    let c = check_video(
        &RefinerVideo {
            volume,
            features,
            masks: &[],
        },
        false,
    )?;
    if c != refiner.channels {
        return Err(Error::InconsistentChannels {
            expected: refiner.channels,
            got: c,
        });
    }
    let frames: Vec<PredictionMap> = (0..volume.len())
        .into_par_iter()
        .map(|i| {
            let rows = TnRows::new(volume, &features[i], i, &refiner.spec)?;
            if rows.n_features() != refiner.input_width() {
                return Err(Error::DimensionMismatch {
                    expected: refiner.input_width(),
                    got: rows.n_features(),
                });
            }
            let p = refiner.model.predict_rows(&rows)?;
            PredictionMap::new(
                volume.height(),
                volume.width(),
                p.into_iter().map(|v| v as f32).collect(),
            )
        })
        .collect::<Result<_>>()?;
    PredictionVolume::new(frames)
}

#[derive(Serialize, Deserialize)]
struct SpecDoc {
    term: Term,
    side: usize,
    depth: usize,
    gap: usize,
    channels: usize,
}

pub fn model_path(dir: &Path, term: Term) -> PathBuf {
    dir.join(format!("refiner_{term}.json"))
}

pub fn spec_path(dir: &Path, term: Term) -> PathBuf {
    dir.join(format!("refiner_{term}.spec.json"))
}

impl RefinerModel {
    /// Writes `refiner_<term>.json` and its `refiner_<term>.spec.json`
    /// sidecar; returns the written paths.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let m = model_path(dir, self.term);
        fs::write(&m, gbdt::save(&self.model)).map_err(|e| Error::io(&m, e))?;
        let s = spec_path(dir, self.term);
        let doc = SpecDoc {
            term: self.term,
            side: self.spec.side,
            depth: self.spec.depth,
            gap: self.spec.gap,
            channels: self.channels,
        };
        fs::write(&s, serde_json::to_vec_pretty(&doc)?).map_err(|e| Error::io(&s, e))?;
        Ok(vec![m, s])
    }

    pub fn load(dir: &Path, term: Term) -> Result<Self> {
        let s = spec_path(dir, term);
        let doc: SpecDoc = serde_json::from_slice(&fs::read(&s).map_err(|e| Error::io(&s, e))?)?;
        if doc.term != term {
            return Err(Error::MalformedModel(format!(
                "{} describes the {} refiner",
                s.display(),
                doc.term
            )));
        }
        let spec = TnCubeSpec::new(doc.side, doc.depth, doc.gap)?;
        let m = model_path(dir, term);
        let model = gbdt::load(&fs::read(&m).map_err(|e| Error::io(&m, e))?)?;
        if model.n_features() != doc.channels + spec.cube_len() {
            return Err(Error::DimensionMismatch {
                expected: doc.channels + spec.cube_len(),
                got: model.n_features(),
            });
        }
        Ok(Self {
            term,
            spec,
            channels: doc.channels,
            model,
        })
    }
}
