//! Four-stage multi-resolution cascade of tree ensembles.
//!
//! Stage 1 sees only the resized feature stack. Every later stage sees the
//! feature stack at its own resolution plus the flattened square
//! neighborhood of the previous stage's map, upsampled bilinearly to that
//! resolution and cropped with replicated borders.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::STANDARD_SIZE;
use crate::gbdt::{self, DenseMatrix, GbdtModel, RowSource, SamplingCaps, TrainConfig};
use crate::tensor::{clamp_index, resize_bilinear, BinaryMask, PredictionMap, Tensor3};

pub const N_STAGES: usize = 4;
pub const DEFAULT_RESOLUTIONS: [usize; N_STAGES] = [42, 42, 84, 168];
pub const DEFAULT_NEIGHBORHOOD: usize = 19;

pub const CASCADE_DIR: &str = "cascade";
const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeConfig {
    pub resolutions: Vec<usize>,
    pub neighborhood: usize,
    pub stages: Vec<TrainConfig>,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            resolutions: DEFAULT_RESOLUTIONS.to_vec(),
            neighborhood: DEFAULT_NEIGHBORHOOD,
            stages: vec![TrainConfig::default(); N_STAGES],
        }
    }
}

impl CascadeConfig {
    /// Same training settings for every stage.
    pub fn uniform(train: TrainConfig) -> Self {
        Self {
            stages: vec![train; N_STAGES],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolutions.len() != N_STAGES || self.stages.len() != N_STAGES {
            return Err(Error::InvalidConfig(format!(
                "cascade needs exactly {N_STAGES} stages"
            )));
        }
        if self.resolutions.contains(&0) || self.resolutions.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidConfig(
                "stage resolutions must be positive and nondecreasing".into(),
            ));
        }
        if self.resolutions[N_STAGES - 1] != STANDARD_SIZE {
            return Err(Error::InvalidConfig(format!(
                "last stage resolution must be {STANDARD_SIZE}"
            )));
        }
        if self.neighborhood.is_multiple_of(2) {
            return Err(Error::EvenSide);
        }
        self.stages.iter().try_for_each(TrainConfig::validate)
    }

    /// Input width of stage `k` (0-based) for `channels` feature channels.
    pub fn stage_width(&self, k: usize, channels: usize) -> usize {
        if k == 0 {
            channels
        } else {
            channels + self.neighborhood * self.neighborhood
        }
    }
}

/// Lazy `(res * res) x D` stage input matrix, rows in row-major pixel order.
#[derive(Debug, Clone)]
pub struct StageRows {
    features: Tensor3,
    prev: Option<PredictionMap>,
    side: usize,
}

/// Builds the input of one stage; `prev_map` is absent only for stage 1.
pub fn stage_inputs(
    features: &Tensor3,
    prev_map: Option<&PredictionMap>,
    res: usize,
    side: usize,
) -> Result<StageRows> {
    if res == 0 {
        return Err(Error::EmptyTarget);
    }
    if side.is_multiple_of(2) {
        return Err(Error::EvenSide);
    }
    let features = resize_bilinear(features, res, res)?;
    let prev = prev_map.map(|m| m.resized(res, res)).transpose()?;
    Ok(StageRows {
        features,
        prev,
        side,
    })
}

impl StageRows {
    pub fn resolution(&self) -> usize {
        self.features.height()
    }

    pub fn to_matrix(&self) -> Result<DenseMatrix> {
        DenseMatrix::from_source(self)
    }
}

impl RowSource for StageRows {
    fn n_rows(&self) -> usize {
        self.features.height() * self.features.width()
    }

    fn n_features(&self) -> usize {
        let c = self.features.channels();
        match self.prev {
            Some(_) => c + self.side * self.side,
            None => c,
        }
    }

    #[inline]
    fn value(&self, row: usize, feature: usize) -> f32 {
        let c = self.features.channels();
        if feature < c {
            return self.features.data()[row * c + feature];
        }
        let prev = self
            .prev
            .as_ref()
            .expect("column beyond features needs a previous map");
        let n = prev.width();
        let k = feature - c;
        let half = (self.side / 2) as isize;
        let r = clamp_index(
            (row / n) as isize + (k / self.side) as isize - half,
            prev.height(),
        );
        let col = clamp_index((row % n) as isize + (k % self.side) as isize - half, n);
        prev.at(r, col)
    }
}

/// One training frame: its 168 x 168 feature stack and ground-truth mask at
/// any resolution.
#[derive(Debug, Clone)]
pub struct TrainingFrame {
    pub features: Tensor3,
    pub mask: BinaryMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel {
    pub config: CascadeConfig,
    pub channels: usize,
    pub stages: Vec<GbdtModel>,
}

/// Every stage's map for one frame; the last one is the cascade output.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeOutput {
    pub stages: Vec<PredictionMap>,
}

impl CascadeOutput {
    pub fn final_map(&self) -> &PredictionMap {
        self.stages.last().expect("cascade has stages")
    }

    pub fn into_final(mut self) -> PredictionMap {
        self.stages.pop().expect("cascade has stages")
    }
}

/// Picks training pixels of one frame. Takes up to `max_pixels_per_frame`
/// pixels (0 means all), favouring positives up to half the budget, and caps
/// negatives at `max_negative_ratio` per positive when positives exist.
pub fn sample_pixels(labels: &[bool], caps: &SamplingCaps, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| labels[i]);
    let budget = if caps.max_pixels_per_frame == 0 {
        labels.len()
    } else {
        caps.max_pixels_per_frame
    };
    let n_pos = pos
        .len()
        .min((budget / 2).max(budget.saturating_sub(neg.len())));
    let mut n_neg = neg.len().min(budget - n_pos);
    if caps.max_negative_ratio > 0.0 && n_pos > 0 {
        n_neg = n_neg.min((caps.max_negative_ratio * n_pos as f64).ceil() as usize);
    }
    let mut pick = |from: &[usize], n: usize| -> Vec<usize> {
        if n == from.len() {
            from.to_vec()
        } else {
            sample(rng, from.len(), n)
                .into_iter()
                .map(|i| from[i])
                .collect()
        }
    };
    let mut out = pick(&pos, n_pos);
    out.extend(pick(&neg, n_neg));
    out.sort_unstable();
    out
}

/// Deterministic per-(stage, frame) generator, independent of scheduling.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn map_from_probs(res: usize, probs: Vec<f64>) -> Result<PredictionMap> {
    PredictionMap::new(res, res, probs.into_iter().map(|p| p as f32).collect())
}

fn check_channels(frames: &[TrainingFrame]) -> Result<usize> {
    let first = frames.first().ok_or(Error::NoSamples)?;
    let c = first.features.channels();
    for f in frames {
        if f.features.channels() != c {
            return Err(Error::InconsistentChannels {
                expected: c,
                got: f.features.channels(),
            });
        }
        if (f.features.height(), f.features.width()) != (STANDARD_SIZE, STANDARD_SIZE) {
            return Err(Error::FeatureShapeMismatch(format!(
                "training stack is {}x{}",
                f.features.height(),
                f.features.width()
            )));
        }
    }
    Ok(c)
}

/// Trains the stages in order; stage `k` sees stage `k - 1`'s output on the
/// same training frames.
pub fn train_cascade(frames: &[TrainingFrame], cfg: &CascadeConfig) -> Result<CascadeModel> {
    cfg.validate()?;
    let channels = check_channels(frames)?;
    let mut prev: Vec<Option<PredictionMap>> = vec![None; frames.len()];
    let mut stages = Vec::with_capacity(N_STAGES);
    for (k, (&res, tcfg)) in cfg.resolutions.iter().zip(&cfg.stages).enumerate() {
        let parts: Vec<(StageRows, DenseMatrix, Vec<u8>)> = frames
            .par_iter()
            .zip(prev.par_iter())
            .enumerate()
            .map(|(i, (frame, p))| {
                let rows = stage_inputs(&frame.features, p.as_ref(), res, cfg.neighborhood)?;
                let labels = frame.mask.resized(res, res)?;
                let mut rng = stream_rng(tcfg.seed, ((k as u64) << 32) | i as u64);
                let picked = sample_pixels(labels.data(), &tcfg.sampling, &mut rng);
                let x = DenseMatrix::from_source_rows(&rows, &picked)?;
                let y = picked.iter().map(|&j| labels.data()[j] as u8).collect();
                Ok((rows, x, y))
            })
            .collect::<Result<_>>()?;
        let width = cfg.stage_width(k, channels);
        let mut x = DenseMatrix::new(0, width, Vec::new())?;
        let mut y = Vec::new();
        for (_, xi, yi) in &parts {
            x.append(xi)?;
            y.extend_from_slice(yi);
        }
        let model = gbdt::train(&x, &y, tcfg)?;
        prev = parts
            .par_iter()
            .map(|(rows, _, _)| map_from_probs(res, model.predict_rows(rows)?).map(Some))
            .collect::<Result<_>>()?;
        stages.push(model);
    }
    Ok(CascadeModel {
        config: cfg.clone(),
        channels,
        stages,
    })
}

/// Runs all stages on one 168 x 168 feature stack.
pub fn infer_cascade(model: &CascadeModel, features: &Tensor3) -> Result<CascadeOutput> {
    if features.channels() != model.channels {
        return Err(Error::InconsistentChannels {
            expected: model.channels,
            got: features.channels(),
        });
    }
    let cfg = &model.config;
    let mut maps: Vec<PredictionMap> = Vec::with_capacity(N_STAGES);
    for (k, (stage, &res)) in model.stages.iter().zip(&cfg.resolutions).enumerate() {
        let rows = stage_inputs(features, maps.last(), res, cfg.neighborhood)?;
        let expected = cfg.stage_width(k, model.channels);
        if rows.n_features() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: rows.n_features(),
            });
        }
        maps.push(map_from_probs(res, stage.predict_rows(&rows)?)?);
    }
    Ok(CascadeOutput { stages: maps })
}

#[derive(Serialize, Deserialize)]
struct ConfigDoc {
    resolutions: Vec<usize>,
    neighborhood: usize,
    channels: usize,
    stages: Vec<TrainConfig>,
}

impl CascadeModel {
    /// Untrained cascade whose stages all predict `sigmoid(base_score)`.
    pub fn constant(cfg: CascadeConfig, channels: usize, base_score: f64) -> Result<Self> {
        cfg.validate()?;
        let stages = (0..N_STAGES)
            .map(|k| {
                GbdtModel::constant(
                    cfg.stage_width(k, channels),
                    cfg.stages[k].depth,
                    base_score,
                )
            })
            .collect();
        Ok(Self {
            config: cfg,
            channels,
            stages,
        })
    }

    /// Writes `<dir>/cascade/stage{1..4}.json` and `<dir>/cascade/config.json`;
    /// returns the written paths.
    pub fn save(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        let root = dir.join(CASCADE_DIR);
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let mut written = Vec::new();
        for (k, stage) in self.stages.iter().enumerate() {
            let p = root.join(format!("stage{}.json", k + 1));
            fs::write(&p, gbdt::save(stage)).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
        let doc = ConfigDoc {
            resolutions: self.config.resolutions.clone(),
            neighborhood: self.config.neighborhood,
            channels: self.channels,
            stages: self.config.stages.clone(),
        };
        let p = root.join(CONFIG_FILE);
        fs::write(&p, serde_json::to_vec_pretty(&doc)?).map_err(|e| Error::io(&p, e))?;
        written.push(p);
        Ok(written)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let root = dir.join(CASCADE_DIR);
        let p = root.join(CONFIG_FILE);
        let doc: ConfigDoc = serde_json::from_slice(&fs::read(&p).map_err(|e| Error::io(&p, e))?)?;
        let config = CascadeConfig {
            resolutions: doc.resolutions,
            neighborhood: doc.neighborhood,
            stages: doc.stages,
        };
        config.validate()?;
        let mut stages = Vec::with_capacity(N_STAGES);
        for k in 0..N_STAGES {
            let p = root.join(format!("stage{}.json", k + 1));
            let m = gbdt::load(&fs::read(&p).map_err(|e| Error::io(&p, e))?)?;
            let expected = config.stage_width(k, doc.channels);
            if m.n_features() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    got: m.n_features(),
                });
            }
            stages.push(m);
        }
        Ok(Self {
            config,
            channels: doc.channels,
            stages,
        })
    }
}
