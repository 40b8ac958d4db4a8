//! Run configuration: one TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use gvcod_core::cascade::CascadeConfig;
use gvcod_core::dataset::SynthDatasetConfig;
use gvcod_core::ensemble::EnsembleConfig;
use gvcod_core::features::FeatureProviderConfig;
use gvcod_core::gbdt::TrainConfig;
use gvcod_core::pipeline::RefineConfig;

use crate::{CliError, CliResult, Common};

/// Layout of the configuration file. Relative paths are resolved against the
/// file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    data: Option<PathBuf>,
    models: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    workers: Option<usize>,
    synth: SynthDatasetConfig,
    features: FeatureProviderConfig,
    cascade: CascadeConfig,
    /// Shorthand applied to all four cascade stages.
    cascade_train: Option<TrainConfig>,
    refine: RefineConfig,
    ensemble: EnsembleConfig,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// 0 lets the thread pool pick.
    pub workers: usize,
    pub synth: SynthDatasetConfig,
    pub features: FeatureProviderConfig,
    pub cascade: CascadeConfig,
    pub refine: RefineConfig,
    pub ensemble: EnsembleConfig,
}

fn anchored(base: &Path, p: Option<PathBuf>) -> Option<PathBuf> {
    p.map(|p| if p.is_relative() { base.join(p) } else { p })
}

impl RunConfig {
    pub fn resolve(flags: &Common) -> CliResult<Self> {
        let mut file = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let mut f: FileConfig = toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let base = path.parent().unwrap_or(Path::new("."));
                f.data = anchored(base, f.data);
                f.models = anchored(base, f.models);
                f.out = anchored(base, f.out);
                if let FeatureProviderConfig::FileBacked { root } = &mut f.features {
                    *root = anchored(base, root.take());
                }
                f
            }
            None => FileConfig::default(),
        };
        if let Some(t) = file.cascade_train {
            file.cascade.stages = vec![t; file.cascade.stages.len().max(1)];
        }
        let mut cfg = RunConfig {
            data: flags.data.clone().or(file.data),
            models: flags.models.clone().or(file.models),
            out: flags.out.clone().or(file.out),
            workers: flags.workers.or(file.workers).unwrap_or(0),
            synth: file.synth,
            features: file.features,
            cascade: file.cascade,
            refine: file.refine,
            ensemble: file.ensemble,
        };
        if let Some(seed) = flags.seed.or(file.seed) {
            cfg.synth.video.seed = seed;
            for s in &mut cfg.cascade.stages {
                s.seed = seed;
            }
            cfg.refine.train.seed = seed;
        }
        if let Some(v) = flags.gap_short {
            cfg.refine.gap_short = v;
        }
        if let Some(v) = flags.gap_long {
            cfg.refine.gap_long = v;
        }
        if let Some(v) = flags.cube_k {
            cfg.refine.depth = v;
        }
        if let Some(v) = flags.cube_s {
            cfg.refine.side = v;
        }
        cfg.cascade.validate()?;
        cfg.refine.spec(gvcod_core::refine::Term::Short)?;
        cfg.refine.spec(gvcod_core::refine::Term::Long)?;
        cfg.refine.train.validate()?;
        cfg.ensemble.validate()?;
        cfg.synth.video.validate()?;
        Ok(cfg)
    }
}
