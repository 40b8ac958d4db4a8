//! Fusion of the short- and long-term refined maps and adaptive binarization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{BinaryMask, PredictionMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    Adaptive,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    /// Weight of the long-term map; the short-term map gets `1 - long_weight`.
    pub long_weight: f64,
    pub threshold: ThresholdMode,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            long_weight: 0.5,
            threshold: ThresholdMode::Adaptive,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.long_weight) {
            return Err(Error::InvalidConfig(format!(
                "long_weight {} outside [0, 1]",
                self.long_weight
            )));
        }
        if let ThresholdMode::Fixed(t) = self.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidConfig(format!(
                    "threshold {t} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn threshold_for(&self, map: &PredictionMap) -> f64 {
        match self.threshold {
            ThresholdMode::Adaptive => adaptive_threshold(map),
            ThresholdMode::Fixed(t) => t,
        }
    }
}

/// Pixelwise `w * long + (1 - w) * short`.
pub fn fuse(
    short: &PredictionMap,
    long: &PredictionMap,
    cfg: &EnsembleConfig,
) -> Result<PredictionMap> {
    cfg.validate()?;
    if (short.height(), short.width()) != (long.height(), long.width()) {
        return Err(Error::ShapeMismatch(format!(
            "short {}x{} vs long {}x{}",
            short.height(),
            short.width(),
            long.height(),
            long.width()
        )));
    }
    let w = cfg.long_weight;
    let data = short
        .values()
        .iter()
        .zip(long.values())
        .map(|(&s, &l)| ((w * l as f64 + (1.0 - w) * s as f64) as f32).clamp(0.0, 1.0))
        .collect();
    PredictionMap::new(short.height(), short.width(), data)
}

/// `min(1, 2 * mean(map))`.
pub fn adaptive_threshold(map: &PredictionMap) -> f64 {
    (2.0 * map.mean()).min(1.0)
}

/// Foreground iff `value > tau`; with `tau == 0` that is any positive value.
pub fn binarize(map: &PredictionMap, tau: f64) -> BinaryMask {
    let data = map.values().iter().map(|&v| v as f64 > tau).collect();
    BinaryMask::new(map.height(), map.width(), data).expect("shape comes from a valid map")
}

/// Binarizes with the threshold selected by `cfg`.
pub fn decide(map: &PredictionMap, cfg: &EnsembleConfig) -> BinaryMask {
    binarize(map, cfg.threshold_for(map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn filled(v: f32) -> PredictionMap {
        PredictionMap::filled(3, 4, v).unwrap()
    }

    #[test]
    fn fuse_examples() {
        let cfg = EnsembleConfig::default();
        let f = fuse(&filled(0.2), &filled(0.6), &cfg).unwrap();
        assert!(f.values().iter().all(|&v| (v - 0.4).abs() < 1e-7));
        let s = PredictionMap::new(1, 3, vec![0.1, 0.3, 0.7]).unwrap();
        let l = PredictionMap::new(1, 3, vec![0.9, 0.2, 0.05]).unwrap();
        let only_long = EnsembleConfig {
            long_weight: 1.0,
            ..cfg
        };
        assert_eq!(fuse(&s, &l, &only_long).unwrap(), l);
        let only_short = EnsembleConfig {
            long_weight: 0.0,
            ..cfg
        };
        assert_eq!(fuse(&s, &l, &only_short).unwrap(), s);
        let other = PredictionMap::filled(2, 2, 0.0).unwrap();
        assert!(fuse(&s, &other, &cfg).is_err());
    }

    #[test]
    fn adaptive_threshold_examples() {
        assert!((adaptive_threshold(&filled(0.3)) - 0.6).abs() < 1e-7);
        assert_eq!(adaptive_threshold(&filled(0.0)), 0.0);
        assert_eq!(adaptive_threshold(&filled(0.7)), 1.0);
    }

    #[test]
    fn binarize_examples() {
        let m = PredictionMap::new(1, 2, vec![0.2, 0.8]).unwrap();
        assert_eq!(binarize(&m, 0.5).data(), &[false, true]);
        assert_eq!(binarize(&filled(0.5), 0.5).count(), 0);
        assert_eq!(binarize(&filled(0.0), 0.0).count(), 0);
    }

    proptest! {
        #[test]
        fn fuse_is_monotone(
            s in proptest::collection::vec(0.0f32..=1.0, 6),
            l in proptest::collection::vec(0.0f32..=1.0, 6),
            w in 0.0f64..=1.0,
            idx in 0usize..6,
            bump in 0.0f32..=1.0,
        ) {
            let cfg = EnsembleConfig { long_weight: w, ..EnsembleConfig::default() };
            let sm = PredictionMap::new(2, 3, s.clone()).unwrap();
            let lm = PredictionMap::new(2, 3, l.clone()).unwrap();
            let base = fuse(&sm, &lm, &cfg).unwrap();
            let mut s2 = s.clone();
            s2[idx] = (s2[idx] + bump).min(1.0);
            let mut l2 = l.clone();
            l2[idx] = (l2[idx] + bump).min(1.0);
            let up = fuse(&PredictionMap::new(2, 3, s2).unwrap(), &PredictionMap::new(2, 3, l2).unwrap(), &cfg).unwrap();
            for (a, b) in base.values().iter().zip(up.values()) {
                prop_assert!(b >= a);
                prop_assert!((0.0..=1.0).contains(b));
            }
        }
    }
}
