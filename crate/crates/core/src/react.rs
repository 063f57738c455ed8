//! Rectified activations: clamp penultimate features at a single scalar
//! threshold, `min(x, c)`, with `c` either given directly or taken as a
//! percentile of in-distribution activations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::FeatureMatrix;

/// Clamp threshold tuned for the EVA-CLIP giant (patch14, 336px) ImageNet-1k
/// head. Only meaningful for features from that model.
pub const EVA_CLIP_CLAMP: f32 = -0.768_535_85;

/// How the clamp threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "lowercase")]
pub enum ReactConfig {
    /// Use this threshold as-is.
    Threshold(f32),
    /// Use the given percentile, in `(0, 100)`, of pooled ID activations.
    Percentile(f64),
}

impl ReactConfig {
    pub fn threshold(c: f32) -> Result<Self> {
        check_threshold(c)?;
        Ok(ReactConfig::Threshold(c))
    }

    pub fn percentile(p: f64) -> Result<Self> {
        check_percentile(p)?;
        Ok(ReactConfig::Percentile(p))
    }

    pub fn mode_name(&self) -> &'static str {
        match self {
            ReactConfig::Threshold(_) => "threshold",
            ReactConfig::Percentile(_) => "percentile",
        }
    }

    /// The configured number: `c` in threshold mode, `p` in percentile mode.
    pub fn value(&self) -> f64 {
        match *self {
            ReactConfig::Threshold(c) => c as f64,
            ReactConfig::Percentile(p) => p,
        }
    }

    /// Resolves to a concrete clamp threshold, calibrating on `id_features`
    /// in percentile mode.
    pub fn resolve(&self, id_features: Option<&FeatureMatrix>) -> Result<f32> {
        match *self {
            ReactConfig::Threshold(c) => {
                check_threshold(c)?;
                Ok(c)
            }
            ReactConfig::Percentile(p) => {
                let features = id_features.ok_or_else(|| {
                    Error::invalid("percentile clamping needs ID features to calibrate on")
                })?;
                calibrate_threshold(features, p)
            }
        }
    }
}

fn check_threshold(c: f32) -> Result<()> {
    if c.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("clamp threshold must be finite, got {c}")))
    }
}

pub(crate) fn check_percentile(p: f64) -> Result<()> {
    if p > 0.0 && p < 100.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("percentile must lie in (0, 100), got {p}")))
    }
}

/// Returns a copy of `features` with every element replaced by `min(x, c)`.
pub fn apply_react(features: &FeatureMatrix, c: f32) -> Result<FeatureMatrix> {
    check_threshold(c)?;
    let cols = features.cols();
    let mut out = features.values().to_vec();
    out.par_chunks_mut(cols).for_each(|row| {
        for v in row {
            if *v > c {
                *v = c;
            }
        }
    });
    Ok(FeatureMatrix::from_parts_unchecked(features.rows(), cols, out))
}

/// Percentile of a sorted slice with linear interpolation between closest
/// ranks: rank `1 + (p/100)(n - 1)`, one-based.
pub(crate) fn interpolated_percentile(sorted: &[f32], p: f64) -> f64 {
    let n = sorted.len();
    let rank = (p / 100.0) * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let lo = lo.min(n - 1);
    let frac = rank - lo as f64;
    let low = sorted[lo] as f64;
    if lo + 1 >= n || frac == 0.0 {
        return low;
    }
    let high = sorted[lo + 1] as f64;
    low + frac * (high - low)
}

/// The `p`-th percentile of all `N × m` activations pooled together.
pub fn calibrate_threshold(id_features: &FeatureMatrix, p: f64) -> Result<f32> {
    check_percentile(p)?;
    let mut pool = id_features.values().to_vec();
    if pool.is_empty() {
        return Err(Error::Empty("feature matrix"));
    }
    pool.par_sort_unstable_by(f32::total_cmp);
    Ok(interpolated_percentile(&pool, p) as f32)
}

/// Fraction of pooled activations that are `<= c`.
pub fn coverage_fraction(id_features: &FeatureMatrix, c: f32) -> f64 {
    let values = id_features.values();
    let below = values.par_iter().filter(|&&v| v <= c).count();
    below as f64 / values.len() as f64
}
