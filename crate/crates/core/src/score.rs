//! Head application, multi-view logit averaging, temperature-scaled
//! maximum softmax probability, and the ID/OOD decision rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::react::apply_react;
use crate::tensor::{ClassifierHead, FeatureMatrix, LabelVector, LogitMatrix, ScoreVector};

/// Softmax temperature tuned alongside [`crate::react::EVA_CLIP_CLAMP`].
pub const DEFAULT_TEMPERATURE: f32 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub temperature: f32,
    /// Decision threshold; `None` until calibrated.
    pub tau: Option<f32>,
}

impl ScoreConfig {
    pub fn new(temperature: f32, tau: Option<f32>) -> Result<Self> {
        check_temperature(temperature)?;
        if let Some(t) = tau {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::invalid(format!("tau must lie in (0, 1], got {t}")));
            }
        }
        Ok(ScoreConfig { temperature, tau })
    }
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            temperature: DEFAULT_TEMPERATURE,
            tau: None,
        }
    }
}

fn check_temperature(t: f32) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("temperature must be positive and finite, got {t}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Decision {
    Id,
    Ood,
}

/// `h W + b` per row, accumulated in `f64`.
pub fn compute_logits(features: &FeatureMatrix, head: &ClassifierHead) -> Result<LogitMatrix> {
    let m = features.cols();
    if m != head.feature_dim() {
        return Err(Error::DimensionMismatch(format!(
            "features have {m} columns but the head expects {}",
            head.feature_dim()
        )));
    }
    let classes = head.classes();
    let weights = head.weights();
    let bias = head.bias();
    let mut out = vec![0f32; features.rows() * classes];
    out.par_chunks_mut(classes)
        .zip(features.values().par_chunks(m))
        .for_each_init(
            || vec![0f64; classes],
            |acc, (logits, h)| {
                acc.iter_mut().zip(bias).for_each(|(a, &b)| *a = b as f64);
                for (k, &hk) in h.iter().enumerate() {
                    let hk = hk as f64;
                    let w_row = &weights[k * classes..(k + 1) * classes];
                    for (a, &w) in acc.iter_mut().zip(w_row) {
                        *a += hk * w as f64;
                    }
                }
                for (l, &a) in logits.iter_mut().zip(acc.iter()) {
                    *l = a as f32;
                }
            },
        );
    LogitMatrix::new(features.rows(), classes, out)
}

/// Elementwise mean over views, summed in `f64` from view 0 upward.
pub fn ensemble_logits(views: &[&LogitMatrix]) -> Result<LogitMatrix> {
    let first = views.first().ok_or(Error::Empty("view list"))?;
    let (rows, cols) = (first.rows(), first.cols());
    if let Some((i, v)) = views
        .iter()
        .enumerate()
        .find(|(_, v)| v.rows() != rows || v.cols() != cols)
    {
        return Err(Error::DimensionMismatch(format!(
            "view {i} is {}x{} but view 0 is {rows}x{cols}",
            v.rows(),
            v.cols()
        )));
    }
    let k = views.len() as f64;
    let out: Vec<f32> = (0..rows * cols)
        .into_par_iter()
        .map(|idx| {
            let mut sum = 0f64;
            for v in views {
                sum += v.values()[idx] as f64;
            }
            (sum / k) as f32
        })
        .collect();
    LogitMatrix::new(rows, cols, out)
}

/// Full softmax of `logits / temperature`, max-subtracted, in `f64`.
pub fn softmax(logits: &[f32], temperature: f32) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    let t = temperature as f64;
    let max = logits
        .iter()
        .map(|&l| l as f64 / t)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l as f64 / t - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

fn msp_row(row: &[f32], t: f64) -> f32 {
    let scaled_max = row.iter().map(|&l| l as f64 / t).fold(f64::NEG_INFINITY, f64::max);
    // the arg-max term contributes exp(0) = 1
    let sum: f64 = row.iter().map(|&l| (l as f64 / t - scaled_max).exp()).sum();
    (1.0 / sum) as f32
}

/// Maximum softmax probability per row at the given temperature.
pub fn msp_score(logits: &LogitMatrix, temperature: f32) -> Result<ScoreVector> {
    check_temperature(temperature)?;
    let t = temperature as f64;
    let scores: Vec<f32> = logits
        .values()
        .par_chunks(logits.cols())
        .map(|row| msp_row(row, t))
        .collect();
    ScoreVector::new(scores)
}

/// ID when the score is strictly above `tau`, OOD otherwise.
pub fn classify(scores: &ScoreVector, tau: f32) -> Vec<Decision> {
    scores
        .as_slice()
        .iter()
        .map(|&s| if s > tau { Decision::Id } else { Decision::Ood })
        .collect()
}

/// Row-wise arg-max, lowest index on ties.
pub fn predict_class(logits: &LogitMatrix) -> LabelVector {
    let labels = logits
        .iter_rows()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best as u32
        })
        .collect();
    LabelVector::new(labels).expect("logit matrices have at least one row")
}

/// Output of [`score_views`].
#[derive(Debug, Clone)]
pub struct ScoredViews {
    pub logits: LogitMatrix,
    pub scores: ScoreVector,
}

/// Full scoring pipeline: per view clamp (when `clamp` is set) and apply the
/// head, then average the logits and take the temperature-scaled MSP.
pub fn score_views(
    views: &[&FeatureMatrix],
    head: &ClassifierHead,
    clamp: Option<f32>,
    temperature: f32,
) -> Result<ScoredViews> {
    check_temperature(temperature)?;
    let first = views.first().ok_or(Error::Empty("view list"))?;
    if let Some((i, v)) = views
        .iter()
        .enumerate()
        .find(|(_, v)| v.rows() != first.rows() || v.cols() != first.cols())
    {
        return Err(Error::DimensionMismatch(format!(
            "view {i} is {}x{} but view 0 is {}x{}",
            v.rows(),
            v.cols(),
            first.rows(),
            first.cols()
        )));
    }
    let per_view = views
        .iter()
        .map(|&v| match clamp {
            Some(c) => compute_logits(&apply_react(v, c)?, head),
            None => compute_logits(v, head),
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&LogitMatrix> = per_view.iter().collect();
    let logits = ensemble_logits(&refs)?;
    let scores = msp_score(&logits, temperature)?;
    Ok(ScoredViews { logits, scores })
}
