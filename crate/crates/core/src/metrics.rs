//! AUROC, FPR at a target TPR, top-1 accuracy, and the evaluation report.
//!
//! ID samples are the positives and a higher score means "more ID".
//!
//! AUROC is the Mann-Whitney statistic: the fraction of (ID, OOD) pairs where
//! the ID score is higher, a tied pair counting one half.
//!
//! FPR at a TPR target uses observed ID scores as thresholds without any
//! interpolation. With ID scores sorted descending, `tau` is the `k`-th
//! largest where `k` is the smallest count with `k / n_id >= target`, and both
//! rates count scores `>= tau`. The TPR achieved is therefore never below the
//! target. Deployment-time classification ([`crate::score::classify`]) uses a
//! strict `>` instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::react::ReactConfig;
use crate::tensor::{LabelVector, ScoreVector};

pub const DEFAULT_TPR_TARGET: f64 = 0.95;

fn sorted(scores: &[f32]) -> Vec<f32> {
    let mut v = scores.to_vec();
    v.sort_unstable_by(f32::total_cmp);
    v
}

fn check_sides(id: &[f32], ood: &[f32]) -> Result<()> {
    if id.is_empty() {
        return Err(Error::Empty("ID scores"));
    }
    if ood.is_empty() {
        return Err(Error::Empty("OOD scores"));
    }
    Ok(())
}

/// Twice the Mann-Whitney U statistic of ID over OOD: two per win, one per tie.
fn doubled_u(id: &[f32], ood: &[f32]) -> u64 {
    let id = sorted(id);
    let ood = sorted(ood);
    let mut doubled = 0u64;
    // Sweep both sorted lists once; `below` and `upto` are the OOD counts
    // strictly below and less-or-equal to the current ID score.
    let (mut below, mut upto) = (0usize, 0usize);
    for &s in &id {
        while below < ood.len() && ood[below] < s {
            below += 1;
        }
        if upto < below {
            upto = below;
        }
        while upto < ood.len() && ood[upto] <= s {
            upto += 1;
        }
        doubled += 2 * below as u64 + (upto - below) as u64;
    }
    doubled
}

pub fn auroc(id_scores: &[f32], ood_scores: &[f32]) -> Result<f64> {
    check_sides(id_scores, ood_scores)?;
    let pairs = 2 * id_scores.len() as u64 * ood_scores.len() as u64;
    Ok(doubled_u(id_scores, ood_scores) as f64 / pairs as f64)
}

/// Smallest `k` in `1..=n` with `k / n >= target`.
pub(crate) fn accepted_count(n: usize, target: f64) -> usize {
    let nf = n as f64;
    let mut k = ((target * nf).ceil() as usize).clamp(1, n);
    while k > 1 && (k - 1) as f64 / nf >= target {
        k -= 1;
    }
    while k < n && (k as f64 / nf) < target {
        k += 1;
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub tau: f32,
}

pub fn fpr_at_tpr(id_scores: &[f32], ood_scores: &[f32], tpr_target: f64) -> Result<OperatingPoint> {
    check_sides(id_scores, ood_scores)?;
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(Error::invalid(format!(
            "TPR target must lie in (0, 1], got {tpr_target}"
        )));
    }
    let mut id = sorted(id_scores);
    id.reverse();
    let k = accepted_count(id.len(), tpr_target);
    let tau = id[k - 1];
    let tp = id.iter().filter(|&&s| s >= tau).count();
    let fp = ood_scores.iter().filter(|&&s| s >= tau).count();
    Ok(OperatingPoint {
        fpr: fp as f64 / ood_scores.len() as f64,
        tpr: tp as f64 / id.len() as f64,
        tau,
    })
}

pub fn id_accuracy(predictions: &LabelVector, truth: &LabelVector) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    let hits = predictions
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Settings that produced a pair of score vectors, echoed into the report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunEcho {
    pub temperature: f32,
    pub react: Option<ReactConfig>,
    /// Resolved clamp threshold, if any.
    pub react_c: Option<f32>,
    pub n_views: usize,
}

/// Flat evaluation record. Field names are a stable output contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc: f64,
    pub fpr_at_95tpr: f64,
    pub id_accuracy: Option<f64>,
    pub tau_at_95tpr: f32,
    pub n_id: usize,
    pub n_ood: usize,
    pub temperature: Option<f32>,
    pub react_mode: Option<String>,
    pub react_value: Option<f64>,
    pub n_views: Option<usize>,
    pub react_c: Option<f32>,
    pub tpr_target: f64,
}

pub fn evaluate(
    id_scores: &ScoreVector,
    ood_scores: &ScoreVector,
    accuracy_inputs: Option<(&LabelVector, &LabelVector)>,
    echo: Option<&RunEcho>,
) -> Result<EvalReport> {
    evaluate_at(id_scores, ood_scores, accuracy_inputs, echo, DEFAULT_TPR_TARGET)
}

/// [`evaluate`] with a TPR target other than 0.95.
pub fn evaluate_at(
    id_scores: &ScoreVector,
    ood_scores: &ScoreVector,
    accuracy_inputs: Option<(&LabelVector, &LabelVector)>,
    echo: Option<&RunEcho>,
    tpr_target: f64,
) -> Result<EvalReport> {
    let (id, ood) = (id_scores.as_slice(), ood_scores.as_slice());
    let auroc = auroc(id, ood)?;
    let op = fpr_at_tpr(id, ood, tpr_target)?;
    let id_accuracy = match accuracy_inputs {
        Some((pred, truth)) => {
            if pred.len() != id.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} predictions for {} ID scores",
                    pred.len(),
                    id.len()
                )));
            }
            Some(id_accuracy(pred, truth)?)
        }
        None => None,
    };
    let (react_mode, react_value) = match echo {
        Some(e) => match e.react {
            Some(r) => (Some(r.mode_name().to_string()), Some(r.value())),
            None => (Some("none".to_string()), None),
        },
        None => (None, None),
    };
    Ok(EvalReport {
        auroc,
        fpr_at_95tpr: op.fpr,
        id_accuracy,
        tau_at_95tpr: op.tau,
        n_id: id.len(),
        n_ood: ood.len(),
        temperature: echo.map(|e| e.temperature),
        react_mode,
        react_value,
        n_views: echo.map(|e| e.n_views),
        react_c: echo.and_then(|e| e.react_c),
        tpr_target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.8], &[0.2, 0.1]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3, 0.5, 0.5], &[0.5, 0.3, 0.5]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.9, 0.4], &[0.6, 0.3]).unwrap(), 0.75);
        assert_eq!(auroc(&[0.1], &[0.9]).unwrap(), 0.0);
        assert!(matches!(auroc(&[], &[0.1]), Err(Error::Empty(_))));
        assert!(matches!(auroc(&[0.1], &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn fpr_example_from_five_id_scores() {
        let op = fpr_at_tpr(&[0.9, 0.8, 0.7, 0.6, 0.5], &[0.65, 0.4], 0.8).unwrap();
        assert_eq!(op.tau, 0.6);
        assert_eq!(op.tpr, 0.8);
        assert_eq!(op.fpr, 0.5);
    }

    #[test]
    fn fpr_degenerate_cases() {
        let op = fpr_at_tpr(&[0.9, 0.8], &[0.2, 0.1], 0.95).unwrap();
        assert_eq!(op.fpr, 0.0);
        let op = fpr_at_tpr(&[0.5; 10], &[0.5; 7], 0.95).unwrap();
        assert_eq!(op.fpr, 1.0);
        assert!(fpr_at_tpr(&[0.5], &[0.5], 0.0).is_err());
        assert!(fpr_at_tpr(&[0.5], &[0.5], 1.01).is_err());
        assert!(fpr_at_tpr(&[0.5], &[0.5], 1.0).is_ok());
    }

    #[test]
    fn accepted_count_matches_exact_ratios() {
        assert_eq!(accepted_count(20, 0.95), 19);
        assert_eq!(accepted_count(5, 0.8), 4);
        assert_eq!(accepted_count(100, 0.95), 95);
        assert_eq!(accepted_count(3, 1.0), 3);
        assert_eq!(accepted_count(3, 1e-9), 1);
        for n in 1..300 {
            for target in [0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 0.99] {
                let k = accepted_count(n, target);
                assert!(k as f64 / n as f64 >= target);
                assert!(k == 1 || ((k - 1) as f64 / n as f64) < target);
            }
        }
    }

    #[test]
    fn accuracy() {
        let a = LabelVector::new(vec![0, 1, 2, 3]).unwrap();
        let b = LabelVector::new(vec![0, 1, 2, 0]).unwrap();
        let c = LabelVector::new(vec![1, 2, 3, 0]).unwrap();
        assert_eq!(id_accuracy(&a, &a).unwrap(), 1.0);
        assert_eq!(id_accuracy(&a, &c).unwrap(), 0.0);
        assert_eq!(id_accuracy(&a, &b).unwrap(), 0.75);
        let short = LabelVector::new(vec![0]).unwrap();
        assert!(id_accuracy(&a, &short).is_err());
    }

    #[test]
    fn report_json_keys() {
        let id = ScoreVector::new(vec![0.9, 0.8]).unwrap();
        let ood = ScoreVector::new(vec![0.2, 0.1]).unwrap();
        let echo = RunEcho {
            temperature: 1.1,
            react: Some(ReactConfig::Percentile(90.0)),
            react_c: Some(0.25),
            n_views: 4,
        };
        let r = evaluate(&id, &ood, None, Some(&echo)).unwrap();
        assert_eq!((r.auroc, r.fpr_at_95tpr), (1.0, 0.0));
        let json = serde_json::to_value(&r).unwrap();
        let obj = json.as_object().unwrap();
        for key in [
            "auroc",
            "fpr_at_95tpr",
            "id_accuracy",
            "tau_at_95tpr",
            "n_id",
            "n_ood",
            "temperature",
            "react_mode",
            "react_value",
            "n_views",
        ] {
            assert!(obj.contains_key(key), "missing {key}");
        }
        assert!(obj["id_accuracy"].is_null());
        assert_eq!(obj["react_mode"], "percentile");
        assert_eq!(obj["react_value"], 90.0);
        assert_eq!(obj["n_views"], 4);
    }

    #[test]
    fn empty_ood_gives_no_report() {
        let id = ScoreVector::new(vec![0.9]).unwrap();
        assert!(ScoreVector::new(vec![]).is_err());
        assert!(auroc(id.as_slice(), &[]).is_err());
    }
}
