//! Slow, direct reference implementations used to check the fast paths.
//! Each one follows its definition literally and shares no code with the
//! module it checks.

use crate::error::{Error, Result};
use crate::tensor::{ClassifierHead, FeatureMatrix};

/// Largest side accepted by the quadratic oracles.
pub const MAX_PAIRWISE_SIDE: usize = 10_000;
/// Largest element count accepted by [`oracle_matmul`] and [`oracle_fused_scores`].
pub const MAX_MATMUL_WORK: usize = 50_000_000;

fn cap(n: usize, limit: usize, what: &str) -> Result<()> {
    if n > limit {
        Err(Error::invalid(format!("{what}: {n} exceeds oracle cap {limit}")))
    } else {
        Ok(())
    }
}

/// Pairwise AUROC over every (ID, OOD) pair, ties worth one half.
pub fn oracle_auroc(id: &[f32], ood: &[f32]) -> Result<f64> {
    if id.is_empty() || ood.is_empty() {
        return Err(Error::Empty("oracle_auroc input"));
    }
    cap(id.len().max(ood.len()), MAX_PAIRWISE_SIDE, "oracle_auroc")?;
    let mut doubled_wins = 0u64;
    for &a in id {
        for &b in ood {
            if a > b {
                doubled_wins += 2;
            } else if a == b {
                doubled_wins += 1;
            }
        }
    }
    Ok(doubled_wins as f64 / (2 * id.len() as u64 * ood.len() as u64) as f64)
}

/// Tries every observed ID score as a threshold (accept when `score >= t`)
/// and keeps the largest one whose TPR reaches the target.
/// Returns `(fpr, tau)`.
pub fn oracle_fpr_at_tpr(id: &[f32], ood: &[f32], tpr_target: f64) -> Result<(f64, f32)> {
    if id.is_empty() || ood.is_empty() {
        return Err(Error::Empty("oracle_fpr_at_tpr input"));
    }
    cap(id.len().max(ood.len()), MAX_PAIRWISE_SIDE, "oracle_fpr_at_tpr")?;
    let mut best: Option<f32> = None;
    for &t in id {
        let accepted = id.iter().filter(|&&s| s >= t).count();
        let tpr = accepted as f64 / id.len() as f64;
        if tpr >= tpr_target && best.is_none_or(|b| t > b) {
            best = Some(t);
        }
    }
    let tau = best.ok_or_else(|| Error::invalid("no threshold reaches the TPR target"))?;
    let fp = ood.iter().filter(|&&s| s >= tau).count();
    Ok((fp as f64 / ood.len() as f64, tau))
}

/// Percentile with one-based rank `1 + (p/100)(n - 1)` and linear
/// interpolation, computed after an insertion sort.
pub fn oracle_percentile(values: &[f32], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("oracle_percentile input"));
    }
    cap(values.len(), 100_000, "oracle_percentile")?;
    let mut v: Vec<f64> = Vec::with_capacity(values.len());
    for &x in values {
        let x = x as f64;
        let at = v.iter().position(|&y| y > x).unwrap_or(v.len());
        v.insert(at, x);
    }
    let rank = 1.0 + (p / 100.0) * (v.len() - 1) as f64;
    let lower = rank.floor();
    let i = lower as usize;
    if i >= v.len() {
        return Ok(v[v.len() - 1]);
    }
    Ok(v[i - 1] + (rank - lower) * (v[i] - v[i - 1]))
}

/// `features × W + b` by triple loop, in `f64`. Row-major `N × C`.
pub fn oracle_matmul(features: &FeatureMatrix, head: &ClassifierHead) -> Result<Vec<f64>> {
    let (n, m, c) = (features.rows(), features.cols(), head.classes());
    if m != head.feature_dim() {
        return Err(Error::DimensionMismatch("oracle_matmul".into()));
    }
    cap(n * m * c, MAX_MATMUL_WORK, "oracle_matmul")?;
    let x = features.values();
    let w = head.weights();
    let mut out = vec![0f64; n * c];
    for i in 0..n {
        for j in 0..c {
            let mut acc = head.bias()[j] as f64;
            for k in 0..m {
                acc += x[i * m + k] as f64 * w[k * c + j] as f64;
            }
            out[i * c + j] = acc;
        }
    }
    Ok(out)
}

/// Softmax of `logits / t` straight from the definition, no max shift.
/// Only valid while `|logit / t|` stays below roughly 700.
pub fn oracle_softmax(logits: &[f64], t: f64) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Empty("oracle_softmax input"));
    }
    if logits.iter().any(|l| (l / t).abs() > 700.0) {
        return Err(Error::invalid("oracle_softmax: logit / T outside exp range"));
    }
    let exps: Vec<f64> = logits.iter().map(|l| (l / t).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.iter().map(|e| e / z).collect())
}

/// Single-pass reference for the whole scoring pipeline: for each sample,
/// clamp every view's features, apply the head, average the logits over
/// views, then take the max of [`oracle_softmax`].
pub fn oracle_fused_scores(
    views: &[&FeatureMatrix],
    head: &ClassifierHead,
    clamp: Option<f32>,
    t: f32,
) -> Result<Vec<f64>> {
    let first = views.first().ok_or(Error::Empty("oracle_fused_scores views"))?;
    let (n, m, c) = (first.rows(), first.cols(), head.classes());
    cap(n * m * c * views.len(), MAX_MATMUL_WORK, "oracle_fused_scores")?;
    let w = head.weights();
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let mut mean = vec![0f64; c];
        for view in views {
            let row = view.row(i);
            for j in 0..c {
                let mut acc = head.bias()[j] as f64;
                for k in 0..m {
                    let h = match clamp {
                        Some(cl) if row[k] > cl => cl,
                        _ => row[k],
                    };
                    acc += h as f64 * w[k * c + j] as f64;
                }
                // per-view logits are stored as f32 by the fast path
                mean[j] += (acc as f32) as f64;
            }
        }
        for v in &mut mean {
            *v = ((*v / views.len() as f64) as f32) as f64;
        }
        let p = oracle_softmax(&mean, t as f64)?;
        scores.push(p.into_iter().fold(f64::MIN, f64::max));
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_checked_values() {
        assert_eq!(oracle_auroc(&[0.9, 0.4], &[0.6, 0.3]).unwrap(), 0.75);
        let ten: Vec<f32> = (1..=10).map(|v| v as f32).collect();
        assert!((oracle_percentile(&ten, 90.0).unwrap() - 9.1).abs() < 1e-12);
        let p = oracle_softmax(&[2.0, 0.0], 1.0).unwrap();
        assert!((p[0] - 0.880797).abs() < 1e-6);
        assert!((p[1] - 0.119203).abs() < 1e-6);
        let (fpr, tau) =
            oracle_fpr_at_tpr(&[0.9, 0.8, 0.7, 0.6, 0.5], &[0.65, 0.4], 0.8).unwrap();
        assert_eq!((fpr, tau), (0.5, 0.6));
    }

    #[test]
    fn caps_are_enforced() {
        let big = vec![0.0f32; MAX_PAIRWISE_SIDE + 1];
        assert!(oracle_auroc(&big, &[0.0]).is_err());
        assert!(oracle_softmax(&[1e6, 0.0], 1.0).is_err());
    }
}
