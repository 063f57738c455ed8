//! Synthetic fixtures with known structure, plus reference oracles.
//!
//! A fixture has `C` unit class prototypes `u_k` in feature space (made
//! orthonormal when `m >= C`). The head's weight column `k` is `u_k`, plus
//! optional Gaussian noise to misspecify it, and the bias is zero. ID sample
//! `i` belongs to class `i mod C` and sits at `id_mean_shift * u_k` plus noise.
//! OOD sample `j` starts from the same class mean and moves `ood_mean_shift`
//! along the unit direction from `u_k` toward the prototype centroid, which
//! erodes the class margin. A shift of zero makes OOD and ID identically
//! distributed (with Gaussian ID noise).
//!
//! Draw order from the single stream: prototypes (`C × m` normals), head
//! noise (`m × C` normals, always drawn), ID rows, OOD rows, then extra
//! views (`views - 1` passes of per-element normals over ID then OOD).

pub mod oracle;
pub mod rng;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ClassifierHead, FeatureMatrix, LabelVector, ScoreVector};
use rng::FixtureRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_id: usize,
    pub n_ood: usize,
    pub dim: usize,
    pub classes: usize,
    pub id_mean_shift: f32,
    pub ood_mean_shift: f32,
    pub sigma: f32,
    pub seed: u64,
    /// Student-t degrees of freedom for ID noise; Gaussian when `None`.
    #[serde(default)]
    pub id_noise_df: Option<u32>,
    /// Std-dev of Gaussian noise added to every head weight.
    #[serde(default)]
    pub head_noise: f32,
    #[serde(default = "one")]
    pub views: usize,
    /// Std-dev of the extra per-element noise on views `1..views`.
    #[serde(default)]
    pub view_noise: f32,
}

fn one() -> usize {
    1
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_id: 2000,
            n_ood: 2000,
            dim: 64,
            classes: 10,
            id_mean_shift: 4.0,
            ood_mean_shift: 2.0,
            sigma: 1.0,
            seed: 0,
            id_noise_df: None,
            head_noise: 0.0,
            views: 1,
            view_noise: 0.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_id == 0 || self.n_ood == 0 {
            return bad(format!("sample counts must be >= 1 (n_id {}, n_ood {})", self.n_id, self.n_ood));
        }
        if self.dim == 0 {
            return bad("feature dimension must be >= 1".into());
        }
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.views == 0 {
            return bad("views must be >= 1".into());
        }
        if self.id_noise_df == Some(0) {
            return bad("id_noise_df must be >= 1".into());
        }
        for (name, v) in [
            ("id_mean_shift", self.id_mean_shift),
            ("ood_mean_shift", self.ood_mean_shift),
            ("head_noise", self.head_noise),
            ("view_noise", self.view_noise),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if self.head_noise < 0.0 || self.view_noise < 0.0 {
            return bad("noise scales must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    /// One entry per view; view 0 is the unperturbed draw.
    pub id_views: Vec<FeatureMatrix>,
    pub ood_views: Vec<FeatureMatrix>,
    pub head: ClassifierHead,
    pub id_labels: LabelVector,
}

impl Fixture {
    pub fn id_features(&self) -> &FeatureMatrix {
        &self.id_views[0]
    }

    pub fn ood_features(&self) -> &FeatureMatrix {
        &self.ood_views[0]
    }
}

fn prototypes(rng: &mut FixtureRng, classes: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut protos: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| rng.normal()).collect())
        .collect();
    let orthogonalize = dim >= classes;
    for k in 0..classes {
        if orthogonalize {
            for j in 0..k {
                let dot: f64 = protos[k].iter().zip(&protos[j]).map(|(a, b)| a * b).sum();
                let (head, tail) = protos.split_at_mut(k);
                for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                    *a -= dot * b;
                }
            }
        }
        let norm = protos[k].iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 0.0 {
            protos[k].iter_mut().for_each(|a| *a /= norm);
        }
    }
    protos
}

pub fn generate(spec: &SynthSpec) -> Result<Fixture> {
    spec.validate()?;
    let (m, c) = (spec.dim, spec.classes);
    let mut rng = FixtureRng::new(spec.seed);

    let protos = prototypes(&mut rng, c, m);
    let centroid: Vec<f64> = (0..m)
        .map(|d| protos.iter().map(|p| p[d]).sum::<f64>() / c as f64)
        .collect();
    let toward_centroid: Vec<Vec<f64>> = protos
        .iter()
        .map(|p| {
            let dir: Vec<f64> = centroid.iter().zip(p).map(|(g, u)| g - u).collect();
            let norm = dir.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 0.0 {
                dir.into_iter().map(|a| a / norm).collect()
            } else {
                dir
            }
        })
        .collect();

    let mut weights = Vec::with_capacity(m * c);
    for d in 0..m {
        for proto in &protos {
            let z = rng.normal();
            weights.push((proto[d] + spec.head_noise as f64 * z) as f32);
        }
    }
    let head = ClassifierHead::new(m, c, weights, vec![0.0; c])?;

    let a = spec.id_mean_shift as f64;
    let s = spec.ood_mean_shift as f64;
    let sigma = spec.sigma as f64;

    let mut id = Vec::with_capacity(spec.n_id * m);
    let mut labels = Vec::with_capacity(spec.n_id);
    for i in 0..spec.n_id {
        let k = i % c;
        labels.push(k as u32);
        for &u in &protos[k] {
            let noise = match spec.id_noise_df {
                Some(df) => rng.student_t(df),
                None => rng.normal(),
            };
            id.push((a * u + sigma * noise) as f32);
        }
    }

    let mut ood = Vec::with_capacity(spec.n_ood * m);
    for j in 0..spec.n_ood {
        let k = j % c;
        for d in 0..m {
            let mean = a * protos[k][d] + s * toward_centroid[k][d];
            ood.push((mean + sigma * rng.normal()) as f32);
        }
    }

    let id_base = FeatureMatrix::new(spec.n_id, m, id)?;
    let ood_base = FeatureMatrix::new(spec.n_ood, m, ood)?;
    let mut id_views = vec![id_base];
    let mut ood_views = vec![ood_base];
    let jitter = spec.view_noise as f64;
    for _ in 1..spec.views {
        for (views, n) in [(&mut id_views, spec.n_id), (&mut ood_views, spec.n_ood)] {
            let base = views[0].values();
            let values: Vec<f32> = base
                .iter()
                .map(|&v| (v as f64 + jitter * rng.normal()) as f32)
                .collect();
            views.push(FeatureMatrix::new(n, m, values)?);
        }
    }

    Ok(Fixture {
        id_views,
        ood_views,
        head,
        id_labels: LabelVector::new(labels)?,
    })
}

/// `n` draws of `Normal(mean, sd)` as a score vector, for metric checks.
pub fn normal_scores(n: usize, mean: f64, sd: f64, seed: u64) -> Result<ScoreVector> {
    let mut rng = FixtureRng::new(seed);
    ScoreVector::new((0..n).map(|_| (mean + sd * rng.normal()) as f32).collect())
}

/// Paths of a fixture written by [`write_fixture`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureFiles {
    pub id_views: Vec<PathBuf>,
    pub ood_views: Vec<PathBuf>,
    pub head_weights: PathBuf,
    pub head_bias: PathBuf,
    pub id_labels: PathBuf,
    pub sidecar: PathBuf,
}

impl FixtureFiles {
    pub fn in_dir(dir: &Path, views: usize) -> Self {
        FixtureFiles {
            id_views: (0..views).map(|v| dir.join(format!("id_view{v}.oodt"))).collect(),
            ood_views: (0..views).map(|v| dir.join(format!("ood_view{v}.oodt"))).collect(),
            head_weights: dir.join("head_weights.oodt"),
            head_bias: dir.join("head_bias.oodt"),
            id_labels: dir.join("id_labels.oodt"),
            sidecar: dir.join("synth.json"),
        }
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    spec: &'a SynthSpec,
    rng: &'static str,
    gaussian: &'static str,
    files: &'a FixtureFiles,
}

pub fn write_fixture(spec: &SynthSpec, dir: &Path) -> Result<FixtureFiles> {
    let fixture = generate(spec)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = FixtureFiles::in_dir(dir, spec.views);
    for (m, path) in fixture.id_views.iter().zip(&files.id_views) {
        m.save(path)?;
    }
    for (m, path) in fixture.ood_views.iter().zip(&files.ood_views) {
        m.save(path)?;
    }
    fixture.head.save(&files.head_weights, &files.head_bias)?;
    fixture.id_labels.save(&files.id_labels)?;
    let relative = FixtureFiles::in_dir(Path::new(""), spec.views);
    let sidecar = Sidecar {
        spec,
        rng: rng::ALGORITHM,
        gaussian: rng::GAUSSIAN_TRANSFORM,
        files: &relative,
    };
    let mut json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    json.push('\n');
    fs::write(&files.sidecar, json).map_err(|e| Error::io(&files.sidecar, e))?;
    Ok(files)
}
