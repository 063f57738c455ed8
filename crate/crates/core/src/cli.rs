//! `posthoc-ood` command line.
//!
//! Exit codes: 0 on success, 1 for runtime or data errors, 2 for usage errors.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::metrics::{evaluate_at, EvalReport, RunEcho, DEFAULT_TPR_TARGET};
use crate::react::{calibrate_threshold, coverage_fraction, ReactConfig, EVA_CLIP_CLAMP};
use crate::score::{ensemble_logits, predict_class, score_views, DEFAULT_TEMPERATURE};
use crate::synth::{write_fixture, SynthSpec};
use crate::tensor::{ClassifierHead, FeatureMatrix, LabelVector, LogitMatrix, ScoreVector};

#[derive(Debug, Parser)]
#[command(name = "posthoc-ood", version, about = "Post-hoc OOD scoring and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the clamp threshold as a percentile of ID activations.
    Calibrate(CalibrateArgs),
    /// Clamp, apply the head, average views, and write MSP scores.
    Score(ScoreArgs),
    /// Average logit files elementwise.
    Ensemble(EnsembleArgs),
    /// AUROC, FPR at the TPR target, and accuracy from score files.
    Evaluate(EvaluateArgs),
    /// Evaluate a grid of clamp settings, temperatures and view counts.
    Sweep(SweepArgs),
    /// Write a synthetic fixture.
    GenSynth(GenSynthArgs),
}

fn parse_percentile(s: &str) -> std::result::Result<f64, String> {
    let p: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if p > 0.0 && p < 100.0 {
        Ok(p)
    } else {
        Err(format!("percentile must lie in (0, 100), got {p}"))
    }
}

fn parse_temperature(s: &str) -> std::result::Result<f32, String> {
    let t: f32 = s.parse().map_err(|e| format!("{e}"))?;
    if t.is_finite() && t > 0.0 {
        Ok(t)
    } else {
        Err(format!("temperature must be positive, got {t}"))
    }
}

fn parse_finite(s: &str) -> std::result::Result<f32, String> {
    let c: f32 = s.parse().map_err(|e| format!("{e}"))?;
    if c.is_finite() {
        Ok(c)
    } else {
        Err(format!("value must be finite, got {c}"))
    }
}

fn parse_tpr(s: &str) -> std::result::Result<f64, String> {
    let t: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if t > 0.0 && t <= 1.0 {
        Ok(t)
    } else {
        Err(format!("TPR target must lie in (0, 1], got {t}"))
    }
}

fn parse_positive(s: &str) -> std::result::Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    if n >= 1 {
        Ok(n)
    } else {
        Err("must be at least 1".into())
    }
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// ID feature matrix.
    #[arg(long)]
    pub features: PathBuf,
    /// Percentile in (0, 100).
    #[arg(long, value_parser = parse_percentile)]
    pub react_percentile: f64,
    /// Indent the JSON output.
    #[arg(long)]
    pub pretty: bool,
}

#[derive(Debug, Args)]
pub struct ReactArgs {
    /// Clamp threshold [default: -0.7685358381271362].
    #[arg(
        long,
        allow_negative_numbers = true,
        value_parser = parse_finite,
        conflicts_with_all = ["react_percentile", "no_react"]
    )]
    pub react_c: Option<f32>,
    /// Clamp at this percentile of the calibration features.
    #[arg(
        long,
        value_parser = parse_percentile,
        requires = "calibration_features",
        conflicts_with = "no_react"
    )]
    pub react_percentile: Option<f64>,
    /// Skip clamping.
    #[arg(long)]
    pub no_react: bool,
    /// ID features used to resolve `--react-percentile`.
    #[arg(long)]
    pub calibration_features: Option<PathBuf>,
}

impl ReactArgs {
    fn config(&self) -> Option<ReactConfig> {
        if self.no_react {
            None
        } else if let Some(p) = self.react_percentile {
            Some(ReactConfig::Percentile(p))
        } else {
            Some(ReactConfig::Threshold(self.react_c.unwrap_or(EVA_CLIP_CLAMP)))
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Feature matrix for one view; repeat once per view.
    #[arg(long = "features", required = true)]
    pub features: Vec<PathBuf>,
    /// Head weights, feature_dim x classes.
    #[arg(long)]
    pub head_weights: PathBuf,
    /// Head bias, one entry per class.
    #[arg(long)]
    pub head_bias: PathBuf,
    #[command(flatten)]
    pub react: ReactArgs,
    /// Softmax temperature.
    #[arg(long, default_value_t = DEFAULT_TEMPERATURE, value_parser = parse_temperature)]
    pub temperature: f32,
    /// Score vector output; a `<out>.json` sidecar records the settings.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the averaged logits.
    #[arg(long)]
    pub logits_out: Option<PathBuf>,
    /// Also write arg-max class predictions.
    #[arg(long)]
    pub predictions_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Logit matrix for one view; repeat once per view.
    #[arg(long = "logits", required = true)]
    pub logits: Vec<PathBuf>,
    /// Averaged logit output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Scores of the ID samples.
    #[arg(long)]
    pub id_scores: PathBuf,
    /// Scores of the OOD samples.
    #[arg(long)]
    pub ood_scores: PathBuf,
    /// Predicted classes for the ID samples.
    #[arg(long, requires = "labels")]
    pub predictions: Option<PathBuf>,
    /// True classes for the ID samples.
    #[arg(long, requires = "predictions")]
    pub labels: Option<PathBuf>,
    /// TPR at which the FPR is reported.
    #[arg(long, default_value_t = DEFAULT_TPR_TARGET, value_parser = parse_tpr)]
    pub tpr_target: f64,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print an aligned table instead of JSON.
    #[arg(long)]
    pub pretty: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// ID features for one view; repeat once per view.
    #[arg(long = "id-features", required = true)]
    pub id_features: Vec<PathBuf>,
    /// OOD features for one view, in the same view order.
    #[arg(long = "ood-features", required = true)]
    pub ood_features: Vec<PathBuf>,
    /// Head weights, feature_dim x classes.
    #[arg(long)]
    pub head_weights: PathBuf,
    /// Head bias, one entry per class.
    #[arg(long)]
    pub head_bias: PathBuf,
    /// True ID classes; enables the accuracy column.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Clamp thresholds to try. With no clamp setting at all, the default threshold is used.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_finite)]
    pub grid_c: Vec<f32>,
    /// Percentiles of ID view-0 activations to try.
    #[arg(long, value_delimiter = ',', value_parser = parse_percentile)]
    pub grid_percentile: Vec<f64>,
    /// Include an unclamped row for every temperature and view count.
    #[arg(long)]
    pub include_no_react: bool,
    /// Temperatures to try [default: 1.1].
    #[arg(long, value_delimiter = ',', value_parser = parse_temperature)]
    pub grid_temperature: Vec<f32>,
    /// Numbers of leading views to average [default: all views].
    #[arg(long, value_delimiter = ',', value_parser = parse_positive)]
    pub grid_views: Vec<usize>,
    /// TPR at which the FPR is reported.
    #[arg(long, default_value_t = DEFAULT_TPR_TARGET, value_parser = parse_tpr)]
    pub tpr_target: f64,
    /// Also write the rows as JSON lines here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print an aligned table instead of JSON lines.
    #[arg(long)]
    pub pretty: bool,
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for the fixture generator.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of ID samples.
    #[arg(long, default_value_t = 2000, value_parser = parse_positive)]
    pub n_id: usize,
    /// Number of OOD samples.
    #[arg(long, default_value_t = 2000, value_parser = parse_positive)]
    pub n_ood: usize,
    /// Feature dimension.
    #[arg(long, default_value_t = 64, value_parser = parse_positive)]
    pub dim: usize,
    /// Number of classes (at least 2).
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    /// Scale of the ID class means along their prototypes.
    #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
    pub id_shift: f32,
    /// Distance of the OOD mean from the ID mean, toward the prototype centroid.
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub ood_shift: f32,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f32,
    /// Student-t degrees of freedom for heavy-tailed ID noise.
    #[arg(long)]
    pub id_noise_df: Option<u32>,
    /// Gaussian noise added to the head weights.
    #[arg(long, default_value_t = 0.0)]
    pub head_noise: f32,
    /// Number of feature views to write.
    #[arg(long, default_value_t = 1, value_parser = parse_positive)]
    pub views: usize,
    /// Per-view Gaussian perturbation.
    #[arg(long, default_value_t = 0.0)]
    pub view_noise: f32,
}

impl GenSynthArgs {
    pub fn spec(&self) -> SynthSpec {
        SynthSpec {
            n_id: self.n_id,
            n_ood: self.n_ood,
            dim: self.dim,
            classes: self.classes,
            id_mean_shift: self.id_shift,
            ood_mean_shift: self.ood_shift,
            sigma: self.sigma,
            seed: self.seed,
            id_noise_df: self.id_noise_df,
            head_noise: self.head_noise,
            views: self.views,
            view_noise: self.view_noise,
        }
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate(args) => cmd_calibrate(&args),
        Command::Score(args) => cmd_score(&args),
        Command::Ensemble(args) => cmd_ensemble(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::GenSynth(args) => cmd_gen_synth(&args),
    }
}

fn load_views(paths: &[PathBuf]) -> Result<Vec<FeatureMatrix>> {
    paths.iter().map(FeatureMatrix::load).collect()
}

fn to_json_line<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("report types serialize")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Sidecar path for a score file: `<out>.json`.
pub fn sidecar_path(scores: &Path) -> PathBuf {
    let mut name = scores.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn read_echo(scores: &Path) -> Result<Option<RunEcho>> {
    let path = sidecar_path(scores);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|source| Error::Json { path, source })
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    let features = FeatureMatrix::load(&args.features)?;
    let c = calibrate_threshold(&features, args.react_percentile)?;
    let coverage = coverage_fraction(&features, c);
    if args.pretty {
        println!("p        {}", args.react_percentile);
        println!("c        {c}");
        println!("coverage {coverage}");
    } else {
        let out = serde_json::json!({
            "p": args.react_percentile,
            "c": c,
            "coverage": coverage,
        });
        println!("{out}");
    }
    Ok(())
}

fn cmd_score(args: &ScoreArgs) -> Result<()> {
    let views = load_views(&args.features)?;
    let head = ClassifierHead::load(&args.head_weights, &args.head_bias)?;
    let react = args.react.config();
    let calibration = match (&react, &args.react.calibration_features) {
        (Some(ReactConfig::Percentile(_)), Some(path)) => Some(FeatureMatrix::load(path)?),
        _ => None,
    };
    let clamp = react.map(|r| r.resolve(calibration.as_ref())).transpose()?;
    let refs: Vec<&FeatureMatrix> = views.iter().collect();
    let scored = score_views(&refs, &head, clamp, args.temperature)?;

    scored.scores.save(&args.out)?;
    if let Some(path) = &args.logits_out {
        scored.logits.save(path)?;
    }
    if let Some(path) = &args.predictions_out {
        predict_class(&scored.logits).save(path)?;
    }
    let echo = RunEcho {
        temperature: args.temperature,
        react,
        react_c: clamp,
        n_views: views.len(),
    };
    let mut json = serde_json::to_string_pretty(&echo).expect("echo serializes");
    json.push('\n');
    write_text(&sidecar_path(&args.out), &json)
}

fn cmd_ensemble(args: &EnsembleArgs) -> Result<()> {
    let views: Vec<LogitMatrix> = args
        .logits
        .iter()
        .map(LogitMatrix::load)
        .collect::<Result<_>>()?;
    let refs: Vec<&LogitMatrix> = views.iter().collect();
    ensemble_logits(&refs)?.save(&args.out)
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let id = ScoreVector::load(&args.id_scores)?;
    let ood = ScoreVector::load(&args.ood_scores)?;
    let accuracy = match (&args.predictions, &args.labels) {
        (Some(p), Some(l)) => Some((LabelVector::load(p)?, LabelVector::load(l)?)),
        _ => None,
    };
    let id_echo = read_echo(&args.id_scores)?;
    let ood_echo = read_echo(&args.ood_scores)?;
    let echo = match (id_echo, ood_echo) {
        (Some(a), Some(b)) => {
            if !same_settings(&a, &b) {
                return Err(Error::invalid(
                    "ID and OOD score files were produced with different settings",
                ));
            }
            Some(a)
        }
        (a, b) => a.or(b),
    };
    let report = evaluate_at(
        &id,
        &ood,
        accuracy.as_ref().map(|(p, l)| (p, l)),
        echo.as_ref(),
        args.tpr_target,
    )?;
    let line = to_json_line(&report);
    if let Some(path) = &args.out {
        write_text(path, &format!("{line}\n"))?;
    }
    if args.pretty {
        print!("{}", render_table(std::slice::from_ref(&report)));
    } else {
        println!("{line}");
    }
    Ok(())
}

fn same_settings(a: &RunEcho, b: &RunEcho) -> bool {
    a.temperature == b.temperature && a.react == b.react && a.react_c == b.react_c && a.n_views == b.n_views
}

/// One sweep grid: clamp settings (`None` = unclamped) × temperatures × view counts.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub react: Vec<Option<ReactConfig>>,
    pub temperatures: Vec<f32>,
    pub views: Vec<usize>,
    pub tpr_target: f64,
}

/// Evaluates every grid point, in grid order (clamp setting outermost, view
/// count innermost). Percentiles are resolved on the ID view-0 features.
pub fn sweep(
    id_views: &[FeatureMatrix],
    ood_views: &[FeatureMatrix],
    head: &ClassifierHead,
    labels: Option<&LabelVector>,
    grid: &SweepGrid,
) -> Result<Vec<EvalReport>> {
    if grid.react.is_empty() || grid.temperatures.is_empty() || grid.views.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    if id_views.len() != ood_views.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} ID views but {} OOD views",
            id_views.len(),
            ood_views.len()
        )));
    }
    if let Some(&k) = grid.views.iter().find(|&&k| k == 0 || k > id_views.len()) {
        return Err(Error::invalid(format!(
            "view count {k} outside 1..={}",
            id_views.len()
        )));
    }
    if let Some(labels) = labels {
        labels.check_classes(head.classes())?;
    }
    let id_refs: Vec<&FeatureMatrix> = id_views.iter().collect();
    let ood_refs: Vec<&FeatureMatrix> = ood_views.iter().collect();

    let mut rows = Vec::new();
    for react in &grid.react {
        let clamp = react.map(|r| r.resolve(Some(&id_views[0]))).transpose()?;
        for &temperature in &grid.temperatures {
            for &k in &grid.views {
                let id = score_views(&id_refs[..k], head, clamp, temperature)?;
                let ood = score_views(&ood_refs[..k], head, clamp, temperature)?;
                let predictions = labels.map(|_| predict_class(&id.logits));
                let echo = RunEcho {
                    temperature,
                    react: *react,
                    react_c: clamp,
                    n_views: k,
                };
                rows.push(evaluate_at(
                    &id.scores,
                    &ood.scores,
                    predictions.as_ref().zip(labels),
                    Some(&echo),
                    grid.tpr_target,
                )?);
            }
        }
    }
    Ok(rows)
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let id_views = load_views(&args.id_features)?;
    let ood_views = load_views(&args.ood_features)?;
    let head = ClassifierHead::load(&args.head_weights, &args.head_bias)?;
    let labels = args.labels.as_ref().map(LabelVector::load).transpose()?;

    let mut react: Vec<Option<ReactConfig>> = Vec::new();
    if args.include_no_react {
        react.push(None);
    }
    react.extend(args.grid_c.iter().map(|&c| Some(ReactConfig::Threshold(c))));
    react.extend(args.grid_percentile.iter().map(|&p| Some(ReactConfig::Percentile(p))));
    if react.is_empty() {
        react.push(Some(ReactConfig::Threshold(EVA_CLIP_CLAMP)));
    }
    let temperatures = if args.grid_temperature.is_empty() {
        vec![DEFAULT_TEMPERATURE]
    } else {
        args.grid_temperature.clone()
    };
    let views = if args.grid_views.is_empty() {
        vec![id_views.len()]
    } else {
        args.grid_views.clone()
    };
    let grid = SweepGrid {
        react,
        temperatures,
        views,
        tpr_target: args.tpr_target,
    };
    let rows = sweep(&id_views, &ood_views, &head, labels.as_ref(), &grid)?;

    let jsonl: String = rows.iter().map(|r| to_json_line(r) + "\n").collect();
    if let Some(path) = &args.out {
        write_text(path, &jsonl)?;
    }
    if args.pretty {
        print!("{}", render_table(&rows));
    } else {
        print!("{jsonl}");
    }
    Ok(())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

/// Aligned text table of reports. Rates are shown as rounded percentages.
pub fn render_table(rows: &[EvalReport]) -> String {
    let header = [
        "react", "value", "c", "T", "views", "AUROC", "FPR", "ACC", "tau", "n_id", "n_ood",
    ];
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in rows {
        cells.push(vec![
            opt(r.react_mode.as_deref()),
            opt(r.react_value),
            opt(r.react_c),
            opt(r.temperature),
            opt(r.n_views),
            format!("{:.2}", 100.0 * r.auroc),
            format!("{:.2}", 100.0 * r.fpr_at_95tpr),
            opt(r.id_accuracy.map(|a| format!("{:.2}", 100.0 * a))),
            format!("{:.6}", r.tau_at_95tpr),
            r.n_id.to_string(),
            r.n_ood.to_string(),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|j| cells.iter().map(|row| row[j].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:>w$}"))
            .collect();
        let _ = writeln!(out, "{}", line.join("  "));
    }
    out
}

fn cmd_gen_synth(args: &GenSynthArgs) -> Result<()> {
    let files = write_fixture(&args.spec(), &args.out)?;
    println!("{}", to_json_line(&files));
    Ok(())
}
