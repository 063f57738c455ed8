use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use posthoc_ood::synth::oracle::oracle_fused_scores;
use posthoc_ood::tensor::{ClassifierHead, FeatureMatrix, ScoreVector};

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posthoc-ood"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = bin(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(s: &str) -> serde_json::Value {
    serde_json::from_str(s.trim()).unwrap()
}

fn fixture(dir: &Path, extra: &[&str]) {
    let mut args = vec![
        "gen-synth", "--out", "fx", "--seed", "5", "--n-id", "400", "--n-ood", "300", "--dim",
        "24", "--classes", "6",
    ];
    args.extend_from_slice(extra);
    ok(dir, &args);
}

const HEAD: [&str; 4] = [
    "--head-weights",
    "fx/head_weights.oodt",
    "--head-bias",
    "fx/head_bias.oodt",
];

#[test]
fn calibrate_reports_c_and_coverage() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir, &[]);
    let c90 = json(&ok(dir, &["calibrate", "--features", "fx/id_view0.oodt", "--react-percentile", "90"]));
    let c95 = json(&ok(dir, &["calibrate", "--features", "fx/id_view0.oodt", "--react-percentile", "95"]));
    assert!(c90["coverage"].as_f64().unwrap() >= 0.90);
    assert!(c90["c"].as_f64().unwrap() <= c95["c"].as_f64().unwrap());
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir, &[]);
    let out = bin(dir, &["calibrate", "--features", "fx/id_view0.oodt", "--react-percentile", "101"]);
    assert_eq!(out.status.code(), Some(2));
    let out = bin(dir, &["gen-synth", "--out", "x", "--n-id", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.join("x").exists());
    let out = bin(dir, &["score", "--features", "fx/id_view0.oodt", "--out", "s.oodt"]);
    assert_eq!(out.status.code(), Some(2));
    let mut args = vec!["score", "--features", "fx/id_view0.oodt", "--out", "s.oodt", "--react-c", "1", "--no-react"];
    args.extend(HEAD);
    assert_eq!(bin(dir, &args).status.code(), Some(2));
    let mut args = vec!["score", "--features", "fx/id_view0.oodt", "--out", "s.oodt", "--temperature", "0"];
    args.extend(HEAD);
    assert_eq!(bin(dir, &args).status.code(), Some(2));
}

#[test]
fn data_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir, &[]);
    fs::write(dir.join("junk.oodt"), b"XXXX not a tensor").unwrap();
    let out = bin(dir, &["calibrate", "--features", "junk.oodt", "--react-percentile", "90"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic"));
    // labels are not a feature matrix
    let mut args = vec!["score", "--features", "fx/id_labels.oodt", "--out", "s.oodt"];
    args.extend(HEAD);
    assert_eq!(bin(dir, &args).status.code(), Some(1));
}

#[test]
fn baseline_scores_match_fused_reference() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir, &[]);
    let mut args = vec![
        "score", "--features", "fx/ood_view0.oodt", "--no-react", "--temperature", "1", "--out",
        "s.oodt",
    ];
    args.extend(HEAD);
    ok(dir, &args);
    let scores = ScoreVector::load(dir.join("s.oodt")).unwrap();
    let x = FeatureMatrix::load(dir.join("fx/ood_view0.oodt")).unwrap();
    let head = ClassifierHead::load(dir.join("fx/head_weights.oodt"), dir.join("fx/head_bias.oodt")).unwrap();
    let want = oracle_fused_scores(&[&x], &head, None, 1.0).unwrap();
    for (a, b) in scores.as_slice().iter().zip(&want) {
        assert!((*a as f64 - b).abs() <= 1e-5 * b.abs());
    }
    let echo = json(&fs::read_to_string(dir.join("s.oodt.json")).unwrap());
    assert_eq!(echo["react"], serde_json::Value::Null);
    assert_eq!(echo["n_views"], 1);
}

#[test]
fn four_identical_views_score_like_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir, &[]);
    let mut one = vec!["score", "--features", "fx/id_view0.oodt", "--out", "one.oodt"];
    one.extend(HEAD);
    ok(dir, &one);
    let mut four = vec!["score", "--out", "four.oodt"];
    for _ in 0..4 {
        four.extend(["--features", "fx/id_view0.oodt"]);
    }
    four.extend(HEAD);
    ok(dir, &four);
    assert_eq!(
        fs::read(dir.join("one.oodt")).unwrap(),
        fs::read(dir.join("four.oodt")).unwrap()
    );
    let echo = json(&fs::read_to_string(dir.join("one.oodt.json")).unwrap());
    assert_eq!(echo["temperature"].as_f64().unwrap() as f32, 1.1);
    assert_eq!(echo["react"]["mode"], "threshold");
    assert_eq!(echo["react_c"].as_f64().unwrap() as f32, -0.768_535_84);
}

#[test]
fn ensemble_subcommand_averages() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir, &["--views", "2", "--view-noise", "0.5"]);
    for v in 0..2 {
        let feats = format!("fx/id_view{v}.oodt");
        let logits = format!("l{v}.oodt");
        let mut args = vec![
            "score", "--features", feats.as_str(), "--no-react", "--out", "ignored.oodt",
            "--logits-out", logits.as_str(),
        ];
        args.extend(HEAD);
        ok(dir, &args);
    }
    ok(dir, &["ensemble", "--logits", "l0.oodt", "--logits", "l1.oodt", "--out", "avg.oodt"]);
    let mut args = vec![
        "score", "--features", "fx/id_view0.oodt", "--features", "fx/id_view1.oodt", "--no-react",
        "--out", "both.oodt", "--logits-out", "both_logits.oodt",
    ];
    args.extend(HEAD);
    ok(dir, &args);
    assert_eq!(
        fs::read(dir.join("avg.oodt")).unwrap(),
        fs::read(dir.join("both_logits.oodt")).unwrap()
    );
}

fn score_pair(dir: &Path, react: &[&str]) {
    for side in ["id", "ood"] {
        let feats = format!("fx/{side}_view0.oodt");
        let out = format!("{side}.oodt");
        let pred = format!("{side}_pred.oodt");
        let mut args = vec![
            "score", "--features", feats.as_str(), "--out", out.as_str(), "--predictions-out",
            pred.as_str(),
        ];
        args.extend_from_slice(react);
        args.extend(HEAD);
        ok(dir, &args);
    }
}

#[test]
fn evaluate_with_and_without_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir, &[]);
    score_pair(dir, &["--react-c", "1.5"]);
    let r = json(&ok(dir, &["evaluate", "--id-scores", "id.oodt", "--ood-scores", "ood.oodt"]));
    assert!(r["id_accuracy"].is_null());
    assert_eq!(r["n_id"], 400);
    assert_eq!(r["n_ood"], 300);
    assert_eq!(r["react_mode"], "threshold");
    assert_eq!(r["react_value"], 1.5);
    assert_eq!(r["n_views"], 1);
    let auroc = r["auroc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auroc));

    let r = json(&ok(
        dir,
        &[
            "evaluate", "--id-scores", "id.oodt", "--ood-scores", "ood.oodt", "--predictions",
            "id_pred.oodt", "--labels", "fx/id_labels.oodt",
        ],
    ));
    assert!(r["id_accuracy"].as_f64().unwrap() > 0.5);

    let table = ok(dir, &["evaluate", "--id-scores", "id.oodt", "--ood-scores", "ood.oodt", "--pretty"]);
    assert!(table.lines().next().unwrap().contains("AUROC"));

    // predictions without labels is a usage error
    let out = bin(dir, &["evaluate", "--id-scores", "id.oodt", "--ood-scores", "ood.oodt", "--predictions", "id_pred.oodt"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_refuses_mixed_settings() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir, &[]);
    score_pair(dir, &["--react-c", "1.5"]);
    let mut args = vec!["score", "--features", "fx/ood_view0.oodt", "--out", "ood.oodt", "--temperature", "2"];
    args.extend(HEAD);
    ok(dir, &args);
    let out = bin(dir, &["evaluate", "--id-scores", "id.oodt", "--ood-scores", "ood.oodt"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn well_separated_synth_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &[
        "gen-synth", "--out", "fx", "--n-id", "300", "--n-ood", "300", "--dim", "16", "--classes",
        "4", "--id-shift", "20", "--ood-shift", "20", "--sigma", "0.1",
    ]);
    score_pair(dir, &["--no-react"]);
    let r = json(&ok(dir, &["evaluate", "--id-scores", "id.oodt", "--ood-scores", "ood.oodt"]));
    assert_eq!(r["auroc"], 1.0);
    assert_eq!(r["fpr_at_95tpr"], 0.0);
}

#[test]
fn single_point_sweep_equals_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir, &[]);
    for side in ["id", "ood"] {
        let feats = format!("fx/{side}_view0.oodt");
        let out = format!("{side}.oodt");
        let pred = format!("{side}_pred.oodt");
        let mut args = vec![
            "score", "--features", feats.as_str(), "--react-percentile", "90",
            "--calibration-features", "fx/id_view0.oodt", "--temperature", "1.1", "--out",
            out.as_str(), "--predictions-out", pred.as_str(),
        ];
        args.extend(HEAD);
        ok(dir, &args);
    }
    let eval = ok(dir, &[
        "evaluate", "--id-scores", "id.oodt", "--ood-scores", "ood.oodt", "--predictions",
        "id_pred.oodt", "--labels", "fx/id_labels.oodt",
    ]);
    let mut args = vec![
        "sweep", "--id-features", "fx/id_view0.oodt", "--ood-features", "fx/ood_view0.oodt",
        "--labels", "fx/id_labels.oodt", "--grid-percentile", "90", "--grid-temperature", "1.1",
    ];
    args.extend(HEAD);
    let swept = ok(dir, &args);
    assert_eq!(swept.lines().count(), 1);
    assert_eq!(json(&eval), json(&swept));
}

#[test]
fn sweep_rows_follow_grid_order() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir, &[]);
    let mut args = vec![
        "sweep", "--id-features", "fx/id_view0.oodt", "--ood-features", "fx/ood_view0.oodt",
        "--labels", "fx/id_labels.oodt", "--grid-percentile", "85,90,95", "--grid-c=-0.5",
        "--include-no-react", "--grid-temperature", "1.0,1.1", "--out", "rows.jsonl",
    ];
    args.extend(HEAD);
    let out = ok(dir, &args);
    let rows: Vec<serde_json::Value> = out.lines().map(json).collect();
    assert_eq!(rows.len(), 10);
    assert_eq!(fs::read_to_string(dir.join("rows.jsonl")).unwrap(), out);
    assert_eq!(rows[0]["react_mode"], "none");
    assert_eq!(rows[2]["react_c"], -0.5);
    let cs: Vec<f64> = rows[4..]
        .iter()
        .step_by(2)
        .map(|r| r["react_c"].as_f64().unwrap())
        .collect();
    assert!(cs.windows(2).all(|w| w[0] <= w[1]), "{cs:?}");
    // temperature never changes arg-max accuracy
    for pair in rows.chunks(2) {
        assert_eq!(pair[0]["id_accuracy"], pair[1]["id_accuracy"]);
        assert_eq!(pair[0]["temperature"], 1.0);
    }
}

#[test]
fn gen_synth_is_reproducible_and_valid() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let args = ["gen-synth", "--out", "a", "--seed", "42", "--views", "2", "--view-noise", "0.1"];
    ok(dir, &args);
    let mut again = args;
    again[2] = "b";
    ok(dir, &again);
    for name in ["id_view0.oodt", "id_view1.oodt", "ood_view1.oodt", "head_weights.oodt", "head_bias.oodt", "id_labels.oodt", "synth.json"] {
        assert_eq!(
            fs::read(dir.join("a").join(name)).unwrap(),
            fs::read(dir.join("b").join(name)).unwrap(),
            "{name}"
        );
    }
    let x = FeatureMatrix::load(dir.join("a/id_view0.oodt")).unwrap();
    assert_eq!((x.rows(), x.cols()), (2000, 64));
}
