//! End-to-end behavior of the `segmic` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use segmic_core::image::ForegroundMask;
use segmic_core::metrics::evaluate;
use segmic_core::segmentation::{LabelMap, BACKGROUND};
use tempfile::TempDir;

fn segmic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segmic"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small phantom so that the suite stays fast.
fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        "[phantom]\nwidth = 72\nheight = 56\nnoise_percent = 5.0\nbias_level = 0.0\n",
    )
    .unwrap();
    path
}

fn outputs_of(report: &str) -> Vec<String> {
    let value: toml::Table = report.parse().unwrap();
    value["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect()
}

#[test]
fn pipeline_writes_every_declared_artifact() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let res = segmic(&["pipeline", "--out", path_str(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));

    let report = fs::read_to_string(out.join("report.toml")).unwrap();
    let outputs = outputs_of(&report);
    for name in [
        "corrected.pgm",
        "bias.pgm",
        "labels.pgm",
        "history.csv",
        "report.toml",
        "metrics.csv",
    ] {
        assert!(outputs.iter().any(|o| o == name), "{name} not declared");
    }
    for name in &outputs {
        let meta = fs::metadata(out.join(name)).unwrap();
        assert!(meta.len() > 0, "{name} is empty");
    }
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 31);
    assert_eq!(
        history.lines().next().unwrap(),
        "iter,objective,aug_lagrangian,constraint_residual,image_change,multiplier_change"
    );
    assert!(report.contains("mode = \"segmict2t\""));
}

#[test]
fn baseline_mode_skips_decomposition() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("mico");
    let res = segmic(&[
        "pipeline",
        "--config",
        path_str(&cfg),
        "--mode",
        "mico-baseline",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&res), 0);
    let report = fs::read_to_string(out.join("report.toml")).unwrap();
    assert!(report.contains("mode = \"mico-baseline\""));
    let value: toml::Table = report.parse().unwrap();
    assert_eq!(value["effective_solver"]["mu"].as_float(), Some(0.0));
    assert!(!out.join("cartoon.pgm").exists());
    assert!(!outputs_of(&report).iter().any(|o| o == "texture.pgm"));
}

#[test]
fn missing_input_exits_2_without_outputs() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("never");
    let missing = tmp.path().join("nope.pgm");
    let res = segmic(&[
        "pipeline",
        "--input",
        path_str(&missing),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&res), 2);
    assert!(!out.exists());
    assert!(!res.stderr.is_empty());
}

#[test]
fn bad_config_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[solver]\nepsilon = 3.0\n").unwrap();
    let res = segmic(&[
        "pipeline",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(tmp.path()),
    ]);
    assert_eq!(code(&res), 2);
    fs::write(&cfg, "unknown_key = 1\n").unwrap();
    let res = segmic(&[
        "pipeline",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(tmp.path()),
    ]);
    assert_eq!(code(&res), 2);
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(
        &cfg,
        "[solver]\nmax_iter = 12\nrho = 6.0\n[phantom]\nwidth = 48\nheight = 40\n",
    )
    .unwrap();
    let out = tmp.path().join("o");
    let res = segmic(&[
        "correct",
        "--config",
        path_str(&cfg),
        "--iters",
        "4",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&res), 0);
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 5);
    let value: toml::Table = fs::read_to_string(out.join("report.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(value["effective_solver"]["rho"].as_float(), Some(6.0));
    assert_eq!(value["effective_solver"]["max_iter"].as_integer(), Some(4));
}

#[test]
fn theory_preset_sets_rho_above_bound() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("t");
    let res = segmic(&[
        "correct",
        "--config",
        path_str(&cfg),
        "--preset",
        "theory",
        "--iters",
        "3",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&res), 0);
    let value: toml::Table = fs::read_to_string(out.join("report.toml"))
        .unwrap()
        .parse()
        .unwrap();
    let rho = value["effective_solver"]["rho"].as_float().unwrap();
    assert!((rho - 4.8392).abs() < 1e-3, "rho = {rho}");
    assert_eq!(value["effective_solver"]["epsilon"].as_float(), Some(0.1));
}

#[test]
fn phantom_decompose_and_segment_chain() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let ph = tmp.path().join("ph");
    assert_eq!(
        code(&segmic(&[
            "phantom",
            "--config",
            path_str(&cfg),
            "--out",
            path_str(&ph)
        ])),
        0
    );
    for f in [
        "corrupted.pgm",
        "clean.pgm",
        "bias.pgm",
        "gt.pgm",
        "phantom.toml",
    ] {
        assert!(ph.join(f).exists(), "{f}");
    }

    let dec = tmp.path().join("dec");
    let res = segmic(&[
        "decompose",
        "--input",
        path_str(&ph.join("corrupted.pgm")),
        "--out",
        path_str(&dec),
    ]);
    assert_eq!(code(&res), 0);
    assert!(dec.join("cartoon.pgm").exists());
    assert!(dec.join("texture.pgm").exists());

    let seg = tmp.path().join("seg");
    let res = segmic(&[
        "segment",
        "--input",
        path_str(&ph.join("clean.pgm")),
        "--out",
        path_str(&seg),
    ]);
    assert_eq!(code(&res), 0);
    // the clean image is piecewise constant, so K-means recovers it exactly
    let pred = LabelMap::load(seg.join("labels.pgm"), 3).unwrap();
    let gt = LabelMap::load(ph.join("gt.pgm"), 3).unwrap();
    assert_eq!(pred, gt);
}

fn balanced_labels(shift: u8) -> LabelMap {
    let labels: Vec<u8> = (0..60u32)
        .map(|p| {
            if p < 6 {
                BACKGROUND
            } else {
                ((p % 3) as u8 + shift) % 3
            }
        })
        .collect();
    LabelMap::new(10, 6, 3, labels).unwrap()
}

fn metrics_rows(csv_text: &str) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(csv_text.as_bytes())
        .records()
        .map(Result::unwrap)
        .collect()
}

#[test]
fn evaluate_identical_and_swapped() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a.pgm");
    let b = tmp.path().join("b.pgm");
    balanced_labels(0).save(&a).unwrap();
    balanced_labels(1).save(&b).unwrap();

    let out = tmp.path().join("same");
    let res = segmic(&[
        "evaluate",
        "--pred",
        path_str(&a),
        "--gt",
        path_str(&a),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&res), 0);
    let text = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(String::from_utf8(res.stdout).unwrap(), text);
    for row in metrics_rows(&text) {
        // jaccard, sensitivity, dice, conventional specificity
        for col in [1, 2, 4, 5] {
            assert_eq!(&row[col], "1.000000", "{row:?}");
        }
        // TN/(TP+TN) stays below one whenever the region is nonempty
        let (tp, tn): (f64, f64) = (row[6].parse().unwrap(), row[8].parse().unwrap());
        assert_eq!(&row[3], format!("{:.6}", tn / (tp + tn)), "{row:?}");
    }

    let out = tmp.path().join("swapped");
    let res = segmic(&[
        "evaluate",
        "--pred",
        path_str(&b),
        "--gt",
        path_str(&a),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&res), 0);
    let rows = metrics_rows(&fs::read_to_string(out.join("metrics.csv")).unwrap());
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert_eq!(&row[2], "0.000000", "{row:?}");
    }
}

#[test]
fn evaluate_mismatch_exits_3() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a.pgm");
    let small = tmp.path().join("small.pgm");
    balanced_labels(0).save(&a).unwrap();
    LabelMap::new(2, 2, 3, vec![0, 1, 2, 0])
        .unwrap()
        .save(&small)
        .unwrap();
    let out = tmp.path().join("o");
    let res = segmic(&[
        "evaluate",
        "--pred",
        path_str(&small),
        "--gt",
        path_str(&a),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&res), 3);
    // levels of a 3-class map are not levels of a 4-class map
    let res = segmic(&[
        "evaluate",
        "--pred",
        path_str(&a),
        "--gt",
        path_str(&a),
        "--classes",
        "4",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&res), 3);
    let res = segmic(&[
        "evaluate",
        "--pred",
        path_str(&tmp.path().join("missing.pgm")),
        "--gt",
        path_str(&a),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&res), 2);
}

#[test]
fn evaluate_matches_library_on_phantom_pair() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let run = tmp.path().join("run");
    assert_eq!(
        code(&segmic(&[
            "pipeline",
            "--config",
            path_str(&cfg),
            "--out",
            path_str(&run)
        ])),
        0
    );
    let out = tmp.path().join("ev");
    let res = segmic(&[
        "evaluate",
        "--pred",
        path_str(&run.join("labels.pgm")),
        "--gt",
        path_str(&run.join("gt.pgm")),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&res), 0);
    let pred = LabelMap::load(run.join("labels.pgm"), 3).unwrap();
    let gt = LabelMap::load(run.join("gt.pgm"), 3).unwrap();
    let lib = evaluate(&pred, &gt, &gt.foreground()).unwrap().to_csv();
    assert_eq!(fs::read_to_string(out.join("metrics.csv")).unwrap(), lib);
    assert_eq!(fs::read_to_string(run.join("metrics.csv")).unwrap(), lib);

    let all = evaluate(&pred, &gt, &ForegroundMask::all(gt.width(), gt.height()))
        .unwrap()
        .to_csv();
    let res = segmic(&[
        "evaluate",
        "--pred",
        path_str(&run.join("labels.pgm")),
        "--gt",
        path_str(&run.join("gt.pgm")),
        "--all-pixels",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&res), 0);
    assert_eq!(fs::read_to_string(out.join("metrics.csv")).unwrap(), all);
}

#[test]
fn single_cell_matrix_equals_pipeline() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let m = tmp.path().join("m");
    let res = segmic(&[
        "matrix",
        "--config",
        path_str(&cfg),
        "--nps",
        "7",
        "--bls",
        "20",
        "--seeds",
        "3",
        "--out",
        path_str(&m),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    for mode in ["segmict2t", "mico-baseline"] {
        let p = tmp.path().join(format!("p-{mode}"));
        let res = segmic(&[
            "pipeline",
            "--config",
            path_str(&cfg),
            "--np",
            "7",
            "--bl",
            "20",
            "--seed",
            "3",
            "--mode",
            mode,
            "--out",
            path_str(&p),
        ]);
        assert_eq!(code(&res), 0);
        let cell = m.join(format!("np7_bl20_seed3/{mode}"));
        let report = fs::read_to_string(p.join("report.toml")).unwrap();
        for name in outputs_of(&report) {
            assert_eq!(
                fs::read(p.join(&name)).unwrap(),
                fs::read(cell.join(&name)).unwrap(),
                "{mode}/{name}"
            );
        }
    }
    let agg = fs::read_to_string(m.join("aggregate.csv")).unwrap();
    // one row per method and region
    assert_eq!(agg.lines().count(), 1 + 2 * 3);
}

#[test]
fn matrix_rows_and_medians() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let m = tmp.path().join("m");
    let res = segmic(&[
        "matrix",
        "--config",
        path_str(&cfg),
        "--nps",
        "5,9",
        "--bls",
        "0,40",
        "--seeds",
        "0,1,2",
        "--out",
        path_str(&m),
    ]);
    assert_eq!(code(&res), 0);
    let agg = fs::read_to_string(m.join("aggregate.csv")).unwrap();
    let rows = metrics_rows(&agg);
    assert_eq!(rows.len(), 2 * 2 * 3 * 2 * 3);

    // recompute the overall median Dice of one (method, roi) by hand
    let mut dice: Vec<f64> = rows
        .iter()
        .filter(|r| &r[3] == "segmict2t" && &r[4] == "WM")
        .map(|r| r[8].parse().unwrap())
        .collect();
    assert_eq!(dice.len(), 12);
    dice.sort_by(f64::total_cmp);
    let expected = 0.5 * (dice[5] + dice[6]);
    let medians = fs::read_to_string(m.join("medians.csv")).unwrap();
    let row = metrics_rows(&medians)
        .into_iter()
        .find(|r| &r[0] == "all" && &r[2] == "segmict2t" && &r[3] == "WM")
        .unwrap();
    assert_eq!(&row[4], "12");
    let got: f64 = row[8].parse().unwrap();
    assert!((got - expected).abs() <= 1e-6, "{got} vs {expected}");
}

#[test]
fn matrix_continues_past_failures() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let m = tmp.path().join("m");
    // a negative noise level is rejected for its cells only
    let res = segmic(&[
        "matrix",
        "--config",
        path_str(&cfg),
        "--nps=-1,5",
        "--bls",
        "0",
        "--seeds",
        "0",
        "--out",
        path_str(&m),
    ]);
    assert_eq!(code(&res), 2);
    let agg = fs::read_to_string(m.join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 1 + 2 * 3);
    assert!(String::from_utf8_lossy(&res.stdout).contains("2 cells succeeded, 2 failed"));
}
