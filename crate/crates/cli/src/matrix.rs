//! Experiment grid: both methods on every (noise, bias, seed) phantom.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use segmic_core::metrics::MetricsReport;
use segmic_core::phantom::PhantomSpec;
use segmic_core::pipeline::Mode;

use crate::config::RunConfig;
use crate::run::{execute_pipeline, make_phantom, Artifacts, Input};
use crate::CliError;

pub const MODES: [Mode; 2] = [Mode::Segmict2t, Mode::MicoBaseline];

pub const AGGREGATE_HEADER: &str =
    "np,bl,seed,method,roi,jaccard,sensitivity,specificity,dice,conventional_specificity";
pub const MEDIANS_HEADER: &str =
    "np,bl,method,roi,cells,jaccard,sensitivity,specificity,dice,conventional_specificity";

/// Directory of one cell relative to the output root.
pub fn cell_dir(np: f64, bl: f64, seed: u64, mode: Mode) -> String {
    format!("np{np}_bl{bl}_seed{seed}/{}", mode.as_str())
}

struct Row {
    np: f64,
    bl: f64,
    seed: u64,
    mode: Mode,
    roi: String,
    values: [Option<f64>; 5],
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.6}"))
}

/// Median of the defined values; `None` when there are none.
pub fn median(values: &[Option<f64>]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().flatten().copied().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn rows_of(np: f64, bl: f64, seed: u64, mode: Mode, report: &MetricsReport) -> Vec<Row> {
    report
        .rois
        .iter()
        .map(|r| Row {
            np,
            bl,
            seed,
            mode,
            roi: r.roi.clone(),
            values: [
                r.jaccard,
                r.sensitivity,
                r.specificity,
                r.dice,
                r.conventional_specificity,
            ],
        })
        .collect()
}

fn aggregate_csv(rows: &[Row]) -> String {
    let mut out = format!("{AGGREGATE_HEADER}\n");
    for r in rows {
        let vals: Vec<String> = r.values.iter().map(|&v| fmt(v)).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.np,
            r.bl,
            r.seed,
            r.mode.as_str(),
            r.roi,
            vals.join(",")
        );
    }
    out
}

/// Medians over seeds per (np, bl, method, roi), then over all cells per
/// (method, roi) with `np` and `bl` set to `all`.
fn medians_csv(rows: &[Row]) -> String {
    type Key = (String, String, &'static str, String);
    let mut groups: BTreeMap<Key, Vec<&Row>> = BTreeMap::new();
    for r in rows {
        let m = r.mode.as_str();
        groups
            .entry((r.np.to_string(), r.bl.to_string(), m, r.roi.clone()))
            .or_default()
            .push(r);
        groups
            .entry(("all".into(), "all".into(), m, r.roi.clone()))
            .or_default()
            .push(r);
    }
    let mut out = format!("{MEDIANS_HEADER}\n");
    for ((np, bl, method, roi), members) in &groups {
        let meds: Vec<String> = (0..5)
            .map(|k| {
                let col: Vec<Option<f64>> = members.iter().map(|r| r.values[k]).collect();
                fmt(median(&col))
            })
            .collect();
        let _ = writeln!(
            out,
            "{np},{bl},{method},{roi},{},{}",
            members.len(),
            meds.join(",")
        );
    }
    out
}

pub fn cmd_matrix(
    config: &RunConfig,
    nps: &[f64],
    bls: &[f64],
    seeds: &[u64],
) -> Result<(), CliError> {
    let mut rows = Vec::new();
    let mut first_failure: Option<CliError> = None;
    let (mut ok, mut failed) = (0usize, 0usize);
    for &np in nps {
        for &bl in bls {
            for &seed in seeds {
                let spec = PhantomSpec {
                    noise_percent: np,
                    bias_level: bl,
                    seed,
                    ..config.phantom.clone()
                };
                for mode in MODES {
                    let dir = cell_dir(np, bl, seed, mode);
                    match run_cell(config, &spec, mode, &config.out.join(&dir)) {
                        Ok(report) => {
                            ok += 1;
                            rows.extend(rows_of(np, bl, seed, mode, &report));
                        }
                        Err(e) => {
                            failed += 1;
                            eprintln!("cell {dir} failed: {e}");
                            first_failure.get_or_insert(e);
                        }
                    }
                }
            }
        }
    }
    let mut a = Artifacts::default();
    a.text("aggregate.csv", aggregate_csv(&rows));
    a.text("medians.csv", medians_csv(&rows));
    a.write(&config.out)?;
    println!("matrix: {ok} cells succeeded, {failed} failed");
    match first_failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn run_cell(
    base: &RunConfig,
    spec: &PhantomSpec,
    mode: Mode,
    dir: &Path,
) -> Result<MetricsReport, CliError> {
    let config = RunConfig {
        mode,
        phantom: spec.clone(),
        input: None,
        out: dir.to_path_buf(),
        ..base.clone()
    };
    config.validate()?;
    let inst = make_phantom(spec)?;
    let input = Input {
        image: inst.corrupted.clone(),
        mask: inst.gt.foreground(),
        gt: Some(inst.gt.clone()),
        phantom: Some(inst),
    };
    let run = execute_pipeline(&config, &input)?;
    run.artifacts.write(dir)?;
    run.metrics
        .ok_or_else(|| CliError::Output("phantom cell produced no metrics".into()))
}
