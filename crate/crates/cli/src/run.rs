//! Single-run subcommands and the artifact writer they share.

use std::fs;
use std::path::{Path, PathBuf};

use segmic_core::admm::{
    self, Degeneracy, IterationRecord, SolverConfig, SolverError, SolverOutput,
};
use segmic_core::basis::BasisSet;
use segmic_core::decompose::{
    decompose, texture_statistics, DecomposeParams, Decomposition, TextureStats,
};
use segmic_core::image::{
    foreground_mask, load_image_unit, normalize, save_image, ForegroundMask, PixelGrid,
};
use segmic_core::metrics::{evaluate, MetricsError, MetricsReport};
use segmic_core::phantom::{generate, PhantomInstance, PhantomSpec};
use segmic_core::pipeline::{history_csv, run_pipeline, Mode, PipelineError, PipelineResult};
use segmic_core::segmentation::{agreement, kmeans_segment, LabelMap, SegmentError};
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

/// Image the solver runs on, with the pixels that get segmented.
pub struct Input {
    pub image: PixelGrid,
    pub mask: ForegroundMask,
    pub phantom: Option<PhantomInstance>,
    /// Ground truth, from the phantom or from `--gt`.
    pub gt: Option<LabelMap>,
}

/// Loads `config.input` (scaled to `[0, 1]` by the file's maxval, then
/// min-max normalized) or generates the configured phantom. Phantom
/// intensities are used as generated.
pub fn load_input(config: &RunConfig, gt_path: Option<&Path>) -> Result<Input, CliError> {
    match &config.input {
        Some(path) => {
            let raw = load_image_unit(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let image = normalize(&raw).map_err(|e| CliError::Input(e.to_string()))?;
            let gt = gt_path
                .map(|p| {
                    LabelMap::load(p, config.solver.n_classes)
                        .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
                })
                .transpose()?;
            let mask = match &gt {
                Some(gt) => {
                    if gt.width() != image.width() || gt.height() != image.height() {
                        return Err(CliError::Mismatch(
                            "ground truth and input dimensions differ".into(),
                        ));
                    }
                    gt.foreground()
                }
                None => foreground_mask(&image, config.mask_threshold),
            };
            Ok(Input {
                image,
                mask,
                phantom: None,
                gt,
            })
        }
        None => {
            if gt_path.is_some() {
                return Err(CliError::Input("--gt requires --input".into()));
            }
            let inst = make_phantom(&config.phantom)?;
            Ok(Input {
                image: inst.corrupted.clone(),
                mask: inst.gt.foreground(),
                gt: Some(inst.gt.clone()),
                phantom: Some(inst),
            })
        }
    }
}

pub fn make_phantom(spec: &PhantomSpec) -> Result<PhantomInstance, CliError> {
    generate(spec).map_err(|e| CliError::Input(e.to_string()))
}

fn pipeline_error(e: PipelineError) -> CliError {
    match e {
        PipelineError::Solver(e) => solver_error(e),
        other => CliError::Input(other.to_string()),
    }
}

fn solver_error(e: SolverError) -> CliError {
    match e {
        SolverError::Divergence { .. } => CliError::Divergence(e.to_string()),
        other => CliError::Input(other.to_string()),
    }
}

fn output_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

/// Files of one run, staged in memory so that nothing is written unless
/// every computation succeeded.
#[derive(Default)]
pub struct Artifacts {
    files: Vec<(String, Staged)>,
}

enum Staged {
    Image(PixelGrid),
    Labels(LabelMap),
    Text(String),
}

impl Artifacts {
    pub fn image(&mut self, name: &str, grid: PixelGrid) {
        self.files.push((name.into(), Staged::Image(grid)));
    }

    pub fn labels(&mut self, name: &str, labels: LabelMap) {
        self.files.push((name.into(), Staged::Labels(labels)));
    }

    pub fn text(&mut self, name: &str, text: String) {
        self.files.push((name.into(), Staged::Text(text)));
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(dir).map_err(|e| output_error(dir, e))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, staged) in &self.files {
            let path = dir.join(name);
            match staged {
                Staged::Image(g) => save_image(g, &path).map_err(|e| output_error(&path, e))?,
                Staged::Labels(l) => l.save(&path).map_err(|e| output_error(&path, e))?,
                Staged::Text(t) => fs::write(&path, t).map_err(|e| output_error(&path, e))?,
            }
            written.push(path);
        }
        Ok(written)
    }
}

fn to_toml<T: Serialize>(value: &T) -> Result<String, CliError> {
    toml::to_string(value).map_err(|e| CliError::Output(format!("cannot serialize report: {e}")))
}

/// Bias fields are written at half scale so that `[0, 2]` fits the image range.
fn half(grid: &PixelGrid) -> PixelGrid {
    grid.map(|v| 0.5 * v)
}

/// Texture shifted by one half so that zero maps to mid-gray.
fn shifted_texture(d: &Decomposition) -> PixelGrid {
    d.texture.map(|v| v + 0.5)
}

#[derive(Serialize)]
struct PhantomSummary {
    sigma: f64,
    tissue_counts: Vec<usize>,
    spec: PhantomSpec,
}

impl PhantomSummary {
    fn of(inst: &PhantomInstance) -> Self {
        Self {
            sigma: inst.sigma,
            tissue_counts: inst.tissue_counts(),
            spec: inst.spec.clone(),
        }
    }
}

#[derive(Serialize)]
struct SolverSummary {
    iterations: usize,
    initial_aug_lagrangian: f64,
    c: Vec<f64>,
    w: Vec<f64>,
    c_degeneracy: Degeneracy,
    w_degeneracy: Degeneracy,
    #[serde(rename = "final")]
    last: Option<IterationRecord>,
}

impl SolverSummary {
    fn of(out: &SolverOutput) -> Self {
        let s = &out.state;
        Self {
            iterations: s.iter,
            initial_aug_lagrangian: out.initial_lagrangian,
            c: s.c.0.clone(),
            w: s.w.0.clone(),
            c_degeneracy: s.c_degeneracy.clone(),
            w_degeneracy: s.w_degeneracy.clone(),
            last: s.history.last().copied(),
        }
    }
}

#[derive(Serialize)]
struct KMeansSummary {
    centroids: Vec<f64>,
    empty: Vec<bool>,
    iterations: usize,
    class_counts: Vec<usize>,
    argmax_agreement: f64,
}

#[derive(Serialize)]
struct RunReport<'a> {
    mode: &'static str,
    effective_solver: SolverConfig,
    config: &'a RunConfig,
    solver: SolverSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    kmeans: Option<KMeansSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    texture: Option<TextureStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phantom: Option<PhantomSummary>,
    /// Files written next to this report.
    outputs: Vec<String>,
}

pub const REPORT: &str = "report.toml";

fn texture_stats(d: Option<&Decomposition>, mask: &ForegroundMask) -> Option<TextureStats> {
    d.and_then(|d| texture_statistics(&d.texture, mask).ok())
}

/// Decomposition (unless baseline mode) followed by the solver.
fn solve(
    config: &RunConfig,
    image: &PixelGrid,
) -> Result<(Option<Decomposition>, SolverOutput), CliError> {
    let solver = config.options().effective_solver();
    let decomposition = match config.mode {
        Mode::Segmict2t => {
            Some(decompose(image, &config.decompose).map_err(|e| CliError::Input(e.to_string()))?)
        }
        Mode::MicoBaseline => None,
    };
    let zeros = PixelGrid::zeros(image.width(), image.height());
    let (ibar, vbar) = match &decomposition {
        Some(d) => (&d.cartoon, &d.texture),
        None => (image, &zeros),
    };
    let basis = BasisSet::legendre(image.width(), image.height(), solver.basis_order)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let out = admm::run(ibar, vbar, &solver, &basis).map_err(solver_error)?;
    Ok((decomposition, out))
}

pub fn cmd_phantom(config: &RunConfig) -> Result<(), CliError> {
    let inst = make_phantom(&config.phantom)?;
    let mut a = Artifacts::default();
    a.image("corrupted.pgm", inst.corrupted.clone());
    a.image("clean.pgm", inst.clean.clone());
    a.image("bias.pgm", half(&inst.bias));
    a.labels("gt.pgm", inst.gt.clone());
    a.text("phantom.toml", to_toml(&PhantomSummary::of(&inst))?);
    a.write(&config.out)?;
    println!(
        "phantom {}x{} sigma={} tissue_counts={:?}",
        inst.spec.width,
        inst.spec.height,
        inst.sigma,
        inst.tissue_counts()
    );
    Ok(())
}

#[derive(Serialize)]
struct DecomposeReport {
    params: DecomposeParams,
    texture: TextureStats,
}

pub fn cmd_decompose(config: &RunConfig) -> Result<(), CliError> {
    let input = load_input(config, None)?;
    let d =
        decompose(&input.image, &config.decompose).map_err(|e| CliError::Input(e.to_string()))?;
    let stats =
        texture_statistics(&d.texture, &input.mask).map_err(|e| CliError::Input(e.to_string()))?;
    let mut a = Artifacts::default();
    a.image("cartoon.pgm", d.cartoon.clone());
    a.image("texture.pgm", shifted_texture(&d));
    a.text(
        "decompose.toml",
        to_toml(&DecomposeReport {
            params: config.decompose,
            texture: stats,
        })?,
    );
    a.write(&config.out)?;
    println!(
        "texture mean={:.6} std={:.6} min={:.6} max={:.6} over {} pixels",
        stats.mean, stats.std, stats.min, stats.max, stats.count
    );
    Ok(())
}

pub fn cmd_correct(config: &RunConfig) -> Result<(), CliError> {
    let input = load_input(config, None)?;
    let (decomposition, out) = solve(config, &input.image)?;
    let mut a = Artifacts::default();
    a.image("corrected.pgm", out.corrected.map(|v| v.clamp(0.0, 1.0)));
    a.image("bias.pgm", half(&out.bias));
    a.text("history.csv", history_csv(&out.state.history));
    let mut outputs = a.names();
    outputs.push(REPORT.into());
    let report = RunReport {
        mode: config.mode.as_str(),
        effective_solver: config.options().effective_solver(),
        config,
        solver: SolverSummary::of(&out),
        kmeans: None,
        texture: texture_stats(decomposition.as_ref(), &input.mask),
        phantom: input.phantom.as_ref().map(PhantomSummary::of),
        outputs,
    };
    a.text(REPORT, to_toml(&report)?);
    a.write(&config.out)?;
    print_final(&out);
    Ok(())
}

fn print_final(out: &SolverOutput) {
    if let Some(r) = out.state.history.last() {
        println!(
            "iter {} objective={:e} aug_lagrangian={:e} image_change={:e}",
            r.iter, r.objective, r.aug_lagrangian, r.image_change
        );
    }
}

pub fn cmd_segment(config: &RunConfig, classes: usize) -> Result<(), CliError> {
    let path = config
        .input
        .as_ref()
        .ok_or_else(|| CliError::Input("segment needs --input".into()))?;
    let image =
        load_image_unit(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mask = foreground_mask(&image, config.mask_threshold);
    let init: Vec<f64> = (1..=classes)
        .map(|i| i as f64 / (classes as f64 + 1.0))
        .collect();
    let km = kmeans_segment(&image, &mask, classes, &init)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let mut a = Artifacts::default();
    a.labels("labels.pgm", km.labels.clone());
    a.write(&config.out)?;
    println!(
        "centroids={:?} iterations={} class_counts={:?}",
        km.centroids,
        km.iterations,
        km.labels.class_counts()
    );
    Ok(())
}

fn load_labels(path: &Path, classes: usize) -> Result<LabelMap, CliError> {
    LabelMap::load(path, classes).map_err(|e| match e {
        SegmentError::Image(_) => CliError::Input(format!("{}: {e}", path.display())),
        other => CliError::Mismatch(format!("{}: {other}", path.display())),
    })
}

pub const METRICS: &str = "metrics.csv";

pub fn cmd_evaluate(
    pred: &Path,
    gt: &Path,
    classes: usize,
    all_pixels: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    if !(2..=16).contains(&classes) {
        return Err(CliError::Input(format!(
            "classes must lie in 2..=16, got {classes}"
        )));
    }
    let pred = load_labels(pred, classes)?;
    let gt = load_labels(gt, classes)?;
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(CliError::Mismatch(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mask = if all_pixels {
        ForegroundMask::all(gt.width(), gt.height())
    } else {
        gt.foreground()
    };
    let report =
        evaluate(&pred, &gt, &mask).map_err(|e: MetricsError| CliError::Mismatch(e.to_string()))?;
    let csv = report.to_csv();
    print!("{csv}");
    let mut a = Artifacts::default();
    a.text(METRICS, csv);
    a.write(out.unwrap_or(Path::new("out")))?;
    Ok(())
}

/// Everything `pipeline` writes, plus the metrics when ground truth is known.
pub struct PipelineRun {
    pub result: PipelineResult,
    pub metrics: Option<MetricsReport>,
    pub artifacts: Artifacts,
}

pub fn execute_pipeline(config: &RunConfig, input: &Input) -> Result<PipelineRun, CliError> {
    let result =
        run_pipeline(&input.image, &input.mask, &config.options()).map_err(pipeline_error)?;
    let metrics = input
        .gt
        .as_ref()
        .map(|gt| evaluate(result.labels(), gt, &input.mask))
        .transpose()
        .map_err(|e| CliError::Mismatch(e.to_string()))?;

    let mut a = Artifacts::default();
    a.image("input.pgm", input.image.clone());
    a.image("corrected.pgm", result.corrected_for_output());
    a.image("bias.pgm", half(&result.solver.bias));
    a.labels("labels.pgm", result.labels().clone());
    a.labels("argmax.pgm", result.argmax.clone());
    if let Some(d) = &result.decomposition {
        a.image("cartoon.pgm", d.cartoon.clone());
        a.image("texture.pgm", shifted_texture(d));
    }
    if let Some(gt) = &input.gt {
        a.labels("gt.pgm", gt.clone());
    }
    if let Some(m) = &metrics {
        a.text(METRICS, m.to_csv());
    }
    a.text("history.csv", history_csv(result.history()));
    let mut outputs = a.names();
    outputs.push(REPORT.into());

    let km = &result.kmeans;
    let report = RunReport {
        mode: config.mode.as_str(),
        effective_solver: config.options().effective_solver(),
        config,
        solver: SolverSummary::of(&result.solver),
        kmeans: Some(KMeansSummary {
            centroids: km.centroids.clone(),
            empty: km.empty.clone(),
            iterations: km.iterations,
            class_counts: km.labels.class_counts(),
            argmax_agreement: agreement(&km.labels, &result.argmax, &input.mask),
        }),
        texture: texture_stats(result.decomposition.as_ref(), &input.mask),
        phantom: input.phantom.as_ref().map(PhantomSummary::of),
        outputs,
    };
    a.text(REPORT, to_toml(&report)?);
    Ok(PipelineRun {
        result,
        metrics,
        artifacts: a,
    })
}

pub fn cmd_pipeline(config: &RunConfig, gt: Option<&Path>) -> Result<(), CliError> {
    let input = load_input(config, gt)?;
    let run = execute_pipeline(config, &input)?;
    run.artifacts.write(&config.out)?;
    print_final(&run.result.solver);
    if let Some(m) = &run.metrics {
        print!("{}", m.to_csv());
    }
    Ok(())
}
