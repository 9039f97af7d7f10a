//! Run configuration: TOML file plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use segmic_core::admm::SolverConfig;
use segmic_core::decompose::DecomposeParams;
use segmic_core::image::DEFAULT_BACKGROUND_THRESHOLD;
use segmic_core::phantom::PhantomSpec;
use segmic_core::pipeline::{Mode, PipelineOptions};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    #[default]
    Paper,
    Theory,
}

impl Preset {
    pub fn solver(self) -> SolverConfig {
        match self {
            Preset::Paper => SolverConfig::paper(),
            Preset::Theory => SolverConfig::theory(),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOverrides {
    pub mu: Option<f64>,
    pub epsilon: Option<f64>,
    pub rho: Option<f64>,
    pub n_classes: Option<usize>,
    pub basis_order: Option<usize>,
    pub max_iter: Option<usize>,
}

impl SolverOverrides {
    fn apply(&self, s: &mut SolverConfig) {
        if let Some(v) = self.mu {
            s.mu = v;
        }
        if let Some(v) = self.epsilon {
            s.epsilon = v;
        }
        if let Some(v) = self.rho {
            s.rho = v;
        }
        if let Some(v) = self.n_classes {
            s.n_classes = v;
        }
        if let Some(v) = self.basis_order {
            s.basis_order = v;
        }
        if let Some(v) = self.max_iter {
            s.max_iter = v;
        }
    }
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub mode: Option<Mode>,
    pub preset: Option<Preset>,
    pub out: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub mask_threshold: Option<f64>,
    pub solver: SolverOverrides,
    pub decompose: Option<DecomposeParams>,
    pub phantom: Option<PhantomSpec>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Input(format!("invalid config {}: {e}", path.display())))
    }
}

/// Flag values that override the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub np: Option<f64>,
    pub bl: Option<f64>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub out: Option<PathBuf>,
    pub iters: Option<usize>,
    pub mu: Option<f64>,
    pub eps: Option<f64>,
    pub rho: Option<f64>,
    pub preset: Option<Preset>,
    pub input: Option<PathBuf>,
}

/// Fully resolved settings of one run; written into the run report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub preset: Preset,
    /// Not recorded in reports so that relocated runs stay byte-identical.
    #[serde(skip)]
    pub out: PathBuf,
    /// Image file; a phantom is generated when absent.
    pub input: Option<PathBuf>,
    pub mask_threshold: f64,
    pub solver: SolverConfig,
    pub decompose: DecomposeParams,
    pub phantom: PhantomSpec,
}

impl RunConfig {
    /// Preset, then file values, then flags.
    pub fn resolve(file: Option<ConfigFile>, flags: &Overrides) -> Result<Self, CliError> {
        let file = file.unwrap_or_default();
        let preset = flags.preset.or(file.preset).unwrap_or_default();
        let mut solver = preset.solver();
        file.solver.apply(&mut solver);
        let cli = SolverOverrides {
            mu: flags.mu,
            epsilon: flags.eps,
            rho: flags.rho,
            max_iter: flags.iters,
            ..SolverOverrides::default()
        };
        cli.apply(&mut solver);

        let mut phantom = file.phantom.unwrap_or_default();
        if let Some(v) = flags.np {
            phantom.noise_percent = v;
        }
        if let Some(v) = flags.bl {
            phantom.bias_level = v;
        }
        if let Some(v) = flags.seed {
            phantom.seed = v;
        }
        let config = Self {
            mode: flags.mode.or(file.mode).unwrap_or_default(),
            preset,
            out: flags
                .out
                .clone()
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from("out")),
            input: flags.input.clone().or(file.input),
            mask_threshold: file.mask_threshold.unwrap_or(DEFAULT_BACKGROUND_THRESHOLD),
            solver,
            decompose: file.decompose.unwrap_or_default(),
            phantom,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let input = |e: String| CliError::Input(e);
        self.options()
            .effective_solver()
            .validate()
            .map_err(|e| input(e.to_string()))?;
        self.decompose
            .validate()
            .map_err(|e| input(e.to_string()))?;
        if self.input.is_none() {
            self.phantom.validate().map_err(|e| input(e.to_string()))?;
        }
        Ok(())
    }

    pub fn options(&self) -> PipelineOptions {
        PipelineOptions {
            mode: self.mode,
            solver: self.solver.clone(),
            decompose: self.decompose,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file_over_preset() {
        let file: ConfigFile = toml::from_str(
            r#"
            preset = "theory"
            mode = "mico-baseline"
            [solver]
            rho = 7.0
            max_iter = 12
            [phantom]
            noise_percent = 3.0
            seed = 4
            "#,
        )
        .unwrap();
        let flags = Overrides {
            iters: Some(5),
            seed: Some(9),
            ..Overrides::default()
        };
        let c = RunConfig::resolve(Some(file), &flags).unwrap();
        assert_eq!(c.preset, Preset::Theory);
        assert_eq!(c.solver.epsilon, 0.1);
        assert_eq!(c.solver.rho, 7.0);
        assert_eq!(c.solver.max_iter, 5);
        assert_eq!(c.mode, Mode::MicoBaseline);
        assert_eq!(c.phantom.noise_percent, 3.0);
        assert_eq!(c.phantom.seed, 9);
        assert_eq!(c.phantom.width, 181);
    }

    #[test]
    fn defaults_are_paper() {
        let c = RunConfig::resolve(None, &Overrides::default()).unwrap();
        assert_eq!(c.solver, SolverConfig::paper());
        assert_eq!(c.mode, Mode::Segmict2t);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(toml::from_str::<ConfigFile>("bogus = 1").is_err());
        let flags = Overrides {
            eps: Some(2.0),
            ..Overrides::default()
        };
        assert!(matches!(
            RunConfig::resolve(None, &flags),
            Err(CliError::Input(_))
        ));
    }
}
