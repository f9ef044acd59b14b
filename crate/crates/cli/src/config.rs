//! Run configuration: TOML with `[problem]`, `[grid]`, `[solver]`, `[lemma]`
//! and `[output]` sections. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use levelset::exponents::ProblemParams;
use levelset::lemma::{DecayHypothesis, DEFAULT_CLASSIFY_TOLERANCE};
use levelset::variational::{ExperimentOptions, MinimizeOptions, DEFAULT_EPSILON};
use serde::Deserialize;

use crate::error::CliError;

fn one() -> f64 {
    1.0
}

fn default_levels_per_decade() -> usize {
    32
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Option<ProblemSection>,
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub solver: SolverSection,
    pub lemma: Option<LemmaSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub n: u32,
    pub p: f64,
    pub alpha: f64,
    pub r: f64,
    #[serde(default = "one")]
    pub beta1: f64,
    #[serde(default = "one")]
    pub b_const: f64,
    #[serde(default = "one")]
    pub source_scale: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "one")]
    pub radius: f64,
    pub cells: usize,
    /// Extra grids, each with twice the cells of the previous one.
    #[serde(default)]
    pub refinements: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub epsilon: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_init: f64,
    pub armijo: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = MinimizeOptions::default();
        SolverSection {
            epsilon: DEFAULT_EPSILON,
            max_iters: d.max_iters,
            grad_tol: d.grad_tol,
            step_init: d.step_init,
            armijo: d.armijo_factor,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaSection {
    pub c1: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(default)]
    pub k0: f64,
    /// `psi(k0)`; commands fall back to their own default when absent.
    pub psi_k0: Option<f64>,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: Option<PathBuf>,
    #[serde(default = "default_levels_per_decade")]
    pub levels_per_decade: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: None,
            levels_per_decade: default_levels_per_decade(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|message| CliError::Config {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    pub fn problem(&self) -> Result<&ProblemSection, CliError> {
        self.problem.as_ref().ok_or(CliError::MissingSection("problem"))
    }

    pub fn grid(&self) -> Result<&GridSection, CliError> {
        self.grid.as_ref().ok_or(CliError::MissingSection("grid"))
    }

    pub fn lemma(&self) -> Result<&LemmaSection, CliError> {
        self.lemma.as_ref().ok_or(CliError::MissingSection("lemma"))
    }

    pub fn problem_params(&self) -> Result<ProblemParams, CliError> {
        let p = self.problem()?;
        Ok(ProblemParams::new(p.n, p.p, p.alpha, p.r, p.beta1, p.b_const)?)
    }

    pub fn solver_options(&self) -> Result<MinimizeOptions, CliError> {
        let s = &self.solver;
        let opts = MinimizeOptions {
            grad_tol: s.grad_tol,
            max_iters: s.max_iters,
            step_init: s.step_init,
            armijo_factor: s.armijo,
        };
        opts.validate()?;
        if !(s.epsilon >= 0.0) || !s.epsilon.is_finite() {
            return Err(CliError::Usage(format!(
                "solver.epsilon must be >= 0, got {}",
                s.epsilon
            )));
        }
        Ok(opts)
    }

    pub fn experiment_options(&self) -> Result<ExperimentOptions, CliError> {
        let grid = self.grid()?;
        let problem = self.problem()?;
        if grid.cells == 0 {
            return Err(CliError::Usage("grid.cells must be at least 1".into()));
        }
        if grid.refinements > 16 {
            return Err(CliError::Usage(format!(
                "grid.refinements must be at most 16, got {}",
                grid.refinements
            )));
        }
        if !(grid.radius > 0.0) || !grid.radius.is_finite() {
            return Err(CliError::Usage(format!(
                "grid.radius must be > 0, got {}",
                grid.radius
            )));
        }
        if !(problem.source_scale >= 0.0) || !problem.source_scale.is_finite() {
            return Err(CliError::Usage(format!(
                "problem.source_scale must be >= 0, got {}",
                problem.source_scale
            )));
        }
        if self.output.levels_per_decade == 0 {
            return Err(CliError::Usage("output.levels_per_decade must be positive".into()));
        }
        Ok(ExperimentOptions {
            grid_sizes: (0..=grid.refinements).map(|j| grid.cells << j).collect(),
            radius: grid.radius,
            source_scale: problem.source_scale,
            epsilon: self.solver.epsilon,
            solver: self.solver_options()?,
            levels_per_decade: self.output.levels_per_decade,
            ..ExperimentOptions::default()
        })
    }
}

impl LemmaSection {
    pub fn hypothesis(&self) -> Result<DecayHypothesis, CliError> {
        Ok(DecayHypothesis::new(self.c1, self.a, self.b, self.c, self.d, self.k0)?)
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance.unwrap_or(DEFAULT_CLASSIFY_TOLERANCE)
    }
}
