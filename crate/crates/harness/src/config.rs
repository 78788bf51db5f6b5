//! Experiment configuration files.
//!
//! A configuration is a TOML document. Only `[problem]` is required; every
//! other section and key falls back to the defaults below, and unknown keys
//! are rejected.
//!
//! ```toml
//! [problem]
//! name = "heat1d"          # a built-in problem, or omit and give `a` (and `b`)
//! horizon = 0.5            # T; defaults to the problem's own horizon
//! [problem.params]
//! nu = 0.1
//!
//! [scheme]
//! kind = "example1"        # example1 | example2
//!
//! [ladder]
//! h0 = 0.0625              # coarsest mesh
//! rungs = 3
//!
//! [time]
//! n = 256
//!
//! [extrapolation]
//! k = 1
//! derivative = []          # e.g. [[1]] for delta_{h, e1}
//!
//! [reference]
//! mode = "auto"            # auto | spectral | fine-grid
//! levels = 3
//!
//! [run]
//! seeds = [1]
//! format = "csv"           # csv | binary
//! # output = "out"
//!
//! [expect]
//! tolerance = 0.5
//! # order, min_order, max_order, synthetic_order
//! ```

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zakai_core::library::{default_horizon, named_problem};
use zakai_core::{
    build_scheme_example1, build_scheme_example2, Coefficient, DifferenceScheme, DifferentialProblem, TorusGrid,
};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub problem: ProblemSection,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub ladder: LadderSection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub extrapolation: ExtrapolationSection,
    #[serde(default)]
    pub reference: ReferenceSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub expect: ExpectSection,
}

/// A named problem, or inline coefficients constant in space and time.
///
/// Inline problems give `a` as a `(d+1) x (d+1)` matrix indexed from 0,
/// optionally `b` as `(d+1) x d1`, constant free terms `f` and `g`, and
/// `periods` (default 1 per axis). Their initial data is
/// `prod_a cos(2 pi m x_a / P_a)` with `m = params.mode` (default 1).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    #[default]
    Example1,
    Example2,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    #[serde(default)]
    pub kind: SchemeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSection {
    #[serde(default = "default_h0")]
    pub h0: f64,
    #[serde(default = "default_rungs")]
    pub rungs: usize,
}

fn default_h0() -> f64 {
    1.0 / 16.0
}

fn default_rungs() -> usize {
    3
}

impl Default for LadderSection {
    fn default() -> Self {
        Self {
            h0: default_h0(),
            rungs: default_rungs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(default = "default_n")]
    pub n: usize,
}

fn default_n() -> usize {
    256
}

impl Default for TimeSection {
    fn default() -> Self {
        Self { n: default_n() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtrapolationSection {
    /// Number of cancelled powers of `h`; symmetric schemes cancel only even
    /// powers and use `floor(k / 2)` base-4 levels.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub derivative: Vec<Vec<i64>>,
}

fn default_k() -> usize {
    1
}

impl Default for ExtrapolationSection {
    fn default() -> Self {
        Self {
            k: default_k(),
            derivative: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    /// Spectral when the coefficients are constant in space, else fine-grid.
    #[default]
    Auto,
    Spectral,
    FineGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    #[serde(default)]
    pub mode: ReferenceKind,
    #[serde(default = "default_levels")]
    pub levels: u32,
}

fn default_levels() -> u32 {
    zakai_core::reference::DEFAULT_FINE_LEVELS
}

impl Default for ReferenceSection {
    fn default() -> Self {
        Self {
            mode: ReferenceKind::Auto,
            levels: default_levels(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seeds: default_seeds(),
            output: None,
            format: OutputFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectSection {
    /// Overrides the predicted order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_order: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_order: Option<f64>,
    /// Replaces every solver run by errors `h^p`, to check the harness itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic_order: Option<f64>,
}

fn default_tolerance() -> f64 {
    0.5
}

impl Default for ExpectSection {
    fn default() -> Self {
        Self {
            order: None,
            tolerance: default_tolerance(),
            min_order: None,
            max_order: None,
            synthetic_order: None,
        }
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentSpec, ConfigError> {
    let spec: ExperimentSpec = toml::from_str(text).map_err(|e| ConfigError(e.to_string().trim_end().to_string()))?;
    spec.validate()?;
    Ok(spec)
}

pub fn load_config(path: &Path) -> Result<ExperimentSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
}

impl ExperimentSpec {
    /// An experiment with every default for the named problem.
    pub fn for_problem(name: &str) -> Self {
        Self {
            problem: ProblemSection {
                name: Some(name.to_string()),
                ..ProblemSection::default()
            },
            scheme: SchemeSection::default(),
            ladder: LadderSection::default(),
            time: TimeSection::default(),
            extrapolation: ExtrapolationSection::default(),
            reference: ReferenceSection::default(),
            run: RunSection::default(),
            expect: ExpectSection::default(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("every field is representable")
    }

    /// Checks everything that does not depend on the subcommand.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.build_problem()?;
        self.base_grid()?;
        if self.time.n == 0 {
            return err("time.n must be at least 1");
        }
        if self.run.seeds.is_empty() {
            return err("run.seeds must not be empty");
        }
        if !(self.expect.tolerance.is_finite() && self.expect.tolerance >= 0.0) {
            return err("expect.tolerance must be nonnegative");
        }
        if self.reference.levels > 10 {
            return err("reference.levels must be at most 10");
        }
        let d = self.dim()?;
        if self.extrapolation.derivative.iter().any(|l| l.len() != d) {
            return err(format!("every extrapolation.derivative vector needs {d} entries"));
        }
        Ok(())
    }

    /// Ladder checks for the convergence-style subcommands.
    pub fn validate_ladder(&self) -> Result<(), ConfigError> {
        if self.ladder.rungs < 2 {
            return err(format!(
                "ladder.rungs must be at least 2 for a convergence run, got {}",
                self.ladder.rungs
            ));
        }
        if self.ladder.rungs + self.extrapolation.k > 16 {
            return err("the ladder is too deep (rungs plus extrapolation levels above 16)");
        }
        Ok(())
    }

    pub fn dim(&self) -> Result<usize, ConfigError> {
        Ok(self.build_problem()?.dim())
    }

    pub fn build_problem(&self) -> Result<DifferentialProblem, ConfigError> {
        let p = &self.problem;
        match (&p.name, &p.a) {
            (Some(name), None) => {
                if p.b.is_some() || p.f.is_some() || p.g.is_some() || p.periods.is_some() {
                    return err(format!("problem '{name}' is built in; a, b, f, g and periods apply to inline problems only"));
                }
                named_problem(name, &p.params, p.horizon).map_err(|e| ConfigError(format!("problem: {e}")))
            }
            (None, Some(a)) => self.inline_problem(a),
            (Some(_), Some(_)) => err("problem: give either name or inline coefficients, not both"),
            (None, None) => err("problem: missing name (or inline coefficients a)"),
        }
    }

    fn inline_problem(&self, a: &[Vec<f64>]) -> Result<DifferentialProblem, ConfigError> {
        let p = &self.problem;
        if a.len() < 2 || a.iter().any(|row| row.len() != a.len()) {
            return err("problem.a must be a square matrix of size d + 1 >= 2");
        }
        let d = a.len() - 1;
        let b = p.b.clone().unwrap_or_else(|| vec![Vec::new(); d + 1]);
        if b.len() != d + 1 {
            return err(format!("problem.b needs {} rows", d + 1));
        }
        let d1 = b[0].len();
        if b.iter().any(|row| row.len() != d1) {
            return err("problem.b rows differ in length");
        }
        let g = p.g.clone().unwrap_or_else(|| vec![0.0; d1]);
        if g.len() != d1 {
            return err(format!("problem.g needs {d1} entries"));
        }
        for key in p.params.keys() {
            if key != "mode" {
                return err(format!("inline problems take only the parameter 'mode', got '{key}'"));
            }
        }
        let mode = p.params.get("mode").copied().unwrap_or(1.0);
        if mode.fract() != 0.0 {
            return err(format!("mode must be an integer, got {mode}"));
        }
        let periods = p.periods.clone().unwrap_or_else(|| vec![1.0; d]);
        let horizon = p.horizon.unwrap_or(0.5);
        let mut prob = DifferentialProblem::new("inline", d, d1, &periods, horizon)
            .map_err(|e| ConfigError(format!("problem: {e}")))?;
        for (alpha, row) in a.iter().enumerate() {
            for (beta, v) in row.iter().enumerate() {
                prob = prob.with_a(alpha, beta, *v);
            }
        }
        for (alpha, row) in b.iter().enumerate() {
            for (rho, v) in row.iter().enumerate() {
                prob = prob.with_b(alpha, rho, *v);
            }
        }
        for (rho, v) in g.iter().enumerate() {
            prob = prob.with_noise_forcing(rho, *v);
        }
        let ps = periods.clone();
        Ok(prob.with_forcing(p.f.unwrap_or(0.0)).with_initial(Coefficient::spatial(move |x| {
            x.iter()
                .zip(&ps)
                .map(|(xa, pa)| (2.0 * PI * mode * xa / pa).cos())
                .product()
        })))
    }

    pub fn horizon(&self) -> f64 {
        match (&self.problem.horizon, &self.problem.name) {
            (Some(t), _) => *t,
            (None, Some(name)) => default_horizon(name),
            (None, None) => 0.5,
        }
    }

    pub fn tau(&self) -> f64 {
        self.horizon() / self.time.n as f64
    }

    pub fn build_scheme(&self, problem: &DifferentialProblem) -> DifferenceScheme {
        match self.scheme.kind {
            SchemeKind::Example1 => build_scheme_example1(problem),
            SchemeKind::Example2 => build_scheme_example2(problem),
        }
    }

    /// The coarsest ladder grid.
    pub fn base_grid(&self) -> Result<TorusGrid, ConfigError> {
        let problem = self.build_problem()?;
        let h0 = self.ladder.h0;
        if !(h0.is_finite() && h0 > 0.0) {
            return err(format!("ladder.h0 must be positive, got {h0}"));
        }
        let mut points = Vec::new();
        for p in problem.periods() {
            let n = (p / h0).round();
            if n < 2.0 || ((p / h0) - n).abs() > 1e-9 * n {
                return err(format!("ladder.h0 = {h0} does not divide the period {p} into at least 2 cells"));
            }
            points.push(n as usize);
        }
        TorusGrid::new(problem.dim(), problem.periods(), &points).map_err(|e| ConfigError(format!("ladder: {e}")))
    }

    /// Extrapolation levels and base for the configured scheme.
    pub fn weights_level_and_base(&self, symmetric: bool) -> (usize, u32) {
        if symmetric {
            (self.extrapolation.k / 2, 4)
        } else {
            (self.extrapolation.k, 2)
        }
    }

    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Self {
        self.run.seeds = seeds;
        self
    }
}

/// Parses `"1,2,5"`.
pub fn parse_seed_list(s: &str) -> Result<Vec<u64>, ConfigError> {
    let seeds = s
        .split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<u64>().map_err(|e| ConfigError(format!("bad seed '{t}': {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if seeds.is_empty() {
        return err("the seed list is empty");
    }
    Ok(seeds)
}
