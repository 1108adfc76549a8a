//! The JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::expr::{Expr, ExprError};
use super::AppError;
use crate::glue::GlueConfig;
use crate::grid::{DomainSpec, GridField, GridGeometry};
use crate::solver::SolverConfig;

/// Largest complex dimension the command line accepts.
pub const MAX_N: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Glue,
    Check,
    Oracle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Glue => "glue",
            Command::Check => "check",
            Command::Oracle => "oracle",
        }
    }
}

/// A scalar field given as a constant or a whitelisted expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldSpec {
    Constant(f64),
    Expression(Expr),
}

impl FieldSpec {
    fn check(&self, what: &str, n: usize) -> Result<(), AppError> {
        match self {
            FieldSpec::Constant(c) if !c.is_finite() => {
                Err(AppError::Config(format!("{what}: constant {c} is not finite")))
            }
            FieldSpec::Expression(e) if e.max_index() > n => Err(AppError::Config(format!(
                "{what}: '{e}' uses coordinate {} but n = {n}",
                e.max_index()
            ))),
            _ => Ok(()),
        }
    }

    /// Values at every grid point; any evaluation error is reported with the
    /// offending grid index.
    pub fn sample(&self, what: &str, geom: &GridGeometry) -> Result<Vec<f64>, AppError> {
        (0..geom.len())
            .map(|lin| match self {
                FieldSpec::Constant(c) => Ok(*c),
                FieldSpec::Expression(e) => e.eval(&geom.coords(lin)).map_err(|err| {
                    AppError::Config(format!(
                        "{what}: '{e}' at grid point {:?}: {err}",
                        geom.unravel(lin).as_slice()
                    ))
                }),
            })
            .collect()
    }

    /// `sample` on the grid of `like`, keeping its mask.
    pub fn field_like(&self, what: &str, like: &GridField) -> Result<GridField, AppError> {
        let values = self.sample(what, like.geometry())?;
        Ok(like.with_values(values)?)
    }
}

/// Right-hand side of a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhsSpec {
    Constant(f64),
    Expression(Expr),
    /// `S_m = 0`, approached through the solver's ε-schedule.
    Homogeneous,
}

impl RhsSpec {
    pub fn as_field(&self) -> Option<FieldSpec> {
        match self {
            RhsSpec::Constant(c) => Some(FieldSpec::Constant(*c)),
            RhsSpec::Expression(e) => Some(FieldSpec::Expression(e.clone())),
            RhsSpec::Homogeneous => None,
        }
    }
}

/// Periodic grid for the smoothing pipeline: `points` per real axis on
/// `R^{2n} / (period Z)^{2n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusSpec {
    pub points: usize,
    #[serde(default = "unit")]
    pub period: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSpec {
    /// Saved field (CSV with sidecar), relative to the config file.
    pub field: Option<PathBuf>,
    /// Defaults to `10 h^2`.
    pub tol: Option<f64>,
    /// Tests `H u + shift I`; `1` is admissibility on the flat torus.
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpec {
    /// Random Hermitian matrices on which the ratio is re-evaluated.
    pub samples: usize,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self { samples: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must match the subcommand when present.
    #[serde(default)]
    pub command: Option<Command>,
    pub n: usize,
    pub m: usize,
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub torus: Option<TorusSpec>,
    #[serde(default)]
    pub rhs: Option<RhsSpec>,
    /// Read `rhs` as the density `f` of `(dd^c u)^m ∧ β^{n-m} = f β^n` and
    /// divide it by the wedge normalization before solving.
    #[serde(default)]
    pub density: bool,
    #[serde(default)]
    pub boundary: Option<FieldSpec>,
    /// Known solution; the summary then reports the max-norm error.
    #[serde(default)]
    pub exact: Option<FieldSpec>,
    /// The function `u` to smooth.
    #[serde(default)]
    pub input: Option<FieldSpec>,
    #[serde(default)]
    pub check: CheckSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub glue: GlueConfig,
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Directory that relative paths resolve against; set by the loader.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn parse_error(err: serde_path_to_error::Error<serde_json::Error>) -> AppError {
    let path = err.path().to_string();
    let inner = err.into_inner();
    let field = if path == "." { "<root>".to_string() } else { path };
    AppError::Config(format!("field '{field}': {inner}"))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, AppError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(parse_error)
    }

    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path).map_err(|source| AppError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Hex SHA-256 of the normalized config (defaults filled in) and seed.
    pub fn content_hash(&self, command: Command, seed: u64) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(command.name().as_bytes());
        hasher.update(b"\n");
        hasher.update(json.as_bytes());
        hasher.update(b"\n");
        hasher.update(seed.to_le_bytes());
        hex::encode(hasher.finalize())
    }

    /// Checks everything `command` needs before any work starts.
    pub fn validate(&self, command: Command) -> Result<(), AppError> {
        let bad = |msg: String| Err(AppError::Config(msg));
        if let Some(c) = self.command {
            if c != command {
                return bad(format!(
                    "field 'command': config is for '{}' but '{}' was requested",
                    c.name(),
                    command.name()
                ));
            }
        }
        if !(1..=MAX_N).contains(&self.n) {
            return bad(format!("field 'n': {} outside 1..={MAX_N}", self.n));
        }
        if !(1..=self.n).contains(&self.m) {
            return bad(format!("field 'm': {} outside 1..={}", self.m, self.n));
        }
        let require = |name: &str, present: bool| {
            if present {
                Ok(())
            } else {
                Err(AppError::Config(format!(
                    "field '{name}' is required for '{}'",
                    command.name()
                )))
            }
        };
        match command {
            Command::Solve => {
                require("domain", self.domain.is_some())?;
                require("rhs", self.rhs.is_some())?;
                require("boundary", self.boundary.is_some())?;
                let domain = self.domain.as_ref().expect("checked");
                domain
                    .validate()
                    .map_err(|e| AppError::Config(format!("field 'domain': {e}")))?;
                if domain.n() != self.n {
                    return bad(format!("field 'domain': dimension {} but n = {}", domain.n(), self.n));
                }
                if let Some(f) = self.rhs.as_ref().and_then(RhsSpec::as_field) {
                    f.check("rhs", self.n)?;
                } else if self.density {
                    return bad("field 'density': a homogeneous rhs has no density".into());
                }
                self.boundary.as_ref().expect("checked").check("boundary", self.n)?;
                if let Some(e) = &self.exact {
                    e.check("exact", self.n)?;
                }
                self.solver
                    .validate()
                    .map_err(|e| AppError::Config(format!("field 'solver': {e}")))?;
            }
            Command::Glue => {
                require("torus", self.torus.is_some())?;
                require("input", self.input.is_some())?;
                self.input.as_ref().expect("checked").check("input", self.n)?;
                let mut glue = self.glue.clone();
                glue.m = self.m;
                glue.validate()
                    .map_err(|e| AppError::Config(format!("field 'glue': {e}")))?;
            }
            Command::Check => {
                require("check.field", self.check.field.is_some())?;
                if let Some(t) = self.check.tol {
                    if !(t.is_finite() && t >= 0.0) {
                        return bad(format!("field 'check.tol': {t} must be >= 0"));
                    }
                }
                if !self.check.shift.is_finite() {
                    return bad("field 'check.shift' must be finite".into());
                }
            }
            Command::Oracle => {}
        }
        Ok(())
    }
}

impl From<ExprError> for AppError {
    fn from(e: ExprError) -> Self {
        AppError::Config(e.to_string())
    }
}
