//! Run configuration: JSON schema, defaults and validation.
//!
//! A config file names a method, a problem (a built-in preset or an inline
//! description) and optional overrides. Anything the file leaves out comes
//! from the preset's `defaults` block, then from [`Config`]'s fallbacks.
//!
//! ```json
//! {
//!   "method": "dlr-pn",
//!   "rank": 8,
//!   "problem": { "preset": "lattice" },
//!   "output": { "dir": "out", "every": 50, "vtk": true }
//! }
//! ```
//!
//! Unknown keys are rejected everywhere; errors carry the key path.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use trt_core::angular::{smooth_basis, QuadratureSet};
use trt_core::mesh::Shape;
use trt_core::physics::{Constants, Material};

use crate::presets;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{origin}: at `{path}`: {message}")]
    Parse {
        origin: String,
        path: String,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
pub enum Method {
    #[serde(rename = "sn")]
    Sn,
    #[serde(rename = "dlr-sn")]
    DlrSn,
    #[serde(rename = "dlr-pn")]
    DlrPn,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sn, Method::DlrSn, Method::DlrPn];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sn => "sn",
            Method::DlrSn => "dlr-sn",
            Method::DlrPn => "dlr-pn",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected sn, dlr-sn or dlr-pn)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub n_polar: usize,
    pub n_azimuthal: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Source-iteration stopping tolerance (SN, DLR-SN).
    pub si_tol: f64,
    /// CG tolerance for the K-step blocks (DLR-PN).
    pub cg_tol: f64,
    pub max_iters: usize,
    pub dsa: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            si_tol: 1e-10,
            cg_tol: 1e-10,
            max_iters: 10_000,
            dsa: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Dump fields every this many steps (0: initial and final only).
    #[serde(default)]
    pub every: usize,
    #[serde(default)]
    pub vtk: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialRadiation {
    /// Isotropic at the Planck emission of the initial temperature.
    #[default]
    Equilibrium,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    #[serde(default)]
    pub name: String,
    pub sigma_a: f64,
    pub c_v: f64,
    pub rho: f64,
}

impl MaterialSpec {
    pub fn material(&self) -> Material {
        Material {
            sigma_a: self.sigma_a,
            c_v: self.c_v,
            rho: self.rho,
        }
    }
}

/// One painted region: exactly one of `rect` (`[x0, y0, x1, y1]`) or `disc`
/// (`[cx, cy, radius]`).
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSpec {
    pub rect: Option<[f64; 4]>,
    pub disc: Option<[f64; 3]>,
    pub material: usize,
    /// Initial temperature inside the shape (keV); the background
    /// temperature when absent.
    pub temperature: Option<f64>,
}

impl ShapeSpec {
    pub fn shape(&self) -> Result<Shape, ConfigError> {
        match (self.rect, self.disc) {
            (Some([x0, y0, x1, y1]), None) => Ok(Shape::Rect {
                x0,
                y0,
                x1,
                y1,
                material: self.material,
            }),
            (None, Some([cx, cy, radius])) => Ok(Shape::Disc {
                cx,
                cy,
                radius,
                material: self.material,
            }),
            _ => Err(invalid("each shape needs exactly one of `rect` or `disc`")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    pub grid: Option<[usize; 2]>,
    pub quadrature: Option<QuadratureConfig>,
    pub rank: Option<usize>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
}

/// Geometry, materials and initial temperatures. Also the preset file format.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default)]
    pub description: String,
    /// Domain `[0, Lx] × [0, Ly]`, cm.
    pub extent: [f64; 2],
    pub materials: Vec<MaterialSpec>,
    pub background: usize,
    pub background_temperature: f64,
    #[serde(default)]
    pub shapes: Vec<ShapeSpec>,
    #[serde(default)]
    pub defaults: Defaults,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum ProblemSource {
    Preset(String),
    Inline(ProblemSpec),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsFile {
    c: Option<f64>,
    a_r: Option<f64>,
    t_min: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    method: Method,
    problem: ProblemSource,
    rank: Option<usize>,
    quadrature: Option<QuadratureConfig>,
    grid: Option<[usize; 2]>,
    dt: Option<f64>,
    t_final: Option<f64>,
    #[serde(default)]
    solver: SolverConfig,
    #[serde(default)]
    constants: ConstantsFile,
    output: Option<OutputConfig>,
    #[serde(default)]
    initial_radiation: InitialRadiation,
}

/// A validated run description.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub method: Method,
    pub rank: usize,
    pub quadrature: QuadratureConfig,
    pub grid: [usize; 2],
    pub dt: f64,
    pub t_final: f64,
    pub solver: SolverConfig,
    pub constants: Constants,
    /// No files are written when absent.
    pub output: Option<OutputConfig>,
    pub initial_radiation: InitialRadiation,
    pub problem: ProblemSpec,
}

pub const FALLBACK_RANK: usize = 8;
pub const FALLBACK_QUADRATURE: QuadratureConfig = QuadratureConfig {
    n_polar: 4,
    n_azimuthal: 8,
};
pub const FALLBACK_DT: f64 = 0.1;
/// Largest DLR-PN rank: the S step solves an `r² × r²` system densely.
pub const MAX_PN_RANK: usize = 64;

pub(crate) fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
        origin: origin.to_string(),
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, &path.display().to_string())
}

/// Parses and validates config text; `origin` labels error messages.
pub fn parse_config(text: &str, origin: &str) -> Result<Config, ConfigError> {
    let file: ConfigFile = parse_json(text, origin)?;
    let problem = match file.problem {
        ProblemSource::Preset(name) => presets::preset(&name)?,
        ProblemSource::Inline(spec) => spec,
    };
    let d = problem.defaults.clone();
    let k = Constants::default();
    let config = Config {
        method: file.method,
        rank: file.rank.or(d.rank).unwrap_or(FALLBACK_RANK),
        quadrature: file.quadrature.or(d.quadrature).unwrap_or(FALLBACK_QUADRATURE),
        grid: file
            .grid
            .or(d.grid)
            .ok_or_else(|| invalid("`grid` is required when the problem has no default"))?,
        dt: file.dt.or(d.dt).unwrap_or(FALLBACK_DT),
        t_final: file
            .t_final
            .or(d.t_final)
            .ok_or_else(|| invalid("`t_final` is required when the problem has no default"))?,
        solver: file.solver,
        constants: Constants {
            c: file.constants.c.unwrap_or(k.c),
            a_r: file.constants.a_r.unwrap_or(k.a_r),
            t_min: file.constants.t_min.unwrap_or(k.t_min),
        },
        output: file.output,
        initial_radiation: file.initial_radiation,
        problem,
    };
    config.validate()?;
    Ok(config)
}

impl Config {
    pub fn quadrature_set(&self) -> Result<QuadratureSet, ConfigError> {
        QuadratureSet::new(self.quadrature.n_polar, self.quadrature.n_azimuthal)
            .map_err(|e| invalid(format!("quadrature: {e}")))
    }

    /// Number of time steps; `t_final` must be a whole number of `dt`.
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let [nx, ny] = self.grid;
        if nx == 0 || ny == 0 {
            return Err(invalid(format!("grid must be at least 1 x 1 (got {nx} x {ny})")));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("dt must be positive (got {})", self.dt)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(invalid(format!("t_final must be nonnegative (got {})", self.t_final)));
        }
        let steps = self.t_final / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(invalid(format!(
                "t_final {} is not a whole number of steps of dt {}",
                self.t_final, self.dt
            )));
        }
        let s = &self.solver;
        if !(s.si_tol > 0.0 && s.cg_tol > 0.0) || s.max_iters == 0 {
            return Err(invalid("solver tolerances and max_iters must be positive"));
        }
        let k = &self.constants;
        if !(k.c > 0.0 && k.a_r > 0.0 && k.t_min >= 0.0) {
            return Err(invalid("constants: c and a_r must be positive, t_min nonnegative"));
        }
        if let Some(out) = &self.output {
            if out.dir.as_os_str().is_empty() {
                return Err(invalid("output.dir is empty"));
            }
        }
        self.validate_problem()?;

        let q = self.quadrature_set()?;
        let n = q.len();
        match self.method {
            Method::Sn => {}
            Method::DlrSn => {
                if self.rank == 0 || self.rank > n {
                    return Err(invalid(format!(
                        "dlr-sn rank {} must lie between 1 and the number of angles {}",
                        self.rank, n
                    )));
                }
            }
            Method::DlrPn => {
                if self.rank == 0 || self.rank > MAX_PN_RANK {
                    return Err(invalid(format!(
                        "dlr-pn needs 1 <= rank <= {MAX_PN_RANK} (rank {})",
                        self.rank
                    )));
                }
                smooth_basis(&q, self.rank).map_err(|e| invalid(format!("dlr-pn rank {}: {e}", self.rank)))?;
            }
        }
        Ok(())
    }

    fn validate_problem(&self) -> Result<(), ConfigError> {
        let p = &self.problem;
        if !(p.extent[0] > 0.0 && p.extent[1] > 0.0 && p.extent.iter().all(|e| e.is_finite())) {
            return Err(invalid(format!("problem extent must be positive (got {:?})", p.extent)));
        }
        if p.materials.is_empty() {
            return Err(invalid("problem has no materials"));
        }
        for (i, m) in p.materials.iter().enumerate() {
            m.material()
                .validate()
                .map_err(|e| invalid(format!("material {i} ({}): {e}", m.name)))?;
        }
        let n = p.materials.len();
        if p.background >= n {
            return Err(invalid(format!("background material {} out of range ({n} materials)", p.background)));
        }
        if !(p.background_temperature >= 0.0) {
            return Err(invalid("background_temperature must be nonnegative"));
        }
        for (i, s) in p.shapes.iter().enumerate() {
            s.shape().map_err(|e| invalid(format!("shape {i}: {e}")))?;
            if s.material >= n {
                return Err(invalid(format!("shape {i}: material {} out of range ({n} materials)", s.material)));
            }
            if let Some(t) = s.temperature {
                if !(t >= 0.0) {
                    return Err(invalid(format!("shape {i}: temperature must be nonnegative")));
                }
            }
        }
        Ok(())
    }
}
