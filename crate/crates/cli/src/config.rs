//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use plaplab::dnmap::BoundaryDictionary;
use plaplab::expr::parse_expression;
use plaplab::io::{read_field, read_mesh, FieldData, Location};
use plaplab::ucp2d::promote_to_vertices;
use plaplab::{build_structured_mesh, Error, MatrixField, Mesh, NodalFunction, Rect, Result, ScalarField, SolverOptions, Sym2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Solve,
    Dn,
    Mono,
    Detect,
    Perturb,
    Ucp,
    CalibrateEps,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Solve => "solve",
            Kind::Dn => "dn",
            Kind::Mono => "mono",
            Kind::Detect => "detect",
            Kind::Perturb => "perturb",
            Kind::Ucp => "ucp",
            Kind::CalibrateEps => "calibrate-eps",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum MeshSpec {
    Rect { rect: [f64; 4], n: usize },
    File { file: PathBuf },
}

impl Default for MeshSpec {
    fn default() -> Self {
        MeshSpec::Rect {
            rect: [0.0, 1.0, 0.0, 1.0],
            n: 16,
        }
    }
}

/// Closed-form expression or a field file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ScalarSpec {
    Const(f64),
    Expr(String),
    File { file: PathBuf },
}

/// `"identity"`, three expressions `[a11, a12, a22]`, or a field file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum MatrixSpec {
    Named(String),
    Exprs([String; 3]),
    File { file: PathBuf },
}

impl Default for MatrixSpec {
    fn default() -> Self {
        MatrixSpec::Named("identity".into())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DictionarySpec {
    Linear,
    Bumps { count: usize, width: f64 },
    /// Linear traces followed by bumps.
    Default { count: usize, width: f64 },
    /// Labeled expressions, in the given order.
    Exprs { entries: Vec<(String, String)> },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Absolute solver residual tolerance; default scales with the data.
    pub solver: Option<f64>,
    pub max_iterations: Option<usize>,
    /// Relative tolerance for comparisons against expected values.
    pub check: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum DirectionSpec {
    /// Cellwise i.i.d. uniform `delta sigma` in `[-amplitude, amplitude]`
    /// drawn from the `perturb.direction` seed stream.
    Random { random: f64 },
    Exprs {
        sigma: Option<String>,
        a: Option<[String; 3]>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// May be left out when the subcommand names the experiment.
    pub kind: Option<Kind>,
    #[serde(default)]
    pub mesh: MeshSpec,
    /// Conductivity; `sigma1` of the monotonicity experiments.
    #[serde(default = "one")]
    pub sigma: ScalarSpec,
    /// Reference conductivity of `mono` and `detect`.
    pub sigma2: Option<ScalarSpec>,
    #[serde(default)]
    pub a: MatrixSpec,
    pub p: f64,
    /// Boundary data of `solve`, `perturb` and `ucp`.
    #[serde(default = "x1")]
    pub f: String,
    pub dictionary: Option<DictionarySpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Fail before solving unless `sigma >= sigma2` (mono).
    #[serde(default = "yes")]
    pub assert_ordering: bool,
    /// Expected energy of a `solve` run.
    pub expect_energy: Option<f64>,
    /// Perturbation ladder (`perturb`) or calibration ladder (`calibrate-eps`).
    pub ladder: Option<Vec<f64>>,
    pub direction: Option<DirectionSpec>,
    /// Indicator of the true difference set for `detect`, as an expression.
    pub truth: Option<String>,
    pub quantile: Option<f64>,
    /// Plateau threshold for `ucp`; default is relative.
    pub plateau_threshold: Option<f64>,
}

fn one() -> ScalarSpec {
    ScalarSpec::Expr("1".into())
}

fn x1() -> String {
    "x1".into()
}

fn yes() -> bool {
    true
}

/// Parses a config document; errors carry the line and column. Semantic
/// checks happen in [`ExperimentConfig::validate`].
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Parse {
        location: format!("field '{field}'"),
        message: msg.to_string(),
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let kind = self.kind.ok_or_else(|| field_err("kind", "missing"))?;
        if !(self.p.is_finite() && self.p > 1.0) {
            return Err(field_err("p", format!("must lie in (1, inf), got {}", self.p)));
        }
        if matches!(kind, Kind::Mono | Kind::Detect) && self.sigma2.is_none() {
            return Err(field_err("sigma2", format!("required for kind '{}'", kind.name())));
        }
        if kind == Kind::Perturb && self.direction.is_none() {
            return Err(field_err("direction", "required for kind 'perturb'"));
        }
        if let MeshSpec::Rect { n, rect } = &self.mesh {
            if *n == 0 || !(rect[1] > rect[0] && rect[3] > rect[2]) {
                return Err(field_err("mesh", "rect must be [x0, x1, y0, y1] with x0 < x1, y0 < y1 and n >= 1"));
            }
        }
        Ok(())
    }

    pub fn solver_options(&self) -> SolverOptions {
        let mut o = SolverOptions {
            tol: self.tolerances.solver,
            ..SolverOptions::default()
        };
        if let Some(m) = self.tolerances.max_iterations {
            o.max_iterations = m;
        }
        o
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Turns the specs of a config into mesh-bound objects. Relative file
/// paths resolve against `base`.
pub struct Resolver<'a> {
    pub base: &'a Path,
}

impl Resolver<'_> {
    pub fn mesh(&self, spec: &MeshSpec) -> Result<Mesh> {
        match spec {
            MeshSpec::Rect { rect, n } => build_structured_mesh(Rect::new(rect[0], rect[1], rect[2], rect[3]), *n),
            MeshSpec::File { file } => read_mesh(&resolve(self.base, file)),
        }
    }

    pub fn scalar(&self, mesh: &Mesh, spec: &ScalarSpec, name: &str) -> Result<ScalarField> {
        match spec {
            ScalarSpec::Const(c) => ScalarField::constant(mesh, *c),
            ScalarSpec::Expr(s) => {
                let e = parse_expression(s).map_err(|e| field_err(name, e))?;
                ScalarField::new(mesh, e.on_cells(mesh))
            }
            ScalarSpec::File { file } => {
                let f = read_field(&resolve(self.base, file))?;
                if !f.matches(mesh) {
                    return Err(field_err(name, "field size does not match the mesh"));
                }
                match (f.location, f.data) {
                    (Location::Cell, FieldData::Scalar(v)) => ScalarField::new(mesh, v),
                    (Location::Vertex, FieldData::Scalar(v)) => {
                        ScalarField::from_vertex_average(mesh, &NodalFunction::new(mesh, v)?)
                    }
                    _ => Err(field_err(name, "expected a scalar field")),
                }
            }
        }
    }

    /// Vertex samples of a scalar coefficient: expressions are evaluated at
    /// vertices, cellwise files are promoted by area-weighted averaging.
    pub fn scalar_at_vertices(&self, mesh: &Mesh, spec: &ScalarSpec, name: &str) -> Result<NodalFunction> {
        match spec {
            ScalarSpec::Const(c) => Ok(NodalFunction::constant(mesh, *c)),
            ScalarSpec::Expr(s) => Ok(parse_expression(s).map_err(|e| field_err(name, e))?.on_vertices(mesh)),
            ScalarSpec::File { file } => {
                let f = read_field(&resolve(self.base, file))?;
                match (f.location, f.data) {
                    (Location::Vertex, FieldData::Scalar(v)) => NodalFunction::new(mesh, v),
                    (Location::Cell, FieldData::Scalar(v)) => promote_to_vertices(mesh, &v),
                    _ => Err(field_err(name, "expected a scalar field")),
                }
            }
        }
    }

    pub fn matrix(&self, mesh: &Mesh, spec: &MatrixSpec) -> Result<MatrixField> {
        match spec {
            MatrixSpec::Named(s) if s == "identity" => Ok(MatrixField::identity(mesh)),
            MatrixSpec::Named(s) => Err(field_err("a", format!("unknown matrix '{s}'"))),
            MatrixSpec::Exprs(es) => {
                let ex = es
                    .iter()
                    .map(|s| parse_expression(s).map_err(|e| field_err("a", e)))
                    .collect::<Result<Vec<_>>>()?;
                MatrixField::from_fn(mesh, |x| Sym2::new(ex[0].eval(x), ex[1].eval(x), ex[2].eval(x)))
            }
            MatrixSpec::File { file } => {
                let f = read_field(&resolve(self.base, file))?;
                match (f.location, f.data) {
                    (Location::Cell, FieldData::Matrix(m)) if m.len() == mesh.num_cells() => MatrixField::new(mesh, m),
                    _ => Err(field_err("a", "expected a cellwise matrix field matching the mesh")),
                }
            }
        }
    }

    pub fn nodal(&self, mesh: &Mesh, expr: &str, name: &str) -> Result<NodalFunction> {
        Ok(parse_expression(expr).map_err(|e| field_err(name, e))?.on_vertices(mesh))
    }

    pub fn dictionary(&self, mesh: &Mesh, spec: &DictionarySpec) -> Result<BoundaryDictionary> {
        match spec {
            DictionarySpec::Linear => Ok(BoundaryDictionary::linear(mesh)),
            DictionarySpec::Bumps { count, width } => BoundaryDictionary::boundary_bumps(mesh, *count, *width),
            DictionarySpec::Default { count, width } => BoundaryDictionary::default_for(mesh, *count, *width),
            DictionarySpec::Exprs { entries } => {
                let e = entries
                    .iter()
                    .map(|(l, s)| Ok((l.clone(), self.nodal(mesh, s, "dictionary")?)))
                    .collect::<Result<Vec<_>>>()?;
                BoundaryDictionary::new(mesh, e)
            }
        }
    }
}
