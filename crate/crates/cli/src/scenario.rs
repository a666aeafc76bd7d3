//! TOML scenarios: named currents plus an ordered pipeline of operations.
//!
//! ```toml
//! ambient = 2
//! seed = 7
//! quadrature_order = 16
//!
//! [tolerances]
//! mass = 1e-10
//!
//! [currents.d]
//! fixture = "disk"
//!
//! [[ops]]
//! op = "mass"
//! current = "d"
//! expect_value = 3.141592653589793
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use metric_currents::fixtures::FIXTURE_NAMES;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::{CliError, Result};

/// Default tolerances; a scenario overrides any subset in `[tolerances]`.
///
/// | key            | default | meaning                                            |
/// |----------------|---------|----------------------------------------------------|
/// | mass           | 1e-10   | absolute error of `mass` against `expect_value`    |
/// | evaluate       | 1e-10   | absolute error of `evaluate` against `expect_value`|
/// | stokes         | 1e-8    | Stokes residual relative to `1 + |T(1, f, pi)|`    |
/// | wirtinger      | 1e-6    | `|coordinate_sum - mass|` relative to the mass     |
/// | probe          | 1e-6    | vanishing threshold for typed probe evaluations    |
/// | slice_integral | 1e-4    | slice-integral residual                            |
/// | support        | 1e-8    | king reconstruction support residual               |
/// | boundary       | 1e-6    | normalized `dT - M` residual                       |
/// | tail           | 1e-19   | squared tail bound of a truncated cycle            |
pub const DEFAULT_TOLERANCES: &[(&str, f64)] = &[
    ("mass", 1e-10),
    ("evaluate", 1e-10),
    ("stokes", 1e-8),
    ("wirtinger", 1e-6),
    ("probe", 1e-6),
    ("slice_integral", 1e-4),
    ("support", 1e-8),
    ("boundary", 1e-6),
    ("tail", 1e-19),
];

pub const DEFAULT_ORDER: usize = 16;

fn default_order() -> usize {
    DEFAULT_ORDER
}

/// Where a named current comes from. Exactly one source must be given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurrentSource {
    /// Interchange file, relative to the scenario file.
    pub file: Option<PathBuf>,
    /// Named fixture generator.
    pub fixture: Option<String>,
    /// Coordinates, in `z1`, of a curve over the circle `|z1 - center| = radius`.
    pub over_circle: Option<Vec<String>>,
    /// Coordinates, in `z1`, of a graph over the disk `|z1 - center| < radius`.
    pub over_disk: Option<Vec<String>>,
    pub n: Option<usize>,
    pub radius: Option<f64>,
    pub center: Option<[f64; 2]>,
    pub multiplicity: Option<i64>,
}

/// What an op is expected to do; the bundle passes when every op meets it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    #[default]
    Pass,
    /// At least one check fails, or the op is rejected.
    Fail,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MassOp {
    pub current: String,
    pub expect_value: Option<f64>,
    /// Extra quadrature orders for a convergence table.
    #[serde(default)]
    pub orders: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateOp {
    pub current: String,
    pub f: String,
    #[serde(default)]
    pub pi: Vec<String>,
    pub expect_value: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryOp {
    pub current: String,
    #[serde(rename = "as")]
    pub name: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StokesOp {
    pub current: String,
    #[serde(default = "ten")]
    pub probes: usize,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PushforwardOp {
    pub current: String,
    /// One s-expression in `z1..zn` per output coordinate.
    pub map: Vec<String>,
    #[serde(rename = "as")]
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectOp {
    pub current: String,
    /// 1-based coordinates kept.
    pub indices: Vec<usize>,
    #[serde(rename = "as")]
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyOp {
    pub current: String,
    pub p: usize,
    pub q: usize,
    #[serde(default = "ten")]
    pub probes: usize,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositivityOp {
    pub current: String,
    pub k: usize,
    #[serde(default)]
    pub projections: usize,
    #[serde(default = "ten")]
    pub probes: usize,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WirtingerOp {
    pub current: String,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxComplexOp {
    pub current: String,
    #[serde(default = "ten")]
    pub probes: usize,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceOp {
    pub current: String,
    /// 1-based projection coordinates.
    pub indices: Vec<usize>,
    pub point: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SheetCountsOp {
    pub current: String,
    pub indices: Vec<usize>,
    pub from: Vec<[f64; 2]>,
    pub to: Vec<[f64; 2]>,
    #[serde(default = "twenty")]
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceIntegralOp {
    pub current: String,
    pub indices: Vec<usize>,
    /// Test function in `z1..zn`.
    pub f: String,
    /// Polar base grid radius around the origin of the base.
    pub radius: f64,
    #[serde(default = "sixteen")]
    pub per_axis: usize,
    /// Also run at twice `per_axis` and tabulate.
    #[serde(default)]
    pub refine: bool,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KingOp {
    pub current: String,
    #[serde(default = "yes")]
    pub check_preconditions: bool,
    /// Base tiles per real axis; unset keeps the library default.
    pub tiles: Option<usize>,
    /// Chebyshev nodes per real axis of a tile.
    pub nodes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleOp {
    pub current: String,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveBoundaryOp {
    pub current: String,
    /// Binds the assembled chain for later ops.
    #[serde(rename = "as")]
    pub name: Option<String>,
    /// Coordinates kept; defaults to the ambient dimension.
    pub trunc: Option<usize>,
    pub grid: Option<usize>,
    pub smax: Option<usize>,
    pub raster: Option<usize>,
    /// Gauss-Legendre order of the moment quadrature.
    pub quadrature: Option<usize>,
    #[serde(default = "fifty")]
    pub probes: usize,
    /// Panels per cell for the Stokes verification.
    #[serde(default = "one")]
    pub verify_panels: usize,
    #[serde(default = "yes")]
    pub verify: bool,
}

fn one() -> usize {
    1
}
fn ten() -> usize {
    10
}
fn sixteen() -> usize {
    16
}
fn twenty() -> usize {
    20
}
fn fifty() -> usize {
    50
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq)]
pub enum OpSpec {
    Mass(MassOp),
    Evaluate(EvaluateOp),
    Boundary(BoundaryOp),
    Stokes(StokesOp),
    Pushforward(PushforwardOp),
    Project(ProjectOp),
    Classify(ClassifyOp),
    Positivity(PositivityOp),
    Wirtinger(WirtingerOp),
    MaximallyComplex(MaxComplexOp),
    Slice(SliceOp),
    SheetCounts(SheetCountsOp),
    SliceIntegral(SliceIntegralOp),
    KingReconstruct(KingOp),
    ValidateCycle(CycleOp),
    SolveBoundary(SolveBoundaryOp),
}

/// `(name, randomized, provenance)` for every op.
pub const OPS: &[(&str, bool, &str)] = &[
    ("mass", false, "current_core::mass"),
    ("evaluate", false, "current_core::evaluate"),
    ("boundary", false, "current_core::boundary"),
    ("stokes", true, "current_core::boundary"),
    ("pushforward", false, "current_core::pushforward"),
    ("project", false, "hilbert_ambient::project_current"),
    ("classify", true, "complex_ops::classify_bidimension"),
    ("positivity", true, "complex_ops::is_positive"),
    ("wirtinger", false, "complex_ops::wirtinger_mass"),
    ("maximally_complex", true, "complex_ops::is_maximally_complex"),
    ("slice", true, "slicing::slice_points"),
    ("sheet_counts", true, "slicing::sheet_counts"),
    ("slice_integral", true, "slicing::slice_integral_check"),
    ("king_reconstruct", true, "king_reconstruct::assemble_variety"),
    ("validate_cycle", true, "boundary_solver::validate_cycle"),
    ("solve_boundary", true, "boundary_solver::assemble"),
];

impl OpSpec {
    pub fn name(&self) -> &'static str {
        match self {
            OpSpec::Mass(_) => "mass",
            OpSpec::Evaluate(_) => "evaluate",
            OpSpec::Boundary(_) => "boundary",
            OpSpec::Stokes(_) => "stokes",
            OpSpec::Pushforward(_) => "pushforward",
            OpSpec::Project(_) => "project",
            OpSpec::Classify(_) => "classify",
            OpSpec::Positivity(_) => "positivity",
            OpSpec::Wirtinger(_) => "wirtinger",
            OpSpec::MaximallyComplex(_) => "maximally_complex",
            OpSpec::Slice(_) => "slice",
            OpSpec::SheetCounts(_) => "sheet_counts",
            OpSpec::SliceIntegral(_) => "slice_integral",
            OpSpec::KingReconstruct(_) => "king_reconstruct",
            OpSpec::ValidateCycle(_) => "validate_cycle",
            OpSpec::SolveBoundary(_) => "solve_boundary",
        }
    }

    fn entry(&self) -> &'static (&'static str, bool, &'static str) {
        OPS.iter().find(|e| e.0 == self.name()).expect("every op is listed")
    }

    pub fn randomized(&self) -> bool {
        self.entry().1
    }

    pub fn provenance(&self) -> &'static str {
        self.entry().2
    }

    /// The current the op reads.
    pub fn input(&self) -> &str {
        match self {
            OpSpec::Mass(o) => &o.current,
            OpSpec::Evaluate(o) => &o.current,
            OpSpec::Boundary(o) => &o.current,
            OpSpec::Stokes(o) => &o.current,
            OpSpec::Pushforward(o) => &o.current,
            OpSpec::Project(o) => &o.current,
            OpSpec::Classify(o) => &o.current,
            OpSpec::Positivity(o) => &o.current,
            OpSpec::Wirtinger(o) => &o.current,
            OpSpec::MaximallyComplex(o) => &o.current,
            OpSpec::Slice(o) => &o.current,
            OpSpec::SheetCounts(o) => &o.current,
            OpSpec::SliceIntegral(o) => &o.current,
            OpSpec::KingReconstruct(o) => &o.current,
            OpSpec::ValidateCycle(o) => &o.current,
            OpSpec::SolveBoundary(o) => &o.current,
        }
    }

    /// The name the op binds its output current to, if any.
    pub fn output(&self) -> Option<&str> {
        match self {
            OpSpec::Boundary(o) => o.name.as_deref(),
            OpSpec::Pushforward(o) => Some(&o.name),
            OpSpec::Project(o) => Some(&o.name),
            OpSpec::SolveBoundary(o) => o.name.as_deref(),
            _ => None,
        }
    }

    fn parse(name: &str, rest: toml::Table) -> std::result::Result<OpSpec, String> {
        fn p<T: DeserializeOwned>(t: toml::Table) -> std::result::Result<T, String> {
            t.try_into().map_err(|e: toml::de::Error| e.message().to_string())
        }
        Ok(match name {
            "mass" => OpSpec::Mass(p(rest)?),
            "evaluate" => OpSpec::Evaluate(p(rest)?),
            "boundary" => OpSpec::Boundary(p(rest)?),
            "stokes" => OpSpec::Stokes(p(rest)?),
            "pushforward" => OpSpec::Pushforward(p(rest)?),
            "project" => OpSpec::Project(p(rest)?),
            "classify" => OpSpec::Classify(p(rest)?),
            "positivity" => OpSpec::Positivity(p(rest)?),
            "wirtinger" => OpSpec::Wirtinger(p(rest)?),
            "maximally_complex" => OpSpec::MaximallyComplex(p(rest)?),
            "slice" => OpSpec::Slice(p(rest)?),
            "sheet_counts" => OpSpec::SheetCounts(p(rest)?),
            "slice_integral" => OpSpec::SliceIntegral(p(rest)?),
            "king_reconstruct" => OpSpec::KingReconstruct(p(rest)?),
            "validate_cycle" => OpSpec::ValidateCycle(p(rest)?),
            "solve_boundary" => OpSpec::SolveBoundary(p(rest)?),
            other => {
                let known: Vec<&str> = OPS.iter().map(|e| e.0).collect();
                return Err(format!("unknown op `{other}` (known: {})", known.join(", ")));
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpEntry {
    pub spec: OpSpec,
    pub expect: Expectation,
    /// `line:column` of the op table in the scenario text.
    pub at: String,
}

/// A parsed and validated scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub ambient: usize,
    pub seed: Option<u64>,
    pub quadrature_order: usize,
    /// Effective tolerances, defaults filled in.
    pub tolerances: BTreeMap<String, f64>,
    pub currents: BTreeMap<String, CurrentSource>,
    pub ops: Vec<OpEntry>,
    /// Directory that relative `file` paths resolve against.
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn tol(&self, key: &str) -> f64 {
        self.tolerances[key]
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    name: String,
    ambient: usize,
    seed: Option<u64>,
    #[serde(default = "default_order")]
    quadrature_order: usize,
    #[serde(default)]
    tolerances: BTreeMap<String, Spanned<f64>>,
    #[serde(default)]
    currents: BTreeMap<String, Spanned<CurrentSource>>,
    #[serde(default)]
    ops: Vec<Spanned<toml::Table>>,
}

/// 1-based `line:column` of a byte offset.
pub fn line_col(text: &str, offset: usize) -> String {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    format!("{line}:{col}")
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    parse_scenario_in(text, Path::new("."))
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    parse_scenario_in(&text, dir).map_err(|e| e.context(path.display()))
}

pub fn parse_scenario_in(text: &str, base_dir: &Path) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        let at = e.span().map(|s| line_col(text, s.start)).unwrap_or_else(|| "?".into());
        CliError::Scenario(format!("{at}: {}", e.message()))
    })?;
    let err = |span: std::ops::Range<usize>, msg: String| {
        CliError::Scenario(format!("{}: {msg}", line_col(text, span.start)))
    };

    if raw.ambient == 0 {
        return Err(CliError::Scenario("ambient must be at least 1".into()));
    }
    if raw.quadrature_order == 0 {
        return Err(CliError::Scenario("quadrature_order must be positive".into()));
    }

    let mut tolerances: BTreeMap<String, f64> =
        DEFAULT_TOLERANCES.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in &raw.tolerances {
        if !tolerances.contains_key(k) {
            let known: Vec<&str> = DEFAULT_TOLERANCES.iter().map(|e| e.0).collect();
            return Err(err(
                v.span(),
                format!("unknown tolerance `{k}` (known: {})", known.join(", ")),
            ));
        }
        let x = *v.get_ref();
        if !(x > 0.0 && x.is_finite()) {
            return Err(err(v.span(), format!("tolerance `{k}` must be positive, got {x}")));
        }
        tolerances.insert(k.clone(), x);
    }

    let mut currents = BTreeMap::new();
    for (k, v) in raw.currents {
        let span = v.span();
        let src = v.into_inner();
        let given = [
            src.file.is_some(),
            src.fixture.is_some(),
            src.over_circle.is_some(),
            src.over_disk.is_some(),
        ]
        .iter()
        .filter(|b| **b)
        .count();
        if given != 1 {
            return Err(err(
                span,
                format!("current `{k}` needs exactly one of file, fixture, over_circle, over_disk"),
            ));
        }
        if let Some(f) = &src.fixture {
            if !FIXTURE_NAMES.contains(&f.as_str()) {
                return Err(err(
                    span,
                    format!("current `{k}`: unknown fixture `{f}` (known: {})", FIXTURE_NAMES.join(", ")),
                ));
            }
        }
        if matches!(src.radius, Some(r) if !(r > 0.0)) {
            return Err(err(span, format!("current `{k}`: radius must be positive")));
        }
        currents.insert(k, src);
    }

    let mut names: BTreeSet<String> = currents.keys().cloned().collect();
    let mut ops = Vec::with_capacity(raw.ops.len());
    for (i, entry) in raw.ops.into_iter().enumerate() {
        let span = entry.span();
        let mut table = entry.into_inner();
        let name = match table.remove("op") {
            Some(toml::Value::String(s)) => s,
            _ => return Err(err(span, format!("ops[{i}] needs a string `op`"))),
        };
        let expect = match table.remove("expect") {
            None => Expectation::Pass,
            Some(toml::Value::String(s)) if s == "pass" => Expectation::Pass,
            Some(toml::Value::String(s)) if s == "fail" => Expectation::Fail,
            Some(v) => {
                return Err(err(span, format!("ops[{i}] ({name}): expect must be \"pass\" or \"fail\", got {v}")))
            }
        };
        let spec = OpSpec::parse(&name, table).map_err(|m| err(span.clone(), format!("ops[{i}] ({name}): {m}")))?;
        if !names.contains(spec.input()) {
            return Err(err(
                span,
                format!("ops[{i}] ({name}): current `{}` is not defined", spec.input()),
            ));
        }
        if spec.randomized() && raw.seed.is_none() {
            return Err(err(
                span,
                format!("ops[{i}] ({name}) draws random probes; the scenario needs a `seed`"),
            ));
        }
        validate_op(&spec).map_err(|m| err(span.clone(), format!("ops[{i}] ({name}): {m}")))?;
        if let Some(out) = spec.output() {
            names.insert(out.to_string());
        }
        ops.push(OpEntry {
            spec,
            expect,
            at: line_col(text, span.start),
        });
    }

    Ok(Scenario {
        name: raw.name,
        ambient: raw.ambient,
        seed: raw.seed,
        quadrature_order: raw.quadrature_order,
        tolerances,
        currents,
        ops,
        base_dir: base_dir.to_path_buf(),
    })
}

fn validate_op(spec: &OpSpec) -> std::result::Result<(), String> {
    let one_based = |ix: &[usize]| {
        if ix.is_empty() || ix.contains(&0) {
            Err("indices are 1-based and must be non-empty".to_string())
        } else {
            Ok(())
        }
    };
    match spec {
        OpSpec::Project(o) => one_based(&o.indices),
        OpSpec::Slice(o) => {
            one_based(&o.indices)?;
            if o.point.len() != o.indices.len() {
                return Err("point needs one [re, im] pair per index".into());
            }
            Ok(())
        }
        OpSpec::SheetCounts(o) => {
            one_based(&o.indices)?;
            if o.from.len() != o.indices.len() || o.to.len() != o.indices.len() {
                return Err("from and to need one [re, im] pair per index".into());
            }
            if o.points < 2 {
                return Err("a path needs at least 2 points".into());
            }
            Ok(())
        }
        OpSpec::SliceIntegral(o) => {
            one_based(&o.indices)?;
            if !(o.radius > 0.0) {
                return Err("radius must be positive".into());
            }
            Ok(())
        }
        OpSpec::Mass(o) if o.orders.contains(&0) => Err("quadrature orders must be positive".into()),
        _ => Ok(()),
    }
}
