//! Scenario execution and the report bundle.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use metric_currents::boundary_solver::{
    assemble, validate_cycle, verify_boundary, BoundaryOptions, PlanarArrangement,
};
use metric_currents::complex_ops::{
    classify_bidimension, is_maximally_complex, is_positive, real_probe_forms, wirtinger_mass,
    ClassificationReport, ProbeOptions,
};
use metric_currents::fixtures::{by_name, curve_over_circle, graph_over_disk, FixtureParams};
use metric_currents::hilbert::{project_current, TailCertificate};
use metric_currents::king::{assemble_variety, KingOptions};
use metric_currents::slicing::{
    sheet_counts, slice_integral_check, slice_points_regular, BaseGrid, SliceOptions,
};
use metric_currents::{
    Cell, CoordinateProjection, Current, CurrentError, Expr, ExpressionMap, MetricForm,
    QuadOptions, RectifiableCurrent, C64,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, Result};
use crate::format::read_current;
use crate::scenario::*;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value <= tolerance`.
    pub fn below(name: &str, value: f64, tolerance: f64) -> Check {
        Check {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }

    /// A yes/no check, recorded as 1 (holds) or 0.
    pub fn holds(name: &str, ok: bool) -> Check {
        Check {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            tolerance: 1.0,
            passed: ok,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Passed,
    Failed,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpRecord {
    pub index: usize,
    pub op: String,
    /// Module and operation that produced the record.
    pub provenance: String,
    pub at: String,
    pub status: Status,
    pub expect: Expectation,
    /// Whether `status` meets `expect`.
    pub ok: bool,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub result: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub scenario: String,
    pub seed: Option<u64>,
    pub quadrature_order: usize,
    pub tolerances: BTreeMap<String, f64>,
    pub versions: BTreeMap<String, String>,
    pub ops: Vec<OpRecord>,
    pub passed: bool,
    /// Excluded from the serialized bytes so reruns compare equal.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl ReportBundle {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundles always serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<ReportBundle> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            2
        }
    }
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("metric-currents".to_string(), metric_currents::VERSION.to_string()),
        ("metric-currents-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
    ])
}

struct Outcome {
    checks: Vec<Check>,
    result: Value,
    bind: Option<(String, RectifiableCurrent)>,
}

impl Outcome {
    fn new(checks: Vec<Check>, result: Value) -> Self {
        Outcome {
            checks,
            result,
            bind: None,
        }
    }
}

type Loaded = (RectifiableCurrent, Option<TailCertificate>);

/// Runs every op in order. Op failures are recorded; an op whose input
/// could not be produced is recorded as an error and the rest still run.
pub fn run_scenario(s: &Scenario) -> ReportBundle {
    let start = Instant::now();
    let mut env: BTreeMap<String, std::result::Result<Loaded, String>> = s
        .currents
        .iter()
        .map(|(k, src)| (k.clone(), load_source(s, src).map_err(|e| format!("loading `{k}`: {e}"))))
        .collect();
    let mut ops = Vec::with_capacity(s.ops.len());
    for (index, entry) in s.ops.iter().enumerate() {
        let spec = &entry.spec;
        let out = match env.get(spec.input()) {
            Some(Ok(input)) => run_op(s, spec, input),
            Some(Err(msg)) => Err(CliError::Usage(msg.clone())),
            None => Err(CliError::Usage(format!("current `{}` is unavailable", spec.input()))),
        };
        let mut rec = OpRecord {
            index,
            op: spec.name().to_string(),
            provenance: spec.provenance().to_string(),
            at: entry.at.clone(),
            status: Status::Passed,
            expect: entry.expect.clone(),
            ok: true,
            checks: Vec::new(),
            stage: None,
            error: None,
            result: Value::Null,
        };
        match out {
            Ok(o) => {
                rec.status = if o.checks.iter().all(|c| c.passed) {
                    Status::Passed
                } else {
                    Status::Failed
                };
                rec.checks = o.checks;
                rec.result = o.result;
                if let Some((name, cur)) = o.bind {
                    env.insert(name, Ok((cur, None)));
                }
            }
            Err(e) => {
                rec.status = Status::Error;
                if let CliError::Core(CurrentError::Stage { stage, .. }) = &e {
                    rec.stage = Some(stage.clone());
                }
                rec.error = Some(e.to_string());
                if let Some(name) = spec.output() {
                    env.insert(name.to_string(), Err(format!("ops[{index}] failed: {e}")));
                }
            }
        }
        rec.ok = match rec.expect {
            Expectation::Pass => rec.status == Status::Passed,
            Expectation::Fail => rec.status != Status::Passed,
        };
        ops.push(rec);
    }
    ReportBundle {
        scenario: s.name.clone(),
        seed: s.seed,
        quadrature_order: s.quadrature_order,
        tolerances: s.tolerances.clone(),
        versions: versions(),
        passed: ops.iter().all(|r| r.ok),
        ops,
        wall_time: start.elapsed(),
    }
}

fn parse_exprs(xs: &[String]) -> Result<Vec<Expr>> {
    xs.iter()
        .map(|s| Expr::parse(s).map_err(|e| CliError::Usage(format!("`{s}`: {e}"))))
        .collect()
}

fn c64(p: &[f64; 2]) -> C64 {
    C64::new(p[0], p[1])
}

/// Appends zero coordinates up to the scenario's ambient dimension.
fn embed(t: RectifiableCurrent, n: usize) -> Result<RectifiableCurrent> {
    let m = t.ambient.n;
    if m > n {
        return Err(CliError::Usage(format!(
            "current lives in C^{m}, beyond the scenario ambient C^{n}"
        )));
    }
    if m == n {
        return Ok(t);
    }
    let cells = t
        .cells
        .iter()
        .map(|c| {
            let mut outs = c.param.outputs().to_vec();
            outs.resize(n, Expr::zero());
            Cell::new(ExpressionMap::new(c.k, outs)?, c.multiplicity, 1)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(RectifiableCurrent::from_cells(n, t.dim, cells)?)
}

fn load_source(s: &Scenario, src: &CurrentSource) -> Result<Loaded> {
    let radius = src.radius.unwrap_or(1.0);
    let center = src.center.as_ref().map_or(C64::new(0.0, 0.0), c64);
    let mult = src.multiplicity.unwrap_or(1);
    let (t, tail) = if let Some(f) = &src.file {
        let cf = read_current(&s.base_dir.join(f))?;
        (cf.current, cf.tail)
    } else if let Some(name) = &src.fixture {
        let p = FixtureParams {
            n: src.n,
            radius: src.radius,
            multiplicity: src.multiplicity,
        };
        by_name(name, &p)?
    } else if let Some(xs) = &src.over_circle {
        (curve_over_circle(&parse_exprs(xs)?, radius, center, mult)?, None)
    } else if let Some(xs) = &src.over_disk {
        (graph_over_disk(&parse_exprs(xs)?, radius, center, mult)?, None)
    } else {
        unreachable!("validated: one source per current")
    };
    Ok((embed(t, s.ambient)?, tail))
}

fn quad(s: &Scenario) -> QuadOptions {
    QuadOptions::order(s.quadrature_order)
}

fn seed(s: &Scenario) -> u64 {
    s.seed.unwrap_or(0)
}

fn probe_opts(s: &Scenario, count: usize) -> ProbeOptions {
    ProbeOptions {
        count,
        seed: seed(s),
        tol: Some(s.tol("probe")),
        quad: quad(s),
    }
}

fn classification(rep: &ClassificationReport) -> Outcome {
    let checks = rep
        .verdict
        .iter()
        .map(|(k, v)| Check::holds(k, *v))
        .collect();
    Outcome::new(checks, json!(rep))
}

fn indices0(ix: &[usize]) -> Vec<usize> {
    ix.iter().map(|i| i - 1).collect()
}

fn complex_json(z: C64) -> Value {
    json!([z.re, z.im])
}

fn shadow_json(arr: &PlanarArrangement) -> Value {
    Value::Array(
        arr.curves
            .iter()
            .map(|c| {
                json!({
                    "cell": c.cell,
                    "points": c.z.iter().map(|z| complex_json(*z)).collect::<Vec<_>>(),
                })
            })
            .collect(),
    )
}

fn run_op(s: &Scenario, spec: &OpSpec, input: &Loaded) -> Result<Outcome> {
    let (t, tail) = input;
    let q = quad(s);
    Ok(match spec {
        OpSpec::Mass(o) => {
            let rep = t.mass(&q);
            let mut checks = Vec::new();
            if let Some(v) = o.expect_value {
                checks.push(Check::below("abs_error", (rep.total - v).abs(), s.tol("mass")));
            }
            let mut result = json!(rep);
            if !o.orders.is_empty() {
                let mut rows = Vec::new();
                let mut prev: Option<f64> = None;
                for &n in &o.orders {
                    let m = t.mass(&QuadOptions::order(n)).total;
                    let change = prev.map_or(f64::NAN, |p| (m - p).abs());
                    rows.push(vec![n as f64, m, change]);
                    prev = Some(m);
                }
                result["convergence"] = json!({"columns": ["order", "mass", "change"], "rows": rows});
            }
            Outcome::new(checks, result)
        }
        OpSpec::Evaluate(o) => {
            let f = Expr::parse(&o.f)?;
            let form = MetricForm::new(f, parse_exprs(&o.pi)?);
            let v = t.evaluate(&form, &q)?;
            let mut checks = Vec::new();
            if let Some(e) = &o.expect_value {
                checks.push(Check::below("abs_error", (v - c64(e)).norm(), s.tol("evaluate")));
            }
            Outcome::new(checks, json!({"value": complex_json(v)}))
        }
        OpSpec::Boundary(o) => {
            let b = t.boundary()?;
            let result = json!({"dim": b.dim, "cells": b.cells.len(), "mass": b.mass(&q).total});
            let mut out = Outcome::new(Vec::new(), result);
            out.bind = o.name.clone().map(|n| (n, b));
            out
        }
        OpSpec::Stokes(o) => {
            if t.dim == 0 {
                return Err(CliError::Usage("stokes needs a current of dimension >= 1".into()));
            }
            let b = t.boundary()?;
            let forms = real_probe_forms(t.dim - 1, o.probes, &t.support_bbox(), seed(s));
            let mut worst: f64 = 0.0;
            let mut rows = Vec::new();
            for w in &forms {
                let lhs = b.evaluate(w, &q)?;
                let mut pis = vec![w.f.clone()];
                pis.extend(w.pis.iter().cloned());
                let rhs = t.evaluate(&MetricForm::new(Expr::one(), pis), &q)?;
                let r = (lhs - rhs).norm() / (1.0 + rhs.norm());
                worst = worst.max(r);
                rows.push(json!({"boundary_side": complex_json(lhs), "current_side": complex_json(rhs), "residual": r}));
            }
            Outcome::new(
                vec![Check::below("relative_residual", worst, s.tol("stokes"))],
                json!({"probes": rows, "max_residual": worst}),
            )
        }
        OpSpec::Pushforward(o) => {
            let outs = parse_exprs(&o.map)?;
            let map = ExpressionMap::new(2 * t.ambient.n, outs)?;
            let p = t.pushforward(&map)?;
            let result = json!({
                "ambient_dim": p.ambient.n,
                "mass_before": t.mass(&q).total,
                "mass_after": p.mass(&q).total,
            });
            let mut out = Outcome::new(Vec::new(), result);
            out.bind = Some((o.name.clone(), p));
            out
        }
        OpSpec::Project(o) => {
            let proj = CoordinateProjection::new(indices0(&o.indices));
            let p = project_current(&proj, t)?;
            let (before, after) = (t.mass(&q).total, p.mass(&q).total);
            let checks = vec![Check::holds("mass_does_not_increase", after <= before * (1.0 + 1e-12) + 1e-14)];
            let mut out = Outcome::new(checks, json!({"mass_before": before, "mass_after": after}));
            out.bind = Some((o.name.clone(), p));
            out
        }
        OpSpec::Classify(o) => classification(&classify_bidimension(t, o.p, o.q, &probe_opts(s, o.probes))?),
        OpSpec::Positivity(o) => {
            classification(&is_positive(t, o.k, o.projections, &probe_opts(s, o.probes))?)
        }
        OpSpec::MaximallyComplex(o) => classification(&is_maximally_complex(t, &probe_opts(s, o.probes))?),
        OpSpec::Wirtinger(o) => {
            let budget = tail.as_ref().map_or(0.0, |c| c.sup_l2);
            let rep = wirtinger_mass(t, o.k, budget, &q)?;
            let rel = (rep.coordinate_sum - rep.mass_total).abs() / rep.mass_total.max(f64::MIN_POSITIVE);
            Outcome::new(vec![Check::below("relative_gap", rel, s.tol("wirtinger"))], json!(rep))
        }
        OpSpec::Slice(o) => {
            let proj = CoordinateProjection::new(indices0(&o.indices));
            let x: Vec<C64> = o.point.iter().map(c64).collect();
            let so = SliceOptions {
                seed: seed(s),
                ..Default::default()
            };
            let sl = slice_points_regular(t, &proj, &x, &so)?;
            let result = json!({"total": sl.total(), "regular": sl.regular, "ambient_dim": t.ambient.n, "slice": sl});
            Outcome::new(Vec::new(), result)
        }
        OpSpec::SheetCounts(o) => {
            let proj = CoordinateProjection::new(indices0(&o.indices));
            let path: Vec<Vec<C64>> = (0..o.points)
                .map(|i| {
                    let a = i as f64 / (o.points - 1) as f64;
                    o.from.iter().zip(&o.to).map(|(p, r)| c64(p) * (1.0 - a) + c64(r) * a).collect()
                })
                .collect();
            let so = SliceOptions {
                seed: seed(s),
                ..Default::default()
            };
            let counts = sheet_counts(t, &proj, &path, &so)?;
            let constant = counts.windows(2).all(|w| w[0] == w[1]);
            Outcome::new(vec![Check::holds("constant", constant)], json!({"counts": counts}))
        }
        OpSpec::SliceIntegral(o) => {
            let proj = CoordinateProjection::new(indices0(&o.indices));
            if o.indices.len() != 1 {
                return Err(CliError::Usage("slice_integral uses a polar base grid in C; give one index".into()));
            }
            let f = Expr::parse(&o.f)?;
            let so = SliceOptions {
                seed: seed(s),
                ..Default::default()
            };
            let run = |per_axis| {
                let g = BaseGrid::polar(C64::new(0.0, 0.0), 0.0, o.radius, per_axis);
                slice_integral_check(t, &proj, &f, &g, &so, &q)
            };
            let coarse = run(o.per_axis)?;
            let mut checks = vec![Check::below("residual", coarse.residual, s.tol("slice_integral"))];
            let mut result = json!({"report": coarse});
            if o.refine {
                let fine = run(2 * o.per_axis)?;
                checks.push(Check::holds(
                    "halves",
                    metric_currents::slicing::halves(coarse.residual, fine.residual, 1e-11),
                ));
                result["convergence"] = json!({
                    "columns": ["grid_points", "residual"],
                    "rows": [[coarse.grid_points as f64, coarse.residual], [fine.grid_points as f64, fine.residual]],
                });
                result["refined"] = json!(fine);
            }
            Outcome::new(checks, result)
        }
        OpSpec::KingReconstruct(o) => {
            if o.nodes.is_some_and(|n| n < 2) {
                return Err(CliError::Scenario("king_reconstruct: nodes must be at least 2".into()));
            }
            let ko = KingOptions {
                check_preconditions: o.check_preconditions,
                tiles_per_axis: o.tiles,
                nodes_per_axis: o.nodes,
                seed: seed(s),
                slice: SliceOptions {
                    seed: seed(s),
                    ..Default::default()
                },
                ..Default::default()
            };
            let v = assemble_variety(t, &ko)?;
            Outcome::new(
                vec![Check::below("support_residual", v.support_residual, s.tol("support"))],
                json!(v),
            )
        }
        OpSpec::ValidateCycle(_) => {
            let bo = BoundaryOptions {
                seed: seed(s),
                ..Default::default()
            };
            let rep = validate_cycle(t, &bo)?;
            let mut result = json!(rep);
            if let Ok(arr) = metric_currents::boundary_solver::build_arrangement(t, &bo) {
                result["shadow"] = shadow_json(&arr);
            }
            Outcome::new(vec![Check::holds("valid", rep.passed)], result)
        }
        OpSpec::SolveBoundary(o) => solve_boundary_op(s, o, t, tail.as_ref())?,
    })
}

/// Boundary options for a solve op, scenario seed applied.
pub fn boundary_options(o: &SolveBoundaryOp, seed: u64) -> BoundaryOptions {
    let d = BoundaryOptions::default();
    BoundaryOptions {
        grid: o.grid.unwrap_or(d.grid),
        smax: o.smax.unwrap_or(d.smax),
        raster: o.raster.unwrap_or(d.raster),
        quad_order: o.quadrature.unwrap_or(d.quad_order),
        seed,
        ..d
    }
}

fn solve_boundary_op(
    s: &Scenario,
    o: &SolveBoundaryOp,
    m: &RectifiableCurrent,
    tail: Option<&TailCertificate>,
) -> Result<Outcome> {
    let bo = boundary_options(o, seed(s));
    let n_trunc = o.trunc.unwrap_or(m.ambient.n);
    let sol = assemble(m, n_trunc, tail, &bo)?;
    let mut checks = vec![
        Check::holds("valid_cycle", sol.validation.passed),
        Check::below("tail_bound_sq", sol.tail_bound_sq, s.tol("tail")),
    ];
    let mut result = json!({
        "n_trunc": sol.n_trunc,
        "validation": sol.validation,
        "tail_bound": sol.tail_bound,
        "tail_bound_sq": sol.tail_bound_sq,
        "mass": sol.mass.total,
        "wirtinger_sum": sol.wirtinger_sum,
        "graph_sheets": sol.graph_sheets,
        "faces": sol.faces,
        "shadow": shadow_json(&sol.arrangement),
    });
    if o.verify {
        let vq = QuadOptions {
            order: o.quadrature.unwrap_or(bo.quad_order),
            panels: o.verify_panels,
        };
        let r = verify_boundary(&sol.current, m, o.probes, seed(s), &vq)?;
        checks.push(Check::below("boundary_residual", r.normalized, s.tol("boundary")));
        result["verify"] = json!(r);
    }
    let mut out = Outcome::new(checks, result);
    out.bind = o.name.clone().map(|n| (n, sol.current));
    Ok(out)
}
