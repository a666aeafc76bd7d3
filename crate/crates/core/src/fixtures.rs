//! Parametrized test currents with known geometry.

use std::f64::consts::PI;

use crate::current::{Cell, ExpressionMap, RectifiableCurrent};
use crate::error::{CurrentError, Result};
use crate::expr::Expr;
use crate::field::C64;
use crate::hilbert::TailCertificate;

/// `exp(2 pi i t)`.
pub fn circle_point(t: &Expr) -> Expr {
    (Expr::c(C64::new(0.0, 2.0 * PI)) * t).exp()
}

/// `center + radius * r * exp(2 pi i t)` for parameters `r`, `t` in `[0,1]`.
pub fn polar(r: &Expr, t: &Expr, radius: f64, center: C64) -> Expr {
    Expr::c(center) + Expr::real(radius) * r * circle_point(t)
}

fn current(n: usize, k: usize, cells: Vec<Cell>) -> Result<RectifiableCurrent> {
    RectifiableCurrent::from_cells(n, k, cells)
}

/// Substitutes `z1 -> base` in every coordinate expression.
fn over(coords: &[Expr], base: &Expr) -> Vec<Expr> {
    coords
        .iter()
        .map(|e| e.compose(std::slice::from_ref(base)))
        .collect()
}

/// Unit disk in `C`.
pub fn disk() -> Result<RectifiableCurrent> {
    disk_in(1, 1.0, C64::new(0.0, 0.0), 1)
}

/// Disk of given radius and center in the first coordinate of `C^n`.
pub fn disk_in(
    n: usize,
    radius: f64,
    center: C64,
    multiplicity: i64,
) -> Result<RectifiableCurrent> {
    let mut coords = vec![Expr::z(0)];
    coords.extend((1..n).map(|_| Expr::zero()));
    graph_over_disk(&coords, radius, center, multiplicity)
}

/// Image of the disk `|z1 - center| <= radius` under `z1 -> coords(z1)`.
pub fn graph_over_disk(
    coords: &[Expr],
    radius: f64,
    center: C64,
    multiplicity: i64,
) -> Result<RectifiableCurrent> {
    let base = polar(&Expr::var(0), &Expr::var(1), radius, center);
    let cell = Cell::from_exprs(2, over(coords, &base), multiplicity)?;
    current(coords.len(), 2, vec![cell])
}

/// Image of the circle `|z1 - center| = radius` (counterclockwise).
pub fn curve_over_circle(
    coords: &[Expr],
    radius: f64,
    center: C64,
    multiplicity: i64,
) -> Result<RectifiableCurrent> {
    let base = Expr::c(center) + Expr::real(radius) * circle_point(&Expr::var(0));
    let cell = Cell::from_exprs(1, over(coords, &base), multiplicity)?;
    current(coords.len(), 1, vec![cell])
}

pub fn unit_circle() -> Result<RectifiableCurrent> {
    curve_over_circle(&[Expr::z(0)], 1.0, C64::new(0.0, 0.0), 1)
}

/// Graph of `w = z^2` over the unit disk in `C^2`.
pub fn parabola_graph() -> Result<RectifiableCurrent> {
    let z = Expr::z(0);
    graph_over_disk(&[z.clone(), z.powi(2)], 1.0, C64::new(0.0, 0.0), 1)
}

/// The branch pair `w^2 = z` over `a <= |w| <= b`, coordinates `(z, w)`.
pub fn two_branch(a: f64, b: f64) -> Result<RectifiableCurrent> {
    let rho = Expr::real(a) + Expr::real(b - a) * Expr::var(0);
    let w = rho * circle_point(&Expr::var(1));
    let cell = Cell::from_exprs(2, vec![w.powi(2), w], 1)?;
    current(2, 2, vec![cell])
}

/// Half of the branch pair: the sheet `w = sqrt(z)` with `arg w` in
/// `[0, pi)`, which has a boundary along the positive real axis.
pub fn half_branch(a: f64, b: f64) -> Result<RectifiableCurrent> {
    let rho = Expr::real(a) + Expr::real(b - a) * Expr::var(0);
    let w = rho * (Expr::c(C64::new(0.0, PI)) * Expr::var(1)).exp();
    let cell = Cell::from_exprs(2, vec![w.powi(2), w], 1)?;
    current(2, 2, vec![cell])
}

/// The plane piece `w = 0` over the `z`-annulus `a <= |z| <= b`.
pub fn plane_piece(a: f64, b: f64, multiplicity: i64) -> Result<RectifiableCurrent> {
    let rho = Expr::real(a) + Expr::real(b - a) * Expr::var(0);
    let z = rho * circle_point(&Expr::var(1));
    let cell = Cell::from_exprs(2, vec![z, Expr::zero()], multiplicity)?;
    current(2, 2, vec![cell])
}

/// Totally real disk `(x, y) -> (x, y)` in `C^2`.
pub fn real_disk() -> Result<RectifiableCurrent> {
    let (r, t) = (Expr::var(0), Expr::var(1));
    let ang = Expr::real(2.0 * PI) * &t;
    let x = &r * ang.cos();
    let y = &r * ang.sin();
    let cell = Cell::from_exprs(2, vec![x, y], 1)?;
    current(2, 2, vec![cell])
}

/// Boundary 3-sphere of the graph of `f(z, w)` over the unit ball in `C^3`:
/// `z = cos(pi a/2) e^{2 pi i b}`, `w = sin(pi a/2) e^{2 pi i c}`.
pub fn sphere_graph(f: &Expr) -> Result<RectifiableCurrent> {
    let a = Expr::real(PI / 2.0) * Expr::var(0);
    let z = a.cos() * circle_point(&Expr::var(1));
    let w = a.sin() * circle_point(&Expr::var(2));
    let third = f.compose(&[z.clone(), w.clone()]);
    let cell = Cell::from_exprs(3, vec![z, w, third], 1)?;
    current(3, 3, vec![cell])
}

/// Default function for [`sphere_graph`].
pub fn sphere_graph_default() -> Result<RectifiableCurrent> {
    let (z, w) = (Expr::z(0), Expr::z(1));
    sphere_graph(&(&z * &w + z.powi(2)))
}

/// Totally real torus `(e^{2 pi i a}, e^{2 pi i b}, e^{2 pi i c})`.
pub fn real_torus3() -> Result<RectifiableCurrent> {
    let cell = Cell::from_exprs(3, (0..3).map(|i| circle_point(&Expr::var(i))).collect(), 1)?;
    current(3, 3, vec![cell])
}

/// Graph of holomorphic `extra(z1, z2)` over the unit bidisk, coordinates
/// `(z1, z2, extra..)`, parameters `(r1, t1, r2, t2)`.
pub fn graph_over_bidisk(extra: &[Expr]) -> Result<RectifiableCurrent> {
    let z1 = polar(&Expr::var(0), &Expr::var(1), 1.0, C64::new(0.0, 0.0));
    let z2 = polar(&Expr::var(2), &Expr::var(3), 1.0, C64::new(0.0, 0.0));
    let mut coords = vec![z1.clone(), z2.clone()];
    coords.extend(extra.iter().map(|e| e.compose(&[z1.clone(), z2.clone()])));
    let n = coords.len();
    let cell = Cell::from_exprs(4, coords, 1)?;
    current(n, 4, vec![cell])
}

/// Graph of `(w1, w2) = (z1^2, z1 z2)` over the unit bidisk in `C^4`.
pub fn bidisk_graph() -> Result<RectifiableCurrent> {
    let (z1, z2) = (Expr::z(0), Expr::z(1));
    graph_over_bidisk(&[z1.powi(2), &z1 * &z2])
}

/// Graph of `w = z1^2 + z1 z2` over the unit bidisk in `C^3`.
pub fn bidisk_graph_c3() -> Result<RectifiableCurrent> {
    let (z1, z2) = (Expr::z(0), Expr::z(1));
    graph_over_bidisk(&[z1.powi(2) + &z1 * &z2])
}

/// Solid cylinder `{(z, 2s - 1 + z^2/4)}` over the unit disk in `C^2`,
/// parameters `(r, t, s)`; a 3-current with boundary.
pub fn disk_cylinder() -> Result<RectifiableCurrent> {
    let z = polar(&Expr::var(0), &Expr::var(1), 1.0, C64::new(0.0, 0.0));
    let w = Expr::real(2.0) * Expr::var(2) - Expr::one() + Expr::real(0.25) * z.powi(2);
    let cell = Cell::from_exprs(3, vec![z, w], 1)?;
    current(2, 3, vec![cell])
}

/// Factorial-decay coordinates `(z, z^2/2!, ..., z^m/m!)` as expressions in `z1`.
pub fn factorial_coords(m: usize) -> Vec<Expr> {
    let z = Expr::z(0);
    let mut fact = 1.0;
    (1..=m)
        .map(|n| {
            fact *= n as f64;
            Expr::real(1.0 / fact) * z.powi(n as i32)
        })
        .collect()
}

/// `sup_{|z| <= r} ( sum_{n > m} |z^n / n!|^2 )^{1/2}`, summed directly.
pub fn factorial_tail(m: usize, r: f64) -> TailCertificate {
    let mut fact: f64 = (1..=m).map(|n| n as f64).product();
    let mut s = 0.0;
    for n in m + 1..m + 200 {
        fact *= n as f64;
        let t = r.powi(n as i32) / fact;
        s += t * t;
        if t * t < 1e-40 * s {
            break;
        }
    }
    TailCertificate {
        n_trunc: m,
        sup_l2: s.sqrt(),
        note: format!("sum over n > {m} of (r^n/n!)^2 at r = {r}, summed directly"),
    }
}

/// Closed curve `t -> (gamma(t), w(gamma(t)))` for a shadow `gamma` given
/// as an expression in `u1` and coordinates in `z1`.
pub fn curve_from_shadow(
    shadow: &Expr,
    coords: &[Expr],
    multiplicity: i64,
) -> Result<RectifiableCurrent> {
    let cell = Cell::from_exprs(1, over(coords, shadow), multiplicity)?;
    current(coords.len(), 1, vec![cell])
}

/// Lemniscate of Gerono, `sin(2 pi t) + i sin(2 pi t) cos(2 pi t)`.
pub fn gerono_shadow() -> Expr {
    let s = (Expr::real(2.0 * PI) * Expr::var(0)).sin();
    let c = (Expr::real(2.0 * PI) * Expr::var(0)).cos();
    &s + Expr::i() * (&s * c)
}

/// Figure-eight cycle `(g, g^2)` over the Gerono shadow.
pub fn figure_eight() -> Result<RectifiableCurrent> {
    let z = Expr::z(0);
    curve_from_shadow(&gerono_shadow(), &[z.clone(), z.powi(2)], 1)
}

/// Two nested circles: `(z, 0.5 z + 3)` on `|z| = 2` and `(z, z^2)` on `|z| = 1`.
pub fn nested_circles() -> Result<RectifiableCurrent> {
    let z = Expr::z(0);
    let outer = curve_over_circle(
        &[z.clone(), Expr::real(0.5) * &z + Expr::real(3.0)],
        2.0,
        C64::new(0.0, 0.0),
        1,
    )?;
    let inner = curve_over_circle(&[z.clone(), z.powi(2)], 1.0, C64::new(0.0, 0.0), 1)?;
    outer.plus(&inner)
}

/// Boundary of [`two_branch`]: the circles `|w| = b` and `|w| = a`
/// (reversed) of the curve `z = w^2`.
pub fn two_branch_boundary(a: f64, b: f64) -> Result<RectifiableCurrent> {
    let w = Expr::z(0);
    let coords = [w.powi(2), w];
    let outer = curve_over_circle(&coords, b, C64::new(0.0, 0.0), 1)?;
    let inner = curve_over_circle(&coords, a, C64::new(0.0, 0.0), -1)?;
    outer.plus(&inner)
}

/// Limaçon `(a + cos 2 pi t) e^{2 pi i t}` shadow; has an inner loop for `a < 1`.
pub fn limacon_shadow(a: f64) -> Expr {
    let th = Expr::real(2.0 * PI) * Expr::var(0);
    (Expr::real(a) + th.cos()) * circle_point(&Expr::var(0))
}

/// Parameters for named fixture generation.
#[derive(Clone, Debug, Default)]
pub struct FixtureParams {
    pub n: Option<usize>,
    pub radius: Option<f64>,
    pub multiplicity: Option<i64>,
}

pub const FIXTURE_NAMES: &[&str] = &[
    "disk",
    "circle",
    "parabola-graph",
    "two-branch",
    "half-branch",
    "real-disk",
    "sphere-graph",
    "real-torus3",
    "bidisk-graph",
    "bidisk-graph-c3",
    "disk-cylinder",
    "z-powers-graph",
    "zw-graph",
    "factorial-curve",
    "circle-graph",
    "figure-eight",
    "nested-circles",
    "two-branch-boundary",
    "diagonal",
];

/// Builds a fixture by name, with an optional declared tail.
pub fn by_name(
    name: &str,
    p: &FixtureParams,
) -> Result<(RectifiableCurrent, Option<TailCertificate>)> {
    let z = Expr::z(0);
    let origin = C64::new(0.0, 0.0);
    let radius = p.radius.unwrap_or(1.0);
    let mult = p.multiplicity.unwrap_or(1);
    let cur = match name {
        "disk" => disk_in(p.n.unwrap_or(1), radius, origin, mult)?,
        "circle" => curve_over_circle(&[z.clone()], radius, origin, mult)?,
        "parabola-graph" => graph_over_disk(&[z.clone(), z.powi(2)], radius, origin, mult)?,
        "two-branch" => two_branch(0.3, 1.0)?,
        "half-branch" => half_branch(0.3, 1.0)?,
        "real-disk" => real_disk()?,
        "sphere-graph" => sphere_graph_default()?,
        "real-torus3" => real_torus3()?,
        "bidisk-graph" => bidisk_graph()?,
        "bidisk-graph-c3" => bidisk_graph_c3()?,
        "disk-cylinder" => disk_cylinder()?,
        "z-powers-graph" => {
            let n = p.n.unwrap_or(3);
            let coords: Vec<Expr> = (1..=n).map(|k| z.powi(k as i32)).collect();
            graph_over_disk(&coords, radius, origin, mult)?
        }
        "zw-graph" => {
            let n = p.n.unwrap_or(4);
            let zw = crate::hilbert::fixture_zw_n(n)?;
            let base = ExpressionMap::new(
                4,
                vec![
                    polar(&Expr::var(0), &Expr::var(1), radius, origin),
                    polar(&Expr::var(2), &Expr::var(3), radius, origin),
                ],
            )?;
            let inner = zw.compose(&base)?;
            let mut outs = base.outputs().to_vec();
            outs.extend(inner.outputs().iter().cloned());
            current(outs.len(), 4, vec![Cell::from_exprs(4, outs, mult)?])?
        }
        "factorial-curve" => {
            let n = p.n.unwrap_or(12);
            let c = curve_over_circle(&factorial_coords(n), radius, origin, mult)?;
            return Ok((c, Some(factorial_tail(n, radius))));
        }
        "circle-graph" => curve_over_circle(&[z.clone(), z.powi(2)], radius, origin, mult)?,
        "figure-eight" => figure_eight()?,
        "nested-circles" => nested_circles()?,
        "two-branch-boundary" => two_branch_boundary(0.3, 1.0)?,
        "diagonal" => graph_over_disk(&[z.clone(), z.clone()], radius, origin, mult)?,
        other => {
            return Err(CurrentError::Invalid(format!(
                "unknown fixture `{other}` (known: {})",
                FIXTURE_NAMES.join(", ")
            )))
        }
    };
    Ok((cur, None))
}
