//! Slices of cell currents by complex coordinate projections.
//!
//! For a `2m`-current and a projection to `C^m` the slice at a regular
//! base point is a finite sum of signed Dirac masses, found here by damped
//! Newton on every cell. Higher-dimensional slices are available through a
//! mollified evaluator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex_ops::TypedBoundary;
use crate::current::{param_jet, Cell, Current, MetricForm, QuadOptions, RectifiableCurrent, Slot};
use crate::error::{CurrentError, Result};
use crate::expr::Expr;
use crate::field::{Dual, C64};
use crate::hilbert::CoordinateProjection;
use crate::quadrature::{gauss_legendre, neumaier_c};
use crate::tape::Tape;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: Vec<C64>,
    pub multiplicity: i64,
    pub cell: usize,
    pub param: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub base: Vec<C64>,
    pub atoms: Vec<Atom>,
    pub regular: bool,
}

impl Slice {
    /// Sum of multiplicities, i.e. the slice evaluated on the constant 1.
    pub fn total(&self) -> i64 {
        self.atoms.iter().map(|a| a.multiplicity).sum()
    }

    /// `sum theta f(atom)` for a function on the ambient space.
    pub fn evaluate(&self, f: &Expr) -> Result<C64> {
        let Some(first) = self.atoms.first() else {
            return Ok(C64::new(0.0, 0.0));
        };
        let n = first.point.len();
        let tape = Tape::compile(std::slice::from_ref(f), 2 * n)?;
        let vals: Vec<C64> = self
            .atoms
            .iter()
            .map(|a| {
                let x: Vec<f64> = a.point.iter().flat_map(|z| [z.re, z.im]).collect();
                tape.eval_real(&x)[0] * a.multiplicity as f64
            })
            .collect();
        Ok(neumaier_c(&vals))
    }
}

#[derive(Clone, Debug)]
pub struct SliceOptions {
    /// Newton starts per parameter axis; `None` picks 32 for 2-cells and
    /// fewer for higher dimensions.
    pub starts_per_axis: Option<usize>,
    pub max_iter: usize,
    pub dedup_tol: f64,
    /// Hadamard ratio `|det J| / prod |col J|` below which a root is
    /// treated as critical.
    pub jacobian_tol: f64,
    pub perturbation: f64,
    pub retries: usize,
    pub seed: u64,
}

impl Default for SliceOptions {
    fn default() -> Self {
        SliceOptions {
            starts_per_axis: None,
            max_iter: 50,
            dedup_tol: 1e-8,
            jacobian_tol: 1e-8,
            perturbation: 1e-6,
            retries: 5,
            seed: 0,
        }
    }
}

fn default_starts(k: usize) -> usize {
    match k {
        0..=2 => 32,
        3 | 4 => 8,
        _ => 5,
    }
}

struct Root {
    u: Vec<f64>,
    point: Vec<C64>,
    sign: i64,
    regular: bool,
}

/// All solutions of `proj(param(u)) = x` with `u` in the unit cube.
fn cell_roots<const K: usize>(
    cell: &Cell,
    idx: &[usize],
    x: &[C64],
    o: &SliceOptions,
) -> Vec<Root> {
    let per = o
        .starts_per_axis
        .unwrap_or_else(|| default_starts(K))
        .max(1);
    let total = per.pow(K as u32);
    let n = cell.param.arity_out();
    let scale = 1.0 + x.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tol = 1e-13 * scale;

    let eval = |u: &[f64; K],
                ps: &mut Vec<Dual<C64, K>>,
                jet: &mut [Dual<C64, K>]|
     -> ([f64; K], [[f64; K]; K]) {
        param_jet::<K>(cell.param.tape(), u, ps, jet);
        let mut f = [0.0; K];
        let mut j = [[0.0; K]; K];
        for (r, &i) in idx.iter().enumerate() {
            let z = &jet[i];
            let d = z.v - x[r];
            f[2 * r] = d.re;
            f[2 * r + 1] = d.im;
            for l in 0..K {
                j[2 * r][l] = z.d[l].re;
                j[2 * r + 1][l] = z.d[l].im;
            }
        }
        (f, j)
    };
    let norm = |f: &[f64; K]| f.iter().map(|v| v * v).sum::<f64>().sqrt();

    let found: Vec<Option<Root>> = (0..total)
        .into_par_iter()
        .map(|s| {
            let mut ps = Vec::new();
            let mut jet = vec![Dual::<C64, K>::constant(C64::new(0.0, 0.0)); n];
            let mut u = [0.0; K];
            for (l, ul) in u.iter_mut().enumerate() {
                *ul = (((s / per.pow(l as u32)) % per) as f64 + 0.5) / per as f64;
            }
            let (mut f, mut j) = eval(&u, &mut ps, &mut jet);
            let mut fn0 = norm(&f);
            let mut converged = false;
            for _ in 0..o.max_iter {
                if !fn0.is_finite() {
                    return None;
                }
                if fn0 < tol {
                    converged = true;
                    break;
                }
                let step = solve::<K>(j, f)?;
                let mut lam = 1.0;
                let mut accepted = false;
                for _ in 0..30 {
                    let trial: [f64; K] =
                        std::array::from_fn(|l| (u[l] - lam * step[l]).clamp(0.0, 1.0));
                    let (ft, jt) = eval(&trial, &mut ps, &mut jet);
                    let nt = norm(&ft);
                    if nt < fn0 {
                        u = trial;
                        f = ft;
                        j = jt;
                        fn0 = nt;
                        accepted = true;
                        break;
                    }
                    lam *= 0.5;
                }
                if !accepted {
                    break;
                }
            }
            if !converged && fn0 >= tol * 1e3 {
                return None;
            }
            let det = crate::current::det_r(j.iter().map(|r| r.to_vec()).collect());
            let hadamard: f64 = (0..K)
                .map(|c| j.iter().map(|r| r[c] * r[c]).sum::<f64>().sqrt())
                .product();
            let regular = hadamard > 0.0 && det.abs() > o.jacobian_tol * hadamard;
            let point = cell.param.eval(&u);
            Some(Root {
                u: u.to_vec(),
                point,
                sign: if det >= 0.0 { 1 } else { -1 },
                regular,
            })
        })
        .collect();

    // keep the first representative of each root in start order; the
    // ambient test merges seam duplicates such as t = 0 and t = 1
    let mut roots: Vec<Root> = Vec::new();
    for r in found.into_iter().flatten() {
        let dup = roots.iter().any(|q| {
            let du =
                q.u.iter()
                    .zip(&r.u)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
            let dp = q
                .point
                .iter()
                .zip(&r.point)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            du < o.dedup_tol || dp < o.dedup_tol * scale
        });
        if !dup {
            roots.push(r);
        }
    }
    roots
}

/// Solves `a x = b` by partial pivoting; `None` when singular.
fn solve<const K: usize>(mut a: [[f64; K]; K], mut b: [f64; K]) -> Option<[f64; K]> {
    for c in 0..K {
        let piv = (c..K).max_by(|&p, &q| a[p][c].abs().total_cmp(&a[q][c].abs()))?;
        if a[piv][c] == 0.0 || !a[piv][c].is_finite() {
            return None;
        }
        a.swap(piv, c);
        b.swap(piv, c);
        for r in c + 1..K {
            let f = a[r][c] / a[c][c];
            for cc in c..K {
                a[r][cc] -= f * a[c][cc];
            }
            b[r] -= f * b[c];
        }
    }
    for c in (0..K).rev() {
        let s: f64 = (c + 1..K).map(|cc| a[c][cc] * b[cc]).sum();
        b[c] = (b[c] - s) / a[c][c];
    }
    Some(b)
}

fn dispatch_roots(cell: &Cell, idx: &[usize], x: &[C64], o: &SliceOptions) -> Result<Vec<Root>> {
    Ok(match cell.k {
        2 => cell_roots::<2>(cell, idx, x, o),
        4 => cell_roots::<4>(cell, idx, x, o),
        6 => cell_roots::<6>(cell, idx, x, o),
        k => {
            return Err(CurrentError::Invalid(format!(
                "cannot take point slices of a {k}-cell"
            )))
        }
    })
}

/// The slice `<T, proj, x>` of a `2m`-current by a projection to `C^m`.
/// Critical fibers are reported through `regular = false`.
pub fn slice_points(
    t: &RectifiableCurrent,
    proj: &CoordinateProjection,
    x: &[C64],
    o: &SliceOptions,
) -> Result<Slice> {
    proj.check(t.ambient.n)?;
    let m = proj.indices.len();
    if 2 * m != t.dim {
        return Err(CurrentError::DimensionMismatch {
            expected: t.dim,
            got: 2 * m,
        });
    }
    if x.len() != m {
        return Err(CurrentError::DimensionMismatch {
            expected: m,
            got: x.len(),
        });
    }
    let mut atoms = Vec::new();
    let mut regular = true;
    for (ci, cell) in t.cells.iter().enumerate() {
        for r in dispatch_roots(cell, &proj.indices, x, o)? {
            regular &= r.regular;
            atoms.push(Atom {
                point: r.point,
                multiplicity: cell.multiplicity * r.sign,
                cell: ci,
                param: r.u,
            });
        }
    }
    Ok(Slice {
        base: x.to_vec(),
        atoms,
        regular,
    })
}

/// Like [`slice_points`] but moves a critical base point by
/// `o.perturbation` in a random direction, up to `o.retries` times.
pub fn slice_points_regular(
    t: &RectifiableCurrent,
    proj: &CoordinateProjection,
    x: &[C64],
    o: &SliceOptions,
) -> Result<Slice> {
    let s = slice_points(t, proj, x, o)?;
    if s.regular {
        return Ok(s);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    for _ in 0..o.retries {
        let mut dir: Vec<f64> = (0..2 * x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nrm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        dir.iter_mut().for_each(|v| *v *= o.perturbation / nrm);
        let y: Vec<C64> = x
            .iter()
            .enumerate()
            .map(|(j, z)| z + C64::new(dir[2 * j], dir[2 * j + 1]))
            .collect();
        let s = slice_points(t, proj, &y, o)?;
        if s.regular {
            return Ok(s);
        }
    }
    Err(CurrentError::NonRegular(format!(
        "base point {x:?} stays critical after {} perturbations",
        o.retries
    )))
}

/// Sum of slice multiplicities at each point of a base path.
pub fn sheet_counts(
    t: &RectifiableCurrent,
    proj: &CoordinateProjection,
    path: &[Vec<C64>],
    o: &SliceOptions,
) -> Result<Vec<i64>> {
    path.iter()
        .map(|x| slice_points_regular(t, proj, x, o).map(|s| s.total()))
        .collect()
}

/// Quadrature nodes on the base `C^m`.
#[derive(Clone, Debug)]
pub struct BaseGrid {
    pub points: Vec<Vec<C64>>,
    pub weights: Vec<f64>,
    pub per_axis: usize,
}

impl BaseGrid {
    /// Midpoint rule on the box `lo..hi` in `C^m`, `per_axis` cells per
    /// real axis.
    pub fn box_midpoint(lo: &[C64], hi: &[C64], per_axis: usize) -> BaseGrid {
        let lo_r: Vec<f64> = lo.iter().flat_map(|z| [z.re, z.im]).collect();
        let hi_r: Vec<f64> = hi.iter().flat_map(|z| [z.re, z.im]).collect();
        let d = lo_r.len();
        let h: Vec<f64> = (0..d)
            .map(|a| (hi_r[a] - lo_r[a]) / per_axis as f64)
            .collect();
        let w: f64 = h.iter().product();
        let total = per_axis.pow(d as u32);
        let points = (0..total)
            .map(|s| {
                let r: Vec<f64> = (0..d)
                    .map(|a| {
                        lo_r[a] + h[a] * (((s / per_axis.pow(a as u32)) % per_axis) as f64 + 0.5)
                    })
                    .collect();
                r.chunks(2).map(|c| C64::new(c[0], c[1])).collect()
            })
            .collect();
        BaseGrid {
            points,
            weights: vec![w; total],
            per_axis,
        }
    }

    /// Annulus `r0 < |z - center| < r1` in `C`: Gauss-Legendre in the
    /// radius, midpoint (spectral for periodic data) in the angle.
    pub fn polar(center: C64, r0: f64, r1: f64, per_axis: usize) -> BaseGrid {
        let gl = gauss_legendre(per_axis);
        let dt = std::f64::consts::TAU / per_axis as f64;
        let mut points = Vec::with_capacity(per_axis * per_axis);
        let mut weights = Vec::with_capacity(per_axis * per_axis);
        for (xr, wr) in gl.0.iter().zip(&gl.1) {
            let r = r0 + (r1 - r0) * xr;
            for j in 0..per_axis {
                let t = (j as f64 + 0.5) * dt;
                points.push(vec![center + C64::from_polar(r, t)]);
                weights.push(wr * (r1 - r0) * r * dt);
            }
        }
        BaseGrid {
            points,
            weights,
            per_axis,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SliceIntegralReport {
    /// Base quadrature of the slice evaluations.
    pub slice_side: C64,
    /// `T(f, Re x_1, Im x_1, ..)`.
    pub current_side: C64,
    pub residual: f64,
    pub grid_points: usize,
    pub perturbed_points: usize,
}

/// Compares `int <T, proj, x>(f) dx` with `T(f, d Re x_1, d Im x_1, ..)`.
pub fn slice_integral_check(
    t: &RectifiableCurrent,
    proj: &CoordinateProjection,
    f: &Expr,
    grid: &BaseGrid,
    o: &SliceOptions,
    q: &QuadOptions,
) -> Result<SliceIntegralReport> {
    let mut r = slice_integral_check_many(t, proj, std::slice::from_ref(f), grid, o, q)?;
    Ok(r.remove(0))
}

/// [`slice_integral_check`] for several functions sharing one set of slices.
pub fn slice_integral_check_many(
    t: &RectifiableCurrent,
    proj: &CoordinateProjection,
    fs: &[Expr],
    grid: &BaseGrid,
    o: &SliceOptions,
    q: &QuadOptions,
) -> Result<Vec<SliceIntegralReport>> {
    let slices = grid
        .points
        .par_iter()
        .map(|x| slice_points_regular(t, proj, x, o))
        .collect::<Result<Vec<_>>>()?;
    let perturbed_points = slices
        .iter()
        .zip(&grid.points)
        .filter(|(s, x)| s.base != **x)
        .count();
    let pis: Vec<Expr> = proj
        .indices
        .iter()
        .flat_map(|&i| [Expr::z(i).re(), Expr::z(i).im()])
        .collect();
    fs.iter()
        .map(|f| {
            let vals = slices
                .iter()
                .zip(&grid.weights)
                .map(|(s, w)| Ok(s.evaluate(f)? * *w))
                .collect::<Result<Vec<_>>>()?;
            let slice_side = neumaier_c(&vals);
            let current_side = t.evaluate(&MetricForm::new(f.clone(), pis.clone()), q)?;
            Ok(SliceIntegralReport {
                slice_side,
                current_side,
                residual: (slice_side - current_side).norm(),
                grid_points: grid.len(),
                perturbed_points,
            })
        })
        .collect()
}

/// `(m+3)! / (6 pi^m eps^{2m}) (1 - |y|^2/eps^2)_+^3`, unit mass on `C^m`.
pub fn mollifier(coords: &[Expr], base: &[C64], eps: f64) -> Expr {
    let m = coords.len();
    let s = crate::expr::sum(coords.iter().zip(base).map(|(c, x)| {
        let d = c - Expr::c(*x);
        (&d * d.conj()).re()
    }));
    let fact: f64 = (1..=m + 3).map(|v| v as f64).product();
    let norm = fact / (6.0 * std::f64::consts::PI.powi(m as i32) * eps.powi(2 * m as i32));
    Expr::real(norm)
        * (Expr::one() - Expr::real(1.0 / (eps * eps)) * s)
            .pos()
            .powi(3)
}

/// `<T, pi, x>` approximated by `T(f rho_eps(pi - x), Re pi_1, Im pi_1, .., eta)`.
pub struct MollifiedSlice<'a> {
    pub inner: &'a dyn Current,
    pub coords: Vec<Expr>,
    pub base: Vec<C64>,
    pub eps: f64,
    rho: Expr,
}

impl<'a> MollifiedSlice<'a> {
    pub fn new(
        inner: &'a dyn Current,
        coords: Vec<Expr>,
        base: Vec<C64>,
        eps: f64,
    ) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(CurrentError::Invalid(format!(
                "mollifier width must be positive, got {eps}"
            )));
        }
        if coords.len() != base.len() {
            return Err(CurrentError::DimensionMismatch {
                expected: coords.len(),
                got: base.len(),
            });
        }
        if 2 * coords.len() > inner.dim() {
            return Err(CurrentError::DimensionMismatch {
                expected: inner.dim(),
                got: 2 * coords.len(),
            });
        }
        let rho = mollifier(&coords, &base, eps);
        Ok(MollifiedSlice {
            inner,
            coords,
            base,
            eps,
            rho,
        })
    }
}

impl Current for MollifiedSlice<'_> {
    fn dim(&self) -> usize {
        self.inner.dim() - 2 * self.coords.len()
    }

    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }

    fn eval_typed(&self, f: &Expr, slots: &[Slot], q: &QuadOptions) -> Result<C64> {
        let mut all: Vec<Slot> = self
            .coords
            .iter()
            .flat_map(|c| [Slot::full(c.re()), Slot::full(c.im())])
            .collect();
        all.extend_from_slice(slots);
        self.inner.eval_typed(&(f * &self.rho), &all, q)
    }
}

pub fn mollified_slice<'a>(
    t: &'a dyn Current,
    proj: &CoordinateProjection,
    x: &[C64],
    eps: f64,
) -> Result<MollifiedSlice<'a>> {
    proj.check(t.ambient_dim())?;
    MollifiedSlice::new(
        t,
        proj.indices.iter().map(|&i| Expr::z(i)).collect(),
        x.to_vec(),
        eps,
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CommutationReport {
    /// `<delbar T, pi, x>` on each probe.
    pub slice_of_delbar: Vec<C64>,
    /// `delbar <T, pi, x>` on each probe.
    pub delbar_of_slice: Vec<C64>,
    pub residual: f64,
}

/// Evaluates `<delbar T, pi, x>` and `delbar <T, pi, x>` on each probe with
/// the same mollifier. `T` is taken of pure bidimension `(p, p)`.
pub fn delbar_slice_commutation_check(
    t: &dyn Current,
    pi: &[Expr],
    x: &[C64],
    eps: f64,
    probes: &[MetricForm],
    q: &QuadOptions,
) -> Result<CommutationReport> {
    if let Some(bad) = pi.iter().find(|e| !e.is_holomorphic()) {
        return Err(CurrentError::Invalid(format!(
            "slicing map must be holomorphic, got {}",
            bad.to_sexpr()
        )));
    }
    if t.dim() % 2 != 0 {
        return Err(CurrentError::Invalid(
            "commutation check needs an even-dimensional current".into(),
        ));
    }
    let p = t.dim() / 2;
    let m = pi.len();
    if m >= p {
        return Err(CurrentError::Invalid(
            "slices must have positive dimension".into(),
        ));
    }
    let db = TypedBoundary::delbar(t, p, p)?;
    let lhs_cur = MollifiedSlice::new(&db, pi.to_vec(), x.to_vec(), eps)?;
    let sl = MollifiedSlice::new(t, pi.to_vec(), x.to_vec(), eps)?;
    let rhs_cur = TypedBoundary::delbar(&sl, p - m, p - m)?;
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for w in probes {
        lhs.push(lhs_cur.evaluate(w, q)?);
        rhs.push(rhs_cur.evaluate(w, q)?);
    }
    let residual = lhs
        .iter()
        .zip(&rhs)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    Ok(CommutationReport {
        slice_of_delbar: lhs,
        delbar_of_slice: rhs,
        residual,
    })
}

/// Relative drop of successive residuals; values at or below `floor` count
/// as converged.
pub fn halves(coarse: f64, fine: f64, floor: f64) -> bool {
    fine <= floor || fine <= 0.5 * coarse
}
