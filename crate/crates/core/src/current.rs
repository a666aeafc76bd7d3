//! Rectifiable currents as finite sums of parametrized cells.
//!
//! A cell is an integer multiplicity times the pushforward of the unit cube
//! `[0,1]^k` through a smooth parametrization. Evaluation against a metric
//! form `(f, pi_1, ..., pi_k)` integrates
//! `theta * f(phi(u)) * det[d(pi_i o phi)/du_l]` over the cube.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{CurrentError, Result};
use crate::expr::Expr;
use crate::field::{CInterval, Dual, Field, Interval, C64};
use crate::hilbert::AmbientSpace;
use crate::quadrature::{neumaier, neumaier_c, TensorRule};
use crate::tape::Tape;

/// Largest cell dimension supported by the quadrature kernels.
pub const MAX_DIM: usize = 6;

const CHUNK: usize = 2048;

/// A map from `arity_in` real parameters to `outputs.len()` complex values.
#[derive(Clone, Debug)]
pub struct ExpressionMap {
    arity_in: usize,
    outputs: Vec<Expr>,
    tape: Arc<Tape>,
}

impl ExpressionMap {
    pub fn new(arity_in: usize, outputs: Vec<Expr>) -> Result<Self> {
        let tape = Arc::new(Tape::compile(&outputs, arity_in)?);
        Ok(ExpressionMap {
            arity_in,
            outputs,
            tape,
        })
    }

    /// Identity on `C^n` (as a map of `2n` real inputs).
    pub fn identity(n: usize) -> Self {
        ExpressionMap::new(2 * n, (0..n).map(Expr::z).collect()).expect("identity arity")
    }

    pub fn arity_in(&self) -> usize {
        self.arity_in
    }

    pub fn arity_out(&self) -> usize {
        self.outputs.len()
    }

    pub fn outputs(&self) -> &[Expr] {
        &self.outputs
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn eval(&self, u: &[f64]) -> Vec<C64> {
        self.tape.eval_real(u)
    }

    /// `self o inner`, where `self` reads the complex outputs of `inner`.
    pub fn compose(&self, inner: &ExpressionMap) -> Result<ExpressionMap> {
        if self.arity_in != 2 * inner.arity_out() {
            return Err(CurrentError::ArityMismatch {
                expected: self.arity_in,
                got: 2 * inner.arity_out(),
            });
        }
        let outs = self
            .outputs
            .iter()
            .map(|e| e.compose(&inner.outputs))
            .collect();
        ExpressionMap::new(inner.arity_in, outs)
    }

    /// Interval enclosure of every output over a box of inputs.
    pub fn enclose(&self, bx: &[Interval]) -> Vec<CInterval> {
        let inp: Vec<CInterval> = bx.iter().map(|&i| CInterval::real(i)).collect();
        self.tape.eval(&inp)
    }

    /// Upper bound on the Lipschitz constant over `bx` (Euclidean norms on
    /// the real input space and on `C^out`).
    pub fn lipschitz_bound(&self, bx: &[Interval]) -> f64 {
        lipschitz_bound(&self.tape, bx)
    }
}

/// Lipschitz bound of a compiled map over a box: interval Jacobian by
/// forward differentiation, `||J|| <= ||mid J||_2 + ||rad J||_F`, maximized
/// over a bisection of the box.
pub fn lipschitz_bound(tape: &Tape, bx: &[Interval]) -> f64 {
    let n = tape.n_inputs();
    if n == 0 {
        return 0.0;
    }
    let mut boxes = vec![bx.to_vec()];
    for _ in 0..4 {
        let mut next = Vec::with_capacity(boxes.len() * 2);
        for b in boxes {
            let (d, w) = b
                .iter()
                .enumerate()
                .map(|(i, iv)| (i, iv.width()))
                .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if !(w > 0.0) || !w.is_finite() {
                next.push(b);
                continue;
            }
            let m = 0.5 * (b[d].lo + b[d].hi);
            let mut l = b.clone();
            let mut r = b;
            l[d] = Interval::new(l[d].lo, m);
            r[d] = Interval::new(m, r[d].hi);
            next.push(l);
            next.push(r);
        }
        boxes = next;
    }
    boxes
        .iter()
        .map(|b| lipschitz_on_box(tape, b))
        .fold(0.0, f64::max)
}

fn lipschitz_on_box(tape: &Tape, bx: &[Interval]) -> f64 {
    let n = tape.n_inputs();
    let m = tape.n_outputs();
    // real Jacobian rows: (Re out_0, Im out_0, Re out_1, ...)
    let mut mid = nalgebra::DMatrix::<f64>::zeros(2 * m, n);
    let mut rad2 = 0.0;
    let mut scratch = Vec::new();
    let mut out = vec![Dual::<CInterval, 1>::constant(CInterval::from_c64(C64::new(0.0, 0.0))); m];
    let base: Vec<Dual<CInterval, 1>> = bx
        .iter()
        .map(|&i| Dual::constant(CInterval::real(i)))
        .collect();
    for a in 0..n {
        let mut inp = base.clone();
        inp[a].d[0] = CInterval::from_c64(C64::new(1.0, 0.0));
        tape.eval_into(&inp, &mut scratch, &mut out);
        for (o, val) in out.iter().enumerate() {
            let g = val.d[0];
            if !g.is_bounded() {
                return f64::INFINITY;
            }
            for (row, iv) in [(2 * o, g.re), (2 * o + 1, g.im)] {
                mid[(row, a)] = 0.5 * (iv.lo + iv.hi);
                let r = 0.5 * iv.width();
                rad2 += r * r;
            }
        }
    }
    let sv = mid.singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    top + rad2.sqrt()
}

/// An integer-weighted parametrized cube.
#[derive(Clone, Debug)]
pub struct Cell {
    pub k: usize,
    pub param: ExpressionMap,
    pub multiplicity: i64,
}

impl Cell {
    /// `orientation` (±1) is folded into the multiplicity.
    pub fn new(param: ExpressionMap, multiplicity: i64, orientation: i8) -> Result<Cell> {
        let k = param.arity_in();
        if k > MAX_DIM {
            return Err(CurrentError::Invalid(format!(
                "cell dimension {k} exceeds {MAX_DIM}"
            )));
        }
        if orientation != 1 && orientation != -1 {
            return Err(CurrentError::Invalid("orientation must be +1 or -1".into()));
        }
        if k > 2 * param.arity_out() {
            return Err(CurrentError::Invalid(format!(
                "cell dimension {k} exceeds real ambient dimension {}",
                2 * param.arity_out()
            )));
        }
        Ok(Cell {
            k,
            param,
            multiplicity: multiplicity * orientation as i64,
        })
    }

    pub fn from_exprs(k: usize, outputs: Vec<Expr>, multiplicity: i64) -> Result<Cell> {
        Cell::new(ExpressionMap::new(k, outputs)?, multiplicity, 1)
    }

    /// Samples an interior grid and reports whether two well-separated
    /// parameters land on the same ambient point.
    pub fn spot_check_injective(&self, per_axis: usize) -> bool {
        let k = self.k;
        if k == 0 {
            return true;
        }
        let m = per_axis.max(2);
        let total = m.pow(k as u32);
        let mut pts: Vec<(Vec<f64>, Vec<C64>)> = Vec::with_capacity(total);
        for idx in 0..total {
            let mut r = idx;
            let u: Vec<f64> = (0..k)
                .map(|_| {
                    let i = r % m;
                    r /= m;
                    (i as f64 + 0.5) / m as f64
                })
                .collect();
            let p = self.param.eval(&u);
            pts.push((u, p));
        }
        let key = |p: &[C64]| -> (i64, i64) {
            (
                (p[0].re * 1e6).round() as i64,
                (p[0].im * 1e6).round() as i64,
            )
        };
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, (_, p)) in pts.iter().enumerate() {
            buckets.entry(key(p)).or_default().push(i);
        }
        for list in buckets.values() {
            for (a, &i) in list.iter().enumerate() {
                for &j in &list[a + 1..] {
                    let d: f64 = pts[i]
                        .1
                        .iter()
                        .zip(&pts[j].1)
                        .map(|(x, y)| (x - y).norm_sqr())
                        .sum();
                    let du: f64 = pts[i]
                        .0
                        .iter()
                        .zip(&pts[j].0)
                        .map(|(x, y)| (x - y).powi(2))
                        .sum();
                    if d.sqrt() < 1e-9 && du.sqrt() > 1e-6 {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Which part of a differential a slot contributes: the full real
/// differential, its complex-linear part or its conjugate-linear part.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DiffPart {
    Full,
    Holo,
    Anti,
}

#[derive(Clone, Debug)]
pub struct Slot {
    pub part: DiffPart,
    pub pi: Expr,
}

impl Slot {
    pub fn full(pi: Expr) -> Slot {
        Slot {
            part: DiffPart::Full,
            pi,
        }
    }
}

/// `(f, pi_1, ..., pi_k)`, all expressions over the ambient real coordinates.
#[derive(Clone, Debug)]
pub struct MetricForm {
    pub f: Expr,
    pub pis: Vec<Expr>,
}

impl MetricForm {
    pub fn new(f: Expr, pis: Vec<Expr>) -> MetricForm {
        MetricForm { f, pis }
    }

    pub fn degree(&self) -> usize {
        self.pis.len()
    }

    pub fn slots(&self) -> Vec<Slot> {
        self.pis.iter().cloned().map(Slot::full).collect()
    }

    /// Pullback through an ambient map `F` (expressions in the source).
    pub fn pullback(&self, f_map: &ExpressionMap) -> MetricForm {
        let coords = f_map.outputs();
        MetricForm {
            f: self.f.compose(coords),
            pis: self.pis.iter().map(|p| p.compose(coords)).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadOptions {
    pub order: usize,
    pub panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            order: 16,
            panels: 1,
        }
    }
}

impl QuadOptions {
    pub fn order(order: usize) -> Self {
        QuadOptions { order, panels: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MassReport {
    pub total: f64,
    pub per_cell: Vec<f64>,
    pub quadrature_order: usize,
    pub estimated_error: f64,
}

/// Anything that can be evaluated on typed metric forms.
pub trait Current: Send + Sync {
    fn dim(&self) -> usize;
    fn ambient_dim(&self) -> usize;

    /// Evaluates on `(f, slots)`; each slot may be restricted to the
    /// complex-linear or conjugate-linear part of its differential.
    fn eval_typed(&self, f: &Expr, slots: &[Slot], q: &QuadOptions) -> Result<C64>;

    fn evaluate(&self, form: &MetricForm, q: &QuadOptions) -> Result<C64> {
        if form.degree() != self.dim() {
            return Err(CurrentError::DimensionMismatch {
                expected: self.dim(),
                got: form.degree(),
            });
        }
        self.eval_typed(&form.f, &form.slots(), q)
    }
}

#[derive(Clone, Debug)]
pub struct RectifiableCurrent {
    pub ambient: AmbientSpace,
    pub dim: usize,
    pub cells: Vec<Cell>,
}

impl RectifiableCurrent {
    pub fn new(ambient: AmbientSpace, dim: usize, cells: Vec<Cell>) -> Result<Self> {
        for c in &cells {
            if c.k != dim {
                return Err(CurrentError::DimensionMismatch {
                    expected: dim,
                    got: c.k,
                });
            }
            if c.param.arity_out() != ambient.n {
                return Err(CurrentError::ArityMismatch {
                    expected: ambient.n,
                    got: c.param.arity_out(),
                });
            }
        }
        Ok(RectifiableCurrent {
            ambient,
            dim,
            cells,
        })
    }

    pub fn zero(ambient: AmbientSpace, dim: usize) -> Self {
        RectifiableCurrent {
            ambient,
            dim,
            cells: Vec::new(),
        }
    }

    pub fn from_cells(n: usize, dim: usize, cells: Vec<Cell>) -> Result<Self> {
        RectifiableCurrent::new(AmbientSpace::new(n)?, dim, cells)
    }

    /// Sum of two currents on the same ambient.
    pub fn plus(&self, other: &RectifiableCurrent) -> Result<Self> {
        if other.ambient.n != self.ambient.n {
            return Err(CurrentError::ArityMismatch {
                expected: self.ambient.n,
                got: other.ambient.n,
            });
        }
        let mut cells = self.cells.clone();
        cells.extend(other.cells.iter().cloned());
        RectifiableCurrent::new(self.ambient.clone(), self.dim, cells)
    }

    pub fn scaled(&self, m: i64) -> Self {
        let mut out = self.clone();
        for c in &mut out.cells {
            c.multiplicity *= m;
        }
        out.cells.retain(|c| c.multiplicity != 0);
        out
    }

    /// Face cells with induced orientation. Faces with identical
    /// parametrizations are merged, so shared faces cancel exactly.
    pub fn boundary(&self) -> Result<Self> {
        if self.dim == 0 {
            return Err(CurrentError::Invalid(
                "boundary of a 0-dimensional current".into(),
            ));
        }
        let k = self.dim;
        let mut order: Vec<String> = Vec::new();
        let mut merged: HashMap<String, Cell> = HashMap::new();
        for cell in &self.cells {
            for j in 0..k {
                for (side, sign) in [
                    (0.0, if j % 2 == 0 { -1 } else { 1 }),
                    (1.0, if j % 2 == 0 { 1 } else { -1 }),
                ] {
                    let vars: Vec<Expr> = (0..k)
                        .map(|i| match i.cmp(&j) {
                            std::cmp::Ordering::Less => Expr::var(i),
                            std::cmp::Ordering::Equal => Expr::real(side),
                            std::cmp::Ordering::Greater => Expr::var(i - 1),
                        })
                        .collect();
                    let outs: Vec<Expr> = cell
                        .param
                        .outputs()
                        .iter()
                        .map(|e| e.substitute_vars(&vars))
                        .collect();
                    let key: String = outs
                        .iter()
                        .map(|e| e.to_sexpr())
                        .collect::<Vec<_>>()
                        .join("|");
                    let mult = cell.multiplicity * sign;
                    match merged.get_mut(&key) {
                        Some(c) => c.multiplicity += mult,
                        None => {
                            let face = Cell::new(ExpressionMap::new(k - 1, outs)?, mult, 1)?;
                            order.push(key.clone());
                            merged.insert(key, face);
                        }
                    }
                }
            }
        }
        let cells = order
            .into_iter()
            .filter_map(|key| merged.remove(&key))
            .filter(|c| c.multiplicity != 0)
            .collect();
        RectifiableCurrent::new(self.ambient.clone(), k - 1, cells)
    }

    /// `F_# T`: composes every parametrization with `F`.
    pub fn pushforward(&self, f_map: &ExpressionMap) -> Result<Self> {
        if f_map.arity_in() != 2 * self.ambient.n {
            return Err(CurrentError::ArityMismatch {
                expected: 2 * self.ambient.n,
                got: f_map.arity_in(),
            });
        }
        let cells = self
            .cells
            .iter()
            .map(|c| Cell::new(f_map.compose(&c.param)?, c.multiplicity, 1))
            .collect::<Result<Vec<_>>>()?;
        RectifiableCurrent::new(AmbientSpace::new(f_map.arity_out())?, self.dim, cells)
    }

    pub fn mass(&self, q: &QuadOptions) -> MassReport {
        let per_cell: Vec<f64> = self.cells.par_iter().map(|c| cell_mass(c, q)).collect();
        let coarse = QuadOptions {
            order: (q.order / 2).max(1),
            panels: q.panels,
        };
        let coarse_total = neumaier(
            self.cells
                .par_iter()
                .map(|c| cell_mass(c, &coarse))
                .collect::<Vec<_>>(),
        );
        let total = neumaier(per_cell.iter().cloned());
        MassReport {
            total,
            per_cell,
            quadrature_order: q.order,
            estimated_error: (total - coarse_total).abs(),
        }
    }

    /// Box in `R^{2N}` (interleaved real/imaginary parts) containing every
    /// cell image, by interval evaluation over a subdivision of each cube.
    pub fn support_bbox(&self) -> Vec<Interval> {
        let n = self.ambient.n;
        let mut hull: Option<Vec<Interval>> = None;
        for cell in &self.cells {
            let k = cell.k;
            let s: usize = match k {
                0 => 1,
                1 => 64,
                2 => 16,
                3 => 6,
                _ => 4,
            };
            let total = s.pow(k as u32);
            for idx in 0..total {
                let mut r = idx;
                let bx: Vec<Interval> = (0..k)
                    .map(|_| {
                        let i = r % s;
                        r /= s;
                        Interval::new(i as f64 / s as f64, (i + 1) as f64 / s as f64)
                    })
                    .collect();
                let enc = cell.param.enclose(&bx);
                let flat: Vec<Interval> = enc.iter().flat_map(|c| [c.re, c.im]).collect();
                hull = Some(match hull {
                    None => flat,
                    Some(h) => h.iter().zip(&flat).map(|(a, b)| a.hull(*b)).collect(),
                });
            }
        }
        let pad = 1e-9;
        hull.unwrap_or_else(|| vec![Interval::point(0.0); 2 * n])
            .into_iter()
            .map(|i| Interval::new(i.lo - pad, i.hi + pad))
            .collect()
    }
}

impl Current for RectifiableCurrent {
    fn dim(&self) -> usize {
        self.dim
    }

    fn ambient_dim(&self) -> usize {
        self.ambient.n
    }

    fn eval_typed(&self, f: &Expr, slots: &[Slot], q: &QuadOptions) -> Result<C64> {
        if slots.len() != self.dim {
            return Err(CurrentError::DimensionMismatch {
                expected: self.dim,
                got: slots.len(),
            });
        }
        let n2 = 2 * self.ambient.n;
        let mut exprs = vec![f.clone()];
        exprs.extend(slots.iter().map(|s| s.pi.clone()));
        let tape = Tape::compile(&exprs, n2)?;
        let parts: Vec<DiffPart> = slots.iter().map(|s| s.part).collect();
        let rule = TensorRule::new(self.dim, q.order, q.panels);
        let vals: Vec<C64> = self
            .cells
            .par_iter()
            .enumerate()
            .map(|(ci, c)| {
                let v = dispatch_integral(c, &tape, &parts, &rule)?;
                if v.re.is_finite() && v.im.is_finite() {
                    Ok(v)
                } else {
                    Err(CurrentError::Domain(format!(
                        "non-finite integrand on cell {ci}"
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(neumaier_c(&vals))
    }
}

fn dispatch_integral(
    cell: &Cell,
    tape: &Tape,
    parts: &[DiffPart],
    rule: &TensorRule,
) -> Result<C64> {
    match cell.k {
        0 => Ok(cell_integral::<0, 0>(cell, tape, parts, rule)),
        1 => Ok(cell_integral::<1, 2>(cell, tape, parts, rule)),
        2 => Ok(cell_integral::<2, 4>(cell, tape, parts, rule)),
        3 => Ok(cell_integral::<3, 6>(cell, tape, parts, rule)),
        4 => Ok(cell_integral::<4, 8>(cell, tape, parts, rule)),
        5 => Ok(cell_integral::<5, 10>(cell, tape, parts, rule)),
        6 => Ok(cell_integral::<6, 12>(cell, tape, parts, rule)),
        k => Err(CurrentError::Invalid(format!(
            "cell dimension {k} unsupported"
        ))),
    }
}

/// Values and first derivatives of a cell parametrization at `u`.
pub fn param_jet<const K: usize>(
    param: &Tape,
    u: &[f64],
    scratch: &mut Vec<Dual<C64, K>>,
    out: &mut [Dual<C64, K>],
) {
    let mut inp = [Dual::<C64, K>::constant(C64::new(0.0, 0.0)); K];
    for l in 0..K {
        inp[l].v = C64::new(u[l], 0.0);
        inp[l].d[l] = C64::new(1.0, 0.0);
    }
    param.eval_into(&inp, scratch, out);
}

fn cell_integral<const K: usize, const K2: usize>(
    cell: &Cell,
    form: &Tape,
    parts: &[DiffPart],
    rule: &TensorRule,
) -> C64 {
    let n = cell.param.arity_out();
    let npts = rule.len();
    let theta = cell.multiplicity as f64;
    let half = C64::new(0.5, 0.0);
    let i = C64::new(0.0, 1.0);
    let chunks: Vec<C64> = (0..npts.div_ceil(CHUNK))
        .into_par_iter()
        .map(|ch| {
            let mut ps = Vec::new();
            let mut fs = Vec::new();
            let mut jet = vec![Dual::<C64, K>::constant(C64::new(0.0, 0.0)); n];
            let mut amb = vec![Dual::<C64, K2>::constant(C64::new(0.0, 0.0)); 2 * n];
            let mut fo = vec![Dual::<C64, K2>::constant(C64::new(0.0, 0.0)); K + 1];
            let mut acc = Vec::with_capacity(CHUNK);
            let mut mat = [[C64::new(0.0, 0.0); K]; K];
            for p in ch * CHUNK..((ch + 1) * CHUNK).min(npts) {
                let u = rule.point(p);
                param_jet::<K>(cell.param.tape(), u, &mut ps, &mut jet);
                for (j, z) in jet.iter().enumerate() {
                    let (re, im) = (&mut amb[2 * j..2 * j + 2]).split_at_mut(1);
                    re[0].v = C64::new(z.v.re, 0.0);
                    im[0].v = C64::new(z.v.im, 0.0);
                    for l in 0..K {
                        let dz = z.d[l];
                        re[0].d[l] = C64::new(dz.re, 0.0);
                        im[0].d[l] = C64::new(dz.im, 0.0);
                        // direction i * dphi/du_l
                        re[0].d[K + l] = C64::new(-dz.im, 0.0);
                        im[0].d[K + l] = C64::new(dz.re, 0.0);
                    }
                }
                form.eval_into(&amb, &mut fs, &mut fo);
                for (s, part) in parts.iter().enumerate() {
                    let g = &fo[s + 1];
                    for l in 0..K {
                        mat[s][l] = match part {
                            DiffPart::Full => g.d[l],
                            DiffPart::Holo => half * (g.d[l] - i * g.d[K + l]),
                            DiffPart::Anti => half * (g.d[l] + i * g.d[K + l]),
                        };
                    }
                }
                acc.push(fo[0].v * det_c::<K>(mat) * (theta * rule.weights[p]));
            }
            neumaier_c(&acc)
        })
        .collect();
    neumaier_c(&chunks)
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det_c<const K: usize>(mut a: [[C64; K]; K]) -> C64 {
    let mut det = C64::new(1.0, 0.0);
    for c in 0..K {
        let mut piv = c;
        for r in c + 1..K {
            if a[r][c].norm() > a[piv][c].norm() {
                piv = r;
            }
        }
        if a[piv][c].norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if piv != c {
            a.swap(piv, c);
            det = -det;
        }
        let p = a[c][c];
        det *= p;
        for r in c + 1..K {
            let f = a[r][c] / p;
            for cc in c..K {
                let v = a[c][cc];
                a[r][cc] -= f * v;
            }
        }
    }
    det
}

/// Real determinant by Gaussian elimination with partial pivoting.
pub fn det_r(mut a: Vec<Vec<f64>>) -> f64 {
    let k = a.len();
    let mut det = 1.0;
    for c in 0..k {
        let mut piv = c;
        for r in c + 1..k {
            if a[r][c].abs() > a[piv][c].abs() {
                piv = r;
            }
        }
        if a[piv][c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            a.swap(piv, c);
            det = -det;
        }
        let p = a[c][c];
        det *= p;
        for r in c + 1..k {
            let f = a[r][c] / p;
            for cc in c..k {
                a[r][cc] -= f * a[c][cc];
            }
        }
    }
    det
}

fn cell_mass(cell: &Cell, q: &QuadOptions) -> f64 {
    match cell.k {
        0 => cell.multiplicity.unsigned_abs() as f64,
        1 => cell_mass_k::<1>(cell, q),
        2 => cell_mass_k::<2>(cell, q),
        3 => cell_mass_k::<3>(cell, q),
        4 => cell_mass_k::<4>(cell, q),
        5 => cell_mass_k::<5>(cell, q),
        _ => cell_mass_k::<6>(cell, q),
    }
}

fn cell_mass_k<const K: usize>(cell: &Cell, q: &QuadOptions) -> f64 {
    let rule = TensorRule::new(K, q.order, q.panels);
    let n = cell.param.arity_out();
    let theta = cell.multiplicity.unsigned_abs() as f64;
    let npts = rule.len();
    let chunks: Vec<f64> = (0..npts.div_ceil(CHUNK))
        .into_par_iter()
        .map(|ch| {
            let mut ps = Vec::new();
            let mut jet = vec![Dual::<C64, K>::constant(C64::new(0.0, 0.0)); n];
            let mut acc = Vec::with_capacity(CHUNK);
            for p in ch * CHUNK..((ch + 1) * CHUNK).min(npts) {
                param_jet::<K>(cell.param.tape(), rule.point(p), &mut ps, &mut jet);
                let mut g = vec![vec![0.0; K]; K];
                for a in 0..K {
                    for b in a..K {
                        let s: f64 = jet.iter().map(|z| (z.d[a].conj() * z.d[b]).re).sum();
                        g[a][b] = s;
                        g[b][a] = s;
                    }
                }
                acc.push(rule.weights[p] * det_r(g).max(0.0).sqrt());
            }
            neumaier(acc)
        })
        .collect();
    theta * neumaier(chunks)
}

/// `T ⌞ (u, v_1, ..., v_h)`, evaluated lazily.
pub struct Contraction<'a> {
    pub inner: &'a dyn Current,
    pub u: Expr,
    pub vs: Vec<Expr>,
}

impl<'a> Contraction<'a> {
    pub fn new(inner: &'a dyn Current, u: Expr, vs: Vec<Expr>) -> Result<Self> {
        if vs.len() > inner.dim() {
            return Err(CurrentError::Invalid(format!(
                "contraction with {} differentials exceeds dimension {}",
                vs.len(),
                inner.dim()
            )));
        }
        Ok(Contraction { inner, u, vs })
    }
}

impl Current for Contraction<'_> {
    fn dim(&self) -> usize {
        self.inner.dim() - self.vs.len()
    }
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }
    fn eval_typed(&self, f: &Expr, slots: &[Slot], q: &QuadOptions) -> Result<C64> {
        let mut all: Vec<Slot> = self.vs.iter().cloned().map(Slot::full).collect();
        all.extend_from_slice(slots);
        self.inner.eval_typed(&(f * &self.u), &all, q)
    }
}

/// `dT(f, pi) = T(1, f, pi)`, evaluated lazily.
pub struct Boundary<'a> {
    pub inner: &'a dyn Current,
}

impl Current for Boundary<'_> {
    fn dim(&self) -> usize {
        self.inner.dim().saturating_sub(1)
    }
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }
    fn eval_typed(&self, f: &Expr, slots: &[Slot], q: &QuadOptions) -> Result<C64> {
        if self.inner.dim() == 0 {
            return Err(CurrentError::Invalid(
                "boundary of a 0-dimensional current".into(),
            ));
        }
        let mut all = vec![Slot::full(f.clone())];
        all.extend_from_slice(slots);
        self.inner.eval_typed(&Expr::one(), &all, q)
    }
}
