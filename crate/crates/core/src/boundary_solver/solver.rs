use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex_ops::{real_probe_forms, wirtinger_mass};
use crate::current::{Boundary, Cell, Current, MassReport, QuadOptions, RectifiableCurrent};
use crate::error::{CurrentError, Result};
use crate::expr::Expr;
use crate::field::C64;
use crate::hilbert::TailCertificate;
use crate::poly::{fit_holomorphic, newton_identities, roots, ComplexPoly};

use super::arrangement::{
    arrangement_from_curves, shadow_distance, shadow_jet, validate_with, PlanarArrangement,
    TransversalityReport, ValidateOptions,
};
use super::moments::CycleQuadrature;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryOptions {
    /// Shadow samples per cell.
    pub samples: usize,
    /// Raster pixels across the longer side of the shadow box.
    pub raster: usize,
    /// Solve-grid points across the longer side.
    pub grid: usize,
    /// Highest moment used; raised to `sheets + 1` where needed.
    pub smax: usize,
    pub quad_order: usize,
    pub panels: usize,
    pub integrality_tol: f64,
    pub moment_tol: f64,
    pub max_degree: usize,
    pub fit_tol: f64,
    pub cycle_probes: usize,
    pub seed: u64,
}

impl Default for BoundaryOptions {
    fn default() -> Self {
        BoundaryOptions {
            samples: super::DEFAULT_SAMPLES,
            raster: 160,
            grid: 40,
            smax: 4,
            quad_order: 24,
            panels: 128,
            integrality_tol: 1e-3,
            moment_tol: 1e-6,
            max_degree: 12,
            fit_tol: 1e-7,
            cycle_probes: 8,
            seed: 0,
        }
    }
}

impl BoundaryOptions {
    fn validate_options(&self) -> ValidateOptions {
        ValidateOptions {
            samples: self.samples,
            probes: self.cycle_probes,
            seed: self.seed,
        }
    }
}

/// Cycle, immersion and transversality checks on a 1-cycle.
pub fn validate_cycle(m: &RectifiableCurrent, o: &BoundaryOptions) -> Result<TransversalityReport> {
    validate_with(m, o.validate_options())
}

/// Face raster of `C` minus the sampled shadow of `m`.
pub fn build_arrangement(m: &RectifiableCurrent, o: &BoundaryOptions) -> Result<PlanarArrangement> {
    let curves = super::arrangement::sample_shadow(m, o.samples)?;
    arrangement_from_curves(curves, o.samples, o.raster)
}

fn require_valid(m: &RectifiableCurrent, o: &BoundaryOptions) -> Result<TransversalityReport> {
    let rep = validate_cycle(m, o)?;
    if !rep.passed {
        return Err(CurrentError::stage(
            "validate_cycle",
            format!(
                "closed {} (residual {:.2e}), immersed {} (ratio {:.2e}), transversal {} (min sin {:.3})",
                rep.closed, rep.cycle_residual, rep.immersed, rep.immersion_ratio, rep.transversal, rep.min_sin_angle
            ),
        ));
    }
    Ok(rep)
}

const MIN_FACE_POINTS: usize = 16;

/// Solve-grid points of one face with their lattice coordinates.
struct FaceGrid {
    points: Vec<C64>,
    lattice: Vec<(usize, usize)>,
    step: f64,
}

fn face_grids(arr: &PlanarArrangement, grid: usize) -> Vec<FaceGrid> {
    let stride = (arr.nx.max(arr.ny) / grid.max(1)).max(1);
    let off = stride / 2;
    let mut out: Vec<FaceGrid> = (0..arr.faces.len())
        .map(|_| FaceGrid {
            points: Vec::new(),
            lattice: Vec::new(),
            step: stride as f64 * arr.pixel,
        })
        .collect();
    for iy in (off..arr.ny).step_by(stride) {
        for ix in (off..arr.nx).step_by(stride) {
            let l = arr.labels[iy * arr.nx + ix];
            if l >= 0 {
                let g = &mut out[l as usize];
                g.points.push(arr.pixel_center(ix, iy));
                g.lattice.push((ix / stride, iy / stride));
            }
        }
    }
    // small faces fall back to every pixel
    for (f, g) in out.iter_mut().enumerate() {
        if g.points.len() < MIN_FACE_POINTS && arr.faces[f].pixels > g.points.len() {
            g.points.clear();
            g.lattice.clear();
            g.step = arr.pixel;
            for iy in 0..arr.ny {
                for ix in 0..arr.nx {
                    if arr.labels[iy * arr.nx + ix] == f as i32 {
                        g.points.push(arr.pixel_center(ix, iy));
                        g.lattice.push((ix, iy));
                    }
                }
            }
        }
    }
    out
}

/// Permutation `p` minimizing `sum |next[p[h]] - prev[h]|`.
fn best_match(prev: &[C64], next: &[C64]) -> Vec<usize> {
    let m = prev.len();
    if m > 7 {
        let mut used = vec![false; m];
        return prev
            .iter()
            .map(|a| {
                let (i, _) = next
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !used[*i])
                    .map(|(i, b)| (i, (a - b).norm()))
                    .fold((usize::MAX, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
                used[i] = true;
                i
            })
            .collect();
    }
    fn rec(h: usize, prev: &[C64], next: &[C64], used: &mut [bool], cur: &mut Vec<usize>, cost: f64, best: &mut (f64, Vec<usize>)) {
        if cost >= best.0 {
            return;
        }
        if h == prev.len() {
            *best = (cost, cur.clone());
            return;
        }
        for i in 0..next.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(h + 1, prev, next, used, cur, cost + (prev[h] - next[i]).norm(), best);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut best = (f64::INFINITY, (0..m).collect());
    rec(0, prev, next, &mut vec![false; m], &mut Vec::new(), 0.0, &mut best);
    best.1
}

struct Continuation {
    parent: Vec<Option<usize>>,
    anchors: Vec<usize>,
    /// Permutation applied to each point's raw root list.
    perms: Vec<Vec<usize>>,
    max_jump: f64,
    min_separation: f64,
}

/// Breadth-first label continuation over the face lattice, one anchor per
/// connected component (the point farthest from the shadow).
fn continue_labels(g: &FaceGrid, values: &[Vec<C64>], dist: &[f64]) -> Continuation {
    let n = g.points.len();
    let index: HashMap<(usize, usize), usize> = g.lattice.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let mut perms: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut parent = vec![None; n];
    let mut seen = vec![false; n];
    let mut anchors = Vec::new();
    let (mut max_jump, mut min_sep) = (0.0f64, f64::INFINITY);
    loop {
        let Some(a) = (0..n).filter(|&i| !seen[i]).max_by(|&i, &j| dist[i].total_cmp(&dist[j]).then(j.cmp(&i))) else {
            break;
        };
        anchors.push(a);
        let mut order: Vec<usize> = (0..values[a].len()).collect();
        order.sort_by(|&x, &y| {
            let (p, q) = (values[a][x], values[a][y]);
            (p.re, p.im).partial_cmp(&(q.re, q.im)).unwrap_or(std::cmp::Ordering::Equal)
        });
        perms[a] = order;
        seen[a] = true;
        let mut queue = VecDeque::from([a]);
        while let Some(p) = queue.pop_front() {
            let labeled: Vec<C64> = perms[p].iter().map(|&i| values[p][i]).collect();
            for x in 0..labeled.len() {
                for y in x + 1..labeled.len() {
                    min_sep = min_sep.min((labeled[x] - labeled[y]).norm());
                }
            }
            let (lx, ly) = g.lattice[p];
            let mut nbrs = vec![(lx + 1, ly), (lx, ly + 1)];
            if lx > 0 {
                nbrs.push((lx - 1, ly));
            }
            if ly > 0 {
                nbrs.push((lx, ly - 1));
            }
            for l in nbrs {
                let Some(&c) = index.get(&l) else { continue };
                if seen[c] {
                    continue;
                }
                seen[c] = true;
                parent[c] = Some(p);
                let perm = best_match(&labeled, &values[c]);
                for (h, &i) in perm.iter().enumerate() {
                    max_jump = max_jump.max((values[c][i] - labeled[h]).norm());
                }
                perms[c] = perm;
                queue.push_back(c);
            }
        }
    }
    Continuation {
        parent,
        anchors,
        perms,
        max_jump,
        min_separation: min_sep,
    }
}

/// Shared per-face computation: sheet count, moment checks, labeled
/// primary roots, and optionally branch values of extra coordinates.
struct FaceData {
    winding: i64,
    sheets: usize,
    sign: i64,
    anchor: Option<C64>,
    grid: Vec<C64>,
    step: f64,
    /// `[g][h]` labeled primary values.
    primary: Vec<Vec<C64>>,
    /// `[g][h][a]` values of coordinate `js[a]`.
    coords: Vec<Vec<Vec<C64>>>,
    parent: Vec<Option<usize>>,
    n0_deviation: f64,
    consistency: f64,
    max_jump: f64,
    min_separation: f64,
    moment_fit_residual: Option<f64>,
}

fn elementary(moments: &[C64], sign: f64, s: usize) -> (Vec<C64>, f64) {
    let p: Vec<C64> = moments.iter().map(|v| v * sign).collect();
    let scale = p[1..].iter().map(|v| v.norm()).fold(0.0, f64::max);
    (newton_identities(&p, s), scale)
}

/// Values per sheet from clustered primary roots and mixed moments.
fn vandermonde(a: &[C64], mixed: &[C64]) -> Result<Vec<C64>> {
    let scale = a.iter().map(|v| v.norm()).fold(1.0, f64::max);
    let mut reps: Vec<(C64, f64)> = Vec::new();
    let mut which = Vec::with_capacity(a.len());
    for &v in a {
        match reps.iter().position(|(r, _)| (r - v).norm() <= 1e-7 * scale) {
            Some(i) => {
                reps[i].1 += 1.0;
                which.push(i);
            }
            None => {
                which.push(reps.len());
                reps.push((v, 1.0));
            }
        }
    }
    let c = reps.len();
    let mat = DMatrix::from_fn(c, c, |s, i| reps[i].0.powu(s as u32) * reps[i].1);
    let rhs = DVector::from_iterator(c, mixed[..c].iter().copied());
    let x = mat
        .lu()
        .solve(&rhs)
        .ok_or_else(|| CurrentError::stage("assemble", "singular Vandermonde system in sheet association"))?;
    Ok(which.iter().map(|&i| x[i]).collect())
}

#[allow(clippy::too_many_arguments)]
fn solve_face(
    q: &CycleQuadrature,
    arr: &PlanarArrangement,
    face: usize,
    g: &FaceGrid,
    lambda: &[C64],
    js: &[usize],
    o: &BoundaryOptions,
) -> Result<FaceData> {
    let info = &arr.faces[face];
    let mut data = FaceData {
        winding: info.winding,
        sheets: info.winding.unsigned_abs() as usize,
        sign: if info.winding < 0 { -1 } else { 1 },
        anchor: None,
        grid: g.points.clone(),
        step: g.step,
        primary: vec![Vec::new(); g.points.len()],
        coords: vec![Vec::new(); g.points.len()],
        parent: vec![None; g.points.len()],
        n0_deviation: 0.0,
        consistency: 0.0,
        max_jump: 0.0,
        min_separation: f64::INFINITY,
        moment_fit_residual: None,
    };
    if g.points.is_empty() {
        return Ok(data);
    }
    let m_sheets = data.sheets;
    let s_max = o.smax.max(m_sheets + 1);
    let bundles: Vec<_> = g
        .points
        .par_iter()
        .map(|&z| q.all_moments(lambda, js, z, s_max, m_sheets))
        .collect();
    // sheet count from N_0
    let n0 = bundles.iter().map(|b| b.primary[0]).collect::<Vec<_>>();
    let n = n0[0].re.round();
    data.n0_deviation = n0.iter().map(|v| (v - C64::new(n, 0.0)).norm()).fold(0.0, f64::max);
    if data.n0_deviation > o.integrality_tol || n as i64 != info.winding {
        return Err(CurrentError::stage(
            "moment_condition",
            format!(
                "face {face}: N_0 deviates from the integer {n} by {:.2e} (winding {})",
                data.n0_deviation, info.winding
            ),
        ));
    }
    if info.unbounded && n != 0.0 {
        return Err(CurrentError::stage("moment_condition", "unbounded face carries sheets"));
    }
    let sign = data.sign as f64;
    // e_d must vanish beyond the sheet count, for the primary and each coordinate
    let mut elem = Vec::with_capacity(bundles.len());
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for b in &bundles {
        let (e, sc) = elementary(&b.primary, sign, s_max);
        scale = scale.max(sc);
        worst = worst.max(e[m_sheets + 1..].iter().map(|v| v.norm()).fold(0.0, f64::max));
        for pc in &b.per_coord {
            let (ec, scc) = elementary(pc, sign, s_max);
            scale = scale.max(scc);
            worst = worst.max(ec[m_sheets + 1..].iter().map(|v| v.norm()).fold(0.0, f64::max));
        }
        elem.push(e);
    }
    data.consistency = worst / (1.0 + scale);
    if data.consistency > o.moment_tol {
        return Err(CurrentError::stage(
            "moment_condition",
            format!(
                "face {face}: elementary symmetric functions beyond degree {m_sheets} reach {:.2e}; no holomorphic chain",
                data.consistency
            ),
        ));
    }
    if g.points.len() >= 3 {
        let pts: Vec<Vec<C64>> = g.points.iter().map(|&z| vec![z]).collect();
        let vals: Vec<C64> = bundles.iter().map(|b| b.primary[1]).collect();
        if let Ok(fit) = fit_holomorphic(&pts, &vals, o.max_degree, 1e-8) {
            data.moment_fit_residual = Some(fit.residual);
        }
    }
    if m_sheets == 0 {
        return Ok(data);
    }
    // primary roots of W^m - e_1 W^{m-1} + ... + (-1)^m e_m
    let raw: Vec<Vec<C64>> = elem
        .iter()
        .map(|e| {
            let mut c = vec![C64::new(0.0, 0.0); m_sheets + 1];
            for d in 0..=m_sheets {
                let sgn = if d % 2 == 0 { 1.0 } else { -1.0 };
                c[m_sheets - d] = e[d] * sgn;
            }
            roots(&c)
        })
        .collect::<Result<_>>()?;
    let dist: Vec<f64> = g.points.iter().map(|&z| shadow_distance(&arr.curves, z)).collect();
    let cont = continue_labels(g, &raw, &dist);
    data.anchor = cont.anchors.first().map(|&a| g.points[a]);
    data.parent = cont.parent;
    data.max_jump = cont.max_jump;
    data.min_separation = cont.min_separation;
    for (gi, perm) in cont.perms.iter().enumerate() {
        data.primary[gi] = perm.iter().map(|&i| raw[gi][i]).collect();
    }
    if !js.is_empty() {
        for (gi, b) in bundles.iter().enumerate() {
            let mut per_sheet = vec![vec![C64::new(0.0, 0.0); js.len()]; m_sheets];
            for a in 0..js.len() {
                let mixed: Vec<C64> = b.mixed[a].iter().map(|v| v * sign).collect();
                let vals = vandermonde(&data.primary[gi], &mixed)?;
                for (h, v) in vals.into_iter().enumerate() {
                    per_sheet[h][a] = v;
                }
            }
            data.coords[gi] = per_sheet;
        }
    }
    Ok(data)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalarFace {
    pub face: usize,
    pub winding: i64,
    pub sheets: usize,
    pub sign: i64,
    pub unbounded: bool,
    pub anchor: Option<C64>,
    pub grid: Vec<C64>,
    /// `[g][h]`: branch `h` of the coordinate at grid point `g`.
    pub branches: Vec<Vec<C64>>,
    /// Continuation tree over the grid.
    pub parent: Vec<Option<usize>>,
    pub step: f64,
    pub n0_deviation: f64,
    /// Largest `|e_d|`, `d > sheets`, relative to the power-sum scale.
    pub consistency: f64,
    /// Largest branch change along a tree edge.
    pub max_jump: f64,
    pub min_separation: f64,
    /// Holomorphic-fit residual of `N_1` over the face grid.
    pub moment_fit_residual: Option<f64>,
}

impl ScalarFace {
    /// Labels stay put when no tree edge moves a branch by half the
    /// smallest gap between branches.
    pub fn continuous(&self) -> bool {
        self.sheets < 2 || self.max_jump < 0.5 * self.min_separation
    }
}

#[derive(Clone, Debug)]
pub struct ScalarSolution {
    pub coord: usize,
    pub validation: TransversalityReport,
    pub arrangement: PlanarArrangement,
    pub faces: Vec<ScalarFace>,
}

/// Per-coordinate solve: sheet counts, moment checks and continued branch
/// values of `w_j` on every face.
pub fn solve_scalar(m: &RectifiableCurrent, j: usize, o: &BoundaryOptions) -> Result<ScalarSolution> {
    if j == 0 || j >= m.ambient.n {
        return Err(CurrentError::IndexOutOfRange {
            index: j,
            n: m.ambient.n,
        });
    }
    let validation = require_valid(m, o)?;
    let arr = build_arrangement(m, o)?;
    let q = CycleQuadrature::new(m, o.quad_order, o.panels, o.samples, Some(arr.band))?;
    let grids = face_grids(&arr, o.grid);
    let mut lambda = vec![C64::new(0.0, 0.0); m.ambient.n];
    lambda[j] = C64::new(1.0, 0.0);
    let mut faces = Vec::with_capacity(arr.faces.len());
    for (f, g) in grids.iter().enumerate() {
        let d = solve_face(&q, &arr, f, g, &lambda, &[], o)?;
        faces.push(ScalarFace {
            face: f,
            winding: d.winding,
            sheets: d.sheets,
            sign: d.sign,
            unbounded: arr.faces[f].unbounded,
            anchor: d.anchor,
            grid: d.grid,
            branches: d.primary,
            parent: d.parent,
            step: d.step,
            n0_deviation: d.n0_deviation,
            consistency: d.consistency,
            max_jump: d.max_jump,
            min_separation: d.min_separation,
            moment_fit_residual: d.moment_fit_residual,
        });
    }
    Ok(ScalarSolution {
        coord: j,
        validation,
        arrangement: arr,
        faces,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainFace {
    pub face: usize,
    pub winding: i64,
    pub sheets: usize,
    pub sign: i64,
    pub unbounded: bool,
    pub anchor: Option<C64>,
    pub grid: Vec<C64>,
    /// `[g][h][j]`, `j = 0..n_trunc`, coordinate 0 being `z` itself.
    pub branches: Vec<Vec<Vec<C64>>>,
    /// `[h][j]` fitted polynomials in `z`.
    pub fits: Vec<Vec<ComplexPoly>>,
    pub fit_residual: f64,
    pub n0_deviation: f64,
    pub consistency: f64,
    pub max_jump: f64,
    pub min_separation: f64,
}

#[derive(Clone, Debug)]
pub struct ChainSolution {
    pub n_trunc: usize,
    pub lambda: Vec<C64>,
    pub validation: TransversalityReport,
    pub arrangement: PlanarArrangement,
    pub faces: Vec<ChainFace>,
    /// `sup_M (sum_{j >= n_trunc} |w_j|^2)^{1/2}`, including any declared tail.
    pub tail_bound: f64,
    pub tail_bound_sq: f64,
    pub current: RectifiableCurrent,
    pub mass: MassReport,
    pub wirtinger_sum: f64,
    pub graph_sheets: usize,
}

fn identity_poly() -> ComplexPoly {
    ComplexPoly {
        center: vec![C64::new(0.0, 0.0)],
        scale: 1.0,
        terms: vec![(vec![1], C64::new(1.0, 0.0))],
    }
}

impl ChainSolution {
    /// Fitted sheet values `[h][j]` at `z`, with the face they come from.
    pub fn branches_at(&self, z: C64) -> Option<(&ChainFace, Vec<Vec<C64>>)> {
        let f = self.arrangement.face_at(z)?;
        let face = self.faces.iter().find(|c| c.face == f)?;
        let vals = face
            .fits
            .iter()
            .map(|row| row.iter().map(|p| p.eval(&[z])).collect())
            .collect();
        Some((face, vals))
    }

    /// Sup over this solution's grid of the distance to `other`'s sheets,
    /// minimized over sheet matchings; coordinates are zero-padded. Points
    /// lying in faces of different winding are skipped.
    pub fn sup_distance(&self, other: &ChainSolution) -> f64 {
        let mut sup: f64 = 0.0;
        for face in &self.faces {
            for &z in &face.grid {
                let Some((_, a)) = self.branches_at(z) else { continue };
                let Some((of, b)) = other.branches_at(z) else { continue };
                // points swept by a moving shadow are not comparable
                if of.winding != face.winding {
                    continue;
                }
                if a.is_empty() {
                    continue;
                }
                let dist = |x: &Vec<C64>, y: &Vec<C64>| {
                    let n = x.len().max(y.len());
                    let zero = C64::new(0.0, 0.0);
                    (0..n)
                        .map(|j| (x.get(j).copied().unwrap_or(zero) - y.get(j).copied().unwrap_or(zero)).norm_sqr())
                        .sum::<f64>()
                        .sqrt()
                };
                let m = a.len();
                let mut best = f64::INFINITY;
                let mut perm: Vec<usize> = (0..m).collect();
                permutations(&mut perm, 0, &mut |p| {
                    let d = (0..m).map(|h| dist(&a[h], &b[p[h]])).fold(0.0, f64::max);
                    best = best.min(d);
                });
                sup = sup.max(best);
            }
        }
        sup
    }
}

fn permutations(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permutations(p, k + 1, f);
        p.swap(k, i);
    }
}

struct ShadowArc {
    cell: usize,
    ua: f64,
    ub: f64,
    left: usize,
    right: usize,
}

fn shadow_arcs(m: &RectifiableCurrent, arr: &PlanarArrangement, val: &TransversalityReport) -> Result<Vec<ShadowArc>> {
    let mut arcs = Vec::new();
    for (ci, cell) in m.cells.iter().enumerate() {
        let mut cuts = vec![0.0, 1.0];
        for c in &val.crossings {
            for s in 0..2 {
                if c.cells[s] == ci {
                    cuts.push(c.params[s]);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        for w in cuts.windows(2) {
            let (ua, ub) = (w[0], w[1]);
            let (z, dz) = shadow_jet(m, ci, 0.5 * (ua + ub));
            let nrm = C64::new(0.0, 1.0) * dz / dz.norm();
            let mut sides = None;
            for f in [1.0, 2.0, 3.0, 5.0] {
                let d = f * (arr.band + 1.5 * arr.pixel);
                if let (Some(l), Some(r)) = (arr.face_at(z + nrm * d), arr.face_at(z - nrm * d)) {
                    sides = Some((l, r));
                    break;
                }
            }
            let (left, right) = sides.ok_or_else(|| {
                CurrentError::stage("assemble", format!("cannot locate the faces beside arc {ua:.4}..{ub:.4} of cell {ci}"))
            })?;
            let jump = arr.faces[left].winding - arr.faces[right].winding;
            if jump != cell.multiplicity {
                return Err(CurrentError::stage(
                    "assemble",
                    format!("arc {ua:.4}..{ub:.4} of cell {ci} overlaps other shadow arcs (winding jump {jump})"),
                ));
            }
            arcs.push(ShadowArc {
                cell: ci,
                ua,
                ub,
                left,
                right,
            });
        }
    }
    Ok(arcs)
}

/// Cone cells `c + r (gamma(s) - c)` over each boundary arc of each face,
/// lifted by the fitted sheets. The signed cones sum to the face.
fn cone_cells(m: &RectifiableCurrent, arcs: &[ShadowArc], faces: &[ChainFace]) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    for face in faces.iter().filter(|f| f.sheets > 0) {
        let c = Expr::c(face.anchor.unwrap_or(face.grid[0]));
        for arc in arcs {
            let orient = if arc.left == face.face {
                1
            } else if arc.right == face.face {
                -1
            } else {
                continue;
            };
            let u = Expr::real(arc.ua) + Expr::real(arc.ub - arc.ua) * Expr::var(1);
            let gamma = m.cells[arc.cell].param.outputs()[0].substitute_vars(&[u]);
            let z = &c + &(Expr::var(0) * (gamma - &c));
            for sheet in &face.fits {
                let mut coords = vec![z.clone()];
                coords.extend(sheet[1..].iter().map(|p| p.to_expr(std::slice::from_ref(&z))));
                cells.push(Cell::from_exprs(2, coords, face.sign * orient)?);
            }
        }
    }
    Ok(cells)
}

/// Sup over shadow samples of the norm of coordinates `n_trunc..`.
fn sampled_tail(m: &RectifiableCurrent, n_trunc: usize, samples: usize) -> f64 {
    let mut sup: f64 = 0.0;
    for cell in &m.cells {
        for i in 0..=samples {
            let v = cell.param.eval(&[i as f64 / samples as f64]);
            sup = sup.max(v[n_trunc.min(v.len())..].iter().map(|x| x.norm_sqr()).sum::<f64>());
        }
    }
    sup
}

/// Holomorphic 1-chain `T` with `dT = [M]`, truncated to the first
/// `n_trunc` coordinates.
pub fn assemble(
    m: &RectifiableCurrent,
    n_trunc: usize,
    tail: Option<&TailCertificate>,
    o: &BoundaryOptions,
) -> Result<ChainSolution> {
    let n = m.ambient.n;
    if n_trunc < 1 || n_trunc > n {
        return Err(CurrentError::Invalid(format!("truncation {n_trunc} outside 1..={n}")));
    }
    if let Some(t) = tail {
        if t.n_trunc != n {
            return Err(CurrentError::Invalid(format!(
                "tail certificate starts after coordinate {}, cycle has {n}",
                t.n_trunc
            )));
        }
    }
    let validation = require_valid(m, o)?;
    let arr = build_arrangement(m, o)?;
    let q = CycleQuadrature::new(m, o.quad_order, o.panels, o.samples, Some(arr.band))?;
    let grids = face_grids(&arr, o.grid);
    let js: Vec<usize> = (1..n_trunc).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    let mut lambda = vec![C64::new(0.0, 0.0); n];
    for &j in &js {
        lambda[j] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    let norm = lambda.iter().map(|l| l.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        lambda.iter_mut().for_each(|l| *l /= norm);
    }
    let mut faces = Vec::with_capacity(grids.len());
    for (f, g) in grids.iter().enumerate() {
        let d = solve_face(&q, &arr, f, g, &lambda, &js, o)?;
        let branches: Vec<Vec<Vec<C64>>> = d
            .grid
            .iter()
            .zip(&d.coords)
            .map(|(&z, sheets)| {
                sheets
                    .iter()
                    .map(|w| std::iter::once(z).chain(w.iter().copied()).collect())
                    .collect()
            })
            .collect();
        let mut fits = Vec::with_capacity(d.sheets);
        let mut fit_residual: f64 = 0.0;
        if d.sheets > 0 {
            if d.grid.len() < 3 {
                return Err(CurrentError::stage("assemble", format!("face {f} has too few grid points")));
            }
            let pts: Vec<Vec<C64>> = d.grid.iter().map(|&z| vec![z]).collect();
            for h in 0..d.sheets {
                let mut row = vec![identity_poly()];
                for a in 0..js.len() {
                    let vals: Vec<C64> = d.coords.iter().map(|s| s[h][a]).collect();
                    let fit = fit_holomorphic(&pts, &vals, o.max_degree, o.fit_tol)?;
                    if !fit.holomorphic {
                        return Err(CurrentError::stage(
                            "assemble",
                            format!(
                                "sheet {h} of coordinate {} on face {f} is not a single-valued polynomial (residual {:.2e})",
                                js[a], fit.residual
                            ),
                        ));
                    }
                    fit_residual = fit_residual.max(fit.residual);
                    row.push(fit.poly);
                }
                fits.push(row);
            }
        }
        faces.push(ChainFace {
            face: f,
            winding: d.winding,
            sheets: d.sheets,
            sign: d.sign,
            unbounded: arr.faces[f].unbounded,
            anchor: d.anchor,
            grid: d.grid,
            branches,
            fits,
            fit_residual,
            n0_deviation: d.n0_deviation,
            consistency: d.consistency,
            max_jump: d.max_jump,
            min_separation: d.min_separation,
        });
    }
    let arcs = shadow_arcs(m, &arr, &validation)?;
    let cells = cone_cells(m, &arcs, &faces)?;
    let current = RectifiableCurrent::from_cells(n_trunc, 2, cells)?;
    let quad = QuadOptions::default();
    let mass = current.mass(&quad);
    let wirtinger_sum = if current.cells.is_empty() {
        0.0
    } else {
        wirtinger_mass(&current, 1, 0.0, &quad)?.coordinate_sum
    };
    let sampled = sampled_tail(m, n_trunc, o.samples);
    let declared = tail.map_or(0.0, |t| t.sup_l2 * t.sup_l2);
    let tail_bound_sq = sampled + declared;
    Ok(ChainSolution {
        n_trunc,
        lambda,
        validation,
        graph_sheets: faces.iter().map(|f| f.sheets).sum(),
        arrangement: arr,
        faces,
        tail_bound: tail_bound_sq.sqrt(),
        tail_bound_sq,
        current,
        mass,
        wirtinger_sum,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryResidual {
    pub max_abs: f64,
    /// `max_abs / (1 + mass(M))`.
    pub normalized: f64,
    pub scale: f64,
    pub probes: usize,
    pub order: usize,
    pub passed: bool,
}

/// `max |T(1, f, pi) - M(f, pi)|` over real-linear bump probes.
pub fn verify_boundary(
    t: &dyn Current,
    m: &RectifiableCurrent,
    probes: usize,
    seed: u64,
    q: &QuadOptions,
) -> Result<BoundaryResidual> {
    if t.dim() != m.dim + 1 {
        return Err(CurrentError::DimensionMismatch {
            expected: m.dim + 1,
            got: t.dim(),
        });
    }
    if t.ambient_dim() != m.ambient.n {
        return Err(CurrentError::DimensionMismatch {
            expected: m.ambient.n,
            got: t.ambient_dim(),
        });
    }
    let forms = real_probe_forms(m.dim, probes, &m.support_bbox(), seed);
    let bd = Boundary { inner: t };
    let mut max_abs: f64 = 0.0;
    for f in &forms {
        let d = bd.evaluate(f, q)? - m.evaluate(f, q)?;
        max_abs = max_abs.max(d.norm());
    }
    let scale = 1.0 + m.mass(q).total;
    let normalized = max_abs / scale;
    Ok(BoundaryResidual {
        max_abs,
        normalized,
        scale,
        probes,
        order: q.order,
        passed: normalized < 1e-6,
    })
}

/// Warns when `t` carries more mass than the assembled graphs.
pub fn mass_minimality_warning(t: &RectifiableCurrent, sol: &ChainSolution, q: &QuadOptions) -> Option<String> {
    let mt = t.mass(q).total;
    let ms = sol.mass.total;
    (mt > ms * (1.0 + 1e-6) + 1e-12).then(|| {
        format!("candidate mass {mt:.8} exceeds the assembled graph mass {ms:.8}; uniqueness is not certified")
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityRow {
    pub s0: f64,
    pub s1: f64,
    pub distance: Option<f64>,
    pub ratio: Option<f64>,
    pub split: bool,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub rows: Vec<ContinuityRow>,
    /// Parameter ranges with a common arrangement topology.
    pub segments: Vec<(f64, f64)>,
    /// Largest `distance / |ds|` within segments.
    pub constant: f64,
}

fn topology(sol: &ChainSolution) -> Vec<(i64, usize, bool)> {
    let mut t: Vec<_> = sol.faces.iter().map(|f| (f.winding, f.sheets, f.unbounded)).collect();
    t.sort_unstable();
    t
}

/// Sup-distance between consecutive solutions of a family `M_s`, split
/// where the arrangement topology changes or a member fails validation.
pub fn family_continuity_check(
    family: &[(f64, RectifiableCurrent)],
    n_trunc: usize,
    o: &BoundaryOptions,
) -> Result<ContinuityReport> {
    if family.is_empty() {
        return Err(CurrentError::Invalid("empty family".into()));
    }
    let sols: Vec<std::result::Result<ChainSolution, String>> = family
        .iter()
        .map(|(_, m)| assemble(m, n_trunc, None, o).map_err(|e| e.to_string()))
        .collect();
    let mut rows = Vec::new();
    let mut segments = Vec::new();
    let mut seg_start: Option<f64> = sols[0].is_ok().then_some(family[0].0);
    let mut constant: f64 = 0.0;
    for i in 0..family.len() - 1 {
        let (s0, s1) = (family[i].0, family[i + 1].0);
        let row = match (&sols[i], &sols[i + 1]) {
            (Ok(a), Ok(b)) if topology(a) == topology(b) => {
                let d = a.sup_distance(b).max(b.sup_distance(a));
                let ratio = d / (s1 - s0).abs().max(1e-300);
                constant = constant.max(ratio);
                ContinuityRow {
                    s0,
                    s1,
                    distance: Some(d),
                    ratio: Some(ratio),
                    split: false,
                    note: String::new(),
                }
            }
            (Ok(_), Ok(_)) => ContinuityRow {
                s0,
                s1,
                distance: None,
                ratio: None,
                split: true,
                note: "arrangement topology changes".into(),
            },
            (a, b) => ContinuityRow {
                s0,
                s1,
                distance: None,
                ratio: None,
                split: true,
                note: [a, b]
                    .iter()
                    .filter_map(|r| r.as_ref().err().cloned())
                    .collect::<Vec<_>>()
                    .join("; "),
            },
        };
        if row.split {
            if let Some(st) = seg_start.take() {
                segments.push((st, s0));
            }
            if sols[i + 1].is_ok() {
                seg_start = Some(s1);
            }
        }
        rows.push(row);
    }
    if let Some(st) = seg_start {
        segments.push((st, family[family.len() - 1].0));
    }
    Ok(ContinuityReport {
        rows,
        segments,
        constant,
    })
}
