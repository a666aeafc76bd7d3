//! Recovery of the analytic set carrying a positive closed `(k,k)` current.
//!
//! For each admissible coordinate split `(I, j)` the fiber power sums of
//! `w_j` over base points in `C^I` are turned into the elementary symmetric
//! functions of the sheets by Newton's identities and fitted by holomorphic
//! polynomials; the fits give monic `P_j(z, W)` vanishing on the support.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex_ops::{classify_bidimension, is_positive, real_probe_forms, ProbeOptions};
use crate::current::{Boundary, Current, MetricForm, QuadOptions, RectifiableCurrent};
use crate::error::{CurrentError, Result};
use crate::expr::Expr;
use crate::field::C64;
use crate::hilbert::CoordinateProjection;
use crate::poly::{chebyshev_grid, fit_holomorphic, newton_identities, ComplexPoly};
use crate::slicing::{slice_points_regular, Slice, SliceOptions};

#[derive(Clone, Debug)]
pub struct KingOptions {
    pub max_degree: usize,
    /// Relative tolerance of the holomorphic fits.
    pub fit_tol: f64,
    /// Tiles per real base axis; `None` uses 5 for curves and a single
    /// shrinking box otherwise.
    pub tiles_per_axis: Option<usize>,
    /// Chebyshev nodes per real axis of each tile.
    pub nodes_per_axis: Option<usize>,
    pub sheet_points: usize,
    pub support_samples: usize,
    /// Closedness tolerance relative to `1 + mass`.
    pub closed_tol: f64,
    pub check_preconditions: bool,
    pub slice: SliceOptions,
    pub probe: ProbeOptions,
    pub seed: u64,
}

impl Default for KingOptions {
    fn default() -> Self {
        KingOptions {
            max_degree: 12,
            fit_tol: 1e-6,
            tiles_per_axis: None,
            nodes_per_axis: None,
            sheet_points: 10,
            support_samples: 200,
            closed_tol: 1e-6,
            check_preconditions: true,
            slice: SliceOptions::default(),
            probe: ProbeOptions {
                count: 8,
                ..Default::default()
            },
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PowerSumTable {
    pub i: Vec<usize>,
    pub j: usize,
    pub grid: Vec<Vec<C64>>,
    /// `values[s][g] = sum theta w_j^s` over the fiber above `grid[g]`.
    pub values: Vec<Vec<C64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchPolynomial {
    pub i: Vec<usize>,
    pub j: usize,
    pub degree: usize,
    /// `coeffs[d]` multiplies `W^{degree - d}`; `coeffs[0] = 1`.
    pub coeffs: Vec<ComplexPoly>,
    pub fit_residual: f64,
    pub fit_degrees: Vec<usize>,
}

impl BranchPolynomial {
    pub fn eval(&self, z: &[C64], w: C64) -> C64 {
        self.coeffs.iter().fold(C64::new(0.0, 0.0), |acc, c| acc * w + c.eval(z))
    }

    /// Plain-monomial coefficients of each `coeffs[d]`.
    pub fn coefficient_table(&self, drop: f64) -> Vec<BTreeMap<Vec<usize>, C64>> {
        self.coeffs.iter().map(|c| c.monomials(drop)).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub i: Vec<usize>,
    pub sheet_count: i64,
    pub tiles_total: usize,
    pub tiles_admissible: usize,
    pub primary_center: Vec<C64>,
    pub primary_half: f64,
    pub polys: Vec<BranchPolynomial>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub cells: Vec<usize>,
    pub multiplicity: i64,
    /// Atoms per regular fiber.
    pub sheets: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VarietyReconstruction {
    pub k: usize,
    pub projections: Vec<ProjectionReport>,
    pub support_residual: f64,
    pub coefficient_scale: f64,
    pub chain_multiplicities: Vec<Component>,
    pub flags: Vec<String>,
}

fn stage(name: &str, msg: impl Into<String>) -> CurrentError {
    CurrentError::stage(name, msg)
}

/// Deterministic sample points on the cells of `s`, spread round-robin.
fn sample_points(s: &RectifiableCurrent, count: usize, seed: u64) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|n| {
            let cell = &s.cells[n % s.cells.len()];
            let u: Vec<f64> = (0..cell.k).map(|_| rng.gen_range(0.02..0.98)).collect();
            cell.param.eval(&u)
        })
        .collect()
}

fn check_split(s: &RectifiableCurrent, i: &[usize]) -> Result<usize> {
    let k = s.dim / 2;
    if s.dim % 2 != 0 || i.len() != k {
        return Err(CurrentError::DimensionMismatch { expected: s.dim, got: 2 * i.len() });
    }
    CoordinateProjection::new(i.to_vec()).check(s.ambient.n)?;
    Ok(k)
}

/// `m_I`: the common slice mass over random regular base points.
pub fn sheet_count(s: &RectifiableCurrent, i: &[usize], o: &KingOptions) -> Result<i64> {
    check_split(s, i)?;
    if s.cells.is_empty() {
        return Ok(0);
    }
    let proj = CoordinateProjection::new(i.to_vec());
    let counts = sample_points(s, o.sheet_points, o.seed ^ 0x5eed)
        .par_iter()
        .map(|x| {
            let base: Vec<C64> = i.iter().map(|&a| x[a]).collect();
            slice_points_regular(s, &proj, &base, &o.slice).map(|sl| sl.total())
        })
        .collect::<Result<Vec<_>>>()?;
    if counts.iter().any(|&c| c != counts[0]) {
        return Err(stage("sheet_count", format!("I = {i:?}: slice totals disagree {counts:?}")));
    }
    Ok(counts[0])
}

fn table_from_slices(slices: &[Slice], i: &[usize], j: usize, s_max: usize) -> PowerSumTable {
    let grid = slices.iter().map(|s| s.base.clone()).collect();
    let values = (0..=s_max)
        .map(|p| {
            slices
                .iter()
                .map(|sl| sl.atoms.iter().map(|a| a.point[j].powu(p as u32) * a.multiplicity as f64).sum())
                .collect()
        })
        .collect();
    PowerSumTable {
        i: i.to_vec(),
        j,
        grid,
        values,
    }
}

/// Fiber power sums of `w_j` over `grid`; perturbed base points replace
/// critical ones in the returned grid.
pub fn power_sums(s: &RectifiableCurrent, i: &[usize], j: usize, grid: &[Vec<C64>], s_max: usize, o: &SliceOptions) -> Result<PowerSumTable> {
    check_split(s, i)?;
    if j >= s.ambient.n || i.contains(&j) {
        return Err(CurrentError::Invalid(format!("fiber coordinate {j} must lie outside {i:?}")));
    }
    let proj = CoordinateProjection::new(i.to_vec());
    let slices = grid
        .par_iter()
        .map(|x| slice_points_regular(s, &proj, x, o))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| stage("power_sums", e.to_string()))?;
    Ok(table_from_slices(&slices, i, j, s_max))
}

/// Elementary symmetric values `e_0..=e_m` at each grid point.
pub fn newton_to_coeffs(table: &PowerSumTable) -> Result<Vec<Vec<C64>>> {
    let m0 = table.values[0].first().map(|v| v.re).unwrap_or(0.0);
    let m = m0.round();
    for v in &table.values[0] {
        if (v.re - m).abs() > 1e-6 || v.im.abs() > 1e-6 || m < 0.0 {
            return Err(stage("newton", format!("slice mass {v} is not the constant integer {m}")));
        }
    }
    let m = m as usize;
    if table.values.len() <= m {
        return Err(stage("newton", format!("need power sums up to {m}, have {}", table.values.len() - 1)));
    }
    Ok((0..table.grid.len())
        .map(|g| {
            let p: Vec<C64> = (0..=m).map(|s| table.values[s][g]).collect();
            newton_identities(&p, m)
        })
        .collect())
}

struct Tile {
    center: Vec<C64>,
    half: f64,
    slices: Vec<Slice>,
}

fn base_bbox(s: &RectifiableCurrent, i: &[usize]) -> Vec<(f64, f64)> {
    let bb = s.support_bbox();
    i.iter().flat_map(|&a| [(bb[2 * a].lo, bb[2 * a].hi), (bb[2 * a + 1].lo, bb[2 * a + 1].hi)]).collect()
}

fn tile_slices(s: &RectifiableCurrent, i: &[usize], center: &[C64], half: f64, nodes: usize, o: &SliceOptions) -> Option<Vec<Slice>> {
    let proj = CoordinateProjection::new(i.to_vec());
    chebyshev_grid(center, half, nodes)
        .par_iter()
        .map(|x| slice_points_regular(s, &proj, x, o).ok())
        .collect()
}

/// Admissible tiles for the split `I`: every grid fiber regular with slice
/// mass `m`.
fn admissible_tiles(s: &RectifiableCurrent, i: &[usize], m: i64, o: &KingOptions) -> (usize, Vec<Tile>) {
    let k = i.len();
    // even counts keep nodes off the tile's middle lines
    let nodes = o.nodes_per_axis.unwrap_or(match k {
        1 => 8,
        2 => 4,
        _ => 3,
    });
    let ok = |sl: &Option<Vec<Slice>>| sl.as_ref().is_some_and(|v| v.iter().all(|x| x.total() == m));
    let bb = base_bbox(s, i);
    let tiles = o.tiles_per_axis.unwrap_or(if k == 1 { 5 } else { 0 });
    let mut out = Vec::new();
    let mut total = 0;
    if tiles > 0 {
        let h = bb.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max) / (2 * tiles) as f64;
        let mid: Vec<f64> = bb.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
        total = tiles.pow(2 * k as u32);
        for t in 0..total {
            let off: Vec<f64> = (0..2 * k)
                .map(|a| mid[a] + (2.0 * ((t / tiles.pow(a as u32)) % tiles) as f64 - (tiles - 1) as f64) * h)
                .collect();
            let center: Vec<C64> = off.chunks(2).map(|c| C64::new(c[0], c[1])).collect();
            let sl = tile_slices(s, i, &center, h, nodes, &o.slice);
            if ok(&sl) {
                out.push(Tile {
                    center,
                    half: h,
                    slices: sl.unwrap(),
                });
            }
        }
    }
    if out.is_empty() {
        // shrink a box around the projection of an interior sample
        let x = &s.cells[0].param.eval(&vec![0.5; s.cells[0].k]);
        let center: Vec<C64> = i.iter().map(|&a| x[a]).collect();
        let mut h = bb.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max) / 8.0;
        for _ in 0..5 {
            total += 1;
            let sl = tile_slices(s, i, &center, h, nodes, &o.slice);
            if ok(&sl) {
                out.push(Tile {
                    center,
                    half: h,
                    slices: sl.unwrap(),
                });
                break;
            }
            h *= 0.5;
        }
    }
    (total, out)
}

/// `dS` on bumps supported over the tile must vanish.
fn check_closed(s: &RectifiableCurrent, i: &[usize], tile: &Tile, mass: f64, o: &KingOptions) -> Result<()> {
    let r2 = crate::expr::sum(i.iter().zip(&tile.center).map(|(&a, c)| {
        let d = Expr::z(a) - Expr::c(*c);
        (&d * d.conj()).re()
    }));
    let f = (Expr::one() - Expr::real(1.0 / (tile.half * tile.half)) * r2).pos().powi(8);
    let bb = s.support_bbox();
    let q = QuadOptions { order: 16, panels: 16 };
    for w in real_probe_forms(s.dim - 1, 2, &bb, o.seed ^ 0xc105ed) {
        let v = Boundary { inner: s }.evaluate(&MetricForm::new(f.clone(), w.pis), &q)?;
        if v.norm() > o.closed_tol * (1.0 + mass) {
            return Err(stage(
                "closedness",
                format!("I = {i:?}: boundary probe {:.3e} over the tile at {:?}", v.norm(), tile.center),
            ));
        }
    }
    Ok(())
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for a in start..n {
            cur.push(a);
            go(a + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn candidate_splits(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    if n <= 8 {
        return combinations(n, k);
    }
    let mut out = vec![(0..k).collect::<Vec<_>>()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.len() < 11 {
        let mut idx: Vec<usize> = (0..n).collect();
        for a in 0..k {
            let b = rng.gen_range(a..n);
            idx.swap(a, b);
        }
        let mut pick = idx[..k].to_vec();
        pick.sort_unstable();
        if !out.contains(&pick) {
            out.push(pick);
        }
    }
    out
}

/// Runs the full reconstruction.
pub fn assemble_variety(s: &RectifiableCurrent, o: &KingOptions) -> Result<VarietyReconstruction> {
    if s.dim % 2 != 0 || s.dim == 0 {
        return Err(stage("input", format!("need a (k,k) current, got dimension {}", s.dim)));
    }
    if s.cells.is_empty() {
        return Err(stage("input", "empty current"));
    }
    let k = s.dim / 2;
    let mass = s.mass(&QuadOptions::default()).total;
    if o.check_preconditions {
        let bd = classify_bidimension(s, k, k, &o.probe)?;
        if !bd.passed() {
            return Err(stage("bidimension", format!("not of bidimension ({k},{k}): {:?}", bd.tested_profile)));
        }
        let pos = is_positive(s, k, 3, &o.probe)?;
        if !pos.passed() {
            return Err(stage("positivity", format!("not positive: {:?}", pos.tested_profile)));
        }
    }

    let mut flags = Vec::new();
    let mut projections = Vec::new();
    let mut components: BTreeMap<usize, Component> = BTreeMap::new();
    for i in candidate_splits(s.ambient.n, k, o.seed) {
        let m = match sheet_count(s, &i, o) {
            Ok(m) if m > 0 => m,
            Ok(m) => {
                flags.push(format!("I = {i:?} skipped: sheet count {m}"));
                continue;
            }
            Err(e) => {
                flags.push(format!("I = {i:?} skipped: {e}"));
                continue;
            }
        };
        let (tiles_total, tiles) = admissible_tiles(s, &i, m, o);
        if tiles.is_empty() {
            flags.push(format!("I = {i:?} skipped: no regular base box"));
            continue;
        }
        if o.check_preconditions {
            for t in &tiles {
                check_closed(s, &i, t, mass, o)?;
            }
        }
        for t in &tiles {
            for sl in &t.slices {
                for a in &sl.atoms {
                    let e = components.entry(a.cell).or_insert(Component {
                        cells: vec![a.cell],
                        multiplicity: a.multiplicity,
                        sheets: 0,
                    });
                    if e.multiplicity != a.multiplicity {
                        return Err(stage("components", format!("cell {} carries multiplicities {} and {}", a.cell, e.multiplicity, a.multiplicity)));
                    }
                }
                let mut per_cell: BTreeMap<usize, usize> = BTreeMap::new();
                for a in &sl.atoms {
                    *per_cell.entry(a.cell).or_default() += 1;
                }
                for (c, n) in per_cell {
                    let e = components.get_mut(&c).unwrap();
                    e.sheets = e.sheets.max(n);
                }
            }
        }
        // the tile nearest the middle of the base box is reported
        let bb = base_bbox(s, &i);
        let mid: Vec<C64> = bb.chunks(2).map(|c| C64::new(0.5 * (c[0].0 + c[0].1), 0.5 * (c[1].0 + c[1].1))).collect();
        let dist = |t: &Tile| t.center.iter().zip(&mid).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
        let primary = tiles.iter().min_by(|a, b| dist(a).total_cmp(&dist(b))).unwrap();

        let mut polys = Vec::new();
        for j in (0..s.ambient.n).filter(|j| !i.contains(j)) {
            let mut reported = None;
            let mut worst: f64 = 0.0;
            for t in &tiles {
                let table = table_from_slices(&t.slices, &i, j, m as usize);
                let e = newton_to_coeffs(&table)?;
                let mut coeffs = vec![ComplexPoly::constant(k, C64::new(1.0, 0.0))];
                let mut degrees = vec![0];
                for d in 1..=m as usize {
                    let sign = if d % 2 == 1 { -1.0 } else { 1.0 };
                    let vals: Vec<C64> = e.iter().map(|ev| ev[d] * sign).collect();
                    let fit = fit_holomorphic(&table.grid, &vals, o.max_degree, o.fit_tol)?;
                    if !fit.holomorphic {
                        return Err(stage(
                            "fit_holomorphic",
                            format!(
                                "I = {i:?}, j = {j}: coefficient of W^{} is not holomorphic over the box at {:?} (residual {:.3e})",
                                m as usize - d,
                                t.center,
                                fit.residual
                            ),
                        ));
                    }
                    worst = worst.max(fit.residual);
                    degrees.push(fit.degree);
                    coeffs.push(fit.poly);
                }
                if std::ptr::eq(t, primary) {
                    reported = Some((coeffs, degrees));
                }
            }
            let (coeffs, fit_degrees) = reported.unwrap();
            polys.push(BranchPolynomial {
                i: i.clone(),
                j,
                degree: m as usize,
                coeffs,
                fit_residual: worst,
                fit_degrees,
            });
        }
        projections.push(ProjectionReport {
            i,
            sheet_count: m,
            tiles_total,
            tiles_admissible: tiles.len(),
            primary_center: primary.center.clone(),
            primary_half: primary.half,
            polys,
        });
    }
    if projections.is_empty() {
        return Err(stage("projection", format!("no admissible coordinate split: {flags:?}")));
    }

    let samples = sample_points(s, o.support_samples, o.seed ^ 0x5a3);
    let mut support_residual: f64 = 0.0;
    let mut coefficient_scale: f64 = 0.0;
    for p in &projections {
        for b in &p.polys {
            for c in &b.coeffs {
                coefficient_scale = coefficient_scale.max(c.terms.iter().map(|t| t.1.norm()).fold(0.0, f64::max));
            }
            for x in &samples {
                let z: Vec<C64> = p.i.iter().map(|&a| x[a]).collect();
                support_residual = support_residual.max(b.eval(&z, x[b.j]).norm());
            }
        }
    }
    let chain_multiplicities: Vec<Component> = components.into_values().collect();
    if let Some(c) = chain_multiplicities.iter().find(|c| c.multiplicity < 1) {
        return Err(stage("components", format!("cell {:?} has multiplicity {}", c.cells, c.multiplicity)));
    }
    Ok(VarietyReconstruction {
        k,
        projections,
        support_residual,
        coefficient_scale,
        chain_multiplicities,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits() {
        assert_eq!(combinations(4, 2).len(), 6);
        let c = candidate_splits(12, 2, 1);
        assert_eq!(c.len(), 11);
        assert_eq!(c[0], vec![0, 1]);
        assert!(c.iter().all(|v| v.len() == 2 && v[0] < v[1]));
    }
}
