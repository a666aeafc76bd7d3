//! Cauchy-transform moments of a 1-cycle over its shadow.

use std::f64::consts::PI;

use crate::current::{param_jet, RectifiableCurrent};
use crate::error::{CurrentError, Result};
use crate::field::{Dual, C64};
use crate::quadrature::composite_gl;

use super::arrangement::{check_curve, sample_shadow, shadow_distance, ShadowCurve};

/// Quadrature nodes of `M` in the shadow variable: `zeta_k`, the weighted
/// differential `theta w_k zeta'(u_k)`, and every coordinate at the node.
#[derive(Clone, Debug)]
pub struct CycleQuadrature {
    pub zeta: Vec<C64>,
    pub dzeta: Vec<C64>,
    pub coords: Vec<Vec<C64>>,
    pub order: usize,
    /// Largest panel count used on a cell.
    pub panels: usize,
    pub curves: Vec<ShadowCurve>,
    /// Moments are refused closer than this to the sampled shadow.
    pub margin: f64,
}

impl CycleQuadrature {
    /// Panels per cell are raised so that no panel is longer than twice
    /// `min_distance` (the margin when `None`).
    pub fn new(
        m: &RectifiableCurrent,
        order: usize,
        panels: usize,
        samples: usize,
        min_distance: Option<f64>,
    ) -> Result<Self> {
        check_curve(m)?;
        let curves = sample_shadow(m, samples)?;
        let spacing = curves
            .iter()
            .flat_map(|c| c.z.windows(2).map(|w| (w[1] - w[0]).norm()))
            .fold(0.0, f64::max);
        let d = min_distance.unwrap_or(2.0 * spacing).max(1e-12);
        let mut q = CycleQuadrature {
            zeta: Vec::new(),
            dzeta: Vec::new(),
            coords: Vec::new(),
            order,
            panels,
            curves,
            margin: 2.0 * spacing,
        };
        let mut used = 0;
        for (cell, curve) in m.cells.iter().zip(&q.curves) {
            let speed = curve.dz.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let np = panels.max((speed / (2.0 * d)).ceil() as usize);
            used = used.max(np);
            let (us, ws) = composite_gl(order, np);
            let tape = cell.param.tape();
            let mut scratch = Vec::new();
            let mut out = vec![Dual::<C64, 1>::constant(C64::new(0.0, 0.0)); tape.n_outputs()];
            for (&u, &w) in us.iter().zip(&ws) {
                param_jet::<1>(tape, &[u], &mut scratch, &mut out);
                q.zeta.push(out[0].v);
                q.dzeta.push(out[0].d[0] * (w * cell.multiplicity as f64));
                q.coords.push(out.iter().map(|d| d.v).collect());
            }
        }
        q.panels = used;
        Ok(q)
    }

    pub fn ambient_dim(&self) -> usize {
        self.coords.first().map_or(0, |c| c.len())
    }

    pub fn check_point(&self, z: C64) -> Result<()> {
        let d = shadow_distance(&self.curves, z);
        if d < self.margin {
            return Err(CurrentError::stage(
                "cauchy_moments",
                format!("{z} is {d:.3e} from the shadow, below the margin {:.3e}", self.margin),
            ));
        }
        Ok(())
    }

    /// `N_s(z) = (1/2 pi i) sum_k g_k^s dzeta_k / (zeta_k - z)` for
    /// `s = 0..=s_max`, with `g_k = sum_j lambda_j w_j(node k)`.
    pub fn moments_of(&self, lambda: &[C64], z: C64, s_max: usize) -> Vec<C64> {
        let mut acc = vec![C64::new(0.0, 0.0); s_max + 1];
        for k in 0..self.zeta.len() {
            let kern = self.dzeta[k] / (self.zeta[k] - z);
            let g: C64 = lambda.iter().zip(&self.coords[k]).map(|(l, w)| l * w).sum();
            let mut gp = C64::new(1.0, 0.0);
            for a in acc.iter_mut() {
                *a += gp * kern;
                gp *= g;
            }
        }
        let norm = C64::new(0.0, 2.0 * PI);
        acc.into_iter().map(|a| a / norm).collect()
    }

    /// Moments of `g = lambda . w` together with the mixed moments
    /// `(1/2 pi i) oint g^s w_j dzeta / (zeta - z)` for `s < mixed` and
    /// every coordinate `j` in `js`; also the per-coordinate moments
    /// `N^(j)_s` for `s <= s_max`.
    pub fn all_moments(
        &self,
        lambda: &[C64],
        js: &[usize],
        z: C64,
        s_max: usize,
        mixed: usize,
    ) -> MomentBundle {
        let zero = C64::new(0.0, 0.0);
        let mut primary = vec![zero; s_max + 1];
        let mut per_coord = vec![vec![zero; s_max + 1]; js.len()];
        let mut mix = vec![vec![zero; mixed]; js.len()];
        let mut gp = vec![zero; s_max.max(mixed) + 1];
        for k in 0..self.zeta.len() {
            let kern = self.dzeta[k] / (self.zeta[k] - z);
            let w = &self.coords[k];
            let g: C64 = lambda.iter().zip(w).map(|(l, w)| l * w).sum();
            gp[0] = kern;
            for s in 1..gp.len() {
                gp[s] = gp[s - 1] * g;
            }
            for s in 0..=s_max {
                primary[s] += gp[s];
            }
            for (a, &j) in js.iter().enumerate() {
                let wj = w[j];
                let mut p = kern;
                for s in 0..=s_max {
                    per_coord[a][s] += p;
                    p *= wj;
                }
                for s in 0..mixed {
                    mix[a][s] += gp[s] * wj;
                }
            }
        }
        let norm = C64::new(0.0, 2.0 * PI);
        let scale = |v: &mut Vec<C64>| v.iter_mut().for_each(|x| *x /= norm);
        scale(&mut primary);
        per_coord.iter_mut().for_each(scale);
        mix.iter_mut().for_each(scale);
        MomentBundle {
            primary,
            per_coord,
            mixed: mix,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MomentBundle {
    pub primary: Vec<C64>,
    pub per_coord: Vec<Vec<C64>>,
    pub mixed: Vec<Vec<C64>>,
}

/// `N_0..=N_{s_max}` of coordinate `j` at `z`, by composite Gauss-Legendre
/// with `panels` panels of `order` nodes per cell.
pub fn cauchy_moments(
    m: &RectifiableCurrent,
    j: usize,
    z: C64,
    s_max: usize,
    order: usize,
    panels: usize,
) -> Result<Vec<C64>> {
    if j >= m.ambient.n {
        return Err(CurrentError::IndexOutOfRange {
            index: j,
            n: m.ambient.n,
        });
    }
    let q = CycleQuadrature::new(m, order, panels, super::DEFAULT_SAMPLES, None)?;
    q.check_point(z)?;
    let mut lambda = vec![C64::new(0.0, 0.0); m.ambient.n];
    lambda[j] = C64::new(1.0, 0.0);
    Ok(q.moments_of(&lambda, z, s_max))
}
