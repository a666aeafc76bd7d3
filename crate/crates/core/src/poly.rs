//! Multivariate complex polynomials, holomorphic least-squares fits and
//! univariate root finding.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CurrentError, Result};
use crate::expr::Expr;
use crate::field::C64;

/// `sum a_alpha ((z - center) / scale)^alpha`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexPoly {
    pub center: Vec<C64>,
    pub scale: f64,
    pub terms: Vec<(Vec<usize>, C64)>,
}

impl ComplexPoly {
    pub fn constant(k: usize, c: C64) -> Self {
        ComplexPoly {
            center: vec![C64::new(0.0, 0.0); k],
            scale: 1.0,
            terms: vec![(vec![0; k], c)],
        }
    }

    pub fn nvars(&self) -> usize {
        self.center.len()
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|(a, _)| a.iter().sum::<usize>()).max().unwrap_or(0)
    }

    pub fn eval(&self, z: &[C64]) -> C64 {
        let x: Vec<C64> = z.iter().zip(&self.center).map(|(z, c)| (z - c) / self.scale).collect();
        self.terms
            .iter()
            .map(|(a, c)| a.iter().zip(&x).fold(*c, |acc, (&e, xi)| acc * xi.powu(e as u32)))
            .sum()
    }

    /// Coefficients in the plain monomials `z^alpha`; entries below `drop`
    /// in modulus are omitted.
    pub fn monomials(&self, drop: f64) -> BTreeMap<Vec<usize>, C64> {
        let k = self.nvars();
        let mut out: BTreeMap<Vec<usize>, C64> = BTreeMap::new();
        for (alpha, coef) in &self.terms {
            // expand prod_i ((z_i - c_i)/s)^{alpha_i}
            let mut acc: BTreeMap<Vec<usize>, C64> = BTreeMap::from([(vec![0; k], *coef)]);
            for (i, &e) in alpha.iter().enumerate() {
                let mut next = BTreeMap::new();
                for (mono, v) in &acc {
                    for r in 0..=e {
                        let b = binom(e, r) * (-self.center[i]).powu((e - r) as u32) / self.scale.powi(e as i32);
                        let mut m = mono.clone();
                        m[i] += r;
                        *next.entry(m).or_insert(C64::new(0.0, 0.0)) += v * b;
                    }
                }
                acc = next;
            }
            for (m, v) in acc {
                *out.entry(m).or_insert(C64::new(0.0, 0.0)) += v;
            }
        }
        out.retain(|_, v| v.norm() > drop);
        out
    }

    /// The polynomial as an expression in `vars`.
    pub fn to_expr(&self, vars: &[Expr]) -> Expr {
        crate::expr::sum(self.monomials(0.0).into_iter().map(|(a, c)| {
            a.iter()
                .zip(vars)
                .fold(Expr::c(c), |acc, (&e, v)| if e == 0 { acc } else { acc * v.powi(e as i32) })
        }))
    }
}

fn binom(n: usize, r: usize) -> f64 {
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exponents of `k` variables with total degree at most `d`, graded.
pub fn monomials_upto(k: usize, d: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; k]];
    if k > 0 {
        out.extend(crate::hilbert::multi_indices(k, d));
    }
    out
}

/// Chebyshev nodes of the first kind on `[lo, hi]`.
pub fn chebyshev_nodes(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let x = -((2 * i + 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos();
            lo + 0.5 * (hi - lo) * (x + 1.0)
        })
        .collect()
}

/// Tensor Chebyshev grid over the polydisk-box `center +- half` in `C^k`,
/// `per_axis` nodes on every real axis.
pub fn chebyshev_grid(center: &[C64], half: f64, per_axis: usize) -> Vec<Vec<C64>> {
    let k = center.len();
    let nodes = chebyshev_nodes(per_axis, -half, half);
    let total = per_axis.pow(2 * k as u32);
    (0..total)
        .map(|s| {
            (0..k)
                .map(|i| {
                    let a = (s / per_axis.pow(2 * i as u32)) % per_axis;
                    let b = (s / per_axis.pow(2 * i as u32 + 1)) % per_axis;
                    center[i] + C64::new(nodes[a], nodes[b])
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HoloFit {
    pub poly: ComplexPoly,
    pub degree: usize,
    /// `max_g |fit(z_g) - value_g|`.
    pub residual: f64,
    /// Ratio of extreme singular values of the scaled Vandermonde matrix.
    pub condition: f64,
    pub holomorphic: bool,
}

/// Least-squares fit by holomorphic polynomials of increasing degree, stopping
/// at the first degree whose residual is below `tol (1 + max |v|)`.
pub fn fit_holomorphic(grid: &[Vec<C64>], values: &[C64], max_deg: usize, tol: f64) -> Result<HoloFit> {
    if grid.is_empty() || grid.len() != values.len() {
        return Err(CurrentError::DimensionMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    let k = grid[0].len();
    let n = grid.len() as f64;
    let center: Vec<C64> = (0..k).map(|i| grid.iter().map(|z| z[i]).sum::<C64>() / n).collect();
    let scale = grid
        .iter()
        .flat_map(|z| z.iter().zip(&center).map(|(a, c)| (a - c).norm()))
        .fold(0.0, f64::max)
        .max(1e-300);
    let xs: Vec<Vec<C64>> = grid.iter().map(|z| z.iter().zip(&center).map(|(a, c)| (a - c) / scale).collect()).collect();
    let vmax = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let target = tol * (1.0 + vmax);
    let b = DMatrix::from_iterator(values.len(), 1, values.iter().copied());
    let mut best: Option<HoloFit> = None;
    for d in 0..=max_deg {
        let monos = monomials_upto(k, d);
        if monos.len() > grid.len() {
            break;
        }
        let a = DMatrix::from_fn(grid.len(), monos.len(), |r, c| {
            monos[c].iter().zip(&xs[r]).fold(C64::new(1.0, 0.0), |acc, (&e, x)| acc * x.powu(e as u32))
        });
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let coef = svd
            .solve(&b, 1e-13 * smax)
            .map_err(|e| CurrentError::stage("fit_holomorphic", e.to_string()))?;
        let fitted = &a * &coef;
        let residual = fitted.iter().zip(values).map(|(f, v)| (f - v).norm()).fold(0.0, f64::max);
        let fit = HoloFit {
            poly: ComplexPoly {
                center: center.clone(),
                scale,
                terms: monos.into_iter().zip(coef.iter().copied()).collect(),
            },
            degree: d,
            residual,
            condition: if smin > 0.0 { smax / smin } else { f64::INFINITY },
            holomorphic: residual <= target,
        };
        let done = fit.holomorphic;
        if best.as_ref().is_none_or(|b| fit.residual < b.residual) || done {
            best = Some(fit);
        }
        if done {
            break;
        }
    }
    best.ok_or_else(|| CurrentError::stage("fit_holomorphic", "grid too small for a degree-0 fit"))
}

/// Roots of `sum_d c[d] w^d` (`c` low to high, leading entry nonzero) via
/// the companion matrix, polished by Newton.
pub fn roots(c: &[C64]) -> Result<Vec<C64>> {
    let deg = c.iter().rposition(|v| v.norm() > 0.0).unwrap_or(0);
    if deg == 0 {
        return Ok(Vec::new());
    }
    let lead = c[deg];
    let mut m = DMatrix::<C64>::zeros(deg, deg);
    for i in 1..deg {
        m[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..deg {
        m[(i, deg - 1)] = -c[i] / lead;
    }
    let eig = m
        .eigenvalues()
        .ok_or_else(|| CurrentError::stage("roots", "Schur iteration did not converge"))?;
    let mut out: Vec<C64> = eig.iter().copied().collect();
    for r in out.iter_mut() {
        for _ in 0..3 {
            let (mut p, mut dp) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
            for &ci in c[..=deg].iter().rev() {
                dp = dp * *r + p;
                p = p * *r + ci;
            }
            if dp.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            if !step.re.is_finite() || !step.im.is_finite() {
                break;
            }
            *r -= step;
        }
    }
    Ok(out)
}

/// `e_1..e_m` from power sums `p[1..=m]` (`p[0]` is ignored) by Newton's
/// identities `d e_d = sum_{i=1}^d (-1)^{i-1} e_{d-i} p_i`. Returns
/// `e_0..=e_m`.
pub fn newton_identities(p: &[C64], m: usize) -> Vec<C64> {
    let mut e = vec![C64::new(1.0, 0.0)];
    for d in 1..=m {
        let mut s = C64::new(0.0, 0.0);
        for i in 1..=d {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            s += e[d - i] * p[i] * sign;
        }
        e.push(s / d as f64);
    }
    e
}

/// Power sums `p_0..=p_s` of the roots listed with multiplicity weights.
pub fn power_sums_of(roots: &[(C64, f64)], s: usize) -> Vec<C64> {
    (0..=s)
        .map(|k| roots.iter().map(|(r, w)| r.powu(k as u32) * *w).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn newton_hand_cases() {
        let z = c(0.3, -0.7);
        // p = (_, 0, 2z) -> e = (1, 0, -z)
        let e = newton_identities(&[c(2.0, 0.0), c(0.0, 0.0), 2.0 * z], 2);
        assert_eq!(e[1], c(0.0, 0.0));
        assert!((e[2] + z).norm() < 1e-15);
        // double root at z: p = (_, 2z, 2z^2) -> e = (1, 2z, z^2)
        let e = newton_identities(&[c(2.0, 0.0), 2.0 * z, 2.0 * z * z], 2);
        assert!((e[1] - 2.0 * z).norm() < 1e-15 && (e[2] - z * z).norm() < 1e-15);
    }

    #[test]
    fn newton_round_trip() {
        let rs = [c(1.0, 2.0), c(-0.5, 0.1), c(0.3, -0.3), c(2.0, 0.0)];
        let p = power_sums_of(&rs.iter().map(|r| (*r, 1.0)).collect::<Vec<_>>(), 4);
        let e = newton_identities(&p, 4);
        // prod (W - r) = W^4 - e1 W^3 + e2 W^2 - e3 W + e4
        let coeffs: Vec<C64> = (0..=4).rev().map(|d| if d % 2 == 0 { e[d] } else { -e[d] }).collect();
        let mut found = roots(&coeffs).unwrap();
        found.sort_by(|a, b| a.re.total_cmp(&b.re));
        let mut want = rs.to_vec();
        want.sort_by(|a, b| a.re.total_cmp(&b.re));
        for (a, b) in found.iter().zip(&want) {
            assert!((a - b).norm() < 1e-12, "{found:?}");
        }
    }

    #[test]
    fn fit_exact_square() {
        let grid = chebyshev_grid(&[c(0.2, 0.1)], 0.5, 5);
        assert_eq!(grid.len(), 25);
        let vals: Vec<C64> = grid.iter().map(|z| z[0] * z[0]).collect();
        let f = fit_holomorphic(&grid, &vals, 12, 1e-12).unwrap();
        assert!(f.holomorphic && f.residual < 1e-12 && f.degree == 2);
        let m = f.poly.monomials(1e-12);
        assert_eq!(m.len(), 1);
        assert!((m[&vec![2]] - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn fit_rejects_conjugate() {
        let grid = chebyshev_grid(&[c(0.0, 0.0)], 1.0, 5);
        let vals: Vec<C64> = grid.iter().map(|z| z[0].conj()).collect();
        let f = fit_holomorphic(&grid, &vals, 12, 1e-8).unwrap();
        assert!(!f.holomorphic);
        assert!(f.residual > 0.1, "{}", f.residual);
    }

    #[test]
    fn fit_constant() {
        let grid = chebyshev_grid(&[c(1.0, 0.0), c(0.0, 1.0)], 0.3, 3);
        let vals = vec![c(2.5, -1.0); grid.len()];
        let f = fit_holomorphic(&grid, &vals, 12, 1e-12).unwrap();
        assert_eq!(f.degree, 0);
        assert!(f.residual < 1e-14);
    }

    #[test]
    fn expression_round_trip() {
        let grid = chebyshev_grid(&[c(0.5, 0.0), c(0.0, -0.5)], 0.4, 3);
        let vals: Vec<C64> = grid.iter().map(|z| z[0] * z[1] - z[1] * z[1] * c(0.0, 2.0) + c(1.0, 0.0)).collect();
        let f = fit_holomorphic(&grid, &vals, 6, 1e-12).unwrap();
        let e = f.poly.to_expr(&[Expr::z(0), Expr::z(1)]);
        let tape = crate::tape::Tape::compile(&[e], 4).unwrap();
        for z in &grid {
            let v = tape.eval_real(&[z[0].re, z[0].im, z[1].re, z[1].im])[0];
            assert!((v - f.poly.eval(z)).norm() < 1e-10);
        }
    }
}
