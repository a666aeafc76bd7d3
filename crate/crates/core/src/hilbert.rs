//! Finite truncations of `l^2` with a fixed orthonormal basis.

use serde::{Deserialize, Serialize};

use crate::current::{Current, ExpressionMap, MetricForm, QuadOptions, RectifiableCurrent};
use crate::error::{CurrentError, Result};
use crate::expr::Expr;
use crate::field::C64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbientSpace {
    pub n: usize,
    pub labels: Vec<String>,
}

impl AmbientSpace {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(CurrentError::Invalid(
                "ambient dimension must be at least 1".into(),
            ));
        }
        Ok(AmbientSpace {
            n,
            labels: (1..=n).map(|i| format!("z{i}")).collect(),
        })
    }
}

/// Orthogonal projection onto the coordinates in `indices` (0-based,
/// ordered). The image is `C^{|I|}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinateProjection {
    pub indices: Vec<usize>,
}

impl CoordinateProjection {
    pub fn new(indices: Vec<usize>) -> Self {
        CoordinateProjection { indices }
    }

    /// The first `t` coordinates.
    pub fn prefix(t: usize) -> Self {
        CoordinateProjection {
            indices: (0..t).collect(),
        }
    }

    pub fn check(&self, n: usize) -> Result<()> {
        match self.indices.iter().find(|&&i| i >= n) {
            Some(&i) => Err(CurrentError::IndexOutOfRange { index: i, n }),
            None => Ok(()),
        }
    }

    /// `C^n -> C^{|I|}`.
    pub fn as_map(&self, n: usize) -> Result<ExpressionMap> {
        self.check(n)?;
        ExpressionMap::new(2 * n, self.indices.iter().map(|&i| Expr::z(i)).collect())
    }

    /// `C^n -> C^n`, zeroing every coordinate outside `I`.
    pub fn as_endomorphism(&self, n: usize) -> Result<ExpressionMap> {
        self.check(n)?;
        let outs = (0..n)
            .map(|j| {
                if self.indices.contains(&j) {
                    Expr::z(j)
                } else {
                    Expr::zero()
                }
            })
            .collect();
        ExpressionMap::new(2 * n, outs)
    }
}

pub fn project_current(
    proj: &CoordinateProjection,
    t: &RectifiableCurrent,
) -> Result<RectifiableCurrent> {
    let map = proj.as_map(t.ambient.n)?;
    t.pushforward(&map)
}

/// `|T_t(w) - T(w)|` for each prefix `t` and probe `w`, where
/// `T_t = p_t # T` stays in the same ambient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PasRow {
    pub t: usize,
    pub entries: Vec<f64>,
}

pub fn pas_convergence_report(
    t: &RectifiableCurrent,
    prefixes: &[usize],
    probes: &[MetricForm],
    q: &QuadOptions,
) -> Result<Vec<PasRow>> {
    let n = t.ambient.n;
    let full: Vec<C64> = probes
        .iter()
        .map(|w| t.evaluate(w, q))
        .collect::<Result<_>>()?;
    prefixes
        .iter()
        .map(|&tt| {
            let p = CoordinateProjection::prefix(tt.min(n)).as_endomorphism(n)?;
            let tt_cur = t.pushforward(&p)?;
            let entries = probes
                .iter()
                .zip(&full)
                .map(|(w, v)| Ok((tt_cur.evaluate(w, q)? - v).norm()))
                .collect::<Result<Vec<_>>>()?;
            Ok(PasRow { t: tt, entries })
        })
        .collect()
}

/// `(z, w) -> (z w, z w^2, ..., z w^{n_max})`.
pub fn fixture_zw_n(n_max: usize) -> Result<ExpressionMap> {
    let (z, w) = (Expr::z(0), Expr::z(1));
    ExpressionMap::new(4, (1..=n_max).map(|j| &z * &w.powi(j as i32)).collect())
}

/// `z -> (z, z^2, ..., z^{n_max})`.
pub fn fixture_z_powers(n_max: usize) -> Result<ExpressionMap> {
    let z = Expr::z(0);
    ExpressionMap::new(2, (1..=n_max).map(|n| z.powi(n as i32)).collect())
}

/// Multi-indices of `k` variables with `1 <= |I| <= deg_max`, ordered by
/// total degree then lexicographically (descending first exponent).
pub fn multi_indices(k: usize, deg_max: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for m in 1..=deg_max {
        let mut cur = vec![0; k];
        fill(&mut cur, 0, m, &mut out);
    }
    out
}

fn fill(cur: &mut Vec<usize>, pos: usize, left: usize, out: &mut Vec<Vec<usize>>) {
    let k = cur.len();
    if pos == k - 1 {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e;
        fill(cur, pos + 1, left - e, out);
    }
}

pub fn binomial(n: usize, r: usize) -> f64 {
    if r > n {
        return 0.0;
    }
    let r = r.min(n - r);
    let mut acc = 1.0;
    for i in 0..r {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Convergence certificate for `sum_I |z^I|^p` on the polydisk of radius `r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiPowersCertificate {
    pub k: usize,
    pub deg_max: usize,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    pub r: f64,
    /// `sum_{|I| <= deg_max} |z^I|^p`.
    pub partial_sum: f64,
    /// Comparison series `sum_{m=1}^{deg_max} (2m)^k r^{mp}`.
    pub majorant: f64,
    /// Bound on the discarded terms `|I| > deg_max`.
    pub tail_bound: f64,
    pub dominated: bool,
}

impl MultiPowersCertificate {
    pub fn check(&self, z: &[C64]) -> CertificateCheck {
        let r = z.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let partial_sum: f64 = multi_indices(self.k, self.deg_max)
            .iter()
            .map(|ix| {
                ix.iter()
                    .zip(z)
                    .map(|(&e, c)| c.norm().powi(e as i32))
                    .product::<f64>()
                    .powf(self.p)
            })
            .sum();
        let term = |m: usize| (2.0 * m as f64).powi(self.k as i32) * r.powf(m as f64 * self.p);
        let majorant: f64 = (1..=self.deg_max).map(term).sum();
        let tail_bound = series_tail(
            |m| binomial(m + self.k - 1, self.k - 1) * r.powf(m as f64 * self.p),
            self.deg_max + 1,
        );
        CertificateCheck {
            r,
            partial_sum,
            majorant,
            tail_bound,
            dominated: partial_sum <= majorant * (1.0 + 1e-12) + 1e-300,
        }
    }
}

/// Sums `term(m)` for `m >= start` until terms drop below `1e-30` relative
/// and at least 50 terms were taken; a geometric bound covers the rest.
fn series_tail(term: impl Fn(usize) -> f64, start: usize) -> f64 {
    let mut s = 0.0;
    let mut m = start;
    let mut prev = term(m);
    loop {
        let t = term(m);
        s += t;
        m += 1;
        if m > start + 50 && (t <= 1e-30 * s.max(1e-300) || t == 0.0) {
            let ratio = if prev > 0.0 { t / prev } else { 0.0 };
            if ratio < 1.0 {
                return s + t * ratio / (1.0 - ratio);
            }
        }
        if m > start + 100_000 {
            return f64::INFINITY;
        }
        prev = t;
    }
}

pub fn fixture_multi_powers(
    k: usize,
    deg_max: usize,
    p: f64,
) -> Result<(ExpressionMap, MultiPowersCertificate)> {
    if k == 0 || !(p >= 1.0) || !p.is_finite() {
        return Err(CurrentError::Invalid("need k >= 1 and 1 <= p < inf".into()));
    }
    let outs = multi_indices(k, deg_max)
        .iter()
        .map(|ix| {
            ix.iter()
                .enumerate()
                .fold(Expr::one(), |acc, (i, &e)| acc * Expr::z(i).powi(e as i32))
        })
        .collect();
    Ok((
        ExpressionMap::new(2 * k, outs)?,
        MultiPowersCertificate { k, deg_max, p },
    ))
}

/// Declared bound on the `l^2` norm of the coordinates discarded by a
/// truncation, uniformly over the support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCertificate {
    pub n_trunc: usize,
    pub sup_l2: f64,
    pub note: String,
}

impl TailCertificate {
    pub fn exact(n_trunc: usize) -> Self {
        TailCertificate {
            n_trunc,
            sup_l2: 0.0,
            note: "no discarded coordinates".into(),
        }
    }
}

/// `sum_n 2^{-n} |<x - y, g_n>|`, with `g_n` the coordinate functionals
/// (n counted from 1).
pub fn weak_star_distance(x: &[C64], y: &[C64]) -> f64 {
    let n = x.len().max(y.len());
    let zero = C64::new(0.0, 0.0);
    (0..n)
        .map(|i| {
            let a = x.get(i).copied().unwrap_or(zero);
            let b = y.get(i).copied().unwrap_or(zero);
            0.5f64.powi(i as i32 + 1) * (a - b).norm()
        })
        .sum()
}
