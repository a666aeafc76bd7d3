//! Complex-structure tests on currents: bidimension, positivity, the
//! `d = del + delbar` split, maximal complexity and the Wirtinger estimate.
//!
//! Everything acts through evaluations on randomized pure-type probe forms.
//! Probe differentials are complex-linear functionals `sum a_j z_j` or their
//! conjugates, and the leading function is a Gaussian bump.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::current::{
    Boundary, Current, DiffPart, ExpressionMap, MetricForm, QuadOptions, RectifiableCurrent, Slot,
};
use crate::error::{CurrentError, Result};
use crate::expr::{sum, Expr};
use crate::field::{Interval, C64};
use crate::hilbert::{binomial, CoordinateProjection};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bidegree {
    pub r: usize,
    pub s: usize,
}

impl Bidegree {
    pub fn key(&self) -> String {
        format!("({},{})", self.r, self.s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    /// Max |evaluation| over probes, per bidegree `(r,s)`.
    pub tested_profile: BTreeMap<String, f64>,
    pub verdict: BTreeMap<String, bool>,
    pub tolerance: f64,
    pub flags: Vec<String>,
}

impl ClassificationReport {
    pub fn passed(&self) -> bool {
        self.verdict.values().all(|v| *v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeOptions {
    pub count: usize,
    pub seed: u64,
    /// Absolute tolerance; `None` means `1e-8 * (1 + mass)`.
    pub tol: Option<f64>,
    pub quad: QuadOptions,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            count: 32,
            seed: 0,
            tol: None,
            quad: QuadOptions::default(),
        }
    }
}

fn gaussian_c(rng: &mut ChaCha8Rng) -> C64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let a = 2.0 * std::f64::consts::PI * u2;
    C64::new(r * a.cos(), r * a.sin()) * std::f64::consts::FRAC_1_SQRT_2
}

/// Unit-norm random coefficient vector.
fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..n).map(|_| gaussian_c(rng)).collect();
    let nrm = v
        .iter()
        .map(|c| c.norm_sqr())
        .sum::<f64>()
        .sqrt()
        .max(1e-300);
    v.into_iter().map(|c| c / nrm).collect()
}

/// `sum_j a_j z_j`.
pub fn linear_functional(a: &[C64]) -> Expr {
    sum(a.iter().enumerate().map(|(j, c)| Expr::c(*c) * Expr::z(j)))
}

/// `exp(-|x - c|^2 / R^2)` in the real ambient coordinates.
pub fn gaussian_bump(center: &[f64], radius: f64) -> Expr {
    let q = sum(center
        .iter()
        .enumerate()
        .map(|(a, &c)| (Expr::var(a) - Expr::real(c)).powi(2)));
    (-(q * Expr::real(1.0 / (radius * radius)))).exp()
}

/// A bump with random center inside `bbox` and width comparable to it.
pub fn random_bump(rng: &mut ChaCha8Rng, bbox: &[Interval]) -> Expr {
    let center: Vec<f64> = bbox
        .iter()
        .map(|i| {
            if i.width() > 0.0 {
                rng.gen_range(i.lo..=i.hi)
            } else {
                i.lo
            }
        })
        .collect();
    let half_diag = 0.5
        * bbox
            .iter()
            .map(|i| i.width() * i.width())
            .sum::<f64>()
            .sqrt();
    let radius = half_diag.max(1e-3) * rng.gen_range(1.0..2.0);
    gaussian_bump(&center, radius)
}

/// `count` forms of pure type: `r` holomorphic then `s` antiholomorphic
/// linear differentials.
pub fn probe_forms(
    r: usize,
    s: usize,
    count: usize,
    bbox: &[Interval],
    seed: u64,
) -> Vec<MetricForm> {
    let n = bbox.len() / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let f = random_bump(&mut rng, bbox);
            let mut pis = Vec::with_capacity(r + s);
            for _ in 0..r {
                pis.push(linear_functional(&random_unit(&mut rng, n)));
            }
            for _ in 0..s {
                pis.push(linear_functional(&random_unit(&mut rng, n)).conj());
            }
            MetricForm::new(f, pis)
        })
        .collect()
}

/// Probes with real-linear differentials `Re(sum a_j z_j)`.
pub fn real_probe_forms(
    degree: usize,
    count: usize,
    bbox: &[Interval],
    seed: u64,
) -> Vec<MetricForm> {
    let n = bbox.len() / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let f = random_bump(&mut rng, bbox);
            let pis = (0..degree)
                .map(|_| linear_functional(&random_unit(&mut rng, n)).re())
                .collect();
            MetricForm::new(f, pis)
        })
        .collect()
}

/// Haar-random unitary `n x n` matrix (QR of a complex Gaussian matrix).
pub fn random_unitary(n: usize, seed: u64) -> nalgebra::DMatrix<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = nalgebra::DMatrix::<C64>::from_fn(n, n, |_, _| gaussian_c(&mut rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // fix phases so the distribution is Haar
    let mut q = q;
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// The complex-linear map `z -> U z` as an ambient map.
pub fn linear_map(u: &nalgebra::DMatrix<C64>) -> ExpressionMap {
    let outs = (0..u.nrows())
        .map(|i| linear_functional(&(0..u.ncols()).map(|j| u[(i, j)]).collect::<Vec<_>>()))
        .collect();
    ExpressionMap::new(2 * u.ncols(), outs).expect("linear map arity")
}

fn default_tol(t: &RectifiableCurrent, o: &ProbeOptions) -> f64 {
    o.tol
        .unwrap_or_else(|| 1e-8 * (1.0 + t.mass(&o.quad).total))
}

fn max_abs(t: &dyn Current, forms: &[MetricForm], q: &QuadOptions) -> Result<f64> {
    let mut m: f64 = 0.0;
    for w in forms {
        m = m.max(t.evaluate(w, q)?.norm());
    }
    Ok(m)
}

/// Probes every bidegree `(r,s)` with `r + s = dim` and checks that those
/// with `r > p` or `s > q` vanish.
pub fn classify_bidimension(
    t: &RectifiableCurrent,
    p: usize,
    q: usize,
    o: &ProbeOptions,
) -> Result<ClassificationReport> {
    if p + q != t.dim {
        return Err(CurrentError::DimensionMismatch {
            expected: t.dim,
            got: p + q,
        });
    }
    let tol = default_tol(t, o);
    let bbox = t.support_bbox();
    let mut rep = ClassificationReport {
        tested_profile: BTreeMap::new(),
        verdict: BTreeMap::new(),
        tolerance: tol,
        flags: Vec::new(),
    };
    for r in 0..=t.dim {
        let s = t.dim - r;
        let b = Bidegree { r, s };
        let forms = probe_forms(r, s, o.count, &bbox, o.seed.wrapping_add(r as u64));
        let m = max_abs(t, &forms, &o.quad)?;
        rep.tested_profile.insert(b.key(), m);
        if r > p || s > q {
            rep.verdict.insert(format!("vanishes{}", b.key()), m < tol);
        }
    }
    let all = rep.verdict.values().all(|v| *v);
    rep.verdict.insert(format!("bidimension({p},{q})"), all);
    Ok(rep)
}

/// `(i/2)^k T(f, pi_1, conj pi_1, ..., pi_k, conj pi_k)` for holomorphic
/// linear `pi_j` and a nonnegative bump `f`.
pub fn positivity_values(
    t: &dyn Current,
    k: usize,
    probes: &[(Expr, Vec<Expr>)],
    q: &QuadOptions,
) -> Result<Vec<C64>> {
    let norm = C64::new(0.0, 0.5).powi(k as i32);
    probes
        .iter()
        .map(|(f, pis)| {
            let mut slots = Vec::with_capacity(2 * k);
            for p in pis {
                slots.push(p.clone());
                slots.push(p.conj());
            }
            Ok(norm * t.evaluate(&MetricForm::new(f.clone(), slots), q)?)
        })
        .collect()
}

fn positivity_probes(
    n: usize,
    k: usize,
    count: usize,
    bbox: &[Interval],
    seed: u64,
) -> Vec<(Expr, Vec<Expr>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let f = random_bump(&mut rng, bbox);
            let pis = (0..k)
                .map(|_| linear_functional(&random_unit(&mut rng, n)))
                .collect();
            (f, pis)
        })
        .collect()
}

fn positivity_verdict(vals: &[C64], tol: f64) -> (f64, f64, bool) {
    let min_re = vals.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
    let max_im = vals.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    (min_re, max_im, min_re >= -tol && max_im <= tol)
}

/// Positivity of a `2k`-current on `count` probes, optionally repeated on
/// `projections` random coordinate projections (finite positivity).
pub fn is_positive(
    t: &RectifiableCurrent,
    k: usize,
    projections: usize,
    o: &ProbeOptions,
) -> Result<ClassificationReport> {
    if t.dim % 2 == 1 || t.dim != 2 * k {
        return Err(CurrentError::Invalid(format!(
            "positivity needs an even-dimensional current of dimension 2k = {}, got {}",
            2 * k,
            t.dim
        )));
    }
    let tol = default_tol(t, o);
    let n = t.ambient.n;
    let bbox = t.support_bbox();
    let probes = positivity_probes(n, k, o.count, &bbox, o.seed);
    let vals = positivity_values(t, k, &probes, &o.quad)?;
    let (min_re, max_im, ok) = positivity_verdict(&vals, tol);
    let mut rep = ClassificationReport {
        tested_profile: BTreeMap::new(),
        verdict: BTreeMap::new(),
        tolerance: tol,
        flags: vec![format!(
            "volume normalization i^k/(2^k k!) = {:?}",
            C64::new(0.0, 1.0).powi(k as i32) / (2f64.powi(k as i32) * factorial(k))
        )],
    };
    rep.tested_profile.insert("min_re".into(), min_re);
    rep.tested_profile.insert("max_abs_im".into(), max_im);
    rep.verdict.insert("positive".into(), ok);

    let mut rng = ChaCha8Rng::seed_from_u64(o.seed ^ 0x9e37_79b9_7f4a_7c15);
    for pi in 0..projections {
        let size = rng.gen_range(k.min(n).max(1)..=n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..size {
            let j = rng.gen_range(i..n);
            idx.swap(i, j);
        }
        let mut chosen = idx[..size].to_vec();
        chosen.sort_unstable();
        let proj = CoordinateProjection::new(chosen).as_endomorphism(n)?;
        let pt = t.pushforward(&proj)?;
        let pbox = pt.support_bbox();
        let pv = positivity_values(
            &pt,
            k,
            &positivity_probes(n, k, o.count, &pbox, o.seed.wrapping_add(pi as u64 + 1)),
            &o.quad,
        )?;
        let (_, _, pok) = positivity_verdict(&pv, tol);
        rep.verdict
            .insert(format!("projection{pi}_agrees"), pok == ok);
    }
    Ok(rep)
}

/// Positivity on probes rotated by a unitary `U`: differentials become
/// `pi o U`.
pub fn positivity_with_unitary(
    t: &RectifiableCurrent,
    k: usize,
    u: &nalgebra::DMatrix<C64>,
    o: &ProbeOptions,
) -> Result<bool> {
    let tol = default_tol(t, o);
    let bbox = t.support_bbox();
    let map = linear_map(u);
    let probes: Vec<(Expr, Vec<Expr>)> = positivity_probes(t.ambient.n, k, o.count, &bbox, o.seed)
        .into_iter()
        .map(|(f, pis)| (f, pis.iter().map(|p| p.compose(map.outputs())).collect()))
        .collect();
    let vals = positivity_values(t, k, &probes, &o.quad)?;
    Ok(positivity_verdict(&vals, tol).2)
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// The `(holo, anti)` component of `dT` for a current `T`, evaluated by
/// expanding each unrestricted slot into its complex-linear and
/// conjugate-linear parts and keeping assignments with the right counts.
pub struct TypedBoundary<'a> {
    pub inner: &'a dyn Current,
    pub holo: usize,
    pub anti: usize,
}

impl<'a> TypedBoundary<'a> {
    /// `delbar T` for `T` of bidimension `(p, q)`.
    pub fn delbar(inner: &'a dyn Current, p: usize, q: usize) -> Result<Self> {
        check_bidim(inner, p, q)?;
        Ok(TypedBoundary {
            inner,
            holo: p,
            anti: q
                .checked_sub(1)
                .ok_or_else(|| CurrentError::Invalid("delbar needs q >= 1".into()))?,
        })
    }

    /// `del T` for `T` of bidimension `(p, q)`.
    pub fn del(inner: &'a dyn Current, p: usize, q: usize) -> Result<Self> {
        check_bidim(inner, p, q)?;
        Ok(TypedBoundary {
            inner,
            holo: p
                .checked_sub(1)
                .ok_or_else(|| CurrentError::Invalid("del needs p >= 1".into()))?,
            anti: q,
        })
    }
}

fn check_bidim(t: &dyn Current, p: usize, q: usize) -> Result<()> {
    if p + q != t.dim() {
        return Err(CurrentError::DimensionMismatch {
            expected: t.dim(),
            got: p + q,
        });
    }
    Ok(())
}

impl Current for TypedBoundary<'_> {
    fn dim(&self) -> usize {
        self.holo + self.anti
    }

    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }

    fn eval_typed(&self, f: &Expr, slots: &[Slot], q: &QuadOptions) -> Result<C64> {
        if slots.len() != self.dim() {
            return Err(CurrentError::DimensionMismatch {
                expected: self.dim(),
                got: slots.len(),
            });
        }
        let h0 = slots.iter().filter(|s| s.part == DiffPart::Holo).count();
        let a0 = slots.iter().filter(|s| s.part == DiffPart::Anti).count();
        let free: Vec<usize> = (0..slots.len())
            .filter(|&i| slots[i].part == DiffPart::Full)
            .collect();
        if h0 > self.holo || a0 > self.anti {
            return Ok(C64::new(0.0, 0.0));
        }
        let need_h = self.holo - h0;
        if need_h + (self.anti - a0) != free.len() {
            return Ok(C64::new(0.0, 0.0));
        }
        let d = Boundary { inner: self.inner };
        let mut total = Vec::new();
        for_each_subset(free.len(), need_h, &mut |chosen| {
            let mut typed = slots.to_vec();
            for (pos, &i) in free.iter().enumerate() {
                typed[i].part = if chosen[pos] {
                    DiffPart::Holo
                } else {
                    DiffPart::Anti
                };
            }
            total.push(d.eval_typed(f, &typed, q));
        });
        let vals = total.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(crate::quadrature::neumaier_c(&vals))
    }
}

fn for_each_subset(n: usize, k: usize, f: &mut dyn FnMut(&[bool])) {
    fn go(pos: usize, left: usize, cur: &mut Vec<bool>, f: &mut dyn FnMut(&[bool])) {
        let n = cur.len();
        if pos == n {
            if left == 0 {
                f(cur);
            }
            return;
        }
        if n - pos > left {
            cur[pos] = false;
            go(pos + 1, left, cur, f);
        }
        if left > 0 {
            cur[pos] = true;
            go(pos + 1, left - 1, cur, f);
            cur[pos] = false;
        }
    }
    let mut cur = vec![false; n];
    go(0, k, &mut cur, f);
}

pub fn eval_delbar(
    t: &dyn Current,
    p: usize,
    q: usize,
    w: &MetricForm,
    quad: &QuadOptions,
) -> Result<C64> {
    TypedBoundary::delbar(t, p, q)?.evaluate(w, quad)
}

pub fn eval_del(
    t: &dyn Current,
    p: usize,
    q: usize,
    w: &MetricForm,
    quad: &QuadOptions,
) -> Result<C64> {
    TypedBoundary::del(t, p, q)?.evaluate(w, quad)
}

/// `d^c T = i (del T - delbar T)`.
pub fn eval_dc(
    t: &dyn Current,
    p: usize,
    q: usize,
    w: &MetricForm,
    quad: &QuadOptions,
) -> Result<C64> {
    Ok(C64::new(0.0, 1.0) * (eval_del(t, p, q, w, quad)? - eval_delbar(t, p, q, w, quad)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WirtingerReport {
    /// `sum_{i_1 < ... < i_k} (i/2)^k T(1, z_{i_1}, conj z_{i_1}, ...)`, real part.
    pub coordinate_sum: f64,
    pub mass_total: f64,
    pub ratio: f64,
    /// Constant in `coordinate_sum <= C_k mass`.
    pub c_k: f64,
    pub tolerance: f64,
    /// `mass <= coordinate_sum + tol`.
    pub lower_ok: bool,
    /// `coordinate_sum <= C_k mass + tol`.
    pub upper_ok: bool,
    pub terms: usize,
}

/// Wirtinger comparison for a `2k`-current. `tail_budget` is added to the
/// tolerance to account for coordinates beyond the truncation.
pub fn wirtinger_mass(
    t: &RectifiableCurrent,
    k: usize,
    tail_budget: f64,
    q: &QuadOptions,
) -> Result<WirtingerReport> {
    if t.dim != 2 * k {
        return Err(CurrentError::Invalid(format!(
            "Wirtinger sum needs dimension 2k = {}, got {}",
            2 * k,
            t.dim
        )));
    }
    let n = t.ambient.n;
    let mass = t.mass(q).total;
    let norm = C64::new(0.0, 0.5).powi(k as i32);
    let mut vals = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k <= n {
        loop {
            let mut pis = Vec::with_capacity(2 * k);
            for &i in &idx {
                pis.push(Expr::z(i));
                pis.push(Expr::z(i).conj());
            }
            vals.push((norm * t.evaluate(&MetricForm::new(Expr::one(), pis), q)?).re);
            // next increasing tuple
            let mut pos = k;
            while pos > 0 && idx[pos - 1] == n - k + pos - 1 {
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
            idx[pos - 1] += 1;
            for j in pos..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    debug_assert_eq!(
        vals.len() as f64,
        binomial(n, k).max(if k <= n { 1.0 } else { 0.0 })
    );
    let coordinate_sum = crate::quadrature::neumaier(vals.iter().cloned());
    let tol = 1e-8 * (1.0 + mass) + tail_budget;
    let c_k = 1.0;
    Ok(WirtingerReport {
        coordinate_sum,
        mass_total: mass,
        ratio: if mass > 0.0 {
            coordinate_sum / mass
        } else {
            f64::NAN
        },
        c_k,
        tolerance: tol,
        lower_ok: mass <= coordinate_sum + tol,
        upper_ok: coordinate_sum <= c_k * mass + tol,
        terms: vals.len(),
    })
}

/// Checks that every `(r,s)` component with `|r - s| > 1` of an odd
/// dimensional current vanishes.
pub fn is_maximally_complex(
    m: &RectifiableCurrent,
    o: &ProbeOptions,
) -> Result<ClassificationReport> {
    if m.dim % 2 == 0 {
        return Err(CurrentError::Invalid(format!(
            "maximal complexity needs odd dimension, got {}",
            m.dim
        )));
    }
    let tol = default_tol(m, o);
    let bbox = m.support_bbox();
    let mut rep = ClassificationReport {
        tested_profile: BTreeMap::new(),
        verdict: BTreeMap::new(),
        tolerance: tol,
        flags: Vec::new(),
    };
    if m.dim == 1 {
        rep.flags.push("moment condition required".into());
    }
    for r in 0..=m.dim {
        let s = m.dim - r;
        let b = Bidegree { r, s };
        let forms = probe_forms(r, s, o.count, &bbox, o.seed.wrapping_add(r as u64));
        let mx = max_abs(m, &forms, &o.quad)?;
        rep.tested_profile.insert(b.key(), mx);
        if r.abs_diff(s) > 1 {
            rep.verdict.insert(format!("vanishes{}", b.key()), mx < tol);
        }
    }
    let all = rep.verdict.values().all(|v| *v);
    rep.verdict.insert("maximally_complex".into(), all);
    Ok(rep)
}
