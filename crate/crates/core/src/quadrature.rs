//! Gauss–Legendre rules and compensated summation.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::field::C64;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Mutex<HashMap<usize, (Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().unwrap().get(&n) {
        return r.clone();
    }
    let r = compute_gl(n);
    cache.lock().unwrap().insert(n, r.clone());
    r
}

fn compute_gl(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be positive");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, t);
            dp = d;
            let dt = p / d;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, t);
        if d != 0.0 {
            dp = d;
        }
        let wt = 2.0 / ((1.0 - t * t) * dp * dp);
        x[i] = 0.5 * (1.0 - t);
        x[n - 1 - i] = 0.5 * (1.0 + t);
        w[i] = 0.5 * wt;
        w[n - 1 - i] = 0.5 * wt;
    }
    (x, w)
}

fn legendre(n: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

/// Composite rule on `[0, 1]`: `panels` equal panels, `order` nodes each.
pub fn composite_gl(order: usize, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let panels = panels.max(1);
    let h = 1.0 / panels as f64;
    let mut xs = Vec::with_capacity(order * panels);
    let mut ws = Vec::with_capacity(order * panels);
    for p in 0..panels {
        for (xi, wi) in x.iter().zip(&w) {
            xs.push((p as f64 + xi) * h);
            ws.push(wi * h);
        }
    }
    (xs, ws)
}

/// Tensor-product rule on `[0,1]^k`, stored flat: point `i` occupies
/// `points[i*k .. (i+1)*k]`.
#[derive(Clone, Debug)]
pub struct TensorRule {
    pub k: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TensorRule {
    pub fn new(k: usize, order: usize, panels: usize) -> TensorRule {
        let (x, w) = composite_gl(order, panels);
        let m = x.len();
        let total = m.pow(k as u32);
        let mut points = Vec::with_capacity(total * k);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; k];
        for _ in 0..total {
            let mut wt = 1.0;
            for &i in &idx {
                points.push(x[i]);
                wt *= w[i];
            }
            weights.push(wt);
            for d in (0..k).rev() {
                idx[d] += 1;
                if idx[d] < m {
                    break;
                }
                idx[d] = 0;
            }
        }
        TensorRule { k, points, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.k..(i + 1) * self.k]
    }
}

/// Neumaier-compensated sum.
pub fn neumaier(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Componentwise Neumaier sum of complex values.
pub fn neumaier_c(xs: &[C64]) -> C64 {
    C64::new(
        neumaier(xs.iter().map(|z| z.re)),
        neumaier(xs.iter().map(|z| z.im)),
    )
}
