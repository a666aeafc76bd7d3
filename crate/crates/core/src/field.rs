//! Scalar types the expression tape can be evaluated over.
//!
//! Every expression is a complex-valued function of real inputs. The same
//! tape is run over plain complex numbers, rectangular complex intervals
//! (for enclosures and Lipschitz bounds) and forward-mode duals carrying
//! derivatives with respect to real directions.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

pub type C64 = Complex64;

pub trait Field:
    Copy
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_c64(c: C64) -> Self;
    fn conj(self) -> Self;
    fn re(self) -> Self;
    fn im(self) -> Self;
    fn exp(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// `max(Re x, 0)`.
    fn pos(self) -> Self;
    /// Real part of a representative point value.
    fn mid_re(self) -> f64;
}

impl Field for C64 {
    #[inline]
    fn from_c64(c: C64) -> Self {
        c
    }
    #[inline]
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    #[inline]
    fn re(self) -> Self {
        C64::new(self.re, 0.0)
    }
    #[inline]
    fn im(self) -> Self {
        C64::new(self.im, 0.0)
    }
    #[inline]
    fn exp(self) -> Self {
        Complex64::exp(self)
    }
    #[inline]
    fn sin(self) -> Self {
        Complex64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        Complex64::cos(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        Complex64::powi(&self, n)
    }
    #[inline]
    fn pos(self) -> Self {
        C64::new(self.re.max(0.0), 0.0)
    }
    #[inline]
    fn mid_re(self) -> f64 {
        self.re
    }
}

/// Closed real interval `[lo, hi]`. Infinite endpoints mean "unbounded".
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const ENTIRE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(!(lo > hi), "inverted interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn mag(self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn width(self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn hull(self, o: Interval) -> Interval {
        Interval::new(self.lo.min(o.lo), self.hi.max(o.hi))
    }

    fn sane(self) -> Self {
        if self.lo.is_nan() || self.hi.is_nan() {
            Interval::ENTIRE
        } else {
            self
        }
    }

    pub fn sqr(self) -> Self {
        if self.lo >= 0.0 {
            Interval::new(self.lo * self.lo, self.hi * self.hi)
        } else if self.hi <= 0.0 {
            Interval::new(self.hi * self.hi, self.lo * self.lo)
        } else {
            Interval::new(0.0, self.mag() * self.mag())
        }
    }

    pub fn exp(self) -> Self {
        Interval::new(self.lo.exp(), self.hi.exp())
    }

    pub fn sinh(self) -> Self {
        Interval::new(self.lo.sinh(), self.hi.sinh())
    }

    pub fn cosh(self) -> Self {
        let a = self.lo.cosh();
        let b = self.hi.cosh();
        if self.contains(0.0) {
            Interval::new(1.0, a.max(b))
        } else {
            Interval::new(a.min(b), a.max(b))
        }
    }

    /// Enclosure of `cos` over the interval.
    pub fn cos(self) -> Self {
        if !self.lo.is_finite()
            || !self.hi.is_finite()
            || self.width() >= 2.0 * std::f64::consts::PI
        {
            return Interval::new(-1.0, 1.0);
        }
        let (a, b) = (self.lo.cos(), self.hi.cos());
        let mut lo = a.min(b);
        let mut hi = a.max(b);
        // extrema of cos sit at k*pi
        let pi = std::f64::consts::PI;
        let k0 = (self.lo / pi).ceil() as i64;
        let k1 = (self.hi / pi).floor() as i64;
        for k in k0..=k1 {
            if k.rem_euclid(2) == 0 {
                hi = 1.0;
            } else {
                lo = -1.0;
            }
        }
        Interval::new(lo, hi)
    }

    pub fn sin(self) -> Self {
        let half_pi = std::f64::consts::FRAC_PI_2;
        (self - Interval::point(half_pi)).cos()
    }

    pub fn recip(self) -> Self {
        if self.contains(0.0) {
            Interval::ENTIRE
        } else {
            let (a, b) = (1.0 / self.lo, 1.0 / self.hi);
            Interval::new(a.min(b), a.max(b))
        }
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, o: Interval) -> Interval {
        Interval::new(self.lo + o.lo, self.hi + o.hi).sane()
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, o: Interval) -> Interval {
        Interval::new(self.lo - o.hi, self.hi - o.lo).sane()
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        let p = [
            self.lo * o.lo,
            self.lo * o.hi,
            self.hi * o.lo,
            self.hi * o.hi,
        ];
        if p.iter().any(|v| v.is_nan()) {
            // 0 * inf
            return Interval::ENTIRE;
        }
        let lo = p.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Interval::new(lo, hi)
    }
}

/// Rectangular complex interval `re + i im`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CInterval {
    pub re: Interval,
    pub im: Interval,
}

impl CInterval {
    pub fn new(re: Interval, im: Interval) -> Self {
        CInterval { re, im }
    }

    pub fn real(re: Interval) -> Self {
        CInterval {
            re,
            im: Interval::point(0.0),
        }
    }

    /// Upper bound on the modulus over the rectangle.
    pub fn mag(self) -> f64 {
        self.re.mag().hypot(self.im.mag())
    }

    pub fn hull(self, o: CInterval) -> CInterval {
        CInterval::new(self.re.hull(o.re), self.im.hull(o.im))
    }

    pub fn is_bounded(self) -> bool {
        self.re.lo.is_finite()
            && self.re.hi.is_finite()
            && self.im.lo.is_finite()
            && self.im.hi.is_finite()
    }
}

impl Add for CInterval {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        CInterval::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for CInterval {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        CInterval::new(self.re - o.re, self.im - o.im)
    }
}

impl Neg for CInterval {
    type Output = Self;
    fn neg(self) -> Self {
        CInterval::new(-self.re, -self.im)
    }
}

impl Mul for CInterval {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        CInterval::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

impl Div for CInterval {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let den = (o.re.sqr() + o.im.sqr()).recip();
        let num = self * o.conj();
        CInterval::new(num.re * den, num.im * den)
    }
}

impl Field for CInterval {
    fn from_c64(c: C64) -> Self {
        CInterval::new(Interval::point(c.re), Interval::point(c.im))
    }
    fn conj(self) -> Self {
        CInterval::new(self.re, -self.im)
    }
    fn re(self) -> Self {
        CInterval::real(self.re)
    }
    fn im(self) -> Self {
        CInterval::real(self.im)
    }
    fn exp(self) -> Self {
        let m = self.re.exp();
        CInterval::new(m * self.im.cos(), m * self.im.sin())
    }
    fn sin(self) -> Self {
        // sin(a+ib) = sin a cosh b + i cos a sinh b
        CInterval::new(
            self.re.sin() * self.im.cosh(),
            self.re.cos() * self.im.sinh(),
        )
    }
    fn cos(self) -> Self {
        // cos(a+ib) = cos a cosh b - i sin a sinh b
        CInterval::new(
            self.re.cos() * self.im.cosh(),
            -(self.re.sin() * self.im.sinh()),
        )
    }
    fn powi(self, n: i32) -> Self {
        if n < 0 {
            return CInterval::from_c64(C64::new(1.0, 0.0)) / self.powi(-n);
        }
        let mut acc = CInterval::from_c64(C64::new(1.0, 0.0));
        let mut base = self;
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }
    fn pos(self) -> Self {
        CInterval::real(Interval::new(self.re.lo.max(0.0), self.re.hi.max(0.0)))
    }
    fn mid_re(self) -> f64 {
        0.5 * (self.re.lo + self.re.hi)
    }
}

/// Forward-mode dual: a value and its derivatives along `K` real directions.
#[derive(Clone, Copy, Debug)]
pub struct Dual<S, const K: usize> {
    pub v: S,
    pub d: [S; K],
}

impl<S: Field, const K: usize> Dual<S, K> {
    pub fn constant(v: S) -> Self {
        Dual {
            v,
            d: [S::from_c64(C64::new(0.0, 0.0)); K],
        }
    }

    pub fn new(v: S, d: [S; K]) -> Self {
        Dual { v, d }
    }

    #[inline]
    fn scale_d(self, s: S) -> [S; K] {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x = *x * s;
        }
        d
    }
}

impl<S: Field, const K: usize> Add for Dual<S, K> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let mut d = self.d;
        for (x, y) in d.iter_mut().zip(o.d.iter()) {
            *x = *x + *y;
        }
        Dual { v: self.v + o.v, d }
    }
}

impl<S: Field, const K: usize> Sub for Dual<S, K> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        let mut d = self.d;
        for (x, y) in d.iter_mut().zip(o.d.iter()) {
            *x = *x - *y;
        }
        Dual { v: self.v - o.v, d }
    }
}

impl<S: Field, const K: usize> Neg for Dual<S, K> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x = -*x;
        }
        Dual { v: -self.v, d }
    }
}

impl<S: Field, const K: usize> Mul for Dual<S, K> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut d = self.d;
        for (x, y) in d.iter_mut().zip(o.d.iter()) {
            *x = *x * o.v + self.v * *y;
        }
        Dual { v: self.v * o.v, d }
    }
}

impl<S: Field, const K: usize> Div for Dual<S, K> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.v / o.v;
        let mut d = self.d;
        for (x, y) in d.iter_mut().zip(o.d.iter()) {
            *x = (*x - q * *y) / o.v;
        }
        Dual { v: q, d }
    }
}

impl<S: Field, const K: usize> Field for Dual<S, K> {
    fn from_c64(c: C64) -> Self {
        Dual::constant(S::from_c64(c))
    }
    fn conj(self) -> Self {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x = x.conj();
        }
        Dual {
            v: self.v.conj(),
            d,
        }
    }
    fn re(self) -> Self {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x = x.re();
        }
        Dual { v: self.v.re(), d }
    }
    fn im(self) -> Self {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x = x.im();
        }
        Dual { v: self.v.im(), d }
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        Dual {
            v: e,
            d: self.scale_d(e),
        }
    }
    fn sin(self) -> Self {
        Dual {
            v: self.v.sin(),
            d: self.scale_d(self.v.cos()),
        }
    }
    fn cos(self) -> Self {
        Dual {
            v: self.v.cos(),
            d: self.scale_d(-self.v.sin()),
        }
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Dual::from_c64(C64::new(1.0, 0.0));
        }
        let lower = self.v.powi(n - 1);
        let factor = S::from_c64(C64::new(n as f64, 0.0)) * lower;
        Dual {
            v: lower * self.v,
            d: self.scale_d(factor),
        }
    }
    fn pos(self) -> Self {
        // derivative of max(Re x, 0) is Re x' on the active branch; the kink
        // is a null set for the integrands built from it
        let active = self.v.mid_re() > 0.0;
        let mut d = self.d;
        for x in d.iter_mut() {
            *x = if active {
                x.re()
            } else {
                S::from_c64(C64::new(0.0, 0.0))
            };
        }
        Dual { v: self.v.pos(), d }
    }
    fn mid_re(self) -> f64 {
        self.v.mid_re()
    }
}
