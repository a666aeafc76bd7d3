//! Expression DAGs over real parameters.
//!
//! `Var(i)` is the real input `u_{i+1}`. `Z(j)` is shorthand for the complex
//! coordinate `u_{2j+1} + i u_{2j+2}`, so an expression over an ambient
//! `C^N` has `2N` real inputs. Nodes are reference counted and shared;
//! substitution memoizes on node identity so shared subtrees stay shared.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use crate::error::{CurrentError, Result};
use crate::field::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Conj,
    Re,
    Im,
    Exp,
    Sin,
    Cos,
    Pos,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug)]
pub enum Node {
    Const(C64),
    Var(usize),
    Z(usize),
    Unary(UnOp, Expr),
    Binary(BinOp, Expr, Expr),
    Pow(Expr, i32),
}

#[derive(Clone, Debug)]
pub struct Expr(Arc<Node>);

/// Syntactic complex type of an expression in the ambient coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Const,
    Holo,
    Anti,
    General,
}

impl Kind {
    fn join(self, o: Kind) -> Kind {
        match (self, o) {
            (Kind::Const, k) | (k, Kind::Const) => k,
            (a, b) if a == b => a,
            _ => Kind::General,
        }
    }
}

fn is_zero(c: C64) -> bool {
    c.re == 0.0 && c.im == 0.0
}

fn is_one(c: C64) -> bool {
    c.re == 1.0 && c.im == 0.0
}

impl Expr {
    fn mk(n: Node) -> Expr {
        Expr(Arc::new(n))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn c(c: C64) -> Expr {
        Expr::mk(Node::Const(c))
    }

    pub fn real(x: f64) -> Expr {
        Expr::c(C64::new(x, 0.0))
    }

    pub fn zero() -> Expr {
        Expr::real(0.0)
    }

    pub fn one() -> Expr {
        Expr::real(1.0)
    }

    pub fn i() -> Expr {
        Expr::c(C64::new(0.0, 1.0))
    }

    /// Real input `u_{i+1}`.
    pub fn var(i: usize) -> Expr {
        Expr::mk(Node::Var(i))
    }

    /// Complex coordinate `z_{j+1}`.
    pub fn z(j: usize) -> Expr {
        Expr::mk(Node::Z(j))
    }

    pub fn as_const(&self) -> Option<C64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn ptr_eq(&self, o: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &o.0)
    }

    fn unary(op: UnOp, a: &Expr) -> Expr {
        if let Some(c) = a.as_const() {
            let v = match op {
                UnOp::Neg => -c,
                UnOp::Conj => c.conj(),
                UnOp::Re => C64::new(c.re, 0.0),
                UnOp::Im => C64::new(c.im, 0.0),
                UnOp::Exp => c.exp(),
                UnOp::Sin => c.sin(),
                UnOp::Cos => c.cos(),
                UnOp::Pos => C64::new(c.re.max(0.0), 0.0),
            };
            return Expr::c(v);
        }
        if op == UnOp::Neg {
            if let Node::Unary(UnOp::Neg, inner) = a.node() {
                return inner.clone();
            }
        }
        if op == UnOp::Conj {
            if let Node::Unary(UnOp::Conj, inner) = a.node() {
                return inner.clone();
            }
        }
        Expr::mk(Node::Unary(op, a.clone()))
    }

    fn binary(op: BinOp, a: &Expr, b: &Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => {
                let v = match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x / y,
                };
                return Expr::c(v);
            }
            (Some(x), None) => match op {
                BinOp::Add if is_zero(x) => return b.clone(),
                BinOp::Sub if is_zero(x) => return -b,
                BinOp::Mul if is_zero(x) => return Expr::zero(),
                BinOp::Mul if is_one(x) => return b.clone(),
                BinOp::Div if is_zero(x) => return Expr::zero(),
                _ => {}
            },
            (None, Some(y)) => match op {
                BinOp::Add | BinOp::Sub if is_zero(y) => return a.clone(),
                BinOp::Mul if is_zero(y) => return Expr::zero(),
                BinOp::Mul | BinOp::Div if is_one(y) => return a.clone(),
                _ => {}
            },
            _ => {}
        }
        Expr::mk(Node::Binary(op, a.clone(), b.clone()))
    }

    pub fn conj(&self) -> Expr {
        Expr::unary(UnOp::Conj, self)
    }
    pub fn re(&self) -> Expr {
        Expr::unary(UnOp::Re, self)
    }
    pub fn im(&self) -> Expr {
        Expr::unary(UnOp::Im, self)
    }
    pub fn exp(&self) -> Expr {
        Expr::unary(UnOp::Exp, self)
    }
    pub fn sin(&self) -> Expr {
        Expr::unary(UnOp::Sin, self)
    }
    pub fn cos(&self) -> Expr {
        Expr::unary(UnOp::Cos, self)
    }
    /// `max(Re self, 0)`.
    pub fn pos(&self) -> Expr {
        Expr::unary(UnOp::Pos, self)
    }

    pub fn powi(&self, n: i32) -> Expr {
        match n {
            0 => Expr::one(),
            1 => self.clone(),
            _ => match self.as_const() {
                Some(c) => Expr::c(c.powi(n)),
                None => Expr::mk(Node::Pow(self.clone(), n)),
            },
        }
    }

    pub fn scale(&self, c: C64) -> Expr {
        Expr::c(c) * self
    }

    /// Number of real inputs the expression reads.
    pub fn input_arity(&self) -> usize {
        let mut best = 0;
        self.visit(&mut |n| match n {
            Node::Var(i) => best = best.max(i + 1),
            Node::Z(j) => best = best.max(2 * j + 2),
            _ => {}
        });
        best
    }

    /// Visits every distinct node once (post-order).
    pub fn visit(&self, f: &mut dyn FnMut(&Node)) {
        let mut seen = std::collections::HashSet::new();
        fn go(e: &Expr, seen: &mut std::collections::HashSet<usize>, f: &mut dyn FnMut(&Node)) {
            let key = Arc::as_ptr(&e.0) as usize;
            if !seen.insert(key) {
                return;
            }
            match e.node() {
                Node::Unary(_, a) | Node::Pow(a, _) => go(a, seen, f),
                Node::Binary(_, a, b) => {
                    go(a, seen, f);
                    go(b, seen, f);
                }
                _ => {}
            }
            f(e.node());
        }
        go(self, &mut seen, f);
    }

    pub fn kind(&self) -> Kind {
        let mut memo = HashMap::new();
        self.kind_memo(&mut memo)
    }

    fn kind_memo(&self, memo: &mut HashMap<usize, Kind>) -> Kind {
        let key = Arc::as_ptr(&self.0) as usize;
        if let Some(k) = memo.get(&key) {
            return *k;
        }
        let k = match self.node() {
            Node::Const(_) => Kind::Const,
            Node::Var(_) => Kind::General,
            Node::Z(_) => Kind::Holo,
            Node::Unary(op, a) => {
                let ka = a.kind_memo(memo);
                match op {
                    UnOp::Neg | UnOp::Exp | UnOp::Sin | UnOp::Cos => ka,
                    UnOp::Conj => match ka {
                        Kind::Holo => Kind::Anti,
                        Kind::Anti => Kind::Holo,
                        k => k,
                    },
                    UnOp::Re | UnOp::Im | UnOp::Pos => {
                        if ka == Kind::Const {
                            Kind::Const
                        } else {
                            Kind::General
                        }
                    }
                }
            }
            Node::Binary(_, a, b) => a.kind_memo(memo).join(b.kind_memo(memo)),
            Node::Pow(a, _) => a.kind_memo(memo),
        };
        memo.insert(key, k);
        k
    }

    pub fn is_holomorphic(&self) -> bool {
        matches!(self.kind(), Kind::Holo | Kind::Const)
    }

    pub fn is_antiholomorphic(&self) -> bool {
        matches!(self.kind(), Kind::Anti | Kind::Const)
    }

    /// Rebuilds the tree bottom-up, replacing leaves through `leaf`.
    pub fn map_leaves(&self, leaf: &dyn Fn(&Node) -> Option<Expr>) -> Expr {
        let mut memo: HashMap<usize, Expr> = HashMap::new();
        self.map_memo(leaf, &mut memo)
    }

    fn map_memo(
        &self,
        leaf: &dyn Fn(&Node) -> Option<Expr>,
        memo: &mut HashMap<usize, Expr>,
    ) -> Expr {
        let key = Arc::as_ptr(&self.0) as usize;
        if let Some(e) = memo.get(&key) {
            return e.clone();
        }
        let out = match self.node() {
            Node::Const(_) | Node::Var(_) | Node::Z(_) => {
                leaf(self.node()).unwrap_or_else(|| self.clone())
            }
            Node::Unary(op, a) => Expr::unary(*op, &a.map_memo(leaf, memo)),
            Node::Binary(op, a, b) => {
                let a2 = a.map_memo(leaf, memo);
                let b2 = b.map_memo(leaf, memo);
                Expr::binary(*op, &a2, &b2)
            }
            Node::Pow(a, n) => a.map_memo(leaf, memo).powi(*n),
        };
        memo.insert(key, out.clone());
        out
    }

    /// Replaces real input `u_{i+1}` by `vars[i]`. `Z(j)` becomes
    /// `vars[2j] + i vars[2j+1]`.
    pub fn substitute_vars(&self, vars: &[Expr]) -> Expr {
        self.map_leaves(&|n| match n {
            Node::Var(i) => vars.get(*i).cloned(),
            Node::Z(j) => match (vars.get(2 * j), vars.get(2 * j + 1)) {
                (Some(a), Some(b)) => Some(a + &(Expr::i() * b)),
                _ => None,
            },
            _ => None,
        })
    }

    /// Composes an ambient expression with complex coordinate expressions:
    /// `Z(j)` becomes `coords[j]`, and the real inputs become the real and
    /// imaginary parts of the coordinates.
    pub fn compose(&self, coords: &[Expr]) -> Expr {
        self.map_leaves(&|n| match n {
            Node::Z(j) => coords.get(*j).cloned(),
            Node::Var(i) => coords
                .get(i / 2)
                .map(|c| if i % 2 == 0 { c.re() } else { c.im() }),
            _ => None,
        })
    }

    /// Structural equality.
    pub fn same(&self, o: &Expr) -> bool {
        if self.ptr_eq(o) {
            return true;
        }
        match (self.node(), o.node()) {
            (Node::Const(a), Node::Const(b)) => a == b,
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Z(a), Node::Z(b)) => a == b,
            (Node::Unary(p, a), Node::Unary(q, b)) => p == q && a.same(b),
            (Node::Binary(p, a1, a2), Node::Binary(q, b1, b2)) => {
                p == q && a1.same(b1) && a2.same(b2)
            }
            (Node::Pow(a, n), Node::Pow(b, m)) => n == m && a.same(b),
            _ => false,
        }
    }

    /// Prefix s-expression.
    pub fn to_sexpr(&self) -> String {
        let mut s = String::new();
        self.write_sexpr(&mut s);
        s
    }

    fn write_sexpr(&self, s: &mut String) {
        use std::fmt::Write;
        match self.node() {
            Node::Const(c) => {
                if c.im == 0.0 {
                    let _ = write!(s, "{:?}", c.re);
                } else {
                    let _ = write!(s, "(c {:?} {:?})", c.re, c.im);
                }
            }
            Node::Var(i) => {
                let _ = write!(s, "u{}", i + 1);
            }
            Node::Z(j) => {
                let _ = write!(s, "z{}", j + 1);
            }
            Node::Unary(op, a) => {
                let name = match op {
                    UnOp::Neg => "-",
                    UnOp::Conj => "conj",
                    UnOp::Re => "re",
                    UnOp::Im => "im",
                    UnOp::Exp => "exp",
                    UnOp::Sin => "sin",
                    UnOp::Cos => "cos",
                    UnOp::Pos => "pos",
                };
                s.push('(');
                s.push_str(name);
                s.push(' ');
                a.write_sexpr(s);
                s.push(')');
            }
            Node::Binary(op, a, b) => {
                let name = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                s.push('(');
                s.push_str(name);
                s.push(' ');
                a.write_sexpr(s);
                s.push(' ');
                b.write_sexpr(s);
                s.push(')');
            }
            Node::Pow(a, n) => {
                s.push_str("(pow ");
                a.write_sexpr(s);
                let _ = write!(s, " {})", n);
            }
        }
    }

    pub fn parse(text: &str) -> Result<Expr> {
        let mut p = Parser {
            src: text.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("trailing input"));
        }
        Ok(e)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_sexpr())
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> CurrentError {
        CurrentError::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn atom(&mut self) -> Result<(usize, String)> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let b = self.src[self.pos];
            if b.is_ascii_whitespace() || b == b'(' || b == b')' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected atom"));
        }
        Ok((
            start,
            String::from_utf8_lossy(&self.src[start..self.pos]).into_owned(),
        ))
    }

    fn number(&mut self) -> Result<f64> {
        let (start, tok) = self.atom()?;
        tok.parse::<f64>().map_err(|_| CurrentError::Parse {
            pos: start,
            msg: format!("expected number, found `{tok}`"),
        })
    }

    fn expect_close(&mut self) -> Result<()> {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&b')') {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err("expected `)`"))
        }
    }

    fn at_close(&mut self) -> bool {
        self.skip_ws();
        self.src.get(self.pos) == Some(&b')')
    }

    fn expr(&mut self) -> Result<Expr> {
        self.skip_ws();
        match self.src.get(self.pos) {
            None => Err(self.err("unexpected end of input")),
            Some(b')') => Err(self.err("unexpected `)`")),
            Some(b'(') => {
                self.pos += 1;
                let (op_pos, op) = self.atom()?;
                let e = match op.as_str() {
                    "c" => {
                        let re = self.number()?;
                        let im = self.number()?;
                        Expr::c(C64::new(re, im))
                    }
                    "pow" => {
                        let base = self.expr()?;
                        let (npos, tok) = self.atom()?;
                        let n: i32 = tok.parse().map_err(|_| CurrentError::Parse {
                            pos: npos,
                            msg: format!("expected integer exponent, found `{tok}`"),
                        })?;
                        base.powi(n)
                    }
                    "conj" | "re" | "im" | "exp" | "sin" | "cos" | "pos" => {
                        let a = self.expr()?;
                        match op.as_str() {
                            "conj" => a.conj(),
                            "re" => a.re(),
                            "im" => a.im(),
                            "exp" => a.exp(),
                            "sin" => a.sin(),
                            "cos" => a.cos(),
                            _ => a.pos(),
                        }
                    }
                    "+" | "*" => {
                        let mut acc = self.expr()?;
                        while !self.at_close() {
                            let b = self.expr()?;
                            acc = if op == "+" { &acc + &b } else { &acc * &b };
                        }
                        acc
                    }
                    "-" | "/" => {
                        let a = self.expr()?;
                        if self.at_close() {
                            if op == "-" {
                                -&a
                            } else {
                                Expr::one() / a
                            }
                        } else {
                            let mut acc = a;
                            while !self.at_close() {
                                let b = self.expr()?;
                                acc = if op == "-" { &acc - &b } else { &acc / &b };
                            }
                            acc
                        }
                    }
                    other => {
                        return Err(CurrentError::Parse {
                            pos: op_pos,
                            msg: format!("unknown operator `{other}`"),
                        })
                    }
                };
                self.expect_close()?;
                Ok(e)
            }
            Some(_) => {
                let (start, tok) = self.atom()?;
                let leaf = |prefix: char| -> Option<usize> {
                    let rest = tok.strip_prefix(prefix)?;
                    let n: usize = rest.parse().ok()?;
                    (n >= 1).then(|| n - 1)
                };
                if let Some(i) = leaf('u') {
                    return Ok(Expr::var(i));
                }
                if let Some(j) = leaf('z') {
                    return Ok(Expr::z(j));
                }
                tok.parse::<f64>()
                    .map(Expr::real)
                    .map_err(|_| CurrentError::Parse {
                        pos: start,
                        msg: format!("unknown symbol `{tok}`"),
                    })
            }
        }
    }
}

macro_rules! bin_impl {
    ($tr:ident, $m:ident, $op:expr) => {
        impl $tr<&Expr> for &Expr {
            type Output = Expr;
            fn $m(self, o: &Expr) -> Expr {
                Expr::binary($op, self, o)
            }
        }
        impl $tr<Expr> for Expr {
            type Output = Expr;
            fn $m(self, o: Expr) -> Expr {
                Expr::binary($op, &self, &o)
            }
        }
        impl $tr<&Expr> for Expr {
            type Output = Expr;
            fn $m(self, o: &Expr) -> Expr {
                Expr::binary($op, &self, o)
            }
        }
        impl $tr<Expr> for &Expr {
            type Output = Expr;
            fn $m(self, o: Expr) -> Expr {
                Expr::binary($op, self, &o)
            }
        }
    };
}

bin_impl!(Add, add, BinOp::Add);
bin_impl!(Sub, sub, BinOp::Sub);
bin_impl!(Mul, mul, BinOp::Mul);
bin_impl!(Div, div, BinOp::Div);

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::unary(UnOp::Neg, self)
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::unary(UnOp::Neg, &self)
    }
}

/// Sum of expressions, left to right.
pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
    terms.into_iter().fold(Expr::zero(), |a, b| a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folding() {
        let z = Expr::z(0);
        assert!((&z * &Expr::one()).same(&z));
        assert!((&z + &Expr::zero()).same(&z));
        assert_eq!(
            (Expr::real(2.0) * Expr::real(3.0)).as_const(),
            Some(C64::new(6.0, 0.0))
        );
        assert!(z.conj().conj().same(&z));
    }

    #[test]
    fn kinds() {
        let z = Expr::z(0);
        let w = Expr::z(1);
        assert_eq!((&z * &w).kind(), Kind::Holo);
        assert_eq!((z.conj() * w.conj()).kind(), Kind::Anti);
        assert_eq!((&z * &w.conj()).kind(), Kind::General);
        assert_eq!(Expr::var(0).kind(), Kind::General);
        assert_eq!((z.exp() + Expr::real(2.0)).kind(), Kind::Holo);
        assert_eq!(z.re().kind(), Kind::General);
    }

    #[test]
    fn sexpr_round_trip() {
        let src = "(* (c 1.5 -2.0) (pow (conj z2) 3) (exp (- u1)) (pos (re z1)))";
        let e = Expr::parse(src).unwrap();
        let printed = e.to_sexpr();
        let again = Expr::parse(&printed).unwrap();
        assert!(e.same(&again), "{printed}");
        assert_eq!(again.to_sexpr(), printed);
    }

    #[test]
    fn parse_errors_carry_position() {
        match Expr::parse("(+ z1 (foo z2))") {
            Err(CurrentError::Parse { pos, msg }) => {
                assert_eq!(pos, 7);
                assert!(msg.contains("foo"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            Expr::parse("(+ z1"),
            Err(CurrentError::Parse { .. })
        ));
        assert!(matches!(Expr::parse("z0"), Err(CurrentError::Parse { .. })));
    }

    #[test]
    fn compose_maps_coordinates() {
        // pi = z1 * conj(z2) composed with (u1, u1^2)
        let pi = Expr::z(0) * Expr::z(1).conj();
        let u = Expr::var(0);
        let out = pi.compose(&[u.clone(), u.powi(2)]);
        assert_eq!(out.input_arity(), 1);
        assert_eq!(pi.input_arity(), 4);
    }
}
