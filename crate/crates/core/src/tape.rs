//! Straight-line instruction tapes compiled from expression DAGs.

use std::collections::HashMap;

use crate::error::{CurrentError, Result};
use crate::expr::{BinOp, Expr, Node, UnOp};
use crate::field::{Field, C64};

#[derive(Clone, Copy, Debug)]
enum Instr {
    Const(C64),
    Var(u32),
    Z(u32),
    Un(UnOp, u32),
    Bin(BinOp, u32, u32),
    Pow(u32, i32),
}

/// A compiled multi-output expression. Shared subexpressions are computed once.
#[derive(Clone, Debug)]
pub struct Tape {
    instrs: Vec<Instr>,
    outputs: Vec<u32>,
    n_inputs: usize,
}

impl Tape {
    /// Compiles `exprs`, which may read at most `n_inputs` real inputs.
    pub fn compile(exprs: &[Expr], n_inputs: usize) -> Result<Tape> {
        let mut t = Tape {
            instrs: Vec::new(),
            outputs: Vec::with_capacity(exprs.len()),
            n_inputs,
        };
        let mut memo: HashMap<usize, u32> = HashMap::new();
        for e in exprs {
            let need = e.input_arity();
            if need > n_inputs {
                return Err(CurrentError::ArityMismatch {
                    expected: n_inputs,
                    got: need,
                });
            }
            let slot = t.emit(e, &mut memo);
            t.outputs.push(slot);
        }
        Ok(t)
    }

    fn emit(&mut self, e: &Expr, memo: &mut HashMap<usize, u32>) -> u32 {
        let key = node_key(e);
        if let Some(s) = memo.get(&key) {
            return *s;
        }
        let ins = match e.node() {
            Node::Const(c) => Instr::Const(*c),
            Node::Var(i) => Instr::Var(*i as u32),
            Node::Z(j) => Instr::Z(*j as u32),
            Node::Unary(op, a) => {
                let a = self.emit(a, memo);
                Instr::Un(*op, a)
            }
            Node::Binary(op, a, b) => {
                let a = self.emit(a, memo);
                let b = self.emit(b, memo);
                Instr::Bin(*op, a, b)
            }
            Node::Pow(a, n) => {
                let a = self.emit(a, memo);
                Instr::Pow(a, *n)
            }
        };
        self.instrs.push(ins);
        let slot = (self.instrs.len() - 1) as u32;
        memo.insert(key, slot);
        slot
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    /// Evaluates at real inputs (embedded in `S`). `scratch` is reused
    /// between calls to avoid allocation.
    pub fn eval_into<S: Field>(&self, inputs: &[S], scratch: &mut Vec<S>, out: &mut [S]) {
        debug_assert!(inputs.len() >= self.n_inputs);
        let i_unit = S::from_c64(C64::new(0.0, 1.0));
        scratch.clear();
        scratch.reserve(self.instrs.len());
        for ins in &self.instrs {
            let v = match *ins {
                Instr::Const(c) => S::from_c64(c),
                Instr::Var(i) => inputs[i as usize],
                Instr::Z(j) => inputs[2 * j as usize] + i_unit * inputs[2 * j as usize + 1],
                Instr::Un(op, a) => {
                    let a = scratch[a as usize];
                    match op {
                        UnOp::Neg => -a,
                        UnOp::Conj => a.conj(),
                        UnOp::Re => a.re(),
                        UnOp::Im => a.im(),
                        UnOp::Exp => a.exp(),
                        UnOp::Sin => a.sin(),
                        UnOp::Cos => a.cos(),
                        UnOp::Pos => a.pos(),
                    }
                }
                Instr::Bin(op, a, b) => {
                    let (a, b) = (scratch[a as usize], scratch[b as usize]);
                    match op {
                        BinOp::Add => a + b,
                        BinOp::Sub => a - b,
                        BinOp::Mul => a * b,
                        BinOp::Div => a / b,
                    }
                }
                Instr::Pow(a, n) => scratch[a as usize].powi(n),
            };
            scratch.push(v);
        }
        for (o, s) in out.iter_mut().zip(&self.outputs) {
            *o = scratch[*s as usize];
        }
    }

    pub fn eval<S: Field>(&self, inputs: &[S]) -> Vec<S> {
        let mut scratch = Vec::new();
        let mut out = vec![S::from_c64(C64::new(0.0, 0.0)); self.outputs.len()];
        self.eval_into(inputs, &mut scratch, &mut out);
        out
    }

    /// Plain complex evaluation at real inputs.
    pub fn eval_real(&self, inputs: &[f64]) -> Vec<C64> {
        let xs: Vec<C64> = inputs.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.eval(&xs)
    }
}

fn node_key(e: &Expr) -> usize {
    e.node() as *const Node as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{CInterval, Dual, Interval};

    #[test]
    fn evaluates_shared_dag() {
        let z = Expr::z(0);
        let sq = &z * &z;
        let e = &sq + &sq.conj();
        let t = Tape::compile(&[e, sq.clone()], 2).unwrap();
        // z, z*z, conj, + and the repeated sq reuse one slot
        assert_eq!(t.len(), 4);
        let v = t.eval_real(&[1.0, 2.0]);
        let z = C64::new(1.0, 2.0);
        assert!((v[0] - (z * z + (z * z).conj())).norm() < 1e-14);
        assert!((v[1] - z * z).norm() < 1e-14);
    }

    #[test]
    fn arity_is_checked() {
        assert!(Tape::compile(&[Expr::z(1)], 2).is_err());
    }

    #[test]
    fn dual_derivative_matches_analytic() {
        // d/du of u^3 sin(u) at u = 0.7
        let u = Expr::var(0);
        let e = u.powi(3) * u.sin();
        let t = Tape::compile(&[e], 1).unwrap();
        let x = 0.7f64;
        let inp = [Dual::<C64, 1>::new(C64::new(x, 0.0), [C64::new(1.0, 0.0)])];
        let out = t.eval(&inp)[0];
        let exact = 3.0 * x * x * x.sin() + x.powi(3) * x.cos();
        assert!((out.d[0].re - exact).abs() < 1e-14);
    }

    #[test]
    fn interval_encloses_points() {
        let u = Expr::var(0);
        let e = (u.clone() * Expr::real(6.0)).cos() * u.exp();
        let t = Tape::compile(&[e], 1).unwrap();
        let b = [CInterval::real(Interval::new(0.1, 0.9))];
        let enc = t.eval(&b)[0];
        for i in 0..=100 {
            let x = 0.1 + 0.8 * i as f64 / 100.0;
            let v = t.eval_real(&[x])[0];
            assert!(enc.re.contains(v.re) && enc.im.contains(v.im));
        }
    }
}
