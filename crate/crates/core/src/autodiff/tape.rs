use std::cell::RefCell;
use std::ops::{Add, Mul, Neg, Sub};

use super::{Coeff, Real};
use crate::error::{Error, Result};

/// Primitive recorded on a [`Tape`] node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Input,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale,
    AddConst,
    Exp,
    Ln,
    Tanh,
    Sin,
    Cos,
    Sqrt,
    Powf,
    MaxConst,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    op: OpKind,
    arity: u8,
    inputs: [u32; 2],
    partials: [f64; 2],
    value: f64,
}

/// Append-only record of a scalar program. Every node's inputs precede it,
/// so a single reverse sweep visits each node once.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: u32,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(#{} = {})", self.index, self.value())
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(n)),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, op: OpKind, arity: u8, inputs: [u32; 2], partials: [f64; 2], value: f64) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len() as u32;
        nodes.push(Node {
            op,
            arity,
            inputs,
            partials,
            value,
        });
        Var { tape: self, index }
    }

    pub fn input(&self, value: f64) -> Var<'_> {
        self.push(OpKind::Input, 0, [0; 2], [0.0; 2], value)
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        self.push(OpKind::Const, 0, [0; 2], [0.0; 2], value)
    }

    /// Reverse sweep from `output`; returns the adjoint of every node.
    ///
    /// Fails on the first node (in recording order) whose value or local
    /// partial is not finite.
    pub fn adjoints(&self, output: Var<'_>) -> Result<Vec<f64>> {
        let nodes = self.nodes.borrow();
        if let Some((node, n)) = nodes.iter().enumerate().find(|(_, n)| {
            !n.value.is_finite() || n.partials[..n.arity as usize].iter().any(|p| !p.is_finite())
        }) {
            return Err(Error::NonFinite { node, op: n.op });
        }
        let mut adj = vec![0.0; nodes.len()];
        adj[output.index as usize] = 1.0;
        for i in (0..=output.index as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let n = &nodes[i];
            for k in 0..n.arity as usize {
                adj[n.inputs[k] as usize] += a * n.partials[k];
            }
        }
        Ok(adj)
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.tape.nodes.borrow()[self.index as usize].value
    }

    pub fn index(&self) -> usize {
        self.index as usize
    }

    fn unary(self, op: OpKind, partial: f64, value: f64) -> Var<'t> {
        self.tape.push(op, 1, [self.index, 0], [partial, 0.0], value)
    }

    fn binary(self, rhs: Var<'t>, op: OpKind, partials: [f64; 2], value: f64) -> Var<'t> {
        debug_assert!(std::ptr::eq(self.tape, rhs.tape), "variables from different tapes");
        self.tape.push(op, 2, [self.index, rhs.index], partials, value)
    }

    /// Division; a zero divisor yields a non-finite node that
    /// [`Tape::adjoints`] reports.
    pub fn div(self, rhs: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), rhs.value());
        self.binary(rhs, OpKind::Div, [1.0 / b, -a / (b * b)], a / b)
    }

    pub fn ln(self) -> Var<'t> {
        let a = self.value();
        self.unary(OpKind::Ln, 1.0 / a, a.ln())
    }

    pub fn sqrt(self) -> Var<'t> {
        let r = self.value().sqrt();
        self.unary(OpKind::Sqrt, 0.5 / r, r)
    }

    pub fn powf(self, p: f64) -> Var<'t> {
        let a = self.value();
        let d = if p == 0.0 { 0.0 } else { p * a.powf(p - 1.0) };
        self.unary(OpKind::Powf, d, a.powf(p))
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        let v = self.value() + rhs.value();
        self.binary(rhs, OpKind::Add, [1.0, 1.0], v)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        let v = self.value() - rhs.value();
        self.binary(rhs, OpKind::Sub, [1.0, -1.0], v)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), rhs.value());
        self.binary(rhs, OpKind::Mul, [b, a], a * b)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        let v = -self.value();
        self.unary(OpKind::Neg, -1.0, v)
    }
}

impl<'t> Real for Var<'t> {
    fn lift(&self, value: f64) -> Self {
        self.tape.constant(value)
    }
    fn value(&self) -> f64 {
        Var::value(self)
    }
    fn scale(self, k: f64) -> Self {
        let v = self.value() * k;
        self.unary(OpKind::Scale, k, v)
    }
    fn add_const(self, c: f64) -> Self {
        let v = self.value() + c;
        self.unary(OpKind::AddConst, 1.0, v)
    }
    fn exp(self) -> Self {
        let e = self.value().exp();
        self.unary(OpKind::Exp, e, e)
    }
    fn tanh(self) -> Self {
        let t = self.value().tanh();
        self.unary(OpKind::Tanh, 1.0 - t * t, t)
    }
    fn sin(self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.unary(OpKind::Sin, c, s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.unary(OpKind::Cos, -s, c)
    }
    fn max_const(self, c: f64) -> Self {
        let a = self.value();
        if a > c {
            self.unary(OpKind::MaxConst, 1.0, a)
        } else {
            self.unary(OpKind::MaxConst, 0.0, c)
        }
    }
}

impl<'t> Coeff<Var<'t>> for Var<'t> {
    fn times(self, s: Var<'t>) -> Var<'t> {
        self * s
    }
    fn as_real(self, _like: &Var<'t>) -> Var<'t> {
        self
    }
}

/// Gradient of a scalar program with respect to its parameter vector.
///
/// One forward pass records the program on a fresh tape, one reverse sweep
/// accumulates adjoints. Parameters occupy the first `theta.len()` nodes.
pub fn grad_params<F>(loss: F, theta: &[f64]) -> Result<Vec<f64>>
where
    F: for<'t> Fn(&[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::with_capacity(theta.len() * 4);
    let params: Vec<Var<'_>> = theta.iter().map(|&v| tape.input(v)).collect();
    let out = loss(&params);
    let adj = tape.adjoints(out)?;
    Ok(adj[..theta.len()].to_vec())
}

/// Largest componentwise `|analytic − central difference| / (|analytic| + step)`.
pub fn grad_check<F>(loss: F, theta: &[f64], step: f64) -> Result<f64>
where
    F: for<'t> Fn(&[Var<'t>]) -> Var<'t>,
{
    if step <= 0.0 {
        return Err(Error::config("finite-difference step must be positive"));
    }
    let analytic = grad_params(&loss, theta)?;
    let eval = |p: &[f64]| -> f64 {
        let tape = Tape::with_capacity(p.len() * 4);
        let vars: Vec<Var<'_>> = p.iter().map(|&v| tape.input(v)).collect();
        loss(&vars).value()
    };
    let mut probe = theta.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        probe[i] = theta[i] + step;
        let up = eval(&probe);
        probe[i] = theta[i] - step;
        let down = eval(&probe);
        probe[i] = theta[i];
        let fd = (up - down) / (2.0 * step);
        worst = worst.max((analytic[i] - fd).abs() / (analytic[i].abs() + step));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quadratic() {
        let g = grad_params(|p| p[0] * p[0], &[3.0]).unwrap();
        assert_eq!(g, vec![6.0]);
    }

    #[test]
    fn sum_has_unit_gradient() {
        let theta = [0.3, -1.2, 4.0, 7.5];
        let g = grad_params(|p| p[1..].iter().fold(p[0], |acc, &v| acc + v), &theta).unwrap();
        assert_eq!(g, vec![1.0; 4]);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let theta = [1.0, 2.0];
        let g = grad_params(|p| p[0].lift(5.0), &theta).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        let err = grad_check(|p| p[0].lift(5.0), &theta, 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn quadratic_grad_check() {
        let theta = [0.4, -1.1, 2.5];
        let err = grad_check(|p| p[0] * p[0] + p[1] * p[2].scale(3.0) + p[2] * p[2], &theta, 1e-5).unwrap();
        assert!(err <= 1e-8, "err {err}");
    }

    #[test]
    fn non_finite_is_reported_with_node_and_op() {
        let err = grad_params(|p| p[0].ln(), &[-1.0]).unwrap_err();
        match err {
            Error::NonFinite { node, op } => {
                assert_eq!(node, 1);
                assert_eq!(op, OpKind::Ln);
            }
            other => panic!("unexpected {other}"),
        }
        let err = grad_params(|p| p[0].div(p[1]), &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { op: OpKind::Div, .. }));
    }

    #[test]
    fn transcendental_primitives() {
        let x: f64 = 0.7;
        let g = grad_params(|p| p[0].exp() + p[0].tanh() + p[0].sin() + p[0].cos() + p[0].sqrt() + p[0].powf(3.0) + p[0].ln(), &[x]).unwrap();
        let t = x.tanh();
        let expect = x.exp() + (1.0 - t * t) + x.cos() - x.sin() + 0.5 / x.sqrt() + 3.0 * x * x + 1.0 / x;
        assert!((g[0] - expect).abs() < 1e-14);
    }

    #[test]
    fn backward_visits_each_node_once() {
        // x*x*x: the shared input accumulates three contributions.
        let g = grad_params(|p| p[0] * p[0] * p[0], &[2.0]).unwrap();
        assert_eq!(g, vec![12.0]);
    }

    fn program<'t>(p: &[Var<'t>], k: usize) -> Var<'t> {
        match k % 3 {
            0 => p[0].tanh() * p[1] + p[2].exp().scale(0.1),
            1 => (p[0] * p[2]).sin() - p[1].square(),
            _ => p[1].cos() * p[0].add_const(2.0) + p[2],
        }
    }

    proptest! {
        #[test]
        fn reverse_mode_is_linear(
            theta in prop::collection::vec(-2.0f64..2.0, 3),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
            kf in 0usize..3,
            kg in 0usize..3,
        ) {
            let gf = grad_params(|p| program(p, kf), &theta).unwrap();
            let gg = grad_params(|p| program(p, kg), &theta).unwrap();
            let gc = grad_params(|p| program(p, kf).scale(alpha) + program(p, kg).scale(beta), &theta).unwrap();
            for i in 0..3 {
                prop_assert!((gc[i] - (alpha * gf[i] + beta * gg[i])).abs() <= 1e-12);
            }
        }

        #[test]
        fn gradients_are_deterministic(theta in prop::collection::vec(-2.0f64..2.0, 3)) {
            let a = grad_params(|p| program(p, 0) * program(p, 1), &theta).unwrap();
            let b = grad_params(|p| program(p, 0) * program(p, 1), &theta).unwrap();
            prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}
