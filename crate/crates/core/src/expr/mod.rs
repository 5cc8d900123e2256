//! Expression trees over features and constants.
//!
//! Trees are stored as a flat prefix (Polish) sequence of nodes. A subtree is
//! always a contiguous slice, which keeps crossover and mutation to a splice.
//!
//! Evaluation uses protected operators so that any finite input yields a
//! finite output:
//!
//! - `div(a, b)` is `1` when `|b| < 1e-3`
//! - `sqrt(a)` is `sqrt(|a|)`
//! - `log(a)` is `0` when `|a| < 1e-3`, else `ln |a|`
//! - results that overflow saturate at `±f64::MAX`

mod config;
mod genetic;
mod sexpr;

pub use config::{GpConfig, RunSelectionMetric};
pub use genetic::{crossover, crossover_at, mutate, mutate_at, random_expression, random_with_method, InitMethod};

use crate::error::{Error, Result};

/// Threshold under which a divisor or log argument is treated as zero.
pub const PROTECTION_THRESHOLD: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Sqrt,
    Log,
}

impl Op {
    pub const ALL: [Op; 6] = [Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Sqrt, Op::Log];

    pub fn arity(self) -> usize {
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::Div => 2,
            Op::Sqrt | Op::Log => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Sqrt => "sqrt",
            Op::Log => "log",
        }
    }

    pub fn from_name(name: &str) -> Option<Op> {
        Op::ALL.into_iter().find(|op| op.name() == name)
    }

    #[inline]
    fn apply_unary(self, a: f64) -> f64 {
        match self {
            Op::Sqrt => a.abs().sqrt(),
            Op::Log => {
                if a.abs() < PROTECTION_THRESHOLD {
                    0.0
                } else {
                    saturate(a.abs().ln())
                }
            }
            _ => unreachable!("binary operator applied to one argument"),
        }
    }

    #[inline]
    fn apply_binary(self, a: f64, b: f64) -> f64 {
        match self {
            Op::Add => saturate(a + b),
            Op::Sub => saturate(a - b),
            Op::Mul => saturate(a * b),
            Op::Div => {
                if b.abs() < PROTECTION_THRESHOLD {
                    1.0
                } else {
                    saturate(a / b)
                }
            }
            _ => unreachable!("unary operator applied to two arguments"),
        }
    }
}

/// Clamp an overflowed result back into the finite range.
#[inline]
fn saturate(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else if v == f64::INFINITY {
        f64::MAX
    } else if v == f64::NEG_INFINITY {
        -f64::MAX
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Node {
    Func(Op),
    Feature(usize),
    Const(f64),
}

impl Node {
    pub fn arity(&self) -> usize {
        match self {
            Node::Func(op) => op.arity(),
            _ => 0,
        }
    }

    pub fn is_terminal(&self) -> bool {
        !matches!(self, Node::Func(_))
    }
}

/// A validated expression tree in prefix order.
#[derive(Clone, Debug, PartialEq)]
pub struct Expression {
    nodes: Vec<Node>,
}

impl Expression {
    /// Builds an expression from prefix-ordered nodes, checking arity.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Structure("empty node sequence".into()));
        }
        let mut open = 1usize;
        for (i, node) in nodes.iter().enumerate() {
            if open == 0 {
                return Err(Error::Structure(format!("trailing nodes after position {}", i - 1)));
            }
            if let Node::Const(c) = node {
                if !c.is_finite() {
                    return Err(Error::Structure(format!("non-finite constant at position {i}")));
                }
            }
            open = open - 1 + node.arity();
        }
        if open != 0 {
            return Err(Error::Structure(format!("{open} missing operand(s)")));
        }
        Ok(Expression { nodes })
    }

    pub(crate) fn from_nodes_unchecked(nodes: Vec<Node>) -> Self {
        debug_assert!(Expression::from_nodes(nodes.clone()).is_ok());
        Expression { nodes }
    }

    pub fn constant(value: f64) -> Self {
        Expression { nodes: vec![Node::Const(value)] }
    }

    pub fn feature(index: usize) -> Self {
        Expression { nodes: vec![Node::Feature(index)] }
    }

    pub fn unary(op: Op, child: Expression) -> Self {
        assert_eq!(op.arity(), 1, "{} is not unary", op.name());
        let mut nodes = Vec::with_capacity(child.len() + 1);
        nodes.push(Node::Func(op));
        nodes.extend(child.nodes);
        Expression { nodes }
    }

    pub fn binary(op: Op, left: Expression, right: Expression) -> Self {
        assert_eq!(op.arity(), 2, "{} is not binary", op.name());
        let mut nodes = Vec::with_capacity(left.len() + right.len() + 1);
        nodes.push(Node::Func(op));
        nodes.extend(left.nodes);
        nodes.extend(right.nodes);
        Expression { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Exclusive end of the subtree rooted at `start`.
    pub fn subtree_end(&self, start: usize) -> usize {
        subtree_end(&self.nodes, start)
    }

    /// Depth in nodes; a lone terminal has depth 1.
    pub fn depth(&self) -> usize {
        let mut max_depth = 0;
        // remaining child slots per open ancestor
        let mut stack: Vec<usize> = Vec::new();
        for node in &self.nodes {
            let depth = stack.len() + 1;
            max_depth = max_depth.max(depth);
            if let Some(top) = stack.last_mut() {
                *top -= 1;
            }
            if node.arity() > 0 {
                stack.push(node.arity());
            }
            while matches!(stack.last(), Some(0)) {
                stack.pop();
            }
        }
        max_depth
    }

    /// Depth of every node, in prefix order.
    pub fn node_depths(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack: Vec<usize> = Vec::new();
        for node in &self.nodes {
            out.push(stack.len() + 1);
            if let Some(top) = stack.last_mut() {
                *top -= 1;
            }
            if node.arity() > 0 {
                stack.push(node.arity());
            }
            while matches!(stack.last(), Some(0)) {
                stack.pop();
            }
        }
        out
    }

    /// Largest feature index referenced, if any.
    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Feature(i) => Some(*i),
                _ => None,
            })
            .max()
    }

    pub fn constants(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Const(c) => Some(*c),
            _ => None,
        })
    }

    /// Fails when the expression references a feature outside `n_features`.
    pub fn check_features(&self, n_features: usize) -> Result<()> {
        match self.max_feature() {
            Some(i) if i >= n_features => {
                Err(Error::input(format!("expression references x{i} but only {n_features} feature(s) are available")))
            }
            _ => Ok(()),
        }
    }

    /// Evaluates on one feature vector.
    ///
    /// Panics if a referenced feature index is out of bounds; use
    /// [`Expression::check_features`] first for untrusted inputs.
    pub fn evaluate(&self, features: &[f64]) -> f64 {
        let mut stack: Vec<f64> = Vec::with_capacity(16);
        for node in self.nodes.iter().rev() {
            match *node {
                Node::Feature(i) => stack.push(features[i]),
                Node::Const(c) => stack.push(c),
                Node::Func(op) => {
                    let v = if op.arity() == 1 {
                        let a = stack.pop().expect("validated arity");
                        op.apply_unary(a)
                    } else {
                        let a = stack.pop().expect("validated arity");
                        let b = stack.pop().expect("validated arity");
                        op.apply_binary(a, b)
                    };
                    stack.push(v);
                }
            }
        }
        stack.pop().expect("validated expression leaves one value")
    }

    /// Evaluates over column-major data: `columns[f][i]` is feature `f` of
    /// sample `i`. Produces bit-identical values to calling
    /// [`Expression::evaluate`] per sample.
    pub fn evaluate_columns(&self, columns: &[Vec<f64>], n_samples: usize) -> Vec<f64> {
        let mut stack: Vec<Vec<f64>> = Vec::with_capacity(16);
        let mut pool: Vec<Vec<f64>> = Vec::new();
        let take = |pool: &mut Vec<Vec<f64>>| pool.pop().unwrap_or_else(|| Vec::with_capacity(n_samples));
        for node in self.nodes.iter().rev() {
            match *node {
                Node::Feature(i) => {
                    let mut buf = take(&mut pool);
                    buf.clear();
                    buf.extend_from_slice(&columns[i][..n_samples]);
                    stack.push(buf);
                }
                Node::Const(c) => {
                    let mut buf = take(&mut pool);
                    buf.clear();
                    buf.resize(n_samples, c);
                    stack.push(buf);
                }
                Node::Func(op) => {
                    if op.arity() == 1 {
                        let mut a = stack.pop().expect("validated arity");
                        for v in a.iter_mut() {
                            *v = op.apply_unary(*v);
                        }
                        stack.push(a);
                    } else {
                        let mut a = stack.pop().expect("validated arity");
                        let b = stack.pop().expect("validated arity");
                        for (x, y) in a.iter_mut().zip(b.iter()) {
                            *x = op.apply_binary(*x, *y);
                        }
                        pool.push(b);
                        stack.push(a);
                    }
                }
            }
        }
        stack.pop().expect("validated expression leaves one value")
    }
}

pub(crate) fn subtree_end(nodes: &[Node], start: usize) -> usize {
    let mut open = 1usize;
    let mut i = start;
    while open > 0 {
        open = open - 1 + nodes[i].arity();
        i += 1;
    }
    i
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: usize) -> Expression {
        Expression::feature(i)
    }

    fn c(v: f64) -> Expression {
        Expression::constant(v)
    }

    #[test]
    fn evaluates_simple_arithmetic() {
        let e = Expression::binary(Op::Add, x(0), Expression::binary(Op::Mul, c(2.0), x(1)));
        assert_eq!(e.evaluate(&[1.0, 3.0]), 7.0);
    }

    #[test]
    fn protected_division() {
        let e = Expression::binary(Op::Div, c(1.0), c(0.0005));
        assert_eq!(e.evaluate(&[]), 1.0);
        let e = Expression::binary(Op::Div, c(1.0), c(-0.002));
        assert_eq!(e.evaluate(&[]), -500.0);
    }

    #[test]
    fn protected_sqrt_and_log() {
        assert_eq!(Expression::unary(Op::Sqrt, c(-4.0)).evaluate(&[]), 2.0);
        assert_eq!(Expression::unary(Op::Log, c(0.0)).evaluate(&[]), 0.0);
        assert_eq!(Expression::unary(Op::Log, c(-1.0)).evaluate(&[]), 0.0);
        let v = Expression::unary(Op::Log, c(-std::f64::consts::E)).evaluate(&[]);
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn overflow_saturates() {
        let big = Expression::binary(Op::Mul, c(1e200), c(1e200));
        assert_eq!(big.evaluate(&[]), f64::MAX);
        let e = Expression::binary(Op::Sub, big.clone(), big);
        assert_eq!(e.evaluate(&[]), 0.0);
    }

    #[test]
    fn rejects_bad_arity() {
        assert!(Expression::from_nodes(vec![Node::Func(Op::Add), Node::Feature(0)]).is_err());
        assert!(Expression::from_nodes(vec![Node::Feature(0), Node::Feature(1)]).is_err());
        assert!(Expression::from_nodes(vec![]).is_err());
        assert!(Expression::from_nodes(vec![Node::Func(Op::Sqrt), Node::Const(1.0)]).is_ok());
    }

    #[test]
    fn depth_counts_nodes() {
        assert_eq!(x(0).depth(), 1);
        let e = Expression::binary(Op::Add, x(0), Expression::unary(Op::Log, x(1)));
        assert_eq!(e.depth(), 3);
        assert_eq!(e.node_depths(), vec![1, 2, 2, 3]);
    }

    #[test]
    fn columns_match_pointwise() {
        let e =
            Expression::binary(Op::Div, Expression::unary(Op::Log, x(0)), Expression::binary(Op::Sub, x(1), c(0.5)));
        let cols = vec![vec![0.0, 1.0, 2.5, -3.0], vec![0.5, 0.5004, 9.0, -1.0]];
        let batch = e.evaluate_columns(&cols, 4);
        for i in 0..4 {
            let p = e.evaluate(&[cols[0][i], cols[1][i]]);
            assert_eq!(p.to_bits(), batch[i].to_bits());
        }
    }

    #[test]
    fn feature_check() {
        let e = Expression::binary(Op::Add, x(0), x(3));
        assert!(e.check_features(4).is_ok());
        assert!(e.check_features(3).is_err());
    }
}
