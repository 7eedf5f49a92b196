use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::{Arc, OnceLock};

use super::profile::Profile;
use super::{Chart, ExprError};

/// Univariate primitives a field may be composed with.
#[derive(Clone, Debug)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    /// `order`-th derivative of `u ↦ exp(-1/u)` for `u > 0`, zero otherwise.
    /// All mollifier bumps and smooth steps are built from this primitive.
    ExpInv(u32),
    /// `order`-th derivative of a piecewise-polynomial profile.
    Profile(Arc<Profile>, u32),
}

impl Func {
    pub fn name(&self) -> String {
        match self {
            Func::Sin => "sin".into(),
            Func::Cos => "cos".into(),
            Func::Exp => "exp".into(),
            Func::Ln => "ln".into(),
            Func::Sqrt => "sqrt".into(),
            Func::ExpInv(0) => "expinv".into(),
            Func::ExpInv(k) => format!("expinv_{k}"),
            Func::Profile(p, 0) => p.name().to_string(),
            Func::Profile(p, k) => format!("{}_{k}", p.name()),
        }
    }

    fn same(&self, other: &Func) -> bool {
        match (self, other) {
            (Func::Sin, Func::Sin)
            | (Func::Cos, Func::Cos)
            | (Func::Exp, Func::Exp)
            | (Func::Ln, Func::Ln)
            | (Func::Sqrt, Func::Sqrt) => true,
            (Func::ExpInv(a), Func::ExpInv(b)) => a == b,
            (Func::Profile(p, a), Func::Profile(q, b)) => Arc::ptr_eq(p, q) && a == b,
            _ => false,
        }
    }

    fn apply(&self, u: f64) -> Result<f64, ExprError> {
        let v = match self {
            Func::Sin => u.sin(),
            Func::Cos => u.cos(),
            Func::Exp => u.exp(),
            Func::Ln => {
                if u <= 0.0 {
                    return Err(ExprError::Domain(format!("ln({u})")));
                }
                u.ln()
            }
            Func::Sqrt => {
                if u < 0.0 {
                    return Err(ExprError::Domain(format!("sqrt({u})")));
                }
                u.sqrt()
            }
            Func::ExpInv(k) => expinv(u, *k),
            Func::Profile(p, k) => p.eval_derivative(u, *k),
        };
        Ok(v)
    }
}

/// Coefficient tables of the polynomials `p_k` with
/// `d^k/du^k exp(-1/u) = exp(-1/u) p_k(1/u)`.
fn expinv_polys(order: usize) -> Vec<f64> {
    static TABLE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut polys = vec![vec![1.0]];
        for _ in 0..16 {
            let prev = polys.last().unwrap();
            polys.push(next_expinv_poly(prev));
        }
        polys
    });
    if order < table.len() {
        return table[order].clone();
    }
    let mut p = table.last().unwrap().clone();
    for _ in table.len() - 1..order {
        p = next_expinv_poly(&p);
    }
    p
}

// p_{k+1}(s) = s^2 (p_k(s) - p_k'(s))
fn next_expinv_poly(p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + 2];
    for (i, &c) in p.iter().enumerate() {
        out[i + 2] += c;
        if i > 0 {
            out[i + 1] -= c * i as f64;
        }
    }
    out
}

fn expinv(u: f64, order: u32) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    let s = 1.0 / u;
    if s > 740.0 {
        return 0.0;
    }
    let e = (-s).exp();
    if order == 0 {
        return e;
    }
    let poly = expinv_polys(order as usize);
    let p = poly.iter().rev().fold(0.0, |acc, &c| acc * s + c);
    e * p
}

#[derive(Clone, Debug)]
pub(crate) enum Node {
    Const(f64),
    Var(usize),
    Neg(Arc<Node>),
    Add(Arc<Node>, Arc<Node>),
    Sub(Arc<Node>, Arc<Node>),
    Mul(Arc<Node>, Arc<Node>),
    Div(Arc<Node>, Arc<Node>),
    Pow(Arc<Node>, Arc<Node>),
    Call(Func, Arc<Node>),
}

/// A smooth scalar field on a coordinate chart, stored as an immutable
/// expression tree. Cloning is cheap; subtrees are shared.
#[derive(Clone, Debug)]
pub struct FieldExpr {
    pub(crate) root: Arc<Node>,
    dim: usize,
}

impl FieldExpr {
    pub(crate) fn from_node(root: Arc<Node>, dim: usize) -> Self {
        FieldExpr { root, dim }
    }

    pub fn constant(value: f64, dim: usize) -> Self {
        Self::from_node(Arc::new(Node::Const(value)), dim)
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(0.0, dim)
    }

    /// The coordinate function `x_i` (0-based).
    pub fn var(index: usize, dim: usize) -> Self {
        assert!(index < dim, "coordinate {index} outside chart of dimension {dim}");
        Self::from_node(Arc::new(Node::Var(index)), dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_constant(&self) -> Option<f64> {
        match *self.root {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_constant() == Some(0.0)
    }

    fn check_dim(&self, other: &FieldExpr) -> usize {
        // Constants are dimension-agnostic.
        if self.as_constant().is_some() {
            return other.dim;
        }
        if other.as_constant().is_some() {
            return self.dim;
        }
        assert_eq!(
            self.dim, other.dim,
            "combining fields from charts of different dimension"
        );
        self.dim
    }

    pub fn call(&self, func: Func) -> Self {
        Self::from_node(mk_call(func, self.root.clone()), self.dim)
    }

    pub fn sin(&self) -> Self {
        self.call(Func::Sin)
    }
    pub fn cos(&self) -> Self {
        self.call(Func::Cos)
    }
    pub fn exp(&self) -> Self {
        self.call(Func::Exp)
    }
    pub fn ln(&self) -> Self {
        self.call(Func::Ln)
    }
    pub fn sqrt(&self) -> Self {
        self.call(Func::Sqrt)
    }
    pub fn expinv(&self) -> Self {
        self.call(Func::ExpInv(0))
    }

    pub fn powf(&self, exponent: f64) -> Self {
        Self::from_node(
            mk_pow(self.root.clone(), Arc::new(Node::Const(exponent))),
            self.dim,
        )
    }

    pub fn powi(&self, exponent: i32) -> Self {
        self.powf(exponent as f64)
    }

    pub fn pow(&self, exponent: &FieldExpr) -> Self {
        let dim = self.check_dim(exponent);
        Self::from_node(mk_pow(self.root.clone(), exponent.root.clone()), dim)
    }

    /// Compose with a profile primitive.
    pub fn profile(&self, profile: &Arc<Profile>) -> Self {
        self.call(Func::Profile(profile.clone(), 0))
    }

    /// Mollifier bump `e * exp(-1/(1 - t^2))`: equals 1 at `t = 0`, vanishes
    /// for `|t| >= 1`.
    pub fn bump(&self) -> Self {
        let one = FieldExpr::constant(1.0, self.dim);
        (one - self.powi(2)).expinv() * std::f64::consts::E
    }

    /// C-infinity transition equal to 0 for `t <= 0` and 1 for `t >= 1`.
    pub fn smoothstep(&self) -> Self {
        let one = FieldExpr::constant(1.0, self.dim);
        let a = self.expinv();
        let b = (one - self.clone()).expinv();
        a.clone() / (a + b)
    }

    /// Smooth plateau cutoff: 1 for `|t| <= inner`, 0 for `|t| >= outer`,
    /// monotone in `|t|` in between.
    pub fn plateau(&self, inner: f64, outer: f64) -> Self {
        assert!(0.0 < inner && inner < outer);
        let w = outer - inner;
        let rising = ((self.clone() + outer) / w).smoothstep();
        let falling = ((FieldExpr::constant(outer, self.dim) - self.clone()) / w).smoothstep();
        rising * falling
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        debug_assert!(x.len() >= self.dim || self.as_constant().is_some());
        let v = eval_node(&self.root, x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::Domain(format!("non-finite value {v}")))
        }
    }

    /// Exact symbolic partial derivative with respect to coordinate `index`
    /// (0-based).
    pub fn diff(&self, index: usize) -> Result<FieldExpr, ExprError> {
        if index >= self.dim {
            return Err(ExprError::IndexOutOfRange {
                index,
                dim: self.dim,
            });
        }
        Ok(Self::from_node(diff_node(&self.root, index), self.dim))
    }

    pub fn gradient(&self) -> Vec<FieldExpr> {
        (0..self.dim).map(|i| self.diff(i).unwrap()).collect()
    }

    /// Replace each coordinate `x_i` with `images[i]`; the result lives on the
    /// chart of the images.
    pub fn substitute(&self, images: &[FieldExpr]) -> FieldExpr {
        assert!(images.len() >= self.dim);
        let dim = images.first().map(|e| e.dim).unwrap_or(self.dim);
        let roots: Vec<Arc<Node>> = images.iter().map(|e| e.root.clone()).collect();
        Self::from_node(subst_node(&self.root, &roots), dim)
    }

    /// Move to a chart of different dimension without changing the tree.
    /// Panics if a coordinate index would fall outside the new chart.
    pub fn with_dim(&self, dim: usize) -> FieldExpr {
        assert!(max_var(&self.root).is_none_or(|m| m < dim));
        Self::from_node(self.root.clone(), dim)
    }

    pub fn node_count(&self) -> usize {
        count_nodes(&self.root)
    }

    /// Sum of monomials `c * x_0^e_0 * ... * x_{d-1}^e_{d-1}`.
    pub fn polynomial(terms: &[(f64, Vec<u32>)], dim: usize) -> FieldExpr {
        let mut acc = FieldExpr::zero(dim);
        for (c, exps) in terms {
            assert_eq!(exps.len(), dim, "exponent vector length must equal dim");
            let mut m = FieldExpr::constant(*c, dim);
            for (i, &e) in exps.iter().enumerate() {
                if e > 0 {
                    m = m * FieldExpr::var(i, dim).powi(e as i32);
                }
            }
            acc = acc + m;
        }
        acc
    }

    pub fn display<'a>(&'a self, chart: &'a Chart) -> Display<'a> {
        Display { expr: self, chart }
    }
}

fn max_var(n: &Node) -> Option<usize> {
    match n {
        Node::Const(_) => None,
        Node::Var(i) => Some(*i),
        Node::Neg(a) | Node::Call(_, a) => max_var(a),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
            match (max_var(a), max_var(b)) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            }
        }
    }
}

fn count_nodes(n: &Node) -> usize {
    1 + match n {
        Node::Const(_) | Node::Var(_) => 0,
        Node::Neg(a) | Node::Call(_, a) => count_nodes(a),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
            count_nodes(a) + count_nodes(b)
        }
    }
}

fn eval_node(n: &Node, x: &[f64]) -> Result<f64, ExprError> {
    Ok(match n {
        Node::Const(c) => *c,
        Node::Var(i) => x[*i],
        Node::Neg(a) => -eval_node(a, x)?,
        Node::Add(a, b) => eval_node(a, x)? + eval_node(b, x)?,
        Node::Sub(a, b) => eval_node(a, x)? - eval_node(b, x)?,
        Node::Mul(a, b) => {
            let l = eval_node(a, x)?;
            if l == 0.0 {
                // the right factor still has to be inside its domain
                let r = eval_node(b, x)?;
                return Ok(if r.is_finite() { 0.0 } else { l * r });
            }
            l * eval_node(b, x)?
        }
        Node::Div(a, b) => {
            let den = eval_node(b, x)?;
            if den == 0.0 {
                return Err(ExprError::Domain("division by zero".into()));
            }
            eval_node(a, x)? / den
        }
        Node::Pow(a, b) => {
            let base = eval_node(a, x)?;
            let e = eval_node(b, x)?;
            pow_value(base, e)?
        }
        Node::Call(f, a) => f.apply(eval_node(a, x)?)?,
    })
}

fn pow_value(base: f64, e: f64) -> Result<f64, ExprError> {
    if e.fract() == 0.0 && e.abs() <= 64.0 {
        if base == 0.0 && e < 0.0 {
            return Err(ExprError::Domain("zero to a negative power".into()));
        }
        return Ok(base.powi(e as i32));
    }
    if base < 0.0 || (base == 0.0 && e <= 0.0) {
        return Err(ExprError::Domain(format!("{base}^{e}")));
    }
    Ok(base.powf(e))
}

fn is_const(n: &Node, v: f64) -> bool {
    matches!(n, Node::Const(c) if *c == v)
}

fn const_of(n: &Node) -> Option<f64> {
    match n {
        Node::Const(c) => Some(*c),
        _ => None,
    }
}

fn constant(v: f64) -> Arc<Node> {
    Arc::new(Node::Const(v))
}

// Smart constructors: constant folding and 0/1 identities only.

fn mk_neg(a: Arc<Node>) -> Arc<Node> {
    match &*a {
        Node::Const(c) => constant(-c),
        Node::Neg(inner) => inner.clone(),
        _ => Arc::new(Node::Neg(a)),
    }
}

fn mk_add(a: Arc<Node>, b: Arc<Node>) -> Arc<Node> {
    match (const_of(&a), const_of(&b)) {
        (Some(x), Some(y)) => constant(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Arc::new(Node::Add(a, b)),
    }
}

fn mk_sub(a: Arc<Node>, b: Arc<Node>) -> Arc<Node> {
    match (const_of(&a), const_of(&b)) {
        (Some(x), Some(y)) => constant(x - y),
        (_, Some(y)) if y == 0.0 => a,
        (Some(x), _) if x == 0.0 => mk_neg(b),
        _ => Arc::new(Node::Sub(a, b)),
    }
}

fn mk_mul(a: Arc<Node>, b: Arc<Node>) -> Arc<Node> {
    match (const_of(&a), const_of(&b)) {
        (Some(x), Some(y)) => constant(x * y),
        (Some(x), _) if x == 0.0 => constant(0.0),
        (_, Some(y)) if y == 0.0 => constant(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), _) if x == -1.0 => mk_neg(b),
        (_, Some(y)) if y == -1.0 => mk_neg(a),
        _ => Arc::new(Node::Mul(a, b)),
    }
}

fn mk_div(a: Arc<Node>, b: Arc<Node>) -> Arc<Node> {
    match (const_of(&a), const_of(&b)) {
        (Some(x), Some(y)) if y != 0.0 => constant(x / y),
        (Some(x), _) if x == 0.0 => constant(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => Arc::new(Node::Div(a, b)),
    }
}

fn mk_pow(a: Arc<Node>, b: Arc<Node>) -> Arc<Node> {
    if is_const(&b, 0.0) {
        return constant(1.0);
    }
    if is_const(&b, 1.0) {
        return a;
    }
    if let (Some(x), Some(y)) = (const_of(&a), const_of(&b)) {
        if let Ok(v) = pow_value(x, y) {
            return constant(v);
        }
    }
    Arc::new(Node::Pow(a, b))
}

fn mk_call(f: Func, a: Arc<Node>) -> Arc<Node> {
    if let Some(c) = const_of(&a) {
        if let Ok(v) = f.apply(c) {
            return constant(v);
        }
    }
    Arc::new(Node::Call(f, a))
}

fn diff_node(n: &Node, i: usize) -> Arc<Node> {
    match n {
        Node::Const(_) => constant(0.0),
        Node::Var(j) => constant(if *j == i { 1.0 } else { 0.0 }),
        Node::Neg(a) => mk_neg(diff_node(a, i)),
        Node::Add(a, b) => mk_add(diff_node(a, i), diff_node(b, i)),
        Node::Sub(a, b) => mk_sub(diff_node(a, i), diff_node(b, i)),
        Node::Mul(a, b) => mk_add(
            mk_mul(diff_node(a, i), b.clone()),
            mk_mul(a.clone(), diff_node(b, i)),
        ),
        Node::Div(a, b) => {
            let da = diff_node(a, i);
            let db = diff_node(b, i);
            if is_const(&db, 0.0) {
                return mk_div(da, b.clone());
            }
            // (a'b - ab') / b^2
            mk_div(
                mk_sub(mk_mul(da, b.clone()), mk_mul(a.clone(), db)),
                mk_pow(b.clone(), constant(2.0)),
            )
        }
        Node::Pow(a, b) => {
            let da = diff_node(a, i);
            if let Some(e) = const_of(b) {
                // e * a^(e-1) * a'
                return mk_mul(
                    mk_mul(constant(e), mk_pow(a.clone(), constant(e - 1.0))),
                    da,
                );
            }
            // a^b * (b' ln a + b a'/a)
            let db = diff_node(b, i);
            let this = Arc::new(Node::Pow(a.clone(), b.clone()));
            let term = mk_add(
                mk_mul(db, mk_call(Func::Ln, a.clone())),
                mk_div(mk_mul(b.clone(), da), a.clone()),
            );
            mk_mul(this, term)
        }
        Node::Call(f, a) => {
            let da = diff_node(a, i);
            if is_const(&da, 0.0) {
                return constant(0.0);
            }
            let outer = match f {
                Func::Sin => mk_call(Func::Cos, a.clone()),
                Func::Cos => mk_neg(mk_call(Func::Sin, a.clone())),
                Func::Exp => mk_call(Func::Exp, a.clone()),
                Func::Ln => mk_div(constant(1.0), a.clone()),
                Func::Sqrt => mk_div(
                    constant(1.0),
                    mk_mul(constant(2.0), mk_call(Func::Sqrt, a.clone())),
                ),
                Func::ExpInv(k) => mk_call(Func::ExpInv(k + 1), a.clone()),
                Func::Profile(p, k) => mk_call(Func::Profile(p.clone(), k + 1), a.clone()),
            };
            mk_mul(outer, da)
        }
    }
}

fn subst_node(n: &Node, images: &[Arc<Node>]) -> Arc<Node> {
    match n {
        Node::Const(c) => constant(*c),
        Node::Var(j) => images[*j].clone(),
        Node::Neg(a) => mk_neg(subst_node(a, images)),
        Node::Add(a, b) => mk_add(subst_node(a, images), subst_node(b, images)),
        Node::Sub(a, b) => mk_sub(subst_node(a, images), subst_node(b, images)),
        Node::Mul(a, b) => mk_mul(subst_node(a, images), subst_node(b, images)),
        Node::Div(a, b) => mk_div(subst_node(a, images), subst_node(b, images)),
        Node::Pow(a, b) => mk_pow(subst_node(a, images), subst_node(b, images)),
        Node::Call(f, a) => mk_call(f.clone(), subst_node(a, images)),
    }
}

/// Structural equality (profiles compared by identity).
pub(crate) fn same_tree(a: &Node, b: &Node) -> bool {
    match (a, b) {
        (Node::Const(x), Node::Const(y)) => x == y,
        (Node::Var(i), Node::Var(j)) => i == j,
        (Node::Neg(x), Node::Neg(y)) => same_tree(x, y),
        (Node::Add(a1, b1), Node::Add(a2, b2))
        | (Node::Sub(a1, b1), Node::Sub(a2, b2))
        | (Node::Mul(a1, b1), Node::Mul(a2, b2))
        | (Node::Div(a1, b1), Node::Div(a2, b2))
        | (Node::Pow(a1, b1), Node::Pow(a2, b2)) => same_tree(a1, a2) && same_tree(b1, b2),
        (Node::Call(f, x), Node::Call(g, y)) => f.same(g) && same_tree(x, y),
        _ => false,
    }
}

impl PartialEq for FieldExpr {
    fn eq(&self, other: &Self) -> bool {
        same_tree(&self.root, &other.root)
    }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $mk:ident) => {
        impl $tr<&FieldExpr> for &FieldExpr {
            type Output = FieldExpr;
            fn $method(self, rhs: &FieldExpr) -> FieldExpr {
                let dim = self.check_dim(rhs);
                FieldExpr::from_node($mk(self.root.clone(), rhs.root.clone()), dim)
            }
        }
        impl $tr<FieldExpr> for FieldExpr {
            type Output = FieldExpr;
            fn $method(self, rhs: FieldExpr) -> FieldExpr {
                (&self).$method(&rhs)
            }
        }
        impl $tr<&FieldExpr> for FieldExpr {
            type Output = FieldExpr;
            fn $method(self, rhs: &FieldExpr) -> FieldExpr {
                (&self).$method(rhs)
            }
        }
        impl $tr<FieldExpr> for &FieldExpr {
            type Output = FieldExpr;
            fn $method(self, rhs: FieldExpr) -> FieldExpr {
                self.$method(&rhs)
            }
        }
        impl $tr<f64> for FieldExpr {
            type Output = FieldExpr;
            fn $method(self, rhs: f64) -> FieldExpr {
                FieldExpr::from_node($mk(self.root.clone(), constant(rhs)), self.dim)
            }
        }
        impl $tr<f64> for &FieldExpr {
            type Output = FieldExpr;
            fn $method(self, rhs: f64) -> FieldExpr {
                FieldExpr::from_node($mk(self.root.clone(), constant(rhs)), self.dim)
            }
        }
        impl $tr<FieldExpr> for f64 {
            type Output = FieldExpr;
            fn $method(self, rhs: FieldExpr) -> FieldExpr {
                FieldExpr::from_node($mk(constant(self), rhs.root.clone()), rhs.dim)
            }
        }
        impl $tr<&FieldExpr> for f64 {
            type Output = FieldExpr;
            fn $method(self, rhs: &FieldExpr) -> FieldExpr {
                FieldExpr::from_node($mk(constant(self), rhs.root.clone()), rhs.dim)
            }
        }
    };
}

binop!(Add, add, mk_add);
binop!(Sub, sub, mk_sub);
binop!(Mul, mul, mk_mul);
binop!(Div, div, mk_div);

impl Neg for FieldExpr {
    type Output = FieldExpr;
    fn neg(self) -> FieldExpr {
        FieldExpr::from_node(mk_neg(self.root), self.dim)
    }
}

impl Neg for &FieldExpr {
    type Output = FieldExpr;
    fn neg(self) -> FieldExpr {
        FieldExpr::from_node(mk_neg(self.root.clone()), self.dim)
    }
}

/// Printer that renders an expression in the parser's grammar, using a
/// chart's coordinate names.
pub struct Display<'a> {
    expr: &'a FieldExpr,
    chart: &'a Chart,
}

impl fmt::Display for Display<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.expr.root, self.chart, 0)
    }
}

// precedence: 1 additive, 2 multiplicative, 3 unary minus, 4 power, 5 atom
fn write_node(f: &mut fmt::Formatter<'_>, n: &Node, chart: &Chart, ctx: u8) -> fmt::Result {
    let (prec, body): (u8, String) = match n {
        Node::Const(c) => {
            if *c < 0.0 {
                (3, format!("-{:?}", c.abs()))
            } else {
                (5, format!("{c:?}"))
            }
        }
        Node::Var(i) => (5, chart.name(*i).to_string()),
        Node::Neg(a) => (3, format!("-{}", Child(a, chart, 3))),
        Node::Add(a, b) => (1, format!("{} + {}", Child(a, chart, 1), Child(b, chart, 2))),
        Node::Sub(a, b) => (1, format!("{} - {}", Child(a, chart, 1), Child(b, chart, 2))),
        Node::Mul(a, b) => (2, format!("{}*{}", Child(a, chart, 2), Child(b, chart, 3))),
        Node::Div(a, b) => (2, format!("{}/{}", Child(a, chart, 2), Child(b, chart, 3))),
        Node::Pow(a, b) => (4, format!("{}^{}", Child(a, chart, 5), Child(b, chart, 4))),
        Node::Call(func, a) => (5, format!("{}({})", func.name(), Child(a, chart, 0))),
    };
    if prec < ctx {
        write!(f, "({body})")
    } else {
        write!(f, "{body}")
    }
}

struct Child<'a>(&'a Node, &'a Chart, u8);

impl fmt::Display for Child<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, self.0, self.1, self.2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xy() -> (FieldExpr, FieldExpr) {
        (FieldExpr::var(0, 2), FieldExpr::var(1, 2))
    }

    #[test]
    fn simplification_folds_constants_and_identities() {
        let (x, _) = xy();
        let e = (&x * 1.0) + 0.0;
        assert_eq!(e, x);
        let z = &x * 0.0;
        assert!(z.is_zero());
        assert_eq!(FieldExpr::constant(2.0, 2) * 3.0, FieldExpr::constant(6.0, 2));
        assert_eq!(-(-x.clone()), x);
    }

    #[test]
    fn derivative_of_unrelated_variable_is_zero() {
        let (x, _) = xy();
        assert!(x.diff(1).unwrap().is_zero());
        assert!(matches!(
            x.diff(2),
            Err(ExprError::IndexOutOfRange { index: 2, dim: 2 })
        ));
    }

    #[test]
    fn expinv_derivatives_match_finite_differences() {
        for k in 0..5u32 {
            for &u in &[0.2, 0.5, 0.9, 2.0] {
                let h = 1e-6;
                let fd = (expinv(u + h, k) - expinv(u - h, k)) / (2.0 * h);
                let exact = expinv(u, k + 1);
                assert!((fd - exact).abs() <= 1e-5 * (1.0 + exact.abs()), "k={k} u={u}");
            }
        }
        assert_eq!(expinv(-0.3, 3), 0.0);
        assert_eq!(expinv(1e-4, 2), 0.0);
    }

    #[test]
    fn bump_and_plateau_shapes() {
        let t = FieldExpr::var(0, 1);
        let b = t.bump();
        assert!((b.eval(&[0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(b.eval(&[1.0]).unwrap(), 0.0);
        assert_eq!(b.eval(&[-1.5]).unwrap(), 0.0);
        let p = t.plateau(0.25, 1.0 / 3.0);
        assert_eq!(p.eval(&[0.2]).unwrap(), 1.0);
        assert_eq!(p.eval(&[-0.25]).unwrap(), 1.0);
        assert_eq!(p.eval(&[0.34]).unwrap(), 0.0);
        let mid = p.eval(&[0.3]).unwrap();
        assert!(mid > 0.0 && mid < 1.0);
        let s = t.smoothstep();
        assert_eq!(s.eval(&[0.0]).unwrap(), 0.0);
        assert_eq!(s.eval(&[1.0]).unwrap(), 1.0);
        assert!((s.eval(&[0.5]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn domain_errors_surface() {
        let t = FieldExpr::var(0, 1);
        let r = (t.clone() * 2.0 + 2.0).sqrt();
        assert!((r.eval(&[1.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(r.eval(&[-1.5]), Err(ExprError::Domain(_))));
        let q = FieldExpr::constant(1.0, 1) / t.clone();
        assert!(q.eval(&[0.0]).is_err());
        assert!(t.ln().eval(&[0.0]).is_err());
    }

    #[test]
    fn substitution_composes() {
        let (x, y) = xy();
        let f = &x * &y;
        let t = FieldExpr::var(0, 1);
        let line = f.substitute(&[t.clone() + 1.0, t.clone() * 2.0]);
        assert_eq!(line.dim(), 1);
        assert!((line.eval(&[0.5]).unwrap() - 1.5).abs() < 1e-15);
    }
}
