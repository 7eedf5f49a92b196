//! Poisson brackets on a chart with a constant symplectic structure, the
//! Hamiltonian vector fields they induce, and the invariants built from
//! iterated brackets at a maximum of `h = {f, g}`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{map_range, Exec};
use crate::fieldexpr::{grid_extremum, ExprError, Extremum, FieldExpr, GridBox, SupReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BracketError {
    #[error("fields live on charts of dimension {left} and {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid pairing convention: {0}")]
    InvalidConvention(String),
    #[error("iterated bracket needs at least one argument")]
    EmptyArguments,
    #[error("invalid order: {0}")]
    InvalidOrder(String),
    #[error("direction is not a unit vector (norm {0})")]
    NotUnit(f64),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Which coordinates are conjugate and the overall sign of the bracket.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingConvention {
    pairs: Vec<(usize, usize)>,
    sign: i8,
}

impl PairingConvention {
    /// Pairs `(x_1, y_1), (x_2, y_2), ...` in coordinate order, sign `+1`.
    pub fn standard(dim: usize) -> Result<Self, BracketError> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(BracketError::InvalidConvention(format!(
                "dimension {dim} is not a positive even number"
            )));
        }
        Ok(PairingConvention {
            pairs: (0..dim / 2).map(|i| (2 * i, 2 * i + 1)).collect(),
            sign: 1,
        })
    }

    pub fn new(pairs: Vec<(usize, usize)>, sign: i8) -> Result<Self, BracketError> {
        if sign != 1 && sign != -1 {
            return Err(BracketError::InvalidConvention(format!("sign {sign}")));
        }
        let dim = 2 * pairs.len();
        let mut seen = vec![false; dim];
        for &(q, p) in &pairs {
            for i in [q, p] {
                if i >= dim || seen[i] {
                    return Err(BracketError::InvalidConvention(format!(
                        "pairs do not partition 0..{dim}"
                    )));
                }
                seen[i] = true;
            }
        }
        if pairs.is_empty() {
            return Err(BracketError::InvalidConvention("no pairs".into()));
        }
        Ok(PairingConvention { pairs, sign })
    }

    pub fn dim(&self) -> usize {
        2 * self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn sign(&self) -> f64 {
        self.sign as f64
    }

    pub fn negated(&self) -> Self {
        PairingConvention {
            pairs: self.pairs.clone(),
            sign: -self.sign,
        }
    }

    /// The matrix `Ω` with `{f, g} = ∇f · Ω ∇g`.
    pub fn omega(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for &(q, p) in &self.pairs {
            m[(q, p)] = self.sign();
            m[(p, q)] = -self.sign();
        }
        m
    }

    fn check(&self, f: &FieldExpr) -> Result<(), BracketError> {
        if f.as_constant().is_none() && f.dim() != self.dim() {
            return Err(BracketError::DimensionMismatch {
                left: f.dim(),
                right: self.dim(),
            });
        }
        Ok(())
    }
}

/// A vector field given by symbolic components.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorFieldExpr {
    components: Vec<FieldExpr>,
}

impl VectorFieldExpr {
    pub fn new(components: Vec<FieldExpr>) -> Self {
        VectorFieldExpr { components }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[FieldExpr] {
        &self.components
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), ExprError> {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(x)?;
        }
        Ok(())
    }

    pub fn norm_at(&self, x: &[f64]) -> Result<f64, ExprError> {
        Ok(self.eval(x)?.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// The derivation `f ↦ df(v)`.
    pub fn apply(&self, f: &FieldExpr) -> Result<FieldExpr, BracketError> {
        if f.as_constant().is_some() {
            return Ok(FieldExpr::zero(self.dim()));
        }
        if f.dim() != self.dim() {
            return Err(BracketError::DimensionMismatch {
                left: f.dim(),
                right: self.dim(),
            });
        }
        let mut acc = FieldExpr::zero(self.dim());
        for (i, c) in self.components.iter().enumerate() {
            acc = acc + f.diff(i)? * c;
        }
        Ok(acc)
    }

    /// Sup over the grid of the Euclidean norm.
    pub fn sup_norm(&self, region: &GridBox) -> Result<SupReport, ExprError> {
        grid_extremum(|p| self.norm_at(p), region, Extremum::Max, Exec::Auto)
    }
}

/// A first-order bilinear operator `B(u, v) = Σ a^{ij} ∂_i u ∂_j v` with
/// field-valued coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct BilinearForm {
    coeffs: Vec<Vec<FieldExpr>>,
}

impl BilinearForm {
    pub fn new(coeffs: Vec<Vec<FieldExpr>>) -> Result<Self, BracketError> {
        let d = coeffs.len();
        if d == 0 || coeffs.iter().any(|row| row.len() != d) {
            return Err(BracketError::InvalidConvention(
                "coefficient matrix must be square and non-empty".into(),
            ));
        }
        Ok(BilinearForm { coeffs })
    }

    pub fn constant(matrix: &[Vec<f64>]) -> Result<Self, BracketError> {
        let d = matrix.len();
        Self::new(
            matrix
                .iter()
                .map(|row| row.iter().map(|&a| FieldExpr::constant(a, d)).collect())
                .collect(),
        )
    }

    /// The bracket of a pairing convention written as a bilinear form.
    pub fn from_convention(conv: &PairingConvention) -> Self {
        let om = conv.omega();
        let m: Vec<Vec<f64>> = (0..conv.dim())
            .map(|i| (0..conv.dim()).map(|j| om[(i, j)]).collect())
            .collect();
        Self::constant(&m).expect("convention matrix is square")
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coefficient(&self, i: usize, j: usize) -> &FieldExpr {
        &self.coeffs[i][j]
    }

    pub fn is_antisymmetric(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| {
            (0..d).all(|j| {
                let (a, b) = (&self.coeffs[i][j], &self.coeffs[j][i]);
                (a + b).as_constant() == Some(0.0) || *a == -b || -a == *b
            })
        })
    }

    pub fn apply(&self, u: &FieldExpr, v: &FieldExpr) -> Result<FieldExpr, BracketError> {
        let d = self.dim();
        for e in [u, v] {
            if e.as_constant().is_none() && e.dim() != d {
                return Err(BracketError::DimensionMismatch {
                    left: e.dim(),
                    right: d,
                });
            }
        }
        if u.as_constant().is_some() || v.as_constant().is_some() {
            return Ok(FieldExpr::zero(d));
        }
        let du: Vec<FieldExpr> = (0..d).map(|i| u.diff(i)).collect::<Result<_, _>>()?;
        let dv: Vec<FieldExpr> = (0..d).map(|i| v.diff(i)).collect::<Result<_, _>>()?;
        let mut acc = FieldExpr::zero(d);
        for i in 0..d {
            for j in 0..d {
                if self.coeffs[i][j].is_zero() {
                    continue;
                }
                acc = acc + &self.coeffs[i][j] * &du[i] * &dv[j];
            }
        }
        Ok(acc)
    }
}

/// `{f, g} = s Σ (∂f/∂q ∂g/∂p − ∂f/∂p ∂g/∂q)` over the convention's pairs.
pub fn poisson(
    f: &FieldExpr,
    g: &FieldExpr,
    conv: &PairingConvention,
) -> Result<FieldExpr, BracketError> {
    conv.check(f)?;
    conv.check(g)?;
    let dim = conv.dim();
    if f.as_constant().is_some() || g.as_constant().is_some() {
        return Ok(FieldExpr::zero(dim));
    }
    let mut acc = FieldExpr::zero(dim);
    for &(q, p) in conv.pairs() {
        let term = f.diff(q)? * g.diff(p)? - f.diff(p)? * g.diff(q)?;
        acc = acc + term;
    }
    Ok(if conv.sign < 0 { -acc } else { acc })
}

/// `X_g` with `df(X_g) = {f, g}` for every `f`.
pub fn ham_vector_field(
    g: &FieldExpr,
    conv: &PairingConvention,
) -> Result<VectorFieldExpr, BracketError> {
    conv.check(g)?;
    let dim = conv.dim();
    let mut comps = vec![FieldExpr::zero(dim); dim];
    if g.as_constant().is_some() {
        return Ok(VectorFieldExpr::new(comps));
    }
    let s = conv.sign();
    for &(q, p) in conv.pairs() {
        comps[q] = g.diff(p)? * s;
        comps[p] = g.diff(q)? * (-s);
    }
    Ok(VectorFieldExpr::new(comps))
}

/// Left-nested bracket `{...{{h, a_1}, a_2}, ..., a_m}`.
pub fn iterated_bracket(
    h: &FieldExpr,
    args: &[FieldExpr],
    conv: &PairingConvention,
) -> Result<FieldExpr, BracketError> {
    if args.is_empty() {
        return Err(BracketError::EmptyArguments);
    }
    let mut acc = h.clone();
    for a in args {
        acc = poisson(&acc, a, conv)?;
    }
    Ok(acc)
}

/// `Φ = −{{{f,g},f},f} − {{{f,g},g},g}`.
pub fn phi_invariant(
    f: &FieldExpr,
    g: &FieldExpr,
    conv: &PairingConvention,
) -> Result<FieldExpr, BracketError> {
    let h = poisson(f, g, conv)?;
    Ok(-d_operator(&h, f, g, conv)?)
}

/// `D(k) = {{k,f},f} + {{k,g},g}`.
pub fn d_operator(
    k: &FieldExpr,
    f: &FieldExpr,
    g: &FieldExpr,
    conv: &PairingConvention,
) -> Result<FieldExpr, BracketError> {
    let a = iterated_bracket(k, &[f.clone(), f.clone()], conv)?;
    let b = iterated_bracket(k, &[g.clone(), g.clone()], conv)?;
    Ok(a + b)
}

/// `D^l(k)`.
pub fn d_power(
    l: usize,
    k: &FieldExpr,
    f: &FieldExpr,
    g: &FieldExpr,
    conv: &PairingConvention,
) -> Result<FieldExpr, BracketError> {
    if l == 0 {
        return Err(BracketError::InvalidOrder("D^l needs l >= 1".into()));
    }
    let mut acc = k.clone();
    for _ in 0..l {
        acc = d_operator(&acc, f, g, conv)?;
    }
    Ok(acc)
}

/// Which of the pair a bracket slot uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    F,
    G,
}

/// `−{...{{h, w_1}, w_2}, ..., w_m}(x)` for a word over `{f, g}`.
pub fn word_value(
    f: &FieldExpr,
    g: &FieldExpr,
    x: &[f64],
    word: &[Slot],
    conv: &PairingConvention,
) -> Result<f64, BracketError> {
    let h = poisson(f, g, conv)?;
    let args: Vec<FieldExpr> = word
        .iter()
        .map(|s| match s {
            Slot::F => f.clone(),
            Slot::G => g.clone(),
        })
        .collect();
    Ok(-iterated_bracket(&h, &args, conv)?.eval(x)?)
}

/// `H_k(x)`: the word with `2l − k` copies of `f` followed by `k` copies of
/// `g`.
pub fn h_k(
    f: &FieldExpr,
    g: &FieldExpr,
    x: &[f64],
    k: usize,
    l: usize,
    conv: &PairingConvention,
) -> Result<f64, BracketError> {
    if l == 0 || k > 2 * l {
        return Err(BracketError::InvalidOrder(format!(
            "H_k needs l >= 1 and 0 <= k <= 2l (k = {k}, l = {l})"
        )));
    }
    let mut word = vec![Slot::F; 2 * l - k];
    word.extend(std::iter::repeat_n(Slot::G, k));
    word_value(f, g, x, &word, conv)
}

/// `P_{2l}(θ) = −{...{h, k_θ}, ..., k_θ}(x)` with `k_θ = cos θ f + sin θ g`
/// bracketed `2l` times.
pub fn p_theta(
    f: &FieldExpr,
    g: &FieldExpr,
    x: &[f64],
    theta: f64,
    l: usize,
    conv: &PairingConvention,
) -> Result<f64, BracketError> {
    if l == 0 {
        return Err(BracketError::InvalidOrder("P_{2l} needs l >= 1".into()));
    }
    let h = poisson(f, g, conv)?;
    let k = f * theta.cos() + g * theta.sin();
    let args = vec![k; 2 * l];
    Ok(-iterated_bracket(&h, &args, conv)?.eval(x)?)
}

/// Coefficients `c_0..c_{2l}` of `P_{2l}(θ) = Σ c_k cos^{2l−k}θ sin^kθ`,
/// obtained by expanding the bracket over all `2^{2l}` words. Valid at any
/// point, independent of multiplicity.
pub fn p_theta_coefficients(
    f: &FieldExpr,
    g: &FieldExpr,
    x: &[f64],
    l: usize,
    conv: &PairingConvention,
) -> Result<Vec<f64>, BracketError> {
    if l == 0 {
        return Err(BracketError::InvalidOrder("P_{2l} needs l >= 1".into()));
    }
    let h = poisson(f, g, conv)?;
    let mut coeffs = vec![0.0; 2 * l + 1];
    // Depth-first over words, sharing prefixes.
    let mut stack = vec![(h, 0usize, 0usize)];
    while let Some((e, depth, gs)) = stack.pop() {
        if depth == 2 * l {
            coeffs[gs] -= e.eval(x)?;
            continue;
        }
        stack.push((poisson(&e, f, conv)?, depth + 1, gs));
        stack.push((poisson(&e, g, conv)?, depth + 1, gs + 1));
    }
    Ok(coeffs)
}

/// `‖h‖_{x,v,k} = |(1/k!) d^k/dt^k h(x + t v)|` at `t = 0`, via the symbolic
/// restriction of `h` to the line.
pub fn directional_seminorm(
    h: &FieldExpr,
    x: &[f64],
    v: &[f64],
    k: usize,
) -> Result<f64, BracketError> {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(BracketError::NotUnit(norm));
    }
    if h.as_constant().is_some() {
        return Ok(if k == 0 { h.as_constant().unwrap().abs() } else { 0.0 });
    }
    if x.len() != h.dim() || v.len() != h.dim() {
        return Err(BracketError::DimensionMismatch {
            left: h.dim(),
            right: x.len(),
        });
    }
    let t = FieldExpr::var(0, 1);
    let images: Vec<FieldExpr> = x
        .iter()
        .zip(v)
        .map(|(&xi, &vi)| FieldExpr::constant(xi, 1) + &t * vi)
        .collect();
    let mut line = h.substitute(&images);
    for _ in 0..k {
        line = line.diff(0)?;
    }
    Ok((line.eval(&[0.0])? / factorial(k)).abs())
}

/// All `k`-th order partials of `h` at `x`, indexed by sorted multi-index.
pub struct DerivativeTensor {
    dim: usize,
    order: usize,
    entries: Vec<(Vec<usize>, f64)>,
}

impl DerivativeTensor {
    pub fn at(h: &FieldExpr, x: &[f64], order: usize) -> Result<Self, BracketError> {
        let dim = x.len();
        let mut entries = Vec::new();
        let mut current = vec![(Vec::new(), h.clone())];
        for _ in 0..order {
            let mut next = Vec::new();
            for (idx, e) in &current {
                let start = idx.last().copied().unwrap_or(0);
                for i in start..dim {
                    let mut j: Vec<usize> = idx.clone();
                    j.push(i);
                    let d = if e.as_constant().is_some() {
                        FieldExpr::zero(dim)
                    } else {
                        e.diff(i)?
                    };
                    next.push((j, d));
                }
            }
            current = next;
        }
        for (idx, e) in current {
            entries.push((idx, e.eval(x)?));
        }
        Ok(DerivativeTensor {
            dim,
            order,
            entries,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|e| e.1.abs()).fold(0.0, f64::max)
    }

    /// `(1/k!) Σ ∂^k h v^{⊗k}`.
    pub fn contract(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.dim);
        let mut acc = 0.0;
        for (idx, val) in &self.entries {
            // multinomial weight of the sorted index
            let mut weight = factorial(self.order);
            let mut run = 1;
            for w in idx.windows(2) {
                if w[0] == w[1] {
                    run += 1;
                } else {
                    weight /= factorial(run);
                    run = 1;
                }
            }
            if !idx.is_empty() {
                weight /= factorial(run);
            }
            let prod: f64 = idx.iter().map(|&i| v[i]).product();
            acc += weight * val * prod;
        }
        acc / factorial(self.order)
    }
}

/// `‖h‖_{x,k} = max_{|v|=1} ‖h‖_{x,v,k}` and where it was attained.
#[derive(Clone, Debug, Serialize)]
pub struct PointSeminorm {
    pub value: f64,
    pub direction: Vec<f64>,
    /// Number of sampled directions (0 when computed exactly).
    pub samples: usize,
}

/// Exact for `k = 1` (gradient norm). For `k >= 2` the unit sphere is sampled
/// with `256 (d − 1)` directions followed by a local random refinement.
pub fn pointwise_seminorm(
    h: &FieldExpr,
    x: &[f64],
    k: usize,
) -> Result<PointSeminorm, BracketError> {
    let d = x.len();
    if k == 0 {
        return Ok(PointSeminorm {
            value: h.eval(x)?.abs(),
            direction: unit(d, 0),
            samples: 0,
        });
    }
    let tensor = DerivativeTensor::at(h, x, k)?;
    if k == 1 {
        let grad: Vec<f64> = tensor.entries.iter().map(|e| e.1).collect();
        let n = grad.iter().map(|a| a * a).sum::<f64>().sqrt();
        let direction = if n > 0.0 {
            grad.iter().map(|a| a / n).collect()
        } else {
            unit(d, 0)
        };
        return Ok(PointSeminorm {
            value: n,
            direction,
            samples: 0,
        });
    }
    if k == 2 {
        // Exact: half the spectral radius of the Hessian.
        let hess = hessian(h, x)?;
        let eig = SymmetricEigen::new(hess);
        let (i, lam) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, l)| (i, *l))
            .unwrap();
        return Ok(PointSeminorm {
            value: 0.5 * lam.abs(),
            direction: eig.eigenvectors.column(i).iter().copied().collect(),
            samples: 0,
        });
    }
    let samples = 256 * (d - 1).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let dirs: Vec<Vec<f64>> = (0..samples).map(|_| random_unit(&mut rng, d)).collect();
    let vals = map_range(samples, Exec::Auto, |i| tensor.contract(&dirs[i]).abs());
    let (mut best_i, mut best) = (0, vals[0]);
    for (i, &v) in vals.iter().enumerate() {
        if v > best {
            best_i = i;
            best = v;
        }
    }
    let mut dir = dirs[best_i].clone();
    let mut step = 0.2;
    for _ in 0..60 {
        let mut improved = false;
        for _ in 0..8 {
            let cand = normalize(
                &dir
                    .iter()
                    .map(|a| a + step * (rng.gen::<f64>() - 0.5))
                    .collect::<Vec<_>>(),
            );
            let v = tensor.contract(&cand).abs();
            if v > best {
                best = v;
                dir = cand;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(PointSeminorm {
        value: best,
        direction: dir,
        samples,
    })
}

/// Symbolic Hessian of `h` evaluated at `x`.
pub fn hessian(h: &FieldExpr, x: &[f64]) -> Result<DMatrix<f64>, BracketError> {
    let d = x.len();
    let mut m = DMatrix::zeros(d, d);
    if h.as_constant().is_some() {
        return Ok(m);
    }
    for i in 0..d {
        let hi = h.diff(i)?;
        for j in i..d {
            let v = hi.diff(j)?.eval(x)?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Symbolic Hessian as a matrix of fields.
pub fn hessian_field(h: &FieldExpr) -> Result<Vec<Vec<FieldExpr>>, BracketError> {
    let d = h.dim();
    let mut rows = Vec::with_capacity(d);
    for i in 0..d {
        let hi = h.diff(i)?;
        let mut row = Vec::with_capacity(d);
        for j in 0..d {
            row.push(hi.diff(j)?);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// `‖h‖_{Y,2} = sup_{y∈Y} ‖h‖_{y,2}` over the grid of `region`.
pub fn second_seminorm_sup(h: &FieldExpr, region: &GridBox) -> Result<SupReport, BracketError> {
    let rows = hessian_field(h)?;
    let d = region.dim();
    let report = grid_extremum(
        |p| {
            let mut m = DMatrix::zeros(d, d);
            for i in 0..d {
                for j in i..d {
                    let v = rows[i][j].eval(p)?;
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            let eig = SymmetricEigen::new(m);
            Ok(0.5 * eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs())))
        },
        region,
        Extremum::Max,
        Exec::Auto,
    )?;
    Ok(report)
}

/// Smallest order `m` in `1..=max_order` with a partial derivative of order
/// `m` at `x` exceeding `tol`; `None` if every order up to `max_order` is flat.
pub fn vanishing_order(
    h: &FieldExpr,
    x: &[f64],
    max_order: usize,
    tol: f64,
) -> Result<Option<usize>, BracketError> {
    for m in 1..=max_order {
        if DerivativeTensor::at(h, x, m)?.max_abs() > tol {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

/// `h` has multiplicity at least `2l` at `x`: all partials of order
/// `1..2l` vanish to `tol`.
pub fn has_multiplicity(h: &FieldExpr, x: &[f64], l: usize, tol: f64) -> Result<bool, BracketError> {
    Ok(vanishing_order(h, x, 2 * l - 1, tol)?.is_none())
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn unit(d: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[i] = 1.0;
    v
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter().map(|a| a / n).collect()
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let n2: f64 = v.iter().map(|a| a * a).sum();
        if n2 > 1e-6 && n2 <= 1.0 {
            return normalize(&v);
        }
    }
}
