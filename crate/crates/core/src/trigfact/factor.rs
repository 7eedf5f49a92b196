use std::f64::consts::PI;

use num_complex::Complex64;

use super::poly::{laurent_lift, TrigPoly};
use super::roots::{roots, RootClass, RootMultiset};
use super::TrigError;
use crate::exec::{map_slice, Exec};

/// Grid used for the nonnegativity precheck.
pub const NONNEG_GRID: usize = 4096;
const NONNEG_TOL: f64 = -1e-9;
const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Factorization {
    pub q: TrigPoly,
    /// Roots of the lifted polynomial of `P`.
    pub roots: RootMultiset,
    /// `max_θ ||Q|² − P|` on the check grid.
    pub residual: f64,
}

/// `max_θ P(θ)` and its location, by a grid of `n` points plus two rounds
/// of local refinement.
pub fn max_on_circle(p: &TrigPoly, n: usize) -> (f64, f64) {
    extremum(p, n, 1.0)
}

fn extremum(p: &TrigPoly, n: usize, sign: f64) -> (f64, f64) {
    let h = 2.0 * PI / n as f64;
    let (mut best_t, mut best) = (0.0, f64::NEG_INFINITY);
    for j in 0..n {
        let t = h * j as f64;
        let v = sign * p.eval_real(t);
        if v > best {
            best = v;
            best_t = t;
        }
    }
    let mut width = h;
    for _ in 0..3 {
        let c = best_t;
        for j in 0..=40 {
            let t = c - width + 2.0 * width * j as f64 / 40.0;
            let v = sign * p.eval_real(t);
            if v > best {
                best = v;
                best_t = t;
            }
        }
        width /= 20.0;
    }
    (sign * best, best_t.rem_euclid(2.0 * PI))
}

/// Polynomial with the given roots and leading coefficient one, lowest
/// degree first.
fn from_roots(rs: &[Complex64]) -> Vec<Complex64> {
    let mut p = vec![Complex64::new(1.0, 0.0)];
    for r in rs {
        let mut q = vec![Complex64::new(0.0, 0.0); p.len() + 1];
        for (i, a) in p.iter().enumerate() {
            q[i + 1] += a;
            q[i] -= a * r;
        }
        p = q;
    }
    p
}

/// The roots assigned to `Q`: every interior root and half of each
/// unit-circle root.
pub fn factor_roots(rs: &RootMultiset) -> Result<Vec<Complex64>, TrigError> {
    let mut out = Vec::new();
    for r in &rs.roots {
        match r.class() {
            RootClass::Interior => {
                out.extend(std::iter::repeat_n(r.value, r.multiplicity));
            }
            RootClass::Unit => {
                if r.multiplicity % 2 == 1 {
                    return Err(TrigError::OddUnitMultiplicity {
                        root: format!("{:.6}{:+.6}i", r.value.re, r.value.im),
                        multiplicity: r.multiplicity,
                    });
                }
                let v = r.value / r.value.norm();
                out.extend(std::iter::repeat_n(v, r.multiplicity / 2));
            }
            RootClass::Exterior => {}
        }
    }
    Ok(out)
}

/// `Q` with `|Q(θ)|² = P(θ)`, supported on frequencies `0..=deg P`.
pub fn fejer_riesz(p: &TrigPoly) -> Result<TrigPoly, TrigError> {
    fejer_riesz_detailed(p).map(|f| f.q)
}

pub fn fejer_riesz_detailed(p: &TrigPoly) -> Result<Factorization, TrigError> {
    if p.is_zero() {
        return Err(TrigError::Zero);
    }
    if !p.is_real() {
        return Err(TrigError::NotReal);
    }
    let (min, at) = extremum(p, NONNEG_GRID, -1.0);
    if min < NONNEG_TOL {
        return Err(TrigError::Negative { min, theta: at });
    }
    let (max_p, _) = max_on_circle(p, NONNEG_GRID);
    let (t, _) = laurent_lift(p)?;
    if t.len() == 1 {
        let q = TrigPoly::constant(t[0].re.max(0.0).sqrt());
        return Ok(Factorization {
            q,
            roots: RootMultiset { roots: Vec::new() },
            residual: 0.0,
        });
    }
    let rs = roots(&t)?;
    let chosen = factor_roots(&rs)?;
    let base = TrigPoly::analytic(&from_roots(&chosen));
    // positive scale fitted on the grid
    let samples = 2 * NONNEG_GRID.min(64 * (p.span() + 1));
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..samples {
        let th = 2.0 * PI * j as f64 / samples as f64;
        num += p.eval_real(th);
        den += base.eval(th).norm_sqr();
    }
    let scale = (num / den).sqrt();
    let q = base.scale(scale);
    let residual = (0..NONNEG_GRID)
        .map(|j| {
            let th = 2.0 * PI * j as f64 / NONNEG_GRID as f64;
            (q.eval(th).norm_sqr() - p.eval_real(th)).abs()
        })
        .fold(0.0, f64::max);
    if residual > RESIDUAL_TOL * (1.0 + max_p) {
        return Err(TrigError::Residual(residual));
    }
    Ok(Factorization { q, roots: rs, residual })
}

pub fn fejer_riesz_batch(ps: &[TrigPoly], exec: Exec) -> Vec<Result<TrigPoly, TrigError>> {
    map_slice(ps, exec, fejer_riesz)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct MeanBound {
    pub max_p: f64,
    pub mean: f64,
    /// `(2l + 1) · mean`.
    pub bound: f64,
    pub holds: bool,
}

/// `max_θ P ≤ (2l + 1) · mean(P)` for nonnegative `P` of degree `≤ 2l`.
pub fn mean_bound(p: &TrigPoly, l: usize) -> Result<MeanBound, TrigError> {
    if p.degree() > 2 * l {
        return Err(TrigError::DegreeTooHigh {
            degree: p.degree(),
            max: 2 * l,
        });
    }
    let (max_p, _) = max_on_circle(p, NONNEG_GRID);
    let mean = p.mean().re;
    let bound = (2 * l + 1) as f64 * mean;
    Ok(MeanBound {
        max_p,
        mean,
        bound,
        holds: max_p <= bound + 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn one_plus_cos() -> TrigPoly {
        &TrigPoly::constant(1.0) + &TrigPoly::cos()
    }

    #[test]
    fn factor_one_plus_cos() {
        let f = fejer_riesz_detailed(&one_plus_cos()).unwrap();
        assert!(f.residual <= 1e-10, "{} {:?}", f.residual, f.roots);
        let s = 0.5f64.sqrt();
        // Q = (1 + e^{iθ})/√2 up to a unimodular factor
        let q0 = f.q.coeff(0);
        let u = q0 / q0.norm();
        assert!((f.q.coeff(0) / u - c(s)).norm() < 1e-8);
        assert!((f.q.coeff(1) / u - c(s)).norm() < 1e-8);
    }

    #[test]
    fn constants() {
        assert_eq!(fejer_riesz(&TrigPoly::constant(4.0)).unwrap(), TrigPoly::constant(2.0));
        let q = fejer_riesz(&TrigPoly::from_cos_sin(&[2.0, 0.0, 2.0])).unwrap();
        assert!(q.distance(&TrigPoly::constant(2f64.sqrt())) < 1e-14);
    }

    #[test]
    fn sign_change_rejected() {
        let w: f64 = 0.7;
        let p = &TrigPoly::cos().scale(2.0) + &TrigPoly::constant(-2.0 * w.cos());
        assert!(matches!(fejer_riesz(&p), Err(TrigError::Negative { .. })));
        let rs = roots(&laurent_lift(&p).unwrap().0).unwrap();
        assert!(matches!(factor_roots(&rs), Err(TrigError::OddUnitMultiplicity { multiplicity: 1, .. })));
    }

    #[test]
    fn mean_bound_examples() {
        let b = mean_bound(&one_plus_cos(), 1).unwrap();
        assert!((b.max_p - 2.0).abs() < 1e-12 && (b.bound - 3.0).abs() < 1e-12 && b.holds);
        let ones = TrigPoly::analytic(&[c(1.0), c(1.0), c(1.0)]).abs_squared();
        let b = mean_bound(&ones, 2).unwrap();
        assert!((b.max_p - 9.0).abs() < 1e-12 && (b.bound - 15.0).abs() < 1e-12 && b.holds);
        let b = mean_bound(&TrigPoly::constant(0.7), 3).unwrap();
        assert!(b.holds && (b.bound - 4.9).abs() < 1e-12);
        assert!(matches!(mean_bound(&ones, 0), Err(TrigError::DegreeTooHigh { .. })));
    }

    #[test]
    fn double_unit_root() {
        // |1 + e^{iθ}|^2 |1 - 0.3 e^{iθ}|^2 has a double root at −1
        let q = TrigPoly::analytic(&from_roots(&[c(-1.0), c(1.0 / 0.3)]));
        let p = q.abs_squared();
        let f = fejer_riesz_detailed(&p).unwrap();
        assert!(f.residual < 1e-10);
        assert!(f.roots.approx_eq(&f.roots.reflect(), 1e-8));
        assert_eq!(f.q.span(), 2);
    }

    #[test]
    fn batch_matches_single() {
        let ps = vec![one_plus_cos(), TrigPoly::constant(9.0)];
        let out = fejer_riesz_batch(&ps, Exec::Sequential);
        assert_eq!(out[1].as_ref().unwrap(), &TrigPoly::constant(3.0));
        assert!(out[0].is_ok());
    }
}
