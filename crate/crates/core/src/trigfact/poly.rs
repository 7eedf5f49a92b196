use std::f64::consts::PI;
use std::ops::{Add, Mul};

use num_complex::Complex64;

use super::TrigError;

/// `P(θ) = Σ_{k=lo}^{hi} a_k e^{ikθ}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigPoly {
    lo: i64,
    coeffs: Vec<Complex64>,
    real: bool,
}

const REAL_TOL: f64 = 1e-14;

impl TrigPoly {
    /// Coefficients `a_lo, a_{lo+1}, …`. Zero coefficients at either end are
    /// trimmed.
    pub fn new(lo: i64, coeffs: Vec<Complex64>) -> Self {
        let mut p = TrigPoly {
            lo,
            coeffs,
            real: false,
        };
        p.trim();
        p.real = p.check_real();
        p
    }

    pub fn constant(c: f64) -> Self {
        Self::new(0, vec![Complex64::new(c, 0.0)])
    }

    /// Real coefficients `a_0..a_m` of an analytic polynomial `Σ a_k e^{ikθ}`.
    pub fn analytic(coeffs: &[Complex64]) -> Self {
        Self::new(0, coeffs.to_vec())
    }

    pub fn cos() -> Self {
        Self::new(-1, vec![0.5.into(), 0.0.into(), 0.5.into()])
    }

    pub fn sin() -> Self {
        Self::new(-1, vec![Complex64::new(0.0, 0.5), 0.0.into(), Complex64::new(0.0, -0.5)])
    }

    /// `Σ_k c_k cos^{n−k} θ sin^k θ` with `n = c.len() − 1`.
    pub fn from_cos_sin(c: &[f64]) -> Self {
        let n = c.len().saturating_sub(1);
        let cos = Self::cos();
        let sin = Self::sin();
        let mut cos_pow = vec![Self::constant(1.0)];
        let mut sin_pow = vec![Self::constant(1.0)];
        for _ in 0..n {
            cos_pow.push(&cos_pow[cos_pow.len() - 1] * &cos);
            sin_pow.push(&sin_pow[sin_pow.len() - 1] * &sin);
        }
        let mut acc = Self::constant(0.0);
        for (k, &ck) in c.iter().enumerate() {
            if ck != 0.0 {
                acc = &acc + &(&cos_pow[n - k] * &sin_pow[k]).scale(ck);
            }
        }
        acc
    }

    fn trim(&mut self) {
        while self.coeffs.len() > 1 && self.coeffs.last().unwrap().norm() == 0.0 {
            self.coeffs.pop();
        }
        while self.coeffs.len() > 1 && self.coeffs[0].norm() == 0.0 {
            self.coeffs.remove(0);
            self.lo += 1;
        }
        if self.coeffs.is_empty() {
            self.coeffs.push(Complex64::new(0.0, 0.0));
        }
        if self.is_zero() {
            self.lo = 0;
        }
    }

    fn check_real(&self) -> bool {
        let scale = 1.0 + self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let m = self.lo.abs().max(self.hi().abs());
        (-m..=m).all(|k| (self.coeff(k) - self.coeff(-k).conj()).norm() <= REAL_TOL * scale)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.norm() == 0.0)
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.coeffs.len() as i64 - 1
    }

    /// Largest `|k|` with `a_k ≠ 0`.
    pub fn degree(&self) -> usize {
        self.lo.unsigned_abs().max(self.hi().unsigned_abs()) as usize
    }

    /// `hi − lo`, the frequency span.
    pub fn span(&self) -> usize {
        (self.hi() - self.lo) as usize
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn coeff(&self, k: i64) -> Complex64 {
        if k < self.lo || k > self.hi() {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(k - self.lo) as usize]
        }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `a_0`, the mean over a period.
    pub fn mean(&self) -> Complex64 {
        self.coeff(0)
    }

    pub fn eval(&self, theta: f64) -> Complex64 {
        let z = Complex64::from_polar(1.0, theta);
        let mut acc = Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc * Complex64::from_polar(1.0, theta * self.lo as f64)
    }

    /// Real part of [`TrigPoly::eval`].
    pub fn eval_real(&self, theta: f64) -> f64 {
        self.eval(theta).re
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.lo, self.coeffs.iter().map(|c| c * s).collect())
    }

    /// `θ ↦ conj(P(θ))`.
    pub fn conj(&self) -> Self {
        Self::new(-self.hi(), self.coeffs.iter().rev().map(|c| c.conj()).collect())
    }

    /// `|P|²`.
    pub fn abs_squared(&self) -> Self {
        self * &self.conj()
    }

    /// `Σ |a_k|²`, which equals the mean of `|P|²`.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `max_k |a_k − b_k|`.
    pub fn distance(&self, other: &TrigPoly) -> f64 {
        let lo = self.lo.min(other.lo);
        let hi = self.hi().max(other.hi());
        (lo..=hi)
            .map(|k| (self.coeff(k) - other.coeff(k)).norm())
            .fold(0.0, f64::max)
    }

    /// Uniform samples `θ_j = 2πj/n`.
    pub fn samples(&self, n: usize) -> Vec<f64> {
        (0..n).map(|j| self.eval_real(2.0 * PI * j as f64 / n as f64)).collect()
    }
}

impl Add for &TrigPoly {
    type Output = TrigPoly;
    fn add(self, rhs: &TrigPoly) -> TrigPoly {
        let lo = self.lo.min(rhs.lo);
        let hi = self.hi().max(rhs.hi());
        TrigPoly::new(lo, (lo..=hi).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl Mul for &TrigPoly {
    type Output = TrigPoly;
    fn mul(self, rhs: &TrigPoly) -> TrigPoly {
        let mut out = vec![Complex64::new(0.0, 0.0); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        TrigPoly::new(self.lo + rhs.lo, out)
    }
}

/// Writes `P(θ) = z^{−r} T(z)` with `z = e^{iθ}` and `T(0) ≠ 0`. Returns the
/// coefficients of `T`, lowest degree first, and `r`.
pub fn laurent_lift(p: &TrigPoly) -> Result<(Vec<Complex64>, i64), TrigError> {
    if p.is_zero() {
        return Err(TrigError::Zero);
    }
    Ok((p.coeffs.clone(), -p.lo))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn lift_examples() {
        let p = &TrigPoly::constant(1.0) + &TrigPoly::cos();
        let (t, r) = laurent_lift(&p).unwrap();
        assert_eq!(r, 1);
        assert_eq!(t, vec![c(0.5), c(1.0), c(0.5)]);
        let (t, r) = laurent_lift(&TrigPoly::constant(3.0)).unwrap();
        assert_eq!((t, r), (vec![c(3.0)], 0));
        let cos2 = &TrigPoly::cos() * &TrigPoly::cos();
        let (t, r) = laurent_lift(&cos2).unwrap();
        assert_eq!(r, 2);
        assert_eq!(t, vec![c(0.25), c(0.0), c(0.5), c(0.0), c(0.25)]);
        assert_eq!(laurent_lift(&TrigPoly::constant(0.0)), Err(TrigError::Zero));
    }

    #[test]
    fn cos_sin_expansion() {
        let c = [0.3, -1.2, 2.0, 0.7];
        let p = TrigPoly::from_cos_sin(&c);
        assert!(p.is_real());
        for j in 0..50 {
            let th = 0.13 * j as f64;
            let direct: f64 = (0..4)
                .map(|k| c[k] * th.cos().powi(3 - k as i32) * th.sin().powi(k as i32))
                .sum();
            assert!((p.eval(th).re - direct).abs() < 1e-13 && p.eval(th).im.abs() < 1e-13);
        }
    }

    #[test]
    fn parseval() {
        let q = TrigPoly::analytic(&[Complex64::new(0.2, -0.4), c(1.0), Complex64::new(0.0, 0.3)]);
        let p = q.abs_squared();
        assert!(p.is_real());
        assert!((p.mean().re - q.energy()).abs() < 1e-15);
        assert_eq!(p.degree(), 2);
        assert_eq!(q.span(), 2);
    }
}
