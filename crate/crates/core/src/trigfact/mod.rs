//! Trigonometric polynomials, their Fejér–Riesz square roots, and the
//! max-versus-mean inequality used to pass from `P_{2l}` to `D^l(h)`.

mod factor;
mod poly;
mod roots;

use thiserror::Error;

pub use factor::{
    factor_roots, fejer_riesz, fejer_riesz_batch, fejer_riesz_detailed, max_on_circle,
    mean_bound, Factorization, MeanBound, NONNEG_GRID,
};
pub use poly::{laurent_lift, TrigPoly};
pub use roots::{roots, Root, RootClass, RootMultiset};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrigError {
    #[error("zero polynomial")]
    Zero,
    #[error("polynomial of degree 0 has no roots")]
    Constant,
    #[error("root iteration did not converge (residual {0:e})")]
    NonConvergent(f64),
    #[error("trigonometric polynomial is not real-valued")]
    NotReal,
    #[error("polynomial is negative: min {min:e} at θ = {theta}")]
    Negative { min: f64, theta: f64 },
    #[error("unit-circle root {root} has odd multiplicity {multiplicity}")]
    OddUnitMultiplicity { root: String, multiplicity: usize },
    #[error("degree {degree} exceeds 2l = {max}")]
    DegreeTooHigh { degree: usize, max: usize },
    #[error("factorization residual {0:e} above tolerance")]
    Residual(f64),
}

pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `Γ(x/2)` for a positive integer `x`.
fn gamma_half(x2: u32) -> f64 {
    assert!(x2 > 0);
    if x2.is_multiple_of(2) {
        (1..x2 / 2).fold(1.0, |acc, k| acc * k as f64)
    } else {
        // Γ(n + ½) = (2n)! √π / (4^n n!)
        let n = (x2 - 1) / 2;
        (1..=n).fold(std::f64::consts::PI.sqrt(), |acc, k| acc * (k as f64 - 0.5))
    }
}

/// `B(a/2, b/2)`; infinite when either argument is zero.
pub fn beta_half(a2: u32, b2: u32) -> f64 {
    if a2 == 0 || b2 == 0 {
        return f64::INFINITY;
    }
    gamma_half(a2) * gamma_half(b2) / gamma_half(a2 + b2)
}

/// `B(m + ½, l − m + ½) / B(2m, 2l − 2m)`, the ratio as it is usually
/// quoted next to `C(l, m)`. `None` for `m ∈ {0, l}` where the denominator
/// diverges.
pub fn literal_beta_ratio(l: u32, m: u32) -> Option<f64> {
    if m == 0 || m >= l {
        return None;
    }
    Some(beta_half(2 * m + 1, 2 * (l - m) + 1) / beta_half(4 * m, 4 * (l - m)))
}

/// Weight of `H_{2m}` in the mean of `P_{2l}`:
/// `C(2l, 2m) (1/2π) ∫ cos^{2l−2m} θ sin^{2m} θ dθ = C(2l,2m) B(m+½, l−m+½)/π`.
pub fn mean_weight(l: u32, m: u32) -> f64 {
    binomial(2 * l as u64, 2 * m as u64) * beta_half(2 * m + 1, 2 * (l - m) + 1)
        / std::f64::consts::PI
}

/// Analytic `Q = Σ_{k ≤ degree} q_k e^{ikθ}` with real and imaginary parts
/// of each `q_k` uniform on `[−1, 1]`.
pub fn random_analytic<R: rand::Rng>(rng: &mut R, degree: usize) -> TrigPoly {
    let coeffs: Vec<num_complex::Complex64> = (0..=degree)
        .map(|_| num_complex::Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    TrigPoly::analytic(&coeffs)
}

/// Closed form of [`mean_weight`]: `C(l, m) C(2l, l) / 4^l`.
pub fn mean_weight_closed(l: u32, m: u32) -> f64 {
    binomial(l as u64, m as u64) * binomial(2 * l as u64, l as u64) / 4f64.powi(l as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_values() {
        assert!((gamma_half(1) - std::f64::consts::PI.sqrt()).abs() < 1e-15);
        assert_eq!(gamma_half(8), 6.0);
        assert!((gamma_half(5) - 0.75 * std::f64::consts::PI.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn corrected_weight_identity() {
        for l in 1..8 {
            for m in 0..=l {
                let a = mean_weight(l, m);
                let b = mean_weight_closed(l, m);
                assert!((a - b).abs() < 1e-13 * b, "l={l} m={m}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn literal_ratio_is_not_binomial() {
        let r = literal_beta_ratio(2, 1).unwrap();
        assert!((r - 0.75 * std::f64::consts::PI).abs() < 1e-13);
        for l in 2..7 {
            for m in 1..l {
                let r = literal_beta_ratio(l, m).unwrap();
                assert!((r - binomial(l as u64, m as u64)).abs() > 0.1);
            }
            assert!(literal_beta_ratio(l, 0).is_none());
            assert!(literal_beta_ratio(l, l).is_none());
        }
    }
}
