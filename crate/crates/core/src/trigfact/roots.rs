use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrigError;

const MAX_ITER: usize = 200;
const RESTARTS: usize = 8;
/// Roots closer than this are merged into one with multiplicity.
pub const CLUSTER_RADIUS: f64 = 1e-6;
/// `||α| − 1|` below this counts as a unit-circle root.
pub const UNIT_TOL: f64 = 1e-8;
const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RootClass {
    Interior,
    Unit,
    Exterior,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Root {
    pub value: Complex64,
    pub multiplicity: usize,
}

impl Root {
    pub fn class(&self) -> RootClass {
        let r = self.value.norm();
        if (r - 1.0).abs() <= UNIT_TOL {
            RootClass::Unit
        } else if r < 1.0 {
            RootClass::Interior
        } else {
            RootClass::Exterior
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RootMultiset {
    pub roots: Vec<Root>,
}

impl RootMultiset {
    /// Total count with multiplicity.
    pub fn count(&self) -> usize {
        self.roots.iter().map(|r| r.multiplicity).sum()
    }

    pub fn of_class(&self, class: RootClass) -> impl Iterator<Item = &Root> {
        self.roots.iter().filter(move |r| r.class() == class)
    }

    /// Every root expanded by multiplicity.
    pub fn flatten(&self) -> Vec<Complex64> {
        self.roots
            .iter()
            .flat_map(|r| std::iter::repeat_n(r.value, r.multiplicity))
            .collect()
    }

    /// Multiset equality up to `tol`, matching greedily by distance.
    pub fn approx_eq(&self, other: &RootMultiset, tol: f64) -> bool {
        let mut rest = other.flatten();
        if rest.len() != self.count() {
            return false;
        }
        for a in self.flatten() {
            let Some((i, d)) = rest
                .iter()
                .enumerate()
                .map(|(i, b)| (i, (a - b).norm()))
                .min_by(|x, y| x.1.total_cmp(&y.1))
            else {
                return false;
            };
            if d > tol {
                return false;
            }
            rest.swap_remove(i);
        }
        true
    }

    /// `α ↦ 1/conj(α)` applied to every root.
    pub fn reflect(&self) -> RootMultiset {
        RootMultiset {
            roots: self
                .roots
                .iter()
                .map(|r| Root {
                    value: 1.0 / r.value.conj(),
                    multiplicity: r.multiplicity,
                })
                .collect(),
        }
    }
}

fn horner(c: &[Complex64], z: Complex64) -> (Complex64, Complex64, f64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    let mut scale = 0.0;
    let r = z.norm();
    for a in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
        scale = scale * r + a.norm();
    }
    (p, dp, scale)
}

/// Backward error `|T(z)| / Σ |a_k| |z|^k`.
fn relative_residual(c: &[Complex64], z: Complex64) -> f64 {
    let (p, _, s) = horner(c, z);
    if s == 0.0 {
        0.0
    } else {
        p.norm() / s
    }
}

/// All roots of `T(z) = Σ c_k z^k` by Aberth–Ehrlich iteration, clustered
/// into a multiset.
pub fn roots(coeffs: &[Complex64]) -> Result<RootMultiset, TrigError> {
    let mut c = coeffs.to_vec();
    while c.len() > 1 && c.last().unwrap().norm() == 0.0 {
        c.pop();
    }
    if c.iter().all(|a| a.norm() == 0.0) {
        return Err(TrigError::Zero);
    }
    let n = c.len() - 1;
    if n == 0 {
        return Err(TrigError::Constant);
    }
    // roots at the origin are exact
    let zeros = c.iter().take_while(|a| a.norm() == 0.0).count();
    let full = c.clone();
    let c: Vec<Complex64> = c[zeros..].iter().map(|a| a / c[n]).collect();
    let m = c.len() - 1;
    let mut found = vec![Complex64::new(0.0, 0.0); zeros];
    if m > 0 {
        found.extend(aberth(&c)?);
    }
    let mut set = cluster(found);
    for r in &mut set.roots {
        if r.value.norm() > 0.0 {
            r.value = polish(&full, r.value, r.multiplicity);
        }
    }
    Ok(set)
}

/// Newton on `T^{(m−1)}`, which has a simple root at a root of
/// multiplicity `m`.
fn polish(c: &[Complex64], z0: Complex64, m: usize) -> Complex64 {
    let mut d = c.to_vec();
    for _ in 1..m {
        d = d.iter().enumerate().skip(1).map(|(k, a)| a * k as f64).collect();
    }
    if d.len() < 2 {
        return z0;
    }
    let mut z = z0;
    for _ in 0..8 {
        let (p, dp, _) = horner(&d, z);
        if dp.norm() == 0.0 {
            break;
        }
        let step = p / dp;
        // a jump outside the cluster means Newton is not in its basin
        if !step.is_finite() || step.norm() > CLUSTER_RADIUS {
            break;
        }
        z -= step;
        if step.norm() <= 1e-16 * (1.0 + z.norm()) {
            break;
        }
    }
    if relative_residual(c, z) <= relative_residual(c, z0) || m > 1 {
        z
    } else {
        z0
    }
}

fn aberth(c: &[Complex64]) -> Result<Vec<Complex64>, TrigError> {
    let n = c.len() - 1;
    // Cauchy radius as the starting circle
    let radius = 1.0 + c[..n].iter().map(|a| a.norm()).fold(0.0, f64::max);
    let start_radius = (c[0].norm()).powf(1.0 / n as f64).clamp(1e-3, radius);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut best = (f64::INFINITY, Vec::new());
    for attempt in 0..RESTARTS {
        let offset = if attempt == 0 { 0.4 } else { rng.gen::<f64>() * std::f64::consts::TAU };
        let rad = if attempt == 0 {
            start_radius
        } else {
            start_radius * (0.5 + rng.gen::<f64>())
        };
        let mut z: Vec<Complex64> = (0..n)
            .map(|k| Complex64::from_polar(rad, offset + 2.0 * std::f64::consts::PI * k as f64 / n as f64))
            .collect();
        for _ in 0..MAX_ITER {
            let mut moved: f64 = 0.0;
            for i in 0..n {
                let (p, dp, _) = horner(c, z[i]);
                if p.norm() == 0.0 {
                    continue;
                }
                let ratio = p / dp;
                let sum: Complex64 = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| {
                        let d = z[i] - z[j];
                        if d.norm() == 0.0 {
                            Complex64::new(0.0, 0.0)
                        } else {
                            1.0 / d
                        }
                    })
                    .sum();
                let step = ratio / (1.0 - ratio * sum);
                if step.is_finite() {
                    z[i] -= step;
                    moved = moved.max(step.norm() / (1.0 + z[i].norm()));
                }
            }
            if moved < 1e-15 {
                break;
            }
        }
        let worst = z.iter().map(|&r| relative_residual(c, r)).fold(0.0, f64::max);
        if worst <= RESIDUAL_TOL && z.iter().all(|r| r.is_finite()) {
            return Ok(z);
        }
        if worst < best.0 {
            best = (worst, z);
        }
    }
    Err(TrigError::NonConvergent(best.0))
}

fn cluster(mut pts: Vec<Complex64>) -> RootMultiset {
    let mut roots = Vec::new();
    while let Some(seed) = pts.pop() {
        let mut members = vec![seed];
        // grow the cluster transitively
        let mut i = 0;
        while i < members.len() {
            let c = members[i];
            let mut k = 0;
            while k < pts.len() {
                if (pts[k] - c).norm() <= CLUSTER_RADIUS {
                    members.push(pts.swap_remove(k));
                } else {
                    k += 1;
                }
            }
            i += 1;
        }
        let value = members.iter().sum::<Complex64>() / members.len() as f64;
        roots.push(Root {
            value,
            multiplicity: members.len(),
        });
    }
    roots.sort_by(|a, b| a.value.norm().total_cmp(&b.value.norm()).then(a.value.arg().total_cmp(&b.value.arg())));
    RootMultiset { roots }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn double_root() {
        let r = roots(&[c(1.0), c(2.0), c(1.0)]).unwrap();
        assert_eq!(r.roots.len(), 1);
        assert_eq!(r.roots[0].multiplicity, 2);
        assert!((r.roots[0].value - c(-1.0)).norm() < 1e-8);
        let r = roots(&[c(0.5), c(1.0), c(0.5)]).unwrap();
        assert_eq!(r.roots[0].multiplicity, 2);
        assert_eq!(r.roots[0].class(), RootClass::Unit);
    }

    #[test]
    fn simple_unit_pair() {
        let w: f64 = 0.7;
        let r = roots(&[c(1.0), c(-2.0 * w.cos()), c(1.0)]).unwrap();
        assert_eq!(r.count(), 2);
        assert!(r.roots.iter().all(|x| x.multiplicity == 1 && x.class() == RootClass::Unit));
        let expected = RootMultiset {
            roots: vec![
                Root { value: Complex64::from_polar(1.0, w), multiplicity: 1 },
                Root { value: Complex64::from_polar(1.0, -w), multiplicity: 1 },
            ],
        };
        assert!(r.approx_eq(&expected, 1e-12));
    }

    #[test]
    fn wide_dynamic_range() {
        // (z - 0.01)(z - 100)(z + 2i)(z - 0.5)
        let rs = [c(0.01), c(100.0), Complex64::new(0.0, -2.0), c(0.5)];
        let mut p = vec![c(1.0)];
        for r in rs {
            let mut q = vec![c(0.0); p.len() + 1];
            for (i, a) in p.iter().enumerate() {
                q[i + 1] += a;
                q[i] -= a * r;
            }
            p = q;
        }
        let found = roots(&p).unwrap();
        let expected = RootMultiset {
            roots: rs.iter().map(|&v| Root { value: v, multiplicity: 1 }).collect(),
        };
        assert!(found.approx_eq(&expected, 1e-9));
    }

    #[test]
    fn zero_roots_and_errors() {
        let r = roots(&[c(0.0), c(0.0), c(1.0)]).unwrap();
        assert_eq!(r.roots, vec![Root { value: c(0.0), multiplicity: 2 }]);
        assert_eq!(roots(&[c(2.0)]), Err(TrigError::Constant));
        assert_eq!(roots(&[c(0.0)]), Err(TrigError::Zero));
    }
}
