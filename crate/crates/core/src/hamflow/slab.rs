use serde::Serialize;

use super::FlowError;
use crate::bracketops::{ham_vector_field, PairingConvention};
use crate::fieldexpr::{sup_norm, FieldExpr, GridBox};

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Term `index` of the Halton sequence in `[0, 1)^dim`.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "halton sequence supports up to 12 axes");
    PRIMES[..dim]
        .iter()
        .map(|&b| {
            let mut f = 1.0;
            let mut r = 0.0;
            let mut i = index;
            while i > 0 {
                f /= b as f64;
                r += f * (i % b) as f64;
                i /= b;
            }
            r
        })
        .collect()
}

/// Sampled `W_{r,α} = B_x(r) ∩ {f(x) < f(y) < f(x) + α}`.
#[derive(Clone, Debug, Serialize)]
pub struct SlabSet {
    pub center: Vec<f64>,
    pub radius: f64,
    pub height: f64,
    pub base_value: f64,
    #[serde(skip)]
    pub field: FieldExpr,
    pub samples: Vec<Vec<f64>>,
    pub requested: usize,
    /// Halton points drawn to collect the samples.
    pub draws: u64,
}

impl SlabSet {
    /// Filter a Halton sequence over the bounding cube of the ball until
    /// `count` members are found or `max_draws` points are spent.
    pub fn sample(
        f: &FieldExpr,
        center: &[f64],
        radius: f64,
        height: f64,
        count: usize,
        max_draws: u64,
    ) -> Result<SlabSet, FlowError> {
        if !(radius > 0.0) || !(height > 0.0) {
            return Err(FlowError::InvalidSlab(format!(
                "radius {radius} and height {height} must be positive"
            )));
        }
        let d = center.len();
        let base = f.eval(center)?;
        let mut slab = SlabSet {
            center: center.to_vec(),
            radius,
            height,
            base_value: base,
            field: f.clone(),
            samples: Vec::with_capacity(count),
            requested: count,
            draws: 0,
        };
        let mut i = 1u64;
        while slab.samples.len() < count && i <= max_draws {
            let u = halton(i, d);
            i += 1;
            let y: Vec<f64> = (0..d)
                .map(|k| center[k] + radius * (2.0 * u[k] - 1.0))
                .collect();
            if slab.contains(&y)? {
                slab.samples.push(y);
            }
        }
        slab.draws = i - 1;
        if slab.samples.is_empty() {
            return Err(FlowError::InvalidSlab("no sample fell into the slab".into()));
        }
        Ok(slab)
    }

    pub fn contains(&self, y: &[f64]) -> Result<bool, FlowError> {
        let dist2: f64 = y
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if dist2 >= self.radius * self.radius {
            return Ok(false);
        }
        let v = self.field.eval(y)?;
        Ok(v > self.base_value && v < self.base_value + self.height)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Displacement {
    pub separated: bool,
    /// `min f(imgA) − max f(imgB)`.
    pub margin: f64,
}

/// Separation of two clouds by the values of a function on them.
pub fn displacement_check(values_a: &[f64], values_b: &[f64]) -> Result<Displacement, FlowError> {
    if values_a.is_empty() || values_b.is_empty() {
        return Err(FlowError::EmptyCloud);
    }
    let min_a = values_a.iter().copied().fold(f64::INFINITY, f64::min);
    let max_b = values_b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let margin = min_a - max_b;
    Ok(Displacement {
        separated: margin > 0.0,
        margin,
    })
}

/// `2 |t| sup |g − G|` over the grid of `region`.
pub fn hofer_upper(
    g: &FieldExpr,
    big_g: &FieldExpr,
    t: f64,
    region: &GridBox,
) -> Result<f64, FlowError> {
    let d = g - big_g;
    if d.as_constant() == Some(0.0) {
        return Ok(0.0);
    }
    Ok(2.0 * t.abs() * sup_norm(&d, region)?.value)
}

/// Planar domain for the product energy bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum PlanarDomain {
    Rectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
    Polygon(Vec<(f64, f64)>),
}

impl PlanarDomain {
    pub fn regular_polygon(center: (f64, f64), radius: f64, sides: usize) -> Self {
        let pts = (0..sides)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / sides as f64;
                (center.0 + radius * a.cos(), center.1 + radius * a.sin())
            })
            .collect();
        PlanarDomain::Polygon(pts)
    }

    pub fn area(&self) -> Result<f64, FlowError> {
        match self {
            PlanarDomain::Rectangle { x0, x1, y0, y1 } => {
                let a = (x1 - x0) * (y1 - y0);
                if !(x1 > x0 && y1 > y0) {
                    return Err(FlowError::DegenerateDomain("empty rectangle".into()));
                }
                Ok(a)
            }
            PlanarDomain::Polygon(pts) => {
                if pts.len() < 3 {
                    return Err(FlowError::DegenerateDomain("fewer than 3 vertices".into()));
                }
                if self_intersects(pts) {
                    return Err(FlowError::DegenerateDomain("self-intersecting polygon".into()));
                }
                let n = pts.len();
                let twice: f64 = (0..n)
                    .map(|i| {
                        let (a, b) = (pts[i], pts[(i + 1) % n]);
                        a.0 * b.1 - b.0 * a.1
                    })
                    .sum();
                let a = 0.5 * twice.abs();
                if a <= 0.0 {
                    return Err(FlowError::DegenerateDomain("zero area".into()));
                }
                Ok(a)
            }
        }
    }
}

fn self_intersects(pts: &[(f64, f64)]) -> bool {
    let n = pts.len();
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        for j in i + 1..n {
            // skip adjacent edges
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (pts[j], pts[(j + 1) % n]);
            let d1 = cross(c, d, a);
            let d2 = cross(c, d, b);
            let d3 = cross(a, b, c);
            let d4 = cross(a, b, d);
            if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
                return true;
            }
        }
    }
    false
}

/// `½ min Area(Q_i)` for a product of planar domains.
pub fn energy_lower_product(domains: &[PlanarDomain]) -> Result<f64, FlowError> {
    if domains.is_empty() {
        return Err(FlowError::DegenerateDomain("no domains".into()));
    }
    let mut min = f64::INFINITY;
    for d in domains {
        min = min.min(d.area()?);
    }
    Ok(0.5 * min)
}

/// Default safety margin below the constant `1/|X_f(x)|`.
pub const SLAB_KAPPA: f64 = 0.05;

/// `C r α` with `C = (1 − κ)/|X_f(x)|`.
pub fn energy_lower_slab(
    f: &FieldExpr,
    x: &[f64],
    r: f64,
    alpha: f64,
    conv: &PairingConvention,
    kappa: f64,
) -> Result<f64, FlowError> {
    let speed = ham_vector_field(f, conv)?.norm_at(x)?;
    if speed < 1e-12 {
        return Err(FlowError::CriticalPoint(x.to_vec()));
    }
    Ok((1.0 - kappa) / speed * r * alpha)
}

/// The two sides of the displacement inequality
/// `δ t ≥ ⅓ (|h|_{U,2}/|X_g|_U) (r + t |X_g|_U)³ + 2 e + α`,
/// where `e` bounds the perturbation of the measured function.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DisplacementInequality {
    pub lhs: f64,
    pub rhs: f64,
}

impl DisplacementInequality {
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate(
        delta: f64,
        t: f64,
        r: f64,
        alpha: f64,
        measured_perturbation: f64,
        h_second: f64,
        speed: f64,
    ) -> Self {
        let rhs = h_second / (3.0 * speed) * (r + t * speed).powi(3)
            + 2.0 * measured_perturbation
            + alpha;
        DisplacementInequality {
            lhs: delta * t,
            rhs,
        }
    }

    pub fn holds(&self) -> bool {
        self.lhs >= self.rhs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldexpr::parse_field;

    #[test]
    fn halton_first_terms() {
        assert_eq!(halton(1, 2), vec![0.5, 1.0 / 3.0]);
        assert_eq!(halton(2, 2), vec![0.25, 2.0 / 3.0]);
        assert_eq!(halton(3, 1), vec![0.75]);
    }

    #[test]
    fn slab_members_satisfy_predicate() {
        let f = parse_field("x - x^3/3 - x*y^2", 2).unwrap();
        let s = SlabSet::sample(&f, &[0.0, 0.0], 0.1, 0.01, 500, 1_000_000).unwrap();
        assert_eq!(s.len(), 500);
        for y in &s.samples {
            let d = (y[0] * y[0] + y[1] * y[1]).sqrt();
            let v = f.eval(y).unwrap();
            assert!(d < 0.1 && v > 0.0 && v < 0.01);
        }
        assert!(SlabSet::sample(&f, &[0.0, 0.0], 0.0, 0.01, 5, 10).is_err());
    }

    #[test]
    fn displacement_examples() {
        let d = displacement_check(&[2.0, 3.0], &[0.0, 1.0]).unwrap();
        assert!(d.separated && d.margin == 1.0);
        let same = displacement_check(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!(!same.separated && same.margin <= 0.0);
        assert!(displacement_check(&[], &[1.0]).is_err());
    }

    #[test]
    fn hofer_examples() {
        let b = GridBox::uniform(&[(-1.0, 1.0), (-1.0, 1.0)], 11).unwrap();
        let g = parse_field("y", 2).unwrap();
        assert_eq!(hofer_upper(&g, &g, 0.5, &b).unwrap(), 0.0);
        let big_g = parse_field("y + 1e-3*x", 2).unwrap();
        assert!((hofer_upper(&g, &big_g, 0.5, &b).unwrap() - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn product_energy() {
        let sq = PlanarDomain::Rectangle {
            x0: 0.0,
            x1: 1.0,
            y0: 0.0,
            y1: 1.0,
        };
        assert_eq!(energy_lower_product(&[sq.clone(), sq.clone()]).unwrap(), 0.5);
        let disk = PlanarDomain::regular_polygon((0.0, 0.0), 1.0, 4096);
        let a = disk.area().unwrap();
        assert!((a - std::f64::consts::PI).abs() < 1e-5);
        assert_eq!(energy_lower_product(&[disk, sq]).unwrap(), 0.5);
        // the rectangle [0, α/a] × [−τ r/√b, τ r/√b]
        let (alpha, a, tau, r, b11) = (0.01, 2.0, 0.9, 0.1, 1.5f64);
        let rect = PlanarDomain::Rectangle {
            x0: 0.0,
            x1: alpha / a,
            y0: -tau * r / b11.sqrt(),
            y1: tau * r / b11.sqrt(),
        };
        let expected = 0.5 * 2.0 * tau / (a * b11.sqrt()) * alpha * r;
        assert!((energy_lower_product(&[rect]).unwrap() - expected).abs() < 1e-16);
        let bow = PlanarDomain::Polygon(vec![(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)]);
        assert!(bow.area().is_err());
        assert!(energy_lower_product(&[]).is_err());
    }

    #[test]
    fn slab_energy() {
        let c = PairingConvention::standard(2).unwrap();
        let x = parse_field("x", 2).unwrap();
        let e = energy_lower_slab(&x, &[0.0, 0.0], 0.1, 0.01, &c, SLAB_KAPPA).unwrap();
        assert!((e - 9.5e-4).abs() < 1e-16);
        assert_eq!(energy_lower_slab(&x, &[0.0, 0.0], 0.1, 0.0, &c, SLAB_KAPPA).unwrap(), 0.0);
        let k = FieldExpr::constant(1.0, 2);
        assert!(matches!(
            energy_lower_slab(&k, &[0.0, 0.0], 0.1, 0.01, &c, SLAB_KAPPA),
            Err(FlowError::CriticalPoint(_))
        ));
    }

    #[test]
    fn inequality_arithmetic() {
        let i = DisplacementInequality::evaluate(1.0, 1.0, 0.0, 0.1, 0.0, 3.0, 1.0);
        assert_eq!(i.rhs, 1.1);
        assert!(!i.holds());
        assert!(DisplacementInequality::evaluate(2.0, 1.0, 0.0, 0.1, 0.0, 3.0, 1.0).holds());
    }
}
