use std::sync::Arc;

use super::PerturbError;
use crate::bracketops::BilinearForm;
use crate::exec::{map_range, Exec};
use crate::fieldexpr::{grid_extremum, Extremum, FieldExpr, GridBox, Monotonicity, Piece, Profile};

/// Width of each smooth riser between plateaus.
const RISER: f64 = 0.2;

/// Nondecreasing staircase equal to `2k` on `[2k, 2k + 1.4]` and rising to
/// `2k + 2` over `[2k + 1.4, 2k + 1.6]`, for all `k` with `2k` in
/// `[lo, hi]` (rounded outwards).
///
/// `φ'(t) φ'(t + 1) = 0` for every `t` since the risers are `0.2` wide and
/// one unit apart from the flat parts of the shifted copy.
pub fn staircase_profile(lo: f64, hi: f64) -> Profile {
    let k0 = (lo / 2.0).floor() as i64 - 1;
    let k1 = (hi / 2.0).ceil() as i64 + 1;
    let flat = 1.5 - 0.5 * RISER;
    let mut pieces = Vec::with_capacity(3 * (k1 - k0 + 1) as usize);
    for k in k0..=k1 {
        let base = 2.0 * k as f64;
        pieces.push(Piece::constant(base, base + flat, base));
        pieces.push(Piece::cubic_step(base + flat, base + flat + RISER, base, base + 2.0));
        pieces.push(Piece::constant(base + flat + RISER, base + 2.0, base + 2.0));
    }
    let bound = (2.0 * k0 as f64).abs().max(2.0 * (k1 + 1) as f64);
    Profile::new("stair", pieces, bound, Monotonicity::NonDecreasing)
}

/// The pair `f_n = φ(n h)/n`, `g_n = φ(n h + 1)/n` on `domain`.
#[derive(Clone, Debug)]
pub struct Staircase {
    pub n: usize,
    pub h: FieldExpr,
    pub f: FieldExpr,
    pub g: FieldExpr,
    pub profile: Arc<Profile>,
    /// `B(f_n, g_n)` as a field.
    pub image: FieldExpr,
    pub domain: GridBox,
}

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct StaircaseReport {
    pub n: usize,
    pub max_image: f64,
    pub f_deviation: f64,
    pub g_deviation: f64,
}

pub fn staircase_counterexample(
    b: &BilinearForm,
    h: &FieldExpr,
    n: usize,
    domain: &GridBox,
) -> Result<Staircase, PerturbError> {
    if n == 0 {
        return Err(PerturbError::InvalidParameter("n must be at least 1".into()));
    }
    if b.dim() != domain.dim() {
        return Err(PerturbError::InvalidParameter(format!(
            "operator of dimension {} on a box of dimension {}",
            b.dim(),
            domain.dim()
        )));
    }
    let lo = grid_extremum(|p| h.eval(p), domain, Extremum::Min, Exec::Auto)?.value;
    let hi = grid_extremum(|p| h.eval(p), domain, Extremum::Max, Exec::Auto)?.value;
    let nf = n as f64;
    let profile = Arc::new(staircase_profile(nf * lo - 1.0, nf * hi + 2.0));
    let nh = h * nf;
    let f = nh.profile(&profile) / nf;
    let g = (nh + 1.0).profile(&profile) / nf;
    let image = b.apply(&f, &g)?;
    Ok(Staircase {
        n,
        h: h.clone(),
        f,
        g,
        profile,
        image,
        domain: domain.clone(),
    })
}

impl Staircase {
    /// Grid maxima of `|B(f_n, g_n)|`, `|f_n − h|` and `|g_n − h|`.
    pub fn report(&self, exec: Exec) -> Result<StaircaseReport, PerturbError> {
        let rows = map_range(self.domain.len(), exec, |k| {
            let p = self.domain.point(k);
            let h = self.h.eval(&p)?;
            Ok::<_, PerturbError>([
                self.image.eval(&p)?.abs(),
                (self.f.eval(&p)? - h).abs(),
                (self.g.eval(&p)? - h).abs(),
            ])
        });
        let mut m = [0.0f64; 3];
        for r in rows {
            let r = r?;
            for i in 0..3 {
                m[i] = m[i].max(r[i]);
            }
        }
        Ok(StaircaseReport {
            n: self.n,
            max_image: m[0],
            f_deviation: m[1],
            g_deviation: m[2],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldexpr::parse_field;

    #[test]
    fn profile_is_a_staircase() {
        let p = staircase_profile(-10.0, 10.0);
        assert!(p.verify(20_001));
        for k in -4..4 {
            let t = 2.0 * k as f64;
            assert_eq!(p.eval(t), t);
            assert_eq!(p.eval(t + 1.0), t);
        }
        for i in 0..4000 {
            let t = -9.0 + i as f64 * 0.004;
            assert_eq!(p.eval_derivative(t, 1) * p.eval_derivative(t + 1.0, 1), 0.0);
        }
    }

    #[test]
    fn example_counterexample() {
        let b = BilinearForm::constant(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let h = parse_field("x", 2).unwrap();
        let dom = GridBox::uniform(&[(-3.0, 3.0), (-3.0, 3.0)], 61).unwrap();
        for n in [5, 20] {
            let s = staircase_counterexample(&b, &h, n, &dom).unwrap();
            let r = s.report(Exec::Auto).unwrap();
            assert_eq!(r.max_image, 0.0);
            assert!(r.f_deviation <= 2.0 / n as f64);
            assert!(r.g_deviation <= 3.0 / n as f64);
        }
    }

    #[test]
    fn antisymmetric_operator_is_trivial() {
        let b = BilinearForm::constant(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let h = parse_field("x^2 + y", 2).unwrap();
        assert_eq!(b.apply(&h, &h).unwrap().eval(&[0.3, 0.2]).unwrap(), 0.0);
        let dom = GridBox::uniform(&[(-1.0, 1.0), (-1.0, 1.0)], 21).unwrap();
        let s = staircase_counterexample(&b, &h, 3, &dom).unwrap();
        assert_eq!(s.report(Exec::Sequential).unwrap().max_image, 0.0);
    }

    #[test]
    fn rejects_zero_n() {
        let b = BilinearForm::constant(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let h = parse_field("x", 2).unwrap();
        let dom = GridBox::uniform(&[(-1.0, 1.0), (-1.0, 1.0)], 5).unwrap();
        assert!(staircase_counterexample(&b, &h, 0, &dom).is_err());
    }
}
