use serde::Serialize;

use super::{ExprError, FieldExpr};
use crate::exec::{map_range, Exec};

/// An axis-aligned box `[a_1, b_1] x ... x [a_d, b_d]` with a grid
/// resolution (number of points) per axis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
    res: Vec<usize>,
}

impl GridBox {
    pub fn new(bounds: &[(f64, f64)], res: &[usize]) -> Result<Self, ExprError> {
        if bounds.len() != res.len() || bounds.is_empty() {
            return Err(ExprError::InvalidBox(
                "bounds and resolution must have the same non-zero length".into(),
            ));
        }
        for (i, &(a, b)) in bounds.iter().enumerate() {
            if !(a < b) {
                return Err(ExprError::InvalidBox(format!("axis {i}: {a} >= {b}")));
            }
            if res[i] < 2 {
                return Err(ExprError::InvalidBox(format!("axis {i}: resolution < 2")));
            }
        }
        Ok(GridBox {
            lo: bounds.iter().map(|b| b.0).collect(),
            hi: bounds.iter().map(|b| b.1).collect(),
            res: res.to_vec(),
        })
    }

    /// Same resolution on every axis.
    pub fn uniform(bounds: &[(f64, f64)], res: usize) -> Result<Self, ExprError> {
        Self::new(bounds, &vec![res; bounds.len()])
    }

    /// Cube `[-half, half]^dim` around `center`.
    pub fn cube(center: &[f64], half: f64, res: usize) -> Result<Self, ExprError> {
        let bounds: Vec<_> = center.iter().map(|&c| (c - half, c + half)).collect();
        Self::uniform(&bounds, res)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn resolution(&self) -> &[usize] {
        &self.res
    }

    pub fn with_resolution(&self, res: usize) -> GridBox {
        GridBox {
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            res: vec![res; self.dim()],
        }
    }

    pub fn spacing(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| (self.hi[i] - self.lo[i]) / (self.res[i] - 1) as f64)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.res.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid point with linear index `k` (last axis fastest).
    pub fn point(&self, mut k: usize) -> Vec<f64> {
        let d = self.dim();
        let mut p = vec![0.0; d];
        for i in (0..d).rev() {
            let j = k % self.res[i];
            k /= self.res[i];
            let t = j as f64 / (self.res[i] - 1) as f64;
            // exact endpoints
            p[i] = if j + 1 == self.res[i] {
                self.hi[i]
            } else {
                self.lo[i] + t * (self.hi[i] - self.lo[i])
            };
        }
        p
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |k| self.point(k))
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lo[i] && v <= self.hi[i])
    }

    pub fn contains_box(&self, other: &GridBox) -> bool {
        (0..self.dim()).all(|i| other.lo[i] >= self.lo[i] && other.hi[i] <= self.hi[i])
    }

    pub fn center(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| 0.5 * (self.lo[i] + self.hi[i]))
            .collect()
    }

    /// Box around `p` of half-width `halves[i]` per axis, clipped to `self`.
    fn local(&self, p: &[f64], halves: &[f64], res: usize) -> GridBox {
        let d = self.dim();
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for i in 0..d {
            lo[i] = (p[i] - halves[i]).max(self.lo[i]);
            hi[i] = (p[i] + halves[i]).min(self.hi[i]);
        }
        GridBox {
            lo,
            hi,
            res: vec![res; d],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extremum {
    Max,
    Min,
    MaxAbs,
}

impl Extremum {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Extremum::Max => a > b,
            Extremum::Min => a < b,
            Extremum::MaxAbs => a.abs() > b.abs(),
        }
    }
}

/// Result of a grid extremum search with one refinement pass.
#[derive(Clone, Debug, Serialize)]
pub struct SupReport {
    /// Extremal value (absolute value for [`Extremum::MaxAbs`]).
    pub value: f64,
    pub argmax: Vec<f64>,
    pub coarse_value: f64,
    pub coarse_points: usize,
    pub coarse_spacing: Vec<f64>,
    pub refined_spacing: Vec<f64>,
}

const REFINE_FACTOR: usize = 10;
/// Cap on the refinement grid size, reached from dimension 3 on.
const REFINE_BUDGET: usize = (2 * REFINE_FACTOR + 1) * (2 * REFINE_FACTOR + 1);

/// Points per axis of the refinement grid: `2·10 + 1` up to dimension 2,
/// fewer above so the pass stays within [`REFINE_BUDGET`].
fn refine_points(dim: usize) -> usize {
    let full = 2 * REFINE_FACTOR + 1;
    if dim <= 2 {
        return full;
    }
    let mut k = full;
    while k > 3 && k.pow(dim as u32) > REFINE_BUDGET {
        k -= 2;
    }
    k
}

/// Extremum of an arbitrary function over the grid of `region`, followed by
/// one refinement pass around the coarse extremiser (factor 10 up to
/// dimension 2, coarser above). Errors from the
/// function (domain errors) abort the sweep.
pub fn grid_extremum<F>(
    func: F,
    region: &GridBox,
    kind: Extremum,
    exec: Exec,
) -> Result<SupReport, ExprError>
where
    F: Fn(&[f64]) -> Result<f64, ExprError> + Sync + Send,
{
    let (coarse_idx, coarse_value) = best_on(&func, region, kind, exec)?;
    let argmax = region.point(coarse_idx);
    let spacing = region.spacing();
    let local = region.local(&argmax, &spacing, refine_points(region.dim()));
    let (fine_idx, fine_value) = best_on(&func, &local, kind, exec)?;
    let (value, argmax) = if kind.better(fine_value, coarse_value) {
        (fine_value, local.point(fine_idx))
    } else {
        (coarse_value, argmax)
    };
    let finalize = |v: f64| if kind == Extremum::MaxAbs { v.abs() } else { v };
    Ok(SupReport {
        value: finalize(value),
        argmax,
        coarse_value: finalize(coarse_value),
        coarse_points: region.len(),
        refined_spacing: local.spacing(),
        coarse_spacing: spacing,
    })
}

fn best_on<F>(
    func: &F,
    region: &GridBox,
    kind: Extremum,
    exec: Exec,
) -> Result<(usize, f64), ExprError>
where
    F: Fn(&[f64]) -> Result<f64, ExprError> + Sync + Send,
{
    // Chunked so each task owns a point buffer.
    const CHUNK: usize = 4096;
    let n = region.len();
    let chunks = n.div_ceil(CHUNK);
    let partial = map_range(chunks, exec, |c| {
        let mut best: Option<(usize, f64)> = None;
        for k in c * CHUNK..((c + 1) * CHUNK).min(n) {
            let v = func(&region.point(k))?;
            if best.is_none_or(|(_, b)| kind.better(v, b)) {
                best = Some((k, v));
            }
        }
        Ok::<_, ExprError>(best)
    });
    let mut best: Option<(usize, f64)> = None;
    for r in partial {
        if let Some((k, v)) = r? {
            if best.is_none_or(|(_, b)| kind.better(v, b)) {
                best = Some((k, v));
            }
        }
    }
    Ok(best.expect("non-empty grid"))
}

/// `sup |f|` over the grid with one refinement pass.
pub fn sup_norm(f: &FieldExpr, region: &GridBox) -> Result<SupReport, ExprError> {
    sup_norm_with(f, region, Exec::Auto)
}

pub fn sup_norm_with(f: &FieldExpr, region: &GridBox, exec: Exec) -> Result<SupReport, ExprError> {
    check_dim(f, region)?;
    grid_extremum(|p| f.eval(p), region, Extremum::MaxAbs, exec)
}

/// `sup` over the grid of the Euclidean gradient norm.
pub fn c1_seminorm(f: &FieldExpr, region: &GridBox) -> Result<SupReport, ExprError> {
    check_dim(f, region)?;
    let grad = f.gradient();
    grid_extremum(
        |p| {
            let mut s = 0.0;
            for g in &grad {
                let v = g.eval(p)?;
                s += v * v;
            }
            Ok(s.sqrt())
        },
        region,
        Extremum::Max,
        Exec::Auto,
    )
}

fn check_dim(f: &FieldExpr, region: &GridBox) -> Result<(), ExprError> {
    if f.as_constant().is_none() && f.dim() != region.dim() {
        return Err(ExprError::InvalidBox(format!(
            "box of dimension {} for a field of dimension {}",
            region.dim(),
            f.dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldexpr::{parse_field, parse_field_in, Chart, ParseContext};
    use std::f64::consts::PI;

    #[test]
    fn invalid_boxes_rejected() {
        assert!(GridBox::new(&[(1.0, 1.0)], &[3]).is_err());
        assert!(GridBox::new(&[(0.0, 1.0)], &[1]).is_err());
        assert!(GridBox::new(&[(0.0, 1.0)], &[3, 3]).is_err());
    }

    #[test]
    fn paraboloid_max_at_origin() {
        let f = parse_field("1 - x^2 - y^2", 2).unwrap();
        let b = GridBox::uniform(&[(-1.0, 1.0), (-1.0, 1.0)], 41).unwrap();
        let r = sup_norm(&f, &b).unwrap();
        assert!((r.value - 1.0).abs() < 1e-15);
        // |f| = 1 at the corners as well, so the signed maximum locates the origin.
        let m = grid_extremum(|p| f.eval(p), &b, Extremum::Max, Exec::Sequential).unwrap();
        assert_eq!(m.value, 1.0);
        assert!(m.argmax.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_field() {
        let f = FieldExpr::zero(2);
        let b = GridBox::uniform(&[(-1.0, 1.0), (-1.0, 1.0)], 5).unwrap();
        assert_eq!(sup_norm(&f, &b).unwrap().value, 0.0);
    }

    #[test]
    fn momentum_on_strip() {
        let chart = Chart::with_names(&["q", "p"]);
        let f = parse_field_in("p", &chart, &ParseContext::new()).unwrap();
        let b = GridBox::uniform(&[(0.0, 2.0 * PI), (-1.0, 1.0)], 33).unwrap();
        let r = sup_norm(&f, &b).unwrap();
        assert!((r.value - 1.0).abs() < 1e-15);
        assert!((r.argmax[1].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn c1_of_linear_and_constant() {
        let b = GridBox::uniform(&[(-1.0, 1.0), (-1.0, 1.0)], 11).unwrap();
        let x = parse_field("x", 2).unwrap();
        assert!((c1_seminorm(&x, &b).unwrap().value - 1.0).abs() < 1e-15);
        let c = parse_field("3.5", 2).unwrap();
        assert_eq!(c1_seminorm(&c, &b).unwrap().value, 0.0);
    }

    #[test]
    fn c1_of_p_cos_q() {
        // |grad|^2 = p^2 sin^2 q + cos^2 q <= 1 for |p| <= 1, with equality on
        // p = ±1 and on q in {0, π, 2π}.
        let chart = Chart::with_names(&["q", "p"]);
        let f = parse_field_in("p*cos(q)", &chart, &ParseContext::new()).unwrap();
        let b = GridBox::uniform(&[(0.0, 2.0 * PI), (-1.0, 1.0)], 65).unwrap();
        let r = c1_seminorm(&f, &b).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12, "{}", r.value);
    }

    #[test]
    fn domain_error_propagates() {
        let f = parse_field("sqrt(x)", 2).unwrap();
        let b = GridBox::uniform(&[(-1.0, 1.0), (-1.0, 1.0)], 5).unwrap();
        assert!(matches!(sup_norm(&f, &b), Err(ExprError::Domain(_))));
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let f = parse_field("sin(3*x)*cos(2*y) + x*y", 2).unwrap();
        let b = GridBox::uniform(&[(-2.0, 2.0), (-2.0, 2.0)], 101).unwrap();
        let a = sup_norm_with(&f, &b, Exec::Auto).unwrap();
        let s = sup_norm_with(&f, &b, Exec::Sequential).unwrap();
        assert_eq!(a.value, s.value);
        assert_eq!(a.argmax, s.argmax);
    }
}
