use nalgebra::SymmetricEigen;
use serde::Serialize;

use super::RateError;
use crate::bracketops::{
    d_power, factorial, has_multiplicity, hessian, p_theta_coefficients, phi_invariant, poisson,
    PairingConvention, VectorFieldExpr,
};
use crate::exec::{map_range, map_slice, Exec};
use crate::fieldexpr::{c1_seminorm, sup_norm, FieldExpr, GridBox};
use crate::trigfact::{max_on_circle, TrigPoly};

fn odd_root(s: f64, k: u32) -> f64 {
    s.signum() * s.abs().powf(1.0 / k as f64)
}

/// `(C/3, 6C)` with `C = min_i |Φ(x_i)|^{1/3}`.
#[derive(Clone, Debug, Serialize)]
pub struct Band {
    pub c: f64,
    pub lower: f64,
    pub upper: f64,
    pub phis: Vec<f64>,
    /// Set when some `Φ(x_i)` vanishes.
    pub flag: Option<String>,
}

pub fn theoretical_band(
    f: &FieldExpr,
    g: &FieldExpr,
    points: &[Vec<f64>],
    conv: &PairingConvention,
) -> Result<Band, RateError> {
    if points.is_empty() {
        return Err(RateError::InvalidParameter("no extremal points".into()));
    }
    let h = poisson(f, g, conv)?;
    let phi = phi_invariant(f, g, conv)?;
    let mut phis = Vec::with_capacity(points.len());
    for x in points {
        let det = hessian(&h, x)?.determinant();
        if det.abs() < 1e-10 {
            return Err(RateError::DegenerateCritical {
                point: x.clone(),
                det,
            });
        }
        phis.push(phi.eval(x)?);
    }
    let c = phis.iter().map(|p| p.abs()).fold(f64::INFINITY, f64::min).cbrt();
    let flag = (c == 0.0).then(|| "higher multiplicity: use higher_bound".to_string());
    Ok(Band {
        c,
        lower: c / 3.0,
        upper: 6.0 * c,
        phis,
        flag,
    })
}

/// `144^{1/3} (max_θ P_2(θ))^{1/3}`, never larger than `6 Φ(x)^{1/3}`.
pub fn sharper_constant(
    f: &FieldExpr,
    g: &FieldExpr,
    x: &[f64],
    conv: &PairingConvention,
) -> Result<f64, RateError> {
    let c = p_theta_coefficients(f, g, x, 1, conv)?;
    let (max_p, _) = max_on_circle(&TrigPoly::from_cos_sin(&c), 4096);
    Ok((144.0 * max_p.max(0.0)).cbrt())
}

#[derive(Clone, Debug, Serialize)]
pub struct HigherBound {
    pub l: usize,
    pub d_value: f64,
    pub value: f64,
    /// Set when `D^l(h)(x) > 0`, which is incompatible with a maximum.
    pub warning: Option<String>,
}

/// `−9 · (D^l(h)(x) / (2l)!)^{1/(2l+1)}` with the signed odd root.
pub fn higher_bound(
    l: usize,
    f: &FieldExpr,
    g: &FieldExpr,
    x: &[f64],
    conv: &PairingConvention,
) -> Result<HigherBound, RateError> {
    if l == 0 {
        return Err(RateError::InvalidParameter("l must be at least 1".into()));
    }
    let h = poisson(f, g, conv)?;
    if !has_multiplicity(&h, x, l, 1e-8)? {
        return Err(RateError::Multiplicity { order: 2 * l });
    }
    let d_value = d_power(l, &h, f, g, conv)?.eval(x)?;
    let value = -9.0 * odd_root(d_value / factorial(2 * l), 2 * l as u32 + 1);
    let warning = (d_value > 0.0)
        .then(|| format!("D^{l}(h)(x) = {d_value} > 0 contradicts a maximum at x"));
    Ok(HigherBound {
        l,
        d_value,
        value,
        warning,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct JetBound {
    pub value: f64,
    /// Grid points where some root argument was positive and clamped.
    pub clamped: usize,
    pub grid_points: usize,
}

/// `sup |h + 9 Σ_{l ≤ L} ε^{2l/(2l+1)} (D^l(h)/(2l)!)^{1/(2l+1)}|` on the grid
/// of `region`, where positive root arguments are clamped to zero.
pub fn truncated_jet_bound(
    big_l: usize,
    eps: f64,
    f: &FieldExpr,
    g: &FieldExpr,
    conv: &PairingConvention,
    region: &GridBox,
) -> Result<JetBound, RateError> {
    if big_l == 0 {
        return Err(RateError::InvalidParameter("L must be at least 1".into()));
    }
    let h = poisson(f, g, conv)?;
    let ds: Vec<FieldExpr> = (1..=big_l)
        .map(|l| d_power(l, &h, f, g, conv))
        .collect::<Result<_, _>>()?;
    let rows = map_range(region.len(), Exec::Auto, |k| {
        let p = region.point(k);
        let mut v = h.eval(&p)?;
        let mut clamped = false;
        for (i, d) in ds.iter().enumerate() {
            let l = i + 1;
            let arg = d.eval(&p)? / factorial(2 * l);
            if arg > 0.0 {
                clamped = true;
                continue;
            }
            let e = eps.powf(2.0 * l as f64 / (2 * l + 1) as f64);
            v += 9.0 * e * odd_root(arg, 2 * l as u32 + 1);
        }
        Ok::<_, RateError>((v.abs(), clamped))
    });
    let mut value: f64 = 0.0;
    let mut count = 0;
    for r in rows {
        let (v, c) = r?;
        value = value.max(v);
        count += c as usize;
    }
    Ok(JetBound {
        value,
        clamped: count,
        grid_points: region.len(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FirstOrderBound {
    pub lambda_f: f64,
    pub lambda3_f: f64,
    pub value: f64,
}

/// `λ(f)(x) − (9/2)^{1/3} (−λ³(f)(x))^{1/3} ε^{2/3}` for `λ = df(v)`.
pub fn first_order_bound(
    v: &VectorFieldExpr,
    f: &FieldExpr,
    x: &[f64],
    eps: f64,
) -> Result<FirstOrderBound, RateError> {
    let l1 = v.apply(f)?;
    let hess = hessian(&l1, x)?;
    let eig = SymmetricEigen::new(hess);
    if eig.eigenvalues.iter().any(|&e| e > -1e-10) {
        return Err(RateError::DegenerateMaximum(format!(
            "Hessian of λ(f) at x has eigenvalues {:?}",
            eig.eigenvalues.as_slice()
        )));
    }
    let l3 = v.apply(&v.apply(&l1)?)?;
    let lambda_f = l1.eval(x)?;
    let lambda3_f = l3.eval(x)?;
    let value = lambda_f - (4.5f64).cbrt() * (-lambda3_f).cbrt() * eps.powf(2.0 / 3.0);
    Ok(FirstOrderBound {
        lambda_f,
        lambda3_f,
        value,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct UniRow {
    pub index: usize,
    pub distance: f64,
    pub g_c1: f64,
    pub product: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct UniContinuity {
    pub rows: Vec<UniRow>,
    /// Products are non-increasing along the sequence.
    pub decreasing: bool,
    pub last: f64,
}

/// `max(‖f_n − f‖, ‖g_n − g‖) · ‖g_n‖_1` along a sequence.
pub fn unicontinuity_criterion(
    f: &FieldExpr,
    g: &FieldExpr,
    f_seq: &[FieldExpr],
    g_seq: &[FieldExpr],
    region: &GridBox,
) -> Result<UniContinuity, RateError> {
    if f_seq.len() != g_seq.len() || f_seq.is_empty() {
        return Err(RateError::InvalidParameter(
            "sequences must be non-empty and of equal length".into(),
        ));
    }
    let idx: Vec<usize> = (0..f_seq.len()).collect();
    let rows = map_slice(&idx, Exec::Sequential, |&i| {
        let df = sup_norm(&(&f_seq[i] - f), region)?.value;
        let dg = sup_norm(&(&g_seq[i] - g), region)?.value;
        let c1 = c1_seminorm(&g_seq[i], region)?.value;
        let distance = df.max(dg);
        Ok::<_, RateError>(UniRow {
            index: i,
            distance,
            g_c1: c1,
            product: distance * c1,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let decreasing = rows
        .windows(2)
        .all(|w| w[1].product <= w[0].product * (1.0 + 1e-9) + 1e-15);
    let last = rows.last().unwrap().product;
    Ok(UniContinuity {
        rows,
        decreasing,
        last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldexpr::parse_field;

    fn conv() -> PairingConvention {
        PairingConvention::standard(2).unwrap()
    }

    fn cubic() -> (FieldExpr, FieldExpr) {
        (
            parse_field("x - x^3/3 - x*y^2", 2).unwrap(),
            parse_field("y", 2).unwrap(),
        )
    }

    #[test]
    fn bands() {
        let (f, g) = cubic();
        let b = theoretical_band(&f, &g, &[vec![0.0, 0.0]], &conv()).unwrap();
        assert!((b.c - 4f64.cbrt()).abs() < 1e-12);
        assert!((b.lower - 0.529).abs() < 1e-3 && (b.upper - 9.524).abs() < 1e-3);
        let f = parse_field("x", 2).unwrap();
        let g = parse_field("y*(1 - x^2 - y^2)", 2).unwrap();
        let b = theoretical_band(&f, &g, &[vec![0.0, 0.0]], &conv()).unwrap();
        assert!((b.c - 2.0).abs() < 1e-12 && (b.upper - 12.0).abs() < 1e-12);
        // h = 1 - x^4 - y^4 has a singular Hessian at the origin
        let f = parse_field("x - x^5/5 - x*y^4", 2).unwrap();
        let g = parse_field("y", 2).unwrap();
        assert!(matches!(
            theoretical_band(&f, &g, &[vec![0.0, 0.0]], &conv()),
            Err(RateError::DegenerateCritical { .. })
        ));
    }

    #[test]
    fn sharper_constant_is_sharper() {
        let (f, g) = cubic();
        let s = sharper_constant(&f, &g, &[0.0, 0.0], &conv()).unwrap();
        assert!((s - 288f64.cbrt()).abs() < 1e-9);
        assert!(s <= 6.0 * 4f64.cbrt());
    }

    #[test]
    fn higher_bounds() {
        let (f, g) = cubic();
        let b = higher_bound(1, &f, &g, &[0.0, 0.0], &conv()).unwrap();
        assert!((b.d_value + 4.0).abs() < 1e-12);
        assert!((b.value - 9.0 * 2f64.cbrt()).abs() < 1e-12);
        assert!(b.warning.is_none());
        assert!(matches!(
            higher_bound(2, &f, &g, &[0.0, 0.0], &conv()),
            Err(RateError::Multiplicity { order: 4 })
        ));
        // h = 1 + x^2 + y^2 is a minimum: positive D, negative bound
        let f = parse_field("x + x^3/3 + x*y^2", 2).unwrap();
        let b = higher_bound(1, &f, &g, &[0.0, 0.0], &conv()).unwrap();
        assert!(b.value < 0.0 && b.warning.is_some());
    }

    #[test]
    fn jet_bounds() {
        let (f, g) = cubic();
        let region = GridBox::uniform(&[(-0.5, 0.5), (-0.5, 0.5)], 41).unwrap();
        let h = poisson(&f, &g, &conv()).unwrap();
        let norm = sup_norm(&h, &region).unwrap().value;
        let zero = truncated_jet_bound(1, 0.0, &f, &g, &conv(), &region).unwrap();
        assert!((zero.value - norm).abs() < 1e-12);
        let eps: f64 = 1e-4;
        let v = truncated_jet_bound(1, eps, &f, &g, &conv(), &region).unwrap().value;
        assert!(v <= norm && v >= norm - 9.0 * 2f64.cbrt() * eps.powf(2.0 / 3.0));
        let c = FieldExpr::constant(1.0, 2);
        assert_eq!(truncated_jet_bound(1, eps, &c, &c, &conv(), &region).unwrap().value, 0.0);
    }

    #[test]
    fn first_order() {
        let (f, _) = cubic();
        let v = VectorFieldExpr::new(vec![FieldExpr::constant(1.0, 2), FieldExpr::zero(2)]);
        let eps: f64 = 1e-4;
        let b = first_order_bound(&v, &f, &[0.0, 0.0], eps).unwrap();
        assert!((b.lambda3_f + 2.0).abs() < 1e-12);
        assert!((b.value - (1.0 - 9f64.cbrt() * eps.powf(2.0 / 3.0))).abs() < 1e-14);
        assert_eq!(first_order_bound(&v, &f, &[0.0, 0.0], 0.0).unwrap().value, 1.0);
    }

    #[test]
    fn unicontinuity_trivial_sequences() {
        let (f, g) = cubic();
        let region = GridBox::uniform(&[(-1.0, 1.0), (-1.0, 1.0)], 21).unwrap();
        let u = unicontinuity_criterion(&f, &g, &[f.clone(), f.clone()], &[g.clone(), g.clone()], &region)
            .unwrap();
        assert!(u.rows.iter().all(|r| r.product == 0.0));
        let fs: Vec<FieldExpr> = (1..=4).map(|n| &f + 1.0 / (n * n) as f64).collect();
        let gs = vec![g.clone(); 4];
        let u = unicontinuity_criterion(&f, &g, &fs, &gs, &region).unwrap();
        assert!(u.decreasing);
        assert!((u.last - 1.0 / 16.0).abs() < 1e-12);
    }
}
