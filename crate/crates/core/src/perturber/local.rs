use std::sync::Arc;

use nalgebra::SymmetricEigen;
use serde::Serialize;

use super::PerturbError;
use crate::bracketops::{
    ham_vector_field, hessian, iterated_bracket, phi_invariant, poisson, PairingConvention,
};
use crate::exec::{map_range, Exec};
use crate::fieldexpr::{
    grid_extremum, sup_norm, Extremum, FieldExpr, Func, GridBox, Monotonicity, Piece, Profile,
};

/// The data a local construction needs: a pair of fields, the strict
/// maximum point of their bracket and the neighbourhood `U`.
#[derive(Clone, Debug)]
pub struct LocalProblem {
    pub f: FieldExpr,
    pub g: FieldExpr,
    pub x: Vec<f64>,
    pub domain: GridBox,
    pub conv: PairingConvention,
}

/// The three widths of the central mechanism for given `A`, `ε`:
/// half-width `w` of the linear core, its slope `s`, plateau height `c`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CoreShape {
    pub w: f64,
    pub slope: f64,
    pub plateau: f64,
}

impl CoreShape {
    pub fn new(a: f64, eps: f64) -> Self {
        let w = (eps / a).cbrt();
        let slope = 0.5 * a.cbrt() * eps.powf(2.0 / 3.0);
        CoreShape {
            w,
            slope,
            plateau: 1.5 * slope * w,
        }
    }
}

/// Largest `ε` for which [`build_phi_profile`] succeeds.
pub fn phi_limit(a: f64, b: f64, hgap: f64) -> f64 {
    // 2w <= b/3 and 4.5 c / b <= |hgap|/2 with c = 3ε/4
    (a * (b / 6.0).powi(3)).min(4.0 * b * hgap.abs() / 27.0)
}

/// The odd profile `φ`: linear with slope `½A^{1/3}ε^{2/3}` on `[−w, w]`,
/// smoothly flattened to a plateau `±3ε/4`, then returned to zero over
/// `b/3 ≤ |t| ≤ 2b/3`.
pub fn build_phi_profile(a: f64, eps: f64, b: f64, hgap: f64) -> Result<Profile, PerturbError> {
    if !(a > 0.0) || !(eps > 0.0) || !(b > 0.0) {
        return Err(PerturbError::InvalidParameter(format!(
            "A = {a}, ε = {eps}, b = {b} must all be positive"
        )));
    }
    if !(hgap < 0.0) {
        return Err(PerturbError::InvalidParameter(format!(
            "hgap = {hgap} must be negative"
        )));
    }
    let CoreShape { w, slope, plateau } = CoreShape::new(a, eps);
    let decay_slope = 4.5 * plateau / b;
    if 2.0 * w > b / 3.0 || decay_slope > 0.5 * hgap.abs() {
        return Err(PerturbError::Infeasible {
            eps,
            limit: phi_limit(a, b, hgap),
        });
    }
    let half = 0.5 * eps;
    let mut pieces = vec![
        Piece::constant(-b, -2.0 * b / 3.0, 0.0),
        Piece::cubic_step(-2.0 * b / 3.0, -b / 3.0, 0.0, -plateau),
    ];
    if 2.0 * w < b / 3.0 {
        pieces.push(Piece::constant(-b / 3.0, -2.0 * w, -plateau));
    }
    pieces.push(Piece::slope_in(-2.0 * w, -w, -plateau, slope));
    pieces.push(Piece::linear(-w, w, -half, half));
    pieces.push(Piece::slope_out(w, 2.0 * w, half, slope));
    if 2.0 * w < b / 3.0 {
        pieces.push(Piece::constant(2.0 * w, b / 3.0, plateau));
    }
    pieces.push(Piece::cubic_step(b / 3.0, 2.0 * b / 3.0, plateau, 0.0));
    pieces.push(Piece::constant(2.0 * b / 3.0, b, 0.0));
    let phi = Profile::new("phi", pieces, eps, Monotonicity::None);
    check_phi(&phi, eps, b, hgap, w)?;
    Ok(phi)
}

fn check_phi(phi: &Profile, eps: f64, b: f64, hgap: f64, w: f64) -> Result<(), PerturbError> {
    const SAMPLES: usize = 10_000;
    if !phi.is_c1() {
        return Err(PerturbError::Verification(format!(
            "φ is not C¹ (mismatch {:e})",
            phi.c1_mismatch()
        )));
    }
    let tol = 1e-12 * eps;
    for i in 0..=SAMPLES {
        let t = -1.2 * b + 2.4 * b * i as f64 / SAMPLES as f64;
        let v = phi.eval(t);
        let d = phi.eval_derivative(t, 1);
        if v.abs() > eps + tol {
            return Err(PerturbError::Verification(format!("|φ({t})| > ε")));
        }
        if t.abs() <= b / 3.0 && d < -tol {
            return Err(PerturbError::Verification(format!("φ'({t}) < 0")));
        }
        if t.abs() <= 2.0 * b / 3.0 && d < 0.5 * hgap - tol {
            return Err(PerturbError::Verification(format!("φ'({t}) < hgap/2")));
        }
        if t.abs() >= 2.0 * b / 3.0 && v != 0.0 {
            return Err(PerturbError::Verification(format!("φ({t}) ≠ 0")));
        }
    }
    // the linear core is exact
    let s = 0.5 * eps / w;
    for t in [-w, -0.5 * w, 0.0, 0.3 * w, w] {
        if (phi.eval_derivative(t, 1) - s).abs() > 1e-9 * s {
            return Err(PerturbError::Verification(format!("φ'({t}) ≠ slope")));
        }
    }
    Ok(())
}

/// Affine coordinates `(x_1, r)` around `x` in which a constant vector field
/// `v` is `∂/∂x_1` and `∂²h/∂x_1∂r_j(x) = 0`.
#[derive(Clone, Debug, Serialize)]
pub struct FlowBoxChart {
    origin: Vec<f64>,
    v: Vec<f64>,
    pivot: usize,
    /// Shear coefficients `a_j` (zero at the pivot).
    shear: Vec<f64>,
}

impl FlowBoxChart {
    /// `hess` is the Hessian of `h` at `origin`.
    pub fn new(origin: &[f64], v: &[f64], hess: &nalgebra::DMatrix<f64>) -> Result<Self, PerturbError> {
        let d = v.len();
        let pivot = (0..d)
            .max_by(|&i, &j| v[i].abs().total_cmp(&v[j].abs()))
            .unwrap();
        if v[pivot].abs() < 1e-12 {
            return Err(PerturbError::ChartAssumption("X_g vanishes".into()));
        }
        let vv = nalgebra::DVector::from_column_slice(v);
        let hv = hess * &vv;
        let vhv = vv.dot(&hv);
        if vhv.abs() < 1e-12 {
            return Err(PerturbError::DegenerateMaximum(
                "h has zero second derivative along X_g".into(),
            ));
        }
        let mut shear = vec![0.0; d];
        for j in 0..d {
            if j != pivot {
                shear[j] = hv[j] / vhv;
            }
        }
        Ok(FlowBoxChart {
            origin: origin.to_vec(),
            v: v.to_vec(),
            pivot,
            shear,
        })
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    /// Chart coordinates `(x_1, r_j for j ≠ pivot)` of a point; the result
    /// has `x_1` first and the `r_j` in increasing `j`.
    pub fn to_chart(&self, z: &[f64]) -> Vec<f64> {
        let k = self.pivot;
        let xi = (z[k] - self.origin[k]) / self.v[k];
        let mut out = vec![0.0];
        let mut x1 = xi;
        for j in 0..self.dim() {
            if j == k {
                continue;
            }
            let r = z[j] - self.origin[j] - self.v[j] * xi;
            x1 += self.shear[j] * r;
            out.push(r);
        }
        out[0] = x1;
        out
    }

    pub fn from_chart(&self, c: &[f64]) -> Vec<f64> {
        let k = self.pivot;
        let mut xi = c[0];
        let mut idx = 1;
        let mut r = vec![0.0; self.dim()];
        for j in 0..self.dim() {
            if j == k {
                continue;
            }
            r[j] = c[idx];
            xi -= self.shear[j] * c[idx];
            idx += 1;
        }
        (0..self.dim())
            .map(|j| self.origin[j] + self.v[j] * xi + r[j])
            .collect()
    }

    /// `x_1` as a field on the original chart.
    pub fn x1_field(&self) -> FieldExpr {
        let d = self.dim();
        let k = self.pivot;
        let xi = (FieldExpr::var(k, d) - self.origin[k]) / self.v[k];
        let mut acc = xi.clone();
        for j in 0..d {
            if j != k && self.shear[j] != 0.0 {
                acc = acc + self.r_field_raw(j, &xi) * self.shear[j];
            }
        }
        acc
    }

    /// The transverse coordinates `r_j` as fields, in increasing `j`.
    pub fn r_fields(&self) -> Vec<FieldExpr> {
        let d = self.dim();
        let k = self.pivot;
        let xi = (FieldExpr::var(k, d) - self.origin[k]) / self.v[k];
        (0..d)
            .filter(|&j| j != k)
            .map(|j| self.r_field_raw(j, &xi))
            .collect()
    }

    fn r_field_raw(&self, j: usize, xi: &FieldExpr) -> FieldExpr {
        let d = self.dim();
        let base = FieldExpr::var(j, d) - self.origin[j];
        if self.v[j] == 0.0 {
            base
        } else {
            base - xi * self.v[j]
        }
    }

    /// Largest `b` with the chart cube `[−b, b]^d` inside `region`.
    pub fn max_cube(&self, region: &GridBox) -> f64 {
        let d = self.dim();
        let mut row_sums = vec![0.0; d];
        for c in 0..d {
            let mut e = vec![0.0; d];
            e[c] = 1.0;
            let z = self.from_chart(&e);
            for i in 0..d {
                row_sums[i] += (z[i] - self.origin[i]).abs();
            }
        }
        (0..d)
            .map(|i| {
                let room = (self.origin[i] - region.lo()[i]).min(region.hi()[i] - self.origin[i]);
                if row_sums[i] == 0.0 {
                    f64::INFINITY
                } else {
                    room / row_sums[i]
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn chart_max_abs(&self, z: &[f64]) -> (f64, f64) {
        let c = self.to_chart(z);
        let rest = c[1..].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        (c[0].abs(), rest)
    }
}

#[derive(Clone, Debug)]
pub struct LocalOptions {
    /// Grid points per axis for the verification sweeps over `U`.
    pub resolution: usize,
    /// Grid points per axis for the `K ∖ K'` and shell sweeps.
    pub cube_resolution: usize,
    /// Force the cube half-width instead of searching for it.
    pub b: Option<f64>,
    /// Compute `ε_0` by bisection.
    pub find_eps0: bool,
    pub exec: Exec,
}

impl Default for LocalOptions {
    fn default() -> Self {
        LocalOptions {
            resolution: 201,
            cube_resolution: 61,
            b: None,
            find_eps0: true,
            exec: Exec::Auto,
        }
    }
}

/// The constructed pair and everything needed to audit it.
#[derive(Clone, Debug)]
pub struct LocalPerturbation {
    pub f: FieldExpr,
    pub g: FieldExpr,
    pub big_f: FieldExpr,
    pub big_g: FieldExpr,
    pub conv: PairingConvention,
    pub eps: f64,
    /// `−{{h,g},g}(x)` after orientation.
    pub a: f64,
    pub phi_value: f64,
    pub b: f64,
    pub hgap: f64,
    /// `h(x) − sup_{U∖K} h` (infinite when the grid has no such point).
    pub outer_gap: f64,
    /// The construction was applied to `(−g, f)`.
    pub swapped: bool,
    pub phi: Option<Arc<Profile>>,
    pub psi: FieldExpr,
    pub chart: Option<FlowBoxChart>,
    pub h_max: f64,
    pub gap: f64,
    pub gap_argmax: Vec<f64>,
    pub perturbation_norm: f64,
    pub eps0: Option<f64>,
    pub resolution: usize,
    pub refined_spacing: Vec<f64>,
    pub binding_decay: bool,
}

/// Serializable summary of a [`LocalPerturbation`].
#[derive(Clone, Debug, Serialize)]
pub struct LocalReport {
    pub eps: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "Phi")]
    pub phi_value: f64,
    pub b: f64,
    pub hgap: f64,
    pub eps0: Option<f64>,
    pub gap: f64,
    pub gap_over_eps23: f64,
    pub proof_drop: f64,
    pub perturbation_norm: f64,
    pub swapped: bool,
    pub binding_decay: bool,
    pub grid_points_per_axis: usize,
    pub refined_spacing: Vec<f64>,
}

impl LocalPerturbation {
    pub fn report(&self) -> LocalReport {
        LocalReport {
            eps: self.eps,
            a: self.a,
            phi_value: self.phi_value,
            b: self.b,
            hgap: self.hgap,
            eps0: self.eps0,
            gap: self.gap,
            gap_over_eps23: if self.eps > 0.0 {
                self.gap / self.eps.powf(2.0 / 3.0)
            } else {
                0.0
            },
            proof_drop: self.proof_drop(),
            perturbation_norm: self.perturbation_norm,
            swapped: self.swapped,
            binding_decay: self.binding_decay,
            grid_points_per_axis: self.resolution,
            refined_spacing: self.refined_spacing.clone(),
        }
    }

    /// `½ A^{1/3} ε^{2/3}`, the drop guaranteed by the construction.
    pub fn proof_drop(&self) -> f64 {
        0.5 * self.a.cbrt() * self.eps.powf(2.0 / 3.0)
    }

    /// `⅓ Φ(x)^{1/3} ε^{2/3}`.
    pub fn theorem_drop(&self) -> f64 {
        self.phi_value.cbrt() / 3.0 * self.eps.powf(2.0 / 3.0)
    }

    /// `h − φ'(x_1) ψ(r)` in the orientation the construction used, expressed
    /// on the original chart.
    pub fn predicted_bracket(&self) -> Result<FieldExpr, PerturbError> {
        let h = poisson(&self.f, &self.g, &self.conv)?;
        match (&self.phi, &self.chart) {
            (Some(phi), Some(chart)) => {
                let dphi = chart.x1_field().call(Func::Profile(phi.clone(), 1));
                Ok(h - dphi * &self.psi)
            }
            _ => Ok(h),
        }
    }

    /// The perturbation in the orientation of the construction.
    pub fn difference(&self) -> FieldExpr {
        if self.swapped {
            &self.big_g - &self.g
        } else {
            &self.big_f - &self.f
        }
    }

    /// Max `|F − f| + |G − g|` on a shell just outside the support cube.
    pub fn shell_defect(&self, points_per_axis: usize) -> Result<f64, PerturbError> {
        let Some(chart) = &self.chart else {
            return Ok(0.0);
        };
        let diff = &self.big_f - &self.f + (&self.big_g - &self.g);
        let d = chart.dim();
        let inner = self.b;
        let outer = 1.1 * self.b;
        let outer_box = GridBox::uniform(&vec![(-outer, outer); d], points_per_axis)?;
        let vals = map_range(outer_box.len(), Exec::Auto, |k| {
            let c = outer_box.point(k);
            if c.iter().all(|v| v.abs() <= inner) {
                return Ok(0.0);
            }
            diff.eval(&chart.from_chart(&c)).map(f64::abs)
        });
        let mut worst: f64 = 0.0;
        for v in vals {
            worst = worst.max(v?);
        }
        Ok(worst)
    }
}

/// The rate-saturating local perturbation for `problem` at size `eps`.
pub fn local_perturbation(
    problem: &LocalProblem,
    eps: f64,
    opts: &LocalOptions,
) -> Result<LocalPerturbation, PerturbError> {
    let setup = Setup::new(problem, opts)?;
    let eps0 = if opts.find_eps0 {
        Some(setup.find_eps0(problem, opts)?)
    } else {
        None
    };
    let mut out = setup.build(problem, eps, opts)?;
    out.eps0 = eps0;
    Ok(out)
}

/// Everything that does not depend on `ε`.
struct Setup {
    f: FieldExpr,
    swapped: bool,
    a: f64,
    phi_value: f64,
    h_max: f64,
    chart: FlowBoxChart,
    b: f64,
    hgap: f64,
    outer_gap: f64,
    psi: FieldExpr,
}

impl Setup {
    fn new(problem: &LocalProblem, opts: &LocalOptions) -> Result<Self, PerturbError> {
        let conv = &problem.conv;
        let x = &problem.x;
        let h = poisson(&problem.f, &problem.g, conv)?;
        let h_max = h.eval(x)?;
        let hess = hessian(&h, x)?;
        let eig = SymmetricEigen::new(hess.clone());
        if eig.eigenvalues.iter().any(|&l| l > -1e-10) {
            return Err(PerturbError::DegenerateMaximum(format!(
                "Hessian of h at x has eigenvalues {:?}",
                eig.eigenvalues.as_slice()
            )));
        }
        let grad_norm: f64 = h
            .gradient()
            .iter()
            .map(|d| d.eval(x).map(|v| v * v))
            .sum::<Result<f64, _>>()?
            .sqrt();
        if grad_norm > 1e-8 {
            return Err(PerturbError::DegenerateMaximum(format!(
                "x is not a critical point of h (|dh| = {grad_norm:e})"
            )));
        }
        let phi_value = phi_invariant(&problem.f, &problem.g, conv)?.eval(x)?;
        let hff = iterated_bracket(&h, &[problem.f.clone(), problem.f.clone()], conv)?.eval(x)?;
        let hgg = iterated_bracket(&h, &[problem.g.clone(), problem.g.clone()], conv)?.eval(x)?;
        let swapped = hff < hgg;
        let (f, g) = if swapped {
            (-&problem.g, problem.f.clone())
        } else {
            (problem.f.clone(), problem.g.clone())
        };
        let a = -hgg.min(hff);
        let xg = ham_vector_field(&g, conv)?;
        if xg.components().iter().any(|c| c.as_constant().is_none()) {
            return Err(PerturbError::ChartAssumption(
                "X_g is not constant on the chart; a flow-box chart must be supplied".into(),
            ));
        }
        let v = xg.eval(x)?;
        let chart = FlowBoxChart::new(x, &v, &hess)?;
        // cross-check A against the chart
        let vv = nalgebra::DVector::from_column_slice(&v);
        let a_chart = -vv.dot(&(&hess * &vv));
        if (a_chart - a).abs() > 1e-8 * (1.0 + a.abs()) {
            return Err(PerturbError::ChartAssumption(format!(
                "−h_x1x1 = {a_chart} but −{{{{h,g}},g}} = {a}"
            )));
        }
        let mut b = match opts.b {
            Some(b) => b,
            None => chart.max_cube(&problem.domain),
        };
        if !(b > 0.0) || !b.is_finite() {
            return Err(PerturbError::ChartAssumption(format!("no room for a cube (b = {b})")));
        }
        let hgap = loop {
            let gap = cube_gap(&h, h_max, &chart, b, opts.cube_resolution, opts.exec)?;
            if gap < 0.0 || opts.b.is_some() {
                break gap;
            }
            b *= 0.9;
            if b < 1e-6 {
                return Err(PerturbError::DegenerateMaximum(
                    "h(x) is not a strict maximum on any cube".into(),
                ));
            }
        };
        if !(hgap < 0.0) {
            return Err(PerturbError::DegenerateMaximum(format!(
                "max over K∖K' of h − h(x) is {hgap} for b = {b}"
            )));
        }
        let outer_gap = outside_gap(&h, h_max, &chart, b, &problem.domain, opts)?;
        let psi = chart
            .r_fields()
            .iter()
            .map(|r| (r / b).plateau(1.0 / 3.0, 2.0 / 3.0))
            .fold(FieldExpr::constant(1.0, problem.f.dim()), |acc, p| acc * p);
        Ok(Setup {
            f,
            swapped,
            a,
            phi_value,
            h_max,
            chart,
            b,
            hgap,
            outer_gap,
            psi,
        })
    }

    /// The closed-form conditions of the construction.
    fn feasible(&self, eps: f64) -> bool {
        let shape = CoreShape::new(self.a, eps);
        eps <= phi_limit(self.a, self.b, self.hgap)
            && shape.slope <= 0.5 * self.hgap.abs()
            && shape.slope <= self.outer_gap
    }

    fn build(
        &self,
        problem: &LocalProblem,
        eps: f64,
        opts: &LocalOptions,
    ) -> Result<LocalPerturbation, PerturbError> {
        let conv = &problem.conv;
        if eps < 0.0 {
            return Err(PerturbError::InvalidParameter(format!("ε = {eps} < 0")));
        }
        let mut out = LocalPerturbation {
            f: problem.f.clone(),
            g: problem.g.clone(),
            big_f: problem.f.clone(),
            big_g: problem.g.clone(),
            conv: problem.conv.clone(),
            eps,
            a: self.a,
            phi_value: self.phi_value,
            b: self.b,
            hgap: self.hgap,
            outer_gap: self.outer_gap,
            swapped: self.swapped,
            phi: None,
            psi: self.psi.clone(),
            chart: Some(self.chart.clone()),
            h_max: self.h_max,
            gap: 0.0,
            gap_argmax: problem.x.clone(),
            perturbation_norm: 0.0,
            eps0: None,
            resolution: opts.resolution,
            refined_spacing: Vec::new(),
            binding_decay: false,
        };
        if eps == 0.0 {
            return Ok(out);
        }
        let shape = CoreShape::new(self.a, eps);
        if shape.slope > 0.5 * self.hgap.abs() || shape.slope > self.outer_gap {
            return Err(PerturbError::Infeasible {
                eps,
                limit: phi_limit(self.a, self.b, self.hgap),
            });
        }
        let phi = Arc::new(build_phi_profile(self.a, eps, self.b, self.hgap)?);
        let bump = self.chart.x1_field().profile(&phi) * &self.psi;
        let big_f = &self.f - &bump;
        if self.swapped {
            // (F', G') = (−g − φψ, f)  ⇔  F = f, G = g + φψ
            out.big_g = &problem.g + &bump;
        } else {
            out.big_f = big_f;
        }
        out.binding_decay = 4.5 * shape.plateau / self.b > 0.25 * self.hgap.abs();
        out.phi = Some(phi);

        let bracket = poisson(&out.big_f, &out.big_g, conv)?;
        let sup = grid_extremum(
            |p| bracket.eval(p),
            &problem.domain.with_resolution(opts.resolution),
            Extremum::Max,
            opts.exec,
        )?;
        out.gap = self.h_max - sup.value;
        out.gap_argmax = sup.argmax;
        out.refined_spacing = sup.refined_spacing;
        out.perturbation_norm = sup_norm(&bump, &problem.domain.with_resolution(opts.resolution))?.value;
        Ok(out)
    }

    /// Bisection in `log ε` on feasibility plus a coarse-grid check of the
    /// guaranteed drop.
    fn find_eps0(&self, problem: &LocalProblem, opts: &LocalOptions) -> Result<f64, PerturbError> {
        let coarse = LocalOptions {
            resolution: 41,
            ..opts.clone()
        };
        let ok = |eps: f64| -> bool {
            if !self.feasible(eps) {
                return false;
            }
            match self.build(problem, eps, &coarse) {
                // `gap` is a difference of two numbers near h(x), so allow
                // for cancellation at tiny ε.
                Ok(p) => {
                    let slack = 64.0 * f64::EPSILON * (1.0 + p.h_max.abs());
                    p.gap >= p.proof_drop() * (1.0 - 1e-9) - slack
                }
                Err(_) => false,
            }
        };
        let (mut lo, mut hi) = (1e-12f64, 1.0f64);
        if !ok(lo) {
            return Err(PerturbError::Infeasible { eps: lo, limit: 0.0 });
        }
        if ok(hi) {
            return Ok(hi);
        }
        for _ in 0..40 {
            let mid = (lo.ln() + hi.ln()).mul_add(0.5, 0.0).exp();
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo < 1.01 {
                break;
            }
        }
        Ok(lo)
    }
}

/// `max_{K∖K'} h − h(x)` sampled on two chart slabs `b/3 ≤ |x_1| ≤ b`.
fn cube_gap(
    h: &FieldExpr,
    h_max: f64,
    chart: &FlowBoxChart,
    b: f64,
    res: usize,
    exec: Exec,
) -> Result<f64, PerturbError> {
    let d = chart.dim();
    let mut best = f64::NEG_INFINITY;
    for sign in [-1.0, 1.0] {
        let mut bounds = vec![(-b, b); d];
        bounds[0] = if sign > 0.0 { (b / 3.0, b) } else { (-b, -b / 3.0) };
        let slab = GridBox::uniform(&bounds, res)?;
        let r = grid_extremum(
            |c| h.eval(&chart.from_chart(c)),
            &slab,
            Extremum::Max,
            exec,
        )?;
        best = best.max(r.value);
    }
    Ok(best - h_max)
}

/// `h(x) − sup_{U∖K} h` on the grid of `U`.
fn outside_gap(
    h: &FieldExpr,
    h_max: f64,
    chart: &FlowBoxChart,
    b: f64,
    domain: &GridBox,
    opts: &LocalOptions,
) -> Result<f64, PerturbError> {
    let grid = domain.with_resolution(opts.resolution);
    let vals = map_range(grid.len(), opts.exec, |k| {
        let z = grid.point(k);
        let (a, r) = chart.chart_max_abs(&z);
        if a <= b && r <= b {
            return Ok(f64::NEG_INFINITY);
        }
        h.eval(&z)
    });
    let mut best = f64::NEG_INFINITY;
    for v in vals {
        best = best.max(v?);
    }
    Ok(h_max - best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldexpr::parse_field;

    fn cubic_problem() -> LocalProblem {
        LocalProblem {
            f: parse_field("x - x^3/3 - x*y^2", 2).unwrap(),
            g: parse_field("y", 2).unwrap(),
            x: vec![0.0, 0.0],
            domain: GridBox::uniform(&[(-1.0, 1.0), (-1.0, 1.0)], 201).unwrap(),
            conv: PairingConvention::standard(2).unwrap(),
        }
    }

    fn identity_defect(lp: &LocalPerturbation, dom: &GridBox) -> f64 {
        let actual = poisson(&lp.big_f, &lp.big_g, &lp.conv).unwrap();
        let diff = actual - lp.predicted_bracket().unwrap();
        sup_norm(&diff, &dom.with_resolution(61)).unwrap().value
    }

    #[test]
    fn phi_profile_example() {
        let phi = build_phi_profile(2.0, 1e-3, 0.6, -0.04).unwrap();
        let s = 0.5 * 2f64.cbrt() * 1e-2;
        assert!((phi.eval_derivative(0.0, 1) - s).abs() < 1e-15);
        let w = (1e-3f64 / 2.0).cbrt();
        assert!((phi.eval(w) - 0.5e-3).abs() < 1e-15);
        assert!(phi.sampled_max_abs(10_000) <= 1e-3);
    }

    #[test]
    fn phi_profile_limits() {
        let small = build_phi_profile(2.0, 1e-9, 0.6, -0.04).unwrap();
        assert!(small.sampled_max_abs(1000) <= 1e-9);
        match build_phi_profile(2.0, 1e-3, 0.3, -0.04) {
            Err(PerturbError::Infeasible { limit, .. }) => {
                assert!((limit - phi_limit(2.0, 0.3, -0.04)).abs() < 1e-18);
                assert!(build_phi_profile(2.0, 0.99 * limit, 0.3, -0.04).is_ok());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn chart_round_trip_and_alignment() {
        let hess = nalgebra::DMatrix::from_row_slice(2, 2, &[-2.0, 0.6, 0.6, -1.0]);
        let chart = FlowBoxChart::new(&[0.1, -0.2], &[0.8, -0.3], &hess).unwrap();
        let z = [0.4, 0.25];
        let back = chart.from_chart(&chart.to_chart(&z));
        assert!((back[0] - z[0]).abs() < 1e-14 && (back[1] - z[1]).abs() < 1e-14);
        let c = chart.to_chart(&z);
        assert!((chart.x1_field().eval(&z).unwrap() - c[0]).abs() < 1e-14);
        assert!((chart.r_fields()[0].eval(&z).unwrap() - c[1]).abs() < 1e-14);
        // moving along v only changes x_1
        let z2 = [z[0] + 0.8 * 0.1, z[1] - 0.3 * 0.1];
        let c2 = chart.to_chart(&z2);
        assert!((c2[0] - c[0] - 0.1).abs() < 1e-14 && (c2[1] - c[1]).abs() < 1e-14);
    }

    #[test]
    fn cubic_construction() {
        let p = cubic_problem();
        let opts = LocalOptions {
            resolution: 101,
            find_eps0: false,
            ..LocalOptions::default()
        };
        let eps = 1e-4;
        let lp = local_perturbation(&p, eps, &opts).unwrap();
        assert!(!lp.swapped);
        assert!((lp.a - 2.0).abs() < 1e-12 && (lp.phi_value - 4.0).abs() < 1e-12);
        assert!(lp.gap >= lp.theorem_drop());
        assert!(lp.gap >= lp.proof_drop() * (1.0 - 1e-9));
        assert!(lp.perturbation_norm <= eps);
        assert!(lp.shell_defect(41).unwrap() <= 1e-12);
        assert!(identity_defect(&lp, &p.domain) <= 1e-10);
        let zero = local_perturbation(&p, 0.0, &opts).unwrap();
        assert_eq!(zero.gap, 0.0);
        assert_eq!(zero.big_f, zero.f);
    }

    #[test]
    fn eps0_matches_closed_form() {
        let p = cubic_problem();
        let opts = LocalOptions {
            resolution: 81,
            ..LocalOptions::default()
        };
        let lp = local_perturbation(&p, 1e-4, &opts).unwrap();
        let eps0 = lp.eps0.unwrap();
        let limit = phi_limit(lp.a, lp.b, lp.hgap);
        assert!(eps0 <= limit * 1.0001 && eps0 >= 0.98 * limit.min(1.0), "{eps0} vs {limit}");
    }

    #[test]
    fn quadratic_model_swaps() {
        let p = LocalProblem {
            f: parse_field("x", 2).unwrap(),
            g: parse_field("y*(1 - x^2 - y^2)", 2).unwrap(),
            x: vec![0.0, 0.0],
            domain: GridBox::uniform(&[(-0.5, 0.5), (-0.5, 0.5)], 101).unwrap(),
            conv: PairingConvention::standard(2).unwrap(),
        };
        let opts = LocalOptions {
            resolution: 101,
            find_eps0: false,
            ..LocalOptions::default()
        };
        let lp = local_perturbation(&p, 1e-5, &opts).unwrap();
        assert!(lp.swapped);
        assert!((lp.a - 6.0).abs() < 1e-12 && (lp.phi_value - 8.0).abs() < 1e-12);
        assert_eq!(lp.big_f, lp.f);
        assert!(lp.gap >= lp.theorem_drop());
        assert!(identity_defect(&lp, &p.domain) <= 1e-10);
    }

    #[test]
    fn nonconstant_hamiltonian_field_rejected() {
        let mut p = cubic_problem();
        p.g = parse_field("y + x^2", 2).unwrap();
        p.f = parse_field("x - x^3/3", 2).unwrap();
        let err = local_perturbation(&p, 1e-4, &LocalOptions::default());
        assert!(err.is_err());
    }
}
