use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::FlowError;
use crate::bracketops::{ham_vector_field, PairingConvention, VectorFieldExpr};
use crate::exec::{map_slice, Exec};
use crate::fieldexpr::{ExprError, FieldExpr, GridBox};

/// One-step scheme. Both are symplectic and time-symmetric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Method {
    /// Implicit midpoint, order 2.
    Midpoint,
    /// Triple-jump composition of implicit midpoint steps, order 4.
    Composition4,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowOptions {
    pub step: f64,
    pub method: Method,
    /// Residual target of the implicit solve.
    pub tol: f64,
    pub max_iter: usize,
    /// State norm above which a trajectory is declared diverged.
    pub divergence: f64,
    /// Record every state (otherwise only the endpoints).
    pub record: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            step: 1e-3,
            method: Method::Midpoint,
            tol: 1e-12,
            max_iter: 50,
            divergence: 1e6,
            record: true,
        }
    }
}

impl FlowOptions {
    pub fn with_step(step: f64) -> Self {
        FlowOptions {
            step,
            ..Self::default()
        }
    }

    pub fn method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn endpoints_only(mut self) -> Self {
        self.record = false;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", content = "t_star", rename_all = "snake_case")]
pub enum Status {
    Completed,
    /// Left the box (or the domain of `H`); `t*` is the last valid time.
    LeftDomain(f64),
    Diverged(f64),
}

impl Status {
    pub fn is_completed(&self) -> bool {
        matches!(self, Status::Completed)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub energies: Vec<f64>,
    pub status: Status,
}

impl Trajectory {
    pub fn endpoint(&self) -> &[f64] {
        self.states.last().expect("trajectory has a start point")
    }

    pub fn start(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn energy_drift(&self) -> f64 {
        let h0 = self.energies[0];
        self.energies
            .iter()
            .map(|h| (h - h0).abs())
            .fold(0.0, f64::max)
    }

    /// CSV with columns `t, x1..x2n, H`.
    pub fn write_csv<W: Write>(&self, out: W, names: &[String]) -> Result<(), FlowError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend(names.iter().cloned());
        header.push("H".into());
        w.write_record(&header)?;
        for ((t, x), h) in self.times.iter().zip(&self.states).zip(&self.energies) {
            let mut row = vec![format!("{t:.12e}")];
            row.extend(x.iter().map(|v| format!("{v:.12e}")));
            row.push(format!("{h:.12e}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A Hamiltonian together with its vector field and the Jacobian of that
/// field, prepared once and reused for many trajectories.
pub struct Flow {
    h: FieldExpr,
    field: VectorFieldExpr,
    jacobian: Vec<Vec<FieldExpr>>,
    dim: usize,
}

impl Flow {
    pub fn new(h: &FieldExpr, conv: &PairingConvention) -> Result<Self, FlowError> {
        let field = ham_vector_field(h, conv)?;
        let dim = conv.dim();
        let mut jacobian = Vec::with_capacity(dim);
        for c in field.components() {
            let row = (0..dim)
                .map(|j| {
                    if c.as_constant().is_some() {
                        Ok(FieldExpr::zero(dim))
                    } else {
                        c.diff(j)
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            jacobian.push(row);
        }
        Ok(Flow {
            h: h.clone(),
            field,
            jacobian,
            dim,
        })
    }

    pub fn hamiltonian(&self) -> &FieldExpr {
        &self.h
    }

    pub fn field(&self) -> &VectorFieldExpr {
        &self.field
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Integrate from `x0` for signed time `t_end`.
    pub fn integrate(
        &self,
        x0: &[f64],
        t_end: f64,
        region: &GridBox,
        opts: &FlowOptions,
    ) -> Result<Trajectory, FlowError> {
        if !(opts.step > 0.0) {
            return Err(FlowError::InvalidStep(opts.step));
        }
        if x0.len() != self.dim {
            return Err(FlowError::Dimension {
                expected: self.dim,
                got: x0.len(),
            });
        }
        if !region.contains(x0) {
            return Err(FlowError::StartOutsideBox);
        }
        let h0 = self.h.eval(x0)?;
        let steps = (t_end.abs() / opts.step).ceil().max(if t_end == 0.0 { 0.0 } else { 1.0 })
            as usize;
        let dt = if steps == 0 { 0.0 } else { t_end / steps as f64 };
        let mut traj = Trajectory {
            times: vec![0.0],
            states: vec![x0.to_vec()],
            energies: vec![h0],
            status: Status::Completed,
        };
        let mut x = x0.to_vec();
        for k in 1..=steps {
            let t_prev = (k - 1) as f64 * dt;
            let next = match self.step(&x, dt, opts) {
                Ok(y) => y,
                Err(StepError::Domain) => {
                    traj.status = Status::LeftDomain(t_prev);
                    break;
                }
                Err(StepError::NonConvergent(r)) => {
                    return Err(FlowError::NonConvergent {
                        t: t_prev,
                        residual: r,
                    })
                }
            };
            let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || norm > opts.divergence {
                traj.status = Status::Diverged(t_prev);
                break;
            }
            if !region.contains(&next) {
                traj.status = Status::LeftDomain(t_prev);
                break;
            }
            let energy = match self.h.eval(&next) {
                Ok(e) => e,
                Err(_) => {
                    traj.status = Status::LeftDomain(t_prev);
                    break;
                }
            };
            x = next;
            let t = if k == steps { t_end } else { k as f64 * dt };
            if opts.record || k == steps {
                traj.times.push(t);
                traj.states.push(x.clone());
                traj.energies.push(energy);
            }
        }
        if !opts.record && !traj.status.is_completed() {
            // keep the last valid state as the endpoint
            if traj.states.last().map(|s| s.as_slice()) != Some(x.as_slice()) {
                let t = match traj.status {
                    Status::LeftDomain(t) | Status::Diverged(t) => t,
                    Status::Completed => t_end,
                };
                traj.times.push(t);
                traj.energies.push(self.h.eval(&x)?);
                traj.states.push(x);
            }
        }
        Ok(traj)
    }

    /// The time-`t` map restricted to a single point; `None` unless the
    /// trajectory completes.
    pub fn map_point(
        &self,
        x0: &[f64],
        t: f64,
        region: &GridBox,
        opts: &FlowOptions,
    ) -> Result<(Vec<f64>, Status), FlowError> {
        let opts = FlowOptions {
            record: false,
            ..opts.clone()
        };
        let traj = self.integrate(x0, t, region, &opts)?;
        Ok((traj.endpoint().to_vec(), traj.status))
    }

    fn step(&self, x: &[f64], dt: f64, opts: &FlowOptions) -> Result<Vec<f64>, StepError> {
        match opts.method {
            Method::Midpoint => self.midpoint(x, dt, opts),
            Method::Composition4 => {
                let c = 2f64.powf(1.0 / 3.0);
                let w1 = 1.0 / (2.0 - c);
                let w0 = -c / (2.0 - c);
                let a = self.midpoint(x, w1 * dt, opts)?;
                let b = self.midpoint(&a, w0 * dt, opts)?;
                self.midpoint(&b, w1 * dt, opts)
            }
        }
    }

    /// Solve `y = x + dt X((x + y)/2)` by fixed-point iteration, falling back
    /// to Newton's method when the iteration stalls.
    fn midpoint(&self, x: &[f64], dt: f64, opts: &FlowOptions) -> Result<Vec<f64>, StepError> {
        let d = self.dim;
        let mut v = vec![0.0; d];
        let mut mid = x.to_vec();
        self.field.eval_into(&mid, &mut v).map_err(|_| StepError::Domain)?;
        let mut y: Vec<f64> = (0..d).map(|i| x[i] + dt * v[i]).collect();
        let mut residual = f64::INFINITY;
        for _ in 0..opts.max_iter {
            for i in 0..d {
                mid[i] = 0.5 * (x[i] + y[i]);
            }
            self.field.eval_into(&mid, &mut v).map_err(|_| StepError::Domain)?;
            let mut diff: f64 = 0.0;
            let mut scale: f64 = 1.0;
            for i in 0..d {
                let yi = x[i] + dt * v[i];
                diff = diff.max((yi - y[i]).abs());
                scale = scale.max(yi.abs());
                y[i] = yi;
            }
            if !diff.is_finite() {
                return Err(StepError::Domain);
            }
            let prev = residual;
            residual = diff / scale;
            if residual <= opts.tol {
                return Ok(y);
            }
            if residual > 0.9 * prev && residual > 1e3 * opts.tol {
                break;
            }
        }
        self.newton(x, y, dt, opts)
    }

    fn newton(
        &self,
        x: &[f64],
        mut y: Vec<f64>,
        dt: f64,
        opts: &FlowOptions,
    ) -> Result<Vec<f64>, StepError> {
        let d = self.dim;
        let mut mid = vec![0.0; d];
        let mut v = vec![0.0; d];
        let mut residual = f64::INFINITY;
        for _ in 0..opts.max_iter {
            for i in 0..d {
                mid[i] = 0.5 * (x[i] + y[i]);
            }
            self.field.eval_into(&mid, &mut v).map_err(|_| StepError::Domain)?;
            let r = DVector::from_iterator(d, (0..d).map(|i| y[i] - x[i] - dt * v[i]));
            let scale = y.iter().fold(1.0f64, |a, b| a.max(b.abs()));
            residual = r.amax() / scale;
            if residual <= opts.tol {
                return Ok(y);
            }
            let mut jac = DMatrix::<f64>::identity(d, d);
            for i in 0..d {
                for j in 0..d {
                    let dv = self.jacobian[i][j].eval(&mid).map_err(|_| StepError::Domain)?;
                    jac[(i, j)] -= 0.5 * dt * dv;
                }
            }
            let delta = jac.lu().solve(&r).ok_or(StepError::NonConvergent(residual))?;
            for i in 0..d {
                y[i] -= delta[i];
            }
        }
        if residual <= 1e3 * opts.tol {
            // stagnated at round-off level
            return Ok(y);
        }
        Err(StepError::NonConvergent(residual))
    }
}

enum StepError {
    Domain,
    NonConvergent(f64),
}

impl From<ExprError> for StepError {
    fn from(_: ExprError) -> Self {
        StepError::Domain
    }
}

/// Flow of `H` from `x0` for time `t_end` with the implicit midpoint rule.
pub fn integrate(
    h: &FieldExpr,
    x0: &[f64],
    t_end: f64,
    step: f64,
    region: &GridBox,
    conv: &PairingConvention,
) -> Result<Trajectory, FlowError> {
    Flow::new(h, conv)?.integrate(x0, t_end, region, &FlowOptions::with_step(step))
}

/// Images of a point cloud under the time-`t` map, one status per point.
#[derive(Clone, Debug, Serialize)]
pub struct Transport {
    pub points: Vec<Vec<f64>>,
    pub status: Vec<Status>,
}

impl Transport {
    pub fn all_completed(&self) -> bool {
        self.status.iter().all(Status::is_completed)
    }

    pub fn completed_points(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.points
            .iter()
            .zip(&self.status)
            .filter(|(_, s)| s.is_completed())
            .map(|(p, _)| p)
    }
}

pub fn transport_set(
    h: &FieldExpr,
    cloud: &[Vec<f64>],
    t: f64,
    step: f64,
    region: &GridBox,
    conv: &PairingConvention,
) -> Result<Transport, FlowError> {
    Flow::new(h, conv)?.transport(cloud, t, region, &FlowOptions::with_step(step), Exec::Auto)
}

impl Flow {
    pub fn transport(
        &self,
        cloud: &[Vec<f64>],
        t: f64,
        region: &GridBox,
        opts: &FlowOptions,
        exec: Exec,
    ) -> Result<Transport, FlowError> {
        let results = map_slice(cloud, exec, |p| self.map_point(p, t, region, opts));
        let mut points = Vec::with_capacity(cloud.len());
        let mut status = Vec::with_capacity(cloud.len());
        for r in results {
            let (p, s) = r?;
            points.push(p);
            status.push(s);
        }
        Ok(Transport { points, status })
    }

    /// Finite-difference Jacobian of the time-`t` map at `x0` (central
    /// differences with step `delta`).
    pub fn flow_jacobian(
        &self,
        x0: &[f64],
        t: f64,
        delta: f64,
        region: &GridBox,
        opts: &FlowOptions,
    ) -> Result<DMatrix<f64>, FlowError> {
        let d = self.dim;
        let mut j = DMatrix::zeros(d, d);
        for k in 0..d {
            let mut a = x0.to_vec();
            let mut b = x0.to_vec();
            a[k] += delta;
            b[k] -= delta;
            let (ya, sa) = self.map_point(&a, t, region, opts)?;
            let (yb, sb) = self.map_point(&b, t, region, opts)?;
            if !sa.is_completed() || !sb.is_completed() {
                return Err(FlowError::Incomplete);
            }
            for i in 0..d {
                j[(i, k)] = (ya[i] - yb[i]) / (2.0 * delta);
            }
        }
        Ok(j)
    }
}

/// `max |JᵀΩJ − Ω|` entrywise.
pub fn symplectic_defect(j: &DMatrix<f64>, omega: &DMatrix<f64>) -> f64 {
    (j.transpose() * omega * j - omega).amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldexpr::{parse_field, parse_field_in, Chart, ParseContext};
    use std::f64::consts::PI;

    fn qp(text: &str) -> FieldExpr {
        parse_field_in(text, &Chart::with_names(&["q", "p"]), &ParseContext::new()).unwrap()
    }

    fn big_box() -> GridBox {
        GridBox::uniform(&[(-10.0, 10.0), (-10.0, 10.0)], 2).unwrap()
    }

    #[test]
    fn linear_flow_is_exact() {
        let c = PairingConvention::standard(2).unwrap();
        let tr = integrate(&qp("p"), &[0.0, 0.0], 1.0, 0.1, &big_box(), &c).unwrap();
        assert!(tr.status.is_completed());
        let e = tr.endpoint();
        assert!((e[0] - 1.0).abs() < 1e-14 && e[1] == 0.0);
        let z = integrate(&qp("p"), &[0.3, 0.2], 0.0, 0.1, &big_box(), &c).unwrap();
        assert_eq!(z.endpoint(), &[0.3, 0.2]);
    }

    #[test]
    fn harmonic_oscillator_period() {
        let c = PairingConvention::standard(2).unwrap();
        let h = qp("(q^2 + p^2)/2");
        let tr = integrate(&h, &[1.0, 0.0], 2.0 * PI, 1e-3, &big_box(), &c).unwrap();
        let e = tr.endpoint();
        assert!((e[0] - 1.0).abs() < 1e-6 && e[1].abs() < 1e-6, "{e:?}");
        assert!(tr.energy_drift() <= 1e-10);
    }

    #[test]
    fn composition_is_fourth_order() {
        let c = PairingConvention::standard(2).unwrap();
        let flow = Flow::new(&qp("(q^2 + p^2)/2"), &c).unwrap();
        let err = |step: f64| {
            let o = FlowOptions::with_step(step).method(Method::Composition4);
            let tr = flow.integrate(&[1.0, 0.0], 1.0, &big_box(), &o).unwrap();
            let e = tr.endpoint();
            ((e[0] - 1f64.cos()).powi(2) + (e[1] + 1f64.sin()).powi(2)).sqrt()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.5, "{ratio}");
    }

    #[test]
    fn reversibility() {
        let c = PairingConvention::standard(2).unwrap();
        let flow = Flow::new(&parse_field("x - x^3/3 - x*y^2", 2).unwrap(), &c).unwrap();
        let b = GridBox::uniform(&[(-1.0, 1.0), (-1.0, 1.0)], 2).unwrap();
        let o = FlowOptions::with_step(1e-2);
        let fwd = flow.integrate(&[0.1, 0.2], 0.7, &b, &o).unwrap();
        let back = flow.integrate(fwd.endpoint(), -0.7, &b, &o).unwrap();
        let e = back.endpoint();
        assert!((e[0] - 0.1).abs() < 1e-10 && (e[1] - 0.2).abs() < 1e-10);
    }

    #[test]
    fn box_exit_and_divergence() {
        let c = PairingConvention::standard(2).unwrap();
        let b = GridBox::uniform(&[(-1.0, 1.0), (-1.0, 1.0)], 2).unwrap();
        let tr = integrate(&qp("p"), &[0.0, 0.0], 3.0, 0.01, &b, &c).unwrap();
        match tr.status {
            Status::LeftDomain(t) => assert!((t - 1.0).abs() < 0.011, "{t}"),
            s => panic!("{s:?}"),
        }
        // q' = q^2 blows up at t = 1 from q = 1
        let h = qp("q^2*p");
        let huge = GridBox::uniform(&[(-1e9, 1e9), (-1e9, 1e9)], 2).unwrap();
        let opts = FlowOptions::with_step(1e-4);
        let tr = Flow::new(&h, &c)
            .unwrap()
            .integrate(&[1.0, 0.0], 2.0, &huge, &opts);
        match tr {
            Ok(t) => assert!(!t.status.is_completed()),
            Err(FlowError::NonConvergent { t, .. }) => assert!(t > 0.99),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn domain_error_stops_flow() {
        let c = PairingConvention::standard(2).unwrap();
        // H = -sqrt(q) p: q' = -sqrt(q) reaches 0 in finite time
        let h = qp("-2*sqrt(q)*p");
        let tr = integrate(&h, &[0.25, 0.0], 2.0, 1e-3, &big_box(), &c).unwrap();
        assert!(matches!(tr.status, Status::LeftDomain(_)), "{:?}", tr.status);
    }

    #[test]
    fn symplectic_jacobian() {
        let c = PairingConvention::standard(2).unwrap();
        let flow = Flow::new(&parse_field("x - x^3/3 - x*y^2", 2).unwrap(), &c).unwrap();
        let b = GridBox::uniform(&[(-2.0, 2.0), (-2.0, 2.0)], 2).unwrap();
        let o = FlowOptions::with_step(1e-2);
        let j = flow.flow_jacobian(&[0.2, 0.1], 1.0, 1e-5, &b, &o).unwrap();
        assert!(symplectic_defect(&j, &c.omega()) < 1e-6);
    }

    #[test]
    fn transport_shifts_and_csv() {
        let c = PairingConvention::standard(2).unwrap();
        let cloud = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let out = transport_set(&qp("p"), &cloud, 1.0, 0.25, &big_box(), &c).unwrap();
        for (a, b) in cloud.iter().zip(&out.points) {
            assert_eq!(b[0], a[0] + 1.0);
            assert_eq!(b[1], a[1]);
        }
        let id = transport_set(&qp("p*q"), &cloud, 0.0, 0.25, &big_box(), &c).unwrap();
        assert_eq!(id.points, cloud);
        let tr = integrate(&qp("p"), &[0.0, 0.0], 0.5, 0.25, &big_box(), &c).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, &["q".into(), "p".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,q,p,H\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
