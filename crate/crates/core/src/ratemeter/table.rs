use std::io::Write;

use serde::Serialize;

use super::bounds::Band;
use super::RateError;
use crate::exec::{map_slice, Exec};
use crate::perturber::{local_perturbation, LocalOptions, LocalProblem};

/// First line of every CSV written by this crate.
pub const CSV_SCHEMA: &str = "# rigidlab-csv v1";

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RatePoint {
    pub eps: f64,
    pub gap: f64,
    /// `gap / ε^{2/3}`.
    pub ratio: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in `log gap`.
    pub residual: f64,
    pub points: usize,
}

/// Ordinary least squares of `log y` on `log x`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Option<LogFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n as f64;
    let my = ly.iter().sum::<f64>() / n as f64;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Some(LogFit {
        slope,
        intercept,
        residual: (ss / n as f64).sqrt(),
        points: n,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RateTable {
    /// Sorted by strictly decreasing `ε`.
    pub points: Vec<RatePoint>,
    /// `None` with fewer than four usable points.
    pub fit: Option<LogFit>,
    pub band: Band,
    pub eps0: Option<f64>,
    /// Requested values above `ε_0`, left out of the table.
    pub discarded: Vec<f64>,
    pub grid_points_per_axis: usize,
}

impl RateTable {
    pub fn within_band(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.ratio >= self.band.lower && p.ratio <= self.band.upper)
    }

    /// Columns `eps, gap, ratio, band_lo, band_hi`, after a schema comment.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), RateError> {
        writeln!(out, "{CSV_SCHEMA} rate-table grid={}", self.grid_points_per_axis)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["eps", "gap", "ratio", "band_lo", "band_hi"])?;
        for p in &self.points {
            w.write_record([
                format!("{:e}", p.eps),
                format!("{:e}", p.gap),
                format!("{:.9}", p.ratio),
                format!("{:.9}", self.band.lower),
                format!("{:.9}", self.band.upper),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Measures `h(x) − sup_U {F, G}` for the local construction at each `ε`.
pub fn upsilon_upper_curve(
    problem: &LocalProblem,
    eps_list: &[f64],
    band: Band,
    opts: &LocalOptions,
) -> Result<RateTable, RateError> {
    if eps_list.is_empty() {
        return Err(RateError::EmptyList);
    }
    if eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(RateError::InvalidParameter("every ε must be positive".into()));
    }
    let mut eps: Vec<f64> = eps_list.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    eps.dedup();
    let smallest = *eps.last().unwrap();
    let probe = local_perturbation(
        problem,
        smallest,
        &LocalOptions {
            find_eps0: true,
            ..opts.clone()
        },
    )?;
    let eps0 = probe.eps0;
    let limit = eps0.unwrap_or(f64::INFINITY);
    let (kept, discarded): (Vec<f64>, Vec<f64>) = eps.into_iter().partition(|&e| e <= limit);
    let inner = LocalOptions {
        find_eps0: false,
        ..opts.clone()
    };
    let runs = map_slice(&kept, Exec::Auto, |&e| local_perturbation(problem, e, &inner));
    let mut points = Vec::with_capacity(kept.len());
    for (e, r) in kept.iter().zip(runs) {
        let lp = r?;
        points.push(RatePoint {
            eps: *e,
            gap: lp.gap,
            ratio: lp.gap / e.powf(2.0 / 3.0),
        });
    }
    let fit = if points.len() >= 4 {
        let xs: Vec<f64> = points.iter().map(|p| p.eps).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.gap).collect();
        fit_loglog(&xs, &ys)
    } else {
        None
    };
    Ok(RateTable {
        points,
        fit,
        band,
        eps0,
        discarded,
        grid_points_per_axis: opts.resolution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_fit() {
        let xs = [1e-3, 1e-4, 1e-5, 1e-6];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 0.7 * x.powf(2.0 / 3.0)).collect();
        let f = fit_loglog(&xs, &ys).unwrap();
        assert!((f.slope - 2.0 / 3.0).abs() < 1e-12);
        assert!((f.intercept - 0.7f64.ln()).abs() < 1e-10);
        assert!(f.residual < 1e-12);
        assert!(fit_loglog(&[1.0], &[1.0]).is_none());
        assert!(fit_loglog(&[1.0, 2.0], &[1.0, -1.0]).is_none());
    }
}
