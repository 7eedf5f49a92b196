use std::fmt::Write;

use super::table::RateTable;

/// Minimal SVG document builder.
pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Svg {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, dash: bool) {
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let dash = if dash { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1.5"{dash}/>"#,
            coords.join(" ")
        );
    }

    pub fn polygon(&mut self, pts: &[(f64, f64)], fill: &str) {
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            r#"<polygon points="{}" fill="{fill}" fill-opacity="0.25" stroke="none"/>"#,
            coords.join(" ")
        );
    }

    pub fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{fill}"/>"#);
    }

    pub fn text(&mut self, x: f64, y: f64, s: &str) {
        let s = s.replace('&', "&amp;").replace('<', "&lt;");
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="12">{s}</text>"#
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{b}</svg>\n",
            w = self.width,
            h = self.height,
            b = self.body
        )
    }
}

/// Log–log plot of the measured gaps with the fitted line and the band
/// `[lower, upper] · ε^{2/3}`.
pub fn rate_plot_svg(table: &RateTable) -> String {
    let (w, h, m) = (640.0, 440.0, 60.0);
    let mut svg = Svg::new(w, h);
    if table.points.is_empty() {
        svg.text(m, h / 2.0, "no data");
        return svg.finish();
    }
    let lx: Vec<f64> = table.points.iter().map(|p| p.eps.log10()).collect();
    let ly: Vec<f64> = table.points.iter().map(|p| p.gap.log10()).collect();
    let band = |e: f64, c: f64| (c * e.powf(2.0 / 3.0)).log10();
    let (mut x0, mut x1) = lx.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    if x1 - x0 < 1e-9 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let e0 = 10f64.powf(x0);
    let e1 = 10f64.powf(x1);
    let mut ys = ly.clone();
    if table.band.upper > 0.0 {
        ys.extend([band(e0, table.band.upper), band(e1, table.band.upper)]);
    }
    if table.band.lower > 0.0 {
        ys.extend([band(e0, table.band.lower), band(e1, table.band.lower)]);
    }
    let (y0, y1) = ys.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let sx = |v: f64| m + (v - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |v: f64| h - m - (v - y0) / (y1 - y0).max(1e-9) * (h - 2.0 * m);
    svg.polyline(&[(m, m), (m, h - m), (w - m, h - m)], "black", false);
    if table.band.lower > 0.0 {
        svg.polygon(
            &[
                (sx(x0), sy(band(e0, table.band.lower))),
                (sx(x1), sy(band(e1, table.band.lower))),
                (sx(x1), sy(band(e1, table.band.upper))),
                (sx(x0), sy(band(e0, table.band.upper))),
            ],
            "steelblue",
        );
    }
    if let Some(fit) = table.fit {
        let at = |x: f64| (fit.intercept + fit.slope * x * std::f64::consts::LN_10) / std::f64::consts::LN_10;
        svg.polyline(&[(sx(x0), sy(at(x0))), (sx(x1), sy(at(x1)))], "firebrick", true);
        svg.text(m + 10.0, m - 10.0, &format!("slope {:.4}", fit.slope));
    }
    let pts: Vec<(f64, f64)> = lx.iter().zip(&ly).map(|(&x, &y)| (sx(x), sy(y))).collect();
    svg.polyline(&pts, "black", false);
    for (x, y) in pts {
        svg.circle(x, y, 3.0, "black");
    }
    svg.text(w / 2.0 - 30.0, h - m / 3.0, &format!("log10 eps  [{x0:.1}, {x1:.1}]"));
    svg.text(4.0, m / 2.0, &format!("log10 gap  [{y0:.2}, {y1:.2}]"));
    svg.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratemeter::{Band, RatePoint};

    #[test]
    fn plot_contains_series() {
        let points: Vec<RatePoint> = [1e-3, 1e-4, 1e-5, 1e-6f64]
            .iter()
            .map(|&e| RatePoint {
                eps: e,
                gap: 0.6 * e.powf(2.0 / 3.0),
                ratio: 0.6,
            })
            .collect();
        let xs: Vec<f64> = points.iter().map(|p| p.eps).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.gap).collect();
        let table = RateTable {
            fit: crate::ratemeter::fit_loglog(&xs, &ys),
            points,
            band: Band {
                c: 1.0,
                lower: 1.0 / 3.0,
                upper: 6.0,
                phis: vec![1.0],
                flag: None,
            },
            eps0: None,
            discarded: vec![],
            grid_points_per_axis: 11,
        };
        let s = rate_plot_svg(&table);
        assert!(s.starts_with("<svg"));
        assert_eq!(s.matches("<circle").count(), 4);
        assert!(s.contains("<polygon") && s.contains("slope 0.6667"));
    }
}
