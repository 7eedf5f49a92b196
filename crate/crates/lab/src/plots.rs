use rigidlab::ratemeter::Svg;

const W: f64 = 640.0;
const H: f64 = 440.0;
const M: f64 = 60.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit<'a>(pts: impl Iterator<Item = &'a (f64, f64)>) -> Frame {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if x0 > x1 {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        let pad = |a: f64, b: f64| {
            let w = (b - a).max(1e-12 * (1.0 + a.abs()));
            (a - 0.05 * w, b + 0.05 * w)
        };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        Frame { x0, x1, y0, y1 }
    }

    fn map(&self, (x, y): (f64, f64)) -> (f64, f64) {
        (
            M + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * M),
            H - M - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * M),
        )
    }

    fn axes(&self, svg: &mut Svg, xlabel: &str, ylabel: &str) {
        svg.polyline(&[(M, M), (M, H - M), (W - M, H - M)], "black", false);
        svg.text(
            W / 2.0 - 60.0,
            H - M / 3.0,
            &format!("{xlabel}  [{:.3e}, {:.3e}]", self.x0, self.x1),
        );
        svg.text(4.0, M / 2.0, &format!("{ylabel}  [{:.3e}, {:.3e}]", self.y0, self.y1));
    }
}

/// Point clouds in distinct colours, one per series.
pub fn scatter(series: &[(&str, &str, Vec<(f64, f64)>)], xlabel: &str, ylabel: &str) -> String {
    let frame = Frame::fit(series.iter().flat_map(|s| s.2.iter()));
    let mut svg = Svg::new(W, H);
    frame.axes(&mut svg, xlabel, ylabel);
    for (k, (label, colour, pts)) in series.iter().enumerate() {
        for &p in pts {
            let (x, y) = frame.map(p);
            svg.circle(x, y, 1.5, colour);
        }
        svg.circle(W - M - 90.0, M + 16.0 * k as f64 - 4.0, 4.0, colour);
        svg.text(W - M - 80.0, M + 16.0 * k as f64, label);
    }
    svg.finish()
}

/// Polylines sharing one frame.
pub fn lines(series: &[(&str, &str, Vec<(f64, f64)>)], xlabel: &str, ylabel: &str) -> String {
    let frame = Frame::fit(series.iter().flat_map(|s| s.2.iter()));
    let mut svg = Svg::new(W, H);
    frame.axes(&mut svg, xlabel, ylabel);
    for (k, (label, colour, pts)) in series.iter().enumerate() {
        let mapped: Vec<_> = pts.iter().map(|&p| frame.map(p)).collect();
        svg.polyline(&mapped, colour, k > 0);
        svg.circle(W - M - 90.0, M + 16.0 * k as f64 - 4.0, 4.0, colour);
        svg.text(W - M - 80.0, M + 16.0 * k as f64, label);
    }
    svg.finish()
}
