use serde::Serialize;

/// One polynomial segment of a [`Profile`], written in the local variable
/// `u = (t - start) / len` so that `u` runs over `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Piece {
    pub start: f64,
    pub len: f64,
    /// Coefficients of `p(u)`, lowest degree first.
    pub coeffs: Vec<f64>,
}

impl Piece {
    pub fn new(start: f64, end: f64, coeffs: Vec<f64>) -> Self {
        assert!(end > start, "piece must have positive length");
        Piece {
            start,
            len: end - start,
            coeffs,
        }
    }

    pub fn constant(start: f64, end: f64, value: f64) -> Self {
        Piece::new(start, end, vec![value])
    }

    /// Straight segment from `v0` to `v1`.
    pub fn linear(start: f64, end: f64, v0: f64, v1: f64) -> Self {
        Piece::new(start, end, vec![v0, v1 - v0])
    }

    /// Cubic smoothstep from `v0` to `v1` with zero slope at both ends.
    pub fn cubic_step(start: f64, end: f64, v0: f64, v1: f64) -> Self {
        let d = v1 - v0;
        Piece::new(start, end, vec![v0, 0.0, 3.0 * d, -2.0 * d])
    }

    /// Segment whose slope rises from 0 to `slope` along a cubic smoothstep.
    pub fn slope_in(start: f64, end: f64, v0: f64, slope: f64) -> Self {
        // p'(u)/len = slope * (3u^2 - 2u^3)
        let k = slope * (end - start);
        Piece::new(start, end, vec![v0, 0.0, 0.0, k, -0.5 * k])
    }

    /// Segment whose slope falls from `slope` to 0 along a cubic smoothstep.
    pub fn slope_out(start: f64, end: f64, v0: f64, slope: f64) -> Self {
        // p'(u)/len = slope * (1 - 3u^2 + 2u^3)
        let k = slope * (end - start);
        Piece::new(start, end, vec![v0, k, 0.0, -k, 0.5 * k])
    }

    pub fn end(&self) -> f64 {
        self.start + self.len
    }

    /// `order`-th derivative in `t` at local coordinate `u`.
    fn eval_local(&self, u: f64, order: u32) -> f64 {
        let n = self.coeffs.len();
        let k = order as usize;
        if k >= n {
            return 0.0;
        }
        // Horner over the differentiated coefficients.
        let mut acc = 0.0;
        for i in (k..n).rev() {
            let mut c = self.coeffs[i];
            for j in 0..k {
                c *= (i - j) as f64;
            }
            acc = acc * u + c;
        }
        acc / self.len.powi(order as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Monotonicity {
    None,
    NonDecreasing,
    NonIncreasing,
}

/// A univariate piecewise-polynomial function, extended by constants outside
/// its pieces. Used as a primitive inside [`FieldExpr`](super::FieldExpr).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Profile {
    name: String,
    pieces: Vec<Piece>,
    bound: f64,
    monotonicity: Monotonicity,
}

impl Profile {
    /// Pieces must be contiguous and sorted.
    pub fn new(
        name: impl Into<String>,
        pieces: Vec<Piece>,
        bound: f64,
        monotonicity: Monotonicity,
    ) -> Self {
        assert!(!pieces.is_empty(), "profile needs at least one piece");
        for w in pieces.windows(2) {
            let gap = (w[0].end() - w[1].start).abs();
            assert!(
                gap <= 1e-12 * (1.0 + w[1].start.abs()),
                "profile pieces must be contiguous"
            );
        }
        Profile {
            name: name.into(),
            pieces,
            bound,
            monotonicity,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn monotonicity(&self) -> Monotonicity {
        self.monotonicity
    }

    pub fn support(&self) -> (f64, f64) {
        (self.pieces[0].start, self.pieces.last().unwrap().end())
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_derivative(t, 0)
    }

    pub fn eval_derivative(&self, t: f64, order: u32) -> f64 {
        let first = &self.pieces[0];
        let last = self.pieces.last().unwrap();
        if t < first.start {
            return if order == 0 { first.eval_local(0.0, 0) } else { 0.0 };
        }
        if t >= last.end() {
            return if order == 0 { last.eval_local(1.0, 0) } else { 0.0 };
        }
        let idx = self.pieces.partition_point(|p| p.start <= t) - 1;
        let p = &self.pieces[idx];
        p.eval_local(((t - p.start) / p.len).min(1.0), order)
    }

    /// Largest one-sided mismatch of value and first derivative over the
    /// internal breakpoints.
    pub fn c1_mismatch(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for w in self.pieces.windows(2) {
            let dv = (w[0].eval_local(1.0, 0) - w[1].eval_local(0.0, 0)).abs();
            let dd = (w[0].eval_local(1.0, 1) - w[1].eval_local(0.0, 1)).abs();
            worst = worst.max(dv).max(dd);
        }
        worst
    }

    pub fn is_c1(&self) -> bool {
        self.c1_mismatch() < 1e-8
    }

    /// Maximum of `|p|` on `samples` equispaced points spanning the support.
    pub fn sampled_max_abs(&self, samples: usize) -> f64 {
        let (a, b) = self.support();
        (0..samples)
            .map(|i| {
                let t = a + (b - a) * i as f64 / (samples - 1) as f64;
                self.eval(t).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Declared bound and monotonicity re-checked on `samples` points.
    pub fn verify(&self, samples: usize) -> bool {
        if !self.is_c1() || self.sampled_max_abs(samples) > self.bound * (1.0 + 1e-12) {
            return false;
        }
        let (a, b) = self.support();
        let step = (b - a) / (samples - 1) as f64;
        (0..samples).all(|i| {
            let d = self.eval_derivative(a + step * i as f64, 1);
            match self.monotonicity {
                Monotonicity::None => true,
                Monotonicity::NonDecreasing => d >= -1e-12,
                Monotonicity::NonIncreasing => d <= 1e-12,
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_joins_are_c1() {
        let p = Profile::new(
            "ramp",
            vec![
                Piece::constant(-2.0, -1.0, 0.0),
                Piece::cubic_step(-1.0, 1.0, 0.0, 2.0),
                Piece::constant(1.0, 3.0, 2.0),
            ],
            2.0,
            Monotonicity::NonDecreasing,
        );
        assert!(p.is_c1());
        assert!(p.verify(10_000));
        assert_eq!(p.eval(-5.0), 0.0);
        assert_eq!(p.eval(10.0), 2.0);
        assert!((p.eval(0.0) - 1.0).abs() < 1e-15);
        // slope of the cubic step at its midpoint is 1.5 * rise / width
        assert!((p.eval_derivative(0.0, 1) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn slope_pieces_match_linear_core() {
        let s = 0.3;
        let p = Profile::new(
            "core",
            vec![
                Piece::slope_in(-2.0, -1.0, -s - 0.5 * s, s),
                Piece::linear(-1.0, 1.0, -s, s),
                Piece::slope_out(1.0, 2.0, s, s),
            ],
            1.0,
            Monotonicity::NonDecreasing,
        );
        assert!(p.c1_mismatch() < 1e-14, "{}", p.c1_mismatch());
        assert!((p.eval(2.0) - 1.5 * s).abs() < 1e-14);
    }

    #[test]
    fn kinked_profile_fails_c1() {
        let p = Profile::new(
            "kink",
            vec![Piece::linear(0.0, 1.0, 0.0, 1.0), Piece::constant(1.0, 2.0, 1.0)],
            1.0,
            Monotonicity::NonDecreasing,
        );
        assert!(!p.is_c1());
        assert!(!p.verify(100));
    }

    #[test]
    fn finite_difference_matches_piece_derivative() {
        let piece = Piece::new(0.5, 2.0, vec![0.3, -1.0, 2.0, 0.7, -0.2]);
        let p = Profile::new("poly", vec![piece], 10.0, Monotonicity::None);
        for &t in &[0.7, 1.1, 1.9] {
            let h = 1e-5;
            let fd = (p.eval(t + h) - p.eval(t - h)) / (2.0 * h);
            assert!((fd - p.eval_derivative(t, 1)).abs() < 1e-8);
            let fd2 = (p.eval_derivative(t + h, 1) - p.eval_derivative(t - h, 1)) / (2.0 * h);
            assert!((fd2 - p.eval_derivative(t, 2)).abs() < 1e-7);
        }
    }
}
