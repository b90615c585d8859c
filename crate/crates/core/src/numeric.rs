//! Small numeric utilities shared across modules: a golden-section
//! minimizer for 1-D convex/unimodal slices and a natural cubic spline.

/// Golden-section search for the minimum of `f` on `[lo, hi]`.
///
/// Returns `(argmin, min)`. The interval is shrunk until its width falls
/// below `tol`. `f` is assumed unimodal on the interval; on flat regions
/// the left-most bracketed point wins.
pub fn golden_section_min(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Minimizes `f` over `[lo, hi]` by a coarse scan followed by
/// golden-section refinement inside the best bracket.
///
/// Robust against `f` returning `INFINITY` on infeasible sub-ranges,
/// which golden-section alone cannot handle.
pub fn scan_then_golden(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    scan_points: usize,
    tol: f64,
) -> (f64, f64) {
    assert!(hi > lo && scan_points >= 3);
    let step = (hi - lo) / (scan_points as f64 - 1.0);
    let mut best_i = 0;
    let mut best_v = f64::INFINITY;
    let xs: Vec<f64> = (0..scan_points).map(|k| lo + step * k as f64).collect();
    for (k, &x) in xs.iter().enumerate() {
        let v = f(x);
        if v < best_v {
            best_v = v;
            best_i = k;
        }
    }
    if !best_v.is_finite() {
        return (xs[best_i], best_v);
    }
    let a = xs[best_i.saturating_sub(1)];
    let b = xs[(best_i + 1).min(scan_points - 1)];
    let (x, v) = golden_section_min(&mut f, a, b, tol);
    if v <= best_v {
        (x, v)
    } else {
        (xs[best_i], best_v)
    }
}

/// Natural cubic spline through strictly increasing knots.
///
/// Outside the knot range the spline is extended with the constant
/// endpoint values, so evaluation is defined on all of `R`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(xs: &[f64], ys: &[f64]) -> Self {
        assert_eq!(xs.len(), ys.len());
        assert!(xs.len() >= 2, "spline needs at least two knots");
        for w in xs.windows(2) {
            assert!(w[1] > w[0], "spline knots must be strictly increasing");
        }
        let n = xs.len();
        let mut second = vec![0.0; n];
        let mut aux = vec![0.0; n];
        // Tridiagonal sweep; natural boundary: zero curvature at both ends.
        for i in 1..n - 1 {
            let sig = (xs[i] - xs[i - 1]) / (xs[i + 1] - xs[i - 1]);
            let p = sig * second[i - 1] + 2.0;
            second[i] = (sig - 1.0) / p;
            let slope_r = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
            let slope_l = (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]);
            aux[i] = (6.0 * (slope_r - slope_l) / (xs[i + 1] - xs[i - 1]) - sig * aux[i - 1]) / p;
        }
        for i in (1..n - 1).rev() {
            second[i] = second[i] * second[i + 1] + aux[i];
        }
        Self { xs: xs.to_vec(), ys: ys.to_vec(), second }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let k = match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(k) => return self.ys[k],
            Err(k) => k - 1,
        };
        let h = self.xs[k + 1] - self.xs[k];
        let a = (self.xs[k + 1] - x) / h;
        let b = (x - self.xs[k]) / h;
        a * self.ys[k]
            + b * self.ys[k + 1]
            + ((a * a * a - a) * self.second[k] + (b * b * b - b) * self.second[k + 1]) * h * h
                / 6.0
    }
}
