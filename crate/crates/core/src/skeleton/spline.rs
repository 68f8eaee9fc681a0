use serde::{Deserialize, Serialize};

use super::SkeletonError;
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplineKind {
    Periodic,
    Natural,
}

/// Componentwise interpolating cubic spline stored as knot values and
/// second-derivative moments. Periodic curves repeat the first point as the
/// last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineCurve {
    pub kind: SplineKind,
    pub knots: Vec<f64>,
    pub points: Vec<Vec3>,
    pub moments: Vec<Vec3>,
}

/// `t_0 = 0`, `t_{i+1} = t_i + |P_{i+1} − P_i|^½`; closed curves get the
/// wrap increment `|P_0 − P_{n−1}|^½` as a final knot.
pub fn centripetal_parameters(points: &[Vec3], closed: bool) -> Result<Vec<f64>, SkeletonError> {
    if points.len() < 2 {
        return Err(SkeletonError::InsufficientPoints {
            needed: 2,
            got: points.len(),
        });
    }
    let mut t = vec![0.0];
    let n = points.len();
    let steps = if closed { n } else { n - 1 };
    for i in 0..steps {
        let d = (points[(i + 1) % n] - points[i]).norm();
        if d <= 0.0 {
            return Err(SkeletonError::DuplicatePoints(i, (i + 1) % n));
        }
        t.push(t[i] + d.sqrt());
    }
    Ok(t)
}

/// Solve a tridiagonal system in place (Thomas). `a` is the sub-diagonal
/// (`a[0]` unused), `c` the super-diagonal (`c[n−1]` unused).
fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], d: &mut [Vec3]) {
    let n = d.len();
    let mut cp = vec![0.0; n];
    let mut denom = b[0];
    cp[0] = c[0] / denom;
    d[0] /= denom;
    for i in 1..n {
        denom = b[i] - a[i] * cp[i - 1];
        cp[i] = if i + 1 < n { c[i] / denom } else { 0.0 };
        let prev = d[i - 1];
        d[i] = (d[i] - prev * a[i]) / denom;
    }
    for i in (0..n - 1).rev() {
        let next = d[i + 1];
        d[i] -= next * cp[i];
    }
}

/// Cyclic tridiagonal solve via Sherman–Morrison; corners are `a[0]` (row 0,
/// last column) and `c[n−1]` (last row, column 0).
fn solve_cyclic(a: &[f64], b: &[f64], c: &[f64], d: &[Vec3]) -> Vec<Vec3> {
    let n = d.len();
    let (alpha, beta) = (c[n - 1], a[0]);
    let gamma = -b[0];
    let mut bb = b.to_vec();
    bb[0] = b[0] - gamma;
    bb[n - 1] = b[n - 1] - alpha * beta / gamma;
    let mut x = d.to_vec();
    solve_tridiagonal(a, &bb, c, &mut x);
    let mut u = vec![Vec3::zeros(); n];
    u[0] = Vec3::repeat(gamma);
    u[n - 1] = Vec3::repeat(alpha);
    solve_tridiagonal(a, &bb, c, &mut u);
    let (z0, zn) = (u[0].x, u[n - 1].x);
    let denom = 1.0 + z0 + beta * zn / gamma;
    let zv: Vec<f64> = u.iter().map(|v| v.x).collect();
    let fact = (x[0] + x[n - 1] * (beta / gamma)) / denom;
    x.iter()
        .zip(&zv)
        .map(|(xi, zi)| xi - fact * *zi)
        .collect()
}

impl SplineCurve {
    /// Natural spline (zero end moments) through `points` at `knots`.
    pub fn natural_with_knots(points: Vec<Vec3>, knots: Vec<f64>) -> Result<Self, SkeletonError> {
        let n = points.len();
        if n < 2 || knots.len() != n {
            return Err(SkeletonError::InsufficientPoints { needed: 2, got: n });
        }
        check_increasing(&knots)?;
        let mut moments = vec![Vec3::zeros(); n];
        if n > 2 {
            let m = n - 2;
            let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
            let mut a = vec![0.0; m];
            let mut b = vec![0.0; m];
            let mut c = vec![0.0; m];
            let mut d = vec![Vec3::zeros(); m];
            for k in 0..m {
                let i = k + 1;
                a[k] = h[i - 1];
                b[k] = 2.0 * (h[i - 1] + h[i]);
                c[k] = h[i];
                d[k] = ((points[i + 1] - points[i]) / h[i] - (points[i] - points[i - 1]) / h[i - 1]) * 6.0;
            }
            solve_tridiagonal(&a, &b, &c, &mut d);
            moments[1..n - 1].copy_from_slice(&d);
        }
        Ok(Self {
            kind: SplineKind::Natural,
            knots,
            points,
            moments,
        })
    }

    /// Periodic spline through the cyclic `points`; `knots` has one more entry
    /// than `points` (the wrap).
    pub fn periodic_with_knots(points: Vec<Vec3>, knots: Vec<f64>) -> Result<Self, SkeletonError> {
        let n = points.len();
        if n < 4 {
            return Err(SkeletonError::InsufficientPoints { needed: 4, got: n });
        }
        if knots.len() != n + 1 {
            return Err(SkeletonError::Knots("periodic knots need one wrap entry".into()));
        }
        check_increasing(&knots)?;
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let p = |i: usize| points[i % n];
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![Vec3::zeros(); n];
        for i in 0..n {
            let hp = h[(i + n - 1) % n];
            let hi = h[i];
            a[i] = hp;
            b[i] = 2.0 * (hp + hi);
            c[i] = hi;
            d[i] = ((p(i + 1) - p(i)) / hi - (p(i) - p(i + n - 1)) / hp) * 6.0;
        }
        let mut moments = solve_cyclic(&a, &b, &c, &d);
        moments.push(moments[0]);
        let mut pts = points;
        pts.push(pts[0]);
        Ok(Self {
            kind: SplineKind::Periodic,
            knots,
            points: pts,
            moments,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    pub fn is_periodic(&self) -> bool {
        self.kind == SplineKind::Periodic
    }

    /// Number of distinct interpolated points.
    pub fn point_count(&self) -> usize {
        match self.kind {
            SplineKind::Periodic => self.points.len() - 1,
            SplineKind::Natural => self.points.len(),
        }
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let (t0, t1) = self.domain();
        let t = match self.kind {
            SplineKind::Periodic => t0 + (t - t0).rem_euclid(t1 - t0),
            SplineKind::Natural => t,
        };
        let last = self.knots.len() - 2;
        let i = match self.knots.binary_search_by(|k| k.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(last),
            Err(0) => 0,
            Err(i) => (i - 1).min(last),
        };
        (i, t)
    }

    /// Position, first and second derivative at `t`. Natural splines
    /// extrapolate with the end cubic.
    pub fn eval_all(&self, t: f64) -> (Vec3, Vec3, Vec3) {
        let (i, t) = self.locate(t);
        let (ta, tb) = (self.knots[i], self.knots[i + 1]);
        let h = tb - ta;
        let (pa, pb) = (self.points[i], self.points[i + 1]);
        let (ma, mb) = (self.moments[i], self.moments[i + 1]);
        let (u, v) = (tb - t, t - ta);
        let ca = pa / h - ma * (h / 6.0);
        let cb = pb / h - mb * (h / 6.0);
        let pos = ma * (u * u * u / (6.0 * h)) + mb * (v * v * v / (6.0 * h)) + ca * u + cb * v;
        let d1 = -ma * (u * u / (2.0 * h)) + mb * (v * v / (2.0 * h)) - ca + cb;
        let d2 = ma * (u / h) + mb * (v / h);
        (pos, d1, d2)
    }

    pub fn eval(&self, t: f64) -> Vec3 {
        self.eval_all(t).0
    }

    pub fn derivative(&self, t: f64) -> Vec3 {
        self.eval_all(t).1
    }

    /// Cubic power-basis coefficients `[c0, c1, c2, c3]` of interval `i` in
    /// the local variable `t − knots[i]`.
    pub fn coefficients(&self, i: usize) -> [Vec3; 4] {
        let h = self.knots[i + 1] - self.knots[i];
        let (pa, pb) = (self.points[i], self.points[i + 1]);
        let (ma, mb) = (self.moments[i], self.moments[i + 1]);
        [
            pa,
            (pb - pa) / h - (ma * 2.0 + mb) * (h / 6.0),
            ma / 2.0,
            (mb - ma) / (6.0 * h),
        ]
    }

    /// Arclength by composite Gauss–Legendre quadrature on each interval.
    pub fn length(&self) -> f64 {
        const X: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let mut total = 0.0;
        for w in self.knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let sub = 8;
            for k in 0..sub {
                let (sa, sb) = (a + (b - a) * k as f64 / sub as f64, a + (b - a) * (k + 1) as f64 / sub as f64);
                let (mid, half) = (0.5 * (sa + sb), 0.5 * (sb - sa));
                for j in 0..5 {
                    total += W[j] * half * self.derivative(mid + half * X[j]).norm();
                }
            }
        }
        total
    }

    /// Parameter of the closest curve point to `p`: a dense scan of
    /// `samples` parameters followed by golden-section refinement.
    pub fn closest_parameter(&self, p: &Vec3, samples: usize) -> (f64, Vec3, f64) {
        let (t0, t1) = self.domain();
        let n = samples.max(2);
        let span = t1 - t0;
        let denom = if self.is_periodic() { n as f64 } else { (n - 1) as f64 };
        let at = |k: usize| t0 + span * k as f64 / denom;
        let mut best = (0usize, f64::INFINITY);
        for k in 0..n {
            let d = (self.eval(at(k)) - p).norm_squared();
            if d < best.1 {
                best = (k, d);
            }
        }
        let step = span / denom;
        let (mut lo, mut hi) = (at(best.0) - step, at(best.0) + step);
        if !self.is_periodic() {
            lo = lo.max(t0);
            hi = hi.min(t1);
        }
        let f = |t: f64| (self.eval(t) - p).norm_squared();
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..200 {
            if hi - lo < 1e-14 * span.max(1.0) {
                break;
            }
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = f(x2);
            }
        }
        let mut t = 0.5 * (lo + hi);
        if self.is_periodic() {
            t = t0 + (t - t0).rem_euclid(span);
        }
        let q = self.eval(t);
        (t, q, (q - p).norm())
    }
}

fn check_increasing(knots: &[f64]) -> Result<(), SkeletonError> {
    if knots.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SkeletonError::Knots("knots must be strictly increasing".into()));
    }
    Ok(())
}

pub fn fit_periodic_spline(points: &[Vec3]) -> Result<SplineCurve, SkeletonError> {
    if points.len() < 4 {
        return Err(SkeletonError::InsufficientPoints {
            needed: 4,
            got: points.len(),
        });
    }
    let knots = centripetal_parameters(points, true)?;
    SplineCurve::periodic_with_knots(points.to_vec(), knots)
}

pub fn fit_natural_spline(points: &[Vec3]) -> Result<SplineCurve, SkeletonError> {
    let knots = centripetal_parameters(points, false)?;
    SplineCurve::natural_with_knots(points.to_vec(), knots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn circle(n: usize, r: f64) -> Vec<Vec3> {
        (0..n)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / n as f64;
                Vec3::new(r * a.cos(), r * a.sin(), 0.0)
            })
            .collect()
    }

    #[test]
    fn centripetal_square_root_law() {
        let pts = [Vec3::zeros(), Vec3::x(), Vec3::x() * 5.0];
        assert_eq!(centripetal_parameters(&pts, false).unwrap(), vec![0.0, 1.0, 3.0]);
        let eq: Vec<Vec3> = (0..5).map(|i| Vec3::x() * (2.0 * i as f64)).collect();
        let t = centripetal_parameters(&eq, false).unwrap();
        for w in t.windows(2) {
            assert!((w[1] - w[0] - 2f64.sqrt()).abs() < 1e-15);
        }
        let closed = centripetal_parameters(&circle(4, 1.0), true).unwrap();
        assert_eq!(closed.len(), 5);
        assert!(matches!(
            centripetal_parameters(&[Vec3::x(), Vec3::x()], false),
            Err(SkeletonError::DuplicatePoints(0, 1))
        ));
    }

    #[test]
    fn circle_fit_within_half_percent() {
        let r = 2.0;
        let s = fit_periodic_spline(&circle(12, r)).unwrap();
        let (t0, t1) = s.domain();
        for k in 0..2000 {
            let p = s.eval(t0 + (t1 - t0) * k as f64 / 2000.0);
            assert!((p.norm() - r).abs() <= 0.005 * r);
        }
    }

    #[test]
    fn square_corners_interpolated() {
        let sq = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let s = fit_periodic_spline(&sq).unwrap();
        for (i, p) in sq.iter().enumerate() {
            assert!((s.eval(s.knots[i]) - p).norm() < 1e-12);
        }
        assert!((s.eval(s.domain().1) - sq[0]).norm() < 1e-12);
        assert!(fit_periodic_spline(&sq[..3]).is_err());
    }

    #[test]
    fn natural_degenerate_and_linear() {
        let s = fit_natural_spline(&[Vec3::zeros(), Vec3::new(1.0, 2.0, 3.0)]).unwrap();
        let mid = s.eval(0.5 * s.domain().1);
        assert!((mid - Vec3::new(0.5, 1.0, 1.5)).norm() < 1e-12);
        let pts: Vec<Vec3> = [0.0, 0.3, 1.1, 1.5, 3.0].iter().map(|&a| Vec3::new(a, 2.0 * a, -a)).collect();
        let s = fit_natural_spline(&pts).unwrap();
        let (t0, t1) = s.domain();
        for k in 0..=100 {
            let p = s.eval(t0 + (t1 - t0) * k as f64 / 100.0);
            let dir = Vec3::new(1.0, 2.0, -1.0).normalize();
            assert!((p - dir * p.dot(&dir)).norm() < 1e-9);
        }
    }

    #[test]
    fn natural_converges_to_cubic() {
        let f = |x: f64| Vec3::new(x, x * x * x - x, 0.5 * x * x);
        let err = |n: usize| {
            let pts: Vec<Vec3> = (0..n).map(|i| f(-1.0 + 2.0 * i as f64 / (n - 1) as f64)).collect();
            let s = fit_natural_spline(&pts).unwrap();
            let (t0, t1) = s.domain();
            let mut e: f64 = 0.0;
            for k in 0..2000 {
                let p = s.eval(t0 + (t1 - t0) * (0.25 + 0.5 * k as f64 / 2000.0));
                e = e.max((p.y - (p.x.powi(3) - p.x)).abs());
            }
            e
        };
        let (a, b, c) = (err(9), err(17), err(33));
        assert!(b < a && c < b && c < 1e-3, "{a} {b} {c}");
    }

    #[test]
    fn second_derivative_continuity_and_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec3> = (0..9)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / 9.0;
                Vec3::new(a.cos() + rng.random_range(-0.1..0.1), a.sin(), rng.random_range(-0.3..0.3))
            })
            .collect();
        for s in [fit_periodic_spline(&pts).unwrap(), fit_natural_spline(&pts).unwrap()] {
            let (t0, t1) = s.domain();
            let inner: Vec<f64> = match s.kind {
                SplineKind::Periodic => s.knots.clone(),
                SplineKind::Natural => s.knots[1..s.knots.len() - 1].to_vec(),
            };
            let eps = 1e-5;
            for &k in &inner {
                let l = s.eval_all(k - eps).2;
                let r = s.eval_all(k + eps).2;
                // Second derivative is linear per piece: remove the slope contribution.
                let lk = s.eval_all(k - 2.0 * eps).2;
                let rk = s.eval_all(k + 2.0 * eps).2;
                let left = l * 2.0 - lk;
                let right = r * 2.0 - rk;
                assert!((left - right).norm() <= 1e-6, "knot {k}");
            }
            for j in 0..100 {
                let t = t0 + (t1 - t0) * (j as f64 + 0.37) / 100.0;
                let h = 1e-6;
                let fd = (s.eval(t + h) - s.eval(t - h)) / (2.0 * h);
                let d = s.derivative(t);
                assert!((fd - d).norm() <= 1e-4 * d.norm().max(1e-12));
            }
        }
    }

    #[test]
    fn closest_parameter_on_circle() {
        let s = fit_periodic_spline(&circle(64, 1.0)).unwrap();
        let p = Vec3::new(1.1 * 0.3f64.cos(), 1.1 * 0.3f64.sin(), 0.0);
        let (_, q, d) = s.closest_parameter(&p, 1000);
        assert!((q - p / 1.1).norm() < 1e-4);
        assert!((d - 0.1).abs() < 1e-4);
        let on = s.points[5];
        let (t, q, d) = s.closest_parameter(&on, 1000);
        assert!(d < 1e-9 && (q - on).norm() < 1e-9);
        assert!((s.eval(t) - q).norm() < 1e-12);
    }

    #[test]
    fn coefficients_reproduce_eval() {
        let s = fit_natural_spline(&circle(7, 1.0)).unwrap();
        let c = s.coefficients(2);
        let x = 0.3 * (s.knots[3] - s.knots[2]);
        let p = c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x;
        assert!((p - s.eval(s.knots[2] + x)).norm() < 1e-12);
    }

    #[test]
    fn length_of_circle() {
        let s = fit_periodic_spline(&circle(200, 1.0)).unwrap();
        assert!((s.length() - 2.0 * PI).abs() < 1e-5);
    }
}
