//! Direct least-squares ellipse fitting.
//!
//! Minimizes the algebraic distance `Σ (a·x² + b·xy + c·y² + d·x + e·y + f)²`
//! subject to `4ac − b² = 1`, using the partitioned form that reduces the
//! singular 6×6 generalized eigenproblem to an ordinary 3×3 one. Points are
//! centred and scaled to unit RMS radius first, which keeps the scatter
//! matrices well conditioned for millimetre-scale input.

use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseParams {
    pub center: [f64; 2],
    /// Semi-major axis, `>= semi_minor`.
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Direction of the major axis in `[0, π)`.
    pub orientation: f64,
}

impl EllipseParams {
    /// Point at eccentric angle `t`.
    pub fn point_at(&self, t: f64) -> [f64; 2] {
        let (s, c) = self.orientation.sin_cos();
        let (u, v) = (self.semi_major * t.cos(), self.semi_minor * t.sin());
        [self.center[0] + u * c - v * s, self.center[1] + u * s + v * c]
    }

    /// End points of the long axis.
    pub fn long_axis(&self) -> [[f64; 2]; 2] {
        [self.point_at(0.0), self.point_at(std::f64::consts::PI)]
    }
}

/// Conic coefficients `[a, b, c, d, e, f]` of the fit in normalized
/// coordinates, plus the normalization `(mean, scale)`.
struct NormalizedFit {
    conic: [f64; 6],
    mean: [f64; 2],
    scale: f64,
}

pub fn fit_ellipse(points: &[[f64; 2]]) -> Result<EllipseParams> {
    let fit = fit_conic(points)?;
    let geo = conic_to_params(&fit.conic)?;
    Ok(EllipseParams {
        center: [
            fit.mean[0] + fit.scale * geo.center[0],
            fit.mean[1] + fit.scale * geo.center[1],
        ],
        semi_major: fit.scale * geo.semi_major,
        semi_minor: fit.scale * geo.semi_minor,
        orientation: geo.orientation,
    })
}

fn fit_conic(points: &[[f64; 2]]) -> Result<NormalizedFit> {
    let n = points.len();
    if n < 6 {
        return Err(Error::Degenerate(format!("ellipse fit needs at least 6 points, got {n}")));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("ellipse fit got non-finite points".into()));
    }
    let mean = [
        points.iter().map(|p| p[0]).sum::<f64>() / n as f64,
        points.iter().map(|p| p[1]).sum::<f64>() / n as f64,
    ];
    let mut cov = Matrix2::zeros();
    for p in points {
        let d = nalgebra::Vector2::new(p[0] - mean[0], p[1] - mean[1]);
        cov += d * d.transpose();
    }
    let spread = cov.trace();
    if !(spread > 0.0) {
        return Err(Error::Degenerate("ellipse fit got coincident points".into()));
    }
    let scale = (spread / n as f64).sqrt();
    let eig = cov.symmetric_eigen();
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if lo <= 1e-12 * hi {
        return Err(Error::Degenerate("ellipse fit got collinear points".into()));
    }

    let mut s1 = Matrix3::zeros();
    let mut s2 = Matrix3::zeros();
    let mut s3 = Matrix3::zeros();
    for p in points {
        let (x, y) = ((p[0] - mean[0]) / scale, (p[1] - mean[1]) / scale);
        let q = Vector3::new(x * x, x * y, y * y);
        let l = Vector3::new(x, y, 1.0);
        s1 += q * q.transpose();
        s2 += q * l.transpose();
        s3 += l * l.transpose();
    }
    let s3_inv = s3
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("ellipse fit: singular linear scatter".into()))?;
    let t = -s3_inv * s2.transpose();
    let m = s1 + s2 * t;
    // premultiply by the inverse of the 3×3 constraint block
    let m = Matrix3::new(
        m[(2, 0)] / 2.0,
        m[(2, 1)] / 2.0,
        m[(2, 2)] / 2.0,
        -m[(1, 0)],
        -m[(1, 1)],
        -m[(1, 2)],
        m[(0, 0)] / 2.0,
        m[(0, 1)] / 2.0,
        m[(0, 2)] / 2.0,
    );

    let mut best: Option<(f64, Vector3<f64>)> = None;
    for lambda in real_eigenvalues(&m) {
        let Some(v) = null_vector(&(m - Matrix3::identity() * lambda)) else {
            continue;
        };
        let cond = 4.0 * v[0] * v[2] - v[1] * v[1];
        if cond > 0.0 {
            // the constraint is scale-free; pick the smallest residual
            // eigenvalue if rounding produced more than one candidate
            let v = v / cond.sqrt();
            let residual = (v.transpose() * (m * v))[(0, 0)].abs();
            if best.as_ref().is_none_or(|(r, _)| residual < *r) {
                best = Some((residual, v));
            }
        }
    }
    let (_, a1) = best.ok_or_else(|| Error::Degenerate("ellipse fit: no elliptical solution".into()))?;
    let a2 = t * a1;
    Ok(NormalizedFit {
        conic: [a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]],
        mean,
        scale,
    })
}

fn real_eigenvalues(m: &Matrix3<f64>) -> Vec<f64> {
    m.complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-12 * (1.0 + z.re.abs()))
        .map(|z| z.re)
        .collect()
}

/// Unit vector spanning the null space of a rank-2 3×3 matrix: the cross
/// product of the pair of rows with the largest cross product.
fn null_vector(a: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let rows = [a.row(0).transpose(), a.row(1).transpose(), a.row(2).transpose()];
    let v = [
        rows[0].cross(&rows[1]),
        rows[0].cross(&rows[2]),
        rows[1].cross(&rows[2]),
    ]
    .into_iter()
    .max_by(|x, y| x.norm_squared().total_cmp(&y.norm_squared()))?;
    let n = v.norm();
    (n > 0.0 && n.is_finite()).then(|| v / n)
}

/// Centre, semi-axes and orientation of the conic
/// `a·x² + b·xy + c·y² + d·x + e·y + f = 0`.
pub fn conic_to_params(conic: &[f64; 6]) -> Result<EllipseParams> {
    let [a, b, c, d, e, f] = *conic;
    let disc = 4.0 * a * c - b * b;
    if !(disc > 0.0) {
        return Err(Error::Degenerate(format!("conic {conic:?} is not an ellipse")));
    }
    let x0 = (b * e - 2.0 * c * d) / disc;
    let y0 = (b * d - 2.0 * a * e) / disc;
    let f0 = f + (d * x0 + e * y0) / 2.0;
    let root = (((a - c) / 2.0).powi(2) + (b / 2.0).powi(2)).sqrt();
    let (l_small, l_big) = ((a + c) / 2.0 - root, (a + c) / 2.0 + root);
    let (sa, sb) = (-f0 / l_small, -f0 / l_big);
    if !(sa > 0.0 && sb > 0.0 && sa.is_finite()) {
        return Err(Error::Degenerate(format!("conic {conic:?} has no real ellipse")));
    }
    // the quadratic form peaks along 0.5·atan2(b, a − c); the major axis is
    // perpendicular to that
    let phi = (0.5 * b.atan2(a - c) + std::f64::consts::FRAC_PI_2).rem_euclid(std::f64::consts::PI);
    Ok(EllipseParams {
        center: [x0, y0],
        semi_major: sa.sqrt(),
        semi_minor: sb.sqrt(),
        orientation: if phi >= std::f64::consts::PI { 0.0 } else { phi },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sample(e: &EllipseParams, n: usize) -> Vec<[f64; 2]> {
        (0..n).map(|k| e.point_at(2.0 * PI * k as f64 / n as f64)).collect()
    }

    #[test]
    fn recovers_circle() {
        let c = EllipseParams {
            center: [10.0, 10.0],
            semi_major: 5.0,
            semi_minor: 5.0,
            orientation: 0.0,
        };
        let f = fit_ellipse(&sample(&c, 32)).unwrap();
        assert!((f.center[0] - 10.0).abs() < 1e-9 && (f.center[1] - 10.0).abs() < 1e-9);
        assert!((f.semi_major - 5.0).abs() < 1e-9 && (f.semi_minor - 5.0).abs() < 1e-9);
    }

    #[test]
    fn recovers_rotated_ellipse() {
        let e = EllipseParams {
            center: [3.0, -4.0],
            semi_major: 20.0,
            semi_minor: 8.0,
            orientation: 30f64.to_radians(),
        };
        let f = fit_ellipse(&sample(&e, 40)).unwrap();
        assert!((f.center[0] - 3.0).abs() < 1e-6 && (f.center[1] + 4.0).abs() < 1e-6);
        assert!((f.semi_major - 20.0).abs() < 1e-6 && (f.semi_minor - 8.0).abs() < 1e-6);
        assert!((f.orientation - e.orientation).abs() < 1e-6);
    }

    #[test]
    fn rejects_too_few_and_collinear_points() {
        let e = EllipseParams {
            center: [0.0, 0.0],
            semi_major: 2.0,
            semi_minor: 1.0,
            orientation: 0.0,
        };
        assert!(matches!(fit_ellipse(&sample(&e, 5)), Err(Error::Degenerate(_))));
        let line: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, 2.0 * i as f64]).collect();
        assert!(matches!(fit_ellipse(&line), Err(Error::Degenerate(_))));
        assert!(matches!(fit_ellipse(&[[1.0, 1.0]; 8]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn conversion_rejects_hyperbola() {
        assert!(conic_to_params(&[1.0, 0.0, -1.0, 0.0, 0.0, -1.0]).is_err());
        // x² + y² + 1 = 0 has no real points
        assert!(conic_to_params(&[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn orientation_is_major_axis_direction() {
        // x²/4 + y² = 1 has its long axis along x
        let p = conic_to_params(&[0.25, 0.0, 1.0, 0.0, 0.0, -1.0]).unwrap();
        assert!((p.semi_major - 2.0).abs() < 1e-12 && (p.semi_minor - 1.0).abs() < 1e-12);
        assert!(p.orientation.abs() < 1e-12);
        let p = conic_to_params(&[1.0, 0.0, 0.25, 0.0, 0.0, -1.0]).unwrap();
        assert!((p.orientation - PI / 2.0).abs() < 1e-12);
    }
}
