//! 2D affine transforms fitted between corresponding region corners.
//!
//! Each body part contributes four corner correspondences; the six transform
//! parameters come from two independent linear least-squares problems (one
//! per output coordinate) solved through their 3×3 normal equations.

use crate::error::{Error, Result};
use crate::region::Point;

/// Determinant threshold below which the normal matrix counts as degenerate.
const DEGENERACY_EPS: f64 = 1e-12;

/// f(p) = A·p + t with A = [[a11, a12], [a21, a22]], t = (tx, ty).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    pub a11: f64,
    pub a12: f64,
    pub tx: f64,
    pub a21: f64,
    pub a22: f64,
    pub ty: f64,
}

impl AffineParams {
    pub const IDENTITY: AffineParams =
        AffineParams { a11: 1.0, a12: 0.0, tx: 0.0, a21: 0.0, a22: 1.0, ty: 0.0 };

    pub fn as_array(&self) -> [f64; 6] {
        [self.a11, self.a12, self.tx, self.a21, self.a22, self.ty]
    }

    /// Determinant of the linear part.
    pub fn det_linear(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    /// Inverse transform, or None when the linear part is singular.
    pub fn inverse(&self) -> Option<AffineParams> {
        let det = self.det_linear();
        if det == 0.0 {
            return None;
        }
        let b11 = self.a22 / det;
        let b12 = -self.a12 / det;
        let b21 = -self.a21 / det;
        let b22 = self.a11 / det;
        Some(AffineParams {
            a11: b11,
            a12: b12,
            tx: -(b11 * self.tx + b12 * self.ty),
            a21: b21,
            a22: b22,
            ty: -(b21 * self.tx + b22 * self.ty),
        })
    }
}

/// Applies f(p) = A·p + t.
pub fn apply_affine(params: &AffineParams, p: Point) -> Point {
    (
        params.a11 * p.0 + params.a12 * p.1 + params.tx,
        params.a21 * p.0 + params.a22 * p.1 + params.ty,
    )
}

/// Least-squares fit of the affine transform mapping `src` corners onto
/// `dst` corners.
///
/// Exact (up to rounding) when the correspondences are consistent with an
/// affine map. Collinear or coincident source corners cannot determine the
/// transform and yield a degenerate-geometry error.
pub fn fit_affine(src: &[Point; 4], dst: &[Point; 4]) -> Result<AffineParams> {
    for p in src.iter().chain(dst.iter()) {
        if !p.0.is_finite() || !p.1.is_finite() {
            return Err(Error::invalid_argument("non-finite corner coordinate"));
        }
    }
    // normal matrix of the design rows (x, y, 1)
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut sx = 0.0;
    let mut syy = 0.0;
    let mut sy = 0.0;
    for p in src.iter() {
        sxx += p.0 * p.0;
        sxy += p.0 * p.1;
        sx += p.0;
        syy += p.1 * p.1;
        sy += p.1;
    }
    let n = [[sxx, sxy, sx], [sxy, syy, sy], [sx, sy, 4.0]];
    let det = det3(&n);
    if det.abs() < DEGENERACY_EPS {
        return Err(Error::DegenerateGeometry(format!(
            "source corners do not determine an affine transform (|det| = {:.3e})",
            det.abs()
        )));
    }

    let mut rhs_x = [0.0; 3];
    let mut rhs_y = [0.0; 3];
    for (p, q) in src.iter().zip(dst.iter()) {
        rhs_x[0] += p.0 * q.0;
        rhs_x[1] += p.1 * q.0;
        rhs_x[2] += q.0;
        rhs_y[0] += p.0 * q.1;
        rhs_y[1] += p.1 * q.1;
        rhs_y[2] += q.1;
    }
    let row_x = solve3(&n, &rhs_x, det);
    let row_y = solve3(&n, &rhs_y, det);
    Ok(AffineParams {
        a11: row_x[0],
        a12: row_x[1],
        tx: row_x[2],
        a21: row_y[0],
        a22: row_y[1],
        ty: row_y[2],
    })
}

/// Conjugates the transform to a scaled coordinate frame: S ∘ f ∘ S⁻¹ with
/// S = diag(sx, sy). Applying the result at feature resolution matches
/// applying `params` at image resolution and scaling afterwards.
pub fn scale_affine(params: &AffineParams, sx: f64, sy: f64) -> Result<AffineParams> {
    if !(sx > 0.0) || !(sy > 0.0) {
        return Err(Error::invalid_argument(format!(
            "scale factors must be positive, got ({sx}, {sy})"
        )));
    }
    Ok(AffineParams {
        a11: params.a11,
        a12: params.a12 * sx / sy,
        tx: params.tx * sx,
        a21: params.a21 * sy / sx,
        a22: params.a22,
        ty: params.ty * sy,
    })
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Cramer solve of m·x = b given det(m).
fn solve3(m: &[[f64; 3]; 3], b: &[f64; 3], det: f64) -> [f64; 3] {
    let mut out = [0.0; 3];
    for k in 0..3 {
        let mut mk = *m;
        for row in 0..3 {
            mk[row][k] = b[row];
        }
        out[k] = det3(&mk) / det;
    }
    out
}
