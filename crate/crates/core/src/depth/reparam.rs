use nalgebra::{Matrix3, Matrix3x4, Matrix4, RowVector4, Vector3, Vector4};

use super::DepthError;
use crate::camera::max_abs;

/// Relative residual `|row4 . C| / (|row4| |C|)` at or below which the
/// extended projection is treated as singular.
pub const SINGULAR_EPS: f64 = 1e-10;
/// Recovery rejects `|(P^-1)_4 . [u, v, 1, m]|` below this.
pub const AT_INFINITY_EPS: f64 = 1e-14;
const FRONT_EPS: f64 = 1e-12;

/// The 4x4 plane-plus-parallax projection and its inverse.
///
/// Both matrices are stored normalized: `p = n_p * P` and
/// `p_inv = n_p_inv * P^-1`, with each factor chosen so the stored matrix has
/// max-absolute-entry 1. Recovered depths are independent of the factors.
#[derive(Debug, Clone)]
pub struct ReparamProjection {
    p: Matrix4<f64>,
    p_inv: Matrix4<f64>,
    n_p: f64,
    n_p_inv: f64,
    z_bar: f64,
    d: f64,
    raw: Matrix4<f64>,
    raw_inv: Matrix4<f64>,
}

impl PartialEq for ReparamProjection {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p
            && self.p_inv == other.p_inv
            && self.n_p == other.n_p
            && self.n_p_inv == other.n_p_inv
            && self.z_bar == other.z_bar
            && self.d == other.d
    }
}

impl ReparamProjection {
    /// Rebuilds a projection from stored (normalized) matrices, e.g. a sidecar.
    pub fn from_parts(
        p: Matrix4<f64>,
        p_inv: Matrix4<f64>,
        n_p: f64,
        n_p_inv: f64,
        z_bar: f64,
        d: f64,
    ) -> Result<Self, DepthError> {
        check_scalars(z_bar, d)?;
        for (name, n) in [("n_p", n_p), ("n_p_inv", n_p_inv)] {
            if !(n.is_finite() && n > 0.0) {
                return Err(DepthError::InvalidParameter(format!("{name} must be positive, got {n}")));
            }
        }
        if p.iter().chain(p_inv.iter()).any(|v| !v.is_finite()) {
            return Err(DepthError::InvalidParameter("non-finite matrix entry".into()));
        }
        let raw = p / n_p;
        let raw_inv = p_inv / n_p_inv;
        let expected = RowVector4::new(0.0, 0.0, z_bar, -z_bar * d);
        let row4_err = max_abs(&(raw.row(3) - expected));
        if row4_err > 1e-9 * max_abs(&expected) {
            return Err(DepthError::InvalidParameter(format!(
                "row 4 of P must be (0, 0, z_bar, -z_bar*d); deviation {row4_err:e}"
            )));
        }
        let residual = inverse_residual(&raw, &raw_inv);
        if residual > 1e-9 {
            return Err(DepthError::InvalidParameter(format!("P_inv is not the inverse of P (residual {residual:e})")));
        }
        Ok(Self { p, p_inv, n_p, n_p_inv, z_bar, d, raw, raw_inv })
    }

    /// Stored, normalized `P`.
    pub fn p(&self) -> &Matrix4<f64> {
        &self.p
    }
    /// Stored, normalized `P^-1`.
    pub fn p_inv(&self) -> &Matrix4<f64> {
        &self.p_inv
    }
    pub fn n_p(&self) -> f64 {
        self.n_p
    }
    pub fn n_p_inv(&self) -> f64 {
        self.n_p_inv
    }
    pub fn z_bar(&self) -> f64 {
        self.z_bar
    }
    pub fn d(&self) -> f64 {
        self.d
    }
    /// `P` with the normalization undone.
    pub fn p_unnormalized(&self) -> &Matrix4<f64> {
        &self.raw
    }
    pub fn p_inv_unnormalized(&self) -> &Matrix4<f64> {
        &self.raw_inv
    }

    /// World point for a pixel and its reparameterized depth.
    pub fn backproject(&self, u: f64, v: f64, m: f64) -> Result<Vector3<f64>, DepthError> {
        let h = self.raw_inv * Vector4::new(u, v, 1.0, m);
        if h.w.abs() < AT_INFINITY_EPS * max_abs(&h) {
            return Err(DepthError::PointAtInfinity(h.w));
        }
        Ok(h.xyz() / h.w)
    }
}

fn check_scalars(z_bar: f64, d: f64) -> Result<(), DepthError> {
    if !(z_bar.is_finite() && z_bar > 0.0) {
        return Err(DepthError::InvalidParameter(format!("z_bar must be positive, got {z_bar}")));
    }
    if !d.is_finite() {
        return Err(DepthError::InvalidParameter(format!("d must be finite, got {d}")));
    }
    Ok(())
}

/// Scaled residual of `P * P^-1 = I`, relative to `|P| |P^-1|` entrywise.
fn inverse_residual(p: &Matrix4<f64>, p_inv: &Matrix4<f64>) -> f64 {
    let err = p * p_inv - Matrix4::identity();
    let scale = p.abs() * p_inv.abs();
    err.iter().zip(scale.iter()).fold(0.0, |acc, (e, s)| acc.max(e.abs() / s.max(1.0)))
}

/// Homogeneous camera center: the null vector of `p3`, from its 3x3 minors.
fn null_vector(p3: &Matrix3x4<f64>) -> Vector4<f64> {
    let minor = |skip: usize| {
        let cols: Vec<usize> = (0..4).filter(|&c| c != skip).collect();
        Matrix3::from_fn(|r, c| p3[(r, cols[c])]).determinant()
    };
    Vector4::new(minor(0), -minor(1), minor(2), -minor(3))
}

/// Inverse with row/column equilibration and one Newton refinement step.
fn invert(p: &Matrix4<f64>) -> Option<Matrix4<f64>> {
    let r = Vector4::from_fn(|i, _| 1.0 / max_abs(&p.row(i)));
    let a = Matrix4::from_diagonal(&r) * p;
    let c = Vector4::from_fn(|j, _| 1.0 / max_abs(&a.column(j)));
    let b = a * Matrix4::from_diagonal(&c);
    let b_inv = b.try_inverse()?;
    let x = Matrix4::from_diagonal(&c) * b_inv * Matrix4::from_diagonal(&r);
    let x = x + x * (Matrix4::identity() - p * x);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Extends a 3x4 projection with the plane row `(0, 0, z_bar, -z_bar * d)`
/// and inverts it.
pub fn build_reparam(p3x4: &Matrix3x4<f64>, z_bar: f64, d: f64) -> Result<ReparamProjection, DepthError> {
    check_scalars(z_bar, d)?;
    if p3x4.iter().any(|v| !v.is_finite()) {
        return Err(DepthError::InvalidParameter("non-finite projection entry".into()));
    }
    let center = null_vector(p3x4);
    let hadamard: f64 = (0..3).map(|i| p3x4.row(i).norm()).product();
    if !(center.norm() > 1e-12 * hadamard) {
        return Err(DepthError::RankDeficient);
    }
    let row4 = RowVector4::new(0.0, 0.0, z_bar, -z_bar * d);
    let residual = (row4 * center)[0].abs() / (row4.norm() * center.norm());
    if residual <= SINGULAR_EPS {
        return Err(DepthError::Singular(residual));
    }
    let mut raw = Matrix4::zeros();
    raw.fixed_view_mut::<3, 4>(0, 0).copy_from(p3x4);
    raw.set_row(3, &row4);
    let raw_inv = invert(&raw).ok_or(DepthError::Singular(residual))?;
    let n_p = 1.0 / max_abs(&raw);
    let n_p_inv = 1.0 / max_abs(&raw_inv);
    Ok(ReparamProjection { p: raw * n_p, p_inv: raw_inv * n_p_inv, n_p, n_p_inv, z_bar, d, raw, raw_inv })
}

/// Forward map of a world point to `(u, v, m)` with `m = z_bar * (z - d) / Z`.
pub fn forward_reparam_depth(rp: &ReparamProjection, world_point: &Vector3<f64>) -> Result<(f64, f64, f64), DepthError> {
    let x = rp.raw * world_point.push(1.0);
    let z = x.z;
    if !(z > FRONT_EPS) {
        return Err(DepthError::BehindCamera(z));
    }
    Ok((x.x / z, x.y / z, rp.z_bar * (world_point.z - rp.d) / z))
}

/// Conventional depth from `(u, v, m)`: `n_p_inv / ((P^-1)_4 . [u, v, 1, m])`
/// using the stored, normalized inverse.
pub fn recover_depth(rp: &ReparamProjection, u: f64, v: f64, m: f64) -> Result<f64, DepthError> {
    let row = rp.p_inv.row(3);
    let dot = row[0] * u + row[1] * v + row[2] + row[3] * m;
    if !(dot.abs() >= AT_INFINITY_EPS) {
        return Err(DepthError::PointAtInfinity(dot));
    }
    Ok(rp.n_p_inv / dot)
}

/// Mean conventional depth (third projection row) over a sparse point set.
pub fn mean_depth(p3x4: &Matrix3x4<f64>, points: &[Vector3<f64>]) -> Result<f64, DepthError> {
    if points.is_empty() {
        return Err(DepthError::InvalidParameter("no points for mean depth".into()));
    }
    let sum: f64 = points.iter().map(|x| (p3x4.row(2) * x.push(1.0))[0]).sum();
    let mean = sum / points.len() as f64;
    if !(mean > 0.0) {
        return Err(DepthError::BehindCamera(mean));
    }
    Ok(mean)
}
