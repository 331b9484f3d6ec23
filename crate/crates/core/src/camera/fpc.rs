use nalgebra::{Matrix3, Matrix3x4, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{max_abs, CameraError};

/// Camera-frame depth at or below which a point is treated as non-projectable.
pub const PROJECTABLE_DEPTH_EPS: f64 = 1e-12;

const ROTATION_TOL: f64 = 1e-9;

/// Calibration parameters of a finite projective camera.
///
/// ```text
///     | f_x  s    p_x |
/// K = | 0    f_y  p_y |
///     | 0    0    1   |
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpcIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub s: f64,
    pub px: f64,
    pub py: f64,
}

impl FpcIntrinsics {
    pub fn new(fx: f64, fy: f64, s: f64, px: f64, py: f64) -> Result<Self, CameraError> {
        let k = Self { fx, fy, s, px, py };
        k.validate()?;
        Ok(k)
    }

    pub fn skew_free(fx: f64, fy: f64, px: f64, py: f64) -> Result<Self, CameraError> {
        Self::new(fx, fy, 0.0, px, py)
    }

    pub fn identity() -> Self {
        Self { fx: 1.0, fy: 1.0, s: 0.0, px: 0.0, py: 0.0 }
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        let all = [self.fx, self.fy, self.s, self.px, self.py];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(CameraError::InvalidIntrinsics("non-finite entry".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(CameraError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        Ok(())
    }

    pub fn as_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, self.s, self.px, //
            0.0, self.fy, self.py, //
            0.0, 0.0, 1.0,
        )
    }

    pub fn is_skew_free(&self) -> bool {
        self.s == 0.0
    }
}

/// Closed-form inverse of an upper-triangular calibration matrix.
pub fn fpc_invert(k: &FpcIntrinsics) -> Result<Matrix3<f64>, CameraError> {
    k.validate()?;
    let FpcIntrinsics { fx, fy, s, px, py } = *k;
    Ok(Matrix3::new(
        1.0 / fx,
        -s / (fx * fy),
        py * s / (fx * fy) - px / fx,
        0.0,
        1.0 / fy,
        -py / fy,
        0.0,
        0.0,
        1.0,
    ))
}

/// Pixel-domain transform `T = K_p * K_{p'}^-1` relating two calibrations of the
/// same camera, so that `K_p = T * K_{p'}`.
///
/// The entries are evaluated from the expanded product rather than by a
/// generic matrix multiply, grouped around the ratios `f_x / f'_x` and
/// `f_y / f'_y` so that equal calibrations give the identity exactly.
pub fn transform_between(
    k_p: &FpcIntrinsics,
    k_p_prime: &FpcIntrinsics,
) -> Result<Matrix3<f64>, CameraError> {
    k_p.validate()?;
    k_p_prime.validate()?;
    let FpcIntrinsics { fx, fy, s, px, py } = *k_p;
    let FpcIntrinsics { fx: fxp, fy: fyp, s: sp, px: pxp, py: pyp } = *k_p_prime;
    let rx = fx / fxp;
    let ry = fy / fyp;
    Ok(Matrix3::new(
        rx,
        (s - rx * sp) / fyp,
        (px - rx * pxp) - pyp * (s - rx * sp) / fyp,
        0.0,
        ry,
        py - ry * pyp,
        0.0,
        0.0,
        1.0,
    ))
}

/// `K_p = t_sp * K_s` with a skew-free `K_s` and a translation-free shear `t_sp`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewDecomposition {
    pub k_s: FpcIntrinsics,
    pub t_sp: Matrix3<f64>,
}

impl SkewDecomposition {
    /// Shear factor `s / f_y` in row 0, column 1 of `t_sp`.
    pub fn shear(&self) -> f64 {
        self.t_sp[(0, 1)]
    }

    /// `t_sp^-1`, mapping skewed pixel coordinates to skew-free ones.
    pub fn t_sp_inverse(&self) -> Matrix3<f64> {
        let mut inv = Matrix3::identity();
        inv[(0, 1)] = -self.t_sp[(0, 1)];
        inv
    }
}

/// Splits `K_p` into a skew-free calibration and a translation-free shear.
///
/// Moving the principal point to `p_x - s * p_y / f_y` absorbs the translation
/// that a plain `(f_x, f_y, p_x, p_y, 0)` substitution would introduce, so the
/// shear keeps the principal row fixed and no pixel band is pushed off canvas
/// by a global offset.
pub fn decompose_skew(k_p: &FpcIntrinsics) -> Result<SkewDecomposition, CameraError> {
    k_p.validate()?;
    let FpcIntrinsics { fx, fy, s, px, py } = *k_p;
    let k_s = FpcIntrinsics { fx, fy, s: 0.0, px: px - s * py / fy, py };
    let mut t_sp = Matrix3::identity();
    t_sp[(0, 1)] = s / fy;
    Ok(SkewDecomposition { k_s, t_sp })
}

/// Finite projective camera: calibration plus world-to-camera pose
/// (`p_c = R * p_w + t`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpcCamera {
    pub intrinsics: FpcIntrinsics,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl FpcCamera {
    pub fn new(
        intrinsics: FpcIntrinsics,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, CameraError> {
        intrinsics.validate()?;
        let dev = max_abs(&(rotation * rotation.transpose() - Matrix3::identity()));
        let det = rotation.determinant();
        if !(dev < ROTATION_TOL) || (det - 1.0).abs() > ROTATION_TOL {
            return Err(CameraError::NonOrthonormalRotation(dev.max((det - 1.0).abs())));
        }
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(CameraError::InvalidIntrinsics("non-finite translation".into()));
        }
        Ok(Self { intrinsics, rotation, translation })
    }

    /// Camera placed at `eye` looking at `target`; image `x` points along
    /// `forward x up`, image `y` along `forward x right`.
    pub fn look_at(
        intrinsics: FpcIntrinsics,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self, CameraError> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-12 {
            return Err(CameraError::InvalidIntrinsics("up vector parallel to view direction".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Self::new(intrinsics, rotation, translation)
    }

    pub fn with_intrinsics(&self, intrinsics: FpcIntrinsics) -> Result<Self, CameraError> {
        Self::new(intrinsics, self.rotation, self.translation)
    }

    pub fn to_camera_frame(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * world + self.translation
    }

    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// `K * [R | t]`.
    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        rt.set_column(3, &self.translation);
        self.intrinsics.as_matrix() * rt
    }

    pub fn project(&self, world: &Vector3<f64>) -> Result<Vector2<f64>, CameraError> {
        let pc = self.to_camera_frame(world);
        if pc.z <= PROJECTABLE_DEPTH_EPS {
            return Err(CameraError::NotProjectable(pc.z));
        }
        let p = self.intrinsics.as_matrix() * pc;
        Ok(Vector2::new(p.x / p.z, p.y / p.z))
    }

    /// Inverse of [`FpcCamera::project`] for a known camera-frame depth.
    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Result<Vector3<f64>, CameraError> {
        let k_inv = fpc_invert(&self.intrinsics)?;
        let pc = k_inv * Vector3::new(u, v, 1.0) * depth;
        Ok(self.rotation.transpose() * (pc - self.translation))
    }
}

/// Projects a world point to a dehomogenized pixel.
pub fn fpc_project(cam: &FpcCamera, world_point: &Vector3<f64>) -> Result<Vector2<f64>, CameraError> {
    cam.project(world_point)
}
