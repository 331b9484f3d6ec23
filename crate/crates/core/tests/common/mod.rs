#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use satrecon::camera::{FpcCamera, FpcIntrinsics};

/// Random skewed intrinsics at satellite scale.
pub fn satellite_intrinsics(rng: &mut impl Rng) -> FpcIntrinsics {
    let fx = rng.random_range(2e4..1e6);
    let fy = fx * rng.random_range(0.95..1.05);
    let s = fx * rng.random_range(-0.05..0.05);
    FpcIntrinsics::new(fx, fy, s, rng.random_range(0.0..6000.0), rng.random_range(0.0..6000.0)).unwrap()
}

/// Camera hundreds of kilometers up, up to ~30 degrees off nadir, looking
/// near the local origin.
pub fn satellite_camera(rng: &mut impl Rng) -> FpcCamera {
    let k = satellite_intrinsics(rng);
    let altitude = rng.random_range(4e5..8e5);
    let tilt = rng.random_range(0.0f64..0.5);
    let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
    let eye = Vector3::new(
        altitude * tilt.tan() * azimuth.cos(),
        altitude * tilt.tan() * azimuth.sin(),
        altitude,
    );
    let target = Vector3::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0), 0.0);
    let up = Vector3::new(rng.random_range(-1.0..1.0), 1.0, 0.0);
    FpcCamera::look_at(k, eye, target, up).unwrap()
}

/// Scene point inside a 1 km footprint, up to 100 m high.
pub fn scene_point(rng: &mut impl Rng) -> Vector3<f64> {
    Vector3::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0), rng.random_range(0.0..100.0))
}

/// Gauss-Jordan inverse with partial pivoting, independent of the library.
pub fn gauss_jordan(m: &Matrix3<f64>) -> Matrix3<f64> {
    let mut a = [[0.0; 6]; 3];
    for r in 0..3 {
        for c in 0..3 {
            a[r][c] = m[(r, c)];
        }
        a[r][3 + r] = 1.0;
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        let d = a[col][col];
        for v in a[col].iter_mut() {
            *v /= d;
        }
        for r in 0..3 {
            if r != col {
                let f = a[r][col];
                let row = a[col];
                for (v, p) in a[r].iter_mut().zip(row) {
                    *v -= f * p;
                }
            }
        }
    }
    Matrix3::from_fn(|r, c| a[r][3 + c])
}
