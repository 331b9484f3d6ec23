mod common;

use std::fs;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use satrecon::camera::fpc_invert;
use satrecon::depth::recover_depth;
use satrecon::eval::{compute_metrics, rasterize_height};
use satrecon_cli::synth::{generate_synthetic_scene, SynthConfig};

#[test]
fn rendered_depth_matches_ray_mesh_intersection() {
    let cfg = SynthConfig { width: 256, height: 256, ..SynthConfig::default() };
    let scene = generate_synthetic_scene(&cfg, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (k, cam) in scene.cameras.iter().enumerate() {
        let k_inv = fpc_invert(&cam.intrinsics).unwrap();
        let dm = scene.depth_maps[k].raster();
        for _ in 0..1500 {
            let (x, y) = (rng.random_range(0..cfg.width), rng.random_range(0..cfg.height));
            // camera-frame ray with unit z, so the hit parameter is the depth
            let dir = cam.rotation.transpose() * (k_inv * Vector3::new(x as f64, y as f64, 1.0));
            let want = common::ray_mesh(&scene.mesh, &cam.center(), &dir).expect("every pixel sees the ground");
            let m = f64::from(dm.get(x, y, 0));
            let got = recover_depth(&scene.projections[k], x as f64, y as f64, m).unwrap();
            assert!((got - want).abs() <= 1e-6 * want, "camera {k} pixel ({x}, {y}): {got} vs {want}");
        }
    }
}

/// Regular barycentric lattice on every triangle, restricted to `bounds`.
fn dense_sample(mesh: &satrecon::eval::TriangleMesh, spacing: f64, bounds: (f64, f64)) -> Vec<Vector3<f64>> {
    let mut out = Vec::new();
    for f in 0..mesh.faces().len() {
        let [a, b, c] = mesh.triangle(f);
        let n = (((b - a).norm().max((c - a).norm())) / spacing).ceil() as usize;
        for i in 0..=n {
            for j in 0..=n - i {
                let p = a + (b - a) * (i as f64 / n as f64) + (c - a) * (j as f64 / n as f64);
                if p.x >= bounds.0 && p.x < bounds.1 && p.y >= bounds.0 && p.y < bounds.1 {
                    out.push(p);
                }
            }
        }
    }
    out
}

#[test]
fn ground_truth_matches_dense_sampling() {
    let cfg = SynthConfig { width: 16, height: 16, ..SynthConfig::default() };
    let scene = generate_synthetic_scene(&cfg, 4).unwrap();
    let pts = dense_sample(&scene.mesh, 0.05, (0.0, cfg.extent));
    let sampled = rasterize_height(&pts, scene.ground_truth.spec());
    let r = compute_metrics(&sampled, &scene.ground_truth, 1.0, false).unwrap();
    assert!(r.completeness >= 99.9, "{r:?}");
    assert!(r.median_error <= 1e-6, "{r:?}");
}

#[test]
fn synth_output_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_config(dir.path(), common::small_scene());
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (out, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        common::satrecon_ok(&["--config", common::s(&cfg), "synth", "--out", common::s(out), "--seed", seed]);
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 4 + 3 * 4, "{names:?}");
    let mut differs = false;
    for name in &names {
        let x = fs::read(a.join(name)).unwrap();
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name:?}");
        differs |= x != fs::read(c.join(name)).unwrap();
    }
    assert!(differs, "another seed should change the scene");
}
