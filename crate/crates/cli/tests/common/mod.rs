#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::Vector3;
use satrecon::eval::TriangleMesh;
use satrecon_cli::synth::SynthConfig;
use satrecon_cli::PipelineConfig;

pub fn satrecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_satrecon")).args(args).output().expect("spawn satrecon")
}

/// Runs the binary and fails the test on a non-zero exit.
pub fn satrecon_ok(args: &[&str]) -> Output {
    let out = satrecon(args);
    assert!(out.status.success(), "satrecon {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn small_scene() -> SynthConfig {
    SynthConfig { boxes: 4, cameras: 3, width: 96, height: 96, extent: 32.0, box_size: [2.0, 5.0], ..SynthConfig::default() }
}

/// Writes a run configuration holding `synth` and returns its path.
pub fn write_config(dir: &Path, synth: SynthConfig) -> PathBuf {
    let cfg = PipelineConfig { synth, ..PipelineConfig::default() };
    let path = dir.join("run.toml");
    std::fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    path
}

/// Nearest Moller-Trumbore hit parameter of the ray `origin + t * dir`
/// against every mesh triangle.
pub fn ray_mesh(mesh: &TriangleMesh, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    let mut best: Option<f64> = None;
    for f in 0..mesh.faces().len() {
        let [a, b, c] = mesh.triangle(f);
        let (e1, e2) = (b - a, c - a);
        let p = dir.cross(&e2);
        let det = e1.dot(&p);
        if det.abs() < 1e-14 * e1.norm() * e2.norm() * dir.norm() {
            continue;
        }
        let tv = origin - a;
        let u = tv.dot(&p) / det;
        let q = tv.cross(&e1);
        let v = dir.dot(&q) / det;
        let eps = 1e-12;
        if u < -eps || v < -eps || u + v > 1.0 + eps {
            continue;
        }
        let t = e2.dot(&q) / det;
        if t > 0.0 && best.is_none_or(|bt| t < bt) {
            best = Some(t);
        }
    }
    best
}
