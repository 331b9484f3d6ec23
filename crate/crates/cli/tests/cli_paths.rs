//! Every subcommand against the equivalent library calls on shared fixtures.

mod common;

use std::fs;
use std::path::{Path, PathBuf};

use common::{s, satrecon, satrecon_ok};
use satrecon::camera::{
    decompose_skew, geodetic_to_utm, read_camera_file, write_camera_file, FpcRecord, Hemisphere,
    RpcCamera, RpcNormalization,
};
use satrecon::depth::{load_depth_map, skew_correct_raster, DepthKind, FusionParams};
use satrecon::eval::{load_height_grid, poisson_disk_sample, read_ply, EvalReport};
use satrecon::preprocess::{
    aoi_to_pixel_bbox, pansharpen_brovey, tonemap_with, AoiBox, SceneMetadata, SensorKind,
};
use satrecon::raster::{load_raster, save_raster, Raster};
use satrecon_cli::convert::{read_png, read_points, write_png};
use satrecon_cli::pipeline::{evaluate_points, fuse, metric_view, skew_correct_view, DepthView};
use satrecon_cli::synth::{generate_synthetic_scene, SyntheticScene};

const SEED: u64 = 9;

struct Fixture {
    dir: tempfile::TempDir,
    scene: SyntheticScene,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let cfg = common::write_config(dir.path(), common::small_scene());
        satrecon_ok(&["--config", s(&cfg), "synth", "--out", s(&dir.path().join("scene")), "--seed", "9"]);
        let scene = generate_synthetic_scene(&common::small_scene(), SEED).unwrap();
        Self { dir, scene }
    }

    fn scene(&self, name: &str) -> PathBuf {
        self.dir.path().join("scene").join(name)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn view(&self, k: usize) -> DepthView {
        DepthView {
            camera: self.scene.cameras[k],
            depth: self.scene.depth_maps[k].clone(),
            projection: self.scene.projections[k].clone(),
        }
    }
}

fn bits(r: &Raster) -> Vec<u32> {
    r.samples().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn synth_files_match_library_scene() {
    let f = Fixture::new();
    for k in 0..3 {
        let cam = read_camera_file(f.scene(&format!("cam{k}.toml"))).unwrap().fpc_camera().unwrap();
        assert_eq!(cam, f.scene.cameras[k]);
        let (dm, rp) = load_depth_map(f.scene(&format!("depth{k}.srtk"))).unwrap();
        assert_eq!(bits(dm.raster()), bits(f.scene.depth_maps[k].raster()));
        assert_eq!(rp, f.scene.projections[k]);
        assert_eq!(load_raster(f.scene(&format!("image{k}.srtk"))).unwrap(), f.scene.images[k]);
    }
    assert_eq!(load_height_grid(f.scene("gt.hgrid")).unwrap(), f.scene.ground_truth);
}

#[test]
fn skew_correct_depth_and_recover_match_library() {
    let f = Fixture::new();
    let (ms, zs, cs) = (f.out("m_s.srtk"), f.out("z_s.srtk"), f.out("cam_s.toml"));
    let out = satrecon_ok(&[
        "skew-correct",
        "--camera",
        s(&f.scene("cam1.toml")),
        "--depth",
        s(&f.scene("depth1.srtk")),
        "--out",
        s(&ms),
        "--camera-out",
        s(&cs),
    ]);
    let dec = decompose_skew(&f.scene.cameras[1].intrinsics).unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains(&format!("skew = {}", dec.shear())));
    let lib = skew_correct_view(&f.view(1)).unwrap();
    let (dm, rp) = load_depth_map(&ms).unwrap();
    assert_eq!(bits(dm.raster()), bits(lib.depth.raster()));
    assert_eq!(rp, lib.projection);
    assert_eq!(read_camera_file(&cs).unwrap().fpc_camera().unwrap(), lib.camera);

    satrecon_ok(&["depth-recover", "--depth", s(&ms), "--out", s(&zs)]);
    let (z, _) = load_depth_map(&zs).unwrap();
    assert_eq!(z.kind(), DepthKind::Metric);
    let (_, lib_z) = metric_view(&f.view(1)).unwrap();
    assert_eq!(bits(z.raster()), bits(lib_z.raster()));
}

#[test]
fn skew_correct_image_matches_library() {
    let f = Fixture::new();
    let out = f.out("img_s.srtk");
    satrecon_ok(&["skew-correct", "--camera", s(&f.scene("cam0.toml")), "--image", s(&f.scene("image0.srtk")), "--out", s(&out)]);
    let dec = decompose_skew(&f.scene.cameras[0].intrinsics).unwrap();
    let lib = skew_correct_raster(&f.scene.images[0], &dec.t_sp).unwrap();
    assert_eq!(bits(&load_raster(&out).unwrap()), bits(&lib));
}

#[test]
fn skew_free_camera_is_identity() {
    let f = Fixture::new();
    let mut file = read_camera_file(f.scene("cam0.toml")).unwrap();
    let dec = decompose_skew(&f.scene.cameras[0].intrinsics).unwrap();
    let cam = f.scene.cameras[0].with_intrinsics(dec.k_s).unwrap();
    file.fpc = Some(FpcRecord::from(&cam));
    let cam_path = f.out("free.toml");
    write_camera_file(&cam_path, &file).unwrap();
    let out = f.out("same.srtk");
    let res = satrecon_ok(&["skew-correct", "--camera", s(&cam_path), "--image", s(&f.scene("image0.srtk")), "--out", s(&out)]);
    assert!(String::from_utf8_lossy(&res.stderr).contains("skew = 0"));
    assert_eq!(fs::read(&out).unwrap(), fs::read(f.scene("image0.srtk")).unwrap());
}

#[test]
fn depth_recover_round_trips_synth_depth() {
    let f = Fixture::new();
    let z = f.out("z.srtk");
    satrecon_ok(&[
        "depth-recover",
        "--depth",
        s(&f.scene("depth2.srtk")),
        "--proj",
        s(&f.scene("depth2.srtk.toml")),
        "--out",
        s(&z),
    ]);
    let (z, _) = load_depth_map(&z).unwrap();
    let cam = &f.scene.cameras[2];
    let k_inv = satrecon::camera::fpc_invert(&cam.intrinsics).unwrap();
    for y in (0..96).step_by(5) {
        for x in (0..96).step_by(5) {
            let dir = cam.rotation.transpose() * (k_inv * nalgebra::Vector3::new(x as f64, y as f64, 1.0));
            let want = common::ray_mesh(&f.scene.mesh, &cam.center(), &dir).unwrap();
            let got = f64::from(z.raster().get(x, y, 0));
            assert!((got - want).abs() <= 1e-6 * want, "({x}, {y}): {got} vs {want}");
        }
    }
    // a metric sidecar is not a valid projection source
    let bad = satrecon(&["depth-recover", "--depth", s(&f.scene("depth2.srtk")), "--proj", s(&f.out("z.srtk.toml")), "--out", s(&f.out("x.srtk"))]);
    assert_eq!(bad.status.code(), Some(1));
}

fn cli_pipeline(f: &Fixture) -> (PathBuf, Vec<nalgebra::Vector3<f64>>) {
    let mut args: Vec<String> = vec!["fuse".into()];
    for k in 0..3 {
        let (ms, zs, cs) = (f.out(&format!("m{k}.srtk")), f.out(&format!("z{k}.srtk")), f.out(&format!("c{k}.toml")));
        let cam = f.scene(&format!("cam{k}.toml"));
        let depth = f.scene(&format!("depth{k}.srtk"));
        satrecon_ok(&["skew-correct", "--camera", s(&cam), "--depth", s(&depth), "--out", s(&ms), "--camera-out", s(&cs)]);
        satrecon_ok(&["depth-recover", "--depth", s(&ms), "--out", s(&zs)]);
        args.extend(["--camera".into(), s(&cs).into(), "--depth".into(), s(&zs).into()]);
    }
    let pts = f.out("points.ply");
    args.extend(["--out".into(), s(&pts).into()]);
    satrecon_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let lib_views: Vec<_> = (0..3).map(|k| metric_view(&f.view(k)).unwrap()).collect();
    (pts, fuse(&lib_views, &FusionParams::default()).unwrap())
}

#[test]
fn fuse_and_evaluate_match_library() {
    let f = Fixture::new();
    let (pts, lib_points) = cli_pipeline(&f);
    assert_eq!(read_points(&pts).unwrap(), lib_points);

    let report = f.out("report.toml");
    satrecon_ok(&["evaluate", "--recon", s(&pts), "--gt", s(&f.scene("gt.hgrid")), "--cell", "0.5", "--report", s(&report)]);
    let cli: EvalReport = toml::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let lib = evaluate_points(&lib_points, &f.scene.ground_truth, 1.0, 10, true).unwrap();
    assert_eq!(cli, lib);
    assert!(cli.completeness > 95.0, "{cli:?}");

    // report goes to standard output without --report
    let out = satrecon_ok(&["evaluate", "--recon", s(&pts), "--gt", s(&f.scene("gt.hgrid"))]);
    let printed: EvalReport = toml::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(printed, lib);
}

#[test]
fn fuse_is_independent_of_thread_count() {
    let f = Fixture::new();
    let (pts, _) = cli_pipeline(&f);
    let again = f.out("again.ply");
    let mut args = vec!["fuse".to_string()];
    for k in 0..3 {
        args.extend(["--camera".into(), s(&f.out(&format!("c{k}.toml"))).into()]);
        args.extend(["--depth".into(), s(&f.out(&format!("z{k}.srtk"))).into()]);
    }
    args.extend(["--out".into(), s(&again).into()]);
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_satrecon"))
        .args(&args)
        .env("SATRECON_THREADS", "1")
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(fs::read(&pts).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn sample_mesh_matches_library() {
    let f = Fixture::new();
    let out = f.out("samples.ply");
    satrecon_ok(&["sample-mesh", "--mesh", s(&f.scene("mesh.ply")), "--radius", "0.5", "--seed", "3", "--out", s(&out)]);
    let lib = poisson_disk_sample(&f.scene.mesh, 0.5, 3).unwrap();
    assert_eq!(read_points(&out).unwrap(), lib);
    satrecon_ok(&["sample-mesh", "--mesh", s(&f.scene("mesh.ply")), "--vertices", "--out", s(&out)]);
    assert_eq!(read_points(&out).unwrap(), f.scene.mesh.vertices());
}

#[test]
fn evaluate_mesh_input_and_errors() {
    let f = Fixture::new();
    let gt = f.scene("gt.hgrid");
    let out = satrecon_ok(&["evaluate", "--recon", s(&f.scene("mesh.ply")), "--gt", s(&gt), "--radius", "0.1"]);
    let r: EvalReport = toml::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert!(r.completeness >= 99.9 && r.median_error <= 1e-6, "{r:?}");
    // grid input and an error grid
    let err = f.out("err.hgrid");
    satrecon_ok(&["evaluate", "--recon", s(&gt), "--gt", s(&gt), "--no-align", "--error-grid", s(&err)]);
    assert!(load_height_grid(&err).unwrap().heights().iter().all(|&e| e == 0.0));
    // cell mismatch is a domain error
    assert_eq!(satrecon(&["evaluate", "--recon", s(&gt), "--gt", s(&gt), "--cell", "1.0"]).status.code(), Some(1));
}

#[test]
fn config_values_apply_and_flags_override() {
    let f = Fixture::new();
    let gt = f.scene("gt.hgrid");
    let cfg = f.out("strict.toml");
    fs::write(&cfg, "threshold = 1e-9\n").unwrap();
    let pts = f.out("pts.ply");
    // points 0.5 m above the truth everywhere
    let mut lifted = satrecon_cli::convert::grid_to_points(&f.scene.ground_truth);
    lifted.iter_mut().for_each(|p| p.z += 0.5);
    satrecon_cli::convert::save_points(&pts, &lifted).unwrap();
    let run = |extra: &[&str]| -> EvalReport {
        let mut args = vec!["--config", s(&cfg), "evaluate", "--recon", s(&pts), "--gt", s(&gt), "--no-align"];
        args.extend_from_slice(extra);
        toml::from_str(&String::from_utf8(satrecon_ok(&args).stdout).unwrap()).unwrap()
    };
    assert_eq!(run(&[]).completeness, 0.0);
    assert_eq!(run(&["--threshold", "1.0"]).completeness, 100.0);
}

fn test_raster(w: usize, h: usize, c: usize) -> Raster {
    Raster::from_fn(w, h, c, |x, y, ch| ((x * 37 + y * 11 + ch * 101) % 997) as f32 * 3.5 + 1.0).unwrap()
}

#[test]
fn tonemap_and_pansharpen_match_library() {
    let f = Fixture::new();
    let img = f.out("img.srtk");
    let raster = test_raster(40, 30, 3);
    save_raster(&raster, &img).unwrap();
    let (out, png) = (f.out("tm.srtk"), f.out("tm.png"));
    satrecon_ok(&["tonemap", "--image", s(&img), "--percentiles", "2,98", "--out", s(&out)]);
    let lib = tonemap_with(&raster, 2.0, 98.0).unwrap();
    assert_eq!(load_raster(&out).unwrap(), lib);
    satrecon_ok(&["tonemap", "--image", s(&img), "--out", s(&png)]);
    assert_eq!(read_png(&png).unwrap(), tonemap_with(&raster, 0.5, 99.5).unwrap());

    let pan = f.out("pan.srtk");
    let pan_r = test_raster(80, 60, 1);
    save_raster(&pan_r, &pan).unwrap();
    let sharp = f.out("sharp.srtk");
    satrecon_ok(&["pansharpen", "--pan", s(&pan), "--msi", s(&img), "--weights", "0.2,0.3,0.5", "--out", s(&sharp)]);
    let lib = pansharpen_brovey(&pan_r, &raster, [0.2, 0.3, 0.5]).unwrap();
    assert_eq!(bits(&load_raster(&sharp).unwrap()), bits(&lib));
    // wrong number of weights is a usage error
    let bad = satrecon(&["pansharpen", "--pan", s(&pan), "--msi", s(&img), "--weights", "1,2", "--out", s(&sharp)]);
    assert_eq!(bad.status.code(), Some(2));
}

fn scene_meta(dir: &Path, cloud_cover: f64) -> PathBuf {
    let mut line_num = [0.0; 20];
    let mut samp_num = [0.0; 20];
    let mut den = [0.0; 20];
    line_num[2] = -1.0; // line grows southward
    samp_num[1] = 1.0;
    den[0] = 1.0;
    let offsets = RpcNormalization { lat: 35.0, lon: -117.0, height: 500.0, line: 200.0, samp: 200.0 };
    let scales = RpcNormalization { lat: 0.01, lon: 0.01, height: 500.0, line: 200.0, samp: 200.0 };
    let rpc = RpcCamera::new(line_num, den, samp_num, den, offsets, scales).unwrap();
    let meta = SceneMetadata {
        id: "s1".into(),
        cloud_cover,
        acquired: "2015-12-11T13:55:06Z".into(),
        sensor: SensorKind::Panchromatic,
        rpc: Some((&rpc).into()),
    };
    let path = dir.join(format!("meta{cloud_cover}.toml"));
    fs::write(&path, meta.to_toml_string().unwrap()).unwrap();
    path
}

#[test]
fn aoi_extract_matches_library_and_skips_cloudy_scenes() {
    let f = Fixture::new();
    let img = f.out("big.srtk");
    let raster = test_raster(400, 400, 1);
    save_raster(&raster, &img).unwrap();
    let (e, n) = geodetic_to_utm(35.0, -117.0, 11, Hemisphere::North).unwrap();
    let aoi = [e - 100.0, n - 150.0, e + 120.0, n + 80.0].map(|v| format!("{v}"));
    let out = f.out("crop.srtk");
    let meta = scene_meta(f.dir.path(), 0.1);
    let res = satrecon_ok(&[
        "aoi-extract", "--image", s(&img), "--meta", s(&meta), "--aoi", &aoi[0], &aoi[1], &aoi[2], &aoi[3],
        "--zone", "11", "--hemisphere", "N", "--out", s(&out),
    ]);
    let rpc = SceneMetadata::from_toml_str(&fs::read_to_string(&meta).unwrap()).unwrap().rpc_camera().unwrap();
    let bbox = AoiBox::new(e - 100.0, n - 150.0, e + 120.0, n + 80.0, 11, Hemisphere::North).unwrap();
    let rect = aoi_to_pixel_bbox(&rpc, &bbox, 500.0, 400, 400).unwrap();
    assert_eq!(
        String::from_utf8(res.stdout).unwrap().trim(),
        format!("{} {} {} {}", rect.x0, rect.y0, rect.width, rect.height)
    );
    assert_eq!(load_raster(&out).unwrap(), raster.crop(rect.x0, rect.y0, rect.width, rect.height).unwrap());
    assert!(rect.width > 20 && rect.height > 20, "{rect:?}");

    let cloudy = scene_meta(f.dir.path(), 0.8);
    let skipped = f.out("skipped.srtk");
    let res = satrecon_ok(&[
        "aoi-extract", "--image", s(&img), "--meta", s(&cloudy), "--aoi", &aoi[0], &aoi[1], &aoi[2], &aoi[3],
        "--zone", "11", "--hemisphere", "N", "--out", s(&skipped),
    ]);
    assert!(String::from_utf8_lossy(&res.stderr).contains("skipped"));
    assert!(!skipped.exists());
}

#[test]
fn convert_round_trips() {
    let f = Fixture::new();
    let src = f.out("a.srtk");
    let mut r = test_raster(20, 10, 1);
    let mut samples = r.samples().to_vec();
    samples[7] = f32::NAN;
    r = r.with_samples(samples).unwrap();
    save_raster(&r, &src).unwrap();
    let (pfm, back) = (f.out("a.pfm"), f.out("b.srtk"));
    satrecon_ok(&["convert", "--input", s(&src), "--output", s(&pfm)]);
    satrecon_ok(&["convert", "--input", s(&pfm), "--output", s(&back)]);
    assert_eq!(load_raster(&back).unwrap(), r);

    let png = f.out("g.png");
    let gray = Raster::from_fn(9, 4, 1, |x, y, _| (x * 20 + y) as f32).unwrap();
    write_png(&gray, &png).unwrap();
    satrecon_ok(&["convert", "--input", s(&png), "--output", s(&back)]);
    assert_eq!(load_raster(&back).unwrap(), gray);

    let (grid_ply, grid) = (f.out("gt.ply"), f.out("gt2.hgrid"));
    satrecon_ok(&["convert", "--input", s(&f.scene("gt.hgrid")), "--output", s(&grid_ply)]);
    satrecon_ok(&["convert", "--input", s(&grid_ply), "--output", s(&grid), "--cell", "0.5"]);
    assert_eq!(load_height_grid(&grid).unwrap(), f.scene.ground_truth);
    let mesh = read_ply(std::io::BufReader::new(fs::File::open(&grid_ply).unwrap())).unwrap();
    assert!(mesh.is_empty() && mesh.vertices().len() == f.scene.ground_truth.valid_count());

    assert_eq!(satrecon(&["convert", "--input", s(&src), "--output", s(&f.out("x.obj"))]).status.code(), Some(1));
}

#[test]
fn exit_codes() {
    assert_eq!(satrecon(&["tonemap", "--bogus"]).status.code(), Some(2));
    assert_eq!(satrecon(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(satrecon(&["--help"]).status.code(), Some(0));
    let missing = satrecon(&["tonemap", "--image", "/nonexistent/x.srtk", "--out", "/tmp/y.srtk"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(missing.stdout.is_empty() && !missing.stderr.is_empty());
    let threads = std::process::Command::new(env!("CARGO_BIN_EXE_satrecon"))
        .args(["tonemap", "--image", "/nonexistent/x.srtk"])
        .env("SATRECON_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
    let help = String::from_utf8(satrecon(&["tonemap", "--help"]).stdout).unwrap();
    assert!(help.contains("--percentiles") && help.contains("0.5,99.5"));
}

#[test]
fn depth_sidecar_must_match_camera() {
    let f = Fixture::new();
    let res = satrecon(&[
        "skew-correct", "--camera", s(&f.scene("cam0.toml")), "--depth", s(&f.scene("depth1.srtk")),
        "--out", s(&f.out("x.srtk")),
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("does not match"));
}
