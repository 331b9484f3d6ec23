//! Argument definitions and the subcommand adapters.

use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use satrecon::camera::{decompose_skew, read_camera_file, write_camera_file, CameraFile, FpcCamera, FpcRecord, Hemisphere};
use satrecon::depth::{
    load_depth_map, recover_depth_map, save_depth_map, skew_correct_raster, DepthKind, DepthMap, DepthSidecar,
    ReparamProjection,
};
use satrecon::eval::{
    error_grid, fill_holes, load_height_grid, poisson_disk_sample, rasterize_height, read_ply, save_height_grid,
    vertex_sample, TriangleMesh,
};
use satrecon::preprocess::{aoi_to_pixel_bbox, pansharpen_brovey, tonemap_with, AoiBox, SceneMetadata};
use satrecon::raster::{load_raster, save_raster, Raster};

use crate::config::PipelineConfig;
use crate::convert;
use crate::error::{CliError, Result};
use crate::pipeline::{self, DepthView};
use crate::synth::generate_synthetic_scene;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "satrecon", version, about = "Satellite surface-reconstruction stages: preprocessing, skew correction, depth recovery, evaluation")]
pub struct Cli {
    /// TOML run configuration; flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Crop an image to a UTM area of interest through the scene RPC
    AoiExtract(AoiExtractArgs),
    /// Percentile clip, normalize and gamma-map to 8-bit range
    Tonemap(TonemapArgs),
    /// Brovey pan-sharpening of a 3-band image
    Pansharpen(PansharpenArgs),
    /// Remove camera skew from an image or depth map
    SkewCorrect(SkewCorrectArgs),
    /// Recover metric depth from a reparameterized depth map
    DepthRecover(DepthRecoverArgs),
    /// Back-project metric depth maps into a consistent point set
    Fuse(FuseArgs),
    /// Poisson-disk (or vertex) sampling of a PLY mesh
    SampleMesh(SampleMeshArgs),
    /// Completeness and median error of a reconstruction against a height grid
    Evaluate(EvaluateArgs),
    /// Write a synthetic scene with skewed cameras and rendered depth maps
    Synth(SynthArgs),
    /// Convert between PNG, PFM, PLY and the internal formats
    Convert(ConvertArgs),
}

#[derive(Debug, Args)]
pub struct AoiExtractArgs {
    /// Input raster (.srtk)
    #[arg(long)]
    pub image: PathBuf,
    /// Scene metadata document with cloud cover and RPC
    #[arg(long)]
    pub meta: PathBuf,
    /// Area of interest in UTM meters
    #[arg(long, num_args = 4, value_names = ["EMIN", "NMIN", "EMAX", "NMAX"], allow_negative_numbers = true)]
    pub aoi: Option<Vec<f64>>,
    /// UTM zone (1-60)
    #[arg(long)]
    pub zone: Option<u8>,
    /// UTM hemisphere, N or S
    #[arg(long)]
    pub hemisphere: Option<Hemisphere>,
    /// Reference height for projecting the AOI [default: RPC height offset]
    #[arg(long, allow_negative_numbers = true)]
    pub height: Option<f64>,
    /// Skip scenes whose cloud cover exceeds this fraction [default: 0.5]
    #[arg(long)]
    pub cloud_threshold: Option<f64>,
    /// Output raster (.srtk)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TonemapArgs {
    /// Input raster (.srtk)
    #[arg(long)]
    pub image: PathBuf,
    /// Clip percentiles lo,hi [default: 0.5,99.5]
    #[arg(long, value_name = "LO,HI", value_parser = parse_list::<2>)]
    pub percentiles: Option<[f64; 2]>,
    /// Output (.srtk or .png)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PansharpenArgs {
    /// Panchromatic raster, 1 channel (.srtk)
    #[arg(long)]
    pub pan: PathBuf,
    /// Multispectral raster, 3 channels (.srtk)
    #[arg(long)]
    pub msi: PathBuf,
    /// Intensity weights r,g,b, normalized to sum 1 [default: 1/3 each]
    #[arg(long, value_name = "R,G,B", value_parser = parse_list::<3>)]
    pub weights: Option<[f64; 3]>,
    /// Output raster (.srtk)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SkewCorrectArgs {
    /// Camera document with an [fpc] table
    #[arg(long)]
    pub camera: PathBuf,
    /// Image to correct (.srtk)
    #[arg(long, conflicts_with = "depth", required_unless_present = "depth")]
    pub image: Option<PathBuf>,
    /// Depth map to correct (.srtk with sidecar)
    #[arg(long)]
    pub depth: Option<PathBuf>,
    /// Output raster (.srtk); depth maps get a sidecar
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to write the skew-free camera document
    #[arg(long)]
    pub camera_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DepthRecoverArgs {
    /// Reparameterized depth map (.srtk)
    #[arg(long)]
    pub depth: PathBuf,
    /// Depth sidecar document with the projection [default: <depth>.toml]
    #[arg(long)]
    pub proj: Option<PathBuf>,
    /// Output metric depth map (.srtk with sidecar)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Camera documents, one per depth map, in the same order
    #[arg(long = "camera", required = true)]
    pub cameras: Vec<PathBuf>,
    /// Metric depth maps (.srtk)
    #[arg(long = "depth", required = true)]
    pub depths: Vec<PathBuf>,
    /// Depth agreement tolerance in meters [default: 0.25]
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Other views that must agree with a point [default: 1]
    #[arg(long)]
    pub min_consistent: Option<usize>,
    /// Output point set (.ply)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleMeshArgs {
    /// Input mesh (.ply, ASCII)
    #[arg(long)]
    pub mesh: PathBuf,
    /// Minimum spacing between samples in meters [default: 0.25]
    #[arg(long)]
    pub radius: Option<f64>,
    /// Sampling seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use the mesh vertices instead of Poisson-disk samples
    #[arg(long)]
    pub vertices: bool,
    /// Output point set (.ply)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Reconstruction: a mesh or point set (.ply) or a height grid (.hgrid)
    #[arg(long)]
    pub recon: PathBuf,
    /// Ground-truth height grid (.hgrid with sidecar)
    #[arg(long)]
    pub gt: PathBuf,
    /// Grid cell size in meters; must match the ground truth [default: 0.5]
    #[arg(long)]
    pub cell: Option<f64>,
    /// Completeness threshold in meters [default: 1.0]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Alignment search half-width in cells [default: 10]
    #[arg(long)]
    pub search_cells: Option<usize>,
    /// Skip alignment refinement
    #[arg(long)]
    pub no_align: bool,
    /// Poisson-disk radius for mesh input in meters [default: 0.25]
    #[arg(long)]
    pub radius: Option<f64>,
    /// Use mesh vertices instead of Poisson-disk samples
    #[arg(long)]
    pub vertices: bool,
    /// Sampling seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report file (TOML) [default: standard output]
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-cell signed error grid (.hgrid)
    #[arg(long)]
    pub error_grid: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Scene seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Input file; the format follows the extension (.srtk, .png, .pfm, .ply, .hgrid)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output file; the format follows the extension
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Cell size for PLY to .hgrid in meters [default: 0.5]
    #[arg(long)]
    pub cell: Option<f64>,
    /// Treat zero PFM samples as nodata
    #[arg(long)]
    pub zero_nodata: bool,
}

/// Comma-separated list of exactly `N` numbers.
fn parse_list<const N: usize>(text: &str) -> std::result::Result<[f64; N], String> {
    let values: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("{t:?} is not a number")))
        .collect::<std::result::Result<_, _>>()?;
    values.try_into().map_err(|v: Vec<f64>| format!("expected {N} comma-separated values, got {}", v.len()))
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return EXIT_USAGE;
    }
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DOMAIN
        }
    }
}

/// Applies `SATRECON_THREADS` (0 or unset: one thread per core).
fn configure_threads() -> std::result::Result<(), String> {
    let Ok(value) = std::env::var("SATRECON_THREADS") else { return Ok(()) };
    let n: usize = value.trim().parse().map_err(|_| format!("SATRECON_THREADS={value:?} is not a count"))?;
    if n > 0 {
        // a second initialization in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    match &cli.command {
        Command::AoiExtract(a) => aoi_extract(a, &cfg),
        Command::Tonemap(a) => tonemap(a, &cfg),
        Command::Pansharpen(a) => pansharpen(a, &cfg),
        Command::SkewCorrect(a) => skew_correct(a, &cfg),
        Command::DepthRecover(a) => depth_recover(a, &cfg),
        Command::Fuse(a) => fuse(a, &cfg),
        Command::SampleMesh(a) => sample_mesh(a, &cfg),
        Command::Evaluate(a) => evaluate(a, &cfg),
        Command::Synth(a) => synth(a, &cfg),
        Command::Convert(a) => convert_cmd(a, &cfg),
    }
}

fn output<'a>(flag: &'a Option<PathBuf>, cfg: &'a PipelineConfig) -> Result<&'a Path> {
    flag.as_deref()
        .or(cfg.output.as_deref())
        .ok_or_else(|| CliError::InvalidParameter("no output path (--out or `output` in the config)".into()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn is_ext(path: &Path, ext: &str) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn aoi_extract(a: &AoiExtractArgs, cfg: &PipelineConfig) -> Result<()> {
    let meta = SceneMetadata::from_toml_str(&read_text(&a.meta)?)?;
    let threshold = a.cloud_threshold.unwrap_or(cfg.cloud_threshold);
    if meta.cloud_cover > threshold {
        eprintln!("scene {} skipped: cloud cover {} exceeds {threshold}", meta.id, meta.cloud_cover);
        return Ok(());
    }
    let bounds = match (&a.aoi, cfg.aoi) {
        (Some(v), _) => [v[0], v[1], v[2], v[3]],
        (None, Some(v)) => v,
        (None, None) => return Err(CliError::InvalidParameter("no AOI (--aoi or `aoi` in the config)".into())),
    };
    let zone = a.zone.or(cfg.zone).ok_or_else(|| CliError::InvalidParameter("no UTM zone".into()))?;
    let hemisphere = a.hemisphere.or(cfg.hemisphere).ok_or_else(|| CliError::InvalidParameter("no hemisphere".into()))?;
    let aoi = AoiBox::new(bounds[0], bounds[1], bounds[2], bounds[3], zone, hemisphere)?;
    let rpc = meta.rpc_camera()?;
    let height = a.height.unwrap_or(rpc.offsets().height);
    let image = load_raster(&a.image)?;
    let rect = aoi_to_pixel_bbox(&rpc, &aoi, height, image.width(), image.height())?;
    let crop = image.crop(rect.x0, rect.y0, rect.width, rect.height)?;
    save_raster(&crop, output(&a.out, cfg)?)?;
    println!("{} {} {} {}", rect.x0, rect.y0, rect.width, rect.height);
    Ok(())
}

fn tonemap(a: &TonemapArgs, cfg: &PipelineConfig) -> Result<()> {
    let [lo, hi] = a.percentiles.unwrap_or(cfg.percentiles);
    let mapped = tonemap_with(&load_raster(&a.image)?, lo, hi)?;
    let out = output(&a.out, cfg)?;
    if is_ext(out, "png") {
        convert::write_png(&mapped, out)
    } else {
        Ok(save_raster(&mapped, out)?)
    }
}

fn pansharpen(a: &PansharpenArgs, cfg: &PipelineConfig) -> Result<()> {
    let weights = a.weights.unwrap_or(cfg.weights);
    let sharp = pansharpen_brovey(&load_raster(&a.pan)?, &load_raster(&a.msi)?, weights)?;
    Ok(save_raster(&sharp, output(&a.out, cfg)?)?)
}

/// Relative agreement required between a camera document and the projection
/// recorded in a depth sidecar.
const PROJECTION_MATCH_TOL: f64 = 1e-9;

fn check_projection(camera: &FpcCamera, rp: &ReparamProjection) -> Result<()> {
    let p3 = camera.projection_matrix();
    let p4 = rp.p_unnormalized();
    let scale = p3.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dev = (0..3).flat_map(|r| (0..4).map(move |c| (r, c))).fold(0.0f64, |m, (r, c)| m.max((p3[(r, c)] - p4[(r, c)]).abs()));
    if dev > PROJECTION_MATCH_TOL * scale {
        return Err(CliError::InvalidParameter(format!(
            "depth map projection does not match the camera (relative deviation {:e})",
            dev / scale
        )));
    }
    Ok(())
}

fn skew_correct(a: &SkewCorrectArgs, cfg: &PipelineConfig) -> Result<()> {
    let cam_file = read_camera_file(&a.camera)?;
    let camera = cam_file.fpc_camera()?;
    let dec = decompose_skew(&camera.intrinsics)?;
    let skew_free = camera.with_intrinsics(dec.k_s)?;
    let out = output(&a.out, cfg)?;
    eprintln!("skew = {}", dec.shear());
    if let Some(path) = &a.image {
        let image = load_raster(path)?;
        let corrected = if dec.shear() == 0.0 { image } else { skew_correct_raster(&image, &dec.t_sp)? };
        save_raster(&corrected, out)?;
    } else if let Some(path) = &a.depth {
        let (depth, projection) = load_depth_map(path)?;
        check_projection(&camera, &projection)?;
        let view = DepthView { camera, depth, projection };
        let corrected = if dec.shear() == 0.0 { view } else { pipeline::skew_correct_view(&view)? };
        save_depth_map(out, &corrected.depth, &corrected.projection)?;
    }
    if let Some(path) = &a.camera_out {
        let file = CameraFile { fpc: Some(FpcRecord::from(&skew_free)), ..cam_file };
        write_camera_file(path, &file)?;
    }
    Ok(())
}

fn depth_recover(a: &DepthRecoverArgs, cfg: &PipelineConfig) -> Result<()> {
    let (depth, projection) = match &a.proj {
        Some(proj) => {
            let side = DepthSidecar::from_toml_str(&read_text(proj)?)?;
            if side.kind != DepthKind::Reparameterized {
                return Err(CliError::InvalidParameter(format!("{} describes a metric map", proj.display())));
            }
            let dm = DepthMap::new(load_raster(&a.depth)?, side.kind, side.camera_id.clone())?;
            (dm, side.projection()?)
        }
        None => load_depth_map(&a.depth)?,
    };
    let metric = recover_depth_map(&depth, &projection)?;
    Ok(save_depth_map(output(&a.out, cfg)?, &metric, &projection)?)
}

fn fuse(a: &FuseArgs, cfg: &PipelineConfig) -> Result<()> {
    if a.cameras.len() != a.depths.len() {
        return Err(CliError::InvalidParameter(format!(
            "{} cameras for {} depth maps",
            a.cameras.len(),
            a.depths.len()
        )));
    }
    let mut params = cfg.fusion();
    params.tolerance = a.tolerance.unwrap_or(params.tolerance);
    params.min_consistent = a.min_consistent.unwrap_or(params.min_consistent);
    let mut views = Vec::with_capacity(a.depths.len());
    for (cam, depth) in a.cameras.iter().zip(&a.depths) {
        let camera = read_camera_file(cam)?.fpc_camera()?;
        let raster = load_raster(depth)?;
        views.push((camera, DepthMap::new(raster, DepthKind::Metric, "")?));
    }
    let points = pipeline::fuse(&views, &params)?;
    eprintln!("{} points", points.len());
    convert::save_points(output(&a.out, cfg)?, &points)
}

fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(read_ply(BufReader::new(file))?)
}

fn sample_mesh(a: &SampleMeshArgs, cfg: &PipelineConfig) -> Result<()> {
    let mesh = load_mesh(&a.mesh)?;
    let points = if a.vertices {
        vertex_sample(&mesh)
    } else {
        poisson_disk_sample(&mesh, a.radius.unwrap_or(cfg.poisson_radius), a.seed.unwrap_or(cfg.seed))?
    };
    eprintln!("{} points", points.len());
    convert::save_points(output(&a.out, cfg)?, &points)
}

/// Surface samples of a PLY: Poisson-disk samples of its faces, or the
/// vertices for point sets and when `vertices` is set.
pub fn surface_points(path: &Path, vertices: bool, radius: f64, seed: u64) -> Result<Vec<nalgebra::Vector3<f64>>> {
    let mesh = load_mesh(path)?;
    if vertices || mesh.is_empty() {
        Ok(vertex_sample(&mesh))
    } else {
        Ok(poisson_disk_sample(&mesh, radius, seed)?)
    }
}

fn evaluate(a: &EvaluateArgs, cfg: &PipelineConfig) -> Result<()> {
    let gt = load_height_grid(&a.gt)?;
    let cell = a.cell.unwrap_or(cfg.cell);
    if (cell - gt.spec().cell).abs() > 1e-9 * cell {
        return Err(CliError::InvalidParameter(format!("--cell {cell} differs from the ground-truth cell {}", gt.spec().cell)));
    }
    let threshold = a.threshold.unwrap_or(cfg.threshold);
    let search = a.search_cells.unwrap_or(cfg.search_cells);
    let recon = if is_ext(&a.recon, "hgrid") {
        load_height_grid(&a.recon)?
    } else {
        let points = surface_points(
            &a.recon,
            a.vertices,
            a.radius.unwrap_or(cfg.poisson_radius),
            a.seed.unwrap_or(cfg.seed),
        )?;
        rasterize_height(&points, gt.spec())
    };
    let report = pipeline::evaluate_grid(&recon, &gt, threshold, search, !a.no_align)?;
    if let Some(path) = &a.error_grid {
        let filled = fill_holes(&recon);
        save_height_grid(path, &error_grid(&filled, &gt, report.offset)?)?;
    }
    let text = report.to_toml_string()?;
    match &a.report {
        Some(path) => write_text(path, &text),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e)),
    }
}

fn synth(a: &SynthArgs, cfg: &PipelineConfig) -> Result<()> {
    let dir = output(&a.out, cfg)?;
    let scene = generate_synthetic_scene(&cfg.synth, a.seed.unwrap_or(cfg.seed))?;
    scene.write(dir)
}

fn convert_cmd(a: &ConvertArgs, cfg: &PipelineConfig) -> Result<()> {
    let input = a
        .input
        .as_deref()
        .or(cfg.input.as_deref())
        .ok_or_else(|| CliError::InvalidParameter("no input path (--input or `input` in the config)".into()))?;
    let out = a
        .output
        .as_deref()
        .or(cfg.output.as_deref())
        .ok_or_else(|| CliError::InvalidParameter("no output path (--output or `output` in the config)".into()))?;
    let ext = |p: &Path| p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).unwrap_or_default();
    match (ext(input).as_str(), ext(out).as_str()) {
        ("ply", "hgrid") => save_height_grid(out, &convert::ply_to_grid(input, a.cell.unwrap_or(cfg.cell))?)?,
        ("hgrid", "ply") => convert::save_points(out, &convert::grid_to_points(&load_height_grid(input)?))?,
        (src @ ("srtk" | "png" | "pfm"), dst @ ("srtk" | "png" | "pfm")) => {
            let raster: Raster = match src {
                "png" => convert::read_png(input)?,
                "pfm" => convert::read_pfm(input, a.zero_nodata)?,
                _ => load_raster(input)?,
            };
            match dst {
                "png" => convert::write_png(&raster, out)?,
                "pfm" => convert::write_pfm(&raster, out)?,
                _ => save_raster(&raster, out)?,
            }
        }
        (s, d) => return Err(CliError::Format(format!("no conversion from .{s} to .{d}"))),
    }
    Ok(())
}
