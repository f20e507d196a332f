//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::forward::{simulate_confocal, simulate_sinogram, Transient, TransientSinogram};
use crate::geometry::CartesianPoint;
use crate::io::png::{emit_png, Normalization};
use crate::io::scene::{Scan, SceneFile};
use crate::io::tensor::{read_tensor, tensor_image, write_tensor, Measurement, Tensor};
use crate::localize::{detections_from_volume, localize_volume, trilaterate, LocalizeConfig};
use crate::metrics::{localization_error, normalize_image, ssim, EvalReport};
use crate::radon2d::{
    auto_focus, build_plane_matrix, crop_sinogram, inverse_radon, solve_plane, undistort, RadonFilter, SolveParams,
    PLANE_BUDGET_BYTES,
};
use crate::recon3d::{admm_reconstruct, admm_reconstruct_confocal, AdmmParams, LctOperator, SamplingMask};

#[derive(Debug, Parser)]
#[command(name = "c2nlos", version, about = "Circular confocal NLOS simulation and reconstruction")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Seed for every random draw of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON config with optional `localize`, `admm` and `solve` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Manifest path (defaults to `<output>.manifest.json`).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a circular or grid confocal scan of a scene file.
    Simulate(SimulateArgs),
    /// Localize K scatterers by Hough voting.
    Localize(LocalizeArgs),
    /// Inverse Radon image of a sinogram.
    Radon2d(Radon2dArgs),
    /// Regularized linear inversion for a plane at known depth.
    Invert2d(Invert2dArgs),
    /// 3D volume reconstruction by linearized ADMM.
    Recon3d(Recon3dArgs),
    /// Locate a point from three peak times and scan points.
    Trilaterate(TrilaterateArgs),
    /// Compare images (SSIM) or detections against ground truth.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Resample onto a v axis with this many bins.
    #[arg(long)]
    v_bins: Option<usize>,
    /// Photons per unit intensity; enables Poisson noise.
    #[arg(long)]
    noise_scale: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    dark_rate: f64,
}

#[derive(Debug, Args)]
struct LocalizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(short, long, default_value_t = 1)]
    k: usize,
    /// Detections CSV (x,y,z,score,alpha,beta,gamma).
    #[arg(long)]
    out: PathBuf,
    /// Parameter-space slice (max over amplitude) as PNG.
    #[arg(long)]
    png: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FilterArg {
    None,
    RamLak,
}

#[derive(Debug, Args)]
struct Radon2dArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Raw image tensor.
    #[arg(long)]
    raw: Option<PathBuf>,
    /// Focus radius in meters (automatic when absent).
    #[arg(long)]
    focus_r: Option<f64>,
    #[arg(long, value_enum, default_value_t = FilterArg::None)]
    filter: FilterArg,
    #[arg(long, default_value_t = 0.0)]
    undistort_strength: f64,
    #[arg(long, default_value_t = 360)]
    size: usize,
}

#[derive(Debug, Args)]
struct Invert2dArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    raw: Option<PathBuf>,
    #[arg(long)]
    depth: f64,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    /// Plane half width in meters.
    #[arg(long, default_value_t = 0.5)]
    half_width: f64,
    /// Time axis of the original capture, `num_bins` over `max_range` meters.
    #[arg(long)]
    time_bins: usize,
    #[arg(long)]
    max_range: f64,
}

#[derive(Debug, Args)]
struct Recon3dArgs {
    #[arg(long)]
    input: PathBuf,
    /// Volume tensor output.
    #[arg(long)]
    out: PathBuf,
    /// Prefix for front/top/side maximum-intensity PNGs.
    #[arg(long)]
    mip_prefix: Option<PathBuf>,
    /// Wall grid for circular input: `n x n` nodes over `[-half_width, half_width]^2`.
    #[arg(long, default_value_t = 64)]
    grid_n: usize,
    #[arg(long)]
    half_width: Option<f64>,
    /// Time axis of the original capture, `num_bins` over `max_range` meters.
    #[arg(long)]
    time_bins: Option<usize>,
    #[arg(long)]
    max_range: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    lambda_s: Option<f64>,
    #[arg(long)]
    lambda_tv: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Args)]
struct TrilaterateArgs {
    /// Peak times in seconds, `t1,t2,t3`.
    #[arg(long, value_delimiter = ',', required = true)]
    times: Vec<f64>,
    /// Wall points `x,y` separated by `;`.
    #[arg(long)]
    points: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[arg(long, requires = "reference")]
    image: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, requires = "truth")]
    detections: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    localize: Option<LocalizeConfig>,
    admm: Option<AdmmParams>,
    solve: Option<SolveParams>,
}

struct Run {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    report: EvalReport,
    extra: BTreeMap<String, Value>,
}

impl Run {
    fn new() -> Self {
        Self { inputs: Vec::new(), outputs: Vec::new(), report: EvalReport::default(), extra: BTreeMap::new() }
    }
}

/// Parses `argv` (including the program name), runs, and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn execute(cli: &Cli, argv: &[std::ffi::OsString]) -> Result<()> {
    let config: ConfigFile = match &cli.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => ConfigFile::default(),
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut run = Run::new();
    if let Some(p) = &cli.config {
        run.inputs.push(p.clone());
    }
    let start = Instant::now();
    pool.install(|| dispatch(cli, &config, &mut run))?;
    run.report.timings.insert("total".into(), start.elapsed().as_secs_f64());

    let manifest_path = cli.manifest.clone().or_else(|| {
        run.outputs.first().map(|o| {
            let mut s = o.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    });
    if let Some(path) = manifest_path {
        let manifest = json!({
            "program": "c2nlos",
            "version": env!("CARGO_PKG_VERSION"),
            "argv": argv.iter().map(|a| a.to_string_lossy().into_owned()).collect::<Vec<_>>(),
            "seed": cli.seed,
            "rng": "ChaCha8",
            "threads": rayon::current_num_threads().max(cli.threads.unwrap_or(0)),
            "config": config,
            "inputs": run.inputs,
            "outputs": run.outputs,
            "timings": run.report.timings,
            "results": run.extra,
        });
        std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    }
    Ok(())
}

fn load_measurement(path: &Path) -> Result<Measurement> {
    Measurement::try_from(&read_tensor(path)?)
}

fn load_sinogram(path: &Path) -> Result<TransientSinogram> {
    match load_measurement(path)? {
        Measurement::Sinogram(s) => Ok(s),
        Measurement::Confocal(_) => Err(Error::InvalidInput(format!("{} is a grid scan, expected a sinogram", path.display()))),
    }
}

fn dispatch(cli: &Cli, config: &ConfigFile, run: &mut Run) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli.seed, a, run),
        Command::Localize(a) => localize_cmd(config, a, run),
        Command::Radon2d(a) => radon_cmd(a, run),
        Command::Invert2d(a) => invert_cmd(config, a, run),
        Command::Recon3d(a) => recon_cmd(config, a, run),
        Command::Trilaterate(a) => trilaterate_cmd(a, run),
        Command::Metrics(a) => metrics_cmd(a, run),
    }
}

fn simulate(seed: u64, a: &SimulateArgs, run: &mut Run) -> Result<()> {
    run.inputs.push(a.scene.clone());
    let (file, scene) = SceneFile::load(&a.scene)?;
    let time = file.time_axis()?;
    let tensor = run.report.time("simulate", || -> Result<Tensor> {
        Ok(match file.scan()? {
            Scan::Circle(circle) => {
                let mut s = simulate_sinogram(&scene, &circle, &time)?;
                if let Some(scale) = a.noise_scale {
                    s = s.add_poisson_noise(scale, a.dark_rate, seed)?;
                }
                if let Some(n) = a.v_bins {
                    s = s.resample_to_v_bins(n)?;
                }
                Tensor::from(&s)
            }
            Scan::Grid(grid) => {
                let mut c = simulate_confocal(&scene, &grid, &time)?;
                if let Some(scale) = a.noise_scale {
                    c = c.add_poisson_noise(scale, a.dark_rate, seed)?;
                }
                if let Some(n) = a.v_bins {
                    c = c.resample_to_v_bins(n)?;
                }
                Tensor::from(&c)
            }
        })
    })?;
    write_tensor(&tensor, &a.out)?;
    run.outputs.push(a.out.clone());
    run.extra.insert("dims".into(), json!(tensor.header.dims));
    Ok(())
}

fn localize_cmd(config: &ConfigFile, a: &LocalizeArgs, run: &mut Run) -> Result<()> {
    run.inputs.push(a.input.clone());
    let sino = load_sinogram(&a.input)?;
    let cfg = config.localize.unwrap_or_default();
    let (vol, _) = run.report.time("hough", || localize_volume(&sino, &cfg))?;
    let dets = run.report.time("peaks", || detections_from_volume(&vol, a.k, &cfg))?;
    let mut csv = String::from("x,y,z,score,alpha,beta,gamma\n");
    for d in &dets {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            d.position.x, d.position.y, d.position.z, d.score, d.params.amplitude, d.params.phase, d.params.offset
        );
    }
    std::fs::write(&a.out, csv)?;
    run.outputs.push(a.out.clone());
    if let Some(png) = &a.png {
        let slice = vol.data.fold_axis(ndarray::Axis(0), f64::NEG_INFINITY, |&x, &y| x.max(y));
        emit_png(&slice, Normalization::Minmax, png)?;
        run.outputs.push(png.clone());
    }
    run.extra.insert("detections".into(), json!(dets));
    Ok(())
}

fn radon_cmd(a: &Radon2dArgs, run: &mut Run) -> Result<()> {
    run.inputs.push(a.input.clone());
    let sino = load_sinogram(&a.input)?.into_v()?;
    let r = match a.focus_r {
        Some(r) => r,
        None => auto_focus(&sino)?,
    };
    let filter = match a.filter {
        FilterArg::None => RadonFilter::None,
        FilterArg::RamLak => RadonFilter::RamLak,
    };
    let img = run.report.time("radon", || inverse_radon(&crop_sinogram(&sino, r)?, filter, a.size))?;
    let img = undistort(&img, a.undistort_strength)?;
    emit_png(&img.data, Normalization::Minmax, &a.out)?;
    run.outputs.push(a.out.clone());
    if let Some(raw) = &a.raw {
        write_tensor(&Tensor::from(&img), raw)?;
        run.outputs.push(raw.clone());
    }
    run.extra.insert("focus_radius".into(), json!(r));
    Ok(())
}

fn invert_cmd(config: &ConfigFile, a: &Invert2dArgs, run: &mut Run) -> Result<()> {
    run.inputs.push(a.input.clone());
    let sino = load_sinogram(&a.input)?;
    let time = crate::forward::TimeAxis::for_range(a.max_range, a.time_bins)?;
    let sino = match sino.axis.as_time() {
        Some(_) => sino.resample_to_v()?,
        None => sino,
    };
    let v_axis = *sino.v_axis()?;
    let mut params = config.solve.unwrap_or_default();
    if let Some(l) = a.lambda {
        params.lambda = l;
    }
    let sys = run.report.time("build", || {
        build_plane_matrix(a.depth, &sino.circle, a.resolution, a.half_width, &time, &v_axis, PLANE_BUDGET_BYTES)
    })?;
    let sol = run.report.time("solve", || solve_plane(&sino, &sys, &params))?;
    if !sol.converged {
        eprintln!("warning: CG stopped at relative residual {:.3e} after {} iterations", sol.residual, sol.iterations);
    }
    emit_png(&sol.image.data, Normalization::Minmax, &a.out)?;
    run.outputs.push(a.out.clone());
    if let Some(raw) = &a.raw {
        let mut img = sol.image.clone();
        img.data = sol.raw.clone();
        write_tensor(&Tensor::from(&img), raw)?;
        run.outputs.push(raw.clone());
    }
    run.extra.insert("converged".into(), json!(sol.converged));
    run.extra.insert("iterations".into(), json!(sol.iterations));
    run.extra.insert("residual".into(), json!(sol.residual));
    Ok(())
}

fn recon_cmd(config: &ConfigFile, a: &Recon3dArgs, run: &mut Run) -> Result<()> {
    run.inputs.push(a.input.clone());
    let mut params = config.admm.unwrap_or_default();
    if let Some(v) = a.mu {
        params.mu = v;
    }
    if a.nu.is_some() {
        params.nu = a.nu;
    }
    if let Some(v) = a.lambda_s {
        params.lambda_s = v;
    }
    if let Some(v) = a.lambda_tv {
        params.lambda_tv = v;
    }
    if let Some(v) = a.iters {
        params.max_iters = v;
    }
    if let Some(v) = a.tol {
        params.tol = v;
    }
    let time = match (a.time_bins, a.max_range) {
        (Some(n), Some(r)) => Some(crate::forward::TimeAxis::for_range(r, n)?),
        (None, None) => None,
        _ => return Err(Error::InvalidInput("--time-bins and --max-range go together".into())),
    };
    let rec = match load_measurement(&a.input)? {
        Measurement::Sinogram(s) => {
            let s = s.into_v()?;
            let hw = a.half_width.unwrap_or(s.circle.radius * 1.05);
            let grid = crate::forward::WallGrid::centered(a.grid_n, hw);
            let v = *s.v_axis()?;
            let op = match time {
                Some(t) => LctOperator::for_time_axis(&grid, &t, &v, true)?,
                None => LctOperator::new(&grid, &v, true)?,
            };
            let mask = SamplingMask::circle(&grid, &s.circle)?;
            run.report.time("admm", || admm_reconstruct(&s, &op, &mask, &params))?
        }
        Measurement::Confocal(c) => {
            let c = match c.axis.as_time() {
                Some(_) => c.resample_to_v()?,
                None => c,
            };
            let v = *c.axis.as_v().expect("v axis");
            let op = match time {
                Some(t) => LctOperator::for_time_axis(&c.grid, &t, &v, true)?,
                None => LctOperator::new(&c.grid, &v, true)?,
            };
            run.report.time("admm", || admm_reconstruct_confocal(&c, &op, &params))?
        }
    };
    write_tensor(&Tensor::from(&rec.volume), &a.out)?;
    run.outputs.push(a.out.clone());
    if let Some(prefix) = &a.mip_prefix {
        for (name, axis) in [("front", 0), ("top", 1), ("side", 2)] {
            let mut s = prefix.as_os_str().to_owned();
            s.push(format!("_{name}.png"));
            let p = PathBuf::from(s);
            emit_png(&rec.volume.max_projection(axis), Normalization::Minmax, &p)?;
            run.outputs.push(p);
        }
    }
    run.extra.insert("iterations".into(), json!(rec.result.state.iteration));
    run.extra.insert("converged".into(), json!(rec.result.converged));
    run.extra.insert("measurement_residual".into(), json!(rec.result.measurement_residual));
    Ok(())
}

fn parse_points(s: &str) -> Result<[CartesianPoint; 3]> {
    let pts: Vec<CartesianPoint> = s
        .split(';')
        .map(|p| {
            let v: Vec<f64> = p
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| Error::InvalidInput(format!("bad coordinate {x:?}: {e}"))))
                .collect::<Result<_>>()?;
            match v.as_slice() {
                [x, y] => Ok(CartesianPoint::new(*x, *y, 0.0)),
                _ => Err(Error::InvalidInput(format!("point {p:?} must be `x,y`"))),
            }
        })
        .collect::<Result<_>>()?;
    pts.try_into().map_err(|_| Error::InvalidInput("exactly three points are required".into()))
}

fn trilaterate_cmd(a: &TrilaterateArgs, run: &mut Run) -> Result<()> {
    let pts = parse_points(&a.points)?;
    let times: [f64; 3] = a.times.clone().try_into().map_err(|_| Error::InvalidInput("need three times".into()))?;
    let p = trilaterate(times, pts)?;
    let out = serde_json::to_string(&p)?;
    println!("{out}");
    if let Some(path) = &a.out {
        std::fs::write(path, &out)?;
        run.outputs.push(path.clone());
    }
    run.extra.insert("position".into(), json!(p));
    Ok(())
}

fn read_points_csv(path: &Path) -> Result<Vec<CartesianPoint>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let parsed: std::result::Result<Vec<f64>, _> = cols.iter().take(3).map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() == 3 => out.push(CartesianPoint::new(v[0], v[1], v[2])),
            _ if i == 0 => continue,
            _ => return Err(Error::InvalidInput(format!("{}:{}: expected x,y,z", path.display(), i + 1))),
        }
    }
    Ok(out)
}

fn metrics_cmd(a: &MetricsArgs, run: &mut Run) -> Result<()> {
    let mut report = EvalReport::default();
    if let (Some(img), Some(refp)) = (&a.image, &a.reference) {
        run.inputs.extend([img.clone(), refp.clone()]);
        let x: Array2<f64> = tensor_image(&read_tensor(img)?)?;
        let y: Array2<f64> = tensor_image(&read_tensor(refp)?)?;
        report.ssim = Some(ssim(&normalize_image(&x), &normalize_image(&y))?);
    }
    if let (Some(det), Some(truth)) = (&a.detections, &a.truth) {
        run.inputs.extend([det.clone(), truth.clone()]);
        report.mean_abs_error = Some(localization_error(&read_points_csv(det)?, &read_points_csv(truth)?)?);
    }
    if report.ssim.is_none() && report.mean_abs_error.is_none() {
        return Err(Error::InvalidInput("give --image/--reference or --detections/--truth".into()));
    }
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(out) = &a.out {
        std::fs::write(out, &text)?;
        run.outputs.push(out.clone());
    }
    run.extra.insert("report".into(), serde_json::to_value(&report)?);
    Ok(())
}
