//! `taskimg` batch front end.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 I/O or file
//! format error, 4 dimension mismatch, 5 solver failure.

use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use image::{GrayImage, ImageFormat};
use serde_json::json;

use taskimg::io::{read_tensor, write_atomic, write_tensor, Method, RunConfig};
use taskimg::metrics::{
    max_intensity_projection, projection_ssim, relative_energy_error, target_mask, tbr,
    MetricReport,
};
use taskimg::regularizers::SliceAxis;
use taskimg::simulator::{make_phantom, synthesize_echo, Scene};
use taskimg::tasks::TaskId;
use taskimg::{ComplexTensor3, Error};

#[derive(Parser)]
#[command(name = "taskimg", version, about = "Task-oriented 3D radar imaging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a task phantom: noisy echo, ground-truth image and scene JSON.
    Simulate {
        #[arg(long)]
        task: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_echo: Option<PathBuf>,
        #[arg(long)]
        out_truth: Option<PathBuf>,
        /// Defaults to the echo path with a `.scene.json` extension.
        #[arg(long)]
        out_scene: Option<PathBuf>,
    },
    /// Reconstruct an image from an echo.
    Image {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        task: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        echo: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write one max-intensity PNG per axis, a CSV of the
        /// projections and a JSON sidecar next to the output.
        #[arg(long)]
        export_png: bool,
    },
    /// Score an estimate against the ground truth.
    Metrics {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        est: PathBuf,
        /// Point-scatterer scene, required for REE.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        metric: MetricArg,
        /// Geometry source for REE: a run config ...
        #[arg(long)]
        config: Option<PathBuf>,
        /// ... or a task's default geometry.
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Mf,
    Sparse,
    Task,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Mf => Method::Mf,
            MethodArg::Sparse => Method::Sparse,
            MethodArg::Task => Method::Task,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum MetricArg {
    Ree,
    Ssim,
    Tbr,
    All,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Format(_) => 3,
        Error::DimensionMismatch { .. } | Error::InvalidDims(..) => 4,
        Error::Solver { .. } | Error::ProxNonConvergence { .. } | Error::SvdFailure { .. } => 5,
        _ => 2,
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Error> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn required(
    flag: Option<PathBuf>,
    from_config: &Option<PathBuf>,
    name: &str,
) -> Result<PathBuf, Error> {
    flag.or_else(|| from_config.clone()).ok_or_else(|| {
        Error::Config(format!(
            "no {name} path given on the command line or in the config"
        ))
    })
}

fn simulate(
    task: &str,
    config: Option<&Path>,
    out_echo: Option<PathBuf>,
    out_truth: Option<PathBuf>,
    out_scene: Option<PathBuf>,
) -> Result<(), Error> {
    let task: TaskId = task.parse()?;
    let cfg = load_config(config)?;
    let run = cfg.resolve(Some(task))?;
    let echo_path = required(out_echo, &run.paths.echo, "echo")?;
    let truth_path = required(out_truth, &run.paths.truth, "truth")?;
    let scene_path = out_scene
        .or_else(|| run.paths.scene.clone())
        .unwrap_or_else(|| echo_path.with_extension("scene.json"));

    let (mut scene, truth) = make_phantom(task, &run.geometry, run.seed)?;
    scene.snr_db = run.snr_db;
    let echo = synthesize_echo(&scene, &run.geometry)?;

    write_tensor(&echo_path, &echo)?;
    write_tensor(&truth_path, &truth)?;
    write_atomic(&scene_path, scene.to_json()?.as_bytes())?;
    let snr = run.snr_db.map_or("none".to_string(), |s| format!("{s} dB"));
    println!(
        "simulated {task}: dims {:?}, snr {snr}, seed {}",
        echo.dims(),
        run.seed
    );
    Ok(())
}

fn image(
    method: Method,
    task: &str,
    config: Option<&Path>,
    echo: Option<PathBuf>,
    out: Option<PathBuf>,
    export_png: bool,
) -> Result<(), Error> {
    let task: TaskId = task.parse()?;
    let cfg = load_config(config)?;
    let run = cfg.resolve(Some(task))?;
    let echo_path = required(echo, &run.paths.echo, "echo")?;
    let out_path = required(out, &run.paths.out, "output")?;
    let y = read_tensor(&echo_path)?;
    let img = run.run_method(method, &cfg.solver, &y)?;
    if export_png {
        export_projections(&img, &out_path)?;
    }
    write_tensor(&out_path, &img)?;
    println!(
        "imaged {task} with {method:?}: dims {:?}, peak {:.6e}",
        img.dims(),
        img.max_abs()
    );
    Ok(())
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}{suffix}"))
}

/// Writes `<stem>_mip_{x,y,z}.png`, `<stem>_mip.csv` and `<stem>_mip.json`.
///
/// Pixels are `round(255·v / global_max)` where `global_max` is the largest
/// magnitude in the tensor; the sidecar records it.
fn export_projections(img: &ComplexTensor3, out: &Path) -> Result<(), Error> {
    let global_max = img.max_abs();
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["axis", "row", "col", "value"])
        .map_err(csv_error)?;
    let mut entries = Vec::new();
    for (axis, name) in [
        (SliceAxis::X, "x"),
        (SliceAxis::Y, "y"),
        (SliceAxis::Z, "z"),
    ] {
        let mip = max_intensity_projection(img, axis);
        let (rows, cols) = mip.dim();
        let mut pixels = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let v = mip[[r, c]];
                csv.write_record([
                    name.to_string(),
                    r.to_string(),
                    c.to_string(),
                    format!("{v:e}"),
                ])
                .map_err(csv_error)?;
                let level = if global_max > 0.0 {
                    (255.0 * v / global_max).round()
                } else {
                    0.0
                };
                pixels.push(level.clamp(0.0, 255.0) as u8);
            }
        }
        let gray =
            GrayImage::from_raw(cols as u32, rows as u32, pixels).expect("buffer matches size");
        let mut png = Cursor::new(Vec::new());
        gray.write_to(&mut png, ImageFormat::Png)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        let path = sibling(out, &format!("_mip_{name}.png"));
        write_atomic(&path, png.get_ref())?;
        entries.push(json!({
            "axis": name,
            "png": path.file_name().map(|n| n.to_string_lossy().into_owned()),
            "width": cols,
            "height": rows,
        }));
    }
    let csv_bytes = csv
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    let csv_path = sibling(out, "_mip.csv");
    write_atomic(&csv_path, &csv_bytes)?;
    let sidecar = json!({
        "global_max": global_max,
        "mapping": "round(255 * value / global_max), 0 when global_max is 0",
        "projection": "max_intensity",
        "projections": entries,
        "csv": csv_path.file_name().map(|n| n.to_string_lossy().into_owned()),
    });
    write_atomic(
        sibling(out, "_mip.json"),
        serde_json::to_string_pretty(&sidecar)?.as_bytes(),
    )
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn metrics(
    truth: &Path,
    est: &Path,
    scene: Option<&Path>,
    metric: MetricArg,
    config: Option<&Path>,
    task: Option<&str>,
    out: &Path,
) -> Result<(), Error> {
    let wants = |m: MetricArg| metric == m || metric == MetricArg::All;
    if metric == MetricArg::Ree && scene.is_none() {
        return Err(Error::Config("REE needs a point-scatterer --scene".into()));
    }
    let truth = read_tensor(truth)?;
    let est = read_tensor(est)?;
    truth.ensure_same_dims(&est)?;

    let mut report = MetricReport::empty();
    if let (true, Some(scene_path)) = (wants(MetricArg::Ree), scene) {
        let scene = Scene::from_json(&std::fs::read_to_string(scene_path)?)?;
        if metric == MetricArg::Ree || scene.is_point_scene() {
            let task = task.map(str::parse::<TaskId>).transpose()?;
            let cfg = load_config(config)?;
            if task.is_none() && cfg.task.is_none() {
                return Err(Error::Config(
                    "REE needs --config or --task for the voxel grid".into(),
                ));
            }
            let geometry = cfg.resolve(task)?.geometry;
            if geometry.dims() != est.dims() {
                return Err(Error::DimensionMismatch {
                    expected: geometry.dims(),
                    found: est.dims(),
                });
            }
            report.set_ree(relative_energy_error(&est, &scene, &geometry)?);
        }
    }
    if wants(MetricArg::Ssim) {
        report.ssim = Some(projection_ssim(
            &est,
            &truth,
            report.params.projection_axis,
        )?);
    }
    if wants(MetricArg::Tbr) {
        report.tbr_db = Some(tbr(&est, &target_mask(&truth))?);
    }
    write_atomic(out, report.to_json()?.as_bytes())?;

    let mut line = Vec::new();
    if let Some(m) = report.mean_ree {
        line.push(format!("mean REE {:.4}", m));
    }
    if let Some(s) = report.ssim {
        line.push(format!("SSIM {s:.4}"));
    }
    if let Some(t) = report.tbr_db {
        line.push(if t.is_infinite() {
            "TBR inf dB".into()
        } else {
            format!("TBR {t:.2} dB")
        });
    }
    println!("{}", line.join(", "));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            task,
            config,
            out_echo,
            out_truth,
            out_scene,
        } => simulate(&task, config.as_deref(), out_echo, out_truth, out_scene),
        Command::Image {
            method,
            task,
            config,
            echo,
            out,
            export_png,
        } => image(
            method.into(),
            &task,
            config.as_deref(),
            echo,
            out,
            export_png,
        ),
        Command::Metrics {
            truth,
            est,
            scene,
            metric,
            config,
            task,
            out,
        } => metrics(
            &truth,
            &est,
            scene.as_deref(),
            metric,
            config.as_deref(),
            task.as_deref(),
            &out,
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
