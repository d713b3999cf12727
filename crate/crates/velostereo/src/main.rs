use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use velostereo::config::FileConfig;
use velostereo::dataset::{self, DatasetSpec};
use velostereo::report::{self, ResultFile};
use velostereo::sweep::{self, SweepKind, SweepSpec};
use velostereo::Runner;
use velostereo_core::registration::calibrate;
use velostereo_core::sim::{CameraSpec, LidarSpec, NoiseModel};

#[derive(Parser)]
#[command(name = "velostereo", version, about = "Lidar-stereo extrinsic calibration with a four-hole target")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Window,
    Noise,
    Device,
}

#[derive(clap::Args, Clone, Copy)]
struct CameraArgs {
    /// Image width in pixels.
    #[arg(long, default_value_t = 1280)]
    width: usize,
    /// Image height in pixels.
    #[arg(long, default_value_t = 960)]
    height: usize,
    /// Focal length in pixels.
    #[arg(long, default_value_t = 1000.0)]
    focal: f64,
    /// Stereo baseline in meters.
    #[arg(long, default_value_t = 0.12)]
    baseline: f64,
}

impl CameraArgs {
    fn spec(&self) -> CameraSpec {
        CameraSpec {
            width: self.width,
            height: self.height,
            focal: self.focal,
            baseline: self.baseline,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a simulated dataset (lidar clouds, stereo clouds + images, gt.json).
    Simulate {
        #[arg(long)]
        setting: u8,
        /// Lidar layer count: 16, 32 or 64.
        #[arg(long, default_value_t = 16)]
        device: usize,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        /// Noise multiplier K.
        #[arg(long, default_value_t = 1.0)]
        noise_factor: f64,
        /// Stereo noise model: depth, depth_dependent or intensity.
        #[arg(long, default_value = "depth")]
        stereo_noise: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        camera: CameraArgs,
    },
    /// Estimate the camera-to-lidar extrinsics from recorded frames.
    Calibrate {
        #[arg(long)]
        lidar_glob: String,
        #[arg(long)]
        camera_glob: String,
        /// TOML file overriding thresholds.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for result.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a result against ground truth.
    Evaluate {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Optional JSON output file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an error sweep and write CSV files.
    Sweep {
        #[arg(long, value_enum)]
        kind: Kind,
        /// Comma-separated setting ids.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9")]
        settings: Vec<u8>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        /// Window sizes of the window sweep.
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,20,30,40")]
        windows: Vec<usize>,
        /// Frames per run of the noise and device sweeps.
        #[arg(long, default_value_t = 30)]
        frames: usize,
        /// Output CSV; quartiles go to `<stem>_quartiles.csv` beside it.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        camera: CameraArgs,
    },
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn lidar_spec(layers: usize) -> Result<LidarSpec> {
    LidarSpec::from_layers(layers).ok_or_else(|| anyhow!("unknown device with {layers} layers (use 16, 32 or 64)"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            setting,
            device,
            frames,
            noise_factor,
            stereo_noise,
            seed,
            out,
            camera,
        } => {
            let mut noise = NoiseModel::with_factor(noise_factor);
            noise.stereo = report::parse_stereo_noise(&stereo_noise)
                .ok_or_else(|| anyhow!("unknown stereo noise model `{stereo_noise}`"))?;
            let spec = DatasetSpec {
                setting,
                lidar: lidar_spec(device)?,
                camera: camera.spec(),
                frames,
                noise,
                seed,
            };
            let manifest = dataset::emit_dataset(&spec, &out).context("simulation")?;
            println!(
                "wrote {} lidar and {} camera frames to {}",
                manifest.lidar.len(),
                manifest.camera.len(),
                out.display()
            );
        }
        Command::Calibrate {
            lidar_glob,
            camera_glob,
            config,
            out,
        } => {
            let file_config = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("config: reading {}", p.display()))?;
                    FileConfig::parse(&text).with_context(|| format!("config: {}", p.display()))?
                }
                None => FileConfig::default(),
            };
            let cfg = file_config.to_calibration().context("config")?;
            let lidar = dataset::load_lidar_frames(&lidar_glob).context("loading lidar frames")?;
            let camera = dataset::load_camera_frames(&camera_glob).context("loading camera frames")?;
            let result = calibrate(&lidar, &camera, &cfg).map_err(|e| anyhow!("calibration failed: {e}"))?;
            let file = ResultFile::new(&result, file_config);
            let path = out.join("result.json");
            write_json(&path, &file)?;
            let p = result.pose;
            println!(
                "t = ({:.4}, {:.4}, {:.4}) m, rpy = ({:.4}, {:.4}, {:.4}) rad, frames {}/{} lidar {}/{} camera -> {}",
                p.tx,
                p.ty,
                p.tz,
                p.roll,
                p.pitch,
                p.yaw,
                result.frames_used.lidar,
                result.frames_total.lidar,
                result.frames_used.camera,
                result.frames_total.camera,
                path.display()
            );
        }
        Command::Evaluate { result, gt, out } => {
            let r: ResultFile = read_json(&result).context("evaluation: result")?;
            let g = dataset::load_ground_truth(&gt).context("evaluation: ground truth")?;
            let e = report::evaluate(&r, &g).context("evaluation")?;
            println!("e_t = {:.6} m, e_r = {:.6} rad", e.e_t, e.e_r);
            if let Some(path) = out {
                write_json(&path, &e)?;
            }
        }
        Command::Sweep {
            kind,
            settings,
            seeds,
            windows,
            frames,
            out,
            camera,
        } => {
            let mut spec = SweepSpec::new(match kind {
                Kind::Window => SweepKind::Window,
                Kind::Noise => SweepKind::Noise,
                Kind::Device => SweepKind::Device,
            });
            spec.settings = settings;
            spec.seeds = seeds;
            spec.windows = windows;
            spec.frames = frames;
            spec.camera = camera.spec();
            let report = sweep::run_sweep(&spec, &mut Runner::default()).context("sweep")?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            std::fs::write(&out, report.to_csv()).with_context(|| format!("writing {}", out.display()))?;
            let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
            let quartiles = out.with_file_name(format!("{stem}_quartiles.csv"));
            std::fs::write(&quartiles, report.quartiles_csv()).with_context(|| format!("writing {}", quartiles.display()))?;
            let missing = report.rows.iter().filter(|r| r.e_t.is_none()).count();
            println!(
                "{} runs ({missing} failed) -> {}, {}",
                report.rows.len(),
                out.display(),
                quartiles.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
