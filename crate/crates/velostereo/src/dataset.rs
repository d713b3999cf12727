//! Simulated datasets on disk and glob-based frame loading.

use std::path::{Path, PathBuf};

use velostereo_core::sim::{self, CameraSpec, LidarSpec, NoiseModel, Scene};
use velostereo_core::{CameraFrame, GrayImage, LidarFrame};

use crate::io::{self, FormatError};
use crate::report::{noise_json, GroundTruth};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub setting: u8,
    pub lidar: LidarSpec,
    pub camera: CameraSpec,
    pub frames: usize,
    pub noise: NoiseModel,
    pub seed: u64,
}

/// Files written by [`emit_dataset`], in frame order.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub lidar: Vec<PathBuf>,
    /// Organized clouds; each has a `.pgm` image beside it.
    pub camera: Vec<PathBuf>,
    pub ground_truth: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Core(#[from] velostereo_core::Error),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad glob `{pattern}`: {msg}")]
    Glob { pattern: String, msg: String },
    #[error("glob `{0}` matched no files")]
    NoMatch(String),
}

fn io_error(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn scene_for(spec: &DatasetSpec) -> Result<Scene, DatasetError> {
    let setting = sim::load_setting(spec.setting)?;
    Ok(Scene::for_setting(&setting, spec.lidar, spec.camera)?)
}

pub fn ground_truth(spec: &DatasetSpec, scene: &Scene) -> Result<GroundTruth, DatasetError> {
    let setting = sim::load_setting(spec.setting)?;
    let (c, n) = (scene.board.center, scene.board.normal);
    Ok(GroundTruth {
        setting: spec.setting,
        direction: velostereo_core::Direction::CameraToLidar.as_str().to_string(),
        pose: setting.pose.into(),
        matrix: setting.pose.to_transform().to_homogeneous(),
        lidar: spec.lidar.into(),
        camera: spec.camera.into(),
        noise: noise_json(&spec.noise),
        frames: spec.frames,
        seed: spec.seed,
        board_center: [c.x, c.y, c.z],
        board_normal: [n.x, n.y, n.z],
    })
}

/// Writes `lidar_NNNN.txt`, `camera_NNNN.txt` + `camera_NNNN.pgm` for each
/// frame and `gt.json` into `out`.
pub fn emit_dataset(spec: &DatasetSpec, out: &Path) -> Result<Manifest, DatasetError> {
    let scene = scene_for(spec)?;
    std::fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let mut manifest = Manifest {
        lidar: Vec::with_capacity(spec.frames),
        camera: Vec::with_capacity(spec.frames),
        ground_truth: out.join("gt.json"),
    };
    let mut camera = CameraFrame {
        image: GrayImage::new(0, 0),
        cloud: Vec::new(),
    };
    for k in 0..spec.frames {
        let lidar = sim::simulate_lidar(&scene, &spec.noise, spec.seed, k);
        let lidar_path = out.join(format!("lidar_{k:04}.txt"));
        io::write_lidar_cloud(&lidar_path, &lidar)?;
        sim::simulate_stereo_into(&scene, &spec.noise, spec.seed, k, &mut camera);
        let camera_path = out.join(format!("camera_{k:04}.txt"));
        io::write_camera_frame(&camera_path, &camera)?;
        manifest.lidar.push(lidar_path);
        manifest.camera.push(camera_path);
    }
    let gt = ground_truth(spec, &scene)?;
    let text = serde_json::to_string_pretty(&gt).expect("ground truth serializes");
    std::fs::write(&manifest.ground_truth, text + "\n").map_err(|e| io_error(&manifest.ground_truth, e))?;
    Ok(manifest)
}

/// Paths matching `pattern`, sorted.
pub fn expand_glob(pattern: &str) -> Result<Vec<PathBuf>, DatasetError> {
    let paths = glob::glob(pattern).map_err(|e| DatasetError::Glob {
        pattern: pattern.to_string(),
        msg: e.to_string(),
    })?;
    let mut out = Vec::new();
    for p in paths {
        out.push(p.map_err(|e| DatasetError::Glob {
            pattern: pattern.to_string(),
            msg: e.to_string(),
        })?);
    }
    if out.is_empty() {
        return Err(DatasetError::NoMatch(pattern.to_string()));
    }
    out.sort();
    Ok(out)
}

pub fn load_lidar_frames(pattern: &str) -> Result<Vec<LidarFrame>, DatasetError> {
    expand_glob(pattern)?
        .iter()
        .map(|p| io::read_lidar_cloud(p).map_err(DatasetError::from))
        .collect()
}

pub fn load_camera_frames(pattern: &str) -> Result<Vec<CameraFrame>, DatasetError> {
    expand_glob(pattern)?
        .iter()
        .map(|p| io::read_camera_frame(p).map_err(DatasetError::from))
        .collect()
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_error(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
}
