//! JSON documents: simulator ground truth and calibration results.

use serde::{Deserialize, Serialize};
use velostereo_core::metrics::{errors, Direction, ErrorPair, TaggedPose};
use velostereo_core::sim::{CameraSpec, LidarSpec, NoiseModel, StereoNoise};
use velostereo_core::{CalibrationResult, Point3, Pose6, RigidTransform};

use crate::config::FileConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseJson {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl From<Pose6> for PoseJson {
    fn from(p: Pose6) -> Self {
        Self {
            tx: p.tx,
            ty: p.ty,
            tz: p.tz,
            roll: p.roll,
            pitch: p.pitch,
            yaw: p.yaw,
        }
    }
}

impl From<PoseJson> for Pose6 {
    fn from(p: PoseJson) -> Self {
        Pose6::new(p.tx, p.ty, p.tz, p.roll, p.pitch, p.yaw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarSpecJson {
    pub layers: usize,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub azimuth_step_deg: f64,
    pub max_range: f64,
}

impl From<LidarSpec> for LidarSpecJson {
    fn from(s: LidarSpec) -> Self {
        Self {
            layers: s.layers,
            elevation_min_deg: s.elevation_min_deg,
            elevation_max_deg: s.elevation_max_deg,
            azimuth_step_deg: s.azimuth_step_deg,
            max_range: s.max_range,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSpecJson {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub baseline: f64,
}

impl From<CameraSpec> for CameraSpecJson {
    fn from(s: CameraSpec) -> Self {
        Self {
            width: s.width,
            height: s.height,
            focal: s.focal,
            baseline: s.baseline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseJson {
    pub factor: f64,
    pub sigma_lidar: f64,
    pub sigma_camera: f64,
    pub stereo: String,
}

pub fn stereo_noise_name(n: StereoNoise) -> &'static str {
    match n {
        StereoNoise::Depth => "depth",
        StereoNoise::DepthDependent => "depth_dependent",
        StereoNoise::Intensity => "intensity",
    }
}

pub fn parse_stereo_noise(s: &str) -> Option<StereoNoise> {
    match s {
        "depth" => Some(StereoNoise::Depth),
        "depth_dependent" | "depth-dependent" => Some(StereoNoise::DepthDependent),
        "intensity" => Some(StereoNoise::Intensity),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub setting: u8,
    pub direction: String,
    pub pose: PoseJson,
    pub matrix: [[f64; 4]; 4],
    pub lidar: LidarSpecJson,
    pub camera: CameraSpecJson,
    pub noise: NoiseJson,
    pub frames: usize,
    pub seed: u64,
    /// Board center and normal in the lidar frame.
    pub board_center: [f64; 3],
    pub board_normal: [f64; 3],
}

impl GroundTruth {
    pub fn tagged_pose(&self) -> Result<TaggedPose, ReportError> {
        tagged(&self.direction, self.pose)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("unknown direction tag `{0}`")]
    UnknownDirection(String),
    #[error(transparent)]
    Core(#[from] velostereo_core::Error),
}

fn tagged(direction: &str, pose: PoseJson) -> Result<TaggedPose, ReportError> {
    let direction = Direction::parse(direction).ok_or_else(|| ReportError::UnknownDirection(direction.to_string()))?;
    Ok(TaggedPose {
        pose: pose.into(),
        direction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountsJson {
    pub lidar: usize,
    pub camera: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub direction: String,
    pub pose: PoseJson,
    pub matrix: [[f64; 4]; 4],
    pub rms: f64,
    pub frames_used: CountsJson,
    pub frames_total: CountsJson,
    /// Labeled reference points (top-left, top-right, bottom-left,
    /// bottom-right) of each sensor in its own frame.
    pub reference_lidar: [[f64; 3]; 4],
    pub reference_camera: [[f64; 3]; 4],
    pub translation_stage: [f64; 3],
    pub icp_iterations: usize,
    pub config: FileConfig,
}

fn xyz(p: &Point3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

impl ResultFile {
    pub fn new(res: &CalibrationResult, config: FileConfig) -> Self {
        let d = &res.diagnostics;
        Self {
            direction: Direction::CameraToLidar.as_str().to_string(),
            pose: res.pose.into(),
            matrix: res.transform.to_homogeneous(),
            rms: res.rms,
            frames_used: CountsJson {
                lidar: res.frames_used.lidar,
                camera: res.frames_used.camera,
            },
            frames_total: CountsJson {
                lidar: res.frames_total.lidar,
                camera: res.frames_total.camera,
            },
            reference_lidar: d.reference_lidar.as_array().map(|p| xyz(&p)),
            reference_camera: d.reference_camera.as_array().map(|p| xyz(&p)),
            translation_stage: [d.translation_stage.x, d.translation_stage.y, d.translation_stage.z],
            icp_iterations: d.icp_iterations,
            config,
        }
    }

    pub fn tagged_pose(&self) -> Result<TaggedPose, ReportError> {
        tagged(&self.direction, self.pose)
    }

    pub fn transform(&self) -> RigidTransform {
        RigidTransform::from_homogeneous(&self.matrix)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub e_t: f64,
    pub e_r: f64,
}

/// Errors of a result against ground truth; the direction tags must agree.
pub fn evaluate(result: &ResultFile, gt: &GroundTruth) -> Result<Evaluation, ReportError> {
    let ErrorPair { e_t, e_r } = errors(&result.tagged_pose()?, &gt.tagged_pose()?)?;
    Ok(Evaluation { e_t, e_r })
}

pub fn noise_json(n: &NoiseModel) -> NoiseJson {
    NoiseJson {
        factor: n.factor,
        sigma_lidar: n.sigma_lidar,
        sigma_camera: n.sigma_camera,
        stereo: stereo_noise_name(n.stereo).to_string(),
    }
}
