//! Flat `key = value` configuration file (TOML syntax). Absent keys keep
//! their defaults.

use serde::{Deserialize, Serialize};
use velostereo_core::lidar::PassthroughBounds;
use velostereo_core::registration::Association;
use velostereo_core::{CalibrationConfig, TargetModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    /// RANSAC consensus band of both plane fits, meters.
    pub delta_plane: f64,
    /// Maximum tilt of the target plane from vertical, radians.
    pub alpha_plane: f64,
    pub delta_inliers_l: f64,
    pub delta_inliers_c: f64,
    pub delta_discont_l: f64,
    pub delta_cluster: f64,
    pub tau_sobel_c: u16,
    pub board_w: f64,
    pub board_h: f64,
    pub hole_r: f64,
    pub sep_w: f64,
    pub sep_h: f64,
    pub geometry_tolerance: f64,
    pub passthrough_min: [f64; 3],
    pub passthrough_max: [f64; 3],
    pub ransac_max_iterations: usize,
    pub plane_min_inliers_l: usize,
    pub plane_min_inliers_c: usize,
    pub circle_threshold_l: f64,
    pub circle_threshold_c: f64,
    pub circle_min_inliers_l: usize,
    pub circle_min_inliers_c: usize,
    pub ring_min_points: usize,
    pub ring_max_points: usize,
    pub cluster_min_fraction: f64,
    pub cluster_max_fraction: f64,
    pub border_removal: bool,
    /// `labeled` or `closest_point`.
    pub icp_association: String,
    pub icp_max_iterations: usize,
    pub icp_tolerance: f64,
    pub seed: u64,
}

impl Default for FileConfig {
    fn default() -> Self {
        Self::from_calibration(&CalibrationConfig::default())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config: {0}")]
    Invalid(String),
}

impl FileConfig {
    pub fn from_calibration(c: &CalibrationConfig) -> Self {
        Self {
            delta_plane: c.lidar.plane.ransac.distance_threshold,
            alpha_plane: c.lidar.plane.alpha_max,
            delta_inliers_l: c.lidar.plane.inlier_band,
            delta_inliers_c: c.stereo.plane.inlier_band,
            delta_discont_l: c.lidar.delta_discont,
            delta_cluster: c.delta_cluster,
            tau_sobel_c: c.stereo.tau_sobel,
            board_w: c.target.board_w,
            board_h: c.target.board_h,
            hole_r: c.target.hole_r,
            sep_w: c.target.sep_w,
            sep_h: c.target.sep_h,
            geometry_tolerance: c.geometry_tolerance,
            passthrough_min: c.lidar.bounds.min,
            passthrough_max: c.lidar.bounds.max,
            ransac_max_iterations: c.lidar.plane.ransac.max_iterations,
            plane_min_inliers_l: c.lidar.plane.ransac.min_inliers,
            plane_min_inliers_c: c.stereo.plane.ransac.min_inliers,
            circle_threshold_l: c.lidar_circles.ransac.distance_threshold,
            circle_threshold_c: c.stereo_circles.ransac.distance_threshold,
            circle_min_inliers_l: c.lidar_circles.ransac.min_inliers,
            circle_min_inliers_c: c.stereo_circles.ransac.min_inliers,
            ring_min_points: c.lidar.ring_gate.min_points,
            ring_max_points: c.lidar.ring_gate.max_points,
            cluster_min_fraction: c.cluster_window.min_fraction,
            cluster_max_fraction: c.cluster_window.max_fraction,
            border_removal: c.stereo.border.is_some(),
            icp_association: match c.icp.association {
                Association::Labeled => "labeled",
                Association::ClosestPoint => "closest_point",
            }
            .to_string(),
            icp_max_iterations: c.icp.max_iterations,
            icp_tolerance: c.icp.tolerance,
            seed: c.seed,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: FileConfig = toml::from_str(text)?;
        cfg.to_calibration()?;
        Ok(cfg)
    }

    pub fn to_calibration(&self) -> Result<CalibrationConfig, ConfigError> {
        let mut c = CalibrationConfig::default();
        c.target = TargetModel {
            board_w: self.board_w,
            board_h: self.board_h,
            hole_r: self.hole_r,
            sep_w: self.sep_w,
            sep_h: self.sep_h,
        };
        c.target.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let bounds = PassthroughBounds::new(self.passthrough_min, self.passthrough_max);
        if !bounds.is_valid() {
            return Err(ConfigError::Invalid("passthrough_min must not exceed passthrough_max".into()));
        }
        for plane in [&mut c.lidar.plane, &mut c.stereo.plane] {
            plane.ransac.distance_threshold = self.delta_plane;
            plane.ransac.max_iterations = self.ransac_max_iterations;
            plane.alpha_max = self.alpha_plane;
        }
        c.lidar.plane.inlier_band = self.delta_inliers_l;
        c.stereo.plane.inlier_band = self.delta_inliers_c;
        c.lidar.plane.ransac.min_inliers = self.plane_min_inliers_l;
        c.stereo.plane.ransac.min_inliers = self.plane_min_inliers_c;
        c.lidar.bounds = bounds;
        c.stereo.bounds = bounds;
        c.lidar.delta_discont = self.delta_discont_l;
        c.lidar.ring_gate.min_points = self.ring_min_points;
        c.lidar.ring_gate.max_points = self.ring_max_points;
        c.stereo.tau_sobel = self.tau_sobel_c;
        if !self.border_removal {
            c.stereo.border = None;
        }
        c.lidar_circles.ransac.distance_threshold = self.circle_threshold_l;
        c.stereo_circles.ransac.distance_threshold = self.circle_threshold_c;
        c.lidar_circles.ransac.min_inliers = self.circle_min_inliers_l;
        c.stereo_circles.ransac.min_inliers = self.circle_min_inliers_c;
        for r in [
            &mut c.lidar_circles.ransac,
            &mut c.stereo_circles.ransac,
        ] {
            r.max_iterations = self.ransac_max_iterations;
        }
        if let Some(b) = c.stereo.border.as_mut() {
            b.ransac.max_iterations = self.ransac_max_iterations;
        }
        c.delta_cluster = self.delta_cluster;
        c.cluster_window.min_fraction = self.cluster_min_fraction;
        c.cluster_window.max_fraction = self.cluster_max_fraction;
        c.geometry_tolerance = self.geometry_tolerance;
        c.icp.association = match self.icp_association.as_str() {
            "labeled" => Association::Labeled,
            "closest_point" => Association::ClosestPoint,
            other => return Err(ConfigError::Invalid(format!("unknown icp_association `{other}`"))),
        };
        c.icp.max_iterations = self.icp_max_iterations;
        c.icp.tolerance = self.icp_tolerance;
        c.seed = self.seed;
        let positive = [
            self.delta_plane,
            self.delta_inliers_l,
            self.delta_inliers_c,
            self.delta_cluster,
            self.geometry_tolerance,
            self.circle_threshold_l,
            self.circle_threshold_c,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ConfigError::Invalid("distance thresholds must be positive".into()));
        }
        if self.ransac_max_iterations == 0 || self.icp_max_iterations == 0 {
            return Err(ConfigError::Invalid("iteration limits must be positive".into()));
        }
        Ok(c)
    }
}
