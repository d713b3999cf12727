//! Simulate-detect-calibrate trials with cached stereo detections.
//!
//! Rendering and detecting a full-size stereo frame dominates the cost of a
//! trial, and many experiments see the same stereo frames (the lidar model
//! does not change what the camera sees unless it moves the board). The
//! runner therefore keeps per-frame camera detections keyed by everything
//! that determines them and only simulates lidar frames afresh.

use std::collections::HashMap;

use velostereo_core::metrics::{errors, TaggedPose};
use velostereo_core::registration::{calibrate_from_detections, detect_camera, detect_lidar};
use velostereo_core::sim::{self, CameraSpec, LidarSpec, NoiseModel, Scene};
use velostereo_core::{CalibrationConfig, CalibrationResult, CameraFrame, ErrorPair, GrayImage, LidarFrame, Point3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    pub setting: u8,
    pub lidar: LidarSpec,
    pub camera: CameraSpec,
    pub noise: NoiseModel,
    pub seed: u64,
    pub frames: usize,
}

/// Per-frame detections of one trial; empty entries mark failed frames.
#[derive(Debug, Clone)]
pub struct Detections {
    pub scene: Scene,
    pub ground_truth: TaggedPose,
    pub config: CalibrationConfig,
    pub lidar: Vec<Vec<Point3>>,
    pub camera: Vec<Vec<Point3>>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub result: velostereo_core::Result<CalibrationResult>,
    pub errors: Option<ErrorPair>,
}

impl Outcome {
    /// Frames that contributed on the sensor with fewer detections.
    pub fn frames_used(&self) -> usize {
        self.result
            .as_ref()
            .map(|r| r.frames_used.lidar.min(r.frames_used.camera))
            .unwrap_or(0)
    }
}

impl Detections {
    /// Calibrates from the first `n` frames.
    pub fn calibrate_prefix(&self, n: usize) -> Outcome {
        let n = n.min(self.lidar.len()).min(self.camera.len());
        let result = calibrate_from_detections(&self.lidar[..n], &self.camera[..n], &self.config);
        let errors = result
            .as_ref()
            .ok()
            .map(|r| errors(&TaggedPose::camera_to_lidar(r.pose), &self.ground_truth).expect("same direction"));
        Outcome { result, errors }
    }

    pub fn calibrate(&self) -> Outcome {
        self.calibrate_prefix(self.lidar.len())
    }
}

type LidarHook = Box<dyn FnMut(&LidarFrame)>;

pub struct Runner {
    pub config: CalibrationConfig,
    camera_cache: HashMap<String, Vec<Vec<Point3>>>,
    buffer: CameraFrame,
    lidar_hook: Option<LidarHook>,
    camera_frames_simulated: usize,
}

impl Default for Runner {
    fn default() -> Self {
        Self::new(CalibrationConfig::default())
    }
}

impl Runner {
    /// `config.seed` is replaced by each trial's seed.
    pub fn new(config: CalibrationConfig) -> Self {
        Self {
            config,
            camera_cache: HashMap::new(),
            buffer: CameraFrame {
                image: GrayImage::new(0, 0),
                cloud: Vec::new(),
            },
            lidar_hook: None,
            camera_frames_simulated: 0,
        }
    }

    /// Called on every simulated lidar frame.
    pub fn with_lidar_hook(mut self, hook: impl FnMut(&LidarFrame) + 'static) -> Self {
        self.lidar_hook = Some(Box::new(hook));
        self
    }

    pub fn camera_frames_simulated(&self) -> usize {
        self.camera_frames_simulated
    }

    pub fn detect(&mut self, trial: &Trial) -> velostereo_core::Result<Detections> {
        let setting = sim::load_setting(trial.setting)?;
        let scene = Scene::for_setting(&setting, trial.lidar, trial.camera)?;
        let mut config = self.config;
        config.seed = trial.seed;

        let mut lidar = Vec::with_capacity(trial.frames);
        for k in 0..trial.frames {
            let frame = sim::simulate_lidar(&scene, &trial.noise, trial.seed, k);
            if let Some(hook) = self.lidar_hook.as_mut() {
                hook(&frame);
            }
            lidar.push(detect_lidar(&frame, &config, k).map(|d| d.to_vec()).unwrap_or_default());
        }

        let mut camera_view = scene;
        camera_view.lidar = LidarSpec::vlp16();
        let key = format!(
            "{camera_view:?}|{:?}|{}|{:?}|{:?}|{:?}",
            trial.noise, trial.seed, config.target, config.stereo, config.stereo_circles
        );
        let cached = self.camera_cache.entry(key).or_default();
        for k in cached.len()..trial.frames {
            sim::simulate_stereo_into(&scene, &trial.noise, trial.seed, k, &mut self.buffer);
            self.camera_frames_simulated += 1;
            cached.push(detect_camera(&self.buffer, &config, k).map(|d| d.to_vec()).unwrap_or_default());
        }
        let camera = cached[..trial.frames].to_vec();

        Ok(Detections {
            scene,
            ground_truth: TaggedPose::camera_to_lidar(setting.pose),
            config,
            lidar,
            camera,
        })
    }
}
