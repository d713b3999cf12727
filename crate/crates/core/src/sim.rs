//! Synthetic lidar and stereo data of the four-hole board.
//!
//! The lidar frame doubles as the world frame. The board stands upright in
//! front of both sensors, a wall parallel to it stands behind, and a ground
//! plane lies below. Both sensors cast ideal rays; noise is Gaussian along
//! the ray (or on the image intensity) with standard deviation `K * sigma`.

use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::geometry::{Point3, Pose6, RigidTransform, Vector3};
use crate::lidar::{LidarFrame, PassthroughBounds};
use crate::stereo::{CameraFrame, GrayImage};
use crate::target::TargetModel;

/// Spinning multi-layer lidar with evenly spaced layers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarSpec {
    pub layers: usize,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub azimuth_step_deg: f64,
    pub max_range: f64,
}

impl LidarSpec {
    pub fn vlp16() -> Self {
        Self {
            layers: 16,
            elevation_min_deg: -15.0,
            elevation_max_deg: 15.0,
            azimuth_step_deg: 0.2,
            max_range: 100.0,
        }
    }

    pub fn hdl32() -> Self {
        Self {
            layers: 32,
            elevation_min_deg: -20.0,
            elevation_max_deg: 20.0,
            azimuth_step_deg: 0.2,
            max_range: 100.0,
        }
    }

    pub fn hdl64() -> Self {
        Self {
            layers: 64,
            elevation_min_deg: -24.8,
            elevation_max_deg: 2.0,
            azimuth_step_deg: 0.17,
            max_range: 120.0,
        }
    }

    /// Preset by layer count (16, 32 or 64).
    pub fn from_layers(layers: usize) -> Option<Self> {
        match layers {
            16 => Some(Self::vlp16()),
            32 => Some(Self::hdl32()),
            64 => Some(Self::hdl64()),
            _ => None,
        }
    }

    pub fn elevation_deg(&self, layer: usize) -> f64 {
        if self.layers < 2 {
            return 0.5 * (self.elevation_min_deg + self.elevation_max_deg);
        }
        let step = (self.elevation_max_deg - self.elevation_min_deg) / (self.layers - 1) as f64;
        self.elevation_min_deg + step * layer as f64
    }

    pub fn azimuth_count(&self) -> usize {
        (360.0 / self.azimuth_step_deg).round() as usize
    }
}

/// Rectified left camera of the stereo rig. Pixel `(u, v)` looks along
/// `(1, -(u + 0.5 - cx) / f, -(v + 0.5 - cy) / f)` in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraSpec {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub baseline: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            width: 1280,
            height: 960,
            focal: 1000.0,
            baseline: 0.12,
        }
    }
}

impl CameraSpec {
    pub fn cx(&self) -> f64 {
        0.5 * self.width as f64
    }

    pub fn cy(&self) -> f64 {
        0.5 * self.height as f64
    }

    pub fn ray(&self, u: usize, v: usize) -> Vector3 {
        Vector3::new(
            1.0,
            -(u as f64 + 0.5 - self.cx()) / self.focal,
            -(v as f64 + 0.5 - self.cy()) / self.focal,
        )
    }

    /// Continuous pixel coordinates of a camera-frame point in front of the
    /// camera.
    pub fn project(&self, p: &Point3) -> Option<(f64, f64)> {
        if p.x <= 1e-9 {
            return None;
        }
        Some((
            self.cx() - self.focal * p.y / p.x,
            self.cy() - self.focal * p.z / p.x,
        ))
    }
}

/// Where the stereo noise is applied.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum StereoNoise {
    /// Constant standard deviation along the ray.
    #[default]
    Depth,
    /// Standard deviation `sigma * z^2 / (f * b)` with `z` the depth, `f` the
    /// focal length in pixels and `b` the baseline.
    DepthDependent,
    /// Noise on the image intensity (in gray levels, `sigma * 255`); the
    /// cloud stays exact.
    Intensity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Multiplier `K`.
    pub factor: f64,
    pub sigma_lidar: f64,
    pub sigma_camera: f64,
    pub stereo: StereoNoise,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::with_factor(0.0)
    }
}

impl NoiseModel {
    pub fn with_factor(factor: f64) -> Self {
        Self {
            factor,
            sigma_lidar: 0.008,
            sigma_camera: 0.007,
            stereo: StereoNoise::Depth,
        }
    }
}

/// One of the nine reference extrinsic settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettingSpec {
    pub id: u8,
    /// Camera-to-lidar ground truth.
    pub pose: Pose6,
}

const SETTINGS: [[f64; 6]; 9] = [
    // tx, ty, tz, yaw, pitch, roll
    [-0.8, -0.1, 0.4, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.5, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.3, 0.1, 0.2],
    [-0.3, 0.2, -0.2, 0.3, -0.1, 0.2],
    [0.0, 0.0, 0.0, 0.0, 0.1, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.4],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-0.128, 0.418, -0.314, -0.103, -0.299, 0.110],
    [-0.433, 0.845, 1.108, -0.672, 0.258, 0.075],
];

pub fn load_setting(id: u8) -> Result<SettingSpec> {
    let row = SETTINGS
        .get((id as usize).wrapping_sub(1))
        .ok_or(Error::UnknownSetting(id))?;
    Ok(SettingSpec {
        id,
        pose: Pose6 {
            tx: row[0],
            ty: row[1],
            tz: row[2],
            yaw: row[3],
            pitch: row[4],
            roll: row[5],
        },
    })
}

pub const SETTING_IDS: [u8; 9] = [1, 2, 3, 4, 5, 6, 7, 8, 9];

/// Upright board placement in the world (lidar) frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoardPlacement {
    pub center: Point3,
    /// Horizontal unit normal pointing towards the sensors.
    pub normal: Vector3,
}

impl BoardPlacement {
    pub fn facing(center: Point3, toward: &Point3) -> Option<Self> {
        let mut n = toward - center;
        n.z = 0.0;
        let len = n.norm();
        (len > 1e-9).then(|| Self {
            center,
            normal: n / len,
        })
    }

    /// In-plane axis to the right as seen from the sensors.
    pub fn right(&self) -> Vector3 {
        Vector3::z().cross(&self.normal)
    }

    pub fn corners(&self, target: &TargetModel) -> [Point3; 4] {
        let (hw, hh) = (0.5 * target.board_w, 0.5 * target.board_h);
        let r = self.right();
        let up = Vector3::z();
        [(-hw, hh), (hw, hh), (-hw, -hh), (hw, -hh)].map(|(x, y)| self.center + r * x + up * y)
    }

    /// World positions of the hole centers (tl, tr, bl, br).
    pub fn hole_centers(&self, target: &TargetModel) -> [Point3; 4] {
        let r = self.right();
        target.hole_centers().map(|c| self.center + r * c.x + Vector3::z() * c.y)
    }
}

/// Full description of one simulated capture setup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scene {
    pub target: TargetModel,
    pub board: BoardPlacement,
    /// Camera-to-lidar extrinsics.
    pub extrinsics: RigidTransform,
    pub lidar: LidarSpec,
    pub camera: CameraSpec,
    /// Distance of the background wall behind the board, if any.
    pub wall_offset: Option<f64>,
    /// Height of the ground plane in the lidar frame, if any.
    pub ground_z: Option<f64>,
}

pub const BOARD_DISTANCE: f64 = 2.5;
/// Fallback distances when no placement at `BOARD_DISTANCE` clears
/// `COMFORT_MARGIN`.
const FALLBACK_DISTANCES: [f64; 3] = [3.0, 3.5, 4.0];
const LATERAL_RANGE: f64 = 1.5;
const VERTICAL_RANGE: f64 = 1.0;
const GRID_STEP: f64 = 0.05;
/// Angular margin (radians) at which a placement counts as comfortable.
const COMFORT_MARGIN: f64 = 0.05;

pub const WALL_OFFSET: f64 = 6.0;
pub const GROUND_Z: f64 = -1.7;

impl Scene {
    /// Places the board upright, turned towards the midpoint of the two
    /// sensor origins, `BOARD_DISTANCE` ahead of the lidar. The offset from
    /// straight ahead at mid lidar elevation is the smallest one whose view
    /// margin (the smaller of the camera and lidar angular margins) reaches
    /// `COMFORT_MARGIN`; the fallback distances are tried next, and the
    /// best margin seen wins if no placement is comfortable.
    pub fn new(target: TargetModel, extrinsics: RigidTransform, lidar: LidarSpec, camera: CameraSpec) -> Result<Self> {
        let mid_elev = 0.5 * (lidar.elevation_min_deg + lidar.elevation_max_deg);
        let cam_origin = Point3::from(extrinsics.translation);
        let toward = Point3::new(0.5 * cam_origin.x, 0.5 * cam_origin.y, 0.0);
        let grid = |range: f64| {
            let steps = (range / GRID_STEP).round() as i64;
            (-steps..=steps).map(move |i| i as f64 * GRID_STEP)
        };
        let mut offsets: Vec<(f64, f64)> = grid(LATERAL_RANGE).flat_map(|y| grid(VERTICAL_RANGE).map(move |dz| (y, dz))).collect();
        offsets.sort_by(|a, b| {
            a.0.hypot(a.1)
                .total_cmp(&b.0.hypot(b.1))
                .then(b.0.total_cmp(&a.0))
                .then(b.1.total_cmp(&a.1))
        });
        let mut best: Option<(f64, Scene)> = None;
        for distance in core::iter::once(BOARD_DISTANCE).chain(FALLBACK_DISTANCES) {
            let z0 = distance * mid_elev.to_radians().tan();
            for &(y, dz) in &offsets {
                let Some(board) = BoardPlacement::facing(Point3::new(distance, y, z0 + dz), &toward) else {
                    continue;
                };
                let scene = Scene {
                    target,
                    board,
                    extrinsics,
                    lidar,
                    camera,
                    wall_offset: Some(WALL_OFFSET),
                    ground_z: Some(GROUND_Z),
                };
                let Some(m) = scene.view_margin() else { continue };
                let m = m.min(COMFORT_MARGIN);
                if best.as_ref().is_none_or(|(bm, _)| m > *bm) && scene.validate().is_ok() {
                    best = Some((m, scene));
                    if m >= COMFORT_MARGIN {
                        return Ok(scene);
                    }
                }
            }
        }
        best.map(|(_, s)| s).ok_or(Error::TargetOutOfView("no placement fits both sensors"))
    }

    pub fn for_setting(setting: &SettingSpec, lidar: LidarSpec, camera: CameraSpec) -> Result<Self> {
        Self::new(TargetModel::default(), setting.pose.to_transform(), lidar, camera)
    }

    pub fn with_board(mut self, board: BoardPlacement) -> Result<Self> {
        self.board = board;
        self.validate()?;
        Ok(self)
    }

    /// Ground-truth camera-frame hole centers.
    pub fn camera_hole_centers(&self) -> [Point3; 4] {
        let inv = self.extrinsics.inverse();
        self.board.hole_centers(&self.target).map(|p| inv.apply(&p))
    }

    /// Smallest distance in pixels between a board corner and the image
    /// border, negative when a corner is outside.
    fn image_margin(&self) -> Option<f64> {
        let inv = self.extrinsics.inverse();
        let (w, h) = (self.camera.width as f64, self.camera.height as f64);
        self.board
            .corners(&self.target)
            .iter()
            .map(|p| {
                let (u, v) = self.camera.project(&inv.apply(p))?;
                Some(u.min(w - u).min(v).min(h - v))
            })
            .try_fold(f64::INFINITY, |acc, m| m.map(|m| acc.min(m)))
    }

    /// Smaller of the camera margin (pixels over focal length) and the lidar
    /// vertical margin, both in radians.
    fn view_margin(&self) -> Option<f64> {
        let cam = self.image_margin()? / self.camera.focal;
        let corners = self.board.corners(&self.target);
        let elev = |p: &Point3| p.z.atan2(p.x.hypot(p.y));
        let top = elev(&corners[0]).max(elev(&corners[1]));
        let bottom = elev(&corners[2]).min(elev(&corners[3]));
        let lid = (self.lidar.elevation_max_deg.to_radians() - top).min(bottom - self.lidar.elevation_min_deg.to_radians());
        Some(cam.min(lid))
    }

    /// Checks that the whole board is seen by the camera, lies in the
    /// default crop box of both sensors and is crossed by lidar layers.
    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        if self.lidar.layers < 2 || self.lidar.azimuth_step_deg <= 0.0 {
            return Err(Error::InvalidInput("lidar needs two layers and a positive azimuth step"));
        }
        if self.camera.width == 0 || self.camera.height == 0 || self.camera.focal <= 0.0 {
            return Err(Error::InvalidInput("camera dimensions and focal length must be positive"));
        }
        if !self.image_margin().is_some_and(|m| m >= 1.0) {
            return Err(Error::TargetOutOfView("board leaves the camera image"));
        }
        let bounds = PassthroughBounds::default();
        let inv = self.extrinsics.inverse();
        let corners = self.board.corners(&self.target);
        if !corners.iter().all(|p| bounds.contains(p)) {
            return Err(Error::TargetOutOfView("board outside the lidar crop box"));
        }
        if !corners.iter().all(|p| bounds.contains(&inv.apply(p))) {
            return Err(Error::TargetOutOfView("board outside the camera crop box"));
        }
        if !self.view_margin().is_some_and(|m| m > 0.0) {
            return Err(Error::TargetOutOfView("board exceeds the lidar vertical field of view"));
        }
        Ok(())
    }

    fn caster(&self, origin: Point3) -> Caster {
        let n = self.board.normal;
        let t = &self.target;
        let right = self.board.right();
        Caster {
            normal: n,
            right,
            rel_right: (origin - self.board.center).dot(&right),
            rel_up: origin.z - self.board.center.z,
            board_num: (self.board.center - origin).dot(&n),
            wall_num: self
                .wall_offset
                .map(|w| (self.board.center - n * w - origin).dot(&n)),
            ground_num: self.ground_z.map(|z| z - origin.z),
            half_w: 0.5 * t.board_w,
            half_h: 0.5 * t.board_h,
            holes: t.hole_centers().map(|c| (c.x, c.y)),
            r2: t.hole_r * t.hole_r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Surface {
    Board { x: f64, y: f64 },
    Wall,
    Ground,
}

/// Scene geometry precomputed for rays from one origin.
struct Caster {
    normal: Vector3,
    right: Vector3,
    /// Board-plane coordinates of the ray origin.
    rel_right: f64,
    rel_up: f64,
    board_num: f64,
    wall_num: Option<f64>,
    ground_num: Option<f64>,
    half_w: f64,
    half_h: f64,
    holes: [(f64, f64); 4],
    r2: f64,
}

impl Caster {
    /// Nearest surface hit along `origin + s * dir` with `0 < s <= max_s`.
    fn cast(&self, dir: &Vector3, max_s: f64) -> Option<(f64, Surface)> {
        self.cast_dots(dir.dot(&self.normal), dir.dot(&self.right), dir.z, max_s)
    }

    /// `cast` from the ray's dot products with the board normal, the board
    /// right axis and the vertical.
    #[inline]
    fn cast_dots(&self, dn: f64, dr: f64, dz: f64, max_s: f64) -> Option<(f64, Surface)> {
        let mut best_s = max_s;
        let mut best = None;
        if dn.abs() > 1e-12 {
            let s = self.board_num / dn;
            if s > 1e-9 && s <= best_s {
                let x = self.rel_right + s * dr;
                let y = self.rel_up + s * dz;
                if x.abs() <= self.half_w
                    && y.abs() <= self.half_h
                    && self
                        .holes
                        .iter()
                        .all(|&(cx, cy)| (x - cx) * (x - cx) + (y - cy) * (y - cy) >= self.r2)
                {
                    best_s = s;
                    best = Some(Surface::Board { x, y });
                }
            }
            if let Some(num) = self.wall_num {
                let s = num / dn;
                if s > 1e-9 && s < best_s {
                    best_s = s;
                    best = Some(Surface::Wall);
                }
            }
        }
        if let Some(num) = self.ground_num {
            if dz < -1e-12 {
                let s = num / dz;
                if s > 1e-9 && s < best_s {
                    best_s = s;
                    best = Some(Surface::Ground);
                }
            }
        }
        best.map(|b| (best_s, b))
    }
}

pub const BOARD_MEAN: f64 = 160.0;
pub const WALL_INTENSITY: u8 = 30;
pub const GROUND_INTENSITY: u8 = 70;
pub const SKY_INTENSITY: u8 = 220;

fn intensity(surface: &Surface) -> f64 {
    match *surface {
        Surface::Board { x, y } => {
            BOARD_MEAN
                + 20.0 * (core::f64::consts::TAU * x / 0.10).sin()
                + 20.0 * (core::f64::consts::TAU * y / 0.08).sin()
        }
        Surface::Wall => WALL_INTENSITY as f64,
        Surface::Ground => GROUND_INTENSITY as f64,
    }
}

fn unit_normal() -> Normal<f64> {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// One lidar sweep. Rays without a return are dropped.
pub fn simulate_lidar(scene: &Scene, noise: &NoiseModel, seed: u64, frame: usize) -> LidarFrame {
    let spec = &scene.lidar;
    let frame_seed = derive_seed(seed, 0x11da, frame as u64);
    let sigma = noise.factor * noise.sigma_lidar;
    let unit = unit_normal();
    let n_az = spec.azimuth_count();
    let caster = scene.caster(Point3::origin());
    let azimuths: Vec<(f64, f64)> = (0..n_az)
        .map(|k| (-180.0 + spec.azimuth_step_deg * k as f64).to_radians().sin_cos())
        .collect();
    let rings = (0..spec.layers)
        .map(|layer| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(frame_seed, 0, layer as u64));
            let (se, ce) = spec.elevation_deg(layer).to_radians().sin_cos();
            let mut ring = Vec::new();
            for &(sa, ca) in &azimuths {
                let dir = Vector3::new(ce * ca, ce * sa, se);
                if let Some((s, _)) = caster.cast(&dir, spec.max_range) {
                    let e = if sigma > 0.0 { sigma * unit.sample(&mut rng) } else { 0.0 };
                    ring.push(Point3::from(dir * (s + e)));
                }
            }
            ring
        })
        .collect();
    LidarFrame::from_rings(rings)
}

/// One stereo capture: left image plus the organized cloud in the camera
/// frame (`None` where no surface is hit).
pub fn simulate_stereo(scene: &Scene, noise: &NoiseModel, seed: u64, frame: usize) -> CameraFrame {
    let mut out = CameraFrame {
        image: GrayImage::new(0, 0),
        cloud: Vec::new(),
    };
    simulate_stereo_into(scene, noise, seed, frame, &mut out);
    out
}

/// `simulate_stereo` writing into `out`, reusing its buffers.
pub fn simulate_stereo_into(scene: &Scene, noise: &NoiseModel, seed: u64, frame: usize, out: &mut CameraFrame) {
    let cam = &scene.camera;
    let frame_seed = derive_seed(seed, 0xca3e, frame as u64);
    let sigma = noise.factor * noise.sigma_camera;
    let unit = unit_normal();
    let rot = scene.extrinsics.rotation;
    let caster = scene.caster(Point3::from(scene.extrinsics.translation));
    let image = &mut out.image;
    image.width = cam.width;
    image.height = cam.height;
    image.data.resize(cam.width * cam.height, 0);
    let cloud = &mut out.cloud;
    cloud.clear();
    cloud.reserve(cam.width * cam.height);
    let (cx, cy, f) = (cam.cx(), cam.cy(), cam.focal);
    let inv_f = 1.0 / f;
    let (c0, c1, c2) = (rot.column(0).into_owned(), rot.column(1).into_owned(), rot.column(2).into_owned());
    let dots = |d: &Vector3| (d.dot(&caster.normal), d.dot(&caster.right), d.z);
    let (step_n, step_r, step_z) = dots(&c1);
    for v in 0..cam.height {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(frame_seed, 1, v as u64));
        let dz = -(v as f64 + 0.5 - cy) / f;
        let (base_n, base_r, base_z) = dots(&(c0 + c2 * dz));
        let row = &mut image.data[v * cam.width..(v + 1) * cam.width];
        for (u, px) in row.iter_mut().enumerate() {
            let a = (cx - 0.5 - u as f64) * inv_f;
            let d_cam = Vector3::new(1.0, a, dz);
            let hit = caster.cast_dots(base_n + a * step_n, base_r + a * step_r, base_z + a * step_z, f64::INFINITY);
            let (point, gray) = match hit {
                Some((s, surf)) => {
                    let mut s = s;
                    match noise.stereo {
                        StereoNoise::Depth if sigma > 0.0 => {
                            s += sigma * unit.sample(&mut rng) / d_cam.norm();
                        }
                        StereoNoise::DepthDependent if sigma > 0.0 => {
                            // depth along the optical axis equals s
                            let sd = sigma * s * s / (f * cam.baseline);
                            s += sd * unit.sample(&mut rng) / d_cam.norm();
                        }
                        _ => {}
                    }
                    (Some(Point3::from(d_cam * s)), intensity(&surf))
                }
                None => (None, SKY_INTENSITY as f64),
            };
            let gray = match noise.stereo {
                StereoNoise::Intensity if sigma > 0.0 => gray + sigma * 255.0 * unit.sample(&mut rng),
                _ => gray,
            };
            cloud.push(point);
            // saturating cast; adding one half rounds the non-negative range
            *px = (gray + 0.5).max(0.0) as u8;
        }
    }
}
