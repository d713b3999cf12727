//! Stereo front end: Sobel edge gating of the organized cloud, pass-through
//! crop, plane segmentation and removal of the board border lines.

use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{Point2, Point3, PointCloud, Vector3};
use crate::lidar::{PassthroughBounds, PlaneSegmentation};
use crate::robust_fit::{ransac_line2d, ransac_plane, Line2D, PlaneModel, RansacConfig};
use crate::target::{plane_project, PlaneBasis, TargetModel};

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: alloc::vec![0; width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidInput("image buffer size does not match dimensions"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }
}

/// Left intensity image plus the organized cloud (one optional camera-frame
/// point per pixel, same layout as the image).
#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub image: GrayImage,
    pub cloud: Vec<Option<Point3>>,
}

impl CameraFrame {
    pub fn new(image: GrayImage, cloud: Vec<Option<Point3>>) -> Result<Self> {
        if cloud.len() != image.width * image.height {
            return Err(Error::InvalidInput("cloud and image dimensions differ"));
        }
        Ok(Self { image, cloud })
    }

    pub fn width(&self) -> usize {
        self.image.width
    }

    pub fn height(&self) -> usize {
        self.image.height
    }
}

/// Saturating Sobel gradient magnitude, `min(255, round(sqrt(gx² + gy²)))`,
/// with edge replication at the borders.
pub fn sobel_magnitude(img: &GrayImage) -> Result<GrayImage> {
    let (w, h) = (img.width, img.height);
    if w < 3 || h < 3 {
        return Err(Error::InvalidInput("sobel needs at least a 3x3 image"));
    }
    let mut out = GrayImage::new(w, h);
    let lut: Vec<u8> = (0..255 * 255).map(|m: i32| (m as f64).sqrt().round() as u8).collect();
    for y in 0..h {
        let row = |yy: usize| &img.data[yy * w..(yy + 1) * w];
        let (r0, r1, r2) = (row(y.saturating_sub(1)), row(y), row((y + 1).min(h - 1)));
        let dst = &mut out.data[y * w..(y + 1) * w];
        for (x, d) in dst.iter_mut().enumerate() {
            let (xm, xp) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let p = |r: &[u8], i: usize| r[i] as i32;
            let gx = (p(r0, xp) + 2 * p(r1, xp) + p(r2, xp)) - (p(r0, xm) + 2 * p(r1, xm) + p(r2, xm));
            let gy = (p(r2, xm) + 2 * p(r2, x) + p(r2, xp)) - (p(r0, xm) + 2 * p(r0, x) + p(r0, xp));
            let mag2 = gx * gx + gy * gy;
            *d = if mag2 >= 255 * 255 { 255 } else { lut[mag2 as usize] };
        }
    }
    Ok(out)
}

/// Defined cloud points whose Sobel response is at least `tau`. A `tau`
/// above 255 keeps nothing.
pub fn edge_gate(frame: &CameraFrame, sobel: &GrayImage, tau: u16) -> Result<PointCloud> {
    if sobel.width != frame.width() || sobel.height != frame.height() {
        return Err(Error::InvalidInput("sobel image size differs from frame"));
    }
    let points = frame
        .cloud
        .iter()
        .zip(&sobel.data)
        .filter(|(_, &s)| s as u16 >= tau)
        .filter_map(|(p, _)| *p)
        .collect();
    Ok(PointCloud::from_points(points))
}

pub fn passthrough_cloud(points: &[Point3], bounds: &PassthroughBounds) -> Vec<Point3> {
    points.iter().filter(|p| bounds.contains(p)).copied().collect()
}

pub fn stereo_plane_default() -> PlaneSegmentation {
    PlaneSegmentation {
        ransac: RansacConfig::default().with_threshold(0.01).with_min_inliers(100),
        vertical: Vector3::z(),
        alpha_max: 0.55,
        inlier_band: 0.10,
    }
}

pub fn segment_plane_stereo(
    points: &[Point3],
    cfg: &PlaneSegmentation,
) -> Result<(PlaneModel, Vec<Point3>)> {
    let fit = ransac_plane(points, &cfg.ransac, &cfg.vertical, cfg.alpha_max)?;
    let plane = fit.model;
    let kept = points
        .iter()
        .filter(|p| plane.distance(p) <= cfg.inlier_band)
        .copied()
        .collect();
    Ok((plane, kept))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BorderRemoval {
    pub ransac: RansacConfig,
    /// Max angle between a border line and a plane-space axis, radians.
    pub axis_tolerance: f64,
    /// Minimum inlier span as a fraction of the matching board dimension.
    pub min_span_fraction: f64,
    /// Allowed relative error of the line's offset from the board center
    /// with respect to the half-dimension.
    pub offset_tolerance: f64,
    pub max_lines: usize,
    pub max_attempts: usize,
}

impl Default for BorderRemoval {
    fn default() -> Self {
        Self {
            ransac: RansacConfig::default().with_threshold(0.01).with_min_inliers(20),
            axis_tolerance: 10f64.to_radians(),
            min_span_fraction: 0.8,
            offset_tolerance: 0.1,
            max_lines: 4,
            max_attempts: 8,
        }
    }
}

/// A removed border line and the number of points it took.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BorderLine {
    pub line: Line2D,
    pub inliers: usize,
}

/// Removes up to `max_lines` long, axis-aligned lines lying where the board
/// borders should be. Lines failing any test are skipped, never removed.
pub fn remove_border_lines(points: &[Point2], target: &TargetModel, cfg: &BorderRemoval) -> Vec<Point2> {
    border_line_split(points, target, cfg).0
}

/// `remove_border_lines` together with the lines that were removed.
pub fn border_line_split(points: &[Point2], target: &TargetModel, cfg: &BorderRemoval) -> (Vec<Point2>, Vec<BorderLine>) {
    if points.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let (mut lo, mut hi) = (points[0], points[0]);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let center = nalgebra::center(&lo, &hi);
    let cos_tol = cfg.axis_tolerance.cos();

    let mut removed = alloc::vec![false; points.len()];
    let mut excluded = alloc::vec![false; points.len()];
    let mut lines = Vec::new();
    for attempt in 0..cfg.max_attempts {
        if lines.len() >= cfg.max_lines {
            break;
        }
        let active: Vec<usize> = (0..points.len()).filter(|&i| !removed[i] && !excluded[i]).collect();
        let subset: Vec<Point2> = active.iter().map(|&i| points[i]).collect();
        let ransac = cfg.ransac.with_seed(cfg.ransac.rng_seed.wrapping_add(attempt as u64));
        let Ok(fit) = ransac_line2d(&subset, &ransac) else {
            break;
        };
        let line = fit.model;
        let (dim, half) = if line.direction.x.abs() >= cos_tol {
            (target.board_w, 0.5 * target.board_h)
        } else if line.direction.y.abs() >= cos_tol {
            (target.board_h, 0.5 * target.board_w)
        } else {
            (f64::NAN, f64::NAN)
        };
        let (mut amin, mut amax) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in &fit.inliers {
            let a = line.abscissa(&subset[i]);
            amin = amin.min(a);
            amax = amax.max(a);
        }
        let long = amax - amin >= cfg.min_span_fraction * dim;
        let placed = (line.distance(&center) - half).abs() <= cfg.offset_tolerance * half;
        let mark = if long && placed { &mut removed } else { &mut excluded };
        for &i in &fit.inliers {
            mark[active[i]] = true;
        }
        if long && placed {
            lines.push(BorderLine {
                line,
                inliers: fit.inliers.len(),
            });
        }
    }
    let kept = points
        .iter()
        .zip(&removed)
        .filter(|(_, &r)| !r)
        .map(|(p, _)| *p)
        .collect();
    (kept, lines)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoPipelineConfig {
    pub tau_sobel: u16,
    pub bounds: PassthroughBounds,
    pub plane: PlaneSegmentation,
    /// `None` skips border-line removal.
    pub border: Option<BorderRemoval>,
}

impl Default for StereoPipelineConfig {
    fn default() -> Self {
        Self {
            tau_sobel: 128,
            bounds: PassthroughBounds::default(),
            plane: stereo_plane_default(),
            border: Some(BorderRemoval::default()),
        }
    }
}

/// Edge points of one stereo frame in plane coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoEdges {
    pub plane: PlaneModel,
    pub basis: PlaneBasis,
    pub points: Vec<Point2>,
}

/// Full stereo chain: Sobel gate, crop, plane, projection, border removal.
pub fn extract_edges(
    frame: &CameraFrame,
    target: &TargetModel,
    cfg: &StereoPipelineConfig,
) -> Result<StereoEdges> {
    let sobel = sobel_magnitude(&frame.image)?;
    let gated = edge_gate(frame, &sobel, cfg.tau_sobel)?;
    let cropped = passthrough_cloud(&gated.points, &cfg.bounds);
    let (plane, on_plane) = segment_plane_stereo(&cropped, &cfg.plane)?;
    let (basis, uv) = plane_project(&on_plane, &plane, &cfg.plane.vertical)?;
    let points = match &cfg.border {
        Some(b) => remove_border_lines(&uv, target, b),
        None => uv,
    };
    Ok(StereoEdges {
        plane,
        basis,
        points,
    })
}
