//! Lidar front end: pass-through crop, constrained plane segmentation,
//! depth-discontinuity filter and ring gating.
//!
//! The discontinuity magnitude of each return is computed once, when the
//! frame is built from full rings, as
//! `max(r[i-1] - r[i], r[i+1] - r[i], 0)` over azimuth neighbors. Later crops
//! keep the stored value, so neighbors always come from the original ring and
//! cropping never creates false adjacency.

use alloc::vec::Vec;

use crate::error::Result;
use crate::geometry::{Point3, Vector3};
use crate::robust_fit::{ransac_plane, PlaneModel, RansacConfig};
use crate::target::TargetModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub position: Point3,
    /// Euclidean norm of `position`.
    pub range: f64,
    /// Depth jump with respect to the azimuth neighbors in the full ring.
    pub discontinuity: f64,
    /// Whether the larger depth jump is toward the next neighbor in the
    /// ring rather than the previous one.
    pub jump_forward: bool,
}

/// Ring-ordered returns of one sweep. `rings[k]` holds the returns of layer
/// `k` in azimuth order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LidarFrame {
    pub rings: Vec<Vec<LidarPoint>>,
}

/// Depth-discontinuity magnitudes for one ring of ranges.
pub fn discontinuities(ranges: &[f64]) -> Vec<f64> {
    let n = ranges.len();
    (0..n)
        .map(|i| {
            let r = ranges[i];
            let prev = if i > 0 { ranges[i - 1] - r } else { 0.0 };
            let next = if i + 1 < n { ranges[i + 1] - r } else { 0.0 };
            prev.max(next).max(0.0)
        })
        .collect()
}

impl LidarFrame {
    /// Builds a frame from complete rings, computing ranges and
    /// discontinuity magnitudes.
    pub fn from_rings(rings: Vec<Vec<Point3>>) -> Self {
        let rings = rings
            .into_iter()
            .map(|ring| {
                let ranges: Vec<f64> = ring.iter().map(|p| p.coords.norm()).collect();
                let disc = discontinuities(&ranges);
                let n = ranges.len();
                ring.into_iter()
                    .enumerate()
                    .map(|(i, position)| {
                        let prev = if i > 0 { ranges[i - 1] } else { ranges[i] };
                        let next = if i + 1 < n { ranges[i + 1] } else { ranges[i] };
                        LidarPoint {
                            position,
                            range: ranges[i],
                            discontinuity: disc[i],
                            jump_forward: next > prev,
                        }
                    })
                    .collect()
            })
            .collect();
        Self { rings }
    }

    /// Groups `(point, ring)` pairs into rings, keeping input order within
    /// each ring.
    pub fn from_tagged_points(points: impl IntoIterator<Item = (Point3, u16)>, layers: usize) -> Self {
        let mut rings: Vec<Vec<Point3>> = (0..layers).map(|_| Vec::new()).collect();
        for (p, r) in points {
            let r = r as usize;
            if r >= rings.len() {
                rings.resize_with(r + 1, Vec::new);
            }
            rings[r].push(p);
        }
        Self::from_rings(rings)
    }

    pub fn layers(&self) -> usize {
        self.rings.len()
    }

    pub fn len(&self) -> usize {
        self.rings.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rings.iter().all(Vec::is_empty)
    }

    pub fn points(&self) -> impl Iterator<Item = &LidarPoint> + '_ {
        self.rings.iter().flatten()
    }

    pub fn positions(&self) -> Vec<Point3> {
        self.points().map(|p| p.position).collect()
    }

    /// Keeps the points for which `keep` holds, preserving ring order.
    pub fn retain(&self, mut keep: impl FnMut(&LidarPoint) -> bool) -> Self {
        Self {
            rings: self
                .rings
                .iter()
                .map(|ring| ring.iter().filter(|p| keep(p)).copied().collect())
                .collect(),
        }
    }
}

/// Axis-aligned crop box in sensor coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassthroughBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl PassthroughBounds {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|k| self.min[k] < self.max[k])
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

impl Default for PassthroughBounds {
    fn default() -> Self {
        Self {
            min: [0.5, -3.0, -1.5],
            max: [5.0, 3.0, 1.5],
        }
    }
}

pub fn passthrough(frame: &LidarFrame, bounds: &PassthroughBounds) -> LidarFrame {
    frame.retain(|p| bounds.contains(&p.position))
}

/// Plane segmentation settings shared by both sensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneSegmentation {
    /// Consensus threshold lives in `ransac.distance_threshold`.
    pub ransac: RansacConfig,
    pub vertical: Vector3,
    /// Allowed deviation of the plane from the vertical axis, radians.
    pub alpha_max: f64,
    /// Points farther than this from the fitted plane are cropped.
    pub inlier_band: f64,
}

impl PlaneSegmentation {
    pub fn lidar_default() -> Self {
        Self {
            ransac: RansacConfig::default().with_threshold(0.01).with_min_inliers(30),
            vertical: Vector3::z(),
            alpha_max: 0.55,
            inlier_band: 0.05,
        }
    }
}

pub fn segment_plane_lidar(
    frame: &LidarFrame,
    cfg: &PlaneSegmentation,
) -> Result<(PlaneModel, LidarFrame)> {
    let pts = frame.positions();
    let fit = ransac_plane(&pts, &cfg.ransac, &cfg.vertical, cfg.alpha_max)?;
    let plane = fit.model;
    let kept = frame.retain(|p| plane.distance(&p.position) <= cfg.inlier_band);
    Ok((plane, kept))
}

/// Keeps the returns whose stored discontinuity is at least `delta`.
pub fn discontinuity_filter(frame: &LidarFrame, delta: f64) -> LidarFrame {
    frame.retain(|p| p.discontinuity >= delta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingGate {
    pub min_points: usize,
    pub max_points: usize,
    /// Extra extent tolerated beyond the circles' bounding span before the
    /// outermost points of a ring are treated as board-border echoes.
    pub span_slack: f64,
    /// Tolerance on each consecutive point pair's chord beyond the hole
    /// diameter.
    pub chord_slack: f64,
}

impl Default for RingGate {
    fn default() -> Self {
        Self {
            min_points: 2,
            max_points: 8,
            span_slack: 0.05,
            chord_slack: 0.03,
        }
    }
}

/// Drops rings whose point count cannot come from circle rims, then trims
/// the outermost pair of rings wider than the hole pattern. What remains
/// must pair up into consecutive chords no longer than a hole diameter
/// that open onto the far side between them; pairs that do not are dropped,
/// as are rings left with an odd count.
pub fn ring_gate(frame: &LidarFrame, target: &TargetModel, gate: &RingGate) -> LidarFrame {
    let span = target.sep_w + 2.0 * target.hole_r + gate.span_slack;
    let max_chord = 2.0 * target.hole_r + gate.chord_slack;
    let rings = frame
        .rings
        .iter()
        .map(|ring| {
            if ring.len() < gate.min_points || ring.len() > gate.max_points {
                return Vec::new();
            }
            let first = ring[0].position;
            let last = ring[ring.len() - 1].position;
            let kept = if (last - first).norm() > span {
                &ring[1..ring.len() - 1]
            } else {
                &ring[..]
            };
            if kept.len() % 2 == 1 {
                return Vec::new();
            }
            kept.chunks_exact(2)
                .filter(|pair| {
                    pair[0].jump_forward
                        && !pair[1].jump_forward
                        && (pair[1].position - pair[0].position).norm() <= max_chord
                })
                .flatten()
                .copied()
                .collect()
        })
        .collect();
    LidarFrame { rings }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPipelineConfig {
    pub bounds: PassthroughBounds,
    pub plane: PlaneSegmentation,
    pub delta_discont: f64,
    pub ring_gate: RingGate,
}

impl Default for LidarPipelineConfig {
    fn default() -> Self {
        Self {
            bounds: PassthroughBounds::default(),
            plane: PlaneSegmentation::lidar_default(),
            delta_discont: 0.5,
            ring_gate: RingGate::default(),
        }
    }
}

/// Candidate circle-edge points of one frame together with the target plane.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarEdges {
    pub plane: PlaneModel,
    pub frame: LidarFrame,
}

/// Full lidar chain: crop, plane, discontinuities, ring gating.
pub fn extract_edges(
    frame: &LidarFrame,
    target: &TargetModel,
    cfg: &LidarPipelineConfig,
) -> Result<LidarEdges> {
    let cropped = passthrough(frame, &cfg.bounds);
    let (plane, on_plane) = segment_plane_lidar(&cropped, &cfg.plane)?;
    let edges = discontinuity_filter(&on_plane, cfg.delta_discont);
    let gated = ring_gate(&edges, target, &cfg.ring_gate);
    Ok(LidarEdges {
        plane,
        frame: gated,
    })
}
