//! Plane-space target detection: projection onto the fitted plane, the four
//! fixed-radius hole circles, lifting back to 3D, multi-frame clustering and
//! corner labeling.

use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{Point2, Point3, Vector3};
use crate::robust_fit::{ransac_circle2d, PlaneModel, RansacConfig};

/// Calibration board with four circular holes whose centers form a
/// rectangle symmetric about the board center. All lengths in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetModel {
    pub board_w: f64,
    pub board_h: f64,
    pub hole_r: f64,
    pub sep_w: f64,
    pub sep_h: f64,
}

impl Default for TargetModel {
    fn default() -> Self {
        Self {
            board_w: 1.2,
            board_h: 0.9,
            hole_r: 0.12,
            sep_w: 0.5,
            sep_h: 0.4,
        }
    }
}

impl TargetModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.board_w, self.board_h, self.hole_r, self.sep_w, self.sep_h]
            .iter()
            .all(|&v| v > 0.0 && v.is_finite());
        if !positive {
            return Err(Error::InvalidInput("target dimensions must be positive"));
        }
        if self.sep_w + 2.0 * self.hole_r > self.board_w || self.sep_h + 2.0 * self.hole_r > self.board_h {
            return Err(Error::InvalidInput("holes do not fit inside the board"));
        }
        if self.sep_w.min(self.sep_h) <= 2.0 * self.hole_r {
            return Err(Error::InvalidInput("holes overlap"));
        }
        Ok(())
    }

    pub fn diagonal(&self) -> f64 {
        self.sep_w.hypot(self.sep_h)
    }

    /// The six pairwise center distances, ascending.
    pub fn expected_distances(&self) -> [f64; 6] {
        let mut d = [
            self.sep_w,
            self.sep_w,
            self.sep_h,
            self.sep_h,
            self.diagonal(),
            self.diagonal(),
        ];
        d.sort_by(f64::total_cmp);
        d
    }

    /// Hole centers in board coordinates, ordered tl, tr, bl, br with x to
    /// the right and y up.
    pub fn hole_centers(&self) -> [Point2; 4] {
        let (hw, hh) = (0.5 * self.sep_w, 0.5 * self.sep_h);
        [
            Point2::new(-hw, hh),
            Point2::new(hw, hh),
            Point2::new(-hw, -hh),
            Point2::new(hw, -hh),
        ]
    }
}

/// Orthonormal in-plane frame. `v` is the sensor vertical projected onto the
/// plane, `u = v × normal`, and `{u, v, normal}` is right-handed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneBasis {
    pub origin: Point3,
    pub u: Vector3,
    pub v: Vector3,
    pub normal: Vector3,
}

impl PlaneBasis {
    pub fn new(plane: &PlaneModel, vertical: &Vector3) -> Result<Self> {
        let n = plane.normal;
        let up = vertical.normalize();
        if 1.0 - n.dot(&up).abs() <= 1e-6 {
            return Err(Error::DegenerateBasis);
        }
        let v = (up - n * n.dot(&up)).normalize();
        let u = v.cross(&n);
        Ok(Self {
            origin: Point3::from(-n * plane.d),
            u,
            v,
            normal: n,
        })
    }

    pub fn to_plane(&self, p: &Point3) -> Point2 {
        let q = p - self.origin;
        Point2::new(q.dot(&self.u), q.dot(&self.v))
    }

    pub fn to_world(&self, q: &Point2) -> Point3 {
        self.origin + self.u * q.x + self.v * q.y
    }
}

/// Orthogonal projection of `points` onto `plane`, in plane coordinates.
pub fn plane_project(
    points: &[Point3],
    plane: &PlaneModel,
    vertical: &Vector3,
) -> Result<(PlaneBasis, Vec<Point2>)> {
    let basis = PlaneBasis::new(plane, vertical)?;
    let pts = points.iter().map(|p| basis.to_plane(p)).collect();
    Ok((basis, pts))
}

pub fn lift_centers(basis: &PlaneBasis, centers: &[Point2]) -> Vec<Point3> {
    centers.iter().map(|c| basis.to_world(c)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleSearch {
    pub ransac: RansacConfig,
    pub max_attempts: usize,
    /// Largest tolerated deviation of any pairwise center distance.
    pub max_deviation: f64,
}

impl CircleSearch {
    pub fn lidar_default() -> Self {
        Self {
            ransac: RansacConfig::default().with_threshold(0.015).with_min_inliers(3),
            max_attempts: 6,
            max_deviation: 0.03,
        }
    }

    pub fn stereo_default() -> Self {
        Self {
            ransac: RansacConfig::default().with_threshold(0.01).with_min_inliers(15),
            max_attempts: 6,
            max_deviation: 0.03,
        }
    }
}

/// Every fixed-radius circle found by repeated fit-and-remove, in discovery
/// order.
pub fn circle_candidates(points: &[Point2], target: &TargetModel, cfg: &CircleSearch) -> Vec<Point2> {
    let mut remaining: Vec<Point2> = points.to_vec();
    let mut found = Vec::new();
    for attempt in 0..cfg.max_attempts {
        let ransac = cfg.ransac.with_seed(cfg.ransac.rng_seed.wrapping_add(attempt as u64));
        let Ok(fit) = ransac_circle2d(&remaining, target.hole_r, &ransac) else {
            break;
        };
        found.push(fit.model.center);
        let mut is_inlier = alloc::vec![false; remaining.len()];
        for &i in &fit.inliers {
            is_inlier[i] = true;
        }
        let mut k = 0;
        remaining.retain(|_| {
            let keep = !is_inlier[k];
            k += 1;
            keep
        });
    }
    found
}

fn subset_cost(centers: [&Point2; 4], expected: &[f64; 6], max_dev: f64) -> Option<f64> {
    let mut d = [0.0; 6];
    let mut k = 0;
    for i in 0..4 {
        for j in i + 1..4 {
            d[k] = (centers[i] - centers[j]).norm();
            k += 1;
        }
    }
    d.sort_by(f64::total_cmp);
    let mut cost = 0.0;
    for (a, b) in d.iter().zip(expected) {
        let dev = (a - b).abs();
        if dev > max_dev {
            return None;
        }
        cost += dev;
    }
    Some(cost)
}

/// The four hole centers: the 4-subset of circle candidates whose pairwise
/// distances best match the target (sum of absolute deviations of the sorted
/// distance multisets).
pub fn find_four_circles(
    points: &[Point2],
    target: &TargetModel,
    cfg: &CircleSearch,
) -> Result<[Point2; 4]> {
    let cands = circle_candidates(points, target, cfg);
    select_four(&cands, target, cfg.max_deviation)
}

pub fn select_four(cands: &[Point2], target: &TargetModel, max_dev: f64) -> Result<[Point2; 4]> {
    if cands.len() < 4 {
        return Err(Error::NotEnoughCircles { found: cands.len() });
    }
    let expected = target.expected_distances();
    let n = cands.len();
    let mut best: Option<([usize; 4], f64)> = None;
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                for d in c + 1..n {
                    let set = [&cands[a], &cands[b], &cands[c], &cands[d]];
                    if let Some(cost) = subset_cost(set, &expected, max_dev) {
                        if best.is_none_or(|(_, bc)| cost < bc) {
                            best = Some(([a, b, c, d], cost));
                        }
                    }
                }
            }
        }
    }
    let (idx, _) = best.ok_or(Error::GeometryMismatch)?;
    let mut out = idx.map(|i| cands[i]);
    out.sort_by(|p, q| p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)));
    Ok(out)
}

/// Accepted cluster sizes as fractions of the number of contributing frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterWindow {
    pub min_fraction: f64,
    pub max_fraction: f64,
}

impl Default for ClusterWindow {
    fn default() -> Self {
        Self {
            min_fraction: 0.3,
            max_fraction: 1.0,
        }
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage Euclidean clusters of `points` with tolerance `tol`, each
/// as a list of member indices, ordered by smallest member.
pub fn euclidean_clusters(points: &[Point3], tol: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if (points[i] - points[j]).norm() <= tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut root_slot: Vec<Option<usize>> = alloc::vec![None; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        match root_slot[r] {
            Some(s) => clusters[s].push(i),
            None => {
                root_slot[r] = Some(clusters.len());
                clusters.push(alloc::vec![i]);
            }
        }
    }
    clusters
}

/// Pools per-frame centers, clusters them and returns the four centroids.
///
/// Frames with no centers do not count towards the window. Clusters whose
/// size lies outside `[min_fraction, max_fraction] * N_valid` are outliers.
pub fn accumulate_and_cluster(
    per_frame: &[Vec<Point3>],
    delta_cluster: f64,
    window: &ClusterWindow,
) -> Result<[Point3; 4]> {
    let n_valid = per_frame.iter().filter(|f| !f.is_empty()).count();
    if n_valid == 0 {
        return Err(Error::ClusterCountMismatch { found: 0 });
    }
    let pool: Vec<Point3> = per_frame.iter().flatten().copied().collect();
    let lo = window.min_fraction * n_valid as f64;
    let hi = window.max_fraction * n_valid as f64;
    let mut kept: Vec<Vec<usize>> = euclidean_clusters(&pool, delta_cluster)
        .into_iter()
        .filter(|c| (c.len() as f64) >= lo && (c.len() as f64) <= hi)
        .collect();
    if kept.len() != 4 {
        return Err(Error::ClusterCountMismatch { found: kept.len() });
    }
    // stable: larger clusters first, ties by first member
    kept.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    let centroid = |c: &Vec<usize>| {
        let sum = c.iter().fold(Vector3::zeros(), |acc, &i| acc + pool[i].coords);
        Point3::from(sum / c.len() as f64)
    };
    Ok([
        centroid(&kept[0]),
        centroid(&kept[1]),
        centroid(&kept[2]),
        centroid(&kept[3]),
    ])
}

/// The four labeled hole-center centroids of one sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoints {
    pub tl: Point3,
    pub tr: Point3,
    pub bl: Point3,
    pub br: Point3,
}

impl ReferencePoints {
    pub fn as_array(&self) -> [Point3; 4] {
        [self.tl, self.tr, self.bl, self.br]
    }

    pub fn from_array(a: [Point3; 4]) -> Self {
        Self {
            tl: a[0],
            tr: a[1],
            bl: a[2],
            br: a[3],
        }
    }

    /// Largest deviation between a labeled pairwise distance and the
    /// target's (tl-tr and bl-br: `sep_w`; tl-bl and tr-br: `sep_h`;
    /// diagonals).
    pub fn geometry_deviation(&self, target: &TargetModel) -> f64 {
        let d = |a: &Point3, b: &Point3| (a - b).norm();
        [
            (d(&self.tl, &self.tr), target.sep_w),
            (d(&self.bl, &self.br), target.sep_w),
            (d(&self.tl, &self.bl), target.sep_h),
            (d(&self.tr, &self.br), target.sep_h),
            (d(&self.tl, &self.br), target.diagonal()),
            (d(&self.tr, &self.bl), target.diagonal()),
        ]
        .iter()
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
    }
}

/// Labels four centroids by their plane-space position: the two with the
/// largest `v` are the top pair, and within each pair smaller `u` is left.
pub fn label_corners(
    centroids: &[Point3; 4],
    plane: &PlaneModel,
    vertical: &Vector3,
) -> Result<ReferencePoints> {
    const TIE: f64 = 1e-3;
    let basis = PlaneBasis::new(plane, vertical)?;
    let mut pts: Vec<(Point2, Point3)> = centroids.iter().map(|p| (basis.to_plane(p), *p)).collect();
    pts.sort_by(|a, b| b.0.y.total_cmp(&a.0.y));
    if pts[1].0.y - pts[2].0.y < TIE {
        return Err(Error::AmbiguousLabeling);
    }
    let split = |a: (Point2, Point3), b: (Point2, Point3)| -> Result<(Point3, Point3)> {
        if (a.0.x - b.0.x).abs() < TIE {
            return Err(Error::AmbiguousLabeling);
        }
        Ok(if a.0.x < b.0.x { (a.1, b.1) } else { (b.1, a.1) })
    };
    let (tl, tr) = split(pts[0], pts[1])?;
    let (bl, br) = split(pts[2], pts[3])?;
    Ok(ReferencePoints { tl, tr, bl, br })
}
