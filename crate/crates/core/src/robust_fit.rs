//! Sample-consensus fitting.
//!
//! One engine ([`ransac`]) drives three estimators: an axis-constrained 3D
//! plane (3-point samples), a fixed-radius 2D circle (2-point samples, both
//! intersection centers tried) and a 2D line (2-point samples). The best
//! consensus model is refined by least squares on its inlier set, and the
//! returned inliers are always recomputed against the returned model.

use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Matrix3, Point2, Point3, Vector2, Vector3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    /// Inlier band, meters.
    pub distance_threshold: f64,
    pub max_iterations: usize,
    pub min_inliers: usize,
    pub rng_seed: u64,
    /// Stop early once the probability of having drawn an all-inlier sample
    /// reaches this level. `None` always runs `max_iterations`.
    pub confidence: Option<f64>,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            distance_threshold: 0.01,
            max_iterations: 1000,
            min_inliers: 3,
            rng_seed: 0,
            confidence: Some(0.999),
        }
    }
}

impl RansacConfig {
    pub fn with_threshold(mut self, t: f64) -> Self {
        self.distance_threshold = t;
        self
    }

    pub fn with_min_inliers(mut self, n: usize) -> Self {
        self.min_inliers = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.distance_threshold > 0.0) {
            return Err(Error::InvalidInput("distance_threshold must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// A model family the consensus engine can fit.
pub trait Estimator {
    type Model: Clone;
    const SAMPLE_SIZE: usize;

    fn len(&self) -> usize;
    /// Pushes zero or more candidate models built from the sampled indices.
    fn candidates(&self, sample: &[usize], out: &mut Vec<Self::Model>);
    fn residual(&self, model: &Self::Model, index: usize) -> f64;
    /// Hard constraint; rejected candidates are skipped, not scored.
    fn admissible(&self, _model: &Self::Model) -> bool {
        true
    }
    fn refine(&self, _model: &Self::Model, _inliers: &[usize]) -> Option<Self::Model> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit<M> {
    pub model: M,
    pub inliers: Vec<usize>,
}

fn collect_inliers<E: Estimator>(est: &E, model: &E::Model, threshold: f64) -> Vec<usize> {
    (0..est.len())
        .filter(|&i| est.residual(model, i) <= threshold)
        .collect()
}

fn count_inliers<E: Estimator>(est: &E, model: &E::Model, threshold: f64) -> usize {
    (0..est.len())
        .filter(|&i| est.residual(model, i) <= threshold)
        .count()
}

fn required_iterations(inlier_ratio: f64, sample_size: usize, confidence: f64, cap: usize) -> usize {
    let good_sample = inlier_ratio.powi(sample_size as i32);
    if good_sample >= 1.0 {
        return 1;
    }
    if good_sample <= 0.0 {
        return cap;
    }
    let k = (1.0 - confidence).ln() / (1.0 - good_sample).ln();
    if !k.is_finite() || k >= cap as f64 {
        cap
    } else {
        (k.ceil() as usize).max(1)
    }
}

/// Runs sample consensus for `est`. Deterministic given `cfg.rng_seed`.
pub fn ransac<E: Estimator>(est: &E, cfg: &RansacConfig) -> Result<Fit<E::Model>> {
    cfg.validate()?;
    let n = est.len();
    if n < E::SAMPLE_SIZE {
        return Err(Error::NoModelFound);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut best: Option<(E::Model, usize)> = None;
    let mut cands = Vec::new();
    let mut sample = Vec::with_capacity(E::SAMPLE_SIZE);
    let mut budget = cfg.max_iterations;
    let mut iter = 0;
    while iter < budget {
        iter += 1;
        sample.clear();
        sample.extend(index::sample(&mut rng, n, E::SAMPLE_SIZE).iter());
        cands.clear();
        est.candidates(&sample, &mut cands);
        for m in cands.drain(..) {
            if !est.admissible(&m) {
                continue;
            }
            let count = count_inliers(est, &m, cfg.distance_threshold);
            if best.as_ref().is_none_or(|(_, c)| count > *c) {
                if let Some(p) = cfg.confidence {
                    budget = required_iterations(
                        count as f64 / n as f64,
                        E::SAMPLE_SIZE,
                        p,
                        cfg.max_iterations,
                    );
                }
                best = Some((m, count));
            }
        }
    }

    let (mut model, count) = best.ok_or(Error::NoModelFound)?;
    if count < cfg.min_inliers {
        return Err(Error::NoModelFound);
    }
    let mut inliers = collect_inliers(est, &model, cfg.distance_threshold);
    for _ in 0..8 {
        let Some(refined) = est.refine(&model, &inliers) else {
            break;
        };
        if !est.admissible(&refined) {
            break;
        }
        let next = collect_inliers(est, &refined, cfg.distance_threshold);
        if next.len() < inliers.len() {
            break;
        }
        let stable = next == inliers;
        model = refined;
        inliers = next;
        if stable {
            break;
        }
    }
    if inliers.len() < cfg.min_inliers {
        return Err(Error::NoModelFound);
    }
    Ok(Fit { model, inliers })
}

/// Plane `normal · p + d = 0` with unit normal.
///
/// Normals are oriented so that the sensor origin lies on the positive side
/// (`d >= 0`); plane-space axes derived from the normal are therefore
/// consistent between two sensors looking at the same face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneModel {
    pub normal: Vector3,
    pub d: f64,
}

impl PlaneModel {
    /// `None` if `normal` has zero length.
    pub fn from_point_normal(point: &Point3, normal: &Vector3) -> Option<Self> {
        let len = normal.norm();
        if !(len > 1e-12) {
            return None;
        }
        let mut n = normal / len;
        let mut d = -n.dot(&point.coords);
        if d < 0.0 {
            n = -n;
            d = -d;
        }
        Some(Self { normal: n, d })
    }

    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal.dot(&p.coords) + self.d
    }

    pub fn distance(&self, p: &Point3) -> f64 {
        self.signed_distance(p).abs()
    }

    pub fn project(&self, p: &Point3) -> Point3 {
        p - self.normal * self.signed_distance(p)
    }

    /// Deviation of the plane from containing `vertical`:
    /// `|angle(normal, vertical) - pi/2|`.
    pub fn vertical_deviation(&self, vertical: &Vector3) -> f64 {
        self.normal.dot(vertical).abs().min(1.0).asin()
    }

    /// Least-squares plane through `pts` (smallest principal axis of the
    /// scatter matrix).
    pub fn fit_least_squares(pts: &[Point3]) -> Option<Self> {
        if pts.len() < 3 {
            return None;
        }
        let c = crate::geometry::centroid(pts)?;
        let mut cov = Matrix3::zeros();
        for p in pts {
            let q = p - c;
            cov += q * q.transpose();
        }
        let eig = nalgebra::SymmetricEigen::new(cov);
        let (imin, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        let n: Vector3 = eig.eigenvectors.column(imin).into_owned();
        Self::from_point_normal(&c, &n)
    }
}

struct PlaneEstimator<'a> {
    points: &'a [Point3],
    vertical: Vector3,
    alpha_max: f64,
}

impl Estimator for PlaneEstimator<'_> {
    type Model = PlaneModel;
    const SAMPLE_SIZE: usize = 3;

    fn len(&self) -> usize {
        self.points.len()
    }

    fn candidates(&self, s: &[usize], out: &mut Vec<PlaneModel>) {
        let (a, b, c) = (&self.points[s[0]], &self.points[s[1]], &self.points[s[2]]);
        let ab = b - a;
        let ac = c - a;
        let n = ab.cross(&ac);
        let scale = ab.norm() * ac.norm();
        if n.norm() <= 1e-9 * scale || scale == 0.0 {
            return;
        }
        if let Some(m) = PlaneModel::from_point_normal(a, &n) {
            out.push(m);
        }
    }

    fn residual(&self, m: &PlaneModel, i: usize) -> f64 {
        m.distance(&self.points[i])
    }

    fn admissible(&self, m: &PlaneModel) -> bool {
        m.vertical_deviation(&self.vertical) <= self.alpha_max
    }

    fn refine(&self, _m: &PlaneModel, inliers: &[usize]) -> Option<PlaneModel> {
        let pts: Vec<Point3> = inliers.iter().map(|&i| self.points[i]).collect();
        PlaneModel::fit_least_squares(&pts)
    }
}

/// Plane that contains `vertical` to within `alpha_max` radians.
pub fn ransac_plane(
    points: &[Point3],
    cfg: &RansacConfig,
    vertical: &Vector3,
    alpha_max: f64,
) -> Result<Fit<PlaneModel>> {
    let est = PlaneEstimator {
        points,
        vertical: vertical.normalize(),
        alpha_max,
    };
    ransac(&est, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle2D {
    pub center: Point2,
    pub radius: f64,
}

impl Circle2D {
    pub fn rim_distance(&self, p: &Point2) -> f64 {
        ((p - self.center).norm() - self.radius).abs()
    }
}

/// Centers of the radius-`r` circles through `p` and `q` (zero or two).
pub fn circle_centers_through(p: &Point2, q: &Point2, r: f64) -> Option<[Point2; 2]> {
    let pq = q - p;
    let d = pq.norm();
    if d < 1e-12 || d > 2.0 * r {
        return None;
    }
    let mid = p + pq * 0.5;
    let h = (r * r - 0.25 * d * d).max(0.0).sqrt();
    let perp = Vector2::new(-pq.y, pq.x) / d;
    Some([mid + perp * h, mid - perp * h])
}

/// Gauss-Newton on `sum (|p - c| - r)^2` with `r` held fixed.
pub fn refine_circle_center(points: &[Point2], radius: f64, start: Point2) -> Option<Point2> {
    if points.len() < 2 {
        return None;
    }
    let mut c = start;
    for _ in 0..50 {
        let mut jtj = nalgebra::Matrix2::<f64>::zeros();
        let mut jtr = Vector2::zeros();
        for p in points {
            let diff = p - c;
            let dist = diff.norm();
            if dist < 1e-12 {
                continue;
            }
            let j = -diff / dist;
            let res = dist - radius;
            jtj += j * j.transpose();
            jtr += j * res;
        }
        let step = jtj.try_inverse()? * jtr;
        c -= step;
        if step.norm() < 1e-15 {
            break;
        }
    }
    c.coords.iter().all(|v| v.is_finite()).then_some(c)
}

struct CircleEstimator<'a> {
    points: &'a [Point2],
    radius: f64,
}

impl Estimator for CircleEstimator<'_> {
    type Model = Circle2D;
    const SAMPLE_SIZE: usize = 2;

    fn len(&self) -> usize {
        self.points.len()
    }

    fn candidates(&self, s: &[usize], out: &mut Vec<Circle2D>) {
        if let Some(cs) = circle_centers_through(&self.points[s[0]], &self.points[s[1]], self.radius)
        {
            out.extend(cs.into_iter().map(|center| Circle2D {
                center,
                radius: self.radius,
            }));
        }
    }

    fn residual(&self, m: &Circle2D, i: usize) -> f64 {
        m.rim_distance(&self.points[i])
    }

    fn refine(&self, m: &Circle2D, inliers: &[usize]) -> Option<Circle2D> {
        let pts: Vec<Point2> = inliers.iter().map(|&i| self.points[i]).collect();
        refine_circle_center(&pts, self.radius, m.center).map(|center| Circle2D {
            center,
            radius: self.radius,
        })
    }
}

/// Circle of exactly `radius` with maximal rim consensus.
pub fn ransac_circle2d(points: &[Point2], radius: f64, cfg: &RansacConfig) -> Result<Fit<Circle2D>> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput("circle radius must be positive"));
    }
    ransac(&CircleEstimator { points, radius }, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line2D {
    pub point: Point2,
    /// Unit direction.
    pub direction: Vector2,
}

impl Line2D {
    pub fn distance(&self, p: &Point2) -> f64 {
        let q = p - self.point;
        (q.x * self.direction.y - q.y * self.direction.x).abs()
    }

    /// Signed coordinate of `p` along the line.
    pub fn abscissa(&self, p: &Point2) -> f64 {
        (p - self.point).dot(&self.direction)
    }

    /// Total least squares line through `pts`.
    pub fn fit_least_squares(pts: &[Point2]) -> Option<Self> {
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mean = pts.iter().fold(Vector2::zeros(), |a, p| a + p.coords) / n;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for p in pts {
            let q = p.coords - mean;
            sxx += q.x * q.x;
            sxy += q.x * q.y;
            syy += q.y * q.y;
        }
        if sxx + syy <= 0.0 {
            return None;
        }
        let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let (s, c) = angle.sin_cos();
        Some(Self {
            point: Point2::from(mean),
            direction: Vector2::new(c, s),
        })
    }
}

struct LineEstimator<'a> {
    points: &'a [Point2],
}

impl Estimator for LineEstimator<'_> {
    type Model = Line2D;
    const SAMPLE_SIZE: usize = 2;

    fn len(&self) -> usize {
        self.points.len()
    }

    fn candidates(&self, s: &[usize], out: &mut Vec<Line2D>) {
        let (p, q) = (self.points[s[0]], self.points[s[1]]);
        let dir = q - p;
        let len = dir.norm();
        if len < 1e-12 {
            return;
        }
        out.push(Line2D {
            point: p,
            direction: dir / len,
        });
    }

    fn residual(&self, m: &Line2D, i: usize) -> f64 {
        m.distance(&self.points[i])
    }

    fn refine(&self, _m: &Line2D, inliers: &[usize]) -> Option<Line2D> {
        let pts: Vec<Point2> = inliers.iter().map(|&i| self.points[i]).collect();
        Line2D::fit_least_squares(&pts)
    }
}

pub fn ransac_line2d(points: &[Point2], cfg: &RansacConfig) -> Result<Fit<Line2D>> {
    ransac(&LineEstimator { points }, cfg)
}
