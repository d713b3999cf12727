//! Two-stage registration of the labeled reference points and the end-to-end
//! `calibrate` driver.
//!
//! Stage one solves for a pure translation (rotation held at identity) as the
//! least-squares solution of the stacked 12x3 system `I t = p_l - p_c`,
//! through Householder QR with column pivoting. Stage two runs ICP on the
//! translated camera points. The result is `T_CL = T_icp ∘ T_translation`,
//! mapping camera coordinates into lidar coordinates.

use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result, Sensor, Stage};
use crate::geometry::{Matrix3, Point3, Pose6, RigidTransform, Vector3};
use crate::lidar::{self, LidarFrame, LidarPipelineConfig};
use crate::robust_fit::PlaneModel;
use crate::stereo::{self, CameraFrame, StereoPipelineConfig};
use crate::target::{
    accumulate_and_cluster, find_four_circles, label_corners, lift_centers, plane_project,
    CircleSearch, ClusterWindow, ReferencePoints, TargetModel,
};

/// Least-squares solution of `a x = b` by Householder QR with column
/// pivoting. Columns whose pivot falls below `1e-12 * |R_00|` are treated
/// as rank deficient and get a zero coefficient.
pub fn lstsq_col_piv_qr(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
    let (m, n) = a.shape();
    assert_eq!(b.len(), m, "rhs length must match row count");
    let mut r = a.clone();
    let mut qtb = b.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let steps = m.min(n);
    for k in 0..steps {
        let (pivot, _) = (k..n)
            .map(|j| (j, r.view((k, j), (m - k, 1)).norm_squared()))
            .fold((k, -1.0), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
        if pivot != k {
            r.swap_columns(k, pivot);
            perm.swap(k, pivot);
        }
        let norm = (k..m).map(|i| r[(i, k)] * r[(i, k)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[(k, k)] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= vnorm);
        for j in k..n {
            let s: f64 = 2.0 * (k..m).map(|i| v[i - k] * r[(i, j)]).sum::<f64>();
            for i in k..m {
                r[(i, j)] -= s * v[i - k];
            }
        }
        let s: f64 = 2.0 * (k..m).map(|i| v[i - k] * qtb[i]).sum::<f64>();
        for i in k..m {
            qtb[i] -= s * v[i - k];
        }
    }
    let mut y = nalgebra::DVector::zeros(n);
    let scale = if steps > 0 { r[(0, 0)].abs() } else { 0.0 };
    for k in (0..steps).rev() {
        let rkk = r[(k, k)];
        if rkk.abs() <= 1e-12 * scale || rkk == 0.0 {
            continue;
        }
        let mut acc = qtb[k];
        for j in k + 1..steps {
            acc -= r[(k, j)] * y[j];
        }
        y[k] = acc / rkk;
    }
    let mut x = nalgebra::DVector::zeros(n);
    for (k, &col) in perm.iter().enumerate() {
        x[col] = y[k];
    }
    x
}

/// Pure translation aligning the camera reference points to the lidar ones.
pub fn translation_ls(ref_c: &ReferencePoints, ref_l: &ReferencePoints) -> Vector3 {
    let a = nalgebra::DMatrix::from_fn(12, 3, |i, j| if i % 3 == j { 1.0 } else { 0.0 });
    let pc = ref_c.as_array();
    let pl = ref_l.as_array();
    let b = nalgebra::DVector::from_fn(12, |i, _| pl[i / 3][i % 3] - pc[i / 3][i % 3]);
    let x = lstsq_col_piv_qr(&a, &b);
    Vector3::new(x[0], x[1], x[2])
}

/// Closed-form rigid transform minimizing `sum |R s_i + t - d_i|^2`
/// (SVD of the cross-covariance, reflection-corrected).
pub fn best_rigid_fit(src: &[Point3], dst: &[Point3]) -> Result<RigidTransform> {
    if src.len() != dst.len() || src.len() < 3 {
        return Err(Error::InvalidInput("rigid fit needs at least 3 matched pairs"));
    }
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s.coords - cs) * (d.coords - cd).transpose();
    }
    let svd = nalgebra::SVD::new(h, true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = vt.transpose();
    let mut fix = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let rotation = v * fix * u.transpose();
    Ok(RigidTransform::new(rotation, cd - rotation * cs))
}

fn is_collinear(pts: &[Point3], tol: f64) -> bool {
    let n = pts.len() as f64;
    let c = pts.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut cov = Matrix3::zeros();
    for p in pts {
        let q = p.coords - c;
        cov += q * q.transpose();
    }
    let mut eig: Vec<f64> = nalgebra::SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig[1].max(0.0).sqrt() < tol
}

pub fn rms_distance(t: &RigidTransform, src: &[Point3], dst: &[Point3]) -> f64 {
    let sum: f64 = src
        .iter()
        .zip(dst)
        .map(|(s, d)| (t.apply(s) - d).norm_squared())
        .sum();
    (sum / src.len().max(1) as f64).sqrt()
}

/// How ICP pairs points on each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Association {
    /// `src[i]` always pairs with `dst[i]`.
    #[default]
    Labeled,
    /// Each source point pairs with its nearest destination point.
    ClosestPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop when the RMS changes by less than this between iterations.
    pub tolerance: f64,
    pub association: Association,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-9,
            association: Association::Labeled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpOutcome {
    pub transform: RigidTransform,
    pub iterations: usize,
    pub rms: f64,
}

/// Point-to-point ICP from `src` onto `dst`.
pub fn icp_refine(src: &[Point3], dst: &[Point3], cfg: &IcpConfig) -> Result<IcpOutcome> {
    if src.len() != dst.len() || src.len() < 3 {
        return Err(Error::InvalidInput("icp needs matched sets of at least 3 points"));
    }
    if is_collinear(src, 1e-6) || is_collinear(dst, 1e-6) {
        return Err(Error::DegenerateConfiguration);
    }
    let mut current = RigidTransform::identity();
    let mut prev = rms_distance(&current, src, dst);
    let mut iterations = 0;
    let mut matched = Vec::with_capacity(src.len());
    while iterations < cfg.max_iterations {
        iterations += 1;
        let moved = current.apply_all(src);
        matched.clear();
        match cfg.association {
            Association::Labeled => matched.extend_from_slice(dst),
            Association::ClosestPoint => matched.extend(moved.iter().map(|m| {
                *dst.iter()
                    .min_by(|a, b| (*a - m).norm_squared().total_cmp(&(*b - m).norm_squared()))
                    .expect("dst is non-empty")
            })),
        }
        let step = best_rigid_fit(&moved, &matched)?;
        current = step.compose(&current);
        let rms = rms_distance(&current, src, dst);
        let done = (prev - rms).abs() < cfg.tolerance;
        prev = rms;
        if done {
            break;
        }
    }
    Ok(IcpOutcome {
        transform: current,
        iterations,
        rms: prev,
    })
}

/// Every tunable of the calibration chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    pub target: TargetModel,
    pub lidar: LidarPipelineConfig,
    pub stereo: StereoPipelineConfig,
    pub lidar_circles: CircleSearch,
    pub stereo_circles: CircleSearch,
    pub delta_cluster: f64,
    pub cluster_window: ClusterWindow,
    /// Largest accepted deviation of a labeled pairwise distance from the
    /// target geometry.
    pub geometry_tolerance: f64,
    pub icp: IcpConfig,
    /// Master seed; per-frame RANSAC seeds derive from it.
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            target: TargetModel::default(),
            lidar: LidarPipelineConfig::default(),
            stereo: StereoPipelineConfig::default(),
            lidar_circles: CircleSearch::lidar_default(),
            stereo_circles: CircleSearch::stereo_default(),
            delta_cluster: 0.02,
            cluster_window: ClusterWindow::default(),
            geometry_tolerance: 0.03,
            icp: IcpConfig::default(),
            seed: 0,
        }
    }
}

/// Four 3D hole centers from one lidar frame.
pub fn detect_lidar(frame: &LidarFrame, cfg: &CalibrationConfig, frame_index: usize) -> Result<[Point3; 4]> {
    let mut lc = cfg.lidar;
    lc.plane.ransac.rng_seed = crate::derive_seed(cfg.seed, 1, frame_index as u64);
    let edges = lidar::extract_edges(frame, &cfg.target, &lc)?;
    let pts = edges.frame.positions();
    let (basis, uv) = plane_project(&pts, &edges.plane, &lc.plane.vertical)?;
    let mut circles = cfg.lidar_circles;
    circles.ransac.rng_seed = crate::derive_seed(cfg.seed, 2, frame_index as u64);
    let centers = find_four_circles(&uv, &cfg.target, &circles)?;
    let lifted = lift_centers(&basis, &centers);
    Ok([lifted[0], lifted[1], lifted[2], lifted[3]])
}

/// Four 3D hole centers from one stereo frame.
pub fn detect_camera(frame: &CameraFrame, cfg: &CalibrationConfig, frame_index: usize) -> Result<[Point3; 4]> {
    let mut sc = cfg.stereo;
    sc.plane.ransac.rng_seed = crate::derive_seed(cfg.seed, 3, frame_index as u64);
    if let Some(b) = sc.border.as_mut() {
        b.ransac.rng_seed = crate::derive_seed(cfg.seed, 4, frame_index as u64);
    }
    let edges = stereo::extract_edges(frame, &cfg.target, &sc)?;
    let mut circles = cfg.stereo_circles;
    circles.ransac.rng_seed = crate::derive_seed(cfg.seed, 5, frame_index as u64);
    let centers = find_four_circles(&edges.points, &cfg.target, &circles)?;
    let lifted = lift_centers(&edges.basis, &centers);
    Ok([lifted[0], lifted[1], lifted[2], lifted[3]])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameCounts {
    pub lidar: usize,
    pub camera: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub reference_lidar: ReferencePoints,
    pub reference_camera: ReferencePoints,
    /// Stage-one translation.
    pub translation_stage: Vector3,
    /// Stage-two correction applied after the translation.
    pub icp_correction: RigidTransform,
    pub icp_iterations: usize,
}

/// Estimated camera-to-lidar extrinsics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationResult {
    pub pose: Pose6,
    pub transform: RigidTransform,
    /// RMS distance over the four reference pairs after the full transform.
    pub rms: f64,
    /// Frames that produced a detection, per sensor.
    pub frames_used: FrameCounts,
    pub frames_total: FrameCounts,
    pub diagnostics: Diagnostics,
}

fn label(centroids: &[Point3; 4], cfg: &CalibrationConfig, sensor: Sensor, vertical: &Vector3) -> Result<ReferencePoints> {
    let stage = Stage::Labeling(sensor);
    let plane = PlaneModel::fit_least_squares(centroids).ok_or(Error::DegenerateConfiguration.at(stage))?;
    let refs = label_corners(centroids, &plane, vertical).map_err(|e| e.at(stage))?;
    if refs.geometry_deviation(&cfg.target) > cfg.geometry_tolerance {
        return Err(Error::GeometryMismatch.at(stage));
    }
    Ok(refs)
}

/// Registration of two labeled reference sets into `T_CL`.
pub fn register(ref_c: &ReferencePoints, ref_l: &ReferencePoints, icp: &IcpConfig) -> Result<(RigidTransform, Vector3, IcpOutcome)> {
    let t = translation_ls(ref_c, ref_l);
    let shift = RigidTransform::from_translation(t);
    let moved = shift.apply_all(&ref_c.as_array());
    let outcome = icp_refine(&moved, &ref_l.as_array(), icp).map_err(|e| e.at(Stage::IcpRefinement))?;
    Ok((outcome.transform.compose(&shift), t, outcome))
}

/// Calibration from per-frame detections (empty entries mark frames that
/// produced nothing).
pub fn calibrate_from_detections(
    lidar: &[Vec<Point3>],
    camera: &[Vec<Point3>],
    cfg: &CalibrationConfig,
) -> Result<CalibrationResult> {
    let used = FrameCounts {
        lidar: lidar.iter().filter(|d| !d.is_empty()).count(),
        camera: camera.iter().filter(|d| !d.is_empty()).count(),
    };
    if used.lidar == 0 {
        return Err(Error::InsufficientDetections { sensor: Sensor::Lidar });
    }
    if used.camera == 0 {
        return Err(Error::InsufficientDetections { sensor: Sensor::Camera });
    }
    let cl = accumulate_and_cluster(lidar, cfg.delta_cluster, &cfg.cluster_window)
        .map_err(|e| e.at(Stage::Clustering(Sensor::Lidar)))?;
    let cc = accumulate_and_cluster(camera, cfg.delta_cluster, &cfg.cluster_window)
        .map_err(|e| e.at(Stage::Clustering(Sensor::Camera)))?;
    let ref_l = label(&cl, cfg, Sensor::Lidar, &cfg.lidar.plane.vertical)?;
    let ref_c = label(&cc, cfg, Sensor::Camera, &cfg.stereo.plane.vertical)?;
    let (transform, t, icp) = register(&ref_c, &ref_l, &cfg.icp)?;
    Ok(CalibrationResult {
        pose: transform.to_pose(),
        transform,
        rms: rms_distance(&transform, &ref_c.as_array(), &ref_l.as_array()),
        frames_used: used,
        frames_total: FrameCounts {
            lidar: lidar.len(),
            camera: camera.len(),
        },
        diagnostics: Diagnostics {
            reference_lidar: ref_l,
            reference_camera: ref_c,
            translation_stage: t,
            icp_correction: icp.transform,
            icp_iterations: icp.iterations,
        },
    })
}

/// Per-frame detections for both sensors, frame failures mapped to empty
/// entries.
pub fn detect_all(
    lidar_frames: &[LidarFrame],
    camera_frames: &[CameraFrame],
    cfg: &CalibrationConfig,
) -> (Vec<Vec<Point3>>, Vec<Vec<Point3>>) {
    let l = lidar_frames
        .iter()
        .enumerate()
        .map(|(i, f)| detect_lidar(f, cfg, i).map(|c| c.to_vec()).unwrap_or_default())
        .collect();
    let c = camera_frames
        .iter()
        .enumerate()
        .map(|(i, f)| detect_camera(f, cfg, i).map(|c| c.to_vec()).unwrap_or_default())
        .collect();
    (l, c)
}

/// Runs both pipelines on every frame, clusters, labels and registers.
pub fn calibrate(
    lidar_frames: &[LidarFrame],
    camera_frames: &[CameraFrame],
    cfg: &CalibrationConfig,
) -> Result<CalibrationResult> {
    let (l, c) = detect_all(lidar_frames, camera_frames, cfg);
    calibrate_from_detections(&l, &c, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rot_z;
    use approx::assert_abs_diff_eq;

    fn board_refs() -> ReferencePoints {
        ReferencePoints::from_array([
            Point3::new(2.5, 0.25, 0.2),
            Point3::new(2.5, -0.25, 0.2),
            Point3::new(2.6, 0.25, -0.2),
            Point3::new(2.6, -0.25, -0.2),
        ])
    }

    fn shifted(r: &ReferencePoints, t: Vector3) -> ReferencePoints {
        ReferencePoints::from_array(r.as_array().map(|p| p + t))
    }

    #[test]
    fn translation_exact() {
        let c = board_refs();
        let t = translation_ls(&c, &shifted(&c, Vector3::new(0.1, 0.2, 0.3)));
        assert_abs_diff_eq!(t, Vector3::new(0.1, 0.2, 0.3), epsilon = 1e-12);
        assert_abs_diff_eq!(translation_ls(&c, &c), Vector3::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn qr_solves_overdetermined_system() {
        // fit y = 1 + 2x through noisy-free samples, columns given in scrambled order
        let a = nalgebra::DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 2.0, 1.0, 3.0, 1.0, 4.0, 1.0]);
        let b = nalgebra::DVector::from_row_slice(&[3.0, 5.0, 7.0, 9.0]);
        let x = lstsq_col_piv_qr(&a, &b);
        assert_abs_diff_eq!(x[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn icp_identity_and_yaw() {
        let src = board_refs().as_array();
        let out = icp_refine(&src, &src, &IcpConfig::default()).unwrap();
        assert_abs_diff_eq!(out.transform.rotation, Matrix3::identity(), epsilon = 1e-9);
        assert_abs_diff_eq!(out.transform.translation, Vector3::zeros(), epsilon = 1e-9);

        let r = RigidTransform::from_rotation(rot_z(0.1));
        let dst = r.apply_all(&src);
        let out = icp_refine(&src, &dst, &IcpConfig::default()).unwrap();
        assert_abs_diff_eq!(out.transform.to_pose().yaw, 0.1, epsilon = 1e-6);
        assert!(out.rms < 1e-9);
    }

    #[test]
    fn icp_closest_point_small_rotation() {
        let src = board_refs().as_array();
        let r = RigidTransform::new(rot_z(0.05), Vector3::new(0.01, 0.0, 0.0));
        let dst = r.apply_all(&src);
        let cfg = IcpConfig {
            association: Association::ClosestPoint,
            ..Default::default()
        };
        let out = icp_refine(&src, &dst, &cfg).unwrap();
        assert!(out.rms < 1e-9);
    }

    #[test]
    fn collinear_is_degenerate() {
        let src: Vec<Point3> = (0..4).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        assert_eq!(
            icp_refine(&src, &src, &IcpConfig::default()),
            Err(Error::DegenerateConfiguration)
        );
    }

    #[test]
    fn no_camera_detections() {
        let l = alloc::vec![board_refs().as_array().to_vec()];
        let c: Vec<Vec<Point3>> = alloc::vec![Vec::new()];
        assert_eq!(
            calibrate_from_detections(&l, &c, &CalibrationConfig::default()),
            Err(Error::InsufficientDetections { sensor: Sensor::Camera })
        );
        assert_eq!(
            calibrate(&[], &[], &CalibrationConfig::default()),
            Err(Error::InsufficientDetections { sensor: Sensor::Lidar })
        );
    }

    #[test]
    fn stage_name_in_error() {
        let l: Vec<Vec<Point3>> = alloc::vec![board_refs().as_array().to_vec()];
        let bad = alloc::vec![alloc::vec![Point3::origin(); 4]];
        let err = calibrate_from_detections(&l, &bad, &CalibrationConfig::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::Stage {
                stage: Stage::Clustering(Sensor::Camera),
                ..
            }
        ));
    }
}
