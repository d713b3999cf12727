//! Translation and rotation error between an estimate and ground truth.


use crate::error::{Error, Result};
use crate::geometry::{rotation_angle, Pose6};

/// Which way a pose maps points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    CameraToLidar,
    LidarToCamera,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::CameraToLidar => "camera_to_lidar",
            Direction::LidarToCamera => "lidar_to_camera",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "camera_to_lidar" => Some(Direction::CameraToLidar),
            "lidar_to_camera" => Some(Direction::LidarToCamera),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaggedPose {
    pub pose: Pose6,
    pub direction: Direction,
}

impl TaggedPose {
    pub fn camera_to_lidar(pose: Pose6) -> Self {
        Self {
            pose,
            direction: Direction::CameraToLidar,
        }
    }

    /// Same transform expressed in the opposite direction.
    pub fn inverted(&self) -> Self {
        Self {
            pose: self.pose.to_transform().inverse().to_pose(),
            direction: match self.direction {
                Direction::CameraToLidar => Direction::LidarToCamera,
                Direction::LidarToCamera => Direction::CameraToLidar,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorPair {
    pub e_t: f64,
    pub e_r: f64,
}

fn same_direction(est: &TaggedPose, gt: &TaggedPose) -> Result<()> {
    if est.direction != gt.direction {
        return Err(Error::DirectionMismatch);
    }
    Ok(())
}

/// `|t - t_g|`
pub fn translation_error(est: &TaggedPose, gt: &TaggedPose) -> Result<f64> {
    same_direction(est, gt)?;
    Ok((est.pose.translation() - gt.pose.translation()).norm())
}

/// Angle of `R^-1 R_g`.
pub fn rotation_error(est: &TaggedPose, gt: &TaggedPose) -> Result<f64> {
    same_direction(est, gt)?;
    let r = est.pose.to_transform().rotation;
    let rg = gt.pose.to_transform().rotation;
    Ok(rotation_angle(&(r.transpose() * rg)))
}

pub fn errors(est: &TaggedPose, gt: &TaggedPose) -> Result<ErrorPair> {
    Ok(ErrorPair {
        e_t: translation_error(est, gt)?,
        e_r: rotation_error(est, gt)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tag(p: Pose6) -> TaggedPose {
        TaggedPose::camera_to_lidar(p)
    }

    #[test]
    fn translation_examples() {
        let zero = tag(Pose6::default());
        assert_eq!(translation_error(&zero, &zero).unwrap(), 0.0);
        let a = tag(Pose6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        assert_abs_diff_eq!(translation_error(&a, &zero).unwrap(), 1.0);
        let b = tag(Pose6::new(0.3, 0.4, 0.0, 0.0, 0.0, 0.0));
        assert_abs_diff_eq!(translation_error(&b, &zero).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn rotation_examples() {
        let zero = tag(Pose6::default());
        assert_eq!(rotation_error(&zero, &zero).unwrap(), 0.0);
        let mut p = Pose6::default();
        p.yaw = 0.5;
        assert_abs_diff_eq!(rotation_error(&tag(p), &zero).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn direction_must_match() {
        let a = tag(Pose6::default());
        let b = a.inverted();
        assert_eq!(b.direction, Direction::LidarToCamera);
        assert_eq!(translation_error(&a, &b), Err(Error::DirectionMismatch));
        assert_eq!(rotation_error(&a, &b), Err(Error::DirectionMismatch));
        assert_eq!(Direction::parse(a.direction.as_str()), Some(a.direction));
    }
}
