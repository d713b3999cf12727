//! Extrinsic calibration of a multi-layer lidar against a stereo camera from
//! a planar board with four circular holes, plus a ray-casting simulator that
//! produces matching data with known ground truth.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod geometry;
pub mod lidar;
pub mod metrics;
pub mod registration;
pub mod robust_fit;
pub mod sim;
pub mod stereo;
pub mod target;

pub use error::{Error, Result, Sensor, Stage};
pub use geometry::{Point2, Point3, PointCloud, Pose6, RigidTransform, Vector2, Vector3};
pub use lidar::LidarFrame;
pub use metrics::{Direction, ErrorPair, TaggedPose};
pub use registration::{calibrate, CalibrationConfig, CalibrationResult};
pub use stereo::{CameraFrame, GrayImage};
pub use target::{ReferencePoints, TargetModel};

/// SplitMix64 mix of a base seed with two stream indices.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
