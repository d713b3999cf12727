use alloc::boxed::Box;
use core::fmt;

/// Which sensor a diagnostic refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sensor {
    Lidar,
    Camera,
}

impl fmt::Display for Sensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sensor::Lidar => f.write_str("lidar"),
            Sensor::Camera => f.write_str("camera"),
        }
    }
}

/// Named stage of the calibration chain, attached to errors surfaced by
/// [`crate::registration::calibrate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Clustering(Sensor),
    Labeling(Sensor),
    TranslationEstimate,
    IcpRefinement,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Clustering(s) => write!(f, "{s} clustering"),
            Stage::Labeling(s) => write!(f, "{s} labeling"),
            Stage::TranslationEstimate => f.write_str("translation estimate"),
            Stage::IcpRefinement => f.write_str("icp refinement"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("no model satisfied the constraints with enough inliers")]
    NoModelFound,
    #[error("plane normal is parallel to the vertical axis")]
    DegenerateBasis,
    #[error("only {found} circle candidates found, need 4")]
    NotEnoughCircles { found: usize },
    #[error("no 4-subset of circle centers matches the target geometry")]
    GeometryMismatch,
    #[error("{found} clusters survived the size window, expected 4")]
    ClusterCountMismatch { found: usize },
    #[error("reference points tie on the splitting coordinate")]
    AmbiguousLabeling,
    #[error("point configuration is collinear")]
    DegenerateConfiguration,
    #[error("no {sensor} frame produced a detection")]
    InsufficientDetections { sensor: Sensor },
    #[error("unknown simulator setting {0} (valid: 1-9)")]
    UnknownSetting(u8),
    #[error("target is not fully visible: {0}")]
    TargetOutOfView(&'static str),
    #[error("pose direction tags differ")]
    DirectionMismatch,
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(self, stage: Stage) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
