use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point is behind the camera (depth {depth:.3e} m)")]
    BehindCamera { depth: f64 },
    #[error("degenerate bounding box ({width} x {height} px)")]
    DegenerateBox { width: f64, height: f64 },
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
    #[error("invalid person model: {0}")]
    InvalidPerson(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackerError {
    #[error("search window does not intersect the image")]
    EmptyIntersection,
    #[error("feature map dimensions {got:?} do not match the model {expected:?}")]
    DimensionMismatch { expected: (usize, usize, usize), got: (usize, usize, usize) },
    #[error("response map is all zeros")]
    ZeroResponse,
    #[error("response map is empty or non-finite")]
    InvalidResponse,
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("invalid color table: {0}")]
    InvalidColorTable(String),
    #[error("invalid tracker parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum SonarError {
    #[error("kernel Gram matrix is not positive definite")]
    SingularGram,
    #[error("invalid GPR input: {0}")]
    InvalidInput(String),
    #[error("posterior is degenerate (no finite log-likelihood on the grid)")]
    DegeneratePosterior,
    #[error("range is undefined at the origin of the x-z plane")]
    UndefinedRange,
    #[error("training data: {0}")]
    TrainingData(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("cannot predict backwards in time ({from} s -> {to} s)")]
    TimeRegression { from: f64, to: f64 },
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("PCE must be in (0, 1], got {0}")]
    NonPositivePce(f64),
    #[error("measurement stamp {measurement} s does not match state stamp {state} s")]
    StampMismatch { state: f64, measurement: f64 },
    #[error("invalid noise matrix: {0}")]
    InvalidNoise(String),
    #[error("sonar range undefined at the origin of the x-z plane")]
    UndefinedRange,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("tracker: {0}")]
    Tracker(#[from] TrackerError),
    #[error("sonar: {0}")]
    Sonar(#[from] SonarError),
    #[error("fusion: {0}")]
    Fusion(#[from] FusionError),
    #[error("no overlapping samples between estimates and ground truth")]
    EmptyOverlap,
    #[error("no data to plot")]
    NoData,
    #[error("unknown mode `{0}` (expected fused, camera or sonar)")]
    UnknownMode(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
