use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("tensor error: {0}")]
    Tensor(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("profile error: {0}")]
    Profile(String),

    #[error("intensity {0} outside the invertible range of the profile")]
    OutsideInvertibleRange(f64),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("image error: {0}")]
    Image(String),

    #[error("lattice point {0:?} outside the image window")]
    OutOfWindow([i64; 3]),

    #[error("window too small: {0}")]
    WindowTooSmall(String),

    #[error("window too large: {need} values exceed the {budget} value budget")]
    WindowTooLarge { need: usize, budget: usize },

    #[error("estimator error: {0}")]
    Estimate(String),

    #[error("PSF conditions not satisfied: {0}")]
    PsfConditions(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("missing McMullen family member k={k} r={r} s={s}")]
    MissingFamilyMember { k: i64, r: u32, s: u32 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
