//! Estimation of Minkowski tensors (volume, surface, and mean-curvature
//! tensors) from digital grey-scale images produced by point-spread-function
//! blurring.
//!
//! The crate has three layers:
//!
//! * ground truth: reference shapes with exact boundary data and
//!   quadrature-based tensor oracles ([`shapes`], [`tensor`]);
//! * synthesis: PSF models, blurred-halfspace profiles, and lattice-sampled
//!   intensity images ([`profile`], [`synth`], [`image`]);
//! * estimation and verification: local configuration estimators and numeric
//!   evaluation of their first- and second-order resolution limits
//!   ([`estimate`], [`asymptotics`]).
//!
//! All estimators are deterministic given a seed. Lattice sums and per-utility
//! loops run in parallel when the `parallel` feature (default) is enabled; the
//! sequential fallback produces bitwise-identical results.

// Validation guards are written `!(x > 0.0)` so NaN is rejected too, and
// fixed-capacity [f64; 3] points with a runtime dimension make indexed
// loops the natural form.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod asymptotics;
pub mod error;
pub mod estimate;
pub mod exec;
pub mod image;
pub mod profile;
pub mod quad;
pub mod rng;
pub mod shapes;
pub mod special;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use estimate::{EstimateResult, EstimatorOptions, GWeight, WeightSpec};
pub use image::{ConfigOffsets, GreyImage, Lattice, Window};
pub use profile::{Profile, Psf, PsfKind};
pub use shapes::Shape;
pub use synth::Scene;
pub use tensor::{SymTensor, TensorIndex};

/// Version string stamped into every CSV row for auditability.
pub const ARTIFACT_VERSION: &str = concat!("minktens/", env!("CARGO_PKG_VERSION"));
