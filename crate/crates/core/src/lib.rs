//! Joint UAV trajectory and transmit beamforming design for a secure
//! integrated sensing and communication (ISAC) link.
//!
//! A UAV carrying an `M`-element vertical ULA serves a ground user while
//! illuminating a ground target. A dual-purpose eavesdropper listens to both
//! the information stream and the sensing waveform. The crate maximizes the
//! average secrecy rate over `N` slots subject to a beampattern floor at the
//! target, a beampattern ceiling at the eavesdropper, a per-slot power budget
//! and flight limits, by alternating between
//!
//! * a per-slot semidefinite-relaxed SCA over the information covariance and
//!   the sensing covariance ([`beamforming`]), closed by an exact rank-one
//!   reconstruction of the information beam, and
//! * a trust-region SCA over the whole trajectory ([`trajectory`]).
//!
//! Both subproblems are expressed as small dense conic programs and solved by
//! the barrier interior-point method in [`conic`].
//!
//! Geometry and signal metrics are generic over the scalar type (see
//! [`Real`]); the optimizers run in `f64` and use the aliases defined here.

pub mod ao;
pub mod baselines;
pub mod beamforming;
pub mod conic;
mod error;
pub mod experiments;
pub mod linalg;
pub mod metrics;
mod scalar;
pub mod scenario;
pub mod trajectory;

pub use error::{Error, Result};
pub use scalar::Real;

use nalgebra::{DMatrix, DVector, Vector2};
use num_complex::Complex;

/// Horizontal position in meters.
pub type Vec2<T> = Vector2<T>;
/// Complex column vector.
pub type CVector<T> = DVector<Complex<T>>;
/// Dense complex square matrix.
pub type CMatrix<T> = DMatrix<Complex<T>>;

/// Double-precision horizontal position.
pub type Position = Vec2<f64>;
pub type ComplexVector = CVector<f64>;
pub type ComplexMatrix = CMatrix<f64>;
pub type Complex64 = Complex<f64>;

pub use metrics::{BeamPlan, MatrixPolar, SlotBeam};
pub use scenario::{ScenarioConfig, Trajectory};
