//! Recovery of a state-dependent diffusion coefficient `a(u)` from
//! overspecified boundary traces.
//!
//! With the Kirchhoff transform `A(u) = ∫ a`, the identification problem
//! becomes the linear equation `T A = y`, `T: A ↦ A(h(·))`, which is solved
//! by Tikhonov regularization with penalty `‖A″‖² + ‖A‖²`.
//!
//! - [`param_space`]: piecewise-linear `a`, closed-form `A`, error norms
//! - [`forward_op`]: trace data, noise, the operator `T` and its weight
//! - [`hilbert_scale`]: discrete scale operator `L⁴` and fractional powers
//! - [`regularize`]: Tikhonov solver, parameter choice, naive baseline
//! - [`study`]: seeded noise-level sweeps, rate fits and CSV output
//! - [`verify`]: property checks across all modules

pub mod error;
pub mod forward_op;
pub mod hilbert_scale;
pub mod param_space;
pub mod regularize;
pub mod study;
pub mod verify;

pub use error::{Error, ErrorClass, Result};
pub use forward_op::{CurveParametrization, TraceData};
pub use hilbert_scale::DiscreteScaleOperator;
pub use param_space::{ParameterSpline, StateInterval, UniformGrid};
pub use regularize::{AprioriRule, Penalties, ReconstructionResult, TikhonovProblem};
pub use study::{AlphaRule, ConvergenceRecord, StudyConfig, StudyContext, StudyOutput};
