//! Path-space large deviations for lattice Markov chains with small jumps.
//!
//! A chain lives on `εZ^d ∩ Λ`; each step it moves by `εδ` with probability
//! `exp f_ε(kε, x, δ)`. The crate evaluates the local rate density (the
//! Legendre transform of the log-moment generating function), the action
//! functional on piecewise-linear paths, Monte Carlo and exact tube
//! probabilities, and numerical checks of the resulting large deviation
//! bounds.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod action;
pub mod error;
pub mod geometry;
pub mod io;
pub mod legendre;
pub mod model;
pub mod simulate;
pub mod verify;

pub use error::{Error, Result};
pub use legendre::{BoundaryFlag, LegendreOptions, LegendrePoint, LocalLaw, TiltedMeasure};
pub use model::{ChainSpec, CurieWeiss, Domain, DriftWalk, ExternalField, InitialLaw, JumpSet, Mode, ModelConfig, RateField, SymmetricWalk};
pub use action::{
    action, action_gradient, admissibility, ball_infimum, minimize_action, ActionOptions, ActionValue, Admissibility,
    BallInfimum, BallOptions, MinimizeOptions, Minimized, Path,
};
pub use simulate::{Estimator, TiltSchedule, Trajectory, TubeEstimate};
