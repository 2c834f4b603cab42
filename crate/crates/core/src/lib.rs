//! Hamiltonian Monte Carlo on iid product targets, with the machinery needed to
//! study how the leapfrog step size should scale with dimension.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: targets, mass matrices, Hamiltonians and momentum refresh.
//! * [`integrator`]: the kick-drift-kick leapfrog map, whole legs, and
//!   structural checks (volume preservation, time reversibility).
//! * [`oracle`]: closed forms for the harmonic oscillator, used as ground truth.
//! * [`kernel`]: HMC, random-walk Metropolis and MALA transitions over product
//!   targets, plus a chain driver with collectors.
//! * [`moments`]: Monte-Carlo estimates of the energy-error moments.
//! * [`scaling`]: acceptance and displacement studies under `h = l d^{-1/4}`.
//! * [`tuning`]: the cost model, `a(l)`, the efficiency curve and its optimum.
//! * [`budget`]: fixed gradient-budget comparison of step sizes.

pub mod budget;
pub mod error;
pub mod integrator;
pub mod kernel;
pub mod model;
pub mod moments;
pub mod oracle;
pub mod rng;
pub mod scaling;
pub mod stats;
pub mod tuning;

pub use error::{Error, Result};
pub use integrator::{integrate_leg, leapfrog_step, LeapfrogParams, LegResult, StepRounding};
pub use kernel::{ChainState, KernelConfig, TransitionRecord};
pub use model::{BuiltinTarget, MassSpec, PhasePoint, ProductTarget, Target};
