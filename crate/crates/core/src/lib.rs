//! Simulation and analysis of continuously measured `n`-level quantum systems
//! stabilized by Lyapunov feedback.
//!
//! The stochastic Schrödinger equation is integrated with Euler-Maruyama and
//! per-step renormalization; the feedback rule is chosen from a
//! [`control::ControllerRegistry`] by name.

pub mod cli;
pub mod codec;
pub mod control;
pub mod ensemble;
pub mod definition;
pub mod error;
pub mod fixtures;
pub mod lyapunov;
pub mod model;
pub mod quantum;
pub mod sse;
pub mod structure;

pub use control::{ControlLaw, ControllerConfig, ControllerRegistry, FeedbackController};
pub use error::{QlyapError, Result};
pub use model::SystemModel;
pub use quantum::{EquivalenceClass, HermitianOperator, QuantumState, C64};
